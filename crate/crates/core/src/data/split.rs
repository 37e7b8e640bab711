use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Conformations are shuffled individually; the test set is the remainder.
    Random,
    /// Whole molecules are assigned to one partition each. A fraction of the
    /// molecule ids feeds training and validation, the rest is held out for test.
    MoleculeWise,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(SplitMode::Random),
            "molecule_wise" | "molecule-wise" => Ok(SplitMode::MoleculeWise),
            _ => Err(Error::Config(format!("unknown split mode `{s}`"))),
        }
    }
}

impl std::fmt::Display for SplitMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitMode::Random => "random",
            SplitMode::MoleculeWise => "molecule_wise",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    /// Share of molecule ids used for training and validation in
    /// [`SplitMode::MoleculeWise`]; ignored otherwise.
    pub molecule_fraction: f64,
}

impl SplitSpec {
    pub fn random(n_train: usize, n_val: usize, seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::Random,
            n_train,
            n_val,
            seed,
            molecule_fraction: 0.8,
        }
    }

    pub fn molecule_wise(n_train: usize, n_val: usize, molecule_fraction: f64, seed: u64) -> Self {
        SplitSpec {
            mode: SplitMode::MoleculeWise,
            n_train,
            n_val,
            seed,
            molecule_fraction,
        }
    }
}

/// Partitions `ds` into `(train, val, test)`, deterministically for a given seed.
pub fn split(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    match spec.mode {
        SplitMode::Random => {
            if spec.n_train + spec.n_val > ds.len() {
                return Err(Error::InsufficientData(format!(
                    "{} train + {} validation requested from {} conformations",
                    spec.n_train,
                    spec.n_val,
                    ds.len()
                )));
            }
            let mut order: Vec<usize> = (0..ds.len()).collect();
            order.shuffle(&mut rng);
            let (train, rest) = order.split_at(spec.n_train);
            let (val, test) = rest.split_at(spec.n_val);
            Ok((ds.subset(train), ds.subset(val), ds.subset(test)))
        }
        SplitMode::MoleculeWise => molecule_wise(ds, spec, &mut rng),
    }
}

fn molecule_wise(ds: &Dataset, spec: &SplitSpec, rng: &mut ChaCha8Rng) -> Result<(Dataset, Dataset, Dataset)> {
    if !(spec.molecule_fraction > 0.0 && spec.molecule_fraction <= 1.0) {
        return Err(Error::Config(format!(
            "molecule_fraction must lie in (0, 1], got {}",
            spec.molecule_fraction
        )));
    }
    let mut by_id: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in ds.iter().enumerate() {
        by_id.entry(c.molecule_id.as_str()).or_default().push(i);
    }
    let mut ids: Vec<&str> = by_id.keys().copied().collect();
    ids.shuffle(rng);
    let n_fit_ids = ((spec.molecule_fraction * ids.len() as f64).round() as usize).clamp(1, ids.len());
    let (fit_ids, test_ids) = ids.split_at(n_fit_ids);

    // Validation ids are taken from the back until they cover n_val conformations.
    let mut val_ids = Vec::new();
    let mut train_ids: Vec<&str> = fit_ids.to_vec();
    let mut val_count = 0;
    while val_count < spec.n_val {
        let Some(id) = train_ids.pop() else { break };
        val_count += by_id[id].len();
        val_ids.push(id);
    }
    let pool = |ids: &[&str], rng: &mut ChaCha8Rng| {
        let mut v: Vec<usize> = ids.iter().flat_map(|id| by_id[id].iter().copied()).collect();
        v.shuffle(rng);
        v
    };
    let train_pool = pool(&train_ids, rng);
    let val_pool = pool(&val_ids, rng);
    if train_pool.len() < spec.n_train || val_pool.len() < spec.n_val {
        return Err(Error::InsufficientData(format!(
            "molecule-wise split: {} train / {} validation conformations available, {} / {} requested",
            train_pool.len(),
            val_pool.len(),
            spec.n_train,
            spec.n_val
        )));
    }
    let mut test: Vec<usize> = test_ids.iter().flat_map(|id| by_id[id].iter().copied()).collect();
    test.sort_unstable();
    Ok((
        ds.subset(&train_pool[..spec.n_train]),
        ds.subset(&val_pool[..spec.n_val]),
        ds.subset(&test),
    ))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::data::Conformation;

    fn dataset(ids: usize, per_id: usize) -> Dataset {
        (0..ids * per_id)
            .map(|k| {
                Conformation::new(vec![1], vec![[k as f64, 0.0, 0.0]])
                    .unwrap()
                    .with_energy(k as f64)
                    .with_molecule_id(format!("mol{}", k / per_id))
            })
            .collect()
    }

    fn ids(ds: &Dataset) -> BTreeSet<String> {
        ds.iter().map(|c| c.molecule_id.clone()).collect()
    }

    #[test]
    fn random_split_sizes() {
        let (tr, va, te) = split(&dataset(10, 1), &SplitSpec::random(8, 1, 0)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
        let mut all: Vec<f64> = tr.iter().chain(&va).chain(&te).map(|c| c.energy.unwrap()).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..10).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn same_seed_same_partition() {
        let ds = dataset(5, 10);
        for spec in [SplitSpec::random(20, 5, 42), SplitSpec::molecule_wise(20, 5, 0.8, 42)] {
            assert_eq!(split(&ds, &spec).unwrap(), split(&ds, &spec).unwrap());
        }
        let a = split(&ds, &SplitSpec::random(20, 5, 1)).unwrap();
        let b = split(&ds, &SplitSpec::random(20, 5, 2)).unwrap();
        assert_ne!(a.0, b.0);
    }

    #[test]
    fn molecule_wise_holds_out_whole_molecules() {
        let ds = dataset(5, 10);
        let (tr, va, te) = split(&ds, &SplitSpec::molecule_wise(20, 5, 0.8, 3)).unwrap();
        assert_eq!(ids(&te).len(), 1);
        assert_eq!(te.len(), 10);
        assert_eq!(ids(&tr).len() + ids(&va).len(), 4);
        assert_eq!((tr.len(), va.len()), (20, 5));
        assert!(ids(&tr).is_disjoint(&ids(&va)));
        assert!(ids(&tr).is_disjoint(&ids(&te)));
        assert!(ids(&va).is_disjoint(&ids(&te)));
    }

    #[test]
    fn insufficient_data() {
        let ds = dataset(2, 3);
        assert!(matches!(
            split(&ds, &SplitSpec::random(5, 2, 0)),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            split(&ds, &SplitSpec::molecule_wise(4, 1, 1.0, 0)),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest::proptest! {
        #[test]
        fn molecule_wise_partitions_never_share_ids(seed in 0u64..500, n_ids in 2usize..8, per in 1usize..5) {
            let ds = dataset(n_ids, per);
            let spec = SplitSpec::molecule_wise(1, 1, 0.75, seed);
            if let Ok((tr, va, te)) = split(&ds, &spec) {
                proptest::prop_assert!(ids(&tr).is_disjoint(&ids(&va)));
                proptest::prop_assert!(ids(&tr).is_disjoint(&ids(&te)));
                proptest::prop_assert!(ids(&va).is_disjoint(&ids(&te)));
            }
        }
    }
}
