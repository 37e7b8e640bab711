use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Named parameter arrays in a fixed order determined by the [`ModelConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

/// Shapes of every parameter, in storage order.
pub fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let f = config.n_features;
    let k = config.rbf_count;
    let h = config.head_width();
    let mut out = vec![("embedding".to_string(), vec![config.max_atomic_number as usize, f])];
    let mut dense = |name: String, d_in: usize, d_out: usize| {
        out.push((format!("{name}.weight"), vec![d_in, d_out]));
        out.push((format!("{name}.bias"), vec![d_out]));
    };
    for l in 0..config.n_interactions {
        dense(format!("interaction.{l}.in2f"), f, f);
        dense(format!("interaction.{l}.filter1"), k, f);
        dense(format!("interaction.{l}.filter2"), f, f);
        dense(format!("interaction.{l}.f2out"), f, f);
        dense(format!("interaction.{l}.dense"), f, f);
    }
    dense("output.dense1".to_string(), f, h);
    dense("output.dense2".to_string(), h, 1);
    out
}

impl ParamStore {
    /// Dense weights uniform in ±1/√fan_in, zero biases, embedding rows uniform in ±1/√F.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inv_sqrt_f = 1.0 / (config.n_features as f64).sqrt();
        let entries = layout(config)
            .into_iter()
            .map(|(name, shape)| {
                let n: usize = shape.iter().product();
                let data = if name.ends_with(".bias") {
                    vec![0.0; n]
                } else {
                    let bound = if name == "embedding" {
                        inv_sqrt_f
                    } else {
                        1.0 / (shape[0] as f64).sqrt()
                    };
                    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
                };
                (name, Tensor::new(shape, data).expect("layout shape"))
            })
            .collect();
        ParamStore { entries }
    }

    /// Builds a store from named arrays, checking them against the layout for `config`.
    pub fn from_entries(config: &ModelConfig, entries: Vec<(String, Tensor)>) -> Result<Self> {
        let expected = layout(config);
        if expected.len() != entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter arrays, found {}",
                expected.len(),
                entries.len()
            )));
        }
        for ((name, shape), (got_name, t)) in expected.iter().zip(&entries) {
            if name != got_name || shape.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{got_name}` {:?} does not match `{name}` {shape:?}",
                    t.shape()
                )));
            }
        }
        Ok(ParamStore { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn n_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    /// Registers every array as a graph leaf, trainable or constant.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ModelVars {
        let all: Vec<Var> = self.entries.iter().map(|(_, t)| g.leaf(t.clone(), trainable)).collect();
        ModelVars::from_ordered(all)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Dense {
    pub weight: Var,
    pub bias: Var,
}

/// Parameters of one interaction block. Blocks never share weights.
#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub in2f: Dense,
    pub filter1: Dense,
    pub filter2: Dense,
    pub f2out: Dense,
    pub dense: Dense,
}

/// Graph handles for every parameter, in [`layout`] order (`all`) and by role.
#[derive(Clone, Debug)]
pub struct ModelVars {
    pub embedding: Var,
    pub blocks: Vec<BlockVars>,
    pub head1: Dense,
    pub head2: Dense,
    pub all: Vec<Var>,
}

impl ModelVars {
    fn from_ordered(all: Vec<Var>) -> Self {
        let n_blocks = (all.len() - 5) / 10;
        let mut it = all.iter().copied();
        let embedding = it.next().expect("embedding");
        let mut dense = || Dense {
            weight: it.next().expect("weight"),
            bias: it.next().expect("bias"),
        };
        let blocks = (0..n_blocks)
            .map(|_| BlockVars {
                in2f: dense(),
                filter1: dense(),
                filter2: dense(),
                f2out: dense(),
                dense: dense(),
            })
            .collect();
        let head1 = dense();
        let head2 = dense();
        ModelVars {
            embedding,
            blocks,
            head1,
            head2,
            all,
        }
    }
}
