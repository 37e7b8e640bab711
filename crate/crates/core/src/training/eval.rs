use crate::data::{Dataset, MiniBatch};
use crate::error::{Error, Result};
use crate::model::SchNet;

/// Mean absolute errors: energies in kcal/mol, forces in kcal/mol/Å over every component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub energy_mae: f64,
    pub force_mae: Option<f64>,
    pub n_conformations: usize,
}

const EVAL_BATCH: usize = 64;

fn check(ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::InsufficientData("evaluation set is empty".into()));
    }
    ds.require_labels(false)
}

/// Errors of `model` on `ds`; the force MAE is reported only when every
/// conformation carries forces.
pub fn evaluate(model: &SchNet, ds: &Dataset) -> Result<Metrics> {
    check(ds)?;
    let with_forces = ds.has_forces();
    let (mut e_abs, mut f_abs, mut f_count) = (0.0, 0.0, 0usize);
    for chunk in ds.conformations.chunks(EVAL_BATCH) {
        let batch = MiniBatch::from_conformations(chunk)?;
        let p = model.predict_batch(&batch, with_forces)?;
        for (c, e) in chunk.iter().zip(&p.energies) {
            e_abs += (c.energy.expect("checked") - e).abs();
        }
        if let (Some(pred), Some(truth)) = (&p.forces, &batch.forces) {
            for (a, b) in pred.iter().zip(truth) {
                f_abs += (0..3).map(|k| (a[k] - b[k]).abs()).sum::<f64>();
                f_count += 3;
            }
        }
    }
    Ok(Metrics {
        energy_mae: e_abs / ds.len() as f64,
        force_mae: with_forces.then(|| f_abs / f_count as f64),
        n_conformations: ds.len(),
    })
}

/// Errors of the constant predictor `Ê = mean`, whose forces are zero.
pub fn evaluate_mean_predictor(mean: f64, ds: &Dataset) -> Result<Metrics> {
    check(ds)?;
    let energy_mae = ds
        .iter()
        .map(|c| (c.energy.expect("checked") - mean).abs())
        .sum::<f64>()
        / ds.len() as f64;
    let force_mae = ds.has_forces().then(|| {
        let (sum, n) = ds
            .iter()
            .flat_map(|c| c.forces.as_deref().unwrap_or_default())
            .fold((0.0, 0usize), |(s, n), f| {
                (s + f.iter().map(|x| x.abs()).sum::<f64>(), n + 3)
            });
        sum / n as f64
    });
    Ok(Metrics {
        energy_mae,
        force_mae,
        n_conformations: ds.len(),
    })
}
