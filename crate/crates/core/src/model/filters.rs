use std::io::Write;

use super::schnet::SchNet;
use crate::error::Result;

/// Distance grid of the filter export: 0 to 10 Å in steps of 0.05 Å.
pub fn filter_grid() -> Vec<f64> {
    (0..=200).map(|k| k as f64 * 0.05).collect()
}

/// Writes `W(d)` for every interaction block and feature channel as CSV with
/// columns `block,channel,d,value`, block-major then channel-major.
pub fn export_filters<W: Write>(model: &SchNet, distances: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "block,channel,d,value")?;
    for block in 0..model.config().n_interactions {
        let w = model.filter_values(block, distances)?;
        for channel in 0..model.config().n_features {
            for (q, d) in distances.iter().enumerate() {
                writeln!(out, "{block},{channel},{d:.2},{}", w.get(q, channel))?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
