//! Energies and forces from a (randomly initialized) model, and the
//! symmetries they obey by construction.

use schnet::data::SyntheticOracle;
use schnet::model::{ModelConfig, SchNet};
use schnet::verify::{apply, apply_all, translate, IsometrySampler};

fn main() -> schnet::Result<()> {
    let model = SchNet::new(ModelConfig::default(), 42)?;
    let water = SyntheticOracle::water_template();
    let (e, f) = model.predict_energy_forces(&water.z, &water.positions)?;
    println!("E = {e:.8} kcal/mol");
    for (z, fi) in water.z.iter().zip(&f) {
        println!("  Z={z}  F = [{:+.6}, {:+.6}, {:+.6}]", fi[0], fi[1], fi[2]);
    }
    let net: Vec<f64> = (0..3).map(|k| f.iter().map(|v| v[k]).sum()).collect();
    println!("net force [{:.1e}, {:.1e}, {:.1e}]", net[0], net[1], net[2]);

    let mut s = IsometrySampler::new(7);
    let q = s.rotation();
    let moved = translate(&apply_all(&q, &water.positions), s.translation(10.0));
    let (e2, f2) = model.predict_energy_forces(&water.z, &moved)?;
    let err = f
        .iter()
        .zip(&f2)
        .flat_map(|(a, b)| {
            let ra = apply(&q, *a);
            (0..3).map(move |k| (ra[k] - b[k]).abs())
        })
        .fold(0.0, f64::max);
    println!(
        "after a rotation and translation: |ΔE| = {:.1e}, max |QF − F'| = {err:.1e}",
        (e - e2).abs()
    );
    Ok(())
}
