//! The verification harness on a fresh model and on a deliberately broken one.

use schnet::model::{ModelConfig, SchNet};
use schnet::verify::{verify_model, AbsoluteCoordinateModel, SuiteOptions};

fn main() -> schnet::Result<()> {
    let opts = SuiteOptions {
        n_molecules: 30,
        n_trials: 30,
        n_force_checks: 5,
        ..SuiteOptions::default()
    };
    let model = SchNet::new(ModelConfig::default(), 1)?;
    let report = verify_model(&model, &opts)?;
    println!("fresh model: {}", if report.passed() { "PASS" } else { "FAIL" });
    report.summary().iter().for_each(|l| println!("  {l}"));

    // a term in absolute coordinates breaks rotation and translation symmetry
    let broken = AbsoluteCoordinateModel {
        inner: model,
        amplitude: 0.1,
        wave: [0.5, 0.2, -0.4],
    };
    let report = verify_model(&broken, &opts)?;
    println!("broken model: {}", if report.passed() { "PASS" } else { "FAIL" });
    report.summary().iter().for_each(|l| println!("  {l}"));
    Ok(())
}
