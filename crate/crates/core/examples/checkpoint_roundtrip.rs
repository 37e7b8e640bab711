//! Save a model with its run configuration and load it back bit for bit.

use schnet::config::RunConfig;
use schnet::data::SyntheticOracle;
use schnet::model::{load_model, save_model, SchNet};

fn main() -> schnet::Result<()> {
    let cfg = RunConfig::parse("n_features = 32\nrho = 0.01\nseed = 9\n")?;
    let model = SchNet::new(cfg.model.clone(), cfg.seed)?;

    let path = std::env::temp_dir().join("schnet-example.ckpt");
    save_model(&path, &model, &cfg.to_text())?;
    let (loaded, text) = load_model(&path)?;
    let restored = RunConfig::parse(&text)?;

    let w = SyntheticOracle::water_template();
    let (a, b) = (
        model.predict_energy(&w.z, &w.positions)?,
        loaded.predict_energy(&w.z, &w.positions)?,
    );
    println!(
        "{} bytes, energies {a} and {b}, identical: {}",
        std::fs::metadata(&path)?.len(),
        a == b
    );
    println!("restored config equal: {}", restored == cfg);
    std::fs::remove_file(path)?;
    Ok(())
}
