//! Train on energies and forces of Morse water, then compare with energy-only
//! training under the same step budget.
//!
//! `cargo run --release --example train_morse -- 3000`

use schnet::data::{generate_synthetic, split, SplitSpec, SyntheticOracle};
use schnet::model::{ModelConfig, SchNet};
use schnet::training::{evaluate, evaluate_mean_predictor, train, LossConfig, TrainConfig};

fn main() -> schnet::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let steps: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);

    let ds = generate_synthetic(
        &SyntheticOracle::water_like(),
        &SyntheticOracle::water_template(),
        400,
        0.1,
        3,
    )?;
    let (tr, va, te) = split(&ds, &SplitSpec::random(300, 50, 3))?;
    let config = ModelConfig {
        n_features: 32,
        n_interactions: 2,
        rbf_count: 60,
        ..ModelConfig::default()
    };

    let mean = evaluate_mean_predictor(schnet::data::Normalizer::fit(&tr)?.mean, &te)?;
    println!(
        "mean predictor        energy MAE {:8.4}  force MAE {:8.4}",
        mean.energy_mae,
        mean.force_mae.unwrap()
    );
    for (label, train_forces) in [("energy + forces", true), ("energy only", false)] {
        let tc = TrainConfig {
            loss: LossConfig {
                rho: 0.01,
                train_forces,
            },
            batch_size: 16,
            max_steps: steps,
            eval_interval: 250,
            ..TrainConfig::default()
        };
        let out = train(SchNet::new(config.clone(), 0)?, &tr, &va, tc)?;
        let m = evaluate(&out.model, &te)?;
        println!(
            "{label:<21} energy MAE {:8.4}  force MAE {:8.4}",
            m.energy_mae,
            m.force_mae.unwrap()
        );
    }
    Ok(())
}
