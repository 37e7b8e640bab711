//! A Morse-potential water dataset with exact labels, split and written as extended XYZ.

use schnet::data::{generate_synthetic, split, write_extxyz, SplitSpec, SyntheticOracle};

fn main() -> schnet::Result<()> {
    let oracle = SyntheticOracle::water_like();
    let ds = generate_synthetic(&oracle, &SyntheticOracle::water_template(), 50, 0.1, 1)?;
    let (train, val, test) = split(&ds, &SplitSpec::random(30, 10, 1))?;
    println!(
        "{} frames: {} train, {} val, {} test",
        ds.len(),
        train.len(),
        val.len(),
        test.len()
    );

    let energies: Vec<f64> = ds.iter().map(|c| c.energy.unwrap()).collect();
    let lo = energies.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!("energies span {lo:.2} .. {hi:.2} kcal/mol");

    println!("first two frames:");
    write_extxyz(std::io::stdout().lock(), &ds.subset(&[0, 1]))
}
