//! Velocity-Verlet dynamics on the Morse oracle: the total-energy error shrinks
//! with the square of the timestep and does not grow over time.

use schnet::cli::initial_velocities;
use schnet::data::SyntheticOracle;
use schnet::verify::{velocity_verlet, MdState};

fn main() -> schnet::Result<()> {
    let oracle = SyntheticOracle::water_like();
    let water = SyntheticOracle::water_template();
    let v0 = initial_velocities(3, 1.0, 0)?;
    println!("{:>8} {:>8} {:>14} {:>12}", "dt", "steps", "drift/KE0", "max step Å");
    for dt in [8e-3, 4e-3, 2e-3, 1e-3] {
        let steps = (20.0 / dt) as u64;
        let mut s = MdState::new(&oracle, water.z.clone(), water.positions.clone(), v0.clone(), dt)?;
        velocity_verlet(&oracle, &mut s, steps)?;
        println!(
            "{dt:>8} {steps:>8} {:>14.3e} {:>12.2e}",
            s.energy_drift() / s.initial_kinetic(),
            s.max_displacement
        );
    }
    Ok(())
}
