//! Sample the learned radial filters W(d) of every block and channel as CSV.

use schnet::model::{export_filters, filter_grid, ModelConfig, SchNet};

fn main() -> schnet::Result<()> {
    let model = SchNet::new(ModelConfig::default(), 3)?;
    let mut csv = Vec::new();
    export_filters(&model, &filter_grid(), &mut csv)?;
    let text = String::from_utf8(csv).expect("ascii");
    println!("{} rows; the first filter:", text.lines().count() - 1);
    for line in text.lines().take(12) {
        println!("{line}");
    }
    Ok(())
}
