//! Differentiating a gradient: the mechanism that lets a force loss train the weights.
//!
//! For `E(r) = Σ ssp(w·r_i)` the "force" is `−∂E/∂r`. Building that gradient
//! with `create_graph = true` leaves it in the graph, so a loss on it can be
//! differentiated once more with respect to `w`.

use schnet::autodiff::{kernels, Graph, Tensor};

fn main() -> schnet::Result<()> {
    let mut g = Graph::new();
    let r = g.leaf(Tensor::vector(vec![0.3, -1.2, 2.0]), true);
    let w = g.param(Tensor::scalar(0.7));

    let wr = g.broadcast(w, &[3])?;
    let wr = g.mul(wr, r)?;
    let e = g.ssp(wr)?;
    let energy = g.sum_all(e)?;

    let de_dr = g.backward(energy, &[r], true)?[r];
    let force = g.scale(de_dr, -1.0)?;
    println!("E = {:.6}", g.value(energy).item().unwrap());
    println!("F = {:?}", g.value(force).data());

    // force loss against zero target forces, then its gradient w.r.t. the weight
    let sq = g.square(force)?;
    let loss = g.sum_all(sq)?;
    let dl_dw = g.backward(loss, &[w], false)?[w];
    let analytic = g.value(dl_dw).item().unwrap();

    // closed form: F_i = −w σ(w r_i), so L = Σ w² σ(w r_i)²
    let loss_at = |w: f64| -> f64 {
        [0.3, -1.2, 2.0]
            .iter()
            .map(|&x: &f64| (w * kernels::sigmoid(w * x)).powi(2))
            .sum()
    };
    let h = 1e-6;
    let numeric = (loss_at(0.7 + h) - loss_at(0.7 - h)) / (2.0 * h);
    println!("dL/dw analytic {analytic:.10}, finite difference {numeric:.10}");
    Ok(())
}
