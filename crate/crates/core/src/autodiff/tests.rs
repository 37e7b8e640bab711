use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::kernels::sigmoid;
use super::*;
use crate::error::Error;

type Builder = fn(&mut Graph, &[Var]) -> crate::Result<Var>;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Scalar `Σ w ∘ out²` with fixed pseudo-random weights.
fn scalarize(g: &mut Graph, out: Var) -> Var {
    let shape = g.shape(out).to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w = g.constant(random_tensor(&mut rng, &shape, -1.0, 1.0));
    let sq = g.square(out).unwrap();
    let prod = g.mul(sq, w).unwrap();
    g.sum_all(prod).unwrap()
}

fn objective(build: Builder, inputs: &[Tensor]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars).unwrap();
    let f = scalarize(&mut g, out);
    g.value(f).item().unwrap()
}

fn first_order(build: Builder, inputs: &[Tensor]) -> Vec<Tensor> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars).unwrap();
    let f = scalarize(&mut g, out);
    let grads = g.backward(f, &vars, false).unwrap();
    vars.iter().map(|&v| g.value(grads[v]).clone()).collect()
}

fn directions(inputs: &[Tensor]) -> Vec<Tensor> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    inputs
        .iter()
        .map(|t| random_tensor(&mut rng, t.shape(), -1.0, 1.0))
        .collect()
}

fn dot(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| p * q).sum::<f64>())
        .sum()
}

/// Hessian-vector product `∇(u · ∇f)` through double backward.
fn second_order(build: Builder, inputs: &[Tensor], u: &[Tensor]) -> Vec<Tensor> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars).unwrap();
    let f = scalarize(&mut g, out);
    let grads = g.backward(f, &vars, true).unwrap();
    let mut terms = Vec::new();
    for (&v, dir) in vars.iter().zip(u) {
        let gv = grads[v];
        assert!(g.requires_grad(gv));
        let c = g.constant(dir.clone());
        let p = g.mul(gv, c).unwrap();
        terms.push(g.sum_all(p).unwrap());
    }
    let mut h = terms[0];
    for &t in &terms[1..] {
        h = g.add(h, t).unwrap();
    }
    let hv = g.backward(h, &vars, false).unwrap();
    vars.iter().map(|&v| g.value(hv[v]).clone()).collect()
}

fn perturbed(inputs: &[Tensor], k: usize, e: usize, delta: f64) -> Vec<Tensor> {
    let mut out = inputs.to_vec();
    out[k].data_mut()[e] += delta;
    out
}

fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

fn check_first_order(name: &str, build: Builder, inputs: &[Tensor], tol: f64) {
    let analytic = first_order(build, inputs);
    for (k, t) in inputs.iter().enumerate() {
        for e in 0..t.len() {
            let h = 1e-5 * t.data()[e].abs().max(1.0);
            let fp = objective(build, &perturbed(inputs, k, e, h));
            let fm = objective(build, &perturbed(inputs, k, e, -h));
            let fd = (fp - fm) / (2.0 * h);
            let err = rel_err(analytic[k].data()[e], fd, 1e-3);
            assert!(
                err < tol,
                "{name}: input {k}[{e}] analytic {} fd {fd} rel {err:e}",
                analytic[k].data()[e]
            );
        }
    }
}

fn check_second_order(name: &str, build: Builder, inputs: &[Tensor]) {
    let u = directions(inputs);
    let hv = second_order(build, inputs, &u);
    for (k, t) in inputs.iter().enumerate() {
        for e in 0..t.len() {
            let h = 1e-4 * t.data()[e].abs().max(1.0);
            let gp = dot(&first_order(build, &perturbed(inputs, k, e, h)), &u);
            let gm = dot(&first_order(build, &perturbed(inputs, k, e, -h)), &u);
            let fd = (gp - gm) / (2.0 * h);
            let err = rel_err(hv[k].data()[e], fd, 1e-3);
            assert!(
                err < 1e-5,
                "{name}: input {k}[{e}] double-backward {} fd {fd} rel {err:e}",
                hv[k].data()[e]
            );
        }
    }
}

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Builder, Vec<Tensor>)> {
    let m23 = |rng: &mut ChaCha8Rng| random_tensor(rng, &[2, 3], -1.0, 1.0);
    let pos23 = |rng: &mut ChaCha8Rng| random_tensor(rng, &[2, 3], 0.5, 2.0);
    vec![
        ("add", |g, v| g.add(v[0], v[1]), vec![m23(rng), m23(rng)]),
        ("sub", |g, v| g.sub(v[0], v[1]), vec![m23(rng), m23(rng)]),
        ("mul", |g, v| g.mul(v[0], v[1]), vec![m23(rng), m23(rng)]),
        ("div", |g, v| g.div(v[0], v[1]), vec![m23(rng), pos23(rng)]),
        ("neg", |g, v| g.neg(v[0]), vec![m23(rng)]),
        ("scale", |g, v| g.scale(v[0], -1.7), vec![m23(rng)]),
        ("shift", |g, v| g.shift(v[0], 0.3), vec![m23(rng)]),
        ("exp", |g, v| g.exp(v[0]), vec![m23(rng)]),
        ("square", |g, v| g.square(v[0]), vec![m23(rng)]),
        ("safe_recip", |g, v| g.safe_recip(v[0]), vec![pos23(rng)]),
        (
            "sigmoid",
            |g, v| g.sigmoid(v[0]),
            vec![random_tensor(rng, &[2, 3], -3.0, 3.0)],
        ),
        ("ssp", |g, v| g.ssp(v[0]), vec![random_tensor(rng, &[2, 3], -3.0, 3.0)]),
        ("sum_all", |g, v| g.sum_all(v[0]), vec![m23(rng)]),
        (
            "broadcast",
            |g, v| g.broadcast(v[0], &[2, 2]),
            vec![Tensor::scalar(0.7)],
        ),
        ("row_sum", |g, v| g.row_sum(v[0]), vec![m23(rng)]),
        (
            "broadcast_cols",
            |g, v| g.broadcast_cols(v[0], 3),
            vec![random_tensor(rng, &[2], -1.0, 1.0)],
        ),
        ("col_sum", |g, v| g.col_sum(v[0]), vec![m23(rng)]),
        (
            "broadcast_rows",
            |g, v| g.broadcast_rows(v[0], 4),
            vec![random_tensor(rng, &[3], -1.0, 1.0)],
        ),
        (
            "matmul",
            |g, v| g.matmul(v[0], v[1]),
            vec![m23(rng), random_tensor(rng, &[3, 2], -1.0, 1.0)],
        ),
        ("transpose", |g, v| g.transpose(v[0]), vec![m23(rng)]),
        (
            "gather_rows",
            |g, v| g.gather_rows(v[0], vec![1, 0, 1, 1]),
            vec![m23(rng)],
        ),
        (
            "segment_sum",
            |g, v| g.segment_sum(v[0], vec![2, 0, 2], 3),
            vec![random_tensor(rng, &[3, 2], -1.0, 1.0)],
        ),
        (
            "segment_sum_1d",
            |g, v| g.segment_sum(v[0], vec![1, 1, 0], 2),
            vec![random_tensor(rng, &[3], -1.0, 1.0)],
        ),
        (
            "concat_rows",
            |g, v| g.concat_rows(&[v[0], v[1]]),
            vec![m23(rng), random_tensor(rng, &[1, 3], -1.0, 1.0)],
        ),
        ("l2_norm_rows", |g, v| g.l2_norm_rows(v[0]), vec![pos23(rng)]),
        (
            "linear",
            |g, v| g.linear(v[0], v[1], v[2]),
            vec![
                m23(rng),
                random_tensor(rng, &[3, 2], -1.0, 1.0),
                random_tensor(rng, &[2], -1.0, 1.0),
            ],
        ),
        (
            "mul_cols",
            |g, v| g.mul_cols(v[0], v[1]),
            vec![m23(rng), random_tensor(rng, &[2], -1.0, 1.0)],
        ),
    ]
}

#[test]
fn every_primitive_matches_first_order_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..3 {
        for (name, build, inputs) in primitive_cases(&mut rng) {
            check_first_order(&format!("{name}#{trial}"), build, &inputs, 1e-6);
        }
    }
}

#[test]
fn every_primitive_is_closed_under_double_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..3 {
        for (name, build, inputs) in primitive_cases(&mut rng) {
            check_second_order(&format!("{name}#{trial}"), build, &inputs);
        }
    }
}

fn composite(g: &mut Graph, v: &[Var]) -> crate::Result<Var> {
    // Shaped like one filter-network layer followed by a pair reduction.
    let h = g.linear(v[0], v[1], v[2])?;
    let h = g.ssp(h)?;
    let n = g.l2_norm_rows(h)?;
    let e = g.scale(n, -0.5)?;
    let e = g.exp(e)?;
    let x = g.gather_rows(v[0], vec![2, 0, 1])?;
    let x = g.mul_cols(x, e)?;
    g.segment_sum(x, vec![0, 1, 0], 2)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn composite_expression_matches_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs = vec![
            random_tensor(&mut rng, &[3, 2], -1.0, 1.0),
            random_tensor(&mut rng, &[2, 4], -1.0, 1.0),
            random_tensor(&mut rng, &[4], -1.0, 1.0),
        ];
        check_first_order("composite", composite, &inputs, 1e-6);
    }
}

#[test]
fn composite_expression_double_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let inputs = vec![
            random_tensor(&mut rng, &[3, 2], -1.0, 1.0),
            random_tensor(&mut rng, &[2, 4], -1.0, 1.0),
            random_tensor(&mut rng, &[4], -1.0, 1.0),
        ];
        check_second_order("composite", composite, &inputs);
    }
}

#[test]
fn linear_examples() {
    let cases = [
        ([1.0, 2.0], [1.0, 0.0, 0.0, 1.0], [0.0, 0.0], [1.0, 2.0]),
        ([1.0, 2.0], [0.0; 4], [3.0, 4.0], [3.0, 4.0]),
        ([1.0, 1.0], [2.0, 3.0, 4.0, 5.0], [1.0, 1.0], [7.0, 9.0]),
    ];
    for (x, w, b, expected) in cases {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_rows(&[x]));
        let w = g.constant(Tensor::matrix(2, 2, w.to_vec()).unwrap());
        let b = g.constant(Tensor::vector(b.to_vec()));
        let y = g.linear(x, w, b).unwrap();
        assert_eq!(g.shape(y), &[1, 2]);
        assert_eq!(g.value(y).data(), &expected);
    }
}

#[test]
fn linear_shape_mismatch_reports_both_shapes() {
    let mut g = Graph::new();
    let x = g.constant(Tensor::zeros(&[1, 3]));
    let w = g.constant(Tensor::zeros(&[2, 2]));
    let b = g.constant(Tensor::zeros(&[2]));
    match g.linear(x, w, b) {
        Err(Error::Shape { op, lhs, rhs }) => {
            assert_eq!(op, "linear");
            assert_eq!(lhs, vec![1, 3]);
            assert_eq!(rhs, vec![2, 2, 2]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
    let a = g.constant(Tensor::zeros(&[2]));
    let err = g.add(x, a).unwrap_err().to_string();
    assert!(err.contains("[1, 3]") && err.contains("[2]"), "{err}");
}

#[test]
fn ssp_values_and_derivative() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![0.0, 1.0, 100.0]));
    let y = g.ssp(x).unwrap();
    let v = g.value(y).data().to_vec();
    assert_eq!(v[0], 0.0);
    assert!((v[1] - 0.620115).abs() < 1e-6);
    assert!((v[2] - (100.0 - std::f64::consts::LN_2)).abs() < 1e-12);

    let s = g.sum_all(y).unwrap();
    let grads = g.backward(s, &[x], false).unwrap();
    let d = g.value(grads[x]).data().to_vec();
    assert_eq!(d[0], 0.5);
    for (&xi, &di) in [0.0, 1.0, 100.0].iter().zip(&d) {
        assert!((di - sigmoid(xi)).abs() < 1e-12);
    }
}

#[test]
fn elementwise_examples() {
    let mut g = Graph::new();
    let v = g.constant(Tensor::vector(vec![1.0, 2.0, 3.0]));
    let s = g.segment_sum(v, vec![0, 0, 1], 2).unwrap();
    assert_eq!(g.value(s).data(), &[3.0, 3.0]);

    let m = g.constant(Tensor::from_rows(&[[3.0, 4.0]]));
    let n = g.l2_norm_rows(m).unwrap();
    assert_eq!(g.value(n).data(), &[5.0]);

    let z = g.constant(Tensor::scalar(0.0));
    let e = g.exp(z).unwrap();
    assert_eq!(g.value(e).item(), Some(1.0));

    let c = g.concat_rows(&[m, m]).unwrap();
    assert_eq!(g.shape(c), &[2, 2]);

    assert!(matches!(
        g.segment_sum(v, vec![0, 3, 1], 2),
        Err(Error::IndexOutOfRange {
            op: "segment_sum",
            index: 3,
            len: 2
        })
    ));
    assert!(matches!(
        g.gather_rows(m, vec![1]),
        Err(Error::IndexOutOfRange { op: "gather_rows", .. })
    ));
}

#[test]
fn power_rule_once_and_twice() {
    let mut g = Graph::new();
    let x = g.param(Tensor::scalar(3.0));
    let y = g.square(x).unwrap();
    let first = g.backward(y, &[x], true).unwrap();
    assert_eq!(g.value(first[x]).item(), Some(6.0));
    let second = g.backward(first[x], &[x], false).unwrap();
    assert_eq!(g.value(second[x]).item(), Some(2.0));
}

#[test]
fn without_create_graph_gradients_are_constants() {
    let mut g = Graph::new();
    let x = g.param(Tensor::scalar(3.0));
    let y = g.square(x).unwrap();
    let first = g.backward(y, &[x], false).unwrap();
    assert!(!g.requires_grad(first[x]));
    // Graph-building is re-enabled afterwards.
    let z = g.exp(x).unwrap();
    assert!(g.requires_grad(z));
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(g.backward(x, &[x], false), Err(Error::NonScalarLoss(s)) if s == vec![2]));
}

#[test]
fn unreachable_and_frozen_variables_get_flagged_zero_gradients() {
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![1.0, 2.0]));
    let unused = g.param(Tensor::zeros(&[2, 2]));
    let frozen = g.constant(Tensor::vector(vec![1.0, 1.0]));
    let p = g.mul(x, frozen).unwrap();
    let loss = g.sum_all(p).unwrap();
    let grads = g.backward(loss, &[x, unused, frozen], false).unwrap();
    assert!(grads.is_reachable(x));
    assert_eq!(grads.unreachable(), &[unused, frozen]);
    assert_eq!(g.value(grads[unused]), &Tensor::zeros(&[2, 2]));
    assert_eq!(g.value(grads[frozen]), &Tensor::zeros(&[2]));
}

#[test]
fn backward_is_deterministic_and_append_only() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let inputs = [
        random_tensor(&mut rng, &[3, 2], -1.0, 1.0),
        random_tensor(&mut rng, &[2, 4], -1.0, 1.0),
        random_tensor(&mut rng, &[4], -1.0, 1.0),
    ];
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = composite(&mut g, &vars).unwrap();
    let loss = scalarize(&mut g, out);
    let n_forward = g.len();
    let before: Vec<Tensor> = (0..n_forward).map(|i| g.nodes[i].value.clone()).collect();
    let ops_before: Vec<&str> = (0..n_forward).map(|i| g.nodes[i].op.name()).collect();

    let a = g.backward(loss, &vars, true).unwrap();
    let b = g.backward(loss, &vars, true).unwrap();
    for &v in &vars {
        let (ga, gb) = (g.value(a[v]).data(), g.value(b[v]).data());
        assert!(ga.iter().zip(gb).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert!(g.len() > n_forward);
    for i in 0..n_forward {
        assert_eq!(g.nodes[i].op.name(), ops_before[i]);
        let stored = &g.nodes[i].value;
        assert_eq!(stored, &before[i]);
        let recomputed = g.recompute(g.var(i)).unwrap();
        assert!(stored
            .data()
            .iter()
            .zip(recomputed.data())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    // Topological order holds for the appended nodes too.
    for (i, node) in g.nodes.iter().enumerate() {
        assert!(node.op.inputs().iter().all(|&j| j < i));
    }
}

#[test]
fn reset_invalidates_old_handles() {
    let mut g = Graph::new();
    let x = g.param(Tensor::scalar(1.0));
    g.reset();
    assert!(g.is_empty());
    assert!(matches!(g.exp(x), Err(Error::StaleVariable)));
    let y = g.param(Tensor::scalar(2.0));
    assert_eq!(g.value(y).item(), Some(2.0));
}

#[test]
fn shared_index_arrays_are_accepted() {
    let idx: Arc<[usize]> = vec![0, 0].into();
    let mut g = Graph::new();
    let x = g.param(Tensor::vector(vec![2.0]));
    let y = g.gather_rows(x, idx.clone()).unwrap();
    let s = g.segment_sum(y, idx, 1).unwrap();
    assert_eq!(g.value(s).data(), &[4.0]);
}
