//! Plain numeric kernels shared by the graph and by test oracles.

use std::f64::consts::LN_2;

/// Shifted softplus `ln(0.5·e^x + 0.5)`.
///
/// Both branches avoid `exp` of a positive argument, so the function is finite
/// for every finite input and returns exactly zero at zero.
pub fn ssp(x: f64) -> f64 {
    if x <= 0.0 {
        (0.5 * x.exp_m1()).ln_1p()
    } else {
        x + (0.5 * (-x).exp_m1()).ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`ssp`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Asymptote of [`ssp`] for large arguments.
pub fn ssp_asymptote(x: f64) -> f64 {
    x - LN_2
}

pub(crate) fn safe_recip(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        1.0 / x
    }
}

/// `out = a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: slice lengths are m*k, k*n and m*n with row-major strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}
