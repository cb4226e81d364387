//! Dense kernels shared by the losses and the model: row normalization with its
//! backward pass, numerically stable softmax, and a central-difference gradient
//! checker used to validate every hand-written gradient in the crate.

mod matrix;

pub use matrix::{dot, norm, Matrix};

use crate::error::{Error, Result};

/// Default step for central differences.
pub const FD_STEP: f64 = 1e-5;

/// Normalizes every row to unit Euclidean norm.
///
/// Returns the normalized matrix together with the original row norms, which
/// [`l2_normalize_backward`] needs to chain gradients back through the map.
pub fn l2_normalize_rows(m: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = m.clone();
    let mut norms = Vec::with_capacity(m.rows());
    for i in 0..m.rows() {
        let row = out.row_mut(i);
        let n = norm(row);
        if !n.is_finite() {
            return Err(Error::NonFinite(format!("row {i} has norm {n}")));
        }
        if n == 0.0 {
            return Err(Error::Degenerate(format!("row {i} has norm {n}, cannot normalize")));
        }
        row.iter_mut().for_each(|v| *v /= n);
        norms.push(n);
    }
    Ok((out, norms))
}

/// Chains `grad_f = ∂L/∂f` back through `f = g / ‖g‖`.
///
/// Row `i` of the result is `(grad_f_i − (f_i·grad_f_i) f_i) / ‖g_i‖`.
pub fn l2_normalize_backward(grad_f: &Matrix, f: &Matrix, norms: &[f64]) -> Result<Matrix> {
    if grad_f.shape() != f.shape() || norms.len() != f.rows() {
        return Err(Error::Shape(format!(
            "normalize backward: grad {:?}, f {:?}, {} norms",
            grad_f.shape(),
            f.shape(),
            norms.len()
        )));
    }
    let mut out = grad_f.clone();
    for (i, &n) in norms.iter().enumerate() {
        let fi = f.row(i);
        let radial = dot(fi, grad_f.row(i));
        for (o, &fv) in out.row_mut(i).iter_mut().zip(fi) {
            *o = (*o - radial * fv) / n;
        }
    }
    Ok(out)
}

/// Softmax with max-shift.
pub fn stable_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN logit in softmax".into()));
    }
    let m = max_of(logits);
    if !m.is_finite() {
        return Err(Error::NonFinite(format!("softmax max logit is {m}")));
    }
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= s);
    Ok(out)
}

/// `log Σ exp(z)`; `-inf` for an empty slice.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = max_of(logits);
    if !m.is_finite() {
        return m;
    }
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

/// `log(1 + e^x)` without overflow.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + e^{-x})` without overflow.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Compares an analytic gradient against central differences of `f` at `x0`.
///
/// Returns `max_k |analytic_k − fd_k| / max(1, |analytic_k|)`.
pub fn check_gradient<F>(f: F, analytic: &[f64], x0: &[f64], h: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if analytic.len() != x0.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries, point has {}",
            analytic.len(),
            x0.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step {h}")));
    }
    let mut x = x0.to_vec();
    let mut worst = 0.0f64;
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + h;
        let up = f(&x);
        x[k] = orig - h;
        let down = f(&x);
        x[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {k}: f(+h)={up}, f(-h)={down}"
            )));
        }
        let fd = (up - down) / (2.0 * h);
        let a = analytic[k];
        if !a.is_finite() {
            return Err(Error::NonFinite(format!("analytic gradient at {k} is {a}")));
        }
        worst = worst.max((a - fd).abs() / a.abs().max(1.0));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_three_four_five() {
        let m = Matrix::from_rows(&[[3.0, 4.0], [0.0, 1.0]]).unwrap();
        let (n, norms) = l2_normalize_rows(&m).unwrap();
        assert!((n.get(0, 0) - 0.6).abs() < 1e-15);
        assert!((n.get(0, 1) - 0.8).abs() < 1e-15);
        assert_eq!(norms, vec![5.0, 1.0]);
        assert_eq!(n.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn normalize_zero_row_fails() {
        let m = Matrix::from_rows(&[[1.0, 0.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(l2_normalize_rows(&m), Err(Error::Degenerate(_))));
    }

    #[test]
    fn normalize_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (once, _) = l2_normalize_rows(&Matrix::new(8, 5, data).unwrap()).unwrap();
        let (twice, norms) = l2_normalize_rows(&once).unwrap();
        assert!(once.max_abs_diff(&twice) < 1e-12);
        assert!(norms.iter().all(|n| (n - 1.0).abs() < 1e-12));
    }

    #[test]
    fn backward_radial_and_tangent() {
        let f = Matrix::from_rows(&[[0.6, 0.8]]).unwrap();
        let radial = Matrix::from_rows(&[[1.2, 1.6]]).unwrap();
        let g = l2_normalize_backward(&radial, &f, &[5.0]).unwrap();
        assert!(g.as_slice().iter().all(|v| v.abs() < 1e-15));

        // orthogonal to f with norm 2, and ‖g‖ = 2
        let tangent = Matrix::from_rows(&[[-1.6, 1.2]]).unwrap();
        let g = l2_normalize_backward(&tangent, &f, &[2.0]).unwrap();
        assert!((g.get(0, 0) + 0.8).abs() < 1e-15);
        assert!((g.get(0, 1) - 0.6).abs() < 1e-15);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (rows, cols) = (3, 4);
        let x0: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
        // L = Σ w ⊙ normalize(g)
        let objective = |x: &[f64]| {
            let (f, _) = l2_normalize_rows(&Matrix::new(rows, cols, x.to_vec()).unwrap()).unwrap();
            dot(f.as_slice(), &w)
        };
        let (f, norms) = l2_normalize_rows(&Matrix::new(rows, cols, x0.clone()).unwrap()).unwrap();
        let grad_f = Matrix::new(rows, cols, w.clone()).unwrap();
        let grad = l2_normalize_backward(&grad_f, &f, &norms).unwrap();
        let err = check_gradient(objective, grad.as_slice(), &x0, FD_STEP).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn backward_shape_mismatch() {
        let f = Matrix::zeros(2, 3);
        assert!(l2_normalize_backward(&Matrix::zeros(2, 2), &f, &[1.0, 1.0]).is_err());
        assert!(l2_normalize_backward(&Matrix::zeros(2, 3), &f, &[1.0]).is_err());
    }

    #[test]
    fn softmax_cases() {
        assert_eq!(stable_softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let p = stable_softmax(&[1000.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] >= 0.0 && p[1] < 1e-300);
        let p = stable_softmax(&[1.0, 0.0]).unwrap();
        assert!((p[0] - 0.73106).abs() < 1e-5);
        assert!((p[1] - 0.26894).abs() < 1e-5);
        assert!(stable_softmax(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn softmax_shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let v: Vec<f64> = (0..7).map(|_| rng.random_range(-5.0..5.0)).collect();
            let alpha = rng.random_range(-50.0..50.0);
            let shifted: Vec<f64> = v.iter().map(|x| x + alpha).collect();
            let (p, q) = (stable_softmax(&v).unwrap(), stable_softmax(&shifted).unwrap());
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            for (a, b) in p.iter().zip(&q) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn softplus_and_sigmoid_extremes() {
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sigmoid(800.0), 1.0);
        assert_eq!(sigmoid(-800.0), 0.0);
        assert!((log_sum_exp(&[0.0, 0.0]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn gradient_checker_basics() {
        let x0 = [0.3, -1.2, 2.5];
        assert_eq!(check_gradient(|_| 4.0, &[0.0; 3], &x0, FD_STEP).unwrap(), 0.0);

        let two_x: Vec<f64> = x0.iter().map(|v| 2.0 * v).collect();
        let err = check_gradient(|x| dot(x, x), &two_x, &x0, FD_STEP).unwrap();
        assert!(err < 1e-8, "rel err {err}");

        let err = check_gradient(|x| dot(x, x), &[0.0; 3], &x0, FD_STEP).unwrap();
        assert!(err > 0.5);

        assert!(check_gradient(|_| f64::NAN, &[0.0; 3], &x0, FD_STEP).is_err());
    }
}
