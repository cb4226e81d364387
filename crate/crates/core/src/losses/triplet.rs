use super::{check_batch, LossOutput, Reduction};
use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_backward, l2_normalize_rows, Matrix};

/// Batch-hard triplet loss on L2-normalized features with Euclidean distance.
///
/// For each anchor the farthest same-identity sample and the nearest
/// other-identity sample are mined (ties go to the lowest index), and
/// `max(0, d_pos − d_neg + margin)` is averaged (or summed) over anchors that
/// have both. Coincident points get a zero subgradient.
pub fn triplet_loss_batch_hard(
    features: &Matrix,
    identities: &[u32],
    margin: f64,
    reduction: Reduction,
) -> Result<LossOutput> {
    check_batch(features, identities.len(), "triplet")?;
    let n = identities.len();
    let (f, norms) = l2_normalize_rows(features)?;

    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = f
                .row(i)
                .iter()
                .zip(f.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }

    let mut mined = Vec::new();
    for a in 0..n {
        let mut pos: Option<(usize, f64)> = None;
        let mut neg: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = dist[a * n + j];
            if identities[j] == identities[a] {
                if pos.is_none_or(|(_, best)| d > best) {
                    pos = Some((j, d));
                }
            } else if neg.is_none_or(|(_, best)| d < best) {
                neg = Some((j, d));
            }
        }
        if let (Some(p), Some(q)) = (pos, neg) {
            mined.push((a, p, q));
        }
    }
    if mined.is_empty() {
        return Err(Error::Degenerate(
            "triplet: no anchor has both a positive and a negative".into(),
        ));
    }

    let scale = reduction.factor(mined.len());
    let mut value = 0.0;
    let mut grad_f = Matrix::zeros(n, f.cols());
    let pull = |grad: &mut Matrix, i: usize, j: usize, d: f64, w: f64| {
        if d == 0.0 {
            return;
        }
        for k in 0..f.cols() {
            let u = w * (f.get(i, k) - f.get(j, k)) / d;
            grad.row_mut(i)[k] += u;
            grad.row_mut(j)[k] -= u;
        }
    };
    for &(a, (p, dp), (q, dq)) in &mined {
        let hinge = dp - dq + margin;
        if hinge > 0.0 {
            value += hinge;
            pull(&mut grad_f, a, p, dp, scale);
            pull(&mut grad_f, a, q, dq, -scale);
        }
    }

    LossOutput {
        value: value * scale,
        grad_features: l2_normalize_backward(&grad_f, &f, &norms)?,
        grad_weights: None,
        grad_bias: None,
    }
    .check_finite("triplet")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::testutil::{random_matrix, rng};
    use crate::numerics::{check_gradient, FD_STEP};

    #[test]
    fn identical_features_cost_the_margin() {
        let f = Matrix::from_rows(&[[1.0, 1.0]; 4]).unwrap();
        let out = triplet_loss_batch_hard(&f, &[0, 0, 1, 1], 0.3, Reduction::Mean).unwrap();
        assert!((out.value - 0.3).abs() < 1e-15);
        assert!(out.grad_features.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn satisfied_margin_is_zero() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [2.0, 0.0], [0.0, 1.0], [0.0, 3.0]]).unwrap();
        let out = triplet_loss_batch_hard(&f, &[0, 0, 1, 1], 0.3, Reduction::Mean).unwrap();
        assert_eq!(out.value, 0.0);
    }

    #[test]
    fn needs_positive_and_negative() {
        let f = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(triplet_loss_batch_hard(&f, &[0, 1], 0.3, Reduction::Mean).is_err());
        assert!(triplet_loss_batch_hard(&f, &[0, 0], 0.3, Reduction::Mean).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let ids = [0, 0, 1, 1, 2, 2, 2];
        for seed in 0..10 {
            let mut r = rng(300 + seed);
            let f = random_matrix(&mut r, ids.len(), 5);
            // large margin keeps every hinge active; random data keeps ties away
            let out = triplet_loss_batch_hard(&f, &ids, 2.0, Reduction::Mean).unwrap();
            let err = check_gradient(
                |x| {
                    let f = Matrix::new(ids.len(), 5, x.to_vec()).unwrap();
                    triplet_loss_batch_hard(&f, &ids, 2.0, Reduction::Mean).unwrap().value
                },
                out.grad_features.as_slice(),
                f.as_slice(),
                FD_STEP,
            )
            .unwrap();
            assert!(err < 1e-5, "seed {seed}: {err}");
        }
    }
}
