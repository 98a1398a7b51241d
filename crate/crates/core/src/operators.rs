//! Proximal operators of the ℓ1 norm and of the ℓ2 norm on a group.

use crate::error::{Error, Result};

fn check_threshold(lambda: f64) -> Result<()> {
    if lambda >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "threshold must be non-negative, got {lambda}"
        )))
    }
}

#[inline]
fn soft_scalar(x: f64, lambda: f64) -> f64 {
    x.signum() * (x.abs() - lambda).max(0.0)
}

/// Element-wise soft thresholding, `sign(x) · max(|x| − λ, 0)`.
pub fn soft(x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_threshold(lambda)?;
    Ok(x.iter().map(|&v| soft_scalar(v, lambda)).collect())
}

/// Block soft thresholding, `(1 − λ/‖x‖₂)₊ · x`.
///
/// Groups with `‖x‖₂ ≤ λ` (including the zero vector) map to zero.
pub fn block_soft(x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    let mut out = x.to_vec();
    block_soft_in_place(&mut out, lambda)?;
    Ok(out)
}

pub(crate) fn block_soft_in_place(x: &mut [f64], lambda: f64) -> Result<()> {
    check_threshold(lambda)?;
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= lambda {
        x.iter_mut().for_each(|v| *v = 0.0);
    } else {
        let scale = 1.0 - lambda / norm;
        x.iter_mut().for_each(|v| *v *= scale);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn soft_examples() {
        assert_eq!(soft(&[5.0, -5.0, 1.0], 2.0).unwrap(), vec![3.0, -3.0, 0.0]);
        let x = [1.5, -0.25, 0.0, 7.0];
        assert_eq!(soft(&x, 0.0).unwrap(), x.to_vec());
        assert!(soft(&x, -1.0).is_err());
        assert!(soft(&x, f64::NAN).is_err());
    }

    #[test]
    fn block_soft_examples() {
        assert_eq!(block_soft(&[3.0, 4.0], 2.5).unwrap(), vec![1.5, 2.0]);
        assert_eq!(block_soft(&[1.0, 1.0], 10.0).unwrap(), vec![0.0, 0.0]);
        assert_eq!(block_soft(&[0.0, 0.0], 0.0).unwrap(), vec![0.0, 0.0]);
        // norm exactly at the threshold goes to zero
        assert_eq!(block_soft(&[3.0, 4.0], 5.0).unwrap(), vec![0.0, 0.0]);
        assert!(block_soft(&[1.0], -0.5).is_err());
    }

    proptest! {
        #[test]
        fn soft_is_homogeneous(x in prop::collection::vec(-100.0f64..100.0, 1..32), lam in 0.0f64..50.0) {
            let c = 3.7;
            let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
            let lhs = soft(&scaled, c * lam).unwrap();
            let rhs = soft(&x, lam).unwrap();
            for (a, b) in lhs.iter().zip(&rhs) {
                prop_assert!((a - c * b).abs() <= 1e-12 * (1.0 + a.abs()));
            }
        }

        #[test]
        fn block_soft_on_scalar_is_soft(x in -100.0f64..100.0, lam in 0.0f64..100.0) {
            let a = block_soft(&[x], lam).unwrap()[0];
            let b = soft(&[x], lam).unwrap()[0];
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn block_soft_shrinks_norm(x in prop::collection::vec(-10.0f64..10.0, 1..16), lam in 0.0f64..20.0) {
            let y = block_soft(&x, lam).unwrap();
            prop_assert!((norm(&y) - (norm(&x) - lam).max(0.0)).abs() <= 1e-10);
        }

        #[test]
        fn operators_are_non_expansive(
            pair in (1usize..16).prop_flat_map(|n| (
                prop::collection::vec(-10.0f64..10.0, n),
                prop::collection::vec(-10.0f64..10.0, n),
            )),
            lam in 0.0f64..10.0,
        ) {
            let (a, b) = pair;
            let d = dist(&a, &b);
            prop_assert!(dist(&soft(&a, lam).unwrap(), &soft(&b, lam).unwrap()) <= d + 1e-12);
            prop_assert!(dist(&block_soft(&a, lam).unwrap(), &block_soft(&b, lam).unwrap()) <= d + 1e-12);
        }

        #[test]
        fn zero_is_preserved(n in 1usize..16, lam in 0.0f64..10.0) {
            let z = vec![0.0; n];
            prop_assert_eq!(soft(&z, lam).unwrap(), z.clone());
            prop_assert_eq!(block_soft(&z, lam).unwrap(), z);
        }
    }
}
