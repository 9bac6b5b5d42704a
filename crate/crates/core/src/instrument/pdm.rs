use thiserror::Error;

use crate::oracle::{DistributionRow, NORMALIZATION_TOLERANCE};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PdmError {
    #[error("distributions have different sizes ({0} vs {1})")]
    SupportMismatch(usize, usize),
    #[error("distribution at position {position} sums to {total}")]
    NotNormalized { position: usize, total: f64 },
}

/// Prompt dependency measure: the Hellinger distance between the token
/// distributions with and without the droppable condition,
/// `sqrt(sum (sqrt p - sqrt q)^2) / sqrt 2`, in [0, 1].
pub fn pdm(cond: &DistributionRow, uncond: &DistributionRow) -> Result<f64, PdmError> {
    if cond.probs.len() != uncond.probs.len() {
        return Err(PdmError::SupportMismatch(cond.probs.len(), uncond.probs.len()));
    }
    for row in [cond, uncond] {
        let total: f64 = row.probs.iter().sum();
        if !total.is_finite() || (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(PdmError::NotNormalized {
                position: row.position,
                total,
            });
        }
    }
    Ok(hellinger(&cond.probs, &uncond.probs))
}

/// Unchecked Hellinger distance between two equally long probability vectors.
pub fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    let sq: f64 = p
        .iter()
        .zip(q)
        .map(|(&a, &b)| {
            let d = a.max(0.0).sqrt() - b.max(0.0).sqrt();
            d * d
        })
        .sum();
    (sq.sqrt() / std::f64::consts::SQRT_2).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: &[f64]) -> DistributionRow {
        DistributionRow::new(0, p.to_vec()).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let p = row(&[0.2, 0.3, 0.5]);
        assert_eq!(pdm(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_is_one() {
        assert_eq!(pdm(&row(&[1.0, 0.0]), &row(&[0.0, 1.0])).unwrap(), 1.0);
    }

    #[test]
    fn half_split() {
        let v = pdm(&row(&[1.0, 0.0]), &row(&[0.5, 0.5])).unwrap();
        let want = ((1.0 - 0.5f64.sqrt()).powi(2) + 0.5).sqrt() / 2f64.sqrt();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.5412).abs() < 1e-4);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            pdm(&row(&[1.0, 0.0]), &row(&[0.2, 0.3, 0.5])),
            Err(PdmError::SupportMismatch(2, 3))
        ));
        let bad = DistributionRow {
            position: 4,
            probs: vec![0.6, 0.6],
        };
        assert!(matches!(
            pdm(&bad, &row(&[0.5, 0.5])),
            Err(PdmError::NotNormalized { position: 4, .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
            (2usize..=64).prop_flat_map(|n| {
                let norm = |w: Vec<f64>| {
                    let t: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / t).collect::<Vec<_>>()
                };
                (
                    prop::collection::vec(0.0f64..1.0, n).prop_filter("mass", |w| w.iter().sum::<f64>() > 1e-3).prop_map(norm),
                    prop::collection::vec(0.0f64..1.0, n).prop_filter("mass", |w| w.iter().sum::<f64>() > 1e-3).prop_map(norm),
                )
            })
        }

        proptest! {
            #[test]
            fn symmetric_bounded((p, q) in pair()) {
                let (a, b) = (row(&p), row(&q));
                let x = pdm(&a, &b).unwrap();
                prop_assert_eq!(x, pdm(&b, &a).unwrap());
                prop_assert!((0.0..=1.0).contains(&x));
                prop_assert_eq!(pdm(&a, &a).unwrap(), 0.0);
            }
        }
    }
}
