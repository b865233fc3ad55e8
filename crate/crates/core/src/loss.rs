//! Ratio-normalized Gaussian negative log-likelihood.
//!
//! For a prediction `x` and target `u` under `N(u, diag(ε²))` the loss is
//! `−log(PDF(x) / PDF(u)) = Σ (x_i − u_i)² / (2 ε_i²)`: zero when the
//! prediction is exact, independent of how peaked the density is.

use crate::error::{Error, Result};

/// Loss value and `dL/dx`.
pub fn loss(x: &[f64], u: &[f64], epsilon: &[f64]) -> Result<(f64, Vec<f64>)> {
    check(x, u, epsilon)?;
    let mut value = 0.0;
    let mut grad = Vec::with_capacity(x.len());
    for ((&xi, &ui), &e) in x.iter().zip(u).zip(epsilon) {
        let d = xi - ui;
        let inv = 1.0 / (e * e);
        value += 0.5 * d * d * inv;
        grad.push(d * inv);
    }
    Ok((value, grad))
}

pub fn loss_value(x: &[f64], u: &[f64], epsilon: &[f64]) -> Result<f64> {
    loss(x, u, epsilon).map(|(v, _)| v)
}

fn check(x: &[f64], u: &[f64], epsilon: &[f64]) -> Result<()> {
    for other in [u.len(), epsilon.len()] {
        if other != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                actual: other,
            });
        }
    }
    if let Some((index, &value)) = epsilon.iter().enumerate().find(|(_, &e)| !(e > 0.0)) {
        return Err(Error::NonPositiveEpsilon { index, value });
    }
    Ok(())
}

/// Per-dimension standard deviation of the targets, floored at `floor`.
pub fn epsilon_from_targets(targets: &[[f64; 8]], floor: f64) -> Vec<f64> {
    let n = targets.len().max(1) as f64;
    (0..8)
        .map(|d| {
            let mean = targets.iter().map(|u| u[d]).sum::<f64>() / n;
            let var = targets.iter().map(|u| (u[d] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt().max(floor)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_prediction_is_zero() {
        let u = [0.1, 0.5, 0.9, 0.0, 1.0, 0.3, 0.3, 0.7];
        let (v, g) = loss(&u, &u, &[0.2; 8]).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn one_sigma_everywhere_is_four() {
        let u = [0.1; 8];
        let eps = [0.05, 0.1, 0.2, 0.3, 0.01, 0.02, 0.4, 0.25];
        let x: Vec<f64> = u.iter().zip(&eps).map(|(a, e)| a + e).collect();
        assert!((loss_value(&x, &u, &eps).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_epsilon() {
        assert_eq!(
            loss(&[0.0; 2], &[0.0; 2], &[0.1, 0.0]),
            Err(Error::NonPositiveEpsilon { index: 1, value: 0.0 })
        );
        assert!(matches!(
            loss(&[0.0; 2], &[0.0; 3], &[0.1; 2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn epsilon_floor() {
        let eps = epsilon_from_targets(&[[0.5; 8], [0.5; 8]], 1e-3);
        assert_eq!(eps, vec![1e-3; 8]);
        let eps = epsilon_from_targets(&[[0.0; 8], [1.0; 8]], 1e-3);
        assert_eq!(eps, vec![0.5; 8]);
    }
}
