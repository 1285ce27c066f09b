use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `y = prefactor * x^exponent`, fitted by least squares on `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    /// Standard error of the slope; zero for fewer than three points or an
    /// exact fit.
    pub exponent_stderr: f64,
    pub points: usize,
}

impl PowerLawFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.prefactor * x.powf(self.exponent)
    }
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(invalid(
            "points",
            format!("power-law fit needs at least 3 points, got {}", points.len()),
        ));
    }
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(invalid("points", format!("power-law fit needs positive finite data, got ({x}, {y})")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(invalid("points", "power-law fit needs at least two distinct x values"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx
        .iter()
        .zip(&ly)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - sse / syy).clamp(0.0, 1.0) } else { 1.0 };
    let exponent_stderr = if points.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        prefactor: intercept.exp(),
        r_squared,
        exponent_stderr,
        points: points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_inverse_square_root() {
        let pts: Vec<(f64, f64)> = [1.0f64, 2.0, 5.0, 10.0, 40.0].iter().map(|&x| (x, 3.0 * x.powf(-0.5))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent + 0.5).abs() < 1e-10);
        assert!((fit.prefactor - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_power_law(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(-1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]).is_err());
        assert!(fit_power_law(&[(2.0, 1.0), (2.0, 3.0), (2.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn noiseless_power_laws_fit_exactly(
            exponent in -3.0f64..3.0,
            prefactor in 0.01f64..100.0,
            xs in prop::collection::btree_set(1u32..10_000, 3..12),
        ) {
            let pts: Vec<(f64, f64)> = xs.iter().map(|&x| {
                let x = x as f64 / 10.0;
                (x, prefactor * x.powf(exponent))
            }).collect();
            let fit = fit_power_law(&pts).unwrap();
            prop_assert!((fit.exponent - exponent).abs() < 1e-9);
            prop_assert!((fit.r_squared - 1.0).abs() < 1e-10);
        }
    }
}
