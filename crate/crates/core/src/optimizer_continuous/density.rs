use serde::{Deserialize, Serialize};

use super::quadrature::Quadrature;
use crate::error::{Error, Result};

/// Allowed deviation of the total mass from one.
pub const MASS_TOL: f64 = 1e-8;

/// Law of one IID trial result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "kebab-case")]
pub enum DensityModel {
    /// Uniform on `[lower, upper]`.
    Uniform { lower: f64, upper: f64 },
    /// Centred normal with standard deviation `sigma`.
    Gaussian { sigma: f64 },
    /// Piecewise-linear interpolation of `values` at the sorted `points`,
    /// rescaled to unit mass.
    Tabulated { points: Vec<f64>, values: Vec<f64> },
}

impl DensityModel {
    /// Checks parameters and returns the model with tabulated values
    /// rescaled to unit mass.
    pub fn normalized(&self) -> Result<DensityModel> {
        match self {
            DensityModel::Uniform { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite() && lower < upper) {
                    return Err(Error::InvalidInput(format!(
                        "uniform support [{lower}, {upper}] is empty or unbounded"
                    )));
                }
                Ok(self.clone())
            }
            DensityModel::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma > 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "sigma = {sigma} must be positive"
                    )));
                }
                Ok(self.clone())
            }
            DensityModel::Tabulated { points, values } => {
                if points.len() < 2 || points.len() != values.len() {
                    return Err(Error::InvalidInput(
                        "a tabulated density needs at least two points and one value per point"
                            .to_string(),
                    ));
                }
                if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[1] <= w[0])
                {
                    return Err(Error::InvalidInput(
                        "tabulated points must be finite and increasing".to_string(),
                    ));
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return Err(Error::InvalidInput(
                        "tabulated values must be finite and nonnegative".to_string(),
                    ));
                }
                let mass: f64 = points
                    .windows(2)
                    .zip(values.windows(2))
                    .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
                    .sum();
                if !(mass > 0.0) {
                    return Err(Error::InvalidInput(
                        "tabulated density has zero mass".to_string(),
                    ));
                }
                Ok(DensityModel::Tabulated {
                    points: points.clone(),
                    values: values.iter().map(|v| v / mass).collect(),
                })
            }
        }
    }

    /// Closed support `[lo, hi]`, with infinite ends for the Gaussian.
    pub fn support(&self) -> (f64, f64) {
        match self {
            DensityModel::Uniform { lower, upper } => (*lower, *upper),
            DensityModel::Gaussian { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            DensityModel::Tabulated { points, .. } => (points[0], points[points.len() - 1]),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            DensityModel::Uniform { lower, upper } => {
                if (*lower..=*upper).contains(&x) {
                    1.0 / (upper - lower)
                } else {
                    0.0
                }
            }
            DensityModel::Gaussian { sigma } => {
                let z = x / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
            }
            DensityModel::Tabulated { points, values } => {
                if x < points[0] || x > points[points.len() - 1] {
                    return 0.0;
                }
                let j = points
                    .partition_point(|&p| p <= x)
                    .clamp(1, points.len() - 1);
                let t = (x - points[j - 1]) / (points[j] - points[j - 1]);
                values[j - 1] + t * (values[j] - values[j - 1])
            }
        }
    }

    /// Points where the density is not smooth, inside the support.
    fn kinks(&self) -> Vec<f64> {
        match self {
            DensityModel::Tabulated { points, .. } => points[1..points.len() - 1].to_vec(),
            _ => Vec::new(),
        }
    }

    /// `E[h(X)]`, splitting panels at `breaks` and at the density's own kinks.
    pub fn expectation<F: FnMut(f64) -> f64>(
        &self,
        quad: &Quadrature,
        mut h: F,
        breaks: &[f64],
    ) -> Result<f64> {
        let (lo, hi) = self.support();
        let mut cuts: Vec<f64> = breaks
            .iter()
            .chain(self.kinks().iter())
            .copied()
            .filter(|&x| x > lo && x < hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut integrand = |x: f64| {
            let w = self.pdf(x);
            if w == 0.0 {
                0.0
            } else {
                w * h(x)
            }
        };
        match self {
            DensityModel::Gaussian { sigma } => {
                let upper = quad.integrate_upper(&mut integrand, 0.0, *sigma, &cuts)?;
                let lower_cuts: Vec<f64> = cuts.iter().rev().copied().collect();
                let lower = quad.integrate_lower(&mut integrand, 0.0, *sigma, &lower_cuts)?;
                Ok(lower.value + upper.value)
            }
            _ => {
                let mut all = vec![lo];
                all.extend(cuts);
                all.push(hi);
                Ok(quad.integrate_with_breaks(integrand, &all)?.value)
            }
        }
    }

    /// `E[h(X, 1 - X)]` for a bounded support ending at `1`, where the
    /// integrand may have a logarithmic singularity.
    pub fn expectation_log_right<F: FnMut(f64, f64) -> f64>(
        &self,
        quad: &Quadrature,
        mut h: F,
        breaks: &[f64],
    ) -> Result<f64> {
        let (lo, hi) = self.support();
        if hi != 1.0 || !lo.is_finite() {
            return Err(Error::InvalidInput(format!(
                "support [{lo}, {hi}] must be bounded and end at 1"
            )));
        }
        let mut cuts: Vec<f64> = breaks
            .iter()
            .chain(self.kinks().iter())
            .copied()
            .filter(|&x| x > lo && x < hi)
            .collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let est = quad.integrate_log_right(
            |x, tail| {
                let w = self.pdf(x);
                if w == 0.0 {
                    0.0
                } else {
                    w * h(x, tail)
                }
            },
            lo,
            &cuts,
        )?;
        Ok(est.value)
    }

    /// Total mass under `quad`, which must lie within `MASS_TOL` of one.
    pub fn check_mass(&self, quad: &Quadrature) -> Result<f64> {
        let mass = self.expectation(quad, |_| 1.0, &[])?;
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidInput(format!(
                "density integrates to {mass}, not 1"
            )));
        }
        Ok(mass)
    }
}
