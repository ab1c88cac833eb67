use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{ContinuousOptions, WeightForm};
use crate::error::{Error, Result};
use crate::optimizer_discrete::{Branch, RootPolicy, EPS_OPEN};
use crate::roots::bisect_decreasing;

/// Centred normal trials with standard deviation `sigma` and the return
/// `slope x + level` on gains (`x > 0`), `-loss` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMarket {
    pub sigma: f64,
    pub slope: f64,
    pub level: f64,
    pub loss: f64,
    #[serde(default)]
    pub weight: WeightForm,
}

/// Weight coefficients `(quad, lin, const)` on the positive and negative half-lines.
fn weight_coeffs(w: &WeightForm) -> ([f64; 3], [f64; 3]) {
    match *w {
        WeightForm::Constant { value } => ([0.0, 0.0, value], [0.0, 0.0, value]),
        WeightForm::PiecewiseQuadratic {
            quad_pos,
            lin_pos,
            const_pos,
            quad_neg,
            lin_neg,
            const_neg,
        } => (
            [quad_pos, lin_pos, const_pos],
            [quad_neg, lin_neg, const_neg],
        ),
    }
}

impl GaussianMarket {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "sigma = {} must be positive",
                self.sigma
            )));
        }
        if !(self.slope >= 0.0 && self.level >= 0.0 && self.loss > 0.0) {
            return Err(Error::InvalidInput(
                "need slope >= 0, level >= 0 and loss > 0".to_string(),
            ));
        }
        self.weight
            .check_nonnegative(f64::NEG_INFINITY, f64::INFINITY)
    }

    /// `E[X^k ; X > 0]` for `k = 0..=3`.
    fn half_moments(&self) -> [f64; 4] {
        let s = self.sigma;
        let c = 1.0 / (2.0 * PI).sqrt();
        [0.5, s * c, 0.5 * s * s, 2.0 * s * s * s * c]
    }

    /// `E[phi ; X < 0]` in closed form.
    pub fn weight_mass_on_losses(&self) -> f64 {
        let m = self.half_moments();
        let (_, [a2, a1, a0]) = weight_coeffs(&self.weight);
        a2 * m[2] - a1 * m[1] + a0 * m[0]
    }

    /// `E[phi g]` in closed form from the half-line moments.
    pub fn weighted_mean(&self) -> f64 {
        let m = self.half_moments();
        let ([a2, a1, a0], _) = weight_coeffs(&self.weight);
        let gain_x = a2 * m[3] + a1 * m[2] + a0 * m[1];
        let gain_1 = a2 * m[2] + a1 * m[1] + a0 * m[0];
        self.slope * gain_x + self.level * gain_1 - self.loss * self.weight_mass_on_losses()
    }

    fn pdf(&self, x: f64) -> f64 {
        let z = x / self.sigma;
        (-0.5 * z * z).exp() / (self.sigma * (2.0 * PI).sqrt())
    }

    /// Derivative of the weighted growth rate: the loss half-line in closed
    /// form, the gain half-line by semi-infinite quadrature.
    pub fn slope_at(&self, d: f64, options: &ContinuousOptions) -> Result<f64> {
        let losses = -self.loss / (1.0 - d * self.loss) * self.weight_mass_on_losses();
        let gains = options.quadrature.integrate_upper(
            |x| {
                let g = self.slope * x + self.level;
                self.pdf(x) * self.weight.value(x) * g / (1.0 + d * g)
            },
            0.0,
            self.sigma,
            &[],
        )?;
        Ok(losses + gains.value)
    }

    /// Fraction bound: the smaller of `1 - EPS_OPEN` and `(1 - b) / loss`.
    pub fn upper(&self, b: f64) -> f64 {
        ((1.0 - b) / self.loss).min(1.0 - EPS_OPEN)
    }
}

/// Output of [`gaussian_example_solver`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSolution {
    pub fraction: f64,
    /// Derivative of the growth rate at `fraction`.
    pub residual: f64,
    /// `E[phi g]` from closed-form moments.
    pub weighted_mean: f64,
    /// Derivative at zero from quadrature; agrees with `weighted_mean`.
    pub slope_at_zero: f64,
    pub upper: f64,
    pub branch: Branch,
    pub root_beyond_upper: bool,
}

/// Optimal fraction for [`GaussianMarket`] trials with `b` in `(0, 1)`.
pub fn gaussian_example_solver(
    market: &GaussianMarket,
    b: f64,
    options: &ContinuousOptions,
) -> Result<GaussianSolution> {
    market.validate()?;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidInput(format!("b = {b} must lie in (0, 1)")));
    }
    let upper = market.upper(b);
    let weighted_mean = market.weighted_mean();
    let slope_at_zero = market.slope_at(0.0, options)?;
    let out = |fraction: f64, residual: f64, branch, beyond| GaussianSolution {
        fraction,
        residual,
        weighted_mean,
        slope_at_zero,
        upper,
        branch,
        root_beyond_upper: beyond,
    };
    if weighted_mean <= options.quadrature.abs_tol {
        return Ok(out(0.0, slope_at_zero, Branch::Zero, false));
    }
    let at_upper = market.slope_at(upper, options)?;
    if at_upper.abs() <= 1e-12 {
        return Ok(out(upper, at_upper, Branch::InteriorRoot, false));
    }
    if at_upper > 0.0 {
        return Ok(match options.root_policy {
            RootPolicy::ZeroFallback => out(0.0, slope_at_zero, Branch::Zero, true),
            RootPolicy::FeasibleBoundary => out(upper, at_upper, Branch::Boundary, true),
        });
    }
    let root = bisect_decreasing(|d| market.slope_at(d, options), 0.0, upper, 1e-12, 1e-14)?;
    Ok(out(root.root, root.residual, Branch::InteriorRoot, false))
}
