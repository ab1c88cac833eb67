use serde::{Deserialize, Serialize};

use super::forms::ReturnForm;
use super::scalar_upper;
use crate::error::{Error, Result};
use crate::optimizer_discrete::Branch;
use crate::roots::bisect_decreasing;

/// Uniform trials on `[lower, upper]` (with `lower < 0 < upper`) and a
/// return that is linear on each side of zero, gaining on the right and
/// losing on the left. Unit weights, no riskless asset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPiecewise {
    pub lower: f64,
    pub upper: f64,
    pub slope_pos: f64,
    pub slope_neg: f64,
    pub level_pos: f64,
    pub level_neg: f64,
}

/// `ln(1 + y) / y`, continuous at `y = 0`.
fn log_ratio(y: f64) -> f64 {
    if y.abs() < 1e-8 {
        1.0 - y / 2.0 + y * y / 3.0
    } else {
        y.ln_1p() / y
    }
}

impl UniformPiecewise {
    pub fn returns(&self) -> ReturnForm {
        ReturnForm::PiecewiseLinear {
            slope_pos: self.slope_pos,
            slope_neg: self.slope_neg,
            level_pos: self.level_pos,
            level_neg: self.level_neg,
        }
    }

    fn width(&self) -> f64 {
        self.upper - self.lower
    }

    fn validate(&self) -> Result<()> {
        let params = [
            self.lower,
            self.upper,
            self.slope_pos,
            self.slope_neg,
            self.level_pos,
            self.level_neg,
        ];
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("parameters must be finite".to_string()));
        }
        if !(self.lower < 0.0 && self.upper > 0.0) {
            return Err(Error::InvalidInput(format!(
                "support [{}, {}] must straddle zero",
                self.lower, self.upper
            )));
        }
        if self.level_pos < 0.0 || self.upper * self.slope_pos + self.level_pos < 0.0 {
            return Err(Error::InvalidInput(
                "the return must be nonnegative for x > 0".to_string(),
            ));
        }
        if self.level_neg > 0.0 || self.lower * self.slope_neg + self.level_neg > 0.0 {
            return Err(Error::InvalidInput(
                "the return must be nonpositive for x < 0".to_string(),
            ));
        }
        let flat = |s: f64, l: f64| s == 0.0 && l == 0.0;
        if flat(self.slope_pos, self.level_pos) && flat(self.slope_neg, self.level_neg) {
            return Err(Error::InvalidInput(
                "the return vanishes on both sides of zero".to_string(),
            ));
        }
        Ok(())
    }

    /// `E[g]` in closed form.
    pub fn mean(&self) -> f64 {
        let (lo, hi) = (self.lower, self.upper);
        (hi * self.level_pos - lo * self.level_neg + hi * hi * self.slope_pos / 2.0
            - lo * lo * self.slope_neg / 2.0)
            / self.width()
    }

    /// `d * width * (d beta / d d)` in closed form. It vanishes exactly at
    /// the stationary points with `d > 0` and has the sign of the
    /// derivative there.
    pub fn residual(&self, d: f64) -> f64 {
        let c_pos = 1.0 + d * self.level_pos;
        let c_neg = 1.0 + d * self.level_neg;
        let y_pos = d * self.slope_pos * self.upper / c_pos;
        let y_neg = d * self.slope_neg * self.lower / c_neg;
        self.width() - self.upper * log_ratio(y_pos) / c_pos + self.lower * log_ratio(y_neg) / c_neg
    }

    /// Derivative of the growth rate, equal to `mean()` at zero.
    pub fn slope(&self, d: f64) -> f64 {
        if d == 0.0 {
            self.mean()
        } else {
            self.residual(d) / (d * self.width())
        }
    }
}

/// Output of [`uniform_piecewise_linear_root`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseRoot {
    pub fraction: f64,
    /// Closed-form residual at `fraction` (zero at an interior root).
    pub residual: f64,
    pub mean_return: f64,
    /// No-ruin bound on the fraction.
    pub upper: f64,
    pub branch: Branch,
    /// The stationary point lies beyond `upper`; `fraction` is then `upper`.
    pub root_beyond_upper: bool,
}

/// Optimal fraction for [`UniformPiecewise`] trials.
///
/// Returns zero when `E[g] <= 0`, the stationary point when it respects
/// the no-ruin bound, and otherwise the bound itself flagged with
/// `root_beyond_upper`.
pub fn uniform_piecewise_linear_root(market: &UniformPiecewise, b: f64) -> Result<PiecewiseRoot> {
    market.validate()?;
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidInput(format!("b = {b} must lie in (0, 1)")));
    }
    let inf_g = market.returns().infimum(market.lower, market.upper)?;
    let (upper, _) = scalar_upper(inf_g, 1.0, b);
    let mean_return = market.mean();
    let out = |fraction: f64, branch, beyond| PiecewiseRoot {
        fraction,
        residual: if fraction == 0.0 {
            0.0
        } else {
            market.residual(fraction)
        },
        mean_return,
        upper,
        branch,
        root_beyond_upper: beyond,
    };
    if mean_return <= 0.0 || upper <= 0.0 {
        return Ok(out(0.0, Branch::Zero, false));
    }
    let at_upper = market.slope(upper);
    if at_upper.abs() <= 1e-14 {
        return Ok(out(upper, Branch::InteriorRoot, false));
    }
    if at_upper > 0.0 {
        return Ok(out(upper, Branch::Boundary, true));
    }
    let root = bisect_decreasing(|d| Ok(market.slope(d)), 0.0, upper, 1e-14, 1e-15)?;
    Ok(out(root.root, Branch::InteriorRoot, false))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn market(slope_pos: f64, slope_neg: f64, level_pos: f64, level_neg: f64) -> UniformPiecewise {
        UniformPiecewise {
            lower: -1.0,
            upper: 1.0,
            slope_pos,
            slope_neg,
            level_pos,
            level_neg,
        }
    }

    #[test]
    fn symmetric_steps_invest_nothing() {
        let r = uniform_piecewise_linear_root(&market(0.0, 0.0, 0.4, -0.4), 0.2).unwrap();
        assert_eq!(r.fraction, 0.0);
        assert_eq!(r.mean_return, 0.0);
    }

    #[test]
    fn negative_mean_invests_nothing() {
        let r = uniform_piecewise_linear_root(&market(0.0, 0.0, 0.05, -0.5), 0.2).unwrap();
        assert_eq!(r.branch, Branch::Zero);
        assert!(r.mean_return < 0.0);
    }

    #[test]
    fn mean_has_correct_sign_on_loss_side() {
        let m = market(0.5, 0.5, 0.3, -0.1);
        // (1/2)[0.3 - 0.1 + 0.25 - 0.25]
        assert!((m.mean() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn transcendental_root() {
        let r = uniform_piecewise_linear_root(&market(0.5, 0.5, 0.3, -0.1), 0.2).unwrap();
        assert_eq!(r.branch, Branch::InteriorRoot);
        assert!(
            (r.fraction - 0.461_108_839_420_531).abs() < 1e-12,
            "{}",
            r.fraction
        );
        assert!(r.residual.abs() <= 1e-10);
    }

    #[test]
    fn residual_is_scaled_derivative() {
        let m = market(0.5, 0.25, 0.3, -0.1);
        let d = 0.3;
        let h = 1e-6;
        let beta = |d: f64| {
            let n = 20_000;
            let step = 2.0 / n as f64;
            (0..n)
                .map(|j| {
                    let x = -1.0 + (j as f64 + 0.5) * step;
                    0.5 * step * (1.0 + d * m.returns().value(x)).ln()
                })
                .sum::<f64>()
        };
        let numeric = (beta(d + h) - beta(d - h)) / (2.0 * h);
        assert!((m.slope(d) - numeric).abs() < 1e-7);
    }

    #[test]
    fn vanishing_slopes_use_the_limit() {
        let m = market(1e-14, 0.0, 0.3, -0.1);
        let exact = market(0.0, 0.0, 0.3, -0.1);
        assert!((m.residual(0.4) - exact.residual(0.4)).abs() < 1e-12);
    }

    #[test]
    fn flat_return_is_rejected() {
        assert!(uniform_piecewise_linear_root(&market(0.0, 0.0, 0.0, 0.0), 0.2).is_err());
    }

    #[test]
    fn root_past_bound_is_flagged() {
        let r = uniform_piecewise_linear_root(&market(0.0, 0.0, 0.8, -0.2), 0.9).unwrap();
        assert_eq!(r.branch, Branch::Boundary);
        assert!(r.root_beyond_upper);
        assert!((r.fraction - 0.5).abs() < 1e-15);
    }
}
