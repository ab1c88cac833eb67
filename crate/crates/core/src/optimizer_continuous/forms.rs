use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Return of one unit invested, as a function of the trial result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "params", rename_all = "kebab-case")]
pub enum ReturnForm {
    /// `slope_pos x + level_pos` for `x > 0`, `slope_neg x + level_neg` for `x < 0`.
    PiecewiseLinear {
        slope_pos: f64,
        slope_neg: f64,
        level_pos: f64,
        level_neg: f64,
    },
    /// `slope x + level` for `x > 0`, `-loss` for `x < 0`.
    PositivePartLinear { slope: f64, level: f64, loss: f64 },
    /// `-gamma x`.
    Linear { gamma: f64 },
    /// `-theta ln(1 - x)`, defined for `x < 1`.
    Logarithmic { theta: f64 },
}

impl ReturnForm {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ReturnForm::PiecewiseLinear {
                slope_pos,
                slope_neg,
                level_pos,
                level_neg,
            } => {
                if x > 0.0 {
                    slope_pos * x + level_pos
                } else {
                    slope_neg * x + level_neg
                }
            }
            ReturnForm::PositivePartLinear { slope, level, loss } => {
                if x > 0.0 {
                    slope * x + level
                } else {
                    -loss
                }
            }
            ReturnForm::Linear { gamma } => -gamma * x,
            ReturnForm::Logarithmic { theta } => -theta * (-x).ln_1p(),
        }
    }

    /// [`ReturnForm::value`] given `tail = 1 - x` computed separately, which
    /// keeps the logarithmic form accurate next to `x = 1`.
    pub fn value_with_tail(&self, x: f64, tail: f64) -> f64 {
        match *self {
            ReturnForm::Logarithmic { theta } => -theta * tail.ln(),
            _ => self.value(x),
        }
    }

    /// True when the form blows up at `x = 1`.
    pub fn singular_at_one(&self) -> bool {
        matches!(self, ReturnForm::Logarithmic { .. })
    }

    /// Interior points where the form is not smooth.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            ReturnForm::PiecewiseLinear { .. } | ReturnForm::PositivePartLinear { .. } => vec![0.0],
            _ => Vec::new(),
        }
    }

    /// Infimum over `[lo, hi]`, or an error when it is `-inf`.
    pub fn infimum(&self, lo: f64, hi: f64) -> Result<f64> {
        let linear_inf = |slope: f64, level: f64, a: f64, b: f64| -> f64 {
            // inf of slope x + level over [a, b], either end possibly infinite
            if slope > 0.0 {
                slope * a + level
            } else if slope < 0.0 {
                slope * b + level
            } else {
                level
            }
        };
        let inf = match *self {
            ReturnForm::PiecewiseLinear {
                slope_pos,
                slope_neg,
                level_pos,
                level_neg,
            } => {
                let mut v = f64::INFINITY;
                if hi > 0.0 {
                    v = v.min(linear_inf(slope_pos, level_pos, lo.max(0.0), hi));
                }
                if lo < 0.0 {
                    v = v.min(linear_inf(slope_neg, level_neg, lo, hi.min(0.0)));
                }
                v
            }
            ReturnForm::PositivePartLinear { slope, level, loss } => {
                let mut v = f64::INFINITY;
                if hi > 0.0 {
                    v = v.min(linear_inf(slope, level, lo.max(0.0), hi));
                }
                if lo < 0.0 {
                    v = v.min(-loss);
                }
                v
            }
            ReturnForm::Linear { gamma } => linear_inf(-gamma, 0.0, lo, hi),
            ReturnForm::Logarithmic { theta } => {
                if hi > 1.0 {
                    return Err(Error::InvalidInput(format!(
                        "logarithmic return is undefined beyond x = 1 (support ends at {hi})"
                    )));
                }
                if theta >= 0.0 {
                    -theta * (-lo).ln_1p()
                } else {
                    f64::NEG_INFINITY
                }
            }
        };
        if inf.is_nan() || inf == f64::NEG_INFINITY {
            return Err(Error::InvalidInput(format!(
                "return {self:?} is not bounded below on [{lo}, {hi}]"
            )));
        }
        Ok(inf)
    }
}

/// Nonnegative weight applied to each trial result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", content = "params", rename_all = "kebab-case")]
pub enum WeightForm {
    Constant {
        value: f64,
    },
    /// `quad_pos x^2 + lin_pos x + const_pos` for `x > 0`, and the `_neg`
    /// coefficients for `x < 0`.
    PiecewiseQuadratic {
        quad_pos: f64,
        lin_pos: f64,
        const_pos: f64,
        quad_neg: f64,
        lin_neg: f64,
        const_neg: f64,
    },
}

impl Default for WeightForm {
    fn default() -> Self {
        WeightForm::Constant { value: 1.0 }
    }
}

impl WeightForm {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            WeightForm::Constant { value } => value,
            WeightForm::PiecewiseQuadratic {
                quad_pos,
                lin_pos,
                const_pos,
                quad_neg,
                lin_neg,
                const_neg,
            } => {
                if x > 0.0 {
                    (quad_pos * x + lin_pos) * x + const_pos
                } else {
                    (quad_neg * x + lin_neg) * x + const_neg
                }
            }
        }
    }

    pub fn kinks(&self) -> Vec<f64> {
        match self {
            WeightForm::Constant { .. } => Vec::new(),
            WeightForm::PiecewiseQuadratic { .. } => vec![0.0],
        }
    }

    /// Fails when the weight is negative somewhere on `[lo, hi]`.
    pub fn check_nonnegative(&self, lo: f64, hi: f64) -> Result<()> {
        let quad_min = |a2: f64, a1: f64, a0: f64, l: f64, h: f64| -> f64 {
            let at = |x: f64| (a2 * x + a1) * x + a0;
            let mut m = f64::INFINITY;
            for x in [l, h] {
                if x.is_finite() {
                    m = m.min(at(x));
                } else if a2 != 0.0 {
                    m = m.min(a2.signum() * f64::INFINITY);
                } else if a1 != 0.0 {
                    m = m.min((a1 * x).signum() * f64::INFINITY);
                } else {
                    m = m.min(a0);
                }
            }
            if a2 > 0.0 {
                let v = -a1 / (2.0 * a2);
                if v > l && v < h {
                    m = m.min(at(v));
                }
            }
            m
        };
        let min = match *self {
            WeightForm::Constant { value } => value,
            WeightForm::PiecewiseQuadratic {
                quad_pos,
                lin_pos,
                const_pos,
                quad_neg,
                lin_neg,
                const_neg,
            } => {
                let mut m = f64::INFINITY;
                if hi > 0.0 {
                    m = m.min(quad_min(quad_pos, lin_pos, const_pos, lo.max(0.0), hi));
                }
                if lo < 0.0 {
                    m = m.min(quad_min(quad_neg, lin_neg, const_neg, lo, hi.min(0.0)));
                }
                m
            }
        };
        if !(min >= -1e-14) {
            return Err(Error::InvalidInput(format!(
                "weight {self:?} takes negative values on [{lo}, {hi}]"
            )));
        }
        Ok(())
    }
}

/// A risky asset in the density setting: its return and the weight
/// attached to trial results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousAsset {
    pub returns: ReturnForm,
    #[serde(default)]
    pub weight: WeightForm,
}
