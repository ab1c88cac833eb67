//! Weighted Kullback–Leibler entropy and calibrating functions.
//!
//! Transitions with zero probability contribute exactly nothing to any sum
//! here. Where a calibrating function is built from a policy, such entries
//! receive the positive floor [`Q_FLOOR`] so that `q > 0` holds everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AssetSet, MarketModel, Matrix, WeightFunction};
use crate::optimizer_discrete::PolicyFractions;

/// Value assigned to `q(i,k)` on transitions with `p(i,k) = 0`.
pub const Q_FLOOR: f64 = 1e-300;

/// Tolerance on row sums for [`check_q_normalization`].
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Tolerance below which a dominance slack counts as nonpositive.
pub const DOMINANCE_TOL: f64 = 1e-12;

/// Strictly positive reference function `q(i,k)`, one row per state.
///
/// Rows need not sum to one; see [`check_q_normalization`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratingFunction {
    pub values: Matrix,
    /// Number of entries set to [`Q_FLOOR`] because `p = 0` there.
    #[serde(default)]
    pub floored_entries: usize,
}

impl CalibratingFunction {
    /// Wraps a matrix after checking every entry is finite and positive.
    pub fn new(values: Matrix) -> Result<Self> {
        for (i, row) in values.iter().enumerate() {
            for (k, &q) in row.iter().enumerate() {
                if !(q > 0.0 && q.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "calibrating value q({i},{k}) = {q} must be positive and finite"
                    )));
                }
            }
        }
        Ok(CalibratingFunction {
            values,
            floored_entries: 0,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i]
    }
}

/// Per-state weighted entropy `alpha(i)` in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub alpha: Vec<f64>,
}

/// `sum_l phi(l) p(l) ln(p(l) / q(l))`, skipping terms with `p(l) = 0`.
pub fn weighted_kl_row(p_row: &[f64], phi_row: &[f64], q_row: &[f64]) -> Result<f64> {
    check_lengths(p_row, phi_row, q_row)?;
    let mut total = 0.0;
    for ((&p, &phi), &q) in p_row.iter().zip(phi_row).zip(q_row) {
        if !(q > 0.0) {
            return Err(Error::InvalidInput(format!(
                "calibrating value {q} must be positive"
            )));
        }
        if p > 0.0 {
            total += phi * p * (p / q).ln();
        }
    }
    Ok(total)
}

/// Applies [`weighted_kl_row`] to every state.
pub fn entropy_profile(
    model: &MarketModel,
    weights: &WeightFunction,
    q: &CalibratingFunction,
) -> Result<EntropyProfile> {
    let alpha = (0..model.num_states())
        .map(|i| weighted_kl_row(model.row(i), weights.row(i), q.row(i)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyProfile { alpha })
}

/// Signed dominance slack per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceReport {
    /// `sum_l phi(i,l) [(1+rho) q(i,l) - p(i,l)]` for each state `i`.
    pub slack: Vec<f64>,
    /// True when every slack is at most [`DOMINANCE_TOL`].
    pub holds: bool,
    /// States whose slack is positive beyond tolerance.
    pub violating_states: Vec<usize>,
}

/// Computes the dominance slack of `q` against `p` under weights `phi`.
///
/// `rho` is the riskless rate, zero when there is no riskless asset.
pub fn check_dominance(
    phi: &Matrix,
    q: &CalibratingFunction,
    p: &Matrix,
    rho: f64,
) -> DominanceReport {
    let slack: Vec<f64> = p
        .iter()
        .enumerate()
        .map(|(i, p_row)| {
            p_row
                .iter()
                .enumerate()
                .map(|(l, &p)| {
                    let q_eff = if p > 0.0 { q.values[i][l] } else { 0.0 };
                    phi[i][l] * ((1.0 + rho) * q_eff - p)
                })
                .sum()
        })
        .collect();
    let violating_states: Vec<usize> = slack
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > DOMINANCE_TOL)
        .map(|(i, _)| i)
        .collect();
    DominanceReport {
        holds: violating_states.is_empty(),
        slack,
        violating_states,
    }
}

/// Builds `q(i,k) = p(i,k) / (1 + rho_eff + D(i) . g*(i,k))`.
///
/// Fails when a denominator on a transition with positive probability is
/// not positive. Null transitions get [`Q_FLOOR`].
pub fn calibrating_from_fractions(
    model: &MarketModel,
    policy: &PolicyFractions,
    assets: &AssetSet,
) -> Result<CalibratingFunction> {
    let m = model.num_states();
    let mut floored = 0;
    let mut values = vec![vec![0.0; m]; m];
    for i in 0..m {
        for k in 0..m {
            let p = model.transition[i][k];
            let denom = assets.growth_factor(i, k, &policy.fractions[i]);
            if !(denom > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "gross factor at ({i},{k}) is {denom}; the policy is not admissible"
                )));
            }
            values[i][k] = if p > 0.0 {
                p / denom
            } else {
                floored += 1;
                Q_FLOOR
            };
        }
    }
    Ok(CalibratingFunction {
        values,
        floored_entries: floored,
    })
}

/// Whether each row of `q` sums to one within [`NORMALIZATION_TOL`].
pub fn check_q_normalization(q: &CalibratingFunction) -> Vec<bool> {
    q.values
        .iter()
        .map(|row| (row.iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL)
        .collect()
}

/// Prefix sums `A_0 = 0, A_j = A_{j-1} + alpha(state_{j-1})`.
///
/// Returns one value per entry of `path`; the last outcome only
/// conditions a step that has not happened yet and adds nothing.
pub fn cumulative_entropy_path(path: &[usize], profile: &EntropyProfile) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    if path.is_empty() {
        return out;
    }
    let mut acc = 0.0;
    out.push(acc);
    for &state in &path[..path.len() - 1] {
        acc += profile.alpha[state];
        out.push(acc);
    }
    out
}

/// Expected one-step increment of "weighted log growth minus entropy".
///
/// Computes `sum_l phi p ln[(1 + rho + c g*(l)) q(l) / p(l)]` over
/// `p(l) > 0`. It is nonpositive whenever `q` satisfies dominance and
/// either `c = 0` or `sum_l phi q g* = 0`.
pub fn gibbs_increment(
    p_row: &[f64],
    phi_row: &[f64],
    g_row: &[f64],
    q_row: &[f64],
    c: f64,
    rho: f64,
) -> f64 {
    p_row
        .iter()
        .zip(phi_row)
        .zip(g_row.iter().zip(q_row))
        .filter(|((&p, _), _)| p > 0.0)
        .map(|((&p, &phi), (&g, &q))| phi * p * ((1.0 + rho + c * g) * q / p).ln())
        .sum()
}

fn check_lengths(p: &[f64], phi: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != phi.len() || p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "row lengths differ: p {}, phi {}, q {}",
            p.len(),
            phi.len(),
            q.len()
        )));
    }
    Ok(())
}
