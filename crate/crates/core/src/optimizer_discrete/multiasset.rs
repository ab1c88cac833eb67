use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{Branch, RootPolicy, BALANCE_TOL, EPS_OPEN};
use crate::concave::{maximize, min_norm_optimum, ray_search, Objective, Polytope, Vector};
use crate::error::{Error, Result};

/// Weighted log growth of one state as a function of the fraction vector.
pub(crate) struct RowGrowth {
    weights: Vec<f64>,
    returns: Vec<Vector>,
    base: f64,
}

impl RowGrowth {
    pub(crate) fn new(p_row: &[f64], phi_row: &[f64], g: &[Vec<f64>], rho_eff: f64) -> Self {
        let mut weights = Vec::new();
        let mut returns = Vec::new();
        for k in 0..p_row.len() {
            if p_row[k] > 0.0 {
                weights.push(p_row[k] * phi_row[k]);
                returns.push(Vector::from_iterator(g.len(), g.iter().map(|row| row[k])));
            }
        }
        RowGrowth {
            weights,
            returns,
            base: 1.0 + rho_eff,
        }
    }

    fn factors(&self, x: &Vector) -> Result<Vec<f64>> {
        self.returns
            .iter()
            .map(|g| {
                let f = self.base + g.dot(x);
                if f > 0.0 {
                    Ok(f)
                } else {
                    Err(Error::InvalidInput(format!(
                        "gross factor {f} is not positive"
                    )))
                }
            })
            .collect()
    }
}

impl Objective for RowGrowth {
    fn dim(&self) -> usize {
        self.returns.first().map_or(0, |g| g.len())
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        let f = self.factors(x)?;
        Ok(self.weights.iter().zip(f).map(|(w, f)| w * f.ln()).sum())
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        let f = self.factors(x)?;
        let mut out = Vector::zeros(x.len());
        for ((w, g), f) in self.weights.iter().zip(&self.returns).zip(f) {
            out += g * (w / f);
        }
        Ok(out)
    }

    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>> {
        let f = self.factors(x)?;
        let n = x.len();
        let mut out = DMatrix::zeros(n, n);
        for ((w, g), f) in self.weights.iter().zip(&self.returns).zip(f) {
            out -= g * g.transpose() * (w / (f * f));
        }
        Ok(out)
    }
}

/// Sign, sum and no-ruin constraints on `K` fractions.
///
/// `outcome_returns[k]` is the effective return vector on outcome `k`.
pub(crate) fn fraction_polytope(
    k: usize,
    outcome_returns: &[Vec<f64>],
    b: f64,
    rho_eff: f64,
) -> Polytope {
    let mut poly = Polytope::new();
    for s in 0..k {
        let mut row = vec![0.0; k];
        row[s] = -1.0;
        poly.push(row, 0.0);
    }
    poly.push(vec![1.0; k], 1.0 - EPS_OPEN);
    for g in outcome_returns {
        poly.push(g.iter().map(|v| -v).collect(), 1.0 + rho_eff - b);
    }
    poly
}

/// Multi-asset solver output for one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiAssetSolution {
    pub fractions: Vec<f64>,
    pub branch: Branch,
    /// Weighted growth at `fractions`.
    pub value: f64,
    /// Largest `|d beta / d D_s|` over assets with `D_s > 0`.
    pub residual: f64,
    /// `D . grad beta(D)`, zero at every balance point.
    pub weak_residual: f64,
    pub degenerate: bool,
    pub at_open_bound: bool,
    pub iterations: usize,
}

/// Optimal fraction vector for one state, investing nothing when no
/// balance point is feasible.
///
/// `g` holds one row of effective returns per asset (`K x m`).
pub fn optimize_multiasset(
    p_row: &[f64],
    phi_row: &[f64],
    g: &[Vec<f64>],
    b: f64,
    rho_eff: f64,
) -> Result<MultiAssetSolution> {
    optimize_multiasset_with(p_row, phi_row, g, b, rho_eff, RootPolicy::ZeroFallback)
}

/// [`optimize_multiasset`] with an explicit policy for infeasible roots.
pub fn optimize_multiasset_with(
    p_row: &[f64],
    phi_row: &[f64],
    g: &[Vec<f64>],
    b: f64,
    rho_eff: f64,
    policy: RootPolicy,
) -> Result<MultiAssetSolution> {
    let k = g.len();
    let m = p_row.len();
    if k == 0 || g.iter().any(|row| row.len() != m) || phi_row.len() != m {
        return Err(Error::InvalidInput(format!(
            "expected {m} weights and {k} return rows of length {m}"
        )));
    }
    if 1.0 + rho_eff < b {
        return Err(Error::Infeasible(format!(
            "1 + rho = {} is below the ruin threshold b = {b}",
            1.0 + rho_eff
        )));
    }
    let objective = RowGrowth::new(p_row, phi_row, g, rho_eff);
    let outcome_returns: Vec<Vec<f64>> = (0..m)
        .map(|kk| g.iter().map(|row| row[kk]).collect())
        .collect();
    let poly = fraction_polytope(k, &outcome_returns, b, rho_eff);
    solve_on_polytope(&objective, &poly, policy)
}

/// Shared driver: maximise, apply the root policy, pick the min-norm point
/// of the optimal face and classify it.
pub(crate) fn solve_on_polytope<O: Objective>(
    objective: &O,
    poly: &Polytope,
    policy: RootPolicy,
) -> Result<MultiAssetSolution> {
    let k = objective.dim();
    let origin = Vector::zeros(k);
    let best = maximize(objective, poly, &origin)?;
    let grad = objective.gradient(&best.point)?;
    let weak = best.point.dot(&grad);
    let candidate = match policy {
        RootPolicy::FeasibleBoundary => best.point.clone(),
        RootPolicy::ZeroFallback if weak.abs() <= BALANCE_TOL => best.point.clone(),
        RootPolicy::ZeroFallback => match ray_search(objective, poly)? {
            Some((x, _)) => x,
            None => origin.clone(),
        },
    };
    let (mut x, degenerate) = min_norm_optimum(objective, poly, &candidate)?;
    x.iter_mut().for_each(|v| {
        if *v < 1e-15 {
            *v = 0.0
        }
    });
    let value = objective.value(&x)?;
    let grad = objective.gradient(&x)?;
    let weak_residual = x.dot(&grad);
    let residual = (0..k)
        .filter(|&s| x[s] > 0.0)
        .map(|s| grad[s].abs())
        .fold(0.0, f64::max);
    let branch = if x.iter().all(|&v| v == 0.0) {
        Branch::Zero
    } else if residual <= BALANCE_TOL {
        Branch::InteriorRoot
    } else if weak_residual.abs() <= BALANCE_TOL {
        Branch::WeakBalance
    } else {
        Branch::Boundary
    };
    let at_open_bound = x.sum() >= 1.0 - EPS_OPEN - 1e-12;
    Ok(MultiAssetSolution {
        fractions: x.iter().cloned().collect(),
        branch,
        value,
        residual,
        weak_residual,
        degenerate,
        at_open_bound,
        iterations: best.iterations,
    })
}
