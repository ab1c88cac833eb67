//! Optimal proportional fractions for finite-state markets.
//!
//! Every solver works on one conditioning state at a time and uses the
//! unified gross factor `1 + rho_eff + D . g*`, where `rho_eff` is zero and
//! `g* = g` without a riskless asset.

mod closed_form;
mod growth;
pub(crate) mod multiasset;
mod scalar;

pub use closed_form::{closed_form_binary, closed_form_binary_riskless};
pub use growth::{expected_growth, state_growth, GrowthReport};
pub use multiasset::{optimize_multiasset, optimize_multiasset_with, MultiAssetSolution};
pub use scalar::{
    balance_scalar, beta_scalar, feasibility_interval, solve_balance_scalar,
    solve_balance_scalar_with, FeasibilityInterval, ScalarSolution, EPS_OPEN,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stationary_distribution, Scenario};

/// Tolerance on the balance residual for an `InteriorRoot` verdict.
pub const BALANCE_TOL: f64 = 1e-10;

/// Whether uninvested capital earns a riskless rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Uninvested capital is kept as is.
    Scheme1,
    /// Uninvested capital earns the riskless rate.
    Scheme2,
}

/// Per-state investment fractions, one entry per risky asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFractions {
    pub fractions: Vec<Vec<f64>>,
    pub mode: Scheme,
}

impl PolicyFractions {
    /// The policy that never invests.
    pub fn zeros(num_states: usize, num_assets: usize, mode: Scheme) -> Self {
        PolicyFractions {
            fractions: vec![vec![0.0; num_assets]; num_states],
            mode,
        }
    }

    /// Checks sign, sustainability and no-ruin constraints in every state.
    pub fn check_feasible(&self, scenario: &Scenario) -> Result<()> {
        let m = scenario.num_states();
        let k = scenario.assets.num_assets();
        if self.fractions.len() != m || self.fractions.iter().any(|d| d.len() != k) {
            return Err(Error::InvalidInput(format!(
                "policy must have {m} rows of {k} fractions"
            )));
        }
        for (i, d) in self.fractions.iter().enumerate() {
            if d.iter().any(|&x| !(x >= 0.0)) {
                return Err(Error::InvalidInput(format!(
                    "state {i}: fractions must be >= 0"
                )));
            }
            if d.iter().sum::<f64>() >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "state {i}: fractions must sum to less than 1"
                )));
            }
            for kk in 0..m {
                let factor = scenario.assets.growth_factor(i, kk, d);
                if factor < scenario.b {
                    return Err(Error::InvalidInput(format!(
                        "state {i}: gross factor {factor} on outcome {kk} is below b = {}",
                        scenario.b
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How a state's optimum was reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// The balance equation holds on every invested asset.
    InteriorRoot,
    /// Nothing is invested.
    Zero,
    /// Extension: the constrained maximiser of the growth rate on the edge
    /// of the no-ruin region, where the balance equation fails.
    Boundary,
    /// Multi-asset only: the point maximises growth along its own ray and
    /// satisfies the scalar balance `D . grad = 0`, but not the per-asset
    /// equations.
    WeakBalance,
}

/// What to return when the balance root lies outside the no-ruin region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootPolicy {
    /// Invest nothing unless a balance point is feasible.
    #[default]
    ZeroFallback,
    /// Return the feasible maximiser of the growth rate and flag it.
    FeasibleBoundary,
}

/// Solver output for a whole scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub fractions: PolicyFractions,
    pub per_state_branch: Vec<Branch>,
    /// Largest balance residual over invested assets, per state.
    pub balance_residual: Vec<f64>,
    pub growth_rate: GrowthRate,
    /// States whose optimal set contains more than one point.
    pub degenerate: Vec<bool>,
    /// States whose fractions sit within `EPS_OPEN` of the sum-to-one bound.
    pub at_open_bound: Vec<bool>,
    pub iterations: Vec<usize>,
    pub root_policy: RootPolicy,
}

/// Expected weighted growth per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRate {
    pub per_state_beta: Vec<f64>,
    /// Distribution the aggregate is taken under.
    pub start_distribution: Vec<f64>,
    /// `sum_i start(i) beta(i)`; equals `E_n / n` when the start is invariant.
    pub aggregate_per_step: f64,
}

/// Options shared by the discrete solvers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub root_policy: RootPolicy,
}

/// Solves every state of a validated scenario.
///
/// One risky asset uses the scalar bisection solver; several use the
/// polytope maximiser. The aggregate growth rate is taken under the
/// stationary distribution reached from the model's initial law.
pub fn optimize_scenario(scenario: &Scenario, options: SolveOptions) -> Result<OptimizationReport> {
    let m = scenario.num_states();
    let k = scenario.assets.num_assets();
    let rho = scenario.rho_eff();
    let mode = if scenario.assets.riskless_rate.is_some() {
        Scheme::Scheme2
    } else {
        Scheme::Scheme1
    };
    let mut fractions = Vec::with_capacity(m);
    let mut branches = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    let mut degenerate = Vec::with_capacity(m);
    let mut at_open = Vec::with_capacity(m);
    let mut iterations = Vec::with_capacity(m);
    for i in 0..m {
        let p = scenario.model.row(i);
        let phi = scenario.weights.row(i);
        let g = scenario.assets.effective_rows(i);
        if k == 1 {
            let sol =
                solve_balance_scalar_with(p, phi, &g[0], scenario.b, rho, options.root_policy)?;
            fractions.push(vec![sol.fraction]);
            branches.push(sol.branch);
            residuals.push(sol.residual);
            degenerate.push(false);
            at_open.push(sol.at_open_bound);
            iterations.push(sol.iterations);
        } else {
            let sol = optimize_multiasset_with(p, phi, &g, scenario.b, rho, options.root_policy)?;
            fractions.push(sol.fractions);
            branches.push(sol.branch);
            residuals.push(sol.residual);
            degenerate.push(sol.degenerate);
            at_open.push(sol.at_open_bound);
            iterations.push(sol.iterations);
        }
    }
    let policy = PolicyFractions { fractions, mode };
    let start = stationary_distribution(&scenario.model)?;
    let per_state_beta = (0..m)
        .map(|i| state_growth(scenario, i, &policy.fractions[i]))
        .collect::<Result<Vec<_>>>()?;
    let aggregate = start.iter().zip(&per_state_beta).map(|(a, b)| a * b).sum();
    Ok(OptimizationReport {
        fractions: policy,
        per_state_branch: branches,
        balance_residual: residuals,
        growth_rate: GrowthRate {
            per_state_beta,
            start_distribution: start,
            aggregate_per_step: aggregate,
        },
        degenerate,
        at_open_bound: at_open,
        iterations,
        root_policy: options.root_policy,
    })
}
