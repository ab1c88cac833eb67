//! Market, asset and weight data shared by the solvers and the simulator.
//!
//! The types here are plain data with public fields so that scenario files
//! can be deserialized into them directly. [`validate_scenario`] reports
//! every broken invariant as data; [`Scenario::new`] runs the same checks,
//! refuses invalid input and renormalises probability rows exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for probability rows and distributions.
pub const PROB_TOL: f64 = 1e-12;

/// Row-major dense matrix.
pub type Matrix = Vec<Vec<f64>>;

/// Finite-state Markov trial process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    /// Outcome labels, in the order used by every matrix index.
    pub states: Vec<String>,
    /// Row-stochastic matrix `transition[i][k]` of one-step probabilities.
    pub transition: Matrix,
    /// Distribution of the first outcome.
    pub initial: Vec<f64>,
    /// True when all rows of `transition` coincide.
    pub iid: bool,
}

impl MarketModel {
    /// Builds a validated model, renormalising rows and `initial` exactly.
    pub fn new(states: Vec<String>, transition: Matrix, initial: Vec<f64>) -> Result<Self> {
        let mut model = MarketModel {
            iid: rows_identical(&transition),
            states,
            transition,
            initial,
        };
        let mut report = ValidationReport::default();
        model.check_into(&mut report);
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        for row in &mut model.transition {
            renormalize(row);
        }
        renormalize(&mut model.initial);
        Ok(model)
    }

    /// IID trials: every row equals `row`, and the first outcome uses it too.
    pub fn iid(states: Vec<String>, row: Vec<f64>) -> Result<Self> {
        let transition = vec![row.clone(); states.len()];
        Self::new(states, transition, row)
    }

    /// Number of outcomes `m`.
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    /// Transition probabilities out of state `i`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.transition[i]
    }

    fn check_into(&self, report: &mut ValidationReport) {
        let m = self.states.len();
        if m < 2 {
            report.push(
                "MarketModel.states",
                format!("need at least 2 states, got {m}"),
            );
        }
        if self.transition.len() != m {
            report.push(
                "MarketModel.transition",
                format!("expected {m} rows, got {}", self.transition.len()),
            );
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != m {
                report.push(
                    "MarketModel.transition",
                    format!("row {i} has {} entries, expected {m}", row.len()),
                );
                continue;
            }
            check_distribution(report, "MarketModel.transition", &format!("row {i}"), row);
        }
        if self.initial.len() != m {
            report.push(
                "MarketModel.initial",
                format!("expected {m} entries, got {}", self.initial.len()),
            );
        } else {
            check_distribution(
                report,
                "MarketModel.initial",
                "initial distribution",
                &self.initial,
            );
        }
        if self.iid && !rows_identical(&self.transition) {
            report.push(
                "MarketModel.iid",
                "iid flag set but transition rows differ by more than 1e-12".to_string(),
            );
        }
    }
}

fn check_distribution(report: &mut ValidationReport, invariant: &str, what: &str, row: &[f64]) {
    for (k, &v) in row.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            report.push(
                invariant,
                format!("{what}: entry {k} is {v}, must be finite and >= 0"),
            );
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > PROB_TOL {
        report.push(
            invariant,
            format!("{what} sums to {sum}, deficit {} from 1", 1.0 - sum),
        );
    }
}

fn rows_identical(transition: &Matrix) -> bool {
    let Some(first) = transition.first() else {
        return true;
    };
    transition.iter().all(|row| {
        row.len() == first.len()
            && row
                .iter()
                .zip(first)
                .all(|(a, b)| (a - b).abs() <= PROB_TOL)
    })
}

fn renormalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    if sum > 0.0 {
        row.iter_mut().for_each(|v| *v /= sum);
    }
}

/// One return matrix per risky asset plus an optional riskless rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetSet {
    /// Asset names, parallel to `returns`.
    pub names: Vec<String>,
    /// `returns[s][i][k]` is the per-unit-stake return of asset `s` on the
    /// transition `i -> k`. With a riskless asset these are gross returns.
    pub returns: Vec<Matrix>,
    /// Riskless rate; its presence switches on the riskless recursion.
    pub riskless_rate: Option<f64>,
}

impl AssetSet {
    /// A single risky asset without a riskless alternative.
    pub fn single(returns: Matrix) -> Self {
        AssetSet {
            names: vec!["asset".to_string()],
            returns: vec![returns],
            riskless_rate: None,
        }
    }

    pub fn num_assets(&self) -> usize {
        self.returns.len()
    }

    /// Rate credited to uninvested capital: the riskless rate, or zero.
    pub fn rho_eff(&self) -> f64 {
        self.riskless_rate.unwrap_or(0.0)
    }

    /// Return of asset `s` on `i -> k` net of the riskless gross return.
    pub fn effective(&self, s: usize, i: usize, k: usize) -> f64 {
        let g = self.returns[s][i][k];
        match self.riskless_rate {
            Some(rho) => g - (1.0 + rho),
            None => g,
        }
    }

    /// Effective returns out of state `i`, one row per asset (`K x m`).
    pub fn effective_rows(&self, i: usize) -> Matrix {
        (0..self.num_assets())
            .map(|s| {
                (0..self.returns[s][i].len())
                    .map(|k| self.effective(s, i, k))
                    .collect()
            })
            .collect()
    }

    /// Gross one-step factor `1 + rho_eff + D . g*(i, k)`.
    pub fn growth_factor(&self, i: usize, k: usize, fractions: &[f64]) -> f64 {
        1.0 + self.rho_eff()
            + fractions
                .iter()
                .enumerate()
                .map(|(s, d)| d * self.effective(s, i, k))
                .sum::<f64>()
    }

    fn check_into(&self, m: usize, report: &mut ValidationReport) {
        if self.returns.is_empty() {
            report.push(
                "AssetSet.returns",
                "at least one risky asset is required".into(),
            );
        }
        if self.names.len() != self.returns.len() {
            report.push(
                "AssetSet.names",
                format!(
                    "{} names for {} assets",
                    self.names.len(),
                    self.returns.len()
                ),
            );
        }
        if let Some(rho) = self.riskless_rate {
            if !rho.is_finite() || rho < 0.0 {
                report.push(
                    "AssetSet.riskless_rate",
                    format!("rho = {rho} must be >= 0"),
                );
            }
        }
        let mut any_nonzero = false;
        for (s, g) in self.returns.iter().enumerate() {
            if g.len() != m || g.iter().any(|row| row.len() != m) {
                report.push(
                    "AssetSet.returns",
                    format!("asset {s}: return matrix must be {m}x{m}"),
                );
                continue;
            }
            for (i, row) in g.iter().enumerate() {
                for (k, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        report.push(
                            "AssetSet.returns",
                            format!("asset {s}: entry ({i},{k}) is not finite"),
                        );
                    }
                    if v != 0.0 {
                        any_nonzero = true;
                    }
                }
            }
        }
        if !self.returns.is_empty() && !any_nonzero {
            report.push(
                "AssetSet.returns",
                "return functions are identically zero".into(),
            );
        }
    }
}

/// Nonnegative utility weights on transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFunction {
    pub weights: Matrix,
}

impl WeightFunction {
    /// The neutral weight, identically one.
    pub fn ones(m: usize) -> Self {
        WeightFunction {
            weights: vec![vec![1.0; m]; m],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.weights[i]
    }

    /// True when every weight equals one.
    pub fn is_unit(&self) -> bool {
        self.weights.iter().flatten().all(|&w| w == 1.0)
    }

    fn check_into(&self, m: usize, report: &mut ValidationReport) {
        if self.weights.len() != m || self.weights.iter().any(|r| r.len() != m) {
            report.push("WeightFunction.weights", format!("weights must be {m}x{m}"));
            return;
        }
        let mut any_positive = false;
        for (i, row) in self.weights.iter().enumerate() {
            for (k, &w) in row.iter().enumerate() {
                if !w.is_finite() || w < 0.0 {
                    report.push(
                        "WeightFunction.weights",
                        format!("weight ({i},{k}) is {w}, must be finite and >= 0"),
                    );
                }
                if w > 0.0 {
                    any_positive = true;
                }
            }
        }
        if !any_positive {
            report.push(
                "WeightFunction.weights",
                "weights are identically zero".into(),
            );
        }
    }
}

/// Lower bound `b` on every one-step gross growth factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuinThreshold {
    pub b: f64,
}

impl RuinThreshold {
    fn check_into(&self, rho: Option<f64>, report: &mut ValidationReport) {
        let b = self.b;
        match rho {
            None if !(b > 0.0 && b < 1.0) => {
                report.push("RuinThreshold.b", format!("b must lie in (0,1), got {b}"));
            }
            Some(rho) if !(b > 0.0 && b < 1.0 + rho) => {
                report.push(
                    "RuinThreshold.b",
                    format!("b must lie in (0, 1+rho) = (0, {}), got {b}", 1.0 + rho),
                );
            }
            _ => {}
        }
    }
}

/// A single broken invariant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted name of the invariant, e.g. `MarketModel.transition`.
    pub invariant: String,
    pub message: String,
}

/// All invariant violations found in a scenario; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: &str, message: String) {
        self.violations.push(Violation {
            invariant: invariant.to_string(),
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .violations
            .iter()
            .map(|v| format!("[{}] {}", v.invariant, v.message))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Lists every violated invariant of the four inputs without modifying them.
pub fn validate_scenario(
    model: &MarketModel,
    assets: &AssetSet,
    weights: &WeightFunction,
    threshold: &RuinThreshold,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let m = model.num_states();
    model.check_into(&mut report);
    assets.check_into(m, &mut report);
    weights.check_into(m, &mut report);
    threshold.check_into(assets.riskless_rate, &mut report);
    report
}

/// A validated bundle of model, assets, weights and ruin threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: MarketModel,
    pub assets: AssetSet,
    pub weights: WeightFunction,
    pub b: f64,
}

impl Scenario {
    /// Validates all inputs and renormalises the probability rows.
    pub fn new(
        mut model: MarketModel,
        assets: AssetSet,
        weights: WeightFunction,
        b: f64,
    ) -> Result<Self> {
        model.iid = model.iid && rows_identical(&model.transition);
        let report = validate_scenario(&model, &assets, &weights, &RuinThreshold { b });
        if !report.is_empty() {
            return Err(Error::Validation(report));
        }
        let model = MarketModel::new(model.states, model.transition, model.initial)?;
        Ok(Scenario {
            model,
            assets,
            weights,
            b,
        })
    }

    pub fn num_states(&self) -> usize {
        self.model.num_states()
    }

    pub fn rho_eff(&self) -> f64 {
        self.assets.rho_eff()
    }
}

const STATIONARY_TOL: f64 = 1e-14;
const STATIONARY_MAX_ITER: usize = 2_000_000;

/// Invariant distribution reached by power iteration from `initial`.
///
/// The iteration uses the lazy chain `(I + P) / 2`, which has the same
/// invariant distributions as `P` but is aperiodic, so periodic chains
/// converge too. When several invariant distributions exist the one
/// reached from `initial` is returned; for the identity matrix that is
/// `initial` itself.
pub fn stationary_distribution(model: &MarketModel) -> Result<Vec<f64>> {
    let m = model.num_states();
    let mut pi = model.initial.clone();
    for _ in 0..STATIONARY_MAX_ITER {
        let next = step_distribution(model, &pi);
        let residual = next
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= STATIONARY_TOL {
            let mut out = next;
            renormalize(&mut out);
            return Ok(out);
        }
        for k in 0..m {
            pi[k] = 0.5 * (pi[k] + next[k]);
        }
    }
    Err(Error::NoConvergence(format!(
        "power iteration did not reach |pi P - pi| <= {STATIONARY_TOL} in {STATIONARY_MAX_ITER} steps"
    )))
}

/// One step of the state distribution: `dist * P`.
pub fn step_distribution(model: &MarketModel, dist: &[f64]) -> Vec<f64> {
    let m = model.num_states();
    let mut next = vec![0.0; m];
    for (i, &w) in dist.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (k, &p) in model.transition[i].iter().enumerate() {
            next[k] += w * p;
        }
    }
    next
}
