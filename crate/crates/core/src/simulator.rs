//! Monte Carlo paths of capital, weighted log growth and cumulative entropy.
//!
//! Replicate `r` draws from its own ChaCha8 stream seeded with
//! [`sub_seed`]`(seed, r)`, so every path depends only on the master seed
//! and its index. Replicates run on a rayon pool and are collected in index
//! order; summary statistics are reduced sequentially in that order. The
//! output is therefore identical for any thread count, and any subset of
//! replicates can be replayed on its own.

use std::io::Write;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{entropy_profile, CalibratingFunction, EntropyProfile};
use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::optimizer_continuous::{ContinuousAsset, DensityModel};
use crate::optimizer_discrete::PolicyFractions;

/// Replicates needed before a normal-approximation verdict is issued.
pub const MIN_REPLICATES: usize = 30;

/// Tolerance on the `(q, g)` balance sum before a step is flagged.
pub const BALANCE_FLAG_TOL: f64 = 1e-9;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Seed of replicate `replicate`: the SplitMix64 output function applied
/// to `seed + (replicate + 1) * GOLDEN_GAMMA` (wrapping).
///
/// The output function is a bijection of `u64` and the odd multiplier makes
/// the inputs distinct, so different replicates never share a seed.
pub fn sub_seed(seed: u64, replicate: u64) -> u64 {
    let mut z = seed.wrapping_add(replicate.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A fraction-of-capital rule that sees only the step index and the states
/// observed so far (`history[0..=step]`).
pub trait PredictableRule: Send + Sync {
    fn fractions(&self, step: usize, history: &[usize]) -> Vec<f64>;
}

impl<F> PredictableRule for F
where
    F: Fn(usize, &[usize]) -> Vec<f64> + Send + Sync,
{
    fn fractions(&self, step: usize, history: &[usize]) -> Vec<f64> {
        self(step, history)
    }
}

/// How much is invested at each step.
#[derive(Clone)]
pub enum Policy {
    /// Fixed fractions per current state.
    Fractions(PolicyFractions),
    /// Arbitrary predictable rule, checked at every step.
    Rule(Arc<dyn PredictableRule>),
}

impl std::fmt::Debug for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Policy::Fractions(p) => f.debug_tuple("Fractions").field(p).finish(),
            Policy::Rule(_) => f.write_str("Rule(..)"),
        }
    }
}

/// Run settings.
#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    /// Initial capital.
    pub z0: f64,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
    pub policy: Policy,
}

impl SimulationConfig {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 || self.replicates == 0 {
            return Err(Error::InvalidInput(
                "horizon and replicates must be at least 1".to_string(),
            ));
        }
        if !(self.z0 > 0.0 && self.z0.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "z0 = {} must be positive",
                self.z0
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidInput(
                "threads must be at least 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Step at which a rule broke the sign, sum or no-ruin constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuinEvent {
    pub step: usize,
    /// Smallest gross factor over outcomes, or `NaN` for a sign or sum breach.
    pub factor: f64,
}

/// One simulated path. Index `j` holds values after `j` trials.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub replicate: usize,
    pub states: Vec<usize>,
    pub capital: Vec<f64>,
    pub s_values: Vec<f64>,
    pub a_values: Vec<f64>,
    /// Steps where a positive stake met a nonzero `(q, g)` balance sum.
    pub balance_flags: Vec<usize>,
    /// Set when the path was cut short by an inadmissible stake.
    pub ruin: Option<RuinEvent>,
}

/// End-of-path values, enough for the martingale statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub replicate: usize,
    pub steps: usize,
    pub final_capital: f64,
    pub final_s: f64,
    pub final_a: f64,
    pub balance_flags: usize,
    pub ruin: Option<RuinEvent>,
}

impl PathRecord {
    pub fn summary(&self) -> PathSummary {
        let n = self.capital.len() - 1;
        PathSummary {
            replicate: self.replicate,
            steps: n,
            final_capital: self.capital[n],
            final_s: self.s_values[n],
            final_a: self.a_values[n],
            balance_flags: self.balance_flags.len(),
            ruin: self.ruin,
        }
    }
}

fn draw(cdf: &[f64], u: f64) -> usize {
    let k = cdf.partition_point(|&c| c <= u);
    k.min(cdf.len() - 1)
}

fn cdfs(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rows.iter()
        .map(|row| {
            let mut acc = 0.0;
            let mut out: Vec<f64> = row
                .iter()
                .map(|p| {
                    acc += p;
                    acc
                })
                .collect();
            // the last state with positive mass absorbs rounding
            if let Some(last) = row.iter().rposition(|&p| p > 0.0) {
                for c in &mut out[last..] {
                    *c = f64::INFINITY;
                }
            }
            out
        })
        .collect()
}

struct Engine<'a> {
    scenario: &'a Scenario,
    profile: EntropyProfile,
    q: &'a CalibratingFunction,
    initial_cdf: Vec<f64>,
    row_cdfs: Vec<Vec<f64>>,
    config: &'a SimulationConfig,
}

impl<'a> Engine<'a> {
    fn new(
        config: &'a SimulationConfig,
        scenario: &'a Scenario,
        q: &'a CalibratingFunction,
    ) -> Result<Self> {
        config.validate()?;
        let m = scenario.num_states();
        if q.values.len() != m || q.values.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidInput(format!(
                "calibrating function must be {m} x {m}"
            )));
        }
        let profile = entropy_profile(&scenario.model, &scenario.weights, q)?;
        let engine = Engine {
            scenario,
            profile,
            q,
            initial_cdf: cdfs(std::slice::from_ref(&scenario.model.initial)).remove(0),
            row_cdfs: cdfs(&scenario.model.transition),
            config,
        };
        match &config.policy {
            Policy::Fractions(p) => p.check_feasible(scenario)?,
            Policy::Rule(rule) => {
                for i in 0..m {
                    if scenario.model.initial[i] > 0.0 {
                        let c = rule.fractions(0, &[i]);
                        if let Some(e) = engine.admissibility(0, i, &c) {
                            return Err(Error::RuinViolation {
                                replicate: 0,
                                step: 0,
                                factor: e.factor,
                                threshold: scenario.b,
                            });
                        }
                    }
                }
            }
        }
        Ok(engine)
    }

    /// `None` when the stake is admissible in state `i`.
    fn admissibility(&self, step: usize, i: usize, c: &[f64]) -> Option<RuinEvent> {
        let k = self.scenario.assets.num_assets();
        if c.len() != k || c.iter().any(|&v| !(v >= 0.0)) || c.iter().sum::<f64>() >= 1.0 {
            return Some(RuinEvent {
                step,
                factor: f64::NAN,
            });
        }
        let worst = (0..self.scenario.num_states())
            .map(|l| self.scenario.assets.growth_factor(i, l, c))
            .fold(f64::INFINITY, f64::min);
        if worst < self.scenario.b {
            return Some(RuinEvent {
                step,
                factor: worst,
            });
        }
        None
    }

    fn balance_sum(&self, i: usize, c: &[f64]) -> f64 {
        let phi = self.scenario.weights.row(i);
        let q = self.q.row(i);
        c.iter()
            .enumerate()
            .map(|(s, &cs)| {
                cs * (0..phi.len())
                    .map(|l| phi[l] * q[l] * self.scenario.assets.effective(s, i, l))
                    .sum::<f64>()
            })
            .sum()
    }

    fn run(&self, replicate: usize) -> PathRecord {
        let n = self.config.horizon;
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.config.seed, replicate as u64));
        let mut states = Vec::with_capacity(n + 1);
        let mut capital = Vec::with_capacity(n + 1);
        let mut s_values = Vec::with_capacity(n + 1);
        let mut a_values = Vec::with_capacity(n + 1);
        let mut flags = Vec::new();
        let mut ruin = None;
        states.push(draw(&self.initial_cdf, rng.gen::<f64>()));
        capital.push(self.config.z0);
        s_values.push(0.0);
        a_values.push(0.0);
        for step in 0..n {
            let i = states[step];
            let c = match &self.config.policy {
                Policy::Fractions(p) => p.fractions[i].clone(),
                Policy::Rule(rule) => {
                    let c = rule.fractions(step, &states);
                    if let Some(e) = self.admissibility(step, i, &c) {
                        ruin = Some(e);
                        break;
                    }
                    c
                }
            };
            if c.iter().any(|&v| v > 0.0) && self.balance_sum(i, &c).abs() > BALANCE_FLAG_TOL {
                flags.push(step);
            }
            let k = draw(&self.row_cdfs[i], rng.gen::<f64>());
            let factor = self.scenario.assets.growth_factor(i, k, &c);
            states.push(k);
            capital.push(capital[step] * factor);
            s_values.push(s_values[step] + self.scenario.weights.weights[i][k] * factor.ln());
            a_values.push(a_values[step] + self.profile.alpha[i]);
        }
        PathRecord {
            replicate,
            states,
            capital,
            s_values,
            a_values,
            balance_flags: flags,
            ruin,
        }
    }
}

fn in_pool<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| {
                    Error::InvalidInput(format!("cannot start {t} worker threads: {e}"))
                })?;
            Ok(pool.install(job))
        }
    }
}

/// Simulates every replicate and keeps full paths.
///
/// `q` sets the entropy increments `alpha(state)` and the balance flags.
/// Fixed fractions are checked for admissibility up front; a rule is
/// checked before each stake and a breach ends that path with `ruin` set.
pub fn simulate(
    config: &SimulationConfig,
    scenario: &Scenario,
    q: &CalibratingFunction,
) -> Result<Vec<PathRecord>> {
    let engine = Engine::new(config, scenario, q)?;
    in_pool(config.threads, || {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| engine.run(r))
            .collect()
    })
}

/// Like [`simulate`] but keeps only end-of-path values.
pub fn simulate_summaries(
    config: &SimulationConfig,
    scenario: &Scenario,
    q: &CalibratingFunction,
) -> Result<Vec<PathSummary>> {
    let engine = Engine::new(config, scenario, q)?;
    in_pool(config.threads, || {
        (0..config.replicates)
            .into_par_iter()
            .map(|r| engine.run(r).summary())
            .collect()
    })
}

/// Re-runs the listed replicates (all of them when `subset` is `None`);
/// each path is identical to the same index of a full run.
pub fn replay(
    config: &SimulationConfig,
    scenario: &Scenario,
    q: &CalibratingFunction,
    subset: Option<&[usize]>,
) -> Result<Vec<PathRecord>> {
    let Some(indices) = subset else {
        return simulate(config, scenario, q);
    };
    let engine = Engine::new(config, scenario, q)?;
    if let Some(&bad) = indices.iter().find(|&&r| r >= config.replicates) {
        return Err(Error::InvalidInput(format!(
            "replicate {bad} is out of range for {} replicates",
            config.replicates
        )));
    }
    in_pool(config.threads, || {
        indices.par_iter().map(|&r| engine.run(r)).collect()
    })
}

/// Writes `replicate,step,state,Z,S,A` rows, one per path and step.
pub fn write_paths_csv<W: Write>(writer: W, paths: &[PathRecord], labels: &[String]) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidInput(format!("cannot write paths: {e}"));
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["replicate", "step", "state", "Z", "S", "A"])
        .map_err(io)?;
    for path in paths {
        for j in 0..path.capital.len() {
            let state = labels
                .get(path.states[j])
                .cloned()
                .unwrap_or_else(|| path.states[j].to_string());
            out.write_record([
                path.replicate.to_string(),
                j.to_string(),
                state,
                format!("{:e}", path.capital[j]),
                format!("{:e}", path.s_values[j]),
                format!("{:e}", path.a_values[j]),
            ])
            .map_err(io)?;
        }
    }
    out.flush()
        .map_err(|e| Error::InvalidInput(format!("cannot write paths: {e}")))?;
    Ok(())
}

/// Which claim [`martingale_test`] checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMode {
    Supermartingale,
    Martingale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    ConsistentSupermartingale,
    ConsistentMartingale,
    Violation,
}

/// Sample statistics of `S_n` and `S_n - A_n` with a 3-standard-error verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleTestResult {
    pub mode: TestMode,
    pub replicates: usize,
    /// Paths left out because a rule breached admissibility.
    pub excluded: usize,
    pub mean_gap: f64,
    pub std_error: f64,
    pub mean_s: f64,
    pub std_error_s: f64,
    pub mean_a: f64,
    pub predicted_e: f64,
    /// Gap is below zero by more than three standard errors.
    pub strict: bool,
    pub verdict: Verdict,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Tests `E[S_n - A_n] <= 0` (supermartingale) or `E[S_n] = predicted_e`
/// together with `E[S_n - A_n] = 0` (martingale) at three standard errors.
pub fn martingale_test(
    paths: &[PathSummary],
    predicted_e: f64,
    mode: TestMode,
) -> Result<MartingaleTestResult> {
    let usable: Vec<&PathSummary> = paths.iter().filter(|p| p.ruin.is_none()).collect();
    if usable.len() < MIN_REPLICATES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_REPLICATES} complete replicates, got {}",
            usable.len()
        )));
    }
    let gaps: Vec<f64> = usable.iter().map(|p| p.final_s - p.final_a).collect();
    let s: Vec<f64> = usable.iter().map(|p| p.final_s).collect();
    let a: Vec<f64> = usable.iter().map(|p| p.final_a).collect();
    let (mean_gap, se_gap) = mean_and_se(&gaps);
    let (mean_s, se_s) = mean_and_se(&s);
    let (mean_a, _) = mean_and_se(&a);
    let slack = 1e-12;
    let verdict = match mode {
        TestMode::Supermartingale => {
            if mean_gap > 3.0 * se_gap + slack {
                Verdict::Violation
            } else {
                Verdict::ConsistentSupermartingale
            }
        }
        TestMode::Martingale => {
            if (mean_s - predicted_e).abs() > 3.0 * se_s + slack
                || mean_gap.abs() > 3.0 * se_gap + slack
            {
                Verdict::Violation
            } else {
                Verdict::ConsistentMartingale
            }
        }
    };
    Ok(MartingaleTestResult {
        mode,
        replicates: usable.len(),
        excluded: paths.len() - usable.len(),
        mean_gap,
        std_error: se_gap,
        mean_s,
        std_error_s: se_s,
        mean_a,
        predicted_e,
        strict: mean_gap < -3.0 * se_gap - slack,
        verdict,
    })
}

/// Draws one trial result from `density`.
fn sample_density<R: Rng>(density: &DensityModel, rng: &mut R) -> Result<f64> {
    Ok(match density {
        DensityModel::Uniform { lower, upper } => lower + (upper - lower) * rng.gen::<f64>(),
        DensityModel::Gaussian { sigma } => Normal::new(0.0, *sigma)
            .map_err(|e| Error::InvalidInput(format!("bad normal law: {e}")))?
            .sample(rng),
        DensityModel::Tabulated { points, values } => {
            // invert the piecewise-quadratic distribution function
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for j in 1..points.len() {
                let w = points[j] - points[j - 1];
                let mass = 0.5 * w * (values[j - 1] + values[j]);
                if acc + mass >= u || j + 1 == points.len() {
                    let target = (u - acc).clamp(0.0, mass);
                    let slope = (values[j] - values[j - 1]) / w;
                    let t = if slope.abs() < 1e-14 {
                        target / values[j - 1].max(1e-300)
                    } else {
                        let disc = values[j - 1] * values[j - 1] + 2.0 * slope * target;
                        (disc.max(0.0).sqrt() - values[j - 1]) / slope
                    };
                    return Ok(points[j - 1] + t.clamp(0.0, w));
                }
                acc += mass;
            }
            points[points.len() - 1]
        }
    })
}

/// IID density trials with a constant fraction on one asset.
///
/// Each step adds `phi(x) ln(1 + rho_eff + fraction g(x))` to `S` and
/// `alpha` to `A`. Only end-of-path values are kept.
pub fn simulate_continuous(
    config: &SimulationConfig,
    density: &DensityModel,
    asset: &ContinuousAsset,
    fraction: f64,
    rho_eff: f64,
    alpha: f64,
) -> Result<Vec<PathSummary>> {
    config.validate()?;
    let density = density.normalized()?;
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::InvalidInput(format!(
            "fraction {fraction} must lie in [0, 1)"
        )));
    }
    let run = |r: usize| -> Result<PathSummary> {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, r as u64));
        let (mut z, mut s, mut a) = (config.z0, 0.0, 0.0);
        for step in 0..config.horizon {
            let x = sample_density(&density, &mut rng)?;
            let factor = 1.0 + rho_eff + fraction * asset.returns.value(x);
            if !(factor > 0.0) {
                return Ok(PathSummary {
                    replicate: r,
                    steps: step,
                    final_capital: z,
                    final_s: s,
                    final_a: a,
                    balance_flags: 0,
                    ruin: Some(RuinEvent { step, factor }),
                });
            }
            z *= factor;
            s += asset.weight.value(x) * factor.ln();
            a += alpha;
        }
        Ok(PathSummary {
            replicate: r,
            steps: config.horizon,
            final_capital: z,
            final_s: s,
            final_a: a,
            balance_flags: 0,
            ruin: None,
        })
    };
    in_pool(config.threads, || {
        (0..config.replicates)
            .into_par_iter()
            .map(run)
            .collect::<Result<Vec<_>>>()
    })?
}
