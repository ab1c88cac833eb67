use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use serde::Serialize;

use super::scenario::{Market, ScenarioConfig};
use super::{CliError, EXIT_OK, EXIT_VIOLATION};
use crate::entropy::{
    calibrating_from_fractions, check_dominance, check_q_normalization, gibbs_increment,
    CalibratingFunction, DominanceReport,
};
use crate::model::Scenario;
use crate::optimizer_continuous::{
    solve_balance_continuous_with, ContinuousAsset, ContinuousOptions, ContinuousSolution,
    DensityModel,
};
use crate::optimizer_discrete::{
    expected_growth, optimize_scenario, OptimizationReport, PolicyFractions, RootPolicy, Scheme,
    SolveOptions,
};
use crate::simulator::{
    martingale_test, simulate, simulate_continuous, simulate_summaries, write_paths_csv,
    MartingaleTestResult, PathSummary, Policy, SimulationConfig, TestMode, Verdict,
    BALANCE_FLAG_TOL,
};

/// The three workflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Simulate,
    Check,
}

/// Command-line settings that complement the scenario file. Simulation
/// counts given here take precedence over the file's `run` block.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub horizon: Option<usize>,
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    /// Where to write per-step path rows (discrete scenarios only).
    pub paths: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub states: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discrete: Option<OptimizationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousSolution>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateReport {
    pub horizon: usize,
    pub replicates: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    /// Per-state fractions that were simulated.
    pub fractions: Vec<Vec<f64>>,
    /// True when the simulated policy is the optimum and the calibrating
    /// function was built from it; the test then checks the martingale
    /// claim instead of the supermartingale one.
    pub optimal_pair: bool,
    /// Expected weighted log growth over the horizon.
    pub predicted_e: f64,
    pub test: MartingaleTestResult,
    /// Replicates with at least one step breaking the `(q, g)` balance.
    pub paths_with_balance_flags: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paths_file: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Feasibility {
    pub ok: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuousCheck {
    pub mass: f64,
    pub solution: ContinuousSolution,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub states: Vec<String>,
    pub feasibility: Feasibility,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dominance: Option<DominanceReport>,
    /// Per state: the calibrating row sums to one.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub normalized_rows: Vec<bool>,
    /// Per state: `sum_s c_s sum_l phi q g*_s`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub balance_sums: Vec<f64>,
    /// Per state: expected one-step increment of `S - A`.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub gibbs_increments: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousCheck>,
    pub violation: bool,
}

/// Output of one run.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Report {
    Solve(SolveReport),
    Simulate(SimulateReport),
    Check(CheckReport),
}

impl Report {
    /// Whether the run completed but found a violated property.
    pub fn is_violation(&self) -> bool {
        match self {
            Report::Solve(_) => false,
            Report::Simulate(r) => r.test.verdict == Verdict::Violation,
            Report::Check(r) => r.violation,
        }
    }

    pub fn exit_code(&self) -> i32 {
        if self.is_violation() {
            EXIT_VIOLATION
        } else {
            EXIT_OK
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// Human-readable summary.
    pub fn table(&self) -> String {
        let mut s = String::new();
        match self {
            Report::Solve(r) => {
                if let Some(d) = &r.discrete {
                    let _ = writeln!(
                        s,
                        "{:<12} {:<14} {:>12} {:>12}  fractions",
                        "state", "branch", "residual", "beta"
                    );
                    for (i, label) in r.states.iter().enumerate() {
                        let _ = writeln!(
                            s,
                            "{:<12} {:<14} {:>12.3e} {:>12.6}  {:?}",
                            label,
                            kebab_name(&d.per_state_branch[i])
                                + if d.degenerate[i] { "*" } else { "" },
                            d.balance_residual[i],
                            d.growth_rate.per_state_beta[i],
                            d.fractions.fractions[i]
                        );
                    }
                    if d.degenerate.iter().any(|&x| x) {
                        let _ = writeln!(
                            s,
                            "* optimum is not unique; the minimum-norm maximiser is shown"
                        );
                    }
                    let _ = writeln!(
                        s,
                        "growth per step: {:.10}",
                        d.growth_rate.aggregate_per_step
                    );
                }
                if let Some(c) = &r.continuous {
                    let _ = writeln!(s, "fraction: {:.12}", c.fraction);
                    let _ = writeln!(s, "branch:   {}", kebab_name(&c.branch));
                    let _ = writeln!(s, "residual: {:.3e}", c.residual);
                    let _ = writeln!(s, "growth:   {:.10}", c.growth);
                    let _ = writeln!(s, "upper:    {:.12}", c.upper);
                }
            }
            Report::Simulate(r) => {
                let t = &r.test;
                let _ = writeln!(
                    s,
                    "replicates: {} x {} steps (seed {})",
                    r.replicates, r.horizon, r.seed
                );
                let _ = writeln!(
                    s,
                    "mean S_n:   {:.6} +/- {:.6} (predicted {:.6})",
                    t.mean_s, t.std_error_s, r.predicted_e
                );
                let _ = writeln!(s, "mean A_n:   {:.6}", t.mean_a);
                let _ = writeln!(s, "mean gap:   {:.6e} +/- {:.6e}", t.mean_gap, t.std_error);
                let _ = writeln!(s, "verdict:    {}", kebab_name(&t.verdict));
            }
            Report::Check(r) => {
                let _ = writeln!(s, "policy feasible: {}", r.feasibility.ok);
                if let Some(m) = &r.feasibility.message {
                    let _ = writeln!(s, "  {m}");
                }
                if let Some(d) = &r.dominance {
                    let _ = writeln!(
                        s,
                        "{:<12} {:>12} {:>10} {:>12} {:>12}",
                        "state", "dominance", "q sums 1", "balance", "gibbs"
                    );
                    for (i, label) in r.states.iter().enumerate() {
                        let _ = writeln!(
                            s,
                            "{:<12} {:>12.3e} {:>10} {:>12.3e} {:>12.3e}",
                            label,
                            d.slack[i],
                            r.normalized_rows[i],
                            r.balance_sums[i],
                            r.gibbs_increments[i]
                        );
                    }
                }
                if let Some(c) = &r.continuous {
                    let _ = writeln!(s, "density mass: {:.12}", c.mass);
                    let _ = writeln!(s, "fraction bound: {:.12}", c.solution.upper);
                    let _ = writeln!(s, "root beyond bound: {}", c.solution.root_beyond_upper);
                }
                let _ = writeln!(s, "violation: {}", r.violation);
            }
        }
        s
    }
}

fn kebab_name<T: Serialize>(b: &T) -> String {
    serde_json::to_value(b)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Runs one workflow on a validated config.
pub fn run_scenario(
    config: &ScenarioConfig,
    command: Command,
    options: &RunOptions,
) -> Result<Report, CliError> {
    let market = config.market()?;
    match (command, market) {
        (Command::Solve, Market::Discrete(sc)) => Ok(Report::Solve(SolveReport {
            states: sc.model.states.clone(),
            discrete: Some(optimize_scenario(&sc, solve_options(config))?),
            continuous: None,
        })),
        (
            Command::Solve,
            Market::Continuous {
                density,
                asset,
                b,
                rho_eff,
            },
        ) => Ok(Report::Solve(SolveReport {
            states: Vec::new(),
            discrete: None,
            continuous: Some(solve_continuous(config, &density, &asset, b, rho_eff)?),
        })),
        (Command::Simulate, Market::Discrete(sc)) => {
            simulate_discrete(config, &sc, options).map(Report::Simulate)
        }
        (
            Command::Simulate,
            Market::Continuous {
                density,
                asset,
                b,
                rho_eff,
            },
        ) => simulate_density(config, &density, &asset, b, rho_eff, options).map(Report::Simulate),
        (Command::Check, Market::Discrete(sc)) => check_discrete(config, &sc).map(Report::Check),
        (
            Command::Check,
            Market::Continuous {
                density,
                asset,
                b,
                rho_eff,
            },
        ) => {
            let solution = solve_continuous(config, &density, &asset, b, rho_eff)?;
            let mass = density.check_mass(&continuous_options(config).quadrature)?;
            Ok(Report::Check(CheckReport {
                states: Vec::new(),
                feasibility: Feasibility {
                    ok: true,
                    message: None,
                },
                dominance: None,
                normalized_rows: Vec::new(),
                balance_sums: Vec::new(),
                gibbs_increments: Vec::new(),
                continuous: Some(ContinuousCheck { mass, solution }),
                violation: false,
            }))
        }
    }
}

fn solve_options(config: &ScenarioConfig) -> SolveOptions {
    SolveOptions {
        root_policy: config.root_policy.unwrap_or(RootPolicy::ZeroFallback),
    }
}

fn continuous_options(config: &ScenarioConfig) -> ContinuousOptions {
    let mut options = ContinuousOptions::default();
    if let Some(p) = config.root_policy {
        options.root_policy = p;
    }
    if let Some(q) = config.quadrature {
        options.quadrature = q;
    }
    options
}

fn solve_continuous(
    config: &ScenarioConfig,
    density: &DensityModel,
    asset: &ContinuousAsset,
    b: f64,
    rho_eff: f64,
) -> Result<ContinuousSolution, CliError> {
    Ok(solve_balance_continuous_with(
        density,
        asset,
        b,
        rho_eff,
        &continuous_options(config),
    )?)
}

fn scheme(sc: &Scenario) -> Scheme {
    if sc.assets.riskless_rate.is_some() {
        Scheme::Scheme2
    } else {
        Scheme::Scheme1
    }
}

/// The configured policy (or the solved optimum), the calibrating
/// function (configured, or built from the optimum), and whether the
/// pair is the optimum with its own calibrating function.
fn policy_and_calibrating(
    config: &ScenarioConfig,
    sc: &Scenario,
) -> Result<(PolicyFractions, CalibratingFunction, bool), CliError> {
    let optimum = || -> Result<PolicyFractions, CliError> {
        Ok(optimize_scenario(sc, solve_options(config))?.fractions)
    };
    let policy = match &config.policy {
        Some(f) => PolicyFractions {
            fractions: f.clone(),
            mode: scheme(sc),
        },
        None => optimum()?,
    };
    let (q, matched) = match &config.calibrating {
        Some(q) => (CalibratingFunction::new(q.clone())?, false),
        None => {
            let best = if config.policy.is_some() {
                optimum()?
            } else {
                policy.clone()
            };
            (
                calibrating_from_fractions(&sc.model, &best, &sc.assets)?,
                config.policy.is_none(),
            )
        }
    };
    Ok((policy, q, matched))
}

fn sim_config(
    config: &ScenarioConfig,
    options: &RunOptions,
    policy: Policy,
) -> Result<SimulationConfig, CliError> {
    let run = config.run;
    let pick = |cli: Option<usize>, file: Option<usize>, name: &str| {
        cli.or(file).ok_or_else(|| {
            CliError::Usage(format!(
                "--{name} is required when the scenario has no `run` block"
            ))
        })
    };
    Ok(SimulationConfig {
        horizon: pick(options.horizon, run.map(|r| r.horizon), "horizon")?,
        replicates: pick(options.replicates, run.map(|r| r.replicates), "replicates")?,
        seed: options.seed.or(run.map(|r| r.seed)).ok_or_else(|| {
            CliError::Usage("--seed is required when the scenario has no `run` block".into())
        })?,
        z0: run.map(|r| r.z0).unwrap_or(1.0),
        threads: options.threads,
        policy,
    })
}

fn simulate_discrete(
    config: &ScenarioConfig,
    sc: &Scenario,
    options: &RunOptions,
) -> Result<SimulateReport, CliError> {
    let (policy, q, calibrated) = policy_and_calibrating(config, sc)?;
    policy.check_feasible(sc)?;
    let cfg = sim_config(config, options, Policy::Fractions(policy.clone()))?;
    let predicted_e = expected_growth(
        &policy,
        &sc.model,
        &sc.assets,
        &sc.weights,
        &sc.model.initial,
        cfg.horizon,
    )?
    .expected_total;
    let (summaries, paths_file): (Vec<PathSummary>, Option<String>) = match &options.paths {
        Some(path) => {
            let paths = simulate(&cfg, sc, &q)?;
            let file =
                File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            write_paths_csv(BufWriter::new(file), &paths, &sc.model.states)?;
            (
                paths.iter().map(|p| p.summary()).collect(),
                Some(path.display().to_string()),
            )
        }
        None => (simulate_summaries(&cfg, sc, &q)?, None),
    };
    let mode = if calibrated {
        TestMode::Martingale
    } else {
        TestMode::Supermartingale
    };
    let test = martingale_test(&summaries, predicted_e, mode)?;
    Ok(SimulateReport {
        horizon: cfg.horizon,
        replicates: cfg.replicates,
        seed: cfg.seed,
        threads: cfg.threads,
        fractions: policy.fractions,
        optimal_pair: calibrated,
        predicted_e,
        test,
        paths_with_balance_flags: summaries.iter().filter(|s| s.balance_flags > 0).count(),
        paths_file,
    })
}

fn simulate_density(
    config: &ScenarioConfig,
    density: &DensityModel,
    asset: &ContinuousAsset,
    b: f64,
    rho_eff: f64,
    options: &RunOptions,
) -> Result<SimulateReport, CliError> {
    if options.paths.is_some() {
        return Err(CliError::Usage(
            "--paths is available for discrete scenarios only".into(),
        ));
    }
    let solution = solve_continuous(config, density, asset, b, rho_eff)?;
    let cfg = sim_config(
        config,
        options,
        Policy::Fractions(PolicyFractions {
            fractions: vec![vec![solution.fraction]],
            mode: Scheme::Scheme1,
        }),
    )?;
    // with q = p / factor the per-step entropy equals the growth rate
    let alpha = solution.growth;
    let summaries = simulate_continuous(&cfg, density, asset, solution.fraction, rho_eff, alpha)?;
    let predicted_e = alpha * cfg.horizon as f64;
    let test = martingale_test(&summaries, predicted_e, TestMode::Martingale)?;
    Ok(SimulateReport {
        horizon: cfg.horizon,
        replicates: cfg.replicates,
        seed: cfg.seed,
        threads: cfg.threads,
        fractions: vec![vec![solution.fraction]],
        optimal_pair: true,
        predicted_e,
        test,
        paths_with_balance_flags: 0,
        paths_file: None,
    })
}

fn check_discrete(config: &ScenarioConfig, sc: &Scenario) -> Result<CheckReport, CliError> {
    let (policy, q, _) = policy_and_calibrating(config, sc)?;
    let states = sc.model.states.clone();
    if let Err(e) = policy.check_feasible(sc) {
        return Ok(CheckReport {
            states,
            feasibility: Feasibility {
                ok: false,
                message: Some(e.to_string()),
            },
            dominance: None,
            normalized_rows: Vec::new(),
            balance_sums: Vec::new(),
            gibbs_increments: Vec::new(),
            continuous: None,
            violation: true,
        });
    }
    let m = sc.num_states();
    if q.values.len() != m || q.values.iter().any(|r| r.len() != m) {
        return Err(CliError::Lib(crate::error::Error::InvalidInput(format!(
            "calibrating function must be {m} x {m}"
        ))));
    }
    let rho = sc.rho_eff();
    let dominance = check_dominance(&sc.weights.weights, &q, &sc.model.transition, rho);
    let mut balance_sums = Vec::with_capacity(m);
    let mut gibbs = Vec::with_capacity(m);
    for i in 0..m {
        let c = &policy.fractions[i];
        let combined: Vec<f64> = (0..m)
            .map(|l| {
                c.iter()
                    .enumerate()
                    .map(|(s, d)| d * sc.assets.effective(s, i, l))
                    .sum()
            })
            .collect();
        let phi = sc.weights.row(i);
        let qi = q.row(i);
        balance_sums.push((0..m).map(|l| phi[l] * qi[l] * combined[l]).sum());
        gibbs.push(gibbs_increment(
            sc.model.row(i),
            phi,
            &combined,
            qi,
            1.0,
            rho,
        ));
    }
    let violation = !dominance.holds;
    Ok(CheckReport {
        states,
        feasibility: Feasibility {
            ok: true,
            message: None,
        },
        normalized_rows: check_q_normalization(&q),
        dominance: Some(dominance),
        balance_sums,
        gibbs_increments: gibbs,
        continuous: None,
        violation,
    })
}

/// Whether a check report's balance sums are all within tolerance.
pub fn balance_holds(report: &CheckReport) -> bool {
    report
        .balance_sums
        .iter()
        .all(|s| s.abs() <= BALANCE_FLAG_TOL)
}
