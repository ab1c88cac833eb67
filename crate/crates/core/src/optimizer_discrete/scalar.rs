use serde::{Deserialize, Serialize};

use super::{Branch, RootPolicy};
use crate::error::{Error, Result};
use crate::roots::bisect_decreasing;

/// Gap kept below the open bound `D < 1`.
pub const EPS_OPEN: f64 = 1e-9;

/// Admissible scalar fractions `[lower, upper]` for one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInterval {
    pub lower: f64,
    pub upper: f64,
    /// True when `upper` comes from the `1 - EPS_OPEN` cap, not from no-ruin.
    pub capped_by_open_bound: bool,
}

/// Largest `d` in `[0, 1 - EPS_OPEN]` with `1 + rho_eff + d g*(k) >= b` for
/// every outcome, or `None` when even `d = 0` breaks no-ruin.
pub fn feasibility_interval(g_row: &[f64], b: f64, rho_eff: f64) -> Option<FeasibilityInterval> {
    let headroom = 1.0 + rho_eff - b;
    if headroom < 0.0 {
        return None;
    }
    let mut upper = 1.0 - EPS_OPEN;
    let mut capped = true;
    for &g in g_row {
        if g < 0.0 {
            let d = headroom / -g;
            if d < upper {
                upper = d;
                capped = false;
            }
        }
    }
    Some(FeasibilityInterval {
        lower: 0.0,
        upper: upper.max(0.0),
        capped_by_open_bound: capped,
    })
}

/// `sum p phi g* / (1 + rho_eff + d g*)` over outcomes with `p > 0`.
pub fn balance_scalar(p_row: &[f64], phi_row: &[f64], g_row: &[f64], rho_eff: f64, d: f64) -> f64 {
    terms(p_row, phi_row, g_row)
        .map(|(w, g)| w * g / (1.0 + rho_eff + d * g))
        .sum()
}

/// Weighted growth `sum phi p ln(1 + rho_eff + d g*)` over `p > 0`.
pub fn beta_scalar(p_row: &[f64], phi_row: &[f64], g_row: &[f64], rho_eff: f64, d: f64) -> f64 {
    terms(p_row, phi_row, g_row)
        .map(|(w, g)| w * (1.0 + rho_eff + d * g).ln())
        .sum()
}

fn terms<'a>(
    p_row: &'a [f64],
    phi_row: &'a [f64],
    g_row: &'a [f64],
) -> impl Iterator<Item = (f64, f64)> + 'a {
    p_row
        .iter()
        .zip(phi_row)
        .zip(g_row)
        .filter(|((&p, _), _)| p > 0.0)
        .map(|((&p, &phi), &g)| (p * phi, g))
}

/// Scalar solver output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSolution {
    pub fraction: f64,
    pub branch: Branch,
    /// Balance function evaluated at `fraction`.
    pub residual: f64,
    pub iterations: usize,
    pub upper: f64,
    pub at_open_bound: bool,
}

/// Optimal fraction for one state and one asset, investing nothing when
/// the balance root is not feasible.
pub fn solve_balance_scalar(
    p_row: &[f64],
    phi_row: &[f64],
    g_row: &[f64],
    b: f64,
    rho_eff: f64,
) -> Result<ScalarSolution> {
    solve_balance_scalar_with(p_row, phi_row, g_row, b, rho_eff, RootPolicy::ZeroFallback)
}

/// [`solve_balance_scalar`] with an explicit policy for infeasible roots.
pub fn solve_balance_scalar_with(
    p_row: &[f64],
    phi_row: &[f64],
    g_row: &[f64],
    b: f64,
    rho_eff: f64,
    policy: RootPolicy,
) -> Result<ScalarSolution> {
    if p_row.len() != phi_row.len() || p_row.len() != g_row.len() {
        return Err(Error::InvalidInput("row lengths differ".to_string()));
    }
    let interval = feasibility_interval(g_row, b, rho_eff).ok_or_else(|| {
        Error::Infeasible(format!(
            "1 + rho = {} is below the ruin threshold b = {b}",
            1.0 + rho_eff
        ))
    })?;
    let upper = interval.upper;
    let balance = |d: f64| balance_scalar(p_row, phi_row, g_row, rho_eff, d);
    let zero = ScalarSolution {
        fraction: 0.0,
        branch: Branch::Zero,
        residual: balance(0.0),
        iterations: 0,
        upper,
        at_open_bound: false,
    };
    let slope_at_zero: f64 = terms(p_row, phi_row, g_row).map(|(w, g)| w * g).sum();
    if slope_at_zero <= 0.0 || upper <= 0.0 {
        return Ok(zero);
    }
    let at_upper = balance(upper);
    let at_open_bound = interval.capped_by_open_bound;
    if at_upper.abs() <= 1e-12 {
        return Ok(ScalarSolution {
            fraction: upper,
            branch: Branch::InteriorRoot,
            residual: at_upper,
            iterations: 0,
            upper,
            at_open_bound,
        });
    }
    if at_upper > 0.0 {
        return Ok(match policy {
            RootPolicy::ZeroFallback => zero,
            RootPolicy::FeasibleBoundary => ScalarSolution {
                fraction: upper,
                branch: Branch::Boundary,
                residual: at_upper,
                iterations: 0,
                upper,
                at_open_bound,
            },
        });
    }
    let root = bisect_decreasing(|d| Ok(balance(d)), 0.0, upper, 1e-12, 1e-14)?;
    Ok(ScalarSolution {
        fraction: root.root,
        branch: Branch::InteriorRoot,
        residual: root.residual,
        iterations: root.iterations,
        upper,
        at_open_bound: at_open_bound && upper - root.root <= EPS_OPEN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONES: [f64; 2] = [1.0, 1.0];

    #[test]
    fn interval_even_money() {
        let iv = feasibility_interval(&[-1.0, 1.0], 0.5, 0.0).unwrap();
        assert!((iv.upper - 0.5).abs() < 1e-15);
        assert!(!iv.capped_by_open_bound);
    }

    #[test]
    fn interval_nonnegative_returns_hits_cap() {
        let iv = feasibility_interval(&[0.0, 2.0], 0.9, 0.0).unwrap();
        assert_eq!(iv.upper, 1.0 - EPS_OPEN);
        assert!(iv.capped_by_open_bound);
    }

    #[test]
    fn interval_riskless_binary() {
        let (gamma, rho, b) = (2.0, 0.05, 0.3);
        let g = [gamma - (1.0 + rho), -gamma - (1.0 + rho)];
        let iv = feasibility_interval(&g, b, rho).unwrap();
        assert!((iv.upper - (1.0 + rho - b) / (gamma + 1.0 + rho)).abs() < 1e-15);
    }

    #[test]
    fn interval_empty_when_threshold_exceeds_base() {
        assert!(feasibility_interval(&[1.0, -1.0], 1.2, 0.1).is_none());
    }

    #[test]
    fn fair_game_invests_nothing() {
        let s = solve_balance_scalar(&[0.5, 0.5], &ONES, &[-1.0, 1.0], 0.5, 0.0).unwrap();
        assert_eq!(s.fraction, 0.0);
        assert_eq!(s.branch, Branch::Zero);
    }

    #[test]
    fn even_money_kelly() {
        let s = solve_balance_scalar(&[0.4, 0.6], &ONES, &[-1.0, 1.0], 0.5, 0.0).unwrap();
        assert!((s.fraction - 0.2).abs() < 1e-12);
        assert_eq!(s.branch, Branch::InteriorRoot);
        assert!(s.residual.abs() <= 1e-10);
    }

    #[test]
    fn double_or_nothing_odds() {
        let s = solve_balance_scalar(&[0.2, 0.8], &ONES, &[-2.0, 2.0], 0.01, 0.0).unwrap();
        assert!((s.fraction - 0.3).abs() < 1e-12);
    }

    #[test]
    fn infeasible_root_follows_policy() {
        // Root 0.6 lies beyond the no-ruin bound 0.5.
        let (p, g) = ([0.2, 0.8], [-1.0, 1.0]);
        let zero = solve_balance_scalar(&p, &ONES, &g, 0.5, 0.0).unwrap();
        assert_eq!((zero.fraction, zero.branch), (0.0, Branch::Zero));
        let edge = solve_balance_scalar_with(&p, &ONES, &g, 0.5, 0.0, RootPolicy::FeasibleBoundary)
            .unwrap();
        assert_eq!(edge.branch, Branch::Boundary);
        assert!((edge.fraction - 0.5).abs() < 1e-15);
    }

    #[test]
    fn riskless_binary_root() {
        let g = [-2.0 - 1.0, 2.0 - 1.0];
        let s = solve_balance_scalar(&[0.2, 0.8], &ONES, &g, 0.1, 0.0).unwrap();
        assert!((s.fraction - 1.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_on_losses_hits_open_bound() {
        let args = ([0.5, 0.5], [0.0, 1.0], [-0.5, 1.0]);
        let s = solve_balance_scalar_with(
            &args.0,
            &args.1,
            &args.2,
            0.2,
            0.0,
            RootPolicy::FeasibleBoundary,
        )
        .unwrap();
        assert_eq!(s.branch, Branch::Boundary);
        assert!(s.at_open_bound);
        assert_eq!(s.fraction, 1.0 - EPS_OPEN);
    }
}
