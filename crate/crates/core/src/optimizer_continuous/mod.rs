//! Optimal fractions when each trial result is drawn IID from a density.
//!
//! Expectations are computed by adaptive quadrature (see [`quadrature`]),
//! with panel boundaries placed at the kinks of the return and weight
//! forms. Scalar roots are bracketed and bisected, relying on the balance
//! function being strictly decreasing in the fraction.

mod density;
mod forms;
mod gaussian;
mod piecewise;
pub mod quadrature;
mod two_asset;

pub use density::{DensityModel, MASS_TOL};
pub use forms::{ContinuousAsset, ReturnForm, WeightForm};
pub use gaussian::{gaussian_example_solver, GaussianMarket, GaussianSolution};
pub use piecewise::{uniform_piecewise_linear_root, PiecewiseRoot, UniformPiecewise};
pub use quadrature::Quadrature;
pub use two_asset::{
    linear_log_region, two_asset_riskless_solver, FeasibleRegion2D, LinearLogMarket,
    TwoAssetSolution,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer_discrete::{Branch, RootPolicy, EPS_OPEN};
use crate::roots::bisect_decreasing;

/// Settings shared by the continuous solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousOptions {
    pub root_policy: RootPolicy,
    pub quadrature: Quadrature,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        ContinuousOptions {
            root_policy: RootPolicy::FeasibleBoundary,
            quadrature: Quadrature::default(),
        }
    }
}

/// Single-asset solver output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSolution {
    pub fraction: f64,
    pub branch: Branch,
    /// Derivative of the weighted growth at `fraction`.
    pub residual: f64,
    /// Derivative of the weighted growth at zero, `E[phi g]`.
    pub slope_at_zero: f64,
    /// Weighted growth at `fraction`.
    pub growth: f64,
    /// Largest fraction keeping every gross factor at or above `b`.
    pub upper: f64,
    /// The stationary point lies beyond `upper`, where the balance
    /// condition gives no answer; `fraction` then follows the root policy.
    pub root_beyond_upper: bool,
    pub at_open_bound: bool,
    pub iterations: usize,
}

/// Largest fraction in `[0, 1 - EPS_OPEN]` with `base + d inf_g >= b`,
/// and whether the open cap is the binding constraint.
pub(crate) fn scalar_upper(inf_g: f64, base: f64, b: f64) -> (f64, bool) {
    let cap = 1.0 - EPS_OPEN;
    if inf_g < 0.0 {
        let d = (base - b) / -inf_g;
        if d < cap {
            return (d.max(0.0), false);
        }
    }
    (cap, true)
}

pub(crate) fn check_threshold(b: f64, base: f64) -> Result<()> {
    if !(b > 0.0) {
        return Err(Error::InvalidInput(format!("b = {b} must be positive")));
    }
    if base < b {
        return Err(Error::Infeasible(format!(
            "1 + rho = {base} is below the ruin threshold b = {b}"
        )));
    }
    Ok(())
}

/// Expectation of `h(x, g(x)) phi(x)` under `density`, routed through the
/// logarithmic substitution when the return blows up at the end of the
/// support.
fn weighted_expectation<F: FnMut(f64) -> f64>(
    density: &DensityModel,
    asset: &ContinuousAsset,
    quad: &Quadrature,
    mut h: F,
) -> Result<f64> {
    let mut breaks = asset.returns.kinks();
    breaks.extend(asset.weight.kinks());
    if asset.returns.singular_at_one() && density.support().1 == 1.0 {
        density.expectation_log_right(
            quad,
            |x, tail| asset.weight.value(x) * h(asset.returns.value_with_tail(x, tail)),
            &breaks,
        )
    } else {
        density.expectation(
            quad,
            |x| asset.weight.value(x) * h(asset.returns.value(x)),
            &breaks,
        )
    }
}

/// Optimal fraction for one risky asset and IID trials with a density.
///
/// `asset.returns` is the effective return (net of `1 + rho_eff` when a
/// riskless asset is present). Uses the default options, which return the
/// no-ruin boundary with `root_beyond_upper` set when the stationary point
/// is out of reach.
pub fn solve_balance_continuous(
    density: &DensityModel,
    asset: &ContinuousAsset,
    b: f64,
    rho_eff: f64,
) -> Result<ContinuousSolution> {
    solve_balance_continuous_with(density, asset, b, rho_eff, &ContinuousOptions::default())
}

/// [`solve_balance_continuous`] with explicit options.
pub fn solve_balance_continuous_with(
    density: &DensityModel,
    asset: &ContinuousAsset,
    b: f64,
    rho_eff: f64,
    options: &ContinuousOptions,
) -> Result<ContinuousSolution> {
    let density = density.normalized()?;
    let quad = &options.quadrature;
    density.check_mass(quad)?;
    let (lo, hi) = density.support();
    asset.weight.check_nonnegative(lo, hi)?;
    let inf_g = asset.returns.infimum(lo, hi)?;
    let base = 1.0 + rho_eff;
    check_threshold(b, base)?;
    let (upper, capped) = scalar_upper(inf_g, base, b);

    let slope = |d: f64| weighted_expectation(&density, asset, quad, |g| g / (base + d * g));
    let growth = |d: f64| weighted_expectation(&density, asset, quad, |g| (base + d * g).ln());
    let slope_at_zero = slope(0.0)?;
    let finish =
        |fraction: f64, branch, residual, iterations, beyond: bool| -> Result<ContinuousSolution> {
            let value = growth(fraction)?;
            Ok(ContinuousSolution {
                fraction,
                branch,
                residual,
                slope_at_zero,
                growth: value,
                upper,
                root_beyond_upper: beyond,
                at_open_bound: capped && upper - fraction <= EPS_OPEN,
                iterations,
            })
        };
    if slope_at_zero <= quad.abs_tol || upper <= 0.0 {
        return finish(0.0, Branch::Zero, slope_at_zero, 0, false);
    }
    let at_upper = slope(upper)?;
    if at_upper.abs() <= 1e-12 {
        return finish(upper, Branch::InteriorRoot, at_upper, 0, false);
    }
    if at_upper > 0.0 {
        return match options.root_policy {
            RootPolicy::ZeroFallback => finish(0.0, Branch::Zero, slope_at_zero, 0, true),
            RootPolicy::FeasibleBoundary => finish(upper, Branch::Boundary, at_upper, 0, true),
        };
    }
    let root = bisect_decreasing(slope, 0.0, upper, 1e-12, 1e-14)?;
    finish(
        root.root,
        Branch::InteriorRoot,
        root.residual,
        root.iterations,
        false,
    )
}
