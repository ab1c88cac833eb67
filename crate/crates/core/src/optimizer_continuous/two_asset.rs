use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{check_threshold, ContinuousOptions, DensityModel, Quadrature, WeightForm};
use crate::concave::{Objective, Polytope, Vector};
use crate::error::{Error, Result};
use crate::optimizer_discrete::multiasset::solve_on_polytope;
use crate::optimizer_discrete::{Branch, EPS_OPEN};

/// Uniform trials on `[-1, 1]`, a riskless asset with rate `rho`, and two
/// risky assets returning `-gamma x` and `-theta ln(1 - x)` per unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearLogMarket {
    pub gamma: f64,
    pub theta: f64,
    pub rho: f64,
    #[serde(default)]
    pub weight: WeightForm,
}

/// Fraction polygon in the `(linear, logarithmic)` plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleRegion2D {
    /// Counterclockwise, starting at the origin.
    pub vertices: Vec<[f64; 2]>,
    /// Always true: only fractions with `theta D2 >= 2 gamma D1` are
    /// modelled. There the worst trial is `x = -1` and no-ruin is linear.
    /// Fractions below that line, where the worst trial is interior, are
    /// left out.
    pub partial: bool,
}

impl LinearLogMarket {
    fn base(&self) -> f64 {
        1.0 + self.rho
    }

    fn validate(&self, b: f64) -> Result<()> {
        if !(self.gamma > 0.0 && self.theta > 0.0 && self.rho >= 0.0) {
            return Err(Error::InvalidInput(
                "need gamma > 0, theta > 0 and rho >= 0".to_string(),
            ));
        }
        if !(b < self.base()) {
            return Err(Error::Infeasible(format!(
                "the fraction region is empty unless 0 < b < 1 + rho = {}",
                self.base()
            )));
        }
        check_threshold(b, self.base())?;
        self.weight.check_nonnegative(-1.0, 1.0)
    }

    /// Constraints `rows . D <= rhs`: signs, the sum cap, the modelled
    /// wedge and no-ruin at `x = -1`.
    fn constraints(&self, b: f64) -> Vec<([f64; 2], f64)> {
        let base = self.base();
        vec![
            ([-1.0, 0.0], 0.0),
            ([0.0, -1.0], 0.0),
            ([1.0, 1.0], 1.0 - EPS_OPEN),
            ([2.0 * self.gamma, -self.theta], 0.0),
            (
                [
                    base - self.gamma,
                    base + self.theta * std::f64::consts::LN_2,
                ],
                base - b,
            ),
        ]
    }

    fn polytope(&self, b: f64) -> Polytope {
        let mut poly = Polytope::new();
        for (row, rhs) in self.constraints(b) {
            poly.push(row.to_vec(), rhs);
        }
        poly
    }
}

fn clip(polygon: &[[f64; 2]], row: [f64; 2], rhs: f64) -> Vec<[f64; 2]> {
    let side = |p: &[f64; 2]| row[0] * p[0] + row[1] * p[1] - rhs;
    let mut out = Vec::new();
    for j in 0..polygon.len() {
        let (p, q) = (polygon[j], polygon[(j + 1) % polygon.len()]);
        let (sp, sq) = (side(&p), side(&q));
        if sp <= 0.0 {
            out.push(p);
        }
        if (sp < 0.0 && sq > 0.0) || (sp > 0.0 && sq < 0.0) {
            let t = sp / (sp - sq);
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out
}

/// Vertices of the modelled fraction region.
pub fn linear_log_region(market: &LinearLogMarket, b: f64) -> Result<FeasibleRegion2D> {
    market.validate(b)?;
    let cap = 1.0 - EPS_OPEN;
    let mut polygon = vec![[0.0, 0.0], [cap, 0.0], [0.0, cap]];
    for (row, rhs) in market.constraints(b).into_iter().skip(3) {
        polygon = clip(&polygon, row, rhs);
    }
    let mut vertices: Vec<[f64; 2]> = Vec::new();
    for v in polygon {
        let dup = vertices
            .last()
            .is_some_and(|w| (w[0] - v[0]).abs() <= 1e-15 && (w[1] - v[1]).abs() <= 1e-15);
        if !dup {
            vertices.push(v);
        }
    }
    if vertices.len() > 1 {
        let (first, last) = (vertices[0], vertices[vertices.len() - 1]);
        if (first[0] - last[0]).abs() <= 1e-15 && (first[1] - last[1]).abs() <= 1e-15 {
            vertices.pop();
        }
    }
    Ok(FeasibleRegion2D {
        vertices,
        partial: true,
    })
}

/// Weighted growth `E[phi ln(1 + rho + D . g*)]` for the two risky assets.
struct LinearLogGrowth {
    market: LinearLogMarket,
    density: DensityModel,
    quad: Quadrature,
}

impl LinearLogGrowth {
    fn new(market: LinearLogMarket, quad: Quadrature) -> Self {
        LinearLogGrowth {
            market,
            density: DensityModel::Uniform {
                lower: -1.0,
                upper: 1.0,
            },
            quad,
        }
    }

    /// Effective returns of both assets at `(x, 1 - x)`.
    fn effective(&self, x: f64, tail: f64) -> [f64; 2] {
        let base = self.market.base();
        [
            -self.market.gamma * x - base,
            -self.market.theta * tail.ln() - base,
        ]
    }

    fn integrate<F: Fn(f64, [f64; 2]) -> f64>(&self, d: &Vector, h: F) -> Result<f64> {
        let base = self.market.base();
        let weight = self.market.weight;
        let mut bad = false;
        let value = self.density.expectation_log_right(
            &self.quad,
            |x, tail| {
                let g = self.effective(x, tail);
                let factor = base + d[0] * g[0] + d[1] * g[1];
                if !(factor > 0.0) {
                    bad = true;
                    return 0.0;
                }
                weight.value(x) * h(factor, g)
            },
            &weight.kinks(),
        )?;
        if bad {
            return Err(Error::InvalidInput(format!(
                "fractions ({}, {}) allow a nonpositive gross factor",
                d[0], d[1]
            )));
        }
        Ok(value)
    }
}

impl Objective for LinearLogGrowth {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &Vector) -> Result<f64> {
        self.integrate(x, |factor, _| factor.ln())
    }

    fn gradient(&self, x: &Vector) -> Result<Vector> {
        let a = self.integrate(x, |factor, g| g[0] / factor)?;
        let b = self.integrate(x, |factor, g| g[1] / factor)?;
        Ok(Vector::from_vec(vec![a, b]))
    }

    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>> {
        let aa = self.integrate(x, |f, g| -g[0] * g[0] / (f * f))?;
        let ab = self.integrate(x, |f, g| -g[0] * g[1] / (f * f))?;
        let bb = self.integrate(x, |f, g| -g[1] * g[1] / (f * f))?;
        Ok(DMatrix::from_row_slice(2, 2, &[aa, ab, ab, bb]))
    }
}

/// Output of [`two_asset_riskless_solver`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoAssetSolution {
    pub region: FeasibleRegion2D,
    /// `(linear, logarithmic)` fractions.
    pub fractions: [f64; 2],
    pub branch: Branch,
    /// Weighted growth at `fractions`.
    pub growth: f64,
    /// Gradient of the growth rate at `fractions`.
    pub gradient: [f64; 2],
    pub degenerate: bool,
    pub iterations: usize,
}

/// Maximises the weighted growth over the modelled region.
///
/// With the default options a stationary point inside the region is
/// returned as an interior root, and otherwise the constrained maximiser
/// is returned with branch `Boundary`. Under
/// [`RootPolicy::ZeroFallback`](crate::optimizer_discrete::RootPolicy)
/// points that fail the balance condition are replaced by zero.
pub fn two_asset_riskless_solver(
    market: &LinearLogMarket,
    b: f64,
    options: &ContinuousOptions,
) -> Result<TwoAssetSolution> {
    let region = linear_log_region(market, b)?;
    let objective = LinearLogGrowth::new(*market, options.quadrature);
    let poly = market.polytope(b);
    let sol = solve_on_polytope(&objective, &poly, options.root_policy)?;
    let x = Vector::from_vec(sol.fractions.clone());
    let grad = objective.gradient(&x)?;
    Ok(TwoAssetSolution {
        region,
        fractions: [sol.fractions[0], sol.fractions[1]],
        branch: sol.branch,
        growth: sol.value,
        gradient: [grad[0], grad[1]],
        degenerate: sol.degenerate,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn unit(theta: f64) -> LinearLogMarket {
        LinearLogMarket {
            gamma: 1.0,
            theta,
            rho: 0.0,
            weight: WeightForm::default(),
        }
    }

    #[test]
    fn region_vertices_follow_the_lines() {
        let r = linear_log_region(&unit(1.0), 0.2).unwrap();
        let corner = 0.8 / (2.0 + 2.0 * LN_2);
        let expected = [
            [0.0, 0.0],
            [corner, 2.0 * corner],
            [0.0, 0.8 / (1.0 + LN_2)],
        ];
        assert_eq!(r.vertices.len(), 3, "{:?}", r.vertices);
        for (v, e) in r.vertices.iter().zip(expected) {
            assert!(
                (v[0] - e[0]).abs() < 1e-12 && (v[1] - e[1]).abs() < 1e-12,
                "{v:?} vs {e:?}"
            );
        }
    }

    #[test]
    fn threshold_at_base_is_empty() {
        let r = two_asset_riskless_solver(&unit(1.0), 1.0, &ContinuousOptions::default());
        assert!(matches!(r, Err(Error::Infeasible(_))));
    }

    #[test]
    fn unit_parameters_stay_riskless() {
        let sol =
            two_asset_riskless_solver(&unit(1.0), 0.2, &ContinuousOptions::default()).unwrap();
        assert_eq!(sol.fractions, [0.0, 0.0]);
        assert_eq!(sol.branch, Branch::Zero);
        assert!(sol.gradient[0] < 0.0 || sol.gradient[1] < 0.0);
    }

    #[test]
    fn gradient_matches_finite_difference() {
        let obj = LinearLogGrowth::new(unit(5.0), Quadrature::default());
        let x = Vector::from_vec(vec![0.01, 0.03]);
        let g = obj.gradient(&x).unwrap();
        let h = 1e-6;
        for k in 0..2 {
            let mut up = x.clone();
            let mut dn = x.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (obj.value(&up).unwrap() - obj.value(&dn).unwrap()) / (2.0 * h);
            assert!((g[k] - fd).abs() < 1e-7, "{k}: {} vs {fd}", g[k]);
        }
    }

    #[test]
    fn steep_logarithmic_asset_is_held() {
        let sol =
            two_asset_riskless_solver(&unit(5.0), 0.2, &ContinuousOptions::default()).unwrap();
        assert_eq!(sol.fractions[0], 0.0);
        assert!(
            (sol.fractions[1] - 0.026_263_211_884).abs() < 1e-8,
            "{:?}",
            sol.fractions
        );
        assert!(
            (sol.growth - 0.006_563_654_710_996).abs() < 1e-11,
            "{}",
            sol.growth
        );
        assert_eq!(sol.branch, Branch::InteriorRoot);
        assert!(sol.gradient[1].abs() < 1e-9);
    }

    #[test]
    fn weight_cancelling_both_means_stays_riskless() {
        // Choose weights on [-1, 0) and (0, 1] so that both expected
        // effective returns vanish at the origin.
        let (gamma, theta) = (4.0, 5.0);
        let q = Quadrature::default();
        let lin =
            |h: &dyn Fn(f64) -> f64, lo: f64, hi: f64| q.integrate(h, lo, hi).unwrap().value;
        let ln = |h: &dyn Fn(f64) -> f64, lo: f64| {
            q.integrate_log_right(|x, t: f64| h(x) * (theta * t.ln() + 1.0), lo, &[0.0])
                .unwrap()
                .value
        };
        // Basis: x^2 on x < 0 (fixed coefficient 1), x^2 on x > 0, 1 on x < 0.
        let neg_sq = |x: f64| if x < 0.0 { x * x } else { 0.0 };
        let pos_sq = |x: f64| if x > 0.0 { x * x } else { 0.0 };
        let neg_one = |x: f64| if x < 0.0 { 1.0 } else { 0.0 };
        let lin_row = |h: &dyn Fn(f64) -> f64| {
            lin(&|x| h(x) * (gamma * x + 1.0), -1.0, 0.0)
                + lin(&|x| h(x) * (gamma * x + 1.0), 0.0, 1.0)
        };
        let ln_row = |h: &dyn Fn(f64) -> f64| ln(h, -1.0);
        let (a, b, c) = (lin_row(&neg_sq), lin_row(&pos_sq), lin_row(&neg_one));
        let (d, e, f) = (ln_row(&neg_sq), ln_row(&pos_sq), ln_row(&neg_one));
        // Solve b p + c k = -a, e p + f k = -d.
        let det = b * f - c * e;
        let p = (-a * f + c * d) / det;
        let k = (-b * d + a * e) / det;
        assert!(p > 0.0 && k > 0.0, "{p} {k}");
        let market = LinearLogMarket {
            gamma,
            theta,
            rho: 0.0,
            weight: WeightForm::PiecewiseQuadratic {
                quad_pos: p,
                lin_pos: 0.0,
                const_pos: 0.0,
                quad_neg: 1.0,
                lin_neg: 0.0,
                const_neg: k,
            },
        };
        let sol = two_asset_riskless_solver(&market, 0.5, &ContinuousOptions::default()).unwrap();
        assert!(
            sol.gradient[0].abs() < 1e-10 && sol.gradient[1].abs() < 1e-10,
            "{:?}",
            sol.gradient
        );
        assert_eq!(sol.fractions, [0.0, 0.0]);
        assert_eq!(sol.branch, Branch::Zero);
    }
}
