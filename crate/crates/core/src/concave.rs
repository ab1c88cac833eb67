//! Concave maximisation over small polytopes `{x : A x <= c}`.
//!
//! Projected gradient ascent with Armijo backtracking finds the active
//! face; a few Newton steps restricted to that face then pin the optimum
//! down to near machine precision. Projection onto the polytope (optionally
//! intersected with an affine subspace) is an exact primal active-set QP.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::roots::bisect_decreasing;

pub(crate) type Vector = DVector<f64>;

/// Smooth concave function of a few variables.
pub(crate) trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> Result<f64>;
    fn gradient(&self, x: &Vector) -> Result<Vector>;
    fn hessian(&self, x: &Vector) -> Result<DMatrix<f64>>;
}

/// Intersection of half-spaces `row . x <= rhs`.
#[derive(Debug, Clone)]
pub(crate) struct Polytope {
    pub rows: Vec<Vector>,
    pub rhs: Vec<f64>,
}

/// Affine subspace through a known feasible point, given by the
/// linearly independent rows whose products with `x` are held fixed.
#[derive(Debug, Clone)]
pub(crate) struct Affine {
    pub rows: DMatrix<f64>,
}

const ACTIVE_TOL: f64 = 1e-10;

impl Polytope {
    pub fn new() -> Self {
        Polytope {
            rows: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>, rhs: f64) {
        self.rows.push(Vector::from_vec(row));
        self.rhs.push(rhs);
    }

    pub fn slack(&self, i: usize, x: &Vector) -> f64 {
        self.rhs[i] - self.rows[i].dot(x)
    }

    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        (0..self.rows.len()).all(|i| self.slack(i, x) >= -tol)
    }

    /// Largest `t` in `[0, inf)` keeping `x + t d` feasible, ignoring `skip`.
    pub fn max_step(&self, x: &Vector, d: &Vector, skip: &[usize]) -> (f64, Option<usize>) {
        let mut best = (f64::INFINITY, None);
        for i in 0..self.rows.len() {
            if skip.contains(&i) {
                continue;
            }
            let rate = self.rows[i].dot(d);
            if rate > 1e-300 {
                let t = (self.slack(i, x).max(0.0)) / rate;
                if t < best.0 {
                    best = (t, Some(i));
                }
            }
        }
        best
    }

    fn active(&self, x: &Vector) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&i| self.slack(i, x) <= ACTIVE_TOL)
            .collect()
    }
}

fn stack(eq: Option<&Affine>, poly: &Polytope, working: &[usize], n: usize) -> DMatrix<f64> {
    let neq = eq.map_or(0, |e| e.rows.nrows());
    let mut b = DMatrix::zeros(neq + working.len(), n);
    if let Some(e) = eq {
        b.rows_mut(0, neq).copy_from(&e.rows);
    }
    for (r, &i) in working.iter().enumerate() {
        b.row_mut(neq + r).copy_from(&poly.rows[i].transpose());
    }
    b
}

fn rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-10 * top.max(1e-300)).count()
}

/// Solves `B^T lambda ~= r` in the least-squares sense; returns
/// `(lambda, r - B^T lambda)`.
fn split_on_rows(b: &DMatrix<f64>, r: &Vector) -> Result<(Vector, Vector)> {
    if b.nrows() == 0 {
        return Ok((Vector::zeros(0), r.clone()));
    }
    let bt = b.transpose();
    let svd = bt.clone().svd(true, true);
    let lambda = svd
        .solve(r, 1e-13)
        .map_err(|e| Error::NoConvergence(format!("least squares failed: {e}")))?;
    let p = r - &bt * &lambda;
    Ok((lambda, p))
}

/// Euclidean projection of `y` onto the polytope, intersected with `eq`
/// when given. `start` must be feasible for both.
pub(crate) fn project(
    poly: &Polytope,
    eq: Option<&Affine>,
    y: &Vector,
    start: &Vector,
) -> Result<Vector> {
    let n = y.len();
    let neq = eq.map_or(0, |e| e.rows.nrows());
    let mut x = start.clone();
    let mut working: Vec<usize> = Vec::new();
    for i in poly.active(&x) {
        let mut trial = working.clone();
        trial.push(i);
        if rank(&stack(eq, poly, &trial, n)) == neq + trial.len() {
            working = trial;
        }
    }
    let budget = 50 * (poly.rows.len() + n + 4);
    for _ in 0..budget {
        let b = stack(eq, poly, &working, n);
        let r = y - &x;
        let (lambda, mut p) = split_on_rows(&b, &r)?;
        if rank(&b) == n {
            p.fill(0.0);
        }
        if p.norm() <= 1e-12 * (1.0 + x.norm() + y.norm()) {
            let mut worst = None;
            for (w, _) in working.iter().enumerate() {
                let l = lambda[neq + w];
                if l < -1e-13 && worst.map_or(true, |(_, v)| l < v) {
                    worst = Some((w, l));
                }
            }
            match worst {
                None => return Ok(x),
                Some((w, _)) => {
                    working.remove(w);
                }
            }
            continue;
        }
        let (t, blocking) = poly.max_step(&x, &p, &working);
        if t >= 1.0 {
            x += &p;
        } else {
            x += t * &p;
            if let Some(i) = blocking {
                working.push(i);
            }
        }
    }
    Err(Error::NoConvergence(
        "active-set projection exceeded its iteration budget".to_string(),
    ))
}

/// Result of [`maximize`].
#[derive(Debug, Clone)]
pub(crate) struct Maximum {
    pub point: Vector,
    pub iterations: usize,
}

const GRAD_TOL: f64 = 1e-9;
const IMPROVE_TOL: f64 = 1e-14;
const MAX_ASCENT_ITER: usize = 20_000;

fn value_or_neg_inf<O: Objective>(obj: &O, x: &Vector) -> f64 {
    match obj.value(x) {
        Ok(v) if v.is_finite() => v,
        _ => f64::NEG_INFINITY,
    }
}

/// Maximises a concave objective over the polytope starting from a
/// feasible `start`.
pub(crate) fn maximize<O: Objective>(obj: &O, poly: &Polytope, start: &Vector) -> Result<Maximum> {
    if !poly.contains(start, 1e-12) {
        return Err(Error::Infeasible(
            "starting point lies outside the constraint polytope".to_string(),
        ));
    }
    let mut x = start.clone();
    let mut f = obj.value(&x)?;
    let mut step = 1.0;
    let mut iterations = 0;
    for round in 0..4 {
        while iterations < MAX_ASCENT_ITER {
            iterations += 1;
            let g = obj.gradient(&x)?;
            let full = project(poly, None, &(&x + &g), &x)?;
            if (&full - &x).norm() <= GRAD_TOL * if round == 0 { 1.0 } else { 1e-3 } {
                break;
            }
            let mut accepted = None;
            let mut t = step;
            while t > 1e-18 {
                let y = project(poly, None, &(&x + t * &g), &x)?;
                let fy = value_or_neg_inf(obj, &y);
                if fy >= f + 1e-4 * g.dot(&(&y - &x)) {
                    accepted = Some((y, fy));
                    break;
                }
                t *= 0.5;
            }
            let Some((y, fy)) = accepted else { break };
            let gain = fy - f;
            x = y;
            f = fy;
            step = (t * 2.0).min(1e8);
            if gain < IMPROVE_TOL {
                break;
            }
        }
        let before = f;
        let (xp, fp) = polish(obj, poly, x.clone(), f)?;
        x = xp;
        f = fp;
        let g = obj.gradient(&x)?;
        let full = project(poly, None, &(&x + &g), &x)?;
        if (&full - &x).norm() <= 1e-12 || (f - before).abs() <= 1e-15 && round > 0 {
            break;
        }
    }
    Ok(Maximum {
        point: x,
        iterations,
    })
}

/// Active constraints at `x` whose multipliers in `g = sum lambda_i a_i`
/// are positive, chosen so the rows stay linearly independent.
fn binding_set(poly: &Polytope, x: &Vector, g: &Vector) -> Result<Vec<usize>> {
    let n = x.len();
    let mut working: Vec<usize> = Vec::new();
    for i in poly.active(x) {
        let mut trial = working.clone();
        trial.push(i);
        if rank(&stack(None, poly, &trial, n)) == trial.len() {
            working = trial;
        }
    }
    loop {
        let b = stack(None, poly, &working, n);
        let (lambda, _) = split_on_rows(&b, g)?;
        let worst = lambda
            .iter()
            .enumerate()
            .filter(|(_, &l)| l < 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1));
        match worst {
            Some((w, _)) => {
                working.remove(w);
            }
            None => return Ok(working),
        }
    }
}

fn null_basis(b: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if b.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let mut padded = DMatrix::zeros(n.max(b.nrows()), n);
    padded.rows_mut(0, b.nrows()).copy_from(b);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let top = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cols: Vec<Vector> = (0..v_t.nrows())
        .filter(|&j| svd.singular_values[j] <= 1e-10 * top.max(1e-300))
        .map(|j| v_t.row(j).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Newton steps on the face of binding constraints.
fn polish<O: Objective>(
    obj: &O,
    poly: &Polytope,
    mut x: Vector,
    mut f: f64,
) -> Result<(Vector, f64)> {
    let n = x.len();
    for _ in 0..60 {
        let g = obj.gradient(&x)?;
        let binding = binding_set(poly, &x, &g)?;
        let z = null_basis(&stack(None, poly, &binding, n), n);
        if z.ncols() == 0 {
            break;
        }
        let gz = z.transpose() * &g;
        if gz.norm() <= 1e-16 {
            break;
        }
        let hz = z.transpose() * obj.hessian(&x)? * &z;
        let eig = SymmetricEigen::new(hz);
        let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
        let mut dz = Vector::zeros(z.ncols());
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam < -1e-13 * scale.max(1e-300) {
                let v = eig.eigenvectors.column(j);
                dz -= v * (v.dot(&gz) / lam);
            }
        }
        let d = &z * dz;
        if d.norm() <= 1e-16 {
            break;
        }
        let (t_max, _) = poly.max_step(&x, &d, &binding);
        let mut t = t_max.min(1.0);
        let mut moved = false;
        for _ in 0..40 {
            let y = &x + t * &d;
            let fy = value_or_neg_inf(obj, &y);
            if fy >= f && poly.contains(&y, 1e-13) {
                x = y;
                f = fy;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || (t * &d).norm() <= 1e-16 {
            break;
        }
    }
    Ok((x, f))
}

/// Minimum-norm point among maximisers equal in value to `x_hat`, and
/// whether that set contains more than one point.
///
/// Directions in the numerical null space of the Hessian leave a
/// log-growth objective unchanged, so the optimal set is the polytope cut
/// by the affine subspace through `x_hat` spanned by those directions.
pub(crate) fn min_norm_optimum<O: Objective>(
    obj: &O,
    poly: &Polytope,
    x_hat: &Vector,
) -> Result<(Vector, bool)> {
    let n = x_hat.len();
    let eig = SymmetricEigen::new(obj.hessian(x_hat)?);
    let scale = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let flat = 1e-12 * scale.max(1.0);
    let mut null = Vec::new();
    let mut range = Vec::new();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(j).into_owned();
        if lam.abs() <= flat {
            null.push(v);
        } else {
            range.push(v);
        }
    }
    if null.is_empty() {
        return Ok((x_hat.clone(), false));
    }
    let eq = if range.is_empty() {
        None
    } else {
        Some(Affine {
            rows: DMatrix::from_columns(&range).transpose(),
        })
    };
    let origin = Vector::zeros(n);
    let x_min = project(poly, eq.as_ref(), &origin, x_hat)?;
    let f_hat = obj.value(x_hat)?;
    if (value_or_neg_inf(obj, &x_min) - f_hat).abs() > 1e-12 {
        return Ok((x_hat.clone(), false));
    }
    let mut degenerate = (&x_min - x_hat).norm() > 1e-9;
    for v in &null {
        for sign in [1.0, -1.0] {
            if degenerate {
                break;
            }
            let far = &x_min + sign * 10.0 * v;
            let landed = project(poly, eq.as_ref(), &far, &x_min)?;
            if (&landed - &x_min).norm() > 1e-9
                && (value_or_neg_inf(obj, &landed) - f_hat).abs() <= 1e-12
            {
                degenerate = true;
            }
        }
    }
    Ok((x_min, degenerate))
}

/// Best point `t h` (with `h >= 0`, `sum h = 1`) at which the objective
/// is maximal along its own ray and which lies in the polytope.
///
/// Such points are exactly the nonzero solutions of the weak balance
/// condition `x . grad(x) = 0`. Returns `None` when no ray improves on the
/// origin.
pub(crate) fn ray_search<O: Objective>(obj: &O, poly: &Polytope) -> Result<Option<(Vector, f64)>> {
    let k = obj.dim();
    let origin = Vector::zeros(k);
    let f0 = obj.value(&origin)?;
    let g0 = obj.gradient(&origin)?;
    let eval = |h: &Vector| -> Result<Option<(Vector, f64)>> {
        if g0.dot(h) <= 0.0 {
            return Ok(None);
        }
        let (t_max, _) = poly.max_step(&origin, h, &[]);
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Ok(None);
        }
        let slope = |t: f64| -> Result<f64> { Ok(obj.gradient(&(t * h))?.dot(h)) };
        let end = slope(t_max)?;
        let t_star = if end > 1e-12 {
            return Ok(None);
        } else if end >= -1e-12 {
            t_max
        } else {
            bisect_decreasing(slope, 0.0, t_max, 1e-13, 1e-15)?.root
        };
        let x = t_star * h;
        Ok(Some((x.clone(), obj.value(&x)?)))
    };
    let resolution = match k {
        1 => 1,
        2 => 200,
        3 => 40,
        4 => 16,
        _ => 6,
    };
    let mut best: Option<(Vector, Vector, f64)> = None;
    for comp in compositions(resolution, k) {
        let h = Vector::from_iterator(k, comp.iter().map(|&c| c as f64 / resolution as f64));
        if let Some((x, v)) = eval(&h)? {
            if best.as_ref().map_or(true, |b| v > b.2) {
                best = Some((h, x, v));
            }
        }
    }
    let Some((mut h, mut x, mut v)) = best else {
        return Ok(None);
    };
    let mut s = 1.0 / resolution as f64;
    while k > 1 && s > 1e-12 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || h[j] <= 0.0 {
                    continue;
                }
                let mv = s.min(h[j]);
                let mut trial = h.clone();
                trial[i] += mv;
                trial[j] -= mv;
                if let Some((xt, vt)) = eval(&trial)? {
                    if vt > v {
                        h = trial;
                        x = xt;
                        v = vt;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            s *= 0.5;
        }
    }
    if v > f0 + 1e-14 {
        Ok(Some((x, v)))
    } else {
        Ok(None)
    }
}

/// All ways to write `total` as an ordered sum of `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}
