//! Adaptive 7/15-point Gauss–Kronrod quadrature.
//!
//! Panels are refined one at a time, always splitting the panel with the
//! largest error estimate (lowest left endpoint on ties), and the final sum
//! runs over panels sorted by position. The result is a pure function of
//! the integrand and the settings.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];

/// Gauss weights for the odd-indexed Kronrod nodes (the last is the centre).
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Quadrature settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Equal panels each breakpoint interval starts with.
    pub initial_panels: usize,
    /// Panel budget before giving up.
    pub max_panels: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            abs_tol: 1e-12,
            rel_tol: 0.0,
            initial_panels: 4,
            max_panels: 4000,
        }
    }
}

/// Integral estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, lo: f64, hi: f64) -> Panel {
    let centre = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(centre);
    let mut kron = fc * KRONROD_WEIGHTS[7];
    let mut gauss = fc * GAUSS_WEIGHTS[3];
    let mut abs_sum = fc.abs() * KRONROD_WEIGHTS[7];
    let mut values = [(0.0, 0.0); 7];
    for j in 0..7 {
        let dx = half * KRONROD_NODES[j];
        let (f1, f2) = (f(centre - dx), f(centre + dx));
        values[j] = (f1, f2);
        kron += KRONROD_WEIGHTS[j] * (f1 + f2);
        abs_sum += KRONROD_WEIGHTS[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += GAUSS_WEIGHTS[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kron;
    let mut spread = KRONROD_WEIGHTS[7] * (fc - mean).abs();
    for j in 0..7 {
        spread += KRONROD_WEIGHTS[j] * ((values[j].0 - mean).abs() + (values[j].1 - mean).abs());
    }
    let spread = spread * half.abs();
    let mut error = ((kron - gauss) * half).abs();
    if spread > 0.0 && error > 0.0 {
        error = spread * (200.0 * error / spread).powf(1.5).min(1.0);
    }
    let floor = 50.0 * f64::EPSILON * abs_sum * half.abs();
    Panel {
        lo,
        hi,
        value: kron * half,
        error: error.max(floor),
    }
}

impl Quadrature {
    /// Settings with `initial_panels` scaled by `factor`.
    pub fn refined(self, factor: usize) -> Self {
        Quadrature {
            initial_panels: self.initial_panels * factor.max(1),
            max_panels: self.max_panels * factor.max(1),
            ..self
        }
    }

    /// Integral of `f` over `[lo, hi]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: F, lo: f64, hi: f64) -> Result<Estimate> {
        self.integrate_with_breaks(f, &[lo, hi])
    }

    /// Integral over `[breaks[0], breaks[last]]`, with every interior break
    /// kept as a panel boundary. Breaks must be finite and nondecreasing.
    pub fn integrate_with_breaks<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        breaks: &[f64],
    ) -> Result<Estimate> {
        if breaks.len() < 2
            || breaks.iter().any(|v| !v.is_finite())
            || breaks.windows(2).any(|w| w[1] < w[0])
        {
            return Err(Error::InvalidInput(format!(
                "quadrature breaks must be finite and sorted, got {breaks:?}"
            )));
        }
        let n0 = self.initial_panels.max(1);
        let mut panels = Vec::new();
        for w in breaks.windows(2) {
            if w[1] == w[0] {
                continue;
            }
            let step = (w[1] - w[0]) / n0 as f64;
            for j in 0..n0 {
                let lo = w[0] + step * j as f64;
                let hi = if j + 1 == n0 { w[1] } else { lo + step };
                panels.push(kronrod(&mut f, lo, hi));
            }
        }
        loop {
            let total: f64 = panels.iter().map(|p| p.value).sum();
            let error: f64 = panels.iter().map(|p| p.error).sum();
            if !total.is_finite() {
                return Err(Error::NoConvergence(
                    "integrand produced a non-finite value".to_string(),
                ));
            }
            if error <= self.abs_tol.max(self.rel_tol * total.abs()) {
                panels.sort_by(|a, b| a.lo.total_cmp(&b.lo));
                return Ok(Estimate {
                    value: panels.iter().map(|p| p.value).sum(),
                    error,
                    panels: panels.len(),
                });
            }
            if panels.len() >= self.max_panels {
                return Err(Error::NoConvergence(format!(
                    "quadrature error {error:e} above tolerance {:e} after {} panels",
                    self.abs_tol,
                    panels.len()
                )));
            }
            let worst = (0..panels.len())
                .max_by(|&i, &j| {
                    panels[i]
                        .error
                        .total_cmp(&panels[j].error)
                        .then(panels[j].lo.total_cmp(&panels[i].lo))
                })
                .unwrap_or(0);
            let p = panels.swap_remove(worst);
            let mid = 0.5 * (p.lo + p.hi);
            if !(mid > p.lo && mid < p.hi) {
                return Err(Error::NoConvergence(format!(
                    "panel [{}, {}] cannot be split further",
                    p.lo, p.hi
                )));
            }
            panels.push(kronrod(&mut f, p.lo, mid));
            panels.push(kronrod(&mut f, mid, p.hi));
        }
    }

    /// Integral of `f` over `[lo, inf)` through `x = lo + scale t / (1 - t)`.
    ///
    /// `breaks` are sorted points of `(lo, inf)` to keep as panel boundaries.
    pub fn integrate_upper<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        lo: f64,
        scale: f64,
        breaks: &[f64],
    ) -> Result<Estimate> {
        let mut ts = vec![0.0];
        ts.extend(breaks.iter().filter(|&&x| x > lo).map(|&x| {
            let s = (x - lo) / scale;
            s / (1.0 + s)
        }));
        ts.push(1.0);
        self.integrate_with_breaks(
            |t| {
                let r = 1.0 - t;
                if r == 0.0 {
                    0.0
                } else {
                    f(lo + scale * t / r) * scale / (r * r)
                }
            },
            &ts,
        )
    }

    /// Integral of `f` over `(-inf, hi]`.
    pub fn integrate_lower<F: FnMut(f64) -> f64>(
        &self,
        mut f: F,
        hi: f64,
        scale: f64,
        breaks: &[f64],
    ) -> Result<Estimate> {
        let mirrored: Vec<f64> = breaks.iter().map(|x| -x).collect();
        self.integrate_upper(|y| f(-y), -hi, scale, &mirrored)
    }

    /// Integral over `[lo, 1)` of an integrand with a logarithmic
    /// singularity at `1`, through `x = 1 - exp(-u)` followed by the
    /// semi-infinite map in `u`. The integrand receives `(x, 1 - x)` with
    /// the distance to `1` computed without cancellation.
    pub fn integrate_log_right<F: FnMut(f64, f64) -> f64>(
        &self,
        mut f: F,
        lo: f64,
        breaks: &[f64],
    ) -> Result<Estimate> {
        if !(lo < 1.0) {
            return Err(Error::InvalidInput(format!(
                "lower limit {lo} must be below 1"
            )));
        }
        let u0 = -(-lo).ln_1p();
        let ubreaks: Vec<f64> = breaks
            .iter()
            .filter(|&&x| x > lo && x < 1.0)
            .map(|&x| -(-x).ln_1p())
            .collect();
        self.integrate_upper(
            |u| {
                let tail = (-u).exp();
                if tail == 0.0 {
                    0.0
                } else {
                    f(-(-u).exp_m1(), tail) * tail
                }
            },
            u0,
            1.0,
            &ubreaks,
        )
    }
}
