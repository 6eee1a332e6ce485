//! Scalar numerics shared by the metric and calibration modules.

/// Neumaier-compensated accumulator.
///
/// Reductions over per-instance terms go through this so that totals do not
/// depend on how the terms were produced (serially or on a thread pool).
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.add(v);
        }
    }
}

/// Compensated sum of an iterator of reals.
pub fn ksum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::new();
    acc.extend(values);
    acc.total()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(values);
    values.iter().map(|v| (v - lse).exp()).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Result of a bracketed one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMinimum {
    pub x: f64,
    pub value: f64,
    /// The minimizer sits on (within tolerance of) an end of the bracket.
    pub at_boundary: bool,
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
///
/// The ends of the bracket are evaluated too, so a monotone objective
/// returns the better end with `at_boundary` set.
pub fn golden_section_minimize<F>(f: F, lo: f64, hi: f64, xtol: f64) -> ScalarMinimum
where
    F: Fn(f64) -> f64,
{
    assert!(lo < hi, "empty bracket");
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a) > xtol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (mut x, mut value) = if fc <= fd { (c, fc) } else { (d, fd) };
    for end in [lo, hi] {
        let fe = f(end);
        if fe < value {
            x = end;
            value = fe;
        }
    }
    let edge = 10.0 * xtol.max(f64::EPSILON * (hi - lo));
    ScalarMinimum {
        x,
        value,
        at_boundary: (x - lo).abs() <= edge || (hi - x).abs() <= edge,
    }
}

/// Safeguarded Newton iteration for a root of an increasing crossing.
///
/// `fdf` returns `(g(x), g'(x))`. Requires `g(lo) < 0 < g(hi)`. Newton steps
/// that leave the current bracket, or fail to halve it fast enough, are
/// replaced by bisection. Returns the root estimate.
pub fn safeguarded_newton<F>(fdf: F, lo: f64, hi: f64, tol: f64, max_iter: usize) -> f64
where
    F: Fn(f64) -> (f64, f64),
{
    let (mut a, mut b) = (lo, hi);
    let mut x = 0.5 * (a + b);
    let mut prev_step = b - a;
    let mut step = prev_step;
    let (mut g, mut dg) = fdf(x);
    for _ in 0..max_iter {
        if g == 0.0 {
            return x;
        }
        if g < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let newton_ok = dg > 0.0 && {
            let candidate = x - g / dg;
            candidate > a && candidate < b && (2.0 * g).abs() <= (prev_step * dg).abs()
        };
        prev_step = step;
        if newton_ok {
            step = g / dg;
            x -= step;
        } else {
            step = 0.5 * (b - a);
            x = a + step;
        }
        if step.abs() < tol || b - a < tol {
            return x;
        }
        let next = fdf(x);
        g = next.0;
        dg = next.1;
    }
    x
}
