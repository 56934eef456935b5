//! Gauss–Legendre quadrature: fixed rules, composite rules over equal panels, and a global
//! adaptive integrator for vector-valued integrands.
//!
//! The adaptive integrator compares each panel's order-`n` estimate against the sum of the
//! estimates on its two halves; the halves' sum is kept as the value and the difference as
//! the error. Panels are summed in left-to-right order so results do not depend on the
//! refinement history.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// The order-20 rule used by the adaptive integrator.
    pub fn order20() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(20))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Apply the rule on `[a, b]`.
    pub fn panel<const K: usize, F>(&self, f: &mut F, a: f64, b: f64) -> Result<[f64; K]>
    where
        F: FnMut(f64) -> Result<[f64; K]>,
    {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = [0.0; K];
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x)?;
            for k in 0..K {
                acc[k] += w * v[k];
            }
        }
        for v in &mut acc {
            *v *= half;
        }
        Ok(acc)
    }
}

// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite rule: `m` equal subintervals of `[a, b]`, each integrated with `rule`.
pub fn composite<const K: usize, F>(rule: &GaussLegendre, mut f: F, a: f64, b: f64, m: usize) -> Result<[f64; K]>
where
    F: FnMut(f64) -> Result<[f64; K]>,
{
    let h = (b - a) / m as f64;
    let mut acc = [0.0; K];
    for i in 0..m {
        let lo = a + h * i as f64;
        let hi = if i + 1 == m { b } else { lo + h };
        let v = rule.panel(&mut f, lo, hi)?;
        for k in 0..K {
            acc[k] += v[k];
        }
    }
    Ok(acc)
}

/// Stopping rule for [`adaptive`]: component `k` has converged once its error estimate is
/// below `max(abs, rel * |value_k|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_panels: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Self {
            rel,
            abs: 1e-300,
            max_panels: 4000,
        }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<const K: usize> {
    pub value: [f64; K],
    pub error: [f64; K],
    pub panels: usize,
}

impl<const K: usize> Estimate<K> {
    /// Largest error relative to the component's magnitude.
    pub fn relative_error(&self) -> f64 {
        (0..K)
            .map(|k| self.error[k] / self.value[k].abs().max(1e-300))
            .fold(0.0, f64::max)
    }
}

struct Panel<const K: usize> {
    a: f64,
    b: f64,
    value: [f64; K],
    error: [f64; K],
}

fn eval_panel<const K: usize, F>(rule: &GaussLegendre, f: &mut F, a: f64, b: f64) -> Result<Panel<K>>
where
    F: FnMut(f64) -> Result<[f64; K]>,
{
    let whole = rule.panel(f, a, b)?;
    let m = 0.5 * (a + b);
    let left = rule.panel(f, a, m)?;
    let right = rule.panel(f, m, b)?;
    let mut value = [0.0; K];
    let mut error = [0.0; K];
    for k in 0..K {
        value[k] = left[k] + right[k];
        error[k] = (value[k] - whole[k]).abs();
    }
    Ok(Panel { a, b, value, error })
}

/// Global adaptive order-20 Gauss–Legendre integration over `[points[0], points[last]]`.
///
/// Every interior entry of `points` is a mandatory panel boundary; put discontinuities of
/// the integrand there.
pub fn adaptive<const K: usize, F>(mut f: F, points: &[f64], tol: Tolerance, what: &'static str) -> Result<Estimate<K>>
where
    F: FnMut(f64) -> Result<[f64; K]>,
{
    let rule = GaussLegendre::order20();
    let mut panels: Vec<Panel<K>> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            panels.push(eval_panel(rule, &mut f, w[0], w[1])?);
        }
    }
    if panels.is_empty() {
        return Ok(Estimate {
            value: [0.0; K],
            error: [0.0; K],
            panels: 0,
        });
    }
    loop {
        let (value, error) = totals(&mut panels);
        let limit: [f64; K] = std::array::from_fn(|k| tol.abs.max(tol.rel * value[k].abs()));
        let worst = (0..K).map(|k| error[k] / limit[k]).fold(0.0, f64::max);
        if worst <= 1.0 {
            return Ok(Estimate {
                value,
                error,
                panels: panels.len(),
            });
        }
        if panels.len() >= tol.max_panels {
            let achieved = (0..K)
                .map(|k| error[k] / value[k].abs().max(tol.abs))
                .fold(0.0, f64::max);
            return Err(Error::Convergence {
                what,
                achieved,
                requested: tol.rel,
            });
        }
        // Split the panel contributing the largest scaled error.
        let (idx, _) = panels
            .iter()
            .enumerate()
            .map(|(i, p)| (i, (0..K).map(|k| p.error[k] / limit[k]).fold(0.0, f64::max)))
            .fold((0, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        let p = panels.swap_remove(idx);
        let m = 0.5 * (p.a + p.b);
        if !(m > p.a && m < p.b) {
            return Err(Error::Convergence {
                what,
                achieved: worst * tol.rel,
                requested: tol.rel,
            });
        }
        panels.push(eval_panel(rule, &mut f, p.a, m)?);
        panels.push(eval_panel(rule, &mut f, m, p.b)?);
    }
}

fn totals<const K: usize>(panels: &mut [Panel<K>]) -> ([f64; K], [f64; K]) {
    panels.sort_by(|x, y| x.a.total_cmp(&y.a));
    let mut value = [0.0; K];
    let mut comp = [0.0; K];
    let mut error = [0.0; K];
    for p in panels.iter() {
        for k in 0..K {
            // Neumaier summation
            let t = value[k] + p.value[k];
            if value[k].abs() >= p.value[k].abs() {
                comp[k] += (value[k] - t) + p.value[k];
            } else {
                comp[k] += (p.value[k] - t) + value[k];
            }
            value[k] = t;
            error[k] += p.error[k];
        }
    }
    for k in 0..K {
        value[k] += comp[k];
    }
    (value, error)
}
