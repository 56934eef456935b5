//! Mutual information between Alice and Bob and Holevo bounds on Eve's information.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::gaussian::{mode_entropy, von_neumann_entropy, QCoefficients, TwoModeCovariance};
use crate::postselection::{radial_integrals, Filter, FilterConfig, QuadratureConfig, RadialIntegrals};
use crate::quadrature::{adaptive, GaussLegendre, Tolerance};
use crate::special::bessel_i0e;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Bob's data is the key reference; Eve's bound conditions on Bob.
    Reverse,
    /// Alice's data is the key reference.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiMethod {
    /// Closed form from the covariance matrix.
    GaussianCm,
    /// Differential entropies of the actual (non-Gaussian) post-selected distribution.
    NonGaussianEntropy,
}

/// Information quantities in bits per symbol. `chi_e` is always evaluated on the Gaussian
/// state with the same covariance, so it is an upper bound on Eve's information rather
/// than an exact value when the post-selected state is not Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoReport {
    pub i_ab: f64,
    pub chi_e: f64,
    pub direction: Direction,
    pub method: MiMethod,
}

/// `log2[(a+1) / (a+1 - c^2/(b+1))]` for heterodyne detection on both sides.
pub fn gaussian_mutual_information(m: &TwoModeCovariance) -> Result<f64> {
    let num = m.a + 1.0;
    let den = num - m.c * m.c / (m.b + 1.0);
    if !(den > 0.0 && num > 0.0) || !m.is_finite() {
        return Err(Error::InvalidState(format!(
            "mutual information undefined for a={}, b={}, c={}",
            m.a, m.b, m.c
        )));
    }
    Ok((num / den).log2().max(0.0))
}

fn conditional_entropy(total: f64, nu: f64) -> Result<f64> {
    let cond = mode_entropy(nu).map_err(|e| e.with_context("conditional state"))?;
    Ok((total - cond).max(0.0))
}

/// Eve's information on Bob's heterodyne data.
pub fn holevo_bound_rr(m: &TwoModeCovariance) -> Result<f64> {
    conditional_entropy(von_neumann_entropy(m)?, m.a - m.c * m.c / (m.b + 1.0))
}

/// Eve's information on Alice's heterodyne data.
pub fn holevo_bound_dr(m: &TwoModeCovariance) -> Result<f64> {
    conditional_entropy(von_neumann_entropy(m)?, m.b - m.c * m.c / (m.a + 1.0))
}

pub fn holevo_bound(m: &TwoModeCovariance, direction: Direction) -> Result<f64> {
    match direction {
        Direction::Reverse => holevo_bound_rr(m),
        Direction::Direct => holevo_bound_dr(m),
    }
}

/// Differential entropies (nats) of the post-selected, rescaled heterodyne distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Entropies {
    pub h_a: f64,
    pub h_b: f64,
    pub h_ab: f64,
    /// `|integral of Q_out(alpha) - 1|` of the numerically marginalised Alice density.
    pub alice_normalization_error: f64,
}

impl Entropies {
    pub fn mutual_information_bits(&self) -> f64 {
        (self.h_a + self.h_b - self.h_ab) / LN_2
    }
}

/// Mutual information (bits) of the actual post-selected distribution.
pub fn nongaussian_mutual_information(q: &QCoefficients, cfg: &FilterConfig, quad: &QuadratureConfig) -> Result<f64> {
    let filter = cfg.resolve(&q.to_covariance())?;
    Ok(entropies(q, &filter, quad)?.mutual_information_bits())
}

/// Entropies are taken in the measured coordinate `beta_m`; the rescaling inside the disk
/// only adds `2 ln g` per unit of inner probability.
pub fn entropies(q: &QCoefficients, filter: &Filter, quad: &QuadratureConfig) -> Result<Entropies> {
    let r = radial_integrals(q, filter, quad)?;
    let p = r.success_probability();
    if !(p > 0.0) {
        return Err(Error::InvalidState("zero success probability".into()));
    }
    // Terms shared by the joint and Bob's entropy: rescaling Jacobian and ln F.
    let common = (2.0 * filter.gain.ln() * r.inner.p + r.inner.log_f) / p;
    let ra2 = r.inner.ra2 + r.outer.ra2;
    let rb2 = r.inner.rb2 + r.outer.rb2;
    let cross = r.inner.cross + r.outer.cross;
    let h_ab = -(q.norm.ln() - p.ln() + common + (-q.a_p * ra2 - q.b_p * rb2 + 2.0 * q.c_p * cross) / p);
    let s = q.bob_marginal();
    let h_b = -((s / PI).ln() - p.ln() + common - s * rb2 / p);
    let (h_a, norm) = alice_entropy(&r, quad)?;
    let alice_normalization_error = (norm - 1.0).abs();
    if alice_normalization_error > quad.entropy_rel_tol {
        return Err(Error::Convergence {
            what: "Alice marginal normalisation",
            achieved: alice_normalization_error,
            requested: quad.entropy_rel_tol,
        });
    }
    Ok(Entropies {
        h_a,
        h_b,
        h_ab,
        alice_normalization_error,
    })
}

/// `Q_out(alpha)` has no closed form: marginalise `beta_m` numerically at each `r_a`, then
/// integrate `-Q ln Q` over `m` equal subintervals. Returns `(H(a), integral of Q_out(alpha))`.
fn alice_entropy(r: &RadialIntegrals, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    let q = &r.q;
    let filter = &r.filter;
    let p = r.success_probability();
    let k = 4.0 * q.reduced_det();
    let a_marg = q.alice_marginal();
    let sig2 = quad.radial_truncation_sigmas.powi(2);
    let ra_max = ((sig2 + (1.0 / p).ln()) / a_marg).sqrt();
    let rb_far = (filter.cutoff.powi(2) + sig2 / q.bob_marginal()).sqrt();
    let inner_tol = Tolerance::relative(quad.entropy_rel_tol * 1e-3);
    let gc = filter.cutoff;

    // ln Q_out(alpha) at radius ra.
    let log_density = |ra: f64| -> Result<f64> {
        let mu = q.c_p * ra / q.b_p;
        let hi = rb_far.max(mu + quad.radial_truncation_sigmas / q.b_p.sqrt());
        let mut pts = vec![0.0, hi];
        for x in [mu, gc] {
            if x > 0.0 && x < hi {
                pts.push(x);
            }
        }
        pts.sort_by(f64::total_cmp);
        let est = adaptive(
            |rb: f64| {
                let d = rb - mu;
                let z = 2.0 * q.c_p * ra * rb;
                Ok([rb * (-q.b_p * d * d + filter.log_weight(rb)).exp() * bessel_i0e(z)])
            },
            &pts,
            inner_tol,
            "Alice marginal",
        )?;
        Ok((k / (2.0 * PI * p)).ln() - a_marg * ra * ra + est.value[0].ln())
    };

    let rule = GaussLegendre::new(10);
    let h = ra_max / quad.m as f64;
    let mut entropy = 0.0;
    let mut norm = 0.0;
    for i in 0..quad.m {
        let (lo, hi) = (i as f64 * h, (i + 1) as f64 * h);
        for (x, w) in rule.nodes().iter().zip(rule.weights()) {
            let ra = 0.5 * (lo + hi) + 0.5 * h * x;
            let ln_q = log_density(ra)?;
            let dens = 2.0 * PI * ra * ln_q.exp() * 0.5 * h * w;
            if dens > 0.0 {
                entropy -= dens * ln_q;
                norm += dens;
            }
        }
    }
    Ok((entropy, norm))
}

/// Information report for a post-selected covariance. The non-Gaussian method needs the
/// pre-selection Q-function and filter as well.
pub fn info_report(
    m_ps: &TwoModeCovariance,
    direction: Direction,
    method: MiMethod,
    source: Option<(&QCoefficients, &Filter, &QuadratureConfig)>,
) -> Result<InfoReport> {
    let i_ab = match (method, source) {
        (MiMethod::GaussianCm, _) => gaussian_mutual_information(m_ps)?,
        (MiMethod::NonGaussianEntropy, Some((q, f, quad))) => entropies(q, f, quad)?.mutual_information_bits(),
        (MiMethod::NonGaussianEntropy, None) => {
            return Err(Error::Config("entropy method requires the pre-selection state".into()))
        }
    };
    Ok(InfoReport {
        i_ab,
        chi_e: holevo_bound(m_ps, direction)?,
        direction,
        method,
    })
}
