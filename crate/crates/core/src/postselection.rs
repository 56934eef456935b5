//! Measurement-based noiseless amplification: Bob keeps his heterodyne outcome `beta_m`
//! with probability `F(beta_m)` and rescales kept outcomes inside the cut-off disk by `1/g`.
//!
//! All moments are computed in the measured coordinate `beta_m`. The angular integrals
//! collapse to modified Bessel functions of `z = 2 c_p r_a r_b`, leaving a nested 2D radial
//! quadrature whose `beta` axis is split at the cut-off ring.

use crate::error::{Error, Result};
use crate::gaussian::{qfunction_coefficients, QCoefficients, TwoModeCovariance};
use crate::quadrature::{adaptive, Tolerance};
use crate::special::{bessel_i0e, bessel_i1e};

/// How the cut-off radius is specified.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CutoffRule {
    /// Cut-off radius in heterodyne-outcome units.
    Absolute(f64),
    /// `gamma_c = kappa * g * sqrt(V_B)`, with `V_B` the variance of Bob's mode.
    Multiple(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub gain: f64,
    pub cutoff: CutoffRule,
}

impl FilterConfig {
    pub fn absolute(gain: f64, gamma_c: f64) -> Self {
        Self {
            gain,
            cutoff: CutoffRule::Absolute(gamma_c),
        }
    }

    pub fn multiple(gain: f64, kappa: f64) -> Self {
        Self {
            gain,
            cutoff: CutoffRule::Multiple(kappa),
        }
    }

    /// No post-selection at all.
    pub fn none() -> Self {
        Self::absolute(1.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain >= 1.0 && self.gain.is_finite()) {
            return Err(Error::Domain(format!("gain must be >= 1, got {}", self.gain)));
        }
        let (name, v) = match self.cutoff {
            CutoffRule::Absolute(g) => ("cut-off", g),
            CutoffRule::Multiple(k) => ("cut-off multiple", k),
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
        }
        Ok(())
    }

    /// Fix the cut-off against the state it will act on.
    pub fn resolve(&self, m: &TwoModeCovariance) -> Result<Filter> {
        self.validate()?;
        Ok(Filter {
            gain: self.gain,
            cutoff: resolve_cutoff(self, m),
            v_b: m.b,
        })
    }
}

/// `kappa * g * sqrt(b)` for the multiple rule, pass-through otherwise.
pub fn resolve_cutoff(cfg: &FilterConfig, m: &TwoModeCovariance) -> f64 {
    match cfg.cutoff {
        CutoffRule::Absolute(g) => g,
        CutoffRule::Multiple(k) => k * cfg.gain * m.b.sqrt(),
    }
}

/// A filter with an absolute cut-off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Filter {
    pub gain: f64,
    pub cutoff: f64,
    /// Bob's mode variance the cut-off was resolved against.
    pub v_b: f64,
}

impl Filter {
    /// `1 - 1/g^2`.
    pub fn slope(&self) -> f64 {
        1.0 - 1.0 / (self.gain * self.gain)
    }

    /// True when the filter accepts everything and rescales nothing.
    pub fn is_identity(&self) -> bool {
        self.gain == 1.0 || self.cutoff == 0.0
    }

    /// `ln F` at radius `r`.
    pub fn log_weight(&self, r: f64) -> f64 {
        if r < self.cutoff {
            self.slope() * (r * r - self.cutoff * self.cutoff)
        } else {
            0.0
        }
    }

    pub fn weight(&self, r: f64) -> f64 {
        self.log_weight(r).exp()
    }

    /// The cut-off in units of `g sqrt(V_B)`.
    pub fn kappa(&self) -> f64 {
        self.cutoff / (self.gain * self.v_b.sqrt())
    }

    pub fn regime(&self) -> Regime {
        if self.is_identity() || self.kappa() >= GAUSSIAN_KAPPA {
            Regime::Gaussian
        } else {
            Regime::NonGaussian
        }
    }
}

/// Acceptance probability of outcome `beta_m = re + i im`.
pub fn filter_weight(re: f64, im: f64, filter: &Filter) -> f64 {
    filter.weight(re.hypot(im))
}

/// Cut-off multiple at and above which the amplified distribution is treated as Gaussian.
pub const GAUSSIAN_KAPPA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Gaussian,
    NonGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub entropy_rel_tol: f64,
    /// Truncation radius in standard deviations of the relevant marginal.
    pub radial_truncation_sigmas: f64,
    /// Equal subintervals for the numerically marginalised Alice density.
    pub m: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            entropy_rel_tol: 1e-6,
            radial_truncation_sigmas: 10.0,
            m: 1000,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.entropy_rel_tol > 0.0) {
            return Err(Error::Domain("quadrature tolerances must be > 0".into()));
        }
        if self.m < 2 {
            return Err(Error::Domain(format!("quadrature m must be >= 2, got {}", self.m)));
        }
        if !(self.radial_truncation_sigmas > 0.0) {
            return Err(Error::Domain("radial truncation must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostSelectedState {
    pub covariance: TwoModeCovariance,
    pub success_probability: f64,
    pub regime: Regime,
    pub filter: Filter,
    /// `|integral of Q_out - 1|` after normalisation by the quadrature's own `P_s`
    /// (measured on the unfiltered density).
    pub normalization_error: f64,
}

/// Raw radial integrals over one `beta_m` region, all carrying the weight
/// `W = K r_a r_b exp(-a_p r_a^2 - b_p r_b^2 + ln F(r_b))` with `K = 4 (a_p b_p - c_p^2)`:
/// `[W I0, W I0 r_a^2, W I0 r_b^2, W I1 r_a r_b, W I0 ln F, unfiltered W I0]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PieceIntegrals {
    pub p: f64,
    pub ra2: f64,
    pub rb2: f64,
    pub cross: f64,
    pub log_f: f64,
    pub mass: f64,
}

impl PieceIntegrals {
    const ZERO: PieceIntegrals = PieceIntegrals {
        p: 0.0,
        ra2: 0.0,
        rb2: 0.0,
        cross: 0.0,
        log_f: 0.0,
        mass: 0.0,
    };
}

/// Radial integrals inside (`|beta_m| < gamma_c`, rescaled) and outside the cut-off disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialIntegrals {
    pub q: QCoefficients,
    pub filter: Filter,
    pub inner: PieceIntegrals,
    pub outer: PieceIntegrals,
    /// Upper bound on the mass beyond the truncation radii.
    pub tail_bound: f64,
}

impl RadialIntegrals {
    pub fn success_probability(&self) -> f64 {
        self.inner.p + self.outer.p
    }

    /// Post-selected covariance from the second moments of the rescaled distribution.
    pub fn covariance(&self) -> TwoModeCovariance {
        let g = self.filter.gain;
        let ps = self.success_probability();
        let a = 2.0 * (self.inner.ra2 + self.outer.ra2) / ps - 1.0;
        let b = 2.0 * (self.inner.rb2 / (g * g) + self.outer.rb2) / ps - 1.0;
        let c = 2.0 * (self.inner.cross / g + self.outer.cross) / ps;
        TwoModeCovariance::new(a, b, c)
    }

    pub fn normalization_error(&self) -> f64 {
        (self.inner.mass + self.outer.mass - 1.0).abs()
    }
}

/// Radii beyond which the unfiltered density is negligible: `(r_beta_max, alpha half-width)`.
fn truncation(q: &QCoefficients, filter: &Filter, sigmas: f64) -> (f64, f64) {
    let s = q.bob_marginal();
    // Bob's marginal tail beyond `r` is exp(-s r^2); measure it from the cut-off so the
    // exterior, which every filter keeps, is resolved to `exp(-sigmas^2)` relative accuracy.
    let rb_max = (filter.cutoff * filter.cutoff + sigmas * sigmas / s).sqrt();
    // Conditional on r_b, Alice's radius is concentrated around (c_p/a_p) r_b.
    let ra_width = sigmas / q.a_p.sqrt();
    (rb_max, ra_width)
}

/// `[int r e0 i0e, int r^3 e0 i0e, int r^2 e0 i1e]` over `r_a` at fixed `r_b`, where
/// `e0 = exp(-a_p (r_a - c_p r_b / a_p)^2)` so that every integrand is bounded by 1.
fn alpha_integrals(q: &QCoefficients, rb: f64, ra_width: f64, tol: Tolerance) -> Result<[f64; 3]> {
    let (a, c) = (q.a_p, q.c_p);
    let peak = c * rb / a;
    let ra_max = peak + ra_width;
    let points = if peak > 0.0 { [0.0, peak, ra_max] } else { [0.0, 0.0, ra_max] };
    let est = adaptive(
        |ra: f64| {
            let d = ra - peak;
            let e0 = (-a * d * d).exp();
            let z = 2.0 * c * ra * rb;
            let w0 = ra * e0 * bessel_i0e(z);
            Ok([w0, w0 * ra * ra, ra * ra * e0 * bessel_i1e(z)])
        },
        &points,
        tol,
        "alpha radial integral",
    )?;
    Ok(est.value)
}

fn piece(q: &QCoefficients, filter: &Filter, lo: f64, hi: f64, ra_width: f64, rel_tol: f64) -> Result<PieceIntegrals> {
    if hi <= lo {
        return Ok(PieceIntegrals::ZERO);
    }
    let k = 4.0 * q.reduced_det();
    let s = q.bob_marginal();
    let inner_tol = Tolerance::relative(rel_tol * 1e-2);
    let est = adaptive(
        |rb: f64| {
            let [j0, j2, j1] = alpha_integrals(q, rb, ra_width, inner_tol)?;
            let log_f = filter.log_weight(rb);
            let base = k * rb * (-s * rb * rb).exp();
            let w = base * log_f.exp();
            Ok([w * j0, w * j2, w * rb * rb * j0, w * rb * j1, w * log_f * j0, base * j0])
        },
        &[lo, hi],
        Tolerance::relative(rel_tol),
        "post-selection moments",
    )?;
    let [p, ra2, rb2, cross, log_f, mass] = est.value;
    Ok(PieceIntegrals {
        p,
        ra2,
        rb2,
        cross,
        log_f,
        mass,
    })
}

/// All radial integrals of the filtered Q-function. Never short-circuits, so it also
/// serves as a check of the quadrature at `g = 1`.
pub fn radial_integrals(q: &QCoefficients, filter: &Filter, quad: &QuadratureConfig) -> Result<RadialIntegrals> {
    quad.validate()?;
    let (rb_max, ra_width) = truncation(q, filter, quad.radial_truncation_sigmas);
    let gc = filter.cutoff.min(rb_max);
    let inner = piece(q, filter, 0.0, gc, ra_width, quad.rel_tol)?;
    let outer = piece(q, filter, gc, rb_max, ra_width, quad.rel_tol)?;
    let ps = inner.p + outer.p;
    let s = q.bob_marginal();
    let sig2 = quad.radial_truncation_sigmas.powi(2);
    let tail_bound = (-s * rb_max * rb_max).exp() + (-sig2).exp() * ps;
    Ok(RadialIntegrals {
        q: *q,
        filter: *filter,
        inner,
        outer,
        tail_bound,
    })
}

pub fn success_probability(q: &QCoefficients, cfg: &FilterConfig, quad: &QuadratureConfig) -> Result<f64> {
    Ok(postselected_covariance(q, cfg, quad)?.success_probability)
}

/// Success probability and covariance of the post-selected, rescaled state.
pub fn postselected_covariance(q: &QCoefficients, cfg: &FilterConfig, quad: &QuadratureConfig) -> Result<PostSelectedState> {
    postselect_impl(&q.to_covariance(), q, cfg, quad)
}

/// Convenience wrapper starting from the covariance matrix; identity filters return `m`
/// bit-for-bit.
pub fn postselect(m: &TwoModeCovariance, cfg: &FilterConfig, quad: &QuadratureConfig) -> Result<PostSelectedState> {
    postselect_impl(m, &qfunction_coefficients(m)?, cfg, quad)
}

fn postselect_impl(
    m: &TwoModeCovariance,
    q: &QCoefficients,
    cfg: &FilterConfig,
    quad: &QuadratureConfig,
) -> Result<PostSelectedState> {
    let m = *m;
    let filter = cfg.resolve(&m)?;
    quad.validate()?;
    if filter.is_identity() {
        return Ok(PostSelectedState {
            covariance: m,
            success_probability: 1.0,
            regime: Regime::Gaussian,
            filter,
            normalization_error: 0.0,
        });
    }
    let r = radial_integrals(q, &filter, quad)?;
    let ps = r.success_probability();
    if !(ps > 0.0 && ps.is_finite()) {
        return Err(Error::InvalidState(format!("success probability {ps} is not positive")));
    }
    if r.tail_bound > 1e-12 * ps {
        return Err(Error::Convergence {
            what: "radial truncation",
            achieved: r.tail_bound / ps,
            requested: 1e-12,
        });
    }
    let norm_err = r.normalization_error();
    let norm_tol = (100.0 * quad.rel_tol).max(1e-12);
    if norm_err > norm_tol {
        return Err(Error::Convergence {
            what: "Q-function normalisation",
            achieved: norm_err,
            requested: norm_tol,
        });
    }
    if ps > 1.0 + norm_tol {
        return Err(Error::InvalidState(format!("success probability {ps} exceeds 1")));
    }
    let ps = ps.min(1.0);
    let covariance = r.covariance();
    let (_, nu2) = covariance
        .symplectic_eigenvalues()
        .map_err(|e| e.with_context("post-selected covariance"))?;
    if nu2 < 1.0 - 1e-6 {
        return Err(Error::InvalidState(format!(
            "post-selected covariance violates uncertainty (nu = {nu2})"
        )));
    }
    Ok(PostSelectedState {
        covariance,
        success_probability: ps,
        regime: filter.regime(),
        filter,
        normalization_error: norm_err,
    })
}
