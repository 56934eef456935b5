//! Two-mode Gaussian state algebra in shot-noise units (vacuum variance 1).
//!
//! A state is described by `M = [a I, c Z; c Z, b I]`. Heterodyne outcomes `(alpha, beta)` are
//! distributed according to the Husimi Q-function, whose per-quadrature variance is
//! `(variance + 1) / 4` in the coherent-amplitude units used by the filter and the moment
//! definitions `a = <[2 Re alpha]^2> - 1`. Measured data in prepare-and-measure units are
//! `sqrt(2)` times larger, with per-quadrature variance `(variance + 1) / 2`.

use crate::error::{Error, Result};

/// Tolerance below which a symplectic eigenvalue under 1 is treated as exactly 1.
pub const PURITY_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCovariance {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl TwoModeCovariance {
    pub const VACUUM: TwoModeCovariance = TwoModeCovariance { a: 1.0, b: 1.0, c: 0.0 };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn det(&self) -> f64 {
        let d = self.a * self.b - self.c * self.c;
        d * d
    }

    /// Full 4x4 matrix in (q_A, p_A, q_B, p_B) ordering.
    pub fn to_matrix(&self) -> [[f64; 4]; 4] {
        let (a, b, c) = (self.a, self.b, self.c);
        [[a, 0.0, c, 0.0], [0.0, a, 0.0, -c], [c, 0.0, b, 0.0], [0.0, -c, 0.0, b]]
    }

    /// Swap the roles of the two modes.
    pub fn swapped(&self) -> Self {
        Self::new(self.b, self.a, self.c)
    }

    /// Largest elementwise relative difference to `other`.
    pub fn max_rel_diff(&self, other: &TwoModeCovariance) -> f64 {
        let rel = |x: f64, y: f64| (x - y).abs() / y.abs().max(1e-300);
        rel(self.a, other.a).max(rel(self.b, other.b)).max(rel(self.c, other.c))
    }

    /// Symplectic eigenvalues (nu_1 >= nu_2).
    pub fn symplectic_eigenvalues(&self) -> Result<(f64, f64)> {
        symplectic_eigenvalues(self)
    }

    pub fn entropy(&self) -> Result<f64> {
        von_neumann_entropy(self)
    }

    pub fn is_finite(&self) -> bool {
        self.a.is_finite() && self.b.is_finite() && self.c.is_finite()
    }
}

/// Exponent coefficients of the two-mode Q-function,
/// `Q(alpha, beta) = norm * exp(-a_p |alpha|^2 - b_p |beta|^2 + 2 c_p Re(alpha beta))`,
/// i.e. `Gamma = 2 (M + I)^-1 = [a_p I, -c_p Z; -c_p Z, b_p I]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QCoefficients {
    pub a_p: f64,
    pub b_p: f64,
    pub c_p: f64,
    /// `sqrt(det Gamma) / pi^2`.
    pub norm: f64,
}

impl QCoefficients {
    /// `a_p b_p - c_p^2`, which equals `sqrt(det Gamma)`.
    pub fn reduced_det(&self) -> f64 {
        self.a_p * self.b_p - self.c_p * self.c_p
    }

    /// Invert `Gamma = 2 (M + I)^-1` back to the covariance matrix.
    pub fn to_covariance(&self) -> TwoModeCovariance {
        let d = self.reduced_det();
        TwoModeCovariance::new(2.0 * self.b_p / d - 1.0, 2.0 * self.a_p / d - 1.0, 2.0 * self.c_p / d)
    }

    /// Exponent coefficient of Bob's marginal, `Q(beta) = (s / pi) exp(-s |beta|^2)`.
    pub fn bob_marginal(&self) -> f64 {
        self.b_p - self.c_p * self.c_p / self.a_p
    }

    /// Exponent coefficient of Alice's marginal.
    pub fn alice_marginal(&self) -> f64 {
        self.a_p - self.c_p * self.c_p / self.b_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub distance_km: f64,
    pub loss_db_per_km: f64,
    pub transmissivity: f64,
    pub excess_noise: f64,
}

impl ChannelModel {
    pub fn from_distance(distance_km: f64, loss_db_per_km: f64, excess_noise: f64) -> Result<Self> {
        if !(distance_km >= 0.0) || !(loss_db_per_km >= 0.0) {
            return Err(Error::Domain(format!(
                "distance {distance_km} km and loss {loss_db_per_km} dB/km must be non-negative"
            )));
        }
        if !(excess_noise >= 0.0) {
            return Err(Error::Domain(format!("excess noise {excess_noise} must be non-negative")));
        }
        Ok(Self {
            distance_km,
            loss_db_per_km,
            transmissivity: transmissivity_from_distance(distance_km, loss_db_per_km),
            excess_noise,
        })
    }

    /// A channel given directly by its transmissivity; the distance is back-filled from
    /// `loss_db_per_km` when that is positive.
    pub fn from_transmissivity(transmissivity: f64, loss_db_per_km: f64, excess_noise: f64) -> Result<Self> {
        if !(transmissivity > 0.0 && transmissivity <= 1.0) {
            return Err(Error::Domain(format!("transmissivity {transmissivity} outside (0, 1]")));
        }
        if !(excess_noise >= 0.0) {
            return Err(Error::Domain(format!("excess noise {excess_noise} must be non-negative")));
        }
        let distance_km = if loss_db_per_km > 0.0 {
            -10.0 * transmissivity.log10() / loss_db_per_km
        } else {
            0.0
        };
        Ok(Self {
            distance_km,
            loss_db_per_km,
            transmissivity,
            excess_noise,
        })
    }

    /// Added noise referred to the input, `xi + 1/T - 1`.
    pub fn line_noise(&self) -> f64 {
        self.excess_noise + 1.0 / self.transmissivity - 1.0
    }
}

pub fn transmissivity_from_distance(distance_km: f64, loss_db_per_km: f64) -> f64 {
    10f64.powf(-loss_db_per_km * distance_km / 10.0)
}

/// Quadrature variance `V = (1 + chi^2) / (1 - chi^2)` of a TMSV with squeezing `chi = tanh r`.
pub fn tmsv_variance(chi: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&chi) {
        return Err(Error::Domain(format!("squeezing parameter chi = {chi} outside [0, 1)")));
    }
    let c2 = chi * chi;
    Ok((1.0 + c2) / (1.0 - c2))
}

/// Inverse of [`tmsv_variance`].
pub fn chi_from_variance(v: f64) -> Result<f64> {
    if !(v >= 1.0) || !v.is_finite() {
        return Err(Error::Domain(format!("variance {v} must be finite and >= 1")));
    }
    Ok(((v - 1.0) / (v + 1.0)).sqrt())
}

pub fn tmsv_covariance(chi: f64) -> Result<TwoModeCovariance> {
    let v = tmsv_variance(chi)?;
    Ok(TwoModeCovariance::new(v, v, (v * v - 1.0).sqrt()))
}

/// State shared after mode B crosses a channel with transmissivity `T` and excess noise `xi`.
pub fn channel_output_covariance(chi: f64, channel: &ChannelModel) -> Result<TwoModeCovariance> {
    let t = channel.transmissivity;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("transmissivity {t} outside (0, 1]")));
    }
    if !(channel.excess_noise >= 0.0) {
        return Err(Error::Domain(format!("excess noise {} must be non-negative", channel.excess_noise)));
    }
    let v = tmsv_variance(chi)?;
    Ok(TwoModeCovariance::new(
        v,
        t * (v + channel.line_noise()),
        t.sqrt() * (v * v - 1.0).sqrt(),
    ))
}

pub fn qfunction_coefficients(m: &TwoModeCovariance) -> Result<QCoefficients> {
    let d = (m.a + 1.0) * (m.b + 1.0) - m.c * m.c;
    if !(d > 0.0) || !m.is_finite() {
        return Err(Error::InvalidState(format!(
            "M + I is not positive definite (a={}, b={}, c={})",
            m.a, m.b, m.c
        )));
    }
    let a_p = 2.0 * (m.b + 1.0) / d;
    let b_p = 2.0 * (m.a + 1.0) / d;
    let c_p = 2.0 * m.c / d;
    let reduced = a_p * b_p - c_p * c_p;
    Ok(QCoefficients {
        a_p,
        b_p,
        c_p,
        norm: reduced / (std::f64::consts::PI * std::f64::consts::PI),
    })
}

/// `nu^2 = (Delta +- sqrt(Delta^2 - 4 det M)) / 2` with `Delta = a^2 + b^2 - 2c^2`.
pub fn symplectic_eigenvalues(m: &TwoModeCovariance) -> Result<(f64, f64)> {
    let delta = m.a * m.a + m.b * m.b - 2.0 * m.c * m.c;
    let det = m.det();
    let mut disc = delta * delta - 4.0 * det;
    let scale = (delta * delta).max(1.0);
    if disc < 0.0 {
        if disc < -1e-9 * scale {
            return Err(Error::InvalidState(format!(
                "negative discriminant {disc} for symplectic spectrum (a={}, b={}, c={})",
                m.a, m.b, m.c
            )));
        }
        disc = 0.0;
    }
    let root = disc.sqrt();
    let nu1 = (0.5 * (delta + root)).max(0.0).sqrt();
    // det / nu1^2 is the stable form of the smaller root.
    let nu2 = if nu1 > 0.0 { det.sqrt() / nu1 } else { 0.0 };
    Ok((clamp_pure(nu1), clamp_pure(nu2)))
}

fn clamp_pure(nu: f64) -> f64 {
    if nu < 1.0 && 1.0 - nu <= PURITY_CLAMP {
        1.0
    } else {
        nu
    }
}

/// `G(x) = (x + 1) log2(x + 1) - x log2 x`, with `G(0) = 0`.
pub fn entropy_g(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1e-8 {
        // ln(1+x) ~ x - x^2/2, so (x+1)ln(1+x) ~ x + x^2/2
        return (x * (1.0 - x.ln()) + 0.5 * x * x) / std::f64::consts::LN_2;
    }
    ((x + 1.0) * x.ln_1p() - x * x.ln()) / std::f64::consts::LN_2
}

/// Entropy (bits) of a single-mode thermal state with symplectic eigenvalue `nu`.
pub fn mode_entropy(nu: f64) -> Result<f64> {
    let nu = clamp_pure(nu);
    if !(nu >= 1.0) {
        return Err(Error::InvalidState(format!("symplectic eigenvalue {nu} < 1")));
    }
    Ok(entropy_g(0.5 * (nu - 1.0)))
}

pub fn von_neumann_entropy(m: &TwoModeCovariance) -> Result<f64> {
    let (nu1, nu2) = symplectic_eigenvalues(m)?;
    Ok(mode_entropy(nu1)? + mode_entropy(nu2)?)
}
