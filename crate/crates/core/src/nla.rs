//! Ideal noiseless linear amplifier as an equivalent Gaussian system.
//!
//! Amplifying mode B of a TMSV(chi) after a channel (T, xi) with gain g yields the same
//! covariance matrix as TMSV(chi_g) sent through a channel (T_g, xi_g) with no amplifier.
//! The map is only meaningful when the effective parameters are physical; validity is
//! reported per constraint so optimizers can probe the boundary.

use crate::error::{Error, Result};
use crate::gaussian::{channel_output_covariance, ChannelModel, TwoModeCovariance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveParams {
    pub chi: f64,
    pub transmissivity: f64,
    pub excess_noise: f64,
    pub gain: f64,
}

impl EffectiveParams {
    /// `0 <= chi_g < 1`
    pub fn chi_ok(&self) -> bool {
        (0.0..1.0).contains(&self.chi)
    }

    /// `0 <= T_g <= 1`
    pub fn transmissivity_ok(&self) -> bool {
        (0.0..=1.0).contains(&self.transmissivity)
    }

    /// `xi_g >= 0`
    pub fn excess_noise_ok(&self) -> bool {
        self.excess_noise >= 0.0
    }

    pub fn is_physical(&self) -> bool {
        self.chi_ok() && self.transmissivity_ok() && self.excess_noise_ok()
    }

    /// First violated constraint, if any.
    pub fn violation(&self) -> Option<(&'static str, f64)> {
        if !self.chi_ok() {
            Some(("0 <= chi_g < 1", self.chi))
        } else if !self.transmissivity_ok() {
            Some(("0 <= T_g <= 1", self.transmissivity))
        } else if !self.excess_noise_ok() {
            Some(("xi_g >= 0", self.excess_noise))
        } else {
            None
        }
    }
}

fn check_inputs(t: f64, xi: f64, g: f64) -> Result<()> {
    if !(g >= 1.0) || !g.is_finite() {
        return Err(Error::Domain(format!("gain {g} must be >= 1")));
    }
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("transmissivity {t} outside (0, 1]")));
    }
    if !(xi >= 0.0) {
        return Err(Error::Domain(format!("excess noise {xi} must be non-negative")));
    }
    Ok(())
}

/// Squared squeezing amplification `chi_g^2 / chi^2`.
fn squeezing_ratio(t: f64, xi: f64, g: f64) -> Result<f64> {
    let g2m1 = g * g - 1.0;
    let den = g2m1 * xi * t - 2.0;
    if den == 0.0 {
        return Err(Error::Singular(format!(
            "(g^2-1) xi T = 2 at g={g}, xi={xi}, T={t}"
        )));
    }
    let ratio = (g2m1 * (xi - 2.0) * t - 2.0) / den;
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Singular(format!(
            "effective squeezing undefined at g={g}, xi={xi}, T={t} (ratio {ratio})"
        )));
    }
    Ok(ratio)
}

pub fn effective_parameters(chi: f64, t: f64, xi: f64, g: f64) -> Result<EffectiveParams> {
    check_inputs(t, xi, g)?;
    if !(0.0..1.0).contains(&chi) {
        return Err(Error::Domain(format!("squeezing parameter chi = {chi} outside [0, 1)")));
    }
    let ratio = squeezing_ratio(t, xi, g)?;
    let g2m1 = g * g - 1.0;
    let t_den = g2m1 * t * (0.25 * g2m1 * (xi - 2.0) * xi * t - xi + 1.0) + 1.0;
    if t_den == 0.0 {
        return Err(Error::Singular(format!("effective transmissivity diverges at g={g}, xi={xi}, T={t}")));
    }
    Ok(EffectiveParams {
        chi: chi * ratio.sqrt(),
        transmissivity: g * g * t / t_den,
        excess_noise: xi - 0.5 * g2m1 * (xi - 2.0) * xi * t,
        gain: g,
    })
}

/// Largest input squeezing for which the effective squeezing stays below 1.
pub fn max_physical_chi(t: f64, xi: f64, g: f64) -> Result<f64> {
    check_inputs(t, xi, g)?;
    Ok(1.0 / squeezing_ratio(t, xi, g)?.sqrt())
}

/// Covariance matrix of the amplified state, valid only for physical effective parameters.
pub fn effective_covariance(params: &EffectiveParams) -> Result<TwoModeCovariance> {
    if let Some((constraint, value)) = params.violation() {
        return Err(Error::Unphysical { constraint, value });
    }
    if params.transmissivity == 0.0 {
        return Err(Error::Unphysical {
            constraint: "T_g > 0",
            value: 0.0,
        });
    }
    let channel = ChannelModel::from_transmissivity(params.transmissivity, 0.0, params.excess_noise)?;
    channel_output_covariance(params.chi, &channel)
}
