//! Composable finite-size key rate against collective attacks.

use crate::error::{Error, Result};
use crate::postselection::Regime;

/// Failure-probability budget and block parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityBudget {
    pub epsilon: f64,
    pub eps_sm: f64,
    pub eps_bar: f64,
    pub eps_pe: f64,
    pub eps_cor: f64,
    /// Block size in states; `f64::INFINITY` for the asymptotic limit.
    pub n: f64,
    /// Discretisation parameter (bits per quadrature).
    pub d: u32,
    /// Symbols disclosed for parameter estimation.
    pub k: f64,
}

impl SecurityBudget {
    /// Equal five-way split: `eps = 2 eps_sm + eps_bar + eps_pe + eps_cor`.
    pub fn equal_split(epsilon: f64, n: f64, d: u32) -> Result<Self> {
        let e = epsilon / 5.0;
        Self::with_components(epsilon, e, e, e, e, n, d)
    }

    pub fn with_components(
        epsilon: f64,
        eps_sm: f64,
        eps_bar: f64,
        eps_pe: f64,
        eps_cor: f64,
        n: f64,
        d: u32,
    ) -> Result<Self> {
        let b = Self {
            epsilon,
            eps_sm,
            eps_bar,
            eps_pe,
            eps_cor,
            n,
            d,
            k: 0.0,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn with_disclosed(mut self, k: f64) -> Result<Self> {
        self.k = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_block_size(mut self, n: f64) -> Result<Self> {
        self.n = n;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.epsilon, self.eps_sm, self.eps_bar, self.eps_pe, self.eps_cor];
        if parts.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config(format!("security parameters must lie in (0, 1): {parts:?}")));
        }
        let sum = 2.0 * self.eps_sm + self.eps_bar + self.eps_pe + self.eps_cor;
        if (sum - self.epsilon).abs() > 1e-15 * self.epsilon {
            return Err(Error::Config(format!(
                "epsilon components sum to {sum:e}, expected {:e}",
                self.epsilon
            )));
        }
        if !(self.n >= 1.0) {
            return Err(Error::Config(format!("block size must be >= 1, got {}", self.n)));
        }
        if self.d < 1 {
            return Err(Error::Config("discretisation d must be >= 1".into()));
        }
        if !(self.k >= 0.0 && self.k < self.symbols()) {
            return Err(Error::Config(format!("disclosed count k={} must lie in [0, N)", self.k)));
        }
        Ok(())
    }

    /// Symbol count `N = 2n`.
    pub fn symbols(&self) -> f64 {
        2.0 * self.n
    }

    pub fn is_asymptotic(&self) -> bool {
        self.n.is_infinite()
    }
}

/// Finite-size correction term for `n_eff` symbols.
pub fn aep_delta(n_eff: f64, budget: &SecurityBudget) -> f64 {
    let d = budget.d as f64;
    let (eps, sm) = (budget.epsilon, budget.eps_sm);
    (d + 1.0).powi(2)
        + 4.0 * (d + 1.0) * (2.0 / (sm * sm)).log2().sqrt()
        + 2.0 * (2.0 / (eps * eps * sm)).log2()
        + 4.0 * sm * d / (eps * n_eff.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    pub success_probability: f64,
    pub i_ab: f64,
    pub chi_e: f64,
    pub beta: f64,
    /// `P_s (beta I - chi)`, bits per symbol.
    pub k_asym: f64,
    /// Finite-size rate in bits per symbol; may be negative.
    pub k_fs: f64,
    /// AEP correction evaluated at the effective symbol count.
    pub delta: f64,
    /// Symbols left for key extraction, `P_s N - k`.
    pub n_eff: f64,
    pub secure: bool,
    pub regime: Regime,
    pub budget: SecurityBudget,
}

impl KeyRateReport {
    /// Rate for tables, floored at zero.
    pub fn floored_rate(&self) -> f64 {
        self.k_fs.max(0.0)
    }
}

/// Key length over the raw symbol count, for `n_eff` symbols entering extraction.
fn key_fraction(n_eff: f64, n_total: f64, margin: f64, budget: &SecurityBudget) -> (f64, f64) {
    let delta = aep_delta(n_eff, budget);
    let len = n_eff * margin - n_eff.sqrt() * delta - 2.0 * (1.0 / (2.0 * budget.eps_bar)).log2();
    (len / n_total, delta)
}

pub fn finite_key_rate(
    i_ab: f64,
    chi_e: f64,
    success_probability: f64,
    beta: f64,
    budget: &SecurityBudget,
    regime: Regime,
) -> Result<KeyRateReport> {
    budget.validate()?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Config(format!("reconciliation efficiency must lie in (0, 1], got {beta}")));
    }
    if !(success_probability > 0.0 && success_probability <= 1.0) {
        return Err(Error::Domain(format!("success probability {success_probability} outside (0, 1]")));
    }
    if !(i_ab.is_finite() && chi_e.is_finite()) {
        return Err(Error::InvalidState("non-finite information quantities".into()));
    }
    let margin = beta * i_ab - chi_e;
    let k_asym = success_probability * margin;
    let (k_fs, delta, n_eff) = if budget.is_asymptotic() {
        (k_asym, 0.0, f64::INFINITY)
    } else {
        let n = budget.symbols();
        let n_eff = success_probability * n - budget.k;
        if !(n_eff > 0.0) {
            return Err(Error::InsufficientData(format!(
                "only {:.3e} post-selected symbols for {} disclosed",
                success_probability * n,
                budget.k
            )));
        }
        let (k_fs, delta) = key_fraction(n_eff, n, margin, budget);
        (k_fs, delta, n_eff)
    };
    Ok(KeyRateReport {
        success_probability,
        i_ab,
        chi_e,
        beta,
        k_asym,
        k_fs,
        delta,
        n_eff,
        secure: k_fs > 0.0,
        regime,
        budget: *budget,
    })
}

/// Rate of the protocol without post-selection.
pub fn plain_key_rate(i_ab: f64, chi_e: f64, beta: f64, budget: &SecurityBudget) -> Result<KeyRateReport> {
    finite_key_rate(i_ab, chi_e, 1.0, beta, budget, Regime::Gaussian)
}
