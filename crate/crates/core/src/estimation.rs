//! Parameter estimation from prepare-and-measure data.
//!
//! Data values use the prepare-and-measure scale in which Bob's variance is `(b + 1) / 2`.
//! Gaussian post-selection follows the linear model `y = t x + z` and its maximum-likelihood
//! estimators; non-Gaussian post-selection estimates the covariance directly from
//! entanglement-based data reconstructed before filtering.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use statrs::function::erf::erfc_inv;

use crate::error::{Error, Result};
use crate::gaussian::TwoModeCovariance;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl SampleSet {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::InsufficientData(format!(
                "sample lengths differ: {} vs {}",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(Error::InsufficientData(format!("need at least 2 samples, got {}", xs.len())));
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    /// Random subset of `k` pairs chosen by a seeded shuffle.
    pub fn subset(&self, k: usize, seed: u64) -> Result<SampleSet> {
        let idx = pe_subset(self.len(), k, seed)?;
        SampleSet::new(
            idx.iter().map(|&i| self.xs[i]).collect(),
            idx.iter().map(|&i| self.ys[i]).collect(),
        )
    }
}

/// First `k` indices of a seeded Fisher–Yates shuffle of `0..n`, in shuffled order.
pub fn pe_subset(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k > n {
        return Err(Error::InsufficientData(format!("requested {k} of {n} samples")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (chosen, _) = idx.partial_shuffle(&mut rng, k);
    Ok(chosen.to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub t: f64,
    pub sigma2: f64,
    pub va: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleResult {
    pub estimate: PointEstimate,
    pub dt: f64,
    pub dsigma2: f64,
    pub dva: f64,
    pub z: f64,
    pub k: usize,
}

impl MleResult {
    pub fn t_min(&self) -> f64 {
        self.estimate.t - self.dt
    }

    pub fn sigma2_max(&self) -> f64 {
        self.estimate.sigma2 + self.dsigma2
    }

    pub fn va_max(&self) -> f64 {
        self.estimate.va + self.dva
    }
}

pub fn mle_estimate(samples: &SampleSet) -> Result<PointEstimate> {
    let k = samples.len() as f64;
    let sxx: f64 = samples.xs.iter().map(|x| x * x).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("all x values are zero".into()));
    }
    let sxy: f64 = samples.xs.iter().zip(&samples.ys).map(|(x, y)| x * y).sum();
    let t = sxy / sxx;
    let sigma2 = samples
        .xs
        .iter()
        .zip(&samples.ys)
        .map(|(x, y)| (y - t * x).powi(2))
        .sum::<f64>()
        / k;
    Ok(PointEstimate { t, sigma2, va: sxx / k })
}

/// Two-sided normal quantile: `erfc(z / sqrt 2) = eps_pe`.
pub fn confidence_quantile(eps_pe: f64) -> Result<f64> {
    if !(eps_pe > 0.0 && eps_pe < 1.0) {
        return Err(Error::Domain(format!("eps_PE must lie in (0, 1), got {eps_pe}")));
    }
    Ok(std::f64::consts::SQRT_2 * erfc_inv(eps_pe))
}

/// Half-widths of the confidence intervals; `sum x^2` is recovered as `k * V_A`.
pub fn confidence_bounds(est: &PointEstimate, k: usize, eps_pe: f64) -> Result<MleResult> {
    if k < 2 {
        return Err(Error::InsufficientData(format!("need at least 2 samples, got {k}")));
    }
    let z = confidence_quantile(eps_pe)?;
    let kf = k as f64;
    let root2k = (2.0 / kf).sqrt();
    Ok(MleResult {
        estimate: *est,
        dt: z * (est.sigma2 / (kf * est.va)).sqrt(),
        dsigma2: z * est.sigma2 * root2k,
        dva: z * est.va * root2k,
        z,
        k,
    })
}

pub fn estimate_with_bounds(samples: &SampleSet, eps_pe: f64) -> Result<MleResult> {
    confidence_bounds(&mle_estimate(samples)?, samples.len(), eps_pe)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCase {
    pub covariance: TwoModeCovariance,
    /// `t - dt` was negative and has been clamped to zero.
    pub clamped: bool,
}

/// Covariance maximising Eve's information within the confidence region.
pub fn worstcase_covariance(est: &MleResult) -> WorstCase {
    let raw = est.t_min();
    let clamped = raw < 0.0;
    let t = raw.max(0.0);
    let va = est.va_max();
    let s2 = est.sigma2_max();
    WorstCase {
        covariance: TwoModeCovariance::new(
            va + 1.0,
            2.0 * (t * t * va + s2) - 1.0,
            std::f64::consts::SQRT_2 * t * (va * va + 2.0 * va).sqrt(),
        ),
        clamped,
    }
}

/// Linear-model parameters implied by effective channel parameters.
pub fn model_parameters(va: f64, transmissivity: f64, excess_noise: f64) -> PointEstimate {
    PointEstimate {
        t: (transmissivity / 2.0).sqrt(),
        sigma2: 1.0 + transmissivity * excess_noise / 2.0,
        va,
    }
}

/// Scale factor taking Alice's prepare-and-measure value to the entanglement-based picture.
pub fn pm_to_eb_factor(va: f64) -> Result<f64> {
    if !(va > 0.0) {
        return Err(Error::Domain(format!("modulation variance must be > 0, got {va}")));
    }
    Ok(((va + 2.0) / (2.0 * va)).sqrt())
}

pub fn pm_to_eb_rescale(x_pm: f64, va: f64) -> Result<f64> {
    Ok(x_pm * pm_to_eb_factor(va)?)
}

/// Covariance estimated directly from entanglement-based data, with normal-approximation
/// half-widths `z * |value| * sqrt(2 / k)` mirroring the variance bounds. These widths are
/// an extrapolation of the Gaussian-model bounds, not a derived confidence region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectEstimate {
    pub covariance: TwoModeCovariance,
    pub da: f64,
    pub db: f64,
    pub dc: f64,
    pub k: usize,
}

impl DirectEstimate {
    /// Widen the diagonal and shrink the correlation by one half-width each.
    pub fn pessimistic(&self) -> TwoModeCovariance {
        let c = self.covariance.c;
        TwoModeCovariance::new(
            self.covariance.a + self.da,
            self.covariance.b + self.db,
            c.signum() * (c.abs() - self.dc).max(0.0),
        )
    }
}

pub fn direct_covariance(samples: &SampleSet, eps_pe: f64) -> Result<DirectEstimate> {
    let k = samples.len();
    let kf = k as f64;
    let mean = |f: &dyn Fn(f64, f64) -> f64| samples.xs.iter().zip(&samples.ys).map(|(&x, &y)| f(x, y)).sum::<f64>() / kf;
    let xx = mean(&|x, _| x * x);
    let yy = mean(&|_, y| y * y);
    let xy = mean(&|x, y| x * y);
    if xx == 0.0 || yy == 0.0 {
        return Err(Error::DegenerateData("zero-variance data".into()));
    }
    let covariance = TwoModeCovariance::new(2.0 * xx - 1.0, 2.0 * yy - 1.0, 2.0 * xy);
    let w = confidence_quantile(eps_pe)? * (2.0 / kf).sqrt();
    Ok(DirectEstimate {
        covariance,
        da: w * covariance.a.abs(),
        db: w * covariance.b.abs(),
        dc: w * covariance.c.abs(),
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nla::{effective_covariance, effective_parameters};
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(k: usize, t: f64, s2: f64, va: f64, seed: u64) -> SampleSet {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(k);
        let mut ys = Vec::with_capacity(k);
        for _ in 0..k {
            let x: f64 = StandardNormal.sample(&mut rng);
            let x = va.sqrt() * x;
            let n: f64 = StandardNormal.sample(&mut rng);
            xs.push(x);
            ys.push(t * x + s2.sqrt() * n);
        }
        SampleSet::new(xs, ys).unwrap()
    }

    #[test]
    fn exact_line() {
        let xs = vec![1.0, -2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x).collect();
        let e = mle_estimate(&SampleSet::new(xs, ys).unwrap()).unwrap();
        assert!((e.t - 2.0).abs() < 1e-15 && e.sigma2.abs() < 1e-28);
        let b = confidence_bounds(&e, 3, 0.01).unwrap();
        assert_eq!((b.dt, b.dsigma2), (0.0, 0.0));
    }

    #[test]
    fn repeated_x() {
        let ys = vec![1.0, 2.0, 4.5];
        let e = mle_estimate(&SampleSet::new(vec![1.5; 3], ys).unwrap()).unwrap();
        assert!((e.t - 7.5 / 3.0 / 1.5).abs() < 1e-15);
        let zero = SampleSet::new(vec![0.0; 3], vec![1.0; 3]).unwrap();
        assert!(matches!(mle_estimate(&zero), Err(Error::DegenerateData(_))));
        assert!(SampleSet::new(vec![1.0], vec![1.0]).is_err());
        assert!(SampleSet::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn synthetic_recovery() {
        let (t, s2, va) = (0.3, 1.2, 4.0);
        let k = 200_000;
        let e = mle_estimate(&synthetic(k, t, s2, va, 7)).unwrap();
        let kf = k as f64;
        assert!((e.t - t).abs() < 5.0 * (s2 / (kf * va)).sqrt());
        assert!((e.sigma2 - s2).abs() < 5.0 * s2 * (2.0 / kf).sqrt());
        assert!((e.va - va).abs() < 5.0 * va * (2.0 / kf).sqrt());
    }

    #[test]
    fn quantile() {
        assert!((confidence_quantile(0.3173).unwrap() - 1.0).abs() < 1e-4);
        let z = confidence_quantile(0.31731050786291415).unwrap();
        assert!((z - 1.0).abs() < 1e-10);
        // Reference quantiles from an independent inverse-erfc implementation.
        for (eps, z) in [
            (1e-10, 6.466951087240517),
            (2e-7, 5.199337582192817),
            (0.05, 1.9599639845400547),
            (0.5, 0.6744897501960818),
        ] {
            assert!((confidence_quantile(eps).unwrap() - z).abs() < 1e-10 * z);
        }
        assert!(confidence_quantile(0.0).is_err());
        let e = PointEstimate { t: 0.3, sigma2: 1.1, va: 4.0 };
        let b = confidence_bounds(&e, 1_000_000_000_000, 0.01).unwrap();
        assert!(b.dt < 1e-4 && b.dsigma2 < 1e-4 && b.dva < 1e-4);
    }

    #[test]
    fn worst_case_round_trip() {
        let p = effective_parameters(0.8379, 0.138, 0.1, 1.1).unwrap();
        let tg = p.transmissivity;
        let va = 2.0 * p.chi * p.chi / (1.0 - p.chi * p.chi);
        let est = model_parameters(va, tg, p.excess_noise);
        let r = confidence_bounds(&est, 100, 0.5).unwrap();
        let exact = MleResult {
            dt: 0.0,
            dsigma2: 0.0,
            dva: 0.0,
            ..r
        };
        let wc = worstcase_covariance(&exact);
        let eff = effective_covariance(&p).unwrap();
        assert!(wc.covariance.max_rel_diff(&eff) < 1e-12, "{:?} vs {eff:?}", wc.covariance);
        assert!(!wc.clamped);

        let wide = MleResult { dt: 2.0 * est.t, ..r };
        let wc = worstcase_covariance(&wide);
        assert!(wc.clamped && wc.covariance.c == 0.0);
    }

    #[test]
    fn rescale() {
        assert_eq!(pm_to_eb_factor(2.0).unwrap(), 1.0);
        assert!((pm_to_eb_factor(1e12).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(pm_to_eb_rescale(1.0, 0.0).is_err());
        let va = 3.0;
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let n = 400_000;
        let f = pm_to_eb_factor(va).unwrap();
        let var = (0..n)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                (va.sqrt() * x * f).powi(2)
            })
            .sum::<f64>()
            / n as f64;
        let expect = (va + 2.0) / 2.0;
        assert!((var - expect).abs() < 5.0 * expect * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn subset_is_reproducible() {
        let a = pe_subset(1000, 50, 9).unwrap();
        assert_eq!(a, pe_subset(1000, 50, 9).unwrap());
        assert_ne!(a, pe_subset(1000, 50, 10).unwrap());
        let mut s = a.clone();
        s.sort();
        s.dedup();
        assert_eq!(s.len(), 50);
        assert!(pe_subset(10, 11, 0).is_err());
    }

    #[test]
    fn scale_equivariance() {
        let s = synthetic(1000, 0.4, 1.1, 3.0, 1);
        let e = mle_estimate(&s).unwrap();
        let f = 2.5;
        let scaled = SampleSet::new(s.xs().iter().map(|x| f * x).collect(), s.ys().iter().map(|y| f * y).collect()).unwrap();
        let e2 = mle_estimate(&scaled).unwrap();
        assert!((e2.t - e.t).abs() < 1e-12);
        assert!((e2.sigma2 - f * f * e.sigma2).abs() < 1e-10);
        assert!((e2.va - f * f * e.va).abs() < 1e-10);
    }

    #[test]
    fn direct_moments() {
        let s = SampleSet::new(vec![0.0; 4], vec![0.0; 4]).unwrap();
        assert!(direct_covariance(&s, 0.01).is_err());
        let s = SampleSet::new(vec![1.0, -1.0], vec![2.0, -2.0]).unwrap();
        let d = direct_covariance(&s, 0.01).unwrap();
        assert_eq!(d.covariance, TwoModeCovariance::new(1.0, 7.0, 4.0));
        let p = d.pessimistic();
        assert!(p.a > 1.0 && p.c < 4.0);
    }
}
