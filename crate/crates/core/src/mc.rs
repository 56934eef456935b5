//! Monte-Carlo sampling of heterodyne outcomes and the post-selection filter.
//!
//! Outcomes are in coherent-amplitude units: each quadrature of `alpha` has variance
//! `(a + 1) / 4`, so `(2 Re alpha)^2 - 1` is an unbiased estimate of `a`.
//!
//! Randomness: `ChaCha20Rng::seed_from_u64(seed)` with stream `2s` for the normal deviates
//! of shard `s` and stream `2s + 1` for its acceptance uniforms. Each sample consumes four
//! normals (ordered `Re alpha, Im alpha, Re beta, Im beta`) and exactly one uniform, so a
//! longer run extends a shorter one with the same seed. Single-shard output is the
//! reference.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimation::SampleSet;
use crate::gaussian::TwoModeCovariance;
use crate::postselection::{Filter, FilterConfig};

pub const RNG_NAME: &str = "rand_chacha 0.9 ChaCha20Rng::seed_from_u64, set_stream(2s) normals / set_stream(2s+1) uniforms; rand_distr 0.5 StandardNormal";

pub const CSV_HEADER: [&str; 6] = ["re_alpha", "im_alpha", "re_beta", "im_beta", "accepted", "rescaled"];

/// Fewest accepted samples for which moments are reported.
pub const MIN_ACCEPTED: usize = 100;

const JACKKNIFE_BLOCKS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub sample_count: usize,
    pub seed: u64,
    pub filter: FilterConfig,
    /// Independent RNG shards evaluated in parallel; 1 reproduces the reference output.
    pub shards: usize,
}

impl SimConfig {
    pub fn new(sample_count: usize, seed: u64, filter: FilterConfig) -> Self {
        Self {
            sample_count,
            seed,
            filter,
            shards: 1,
        }
    }
}

/// Lower Cholesky factor of the outcome covariance `(M + I) / 4` in the order
/// `(Re alpha, Im alpha, Re beta, Im beta)`.
pub fn heterodyne_cholesky(m: &TwoModeCovariance) -> Result<[[f64; 4]; 4]> {
    let mut cov = m.to_matrix();
    for (i, row) in cov.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v + if i == j { 1.0 } else { 0.0 }) / 4.0;
        }
    }
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = cov[i][i] - s;
                if !(d > 0.0) {
                    return Err(Error::InvalidState(format!(
                        "heterodyne covariance not positive definite (a={}, b={}, c={})",
                        m.a, m.b, m.c
                    )));
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (cov[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(l)
}

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn draw(l: &[[f64; 4]; 4], rng: &mut ChaCha20Rng) -> [f64; 4] {
    let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
    std::array::from_fn(|i| (0..=i).map(|k| l[i][k] * z[k]).sum())
}

/// Outcomes of shard `shard` (stream `2 * shard`).
fn sample_shard(l: &[[f64; 4]; 4], count: usize, seed: u64, shard: u64) -> Vec<[f64; 4]> {
    let mut rng = stream(seed, 2 * shard);
    (0..count).map(|_| draw(l, &mut rng)).collect()
}

/// Single-shard outcome samples.
pub fn sample_heterodyne_pairs(m: &TwoModeCovariance, count: usize, seed: u64) -> Result<Vec<[f64; 4]>> {
    let l = heterodyne_cholesky(m)?;
    Ok(sample_shard(&l, count, seed, 0))
}

/// One outcome and the filter's decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRecord {
    /// Measured outcome, before any rescaling.
    pub outcome: [f64; 4],
    pub accepted: bool,
    /// Accepted from inside the cut-off disk, so Bob's value is divided by `g`.
    pub rescaled: bool,
}

impl SampleRecord {
    /// Outcome after rescaling, as used for the moments.
    pub fn amplified(&self, gain: f64) -> [f64; 4] {
        let mut v = self.outcome;
        if self.rescaled {
            v[2] /= gain;
            v[3] /= gain;
        }
        v
    }
}

fn decide(samples: &[[f64; 4]], filter: &Filter, seed: u64, shard: u64) -> Vec<SampleRecord> {
    let mut rng = stream(seed, 2 * shard + 1);
    samples
        .iter()
        .map(|&outcome| {
            let u: f64 = rng.random();
            let r = outcome[2].hypot(outcome[3]);
            let accepted = u < filter.weight(r);
            SampleRecord {
                outcome,
                accepted,
                rescaled: accepted && r < filter.cutoff && filter.gain != 1.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmpiricalCovariance {
    pub covariance: TwoModeCovariance,
    /// Jackknife standard errors of `(a, b, c)`.
    pub std_error: [f64; 3],
    /// Means of `(Re alpha, Im alpha, Re beta, Im beta)` and their standard errors.
    pub first_moments: [f64; 4],
    pub first_moment_se: [f64; 4],
    pub count: usize,
}

/// `(2 Re alpha)^2 - 1` etc., averaged over both quadratures; the imaginary parts enter the
/// correlation with a minus sign.
fn moments(sums: &[f64; 7], n: f64) -> [f64; 3] {
    [
        2.0 * sums[0] / n - 1.0,
        2.0 * sums[1] / n - 1.0,
        2.0 * sums[2] / n,
    ]
}

fn accumulate(v: &[f64; 4]) -> [f64; 7] {
    [
        v[0] * v[0] + v[1] * v[1],
        v[2] * v[2] + v[3] * v[3],
        v[0] * v[2] - v[1] * v[3],
        v[0],
        v[1],
        v[2],
        v[3],
    ]
}

pub fn empirical_covariance(accepted: &[[f64; 4]]) -> Result<EmpiricalCovariance> {
    let n = accepted.len();
    if n < MIN_ACCEPTED {
        return Err(Error::InsufficientData(format!(
            "{n} accepted samples, need at least {MIN_ACCEPTED}"
        )));
    }
    let blocks = JACKKNIFE_BLOCKS;
    let mut block_sums = vec![[0.0; 7]; blocks];
    let mut block_counts = vec![0usize; blocks];
    for (i, v) in accepted.iter().enumerate() {
        let b = i * blocks / n;
        let a = accumulate(v);
        for k in 0..7 {
            block_sums[b][k] += a[k];
        }
        block_counts[b] += 1;
    }
    let mut total = [0.0; 7];
    for s in &block_sums {
        for k in 0..7 {
            total[k] += s[k];
        }
    }
    let nf = n as f64;
    let est = moments(&total, nf);
    let means: [f64; 4] = std::array::from_fn(|k| total[3 + k] / nf);
    // Leave-one-block-out replicates.
    let reps: Vec<([f64; 3], [f64; 4])> = (0..blocks)
        .map(|b| {
            let rest: [f64; 7] = std::array::from_fn(|k| total[k] - block_sums[b][k]);
            let m = (n - block_counts[b]) as f64;
            (moments(&rest, m), std::array::from_fn(|k| rest[3 + k] / m))
        })
        .collect();
    let bf = blocks as f64;
    let jack = |vals: &mut dyn Iterator<Item = f64>| {
        let v: Vec<f64> = vals.collect();
        let mean = v.iter().sum::<f64>() / bf;
        ((bf - 1.0) / bf * v.iter().map(|x| (x - mean).powi(2)).sum::<f64>()).sqrt()
    };
    let std_error = std::array::from_fn(|k| jack(&mut reps.iter().map(|r| r.0[k])));
    let first_moment_se = std::array::from_fn(|k| jack(&mut reps.iter().map(|r| r.1[k])));
    Ok(EmpiricalCovariance {
        covariance: TwoModeCovariance::new(est[0], est[1], est[2]),
        std_error,
        first_moments: means,
        first_moment_se,
        count: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub filter: Filter,
    pub records: Vec<SampleRecord>,
    pub accepted_count: usize,
    pub success_probability: f64,
    /// Binomial standard error of the acceptance fraction.
    pub success_probability_se: f64,
    pub moments: EmpiricalCovariance,
}

impl SimOutput {
    /// Accepted outcomes after rescaling.
    pub fn accepted(&self) -> Vec<[f64; 4]> {
        self.records
            .iter()
            .filter(|r| r.accepted)
            .map(|r| r.amplified(self.filter.gain))
            .collect()
    }

    /// Accepted data as `(x, y)` pairs on the prepare-and-measure scale (`sqrt 2` times the
    /// outcome), both quadratures stacked, imaginary parts sign-flipped on Bob's side so that
    /// `2 <x y> = c`.
    pub fn entanglement_based_pairs(&self) -> Result<SampleSet> {
        let acc = self.accepted();
        let s = std::f64::consts::SQRT_2;
        let mut xs = Vec::with_capacity(2 * acc.len());
        let mut ys = Vec::with_capacity(2 * acc.len());
        for v in &acc {
            xs.push(s * v[0]);
            ys.push(s * v[2]);
            xs.push(s * v[1]);
            ys.push(-s * v[3]);
        }
        SampleSet::new(xs, ys)
    }
}

/// Apply the filter (and its acceptance stream) to given outcomes.
pub fn simulate_postselection(samples: &[[f64; 4]], filter: &Filter, seed: u64) -> Result<SimOutput> {
    finish(*filter, decide(samples, filter, seed, 0))
}

fn finish(filter: Filter, records: Vec<SampleRecord>) -> Result<SimOutput> {
    let total = records.len();
    let accepted: Vec<[f64; 4]> = records
        .iter()
        .filter(|r| r.accepted)
        .map(|r| r.amplified(filter.gain))
        .collect();
    if accepted.is_empty() {
        return Err(Error::InsufficientData("no samples accepted".into()));
    }
    let p = accepted.len() as f64 / total as f64;
    let moments = empirical_covariance(&accepted)?;
    Ok(SimOutput {
        filter,
        accepted_count: accepted.len(),
        success_probability: p,
        success_probability_se: (p * (1.0 - p) / total as f64).sqrt(),
        moments,
        records,
    })
}

/// Sample, filter and summarise. Shards split the samples into contiguous ranges.
pub fn simulate(m: &TwoModeCovariance, cfg: &SimConfig) -> Result<SimOutput> {
    let filter = cfg.filter.resolve(m)?;
    if cfg.sample_count == 0 {
        return Err(Error::Config("sample count must be >= 1".into()));
    }
    let l = heterodyne_cholesky(m)?;
    let shards = cfg.shards.max(1);
    let per = cfg.sample_count.div_ceil(shards);
    let parts: Vec<Vec<SampleRecord>> = (0..shards)
        .into_par_iter()
        .map(|s| {
            let count = per.min(cfg.sample_count.saturating_sub(s * per));
            let samples = sample_shard(&l, count, cfg.seed, s as u64);
            decide(&samples, &filter, cfg.seed, s as u64)
        })
        .collect();
    finish(filter, parts.concat())
}

/// Sidecar path: `file.csv` -> `file.meta`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta")
}

/// Write one row per sample (measured outcome plus decision flags) and the metadata sidecar.
pub fn write_samples(path: &Path, out: &SimOutput, m: &TwoModeCovariance, cfg: &SimConfig) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(CSV_HEADER).map_err(csv_error)?;
    for r in &out.records {
        let mut row: Vec<String> = r.outcome.iter().map(|x| format!("{x:.16e}")).collect();
        row.push(u8::from(r.accepted).to_string());
        row.push(u8::from(r.rescaled).to_string());
        w.write_record(&row).map_err(csv_error)?;
    }
    w.flush()?;
    let mut meta = File::create(meta_path(path))?;
    writeln!(meta, "seed = {}", cfg.seed)?;
    writeln!(meta, "rng = {RNG_NAME}")?;
    writeln!(meta, "shards = {}", cfg.shards.max(1))?;
    writeln!(meta, "sample_count = {}", cfg.sample_count)?;
    writeln!(meta, "covariance = {:.16e} {:.16e} {:.16e}", m.a, m.b, m.c)?;
    writeln!(meta, "gain = {:.16e}", out.filter.gain)?;
    writeln!(meta, "cutoff = {:.16e}", out.filter.cutoff)?;
    writeln!(meta, "cutoff_rule = {:?}", cfg.filter.cutoff)?;
    writeln!(meta, "accepted = {}", out.accepted_count)?;
    writeln!(meta, "success_probability = {:.16e}", out.success_probability)?;
    writeln!(meta, "outcome_units = coherent amplitude, per-quadrature variance (V + 1) / 4")?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Vec<SampleRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header = r.headers().map_err(csv_error)?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::Config(format!("unexpected sample header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_error)?;
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::Config(format!("bad number {:?} in sample file", &rec[i])))
        };
        let flag = |i: usize| -> Result<bool> {
            match &rec[i] {
                "0" => Ok(false),
                "1" => Ok(true),
                v => Err(Error::Config(format!("bad flag {v:?} in sample file"))),
            }
        };
        out.push(SampleRecord {
            outcome: [num(0)?, num(1)?, num(2)?, num(3)?],
            accepted: flag(4)?,
            rescaled: flag(5)?,
        });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("sample file: {other:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reproduces_covariance() {
        let m = TwoModeCovariance::new(5.7, 1.66, 2.09);
        let l = heterodyne_cholesky(&m).unwrap();
        let mm = m.to_matrix();
        for i in 0..4 {
            for j in 0..4 {
                let v: f64 = (0..4).map(|k| l[i][k] * l[j][k]).sum();
                let e = (mm[i][j] + if i == j { 1.0 } else { 0.0 }) / 4.0;
                assert!((v - e).abs() < 1e-14);
            }
        }
        assert!(heterodyne_cholesky(&TwoModeCovariance::new(1.0, 1.0, 3.0)).is_err());
    }

    #[test]
    fn deterministic_and_extending() {
        let m = TwoModeCovariance::new(3.0, 2.0, 1.5);
        let f = FilterConfig::absolute(1.2, 1.5);
        let a = simulate(&m, &SimConfig::new(2000, 11, f)).unwrap();
        let b = simulate(&m, &SimConfig::new(2000, 11, f)).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &SimConfig::new(3000, 11, f)).unwrap();
        assert_eq!(a.records[..], c.records[..2000]);
        let d = simulate(&m, &SimConfig::new(2000, 12, f)).unwrap();
        assert_ne!(a.records, d.records);
    }

    #[test]
    fn identity_filter_accepts_everything() {
        let m = TwoModeCovariance::new(3.0, 2.0, 1.5);
        for f in [FilterConfig::absolute(1.0, 2.0), FilterConfig::absolute(1.4, 0.0)] {
            let out = simulate(&m, &SimConfig::new(500, 1, f)).unwrap();
            assert_eq!(out.accepted_count, 500);
            assert!(out.records.iter().all(|r| !r.rescaled));
        }
    }

    #[test]
    fn zero_samples_give_vacuum_minus_one() {
        let e = empirical_covariance(&vec![[0.0; 4]; 200]).unwrap();
        assert_eq!(e.covariance, TwoModeCovariance::new(-1.0, -1.0, 0.0));
        assert!(empirical_covariance(&vec![[0.0; 4]; 99]).is_err());
    }

    #[test]
    fn sharded_runs_are_deterministic() {
        let m = TwoModeCovariance::new(3.0, 2.0, 1.5);
        let mut cfg = SimConfig::new(10_001, 5, FilterConfig::absolute(1.1, 2.0));
        cfg.shards = 4;
        let a = simulate(&m, &cfg).unwrap();
        let b = simulate(&m, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 10_001);
    }
}
