//! End-to-end evaluation, sweeps, optimisation and distance search.

use std::io::Write;

use rayon::prelude::*;

use crate::config::{Param, RunConfig, Span};
use crate::error::{Error, Result};
use crate::finite_size::{finite_key_rate, KeyRateReport};
use crate::gaussian::{channel_output_covariance, qfunction_coefficients, TwoModeCovariance};
use crate::info::{info_report, InfoReport, MiMethod};
use crate::nla::{effective_covariance, effective_parameters, max_physical_chi};
use crate::postselection::{postselect, CutoffRule, Filter, FilterConfig, Regime};

pub const SCHEMA_VERSION: u32 = 1;

/// Everything computed for one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointReport {
    pub distance_km: f64,
    pub transmissivity: f64,
    pub excess_noise: f64,
    pub chi: f64,
    pub filter: Filter,
    pub cutoff_rule: CutoffRule,
    /// Covariance before post-selection.
    pub input: TwoModeCovariance,
    pub m_ps: TwoModeCovariance,
    /// The post-selected covariance came from the ideal-amplifier formula, not quadrature.
    pub fast_path: bool,
    pub info: InfoReport,
    pub key: KeyRateReport,
}

fn point_label(cfg: &RunConfig) -> String {
    let span = match cfg.channel.span {
        Span::Distance(d) => format!("d={d} km"),
        Span::Transmissivity(t) => format!("T={t}"),
    };
    let cut = match cfg.filter.cutoff {
        CutoffRule::Absolute(g) => format!("gamma_c={g}"),
        CutoffRule::Multiple(k) => format!("kappa={k}"),
    };
    format!("{span}, chi={}, g={}, {cut}", cfg.chi, cfg.filter.gain)
}

pub fn evaluate_point(cfg: &RunConfig) -> Result<PointReport> {
    evaluate_inner(cfg).map_err(|e| e.with_context(point_label(cfg)))
}

fn evaluate_inner(cfg: &RunConfig) -> Result<PointReport> {
    let channel = cfg.channel.model()?;
    let m = channel_output_covariance(cfg.chi, &channel)?;
    let ps = postselect(&m, &cfg.filter, &cfg.quadrature)?;
    let filter = ps.filter;
    let use_fast = cfg.fast_path && !filter.is_identity() && filter.regime() == Regime::Gaussian;
    let m_ps = if use_fast {
        let p = effective_parameters(cfg.chi, channel.transmissivity, channel.excess_noise, filter.gain)?;
        if let Some((constraint, value)) = p.violation() {
            return Err(Error::Unphysical { constraint, value });
        }
        effective_covariance(&p)?
    } else {
        ps.covariance
    };
    let q = qfunction_coefficients(&m)?;
    let source = (cfg.mi_method == MiMethod::NonGaussianEntropy).then_some((&q, &filter, &cfg.quadrature));
    let info = info_report(&m_ps, cfg.direction, cfg.mi_method, source)?;
    let key = finite_key_rate(info.i_ab, info.chi_e, ps.success_probability, cfg.beta, &cfg.budget, ps.regime)?;
    Ok(PointReport {
        distance_km: channel.distance_km,
        transmissivity: channel.transmissivity,
        excess_noise: channel.excess_noise,
        chi: cfg.chi,
        filter,
        cutoff_rule: cfg.filter.cutoff,
        input: m,
        m_ps,
        fast_path: use_fast,
        info,
        key,
    })
}

/// Result of an optimisation: the winning configuration and its report.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub config: RunConfig,
    pub report: Option<PointReport>,
    pub evaluations: usize,
}

impl Optimum {
    pub fn rate(&self) -> f64 {
        self.report.as_ref().map_or(f64::NEG_INFINITY, |r| r.key.k_fs)
    }
}

fn current_kappa(cfg: &RunConfig) -> f64 {
    match cfg.filter.cutoff {
        CutoffRule::Multiple(k) => k,
        CutoffRule::Absolute(_) => 3.0,
    }
}

fn set_param(cfg: &mut RunConfig, p: Param, v: f64) {
    match p {
        Param::Chi => cfg.chi = v,
        Param::Gain => cfg.filter.gain = v,
        Param::Cutoff => cfg.filter.cutoff = CutoffRule::Multiple(v),
    }
}

fn get_param(cfg: &RunConfig, p: Param) -> f64 {
    match p {
        Param::Chi => cfg.chi,
        Param::Gain => cfg.filter.gain,
        Param::Cutoff => current_kappa(cfg),
    }
}

fn bounds(cfg: &RunConfig, p: Param) -> Result<(f64, f64)> {
    let o = &cfg.optimize;
    Ok(match p {
        Param::Chi => {
            let ch = cfg.channel.model()?;
            let limit = max_physical_chi(ch.transmissivity, ch.excess_noise, cfg.filter.gain).unwrap_or(1.0);
            (o.chi_min, (limit - 1e-4).min(1.0 - 1e-4))
        }
        Param::Gain => (1.0, o.gain_max),
        Param::Cutoff => (o.kappa_min, o.kappa_max),
    })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if hi <= lo {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Coarse grid for one axis. Chi is spaced logarithmically in the modulation variance
/// `V_A`, which resolves the region near 1 where optima usually sit.
fn axis_grid(p: Param, lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if p != Param::Chi {
        return log_grid(lo, hi, n);
    }
    let va = |chi: f64| 2.0 * chi * chi / (1.0 - chi * chi);
    let chi = |va: f64| (va / (va + 2.0)).sqrt();
    let mut xs: Vec<f64> = log_grid(va(lo), va(hi), n).into_iter().map(chi).collect();
    let last = xs.len() - 1;
    xs[0] = lo;
    xs[last] = hi;
    xs
}

struct Objective<'a> {
    base: &'a RunConfig,
    evaluations: usize,
}

impl Objective<'_> {
    fn at(&mut self, cfg: &RunConfig, p: Param, v: f64) -> (f64, RunConfig, Option<PointReport>) {
        let mut c = cfg.clone();
        set_param(&mut c, p, v);
        self.evaluations += 1;
        match evaluate_point(&c) {
            Ok(r) => (r.key.k_fs, c, Some(r)),
            Err(_) => (f64::NEG_INFINITY, c, None),
        }
    }

    fn grid(&mut self, cfg: &RunConfig, p: Param, xs: &[f64]) -> Vec<(f64, RunConfig, Option<PointReport>)> {
        self.evaluations += xs.len();
        xs.par_iter()
            .map(|&v| {
                let mut c = cfg.clone();
                set_param(&mut c, p, v);
                match evaluate_point(&c) {
                    Ok(r) => (r.key.k_fs, c, Some(r)),
                    Err(_) => (f64::NEG_INFINITY, c, None),
                }
            })
            .collect()
    }
}

const GOLDEN_STEPS: usize = 30;

/// Joint grid over every varied axis. The rate has a curved ridge in (chi, g), which
/// axis-by-axis search alone can stall on, so descent starts from the best grid node.
/// Nodes are visited with g, then chi, ascending so ties keep the smaller values.
fn joint_seed(obj: &mut Objective, start: &RunConfig, axes: &[Param]) -> Result<Vec<RunConfig>> {
    let mut nodes = vec![start.clone()];
    // Chi last: its upper bound depends on the gain.
    let order = [Param::Gain, Param::Cutoff, Param::Chi];
    for p in order.into_iter().filter(|p| axes.contains(p)) {
        let mut next = Vec::new();
        for c in &nodes {
            let (lo, hi) = bounds(c, p)?;
            if !(hi >= lo) {
                continue;
            }
            for v in axis_grid(p, lo, hi, obj.base.optimize.grid) {
                let mut c = c.clone();
                set_param(&mut c, p, v);
                next.push(c);
            }
        }
        nodes = next;
    }
    obj.evaluations += nodes.len();
    Ok(nodes)
}

/// Maximise the finite-size rate. After a joint coarse grid, coordinate descent visits
/// the axes in the fixed order chi, gain, cutoff whatever order they were requested in;
/// each gets a log-spaced grid followed by golden-section refinement around the best
/// grid point. Ties keep the smaller parameter value.
pub fn optimize(cfg: &RunConfig, vary: &[Param]) -> Result<Optimum> {
    let mut axes: Vec<Param> = vary.to_vec();
    axes.sort();
    axes.dedup();
    if axes.is_empty() {
        return Err(Error::Config("nothing to optimise".into()));
    }
    let mut obj = Objective { base: cfg, evaluations: 0 };
    let mut best_cfg = obj.base.clone();
    if axes.contains(&Param::Cutoff) {
        let k = current_kappa(&best_cfg).clamp(cfg.optimize.kappa_min, cfg.optimize.kappa_max);
        set_param(&mut best_cfg, Param::Cutoff, k);
    }
    let mut best: (f64, Option<PointReport>) = match evaluate_point(&best_cfg) {
        Ok(r) => (r.key.k_fs, Some(r)),
        Err(_) => (f64::NEG_INFINITY, None),
    };
    obj.evaluations += 1;
    if axes.len() > 1 {
        let nodes = joint_seed(&mut obj, &best_cfg, &axes)?;
        let scored: Vec<(f64, Option<PointReport>)> = nodes
            .par_iter()
            .map(|c| match evaluate_point(c) {
                Ok(r) => (r.key.k_fs, Some(r)),
                Err(_) => (f64::NEG_INFINITY, None),
            })
            .collect();
        for (c, (rate, rep)) in nodes.into_iter().zip(scored) {
            if rate > best.0 {
                best = (rate, rep);
                best_cfg = c;
            }
        }
    }
    for _ in 0..cfg.optimize.passes {
        for &p in &axes {
            let (lo, hi) = bounds(&best_cfg, p)?;
            if !(hi >= lo) {
                continue;
            }
            let mut xs = axis_grid(p, lo, hi, cfg.optimize.grid);
            // The current value joins the grid so a good starting point is refined, not skipped.
            let cur = get_param(&best_cfg, p);
            if cur > lo && cur < hi && !xs.contains(&cur) {
                xs.push(cur);
                xs.sort_by(f64::total_cmp);
            }
            let results = obj.grid(&best_cfg, p, &xs);
            let mut idx = None;
            let mut top = f64::NEG_INFINITY;
            for (i, r) in results.iter().enumerate() {
                if r.0 > top {
                    top = r.0;
                    idx = Some(i);
                }
            }
            let Some(i) = idx else { continue };
            let (a, b) = (xs[i.saturating_sub(1)], xs[(i + 1).min(xs.len() - 1)]);
            let (rate, c, rep) = results.into_iter().nth(i).expect("index in range");
            if rate > best.0 {
                best = (rate, rep);
                best_cfg = c;
            }
            // Golden-section refinement inside the neighbouring grid cells.
            let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
            let (mut a, mut b) = (a, b);
            let mut x1 = b - inv_phi * (b - a);
            let mut x2 = a + inv_phi * (b - a);
            let mut f1 = obj.at(&best_cfg, p, x1);
            let mut f2 = obj.at(&best_cfg, p, x2);
            for _ in 0..GOLDEN_STEPS {
                if f1.0 >= f2.0 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - inv_phi * (b - a);
                    f1 = obj.at(&best_cfg, p, x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + inv_phi * (b - a);
                    f2 = obj.at(&best_cfg, p, x2);
                }
            }
            let cand = if f1.0 >= f2.0 { f1 } else { f2 };
            if cand.0 > best.0 {
                best = (cand.0, cand.2);
                best_cfg = cand.1;
            }
        }
    }
    Ok(Optimum {
        config: best_cfg,
        report: best.1,
        evaluations: obj.evaluations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Distance,
    /// Absolute cut-off radius.
    Cutoff,
    /// Cut-off multiple kappa.
    Kappa,
    Gain,
    Chi,
    /// Block size `n`; spaced logarithmically.
    BlockSize,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Axis> {
        Ok(match s {
            "distance" => Axis::Distance,
            "cutoff" => Axis::Cutoff,
            "kappa" => Axis::Kappa,
            "gain" => Axis::Gain,
            "chi" => Axis::Chi,
            "blocksize" | "n" => Axis::BlockSize,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::Distance => "distance",
            Axis::Cutoff => "cutoff",
            Axis::Kappa => "kappa",
            Axis::Gain => "gain",
            Axis::Chi => "chi",
            Axis::BlockSize => "blocksize",
        }
    }

    fn swept_param(&self) -> Option<Param> {
        match self {
            Axis::Cutoff | Axis::Kappa => Some(Param::Cutoff),
            Axis::Gain => Some(Param::Gain),
            Axis::Chi => Some(Param::Chi),
            _ => None,
        }
    }

    pub fn apply(&self, cfg: &RunConfig, v: f64) -> Result<RunConfig> {
        let mut c = cfg.clone();
        match self {
            Axis::Distance => c.channel.span = Span::Distance(v),
            Axis::Cutoff => c.filter.cutoff = CutoffRule::Absolute(v),
            Axis::Kappa => c.filter.cutoff = CutoffRule::Multiple(v),
            Axis::Gain => c.filter.gain = v,
            Axis::Chi => c.chi = v,
            Axis::BlockSize => c.budget = c.budget.with_block_size(v)?,
        }
        Ok(c)
    }

    pub fn values(&self, from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
        if !(from < to) || steps < 2 {
            return Err(Error::Config(format!(
                "sweep needs from < to and steps >= 2 (got {from}..{to}, {steps})"
            )));
        }
        Ok(match self {
            Axis::BlockSize => log_grid(from, to, steps),
            _ => (0..steps)
                .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    PostSelected,
    Baseline,
}

impl Series {
    pub fn name(&self) -> &'static str {
        match self {
            Series::PostSelected => "ps",
            Series::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub series: Series,
    pub value: f64,
    pub outcome: std::result::Result<PointReport, String>,
}

fn run_point(cfg: &RunConfig, vary: &[Param]) -> std::result::Result<PointReport, String> {
    if vary.is_empty() {
        evaluate_point(cfg).map_err(|e| e.to_string())
    } else {
        let opt = optimize(cfg, vary).map_err(|e| e.to_string())?;
        match opt.report {
            Some(r) => Ok(r),
            None => evaluate_point(&opt.config).map_err(|e| e.to_string()),
        }
    }
}

/// Evaluate the axis points in parallel; rows come back in axis order, post-selected series
/// first. Failed points are reported in the row rather than aborting the sweep.
pub fn sweep(
    cfg: &RunConfig,
    axis: Axis,
    from: f64,
    to: f64,
    steps: usize,
    vary: &[Param],
    baseline: bool,
) -> Result<Vec<SweepRow>> {
    let values = axis.values(from, to, steps)?;
    let vary: Vec<Param> = vary.iter().copied().filter(|p| Some(*p) != axis.swept_param()).collect();
    let mut jobs: Vec<(Series, f64, RunConfig, Vec<Param>)> = Vec::new();
    for &v in &values {
        jobs.push((Series::PostSelected, v, axis.apply(cfg, v)?, vary.clone()));
    }
    if baseline {
        let base = cfg.baseline();
        let base_vary: Vec<Param> = vary.iter().copied().filter(|p| *p == Param::Chi).collect();
        for &v in &values {
            let mut c = axis.apply(&base, v)?;
            // Filter axes have no meaning without post-selection.
            c.filter = FilterConfig::none();
            jobs.push((Series::Baseline, v, c, base_vary.clone()));
        }
    }
    Ok(jobs
        .par_iter()
        .map(|(series, v, c, vary)| SweepRow {
            series: *series,
            value: *v,
            outcome: run_point(c, vary),
        })
        .collect())
}

fn num(x: f64) -> String {
    format!("{x:.11e}")
}

pub const SWEEP_COLUMNS: [&str; 20] = [
    "series", "axis", "value", "distance_km", "chi", "gain", "cutoff", "kappa", "p_s", "i_ab", "chi_e", "k_asym",
    "k_fs_signed", "rate", "secure", "regime", "a_ps", "b_ps", "c_ps", "status",
];

/// CSV with a `# schema_version=N` first line; numbers carry 12 significant digits.
pub fn write_sweep_csv<W: Write>(out: W, axis: Axis, rows: &[SweepRow]) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for row in rows {
        let mut rec = vec![row.series.name().to_string(), axis.name().to_string(), num(row.value)];
        match &row.outcome {
            Ok(r) => {
                rec.extend([
                    num(r.distance_km),
                    num(r.chi),
                    num(r.filter.gain),
                    num(r.filter.cutoff),
                    num(r.filter.kappa()),
                    num(r.key.success_probability),
                    num(r.info.i_ab),
                    num(r.info.chi_e),
                    num(r.key.k_asym),
                    num(r.key.k_fs),
                    num(r.key.floored_rate()),
                    r.key.secure.to_string(),
                    regime_name(r.key.regime).to_string(),
                    num(r.m_ps.a),
                    num(r.m_ps.b),
                    num(r.m_ps.c),
                    "ok".to_string(),
                ]);
            }
            Err(msg) => {
                rec.extend(std::iter::repeat_n(String::new(), SWEEP_COLUMNS.len() - 4));
                rec.push(format!("error: {}", msg.replace(['\n', '\r'], " ")));
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// A gnuplot script plotting the floored rate of each series against the swept value.
pub fn gnuplot_script(csv_file: &str, axis: Axis) -> String {
    format!(
        "set datafile separator ','\nset logscale y\nset xlabel '{axis}'\nset ylabel 'K (bits/symbol)'\n\
         plot '{csv_file}' using ($1 eq 'ps' ? $3 : 1/0):14 skip 2 with linespoints title 'post-selection', \\\n     \
         '{csv_file}' using ($1 eq 'baseline' ? $3 : 1/0):14 skip 2 with linespoints title 'no post-selection'\n",
        axis = axis.name()
    )
}

pub fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Gaussian => "gaussian",
        Regime::NonGaussian => "non-gaussian",
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaxDistance {
    /// Midpoint of the final bracket.
    pub km: f64,
    /// Last distance found secure and first found insecure.
    pub bracket: (f64, f64),
    /// The configured limit was reached while still secure.
    pub reached_limit: bool,
    /// Report at the secure end of the bracket.
    pub report: PointReport,
    pub evaluations: usize,
}

/// Largest distance with a positive finite-size rate, by bracket expansion and bisection.
pub fn max_secure_distance(cfg: &RunConfig) -> Result<MaxDistance> {
    if !(cfg.channel.loss_db_per_km > 0.0) {
        return Err(Error::Config("distance search needs channel.loss_db_per_km > 0".into()));
    }
    let vary: Vec<Param> = if cfg.search.optimize { cfg.optimize.vary.clone() } else { Vec::new() };
    let mut evaluations = 0usize;
    let mut rate_at = |d: f64| -> Option<PointReport> {
        evaluations += 1;
        run_point(&cfg.at_distance(d), &vary).ok().filter(|r| r.key.k_fs > 0.0)
    };
    let Some(mut lo_report) = rate_at(0.0) else {
        return Err(Error::NotSecure("key rate is not positive at zero distance".into()));
    };
    let max = cfg.search.max_km;
    let mut lo = 0.0;
    let mut hi = 10.0f64.min(max);
    while let Some(r) = rate_at(hi) {
        lo = hi;
        lo_report = r;
        if hi >= max {
            return Ok(MaxDistance {
                km: max,
                bracket: (max, max),
                reached_limit: true,
                report: lo_report,
                evaluations,
            });
        }
        hi = (2.0 * hi).min(max);
    }
    while hi - lo > cfg.search.resolution_km {
        let mid = 0.5 * (lo + hi);
        match rate_at(mid) {
            Some(r) => {
                lo = mid;
                lo_report = r;
            }
            None => hi = mid,
        }
    }
    Ok(MaxDistance {
        km: 0.5 * (lo + hi),
        bracket: (lo, hi),
        reached_limit: false,
        report: lo_report,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(extra: &str) -> RunConfig {
        RunConfig::parse(&format!(
            "channel.distance_km = 43\nchannel.excess_noise = 0.1\nprotocol.chi = 0.8379\nprotocol.gain = 1.1\n\
             protocol.cutoff_multiple = 3\nsecurity.n = 1e12\n{extra}"
        ))
        .unwrap()
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(1.0, 2.0, 15);
        assert_eq!((g[0], g[14], g.len()), (1.0, 2.0, 15));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        let c = axis_grid(Param::Chi, 0.01, 0.9999, 15);
        assert_eq!((c[0], c[14]), (0.01, 0.9999));
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        // V = 1 + V_A must match the two-mode squeezed variance.
        let v = crate::gaussian::tmsv_variance(c[7]).unwrap();
        let va = |chi: f64| 2.0 * chi * chi / (1.0 - chi * chi);
        assert!((v - 1.0 - va(c[7])).abs() < 1e-12);
    }

    #[test]
    fn sweep_validation() {
        let c = cfg("");
        assert!(sweep(&c, Axis::Distance, 5.0, 1.0, 3, &[], false).is_err());
        assert!(sweep(&c, Axis::Distance, 1.0, 5.0, 1, &[], false).is_err());
        assert!(Axis::parse("colour").is_err());
    }

    #[test]
    fn failed_points_are_rows() {
        let c = cfg("");
        // chi close to 1 makes V huge but finite; a negative chi fails validation in the point.
        let rows = sweep(&c, Axis::Chi, -0.5, 0.8, 2, &[], false).unwrap();
        assert!(rows[0].outcome.is_err() && rows[1].outcome.is_ok());
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, Axis::Chi, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# schema_version=1\nseries,axis,value,"));
        assert!(!text.contains("NaN"));
        assert!(text.lines().nth(2).unwrap().contains("error"));
    }

    #[test]
    fn baseline_rows_follow() {
        let c = cfg("");
        let rows = sweep(&c, Axis::Distance, 10.0, 20.0, 2, &[], true).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2].series, Series::Baseline);
        let r = rows[2].outcome.as_ref().unwrap();
        assert_eq!(r.key.success_probability, 1.0);
    }
}
