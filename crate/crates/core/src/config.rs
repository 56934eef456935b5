//! Run configuration: a flat `section.key = value` text format with `#` comments.
//!
//! ```text
//! channel.distance_km = 43
//! channel.excess_noise = 0.1
//! protocol.chi = 0.8379
//! protocol.gain = 1.1
//! protocol.cutoff_multiple = 3
//! security.n = 1e12
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::finite_size::SecurityBudget;
use crate::gaussian::{chi_from_variance, tmsv_variance, ChannelModel};
use crate::info::{Direction, MiMethod};
use crate::postselection::{CutoffRule, FilterConfig, QuadratureConfig};

/// Every key the parser accepts, with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("channel.distance_km", "fibre length in km (default 0)"),
    ("channel.transmissivity", "channel transmissivity, instead of distance_km"),
    ("channel.loss_db_per_km", "fibre loss (default 0.2)"),
    ("channel.excess_noise", "excess noise at the channel input, SNU (required)"),
    ("protocol.chi", "TMSV squeezing parameter in (0, 1)"),
    ("protocol.va", "modulation variance V_A = V - 1 (alternative to chi)"),
    ("protocol.gain", "post-selection gain g >= 1 (default 1)"),
    ("protocol.cutoff", "absolute cut-off radius"),
    ("protocol.cutoff_multiple", "cut-off as kappa in gamma_c = kappa g sqrt(V_B)"),
    ("protocol.beta", "reconciliation efficiency (default 0.95)"),
    ("protocol.direction", "reverse | direct (default reverse)"),
    ("protocol.mi_method", "gaussian | entropy (default gaussian)"),
    ("protocol.fast_path", "use the ideal-NLA covariance when kappa >= 3 (default false)"),
    ("security.epsilon", "total security parameter (default 1e-6)"),
    ("security.eps_sm", "smoothing parameter (give all four components or none)"),
    ("security.eps_bar", "AEP slack"),
    ("security.eps_pe", "parameter-estimation failure probability"),
    ("security.eps_cor", "correctness failure probability"),
    ("security.n", "block size in states, or inf (default 1e12)"),
    ("security.d", "discretisation bits (default 5)"),
    ("security.k", "symbols disclosed for parameter estimation (default 0)"),
    ("quadrature.rel_tol", "moment tolerance (default 1e-8)"),
    ("quadrature.entropy_rel_tol", "entropy tolerance (default 1e-6)"),
    ("quadrature.truncation_sigmas", "radial truncation in standard deviations (default 10)"),
    ("quadrature.m", "equal subintervals for the Alice marginal entropy (default 1000)"),
    ("mc.samples", "Monte-Carlo sample count (default 1e6)"),
    ("mc.seed", "Monte-Carlo seed (default 1)"),
    ("mc.shards", "independent RNG shards (default 1)"),
    ("optimize.vary", "comma list of chi, gain, cutoff"),
    ("optimize.grid", "coarse grid points per axis (default 15)"),
    ("optimize.passes", "coordinate-descent passes (default 2)"),
    ("optimize.chi_min", "lower chi bound (default 0.01)"),
    ("optimize.gain_max", "upper gain bound (default 2)"),
    ("optimize.kappa_min", "lower cut-off multiple (default 0.5)"),
    ("optimize.kappa_max", "upper cut-off multiple (default 4)"),
    ("search.max_km", "largest distance tried by max-distance (default 1000)"),
    ("search.resolution_km", "bisection resolution (default 0.05)"),
    ("search.optimize", "optimise optimize.vary at each distance (default false)"),
];

/// Raw key/value pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigMap {
    values: BTreeMap<String, String>,
}

impl ConfigMap {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = ConfigMap::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            let k = k.trim();
            if map.values.contains_key(k) {
                return Err(Error::Config(format!("line {}: duplicate key {k}", i + 1)));
            }
            map.insert(k, v.trim())?;
        }
        Ok(map)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn insert(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(Error::Config(format!("unknown key {key}")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) {
        self.values.remove(key);
    }

    /// Apply a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<()> {
        let (k, v) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
        let k = k.trim();
        // Alternatives replace each other rather than conflict.
        for group in [
            &["channel.distance_km", "channel.transmissivity"][..],
            &["protocol.chi", "protocol.va"],
            &["protocol.cutoff", "protocol.cutoff_multiple"],
        ] {
            if group.contains(&k) {
                for other in group {
                    self.values.remove(*other);
                }
            }
        }
        self.insert(k, v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        self.get(key).map_or(Ok(default), |v| parse_f64(key, v))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_f64(key, v)).transpose()
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => {
                let x = parse_f64(key, v)?;
                if x < 0.0 || x.fract() != 0.0 || x > 9.0e15 {
                    return Err(Error::Config(format!("{key} must be a non-negative integer, got {v}")));
                }
                Ok(x as usize)
            }
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.get(key) {
            None => Ok(default),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => Err(Error::Config(format!("{key} must be true or false, got {v}"))),
        }
    }

    /// Canonical text form, sorted by key.
    pub fn to_text(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    let x = match v.to_ascii_lowercase().as_str() {
        "inf" | "infinity" => f64::INFINITY,
        s => s
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?} as a number")))?,
    };
    if x.is_nan() {
        return Err(Error::Config(format!("{key} is NaN")));
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Span {
    Distance(f64),
    Transmissivity(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpec {
    pub span: Span,
    pub loss_db_per_km: f64,
    pub excess_noise: f64,
}

impl ChannelSpec {
    pub fn model(&self) -> Result<ChannelModel> {
        match self.span {
            Span::Distance(d) => ChannelModel::from_distance(d, self.loss_db_per_km, self.excess_noise),
            Span::Transmissivity(t) => ChannelModel::from_transmissivity(t, self.loss_db_per_km, self.excess_noise),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Param {
    Chi,
    Gain,
    Cutoff,
}

impl Param {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "chi" => Ok(Param::Chi),
            "gain" | "g" => Ok(Param::Gain),
            "cutoff" | "kappa" => Ok(Param::Cutoff),
            other => Err(Error::Config(format!("cannot optimise {other:?}; expected chi, gain or cutoff"))),
        }
    }

    pub fn parse_list(s: &str) -> Result<Vec<Param>> {
        let mut out = Vec::new();
        for item in s.split(',').filter(|x| !x.trim().is_empty()) {
            let p = Param::parse(item)?;
            if !out.contains(&p) {
                out.push(p);
            }
        }
        Ok(out)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Param::Chi => "chi",
            Param::Gain => "gain",
            Param::Cutoff => "cutoff",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeSettings {
    pub vary: Vec<Param>,
    pub grid: usize,
    pub passes: usize,
    pub chi_min: f64,
    pub gain_max: f64,
    pub kappa_min: f64,
    pub kappa_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSettings {
    pub max_km: f64,
    pub resolution_km: f64,
    pub optimize: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub samples: usize,
    pub seed: u64,
    pub shards: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub channel: ChannelSpec,
    pub chi: f64,
    pub filter: FilterConfig,
    pub beta: f64,
    pub direction: Direction,
    pub mi_method: MiMethod,
    pub fast_path: bool,
    pub budget: SecurityBudget,
    pub quadrature: QuadratureConfig,
    pub mc: McSettings,
    pub optimize: OptimizeSettings,
    pub search: SearchSettings,
}

impl RunConfig {
    pub fn from_map(map: &ConfigMap) -> Result<Self> {
        let loss = map.f64_or("channel.loss_db_per_km", 0.2)?;
        let span = match (map.opt_f64("channel.distance_km")?, map.opt_f64("channel.transmissivity")?) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give channel.distance_km or channel.transmissivity, not both".into()))
            }
            (_, Some(t)) => Span::Transmissivity(t),
            (d, None) => Span::Distance(d.unwrap_or(0.0)),
        };
        let xi = map
            .opt_f64("channel.excess_noise")?
            .ok_or_else(|| Error::Config("channel.excess_noise is required".into()))?;
        let channel = ChannelSpec {
            span,
            loss_db_per_km: loss,
            excess_noise: xi,
        };
        channel.model().map_err(config_error)?;

        let chi = match (map.opt_f64("protocol.chi")?, map.opt_f64("protocol.va")?) {
            (None, None) => return Err(Error::Config("one of protocol.chi or protocol.va is required".into())),
            (Some(c), None) => c,
            (None, Some(va)) => chi_from_variance(va + 1.0).map_err(config_error)?,
            (Some(c), Some(va)) => {
                let v = tmsv_variance(c).map_err(config_error)?;
                if ((v - 1.0) - va).abs() > 1e-9 * va.abs().max(1.0) {
                    return Err(Error::Config(format!(
                        "protocol.chi = {c} implies V_A = {}, contradicting protocol.va = {va}",
                        v - 1.0
                    )));
                }
                c
            }
        };
        tmsv_variance(chi).map_err(config_error)?;

        let gain = map.f64_or("protocol.gain", 1.0)?;
        let cutoff = match (map.opt_f64("protocol.cutoff")?, map.opt_f64("protocol.cutoff_multiple")?) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("give protocol.cutoff or protocol.cutoff_multiple, not both".into()))
            }
            (Some(g), None) => CutoffRule::Absolute(g),
            (None, Some(k)) => CutoffRule::Multiple(k),
            (None, None) => CutoffRule::Absolute(0.0),
        };
        let filter = FilterConfig { gain, cutoff };
        filter.validate().map_err(config_error)?;

        let direction = match map.get("protocol.direction").unwrap_or("reverse") {
            "reverse" | "rr" => Direction::Reverse,
            "direct" | "dr" => Direction::Direct,
            v => return Err(Error::Config(format!("protocol.direction must be reverse or direct, got {v}"))),
        };
        let mi_method = match map.get("protocol.mi_method").unwrap_or("gaussian") {
            "gaussian" => MiMethod::GaussianCm,
            "entropy" => MiMethod::NonGaussianEntropy,
            v => return Err(Error::Config(format!("protocol.mi_method must be gaussian or entropy, got {v}"))),
        };

        let epsilon = map.f64_or("security.epsilon", 1e-6)?;
        let n = map.f64_or("security.n", 1e12)?;
        let d = map.usize_or("security.d", 5)?;
        let d = u32::try_from(d).map_err(|_| Error::Config("security.d too large".into()))?;
        let parts = ["security.eps_sm", "security.eps_bar", "security.eps_pe", "security.eps_cor"]
            .map(|k| map.opt_f64(k));
        let parts: Vec<Option<f64>> = parts.into_iter().collect::<Result<_>>()?;
        let budget = match parts.as_slice() {
            [None, None, None, None] => SecurityBudget::equal_split(epsilon, n, d)?,
            [Some(sm), Some(bar), Some(pe), Some(cor)] => {
                SecurityBudget::with_components(epsilon, *sm, *bar, *pe, *cor, n, d)?
            }
            _ => return Err(Error::Config("give all four epsilon components or none".into())),
        };
        let budget = budget.with_disclosed(map.f64_or("security.k", 0.0)?)?;

        let quadrature = QuadratureConfig {
            rel_tol: map.f64_or("quadrature.rel_tol", 1e-8)?,
            entropy_rel_tol: map.f64_or("quadrature.entropy_rel_tol", 1e-6)?,
            radial_truncation_sigmas: map.f64_or("quadrature.truncation_sigmas", 10.0)?,
            m: map.usize_or("quadrature.m", 1000)?,
        };
        quadrature.validate().map_err(config_error)?;

        let mc = McSettings {
            samples: map.usize_or("mc.samples", 1_000_000)?,
            seed: map.usize_or("mc.seed", 1)? as u64,
            shards: map.usize_or("mc.shards", 1)?.max(1),
        };

        let optimize = OptimizeSettings {
            vary: Param::parse_list(map.get("optimize.vary").unwrap_or(""))?,
            grid: map.usize_or("optimize.grid", 15)?.max(3),
            passes: map.usize_or("optimize.passes", 2)?.max(1),
            chi_min: map.f64_or("optimize.chi_min", 0.01)?,
            gain_max: map.f64_or("optimize.gain_max", 2.0)?,
            kappa_min: map.f64_or("optimize.kappa_min", 0.5)?,
            kappa_max: map.f64_or("optimize.kappa_max", 4.0)?,
        };
        if !(optimize.chi_min > 0.0 && optimize.chi_min < 1.0)
            || !(optimize.gain_max >= 1.0)
            || !(optimize.kappa_min > 0.0 && optimize.kappa_max > optimize.kappa_min)
        {
            return Err(Error::Config("invalid optimisation bounds".into()));
        }

        let search = SearchSettings {
            max_km: map.f64_or("search.max_km", 1000.0)?,
            resolution_km: map.f64_or("search.resolution_km", 0.05)?,
            optimize: map.bool_or("search.optimize", false)?,
        };
        if !(search.max_km > 0.0 && search.resolution_km > 0.0) {
            return Err(Error::Config("search bounds must be positive".into()));
        }

        Ok(RunConfig {
            channel,
            chi,
            filter,
            beta: map.f64_or("protocol.beta", 0.95)?,
            direction,
            mi_method,
            fast_path: map.bool_or("protocol.fast_path", false)?,
            budget,
            quadrature,
            mc,
            optimize,
            search,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_map(&ConfigMap::parse(text)?)
    }

    /// Same configuration at another distance.
    pub fn at_distance(&self, km: f64) -> RunConfig {
        let mut c = self.clone();
        c.channel.span = Span::Distance(km);
        c
    }

    /// Same channel and budget without post-selection.
    pub fn baseline(&self) -> RunConfig {
        let mut c = self.clone();
        c.filter = FilterConfig::none();
        c.optimize.vary.retain(|p| *p == Param::Chi);
        c
    }
}

/// Domain errors raised while validating a config are config errors.
fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}
