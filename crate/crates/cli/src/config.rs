//! Experiment configuration: a flat `key = value` text format.
//!
//! The format is deliberately plain so that experiment files can be read,
//! diffed, and version-controlled without tooling: one `key = value` pair
//! per line, `#` starting a full-line comment, blank lines ignored. Keys
//! not in the documented set are rejected, as are duplicates, so a typo
//! cannot silently fall back to a default.
//!
//! Every configuration has a 16-hex-digit hash (FNV-1a over the canonical
//! serialization, excluding `out` and `threads`, which affect where results
//! go and how fast they are produced but not what they contain). The hash
//! names the trajectory directory and the report files, and is stamped into
//! every sidecar so `analyze` can refuse data produced under different
//! settings.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use urnlab::trajectory::{geometric_grid, merge_times};
use urnlab::ModelParams;

use crate::{Error, Result};

/// The verification gates `analyze` can run. Each checks one quantitative
/// property of the model at the configured scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    /// Decay exponent of the ensemble gap second moment.
    Scaling,
    /// Normality of the standardized mean fraction around its late-time proxy.
    CltS1,
    /// Normality of the standardized gap, strong coupling.
    CltS2,
    /// Normality of the standardized gap, critical coupling.
    CltS3,
    /// Normality of a single urn's standardized fraction, strong coupling.
    CltS4,
    /// Almost-sure stabilization of the scaled gap, weak coupling.
    SubLimit,
    /// Cross-urn covariance structure of the normalized gap vector.
    Covariance,
    /// Coverage of the mean-fraction confidence interval.
    CiCoverage,
    /// Recovery of the coupling strength from the gap pivot variance.
    AlphaEst,
    /// Attenuation-product numerics: dyadic ratio of the log-space tables.
    Coefficients,
    /// Closed-form linear recursion solver against direct iteration.
    Recursion,
}

impl Gate {
    pub const ALL: [Gate; 11] = [
        Gate::Scaling,
        Gate::CltS1,
        Gate::CltS2,
        Gate::CltS3,
        Gate::CltS4,
        Gate::SubLimit,
        Gate::Covariance,
        Gate::CiCoverage,
        Gate::AlphaEst,
        Gate::Coefficients,
        Gate::Recursion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Gate::Scaling => "scaling",
            Gate::CltS1 => "clt-s1",
            Gate::CltS2 => "clt-s2",
            Gate::CltS3 => "clt-s3",
            Gate::CltS4 => "clt-s4",
            Gate::SubLimit => "sub-limit",
            Gate::Covariance => "covariance",
            Gate::CiCoverage => "ci-coverage",
            Gate::AlphaEst => "alpha-est",
            Gate::Coefficients => "coefficients",
            Gate::Recursion => "recursion",
        }
    }

    pub fn from_name(name: &str) -> Option<Gate> {
        Gate::ALL.into_iter().find(|g| g.name() == name)
    }

    /// Whether the gate reads trajectory files. The two numerics gates run
    /// on formulas alone, so `analyze` can evaluate them with nothing on
    /// disk.
    pub fn needs_ensemble(self) -> bool {
        !matches!(self, Gate::Coefficients | Gate::Recursion)
    }
}

/// Recording-grid rule. `geometric:K` places about `K` times per
/// decade, plus `t = 0` and the horizon itself; gate-specific times are
/// merged in on top, so analysis never misses a row it needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpec {
    Geometric { per_decade: u32 },
}

impl GridSpec {
    fn parse(val: &str) -> Result<GridSpec> {
        let rest = val.strip_prefix("geometric:").ok_or_else(|| {
            Error::Config(format!(
                "key `grid`: expected `geometric:<points-per-decade>`, got `{val}`"
            ))
        })?;
        let per_decade: u32 = rest.trim().parse().map_err(|e| {
            Error::Config(format!("key `grid`: bad points-per-decade `{rest}`: {e}"))
        })?;
        if per_decade == 0 {
            return Err(Error::Config(
                "key `grid`: points-per-decade must be at least 1".into(),
            ));
        }
        Ok(GridSpec::Geometric { per_decade })
    }

    fn emit(&self) -> String {
        match self {
            GridSpec::Geometric { per_decade } => format!("geometric:{per_decade}"),
        }
    }

    fn times(&self, horizon: u64) -> Vec<u64> {
        match self {
            GridSpec::Geometric { per_decade } => geometric_grid(horizon, *per_decade),
        }
    }
}

/// Per-gate tuning knobs, all with working defaults. Urn indices are
/// 1-based here, as in the trajectory files; they are converted to the
/// 0-based library convention at the call site.
#[derive(Debug, Clone, PartialEq)]
pub struct Knobs {
    pub scaling_window_lo: u64,
    pub scaling_window_hi: u64,
    pub scaling_urn: u32,
    pub scaling_slope_tol: f64,
    pub scaling_slope_tol_critical: f64,
    pub clt_t: u64,
    pub clt_proxy_ratio: f64,
    pub clt_urn: u32,
    pub sublimit_t1: u64,
    pub sublimit_t2: u64,
    pub sublimit_urn: u32,
    pub sublimit_min_corr: f64,
    pub sublimit_min_std: f64,
    pub covariance_t: u64,
    pub covariance_diag_tol: f64,
    pub covariance_offdiag_tol: f64,
    pub ci_t: u64,
    pub ci_proxy_t: u64,
    pub ci_level: f64,
    pub ci_cover_lo: f64,
    pub ci_cover_hi: f64,
    pub alphaest_t: u64,
    pub alphaest_urn: u32,
    pub alphaest_tol: f64,
    pub coefficients_t: u64,
    pub coefficients_tol: f64,
    pub recursion_instances: u64,
    pub recursion_t: u64,
    pub recursion_tol: f64,
}

impl Default for Knobs {
    fn default() -> Self {
        Knobs {
            scaling_window_lo: 200,
            scaling_window_hi: 5000,
            scaling_urn: 1,
            scaling_slope_tol: 0.10,
            scaling_slope_tol_critical: 0.12,
            clt_t: 2000,
            clt_proxy_ratio: 100.0,
            clt_urn: 1,
            sublimit_t1: 50_000,
            sublimit_t2: 100_000,
            sublimit_urn: 1,
            sublimit_min_corr: 0.9,
            sublimit_min_std: 0.05,
            covariance_t: 2000,
            covariance_diag_tol: 0.08,
            covariance_offdiag_tol: 0.05,
            ci_t: 10_000,
            ci_proxy_t: 1_000_000,
            ci_level: 0.95,
            ci_cover_lo: 0.93,
            ci_cover_hi: 0.97,
            alphaest_t: 10_000,
            alphaest_urn: 1,
            alphaest_tol: 0.05,
            coefficients_t: 1_000_000,
            coefficients_tol: 1e-3,
            recursion_instances: 100,
            recursion_t: 10_000,
            recursion_tol: 1e-10,
        }
    }
}

/// One experiment: model, ensemble, horizon, gate selection, knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n: u32,
    pub a: u32,
    pub b: u32,
    pub alpha: f64,
    pub replicas: u64,
    pub master_seed: u64,
    pub horizon: u64,
    pub grid: GridSpec,
    pub gates: Vec<Gate>,
    /// Output directory; not part of the configuration hash.
    pub out: PathBuf,
    /// Worker threads, 0 = one per core; not part of the configuration hash.
    pub threads: usize,
    pub knobs: Knobs,
}

/// Every key the parser accepts, in canonical emission order.
const KNOWN_KEYS: [&str; 40] = [
    "n",
    "a",
    "b",
    "alpha",
    "replicas",
    "master_seed",
    "horizon",
    "grid",
    "gates",
    "out",
    "threads",
    "scaling.window_lo",
    "scaling.window_hi",
    "scaling.urn",
    "scaling.slope_tol",
    "scaling.slope_tol_critical",
    "clt.t",
    "clt.proxy_ratio",
    "clt.urn",
    "sublimit.t1",
    "sublimit.t2",
    "sublimit.urn",
    "sublimit.min_corr",
    "sublimit.min_std",
    "covariance.t",
    "covariance.diag_tol",
    "covariance.offdiag_tol",
    "ci.t",
    "ci.proxy_t",
    "ci.level",
    "ci.cover_lo",
    "ci.cover_hi",
    "alphaest.t",
    "alphaest.urn",
    "alphaest.tol",
    "coefficients.t",
    "coefficients.tol",
    "recursion.instances",
    "recursion.t",
    "recursion.tol",
];

/// FNV-1a, 64-bit. Small, dependency-free, and stable across platforms —
/// all this hash does is give configurations distinct, reproducible names.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

fn parse_value<T: FromStr>(key: &str, val: &str) -> Result<T>
where
    T::Err: Display,
{
    val.parse()
        .map_err(|e| Error::Config(format!("key `{key}`: cannot parse `{val}`: {e}")))
}

struct RawMap(BTreeMap<String, String>);

impl RawMap {
    fn req<T: FromStr>(&mut self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        let val = self
            .0
            .remove(key)
            .ok_or_else(|| Error::Config(format!("missing required key `{key}`")))?;
        parse_value(key, &val)
    }

    fn opt<T: FromStr>(&mut self, key: &str, default: T) -> Result<T>
    where
        T::Err: Display,
    {
        match self.0.remove(key) {
            Some(val) => parse_value(key, &val),
            None => Ok(default),
        }
    }

    fn opt_raw(&mut self, key: &str) -> Option<String> {
        self.0.remove(key)
    }
}

fn parse_gates(val: &str) -> Result<Vec<Gate>> {
    let s = val.trim();
    if s.is_empty() {
        return Ok(Vec::new());
    }
    let mut gates = Vec::new();
    for part in s.split(',') {
        let name = part.trim();
        if name.is_empty() {
            return Err(Error::Config("key `gates`: empty gate name".into()));
        }
        let gate = Gate::from_name(name).ok_or_else(|| {
            let known: Vec<&str> = Gate::ALL.iter().map(|g| g.name()).collect();
            Error::Config(format!(
                "key `gates`: unknown gate `{name}` (known: {})",
                known.join(", ")
            ))
        })?;
        if gates.contains(&gate) {
            return Err(Error::Config(format!(
                "key `gates`: gate `{name}` listed twice"
            )));
        }
        gates.push(gate);
    }
    Ok(gates)
}

impl ExperimentConfig {
    /// Parses and validates the text form. Errors name the offending key
    /// or line.
    pub fn parse(text: &str) -> Result<ExperimentConfig> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {lineno}: expected `key = value`, got `{line}`"
                ))
            })?;
            let key = k.trim();
            let val = v.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Config(format!("line {lineno}: unknown key `{key}`")));
            }
            if map.insert(key.to_string(), val.to_string()).is_some() {
                return Err(Error::Config(format!(
                    "line {lineno}: key `{key}` given more than once"
                )));
            }
        }
        let mut map = RawMap(map);
        let defaults = Knobs::default();
        let cfg = ExperimentConfig {
            n: map.req("n")?,
            a: map.req("a")?,
            b: map.req("b")?,
            alpha: map.req("alpha")?,
            replicas: map.req("replicas")?,
            master_seed: map.req("master_seed")?,
            horizon: map.req("horizon")?,
            grid: match map.opt_raw("grid") {
                Some(v) => GridSpec::parse(&v)?,
                None => GridSpec::Geometric { per_decade: 10 },
            },
            gates: match map.opt_raw("gates") {
                Some(v) => parse_gates(&v)?,
                None => Vec::new(),
            },
            out: PathBuf::from(map.opt_raw("out").unwrap_or_else(|| "out".to_string())),
            threads: map.opt("threads", 0)?,
            knobs: Knobs {
                scaling_window_lo: map.opt("scaling.window_lo", defaults.scaling_window_lo)?,
                scaling_window_hi: map.opt("scaling.window_hi", defaults.scaling_window_hi)?,
                scaling_urn: map.opt("scaling.urn", defaults.scaling_urn)?,
                scaling_slope_tol: map.opt("scaling.slope_tol", defaults.scaling_slope_tol)?,
                scaling_slope_tol_critical: map.opt(
                    "scaling.slope_tol_critical",
                    defaults.scaling_slope_tol_critical,
                )?,
                clt_t: map.opt("clt.t", defaults.clt_t)?,
                clt_proxy_ratio: map.opt("clt.proxy_ratio", defaults.clt_proxy_ratio)?,
                clt_urn: map.opt("clt.urn", defaults.clt_urn)?,
                sublimit_t1: map.opt("sublimit.t1", defaults.sublimit_t1)?,
                sublimit_t2: map.opt("sublimit.t2", defaults.sublimit_t2)?,
                sublimit_urn: map.opt("sublimit.urn", defaults.sublimit_urn)?,
                sublimit_min_corr: map.opt("sublimit.min_corr", defaults.sublimit_min_corr)?,
                sublimit_min_std: map.opt("sublimit.min_std", defaults.sublimit_min_std)?,
                covariance_t: map.opt("covariance.t", defaults.covariance_t)?,
                covariance_diag_tol: map
                    .opt("covariance.diag_tol", defaults.covariance_diag_tol)?,
                covariance_offdiag_tol: map
                    .opt("covariance.offdiag_tol", defaults.covariance_offdiag_tol)?,
                ci_t: map.opt("ci.t", defaults.ci_t)?,
                ci_proxy_t: map.opt("ci.proxy_t", defaults.ci_proxy_t)?,
                ci_level: map.opt("ci.level", defaults.ci_level)?,
                ci_cover_lo: map.opt("ci.cover_lo", defaults.ci_cover_lo)?,
                ci_cover_hi: map.opt("ci.cover_hi", defaults.ci_cover_hi)?,
                alphaest_t: map.opt("alphaest.t", defaults.alphaest_t)?,
                alphaest_urn: map.opt("alphaest.urn", defaults.alphaest_urn)?,
                alphaest_tol: map.opt("alphaest.tol", defaults.alphaest_tol)?,
                coefficients_t: map.opt("coefficients.t", defaults.coefficients_t)?,
                coefficients_tol: map.opt("coefficients.tol", defaults.coefficients_tol)?,
                recursion_instances: map
                    .opt("recursion.instances", defaults.recursion_instances)?,
                recursion_t: map.opt("recursion.t", defaults.recursion_t)?,
                recursion_tol: map.opt("recursion.tol", defaults.recursion_tol)?,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and parses a configuration file.
    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        ExperimentConfig::parse(&text)
    }

    /// All keys with their current values, in canonical order. Floats are
    /// printed in shortest round-trip form, so emit → parse is lossless.
    fn entries(&self) -> Vec<(&'static str, String)> {
        let k = &self.knobs;
        vec![
            ("n", self.n.to_string()),
            ("a", self.a.to_string()),
            ("b", self.b.to_string()),
            ("alpha", self.alpha.to_string()),
            ("replicas", self.replicas.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("horizon", self.horizon.to_string()),
            ("grid", self.grid.emit()),
            (
                "gates",
                self.gates
                    .iter()
                    .map(|g| g.name())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("out", self.out.display().to_string()),
            ("threads", self.threads.to_string()),
            ("scaling.window_lo", k.scaling_window_lo.to_string()),
            ("scaling.window_hi", k.scaling_window_hi.to_string()),
            ("scaling.urn", k.scaling_urn.to_string()),
            ("scaling.slope_tol", k.scaling_slope_tol.to_string()),
            (
                "scaling.slope_tol_critical",
                k.scaling_slope_tol_critical.to_string(),
            ),
            ("clt.t", k.clt_t.to_string()),
            ("clt.proxy_ratio", k.clt_proxy_ratio.to_string()),
            ("clt.urn", k.clt_urn.to_string()),
            ("sublimit.t1", k.sublimit_t1.to_string()),
            ("sublimit.t2", k.sublimit_t2.to_string()),
            ("sublimit.urn", k.sublimit_urn.to_string()),
            ("sublimit.min_corr", k.sublimit_min_corr.to_string()),
            ("sublimit.min_std", k.sublimit_min_std.to_string()),
            ("covariance.t", k.covariance_t.to_string()),
            ("covariance.diag_tol", k.covariance_diag_tol.to_string()),
            (
                "covariance.offdiag_tol",
                k.covariance_offdiag_tol.to_string(),
            ),
            ("ci.t", k.ci_t.to_string()),
            ("ci.proxy_t", k.ci_proxy_t.to_string()),
            ("ci.level", k.ci_level.to_string()),
            ("ci.cover_lo", k.ci_cover_lo.to_string()),
            ("ci.cover_hi", k.ci_cover_hi.to_string()),
            ("alphaest.t", k.alphaest_t.to_string()),
            ("alphaest.urn", k.alphaest_urn.to_string()),
            ("alphaest.tol", k.alphaest_tol.to_string()),
            ("coefficients.t", k.coefficients_t.to_string()),
            ("coefficients.tol", k.coefficients_tol.to_string()),
            ("recursion.instances", k.recursion_instances.to_string()),
            ("recursion.t", k.recursion_t.to_string()),
            ("recursion.tol", k.recursion_tol.to_string()),
        ]
    }

    /// Canonical text form; `parse(emit(c)) == c`.
    pub fn emit(&self) -> String {
        let sections: [(&str, &str); 5] = [
            ("n", "# model"),
            ("replicas", "# ensemble"),
            ("gates", "# analysis"),
            ("out", "# outputs (not part of the configuration hash)"),
            ("scaling.window_lo", "# gate knobs"),
        ];
        let mut s = String::new();
        for (key, val) in self.entries() {
            if let Some((_, header)) = sections.iter().find(|(k, _)| *k == key) {
                if !s.is_empty() {
                    s.push('\n');
                }
                s.push_str(header);
                s.push('\n');
            }
            if val.is_empty() {
                s.push_str(&format!("{key} =\n"));
            } else {
                s.push_str(&format!("{key} = {val}\n"));
            }
        }
        s
    }

    /// The hashed representation: every entry except `out` and `threads`.
    fn identity(&self) -> String {
        let mut s = String::new();
        for (key, val) in self.entries() {
            if key == "out" || key == "threads" {
                continue;
            }
            s.push_str(&format!("{key} = {val}\n"));
        }
        s
    }

    /// 16 hex digits identifying the experiment.
    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.identity().as_bytes()))
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        Ok(ModelParams::new(self.n, self.a, self.b, self.alpha)?)
    }

    /// Proxy time used by the `clt-s1`/`clt-s4` and related checks:
    /// `ceil(clt.t * clt.proxy_ratio)`.
    pub fn clt_proxy_t(&self) -> u64 {
        (self.knobs.clt_t as f64 * self.knobs.clt_proxy_ratio).ceil() as u64
    }

    /// The actual recording grid: the configured base grid plus every time
    /// a selected gate reads.
    pub fn record_times(&self) -> Vec<u64> {
        let mut times = self.grid.times(self.horizon);
        let mut extra: Vec<u64> = Vec::new();
        for gate in &self.gates {
            match gate {
                Gate::Scaling | Gate::Coefficients | Gate::Recursion => {}
                Gate::CltS1 | Gate::CltS4 => {
                    extra.push(self.knobs.clt_t);
                    extra.push(self.clt_proxy_t());
                }
                Gate::CltS2 | Gate::CltS3 => extra.push(self.knobs.clt_t),
                Gate::SubLimit => {
                    extra.push(self.knobs.sublimit_t1);
                    extra.push(self.knobs.sublimit_t2);
                }
                Gate::Covariance => extra.push(self.knobs.covariance_t),
                Gate::CiCoverage => {
                    extra.push(self.knobs.ci_t);
                    extra.push(self.knobs.ci_proxy_t);
                }
                Gate::AlphaEst => extra.push(self.knobs.alphaest_t),
            }
        }
        if !extra.is_empty() {
            extra.sort_unstable();
            extra.dedup();
            times = merge_times(&times, &extra);
        }
        times
    }

    /// Directory the per-replica trajectory files live in.
    pub fn trajectory_dir(&self) -> PathBuf {
        self.out
            .join(format!("trajectories-{}", self.config_hash()))
    }

    fn check_urn(&self, key: &str, urn: u32) -> Result<()> {
        if urn < 1 || urn > self.n {
            return Err(Error::Config(format!(
                "key `{key}`: urn {urn} out of range 1..={}",
                self.n
            )));
        }
        Ok(())
    }

    fn check_time(&self, key: &str, t: u64) -> Result<()> {
        if t > self.horizon {
            return Err(Error::Config(format!(
                "key `{key}`: time {t} exceeds the horizon {}",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Full validation: model parameters, then every selected gate's
    /// coupling precondition, time bounds, urn ranges, and replica minima.
    /// Knobs of unselected gates are not constrained, so one file can carry
    /// settings for runs at several scales.
    fn validate(&self) -> Result<()> {
        self.model_params()
            .map_err(|e| Error::Config(format!("model: {e}")))?;
        if self.replicas == 0 {
            return Err(Error::Config("key `replicas`: must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("key `horizon`: must be at least 1".into()));
        }
        if self.out.as_os_str().is_empty() {
            return Err(Error::Config("key `out`: must not be empty".into()));
        }
        let k = &self.knobs;
        let alpha = self.alpha;
        for gate in &self.gates {
            let name = gate.name();
            match gate {
                Gate::Scaling => {
                    if !(alpha > 0.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs coupling alpha > 0, got {alpha}"
                        )));
                    }
                    if k.scaling_window_lo < 1 || k.scaling_window_lo >= k.scaling_window_hi {
                        return Err(Error::Config(format!(
                            "gate `{name}`: window [{}, {}] is empty or starts at 0",
                            k.scaling_window_lo, k.scaling_window_hi
                        )));
                    }
                    self.check_time("scaling.window_hi", k.scaling_window_hi)?;
                    self.check_urn("scaling.urn", k.scaling_urn)?;
                    if !(k.scaling_slope_tol > 0.0 && k.scaling_slope_tol_critical > 0.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}`: slope tolerances must be positive"
                        )));
                    }
                }
                Gate::CltS1 | Gate::CltS2 | Gate::CltS3 | Gate::CltS4 => {
                    match gate {
                        Gate::CltS2 | Gate::CltS4 => {
                            if !(alpha > 0.5) {
                                return Err(Error::Config(format!(
                                    "gate `{name}` needs strong coupling alpha > 1/2, got {alpha}"
                                )));
                            }
                        }
                        Gate::CltS3 => {
                            if alpha != 0.5 {
                                return Err(Error::Config(format!(
                                    "gate `{name}` is the critical-coupling check; \
                                     alpha = {alpha} is not 1/2"
                                )));
                            }
                        }
                        _ => {
                            if !(alpha > 0.0) {
                                return Err(Error::Config(format!(
                                    "gate `{name}` needs coupling alpha > 0, got {alpha}"
                                )));
                            }
                        }
                    }
                    let min_t = if *gate == Gate::CltS3 { 2 } else { 1 };
                    if k.clt_t < min_t {
                        return Err(Error::Config(format!(
                            "gate `{name}`: clt.t must be at least {min_t}"
                        )));
                    }
                    self.check_time("clt.t", k.clt_t)?;
                    if matches!(gate, Gate::CltS1 | Gate::CltS4) {
                        if !(k.clt_proxy_ratio > 1.0) {
                            return Err(Error::Config(format!(
                                "gate `{name}`: clt.proxy_ratio must exceed 1, got {}",
                                k.clt_proxy_ratio
                            )));
                        }
                        self.check_time("clt.proxy_ratio (t * ratio)", self.clt_proxy_t())?;
                    }
                    if matches!(gate, Gate::CltS2 | Gate::CltS3 | Gate::CltS4) {
                        self.check_urn("clt.urn", k.clt_urn)?;
                    }
                }
                Gate::SubLimit => {
                    if !(alpha < 0.5) {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs weak coupling alpha < 1/2, got {alpha}"
                        )));
                    }
                    if k.sublimit_t1 < 1 || k.sublimit_t2 < 2 * k.sublimit_t1 {
                        return Err(Error::Config(format!(
                            "gate `{name}`: needs 1 <= sublimit.t1 and sublimit.t2 >= 2 t1, \
                             got t1={} t2={}",
                            k.sublimit_t1, k.sublimit_t2
                        )));
                    }
                    self.check_time("sublimit.t2", k.sublimit_t2)?;
                    self.check_urn("sublimit.urn", k.sublimit_urn)?;
                    if self.replicas < 2 {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs at least 2 replicas"
                        )));
                    }
                }
                Gate::Covariance => {
                    if !(alpha > 0.5) {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs strong coupling alpha > 1/2, got {alpha}"
                        )));
                    }
                    if k.covariance_t < 1 {
                        return Err(Error::Config(format!(
                            "gate `{name}`: covariance.t must be at least 1"
                        )));
                    }
                    self.check_time("covariance.t", k.covariance_t)?;
                    if self.replicas < 2000 {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs at least 2000 replicas, got {}",
                            self.replicas
                        )));
                    }
                }
                Gate::CiCoverage => {
                    if !(alpha > 0.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs coupling alpha > 0, got {alpha}"
                        )));
                    }
                    if k.ci_t < 1 || k.ci_proxy_t <= k.ci_t {
                        return Err(Error::Config(format!(
                            "gate `{name}`: needs 1 <= ci.t < ci.proxy_t, got t={} proxy={}",
                            k.ci_t, k.ci_proxy_t
                        )));
                    }
                    self.check_time("ci.proxy_t", k.ci_proxy_t)?;
                    if !(k.ci_level > 0.0 && k.ci_level < 1.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}`: ci.level must lie in (0, 1), got {}",
                            k.ci_level
                        )));
                    }
                    if !(k.ci_cover_lo >= 0.0
                        && k.ci_cover_lo < k.ci_cover_hi
                        && k.ci_cover_hi <= 1.0)
                    {
                        return Err(Error::Config(format!(
                            "gate `{name}`: needs 0 <= ci.cover_lo < ci.cover_hi <= 1, \
                             got [{}, {}]",
                            k.ci_cover_lo, k.ci_cover_hi
                        )));
                    }
                }
                Gate::AlphaEst => {
                    if !(alpha > 0.5) {
                        return Err(Error::Config(format!(
                            "gate `{name}` inverts the strong-coupling pivot variance; \
                             needs alpha > 1/2, got {alpha}"
                        )));
                    }
                    if k.alphaest_t < 1 {
                        return Err(Error::Config(format!(
                            "gate `{name}`: alphaest.t must be at least 1"
                        )));
                    }
                    self.check_time("alphaest.t", k.alphaest_t)?;
                    self.check_urn("alphaest.urn", k.alphaest_urn)?;
                    if !(k.alphaest_tol > 0.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}`: alphaest.tol must be positive"
                        )));
                    }
                    if self.replicas < 500 {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs at least 500 replicas, got {}",
                            self.replicas
                        )));
                    }
                }
                Gate::Coefficients => {
                    if !(alpha > 0.0 && alpha <= 1.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}` needs coupling alpha in (0, 1], got {alpha}"
                        )));
                    }
                    if k.coefficients_t < 1 {
                        return Err(Error::Config(format!(
                            "gate `{name}`: coefficients.t must be at least 1"
                        )));
                    }
                    if !(k.coefficients_tol > 0.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}`: coefficients.tol must be positive"
                        )));
                    }
                }
                Gate::Recursion => {
                    if k.recursion_instances < 1 || k.recursion_t < 1 {
                        return Err(Error::Config(format!(
                            "gate `{name}`: recursion.instances and recursion.t must be \
                             at least 1"
                        )));
                    }
                    if !(k.recursion_tol > 0.0) {
                        return Err(Error::Config(format!(
                            "gate `{name}`: recursion.tol must be positive"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
