//! Experiment configuration.
//!
//! A config file is flat TOML. The optional `include` key names another
//! file, resolved relative to the including one; keys in the including
//! file win. Drift segments are the only nested values:
//!
//! ```toml
//! include = "scenarios/desk_world.toml"
//! eta0 = 0.1
//!
//! [[segments]]
//! duration = 1024
//! clustering = "A"
//! rate = 0.0
//! ```
//!
//! `configs/defaults.toml` lists every key with its default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use sadl_core::{
    ClipKind, Clustering, DriftScenario, DriftSegment, LossConfig, RegKind, RotationScope, SadlConfig,
};
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("include cycle through {0}")]
    IncludeCycle(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

impl ConfigError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

impl From<sadl_core::Error> for ConfigError {
    fn from(e: sadl_core::Error) -> Self {
        match e {
            sadl_core::Error::InvalidParameter { name, reason } => ConfigError::invalid(name, reason),
            other => ConfigError::invalid("config", other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Sadl,
    /// A single learner at the fixed rate `eta0`.
    ComidFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegName {
    Nuclear,
    L1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipName {
    Linear,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScopeName {
    Full,
    ClusterSubspaces,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub duration: u64,
    pub clustering: String,
    #[serde(default)]
    pub rate: f64,
}

/// One algorithm run inside an experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlgoSpec {
    Sadl,
    Comid(f64),
}

impl AlgoSpec {
    pub fn name(&self) -> String {
        match self {
            AlgoSpec::Sadl => "sadl".to_string(),
            AlgoSpec::Comid(eta) => format!("comid:{eta}"),
        }
    }
}

impl FromStr for AlgoSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        if s == "sadl" {
            return Ok(AlgoSpec::Sadl);
        }
        let eta = s
            .strip_prefix("comid:")
            .and_then(|rate| rate.parse::<f64>().ok())
            .ok_or_else(|| ConfigError::invalid("algo", format!("expected `sadl` or `comid:ETA`, got {s:?}")))?;
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(ConfigError::invalid("algo", format!("rate must be finite and > 0, got {eta}")));
        }
        Ok(AlgoSpec::Comid(eta))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub algorithm: AlgorithmKind,
    /// Base rate for SADL, or the fixed rate for `comid_fixed`.
    pub eta0: f64,
    pub i0: u64,
    pub rho: f64,
    pub reg_kind: RegName,
    pub clip_c: f64,
    pub clip_kind: ClipName,
    pub ball_radius: Option<f64>,
    /// Fixed rates of extra COMID runs on the same streams.
    pub baselines: Vec<f64>,
    pub knn_k: usize,
    pub embed_dim: usize,
    pub eval_every: u64,
    pub nmi_clusters: usize,
    pub nmi_restarts: usize,
    pub nmi_threshold: f64,
    pub trials: u64,
    pub seed: u64,
    pub out_dir: PathBuf,

    pub n_points: usize,
    pub dim: usize,
    pub proportions: [f64; 3],
    pub blob_separation: f64,
    pub noise_sigma: f64,
    pub gain: f64,
    pub rotation_scope: ScopeName,
    pub segments: Vec<SegmentSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sc = DriftScenario::default();
        ExperimentConfig {
            algorithm: AlgorithmKind::Sadl,
            eta0: 0.1,
            i0: 1,
            rho: 0.0,
            reg_kind: RegName::Nuclear,
            clip_c: 2.0,
            clip_kind: ClipName::Linear,
            ball_radius: None,
            baselines: Vec::new(),
            knn_k: 5,
            embed_dim: 2,
            eval_every: 64,
            nmi_clusters: 3,
            nmi_restarts: 10,
            nmi_threshold: 0.8,
            trials: 1,
            seed: 0,
            out_dir: PathBuf::from("out"),
            n_points: sc.n_points,
            dim: sc.dim,
            proportions: sc.proportions,
            blob_separation: sc.blob_separation,
            noise_sigma: sc.noise_sigma,
            gain: sc.gain,
            rotation_scope: ScopeName::Full,
            segments: vec![SegmentSpec {
                duration: 1024,
                clustering: "A".to_string(),
                rate: 0.0,
            }],
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let table = load_table(path, &mut Vec::new())?;
        Self::from_table(table, &path.display().to_string())
    }

    /// Parses config text. Includes are resolved by `resolve`, which maps
    /// an include path (relative to `base`) to its text.
    pub fn from_str_with(
        text: &str,
        origin: &str,
        resolve: &dyn Fn(&str) -> Result<String, ConfigError>,
    ) -> Result<Self, ConfigError> {
        let mut table = parse_table(text, origin)?;
        let mut seen = vec![origin.to_string()];
        while let Some(include) = take_include(&mut table, origin)? {
            if seen.contains(&include) {
                return Err(ConfigError::IncludeCycle(include));
            }
            let mut inner = parse_table(&resolve(&include)?, &include)?;
            let next = take_include(&mut inner, &include)?;
            merge_into(&mut inner, table);
            table = inner;
            if let Some(n) = next {
                table.insert("include".into(), toml::Value::String(n));
            }
            seen.push(include);
        }
        Self::from_table(table, origin)
    }

    fn from_table(table: toml::Table, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Syntax {
            origin: origin.to_string(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(name, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("eta0", self.eta0)?;
        for &b in &self.baselines {
            positive("baselines", b)?;
        }
        if let Some(r) = self.ball_radius {
            positive("ball_radius", r)?;
        }
        if self.i0 == 0 {
            return Err(ConfigError::invalid("i0", "must be >= 1"));
        }
        if self.eval_every == 0 {
            return Err(ConfigError::invalid("eval_every", "must be >= 1"));
        }
        if self.trials == 0 {
            return Err(ConfigError::invalid("trials", "must be >= 1"));
        }
        if self.knn_k == 0 {
            return Err(ConfigError::invalid("knn_k", "must be >= 1"));
        }
        if self.nmi_clusters < 2 {
            return Err(ConfigError::invalid("nmi_clusters", "must be >= 2"));
        }
        if self.nmi_restarts == 0 {
            return Err(ConfigError::invalid("nmi_restarts", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.nmi_threshold) {
            return Err(ConfigError::invalid("nmi_threshold", "must lie in [0, 1]"));
        }
        if self.embed_dim == 0 || self.embed_dim > self.dim {
            return Err(ConfigError::invalid(
                "embed_dim",
                format!("must be in 1..={}, got {}", self.dim, self.embed_dim),
            ));
        }
        let names: Vec<String> = self.algorithms().iter().map(AlgoSpec::name).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(ConfigError::invalid("baselines", format!("{n} is listed twice")));
            }
        }
        self.loss().validate()?;
        self.scenario(0)?.validate()?;
        Ok(())
    }

    /// The primary algorithm followed by the baselines.
    pub fn algorithms(&self) -> Vec<AlgoSpec> {
        let primary = match self.algorithm {
            AlgorithmKind::Sadl => AlgoSpec::Sadl,
            AlgorithmKind::ComidFixed => AlgoSpec::Comid(self.eta0),
        };
        std::iter::once(primary).chain(self.baselines.iter().map(|&b| AlgoSpec::Comid(b))).collect()
    }

    pub fn set_algorithm(&mut self, algo: AlgoSpec) {
        match algo {
            AlgoSpec::Sadl => self.algorithm = AlgorithmKind::Sadl,
            AlgoSpec::Comid(eta) => {
                self.algorithm = AlgorithmKind::ComidFixed;
                self.eta0 = eta;
            }
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            rho: self.rho,
            reg_kind: match self.reg_kind {
                RegName::Nuclear => RegKind::Nuclear,
                RegName::L1 => RegKind::ElementwiseL1,
            },
            clip_c: self.clip_c,
            clip_kind: match self.clip_kind {
                ClipName::Linear => ClipKind::Linear,
                ClipName::Logistic => ClipKind::Logistic,
            },
        }
    }

    pub fn sadl_config(&self, seed: u64) -> SadlConfig {
        SadlConfig {
            i0: self.i0,
            ball_radius: self.ball_radius,
            ..SadlConfig::new(self.dim, self.eta0, self.loss(), seed)
        }
    }

    pub fn trial_seed(&self, trial: u64) -> u64 {
        self.seed.wrapping_add(trial)
    }

    /// The drift scenario of one trial.
    pub fn scenario(&self, trial: u64) -> Result<DriftScenario, ConfigError> {
        if self.segments.is_empty() {
            return Err(ConfigError::invalid("segments", "at least one segment is required"));
        }
        let segments = self
            .segments
            .iter()
            .map(|s| Ok(DriftSegment::new(s.duration, Clustering::from_str(&s.clustering)?, s.rate)))
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(DriftScenario {
            n_points: self.n_points,
            dim: self.dim,
            proportions: self.proportions,
            segments,
            blob_separation: self.blob_separation,
            noise_sigma: self.noise_sigma,
            gain: self.gain,
            rotation_scope: match self.rotation_scope {
                ScopeName::Full => RotationScope::Full,
                ScopeName::ClusterSubspaces => RotationScope::ClusterSubspaces,
            },
            seed: self.trial_seed(trial),
        })
    }

    pub fn total_steps(&self) -> u64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

fn parse_table(text: &str, origin: &str) -> Result<toml::Table, ConfigError> {
    toml::from_str(text).map_err(|e: toml::de::Error| ConfigError::Syntax {
        origin: origin.to_string(),
        message: e.to_string(),
    })
}

fn take_include(table: &mut toml::Table, origin: &str) -> Result<Option<String>, ConfigError> {
    match table.remove("include") {
        None => Ok(None),
        Some(toml::Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(ConfigError::Syntax {
            origin: origin.to_string(),
            message: "`include` must be a string".to_string(),
        }),
    }
}

/// Later keys replace earlier ones wholesale.
fn merge_into(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        base.insert(k, v);
    }
}

fn load_table(path: &Path, stack: &mut Vec<PathBuf>) -> Result<toml::Table, ConfigError> {
    let canonical = path.canonicalize().map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if stack.contains(&canonical) {
        return Err(ConfigError::IncludeCycle(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let origin = path.display().to_string();
    let mut table = parse_table(&text, &origin)?;
    let Some(include) = take_include(&mut table, &origin)? else {
        return Ok(table);
    };
    stack.push(canonical);
    let target = path.parent().unwrap_or(Path::new(".")).join(include);
    let mut base = load_table(&target, stack)?;
    stack.pop();
    merge_into(&mut base, table);
    Ok(base)
}

/// The configs shipped in `configs/`, compiled in so that `verify` works
/// from any directory.
pub const BUILTIN: &[(&str, &str)] = &[
    ("defaults.toml", include_str!("../../../configs/defaults.toml")),
    ("desk_switch.toml", include_str!("../../../configs/desk_switch.toml")),
    ("paper_profile.toml", include_str!("../../../configs/paper_profile.toml")),
    ("static_regret.toml", include_str!("../../../configs/static_regret.toml")),
    ("scenarios/desk_world.toml", include_str!("../../../configs/scenarios/desk_world.toml")),
];

pub fn builtin_text(name: &str) -> Option<&'static str> {
    BUILTIN.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

/// Loads one of the shipped configs. Includes resolve against the other
/// shipped files, relative to the including file's directory.
pub fn builtin(name: &str) -> Result<ExperimentConfig, ConfigError> {
    let text = builtin_text(name).ok_or_else(|| ConfigError::invalid("config", format!("no built-in config {name:?}")))?;
    let dir = Path::new(name).parent().map(Path::to_path_buf).unwrap_or_default();
    ExperimentConfig::from_str_with(text, name, &|inc| {
        let joined = dir.join(inc);
        let key = joined.to_string_lossy().replace('\\', "/");
        builtin_text(&key)
            .map(str::to_string)
            .ok_or_else(|| ConfigError::invalid("include", format!("no built-in config {key:?}")))
    })
}
