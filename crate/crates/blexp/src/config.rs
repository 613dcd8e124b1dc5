//! Run configuration: a versioned, plain-text `key = value` format.
//!
//! One [`RunConfig`] drives every pipeline stage. The textual form groups
//! keys under `[section]` headers (headers are organizational only; keys
//! are globally unique), accepts `#` comments and blank lines, and is
//! emitted with every default made explicit so a run's resolved
//! configuration is a complete record. Parsing an emitted config
//! reproduces the value exactly; unknown or duplicate keys are errors, as
//! is a schema version other than the one this build writes.

use thiserror::Error;

use crate::flows::{make_flow, EulerFlow, FlowError, FlowKind};

/// Schema version written and required by this build.
pub const SCHEMA_VERSION: u32 = 1;

/// Errors from parsing or validating a configuration.
#[derive(Debug, Error)]
pub enum ConfigError {
    /// A line was not a comment, section header, or `key = value` pair.
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax {
        /// 1-based line number.
        line: usize,
        /// Offending line content.
        text: String,
    },
    /// A key this schema does not define.
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    /// The same key appeared twice.
    #[error("duplicate configuration key `{0}`")]
    DuplicateKey(String),
    /// A value failed to parse or is out of range.
    #[error("bad value for `{key}`: {reason}")]
    BadValue {
        /// Key whose value is invalid.
        key: String,
        /// What went wrong.
        reason: String,
    },
    /// The file declares a different schema version.
    #[error("schema version {0} not supported (this build reads {SCHEMA_VERSION})")]
    Version(u32),
    /// The configured flow could not be constructed.
    #[error("flow: {0}")]
    Flow(#[from] FlowError),
}

/// Complete description of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Schema version (must equal [`SCHEMA_VERSION`]).
    pub schema_version: u32,
    /// Base flow family: `shear`, `strain`, or `harmonic`.
    pub flow_kind: String,
    /// Shear amplitude (used when `flow_kind = shear`).
    pub beta: f64,
    /// Strain rate or harmonic amplitude (used by `strain` / `harmonic`).
    pub alpha: f64,
    /// Horizontal wavenumber (used when `flow_kind = harmonic`).
    pub k: f64,
    /// Domain length.
    pub l: f64,
    /// Domain height.
    pub y_max: f64,
    /// Streamwise stations.
    pub nx: usize,
    /// Boundary-layer march nodes (layer units).
    pub march_ny: usize,
    /// Outer corrector nodes.
    pub outer_ny: usize,
    /// Decreasing viscosity list for the remainder sweep.
    pub eps_list: Vec<f64>,
    /// Viscosity for the remainder-correction verification stage.
    pub verify_eps: f64,
    /// Inflow selection: `blasius`, or `table:<path>` naming a two-column
    /// profile file.
    pub inflow: String,
    /// Fixed-point tolerance as a multiple of `eps^{3/2}`.
    pub picard_tol_factor: f64,
    /// Random draws per interpolation-inequality corpus.
    pub probe_draws: usize,
    /// Output directory (overridable by the `BLEXP_OUT` environment
    /// variable at run time).
    pub out_dir: String,
    /// Seed for every random corpus in the run.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            flow_kind: "shear".into(),
            beta: 0.1,
            alpha: 0.1,
            k: 1.0,
            l: 0.25,
            y_max: 8.0,
            nx: 64,
            march_ny: 385,
            outer_ny: 129,
            eps_list: vec![1e-2, 10f64.powf(-2.5), 1e-3, 10f64.powf(-3.5)],
            verify_eps: 1e-3,
            inflow: "blasius".into(),
            picard_tol_factor: 1e-10,
            probe_draws: 100,
            out_dir: "out".into(),
            seed: 42,
        }
    }
}

impl RunConfig {
    /// Parses the plain-text format. Keys not present keep their defaults;
    /// unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        let mut seen: Vec<String> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line: lineno + 1,
                    text: raw.trim().to_string(),
                });
            };
            let key = key.trim();
            let value = value.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey(key.to_string()));
            }
            seen.push(key.to_string());
            cfg.apply(key, value)?;
        }
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Version(cfg.schema_version));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value.parse().map_err(|_| ConfigError::BadValue {
                key: key.to_string(),
                reason: format!("cannot parse `{value}`"),
            })
        }
        match key {
            "schema_version" => self.schema_version = num(key, value)?,
            "flow_kind" => self.flow_kind = value.to_string(),
            "beta" => self.beta = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "k" => self.k = num(key, value)?,
            "l" => self.l = num(key, value)?,
            "y_max" => self.y_max = num(key, value)?,
            "nx" => self.nx = num(key, value)?,
            "march_ny" => self.march_ny = num(key, value)?,
            "outer_ny" => self.outer_ny = num(key, value)?,
            "eps_list" => {
                let mut list = Vec::new();
                for part in value.split(',') {
                    list.push(num::<f64>(key, part.trim())?);
                }
                self.eps_list = list;
            }
            "verify_eps" => self.verify_eps = num(key, value)?,
            "inflow" => self.inflow = value.to_string(),
            "picard_tol_factor" => self.picard_tol_factor = num(key, value)?,
            "probe_draws" => self.probe_draws = num(key, value)?,
            "out_dir" => self.out_dir = value.to_string(),
            "seed" => self.seed = num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Structural validation beyond per-key parsing.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| ConfigError::BadValue {
            key: key.into(),
            reason,
        };
        match self.flow_kind.as_str() {
            "shear" | "strain" | "harmonic" => {}
            other => {
                return Err(bad(
                    "flow_kind",
                    format!("`{other}` is not one of shear, strain, harmonic"),
                ))
            }
        }
        if !(self.l > 0.0) || !(self.y_max > 0.0) {
            return Err(bad("l", "domain dimensions must be positive".into()));
        }
        if self.nx < 8 || self.march_ny < 9 || self.outer_ny < 9 {
            return Err(bad("nx", "grid too small (nx ≥ 8, ny ≥ 9)".into()));
        }
        if self.eps_list.is_empty() || self.eps_list.iter().any(|&e| !(e > 0.0)) {
            return Err(bad("eps_list", "viscosities must be positive".into()));
        }
        if !(self.verify_eps > 0.0) {
            return Err(bad("verify_eps", "must be positive".into()));
        }
        if !(self.inflow == "blasius" || self.inflow.starts_with("table:")) {
            return Err(bad(
                "inflow",
                format!("`{}` is neither `blasius` nor `table:<path>`", self.inflow),
            ));
        }
        if !(self.picard_tol_factor > 0.0) {
            return Err(bad("picard_tol_factor", "must be positive".into()));
        }
        if self.probe_draws == 0 {
            return Err(bad("probe_draws", "need at least one draw".into()));
        }
        Ok(())
    }

    /// Constructs the configured base flow.
    pub fn flow(&self) -> Result<EulerFlow, ConfigError> {
        let kind = match self.flow_kind.as_str() {
            "shear" => FlowKind::Shear { beta: self.beta },
            "strain" => FlowKind::Strain { alpha: self.alpha },
            "harmonic" => FlowKind::HarmonicPerturb {
                alpha: self.alpha,
                k: self.k,
            },
            other => {
                return Err(ConfigError::BadValue {
                    key: "flow_kind".into(),
                    reason: format!("`{other}` is not a flow family"),
                })
            }
        };
        Ok(make_flow(kind, self.l, self.y_max)?)
    }

    /// Emits the full configuration with every value explicit. Parsing the
    /// result reproduces `self` exactly.
    pub fn to_text(&self) -> String {
        let eps = self
            .eps_list
            .iter()
            .map(|e| format!("{e:?}"))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "# resolved run configuration\n\
             schema_version = {}\n\
             \n\
             [flow]\n\
             flow_kind = {}\n\
             beta = {:?}\n\
             alpha = {:?}\n\
             k = {:?}\n\
             l = {:?}\n\
             y_max = {:?}\n\
             \n\
             [grid]\n\
             nx = {}\n\
             march_ny = {}\n\
             outer_ny = {}\n\
             \n\
             [sweep]\n\
             eps_list = {}\n\
             verify_eps = {:?}\n\
             \n\
             [solver]\n\
             inflow = {}\n\
             picard_tol_factor = {:?}\n\
             probe_draws = {}\n\
             \n\
             [output]\n\
             out_dir = {}\n\
             seed = {}\n",
            self.schema_version,
            self.flow_kind,
            self.beta,
            self.alpha,
            self.k,
            self.l,
            self.y_max,
            self.nx,
            self.march_ny,
            self.outer_ny,
            eps,
            self.verify_eps,
            self.inflow,
            self.picard_tol_factor,
            self.probe_draws,
            self.out_dir,
            self.seed,
        )
    }
}
