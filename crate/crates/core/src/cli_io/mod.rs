//! Batch runs: JSON configuration, CSV/JSON artifacts and a manifest with
//! an invariant ledger.
//!
//! Exit codes: 0 when every hard invariant passes, 1 on solver failure or a
//! failed invariant, 2 on configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Profile;
use crate::geometry::{Interval, Mesh, Params};
use crate::stationary::SignChoice;

mod commands;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Verify,
    Eigen,
    Heat,
    Poisson,
    Mountainpass,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Eigen => "eigen",
            Command::Heat => "heat",
            Command::Poisson => "poisson",
            Command::Mountainpass => "mountainpass",
        }
    }
}

/// Source term of the coercive problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Source {
    Constant { value: f64 },
    /// `amplitude · cos(k π (x - a) / |Ω|)`.
    Cosine { amplitude: f64, k: f64 },
    /// Piecewise-linear interpolation of `(x, f)` samples, constant beyond
    /// the ends.
    Table { x: Vec<f64>, f: Vec<f64> },
}

impl Source {
    fn validate(&self) -> Result<()> {
        if let Source::Table { x, f } = self {
            if x.len() != f.len() || x.is_empty() {
                return Err(Error::Config("source table needs matching, nonempty x and f".into()));
            }
            if x.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("source table x must be strictly increasing".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, omega: Interval) -> f64 {
        match self {
            Source::Constant { value } => *value,
            Source::Cosine { amplitude, k } => {
                amplitude * (k * std::f64::consts::PI * (x - omega.a) / omega.length()).cos()
            }
            Source::Table { x: xs, f } => {
                let i = xs.partition_point(|&t| t <= x);
                if i == 0 {
                    f[0]
                } else if i == xs.len() {
                    f[f.len() - 1]
                } else {
                    let t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
                    f[i - 1] + t * (f[i] - f[i - 1])
                }
            }
        }
    }
}

fn default_p() -> f64 {
    2.0
}
fn default_s() -> f64 {
    0.5
}
fn default_b() -> f64 {
    1.0
}
fn default_n() -> usize {
    16
}
fn default_radius() -> f64 {
    1.0
}
fn default_order() -> usize {
    6
}

/// Flat JSON configuration. Command-specific fields are optional and
/// rejected for commands they do not apply to.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    /// Exponent of the function space (defaults to `p + 1`).
    #[serde(default)]
    pub r: Option<f64>,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_n")]
    pub n_interior: usize,
    #[serde(default = "default_radius")]
    pub collar_radius: f64,
    /// Defaults to the count matching the interior spacing.
    #[serde(default)]
    pub n_exterior: Option<usize>,
    #[serde(default = "default_order")]
    pub quad_order: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,

    // eigen, mountainpass
    #[serde(default)]
    pub n_seeds: Option<usize>,
    // heat
    #[serde(default)]
    pub profile: Option<Profile>,
    #[serde(default)]
    pub tau: Option<f64>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub snapshot_steps: Option<Vec<usize>>,
    // poisson
    #[serde(default)]
    pub source: Option<Source>,
    // mountainpass
    #[serde(default)]
    pub sign: Option<SignChoice>,
    #[serde(default)]
    pub nonlinearity_r: Option<f64>,
}

impl RunConfig {
    pub fn params(&self) -> Result<Params> {
        let mut params = Params::new(self.p, self.s)?
            .with_collar_radius(self.collar_radius)?
            .with_quad_order(self.quad_order)?;
        if let Some(r) = self.r {
            params = params.with_r(r)?;
        }
        Ok(params)
    }

    pub fn mesh(&self) -> Result<Arc<Mesh>> {
        let omega = Interval::new(self.a, self.b)?;
        let mesh = match self.n_exterior {
            Some(n) => Mesh::uniform(omega, self.n_interior, self.collar_radius, n)?,
            None => Mesh::matched(omega, self.n_interior, self.collar_radius)?,
        };
        Ok(Arc::new(mesh))
    }

    pub fn n_seeds(&self) -> usize {
        self.n_seeds.unwrap_or(4)
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(0.01)
    }

    pub fn steps(&self) -> usize {
        self.steps.unwrap_or(100)
    }

    pub fn profile(&self) -> Profile {
        self.profile.unwrap_or(Profile::Hat)
    }

    pub fn source(&self) -> Source {
        self.source.clone().unwrap_or(Source::Constant { value: 1.0 })
    }

    pub fn sign(&self) -> SignChoice {
        self.sign.unwrap_or(SignChoice::Plus)
    }

    pub fn nonlinearity_r(&self) -> f64 {
        self.nonlinearity_r.unwrap_or(self.p + 1.0)
    }

    /// Range and applicability checks beyond the JSON schema.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.mesh()?;
        let used: &[(&str, bool)] = &[
            ("n_seeds", self.n_seeds.is_some()),
            ("profile", self.profile.is_some()),
            ("tau", self.tau.is_some()),
            ("steps", self.steps.is_some()),
            ("snapshot_steps", self.snapshot_steps.is_some()),
            ("source", self.source.is_some()),
            ("sign", self.sign.is_some()),
            ("nonlinearity_r", self.nonlinearity_r.is_some()),
        ];
        let allowed: &[&str] = match self.command {
            Command::Verify => &[],
            Command::Eigen => &["n_seeds"],
            Command::Heat => &["profile", "tau", "steps", "snapshot_steps"],
            Command::Poisson => &["source"],
            Command::Mountainpass => &["n_seeds", "sign", "nonlinearity_r"],
        };
        for (name, set) in used {
            if *set && !allowed.contains(name) {
                return Err(Error::Config(format!(
                    "field `{name}` does not apply to command `{}`",
                    self.command.name()
                )));
            }
        }
        if self.n_seeds() == 0 {
            return Err(Error::Config("n_seeds must be at least 1".into()));
        }
        if !(self.tau() > 0.0 && self.tau().is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau())));
        }
        if self.steps() == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if let Some(Profile::Gaussian { width }) = self.profile {
            if !(width > 0.0) {
                return Err(Error::Config(format!("gaussian width must be positive, got {width}")));
            }
        }
        if let Some(src) = &self.source {
            src.validate()?;
        }
        if self.command == Command::Mountainpass && !(self.nonlinearity_r() > self.p) {
            return Err(Error::Config(format!(
                "nonlinearity_r must exceed p = {}, got {}",
                self.p,
                self.nonlinearity_r()
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(())
    }
}

/// Parses and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize)]
pub struct InvariantEntry {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    InvariantFailed,
    SolverFailed,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub invariants: Vec<InvariantEntry>,
    /// Files written to the output directory, including this manifest.
    pub files: Vec<String>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Pass => 0,
            _ => 1,
        }
    }
}

/// Collects artifacts and verdicts while a command runs.
pub(crate) struct Recorder {
    dir: PathBuf,
    files: Vec<String>,
    invariants: Vec<InvariantEntry>,
}

impl Recorder {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            invariants: Vec::new(),
        })
    }

    /// Records `value ≤ threshold`.
    pub(crate) fn at_most(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        let pass = value <= threshold;
        self.push(name.into(), value, threshold, pass);
    }

    /// Records `value ≥ threshold`.
    pub(crate) fn at_least(&mut self, name: impl Into<String>, value: f64, threshold: f64) {
        let pass = value >= threshold;
        self.push(name.into(), value, threshold, pass);
    }

    pub(crate) fn flag(&mut self, name: impl Into<String>, ok: bool) {
        self.push(name.into(), if ok { 1.0 } else { 0.0 }, 1.0, ok);
    }

    fn push(&mut self, name: String, value: f64, threshold: f64, pass: bool) {
        if !pass {
            log::warn!("invariant {name} failed: {value:e} vs {threshold:e}");
        }
        self.invariants.push(InvariantEntry { name, value, threshold, pass });
    }

    pub(crate) fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let mut w = csv::Writer::from_path(self.dir.join(name))?;
        for row in rows {
            w.serialize(row)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub(crate) fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        fs::write(self.dir.join(name), serde_json::to_string_pretty(value)?)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

/// Executes `config` with artifacts under `out`. Configuration problems are
/// returned as errors; solver failures produce a manifest with status
/// `solver_failed` holding whatever was written before the failure.
pub fn run(config: &RunConfig, out: &Path) -> Result<RunManifest> {
    config.validate()?;
    let threads = config
        .threads
        .or_else(|| std::env::var("NLNEUMANN_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or_else(rayon::current_num_threads)
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;
    let start = Instant::now();
    let mut rec = Recorder::new(out)?;
    let outcome = pool.install(|| commands::dispatch(config, &mut rec));
    let (status, error) = match outcome {
        Ok(()) if rec.invariants.iter().all(|i| i.pass) => (RunStatus::Pass, None),
        Ok(()) => (RunStatus::InvariantFailed, None),
        Err(e @ Error::Config(_)) => return Err(e),
        Err(e) => (RunStatus::SolverFailed, Some(e.to_string())),
    };
    let mut files = rec.files;
    files.push("manifest.json".into());
    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads,
        wall_time_s: start.elapsed().as_secs_f64(),
        status,
        error,
        invariants: rec.invariants,
        files,
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_examples_parse() {
        let cfg = parse_config(r#"{"command":"eigen","p":2,"s":0.5,"n_interior":32}"#).unwrap();
        assert_eq!(cfg.command, Command::Eigen);
        assert_eq!(cfg.n_interior, 32);
        let e = parse_config(r#"{"command":"eigen","s":1.5}"#).unwrap_err().to_string();
        assert!(e.contains("(0,1)"), "{e}");
        let e = parse_config(r#"{"command":"fly"}"#).unwrap_err().to_string();
        assert!(e.contains("eigen") && e.contains("fly"), "{e}");
    }

    #[test]
    fn unknown_and_misplaced_fields_are_rejected() {
        assert!(parse_config(r#"{"command":"heat","tua":0.1}"#).is_err());
        let e = parse_config(r#"{"command":"eigen","tau":0.1}"#).unwrap_err().to_string();
        assert!(e.contains("tau"), "{e}");
        assert!(parse_config(r#"{"p":2}"#).is_err());
    }

    #[test]
    fn table_source_interpolates() {
        let src = Source::Table { x: vec![0.0, 1.0], f: vec![2.0, 4.0] };
        let omega = Interval::new(0.0, 1.0).unwrap();
        assert_eq!(src.eval(0.25, omega), 2.5);
        assert_eq!(src.eval(-1.0, omega), 2.0);
        assert_eq!(src.eval(3.0, omega), 4.0);
    }
}
