//! Plain-text run configuration: `[section]` headers over `key = value` lines.
//!
//! Blank lines and lines starting with `#` or `;` are ignored. Keys and
//! section names are lowercase `[a-z0-9_]`. Every key present in the file must
//! be meaningful for the selected task; unknown or duplicate keys are rejected
//! with a diagnostic naming the offending key.
//!
//! Schema (defaults in parentheses):
//!
//! ```text
//! [grid]      n = 48                # points per axis (required)
//!             spacing = 0.25        # grid spacing (required)
//! [gauge]     bz = 1.0              # field along z (0; not valid for scan-B)
//! [run]       task = solve          # optional, must match the CLI task
//!             n = 1                 # particle count (1)
//!             alpha = 0.8           # coupling in [0, 1] (1.0)
//!             families = hartree    # comma list: hartree|slater|pair|twobody
//!             starts = spread       # comma list: spread|shifted|random
//!             q = 2                 # spin states for slater (2)
//!             seed = 7              # required when any start is 'random'
//!             out = out             # output directory; CLI --out overrides
//! [scf]       mixing, outer_tol, max_outer, grad_tol, max_inner,
//!             param_every, energy_tol
//! [scan]      alphas = 0.2,0.4,0.6  # scan-alpha points (required there)
//!             b_values = 0.5,1.0    # scan-B points (required there)
//!             independent = false   # cold-start points; parallelizable
//! [multipole] cutoff_r = 4.0        # support radius (required)
//!             r_values = 4.0,8.0    # norm-scan radii (cutoff_r x {1,2,4})
//!             kernel_points = 1000  # kernel remainder sample size
//!             mc_samples = 1000000  # dipole-functional Monte Carlo samples
//! [ims]       epsilon = 0.5         # partition scale (required)
//!             r_eps = 1.0           # inner plateau radius (required)
//!             trivial = false       # compact synthetic state, no solve
//! [decay]     planted = false       # fit a planted profile, no solve
//!             beta = 1.0            # planted orbital decay rate
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use crate::grid::{Grid3D, MagneticGauge};
use crate::scf::{FamilyKind, ScfConfig, StartKind};
use crate::{Error, Result};

/// The eight batch tasks the runner knows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Solve,
    ScanAlpha,
    ScanB,
    Binding,
    MultipoleVerify,
    ImsCheck,
    DecayFit,
    Oracle2Body,
}

impl TaskKind {
    pub const ALL: [TaskKind; 8] = [
        TaskKind::Solve,
        TaskKind::ScanAlpha,
        TaskKind::ScanB,
        TaskKind::Binding,
        TaskKind::MultipoleVerify,
        TaskKind::ImsCheck,
        TaskKind::DecayFit,
        TaskKind::Oracle2Body,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskKind::Solve => "solve",
            TaskKind::ScanAlpha => "scan-alpha",
            TaskKind::ScanB => "scan-B",
            TaskKind::Binding => "binding",
            TaskKind::MultipoleVerify => "multipole-verify",
            TaskKind::ImsCheck => "ims-check",
            TaskKind::DecayFit => "decay-fit",
            TaskKind::Oracle2Body => "oracle-2body",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        for t in TaskKind::ALL {
            if s == t.name() {
                return Ok(t);
            }
        }
        let names: Vec<&str> = TaskKind::ALL.iter().map(|t| t.name()).collect();
        Err(Error::Usage(format!(
            "unknown task '{s}' (expected one of: {})",
            names.join(", ")
        )))
    }
}

/// Task-specific parameters, fully validated at parse time.
#[derive(Clone, Debug)]
pub enum TaskParams {
    Solve,
    ScanAlpha {
        alphas: Vec<f64>,
        independent: bool,
    },
    ScanB {
        b_values: Vec<f64>,
        independent: bool,
    },
    Binding,
    Multipole {
        cutoff_r: f64,
        r_values: Vec<f64>,
        kernel_points: usize,
        mc_samples: usize,
    },
    Ims {
        epsilon: f64,
        r_eps: f64,
        trivial: bool,
    },
    Decay {
        planted: bool,
        beta: f64,
    },
    Oracle2Body,
}

/// CLI-level overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// A fully resolved run: everything a task needs, plus the config echo.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub task: TaskKind,
    pub grid: Grid3D,
    pub gauge: MagneticGauge,
    pub alpha: f64,
    pub n_particles: usize,
    pub families: Vec<FamilyKind>,
    pub starts: Vec<StartKind>,
    pub q: usize,
    pub scf: ScfConfig,
    pub energy_tol: f64,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub params: TaskParams,
    echo: serde_json::Value,
}

impl RunConfig {
    /// Canonical echo of the provided file plus effective overrides; embedded
    /// verbatim in every report.
    pub fn echo(&self) -> &serde_json::Value {
        &self.echo
    }

    pub fn from_text(text: &str, task: TaskKind, overrides: &Overrides) -> Result<RunConfig> {
        let mut doc = Doc::parse(text)?;
        doc.allow_section("grid");
        doc.allow_section("gauge");
        doc.allow_section("run");
        doc.allow_section("scf");

        // [run] task, when present, must agree with the CLI task.
        if let Some(t) = doc.get_str("run", "task") {
            let t = t.to_string();
            if TaskKind::parse(&t)? != task {
                return Err(Error::Usage(format!(
                    "bad value for '[run] task': file says '{t}' but the command line says '{}'",
                    task.name()
                )));
            }
        }

        let n_grid = doc.req_usize("grid", "n")?;
        let spacing = doc.req_f64("grid", "spacing")?;
        let grid = Grid3D::new(n_grid, spacing)?;

        let bz = doc.get_f64("gauge", "bz", 0.0)?;
        if task == TaskKind::ScanB && doc.was_provided("gauge", "bz") {
            return Err(Error::Usage(
                "bad key '[gauge] bz': scan-B sets the field from '[scan] b_values'".into(),
            ));
        }
        let gauge = MagneticGauge::new([0.0, 0.0, bz]);

        let n_particles = doc.get_usize("run", "n", 1)?;
        if n_particles == 0 {
            return Err(Error::Config("bad value for '[run] n': need n >= 1".into()));
        }
        let alpha = doc.get_f64("run", "alpha", 1.0)?;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "bad value for '[run] alpha': coupling must lie in [0, 1], got {alpha}"
            )));
        }
        if task == TaskKind::ScanAlpha && doc.was_provided("run", "alpha") {
            return Err(Error::Usage(
                "bad key '[run] alpha': scan-alpha takes its couplings from '[scan] alphas'".into(),
            ));
        }

        let families = match doc.get_str("run", "families") {
            Some(s) => parse_families(&s.to_string())?,
            None => vec![FamilyKind::Hartree],
        };
        let starts = match doc.get_str("run", "starts") {
            Some(s) => parse_starts(&s.to_string())?,
            None => vec![StartKind::Spread],
        };
        let q = doc.get_usize("run", "q", 2)?;
        if q == 0 {
            return Err(Error::Config("bad value for '[run] q': need q >= 1".into()));
        }

        let seed_from_file = doc.get_opt_u64("run", "seed")?;
        let seed_provided = overrides.seed.is_some() || seed_from_file.is_some();
        let seed = overrides.seed.or(seed_from_file).unwrap_or(1);
        if starts.contains(&StartKind::Random) && !seed_provided {
            return Err(Error::Usage(
                "starts include 'random' but no seed was given: set '[run] seed' or pass --seed"
                    .into(),
            ));
        }

        let out_dir = match &overrides.out {
            Some(p) => p.clone(),
            None => PathBuf::from(
                doc.get_str("run", "out")
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "out".to_string()),
            ),
        };

        let d = ScfConfig::default();
        let scf = ScfConfig {
            alpha,
            mixing: doc.get_f64("scf", "mixing", d.mixing)?,
            outer_tol: doc.get_f64("scf", "outer_tol", d.outer_tol)?,
            max_outer: doc.get_usize("scf", "max_outer", d.max_outer)?,
            grad_tol: doc.get_f64("scf", "grad_tol", d.grad_tol)?,
            max_inner: doc.get_usize("scf", "max_inner", d.max_inner)?,
            param_every: doc.get_usize("scf", "param_every", d.param_every)?,
            seed,
        };
        let energy_tol = doc.get_f64("scf", "energy_tol", 1e-4)?;
        if energy_tol <= 0.0 {
            return Err(Error::Config(
                "bad value for '[scf] energy_tol': must be positive".into(),
            ));
        }

        let params = parse_task_params(task, &mut doc, n_particles)?;
        doc.finish()?;

        let mut echo = doc.echo_value();
        let eff = echo
            .as_object_mut()
            .expect("echo is an object")
            .entry("effective".to_string())
            .or_insert_with(|| serde_json::json!({}));
        let eff = eff.as_object_mut().expect("effective is an object");
        eff.insert("task".into(), serde_json::json!(task.name()));
        eff.insert("seed".into(), serde_json::json!(seed));
        eff.insert(
            "out".into(),
            serde_json::json!(out_dir.display().to_string()),
        );

        Ok(RunConfig {
            task,
            grid,
            gauge,
            alpha,
            n_particles,
            families,
            starts,
            q,
            scf,
            energy_tol,
            out_dir,
            seed,
            params,
            echo,
        })
    }
}

fn parse_task_params(task: TaskKind, doc: &mut Doc, n_particles: usize) -> Result<TaskParams> {
    match task {
        TaskKind::Solve => Ok(TaskParams::Solve),
        TaskKind::ScanAlpha => {
            doc.allow_section("scan");
            let alphas = doc.req_list_f64("scan", "alphas")?;
            let independent = doc.get_bool("scan", "independent", false)?;
            Ok(TaskParams::ScanAlpha {
                alphas,
                independent,
            })
        }
        TaskKind::ScanB => {
            doc.allow_section("scan");
            let b_values = doc.req_list_f64("scan", "b_values")?;
            let independent = doc.get_bool("scan", "independent", false)?;
            Ok(TaskParams::ScanB {
                b_values,
                independent,
            })
        }
        TaskKind::Binding => {
            if n_particles < 2 {
                return Err(Error::Config(
                    "bad value for '[run] n': the binding task needs n >= 2".into(),
                ));
            }
            Ok(TaskParams::Binding)
        }
        TaskKind::MultipoleVerify => {
            doc.allow_section("multipole");
            let cutoff_r = doc.req_f64("multipole", "cutoff_r")?;
            if cutoff_r <= 0.0 {
                return Err(Error::Config(
                    "bad value for '[multipole] cutoff_r': must be positive".into(),
                ));
            }
            let r_values = match doc.get_opt_list_f64("multipole", "r_values")? {
                Some(v) => v,
                None => vec![cutoff_r, 2.0 * cutoff_r, 4.0 * cutoff_r],
            };
            let kernel_points = doc.get_usize("multipole", "kernel_points", 1000)?;
            let mc_samples = doc.get_usize("multipole", "mc_samples", 1_000_000)?;
            if kernel_points == 0 || mc_samples == 0 {
                return Err(Error::Config(
                    "bad value in '[multipole]': sample counts must be positive".into(),
                ));
            }
            Ok(TaskParams::Multipole {
                cutoff_r,
                r_values,
                kernel_points,
                mc_samples,
            })
        }
        TaskKind::ImsCheck => {
            doc.allow_section("ims");
            let epsilon = doc.req_f64("ims", "epsilon")?;
            let r_eps = doc.req_f64("ims", "r_eps")?;
            let trivial = doc.get_bool("ims", "trivial", false)?;
            Ok(TaskParams::Ims {
                epsilon,
                r_eps,
                trivial,
            })
        }
        TaskKind::DecayFit => {
            doc.allow_section("decay");
            let planted = doc.get_bool("decay", "planted", false)?;
            let beta = doc.get_f64("decay", "beta", 1.0)?;
            if beta <= 0.0 {
                return Err(Error::Config(
                    "bad value for '[decay] beta': must be positive".into(),
                ));
            }
            Ok(TaskParams::Decay { planted, beta })
        }
        TaskKind::Oracle2Body => Ok(TaskParams::Oracle2Body),
    }
}

fn parse_families(s: &str) -> Result<Vec<FamilyKind>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        out.push(FamilyKind::parse(tok).map_err(|_| {
            Error::Config(format!(
                "bad value for '[run] families': unknown family '{tok}' \
                 (expected hartree|slater|pair|twobody)"
            ))
        })?);
    }
    if out.is_empty() {
        return Err(Error::Config(
            "bad value for '[run] families': the list is empty".into(),
        ));
    }
    Ok(out)
}

fn parse_starts(s: &str) -> Result<Vec<StartKind>> {
    let mut out = Vec::new();
    for tok in s.split(',') {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        out.push(match tok {
            "spread" => StartKind::Spread,
            "shifted" => StartKind::Shifted,
            "random" => StartKind::Random,
            other => {
                return Err(Error::Config(format!(
                    "bad value for '[run] starts': unknown start '{other}' \
                     (expected spread|shifted|random)"
                )))
            }
        });
    }
    if out.is_empty() {
        return Err(Error::Config(
            "bad value for '[run] starts': the list is empty".into(),
        ));
    }
    Ok(out)
}

/// Parsed key = value document with consumption tracking: after the typed
/// reads, `finish` rejects anything left over, naming the offending key.
#[derive(Clone, Debug, Default)]
struct Doc {
    sections: BTreeMap<String, BTreeMap<String, String>>,
    consumed: BTreeSet<(String, String)>,
    allowed_sections: BTreeSet<String>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl Doc {
    fn parse(text: &str) -> Result<Doc> {
        let mut doc = Doc::default();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| {
                    Error::Usage(format!(
                        "line {}: malformed section header '{line}'",
                        lineno + 1
                    ))
                })?;
                let name = name.trim();
                if !valid_name(name) {
                    return Err(Error::Usage(format!(
                        "line {}: bad section name '[{name}]' (lowercase [a-z0-9_] only)",
                        lineno + 1
                    )));
                }
                doc.sections.entry(name.to_string()).or_default();
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Usage(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim();
            let value = value.trim();
            if !valid_name(key) {
                return Err(Error::Usage(format!(
                    "line {}: bad key name '{key}' (lowercase [a-z0-9_] only)",
                    lineno + 1
                )));
            }
            let sec = section.clone().ok_or_else(|| {
                Error::Usage(format!(
                    "line {}: key '{key}' appears before any [section] header",
                    lineno + 1
                ))
            })?;
            let entry = doc.sections.get_mut(&sec).expect("section exists");
            if entry.contains_key(key) {
                return Err(Error::Usage(format!(
                    "line {}: duplicate key '[{sec}] {key}'",
                    lineno + 1
                )));
            }
            entry.insert(key.to_string(), value.to_string());
        }
        Ok(doc)
    }

    fn allow_section(&mut self, sec: &str) {
        self.allowed_sections.insert(sec.to_string());
    }

    fn was_provided(&self, sec: &str, key: &str) -> bool {
        self.sections
            .get(sec)
            .map(|m| m.contains_key(key))
            .unwrap_or(false)
    }

    fn get_str(&mut self, sec: &str, key: &str) -> Option<&str> {
        let v = self.sections.get(sec).and_then(|m| m.get(key));
        if v.is_some() {
            self.consumed.insert((sec.to_string(), key.to_string()));
        }
        self.sections.get(sec).and_then(|m| m.get(key)).map(|s| s.as_str())
    }

    fn req_str(&mut self, sec: &str, key: &str) -> Result<String> {
        self.get_str(sec, key)
            .map(|s| s.to_string())
            .ok_or_else(|| Error::Usage(format!("missing required key '[{sec}] {key}'")))
    }

    fn get_f64(&mut self, sec: &str, key: &str, default: f64) -> Result<f64> {
        match self.get_str(sec, key) {
            None => Ok(default),
            Some(v) => v.parse::<f64>().map_err(|_| {
                Error::Config(format!(
                    "bad value for '[{sec}] {key}': expected a real number, got '{v}'"
                ))
            }),
        }
    }

    fn req_f64(&mut self, sec: &str, key: &str) -> Result<f64> {
        let v = self.req_str(sec, key)?;
        v.parse::<f64>().map_err(|_| {
            Error::Config(format!(
                "bad value for '[{sec}] {key}': expected a real number, got '{v}'"
            ))
        })
    }

    fn get_usize(&mut self, sec: &str, key: &str, default: usize) -> Result<usize> {
        match self.get_str(sec, key) {
            None => Ok(default),
            Some(v) => v.parse::<usize>().map_err(|_| {
                Error::Config(format!(
                    "bad value for '[{sec}] {key}': expected a nonnegative integer, got '{v}'"
                ))
            }),
        }
    }

    fn req_usize(&mut self, sec: &str, key: &str) -> Result<usize> {
        let v = self.req_str(sec, key)?;
        v.parse::<usize>().map_err(|_| {
            Error::Config(format!(
                "bad value for '[{sec}] {key}': expected a nonnegative integer, got '{v}'"
            ))
        })
    }

    fn get_opt_u64(&mut self, sec: &str, key: &str) -> Result<Option<u64>> {
        match self.get_str(sec, key) {
            None => Ok(None),
            Some(v) => v.parse::<u64>().map(Some).map_err(|_| {
                Error::Config(format!(
                    "bad value for '[{sec}] {key}': expected an unsigned integer, got '{v}'"
                ))
            }),
        }
    }

    fn get_bool(&mut self, sec: &str, key: &str, default: bool) -> Result<bool> {
        match self.get_str(sec, key) {
            None => Ok(default),
            Some("true") => Ok(true),
            Some("false") => Ok(false),
            Some(v) => Err(Error::Config(format!(
                "bad value for '[{sec}] {key}': expected true or false, got '{v}'"
            ))),
        }
    }

    fn parse_list(sec: &str, key: &str, v: &str) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for tok in v.split(',') {
            let tok = tok.trim();
            if tok.is_empty() {
                continue;
            }
            out.push(tok.parse::<f64>().map_err(|_| {
                Error::Config(format!(
                    "bad value for '[{sec}] {key}': expected comma-separated reals, got '{tok}'"
                ))
            })?);
        }
        if out.is_empty() {
            return Err(Error::Config(format!(
                "bad value for '[{sec}] {key}': the list is empty"
            )));
        }
        Ok(out)
    }

    fn get_opt_list_f64(&mut self, sec: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get_str(sec, key) {
            None => Ok(None),
            Some(v) => {
                let v = v.to_string();
                Doc::parse_list(sec, key, &v).map(Some)
            }
        }
    }

    fn req_list_f64(&mut self, sec: &str, key: &str) -> Result<Vec<f64>> {
        let v = self.req_str(sec, key)?;
        Doc::parse_list(sec, key, &v)
    }

    /// Reject unknown sections and unconsumed keys.
    fn finish(&self) -> Result<()> {
        for (sec, keys) in &self.sections {
            if !self.allowed_sections.contains(sec) {
                return Err(Error::Usage(format!(
                    "unknown section '[{sec}]' for this task"
                )));
            }
            for key in keys.keys() {
                if !self.consumed.contains(&(sec.clone(), key.clone())) {
                    return Err(Error::Usage(format!("unknown key '[{sec}] {key}'")));
                }
            }
        }
        Ok(())
    }

    /// The provided file as a canonical JSON object (sections, then keys,
    /// both in sorted order; values as written).
    fn echo_value(&self) -> serde_json::Value {
        let mut root = serde_json::Map::new();
        let mut provided = serde_json::Map::new();
        for (sec, keys) in &self.sections {
            let mut m = serde_json::Map::new();
            for (k, v) in keys {
                m.insert(k.clone(), serde_json::Value::String(v.clone()));
            }
            provided.insert(sec.clone(), serde_json::Value::Object(m));
        }
        root.insert("provided".into(), serde_json::Value::Object(provided));
        serde_json::Value::Object(root)
    }
}
