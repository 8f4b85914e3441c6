//! Experiment configuration: command defaults, named presets, JSON files
//! and flag overrides, resolved in that order into one fully explicit
//! record.
//!
//! The resolved record is serialized into every output file, so a result
//! names the exact ensemble, grids and seed that produced it.  Unknown JSON
//! keys are rejected rather than ignored: a typo must fail loudly, not
//! silently run the default experiment.

use std::path::{Path, PathBuf};

use perclap_core::{BoundaryCondition, IdsPart, RestrictionScheme, Topology};
use serde::{Deserialize, Serialize};

/// Which result files a command writes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    #[default]
    Both,
}

/// The subcommand a configuration is resolved for; only the starting
/// defaults differ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CommandKind {
    Ids,
    Walk,
    Spectrum,
    Mechanism,
}

/// One fully resolved experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    #[serde(rename = "L")]
    pub l: usize,
    pub topology: Topology,
    /// Probability that an edge is open.
    pub p: f64,
    pub bc: BoundaryCondition,
    pub scheme: RestrictionScheme,
    /// Spectral part the ids command reports: full, percolating or finite.
    pub part: IdsPart,
    pub energy_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    /// Configurations per ensemble.
    pub samples: usize,
    /// Walks per configuration (walk command).
    pub walks: usize,
    pub master_seed: u64,
    /// Energy window for the van Hove fit; absent skips the fit.
    pub fit_window: Option<[f64; 2]>,
    /// Time window for the heat-decay fit; absent means the whole grid.
    pub t_window: Option<[f64; 2]>,
    /// Output base path; commands append .csv / .json.
    pub output_path: Option<PathBuf>,
    pub format: OutputFormat,
}

/// Partial configuration: whatever a preset, a JSON file or command-line
/// flags choose to set.  Missing fields leave the current value alone.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigPatch {
    pub d: Option<usize>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
    pub topology: Option<Topology>,
    pub p: Option<f64>,
    pub bc: Option<BoundaryCondition>,
    pub scheme: Option<RestrictionScheme>,
    pub part: Option<IdsPart>,
    pub energy_grid: Option<Vec<f64>>,
    pub t_grid: Option<Vec<f64>>,
    pub samples: Option<usize>,
    pub walks: Option<usize>,
    pub master_seed: Option<u64>,
    pub fit_window: Option<[f64; 2]>,
    pub t_window: Option<[f64; 2]>,
    pub output_path: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

pub const PRESET_NAMES: [&str; 4] = [
    "subcritical-d2",
    "supercritical-d2",
    "supercritical-d3",
    "fullLattice-d2",
];

/// Named parameter sets for the standard experiments.
pub fn preset(name: &str) -> Result<ConfigPatch, String> {
    let mut q = ConfigPatch::default();
    q.topology = Some(Topology::Periodic);
    match name {
        "subcritical-d2" => {
            q.d = Some(2);
            q.l = Some(64);
            q.p = Some(0.3);
        }
        "supercritical-d2" => {
            q.d = Some(2);
            q.l = Some(128);
            q.p = Some(0.7);
            q.fit_window = Some([0.02, 0.2]);
            q.t_window = Some([8.0, 64.0]);
        }
        "supercritical-d3" => {
            q.d = Some(3);
            q.l = Some(16);
            q.p = Some(0.35);
            q.fit_window = Some([0.05, 0.5]);
        }
        "fullLattice-d2" => {
            q.d = Some(2);
            q.l = Some(64);
            q.p = Some(1.0);
        }
        _ => {
            return Err(format!(
                "unknown preset {name:?}; available: {}",
                PRESET_NAMES.join(", ")
            ))
        }
    }
    Ok(q)
}

/// 41 evenly spaced energies covering the whole spectral interval [0, 4d].
pub fn default_energy_grid(d: usize) -> Vec<f64> {
    let top = (4 * d) as f64;
    (0..=40).map(|k| top * k as f64 / 40.0).collect()
}

/// 13 log-spaced times on [1, 64].
pub fn default_t_grid() -> Vec<f64> {
    (0..13).map(|k| 64f64.powf(k as f64 / 12.0)).collect()
}

/// Master-seed fallback when neither flag, file nor preset provides one.
pub fn env_seed() -> Result<u64, String> {
    match std::env::var("PERCLAP_SEED") {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| format!("PERCLAP_SEED must be an unsigned integer, got {s:?}")),
        Err(std::env::VarError::NotPresent) => Ok(0),
        Err(e) => Err(format!("PERCLAP_SEED: {e}")),
    }
}

fn defaults(kind: CommandKind) -> Result<ExperimentConfig, String> {
    let samples = match kind {
        CommandKind::Ids | CommandKind::Walk => 10,
        CommandKind::Spectrum => 1,
        // Mechanism checks are per-seed cheap; rare-event frequencies need
        // the larger default to be non-vacuous.
        CommandKind::Mechanism => 2000,
    };
    Ok(ExperimentConfig {
        d: 2,
        l: 32,
        topology: Topology::Periodic,
        p: 0.5,
        bc: BoundaryCondition::Neumann,
        scheme: RestrictionScheme::GraphRestriction,
        part: IdsPart::Full,
        energy_grid: Vec::new(),
        t_grid: Vec::new(),
        samples,
        walks: 20_000,
        master_seed: env_seed()?,
        fit_window: None,
        t_window: None,
        output_path: None,
        format: OutputFormat::Both,
    })
}

/// Resolve defaults, then apply each patch in order (later wins).
pub fn resolve(kind: CommandKind, patches: &[ConfigPatch]) -> Result<ExperimentConfig, String> {
    let mut cfg = defaults(kind)?;
    for q in patches {
        cfg.apply(q);
    }
    cfg.finalize()
}

/// Read a partial configuration from a JSON file.
pub fn load_patch(path: &Path) -> Result<ConfigPatch, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("config {}: {e}", path.display()))
}

/// Parse one keyword flag value through the same names serde accepts, so
/// `--bc pseudo_dirichlet` and the JSON field agree by construction.
pub fn parse_keyword<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unknown {what} {s:?}"))
}

impl ExperimentConfig {
    fn apply(&mut self, q: &ConfigPatch) {
        macro_rules! set {
            ($($f:ident),*) => {
                $( if let Some(v) = &q.$f { self.$f = v.clone(); } )*
            };
        }
        set!(d, l, topology, p, bc, scheme, part, energy_grid, t_grid, samples, walks, master_seed, format);
        if q.fit_window.is_some() {
            self.fit_window = q.fit_window;
        }
        if q.t_window.is_some() {
            self.t_window = q.t_window;
        }
        if q.output_path.is_some() {
            self.output_path = q.output_path.clone();
        }
    }

    fn finalize(mut self) -> Result<Self, String> {
        if self.energy_grid.is_empty() {
            self.energy_grid = default_energy_grid(self.d);
        }
        if self.t_grid.is_empty() {
            self.t_grid = default_t_grid();
        }
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), String> {
        if self.d == 0 {
            return Err("d must be at least 1".into());
        }
        if self.l < 2 {
            return Err("L must be at least 2".into());
        }
        if !self.p.is_finite() || !(0.0..=1.0).contains(&self.p) {
            return Err(format!("p must lie in [0, 1], got {}", self.p));
        }
        if self.samples == 0 {
            return Err("samples must be positive".into());
        }
        if self.walks == 0 {
            return Err("walks must be positive".into());
        }
        check_grid("energy_grid", &self.energy_grid, 0.0)?;
        check_grid("t_grid", &self.t_grid, 0.0)?;
        check_window("fit_window", self.fit_window)?;
        check_window("t_window", self.t_window)?;
        Ok(())
    }
}

fn check_grid(name: &str, grid: &[f64], min: f64) -> Result<(), String> {
    if grid.is_empty() {
        return Err(format!("{name} must not be empty"));
    }
    if grid.iter().any(|x| !x.is_finite() || *x < min) {
        return Err(format!("{name} entries must be finite and at least {min}"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("{name} must be strictly increasing"));
    }
    Ok(())
}

fn check_window(name: &str, window: Option<[f64; 2]>) -> Result<(), String> {
    if let Some([lo, hi]) = window {
        if !lo.is_finite() || !hi.is_finite() || lo <= 0.0 || lo >= hi {
            return Err(format!("{name} needs 0 < lo < hi, got [{lo}, {hi}]"));
        }
    }
    Ok(())
}
