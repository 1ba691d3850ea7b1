//! Parameter sweeps over a rectangular `(μ, U)` grid, with per-cell failure
//! isolation, resumable per-cell output, and plain-text exports.
//!
//! Cells are evaluated on a rayon pool, one cell per worker; linear algebra
//! inside a cell is sequential. Each finished cell is written to its own JSON
//! file under `cells/`, stamped with the configuration hash, so an
//! interrupted sweep resumes where it stopped. File formats are documented in
//! `docs/formats.md`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::doublon::{
    band_deviation, build_effective_hamiltonian, compare_band_selections, doublon_weight, EnergyShift, DEFAULT_W_MIN,
};
use crate::dynamics::{initial_doublon_state, jump_forecast, log_time_grid, propagate, EvolutionTrace, JumpForecast};
use crate::entanglement::{averaged_ee, ee_trace, Bipartition, EeDecomposition, LogBase};
use crate::error::{invalid, Error, Result};
use crate::localization::{summarize, LocalizationSummary, Phase, DEFAULT_TAU_LOC};
use crate::model::{build_hamiltonian, FockBasis, ModelParams};
use crate::spectral::{eig, eigenvalues, eigenvalues_of, pt_diagnostics, PtDiagnostics, SpectralDecomposition, DEFAULT_EPSILON_IM};
use crate::topology::{winding_pair, WindingMethod, WindingOptions, WindingResult, DEFAULT_BASE_OFFSET, DEFAULT_N_THETA};
use crate::C64;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding the worker count.
pub const WORKERS_ENV: &str = "TWOBOSON_WORKERS";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisRange {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl AxisRange {
    pub fn single(value: f64) -> Self {
        Self { min: value, max: value, steps: 1 }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.steps < 1 || !(self.min <= self.max) || !self.min.is_finite() || !self.max.is_finite() {
            return Err(invalid(format!("{name} range needs steps ≥ 1 and finite min ≤ max, got {self:?}")));
        }
        if self.steps == 1 && self.min != self.max {
            return Err(invalid(format!("{name} range with one step needs min = max")));
        }
        Ok(())
    }

    /// Evenly spaced values including both ends.
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.steps - 1) as f64;
        (0..self.steps).map(|k| if k + 1 == self.steps { self.max } else { self.min + h * k as f64 }).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Diagnostic {
    Spectrum,
    Pt,
    Localization,
    Winding,
    Dynamics,
    Entanglement,
    Doublon,
}

impl Diagnostic {
    fn needs_vectors(self) -> bool {
        !matches!(self, Diagnostic::Pt)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGridSpec {
    pub t_min: f64,
    pub t_max: f64,
    pub per_decade: usize,
}

impl Default for TimeGridSpec {
    fn default() -> Self {
        Self { t_min: 0.1, t_max: 1e4, per_decade: 64 }
    }
}

impl TimeGridSpec {
    pub fn times(&self) -> Result<Vec<f64>> {
        log_time_grid(self.t_min, self.t_max, self.per_decade)
    }
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON_IM
}
fn default_tau() -> f64 {
    DEFAULT_TAU_LOC
}
fn default_n_theta() -> usize {
    DEFAULT_N_THETA
}
fn default_offset() -> f64 {
    DEFAULT_BASE_OFFSET
}
fn default_w_min() -> f64 {
    DEFAULT_W_MIN
}
fn default_k() -> usize {
    4
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub base_params: ModelParams,
    pub mu_range: AxisRange,
    pub u_range: AxisRange,
    pub diagnostics: BTreeSet<Diagnostic>,
    /// Replace `α` by its Fibonacci approximant for `L`.
    #[serde(default)]
    pub rational_alpha: bool,
    #[serde(default = "default_epsilon")]
    pub epsilon_im: f64,
    #[serde(default = "default_tau")]
    pub tau_loc: f64,
    #[serde(default = "default_n_theta")]
    pub n_theta: usize,
    /// Use the pencil route instead of the sampled determinant phase.
    #[serde(default)]
    pub pencil_winding: bool,
    #[serde(default = "default_offset")]
    pub base_offset: f64,
    #[serde(default)]
    pub time_grid: TimeGridSpec,
    #[serde(default = "default_k")]
    pub forecast_states: usize,
    #[serde(default = "default_w_min")]
    pub w_min: f64,
    #[serde(default)]
    pub energy_shift: EnergyShift,
    #[serde(default)]
    pub log_base: LogBase,
    pub output_dir: PathBuf,
    /// Worker count; `0` uses the environment override or all cores.
    #[serde(default)]
    pub parallelism: usize,
}

impl SweepConfig {
    /// Desk-scale defaults: `L = 34`, PT and localization diagnostics.
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Self {
            base_params: ModelParams::new(34),
            mu_range: AxisRange { min: 0.0, max: 2.0, steps: 21 },
            u_range: AxisRange { min: 0.0, max: 2.0, steps: 11 },
            diagnostics: [Diagnostic::Pt, Diagnostic::Localization].into_iter().collect(),
            rational_alpha: false,
            epsilon_im: DEFAULT_EPSILON_IM,
            tau_loc: DEFAULT_TAU_LOC,
            n_theta: DEFAULT_N_THETA,
            pencil_winding: false,
            base_offset: DEFAULT_BASE_OFFSET,
            time_grid: TimeGridSpec::default(),
            forecast_states: 4,
            w_min: DEFAULT_W_MIN,
            energy_shift: EnergyShift::default(),
            log_base: LogBase::default(),
            output_dir: output_dir.into(),
            parallelism: 0,
        }
    }

    /// Reads TOML (`.toml`) or JSON (anything else).
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text, path.extension().and_then(|e| e.to_str()) == Some("toml"))
    }

    pub fn parse(text: &str, toml_format: bool) -> Result<Self> {
        if toml_format {
            toml::from_str(text).map_err(|e| Error::Serde(e.to_string()))
        } else {
            serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base_params.validate()?;
        self.mu_range.validate("mu")?;
        self.u_range.validate("U")?;
        if self.diagnostics.is_empty() {
            return Err(invalid("no diagnostics requested"));
        }
        if !(self.epsilon_im > 0.0) {
            return Err(invalid("epsilon_im must be positive"));
        }
        if !(self.tau_loc > 0.0 && self.tau_loc < 1.0) {
            return Err(invalid("tau_loc must lie in (0, 1)"));
        }
        if self.n_theta < 64 {
            return Err(invalid("n_theta must be at least 64"));
        }
        if !(self.w_min > 0.0 && self.w_min < 1.0) {
            return Err(invalid("w_min must lie in (0, 1)"));
        }
        if self.forecast_states < 2 {
            return Err(invalid("forecast_states must be at least 2"));
        }
        self.time_grid.times()?;
        Ok(())
    }

    /// Parameters of cell `(μ, U)`.
    pub fn params_at(&self, mu: f64, u: f64) -> ModelParams {
        let p = self.base_params.with_mu(mu).with_u(u);
        if self.rational_alpha {
            p.with_rational_alpha()
        } else {
            p
        }
    }

    /// SHA-256 of the canonical JSON of every result-affecting field; the
    /// output directory and worker count are excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        canonical.parallelism = 0;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        let mut h = Sha256::new();
        h.update(SOFTWARE_VERSION.as_bytes());
        h.update(json.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn workers(&self) -> usize {
        if self.parallelism > 0 {
            return self.parallelism;
        }
        std::env::var(WORKERS_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .filter(|&n: &usize| n > 0)
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationAggregates {
    pub ipr_max: f64,
    pub ipr_min: f64,
    pub ipr_ave: f64,
    pub npr_ave: f64,
    pub zeta: f64,
    pub phase: Phase,
}

impl From<&LocalizationSummary> for LocalizationAggregates {
    fn from(s: &LocalizationSummary) -> Self {
        Self { ipr_max: s.ipr_max, ipr_min: s.ipr_min, ipr_ave: s.ipr_ave, npr_ave: s.npr_ave, zeta: s.zeta, phase: s.phase }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingRecord {
    pub w1: WindingResult,
    pub w2: WindingResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRecord {
    pub forecast: JumpForecast,
    /// Peak site of the density at the last time.
    pub final_peak_site: usize,
    pub final_log_norm: f64,
    pub trace: EvolutionTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntanglementRecord {
    pub window: (f64, f64),
    pub s_num_bar: f64,
    pub s_conf_bar: f64,
    pub series: Vec<EeDecomposition>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublonRecord {
    pub band_size: usize,
    pub min_weight: f64,
    pub selections_agree: bool,
    /// Distance between the band and the effective spectrum, when `U ≠ 0`.
    pub effective_deviation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub i_u: usize,
    pub i_mu: usize,
    pub mu: f64,
    #[serde(rename = "U")]
    pub u: f64,
    /// `None` on success, otherwise the failure message.
    pub error: Option<String>,
    pub wall_time_s: f64,
    pub config_hash: String,
    pub spectrum: Option<Vec<(f64, f64, Option<f64>)>>,
    pub pt: Option<PtDiagnostics>,
    pub localization: Option<LocalizationAggregates>,
    pub winding: Option<WindingRecord>,
    pub dynamics: Option<DynamicsRecord>,
    pub entanglement: Option<EntanglementRecord>,
    pub doublon: Option<DoublonRecord>,
}

impl CellRecord {
    /// A record with no diagnostics filled in.
    pub fn empty(i_u: usize, i_mu: usize, mu: f64, u: f64, hash: &str) -> Self {
        Self {
            i_u,
            i_mu,
            mu,
            u,
            error: None,
            wall_time_s: 0.0,
            config_hash: hash.to_string(),
            spectrum: None,
            pt: None,
            localization: None,
            winding: None,
            dynamics: None,
            entanglement: None,
            doublon: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Computes the diagnostics of one grid cell. Implementations must be pure;
/// a returned error or a panic marks only this cell as failed.
pub trait CellEvaluator: Sync {
    fn evaluate(&self, config: &SweepConfig, params: &ModelParams, record: &mut CellRecord) -> Result<()>;
}

/// The evaluator used by [`run_sweep`].
pub struct PhysicsEvaluator;

impl CellEvaluator for PhysicsEvaluator {
    fn evaluate(&self, config: &SweepConfig, params: &ModelParams, record: &mut CellRecord) -> Result<()> {
        let wanted = &config.diagnostics;
        let basis = FockBasis::new(params.l)?;
        let h = build_hamiltonian(params, &basis)?;
        if !wanted.iter().any(|d| d.needs_vectors()) {
            let values = eigenvalues(&h)?;
            record.pt = Some(pt_diagnostics(&values, config.epsilon_im)?);
            return Ok(());
        }
        let spec = eig(&h)?;
        let needs_ipr = wanted.contains(&Diagnostic::Localization)
            || wanted.contains(&Diagnostic::Winding)
            || wanted.contains(&Diagnostic::Spectrum);
        let summary = if needs_ipr { Some(summarize(&spec, config.tau_loc)?) } else { None };
        if wanted.contains(&Diagnostic::Pt) {
            record.pt = Some(pt_diagnostics(&spec.eigenvalues, config.epsilon_im)?);
        }
        if wanted.contains(&Diagnostic::Spectrum) {
            let s = summary.as_ref().expect("computed above");
            record.spectrum =
                Some(spec.eigenvalues.iter().zip(&s.ipr_per_state).map(|(e, &ipr)| (e.re, e.im, Some(ipr))).collect());
        }
        if wanted.contains(&Diagnostic::Localization) {
            record.localization = summary.as_ref().map(LocalizationAggregates::from);
        }
        if wanted.contains(&Diagnostic::Winding) {
            let method = if config.pencil_winding {
                WindingMethod::Pencil
            } else {
                WindingMethod::LogDet { n_theta: config.n_theta }
            };
            let options = WindingOptions { method, base_offset: config.base_offset };
            let (w1, w2) = winding_pair(params, &spec, summary.as_ref().expect("computed above"), options)?;
            record.winding = Some(WindingRecord { w1, w2 });
        }
        if wanted.contains(&Diagnostic::Dynamics) || wanted.contains(&Diagnostic::Entanglement) {
            evaluate_dynamics(config, &basis, &spec, record)?;
        }
        if wanted.contains(&Diagnostic::Doublon) {
            record.doublon = Some(evaluate_doublon(config, params, &basis, &spec)?);
        }
        Ok(())
    }
}

fn evaluate_dynamics(
    config: &SweepConfig,
    basis: &FockBasis,
    spec: &SpectralDecomposition,
    record: &mut CellRecord,
) -> Result<()> {
    let psi0 = initial_doublon_state(basis);
    let times = config.time_grid.times()?;
    if config.diagnostics.contains(&Diagnostic::Dynamics) {
        let trace = propagate(basis, spec, &psi0, &times, false)?;
        let last = trace.densities.last().expect("non-empty grid");
        let final_peak_site = (0..last.len()).max_by(|&a, &b| last[a].total_cmp(&last[b])).unwrap() + 1;
        record.dynamics = Some(DynamicsRecord {
            forecast: jump_forecast(basis, spec, &psi0, config.forecast_states.min(spec.dim()))?,
            final_peak_site,
            final_log_norm: *trace.log_norm.last().unwrap(),
            trace,
        });
    }
    if config.diagnostics.contains(&Diagnostic::Entanglement) {
        let cut = Bipartition::half_chain(basis.sites());
        let trace = ee_trace(basis, spec, &psi0, &times, &cut, config.log_base)?;
        let window = (config.time_grid.t_max / 10.0, config.time_grid.t_max);
        let (s_num_bar, s_conf_bar) = averaged_ee(&trace, window.0, window.1)?;
        record.entanglement = Some(EntanglementRecord { window, s_num_bar, s_conf_bar, series: trace });
    }
    Ok(())
}

fn evaluate_doublon(
    config: &SweepConfig,
    params: &ModelParams,
    basis: &FockBasis,
    spec: &SpectralDecomposition,
) -> Result<DoublonRecord> {
    let selection = compare_band_selections(spec, basis, config.w_min)?;
    let min_weight = selection
        .by_weight
        .iter()
        .map(|&j| doublon_weight(&spec.vector(j), basis))
        .fold(f64::INFINITY, f64::min);
    let effective_deviation = if params.u != 0.0 {
        let h_eff = build_effective_hamiltonian(params, config.energy_shift)?;
        let band: Vec<C64> = selection.by_weight.iter().map(|&j| spec.eigenvalues[j]).collect();
        Some(band_deviation(&band, &eigenvalues_of(&h_eff.entries)?))
    } else {
        None
    };
    Ok(DoublonRecord {
        band_size: selection.by_weight.len(),
        min_weight: if min_weight.is_finite() { min_weight } else { 0.0 },
        selections_agree: selection.agree(),
        effective_deviation,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMetadata {
    pub software_version: String,
    pub config_hash: String,
    pub n_cells: usize,
    pub n_failed: usize,
    pub n_resumed: usize,
    pub config: SweepConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub mu_values: Vec<f64>,
    pub u_values: Vec<f64>,
    /// Row-major: all `μ` for the first `U`, then the next `U`.
    pub cells: Vec<CellRecord>,
    pub metadata: GridMetadata,
}

impl PhaseGrid {
    pub fn cell(&self, i_u: usize, i_mu: usize) -> &CellRecord {
        &self.cells[i_u * self.mu_values.len() + i_mu]
    }

    pub fn row(&self, i_u: usize) -> &[CellRecord] {
        let n = self.mu_values.len();
        &self.cells[i_u * n..(i_u + 1) * n]
    }
}

fn cell_path(dir: &Path, i_u: usize, i_mu: usize) -> PathBuf {
    dir.join("cells").join(format!("cell_u{i_u:04}_mu{i_mu:04}.json"))
}

fn check_output_dir(config: &SweepConfig, hash: &str) -> Result<()> {
    fs::create_dir_all(config.output_dir.join("cells"))?;
    let probe = config.output_dir.join(".write_probe");
    fs::write(&probe, b"")?;
    fs::remove_file(&probe)?;
    let meta = config.output_dir.join("grid.json");
    if meta.exists() {
        let text = fs::read_to_string(&meta)?;
        let previous: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
        let previous_hash = previous["metadata"]["config_hash"].as_str().unwrap_or_default();
        if previous_hash != hash {
            return Err(invalid(format!(
                "output directory {} holds results for config hash {previous_hash}; refusing to mix with {hash}",
                config.output_dir.display()
            )));
        }
    }
    Ok(())
}

fn load_finished(path: &Path, hash: &str) -> Option<CellRecord> {
    let text = fs::read_to_string(path).ok()?;
    let record: CellRecord = serde_json::from_str(&text).ok()?;
    (record.config_hash == hash && !record.failed()).then_some(record)
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic with non-string payload".to_string()
    }
}

/// Evaluates the single point `(base_params.mu, base_params.u)` without
/// touching the output directory. Failures are returned, not recorded.
pub fn evaluate_point(config: &SweepConfig) -> Result<CellRecord> {
    config.validate()?;
    let (mu, u) = (config.base_params.mu, config.base_params.u);
    let mut record = CellRecord::empty(0, 0, mu, u, &config.hash());
    let start = Instant::now();
    PhysicsEvaluator.evaluate(config, &config.params_at(mu, u), &mut record)?;
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

/// Runs the sweep with the physics evaluator.
pub fn run_sweep(config: &SweepConfig) -> Result<PhaseGrid> {
    run_sweep_with(config, &PhysicsEvaluator)
}

/// Runs the sweep with a custom evaluator.
pub fn run_sweep_with(config: &SweepConfig, evaluator: &dyn CellEvaluator) -> Result<PhaseGrid> {
    config.validate()?;
    let hash = config.hash();
    check_output_dir(config, &hash)?;
    let mu_values = config.mu_range.values();
    let u_values = config.u_range.values();
    let jobs: Vec<(usize, usize)> =
        (0..u_values.len()).flat_map(|i_u| (0..mu_values.len()).map(move |i_mu| (i_u, i_mu))).collect();

    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers())
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<(CellRecord, bool)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i_u, i_mu)| {
                let path = cell_path(&config.output_dir, i_u, i_mu);
                if let Some(done) = load_finished(&path, &hash) {
                    return Ok((done, true));
                }
                let (mu, u) = (mu_values[i_mu], u_values[i_u]);
                let mut record = CellRecord::empty(i_u, i_mu, mu, u, &hash);
                let params = config.params_at(mu, u);
                let start = Instant::now();
                let outcome = catch_unwind(AssertUnwindSafe(|| evaluator.evaluate(config, &params, &mut record)));
                record.wall_time_s = start.elapsed().as_secs_f64();
                match outcome {
                    Ok(Ok(())) => {}
                    Ok(Err(e)) => record.error = Some(e.to_string()),
                    Err(payload) => record.error = Some(format!("panic: {}", panic_message(payload))),
                }
                if record.failed() {
                    let keep = CellRecord { error: record.error.clone(), wall_time_s: record.wall_time_s, ..CellRecord::empty(i_u, i_mu, mu, u, &hash) };
                    record = keep;
                }
                let json = serde_json::to_string_pretty(&record).map_err(|e| Error::Serde(e.to_string()))?;
                fs::write(&path, json)?;
                Ok((record, false))
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let n_resumed = results.iter().filter(|r| r.1).count();
    let cells: Vec<CellRecord> = results.into_iter().map(|r| r.0).collect();
    let metadata = GridMetadata {
        software_version: SOFTWARE_VERSION.to_string(),
        config_hash: hash,
        n_cells: cells.len(),
        n_failed: cells.iter().filter(|c| c.failed()).count(),
        n_resumed,
        config: config.clone(),
    };
    let grid = PhaseGrid { mu_values, u_values, cells, metadata };
    write_grid(&grid, &config.output_dir)?;
    Ok(grid)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// The two comment lines and the column line that start every CSV file.
pub fn csv_header(hash: &str, columns: &str) -> String {
    format!("# config_hash={hash}\n# software_version={SOFTWARE_VERSION}\n{columns}\n")
}

/// Per-cell summary table. Empty fields mark diagnostics that were not
/// requested or cells that failed.
pub fn grid_csv(grid: &PhaseGrid) -> String {
    let mut out = csv_header(
        &grid.metadata.config_hash,
        "mu,U,status,max_abs_imag,max_abs_imag_rescaled,rho_im,ipr_max,ipr_min,ipr_ave,npr_ave,zeta,phase,w1,w2,raw_phase1,raw_phase2,E_B1,E_B2,s_num_bar,s_conf_bar,doublon_band_size,doublon_deviation",
    );
    let im_scale = grid.cells.iter().filter_map(|c| c.pt.map(|p| p.max_abs_imag)).fold(0.0, f64::max);
    for c in &grid.cells {
        let status = if c.failed() { "failed" } else { "ok" };
        let pt = c.pt;
        let loc = c.localization.as_ref();
        let w = c.winding.as_ref();
        let ee = c.entanglement.as_ref();
        let d = c.doublon.as_ref();
        let rescaled = pt.map(|p| if im_scale > 0.0 { p.max_abs_imag / im_scale } else { 0.0 });
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.mu,
            c.u,
            status,
            opt(pt.map(|p| p.max_abs_imag)),
            opt(rescaled),
            opt(pt.map(|p| p.rho_im)),
            opt(loc.map(|l| l.ipr_max)),
            opt(loc.map(|l| l.ipr_min)),
            opt(loc.map(|l| l.ipr_ave)),
            opt(loc.map(|l| l.npr_ave)),
            opt(loc.map(|l| l.zeta)),
            loc.map(|l| l.phase.as_str()).unwrap_or_default(),
            w.map(|w| w.w1.value.to_string()).unwrap_or_default(),
            w.map(|w| w.w2.value.to_string()).unwrap_or_default(),
            opt(w.map(|w| w.w1.raw_phase)),
            opt(w.map(|w| w.w2.raw_phase)),
            opt(w.map(|w| w.w1.base_energy.re)),
            opt(w.map(|w| w.w2.base_energy.re)),
            opt(ee.map(|e| e.s_num_bar)),
            opt(ee.map(|e| e.s_conf_bar)),
            d.map(|d| d.band_size.to_string()).unwrap_or_default(),
            opt(d.and_then(|d| d.effective_deviation)),
        );
    }
    out
}

/// `index,re_E,im_E,ipr` for one cell.
pub fn spectrum_csv(hash: &str, rows: &[(f64, f64, Option<f64>)]) -> String {
    let mut out = csv_header(hash, "index,re_E,im_E,ipr");
    for (i, (re, im, ipr)) in rows.iter().enumerate() {
        let _ = writeln!(out, "{i},{re},{im},{}", opt(*ipr));
    }
    out
}

/// `U,mu_c` rows; `mu_c` empty where the row never crosses.
pub fn boundary_csv(hash: &str, column: &str, rows: &[(f64, Option<f64>)]) -> String {
    let mut out = csv_header(hash, &format!("U,{column}"));
    for (u, mu_c) in rows {
        let _ = writeln!(out, "{u},{}", opt(*mu_c));
    }
    out
}

/// `t,log_norm,peak_site,n_1,…,n_L`.
pub fn trace_csv(hash: &str, trace: &EvolutionTrace) -> String {
    let l = trace.densities.first().map_or(0, Vec::len);
    let cols: String = (1..=l).map(|s| format!(",n_{s}")).collect();
    let mut out = csv_header(hash, &format!("t,log_norm,peak_site{cols}"));
    for ((t, n), ln) in trace.times.iter().zip(&trace.densities).zip(&trace.log_norm) {
        let peak = (0..n.len()).max_by(|&a, &b| n[a].total_cmp(&n[b]).then(b.cmp(&a))).map_or(0, |s| s + 1);
        let _ = write!(out, "{t},{ln},{peak}");
        for x in n {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

/// `rank,index,peak_site,re_E,im_E,overlap,biorthogonal`.
pub fn forecast_csv(hash: &str, forecast: &JumpForecast) -> String {
    let mut out = csv_header(hash, "rank,index,peak_site,re_E,im_E,overlap,biorthogonal");
    for (r, s) in forecast.ranked_states.iter().enumerate() {
        let _ = writeln!(out, "{r},{},{},{},{},{},{}", s.index, s.peak_site, s.re_e, s.im_e, s.overlap, s.biorthogonal);
    }
    out
}

/// `convention,from_rank,to_rank,from_site,to_site,time`.
pub fn jumps_csv(hash: &str, forecast: &JumpForecast) -> String {
    let mut out = csv_header(hash, "convention,from_rank,to_rank,from_site,to_site,time");
    let site = |r: usize| forecast.ranked_states[r].peak_site;
    for (name, jumps) in [("overlap", &forecast.jumps), ("biorthogonal", &forecast.biorthogonal_jumps)] {
        for j in jumps {
            let _ = writeln!(out, "{name},{},{},{},{},{}", j.from, j.to, site(j.from), site(j.to), j.time);
        }
    }
    out
}

/// `t,p0,p1,p2,s_num,s_conf,s_total`.
pub fn ee_csv(hash: &str, trace: &[EeDecomposition]) -> String {
    let mut out = csv_header(hash, "t,p0,p1,p2,s_num,s_conf,s_total");
    for d in trace {
        let [p0, p1, p2] = d.p_sector;
        let _ = writeln!(out, "{},{p0},{p1},{p2},{},{},{}", d.time, d.s_num, d.s_conf, d.s_total);
    }
    out
}

fn write_grid(grid: &PhaseGrid, dir: &Path) -> Result<()> {
    let hash = &grid.metadata.config_hash;
    fs::write(dir.join("grid.csv"), grid_csv(grid))?;
    if grid.cells.iter().any(|c| c.pt.is_some()) {
        let rows = extract_pt_boundary(grid, grid.metadata.config.epsilon_im);
        fs::write(dir.join("pt_boundary.csv"), boundary_csv(hash, "mu_c", &rows))?;
    }
    if grid.cells.iter().any(|c| c.localization.is_some()) {
        let tau = grid.metadata.config.tau_loc;
        fs::write(
            dir.join("localization_boundaries.csv"),
            boundary_pair_csv(hash, &extract_localization_boundaries(grid, tau)),
        )?;
    }
    for c in &grid.cells {
        let file = |kind: &str| dir.join("cells").join(format!("{kind}_u{:04}_mu{:04}.csv", c.i_u, c.i_mu));
        if let Some(rows) = &c.spectrum {
            fs::write(file("spectrum"), spectrum_csv(hash, rows))?;
        }
        if let Some(d) = &c.dynamics {
            fs::write(file("trace"), trace_csv(hash, &d.trace))?;
            fs::write(file("forecast"), forecast_csv(hash, &d.forecast))?;
            fs::write(file("jumps"), jumps_csv(hash, &d.forecast))?;
        }
        if let Some(e) = &c.entanglement {
            fs::write(file("entropy"), ee_csv(hash, &e.series))?;
        }
    }
    let timings: Vec<f64> = grid.cells.iter().map(|c| c.wall_time_s).collect();
    let meta = serde_json::json!({ "metadata": grid.metadata, "wall_time_s": timings });
    fs::write(dir.join("grid.json"), serde_json::to_string_pretty(&meta).map_err(|e| Error::Serde(e.to_string()))?)?;
    Ok(())
}

fn boundary_pair_csv(hash: &str, rows: &[(f64, Option<f64>, Option<f64>)]) -> String {
    let mut out = csv_header(hash, "U,mu_c1,mu_c2");
    for (u, a, b) in rows {
        let _ = writeln!(out, "{u},{},{}", opt(*a), opt(*b));
    }
    out
}

/// Smallest `x` at which `ys` first exceeds `threshold`, linearly
/// interpolated between the bracketing samples.
pub fn first_crossing(xs: &[f64], ys: &[f64], threshold: f64) -> Option<f64> {
    crate::spectral::pt_threshold(xs, ys, threshold)
}

fn row_crossing(grid: &PhaseGrid, i_u: usize, threshold: f64, value: impl Fn(&CellRecord) -> Option<f64>) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid.row(i_u).iter().filter_map(|c| value(c).map(|y| (c.mu, y))).unzip();
    first_crossing(&xs, &ys, threshold)
}

/// Per `U` row, the smallest `μ` with `|Im E|_max > epsilon_im`.
pub fn extract_pt_boundary(grid: &PhaseGrid, epsilon_im: f64) -> Vec<(f64, Option<f64>)> {
    (0..grid.u_values.len())
        .map(|i_u| (grid.u_values[i_u], row_crossing(grid, i_u, epsilon_im, |c| c.pt.map(|p| p.max_abs_imag))))
        .collect()
}

/// Per `U` row, the first `μ` with `IPR_max > tau` and with `IPR_min > tau`,
/// interpolated in `ln IPR` since the IPRs change by decades across a
/// transition.
pub fn extract_localization_boundaries(grid: &PhaseGrid, tau: f64) -> Vec<(f64, Option<f64>, Option<f64>)> {
    (0..grid.u_values.len())
        .map(|i_u| {
            (
                grid.u_values[i_u],
                row_crossing(grid, i_u, tau.ln(), |c| c.localization.as_ref().map(|l| l.ipr_max.ln())),
                row_crossing(grid, i_u, tau.ln(), |c| c.localization.as_ref().map(|l| l.ipr_min.ln())),
            )
        })
        .collect()
}

/// Named configurations for the published figures and table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2c,
    Fig3,
    Fig4,
    Fig6,
    Fig7,
    TableII,
    Fig10,
}

impl Figure {
    pub const ALL: [Figure; 7] =
        [Figure::Fig2c, Figure::Fig3, Figure::Fig4, Figure::Fig6, Figure::Fig7, Figure::TableII, Figure::Fig10];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig2c => "fig2c",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
            Figure::Fig6 => "fig6",
            Figure::Fig7 => "fig7",
            Figure::TableII => "tableII",
            Figure::Fig10 => "fig10",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(name))
            .ok_or_else(|| invalid(format!("unknown figure id {name}")))
    }
}

/// The pinned sweep for a figure. `desk` shrinks the lattice to `L = 34`
/// (`L = 21` for dynamics) and coarsens the grid so it runs in minutes.
pub fn preset(figure: Figure, desk: bool, output_dir: impl Into<PathBuf>) -> SweepConfig {
    use Diagnostic::*;
    let mut c = SweepConfig::new(output_dir);
    let set = |d: &[Diagnostic]| d.iter().copied().collect::<BTreeSet<_>>();
    let (full_l, desk_l) = match figure {
        Figure::Fig2c | Figure::Fig3 => (144, 34),
        Figure::Fig6 | Figure::Fig7 | Figure::TableII => (89, 21),
        Figure::Fig4 | Figure::Fig10 => (89, 34),
    };
    c.base_params = ModelParams::new(if desk { desk_l } else { full_l });
    let steps = |full: usize, small: usize| if desk { small } else { full };
    match figure {
        Figure::Fig2c => {
            c.mu_range = AxisRange { min: 0.0, max: 2.0, steps: steps(41, 21) };
            c.u_range = AxisRange { min: 0.0, max: 2.0, steps: steps(21, 6) };
            c.diagnostics = set(&[Pt]);
            c.rational_alpha = true;
        }
        Figure::Fig3 => {
            c.mu_range = AxisRange { min: 0.0, max: 2.0, steps: steps(41, 21) };
            c.u_range = AxisRange { min: 0.0, max: 2.0, steps: steps(21, 6) };
            c.diagnostics = set(&[Pt, Localization]);
            c.rational_alpha = true;
        }
        Figure::Fig4 => {
            c.mu_range = AxisRange { min: 0.0, max: 2.0, steps: steps(41, 11) };
            c.u_range = AxisRange { min: 0.0, max: 2.0, steps: steps(21, 3) };
            c.diagnostics = set(&[Pt, Localization, Winding]);
            c.pencil_winding = true;
            c.rational_alpha = true;
        }
        Figure::Fig6 => {
            c.mu_range = AxisRange { min: 0.5, max: 1.5, steps: 3 };
            c.u_range = AxisRange::single(0.8);
            c.diagnostics = set(&[Dynamics]);
        }
        Figure::Fig7 => {
            c.mu_range = AxisRange { min: 0.5, max: 1.5, steps: 3 };
            c.u_range = AxisRange { min: 0.0, max: 0.8, steps: 2 };
            c.diagnostics = set(&[Entanglement, Dynamics]);
        }
        Figure::TableII => {
            c.mu_range = AxisRange::single(1.5);
            c.u_range = AxisRange::single(0.8);
            c.diagnostics = set(&[Dynamics]);
        }
        Figure::Fig10 => {
            c.mu_range = AxisRange { min: 0.0, max: 1.2, steps: steps(25, 13) };
            c.u_range = AxisRange { min: 1.0, max: 20.0, steps: steps(20, 5) };
            c.diagnostics = set(&[Pt]);
            c.rational_alpha = true;
        }
    }
    c
}
