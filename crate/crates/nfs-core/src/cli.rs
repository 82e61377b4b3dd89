//! Config-driven scenarios: `simulate`, `design`, `scan`, `entangle`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angular::{build_level_scheme, HyperfineConfig, LevelScheme, LineFrequency, Projection, FE57_G_EXCITED, FE57_G_GROUND};
use crate::currents::{Frame, Geometry, NuclearConstants};
use crate::error::NfsError;
use crate::photonics::{bell_scan, detector_probabilities, extract_modes, visibility, write_bell_csv, ChshSettings, InterferometerConfig, WindowSpec};
use crate::scattering::{first_order_for_sequence, intensity_series, solve_series, write_intensity_csv, FieldRecord, SampleConfig, SeriesOptions, TimeGrid};
use crate::switching::{
    amplitude_history, design_release_time, four_switch_plan, initial_amplitudes, AmplitudeResiduals, DesignOptions, Polarization, ReleaseCandidate,
    ReleaseTarget, RotationSpec, SwitchSequence, SwitchingEvent,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_CANDIDATE: i32 = 3;
pub const EXIT_NO_PHOTON: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("design failed: {0}")]
    Design(String),
    #[error("{0}")]
    NoPhoton(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Design(_) => EXIT_NO_CANDIDATE,
            CliError::NoPhoton(_) => EXIT_NO_PHOTON,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl From<NfsError> for CliError {
    fn from(e: NfsError) -> Self {
        match e {
            NfsError::Input(m) => CliError::Config(m),
            e @ NfsError::NoCandidate { .. } => CliError::Design(e.to_string()),
            e @ NfsError::EmptyWindows => CliError::NoPhoton(e.to_string()),
            NfsError::Io(e) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

// ---- config schema ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub nuclear: NuclearBlock,
    #[serde(default)]
    pub hyperfine: HyperfineBlock,
    #[serde(default)]
    pub geometry: GeometryBlock,
    pub sample: SampleBlock,
    #[serde(default)]
    pub grid: GridBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub sequence: Option<Vec<EventRecord>>,
    #[serde(default)]
    pub design: Option<DesignBlock>,
    #[serde(default)]
    pub windows: Option<WindowsBlock>,
    #[serde(default)]
    pub interferometer: InterferometerBlock,
    #[serde(default)]
    pub bell: BellBlock,
    #[serde(default)]
    pub scan: Option<ScanBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuclearBlock {
    pub transition_energy_ev: f64,
    pub lifetime_ns: f64,
    pub ic_ratio: f64,
}

impl Default for NuclearBlock {
    fn default() -> Self {
        let c = NuclearConstants::fe57();
        NuclearBlock { transition_energy_ev: c.e0_ev, lifetime_ns: c.tau_s * 1e9, ic_ratio: c.ic_ratio }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideRecord {
    pub m_g: String,
    pub m_e: String,
    pub omega_rad_per_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperfineBlock {
    #[serde(default)]
    pub calibrate_t1_ns: Option<f64>,
    #[serde(default)]
    pub field_tesla: Option<f64>,
    #[serde(default = "default_g_ground")]
    pub g_ground: f64,
    #[serde(default = "default_g_excited")]
    pub g_excited: f64,
    #[serde(default)]
    pub override_frequencies: Option<Vec<OverrideRecord>>,
}

fn default_g_ground() -> f64 {
    FE57_G_GROUND
}
fn default_g_excited() -> f64 {
    FE57_G_EXCITED
}

impl Default for HyperfineBlock {
    fn default() -> Self {
        HyperfineBlock { calibrate_t1_ns: None, field_tesla: None, g_ground: FE57_G_GROUND, g_excited: FE57_G_EXCITED, override_frequencies: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub k_direction: [f64; 3],
    pub polarization: [f64; 3],
    #[serde(default)]
    pub frame_euler_deg: [f64; 3],
}

impl Default for GeometryBlock {
    fn default() -> Self {
        GeometryBlock { k_direction: [0.0, 1.0, 0.0], polarization: [1.0, 0.0, 0.0], frame_euler_deg: [0.0; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub t_start_ns: f64,
    pub t_end_ns: f64,
    pub dt_ns: f64,
}

impl Default for GridBlock {
    fn default() -> Self {
        GridBlock { t_start_ns: 0.0, t_end_ns: 300.0, dt_ns: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverBlock {
    #[serde(default = "default_max_order")]
    pub max_order: usize,
    #[serde(default = "default_tol_rel")]
    pub tol_rel: f64,
    #[serde(default)]
    pub first_order_only: bool,
}

fn default_max_order() -> usize {
    SeriesOptions::default().max_order
}
fn default_tol_rel() -> f64 {
    SeriesOptions::default().tol_rel
}

impl Default for SolverBlock {
    fn default() -> Self {
        SolverBlock { max_order: default_max_order(), tol_rel: default_tol_rel(), first_order_only: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub t_ns: f64,
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub gamma_deg: f64,
}

impl EventRecord {
    pub fn to_event(&self) -> SwitchingEvent {
        SwitchingEvent {
            time: self.t_ns * 1e-9,
            rotation: RotationSpec::new(self.alpha_deg.to_radians(), self.beta_deg.to_radians(), self.gamma_deg.to_radians()),
        }
    }

    pub fn from_event(e: &SwitchingEvent) -> Self {
        EventRecord {
            t_ns: e.time * 1e9,
            alpha_deg: e.rotation.alpha.to_degrees(),
            beta_deg: e.rotation.beta.to_degrees(),
            gamma_deg: e.rotation.gamma.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RotationRecord {
    pub alpha_deg: f64,
    pub beta_deg: f64,
    pub gamma_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignOptionsBlock {
    #[serde(default = "default_scan_step_ns")]
    pub scan_step_ns: f64,
    #[serde(default = "default_time_tol_ns")]
    pub time_tol_ns: f64,
    #[serde(default = "default_accept_residual")]
    pub accept_residual: f64,
    #[serde(default = "default_floor_fraction")]
    pub floor_fraction: f64,
}

fn default_scan_step_ns() -> f64 {
    DesignOptions::default().scan_step * 1e9
}
fn default_time_tol_ns() -> f64 {
    DesignOptions::default().time_tol * 1e9
}
fn default_accept_residual() -> f64 {
    DesignOptions::default().accept_residual
}
fn default_floor_fraction() -> f64 {
    DesignOptions::default().floor_fraction
}
fn default_window_end_ns() -> f64 {
    300.0
}

impl Default for DesignOptionsBlock {
    fn default() -> Self {
        DesignOptionsBlock {
            scan_step_ns: default_scan_step_ns(),
            time_tol_ns: default_time_tol_ns(),
            accept_residual: default_accept_residual(),
            floor_fraction: default_floor_fraction(),
        }
    }
}

impl DesignOptionsBlock {
    fn to_options(self) -> DesignOptions {
        DesignOptions {
            scan_step: self.scan_step_ns * 1e-9,
            time_tol: self.time_tol_ns * 1e-9,
            accept_residual: self.accept_residual,
            floor_fraction: self.floor_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "plan", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignBlock {
    /// Store, release π, store, release `final_polarization`.
    FourSwitch {
        final_polarization: Polarization,
        #[serde(default = "default_window_end_ns")]
        window_end_ns: f64,
        #[serde(default)]
        options: DesignOptionsBlock,
    },
    /// One more switch after the explicit `sequence`.
    Release {
        target: ReleaseTarget,
        rotation: RotationRecord,
        window_ns: [f64; 2],
        #[serde(default)]
        options: DesignOptionsBlock,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowsBlock {
    pub sigma_window_ns: [f64; 2],
    pub pi_window_ns: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerBlock {
    #[serde(default)]
    pub phase_sigma_deg: f64,
    #[serde(default)]
    pub phase_pi_deg: f64,
    #[serde(default = "default_transmittance")]
    pub splitter_transmittance: f64,
}

fn default_transmittance() -> f64 {
    0.5
}

impl Default for InterferometerBlock {
    fn default() -> Self {
        InterferometerBlock { phase_sigma_deg: 0.0, phase_pi_deg: 0.0, splitter_transmittance: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BellBlock {
    pub a_deg: f64,
    pub a_prime_deg: f64,
    pub b_deg: f64,
    pub b_prime_deg: f64,
}

impl Default for BellBlock {
    fn default() -> Self {
        BellBlock { a_deg: 0.0, a_prime_deg: 90.0, b_deg: 45.0, b_prime_deg: 135.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanParameter {
    Xi,
    SwitchTimeNs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanBlock {
    pub parameter: ScanParameter,
    #[serde(default)]
    pub event_index: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub stem: String,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { stem: "run".into() }
    }
}

pub fn parse_config(text: &str) -> CliResult<ScenarioConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

pub fn load_config(path: &Path) -> CliResult<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

// ---- resolved scenario ----

pub struct Scenario {
    pub consts: NuclearConstants,
    pub scheme: LevelScheme,
    pub geometry: Geometry,
    pub sample: SampleConfig,
    pub grid: TimeGrid,
    pub solver: SeriesOptions,
    pub first_order_only: bool,
}

impl ScenarioConfig {
    pub fn resolve(&self) -> CliResult<Scenario> {
        let n = &self.nuclear;
        let consts = NuclearConstants::new(n.transition_energy_ev, n.lifetime_ns * 1e-9, n.ic_ratio)?;
        let h = &self.hyperfine;
        let mut hc = match (h.calibrate_t1_ns, h.field_tesla) {
            (Some(_), Some(_)) => return Err(CliError::Config("hyperfine: give calibrate_t1_ns or field_tesla, not both".into())),
            (Some(t1), None) => HyperfineConfig::calibrated_for_t1(t1 * 1e-9)?,
            (None, Some(b)) => HyperfineConfig { field_tesla: b, g_ground: h.g_ground, g_excited: h.g_excited, override_frequencies: None },
            (None, None) => HyperfineConfig::calibrated(),
        };
        if h.calibrate_t1_ns.is_some() && (h.g_ground != FE57_G_GROUND || h.g_excited != FE57_G_EXCITED) {
            return Err(CliError::Config("hyperfine: calibration uses the 57Fe g-factors; drop g_ground/g_excited or give field_tesla".into()));
        }
        if let Some(list) = &h.override_frequencies {
            let parsed = list
                .iter()
                .map(|r| {
                    Ok(LineFrequency { m_g: Projection::parse(&r.m_g)?, m_e: Projection::parse(&r.m_e)?, omega: r.omega_rad_per_ns * 1e9 })
                })
                .collect::<crate::Result<Vec<_>>>()?;
            hc.override_frequencies = Some(parsed);
        }
        let scheme = build_level_scheme(&hc)?;
        let g = &self.geometry;
        let [a, b, c] = g.frame_euler_deg.map(f64::to_radians);
        let geometry = Geometry::new(g.k_direction, consts.wavenumber(), g.polarization, Frame::from_euler(a, b, c))?;
        let sample = SampleConfig::new(self.sample.xi)?;
        let grid = TimeGrid::new(self.grid.t_start_ns * 1e-9, self.grid.t_end_ns * 1e-9, self.grid.dt_ns * 1e-9)?;
        let solver = SeriesOptions { max_order: self.solver.max_order, tol_rel: self.solver.tol_rel, keep_orders: false };
        if solver.max_order < 1 || !(solver.tol_rel > 0.0) {
            return Err(CliError::Config("solver: max_order >= 1 and tol_rel > 0 required".into()));
        }
        Ok(Scenario { consts, scheme, geometry, sample, grid, solver, first_order_only: self.solver.first_order_only })
    }

    pub fn explicit_sequence(&self) -> CliResult<SwitchSequence> {
        let events = self.sequence.iter().flatten().map(EventRecord::to_event).collect();
        Ok(SwitchSequence::new(events)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub t_ns: f64,
    pub target: Option<ReleaseTarget>,
    pub residual_total: f64,
    pub residual_sigma: f64,
    pub residual_pi: f64,
}

impl ResidualRecord {
    fn new(t: f64, target: Option<ReleaseTarget>, r: &AmplitudeResiduals) -> Self {
        ResidualRecord { t_ns: t * 1e9, target, residual_total: r.total, residual_sigma: r.sigma, residual_pi: r.pi }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignOutput {
    pub sequence: Vec<EventRecord>,
    pub report: Vec<ResidualRecord>,
    pub candidates_ns: Vec<f64>,
}

/// Runs the design request of `cfg`.
pub fn run_design(cfg: &ScenarioConfig, sc: &Scenario) -> CliResult<(SwitchSequence, DesignOutput)> {
    let design = cfg.design.as_ref().ok_or_else(|| CliError::Config("no design block".into()))?;
    let init = initial_amplitudes(&sc.geometry, &sc.scheme, &sc.sample)?;
    match design {
        DesignBlock::FourSwitch { final_polarization, window_end_ns, options } => {
            let plan = four_switch_plan(*final_polarization, &init, window_end_ns * 1e-9, &options.to_options())?;
            let out = DesignOutput {
                sequence: plan.sequence.events().iter().map(EventRecord::from_event).collect(),
                report: plan.report.iter().map(|r| ResidualRecord::new(r.time, Some(r.target), &r.residuals)).collect(),
                candidates_ns: plan.sequence.times().iter().map(|t| t * 1e9).collect(),
            };
            Ok((plan.sequence, out))
        }
        DesignBlock::Release { target, rotation, window_ns, options } => {
            let prior = cfg.explicit_sequence()?;
            let hist = amplitude_history(&init, &prior)?;
            let last = hist.last().expect("non-empty history");
            let rot = RotationSpec::new(rotation.alpha_deg.to_radians(), rotation.beta_deg.to_radians(), rotation.gamma_deg.to_radians());
            let (a, b) = (window_ns[0] * 1e-9, window_ns[1] * 1e-9);
            if !(b > a) {
                return Err(CliError::Config("design.window_ns must be increasing".into()));
            }
            let cands: Vec<ReleaseCandidate> = design_release_time(last, rot, *target, (a, b), &options.to_options());
            let first = cands.first().ok_or_else(|| NfsError::NoCandidate {
                stage: prior.events().len() + 1,
                target: target.name().into(),
                start_ns: window_ns[0],
                end_ns: window_ns[1],
            })?;
            let mut events = prior.events().to_vec();
            events.push(SwitchingEvent { time: first.time, rotation: rot });
            let seq = SwitchSequence::new(events)?;
            let report = switch_report(sc, &seq)?
                .into_iter()
                .enumerate()
                .map(|(i, mut r)| {
                    if i == seq.events().len() - 1 {
                        r.target = Some(*target);
                    }
                    r
                })
                .collect();
            let out = DesignOutput {
                sequence: seq.events().iter().map(EventRecord::from_event).collect(),
                report,
                candidates_ns: cands.iter().map(|c| c.time * 1e9).collect(),
            };
            Ok((seq, out))
        }
    }
}

/// Post-switch first-order residuals for every event of a sequence.
pub fn switch_report(sc: &Scenario, seq: &SwitchSequence) -> CliResult<Vec<ResidualRecord>> {
    let init = initial_amplitudes(&sc.geometry, &sc.scheme, &sc.sample)?;
    let hist = amplitude_history(&init, seq)?;
    Ok(hist.iter().skip(1).map(|s| ResidualRecord::new(s.valid_from, None, &s.residuals())).collect())
}

fn resolve_sequence(cfg: &ScenarioConfig, sc: &Scenario) -> CliResult<SwitchSequence> {
    match (&cfg.design, &cfg.sequence) {
        (Some(DesignBlock::FourSwitch { .. }), Some(_)) => {
            Err(CliError::Config("a four_switch design replaces the sequence; give one or the other".into()))
        }
        (Some(_), _) => Ok(run_design(cfg, sc)?.0),
        (None, _) => cfg.explicit_sequence(),
    }
}

pub fn run_field(sc: &Scenario, seq: &SwitchSequence) -> CliResult<FieldRecord> {
    let rec = if sc.first_order_only {
        first_order_for_sequence(&sc.sample, &sc.geometry, &sc.scheme, seq, &sc.grid, &sc.consts)?
    } else {
        solve_series(&sc.sample, &sc.geometry, &sc.scheme, seq, &sc.grid, &sc.consts, &sc.solver)?
    };
    Ok(rec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub xi: f64,
    pub omega0_rad_per_ns: f64,
    pub omega1_rad_per_ns: f64,
    pub sequence: Vec<EventRecord>,
    pub switch_report: Vec<ResidualRecord>,
    pub truncation_order: usize,
    pub converged: bool,
    pub series_residual: f64,
    pub peak_intensity: f64,
    pub first_minimum_ns: Option<f64>,
}

/// First interior local minimum of the total intensity.
pub fn first_minimum(rec: &FieldRecord) -> Option<f64> {
    let rows = intensity_series(rec);
    (1..rows.len().saturating_sub(1))
        .find(|&i| rows[i].total < rows[i - 1].total && rows[i].total <= rows[i + 1].total)
        .map(|i| rows[i].t)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<PathBuf> {
    let p = dir.join(name);
    fs::write(&p, bytes)?;
    Ok(p)
}

fn json_bytes<T: Serialize>(v: &T) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push(b'\n');
    Ok(s)
}

pub fn cmd_simulate(cfg: &ScenarioConfig, out: &Path) -> CliResult<SimulateSummary> {
    let sc = cfg.resolve()?;
    let seq = resolve_sequence(cfg, &sc)?;
    let rec = run_field(&sc, &seq)?;
    let mut csv = Vec::new();
    write_intensity_csv(&rec, &mut csv)?;
    fs::create_dir_all(out)?;
    let stem = &cfg.output.stem;
    write_file(out, &format!("{stem}_intensity.csv"), &csv)?;
    let summary = SimulateSummary {
        xi: sc.sample.xi,
        omega0_rad_per_ns: sc.scheme.omega0() * 1e-9,
        omega1_rad_per_ns: sc.scheme.omega1() * 1e-9,
        sequence: seq.events().iter().map(EventRecord::from_event).collect(),
        switch_report: switch_report(&sc, &seq)?,
        truncation_order: rec.truncation_order,
        converged: rec.converged,
        series_residual: rec.residual,
        peak_intensity: intensity_series(&rec).iter().map(|r| r.total).fold(0.0, f64::max),
        first_minimum_ns: first_minimum(&rec).map(|t| t * 1e9),
    };
    write_file(out, &format!("{stem}_summary.json"), &json_bytes(&summary)?)?;
    Ok(summary)
}

pub fn cmd_design(cfg: &ScenarioConfig, out: &Path) -> CliResult<DesignOutput> {
    let sc = cfg.resolve()?;
    let (_, design) = run_design(cfg, &sc)?;
    fs::create_dir_all(out)?;
    write_file(out, &format!("{}_sequence.json", cfg.output.stem), &json_bytes(&design)?)?;
    Ok(design)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntangleSummary {
    pub sequence: Vec<EventRecord>,
    pub sigma_window_ns: [f64; 2],
    pub pi_window_ns: [f64; 2],
    pub alpha: [f64; 2],
    pub beta: [f64; 2],
    pub alpha_sq_over_beta_sq: f64,
    pub loss_fraction: f64,
    pub visibility: f64,
    pub p_d1: f64,
    pub p_d2: f64,
    pub chsh_s: f64,
    pub classical_bound: f64,
}

/// Windows from the config, or `[t2, t3]` for π and `[t4, t_end]` for σ
/// when a four-switch sequence is in use.
fn resolve_windows(cfg: &ScenarioConfig, seq: &SwitchSequence, grid: &TimeGrid) -> CliResult<WindowSpec> {
    if let Some(w) = &cfg.windows {
        return Ok(WindowSpec {
            sigma_window: (w.sigma_window_ns[0] * 1e-9, w.sigma_window_ns[1] * 1e-9),
            pi_window: (w.pi_window_ns[0] * 1e-9, w.pi_window_ns[1] * 1e-9),
        });
    }
    let t = seq.times();
    if t.len() == 4 && t[3] < grid.t_end {
        return Ok(WindowSpec { sigma_window: (t[3], grid.t_end), pi_window: (t[1], t[2]) });
    }
    Err(CliError::Config("entangle needs a windows block unless a four-switch sequence ends inside the grid".into()))
}

pub fn cmd_entangle(cfg: &ScenarioConfig, out: &Path) -> CliResult<EntangleSummary> {
    let sc = cfg.resolve()?;
    let seq = resolve_sequence(cfg, &sc)?;
    let windows = resolve_windows(cfg, &seq, &sc.grid)?;
    let rec = run_field(&sc, &seq)?;
    let state = extract_modes(&rec, &windows)?;
    let ib = &cfg.interferometer;
    let icfg = InterferometerConfig {
        phase_sigma: ib.phase_sigma_deg.to_radians(),
        phase_pi: ib.phase_pi_deg.to_radians(),
        splitter_transmittance: ib.splitter_transmittance,
    };
    let (p_d1, p_d2) = detector_probabilities(&state, &icfg)?;
    let b = &cfg.bell;
    let settings = ChshSettings {
        a: b.a_deg.to_radians(),
        a_prime: b.a_prime_deg.to_radians(),
        b: b.b_deg.to_radians(),
        b_prime: b.b_prime_deg.to_radians(),
    };
    let scan = bell_scan(&state, &settings);
    fs::create_dir_all(out)?;
    let stem = &cfg.output.stem;
    let mut csv = Vec::new();
    write_intensity_csv(&rec, &mut csv)?;
    write_file(out, &format!("{stem}_intensity.csv"), &csv)?;
    let mut bell = Vec::new();
    write_bell_csv(&scan, &mut bell)?;
    write_file(out, &format!("{stem}_bell.csv"), &bell)?;
    let ratio = if state.beta.norm_sqr() > 0.0 { state.alpha.norm_sqr() / state.beta.norm_sqr() } else { f64::INFINITY };
    let c = |z: C64| [z.re, z.im];
    let summary = EntangleSummary {
        sequence: seq.events().iter().map(EventRecord::from_event).collect(),
        sigma_window_ns: [windows.sigma_window.0 * 1e9, windows.sigma_window.1 * 1e9],
        pi_window_ns: [windows.pi_window.0 * 1e9, windows.pi_window.1 * 1e9],
        alpha: c(state.alpha),
        beta: c(state.beta),
        alpha_sq_over_beta_sq: ratio,
        loss_fraction: state.loss_fraction,
        visibility: visibility(&state),
        p_d1,
        p_d2,
        chsh_s: scan.s,
        classical_bound: scan.classical_bound,
    };
    write_file(out, &format!("{stem}_state.json"), &json_bytes(&summary)?)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub value: f64,
    pub directory: String,
    pub summary: SimulateSummary,
}

fn scan_variant(cfg: &ScenarioConfig, scan: &ScanBlock, value: f64) -> CliResult<ScenarioConfig> {
    let mut c = cfg.clone();
    c.scan = None;
    match scan.parameter {
        ScanParameter::Xi => c.sample.xi = value,
        ScanParameter::SwitchTimeNs => {
            let seq = c.sequence.as_mut().ok_or_else(|| CliError::Config("switch_time_ns scan needs an explicit sequence".into()))?;
            let ev = seq
                .get_mut(scan.event_index)
                .ok_or_else(|| CliError::Config(format!("scan.event_index {} outside the sequence", scan.event_index)))?;
            ev.t_ns = value;
        }
    }
    Ok(c)
}

pub fn cmd_scan(cfg: &ScenarioConfig, out: &Path) -> CliResult<Vec<ScanEntry>> {
    let scan = cfg.scan.as_ref().ok_or_else(|| CliError::Config("scan needs a scan block".into()))?;
    if scan.values.is_empty() {
        return Err(CliError::Config("scan.values is empty".into()));
    }
    let variants = scan.values.iter().map(|&v| scan_variant(cfg, scan, v)).collect::<CliResult<Vec<_>>>()?;
    for v in &variants {
        v.resolve()?;
    }
    let stem = &cfg.output.stem;
    let results: Vec<CliResult<ScanEntry>> = variants
        .par_iter()
        .zip(scan.values.par_iter())
        .enumerate()
        .map(|(i, (v, &value))| {
            let dir = format!("{stem}_scan_{i:03}");
            let summary = cmd_simulate(v, &out.join(&dir))?;
            Ok(ScanEntry { value, directory: dir, summary })
        })
        .collect();
    let entries = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    write_file(out, &format!("{stem}_scan.json"), &json_bytes(&entries)?)?;
    Ok(entries)
}

// ---- command line ----

#[derive(Parser, Debug)]
#[command(name = "nfs", version, about = "Nuclear forward scattering with hyperfine-field switching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct IoArgs {
    /// Scenario config (JSON)
    #[arg(long)]
    config: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Intensity time series for a sequence or design request
    Simulate(IoArgs),
    /// Switching times for a design request
    Design(IoArgs),
    /// Independent simulations over one parameter
    Scan(IoArgs),
    /// Two-mode state, visibility and CHSH scan
    Entangle(IoArgs),
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I: IntoIterator<Item = OsString>>(args: I) -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("NFS_LOG", "warn")).try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (io, run): (&IoArgs, fn(&ScenarioConfig, &Path) -> CliResult<()>) = match &cli.command {
        Command::Simulate(a) => (a, |c, o| cmd_simulate(c, o).map(|_| ())),
        Command::Design(a) => (a, |c, o| cmd_design(c, o).map(|_| ())),
        Command::Scan(a) => (a, |c, o| cmd_scan(c, o).map(|_| ())),
        Command::Entangle(a) => (a, |c, o| cmd_entangle(c, o).map(|_| ())),
    };
    match load_config(&io.config).and_then(|c| run(&c, &io.out)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
