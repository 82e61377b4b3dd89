//! Two-mode single-photon description of the switched emission and its
//! Mach-Zehnder recombination.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{NfsError, Result};
use crate::scattering::{integrate_window, intensity_series, FieldRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    /// s
    pub sigma_window: (f64, f64),
    /// s
    pub pi_window: (f64, f64),
}

impl WindowSpec {
    pub fn validate(&self, rec: &FieldRecord) -> Result<()> {
        for (name, (a, b)) in [("sigma", self.sigma_window), ("pi", self.pi_window)] {
            if !(b > a) {
                return Err(NfsError::Input(format!("{name} window is empty")));
            }
            if a < rec.grid.t_start - 1e-15 || b > rec.grid.t_end + 1e-15 {
                return Err(NfsError::Input(format!("{name} window lies outside the record grid")));
            }
        }
        let (s, p) = (self.sigma_window, self.pi_window);
        if s.0 < p.1 && p.0 < s.1 {
            return Err(NfsError::Input("detection windows overlap".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoModeState {
    pub alpha: C64,
    pub beta: C64,
    /// Coherent energy outside both windows over the total coherent energy.
    pub loss_fraction: f64,
}

impl TwoModeState {
    /// Normalizes `(alpha, beta)`; fails for the zero vector.
    pub fn new(alpha: C64, beta: C64, loss_fraction: f64) -> Result<Self> {
        let n = (alpha.norm_sqr() + beta.norm_sqr()).sqrt();
        if !(n > 0.0) {
            return Err(NfsError::EmptyWindows);
        }
        Ok(TwoModeState { alpha: alpha / n, beta: beta / n, loss_fraction: loss_fraction.clamp(0.0, 1.0) })
    }

    fn relative_phase(&self) -> f64 {
        (self.alpha * self.beta.conj()).arg()
    }
}

/// Window energies of `I_sigma` and `I_pi` become `|alpha|^2` and `|beta|^2`.
pub fn extract_modes(rec: &FieldRecord, windows: &WindowSpec) -> Result<TwoModeState> {
    windows.validate(rec)?;
    let rows = intensity_series(rec);
    let is: Vec<f64> = rows.iter().map(|r| r.sigma).collect();
    let ip: Vec<f64> = rows.iter().map(|r| r.pi).collect();
    let it: Vec<f64> = rows.iter().map(|r| r.total).collect();
    let ws = integrate_window(&rec.grid, &is, windows.sigma_window.0, windows.sigma_window.1);
    let wp = integrate_window(&rec.grid, &ip, windows.pi_window.0, windows.pi_window.1);
    if !(ws + wp > 0.0) {
        return Err(NfsError::EmptyWindows);
    }
    let total = integrate_window(&rec.grid, &it, rec.grid.t_start, rec.grid.t_end);
    let loss = if total > 0.0 { 1.0 - (ws + wp) / total } else { 0.0 };
    TwoModeState::new(C64::from(ws.sqrt()), C64::from(wp.sqrt()), loss)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterferometerConfig {
    pub phase_sigma: f64,
    pub phase_pi: f64,
    pub splitter_transmittance: f64,
}

impl Default for InterferometerConfig {
    fn default() -> Self {
        InterferometerConfig { phase_sigma: 0.0, phase_pi: 0.0, splitter_transmittance: 0.5 }
    }
}

/// Detection probabilities at the two output ports, conditioned on arrival.
pub fn detector_probabilities(state: &TwoModeState, cfg: &InterferometerConfig) -> Result<(f64, f64)> {
    let t = cfg.splitter_transmittance;
    if !(0.0..=1.0).contains(&t) {
        return Err(NfsError::Input(format!("splitter transmittance {t} outside [0, 1]")));
    }
    let (a, b) = (state.alpha.norm(), state.beta.norm());
    let dphi = cfg.phase_sigma - cfg.phase_pi + state.relative_phase();
    let p1 = t * a * a + (1.0 - t) * b * b + 2.0 * (t * (1.0 - t)).sqrt() * a * b * dphi.cos();
    let p1 = p1.clamp(0.0, 1.0);
    Ok((p1, 1.0 - p1))
}

pub fn visibility(state: &TwoModeState) -> f64 {
    2.0 * state.alpha.norm() * state.beta.norm()
}

/// `E(a, b) = V cos(a - b + arg(alpha conj(beta)))`
pub fn correlation(state: &TwoModeState, phi_a: f64, phi_b: f64) -> f64 {
    visibility(state) * (phi_a - phi_b + state.relative_phase()).cos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshSettings {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshSettings {
    pub fn canonical() -> Self {
        use std::f64::consts::PI;
        ChshSettings { a: 0.0, a_prime: PI / 2.0, b: PI / 4.0, b_prime: 3.0 * PI / 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellRow {
    pub phi_a: f64,
    pub phi_b: f64,
    pub e: f64,
    pub p_d1: f64,
    pub p_d2: f64,
}

pub const CLASSICAL_BOUND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BellScan {
    pub rows: Vec<BellRow>,
    pub s: f64,
    pub classical_bound: f64,
}

/// CHSH-style combination `|E(a,b) - E(a,b') + E(a',b) + E(a',b')|` of the
/// interference correlations, with the four rows behind it.
pub fn bell_scan(state: &TwoModeState, settings: &ChshSettings) -> BellScan {
    let pairs = [
        (settings.a, settings.b),
        (settings.a, settings.b_prime),
        (settings.a_prime, settings.b),
        (settings.a_prime, settings.b_prime),
    ];
    let rows: Vec<BellRow> = pairs
        .iter()
        .map(|&(pa, pb)| {
            let cfg = InterferometerConfig { phase_sigma: pa, phase_pi: pb, splitter_transmittance: 0.5 };
            let (p_d1, p_d2) = detector_probabilities(state, &cfg).expect("balanced splitter");
            BellRow { phi_a: pa, phi_b: pb, e: correlation(state, pa, pb), p_d1, p_d2 }
        })
        .collect();
    let s = (rows[0].e - rows[1].e + rows[2].e + rows[3].e).abs();
    BellScan { rows, s, classical_bound: CLASSICAL_BOUND }
}

pub const BELL_CSV_HEADER: &str = "phi_a,phi_b,E,P_D1,P_D2";

pub fn write_bell_csv<W: Write>(scan: &BellScan, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{BELL_CSV_HEADER}")?;
    for r in &scan.rows {
        writeln!(w, "{:e},{:e},{:e},{:e},{:e}", r.phi_a, r.phi_b, r.e, r.p_d1, r.p_d2)?;
    }
    writeln!(w, "# S={:e},classical_bound={:e}", scan.s, scan.classical_bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbalanced_splitter_without_second_mode() {
        let s = TwoModeState::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), 0.0).unwrap();
        let cfg = InterferometerConfig { splitter_transmittance: 0.3, ..Default::default() };
        let (p1, p2) = detector_probabilities(&s, &cfg).unwrap();
        assert!((p1 - 0.3).abs() < 1e-15 && (p2 - 0.7).abs() < 1e-15);
        let bad = InterferometerConfig { splitter_transmittance: 1.2, ..Default::default() };
        assert!(detector_probabilities(&s, &bad).is_err());
    }

    #[test]
    fn zero_state_is_rejected() {
        assert!(TwoModeState::new(C64::new(0.0, 0.0), C64::new(0.0, 0.0), 0.0).is_err());
    }
}
