//! Hyperfine-field rotations acting on the stored nuclear excitation, and the
//! search for switching times that store or release it.
//!
//! The excitation is kept as a ground/excited coherence matrix `c[m_g][m_e]`
//! in the basis of the active quantization frame. Every pair is tracked,
//! including the |Δm| = 2 pairs that carry no current but are populated by
//! rotations and re-emerge after later ones.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::angular::{three_j, wigner_big_d, LevelScheme, Projection, SpinHalfInt, TransitionLine};
use crate::currents::{cnorm, complexify, hdot, scale, unit_current, CVec3, Geometry, Vec3};
use crate::error::{NfsError, Result};
use crate::scattering::SampleConfig;

fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

/// z-y-z Euler angles of a field rotation, each in (-pi, pi].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl RotationSpec {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        RotationSpec { alpha: wrap_angle(alpha), beta: wrap_angle(beta), gamma: wrap_angle(gamma) }
    }

    pub fn identity() -> Self {
        RotationSpec::new(0.0, 0.0, 0.0)
    }

    pub fn in_plane(beta: f64) -> Self {
        RotationSpec::new(0.0, beta, 0.0)
    }

    /// Field from the z axis onto the beam direction y.
    pub fn beam_parallel() -> Self {
        RotationSpec::new(-FRAC_PI_2, -FRAC_PI_2, 0.0)
    }

    /// Field from the beam direction back onto z.
    pub fn back_to_axis() -> Self {
        RotationSpec::new(0.0, FRAC_PI_2, 0.0)
    }

    /// Field onto the beam again after `back_to_axis`, landing in the same
    /// frame as `beam_parallel`.
    pub fn beam_parallel_after_return() -> Self {
        RotationSpec::new(0.0, -FRAC_PI_2, 0.0)
    }

    /// Coefficient map `c'_{m'} = sum_m M_{m'm} c_m` for one spin,
    /// `M = conj(D(alpha, beta, gamma))`.
    pub fn basis_change(&self, spin: SpinHalfInt) -> Vec<Vec<C64>> {
        wigner_big_d(spin, self.alpha, self.beta, self.gamma)
            .into_iter()
            .map(|row| row.into_iter().map(|x| x.conj()).collect())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchingEvent {
    /// s
    pub time: f64,
    pub rotation: RotationSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SwitchSequence {
    events: Vec<SwitchingEvent>,
}

impl SwitchSequence {
    pub fn new(events: Vec<SwitchingEvent>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !(e.time > 0.0 && e.time.is_finite()) {
                return Err(NfsError::Input(format!("switching event {i} has non-positive time")));
            }
            if i > 0 && e.time <= events[i - 1].time {
                return Err(NfsError::Input(format!("switching times must increase strictly (event {i})")));
            }
        }
        Ok(SwitchSequence { events })
    }

    pub fn empty() -> Self {
        SwitchSequence { events: Vec::new() }
    }

    pub fn events(&self) -> &[SwitchingEvent] {
        &self.events
    }

    pub fn times(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.time).collect()
    }
}

/// Ground/excited coherences, rows by `m_g`, columns by `m_e`, both ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub ng: usize,
    pub ne: usize,
    pub data: Vec<C64>,
}

impl Coherence {
    pub fn zeros(ng: usize, ne: usize) -> Self {
        Coherence { ng, ne, data: vec![C64::new(0.0, 0.0); ng * ne] }
    }

    pub fn get(&self, g: usize, e: usize) -> C64 {
        self.data[g * self.ne + e]
    }

    pub fn set(&mut self, g: usize, e: usize, v: C64) {
        self.data[g * self.ne + e] = v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `M_g c M_e^T`
    pub fn transformed(&self, m_g: &[Vec<C64>], m_e: &[Vec<C64>]) -> Self {
        let mut tmp = Coherence::zeros(self.ng, self.ne);
        for gp in 0..self.ng {
            for e in 0..self.ne {
                let v: C64 = (0..self.ng).map(|g| m_g[gp][g] * self.get(g, e)).sum();
                tmp.set(gp, e, v);
            }
        }
        let mut out = Coherence::zeros(self.ng, self.ne);
        for g in 0..self.ng {
            for ep in 0..self.ne {
                let v: C64 = (0..self.ne).map(|e| m_e[ep][e] * tmp.get(g, e)).sum();
                out.set(g, ep, v);
            }
        }
        out
    }

    /// Free precession over `dt` without the common decay factor.
    pub fn precessed(&self, scheme: &LevelScheme, dt: f64) -> Self {
        let mut out = self.clone();
        for (g, mg) in scheme.i_g.projections().enumerate() {
            for (e, me) in scheme.i_e.projections().enumerate() {
                let om = scheme.pair_frequency(mg, me).expect("enumerated projections");
                out.set(g, e, self.get(g, e) * C64::from_polar(1.0, -om * dt));
            }
        }
        out
    }

    /// Excited-sublevel populations `sum_g |c_{g e}|^2`.
    pub fn excited_populations(&self) -> Vec<f64> {
        (0..self.ne).map(|e| (0..self.ng).map(|g| self.get(g, e).norm_sqr()).sum()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineAmplitude {
    pub line: TransitionLine,
    pub vector: CVec3,
}

/// First-order amplitudes valid between two switchings.
///
/// The first-order field on `[valid_from, valid_to)` is
/// `-sum_l A_l exp(-i Omega_l (t - valid_from)) exp(-t / (2 tau))`
/// in units of the incident pulse area per lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeSet {
    pub scheme: LevelScheme,
    pub geometry: Geometry,
    pub xi: f64,
    pub coherence: Coherence,
    pub valid_from: f64,
    pub valid_to: f64,
    pub amplitudes: Vec<LineAmplitude>,
}

fn pair_index(scheme: &LevelScheme, mg: Projection, me: Projection) -> (usize, usize) {
    (scheme.i_g.index_of(mg).expect("valid m_g"), scheme.i_e.index_of(me).expect("valid m_e"))
}

impl AmplitudeSet {
    fn from_coherence(scheme: &LevelScheme, geometry: &Geometry, xi: f64, coherence: Coherence, valid_from: f64) -> Self {
        let amplitudes = scheme
            .lines
            .iter()
            .map(|l| {
                let (g, e) = pair_index(scheme, l.m_g, l.m_e);
                let j = unit_current(scheme, l.m_g, l.m_e, geometry);
                LineAmplitude { line: *l, vector: scale(&j, coherence.get(g, e) * xi) }
            })
            .collect();
        AmplitudeSet {
            scheme: scheme.clone(),
            geometry: *geometry,
            xi,
            coherence,
            valid_from,
            valid_to: f64::INFINITY,
            amplitudes,
        }
    }

    pub fn quantization_axis(&self) -> Vec3 {
        self.geometry.quantization_axis()
    }

    pub fn amplitude(&self, m_g: Projection, m_e: Projection) -> Option<&LineAmplitude> {
        self.amplitudes.iter().find(|a| a.line.m_g == m_g && a.line.m_e == m_e)
    }

    pub fn coherence_at(&self, t: f64) -> Result<Coherence> {
        if t < self.valid_from || t > self.valid_to {
            return Err(NfsError::Input(format!(
                "time {t:e} s outside amplitude validity [{:e}, {:e}]",
                self.valid_from, self.valid_to
            )));
        }
        Ok(self.coherence.precessed(&self.scheme, t - self.valid_from))
    }

    pub fn max_amplitude(&self) -> f64 {
        self.amplitudes.iter().fold(0.0, |a, x| a.max(cnorm(&x.vector)))
    }

    /// Largest `|A_l . dir|` over the lines.
    pub fn max_projection(&self, dir: &Vec3) -> f64 {
        let d = complexify(dir);
        self.amplitudes.iter().fold(0.0, |a, x| a.max(hdot(&d, &x.vector).norm()))
    }

    /// Amplitude bound for the stored excitation sitting entirely on the
    /// strongest line with its current fully transverse; invariant under
    /// switching.
    pub fn amplitude_scale(&self) -> f64 {
        let one = SpinHalfInt::from_twice(2);
        let (ig, ie) = (self.scheme.i_g, self.scheme.i_e);
        let tj = self
            .scheme
            .lines
            .iter()
            .map(|l| three_j(ig, one, ie, l.m_g.neg(), Projection::from_twice(-2 * l.q), l.m_e).abs())
            .fold(0.0, f64::max);
        self.xi * self.coherence.norm() * 3f64.sqrt() * tj
    }

    /// Post-switch residuals relative to `amplitude_scale`.
    pub fn residuals(&self) -> AmplitudeResiduals {
        let s = self.amplitude_scale();
        let s = if s > 0.0 { s } else { 1.0 };
        AmplitudeResiduals {
            total: self.max_amplitude() / s,
            sigma: self.max_projection(&self.geometry.sigma_dir()) / s,
            pi: self.max_projection(&self.geometry.pi_dir()) / s,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeResiduals {
    pub total: f64,
    pub sigma: f64,
    pub pi: f64,
}

pub fn initial_amplitudes(geom: &Geometry, scheme: &LevelScheme, sample: &SampleConfig) -> Result<AmplitudeSet> {
    geom.validate()?;
    sample.validate()?;
    let mut c = Coherence::zeros(scheme.i_g.multiplicity(), scheme.i_e.multiplicity());
    let e0 = complexify(&geom.e0);
    for l in &scheme.lines {
        let (g, e) = pair_index(scheme, l.m_g, l.m_e);
        c.set(g, e, hdot(&unit_current(scheme, l.m_g, l.m_e, geom), &e0));
    }
    Ok(AmplitudeSet::from_coherence(scheme, geom, sample.xi, c, 0.0))
}

/// Applies an instantaneous field rotation. Both spins are re-expanded with
/// `conj(D)` of the same Euler angles, and the quantization frame is turned
/// about its own axes.
pub fn apply_switch(amps: &AmplitudeSet, event: &SwitchingEvent) -> Result<AmplitudeSet> {
    if event.time < amps.valid_from {
        return Err(NfsError::Input(format!(
            "switch at {:e} s precedes amplitude validity start {:e} s",
            event.time, amps.valid_from
        )));
    }
    let c = amps.coherence_at(event.time)?;
    let r = event.rotation;
    let c = c.transformed(&r.basis_change(amps.scheme.i_g), &r.basis_change(amps.scheme.i_e));
    let frame = amps.geometry.frame.then(r.alpha, r.beta, r.gamma);
    Ok(AmplitudeSet::from_coherence(&amps.scheme, &amps.geometry.with_frame(frame), amps.xi, c, event.time))
}

/// Amplitude sets for every interval of the sequence, `valid_to` filled in.
pub fn amplitude_history(initial: &AmplitudeSet, sequence: &SwitchSequence) -> Result<Vec<AmplitudeSet>> {
    let mut out = vec![initial.clone()];
    for ev in sequence.events() {
        let last = out.last_mut().expect("non-empty");
        last.valid_to = ev.time;
        let next = apply_switch(last, ev)?;
        out.push(next);
    }
    Ok(out)
}

pub fn suppression_times(scheme: &LevelScheme, n_max: usize) -> Vec<f64> {
    let w0 = scheme.omega0();
    if w0 <= 0.0 {
        return Vec::new();
    }
    (1..=n_max).map(|n| (n as f64 - 0.5) * PI / w0).collect()
}

/// The three functional forms of the stored-then-released amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSwitchForms {
    /// `3 sin(Omega_1 dt) + sin(Omega_0 dt)`, Δm = 0 lines
    pub delta_m0: f64,
    /// `3 cos(Omega_1 dt) - cos(Omega_0 dt)`, inner Δm = ±1 lines
    pub inner: f64,
    /// `cos(Omega_1 dt) + cos(Omega_0 dt)`, stretched lines
    pub stretched: f64,
}

impl TwoSwitchForms {
    pub fn for_line(&self, line: &TransitionLine) -> f64 {
        if line.q == 0 {
            self.delta_m0
        } else if line.m_e.twice().abs() == 1 {
            self.inner
        } else {
            self.stretched
        }
    }
}

const SUPPRESSION_PHASE_TOL: f64 = 1e-9;

/// Closed-form relative amplitudes after a beam-parallel switch at a
/// suppression time `t1` and a return to z at `t2`.
pub fn two_switch_closed_form(t1: f64, t2: f64, scheme: &LevelScheme) -> Result<(TwoSwitchForms, Vec<(TransitionLine, C64)>)> {
    let w0 = scheme.omega0();
    let w1 = scheme.omega1();
    let n = w0 * t1 / PI + 0.5;
    if !(w0 > 0.0) || (n - n.round()).abs() > SUPPRESSION_PHASE_TOL || n.round() < 1.0 {
        return Err(NfsError::Input(format!("t1 = {t1:e} s is not a suppression time")));
    }
    if !(t2 > t1) {
        return Err(NfsError::Input("t2 must follow t1".into()));
    }
    let dt = t2 - t1;
    let forms = TwoSwitchForms {
        delta_m0: 3.0 * (w1 * dt).sin() + (w0 * dt).sin(),
        inner: 3.0 * (w1 * dt).cos() - (w0 * dt).cos(),
        stretched: (w1 * dt).cos() + (w0 * dt).cos(),
    };
    let per_line = scheme.lines.iter().map(|l| (*l, C64::from(forms.for_line(l)))).collect();
    Ok((forms, per_line))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReleaseTarget {
    SigmaOnly,
    PiOnly,
    FullSuppression,
}

impl ReleaseTarget {
    fn residual(self, r: &AmplitudeResiduals) -> f64 {
        match self {
            ReleaseTarget::SigmaOnly => r.pi,
            ReleaseTarget::PiOnly => r.sigma,
            ReleaseTarget::FullSuppression => r.total,
        }
    }

    fn complementary(self, r: &AmplitudeResiduals) -> Option<f64> {
        match self {
            ReleaseTarget::SigmaOnly => Some(r.sigma),
            ReleaseTarget::PiOnly => Some(r.pi),
            ReleaseTarget::FullSuppression => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReleaseTarget::SigmaOnly => "sigma-only",
            ReleaseTarget::PiOnly => "pi-only",
            ReleaseTarget::FullSuppression => "full-suppression",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    /// s
    pub scan_step: f64,
    /// s
    pub time_tol: f64,
    /// Largest accepted residual relative to the amplitude scale.
    pub accept_residual: f64,
    /// Complementary group must exceed this fraction of its window maximum.
    pub floor_fraction: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions { scan_step: 0.1e-9, time_tol: 1e-13, accept_residual: 0.05, floor_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseCandidate {
    /// s
    pub time: f64,
    pub residual: f64,
    pub complementary: Option<f64>,
}

fn residuals_after(history: &AmplitudeSet, rotation: RotationSpec, t: f64) -> Result<AmplitudeResiduals> {
    Ok(apply_switch(history, &SwitchingEvent { time: t, rotation })?.residuals())
}

fn golden_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Scans `window` for switching times where the targeted polarization group
/// of the post-switch first-order amplitudes vanishes, refines every local
/// minimum of the residual and returns the accepted ones in time order.
pub fn design_release_time(
    history: &AmplitudeSet,
    rotation: RotationSpec,
    target: ReleaseTarget,
    window: (f64, f64),
    opts: &DesignOptions,
) -> Vec<ReleaseCandidate> {
    let (start, end) = (window.0.max(history.valid_from), window.1.min(history.valid_to));
    if !(end > start) || !(opts.scan_step > 0.0) {
        return Vec::new();
    }
    let n = ((end - start) / opts.scan_step).floor() as usize;
    let grid: Vec<f64> = (1..n).map(|i| start + i as f64 * opts.scan_step).collect();
    let evals: Vec<AmplitudeResiduals> = match grid.iter().map(|&t| residuals_after(history, rotation, t)).collect() {
        Ok(v) => v,
        Err(_) => return Vec::new(),
    };
    let comp_max = evals.iter().filter_map(|r| target.complementary(r)).fold(0.0, f64::max);
    let res: Vec<f64> = evals.iter().map(|r| target.residual(r)).collect();

    let mut out = Vec::new();
    for i in 1..res.len().saturating_sub(1) {
        if !(res[i] <= res[i - 1] && res[i] < res[i + 1]) {
            continue;
        }
        let f = |t: f64| residuals_after(history, rotation, t).map(|r| target.residual(&r)).unwrap_or(f64::INFINITY);
        let t = golden_min(f, grid[i - 1], grid[i + 1], opts.time_tol);
        let r = match residuals_after(history, rotation, t) {
            Ok(r) => r,
            Err(_) => continue,
        };
        let residual = target.residual(&r);
        let complementary = target.complementary(&r);
        if residual > opts.accept_residual {
            continue;
        }
        if let Some(c) = complementary {
            if c <= opts.floor_fraction * comp_max {
                continue;
            }
        }
        out.push(ReleaseCandidate { time: t, residual, complementary });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarization {
    Sigma,
    Pi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchReport {
    /// s
    pub time: f64,
    pub rotation: RotationSpec,
    pub target: ReleaseTarget,
    pub residuals: AmplitudeResiduals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchPlan {
    pub sequence: SwitchSequence,
    pub report: Vec<SwitchReport>,
}

/// Store at the first suppression time, release π at t2, store again at t3,
/// release `final_polarization` at t4. Each time is the earliest accepted
/// candidate after the previous switch.
pub fn four_switch_plan(final_polarization: Polarization, initial: &AmplitudeSet, t_max: f64, opts: &DesignOptions) -> Result<SwitchPlan> {
    let t1 = *suppression_times(&initial.scheme, 1)
        .first()
        .ok_or_else(|| NfsError::Input("scheme has no hyperfine splitting".into()))?;
    let last = match final_polarization {
        Polarization::Sigma => ReleaseTarget::SigmaOnly,
        Polarization::Pi => ReleaseTarget::PiOnly,
    };
    let steps = [
        (RotationSpec::back_to_axis(), ReleaseTarget::PiOnly),
        (RotationSpec::beam_parallel_after_return(), ReleaseTarget::FullSuppression),
        (RotationSpec::back_to_axis(), last),
    ];
    let first = SwitchingEvent { time: t1, rotation: RotationSpec::beam_parallel() };
    let mut set = apply_switch(initial, &first)?;
    let mut events = vec![first];
    let mut report = vec![SwitchReport {
        time: t1,
        rotation: first.rotation,
        target: ReleaseTarget::FullSuppression,
        residuals: set.residuals(),
    }];
    for (k, (rotation, target)) in steps.into_iter().enumerate() {
        let from = set.valid_from;
        let cands = design_release_time(&set, rotation, target, (from, t_max), opts);
        let c = cands.first().ok_or_else(|| NfsError::NoCandidate {
            stage: k + 2,
            target: target.name().into(),
            start_ns: from * 1e9,
            end_ns: t_max * 1e9,
        })?;
        let ev = SwitchingEvent { time: c.time, rotation };
        set = apply_switch(&set, &ev)?;
        report.push(SwitchReport { time: c.time, rotation, target, residuals: set.residuals() });
        events.push(ev);
    }
    Ok(SwitchPlan { sequence: SwitchSequence::new(events)?, report })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angles_wrap_into_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn sequence_rejects_unordered_times() {
        let r = RotationSpec::identity();
        let ev = |t| SwitchingEvent { time: t, rotation: r };
        assert!(SwitchSequence::new(vec![ev(2e-9), ev(1e-9)]).is_err());
        assert!(SwitchSequence::new(vec![ev(0.0)]).is_err());
        assert!(SwitchSequence::new(vec![ev(1e-9), ev(2e-9)]).is_ok());
    }

    #[test]
    fn golden_section_finds_kink() {
        let t = golden_min(|x| (x - 0.3).abs(), 0.0, 1.0, 1e-12);
        assert!((t - 0.3).abs() < 1e-11);
    }
}
