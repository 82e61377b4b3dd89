//! Angular-momentum algebra and hyperfine level schemes.
//!
//! Spins and projections are stored doubled (`2I`, `2m`) so that selection
//! rules stay in integer arithmetic.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{NfsError, Result};

/// Nuclear magneton in eV/T.
pub const NUCLEAR_MAGNETON_EV_PER_T: f64 = 3.152_451_258_44e-8;
/// Reduced Planck constant in eV s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;

/// g-factor of the 57Fe ground state (I = 1/2).
pub const FE57_G_GROUND: f64 = 0.18121;
/// g-factor of the 57Fe 14.4 keV state (I = 3/2).
pub const FE57_G_EXCITED: f64 = -0.10354;

/// A non-negative spin stored as `2I`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinHalfInt(u32);

impl SpinHalfInt {
    pub const fn from_twice(twice_value: u32) -> Self {
        SpinHalfInt(twice_value)
    }

    pub const fn twice(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn multiplicity(self) -> usize {
        self.0 as usize + 1
    }

    pub fn is_valid_projection(self, m: Projection) -> bool {
        let j = self.0 as i32;
        m.0.abs() <= j && (j - m.0).rem_euclid(2) == 0
    }

    /// Projections in ascending order, `-I ..= I`.
    pub fn projections(self) -> impl Iterator<Item = Projection> {
        let j = self.0 as i32;
        (0..=self.0 as i32).map(move |k| Projection(-j + 2 * k))
    }

    /// Row/column index of `m` in matrices ordered by ascending projection.
    pub fn index_of(self, m: Projection) -> Result<usize> {
        if !self.is_valid_projection(m) {
            return Err(NfsError::Input(format!("projection {m} is not valid for spin {self}")));
        }
        Ok(((m.0 + self.0 as i32) / 2) as usize)
    }
}

impl fmt::Display for SpinHalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_half(self.0 as i32, f)
    }
}

/// A magnetic projection stored as `2m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Projection(i32);

impl Projection {
    pub const fn from_twice(twice_value: i32) -> Self {
        Projection(twice_value)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn neg(self) -> Self {
        Projection(-self.0)
    }

    /// Parses `"1/2"`, `"-3/2"`, `"1"` and similar.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || NfsError::Input(format!("cannot parse projection '{text}'"));
        match t.split_once('/') {
            Some((num, den)) => {
                let n: i32 = num.trim().parse().map_err(|_| bad())?;
                match den.trim() {
                    "2" if n % 2 != 0 => Ok(Projection(n)),
                    "1" => Ok(Projection(2 * n)),
                    _ => Err(bad()),
                }
            }
            None => t.parse::<i32>().map(|n| Projection(2 * n)).map_err(|_| bad()),
        }
    }
}

impl fmt::Display for Projection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_half(self.0, f)
    }
}

fn fmt_half(twice: i32, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if twice % 2 == 0 {
        write!(f, "{}", twice / 2)
    } else {
        write!(f, "{twice}/2")
    }
}

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Wigner small-d element `d^I_{m_to, m_from}(beta)`.
pub fn wigner_small_d(spin: SpinHalfInt, m_to: Projection, m_from: Projection, beta: f64) -> Result<f64> {
    for m in [m_to, m_from] {
        if !spin.is_valid_projection(m) {
            return Err(NfsError::Input(format!("projection {m} is not valid for spin {spin}")));
        }
    }
    let j2 = spin.twice() as i32;
    // integer combinations j ± m
    let jpm1 = (j2 + m_to.0) / 2;
    let jmm1 = (j2 - m_to.0) / 2;
    let jpm = (j2 + m_from.0) / 2;
    let jmm = (j2 - m_from.0) / 2;
    let dm = (m_to.0 - m_from.0) / 2;

    let norm = (factorial(jpm1) * factorial(jmm1) * factorial(jpm) * factorial(jmm)).sqrt();
    let (s, c) = (0.5 * beta).sin_cos();
    let k_min = 0.max(-dm);
    let k_max = jpm.min(jmm1);
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let sign = if (dm + k) % 2 == 0 { 1.0 } else { -1.0 };
        let denom = factorial(jpm - k) * factorial(k) * factorial(dm + k) * factorial(jmm1 - k);
        // cos^(2j + m - m' - 2k) sin^(m' - m + 2k)
        sum += sign * c.powi(jpm + jmm1 - 2 * k) * s.powi(dm + 2 * k) / denom;
    }
    Ok(norm * sum)
}

/// Full small-d matrix, rows and columns ordered by ascending projection.
pub fn wigner_d_matrix(spin: SpinHalfInt, beta: f64) -> Vec<Vec<f64>> {
    spin.projections()
        .map(|mt| {
            spin.projections()
                .map(|mf| wigner_small_d(spin, mt, mf, beta).expect("projections enumerated from spin"))
                .collect()
        })
        .collect()
}

/// Wigner D matrix for z-y-z Euler angles,
/// `D_{m'm} = exp(-i m' alpha) d_{m'm}(beta) exp(-i m gamma)`.
pub fn wigner_big_d(spin: SpinHalfInt, alpha: f64, beta: f64, gamma: f64) -> Vec<Vec<C64>> {
    let d = wigner_d_matrix(spin, beta);
    spin.projections()
        .enumerate()
        .map(|(r, mt)| {
            spin.projections()
                .enumerate()
                .map(|(c, mf)| C64::from_polar(d[r][c], -mt.value() * alpha - mf.value() * gamma))
                .collect()
        })
        .collect()
}

fn triangle_ok(j1: i32, j2: i32, j3: i32) -> bool {
    j3 >= (j1 - j2).abs() && j3 <= j1 + j2 && (j1 + j2 + j3) % 2 == 0
}

/// Wigner 3-j symbol from the Racah formula. All arguments doubled.
/// Invalid combinations give zero.
pub fn three_j(j1: SpinHalfInt, j2: SpinHalfInt, j3: SpinHalfInt, m1: Projection, m2: Projection, m3: Projection) -> f64 {
    if !(j1.is_valid_projection(m1) && j2.is_valid_projection(m2) && j3.is_valid_projection(m3)) {
        return 0.0;
    }
    let (a, b, c) = (j1.twice() as i32, j2.twice() as i32, j3.twice() as i32);
    if m1.0 + m2.0 + m3.0 != 0 || !triangle_ok(a, b, c) {
        return 0.0;
    }
    let (x1, x2, x3) = (m1.0, m2.0, m3.0);
    let h = |v: i32| v / 2;

    let delta = factorial(h(a + b - c)) * factorial(h(a - b + c)) * factorial(h(-a + b + c))
        / factorial(h(a + b + c) + 1);
    let mfac = factorial(h(a + x1))
        * factorial(h(a - x1))
        * factorial(h(b + x2))
        * factorial(h(b - x2))
        * factorial(h(c + x3))
        * factorial(h(c - x3));

    let k_min = 0.max(h(b - c - x1)).max(h(a - c + x2));
    let k_max = h(a + b - c).min(h(a - x1)).min(h(b + x2));
    let mut sum = 0.0;
    for k in k_min..=k_max {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (factorial(k)
                * factorial(h(a + b - c) - k)
                * factorial(h(a - x1) - k)
                * factorial(h(b + x2) - k)
                * factorial(h(c - b + x1) + k)
                * factorial(h(c - a - x2) + k));
    }
    let phase_exp = h(a - b - x3);
    let phase = if phase_exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    phase * (delta * mfac).sqrt() * sum
}

/// A hyperfine transition between `m_g` and `m_e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionLine {
    pub m_g: Projection,
    pub m_e: Projection,
    /// `m_e - m_g`
    pub q: i32,
    /// Hyperfine angular frequency in rad/s.
    pub omega_hf: f64,
}

/// Explicit line frequency used to override the Zeeman model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFrequency {
    pub m_g: Projection,
    pub m_e: Projection,
    /// rad/s
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperfineConfig {
    pub field_tesla: f64,
    pub g_ground: f64,
    pub g_excited: f64,
    pub override_frequencies: Option<Vec<LineFrequency>>,
}

impl HyperfineConfig {
    /// 57Fe g-factors with the field chosen so that the first suppression
    /// time `pi / (2 Omega_0)` equals `t1` seconds.
    pub fn calibrated_for_t1(t1: f64) -> Result<Self> {
        if !(t1 > 0.0 && t1.is_finite()) {
            return Err(NfsError::Input(format!("calibration time must be positive, got {t1}")));
        }
        let omega0 = std::f64::consts::PI / (2.0 * t1);
        // Omega(1/2, 1/2) = (g_g - g_e) / 2 * muN B / hbar
        let w = 2.0 * omega0 / (FE57_G_GROUND - FE57_G_EXCITED);
        Ok(HyperfineConfig {
            field_tesla: w * HBAR_EV_S / NUCLEAR_MAGNETON_EV_PER_T,
            g_ground: FE57_G_GROUND,
            g_excited: FE57_G_EXCITED,
            override_frequencies: None,
        })
    }

    /// Default calibration: first suppression time 8 ns.
    pub fn calibrated() -> Self {
        Self::calibrated_for_t1(8e-9).expect("positive calibration time")
    }
}

/// Sublevel structure of one M1 transition with its six lines.
///
/// Level angular frequencies are kept so that coherences between any
/// ground/excited pair (including |Δm| = 2) have a well defined frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    pub i_g: SpinHalfInt,
    pub i_e: SpinHalfInt,
    pub lines: Vec<TransitionLine>,
    ground_levels: Vec<f64>,
    excited_levels: Vec<f64>,
}

pub const FE57_I_G: SpinHalfInt = SpinHalfInt::from_twice(1);
pub const FE57_I_E: SpinHalfInt = SpinHalfInt::from_twice(3);

const LEVEL_CONSISTENCY_TOL: f64 = 1e-9;

pub fn build_level_scheme(config: &HyperfineConfig) -> Result<LevelScheme> {
    if !(config.field_tesla >= 0.0 && config.field_tesla.is_finite()) {
        return Err(NfsError::Input(format!("field magnitude must be >= 0, got {}", config.field_tesla)));
    }
    let (i_g, i_e) = (FE57_I_G, FE57_I_E);
    let (ground_levels, excited_levels) = match &config.override_frequencies {
        None => {
            let w = NUCLEAR_MAGNETON_EV_PER_T * config.field_tesla / HBAR_EV_S;
            let g: Vec<f64> = i_g.projections().map(|m| -config.g_ground * m.value() * w).collect();
            let e: Vec<f64> = i_e.projections().map(|m| -config.g_excited * m.value() * w).collect();
            (g, e)
        }
        Some(list) => levels_from_overrides(i_g, i_e, list)?,
    };
    LevelScheme::from_levels(i_g, i_e, ground_levels, excited_levels)
}

/// Recovers level frequencies from six line frequencies. The lines form a
/// connected bipartite graph; one ground level is pinned and the others
/// follow, with the redundant cycle checked for consistency.
fn levels_from_overrides(i_g: SpinHalfInt, i_e: SpinHalfInt, list: &[LineFrequency]) -> Result<(Vec<f64>, Vec<f64>)> {
    if list.len() != 6 {
        return Err(NfsError::Input(format!("override_frequencies needs exactly six entries, got {}", list.len())));
    }
    let mut map = BTreeMap::new();
    for lf in list {
        if !i_g.is_valid_projection(lf.m_g) || !i_e.is_valid_projection(lf.m_e) || (lf.m_e.0 - lf.m_g.0).abs() > 2 {
            return Err(NfsError::Input(format!("override ({}, {}) is not an M1 line", lf.m_g, lf.m_e)));
        }
        if !lf.omega.is_finite() {
            return Err(NfsError::Input(format!("override ({}, {}) is not finite", lf.m_g, lf.m_e)));
        }
        if map.insert((lf.m_g, lf.m_e), lf.omega).is_some() {
            return Err(NfsError::Input(format!("duplicate override for ({}, {})", lf.m_g, lf.m_e)));
        }
    }
    let ng = i_g.multiplicity();
    let ne = i_e.multiplicity();
    let mut g: Vec<Option<f64>> = vec![None; ng];
    let mut e: Vec<Option<f64>> = vec![None; ne];
    g[0] = Some(0.0);
    let mut changed = true;
    while changed {
        changed = false;
        for (&(mg, me), &om) in &map {
            let (ig, ie) = (i_g.index_of(mg)?, i_e.index_of(me)?);
            match (g[ig], e[ie]) {
                (Some(vg), None) => {
                    e[ie] = Some(vg + om);
                    changed = true;
                }
                (None, Some(ve)) => {
                    g[ig] = Some(ve - om);
                    changed = true;
                }
                _ => {}
            }
        }
    }
    let g: Vec<f64> = g.into_iter().collect::<Option<_>>().ok_or_else(|| NfsError::Input("override lines do not connect all levels".into()))?;
    let e: Vec<f64> = e.into_iter().collect::<Option<_>>().ok_or_else(|| NfsError::Input("override lines do not connect all levels".into()))?;
    let scale = map.values().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    for (&(mg, me), &om) in &map {
        let implied = e[i_e.index_of(me)?] - g[i_g.index_of(mg)?];
        if (implied - om).abs() > LEVEL_CONSISTENCY_TOL * scale {
            return Err(NfsError::Input(format!(
                "override frequencies are not consistent with a level scheme at ({mg}, {me})"
            )));
        }
    }
    // center each multiplet so the odd symmetry is a property of the levels
    let center = |v: Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        v.into_iter().map(|x| x - mean).collect::<Vec<_>>()
    };
    Ok((center(g), center(e)))
}

impl LevelScheme {
    fn from_levels(i_g: SpinHalfInt, i_e: SpinHalfInt, ground_levels: Vec<f64>, excited_levels: Vec<f64>) -> Result<Self> {
        let mut lines = Vec::with_capacity(6);
        for mg in i_g.projections() {
            for me in i_e.projections() {
                let q2 = me.0 - mg.0;
                if q2.abs() <= 2 {
                    let omega = excited_levels[i_e.index_of(me)?] - ground_levels[i_g.index_of(mg)?];
                    lines.push(TransitionLine { m_g: mg, m_e: me, q: q2 / 2, omega_hf: omega });
                }
            }
        }
        let scheme = LevelScheme { i_g, i_e, lines, ground_levels, excited_levels };
        let scale = scheme.lines.iter().fold(0.0f64, |a, l| a.max(l.omega_hf.abs())).max(1.0);
        for l in &scheme.lines {
            let mirror = scheme.pair_frequency(l.m_g.neg(), l.m_e.neg())?;
            if (mirror + l.omega_hf).abs() > LEVEL_CONSISTENCY_TOL * scale {
                return Err(NfsError::Input(format!(
                    "line frequencies violate Omega(-m_g,-m_e) = -Omega(m_g,m_e) at ({}, {})",
                    l.m_g, l.m_e
                )));
            }
        }
        Ok(scheme)
    }

    /// Frequency of the coherence between ground `m_g` and excited `m_e`,
    /// defined for every pair, not only dipole-allowed ones.
    pub fn pair_frequency(&self, m_g: Projection, m_e: Projection) -> Result<f64> {
        Ok(self.excited_levels[self.i_e.index_of(m_e)?] - self.ground_levels[self.i_g.index_of(m_g)?])
    }

    pub fn line(&self, m_g: Projection, m_e: Projection) -> Option<&TransitionLine> {
        self.lines.iter().find(|l| l.m_g == m_g && l.m_e == m_e)
    }

    /// `|Omega|` of the Δm = 0 lines.
    pub fn omega0(&self) -> f64 {
        self.lines.iter().filter(|l| l.q == 0).fold(0.0, |a, l| a.max(l.omega_hf.abs()))
    }

    /// `|Omega|` of the (-I_g -> I_e) coherence.
    pub fn omega1(&self) -> f64 {
        let mg = Projection(-(self.i_g.twice() as i32));
        let me = Projection(self.i_e.twice() as i32);
        self.pair_frequency(mg, me).map(f64::abs).unwrap_or(0.0)
    }

    pub fn ground_levels(&self) -> &[f64] {
        &self.ground_levels
    }

    pub fn excited_levels(&self) -> &[f64] {
        &self.excited_levels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF: SpinHalfInt = SpinHalfInt::from_twice(1);

    #[test]
    fn d_half_at_quarter_turn() {
        let p = Projection::from_twice(1);
        let v = wigner_small_d(HALF, p, p, std::f64::consts::FRAC_PI_2).unwrap();
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let off = wigner_small_d(HALF, p, p.neg(), 0.4).unwrap();
        assert!((off + (0.2f64).sin()).abs() < 1e-15);
    }

    #[test]
    fn invalid_projection_is_an_error() {
        assert!(wigner_small_d(HALF, Projection::from_twice(2), Projection::from_twice(1), 0.1).is_err());
    }

    #[test]
    fn three_j_selection_rules() {
        let one = SpinHalfInt::from_twice(2);
        let p = Projection::from_twice;
        assert_eq!(three_j(HALF, one, FE57_I_E, p(1), p(0), p(1)), 0.0);
        assert_eq!(three_j(HALF, one, SpinHalfInt::from_twice(5), p(1), p(0), p(-1)), 0.0);
        let v = three_j(one, one, one, p(2), p(-2), p(0));
        assert!((v - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn projection_parsing() {
        assert_eq!(Projection::parse("-3/2").unwrap(), Projection::from_twice(-3));
        assert_eq!(Projection::parse("1").unwrap(), Projection::from_twice(2));
        assert!(Projection::parse("2/3").is_err());
        assert_eq!(Projection::from_twice(-1).to_string(), "-1/2");
    }

    #[test]
    fn calibrated_scheme_hits_eight_ns() {
        let s = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
        assert!((s.omega0() - std::f64::consts::PI / 16e-9).abs() / s.omega0() < 1e-12);
        assert_eq!(s.lines.len(), 6);
    }

    #[test]
    fn overrides_round_trip_through_levels() {
        let s = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
        let list: Vec<LineFrequency> =
            s.lines.iter().map(|l| LineFrequency { m_g: l.m_g, m_e: l.m_e, omega: l.omega_hf }).collect();
        let cfg = HyperfineConfig { override_frequencies: Some(list.clone()), ..HyperfineConfig::calibrated() };
        let t = build_level_scheme(&cfg).unwrap();
        for (a, b) in s.lines.iter().zip(&t.lines) {
            assert!((a.omega_hf - b.omega_hf).abs() < 1e-3);
        }
        assert!((s.omega1() - t.omega1()).abs() / s.omega1() < 1e-12);

        let short = HyperfineConfig { override_frequencies: Some(list[..5].to_vec()), ..HyperfineConfig::calibrated() };
        assert!(build_level_scheme(&short).is_err());
        let mut broken = list;
        broken[0].omega *= 1.5;
        let cfg = HyperfineConfig { override_frequencies: Some(broken), ..HyperfineConfig::calibrated() };
        assert!(build_level_scheme(&cfg).is_err());
    }
}
