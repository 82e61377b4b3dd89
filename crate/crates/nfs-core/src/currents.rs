//! Nuclear transition currents and their coupling to the incident field.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::angular::{three_j, LevelScheme, Projection, SpinHalfInt, TransitionLine, HBAR_EV_S};
use crate::error::{NfsError, Result};

pub type CVec3 = [C64; 3];
pub type Vec3 = [f64; 3];

const UNIT_TOL: f64 = 1e-12;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn cross(a: &CVec3, b: &CVec3) -> CVec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Hermitian product `a† b`.
pub fn hdot(a: &CVec3, b: &CVec3) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &CVec3) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn complexify(v: &Vec3) -> CVec3 {
    [C64::from(v[0]), C64::from(v[1]), C64::from(v[2])]
}

pub fn scale(a: &CVec3, s: C64) -> CVec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

fn norm3(v: &Vec3) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot3(a: &Vec3, b: &Vec3) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orientation of the quantization frame: columns are the frame axes
/// expressed in lab coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub m: [[f64; 3]; 3],
}

impl Frame {
    pub fn identity() -> Self {
        Frame { m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]] }
    }

    /// Active z-y-z rotation `Rz(alpha) Ry(beta) Rz(gamma)`.
    pub fn from_euler(alpha: f64, beta: f64, gamma: f64) -> Self {
        let rz = |a: f64| {
            let (s, c) = a.sin_cos();
            [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
        };
        let (sb, cb) = beta.sin_cos();
        let ry = [[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]];
        Frame { m: matmul(&matmul(&rz(alpha), &ry), &rz(gamma)) }
    }

    /// Frame reached by rotating this one about its own axes.
    pub fn then(&self, alpha: f64, beta: f64, gamma: f64) -> Self {
        Frame { m: matmul(&self.m, &Frame::from_euler(alpha, beta, gamma).m) }
    }

    pub fn axis(&self) -> Vec3 {
        [self.m[0][2], self.m[1][2], self.m[2][2]]
    }

    pub fn to_lab(&self, v: &CVec3) -> CVec3 {
        let mut out = [C64::new(0.0, 0.0); 3];
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..3).map(|c| v[c] * self.m[r][c]).sum();
        }
        out
    }
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub k_dir: Vec3,
    /// 1/m
    pub k_mag: f64,
    pub e0: Vec3,
    pub frame: Frame,
}

impl Geometry {
    pub fn new(k_dir: Vec3, k_mag: f64, e0: Vec3, frame: Frame) -> Result<Self> {
        let g = Geometry { k_dir, k_mag, e0, frame };
        g.validate()?;
        Ok(g)
    }

    /// Beam along y, incident polarization along x, field along z.
    pub fn standard(consts: &NuclearConstants) -> Self {
        Geometry { k_dir: [0.0, 1.0, 0.0], k_mag: consts.wavenumber(), e0: [1.0, 0.0, 0.0], frame: Frame::identity() }
    }

    pub fn validate(&self) -> Result<()> {
        if (norm3(&self.k_dir) - 1.0).abs() > UNIT_TOL {
            return Err(NfsError::Input("wave-vector direction must be a unit vector".into()));
        }
        let n0 = norm3(&self.e0);
        if (n0 - 1.0).abs() > UNIT_TOL && n0 != 0.0 {
            return Err(NfsError::Input("incident polarization must be a unit vector".into()));
        }
        if dot3(&self.k_dir, &self.e0).abs() > UNIT_TOL {
            return Err(NfsError::Input("incident polarization must be transverse to the beam".into()));
        }
        if !(self.k_mag > 0.0) {
            return Err(NfsError::Input("wavenumber must be positive".into()));
        }
        Ok(())
    }

    pub fn quantization_axis(&self) -> Vec3 {
        self.frame.axis()
    }

    pub fn with_frame(&self, frame: Frame) -> Self {
        Geometry { frame, ..*self }
    }

    pub fn sigma_dir(&self) -> Vec3 {
        self.e0
    }

    /// `e0 x k`, the transverse direction orthogonal to the incident polarization.
    pub fn pi_dir(&self) -> Vec3 {
        let (a, b) = (self.e0, self.k_dir);
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuclearConstants {
    pub e0_ev: f64,
    pub tau_s: f64,
    pub ic_ratio: f64,
}

impl NuclearConstants {
    pub fn new(e0_ev: f64, tau_s: f64, ic_ratio: f64) -> Result<Self> {
        if !(e0_ev > 0.0 && tau_s > 0.0 && ic_ratio >= 0.0) {
            return Err(NfsError::Input("nuclear constants must be positive".into()));
        }
        Ok(NuclearConstants { e0_ev, tau_s, ic_ratio })
    }

    pub fn fe57() -> Self {
        NuclearConstants { e0_ev: 14_413.0, tau_s: 141e-9, ic_ratio: 8.0 }
    }

    pub fn gamma0_ev(&self) -> f64 {
        HBAR_EV_S / self.tau_s
    }

    pub fn gamma_gamma_ev(&self) -> f64 {
        self.gamma0_ev() / (1.0 + self.ic_ratio)
    }

    pub fn omega_transition(&self) -> f64 {
        self.e0_ev / HBAR_EV_S
    }

    pub fn wavenumber(&self) -> f64 {
        self.omega_transition() / SPEED_OF_LIGHT
    }

    /// `[3 (2 I_e + 1) c^5 Gamma_gamma / (4 omega_0^3)]^(1/2)` with the width as a rate.
    pub fn current_prefactor(&self, i_e: SpinHalfInt) -> f64 {
        let rate = self.gamma_gamma_ev() / HBAR_EV_S;
        let w = self.omega_transition();
        (3.0 * (i_e.twice() as f64 + 1.0) * SPEED_OF_LIGHT.powi(5) * rate / (4.0 * w.powi(3))).sqrt()
    }
}

/// Spherical basis vector `n_q` in frame coordinates.
pub fn spherical_unit_vector(q: i32) -> Result<CVec3> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    match q {
        0 => Ok([z, z, C64::new(1.0, 0.0)]),
        1 => Ok([C64::new(-r, 0.0), C64::new(0.0, -r), z]),
        -1 => Ok([C64::new(r, 0.0), C64::new(0.0, -r), z]),
        _ => Err(NfsError::Input(format!("spherical index must be -1, 0 or 1, got {q}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurrentMatrixElement {
    pub line: TransitionLine,
    pub j_vec: CVec3,
    pub prefactor: f64,
}

/// Current for the coherence `(m_g, m_e)` with unit direction `k`, without
/// the physical prefactor. Pairs with `|m_e - m_g| > 1` give zero.
pub fn reduced_current(i_g: SpinHalfInt, i_e: SpinHalfInt, m_g: Projection, m_e: Projection, k_dir: &Vec3, frame: &Frame) -> CVec3 {
    let zero = [C64::new(0.0, 0.0); 3];
    let dm2 = m_e.twice() - m_g.twice();
    if dm2.abs() > 2 {
        return zero;
    }
    // the 3-j selects the spherical component q = m_g - m_e
    let q = -dm2 / 2;
    let one = SpinHalfInt::from_twice(2);
    let tj = three_j(i_g, one, i_e, m_g.neg(), Projection::from_twice(-dm2), m_e);
    if tj == 0.0 {
        return zero;
    }
    let phase_exp = (i_g.twice() as i32 - m_g.twice()) / 2 + q;
    let sign = if phase_exp.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let n_lab = frame.to_lab(&spherical_unit_vector(-q).expect("|q| <= 1"));
    scale(&cross(&complexify(k_dir), &n_lab), C64::from(sign * tj))
}

/// Currents normalized so that the sum of `j j†` over all lines is the
/// transverse projector.
pub fn unit_current(scheme: &LevelScheme, m_g: Projection, m_e: Projection, geom: &Geometry) -> CVec3 {
    let j = reduced_current(scheme.i_g, scheme.i_e, m_g, m_e, &geom.k_dir, &geom.frame);
    scale(&j, C64::from(3f64.sqrt()))
}

pub fn current_element(scheme: &LevelScheme, line: &TransitionLine, geom: &Geometry, consts: &NuclearConstants) -> Result<CurrentMatrixElement> {
    geom.validate()?;
    let prefactor = consts.current_prefactor(scheme.i_e);
    let j = reduced_current(scheme.i_g, scheme.i_e, line.m_g, line.m_e, &geom.k_dir, &geom.frame);
    Ok(CurrentMatrixElement { line: *line, j_vec: scale(&j, C64::from(prefactor * geom.k_mag)), prefactor })
}

/// `J(t) = j exp(-i Omega t - t / (2 tau))`.
pub fn time_current(elem: &CurrentMatrixElement, t: f64, consts: &NuclearConstants) -> CVec3 {
    let f = C64::from_polar((-0.5 * t / consts.tau_s).exp(), -elem.line.omega_hf * t);
    scale(&elem.j_vec, f)
}

/// `j† e0`
pub fn coupling(elem: &CurrentMatrixElement, e0: &Vec3) -> C64 {
    hdot(&elem.j_vec, &complexify(e0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angular::{build_level_scheme, HyperfineConfig};

    #[test]
    fn euler_frame_axis() {
        let f = Frame::from_euler(-std::f64::consts::FRAC_PI_2, -std::f64::consts::FRAC_PI_2, 0.0);
        let a = f.axis();
        assert!((a[1] - 1.0).abs() < 1e-15 && a[0].abs() < 1e-15 && a[2].abs() < 1e-15);
    }

    #[test]
    fn time_current_decays_with_lifetime() {
        let consts = NuclearConstants::fe57();
        let scheme = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
        let g = Geometry::standard(&consts);
        let e = current_element(&scheme, &scheme.lines[1], &g, &consts).unwrap();
        let r = cnorm(&time_current(&e, consts.tau_s, &consts)) / cnorm(&e.j_vec);
        assert!((r - (-0.5f64).exp()).abs() < 1e-14);
        assert_eq!(time_current(&e, 0.0, &consts), e.j_vec);
    }

    #[test]
    fn geometry_rejects_longitudinal_polarization() {
        let consts = NuclearConstants::fe57();
        assert!(Geometry::new([0.0, 1.0, 0.0], 1.0, [0.0, 1.0, 0.0], Frame::identity()).is_err());
        assert!(Geometry::new([0.0, 1.0, 0.0], consts.wavenumber(), [0.0, 0.0, 1.0], Frame::identity()).is_ok());
    }
}
