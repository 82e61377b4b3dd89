use std::f64::consts::FRAC_1_SQRT_2;

use nfs_core::angular::*;
use nfs_core::currents::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn scheme() -> LevelScheme {
    build_level_scheme(&HyperfineConfig::calibrated()).unwrap()
}

fn p(twice: i32) -> Projection {
    Projection::from_twice(twice)
}

fn close(a: C64, b: C64, tol: f64) -> bool {
    (a - b).norm() < tol
}

#[test]
fn spherical_vectors() {
    let z = C64::new(0.0, 0.0);
    let n0 = spherical_unit_vector(0).unwrap();
    assert_eq!(n0, [z, z, C64::new(1.0, 0.0)]);
    let np = spherical_unit_vector(1).unwrap();
    assert!(close(np[0], C64::new(-FRAC_1_SQRT_2, 0.0), 1e-16));
    assert!(close(np[1], C64::new(0.0, -FRAC_1_SQRT_2), 1e-16));
    for q in -1..=1 {
        let n = spherical_unit_vector(q).unwrap();
        assert!((hdot(&n, &n).re - 1.0).abs() < 1e-15);
    }
    // n_{-1} = -conj(n_{+1})
    let nm = spherical_unit_vector(-1).unwrap();
    for (a, b) in nm.iter().zip(&np) {
        assert!(close(*a, -b.conj(), 1e-16));
    }
    assert!(spherical_unit_vector(2).is_err());
}

#[test]
fn current_directions_in_standard_geometry() {
    let consts = NuclearConstants::fe57();
    let sch = scheme();
    let geom = Geometry::standard(&consts);
    for l in &sch.lines {
        let e = current_element(&sch, l, &geom, &consts).unwrap();
        let j = e.j_vec;
        if l.q == 0 {
            // e_y x e_z = e_x
            assert!(j[1].norm() < 1e-30 && j[2].norm() < 1e-30 && j[0].norm() > 0.0);
        } else {
            assert!(j[0].norm() < 1e-30 && j[1].norm() < 1e-30 && j[2].norm() > 0.0);
        }
    }
}

#[test]
fn stretched_to_inner_strength_is_three() {
    let sch = scheme();
    let geom = Geometry::standard(&NuclearConstants::fe57());
    let mag = |g, e| cnorm(&unit_current(&sch, p(g), p(e), &geom)).powi(2);
    assert!((mag(1, 3) / mag(-1, 1) - 3.0).abs() < 1e-12);
    assert!((mag(-1, -3) / mag(1, -1) - 3.0).abs() < 1e-12);
}

#[test]
fn line_strength_sum_rule() {
    // squared 3-j values from the 1/2 x 1 -> 3/2 Clebsch-Gordan table divided by 2 I_e + 1
    let oracle = |g: i32, e: i32| match (g, e) {
        (1, 3) | (-1, -3) => 1.0 / 4.0,
        (1, 1) | (-1, -1) => (2.0 / 3.0) / 4.0,
        (1, -1) | (-1, 1) => (1.0 / 3.0) / 4.0,
        _ => 0.0,
    };
    let (ig, ie, one) = (SpinHalfInt::from_twice(1), SpinHalfInt::from_twice(3), SpinHalfInt::from_twice(2));
    let mut total = 0.0;
    for g in [-1, 1] {
        let mut per_ground = 0.0;
        for e in [-3, -1, 1, 3] {
            let v = three_j(ig, one, ie, p(-g), p(g - e), p(e)).powi(2);
            assert!((v - oracle(g, e)).abs() < 1e-15, "({g}, {e})");
            per_ground += v;
        }
        assert!((per_ground - 0.5).abs() < 1e-15);
        total += per_ground;
    }
    assert!((total - 1.0).abs() < 1e-15);
}

#[test]
fn unit_currents_resolve_transverse_projector() {
    let sch = scheme();
    let geom = Geometry::standard(&NuclearConstants::fe57());
    let mut m = [[C64::new(0.0, 0.0); 3]; 3];
    for l in &sch.lines {
        let j = unit_current(&sch, l.m_g, l.m_e, &geom);
        for r in 0..3 {
            for c in 0..3 {
                m[r][c] += j[r] * j[c].conj();
            }
        }
    }
    // 2 ground states; the sum is 2 x (1 - k k^T) / 2 per ground state
    let expect = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
    for r in 0..3 {
        for c in 0..3 {
            assert!(close(m[r][c], C64::from(expect[r][c]), 1e-14), "{r}{c}: {}", m[r][c]);
        }
    }
}

#[test]
fn time_current_examples() {
    let consts = NuclearConstants::fe57();
    let sch = scheme();
    let geom = Geometry::standard(&consts);
    let e = current_element(&sch, &sch.lines[0], &geom, &consts).unwrap();
    assert_eq!(time_current(&e, 0.0, &consts), e.j_vec);
    let r = cnorm(&time_current(&e, consts.tau_s, &consts)) / cnorm(&e.j_vec);
    assert!((r - (-0.5f64).exp()).abs() < 1e-14);
}

#[test]
fn coupling_selects_delta_m_zero() {
    let consts = NuclearConstants::fe57();
    let sch = scheme();
    let geom = Geometry::standard(&consts);
    let mut nonzero = 0;
    for l in &sch.lines {
        let e = current_element(&sch, l, &geom, &consts).unwrap();
        let c = coupling(&e, &geom.e0);
        assert_eq!(coupling(&e, &[0.0; 3]), C64::new(0.0, 0.0));
        if l.q == 0 {
            assert!(c.norm() > 0.0 && c.im.abs() <= 1e-15 * c.norm());
            nonzero += 1;
        } else {
            assert_eq!(c.norm(), 0.0);
        }
    }
    assert_eq!(nonzero, 2);
}

#[test]
fn doubling_radiative_width_scales_currents_by_root_two() {
    let a = NuclearConstants::fe57();
    // 1 + alpha halves when alpha goes from 8 to 3.5
    let b = NuclearConstants::new(a.e0_ev, a.tau_s, 3.5).unwrap();
    assert!((b.gamma_gamma_ev() / a.gamma_gamma_ev() - 2.0).abs() < 1e-14);
    let sch = scheme();
    let geom = Geometry::standard(&a);
    for l in &sch.lines {
        let ja = current_element(&sch, l, &geom, &a).unwrap().j_vec;
        let jb = current_element(&sch, l, &geom, &b).unwrap().j_vec;
        for (x, y) in ja.iter().zip(&jb) {
            assert!(close(*y, x * 2f64.sqrt(), 1e-12 * x.norm().max(1e-300)));
        }
    }
}

#[test]
fn invalid_geometry_is_rejected() {
    let consts = NuclearConstants::fe57();
    let k = consts.wavenumber();
    assert!(Geometry::new([0.0, 2.0, 0.0], k, [1.0, 0.0, 0.0], Frame::identity()).is_err());
    assert!(Geometry::new([0.0, 1.0, 0.0], k, [0.0, 1.0, 0.0], Frame::identity()).is_err());
    assert!(Geometry::new([0.0, 1.0, 0.0], -1.0, [1.0, 0.0, 0.0], Frame::identity()).is_err());
}

proptest! {
    #[test]
    fn currents_are_transverse(a in -3.2f64..3.2, b in -3.2f64..3.2, c in -3.2f64..3.2) {
        let sch = scheme();
        let geom = Geometry::standard(&NuclearConstants::fe57()).with_frame(Frame::from_euler(a, b, c));
        for l in &sch.lines {
            let j = unit_current(&sch, l.m_g, l.m_e, &geom);
            prop_assert!(j[1].norm() < 1e-14);
        }
    }

    #[test]
    fn transverse_projector_is_frame_independent(a in -3.2f64..3.2, b in -3.2f64..3.2, c in -3.2f64..3.2) {
        let sch = scheme();
        let geom = Geometry::standard(&NuclearConstants::fe57()).with_frame(Frame::from_euler(a, b, c));
        let mut m = [[C64::new(0.0, 0.0); 3]; 3];
        for l in &sch.lines {
            let j = unit_current(&sch, l.m_g, l.m_e, &geom);
            for r in 0..3 {
                for s in 0..3 {
                    m[r][s] += j[r] * j[s].conj();
                }
            }
        }
        let expect = [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        for r in 0..3 {
            for s in 0..3 {
                prop_assert!((m[r][s] - expect[r][s]).norm() < 1e-12);
            }
        }
    }
}
