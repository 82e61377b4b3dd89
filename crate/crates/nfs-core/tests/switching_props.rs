use std::f64::consts::PI;

use nfs_core::angular::*;
use nfs_core::currents::*;
use nfs_core::scattering::SampleConfig;
use nfs_core::switching::*;
use num_complex::Complex64 as C64;
use proptest::prelude::*;

const NS: f64 = 1e-9;

fn setup(xi: f64) -> AmplitudeSet {
    let consts = NuclearConstants::fe57();
    let sch = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
    initial_amplitudes(&Geometry::standard(&consts), &sch, &SampleConfig::new(xi).unwrap()).unwrap()
}

fn at(t: f64, rotation: RotationSpec) -> SwitchingEvent {
    SwitchingEvent { time: t, rotation }
}

fn max_diff(a: &AmplitudeSet, b: &AmplitudeSet) -> f64 {
    let mut m: f64 = 0.0;
    for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
        for (u, v) in x.vector.iter().zip(&y.vector) {
            m = m.max((u - v).norm());
        }
    }
    m
}

/// Coefficient of the line's own unit current in its amplitude vector.
fn line_coefficient(set: &AmplitudeSet, line: &TransitionLine) -> C64 {
    let j = unit_current(&set.scheme, line.m_g, line.m_e, &set.geometry);
    let a = set.amplitude(line.m_g, line.m_e).unwrap();
    hdot(&j, &a.vector) / hdot(&j, &j).re
}

#[test]
fn standard_initial_amplitudes() {
    let init = setup(5.0);
    let nonzero: Vec<_> = init.amplitudes.iter().filter(|a| cnorm(&a.vector) > 0.0).collect();
    assert_eq!(nonzero.len(), 2);
    for a in nonzero {
        assert_eq!(a.line.q, 0);
        assert!(a.vector[1].norm() == 0.0 && a.vector[2].norm() == 0.0);
    }
}

#[test]
fn longitudinal_polarization_does_not_couple() {
    // e0 along k along the field: every current is transverse to k
    let sch = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
    let ez = [0.0, 0.0, 1.0];
    for l in &sch.lines {
        let j = reduced_current(sch.i_g, sch.i_e, l.m_g, l.m_e, &ez, &Frame::identity());
        assert!(hdot(&j, &complexify(&ez)).norm() < 1e-16);
    }
    let consts = NuclearConstants::fe57();
    let g = Geometry { k_dir: ez, k_mag: consts.wavenumber(), e0: ez, frame: Frame::identity() };
    assert!(initial_amplitudes(&g, &sch, &SampleConfig::new(1.0).unwrap()).is_err());
    let dark = Geometry { e0: [0.0; 3], ..Geometry::standard(&consts) };
    let set = initial_amplitudes(&dark, &sch, &SampleConfig::new(1.0).unwrap()).unwrap();
    assert_eq!(set.max_amplitude(), 0.0);
}

#[test]
fn amplitudes_are_linear_in_thickness() {
    let a = setup(1.5);
    let b = setup(3.0);
    for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
        for (u, v) in x.vector.iter().zip(&y.vector) {
            assert!((u * 2.0 - v).norm() < 1e-15);
        }
    }
}

#[test]
fn identity_switch_is_a_no_op() {
    let init = setup(5.0);
    let s = apply_switch(&init, &at(13.0 * NS, RotationSpec::identity())).unwrap();
    let free = init.coherence_at(13.0 * NS).unwrap();
    for (x, y) in s.coherence.data.iter().zip(&free.data) {
        assert!((x - y).norm() < 1e-15);
    }
    let s0 = apply_switch(&init, &at(0.0, RotationSpec::identity())).unwrap();
    assert!(max_diff(&s0, &init) < 1e-15);
}

#[test]
fn switch_before_validity_is_rejected() {
    let init = setup(5.0);
    let s = apply_switch(&init, &at(10.0 * NS, RotationSpec::beam_parallel())).unwrap();
    assert!(apply_switch(&s, &at(9.0 * NS, RotationSpec::back_to_axis())).is_err());
}

#[test]
fn suppression_at_first_beat_minimum() {
    let init = setup(5.0);
    let t1 = suppression_times(&init.scheme, 1)[0];
    assert!((t1 - 8.0 * NS).abs() < 1e-18);
    let pre: f64 = init.amplitudes.iter().map(|a| cnorm(&a.vector).powi(2)).sum::<f64>().sqrt();
    let s = apply_switch(&init, &at(t1, RotationSpec::beam_parallel())).unwrap();
    for a in &s.amplitudes {
        assert!(cnorm(&a.vector) < 1e-12 * pre, "{:?}", a.line);
    }
}

#[test]
fn suppression_time_ladder() {
    let sch = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
    let t = suppression_times(&sch, 4);
    assert!((t[1] - 24.0 * NS).abs() < 1e-18);
    for w in t.windows(2) {
        assert!((w[1] - w[0] - PI / sch.omega0()).abs() < 1e-20);
    }
}

#[test]
fn in_plane_switch_at_beat_maximum_creates_delta_m_one() {
    let init = setup(5.0);
    let t = PI / init.scheme.omega0();
    let s = apply_switch(&init, &at(t, RotationSpec::in_plane(PI / 4.0))).unwrap();
    let dm1: Vec<f64> = s.amplitudes.iter().filter(|a| a.line.q != 0).map(|a| cnorm(&a.vector)).collect();
    assert!(dm1.iter().all(|&x| x > 1e-3 * s.amplitude_scale()));
}

#[test]
fn closed_form_examples() {
    let sch = build_level_scheme(&HyperfineConfig::calibrated()).unwrap();
    let t1 = suppression_times(&sch, 1)[0];
    let (f, lines) = two_switch_closed_form(t1, t1 * (1.0 + 1e-15), &sch).unwrap();
    assert!(f.delta_m0.abs() < 1e-6 && (f.inner - 2.0).abs() < 1e-9 && (f.stretched - 2.0).abs() < 1e-9);
    assert_eq!(lines.len(), 6);
    assert!(two_switch_closed_form(9.0 * NS, 20.0 * NS, &sch).is_err());
    assert!(two_switch_closed_form(t1, t1, &sch).is_err());

    // root of the Δm = 0 form near 46 ns
    let g = |t2: f64| two_switch_closed_form(t1, t2, &sch).unwrap().0.delta_m0;
    let (mut a, mut b) = (40.0 * NS, 50.0 * NS);
    assert!(g(a) * g(b) < 0.0);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if g(a) * g(m) <= 0.0 {
            b = m
        } else {
            a = m
        }
    }
    assert!((a - 46.0 * NS).abs() < 1.0 * NS, "{}", a / NS);
}

#[test]
fn general_switch_matches_closed_form() {
    let init = setup(5.0);
    let t1 = suppression_times(&init.scheme, 1)[0];
    let stored = apply_switch(&init, &at(t1, RotationSpec::beam_parallel())).unwrap();
    let t2s: Vec<f64> = (1..=584).map(|k| t1 + k as f64 * 0.5 * NS).filter(|&t| t < 300.0 * NS).collect();
    let sets: Vec<AmplitudeSet> =
        t2s.iter().map(|&t2| apply_switch(&stored, &at(t2, RotationSpec::back_to_axis())).unwrap()).collect();
    for line in &init.scheme.lines {
        let c: Vec<C64> = sets.iter().map(|s| line_coefficient(s, line)).collect();
        let f: Vec<f64> =
            t2s.iter().map(|&t2| two_switch_closed_form(t1, t2, &init.scheme).unwrap().0.for_line(line)).collect();
        let k: C64 = c.iter().zip(&f).map(|(x, y)| x * y).sum::<C64>() / f.iter().map(|y| y * y).sum::<f64>();
        let scale = c.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        let dev = c.iter().zip(&f).fold(0.0f64, |m, (x, y)| m.max((x - k * y).norm()));
        assert!(dev < 1e-10 * scale, "{line:?}: {dev:e} of {scale:e}");
    }
}

#[test]
fn designer_finds_pi_release_near_46_ns() {
    let init = setup(5.0);
    let t1 = suppression_times(&init.scheme, 1)[0];
    let stored = apply_switch(&init, &at(t1, RotationSpec::beam_parallel())).unwrap();
    let c = design_release_time(&stored, RotationSpec::back_to_axis(), ReleaseTarget::PiOnly, (t1, 300.0 * NS), &Default::default());
    assert!(!c.is_empty());
    assert!(c.windows(2).all(|w| w[0].time < w[1].time));
    assert!((c[0].time - 46.0 * NS).abs() < 1.0 * NS, "{}", c[0].time / NS);
    let s = apply_switch(&stored, &at(c[0].time, RotationSpec::back_to_axis())).unwrap();
    assert!(s.residuals().sigma < 1e-6);
    assert!(s.residuals().pi > 0.1);
}

#[test]
fn designer_returns_nothing_for_empty_window() {
    let init = setup(5.0);
    let stored = apply_switch(&init, &at(8.0 * NS, RotationSpec::beam_parallel())).unwrap();
    let opts = DesignOptions::default();
    assert!(design_release_time(&stored, RotationSpec::back_to_axis(), ReleaseTarget::PiOnly, (20.0 * NS, 20.0 * NS), &opts).is_empty());
    assert!(design_release_time(&stored, RotationSpec::back_to_axis(), ReleaseTarget::PiOnly, (9.0 * NS, 30.0 * NS), &opts).is_empty());
}

#[test]
fn four_switch_plan_shape() {
    let init = setup(5.0);
    let plan = four_switch_plan(Polarization::Pi, &init, 300.0 * NS, &Default::default()).unwrap();
    let t = plan.sequence.times();
    assert_eq!(t.len(), 4);
    assert!((t[0] - 8.0 * NS).abs() < 1e-18);
    assert!(t.windows(2).all(|w| w[0] < w[1]));
    assert!(plan.report[0].residuals.total < 1e-12);
    assert_eq!(plan.report[3].target, ReleaseTarget::PiOnly);
    let short = four_switch_plan(Polarization::Pi, &init, 40.0 * NS, &Default::default());
    assert!(matches!(short, Err(nfs_core::NfsError::NoCandidate { stage: 2, .. })));
}

proptest! {
    #[test]
    fn in_plane_rotations_compose(b1 in -3.1f64..3.1, b2 in -3.1f64..3.1, t in 0.5f64..200.0) {
        let init = setup(5.0);
        let one = apply_switch(&apply_switch(&init, &at(t * NS, RotationSpec::in_plane(b1))).unwrap(), &at(t * NS, RotationSpec::in_plane(b2))).unwrap();
        let both = apply_switch(&init, &at(t * NS, RotationSpec::in_plane(b1 + b2))).unwrap();
        prop_assert!(max_diff(&one, &both) < 1e-12 * init.amplitude_scale());
    }

    #[test]
    fn switching_preserves_excitation(a in -3.1f64..3.1, b in -3.1f64..3.1, g in -3.1f64..3.1, t in 0.0f64..300.0) {
        let init = setup(5.0);
        let s = apply_switch(&init, &at(t * NS, RotationSpec::new(a, b, g))).unwrap();
        let before: f64 = init.coherence.excited_populations().iter().sum();
        let after: f64 = s.coherence.excited_populations().iter().sum();
        prop_assert!((before - after).abs() < 1e-12 * before);
        prop_assert!((s.coherence.norm() - init.coherence.norm()).abs() < 1e-12 * init.coherence.norm());
        prop_assert!((s.amplitude_scale() - init.amplitude_scale()).abs() < 1e-12 * init.amplitude_scale());
    }
}
