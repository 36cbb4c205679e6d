use std::f64::consts::PI;

use nalgebra::Matrix3;
use num_complex::Complex64;
use proptest::prelude::*;

use kasamawashi::conserved::moving_energy;
use kasamawashi::dynamics::{constraint_residual, reduced_vector_field, vector_field_fform};
use kasamawashi::integrator::{integrate_full, integrate_reduced, orthogonality_defect, IntegratorConfig, StopReason};
use kasamawashi::linearization::{
    block4_analytic, classify_biquadratic, jacobian_fd, vertex_spectrum, Block4, EigenType,
};
use kasamawashi::output::fmt17;
use kasamawashi::{FullState, Profile, ReducedState, SystemParams};

fn profile() -> impl Strategy<Value = Profile> {
    prop_oneof![
        Just(Profile::flat()),
        (-0.9..0.9f64).prop_map(|c| Profile::paraboloid(c).unwrap()),
        (-0.8..-0.05f64).prop_map(|c| Profile::concave_cap(c).unwrap()),
        (-0.5..0.5f64, -0.2..0.2f64).prop_map(|(a, b)| Profile::quartic(a, b).unwrap()),
        (-0.5..0.5f64, -0.1..0.1f64, -0.02..0.02f64).prop_map(|(a, b, c)| Profile::polynomial(vec![a, b, c]).unwrap()),
    ]
}

fn params(alpha: bool) -> impl Strategy<Value = SystemParams> {
    let a = if alpha { 0.0..0.7f64 } else { 0.0..f64::MIN_POSITIVE };
    (0.05..0.95f64, 0.2..3.0f64, -3.0..3.0f64, a)
        .prop_map(|(k, g, om, al)| SystemParams::new(k, g, om, if al < 1e-300 { 0.0 } else { al }).unwrap())
}

fn state(r_lo: f64, r_hi: f64) -> impl Strategy<Value = ReducedState> {
    (r_lo..r_hi, 0.0..2.0 * PI, -2.0..2.0f64, -2.0..2.0f64, -5.0..5.0f64)
        .prop_map(|(r, th, v1, v2, w)| ReducedState::new([r * th.cos(), r * th.sin()], [v1, v2], w))
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn both_forms_of_the_field_agree(s in profile(), p in params(true), st in state(0.05, 3.0)) {
        let a = reduced_vector_field(&p, &s, &st).unwrap().to_array();
        let b = vector_field_fform(&p, &s, &st).unwrap().to_array();
        for i in 0..5 {
            prop_assert!(close(a[i], b[i], 1e-10), "{i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn rolling_constraint_holds(s in profile(), p in params(true), st in state(0.0, 3.0)) {
        for r in constraint_residual(&p, &s, &st).unwrap() {
            prop_assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_axis_field_is_rotation_equivariant(s in profile(), p in params(false), st in state(0.0, 2.0), th in 0.0..2.0 * PI) {
        let (sn, c) = th.sin_cos();
        let rot = |a: [f64; 2]| [c * a[0] - sn * a[1], sn * a[0] + c * a[1]];
        let turned = ReducedState::new(rot(st.x), rot(st.v), st.omega_z);
        let a = reduced_vector_field(&p, &s, &st).unwrap();
        let b = reduced_vector_field(&p, &s, &turned).unwrap();
        let dv = rot(a.dv);
        prop_assert!(close(b.dv[0], dv[0], 1e-12) && close(b.dv[1], dv[1], 1e-12));
        prop_assert!(close(b.domega_z, a.domega_z, 1e-12));
    }

    #[test]
    fn reversing_time_flips_velocities_and_rotation(s in profile(), p in params(true), st in state(0.0, 2.0)) {
        let back = p.with_omega(-p.omega()).unwrap();
        let rev = ReducedState::new(st.x, [-st.v[0], -st.v[1]], -st.omega_z);
        let a = reduced_vector_field(&p, &s, &st).unwrap();
        let b = reduced_vector_field(&back, &s, &rev).unwrap();
        prop_assert!(close(a.dv[0], b.dv[0], 1e-12) && close(a.dv[1], b.dv[1], 1e-12));
        prop_assert!(close(a.domega_z, b.domega_z, 1e-12));
    }

    #[test]
    fn moving_energy_is_a_first_integral(s in profile(), p in params(false), st in state(0.0, 2.0)) {
        let d = reduced_vector_field(&p, &s, &st).unwrap().to_array();
        let y = st.to_array();
        let h = 1e-5;
        let mut rate = 0.0;
        let mut scale = 0.0f64;
        for i in 0..5 {
            let mut up = y;
            let mut dn = y;
            up[i] += h;
            dn[i] -= h;
            let g = (moving_energy(&p, &s, &ReducedState::from_array(up)).unwrap()
                - moving_energy(&p, &s, &ReducedState::from_array(dn)).unwrap())
                / (2.0 * h);
            rate += g * d[i];
            scale = scale.max((g * d[i]).abs());
        }
        prop_assert!(rate.abs() <= 1e-6 * scale.max(1.0), "dE/dt = {rate}");
    }

    #[test]
    fn biquadratic_roots_and_labels(b in -5.0..5.0f64, c in -5.0..5.0f64) {
        let s = classify_biquadratic(b, c, None);
        for l in s.eigenvalues {
            let l2 = l * l;
            let res = l2 * l2 + 2.0 * b * l2 + c;
            prop_assert!(res.norm() < 1e-9 * (1.0 + b.abs() + c.abs()), "{l}: {res}");
        }
        let mut got = s.root_types();
        let mut want = s.types;
        got.sort();
        want.sort();
        prop_assert_eq!(got, want);
        let unstable = s.eigenvalues.iter().any(|l| l.re > s.eps);
        prop_assert_eq!(unstable, !s.is_spectrally_stable());
    }

    #[test]
    fn vertex_spectrum_matches_eigen_solver(f2 in -0.9..0.9f64, wz in -12.0..12.0f64, om in -12.0..12.0f64) {
        let p = SystemParams::homogeneous(om);
        let spec = vertex_spectrum(&p, f2, wz).unwrap();
        let prof = if f2 == 0.0 { Profile::flat() } else { Profile::paraboloid(f2).unwrap() };
        let j = jacobian_fd(&p, &prof, &ReducedState::at_rest([0.0, 0.0], wz)).unwrap();
        // Shifted so the QR iteration does not stall on the zero diagonal.
        let shift = 0.37;
        let m = Block4::from_jacobian(&j).to_matrix() + nalgebra::Matrix4::identity() * shift;
        let schur = nalgebra::linalg::Schur::try_new(m, f64::EPSILON, 100_000).expect("Schur iteration converges");
        let numeric: Vec<Complex64> = schur.complex_eigenvalues().iter().map(|l| l - shift).collect();
        for l in spec.eigenvalues {
            let nearest = numeric.iter().map(|m| (m - l).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(nearest < 1e-4 * (1.0 + l.norm()), "{l} not among {numeric:?}");
        }
    }

    #[test]
    fn block_eigenvectors_are_null_vectors(f2 in -0.9..0.9f64, wz in -12.0..12.0f64, om in -5.0..5.0f64) {
        let p = SystemParams::homogeneous(om);
        let prof = Profile::paraboloid(f2).unwrap();
        let b = block4_analytic(&p, &prof, 0.0, wz).unwrap();
        let m = b.to_matrix().map(|x| Complex64::new(x, 0.0));
        for l in vertex_spectrum(&p, f2, wz).unwrap().eigenvalues {
            if l.norm() < 1e-6 {
                continue;
            }
            let v = nalgebra::Vector4::from(b.eigenvector(l));
            let res = m * v - v * l;
            prop_assert!(res.norm() < 1e-9 * (1.0 + l.norm()), "{l}: {}", res.norm());
        }
    }

    #[test]
    fn integration_retraces_its_path(s in profile(), p in params(true), st in state(0.0, 1.0)) {
        let fwd = integrate_reduced(&p, &s, st, &IntegratorConfig::new(2.0, 1.0).with_tolerances(1e-12, 1e-14)).unwrap();
        prop_assume!(fwd.stop == StopReason::Completed);
        let back = integrate_reduced(&p, &s, fwd.last_state(), &IntegratorConfig::new(-2.0, 1.0).with_tolerances(1e-12, 1e-14)).unwrap();
        prop_assume!(back.stop == StopReason::Completed);
        let (a, b) = (st.to_array(), back.last_state().to_array());
        for i in 0..5 {
            prop_assert!((a[i] - b[i]).abs() < 1e-7 * (1.0 + a[i].abs()), "{i}: {} vs {}", a[i], b[i]);
        }
    }

    #[test]
    fn attitude_stays_a_rotation(s in profile(), p in params(true), st in state(0.0, 1.0)) {
        let fs = FullState::new(st, Matrix3::identity()).unwrap();
        let tr = integrate_full(&p, &s, fs, &IntegratorConfig::new(3.0, 0.5)).unwrap();
        for r in tr.attitudes.as_ref().unwrap() {
            prop_assert!(orthogonality_defect(r) < 1e-12);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn f_jet_matches_psi_jet(s in profile(), r in 0.01..3.0f64) {
        let j = s.f_jet(r).unwrap();
        let h = 1e-5;
        let f = |r: f64| s.psi_jet(0.5 * r * r).unwrap().psi;
        prop_assert!(close(j.f, f(r), 1e-14));
        prop_assert!(close(j.f1, (f(r + h) - f(r - h)) / (2.0 * h), 1e-7));
        prop_assert!(close(j.f2, (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h), 1e-4));
    }

    #[test]
    fn seventeen_digits_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }
}

#[test]
fn eigen_type_of_zero_uses_the_band() {
    assert_eq!(EigenType::of(Complex64::new(1e-12, 0.0), 1e-9), EigenType::Z);
}
