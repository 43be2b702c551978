//! Property tests with oracles written out independently of the library paths.

use cslab_core::bargmann::{bargmann_closed_form, bargmann_quadrature, header, inverse_bargmann, BargmannKernelParams};
use cslab_core::cartan::{gauge_act, CartanData, GaugeElement, WeylGroup};
use cslab_core::frames::{build_frames, build_structures, Level, TeichmullerPoint};
use cslab_core::quantops::{FockOps, LadderKind};
use cslab_core::sections::{hermite_functions, AnySection, FockSection, PositionSection};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;

fn tau_strategy() -> impl Strategy<Value = TeichmullerPoint> {
    (-1.0f64..1.0, 0.3f64..3.0).prop_map(|(a, b)| TeichmullerPoint::new(a, b).unwrap())
}

fn level_strategy() -> impl Strategy<Value = Level> {
    (1i64..6, -2.0f64..2.0).prop_map(|(k, s)| Level::new(k, s).unwrap())
}

fn coeffs(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(a, b)| Complex64::new(a, b)), n)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quaternion_relations(tau in tau_strategy(), level in level_strategy(), rank in 1usize..3) {
        let st = build_structures(&tau, &level, rank);
        let id = DMatrix::<f64>::identity(4 * rank, 4 * rank);
        prop_assert!(max_abs(&(&st.i_c * &st.i_c + &id)) < 1e-12);
        prop_assert!(max_abs(&(&st.j * &st.j + &id)) < 1e-12);
        prop_assert!(max_abs(&(&st.k * &st.k + &id)) < 1e-12);
        prop_assert!(max_abs(&(&st.i_c * &st.j + &st.j * &st.i_c)) < 1e-12);
        prop_assert!(max_abs(&(&st.i_t * &st.i_t + &id)) < 1e-12);
        prop_assert!(max_abs(&(&st.omega_t + st.omega_t.transpose())) < 1e-12);
        // g_t = ω_t I_t is a metric
        prop_assert!(max_abs(&(&st.g_t - st.g_t.transpose())) < 1e-12);
        prop_assert!(st.g_t.clone().cholesky().is_some());
    }

    #[test]
    fn frame_coordinates_round_trip(
        tau in tau_strategy(),
        level in level_strategy(),
        pq in prop::collection::vec(-3.0f64..3.0, 8),
    ) {
        let fr = build_frames(&tau, &level, 1).unwrap();
        let p = DVector::from_column_slice(&pq[..2]);
        let q = DVector::from_column_slice(&pq[2..4]);
        let x = fr.point_from_pq(&p, &q);
        let (p2, q2) = fr.coords_pq(&x).unwrap();
        prop_assert!((p2 - p).amax() < 1e-11);
        prop_assert!((q2 - q).amax() < 1e-11);
        // X_j and Y_j span: the frame matrix reproduces the point
        let direct = DVector::from_column_slice(&pq[4..8]);
        let back = &fr.matrix * (&fr.inverse * &direct);
        prop_assert!((back - direct).amax() < 1e-11);
    }

    #[test]
    fn bargmann_is_isometric(level in level_strategy(), c in coeffs(28)) {
        // rank 1, degree 6: 28 multi-indices in two variables
        let h = header(&TeichmullerPoint::i(), &level, 1, 6);
        let psi = PositionSection { header: h, coeffs: c.clone() };
        let f = bargmann_closed_form(&psi);
        let hbar = 1.0 / level.abs_t();
        let basis = f.basis();
        let fock_norm: f64 = (0..basis.len())
            .map(|i| {
                let a = basis.index(i);
                let deg: u32 = a.iter().sum();
                f.coeffs[i].norm_sqr() * (2.0 * hbar).powi(deg as i32) * a.iter().map(|&n| factorial(n)).product::<f64>()
            })
            .sum();
        let pos_norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((fock_norm - pos_norm).abs() < 1e-11 * pos_norm.max(1.0));
        let back = inverse_bargmann(&f);
        for (a, b) in back.coeffs.iter().zip(&c) {
            prop_assert!((a - b).norm() < 1e-11);
        }
    }

    #[test]
    fn ladder_operators_are_adjoint(level in level_strategy(), j in 0usize..2, f in coeffs(15), g in coeffs(15)) {
        // degree 5 truncation, inputs supported in degree ≤ 4 so a* stays inside
        let degree = 5;
        let ops = FockOps::new(1, degree, &level);
        let h = header(&TeichmullerPoint::i(), &level, 1, degree);
        let pad = |v: &[Complex64]| {
            let mut out = vec![Complex64::new(0.0, 0.0); ops.dim()];
            out[..v.len()].copy_from_slice(v);
            out
        };
        let fs = FockSection { header: h, coeffs: pad(&f) };
        let gs = FockSection { header: h, coeffs: pad(&g) };
        let af = FockSection { header: h, coeffs: ops.ladder(j, LadderKind::Annihilate).apply(&fs.coeffs) };
        let cg = FockSection { header: h, coeffs: ops.ladder(j, LadderKind::Create).apply(&gs.coeffs) };
        let lhs = af.inner(&gs).unwrap();
        let rhs = fs.inner(&cg).unwrap();
        prop_assert!((lhs - rhs).norm() < 1e-10 * lhs.norm().max(1.0), "{lhs} vs {rhs}");
    }

    #[test]
    fn gauge_action_composes(
        wa in 0usize..6, wb in 0usize..6,
        shifts in prop::collection::vec(-3i64..4, 8),
        x in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let data = CartanData::su(3);
        let group = WeylGroup::new(&data).unwrap();
        let n = group.order();
        let g = GaugeElement { weyl_index: wa % n, shift_x: shifts[0..2].to_vec(), shift_y: shifts[2..4].to_vec() };
        let h = GaugeElement { weyl_index: wb % n, shift_x: shifts[4..6].to_vec(), shift_y: shifts[6..8].to_vec() };
        let direct = gauge_act(&data, &group, &g, &gauge_act(&data, &group, &h, &x).unwrap()).unwrap();
        let composed = gauge_act(&data, &group, &g.compose(&h, &group), &x).unwrap();
        for (a, b) in direct.iter().zip(&composed) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn section_files_round_trip(level in level_strategy(), tau in tau_strategy(), c in coeffs(10)) {
        let h = header(&tau, &level, 1, 3);
        for s in [
            AnySection::Hermite(PositionSection { header: h, coeffs: c.clone() }),
            AnySection::Fock(FockSection { header: h, coeffs: c.clone() }),
        ] {
            let back = AnySection::from_json(&s.to_json()).unwrap();
            prop_assert_eq!(back, s);
        }
    }

    #[test]
    fn point_text_round_trip(tau in tau_strategy()) {
        let back: TeichmullerPoint = tau.to_string().parse().unwrap();
        prop_assert_eq!(back, tau);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    /// The integral transform of a product of Hermite functions, by quadrature,
    /// against the coefficient-level closed form.
    #[test]
    fn bargmann_quadrature_matches_closed_form(
        n0 in 0usize..4, n1 in 0usize..4,
        z in prop::collection::vec(-0.8f64..0.8, 4),
    ) {
        let level = Level::new(2, 0.5).unwrap();
        let tau = TeichmullerPoint::i();
        let degree = 6;
        let h = header(&tau, &level, 1, degree);
        let mut psi = PositionSection::zeros(h);
        let pos = psi.basis().position(&[n0 as u32, n1 as u32]).unwrap();
        psi.coeffs[pos] = Complex64::new(1.0, 0.0);
        let zc = [Complex64::new(z[0], z[1]), Complex64::new(z[2], z[3])];
        let closed = bargmann_closed_form(&psi).evaluate(&zc).unwrap();
        let hbar = h.hbar();
        let params = BargmannKernelParams::new(&tau, &level, 1);
        let f = |q: &[f64]| {
            let a = hermite_functions(n0 + 1, hbar, q[0])[n0];
            let b = hermite_functions(n1 + 1, hbar, q[1])[n1];
            Complex64::new(a * b, 0.0)
        };
        let quad = bargmann_quadrature(f, &params, &zc, 48);
        prop_assert!((quad - closed).norm() < 1e-9 * closed.norm().max(1.0), "{quad} vs {closed}");
    }
}
