//! Structure tensors, polarisation frames, adapted coordinates and projections.

use cslab_core::cartan::{enumerate_weyl, CartanData};
use cslab_core::frames::{self, build_frames, build_structures, embed_a0, Level, TeichmullerPoint};
use cslab_core::quantops::{curvature_components, i_a0};
use cslab_core::Result;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde_json::json;

use super::{fro, fro_re, max_over, point_json, random_points, record, Ctx};
use crate::report::CheckRecord;

const I: Complex64 = Complex64::new(0.0, 1.0);

struct Sample {
    tau: TeichmullerPoint,
    level: Level,
    rank: usize,
    /// Random vectors of ℝ^{4r}.
    vectors: Vec<DVector<f64>>,
    /// Random vectors of 𝒜₀ = ℝ^{2r}.
    slice: Vec<DVector<f64>>,
}

fn id_minus(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    fro_re(&(m + DMatrix::identity(n, n)))
}

fn cx(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    frames::to_complex(m)
}

pub fn run(ctx: &Ctx) -> Vec<CheckRecord> {
    let mut rng = ctx.rng("frames");
    let mut points = ctx.configured_points();
    points.extend(random_points(&mut rng, 8));
    let mut samples = Vec::new();
    for &(tau, level) in &points {
        for rank in [1usize, 2] {
            let vectors = (0..4).map(|_| DVector::from_fn(4 * rank, |_, _| rng.random_range(-1.0..1.0))).collect();
            let slice = (0..4).map(|_| DVector::from_fn(2 * rank, |_, _| rng.random_range(-1.0..1.0))).collect();
            samples.push(Sample { tau, level, rank, vectors, slice });
        }
    }
    let tol = ctx.cfg.tolerances.frames;
    let inputs = json!({ "points": point_json(&points), "ranks": [1, 2], "seed": ctx.cfg.seed });
    let mut out = Vec::new();
    let mut add = |id: &str, anchor: &str, f: &dyn Fn(&Sample) -> Result<f64>| {
        out.push(record(id, anchor, inputs.clone(), tol, max_over(&samples, f)));
    };

    add("frames.hodge.squares_to_minus_one", "Hodge star on one-forms of the torus", &|s| {
        let h = frames::hodge_matrix(&s.tau);
        Ok((h * h + nalgebra::Matrix2::identity()).norm())
    });
    add("frames.metric.compact_symmetric_positive", "compact metric g = ω·I on the slice", &|s| {
        let g = frames::metric_a0(&s.tau, s.rank);
        let from_forms = frames::symplectic_a0(s.rank) * i_a0(&s.tau, s.rank);
        let lmin = g.clone().symmetric_eigen().eigenvalues.min();
        Ok(fro_re(&(&g - g.transpose())) + fro_re(&(&g - from_forms)) + (-lmin).max(0.0))
    });
    add("frames.quaternion.i_squared", "quaternionic relations", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        Ok(id_minus(&(&st.i_c * &st.i_c)))
    });
    add("frames.quaternion.j_squared", "quaternionic relations", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        Ok(id_minus(&(&st.j * &st.j)))
    });
    add("frames.quaternion.k_squared", "quaternionic relations", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        Ok(id_minus(&(&st.k * &st.k)))
    });
    add("frames.quaternion.anticommute", "quaternionic relations", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        Ok(fro_re(&(&st.j * &st.i_c + &st.k)) + fro_re(&(&st.i_c * &st.j - &st.k)))
    });
    add("frames.quaternion.level_structure_squared", "complex structure of the level", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        Ok(id_minus(&(&st.i_t * &st.i_t)))
    });
    add("frames.symplectic.omega_t_type_11", "ω_t is of type (1,1) for the level structure", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        Ok(fro_re(&(st.i_t.transpose() * &st.omega_t * &st.i_t - &st.omega_t)) / s.level.abs_t())
    });
    add("frames.symplectic.omega_c_type_20", "complex symplectic form is of type (2,0) for J", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let w = cx(&st.omega_re) + cx(&st.omega_im) * I;
        Ok(fro(&(cx(&st.j).transpose() * &w - &w * I)))
    });
    add("frames.symplectic.restriction_to_slice", "ω_t restricted to the slice is kω", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let m = 2 * s.rank;
        let restricted = st.omega_t.view((0, 0), (m, m)).into_owned();
        Ok(fro_re(&(restricted - frames::symplectic_a0(s.rank) * s.level.k as f64)))
    });
    add("frames.metric.level_metric_positive", "g_t = ω_t·I_t is a metric", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let lmin = st.g_t.clone().symmetric_eigen().eigenvalues.min();
        Ok(fro_re(&(&st.g_t - st.g_t.transpose())) / s.level.abs_t() + (-lmin).max(0.0))
    });
    add("frames.frame.x_lagrangian", "polarisation frames are Lagrangian", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let w = DMatrix::from_fn(2 * s.rank, 2 * s.rank, |a, b| (fr.x[a].transpose() * &st.omega_t * &fr.x[b])[(0, 0)]);
        Ok(w.norm() / s.level.abs_t())
    });
    add("frames.frame.y_lagrangian", "polarisation frames are Lagrangian", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let w = DMatrix::from_fn(2 * s.rank, 2 * s.rank, |a, b| (fr.y[a].transpose() * &st.omega_t * &fr.y[b])[(0, 0)]);
        Ok(w.norm() / s.level.abs_t())
    });
    add("frames.frame.dual_pairing", "ω_t(X_a, Y_b) = |t| δ_ab", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let m = 2 * s.rank;
        let w = DMatrix::from_fn(m, m, |a, b| (fr.x[a].transpose() * &st.omega_t * &fr.y[b])[(0, 0)]);
        Ok(fro_re(&(w / s.level.abs_t() - DMatrix::identity(m, m))))
    });
    add("frames.coordinates.example_at_i", "adapted coordinates at τ = i", &|s| {
        // (u₁, u₂, v₁, v₂) = (1, 0, 0, 0) at τ = i, s = 0 has p = (1/√2, 0), q = (0, 1/√2)
        let lv = Level::new(s.level.k, 0.0)?;
        let fr = build_frames(&TeichmullerPoint::i(), &lv, 1)?;
        let (p, q) = fr.coords_pq(&DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]))?;
        let h = 0.5f64.sqrt();
        Ok((p - DVector::from_vec(vec![h, 0.0])).norm() + (q - DVector::from_vec(vec![0.0, h])).norm())
    });
    add("frames.coordinates.round_trip_global", "adapted coordinates are a linear bijection", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        max_over(&s.vectors, |x| {
            let (p, q) = fr.coords_pq(x)?;
            Ok((fr.point_from_pq(&p, &q) - x).norm())
        })
    });
    add("frames.coordinates.round_trip_adapted", "adapted coordinates are a linear bijection", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let m = 2 * s.rank;
        max_over(&s.vectors, |v| {
            let (p0, q0) = (v.rows(0, m).into_owned(), v.rows(m, m).into_owned());
            let (p, q) = fr.coords_pq(&fr.point_from_pq(&p0, &q0))?;
            Ok((p - p0).norm() + (q - q0).norm())
        })
    });
    add("frames.coordinates.symplectic_pullback", "Σ dp∧dq pulls back to ω_t/|t|", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let m = 2 * s.rank;
        let mut std = DMatrix::zeros(2 * m, 2 * m);
        for a in 0..m {
            std[(a, m + a)] = 1.0;
            std[(m + a, a)] = -1.0;
        }
        let pb = fr.inverse.transpose() * std * &fr.inverse;
        Ok(fro_re(&(pb - &st.omega_t / s.level.abs_t())))
    });
    add("frames.coordinates.complex_coordinates_dual", "dz_a(X_b) = δ_ab, dz_a(Y_b) = iδ_ab", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let dz = fr.dz_rows();
        let m = 2 * s.rank;
        let on_x = &dz * cx(&DMatrix::from_columns(&fr.x));
        let on_y = &dz * cx(&DMatrix::from_columns(&fr.y));
        let id = DMatrix::<Complex64>::identity(m, m);
        Ok(fro(&(on_x - &id)) + fro(&(on_y - id * I)))
    });
    add("frames.coordinates.slice_graph", "on the slice p is a linear function of q", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let geo = cslab_core::quantops::A0Geometry::new(&s.tau, &s.level, s.rank)?;
        max_over(&s.slice, |u| {
            let (p, q) = fr.coords_pq(&embed_a0(s.rank, u))?;
            Ok((&geo.q_of_u * u - &q).norm() + (&geo.s * &q - p).norm() + (&geo.l * &q - u).norm())
        })
    });
    add("frames.projection.resolution_of_identity", "projections onto P_τ and Q_τ", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        max_over(&s.vectors, |a| {
            let (p, q) = fr.project_pq(a);
            Ok((p + q - a).norm())
        })
    });
    add("frames.projection.idempotent", "projections onto P_τ and Q_τ", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        max_over(&s.vectors, |a| {
            let (p, q) = fr.project_pq(a);
            let (pp, pq) = fr.project_pq(&p);
            let (qp, qq) = fr.project_pq(&q);
            Ok((pp - &p).norm() + pq.norm() + qp.norm() + (qq - &q).norm())
        })
    });
    add("frames.projection.via_k_on_slice", "projections on the slice are (A ∓ K A)/2", &|s| {
        let st = build_structures(&s.tau, &s.level, s.rank);
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        max_over(&s.slice, |u| {
            let a = embed_a0(s.rank, u);
            let (p, q) = fr.project_pq(&a);
            let (pk, qk) = frames::project_pq_via_k(&st, &a);
            Ok((p - pk).norm() + (q - qk).norm())
        })
    });
    add("frames.projection.complex_frame_vectors", "π_Q(𝒳_j) = (it̄/2|t|)(Y_j − iY_{j+r}) and conjugate", &|s| {
        let fr = build_frames(&s.tau, &s.level, s.rank)?;
        let r = s.rank;
        let at = s.level.abs_t();
        let t = s.level.t();
        let mut worst: f64 = 0.0;
        for j in 0..r {
            let mut x = DVector::<Complex64>::zeros(4 * r);
            x.rows_mut(0, 2 * r).copy_from(&frames::script_x_a0(&s.tau, r, j));
            let xb = x.map(|z| z.conj());
            let yj = frames::to_complex_vec(&fr.y[j]);
            let yr = frames::to_complex_vec(&fr.y[j + r]);
            let want = (&yj - &yr * I) * (I * t.conj() / (2.0 * at));
            let want_bar = (&yj + &yr * I) * (-I * t / (2.0 * at));
            worst = worst.max((fr.project_q_complex(&x) - want).norm());
            worst = worst.max((fr.project_q_complex(&xb) - want_bar).norm());
        }
        Ok(worst)
    });
    add("frames.metric.complex_frame_type", "g(A, 𝒳_j) = −iω(A, 𝒳_j) on the slice", &|s| {
        let g = cx(&frames::metric_a0(&s.tau, s.rank));
        let om = cx(&frames::symplectic_a0(s.rank));
        let mut worst: f64 = 0.0;
        for j in 0..s.rank {
            let x = frames::script_x_a0(&s.tau, s.rank, j);
            let xb = x.map(|z| z.conj());
            for u in &s.slice {
                let a = frames::to_complex_vec(u);
                let gx = frames::bilinear(&g, &a, &x);
                let ox = frames::bilinear(&om, &a, &x);
                let gxb = frames::bilinear(&g, &a, &xb);
                let oxb = frames::bilinear(&om, &a, &xb);
                worst = worst.max((gx + I * ox).norm()).max((gxb - I * oxb).norm());
            }
        }
        Ok(worst)
    });
    add("frames.prequantum.curvature_type", "prequantum curvature F = −iω_t has type (1,1)", &|s| {
        let (f11, f20) = curvature_components(&s.tau, &s.level, s.rank)?;
        let m = 2 * s.rank;
        let want = DMatrix::<Complex64>::identity(m, m) * Complex64::new(0.5 * s.level.abs_t(), 0.0);
        Ok((fro(&(f11 - want)) + fro(&f20)) / s.level.abs_t())
    });
    out.push(weyl_check(ctx, tol));
    out
}

fn weyl_check(ctx: &Ctx, tol: f64) -> CheckRecord {
    let data: &CartanData = &ctx.cartan;
    let inputs = json!({ "cartan": ctx.cfg.cartan });
    let residual = enumerate_weyl(data).map(|ws| {
        let mut worst: f64 = 0.0;
        for w in &ws {
            let r = w.nrows();
            worst = worst.max((w.transpose() * w - DMatrix::identity(r, r)).norm());
            let image = w * &data.lattice_basis;
            let ints = data.lattice_action(w).map(|x| x as f64);
            worst = worst.max((image - &data.lattice_basis * ints).norm());
        }
        worst
    });
    record("frames.cartan.weyl_preserves_lattice", "Weyl group acts orthogonally and preserves the lattice", inputs, tol, residual)
}
