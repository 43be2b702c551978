//! Variation formulas against finite differences, and the operator algebra of
//! the connections on truncated bases.

use cslab_core::frames::{self, build_frames, build_structures, Direction, Level, TeichmullerPoint};
use cslab_core::quantops::{
    chain_term, extended_pieces, hw_explicit, hw_explicit_from_laplacians, hw_explicit_generic, hw_potential,
    hw_potential_generic, l2_potential, l2_potential_by_projection, metric_a0_derivative_analytic,
    partial_minus_delta, A0Geometry, ExtendedOps, FockOps, HermiteOps, LadderKind, MdKind, MuDeltaKind,
};
use cslab_core::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::json;

use super::{fro, max_over, point_json, random_points, record, rel, Ctx};
use crate::report::CheckRecord;

const FD_STEP: f64 = 1e-4;

fn fd<F>(tau: &TeichmullerPoint, dir: Direction, f: F) -> Result<DMatrix<Complex64>>
where
    F: Fn(&TeichmullerPoint) -> Result<DMatrix<Complex64>>,
{
    frames::richardson_tau_derivative(tau, FD_STEP, dir, f)
}

fn both_dirs(f: impl Fn(Direction) -> Result<f64>) -> Result<f64> {
    Ok(f(Direction::DTau)?.max(f(Direction::DTauBar)?))
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    m.clone().try_inverse().ok_or(Error::SingularFrame(f64::INFINITY))
}

pub fn run(ctx: &Ctx) -> Vec<CheckRecord> {
    let mut out = variation_checks(ctx);
    out.extend(algebra_checks(ctx));
    out
}

fn variation_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let mut rng = ctx.rng("operators.variation");
    let points = random_points(&mut rng, ctx.cfg.samples.random_points);
    let cases: Vec<(TeichmullerPoint, Level, usize)> =
        points.iter().flat_map(|&(t, l)| [(t, l, 1usize), (t, l, 2usize)]).collect();
    let tol = ctx.cfg.tolerances.fd;
    let inputs = json!({ "points": point_json(&points), "ranks": [1, 2], "fd_step": FD_STEP });
    let mut out = Vec::new();
    let mut add = |id: &str, anchor: &str, f: &dyn Fn(&(TeichmullerPoint, Level, usize)) -> Result<f64>| {
        out.push(record(id, anchor, inputs.clone(), tol, max_over(&cases, f)));
    };

    add("variation.coordinates.finite_difference", "τ-variation of the adapted coordinates", &|&(tau, lv, r)| {
        both_dirs(|dir| {
            let closed = frames::coordinate_variation(&tau, &lv, r, dir);
            Ok(rel(&closed, &frames::coordinate_variation_fd(&tau, &lv, r, dir)?))
        })
    });
    add("variation.coordinates.frame_derivative", "τ-variation of the adapted coordinates", &|&(tau, lv, r)| {
        both_dirs(|dir| {
            let closed = frames::coordinate_variation(&tau, &lv, r, dir);
            Ok(rel(&closed, &frames::coordinate_variation_from_frames(&tau, &lv, r, dir)?))
        })
    });
    add("variation.level_structure.finite_difference", "τ-derivative of the level complex structure", &|&(tau, lv, r)| {
        both_dirs(|dir| {
            let oracle = fd(&tau, dir, |t| Ok(frames::to_complex(&build_structures(t, &lv, r).i_t)))?;
            Ok(rel(&frames::i_t_derivative(&tau, &lv, r, dir), &oracle))
        })
    });
    add("variation.metric.finite_difference", "τ-derivative of the compact metric", &|&(tau, _, r)| {
        both_dirs(|dir| {
            let oracle = fd(&tau, dir, |t| Ok(frames::to_complex(&frames::metric_a0(t, r))))?;
            let a = rel(&frames::metric_a0_derivative(&tau, r, dir), &oracle);
            let b = rel(&metric_a0_derivative_analytic(&tau, r, dir), &oracle);
            Ok(a.max(b))
        })
    });
    add("variation.inverse_metric.finite_difference", "G̃(V) = −V[g̃] from the complex frame vectors", &|&(tau, _, r)| {
        both_dirs(|dir| {
            let oracle = fd(&tau, dir, |t| Ok(frames::to_complex(&frames::inverse_metric_a0(t, r))))?;
            Ok(rel(&frames::g_tilde_a0(&tau, r, dir), &(-oracle)))
        })
    });
    add("variation.complex_tensor.finite_difference", "holomorphic variation tensor G^ℂ", &|&(tau, lv, r)| {
        let fr = build_frames(&tau, &lv, r)?;
        let dz = fr.dz_rows();
        both_dirs(|dir| {
            let dginv = fd(&tau, dir, |t| {
                let g = build_structures(t, &lv, r).g_t / lv.abs_t();
                Ok(frames::to_complex(&inverse(&g)?))
            })?;
            let holo = -(&dz * dginv * dz.transpose());
            Ok(rel(&frames::g_holo_closed_form(&tau, &lv, r, dir), &holo))
        })
    });
    add("variation.complex_tensor.type", "holomorphic variation tensor G^ℂ", &|&(tau, lv, r)| {
        let fr = build_frames(&tau, &lv, r)?;
        let (dz, dzb) = (fr.dz_rows(), fr.dzbar_rows());
        both_dirs(|dir| {
            let dginv = fd(&tau, dir, |t| {
                let g = build_structures(t, &lv, r).g_t / lv.abs_t();
                Ok(frames::to_complex(&inverse(&g)?))
            })?;
            let mixed = &dz * &dginv * dzb.transpose();
            Ok(fro(&mixed) / fro(&dginv))
        })
    });
    add("variation.complex_tensor.generic", "holomorphic variation tensor G^ℂ", &|&(tau, lv, r)| {
        both_dirs(|dir| {
            let g = frames::g_tensor(&tau, &lv, r, dir)?;
            Ok(rel(&g.holo, &frames::g_holo_closed_form(&tau, &lv, r, dir)) + fro(&g.mixed))
        })
    });
    add("variation.slice.q_finite_difference", "τ-variation of q on the slice", &|&(tau, lv, r)| {
        let geo = A0Geometry::new(&tau, &lv, r)?;
        both_dirs(|dir| {
            let oracle = fd(&tau, dir, |t| Ok(frames::to_complex(&A0Geometry::new(t, &lv, r)?.q_of_u)))?;
            let closed = geo.q_variation(dir) * frames::to_complex(&geo.q_of_u);
            Ok(rel(&closed, &oracle))
        })
    });
    add("variation.slice.log_rho_finite_difference", "τ-variation of the real-polarised frame", &|&(tau, lv, r)| {
        let geo = A0Geometry::new(&tau, &lv, r)?;
        let qu = frames::to_complex(&geo.q_of_u);
        both_dirs(|dir| {
            let oracle = fd(&tau, dir, |t| {
                let g = A0Geometry::new(t, &lv, r)?;
                let q = frames::to_complex(&g.q_of_u);
                Ok(q.transpose() * g.log_rho_form() * q)
            })?;
            let closed = qu.transpose() * geo.dlog_rho_form(dir) * &qu;
            Ok(rel(&closed, &oracle))
        })
    });
    out
}

fn algebra_checks(ctx: &Ctx) -> Vec<CheckRecord> {
    let points = ctx.configured_points();
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let low = n - 2;
    let tol = ctx.cfg.tolerances.matrix;
    let inputs = json!({ "points": point_json(&points), "rank": r, "degree": n });
    let mut out = Vec::new();
    let mut add = |id: &str, anchor: &str, f: &dyn Fn(&(TeichmullerPoint, Level)) -> Result<f64>| {
        out.push(record(id, anchor, inputs.clone(), tol, max_over(&points, f)));
    };
    let m = 2 * r;

    add("algebra.curvature.mixed", "[∇^{1,0}, ∇^{0,1}] is the (1,1) curvature", &|(tau, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        let (f11, _) = cslab_core::quantops::curvature_components(tau, lv, r)?;
        let id = ext.zeros().add(&cslab_core::linop::LinearOperator::identity(ext.desc, ext.dim()));
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                let comm = ext.nabla_z(a).commutator(&ext.nabla_zbar(b));
                worst = worst.max(comm.relative_distance_on(&id.scale(f11[(a, b)]), &ext.basis, low));
            }
        }
        Ok(worst)
    });
    add("algebra.curvature.holomorphic", "F^{2,0} = 0", &|(_, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        let mut worst: f64 = 0.0;
        for a in 0..m {
            for b in 0..m {
                let comm = ext.nabla_z(a).commutator(&ext.nabla_z(b));
                worst = worst.max(comm.norm_on(&ext.basis, low) / ext.nabla_z(a).norm_on(&ext.basis, low).max(1.0));
            }
        }
        Ok(worst)
    });
    add("algebra.ladder.canonical", "[a_j, a*_k] = 2ħ δ_jk", &|(_, lv)| {
        let f = FockOps::new(r, n, lv);
        let mut worst: f64 = 0.0;
        for j in 0..m {
            for k in 0..m {
                let comm = f.ladder(j, LadderKind::Annihilate).commutator(&f.ladder(k, LadderKind::Create));
                let want = if j == k { f.identity().scale_re(2.0 * f.hbar) } else { f.zeros() };
                worst = worst.max(comm.relative_distance_on(&want, &f.basis, low));
            }
        }
        Ok(worst)
    });
    add("algebra.ladder.mu_delta_commute", "μ_j and δ_j commute", &|(_, lv)| {
        let f = FockOps::new(r, n, lv);
        let mut worst: f64 = 0.0;
        for j in 0..r {
            for (a, b) in [(MuDeltaKind::Mu, MuDeltaKind::Delta), (MuDeltaKind::MuBar, MuDeltaKind::DeltaBar)] {
                let comm = f.mudelta(j, a).commutator(&f.mudelta(j, b));
                worst = worst.max(comm.norm_on(&f.basis, low) / f.mudelta(j, b).norm_on(&f.basis, low));
            }
        }
        Ok(worst)
    });
    add("algebra.ladder.m_d_commute", "M_j and D_j commute", &|(_, lv)| {
        let h = HermiteOps::new(r, n, lv);
        let mut worst: f64 = 0.0;
        for j in 0..r {
            for (a, b) in [(MdKind::M, MdKind::D), (MdKind::Mbar, MdKind::Dbar)] {
                let comm = h.md(j, a).commutator(&h.md(j, b));
                worst = worst.max(comm.norm_on(&h.basis, low) / h.md(j, b).norm_on(&h.basis, low));
            }
        }
        Ok(worst)
    });
    add("algebra.laplacian.closed_form", "Laplacian of the holomorphic variation tensor", &|(tau, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        both_dirs(|dir| {
            let p = extended_pieces(&ext, tau, lv, dir)?;
            Ok(p.laplacian_generic.relative_distance_on(&p.laplacian_closed, &ext.basis, low))
        })
    });
    add("algebra.laplacian.orthogonal_to_holomorphic", "⟨Δ_{G^ℂ}φ, φ′⟩ = 0 on holomorphic sections", &|(tau, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        let fock = FockOps::new(r, n, lv);
        let p = ext.projection_to_fock(&fock);
        let e = ext.embedding_from_fock(&fock);
        let k = fock.basis.count_up_to(low);
        both_dirs(|dir| {
            let pieces = extended_pieces(&ext, tau, lv, dir)?;
            let lap = pieces.laplacian_generic.to_dense() * &e;
            let proj = &p * &lap;
            Ok(fro(&proj.columns(0, k).into_owned()) / fro(&lap.columns(0, k).into_owned()).max(1e-300))
        })
    });
    add("algebra.complex_hitchin.equals_l2", "complexified Hitchin potential equals the L² potential", &|(tau, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        let fock = FockOps::new(r, n, lv);
        both_dirs(|dir| {
            let p = extended_pieces(&ext, tau, lv, dir)?;
            let (block, _) = ext.holomorphic_block(&p.trivial.add(&p.laplacian_generic), &fock, low);
            Ok(block.relative_distance_on(&l2_potential(&fock, tau, lv, dir), &fock.basis, low))
        })
    });
    add("algebra.l2.projection_route", "L² potential by orthogonal projection", &|(tau, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        let fock = FockOps::new(r, n, lv);
        let k = fock.basis.count_up_to(low);
        both_dirs(|dir| {
            let p = extended_pieces(&ext, tau, lv, dir)?;
            let proj = l2_potential_by_projection(&ext, &fock, &p);
            let l2 = l2_potential(&fock, tau, lv, dir).to_dense();
            let (a, b) = (proj.columns(0, k).into_owned(), l2.columns(0, k).into_owned());
            Ok(rel(&a, &b))
        })
    });
    add("algebra.hitchin_witten.explicit_vs_frames", "Hitchin–Witten form from ∇_𝒳̄∇_𝒳̄", &|(tau, lv)| {
        let ops = HermiteOps::new(r, n, lv);
        let geo = A0Geometry::new(tau, lv, r)?;
        both_dirs(|dir| {
            Ok(hw_explicit(&ops, tau, lv, dir).relative_distance_on(&hw_explicit_generic(&ops, &geo, dir), &ops.basis, low))
        })
    });
    add("algebra.hitchin_witten.explicit_vs_laplacians", "Hitchin–Witten form from the real Laplacians", &|(tau, lv)| {
        let ops = HermiteOps::new(r, n, lv);
        let geo = A0Geometry::new(tau, lv, r)?;
        both_dirs(|dir| {
            Ok(hw_explicit(&ops, tau, lv, dir).relative_distance_on(
                &hw_explicit_from_laplacians(&ops, &geo, dir),
                &ops.basis,
                low,
            ))
        })
    });
    add("algebra.hitchin_witten.potential_vs_generic", "Hitchin–Witten potential on polarised extensions", &|(tau, lv)| {
        let ops = HermiteOps::new(r, n, lv);
        let geo = A0Geometry::new(tau, lv, r)?;
        both_dirs(|dir| {
            Ok(hw_potential(&ops, tau, lv, dir).relative_distance_on(&hw_potential_generic(&ops, &geo, dir), &ops.basis, low))
        })
    });
    add("algebra.hitchin_witten.partial_vs_delta", "∂/∂τ at fixed u minus δ/δτ", &|(tau, lv)| {
        let ops = HermiteOps::new(r, n, lv);
        let geo = A0Geometry::new(tau, lv, r)?;
        both_dirs(|dir| {
            Ok(partial_minus_delta(&ops, tau, lv, dir).relative_distance_on(&chain_term(&ops, &geo, dir), &ops.basis, low))
        })
    });
    add("algebra.hitchin_witten.split", "Hitchin–Witten potential on polarised extensions", &|(tau, lv)| {
        let ops = HermiteOps::new(r, n, lv);
        both_dirs(|dir| {
            let sum = hw_explicit(&ops, tau, lv, dir).add(&partial_minus_delta(&ops, tau, lv, dir));
            Ok(hw_potential(&ops, tau, lv, dir).relative_distance_on(&sum, &ops.basis, low))
        })
    });
    out
}
