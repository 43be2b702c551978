//! Flatness and holomorphicity of the connections, from their potentials.

use cslab_core::frames::{Direction, Level, TeichmullerPoint};
use cslab_core::quantops::{extended_pieces, ConnectionKind, ExtendedOps};
use cslab_core::sections::fock_basis;
use cslab_core::transport::FlatConnection;
use cslab_core::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde_json::json;

use super::{fro, max_over, point_json, random_coeffs, random_points, record, Ctx};
use crate::report::CheckRecord;

fn kind_name(kind: ConnectionKind) -> &'static str {
    match kind {
        ConnectionKind::HitchinWitten => "hitchin_witten",
        ConnectionKind::ComplexHitchin => "complex_hitchin",
        ConnectionKind::L2 => "l2",
        ConnectionKind::DualHitchinWitten => "dual_hitchin_witten",
        ConnectionKind::DualComplexHitchin => "dual_complex_hitchin",
    }
}

pub fn run(ctx: &Ctx) -> Vec<CheckRecord> {
    let mut out = vec![holomorphicity(ctx), laplacians_commute(ctx)];
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let tol = ctx.cfg.tolerances.matrix;
    for kind in [
        ConnectionKind::HitchinWitten,
        ConnectionKind::ComplexHitchin,
        ConnectionKind::L2,
        ConnectionKind::DualHitchinWitten,
        ConnectionKind::DualComplexHitchin,
    ] {
        let name = kind_name(kind);
        let inputs = json!({ "kind": name, "level": [ctx.level.k as f64, ctx.level.s], "rank": r, "degree": n });
        let conn = FlatConnection::new(kind, &ctx.level, r, n);
        // W_τ = A/τ₂, W_τ̄ = B/τ₂ makes the curvature (i(A+B)/2 + [A,B])/τ₂²
        let curvature = conn.as_ref().map_err(Clone::clone).map(|c| {
            let f = c.a.commutator(&c.b).add(&c.a.add(&c.b).scale(Complex64::new(0.0, 0.5)));
            let low = n - 4;
            f.norm_on(&c.basis, low) / c.a.norm_on(&c.basis, low).powi(2).max(1.0)
        });
        out.push(record(&format!("connections.{name}.curvature_vanishes"), "the connection is flat", inputs.clone(), tol, curvature));
        let scaling = conn.as_ref().map_err(Clone::clone).and_then(|c| max_over(&ctx.taus, |t| c.scaling_defect(t)));
        out.push(record(
            &format!("connections.{name}.potential_scaling"),
            "potentials are τ-independent operators over τ₂",
            json!({ "kind": name, "taus": ctx.cfg.tau, "level": [ctx.level.k as f64, ctx.level.s], "degree": n }),
            tol,
            scaling,
        ));
        if matches!(kind, ConnectionKind::HitchinWitten | ConnectionKind::L2) {
            let unitary = conn.as_ref().map_err(Clone::clone).map(|c| real_directions_defect(c, n - 2));
            out.push(record(
                &format!("connections.{name}.unitary_along_real_directions"),
                "real directions act by anti-Hermitian operators",
                inputs,
                tol,
                unitary,
            ));
        }
    }
    out
}

/// Anti-Hermitian defect of `W_τ + W_τ̄` and `i(W_τ − W_τ̄)` in orthonormal coordinates.
fn real_directions_defect(c: &FlatConnection, low: usize) -> f64 {
    let k = c.basis.count_up_to(low);
    let sq: Vec<f64> = c.weights.iter().map(|w| w.sqrt()).collect();
    let orth = |op: &cslab_core::linop::LinearOperator| {
        let d = op.to_dense();
        DMatrix::from_fn(k, k, |i, j| d[(i, j)] * (sq[i] / sq[j]))
    };
    let a = orth(&c.a);
    let b = orth(&c.b);
    let i = Complex64::new(0.0, 1.0);
    let x = &a + &b;
    let y = (&a - &b) * i;
    let scale = fro(&a).max(1.0);
    (fro(&(&x + x.adjoint())) + fro(&(&y + y.adjoint()))) / scale
}

fn holomorphicity(ctx: &Ctx) -> CheckRecord {
    let mut rng = ctx.rng("connections.holomorphicity");
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let per_point = 10usize;
    let npoints = ctx.cfg.samples.holomorphic_sections.div_ceil(per_point);
    let points = random_points(&mut rng, npoints);
    let fb = fock_basis(r, n);
    let filled = fb.count_up_to(n - 2);
    let sections: Vec<Vec<Vec<Complex64>>> =
        (0..npoints).map(|_| (0..per_point).map(|_| random_coeffs(&mut rng, fb.len(), filled)).collect()).collect();
    let inputs = json!({ "points": point_json(&points), "sections": npoints * per_point, "rank": r, "degree": n, "seed": ctx.cfg.seed });
    let idx: Vec<usize> = (0..npoints).collect();
    let residual = max_over(&idx, |&p| {
        let (tau, lv): (TeichmullerPoint, Level) = points[p];
        let ext = ExtendedOps::new(r, n, &lv);
        let m = 2 * r;
        let mut worst: f64 = 0.0;
        for dir in Direction::both() {
            let pieces = extended_pieces(&ext, &tau, &lv, dir)?;
            let full = pieces.trivial.add(&pieces.laplacian_generic);
            for s in &sections[p] {
                let mut embedded = vec![Complex64::new(0.0, 0.0); ext.dim()];
                for (i, alpha) in fb.indices().iter().enumerate() {
                    embedded[ext.fock_position(alpha).expect("Fock slice inside the extended basis")] = s[i];
                }
                let image = full.apply(&embedded);
                let (mut anti, mut total) = (0.0, 0.0);
                for (v, idx) in image.iter().zip(ext.basis.indices()) {
                    total += v.norm_sqr();
                    if idx[m..].iter().any(|&b| b > 0) {
                        anti += v.norm_sqr();
                    }
                }
                worst = worst.max((anti / total.max(1e-300)).sqrt());
            }
        }
        Ok::<f64, cslab_core::Error>(worst)
    });
    record(
        "connections.complex_hitchin.preserves_holomorphicity",
        "the complexified Hitchin connection preserves holomorphicity",
        inputs,
        ctx.cfg.tolerances.holomorphic,
        residual,
    )
}

fn laplacians_commute(ctx: &Ctx) -> CheckRecord {
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let points = ctx.configured_points();
    let inputs = json!({ "points": point_json(&points), "rank": r, "degree": n });
    let residual: Result<f64> = max_over(&points, |(tau, lv)| {
        let ext = ExtendedOps::new(r, n, lv);
        let a = extended_pieces(&ext, tau, lv, Direction::DTau)?.laplacian_generic;
        let b = extended_pieces(&ext, tau, lv, Direction::DTauBar)?.laplacian_generic;
        let low = n - 4;
        let scale = a.norm_on(&ext.basis, low) * b.norm_on(&ext.basis, low);
        Ok(a.commutator(&b).norm_on(&ext.basis, low) / scale.max(1.0))
    });
    record(
        "connections.complex_hitchin.laplacians_commute",
        "Laplacians of the variation tensors commute",
        inputs,
        ctx.cfg.tolerances.matrix,
        residual,
    )
}
