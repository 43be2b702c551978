//! Bargmann transform: unitarity, operator transfer, quadrature against the closed form.

use cslab_core::bargmann::{bargmann_closed_form, bargmann_operator, bargmann_quadrature, header, inverse_bargmann, BargmannKernelParams};
use cslab_core::quantops::{FockOps, HermiteOps, MdKind, MuDeltaKind};
use cslab_core::sections::{fock_norm2, hermite_basis, PositionSection};
use cslab_core::Result;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde_json::json;

use super::{max_over, point_json, random_coeffs, record, Ctx};
use crate::report::CheckRecord;

const GRAM_DEGREE: usize = 6;
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn run(ctx: &Ctx) -> Vec<CheckRecord> {
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let tol = ctx.cfg.tolerances.matrix;
    let points = ctx.configured_points();
    let inputs = json!({ "points": point_json(&points), "rank": r, "degree": n });
    let mut out = Vec::new();

    // B†·diag(Fock norms)·B = Id on Hermite indices of degree ≤ 6
    let gram = max_over(&points, |(_, lv)| {
        let b = bargmann_operator(r, GRAM_DEGREE, lv).to_dense();
        let fb = hermite_basis(r, GRAM_DEGREE);
        let w = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            fb.len(),
            fb.indices().iter().map(|a| Complex64::new(fock_norm2(a, lv.hbar()), 0.0)),
        ));
        let g = b.adjoint() * w * &b;
        Ok((g - DMatrix::<Complex64>::identity(fb.len(), fb.len())).norm())
    });
    out.push(record(
        "bargmann.unitarity.gram",
        "the Bargmann transform is unitary",
        json!({ "points": point_json(&points), "rank": r, "degree": GRAM_DEGREE }),
        tol,
        gram,
    ));

    // B M_j = (i/2)(δ_j − μ_j) B and B D_j = (i/2)(μ_j + δ_j) B, plus the barred pair
    let transfer = max_over(&points, |(_, lv)| {
        let h = HermiteOps::new(r, n, lv);
        let f = FockOps::new(r, n, lv);
        let b = bargmann_operator(r, n, lv);
        let low = n - 2;
        let mut worst: f64 = 0.0;
        for j in 0..r {
            let pairs = [
                (MdKind::M, f.mudelta(j, MuDeltaKind::Delta).sub(&f.mudelta(j, MuDeltaKind::Mu))),
                (MdKind::D, f.mudelta(j, MuDeltaKind::Mu).add(&f.mudelta(j, MuDeltaKind::Delta))),
                (MdKind::Mbar, f.mudelta(j, MuDeltaKind::DeltaBar).sub(&f.mudelta(j, MuDeltaKind::MuBar))),
                (MdKind::Dbar, f.mudelta(j, MuDeltaKind::MuBar).add(&f.mudelta(j, MuDeltaKind::DeltaBar))),
            ];
            for (kind, fock_side) in pairs {
                let lhs = b.compose(&h.md(j, kind));
                let rhs = fock_side.scale(I * 0.5).compose(&b);
                worst = worst.max(lhs.relative_distance_on(&rhs, &h.basis, low));
            }
        }
        Ok(worst)
    });
    out.push(record("bargmann.operators.transfer", "the transform carries M, D to the Fock ladder combinations", inputs.clone(), tol, transfer));

    let ground = max_over(&points, |(tau, lv)| {
        let f = bargmann_closed_form(&PositionSection::ground(header(tau, lv, r, n)));
        let mut e = f.coeffs.clone();
        e[0] -= 1.0;
        Ok(e.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
    });
    out.push(record("bargmann.ground_state", "the ground state maps to the constant 1", inputs.clone(), tol, ground));

    let mut rng = ctx.rng("bargmann.sections");
    let hb = hermite_basis(r, n);
    let filled = hb.count_up_to(n - 2);
    let sections: Vec<Vec<Complex64>> =
        (0..ctx.cfg.samples.unitarity_sections).map(|_| random_coeffs(&mut rng, hb.len(), filled)).collect();
    let sec_inputs = json!({ "points": point_json(&points), "rank": r, "degree": n, "sections": sections.len(), "seed": ctx.cfg.seed });
    let norms = max_over(&points, |(tau, lv)| {
        max_over(&sections, |c| {
            let psi = PositionSection { header: header(tau, lv, r, n), coeffs: c.clone() };
            let f = bargmann_closed_form(&psi);
            Ok((f.norm() - psi.norm()).abs() / psi.norm())
        })
    });
    out.push(record("bargmann.unitarity.norms", "the Bargmann transform preserves norms", sec_inputs.clone(), tol, norms));
    let inverse = max_over(&points, |(tau, lv)| {
        max_over(&sections, |c| {
            let psi = PositionSection { header: header(tau, lv, r, n), coeffs: c.clone() };
            let back = inverse_bargmann(&bargmann_closed_form(&psi));
            let d: f64 = back.coeffs.iter().zip(c).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            Ok(d / psi.norm())
        })
    });
    out.push(record("bargmann.inverse.round_trip", "the inverse transform undoes the transform", sec_inputs, tol, inverse));

    out.push(quadrature(ctx));
    out
}

/// Gauss–Hermite evaluation of the integral transform against the coefficient formula.
fn quadrature(ctx: &Ctx) -> CheckRecord {
    let r = ctx.rank();
    let deg = 4;
    let nodes = ctx.cfg.nodes;
    let mut rng = ctx.rng("bargmann.quadrature");
    let points = ctx.configured_points();
    let hb = hermite_basis(r, deg);
    let cases: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..points.len() * 3)
        .map(|_| {
            let c = random_coeffs(&mut rng, hb.len(), hb.len());
            let z = (0..2 * r).map(|_| Complex64::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8))).collect();
            (c, z)
        })
        .collect();
    let inputs = json!({ "points": point_json(&points), "rank": r, "degree": deg, "nodes": nodes, "seed": ctx.cfg.seed });
    let idx: Vec<usize> = (0..cases.len()).collect();
    let residual: Result<f64> = max_over(&idx, |&i| {
        let (tau, lv) = points[i % points.len()];
        let (c, z) = &cases[i];
        let psi = PositionSection { header: header(&tau, &lv, r, deg), coeffs: c.clone() };
        let basis = psi.basis();
        let params = BargmannKernelParams::new(&tau, &lv, r);
        let numeric = bargmann_quadrature(|q| psi.evaluate_with(&basis, q), &params, z, nodes);
        let closed = bargmann_closed_form(&psi).evaluate(z)?;
        Ok((numeric - closed).norm() / closed.norm().max(1.0))
    });
    record(
        "bargmann.quadrature.closed_form",
        "the integral transform agrees with the coefficient formula",
        inputs,
        ctx.cfg.tolerances.quadrature,
        residual,
    )
}
