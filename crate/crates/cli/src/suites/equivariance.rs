//! Lattice-summed Bargmann transform of equivariant sections, the transpose
//! transform, and the dual connection on bounded equivariant sections.
//!
//! These run on the A₁ model: the Fock-side pairing uses a two-variable FFT.

use cslab_core::bargmann::{
    bargmann_closed_form, equivariant_section_at, header, transpose_bargmann, BargmannKernelParams, DualElement,
    EquivariantInput, PairingSettings,
};
use cslab_core::cartan::{gauge_act_complex, CartanData, GaugeElement, WeylGroup};
use cslab_core::equivariant::{dual_connection_sides, equivariantize, fundamental_domain_samples, EquivariantSection, GaussianTerm, RealDirection, TensorRule};
use cslab_core::frames::{build_structures, TeichmullerPoint};
use cslab_core::sections::{hermite_basis, PositionSection};
use cslab_core::Result;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde_json::{json, Value};

use super::{max_over, random_coeffs, record, Ctx};
use crate::report::CheckRecord;

const SEED_WIDTH: f64 = 1.5;
const SEED_CENTRE: [f64; 2] = [0.3, -0.2];
const LATTICE_RADIUS: usize = 5;
const SAMPLE_POINTS: usize = 6;
const TEST_DEGREE: usize = 8;

struct Setup {
    data: CartanData,
    group: WeylGroup,
    section: EquivariantSection,
}

fn setup(ctx: &Ctx) -> Result<Setup> {
    let data = CartanData::a1();
    let group = WeylGroup::new(&data)?;
    let seed = [GaussianTerm::centred(SEED_WIDTH, &SEED_CENTRE)];
    let section = equivariantize(&seed, &data, &group, ctx.level.k, LATTICE_RADIUS, 1e-12)?;
    Ok(Setup { data, group, section })
}

fn base_inputs(ctx: &Ctx, tau: &TeichmullerPoint) -> Value {
    json!({
        "cartan": "A1",
        "seed": { "width": SEED_WIDTH, "centre": SEED_CENTRE },
        "lattice_radius": LATTICE_RADIUS,
        "tau": [tau.tau1, tau.tau2],
        "level": [ctx.level.k as f64, ctx.level.s],
        "rng_seed": ctx.cfg.seed,
    })
}

/// The costly pairings run at one point: the last configured τ.
fn work_tau(ctx: &Ctx) -> TeichmullerPoint {
    *ctx.taus.last().expect("validated non-empty")
}

pub fn run(ctx: &Ctx) -> Vec<CheckRecord> {
    let tau = work_tau(ctx);
    let inputs = base_inputs(ctx, &tau);
    let ids = [
        ("equivariance.bargmann.domain_doubling", "the lattice-summed transform converges under domain doubling", ctx.cfg.tolerances.doubling),
        ("equivariance.bargmann.lattice_weyl", "the transformed section is lattice- and Weyl-equivariant", ctx.cfg.tolerances.doubling),
        ("equivariance.average.invariance", "the averaged section is invariant", ctx.cfg.tolerances.matrix),
        ("equivariance.transpose.pairing", "the transpose transform commutes with the pairings", ctx.cfg.tolerances.pairing),
        ("equivariance.dual_connection.agreement", "the dual and direct connections agree on bounded equivariant sections", ctx.cfg.tolerances.pairing),
    ];
    let s = match setup(ctx) {
        Ok(s) => s,
        Err(e) => {
            return ids
                .iter()
                .map(|(id, anchor, tol)| CheckRecord::failed(id, anchor, inputs.clone(), *tol, e.to_string()))
                .collect()
        }
    };
    let mut rng = ctx.rng("equivariance.points");
    let points: Vec<Vec<f64>> = (0..SAMPLE_POINTS).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut with_points = inputs.clone();
    with_points["points"] = json!(points);

    let mut out = Vec::new();
    let (doubling, equiv) = transform_checks(ctx, &s, &tau, &points);
    out.push(record(ids[0].0, ids[0].1, with_points.clone(), ids[0].2, doubling));
    out.push(record(ids[1].0, ids[1].1, with_points, ids[1].2, equiv));
    let samples = fundamental_domain_samples(&s.data, 4);
    out.push(record(ids[2].0, ids[2].1, inputs.clone(), ids[2].2, s.section.invariance_defect(&s.data, &samples)));

    let mut rng = ctx.rng("equivariance.transpose");
    let hb = hermite_basis(1, TEST_DEGREE);
    let tests: Vec<Vec<Complex64>> = (0..2).map(|_| random_coeffs(&mut rng, hb.len(), hb.len())).collect();
    let mut pin = inputs.clone();
    pin["test_degree"] = json!(TEST_DEGREE);
    out.push(record(ids[3].0, ids[3].1, pin, ids[3].2, transpose_pairing(ctx, &s, &tau, &tests)));

    let mut din = inputs;
    din["directions"] = json!([[1.0, 0.0], [0.0, 1.0]]);
    out.push(record(ids[4].0, ids[4].1, din, ids[4].2, dual_agreement(ctx, &s, &tau)));
    out
}

fn to_complex(x: &[f64]) -> Vec<Complex64> {
    let m = x.len() / 2;
    (0..m).map(|a| Complex64::new(x[a], x[m + a])).collect()
}

fn from_complex(z: &[Complex64]) -> Vec<f64> {
    z.iter().map(|w| w.re).chain(z.iter().map(|w| w.im)).collect()
}

/// Largest change on domain doubling, and the largest equivariance defect
/// `S(g·x)` against `e^{(i/2)ω_t(λ, x)} S(x)` over the lattice and Weyl generators.
fn transform_checks(ctx: &Ctx, s: &Setup, tau: &TeichmullerPoint, points: &[Vec<f64>]) -> (Result<f64>, Result<f64>) {
    let tol = 1e-10;
    let input = match EquivariantInput::new(&s.section, tau, &ctx.level) {
        Ok(i) => i,
        Err(e) => return (Err(e.clone()), Err(e)),
    };
    let params = BargmannKernelParams::new(tau, &ctx.level, 1);
    let omega = build_structures(tau, &ctx.level, 1).omega_t;
    let doubling = max_over(points, |x| Ok(equivariant_section_at(&input, &params, x, tol)?.change_on_doubling));
    let mut moves = vec![GaugeElement::translation(vec![1], vec![0]), GaugeElement::translation(vec![0], vec![1])];
    moves.extend((1..s.group.order()).map(|w| GaugeElement { weyl_index: w, shift_x: vec![0], shift_y: vec![0] }));
    // lattice moves compare x − λ/2 with x + λ/2, keeping both points where the
    // holomorphic part is of moderate size
    let equiv = max_over(points, |x| {
        let mut worst: f64 = 0.0;
        for g in &moves {
            let (a, b) = if g.weyl_index == 0 {
                let gx = from_complex(&gauge_act_complex(&s.data, &s.group, g, &to_complex(x))?);
                let half: Vec<f64> = gx.iter().zip(x).map(|(p, q)| 0.5 * (p - q)).collect();
                let a: Vec<f64> = x.iter().zip(&half).map(|(p, h)| p - h).collect();
                let b: Vec<f64> = x.iter().zip(&half).map(|(p, h)| p + h).collect();
                (a, b)
            } else {
                (x.clone(), from_complex(&gauge_act_complex(&s.data, &s.group, g, &to_complex(x))?))
            };
            let sa = equivariant_section_at(&input, &params, &a, tol)?.section;
            let sb = equivariant_section_at(&input, &params, &b, tol)?.section;
            let expected = if g.weyl_index == 0 {
                let lambda = DVector::from_iterator(4, b.iter().zip(&a).map(|(p, q)| p - q));
                let phase = (lambda.transpose() * &omega * DVector::from_column_slice(&a))[(0, 0)];
                sa * Complex64::new(0.0, 0.5 * phase).exp()
            } else {
                sa
            };
            worst = worst.max((sb - expected).norm() / sa.norm().max(1e-300));
        }
        Ok(worst)
    });
    (doubling, equiv)
}

/// `(B ψ₁ | B ψ₂)` via Taylor coefficients against `(ᵗB(Bψ₁) | ψ₂)` on the position side.
fn transpose_pairing(ctx: &Ctx, s: &Setup, tau: &TeichmullerPoint, tests: &[Vec<Complex64>]) -> Result<f64> {
    let input = EquivariantInput::new(&s.section, tau, &ctx.level)?;
    let params = BargmannKernelParams::new(tau, &ctx.level, 1);
    let set = PairingSettings::default();
    max_over(tests, |c| {
        let psi = PositionSection { header: header(tau, &ctx.level, 1, TEST_DEGREE), coeffs: c.clone() };
        let fock = bargmann_closed_form(&psi);
        let t = DualElement::BargmannOfEquivariant { input: &input, params };
        let lhs = t.pair_fock(&fock, &set)?;
        let back = transpose_bargmann(DualElement::BargmannOfEquivariant { input: &input, params }, &params)?;
        let rhs = back.pair_position(&psi, &set)?;
        Ok((lhs - rhs).norm() / lhs.norm().max(rhs.norm()).max(1e-300))
    })
}

fn dual_agreement(ctx: &Ctx, s: &Setup, tau: &TeichmullerPoint) -> Result<f64> {
    let rule = TensorRule::new(2, 12.0, 48, 10);
    let dirs = [RealDirection { d_tau1: 1.0, d_tau2: 0.0 }, RealDirection { d_tau1: 0.0, d_tau2: 1.0 }];
    max_over(&dirs, |v| {
        let (dual, direct) = dual_connection_sides(&s.section, tau, &ctx.level, *v, &rule, 1e-3)?;
        Ok((dual - direct).norm() / dual.norm().max(direct.norm()).max(1e-300))
    })
}
