//! Parallel transport, holonomy, the mapping-class gauge law and the
//! intertwining of the position and holomorphic connections.

use cslab_core::bargmann::header;
use cslab_core::frames::{build_frames, Direction, Level, TeichmullerPoint};
use cslab_core::quantops::ConnectionKind;
use cslab_core::sections::{fock_basis, hermite_basis, FockSection, PositionSection};
use cslab_core::transport::{
    act_on_family, delta_derivative, delta_derivative_at, gauge_law_defect, holonomy, mcg_act, transport, verify_intertwining,
    FamilySide, FlatConnection, HolomorphicSide, McgElement, SectionFamily, TeichPath, TransportOptions,
};
use cslab_core::Result;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::{max_over, point_json, random_coeffs, random_points, random_tau, record, Ctx};
use crate::report::CheckRecord;

const BLOCK_DEGREE: usize = 4;
const FAMILIES_PER_POINT: usize = 5;

fn unit(n: usize, j: usize) -> Vec<Complex64> {
    let mut v = vec![Complex64::new(0.0, 0.0); n];
    v[j] = Complex64::new(1.0, 0.0);
    v
}

fn opts(ctx: &Ctx) -> TransportOptions {
    TransportOptions { tolerance: ctx.cfg.tolerances.transport, trace_every: 0 }
}

pub fn run(ctx: &Ctx) -> Vec<CheckRecord> {
    let mut out = vec![norm_drift(ctx), reverse_round_trip(ctx), path_independence(ctx)];
    for kind in [ConnectionKind::HitchinWitten, ConnectionKind::ComplexHitchin] {
        out.push(holonomy_check(ctx, kind));
    }
    out.push(gauge_law(ctx));
    out.extend(intertwining(ctx));
    out.push(delta_pointwise(ctx));
    out
}

/// Ground state along the configured path.
fn norm_drift(ctx: &Ctx) -> CheckRecord {
    let t = &ctx.cfg.transport;
    let inputs = json!({ "path": t.path, "steps": t.steps, "degree": t.degree, "rank": ctx.rank(), "level": [ctx.level.k as f64, ctx.level.s] });
    let res = (|| -> Result<(f64, f64)> {
        let conn = FlatConnection::new(ConnectionKind::HitchinWitten, &ctx.level, ctx.rank(), t.degree)?;
        let path = TeichPath::parse(&t.path, t.steps)?;
        let r = transport(&conn, &path, &unit(conn.dim(), 0), &opts(ctx))?;
        Ok((r.norm_drift, r.halving_change))
    })();
    let halving = res.as_ref().map(|r| r.1).unwrap_or(f64::NAN);
    let rec = record(
        "transport.example.norm_drift",
        "transport along real directions preserves the norm",
        inputs,
        ctx.cfg.tolerances.transport,
        res.map(|r| r.0),
    );
    if halving.is_finite() {
        rec.note("halving_change", halving)
    } else {
        rec
    }
}

fn reverse_round_trip(ctx: &Ctx) -> CheckRecord {
    let mut rng = ctx.rng("transport.reverse");
    let r = ctx.rank();
    let t = &ctx.cfg.transport;
    let path_str = "0+1i,0.5+1.3i,-0.2+0.9i";
    let kinds = [ConnectionKind::HitchinWitten, ConnectionKind::ComplexHitchin];
    let starts: Vec<Vec<Complex64>> = kinds
        .iter()
        .map(|_| {
            let b = hermite_basis(r, t.degree);
            random_coeffs(&mut rng, b.len(), b.count_up_to(BLOCK_DEGREE))
        })
        .collect();
    let inputs = json!({ "path": path_str, "steps": t.steps, "degree": t.degree, "rank": r, "level": [ctx.level.k as f64, ctx.level.s], "seed": ctx.cfg.seed });
    let idx = [0usize, 1];
    let residual = max_over(&idx, |&i| {
        let conn = FlatConnection::new(kinds[i], &ctx.level, r, t.degree)?;
        let path = TeichPath::parse(path_str, t.steps)?;
        let c0 = &starts[i];
        let fwd = transport(&conn, &path, c0, &opts(ctx))?;
        let back = transport(&conn, &path.reversed(), &fwd.endpoint, &opts(ctx))?;
        let diff: Vec<Complex64> = back.endpoint.iter().zip(c0).map(|(a, b)| a - b).collect();
        Ok(conn.norm(&diff) / conn.norm(c0))
    });
    record(
        "transport.example.reverse_round_trip",
        "transport back along the reversed path returns the initial section",
        inputs,
        ctx.cfg.tolerances.holonomy,
        residual,
    )
}

/// Ground state from i to 2i along three routes.
fn path_independence(ctx: &Ctx) -> CheckRecord {
    // the endpoint is a squeezed state whose Hermite tail needs room above the block
    let degree = 40;
    let steps = 400;
    let routes = ["0+1i,1+1i,0+2i", "0+1i,0+2i", "0+1i,-0.5+1.5i,0+2i"];
    let inputs = json!({ "routes": routes, "steps": steps, "degree": degree, "rank": 1, "level": [ctx.level.k as f64, ctx.level.s] });
    let residual = (|| -> Result<f64> {
        let conn = FlatConnection::new(ConnectionKind::HitchinWitten, &ctx.level, 1, degree)?;
        let h0 = unit(conn.dim(), 0);
        let ends = routes
            .iter()
            .map(|p| transport(&conn, &TeichPath::parse(p, steps)?, &h0, &opts(ctx)).map(|r| r.endpoint))
            .collect::<Result<Vec<_>>>()?;
        let d = |a: &[Complex64], b: &[Complex64]| conn.norm(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>());
        Ok(d(&ends[0], &ends[1]).max(d(&ends[0], &ends[2])))
    })();
    record(
        "transport.example.path_independence",
        "transport between two points does not depend on the route",
        inputs,
        ctx.cfg.tolerances.holonomy,
        residual,
    )
}

fn holonomy_check(ctx: &Ctx, kind: ConnectionKind) -> CheckRecord {
    let name = match kind {
        ConnectionKind::HitchinWitten => "hitchin_witten",
        _ => "complex_hitchin",
    };
    let mut rng = ctx.rng(&format!("transport.holonomy.{name}"));
    let t = &ctx.cfg.transport;
    let loops: Vec<(TeichmullerPoint, f64, usize)> = (0..ctx.cfg.samples.loops)
        .map(|_| (random_tau(&mut rng, 1.0, 2.0), rng.random_range(0.05..=t.radius), rng.random_range(3..=8usize)))
        .collect();
    let inputs = json!({
        "kind": name,
        "loops": loops.iter().map(|(c, r, s)| json!([c.tau1, c.tau2, r, s])).collect::<Vec<_>>(),
        "steps": t.steps,
        "degree": t.degree,
        "block_degree": BLOCK_DEGREE,
        "rank": ctx.rank(),
        "level": [ctx.level.k as f64, ctx.level.s],
        "seed": ctx.cfg.seed,
    });
    let mut phase: f64 = 0.0;
    let residual = FlatConnection::new(kind, &ctx.level, ctx.rank(), t.degree).and_then(|conn| {
        let mut worst: f64 = 0.0;
        for (centre, radius, sides) in &loops {
            let path = TeichPath::polygon(centre, *radius, *sides, t.steps)?;
            let h = holonomy(&conn, &path, BLOCK_DEGREE, &opts(ctx))?;
            worst = worst.max(h.deviation);
            phase = phase.max(h.global_phase.abs());
        }
        Ok(worst)
    });
    record(
        &format!("transport.holonomy.{name}"),
        "the connection is flat: holonomy around small loops is trivial",
        inputs,
        ctx.cfg.tolerances.holonomy,
        residual,
    )
    .note("max_abs_global_phase", phase)
}

fn gauge_law(ctx: &Ctx) -> CheckRecord {
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let points = ctx.configured_points();
    let inputs = json!({ "points": point_json(&points), "elements": ["S", "T"], "rank": r, "degree": n });
    let residual = max_over(&points, |(tau, lv)| {
        let mut worst: f64 = 0.0;
        for kind in [ConnectionKind::HitchinWitten, ConnectionKind::ComplexHitchin, ConnectionKind::L2] {
            for g in [McgElement::s(), McgElement::t()] {
                for dir in Direction::both() {
                    worst = worst.max(gauge_law_defect(kind, &g, tau, lv, r, n, dir)?);
                }
            }
        }
        Ok(worst)
    });
    record(
        "transport.mcg.gauge_law",
        "the mapping class group acts by gauge transformations of the connections",
        inputs,
        ctx.cfg.tolerances.mcg,
        residual,
    )
}

fn random_family(rng: &mut ChaCha8Rng, r: usize, degree: usize, lv: Level, t0: TeichmullerPoint) -> SectionFamily<'static> {
    let hb = hermite_basis(r, degree);
    let k = hb.count_up_to(degree - 4);
    let cs = [random_coeffs(rng, hb.len(), k), random_coeffs(rng, hb.len(), k), random_coeffs(rng, hb.len(), k)];
    SectionFamily::affine(FamilySide::Position, r, degree, lv, t0, cs)
}

fn intertwining(ctx: &Ctx) -> Vec<CheckRecord> {
    let mut rng = ctx.rng("transport.intertwining");
    let r = ctx.rank();
    let n = ctx.cfg.degree;
    let npoints = ctx.cfg.samples.families.div_ceil(FAMILIES_PER_POINT);
    let points = random_points(&mut rng, npoints);
    let families: Vec<(TeichmullerPoint, SectionFamily<'static>)> = points
        .iter()
        .flat_map(|(tau, lv)| (0..FAMILIES_PER_POINT).map(|_| (*tau, *lv)).collect::<Vec<_>>())
        .map(|(tau, lv)| (tau, random_family(&mut rng, r, n, lv, tau)))
        .collect();
    let inputs = json!({ "points": point_json(&points), "families": families.len(), "rank": r, "degree": n, "seed": ctx.cfg.seed });
    let residual = max_over(&families, |(tau, fam)| {
        let mut worst: f64 = 0.0;
        for side in [HolomorphicSide::L2, HolomorphicSide::ComplexHitchin] {
            for res in verify_intertwining(fam, tau, side)? {
                worst = worst.max(res.relative);
            }
        }
        Ok(worst)
    });
    let main = record(
        "transport.intertwining.residual",
        "the Bargmann transform intertwines the Hitchin-Witten and holomorphic connections",
        inputs.clone(),
        ctx.cfg.tolerances.intertwining,
        residual,
    );
    // one family per point under S and T
    let moved = max_over(&families.iter().step_by(FAMILIES_PER_POINT).collect::<Vec<_>>(), |(tau, fam)| {
        let base = verify_intertwining(fam, tau, HolomorphicSide::L2)?;
        let mut worst: f64 = 0.0;
        for g in [McgElement::s(), McgElement::t()] {
            let gf = act_on_family(g, fam);
            let res = verify_intertwining(&gf, &mcg_act(&g, tau)?, HolomorphicSide::L2)?;
            for (a, b) in base.iter().zip(&res) {
                worst = worst.max((a.relative - b.relative).abs());
            }
        }
        Ok(worst)
    });
    let inv = record(
        "transport.intertwining.mcg_invariance",
        "the intertwining residual is invariant under the mapping class group",
        inputs,
        ctx.cfg.tolerances.mcg,
        moved,
    );
    vec![main, inv]
}

/// δ/δτ at a point against the coefficient derivative evaluated there.
fn delta_pointwise(ctx: &Ctx) -> CheckRecord {
    let mut rng = ctx.rng("transport.delta");
    let r = ctx.rank();
    let degree = 6;
    let points = ctx.configured_points();
    let cases: Vec<(FamilySide, [Vec<Complex64>; 3], DVector<f64>)> = points
        .iter()
        .flat_map(|_| [FamilySide::Position, FamilySide::Fock])
        .map(|side| {
            let len = hermite_basis(r, degree).len();
            let k = hermite_basis(r, degree).count_up_to(3);
            let cs = [random_coeffs(&mut rng, len, k), random_coeffs(&mut rng, len, k), random_coeffs(&mut rng, len, k)];
            let x = DVector::from_fn(4 * r, |_, _| rng.random_range(-0.5..0.5));
            (side, cs, x)
        })
        .collect();
    let inputs = json!({ "points": point_json(&points), "rank": r, "degree": degree, "seed": ctx.cfg.seed });
    let idx: Vec<usize> = (0..cases.len()).collect();
    let residual = max_over(&idx, |&i| {
        let (tau, lv) = points[i / 2];
        let (side, cs, x) = &cases[i];
        let fam = SectionFamily::affine(*side, r, degree, lv, tau, cs.clone());
        let mut worst: f64 = 0.0;
        for dir in Direction::both() {
            let pointwise = delta_derivative_at(&fam, dir, &tau, x)?;
            let dc = delta_derivative(&fam, dir, &tau)?;
            let direct = section_value(*side, &tau, &lv, r, degree, x, dc)?;
            worst = worst.max((pointwise - direct).norm() / direct.norm().max(1.0));
        }
        Ok(worst)
    });
    record(
        "transport.delta.pointwise_vs_coefficients",
        "the polarised derivative is the coefficient derivative",
        inputs,
        ctx.cfg.tolerances.fd,
        residual,
    )
}

fn section_value(
    side: FamilySide,
    tau: &TeichmullerPoint,
    lv: &Level,
    r: usize,
    degree: usize,
    x: &DVector<f64>,
    coeffs: Vec<Complex64>,
) -> Result<Complex64> {
    let (p, q) = build_frames(tau, lv, r)?.coords_pq(x)?;
    let h = header(tau, lv, r, degree);
    match side {
        FamilySide::Position => PositionSection { header: h, coeffs }.evaluate(q.as_slice()),
        FamilySide::Fock => {
            debug_assert_eq!(coeffs.len(), fock_basis(r, degree).len());
            let z: Vec<Complex64> = p.iter().zip(q.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect();
            FockSection { header: h, coeffs }.evaluate(&z)
        }
    }
}
