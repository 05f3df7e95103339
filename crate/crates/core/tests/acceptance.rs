//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary so the lines show up in `cargo test` output. The
//! process fails when a criterion outside `KNOWN_FAILURES` fails, or when a
//! known failure starts passing (so the list stays honest).

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use polydesign::certify::{check_design, CertifyOptions};
use polydesign::conic::SolverStatus;
use polydesign::criteria::{grad_phi, phi, Criterion};
use polydesign::designsolve::{criterion_value, hierarchy_sweep, solve_design, RelaxationConfig, SolveResult};
use polydesign::moments::{localizing_matrix, moment_matrix, MomentSequence};
use polydesign::polybasis::{basis_size, MultiIndex, RegressionBasis};
use polydesign::recovery::{self, nie_lift, rank_flat, Design, Recovery, RecoveryConfig};
use polydesign::semialg::{self, SemiAlgebraicSet};

/// Criteria that fail for reasons recorded in the decisions ledger.
const KNOWN_FAILURES: &[u8] = &[3, 8];

struct Fixture {
    name: &'static str,
    set: SemiAlgebraicSet,
    d: usize,
    solved: SolveResult,
    recovery: Option<Recovery>,
    elapsed: Duration,
}

fn fixture(name: &'static str, set: SemiAlgebraicSet, d: usize, delta: usize, r: usize) -> Fixture {
    let start = Instant::now();
    let cfg = RelaxationConfig::new(set.n(), d, delta, Criterion::D).expect("config");
    let solved = solve_design(&set, &cfg).expect("solve");
    let rc = RecoveryConfig {
        r,
        ..RecoveryConfig::default()
    };
    let recovery = recovery::recover_with_escalation(&solved.y_star, None, &set, &rc, recovery::MAX_LIFT_ORDER).ok();
    Fixture {
        name,
        set,
        d,
        solved,
        recovery,
        elapsed: start.elapsed(),
    }
}

struct Fixtures {
    interval: Fixture,
    sphere: Fixture,
    wynn: Vec<Fixture>,
}

impl Fixtures {
    fn all(&self) -> Vec<&Fixture> {
        let mut v = vec![&self.interval, &self.sphere];
        v.extend(self.wynn.iter());
        v
    }
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn design_of(f: &Fixture) -> Result<&Design, String> {
    f.recovery
        .as_ref()
        .map(|r| &r.design)
        .ok_or_else(|| format!("{}: recovery failed", f.name))
}

fn moment(y: &MomentSequence, e: &[u32]) -> f64 {
    y.get(&MultiIndex::new(e.to_vec())).expect("moment index")
}

/// Real eigenvalues of the companion matrix of `c[0] + c[1] t + ... + t^k`.
fn companion_roots(c: &[f64]) -> Vec<f64> {
    let k = c.len();
    let mut m = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        m[(i, i - 1)] = 1.0;
    }
    for i in 0..k {
        m[(i, k - 1)] = -c[i];
    }
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() < 1e-9)
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn criterion1(fx: &Fixtures) -> Check {
    let f = &fx.interval;
    let design = design_of(f)?;
    let expected = [-1.0, -0.765, -0.285, 0.285, 0.765, 1.0];
    ensure(design.len() == 6, format!("{} atoms", design.len()))?;
    let pts: Vec<f64> = design.points.iter().map(|p| p[0]).collect();
    let perr = pts.iter().zip(expected).fold(0.0f64, |a, (x, e)| a.max((x - e).abs()));
    let werr = design.weights.iter().fold(0.0f64, |a, w| a.max((w - 1.0 / 6.0).abs()));
    ensure(
        perr <= 5e-3 && werr <= 5e-3,
        format!("point err {perr:.2e}, weight err {werr:.2e}"),
    )?;
    // (1 - t^2) P5'(t) with P5' = (315 t^4 - 210 t^2 + 15) / 8, made monic
    let mut oracle = companion_roots(&[15.0 / 315.0, 0.0, -210.0 / 315.0, 0.0]);
    oracle.extend([-1.0, 1.0]);
    oracle.sort_by(f64::total_cmp);
    ensure(oracle.len() == 6, format!("oracle found {} roots", oracle.len()))?;
    let oerr = pts.iter().zip(&oracle).fold(0.0f64, |a, (x, e)| a.max((x - e).abs()));
    ensure(oerr <= 1e-4, format!("oracle err {oerr:.2e}"))?;
    let secs = f.elapsed.as_secs_f64();
    ensure(secs <= 5.0, format!("took {secs:.2}s"))?;
    Ok(format!(
        "point err {perr:.1e}, weight err {werr:.1e}, oracle err {oerr:.1e}, {secs:.2}s"
    ))
}

fn criterion2(fx: &Fixtures) -> Check {
    let expected = [1.0, 0.0, 0.56, 0.0, 0.45, 0.0, 0.40, 0.0, 0.37, 0.0, 0.36];
    let y = &fx.interval.solved.y_star;
    let err = expected
        .iter()
        .enumerate()
        .fold(0.0f64, |a, (k, e)| a.max((moment(y, &[k as u32]) - e).abs()));
    ensure(err <= 0.01, format!("max err {err:.3e}"))?;
    Ok(format!("max err {err:.2e}"))
}

fn criterion3(fx: &Fixtures) -> Check {
    let f = &fx.sphere;
    let y = &f.solved.y_star;
    let mut second = 0.0f64;
    let mut other = 0.0f64;
    for (alpha, v) in y.basis().iter().zip(y.values().iter()) {
        let e = alpha.exponents();
        if alpha.degree() == 2 && e.contains(&2) {
            second = second.max((v - 1.0 / 3.0).abs());
        } else if !alpha.is_zero() {
            other = other.max(v.abs());
        }
    }
    ensure(
        second <= 1e-3 && other <= 1e-5,
        format!("diag err {second:.2e}, others {other:.2e}"),
    )?;
    let secs = f.elapsed.as_secs_f64();
    let rc = RecoveryConfig {
        r: 2,
        ..RecoveryConfig::default()
    };
    let lift = nie_lift(y, &f.set, &rc).map_err(|e| e.to_string())?;
    let ranks = rank_flat(&lift.moments, 1, rc.rank_tol).map_err(|e| e.to_string())?;
    ensure(
        ranks.flat && ranks.rank_high == 6 && ranks.rank_low == 6,
        format!(
            "moments ok; r=2 ranks ({}, {}) not (6, 6); escalation found {} atoms",
            ranks.rank_high,
            ranks.rank_low,
            f.recovery.as_ref().map_or(0, |r| r.design.len())
        ),
    )?;
    let design = design_of(f)?;
    ensure(design.len() == 6, format!("{} atoms", design.len()))?;
    let mut perr = 0.0f64;
    for p in &design.points {
        let near = (0..3)
            .flat_map(|i| [1.0, -1.0].map(|s| (i, s)))
            .map(|(i, s)| (0..3).fold(0.0f64, |a, j| a.max((p[j] - if j == i { s } else { 0.0 }).abs())))
            .fold(f64::INFINITY, f64::min);
        perr = perr.max(near);
    }
    let werr = design.weights.iter().fold(0.0f64, |a, w| a.max((w - 1.0 / 6.0).abs()));
    ensure(
        perr <= 1e-3 && werr <= 1e-2,
        format!("point err {perr:.2e}, weight err {werr:.2e}"),
    )?;
    ensure(secs <= 10.0, format!("took {secs:.2}s"))?;
    Ok(format!("point err {perr:.1e}, weight err {werr:.1e}, {secs:.2}s"))
}

fn criterion4(fx: &Fixtures) -> Check {
    let mut lines = Vec::new();
    for (f, (count, tol)) in fx.wynn.iter().zip([(4, 5e-3), (7, 1e-2), (13, 1e-2)]) {
        let design = design_of(f)?;
        ensure(
            design.len() == count,
            format!("d={}: {} atoms, expected {count}", f.d, design.len()),
        )?;
        let golden = polydesign::pipeline::golden_design("wynn_polygon", f.d).expect("table");
        let cmp = polydesign::pipeline::compare_with_golden(design, &golden, tol);
        ensure(
            cmp.passed,
            format!(
                "d={}: coord err {:.2e}, weight err {:.2e}",
                f.d, cmp.max_coordinate_error, cmp.max_weight_error
            ),
        )?;
        if f.d == 1 {
            let ranks = &f.recovery.as_ref().expect("recovered").ranks;
            ensure(
                ranks.rank_high == 4 && ranks.rank_low == 4,
                format!("d=1 ranks ({}, {})", ranks.rank_high, ranks.rank_low),
            )?;
        }
        let secs = f.elapsed.as_secs_f64();
        ensure(secs <= 30.0, format!("d={} took {secs:.2}s", f.d))?;
        lines.push(format!(
            "d={}: {} atoms, err {:.1e}/{:.1e}, {secs:.2}s",
            f.d, count, cmp.max_coordinate_error, cmp.max_weight_error
        ));
    }
    Ok(lines.join("; "))
}

fn criterion5(fx: &Fixtures) -> Check {
    let mut worst = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for f in fx.all() {
        let design = design_of(f)?;
        let basis = RegressionBasis::identity(f.set.n(), f.d).expect("basis");
        let rep = check_design(
            &f.solved.y_star,
            design,
            &f.set,
            &basis,
            Criterion::D,
            &CertifyOptions::default(),
        )
        .map_err(|e| format!("{}: {e}", f.name))?;
        let atom = rep.atom_values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let target = basis_size(f.set.n(), f.d).expect("size") as f64;
        let chr = (rep.max_christoffel_at_atoms - target).abs();
        ensure(
            rep.sample_count >= 2000,
            format!("{}: {} samples", f.name, rep.sample_count),
        )?;
        ensure(
            rep.passed && chr <= 1e-4,
            format!(
                "{}: min p* {:.2e}, riesz {:.2e}, atoms {:.2e}, christoffel err {:.2e}",
                f.name, rep.min_pstar_on_samples, rep.riesz_pstar, atom, chr
            ),
        )?;
        worst = (
            worst.0.min(rep.min_pstar_on_samples),
            worst.1.max(rep.riesz_pstar.abs()),
            worst.2.max(atom),
            worst.3.max(chr),
        );
    }
    Ok(format!(
        "min p* {:.1e}, |riesz| {:.1e}, |p*(atoms)| {:.1e}, christoffel err {:.1e}",
        worst.0, worst.1, worst.2, worst.3
    ))
}

fn random_spd(rng: &mut ChaCha8Rng, p: usize) -> DMatrix<f64> {
    let b = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(p, p) * 0.5
}

fn criterion6(fx: &Fixtures) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    // (a) gradients against central differences
    let mut grad_err = 0.0f64;
    for c in [Criterion::D, Criterion::A, Criterion::E] {
        for _ in 0..20 {
            let m = random_spd(&mut rng, 4);
            let g = grad_phi(&m, c).map_err(|e| e.to_string())?.matrix;
            let h = {
                let b = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
                (&b + b.transpose()) * 0.5
            };
            let step = 1e-5;
            let fd = (phi(&(&m + &h * step), c).unwrap() - phi(&(&m - &h * step), c).unwrap()) / (2.0 * step);
            let an = g.dot(&h);
            grad_err = grad_err.max((an - fd).abs() / fd.abs().max(1e-8));
        }
    }
    ensure(grad_err <= 1e-5, format!("(a) gradient rel err {grad_err:.2e}"))?;
    // (b) homogeneity and Euler
    let mut hom_err = 0.0f64;
    for c in [Criterion::D, Criterion::A, Criterion::E] {
        for _ in 0..20 {
            let m = random_spd(&mut rng, 5);
            let t = rng.gen_range(0.1..10.0);
            let v = phi(&m, c).unwrap();
            hom_err = hom_err.max((phi(&(&m * t), c).unwrap() - t * v).abs() / v.abs().max(1.0) / t.max(1.0));
            let euler = grad_phi(&m, c).unwrap().matrix.dot(&m);
            hom_err = hom_err.max((euler - v).abs() / v.abs().max(1.0));
        }
    }
    ensure(hom_err <= 1e-8, format!("(b) homogeneity/Euler err {hom_err:.2e}"))?;
    // (c) moment and localizing matrices of atomic measures are PSD
    let mut psd = 0.0f64;
    let wynn = semialg::wynn_polygon();
    for k in 0..50u64 {
        let pts = semialg::sample_points(&wynn, 1 + (k as usize % 7), k).map_err(|e| e.to_string())?;
        let mut w: Vec<f64> = pts.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let y = MomentSequence::from_atoms(&pts, &w, 6).unwrap();
        let mut mats = vec![moment_matrix(&y, 3).unwrap().into_entries()];
        for g in wynn.inequalities() {
            mats.push(
                localizing_matrix(&y, g, 3 - g.degree().div_ceil(2))
                    .unwrap()
                    .into_entries(),
            );
        }
        for m in mats {
            let scale = m.amax().max(1.0);
            psd = psd.min(m.symmetric_eigenvalues().min() / scale);
        }
    }
    ensure(psd >= -1e-10, format!("(c) min eigenvalue {psd:.2e}"))?;
    // (d) monotone hierarchy
    let mut worst_rise = f64::NEG_INFINITY;
    for (set, d) in [
        (semialg::interval(), 5),
        (semialg::wynn_polygon(), 1),
        (semialg::wynn_polygon(), 2),
        (semialg::wynn_polygon(), 3),
    ] {
        let cfg = RelaxationConfig::new(set.n(), d, 0, Criterion::D).unwrap();
        let sweep = hierarchy_sweep(&set, &cfg, &[0, 1, 2, 3]).map_err(|e| e.to_string())?;
        let rhos: Vec<f64> = sweep
            .iter()
            .map(|s| s.rho().ok_or("sweep entry failed"))
            .collect::<Result<_, _>>()?;
        for w in rhos.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    ensure(worst_rise <= 1e-7, format!("(d) rho rises by {worst_rise:.2e}"))?;
    // (e) recovery round trip on random atomic measures
    let mut trip = 0.0f64;
    for k in 0..10u64 {
        let count = 1 + (k as usize % 4);
        let pts = semialg::sample_points(&wynn, count, 100 + k).unwrap();
        let w: Vec<f64> = vec![1.0 / count as f64; count];
        let y = MomentSequence::from_atoms(&pts, &w, 4).unwrap();
        let rec = recovery::recover_with_escalation(
            &y,
            None,
            &wynn,
            &RecoveryConfig {
                r: 3,
                ..RecoveryConfig::default()
            },
            5,
        )
        .map_err(|f| {
            format!(
                "(e) round trip {k} failed: {:?}",
                f.attempts.last().and_then(|a| a.error.clone())
            )
        })?;
        trip = trip.max(rec.design.moments(4).unwrap().max_abs_diff(&y).unwrap());
    }
    ensure(trip <= 1e-5, format!("(e) round trip err {trip:.2e}"))?;
    // (f) KKT residuals of the fixture programs
    let mut kkt = 0.0f64;
    for f in fx.all() {
        let diag = &f.solved.diagnostics;
        kkt = kkt
            .max(diag.equality_residual)
            .max(diag.stationarity_residual)
            .max(diag.complementarity.iter().fold(0.0f64, |a, c| a.max(c.abs())));
    }
    ensure(kkt <= 1e-6, format!("(f) KKT residual {kkt:.2e}"))?;
    Ok(format!(
        "grad {grad_err:.1e}, euler {hom_err:.1e}, psd {psd:.1e}, rho rise {worst_rise:.1e}, round trip {trip:.1e}, kkt {kkt:.1e}"
    ))
}

/// Best `phi` over designs `{-a, 0, a}` with `a` on a 200-point grid of
/// `(0, 1]` and weights on the 100-step simplex mesh.
fn symmetric_grid_oracle(c: Criterion, d: usize) -> f64 {
    let basis = RegressionBasis::identity(1, d).unwrap();
    let mut best = f64::NEG_INFINITY;
    for ia in 1..=200 {
        let a = ia as f64 / 200.0;
        let pts = vec![vec![-a], vec![0.0], vec![a]];
        for i in 0..=100 {
            for j in 0..=(100 - i) {
                let w = [i as f64 / 100.0, j as f64 / 100.0, (100 - i - j) as f64 / 100.0];
                let y = MomentSequence::from_atoms(&pts, &w, 2 * d).unwrap();
                if let Ok(v) = criterion_value(&y, &basis, d, c) {
                    if v.is_finite() {
                        best = best.max(v);
                    }
                }
            }
        }
    }
    best
}

fn criterion7() -> Check {
    let set = semialg::interval();
    let basis = RegressionBasis::identity(1, 2).unwrap();
    let mut lines = Vec::new();
    for c in [Criterion::A, Criterion::E] {
        let cfg = RelaxationConfig::new(1, 2, 1, c).unwrap();
        let solved = solve_design(&set, &cfg).map_err(|e| format!("{c}: {e}"))?;
        ensure(
            solved.status == SolverStatus::Optimal,
            format!("{c}: status {:?}", solved.status),
        )?;
        let value = criterion_value(&solved.y_star, &basis, 2, c).unwrap();
        let design = recovery::recover_with_escalation(&solved.y_star, None, &set, &RecoveryConfig::default(), 5)
            .map(|r| r.design)
            .unwrap_or(Design {
                points: Vec::new(),
                weights: Vec::new(),
            });
        let rep = check_design(&solved.y_star, &design, &set, &basis, c, &CertifyOptions::default())
            .map_err(|e| e.to_string())?;
        ensure(
            rep.min_pstar_on_samples >= -1e-6 && rep.riesz_pstar.abs() <= 1e-6,
            format!(
                "{c}: min p* {:.2e}, riesz {:.2e}",
                rep.min_pstar_on_samples, rep.riesz_pstar
            ),
        )?;
        let oracle = symmetric_grid_oracle(c, 2);
        ensure(
            oracle <= value + 1e-3,
            format!("{c}: grid design {oracle:.6} beats {value:.6}"),
        )?;
        lines.push(format!("{c}: phi {value:.6}, grid best {oracle:.6}"));
    }
    Ok(lines.join("; "))
}

fn criterion8() -> Check {
    let set = semialg::sphere3d();
    let fixed: Vec<(MultiIndex, f64)> = FIXED_SPHERE_MOMENTS
        .iter()
        .map(|(e, v)| (MultiIndex::new(e.to_vec()), *v))
        .collect();
    let cfg = RelaxationConfig::new(3, 1, 0, Criterion::D)
        .unwrap()
        .with_fixed_moments(fixed.clone());
    let solved = solve_design(&set, &cfg).map_err(|e| e.to_string())?;
    let mut err = 0.0f64;
    for (a, v) in &fixed {
        err = err.max((solved.y_star.get(a).unwrap() - v).abs());
    }
    ensure(err <= 1e-8, format!("fixed moments off by {err:.2e}"))?;
    let rec = recovery::recover_with_escalation(
        &solved.y_star,
        None,
        &set,
        &RecoveryConfig {
            r: 2,
            ..RecoveryConfig::default()
        },
        5,
    )
    .map_err(|f| {
        format!(
            "constraints held ({err:.1e}); recovery failed after r = {}",
            f.attempts.len() + 1
        )
    })?;
    let design = &rec.design;
    let mut pair = 0.0f64;
    for (i, p) in design.points.iter().enumerate() {
        let opposite = design
            .points
            .iter()
            .position(|q| q.iter().zip(p).all(|(a, b)| (a + b).abs() < 1e-4))
            .ok_or_else(|| format!("atom {i} has no opposite"))?;
        pair = pair.max((design.weights[i] - design.weights[opposite]).abs());
    }
    ensure(
        design.len() == 6,
        format!(
            "constraints held ({err:.1e}); recovered {} atoms at r = {}, opposite weights differ by {pair:.1e}",
            design.len(),
            rec.r
        ),
    )?;
    ensure(pair <= 1e-3, format!("opposite weights differ by {pair:.2e}"))?;
    Ok(format!(
        "constraint err {err:.1e}, 6 atoms, pair weight diff {pair:.1e}"
    ))
}

/// Second moments in the proportions 2 : 1 : 0.01 : 0.95, scaled by 1/4 so
/// that the trace of the second-moment matrix on the sphere stays 1 with
/// `y_200 = 0.25`.
const FIXED_SPHERE_MOMENTS: [([u32; 3], f64); 4] = [
    ([0, 2, 0], 0.5),
    ([0, 0, 2], 0.25),
    ([1, 1, 0], 0.0025),
    ([1, 0, 1], 0.2375),
];

fn run(id: u8, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_else(|| "panicked".into()))
    });
    let passed = outcome.is_ok();
    let note = if !passed && KNOWN_FAILURES.contains(&id) {
        " (known)"
    } else {
        ""
    };
    match outcome {
        Ok(detail) => println!(
            "criterion {id}: PASS - {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        ),
        Err(detail) => println!(
            "criterion {id}: FAIL{note} - {detail} [{:.1}s]",
            start.elapsed().as_secs_f64()
        ),
    }
    passed
}

fn main() {
    let start = Instant::now();
    let fixtures = Fixtures {
        interval: fixture("interval", semialg::interval(), 5, 0, 1),
        sphere: fixture("sphere", semialg::sphere3d(), 1, 0, 2),
        wynn: (1..=3)
            .map(|d| fixture("wynn", semialg::wynn_polygon(), d, 3, 3))
            .collect(),
    };
    println!("fixtures solved and recovered in {:.1}s", start.elapsed().as_secs_f64());
    let results = [
        run(1, || criterion1(&fixtures)),
        run(2, || criterion2(&fixtures)),
        run(3, || criterion3(&fixtures)),
        run(4, || criterion4(&fixtures)),
        run(5, || criterion5(&fixtures)),
        run(6, || criterion6(&fixtures)),
        run(7, criterion7),
        run(8, criterion8),
    ];
    let mut unexpected = Vec::new();
    for (i, passed) in results.iter().enumerate() {
        let id = i as u8 + 1;
        if *passed == KNOWN_FAILURES.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
