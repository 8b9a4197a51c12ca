//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use prosumer_game::cgt::{brute_force_ne, kkt_verify, relaxation_solve};
use prosumer_game::config::{GeneratorConfig, Population, ScenarioConfig};
use prosumer_game::game::{InitialProfile, RelaxationSettings};
use prosumer_game::market::{cgt_expected_utility, feasible_bounds, ProsumerParams, ProspectParams, Scenario};
use prosumer_game::prospect::{
    branch_breakpoints, classify_concavity, pt_expected_utility, pt_expected_utility_mc, pt_value, PtBranch,
    PtUtilityTerms,
};
use prosumer_game::pt_solver::{relaxation_solve_pt, sequential_best_response, PtSearchSettings};
use prosumer_game::stackelberg::{epsilon_se_grid, verify_se, FollowerSettings};
use prosumer_game::sweep::{run_sweep, GridRange, SweepKind, SweepSpec, SweepTable};
use prosumer_game::ActionProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Relaxation settings tight enough that action error is far below 1e-8.
fn tight() -> RelaxationSettings {
    RelaxationSettings {
        tol: 1e-20,
        ..Default::default()
    }
}

fn tight_search() -> PtSearchSettings {
    PtSearchSettings {
        step_tol: 1e-11,
        max_sweeps: 5000,
        ..Default::default()
    }
}

#[derive(Default)]
struct Context {
    /// Converged expected-utility equilibria collected along the way.
    cgt_equilibria: Vec<(String, Scenario, ActionProfile)>,
    reference_table: Option<SweepTable>,
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn closed_form_ne(ctx: &mut Context) -> Verdict {
    let s = common::symmetric_scenario();
    let start = Instant::now();
    let rep = relaxation_solve(&s, &tight()).unwrap();
    let elapsed = start.elapsed();
    let err = rep.profile.as_slice().iter().map(|x| (x + 0.1).abs()).fold(0.0, f64::max);
    if rep.converged {
        ctx.cgt_equilibria.push(("symmetric".into(), s, rep.profile.clone()));
    }
    verdict(
        rep.converged && err <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max |x + 0.1| = {err:.2e}, {} iterations, {elapsed:.2?}", rep.iterations),
    )
}

fn uniqueness(ctx: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut all_converged = true;
    for k in 0..10 {
        let n = rng.gen_range(2..=9);
        let s = common::random_scenario(&mut rng, n);
        let mut found: Vec<ActionProfile> = Vec::new();
        for _ in 0..20 {
            let start = common::random_profile(&mut rng, &s);
            let settings = RelaxationSettings {
                initial: InitialProfile::Given(start),
                ..tight()
            };
            let rep = relaxation_solve(&s, &settings).unwrap();
            all_converged &= rep.converged;
            for other in &found {
                worst = worst.max(rep.profile.sup_distance(other));
            }
            found.push(rep.profile);
        }
        ctx.cgt_equilibria.push((format!("uniqueness #{k}"), s, found[0].clone()));
    }
    verdict(
        all_converged && worst <= 1e-6,
        format!("largest pairwise sup distance {worst:.2e} over 10 scenarios x 20 starts"),
    )
}

fn rate(ctx: &mut Context) -> Verdict {
    let s = ScenarioConfig::default().build().unwrap();
    let settings = RelaxationSettings {
        max_iters: 100_000,
        tol: f64::MIN_POSITIVE,
        ..Default::default()
    };
    let rep = relaxation_solve(&s, &settings).unwrap();
    let r100 = rep
        .residual_trace
        .iter()
        .find(|(t, _)| *t == 100)
        .map(|(_, r)| *r)
        .unwrap_or(f64::NAN);
    let mut violations = 0;
    let mut logged = 0;
    for &(t, r) in rep.residual_trace.iter().filter(|(t, _)| (100..=100_000).contains(t)) {
        logged += 1;
        let bound = r100 * (t as f64 / 100.0).powf(-0.25);
        if r > bound {
            violations += 1;
        }
    }
    let final_rep = relaxation_solve(&s, &tight()).unwrap();
    if final_rep.converged {
        ctx.cgt_equilibria.push(("rate scenario".into(), s, final_rep.profile));
    }
    verdict(
        r100.is_finite() && logged > 0 && violations == 0,
        format!("residual(100) = {r100:.2e}, {violations} of {logged} logged iterates above the bound"),
    )
}

fn oracle_equivalence(ctx: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = Instant::now();
    let mut ok = true;
    let mut worst_cells: f64 = 0.0;
    for k in 0..5 {
        let s = common::random_scenario(&mut rng, 2);
        let rep = relaxation_solve(&s, &tight()).unwrap();
        let bf = brute_force_ne(&s, 501).unwrap();
        for n in 0..2 {
            let cells = (rep.profile[n] - bf.profile[n]).abs() / bf.spacing[n];
            worst_cells = worst_cells.max(cells);
            ok &= cells <= 1.0 + 1e-9;
        }
        ok &= rep.converged;
        ctx.cgt_equilibria.push((format!("oracle #{k}"), s, rep.profile));
    }
    let elapsed = start.elapsed();
    verdict(
        ok && elapsed < Duration::from_secs(30),
        format!("largest gap {worst_cells:.3} grid cells, {elapsed:.2?}"),
    )
}

fn kkt(ctx: &mut Context) -> Verdict {
    let mut worst: f64 = 0.0;
    let mut failed = Vec::new();
    for (name, s, x) in &ctx.cgt_equilibria {
        let cert = kkt_verify(x, s, 1e-6).unwrap();
        worst = worst.max(cert.max_residual());
        if !cert.passed() {
            failed.push(name.clone());
        }
    }
    verdict(
        failed.is_empty() && !ctx.cgt_equilibria.is_empty(),
        format!(
            "{} equilibria, largest residual {worst:.2e}{}",
            ctx.cgt_equilibria.len(),
            if failed.is_empty() { String::new() } else { format!(", failed: {failed:?}") }
        ),
    )
}

fn pt_closed_form(_: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_z: f64 = 0.0;
    let mut counts = [0usize; 4];
    let mut ok = true;
    for k in 0..100 {
        let m = common::random_market(&mut rng);
        let prospect = common::random_prospect(&mut rng);
        let mut p = common::random_prosumer(&mut rng, prospect);
        let other = common::random_prosumer(&mut rng, ProspectParams::default());
        let branch = k % 4;
        let own = if branch == 3 {
            // integral energies make the storage term exactly zero at the lower bound
            p.w = p.w.round();
            p.l = p.l.round();
            p.q = 0.0;
            feasible_bounds(&p).0
        } else {
            let (lo, hi) = feasible_bounds(&p);
            rng.gen_range(lo + 0.05 * (hi - lo)..=hi)
        };
        let profile = ActionProfile::new(vec![own, rng.gen_range(feasible_bounds(&other).0..=feasible_bounds(&other).1)]);
        let t = PtUtilityTerms::new(own, profile[1], &m, &p);
        let (u_lo, u_hi) = (t.c * m.rho_min + t.d, t.c * m.rho_max + t.d);
        p.prospect.reference = match branch {
            0 => u_lo - rng.gen_range(0.1..2.0),
            1 => u_lo + rng.gen_range(0.1..0.9) * (u_hi - u_lo),
            2 => u_hi + rng.gen_range(0.1..2.0),
            _ => t.d + rng.gen_range(-1.0..1.0),
        };
        let s = Scenario::new(vec![p, other], m).unwrap();
        let expected = [PtBranch::Gains, PtBranch::Mixed, PtBranch::Losses, PtBranch::Deterministic][branch];
        if t.branch(&m, &p.prospect) == expected {
            counts[branch] += 1;
        }
        let closed = pt_expected_utility(0, &profile, &s);
        let (mc, se) = pt_expected_utility_mc(0, &profile, &s, 1_000_000, 1000 + k as u64);
        let diff = (closed - mc).abs();
        if se > 0.0 {
            worst_z = worst_z.max(diff / se);
        }
        ok &= diff <= 3.0 * se;
    }
    let covered = counts.iter().all(|&c| c == 25);

    let mut worst_jump: f64 = 0.0;
    let mut boundaries = 0;
    for _ in 0..200 {
        let m = common::random_market(&mut rng);
        let prospect = common::random_prospect(&mut rng);
        let p = common::random_prosumer(&mut rng, prospect);
        let others = rng.gen_range(-20.0..20.0);
        for x in branch_breakpoints(feasible_bounds(&p), others, &m, &p) {
            boundaries += 1;
            // extrapolate each side linearly to the boundary
            let h = 1e-12 * x.abs().max(1.0);
            let f = |x: f64| pt_value(x, others, &m, &p);
            let left = 2.0 * f(x - h) - f(x - 2.0 * h);
            let right = 2.0 * f(x + h) - f(x + 2.0 * h);
            let jump = (left - right).abs();
            worst_jump = worst_jump.max(jump);
        }
    }
    verdict(
        ok && covered && worst_jump <= 1e-9 && boundaries > 0,
        format!(
            "largest |closed - mc| = {worst_z:.2} SE, branches hit {counts:?}, largest jump {worst_jump:.1e} over {boundaries} boundaries"
        ),
    )
}

fn pt_reductions(_: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_affine: f64 = 0.0;
    let mut worst_solver: f64 = 0.0;
    let mut ok = true;
    let mut stalled = Vec::new();
    for _ in 0..10 {
        let n = rng.gen_range(2..=6);
        let r = rng.gen_range(-5.0..5.0);
        let m = common::random_market(&mut rng);
        let ps = (0..n).map(|_| common::random_prosumer(&mut rng, ProspectParams::neutral(r))).collect();
        let s = Scenario::new(ps, m).unwrap();
        for _ in 0..100 {
            let x = common::random_profile(&mut rng, &s);
            for k in 0..n {
                let gap = (pt_expected_utility(k, &x, &s) - (cgt_expected_utility(k, &x, &s.market, &s.prosumers[k]) - r)).abs();
                worst_affine = worst_affine.max(gap);
            }
        }
        let cgt = relaxation_solve(&s, &tight()).unwrap();
        let ptr = relaxation_solve_pt(&s, &tight(), &PtSearchSettings::default()).unwrap();
        let seq = sequential_best_response(&s, &tight_search()).unwrap();
        for (name, converged) in [("cgt relaxation", cgt.converged), ("pt relaxation", ptr.converged), ("sequential", seq.converged)] {
            if !converged {
                ok = false;
                stalled.push(name);
            }
        }
        worst_solver = worst_solver
            .max(cgt.profile.sup_distance(&ptr.profile))
            .max(cgt.profile.sup_distance(&seq.profile));
    }

    let mut worst_tail: f64 = 0.0;
    let base = ScenarioConfig::default().build().unwrap();
    let cgt = relaxation_solve(&base, &tight()).unwrap();
    // payoffs near 1e6 put a floor of about 1e-8 kWh under best-response moves
    let far = PtSearchSettings {
        step_tol: 1e-7,
        ..tight_search()
    };
    for r in [-1e6, 1e6] {
        let mut s = base.clone();
        for p in &mut s.prosumers {
            p.prospect.reference = r;
        }
        let seq = sequential_best_response(&s, &far).unwrap();
        if !seq.converged {
            ok = false;
            stalled.push("far-reference sequential");
        }
        worst_tail = worst_tail.max(seq.profile.sup_distance(&cgt.profile));
    }
    verdict(
        ok && worst_affine <= 1e-10 && worst_solver <= 1e-6 && worst_tail <= 1e-6,
        format!(
            "affine gap {worst_affine:.1e}, solver disagreement {worst_solver:.1e}, far-reference gap {worst_tail:.1e}{}",
            if stalled.is_empty() { String::new() } else { format!(", not converged: {stalled:?}") }
        ),
    )
}

fn concavity_soundness(_: &mut Context) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut found = 0;
    let mut tried = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    while found < 50 && tried < 100_000 {
        tried += 1;
        let m = common::random_market(&mut rng);
        let prospect = ProspectParams::new(rng.gen_range(1.0..4.0), 1.0, 1.0, rng.gen_range(-6.0..8.0)).unwrap();
        let p: ProsumerParams = common::random_prosumer(&mut rng, prospect);
        let others = rng.gen_range(-30.0..30.0);
        let bounds = feasible_bounds(&p);
        if !classify_concavity(bounds, others, &m, &p).concavity_guaranteed() {
            continue;
        }
        found += 1;
        let (lo, hi) = bounds;
        let h = (hi - lo) / 2000.0;
        for i in 1..2000 {
            let x = lo + i as f64 * h;
            let d2 = pt_value(x + h, others, &m, &p) - 2.0 * pt_value(x, others, &m, &p) + pt_value(x - h, others, &m, &p);
            worst = worst.max(d2);
        }
    }
    verdict(
        found == 50 && worst <= 1e-6,
        format!("{found} classified instances from {tried} draws, largest second difference {worst:.2e}"),
    )
}

fn monopoly(_: &mut Context) -> Verdict {
    let s = common::monopoly_scenario();
    let mut f = FollowerSettings::cgt();
    f.relaxation = tight();
    let res = epsilon_se_grid(&s, 1e-3, &f).unwrap();
    let check = verify_se(&res, &s, &f, 1e-3).unwrap();
    verdict(
        (res.rho_star - 0.03).abs() <= 1e-3 && (res.leader_profit - 0.001).abs() <= 1e-5 && check.passed(),
        format!(
            "rho* = {:.6}, profit = {:.8}, follower gain {:.1e}, leader regret {:.1e}",
            res.rho_star, res.leader_profit, check.follower_gain, check.leader_regret
        ),
    )
}

fn reference_shape(ctx: &mut Context) -> Verdict {
    let table = run_sweep(&SweepSpec::new(SweepKind::Reference, ScenarioConfig::default())).unwrap();
    let r = table.column("r");
    let cgt = table.column("total_load_cgt_kwh");
    let pt = table.column("total_load_pt_kwh");
    let last = r.len() - 1;
    let near = |i: usize| (pt[i] - cgt[i]).abs() <= 0.02 * cgt[i].abs();
    let (imin, _) = (1..last).map(|i| (i, pt[i])).fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    let dip = (cgt[imin] - pt[imin]) / cgt[imin].abs();
    let above = (1..last).any(|i| pt[i] > cgt[i]);
    let passed = r[0] == -4.0 && r[last] == 8.0 && near(0) && near(last) && dip >= 0.05 && above && table.all_converged();
    let detail = format!(
        "endpoint gaps {:.3}% / {:.3}%, deepest dip {:.2}% at r = {}, rise above cgt: {above}",
        100.0 * (pt[0] - cgt[0]) / cgt[0].abs(),
        100.0 * (pt[last] - cgt[last]) / cgt[last].abs(),
        100.0 * dip,
        r[imin]
    );
    ctx.reference_table = Some(table);
    verdict(passed, detail)
}

fn profit_gap(ctx: &mut Context) -> Verdict {
    let table = run_sweep(&SweepSpec::new(SweepKind::ProfitGap, ScenarioConfig::default())).unwrap();
    let r = table.column("r");
    let aware = table.column("profit_pt_aware_usd");
    let naive = table.column("profit_cgt_assuming_usd");
    let dominated = aware.iter().zip(&naive).all(|(a, n)| a >= n);
    let r_min = ctx.reference_table.as_ref().map(|t| {
        let rr = t.column("r");
        let pt = t.column("total_load_pt_kwh");
        let i = (1..rr.len() - 1).fold(1, |b, i| if pt[i] < pt[b] { i } else { b });
        rr[i]
    });
    let gap = r_min
        .and_then(|rm| r.iter().position(|&v| v == rm))
        .map(|i| (aware[i] - naive[i]) / naive[i].abs());
    let strict = gap.is_some_and(|g| g > 0.01);
    verdict(
        dominated && strict,
        format!(
            "pt-aware >= cgt-assuming at every r: {dominated}; relative gap at r = {:?}: {:.3}%",
            r_min,
            100.0 * gap.unwrap_or(f64::NAN)
        ),
    )
}

fn sequential_convergence(_: &mut Context) -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for n in [10, 30, 50, 70] {
        let cfg = ScenarioConfig {
            population: Population::Generated(GeneratorConfig {
                n,
                ..Default::default()
            }),
            ..Default::default()
        };
        let rep = sequential_best_response(&cfg.build().unwrap(), &PtSearchSettings::default()).unwrap();
        let eps = rep.epsilon.unwrap_or(f64::INFINITY);
        ok &= rep.converged && rep.iterations <= 500 && eps <= 1e-4;
        parts.push(format!("n={n}: {} sweeps, eps {eps:.1e}", rep.iterations));
    }
    let elapsed = start.elapsed();
    verdict(
        ok && elapsed < Duration::from_secs(300),
        format!("{}; {elapsed:.2?}", parts.join(", ")),
    )
}

fn determinism(_: &mut Context) -> Verdict {
    let mut identical = true;
    let mut bytes = 0;
    for kind in SweepKind::ALL {
        let mut spec = SweepSpec::new(kind, ScenarioConfig::default().with_seed(11));
        spec.range = match kind {
            SweepKind::ProfitGap => GridRange::new(0.0, 2.0, 1.0),
            SweepKind::Population | SweepKind::Convergence => GridRange::new(5.0, 15.0, 5.0),
            SweepKind::PriceResponse => GridRange::new(-0.1, 0.1, 0.05),
            _ => kind.default_range(),
        };
        let render = || {
            let mut buf = Vec::new();
            run_sweep(&spec).unwrap().write_csv(&mut buf).unwrap();
            buf
        };
        let a = render();
        let b = render();
        bytes += a.len();
        identical &= a == b;
    }
    verdict(identical, format!("six sweeps rendered twice, {bytes} bytes compared"))
}

type Criterion = (u32, &'static str, fn(&mut Context) -> Verdict);

fn main() -> ExitCode {
    let criteria: [Criterion; 13] = [
        (1, "closed-form equilibrium", closed_form_ne),
        (2, "uniqueness across starts", uniqueness),
        (3, "relaxation rate bound", rate),
        (4, "brute-force oracle agreement", oracle_equivalence),
        (5, "KKT certificate", kkt),
        (6, "PT closed form vs Monte Carlo", pt_closed_form),
        (7, "PT reductions", pt_reductions),
        (8, "concavity classifier soundness", concavity_soundness),
        (9, "monopoly Stackelberg", monopoly),
        (10, "reference sweep shape", reference_shape),
        (11, "profit gap", profit_gap),
        (12, "sequential convergence", sequential_convergence),
        (13, "sweep determinism", determinism),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let v = check(&mut ctx);
        if !v.passed {
            failed += 1;
        }
        println!(
            "[{}] {id:>2} {name}: {} ({:.1?})",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
