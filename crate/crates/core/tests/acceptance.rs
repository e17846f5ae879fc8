//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
//! if any criterion fails.

use std::time::Instant;

use penflow::diagnostics::{consensus_error, fit_exponential_rate, optimality_residual, RunRecord, DEFAULT_RATE_WINDOW};
use penflow::dynamics::{run, IntegratorConfig, Scheme};
use penflow::experiment::{generate_example1, generate_example2, ExperimentConfig};
use penflow::harness::{run_experiment, ORACLE_FILE, SUMMARY_FILE, TRAJECTORY_FILE};
use penflow::network::{build_topology, Topology};
use penflow::oracle::{solve_centralized, OracleSolution, DEFAULT_TOL};
use penflow::penalty::{consensus_distance, penalty_h, Problem};
use penflow::sets::ConvexSet;
use penflow::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(v: &Verdict) {
    println!("{} [{}] {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.id, v.name, v.detail);
}

struct Trial {
    seed: u64,
    problem: Problem,
    oracle: OracleSolution,
    oracle_secs: f64,
    record: RunRecord,
    run_secs: f64,
}

fn trial(cfg: &ExperimentConfig) -> Trial {
    let inst = cfg.build().expect("generated configs build");
    let t0 = Instant::now();
    let oracle = solve_centralized(inst.problem.objectives(), inst.problem.sets(), DEFAULT_TOL).expect("oracle");
    let oracle_secs = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let record = run(&inst.problem, &inst.x0, &cfg.integrator, cfg.seed, Some(&oracle.x_star())).expect("run");
    let run_secs = t1.elapsed().as_secs_f64();
    Trial { seed: cfg.seed, problem: inst.problem, oracle, oracle_secs, record, run_secs }
}

fn unit_vector(rng: &mut ChaCha8Rng, m: usize) -> Vector {
    loop {
        let u = Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(-1.0..1.0)));
        let n = u.norm();
        if n > 1e-3 {
            return u / n;
        }
    }
}

/// Worst `‖tangent_project(x, v) − (project(x + δv) − x)/δ‖ / (10 δ ‖v‖²)` over
/// `count` triples drawn by `draw`.
fn tangent_suite(count: usize, mut draw: impl FnMut() -> (ConvexSet, Vector, Vector)) -> f64 {
    let delta = 1e-7;
    let mut worst = 0.0f64;
    for _ in 0..count {
        let (set, x, v) = draw();
        let exact = set.tangent_project(&x, &v).expect("x lies on the set");
        let fd = (set.project(&(&x + &v * delta)) - &x) / delta;
        worst = worst.max((exact - fd).norm() / (10.0 * delta * v.norm_squared()));
    }
    worst
}

fn criterion1() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let box_worst = tangent_suite(1000, || {
        let m = rng.gen_range(1..=5);
        let lower = Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(-2.0..0.0)));
        let upper = Vector::from_iterator(m, lower.iter().map(|l| l + rng.gen_range(0.5..3.0)));
        let x = Vector::from_iterator(
            m,
            (0..m).map(|k| match rng.gen_range(0..3) {
                0 => lower[k],
                1 => upper[k],
                _ => rng.gen_range(lower[k] + 0.1..upper[k] - 0.1),
            }),
        );
        let v = unit_vector(&mut rng, m) * rng.gen_range(0.5..2.0);
        (ConvexSet::new_box(lower, upper).unwrap(), x, v)
    });
    let mut rng = ChaCha8Rng::seed_from_u64(0xba11);
    let ball_worst = tangent_suite(1000, || {
        let m = rng.gen_range(1..=5);
        let center = Vector::from_iterator(m, (0..m).map(|_| rng.gen_range(-1.0..1.0)));
        let radius = rng.gen_range(0.5..2.0);
        let dir = unit_vector(&mut rng, m);
        let on_boundary = rng.gen_bool(0.6);
        let x = if on_boundary { &center + &dir * radius } else { &center + &dir * (radius * rng.gen_range(0.0..0.9)) };
        let mut v = unit_vector(&mut rng, m) * rng.gen_range(0.5..2.0);
        if on_boundary && rng.gen_bool(0.5) && v.dot(&dir) < 0.0 {
            v = -v;
        }
        (ConvexSet::new_ball(center, radius).unwrap(), x, v)
    });
    let secs = t0.elapsed().as_secs_f64();
    Verdict {
        id: 1,
        name: "projection oracle suite",
        pass: box_worst <= 1.0 && ball_worst <= 1.0 && secs < 5.0,
        detail: format!(
            "1000 box + 1000 ball triples, worst error/tolerance box {box_worst:.3e} ball {ball_worst:.3e}, {secs:.2} s (< 5 s)"
        ),
    }
}

fn criterion2(ex1: &[Trial], ex2: &[Trial]) -> Verdict {
    let mut worst = 0.0f64;
    let mut worst_ratio = 0.0f64;
    let mut points = 0usize;
    for t in ex1.iter().chain(ex2) {
        for states in &t.record.states {
            for (x, set) in states.iter().zip(t.problem.sets()) {
                let r = set.normal_residual(x);
                worst = worst.max(r);
                worst_ratio = worst_ratio.max(r / (f64::EPSILON * (1.0 + x.amax())));
                points += 1;
            }
        }
    }
    let secs: f64 = ex1.iter().chain(ex2).map(|t| t.run_secs).sum();
    Verdict {
        id: 2,
        name: "feasibility invariance",
        pass: worst_ratio <= 4.0 && secs < 60.0,
        detail: format!(
            "{points} recorded agent states over 10 runs, max normal residual {worst:.3e} ({worst_ratio:.1} ulp-scaled, <= 4), runs {secs:.2} s (< 60 s)"
        ),
    }
}

fn criterion3(ex1: &[Trial]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in ex1 {
        let c = t.record.final_consensus();
        let ok = c <= 1e-3 && t.run_secs < 30.0 && t.record.steps_taken <= 200_000;
        pass &= ok;
        parts.push(format!("seed {} {:.2e} in {} steps/{:.2} s", t.seed, c, t.record.steps_taken, t.run_secs));
    }
    Verdict { id: 3, name: "consensus on Example 1", pass, detail: format!("final consensus <= 1e-3: {}", parts.join("; ")) }
}

fn criterion4(ex2: &[Trial]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in ex2 {
        let x_star = t.oracle.x_star();
        let finals = t.record.final_states();
        let dev = finals.iter().map(|x| (x - &x_star).norm()).fold(0.0, f64::max);
        let l_end = t.problem.penalized_value(finals).unwrap();
        let gap = (l_end - t.oracle.f_star).abs() / (1.0 + t.oracle.f_star.abs());
        let secs = t.oracle_secs + t.run_secs;
        let ok = dev <= 1e-2 && gap <= 1e-3 && secs < 120.0 && t.problem.is_certified();
        pass &= ok;
        parts.push(format!("seed {} dev {dev:.2e} gap {gap:.2e} {secs:.2} s", t.seed));
    }
    Verdict {
        id: 4,
        name: "penalty equivalence on Example 2",
        pass,
        detail: format!("max_i |x_i - x*| <= 1e-2, relative gap <= 1e-3: {}", parts.join("; ")),
    }
}

fn criterion5(ex1: &[Trial], ex2: &[Trial]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in ex2 {
        let beta = t.problem.beta();
        match fit_exponential_rate(&t.record, DEFAULT_RATE_WINDOW) {
            Ok(fit) => {
                let ok = fit.slope <= -0.5 * beta && fit.r_squared >= 0.95;
                pass &= ok;
                parts.push(format!("seed {} slope {:.2} (beta {:.3}) R2 {:.4}", t.seed, fit.slope, beta, fit.r_squared));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("seed {} fit failed: {e}", t.seed));
            }
        }
    }
    let t = &ex1[0];
    let info = match fit_exponential_rate(&t.record, DEFAULT_RATE_WINDOW) {
        Ok(fit) => format!("slope {:.2}, R2 {:.4}", fit.slope, fit.r_squared),
        Err(e) => format!("no fit ({e})"),
    };
    let v = t.record.v_values.as_ref().unwrap();
    println!(
        "INFO [5] Example 1 seed {} (beta = {}): V {:.3e} -> {:.3e}, final consensus {:.2e}, {info}; no rate requirement",
        t.seed,
        t.problem.beta(),
        v[0],
        v[v.len() - 1],
        t.record.final_consensus()
    );
    Verdict {
        id: 5,
        name: "exponential rate on Example 2",
        pass,
        detail: format!("slope <= -0.5 beta and R2 >= 0.95 on [10%, 60%]: {}", parts.join("; ")),
    }
}

fn criterion6(ex2: &[Trial]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for t in ex2 {
        let at_run = optimality_residual(t.record.final_states(), &t.problem).unwrap();
        let replicated = vec![t.oracle.x_star(); t.problem.n()];
        let at_oracle = optimality_residual(&replicated, &t.problem).unwrap();
        let ok = at_run <= 1e-3 && at_oracle <= 1e-6;
        pass &= ok;
        parts.push(format!("seed {} run {at_run:.2e} oracle {at_oracle:.2e}", t.seed));
    }
    Verdict {
        id: 6,
        name: "optimality residual",
        pass,
        detail: format!("converged <= 1e-3, replicated oracle <= 1e-6: {}", parts.join("; ")),
    }
}

fn criterion7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x1e3);
    let mut worst = f64::NEG_INFINITY;
    let mut mismatch = 0.0f64;
    let mut cases = 0;
    for topology in [Topology::Star, Topology::Cycle] {
        for _ in 0..10_000 {
            let n = rng.gen_range(2..=12);
            let m = rng.gen_range(1..=4);
            let g = build_topology(&topology, n).unwrap();
            let scale = 10f64.powi(rng.gen_range(-3..=2));
            let xs: Vec<Vector> = (0..n)
                .map(|_| Vector::from_iterator(m, (0..m).map(|_| scale * rng.gen_range(-1.0..1.0))))
                .collect();
            let d = consensus_distance(&xs);
            let h = penalty_h(&g, &xs);
            // independent evaluation of both quantities
            let mean = xs.iter().fold(Vector::zeros(m), |a, x| a + x) / n as f64;
            let d_ref: f64 = xs.iter().map(|x| (x - &mean).norm()).sum();
            let h_ref: f64 = g.edges().iter().map(|&(i, j)| (&xs[i] - &xs[j]).abs().sum()).sum();
            mismatch = mismatch.max((d - d_ref).abs() / (1.0 + d_ref)).max((h - h_ref).abs() / (1.0 + h_ref));
            worst = worst.max(d - n as f64 * h);
            cases += 1;
        }
    }
    Verdict {
        id: 7,
        name: "d(x) <= n h(x)",
        pass: worst <= 1e-12 && mismatch <= 1e-12,
        detail: format!("{cases} configurations on star and cycle graphs, max d - n h = {worst:.3e}, reference mismatch {mismatch:.1e}"),
    }
}

fn criterion8() -> Verdict {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        run_experiment(&generate_example2(7).unwrap(), Some(d.path())).expect("run succeeds");
    }
    let mut same = true;
    let mut sizes = Vec::new();
    for file in [TRAJECTORY_FILE, SUMMARY_FILE, ORACLE_FILE] {
        let a = std::fs::read(dirs[0].path().join(file)).unwrap();
        let b = std::fs::read(dirs[1].path().join(file)).unwrap();
        same &= a == b;
        sizes.push(format!("{file} {} B", a.len()));
    }
    Verdict {
        id: 8,
        name: "determinism",
        pass: same,
        detail: format!("two Example 2 seed 7 runs byte-identical: {}", sizes.join(", ")),
    }
}

/// The plain explicit scheme on Example 1, for comparison with the default.
fn explicit_info() {
    let cfg = generate_example1(1).unwrap();
    let inst = cfg.build().unwrap();
    let icfg = IntegratorConfig { scheme: Scheme::Explicit, record_every: 1000, ..cfg.integrator.clone() };
    let t0 = Instant::now();
    let rec = run(&inst.problem, &inst.x0, &icfg, 1, None).unwrap();
    println!(
        "INFO explicit scheme on Example 1 seed 1: final consensus {:.3e} after {} steps (min over record {:.3e}), residual {:.3e}, {:.2} s",
        consensus_error(rec.final_states()),
        rec.steps_taken,
        rec.consensus.iter().copied().fold(f64::INFINITY, f64::min),
        rec.final_residual(),
        t0.elapsed().as_secs_f64()
    );
}

fn main() {
    let mut verdicts = Vec::new();
    let push = |v: Verdict, all: &mut Vec<Verdict>| {
        report(&v);
        all.push(v);
    };
    push(criterion1(), &mut verdicts);
    let ex1: Vec<Trial> = SEEDS.iter().map(|&s| trial(&generate_example1(s).unwrap())).collect();
    let ex2: Vec<Trial> = SEEDS.iter().map(|&s| trial(&generate_example2(s).unwrap())).collect();
    push(criterion2(&ex1, &ex2), &mut verdicts);
    push(criterion3(&ex1), &mut verdicts);
    push(criterion4(&ex2), &mut verdicts);
    push(criterion5(&ex1, &ex2), &mut verdicts);
    push(criterion6(&ex2), &mut verdicts);
    push(criterion7(), &mut verdicts);
    push(criterion8(), &mut verdicts);
    explicit_info();

    let failed: Vec<u8> = verdicts.iter().filter(|v| !v.pass).map(|v| v.id).collect();
    println!("acceptance: {} of {} criteria passed", verdicts.len() - failed.len(), verdicts.len());
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
