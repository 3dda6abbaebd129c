//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use iocc::data::{generate_synthetic, SyntheticSpec};
use iocc::eval::{hungarian_accuracy, nmi};
use iocc::gradcheck;
use iocc::ieot::{
    mm_solve, objective, similarity_matrix, surrogate_objective, SolverOptions, TransportPlan, TransportProblem,
};
use iocc::trainer::{train, TrainConfig, TrainState};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ORACLE_TOL: f64 = 1e-3;
const SINKHORN_TOL: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-6;
const MONOTONE_SLACK: f64 = 1e-8;
const SURROGATE_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-4;
const MIN_ACC: f64 = 0.95;
const MIN_NMI: f64 = 0.90;

struct Outcome {
    id: u8,
    title: &'static str,
    passed: bool,
    detail: String,
}

/// Feasibility and monotonicity record of one solver call.
#[derive(Default)]
struct SolverAudit {
    calls: usize,
    worst_residual: f64,
    worst_increase: f64,
}

impl SolverAudit {
    fn record(&mut self, plan: &TransportPlan, a: &Array1<f64>) {
        self.calls += 1;
        self.worst_residual = self
            .worst_residual
            .max(plan.row_residual(a.view()))
            .max(plan.col_residual());
        for w in plan.objective_trace.windows(2) {
            self.worst_increase = self.worst_increase.max(w[1] - w[0]);
        }
    }

    fn ok(&self) -> bool {
        self.worst_residual <= RESIDUAL_TOL && self.worst_increase <= MONOTONE_SLACK
    }
}

fn solve(p0: Array2<f64>, eps1: f64, eps2: f64, eps3: f64, seed: u64, audit: &mut SolverAudit) -> (TransportPlan, Array1<f64>) {
    let problem = TransportProblem::new(p0, eps1, eps2, eps3, 10, 10).expect("valid problem");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plan = mm_solve(&problem, &SolverOptions::default(), &mut rng).expect("solver");
    audit.record(&plan, &problem.a);
    (plan, problem.a)
}

fn oracle_agreement(audit: &mut SolverAudit) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for inst in 0..20u64 {
        let p0 = common::random_rows(6, 3, 100 + inst);
        let eps2 = if inst % 2 == 0 { 1.2 } else { 1000.0 };
        let eps3 = if inst % 4 < 2 { 0.0 } else { 25.0 * 6.0 / 200.0 };
        let (plan, _) = solve(common::to_array(&p0), 1.0, eps2, eps3, inst, audit);
        let best = common::pgd_oracle(&p0, 1.0, eps2, eps3, 50, inst);
        worst = worst.max((plan.objective_trace.last().unwrap() - best).abs());
    }
    let elapsed = start.elapsed();
    Outcome {
        id: 1,
        title: "transport solver matches brute-force oracle",
        passed: worst <= ORACLE_TOL && elapsed < Duration::from_secs(60),
        detail: format!(
            "20 instances, max |objective - oracle| = {worst:.2e} (tol {ORACLE_TOL:.0e}), {:.1}s (limit 60s)",
            elapsed.as_secs_f64()
        ),
    }
}

fn sinkhorn_equivalence(audit: &mut SolverAudit) -> Outcome {
    let mut worst = 0.0f64;
    for inst in 0..10u64 {
        let p0 = common::random_rows(8, 4, 500 + inst);
        let (plan, _) = solve(common::to_array(&p0), 1.0, 1e6, 0.0, inst, audit);
        let cost: common::Mat = p0.iter().map(|r| r.iter().map(|p| -p.ln()).collect()).collect();
        let reference = common::sinkhorn(&cost, &[1.0 / 8.0; 8], &[0.25; 4], 1.0, 5000);
        for (i, row) in reference.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                worst = worst.max((plan.q[[i, j]] - r).abs());
            }
        }
    }
    Outcome {
        id: 2,
        title: "pinned marginal reduces to standard Sinkhorn",
        passed: worst <= SINKHORN_TOL,
        detail: format!("10 instances 8x4, max |Q - Q_ref| = {worst:.2e} (tol {SINKHORN_TOL:.0e})"),
    }
}

fn random_feasible(p: &Array2<f64>, rng: &mut ChaCha8Rng, spread: f64) -> Array2<f64> {
    let n = p.nrows() as f64;
    let mut q = p.mapv(|v| v * (spread * rng.random_range(-1.0..1.0f64)).exp());
    for mut row in q.axis_iter_mut(Axis(0)) {
        let s = row.sum();
        row /= s * n;
    }
    q
}

fn feasibility_and_surrogate(audit: &mut SolverAudit) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for call in 0..100u64 {
        let n = rng.random_range(2..=40);
        let k = rng.random_range(1..=6);
        let sharpness = [1.0, 4.0, 10.0][rng.random_range(0..3)];
        let logits = Array2::from_shape_simple_fn((n, k), || sharpness * rng.random_range(-1.0..1.0));
        let p0 = iocc::model::softmax_rows(&logits);
        let eps1 = [0.1, 1.0][rng.random_range(0..2)];
        let eps2 = [1e-3, 1.2, 1000.0][rng.random_range(0..3)];
        let eps3 = [0.0, 0.75, 25.0][rng.random_range(0..3)];
        solve(p0, eps1, eps2, eps3, call, audit);
    }

    let mut cond1 = 0.0f64;
    let mut cond2 = f64::NEG_INFINITY;
    for _ in 0..100 {
        let p0 = iocc::model::softmax_rows(&Array2::from_shape_simple_fn((6, 3), || rng.random_range(-2.0..2.0)));
        let s = similarity_matrix(p0.view()).unwrap();
        let eps = (rng.random_range(0.1..2.0), rng.random_range(0.1..10.0), rng.random_range(0.0..25.0));
        let q_prev = random_feasible(&p0, &mut rng, 1.0);
        let b_prev = q_prev.sum_axis(Axis(0));
        let f = objective(q_prev.view(), b_prev.view(), p0.view(), s.view(), eps.0, eps.1, eps.2);
        let g = surrogate_objective(q_prev.view(), b_prev.view(), q_prev.view(), p0.view(), s.view(), eps.0, eps.1, eps.2);
        cond1 = cond1.max((f - g).abs());
        let q = random_feasible(&q_prev, &mut rng, 0.5);
        let b = q.sum_axis(Axis(0));
        let f = objective(q.view(), b.view(), p0.view(), s.view(), eps.0, eps.1, eps.2);
        let g = surrogate_objective(q.view(), b.view(), q_prev.view(), p0.view(), s.view(), eps.0, eps.1, eps.2);
        cond2 = cond2.max(f - g);
    }
    let passed = audit.ok() && cond1 <= SURROGATE_TOL && cond2 <= SURROGATE_TOL;
    Outcome {
        id: 3,
        title: "feasibility, monotone objective, surrogate conditions",
        passed,
        detail: format!(
            "{} solver calls: max marginal residual {:.2e} (tol {RESIDUAL_TOL:.0e}), max objective increase {:.2e} \
             (slack {MONOTONE_SLACK:.0e}); 100 points: |f - s| at expansion {cond1:.2e}, max f - s {cond2:.2e} \
             (tol {SURROGATE_TOL:.0e})",
            audit.calls, audit.worst_residual, audit.worst_increase
        ),
    }
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let rows = gradcheck::run_suite(2024, 50, GRAD_TOL);
    let elapsed = start.elapsed();
    let table: Vec<String> = rows.iter().map(|r| format!("{} {:.1e}", r.name, r.max_rel_error)).collect();
    Outcome {
        id: 4,
        title: "analytic gradients match central differences",
        passed: rows.iter().all(|r| r.passed) && elapsed < Duration::from_secs(60),
        detail: format!(
            "50 instances each, max rel. error: {} (tol {GRAD_TOL:.0e}), {:.1}s (limit 60s)",
            table.join(", "),
            elapsed.as_secs_f64()
        ),
    }
}

fn synthetic(k: usize, separation: f64, ratio: f64, seed: u64) -> iocc::EmbeddingDataset {
    generate_synthetic(&SyntheticSpec {
        k,
        n: 2000,
        d: 32,
        center_separation: separation,
        noise_sigma: 1.0,
        imbalance_ratio: ratio,
        seed,
    })
    .expect("synthetic dataset")
}

fn scaled_config() -> TrainConfig {
    TrainConfig {
        e_total: 600,
        e_first: 400,
        ..TrainConfig::default()
    }
}

fn metrics_bytes(state: &TrainState) -> Vec<u8> {
    let mut out = Vec::new();
    for m in &state.metrics_log {
        serde_json::to_writer(&mut out, m).unwrap();
        out.push(b'\n');
    }
    out
}

fn end_to_end() -> (Outcome, Vec<u8>) {
    let ds = synthetic(4, 6.0, 1.0, 7);
    let start = Instant::now();
    let state = train(&scaled_config(), &ds).expect("training run");
    let elapsed = start.elapsed();
    let last = state.metrics_log.last().unwrap();
    let (acc, nmi_value) = (last.acc.unwrap(), last.nmi.unwrap());
    let finite = state
        .loss_log
        .iter()
        .all(|r| [r.l_x, r.l_c, r.l_i, r.l_p.unwrap_or(0.0), r.total].iter().all(|v| v.is_finite()));
    let outcome = Outcome {
        id: 5,
        title: "end-to-end synthetic clustering",
        passed: acc >= MIN_ACC && nmi_value >= MIN_NMI && finite && elapsed < Duration::from_secs(300),
        detail: format!(
            "ACC {acc:.4} (min {MIN_ACC}), NMI {nmi_value:.4} (min {MIN_NMI}), losses finite: {finite}, \
             {:.1}s on one thread (limit 300s)",
            elapsed.as_secs_f64()
        ),
    };
    (outcome, metrics_bytes(&state))
}

fn degeneracy() -> Outcome {
    let ds = synthetic(6, 6.0, 10.0, 7);
    let count = |eps2: f64| {
        let cfg = TrainConfig { eps2, ..scaled_config() };
        train(&cfg, &ds).expect("training run").metrics_log.last().unwrap().predicted_clusters
    };
    let balanced = count(1.2);
    let loose = count(1e-3);
    Outcome {
        id: 6,
        title: "imbalanced data keeps every cluster",
        passed: balanced == 6 && loose <= balanced,
        detail: format!("K=6, ratio 10: predicted clusters {balanced} with eps2=1.2 (need 6), {loose} with eps2=1e-3 (need <= {balanced})"),
    }
}

fn ablation() -> Outcome {
    let mut mean = [0.0; 2];
    for seed in 0..5u64 {
        let ds = synthetic(4, 3.0, 1.0, seed);
        for (slot, lambda) in [5.0, 0.0].into_iter().enumerate() {
            let cfg = TrainConfig {
                lambda,
                seed,
                ..scaled_config()
            };
            let state = train(&cfg, &ds).expect("training run");
            mean[slot] += state.metrics_log.last().unwrap().acc.unwrap() / 5.0;
        }
    }
    Outcome {
        id: 7,
        title: "center-aware contrast improves overlapping clusters",
        passed: mean[0] > mean[1],
        detail: format!("separation 3, 5 seeds: mean ACC {:.4} with lambda=5 vs {:.4} with lambda=0", mean[0], mean[1]),
    }
}

fn metric_oracles() -> Outcome {
    let mut mismatches = 0usize;
    let mut pairs = 0usize;
    for k in 1..=3 {
        for n in 1..=8 {
            let all = common::all_labelings(n, k);
            for y in &all {
                for yhat in &all {
                    pairs += 1;
                    let got = hungarian_accuracy(y, yhat, k).unwrap();
                    if (got - common::brute_force_accuracy(y, yhat, k)).abs() > 1e-12 {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    let ln = f64::ln;
    let h_y = ln(2.0);
    let h_yhat = -(0.75 * ln(0.75) + 0.25 * ln(0.25));
    let mi = 0.5 * ln(4.0 / 3.0) + 0.25 * ln(2.0 / 3.0) + 0.25 * ln(2.0);
    let cases: [(&[usize], &[usize], f64); 5] = [
        (&[0, 0, 1, 1], &[0, 0, 1, 1], 1.0),
        (&[0, 0, 1, 1], &[1, 1, 0, 0], 1.0),
        (&[0, 0, 1, 1], &[0, 1, 0, 1], 0.0),
        (&[0, 0, 1, 1], &[0, 0, 0, 1], mi / (h_y * h_yhat).sqrt()),
        (&[0, 0, 0, 0], &[0, 0, 0, 0], 1.0),
    ];
    let nmi_err = cases
        .iter()
        .map(|(y, yhat, want)| (nmi(y, yhat).unwrap() - want).abs())
        .fold(0.0, f64::max);
    Outcome {
        id: 8,
        title: "metric oracles",
        passed: mismatches == 0 && nmi_err <= 1e-12,
        detail: format!(
            "{pairs} exhaustive label pairs (n<=8, K<=3): {mismatches} accuracy mismatches; NMI hand cases max error {nmi_err:.1e}"
        ),
    }
}

fn determinism(reference: &[u8]) -> Outcome {
    let ds = synthetic(4, 6.0, 1.0, 7);
    let state = train(&scaled_config(), &ds).expect("training run");
    let again = metrics_bytes(&state);
    Outcome {
        id: 9,
        title: "repeated run is byte-identical",
        passed: again == reference,
        detail: format!("metrics log {} bytes, identical: {}", reference.len(), again == reference),
    }
}

fn report(outcome: &Outcome) -> bool {
    let tag = if outcome.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] criterion {}: {} -- {}", outcome.id, outcome.title, outcome.detail);
    outcome.passed
}

fn main() {
    iocc::parallel::configure(0);
    let mut audit = SolverAudit::default();
    let mut all = true;
    all &= report(&oracle_agreement(&mut audit));
    all &= report(&sinkhorn_equivalence(&mut audit));
    all &= report(&feasibility_and_surrogate(&mut audit));
    all &= report(&gradient_suite());
    let (outcome, reference) = end_to_end();
    all &= report(&outcome);
    all &= report(&degeneracy());
    all &= report(&ablation());
    all &= report(&metric_oracles());
    all &= report(&determinism(&reference));
    if !all {
        std::process::exit(1);
    }
}
