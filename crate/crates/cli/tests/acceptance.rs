//! End-to-end acceptance suite. Runs every criterion on a small worker
//! pool, prints one PASS/FAIL line per criterion in order, and exits
//! non-zero if any criterion failed.

use std::path::Path;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use fmsteer::coupling::{cost_matrix, sinkhorn, CouplingConfig};
use fmsteer::dataio::{Scenario, ScenarioSpec};
use fmsteer::evaluation::{fid, kid, mmd, wilcoxon_one_sided, wilcoxon_with, CovMode, WilcoxonMethod};
use fmsteer::flow::{cfm_loss_and_grad, FlowModelParams, LossMode, MlpArchitecture, PairBatch};
use fmsteer::guidance::guide_velocity;
use fmsteer::normalization::NormMethod;
use fmsteer::numerics::{sample_standard_normal, Matrix, RngState};
use fmsteer::ode::{integrate, SolverConfig};
use fmsteer::steering::{
    alignment_experiment, flow_steer, mean_target_log_likelihood, SteerOptions, ARM_FLOW, ARM_LINEAR,
};
use fmsteer_cli::commands::{load_split, run_ablation, train_on_fit};
use fmsteer_cli::config::{DataConfig, RunConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

// Tolerances and pinned values.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_FIXTURES: u64 = 24;
const HUBER_CASES: usize = 1000;
const OT_INSTANCES: u64 = 50;
const OT_EPS_FRACTION: f64 = 0.01;
const OT_REL_GAP: f64 = 0.05;
const ODE_RTOL_FACTOR: f64 = 10.0;
const EULER_RATIO: (f64, f64) = (1.8, 2.2);
const METRIC_ORACLE_TOL: f64 = 1e-12;
const FID_1D_TOL: f64 = 1e-9;
const FID_IDENTICAL_TOL: f64 = 1e-8;
const WILCOXON_AGREEMENT: f64 = 0.02;
const ANISO_SEED: u64 = 1;
const ANISO_LINEAR_RESIDUAL: f64 = 1.25;
const ANISO_LINEAR_REL: f64 = 0.30;
const ANISO_FLOW_RATIO: f64 = 0.5;
const COLLAPSE_FACTOR: f64 = 5.0;
const SCENARIO_SEEDS: [u64; 3] = [1, 2, 3];
const DECOMPOSITION_CASES: usize = 1000;
const DECOMPOSITION_TOL: f64 = 1e-10;

fn gradient_oracle() -> Verdict {
    let mut worst = 0.0f64;
    for seed in 0..GRAD_FIXTURES {
        let mut rng = RngState::new(seed);
        let d = 1 + (seed as usize % 4);
        let arch = MlpArchitecture::new(d, vec![2 + (seed as usize * 3) % 7]).unwrap();
        let params = FlowModelParams::init(&arch, &mut rng).unwrap();
        let mut x0 = sample_standard_normal(&mut rng, 5, d);
        let x1 = sample_standard_normal(&mut rng, 5, d);
        // Spread the residuals across both Huber regimes.
        for v in x0.data_mut() {
            *v *= 2.0;
        }
        let t = (0..5).map(|_| rng.uniform()).collect();
        let batch = PairBatch::new(x0, x1, t).unwrap();
        for mode in [LossMode::Huber, LossMode::Mse] {
            let analytic = cfm_loss_and_grad(&params, &batch, mode).unwrap().1.flat();
            let base = params.flat();
            let loss = |flat: &[f64]| {
                let p = FlowModelParams::from_flat(&arch, flat).unwrap();
                cfm_loss_and_grad(&p, &batch, mode).unwrap().0
            };
            let h = 1e-5;
            for i in 0..base.len() {
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[i] += h;
                minus[i] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let scale = analytic[i].abs().max(numeric.abs()).max(1e-6);
                worst = worst.max((analytic[i] - numeric).abs() / scale);
            }
        }
    }
    verdict(
        worst < GRAD_REL_TOL,
        format!("{GRAD_FIXTURES} fixtures x {{huber, mse}}, worst relative error {worst:.2e}"),
    )
}

fn huber_mse_equivalence() -> Verdict {
    let mut rng = RngState::new(2024);
    let (mut checked, mut mismatches) = (0, 0);
    while checked < HUBER_CASES {
        let d = 1 + rng.index(4);
        let b = 1 + rng.index(5);
        let arch = MlpArchitecture::new(d, vec![3]).unwrap();
        let mut params = FlowModelParams::init(&arch, &mut rng).unwrap();
        for l in &mut params.layers {
            for w in l.weights.data_mut() {
                *w *= 0.1;
            }
        }
        let mut x0 = sample_standard_normal(&mut rng, b, d);
        let mut x1 = sample_standard_normal(&mut rng, b, d);
        for v in x0.data_mut().iter_mut().chain(x1.data_mut().iter_mut()) {
            *v *= 0.2;
        }
        let t: Vec<f64> = (0..b).map(|_| rng.uniform()).collect();
        let batch = PairBatch::new(x0, x1, t).unwrap();
        let small = (0..b).all(|i| {
            let xt: Vec<f64> = (0..d)
                .map(|k| batch.t[i] * batch.x1[(i, k)] + (1.0 - batch.t[i]) * batch.x0[(i, k)])
                .collect();
            let v = params.forward(&xt, batch.t[i]).unwrap();
            (0..d).all(|k| (v[k] - (batch.x1[(i, k)] - batch.x0[(i, k)])).abs() <= 1.0)
        });
        if !small {
            continue;
        }
        checked += 1;
        let (lh, gh) = cfm_loss_and_grad(&params, &batch, LossMode::Huber).unwrap();
        let (lm, gm) = cfm_loss_and_grad(&params, &batch, LossMode::Mse).unwrap();
        let half: Vec<f64> = gm.flat().iter().map(|g| 0.5 * g).collect();
        if lh != 0.5 * lm || gh.flat() != half {
            mismatches += 1;
        }
    }
    verdict(
        mismatches == 0,
        format!(
            "{checked} residual sets with |r| <= 1: huber == 0.5 mse and grads == 0.5 grads, {mismatches} mismatches"
        ),
    )
}

/// Minimum-cost perfect matching by enumerating permutations (Heap's
/// algorithm).
fn brute_force_matching(c: &Matrix) -> f64 {
    let n = c.rows();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| (0..n).map(|i| c[(i, p[i])]).sum::<f64>();
    let mut best = cost(&perm);
    let mut counters = vec![0; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(cost(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

fn ot_oracle() -> Verdict {
    let config = CouplingConfig::default();
    let mut worst = 0.0f64;
    let mut over = 0;
    for seed in 0..OT_INSTANCES {
        let mut rng = RngState::new(1000 + seed);
        let x = sample_standard_normal(&mut rng, 8, 3);
        let y = sample_standard_normal(&mut rng, 8, 3);
        let c = cost_matrix(&x, &y).unwrap();
        let mean = c.data().iter().sum::<f64>() / c.data().len() as f64;
        let plan = sinkhorn(&c, OT_EPS_FRACTION * mean, config.max_iters, config.tol).unwrap();
        let exact = brute_force_matching(&c);
        let gap = (plan.hard_assignment_cost(&c) - exact) / exact;
        over += usize::from(gap > OT_REL_GAP);
        worst = worst.max(gap);
    }
    verdict(
        over == 0,
        format!(
            "{OT_INSTANCES} instances, b = 8: {over} above 5%, worst relative gap to exact matching {:.3}%",
            100.0 * worst
        ),
    )
}

fn ode_oracle() -> Verdict {
    let solve =
        |lambda: f64, config: &SolverConfig| integrate(|x, _| Ok(vec![lambda * x[0]]), &[1.0], config).unwrap().x1[0];
    let config = SolverConfig::default();
    let mut worst_rel = 0.0f64;
    for lambda in [-2.0, -1.0, 1.0, 2.0] {
        let exact = f64::exp(lambda);
        worst_rel = worst_rel.max((solve(lambda, &config) - exact).abs() / exact);
    }
    let e = std::f64::consts::E;
    let ratios: Vec<f64> = [10, 20, 40, 80]
        .iter()
        .map(|&n| (solve(1.0, &SolverConfig::euler(n)) - e).abs() / (solve(1.0, &SolverConfig::euler(2 * n)) - e).abs())
        .collect();
    let dopri_ok = worst_rel < ODE_RTOL_FACTOR * config.rtol;
    let euler_ok = ratios.iter().all(|r| (EULER_RATIO.0..=EULER_RATIO.1).contains(r));
    verdict(
        dopri_ok && euler_ok,
        format!("dopri5 worst relative error {worst_rel:.2e}; euler halving ratios {ratios:.3?}"),
    )
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn metric_oracles() -> Verdict {
    let mut rng = RngState::new(77);
    let x = sample_standard_normal(&mut rng, 20, 3);
    let mut y = sample_standard_normal(&mut rng, 20, 3);
    for v in y.data_mut() {
        *v = 0.8 * *v + 0.3;
    }
    let (m, n) = (20.0, 20.0);
    let gauss = |a: &[f64], b: &[f64]| (-sq_dist(a, b) / 2.0).exp();
    let mut mmd_ref = 0.0;
    for a in x.row_iter() {
        for b in x.row_iter() {
            mmd_ref += gauss(a, b) / (m * m);
        }
        for b in y.row_iter() {
            mmd_ref -= 2.0 * gauss(a, b) / (m * n);
        }
    }
    for a in y.row_iter() {
        for b in y.row_iter() {
            mmd_ref += gauss(a, b) / (n * n);
        }
    }
    let mmd_err = (mmd(&x, &y, 1.0).unwrap() - mmd_ref).abs();

    let gamma = 1.0 / 3.0;
    let poly = |a: &[f64], b: &[f64]| (gamma * a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>() + 1.0).powi(3);
    let off_diag = |s: &Matrix| {
        let mut acc = 0.0;
        for i in 0..s.rows() {
            for j in 0..s.rows() {
                if i != j {
                    acc += poly(s.row(i), s.row(j));
                }
            }
        }
        acc / (s.rows() * (s.rows() - 1)) as f64
    };
    let cross: f64 = x
        .row_iter()
        .flat_map(|a| y.row_iter().map(move |b| (a, b)))
        .map(|(a, b)| poly(a, b))
        .sum();
    let kid_ref = off_diag(&x) + off_diag(&y) - 2.0 * cross / (m * n);
    let kid_err = (kid(&x, &y, gamma, 1.0, 3).unwrap() - kid_ref).abs() / kid_ref.abs().max(1.0);

    let x1 = Matrix::from_vec(6, 1, vec![0.5, 1.5, -0.3, 2.2, 0.9, 1.1]).unwrap();
    let y1 = Matrix::from_vec(5, 1, vec![3.0, 4.5, 2.1, 5.2, 3.3]).unwrap();
    let moments = |v: &Matrix| {
        let n = v.rows() as f64;
        let mu = v.data().iter().sum::<f64>() / n;
        let var = v.data().iter().map(|a| (a - mu) * (a - mu)).sum::<f64>() / (n - 1.0);
        (mu, var.sqrt())
    };
    let ((mx, sx), (my, sy)) = (moments(&x1), moments(&y1));
    let fid_closed = (mx - my).powi(2) + (sx - sy).powi(2);
    let fid_err = (fid(&x1, &y1, CovMode::Full).unwrap() - fid_closed).abs();

    let mmd_same = mmd(&x, &x, 1.0).unwrap();
    let fid_same = fid(&x, &x, CovMode::Full).unwrap();
    let kid_same = kid(&x, &x, gamma, 1.0, 3).unwrap();
    let kmax = x
        .row_iter()
        .flat_map(|a| x.row_iter().map(move |b| poly(a, b)))
        .fold(0.0f64, f64::max);
    let kid_same_ok = kid_same <= 0.0 && kid_same.abs() <= 2.0 * kmax / m;

    let pass = mmd_err < METRIC_ORACLE_TOL
        && kid_err < METRIC_ORACLE_TOL
        && fid_err < FID_1D_TOL
        && mmd_same == 0.0
        && fid_same.abs() < FID_IDENTICAL_TOL
        && kid_same_ok;
    verdict(
        pass,
        format!(
            "mmd err {mmd_err:.1e}, kid rel err {kid_err:.1e}, 1-d fid err {fid_err:.1e}; identical sets: mmd {mmd_same:e}, fid {fid_same:.1e}, kid {kid_same:.2e}"
        ),
    )
}

fn wilcoxon_oracle() -> Verdict {
    let a = wilcoxon_one_sided(&[1.0, 2.0, 3.0]).unwrap().p_value;
    let b = wilcoxon_one_sided(&[5.0, -1.0]).unwrap().p_value;
    let mut rng = RngState::new(31);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let shift = rng.uniform_range(-0.5, 0.5);
        let d: Vec<f64> = (0..20).map(|_| rng.standard_normal() + shift).collect();
        let exact = wilcoxon_with(&d, WilcoxonMethod::Exact).unwrap().p_value;
        let normal = wilcoxon_with(&d, WilcoxonMethod::Normal).unwrap().p_value;
        worst = worst.max((exact - normal).abs());
    }
    verdict(
        a == 0.125 && b == 0.5 && worst < WILCOXON_AGREEMENT,
        format!("p([1,2,3]) = {a}, p([5,-1]) = {b}; n = 20 exact vs normal worst gap {worst:.4}"),
    )
}

fn scenario_config(scenario: Scenario, d: usize, seed: u64) -> RunConfig {
    let mut c = RunConfig {
        seed,
        data: DataConfig::Scenario {
            scenario,
            d,
            n: 4000,
            seed,
        },
        ..RunConfig::default()
    };
    c.train.seed = seed;
    c.eval.split_seed = seed;
    c.resolved().unwrap()
}

fn anisotropic_alignment() -> Verdict {
    let spec = ScenarioSpec::new(
        Scenario::AnisotropicShift {
            mean: Some(vec![5.0, 0.0]),
            std: Some(vec![2.0, 0.5]),
        },
        2,
        4000,
        ANISO_SEED,
    );
    let config = scenario_config(spec.scenario.clone(), 2, ANISO_SEED);
    let (s, t) = config.data.load().unwrap();
    let start = Instant::now();
    let report = alignment_experiment(s.data(), t.data(), &config.train, &config.alignment_config(), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let linear = report.arm(ARM_LINEAR).unwrap().fid;
    let flow = report.arm(ARM_FLOW).unwrap().fid;
    let linear_ok = (linear - ANISO_LINEAR_RESIDUAL).abs() <= ANISO_LINEAR_REL * ANISO_LINEAR_RESIDUAL;
    let flow_ok = flow < ANISO_FLOW_RATIO * linear;
    verdict(
        linear_ok && flow_ok && secs <= 300.0,
        format!("held-out FID linear {linear:.4} (target 1.25 +/- 30%), flow {flow:.4}; {secs:.1} s"),
    )
}

fn robustness_ablation() -> Verdict {
    let results: Vec<(u64, String, bool)> = std::thread::scope(|scope| {
        let handles: Vec<_> = SCENARIO_SEEDS
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let config = scenario_config(Scenario::massive(), 6, seed);
                    let rows = run_ablation(&config).unwrap();
                    let find = |norm: NormMethod, loss: LossMode, g: bool| {
                        rows.iter()
                            .find(|r| r.norm == norm && r.loss == loss && r.guidance == g)
                            .unwrap()
                    };
                    let mut robust_ok = true;
                    let mut collapsed = false;
                    let mut parts = Vec::new();
                    for g in [true, false] {
                        let robust = find(NormMethod::MedianIqr, LossMode::Huber, g);
                        let naive = find(NormMethod::Zscore, LossMode::Mse, g);
                        robust_ok &= robust.finite;
                        collapsed |= !naive.finite || naive.fid >= COLLAPSE_FACTOR * robust.fid;
                        parts.push(format!(
                            "g={}: robust fid {:.3e} finite {}, z/mse fid {:.3e} finite {}",
                            if g { "on" } else { "off" },
                            robust.fid,
                            robust.finite,
                            naive.fid,
                            naive.finite
                        ));
                    }
                    (seed, parts.join("; "), robust_ok && collapsed)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let pass = results.iter().all(|r| r.2);
    let detail = results
        .iter()
        .map(|(seed, d, ok)| format!("seed {seed} [{}] {d}", if *ok { "ok" } else { "no collapse" }))
        .collect::<Vec<_>>()
        .join(" | ");
    verdict(pass, detail)
}

fn guidance_effect() -> Verdict {
    let results: Vec<(u64, f64, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = SCENARIO_SEEDS
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let config = scenario_config(Scenario::low_velocity(), 2, seed);
                    let split = load_split(&config).unwrap();
                    let (ck, _) = train_on_fit(&config.train, &split).unwrap();
                    let loglik = |unguided: bool| {
                        let opts = SteerOptions {
                            eta: 1.0,
                            unguided,
                            ..config.steer_options()
                        };
                        let out = flow_steer(&ck, &split.source_held, &opts).unwrap();
                        let ok = out.steered.select_rows(&out.ok_indices());
                        mean_target_log_likelihood(&ck, &ok).unwrap()
                    };
                    (seed, loglik(false), loglik(true))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let mut rng = RngState::new(99);
    let mut worst = 0.0f64;
    for _ in 0..DECOMPOSITION_CASES {
        let d = 1 + rng.index(8);
        let v: Vec<f64> = (0..d).map(|_| rng.uniform_range(-10.0, 10.0)).collect();
        let g: Vec<f64> = (0..d).map(|_| rng.uniform_range(-5.0, 5.0)).collect();
        let eta = rng.uniform_range(0.0, 3.0);
        let norm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        let out = guide_velocity(&v, &g, eta);
        let along: f64 = out.iter().zip(&g).map(|(a, b)| a * b / norm).sum();
        worst = worst.max((along - eta * norm).abs());
    }
    let guided_wins = results.iter().all(|(_, guided, unguided)| guided >= unguided);
    let detail = results
        .iter()
        .map(|(seed, g, u)| format!("seed {seed}: guided {g:.4} vs unguided {u:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    verdict(
        guided_wins && worst < DECOMPOSITION_TOL,
        format!("{detail}; decomposition worst error {worst:.1e} over {DECOMPOSITION_CASES} cases"),
    )
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fmsteer"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

const DETERMINISM_ARTIFACTS: [&str; 9] = [
    "source.fsrp",
    "target.fsrp",
    "model.fsck",
    "training_log.csv",
    "steered.fsrp",
    "row_status.csv",
    "alignment_report.csv",
    "alignment_report.json",
    "resolved_config.json",
];

/// synth, train, steer and eval into `dir` from `config`.
fn pipeline(config: &Path, dir: &Path) -> Result<(), String> {
    let d = dir.to_str().unwrap();
    let c = config.to_str().unwrap();
    let ck = dir.join("model.fsck");
    let src = dir.join("source.fsrp");
    run_cli(&["synth", "--config", c, "--out", d])?;
    run_cli(&["train", "--config", c, "--out", d])?;
    run_cli(&[
        "steer",
        "--config",
        c,
        "--checkpoint",
        ck.to_str().unwrap(),
        "--input",
        src.to_str().unwrap(),
        "--out",
        d,
    ])?;
    run_cli(&["eval", "--config", c, "--checkpoint", ck.to_str().unwrap(), "--out", d])
}

fn determinism() -> Verdict {
    let root = tempfile::tempdir().unwrap();
    let first = root.path().join("first");
    let second = root.path().join("second");
    let config = root.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"config_version": 1, "seed": 17,
            "data": {"kind": "scenario", "scenario": {"name": "anisotropic-shift"}, "d": 3, "n": 600},
            "train": {"iterations": 300},
            "output": {"dir": "unused"}}"#,
    )
    .unwrap();
    if let Err(e) = pipeline(&config, &first) {
        return verdict(false, format!("first run failed: {e}"));
    }
    // The rerun reads only the config persisted by the first run.
    let persisted = first.join("resolved_config.json");
    let replay = root.path().join("replay.json");
    std::fs::copy(&persisted, &replay).unwrap();
    if let Err(e) = pipeline(&replay, &second) {
        return verdict(false, format!("rerun failed: {e}"));
    }
    let differing: Vec<&str> = DETERMINISM_ARTIFACTS
        .iter()
        .copied()
        .filter(|f| {
            let (a, b) = (std::fs::read(first.join(f)), std::fs::read(second.join(f)));
            match (a, b) {
                (Ok(a), Ok(b)) if *f == "resolved_config.json" => strip_output_dir(&a) != strip_output_dir(&b),
                (Ok(a), Ok(b)) => a != b,
                _ => true,
            }
        })
        .collect();
    verdict(
        differing.is_empty(),
        format!(
            "{} artifacts compared byte for byte; differing: {differing:?}",
            DETERMINISM_ARTIFACTS.len()
        ),
    )
}

/// The output directory is the one field expected to differ between runs.
fn strip_output_dir(bytes: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(bytes).unwrap();
    v["output"]["dir"] = serde_json::Value::Null;
    v
}

type Criterion = (u32, &'static str, fn() -> Verdict);

const CRITERIA: [Criterion; 10] = [
    (1, "gradient oracle", gradient_oracle),
    (2, "huber/mse regime equivalence", huber_mse_equivalence),
    (3, "sinkhorn vs exact matching", ot_oracle),
    (4, "ode oracle", ode_oracle),
    (5, "metric oracles", metric_oracles),
    (6, "wilcoxon oracle", wilcoxon_oracle),
    (7, "anisotropic alignment", anisotropic_alignment),
    (8, "robustness ablation", robustness_ablation),
    (9, "guidance effect", guidance_effect),
    (10, "determinism", determinism),
];

fn run_criterion(c: Criterion) -> (Criterion, Verdict, f64) {
    let t = Instant::now();
    let v = std::panic::catch_unwind(c.2).unwrap_or_else(|_| verdict(false, "panicked (see message above)"));
    (c, v, t.elapsed().as_secs_f64())
}

/// Criteria run on one worker per available core, so wall times (and the
/// training-time budget) are not inflated by oversubscription.
fn main() {
    let start = Instant::now();
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(CRITERIA.len());
    let next = AtomicUsize::new(0);
    let mut results: Vec<(Criterion, Verdict, f64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&c) = CRITERIA.get(i) else { break };
                        done.push(run_criterion(c));
                    }
                    done
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    });
    results.sort_by_key(|r| r.0 .0);
    println!();
    for ((n, name, _), v, secs) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} [{tag}] {name} ({secs:.1} s): {}", v.detail);
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.1.pass).map(|r| r.0 .0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
