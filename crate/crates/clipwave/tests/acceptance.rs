//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if
//! any criterion fails.

use clipwave::experiment::{run_with, RunOptions, RunOutcome};
use clipwave::queue;
use clipwave::{fit_rate, ExperimentConfig, RunRecord, Sweep};
use clipwave_core::aggregator::{build_margin_grid, ExpertWeights, GridMode, MarginMeta};
use clipwave_core::batch::{self, NoiseModel};
use clipwave_core::bettor::BettorState;
use clipwave_core::clipper::{ClipConfig, ClippedLearner};
use clipwave_core::regression::{coefficient_gradients, loss_derivative, CoefficientId};
use clipwave_core::wavelet::{self, CoefficientTree, HaarBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const T_BAND: (f64, f64) = (-0.85, -0.50);
const SIGMA2_BAND: (f64, f64) = (0.45, 0.90);
const RATE_SEEDS: u64 = 10;

const BETTOR_SEQUENCES: usize = 1000;
const BETTOR_ROUNDS: usize = 1000;
const BETTOR_COMPARATORS: usize = 20;

const CLIP_SEEDS: u64 = 100;
const CLIP_ROUNDS: u64 = 10_000;
const CLIP_DELTA: f64 = 0.05;
const CLIP_MIN_PASSING: usize = 95;

const META_DIM: usize = 8;
const META_ROUNDS: usize = 4096;
const META_SEEDS: u64 = 20;
const META_RELATIVE: f64 = 0.10;
const META_PER_LOG_K: f64 = 50.0;

const AGG_SEQUENCES: usize = 1000;

const PARSEVAL_TREES: usize = 1000;
const PARSEVAL_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-12;
const REGULARITY_TOL: f64 = 1e-12;

const FD_STATES: usize = 1000;
const FD_STEP: f64 = 1e-6;
const FD_REL_TOL: f64 = 1e-6;

const JENSEN_TOL: f64 = 1e-12;

const DECOMP_SEEDS: u64 = 100;
const DECOMP_SAMPLES: u64 = 100_000;
const DECOMP_STDERRS: f64 = 6.0;
const DECOMP_MIN_PASSING: usize = 95;

/// Step target with nominal `s = 1, p = 1` and the rate-study regression
/// settings: scales `j0 ≤ 2`, depth 8, supplied gradient bound `G = 2`.
const RATE_CONFIG: &str = r#"{
    "regression": { "B": 1.0, "J0": 2, "J": 8, "T": 256, "G": 2.0, "grid_mode": "zero_init" },
    "noise": { "kind": "gaussian", "sigma": 0.5 },
    "target": { "kind": "step", "edges": [0.3333333333333333, 0.7], "levels": [0.0, 1.0, -0.5],
                "d": 1, "s": 1.0, "p": 1.0, "q": "inf", "B": 1.0 }
}"#;

struct Verdict {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn in_band(x: f64, band: (f64, f64)) -> bool {
    x >= band.0 && x <= band.1
}

fn run_grid(configs: &[ExperimentConfig]) -> Vec<RunOutcome> {
    let jobs: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|i| (0..RATE_SEEDS).map(move |s| (i, s)))
        .collect();
    let options = RunOptions {
        risk_trace: true,
        ..RunOptions::default()
    };
    let mut out = Vec::with_capacity(jobs.len());
    queue::run_ordered(
        &jobs,
        queue::thread_count(),
        |&(i, seed)| run_with(&configs[i], seed, &options).expect("acceptance run"),
        |_, r| {
            out.push(r);
            Ok::<(), ()>(())
        },
    )
    .unwrap();
    out
}

fn rate_verdict(id: u32, name: &'static str, runs: &[RunOutcome], sweep: Sweep, band: (f64, f64)) -> Verdict {
    let records: Vec<RunRecord> = runs.iter().map(|r| r.record.clone()).collect();
    match fit_rate(&records, sweep) {
        Ok(fit) => Verdict {
            id,
            name,
            passed: in_band(fit.slope, band),
            detail: format!(
                "slope {:.3} (stderr {:.3}, r2 {:.3}), band [{}, {}]",
                fit.slope, fit.stderr, fit.r2, band.0, band.1
            ),
        },
        Err(e) => Verdict {
            id,
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn bettor_certificate() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0);
    let mut violations = 0usize;
    let mut tightest = f64::INFINITY;
    for _ in 0..BETTOR_SEQUENCES {
        let radius = f64::powf(10.0, rng.gen_range(-1.0..1.0));
        let c1 = rng.gen_range(-radius..=radius) * rng.gen_range(0..2) as f64;
        let mut b = BettorState::new(c1, radius).unwrap();
        let (mut grads, mut plays) = (Vec::with_capacity(BETTOR_ROUNDS), Vec::with_capacity(BETTOR_ROUNDS));
        let mut scale = f64::powi(2.0, rng.gen_range(-8..8));
        let mut sign = 1.0;
        let mode = rng.gen_range(0..3);
        for t in 0..BETTOR_ROUNDS {
            if rng.gen_bool(0.01) {
                scale = f64::powi(2.0, rng.gen_range(-8..8));
            }
            if rng.gen_bool(0.05) {
                sign = -sign;
            }
            let x = b.predict();
            let magnitude = rng.gen_range(0.0..=1.0) * scale;
            let g = match mode {
                // pushes the learner away from wherever it is
                0 => if x >= 0.0 { -magnitude } else { magnitude },
                // drifting sign with random flips
                1 => sign * magnitude,
                // alternating blocks of growing length
                _ => if (t as f64).sqrt() as usize % 2 == 0 { magnitude } else { -magnitude },
            };
            plays.push(x);
            b.update(g, scale).unwrap();
            grads.push(g);
        }
        for i in 0..BETTOR_COMPARATORS {
            let c = match i {
                0 => radius,
                1 => -radius,
                _ => rng.gen_range(-radius..=radius),
            };
            let regret: f64 = grads.iter().zip(&plays).map(|(g, x)| g * (x - c)).sum();
            let bound = b.regret_certificate(c, &grads).unwrap().bound();
            if regret > bound {
                violations += 1;
            }
            tightest = tightest.min(bound - regret);
        }
    }
    Verdict {
        id: 3,
        name: "bettor regret certificate",
        passed: violations == 0,
        detail: format!(
            "{violations} violations over {BETTOR_SEQUENCES}x{BETTOR_COMPARATORS}, smallest slack {tightest:.3e}"
        ),
    }
}

fn clipping_calibration() -> Verdict {
    let sigma = 1.0;
    let noise = NoiseModel::gaussian(sigma).unwrap();
    let (nu, mu) = noise.sub_exponential().unwrap();
    let limit = (1.0 / CLIP_DELTA).ln() * (1.0 + (CLIP_ROUNDS as f64).ln());
    let dim = 4;
    let bound = 1.0;
    let mut passing = 0;
    let mut worst = 0;
    for seed in 0..CLIP_SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(0xC0 + seed);
        let config = ClipConfig::schedule(nu, mu, CLIP_DELTA).unwrap();
        let mut learner = ClippedLearner::at_origin(config, &vec![1.0; dim]).unwrap();
        let bounds = vec![bound; dim];
        for _ in 0..CLIP_ROUNDS {
            // true gradients on the bound
            let noisy: Vec<f64> = (0..dim)
                .map(|_| {
                    let g = if rng.gen::<bool>() { bound } else { -bound };
                    g + noise.sample(&mut rng)
                })
                .collect();
            learner.step(&noisy, &bounds).unwrap();
        }
        let clipped = learner.clipped_total() as usize;
        worst = worst.max(clipped);
        passing += (clipped as f64 <= limit) as usize;
    }
    Verdict {
        id: 4,
        name: "clipping calibration",
        passed: passing >= CLIP_MIN_PASSING,
        detail: format!("{passing}/{CLIP_SEEDS} runs within {limit:.1} clipped coordinates, worst {worst}"),
    }
}

fn margin_competitiveness() -> Verdict {
    let grid = build_margin_grid(META_ROUNDS as u64, GridMode::Geometric).unwrap();
    let k = grid.margins.len();
    let slack_abs = META_PER_LOG_K * (k as f64).ln();
    let radii = vec![1.0; META_DIM];
    let bounds = vec![1.0; META_DIM];
    let mut failures = 0;
    let mut runs = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for sigma in [0.5, 2.0] {
        let noise = NoiseModel::gaussian(sigma).unwrap();
        for seed in 0..META_SEEDS {
            let mut rng = ChaCha8Rng::seed_from_u64(0x3E7A + seed);
            let base: Vec<f64> = (0..META_DIM).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let rounds: Vec<(Vec<f64>, Vec<f64>)> = (0..META_ROUNDS)
                .map(|_| {
                    let g: Vec<f64> = base
                        .iter()
                        .map(|b| (b + rng.gen_range(-0.2..0.2)).clamp(-1.0, 1.0))
                        .collect();
                    let noisy = g.iter().map(|x| x + noise.sample(&mut rng)).collect();
                    (g, noisy)
                })
                .collect();

            let mut meta = MarginMeta::new(&grid, &radii).unwrap();
            let mut meta_loss = 0.0;
            for (g, noisy) in &rounds {
                let played = meta.round(&bounds, |_| noisy.clone()).unwrap();
                meta_loss += dot(g, &played);
            }

            let mut best = f64::INFINITY;
            for &m in &grid.margins {
                let mut single = ClippedLearner::at_origin(ClipConfig::fixed(m).unwrap(), &radii).unwrap();
                let mut loss = 0.0;
                for (g, noisy) in &rounds {
                    loss += dot(g, &single.predict());
                    single.clipped_step(noisy, &bounds, m).unwrap();
                }
                best = best.min(loss);
            }
            let allowed = META_RELATIVE * best.abs() + slack_abs;
            worst_excess = worst_excess.max(meta_loss - best - allowed);
            failures += (meta_loss - best > allowed) as usize;
            runs += 1;
        }
    }
    Verdict {
        id: 5,
        name: "adaptive-margin competitiveness",
        passed: failures == 0,
        detail: format!(
            "{failures}/{runs} runs above best + 10% + {META_PER_LOG_K} ln {k}; worst excess over allowance {worst_excess:.2}"
        ),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn aggregator_certificate() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA6);
    let mut violations = 0;
    let mut checked = 0;
    for _ in 0..AGG_SEQUENCES {
        let k = rng.gen_range(2..=16);
        let rounds = rng.gen_range(50..=1000);
        let mut w = ExpertWeights::new(k).unwrap();
        let mut total = vec![0.0; k];
        let mut sq = vec![0.0; k];
        let mut grad_max = 0.0f64;
        let mut scale = f64::powi(2.0, rng.gen_range(-6..6));
        let favourite = rng.gen_range(0..k);
        for t in 0..rounds {
            if rng.gen_bool(0.02) {
                scale = f64::powi(2.0, rng.gen_range(-6..6));
            }
            // the favourite expert wins the first half and loses the second
            let grads: Vec<f64> = (0..k)
                .map(|e| {
                    let bias = if e == favourite { if 2 * t < rounds { -0.5 } else { 0.5 } } else { 0.0 };
                    (rng.gen_range(-0.5..0.5) + bias) * scale
                })
                .collect();
            grad_max = grads.iter().fold(grad_max, |m, g| m.max(g.abs()));
            let mixed = dot(w.weights(), &grads);
            let regrets: Vec<f64> = grads.iter().map(|g| mixed - g).collect();
            for e in 0..k {
                total[e] += regrets[e];
                sq[e] += regrets[e] * regrets[e];
            }
            w.update(&regrets).unwrap();
        }
        let (xi3, xi4) = w.constants();
        let log_k = (k as f64).ln();
        for e in 0..k {
            let bound = xi3 * (log_k * sq[e]).sqrt() + xi4 * log_k * grad_max;
            violations += (total[e] > bound) as usize;
            checked += 1;
        }
    }
    Verdict {
        id: 6,
        name: "aggregator second-order certificate",
        passed: violations == 0,
        detail: format!("{violations} violations over {checked} expert totals"),
    }
}

fn random_tree(rng: &mut ChaCha8Rng, d: u32, j0: u32, depth: u32) -> CoefficientTree {
    let basis = HaarBasis::new(d).unwrap();
    let mut tree = CoefficientTree::zeros(&basis, j0, depth).unwrap();
    for c in tree.iter_mut() {
        *c = rng.gen_range(-1.0..1.0) * f64::powi(10.0, rng.gen_range(-2..3));
    }
    tree
}

fn wavelet_layer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7A);
    let mut parseval_gap = 0.0f64;
    let mut round_trip_gap = 0.0f64;
    for i in 0..PARSEVAL_TREES {
        let d = 1 + (i % 2) as u32;
        let j0 = rng.gen_range(0..3);
        let depth = rng.gen_range(0..if d == 1 { 6 } else { 3 });
        let tree = random_tree(&mut rng, d, j0, depth);
        let cells = tree.cell_values().unwrap();
        let energy = cells.iter().map(|v| v * v).sum::<f64>() / cells.len() as f64;
        parseval_gap = parseval_gap.max((energy - tree.sum_sq()).abs() / tree.sum_sq().max(1.0));

        // f = synthesis of a scale-0 tree is piecewise constant on dyadic cells
        let basis = HaarBasis::new(d).unwrap();
        let source = random_tree(&mut rng, d, 0, depth);
        let analyzed = wavelet::analyze(&basis, |x| wavelet::synthesize(&basis, &source, x).unwrap(), 0, depth as i64)
            .unwrap();
        for (a, b) in analyzed.iter().zip(source.iter()) {
            round_trip_gap = round_trip_gap.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    let reports: Vec<_> = [1, 2]
        .iter()
        .map(|&d| HaarBasis::new(d).unwrap().check_regularity(REGULARITY_TOL))
        .collect();
    let regularity = reports
        .iter()
        .flat_map(|r| r.checks.iter().map(|c| c.residual))
        .fold(0.0, f64::max);
    let passed = parseval_gap <= PARSEVAL_TOL
        && round_trip_gap <= ROUND_TRIP_TOL
        && regularity <= REGULARITY_TOL
        && reports.iter().all(|r| r.passed());
    Verdict {
        id: 7,
        name: "wavelet layer",
        passed,
        detail: format!(
            "Parseval gap {parseval_gap:.2e}, round-trip gap {round_trip_gap:.2e}, regularity residual {regularity:.2e}"
        ),
    }
}

fn coefficient_slot(tree: &mut CoefficientTree, id: CoefficientId, j0: u32) -> &mut f64 {
    match id {
        CoefficientId::Scaling { k, .. } => &mut tree.alpha[k],
        CoefficientId::Detail { j, index } => &mut tree.beta[(j - j0) as usize][index],
    }
}

fn gradient_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xFD);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for i in 0..FD_STATES {
        let d = 1 + (i % 2) as u32;
        let basis = HaarBasis::new(d).unwrap();
        let j0 = rng.gen_range(0..3);
        let depth = rng.gen_range(0..4);
        let tree = random_tree(&mut rng, d, j0, depth);
        let point: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
        let y = rng.gen_range(-5.0..5.0);
        let loss = |t: &CoefficientTree| {
            let r = wavelet::synthesize(&basis, t, &point).unwrap() - y;
            r * r
        };
        let pred = wavelet::synthesize(&basis, &tree, &point).unwrap();
        let grads = coefficient_gradients(&basis, j0, depth, &point, loss_derivative(pred, y), 1.0).unwrap();
        for g in grads {
            let (mut plus, mut minus) = (tree.clone(), tree.clone());
            *coefficient_slot(&mut plus, g.id, j0) += FD_STEP;
            *coefficient_slot(&mut minus, g.id, j0) -= FD_STEP;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
            let scale = fd.abs().max(g.gradient.abs());
            if scale > 0.0 {
                worst = worst.max((fd - g.gradient).abs() / scale);
            }
            compared += 1;
        }
    }
    Verdict {
        id: 8,
        name: "gradient oracle vs finite differences",
        passed: worst <= FD_REL_TOL,
        detail: format!("max relative gap {worst:.2e} over {compared} coefficients in {FD_STATES} states"),
    }
}

fn jensen(runs: &[&RunOutcome]) -> Verdict {
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for r in runs {
        let (averaged, mean) = r.jensen_pair().expect("risk trace kept");
        worst = worst.max(averaged - mean);
        violations += (averaged > mean + JENSEN_TOL) as usize;
    }
    Verdict {
        id: 9,
        name: "online-to-batch Jensen",
        passed: violations == 0 && !runs.is_empty(),
        detail: format!(
            "{violations}/{} runs violate, max l2_risk(avg) - mean l2_risk {worst:.3e}",
            runs.len()
        ),
    }
}

fn risk_decomposition() -> Verdict {
    let config = ExperimentConfig::from_json(RATE_CONFIG).unwrap().with_horizon(2048);
    let target = config.target.build().unwrap();
    let noise = NoiseModel::gaussian(0.5).unwrap();
    // the predictor is a trained average, fixed across Monte-Carlo seeds
    let mut reg = clipwave_core::regression::Regressor::new(config.regression.clone()).unwrap();
    for s in batch::generate_sample(&target, &noise, 2048, 0xDEC, 0) {
        reg.predict(s.point()).unwrap().observe(s.y).unwrap();
    }
    let predictor = reg.averaged_tree().unwrap();
    let seeds: Vec<u64> = (0..DECOMP_SEEDS).collect();
    let mut passing = 0;
    let mut worst = 0.0f64;
    queue::run_ordered(
        &seeds,
        queue::thread_count(),
        |&seed| batch::risk_decomposition_check(&predictor, &target, &noise, DECOMP_SAMPLES, 1000 + seed).unwrap(),
        |_, c| {
            let z = c.gap.abs() / c.stderr;
            worst = worst.max(z);
            passing += (z <= DECOMP_STDERRS) as usize;
            Ok::<(), ()>(())
        },
    )
    .unwrap();
    Verdict {
        id: 10,
        name: "risk decomposition",
        passed: passing >= DECOMP_MIN_PASSING,
        detail: format!("{passing}/{DECOMP_SEEDS} seeds within {DECOMP_STDERRS} stderr, max |gap|/stderr {worst:.2}"),
    }
}

#[test]
fn acceptance() {
    let base = ExperimentConfig::from_json(RATE_CONFIG).unwrap();
    let t_configs: Vec<_> = [256u64, 1024, 4096, 16384].iter().map(|&t| base.with_horizon(t)).collect();
    let sigma_base = base.with_horizon(8192);
    let s_configs: Vec<_> = [0.25, 0.5, 1.0, 2.0].iter().map(|&s| sigma_base.with_sigma(s)).collect();
    let t_runs = run_grid(&t_configs);
    let s_runs = run_grid(&s_configs);

    let mut verdicts = vec![
        rate_verdict(1, "T-sweep rate", &t_runs, Sweep::Horizon, T_BAND),
        rate_verdict(2, "noise-level rate", &s_runs, Sweep::Sigma2, SIGMA2_BAND),
        bettor_certificate(),
        clipping_calibration(),
        margin_competitiveness(),
        aggregator_certificate(),
        wavelet_layer(),
        gradient_oracle(),
    ];
    let all_runs: Vec<&RunOutcome> = t_runs.iter().chain(&s_runs).collect();
    verdicts.push(jensen(&all_runs));
    verdicts.push(risk_decomposition());

    println!();
    for v in &verdicts {
        println!(
            "criterion {:>2} {:<40} {}  {}",
            v.id,
            v.name,
            if v.passed { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
