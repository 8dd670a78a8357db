//! A quick invariant suite run by `clipwave selftest`.

use clipwave_core::aggregator::ExpertWeights;
use clipwave_core::batch::{self, Nominal, NoiseModel, TargetFunction, TargetKind};
use clipwave_core::bettor::BettorState;
use clipwave_core::regression::{coefficient_gradients, loss_derivative, CoefficientId, RegressionConfig, Regressor};
use clipwave_core::wavelet::{self, CoefficientTree, HaarBasis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub fn run_all() -> Vec<Check> {
    vec![
        parseval(),
        regularity(),
        bettor_certificate(),
        aggregator_certificate(),
        finite_differences(),
        jensen(),
    ]
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn random_tree(rng: &mut ChaCha8Rng, d: u32, j0: u32, depth: u32) -> CoefficientTree {
    let basis = HaarBasis::new(d).expect("dimension 1 or 2");
    let mut tree = CoefficientTree::zeros(&basis, j0, depth).expect("small tree");
    for c in tree.iter_mut() {
        *c = rng.gen_range(-1.0..1.0);
    }
    tree
}

fn parseval() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for i in 0..100 {
        let d = 1 + i % 2;
        let (j0, depth) = (rng.gen_range(0..3), rng.gen_range(0..4));
        let tree = random_tree(&mut rng, d, j0, depth);
        let cells = tree.cell_values().expect("valid tree");
        let energy = cells.iter().map(|v| v * v).sum::<f64>() / cells.len() as f64;
        worst = worst.max((energy - tree.sum_sq()).abs());
    }
    check("parseval", worst <= 1e-9, format!("max gap {worst:.3e}"))
}

fn regularity() -> Check {
    let reports: Vec<_> = [1, 2]
        .iter()
        .map(|&d| HaarBasis::new(d).expect("dimension").check_regularity(1e-12))
        .collect();
    let worst = reports
        .iter()
        .flat_map(|r| r.checks.iter().map(|c| c.residual))
        .fold(0.0, f64::max);
    check("regularity", reports.iter().all(|r| r.passed()), format!("max residual {worst:.3e}"))
}

fn bettor_certificate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for _ in 0..100 {
        let radius = rng.gen_range(0.1..5.0);
        let mut b = BettorState::new(0.0, radius).expect("valid radius");
        let (mut grads, mut plays) = (Vec::new(), Vec::new());
        for _ in 0..200 {
            let hint = f64::powi(2.0, rng.gen_range(0..5));
            let g = rng.gen_range(-1.0..1.0) * hint;
            plays.push(b.predict());
            b.update(g, hint).expect("gradient within hint");
            grads.push(g);
        }
        for _ in 0..5 {
            let c = rng.gen_range(-radius..=radius);
            let regret: f64 = grads.iter().zip(&plays).map(|(g, x)| g * (x - c)).sum();
            let bound = b.regret_certificate(c, &grads).expect("comparator in box").bound();
            violations += (regret > bound) as usize;
        }
    }
    check("bettor certificate", violations == 0, format!("{violations} violations"))
}

fn aggregator_certificate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for _ in 0..100 {
        let k = rng.gen_range(2..8);
        let mut w = ExpertWeights::new(k).expect("k >= 1");
        let mut total = vec![0.0; k];
        for _ in 0..200 {
            let losses: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mixed: f64 = w.weights().iter().zip(&losses).map(|(a, b)| a * b).sum();
            let regrets: Vec<f64> = losses.iter().map(|l| mixed - l).collect();
            for (t, r) in total.iter_mut().zip(&regrets) {
                *t += r;
            }
            w.update(&regrets).expect("finite regrets");
        }
        violations += total.iter().enumerate().filter(|&(e, &r)| r > w.regret_bound(e)).count();
    }
    check("aggregator certificate", violations == 0, format!("{violations} violations"))
}

fn finite_differences() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let basis = HaarBasis::new(1).expect("dimension");
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let tree = random_tree(&mut rng, 1, 1, 3);
        let x = [rng.gen::<f64>()];
        let y = rng.gen_range(-3.0..3.0);
        let pred = wavelet::synthesize(&basis, &tree, &x).expect("point in domain");
        let loss = |t: &CoefficientTree| {
            let r = wavelet::synthesize(&basis, t, &x).expect("point in domain") - y;
            r * r
        };
        let grads = coefficient_gradients(&basis, 1, 3, &x, loss_derivative(pred, y), 1.0).expect("valid");
        for g in grads {
            let (mut plus, mut minus) = (tree.clone(), tree.clone());
            let h = 1e-6;
            match g.id {
                CoefficientId::Scaling { k, .. } => {
                    plus.alpha[k] += h;
                    minus.alpha[k] -= h;
                }
                CoefficientId::Detail { j, index } => {
                    plus.beta[(j - 1) as usize][index] += h;
                    minus.beta[(j - 1) as usize][index] -= h;
                }
            }
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            worst = worst.max((fd - g.gradient).abs() / fd.abs().max(g.gradient.abs()).max(1e-3));
        }
    }
    check("finite differences", worst <= 1e-6, format!("max relative gap {worst:.3e}"))
}

fn jensen() -> Check {
    let f = TargetFunction::new(
        TargetKind::Step {
            edges: vec![0.4],
            levels: vec![1.0, -1.0],
        },
        1,
        Nominal {
            s: 1.0,
            p: 1.0,
            q: f64::INFINITY,
            b: 2.0,
        },
    )
    .expect("valid target");
    let config = RegressionConfig {
        j0_max: 1,
        depth: Some(4),
        horizon: 300,
        gradient_bound: Some(2.0),
        ..RegressionConfig::default()
    };
    let mut reg = Regressor::new(config).expect("valid config");
    let projection = batch::target_projection(&f, reg.max_level()).expect("projection");
    reg.enable_risk_trace(&projection.tree, projection.norm_sq).expect("trace");
    let noise = NoiseModel::gaussian(0.5).expect("sigma > 0");
    for s in batch::generate_sample(&f, &noise, 300, 5, 0) {
        let round = reg.predict(s.point()).expect("point in domain");
        round.observe(s.y).expect("finite label");
    }
    let trace = reg.risk_trace().expect("enabled");
    let mean = trace.iter().sum::<f64>() / trace.len() as f64;
    let averaged = reg.averaged_tree().expect("tree");
    let risk = batch::l2_risk(&averaged, &f, projection.resolution).expect("risk");
    check("jensen", risk <= mean + 1e-12, format!("{risk:.6} <= {mean:.6}"))
}

#[cfg(test)]
mod tests {
    #[test]
    fn suite_passes() {
        for c in super::run_all() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
