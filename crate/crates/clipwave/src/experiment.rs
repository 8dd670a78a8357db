//! End-to-end runs: sample generation, online regression, averaging and risk.

use std::path::PathBuf;
use std::time::Instant;

use clipwave_core::batch::{self, NoiseModel, Sample, TargetFunction};
use clipwave_core::regression::Regressor;
use clipwave_core::wavelet;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, Checkpoint};
use crate::config::{Exponent, ExperimentConfig};
use crate::error::{HarnessError, Result};

/// Sample stream used for the training data of a run.
const DATA_STREAM: u64 = 0;

/// One experiment outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_digest: String,
    pub seed: u64,
    #[serde(rename = "T")]
    pub horizon: u64,
    pub sigma: f64,
    pub s: f64,
    pub p: Exponent,
    pub q: Exponent,
    #[serde(rename = "B")]
    pub b: f64,
    /// `‖f̄_T - f‖²`.
    pub risk: f64,
    /// `Σ_t (ŷ_t - y_t)² - (f(x_t) - y_t)²`.
    pub regret: f64,
    pub experts: usize,
    pub ms: u64,
    pub version: String,
}

impl RunRecord {
    /// Equality ignoring the wallclock.
    pub fn same_outcome(&self, other: &Self) -> bool {
        let mut a = self.clone();
        a.ms = other.ms;
        &a == other
    }
}

/// Per-round empirical regret curves.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretCurves {
    /// `ℓ_t(ŷ_t) - ℓ_t(f(x_t))`.
    pub terms: Vec<f64>,
    /// Prefix sums of `terms`.
    pub vs_truth: Vec<f64>,
    /// `Σ_{s≤t} ℓ_s(ŷ_s) - min_e Σ_{s≤t} ℓ_s(f̂_{e,s}(x_s))`.
    pub vs_best_expert: Vec<f64>,
}

impl RegretCurves {
    fn push(&mut self, term: f64, vs_best: f64) {
        let prev = self.vs_truth.last().copied().unwrap_or(0.0);
        self.terms.push(term);
        self.vs_truth.push(prev + term);
        self.vs_best_expert.push(vs_best);
    }

    /// Writes `round,term,cumulative,vs_best_expert`.
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["round", "term", "cumulative", "vs_best_expert"])?;
        for (t, ((term, cum), best)) in self.terms.iter().zip(&self.vs_truth).zip(&self.vs_best_expert).enumerate() {
            w.write_record(&[(t + 1).to_string(), term.to_string(), cum.to_string(), best.to_string()])?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Keep per-round regret curves.
    pub trace: bool,
    /// Keep the per-round risk `‖f̂_t - f‖²` of the online predictors.
    pub risk_trace: bool,
    /// Checkpoint file; an existing checkpoint is resumed.
    pub checkpoint: Option<PathBuf>,
    /// Rounds between checkpoints.
    pub checkpoint_every: Option<u64>,
    /// Stop after this many rounds, leaving the checkpoint behind.
    pub stop_after: Option<u64>,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: RunRecord,
    pub curves: Option<RegretCurves>,
    pub risk_trace: Option<Vec<f64>>,
    /// Average regret over the rate main term, when `σ > 0`.
    pub bound_ratio: Option<f64>,
    /// `false` when the ratio exceeded the configured constant.
    pub within_bound_constant: Option<bool>,
    /// Number of gradients clipped over the run.
    pub clipped: u64,
    /// `true` when the run stopped early at `stop_after`.
    pub partial: bool,
}

impl RunOutcome {
    /// The regret curves, or [`HarnessError::TraceDisabled`].
    pub fn regret_accounting(&self) -> Result<&RegretCurves> {
        self.curves.as_ref().ok_or(HarnessError::TraceDisabled)
    }

    /// `(l2_risk(f̄_T), (1/T)·Σ_t l2_risk(f̂_t))` when the risk trace was kept.
    pub fn jensen_pair(&self) -> Option<(f64, f64)> {
        let trace = self.risk_trace.as_ref()?;
        if trace.is_empty() {
            return None;
        }
        Some((self.record.risk, trace.iter().sum::<f64>() / trace.len() as f64))
    }
}

/// State carried across rounds; this is what a checkpoint stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct RunState {
    pub regressor: Regressor,
    pub truth_loss: f64,
    pub clipped: u64,
    pub curves: Option<RegretCurves>,
    pub elapsed_ms: u64,
}

/// Quadrature resolution used for risks of predictors up to `max_level`.
pub fn risk_resolution(max_level: u32, d: u32) -> u32 {
    max_level + 1 + wavelet::guard_for(max_level + 1, d)
}

/// Runs `config` with `seed` and returns its record.
pub fn run_experiment(config: &ExperimentConfig, seed: u64) -> Result<RunRecord> {
    Ok(run_with(config, seed, &RunOptions::default())?.record)
}

pub fn run_with(config: &ExperimentConfig, seed: u64, options: &RunOptions) -> Result<RunOutcome> {
    config.validate()?;
    let start = Instant::now();
    let digest = config.digest()?;
    let target = config.target.build()?;
    let noise = NoiseModel::new(config.noise.kind, config.noise.sigma)?;
    let horizon = config.regression.horizon;
    let samples = batch::generate_sample(&target, &noise, horizon, seed, DATA_STREAM);

    let resumed = match &options.checkpoint {
        Some(path) if path.exists() => Some(checkpoint::load(path, &digest, seed)?),
        _ => None,
    };
    let mut state = match resumed {
        Some(state) => state,
        None => {
            let mut regressor = Regressor::new(config.regression.clone())?;
            if options.risk_trace {
                let projection = batch::target_projection(&target, regressor.max_level())?;
                regressor.enable_risk_trace(&projection.tree, projection.norm_sq)?;
            }
            RunState {
                regressor,
                truth_loss: 0.0,
                clipped: 0,
                curves: options.trace.then(RegretCurves::default),
                elapsed_ms: 0,
            }
        }
    };
    if state.curves.is_some() != options.trace || state.regressor.risk_trace().is_some() != options.risk_trace {
        return Err(HarnessError::Checkpoint("trace options differ from the checkpointed run".into()));
    }

    let first = state.regressor.rounds() as usize;
    let stop = options.stop_after.map_or(samples.len(), |n| (n as usize).min(samples.len()));
    for (i, sample) in samples.iter().enumerate().take(stop).skip(first) {
        step(&mut state, &target, sample)?;
        let done = i as u64 + 1;
        if let (Some(path), Some(every)) = (&options.checkpoint, options.checkpoint_every) {
            if every > 0 && done % every == 0 && (done as usize) < samples.len() {
                save_state(path, &digest, seed, &mut state, start)?;
            }
        }
    }
    let partial = stop < samples.len();
    if partial {
        if let Some(path) = &options.checkpoint {
            save_state(path, &digest, seed, &mut state, start)?;
        }
    }

    let reg = &state.regressor;
    let averaged = reg.averaged_tree()?;
    let risk = batch::l2_risk(&averaged, &target, risk_resolution(averaged.max_level(), averaged.d))?;
    let regret = reg.cumulative_loss() - state.truth_loss;
    let nominal = target.nominal();
    let bound_ratio = main_term(&target, noise.sigma, horizon).map(|m| regret / horizon as f64 / m);
    let ms = state.elapsed_ms + start.elapsed().as_millis() as u64;
    let record = RunRecord {
        config_digest: digest,
        seed,
        horizon,
        sigma: noise.sigma,
        s: nominal.s,
        p: Exponent(nominal.p),
        q: Exponent(nominal.q),
        b: nominal.b,
        risk,
        regret,
        experts: reg.expert_count(),
        ms,
        version: crate::VERSION.to_string(),
    };
    Ok(RunOutcome {
        record,
        risk_trace: reg.risk_trace().map(<[f64]>::to_vec),
        curves: state.curves,
        within_bound_constant: config.bound_constant.zip(bound_ratio).map(|(c, r)| r <= c),
        bound_ratio,
        clipped: state.clipped,
        partial,
    })
}

fn step(state: &mut RunState, target: &TargetFunction, sample: &Sample) -> Result<()> {
    let x = sample.point();
    let truth = target.eval(x);
    let round = state.regressor.predict(x)?;
    let outcome = round.observe(sample.y)?;
    state.clipped += outcome.clipped as u64;
    let truth_loss = (truth - sample.y) * (truth - sample.y);
    state.truth_loss += truth_loss;
    if let Some(curves) = state.curves.as_mut() {
        let loss = (outcome.prediction - sample.y) * (outcome.prediction - sample.y);
        let best = state
            .regressor
            .expert_losses()
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        curves.push(loss - truth_loss, state.regressor.cumulative_loss() - best);
    }
    Ok(())
}

fn save_state(path: &std::path::Path, digest: &str, seed: u64, state: &mut RunState, start: Instant) -> Result<()> {
    let snapshot = RunState {
        elapsed_ms: state.elapsed_ms + start.elapsed().as_millis() as u64,
        ..state.clone()
    };
    checkpoint::save(
        path,
        &Checkpoint {
            config_digest: digest.to_string(),
            seed,
            state: snapshot,
        },
    )
}

/// `B^{2d/(2s+d)}·σ^{4s/(2s+d)}·T^{-2s/(2s+d)}`, or `None` for `σ = 0`.
pub fn main_term(target: &TargetFunction, sigma: f64, horizon: u64) -> Option<f64> {
    if sigma <= 0.0 {
        return None;
    }
    let n = target.nominal();
    let d = target.dim() as f64;
    let denom = 2.0 * n.s + d;
    Some(n.b.powf(2.0 * d / denom) * sigma.powf(4.0 * n.s / denom) * (horizon as f64).powf(-2.0 * n.s / denom))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(text_sigma: f64, horizon: u64) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{
            "regression": {{ "B": 1.0, "J0": 1, "J": 4, "T": {horizon}, "G": 2.0 }},
            "noise": {{ "kind": "gaussian", "sigma": {text_sigma} }},
            "target": {{ "kind": "step", "edges": [0.3333333333333333, 0.7], "levels": [0.0, 1.0, -0.5],
                        "s": 1.0, "p": 1.0, "q": "inf", "B": 1.0 }}
        }}"#
        ))
        .unwrap()
    }

    #[test]
    fn zero_target_without_noise_has_zero_risk() {
        let c = ExperimentConfig::from_json(
            r#"{
            "regression": { "J0": 1, "J": 3, "T": 200 },
            "noise": { "kind": "none", "sigma": 0.0 },
            "target": { "kind": "constant", "value": 0.0, "s": 1.0, "p": 2.0, "q": 2.0, "B": 1.0 }
        }"#,
        )
        .unwrap();
        let r = run_experiment(&c, 3).unwrap();
        assert!(r.risk <= 1e-12, "{}", r.risk);
        assert_eq!(r.regret, 0.0);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = config(0.5, 300);
        let a = run_experiment(&c, 7).unwrap();
        let b = run_experiment(&c, 7).unwrap();
        assert!(a.same_outcome(&b));
        let other = run_experiment(&c, 8).unwrap();
        assert_ne!(a.risk, other.risk);
    }

    #[test]
    fn curves_are_prefix_sums() {
        let c = config(0.5, 200);
        let out = run_with(
            &c,
            1,
            &RunOptions {
                trace: true,
                ..RunOptions::default()
            },
        )
        .unwrap();
        let curves = out.regret_accounting().unwrap();
        let mut acc = 0.0;
        for (term, cum) in curves.terms.iter().zip(&curves.vs_truth) {
            acc += term;
            assert!((acc - cum).abs() <= 1e-9 * acc.abs().max(1.0));
        }
        assert!((curves.vs_truth.last().unwrap() - out.record.regret).abs() <= 1e-9 * out.record.regret.abs().max(1.0));
        let untraced = run_with(&c, 1, &RunOptions::default()).unwrap();
        assert!(matches!(untraced.regret_accounting(), Err(HarnessError::TraceDisabled)));
    }

    #[test]
    fn main_term_scales_like_the_rate() {
        let c = config(0.5, 64);
        let f = c.target.build().unwrap();
        let a = main_term(&f, 0.5, 1000).unwrap();
        let b = main_term(&f, 0.5, 8000).unwrap();
        assert!((b / a - 8f64.powf(-2.0 / 3.0)).abs() < 1e-12);
        assert!(main_term(&f, 0.0, 10).is_none());
    }
}
