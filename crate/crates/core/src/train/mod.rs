//! Plain SGD training with the two-phase schedule, evaluation, multi-trial
//! runs and checkpoints.

pub mod checkpoint;
pub mod trials;

use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{Batch, Corpus, SamplingConfig, Split};
use crate::error::{Error, Result};
use crate::nn::{Graph, Mode, Params};
use crate::subband::ModelSpec;
use crate::tensor::Rng;

pub use checkpoint::{load_checkpoint, load_checkpoint_into, save_checkpoint};
pub use trials::{run_trials, run_trials_with_seeds, TrialSummary};

pub const METRICS_SCHEMA: &str = "# subband-cnn metrics v1";
pub const METRICS_HEADER: &str = "step,loss,lr,dev_accuracy";

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub lr_phase1: f64,
    pub steps_phase1: usize,
    pub lr_phase2: f64,
    pub steps_phase2: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Steps between metric rows and dev evaluations; 0 logs only the end.
    pub eval_interval: usize,
    /// Samples per forward pass during evaluation.
    pub eval_batch: usize,
    pub sampling: SamplingConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainingConfig {
    /// 24k steps at 0.001 then 3k at 0.0001, minibatches of 100.
    pub fn paper() -> Self {
        Self {
            lr_phase1: 0.001,
            steps_phase1: 24_000,
            lr_phase2: 0.0001,
            steps_phase2: 3_000,
            batch_size: 100,
            seed: 0,
            eval_interval: 1_000,
            eval_batch: 200,
            sampling: SamplingConfig::default(),
        }
    }

    /// The same learning rates over 2k + 0.5k steps of 8 samples, for the
    /// synthetic corpus.
    pub fn desk() -> Self {
        Self {
            steps_phase1: 2_000,
            steps_phase2: 500,
            batch_size: 8,
            eval_interval: 250,
            ..Self::paper()
        }
    }

    pub fn total_steps(&self) -> usize {
        self.steps_phase1 + self.steps_phase2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.lr_phase1 > 0.0 && self.lr_phase1.is_finite()) || !(self.lr_phase2 > 0.0 && self.lr_phase2.is_finite()) {
            return bad(format!("learning rates must be positive, got {} and {}", self.lr_phase1, self.lr_phase2));
        }
        if self.batch_size == 0 || self.eval_batch == 0 {
            return bad("batch sizes must be positive".into());
        }
        self.sampling.validate()
    }
}

/// Learning rate for a 0-based step.
pub fn lr_at(step: usize, cfg: &TrainingConfig) -> f64 {
    if step < cfg.steps_phase1 {
        cfg.lr_phase1
    } else {
        cfg.lr_phase2
    }
}

/// `p <- p - lr * g` for every parameter. Parameters are untouched on error.
pub fn sgd_step(params: &mut Params, grads: &Params, lr: f32) -> Result<()> {
    let g = grads.slices();
    let p = params.slices();
    if p.len() != g.len() || p.iter().zip(&g).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::ShapeMismatch("gradient layout differs from parameters".into()));
    }
    if let Some(i) = g.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("gradient tensor {i}")));
    }
    for (p, g) in params.slices_mut().into_iter().zip(g) {
        for (w, d) in p.iter_mut().zip(g) {
            *w -= lr * d;
        }
    }
    Ok(())
}

/// Predicted class per sample; ties go to the lowest index.
pub fn predict(graph: &Graph, params: &Params, batch: &Batch, eval_batch: usize) -> Result<Vec<usize>> {
    let classes = graph.num_classes();
    let mut out = Vec::with_capacity(batch.len());
    for chunk in batch.chunks(eval_batch) {
        let trace = graph.forward(params, &chunk.features, Mode::Eval)?;
        out.extend(trace.logits().chunks_exact(classes).map(argmax));
    }
    Ok(out)
}

pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of samples whose arg-max logit equals the label, dropout off.
pub fn evaluate(graph: &Graph, params: &Params, batch: &Batch, eval_batch: usize) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyPool("evaluation set".into()));
    }
    let pred = predict(graph, params, batch, eval_batch)?;
    let correct = pred.iter().zip(&batch.labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / batch.len() as f64)
}

/// Accuracy over the balanced evaluation set of `split`.
pub fn evaluate_split(spec: &ModelSpec, params: &Params, corpus: &Corpus, split: Split, cfg: &TrainingConfig) -> Result<f64> {
    let set = corpus.eval_set(split, &cfg.sampling, cfg.seed)?;
    evaluate(spec.graph(), params, &set, cfg.eval_batch)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    /// Mean training loss since the previous row.
    pub loss: f64,
    pub lr: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{METRICS_SCHEMA}\n{METRICS_HEADER}\n");
        for r in &self.rows {
            let dev = r.dev_accuracy.map(|a| format!("{a:.6}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.6},{},{}", r.step, r.loss, r.lr, dev);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the last step.
    pub params: Params,
    pub log: MetricsLog,
    pub final_dev: Option<f64>,
    /// Highest dev accuracy seen at an evaluation point, with its step and parameters.
    pub best_dev: Option<(usize, f64, Params)>,
    pub seconds: f64,
}

/// Runs the configured schedule from a seeded initialization.
pub fn train(spec: &ModelSpec, corpus: &Corpus, cfg: &TrainingConfig) -> Result<TrainOutcome> {
    let params = Params::init(spec.graph(), &mut Rng::stream(cfg.seed, 0))?;
    train_from(spec, corpus, cfg, params)
}

pub fn train_from(spec: &ModelSpec, corpus: &Corpus, cfg: &TrainingConfig, mut params: Params) -> Result<TrainOutcome> {
    cfg.validate()?;
    params.check(spec.graph())?;
    let start = Instant::now();
    let graph = spec.graph();
    let mut batch_rng = Rng::stream(cfg.seed, 1);
    let mut drop_rng = Rng::stream(cfg.seed, 2);
    let dev = match corpus.eval_set(Split::Dev, &cfg.sampling, cfg.seed) {
        Ok(set) => Some(set),
        Err(Error::EmptyPool(_)) => None,
        Err(e) => return Err(e),
    };
    let dev_acc = |p: &Params| dev.as_ref().map(|d| evaluate(graph, p, d, cfg.eval_batch)).transpose();

    let total = cfg.total_steps();
    let mut log = MetricsLog::default();
    let mut best: Option<(usize, f64, Params)> = None;
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    for step in 0..total {
        let batch = corpus.sample_batch(Split::Train, &mut batch_rng, cfg.batch_size, &cfg.sampling)?;
        let lg = graph.loss_and_grads(&params, &batch.features, &batch.labels, Mode::Train(&mut drop_rng))?;
        if !lg.loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {step}")));
        }
        let lr = lr_at(step, cfg);
        sgd_step(&mut params, &lg.grads, lr as f32).map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("{m} at step {step}")),
            e => e,
        })?;
        loss_sum += f64::from(lg.loss);
        loss_n += 1;
        let done = step + 1;
        if done == total || (cfg.eval_interval > 0 && done % cfg.eval_interval == 0) {
            let acc = dev_acc(&params)?;
            if let Some(a) = acc {
                if best.as_ref().is_none_or(|b| a > b.1) {
                    best = Some((done, a, params.clone()));
                }
            }
            log::debug!("step {done}: loss {:.4} dev {:?}", loss_sum / loss_n as f64, acc);
            log.rows.push(MetricsRow {
                step: done,
                loss: loss_sum / loss_n as f64,
                lr,
                dev_accuracy: acc,
            });
            (loss_sum, loss_n) = (0.0, 0);
        }
    }
    let final_dev = match log.rows.last() {
        Some(r) => r.dev_accuracy,
        None => dev_acc(&params)?,
    };
    Ok(TrainOutcome {
        params,
        log,
        final_dev,
        best_dev: best,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subband::{build_model_for, Architecture, ConcatVariant, InputDims};

    fn tiny_spec() -> ModelSpec {
        let input = InputDims { time: 98, feature: 40 };
        build_model_for(input, Architecture::FullBand, 2, 0.5, None, ConcatVariant::default()).unwrap()
    }

    #[test]
    fn schedule_breakpoints() {
        let c = TrainingConfig::paper();
        assert_eq!(lr_at(0, &c), 0.001);
        assert_eq!(lr_at(23_999, &c), 0.001);
        assert_eq!(lr_at(24_000, &c), 0.0001);
        assert_eq!(lr_at(26_999, &c), 0.0001);
        assert_eq!(c.total_steps(), 27_000);
    }

    #[test]
    fn sgd_arithmetic() {
        let spec = tiny_spec();
        let g = spec.graph();
        let mut p = Params::zeros(g).unwrap();
        let zeros = Params::zeros(g).unwrap();
        sgd_step(&mut p, &zeros, 1.0).unwrap();
        assert_eq!(p, zeros);
        let mut ones = Params::zeros(g).unwrap();
        ones.slices_mut().into_iter().for_each(|s| s.fill(1.0));
        sgd_step(&mut p, &ones, 1.0).unwrap();
        assert!(p.slices().iter().all(|s| s.iter().all(|&v| v == -1.0)));

        let mut a = Params::zeros(g).unwrap();
        let mut b = Params::zeros(g).unwrap();
        sgd_step(&mut a, &ones, 0.5).unwrap();
        sgd_step(&mut a, &ones, 0.5).unwrap();
        sgd_step(&mut b, &ones, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sgd_rejects_non_finite_without_partial_update() {
        let g = tiny_spec();
        let mut p = Params::zeros(g.graph()).unwrap();
        let mut bad = Params::zeros(g.graph()).unwrap();
        let last = bad.slices_mut().pop().unwrap();
        last[0] = f32::NAN;
        let mut ones_first = bad.clone();
        ones_first.slices_mut()[0].fill(1.0);
        assert!(matches!(sgd_step(&mut p, &ones_first, 1.0), Err(Error::NonFinite(_))));
        assert_eq!(p, Params::zeros(g.graph()).unwrap());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 12]), 0);
    }

    #[test]
    fn zero_steps_keeps_init() {
        let corpus = Corpus::synthetic(2, 1).unwrap();
        let spec = tiny_spec();
        let cfg = TrainingConfig {
            steps_phase1: 0,
            steps_phase2: 0,
            ..TrainingConfig::desk()
        };
        let out = train(&spec, &corpus, &cfg).unwrap();
        assert_eq!(out.params, Params::init(spec.graph(), &mut Rng::stream(cfg.seed, 0)).unwrap());
        assert!(out.log.rows.is_empty());
    }

    #[test]
    fn short_runs_are_reproducible() {
        let corpus = Corpus::synthetic(4, 2).unwrap();
        let spec = tiny_spec();
        let cfg = TrainingConfig {
            steps_phase1: 6,
            steps_phase2: 2,
            eval_interval: 4,
            ..TrainingConfig::desk()
        };
        let a = train(&spec, &corpus, &cfg).unwrap();
        let b = train(&spec, &corpus, &cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.rows.len(), 2);
        assert_eq!(a.log.rows[1].lr, cfg.lr_phase2);
        assert!(a.log.to_csv().starts_with("# subband-cnn metrics v1\nstep,loss,lr,dev_accuracy\n4,"));
    }
}
