//! Repeated training runs differing only by seed.

use crate::data::{Corpus, Split};
use crate::error::{Error, Result};
use crate::flops::count_flops;
use crate::subband::ModelSpec;

use super::{evaluate_split, train, TrainingConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    /// Test accuracy of the final model of each trial.
    pub accuracies: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 when only one trial ran.
    pub stddev: f64,
    /// False when fewer than two trials make the sample stddev undefined.
    pub stddev_defined: bool,
    pub flops: u64,
}

impl TrialSummary {
    pub fn from_accuracies(accuracies: Vec<f64>, flops: u64) -> Result<Self> {
        let n = accuracies.len();
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one trial".into()));
        }
        let mean = accuracies.iter().sum::<f64>() / n as f64;
        let (stddev, stddev_defined) = if n > 1 {
            let ss: f64 = accuracies.iter().map(|a| (a - mean).powi(2)).sum();
            ((ss / (n - 1) as f64).sqrt(), true)
        } else {
            (0.0, false)
        };
        Ok(Self {
            accuracies,
            mean,
            stddev,
            stddev_defined,
            flops,
        })
    }
}

/// Seeds `cfg.seed, cfg.seed + 1, ...`.
pub fn run_trials(spec: &ModelSpec, corpus: &Corpus, cfg: &TrainingConfig, n_trials: usize) -> Result<TrialSummary> {
    let seeds: Vec<u64> = (0..n_trials as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    run_trials_with_seeds(spec, corpus, cfg, &seeds)
}

/// One trial per seed, run on parallel threads; each trial is itself serial.
pub fn run_trials_with_seeds(spec: &ModelSpec, corpus: &Corpus, cfg: &TrainingConfig, seeds: &[u64]) -> Result<TrialSummary> {
    if seeds.is_empty() {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let accs = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                s.spawn(move || {
                    let cfg = TrainingConfig { seed, ..cfg.clone() };
                    let out = train(spec, corpus, &cfg)?;
                    evaluate_split(spec, &out.params, corpus, Split::Test, &cfg)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("trial thread panicked"))
            .collect::<Result<Vec<_>>>()
    })?;
    TrialSummary::from_accuracies(accs, count_flops(spec).totals.flops)
}
