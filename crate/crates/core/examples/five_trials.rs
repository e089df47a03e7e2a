//! Repeated training with different seeds, reporting mean and stddev of test accuracy.
//!
//! cargo run --release --example five_trials -- [arch] [K] [trials] [steps]

use subband_cnn::data::Corpus;
use subband_cnn::subband::{Architecture, ModelSpec};
use subband_cnn::train::{run_trials, TrainingConfig};

fn main() -> subband_cnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arch: Architecture = args.first().map_or("overlapped_subband", String::as_str).parse()?;
    let k: usize = args.get(1).map_or(4, |s| s.parse().expect("K"));
    let trials: usize = args.get(2).map_or(5, |s| s.parse().expect("trials"));
    let steps: usize = args.get(3).map_or(800, |s| s.parse().expect("steps"));
    let cfg = TrainingConfig {
        steps_phase1: steps * 4 / 5,
        steps_phase2: steps - steps * 4 / 5,
        eval_interval: steps,
        ..TrainingConfig::desk()
    };
    let corpus = Corpus::synthetic(30, 0)?;
    let spec = ModelSpec::paper(arch, k)?;
    let s = run_trials(&spec, &corpus, &cfg, trials)?;
    let accs: Vec<String> = s.accuracies.iter().map(|a| format!("{a:.3}")).collect();
    println!("{arch} K={k}: {} flops", s.flops);
    println!("test accuracies {}", accs.join(" "));
    let sd = if s.stddev_defined { format!("{:.4}", s.stddev) } else { "undefined (one trial)".into() };
    println!("mean {:.4} stddev {sd}", s.mean);
    Ok(())
}
