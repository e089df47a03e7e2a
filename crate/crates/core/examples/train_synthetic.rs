//! Trains one model on the synthetic corpus and reports train/dev/test accuracy.
//!
//! cargo run --release --example train_synthetic -- [arch] [K] [steps] [batch] [lr]

use subband_cnn::data::{Corpus, Split};
use subband_cnn::subband::{Architecture, ModelSpec};
use subband_cnn::train::{evaluate_split, train, TrainingConfig};

fn main() -> subband_cnn::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arch: Architecture = args.first().map_or("overlapped_subband", String::as_str).parse()?;
    let k: usize = args.get(1).map_or(8, |s| s.parse().expect("K"));
    let mut cfg = TrainingConfig::desk();
    if let Some(steps) = args.get(2) {
        let total: usize = steps.parse().expect("steps");
        cfg.steps_phase1 = total * 4 / 5;
        cfg.steps_phase2 = total - cfg.steps_phase1;
    }
    if let Some(b) = args.get(3) {
        cfg.batch_size = b.parse().expect("batch");
    }
    if let Some(lr) = args.get(4) {
        cfg.lr_phase1 = lr.parse().expect("lr");
        cfg.lr_phase2 = cfg.lr_phase1 / 10.0;
    }

    let corpus = Corpus::synthetic(50, 0)?;
    let spec = ModelSpec::paper(arch, k)?;
    println!("{arch} K={k}, {} steps, batch {}, lr {}/{}", cfg.total_steps(), cfg.batch_size, cfg.lr_phase1, cfg.lr_phase2);
    let out = train(&spec, &corpus, &cfg)?;
    for r in &out.log.rows {
        println!("step {:>5}  loss {:.4}  dev {:.3}", r.step, r.loss, r.dev_accuracy.unwrap_or(f64::NAN));
    }
    for split in Split::ALL {
        println!("{split:>5} accuracy {:.4}", evaluate_split(&spec, &out.params, &corpus, split, &cfg)?);
    }
    println!("trained in {:.1} s", out.seconds);
    Ok(())
}
