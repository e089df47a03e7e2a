//! Trains briefly, saves a checkpoint, reloads it and confirms identical predictions.
//!
//! cargo run --release --example checkpoint_roundtrip -- [path]

use subband_cnn::data::{Corpus, Split};
use subband_cnn::subband::{Architecture, ModelSpec};
use subband_cnn::train::{evaluate_split, load_checkpoint, load_checkpoint_into, save_checkpoint, train, TrainingConfig};

fn main() -> subband_cnn::Result<()> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "roundtrip.ckpt".into());
    let path = std::path::Path::new(&path);
    let corpus = Corpus::synthetic(10, 0)?;
    let spec = ModelSpec::paper(Architecture::OverlappedSubband, 4)?;
    let cfg = TrainingConfig { steps_phase1: 500, steps_phase2: 0, eval_interval: 500, ..TrainingConfig::desk() };
    let out = train(&spec, &corpus, &cfg)?;
    save_checkpoint(&out.params, &spec, path)?;

    let (loaded_spec, loaded) = load_checkpoint(path)?;
    println!("{} bytes, {} bands, K={}", std::fs::metadata(path).map_or(0, |m| m.len()), loaded_spec.layout.as_ref().map_or(1, |l| l.len()), loaded_spec.k);
    let before = evaluate_split(&spec, &out.params, &corpus, Split::Test, &cfg)?;
    let after = evaluate_split(&loaded_spec, &loaded, &corpus, Split::Test, &cfg)?;
    println!("test accuracy before save {before:.4}, after load {after:.4}, identical params: {}", loaded == out.params);

    let wrong = ModelSpec::paper(Architecture::OverlappedSubband, 8)?;
    match load_checkpoint_into(path, &wrong) {
        Ok(_) => println!("unexpected: loaded into a K=8 model"),
        Err(e) => println!("loading into K=8 refused: {e}"),
    }
    Ok(())
}
