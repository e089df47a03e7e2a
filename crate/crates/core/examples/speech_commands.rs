//! Full-schedule comparison of the full-band and overlapped sub-band models on
//! Speech Commands. Needs the extracted dataset; features are cached next to it.
//!
//! SUBBAND_DATA_ROOT=/data/speech_commands cargo run --release --example speech_commands -- [commands|digits] [K] [trials]

use std::path::PathBuf;

use subband_cnn::data::{Corpus, Task};
use subband_cnn::flops::count_flops;
use subband_cnn::subband::{Architecture, ModelSpec};
use subband_cnn::train::{run_trials, TrainingConfig};

fn main() -> subband_cnn::Result<()> {
    let Some(root) = std::env::var_os(subband_cnn::cli::DATA_ROOT_ENV).map(PathBuf::from) else {
        eprintln!("set {} to the extracted dataset directory", subband_cnn::cli::DATA_ROOT_ENV);
        std::process::exit(2);
    };
    let args: Vec<String> = std::env::args().skip(1).collect();
    let task: Task = args.first().map_or("commands", String::as_str).parse()?;
    let k: usize = args.get(1).map_or(64, |s| s.parse().expect("K"));
    let trials: usize = args.get(2).map_or(5, |s| s.parse().expect("trials"));

    let cache = root.join(format!("features_{task}.sbfc"));
    let corpus = Corpus::load(&root, task, 10.0, 10.0, Some(&cache))?;
    for split in subband_cnn::data::Split::ALL {
        let c = corpus.manifest().counts(split);
        println!("{split}: {} clips", c.total());
    }
    let cfg = TrainingConfig::paper();
    for arch in [Architecture::FullBand, Architecture::OverlappedSubband] {
        let spec = ModelSpec::paper(arch, k)?;
        let s = run_trials(&spec, &corpus, &cfg, trials)?;
        println!(
            "{task} {arch} K={k}: test {:.4} +/- {:.4} over {trials} trials, {} flops, {} params",
            s.mean,
            s.stddev,
            s.flops,
            count_flops(&spec).totals.parameters
        );
    }
    Ok(())
}
