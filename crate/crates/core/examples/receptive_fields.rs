//! Receptive fields of the first-stage outputs that feed conv2.
//!
//! cargo run --release --example receptive_fields

use subband_cnn::subband::{receptive_field, Architecture, ModelSpec};

fn main() -> subband_cnn::Result<()> {
    let cases = [
        (Architecture::FullBand, vec!["conv1", "pool1", "conv2"]),
        (Architecture::OverlappedSubband, vec!["band1/conv1", "band1/pool1", "concat", "conv2"]),
        (Architecture::FullPlusNonoverlap, vec!["band1/pool1", "full/pool1", "band1/conv2"]),
    ];
    for (arch, layers) in cases {
        let spec = ModelSpec::paper(arch, 8)?;
        println!("{arch}");
        for layer in layers {
            let rf = receptive_field(&spec, layer)?;
            let (lo, hi) = (rf.feature_bins.first(), rf.feature_bins.last());
            println!(
                "  {layer:<12} {:>3} frames x {:>2} bins  (bins {:?}..={:?} at the centre unit)",
                rf.time,
                rf.feature,
                lo.unwrap_or(&0),
                hi.unwrap_or(&0)
            );
        }
    }
    Ok(())
}
