//! FLOPS, multiplications and parameters of every architecture over K.
//!
//! cargo run --release --example profile_architectures -- [K...]

use subband_cnn::flops::count_flops;
use subband_cnn::subband::{Architecture, ModelSpec};

fn main() -> subband_cnn::Result<()> {
    let mut ks: Vec<usize> = std::env::args().skip(1).map(|s| s.parse().expect("K")).collect();
    if ks.is_empty() {
        ks = vec![8, 16, 24, 32, 40, 48, 56, 64];
    }
    println!("{:>3} {:<22} {:>12} {:>12} {:>10} {:>9}", "K", "arch", "flops", "mult", "params", "vs full");
    for &k in &ks {
        let full = count_flops(&ModelSpec::paper(Architecture::FullBand, k)?).totals.flops as f64;
        for arch in Architecture::ALL {
            let t = count_flops(&ModelSpec::paper(arch, k)?).totals;
            let change = 100.0 * (t.flops as f64 - full) / full;
            println!(
                "{k:>3} {:<22} {:>12} {:>12} {:>10} {:>+8.1}%",
                arch.as_str(),
                t.flops,
                t.multiplications,
                t.parameters,
                change
            );
        }
    }
    let spec = ModelSpec::paper(Architecture::OverlappedSubband, ks[0])?;
    println!("\nper-layer breakdown, {} K={}:\n{}", spec.arch, ks[0], count_flops(&spec).to_csv());
    Ok(())
}
