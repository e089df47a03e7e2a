//! The reference overlapped band layouts and uniform layouts with their coverage.
//!
//! cargo run --release --example band_layouts -- [bands] [overlap]

use subband_cnn::subband::{paper_layout, uniform_layout, BandLayout, PAPER_FEATURE_DIM};

fn show(label: &str, l: &BandLayout) {
    let bands: Vec<String> = l.bands().iter().map(|b| format!("[{},{})", b.lo, b.hi)).collect();
    let cov: String = l.coverage().iter().map(|c| char::from(b'0' + *c as u8)).collect();
    println!("{label:<16} {}", bands.join(" "));
    println!("{:<16} {cov}", "  coverage");
}

fn main() -> subband_cnn::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|s| s.parse().expect("integer")).collect();
    for b in [2, 3, 4] {
        show(&format!("paper_layout({b})"), &paper_layout(b)?);
    }
    let bands = args.first().copied().unwrap_or(3);
    let overlap = args.get(1).copied().unwrap_or(0);
    show(&format!("uniform {bands}/{overlap}"), &uniform_layout(bands, PAPER_FEATURE_DIM, overlap)?);
    match BandLayout::new(&[(0, 20), (25, 40)], PAPER_FEATURE_DIM) {
        Ok(_) => println!("gapped layout accepted"),
        Err(e) => println!("gapped layout rejected: {e}"),
    }
    Ok(())
}
