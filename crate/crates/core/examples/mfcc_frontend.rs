//! Runs the MFCC front end on a WAV file, or on a synthetic two-tone clip.
//!
//! cargo run --release --example mfcc_frontend -- [clip.wav]

use subband_cnn::dsp::{load_wav, AudioClip, Mfcc, MfccConfig, CLIP_SAMPLES, SAMPLE_RATE};

fn main() -> subband_cnn::Result<()> {
    let clip = match std::env::args().nth(1) {
        Some(path) => load_wav(std::path::Path::new(&path))?,
        None => {
            let sr = SAMPLE_RATE as f32;
            let s: Vec<f32> = (0..CLIP_SAMPLES)
                .map(|i| {
                    let t = i as f32 / sr;
                    0.3 * (2.0 * std::f32::consts::PI * 440.0 * t).sin()
                        + 0.1 * (2.0 * std::f32::consts::PI * 3000.0 * t).sin()
                })
                .collect();
            AudioClip::from_samples(s)
        }
    };
    let mfcc = Mfcc::new(MfccConfig::default())?;
    let fm = mfcc.extract(&clip);
    let t = fm.tensor();
    println!("feature map {:?}", t.shape().dims());

    let energies = mfcc.log_mel(clip.samples())?;
    let mid = energies.len() / 2;
    let (peak, val) = energies[mid]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
    println!("frame {mid}: strongest mel filter {peak} (log energy {val:.2})");
    let row: Vec<String> = (0..8).map(|c| format!("{:.2}", t.at(0, mid, c, 0))).collect();
    println!("frame {mid}: c0..c7 = {}", row.join(" "));
    Ok(())
}
