//! Desk-scale 12-class dataset of tone complexes in noise.

use std::f64::consts::PI;

use crate::dsp::wav::{AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
use crate::dsp::mfcc::{hz_to_mel, mel_to_hz};
use crate::error::{Error, Result};
use rand::RngCore;

use crate::tensor::Rng;

use super::manifest::{DatasetManifest, Task, NOISE_DIR, SILENCE_WORD, SYNTHETIC};

/// Non-keyword words sharing the unknown class.
pub const UNKNOWN_WORDS: [&str; 3] = ["unk_a", "unk_b", "unk_c"];

const SIGNATURES: usize = 13;
const PEAKS: usize = 3;
const NOISE_STD: f64 = 0.02;
const NOISE_FILES: usize = 3;

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub manifest: DatasetManifest,
    /// Aligned with `manifest.entries`.
    pub clips: Vec<AudioClip>,
    /// Aligned with `manifest.noise`.
    pub noise: Vec<Vec<f32>>,
}

/// Peak frequencies of signature `s`: every 13th point of a mel-spaced grid
/// starting at index `s`, so signatures interleave across the spectrum.
pub fn signature_peaks(s: usize) -> [f64; PEAKS] {
    let (lo, hi) = (hz_to_mel(250.0), hz_to_mel(6000.0));
    let n = SIGNATURES * PEAKS;
    std::array::from_fn(|p| mel_to_hz(lo + (hi - lo) * (s + p * SIGNATURES) as f64 / (n - 1) as f64))
}

fn noise_recording(rng: &mut Rng, len: usize) -> Vec<f32> {
    (0..len).map(|_| (NOISE_STD * rng.normal()) as f32).collect()
}

fn tone_clip(signature: usize, rng: &mut Rng) -> AudioClip {
    let sr = f64::from(SAMPLE_RATE);
    let onset = (rng.uniform() * 0.3 * sr) as usize;
    let dur = ((0.4 + 0.3 * rng.uniform()) * sr) as usize;
    let tones: Vec<(f64, f64, f64)> = signature_peaks(signature)
        .iter()
        .map(|&f| (f * (1.0 + 0.02 * (2.0 * rng.uniform() - 1.0)), 0.1 + 0.2 * rng.uniform(), 2.0 * PI * rng.uniform()))
        .collect();
    let samples = (0..CLIP_SAMPLES)
        .map(|i| {
            let mut v = NOISE_STD * rng.normal();
            if (onset..onset + dur).contains(&i) {
                let env = (PI * (i - onset) as f64 / dur as f64).sin();
                let t = i as f64 / sr;
                v += env * tones.iter().map(|&(f, a, ph)| a * (2.0 * PI * f * t + ph).sin()).sum::<f64>();
            }
            v.clamp(-1.0, 1.0) as f32
        })
        .collect();
    AudioClip::from_samples(samples)
}

pub(crate) fn noise_crop(noise: &[Vec<f32>], rng: &mut Rng) -> Result<AudioClip> {
    if noise.is_empty() {
        return Err(Error::EmptyPool("background noise".into()));
    }
    let src = &noise[rng.below(noise.len())];
    let gain = rng.uniform() as f32;
    let start = if src.len() > CLIP_SAMPLES { rng.below(src.len() - CLIP_SAMPLES + 1) } else { 0 };
    let end = (start + CLIP_SAMPLES).min(src.len());
    Ok(AudioClip::from_samples(src[start..end].iter().map(|s| s * gain).collect()))
}

/// `per_class` clips for each of 12 classes: ten keyword signatures, an
/// unknown class cycling over three further signatures, and silence crops of
/// the noise pool. Splits follow the same hashing as real data.
pub fn synthetic_dataset(per_class: usize, rng: &mut Rng) -> Result<SyntheticDataset> {
    if per_class < 2 {
        return Err(Error::InvalidParameter(format!("per_class must be at least 2, got {per_class}")));
    }
    let noise: Vec<Vec<f32>> = (0..NOISE_FILES).map(|_| noise_recording(rng, 3 * CLIP_SAMPLES)).collect();
    let noise_names: Vec<String> = (0..NOISE_FILES).map(|i| format!("{NOISE_DIR}/noise{i}.wav")).collect();

    let mut items: Vec<(String, String, AudioClip)> = Vec::with_capacity(12 * per_class);
    for j in 0..per_class {
        for (c, word) in SYNTHETIC.iter().enumerate() {
            items.push((name(word, rng, j), word.to_string(), tone_clip(c, rng)));
        }
        let k = j % UNKNOWN_WORDS.len();
        let word = UNKNOWN_WORDS[k];
        items.push((name(word, rng, j), word.to_string(), tone_clip(SYNTHETIC.len() + k, rng)));
        items.push((name(SILENCE_WORD, rng, j), SILENCE_WORD.to_string(), noise_crop(&noise, rng)?));
    }
    let manifest = DatasetManifest::from_files(
        Task::Synthetic,
        items.iter().map(|(p, w, _)| (p.clone(), w.clone())),
        noise_names,
        10.0,
        10.0,
    )?;
    let mut by_path: std::collections::HashMap<String, AudioClip> =
        items.into_iter().map(|(p, _, clip)| (p, clip)).collect();
    let clips = manifest.entries.iter().map(|e| by_path.remove(&e.path).expect("unique names")).collect();
    Ok(SyntheticDataset { manifest, clips, noise })
}

fn name(word: &str, rng: &mut Rng, j: usize) -> String {
    format!("{word}/{:08x}_nohash_{j}.wav", rng.next_u32())
}
