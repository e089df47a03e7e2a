//! MFCC front-end: Hann-windowed frames, power spectrum, HTK mel filterbank,
//! log with floor, orthonormal DCT-II.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::wav::{AudioClip, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const FRAME_LEN: usize = 480;
pub const HOP: usize = 160;
pub const FFT_LEN: usize = 512;
pub const NUM_FILTERS: usize = 40;
pub const NUM_COEFFS: usize = 40;
pub const F_MIN: f64 = 20.0;
pub const F_MAX: f64 = 7600.0;
pub const LOG_FLOOR: f64 = 1e-10;
/// Frames produced from a one-second clip.
pub const NUM_FRAMES: usize = 98;

/// Number of full frames that fit in `n_samples`.
pub fn frame_count(n_samples: usize, frame_len: usize, hop: usize) -> Result<usize> {
    if hop == 0 || frame_len == 0 {
        return Err(Error::InvalidParameter("frame length and hop must be positive".into()));
    }
    if frame_len > n_samples {
        return Err(Error::FrameTooLong { frame_len, n_samples });
    }
    Ok((n_samples - frame_len) / hop + 1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub num_filters: usize,
    pub num_coeffs: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: SAMPLE_RATE,
            frame_len: FRAME_LEN,
            hop: HOP,
            fft_len: FFT_LEN,
            num_filters: NUM_FILTERS,
            num_coeffs: NUM_COEFFS,
            f_min: F_MIN,
            f_max: F_MAX,
            log_floor: LOG_FLOOR,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.into()));
        if self.frame_len == 0 || self.hop == 0 {
            return bad("frame_len and hop must be positive");
        }
        if self.fft_len < self.frame_len {
            return bad("fft_len must be at least frame_len");
        }
        if self.num_filters == 0 || self.num_coeffs == 0 || self.num_coeffs > self.num_filters {
            return bad("need 0 < num_coeffs <= num_filters");
        }
        let nyquist = f64::from(self.sample_rate) / 2.0;
        if !(0.0 <= self.f_min && self.f_min < self.f_max && self.f_max <= nyquist) {
            return bad("need 0 <= f_min < f_max <= sample_rate / 2");
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive");
        }
        Ok(())
    }

    pub fn num_bins(&self) -> usize {
        self.fft_len / 2 + 1
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with edges equally spaced on the mel scale, evaluated at
/// FFT bin centre frequencies. Row-major `num_filters × num_bins`.
pub fn mel_filterbank(cfg: &MfccConfig) -> Vec<Vec<f64>> {
    let (lo, hi) = (hz_to_mel(cfg.f_min), hz_to_mel(cfg.f_max));
    let n = cfg.num_filters;
    let edges: Vec<f64> = (0..n + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n + 1) as f64))
        .collect();
    let bin_hz = f64::from(cfg.sample_rate) / cfg.fft_len as f64;
    (0..n)
        .map(|m| {
            let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..cfg.num_bins())
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    ((f - l) / (c - l)).min((r - f) / (r - c)).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Orthonormal DCT-II basis, `num_coeffs × n`.
pub fn dct_matrix(num_coeffs: usize, n: usize) -> Vec<Vec<f64>> {
    (0..num_coeffs)
        .map(|k| {
            let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            (0..n)
                .map(|i| scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .collect()
        })
        .collect()
}

/// `(1, 98, 40, 1)` MFCC map of a one-second clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap(Tensor);

impl FeatureMap {
    pub fn new(tensor: Tensor) -> Result<Self> {
        let s = tensor.shape();
        if s.n != 1 || s.c != 1 {
            return Err(Error::ShapeMismatch(format!("feature map must be (1, t, f, 1), got {s:?}")));
        }
        if tensor.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self(tensor))
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor {
        self.0
    }

    pub fn shape(&self) -> Shape {
        self.0.shape()
    }
}

/// Reusable extractor holding the FFT plan, window, filterbank and DCT basis.
#[derive(Clone)]
pub struct Mfcc {
    cfg: MfccConfig,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    filters: Vec<Vec<f64>>,
    dct: Vec<Vec<f64>>,
}

impl std::fmt::Debug for Mfcc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mfcc").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

impl Default for Mfcc {
    fn default() -> Self {
        Self::new(MfccConfig::default()).expect("default config is valid")
    }
}

impl Mfcc {
    pub fn new(cfg: MfccConfig) -> Result<Self> {
        cfg.validate()?;
        let fft = FftPlanner::new().plan_fft_forward(cfg.fft_len);
        Ok(Self {
            window: hann_window(cfg.frame_len),
            filters: mel_filterbank(&cfg),
            dct: dct_matrix(cfg.num_coeffs, cfg.num_filters),
            fft,
            cfg,
        })
    }

    pub fn config(&self) -> &MfccConfig {
        &self.cfg
    }

    pub fn filterbank(&self) -> &[Vec<f64>] {
        &self.filters
    }

    /// Power spectrum `|X_k|^2`, `k = 0..=fft_len/2`, of one frame.
    pub fn power_spectrum(&self, frame: &[f32]) -> Vec<f64> {
        assert_eq!(frame.len(), self.cfg.frame_len);
        let mut buf = vec![Complex::new(0.0, 0.0); self.cfg.fft_len];
        for ((b, &s), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            b.re = f64::from(s) * w;
        }
        self.fft.process(&mut buf);
        buf[..self.cfg.num_bins()].iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn filterbank_energies(&self, power: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }

    /// Log mel energies per frame, `frames × num_filters`.
    pub fn log_mel(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        let frames = frame_count(samples.len(), self.cfg.frame_len, self.cfg.hop)?;
        Ok((0..frames)
            .map(|i| {
                let start = i * self.cfg.hop;
                let power = self.power_spectrum(&samples[start..start + self.cfg.frame_len]);
                self.filterbank_energies(&power)
                    .into_iter()
                    .map(|e| e.max(self.cfg.log_floor).ln())
                    .collect()
            })
            .collect())
    }

    pub fn cepstrum(&self, log_mel: &[f64]) -> Vec<f64> {
        self.dct
            .iter()
            .map(|row| row.iter().zip(log_mel).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Full-precision coefficients, `frames × num_coeffs`.
    pub fn compute_f64(&self, samples: &[f32]) -> Result<Vec<Vec<f64>>> {
        Ok(self.log_mel(samples)?.iter().map(|lm| self.cepstrum(lm)).collect())
    }

    pub fn compute(&self, samples: &[f32]) -> Result<FeatureMap> {
        let rows = self.compute_f64(samples)?;
        let t = rows.len();
        let data: Vec<f32> = rows.into_iter().flatten().map(|v| v as f32).collect();
        FeatureMap::new(Tensor::from_vec((1, t, self.cfg.num_coeffs, 1), data)?)
    }

    pub fn extract(&self, clip: &AudioClip) -> FeatureMap {
        self.compute(clip.samples()).expect("one-second clip always yields frames")
    }
}

/// MFCC map of a clip under the default configuration.
pub fn mfcc(clip: &AudioClip) -> FeatureMap {
    Mfcc::default().extract(clip)
}
