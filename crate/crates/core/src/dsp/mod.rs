//! Audio loading and MFCC features.

pub mod cache;
pub mod mfcc;
pub mod wav;

pub use cache::FeatureCache;
pub use mfcc::{frame_count, mfcc, FeatureMap, Mfcc, MfccConfig, NUM_FRAMES};
pub use wav::{load_wav, read_wav, write_wav, AudioClip, CLIP_SAMPLES, SAMPLE_RATE};
