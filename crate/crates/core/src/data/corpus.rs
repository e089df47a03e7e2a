//! Featurized datasets, minibatch sampling and evaluation sets.

use std::collections::HashMap;
use std::path::Path;

use crate::dsp::{load_wav, read_wav, AudioClip, FeatureCache, FeatureMap, Mfcc, NUM_FRAMES};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

use super::manifest::{scan_dataset, DatasetManifest, Split, Task, SILENCE_CLASS, UNKNOWN_CLASS};
use super::synthetic::{noise_crop, synthetic_dataset};

/// Fractions of each minibatch drawn as silence and unknown samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingConfig {
    pub silence_frac: f64,
    pub unknown_frac: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            silence_frac: 1.0 / 12.0,
            unknown_frac: 1.0 / 12.0,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| (0.0..=1.0).contains(&f);
        if ok(self.silence_frac) && ok(self.unknown_frac) && self.silence_frac + self.unknown_frac <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid sampling fractions {self:?}")))
        }
    }

    /// `(keyword, unknown, silence)` counts for a batch of `n`.
    pub fn composition(&self, n: usize) -> (usize, usize, usize) {
        let sil = (n as f64 * self.silence_frac).round() as usize;
        let unk = ((n as f64 * self.unknown_frac).round() as usize).min(n - sil.min(n));
        let sil = sil.min(n);
        (n - sil - unk, unk, sil)
    }
}

/// Features `(n, t, f, 1)` with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Consecutive sub-batches of at most `size` samples.
    pub fn chunks(&self, size: usize) -> impl Iterator<Item = Batch> + '_ {
        let size = size.max(1);
        (0..self.len()).step_by(size).map(move |start| {
            let len = size.min(self.len() - start);
            Batch {
                features: self.features.batch_range(start, len).expect("range within batch"),
                labels: self.labels[start..start + len].to_vec(),
            }
        })
    }
}

#[derive(Debug, Clone, Default)]
struct Pools {
    keyword: Vec<usize>,
    unknown: Vec<usize>,
    silence: Vec<usize>,
}

/// A manifest with every entry featurized, plus raw noise for silence crops.
#[derive(Debug, Clone)]
pub struct Corpus {
    manifest: DatasetManifest,
    features: Vec<FeatureMap>,
    noise: Vec<Vec<f32>>,
    mfcc: Mfcc,
    pools: HashMap<Split, Pools>,
}

/// Featurizes clips across threads; output order and values match a serial run.
pub fn featurize_all(mfcc: &Mfcc, clips: &[AudioClip]) -> Vec<FeatureMap> {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(clips.len().max(1));
    let chunk = clips.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = clips
            .chunks(chunk)
            .map(|part| s.spawn(move || part.iter().map(|c| mfcc.extract(c)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("featurizer thread")).collect()
    })
}

impl Corpus {
    pub fn new(manifest: DatasetManifest, features: Vec<FeatureMap>, noise: Vec<Vec<f32>>) -> Result<Self> {
        if features.len() != manifest.len() {
            return Err(Error::Dataset(format!(
                "{} feature maps for {} manifest entries",
                features.len(),
                manifest.len()
            )));
        }
        if let Some(first) = features.first() {
            let s = first.shape();
            if let Some(bad) = features.iter().find(|f| f.shape() != s) {
                return Err(Error::ShapeMismatch(format!("feature maps differ: {s:?} vs {:?}", bad.shape())));
            }
        }
        let mut pools: HashMap<Split, Pools> = Split::ALL.iter().map(|&s| (s, Pools::default())).collect();
        for (i, e) in manifest.entries.iter().enumerate() {
            let p = pools.get_mut(&e.split).expect("all splits present");
            match e.class {
                SILENCE_CLASS => p.silence.push(i),
                UNKNOWN_CLASS => p.unknown.push(i),
                _ => p.keyword.push(i),
            }
        }
        Ok(Self {
            manifest,
            features,
            noise,
            mfcc: Mfcc::default(),
            pools,
        })
    }

    pub fn from_clips(manifest: DatasetManifest, clips: &[AudioClip], noise: Vec<Vec<f32>>) -> Result<Self> {
        let mfcc = Mfcc::default();
        Self::new(manifest, featurize_all(&mfcc, clips), noise)
    }

    pub fn synthetic(per_class: usize, seed: u64) -> Result<Self> {
        let d = synthetic_dataset(per_class, &mut Rng::new(seed))?;
        Self::from_clips(d.manifest, &d.clips, d.noise)
    }

    /// Scans `root`, featurizing every clip. Features found in `cache` are
    /// reused; the cache is rewritten when anything new was computed.
    pub fn load(root: &Path, task: Task, dev_pct: f64, test_pct: f64, cache: Option<&Path>) -> Result<Self> {
        let manifest = scan_dataset(root, task, dev_pct, test_pct)?;
        let mut store = match cache {
            Some(p) if p.exists() => FeatureCache::load(p)?,
            _ => FeatureCache::new(NUM_FRAMES, crate::dsp::mfcc::NUM_COEFFS),
        };
        let missing: Vec<usize> = (0..manifest.len()).filter(|&i| !store.contains(&manifest.entries[i].path)).collect();
        if !missing.is_empty() {
            log::info!("featurizing {} of {} clips", missing.len(), manifest.len());
            let mfcc = Mfcc::default();
            for part in missing.chunks(4096) {
                let clips = part
                    .iter()
                    .map(|&i| load_wav(&root.join(&manifest.entries[i].path)))
                    .collect::<Result<Vec<_>>>()?;
                for (&i, map) in part.iter().zip(featurize_all(&mfcc, &clips)) {
                    store.insert(manifest.entries[i].path.clone(), &map)?;
                }
            }
            if let Some(p) = cache {
                store.save(p)?;
            }
        }
        let features = manifest
            .entries
            .iter()
            .map(|e| store.get(&e.path).ok_or_else(|| Error::Dataset(format!("cache lost {}", e.path))))
            .collect::<Result<Vec<_>>>()?;
        let noise = manifest.noise.iter().map(|n| read_wav(&root.join(n))).collect::<Result<Vec<_>>>()?;
        Self::new(manifest, features, noise)
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn features(&self) -> &[FeatureMap] {
        &self.features
    }

    pub fn noise(&self) -> &[Vec<f32>] {
        &self.noise
    }

    /// Every feature map in `split` in manifest order, unbalanced.
    pub fn split_batch(&self, split: Split) -> Result<Batch> {
        let idx: Vec<usize> = (0..self.manifest.len()).filter(|&i| self.manifest.entries[i].split == split).collect();
        if idx.is_empty() {
            return Err(Error::EmptyPool(format!("{split} split")));
        }
        self.assemble(&idx, Vec::new())
    }

    fn assemble(&self, idx: &[usize], silence: Vec<FeatureMap>) -> Result<Batch> {
        let mut maps: Vec<&Tensor> = idx.iter().map(|&i| self.features[i].tensor()).collect();
        maps.extend(silence.iter().map(FeatureMap::tensor));
        let mut labels: Vec<usize> = idx.iter().map(|&i| self.manifest.entries[i].class).collect();
        labels.extend(std::iter::repeat_n(SILENCE_CLASS, silence.len()));
        Ok(Batch {
            features: Tensor::stack(&maps)?,
            labels,
        })
    }

    fn silence_crop(&self, rng: &mut Rng) -> Result<FeatureMap> {
        Ok(self.mfcc.extract(&noise_crop(&self.noise, rng)?))
    }

    /// Draws a training minibatch: silence as gain-scaled noise crops,
    /// unknown and keyword samples uniformly with replacement.
    pub fn sample_batch(&self, split: Split, rng: &mut Rng, batch_size: usize, cfg: &SamplingConfig) -> Result<Batch> {
        cfg.validate()?;
        if batch_size == 0 {
            return Err(Error::InvalidParameter("batch size must be positive".into()));
        }
        let pools = &self.pools[&split];
        let (n_kw, n_unk, n_sil) = cfg.composition(batch_size);
        let draw = |pool: &[usize], n: usize, what: &str, rng: &mut Rng| -> Result<Vec<usize>> {
            if n > 0 && pool.is_empty() {
                return Err(Error::EmptyPool(format!("{split} {what} pool")));
            }
            Ok((0..n).map(|_| pool[rng.below(pool.len())]).collect())
        };
        let mut idx = draw(&pools.keyword, n_kw, "keyword", rng)?;
        idx.extend(draw(&pools.unknown, n_unk, "unknown", rng)?);
        let silence = (0..n_sil).map(|_| self.silence_crop(rng)).collect::<Result<Vec<_>>>()?;
        self.assemble(&idx, silence)
    }

    /// Fixed evaluation set for a split: every keyword entry, unknown entries
    /// subsampled to the configured class balance, and silence from explicit
    /// entries when the split has them, otherwise deterministic noise crops.
    pub fn eval_set(&self, split: Split, cfg: &SamplingConfig, seed: u64) -> Result<Batch> {
        cfg.validate()?;
        let pools = &self.pools[&split];
        let n_kw = pools.keyword.len();
        let kw_frac = 1.0 - cfg.silence_frac - cfg.unknown_frac;
        let target = |frac: f64| {
            if kw_frac > 0.0 {
                (n_kw as f64 * frac / kw_frac).round() as usize
            } else {
                usize::MAX
            }
        };
        let mut rng = Rng::stream(seed, split.id());
        let mut pick = |pool: &[usize], n: usize| {
            let mut p = pool.to_vec();
            if p.len() > n {
                rng.shuffle(&mut p);
                p.truncate(n);
                p.sort_unstable();
            }
            p
        };
        let mut idx = pools.keyword.clone();
        idx.extend(pick(&pools.unknown, target(cfg.unknown_frac)));
        let n_sil = target(cfg.silence_frac);
        let mut crops = Vec::new();
        if !pools.silence.is_empty() {
            idx.extend(pick(&pools.silence, n_sil));
        } else if n_sil > 0 && !self.noise.is_empty() {
            crops = (0..n_sil).map(|_| self.silence_crop(&mut rng)).collect::<Result<Vec<_>>>()?;
        }
        if idx.is_empty() && crops.is_empty() {
            return Err(Error::EmptyPool(format!("{split} split")));
        }
        self.assemble(&idx, crops)
    }
}
