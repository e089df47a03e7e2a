use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feature bins of the MFCC input map.
pub const PAPER_FEATURE_DIM: usize = 40;

/// Half-open interval `[lo, hi)` of feature bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub lo: usize,
    pub hi: usize,
}

impl Band {
    pub fn width(&self) -> usize {
        self.hi - self.lo
    }
}

/// Ordered, covering list of feature-axis bands; overlap is allowed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandLayout {
    bands: Vec<Band>,
    feature_dim: usize,
}

impl BandLayout {
    pub fn new(bands: &[(usize, usize)], feature_dim: usize) -> Result<Self> {
        if bands.is_empty() {
            return Err(Error::InvalidLayout("a layout needs at least one band".into()));
        }
        let bands: Vec<Band> = bands.iter().map(|&(lo, hi)| Band { lo, hi }).collect();
        for b in &bands {
            if b.lo >= b.hi || b.hi > feature_dim {
                return Err(Error::InvalidLayout(format!(
                    "band [{}, {}) is empty or outside [0, {feature_dim})",
                    b.lo, b.hi
                )));
            }
        }
        if bands.windows(2).any(|w| w[0].lo >= w[1].lo || w[0].hi > w[1].hi) {
            return Err(Error::InvalidLayout("bands must be sorted by their bounds".into()));
        }
        let layout = Self { bands, feature_dim };
        if let Some(bin) = layout.coverage().iter().position(|&c| c == 0) {
            return Err(Error::InvalidLayout(format!("feature bin {bin} is not covered by any band")));
        }
        Ok(layout)
    }

    pub fn bands(&self) -> &[Band] {
        &self.bands
    }

    pub fn len(&self) -> usize {
        self.bands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bands.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of bands containing each feature bin.
    pub fn coverage(&self) -> Vec<usize> {
        let mut counts = vec![0; self.feature_dim];
        for b in &self.bands {
            for c in &mut counts[b.lo..b.hi] {
                *c += 1;
            }
        }
        counts
    }

    pub fn is_overlapping(&self) -> bool {
        self.coverage().iter().any(|&c| c > 1)
    }
}

/// The overlapped layouts used for 2, 3 and 4 bands over 40 MFCC bins.
pub fn paper_layout(num_bands: usize) -> Result<BandLayout> {
    let bands: &[(usize, usize)] = match num_bands {
        2 => &[(0, 26), (14, 40)],
        3 => &[(0, 16), (12, 28), (24, 40)],
        4 => &[(0, 14), (8, 22), (16, 30), (26, 40)],
        n => {
            return Err(Error::InvalidLayout(format!(
                "no reference layout for {n} bands (supported: 2, 3, 4)"
            )))
        }
    };
    BandLayout::new(bands, PAPER_FEATURE_DIM)
}

/// `num_bands` equal-width bands sharing `overlap` bins with each neighbour.
///
/// Width is `ceil((feature_dim + (num_bands − 1)·overlap) / num_bands)` and
/// bands start every `width − overlap` bins; the last band is cut at
/// `feature_dim`.
pub fn uniform_layout(num_bands: usize, feature_dim: usize, overlap: usize) -> Result<BandLayout> {
    if num_bands == 0 || feature_dim == 0 {
        return Err(Error::InvalidLayout("need at least one band and one feature bin".into()));
    }
    let width = (feature_dim + (num_bands - 1) * overlap).div_ceil(num_bands);
    if width > feature_dim {
        return Err(Error::InvalidLayout(format!(
            "band width {width} exceeds {feature_dim} feature bins"
        )));
    }
    if overlap >= width && num_bands > 1 {
        return Err(Error::InvalidLayout(format!("overlap {overlap} must be smaller than band width {width}")));
    }
    let stride = width - overlap;
    let mut bands = Vec::with_capacity(num_bands);
    for i in 0..num_bands {
        let lo = i * stride;
        if lo >= feature_dim {
            return Err(Error::InvalidLayout(format!("band {i} would start past the last bin")));
        }
        let hi = if i + 1 == num_bands { feature_dim } else { (lo + width).min(feature_dim) };
        bands.push((lo, hi));
    }
    BandLayout::new(&bands, feature_dim)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pairs(l: &BandLayout) -> Vec<(usize, usize)> {
        l.bands().iter().map(|b| (b.lo, b.hi)).collect()
    }

    #[test]
    fn reference_layouts() {
        assert_eq!(pairs(&paper_layout(2).unwrap()), vec![(0, 26), (14, 40)]);
        assert_eq!(pairs(&paper_layout(3).unwrap()), vec![(0, 16), (12, 28), (24, 40)]);
        assert_eq!(pairs(&paper_layout(4).unwrap()), vec![(0, 14), (8, 22), (16, 30), (26, 40)]);
        assert!(paper_layout(5).is_err());
        assert!(paper_layout(1).is_err());
        for b in 2..=4 {
            let l = paper_layout(b).unwrap();
            assert!(l.coverage().iter().all(|&c| c >= 1));
            assert!(l.is_overlapping());
        }
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(pairs(&uniform_layout(3, 40, 4).unwrap()), vec![(0, 16), (12, 28), (24, 40)]);
        assert_eq!(pairs(&uniform_layout(1, 40, 0).unwrap()), vec![(0, 40)]);
        assert_eq!(pairs(&uniform_layout(2, 40, 12).unwrap()), vec![(0, 26), (14, 40)]);
        assert_eq!(pairs(&uniform_layout(3, 40, 0).unwrap()), vec![(0, 14), (14, 28), (28, 40)]);
        assert!(uniform_layout(2, 10, 20).is_err());
        assert!(uniform_layout(0, 40, 0).is_err());
    }

    #[test]
    fn invalid_layouts() {
        assert!(BandLayout::new(&[], 40).is_err());
        assert!(BandLayout::new(&[(0, 20), (22, 40)], 40).is_err(), "gap");
        assert!(BandLayout::new(&[(20, 40), (0, 20)], 40).is_err(), "unsorted");
        assert!(BandLayout::new(&[(0, 41)], 40).is_err());
        assert!(BandLayout::new(&[(5, 5), (0, 40)], 40).is_err());
        let disjoint = BandLayout::new(&[(0, 20), (20, 40)], 40).unwrap();
        assert!(!disjoint.is_overlapping());
    }

    proptest! {
        #[test]
        fn uniform_layouts_cover_every_bin(b in 1usize..8, dim in 8usize..80, overlap in 0usize..10) {
            if let Ok(l) = uniform_layout(b, dim, overlap) {
                prop_assert_eq!(l.len(), b);
                let cov = l.coverage();
                prop_assert!(cov.iter().all(|&c| c >= 1));
                if overlap == 0 {
                    prop_assert!(cov.iter().all(|&c| c == 1));
                }
            }
        }
    }
}
