use std::path::PathBuf;

use subband_cnn::dsp::{load_wav, mfcc, Mfcc};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn golden() -> Vec<Vec<f64>> {
    std::fs::read_to_string(fixture("golden_mfcc.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn matches_numpy_reference() {
    let clip = load_wav(&fixture("golden_clip.wav")).unwrap();
    let ours = Mfcc::default().compute_f64(clip.samples()).unwrap();
    let want = golden();
    assert_eq!(ours.len(), want.len());
    let mut worst = 0.0f64;
    for (a, b) in ours.iter().zip(&want) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst <= 1e-6, "max abs diff {worst:e}");
}

#[test]
fn f32_map_tracks_reference() {
    let clip = load_wav(&fixture("golden_clip.wav")).unwrap();
    let map = mfcc(&clip);
    assert_eq!(map.shape().dims(), [1, 98, 40, 1]);
    let want: Vec<f64> = golden().into_iter().flatten().collect();
    for (x, y) in map.tensor().data().iter().zip(&want) {
        assert!((f64::from(*x) - y).abs() <= 1e-4 * y.abs().max(1.0));
    }
}
