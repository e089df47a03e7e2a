//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use subband_cnn::data::{Corpus, Split};
use subband_cnn::dsp::{load_wav, mfcc, AudioClip, Mfcc};
use subband_cnn::flops::count_flops;
use subband_cnn::nn::{conv2d_forward, gradient_check, ConvParams, Mode, Params};
use subband_cnn::subband::{
    build_model_for, paper_layout, receptive_field, uniform_layout, Architecture, BandLayout, ConcatVariant,
    InputDims, ModelSpec,
};
use subband_cnn::tensor::{Rng, Tensor};
use subband_cnn::train::{evaluate_split, run_trials_with_seeds, train, TrainingConfig, TrialSummary};

const PAPER_KS: [usize; 8] = [8, 16, 24, 32, 40, 48, 56, 64];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, elapsed: Duration) -> (bool, String) {
    (elapsed <= limit, format!("{:.2}s / limit {:.0}s", elapsed.as_secs_f64(), limit.as_secs_f64()))
}

/// Brute-force SAME convolution in f64.
fn direct_conv(x: &Tensor, p: &ConvParams<f32>) -> Vec<f64> {
    let s = x.shape();
    let w = p.weights.shape();
    let (kt, kf, ci, co) = (w.n, w.t, w.f, w.c);
    let (st, sf) = p.stride;
    let ot = s.t.div_ceil(st);
    let of = s.f.div_ceil(sf);
    let pt = ((ot - 1) * st + kt).saturating_sub(s.t) / 2;
    let pf = ((of - 1) * sf + kf).saturating_sub(s.f) / 2;
    let mut out = Vec::with_capacity(s.n * ot * of * co);
    for n in 0..s.n {
        for t in 0..ot {
            for f in 0..of {
                for o in 0..co {
                    let mut acc = f64::from(p.bias[o]);
                    for a in 0..kt {
                        for b in 0..kf {
                            let (it, jf) = ((t * st + a) as isize - pt as isize, (f * sf + b) as isize - pf as isize);
                            if it < 0 || jf < 0 || it as usize >= s.t || jf as usize >= s.f {
                                continue;
                            }
                            for c in 0..ci {
                                acc += f64::from(x.at(n, it as usize, jf as usize, c)) * f64::from(p.weights.at(a, b, c, o));
                            }
                        }
                    }
                    out.push(acc);
                }
            }
        }
    }
    out
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = Rng::new(2024);
    let mut worst = 0.0f64;
    let instances = 250;
    for _ in 0..instances {
        let dim = |rng: &mut Rng| 1 + rng.below(8);
        let (n, t, f) = (1 + rng.below(2), dim(&mut rng), dim(&mut rng));
        let (ci, co) = (1 + rng.below(4), 1 + rng.below(4));
        let (kt, kf) = (dim(&mut rng), dim(&mut rng));
        let stride = (1 + rng.below(3), 1 + rng.below(3));
        // Weights scaled by 1/sqrt(fan-in) keep outputs near unit scale, where
        // an f32 ulp is well below the tolerance.
        let scale = 1.0 / ((kt * kf * ci) as f64).sqrt();
        let mut uni = |len: usize, s: f64| (0..len).map(|_| ((2.0 * rng.uniform() - 1.0) * s) as f32).collect::<Vec<_>>();
        let x = Tensor::from_vec((n, t, f, ci), uni(n * t * f * ci, 1.0)).unwrap();
        let w = Tensor::from_vec((kt, kf, ci, co), uni(kt * kf * ci * co, scale)).unwrap();
        let p = ConvParams::new((kt, kf), stride, w, uni(co, 1.0)).unwrap();
        let y = conv2d_forward(&x, &p).unwrap();
        let want = direct_conv(&x, &p);
        assert_eq!(y.data().len(), want.len());
        for (a, b) in y.data().iter().zip(&want) {
            worst = worst.max((f64::from(*a) - b).abs());
        }
    }
    let (fast, time) = within(Duration::from_secs(10), start.elapsed());
    outcome(worst <= 1e-6 && fast, format!("{instances} instances, max abs error {worst:.2e} (tol 1e-6), {time}"))
}

fn small_layouts(arch: Architecture) -> Option<BandLayout> {
    match arch {
        Architecture::FullBand => None,
        Architecture::OverlappedSubband => Some(uniform_layout(3, 10, 1).unwrap()),
        Architecture::FullPlusNonoverlap => Some(uniform_layout(3, 10, 0).unwrap()),
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let input = InputDims { time: 12, feature: 10 };
    let mut parts = Vec::new();
    let mut worst = 0.0f64;
    for (i, arch) in Architecture::ALL.into_iter().enumerate() {
        let spec = build_model_for(input, arch, 2, 0.5, small_layouts(arch), ConcatVariant::default()).unwrap();
        let g = spec.graph();
        let mut rng = Rng::new(40 + i as u64);
        let params = Params::<f64>::init_with(g, 0.05, &mut rng).unwrap();
        let x = Tensor::<f64>::truncated_normal((1, 12, 10, 1), 1.0, &mut rng).unwrap();
        let masks = g.forward(&params, &x, Mode::Train(&mut rng)).unwrap().masks().to_vec();
        let report = gradient_check(g, &params, &x, &[3], 1e-5, Some(&masks)).unwrap();
        worst = worst.max(report.max_rel_error);
        parts.push(format!("{arch} {:.1e} ({} params)", report.max_rel_error, report.checked));
    }
    let (fast, time) = within(Duration::from_secs(60), start.elapsed());
    outcome(worst <= 1e-5 && fast, format!("{}; tol 1e-5, {time}", parts.join(", ")))
}

fn criterion_3() -> Outcome {
    let mut fails = Vec::new();
    for k in PAPER_KS {
        let full = ModelSpec::paper(Architecture::FullBand, k).unwrap();
        if full.dense_input_len() != 49 * 20 * k {
            fails.push(format!("full dense K={k}: {}", full.dense_input_len()));
        }
        let sub = ModelSpec::paper(Architecture::OverlappedSubband, k).unwrap();
        let cat = sub.layer_shape("concat").unwrap();
        if (cat.t, cat.f, cat.c) != (49, 8, 3 * k) {
            fails.push(format!("conv2 input K={k}: {cat:?}"));
        }
        if sub.dense_input_len() != 49 * 8 * k {
            fails.push(format!("overlapped dense K={k}: {}", sub.dense_input_len()));
        }
    }
    let full = ModelSpec::paper(Architecture::FullBand, 8).unwrap();
    let sub = ModelSpec::paper(Architecture::OverlappedSubband, 8).unwrap();
    let rf_full = receptive_field(&full, "pool1").unwrap();
    let rf_sub = receptive_field(&sub, "concat").unwrap();
    if (rf_full.time, rf_full.feature) != (21, 9) {
        fails.push(format!("full RF {}x{}", rf_full.time, rf_full.feature));
    }
    if (rf_sub.time, rf_sub.feature) != (21, 27) {
        fails.push(format!("sub-band RF {}x{}", rf_sub.time, rf_sub.feature));
    }
    let detail = format!(
        "dense 49*20*K and 49*8*K, conv2 input (49,8,3K) for K in 8..64; RF {}x{} -> {}x{}",
        rf_full.time, rf_full.feature, rf_sub.time, rf_sub.feature
    );
    outcome(fails.is_empty(), if fails.is_empty() { detail } else { fails.join("; ") })
}

fn pairs(l: &BandLayout) -> Vec<(usize, usize)> {
    l.bands().iter().map(|b| (b.lo, b.hi)).collect()
}

fn criterion_4() -> Outcome {
    let expected: [(usize, Vec<(usize, usize)>); 3] = [
        (2, vec![(0, 26), (14, 40)]),
        (3, vec![(0, 16), (12, 28), (24, 40)]),
        (4, vec![(0, 14), (8, 22), (16, 30), (26, 40)]),
    ];
    let mut ok = true;
    for (b, want) in &expected {
        let l = paper_layout(*b).unwrap();
        ok &= &pairs(&l) == want;
        ok &= l.coverage().iter().all(|&c| c >= 1);
        ok &= l.bands().windows(2).all(|w| w[0].lo < w[1].lo && w[0].hi < w[1].hi);
    }
    ok &= pairs(&uniform_layout(2, 40, 12).unwrap()) == expected[0].1;
    ok &= pairs(&uniform_layout(3, 40, 4).unwrap()) == expected[1].1;
    outcome(ok, "paper_layout(2|3|4) verbatim, covering and ordered; uniform (width 26, overlap 12) and (16, 4) match B=2, B=3")
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut not_cheaper = Vec::new();
    let mut ratio_ok = true;
    let mut dense_flops_exact = true;
    let mut dense_mult_exact = true;
    for k in PAPER_KS {
        let full = count_flops(&ModelSpec::paper(Architecture::FullBand, k).unwrap());
        let sub = count_flops(&ModelSpec::paper(Architecture::OverlappedSubband, k).unwrap());
        if sub.totals.flops >= full.totals.flops {
            not_cheaper.push(format!("K={k}: {} >= {}", sub.totals.flops, full.totals.flops));
        }
        let (fd, sd) = (full.layer("dense").unwrap(), sub.layer("dense").unwrap());
        dense_flops_exact &= 20 * sd.flops == 8 * fd.flops;
        dense_mult_exact &= 20 * sd.multiplications == 8 * fd.multiplications;
    }
    let mut worst_ratio: (f64, f64) = (1.0, 0.0);
    for arch in Architecture::ALL {
        for k in PAPER_KS {
            let variants: &[ConcatVariant] = if arch == Architecture::OverlappedSubband {
                &ConcatVariant::ALL
            } else {
                &[ConcatVariant::ConcatCConv1]
            };
            let bands: &[usize] = match arch {
                Architecture::FullBand => &[0],
                Architecture::OverlappedSubband => &[2, 3, 4],
                Architecture::FullPlusNonoverlap => &[3],
            };
            for &v in variants {
                for &b in bands {
                    let layout = match arch {
                        Architecture::FullBand => None,
                        Architecture::OverlappedSubband => Some(paper_layout(b).unwrap()),
                        Architecture::FullPlusNonoverlap => Some(uniform_layout(b, 40, 0).unwrap()),
                    };
                    let spec = build_model_for(InputDims::PAPER, arch, k, 0.5, layout, v).unwrap();
                    let t = count_flops(&spec).totals;
                    let r = t.multiplications as f64 / t.flops as f64;
                    worst_ratio = (worst_ratio.0.min(r), worst_ratio.1.max(r));
                    ratio_ok &= r > 0.4 && r < 0.6;
                }
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(1), start.elapsed());
    let first = if not_cheaper.is_empty() {
        "overlapped < full at every K".to_owned()
    } else {
        format!("overlapped NOT cheaper at {} of 8 K ({})", not_cheaper.len(), not_cheaper[0])
    };
    let detail = format!(
        "{first}; mult/flops in [{:.4}, {:.4}]; dense flops ratio 8/20 exact: {dense_flops_exact}; dense mult ratio 8/20 exact: {dense_mult_exact}; {time}",
        worst_ratio.0, worst_ratio.1
    );
    outcome(not_cheaper.is_empty() && ratio_ok && dense_flops_exact && fast, detail)
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn criterion_6() -> Outcome {
    let mut rng = Rng::new(6);
    let mut shapes_ok = true;
    let mut identical = true;
    for len in [16_000usize, 8_000, 20_000, 0] {
        let clip = AudioClip::from_samples((0..len).map(|_| (rng.uniform() - 0.5) as f32).collect());
        let a = mfcc(&clip);
        let b = mfcc(&clip);
        shapes_ok &= a.shape().dims() == [1, 98, 40, 1];
        identical &= a.tensor().data().iter().zip(b.tensor().data()).all(|(x, y)| x.to_bits() == y.to_bits());
    }
    let clip = load_wav(&fixture("golden_clip.wav")).unwrap();
    let ours = Mfcc::default().compute_f64(clip.samples()).unwrap();
    let golden: Vec<Vec<f64>> = std::fs::read_to_string(fixture("golden_mfcc.txt"))
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect())
        .collect();
    let mut worst = 0.0f64;
    let dims_match = ours.len() == golden.len() && ours.iter().zip(&golden).all(|(a, b)| a.len() == b.len());
    for (a, b) in ours.iter().zip(&golden) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(
        shapes_ok && identical && dims_match && worst <= 1e-6,
        format!("shape (1,98,40,1), bit-identical reruns; golden max abs diff {worst:.2e} (tol 1e-6)"),
    )
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let corpus = Corpus::synthetic(50, 0).unwrap();
    let cfg = TrainingConfig::desk();
    let mut parts = Vec::new();
    let mut ok = cfg.total_steps() <= 2_500;
    let sub = ModelSpec::paper(Architecture::OverlappedSubband, 8).unwrap();
    let out = train(&sub, &corpus, &cfg).unwrap();
    let again = train(&sub, &corpus, &TrainingConfig { ..cfg.clone() }).unwrap();
    let deterministic = out.params == again.params && out.log == again.log;
    let tr = evaluate_split(&sub, &out.params, &corpus, Split::Train, &cfg).unwrap();
    let held = evaluate_split(&sub, &out.params, &corpus, Split::Test, &cfg).unwrap();
    ok &= tr >= 0.95 && held >= 0.90 && deterministic;
    parts.push(format!("overlapped train {tr:.3} test {held:.3} (det {deterministic})"));
    let full = ModelSpec::paper(Architecture::FullBand, 8).unwrap();
    let out = train(&full, &corpus, &cfg).unwrap();
    let tr = evaluate_split(&full, &out.params, &corpus, Split::Train, &cfg).unwrap();
    ok &= tr >= 0.90;
    parts.push(format!("full band train {tr:.3}"));
    // The determinism rerun is excluded from the budget.
    let elapsed = start.elapsed().saturating_sub(Duration::from_secs_f64(again.seconds));
    let (fast, time) = within(Duration::from_secs(600), elapsed);
    outcome(ok && fast, format!("{} steps, batch {}; {}; {time}", cfg.total_steps(), cfg.batch_size, parts.join(", ")))
}

fn criterion_8() -> Outcome {
    let s = TrialSummary::from_accuracies(vec![1.0, 2.0, 3.0, 4.0, 5.0], 0).unwrap();
    let arithmetic = s.mean == 3.0 && s.stddev == 2.5f64.sqrt();
    let corpus = Corpus::synthetic(3, 1).unwrap();
    let input = InputDims::PAPER;
    let spec = build_model_for(input, Architecture::OverlappedSubband, 2, 0.5, Some(paper_layout(3).unwrap()), ConcatVariant::default()).unwrap();
    let cfg = TrainingConfig {
        steps_phase1: 20,
        steps_phase2: 5,
        eval_interval: 0,
        ..TrainingConfig::desk()
    };
    let forced = run_trials_with_seeds(&spec, &corpus, &cfg, &[7, 7, 7]).unwrap();
    outcome(
        arithmetic && forced.stddev == 0.0 && forced.stddev_defined,
        format!("{{1..5}} -> mean {}, stddev {:.6}; forced seeds stddev {}", s.mean, s.stddev, forced.stddev),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [Criterion; 8] = [
        ("1", "conv oracle equivalence", criterion_1),
        ("2", "gradient correctness", criterion_2),
        ("3", "topology reproduction", criterion_3),
        ("4", "band layouts", criterion_4),
        ("5", "FLOPS properties", criterion_5),
        ("6", "front-end contract", criterion_6),
        ("7", "desk-scale training", criterion_7),
        ("8", "five-trial protocol", criterion_8),
    ];
    let mut failed = 0;
    for (id, name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let o = run();
        failed += usize::from(!o.pass);
        println!("criterion {id} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    if filter.is_empty() || filter.iter().any(|f| f == "9") {
        println!("criterion 9 extended Speech Commands sweep: SKIP (not run in CI; see examples/speech_commands.rs)");
    }
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
