use subband_cnn::nn::{gradient_check, GraphBuilder, Mode, Params};
use subband_cnn::subband::{build_model_for, uniform_layout, Architecture, ConcatVariant, InputDims};
use subband_cnn::tensor::{Axis, Rng, Tensor};

const TOL: f64 = 1e-5;

fn check(graph: &subband_cnn::nn::Graph, input: (usize, usize, usize, usize), seed: u64, dropout: bool) -> f64 {
    let mut rng = Rng::new(seed);
    let params = Params::<f64>::init_with(graph, 0.1, &mut rng).unwrap();
    let x = Tensor::<f64>::truncated_normal(input, 1.0, &mut rng).unwrap();
    let labels: Vec<usize> = (0..input.0).map(|i| (i * 5 + 1) % graph.num_classes()).collect();
    let masks = dropout.then(|| graph.forward(&params, &x, Mode::Train(&mut rng)).unwrap().masks().to_vec());
    gradient_check(graph, &params, &x, &labels, 1e-5, masks.as_deref()).unwrap().max_rel_error
}

#[test]
fn every_concat_variant_and_layout() {
    let input = InputDims { time: 10, feature: 12 };
    for bands in [2, 3, 4] {
        for overlap in [0, 2] {
            let layout = uniform_layout(bands, 12, overlap).unwrap();
            let equal = layout.bands().iter().all(|b| b.width() == layout.bands()[0].width());
            for variant in ConcatVariant::ALL {
                let built =
                    build_model_for(input, Architecture::OverlappedSubband, 2, 0.5, Some(layout.clone()), variant);
                if variant == ConcatVariant::ConcatCConv1 && !equal {
                    assert!(built.is_err(), "unequal bands must not stack along channels");
                    continue;
                }
                let spec = built.unwrap();
                let err = check(spec.graph(), (2, 10, 12, 1), bands as u64 * 10 + overlap as u64, true);
                assert!(err <= TOL, "{bands} bands overlap {overlap} {variant}: {err:e}");
            }
        }
    }
}

#[test]
fn full_plus_nonoverlap_with_dropout() {
    let input = InputDims { time: 10, feature: 12 };
    let spec = build_model_for(
        input,
        Architecture::FullPlusNonoverlap,
        2,
        0.5,
        Some(uniform_layout(3, 12, 0).unwrap()),
        ConcatVariant::default(),
    )
    .unwrap();
    let err = check(spec.graph(), (2, 10, 12, 1), 77, true);
    assert!(err <= TOL, "{err:e}");
}

#[test]
fn strided_conv_and_uneven_pool() {
    let mut b = GraphBuilder::new();
    let x = b.input(9, 7, 2).unwrap();
    let c = b.conv("conv", x, (3, 2), (2, 1), 3).unwrap();
    let r = b.relu("relu", c).unwrap();
    let p = b.maxpool("pool", r, (3, 2), (2, 2)).unwrap();
    let out = b.dense("dense", &[p], 4).unwrap();
    let g = b.finish(out).unwrap();
    let err = check(&g, (3, 9, 7, 2), 3, false);
    assert!(err <= TOL, "{err:e}");
}

#[test]
fn feature_concat_and_multi_input_dense() {
    let mut b = GraphBuilder::new();
    let x = b.input(6, 8, 1).unwrap();
    let lo = b.slice_feature("lo", x, 0, 5).unwrap();
    let hi = b.slice_feature("hi", x, 3, 8).unwrap();
    let a = b.conv("a", lo, (3, 3), (1, 1), 2).unwrap();
    let c = b.conv("c", hi, (2, 2), (1, 1), 2).unwrap();
    let cat = b.concat("cat", &[a, c], Axis::Feature).unwrap();
    let d = b.dropout("drop", cat, 0.3).unwrap();
    let out = b.dense("dense", &[d, lo], 5).unwrap();
    let g = b.finish(out).unwrap();
    let err = check(&g, (2, 6, 8, 1), 9, true);
    assert!(err <= TOL, "{err:e}");
}

#[test]
fn shared_input_fan_out_accumulates() {
    let mut b = GraphBuilder::new();
    let x = b.input(5, 5, 1).unwrap();
    let c = b.conv("c", x, (2, 2), (1, 1), 2).unwrap();
    let r1 = b.relu("r1", c).unwrap();
    let r2 = b.relu("r2", c).unwrap();
    let cat = b.concat("cat", &[r1, r2, c], Axis::Channel).unwrap();
    let out = b.dense("dense", &[cat], 3).unwrap();
    let g = b.finish(out).unwrap();
    let err = check(&g, (2, 5, 5, 1), 21, false);
    assert!(err <= TOL, "{err:e}");
}
