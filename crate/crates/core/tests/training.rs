use subband_cnn::data::{Corpus, SamplingConfig, Split};
use subband_cnn::nn::{Mode, Params};
use subband_cnn::subband::{Architecture, ModelSpec};
use subband_cnn::tensor::{Rng, Tensor};
use subband_cnn::train::{evaluate, load_checkpoint_into, save_checkpoint, sgd_step, train, TrainingConfig};

fn tiny_config(steps: usize) -> TrainingConfig {
    TrainingConfig {
        steps_phase1: steps,
        steps_phase2: 0,
        eval_interval: steps,
        ..TrainingConfig::desk()
    }
}

#[test]
fn small_sgd_step_lowers_the_loss() {
    let mut rng = Rng::new(100);
    for trial in 0..20 {
        let arch = Architecture::ALL[trial % 3];
        let k = 1 + rng.below(4);
        let spec = ModelSpec::paper(arch, k).unwrap();
        let g = spec.graph();
        let mut params = Params::init(g, &mut rng).unwrap();
        let x = Tensor::<f32>::truncated_normal((3, 98, 40, 1), 1.0, &mut rng).unwrap();
        let labels: Vec<usize> = (0..3).map(|_| rng.below(12)).collect();
        let before = g.loss_and_grads(&params, &x, &labels, Mode::Eval).unwrap();
        sgd_step(&mut params, &before.grads, 1e-4).unwrap();
        let after = g.loss_and_grads(&params, &x, &labels, Mode::Eval).unwrap();
        assert!(before.loss >= 0.0 && after.loss >= 0.0);
        assert!(after.loss < before.loss, "trial {trial} {arch} K={k}: {} -> {}", before.loss, after.loss);
    }
}

#[test]
fn evaluation_is_repeatable_and_batch_invariant() {
    let corpus = Corpus::synthetic(4, 2).unwrap();
    let spec = ModelSpec::paper(Architecture::OverlappedSubband, 2).unwrap();
    let params = Params::init(spec.graph(), &mut Rng::new(3)).unwrap();
    let set = corpus.eval_set(Split::Dev, &SamplingConfig::default(), 0).unwrap();
    let a = evaluate(spec.graph(), &params, &set, 100).unwrap();
    let b = evaluate(spec.graph(), &params, &set, 100).unwrap();
    let c = evaluate(spec.graph(), &params, &set, 1).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn zero_parameters_predict_class_zero() {
    let corpus = Corpus::synthetic(4, 2).unwrap();
    let set = corpus.eval_set(Split::Test, &SamplingConfig::default(), 0).unwrap();
    let share = set.labels.iter().filter(|&&l| l == 0).count() as f64 / set.len() as f64;
    for arch in Architecture::ALL {
        let spec = ModelSpec::paper(arch, 2).unwrap();
        let params = Params::zeros(spec.graph()).unwrap();
        assert_eq!(evaluate(spec.graph(), &params, &set, 16).unwrap(), share, "{arch}");
    }
}

#[test]
fn trained_checkpoint_round_trips() {
    let corpus = Corpus::synthetic(4, 1).unwrap();
    let spec = ModelSpec::paper(Architecture::FullBand, 2).unwrap();
    let out = train(&spec, &corpus, &tiny_config(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.sbck");
    save_checkpoint(&out.params, &spec, &path).unwrap();
    let loaded = load_checkpoint_into(&path, &spec).unwrap();
    assert_eq!(loaded, out.params);
    let set = corpus.eval_set(Split::Dev, &SamplingConfig::default(), 0).unwrap();
    assert_eq!(
        evaluate(spec.graph(), &loaded, &set, 8).unwrap(),
        evaluate(spec.graph(), &out.params, &set, 8).unwrap()
    );
    let other = ModelSpec::paper(Architecture::FullBand, 3).unwrap();
    assert!(load_checkpoint_into(&path, &other).is_err());
}

#[test]
fn same_seed_same_run() {
    let corpus = Corpus::synthetic(4, 1).unwrap();
    let spec = ModelSpec::paper(Architecture::OverlappedSubband, 2).unwrap();
    let a = train(&spec, &corpus, &tiny_config(4)).unwrap();
    let b = train(&spec, &corpus, &tiny_config(4)).unwrap();
    assert_eq!(a.params, b.params);
    let c = train(&spec, &corpus, &TrainingConfig { seed: 1, ..tiny_config(4) }).unwrap();
    assert_ne!(a.params, c.params);
}
