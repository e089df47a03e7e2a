//! Finite-difference check of backprop for each architecture on small inputs.
//!
//! cargo run --release --example gradient_check -- [K]

use subband_cnn::nn::{gradient_check, Mode, Params};
use subband_cnn::subband::{build_model_for, uniform_layout, Architecture, ConcatVariant, InputDims};
use subband_cnn::tensor::{Rng, Tensor};

fn main() -> subband_cnn::Result<()> {
    let k: usize = std::env::args().nth(1).map_or(2, |s| s.parse().expect("K"));
    let input = InputDims { time: 12, feature: 10 };
    let mut runs = vec![(Architecture::FullBand, None, ConcatVariant::default())];
    for v in ConcatVariant::ALL {
        runs.push((Architecture::OverlappedSubband, Some(uniform_layout(3, 10, 1)?), v));
    }
    runs.push((Architecture::FullPlusNonoverlap, Some(uniform_layout(3, 10, 0)?), ConcatVariant::default()));

    for (i, (arch, layout, variant)) in runs.into_iter().enumerate() {
        let spec = build_model_for(input, arch, k, 0.5, layout, variant)?;
        let g = spec.graph();
        let mut rng = Rng::new(i as u64);
        let params = Params::<f64>::init_with(g, 0.1, &mut rng)?;
        let x = Tensor::<f64>::truncated_normal((2, 12, 10, 1), 1.0, &mut rng)?;
        let masks = g.forward(&params, &x, Mode::Train(&mut rng))?.masks().to_vec();
        let r = gradient_check(g, &params, &x, &[1, 7], 1e-5, Some(&masks))?;
        println!(
            "{:<20} {:<15} {:>5} params  max rel err {:.2e}  ({} steps refined near kinks)",
            arch.as_str(),
            variant.as_str(),
            r.checked,
            r.max_rel_error,
            r.refined
        );
    }
    Ok(())
}
