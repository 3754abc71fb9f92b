//! Evaluates every loss variant on one random instance and checks the
//! analytic gradient against central differences.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swahr::codec::encode_gaussian;
use swahr::gradcheck::{finite_diff_loss_grad, max_relative_error};
use swahr::grid::{AlphaField, HeatmapStack};
use swahr::loss::{evaluate, grad_loss, soft_boundary, LossConfig, LossVariant};
use swahr::synth::{generate_scene, SceneParams};

fn main() -> swahr::Result<()> {
    let scene = generate_scene(
        1,
        &SceneParams {
            height: 24,
            width: 24,
            scale_range: (0.4, 0.5),
            ..SceneParams::default()
        },
    )?;
    let shape = scene.shape();
    let base = encode_gaussian(&scene.persons, 1.5, shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pred = HeatmapStack::from_vec(shape, (0..shape.len()).map(|_| rng.gen_range(0.0..1.0)).collect())?;
    let alpha = AlphaField::new(HeatmapStack::from_vec(
        shape,
        (0..shape.len()).map(|_| rng.gen_range(-0.2..0.2)).collect(),
    )?)?;

    println!("soft boundary at gamma 0.01: {:.3e}", soft_boundary(0.01)?);
    for variant in LossVariant::ALL {
        let cfg = LossConfig::new(variant).with_gamma(0.5);
        let report = evaluate(&cfg, &pred, &base, Some(&alpha))?;
        let g = grad_loss(&cfg, &pred, &base, Some(&alpha))?;
        let n = finite_diff_loss_grad(&cfg, &pred, &base, Some(&alpha), 3e-5)?;
        let err = max_relative_error(g.d_pred.as_slice(), n.d_pred.as_slice(), 1e-7);
        println!(
            "{variant:>6}: total {:.6e}, regularizer {:.3e}, grad rel err {err:.1e}",
            report.total, report.regularizer
        );
    }
    Ok(())
}
