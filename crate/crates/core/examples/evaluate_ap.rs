//! Scores perturbed predictions against ground truth and prints the AP table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swahr::decode::{Detection, PoseGroup};
use swahr::eval::{average_precision, format_table, OksParams};
use swahr::synth::{generate_scene, SceneParams};

fn main() -> swahr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for seed in 0..20 {
        let scene = generate_scene(
            seed,
            &SceneParams {
                height: 256,
                width: 256,
                scale_range: (1.0, 4.0),
                ..SceneParams::default()
            },
        )?;
        let groups = scene
            .persons
            .iter()
            .map(|p| {
                let noise: f64 = rng.gen_range(0.0..6.0);
                let slots = p
                    .keypoints
                    .iter()
                    .enumerate()
                    .map(|(k, kp)| {
                        let (dx, dy) = (rng.gen_range(-noise..=noise), rng.gen_range(-noise..=noise));
                        Some(Detection {
                            channel: k,
                            x: kp.x + dx,
                            y: kp.y + dy,
                            score: 1.0,
                            tag: None,
                        })
                    })
                    .collect();
                let mut g = PoseGroup::from_slots(slots);
                g.group_score = 1.0 - noise / 6.0;
                g
            })
            .collect();
        preds.push(groups);
        gts.push(scene.persons);
    }
    let report = average_precision(&preds, &gts, &OksParams::coco())?;
    print!("{}", format_table(&report));
    Ok(())
}
