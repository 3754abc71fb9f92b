//! Decodes noiseless heatmaps with a flip-test merge and groups the peaks
//! into persons by tag.

use swahr::codec::encode_gaussian;
use swahr::decode::{decode, flip_merge, mirror_and_swap, DecodeParams};
use swahr::fit::oracle_tags;
use swahr::synth::{generate_scene_with_scales, COCO_FLIP_PAIRS};

fn main() -> swahr::Result<()> {
    let scene = generate_scene_with_scales(11, &[1.0, 1.3], 0.0, 64, 64)?;
    let shape = scene.shape();
    let heat = encode_gaussian(&scene.persons, 2.0, shape)?;
    let flipped = mirror_and_swap(&heat, &COCO_FLIP_PAIRS)?;
    let merged = flip_merge(&heat, &flipped, &COCO_FLIP_PAIRS)?;

    let tags = oracle_tags(&scene.persons, shape, 10.0);
    let groups = decode(
        &merged,
        Some(&tags),
        &DecodeParams {
            tag_threshold: 5.0,
            ..DecodeParams::default()
        },
    )?;
    for (i, g) in groups.iter().enumerate() {
        println!("group {i}: {} keypoints, score {:.3}", g.present(), g.group_score);
    }
    for (p, person) in scene.persons.iter().enumerate() {
        let nose = &person.keypoints[0];
        println!("person {p} nose at ({:.2}, {:.2})", nose.x, nose.y);
    }
    for g in &groups {
        if let Some(d) = g.keypoints[0] {
            println!("decoded nose at ({:.2}, {:.2})", d.x, d.y);
        }
    }
    Ok(())
}
