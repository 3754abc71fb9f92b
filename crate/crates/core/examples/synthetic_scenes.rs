//! Generates a scene, augments it, and round-trips it through the
//! annotation JSON format.

use swahr::annotations::AnnotationFile;
use swahr::synth::{augment, generate_scene, AugmentParams, SceneParams, SyntheticScene};

fn main() -> swahr::Result<()> {
    let scene = generate_scene(
        4,
        &SceneParams {
            n_persons: 3,
            ..SceneParams::default()
        },
    )?;
    for (p, s) in scene.scales.iter().enumerate() {
        println!("person {p}: scale {s:.3}, label jitter std {:.3} px", scene.jitter_std(p));
    }

    let moved = augment(&scene, &AugmentParams::default(), 9)?;
    let labeled: usize = moved.persons.iter().map(|p| p.labeled_count()).sum();
    println!("after augmentation {labeled} keypoints remain labeled");

    let json = scene.to_annotation_file(1).to_json()?;
    let back = SyntheticScene::from_annotation_file(&AnnotationFile::from_json(&json)?)?;
    println!("round trip preserves persons: {}", back.persons == scene.persons);
    Ok(())
}
