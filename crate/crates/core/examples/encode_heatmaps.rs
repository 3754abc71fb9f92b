//! Encodes a synthetic scene into base and bbox-scaled heatmaps and writes a
//! PGM preview of each to the system temp directory.

use swahr::codec::{encode_gaussian, sahr_exact, shr_scale_field};
use swahr::io::save_pgm;
use swahr::synth::{generate_scene, SceneParams};

fn main() -> swahr::Result<()> {
    let scene = generate_scene(7, &SceneParams::default())?;
    let shape = scene.shape();
    let base = encode_gaussian(&scene.persons, 2.0, shape)?;
    let scale = shr_scale_field(&scene.persons, shape, 2.0, 256.0)?;
    let shr = sahr_exact(&base, &scale)?;

    let mask = swahr::codec::support_mask(&base);
    println!(
        "{} persons, {} channels of {}x{}",
        scene.persons.len(),
        shape.channels,
        shape.height,
        shape.width
    );
    println!("support covers {} of {} cells", mask.count(), base.len());
    println!("base mass {:.2}, shr mass {:.2}", base.sum(), shr.sum());

    let dir = std::env::temp_dir();
    save_pgm(&base.channel_mean(), dir.join("base.pgm"))?;
    save_pgm(&shr.channel_mean(), dir.join("shr.pgm"))?;
    println!("previews in {}", dir.display());
    Ok(())
}
