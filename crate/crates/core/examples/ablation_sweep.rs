//! Sweeps the regularizer weight over a few scenes and prints the CSV.

use swahr::fit::{ablation_sweep, write_sweep_csv, FitConfig, FitVariant, SweepParam};
use swahr::synth::generate_scene_with_scales;

fn main() -> swahr::Result<()> {
    let scenes = (0..2)
        .map(|s| generate_scene_with_scales(s, &[1.0, 2.0], 0.05, 64, 64))
        .collect::<swahr::Result<Vec<_>>>()?;
    let template = FitConfig {
        variant: FitVariant::Sahr,
        steps: 500,
        label_samples: 4,
        ..FitConfig::default()
    };
    let values: Vec<String> = ["0.1", "1", "inf"].iter().map(|v| v.to_string()).collect();
    let rows = ablation_sweep(&scenes, &template, SweepParam::Lambda, &values)?;
    write_sweep_csv(&rows, std::io::stdout())
}
