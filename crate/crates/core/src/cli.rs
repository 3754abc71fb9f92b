//! Command-line front end.
//!
//! Every subcommand accepts `--config FILE`, a flat `key=value` file (one
//! pair per line, `#` comments). Keys are the subcommand's long flag names;
//! flags given on the command line take precedence.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::annotations::AnnotationFile;
use crate::codec::{encode_gaussian, rasterize_scale_field, sahr_exact, shr_scale_field, PersonInstance, DEFAULT_W_BASE};
use crate::decode::{aggregate_heatmaps, decode, flip_merge, resize_bilinear, DecodeParams, PoseRecord};
use crate::error::{Error, Result};
use crate::eval::{average_precision, format_table, OksParams};
use crate::fit::{ablation_sweep, fit_direct, write_sweep_csv, FitConfig, FitVariant, SweepParam};
use crate::grid::{AlphaField, HeatmapStack, Shape};
use crate::io::{read_tensor, save_pgm, save_tensor};
use crate::loss::{evaluate, LossConfig, LossVariant, DEFAULT_GAMMA, DEFAULT_LAMBDA};
use crate::synth::{augment, generate_scene, generate_scene_with_scales, AugmentParams, SceneParams, SyntheticScene, COCO_FLIP_PAIRS};

#[derive(Parser, Debug)]
#[command(name = "swahr", version, about = "Scale- and weight-adaptive heatmap regression toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Encode annotations into an HMAP heatmap dump.
    Encode(EncodeArgs),
    /// Evaluate a loss on HMAP dumps and print the report as JSON.
    Loss(LossArgs),
    /// Fit free parameters to a synthetic scene.
    TrainToy(TrainArgs),
    /// Run a hyper-parameter sweep and emit CSV.
    Sweep(SweepArgs),
    /// Decode heatmaps (and tags) into poses JSON.
    Decode(DecodeArgs),
    /// Evaluate poses against annotations (JSON on stdout, table on stderr).
    Eval(EvalArgs),
    /// Generate a synthetic scene as an annotation file.
    Scene(SceneArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EncodeVariant {
    Base,
    Shr,
    SahrFixed,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long, default_value_t = 2.0)]
    pub sigma0: f64,
    /// Stack shape as KxHxW.
    #[arg(long)]
    pub size: String,
    #[arg(long, value_enum, default_value_t = EncodeVariant::Base)]
    pub variant: EncodeVariant,
    /// Uniform scale factor for `sahr-fixed`.
    #[arg(long)]
    pub scale: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_W_BASE)]
    pub w_base: f64,
    /// Only encode annotations of this image.
    #[arg(long)]
    pub image_id: Option<u64>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct LossArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long)]
    pub alpha: Option<PathBuf>,
    #[arg(long, default_value = "base", value_parser = parse_loss_variant)]
    pub variant: LossVariant,
    /// Regularizer weight; `inf` freezes alpha at 0.
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[arg(long, default_value = "sahr", value_parser = parse_fit_variant)]
    pub variant: FitVariant,
    #[arg(long, default_value_t = crate::fit::DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long, default_value_t = crate::fit::DEFAULT_LEARNING_RATE)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = crate::fit::DEFAULT_SIGMA0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    pub gamma: f64,
    #[arg(long, default_value_t = crate::fit::DEFAULT_LABEL_SAMPLES)]
    pub label_samples: usize,
    #[arg(long, default_value_t = DEFAULT_W_BASE)]
    pub w_base: f64,
}

impl FitArgs {
    fn fit_config(&self) -> FitConfig {
        FitConfig {
            variant: self.variant,
            sigma0: self.sigma0,
            lambda: self.lambda,
            gamma: self.gamma,
            learning_rate: self.lr,
            steps: self.steps,
            seed: self.seed,
            label_samples: self.label_samples,
            w_base: self.w_base,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scene exported by `swahr scene`.
    #[arg(long, conflicts_with = "gen")]
    pub scene: Option<PathBuf>,
    /// Generator spec, e.g. `n=2,scales=1:2,jitter=0.05,size=64x64`.
    #[arg(long)]
    pub gen: Option<String>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// lambda, gamma or variant.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values, e.g. `0.1,0.5,1.0,inf`.
    #[arg(long)]
    pub values: String,
    /// Number of scenes; scene i uses seed + i.
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long, default_value = "n=2,scales=1:2,jitter=0.05")]
    pub gen: String,
    #[command(flatten)]
    pub fit: FitArgs,
    /// CSV destination; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub tags: Option<PathBuf>,
    /// Extra dumps (any resolution) averaged with `--pred`.
    #[arg(long, value_delimiter = ',')]
    pub aggregate: Vec<PathBuf>,
    /// Prediction made on the mirrored input.
    #[arg(long, requires = "flip_pairs")]
    pub flipped: Option<PathBuf>,
    /// `coco` or pairs like `1:2,3:4`.
    #[arg(long, requires = "flipped")]
    pub flip_pairs: Option<String>,
    #[arg(long, default_value_t = 20)]
    pub max_peaks: usize,
    #[arg(long, default_value_t = 0.1)]
    pub score_floor: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tag_threshold: f64,
    #[arg(long, action = ArgAction::SetTrue)]
    pub no_refine: bool,
    #[arg(long, default_value_t = 0)]
    pub image_id: u64,
    /// Poses destination; stdout when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    /// File of per-keypoint constants (JSON array or whitespace/comma list).
    #[arg(long, conflicts_with = "k_uniform")]
    pub k_consts: Option<PathBuf>,
    /// One constant for every keypoint, e.g. 0.1 for synthetic scenes.
    #[arg(long)]
    pub k_uniform: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SceneArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "n=2,scales=1:2,jitter=0.05")]
    pub gen: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Apply a random flip/rotation/scale/translation.
    #[arg(long, action = ArgAction::SetTrue)]
    pub augment: bool,
    #[arg(long, default_value_t = 0)]
    pub image_id: u64,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

fn parse_loss_variant(s: &str) -> std::result::Result<LossVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fit_variant(s: &str) -> std::result::Result<FitVariant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// `KxHxW`.
pub fn parse_size(spec: &str) -> Result<Shape> {
    let parts: Vec<&str> = spec.split('x').collect();
    let dims = parts
        .iter()
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>();
    match dims.as_deref() {
        Ok([k, h, w]) => Ok(Shape::new(*k, *h, *w)),
        _ => Err(Error::invalid("size", format!("expected KxHxW, got {spec:?}"))),
    }
}

/// `coco` or `a:b,c:d`.
pub fn parse_flip_pairs(spec: &str) -> Result<Vec<(usize, usize)>> {
    if spec.trim() == "coco" {
        return Ok(COCO_FLIP_PAIRS.to_vec());
    }
    spec.split(',')
        .map(|pair| {
            let bad = || Error::invalid("flip_pairs", format!("expected a:b, got {pair:?}"));
            let (a, b) = pair.split_once(':').ok_or_else(bad)?;
            Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

/// Synthetic scene generator spec: `n=2,scales=1:2,jitter=0.05,size=64x64`.
/// `scales` lists one scale per person, or a `min:max` range when its
/// length differs from `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub scales: Vec<f64>,
    pub jitter: f64,
    pub height: usize,
    pub width: usize,
}

impl GenSpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let d = SceneParams::default();
        let mut out = GenSpec {
            n: d.n_persons,
            scales: vec![d.scale_range.0, d.scale_range.1],
            jitter: d.jitter_coeff,
            height: d.height,
            width: d.width,
        };
        for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid("gen", format!("expected key=value, got {item:?}")))?;
            let num = |v: &str| -> Result<f64> { v.trim().parse().map_err(|_| Error::invalid("gen", format!("{k}: {v:?} is not a number"))) };
            match k.trim() {
                "n" => out.n = num(v)? as usize,
                "scales" => out.scales = v.split(':').map(num).collect::<Result<_>>()?,
                "jitter" => out.jitter = num(v)?,
                "size" => {
                    let (h, w) = v
                        .split_once('x')
                        .ok_or_else(|| Error::invalid("gen", format!("size: expected HxW, got {v:?}")))?;
                    out.height = num(h)? as usize;
                    out.width = num(w)? as usize;
                }
                other => {
                    return Err(Error::invalid(
                        "gen",
                        format!("unknown key {other:?}; valid keys: n, scales, jitter, size"),
                    ))
                }
            }
        }
        Ok(out)
    }

    pub fn generate(&self, seed: u64) -> Result<SyntheticScene> {
        match self.scales.as_slice() {
            s if s.len() == self.n => generate_scene_with_scales(seed, s, self.jitter, self.height, self.width),
            [lo, hi] => generate_scene(
                seed,
                &SceneParams {
                    n_persons: self.n,
                    scale_range: (*lo, *hi),
                    jitter_coeff: self.jitter,
                    height: self.height,
                    width: self.width,
                },
            ),
            [s] => generate_scene_with_scales(seed, &vec![*s; self.n], self.jitter, self.height, self.width),
            _ => Err(Error::invalid("gen", format!("{} scales for {} persons", self.scales.len(), self.n))),
        }
    }
}

fn build_command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

/// Inlines `--config FILE` as flags placed before the user's own flags.
pub fn expand_config(args: &[String]) -> Result<Vec<String>> {
    let Some(sub) = args.get(1).filter(|s| !s.starts_with('-')) else {
        return Ok(args.to_vec());
    };
    let mut rest = Vec::new();
    let mut config = None;
    let mut it = args[2..].iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(it.next().ok_or_else(|| Error::Config("--config needs a file".into()))?.clone());
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a.clone());
        }
    }
    let Some(path) = config else {
        return Ok(args.to_vec());
    };
    let cmd = build_command();
    let Some(sub_cmd) = cmd.find_subcommand(sub) else {
        return Ok(args.to_vec());
    };
    let valid: Vec<&clap::Arg> = sub_cmd
        .get_arguments()
        .filter(|a| !matches!(a.get_long(), None | Some("config") | Some("help")))
        .collect();
    let text = fs::read_to_string(&path).map_err(|e| Error::Config(format!("{path}: {e}")))?;
    let mut injected = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{path}:{}: expected key=value", lineno + 1)))?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        let arg = valid.iter().find(|a| a.get_long() == Some(key.as_str())).ok_or_else(|| {
            let names: Vec<&str> = valid.iter().filter_map(|a| a.get_long()).collect();
            Error::Config(format!("unknown key {key:?} for {sub}; valid keys: {}", names.join(", ")))
        })?;
        if arg.get_action().takes_values() {
            injected.push(format!("--{key}"));
            injected.push(value.to_string());
        } else {
            match value {
                "true" | "1" | "yes" => injected.push(format!("--{key}")),
                "false" | "0" | "no" => {}
                _ => return Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
            }
        }
    }
    let mut out = vec![args[0].clone(), sub.clone()];
    out.extend(injected);
    out.extend(rest);
    Ok(out)
}

/// Parses `args` (including the program name) and runs the command.
/// Machine-readable output goes to `out`, diagnostics to stderr.
pub fn run(args: &[String], out: &mut dyn Write) -> Result<()> {
    let args = expand_config(args)?;
    let matches = match build_command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            write!(out, "{}", e.render())?;
            return Ok(());
        }
        Err(e) => return Err(Error::Config(e.render().to_string().trim_end().to_string())),
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| Error::Config(e.to_string()))?;
    match cli.command {
        Command::Encode(a) => cmd_encode(&a),
        Command::Loss(a) => cmd_loss(&a, out),
        Command::TrainToy(a) => cmd_train_toy(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Decode(a) => cmd_decode(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Scene(a) => cmd_scene(&a, out),
    }
}

fn with_context<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{}: {io}", path.display()))),
        other => other,
    })
}

fn load(path: &Path) -> Result<HeatmapStack> {
    with_context(path, read_tensor(path))
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let file = with_context(&a.annotations, AnnotationFile::read(&a.annotations))?;
    let persons: Vec<PersonInstance> = match a.image_id {
        Some(id) => file.persons_by_image()?.remove(&id).unwrap_or_default(),
        None => file.persons()?,
    };
    let shape = parse_size(&a.size)?;
    let base = encode_gaussian(&persons, a.sigma0, shape)?;
    let stack = match a.variant {
        EncodeVariant::Base => base,
        EncodeVariant::Shr => sahr_exact(&base, &shr_scale_field(&persons, shape, a.sigma0, a.w_base)?)?,
        EncodeVariant::SahrFixed => {
            let s = a
                .scale
                .ok_or_else(|| Error::invalid("scale", "--scale is required with --variant sahr-fixed"))?;
            sahr_exact(&base, &rasterize_scale_field(&persons, &vec![s; persons.len()], shape, a.sigma0)?)?
        }
    };
    save_tensor(&stack, &a.output)?;
    eprintln!("wrote {} ({shape}, {} persons)", a.output.display(), persons.len());
    Ok(())
}

fn cmd_loss(a: &LossArgs, out: &mut dyn Write) -> Result<()> {
    let pred = load(&a.pred)?;
    let base = load(&a.base)?;
    let alpha = a.alpha.as_deref().map(load).transpose()?.map(AlphaField::new).transpose()?;
    let cfg = LossConfig::new(a.variant).with_lambda(a.lambda).with_gamma(a.gamma);
    let report = evaluate(&cfg, &pred, &base, alpha.as_ref())?;
    write_json(out, &report)
}

fn scene_from(scene: &Option<PathBuf>, gen: &Option<String>, seed: u64) -> Result<SyntheticScene> {
    match (scene, gen) {
        (Some(path), _) => SyntheticScene::from_annotation_file(&with_context(path, AnnotationFile::read(path))?),
        (None, Some(spec)) => GenSpec::parse(spec)?.generate(seed),
        (None, None) => Err(Error::invalid("scene", "one of --scene or --gen is required")),
    }
}

fn cmd_train_toy(a: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let scene = scene_from(&a.scene, &a.gen, a.fit.seed)?;
    let cfg = a.fit.fit_config();
    let fit = fit_direct(&scene, &cfg)?;
    fs::create_dir_all(&a.output)?;

    let mut curve = csv::Writer::from_path(a.output.join("loss_curve.csv"))?;
    curve.write_record(["step", "regression", "regularizer", "total"])?;
    for (step, r) in fit.loss_curve.iter().enumerate() {
        curve.write_record([step.to_string(), r.regression.to_string(), r.regularizer.to_string(), r.total.to_string()])?;
    }
    curve.flush()?;
    save_tensor(&fit.final_pred, a.output.join("final_pred.hmap"))?;
    save_tensor(fit.final_scale.as_stack(), a.output.join("final_scale.hmap"))?;
    save_pgm(
        &fit.final_scale.as_stack().map(|s| 1.0 / s).channel_mean(),
        a.output.join("inv_scale.pgm"),
    )?;

    let persons: Vec<_> = fit
        .per_person_mean_scale
        .iter()
        .map(|&(p, s)| json!({"id": p, "person_scale": scene.scales[p], "mean_s": s}))
        .collect();
    let summary = json!({
        "variant": cfg.variant,
        "steps": cfg.steps,
        "seed": cfg.seed,
        "persons": persons,
        "mean_localization_error": fit.mean_localization_error(),
        "final_loss": fit.final_loss(),
        "final_learning_rate": fit.final_learning_rate,
    });
    fs::write(a.output.join("scales.json"), serde_json::to_string_pretty(&summary)?)?;
    eprintln!(
        "wrote loss_curve.csv, final_pred.hmap, final_scale.hmap, inv_scale.pgm, scales.json to {}",
        a.output.display()
    );
    write_json(out, &summary)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<()> {
    let param: SweepParam = a.param.parse()?;
    let values: Vec<String> = a.values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if a.scenes == 0 {
        return Err(Error::invalid("scenes", "must be >= 1"));
    }
    let spec = GenSpec::parse(&a.gen)?;
    let scenes = (0..a.scenes as u64).map(|i| spec.generate(a.fit.seed + i)).collect::<Result<Vec<_>>>()?;
    let rows = ablation_sweep(&scenes, &a.fit.fit_config(), param, &values)?;
    match &a.output {
        Some(path) => {
            write_sweep_csv(&rows, fs::File::create(path)?)?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
            Ok(())
        }
        None => write_sweep_csv(&rows, out),
    }
}

fn cmd_decode(a: &DecodeArgs, out: &mut dyn Write) -> Result<()> {
    let mut pred = load(&a.pred)?;
    let (h, w) = (pred.shape().height, pred.shape().width);
    if !a.aggregate.is_empty() {
        let mut stacks = vec![pred];
        for p in &a.aggregate {
            stacks.push(load(p)?);
        }
        pred = aggregate_heatmaps(&stacks, h, w)?;
    }
    if let (Some(path), Some(spec)) = (&a.flipped, &a.flip_pairs) {
        let flipped = resize_bilinear(&load(path)?, h, w);
        pred = flip_merge(&pred, &flipped, &parse_flip_pairs(spec)?)?;
    }
    let tags = a.tags.as_deref().map(load).transpose()?;
    let params = DecodeParams {
        max_per_channel: a.max_peaks,
        score_floor: a.score_floor,
        tag_threshold: a.tag_threshold,
        refine: !a.no_refine,
    };
    let groups = decode(&pred, tags.as_ref(), &params)?;
    let records: Vec<PoseRecord> = groups.iter().map(|g| PoseRecord::from_group(g, a.image_id)).collect();
    match &a.output {
        Some(path) => {
            fs::write(path, serde_json::to_string_pretty(&records)?)?;
            eprintln!("wrote {} poses to {}", records.len(), path.display());
            Ok(())
        }
        None => write_json(out, &records),
    }
}

/// Per-keypoint constants from a JSON array or a whitespace/comma list.
pub fn parse_k_consts(text: &str) -> Result<Vec<f64>> {
    if let Ok(v) = serde_json::from_str::<Vec<f64>>(text) {
        return Ok(v);
    }
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::invalid("k_consts", format!("{s:?} is not a number"))))
        .collect()
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let records: Vec<PoseRecord> = serde_json::from_str(&with_context(&a.pred, fs::read_to_string(&a.pred).map_err(Error::from))?)?;
    let gt = with_context(&a.gt, AnnotationFile::read(&a.gt))?.persons_by_image()?;
    let channels = gt
        .values()
        .flatten()
        .map(|p| p.keypoints.len())
        .chain(records.iter().map(|r| r.keypoints.len() / 3))
        .next()
        .unwrap_or(crate::codec::COCO_KEYPOINTS);
    let params = match (&a.k_consts, a.k_uniform) {
        (Some(path), _) => OksParams::new(parse_k_consts(&with_context(path, fs::read_to_string(path).map_err(Error::from))?)?)?,
        (None, Some(k)) => OksParams::uniform(channels, k)?,
        (None, None) if channels == crate::codec::COCO_KEYPOINTS => OksParams::coco(),
        (None, None) => {
            return Err(Error::invalid(
                "k_consts",
                format!("{channels} keypoints: pass --k-consts or --k-uniform"),
            ));
        }
    };
    let ids: BTreeSet<u64> = gt.keys().copied().chain(records.iter().map(|r| r.image_id)).collect();
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for id in ids {
        preds.push(
            records
                .iter()
                .filter(|r| r.image_id == id)
                .map(PoseRecord::to_group)
                .collect::<Result<Vec<_>>>()?,
        );
        gts.push(gt.get(&id).cloned().unwrap_or_default());
    }
    let report = average_precision(&preds, &gts, &params)?;
    eprint!("{}", format_table(&report));
    write_json(out, &report)
}

fn cmd_scene(a: &SceneArgs, out: &mut dyn Write) -> Result<()> {
    let mut scene = GenSpec::parse(&a.gen)?.generate(a.seed)?;
    if a.augment {
        scene = augment(&scene, &AugmentParams::default(), a.seed)?;
    }
    let file = scene.to_annotation_file(a.image_id);
    match &a.output {
        Some(path) => {
            file.write(path)?;
            eprintln!("wrote scene with {} persons to {}", scene.persons.len(), path.display());
            Ok(())
        }
        None => write_json(out, &file),
    }
}
