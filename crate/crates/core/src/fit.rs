//! Direct gradient-descent fitting of free prediction and scale parameters
//! against synthetic scenes, plus the hyper-parameter sweep built on it.
//!
//! Predictions are stored as unconstrained `u` with `P = -0.05 + 1.1
//! sigmoid(u)`. Alpha is stored directly and `s = 1 / (1 + alpha)`.
//!
//! The loss is averaged over several independent draws of the noisy labels
//! that share one prediction and one scale field. Cells outside the support
//! of every draw see identical targets and updates, so they are carried as a
//! single background representative.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode_gaussian, ln_clamped, rasterize_per_person, sahr_exact, shr_scale_field, PersonInstance, DEFAULT_W_BASE};
use crate::decode::{decode, find_peaks, refine_subpixel, DecodeParams, PoseGroup};
use crate::error::{ensure_positive, Error, Result};
use crate::eval::{average_precision, OksParams, SYNTHETIC_K};
use crate::grid::{AlphaField, HeatmapStack, ScaleField, Shape};
use crate::loss::{wahr_weight, LossConfig, LossReport, LossVariant, DEFAULT_GAMMA, DEFAULT_LAMBDA};
use crate::synth::SyntheticScene;

pub const PRED_LOW: f64 = -0.05;
pub const PRED_SPAN: f64 = 1.1;
pub const DEFAULT_SIGMA0: f64 = 2.0;
pub const DEFAULT_LEARNING_RATE: f64 = 0.5;
pub const DEFAULT_STEPS: usize = 5000;
pub const DEFAULT_LABEL_SAMPLES: usize = 8;
pub const MAX_HALVINGS: usize = 60;
/// Tag spacing between persons in oracle tag maps.
pub const ORACLE_TAG_SPACING: f64 = 10.0;

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

/// Maps an unconstrained parameter into `(-0.05, 1.05)`.
pub fn materialize(u: f64) -> f64 {
    PRED_LOW + PRED_SPAN * sigmoid(u)
}

/// Inverse of [`materialize`] on `(-0.05, 1.05)`.
pub fn parameterize(p: f64) -> Result<f64> {
    let q = (p - PRED_LOW) / PRED_SPAN;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid("prediction", format!("{p} is outside (-0.05, 1.05)")));
    }
    Ok((q / (1.0 - q)).ln())
}

fn dmaterialize(u: f64) -> f64 {
    let s = sigmoid(u);
    PRED_SPAN * s * (1.0 - s)
}

pub fn scale_from_alpha(alpha: f64) -> f64 {
    1.0 / (1.0 + alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitVariant {
    Base,
    Shr,
    Sahr,
    Wahr,
    Swahr,
}

impl FitVariant {
    pub const ALL: [FitVariant; 5] = [FitVariant::Base, FitVariant::Shr, FitVariant::Sahr, FitVariant::Wahr, FitVariant::Swahr];

    pub fn name(self) -> &'static str {
        match self {
            FitVariant::Base => "base",
            FitVariant::Shr => "shr",
            FitVariant::Sahr => "sahr",
            FitVariant::Wahr => "wahr",
            FitVariant::Swahr => "swahr",
        }
    }

    /// Loss applied to the (possibly pre-transformed) targets.
    pub fn loss_variant(self) -> LossVariant {
        match self {
            FitVariant::Base | FitVariant::Shr => LossVariant::Base,
            FitVariant::Sahr => LossVariant::Sahr,
            FitVariant::Wahr => LossVariant::Wahr,
            FitVariant::Swahr => LossVariant::Swahr,
        }
    }
}

impl fmt::Display for FitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FitVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid("variant", format!("unknown variant {s:?}; expected base, shr, sahr, wahr or swahr")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub variant: FitVariant,
    pub sigma0: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Independent noisy-label draws averaged in the loss.
    pub label_samples: usize,
    /// Base width of the bounding-box scale baseline.
    pub w_base: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            variant: FitVariant::Base,
            sigma0: DEFAULT_SIGMA0,
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
            learning_rate: DEFAULT_LEARNING_RATE,
            steps: DEFAULT_STEPS,
            seed: 0,
            label_samples: DEFAULT_LABEL_SAMPLES,
            w_base: DEFAULT_W_BASE,
        }
    }
}

impl FitConfig {
    pub fn new(variant: FitVariant) -> Self {
        FitConfig { variant, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("sigma0", self.sigma0)?;
        ensure_positive("learning_rate", self.learning_rate)?;
        ensure_positive("w_base", self.w_base)?;
        if self.steps == 0 {
            return Err(Error::invalid("steps", "must be >= 1"));
        }
        if self.label_samples == 0 {
            return Err(Error::invalid("label_samples", "must be >= 1"));
        }
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if self.variant.loss_variant().weight_adaptive() {
            ensure_positive("gamma", self.gamma)?;
        }
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig::new(self.variant.loss_variant())
            .with_lambda(self.lambda)
            .with_gamma(self.gamma)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub final_pred: HeatmapStack,
    pub final_scale: ScaleField,
    /// Loss at the initial point followed by the loss after every step.
    pub loss_curve: Vec<LossReport>,
    /// Mean `s` over each person's support, indexed by person.
    pub per_person_mean_scale: Vec<(usize, f64)>,
    /// Distance from each labeled true keypoint to the nearest decoded peak
    /// of its channel (person-major). Channels without a peak score the
    /// canvas diagonal.
    pub localization_errors: Vec<f64>,
    pub final_learning_rate: f64,
}

impl FitResult {
    pub fn mean_localization_error(&self) -> f64 {
        if self.localization_errors.is_empty() {
            return 0.0;
        }
        self.localization_errors.iter().sum::<f64>() / self.localization_errors.len() as f64
    }

    pub fn final_loss(&self) -> &LossReport {
        self.loss_curve.last().expect("curve holds the initial point")
    }
}

/// Label sets averaged by the fit: the scene's own noisy labels, then
/// `label_samples - 1` seeded redraws.
pub fn label_replicas(scene: &SyntheticScene, cfg: &FitConfig) -> Vec<Vec<PersonInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ scene.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let mut out = vec![scene.noisy_persons.clone()];
    for _ in 1..cfg.label_samples {
        out.push(scene.resample_labels(rng.gen()));
    }
    out
}

/// The per-draw targets fed to the loss: Gaussian bases, pre-transformed by
/// the bounding-box scales for the `shr` variant.
pub fn replica_targets(replicas: &[Vec<PersonInstance>], shape: Shape, cfg: &FitConfig) -> Result<Vec<HeatmapStack>> {
    replicas
        .iter()
        .map(|persons| {
            let base = encode_gaussian(persons, cfg.sigma0, shape)?;
            if cfg.variant == FitVariant::Shr {
                let scale = shr_scale_field(persons, shape, cfg.sigma0, cfg.w_base)?;
                sahr_exact(&base, &scale)
            } else {
                Ok(base)
            }
        })
        .collect()
}

struct Kernel {
    shape: Shape,
    n: f64,
    active: Vec<usize>,
    /// Per draw: base value and clamped log for each active cell, then the
    /// background representative.
    base: Vec<Vec<f64>>,
    ln_base: Vec<Vec<f64>>,
    mask_count: Vec<usize>,
    mult: Vec<f64>,
    loss: LossConfig,
    alpha_free: bool,
}

struct KernelEval {
    report: LossReport,
    g_pred: Vec<f64>,
    g_alpha: Vec<f64>,
}

impl Kernel {
    fn new(targets: &[HeatmapStack], loss: LossConfig) -> Result<Self> {
        let shape = targets[0].shape();
        let n = shape.len();
        let active: Vec<usize> = (0..n).filter(|&i| targets.iter().any(|t| t.as_slice()[i] > 0.0)).collect();
        let mut mult = vec![1.0; active.len()];
        mult.push((n - active.len()) as f64);
        let base: Vec<Vec<f64>> = targets
            .iter()
            .map(|t| {
                let mut v: Vec<f64> = active.iter().map(|&i| t.as_slice()[i]).collect();
                v.push(0.0);
                v
            })
            .collect();
        let ln_base = base.iter().map(|b| b.iter().map(|&x| ln_clamped(x)).collect()).collect();
        let mask_count = base.iter().map(|b| b.iter().filter(|&&x| x > 0.0).count()).collect();
        Ok(Kernel {
            shape,
            n: n as f64,
            active,
            base,
            ln_base,
            mask_count,
            mult,
            alpha_free: loss.variant.scale_adaptive() && !loss.frozen_alpha(),
            loss,
        })
    }

    fn len(&self) -> usize {
        self.mult.len()
    }

    fn mean_mask(&self) -> f64 {
        self.mask_count.iter().sum::<usize>() as f64 / self.mask_count.len() as f64
    }

    fn eval(&self, u: &[f64], alpha: &[f64]) -> KernelEval {
        let r_count = self.base.len() as f64;
        let sa = self.loss.variant.scale_adaptive();
        let wa = self.loss.variant.weight_adaptive();
        let (lambda, gamma) = (self.loss.lambda, self.loss.gamma);
        let pred: Vec<f64> = u.iter().map(|&x| materialize(x)).collect();
        let dp_du: Vec<f64> = u.iter().map(|&x| dmaterialize(x)).collect();
        let mut g_pred = vec![0.0; self.len()];
        let mut g_alpha = vec![0.0; self.len()];
        let (mut regression, mut regularizer) = (0.0, 0.0);
        for ((b, l), &m) in self.base.iter().zip(&self.ln_base).zip(&self.mask_count) {
            let (mut fit_sum, mut reg_sum) = (0.0, 0.0);
            for i in 0..self.len() {
                let a = alpha[i];
                let (t, dt) = if sa {
                    let q = 1.0 + a * l[i];
                    (0.5 * b[i] * (1.0 + q * q), b[i] * q * l[i])
                } else {
                    (b[i], 0.0)
                };
                let p = pred[i];
                let w = if wa { wahr_weight(p, t, gamma) } else { 1.0 };
                let d = p - t;
                fit_sum += self.mult[i] * w * d * d;
                let gp = 2.0 * w * d / self.n;
                g_pred[i] += gp * dp_du[i] / r_count;
                if self.alpha_free {
                    let mut ga = -gp * dt;
                    if b[i] > 0.0 {
                        ga += 2.0 * lambda * a / m as f64;
                        reg_sum += a * a;
                    }
                    g_alpha[i] += ga / r_count;
                }
            }
            regression += fit_sum / self.n / r_count;
            if self.alpha_free && m > 0 {
                regularizer += reg_sum / m as f64 / r_count;
            }
        }
        let gamma = wa.then_some(gamma);
        KernelEval {
            report: LossReport::new(regression, regularizer, lambda, gamma, self.shape.len()),
            g_pred,
            g_alpha,
        }
    }

    fn expand(&self, compact: &[f64], map: impl Fn(f64) -> f64) -> HeatmapStack {
        let bg = map(*compact.last().expect("background slot"));
        let mut out = HeatmapStack::filled(self.shape, bg);
        let data = out.as_mut_slice();
        for (&i, &v) in self.active.iter().zip(compact) {
            data[i] = map(v);
        }
        out
    }
}

fn finite(e: &KernelEval) -> bool {
    e.report.total.is_finite() && e.g_pred.iter().chain(&e.g_alpha).all(|g| g.is_finite())
}

/// Gradient descent with per-element step sizes: prediction parameters use
/// `lr * n` (the sum-of-squares scale of the mean loss) and alpha uses
/// `lr * m / max(1, lambda)` with `m` the mean support size. A step that
/// raises the total loss is retried with half the learning rate, and the
/// halved rate is kept.
pub fn fit_targets(targets: &[HeatmapStack], cfg: &FitConfig) -> Result<(HeatmapStack, AlphaField, Vec<LossReport>, f64)> {
    cfg.validate()?;
    let first = targets
        .first()
        .ok_or_else(|| Error::invalid("targets", "at least one target is required"))?;
    for t in targets {
        first.shape().ensure_eq(&t.shape())?;
    }
    let kernel = Kernel::new(targets, cfg.loss_config())?;
    let len = kernel.len();
    let mut u = vec![0.0; len];
    let mut alpha = vec![0.0; len];
    let pred_scale = kernel.n;
    let alpha_scale = kernel.mean_mask() / cfg.lambda.max(1.0);

    let mut current = kernel.eval(&u, &alpha);
    if !finite(&current) {
        return Err(Error::Divergence {
            step: 0,
            reason: "non-finite loss at the initial point".into(),
        });
    }
    let mut curve = Vec::with_capacity(cfg.steps + 1);
    curve.push(current.report);
    let mut lr = cfg.learning_rate;
    let mut trial_u = vec![0.0; len];
    let mut trial_alpha = alpha.clone();
    for step in 1..=cfg.steps {
        for _ in 0..MAX_HALVINGS {
            for i in 0..len {
                trial_u[i] = u[i] - lr * pred_scale * current.g_pred[i];
            }
            let mut alpha_ok = true;
            if kernel.alpha_free {
                for i in 0..len {
                    trial_alpha[i] = alpha[i] - lr * alpha_scale * current.g_alpha[i];
                    alpha_ok &= trial_alpha[i] > -1.0 + 1e-6;
                }
            }
            if !alpha_ok {
                lr *= 0.5;
                continue;
            }
            let trial = kernel.eval(&trial_u, &trial_alpha);
            if !finite(&trial) {
                return Err(Error::Divergence {
                    step,
                    reason: format!("non-finite loss at learning rate {lr}"),
                });
            }
            if trial.report.total <= current.report.total {
                std::mem::swap(&mut u, &mut trial_u);
                std::mem::swap(&mut alpha, &mut trial_alpha);
                current = trial;
                break;
            }
            lr *= 0.5;
        }
        curve.push(current.report);
    }
    let pred = kernel.expand(&u, materialize);
    let alpha = AlphaField::new(kernel.expand(&alpha, |a| a))?;
    Ok((pred, alpha, curve, lr))
}

/// Channel-wise oracle tags: every cell carries `spacing * p` for the person
/// `p` whose labeled keypoint of that channel is nearest.
pub fn oracle_tags(persons: &[PersonInstance], shape: Shape, spacing: f64) -> HeatmapStack {
    let mut out = HeatmapStack::zeros(shape);
    for k in 0..shape.channels {
        let pts: Vec<(f64, f64, f64)> = persons
            .iter()
            .enumerate()
            .filter_map(|(p, person)| {
                let kp = person.keypoints.get(k)?;
                kp.is_labeled().then_some((kp.x, kp.y, spacing * p as f64))
            })
            .collect();
        if pts.is_empty() {
            continue;
        }
        for y in 0..shape.height {
            for x in 0..shape.width {
                let (xf, yf) = (x as f64, y as f64);
                let tag = pts
                    .iter()
                    .map(|&(px, py, t)| ((px - xf).powi(2) + (py - yf).powi(2), t))
                    .fold((f64::INFINITY, 0.0), |best, c| if c.0 < best.0 { c } else { best })
                    .1;
                out.set(k, x, y, tag);
            }
        }
    }
    out
}

/// Distance from each labeled keypoint of `truth` to the nearest refined
/// peak of its channel.
pub fn localization_errors(pred: &HeatmapStack, truth: &[PersonInstance], params: &DecodeParams) -> Result<Vec<f64>> {
    let shape = pred.shape();
    let peaks = find_peaks(pred, params.max_per_channel, params.score_floor)?;
    let peaks: Vec<_> = peaks.iter().map(|d| refine_subpixel(pred, d)).collect();
    let diagonal = (shape.width as f64).hypot(shape.height as f64);
    let mut out = Vec::new();
    for person in truth {
        for (k, kp) in person.keypoints.iter().enumerate() {
            if !kp.is_labeled() {
                continue;
            }
            let d = peaks
                .iter()
                .filter(|p| p.channel == k)
                .map(|p| (p.x - kp.x).hypot(p.y - kp.y))
                .fold(diagonal, f64::min);
            out.push(d);
        }
    }
    Ok(out)
}

/// Mean of `scale` over the cells each person wins in the encoding of
/// `persons`. Persons without any support report 1.
pub fn per_person_mean_scale(persons: &[PersonInstance], scale: &ScaleField, sigma0: f64) -> Result<Vec<(usize, f64)>> {
    let shape = scale.shape();
    let ids: Vec<f64> = (0..persons.len()).map(|p| p as f64).collect();
    let owner = rasterize_per_person(persons, &ids, shape, sigma0, -1.0)?;
    let mut sums = vec![(0.0, 0usize); persons.len()];
    for (&o, &s) in owner.as_slice().iter().zip(scale.as_stack().as_slice()) {
        if o >= 0.0 {
            let e = &mut sums[o as usize];
            e.0 += s;
            e.1 += 1;
        }
    }
    Ok(sums
        .into_iter()
        .enumerate()
        .map(|(p, (sum, count))| (p, if count == 0 { 1.0 } else { sum / count as f64 }))
        .collect())
}

/// Fits one scene with `cfg`.
pub fn fit_direct(scene: &SyntheticScene, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    let shape = scene.shape();
    let replicas = label_replicas(scene, cfg);
    let targets = replica_targets(&replicas, shape, cfg)?;
    let (final_pred, alpha, loss_curve, final_learning_rate) = fit_targets(&targets, cfg)?;
    let final_scale = alpha.to_scale();
    let per_person_mean_scale = per_person_mean_scale(&scene.noisy_persons, &final_scale, cfg.sigma0)?;
    let localization_errors = localization_errors(&final_pred, &scene.persons, &DecodeParams::default())?;
    Ok(FitResult {
        final_pred,
        final_scale,
        loss_curve,
        per_person_mean_scale,
        localization_errors,
        final_learning_rate,
    })
}

/// Groups a fitted prediction with oracle tags from the true keypoints.
pub fn decode_with_oracle_tags(pred: &HeatmapStack, truth: &[PersonInstance]) -> Result<Vec<PoseGroup>> {
    let tags = oracle_tags(truth, pred.shape(), ORACLE_TAG_SPACING);
    let params = DecodeParams {
        max_per_channel: truth.len().max(1) * 2,
        tag_threshold: ORACLE_TAG_SPACING / 2.0,
        ..DecodeParams::default()
    };
    decode(pred, Some(&tags), &params)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Gamma,
    Variant,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Lambda => "lambda",
            SweepParam::Gamma => "gamma",
            SweepParam::Variant => "variant",
        }
    }

    /// `template` with this parameter set to `value`, plus the canonical
    /// spelling of the value.
    pub fn apply(self, template: &FitConfig, value: &str) -> Result<(FitConfig, String)> {
        let mut cfg = template.clone();
        let number = || -> Result<f64> {
            value
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid("values", format!("{value:?} is not a number")))
        };
        let canonical = match self {
            SweepParam::Lambda => {
                cfg.lambda = number()?;
                format_value(cfg.lambda)
            }
            SweepParam::Gamma => {
                cfg.gamma = number()?;
                format_value(cfg.gamma)
            }
            SweepParam::Variant => {
                cfg.variant = value.trim().parse()?;
                cfg.variant.name().to_string()
            }
        };
        cfg.validate()?;
        Ok((cfg, canonical))
    }
}

fn format_value(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        v.to_string()
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(SweepParam::Lambda),
            "gamma" => Ok(SweepParam::Gamma),
            "variant" => Ok(SweepParam::Variant),
            _ => Err(Error::invalid(
                "param",
                format!("unknown sweep parameter {s:?}; expected lambda, gamma or variant"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub mean_loc_err_px: f64,
    pub ap: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub seed_count: usize,
}

/// One fit per value per scene, in parallel. Rows follow `values` order.
pub fn ablation_sweep(scenes: &[SyntheticScene], template: &FitConfig, param: SweepParam, values: &[String]) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        return Err(Error::invalid("values", "at least one value is required"));
    }
    if scenes.is_empty() {
        return Err(Error::invalid("scenes", "at least one scene is required"));
    }
    let configs = values.iter().map(|v| param.apply(template, v)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..scenes.len()).map(move |s| (c, s))).collect();
    let fits = jobs
        .par_iter()
        .map(|&(c, s)| {
            let fit = fit_direct(&scenes[s], &configs[c].0)?;
            let poses = decode_with_oracle_tags(&fit.final_pred, &scenes[s].persons)?;
            Ok((fit.localization_errors, poses))
        })
        .collect::<Result<Vec<_>>>()?;
    let oks = OksParams::uniform(scenes[0].shape().channels, SYNTHETIC_K)?;
    let truth: Vec<Vec<PersonInstance>> = scenes.iter().map(|s| s.persons.clone()).collect();
    configs
        .iter()
        .zip(fits.chunks(scenes.len()))
        .map(|((_, canonical), chunk)| {
            let errors: Vec<f64> = chunk.iter().flat_map(|(e, _)| e.iter().copied()).collect();
            let poses: Vec<Vec<PoseGroup>> = chunk.iter().map(|(_, p)| p.clone()).collect();
            let report = average_precision(&poses, &truth, &oks)?;
            Ok(SweepRow {
                param: param.name().to_string(),
                value: canonical.clone(),
                mean_loc_err_px: if errors.is_empty() {
                    0.0
                } else {
                    errors.iter().sum::<f64>() / errors.len() as f64
                },
                ap: report.ap,
                ap_m: report.ap_m,
                ap_l: report.ap_l,
                seed_count: scenes.len(),
            })
        })
        .collect()
}

/// CSV with header `param,value,mean_loc_err_px,ap,ap_m,ap_l,seed_count`;
/// undefined metrics are empty.
pub fn write_sweep_csv(rows: &[SweepRow], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["param", "value", "mean_loc_err_px", "ap", "ap_m", "ap_l", "seed_count"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.param.clone(),
            r.value.clone(),
            r.mean_loc_err_px.to_string(),
            opt(r.ap),
            opt(r.ap_m),
            opt(r.ap_l),
            r.seed_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::{evaluate, grad_loss};
    use crate::synth::generate_scene_with_scales;
    use approx::assert_abs_diff_eq;

    #[test]
    fn parameterization() {
        assert_eq!(materialize(0.0), 0.5);
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert_abs_diff_eq!(materialize(parameterize(x).unwrap()), x, epsilon = 1e-12);
        }
        assert!(parameterize(1.05).is_err());
        assert_eq!(scale_from_alpha(0.0), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(FitConfig::default().validate().is_ok());
        assert!(FitConfig {
            learning_rate: 0.0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            steps: 0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
        assert!(FitConfig {
            label_samples: 0,
            ..FitConfig::default()
        }
        .validate()
        .is_err());
        assert_eq!("swahr".parse::<FitVariant>().unwrap(), FitVariant::Swahr);
        assert!("focal".parse::<FitVariant>().is_err());
    }

    fn small_scene(seed: u64) -> SyntheticScene {
        generate_scene_with_scales(seed, &[1.0], 0.05, 32, 24).unwrap()
    }

    /// The compact kernel against the library loss on materialized stacks,
    /// for a single label draw where both compute the same objective.
    #[test]
    fn kernel_matches_library_loss_and_gradient() {
        let scene = small_scene(4);
        for variant in [FitVariant::Base, FitVariant::Sahr, FitVariant::Wahr, FitVariant::Swahr] {
            let cfg = FitConfig {
                variant,
                label_samples: 1,
                lambda: 0.7,
                gamma: 0.3,
                ..FitConfig::default()
            };
            let targets = replica_targets(&label_replicas(&scene, &cfg), scene.shape(), &cfg).unwrap();
            let kernel = Kernel::new(&targets, cfg.loss_config()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let u: Vec<f64> = (0..kernel.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a: Vec<f64> = (0..kernel.len()).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let e = kernel.eval(&u, &a);

            let pred = kernel.expand(&u, materialize);
            let alpha = AlphaField::new(kernel.expand(&a, |x| x)).unwrap();
            let lib = evaluate(&cfg.loss_config(), &pred, &targets[0], Some(&alpha)).unwrap();
            assert_abs_diff_eq!(e.report.total, lib.total, epsilon = 1e-12);
            assert_abs_diff_eq!(e.report.regularizer, lib.regularizer, epsilon = 1e-12);

            let g = grad_loss(&cfg.loss_config(), &pred, &targets[0], Some(&alpha)).unwrap();
            for (slot, &i) in kernel.active.iter().enumerate() {
                let expect_u = g.d_pred.as_slice()[i] * dmaterialize(u[slot]);
                assert_abs_diff_eq!(e.g_pred[slot], expect_u, epsilon = 1e-15);
                if variant.loss_variant().scale_adaptive() {
                    assert_abs_diff_eq!(e.g_alpha[slot], g.d_alpha.as_slice()[i], epsilon = 1e-15);
                }
            }
            // any background cell carries the representative's gradient
            let bg = (0..pred.len()).find(|i| !kernel.active.contains(i)).unwrap();
            let expect_bg = g.d_pred.as_slice()[bg] * dmaterialize(*u.last().unwrap());
            assert_abs_diff_eq!(*e.g_pred.last().unwrap(), expect_bg, epsilon = 1e-15);
        }
    }

    #[test]
    fn loss_curve_is_monotone_and_deterministic() {
        let scene = small_scene(1);
        let cfg = FitConfig {
            variant: FitVariant::Swahr,
            steps: 200,
            label_samples: 3,
            ..FitConfig::default()
        };
        let a = fit_direct(&scene, &cfg).unwrap();
        let b = fit_direct(&scene, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.loss_curve.len(), 201);
        for w in a.loss_curve.windows(2) {
            assert!(w[1].total <= w[0].total);
        }
        assert!(a.final_loss().total < a.loss_curve[0].total);
    }

    #[test]
    fn frozen_alpha_keeps_unit_scale() {
        let scene = small_scene(2);
        let cfg = FitConfig {
            variant: FitVariant::Sahr,
            lambda: f64::INFINITY,
            steps: 50,
            label_samples: 2,
            ..FitConfig::default()
        };
        let fit = fit_direct(&scene, &cfg).unwrap();
        assert!(fit.final_scale.as_stack().as_slice().iter().all(|&s| s == 1.0));
    }

    #[test]
    fn base_fit_converges_to_noiseless_target() {
        let scene = generate_scene_with_scales(3, &[1.0], 0.0, 32, 24).unwrap();
        let cfg = FitConfig {
            steps: 5000,
            label_samples: 1,
            ..FitConfig::default()
        };
        let fit = fit_direct(&scene, &cfg).unwrap();
        let target = encode_gaussian(&scene.noisy_persons, cfg.sigma0, scene.shape()).unwrap();
        let err = fit
            .final_pred
            .as_slice()
            .iter()
            .zip(target.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "max abs error {err}");
        assert!(fit.mean_localization_error() < 0.5);
    }

    #[test]
    fn oracle_tags_follow_nearest_person() {
        let scene = generate_scene_with_scales(5, &[1.0, 1.0], 0.0, 64, 64).unwrap();
        let tags = oracle_tags(&scene.persons, scene.shape(), 10.0);
        for (p, person) in scene.persons.iter().enumerate() {
            for (k, kp) in person.keypoints.iter().enumerate() {
                let v = tags.get(k, kp.x.round() as usize, kp.y.round() as usize);
                assert_eq!(v, 10.0 * p as f64);
            }
        }
    }

    #[test]
    fn sweep_rows_and_csv() {
        let scenes = vec![small_scene(7)];
        let template = FitConfig {
            variant: FitVariant::Sahr,
            steps: 20,
            label_samples: 2,
            ..FitConfig::default()
        };
        let values: Vec<String> = ["0.1", "inf"].iter().map(|s| s.to_string()).collect();
        let rows = ablation_sweep(&scenes, &template, SweepParam::Lambda, &values).unwrap();
        assert_eq!(rows.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), vec!["0.1", "inf"]);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("param,value,mean_loc_err_px,ap,ap_m,ap_l,seed_count\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(ablation_sweep(&scenes, &template, SweepParam::Lambda, &[]).is_err());
        assert!(ablation_sweep(&scenes, &template, SweepParam::Gamma, &["x".into()]).is_err());
    }

    #[test]
    fn single_value_sweep_equals_one_fit() {
        let scenes = vec![small_scene(8)];
        let template = FitConfig {
            variant: FitVariant::Base,
            steps: 30,
            label_samples: 2,
            ..FitConfig::default()
        };
        let rows = ablation_sweep(&scenes, &template, SweepParam::Variant, &["base".into()]).unwrap();
        let fit = fit_direct(&scenes[0], &template).unwrap();
        assert_eq!(rows[0].mean_loc_err_px, fit.mean_localization_error());
    }
}
