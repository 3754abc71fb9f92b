//! Regression losses, the scale regularizer, weight-adaptive weighting and
//! their analytic gradients.
//!
//! Every squared norm is reduced with a mean: the regression terms over all
//! `K*H*W` elements and the regularizer over the support cells. Sums are
//! recovered by multiplying by [`LossReport::element_count`] (or the mask
//! size). Accumulation is sequential, compensated, in `f64`.
//!
//! Weight-adaptive weights are treated as constants when differentiating.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::codec::{support_mask, taylor_dalpha, taylor_value};
use crate::error::{ensure_positive, Error, Result};
use crate::grid::{AlphaField, HeatmapStack, SupportMask};

pub const DEFAULT_LAMBDA: f64 = 1.0;
pub const DEFAULT_GAMMA: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// Plain L2 against the base heatmaps.
    Base,
    /// Scale-adaptive targets plus the alpha regularizer.
    Sahr,
    /// Weight-adaptive L2 against the base heatmaps.
    Wahr,
    /// Weight-adaptive L2 against scale-adaptive targets, plus the regularizer.
    Swahr,
}

impl LossVariant {
    pub const ALL: [LossVariant; 4] = [LossVariant::Base, LossVariant::Sahr, LossVariant::Wahr, LossVariant::Swahr];

    pub fn scale_adaptive(self) -> bool {
        matches!(self, LossVariant::Sahr | LossVariant::Swahr)
    }

    pub fn weight_adaptive(self) -> bool {
        matches!(self, LossVariant::Wahr | LossVariant::Swahr)
    }

    pub fn name(self) -> &'static str {
        match self {
            LossVariant::Base => "base",
            LossVariant::Sahr => "sahr",
            LossVariant::Wahr => "wahr",
            LossVariant::Swahr => "swahr",
        }
    }
}

impl fmt::Display for LossVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid("variant", format!("unknown loss variant `{s}` (base|sahr|wahr|swahr)")))
    }
}

/// Hyper-parameters of one loss evaluation. `lambda = +inf` freezes alpha at
/// zero and drops the regularizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub variant: LossVariant,
    pub lambda: f64,
    pub gamma: f64,
}

impl LossConfig {
    pub fn new(variant: LossVariant) -> Self {
        LossConfig {
            variant,
            lambda: DEFAULT_LAMBDA,
            gamma: DEFAULT_GAMMA,
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn frozen_alpha(&self) -> bool {
        self.lambda == f64::INFINITY
    }

    fn validate(&self) -> Result<()> {
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return Err(Error::invalid("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if self.variant.weight_adaptive() {
            ensure_positive("gamma", self.gamma)?;
        }
        Ok(())
    }
}

fn serialize_lambda<S: Serializer>(lambda: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if lambda.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*lambda)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LossReport {
    pub regression: f64,
    pub regularizer: f64,
    pub total: f64,
    #[serde(serialize_with = "serialize_lambda")]
    pub lambda: f64,
    pub gamma: Option<f64>,
    pub element_count: usize,
}

impl LossReport {
    pub(crate) fn new(regression: f64, regularizer: f64, lambda: f64, gamma: Option<f64>, element_count: usize) -> Self {
        let total = if lambda.is_infinite() {
            regression
        } else {
            regression + lambda * regularizer
        };
        LossReport {
            regression,
            regularizer,
            total,
            lambda,
            gamma,
            element_count,
        }
    }
}

/// Per-element loss weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightField(HeatmapStack);

impl WeightField {
    /// All-ones weights, under which the weighted loss is plain L2.
    pub fn ones(shape: crate::grid::Shape) -> Self {
        WeightField(HeatmapStack::filled(shape, 1.0))
    }

    pub fn new(stack: HeatmapStack) -> Result<Self> {
        if let Some(bad) = stack.as_slice().iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::invalid("weights", format!("must be finite and >= 0, found {bad}")));
        }
        Ok(WeightField(stack))
    }

    pub fn as_stack(&self) -> &HeatmapStack {
        &self.0
    }
}

/// Analytic gradient of a scalar loss.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientPair {
    pub d_pred: HeatmapStack,
    /// Zero for variants without scale adaptation.
    pub d_alpha: HeatmapStack,
}

/// Neumaier-compensated running sum, accumulated in index order.
#[derive(Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn mean_sq(pred: &[f64], target: &[f64], weights: Option<&[f64]>) -> f64 {
    let n = pred.len();
    if n == 0 {
        return 0.0;
    }
    let mut acc = CompensatedSum::default();
    for i in 0..n {
        let d = pred[i] - target[i];
        acc.add(weights.map_or(1.0, |w| w[i]) * d * d);
    }
    acc.value() / n as f64
}

/// Mean of `(pred - target)^2`.
pub fn l2_loss(pred: &HeatmapStack, target: &HeatmapStack) -> Result<f64> {
    pred.shape().ensure_eq(&target.shape())?;
    Ok(mean_sq(pred.as_slice(), target.as_slice(), None))
}

/// Mean of `W * (pred - target)^2`.
pub fn weighted_l2(pred: &HeatmapStack, target: &HeatmapStack, weights: &WeightField) -> Result<f64> {
    pred.shape().ensure_eq(&target.shape())?;
    pred.shape().ensure_eq(&weights.0.shape())?;
    Ok(mean_sq(pred.as_slice(), target.as_slice(), Some(weights.0.as_slice())))
}

fn masked_mean_sq(alpha: &[f64], mask: &[bool]) -> f64 {
    let mut acc = CompensatedSum::default();
    let mut m = 0usize;
    for (&a, &on) in alpha.iter().zip(mask) {
        if on {
            acc.add(a * a);
            m += 1;
        }
    }
    if m == 0 {
        0.0
    } else {
        acc.value() / m as f64
    }
}

/// Mean of `alpha^2` over the support; zero for an empty mask.
pub fn regularizer_loss(alpha: &AlphaField, mask: &SupportMask) -> Result<f64> {
    alpha.shape().ensure_eq(&mask.shape())?;
    Ok(masked_mean_sq(alpha.as_stack().as_slice(), mask.as_slice()))
}

#[inline]
/// Scalar form of [`wahr_weights`].
pub fn wahr_weight(pred: f64, target: f64, gamma: f64) -> f64 {
    let hg = target.max(0.0).powf(gamma);
    hg * (1.0 - pred).abs() + pred.abs() * (1.0 - hg)
}

/// `W = H^gamma |1 - P| + |P| (1 - H^gamma)`.
pub fn wahr_weights(pred: &HeatmapStack, target: &HeatmapStack, gamma: f64) -> Result<WeightField> {
    let gamma = ensure_positive("gamma", gamma)?;
    Ok(WeightField(pred.zip_map(target, |p, h| wahr_weight(p, h, gamma))?))
}

/// Target value `p = 2^(-1/gamma)` at which both weighting regimes balance.
pub fn soft_boundary(gamma: f64) -> Result<f64> {
    let gamma = ensure_positive("gamma", gamma)?;
    Ok((-1.0 / gamma).exp2())
}

pub fn wahr_loss(pred: &HeatmapStack, target: &HeatmapStack, gamma: f64) -> Result<f64> {
    let w = wahr_weights(pred, target, gamma)?;
    weighted_l2(pred, target, &w)
}

/// Regression on the Taylor-form targets plus `lambda` times the regularizer.
pub fn total_sahr_loss(pred: &HeatmapStack, base: &HeatmapStack, alpha: &AlphaField, lambda: f64) -> Result<LossReport> {
    let cfg = LossConfig::new(LossVariant::Sahr).with_lambda(lambda);
    evaluate(&cfg, pred, base, Some(alpha))
}

/// Weight-adaptive regression against the Taylor-form targets plus the regularizer.
pub fn swahr_loss(pred: &HeatmapStack, base: &HeatmapStack, alpha: &AlphaField, lambda: f64, gamma: f64) -> Result<LossReport> {
    let cfg = LossConfig {
        variant: LossVariant::Swahr,
        lambda,
        gamma,
    };
    evaluate(&cfg, pred, base, Some(alpha))
}

/// Shared validation and target construction for one evaluation.
struct Problem<'a> {
    cfg: &'a LossConfig,
    pred: &'a HeatmapStack,
    base: &'a HeatmapStack,
    alpha: Option<&'a HeatmapStack>,
    target: HeatmapStack,
}

impl<'a> Problem<'a> {
    fn new(cfg: &'a LossConfig, pred: &'a HeatmapStack, base: &'a HeatmapStack, alpha: Option<&'a HeatmapStack>) -> Result<Self> {
        cfg.validate()?;
        pred.shape().ensure_eq(&base.shape())?;
        let alpha = if cfg.variant.scale_adaptive() { alpha } else { None };
        if let Some(a) = alpha {
            base.shape().ensure_eq(&a.shape())?;
            if cfg.frozen_alpha() && a.as_slice().iter().any(|&v| v != 0.0) {
                return Err(Error::invalid("alpha", "must be zero when lambda is +inf"));
            }
        }
        let target = match alpha {
            Some(a) => base.zip_map(a, taylor_value)?,
            None => base.clone(),
        };
        Ok(Problem {
            cfg,
            pred,
            base,
            alpha,
            target,
        })
    }

    fn weights(&self) -> Option<WeightField> {
        self.cfg.variant.weight_adaptive().then(|| {
            let gamma = self.cfg.gamma;
            WeightField(self.pred.zip_map(&self.target, |p, h| wahr_weight(p, h, gamma)).expect("shapes checked"))
        })
    }

    fn report(&self, weights: Option<&WeightField>) -> Result<LossReport> {
        if let Some(w) = weights {
            self.pred.shape().ensure_eq(&w.0.shape())?;
        }
        let regression = mean_sq(self.pred.as_slice(), self.target.as_slice(), weights.map(|w| w.0.as_slice()));
        let regularizer = match self.alpha {
            Some(a) if !self.cfg.frozen_alpha() => masked_mean_sq(a.as_slice(), support_mask(self.base).as_slice()),
            _ => 0.0,
        };
        let gamma = self.cfg.variant.weight_adaptive().then_some(self.cfg.gamma);
        Ok(LossReport::new(regression, regularizer, self.cfg.lambda, gamma, self.pred.len()))
    }
}

/// Evaluates the configured loss. `alpha` is ignored by the base and
/// weight-adaptive variants and defaults to zero for the others.
pub fn evaluate(cfg: &LossConfig, pred: &HeatmapStack, base: &HeatmapStack, alpha: Option<&AlphaField>) -> Result<LossReport> {
    let zeros;
    let alpha = match alpha {
        Some(a) => a.as_stack(),
        None => {
            zeros = HeatmapStack::zeros(base.shape());
            &zeros
        }
    };
    let problem = Problem::new(cfg, pred, base, Some(alpha))?;
    let w = problem.weights();
    problem.report(w.as_ref())
}

/// Like [`evaluate`] but with caller-supplied weights for the
/// weight-adaptive variants (ignored otherwise). Used to differentiate with
/// the weights held fixed.
pub fn evaluate_with_weights(
    cfg: &LossConfig,
    pred: &HeatmapStack,
    base: &HeatmapStack,
    alpha: Option<&HeatmapStack>,
    weights: Option<&WeightField>,
) -> Result<LossReport> {
    let zeros = HeatmapStack::zeros(base.shape());
    let problem = Problem::new(cfg, pred, base, Some(alpha.unwrap_or(&zeros)))?;
    if cfg.variant.weight_adaptive() {
        let w = match weights {
            Some(w) => w.clone(),
            None => problem.weights().expect("weight-adaptive"),
        };
        problem.report(Some(&w))
    } else {
        problem.report(None)
    }
}

/// Weights the weight-adaptive variants would use at this point, if any.
pub fn current_weights(cfg: &LossConfig, pred: &HeatmapStack, base: &HeatmapStack, alpha: Option<&HeatmapStack>) -> Result<Option<WeightField>> {
    let zeros = HeatmapStack::zeros(base.shape());
    Ok(Problem::new(cfg, pred, base, Some(alpha.unwrap_or(&zeros)))?.weights())
}

/// Exact partial derivatives of [`evaluate`] with respect to every
/// prediction and alpha element.
pub fn grad_loss(cfg: &LossConfig, pred: &HeatmapStack, base: &HeatmapStack, alpha: Option<&AlphaField>) -> Result<GradientPair> {
    grad_loss_raw(cfg, pred, base, alpha.map(AlphaField::as_stack))
}

pub(crate) fn grad_loss_raw(cfg: &LossConfig, pred: &HeatmapStack, base: &HeatmapStack, alpha: Option<&HeatmapStack>) -> Result<GradientPair> {
    let zeros = HeatmapStack::zeros(base.shape());
    let problem = Problem::new(cfg, pred, base, Some(alpha.unwrap_or(&zeros)))?;
    let weights = problem.weights();
    let n = pred.len().max(1) as f64;

    let p = pred.as_slice();
    let t = problem.target.as_slice();
    let mut d_pred = HeatmapStack::zeros(pred.shape());
    let mut d_alpha = HeatmapStack::zeros(pred.shape());
    {
        let dp = d_pred.as_mut_slice();
        for i in 0..p.len() {
            let w = weights.as_ref().map_or(1.0, |w| w.0.as_slice()[i]);
            dp[i] = 2.0 * w * (p[i] - t[i]) / n;
        }
    }

    if let (Some(a), false) = (problem.alpha, cfg.frozen_alpha()) {
        let a = a.as_slice();
        let b = base.as_slice();
        let dp = d_pred.as_slice();
        let mask = support_mask(base);
        let m = mask.count();
        let da = d_alpha.as_mut_slice();
        for i in 0..a.len() {
            // d/d alpha of the regression term flows through the target only
            da[i] = -dp[i] * taylor_dalpha(b[i], a[i]);
            if mask.as_slice()[i] {
                da[i] += 2.0 * cfg.lambda * a[i] / m as f64;
            }
        }
    }
    Ok(GradientPair { d_pred, d_alpha })
}
