//! Central finite differences, used as an independent check on
//! [`crate::loss::grad_loss`].

use crate::error::{ensure_positive, Result};
use crate::grid::{AlphaField, HeatmapStack};
use crate::loss::{current_weights, evaluate_with_weights, GradientPair, LossConfig};

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// `(f(x + eps e_i) - f(x - eps e_i)) / 2 eps` for every coordinate `i`.
pub fn finite_diff_grad<F>(f: F, params: &[f64], epsilon: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = params.to_vec();
    (0..params.len())
        .map(|i| {
            let x0 = x[i];
            x[i] = x0 + epsilon;
            let up = f(&x);
            x[i] = x0 - epsilon;
            let down = f(&x);
            x[i] = x0;
            (up - down) / (2.0 * epsilon)
        })
        .collect()
}

/// Numerical gradient of the configured loss with respect to predictions and
/// alpha. Weight-adaptive weights are frozen at the unperturbed point,
/// matching the stop-gradient convention of the analytic path.
pub fn finite_diff_loss_grad(
    cfg: &LossConfig,
    pred: &HeatmapStack,
    base: &HeatmapStack,
    alpha: Option<&AlphaField>,
    epsilon: f64,
) -> Result<GradientPair> {
    ensure_positive("epsilon", epsilon)?;
    let shape = base.shape();
    let zeros = HeatmapStack::zeros(shape);
    let alpha = alpha.map(AlphaField::as_stack).unwrap_or(&zeros);
    let weights = current_weights(cfg, pred, base, Some(alpha))?;
    // surface shape/parameter errors before differencing
    evaluate_with_weights(cfg, pred, base, Some(alpha), weights.as_ref())?;

    let n = shape.len();
    let mut params = pred.as_slice().to_vec();
    params.extend_from_slice(alpha.as_slice());
    let loss = |x: &[f64]| {
        let p = HeatmapStack::from_vec(shape, x[..n].to_vec()).expect("shape");
        let a = HeatmapStack::from_vec(shape, x[n..].to_vec()).expect("shape");
        evaluate_with_weights(cfg, &p, base, Some(&a), weights.as_ref())
            .expect("validated above")
            .total
    };
    let mut grad = if cfg.variant.scale_adaptive() && !cfg.frozen_alpha() {
        finite_diff_grad(loss, &params, epsilon)
    } else {
        let alpha_tail = params[n..].to_vec();
        let mut g = finite_diff_grad(
            |x: &[f64]| {
                let mut full = x.to_vec();
                full.extend_from_slice(&alpha_tail);
                loss(&full)
            },
            &params[..n],
            epsilon,
        );
        g.resize(2 * n, 0.0);
        g
    };
    let d_alpha = grad.split_off(n);
    Ok(GradientPair {
        d_pred: HeatmapStack::from_vec(shape, grad)?,
        d_alpha: HeatmapStack::from_vec(shape, d_alpha)?,
    })
}

/// Largest `|a - b| / max(|a|, |b|)` over pairs where either side reaches
/// `floor` in magnitude.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .filter(|(a, b)| a.abs() >= floor || b.abs() >= floor)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
        .fold(0.0, f64::max)
}
