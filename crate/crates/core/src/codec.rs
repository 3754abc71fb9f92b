//! Ground-truth heatmap construction and the scale-adaptive transforms.
//!
//! Every keypoint is rendered with the base standard deviation `sigma0` on a
//! truncated square window `|i - x| <= 3 sigma0, |j - y| <= 3 sigma0`.
//! Overlapping persons are merged with a pixel-wise maximum. Scale-adaptive
//! heatmaps are element-wise transforms of that base stack and keep its
//! support.

use crate::error::{ensure_positive, Error, Result};
use crate::grid::{AlphaField, HeatmapStack, ScaleField, Shape, SupportMask};

/// Number of keypoints in the COCO person skeleton.
pub const COCO_KEYPOINTS: usize = 17;

/// Base width used to derive per-person scales from bounding boxes.
pub const DEFAULT_W_BASE: f64 = 256.0;

/// Floor applied before taking `ln` of a heatmap value.
pub const LN_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Visibility {
    NotLabeled = 0,
    LabeledInvisible = 1,
    LabeledVisible = 2,
}

impl Visibility {
    pub fn from_flag(v: f64) -> Result<Self> {
        match v {
            v if v == 0.0 => Ok(Visibility::NotLabeled),
            v if v == 1.0 => Ok(Visibility::LabeledInvisible),
            v if v == 2.0 => Ok(Visibility::LabeledVisible),
            other => Err(Error::invalid("visibility", format!("expected 0, 1 or 2, got {other}"))),
        }
    }

    pub fn flag(self) -> u8 {
        self as u8
    }

    /// Both labeled states produce a Gaussian.
    pub fn is_labeled(self) -> bool {
        self != Visibility::NotLabeled
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KeypointAnnotation {
    pub x: f64,
    pub y: f64,
    pub visibility: Visibility,
}

impl KeypointAnnotation {
    pub fn visible(x: f64, y: f64) -> Self {
        KeypointAnnotation {
            x,
            y,
            visibility: Visibility::LabeledVisible,
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.visibility.is_labeled()
    }
}

/// Bounding box `(x, y, w, h)` in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Tight box around the labeled keypoints.
    pub fn around(keypoints: &[KeypointAnnotation]) -> Option<BBox> {
        let mut it = keypoints.iter().filter(|k| k.is_labeled());
        let first = it.next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x, first.y);
        for k in it {
            x0 = x0.min(k.x);
            y0 = y0.min(k.y);
            x1 = x1.max(k.x);
            y1 = y1.max(k.y);
        }
        Some(BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }
}

/// One annotated person.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonInstance {
    pub keypoints: Vec<KeypointAnnotation>,
    pub bbox: BBox,
    pub area: f64,
}

impl PersonInstance {
    pub fn new(keypoints: Vec<KeypointAnnotation>, bbox: BBox, area: f64) -> Result<Self> {
        if !(bbox.w >= 0.0 && bbox.h >= 0.0) {
            return Err(Error::invalid("bbox", format!("negative size {}x{}", bbox.w, bbox.h)));
        }
        if !(area >= 0.0) {
            return Err(Error::invalid("area", format!("must be >= 0, got {area}")));
        }
        if let Some(k) = keypoints.iter().find(|k| !(k.x.is_finite() && k.y.is_finite())) {
            return Err(Error::invalid("keypoint", format!("non-finite coordinate ({}, {})", k.x, k.y)));
        }
        Ok(PersonInstance { keypoints, bbox, area })
    }

    pub fn labeled_count(&self) -> usize {
        self.keypoints.iter().filter(|k| k.is_labeled()).count()
    }
}

/// Inclusive cell range `[lo, hi]` covered by a window of half-width
/// `radius` around `center`, clipped to `[0, len)`. `None` when empty.
fn window(center: f64, radius: f64, len: usize) -> Option<(usize, usize)> {
    let lo = (center - radius).ceil().max(0.0);
    let hi = (center + radius).floor().min(len as f64 - 1.0);
    if len == 0 || lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize))
    }
}

fn check_persons(persons: &[PersonInstance], shape: Shape) -> Result<()> {
    for p in persons {
        if p.keypoints.len() != shape.channels {
            return Err(Error::KeypointCount {
                expected: shape.channels,
                found: p.keypoints.len(),
            });
        }
    }
    Ok(())
}

/// Visits every cell of every labeled keypoint window in person order,
/// passing `(person, flat index, gaussian value)`.
fn for_each_window_cell(persons: &[PersonInstance], sigma0: f64, shape: Shape, mut visit: impl FnMut(usize, usize, f64)) -> Result<()> {
    let sigma0 = ensure_positive("sigma0", sigma0)?;
    check_persons(persons, shape)?;
    let radius = 3.0 * sigma0;
    let denom = 2.0 * sigma0 * sigma0;
    for (p, person) in persons.iter().enumerate() {
        for (k, kp) in person.keypoints.iter().enumerate() {
            if !kp.is_labeled() {
                continue;
            }
            let (Some((x0, x1)), Some((y0, y1))) = (window(kp.x, radius, shape.width), window(kp.y, radius, shape.height)) else {
                continue;
            };
            for y in y0..=y1 {
                let dy = y as f64 - kp.y;
                for x in x0..=x1 {
                    let dx = x as f64 - kp.x;
                    let v = (-(dx * dx + dy * dy) / denom).exp();
                    visit(p, shape.index(k, x, y), v);
                }
            }
        }
    }
    Ok(())
}

/// Renders the base ground-truth stack `H^sigma0`.
pub fn encode_gaussian(persons: &[PersonInstance], sigma0: f64, shape: Shape) -> Result<HeatmapStack> {
    let mut out = HeatmapStack::zeros(shape);
    let data = out.as_mut_slice();
    for_each_window_cell(persons, sigma0, shape, |_, i, v| {
        if v > data[i] {
            data[i] = v;
        }
    })?;
    Ok(out)
}

pub fn support_mask(base: &HeatmapStack) -> SupportMask {
    SupportMask::from_stack(base)
}

/// `base^(1/s)` on the support, zero elsewhere.
pub fn sahr_exact(base: &HeatmapStack, scale: &ScaleField) -> Result<HeatmapStack> {
    base.zip_map(scale.as_stack(), |b, s| if b > 0.0 { b.powf(1.0 / s) } else { 0.0 })
}

#[inline]
pub(crate) fn ln_clamped(b: f64) -> f64 {
    b.max(LN_FLOOR).ln()
}

/// Second-order expansion of `base^(1 + alpha)` around `alpha = 0`.
#[inline]
pub fn taylor_value(b: f64, alpha: f64) -> f64 {
    if b > 0.0 {
        let t = 1.0 + alpha * ln_clamped(b);
        0.5 * b * (1.0 + t * t)
    } else {
        0.0
    }
}

/// `d taylor_value / d alpha`.
#[inline]
pub fn taylor_dalpha(b: f64, alpha: f64) -> f64 {
    if b > 0.0 {
        let l = ln_clamped(b);
        b * (1.0 + alpha * l) * l
    } else {
        0.0
    }
}

/// Taylor form of the scale-adaptive heatmaps, `1/2 H (1 + (1 + alpha ln H)^2)`.
pub fn sahr_taylor(base: &HeatmapStack, alpha: &AlphaField) -> Result<HeatmapStack> {
    base.zip_map(alpha.as_stack(), taylor_value)
}

/// Constant per-person scale `bbox_width / w_base`.
pub fn shr_scale_from_bbox(bbox_width: f64, w_base: f64) -> Result<f64> {
    let w = ensure_positive("bbox_width", bbox_width)?;
    let base = ensure_positive("w_base", w_base)?;
    Ok(w / base)
}

/// Spreads one value per person over the cells where that person's Gaussian
/// wins the max merge; later persons win exact ties. Cells outside every
/// window keep `fill`.
pub fn rasterize_per_person(persons: &[PersonInstance], values: &[f64], shape: Shape, sigma0: f64, fill: f64) -> Result<HeatmapStack> {
    if values.len() != persons.len() {
        return Err(Error::dimension(format!("{} per-person values", persons.len()), values.len()));
    }
    let mut best = vec![0.0f64; shape.len()];
    let mut out = HeatmapStack::filled(shape, fill);
    let data = out.as_mut_slice();
    for_each_window_cell(persons, sigma0, shape, |p, i, v| {
        if v >= best[i] {
            best[i] = v;
            data[i] = values[p];
        }
    })?;
    Ok(out)
}

/// Per-person scale on each support window, 1.0 elsewhere.
pub fn rasterize_scale_field(persons: &[PersonInstance], scales: &[f64], shape: Shape, sigma0: f64) -> Result<ScaleField> {
    for &s in scales {
        ensure_positive("scale", s)?;
    }
    ScaleField::new(rasterize_per_person(persons, scales, shape, sigma0, 1.0)?)
}

/// Scale field of the bounding-box baseline.
pub fn shr_scale_field(persons: &[PersonInstance], shape: Shape, sigma0: f64, w_base: f64) -> Result<ScaleField> {
    let scales = persons
        .iter()
        .map(|p| shr_scale_from_bbox(p.bbox.w, w_base))
        .collect::<Result<Vec<_>>>()?;
    rasterize_scale_field(persons, &scales, shape, sigma0)
}
