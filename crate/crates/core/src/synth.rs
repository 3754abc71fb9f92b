//! Deterministic synthetic multi-person scenes.
//!
//! Each person is a 17-joint stick figure in COCO keypoint order, uniformly
//! scaled and placed on the canvas. Noisy labels add isotropic Gaussian
//! jitter whose standard deviation grows with the person's size.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::annotations::{AnnotationFile, AnnotationRecord, SceneMeta};
use crate::codec::{BBox, KeypointAnnotation, PersonInstance, Visibility, COCO_KEYPOINTS};
use crate::error::{ensure_positive, Error, Result};
use crate::grid::Shape;

/// Canonical skeleton at scale 1, in pixels relative to its bounding box.
pub const TEMPLATE: [(f64, f64); COCO_KEYPOINTS] = [
    (6.0, 2.0),   // nose
    (7.0, 0.0),   // left eye
    (5.0, 0.0),   // right eye
    (8.0, 1.0),   // left ear
    (4.0, 1.0),   // right ear
    (9.0, 6.0),   // left shoulder
    (3.0, 6.0),   // right shoulder
    (10.5, 10.0), // left elbow
    (1.5, 10.0),  // right elbow
    (12.0, 13.5), // left wrist
    (0.0, 13.5),  // right wrist
    (8.0, 13.5),  // left hip
    (4.0, 13.5),  // right hip
    (8.5, 19.0),  // left knee
    (3.5, 19.0),  // right knee
    (9.0, 24.0),  // left ankle
    (3.0, 24.0),  // right ankle
];

pub const TEMPLATE_WIDTH: f64 = 12.0;
pub const TEMPLATE_HEIGHT: f64 = 24.0;

/// Left/right channel pairs of the COCO skeleton.
pub const COCO_FLIP_PAIRS: [(usize, usize); 8] = [(1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16)];

pub const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Pixel size of a person at the given scale multiplier: the square root of
/// its bounding-box area.
pub fn person_size(scale: f64) -> f64 {
    scale * (TEMPLATE_WIDTH * TEMPLATE_HEIGHT).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub height: usize,
    pub width: usize,
    /// True keypoints.
    pub persons: Vec<PersonInstance>,
    /// Jittered labels, the ones that get encoded.
    pub noisy_persons: Vec<PersonInstance>,
    /// Scale multiplier of each person.
    pub scales: Vec<f64>,
    pub jitter_coeff: f64,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneParams {
    pub n_persons: usize,
    pub scale_range: (f64, f64),
    pub jitter_coeff: f64,
    pub height: usize,
    pub width: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams {
            n_persons: 2,
            scale_range: (1.0, 2.0),
            jitter_coeff: 0.05,
            height: 64,
            width: 64,
        }
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

/// Places `n_persons` figures with scales drawn uniformly from
/// `params.scale_range`.
pub fn generate_scene(seed: u64, params: &SceneParams) -> Result<SyntheticScene> {
    let (lo, hi) = params.scale_range;
    ensure_positive("scale_range.min", lo)?;
    ensure_positive("scale_range.max", hi)?;
    if lo > hi {
        return Err(Error::invalid("scale_range", format!("min {lo} exceeds max {hi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scales: Vec<f64> = (0..params.n_persons).map(|_| uniform(&mut rng, (lo, hi))).collect();
    place(rng, seed, &scales, params.jitter_coeff, params.height, params.width)
}

/// Places one figure per entry of `scales`.
pub fn generate_scene_with_scales(seed: u64, scales: &[f64], jitter_coeff: f64, height: usize, width: usize) -> Result<SyntheticScene> {
    for &s in scales {
        ensure_positive("scale", s)?;
    }
    place(ChaCha8Rng::seed_from_u64(seed), seed, scales, jitter_coeff, height, width)
}

fn place(mut rng: ChaCha8Rng, seed: u64, scales: &[f64], jitter_coeff: f64, height: usize, width: usize) -> Result<SyntheticScene> {
    if !(jitter_coeff >= 0.0 && jitter_coeff.is_finite()) {
        return Err(Error::invalid("jitter_coeff", format!("must be >= 0, got {jitter_coeff}")));
    }
    let mut persons: Vec<PersonInstance> = Vec::with_capacity(scales.len());
    for (p, &scale) in scales.iter().enumerate() {
        let (w, h) = (TEMPLATE_WIDTH * scale, TEMPLATE_HEIGHT * scale);
        // one pixel of margin on every side
        let x_span = (1.0, width as f64 - 2.0 - w);
        let y_span = (1.0, height as f64 - 2.0 - h);
        if x_span.1 < x_span.0 || y_span.1 < y_span.0 {
            return Err(Error::Placement { person: p, attempts: 0 });
        }
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x0 = uniform(&mut rng, x_span);
            let y0 = uniform(&mut rng, y_span);
            let (cx, cy) = (x0 + w / 2.0, y0 + h / 2.0);
            let clear = persons.iter().all(|q| {
                let (qx, qy) = q.bbox.center();
                let min_dist = 0.5 * (q.bbox.w + w) / 2.0;
                (qx - cx).hypot(qy - cy) >= min_dist
            });
            if clear {
                placed = Some((x0, y0));
                break;
            }
        }
        let (x0, y0) = placed.ok_or(Error::Placement {
            person: p,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        let keypoints = TEMPLATE
            .iter()
            .map(|&(tx, ty)| KeypointAnnotation::visible(x0 + tx * scale, y0 + ty * scale))
            .collect::<Vec<_>>();
        let bbox = BBox { x: x0, y: y0, w, h };
        persons.push(PersonInstance::new(keypoints, bbox, w * h)?);
    }
    let mut scene = SyntheticScene {
        height,
        width,
        noisy_persons: Vec::new(),
        persons,
        scales: scales.to_vec(),
        jitter_coeff,
        seed,
    };
    scene.noisy_persons = scene.jittered_labels(&mut rng);
    Ok(scene)
}

impl SyntheticScene {
    pub fn shape(&self) -> Shape {
        Shape::new(COCO_KEYPOINTS, self.height, self.width)
    }

    /// Standard deviation of the label jitter for person `p`, in pixels.
    pub fn jitter_std(&self, p: usize) -> f64 {
        self.jitter_coeff * person_size(self.scales[p])
    }

    fn jittered_labels(&self, rng: &mut impl Rng) -> Vec<PersonInstance> {
        let (xmax, ymax) = (self.width as f64 - 1.0, self.height as f64 - 1.0);
        self.persons
            .iter()
            .enumerate()
            .map(|(p, person)| {
                let std = self.jitter_std(p);
                let mut noisy = person.clone();
                if std > 0.0 {
                    let normal = Normal::new(0.0, std).expect("finite std");
                    for kp in &mut noisy.keypoints {
                        kp.x = (kp.x + normal.sample(rng)).clamp(0.0, xmax);
                        kp.y = (kp.y + normal.sample(rng)).clamp(0.0, ymax);
                    }
                }
                noisy
            })
            .collect()
    }

    /// A fresh, independent draw of the noisy labels.
    pub fn resample_labels(&self, seed: u64) -> Vec<PersonInstance> {
        self.jittered_labels(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn to_annotation_file(&self, image_id: u64) -> AnnotationFile {
        let records = |ps: &[PersonInstance]| ps.iter().map(|p| AnnotationRecord::from_person(p, image_id)).collect::<Vec<_>>();
        AnnotationFile {
            annotations: records(&self.noisy_persons),
            true_annotations: Some(records(&self.persons)),
            scene: Some(SceneMeta {
                height: self.height,
                width: self.width,
                seed: self.seed,
                jitter_coeff: self.jitter_coeff,
                scales: self.scales.clone(),
            }),
        }
    }

    pub fn from_annotation_file(file: &AnnotationFile) -> Result<Self> {
        let meta = file
            .scene
            .as_ref()
            .ok_or_else(|| Error::invalid("scene", "annotation file has no `scene` block"))?;
        let noisy_persons = file.persons()?;
        let persons = match &file.true_annotations {
            Some(t) => t.iter().map(AnnotationRecord::to_person).collect::<Result<Vec<_>>>()?,
            None => noisy_persons.clone(),
        };
        if persons.len() != noisy_persons.len() || meta.scales.len() != persons.len() {
            return Err(Error::dimension(
                format!("{} persons", noisy_persons.len()),
                format!("{} true persons and {} scales", persons.len(), meta.scales.len()),
            ));
        }
        Ok(SyntheticScene {
            height: meta.height,
            width: meta.width,
            persons,
            noisy_persons,
            scales: meta.scales.clone(),
            jitter_coeff: meta.jitter_coeff,
            seed: meta.seed,
        })
    }
}

/// Sampling ranges for [`augment`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    pub translation: (f64, f64),
    /// Flip with probability 1/2 when set.
    pub hflip: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            rotation_deg: (-30.0, 30.0),
            scale: (0.75, 1.25),
            translation: (-40.0, 40.0),
            hflip: true,
        }
    }
}

impl AugmentParams {
    pub fn identity() -> Self {
        AugmentParams {
            rotation_deg: (0.0, 0.0),
            scale: (1.0, 1.0),
            translation: (0.0, 0.0),
            hflip: false,
        }
    }
}

/// Mirror about the vertical center line, then rotate and scale about the
/// canvas center, then translate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine {
    pub flip: bool,
    pub angle_deg: f64,
    pub scale: f64,
    pub tx: f64,
    pub ty: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Affine {
    pub fn identity(height: usize, width: usize) -> Self {
        Affine {
            flip: false,
            angle_deg: 0.0,
            scale: 1.0,
            tx: 0.0,
            ty: 0.0,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let x = if self.flip { 2.0 * self.cx - x } else { x };
        let (sin, cos) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        (
            self.cx + self.scale * (cos * dx - sin * dy) + self.tx,
            self.cy + self.scale * (sin * dx + cos * dy) + self.ty,
        )
    }

    fn apply_person(&self, person: &PersonInstance, height: usize, width: usize) -> PersonInstance {
        let k = person.keypoints.len();
        let mut keypoints = person.keypoints.clone();
        for (i, kp) in person.keypoints.iter().enumerate() {
            let j = if self.flip { flip_partner(i, k) } else { i };
            let (x, y) = self.apply(kp.x, kp.y);
            let inside = (0.0..=width as f64 - 1.0).contains(&x) && (0.0..=height as f64 - 1.0).contains(&y);
            keypoints[j] = KeypointAnnotation {
                x,
                y,
                visibility: if inside { kp.visibility } else { Visibility::NotLabeled },
            };
        }
        let bbox = BBox::around(&keypoints).unwrap_or_default();
        PersonInstance {
            keypoints,
            bbox,
            area: person.area * self.scale * self.scale,
        }
    }

    pub fn apply_scene(&self, scene: &SyntheticScene) -> SyntheticScene {
        let map = |ps: &[PersonInstance]| ps.iter().map(|p| self.apply_person(p, scene.height, scene.width)).collect();
        SyntheticScene {
            persons: map(&scene.persons),
            noisy_persons: map(&scene.noisy_persons),
            scales: scene.scales.iter().map(|s| s * self.scale).collect(),
            ..scene.clone()
        }
    }
}

fn flip_partner(k: usize, channels: usize) -> usize {
    if channels != COCO_KEYPOINTS {
        return k;
    }
    COCO_FLIP_PAIRS
        .iter()
        .find_map(|&(a, b)| {
            if a == k {
                Some(b)
            } else if b == k {
                Some(a)
            } else {
                None
            }
        })
        .unwrap_or(k)
}

pub fn sample_affine(params: &AugmentParams, height: usize, width: usize, seed: u64) -> Affine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Affine {
        flip: params.hflip && rng.gen_bool(0.5),
        angle_deg: uniform(&mut rng, params.rotation_deg),
        scale: uniform(&mut rng, params.scale),
        tx: uniform(&mut rng, params.translation),
        ty: uniform(&mut rng, params.translation),
        ..Affine::identity(height, width)
    }
}

/// Applies one sampled transform to true and noisy labels alike. Keypoints
/// that leave the canvas become unlabeled.
pub fn augment(scene: &SyntheticScene, params: &AugmentParams, seed: u64) -> Result<SyntheticScene> {
    for (name, (lo, hi)) in [
        ("rotation_range", params.rotation_deg),
        ("scale_range", params.scale),
        ("translation_range", params.translation),
    ] {
        if !(lo <= hi) {
            return Err(Error::invalid(name, format!("range [{lo}, {hi}] is not ordered")));
        }
    }
    ensure_positive("scale_range.min", params.scale.0)?;
    Ok(sample_affine(params, scene.height, scene.width, seed).apply_scene(scene))
}
