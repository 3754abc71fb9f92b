//! COCO-compatible keypoint annotation files.
//!
//! Only `keypoints`, `bbox`, `area` and `image_id` are read from each entry
//! of the top-level `annotations` array. Scene exports add a parallel
//! `true_annotations` array and an optional `scene` block.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{BBox, KeypointAnnotation, PersonInstance, Visibility};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub keypoints: Vec<f64>,
    pub bbox: [f64; 4],
    pub area: f64,
    #[serde(default)]
    pub image_id: u64,
}

/// Generation metadata carried by exported synthetic scenes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub height: usize,
    pub width: usize,
    pub seed: u64,
    pub jitter_coeff: f64,
    pub scales: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub annotations: Vec<AnnotationRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_annotations: Option<Vec<AnnotationRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneMeta>,
}

impl AnnotationRecord {
    pub fn from_person(person: &PersonInstance, image_id: u64) -> Self {
        let keypoints = person.keypoints.iter().flat_map(|k| [k.x, k.y, k.visibility.flag() as f64]).collect();
        let b = person.bbox;
        AnnotationRecord {
            keypoints,
            bbox: [b.x, b.y, b.w, b.h],
            area: person.area,
            image_id,
        }
    }

    pub fn to_person(&self) -> Result<PersonInstance> {
        if self.keypoints.len() % 3 != 0 {
            return Err(Error::invalid(
                "keypoints",
                format!("flat array length {} is not a multiple of 3", self.keypoints.len()),
            ));
        }
        let keypoints = self
            .keypoints
            .chunks_exact(3)
            .map(|c| {
                Ok(KeypointAnnotation {
                    x: c[0],
                    y: c[1],
                    visibility: Visibility::from_flag(c[2])?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let [x, y, w, h] = self.bbox;
        PersonInstance::new(keypoints, BBox { x, y, w, h }, self.area)
    }
}

impl AnnotationFile {
    pub fn from_persons(persons: &[PersonInstance], image_id: u64) -> Self {
        AnnotationFile {
            annotations: persons.iter().map(|p| AnnotationRecord::from_person(p, image_id)).collect(),
            true_annotations: None,
            scene: None,
        }
    }

    pub fn persons(&self) -> Result<Vec<PersonInstance>> {
        self.annotations.iter().map(AnnotationRecord::to_person).collect()
    }

    /// Persons grouped by `image_id`, in ascending id order.
    pub fn persons_by_image(&self) -> Result<BTreeMap<u64, Vec<PersonInstance>>> {
        let mut out: BTreeMap<u64, Vec<PersonInstance>> = BTreeMap::new();
        for rec in &self.annotations {
            out.entry(rec.image_id).or_default().push(rec.to_person()?);
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }
}
