//! Inference path: peak finding, quarter-pixel refinement, multi-resolution
//! aggregation, flip merging and greedy tag grouping.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{HeatmapStack, Shape};

/// A keypoint candidate. `score` is the heatmap value at the integer peak.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub channel: usize,
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub tag: Option<f64>,
}

/// One grouped person: at most one detection per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseGroup {
    pub keypoints: Vec<Option<Detection>>,
    pub group_score: f64,
    pub group_tag: f64,
}

impl PoseGroup {
    pub fn empty(channels: usize) -> Self {
        PoseGroup {
            keypoints: vec![None; channels],
            group_score: 0.0,
            group_tag: 0.0,
        }
    }

    /// Builds a group from explicit slots, recomputing the score and tag.
    pub fn from_slots(keypoints: Vec<Option<Detection>>) -> Self {
        let present: Vec<&Detection> = keypoints.iter().flatten().collect();
        let n = present.len().max(1) as f64;
        let group_score = present.iter().map(|d| d.score).sum::<f64>() / n;
        let group_tag = present.iter().map(|d| d.tag.unwrap_or(0.0)).sum::<f64>() / n;
        PoseGroup {
            keypoints,
            group_score,
            group_tag,
        }
    }

    pub fn present(&self) -> usize {
        self.keypoints.iter().flatten().count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodeParams {
    pub max_per_channel: usize,
    pub score_floor: f64,
    pub tag_threshold: f64,
    pub refine: bool,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            max_per_channel: 20,
            score_floor: 0.1,
            tag_threshold: 1.0,
            refine: true,
        }
    }
}

const NEIGHBORS: [(i64, i64); 8] = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];

/// Whether `(x, y)` is the maximum of its 3x3 neighborhood. Equal neighbors
/// are resolved toward the smaller row-major index; a cell with no strictly
/// lower neighbor (a flat plateau) is not a peak.
fn is_peak(plane: &[f64], width: usize, height: usize, x: usize, y: usize) -> bool {
    let idx = y * width + x;
    let v = plane[idx];
    let mut any_lower = false;
    let mut any_neighbor = false;
    for (dx, dy) in NEIGHBORS {
        let (nx, ny) = (x as i64 + dx, y as i64 + dy);
        if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
            continue;
        }
        any_neighbor = true;
        let nidx = ny as usize * width + nx as usize;
        let nv = plane[nidx];
        if nv > v || (nv == v && nidx < idx) {
            return false;
        }
        if nv < v {
            any_lower = true;
        }
    }
    any_lower || !any_neighbor
}

fn by_score_desc(a: &Detection, b: &Detection) -> Ordering {
    b.score.partial_cmp(&a.score).unwrap_or(Ordering::Equal)
}

/// Local maxima per channel with value `>= score_floor`, the best
/// `max_per_channel` of each channel by score, channel-major.
pub fn find_peaks(pred: &HeatmapStack, max_per_channel: usize, score_floor: f64) -> Result<Vec<Detection>> {
    if max_per_channel == 0 {
        return Err(Error::invalid("max_per_channel", "must be >= 1"));
    }
    let Shape { channels, height, width } = pred.shape();
    let mut out = Vec::new();
    for k in 0..channels {
        let plane = pred.channel(k);
        let mut peaks = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let v = plane[y * width + x];
                if v >= score_floor && is_peak(plane, width, height, x, y) {
                    peaks.push(Detection {
                        channel: k,
                        x: x as f64,
                        y: y as f64,
                        score: v,
                        tag: None,
                    });
                }
            }
        }
        // stable: equal scores keep row-major order
        peaks.sort_by(by_score_desc);
        peaks.truncate(max_per_channel);
        out.extend(peaks);
    }
    Ok(out)
}

/// Shifts a peak a quarter pixel toward its larger neighbor on each axis.
/// Border cells and exact ties are left in place.
pub fn refine_subpixel(pred: &HeatmapStack, det: &Detection) -> Detection {
    let shape = pred.shape();
    let (x, y) = (det.x.round() as usize, det.y.round() as usize);
    let k = det.channel;
    let shift = |lo: f64, hi: f64| match hi.partial_cmp(&lo) {
        Some(Ordering::Greater) => 0.25,
        Some(Ordering::Less) => -0.25,
        _ => 0.0,
    };
    let dx = if x > 0 && x + 1 < shape.width {
        shift(pred.get(k, x - 1, y), pred.get(k, x + 1, y))
    } else {
        0.0
    };
    let dy = if y > 0 && y + 1 < shape.height {
        shift(pred.get(k, x, y - 1), pred.get(k, x, y + 1))
    } else {
        0.0
    };
    Detection {
        x: x as f64 + dx,
        y: y as f64 + dy,
        ..*det
    }
}

/// Reads each detection's tag at its integer cell. `tags` holds either one
/// channel per keypoint type or a single shared channel.
pub fn attach_tags(detections: &[Detection], tags: &HeatmapStack) -> Result<Vec<Detection>> {
    let shape = tags.shape();
    detections
        .iter()
        .map(|d| {
            let k = if shape.channels == 1 { 0 } else { d.channel };
            let (x, y) = (d.x.round() as usize, d.y.round() as usize);
            if k >= shape.channels || x >= shape.width || y >= shape.height {
                return Err(Error::dimension(format!("tag map covering channel {} at ({x}, {y})", d.channel), shape));
            }
            Ok(Detection {
                tag: Some(tags.get(k, x, y)),
                ..*d
            })
        })
        .collect()
}

/// Bilinear resampling with half-pixel-centered alignment.
pub fn resize_bilinear(stack: &HeatmapStack, height: usize, width: usize) -> HeatmapStack {
    let src = stack.shape();
    if (src.height, src.width) == (height, width) {
        return stack.clone();
    }
    let dst = Shape::new(src.channels, height, width);
    let mut out = HeatmapStack::zeros(dst);
    if src.plane() == 0 {
        return out;
    }
    let taps = |dst_len: usize, src_len: usize| -> Vec<(usize, usize, f64)> {
        let ratio = src_len as f64 / dst_len as f64;
        (0..dst_len)
            .map(|i| {
                let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, src_len as f64 - 1.0);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let xs = taps(width, src.width);
    let ys = taps(height, src.height);
    for k in 0..src.channels {
        for (y, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (x, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = stack.get(k, x0, y0) * (1.0 - fx) + stack.get(k, x1, y0) * fx;
                let bottom = stack.get(k, x0, y1) * (1.0 - fx) + stack.get(k, x1, y1) * fx;
                out.set(k, x, y, top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

/// Resamples every stack to `height x width` and averages them.
pub fn aggregate_heatmaps(stacks: &[HeatmapStack], height: usize, width: usize) -> Result<HeatmapStack> {
    let first = stacks.first().ok_or_else(|| Error::invalid("stacks", "at least one stack is required"))?;
    let channels = first.shape().channels;
    let shape = Shape::new(channels, height, width);
    let mut acc = HeatmapStack::zeros(shape);
    for s in stacks {
        if s.shape().channels != channels {
            return Err(Error::dimension(format!("{channels} channels"), s.shape().channels));
        }
        let r = resize_bilinear(s, height, width);
        for (a, v) in acc.as_mut_slice().iter_mut().zip(r.as_slice()) {
            *a += v;
        }
    }
    let n = stacks.len() as f64;
    Ok(acc.map(|v| v / n))
}

/// Channel permutation described by left/right pairs; unpaired channels map
/// to themselves.
pub fn flip_permutation(channels: usize, pairs: &[(usize, usize)]) -> Result<Vec<usize>> {
    let mut perm: Vec<Option<usize>> = vec![None; channels];
    for &(a, b) in pairs {
        if a >= channels || b >= channels {
            return Err(Error::invalid(
                "flip_pairs",
                format!("pair ({a}, {b}) out of range for {channels} channels"),
            ));
        }
        for (from, to) in [(a, b), (b, a)] {
            match perm[from] {
                Some(existing) if existing != to => {
                    return Err(Error::invalid("flip_pairs", format!("channel {from} is paired twice")));
                }
                _ => perm[from] = Some(to),
            }
        }
    }
    Ok(perm.into_iter().enumerate().map(|(k, p)| p.unwrap_or(k)).collect())
}

/// Mirrors `stack` horizontally and swaps paired channels.
pub fn mirror_and_swap(stack: &HeatmapStack, pairs: &[(usize, usize)]) -> Result<HeatmapStack> {
    let shape = stack.shape();
    let perm = flip_permutation(shape.channels, pairs)?;
    let mut out = HeatmapStack::zeros(shape);
    for (k, &src) in perm.iter().enumerate() {
        for y in 0..shape.height {
            for x in 0..shape.width {
                out.set(k, x, y, stack.get(src, shape.width - 1 - x, y));
            }
        }
    }
    Ok(out)
}

/// Averages `pred` with the un-flipped version of a prediction made on the
/// mirrored input.
pub fn flip_merge(pred: &HeatmapStack, pred_flipped: &HeatmapStack, flip_pairs: &[(usize, usize)]) -> Result<HeatmapStack> {
    pred.shape().ensure_eq(&pred_flipped.shape())?;
    let restored = mirror_and_swap(pred_flipped, flip_pairs)?;
    pred.zip_map(&restored, |a, b| 0.5 * (a + b))
}

struct GroupAcc {
    slots: Vec<Option<Detection>>,
    tag_sum: f64,
    score_sum: f64,
    count: usize,
}

impl GroupAcc {
    fn tag(&self) -> f64 {
        self.tag_sum / self.count as f64
    }

    fn push(&mut self, det: Detection, tag: f64) {
        self.slots[det.channel] = Some(det);
        self.tag_sum += tag;
        self.score_sum += det.score;
        self.count += 1;
    }
}

/// Greedy one-dimensional associative-embedding grouping. Channels are
/// visited in index order and, within a channel, detections by descending
/// score. A detection joins the open group with the nearest mean tag when
/// the distance is below `tag_threshold`; otherwise it starts a new group.
/// Missing tags count as 0.
pub fn group_by_tags(detections: &[Detection], channels: usize, tag_threshold: f64) -> Vec<PoseGroup> {
    let mut groups: Vec<GroupAcc> = Vec::new();
    for k in 0..channels {
        let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.channel == k).collect();
        dets.sort_by(|a, b| by_score_desc(a, b));
        for det in dets {
            let tag = det.tag.unwrap_or(0.0);
            let nearest = groups
                .iter()
                .enumerate()
                .filter(|(_, g)| g.slots[k].is_none())
                .map(|(i, g)| (i, (g.tag() - tag).abs()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal));
            match nearest {
                Some((i, dist)) if dist < tag_threshold => groups[i].push(*det, tag),
                _ => {
                    let mut g = GroupAcc {
                        slots: vec![None; channels],
                        tag_sum: 0.0,
                        score_sum: 0.0,
                        count: 0,
                    };
                    g.push(*det, tag);
                    groups.push(g);
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|g| PoseGroup {
            group_score: g.score_sum / g.count as f64,
            group_tag: g.tag(),
            keypoints: g.slots,
        })
        .collect()
}

/// Peaks, optional refinement, optional tags, grouping.
pub fn decode(pred: &HeatmapStack, tags: Option<&HeatmapStack>, params: &DecodeParams) -> Result<Vec<PoseGroup>> {
    let mut dets = find_peaks(pred, params.max_per_channel, params.score_floor)?;
    if let Some(t) = tags {
        if (t.shape().height, t.shape().width) != (pred.shape().height, pred.shape().width) {
            return Err(Error::dimension(pred.shape(), t.shape()));
        }
        dets = attach_tags(&dets, t)?;
    }
    if params.refine {
        dets = dets.iter().map(|d| refine_subpixel(pred, d)).collect();
    }
    Ok(group_by_tags(&dets, pred.shape().channels, params.tag_threshold))
}

/// COCO results entry: `{"keypoints": [x1, y1, s1, ...], "score": g}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub keypoints: Vec<f64>,
    pub score: f64,
    #[serde(default)]
    pub image_id: u64,
    #[serde(default = "default_category")]
    pub category_id: u64,
}

fn default_category() -> u64 {
    1
}

impl PoseRecord {
    pub fn from_group(group: &PoseGroup, image_id: u64) -> Self {
        let keypoints = group
            .keypoints
            .iter()
            .flat_map(|slot| match slot {
                Some(d) => [d.x, d.y, d.score],
                None => [0.0, 0.0, 0.0],
            })
            .collect();
        PoseRecord {
            keypoints,
            score: group.group_score,
            image_id,
            category_id: 1,
        }
    }

    /// Slots with a positive keypoint score are treated as present.
    pub fn to_group(&self) -> Result<PoseGroup> {
        if self.keypoints.len() % 3 != 0 {
            return Err(Error::invalid(
                "keypoints",
                format!("length {} is not a multiple of 3", self.keypoints.len()),
            ));
        }
        let slots = self
            .keypoints
            .chunks_exact(3)
            .enumerate()
            .map(|(k, c)| {
                (c[2] > 0.0).then_some(Detection {
                    channel: k,
                    x: c[0],
                    y: c[1],
                    score: c[2],
                    tag: None,
                })
            })
            .collect();
        let mut group = PoseGroup::from_slots(slots);
        group.group_score = self.score;
        Ok(group)
    }
}

pub fn write_poses(records: &[PoseRecord], path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(records)?)?;
    Ok(())
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode_gaussian, BBox, KeypointAnnotation, PersonInstance, Visibility};

    fn person(points: &[(usize, f64, f64)], k: usize) -> PersonInstance {
        let mut kps = vec![
            KeypointAnnotation {
                x: 0.0,
                y: 0.0,
                visibility: Visibility::NotLabeled
            };
            k
        ];
        for &(c, x, y) in points {
            kps[c] = KeypointAnnotation::visible(x, y);
        }
        PersonInstance::new(kps, BBox::default(), 0.0).unwrap()
    }

    fn det(channel: usize, score: f64, tag: f64) -> Detection {
        Detection {
            channel,
            x: 0.0,
            y: 0.0,
            score,
            tag: Some(tag),
        }
    }

    #[test]
    fn single_keypoint_gives_one_peak_at_rounded_cell() {
        let shape = Shape::new(1, 32, 32);
        let h = encode_gaussian(&[person(&[(0, 12.3, 17.8)], 1)], 2.0, shape).unwrap();
        let peaks = find_peaks(&h, 5, 0.0).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].x, peaks[0].y), (12.0, 18.0));
        assert_eq!(peaks[0].score, h.get(0, 12, 18));
    }

    #[test]
    fn uniform_stack_has_no_peaks() {
        let h = HeatmapStack::filled(Shape::new(2, 8, 8), 0.5);
        assert!(find_peaks(&h, 5, 0.0).unwrap().is_empty());
        assert!(find_peaks(&h, 0, 0.0).is_err());
    }

    #[test]
    fn exact_tie_resolves_to_smaller_index() {
        let mut h = HeatmapStack::zeros(Shape::new(1, 5, 5));
        h.set(0, 2, 2, 1.0);
        h.set(0, 3, 2, 1.0);
        let peaks = find_peaks(&h, 5, 0.1).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].x, peaks[0].y), (2.0, 2.0));
    }

    #[test]
    fn two_separated_gaussians() {
        let shape = Shape::new(1, 32, 32);
        let h = encode_gaussian(&[person(&[(0, 10.0, 12.0)], 1), person(&[(0, 20.0, 12.0)], 1)], 2.0, shape).unwrap();
        let mut peaks = find_peaks(&h, 5, 0.1).unwrap();
        peaks.sort_by(|a, b| a.x.partial_cmp(&b.x).unwrap());
        let cells: Vec<_> = peaks.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(cells, vec![(10.0, 12.0), (20.0, 12.0)]);
    }

    #[test]
    fn score_floor_and_cap() {
        let mut h = HeatmapStack::zeros(Shape::new(1, 9, 9));
        h.set(0, 1, 1, 0.9);
        h.set(0, 4, 4, 0.5);
        h.set(0, 7, 7, 0.05);
        let peaks = find_peaks(&h, 5, 0.1).unwrap();
        assert_eq!(peaks.iter().map(|p| p.score).collect::<Vec<_>>(), vec![0.9, 0.5]);
        assert_eq!(find_peaks(&h, 1, 0.0).unwrap().len(), 1);
    }

    #[test]
    fn refinement() {
        let shape = Shape::new(1, 32, 32);
        let centered = encode_gaussian(&[person(&[(0, 16.0, 16.0)], 1)], 2.0, shape).unwrap();
        let p = find_peaks(&centered, 1, 0.0).unwrap()[0];
        assert_eq!(refine_subpixel(&centered, &p), p);

        let off = encode_gaussian(&[person(&[(0, 16.3, 15.7)], 1)], 2.0, shape).unwrap();
        let p = find_peaks(&off, 1, 0.0).unwrap()[0];
        let r = refine_subpixel(&off, &p);
        assert_eq!((r.x, r.y), (16.25, 15.75));

        let border = encode_gaussian(&[person(&[(0, 0.2, 31.0)], 1)], 2.0, shape).unwrap();
        let p = find_peaks(&border, 1, 0.0).unwrap()[0];
        assert_eq!((p.x, p.y), (0.0, 31.0));
        assert_eq!(refine_subpixel(&border, &p), p);
    }

    #[test]
    fn aggregation_examples() {
        let shape = Shape::new(2, 6, 8);
        let a = HeatmapStack::from_vec(shape, (0..shape.len()).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        assert_eq!(aggregate_heatmaps(std::slice::from_ref(&a), 6, 8).unwrap(), a);
        assert_eq!(aggregate_heatmaps(&[a.clone(), a.clone()], 6, 8).unwrap(), a);
        let lo = HeatmapStack::filled(Shape::new(2, 3, 4), 0.2);
        let hi = HeatmapStack::filled(Shape::new(2, 12, 16), 0.6);
        let m = aggregate_heatmaps(&[lo, hi], 6, 8).unwrap();
        assert!(m.as_slice().iter().all(|&v| (v - 0.4).abs() < 1e-12));
        let wrong = HeatmapStack::zeros(Shape::new(3, 6, 8));
        assert!(aggregate_heatmaps(&[a, wrong], 6, 8).is_err());
    }

    #[test]
    fn flip_examples() {
        let shape = Shape::new(3, 4, 5);
        let pred = HeatmapStack::from_vec(shape, (0..shape.len()).map(|i| ((i * 37) % 11) as f64).collect()).unwrap();
        let pairs = [(1, 2)];
        let consistent = mirror_and_swap(&pred, &pairs).unwrap();
        assert_eq!(flip_merge(&pred, &consistent, &pairs).unwrap(), pred);

        let single = Shape::new(1, 1, 3);
        let p = HeatmapStack::from_vec(single, vec![1.0, 2.0, 6.0]).unwrap();
        let merged = flip_merge(&p, &p, &[(0, 0)]).unwrap();
        assert_eq!(merged.as_slice(), &[3.5, 2.0, 3.5]);

        let zeros = HeatmapStack::zeros(shape);
        let ones = HeatmapStack::filled(shape, 1.0);
        assert!(flip_merge(&zeros, &ones, &pairs).unwrap().as_slice().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn malformed_flip_pairs() {
        assert!(flip_permutation(3, &[(0, 3)]).is_err());
        assert!(flip_permutation(3, &[(0, 1), (1, 2)]).is_err());
        assert_eq!(flip_permutation(3, &[(0, 1), (1, 0)]).unwrap(), vec![1, 0, 2]);
    }

    #[test]
    fn grouping_examples() {
        let close = group_by_tags(&[det(0, 0.9, 0.0), det(1, 0.8, 0.1)], 2, 0.5);
        assert_eq!(close.len(), 1);
        assert_eq!(close[0].present(), 2);
        assert!((close[0].group_tag - 0.05).abs() < 1e-12);
        assert!((close[0].group_score - 0.85).abs() < 1e-12);

        let far = group_by_tags(&[det(0, 0.9, 0.0), det(1, 0.8, 5.0)], 2, 0.5);
        assert_eq!(far.len(), 2);
    }

    #[test]
    fn occupied_slot_forces_new_group() {
        let groups = group_by_tags(&[det(0, 0.9, 1.0), det(0, 0.8, 1.05)], 1, 0.5);
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn pose_record_round_trip() {
        let g = PoseGroup::from_slots(vec![
            Some(Detection {
                channel: 0,
                x: 1.5,
                y: 2.0,
                score: 0.8,
                tag: None,
            }),
            None,
        ]);
        let rec = PoseRecord::from_group(&g, 4);
        assert_eq!(rec.keypoints, vec![1.5, 2.0, 0.8, 0.0, 0.0, 0.0]);
        let text = serde_json::to_string(std::slice::from_ref(&rec)).unwrap();
        let back: Vec<PoseRecord> = serde_json::from_str(&text).unwrap();
        let g2 = back[0].to_group().unwrap();
        assert_eq!(g2.present(), 1);
        assert_eq!(g2.group_score, 0.8);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::seq::SliceRandom;
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;

        proptest! {
            #[test]
            fn aggregation_stays_in_input_range(vals in proptest::collection::vec(0.0f64..1.0, 12), h in 1usize..9, w in 1usize..9) {
                let a = HeatmapStack::from_vec(Shape::new(1, 3, 4), vals.clone()).unwrap();
                let b = HeatmapStack::from_vec(Shape::new(1, 4, 3), vals.iter().rev().cloned().collect()).unwrap();
                let (lo, hi) = a.min_max().unwrap();
                let m = aggregate_heatmaps(&[a, b], h, w).unwrap();
                for &v in m.as_slice() {
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }

            #[test]
            fn flip_merge_is_idempotent_on_consistent_inputs(vals in proptest::collection::vec(0.0f64..1.0, 3 * 4 * 5)) {
                let pred = HeatmapStack::from_vec(Shape::new(3, 4, 5), vals).unwrap();
                let pairs = [(0, 2)];
                let once = flip_merge(&pred, &mirror_and_swap(&pred, &pairs).unwrap(), &pairs).unwrap();
                let twice = flip_merge(&once, &mirror_and_swap(&once, &pairs).unwrap(), &pairs).unwrap();
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn well_separated_tags_recover_partition(seed in any::<u64>(), persons in 1usize..5, channels in 1usize..8) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let threshold = 1.0;
                let mut dets = Vec::new();
                let mut owner = Vec::new();
                for p in 0..persons {
                    let center = p as f64 * 2.5 * threshold;
                    for k in 0..channels {
                        if rng.gen_bool(0.8) {
                            dets.push(Detection {
                                channel: k,
                                x: 0.0,
                                y: 0.0,
                                score: rng.gen_range(0.1..1.0),
                                tag: Some(center + rng.gen_range(-0.24..0.24) * threshold),
                            });
                            owner.push(p);
                        }
                    }
                }
                let mut order: Vec<usize> = (0..dets.len()).collect();
                order.shuffle(&mut rng);
                let shuffled: Vec<Detection> = order.iter().map(|&i| dets[i]).collect();
                let groups = group_by_tags(&shuffled, channels, threshold);
                let present: std::collections::BTreeSet<usize> = owner.iter().copied().collect();
                prop_assert_eq!(groups.len(), present.len());
                for g in &groups {
                    let owners: std::collections::BTreeSet<usize> = g
                        .keypoints
                        .iter()
                        .flatten()
                        .map(|d| (d.tag.unwrap() / (2.5 * threshold)).round() as usize)
                        .collect();
                    prop_assert_eq!(owners.len(), 1);
                }
            }
        }
    }
}
