//! Translating codes and curves through a pipeline, and neighbor weights for
//! decoding in the target's original space.

use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};
use crate::geometry::{Direction, Vec2};
use crate::pipeline::AlignmentPipeline;

/// Distances below this count as exact hits in inverse-distance weighting.
pub const DISTANCE_FLOOR: f64 = 1e-12;
pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationResult {
    pub target_position: Vec2,
    /// Face of the target canonical square the code lands in.
    pub predicted_class: Label,
    /// Class used for the source translation (nearest training sample).
    pub source_class: Label,
    pub extrapolated: bool,
    /// Position after each stage, in application order.
    pub stage_trace: Vec<Vec2>,
}

/// Index of the sample nearest to `q`; ties go to the lower index.
fn nearest_sample(cloud: &LabeledPointCloud, q: Vec2) -> Option<usize> {
    cloud
        .samples()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.position.dist(q).total_cmp(&b.1.position.dist(q)).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
}

/// Translates an unlabeled source code. Its class offset comes from the
/// nearest source training sample.
pub fn translate_point(pipeline: &AlignmentPipeline, code: Vec2) -> Result<TranslationResult> {
    let cloud = &pipeline.source.cloud;
    let i = nearest_sample(cloud, code).ok_or_else(|| Error::InvalidCloud("source cloud is empty".into()))?;
    translate_labeled(pipeline, code, cloud.samples()[i].label)
}

/// Translates a code whose source class is known.
pub fn translate_labeled(pipeline: &AlignmentPipeline, code: Vec2, label: Label) -> Result<TranslationResult> {
    let e = pipeline.forward(code, label)?;
    Ok(TranslationResult {
        target_position: e.point,
        predicted_class: pipeline.target.canonical.locate_class(e.canonical()),
        source_class: label,
        extrapolated: e.extrapolated,
        stage_trace: e.trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveTranslation {
    pub points: Vec<TranslationResult>,
    /// Largest distance between consecutive translated points.
    pub max_gap: f64,
}

impl CurveTranslation {
    /// Number of class changes along the translated sequence.
    pub fn transitions(&self) -> usize {
        self.points.windows(2).filter(|w| w[0].predicted_class != w[1].predicted_class).count()
    }
}

/// Points of `polyline` with `samples_per_segment` evenly spaced samples per
/// segment, the final vertex included once.
pub fn densify(polyline: &[Vec2], samples_per_segment: usize) -> Vec<Vec2> {
    let k = samples_per_segment.max(1);
    let mut out = Vec::with_capacity(polyline.len().saturating_sub(1) * k + 1);
    for w in polyline.windows(2) {
        for j in 0..k {
            out.push(w[0].lerp(w[1], j as f64 / k as f64));
        }
    }
    if let Some(&last) = polyline.last() {
        out.push(last);
    }
    out
}

fn max_gap(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].dist(w[1])).fold(0.0, f64::max)
}

/// Translates a source-space polyline sample by sample.
pub fn translate_curve(
    pipeline: &AlignmentPipeline,
    polyline: &[Vec2],
    samples_per_segment: usize,
) -> Result<CurveTranslation> {
    let points = densify(polyline, samples_per_segment)
        .into_iter()
        .map(|p| translate_point(pipeline, p))
        .collect::<Result<Vec<_>>>()?;
    let positions: Vec<Vec2> = points.iter().map(|r| r.target_position).collect();
    Ok(CurveTranslation { max_gap: max_gap(&positions), points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalCurve {
    /// Images in the target canonical square.
    pub points: Vec<Vec2>,
    pub classes: Vec<Label>,
    /// Largest distance between consecutive input samples.
    pub step: f64,
    pub max_gap: f64,
    /// Largest per-triangle operator norm of the registration.
    pub operator_norm: f64,
}

impl CanonicalCurve {
    pub fn transitions(&self) -> usize {
        self.classes.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Gap bound `C * step` from the registration's operator norm.
    pub fn gap_bound(&self) -> f64 {
        self.operator_norm * self.step
    }
}

/// Maps a polyline given in the source canonical square through the
/// registration and classifies each sample by target face.
pub fn translate_canonical_curve(
    pipeline: &AlignmentPipeline,
    polyline: &[Vec2],
    samples_per_segment: usize,
) -> CanonicalCurve {
    let input = densify(polyline, samples_per_segment);
    let points: Vec<Vec2> = input.iter().map(|&p| pipeline.registration.forward(p).point).collect();
    let classes = points.iter().map(|&p| pipeline.target.canonical.locate_class(p)).collect();
    CanonicalCurve {
        step: max_gap(&input),
        max_gap: max_gap(&points),
        operator_norm: pipeline.registration.max_operator_norm(Direction::Forward),
        points,
        classes,
    }
}

/// The `k` training samples nearest to `position` with inverse-distance
/// weights summing to one. An exact hit returns that sample alone.
pub fn knn_decode_weights(cloud: &LabeledPointCloud, position: Vec2, k: usize) -> Result<Vec<(u64, f64)>> {
    if k == 0 || k > cloud.len() {
        return Err(Error::InvalidCloud(format!("k = {k} outside 1..={}", cloud.len())));
    }
    let mut order: Vec<(f64, usize)> =
        cloud.samples().iter().enumerate().map(|(i, s)| (s.position.dist(position), i)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order.truncate(k);
    if order[0].0 <= DISTANCE_FLOOR {
        return Ok(vec![(cloud.samples()[order[0].1].id, 1.0)]);
    }
    let inv: Vec<f64> = order.iter().map(|(d, _)| 1.0 / d.max(DISTANCE_FLOOR)).collect();
    let total: f64 = inv.iter().sum();
    Ok(order.iter().zip(&inv).map(|(&(_, i), w)| (cloud.samples()[i].id, w / total)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Sample;

    fn cloud() -> LabeledPointCloud {
        let pts = [(0.0, 0.0), (2.0, 0.0), (5.0, 5.0), (1.0, 3.0), (-4.0, 1.0)];
        let samples = pts
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| Sample { id: 10 + i as u64, position: Vec2::new(x, y), label: 0 })
            .collect();
        LabeledPointCloud::from_samples(samples).unwrap()
    }

    #[test]
    fn exact_hit_has_full_weight() {
        assert_eq!(knn_decode_weights(&cloud(), Vec2::new(5.0, 5.0), 3).unwrap(), vec![(12, 1.0)]);
    }

    #[test]
    fn midpoint_splits_evenly() {
        let w = knn_decode_weights(&cloud(), Vec2::new(1.0, 0.0), 2).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w[0].1 - 0.5).abs() < 1e-15 && (w[1].1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn k_out_of_range() {
        assert!(knn_decode_weights(&cloud(), Vec2::ZERO, 0).is_err());
        assert!(knn_decode_weights(&cloud(), Vec2::ZERO, 6).is_err());
    }

    #[test]
    fn densify_keeps_ends() {
        let d = densify(&[Vec2::ZERO, Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)], 4);
        assert_eq!(d.len(), 9);
        assert_eq!(d[4], Vec2::new(1.0, 0.0));
        assert_eq!(*d.last().unwrap(), Vec2::new(1.0, 1.0));
        assert_eq!(densify(&[Vec2::new(2.0, 3.0)], 32), vec![Vec2::new(2.0, 3.0)]);
    }
}
