//! Labeled 2D latent codes.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Class index.
pub type Label = u32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub position: Vec2,
    pub label: Label,
}

/// A set of 2D samples, each with a stable id and a class label in
/// `[0, class_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    samples: Vec<Sample>,
    class_count: usize,
}

impl LabeledPointCloud {
    pub fn new(samples: Vec<Sample>, class_count: usize) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id) {
                return Err(Error::InvalidCloud(format!("duplicate id {}", s.id)));
            }
            if s.label as usize >= class_count {
                return Err(Error::InvalidCloud(format!(
                    "sample {} has label {} outside [0, {class_count})",
                    s.id, s.label
                )));
            }
            if !s.position.is_finite() {
                return Err(Error::InvalidCloud(format!("sample {} has a non-finite position", s.id)));
            }
        }
        Ok(Self { samples, class_count })
    }

    /// Builds a cloud whose class count is one past the largest label.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let class_count = samples.iter().map(|s| s.label as usize + 1).max().unwrap_or(0);
        Self::new(samples, class_count)
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.samples.iter().map(|s| s.position).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    /// Sample indices grouped by label, for labels that occur.
    pub fn members(&self) -> BTreeMap<Label, Vec<usize>> {
        let mut out: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.samples.iter().enumerate() {
            out.entry(s.label).or_default().push(i);
        }
        out
    }

    pub fn present_labels(&self) -> Vec<Label> {
        self.members().into_keys().collect()
    }

    /// Same ids and labels, new positions.
    pub fn with_positions(&self, positions: &[Vec2]) -> Self {
        assert_eq!(positions.len(), self.samples.len());
        let samples = self
            .samples
            .iter()
            .zip(positions)
            .map(|(s, &p)| Sample { position: p, ..*s })
            .collect();
        Self { samples, class_count: self.class_count }
    }

    /// Keeps the samples for which `keep` returns true.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Sample) -> bool) -> Self {
        let samples = self
            .samples
            .iter()
            .enumerate()
            .filter(|(i, s)| keep(*i, s))
            .map(|(_, s)| *s)
            .collect();
        Self { samples, class_count: self.class_count }
    }

    /// Every present class must carry at least three samples so its region can
    /// be triangulated.
    pub fn check_triangulable(&self) -> Result<()> {
        for (label, idx) in self.members() {
            if idx.len() < 3 {
                return Err(Error::InvalidCloud(format!(
                    "class {label} has {} samples, at least 3 are required",
                    idx.len()
                )));
            }
        }
        Ok(())
    }

    pub fn index_of_id(&self, id: u64) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    /// Axis-aligned bounding box `(min, max)`; `None` when empty.
    pub fn bounds(&self) -> Option<(Vec2, Vec2)> {
        bounds_of(self.samples.iter().map(|s| s.position))
    }
}

pub(crate) fn bounds_of(points: impl IntoIterator<Item = Vec2>) -> Option<(Vec2, Vec2)> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let (mut lo, mut hi) = (first, first);
    for p in it {
        lo.x = lo.x.min(p.x);
        lo.y = lo.y.min(p.y);
        hi.x = hi.x.max(p.x);
        hi.y = hi.y.max(p.y);
    }
    Some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(id: u64, x: f64, y: f64, label: Label) -> Sample {
        Sample { id, position: Vec2::new(x, y), label }
    }

    #[test]
    fn rejects_duplicate_ids_and_bad_labels() {
        assert!(LabeledPointCloud::new(vec![s(1, 0.0, 0.0, 0), s(1, 1.0, 0.0, 0)], 1).is_err());
        assert!(LabeledPointCloud::new(vec![s(1, 0.0, 0.0, 2)], 2).is_err());
        assert!(LabeledPointCloud::new(vec![s(1, f64::NAN, 0.0, 0)], 1).is_err());
    }

    #[test]
    fn triangulability_needs_three_per_class() {
        let c = LabeledPointCloud::new(
            vec![s(0, 0.0, 0.0, 0), s(1, 1.0, 0.0, 0), s(2, 0.0, 1.0, 0), s(3, 5.0, 5.0, 1)],
            2,
        )
        .unwrap();
        assert!(c.check_triangulable().is_err());
        let c = c.filter(|_, s| s.label == 0);
        assert!(c.check_triangulable().is_ok());
    }
}
