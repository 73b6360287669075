//! Per-class translations of a labeled cloud.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};
use crate::geometry::{RegionAdjacency, Vec2};

pub const DEFAULT_MAX_SWEEPS: usize = 100;
pub const DEFAULT_MATCH_ITERATIONS: usize = 20;
pub const DEFAULT_OUTLIER_QUANTILE: f64 = 0.95;
const NUDGE_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: Label,
    pub barycenter: Vec2,
    /// Largest member distance from the barycenter.
    pub radius: f64,
    pub member_count: usize,
}

/// One translation per label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayoutTransform {
    pub translations: BTreeMap<Label, Vec2>,
}

impl LayoutTransform {
    pub fn identity(labels: impl IntoIterator<Item = Label>) -> Self {
        Self { translations: labels.into_iter().map(|l| (l, Vec2::ZERO)).collect() }
    }

    pub fn translation(&self, label: Label) -> Result<Vec2> {
        self.translations.get(&label).copied().ok_or(Error::UnmappedLabel(label))
    }

    pub fn forward(&self, label: Label, p: Vec2) -> Result<Vec2> {
        Ok(p + self.translation(label)?)
    }

    pub fn inverse(&self, label: Label, p: Vec2) -> Result<Vec2> {
        Ok(p - self.translation(label)?)
    }

    pub fn apply(&self, cloud: &LabeledPointCloud) -> Result<LabeledPointCloud> {
        let positions = cloud
            .samples()
            .iter()
            .map(|s| self.forward(s.label, s.position))
            .collect::<Result<Vec<_>>>()?;
        Ok(cloud.with_positions(&positions))
    }

    /// `self` after `first`.
    pub fn after(&self, first: &LayoutTransform) -> Result<LayoutTransform> {
        let mut translations = BTreeMap::new();
        for (&l, &t) in &first.translations {
            translations.insert(l, t + self.translation(l)?);
        }
        Ok(LayoutTransform { translations })
    }
}

/// Barycenter and radius of every class in `[0, class_count)`.
pub fn summarize_clusters(cloud: &LabeledPointCloud) -> Result<Vec<ClusterSummary>> {
    let members = cloud.members();
    (0..cloud.class_count() as Label)
        .map(|label| {
            let idx = members.get(&label).ok_or(Error::EmptyClass(label))?;
            let pts: Vec<Vec2> = idx.iter().map(|&i| cloud.samples()[i].position).collect();
            let barycenter = pts.iter().fold(Vec2::ZERO, |a, &p| a + p) / pts.len() as f64;
            let radius = pts.iter().map(|p| p.dist(barycenter)).fold(0.0, f64::max);
            Ok(ClusterSummary { label, barycenter, radius, member_count: pts.len() })
        })
        .collect()
}

fn translate_summaries(summaries: &[ClusterSummary], centers: &[Vec2]) -> LayoutTransform {
    LayoutTransform {
        translations: summaries.iter().zip(centers).map(|(s, &c)| (s.label, c - s.barycenter)).collect(),
    }
}

/// Smallest `r_ij - d_ij` slack over all pairs (non-negative when separated).
pub fn separation_slack(summaries: &[ClusterSummary], centers: &[Vec2]) -> f64 {
    let mut slack = f64::INFINITY;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d = centers[i].dist(centers[j]);
            slack = slack.min(d - (summaries[i].radius + summaries[j].radius));
        }
    }
    slack
}

/// Moves `centers[j]` along the line from `centers[i]` to the nearest point
/// at distance `r_ij` or more that also clears every lower-label cluster.
/// Clearing only the pair lets a cluster squeezed between two lower ones
/// bounce between them forever.
fn push_apart(summaries: &[ClusterSummary], centers: &mut [Vec2], i: usize, j: usize) {
    let origin = centers[i];
    let u = (centers[j] - origin) / centers[j].dist(origin);
    let mut t = summaries[i].radius + summaries[j].radius;
    loop {
        let p = origin + u * t;
        let mut next = t;
        let mut blocked = false;
        for k in 0..j {
            let reach = summaries[k].radius + summaries[j].radius;
            if p.dist(centers[k]) < reach {
                blocked = true;
                // Exit of the ray from the disc of radius `reach` around `centers[k]`.
                let w = origin - centers[k];
                let b = u.dot(w);
                let disc = (b * b - (w.norm2() - reach * reach)).max(0.0);
                next = next.max(-b + disc.sqrt());
            }
        }
        if !blocked {
            centers[j] = p;
            return;
        }
        t = if next > t { next } else { t * (1.0 + 4.0 * f64::EPSILON) };
    }
}

fn separate_centers(summaries: &[ClusterSummary], centers: &mut [Vec2], max_sweeps: usize) -> Result<()> {
    let big_r = summaries.iter().map(|s| s.radius).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            if centers[i] == centers[j] {
                centers[j].x += 1e-6 * big_r;
            }
        }
    }
    for _ in 0..max_sweeps {
        let mut moved = false;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let r = summaries[i].radius + summaries[j].radius;
                if centers[i].dist(centers[j]) < r {
                    push_apart(summaries, centers, i, j);
                    moved = true;
                }
            }
        }
        if !moved {
            return Ok(());
        }
    }
    if separation_slack(summaries, centers) >= 0.0 {
        Ok(())
    } else {
        Err(Error::NoConvergence(max_sweeps))
    }
}

/// Moves overlapping clusters apart until every pair satisfies `d_ij >= r_i + r_j`.
pub fn separate_clusters(cloud: &LabeledPointCloud, max_sweeps: usize) -> Result<(LabeledPointCloud, LayoutTransform)> {
    let summaries = summarize_clusters(cloud)?;
    let mut centers: Vec<Vec2> = summaries.iter().map(|s| s.barycenter).collect();
    separate_centers(&summaries, &mut centers, max_sweeps)?;
    let t = translate_summaries(&summaries, &centers);
    Ok((t.apply(cloud)?, t))
}

/// Number of grid columns used when none is given.
pub fn default_columns(class_count: usize) -> usize {
    (class_count as f64).sqrt().ceil().max(1.0) as usize
}

/// Places barycenters row-major on a grid with spacing `2R`, first row at
/// `y = 0` and rows going down. Odd rows shift right by half a spacing so
/// that no four clusters meet at one point.
pub fn grid_layout(cloud: &LabeledPointCloud, columns: usize) -> Result<(LabeledPointCloud, LayoutTransform)> {
    let summaries = summarize_clusters(cloud)?;
    let columns = columns.max(1);
    let big_r = summaries.iter().map(|s| s.radius).fold(0.0, f64::max);
    let spacing = if big_r > 0.0 { 2.0 * big_r } else { 1.0 };
    let centers: Vec<Vec2> = (0..summaries.len())
        .map(|k| {
            let (col, row) = (k % columns, k / columns);
            let shift = if row % 2 == 1 { 0.5 } else { 0.0 };
            Vec2::new((col as f64 + shift) * spacing, -(row as f64) * spacing)
        })
        .collect();
    let t = translate_summaries(&summaries, &centers);
    Ok((t.apply(cloud)?, t))
}

/// Drops samples whose distance to their class barycenter exceeds the
/// `quantile` of that class's distances.
pub fn remove_outliers(cloud: &LabeledPointCloud, quantile: f64) -> Result<LabeledPointCloud> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::InvalidCloud(format!("outlier quantile {quantile} outside [0, 1]")));
    }
    let summaries = summarize_clusters(cloud)?;
    let mut cutoff = BTreeMap::new();
    for (label, idx) in cloud.members() {
        let c = summaries[label as usize].barycenter;
        let mut d: Vec<f64> = idx.iter().map(|&i| cloud.samples()[i].position.dist(c)).collect();
        d.sort_by(f64::total_cmp);
        let k = ((quantile * d.len() as f64).ceil() as usize).clamp(1, d.len()) - 1;
        cutoff.insert(label, (c, d[k]));
    }
    Ok(cloud.filter(|_, s| {
        let (c, r) = cutoff[&s.label];
        s.position.dist(c) <= r
    }))
}

/// Translates each source cluster onto the barycenter of the target cluster
/// it corresponds to, then separates.
pub fn place_like_target(
    source: &LabeledPointCloud,
    target: &LabeledPointCloud,
    class_map: &BTreeMap<Label, Label>,
    max_sweeps: usize,
) -> Result<(LabeledPointCloud, LayoutTransform)> {
    let summaries = summarize_clusters(source)?;
    let target_summaries = summarize_clusters(target)?;
    let mut centers = Vec::with_capacity(summaries.len());
    for s in &summaries {
        let t = *class_map.get(&s.label).ok_or(Error::UnmappedLabel(s.label))?;
        let ts = target_summaries.get(t as usize).ok_or(Error::UnmappedLabel(t))?;
        centers.push(ts.barycenter);
    }
    separate_centers(&summaries, &mut centers, max_sweeps)?;
    let t = translate_summaries(&summaries, &centers);
    Ok((t.apply(source)?, t))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdjacencyReport {
    /// Pairs adjacent in `b` (mapped) but not in `a`.
    pub missing_pairs: Vec<(Label, Label)>,
    /// Pairs adjacent in `a` but not in `b`.
    pub extra_pairs: Vec<(Label, Label)>,
    /// Side contacts present in exactly one of the two, as (label, side).
    pub side_mismatches: Vec<(Label, usize)>,
}

impl AdjacencyReport {
    pub fn is_isomorphic(&self) -> bool {
        self.missing_pairs.is_empty() && self.extra_pairs.is_empty() && self.side_mismatches.is_empty()
    }

    pub fn mismatch_count(&self) -> usize {
        self.missing_pairs.len() + self.extra_pairs.len() + self.side_mismatches.len()
    }
}

impl std::fmt::Display for AdjacencyReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "missing pairs {:?}, extra pairs {:?}, side mismatches {:?}",
            self.missing_pairs, self.extra_pairs, self.side_mismatches
        )
    }
}

/// Compares `a` with `b` after relabeling `a` through `correspondence`.
/// Labels are reported in `b`'s labeling.
pub fn adjacency_isomorphic(
    a: &RegionAdjacency,
    b: &RegionAdjacency,
    correspondence: &BTreeMap<Label, Label>,
) -> Result<AdjacencyReport> {
    let mut images = std::collections::BTreeSet::new();
    for l in a.labels() {
        let t = *correspondence.get(&l).ok_or(Error::UnmappedLabel(l))?;
        if !images.insert(t) {
            return Err(Error::UnmappedLabel(l));
        }
    }
    let a = a.mapped(correspondence)?;
    Ok(AdjacencyReport {
        missing_pairs: b.pairs.difference(&a.pairs).copied().collect(),
        extra_pairs: a.pairs.difference(&b.pairs).copied().collect(),
        side_mismatches: a.side_contacts.symmetric_difference(&b.side_contacts).copied().collect(),
    })
}

#[derive(Debug, Clone)]
pub struct MatchOutcome {
    pub cloud: LabeledPointCloud,
    pub transform: LayoutTransform,
    pub rounds: usize,
}

/// Nudges clusters until `probe` (a full merge of the candidate layout)
/// reports the target adjacency. Clusters that must touch move toward each
/// other, clusters that must not touch move apart, each by a fraction of
/// their separation slack. The fraction halves whenever a round does not
/// reduce the mismatch count.
pub fn match_layout_to_target<F>(
    source: &LabeledPointCloud,
    target_adjacency: &RegionAdjacency,
    mut probe: F,
    max_iterations: usize,
) -> Result<MatchOutcome>
where
    F: FnMut(&LabeledPointCloud) -> Result<RegionAdjacency>,
{
    let summaries = summarize_clusters(source)?;
    let identity: BTreeMap<Label, Label> = summaries.iter().map(|s| (s.label, s.label)).collect();
    let mut centers: Vec<Vec2> = summaries.iter().map(|s| s.barycenter).collect();
    let mut factor = NUDGE_FACTOR;
    let mut last_mismatch = usize::MAX;
    for round in 0..=max_iterations {
        let t = translate_summaries(&summaries, &centers);
        let cloud = t.apply(source)?;
        let adjacency = probe(&cloud)?;
        let report = adjacency_isomorphic(&adjacency, target_adjacency, &identity)?;
        if report.is_isomorphic() {
            return Ok(MatchOutcome { cloud, transform: t, rounds: round });
        }
        log::debug!("layout round {round}: {report}");
        if round == max_iterations {
            break;
        }
        if report.mismatch_count() >= last_mismatch {
            factor *= 0.5;
        }
        last_mismatch = report.mismatch_count();
        let index = |l: Label| summaries.iter().position(|s| s.label == l);
        let mut deltas = vec![Vec2::ZERO; centers.len()];
        for (pairs, sign) in [(&report.missing_pairs, 1.0), (&report.extra_pairs, -1.0)] {
            for &(a, b) in pairs.iter() {
                let (Some(i), Some(j)) = (index(a), index(b)) else { continue };
                let d = centers[i].dist(centers[j]);
                let slack = d - (summaries[i].radius + summaries[j].radius);
                let step = if sign > 0.0 { factor * slack } else { factor * (slack.max(0.0) + summaries[i].radius + summaries[j].radius) };
                let u = (centers[i] - centers[j]) / d;
                // The higher label moves, as in separation.
                deltas[j] += u * (sign * step);
            }
        }
        for (c, d) in centers.iter_mut().zip(&deltas) {
            *c += *d;
        }
        separate_centers(&summaries, &mut centers, DEFAULT_MAX_SWEEPS)?;
    }
    Err(Error::NoConsistentLayout(max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::Sample;

    fn cloud(points: &[(f64, f64, Label)]) -> LabeledPointCloud {
        let samples = points
            .iter()
            .enumerate()
            .map(|(i, &(x, y, label))| Sample { id: i as u64, position: Vec2::new(x, y), label })
            .collect();
        LabeledPointCloud::from_samples(samples).unwrap()
    }

    #[test]
    fn singleton_and_pair_summaries() {
        let s = summarize_clusters(&cloud(&[(3.0, 4.0, 0), (0.0, 0.0, 1), (2.0, 0.0, 1)])).unwrap();
        assert_eq!(s[0].barycenter, Vec2::new(3.0, 4.0));
        assert_eq!(s[0].radius, 0.0);
        assert_eq!(s[1].barycenter, Vec2::new(1.0, 0.0));
        assert_eq!(s[1].radius, 1.0);
    }

    #[test]
    fn missing_class_is_reported() {
        let samples = vec![Sample { id: 0, position: Vec2::ZERO, label: 1 }];
        let c = LabeledPointCloud::new(samples, 2).unwrap();
        assert!(matches!(summarize_clusters(&c), Err(Error::EmptyClass(0))));
    }

    #[test]
    fn overlapping_pair_is_pushed_along_center_line() {
        // Radii 1 and 1, centers 1 apart.
        let c = cloud(&[(-1.0, 0.0, 0), (1.0, 0.0, 0), (0.0, 0.0, 1), (2.0, 0.0, 1)]);
        let (_, t) = separate_clusters(&c, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(t.translation(0).unwrap(), Vec2::ZERO);
        assert_eq!(t.translation(1).unwrap(), Vec2::new(1.0, 0.0));
    }

    #[test]
    fn separated_input_is_a_fixed_point() {
        let c = cloud(&[(0.0, 0.0, 0), (1.0, 0.0, 0), (5.0, 0.0, 1), (6.0, 0.0, 1)]);
        let (out, t) = separate_clusters(&c, DEFAULT_MAX_SWEEPS).unwrap();
        assert_eq!(out, c);
        assert!(t.translations.values().all(|v| *v == Vec2::ZERO));
    }

    #[test]
    fn coincident_barycenters_are_split() {
        let c = cloud(&[(-1.0, 0.0, 0), (1.0, 0.0, 0), (0.0, -1.0, 1), (0.0, 1.0, 1)]);
        let (out, _) = separate_clusters(&c, DEFAULT_MAX_SWEEPS).unwrap();
        let s = summarize_clusters(&out).unwrap();
        let centers: Vec<Vec2> = s.iter().map(|s| s.barycenter).collect();
        assert!(separation_slack(&s, &centers) >= 0.0);
    }

    #[test]
    fn grid_spacing_is_twice_the_largest_radius_with_odd_rows_shifted() {
        let mut pts = Vec::new();
        for l in 0..4 {
            let o = l as f64 * 0.3;
            pts.push((o - 1.5, o, l));
            pts.push((o + 1.5, o, l));
        }
        let (out, _) = grid_layout(&cloud(&pts), 2).unwrap();
        let centers: Vec<Vec2> = summarize_clusters(&out).unwrap().iter().map(|s| s.barycenter).collect();
        let want = [(0.0, 0.0), (3.0, 0.0), (1.5, -3.0), (4.5, -3.0)];
        for (c, w) in centers.iter().zip(want) {
            assert!((*c - Vec2::new(w.0, w.1)).norm() < 1e-12);
        }
    }

    #[test]
    fn single_cluster_moves_to_origin() {
        let (out, _) = grid_layout(&cloud(&[(5.0, 5.0, 0), (7.0, 5.0, 0)]), 1).unwrap();
        let s = summarize_clusters(&out).unwrap();
        assert!(s[0].barycenter.norm() < 1e-12);
    }

    #[test]
    fn outliers_beyond_quantile_are_dropped() {
        let mut pts: Vec<(f64, f64, Label)> = (0..19).map(|i| (i as f64 * 0.01, 0.0, 0)).collect();
        pts.push((50.0, 0.0, 0));
        let out = remove_outliers(&cloud(&pts), 0.95).unwrap();
        assert_eq!(out.len(), 19);
        assert!(out.samples().iter().all(|s| s.position.x < 1.0));
    }

    #[test]
    fn side_contact_difference_is_reported() {
        let vertical = RegionAdjacency {
            pairs: [(0, 1)].into(),
            side_contacts: [(0, 0), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2)].into(),
        };
        let horizontal = RegionAdjacency {
            pairs: [(0, 1)].into(),
            side_contacts: [(0, 0), (0, 1), (0, 3), (1, 1), (1, 2), (1, 3)].into(),
        };
        let id: BTreeMap<Label, Label> = [(0, 0), (1, 1)].into();
        assert!(adjacency_isomorphic(&vertical, &vertical, &id).unwrap().is_isomorphic());
        let r = adjacency_isomorphic(&vertical, &horizontal, &id).unwrap();
        assert!(!r.is_isomorphic());
        assert!(r.missing_pairs.is_empty() && r.extra_pairs.is_empty());
        assert!(!r.side_mismatches.is_empty());
    }

    #[test]
    fn non_bijective_correspondence_is_rejected() {
        let a = RegionAdjacency { pairs: [(0, 1)].into(), side_contacts: Default::default() };
        let map: BTreeMap<Label, Label> = [(0, 5), (1, 5)].into();
        assert!(matches!(adjacency_isomorphic(&a, &a, &map), Err(Error::UnmappedLabel(_))));
    }

    #[test]
    fn matching_input_needs_no_rounds() {
        let c = cloud(&[(0.0, 0.0, 0), (1.0, 0.0, 0), (0.0, 1.0, 0), (3.0, 0.0, 1), (4.0, 0.0, 1), (3.0, 1.0, 1)]);
        let target = RegionAdjacency { pairs: [(0, 1)].into(), side_contacts: Default::default() };
        let out = match_layout_to_target(&c, &target, |_| Ok(target.clone()), 5).unwrap();
        assert_eq!(out.rounds, 0);
    }

    #[test]
    fn missing_adjacency_nudges_toward_partner() {
        let c = cloud(&[(0.0, 0.0, 0), (1.0, 0.0, 0), (0.0, 1.0, 0), (9.0, 0.0, 1), (10.0, 0.0, 1), (9.0, 1.0, 1)]);
        let target = RegionAdjacency { pairs: [(0, 1)].into(), side_contacts: Default::default() };
        let mut seen = Vec::new();
        // Adjacent once the barycenters come within 8.
        let out = match_layout_to_target(
            &c,
            &target,
            |cl| {
                let s = summarize_clusters(cl).unwrap();
                let d = s[0].barycenter.dist(s[1].barycenter);
                seen.push(d);
                Ok(if d < 8.5 { target.clone() } else { RegionAdjacency::default() })
            },
            20,
        )
        .unwrap();
        assert!(out.rounds > 0);
        assert!(seen.windows(2).all(|w| w[1] < w[0]));
    }
}
