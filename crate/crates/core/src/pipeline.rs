//! Building both domains and composing
//! `f = t2^-1 o o2^-1 o phi2^-1 o h o phi1 o o1 o t1`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::{canonical_straighten, CanonicalDomain};
use crate::cloud::{Label, LabeledPointCloud};
use crate::error::{Error, Result};
use crate::geometry::delaunay::perturb_duplicates;
use crate::geometry::graph::DEFAULT_ISLAND_THRESHOLD;
use crate::geometry::{
    delaunay_triangulate, extract_regions_and_graph, refine_label_boundaries, DecoratedMesh, PiecewiseLinearMap,
    RegionAdjacency, Vec2,
};
use crate::layout::{
    default_columns, grid_layout, match_layout_to_target, place_like_target, remove_outliers, separate_clusters,
    LayoutTransform, DEFAULT_MATCH_ITERATIONS, DEFAULT_MAX_SWEEPS, DEFAULT_OUTLIER_QUANTILE,
};
use crate::ot::{
    bounding_domain, merge_cloud, solve_ot, MergeMap, OtConfig, OtFailure, OtProblem, Square, StepRecord, DEFAULT_MARGIN,
};
use crate::registration::{build_correspondence, register_canonical, GraphCorrespondence, RegistrationReport};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mode {
    /// Samples beyond the given quantile of their class's distance to its
    /// barycenter are dropped before layout.
    OutlierFree { quantile: f64 },
    FullDomain,
}

impl Default for Mode {
    fn default() -> Self {
        Mode::OutlierFree { quantile: DEFAULT_OUTLIER_QUANTILE }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutStrategy {
    Separate,
    Grid { columns: Option<usize> },
    /// The source is placed like the target and nudged until its merged
    /// region adjacency matches.
    MatchTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuildConfig {
    pub mode: Mode,
    pub layout: LayoutStrategy,
    pub ot: OtConfig,
    pub island_threshold: f64,
    /// Seed of the duplicate-position perturbation.
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            mode: Mode::default(),
            layout: LayoutStrategy::Grid { columns: None },
            ot: OtConfig::default(),
            island_threshold: DEFAULT_ISLAND_THRESHOLD,
            seed: 0,
        }
    }
}

/// Everything built for one domain: `t`, `o` and `phi`.
#[derive(Debug, Clone)]
pub struct DomainStages {
    /// Training samples in their original coordinates.
    pub cloud: LabeledPointCloud,
    pub layout: LayoutTransform,
    pub merge: MergeMap,
    pub canonical: CanonicalDomain,
    pub transport: TransportSummary,
}

/// Converged transport state kept with a domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSummary {
    pub domain: Square,
    /// Power heights per sample, in domain units.
    pub heights: Vec<f64>,
    pub steps: usize,
    pub max_error: f64,
}

/// Transport and meshing of one laid out cloud.
#[derive(Debug, Clone)]
pub struct MergedDomain {
    /// Merged samples triangulated, refined along class boundaries and
    /// carrying the feature graph.
    pub mesh: DecoratedMesh,
    pub map: MergeMap,
    pub transport: TransportSummary,
    pub history: Vec<StepRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: u32,
    pub mode: Mode,
    pub layout: LayoutStrategy,
    pub grid: usize,
    pub ot_tolerance: Option<f64>,
    pub island_threshold: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct AlignmentPipeline {
    pub source: DomainStages,
    pub target: DomainStages,
    /// `h`, from the source canonical square to the target one.
    pub registration: PiecewiseLinearMap,
    pub registration_report: RegistrationReport,
    pub correspondence: GraphCorrespondence,
    pub provenance: Provenance,
}

/// Result of pushing one point through the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub point: Vec2,
    pub extrapolated: bool,
    /// Position after each of the seven stages, in application order.
    pub trace: Vec<Vec2>,
}

impl Evaluation {
    /// Position in the target canonical square (forward) or the source
    /// canonical square (inverse).
    pub fn canonical(&self) -> Vec2 {
        self.trace[3]
    }
}

/// Transports the laid out samples onto a square, moves each to its cell's
/// mass center and meshes the result.
pub fn merge_domain(laid: &LabeledPointCloud, config: &BuildConfig) -> Result<MergedDomain, BuildFailure> {
    let (positions, moved) = perturb_duplicates(&laid.positions(), &laid.ids(), config.seed)?;
    if moved > 0 {
        log::warn!("perturbed {moved} duplicate positions before transport");
    }
    let laid = laid.with_positions(&positions);
    let domain = bounding_domain(&laid, DEFAULT_MARGIN)?;
    let problem = OtProblem::uniform(positions, domain)?;
    let solution = solve_ot(&problem, &config.ot).map_err(BuildFailure::Transport)?;
    let merged = merge_cloud(&laid, &solution.state)?;
    let mesh = delaunay_triangulate(&merged.merged, config.seed)?;
    let refined = refine_label_boundaries(&mesh)?;
    let with_graph = extract_regions_and_graph(&refined, config.island_threshold)?;
    Ok(MergedDomain {
        mesh: with_graph,
        map: merged.map,
        transport: TransportSummary {
            domain,
            heights: solution.state.heights,
            steps: solution.state.steps,
            max_error: solution.state.max_error,
        },
        history: solution.history,
    })
}

/// Runs layout-independent stages on an already laid out cloud: transport,
/// merge, meshing and straightening.
pub fn build_from_layout(
    cloud: &LabeledPointCloud,
    laid: &LabeledPointCloud,
    layout: LayoutTransform,
    config: &BuildConfig,
) -> Result<DomainStages, BuildFailure> {
    let merged = merge_domain(laid, config)?;
    let canonical = canonical_straighten(&merged.mesh)?;
    Ok(DomainStages { cloud: cloud.clone(), layout, merge: merged.map, canonical, transport: merged.transport })
}

/// A build error, keeping the solver's best state when transport failed.
#[derive(Debug)]
pub enum BuildFailure {
    Transport(OtFailure),
    Other(Error),
}

impl BuildFailure {
    pub fn error(&self) -> &Error {
        match self {
            BuildFailure::Transport(f) => &f.error,
            BuildFailure::Other(e) => e,
        }
    }

    pub fn into_error(self) -> Error {
        match self {
            BuildFailure::Transport(f) => f.error,
            BuildFailure::Other(e) => e,
        }
    }
}

impl From<Error> for BuildFailure {
    fn from(e: Error) -> Self {
        BuildFailure::Other(e)
    }
}

impl std::fmt::Display for BuildFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error().fmt(f)
    }
}

/// Applies the mode's sample filter.
pub fn prepare(cloud: &LabeledPointCloud, mode: Mode) -> Result<LabeledPointCloud> {
    match mode {
        Mode::OutlierFree { quantile } => remove_outliers(cloud, quantile),
        Mode::FullDomain => Ok(cloud.clone()),
    }
}

/// Lays out a prepared cloud with a self-contained strategy; `MatchTarget`
/// falls back to separation since it needs a built target.
pub fn lay_out(cloud: &LabeledPointCloud, strategy: LayoutStrategy) -> Result<(LabeledPointCloud, LayoutTransform)> {
    match strategy {
        LayoutStrategy::Separate | LayoutStrategy::MatchTarget => separate_clusters(cloud, DEFAULT_MAX_SWEEPS),
        LayoutStrategy::Grid { columns } => {
            grid_layout(cloud, columns.unwrap_or_else(|| default_columns(cloud.present_labels().len())))
        }
    }
}

/// Builds one domain with a self-contained layout strategy.
pub fn build_domain(cloud: &LabeledPointCloud, config: &BuildConfig) -> Result<DomainStages, BuildFailure> {
    let prepared = prepare(cloud, config.mode)?;
    let (laid, layout) = lay_out(&prepared, config.layout)?;
    build_from_layout(&prepared, &laid, layout, config)
}

/// Region adjacency of a built domain, in its own labels.
pub fn domain_adjacency(d: &DomainStages) -> RegionAdjacency {
    let mesh = d.canonical.mesh();
    d.canonical.graph().adjacency(&mesh.boundary_loop)
}

/// Builds the source so that its regions touch like the target's: clusters
/// start at the target's positions and are nudged until the adjacency of the
/// merged result matches.
pub fn build_source_matching(
    source: &LabeledPointCloud,
    target: &DomainStages,
    class_map: &BTreeMap<Label, Label>,
    config: &BuildConfig,
) -> Result<DomainStages, BuildFailure> {
    let prepared = prepare(source, config.mode)?;
    let target_laid = target.layout.apply(&target.cloud)?;
    let (placed, first) = place_like_target(&prepared, &target_laid, class_map, DEFAULT_MAX_SWEEPS)?;
    let inverse: BTreeMap<Label, Label> = class_map.iter().map(|(&a, &b)| (b, a)).collect();
    let wanted = domain_adjacency(target).mapped(&inverse)?;
    let mut built: Option<DomainStages> = None;
    let outcome = match_layout_to_target(
        &placed,
        &wanted,
        |candidate| {
            let d = build_from_layout(&prepared, candidate, LayoutTransform::identity([]), config)
                .map_err(BuildFailure::into_error)?;
            let adjacency = domain_adjacency(&d);
            built = Some(d);
            Ok(adjacency)
        },
        DEFAULT_MATCH_ITERATIONS,
    )?;
    let mut d = built.expect("the probe ran at least once");
    d.layout = outcome.transform.after(&first)?;
    Ok(d)
}

/// Registers two built domains and assembles the pipeline.
pub fn compose_pipeline(
    source: DomainStages,
    target: DomainStages,
    class_map: &BTreeMap<Label, Label>,
    config: &BuildConfig,
) -> Result<AlignmentPipeline> {
    let correspondence = build_correspondence(&source.canonical, &target.canonical, class_map)?;
    let registration = register_canonical(&source.canonical, &target.canonical, &correspondence)?;
    let pipeline = AlignmentPipeline {
        source,
        target,
        registration: registration.map,
        registration_report: registration.report,
        correspondence,
        provenance: Provenance {
            version: FORMAT_VERSION,
            mode: config.mode,
            layout: config.layout,
            grid: config.ot.grid,
            ot_tolerance: config.ot.tolerance,
            island_threshold: config.island_threshold,
            seed: config.seed,
        },
    };
    pipeline.check_stages()?;
    Ok(pipeline)
}

/// Builds both domains and the registration between them.
pub fn build_pipeline(
    source: &LabeledPointCloud,
    target: &LabeledPointCloud,
    class_map: &BTreeMap<Label, Label>,
    config: &BuildConfig,
) -> Result<AlignmentPipeline, BuildFailure> {
    let target_stages = build_domain(target, config)?;
    let source_stages = match config.layout {
        LayoutStrategy::MatchTarget => build_source_matching(source, &target_stages, class_map, config)?,
        _ => build_domain(source, config)?,
    };
    Ok(compose_pipeline(source_stages, target_stages, class_map, config)?)
}

impl AlignmentPipeline {
    /// Checks that every piecewise-linear stage is orientation preserving and
    /// that the stages fit together.
    pub fn check_stages(&self) -> Result<()> {
        let stages = [
            ("phi1", self.source.canonical.map()),
            ("h", &self.registration),
            ("phi2", self.target.canonical.map()),
        ];
        for (name, map) in stages {
            if !map.is_orientation_preserving() {
                return Err(Error::StageMismatch(format!("{name} flips {} triangles", map.flipped_count())));
            }
        }
        if self.registration.source_mesh().vertex_count() != self.source.canonical.mesh().vertex_count() {
            return Err(Error::StageMismatch("h is not defined on the source canonical mesh".into()));
        }
        for (a, b) in self.registration.source_mesh().vertices.iter().zip(self.source.canonical.positions()) {
            if a != b {
                return Err(Error::StageMismatch("h is not defined on the source canonical mesh".into()));
            }
        }
        for l in self.source.cloud.present_labels() {
            let m = *self.correspondence.class_map.get(&l).ok_or(Error::UnmappedLabel(l))?;
            self.target.layout.translation(m)?;
        }
        Ok(())
    }

    pub fn class_map(&self) -> &BTreeMap<Label, Label> {
        &self.correspondence.class_map
    }

    fn inverse_class(&self, target: Label) -> Result<Label> {
        self.class_map()
            .iter()
            .find(|(_, &t)| t == target)
            .map(|(&s, _)| s)
            .ok_or(Error::UnmappedLabel(target))
    }

    /// `f(p)` for a source point assigned to class `label`.
    pub fn forward(&self, p: Vec2, label: Label) -> Result<Evaluation> {
        let target_label = *self.class_map().get(&label).ok_or(Error::UnmappedLabel(label))?;
        let mut trace = Vec::with_capacity(7);
        let mut flagged = false;
        let a = self.source.layout.forward(label, p)?;
        trace.push(a);
        let b = self.source.merge.forward(a);
        flagged |= b.extrapolated;
        trace.push(b.point);
        let c = self.source.canonical.map().forward(b.point);
        flagged |= c.extrapolated;
        trace.push(c.point);
        let d = self.registration.forward(c.point);
        flagged |= d.extrapolated;
        trace.push(d.point);
        let e = self.target.canonical.map().inverse(d.point).map_err(stage("phi2"))?;
        flagged |= e.extrapolated;
        trace.push(e.point);
        let f = self.target.merge.inverse(e.point);
        flagged |= f.extrapolated;
        trace.push(f.point);
        let g = self.target.layout.inverse(target_label, f.point)?;
        trace.push(g);
        Ok(Evaluation { point: g, extrapolated: flagged, trace })
    }

    /// `f^-1(q)` for a target point assigned to class `label`.
    pub fn inverse(&self, q: Vec2, label: Label) -> Result<Evaluation> {
        let source_label = self.inverse_class(label)?;
        let mut trace = Vec::with_capacity(7);
        let mut flagged = false;
        let a = self.target.layout.forward(label, q)?;
        trace.push(a);
        let b = self.target.merge.forward(a);
        flagged |= b.extrapolated;
        trace.push(b.point);
        let c = self.target.canonical.map().forward(b.point);
        flagged |= c.extrapolated;
        trace.push(c.point);
        let d = self.registration.inverse(c.point).map_err(stage("h"))?;
        flagged |= d.extrapolated;
        trace.push(d.point);
        let e = self.source.canonical.map().inverse(d.point).map_err(stage("phi1"))?;
        flagged |= e.extrapolated;
        trace.push(e.point);
        let f = self.source.merge.inverse(e.point);
        flagged |= f.extrapolated;
        trace.push(f.point);
        let g = self.source.layout.inverse(source_label, f.point)?;
        trace.push(g);
        Ok(Evaluation { point: g, extrapolated: flagged, trace })
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::StageMismatch(format!("{name}: {e}"))
}
