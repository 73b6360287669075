//! Invariant report over a composed pipeline.

use serde::Serialize;

use crate::canonical::{CanonicalDomain, RESIDUAL_TOLERANCE};
use crate::cloud::Label;
use crate::pipeline::{AlignmentPipeline, DomainStages};
use crate::registration::{RegistrationReport, BOUNDARY_TOLERANCE, SLIDING_TOLERANCE};

pub const COLLINEARITY_TOLERANCE: f64 = 1e-6;
pub const AREA_TOLERANCE: f64 = 1e-6;
pub const ROUND_TRIP_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceCheck {
    pub label: Label,
    pub convex: bool,
    pub corners: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CanonicalCheck {
    pub flipped: usize,
    pub min_area: f64,
    pub residual: f64,
    pub collinearity: f64,
    pub area_sum: f64,
    pub faces: Vec<FaceCheck>,
}

impl CanonicalCheck {
    pub fn of(d: &CanonicalDomain) -> Self {
        let r = d.report();
        let faces = d
            .graph()
            .faces
            .iter()
            .map(|f| FaceCheck {
                label: f.label,
                convex: !r.nonconvex_faces.contains(&f.label),
                corners: d.face_polygon(f.label).map_or(0, |p| p.len()),
            })
            .collect();
        Self {
            flipped: r.flipped,
            min_area: d.map().min_target_area(),
            residual: r.residual,
            collinearity: r.collinearity,
            area_sum: r.area_sum,
            faces,
        }
    }

    pub fn violations(&self, name: &str) -> Vec<String> {
        let mut v = Vec::new();
        if self.flipped > 0 {
            v.push(format!("{name}: {} flipped triangles", self.flipped));
        }
        if !(self.residual <= RESIDUAL_TOLERANCE) {
            v.push(format!("{name}: laplacian residual {:e}", self.residual));
        }
        if !(self.collinearity <= COLLINEARITY_TOLERANCE) {
            v.push(format!("{name}: chain collinearity {:e}", self.collinearity));
        }
        if !((self.area_sum - 1.0).abs() <= AREA_TOLERANCE) {
            v.push(format!("{name}: face areas sum to {}", self.area_sum));
        }
        for f in self.faces.iter().filter(|f| !f.convex) {
            v.push(format!("{name}: face {} is not convex", f.label));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainCheck {
    pub samples: usize,
    pub transport_steps: usize,
    pub transport_error: f64,
    pub transport_tolerance: f64,
    pub merge_folds: usize,
    pub canonical: CanonicalCheck,
}

impl DomainCheck {
    fn of(d: &DomainStages, tolerance: Option<f64>) -> Self {
        let n = d.merge.merged_positions().len().max(1);
        Self {
            samples: d.cloud.len(),
            transport_steps: d.transport.steps,
            transport_error: d.transport.max_error,
            transport_tolerance: tolerance.unwrap_or(0.05 / n as f64),
            merge_folds: d.merge.folded_count(),
            canonical: CanonicalCheck::of(&d.canonical),
        }
    }

    fn violations(&self, name: &str) -> Vec<String> {
        let mut v = self.canonical.violations(name);
        if !(self.transport_error <= self.transport_tolerance) {
            v.push(format!("{name}: transport error {:e} above {:e}", self.transport_error, self.transport_tolerance));
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineCheck {
    pub source: DomainCheck,
    pub target: DomainCheck,
    pub registration: RegistrationReport,
    pub registration_min_area: f64,
    /// Source training samples whose image lies in the corresponding target face.
    pub training_correct: usize,
    pub training_total: usize,
    pub training_extrapolated: usize,
    /// Largest `|f^-1(f(x)) - x|` over training samples not flagged.
    pub round_trip: f64,
    pub violations: Vec<String>,
}

impl PipelineCheck {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every stage invariant and pushes all source training samples
/// through the pipeline and back.
pub fn check_pipeline(p: &AlignmentPipeline) -> PipelineCheck {
    let source = DomainCheck::of(&p.source, p.provenance.ot_tolerance);
    let target = DomainCheck::of(&p.target, p.provenance.ot_tolerance);
    let mut violations = source.violations("source");
    violations.extend(target.violations("target"));
    let r = &p.registration_report;
    if r.node_error != 0.0 {
        violations.push(format!("h: node error {:e}", r.node_error));
    }
    if !(r.chain_sliding <= SLIDING_TOLERANCE) {
        violations.push(format!("h: chain sliding {:e}", r.chain_sliding));
    }
    if !(r.boundary_sliding <= BOUNDARY_TOLERANCE) {
        violations.push(format!("h: boundary sliding {:e}", r.boundary_sliding));
    }
    if r.flipped > 0 {
        violations.push(format!("h: {} flipped triangles", r.flipped));
    }
    if !(r.residual <= RESIDUAL_TOLERANCE) {
        violations.push(format!("h: laplacian residual {:e}", r.residual));
    }
    if r.class_mismatches > 0 {
        violations.push(format!("h: {} vertices leave their class", r.class_mismatches));
    }

    let (mut correct, mut extrapolated, mut round_trip) = (0, 0, 0.0f64);
    let samples = p.source.cloud.samples();
    for s in samples {
        let Some(&want) = p.class_map().get(&s.label) else {
            violations.push(format!("source class {} has no counterpart", s.label));
            continue;
        };
        let e = match p.forward(s.position, s.label) {
            Ok(e) => e,
            Err(err) => {
                violations.push(format!("sample {}: {err}", s.id));
                continue;
            }
        };
        if p.target.canonical.locate_class(e.canonical()) == want {
            correct += 1;
        }
        if e.extrapolated {
            extrapolated += 1;
            continue;
        }
        match p.inverse(e.point, want) {
            Ok(back) if !back.extrapolated => round_trip = round_trip.max(back.point.dist(s.position)),
            Ok(_) => extrapolated += 1,
            Err(err) => violations.push(format!("sample {}: {err}", s.id)),
        }
    }
    if correct < samples.len() {
        violations.push(format!("{} of {} training samples land in a wrong face", samples.len() - correct, samples.len()));
    }
    if !(round_trip <= ROUND_TRIP_TOLERANCE) {
        violations.push(format!("round trip error {round_trip:e}"));
    }
    PipelineCheck {
        source,
        target,
        registration: r.clone(),
        registration_min_area: p.registration.min_target_area(),
        training_correct: correct,
        training_total: samples.len(),
        training_extrapolated: extrapolated,
        round_trip,
        violations,
    }
}
