#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::OnceLock;

use gmaplatent_core::pipeline::{build_pipeline, AlignmentPipeline, BuildConfig, Mode};
use gmaplatent_core::synthetic::four_gaussians;
use gmaplatent_core::{Label, LabeledPointCloud};

pub const PER_CLUSTER: usize = 60;

pub fn identity_classes() -> BTreeMap<Label, Label> {
    (0..4).map(|l| (l, l)).collect()
}

pub fn cloud(seed: u64) -> LabeledPointCloud {
    four_gaussians(PER_CLUSTER, 6.0, 1.0, seed)
}

pub fn full_domain() -> BuildConfig {
    BuildConfig { mode: Mode::FullDomain, ..BuildConfig::default() }
}

/// Source seed 1, target seed 2, full domain, shared by the tests of one binary.
pub fn pipeline() -> &'static AlignmentPipeline {
    static P: OnceLock<AlignmentPipeline> = OnceLock::new();
    P.get_or_init(|| {
        build_pipeline(&cloud(1), &cloud(2), &identity_classes(), &full_domain()).expect("fixture pipeline builds")
    })
}

/// A domain registered onto itself.
pub fn self_pipeline() -> &'static AlignmentPipeline {
    static P: OnceLock<AlignmentPipeline> = OnceLock::new();
    P.get_or_init(|| {
        let c = cloud(3);
        build_pipeline(&c, &c, &identity_classes(), &full_domain()).expect("self pipeline builds")
    })
}
