mod common;

use std::collections::BTreeMap;

use gmaplatent_core::layout::{grid_layout, separate_clusters, summarize_clusters, ClusterSummary, DEFAULT_MAX_SWEEPS};
use gmaplatent_core::ot::{bounding_domain, estimate_measures, solve_ot, OtConfig, OtProblem, Square};
use gmaplatent_core::pipeline::{build_pipeline, BuildConfig, LayoutStrategy};
use gmaplatent_core::synthetic::{gaussian_clusters, GaussianCluster};
use gmaplatent_core::translator::{
    knn_decode_weights, translate_canonical_curve, translate_curve, translate_labeled, translate_point, DISTANCE_FLOOR,
};
use gmaplatent_core::verify::check_pipeline;
use gmaplatent_core::{Label, LabeledPointCloud, Sample, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn cloud_of(points: &[(f64, f64, Label)]) -> LabeledPointCloud {
    let samples = points
        .iter()
        .enumerate()
        .map(|(i, &(x, y, label))| Sample { id: i as u64, position: Vec2::new(x, y), label })
        .collect();
    LabeledPointCloud::from_samples(samples).unwrap()
}

fn ten_clusters(seed: u64) -> LabeledPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clusters: Vec<GaussianCluster> = (0..10)
        .map(|_| GaussianCluster {
            center: Vec2::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)),
            sigma: rng.random_range(0.2..1.5),
            count: rng.random_range(5..40),
        })
        .collect();
    gaussian_clusters(&clusters, seed, 0).unwrap()
}

fn assert_pairs_separated(summaries: &[ClusterSummary]) {
    for (i, a) in summaries.iter().enumerate() {
        for b in &summaries[i + 1..] {
            let d = a.barycenter.dist(b.barycenter);
            assert!(d >= a.radius + b.radius - 1e-9, "{} and {}: {d} < {}", a.label, b.label, a.radius + b.radius);
        }
    }
}

fn intra_distances(cloud: &LabeledPointCloud) -> Vec<f64> {
    let mut out = Vec::new();
    for idx in cloud.members().values() {
        for (k, &i) in idx.iter().enumerate() {
            for &j in &idx[k + 1..] {
                out.push(cloud.samples()[i].position.dist(cloud.samples()[j].position));
            }
        }
    }
    out
}

#[test]
fn layouts_are_rigid_per_cluster_and_separate_all_pairs() {
    for seed in 0..4 {
        let c = ten_clusters(seed);
        let before = intra_distances(&c);
        let separated = separate_clusters(&c, DEFAULT_MAX_SWEEPS).unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        for (laid, _) in [separated, grid_layout(&c, 4).unwrap()] {
            for (a, b) in before.iter().zip(intra_distances(&laid)) {
                assert!((a - b).abs() <= 1e-12 * a.max(1.0));
            }
            assert_pairs_separated(&summarize_clusters(&laid).unwrap());
        }
    }
}

#[test]
fn grid_layout_is_idempotent() {
    let c = ten_clusters(7);
    let (once, _) = grid_layout(&c, 3).unwrap();
    let (twice, _) = grid_layout(&once, 3).unwrap();
    let a = summarize_clusters(&once).unwrap();
    let b = summarize_clusters(&twice).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!(x.barycenter.dist(y.barycenter) <= 1e-12);
    }
}

#[test]
fn unit_disk_summary_converges() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pts = Vec::new();
    while pts.len() < 20000 {
        let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if x * x + y * y <= 1.0 {
            pts.push((x + 3.0, y - 2.0, 0));
        }
    }
    let s = summarize_clusters(&cloud_of(&pts)).unwrap()[0];
    // Standard error of the mean is 0.5 / sqrt(n) per coordinate.
    let eps = 5.0 * 0.5 / (pts.len() as f64).sqrt();
    assert!(s.barycenter.dist(Vec2::new(3.0, -2.0)) <= eps);
    assert!(s.radius <= 1.0 + eps && s.radius > 0.99);
}

#[test]
fn bounding_domain_conventions() {
    let unit = cloud_of(&[(0.0, 0.0, 0), (1.0, 0.0, 0), (0.0, 1.0, 0), (1.0, 1.0, 0)]);
    assert_eq!(bounding_domain(&unit, 0.0).unwrap(), Square { min: Vec2::ZERO, side: 1.0 });
    let wide = cloud_of(&[(0.0, 0.0, 0), (2.0, 1.0, 0), (1.0, 0.5, 0)]);
    let d = bounding_domain(&wide, 0.05).unwrap();
    assert!((d.side - 2.1).abs() < 1e-12);
    assert!(d.center().dist(Vec2::new(1.0, 0.5)) < 1e-12);
    let single = cloud_of(&[(4.0, -1.0, 0)]);
    let d = bounding_domain(&single, 0.05).unwrap();
    assert_eq!(d.side, 1.0);
    assert_eq!(d.center(), Vec2::new(4.0, -1.0));
}

#[test]
fn mirror_sites_keep_zero_heights() {
    let p = OtProblem::uniform(vec![Vec2::new(0.25, 0.5), Vec2::new(0.75, 0.5)], Square::unit()).unwrap();
    let s = solve_ot(&p, &OtConfig { grid: 128, ..OtConfig::default() }).unwrap().state;
    assert_eq!(s.heights, vec![0.0, 0.0]);
    assert_eq!(s.measures, vec![0.5, 0.5]);
}

#[test]
fn transport_is_translation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // Dyadic sites and shift keep unit coordinates bit-identical.
    let mut sites: Vec<Vec2> = Vec::new();
    while sites.len() < 12 {
        let p = Vec2::new(rng.random_range(1..64) as f64 / 64.0, rng.random_range(1..64) as f64 / 64.0);
        if !sites.contains(&p) {
            sites.push(p);
        }
    }
    let shift = Vec2::new(2.0, -3.0);
    let config = OtConfig { grid: 128, ..OtConfig::default() };
    let a = solve_ot(&OtProblem::uniform(sites.clone(), Square::unit()).unwrap(), &config).unwrap().state;
    let moved: Vec<Vec2> = sites.iter().map(|&p| p + shift).collect();
    let b = solve_ot(&OtProblem::uniform(moved, Square { min: shift, side: 1.0 }).unwrap(), &config).unwrap().state;
    assert_eq!(a.heights, b.heights);
    assert_eq!(a.measures, b.measures);
    for (p, q) in a.centroids.iter().zip(&b.centroids) {
        assert!((*p + shift).dist(*q) <= 1e-12);
    }
}

#[test]
fn cells_tile_the_grid_and_converged_errors_meet_tolerance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let sites: Vec<Vec2> = (0..30).map(|_| Vec2::new(rng.random(), rng.random())).collect();
    let p = OtProblem::uniform(sites, Square::unit()).unwrap();
    let g = 200;
    let h: Vec<f64> = (0..30).map(|_| rng.random_range(-0.01..0.01)).collect();
    let e = estimate_measures(&p, &h, g);
    assert_eq!(e.counts.iter().sum::<u64>(), (g * g) as u64);
    assert!((e.measures.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    for (c, &n) in e.centroids.iter().zip(&e.counts) {
        if n > 0 {
            assert!(Square::unit().contains(*c));
        }
    }
    let sol = solve_ot(&p, &OtConfig { grid: g, ..OtConfig::default() }).unwrap();
    let tol = 0.05 / 30.0;
    assert!(sol.state.max_error <= tol);
    let mut best = f64::INFINITY;
    for r in &sol.history {
        best = best.min(r.energy);
    }
    assert!(sol.state.energy <= sol.history[0].energy);
    assert!(best.is_finite());
}

fn nn_distance_cv(points: &[Vec2]) -> f64 {
    let d: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, q)| p.dist(*q)).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / d.len() as f64;
    var.sqrt() / mean
}

#[test]
fn merge_is_vertex_exact_and_evens_out_spacing() {
    let p = common::pipeline();
    for d in [&p.source, &p.target] {
        let (orig, merged) = (d.merge.original_positions(), d.merge.merged_positions());
        for (o, m) in orig.iter().zip(merged) {
            let f = d.merge.forward(*o);
            assert_eq!(f.point, *m);
            assert!(!f.extrapolated);
            assert_eq!(d.merge.inverse(*m).point, *o);
        }
        let before = nn_distance_cv(orig);
        let after = nn_distance_cv(merged);
        assert!(after < before, "nearest-neighbor CV {after} not below {before}");
    }
}

#[test]
fn fixture_pipeline_passes_every_check() {
    let check = check_pipeline(common::pipeline());
    assert!(check.is_valid(), "{:?}", check.violations);
    assert_eq!(check.training_correct, check.training_total);
}

#[test]
fn training_samples_follow_their_vertices_exactly() {
    let p = common::pipeline();
    let phi = p.source.canonical.positions();
    let merged = p.source.merge.merged_positions();
    for (i, s) in p.source.cloud.samples().iter().enumerate() {
        let r = translate_labeled(p, s.position, s.label).unwrap();
        assert_eq!(r.stage_trace[1], merged[i]);
        assert!(r.stage_trace[2].dist(phi[i]) <= 1e-15);
        let h = p.registration.target_positions()[i];
        assert!(r.stage_trace[3].dist(h) <= 1e-15);
    }
}

#[test]
fn self_alignment_is_the_identity() {
    let p = common::self_pipeline();
    assert!(p.registration_report.node_error == 0.0);
    for s in p.source.cloud.samples() {
        let r = translate_point(p, s.position).unwrap();
        assert!(r.target_position.dist(s.position) <= 1e-6, "{}: {:?}", s.id, r.target_position);
        assert_eq!(r.predicted_class, s.label);
    }
}

#[test]
fn random_source_points_round_trip() {
    let p = common::pipeline();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let samples = p.source.cloud.samples();
    let (mut kept, mut worst) = (0, 0.0f64);
    for _ in 0..1000 {
        let s = samples[rng.random_range(0..samples.len())];
        let q = s.position + Vec2::new(noise.sample(&mut rng), noise.sample(&mut rng));
        let r = translate_point(p, q).unwrap();
        if r.extrapolated {
            continue;
        }
        let back = p.inverse(r.target_position, p.class_map()[&r.source_class]).unwrap();
        if back.extrapolated {
            continue;
        }
        kept += 1;
        worst = worst.max(back.point.dist(q));
    }
    assert!(kept >= 500, "only {kept} points stayed inside");
    assert!(worst <= 1e-6, "{worst}");
}

#[test]
fn degenerate_and_single_face_curves() {
    let p = common::pipeline();
    let s = p.source.cloud.samples()[3].position;
    let one = translate_curve(p, &[s], 8).unwrap();
    assert_eq!(one.points.len(), 1);
    assert_eq!(one.max_gap, 0.0);

    let d = &p.source.canonical;
    let poly = d.face_polygon(2).unwrap();
    let center = poly.iter().fold(Vec2::ZERO, |a, &b| a + b) / poly.len() as f64;
    let a = center.lerp(poly[0], 0.5);
    let b = center.lerp(poly[1], 0.5);
    let c = translate_canonical_curve(p, &[a, center, b], 16);
    assert_eq!(c.transitions(), 0);
    assert!(c.classes.iter().all(|&l| l == p.class_map()[&2]));
}

#[test]
fn curve_across_one_chain_changes_class_once() {
    let p = common::pipeline();
    let d = &p.source.canonical;
    let x = d.positions();
    let mut crossed = 0;
    for chain in d.graph().interior_chains() {
        let (a, b) = (x[chain.start()], x[chain.end()]);
        let mid = a.lerp(b, 0.5);
        let n = Vec2::new(-(b - a).y, (b - a).x) / (b - a).norm();
        let offset = 0.25 * a.dist(b).min(0.1);
        let (from, to) = (mid + n * offset, mid - n * offset);
        let sides = (d.locate_class(from), d.locate_class(to));
        assert_eq!([Some(sides.0), Some(sides.1)], [chain.left, chain.right]);
        let c = translate_canonical_curve(p, &[from, to], 64);
        assert_eq!(c.transitions(), 1);
        assert!(c.max_gap <= c.gap_bound() * (1.0 + 1e-12));
        crossed += 1;
    }
    assert!(crossed >= 4);
}

/// Point-in-convex-polygon with a margin, as a second classifier.
fn inside(poly: &[Vec2], q: Vec2, margin: f64) -> bool {
    (0..poly.len()).all(|i| {
        let (a, b) = (poly[i], poly[(i + 1) % poly.len()]);
        (b - a).cross(q - a) / (b - a).norm() > margin
    })
}

#[test]
fn locate_class_agrees_with_polygon_containment() {
    let d = &common::pipeline().target.canonical;
    let polygons: Vec<(Label, Vec<Vec2>)> =
        d.graph().faces.iter().map(|f| (f.label, d.face_polygon(f.label).unwrap())).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut decided = 0;
    for _ in 0..10_000 {
        let q = Vec2::new(rng.random(), rng.random());
        let owners: Vec<Label> = polygons.iter().filter(|(_, poly)| inside(poly, q, 1e-9)).map(|(l, _)| *l).collect();
        match owners.as_slice() {
            [l] => {
                assert_eq!(d.locate_class(q), *l, "{q:?}");
                decided += 1;
            }
            [] => {}
            more => panic!("{q:?} inside several faces {more:?}"),
        }
    }
    assert!(decided >= 9_990);
}

#[test]
fn knn_weights_match_a_sort_oracle() {
    let c = common::cloud(4);
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..200 {
        let q = Vec2::new(rng.random_range(-3.0..9.0), rng.random_range(-3.0..9.0));
        let got = knn_decode_weights(&c, q, 5).unwrap();
        let mut all: Vec<(f64, u64)> = c.samples().iter().map(|s| (s.position.dist(q), s.id)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let inv: Vec<f64> = all[..5].iter().map(|(d, _)| 1.0 / d.max(DISTANCE_FLOOR)).collect();
        let total: f64 = inv.iter().sum();
        assert_eq!(got.len(), 5);
        for ((id, w), ((_, want_id), iw)) in got.iter().zip(all.iter().zip(&inv)) {
            assert_eq!(id, want_id);
            assert!((w - iw / total).abs() <= 1e-15);
            assert!(*w >= 0.0);
        }
        assert!((got.iter().map(|g| g.1).sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn swapped_source_positions_are_matched_to_the_target() {
    // Clusters 0 and 3 trade places in the source.
    let swap: BTreeMap<Label, Label> = [(0, 3), (1, 1), (2, 2), (3, 0)].into();
    let base = common::cloud(5);
    let samples = base.samples().iter().map(|s| Sample { label: swap[&s.label], ..*s }).collect();
    let source = LabeledPointCloud::new(samples, 4).unwrap();
    let config = BuildConfig { layout: LayoutStrategy::MatchTarget, ..common::full_domain() };
    let p = build_pipeline(&source, &common::cloud(6), &common::identity_classes(), &config).unwrap();
    let check = check_pipeline(&p);
    assert!(check.is_valid(), "{:?}", check.violations);
}
