mod common;

use gmaplatent_core::canonical::{canonical_straighten, CanonicalDomain};
use gmaplatent_core::geometry::delaunay::triangulate;
use gmaplatent_core::geometry::mesh::majority_label;
use gmaplatent_core::geometry::{extract_regions_and_graph, DecoratedMesh, Direction};
use gmaplatent_core::geometry::graph::DEFAULT_ISLAND_THRESHOLD;
use gmaplatent_core::linsys::tutte_embed;
use gmaplatent_core::verify::CanonicalCheck;
use gmaplatent_core::{Label, Vec2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a - o).cross(b - o)
}

/// Proper crossing of two segments without shared endpoints.
fn segments_intersect(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let (d1, d2) = (cross(a, b, c), cross(a, b, d));
    let (d3, d4) = (cross(c, d, a), cross(c, d, b));
    d1 * d2 <= 0.0 && d3 * d4 <= 0.0 && !(d1 == 0.0 && d2 == 0.0)
}

fn distance_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.norm2()).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

#[test]
fn tutte_embedding_of_a_random_triangulation_has_no_crossings() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let points: Vec<Vec2> = (0..200).map(|_| Vec2::new(rng.random(), rng.random())).collect();
    let tri = triangulate(&points).unwrap();
    let mut neighbors = vec![Vec::new(); points.len()];
    for t in &tri.triangles {
        for i in 0..3 {
            let (a, b) = (t[i], t[(i + 1) % 3]);
            if !neighbors[a].contains(&b) {
                neighbors[a].push(b);
                neighbors[b].push(a);
            }
        }
    }
    let k = tri.hull.len();
    let boundary: Vec<(usize, Vec2)> = tri
        .hull
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            (v, Vec2::new(a.cos(), a.sin()))
        })
        .collect();
    let x = tutte_embed(&neighbors, &boundary).unwrap();

    let on_hull: Vec<bool> = (0..points.len()).map(|v| tri.hull.contains(&v)).collect();
    for v in (0..points.len()).filter(|&v| !on_hull[v]) {
        let mean = neighbors[v].iter().fold(Vec2::ZERO, |s, &u| s + x[u]) / neighbors[v].len() as f64;
        assert!(mean.dist(x[v]) <= 1e-10);
    }
    for t in &tri.triangles {
        assert!(cross(x[t[0]], x[t[1]], x[t[2]]) > 0.0);
    }
    let edges: Vec<(usize, usize)> =
        (0..points.len()).flat_map(|a| neighbors[a].iter().filter(move |&&b| a < b).map(move |&b| (a, b))).collect();
    let mut crossings = 0;
    for (i, &(a, b)) in edges.iter().enumerate() {
        for &(c, d) in &edges[i + 1..] {
            if a == c || a == d || b == c || b == d {
                continue;
            }
            if segments_intersect(x[a], x[b], x[c], x[d]) {
                crossings += 1;
            }
        }
    }
    assert_eq!(crossings, 0);
}

/// Rectangular grid with diagonals mirrored about the middle column, so the
/// triangulation is exactly left-right symmetric.
fn mirrored_grid(cols: usize, rows: usize, label: impl Fn(Vec2) -> Label, classes: usize) -> DecoratedMesh {
    let at = |i: usize, j: usize| j * cols + i;
    let vertices: Vec<Vec2> = (0..rows)
        .flat_map(|j| (0..cols).map(move |i| Vec2::new(i as f64 / (cols - 1) as f64, j as f64 / (rows - 1) as f64)))
        .collect();
    let labels: Vec<Label> = vertices.iter().map(|&p| label(p)).collect();
    let mut triangles = Vec::new();
    for j in 0..rows - 1 {
        for i in 0..cols - 1 {
            let (a, b, c, d) = (at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1));
            if 2 * i + 1 < cols - 1 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, b, d]);
                triangles.push([b, c, d]);
            }
        }
    }
    let triangle_labels = triangles.iter().map(|t| majority_label([labels[t[0]], labels[t[1]], labels[t[2]]])).collect();
    let ids = (0..vertices.len() as u64).collect();
    let mesh = DecoratedMesh::new(vertices, ids, labels, triangles, triangle_labels, classes).unwrap();
    extract_regions_and_graph(&mesh, DEFAULT_ISLAND_THRESHOLD).unwrap()
}

#[test]
fn two_strips_straighten_into_two_convex_quadrilaterals() {
    let m = mirrored_grid(11, 11, |p| if p.x + 0.15 * (7.0 * p.y).sin() < 0.5 { 0 } else { 1 }, 2);
    let d = canonical_straighten(&m).unwrap();
    let chains: Vec<_> = d.graph().interior_chains().collect();
    assert_eq!(chains.len(), 1);
    let x = d.positions();
    let ends = [x[chains[0].start()], x[chains[0].end()]];
    let mut ys: Vec<f64> = ends.iter().map(|p| p.y).collect();
    ys.sort_by(f64::total_cmp);
    assert_eq!(ys, vec![0.0, 1.0]);
    for &v in chains[0].interior() {
        assert!(distance_to_segment(x[v], ends[0], ends[1]) <= 1e-6);
    }
    let check = CanonicalCheck::of(&d);
    assert_eq!(check.faces.len(), 2);
    for f in &check.faces {
        assert!(f.convex);
        assert_eq!(f.corners, 4);
    }
    assert!(check.violations("phi").is_empty(), "{:?}", check.violations("phi"));
}

#[test]
fn mirror_symmetric_input_gives_a_mirror_symmetric_square() {
    let (cols, rows) = (9, 10);
    let m = mirrored_grid(cols, rows, |p| if p.y < 0.5 { 0 } else { 1 }, 2);
    let d = canonical_straighten(&m).unwrap();
    let x = d.positions();
    for j in 0..rows {
        for i in 0..cols {
            let (p, q) = (x[j * cols + i], x[j * cols + (cols - 1 - i)]);
            assert!((p.x - (1.0 - q.x)).abs() <= 1e-8 && (p.y - q.y).abs() <= 1e-8, "({i},{j}): {p:?} vs {q:?}");
        }
    }
}

#[test]
fn chain_vertices_keep_their_arc_length_fraction() {
    let d = &common::pipeline().source.canonical;
    let source = &d.mesh().vertices;
    let x = d.positions();
    let mut checked = 0;
    for c in d.graph().interior_chains() {
        let lengths: Vec<f64> = c.vertices.windows(2).map(|w| source[w[0]].dist(source[w[1]])).collect();
        let total: f64 = lengths.iter().sum();
        let (a, b) = (x[c.start()], x[c.end()]);
        let mut run = 0.0;
        for (k, &v) in c.interior().iter().enumerate() {
            run += lengths[k];
            let t = (x[v] - a).dot(b - a) / (b - a).norm2();
            assert!((t - run / total).abs() <= 1e-6, "chain vertex {v}: {t} vs {}", run / total);
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn collinearity_matches_an_independent_recomputation() {
    for d in [&common::pipeline().source.canonical, &common::pipeline().target.canonical] {
        let x = d.positions();
        let mut worst: f64 = 0.0;
        for c in d.graph().interior_chains() {
            for &v in c.interior() {
                worst = worst.max(distance_to_segment(x[v], x[c.start()], x[c.end()]));
            }
        }
        let reported = d.report().collinearity;
        assert!((worst - reported).abs() <= 1e-15 + 1e-9 * worst, "{worst} vs {reported}");
    }
}

#[test]
fn hand_flipped_vertex_is_reported() {
    let d = &common::pipeline().source.canonical;
    let ok = CanonicalCheck::of(d);
    assert!(ok.min_area > 0.0);
    let boundary: Vec<bool> = d.mesh().is_boundary_vertex();
    let graph_vertices: std::collections::BTreeSet<usize> =
        d.graph().chains.iter().flat_map(|c| c.vertices.iter().copied()).collect();
    let v = (0..d.mesh().vertex_count()).find(|&v| !boundary[v] && !graph_vertices.contains(&v)).unwrap();
    let ring = &d.mesh().vertex_neighbors()[v];
    let mut x = d.positions().to_vec();
    // Push the vertex past a neighbor, away from its own position.
    x[v] = x[ring[0]] + (x[ring[0]] - x[v]) * 2.0;
    let r = d.report();
    let bad = CanonicalDomain::from_positions(d.mesh().clone(), x, r.interior_weights, r.steiner_vertices).unwrap();
    let check = CanonicalCheck::of(&bad);
    assert!(check.min_area < 0.0);
    assert!(check.flipped > 0);
    assert!(check.residual > 1e-8);
    assert!(!check.violations("phi").is_empty());
}

#[test]
fn recomputed_report_equals_the_solver_report() {
    let d = &common::pipeline().target.canonical;
    let r = d.report();
    let again =
        CanonicalDomain::from_positions(d.mesh().clone(), d.positions().to_vec(), r.interior_weights, r.steiner_vertices)
            .unwrap();
    assert_eq!(again.report(), r);
}

#[test]
fn feature_graph_is_planar_with_disjoint_chains() {
    for d in [&common::pipeline().source.canonical, &common::pipeline().target.canonical] {
        let g = d.graph();
        assert_eq!(g.euler_characteristic(), 2);
        let mut owner = std::collections::BTreeMap::new();
        for (i, c) in g.chains.iter().enumerate() {
            for &v in &c.vertices[1..c.vertices.len() - 1] {
                assert!(owner.insert(v, i).is_none(), "vertex {v} on two chains");
                assert!(!g.nodes.contains(&v));
            }
            assert!(g.nodes.contains(&c.start()) && g.nodes.contains(&c.end()));
        }
    }
}

#[test]
fn straightening_is_invertible_at_random_interior_points() {
    let d = &common::pipeline().source.canonical;
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let q = Vec2::new(rng.random_range(0.001..0.999), rng.random_range(0.001..0.999));
        let back = d.map().inverse(q).unwrap();
        assert!(!back.extrapolated);
        let again = d.map().eval(back.point, Direction::Forward).unwrap();
        worst = worst.max(again.point.dist(q));
    }
    assert!(worst <= 1e-9, "{worst}");
}
