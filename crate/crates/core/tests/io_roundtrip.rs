mod common;

use gmaplatent_core::io::*;
use gmaplatent_core::{Error, Vec2};
use proptest::prelude::*;

#[test]
fn every_stage_file_reserializes_identically() {
    let p = common::pipeline();
    let files = bundle_files(p);
    for dir in ["source", "target"] {
        let points = &files[&format!("{dir}/{POINTS_FILE}")];
        assert_eq!(&points_to_string(&parse_points(points).unwrap()), points);
        let layout = &files[&format!("{dir}/{LAYOUT_FILE}")];
        assert_eq!(&layout_to_string(&parse_layout(layout).unwrap()), layout);
        let merge = &files[&format!("{dir}/{MERGE_FILE}")];
        let m = parse_merge(merge).unwrap();
        assert_eq!(&merge_to_string(&m.ids, &m.labels, &m.map, &m.transport), merge);
        let canonical = &files[&format!("{dir}/{CANONICAL_FILE}")];
        let c = parse_canonical(canonical).unwrap();
        assert_eq!(&canonical_to_string(&c), canonical);
        assert_eq!(c.report().flipped, 0);
    }
    let reg = &files[REGISTRATION_FILE];
    let (corr, scheme, positions) = parse_registration(reg).unwrap();
    assert_eq!(&registration_to_string(&corr, scheme, &positions), reg);
}

#[test]
fn mesh_without_canonical_section_round_trips() {
    let mesh = common::pipeline().source.canonical.mesh();
    let text = mesh_to_string(mesh);
    let back = parse_mesh(&text).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.triangles, mesh.triangles);
    assert_eq!(mesh_to_string(&back), text);
}

#[test]
fn bundle_on_disk_reloads_to_the_same_files_and_reports() {
    let p = common::pipeline();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), p).unwrap();
    let back = read_bundle(dir.path()).unwrap();
    assert_eq!(bundle_files(&back), bundle_files(p));
    assert_eq!(back.registration_report.node_error, p.registration_report.node_error);
    assert_eq!(back.registration_report.flipped, p.registration_report.flipped);
    assert_eq!(back.source.canonical.report().flipped, p.source.canonical.report().flipped);
    let q = p.source.cloud.samples()[7];
    let a = p.forward(q.position, q.label).unwrap();
    let b = back.forward(q.position, q.label).unwrap();
    assert_eq!(a, b);
}

#[test]
fn domain_directory_round_trips() {
    let d = &common::pipeline().target;
    let dir = tempfile::tempdir().unwrap();
    write_domain_dir(dir.path(), d).unwrap();
    let back = read_domain_dir(dir.path()).unwrap();
    assert_eq!(domain_files(&back), domain_files(d));
}

#[test]
fn bundle_with_a_foreign_stage_list_is_rejected() {
    let p = common::pipeline();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), p).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = std::fs::read_to_string(&path).unwrap().replace("\"phi2\"", "\"psi\"");
    std::fs::write(&path, text).unwrap();
    assert!(matches!(read_bundle(dir.path()), Err(Error::Parse(_))));
}

#[test]
fn bundle_paths_may_not_escape() {
    let p = common::pipeline();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), p).unwrap();
    let path = dir.path().join(MANIFEST);
    let text = std::fs::read_to_string(&path).unwrap().replace("\"source/points.csv\"", "\"../points.csv\"");
    std::fs::write(&path, text).unwrap();
    let err = read_bundle(dir.path()).unwrap_err();
    assert!(err.to_string().contains("leaves the bundle"), "{err}");
}

#[test]
fn tampered_merge_map_is_caught() {
    let p = common::pipeline();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), p).unwrap();
    let path = dir.path().join("source").join(POINTS_FILE);
    let mut cloud = parse_points(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cloud = cloud.filter(|i, _| i != 0);
    std::fs::write(&path, points_to_string(&cloud)).unwrap();
    assert!(matches!(read_bundle(dir.path()), Err(Error::StageMismatch(_))));
}

#[test]
fn point_parse_errors_name_the_line() {
    let text = "id,x,y,label\n0,0.0,0.0,0\n1,abc,0.0,0\n";
    let err = parse_points(text).unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
    let err = parse_points("id,x,y\n0,0,0\n").unwrap_err().to_string();
    assert!(err.contains("line 1"), "{err}");
    let err = parse_points("id,x,y,label\n0,1,2,0\n1,NaN,2,0\n").unwrap_err().to_string();
    assert!(err.contains("non-finite"), "{err}");
    assert!(parse_points("id,x,y,label\n0,1,2\n").is_err());
}

#[test]
fn mesh_parse_errors_name_the_line() {
    let text = "CLASSES 1\nSAMPLES 3\nVERTICES 3\n0 0 0 0\n1 1 0 0\n2 0 1 0\nTRIANGLES 1\n0 1 7 0\n";
    let err = parse_mesh(text).unwrap_err().to_string();
    assert!(err.contains("line 8"), "{err}");
    let err = parse_mesh("CLASSES 1\nSAMPLES 3\nVERTICES 4\n0 0 0 0\n").unwrap_err().to_string();
    assert!(err.contains("end of file"), "{err}");
    assert!(matches!(parse_mesh("VERTICES 0\n"), Err(Error::Parse(_))));
}

#[test]
fn class_map_must_be_a_bijection() {
    assert_eq!(parse_class_map("source,target\n0,1\n1,0\n").unwrap().len(), 2);
    let err = parse_class_map("source,target\n0,1\n1,1\n").unwrap_err().to_string();
    assert!(err.contains("line 3"), "{err}");
    assert!(parse_class_map("source,target\n0,1\n0,2\n").is_err());
}

#[test]
fn curves_must_be_contiguous() {
    let ok = "curve,x,y\n4,0,0\n4,1,1\n2,0,0\n";
    let curves = parse_curves(ok).unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves_to_string(&curves), "curve,x,y\n4,0.0000000000000000e0,0.0000000000000000e0\n4,1.0000000000000000e0,1.0000000000000000e0\n2,0.0000000000000000e0,0.0000000000000000e0\n");
    assert!(parse_curves("curve,x,y\n1,0,0\n2,0,0\n1,1,1\n").is_err());
}

#[test]
fn translation_flags_are_zero_or_one() {
    let rows = parse_translations("id,tx,ty,predicted_class,extrapolated\n3,1,2,0,1\n").unwrap();
    assert_eq!(rows, vec![(3, Vec2::new(1.0, 2.0), 0, true)]);
    assert!(parse_translations("id,tx,ty,predicted_class,extrapolated\n3,1,2,0,true\n").is_err());
}

proptest! {
    #[test]
    fn floats_round_trip_bit_exactly(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(x.is_finite());
        let back: f64 = fmt_float(x).parse().unwrap();
        prop_assert_eq!(back.to_bits(), x.to_bits());
    }

    #[test]
    fn codes_round_trip(raw in proptest::collection::vec((any::<u64>(), -1e12f64..1e12, -1e-300f64..1e-300), 0..20)) {
        let codes: Vec<(u64, Vec2)> = raw.into_iter().map(|(id, x, y)| (id, Vec2::new(x, y))).collect();
        let text = codes_to_string(&codes);
        let back = parse_codes(&text).unwrap();
        prop_assert_eq!(&back, &codes);
        prop_assert_eq!(codes_to_string(&back), text);
    }
}
