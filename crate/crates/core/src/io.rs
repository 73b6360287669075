//! Text interchange formats and pipeline bundles.
//!
//! Floats are written with 17 significant digits so every value reads back
//! bit for bit, and writing a parsed file reproduces it byte for byte.
//! Vertex references in mesh files are zero-based row positions in the
//! `VERTICES` section; triangle references are rows of `TRIANGLES`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Component, Path};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::canonical::{CanonicalDomain, RESIDUAL_TOLERANCE};
use crate::cloud::{Label, LabeledPointCloud, Sample};
use crate::error::{Error, Result};
use crate::geometry::{Chain, DecoratedMesh, Face, FeatureGraph, Vec2};
use crate::layout::LayoutTransform;
use crate::linsys::WeightScheme;
use crate::ot::{MergeMap, Square, StepRecord};
use crate::pipeline::{AlignmentPipeline, DomainStages, Provenance, TransportSummary, FORMAT_VERSION};
use crate::registration::{registration_from_positions, ChainPair, GraphCorrespondence, SLIDING_TOLERANCE};
use crate::translator::{CurveTranslation, TranslationResult};

/// Float with 17 significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(what: &str, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse(format!("{what} line {line}: {msg}"))
}

fn num<T: FromStr>(what: &str, line: usize, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| parse_err(what, line, format!("bad number `{tok}`")))
}

fn float(what: &str, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = num(what, line, tok)?;
    if !v.is_finite() {
        return Err(parse_err(what, line, format!("non-finite value `{tok}`")));
    }
    Ok(v)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- CSV

/// Rows of a CSV with exactly the header `columns`, with 1-based line numbers.
fn csv_rows(what: &str, text: &str, columns: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| parse_err(what, 1, e))?;
    if header.iter().ne(columns.iter().copied()) {
        return Err(parse_err(what, 1, format!("expected header `{}`", columns.join(","))));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(what, line, e)
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        out.push((line, record.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

pub const POINTS_HEADER: &str = "id,x,y,label";

pub fn points_to_string(cloud: &LabeledPointCloud) -> String {
    let mut s = format!("{POINTS_HEADER}\n");
    for p in cloud.samples() {
        writeln!(s, "{},{},{},{}", p.id, fmt_float(p.position.x), fmt_float(p.position.y), p.label).unwrap();
    }
    s
}

pub fn parse_points(text: &str) -> Result<LabeledPointCloud> {
    let what = "point file";
    let mut samples = Vec::new();
    for (line, r) in csv_rows(what, text, &["id", "x", "y", "label"])? {
        samples.push(Sample {
            id: num(what, line, &r[0])?,
            position: Vec2::new(float(what, line, &r[1])?, float(what, line, &r[2])?),
            label: num(what, line, &r[3])?,
        });
    }
    LabeledPointCloud::from_samples(samples).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

pub fn read_points(path: &Path) -> Result<LabeledPointCloud> {
    parse_points(&read_text(path)?)
}

pub fn write_points(path: &Path, cloud: &LabeledPointCloud) -> Result<()> {
    write_text(path, &points_to_string(cloud))
}

pub fn layout_to_string(layout: &LayoutTransform) -> String {
    let mut s = String::from("label,tx,ty\n");
    for (l, t) in &layout.translations {
        writeln!(s, "{l},{},{}", fmt_float(t.x), fmt_float(t.y)).unwrap();
    }
    s
}

pub fn parse_layout(text: &str) -> Result<LayoutTransform> {
    let what = "layout file";
    let mut translations = BTreeMap::new();
    for (line, r) in csv_rows(what, text, &["label", "tx", "ty"])? {
        let l: Label = num(what, line, &r[0])?;
        let t = Vec2::new(float(what, line, &r[1])?, float(what, line, &r[2])?);
        if translations.insert(l, t).is_some() {
            return Err(parse_err(what, line, format!("label {l} listed twice")));
        }
    }
    Ok(LayoutTransform { translations })
}

pub fn solver_report_to_string(history: &[StepRecord]) -> String {
    let mut s = String::from("step,energy,max_measure_err,empty_cells\n");
    for r in history {
        writeln!(s, "{},{},{},{}", r.step, fmt_float(r.energy), fmt_float(r.max_measure_err), r.empty_cells).unwrap();
    }
    s
}

pub fn parse_solver_report(text: &str) -> Result<Vec<StepRecord>> {
    let what = "solver report";
    csv_rows(what, text, &["step", "energy", "max_measure_err", "empty_cells"])?
        .into_iter()
        .map(|(line, r)| {
            Ok(StepRecord {
                step: num(what, line, &r[0])?,
                energy: float(what, line, &r[1])?,
                max_measure_err: float(what, line, &r[2])?,
                empty_cells: num(what, line, &r[3])?,
            })
        })
        .collect()
}

/// Class correspondence CSV `source,target`; must be a bijection.
pub fn parse_class_map(text: &str) -> Result<BTreeMap<Label, Label>> {
    let what = "class correspondence";
    let mut map = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for (line, r) in csv_rows(what, text, &["source", "target"])? {
        let (s, t): (Label, Label) = (num(what, line, &r[0])?, num(what, line, &r[1])?);
        if map.insert(s, t).is_some() || !seen.insert(t) {
            return Err(parse_err(what, line, format!("{s} -> {t} breaks the bijection")));
        }
    }
    Ok(map)
}

pub fn class_map_to_string(map: &BTreeMap<Label, Label>) -> String {
    let mut s = String::from("source,target\n");
    for (a, b) in map {
        writeln!(s, "{a},{b}").unwrap();
    }
    s
}

/// Translation queries `id,x,y`.
pub fn parse_codes(text: &str) -> Result<Vec<(u64, Vec2)>> {
    let what = "translation input";
    csv_rows(what, text, &["id", "x", "y"])?
        .into_iter()
        .map(|(line, r)| Ok((num(what, line, &r[0])?, Vec2::new(float(what, line, &r[1])?, float(what, line, &r[2])?))))
        .collect()
}

pub fn codes_to_string(codes: &[(u64, Vec2)]) -> String {
    let mut s = String::from("id,x,y\n");
    for (id, p) in codes {
        writeln!(s, "{id},{},{}", fmt_float(p.x), fmt_float(p.y)).unwrap();
    }
    s
}

pub fn translations_to_string(rows: &[(u64, TranslationResult)]) -> String {
    let mut s = String::from("id,tx,ty,predicted_class,extrapolated\n");
    for (id, r) in rows {
        let p = r.target_position;
        writeln!(s, "{id},{},{},{},{}", fmt_float(p.x), fmt_float(p.y), r.predicted_class, u8::from(r.extrapolated)).unwrap();
    }
    s
}

/// Output rows `id,tx,ty,predicted_class,extrapolated`.
pub fn parse_translations(text: &str) -> Result<Vec<(u64, Vec2, Label, bool)>> {
    let what = "translation output";
    csv_rows(what, text, &["id", "tx", "ty", "predicted_class", "extrapolated"])?
        .into_iter()
        .map(|(line, r)| {
            let flag = match r[4].as_str() {
                "0" => false,
                "1" => true,
                other => return Err(parse_err(what, line, format!("bad flag `{other}`"))),
            };
            Ok((
                num(what, line, &r[0])?,
                Vec2::new(float(what, line, &r[1])?, float(what, line, &r[2])?),
                num(what, line, &r[3])?,
                flag,
            ))
        })
        .collect()
}

/// Polylines `curve,x,y`, rows of one curve contiguous and in order.
pub fn parse_curves(text: &str) -> Result<Vec<(u64, Vec<Vec2>)>> {
    let what = "curve file";
    let mut out: Vec<(u64, Vec<Vec2>)> = Vec::new();
    for (line, r) in csv_rows(what, text, &["curve", "x", "y"])? {
        let c: u64 = num(what, line, &r[0])?;
        let p = Vec2::new(float(what, line, &r[1])?, float(what, line, &r[2])?);
        match out.last_mut() {
            Some((last, pts)) if *last == c => pts.push(p),
            _ => {
                if out.iter().any(|(k, _)| *k == c) {
                    return Err(parse_err(what, line, format!("rows of curve {c} are not contiguous")));
                }
                out.push((c, vec![p]));
            }
        }
    }
    Ok(out)
}

pub fn curves_to_string(curves: &[(u64, Vec<Vec2>)]) -> String {
    let mut s = String::from("curve,x,y\n");
    for (c, pts) in curves {
        for p in pts {
            writeln!(s, "{c},{},{}", fmt_float(p.x), fmt_float(p.y)).unwrap();
        }
    }
    s
}

/// Translated curve samples `curve,index,x,y,tx,ty,predicted_class,extrapolated`,
/// where `x,y` is the densified source sample.
pub fn curve_translations_to_string(curves: &[(u64, Vec<Vec2>, CurveTranslation)]) -> String {
    let mut s = String::from("curve,index,x,y,tx,ty,predicted_class,extrapolated\n");
    for (c, input, t) in curves {
        for (i, (p, r)) in input.iter().zip(&t.points).enumerate() {
            let q = r.target_position;
            writeln!(
                s,
                "{c},{i},{},{},{},{},{},{}",
                fmt_float(p.x),
                fmt_float(p.y),
                fmt_float(q.x),
                fmt_float(q.y),
                r.predicted_class,
                u8::from(r.extrapolated)
            )
            .unwrap();
        }
    }
    s
}

// ---------------------------------------------------------------- sections

/// Whitespace-separated line reader for the sectioned formats. Blank lines
/// and lines starting with `#` are skipped.
struct Lines<'a> {
    what: &'static str,
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
}

impl<'a> Lines<'a> {
    fn new(what: &'static str, text: &'a str) -> Self {
        Self { what, lines: text.lines().enumerate().peekable() }
    }

    fn skip_blank(&mut self) {
        while let Some((_, l)) = self.lines.peek() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                self.lines.next();
            } else {
                break;
            }
        }
    }

    fn peek_keyword(&mut self) -> Option<&'a str> {
        self.skip_blank();
        self.lines.peek().and_then(|(_, l)| l.split_whitespace().next())
    }

    fn next(&mut self) -> Result<(usize, Vec<&'a str>)> {
        self.skip_blank();
        match self.lines.next() {
            Some((i, l)) => Ok((i + 1, l.split_whitespace().collect())),
            None => Err(Error::Parse(format!("{}: unexpected end of file", self.what))),
        }
    }

    /// A line `keyword args...`; returns the line number and arguments.
    fn keyword(&mut self, keyword: &str) -> Result<(usize, Vec<&'a str>)> {
        let (line, toks) = self.next()?;
        if toks.first() != Some(&keyword) {
            return Err(parse_err(self.what, line, format!("expected `{keyword}`")));
        }
        Ok((line, toks[1..].to_vec()))
    }

    /// A line `keyword <count>`.
    fn counted(&mut self, keyword: &str) -> Result<usize> {
        let (line, args) = self.keyword(keyword)?;
        match args.as_slice() {
            [n] => num(self.what, line, n),
            _ => Err(parse_err(self.what, line, format!("expected `{keyword} <count>`"))),
        }
    }

    fn row(&mut self, width: usize) -> Result<(usize, Vec<&'a str>)> {
        let (line, toks) = self.next()?;
        if toks.len() != width {
            return Err(parse_err(self.what, line, format!("expected {width} fields, found {}", toks.len())));
        }
        Ok((line, toks))
    }

    fn num<T: FromStr>(&self, line: usize, tok: &str) -> Result<T> {
        num(self.what, line, tok)
    }

    fn float(&self, line: usize, tok: &str) -> Result<f64> {
        float(self.what, line, tok)
    }

    fn index(&self, line: usize, tok: &str, bound: usize) -> Result<usize> {
        let i: usize = self.num(line, tok)?;
        if i >= bound {
            return Err(parse_err(self.what, line, format!("index {i} out of range 0..{bound}")));
        }
        Ok(i)
    }

    fn end(&mut self) -> Result<()> {
        self.skip_blank();
        match self.lines.next() {
            None => Ok(()),
            Some((i, _)) => Err(parse_err(self.what, i + 1, "trailing content")),
        }
    }
}

fn side_label(l: Option<Label>) -> String {
    l.map_or_else(|| "-".to_string(), |l| l.to_string())
}

fn write_mesh_body(s: &mut String, mesh: &DecoratedMesh) {
    writeln!(s, "CLASSES {}", mesh.class_count).unwrap();
    writeln!(s, "SAMPLES {}", mesh.sample_count).unwrap();
    writeln!(s, "VERTICES {}", mesh.vertex_count()).unwrap();
    for (i, p) in mesh.vertices.iter().enumerate() {
        writeln!(s, "{} {} {} {}", mesh.vertex_ids[i], fmt_float(p.x), fmt_float(p.y), mesh.vertex_labels[i]).unwrap();
    }
    writeln!(s, "TRIANGLES {}", mesh.triangles.len()).unwrap();
    for (t, l) in mesh.triangles.iter().zip(&mesh.triangle_labels) {
        writeln!(s, "{} {} {} {l}", t[0], t[1], t[2]).unwrap();
    }
    if let Some(g) = &mesh.graph {
        writeln!(s, "GRAPH").unwrap();
        let [a, b, c, d] = g.corners;
        writeln!(s, "CORNERS {a} {b} {c} {d}").unwrap();
        writeln!(s, "NODES {}", g.nodes.len()).unwrap();
        for v in &g.nodes {
            writeln!(s, "{v}").unwrap();
        }
        writeln!(s, "CHAINS {}", g.chains.len()).unwrap();
        for c in &g.chains {
            let path: Vec<String> = c.vertices.iter().map(usize::to_string).collect();
            writeln!(s, "{} {} {} {}", side_label(c.left), side_label(c.right), c.vertices.len(), path.join(" ")).unwrap();
        }
        writeln!(s, "FACES {}", g.faces.len()).unwrap();
        for f in &g.faces {
            let tris: Vec<String> = f.triangles.iter().map(usize::to_string).collect();
            let bnd: Vec<String> = f.boundary.iter().map(usize::to_string).collect();
            writeln!(s, "{} {} {} {} {}", f.label, tris.len(), tris.join(" "), bnd.len(), bnd.join(" ")).unwrap();
        }
    }
}

/// Reads counted items `<count> a b c ...` from `toks[at..]`.
fn counted_list(lines: &Lines, line: usize, toks: &[&str], at: usize, bound: usize) -> Result<(Vec<usize>, usize)> {
    let k: usize = lines.num(line, toks.get(at).ok_or_else(|| parse_err(lines.what, line, "missing count"))?)?;
    let items = toks.get(at + 1..at + 1 + k).ok_or_else(|| parse_err(lines.what, line, "list shorter than its count"))?;
    let v = items.iter().map(|t| lines.index(line, t, bound)).collect::<Result<Vec<_>>>()?;
    Ok((v, at + 1 + k))
}

fn parse_side(lines: &Lines, line: usize, tok: &str) -> Result<Option<Label>> {
    if tok == "-" {
        Ok(None)
    } else {
        lines.num(line, tok).map(Some)
    }
}

fn parse_mesh_body(lines: &mut Lines) -> Result<DecoratedMesh> {
    let class_count = lines.counted("CLASSES")?;
    let sample_count = lines.counted("SAMPLES")?;
    let n = lines.counted("VERTICES")?;
    let (mut vertices, mut ids, mut labels) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for _ in 0..n {
        let (line, t) = lines.row(4)?;
        ids.push(lines.num(line, t[0])?);
        vertices.push(Vec2::new(lines.float(line, t[1])?, lines.float(line, t[2])?));
        labels.push(lines.num(line, t[3])?);
    }
    let m = lines.counted("TRIANGLES")?;
    let (mut triangles, mut tri_labels) = (Vec::with_capacity(m), Vec::with_capacity(m));
    for _ in 0..m {
        let (line, t) = lines.row(4)?;
        triangles.push([lines.index(line, t[0], n)?, lines.index(line, t[1], n)?, lines.index(line, t[2], n)?]);
        tri_labels.push(lines.num(line, t[3])?);
    }
    if sample_count > n {
        return Err(Error::Parse(format!("{}: {sample_count} samples but {n} vertices", lines.what)));
    }
    let mut mesh = DecoratedMesh::new(vertices, ids, labels, triangles, tri_labels, class_count)
        .map_err(|e| Error::Parse(format!("{}: {e}", lines.what)))?;
    mesh.sample_count = sample_count;
    if lines.peek_keyword() == Some("GRAPH") {
        lines.keyword("GRAPH")?;
        let (line, c) = lines.keyword("CORNERS")?;
        if c.len() != 4 {
            return Err(parse_err(lines.what, line, "expected four corners"));
        }
        let corners = [lines.index(line, c[0], n)?, lines.index(line, c[1], n)?, lines.index(line, c[2], n)?, lines.index(line, c[3], n)?];
        let k = lines.counted("NODES")?;
        let mut nodes = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, t) = lines.row(1)?;
            nodes.push(lines.index(line, t[0], n)?);
        }
        let k = lines.counted("CHAINS")?;
        let mut chains = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, t) = lines.next()?;
            if t.len() < 3 {
                return Err(parse_err(lines.what, line, "chain needs sides and a path"));
            }
            let (left, right) = (parse_side(lines, line, t[0])?, parse_side(lines, line, t[1])?);
            let (vertices, used) = counted_list(lines, line, &t, 2, n)?;
            if used != t.len() || vertices.len() < 2 {
                return Err(parse_err(lines.what, line, "malformed chain path"));
            }
            chains.push(Chain { vertices, left, right });
        }
        let k = lines.counted("FACES")?;
        let mut faces = Vec::with_capacity(k);
        for _ in 0..k {
            let (line, t) = lines.next()?;
            let label: Label = lines.num(line, t.first().copied().unwrap_or(""))?;
            let (triangles, at) = counted_list(lines, line, &t, 1, m)?;
            let (boundary, used) = counted_list(lines, line, &t, at, n)?;
            if used != t.len() {
                return Err(parse_err(lines.what, line, "trailing fields in face"));
            }
            faces.push(Face { label, triangles, boundary });
        }
        mesh.graph = Some(FeatureGraph { nodes, chains, faces, corners });
    }
    Ok(mesh)
}

pub fn mesh_to_string(mesh: &DecoratedMesh) -> String {
    let mut s = String::new();
    write_mesh_body(&mut s, mesh);
    s
}

pub fn parse_mesh(text: &str) -> Result<DecoratedMesh> {
    let mut lines = Lines::new("mesh file", text);
    let mesh = parse_mesh_body(&mut lines)?;
    lines.end()?;
    Ok(mesh)
}

pub fn read_mesh(path: &Path) -> Result<DecoratedMesh> {
    parse_mesh(&read_text(path)?)
}

fn scheme_name(s: WeightScheme) -> &'static str {
    match s {
        WeightScheme::InteriorCotangent => "cotangent",
        WeightScheme::InteriorMeanValue => "mean-value",
        WeightScheme::Fixed => "fixed",
        WeightScheme::ChainBarycentric => "chain-barycentric",
        WeightScheme::NodeMeanValue => "node-mean-value",
        WeightScheme::Uniform => "uniform",
    }
}

fn parse_scheme(lines: &Lines, line: usize, tok: &str) -> Result<WeightScheme> {
    match tok {
        "cotangent" => Ok(WeightScheme::InteriorCotangent),
        "mean-value" => Ok(WeightScheme::InteriorMeanValue),
        _ => Err(parse_err(lines.what, line, format!("unknown interior weights `{tok}`"))),
    }
}

fn write_positions(s: &mut String, x: &[Vec2]) {
    writeln!(s, "POSITIONS {}", x.len()).unwrap();
    for p in x {
        writeln!(s, "{} {}", fmt_float(p.x), fmt_float(p.y)).unwrap();
    }
}

fn parse_positions(lines: &mut Lines) -> Result<Vec<Vec2>> {
    let n = lines.counted("POSITIONS")?;
    (0..n)
        .map(|_| {
            let (line, t) = lines.row(2)?;
            Ok(Vec2::new(lines.float(line, t[0])?, lines.float(line, t[1])?))
        })
        .collect()
}

/// Mesh file of the straightened mesh followed by a `CANONICAL` section with
/// all canonical positions, the node positions and the face polygons.
pub fn canonical_to_string(d: &CanonicalDomain) -> String {
    let mut s = String::new();
    write_mesh_body(&mut s, d.mesh());
    let r = d.report();
    writeln!(s, "CANONICAL").unwrap();
    writeln!(s, "WEIGHTS {}", scheme_name(r.interior_weights)).unwrap();
    writeln!(s, "STEINER {}", r.steiner_vertices).unwrap();
    write_positions(&mut s, d.positions());
    let g = d.graph();
    writeln!(s, "NODE_POSITIONS {}", g.nodes.len()).unwrap();
    for &v in &g.nodes {
        let p = d.positions()[v];
        writeln!(s, "{v} {} {}", fmt_float(p.x), fmt_float(p.y)).unwrap();
    }
    writeln!(s, "FACE_POLYGONS {}", g.faces.len()).unwrap();
    for f in &g.faces {
        let poly = d.face_polygon(f.label).unwrap_or_default();
        let coords: Vec<String> = poly.iter().flat_map(|p| [fmt_float(p.x), fmt_float(p.y)]).collect();
        writeln!(s, "{} {} {}", f.label, poly.len(), coords.join(" ")).unwrap();
    }
    s
}

/// Parses a canonical file. The derived node and face listings must agree
/// with the positions; the report is recomputed, not read.
pub fn parse_canonical(text: &str) -> Result<CanonicalDomain> {
    let mut lines = Lines::new("canonical file", text);
    let mesh = parse_mesh_body(&mut lines)?;
    lines.keyword("CANONICAL")?;
    let (line, w) = lines.keyword("WEIGHTS")?;
    let scheme = parse_scheme(&lines, line, w.first().copied().unwrap_or(""))?;
    let steiner = lines.counted("STEINER")?;
    let positions = parse_positions(&mut lines)?;
    let k = lines.counted("NODE_POSITIONS")?;
    let mut nodes = Vec::with_capacity(k);
    for _ in 0..k {
        let (line, t) = lines.row(3)?;
        nodes.push((line, lines.num::<usize>(line, t[0])?, Vec2::new(lines.float(line, t[1])?, lines.float(line, t[2])?)));
    }
    let k = lines.counted("FACE_POLYGONS")?;
    let mut polygons = Vec::with_capacity(k);
    for _ in 0..k {
        let (line, t) = lines.next()?;
        let label: Label = lines.num(line, t.first().copied().unwrap_or(""))?;
        let count: usize = lines.num(line, t.get(1).copied().unwrap_or(""))?;
        if t.len() != 2 + 2 * count {
            return Err(parse_err(lines.what, line, "polygon length disagrees with its count"));
        }
        let poly = (0..count)
            .map(|i| Ok(Vec2::new(lines.float(line, t[2 + 2 * i])?, lines.float(line, t[3 + 2 * i])?)))
            .collect::<Result<Vec<_>>>()?;
        polygons.push((line, label, poly));
    }
    lines.end()?;
    let what = lines.what;
    let d = CanonicalDomain::from_positions(mesh, positions, scheme, steiner).map_err(|e| Error::Parse(format!("{what}: {e}")))?;
    if nodes.len() != d.graph().nodes.len() {
        return Err(Error::Parse(format!("{what}: node listing disagrees with the graph")));
    }
    for ((line, v, p), &w) in nodes.iter().zip(&d.graph().nodes) {
        if *v != w || d.positions()[w] != *p {
            return Err(parse_err(what, *line, "node position disagrees with the positions"));
        }
    }
    if polygons.len() != d.graph().faces.len() {
        return Err(Error::Parse(format!("{what}: face listing disagrees with the graph")));
    }
    for ((line, label, poly), f) in polygons.iter().zip(&d.graph().faces) {
        if *label != f.label || d.face_polygon(f.label).as_ref() != Some(poly) {
            return Err(parse_err(what, *line, "face polygon disagrees with the positions"));
        }
    }
    Ok(d)
}

pub fn read_canonical(path: &Path) -> Result<CanonicalDomain> {
    parse_canonical(&read_text(path)?)
}

/// The merge map `o` with its transport state. Vertex rows are
/// `id label original_x original_y merged_x merged_y height`.
#[derive(Debug, Clone)]
pub struct MergeFile {
    pub ids: Vec<u64>,
    pub labels: Vec<Label>,
    pub map: MergeMap,
    pub transport: TransportSummary,
}

pub fn merge_to_string(ids: &[u64], labels: &[Label], map: &MergeMap, transport: &TransportSummary) -> String {
    let mut s = String::from("MERGE\n");
    let d = transport.domain;
    writeln!(s, "DOMAIN {} {} {}", fmt_float(d.min.x), fmt_float(d.min.y), fmt_float(d.side)).unwrap();
    writeln!(s, "SOLVER {} {}", transport.steps, fmt_float(transport.max_error)).unwrap();
    writeln!(s, "VERTICES {}", ids.len()).unwrap();
    let (o, m) = (map.original_positions(), map.merged_positions());
    for i in 0..ids.len() {
        writeln!(
            s,
            "{} {} {} {} {} {} {}",
            ids[i],
            labels[i],
            fmt_float(o[i].x),
            fmt_float(o[i].y),
            fmt_float(m[i].x),
            fmt_float(m[i].y),
            fmt_float(transport.heights[i])
        )
        .unwrap();
    }
    writeln!(s, "TRIANGLES {}", map.triangles().len()).unwrap();
    for t in map.triangles() {
        writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    s
}

pub fn parse_merge(text: &str) -> Result<MergeFile> {
    let mut lines = Lines::new("merge file", text);
    lines.keyword("MERGE")?;
    let (line, d) = lines.keyword("DOMAIN")?;
    if d.len() != 3 {
        return Err(parse_err(lines.what, line, "expected `DOMAIN min_x min_y side`"));
    }
    let domain = Square { min: Vec2::new(lines.float(line, d[0])?, lines.float(line, d[1])?), side: lines.float(line, d[2])? };
    let (line, sv) = lines.keyword("SOLVER")?;
    if sv.len() != 2 {
        return Err(parse_err(lines.what, line, "expected `SOLVER steps max_error`"));
    }
    let (steps, max_error) = (lines.num(line, sv[0])?, lines.float(line, sv[1])?);
    let n = lines.counted("VERTICES")?;
    let (mut ids, mut labels, mut original, mut merged, mut heights) = (vec![], vec![], vec![], vec![], vec![]);
    for _ in 0..n {
        let (line, t) = lines.row(7)?;
        ids.push(lines.num(line, t[0])?);
        labels.push(lines.num(line, t[1])?);
        original.push(Vec2::new(lines.float(line, t[2])?, lines.float(line, t[3])?));
        merged.push(Vec2::new(lines.float(line, t[4])?, lines.float(line, t[5])?));
        heights.push(lines.float(line, t[6])?);
    }
    let m = lines.counted("TRIANGLES")?;
    let mut triangles = Vec::with_capacity(m);
    for _ in 0..m {
        let (line, t) = lines.row(3)?;
        triangles.push([lines.index(line, t[0], n)?, lines.index(line, t[1], n)?, lines.index(line, t[2], n)?]);
    }
    lines.end()?;
    let map = MergeMap::new(triangles, original, merged).map_err(|e| Error::Parse(format!("merge file: {e}")))?;
    Ok(MergeFile { ids, labels, map, transport: TransportSummary { domain, heights, steps, max_error } })
}

pub fn read_merge(path: &Path) -> Result<MergeFile> {
    parse_merge(&read_text(path)?)
}

/// Registration `h`: the graph correspondence it was solved under and the
/// image of every source canonical vertex.
pub fn registration_to_string(corr: &GraphCorrespondence, scheme: WeightScheme, positions: &[Vec2]) -> String {
    let mut s = String::from("REGISTRATION\n");
    writeln!(s, "WEIGHTS {}", scheme_name(scheme)).unwrap();
    writeln!(s, "CLASS_PAIRS {}", corr.class_map.len()).unwrap();
    for (a, b) in &corr.class_map {
        writeln!(s, "{a} {b}").unwrap();
    }
    writeln!(s, "NODE_PAIRS {}", corr.nodes.len()).unwrap();
    for (a, b) in &corr.nodes {
        writeln!(s, "{a} {b}").unwrap();
    }
    writeln!(s, "CHAIN_PAIRS {}", corr.chains.len()).unwrap();
    for c in &corr.chains {
        writeln!(s, "{} {} {}", c.source, c.target, u8::from(c.reversed)).unwrap();
    }
    write_positions(&mut s, positions);
    s
}

pub fn parse_registration(text: &str) -> Result<(GraphCorrespondence, WeightScheme, Vec<Vec2>)> {
    let mut lines = Lines::new("registration file", text);
    lines.keyword("REGISTRATION")?;
    let (line, w) = lines.keyword("WEIGHTS")?;
    let scheme = parse_scheme(&lines, line, w.first().copied().unwrap_or(""))?;
    let mut class_map = BTreeMap::new();
    for _ in 0..lines.counted("CLASS_PAIRS")? {
        let (line, t) = lines.row(2)?;
        class_map.insert(lines.num(line, t[0])?, lines.num(line, t[1])?);
    }
    let mut nodes = Vec::new();
    for _ in 0..lines.counted("NODE_PAIRS")? {
        let (line, t) = lines.row(2)?;
        nodes.push((lines.num(line, t[0])?, lines.num(line, t[1])?));
    }
    let mut chains = Vec::new();
    for _ in 0..lines.counted("CHAIN_PAIRS")? {
        let (line, t) = lines.row(3)?;
        let reversed = match t[2] {
            "0" => false,
            "1" => true,
            other => return Err(parse_err(lines.what, line, format!("bad flag `{other}`"))),
        };
        chains.push(ChainPair { source: lines.num(line, t[0])?, target: lines.num(line, t[1])?, reversed });
    }
    let positions = parse_positions(&mut lines)?;
    lines.end()?;
    Ok((GraphCorrespondence { class_map, nodes, chains }, scheme, positions))
}

// ---------------------------------------------------------------- bundles

pub const MANIFEST: &str = "manifest.json";

/// Per-domain file names, shared by bundles and stage directories.
pub const POINTS_FILE: &str = "points.csv";
pub const LAYOUT_FILE: &str = "layout.csv";
pub const MERGE_FILE: &str = "merge.map";
pub const CANONICAL_FILE: &str = "canonical.mesh";
pub const REGISTRATION_FILE: &str = "registration.map";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub laplacian_residual: f64,
    pub chain_sliding: f64,
    pub chain_collinearity: f64,
    pub area_sum: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            laplacian_residual: RESIDUAL_TOLERANCE,
            chain_sliding: SLIDING_TOLERANCE,
            chain_collinearity: 1e-6,
            area_sum: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub name: String,
    pub file: String,
    /// `forward` or `inverse`.
    pub applied: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub provenance: Provenance,
    pub tolerances: Tolerances,
    /// `(source label, target label)`, ascending by source.
    pub class_correspondence: Vec<(Label, Label)>,
    pub source_samples: String,
    pub target_samples: String,
    /// Stages in application order of `f`.
    pub stages: Vec<StageEntry>,
}

fn stage_list() -> Vec<StageEntry> {
    let e = |name: &str, file: String, applied: &str| StageEntry { name: name.into(), file, applied: applied.into() };
    vec![
        e("t1", format!("source/{LAYOUT_FILE}"), "forward"),
        e("o1", format!("source/{MERGE_FILE}"), "forward"),
        e("phi1", format!("source/{CANONICAL_FILE}"), "forward"),
        e("h", REGISTRATION_FILE.into(), "forward"),
        e("phi2", format!("target/{CANONICAL_FILE}"), "inverse"),
        e("o2", format!("target/{MERGE_FILE}"), "inverse"),
        e("t2", format!("target/{LAYOUT_FILE}"), "inverse"),
    ]
}

pub fn manifest_of(p: &AlignmentPipeline) -> Manifest {
    Manifest {
        version: FORMAT_VERSION,
        provenance: p.provenance.clone(),
        tolerances: Tolerances::default(),
        class_correspondence: p.class_map().iter().map(|(&a, &b)| (a, b)).collect(),
        source_samples: format!("source/{POINTS_FILE}"),
        target_samples: format!("target/{POINTS_FILE}"),
        stages: stage_list(),
    }
}

fn json_to_string<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("manifest serializes");
    s.push('\n');
    s
}

fn json_from_str<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(format!("{what}: {e}")))
}

/// Contents of every bundle file, keyed by relative path.
pub fn bundle_files(p: &AlignmentPipeline) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    for (dir, d) in [("source", &p.source), ("target", &p.target)] {
        for (name, text) in domain_files(d) {
            files.insert(format!("{dir}/{name}"), text);
        }
    }
    files.insert(
        REGISTRATION_FILE.into(),
        registration_to_string(&p.correspondence, p.registration_report.interior_weights, p.registration.target_positions()),
    );
    files.insert(MANIFEST.into(), json_to_string(&manifest_of(p)));
    files
}

/// Files of one domain's stages, keyed by file name.
pub fn domain_files(d: &DomainStages) -> BTreeMap<&'static str, String> {
    let ids: Vec<u64> = d.cloud.ids();
    let labels = d.cloud.labels();
    BTreeMap::from([
        (POINTS_FILE, points_to_string(&d.cloud)),
        (LAYOUT_FILE, layout_to_string(&d.layout)),
        (MERGE_FILE, merge_to_string(&ids, &labels, &d.merge, &d.transport)),
        (CANONICAL_FILE, canonical_to_string(&d.canonical)),
    ])
}

pub fn write_domain_dir(dir: &Path, d: &DomainStages) -> Result<()> {
    for (name, text) in domain_files(d) {
        write_text(&dir.join(name), &text)?;
    }
    Ok(())
}

fn domain_from_files(
    points: &str,
    layout: &str,
    merge: &str,
    canonical: &str,
) -> Result<DomainStages> {
    let cloud = parse_points(points)?;
    let layout = parse_layout(layout)?;
    let merge = parse_merge(merge)?;
    let canonical = parse_canonical(canonical)?;
    if merge.ids != cloud.ids() || merge.labels != cloud.labels() {
        return Err(Error::StageMismatch("merge map samples differ from the point file".into()));
    }
    Ok(DomainStages { cloud, layout, merge: merge.map, canonical, transport: merge.transport })
}

/// Loads a domain from a directory holding the four per-domain files.
pub fn read_domain_dir(dir: &Path) -> Result<DomainStages> {
    domain_from_files(
        &read_text(&dir.join(POINTS_FILE))?,
        &read_text(&dir.join(LAYOUT_FILE))?,
        &read_text(&dir.join(MERGE_FILE))?,
        &read_text(&dir.join(CANONICAL_FILE))?,
    )
}

/// Writes the bundle, replacing files of the same names.
pub fn write_bundle(dir: &Path, p: &AlignmentPipeline) -> Result<()> {
    for (name, text) in bundle_files(p) {
        write_text(&dir.join(name), &text)?;
    }
    Ok(())
}

fn relative_file(dir: &Path, name: &str) -> Result<std::path::PathBuf> {
    let rel = Path::new(name);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err(Error::Parse(format!("bundle path `{name}` leaves the bundle")));
    }
    Ok(dir.join(rel))
}

/// Loads a bundle. Reports are recomputed from the stored positions, and the
/// stages are checked to fit together.
pub fn read_bundle(dir: &Path) -> Result<AlignmentPipeline> {
    let manifest: Manifest = json_from_str(MANIFEST, &read_text(&dir.join(MANIFEST))?)?;
    if manifest.version != FORMAT_VERSION {
        return Err(Error::Parse(format!("bundle version {} is not {FORMAT_VERSION}", manifest.version)));
    }
    let names: Vec<&str> = manifest.stages.iter().map(|s| s.name.as_str()).collect();
    if names != ["t1", "o1", "phi1", "h", "phi2", "o2", "t2"] {
        return Err(Error::Parse(format!("unexpected stage list {names:?}")));
    }
    let file = |i: usize| -> Result<String> { read_text(&relative_file(dir, &manifest.stages[i].file)?) };
    let source = domain_from_files(
        &read_text(&relative_file(dir, &manifest.source_samples)?)?,
        &file(0)?,
        &file(1)?,
        &file(2)?,
    )?;
    let target = domain_from_files(
        &read_text(&relative_file(dir, &manifest.target_samples)?)?,
        &file(6)?,
        &file(5)?,
        &file(4)?,
    )?;
    let (correspondence, scheme, positions) = parse_registration(&file(3)?)?;
    let listed: Vec<(Label, Label)> = correspondence.class_map.iter().map(|(&a, &b)| (a, b)).collect();
    if listed != manifest.class_correspondence {
        return Err(Error::StageMismatch("manifest and registration disagree on the class correspondence".into()));
    }
    let registration = registration_from_positions(&source.canonical, &target.canonical, &correspondence, positions, scheme)?;
    let pipeline = AlignmentPipeline {
        source,
        target,
        registration: registration.map,
        registration_report: registration.report,
        correspondence,
        provenance: manifest.provenance,
    };
    pipeline.check_stages()?;
    Ok(pipeline)
}
