//! SVG diagnostics. Coordinates are printed with fixed precision so output
//! is stable and diff-able.

use std::fmt::Write as _;

use gmaplatent_core::canonical::CanonicalDomain;
use gmaplatent_core::ot::MergeMap;
use gmaplatent_core::pipeline::TransportSummary;
use gmaplatent_core::{Label, LabeledPointCloud, Vec2};

const SIZE: f64 = 600.0;
const PAD: f64 = 10.0;
const CELL_RASTER: usize = 160;
const PALETTE: [&str; 10] =
    ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"];

fn color(l: Label) -> &'static str {
    PALETTE[l as usize % PALETTE.len()]
}

/// Maps data coordinates into the picture, y up.
struct Frame {
    lo: Vec2,
    scale: f64,
    width: f64,
    height: f64,
    body: String,
}

impl Frame {
    fn new(points: impl IntoIterator<Item = Vec2>) -> Self {
        let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        if !lo.x.is_finite() {
            (lo, hi) = (Vec2::ZERO, Vec2::new(1.0, 1.0));
        }
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(1e-12);
        let scale = (SIZE - 2.0 * PAD) / extent;
        Self {
            lo,
            scale,
            width: (hi.x - lo.x) * scale + 2.0 * PAD,
            height: (hi.y - lo.y) * scale + 2.0 * PAD,
            body: String::new(),
        }
    }

    fn map(&self, p: Vec2) -> (f64, f64) {
        (PAD + (p.x - self.lo.x) * self.scale, self.height - PAD - (p.y - self.lo.y) * self.scale)
    }

    fn dot(&mut self, p: Vec2, r: f64, fill: &str) {
        let (x, y) = self.map(p);
        writeln!(self.body, r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="{fill}"/>"#).unwrap();
    }

    fn path(&mut self, pts: &[Vec2], closed: bool, style: &str) {
        let mut d = String::new();
        for (i, &p) in pts.iter().enumerate() {
            let (x, y) = self.map(p);
            write!(d, "{}{x:.2} {y:.2} ", if i == 0 { "M" } else { "L" }).unwrap();
        }
        if closed {
            d.push('Z');
        }
        writeln!(self.body, r#"<path d="{}" {style}/>"#, d.trim_end()).unwrap();
    }

    fn rect(&mut self, a: Vec2, b: Vec2, fill: &str) {
        let (x0, y0) = self.map(Vec2::new(a.x, b.y));
        let (x1, y1) = self.map(Vec2::new(b.x, a.y));
        writeln!(
            self.body,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}" fill-opacity="0.55"/>"#,
            x1 - x0,
            y1 - y0
        )
        .unwrap();
    }

    fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Samples colored by label.
pub fn points(cloud: &LabeledPointCloud) -> String {
    let mut f = Frame::new(cloud.positions());
    for s in cloud.samples() {
        f.dot(s.position, 1.6, color(s.label));
    }
    f.finish()
}

/// Power cells rasterized on a coarse grid and colored by the owning
/// sample's label, with the laid out samples on top.
pub fn cells(laid: &LabeledPointCloud, merge: &MergeMap, transport: &TransportSummary) -> String {
    let d = transport.domain;
    let mut f = Frame::new([d.min, d.max()]);
    let sites = merge.original_positions();
    let labels = laid.labels();
    let step = d.side / CELL_RASTER as f64;
    for j in 0..CELL_RASTER {
        let y = d.min.y + (j as f64 + 0.5) * step;
        let mut run: Option<(usize, Label)> = None;
        for i in 0..=CELL_RASTER {
            let owner = (i < CELL_RASTER).then(|| {
                let x = Vec2::new(d.min.x + (i as f64 + 0.5) * step, y);
                let best = (0..sites.len())
                    .max_by(|&a, &b| {
                        let pa = transport.heights[a] - (x - sites[a]).norm2();
                        let pb = transport.heights[b] - (x - sites[b]).norm2();
                        pa.total_cmp(&pb).then(b.cmp(&a))
                    })
                    .unwrap_or(0);
                labels.get(best).copied().unwrap_or(0)
            });
            match (run, owner) {
                (Some((_, l)), Some(o)) if l == o => {}
                _ => {
                    if let Some((start, l)) = run {
                        let a = Vec2::new(d.min.x + start as f64 * step, y - 0.5 * step);
                        let b = Vec2::new(d.min.x + i as f64 * step, y + 0.5 * step);
                        f.rect(a, b, color(l));
                    }
                    run = owner.map(|o| (i, o));
                }
            }
        }
    }
    for (s, &p) in laid.samples().iter().zip(sites) {
        f.dot(p, 1.2, color(s.label));
    }
    f.finish()
}

/// Canonical subdivision: triangles, face polygons and optional traces.
pub fn canonical(d: &CanonicalDomain, traces: &[Vec<Vec2>]) -> String {
    let mut f = Frame::new([Vec2::ZERO, Vec2::new(1.0, 1.0)]);
    let x = d.positions();
    for (t, l) in d.mesh().triangles.iter().zip(&d.mesh().triangle_labels) {
        let style = format!(r##"fill="{}" fill-opacity="0.35" stroke="#bbbbbb" stroke-width="0.3""##, color(*l));
        f.path(&[x[t[0]], x[t[1]], x[t[2]]], true, &style);
    }
    for face in &d.graph().faces {
        if let Some(poly) = d.face_polygon(face.label) {
            f.path(&poly, true, r#"fill="none" stroke="black" stroke-width="1.5""#);
        }
    }
    for &v in &d.graph().nodes {
        f.dot(x[v], 3.0, "black");
    }
    for t in traces {
        f.path(t, false, r#"fill="none" stroke="black" stroke-width="1" stroke-dasharray="4 2""#);
    }
    f.finish()
}

/// Source curves over the source samples next to their translations over
/// the target samples.
pub fn curves(source: &LabeledPointCloud, target: &LabeledPointCloud, traces: &[(Vec<Vec2>, Vec<Vec2>)]) -> String {
    let left = Frame::new(source.positions().into_iter().chain(traces.iter().flat_map(|t| t.0.iter().copied())));
    let right = Frame::new(target.positions().into_iter().chain(traces.iter().flat_map(|t| t.1.iter().copied())));
    let mut panels = Vec::new();
    for (mut frame, cloud, pick) in [(left, source, 0), (right, target, 1)] {
        for s in cloud.samples() {
            frame.dot(s.position, 1.2, color(s.label));
        }
        for t in traces {
            let pts = if pick == 0 { &t.0 } else { &t.1 };
            frame.path(pts, false, r#"fill="none" stroke="black" stroke-width="1.2""#);
        }
        panels.push(frame);
    }
    let w = panels[0].width + panels[1].width;
    let h = panels[0].height.max(panels[1].height);
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n<g>\n{}</g>\n<g transform=\"translate({:.2} 0)\">\n{}</g>\n</svg>\n",
        panels[0].body, panels[0].width, panels[1].body
    )
}
