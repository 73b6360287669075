//! Writes a synthetic four-cluster point file.
//!
//! `cargo run --example four_gaussians -- <out.csv> [count] [seed]`

use std::path::PathBuf;

use gmaplatent_core::io::write_points;
use gmaplatent_core::synthetic::four_gaussians;

fn main() -> gmaplatent_core::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "points.csv".into()));
    let count = args.next().map_or(200, |s| s.parse().expect("count is an integer"));
    let seed = args.next().map_or(1, |s| s.parse().expect("seed is an integer"));
    write_points(&out, &four_gaussians(count, 6.0, 1.0, seed))
}
