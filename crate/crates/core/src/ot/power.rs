//! Power-cell measures and mass centers on a deterministic `G x G` grid.
//!
//! A grid center `x` belongs to the site minimizing `|x - p_i|^2 - h_i`.
//! Along one grid row this is the lower envelope of `n` lines in `x` (the
//! shared `x^2` term drops out), so each row costs `O(n + G)` once the sites
//! are sorted.

use super::{OtProblem, Square};
use crate::geometry::Vec2;
use rayon::prelude::*;

/// 16-point Gauss-Legendre nodes and weights on `[-1, 1]`.
const GAUSS_16: [(f64, f64); 8] = [
    (0.095_012_509_837_637_44, 0.189_450_610_455_068_5),
    (0.281_603_550_779_258_9, 0.182_603_415_044_923_6),
    (0.458_016_777_657_227_4, 0.169_156_519_395_002_5),
    (0.617_876_244_402_643_7, 0.149_595_988_816_576_7),
    (0.755_404_408_355_003, 0.124_628_971_255_533_9),
    (0.865_631_202_387_831_7, 0.095_158_511_682_492_78),
    (0.944_575_023_073_232_6, 0.062_253_523_938_647_89),
    (0.989_400_934_991_649_9, 0.027_152_459_411_754_1),
];

#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    /// Fraction of grid centers assigned to each site.
    pub measures: Vec<f64>,
    /// Mean assigned grid center; the site itself for an empty cell.
    pub centroids: Vec<Vec2>,
    /// Assigned grid-center count per site.
    pub counts: Vec<u64>,
    /// Sites whose cell is empty.
    pub empty: Vec<usize>,
    /// `sum_x max_i (h_i - |x - p_i|^2) / G^2`, in domain units.
    pub lifted: f64,
}

/// Cached sorted sites of one problem at a fixed grid resolution.
#[derive(Debug, Clone)]
pub struct PowerGrid {
    domain: Square,
    /// Sites in unit-square coordinates.
    unit_sites: Vec<Vec2>,
    /// Site indices sorted by x (ascending), then by index.
    order: Vec<usize>,
    resolution: usize,
}

const ROW_BLOCK: usize = 16;

struct RowSums {
    counts: Vec<u64>,
    sum: Vec<Vec2>,
    lifted: f64,
}

impl RowSums {
    fn new(n: usize) -> Self {
        Self { counts: vec![0; n], sum: vec![Vec2::ZERO; n], lifted: 0.0 }
    }
}

#[derive(Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
    site: usize,
}

impl Line {
    #[inline]
    fn at(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

impl PowerGrid {
    pub fn new(problem: &OtProblem, resolution: usize) -> Self {
        let unit_sites: Vec<Vec2> = problem.sites.iter().map(|&p| problem.domain.to_unit(p)).collect();
        let mut order: Vec<usize> = (0..unit_sites.len()).collect();
        order.sort_by(|&a, &b| unit_sites[a].x.total_cmp(&unit_sites[b].x).then(a.cmp(&b)));
        Self { domain: problem.domain, unit_sites, order, resolution }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn domain(&self) -> Square {
        self.domain
    }

    /// Heights in domain units.
    pub fn estimate(&self, heights: &[f64]) -> CellEstimate {
        let n = self.unit_sites.len();
        let g = self.resolution;
        let scale = self.domain.side * self.domain.side;
        let h: Vec<f64> = heights.iter().map(|&v| v / scale).collect();
        // Fixed row blocks reduced in order keep the sums independent of the thread count.
        let blocks: Vec<RowSums> = (0..g.div_ceil(ROW_BLOCK))
            .into_par_iter()
            .map(|b| {
                let mut acc = RowSums::new(n);
                let mut env = Vec::with_capacity(n);
                for j in b * ROW_BLOCK..((b + 1) * ROW_BLOCK).min(g) {
                    self.scan_row(j, &h, &mut env, &mut acc);
                }
                acc
            })
            .collect();
        let mut counts = vec![0u64; n];
        let mut sum = vec![Vec2::ZERO; n];
        let mut lifted = 0.0;
        for b in &blocks {
            for i in 0..n {
                counts[i] += b.counts[i];
                sum[i] += b.sum[i];
            }
            lifted += b.lifted;
        }
        let total = (g * g) as f64;
        let mut measures = vec![0.0; n];
        let mut centroids = vec![Vec2::ZERO; n];
        let mut empty = Vec::new();
        for i in 0..n {
            measures[i] = counts[i] as f64 / total;
            if counts[i] == 0 {
                centroids[i] = self.domain.from_unit(self.unit_sites[i]);
                empty.push(i);
            } else {
                centroids[i] = self.domain.from_unit(sum[i] / counts[i] as f64);
            }
        }
        CellEstimate { measures, centroids, counts, empty, lifted: lifted / total * scale }
    }

    fn scan_row(&self, j: usize, h: &[f64], env: &mut Vec<Line>, acc: &mut RowSums) {
        let g = self.resolution;
        let step = 1.0 / g as f64;
        let y = (j as f64 + 0.5) * step;
        env.clear();
        // Lines sorted by decreasing slope: -2 u_x is decreasing in u_x.
        for &i in &self.order {
            let u = self.unit_sites[i];
            let line = Line { slope: -2.0 * u.x, intercept: u.x * u.x + (y - u.y) * (y - u.y) - h[i], site: i };
            if let Some(last) = env.last() {
                if last.slope == line.slope {
                    if line.intercept < last.intercept {
                        env.pop();
                    } else {
                        continue;
                    }
                }
            }
            while env.len() >= 2 {
                let a = env[env.len() - 2];
                let b = env[env.len() - 1];
                // b is useless if a and line cross before a and b do.
                let x_al = (line.intercept - a.intercept) / (a.slope - line.slope);
                let x_ab = (b.intercept - a.intercept) / (a.slope - b.slope);
                if x_al <= x_ab {
                    env.pop();
                } else {
                    break;
                }
            }
            env.push(line);
        }
        let flush = |line: Line, start: usize, end: usize, acc: &mut RowSums| {
            if end <= start {
                return;
            }
            let len = (end - start) as f64;
            let x0 = (start as f64 + 0.5) * step;
            let x1 = (end as f64 - 0.5) * step;
            let sx = len * 0.5 * (x0 + x1);
            acc.counts[line.site] += (end - start) as u64;
            acc.sum[line.site] += Vec2::new(sx, len * y);
            // sum over the run of (x^2 + slope x + intercept)
            let sxx: f64 = (start..end)
                .map(|i| {
                    let x = (i as f64 + 0.5) * step;
                    x * x
                })
                .sum();
            acc.lifted -= sxx + line.slope * sx + line.intercept * len;
        };
        let mut k = 0usize;
        let mut run_start = 0usize;
        for i in 0..g {
            let x = (i as f64 + 0.5) * step;
            let mut moved = false;
            while k + 1 < env.len() {
                let (cur, next) = (env[k].at(x), env[k + 1].at(x));
                if next < cur || (next == cur && env[k + 1].site < env[k].site) {
                    if !moved {
                        flush(env[k], run_start, i, acc);
                        moved = true;
                    }
                    k += 1;
                } else {
                    break;
                }
            }
            if moved {
                run_start = i;
            }
        }
        flush(env[k], run_start, g, acc);
    }

    /// Convex energy `E(h) = F(h) - F(0) - <h, nu>` with `F` the lifted sum.
    /// For the grid measure `F` is an exact antiderivative of the cell
    /// measures, so this is the closed form of the path integral.
    pub fn energy(&self, heights: &[f64], measures: &[f64]) -> f64 {
        let zero = vec![0.0; heights.len()];
        self.energy_with_base(heights, measures, self.estimate(&zero).lifted)
    }

    pub(crate) fn energy_with_base(&self, heights: &[f64], measures: &[f64], base: f64) -> f64 {
        let e = self.estimate(heights);
        e.lifted - base - heights.iter().zip(measures).map(|(h, v)| h * v).sum::<f64>()
    }
}

/// Cell measures and mass centers for heights `h` on a `G x G` grid.
pub fn estimate_measures(problem: &OtProblem, heights: &[f64], resolution: usize) -> CellEstimate {
    PowerGrid::new(problem, resolution).estimate(heights)
}

/// Energy by 16-point Gauss quadrature of `int_0^1 sum_i w_i(t h) h_i dt`
/// along the straight path from zero, minus `<h, nu>`.
pub fn quadrature_energy(problem: &OtProblem, heights: &[f64], resolution: usize) -> f64 {
    let grid = PowerGrid::new(problem, resolution);
    let mut integral = 0.0;
    for &(node, weight) in &GAUSS_16 {
        for t in [0.5 * (1.0 - node), 0.5 * (1.0 + node)] {
            let scaled: Vec<f64> = heights.iter().map(|h| h * t).collect();
            let w = grid.estimate(&scaled).measures;
            integral += 0.5 * weight * w.iter().zip(heights).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    integral - heights.iter().zip(&problem.measures).map(|(h, v)| h * v).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_problem(sites: &[(f64, f64)]) -> OtProblem {
        OtProblem::uniform(sites.iter().map(|&(x, y)| Vec2::new(x, y)).collect(), Square::unit()).unwrap()
    }

    /// Brute-force assignment of every grid center.
    fn brute(problem: &OtProblem, h: &[f64], g: usize) -> Vec<u64> {
        let mut counts = vec![0u64; problem.len()];
        for j in 0..g {
            for i in 0..g {
                let x = problem.domain.from_unit(Vec2::new((i as f64 + 0.5) / g as f64, (j as f64 + 0.5) / g as f64));
                let best = (0..problem.len())
                    .min_by(|&a, &b| {
                        let pa = (x - problem.sites[a]).norm2() - h[a];
                        let pb = (x - problem.sites[b]).norm2() - h[b];
                        pa.total_cmp(&pb).then(a.cmp(&b))
                    })
                    .unwrap();
                counts[best] += 1;
            }
        }
        counts
    }

    #[test]
    fn mirror_sites_split_evenly() {
        let p = unit_problem(&[(0.25, 0.5), (0.75, 0.5)]);
        let e = estimate_measures(&p, &[0.0, 0.0], 64);
        assert_eq!(e.measures, vec![0.5, 0.5]);
        assert!((e.centroids[0] - Vec2::new(0.25, 0.5)).norm() < 1e-12);
        assert!((e.centroids[1] - Vec2::new(0.75, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn single_site_owns_domain() {
        let p = OtProblem::uniform(vec![Vec2::new(3.0, 4.0)], Square { min: Vec2::new(2.0, 2.0), side: 4.0 }).unwrap();
        let e = estimate_measures(&p, &[0.0], 64);
        assert_eq!(e.measures, vec![1.0]);
        assert!((e.centroids[0] - Vec2::new(4.0, 4.0)).norm() < 1e-12);
    }

    #[test]
    fn collinear_sites_match_strip_areas() {
        // Bisectors at x = 0.375 and 0.625 for zero heights.
        let p = unit_problem(&[(0.25, 0.5), (0.5, 0.5), (0.75, 0.5)]);
        let g = 200;
        let e = estimate_measures(&p, &[0.0; 3], g);
        let expected = [0.375, 0.25, 0.375];
        for (w, x) in e.measures.iter().zip(expected) {
            assert!((w - x).abs() <= 2.0 / g as f64);
        }
    }

    #[test]
    fn envelope_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for n in [3usize, 17, 60] {
            let sites: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let p = unit_problem(&sites);
            let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.02)).collect();
            let mean = h.iter().sum::<f64>() / n as f64;
            h.iter_mut().for_each(|v| *v -= mean);
            let g = 97;
            let e = estimate_measures(&p, &h, g);
            let b = brute(&p, &h, g);
            let mismatch: u64 = e.counts.iter().zip(&b).map(|(a, b)| a.abs_diff(*b)).sum();
            // Only exact floating ties at cell borders may differ.
            assert!(mismatch <= 2, "mismatch {mismatch}");
            assert_eq!(e.counts.iter().sum::<u64>(), (g * g) as u64);
        }
    }

    #[test]
    fn closed_form_energy_agrees_with_quadrature() {
        let p = unit_problem(&[(0.2, 0.3), (0.7, 0.6), (0.4, 0.8), (0.8, 0.2)]);
        let h = [0.01, -0.02, 0.005, 0.005];
        let g = 256;
        let exact = PowerGrid::new(&p, g).energy(&h, &p.measures);
        let quad = quadrature_energy(&p, &h, g);
        assert!((exact - quad).abs() < 1e-5, "{exact} vs {quad}");
    }
}
