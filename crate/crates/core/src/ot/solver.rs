//! Adam descent on the convex transport energy.

use super::power::PowerGrid;
use super::OtProblem;
use crate::error::Error;
use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq)]
pub struct OtConfig {
    pub grid: usize,
    /// Step size in units of `|Omega| / sqrt(n)`.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub max_steps: usize,
    /// Max allowed `|w_i - nu_i|`; `None` means `0.05 * min nu`.
    pub tolerance: Option<f64>,
    /// A cell empty for this many consecutive steps while the best error has
    /// not improved for as many steps counts as persistently empty.
    pub stall_window: usize,
    /// Steps without a new best error before the step size is halved.
    pub patience: usize,
}

impl Default for OtConfig {
    fn default() -> Self {
        Self {
            grid: 512,
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            max_steps: 5000,
            tolerance: None,
            stall_window: 200,
            patience: 100,
        }
    }
}

/// Heights, cell measures and mass centers at one height vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDiagramState {
    /// Heights in domain units, summing to zero.
    pub heights: Vec<f64>,
    pub measures: Vec<f64>,
    pub centroids: Vec<Vec2>,
    pub empty: Vec<usize>,
    pub grid_resolution: usize,
    pub max_error: f64,
    pub energy: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub energy: f64,
    pub max_measure_err: f64,
    pub empty_cells: usize,
}

#[derive(Debug, Clone)]
pub struct OtSolution {
    pub state: PowerDiagramState,
    pub history: Vec<StepRecord>,
}

/// Failed solve with the best state seen (smallest measure error).
#[derive(Debug)]
pub struct OtFailure {
    pub error: Error,
    pub best: PowerDiagramState,
    pub history: Vec<StepRecord>,
}

impl From<OtFailure> for Error {
    fn from(f: OtFailure) -> Self {
        f.error
    }
}

fn recenter(h: &mut [f64]) {
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    h.iter_mut().for_each(|v| *v -= mean);
}

pub fn solve_ot(problem: &OtProblem, config: &OtConfig) -> Result<OtSolution, OtFailure> {
    let n = problem.len();
    let grid = PowerGrid::new(problem, config.grid);
    let min_nu = problem.measures.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = config.tolerance.unwrap_or(0.05 * min_nu);
    let mut step_scale = config.learning_rate * problem.domain.area() / (n as f64).sqrt();
    let mut since_best = 0usize;
    let mut stalled = 0usize;

    let mut h = vec![0.0; n];
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut empty_streak = vec![0usize; n];
    let mut history = Vec::new();
    let mut best: Option<PowerDiagramState> = None;
    let base = grid.estimate(&h).lifted;

    for step in 0..=config.max_steps {
        let est = grid.estimate(&h);
        let energy = est.lifted - base - h.iter().zip(&problem.measures).map(|(a, b)| a * b).sum::<f64>();
        let max_error = est
            .measures
            .iter()
            .zip(&problem.measures)
            .map(|(w, nu)| (w - nu).abs())
            .fold(0.0, f64::max);
        history.push(StepRecord { step, energy, max_measure_err: max_error, empty_cells: est.empty.len() });
        let state = PowerDiagramState {
            heights: h.clone(),
            measures: est.measures.clone(),
            centroids: est.centroids.clone(),
            empty: est.empty.clone(),
            grid_resolution: config.grid,
            max_error,
            energy,
            steps: step,
        };
        if max_error <= tol && est.empty.is_empty() {
            return Ok(OtSolution { state, history });
        }
        if best.as_ref().map(|b| max_error < b.max_error).unwrap_or(true) {
            best = Some(state);
            since_best = 0;
            stalled = 0;
        } else {
            since_best += 1;
            stalled += 1;
            if config.patience > 0 && since_best >= config.patience {
                step_scale *= 0.5;
                since_best = 0;
            }
        }
        for &i in &est.empty {
            empty_streak[i] += 1;
        }
        for i in 0..n {
            if est.counts[i] > 0 {
                empty_streak[i] = 0;
            } else if empty_streak[i] >= config.stall_window && stalled >= config.stall_window {
                return Err(OtFailure {
                    error: Error::EmptyCellPersistent(i, empty_streak[i]),
                    best: best.unwrap(),
                    history,
                });
            }
        }
        if step == config.max_steps {
            break;
        }

        let t = (step + 1) as i32;
        let c1 = 1.0 - config.beta1.powi(t);
        let c2 = 1.0 - config.beta2.powi(t);
        for i in 0..n {
            let g = est.measures[i] - problem.measures[i];
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            h[i] -= step_scale * mhat / (vhat.sqrt() + 1e-12 * min_nu);
        }
        recenter(&mut h);
    }
    Err(OtFailure { error: Error::NoConvergence(config.max_steps), best: best.unwrap(), history })
}
