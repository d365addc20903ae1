//! Task datasets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracles::{linspace, poisson_solve_oracle, BurgersReference, GrfSampler};
use crate::error::{Error, Result};
use crate::models::pinn::PinnProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Parabola,
    Ricker,
    Ripple,
    DeeponetPoisson,
    PinnPoisson,
    PinnBurgers,
    PinnBeltrami,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [
        TaskId::Parabola,
        TaskId::Ricker,
        TaskId::Ripple,
        TaskId::DeeponetPoisson,
        TaskId::PinnPoisson,
        TaskId::PinnBurgers,
        TaskId::PinnBeltrami,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Parabola => "parabola",
            TaskId::Ricker => "ricker",
            TaskId::Ripple => "ripple",
            TaskId::DeeponetPoisson => "deeponet_poisson",
            TaskId::PinnPoisson => "pinn_poisson",
            TaskId::PinnBurgers => "pinn_burgers",
            TaskId::PinnBeltrami => "pinn_beltrami",
        }
    }

    pub fn is_pinn(self) -> bool {
        matches!(self, TaskId::PinnPoisson | TaskId::PinnBurgers | TaskId::PinnBeltrami)
    }

    pub fn is_regression(self) -> bool {
        matches!(self, TaskId::Parabola | TaskId::Ricker | TaskId::Ripple)
    }
}

impl std::str::FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::invalid("task", format!("unknown task {s:?}")))
    }
}

/// Input/target pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn from_fn(inputs: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> f64) -> Self {
        let targets = inputs.iter().map(|x| vec![f(x)]).collect();
        Self { inputs, targets }
    }

    /// Smallest and largest target value.
    pub fn target_range(&self) -> (f64, f64) {
        self.targets
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Samples,
    pub test: Samples,
    /// Per input dimension `(min, max)`.
    pub domain: Vec<(f64, f64)>,
}

pub fn parabola(x: f64) -> f64 {
    x * x
}

pub const RICKER_SIGMA: f64 = 0.8;

pub fn ricker(x: f64, y: f64) -> f64 {
    let s2 = RICKER_SIGMA * RICKER_SIGMA;
    let r2 = (x * x + y * y) / s2;
    (1.0 - 0.5 * r2) * (-0.5 * r2).exp() / (PI * s2 * s2)
}

pub fn ripple(x: f64, y: f64) -> f64 {
    0.25 * (4.0 * PI * (x * x + y * y).sqrt()).sin() + 0.5
}

fn grid2(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    let g = linspace(lo, hi, n);
    g.iter().flat_map(|&x| g.iter().map(move |&y| vec![x, y])).collect()
}

/// Parabola on `[-1, 1]`: evenly spaced train and test points.
pub fn parabola_split(n_train: usize, n_test: usize) -> Split {
    let xs = |n| linspace(-1.0, 1.0, n).into_iter().map(|x| vec![x]).collect();
    Split {
        train: Samples::from_fn(xs(n_train), |x| parabola(x[0])),
        test: Samples::from_fn(xs(n_test), |x| parabola(x[0])),
        domain: vec![(-1.0, 1.0)],
    }
}

/// 2D field on `[lo, hi]^2`: `n_train^2` train grid, `n_test^2` test grid.
pub fn field_split(task: TaskId, n_train: usize, n_test: usize) -> Result<Split> {
    let (lo, hi, f): (f64, f64, fn(f64, f64) -> f64) = match task {
        TaskId::Ricker => (-2.0, 2.0, ricker),
        TaskId::Ripple => (-1.0, 1.0, ripple),
        _ => return Err(Error::invalid("task", "not a 2D field task")),
    };
    Ok(Split {
        train: Samples::from_fn(grid2(lo, hi, n_train), |x| f(x[0], x[1])),
        test: Samples::from_fn(grid2(lo, hi, n_test), |x| f(x[0], x[1])),
        domain: vec![(lo, hi); 2],
    })
}

/// Source/solution pairs of `-u'' = g` on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorData {
    pub grid: Vec<f64>,
    pub train_g: Vec<Vec<f64>>,
    pub train_u: Vec<Vec<f64>>,
    pub test_g: Vec<Vec<f64>>,
    pub test_u: Vec<Vec<f64>>,
}

pub fn poisson_operator_data(n_sensors: usize, n_train: usize, n_test: usize, seed: u64) -> Result<OperatorData> {
    let grid = linspace(-1.0, 1.0, n_sensors);
    let sampler = GrfSampler::new(grid.clone(), 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let g: Vec<Vec<f64>> = (0..n).map(|_| sampler.sample(&mut rng)).collect();
        let u = g
            .iter()
            .map(|g| poisson_solve_oracle(g, -1.0, 1.0))
            .collect::<Result<Vec<_>>>()?;
        Ok((g, u))
    };
    let (train_g, train_u) = draw(n_train)?;
    let (test_g, test_u) = draw(n_test)?;
    Ok(OperatorData { grid, train_g, train_u, test_g, test_u })
}

/// Collocation and penalty points of a physics-informed problem, plus a test
/// grid with reference values.
#[derive(Debug, Clone, PartialEq)]
pub struct PinnData {
    pub collocation: Vec<Vec<f64>>,
    /// Initial/boundary points with per-component targets.
    pub boundary: Vec<(Vec<f64>, Vec<Option<f64>>)>,
    pub test: Samples,
}

pub fn pinn_data(problem: &PinnProblem, n_collocation: usize, n_boundary: usize, n_test: usize, seed: u64) -> PinnData {
    use crate::models::pinn::PdeKind;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (&problem.lower, &problem.upper);
    let collocation: Vec<Vec<f64>> = (0..n_collocation)
        .map(|_| lo.iter().zip(hi).map(|(&a, &b)| rng.gen_range(a..b)).collect())
        .collect();
    let mut boundary = Vec::new();
    match problem.kind {
        PdeKind::Poisson1d => {
            let test = linspace(lo[0], hi[0], n_test)
                .into_iter()
                .map(|x| vec![x])
                .collect::<Vec<_>>();
            let test = Samples::from_fn(test, |x| problem.exact(x).expect("closed form")[0]);
            return PinnData { collocation, boundary, test };
        }
        PdeKind::Burgers => {
            // half on the initial line, a quarter on each wall
            for k in 0..n_boundary {
                let x = match k % 4 {
                    0 | 1 => vec![rng.gen_range(lo[0]..hi[0]), lo[1]],
                    2 => vec![lo[0], rng.gen_range(lo[1]..hi[1])],
                    _ => vec![hi[0], rng.gen_range(lo[1]..hi[1])],
                };
                let t = problem.boundary_target(&x);
                boundary.push((x, t));
            }
            let reference = BurgersReference::new(problem.nu, 256);
            let xs = linspace(lo[0], hi[0], n_test);
            let ts = linspace(lo[1], hi[1], (n_test / 2).max(2));
            let pts: Vec<Vec<f64>> = ts.iter().flat_map(|&t| xs.iter().map(move |&x| vec![x, t])).collect();
            let test = Samples::from_fn(pts, |p| reference.eval(p[0], p[1]));
            PinnData { collocation, boundary, test }
        }
        PdeKind::Beltrami => {
            for k in 0..n_boundary {
                let mut x: Vec<f64> = lo.iter().zip(hi).map(|(&a, &b)| rng.gen_range(a..b)).collect();
                match k % 5 {
                    0 => x[2] = lo[2],
                    1 => x[0] = lo[0],
                    2 => x[0] = hi[0],
                    3 => x[1] = lo[1],
                    _ => x[1] = hi[1],
                }
                let t = problem.boundary_target(&x);
                boundary.push((x, t));
            }
            let g = linspace(-1.0, 1.0, n_test);
            let mut pts = Vec::with_capacity(3 * g.len() * g.len());
            for t in [0.0, 0.5, 1.0] {
                for &x in &g {
                    for &y in &g {
                        pts.push(vec![x, y, t]);
                    }
                }
            }
            let targets = pts
                .iter()
                .map(|p| problem.exact(p).expect("closed form")[..2].to_vec())
                .collect();
            PinnData {
                collocation,
                boundary,
                test: Samples { inputs: pts, targets },
            }
        }
    }
}
