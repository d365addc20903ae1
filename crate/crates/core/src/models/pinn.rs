//! Physics-informed residuals assembled from finite-difference stencils of
//! the spiking network's forward values.
//!
//! Derivatives come from central differences of the network value over a
//! `2 d + 1` point stencil. Weight gradients of any residual are exact for
//! the discretized residual: the jet adjoint is pushed onto the stencil
//! values and each stencil trial runs its own backward pass.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mlp::{exact_first_derivative, mlp_backward, mlp_forward, MlpModel, MlpOutput};
use crate::codec::EncodingSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PdeKind {
    /// `-u'' = 2 pi^2 sin(pi x)` on `[0, 1]`, hard constraint `x (1 - x)`.
    Poisson1d,
    /// `u_t + u u_x - nu u_xx = 0` on `[-1, 1] x [0, 1]`, inputs `(x, t)`.
    Burgers,
    /// Incompressible Navier–Stokes Beltrami flow, inputs `(x, y, t)`,
    /// outputs `(u, v, p)`.
    Beltrami,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinnProblem {
    pub kind: PdeKind,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Stencil step as a fraction of each dimension's extent.
    pub fd_rel_step: f64,
    pub nu: f64,
    /// Weight of the initial/boundary penalty loss.
    pub penalty_weight: f64,
}

impl PinnProblem {
    pub fn poisson1d() -> Self {
        Self {
            kind: PdeKind::Poisson1d,
            lower: vec![0.0],
            upper: vec![1.0],
            fd_rel_step: 1e-2,
            nu: 0.0,
            penalty_weight: 0.0,
        }
    }

    pub fn burgers() -> Self {
        Self {
            kind: PdeKind::Burgers,
            lower: vec![-1.0, 0.0],
            upper: vec![1.0, 1.0],
            fd_rel_step: 1e-3,
            nu: 0.01 / PI,
            penalty_weight: 1.0,
        }
    }

    pub fn beltrami() -> Self {
        Self {
            kind: PdeKind::Beltrami,
            lower: vec![-1.0, -1.0, 0.0],
            upper: vec![1.0, 1.0, 1.0],
            fd_rel_step: 1e-3,
            nu: 1.0,
            penalty_weight: 1.0,
        }
    }

    pub fn dims(&self) -> usize {
        self.lower.len()
    }

    pub fn n_outputs(&self) -> usize {
        match self.kind {
            PdeKind::Poisson1d | PdeKind::Burgers => 1,
            PdeKind::Beltrami => 3,
        }
    }

    pub fn steps(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(a, b)| self.fd_rel_step * (b - a))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let d = match self.kind {
            PdeKind::Poisson1d => 1,
            PdeKind::Burgers => 2,
            PdeKind::Beltrami => 3,
        };
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::invalid("lower/upper", format!("need {d} bounds")));
        }
        if self.lower.iter().zip(&self.upper).any(|(a, b)| !(a < b)) {
            return Err(Error::invalid("lower/upper", "empty domain"));
        }
        if !(self.fd_rel_step > 0.0 && self.fd_rel_step < 0.1) {
            return Err(Error::invalid("fd_rel_step", "must lie in (0, 0.1)"));
        }
        if !(self.nu >= 0.0) || !(self.penalty_weight >= 0.0) {
            return Err(Error::invalid("nu/penalty_weight", "must be non-negative"));
        }
        Ok(())
    }

    /// Direct encodings covering the domain plus a two-step margin so that
    /// stencil points never clamp.
    pub fn encodings(&self, t_trans: f64) -> Vec<EncodingSpec> {
        self.lower
            .iter()
            .zip(&self.upper)
            .zip(self.steps())
            .map(|((&a, &b), h)| EncodingSpec::direct(a - 2.0 * h, b + 2.0 * h, t_trans))
            .collect()
    }

    /// Analytic multiplier `m(x)` and `dm/dx_dim`.
    pub fn hard_constraint(&self, x: &[f64], dim: usize) -> (f64, f64) {
        match self.kind {
            PdeKind::Poisson1d => {
                let _ = dim;
                (x[0] * (1.0 - x[0]), 1.0 - 2.0 * x[0])
            }
            _ => (1.0, 0.0),
        }
    }

    /// Source term of the Poisson problem.
    pub fn source(&self, x: &[f64]) -> f64 {
        match self.kind {
            PdeKind::Poisson1d => 2.0 * PI * PI * (PI * x[0]).sin(),
            _ => 0.0,
        }
    }

    /// Known solution where one exists in closed form.
    pub fn exact(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self.kind {
            PdeKind::Poisson1d => Some(vec![2.0 * (PI * x[0]).sin()]),
            PdeKind::Burgers => None,
            PdeKind::Beltrami => Some(beltrami_exact(x[0], x[1], x[2]).to_vec()),
        }
    }

    /// Residual components from the stencil jet.
    pub fn residual(&self, x: &[f64], jet: &Jet) -> Vec<f64> {
        match self.kind {
            PdeKind::Poisson1d => vec![-jet.d2[0][0] - self.source(x)],
            PdeKind::Burgers => {
                let u = jet.value[0];
                vec![jet.d1[1][0] + u * jet.d1[0][0] - self.nu * jet.d2[0][0]]
            }
            PdeKind::Beltrami => {
                let (u, v) = (jet.value[0], jet.value[1]);
                let (d1, d2) = (&jet.d1, &jet.d2);
                vec![
                    d1[2][0] + u * d1[0][0] + v * d1[1][0] + d1[0][2] - self.nu * (d2[0][0] + d2[1][0]),
                    d1[2][1] + u * d1[0][1] + v * d1[1][1] + d1[1][2] - self.nu * (d2[0][1] + d2[1][1]),
                    d1[0][0] + d1[1][1],
                ]
            }
        }
    }

    /// Jet adjoint of `sum_k seeds[k] * residual_k`.
    pub fn residual_adjoint(&self, jet: &Jet, seeds: &[f64]) -> Jet {
        let mut a = Jet::zeros(self.dims(), self.n_outputs());
        match self.kind {
            PdeKind::Poisson1d => a.d2[0][0] = -seeds[0],
            PdeKind::Burgers => {
                let s = seeds[0];
                a.d1[1][0] = s;
                a.value[0] = s * jet.d1[0][0];
                a.d1[0][0] = s * jet.value[0];
                a.d2[0][0] = -s * self.nu;
            }
            PdeKind::Beltrami => {
                let (u, v) = (jet.value[0], jet.value[1]);
                let d1 = &jet.d1;
                let (s1, s2, s3) = (seeds[0], seeds[1], seeds[2]);
                a.value[0] = s1 * d1[0][0] + s2 * d1[0][1];
                a.value[1] = s1 * d1[1][0] + s2 * d1[1][1];
                a.d1[2][0] = s1;
                a.d1[0][0] = s1 * u + s3;
                a.d1[1][0] = s1 * v;
                a.d1[0][2] = s1;
                a.d1[2][1] = s2;
                a.d1[0][1] = s2 * u;
                a.d1[1][1] = s2 * v + s3;
                a.d1[1][2] = s2;
                for d in 0..2 {
                    a.d2[d][0] = -s1 * self.nu;
                    a.d2[d][1] = -s2 * self.nu;
                }
            }
        }
        a
    }

    /// Initial/boundary targets at `x` for penalty losses, `None` for free
    /// components.
    pub fn boundary_target(&self, x: &[f64]) -> Vec<Option<f64>> {
        match self.kind {
            PdeKind::Poisson1d => vec![Some(0.0)],
            PdeKind::Burgers => {
                if x[1] == self.lower[1] {
                    vec![Some(-(PI * x[0]).sin())]
                } else {
                    vec![Some(0.0)]
                }
            }
            PdeKind::Beltrami => {
                let e = beltrami_exact(x[0], x[1], x[2]);
                vec![Some(e[0]), Some(e[1]), None]
            }
        }
    }
}

/// Beltrami velocity and pressure.
pub fn beltrami_exact(x: f64, y: f64, t: f64) -> [f64; 3] {
    let e2 = (-2.0 * t).exp();
    [
        -x.cos() * y.sin() * e2,
        x.sin() * y.cos() * e2,
        -0.25 * ((2.0 * x).cos() + (2.0 * y).cos()) * e2 * e2,
    ]
}

/// Value and central differences per dimension: `d1[dim][out]`,
/// `d2[dim][out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: Vec<f64>,
    pub d1: Vec<Vec<f64>>,
    pub d2: Vec<Vec<f64>>,
}

impl Jet {
    pub fn zeros(dims: usize, outs: usize) -> Self {
        Self {
            value: vec![0.0; outs],
            d1: vec![vec![0.0; outs]; dims],
            d2: vec![vec![0.0; outs]; dims],
        }
    }
}

/// Network values on a `2 d + 1` point stencil around `x`, in the order
/// center, then `x - h_d`, `x + h_d` per dimension.
pub struct Stencil {
    pub center: Vec<f64>,
    pub steps: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub outputs: Vec<MlpOutput>,
    /// Hard-constraint multiplier at each point.
    pub multipliers: Vec<f64>,
    /// Constrained values `[point][out]`.
    pub values: Vec<Vec<f64>>,
}

impl Stencil {
    pub fn eval(model: &MlpModel, problem: &PinnProblem, x: &[f64], steps: &[f64]) -> Result<Self> {
        if x.len() != problem.dims() || steps.len() != x.len() {
            return Err(Error::Dimension(format!(
                "point has {} coordinates, problem has {}",
                x.len(),
                problem.dims()
            )));
        }
        let mut points = vec![x.to_vec()];
        for (d, &h) in steps.iter().enumerate() {
            for sgn in [-1.0, 1.0] {
                let mut p = x.to_vec();
                p[d] += sgn * h;
                points.push(p);
            }
        }
        let mut outputs = Vec::with_capacity(points.len());
        let mut multipliers = Vec::with_capacity(points.len());
        let mut values = Vec::with_capacity(points.len());
        for p in &points {
            let out = mlp_forward(model, p)?;
            let m = problem.hard_constraint(p, 0).0;
            values.push(out.y.iter().map(|y| m * y).collect());
            multipliers.push(m);
            outputs.push(out);
        }
        Ok(Self {
            center: x.to_vec(),
            steps: steps.to_vec(),
            points,
            outputs,
            multipliers,
            values,
        })
    }

    pub fn jet(&self) -> Jet {
        let outs = self.values[0].len();
        let mut j = Jet::zeros(self.steps.len(), outs);
        j.value.clone_from(&self.values[0]);
        for (d, &h) in self.steps.iter().enumerate() {
            let (lo, hi) = (&self.values[1 + 2 * d], &self.values[2 + 2 * d]);
            for k in 0..outs {
                j.d1[d][k] = (hi[k] - lo[k]) / (2.0 * h);
                j.d2[d][k] = (hi[k] - 2.0 * self.values[0][k] + lo[k]) / (h * h);
            }
        }
        j
    }

    /// Pushes a jet adjoint onto the stencil values and runs the backward
    /// pass of every stencil trial.
    pub fn backward(&self, model: &MlpModel, adj: &Jet, d_w: &mut [f64]) -> Result<()> {
        let outs = adj.value.len();
        let mut d_vals = vec![vec![0.0; outs]; self.points.len()];
        d_vals[0].clone_from(&adj.value);
        for (d, &h) in self.steps.iter().enumerate() {
            for k in 0..outs {
                let a1 = adj.d1[d][k] / (2.0 * h);
                let a2 = adj.d2[d][k] / (h * h);
                d_vals[0][k] -= 2.0 * a2;
                d_vals[1 + 2 * d][k] += a2 - a1;
                d_vals[2 + 2 * d][k] += a2 + a1;
            }
        }
        for ((out, dv), &m) in self.outputs.iter().zip(&d_vals).zip(&self.multipliers) {
            if dv.iter().all(|&g| g == 0.0) {
                continue;
            }
            let d_y: Vec<f64> = dv.iter().map(|g| g * m).collect();
            mlp_backward(model, out, &d_y, d_w)?;
        }
        Ok(())
    }
}

/// Constrained network value `m(x) N(x)`.
pub fn pinn_value(model: &MlpModel, problem: &PinnProblem, x: &[f64]) -> Result<Vec<f64>> {
    let m = problem.hard_constraint(x, 0).0;
    Ok(mlp_forward(model, x)?.y.iter().map(|y| m * y).collect())
}

/// `-u_xx - g(x)` with `u = x (1 - x) N(x)` and a three-point stencil.
pub fn pinn_residual_poisson1d(model: &MlpModel, x: f64, h: f64) -> Result<f64> {
    let problem = PinnProblem::poisson1d();
    let s = Stencil::eval(model, &problem, &[x], &[h])?;
    Ok(problem.residual(&[x], &s.jet())[0])
}

/// `u_t + u u_x - nu u_xx` at `(x, t)`.
pub fn pinn_residual_burgers(model: &MlpModel, x: f64, t: f64, h_x: f64, h_t: f64) -> Result<f64> {
    let problem = PinnProblem::burgers();
    let s = Stencil::eval(model, &problem, &[x, t], &[h_x, h_t])?;
    Ok(problem.residual(&[x, t], &s.jet())[0])
}

/// Squared residual at a collocation point; adds its weight gradient
/// scaled by `weight`.
pub fn residual_loss_grad(
    model: &MlpModel,
    problem: &PinnProblem,
    x: &[f64],
    weight: f64,
    d_w: &mut [f64],
) -> Result<f64> {
    let s = Stencil::eval(model, problem, x, &problem.steps())?;
    let jet = s.jet();
    let r = problem.residual(x, &jet);
    let seeds: Vec<f64> = r.iter().map(|v| 2.0 * weight * v).collect();
    s.backward(model, &problem.residual_adjoint(&jet, &seeds), d_w)?;
    Ok(r.iter().map(|v| v * v).sum())
}

/// Squared mismatch against `targets` at `x`; adds its weight gradient
/// scaled by `weight`.
pub fn data_loss_grad(
    model: &MlpModel,
    problem: &PinnProblem,
    x: &[f64],
    targets: &[Option<f64>],
    weight: f64,
    d_w: &mut [f64],
) -> Result<f64> {
    let out = mlp_forward(model, x)?;
    let m = problem.hard_constraint(x, 0).0;
    let mut loss = 0.0;
    let mut d_y = vec![0.0; out.y.len()];
    for (k, t) in targets.iter().enumerate() {
        if let Some(t) = t {
            let e = m * out.y[k] - t;
            loss += e * e;
            d_y[k] = 2.0 * weight * e * m;
        }
    }
    mlp_backward(model, &out, &d_y, d_w)?;
    Ok(loss)
}

/// Exact `du/dx_dim` of the constrained output through the product rule.
pub fn pinn_exact_derivative(
    model: &MlpModel,
    problem: &PinnProblem,
    x: &[f64],
    dim: usize,
) -> Result<Vec<f64>> {
    let n = mlp_forward(model, x)?.y;
    let dn = exact_first_derivative(model, x, dim)?;
    let (m, dm) = problem.hard_constraint(x, dim);
    Ok(n.iter().zip(&dn).map(|(n, dn)| dm * n + m * dn).collect())
}
