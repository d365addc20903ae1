//! Closed-form phase mathematics of the oscillatory QIF neuron.
//!
//! With a suprathreshold drive `I_0 > 1/4` the voltage `V` maps to a phase
//! `phi = Phi(V)` that advances with unit velocity, spikes at the finite
//! threshold phase `phi_theta = Phi(+inf)` and resets to `Phi(-inf) = 0`.
//! A delta input of weight `w` adds `w` to the voltage, which in phase space
//! is the phase transition curve `H_w(phi) = Phi(Phi^-1(phi) + w)`.
//!
//! Internally the phase is handled as an angle `theta = phi * s / tau_m`
//! with `s = sqrt(I_0 - 1/4)`, so that `V - 1/2 = -s * cot(theta)`. Working
//! with the cotangent keeps the derivatives finite at both endpoints.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default guard width around threshold and reset.
pub const DEFAULT_EPS_GUARD: f64 = 1e-6;

/// Membrane constants of an oscillatory QIF neuron.
///
/// The threshold phase is always derived from `tau_m` and `i0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeuronParams {
    pub tau_m: f64,
    pub i0: f64,
    #[serde(default = "default_eps_guard")]
    pub eps_guard: f64,
}

fn default_eps_guard() -> f64 {
    DEFAULT_EPS_GUARD
}

impl NeuronParams {
    pub fn new(tau_m: f64, i0: f64, eps_guard: f64) -> Result<Self> {
        let p = Self {
            tau_m,
            i0,
            eps_guard,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters whose free period equals `period` for the given `tau_m`.
    pub fn with_period(tau_m: f64, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(Error::invalid("period", "must be positive"));
        }
        let s = tau_m * PI / period;
        Self::new(tau_m, 0.25 + s * s, DEFAULT_EPS_GUARD)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0 && self.tau_m.is_finite()) {
            return Err(Error::invalid("tau_m", "must be positive and finite"));
        }
        if !(self.i0 > 0.25 && self.i0.is_finite()) {
            return Err(Error::invalid("i0", "must exceed 1/4"));
        }
        if !(self.eps_guard > 0.0 && self.eps_guard < 1e-2 * self.phi_theta()) {
            return Err(Error::invalid(
                "eps_guard",
                "must be positive and much smaller than the threshold phase",
            ));
        }
        Ok(())
    }

    /// `sqrt(I_0 - 1/4)`.
    #[inline]
    pub fn sqrt_drive(&self) -> f64 {
        (self.i0 - 0.25).sqrt()
    }

    /// Threshold phase `tau_m * pi / sqrt(I_0 - 1/4)`.
    #[inline]
    pub fn phi_theta(&self) -> f64 {
        self.tau_m * PI / self.sqrt_drive()
    }

    #[inline]
    fn phase_to_angle(&self) -> f64 {
        self.sqrt_drive() / self.tau_m
    }
}

impl Default for NeuronParams {
    /// `tau_m = 1`, threshold phase `pi`.
    fn default() -> Self {
        Self {
            tau_m: 1.0,
            i0: 1.25,
            eps_guard: DEFAULT_EPS_GUARD,
        }
    }
}

/// Voltage to phase. Total on the extended reals.
pub fn phi_of_v(v: f64, p: &NeuronParams) -> f64 {
    if v == f64::INFINITY {
        return p.phi_theta();
    }
    if v == f64::NEG_INFINITY {
        return 0.0;
    }
    let s = p.sqrt_drive();
    p.tau_m / s * (((v - 0.5) / s).atan() + FRAC_PI_2)
}

/// Phase to voltage; `0` maps to `-inf` and `phi_theta` to `+inf`.
pub fn v_of_phi(phi: f64, p: &NeuronParams) -> f64 {
    let c = cot_of_phase(phi, p);
    0.5 - p.sqrt_drive() * c
}

/// Derivative of [`phi_of_v`].
#[inline]
pub fn dphi_dv(v: f64, p: &NeuronParams) -> f64 {
    if v.is_infinite() {
        return 0.0;
    }
    let s = p.sqrt_drive();
    let x = v - 0.5;
    p.tau_m / (s * s + x * x)
}

/// `cot(theta)` for the phase angle; `+inf` at reset, `-inf` at threshold.
#[inline]
fn cot_of_phase(phi: f64, p: &NeuronParams) -> f64 {
    if phi <= 0.0 {
        return f64::INFINITY;
    }
    if phi >= p.phi_theta() {
        return f64::NEG_INFINITY;
    }
    let theta = phi * p.phase_to_angle();
    // theta in (0, pi); cos/sin avoids the tan pole at pi/2
    theta.cos() / theta.sin()
}

#[inline]
fn phase_of_cot(c: f64, p: &NeuronParams) -> f64 {
    // theta = pi/2 - atan(c) lies in (0, pi) for finite c
    (FRAC_PI_2 - c.atan()) / p.phase_to_angle()
}

/// Result of applying a delta input in phase space, with local partials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    /// Phase after the input.
    pub phase: f64,
    /// `dH/dphi`.
    pub d_phase: f64,
    /// `dH/dw`.
    pub d_weight: f64,
}

/// Phase transition curve `H_w(phi)`.
pub fn ptc(phi: f64, w: f64, p: &NeuronParams) -> f64 {
    ptc_jump(phi, w, p).phase
}

/// `(H_phi, H_u)` at `(phi, w)`.
pub fn ptc_derivatives(phi: f64, w: f64, p: &NeuronParams) -> (f64, f64) {
    let j = ptc_jump(phi, w, p);
    (j.d_phase, j.d_weight)
}

/// Phase transition curve and both partials in one evaluation.
///
/// At the endpoints (`phi <= 0` or `phi >= phi_theta`) the voltage is
/// infinite, the phase is unchanged, `H_phi = 1` and `H_u = 0`.
#[inline]
pub fn ptc_jump(phi: f64, w: f64, p: &NeuronParams) -> Jump {
    let c = cot_of_phase(phi, p);
    if c.is_infinite() {
        return Jump {
            phase: phi.clamp(0.0, p.phi_theta()),
            d_phase: 1.0,
            d_weight: 0.0,
        };
    }
    let s = p.sqrt_drive();
    let c_new = c - w / s;
    let q_old = 1.0 + c * c;
    let q_new = 1.0 + c_new * c_new;
    Jump {
        phase: phase_of_cot(c_new, p),
        d_phase: q_old / q_new,
        d_weight: p.tau_m / (s * s * q_new),
    }
}
