//! Conversion between real values and spike times.
//!
//! Inputs are encoded either directly (one spike per dimension, larger values
//! spike first) or through Gaussian receptive fields (`m` spikes per
//! dimension). Outputs are decoded as the difference of the first spike
//! times of two designated output neurons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use crate::engine::decode_pair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Direct,
    Grf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncodingSpec {
    pub kind: EncodingKind,
    pub x_min: f64,
    pub x_max: f64,
    pub t_trans: f64,
    #[serde(default = "default_grf_m")]
    pub grf_m: usize,
    #[serde(default = "default_grf_beta")]
    pub grf_beta: f64,
}

fn default_grf_m() -> usize {
    5
}

fn default_grf_beta() -> f64 {
    1.5
}

impl EncodingSpec {
    pub fn direct(x_min: f64, x_max: f64, t_trans: f64) -> Self {
        Self {
            kind: EncodingKind::Direct,
            x_min,
            x_max,
            t_trans,
            grf_m: default_grf_m(),
            grf_beta: default_grf_beta(),
        }
    }

    pub fn grf(x_min: f64, x_max: f64, t_trans: f64, m: usize, beta: f64) -> Self {
        Self {
            kind: EncodingKind::Grf,
            x_min,
            x_max,
            t_trans,
            grf_m: m,
            grf_beta: beta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x_min < self.x_max) {
            return Err(Error::invalid("encoding", "x_min must be below x_max"));
        }
        if !(self.t_trans > 0.0) {
            return Err(Error::invalid("encoding.t_trans", "must be positive"));
        }
        if self.kind == EncodingKind::Grf {
            if self.grf_m < 3 {
                return Err(Error::invalid("encoding.grf_m", "need at least 3 fields"));
            }
            if !(self.grf_beta > 0.0) {
                return Err(Error::invalid("encoding.grf_beta", "must be positive"));
            }
        }
        Ok(())
    }

    /// Number of input channels this dimension occupies.
    pub fn channels(&self) -> usize {
        match self.kind {
            EncodingKind::Direct => 1,
            EncodingKind::Grf => self.grf_m,
        }
    }

    pub fn grf_sigma(&self) -> f64 {
        (self.x_max - self.x_min) / (self.grf_beta * (self.grf_m as f64 - 2.0))
    }

    pub fn grf_center(&self, i: usize) -> f64 {
        self.x_min + i as f64 * (self.x_max - self.x_min) / self.grf_m as f64
    }
}

/// A single encoded spike time and its input derivative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectSpike {
    pub time: f64,
    pub dt_dx: f64,
    pub clamped: bool,
}

/// `t = (1 - (X - x_min) / (x_max - x_min)) * t_trans`, with `X` clamped to
/// the encoding range. The derivative is zero where clamping is active.
pub fn encode_direct(x: f64, spec: &EncodingSpec) -> DirectSpike {
    let range = spec.x_max - spec.x_min;
    let clamped = x < spec.x_min || x > spec.x_max;
    if clamped {
        log::debug!("direct encoding clamps {x} into [{}, {}]", spec.x_min, spec.x_max);
    }
    let xc = x.clamp(spec.x_min, spec.x_max);
    DirectSpike {
        time: ((1.0 - (xc - spec.x_min) / range) * spec.t_trans).clamp(0.0, spec.t_trans),
        dt_dx: if clamped { 0.0 } else { -spec.t_trans / range },
        clamped,
    }
}

/// Inverse of [`encode_direct`] on its range.
pub fn decode_direct(t: f64, spec: &EncodingSpec) -> f64 {
    spec.x_min + (1.0 - t / spec.t_trans) * (spec.x_max - spec.x_min)
}

/// Gaussian receptive field spike times and `dt_i/dX`.
///
/// The winning field is locally constant in `X`, so its response is treated
/// as fixed when differentiating the normalization.
pub fn encode_grf(x: f64, spec: &EncodingSpec) -> (Vec<f64>, Vec<f64>) {
    let m = spec.grf_m;
    let sigma = spec.grf_sigma();
    let s2 = sigma * sigma;
    let xc = x.clamp(spec.x_min, spec.x_max);
    let clamped = xc != x;
    let centers: Vec<f64> = (0..m).map(|i| spec.grf_center(i)).collect();
    let winner = (0..m)
        .min_by(|&a, &b| (xc - centers[a]).abs().total_cmp(&(xc - centers[b]).abs()))
        .expect("m >= 3");
    let dw = xc - centers[winner];
    let mut times = Vec::with_capacity(m);
    let mut dts = Vec::with_capacity(m);
    for &c in &centers {
        let d = xc - c;
        // r_i / r_max without forming either factor
        let ratio = (-(d * d - dw * dw) / (2.0 * s2)).exp();
        times.push(((1.0 - ratio) * spec.t_trans).clamp(0.0, spec.t_trans));
        let dratio = ratio * (c - centers[winner]) / s2;
        dts.push(if clamped { 0.0 } else { -spec.t_trans * dratio });
    }
    (times, dts)
}

/// Encoded network input: spike times per channel with their derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub times: Vec<Vec<f64>>,
    /// `dt/dX` per channel per spike, when the encoding is smooth.
    pub dt_dx: Option<Vec<Vec<f64>>>,
    /// Input dimension driving each channel.
    pub channel_dim: Vec<usize>,
    pub n_dims: usize,
}

/// Encodes an input vector, one spec per dimension.
pub fn encode(x: &[f64], specs: &[EncodingSpec]) -> Result<Encoded> {
    if x.len() != specs.len() {
        return Err(Error::Dimension(format!(
            "{} input values for {} encodings",
            x.len(),
            specs.len()
        )));
    }
    let mut times = Vec::new();
    let mut dts = Vec::new();
    let mut channel_dim = Vec::new();
    for (d, (&xd, spec)) in x.iter().zip(specs).enumerate() {
        match spec.kind {
            EncodingKind::Direct => {
                let s = encode_direct(xd, spec);
                times.push(vec![s.time]);
                dts.push(vec![s.dt_dx]);
                channel_dim.push(d);
            }
            EncodingKind::Grf => {
                let (t, dt) = encode_grf(xd, spec);
                for (ti, dti) in t.into_iter().zip(dt) {
                    times.push(vec![ti]);
                    dts.push(vec![dti]);
                    channel_dim.push(d);
                }
            }
        }
    }
    Ok(Encoded {
        times,
        dt_dx: Some(dts),
        channel_dim,
        n_dims: x.len(),
    })
}

/// Output pairing over the output layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeSpec {
    pub pairs: Vec<(usize, usize)>,
}

impl DecodeSpec {
    /// `(2i, 2i + 1)` for `n_values` decoded values.
    pub fn adjacent(n_values: usize) -> Self {
        Self {
            pairs: (0..n_values).map(|i| (2 * i, 2 * i + 1)).collect(),
        }
    }

    pub fn n_outputs(&self) -> usize {
        2 * self.pairs.len()
    }
}

/// Affine map between physical targets and decoded spike-time differences:
/// `y = scale * decoded + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetAffine {
    pub scale: f64,
    pub offset: f64,
}

impl Default for TargetAffine {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset: 0.0,
        }
    }
}

impl TargetAffine {
    /// Maps `[lo, hi]` onto `[-half_width, half_width]` in decoded units.
    pub fn fit(lo: f64, hi: f64, half_width: f64) -> Self {
        let span = if hi > lo { hi - lo } else { 1.0 };
        Self {
            scale: span / (2.0 * half_width),
            offset: 0.5 * (lo + hi),
        }
    }

    /// Default normalization: targets onto `[-0.4 T, 0.4 T]`.
    pub fn for_trial(lo: f64, hi: f64, trial_t: f64) -> Self {
        Self::fit(lo, hi, 0.4 * trial_t)
    }

    #[inline]
    pub fn to_physical(&self, decoded: f64) -> f64 {
        self.scale * decoded + self.offset
    }

    #[inline]
    pub fn to_decoded(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn direct_examples() {
        let spec = EncodingSpec::direct(-1.0, 3.0, 2.0);
        assert_eq!(encode_direct(3.0, &spec).time, 0.0);
        assert_eq!(encode_direct(-1.0, &spec).time, 2.0);
        assert_relative_eq!(encode_direct(1.0, &spec).time, 1.0, epsilon = 1e-15);
        assert_relative_eq!(encode_direct(1.0, &spec).dt_dx, -0.5, epsilon = 1e-15);
        let c = encode_direct(5.0, &spec);
        assert!(c.clamped);
        assert_eq!((c.time, c.dt_dx), (0.0, 0.0));
    }

    #[test]
    fn grf_peak_spikes_first() {
        let spec = EncodingSpec::grf(0.0, 1.0, 2.0, 5, 1.5);
        for k in 0..5 {
            let (t, dt) = encode_grf(spec.grf_center(k), &spec);
            assert_eq!(t[k], 0.0);
            assert_eq!(dt[k], 0.0);
            assert!(t.iter().all(|&x| (0.0..=2.0).contains(&x)));
        }
    }

    #[test]
    fn grf_mid_domain_values() {
        // X = 0.5 on [0, 1], m = 5: centers 0, .2, .4, .6, .8; sigma = 1/4.5
        let spec = EncodingSpec::grf(0.0, 1.0, 2.0, 5, 1.5);
        let (t, _) = encode_grf(0.5, &spec);
        let sigma: f64 = 1.0 / 4.5;
        let r = |c: f64| (-(0.5f64 - c).powi(2) / (2.0 * sigma * sigma)).exp();
        let rmax = r(0.4).max(r(0.6));
        for (i, c) in [0.0, 0.2, 0.4, 0.6, 0.8].iter().enumerate() {
            assert_relative_eq!(t[i], (1.0 - r(*c) / rmax) * 2.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn decode_examples() {
        assert_eq!(decode_pair(0.9, 0.9), 0.0);
        assert_relative_eq!(decode_pair(1.2, 0.7), -0.5, epsilon = 1e-15);
        // b fires ordinarily inside T = 2, a only as a pseudospike
        assert!(decode_pair(2.4, 1.1) < 0.0);
    }

    #[test]
    fn target_affine_maps_range_to_band() {
        let a = TargetAffine::for_trial(0.0, 1.0, 2.0);
        assert_relative_eq!(a.to_decoded(0.0), -0.8, epsilon = 1e-15);
        assert_relative_eq!(a.to_decoded(1.0), 0.8, epsilon = 1e-15);
        assert_relative_eq!(a.to_physical(a.to_decoded(0.37)), 0.37, epsilon = 1e-15);
    }

    #[test]
    fn encode_rejects_dimension_mismatch() {
        let spec = EncodingSpec::direct(0.0, 1.0, 1.0);
        assert!(encode(&[0.1, 0.2], &[spec]).is_err());
        let e = encode(&[0.1], &[EncodingSpec::grf(0.0, 1.0, 1.0, 4, 1.0)]).unwrap();
        assert_eq!(e.times.len(), 4);
        assert_eq!(e.channel_dim, vec![0; 4]);
    }

    proptest! {
        #[test]
        fn direct_round_trip(x in -2.0f64..5.0, lo in -3.0f64..0.0, w in 0.1f64..4.0, tt in 0.1f64..4.0) {
            let spec = EncodingSpec::direct(lo, lo + w, tt);
            prop_assume!(x >= lo && x <= lo + w);
            let t = encode_direct(x, &spec).time;
            prop_assert!((decode_direct(t, &spec) - x).abs() <= 1e-12 * x.abs().max(1.0));
        }

        #[test]
        fn direct_is_strictly_decreasing(a in 0.0f64..1.0, d in 1e-6f64..0.5) {
            let spec = EncodingSpec::direct(0.0, 1.5, 2.0);
            prop_assert!(encode_direct(a + d, &spec).time < encode_direct(a, &spec).time);
        }

        #[test]
        fn grf_derivative_matches_finite_differences(x in 0.02f64..0.98) {
            let spec = EncodingSpec::grf(0.0, 1.0, 2.0, 6, 1.5);
            let h = 1e-6;
            let w = |x: f64| {
                (0..6).min_by(|&a, &b| (x - spec.grf_center(a)).abs()
                    .total_cmp(&(x - spec.grf_center(b)).abs())).unwrap()
            };
            // stay clear of winner switches
            prop_assume!(w(x - 1e-4) == w(x + 1e-4));
            let (_, dt) = encode_grf(x, &spec);
            let (tp, _) = encode_grf(x + h, &spec);
            let (tm, _) = encode_grf(x - h, &spec);
            for i in 0..6 {
                let fd = (tp[i] - tm[i]) / (2.0 * h);
                let scale = dt[i].abs().max(fd.abs()).max(1e-3);
                prop_assert!((dt[i] - fd).abs() / scale <= 1e-5, "i={} dt={} fd={}", i, dt[i], fd);
            }
        }

        #[test]
        fn decode_is_antisymmetric(a in -5.0f64..5.0, b in -5.0f64..5.0) {
            prop_assert_eq!(decode_pair(a, a), 0.0);
            prop_assert_eq!(decode_pair(a, b), -decode_pair(b, a));
        }
    }
}
