//! Event-driven forward simulation of layered feedforward QIF networks.
//!
//! Layers are simulated one after another: all spikes of layer `l` are known
//! before layer `l + 1` runs, so each neuron just walks the time-sorted list
//! of presynaptic spikes. Between arrivals the phase drifts with unit slope;
//! an arrival applies the phase transition curve; reaching the threshold by
//! drift emits a spike and resets the phase to exactly zero.
//!
//! After the trial end every neuron gets a pseudostate `r`, and output
//! neurons that stayed silent get a pseudospike time past `T`. All of this is
//! recorded on an [`EventTape`] for exact reverse-mode gradients.

use std::hash::Hasher;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qif::{dphi_dv, phi_of_v, ptc_jump, v_of_phi, NeuronParams};
use crate::tape::{EventTape, NodeId, NodeKind};

/// Layered feedforward network of oscillatory QIF neurons.
///
/// `layer_sizes[0]` is the number of input channels; `weights[l]` has shape
/// `[layer_sizes[l + 1], layer_sizes[l]]`. `initial_phase[l]` holds the
/// phases of network layer `l` (that is, of `layer_sizes[l + 1]` neurons).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Array2<f64>>,
    pub params: NeuronParams,
    pub trial_t: f64,
    pub initial_phase: Vec<Vec<f64>>,
    /// `(a, b)` output indices; the decoded value is `t_b - t_a`.
    pub decode_pairs: Vec<(usize, usize)>,
}

impl NetworkSpec {
    /// Zero weights, zero initial phases, outputs paired as `(2i, 2i + 1)`.
    pub fn zeros(layer_sizes: &[usize], params: NeuronParams, trial_t: f64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::invalid("layer_sizes", "need inputs and at least one layer"));
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let initial_phase = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        let n_out = *layer_sizes.last().unwrap();
        let decode_pairs = (0..n_out / 2).map(|i| (2 * i, 2 * i + 1)).collect();
        let net = Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            params,
            trial_t,
            initial_phase,
            decode_pairs,
        };
        net.validate()?;
        Ok(net)
    }

    pub fn n_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn n_network_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn n_weights(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Start of each layer's block in the flat row-major weight layout.
    pub fn weight_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut acc = 0;
        for w in &self.weights {
            offsets.push(acc);
            acc += w.len();
        }
        offsets
    }

    pub fn flat_weights(&self) -> Vec<f64> {
        self.weights.iter().flat_map(|w| w.iter().copied()).collect()
    }

    pub fn set_flat_weights(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.n_weights());
        let mut i = 0;
        for w in &mut self.weights {
            for x in w.iter_mut() {
                *x = flat[i];
                i += 1;
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.layer_sizes.len() < 2 || self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::invalid("layer_sizes", "need at least two positive sizes"));
        }
        if self.weights.len() != self.layer_sizes.len() - 1 {
            return Err(Error::Dimension(format!(
                "{} weight matrices for {} layers",
                self.weights.len(),
                self.layer_sizes.len()
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            let want = (self.layer_sizes[l + 1], self.layer_sizes[l]);
            if w.dim() != want {
                return Err(Error::Dimension(format!(
                    "weights[{l}] is {:?}, expected {:?}",
                    w.dim(),
                    want
                )));
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("weights[{l}]"), "non-finite entry"));
            }
        }
        if !(self.trial_t > 0.0 && self.trial_t.is_finite()) {
            return Err(Error::invalid("trial_t", "must be positive"));
        }
        let phi_theta = self.params.phi_theta();
        if self.initial_phase.len() != self.n_network_layers()
            || self
                .initial_phase
                .iter()
                .zip(&self.layer_sizes[1..])
                .any(|(ph, &n)| ph.len() != n)
        {
            return Err(Error::Dimension("initial_phase does not match layer sizes".into()));
        }
        if self
            .initial_phase
            .iter()
            .flatten()
            .any(|&p| !(0.0..phi_theta).contains(&p))
        {
            return Err(Error::invalid("initial_phase", "must lie in [0, phi_theta)"));
        }
        let n_out = self.n_outputs();
        if n_out != 2 * self.decode_pairs.len() {
            return Err(Error::Dimension(format!(
                "{n_out} output neurons for {} decode pairs",
                self.decode_pairs.len()
            )));
        }
        let mut seen = vec![false; n_out];
        for &(a, b) in &self.decode_pairs {
            for i in [a, b] {
                if i >= n_out || seen[i] {
                    return Err(Error::invalid(
                        "decode_pairs",
                        "each output index must appear exactly once",
                    ));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// A spike in continuous time. `layer` follows `layer_sizes` indexing, so
/// input channels are layer 0. `ordinal` is 1-based per neuron.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub time: f64,
    pub layer: usize,
    pub neuron: usize,
    pub ordinal: usize,
}

/// Everything a trial produces. Per-neuron vectors are indexed by network
/// layer (`0` is the first layer after the inputs).
#[derive(Debug, Clone)]
pub struct TrialResult {
    /// Spikes of every layer, inputs included, in emission order per layer.
    pub spikes: Vec<Vec<SpikeEvent>>,
    pub terminal_phase: Vec<Vec<f64>>,
    pub pseudostate_r: Vec<Vec<f64>>,
    pub pseudo_u: Vec<Vec<f64>>,
    pub n_trial: Vec<Vec<usize>>,
    /// First spike per output neuron, ordinary or pseudo.
    pub first_spike_time: Vec<f64>,
    pub first_spike_node: Vec<NodeId>,
    pub first_spike_is_pseudo: Vec<bool>,
    pub decoded: Vec<f64>,
    pub decode_pairs: Vec<(usize, usize)>,
    /// Node of each input spike, per channel.
    pub input_nodes: Vec<Vec<NodeId>>,
    pub weight_shapes: Vec<(usize, usize)>,
    /// Hash of the event order; equal signatures mean the same branch.
    pub signature: u64,
    pub tape: EventTape,
}

impl TrialResult {
    /// Adjoint seeds for `sum_p d_decoded[p] * decoded[p]`.
    pub fn decoded_seeds(&self, d_decoded: &[f64]) -> Vec<(NodeId, f64)> {
        let mut seeds = Vec::with_capacity(2 * d_decoded.len());
        for (&(a, b), &g) in self.decode_pairs.iter().zip(d_decoded) {
            if g != 0.0 {
                seeds.push((self.first_spike_node[b], g));
                seeds.push((self.first_spike_node[a], -g));
            }
        }
        seeds
    }
}

/// Outcome of an arrival after the guard check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardedJump {
    pub phase: f64,
    pub d_phase: f64,
    pub d_weight: f64,
    pub guarded: bool,
}

/// Applies the transition curve unless the phase is within `eps_guard` of
/// reset or threshold, in which case the arrival has no effect.
#[inline]
pub fn apply_guarded_jump(phi: f64, w: f64, p: &NeuronParams) -> GuardedJump {
    let eps = p.eps_guard;
    if phi < eps || phi > p.phi_theta() - eps {
        return GuardedJump {
            phase: phi,
            d_phase: 1.0,
            d_weight: 0.0,
            guarded: true,
        };
    }
    let j = ptc_jump(phi, w, p);
    GuardedJump {
        phase: j.phase,
        d_phase: j.d_phase,
        d_weight: j.d_weight,
        guarded: false,
    }
}

/// Pseudostates of a feedforward net from its terminal phases.
///
/// Input channels contribute `r = 0`, so the first network layer has
/// `u = 0`. Returns `(r, u)` per network layer.
pub fn compute_pseudostates(
    terminal_phase: &[Vec<f64>],
    weights: &[Array2<f64>],
    p: &NeuronParams,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let phi_theta = p.phi_theta();
    let mut rs: Vec<Vec<f64>> = Vec::with_capacity(terminal_phase.len());
    let mut us = Vec::with_capacity(terminal_phase.len());
    for (l, phases) in terminal_phase.iter().enumerate() {
        let u: Vec<f64> = if l == 0 {
            vec![0.0; phases.len()]
        } else {
            let r_prev = &rs[l - 1];
            weights[l]
                .rows()
                .into_iter()
                .map(|row| row.iter().zip(r_prev).map(|(w, r)| w * r).sum())
                .collect()
        };
        let r = phases
            .iter()
            .zip(&u)
            .map(|(&phi_t, &u)| ptc_jump(phi_t, u, p).phase / phi_theta)
            .collect();
        rs.push(r);
        us.push(u);
    }
    (rs, us)
}

/// Same as [`compute_pseudostates`] but starting from terminal voltages.
pub fn compute_pseudostates_from_voltages(
    terminal_v: &[Vec<f64>],
    weights: &[Array2<f64>],
    p: &NeuronParams,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let phases: Vec<Vec<f64>> = terminal_v
        .iter()
        .map(|l| l.iter().map(|&v| phi_of_v(v, p)).collect())
        .collect();
    compute_pseudostates(&phases, weights, p)
}

/// Time of the `k`-th spike (1-based) of a neuron that fired `n_trial`
/// ordinary spikes, when `k > n_trial`.
pub fn pseudospike_time(
    k: usize,
    n_trial: usize,
    phi_t: f64,
    u: f64,
    trial_t: f64,
    p: &NeuronParams,
) -> Result<f64> {
    if k <= n_trial {
        return Err(Error::NotPseudo { k, n_trial });
    }
    Ok(trial_t + (k - n_trial) as f64 * p.phi_theta() - ptc_jump(phi_t, u, p).phase)
}

#[derive(Debug, Clone, Copy)]
struct PreEvent {
    time: f64,
    pre: u32,
    node: NodeId,
}

struct NeuronOutcome {
    terminal_phase: f64,
    terminal_node: NodeId,
    n_trial: usize,
    first_spike: Option<(f64, NodeId)>,
}

/// Simulates one neuron against the sorted presynaptic event list.
#[allow(clippy::too_many_arguments)]
fn simulate_neuron(
    events: &[PreEvent],
    weights: &[f64],
    weight_base: u32,
    phi0: f64,
    p: &NeuronParams,
    trial_t: f64,
    tape: &mut EventTape,
    emitted: &mut Vec<(f64, NodeId)>,
    hasher: &mut impl Hasher,
) -> NeuronOutcome {
    let phi_theta = p.phi_theta();
    let mut phase = phi0;
    let mut phase_node: Option<NodeId> = None;
    let mut anchor_t = 0.0;
    let mut anchor_node: Option<NodeId> = None;
    let mut n_trial = 0usize;
    let mut first_spike = None;

    let mut emit_until = |until: f64,
                          phase: &mut f64,
                          phase_node: &mut Option<NodeId>,
                          anchor_t: &mut f64,
                          anchor_node: &mut Option<NodeId>,
                          tape: &mut EventTape,
                          hasher: &mut dyn Hasher| {
        while *phase + (until - *anchor_t) >= phi_theta {
            let t_sp = *anchor_t + phi_theta - *phase;
            let node = tape.push_opt(
                NodeKind::Emission,
                t_sp,
                [(*anchor_node, 1.0), (*phase_node, -1.0), (None, 0.0)],
                None,
            );
            hasher.write_u8(0xE);
            n_trial += 1;
            if first_spike.is_none() {
                first_spike = Some((t_sp, node));
            }
            emitted.push((t_sp, node));
            *phase = 0.0;
            *phase_node = None;
            *anchor_t = t_sp;
            *anchor_node = Some(node);
        }
    };

    for ev in events {
        emit_until(
            ev.time,
            &mut phase,
            &mut phase_node,
            &mut anchor_t,
            &mut anchor_node,
            tape,
            hasher,
        );
        let xi = (phase + (ev.time - anchor_t)).max(0.0);
        let w = weights[ev.pre as usize];
        let j = apply_guarded_jump(xi, w, p);
        let a = j.d_phase;
        let node = if j.guarded {
            hasher.write_u8(0x6);
            tape.push_opt(
                NodeKind::GuardedJump,
                j.phase,
                [(phase_node, a), (Some(ev.node), a), (anchor_node, -a)],
                None,
            )
        } else {
            hasher.write_u8(0x1);
            tape.push_opt(
                NodeKind::Jump,
                j.phase,
                [(phase_node, a), (Some(ev.node), a), (anchor_node, -a)],
                Some((weight_base + ev.pre, j.d_weight)),
            )
        };
        phase = j.phase;
        phase_node = Some(node);
        anchor_t = ev.time;
        anchor_node = Some(ev.node);
    }
    emit_until(
        trial_t,
        &mut phase,
        &mut phase_node,
        &mut anchor_t,
        &mut anchor_node,
        tape,
        hasher,
    );
    let terminal_phase = (phase + (trial_t - anchor_t)).max(0.0);
    let terminal_node = tape.push_opt(
        NodeKind::Terminal,
        terminal_phase,
        [(phase_node, 1.0), (anchor_node, -1.0), (None, 0.0)],
        None,
    );
    hasher.write_usize(n_trial);
    NeuronOutcome {
        terminal_phase,
        terminal_node,
        n_trial,
        first_spike,
    }
}

fn validate_inputs(net: &NetworkSpec, input_spikes: &[Vec<f64>]) -> Result<()> {
    if input_spikes.len() != net.n_inputs() {
        return Err(Error::Dimension(format!(
            "{} input channels given, network expects {}",
            input_spikes.len(),
            net.n_inputs()
        )));
    }
    for (channel, times) in input_spikes.iter().enumerate() {
        for &t in times {
            if !(0.0..=net.trial_t).contains(&t) {
                return Err(Error::InputOutOfTrial {
                    channel,
                    time: t,
                    trial_t: net.trial_t,
                });
            }
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::UnsortedInput { channel });
        }
    }
    Ok(())
}

/// Runs one trial of `net` on the given per-channel input spike times.
pub fn run_trial(net: &NetworkSpec, input_spikes: &[Vec<f64>]) -> Result<TrialResult> {
    validate_inputs(net, input_spikes)?;
    let p = &net.params;
    let phi_theta = p.phi_theta();
    let trial_t = net.trial_t;
    let n_layers = net.n_network_layers();
    let offsets = net.weight_offsets();

    let n_in_spikes: usize = input_spikes.iter().map(Vec::len).sum();
    let mut tape = EventTape::with_capacity(16 * (n_in_spikes + net.layer_sizes.iter().sum::<usize>()));
    let mut hasher = std::collections::hash_map::DefaultHasher::new();

    let mut spikes: Vec<Vec<SpikeEvent>> = Vec::with_capacity(n_layers + 1);
    let mut input_nodes = Vec::with_capacity(input_spikes.len());
    let mut events: Vec<PreEvent> = Vec::with_capacity(n_in_spikes);
    let mut input_layer = Vec::with_capacity(n_in_spikes);
    for (ch, times) in input_spikes.iter().enumerate() {
        let mut nodes = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let node = tape.push_input(ch, k, t);
            nodes.push(node);
            events.push(PreEvent {
                time: t,
                pre: ch as u32,
                node,
            });
            input_layer.push(SpikeEvent {
                time: t,
                layer: 0,
                neuron: ch,
                ordinal: k + 1,
            });
        }
        input_nodes.push(nodes);
    }
    spikes.push(input_layer);

    let mut terminal_phase = Vec::with_capacity(n_layers);
    let mut terminal_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(n_layers);
    let mut n_trial = Vec::with_capacity(n_layers);
    let mut first_spikes: Vec<Option<(f64, NodeId)>> = Vec::new();

    let mut emitted = Vec::new();
    for l in 0..n_layers {
        // ties resolve by presynaptic index (channel order for inputs)
        events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.pre.cmp(&b.pre)));
        for ev in &events {
            hasher.write_u32(ev.pre);
        }
        let w = &net.weights[l];
        let n_post = net.layer_sizes[l + 1];
        let mut next_events = Vec::new();
        let mut layer_spikes = Vec::new();
        let mut phases = Vec::with_capacity(n_post);
        let mut tnodes = Vec::with_capacity(n_post);
        let mut counts = Vec::with_capacity(n_post);
        let last = l + 1 == n_layers;
        for i in 0..n_post {
            emitted.clear();
            let row = w.row(i);
            let row = row.as_slice().expect("weights are row-major contiguous");
            let out = simulate_neuron(
                &events,
                row,
                (offsets[l] + i * w.ncols()) as u32,
                net.initial_phase[l][i],
                p,
                trial_t,
                &mut tape,
                &mut emitted,
                &mut hasher,
            );
            for (k, &(t, node)) in emitted.iter().enumerate() {
                layer_spikes.push(SpikeEvent {
                    time: t,
                    layer: l + 1,
                    neuron: i,
                    ordinal: k + 1,
                });
                next_events.push(PreEvent {
                    time: t,
                    pre: i as u32,
                    node,
                });
            }
            phases.push(out.terminal_phase);
            tnodes.push(out.terminal_node);
            counts.push(out.n_trial);
            if last {
                first_spikes.push(out.first_spike);
            }
        }
        spikes.push(layer_spikes);
        terminal_phase.push(phases);
        terminal_nodes.push(tnodes);
        n_trial.push(counts);
        events = next_events;
    }

    // pseudostates, recorded on the tape
    let (pseudostate_r, pseudo_u) = compute_pseudostates(&terminal_phase, &net.weights, p);
    let mut r_nodes: Vec<Vec<NodeId>> = Vec::with_capacity(n_layers);
    let mut parents = Vec::new();
    let mut wparts = Vec::new();
    for l in 0..n_layers {
        let n_post = net.layer_sizes[l + 1];
        let mut nodes = Vec::with_capacity(n_post);
        for i in 0..n_post {
            let u = pseudo_u[l][i];
            let u_node = if l == 0 {
                None
            } else {
                parents.clear();
                wparts.clear();
                let base = offsets[l] + i * net.weights[l].ncols();
                for (j, (&wij, (&rj, &rj_node))) in net.weights[l]
                    .row(i)
                    .iter()
                    .zip(pseudostate_r[l - 1].iter().zip(&r_nodes[l - 1]))
                    .enumerate()
                {
                    parents.push((rj_node, wij));
                    wparts.push(((base + j) as u32, rj));
                }
                Some(tape.push(NodeKind::PseudoInput, u, &parents, &wparts))
            };
            let j = ptc_jump(terminal_phase[l][i], u, p);
            let node = tape.push_opt(
                NodeKind::Pseudostate,
                pseudostate_r[l][i],
                [
                    (Some(terminal_nodes[l][i]), j.d_phase / phi_theta),
                    (u_node, j.d_weight / phi_theta),
                    (None, 0.0),
                ],
                None,
            );
            nodes.push(node);
        }
        r_nodes.push(nodes);
    }

    let out_l = n_layers - 1;
    let n_out = net.n_outputs();
    let mut first_spike_time = Vec::with_capacity(n_out);
    let mut first_spike_node = Vec::with_capacity(n_out);
    let mut first_spike_is_pseudo = Vec::with_capacity(n_out);
    for (i, fs) in first_spikes.iter().enumerate() {
        match *fs {
            Some((t, node)) => {
                first_spike_time.push(t);
                first_spike_node.push(node);
                first_spike_is_pseudo.push(false);
            }
            None => {
                let t_ps = trial_t + phi_theta * (1.0 - pseudostate_r[out_l][i]);
                let node = tape.push(
                    NodeKind::Pseudo,
                    t_ps,
                    &[(r_nodes[out_l][i], -phi_theta)],
                    &[],
                );
                first_spike_time.push(t_ps);
                first_spike_node.push(node);
                first_spike_is_pseudo.push(true);
            }
        }
    }
    let decoded = net
        .decode_pairs
        .iter()
        .map(|&(a, b)| decode_pair(first_spike_time[a], first_spike_time[b]))
        .collect();

    Ok(TrialResult {
        spikes,
        terminal_phase,
        pseudostate_r,
        pseudo_u,
        n_trial,
        first_spike_time,
        first_spike_node,
        first_spike_is_pseudo,
        decoded,
        decode_pairs: net.decode_pairs.clone(),
        input_nodes,
        weight_shapes: net.weights.iter().map(|w| w.dim()).collect(),
        signature: hasher.finish(),
        tape,
    })
}

/// Pair decoding `t_b - t_a`.
#[inline]
pub fn decode_pair(t_a: f64, t_b: f64) -> f64 {
    t_b - t_a
}

/// Terminal voltages of a finished trial, per network layer.
pub fn terminal_voltages(result: &TrialResult, p: &NeuronParams) -> Vec<Vec<f64>> {
    result
        .terminal_phase
        .iter()
        .map(|l| l.iter().map(|&phi| v_of_phi(phi, p)).collect())
        .collect()
}

/// `d r / d V(T)` for one neuron; used by tests of the pseudo chain.
pub fn pseudostate_voltage_slope(v_t: f64, u: f64, p: &NeuronParams) -> f64 {
    dphi_dv(v_t + u, p) / p.phi_theta()
}
