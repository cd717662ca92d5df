//! Desire backpropagation.
//!
//! Each neuron carries a ternary desire telling whether it should spike more
//! (+1), less (-1) or is indifferent (0). Output desires come from the label;
//! hidden desires are derived layer by layer (last to first) from local
//! errors of the layer above. The desire then gates and signs a
//! post-synaptic STDP update `dw_oi = d_o * eta * sum_t s_o[t] r_i[t]`.

use std::fmt;

use crate::error::{Error, Result};
use crate::layer::{FcLayer, LayerRecord};
use crate::network::{ForwardRecord, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
#[repr(i8)]
pub enum TernaryDesire {
    Decrease = -1,
    #[default]
    Indifferent = 0,
    Increase = 1,
}

impl TernaryDesire {
    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn as_f32(self) -> f32 {
        self as i8 as f32
    }

    pub fn is_active(self) -> bool {
        self != TernaryDesire::Indifferent
    }

    /// Spike-rate target of a desiring neuron: 1 for `Increase`, 0 for
    /// `Decrease`. Indifferent neurons have no target.
    pub fn target_rate(self) -> Option<f32> {
        match self {
            TernaryDesire::Increase => Some(1.0),
            TernaryDesire::Decrease => Some(0.0),
            TernaryDesire::Indifferent => None,
        }
    }
}

impl TryFrom<i8> for TernaryDesire {
    type Error = i8;

    fn try_from(v: i8) -> std::result::Result<Self, i8> {
        match v {
            -1 => Ok(TernaryDesire::Decrease),
            0 => Ok(TernaryDesire::Indifferent),
            1 => Ok(TernaryDesire::Increase),
            other => Err(other),
        }
    }
}

impl fmt::Display for TernaryDesire {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.value())
    }
}

/// `sign(x)` when `|x| > theta`, otherwise 0. Zero always maps to 0.
#[inline]
pub fn ternarize(x: f32, theta: f32) -> TernaryDesire {
    if x.abs() > theta {
        if x > 0.0 {
            TernaryDesire::Increase
        } else {
            TernaryDesire::Decrease
        }
    } else {
        TernaryDesire::Indifferent
    }
}

/// Output error `e_k = count_k / T - target_k` with a one-hot target.
pub fn output_error(counts: &[u32], target: usize, time_steps: usize) -> Result<Vec<f32>> {
    if target >= counts.len() {
        return Err(Error::Target {
            target,
            classes: counts.len(),
        });
    }
    let t = time_steps as f32;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(k, &c)| c as f32 / t - if k == target { 1.0 } else { 0.0 })
        .collect())
}

/// `0.5 * sum(e^2)`.
pub fn squared_loss(errors: &[f32]) -> f32 {
    0.5 * errors.iter().map(|e| e * e).sum::<f32>()
}

pub fn output_desire(errors: &[f32], theta_out: f32) -> Vec<TernaryDesire> {
    errors.iter().map(|&e| ternarize(-e, theta_out)).collect()
}

/// Local error of a neuron given its own desire; indifferent neurons have
/// zero error.
#[inline]
pub fn hidden_error(spike_count: u32, desire: TernaryDesire, time_steps: usize) -> f32 {
    match desire.target_rate() {
        Some(target) => spike_count as f32 / time_steps as f32 - target,
        None => 0.0,
    }
}

/// Desires of a layer's inputs from the local errors of its outputs.
///
/// For each input `g`: `grad_g = sum_h w_hg * e_h` (summed in ascending `h`),
/// `d_g = ternarize(-grad_g, theta_hid)`. Dropped inputs (`mask[g] == false`)
/// get no desire.
pub fn hidden_desire(
    layer: &FcLayer,
    errors: &[f32],
    mask: &[bool],
    theta_hid: f32,
) -> Result<Vec<TernaryDesire>> {
    let mut out = vec![TernaryDesire::Indifferent; layer.n_in()];
    hidden_desire_into(layer, errors, mask, theta_hid, &mut out)?;
    Ok(out)
}

fn hidden_desire_into(
    layer: &FcLayer,
    errors: &[f32],
    mask: &[bool],
    theta_hid: f32,
    out: &mut [TernaryDesire],
) -> Result<()> {
    if errors.len() != layer.n_out() {
        return Err(Error::Dimension {
            context: "hidden errors",
            expected: layer.n_out(),
            actual: errors.len(),
        });
    }
    if mask.len() != layer.n_in() || out.len() != layer.n_in() {
        return Err(Error::Dimension {
            context: "hidden desire mask",
            expected: layer.n_in(),
            actual: mask.len(),
        });
    }
    if errors.iter().all(|&e| e == 0.0) {
        out.fill(TernaryDesire::Indifferent);
        return Ok(());
    }
    for (g, (d, &keep)) in out.iter_mut().zip(mask).enumerate() {
        *d = if keep {
            let grad = layer
                .fan_out(g)
                .iter()
                .zip(errors)
                .fold(0.0f32, |acc, (&w, &e)| acc + w * e);
            ternarize(-grad, theta_hid)
        } else {
            TernaryDesire::Indifferent
        };
    }
    Ok(())
}

/// Per-sample result of the backward pass, indexed by layer (first hidden
/// layer first). Entry `l` describes the output neurons of layer `l`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BackwardRecord {
    pub desires: Vec<Vec<TernaryDesire>>,
    /// Local errors used for propagation: zero for indifferent neurons,
    /// `rate - target` otherwise. For the output layer this coincides with
    /// the output error wherever the desire is non-zero.
    pub errors: Vec<Vec<f32>>,
    /// Raw output error of every output neuron.
    pub output_errors: Vec<f32>,
    /// Squared loss per layer: the output error for the last layer, the local
    /// errors for hidden layers.
    pub losses: Vec<f32>,
}

impl BackwardRecord {
    /// True when no neuron anywhere wants to change.
    pub fn is_equilibrium(&self) -> bool {
        self.desires.iter().flatten().all(|d| !d.is_active())
    }
}

/// Computes output error and desire, then walks the hidden layers from last
/// to first deriving local errors and the desires of the layer below.
pub fn backward_pass(net: &Network, fwd: &ForwardRecord, target: usize) -> Result<BackwardRecord> {
    let mut out = BackwardRecord::default();
    backward_into(net, fwd, target, &mut out)?;
    Ok(out)
}

pub fn backward_into(
    net: &Network,
    fwd: &ForwardRecord,
    target: usize,
    out: &mut BackwardRecord,
) -> Result<()> {
    let hp = net.hyperparams();
    let layers = net.layers();
    let n_layers = layers.len();
    if fwd.layers.len() != n_layers {
        return Err(Error::Dimension {
            context: "forward record layers",
            expected: n_layers,
            actual: fwd.layers.len(),
        });
    }
    if let Some(ell) = fwd.layers.iter().position(|r| !r.is_complete()) {
        return Err(Error::MissingHistory(ell));
    }
    let t = hp.time_steps;

    out.desires.resize_with(n_layers, Vec::new);
    out.errors.resize_with(n_layers, Vec::new);
    out.losses.resize(n_layers, 0.0);
    for (ell, layer) in layers.iter().enumerate() {
        out.desires[ell].clear();
        out.desires[ell].resize(layer.n_out(), TernaryDesire::Indifferent);
        out.errors[ell].clear();
        out.errors[ell].resize(layer.n_out(), 0.0);
    }

    let last = n_layers - 1;
    out.output_errors = output_error(&fwd.layers[last].out_counts(), target, t)?;
    out.desires[last] = output_desire(&out.output_errors, hp.theta_out);
    out.losses[last] = squared_loss(&out.output_errors);

    for ell in (0..n_layers).rev() {
        let counts = fwd.layers[ell].out_counts();
        let (below, here) = out.desires.split_at_mut(ell);
        let desires = &here[0];
        for ((e, &c), &d) in out.errors[ell].iter_mut().zip(&counts).zip(desires) {
            *e = hidden_error(c, d, t);
        }
        if ell != last {
            out.losses[ell] = squared_loss(&out.errors[ell]);
        }
        if ell > 0 {
            hidden_desire_into(
                &layers[ell],
                &out.errors[ell],
                &fwd.layers[ell].mask,
                hp.theta_hid,
                &mut below[ell - 1],
            )?;
        }
    }
    Ok(())
}

/// Weight changes for one layer, stored like the layer (input-major).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDelta {
    n_in: usize,
    n_out: usize,
    data: Vec<f32>,
}

impl WeightDelta {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        WeightDelta {
            n_in,
            n_out,
            data: vec![0.0; n_in * n_out],
        }
    }

    #[inline]
    pub fn get(&self, o: usize, i: usize) -> f32 {
        self.data[i * self.n_out + o]
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&d| d == 0.0)
    }

    /// Adds the delta to the layer. Returns `false` if any updated weight is
    /// not finite.
    pub fn apply(&self, layer: &mut FcLayer) -> bool {
        let mut finite = true;
        for (w, &d) in layer.storage_mut().iter_mut().zip(&self.data) {
            *w += d;
            finite &= w.is_finite();
        }
        finite
    }
}

/// Desire-gated STDP: `dw_oi = d_o * eta * sum_t s_o[t] * r_i[t]`.
///
/// Indifferent outputs and dropped inputs get no update.
pub fn stdp_update(
    layer: &FcLayer,
    record: &LayerRecord,
    desires: &[TernaryDesire],
    eta: f32,
) -> Result<WeightDelta> {
    let mut delta = WeightDelta::zeros(layer.n_in(), layer.n_out());
    stdp_update_into(layer, record, desires, eta, &mut delta)?;
    Ok(delta)
}

pub fn stdp_update_into(
    layer: &FcLayer,
    record: &LayerRecord,
    desires: &[TernaryDesire],
    eta: f32,
    delta: &mut WeightDelta,
) -> Result<()> {
    let (n_in, n_out) = (layer.n_in(), layer.n_out());
    if desires.len() != n_out {
        return Err(Error::Dimension {
            context: "layer desires",
            expected: n_out,
            actual: desires.len(),
        });
    }
    if record.n_in() != n_in || record.out_spikes.width() != n_out {
        return Err(Error::Dimension {
            context: "layer record",
            expected: n_in,
            actual: record.n_in(),
        });
    }
    if !record.is_complete() {
        return Err(Error::MissingHistory(0));
    }
    if delta.n_in != n_in || delta.n_out != n_out {
        *delta = WeightDelta::zeros(n_in, n_out);
    } else {
        delta.data.fill(0.0);
    }
    if desires.iter().all(|d| !d.is_active()) {
        return Ok(());
    }

    // Sum of pre-synaptic traces at post-synaptic spike times, accumulated
    // in ascending t. `gate[o]` is 1 where o spiked and has a desire.
    let mut gate = vec![0.0f32; n_out];
    for t in 0..record.time_steps() {
        let spikes = record.out_spikes.row(t);
        let mut any = false;
        for ((g, &s), d) in gate.iter_mut().zip(spikes).zip(desires) {
            let on = s && d.is_active();
            *g = if on { 1.0 } else { 0.0 };
            any |= on;
        }
        if !any {
            continue;
        }
        for (i, (&r, &keep)) in record.in_trace_row(t).iter().zip(&record.mask).enumerate() {
            if !keep || r == 0.0 {
                continue;
            }
            let row = &mut delta.data[i * n_out..(i + 1) * n_out];
            for (a, &g) in row.iter_mut().zip(&gate) {
                *a += r * g;
            }
        }
    }

    let signed_eta: Vec<f32> = desires.iter().map(|d| d.as_f32() * eta).collect();
    for row in delta.data.chunks_exact_mut(n_out) {
        for (a, &s) in row.iter_mut().zip(&signed_eta) {
            *a *= s;
        }
    }
    Ok(())
}

/// Scratch buffers for [`apply_updates`], reusable across samples.
#[derive(Debug, Default)]
pub struct UpdateScratch {
    deltas: Vec<WeightDelta>,
}

/// Computes the deltas of every layer from one sample's records, then adds
/// them to the weights. Fails with [`Error::NonFinite`] if a weight diverges.
pub fn apply_updates(
    net: &mut Network,
    fwd: &ForwardRecord,
    bwd: &BackwardRecord,
    eta: f32,
    scratch: &mut UpdateScratch,
    sample: usize,
) -> Result<()> {
    let n_layers = net.layers().len();
    scratch
        .deltas
        .resize_with(n_layers, || WeightDelta::zeros(0, 0));
    for (ell, layer) in net.layers().iter().enumerate() {
        stdp_update_into(
            layer,
            &fwd.layers[ell],
            &bwd.desires[ell],
            eta,
            &mut scratch.deltas[ell],
        )?;
    }
    for (ell, layer) in net.layers_mut().iter_mut().enumerate() {
        if !bwd.desires[ell].iter().any(|d| d.is_active()) {
            continue;
        }
        if !scratch.deltas[ell].apply(layer) {
            return Err(Error::NonFinite { layer: ell, sample });
        }
    }
    Ok(())
}

/// Learning rate after `epochs_completed` epochs of multiplicative decay.
pub fn lr_decay(eta: f32, decay: f32, epochs_completed: u32) -> f32 {
    (eta as f64 * (1.0 - decay as f64).powi(epochs_completed as i32)) as f32
}

/// Classical pair-based STDP over a window, given spike trains and traces:
/// `sum_t eta_plus * s_o[t] r_i[t] - eta_minus * s_i[t] r_o[t]`.
///
/// The desire-gated rule keeps only the first (potentiation) term and lets
/// the desire pick its sign. Kept as a reference for tests and analysis.
pub fn classical_stdp_reference(
    s_i: &[bool],
    s_o: &[bool],
    r_i: &[f64],
    r_o: &[f64],
    eta_plus: f64,
    eta_minus: f64,
) -> Result<f64> {
    let t = s_i.len();
    for len in [s_o.len(), r_i.len(), r_o.len()] {
        if len != t {
            return Err(Error::Dimension {
                context: "stdp window",
                expected: t,
                actual: len,
            });
        }
    }
    Ok((0..t)
        .map(|k| {
            let ltp = if s_o[k] { eta_plus * r_i[k] } else { 0.0 };
            let ltd = if s_i[k] { eta_minus * r_o[k] } else { 0.0 };
            ltp - ltd
        })
        .sum())
}
