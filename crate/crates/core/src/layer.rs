//! Fully-connected spiking layers.
//!
//! Weights are stored input-major (`w_oi` lives at `i * n_out + o`) so that a
//! spiking input adds one contiguous row into the output currents. All public
//! accessors take `(o, i)` in the usual post/pre order.

use rand::Rng;

use crate::error::{Error, Result};
use crate::snn::{lif_step, trace_step, Hyperparams, SpikeRaster};

#[derive(Debug, Clone, PartialEq)]
pub struct FcLayer {
    n_in: usize,
    n_out: usize,
    weights: Vec<f32>,
}

impl FcLayer {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        FcLayer {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
        }
    }

    /// Uniform initialization in `[-a, a]` with `a = sqrt(6 / (n_in + n_out))`.
    /// Draws are taken in `(o, i)` row-major order.
    pub fn random<R: Rng + ?Sized>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (n_in + n_out) as f64).sqrt() as f32;
        let mut layer = FcLayer::zeros(n_in, n_out);
        for o in 0..n_out {
            for i in 0..n_in {
                layer.set_weight(o, i, rng.gen_range(-bound..=bound));
            }
        }
        layer
    }

    /// Builds a layer from an `n_out x n_in` row-major matrix of `w_oi`.
    pub fn from_rows(n_in: usize, n_out: usize, rows: &[f32]) -> Result<Self> {
        if rows.len() != n_in * n_out {
            return Err(Error::Dimension {
                context: "weight matrix",
                expected: n_in * n_out,
                actual: rows.len(),
            });
        }
        let mut layer = FcLayer::zeros(n_in, n_out);
        for o in 0..n_out {
            for i in 0..n_in {
                layer.set_weight(o, i, rows[o * n_in + i]);
            }
        }
        Ok(layer)
    }

    /// The weights as an `n_out x n_in` row-major matrix.
    pub fn to_rows(&self) -> Vec<f32> {
        let mut rows = Vec::with_capacity(self.weights.len());
        for o in 0..self.n_out {
            rows.extend((0..self.n_in).map(|i| self.weight(o, i)));
        }
        rows
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    #[inline]
    pub fn weight(&self, o: usize, i: usize) -> f32 {
        self.weights[i * self.n_out + o]
    }

    #[inline]
    pub fn set_weight(&mut self, o: usize, i: usize, w: f32) {
        self.weights[i * self.n_out + o] = w;
    }

    /// All outgoing weights of input neuron `i`, indexed by `o`.
    #[inline]
    pub fn fan_out(&self, i: usize) -> &[f32] {
        &self.weights[i * self.n_out..(i + 1) * self.n_out]
    }

    /// Raw input-major storage.
    pub fn storage(&self) -> &[f32] {
        &self.weights
    }

    pub(crate) fn storage_mut(&mut self) -> &mut [f32] {
        &mut self.weights
    }

    /// Advances the layer by one time step.
    ///
    /// `in_spikes` and `in_traces` are the pre-synaptic spikes and traces at
    /// step `t`. The input current of neuron `o` is the sum of `w_oi` over
    /// spiking, unmasked inputs, multiplied by the record's dropout scale.
    /// Returns the output spikes written at row `t`.
    pub fn forward_step<'r>(
        &self,
        state: &'r mut LayerRecord,
        in_spikes: &[bool],
        in_traces: &[f32],
        t: usize,
        hp: &Hyperparams,
    ) -> Result<&'r [bool]> {
        if in_spikes.len() != self.n_in || in_traces.len() != self.n_in {
            return Err(Error::Dimension {
                context: "layer input",
                expected: self.n_in,
                actual: in_spikes.len().min(in_traces.len()),
            });
        }
        if state.mask.len() != self.n_in || state.potentials.len() != self.n_out {
            return Err(Error::Dimension {
                context: "layer record",
                expected: self.n_in,
                actual: state.mask.len(),
            });
        }
        if t >= state.out_spikes.steps() {
            return Err(Error::Dimension {
                context: "time step",
                expected: state.out_spikes.steps(),
                actual: t,
            });
        }

        let current = &mut state.current;
        current.fill(0.0);
        for (i, (&spike, &keep)) in in_spikes.iter().zip(&state.mask).enumerate() {
            if spike && keep {
                for (c, &w) in current.iter_mut().zip(self.fan_out(i)) {
                    *c += w;
                }
            }
        }

        let out = state.out_spikes.row_mut(t);
        for o in 0..self.n_out {
            let (p, s) = lif_step(
                state.potentials[o],
                state.scale * current[o],
                hp.beta_p,
                hp.theta_p,
            );
            state.potentials[o] = p;
            out[o] = s;
            state.out_traces[o] = trace_step(state.out_traces[o], s, hp.beta_r);
        }
        state.in_traces[t * self.n_in..(t + 1) * self.n_in].copy_from_slice(in_traces);
        state.recorded_steps = state.recorded_steps.max(t + 1);
        Ok(state.out_spikes.row(t))
    }
}

/// Per-sample state and histories of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    /// Dropout mask over the layer's inputs; `true` keeps the input.
    pub mask: Vec<bool>,
    /// `1 / (1 - p_drop)` while training with dropout, otherwise 1.
    pub scale: f32,
    pub potentials: Vec<f32>,
    pub out_traces: Vec<f32>,
    /// `T x n_in` pre-synaptic traces, row-major.
    pub in_traces: Vec<f32>,
    pub out_spikes: SpikeRaster,
    /// Number of steps recorded since the last reset.
    pub recorded_steps: usize,
    current: Vec<f32>,
}

impl LayerRecord {
    pub fn new(n_in: usize, n_out: usize, time_steps: usize) -> Self {
        LayerRecord {
            mask: vec![true; n_in],
            scale: 1.0,
            potentials: vec![0.0; n_out],
            out_traces: vec![0.0; n_out],
            in_traces: vec![0.0; time_steps * n_in],
            out_spikes: SpikeRaster::zeros(time_steps, n_out),
            recorded_steps: 0,
            current: vec![0.0; n_out],
        }
    }

    /// Clears potentials, traces and histories; the mask is left to the caller.
    pub fn reset(&mut self) {
        self.potentials.fill(0.0);
        self.out_traces.fill(0.0);
        self.in_traces.fill(0.0);
        self.out_spikes.clear();
        self.recorded_steps = 0;
    }

    pub fn n_in(&self) -> usize {
        self.mask.len()
    }

    pub fn time_steps(&self) -> usize {
        self.out_spikes.steps()
    }

    #[inline]
    pub fn in_trace_row(&self, t: usize) -> &[f32] {
        let n = self.n_in();
        &self.in_traces[t * n..(t + 1) * n]
    }

    pub fn out_counts(&self) -> Vec<u32> {
        self.out_spikes.counts()
    }

    pub fn is_complete(&self) -> bool {
        self.recorded_steps == self.time_steps()
    }
}

/// Draws a per-sample dropout mask: each entry is dropped (`false`)
/// independently with probability `p_drop`.
pub fn make_dropout_mask<R: Rng + ?Sized>(n: usize, p_drop: f32, rng: &mut R) -> Result<Vec<bool>> {
    let mut mask = vec![true; n];
    fill_dropout_mask(&mut mask, p_drop, rng)?;
    Ok(mask)
}

pub(crate) fn fill_dropout_mask<R: Rng + ?Sized>(
    mask: &mut [bool],
    p_drop: f32,
    rng: &mut R,
) -> Result<()> {
    if !(0.0..1.0).contains(&p_drop) {
        return Err(Error::Config(format!(
            "dropout rate {p_drop} must lie in [0, 1)"
        )));
    }
    for m in mask.iter_mut() {
        *m = rng.gen::<f32>() >= p_drop;
    }
    Ok(())
}
