//! Neuron-level dynamics: leaky integrate-and-fire membranes, exponentially
//! decaying spike traces and integrate-and-fire rate encoding of intensities.
//!
//! All state is single precision. A spike at step `t` is visible in the trace
//! at the same step (decay first, then increment).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scalar knobs shared by every layer of a network.
///
/// `beta_p` and `beta_r` have no published values; the defaults
/// (`beta_p = 1`, `beta_r = 1 - 1/T`) are implementation choices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Membrane leak factor, in `[0, 1]`.
    pub beta_p: f32,
    /// Trace decay factor, in `[0, 1)`.
    pub beta_r: f32,
    /// Firing threshold.
    pub theta_p: f32,
    /// Ternarization threshold of the output layer.
    pub theta_out: f32,
    /// Ternarization threshold of hidden layers.
    pub theta_hid: f32,
    /// Learning rate at the start of training.
    pub eta: f32,
    /// Fractional learning-rate reduction applied after each epoch.
    pub eta_decay: f32,
    pub p_drop_hidden: f32,
    pub p_drop_input: f32,
    /// Spike train length `T`.
    pub time_steps: usize,
}

impl Hyperparams {
    /// MNIST settings: 30% hidden dropout, no input dropout.
    pub fn mnist() -> Self {
        let time_steps = 20;
        Hyperparams {
            beta_p: 1.0,
            beta_r: default_beta_r(time_steps),
            theta_p: 1.0,
            theta_out: 0.30,
            theta_hid: 0.05,
            eta: 1e-5,
            eta_decay: 0.04,
            p_drop_hidden: 0.30,
            p_drop_input: 0.0,
            time_steps,
        }
    }

    /// Fashion-MNIST settings: 40% hidden dropout, 5% input dropout.
    pub fn fashion_mnist() -> Self {
        Hyperparams {
            p_drop_hidden: 0.40,
            p_drop_input: 0.05,
            ..Self::mnist()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg()))
            }
        }
        check((0.0..=1.0).contains(&self.beta_p), || {
            format!("beta_p = {} must lie in [0, 1]", self.beta_p)
        })?;
        check((0.0..1.0).contains(&self.beta_r), || {
            format!("beta_r = {} must lie in [0, 1)", self.beta_r)
        })?;
        check(self.theta_p > 0.0 && self.theta_p.is_finite(), || {
            format!("theta_p = {} must be positive", self.theta_p)
        })?;
        check(self.theta_out >= 0.0 && self.theta_out.is_finite(), || {
            format!("theta_out = {} must be non-negative", self.theta_out)
        })?;
        check(self.theta_hid >= 0.0 && self.theta_hid.is_finite(), || {
            format!("theta_hid = {} must be non-negative", self.theta_hid)
        })?;
        // eta = 0 is accepted so that a run can be frozen for inspection.
        check(self.eta >= 0.0 && self.eta.is_finite(), || {
            format!("eta = {} must be non-negative", self.eta)
        })?;
        check((0.0..1.0).contains(&self.eta_decay), || {
            format!("eta_decay = {} must lie in [0, 1)", self.eta_decay)
        })?;
        check((0.0..1.0).contains(&self.p_drop_hidden), || {
            format!("p_drop_hidden = {} must lie in [0, 1)", self.p_drop_hidden)
        })?;
        check((0.0..1.0).contains(&self.p_drop_input), || {
            format!("p_drop_input = {} must lie in [0, 1)", self.p_drop_input)
        })?;
        check(self.time_steps >= 1, || {
            "time_steps must be at least 1".into()
        })
    }
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self::mnist()
    }
}

/// Default trace decay for a given spike-train length: `1 - 1/T`.
pub fn default_beta_r(time_steps: usize) -> f32 {
    1.0 - 1.0 / time_steps as f32
}

/// One membrane update. Returns the post-reset potential and whether the
/// neuron fired. Firing requires the potential to strictly exceed `theta_p`;
/// the reset subtracts `theta_p` so super-threshold residue is kept.
#[inline]
pub fn lif_step(potential: f32, weighted_input: f32, beta_p: f32, theta_p: f32) -> (f32, bool) {
    let v = beta_p * potential + weighted_input;
    if v > theta_p {
        (v - theta_p, true)
    } else {
        (v, false)
    }
}

#[inline]
pub fn trace_step(trace: f32, spike: bool, beta_r: f32) -> f32 {
    let decayed = beta_r * trace;
    if spike {
        decayed + 1.0
    } else {
        decayed
    }
}

/// Binary spike sequence of a single neuron.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpikeTrain(Vec<bool>);

impl SpikeTrain {
    pub fn new(bits: Vec<bool>) -> Self {
        SpikeTrain(bits)
    }

    pub fn silent(time_steps: usize) -> Self {
        SpikeTrain(vec![false; time_steps])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn spike_count(&self) -> usize {
        self.0.iter().filter(|&&s| s).count()
    }

    pub fn spike_times(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(t, _)| t)
    }
}

impl From<Vec<bool>> for SpikeTrain {
    fn from(bits: Vec<bool>) -> Self {
        SpikeTrain(bits)
    }
}

/// Normalized spike count, `count / T`. An empty train has rate 0.
pub fn spike_rate(train: &SpikeTrain) -> f32 {
    if train.is_empty() {
        return 0.0;
    }
    train.spike_count() as f32 / train.len() as f32
}

/// Rate-encodes an intensity in `[0, 1]` with a non-leaky integrate-and-fire
/// neuron driven by a constant current equal to the intensity.
///
/// Unlike [`lif_step`], the encoder fires when the potential *reaches* the
/// threshold, which makes the count `floor(intensity * T / theta_p)` under
/// exact arithmetic (a full-brightness pixel fires on every step).
pub fn encode_intensity(intensity: f32, time_steps: usize, theta_p: f32) -> Result<SpikeTrain> {
    if !(0.0..=1.0).contains(&intensity) {
        return Err(Error::Intensity(intensity));
    }
    let mut bits = vec![false; time_steps];
    encode_into(intensity, theta_p, &mut bits);
    Ok(SpikeTrain(bits))
}

/// Writes the encoded train of one pixel into `out` (one entry per step).
pub(crate) fn encode_into(intensity: f32, theta_p: f32, out: &mut [bool]) {
    let mut potential = 0.0f32;
    for bit in out.iter_mut() {
        potential += intensity;
        *bit = potential >= theta_p;
        if *bit {
            potential -= theta_p;
        }
    }
}

/// Row-major `T x n` spike matrix: row `t` holds the spikes of all `n`
/// neurons at step `t`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpikeRaster {
    steps: usize,
    width: usize,
    bits: Vec<bool>,
}

impl SpikeRaster {
    pub fn zeros(steps: usize, width: usize) -> Self {
        SpikeRaster {
            steps,
            width,
            bits: vec![false; steps * width],
        }
    }

    /// Builds a raster from one train per neuron; all trains must share a length.
    pub fn from_trains(trains: &[SpikeTrain]) -> Result<Self> {
        let steps = trains.first().map_or(0, SpikeTrain::len);
        let mut raster = SpikeRaster::zeros(steps, trains.len());
        for (n, train) in trains.iter().enumerate() {
            if train.len() != steps {
                return Err(Error::Dimension {
                    context: "spike train length",
                    expected: steps,
                    actual: train.len(),
                });
            }
            for (t, &s) in train.bits().iter().enumerate() {
                raster.set(t, n, s);
            }
        }
        Ok(raster)
    }

    /// Rate-encodes a vector of intensities.
    pub fn encode(intensities: &[f32], time_steps: usize, theta_p: f32) -> Result<Self> {
        let mut raster = SpikeRaster::zeros(time_steps, intensities.len());
        raster.encode_from(intensities, theta_p)?;
        Ok(raster)
    }

    /// Re-encodes in place, reusing the allocation. The width must match.
    pub fn encode_from(&mut self, intensities: &[f32], theta_p: f32) -> Result<()> {
        if intensities.len() != self.width {
            return Err(Error::Dimension {
                context: "encoder input width",
                expected: self.width,
                actual: intensities.len(),
            });
        }
        let mut train = vec![false; self.steps];
        for (n, &x) in intensities.iter().enumerate() {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::Intensity(x));
            }
            encode_into(x, theta_p, &mut train);
            for (t, &s) in train.iter().enumerate() {
                self.bits[t * self.width + n] = s;
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn get(&self, t: usize, n: usize) -> bool {
        self.bits[t * self.width + n]
    }

    #[inline]
    pub fn set(&mut self, t: usize, n: usize, spike: bool) {
        self.bits[t * self.width + n] = spike;
    }

    #[inline]
    pub fn row(&self, t: usize) -> &[bool] {
        &self.bits[t * self.width..(t + 1) * self.width]
    }

    #[inline]
    pub(crate) fn row_mut(&mut self, t: usize) -> &mut [bool] {
        &mut self.bits[t * self.width..(t + 1) * self.width]
    }

    pub fn train(&self, n: usize) -> SpikeTrain {
        SpikeTrain((0..self.steps).map(|t| self.get(t, n)).collect())
    }

    pub fn counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.width];
        for row in self.bits.chunks_exact(self.width.max(1)) {
            for (c, &s) in counts.iter_mut().zip(row) {
                *c += s as u32;
            }
        }
        counts
    }

    pub(crate) fn clear(&mut self) {
        self.bits.fill(false);
    }
}
