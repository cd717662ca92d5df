//! Multi-layer network and the T-step forward pass.

use rand::Rng;

use crate::error::{Error, Result};
use crate::layer::{fill_dropout_mask, FcLayer, LayerRecord};
use crate::snn::{trace_step, Hyperparams, SpikeRaster};

/// Whether a forward pass trains (dropout active) or evaluates.
pub enum Mode<'a, R: Rng + ?Sized> {
    Train(&'a mut R),
    Eval,
}

impl<R: Rng + ?Sized> Mode<'_, R> {
    pub fn is_train(&self) -> bool {
        matches!(self, Mode::Train(_))
    }
}

/// Convenience for evaluation calls, which need no random source.
pub fn eval_mode<'a>() -> Mode<'a, rand_chacha::ChaCha8Rng> {
    Mode::Eval
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<FcLayer>,
    hp: Hyperparams,
}

impl Network {
    /// Randomly initialized network for layer widths `arch` (input width first).
    pub fn new<R: Rng + ?Sized>(arch: &[usize], hp: Hyperparams, rng: &mut R) -> Result<Self> {
        validate_arch(arch)?;
        hp.validate()?;
        let layers = arch
            .windows(2)
            .map(|w| FcLayer::random(w[0], w[1], rng))
            .collect();
        Ok(Network { layers, hp })
    }

    pub fn from_layers(layers: Vec<FcLayer>, hp: Hyperparams) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(Error::Dimension {
                    context: "adjacent layer widths",
                    expected: pair[0].n_out(),
                    actual: pair[1].n_in(),
                });
            }
        }
        hp.validate()?;
        Ok(Network { layers, hp })
    }

    pub fn layers(&self) -> &[FcLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [FcLayer] {
        &mut self.layers
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hp
    }

    pub fn hyperparams_mut(&mut self) -> &mut Hyperparams {
        &mut self.hp
    }

    /// Layer widths, input first.
    pub fn arch(&self) -> Vec<usize> {
        let mut arch = vec![self.layers[0].n_in()];
        arch.extend(self.layers.iter().map(FcLayer::n_out));
        arch
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    /// Empty record sized for this network.
    pub fn new_record(&self) -> ForwardRecord {
        let t = self.hp.time_steps;
        ForwardRecord {
            input_traces: vec![0.0; self.n_inputs()],
            layers: self
                .layers
                .iter()
                .map(|l| LayerRecord::new(l.n_in(), l.n_out(), t))
                .collect(),
        }
    }

    /// Runs one sample through the network, overwriting `record`.
    ///
    /// All potentials and traces start at zero. In train mode a fresh dropout
    /// mask is drawn for every layer's inputs (input dropout for the first
    /// layer, hidden dropout elsewhere); the output neurons are never dropped.
    pub fn forward_into<R: Rng + ?Sized>(
        &self,
        input: &SpikeRaster,
        mode: &mut Mode<'_, R>,
        record: &mut ForwardRecord,
    ) -> Result<()> {
        let time_steps = self.hp.time_steps;
        if input.width() != self.n_inputs() {
            return Err(Error::Dimension {
                context: "network input width",
                expected: self.n_inputs(),
                actual: input.width(),
            });
        }
        if input.steps() != time_steps {
            return Err(Error::Dimension {
                context: "input spike train length",
                expected: time_steps,
                actual: input.steps(),
            });
        }
        if record.layers.len() != self.layers.len() || record.layers[0].time_steps() != time_steps {
            *record = self.new_record();
        }

        record.input_traces.fill(0.0);
        for (ell, rec) in record.layers.iter_mut().enumerate() {
            rec.reset();
            match mode {
                Mode::Train(rng) => {
                    let p_drop = if ell == 0 {
                        self.hp.p_drop_input
                    } else {
                        self.hp.p_drop_hidden
                    };
                    fill_dropout_mask(&mut rec.mask, p_drop, &mut **rng)?;
                    rec.scale = 1.0 / (1.0 - p_drop);
                }
                Mode::Eval => {
                    rec.mask.fill(true);
                    rec.scale = 1.0;
                }
            }
        }

        let ForwardRecord {
            input_traces,
            layers: records,
        } = record;
        for t in 0..time_steps {
            let spikes = input.row(t);
            for (r, &s) in input_traces.iter_mut().zip(spikes) {
                *r = trace_step(*r, s, self.hp.beta_r);
            }
            let (first, rest) = records.split_first_mut().expect("non-empty network");
            self.layers[0].forward_step(first, spikes, input_traces, t, &self.hp)?;
            let mut upstream = first;
            for (layer, rec) in self.layers[1..].iter().zip(rest.iter_mut()) {
                layer.forward_step(
                    rec,
                    upstream.out_spikes.row(t),
                    &upstream.out_traces,
                    t,
                    &self.hp,
                )?;
                upstream = rec;
            }
        }
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        input: &SpikeRaster,
        mode: &mut Mode<'_, R>,
    ) -> Result<ForwardRecord> {
        let mut record = self.new_record();
        self.forward_into(input, mode, &mut record)?;
        Ok(record)
    }
}

pub(crate) fn validate_arch(arch: &[usize]) -> Result<()> {
    if arch.len() < 2 {
        return Err(Error::Config(format!(
            "architecture needs at least an input and an output width, got {arch:?}"
        )));
    }
    if arch.contains(&0) {
        return Err(Error::Config(format!("zero-width layer in {arch:?}")));
    }
    Ok(())
}

/// Everything one forward pass leaves behind for the learning rule.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardRecord {
    /// Traces of the network inputs after the last step.
    pub input_traces: Vec<f32>,
    pub layers: Vec<LayerRecord>,
}

impl ForwardRecord {
    pub fn output(&self) -> &LayerRecord {
        self.layers.last().expect("non-empty record")
    }

    pub fn output_counts(&self) -> Vec<u32> {
        self.output().out_counts()
    }
}
