//! Online training and evaluation loops.
//!
//! Randomness is split into independent ChaCha streams derived from the run
//! seed: stream 0 initializes the weights, stream `e` drives shuffling and
//! dropout of epoch `e`. A run resumed from a checkpoint therefore continues
//! exactly as the uninterrupted run would have.

use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::dataset::{shuffled_epoch, Dataset};
use crate::desire::{apply_updates, backward_into, lr_decay, BackwardRecord, UpdateScratch};
use crate::error::{Error, Result};
use crate::metrics::{
    contribution_metric, AccuracyRow, ActivityRow, ContributionRow, LossRow, MetricsRecord,
};
use crate::network::{eval_mode, Mode, Network};
use crate::snn::SpikeRaster;

const PROGRESS_EVERY: usize = 10_000;

/// RNG for a given purpose: 0 for initialization, `e` for epoch `e`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// True iff `counts[target]` is strictly greater than every other count.
pub fn is_strict_max(counts: &[u32], target: usize) -> bool {
    let Some(&best) = counts.get(target) else {
        return false;
    };
    counts
        .iter()
        .enumerate()
        .all(|(k, &c)| k == target || c < best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    /// Mean local loss per neuron, one entry per layer.
    pub layer_losses: Vec<f64>,
    /// `[layer][class][neuron]` mean firing rate, if requested.
    pub activity: Option<Vec<Vec<Vec<f64>>>>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Classifies every sample with dropout disabled. Also runs the backward pass
/// (without updating) to collect each layer's local loss.
pub fn evaluate(net: &Network, data: &Dataset, record_activity: bool) -> Result<Evaluation> {
    let hp = *net.hyperparams();
    let t = hp.time_steps;
    let n_classes = net.n_outputs();
    let mut raster = SpikeRaster::zeros(t, net.n_inputs());
    let mut fwd = net.new_record();
    let mut bwd = BackwardRecord::default();
    let mut loss_sums = vec![0.0f64; net.layers().len()];
    let mut activity_sums: Vec<Vec<Vec<f64>>> = if record_activity {
        net.layers()
            .iter()
            .map(|l| vec![vec![0.0; l.n_out()]; n_classes])
            .collect()
    } else {
        Vec::new()
    };
    let mut class_counts = vec![0usize; n_classes];
    let mut correct = 0;

    for sample in &data.samples {
        let target = sample.label as usize;
        raster.encode_from(&sample.pixels, hp.theta_p)?;
        net.forward_into(&raster, &mut eval_mode(), &mut fwd)?;
        backward_into(net, &fwd, target, &mut bwd)?;
        if is_strict_max(&fwd.output_counts(), target) {
            correct += 1;
        }
        for (sum, &loss) in loss_sums.iter_mut().zip(&bwd.losses) {
            *sum += loss as f64;
        }
        if record_activity {
            class_counts[target] += 1;
            for (layer_sums, rec) in activity_sums.iter_mut().zip(&fwd.layers) {
                for (sum, c) in layer_sums[target].iter_mut().zip(rec.out_counts()) {
                    *sum += c as f64 / t as f64;
                }
            }
        }
    }

    let total = data.len();
    let layer_losses = loss_sums
        .iter()
        .zip(net.layers())
        .map(|(&s, l)| {
            if total == 0 {
                0.0
            } else {
                s / (total * l.n_out()) as f64
            }
        })
        .collect();
    let activity = record_activity.then(|| {
        for layer in &mut activity_sums {
            for (class, rates) in layer.iter_mut().enumerate() {
                let n = class_counts[class].max(1) as f64;
                rates.iter_mut().for_each(|r| *r /= n);
            }
        }
        activity_sums
    });
    Ok(Evaluation {
        correct,
        total,
        layer_losses,
        activity,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: u32,
    /// Learning rate used during this epoch.
    pub eta: f32,
    /// Strict-max accuracy on the training samples, with dropout active.
    pub train_accuracy: f64,
    pub evaluation: Evaluation,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub checkpoint: Checkpoint,
    pub metrics: MetricsRecord,
}

/// Trains for `config.epochs` epochs in total, evaluating on `test` after
/// each one. Checkpoints and metrics are written every epoch when the config
/// names a destination. `on_epoch` sees every report as it is produced.
pub fn train(
    config: &RunConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_epoch: impl FnMut(&EpochReport),
) -> Result<TrainOutcome> {
    config.validate()?;
    let (mut net, start_epoch, mut metrics) = initial_state(config)?;
    let hp = *net.hyperparams();
    let t = hp.time_steps;

    let mut raster = SpikeRaster::zeros(t, net.n_inputs());
    let mut fwd = net.new_record();
    let mut bwd = BackwardRecord::default();
    let mut scratch = UpdateScratch::default();

    for epoch in start_epoch + 1..=config.epochs {
        let started = Instant::now();
        let eta = lr_decay(hp.eta, hp.eta_decay, epoch - 1);
        let mut rng = stream_rng(config.seed, epoch as u64);
        let order = shuffled_epoch(train_set.len(), &mut rng);
        let track_contribution = epoch == 1 && config.contribution_samples > 0;
        let mut train_correct = 0usize;

        for (step, &idx) in order.iter().enumerate() {
            let sample = &train_set.samples[idx];
            let target = sample.label as usize;
            raster.encode_from(&sample.pixels, hp.theta_p)?;
            net.forward_into(&raster, &mut Mode::Train(&mut rng), &mut fwd)?;
            backward_into(&net, &fwd, target, &mut bwd)?;
            if is_strict_max(&fwd.output_counts(), target) {
                train_correct += 1;
            }
            if track_contribution && step < config.contribution_samples {
                let c = contribution_metric(&net.layers()[0], &raster, &bwd.errors[0])?;
                metrics
                    .contribution
                    .extend(c.iter().enumerate().map(|(i, &v)| ContributionRow {
                        sample_index: step as u32,
                        neuron: i as u32,
                        contribution: v as f64,
                    }));
            }
            apply_updates(&mut net, &fwd, &bwd, eta, &mut scratch, idx)?;
            if (step + 1) % PROGRESS_EVERY == 0 {
                info!(
                    "epoch {epoch}: {}/{} samples, train accuracy {:.4}",
                    step + 1,
                    order.len(),
                    train_correct as f64 / (step + 1) as f64
                );
            }
        }

        let evaluation = evaluate(&net, test_set, config.record_activity)?;
        record_epoch(&mut metrics, epoch, &evaluation);
        let next_eta = lr_decay(hp.eta, hp.eta_decay, epoch);
        let checkpoint = Checkpoint::from_network(&net, epoch, next_eta);
        if let Some(path) = &config.checkpoint {
            checkpoint.save(path)?;
        }
        if let Some(dir) = &config.metrics_dir {
            metrics.write_csv(dir)?;
            if config.svg {
                metrics.write_svg(dir)?;
            }
        }
        let report = EpochReport {
            epoch,
            eta,
            train_accuracy: if order.is_empty() {
                0.0
            } else {
                train_correct as f64 / order.len() as f64
            },
            evaluation,
            seconds: started.elapsed().as_secs_f64(),
        };
        info!(
            "epoch {epoch}: test accuracy {:.4}, local losses {:?} ({:.1} s)",
            report.evaluation.accuracy(),
            report.evaluation.layer_losses,
            report.seconds
        );
        on_epoch(&report);
    }

    let epochs_done = config.epochs.max(start_epoch);
    let checkpoint = Checkpoint::from_network(
        &net,
        epochs_done,
        lr_decay(hp.eta, hp.eta_decay, epochs_done),
    );
    Ok(TrainOutcome {
        network: net,
        checkpoint,
        metrics,
    })
}

fn record_epoch(metrics: &mut MetricsRecord, epoch: u32, ev: &Evaluation) {
    metrics.accuracy.push(AccuracyRow {
        epoch,
        accuracy: ev.accuracy(),
    });
    for (ell, &loss) in ev.layer_losses.iter().enumerate() {
        metrics.local_loss.push(LossRow {
            epoch,
            layer: ell as u32 + 1,
            mean_loss: loss,
        });
    }
    if let Some(activity) = &ev.activity {
        for (ell, classes) in activity.iter().enumerate() {
            for (class, rates) in classes.iter().enumerate() {
                for (neuron, &rate) in rates.iter().enumerate() {
                    metrics.activity.push(ActivityRow {
                        epoch,
                        layer: ell as u32 + 1,
                        neuron: neuron as u32,
                        class: class as u32,
                        mean_rate: rate,
                    });
                }
            }
        }
    }
}

/// Fresh network, or the checkpointed one when resuming.
fn initial_state(config: &RunConfig) -> Result<(Network, u32, MetricsRecord)> {
    let resume_from = config
        .checkpoint
        .as_ref()
        .filter(|p| config.resume && p.is_file());
    let Some(path) = resume_from else {
        let net = Network::new(&config.arch, config.hp, &mut stream_rng(config.seed, 0))?;
        return Ok((net, 0, MetricsRecord::default()));
    };

    let ckpt = Checkpoint::load(path)?;
    if ckpt.arch != config.arch {
        return Err(Error::Config(format!(
            "checkpoint {} has architecture {:?}, config asks for {:?}",
            path.display(),
            ckpt.arch,
            config.arch
        )));
    }
    if ckpt.hyperparams != config.hp {
        warn!("resuming with the hyperparameters stored in the checkpoint");
    }
    let mut metrics = match &config.metrics_dir {
        Some(dir) if dir.join("accuracy.csv").is_file() => MetricsRecord::read_csv(dir)?,
        _ => MetricsRecord::default(),
    };
    metrics.accuracy.retain(|r| r.epoch <= ckpt.epoch);
    metrics.local_loss.retain(|r| r.epoch <= ckpt.epoch);
    metrics.activity.retain(|r| r.epoch <= ckpt.epoch);
    info!(
        "resuming from {} after epoch {}",
        path.display(),
        ckpt.epoch
    );
    Ok((ckpt.to_network()?, ckpt.epoch, metrics))
}
