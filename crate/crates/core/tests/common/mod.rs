//! Shared test support: a brute-force reference implementation of one
//! training step, random case generation, and dataset discovery.
#![allow(dead_code, clippy::needless_range_loop)]

pub mod checks;

use std::path::PathBuf;

use desire_core::desire::{apply_updates, backward_pass, UpdateScratch};
use desire_core::layer::FcLayer;
use desire_core::network::{Mode, Network};
use desire_core::snn::{Hyperparams, SpikeRaster};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Everything the reference computes for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub masks: Vec<Vec<bool>>,
    /// `[layer][t][neuron]`
    pub spikes: Vec<Vec<Vec<bool>>>,
    pub output_errors: Vec<f32>,
    pub errors: Vec<Vec<f32>>,
    pub desires: Vec<Vec<i8>>,
    pub losses: Vec<f32>,
    /// `[layer][o][i]` after the update.
    pub weights: Vec<Vec<Vec<f32>>>,
}

fn ternary(x: f32, theta: f32) -> i8 {
    if x.abs() > theta {
        if x > 0.0 {
            1
        } else {
            -1
        }
    } else {
        0
    }
}

/// One forward pass, backward pass and weight update, written out loop by
/// loop with plain nested vectors. `rng` is `Some` in train mode; dropout
/// masks are drawn from it layer by layer, input by input.
pub fn reference_step(
    weights: &[Vec<Vec<f32>>],
    hp: &Hyperparams,
    input: &[Vec<bool>],
    target: usize,
    eta: f32,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Reference {
    let steps = input.len();
    let n_layers = weights.len();

    let mut masks = Vec::new();
    let mut scales = Vec::new();
    for (ell, w) in weights.iter().enumerate() {
        let n_in = w[0].len();
        match rng.as_deref_mut() {
            Some(r) => {
                let p = if ell == 0 {
                    hp.p_drop_input
                } else {
                    hp.p_drop_hidden
                };
                masks.push((0..n_in).map(|_| r.gen::<f32>() >= p).collect::<Vec<_>>());
                scales.push(1.0f32 / (1.0 - p));
            }
            None => {
                masks.push(vec![true; n_in]);
                scales.push(1.0);
            }
        }
    }

    // Forward: spikes[l][t][o] and the traces of each layer's inputs.
    let mut layer_in_spikes: Vec<Vec<bool>> = input.to_vec();
    let mut spikes = Vec::new();
    let mut in_traces: Vec<Vec<Vec<f32>>> = Vec::new();
    for (ell, w) in weights.iter().enumerate() {
        let n_out = w.len();
        let n_in = w[0].len();
        let mut r = vec![0.0f32; n_in];
        let mut traces = Vec::new();
        let mut p = vec![0.0f32; n_out];
        let mut out = Vec::new();
        for t in 0..steps {
            for i in 0..n_in {
                let s = if layer_in_spikes[t][i] { 1.0 } else { 0.0 };
                r[i] = hp.beta_r * r[i] + s;
            }
            traces.push(r.clone());
            let mut row = vec![false; n_out];
            for o in 0..n_out {
                let mut sum = 0.0f32;
                for i in 0..n_in {
                    if layer_in_spikes[t][i] && masks[ell][i] {
                        sum += w[o][i];
                    }
                }
                let v = hp.beta_p * p[o] + scales[ell] * sum;
                row[o] = v > hp.theta_p;
                p[o] = if row[o] { v - hp.theta_p } else { v };
            }
            out.push(row);
        }
        in_traces.push(traces);
        layer_in_spikes = out.clone();
        spikes.push(out);
    }

    let rate = |ell: usize, o: usize| -> f32 {
        let c = spikes[ell].iter().filter(|row| row[o]).count();
        c as f32 / steps as f32
    };

    // Output error and desire.
    let last = n_layers - 1;
    let n_classes = weights[last].len();
    let output_errors: Vec<f32> = (0..n_classes)
        .map(|k| rate(last, k) - if k == target { 1.0 } else { 0.0 })
        .collect();
    let mut desires: Vec<Vec<i8>> = weights.iter().map(|w| vec![0; w.len()]).collect();
    desires[last] = output_errors
        .iter()
        .map(|&e| ternary(-e, hp.theta_out))
        .collect();

    // Local errors from desires, then desires of the layer below.
    let mut errors: Vec<Vec<f32>> = weights.iter().map(|w| vec![0.0; w.len()]).collect();
    for ell in (0..n_layers).rev() {
        for h in 0..weights[ell].len() {
            let d = desires[ell][h];
            errors[ell][h] = if d == 0 {
                0.0
            } else {
                rate(ell, h) - (d as f32 + 1.0) / 2.0
            };
        }
        if ell > 0 {
            for g in 0..weights[ell][0].len() {
                if !masks[ell][g] {
                    desires[ell - 1][g] = 0;
                    continue;
                }
                let mut grad = 0.0f32;
                for h in 0..weights[ell].len() {
                    grad += weights[ell][h][g] * errors[ell][h];
                }
                desires[ell - 1][g] = ternary(-grad, hp.theta_hid);
            }
        }
    }

    let half_square = |v: &[f32]| {
        let mut s = 0.0f32;
        for &e in v {
            s += e * e;
        }
        0.5 * s
    };
    let losses = (0..n_layers)
        .map(|ell| {
            if ell == last {
                half_square(&output_errors)
            } else {
                half_square(&errors[ell])
            }
        })
        .collect();

    // Update: dw_oi = d_o * eta * sum_t s_o[t] r_i[t].
    let mut new_weights = weights.to_vec();
    for ell in 0..n_layers {
        for o in 0..weights[ell].len() {
            let d = desires[ell][o];
            if d == 0 {
                continue;
            }
            for i in 0..weights[ell][o].len() {
                if !masks[ell][i] {
                    continue;
                }
                let mut acc = 0.0f32;
                for t in 0..steps {
                    if spikes[ell][t][o] {
                        acc += in_traces[ell][t][i];
                    }
                }
                new_weights[ell][o][i] += acc * (d as f32 * eta);
            }
        }
    }

    Reference {
        masks,
        spikes,
        output_errors,
        errors,
        desires,
        losses,
        weights: new_weights,
    }
}

/// A small random network, sample and hyperparameter set.
pub struct Case {
    pub weights: Vec<Vec<Vec<f32>>>,
    pub hp: Hyperparams,
    pub input: Vec<Vec<bool>>,
    pub target: usize,
    pub eta: f32,
    pub train: bool,
    pub seed: u64,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = rng.gen_range(1..=3);
    let widths: Vec<usize> = (0..=n_layers).map(|_| rng.gen_range(1..=8)).collect();
    let steps = rng.gen_range(1..=6);
    let weights = widths
        .windows(2)
        .map(|w| {
            (0..w[1])
                .map(|_| (0..w[0]).map(|_| rng.gen_range(-1.5f32..1.5)).collect())
                .collect()
        })
        .collect();
    let density = rng.gen_range(0.1..0.9);
    let input = (0..steps)
        .map(|_| (0..widths[0]).map(|_| rng.gen_bool(density)).collect())
        .collect();
    let hp = Hyperparams {
        beta_p: rng.gen_range(0.5f32..=1.0),
        beta_r: rng.gen_range(0.0f32..0.99),
        theta_p: rng.gen_range(0.3f32..1.5),
        theta_out: rng.gen_range(0.0f32..0.5),
        theta_hid: rng.gen_range(0.0f32..0.3),
        eta: 0.1,
        eta_decay: 0.04,
        p_drop_hidden: rng.gen_range(0.0f32..0.5),
        p_drop_input: rng.gen_range(0.0f32..0.3),
        time_steps: steps,
    };
    Case {
        weights,
        hp,
        input,
        target: rng.gen_range(0..widths[n_layers]),
        eta: rng.gen_range(0.01f32..0.5),
        train: rng.gen_bool(0.5),
        seed,
    }
}

pub fn build_network(weights: &[Vec<Vec<f32>>], hp: Hyperparams) -> Network {
    let layers = weights
        .iter()
        .map(|w| {
            let rows: Vec<f32> = w.iter().flatten().copied().collect();
            FcLayer::from_rows(w[0].len(), w.len(), &rows).unwrap()
        })
        .collect();
    Network::from_layers(layers, hp).unwrap()
}

pub fn raster(input: &[Vec<bool>]) -> SpikeRaster {
    let mut r = SpikeRaster::zeros(input.len(), input[0].len());
    for (t, row) in input.iter().enumerate() {
        for (i, &s) in row.iter().enumerate() {
            r.set(t, i, s);
        }
    }
    r
}

fn bits(v: &[f32]) -> Vec<u32> {
    v.iter().map(|x| x.to_bits()).collect()
}

/// Runs the production pipeline and the reference on the same case and
/// reports the first disagreement.
pub fn check_case(case: &Case) -> Result<(), String> {
    let mut net = build_network(&case.weights, case.hp);
    let input = raster(&case.input);
    let mut prod_rng = ChaCha8Rng::seed_from_u64(case.seed ^ 0x5eed);
    let mut ref_rng = ChaCha8Rng::seed_from_u64(case.seed ^ 0x5eed);
    let fwd = if case.train {
        net.forward(&input, &mut Mode::Train(&mut prod_rng))
    } else {
        net.forward(&input, &mut Mode::<ChaCha8Rng>::Eval)
    }
    .map_err(|e| e.to_string())?;
    let bwd = backward_pass(&net, &fwd, case.target).map_err(|e| e.to_string())?;
    apply_updates(
        &mut net,
        &fwd,
        &bwd,
        case.eta,
        &mut UpdateScratch::default(),
        0,
    )
    .map_err(|e| e.to_string())?;

    let reference = reference_step(
        &case.weights,
        &case.hp,
        &case.input,
        case.target,
        case.eta,
        case.train.then_some(&mut ref_rng),
    );

    let fail = |what: &str| Err(format!("seed {}: {what} differs", case.seed));
    for (ell, rec) in fwd.layers.iter().enumerate() {
        if rec.mask != reference.masks[ell] {
            return fail(&format!("layer {ell} mask"));
        }
        for (t, row) in reference.spikes[ell].iter().enumerate() {
            if rec.out_spikes.row(t) != &row[..] {
                return fail(&format!("layer {ell} spikes at t={t}"));
            }
        }
    }
    if bits(&bwd.output_errors) != bits(&reference.output_errors) {
        return fail("output error");
    }
    for ell in 0..reference.desires.len() {
        let d: Vec<i8> = bwd.desires[ell].iter().map(|d| d.value()).collect();
        if d != reference.desires[ell] {
            return fail(&format!("layer {ell} desires"));
        }
        if bits(&bwd.errors[ell]) != bits(&reference.errors[ell]) {
            return fail(&format!("layer {ell} local errors"));
        }
        if bwd.losses[ell].to_bits() != reference.losses[ell].to_bits() {
            return fail(&format!("layer {ell} loss"));
        }
        let rows = net.layers()[ell].to_rows();
        let expected: Vec<f32> = reference.weights[ell].iter().flatten().copied().collect();
        if bits(&rows) != bits(&expected) {
            return fail(&format!("layer {ell} updated weights"));
        }
    }
    Ok(())
}

/// Checks `n` consecutive seeds; returns how many cases changed weights.
pub fn run_oracle_suite(n: u64) -> Result<usize, String> {
    let mut changed = 0;
    for seed in 0..n {
        let case = random_case(seed);
        check_case(&case)?;
        let reference = reference_step(
            &case.weights,
            &case.hp,
            &case.input,
            case.target,
            case.eta,
            None,
        );
        if reference.weights != case.weights {
            changed += 1;
        }
    }
    Ok(changed)
}

/// Directory holding `mnist/` and `fashion/` IDX files.
pub fn data_root() -> PathBuf {
    if let Ok(dir) = std::env::var("DESIRE_DATA_DIR") {
        return PathBuf::from(dir);
    }
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}
