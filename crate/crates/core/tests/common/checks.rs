//! Invariant checks shared by the integration and acceptance suites.

use super::{build_network, random_case, raster};
use desire_core::desire::{apply_updates, backward_pass, output_error, UpdateScratch};
use desire_core::network::{eval_mode, Mode};
use desire_core::snn::Hyperparams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Eval passes carry no mask, use scale 1, and repeat exactly.
pub fn eval_is_mask_free_and_deterministic(seeds: u64) -> Result<(), String> {
    for seed in 0..seeds {
        let case = random_case(seed);
        let net = build_network(&case.weights, case.hp);
        let input = raster(&case.input);
        let a = net
            .forward(&input, &mut eval_mode())
            .map_err(|e| e.to_string())?;
        let b = net
            .forward(&input, &mut eval_mode())
            .map_err(|e| e.to_string())?;
        if a != b {
            return Err(format!("seed {seed}: eval passes differ"));
        }
        if a.layers
            .iter()
            .any(|l| l.scale != 1.0 || l.mask.iter().any(|&m| !m))
        {
            return Err(format!("seed {seed}: eval pass has a mask"));
        }
    }
    Ok(())
}

/// In train mode a dropped neuron keeps its outgoing weights and receives
/// no desire. Returns the number of dropped neurons inspected.
pub fn dropped_neurons_are_untouched(seeds: u64) -> Result<usize, String> {
    let mut inspected = 0;
    for seed in 0..seeds {
        let mut case = random_case(seed);
        case.hp.p_drop_hidden = 0.5;
        case.hp.p_drop_input = 0.4;
        let mut net = build_network(&case.weights, case.hp);
        let before = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fwd = net
            .forward(&raster(&case.input), &mut Mode::Train(&mut rng))
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
        for (ell, rec) in fwd.layers.iter().enumerate() {
            for (i, _) in rec.mask.iter().enumerate().filter(|(_, &keep)| !keep) {
                inspected += 1;
                let layer = &net.layers()[ell];
                for o in 0..layer.n_out() {
                    if layer.weight(o, i).to_bits() != before.layers()[ell].weight(o, i).to_bits() {
                        return Err(format!(
                            "seed {seed}: weight ({o},{i}) of dropped input changed"
                        ));
                    }
                }
                if ell > 0 && bwd.desires[ell - 1][i].is_active() {
                    return Err(format!("seed {seed}: dropped neuron {i} has a desire"));
                }
            }
        }
    }
    Ok(inspected)
}

/// Samples whose output errors all lie within theta_out leave every weight
/// bit-identical. Returns the number of samples checked.
pub fn equilibrium_is_a_no_op(seeds: u64) -> Result<usize, String> {
    let mut checked = 0;
    for seed in 0..seeds {
        let case = random_case(seed);
        let input = raster(&case.input);
        let probe = build_network(&case.weights, case.hp);
        let fwd = probe
            .forward(&input, &mut eval_mode())
            .map_err(|e| e.to_string())?;
        let errors = output_error(&fwd.output_counts(), case.target, case.hp.time_steps)
            .map_err(|e| e.to_string())?;
        let worst = errors.iter().fold(0.0f32, |m, e| m.max(e.abs()));
        let hp = Hyperparams {
            theta_out: worst,
            ..case.hp
        };
        let mut net = build_network(&case.weights, hp);
        let before = net.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fwd = net
            .forward(&input, &mut Mode::Train(&mut rng))
            .map_err(|e| e.to_string())?;
        // Dropout may change the outputs; only count samples still in equilibrium.
        let errors = output_error(&fwd.output_counts(), case.target, hp.time_steps)
            .map_err(|e| e.to_string())?;
        if errors.iter().any(|e| e.abs() > hp.theta_out) {
            continue;
        }
        let bwd = backward_pass(&net, &fwd, case.target).map_err(|e| e.to_string())?;
        if !bwd.is_equilibrium() {
            return Err(format!("seed {seed}: desires remain in equilibrium"));
        }
        apply_updates(
            &mut net,
            &fwd,
            &bwd,
            case.eta,
            &mut UpdateScratch::default(),
            0,
        )
        .map_err(|e| e.to_string())?;
        for (a, b) in net.layers().iter().zip(before.layers()) {
            let bits = |l: &desire_core::layer::FcLayer| -> Vec<u32> {
                l.storage().iter().map(|w| w.to_bits()).collect()
            };
            if bits(a) != bits(b) {
                return Err(format!("seed {seed}: weights changed in equilibrium"));
            }
        }
        checked += 1;
    }
    Ok(checked)
}
