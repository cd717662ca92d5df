mod common;

use common::{build_network, random_case, raster};
use desire_core::desire::{backward_pass, stdp_update};
use desire_core::network::Mode;
use desire_core::profiler::{
    backward_neuron, complexity_report, forward_neuron, update_neuron, OpCounts,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn instrumented_kernels_reproduce_production() {
    for seed in 0..300 {
        let case = random_case(seed);
        let net = build_network(&case.weights, case.hp);
        let input = raster(&case.input);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fwd = net.forward(&input, &mut Mode::Train(&mut rng)).unwrap();
        let bwd = backward_pass(&net, &fwd, case.target).unwrap();

        let mut layer_input = input.clone();
        for (ell, (layer, rec)) in net.layers().iter().zip(&fwd.layers).enumerate() {
            for o in 0..layer.n_out() {
                let row: Vec<f32> = (0..layer.n_in()).map(|i| layer.weight(o, i)).collect();
                let mut ops = OpCounts::default();
                let shadow =
                    forward_neuron(&row, &layer_input, &rec.mask, rec.scale, &case.hp, &mut ops);
                assert_eq!(
                    shadow.spikes,
                    rec.out_spikes.train(o).bits(),
                    "seed {seed} layer {ell}"
                );
                assert_eq!(
                    shadow.potentials.last().unwrap().to_bits(),
                    rec.potentials[o].to_bits()
                );
                assert_eq!(
                    shadow.traces.last().unwrap().to_bits(),
                    rec.out_traces[o].to_bits()
                );
            }

            let delta = stdp_update(layer, rec, &bwd.desires[ell], case.eta).unwrap();
            for o in 0..layer.n_out() {
                let spikes = rec.out_spikes.train(o);
                let dw = update_neuron(
                    bwd.desires[ell][o],
                    case.eta,
                    spikes.bits(),
                    &rec.in_traces,
                    &rec.mask,
                    &mut (),
                );
                for (i, d) in dw.iter().enumerate() {
                    assert_eq!(
                        d.to_bits(),
                        delta.get(o, i).to_bits(),
                        "seed {seed} update ({o},{i})"
                    );
                }
            }

            if ell > 0 {
                let counts = rec.out_counts();
                for g in 0..layer.n_in() {
                    if !rec.mask[g] {
                        continue;
                    }
                    let (d, _) = backward_neuron(
                        layer.fan_out(g),
                        &counts,
                        &bwd.desires[ell],
                        case.hp.time_steps,
                        case.hp.theta_hid,
                        &mut (),
                    );
                    assert_eq!(d, bwd.desires[ell - 1][g], "seed {seed} desire of {g}");
                }
            }
            layer_input = rec.out_spikes.clone();
        }
    }
}

fn metric(rows: &[desire_core::profiler::ReportRow], key: (&str, &str)) -> f64 {
    rows.iter()
        .find(|r| r.phase == key.0 && r.metric == key.1)
        .unwrap_or_else(|| panic!("{key:?}"))
        .measured
}

#[test]
fn doubling_width_doubles_layer_totals() {
    let small = complexity_report(&[64, 20, 10], 10, 0.4, 0.9).unwrap();
    let large = complexity_report(&[64, 40, 10], 10, 0.4, 0.9).unwrap();
    // Layer 1 doubles its neurons, layer 2 its inputs.
    for key in [
        ("forward", "l1.total_add"),
        ("forward", "l1.total_mult"),
        ("forward", "l2.total_add"),
        ("backward", "l1.total_mult"),
        ("update", "l1.total_mult"),
        ("update", "l2.total_mult"),
    ] {
        let (a, b) = (metric(&small, key), metric(&large, key));
        assert!(a > 0.0, "{key:?}");
        assert_eq!(b, 2.0 * a, "{key:?}");
    }
}

#[test]
fn counts_are_deterministic() {
    let a = complexity_report(&[30, 12, 5], 8, 0.6, 0.8).unwrap();
    let b = complexity_report(&[30, 12, 5], 8, 0.6, 0.8).unwrap();
    assert_eq!(a, b);
}
