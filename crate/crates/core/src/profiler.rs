//! Arithmetic operation counting.
//!
//! The kernels here compute exactly what the production code computes for a
//! single neuron (results are bit-identical), while reporting every
//! operation to an [`OpCounter`]. Counting convention:
//!
//! - `cond`: one per spike-bit test in the forward pass, one ternarization
//!   per neuron in the backward pass, one desire test per neuron in the
//!   update.
//! - `mul` / `add`: arithmetic on the learning path. Forward adds are the
//!   spike-gated weight accumulations; the single forward multiplication per
//!   step is the membrane decay, present only when `beta_p != 1`.
//! - `overhead`: bookkeeping that the operation table does not list: the
//!   membrane combine, threshold compare and soft reset, trace maintenance,
//!   dropout mask tests and scaling, rate normalization, sign selection, and
//!   the eligibility sum `sum_t s_o[t] r_i[t]` gated by output spikes.
//!
//! Update multiplications are reported both per synapse and per neuron.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::desire::{hidden_error, ternarize, TernaryDesire};
use crate::error::{Error, Result};
use crate::snn::{lif_step, trace_step, Hyperparams, SpikeRaster};

pub trait OpCounter {
    fn mul(&mut self, n: u64);
    fn add(&mut self, n: u64);
    fn cond(&mut self, n: u64);
    fn overhead(&mut self, n: u64);
}

/// Counting disabled.
impl OpCounter for () {
    #[inline]
    fn mul(&mut self, _: u64) {}
    #[inline]
    fn add(&mut self, _: u64) {}
    #[inline]
    fn cond(&mut self, _: u64) {}
    #[inline]
    fn overhead(&mut self, _: u64) {}
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounts {
    pub mul: u64,
    pub add: u64,
    pub cond: u64,
    pub overhead: u64,
}

impl OpCounter for OpCounts {
    fn mul(&mut self, n: u64) {
        self.mul += n;
    }
    fn add(&mut self, n: u64) {
        self.add += n;
    }
    fn cond(&mut self, n: u64) {
        self.cond += n;
    }
    fn overhead(&mut self, n: u64) {
        self.overhead += n;
    }
}

impl std::ops::AddAssign for OpCounts {
    fn add_assign(&mut self, o: Self) {
        self.mul += o.mul;
        self.add += o.add;
        self.cond += o.cond;
        self.overhead += o.overhead;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Backward,
    Update,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Forward => "forward",
            Phase::Backward => "backward",
            Phase::Update => "update",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronForward {
    pub spikes: Vec<bool>,
    /// Post-reset potential after each step.
    pub potentials: Vec<f32>,
    /// Output trace after each step.
    pub traces: Vec<f32>,
}

/// One neuron over `T` steps. `weights[i]` is `w_oi`; `mask` and `scale`
/// are the layer's dropout mask and survivor scale.
pub fn forward_neuron<C: OpCounter>(
    weights: &[f32],
    input: &SpikeRaster,
    mask: &[bool],
    scale: f32,
    hp: &Hyperparams,
    ops: &mut C,
) -> NeuronForward {
    let steps = input.steps();
    let mut out = NeuronForward {
        spikes: Vec::with_capacity(steps),
        potentials: Vec::with_capacity(steps),
        traces: Vec::with_capacity(steps),
    };
    let (mut p, mut r) = (0.0f32, 0.0f32);
    for t in 0..steps {
        let mut current = 0.0f32;
        for ((&spike, &keep), &w) in input.row(t).iter().zip(mask).zip(weights) {
            ops.cond(1);
            if spike {
                ops.overhead(1);
                if keep {
                    current += w;
                    ops.add(1);
                }
            }
        }
        if hp.beta_p != 1.0 {
            ops.mul(1);
        }
        ops.overhead(if scale != 1.0 { 3 } else { 2 });
        let (next, s) = lif_step(p, scale * current, hp.beta_p, hp.theta_p);
        if s {
            ops.overhead(1);
        }
        p = next;
        r = trace_step(r, s, hp.beta_r);
        ops.overhead(2);
        out.spikes.push(s);
        out.potentials.push(p);
        out.traces.push(r);
    }
    out
}

/// Desire of one neuron `g` from the `O` neurons it feeds. `fan_out[h]` is
/// `w_hg`; counts and desires belong to the downstream neurons.
pub fn backward_neuron<C: OpCounter>(
    fan_out: &[f32],
    next_counts: &[u32],
    next_desires: &[TernaryDesire],
    time_steps: usize,
    theta_hid: f32,
    ops: &mut C,
) -> (TernaryDesire, f32) {
    let mut grad = 0.0f32;
    for ((&w, &c), &d) in fan_out.iter().zip(next_counts).zip(next_desires) {
        ops.overhead(2);
        let e = hidden_error(c, d, time_steps);
        if d.is_active() {
            ops.add(1);
        }
        grad += w * e;
        ops.mul(1);
        ops.add(1);
    }
    ops.overhead(1);
    ops.cond(1);
    (ternarize(-grad, theta_hid), grad)
}

/// Weight changes `dw_o.` of one neuron. `in_traces` is `T x I` row-major,
/// as recorded by the forward pass.
pub fn update_neuron<C: OpCounter>(
    desire: TernaryDesire,
    eta: f32,
    out_spikes: &[bool],
    in_traces: &[f32],
    mask: &[bool],
    ops: &mut C,
) -> Vec<f32> {
    let n_in = mask.len();
    let mut acc = vec![0.0f32; n_in];
    ops.cond(1);
    if !desire.is_active() {
        return acc;
    }
    for (t, &s) in out_spikes.iter().enumerate() {
        ops.overhead(1);
        if !s {
            continue;
        }
        let row = &in_traces[t * n_in..(t + 1) * n_in];
        for ((a, &r), &keep) in acc.iter_mut().zip(row).zip(mask) {
            ops.overhead(1);
            if keep && r != 0.0 {
                *a += r;
                ops.overhead(1);
            }
        }
    }
    let signed_eta = desire.as_f32() * eta;
    ops.overhead(1);
    for a in &mut acc {
        *a *= signed_eta;
        ops.mul(1);
    }
    acc
}

/// Reference artificial-neuron kernels for comparison: dense
/// multiply-accumulate forward, delta-rule backward and update.
pub fn ann_forward_neuron<C: OpCounter>(weights: &[f32], x: &[f32], ops: &mut C) -> f32 {
    let mut z = 0.0f32;
    for (&w, &xi) in weights.iter().zip(x) {
        z += w * xi;
        ops.mul(1);
        ops.add(1);
    }
    ops.overhead(1);
    z.max(0.0)
}

/// `delta_g = sum_h w_hg * (err_h * f'_h)`.
pub fn ann_backward_neuron<C: OpCounter>(
    fan_out: &[f32],
    next_err: &[f32],
    next_slope: &[f32],
    ops: &mut C,
) -> f32 {
    let mut delta = 0.0f32;
    for ((&w, &e), &f) in fan_out.iter().zip(next_err).zip(next_slope) {
        delta += w * (e * f);
        ops.mul(2);
        ops.add(1);
    }
    delta
}

/// `dw_i = -eta * delta * x_i`, per synapse.
pub fn ann_update_synapse<C: OpCounter>(eta: f32, delta: f32, x: f32, ops: &mut C) -> f32 {
    ops.mul(2);
    -eta * delta * x
}

/// Inputs for one profiled neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSpec {
    pub n_in: usize,
    pub n_out: usize,
    pub time_steps: usize,
    /// Fraction of input spike bits set, in `[0, 1]`.
    pub density: f64,
    pub beta_p: f32,
    /// Desire used by the update phase.
    pub desire: TernaryDesire,
}

impl ProfileSpec {
    pub fn new(n_in: usize, n_out: usize, time_steps: usize, density: f64) -> Self {
        ProfileSpec {
            n_in,
            n_out,
            time_steps,
            density,
            beta_p: 0.9,
            desire: TernaryDesire::Increase,
        }
    }

    fn hyperparams(&self) -> Hyperparams {
        Hyperparams {
            beta_p: self.beta_p,
            beta_r: crate::snn::default_beta_r(self.time_steps.max(2)),
            time_steps: self.time_steps,
            ..Hyperparams::mnist()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_in == 0 || self.n_out == 0 || self.time_steps == 0 {
            return Err(Error::Config("profile sizes must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::Config(format!(
                "density {} outside [0, 1]",
                self.density
            )));
        }
        Ok(())
    }
}

/// A `steps x width` raster with exactly `round(density * steps * width)`
/// set bits, spread evenly.
pub fn density_raster(steps: usize, width: usize, density: f64) -> SpikeRaster {
    let total = steps * width;
    let n = (density * total as f64).round() as usize;
    let mut raster = SpikeRaster::zeros(steps, width);
    for j in 0..total {
        if (j + 1) * n / total > j * n / total {
            raster.set(j / width, j % width, true);
        }
    }
    raster
}

fn profile_weights(n: usize, salt: usize) -> Vec<f32> {
    (0..n)
        .map(|k| ((k * 7 + salt * 3) % 11) as f32 * 0.02 - 0.1)
        .collect()
}

fn traces_of(raster: &SpikeRaster, beta_r: f32) -> Vec<f32> {
    let mut r = vec![0.0f32; raster.width()];
    let mut out = Vec::with_capacity(raster.steps() * raster.width());
    for t in 0..raster.steps() {
        for (ri, &s) in r.iter_mut().zip(raster.row(t)) {
            *ri = trace_step(*ri, s, beta_r);
        }
        out.extend_from_slice(&r);
    }
    out
}

/// Counts for one neuron with `n_in` inputs feeding `n_out` downstream
/// neurons. Inputs are deterministic; the backward phase gives every
/// downstream neuron a non-zero desire, and the update phase lets the
/// neuron spike with the same density as its inputs.
pub fn profile_neuron(phase: Phase, spec: &ProfileSpec) -> Result<OpCounts> {
    spec.validate()?;
    let hp = spec.hyperparams();
    let mut ops = OpCounts::default();
    match phase {
        Phase::Forward => {
            let input = density_raster(spec.time_steps, spec.n_in, spec.density);
            let mask = vec![true; spec.n_in];
            forward_neuron(
                &profile_weights(spec.n_in, 0),
                &input,
                &mask,
                1.0,
                &hp,
                &mut ops,
            );
        }
        Phase::Backward => {
            let counts: Vec<u32> = (0..spec.n_out)
                .map(|h| (h % (spec.time_steps + 1)) as u32)
                .collect();
            let desires: Vec<TernaryDesire> = (0..spec.n_out)
                .map(|h| {
                    if h % 2 == 0 {
                        TernaryDesire::Increase
                    } else {
                        TernaryDesire::Decrease
                    }
                })
                .collect();
            backward_neuron(
                &profile_weights(spec.n_out, 1),
                &counts,
                &desires,
                spec.time_steps,
                hp.theta_hid,
                &mut ops,
            );
        }
        Phase::Update => {
            let input = density_raster(spec.time_steps, spec.n_in, spec.density);
            let traces = traces_of(&input, hp.beta_r);
            let out = density_raster(spec.time_steps, 1, spec.density);
            let spikes: Vec<bool> = (0..spec.time_steps).map(|t| out.get(t, 0)).collect();
            let mask = vec![true; spec.n_in];
            update_neuron(spec.desire, hp.eta, &spikes, &traces, &mask, &mut ops);
        }
    }
    Ok(ops)
}

/// Totals for a whole layer of `n_out` neurons, each run through the
/// instrumented kernel with its own weights.
fn profile_layer(
    phase: Phase,
    n_in: usize,
    n_out: usize,
    n_next: usize,
    t: usize,
    density: f64,
    beta_p: f32,
) -> OpCounts {
    let spec = ProfileSpec {
        beta_p,
        ..ProfileSpec::new(n_in, n_next.max(1), t, density)
    };
    let hp = spec.hyperparams();
    let mut total = OpCounts::default();
    match phase {
        Phase::Forward => {
            let input = density_raster(t, n_in, density);
            let mask = vec![true; n_in];
            for o in 0..n_out {
                forward_neuron(
                    &profile_weights(n_in, o),
                    &input,
                    &mask,
                    1.0,
                    &hp,
                    &mut total,
                );
            }
        }
        Phase::Backward => {
            for _ in 0..n_out {
                total += profile_neuron(Phase::Backward, &spec).expect("validated spec");
            }
        }
        Phase::Update => {
            let input = density_raster(t, n_in, density);
            let traces = traces_of(&input, hp.beta_r);
            let out = density_raster(t, n_out, density);
            let mask = vec![true; n_in];
            for o in 0..n_out {
                let spikes: Vec<bool> = (0..t).map(|k| out.get(k, o)).collect();
                update_neuron(spec.desire, hp.eta, &spikes, &traces, &mask, &mut total);
            }
        }
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub phase: String,
    pub metric: String,
    pub measured: f64,
    /// Expected value, or a description when the table lists no count.
    pub formula: String,
    pub pass: bool,
}

fn row(phase: Phase, metric: String, measured: f64, formula: f64, pass: bool) -> ReportRow {
    ReportRow {
        phase: phase.to_string(),
        metric,
        measured,
        formula: format!("{formula}"),
        pass,
    }
}

/// Measured counts for every layer of `arch` against the per-neuron table:
/// forward `1 / T*I / T*I`, backward `O / 2O / 1`, update `<=1 / - / 1`,
/// plus the dense ANN equivalents and whole-layer totals.
///
/// Exact equality is expected at density 1; below that, forward adds equal
/// `round(density * T * I)` and stay within the ceilings.
pub fn complexity_report(
    arch: &[usize],
    time_steps: usize,
    density: f64,
    beta_p: f32,
) -> Result<Vec<ReportRow>> {
    crate::network::validate_arch(arch)?;
    let t = time_steps as f64;
    let mut rows = Vec::new();
    let decay_mults = if beta_p != 1.0 { 1.0 } else { 0.0 };
    for ell in 1..arch.len() {
        let (n_in, n_out) = (arch[ell - 1], arch[ell]);
        let next = arch.get(ell + 1).copied();
        let i = n_in as f64;
        let spec = ProfileSpec {
            beta_p,
            ..ProfileSpec::new(n_in, next.unwrap_or(1), time_steps, density)
        };
        let l = format!("l{ell}");

        let fwd = profile_neuron(Phase::Forward, &spec)?;
        let expected_adds = (density * t * i).round();
        rows.push(row(
            Phase::Forward,
            format!("{l}.mult_per_step"),
            fwd.mul as f64 / t,
            decay_mults,
            fwd.mul as f64 / t == decay_mults,
        ));
        rows.push(row(
            Phase::Forward,
            format!("{l}.add"),
            fwd.add as f64,
            t * i,
            fwd.add as f64 == expected_adds && fwd.add as f64 <= t * i,
        ));
        rows.push(row(
            Phase::Forward,
            format!("{l}.cond"),
            fwd.cond as f64,
            t * i,
            fwd.cond as f64 == t * i,
        ));
        rows.push(row(
            Phase::Forward,
            format!("{l}.overhead"),
            fwd.overhead as f64,
            f64::NAN,
            true,
        ));
        let ann = ann_forward_counts(n_in);
        rows.push(row(
            Phase::Forward,
            format!("{l}.ann_mult"),
            ann.mul as f64,
            i,
            ann.mul as f64 == i,
        ));
        rows.push(row(
            Phase::Forward,
            format!("{l}.ann_add"),
            ann.add as f64,
            i,
            ann.add as f64 == i,
        ));

        if let Some(n_next) = next {
            let o = n_next as f64;
            let bwd = profile_neuron(Phase::Backward, &spec)?;
            rows.push(row(
                Phase::Backward,
                format!("{l}.mult"),
                bwd.mul as f64,
                o,
                bwd.mul as f64 == o,
            ));
            rows.push(row(
                Phase::Backward,
                format!("{l}.add"),
                bwd.add as f64,
                2.0 * o,
                bwd.add as f64 == 2.0 * o,
            ));
            rows.push(row(
                Phase::Backward,
                format!("{l}.cond"),
                bwd.cond as f64,
                1.0,
                bwd.cond == 1,
            ));
            let ann = ann_backward_counts(n_next);
            rows.push(row(
                Phase::Backward,
                format!("{l}.ann_mult"),
                ann.mul as f64,
                2.0 * o,
                ann.mul as f64 == 2.0 * o,
            ));
            rows.push(row(
                Phase::Backward,
                format!("{l}.ann_add"),
                ann.add as f64,
                o,
                ann.add as f64 == o,
            ));
        }

        let upd = profile_neuron(Phase::Update, &spec)?;
        let per_synapse = upd.mul as f64 / i;
        rows.push(row(
            Phase::Update,
            format!("{l}.mult"),
            per_synapse,
            1.0,
            per_synapse <= 1.0 && (density < 1.0 || per_synapse == 1.0),
        ));
        rows.push(row(
            Phase::Update,
            format!("{l}.mult_per_neuron"),
            upd.mul as f64,
            i,
            upd.mul as f64 <= i,
        ));
        rows.push(ReportRow {
            phase: Phase::Update.to_string(),
            metric: format!("{l}.add"),
            measured: upd.add as f64,
            formula: "-".into(),
            pass: true,
        });
        rows.push(row(
            Phase::Update,
            format!("{l}.cond"),
            upd.cond as f64,
            1.0,
            upd.cond == 1,
        ));
        let idle = profile_neuron(
            Phase::Update,
            &ProfileSpec {
                desire: TernaryDesire::Indifferent,
                ..spec.clone()
            },
        )?;
        rows.push(row(
            Phase::Update,
            format!("{l}.mult_zero_desire"),
            idle.mul as f64,
            0.0,
            idle.mul == 0,
        ));
        rows.push(row(
            Phase::Update,
            format!("{l}.cond_zero_desire"),
            idle.cond as f64,
            1.0,
            idle.cond == 1,
        ));
        let mut ann = OpCounts::default();
        ann_update_synapse(1e-3, 0.5, 0.25, &mut ann);
        rows.push(row(
            Phase::Update,
            format!("{l}.ann_mult"),
            ann.mul as f64,
            2.0,
            ann.mul == 2,
        ));

        // Whole-layer totals, for scaling comparisons.
        let n = n_out as f64;
        let total_fwd = profile_layer(Phase::Forward, n_in, n_out, 1, time_steps, density, beta_p);
        rows.push(row(
            Phase::Forward,
            format!("{l}.total_add"),
            total_fwd.add as f64,
            n * expected_adds,
            total_fwd.add as f64 == n * expected_adds,
        ));
        rows.push(row(
            Phase::Forward,
            format!("{l}.total_mult"),
            total_fwd.mul as f64,
            n * t * decay_mults,
            total_fwd.mul as f64 == n * t * decay_mults,
        ));
        if let Some(n_next) = next {
            let total_bwd = profile_layer(
                Phase::Backward,
                n_in,
                n_out,
                n_next,
                time_steps,
                density,
                beta_p,
            );
            rows.push(row(
                Phase::Backward,
                format!("{l}.total_mult"),
                total_bwd.mul as f64,
                n * n_next as f64,
                total_bwd.mul as f64 == n * n_next as f64,
            ));
        }
        let total_upd = profile_layer(Phase::Update, n_in, n_out, 1, time_steps, density, beta_p);
        rows.push(row(
            Phase::Update,
            format!("{l}.total_mult"),
            total_upd.mul as f64,
            n * i,
            total_upd.mul as f64 <= n * i,
        ));
    }
    Ok(rows)
}

fn ann_forward_counts(n_in: usize) -> OpCounts {
    let mut ops = OpCounts::default();
    ann_forward_neuron(&profile_weights(n_in, 2), &vec![0.5; n_in], &mut ops);
    ops
}

fn ann_backward_counts(n_next: usize) -> OpCounts {
    let mut ops = OpCounts::default();
    ann_backward_neuron(
        &profile_weights(n_next, 3),
        &vec![0.1; n_next],
        &vec![1.0; n_next],
        &mut ops,
    );
    ops
}

/// Writes the report as CSV (`phase,metric,measured,formula,pass`) preceded
/// by `#` comment lines describing the counting convention.
pub fn write_report(
    rows: &[ReportRow],
    arch: &[usize],
    time_steps: usize,
    density: f64,
    beta_p: f32,
    path: &Path,
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let header = format!(
        "# operation counts per neuron; arch {arch:?}, T = {time_steps}, spike density {density}, beta_p = {beta_p}\n\
         # forward: mult = membrane decays per step (0 when beta_p = 1), add = spike-gated weight sums, cond = spike-bit tests\n\
         # backward: per hidden neuron with O downstream neurons; cond = ternarization\n\
         # update: mult = per synapse (mult_per_neuron = per neuron), cond = desire test; eligibility sums count as overhead\n\
         # overhead: membrane combine, threshold, reset, traces, dropout, rate normalization\n\
         # total_*: summed over every neuron of the layer; ann_*: dense artificial neuron equivalent\n"
    );
    file.write_all(header.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    for r in rows {
        writer.serialize(r)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}
