//! Training diagnostics and their CSV/SVG export.
//!
//! CSV schemas (header row included):
//!
//! | file               | columns                                  |
//! |--------------------|------------------------------------------|
//! | `accuracy.csv`     | `epoch,accuracy`                         |
//! | `local_loss.csv`   | `epoch,layer,mean_loss`                  |
//! | `activity.csv`     | `epoch,layer,neuron,class,mean_rate`     |
//! | `contribution.csv` | `sample_index,neuron,contribution`       |
//!
//! Layers are numbered from 1 (first hidden layer) to L (output layer).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::FcLayer;
use crate::snn::SpikeRaster;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub epoch: u32,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: u32,
    pub layer: u32,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityRow {
    pub epoch: u32,
    pub layer: u32,
    pub neuron: u32,
    pub class: u32,
    pub mean_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionRow {
    pub sample_index: u32,
    pub neuron: u32,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsRecord {
    pub accuracy: Vec<AccuracyRow>,
    pub local_loss: Vec<LossRow>,
    pub activity: Vec<ActivityRow>,
    pub contribution: Vec<ContributionRow>,
}

const ACCURACY_CSV: &str = "accuracy.csv";
const LOSS_CSV: &str = "local_loss.csv";
const ACTIVITY_CSV: &str = "activity.csv";
const CONTRIBUTION_CSV: &str = "contribution.csv";

impl MetricsRecord {
    /// Mean loss of `layer` (1-based) at `epoch`, if recorded.
    pub fn loss(&self, epoch: u32, layer: u32) -> Option<f64> {
        self.local_loss
            .iter()
            .find(|r| r.epoch == epoch && r.layer == layer)
            .map(|r| r.mean_loss)
    }

    /// Writes the CSV files. Activity and contribution files are only
    /// written when they hold data.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_rows(&dir.join(ACCURACY_CSV), &self.accuracy)?;
        write_rows(&dir.join(LOSS_CSV), &self.local_loss)?;
        if !self.activity.is_empty() {
            write_rows(&dir.join(ACTIVITY_CSV), &self.activity)?;
        }
        if !self.contribution.is_empty() {
            write_rows(&dir.join(CONTRIBUTION_CSV), &self.contribution)?;
        }
        Ok(())
    }

    /// Reads back whatever CSV files exist in `dir`.
    pub fn read_csv(dir: &Path) -> Result<Self> {
        Ok(MetricsRecord {
            accuracy: read_rows(&dir.join(ACCURACY_CSV), true)?,
            local_loss: read_rows(&dir.join(LOSS_CSV), true)?,
            activity: read_rows(&dir.join(ACTIVITY_CSV), false)?,
            contribution: read_rows(&dir.join(CONTRIBUTION_CSV), false)?,
        })
    }

    /// Renders `accuracy_loss.svg`, plus activity and contribution heatmaps
    /// when that data is present.
    pub fn write_svg(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))
        };
        write("accuracy_loss.svg", svg::accuracy_and_loss(self))?;
        if let Some(body) = svg::activity(self) {
            write("activity.svg", body)?;
        }
        if let Some(body) = svg::contribution(self) {
            write("contribution.svg", body)?;
        }
        Ok(())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    if rows.is_empty() {
        // Header only; serde cannot infer it without a row.
        let header = match path.file_name().and_then(|n| n.to_str()) {
            Some(ACCURACY_CSV) => &["epoch", "accuracy"][..],
            Some(LOSS_CSV) => &["epoch", "layer", "mean_loss"][..],
            Some(ACTIVITY_CSV) => &["epoch", "layer", "neuron", "class", "mean_rate"][..],
            _ => &["sample_index", "neuron", "contribution"][..],
        };
        writer.write_record(header)?;
    }
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path, required: bool) -> Result<Vec<T>> {
    if !path.exists() && !required {
        return Ok(Vec::new());
    }
    let mut reader = csv::Reader::from_path(path)?;
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// How much each network input helps satisfy the desires of the first hidden
/// layer: `-(spike rate of i) * sum_h w_hi * e_h`. Positive values mean the
/// input's activity pushes the hidden layer toward its desired rates; silent
/// inputs score exactly zero.
pub fn contribution_metric(
    first_layer: &FcLayer,
    input: &SpikeRaster,
    hidden_errors: &[f32],
) -> Result<Vec<f32>> {
    if input.width() != first_layer.n_in() {
        return Err(Error::Dimension {
            context: "contribution input width",
            expected: first_layer.n_in(),
            actual: input.width(),
        });
    }
    if hidden_errors.len() != first_layer.n_out() {
        return Err(Error::Dimension {
            context: "contribution hidden errors",
            expected: first_layer.n_out(),
            actual: hidden_errors.len(),
        });
    }
    let t = input.steps() as f32;
    Ok(input
        .counts()
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            if count == 0 {
                return 0.0;
            }
            let grad = first_layer
                .fan_out(i)
                .iter()
                .zip(hidden_errors)
                .fold(0.0f32, |acc, (&w, &e)| acc + w * e);
            -(count as f32 / t) * grad
        })
        .collect())
}

mod svg {
    use super::*;

    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 50.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
    ];

    fn header(w: f64, h: f64) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
             viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
             <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        )
    }

    fn polyline(points: &[(f64, f64)], x_max: f64, y_max: f64, color: &str) -> String {
        let x_max = x_max.max(1.0);
        let y_max = if y_max > 0.0 { y_max } else { 1.0 };
        let coords: Vec<String> = points
            .iter()
            .map(|&(x, y)| {
                let px = PAD + (x / x_max) * (W - 2.0 * PAD);
                let py = H - PAD - (y / y_max) * (H - 2.0 * PAD);
                format!("{px:.1},{py:.1}")
            })
            .collect();
        format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            coords.join(" ")
        )
    }

    /// Local losses per layer (normalized to each layer's maximum) and
    /// accuracy (gray) against epochs.
    pub fn accuracy_and_loss(m: &MetricsRecord) -> String {
        let mut s = header(W, H);
        let epochs = m.accuracy.iter().map(|r| r.epoch).max().unwrap_or(1) as f64;
        let _ = write!(
            s,
            "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
             <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{0}\" stroke=\"black\"/>\n\
             <text x=\"{2}\" y=\"{3}\" text-anchor=\"middle\">epoch</text>\n",
            H - PAD,
            W - PAD,
            W / 2.0,
            H - 15.0
        );
        let acc: Vec<(f64, f64)> = m
            .accuracy
            .iter()
            .map(|r| (r.epoch as f64, r.accuracy))
            .collect();
        s.push_str(&polyline(&acc, epochs, 1.0, "#888888"));
        let mut layers: Vec<u32> = m.local_loss.iter().map(|r| r.layer).collect();
        layers.sort_unstable();
        layers.dedup();
        for (k, &layer) in layers.iter().enumerate() {
            let pts: Vec<(f64, f64)> = m
                .local_loss
                .iter()
                .filter(|r| r.layer == layer)
                .map(|r| (r.epoch as f64, r.mean_loss))
                .collect();
            let y_max = pts.iter().map(|p| p.1).fold(0.0, f64::max);
            let color = COLORS[k % COLORS.len()];
            s.push_str(&polyline(&pts, epochs, y_max, color));
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" fill=\"{color}\">layer {layer} loss (max {y_max:.4})</text>",
                W - PAD - 170.0,
                PAD + 15.0 * k as f64
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" fill=\"#888888\">accuracy</text>",
            W - PAD - 170.0,
            PAD + 15.0 * layers.len() as f64
        );
        s.push_str("</svg>\n");
        s
    }

    fn blue_red(v: f64, scale: f64) -> String {
        let x = if scale > 0.0 {
            (v / scale).clamp(-1.0, 1.0)
        } else {
            0.0
        };
        let fade = |c: f64| (255.0 * (1.0 - c.abs())).round() as u8;
        if x >= 0.0 {
            format!("rgb({},{},255)", fade(x), fade(x))
        } else {
            format!("rgb(255,{},{})", fade(x), fade(x))
        }
    }

    /// Class x neuron heatmap of the last recorded epoch, one band per layer.
    pub fn activity(m: &MetricsRecord) -> Option<String> {
        let epoch = m.activity.iter().map(|r| r.epoch).max()?;
        let rows: Vec<&ActivityRow> = m.activity.iter().filter(|r| r.epoch == epoch).collect();
        let mut layers: Vec<(u32, u32)> = Vec::new();
        for r in &rows {
            match layers.iter_mut().find(|(l, _)| *l == r.layer) {
                Some(entry) => entry.1 = entry.1.max(r.neuron + 1),
                None => layers.push((r.layer, r.neuron + 1)),
            }
        }
        layers.sort_unstable();
        let classes = rows.iter().map(|r| r.class).max()? + 1;
        let cell = 4.0;
        let width = PAD + classes as f64 * 12.0 + PAD;
        let total: u32 = layers.iter().map(|l| l.1).sum();
        let height = PAD + total as f64 * cell + 10.0 * layers.len() as f64 + PAD;
        let mut s = header(width, height);
        let mut y0 = PAD;
        for &(layer, neurons) in &layers {
            let _ = writeln!(s, "<text x=\"5\" y=\"{}\">L{layer}</text>", y0 + 10.0);
            for r in rows.iter().filter(|r| r.layer == layer) {
                let _ = writeln!(
                    s,
                    "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"{cell}\" fill=\"{}\"/>",
                    PAD + r.class as f64 * 12.0,
                    y0 + r.neuron as f64 * cell,
                    blue_red(r.mean_rate, 1.0)
                );
            }
            y0 += neurons as f64 * cell + 10.0;
        }
        s.push_str("</svg>\n");
        Some(s)
    }

    /// Neuron x sample heatmap, samples averaged into at most 100 columns.
    pub fn contribution(m: &MetricsRecord) -> Option<String> {
        let samples = m.contribution.iter().map(|r| r.sample_index).max()? as usize + 1;
        let neurons = m.contribution.iter().map(|r| r.neuron).max()? as usize + 1;
        let bins = samples.min(100);
        let mut sum = vec![0.0f64; bins * neurons];
        let mut n = vec![0u32; bins * neurons];
        for r in &m.contribution {
            let b = r.sample_index as usize * bins / samples;
            sum[r.neuron as usize * bins + b] += r.contribution;
            n[r.neuron as usize * bins + b] += 1;
        }
        let mean: Vec<f64> = sum
            .iter()
            .zip(&n)
            .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
            .collect();
        let scale = mean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let (cw, ch) = (4.0, 1.0);
        let mut s = header(
            2.0 * PAD + bins as f64 * cw,
            2.0 * PAD + neurons as f64 * ch,
        );
        for (k, &v) in mean.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let _ = writeln!(
                s,
                "<rect x=\"{}\" y=\"{}\" width=\"{cw}\" height=\"{ch}\" fill=\"{}\"/>",
                PAD + (k % bins) as f64 * cw,
                PAD + (k / bins) as f64 * ch,
                blue_red(v, scale)
            );
        }
        s.push_str("</svg>\n");
        Some(s)
    }
}
