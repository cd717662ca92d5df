//! Versioned binary checkpoints.
//!
//! Layout (all integers and reals little-endian, reals are IEEE-754 f32):
//!
//! ```text
//! magic        4 bytes  "DBPC"
//! version      u8       = 1
//! reserved     3 bytes  zero
//! epoch        u32      epochs completed
//! eta          f32      current learning rate
//! hyperparams  9 x f32  beta_p beta_r theta_p theta_out theta_hid eta eta_decay
//!                       p_drop_hidden p_drop_input
//! time_steps   u32
//! n_widths     u32
//! widths       n_widths x u32 (input width first)
//! weights      per layer, n_out x n_in f32, row-major w_oi
//! ```
//!
//! The file length must match the length implied by the header exactly.

use std::fs;
use std::path::Path;

use crate::error::{CheckpointError, Error, Result};
use crate::layer::FcLayer;
use crate::network::Network;
use crate::snn::Hyperparams;

pub const MAGIC: &[u8; 4] = b"DBPC";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 4 + 1 + 3 + 4 + 4 + 9 * 4 + 4 + 4;
const MAX_WIDTH: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Vec<usize>,
    pub hyperparams: Hyperparams,
    pub epoch: u32,
    pub eta: f32,
    /// One `n_out x n_in` row-major matrix per layer.
    pub weights: Vec<Vec<f32>>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, epoch: u32, eta: f32) -> Self {
        Checkpoint {
            arch: net.arch(),
            hyperparams: *net.hyperparams(),
            epoch,
            eta,
            weights: net.layers().iter().map(FcLayer::to_rows).collect(),
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        let layers = self
            .arch
            .windows(2)
            .zip(&self.weights)
            .map(|(w, rows)| FcLayer::from_rows(w[0], w[1], rows))
            .collect::<Result<Vec<_>>>()?;
        Network::from_layers(layers, self.hyperparams)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n_weights: usize = self.weights.iter().map(Vec::len).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.arch.len() + 4 * n_weights);
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&[0; 3]);
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.eta.to_le_bytes());
        let hp = &self.hyperparams;
        for v in [
            hp.beta_p,
            hp.beta_r,
            hp.theta_p,
            hp.theta_out,
            hp.theta_hid,
            hp.eta,
            hp.eta_decay,
            hp.p_drop_hidden,
            hp.p_drop_input,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(hp.time_steps as u32).to_le_bytes());
        out.extend_from_slice(&(self.arch.len() as u32).to_le_bytes());
        for &w in &self.arch {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for &w in self.weights.iter().flatten() {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 5 {
            return Err(CheckpointError::Length {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }
        if &bytes[..4] != MAGIC {
            return Err(CheckpointError::Magic);
        }
        if bytes[4] != VERSION {
            return Err(CheckpointError::Version {
                found: bytes[4],
                supported: VERSION,
            });
        }
        if bytes.len() < HEADER_LEN {
            return Err(CheckpointError::Length {
                expected: HEADER_LEN,
                found: bytes.len(),
            });
        }

        let mut cursor = Cursor { bytes, pos: 8 };
        let epoch = cursor.u32();
        let eta = cursor.f32();
        let mut hp = [0f32; 9];
        for v in &mut hp {
            *v = cursor.f32();
        }
        let time_steps = cursor.u32() as usize;
        let n_widths = cursor.u32() as usize;
        if !(2..=64).contains(&n_widths) {
            return Err(CheckpointError::Invalid(format!("{n_widths} layer widths")));
        }
        let widths_end = HEADER_LEN + 4 * n_widths;
        if bytes.len() < widths_end {
            return Err(CheckpointError::Length {
                expected: widths_end,
                found: bytes.len(),
            });
        }
        let arch: Vec<usize> = (0..n_widths).map(|_| cursor.u32() as usize).collect();
        if arch.iter().any(|&w| w == 0 || w > MAX_WIDTH) {
            return Err(CheckpointError::Invalid(format!("layer widths {arch:?}")));
        }
        let sizes: Vec<usize> = arch.windows(2).map(|w| w[0] * w[1]).collect();
        let expected = widths_end + 4 * sizes.iter().sum::<usize>();
        if bytes.len() != expected {
            return Err(CheckpointError::Length {
                expected,
                found: bytes.len(),
            });
        }
        let weights = sizes
            .iter()
            .map(|&n| (0..n).map(|_| cursor.f32()).collect())
            .collect();

        let hyperparams = Hyperparams {
            beta_p: hp[0],
            beta_r: hp[1],
            theta_p: hp[2],
            theta_out: hp[3],
            theta_hid: hp[4],
            eta: hp[5],
            eta_decay: hp[6],
            p_drop_hidden: hp[7],
            p_drop_input: hp[8],
            time_steps,
        };
        hyperparams
            .validate()
            .map_err(|e| CheckpointError::Invalid(e.to_string()))?;
        Ok(Checkpoint {
            arch,
            hyperparams,
            epoch,
            eta,
            weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take4(&mut self) -> [u8; 4] {
        let b = &self.bytes[self.pos..self.pos + 4];
        self.pos += 4;
        [b[0], b[1], b[2], b[3]]
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take4())
    }

    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take4())
    }
}
