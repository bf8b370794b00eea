//! Communication cost model: one plain MLP per all-to-all direction.
//!
//! Input is the concatenation of the per-device start times and the
//! per-device dimension sums, in that order, both normalized; output is one
//! cost per device. The device count is baked into the network shape.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncost::mlp::{mlp_from_files, mlp_to_files, DenseFile, Mlp};
use crate::nncost::sha256_hex;
use crate::oracle::CommDirection;

/// Hidden widths between the `2D` input and the `D` output.
pub const COMM_HIDDEN: [usize; 4] = [128, 64, 32, 16];

/// Normalization constants for the comm model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommNorm {
    pub start_ms: f64,
    pub dims: f64,
}

impl Default for CommNorm {
    fn default() -> Self {
        Self {
            start_ms: 20.0,
            dims: 1024.0,
        }
    }
}

/// Predicts per-device all-to-all cost for one direction.
#[derive(Debug, Clone)]
pub struct CommCostModel {
    pub direction: CommDirection,
    pub devices: usize,
    pub norm: CommNorm,
    pub net: Mlp,
    pub train_fingerprint: Option<String>,
}

impl CommCostModel {
    pub fn new(direction: CommDirection, devices: usize, seed: u64) -> Self {
        assert!(devices >= 1);
        let mut shape = vec![2 * devices];
        shape.extend_from_slice(&COMM_HIDDEN);
        shape.push(devices);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CommCostModel {
            direction,
            devices,
            norm: CommNorm::default(),
            net: Mlp::new(&shape, false, &mut rng),
            train_fingerprint: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    /// Normalized network input: starts then dimension sums.
    pub fn input_vector(&self, starts: &[f64], device_dims: &[f64]) -> Result<Vec<f64>> {
        if starts.len() != self.devices || device_dims.len() != self.devices {
            return Err(Error::InvalidArgument(format!(
                "comm model is for {} devices, got {} starts and {} dims",
                self.devices,
                starts.len(),
                device_dims.len()
            )));
        }
        let mut x = Vec::with_capacity(2 * self.devices);
        x.extend(starts.iter().map(|s| s / self.norm.start_ms));
        x.extend(device_dims.iter().map(|d| d / self.norm.dims));
        Ok(x)
    }

    /// Predicted per-device cost, each clamped non-negative.
    pub fn predict(&self, starts: &[f64], device_dims: &[f64]) -> Result<Vec<f64>> {
        let x = self.input_vector(starts, device_dims)?;
        Ok(self.net.forward1(&x).into_iter().map(|v| v.max(0.0)).collect())
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(&CommModelFile::from(self)).unwrap().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&CommModelFile::from(self))?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: CommModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.try_into()
    }
}

// ── On-disk form ────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct CommModelFile {
    kind: String,
    direction: CommDirection,
    devices: usize,
    norm: CommNorm,
    layers: Vec<DenseFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_fingerprint: Option<String>,
}

impl From<&CommCostModel> for CommModelFile {
    fn from(m: &CommCostModel) -> Self {
        CommModelFile {
            kind: "comm".into(),
            direction: m.direction,
            devices: m.devices,
            norm: m.norm.clone(),
            layers: mlp_to_files(&m.net),
            train_fingerprint: m.train_fingerprint.clone(),
        }
    }
}

impl TryFrom<CommModelFile> for CommCostModel {
    type Error = Error;

    fn try_from(f: CommModelFile) -> Result<Self> {
        if f.kind != "comm" {
            return Err(Error::InvalidArgument(format!(
                "expected a comm model file, found kind {:?}",
                f.kind
            )));
        }
        let net = mlp_from_files(f.layers)?;
        if net.in_dim() != 2 * f.devices || net.out_dim() != f.devices {
            return Err(Error::InvalidArgument(
                "comm model layer widths do not match the device count".into(),
            ));
        }
        Ok(CommCostModel {
            direction: f.direction,
            devices: f.devices,
            norm: f.norm,
            net,
            train_fingerprint: f.train_fingerprint,
        })
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────
