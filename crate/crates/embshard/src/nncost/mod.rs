//! Neural cost models: a permutation-invariant fused-kernel compute model
//! and per-direction all-to-all comm models, with from-scratch MLPs, Adam
//! training, and finite-difference gradient checks.
//!
//! Inference always goes through fixed-order scalar arithmetic
//! (`Mlp::forward1`), so a saved model produces bit-identical predictions
//! across runs; the batched ndarray paths are reserved for training.

pub mod comm;
pub mod compute;
pub mod feature;
pub mod mlp;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use comm::{CommCostModel, CommNorm, COMM_HIDDEN};
pub use compute::{ComputeCostModel, EMBED_DIM, ENCODER_SHAPE, HEAD_SHAPE};
pub use feature::{featurize, FeatureNorm, FEATURE_DIM};
pub use mlp::{Adam, Dense, Mlp};
pub use train::{
    gradient_check_compute, gradient_check_comm, test_indices, train_comm, train_compute,
    TrainConfig, TrainMetrics, GRAD_CHECK_H, MIN_TRAIN_SAMPLES,
};

use crate::error::{Error, Result};
use crate::oracle::CommDirection;

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Content hashes of the three models behind a plan or report, for
/// provenance checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFingerprints {
    pub compute: String,
    pub comm_fwd: String,
    pub comm_bwd: String,
}

/// The three cost models the planner consumes, loaded and saved as a unit.
#[derive(Debug, Clone)]
pub struct CostModelBundle {
    pub compute: ComputeCostModel,
    pub comm_fwd: CommCostModel,
    pub comm_bwd: CommCostModel,
}

pub const COMPUTE_MODEL_FILE: &str = "compute.json";
pub const COMM_FWD_MODEL_FILE: &str = "comm_fwd.json";
pub const COMM_BWD_MODEL_FILE: &str = "comm_bwd.json";

impl CostModelBundle {
    /// Freshly initialized, untrained models for a `devices`-device cluster.
    pub fn new_random(devices: usize, seed: u64) -> Self {
        Self {
            compute: ComputeCostModel::new(seed),
            comm_fwd: CommCostModel::new(CommDirection::Forward, devices, seed.wrapping_add(1)),
            comm_bwd: CommCostModel::new(CommDirection::Backward, devices, seed.wrapping_add(2)),
        }
    }

    pub fn devices(&self) -> usize {
        self.comm_fwd.devices
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.compute.save(&dir.join(COMPUTE_MODEL_FILE))?;
        self.comm_fwd.save(&dir.join(COMM_FWD_MODEL_FILE))?;
        self.comm_bwd.save(&dir.join(COMM_BWD_MODEL_FILE))?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let bundle = Self {
            compute: ComputeCostModel::load(&dir.join(COMPUTE_MODEL_FILE))?,
            comm_fwd: CommCostModel::load(&dir.join(COMM_FWD_MODEL_FILE))?,
            comm_bwd: CommCostModel::load(&dir.join(COMM_BWD_MODEL_FILE))?,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.comm_fwd.direction != CommDirection::Forward
            || self.comm_bwd.direction != CommDirection::Backward
        {
            return Err(Error::InvalidArgument(
                "comm models loaded with swapped directions".into(),
            ));
        }
        if self.comm_fwd.devices != self.comm_bwd.devices {
            return Err(Error::InvalidArgument(format!(
                "comm models disagree on device count: {} vs {}",
                self.comm_fwd.devices, self.comm_bwd.devices
            )));
        }
        Ok(())
    }

    pub fn fingerprints(&self) -> ModelFingerprints {
        ModelFingerprints {
            compute: self.compute.fingerprint(),
            comm_fwd: self.comm_fwd.fingerprint(),
            comm_bwd: self.comm_bwd.fingerprint(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_sha256_hex_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn test_bundle_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = CostModelBundle::new_random(4, 11);
        bundle.save_dir(dir.path()).unwrap();
        let loaded = CostModelBundle::load_dir(dir.path()).unwrap();
        assert_eq!(bundle.fingerprints(), loaded.fingerprints());
        assert_eq!(loaded.devices(), 4);
    }

    #[test]
    fn test_bundle_rejects_swapped_directions() {
        let dir = tempfile::tempdir().unwrap();
        let bundle = CostModelBundle::new_random(2, 3);
        bundle
            .comm_bwd
            .save(&dir.path().join(COMM_FWD_MODEL_FILE))
            .unwrap();
        bundle
            .comm_fwd
            .save(&dir.path().join(COMM_BWD_MODEL_FILE))
            .unwrap();
        bundle
            .compute
            .save(&dir.path().join(COMPUTE_MODEL_FILE))
            .unwrap();
        assert!(CostModelBundle::load_dir(dir.path()).is_err());
    }
}
