//! Compute cost model: a shared per-table encoder, sum pooling over the
//! tables that run fused on one device, and a regression head.
//!
//! Sum pooling makes the prediction permutation-invariant and lets one
//! trained model handle any table count.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nncost::feature::{FeatureNorm, FEATURE_DIM};
use crate::nncost::mlp::{mlp_from_files, mlp_to_files, DenseFile, Mlp};
use crate::nncost::sha256_hex;
use crate::tables::TableConfig;

/// Width of the per-table representation produced by the encoder.
pub const EMBED_DIM: usize = 32;
/// Encoder stack: feature vector to representation.
pub const ENCODER_SHAPE: [usize; 3] = [FEATURE_DIM, 128, EMBED_DIM];
/// Head stack: pooled representation to one cost.
pub const HEAD_SHAPE: [usize; 3] = [EMBED_DIM, 64, 1];

/// Predicts the fused multi-table kernel cost for a set of tables.
#[derive(Debug, Clone)]
pub struct ComputeCostModel {
    pub norm: FeatureNorm,
    pub encoder: Mlp,
    pub head: Mlp,
    pub train_fingerprint: Option<String>,
}

impl ComputeCostModel {
    /// Freshly initialized (untrained) model, deterministic in the seed.
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComputeCostModel {
            norm: FeatureNorm::default(),
            encoder: Mlp::new(&ENCODER_SHAPE, true, &mut rng),
            head: Mlp::new(&HEAD_SHAPE, false, &mut rng),
            train_fingerprint: None,
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.head.param_count()
    }

    /// Per-table representation.
    pub fn embed(&self, t: &TableConfig) -> Vec<f64> {
        self.encoder.forward1(&self.norm.featurize(t))
    }

    /// Head applied to a pooled representation, clamped non-negative.
    pub fn predict_from_pooled(&self, pooled: &[f64]) -> f64 {
        self.head.forward1(pooled)[0].max(0.0)
    }

    /// Predicted fused cost of a table set. Tables are pooled in a canonical
    /// order so any permutation of the same set gives a bit-identical result.
    pub fn predict(&self, tables: &[TableConfig]) -> Result<f64> {
        if tables.is_empty() {
            return Err(Error::InvalidArgument(
                "predict needs at least one table".into(),
            ));
        }
        let mut order: Vec<&TableConfig> = tables.iter().collect();
        order.sort_by(|a, b| canonical_key(a).cmp(&canonical_key(b)));
        let mut pooled = vec![0.0; EMBED_DIM];
        for t in order {
            for (acc, v) in pooled.iter_mut().zip(self.embed(t)) {
                *acc += v;
            }
        }
        Ok(self.predict_from_pooled(&pooled))
    }

    pub fn fingerprint(&self) -> String {
        sha256_hex(serde_json::to_string(&ComputeModelFile::from(self)).unwrap().as_bytes())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(
            path,
            serde_json::to_string_pretty(&ComputeModelFile::from(self))?,
        )?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ComputeModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        file.try_into()
    }
}

fn canonical_key(t: &TableConfig) -> (&str, u32, u64, u64, u64) {
    (
        t.id.as_str(),
        t.dim,
        t.hash_size,
        t.pooling_factor.to_bits(),
        t.skew.to_bits(),
    )
}

// ── On-disk form ────────────────────────────────────────────────────────────

#[derive(Serialize, Deserialize)]
struct ComputeModelFile {
    kind: String,
    norm: FeatureNorm,
    encoder: Vec<DenseFile>,
    head: Vec<DenseFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    train_fingerprint: Option<String>,
}

impl From<&ComputeCostModel> for ComputeModelFile {
    fn from(m: &ComputeCostModel) -> Self {
        ComputeModelFile {
            kind: "compute".into(),
            norm: m.norm.clone(),
            encoder: mlp_to_files(&m.encoder),
            head: mlp_to_files(&m.head),
            train_fingerprint: m.train_fingerprint.clone(),
        }
    }
}

impl TryFrom<ComputeModelFile> for ComputeCostModel {
    type Error = Error;

    fn try_from(f: ComputeModelFile) -> Result<Self> {
        if f.kind != "compute" {
            return Err(Error::InvalidArgument(format!(
                "expected a compute model file, found kind {:?}",
                f.kind
            )));
        }
        let encoder = mlp_from_files(f.encoder)?;
        let head = mlp_from_files(f.head)?;
        if encoder.in_dim() != FEATURE_DIM || head.in_dim() != encoder.out_dim() {
            return Err(Error::InvalidArgument(
                "compute model layer widths are inconsistent".into(),
            ));
        }
        Ok(ComputeCostModel {
            norm: f.norm,
            encoder,
            head,
            train_fingerprint: f.train_fingerprint,
        })
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::gen_pool;

    #[test]
    fn test_param_count_is_pinned() {
        // 5*128+128 + 128*32+32 = 4896 encoder, 32*64+64 + 64*1+1 = 2177 head
        let m = ComputeCostModel::new(0);
        assert_eq!(m.encoder.param_count(), 4896);
        assert_eq!(m.head.param_count(), 2177);
        assert_eq!(m.param_count(), 7073);
    }

    #[test]
    fn test_prediction_is_permutation_invariant_bitwise() {
        let m = ComputeCostModel::new(1);
        let pool = gen_pool(8, 2);
        let mut tables = pool.tables.clone();
        let base = m.predict(&tables).unwrap();
        tables.reverse();
        assert_eq!(m.predict(&tables).unwrap(), base);
        tables.swap(0, 3);
        tables.swap(2, 5);
        assert_eq!(m.predict(&tables).unwrap(), base);
    }

    #[test]
    fn test_zero_weights_predict_zero() {
        let mut m = ComputeCostModel::new(3);
        m.encoder.zero_params();
        m.head.zero_params();
        let pool = gen_pool(5, 4);
        assert_eq!(m.predict(&pool.tables).unwrap(), 0.0);
    }

    #[test]
    fn test_prediction_clamped_non_negative() {
        let mut m = ComputeCostModel::new(5);
        // force a strongly negative raw output through the head bias
        let last = m.head.layers.last_mut().unwrap();
        last.b.fill(-1e6);
        let pool = gen_pool(4, 6);
        assert_eq!(m.predict(&pool.tables).unwrap(), 0.0);
    }

    #[test]
    fn test_empty_set_rejected() {
        let m = ComputeCostModel::new(7);
        assert!(m.predict(&[]).is_err());
    }

    #[test]
    fn test_save_load_round_trip_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("compute.json");
        let m = ComputeCostModel::new(8);
        m.save(&path).unwrap();
        let back = ComputeCostModel::load(&path).unwrap();
        assert_eq!(back.encoder.params_flat(), m.encoder.params_flat());
        assert_eq!(back.head.params_flat(), m.head.params_flat());
        let pool = gen_pool(6, 9);
        assert_eq!(
            back.predict(&pool.tables).unwrap(),
            m.predict(&pool.tables).unwrap()
        );
        assert_eq!(back.fingerprint(), m.fingerprint());
    }

    #[test]
    fn test_fingerprint_tracks_weights() {
        let a = ComputeCostModel::new(10);
        let mut b = ComputeCostModel::new(10);
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.head.layers[0].b[0] += 1e-9;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
