//! Table featurization for the compute cost model.

use serde::{Deserialize, Serialize};

use crate::tables::TableConfig;

/// Input width of the compute model.
pub const FEATURE_DIM: usize = 5;

/// Normalization constants, stored alongside trained weights so a model file
/// is self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureNorm {
    pub dim: f64,
    pub log10_hash: f64,
    pub pooling: f64,
    pub skew: f64,
    pub size_gb_bytes: f64,
}

impl Default for FeatureNorm {
    fn default() -> Self {
        Self {
            dim: 128.0,
            log10_hash: 8.0,
            pooling: 50.0,
            skew: 2.0,
            size_gb_bytes: 1e9,
        }
    }
}

impl FeatureNorm {
    /// `[dim/128, log10(hash)/8, pooling/50, skew/2, size_gb]`.
    pub fn featurize(&self, t: &TableConfig) -> [f64; FEATURE_DIM] {
        [
            t.dim as f64 / self.dim,
            (t.hash_size as f64).log10() / self.log10_hash,
            t.pooling_factor / self.pooling,
            t.skew / self.skew,
            t.size_bytes() as f64 / self.size_gb_bytes,
        ]
    }
}

/// Featurize with the default constants (the ones data generators use).
pub fn featurize(t: &TableConfig) -> [f64; FEATURE_DIM] {
    FeatureNorm::default().featurize(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_featurize_reference_values() {
        let t = TableConfig::new("t", 128, 100_000_000, 25.0, 1.0);
        let f = featurize(&t);
        assert_eq!(f[0], 1.0);
        assert_eq!(f[1], 1.0); // log10(1e8) / 8
        assert_eq!(f[2], 0.5);
        assert_eq!(f[3], 0.5);
        // 1e8 rows * 128 * 4 bytes = 51.2e9 bytes = 51.2 GB
        assert!((f[4] - 51.2).abs() < 1e-9);
    }

    #[test]
    fn test_featurize_is_finite_over_generated_pools() {
        let pool = crate::tables::gen_pool(200, 3);
        for t in &pool.tables {
            for v in featurize(t) {
                assert!(v.is_finite() && v >= 0.0);
            }
        }
    }
}
