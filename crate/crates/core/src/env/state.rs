use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Per-user features at the front of the vector.
pub const USER_FEATURES: usize = 12;
/// Features per candidate server.
pub const SERVER_FEATURES: usize = 5;

pub mod idx {
    pub const DATA: usize = 0;
    pub const DT_DATA: usize = 1;
    pub const CYCLES: usize = 2;
    pub const DT_CYCLES: usize = 3;
    pub const LATENCY: usize = 4;
    pub const DT_LATENCY: usize = 5;
    pub const MIGRATION: usize = 6;
    pub const DT_MIGRATION: usize = 7;
    pub const USER_FREQ: usize = 8;
    pub const USER_DEV: usize = 9;
    pub const OFFLOADED: usize = 10;
    pub const SPEED: usize = 11;

    // offsets inside a server block
    pub const S_DISTANCE: usize = 0;
    pub const S_FREQ: usize = 1;
    pub const S_DEV: usize = 2;
    pub const S_CACHED: usize = 3;
    pub const S_SPECTRAL: usize = 4;
}

pub fn state_len(candidates: usize) -> usize {
    USER_FEATURES + SERVER_FEATURES * candidates
}

/// Start of the block for candidate slot `k`.
pub fn server_base(k: usize) -> usize {
    USER_FEATURES + SERVER_FEATURES * k
}

/// Indices that carry twin-derived information.
pub fn dt_feature_indices(candidates: usize) -> Vec<usize> {
    let mut v = vec![idx::DT_DATA, idx::DT_CYCLES, idx::DT_LATENCY, idx::DT_MIGRATION, idx::USER_DEV];
    v.extend((0..candidates).map(|k| server_base(k) + idx::S_DEV));
    v
}

/// Normalized observation of one user. Every entry lies in [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpState<T> {
    pub features: Vec<T>,
}

impl<T: Scalar> MdpState<T> {
    pub fn zeros(candidates: usize) -> Self {
        Self {
            features: vec![T::zero(); state_len(candidates)],
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Stores `v` clamped to [−1, 1]; NaN becomes 0.
    pub fn set(&mut self, i: usize, v: T) {
        self.features[i] = if v.is_nan() {
            T::zero()
        } else {
            v.max(-T::one()).min(T::one())
        };
    }

    pub fn as_slice(&self) -> &[T] {
        &self.features
    }
}
