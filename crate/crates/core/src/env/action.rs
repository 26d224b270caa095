use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Offloaded fraction choices.
pub const BETA_LEVELS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Target {
    Local,
    /// Index into the candidate list (nearest first).
    Slot(usize),
}

/// Composite decision: where to run, how much to offload, whether to cache
/// and whether to pay for a fresh DT prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MdpAction {
    pub target: Target,
    /// Index into [`BETA_LEVELS`]. Always 0 for local execution.
    pub beta_level: usize,
    pub cache: bool,
    pub dt_adjust: bool,
}

impl MdpAction {
    pub const LOCAL: MdpAction = MdpAction {
        target: Target::Local,
        beta_level: 0,
        cache: false,
        dt_adjust: false,
    };

    /// (K + 1) targets × 5 levels × cache × dt.
    pub fn space_size(candidates: usize) -> usize {
        (candidates + 1) * BETA_LEVELS.len() * 4
    }

    pub fn beta(&self) -> f64 {
        match self.target {
            Target::Local => 0.0,
            Target::Slot(_) => BETA_LEVELS[self.beta_level],
        }
    }

    pub fn encode(&self, candidates: usize) -> Result<usize> {
        let t = match self.target {
            Target::Local => 0,
            Target::Slot(k) if k < candidates => k + 1,
            Target::Slot(k) => {
                return Err(Error::Shape(format!("slot {k} with {candidates} candidates")))
            }
        };
        if self.beta_level >= BETA_LEVELS.len() {
            return Err(Error::Shape(format!("beta level {}", self.beta_level)));
        }
        let level = if t == 0 { 0 } else { self.beta_level };
        Ok(((t * BETA_LEVELS.len() + level) * 2 + self.cache as usize) * 2 + self.dt_adjust as usize)
    }

    /// Inverse of [`MdpAction::encode`]; the level is forced to 0 for local.
    pub fn decode(index: usize, candidates: usize) -> Result<Self> {
        if index >= Self::space_size(candidates) {
            return Err(Error::Shape(format!(
                "action {index} outside space of {}",
                Self::space_size(candidates)
            )));
        }
        let dt_adjust = index % 2 == 1;
        let cache = (index / 2) % 2 == 1;
        let rest = index / 4;
        let level = rest % BETA_LEVELS.len();
        let t = rest / BETA_LEVELS.len();
        let (target, beta_level) = if t == 0 {
            (Target::Local, 0)
        } else {
            (Target::Slot(t - 1), level)
        };
        Ok(Self {
            target,
            beta_level,
            cache,
            dt_adjust,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_size_for_five_candidates() {
        assert_eq!(MdpAction::space_size(5), 120);
    }

    #[test]
    fn decode_encode_roundtrip() {
        for k in [1usize, 3, 5] {
            for i in 0..MdpAction::space_size(k) {
                let a = MdpAction::decode(i, k).unwrap();
                let j = a.encode(k).unwrap();
                assert_eq!(MdpAction::decode(j, k).unwrap(), a);
                if a.target != Target::Local {
                    assert_eq!(i, j);
                }
                if a.target == Target::Local {
                    assert_eq!(a.beta(), 0.0);
                }
            }
        }
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(MdpAction::decode(120, 5).is_err());
        let bad = MdpAction {
            target: Target::Slot(5),
            ..MdpAction::LOCAL
        };
        assert!(bad.encode(5).is_err());
    }

    #[test]
    fn local_index_zero() {
        assert_eq!(MdpAction::decode(0, 5).unwrap(), MdpAction::LOCAL);
    }
}
