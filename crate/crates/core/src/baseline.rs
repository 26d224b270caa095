//! The benchmark arm: same environment and learner, but the agent never
//! sees twin-derived features and cannot buy predictions.

use serde::{Deserialize, Serialize};

use crate::env::{dt_feature_indices, Environment, MdpAction, MdpState, MecEnv, StepOutcome};
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineMask {
    pub indices: Vec<usize>,
}

impl BaselineMask {
    pub fn new(candidates: usize) -> Self {
        Self {
            indices: dt_feature_indices(candidates),
        }
    }

    /// Zero-fills the masked entries; length is unchanged.
    pub fn apply<T: Scalar>(&self, state: &mut MdpState<T>) {
        for &i in &self.indices {
            if let Some(v) = state.features.get_mut(i) {
                *v = T::zero();
            }
        }
    }

    pub fn remap(&self, action: MdpAction) -> MdpAction {
        MdpAction {
            dt_adjust: false,
            ..action
        }
    }
}

/// [`MecEnv`] seen through a [`BaselineMask`].
#[derive(Debug, Clone)]
pub struct Benchmark<T> {
    inner: MecEnv<T>,
    mask: BaselineMask,
}

pub fn wrap_benchmark<T: Scalar>(env: MecEnv<T>) -> Benchmark<T> {
    let mask = BaselineMask::new(env.candidates());
    Benchmark { inner: env, mask }
}

impl<T: Scalar> Benchmark<T> {
    pub fn inner(&self) -> &MecEnv<T> {
        &self.inner
    }

    pub fn inner_mut(&mut self) -> &mut MecEnv<T> {
        &mut self.inner
    }

    pub fn mask(&self) -> &BaselineMask {
        &self.mask
    }

    pub fn step_action(&mut self, action: MdpAction) -> Result<StepOutcome<T>> {
        let mut out = self.inner.step_action(self.mask.remap(action))?;
        self.mask.apply(&mut out.next_state);
        Ok(out)
    }
}

impl<T: Scalar> Environment<T> for Benchmark<T> {
    fn state_dim(&self) -> usize {
        self.inner.state_dim()
    }

    fn action_count(&self) -> usize {
        self.inner.action_count()
    }

    fn reset(&mut self, seed: u64) -> Result<MdpState<T>> {
        let mut s = self.inner.reset(seed)?;
        self.mask.apply(&mut s);
        Ok(s)
    }

    fn step(&mut self, action: usize) -> Result<StepOutcome<T>> {
        let a = MdpAction::decode(action, self.inner.candidates())?;
        self.step_action(a)
    }
}
