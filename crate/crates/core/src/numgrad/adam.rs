use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ParameterSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamHyper {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            learning_rate: 3e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction. Moments are kept congruent with the
/// parameters they update.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub first_moment: ParameterSet,
    pub second_moment: ParameterSet,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &ParameterSet, hyper: AdamHyper) -> Self {
        Self {
            step_count: 0,
            first_moment: params.zeros_like(),
            second_moment: params.zeros_like(),
            hyper,
        }
    }

    /// One in-place update of `params` along `grads`. Nothing is modified if
    /// the gradients are incongruent or non-finite.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        if !grads.is_congruent(params) || !self.first_moment.is_congruent(params) {
            return Err(Error::Shape("Adam gradients are not congruent with the parameters".into()));
        }
        if let Some((name, _)) = grads.iter().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient for `{name}`")));
        }
        let AdamHyper {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.hyper;
        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let moments = self.first_moment.iter_mut().zip(self.second_moment.iter_mut());
        for (((_, p), (_, g)), ((_, m), (_, v))) in params.iter_mut().zip(grads.iter()).zip(moments) {
            let p = p.data_mut();
            let m = m.data_mut();
            let v = v.data_mut();
            for (k, &gk) in g.data().iter().enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}
