use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalHead {
    pub logits: Vec<f64>,
}

impl CategoricalHead {
    pub fn new(logits: Vec<f64>) -> Self {
        assert!(!logits.is_empty(), "categorical head needs at least one logit");
        Self { logits }
    }

    pub fn uniform(k: usize) -> Self {
        Self::new(vec![0.0; k])
    }

    pub fn num_actions(&self) -> usize {
        self.logits.len()
    }

    pub fn log_probs(&self) -> Vec<f64> {
        let m = self.logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + self.logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        self.logits.iter().map(|l| l - lse).collect()
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs().into_iter().map(f64::exp).collect()
    }

    /// `−Σ p·ln p`, with `0·ln 0 = 0`.
    pub fn entropy(&self) -> f64 {
        self.log_probs()
            .into_iter()
            .map(|lp| {
                let p = lp.exp();
                if p > 0.0 {
                    -p * lp
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn argmax(&self) -> usize {
        self.logits
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &l)| if l > best.1 { (i, l) } else { best })
            .0
    }
}

pub fn categorical_entropy(head: &CategoricalHead) -> f64 {
    head.entropy()
}
