use crate::error::{Error, Result};
use crate::numgrad::Prng;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
/// Grid points per axis for the tempered normalizer.
const QUADRATURE_POINTS: usize = 801;
/// Half-width of the quadrature box in tempered component deviations.
const QUADRATURE_REACH: f64 = 12.0;

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Mixture of diagonal Gaussians.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    stds: Vec<Vec<f64>>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, stds: Vec<Vec<f64>>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || stds.len() != k {
            return Err(Error::Config("mixture needs matching weights, means and stds".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().chain(&stds).any(|v| v.len() != d) {
            return Err(Error::Config("mixture components must share one positive dimension".into()));
        }
        if weights.iter().any(|&w| !(w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("mixture weights must be positive and sum to 1".into()));
        }
        if stds.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Config("mixture stds must be positive".into()));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(Error::Config("mixture means must be finite".into()));
        }
        Ok(Self { weights, means, stds })
    }

    /// Two equal-weight isotropic modes at `(−2, −2)` and `(2, 2)`, std 0.7.
    pub fn two_mode() -> Self {
        Self::symmetric_pair(2.0, 0.7)
    }

    /// Equal-weight 2-d modes at `±(offset, offset)` with isotropic `std`.
    pub fn symmetric_pair(offset: f64, std: f64) -> Self {
        Self {
            weights: vec![0.5, 0.5],
            means: vec![vec![-offset, -offset], vec![offset, offset]],
            stds: vec![vec![std, std]; 2],
        }
    }

    pub fn single(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        Self::new(vec![1.0], vec![mean], vec![std])
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn num_modes(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn stds(&self) -> &[Vec<f64>] {
        &self.stds
    }

    fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        self.means[k]
            .iter()
            .zip(&self.stds[k])
            .zip(x)
            .map(|((m, s), v)| {
                let z = (v - m) / s;
                -0.5 * z * z - s.ln() - HALF_LN_2PI
            })
            .sum()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = (0..self.num_modes())
            .map(|k| self.weights[k].ln() + self.component_log_density(k, x))
            .collect();
        log_sum_exp(&terms)
    }

    pub fn sample(&self, rng: &mut Prng) -> Vec<f64> {
        let k = rng.categorical(&self.weights);
        self.means[k]
            .iter()
            .zip(&self.stds[k])
            .map(|(m, s)| m + s * rng.normal())
            .collect()
    }

    /// Index of the closest mean.
    pub fn nearest_mode(&self, x: &[f64]) -> usize {
        let dist = |k: usize| -> f64 { self.means[k].iter().zip(x).map(|(m, v)| (m - v).powi(2)).sum() };
        (0..self.num_modes())
            .min_by(|&a, &b| dist(a).total_cmp(&dist(b)))
            .expect("non-empty")
    }
}

/// Target samples with self-normalized weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSamples {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// `1 / Σ w²`.
    pub ess: f64,
}

/// The density proportional to `p(x)^(1/α)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TemperedTarget {
    pub mixture: GaussianMixture,
    pub alpha: f64,
    log_z: Option<f64>,
}

impl TemperedTarget {
    /// The normalizer is computed by grid quadrature for 1-d and 2-d
    /// mixtures; in higher dimension it is only known at `α = 1`.
    pub fn new(mixture: GaussianMixture, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("temperature must be positive, got {alpha}")));
        }
        let log_z = match mixture.dim() {
            1 | 2 => Some(quadrature_log_z(&mixture, alpha)),
            _ if alpha == 1.0 => Some(0.0),
            _ => None,
        };
        Ok(Self { mixture, alpha, log_z })
    }

    pub fn dim(&self) -> usize {
        self.mixture.dim()
    }

    /// `log p(x) / α`.
    pub fn log_unnormalized(&self, x: &[f64]) -> f64 {
        self.mixture.log_density(x) / self.alpha
    }

    pub fn log_normalizer(&self) -> Option<f64> {
        self.log_z
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        let log_z = self
            .log_z
            .ok_or_else(|| Error::Config("tempered normalizer is unavailable above two dimensions".into()))?;
        Ok(self.log_unnormalized(x) - log_z)
    }

    /// Exact mixture draws at `α = 1`; otherwise mixture draws reweighted by
    /// `p^(1/α − 1)`.
    pub fn samples(&self, n: usize, rng: &mut Prng) -> WeightedSamples {
        let points: Vec<Vec<f64>> = (0..n).map(|_| self.mixture.sample(rng)).collect();
        if self.alpha == 1.0 {
            return WeightedSamples {
                points,
                weights: vec![1.0 / n as f64; n],
                ess: n as f64,
            };
        }
        let expo = 1.0 / self.alpha - 1.0;
        let logw: Vec<f64> = points.iter().map(|p| expo * self.mixture.log_density(p)).collect();
        let norm = log_sum_exp(&logw);
        let weights: Vec<f64> = logw.iter().map(|l| (l - norm).exp()).collect();
        let ess = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        WeightedSamples { points, weights, ess }
    }
}

/// Axis grid covering every tempered component.
pub(crate) fn quadrature_axes(mixture: &GaussianMixture, alpha: f64, points: usize) -> Vec<Vec<f64>> {
    (0..mixture.dim())
        .map(|j| {
            let reach = |k: usize| QUADRATURE_REACH * mixture.stds[k][j] * alpha.sqrt();
            let lo = (0..mixture.num_modes()).map(|k| mixture.means[k][j] - reach(k)).fold(f64::INFINITY, f64::min);
            let hi = (0..mixture.num_modes()).map(|k| mixture.means[k][j] + reach(k)).fold(f64::NEG_INFINITY, f64::max);
            let step = (hi - lo) / (points - 1) as f64;
            (0..points).map(|i| lo + i as f64 * step).collect()
        })
        .collect()
}

fn quadrature_log_z(mixture: &GaussianMixture, alpha: f64) -> f64 {
    let axes = quadrature_axes(mixture, alpha, QUADRATURE_POINTS);
    let cell: f64 = axes.iter().map(|a| (a[1] - a[0]).ln()).sum();
    let mut terms = Vec::new();
    match axes.len() {
        1 => {
            for &x in &axes[0] {
                terms.push(mixture.log_density(&[x]) / alpha);
            }
        }
        _ => {
            for &x in &axes[0] {
                for &y in &axes[1] {
                    terms.push(mixture.log_density(&[x, y]) / alpha);
                }
            }
        }
    }
    log_sum_exp(&terms) + cell
}
