use crate::error::{Error, Result};
use crate::numgrad::Prng;

use super::policy::MatchPolicy;
use super::target::GaussianMixture;

const MIN_BANDWIDTH: f64 = 1e-3;

/// Fraction of `samples` closest to each mixture mean.
pub fn mode_mass_of(samples: &[Vec<f64>], target: &GaussianMixture) -> Vec<f64> {
    let mut counts = vec![0.0; target.num_modes()];
    for s in samples {
        counts[target.nearest_mode(s)] += 1.0;
    }
    let n = samples.len().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}

pub fn mode_mass(policy: &MatchPolicy, target: &GaussianMixture, n_samples: usize, rng: &mut Prng) -> Result<Vec<f64>> {
    Ok(mode_mass_of(&policy.sample(n_samples, rng)?, target))
}

/// Scott's rule per axis: `n^(−1/(d+4))·std`, floored at `1e-3`.
pub fn scott_bandwidth(samples: &[Vec<f64>]) -> Result<Vec<f64>> {
    if samples.len() < 2 {
        return Err(Error::Config("density estimation needs at least two samples".into()));
    }
    let d = samples[0].len();
    let n = samples.len() as f64;
    let factor = n.powf(-1.0 / (d as f64 + 4.0));
    Ok((0..d)
        .map(|j| {
            let mean = samples.iter().map(|s| s[j]).sum::<f64>() / n;
            let var = samples.iter().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (factor * var.sqrt()).max(MIN_BANDWIDTH)
        })
        .collect())
}

/// Product Gaussian kernel density at each grid point.
pub fn kde_density_with(samples: &[Vec<f64>], grid: &[Vec<f64>], bandwidth: &[f64]) -> Vec<f64> {
    let norm: f64 = bandwidth
        .iter()
        .map(|h| h * (2.0 * std::f64::consts::PI).sqrt())
        .product::<f64>()
        * samples.len() as f64;
    grid.iter()
        .map(|g| {
            samples
                .iter()
                .map(|s| {
                    let e: f64 = s.iter().zip(g).zip(bandwidth).map(|((x, y), h)| ((x - y) / h).powi(2)).sum();
                    (-0.5 * e).exp()
                })
                .sum::<f64>()
                / norm
        })
        .collect()
}

pub fn kde_density(samples: &[Vec<f64>], grid: &[Vec<f64>]) -> Result<Vec<f64>> {
    let h = scott_bandwidth(samples)?;
    Ok(kde_density_with(samples, grid, &h))
}

/// Row-major square grid `(x, y)` with `n` points per axis over `[lo, hi]²`.
pub fn square_grid(lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    let axis = linspace(lo, hi, n);
    axis.iter().flat_map(|&x| axis.iter().map(move |&y| vec![x, y])).collect()
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Trapezoid integral of row-major values on the grid built by [`square_grid`].
pub fn trapezoid_2d(values: &[f64], lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / (n - 1) as f64;
    let w = |i: usize| if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            total += w(i) * w(j) * values[i * n + j];
        }
    }
    total * h * h
}
