//! Savitzky-Golay smoothing of metric columns.

use crate::error::{Error, Result};

/// Least-squares polynomial of degree `order` fitted over a sliding window of
/// `window` points and evaluated at each point. Interior points use the
/// centred window; the first and last `window/2` points are evaluated on the
/// polynomial of the first or last full window. Series shorter than the
/// window are returned unchanged.
pub fn savitzky_golay(values: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    if window % 2 == 0 || window < 3 {
        return Err(Error::Config(format!("smoothing window must be odd and >= 3, got {window}")));
    }
    if order >= window {
        return Err(Error::Config(format!("polynomial order {order} needs a window larger than {window}")));
    }
    let n = values.len();
    if n < window {
        return Ok(values.to_vec());
    }
    let half = window / 2;
    Ok((0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - window);
            let centre = (start + half) as f64;
            let xs: Vec<f64> = (start..start + window).map(|j| j as f64 - centre).collect();
            let coef = poly_fit(&xs, &values[start..start + window], order);
            let x = i as f64 - centre;
            coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
        })
        .collect())
}

/// Coefficients `c_0..c_order` of the least-squares fit, by normal equations
/// with partial pivoting (the abscissae are small centred integers).
fn poly_fit(xs: &[f64], ys: &[f64], order: usize) -> Vec<f64> {
    let m = order + 1;
    let mut a = vec![vec![0.0; m + 1]; m];
    for (&x, &y) in xs.iter().zip(ys) {
        let powers: Vec<f64> = (0..2 * m).map(|p| x.powi(p as i32)).collect();
        for r in 0..m {
            for c in 0..m {
                a[r][c] += powers[r + c];
            }
            a[r][m] += powers[r] * y;
        }
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        for r in 0..m {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=m {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..m).map(|r| a[r][m] / a[r][r]).collect()
}
