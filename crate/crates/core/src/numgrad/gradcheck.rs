//! Central finite-difference checks of reverse-mode gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::ParameterSet;
use super::tape::{ParamVars, Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub step: f64,
    pub relative: f64,
    /// Entries whose absolute error is below this pass regardless of the
    /// relative error.
    pub absolute: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            step: 1e-5,
            relative: 1e-4,
            absolute: 1e-6,
        }
    }
}

/// Outcome of comparing every gradient entry of one parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    pub entries: usize,
    pub failures: usize,
    pub max_abs_error: f64,
    /// Largest relative error among entries above the absolute floor.
    pub max_rel_error: f64,
    /// `(parameter, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Compares the reverse-mode gradient of `f` with central differences.
///
/// `f` records its computation on the tape and returns the node to
/// differentiate together with the scalar that finite differences perturb.
/// Usually the two agree; a surrogate node whose gradient equals that of a
/// separately computed value is also accepted.
pub fn check_gradients<F>(params: &ParameterSet, tol: Tolerance, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<(Var, f64)>,
{
    let mut tape = Tape::new();
    let vars = tape.bind(params, true);
    let (node, _) = f(&mut tape, &vars)?;
    if tape.value(node).len() != 1 {
        return Err(Error::Contract("gradient check needs a scalar output".into()));
    }
    let analytic = vars.collect(&tape, &tape.backward_scalar(node));

    let eval = |p: &ParameterSet| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = tape.bind(p, false);
        Ok(f(&mut tape, &vars)?.1)
    };

    let mut report = GradReport {
        entries: 0,
        failures: 0,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        worst: None,
    };
    let mut worst_score = f64::NEG_INFINITY;
    let mut probe = params.clone();
    for (name, grad) in analytic.iter() {
        for i in 0..grad.len() {
            let original = params.get(name).expect("same names").data()[i];
            let mut at = |x: f64| -> Result<f64> {
                probe.get_mut(name).expect("same names").data_mut()[i] = x;
                eval(&probe)
            };
            let up = at(original + tol.step)?;
            let down = at(original - tol.step)?;
            at(original)?;
            let numeric = (up - down) / (2.0 * tol.step);
            let a = grad.data()[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(f64::MIN_POSITIVE);
            report.entries += 1;
            report.max_abs_error = report.max_abs_error.max(abs);
            let ok = abs <= tol.absolute || rel <= tol.relative;
            if abs > tol.absolute {
                report.max_rel_error = report.max_rel_error.max(rel);
            }
            if !ok || !abs.is_finite() {
                report.failures += 1;
            }
            let score = if abs > tol.absolute { rel } else { abs / tol.absolute * tol.relative };
            if score > worst_score {
                worst_score = score;
                report.worst = Some((name.to_string(), i, a, numeric));
            }
        }
    }
    Ok(report)
}

/// Shorthand for a scalar node that is its own value.
pub fn scalar(tape: &Tape, v: Var) -> (Var, f64) {
    (v, tape.value(v).item())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numgrad::Tensor;

    #[test]
    fn cube_passes_and_a_wrong_gradient_fails() {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::row(&[0.7, -1.3])).unwrap();
        let cube = |t: &mut Tape, v: &ParamVars| {
            let w = v.get("w");
            let sq = t.square(w);
            let c = t.mul(sq, w);
            let s = t.sum(c);
            Ok(scalar(t, s))
        };
        let r = check_gradients(&p, Tolerance::default(), cube).unwrap();
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.entries, 2);

        // The detached factor hides part of the derivative.
        let wrong = |t: &mut Tape, v: &ParamVars| {
            let w = v.get("w");
            let d = t.detach(w);
            let sq = t.mul(w, d);
            let s = t.sum(sq);
            Ok(scalar(t, s))
        };
        assert!(!check_gradients(&p, Tolerance::default(), wrong).unwrap().passed());
    }
}
