use super::{Array, Graph, Var};
use crate::{Error, Result};

/// Outcome of comparing tape gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Flat index of the worst coordinate.
    pub worst_index: usize,
    pub analytic: Array<f64>,
    pub numeric: Array<f64>,
}

/// `|a - n| / max(|a|, |n|, 1e-12)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

/// Central differences of a scalar function, one coordinate at a time.
pub fn numeric_gradient(
    f: impl Fn(&Array<f64>) -> Result<f64>,
    point: &Array<f64>,
    eps: f64,
) -> Result<Array<f64>> {
    let mut probe = point.clone();
    let mut out = Array::zeros(point.rows(), point.cols());
    for i in 0..point.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = orig - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "f at coordinate {i} +/- {eps}: {plus} / {minus}"
            )));
        }
        out.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(out)
}

/// Checks the tape gradient of `build` at `point`.
///
/// `build` receives a fresh graph and the leaf holding the point, and must
/// return a `1 x 1` node. The numeric side re-runs only the forward pass.
pub fn finite_diff_check<F>(build: F, point: &Array<f64>, eps: f64) -> Result<GradCheck>
where
    F: Fn(&mut Graph<f64>, Var) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::Invalid(format!("eps {eps} outside [1e-7, 1e-3]")));
    }
    let mut g = Graph::new();
    let x = g.param(point.clone());
    let y = build(&mut g, x)?;
    let y0 = g.value(y).data()[0];
    if !y0.is_finite() {
        return Err(Error::NonFinite(format!("f(point) = {y0}")));
    }
    let analytic = g.backward(y)?.get(x)?;

    let eval = |p: &Array<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let x = g.constant(p.clone());
        let y = build(&mut g, x)?;
        Ok(g.value(y).data()[0])
    };
    let numeric = numeric_gradient(eval, point, eps)?;

    let (worst_index, max_relative_error) = analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| relative_error(a, n))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });
    Ok(GradCheck {
        max_relative_error,
        worst_index,
        analytic,
        numeric,
    })
}
