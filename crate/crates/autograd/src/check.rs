//! Central finite-difference gradient verification.
//!
//! The caller supplies named input tensors and a builder closure that
//! reconstructs the forward pass from scratch; `grad_check` runs one analytic
//! backward sweep, then re-evaluates the loss at `x[j] +- h` for every
//! element of every listed input. Inputs registered as detached take part in
//! the comparison with an analytic gradient of zero, which is exactly how a
//! broken (or missing) backward rule gets caught and named.

use crate::graph::{Graph, Var};
use crate::tensor::Tensor;
use crate::AutogradError;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Relative error floor: errors are measured against
/// `max(|analytic|, |numeric|, REL_FLOOR)` so exact zeros do not divide by
/// zero and FD round-off near zero is not amplified.
const REL_FLOOR: f64 = 1e-6;

/// One named input to the checked computation.
pub struct CheckedInput {
    pub name: String,
    pub tensor: Tensor,
    pub requires_grad: bool,
}

impl CheckedInput {
    pub fn new(name: impl Into<String>, tensor: Tensor) -> Self {
        Self { name: name.into(), tensor, requires_grad: true }
    }

    /// A leaf that participates in the forward pass but is declared
    /// gradient-free; useful as a negative control.
    pub fn detached(name: impl Into<String>, tensor: Tensor) -> Self {
        Self { name: name.into(), tensor, requires_grad: false }
    }
}

/// Worst-case comparison for one input.
#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Per-input results of one gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_err < self.tolerance)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_err).fold(0.0, f64::max)
    }

    /// Entries exceeding the tolerance, worst first.
    pub fn failures(&self) -> Vec<&GradCheckEntry> {
        let mut out: Vec<&GradCheckEntry> =
            self.entries.iter().filter(|e| e.max_rel_err >= self.tolerance).collect();
        out.sort_by(|a, b| b.max_rel_err.total_cmp(&a.max_rel_err));
        out
    }
}

/// Compares analytic gradients against central finite differences
/// (`h = FD_STEP`) for every element of every input. `build` must be a pure
/// function of the leaves it is handed.
pub fn grad_check<F>(
    inputs: &[CheckedInput],
    build: F,
    tolerance: f64,
) -> Result<GradCheckReport, AutogradError>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var, AutogradError>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> =
        inputs.iter().map(|ci| g.leaf(ci.tensor.clone(), ci.requires_grad)).collect();
    let loss = build(&mut g, &vars)?;
    g.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs.iter())
        .map(|(v, ci)| {
            g.grad(*v).map_or_else(|| vec![0.0; ci.tensor.numel()], |t| t.data().to_vec())
        })
        .collect();

    let eval = |k: usize, j: usize, delta: f64| -> Result<f64, AutogradError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs
            .iter()
            .enumerate()
            .map(|(idx, ci)| {
                let mut t = ci.tensor.clone();
                if idx == k {
                    t.data_mut()[j] += delta;
                }
                g.leaf(t, false)
            })
            .collect();
        let loss = build(&mut g, &vars)?;
        Ok(g.value(loss).data()[0])
    };

    let mut entries = Vec::with_capacity(inputs.len());
    for (k, ci) in inputs.iter().enumerate() {
        let mut worst = GradCheckEntry {
            name: ci.name.clone(),
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: analytic[k].first().copied().unwrap_or(0.0),
            numeric: 0.0,
        };
        for j in 0..ci.tensor.numel() {
            let plus = eval(k, j, FD_STEP)?;
            let minus = eval(k, j, -FD_STEP)?;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic[k][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if rel > worst.max_rel_err {
                worst = GradCheckEntry {
                    name: ci.name.clone(),
                    max_rel_err: rel,
                    worst_index: j,
                    analytic: a,
                    numeric,
                };
            }
        }
        entries.push(worst);
    }
    Ok(GradCheckReport { tolerance, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passes_a_simple_sum() {
        let report = grad_check(
            &[CheckedInput::new("x", Tensor::from_vec([1, 1, 1, 3], vec![1.0, -2.0, 0.5]).unwrap())],
            |g, vars| {
                let t = g.leaf(Tensor::zeros([1, 1, 1, 3]), false);
                g.l1_loss(vars[0], t)
            },
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "worst {:?}", report.failures().first());
    }

    #[test]
    fn detached_input_fails_and_is_named() {
        let report = grad_check(
            &[
                CheckedInput::new("a", Tensor::scalar(2.0)),
                CheckedInput::detached("b_detached", Tensor::scalar(3.0)),
            ],
            |g, vars| {
                let s = g.add(vars[0], vars[1])?;
                let t = g.leaf(Tensor::scalar(0.0), false);
                g.l1_loss(s, t)
            },
            1e-4,
        )
        .unwrap();
        assert!(!report.passed());
        let failures = report.failures();
        assert_eq!(failures.len(), 1);
        assert_eq!(failures[0].name, "b_detached");
    }
}
