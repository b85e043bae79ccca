//! Central finite-difference checks against [`Graph::backward`].
//!
//! Only forward evaluations are used to form the numerical estimate, so the
//! check is independent of every backward rule it verifies.

use rand::seq::index::sample;
use rand::Rng;

use super::{Graph, Module, Var};
use crate::error::Result;

/// Relative-error floor: entries whose analytic and numeric values are both
/// below this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Label of the entry with the largest error.
    pub worst: String,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            checked: 0,
            max_rel_error: 0.0,
            worst: String::new(),
        }
    }

    fn observe(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let err = rel_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || self.worst.is_empty() {
            self.max_rel_error = self.max_rel_error.max(err);
            self.worst = format!("{} (analytic {analytic:.6e}, numeric {numeric:.6e})", label());
        }
    }
}

pub fn rel_error(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

/// Checks gradients of a scalar-valued `build` with respect to each input.
pub fn check_inputs(
    inputs: &[(Vec<usize>, Vec<f64>)],
    step: f64,
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    let eval = |data: &[Vec<f64>]| -> Result<f64> {
        let mut g = Graph::new();
        let vars = inputs
            .iter()
            .zip(data)
            .map(|((shape, _), d)| g.constant(shape, d.clone()))
            .collect::<Result<Vec<_>>>()?;
        let out = build(&mut g, &vars)?;
        Ok(g.scalar(out))
    };
    let mut g = Graph::new();
    let vars = inputs
        .iter()
        .map(|(shape, d)| g.input(shape, d.clone()))
        .collect::<Result<Vec<_>>>()?;
    let out = build(&mut g, &vars)?;
    let grads = g.backward(out)?;

    let mut data: Vec<Vec<f64>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    let mut report = GradCheckReport::new();
    for (i, v) in vars.iter().enumerate() {
        let analytic = grads.input(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; data[i].len()]);
        for j in 0..data[i].len() {
            let orig = data[i][j];
            data[i][j] = orig + step;
            let plus = eval(&data)?;
            data[i][j] = orig - step;
            let minus = eval(&data)?;
            data[i][j] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            report.observe(|| format!("input {i}[{j}]"), analytic[j], numeric);
        }
    }
    Ok(report)
}

/// Checks parameter gradients of `module`. At most `per_param` randomly
/// chosen entries of each parameter are probed (`None` probes all).
pub fn check_module<M: Module, R: Rng>(
    module: &mut M,
    step: f64,
    per_param: Option<usize>,
    rng: &mut R,
    build: impl Fn(&mut Graph, &M) -> Result<Var>,
) -> Result<GradCheckReport> {
    let mut g = Graph::new();
    let out = build(&mut g, module)?;
    let grads = g.backward(out)?;

    let mut plan: Vec<(String, Vec<f64>, Vec<usize>)> = Vec::new();
    module.visit(&mut |p| {
        let analytic = grads.param(p.id()).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; p.len()]);
        let entries = match per_param {
            Some(k) if k < p.len() => {
                let mut e = sample(rng, p.len(), k).into_vec();
                e.sort_unstable();
                e
            }
            _ => (0..p.len()).collect(),
        };
        plan.push((p.name().to_string(), analytic, entries));
    });

    let mut report = GradCheckReport::new();
    for (pi, (name, analytic, entries)) in plan.iter().enumerate() {
        for &j in entries {
            let mut numeric = [0.0; 2];
            for (slot, delta) in [step, -step].into_iter().enumerate() {
                nudge(module, pi, j, delta);
                let mut g = Graph::new();
                let out = build(&mut g, module);
                nudge(module, pi, j, -delta);
                numeric[slot] = g.scalar(out?);
            }
            let numeric = (numeric[0] - numeric[1]) / (2.0 * step);
            report.observe(|| format!("{name}[{j}]"), analytic[j], numeric);
        }
    }
    Ok(report)
}

fn nudge<M: Module>(module: &mut M, index: usize, entry: usize, delta: f64) {
    let mut i = 0;
    module.visit_mut(&mut |p| {
        if i == index {
            p.value_mut()[entry] += delta;
        }
        i += 1;
    });
}
