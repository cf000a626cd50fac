//! Central finite-difference check of tape gradients.

use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::error::Result;

#[derive(Debug, Clone, Copy)]
pub struct GradcheckConfig {
    pub eps: f64,
    /// Largest accepted `|a − n| / max(1e-8, |a| + |n|)` per element.
    pub tolerance: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            eps: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradcheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the backward pass of `loss` against central differences for
/// every element of every parameter. `loss` must build a scalar on the
/// supplied tape and be a pure function of the parameter values.
pub fn check_gradients<F>(params: &ParamSet, cfg: GradcheckConfig, loss: F) -> Result<GradcheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    let mut tape = Tape::new();
    let out = loss(&mut tape, params)?;
    let grads = tape.backward(out)?;

    let eval = |ps: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let out = loss(&mut tape, ps)?;
        Ok(tape.value(out).item())
    };

    let mut probe = params.clone();
    let mut checks = Vec::with_capacity(params.len());
    for (id, p) in params.iter() {
        let mut check = ParamCheck {
            name: p.name.clone(),
            elements: p.value.len(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..p.value.len() {
            let original = p.value.data()[i];
            probe.value_mut(id).data_mut()[i] = original + cfg.eps;
            let plus = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = original - cfg.eps;
            let minus = eval(&probe)?;
            probe.value_mut(id).data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * cfg.eps);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[i]);
            let err = relative_error(analytic, numeric);
            if err > check.max_rel_error || i == 0 {
                check.max_rel_error = err;
                check.worst_index = i;
                check.analytic = analytic;
                check.numeric = numeric;
            }
        }
        checks.push(check);
    }
    Ok(GradcheckReport {
        params: checks,
        tolerance: cfg.tolerance,
    })
}
