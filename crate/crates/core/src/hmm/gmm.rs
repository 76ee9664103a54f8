use std::f64::consts::PI;

use super::HmmError;

/// Lower bound on every diagonal variance.
pub const VAR_FLOOR: f64 = 1e-4;

/// Gaussian mixture with diagonal covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGmm {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl DiagGmm {
    pub fn new(weights: Vec<f64>, means: Vec<Vec<f64>>, vars: Vec<Vec<f64>>) -> Result<Self, HmmError> {
        let k = weights.len();
        if k == 0 || means.len() != k || vars.len() != k {
            return Err(HmmError::Config("mixture needs matching weights, means and variances".into()));
        }
        let d = means[0].len();
        if d == 0 || means.iter().chain(&vars).any(|v| v.len() != d) {
            return Err(HmmError::Config("mixture components differ in dimension".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(HmmError::Config(format!("mixture weights {weights:?} do not sum to 1")));
        }
        if vars.iter().flatten().any(|v| !(*v >= VAR_FLOOR * (1.0 - 1e-6)) || !v.is_finite()) {
            return Err(HmmError::Config(format!("variance below floor {VAR_FLOOR}")));
        }
        if means.iter().flatten().any(|m| !m.is_finite()) {
            return Err(HmmError::Config("non-finite mixture mean".into()));
        }
        Ok(DiagGmm { weights, means, vars })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn vars(&self) -> &[Vec<f64>] {
        &self.vars
    }

    /// `ln w_k + ln N(x; μ_k, Σ_k)` for every component.
    pub fn component_log_pdfs(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for ((w, mu), var) in self.weights.iter().zip(&self.means).zip(&self.vars) {
            if *w == 0.0 {
                out.push(f64::NEG_INFINITY);
                continue;
            }
            let mut s = 0.0;
            for ((xi, mi), vi) in x.iter().zip(mu).zip(var) {
                s += (xi - mi).powi(2) / vi + (2.0 * PI * vi).ln();
            }
            out.push(w.ln() - 0.5 * s);
        }
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut buf = Vec::with_capacity(self.weights.len());
        self.component_log_pdfs(x, &mut buf);
        log_sum_exp(&buf)
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<Vec<f64>>, &mut Vec<Vec<f64>>) {
        (&mut self.weights, &mut self.means, &mut self.vars)
    }

    /// Rounds every parameter to the nearest `f32`.
    pub fn quantize_f32(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        self.weights.iter_mut().for_each(q);
        self.means.iter_mut().flatten().for_each(q);
        self.vars.iter_mut().flatten().for_each(|v| *v = (*v as f32 as f64).max(VAR_FLOOR as f32 as f64));
    }
}
