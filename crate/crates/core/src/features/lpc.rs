//! Levinson-Durbin recursion and short-time LPC (TVAR) maps.

use super::{frame_signal, FeatureError, FeatureKind, FeatureMap, FrameConfig, N_COEFFS};

/// Autoregressive model order for TVAR maps.
pub const TVAR_ORDER: usize = 12;

/// Predictor `x[n] ≈ Σ coeffs[k-1] · x[n-k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpcSolution {
    pub coeffs: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Prediction error energy after each order, `errors[0] = r0`.
    pub errors: Vec<f64>,
}

impl LpcSolution {
    pub fn residual(&self) -> f64 {
        *self.errors.last().expect("errors holds at least r0")
    }
}

/// Solves the Toeplitz normal equations for an order-`order` predictor.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcSolution, FeatureError> {
    if r.len() <= order {
        return Err(FeatureError::Config(format!(
            "order {order} needs {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) {
        return Err(FeatureError::NonPositiveEnergy(r[0]));
    }
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut errors = Vec::with_capacity(order + 1);
    let mut err = r[0];
    errors.push(err);
    for i in 0..order {
        if err <= 0.0 {
            return Err(FeatureError::Unstable { order: i });
        }
        let acc = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = acc / err;
        if k.abs() > 1.0 + 1e-12 {
            return Err(FeatureError::Unstable { order: i + 1 });
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
        reflection.push(k);
        errors.push(err.max(0.0));
    }
    Ok(LpcSolution { coeffs: a, reflection, errors })
}

/// Biased (1/N) autocorrelation for lags `0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..=max_lag)
        .map(|k| {
            if k >= x.len() {
                0.0
            } else {
                x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum::<f64>() / n
            }
        })
        .collect()
}

/// T × 12 map of per-frame order-12 predictor coefficients. All-zero frames
/// map to all-zero rows.
pub fn tvar_map(x: &[f64], cfg: &FrameConfig) -> Result<FeatureMap, FeatureError> {
    let frames = frame_signal(x, cfg)?;
    let t = frames.len();
    let mut values = Vec::with_capacity(t * N_COEFFS);
    for f in &frames {
        let r = autocorrelation(f, TVAR_ORDER);
        if r[0] == 0.0 {
            values.extend(std::iter::repeat_n(0.0, TVAR_ORDER));
        } else {
            values.extend(levinson_durbin(&r, TVAR_ORDER)?.coeffs);
        }
    }
    FeatureMap::new(values, t, N_COEFFS, FeatureKind::Tvar)
}
