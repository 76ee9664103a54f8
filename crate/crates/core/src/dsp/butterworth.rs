use std::f64::consts::PI;

use num_complex::Complex64;

use super::DspError;
use crate::data::Signal;

/// Band-pass design request. `order` is the overall band-pass order, so the
/// analog low-pass prototype has `order / 2` poles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub order: usize,
    pub low_cut_hz: f64,
    pub high_cut_hz: f64,
    pub sample_rate_hz: u32,
}

impl FilterSpec {
    /// 4th-order 25–400 Hz band-pass at 1 kHz.
    pub fn pcg_default() -> Self {
        FilterSpec { order: 4, low_cut_hz: 25.0, high_cut_hz: 400.0, sample_rate_hz: 1000 }
    }

    pub fn validate(&self) -> Result<(), DspError> {
        let nyquist = self.sample_rate_hz as f64 / 2.0;
        if self.order == 0 || self.order % 2 != 0 {
            return Err(DspError::Design(format!("order {} must be even and positive", self.order)));
        }
        if !(self.low_cut_hz > 0.0 && self.low_cut_hz < self.high_cut_hz && self.high_cut_hz < nyquist) {
            return Err(DspError::Design(format!(
                "need 0 < {} < {} < Nyquist {nyquist}",
                self.low_cut_hz, self.high_cut_hz
            )));
        }
        Ok(())
    }
}

/// Second-order section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Both poles strictly inside the unit circle (stability triangle).
    pub fn is_stable(&self) -> bool {
        let [a1, a2] = self.a;
        a2.abs() < 1.0 && a1.abs() < 1.0 + a2
    }

    pub fn response(&self, omega: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -omega);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }

    /// DC gain, used for steady-state initial conditions.
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Transposed direct-form II state for a unit step already in progress.
    fn step_state(&self) -> [f64; 2] {
        let g = self.dc_gain();
        let s2 = self.b[2] - self.a[1] * g;
        let s1 = self.b[1] - self.a[0] * g + s2;
        [s1, s2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiquadChain {
    sections: Vec<Biquad>,
}

impl BiquadChain {
    pub fn new(sections: Vec<Biquad>) -> Result<Self, DspError> {
        if sections.is_empty() {
            return Err(DspError::Design("empty section list".into()));
        }
        if let Some(i) = sections.iter().position(|s| !s.is_stable()) {
            return Err(DspError::Unstable(i));
        }
        Ok(BiquadChain { sections })
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    /// Complex response at `freq_hz` for a chain running at `sample_rate_hz`.
    pub fn response(&self, freq_hz: f64, sample_rate_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / sample_rate_hz;
        self.sections.iter().map(|s| s.response(omega)).product()
    }

    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        self.response(freq_hz, sample_rate_hz).norm()
    }

    /// Overall filter order.
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Edge padding used by [`filter_zero_phase`].
    pub fn pad_len(&self) -> usize {
        3 * (self.order() + 1)
    }

    /// Causal single pass, starting from the steady state for `x[0]`.
    fn run(&self, x: &mut [f64]) {
        let Some(&first) = x.first() else { return };
        let mut level = first;
        for s in &self.sections {
            let [z1, z2] = s.step_state();
            let (mut s1, mut s2) = (z1 * level, z2 * level);
            level *= s.dc_gain();
            let [b0, b1, b2] = s.b;
            let [a1, a2] = s.a;
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + s1;
                s1 = b1 * xin - a1 * y + s2;
                s2 = b2 * xin - a2 * y;
                *v = y;
            }
        }
    }
}

/// Butterworth band-pass as cascaded biquads via the bilinear transform with
/// pre-warped band edges. Each section is scaled to unit gain at the band's
/// geometric center, so the cascade has unit gain there too.
pub fn design_butterworth_bandpass(spec: &FilterSpec) -> Result<BiquadChain, DspError> {
    spec.validate()?;
    let fs = spec.sample_rate_hz as f64;
    let n = spec.order / 2;
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (w1, w2) = (warp(spec.low_cut_hz), warp(spec.high_cut_hz));
    let bw = w2 - w1;
    let w0_sq = w1 * w2;

    let mut z_poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let p = Complex64::from_polar(1.0, theta);
        let pb = p * bw;
        let disc = (pb * pb - 4.0 * w0_sq).sqrt();
        for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
            z_poles.push((2.0 * fs + s) / (2.0 * fs - s));
        }
    }

    let tol = 1e-12;
    let mut complex: Vec<Complex64> = z_poles.iter().copied().filter(|z| z.im > tol).collect();
    let mut real: Vec<f64> = z_poles.iter().filter(|z| z.im.abs() <= tol).map(|z| z.re).collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    real.sort_by(f64::total_cmp);

    let mut denominators: Vec<[f64; 2]> = complex.iter().map(|z| [-2.0 * z.re, z.norm_sqr()]).collect();
    for pair in real.chunks(2) {
        match *pair {
            [r1, r2] => denominators.push([-(r1 + r2), r1 * r2]),
            // conjugate pairing guarantees an even number of real poles
            _ => return Err(DspError::Design("unpaired real pole".into())),
        }
    }

    let omega_c = 2.0 * (w0_sq.sqrt() / (2.0 * fs)).atan();
    let sections = denominators
        .into_iter()
        .map(|a| {
            let raw = Biquad { b: [1.0, 0.0, -1.0], a };
            let g = 1.0 / raw.response(omega_c).norm();
            Biquad { b: [g, 0.0, -g], a }
        })
        .collect();
    BiquadChain::new(sections)
}

/// Forward-backward filtering with odd-symmetric edge extension and
/// steady-state initial conditions; the net phase response is zero.
pub fn filter_zero_phase(signal: &Signal, chain: &BiquadChain) -> Result<Signal, DspError> {
    let x = signal.samples();
    let pad = chain.pad_len();
    let n = x.len();
    if n <= pad {
        return Err(DspError::TooShort { len: n, min: pad + 1 });
    }

    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    chain.run(&mut ext);
    ext.reverse();
    chain.run(&mut ext);
    ext.reverse();

    Ok(Signal::new(ext[pad..pad + n].to_vec(), signal.sample_rate_hz())?)
}
