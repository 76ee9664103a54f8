use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::gmm::{log_sum_exp, DiagGmm};
use super::HmmError;
use crate::data::Label;

/// Left-to-right HMM with diagonal-GMM emissions. Observation sequences are
/// flat row-major `T × dim` slices.
#[derive(Debug, Clone, PartialEq)]
pub struct HmmModel {
    transition: Vec<Vec<f64>>,
    initial: Vec<f64>,
    emissions: Vec<DiagGmm>,
    label: Label,
}

/// Scaled forward-backward quantities for one sequence.
pub(crate) struct Posteriors {
    pub loglik: f64,
    /// `gamma[t][i]`
    pub gamma: Vec<Vec<f64>>,
    /// Expected transition counts summed over time.
    pub xi_sum: Vec<Vec<f64>>,
}

impl HmmModel {
    pub fn new(transition: Vec<Vec<f64>>, initial: Vec<f64>, emissions: Vec<DiagGmm>, label: Label) -> Result<Self, HmmError> {
        let n = emissions.len();
        if n == 0 || transition.len() != n || initial.len() != n || transition.iter().any(|r| r.len() != n) {
            return Err(HmmError::Config("transition, initial and emissions disagree on the state count".into()));
        }
        let dim = emissions[0].dim();
        if emissions.iter().any(|g| g.dim() != dim) {
            return Err(HmmError::Config("emission dimensions differ between states".into()));
        }
        let stochastic = |r: &[f64]| r.iter().all(|&p| (0.0..=1.0 + 1e-9).contains(&p)) && (r.iter().sum::<f64>() - 1.0).abs() < 1e-6;
        if !stochastic(&initial) || !transition.iter().all(|r| stochastic(r)) {
            return Err(HmmError::Config("transition rows and initial distribution must be stochastic".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            if row.iter().enumerate().any(|(j, &p)| p > 0.0 && j != i && j != i + 1) {
                return Err(HmmError::Config(format!("state {i} has a transition outside the left-to-right band")));
            }
        }
        Ok(HmmModel { transition, initial, emissions, label })
    }

    pub fn n_states(&self) -> usize {
        self.emissions.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn emissions(&self) -> &[DiagGmm] {
        &self.emissions
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<Vec<f64>>, &mut Vec<f64>, &mut Vec<DiagGmm>) {
        (&mut self.transition, &mut self.initial, &mut self.emissions)
    }

    pub fn frames(&self, obs: &[f64]) -> Result<usize, HmmError> {
        let d = self.dim();
        if obs.is_empty() || obs.len() % d != 0 {
            return Err(HmmError::Dimension { expected: d, got: obs.len() });
        }
        Ok(obs.len() / d)
    }

    /// `log_b[t][i]`, the emission log-density of frame `t` in state `i`.
    pub fn emission_logs(&self, obs: &[f64]) -> Result<Vec<Vec<f64>>, HmmError> {
        self.frames(obs)?;
        Ok(obs.chunks(self.dim()).map(|x| self.emissions.iter().map(|g| g.log_pdf(x)).collect()).collect())
    }

    fn ln(p: f64) -> f64 {
        if p > 0.0 {
            p.ln()
        } else {
            f64::NEG_INFINITY
        }
    }

    /// `ln p(obs | model)` by the scaled forward recursion.
    pub fn forward_loglik(&self, obs: &[f64]) -> Result<f64, HmmError> {
        let log_b = self.emission_logs(obs)?;
        Ok(self.scaled_forward(&log_b).2)
    }

    /// Returns normalized alphas, scale factors `c_t` and the log-likelihood.
    /// Emissions are shifted by their per-frame maximum before exponentiating.
    fn scaled_forward(&self, log_b: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
        let n = self.n_states();
        let mut alphas = Vec::with_capacity(log_b.len());
        let mut scales = Vec::with_capacity(log_b.len());
        let mut loglik = 0.0;
        let mut prev: Vec<f64> = Vec::new();
        for (t, lb) in log_b.iter().enumerate() {
            let m = lb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let b: Vec<f64> = lb.iter().map(|v| (v - m).exp()).collect();
            let mut a: Vec<f64> = if t == 0 {
                (0..n).map(|i| self.initial[i] * b[i]).collect()
            } else {
                (0..n)
                    .map(|j| {
                        let lo = j.saturating_sub(1);
                        (lo..=j).map(|i| prev[i] * self.transition[i][j]).sum::<f64>() * b[j]
                    })
                    .collect()
            };
            let c: f64 = a.iter().sum();
            if c > 0.0 && m.is_finite() {
                a.iter_mut().for_each(|v| *v /= c);
                loglik += c.ln() + m;
            } else {
                loglik = f64::NEG_INFINITY;
            }
            scales.push(c);
            prev = a.clone();
            alphas.push(a);
        }
        (alphas, scales, loglik)
    }

    /// Log-space forward recursion; agrees with `forward_loglik`.
    pub fn forward_loglik_log(&self, obs: &[f64]) -> Result<f64, HmmError> {
        let log_b = self.emission_logs(obs)?;
        let n = self.n_states();
        let mut la: Vec<f64> = (0..n).map(|i| Self::ln(self.initial[i]) + log_b[0][i]).collect();
        let mut terms = Vec::with_capacity(n);
        for lb in &log_b[1..] {
            la = (0..n)
                .map(|j| {
                    terms.clear();
                    terms.extend((0..n).map(|i| la[i] + Self::ln(self.transition[i][j])));
                    log_sum_exp(&terms) + lb[j]
                })
                .collect();
        }
        Ok(log_sum_exp(&la))
    }

    /// Most likely state path (0-based) and its log joint probability.
    pub fn viterbi(&self, obs: &[f64]) -> Result<(Vec<usize>, f64), HmmError> {
        let log_b = self.emission_logs(obs)?;
        let n = self.n_states();
        let t_len = log_b.len();
        let mut delta: Vec<f64> = (0..n).map(|i| Self::ln(self.initial[i]) + log_b[0][i]).collect();
        let mut back = vec![vec![0usize; n]; t_len];
        for t in 1..t_len {
            let mut next = vec![f64::NEG_INFINITY; n];
            for j in 0..n {
                let (mut best, mut arg) = (f64::NEG_INFINITY, j);
                for i in 0..n {
                    let v = delta[i] + Self::ln(self.transition[i][j]);
                    if v > best {
                        best = v;
                        arg = i;
                    }
                }
                next[j] = best + log_b[t][j];
                back[t][j] = arg;
            }
            delta = next;
        }
        let (mut state, score) = delta
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let mut path = vec![0; t_len];
        for t in (0..t_len).rev() {
            path[t] = state;
            state = back[t][state];
        }
        Ok((path, score))
    }

    /// Log joint probability of a given state path.
    pub fn path_log_prob(&self, obs: &[f64], path: &[usize]) -> Result<f64, HmmError> {
        let log_b = self.emission_logs(obs)?;
        if path.len() != log_b.len() || path.iter().any(|&s| s >= self.n_states()) {
            return Err(HmmError::Config("path does not fit the sequence".into()));
        }
        let mut s = Self::ln(self.initial[path[0]]) + log_b[0][path[0]];
        for t in 1..path.len() {
            s += Self::ln(self.transition[path[t - 1]][path[t]]) + log_b[t][path[t]];
        }
        Ok(s)
    }

    /// Forward-backward state posteriors for one sequence.
    pub(crate) fn posteriors(&self, log_b: &[Vec<f64>]) -> Posteriors {
        let n = self.n_states();
        let t_len = log_b.len();
        let (alphas, scales, loglik) = self.scaled_forward(log_b);
        let b: Vec<Vec<f64>> = log_b
            .iter()
            .map(|lb| {
                let m = lb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                lb.iter().map(|v| (v - m).exp()).collect()
            })
            .collect();
        let mut beta = vec![1.0; n];
        let mut gamma = vec![vec![0.0; n]; t_len];
        let mut xi_sum = vec![vec![0.0; n]; n];
        for t in (0..t_len).rev() {
            let norm: f64 = (0..n).map(|i| alphas[t][i] * beta[i]).sum();
            for i in 0..n {
                gamma[t][i] = if norm > 0.0 { alphas[t][i] * beta[i] / norm } else { 0.0 };
            }
            if t == 0 {
                break;
            }
            let c = scales[t];
            if c > 0.0 {
                for i in 0..n {
                    for j in i..(i + 2).min(n) {
                        xi_sum[i][j] += alphas[t - 1][i] * self.transition[i][j] * b[t][j] * beta[j] / c;
                    }
                }
            }
            beta = (0..n)
                .map(|i| {
                    if c > 0.0 {
                        (i..(i + 2).min(n)).map(|j| self.transition[i][j] * b[t][j] * beta[j]).sum::<f64>() / c
                    } else {
                        0.0
                    }
                })
                .collect();
        }
        Posteriors { loglik, gamma, xi_sum }
    }

    /// Draws a `len`-frame sequence and its hidden states.
    pub fn sample<R: Rng>(&self, len: usize, rng: &mut R) -> (Vec<f64>, Vec<usize>) {
        let pick = |p: &[f64], rng: &mut R| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &v) in p.iter().enumerate() {
                acc += v;
                if u < acc {
                    return i;
                }
            }
            p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
        };
        let mut obs = Vec::with_capacity(len * self.dim());
        let mut states = Vec::with_capacity(len);
        let mut s = pick(&self.initial, rng);
        for t in 0..len {
            if t > 0 {
                s = pick(&self.transition[s], rng);
            }
            states.push(s);
            let g = &self.emissions[s];
            let k = pick(g.weights(), rng);
            for (m, v) in g.means()[k].iter().zip(&g.vars()[k]) {
                let z: f64 = StandardNormal.sample(rng);
                obs.push(m + v.sqrt() * z);
            }
        }
        (obs, states)
    }

    /// Rounds every parameter to `f32` so a 32-bit container stores it exactly.
    pub fn quantize_f32(&mut self) {
        for row in &mut self.transition {
            row.iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        self.initial.iter_mut().for_each(|v| *v = *v as f32 as f64);
        self.emissions.iter_mut().for_each(DiagGmm::quantize_f32);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(mean: f64, var: f64) -> DiagGmm {
        DiagGmm::new(vec![1.0], vec![vec![mean]], vec![vec![var]]).unwrap()
    }

    pub(crate) fn toy(n: usize, stay: f64, seed: u64) -> HmmModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trans = vec![vec![0.0; n]; n];
        for i in 0..n {
            if i + 1 < n {
                let p = stay * rng.random_range(0.6..1.0);
                trans[i][i] = p;
                trans[i][i + 1] = 1.0 - p;
            } else {
                trans[i][i] = 1.0;
            }
        }
        let mut initial = vec![0.0; n];
        initial[0] = 1.0;
        let em = (0..n)
            .map(|i| {
                DiagGmm::new(
                    vec![0.4, 0.6],
                    vec![vec![i as f64 * 1.5 + rng.random_range(-0.3..0.3)], vec![i as f64 * 1.5 + 0.5]],
                    vec![vec![rng.random_range(0.3..1.0)], vec![0.6]],
                )
                .unwrap()
            })
            .collect();
        HmmModel::new(trans, initial, em, Label::Normal).unwrap()
    }

    /// Every state path of length `t` over `n` states.
    fn all_paths(n: usize, t: usize) -> Vec<Vec<usize>> {
        (0..n.pow(t as u32))
            .map(|mut code| {
                (0..t)
                    .map(|_| {
                        let s = code % n;
                        code /= n;
                        s
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn validation() {
        let bad_band = vec![vec![0.5, 0.0, 0.5], vec![0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0]];
        let em = vec![gauss(0.0, 1.0); 3];
        assert!(HmmModel::new(bad_band, vec![1.0, 0.0, 0.0], em.clone(), Label::Normal).is_err());
        let not_stochastic = vec![vec![0.5, 0.4, 0.0], vec![0.0, 0.5, 0.5], vec![0.0, 0.0, 1.0]];
        assert!(HmmModel::new(not_stochastic, vec![1.0, 0.0, 0.0], em, Label::Normal).is_err());
        let m = toy(2, 0.8, 1);
        assert!(matches!(m.forward_loglik(&[]), Err(HmmError::Dimension { .. })));
    }

    #[test]
    fn single_frame_is_initial_emission() {
        let m = toy(3, 0.7, 2);
        let ll = m.forward_loglik(&[0.4]).unwrap();
        assert!((ll - m.emissions()[0].log_pdf(&[0.4])).abs() < 1e-12);
    }

    #[test]
    fn forward_and_viterbi_match_enumeration() {
        for seed in 0..20u64 {
            let n = 2 + (seed % 2) as usize;
            let m = toy(n, 0.8, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for t in 1..=8 {
                let (obs, _) = m.sample(t, &mut rng);
                let scores: Vec<f64> = all_paths(n, t).iter().map(|p| m.path_log_prob(&obs, p).unwrap()).collect();
                let brute = log_sum_exp(&scores);
                assert!((m.forward_loglik(&obs).unwrap() - brute).abs() < 1e-10);
                assert!((m.forward_loglik_log(&obs).unwrap() - brute).abs() < 1e-10);
                let (path, score) = m.viterbi(&obs).unwrap();
                let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!((score - best).abs() < 1e-10);
                assert!((m.path_log_prob(&obs, &path).unwrap() - score).abs() < 1e-10);
                assert!(score <= brute + 1e-12);
                assert!(brute <= score + (scores.len() as f64).ln() + 1e-12);
            }
        }
    }

    #[test]
    fn forced_chain_walks_every_state() {
        let trans = vec![
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        let m = HmmModel::new(trans, vec![1.0, 0.0, 0.0, 0.0], vec![gauss(0.0, 1.0); 4], Label::Abnormal).unwrap();
        assert_eq!(m.viterbi(&[0.1, -0.3, 2.0, 0.0]).unwrap().0, vec![0, 1, 2, 3]);
    }

    #[test]
    fn posteriors_normalized() {
        let m = toy(4, 0.9, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (obs, _) = m.sample(60, &mut rng);
        let p = m.posteriors(&m.emission_logs(&obs).unwrap());
        for g in &p.gamma {
            assert!((g.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        // expected transitions out of t < T sum to T - 1
        let total: f64 = p.xi_sum.iter().flatten().sum();
        assert!((total - 59.0).abs() < 1e-8);
    }

    #[test]
    fn far_outlier_stays_finite() {
        let m = toy(3, 0.8, 1);
        let ll = m.forward_loglik(&[0.0, 1e3, 2.0]).unwrap();
        assert!(ll.is_finite());
        assert!((ll - m.forward_loglik_log(&[0.0, 1e3, 2.0]).unwrap()).abs() < 1e-8 * ll.abs());
    }

    proptest! {
        #[test]
        fn scaled_and_log_forward_agree(seed in any::<u64>(), t in 1usize..60) {
            let m = toy(4, 0.85, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
            let (obs, states) = m.sample(t, &mut rng);
            let a = m.forward_loglik(&obs).unwrap();
            let b = m.forward_loglik_log(&obs).unwrap();
            prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
            let (path, _) = m.viterbi(&obs).unwrap();
            prop_assert!(path.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
            prop_assert!(states.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        }
    }
}
