use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gmm::{DiagGmm, VAR_FLOOR};
use super::{HmmError, HmmModel};
use crate::data::Label;

const KMEANS_ITERS: usize = 25;
/// Component occupancy below which a mixture component counts as empty.
const EMPTY_COMPONENT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HmmConfig {
    pub n_states: usize,
    pub n_mixtures: usize,
    pub max_iters: usize,
    /// Relative log-likelihood improvement that ends training.
    pub tol: f64,
    pub seed: u64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        HmmConfig { n_states: 4, n_mixtures: 16, max_iters: 50, tol: 1e-5, seed: 0 }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<(), HmmError> {
        if self.n_states == 0 || self.n_mixtures == 0 || !(self.tol >= 0.0) {
            return Err(HmmError::Config("states and mixtures must be positive, tol non-negative".into()));
        }
        Ok(())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn diag_var(points: &[&[f64]], mean: &[f64]) -> Vec<f64> {
    let n = points.len().max(1) as f64;
    (0..mean.len())
        .map(|d| (points.iter().map(|p| (p[d] - mean[d]).powi(2)).sum::<f64>() / n).max(VAR_FLOOR))
        .collect()
}

fn mean_of(points: &[&[f64]], dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; dim];
    for p in points {
        for (a, b) in m.iter_mut().zip(p.iter()) {
            *a += b;
        }
    }
    m.iter_mut().for_each(|v| *v /= points.len().max(1) as f64);
    m
}

/// Seeded k-means++ followed by Lloyd iterations; fits a diagonal GMM with
/// weights `max(count, 1) / Σ`. Components with fewer than two members take
/// the pooled variance.
pub fn kmeans_gmm(points: &[&[f64]], k: usize, rng: &mut ChaCha8Rng) -> Result<DiagGmm, HmmError> {
    if points.is_empty() {
        return Err(HmmError::NoData("no frames to cluster".into()));
    }
    let dim = points[0].len();
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centers.push(points[next].to_vec());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, centers.last().unwrap()));
        }
    }
    let mut assign = vec![0usize; points.len()];
    for _ in 0..KMEANS_ITERS {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = (0..k)
                .min_by(|&i, &j| sq_dist(p, &centers[i]).total_cmp(&sq_dist(p, &centers[j])))
                .unwrap();
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<&[f64]> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            if !members.is_empty() {
                *center = mean_of(&members, dim);
            }
        }
        if !changed {
            break;
        }
    }
    let pooled = diag_var(points, &mean_of(points, dim));
    let mut counts = vec![0usize; k];
    assign.iter().for_each(|&a| counts[a] += 1);
    let vars = (0..k)
        .map(|c| {
            let members: Vec<&[f64]> = points.iter().zip(&assign).filter(|(_, &a)| a == c).map(|(p, _)| *p).collect();
            if members.len() < 2 {
                pooled.clone()
            } else {
                diag_var(&members, &centers[c])
            }
        })
        .collect();
    let total: usize = counts.iter().map(|&c| c.max(1)).sum();
    let weights = counts.iter().map(|&c| c.max(1) as f64 / total as f64).collect();
    DiagGmm::new(weights, centers, vars)
}

/// Uniform left-to-right initialization: each sequence is cut into
/// `n_states` contiguous blocks and each state's pooled frames seed its GMM.
pub fn init_hmm(sequences: &[&[f64]], dim: usize, label: Label, cfg: &HmmConfig) -> Result<HmmModel, HmmError> {
    cfg.validate()?;
    let n = cfg.n_states;
    if sequences.is_empty() {
        return Err(HmmError::NoData(format!("no {label} sequences")));
    }
    let mut pooled: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    let mut total_frames = 0usize;
    for seq in sequences {
        if dim == 0 || seq.len() % dim != 0 {
            return Err(HmmError::Dimension { expected: dim, got: seq.len() });
        }
        let t = seq.len() / dim;
        if t < n {
            return Err(HmmError::TooShort { frames: t, states: n });
        }
        total_frames += t;
        for (f, frame) in seq.chunks(dim).enumerate() {
            pooled[f * n / t].push(frame);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::sub_seed(cfg.seed, &format!("hmm-init-{label}")));
    let emissions = pooled
        .iter()
        .map(|frames| kmeans_gmm(frames, cfg.n_mixtures, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let mean_len = total_frames as f64 / sequences.len() as f64;
    let leave = (n as f64 / mean_len).min(1.0);
    let mut trans = vec![vec![0.0; n]; n];
    for (i, row) in trans.iter_mut().enumerate() {
        if i + 1 < n {
            row[i] = 1.0 - leave;
            row[i + 1] = leave;
        } else {
            row[i] = 1.0;
        }
    }
    let mut initial = vec![0.0; n];
    initial[0] = 1.0;
    HmmModel::new(trans, initial, emissions, label)
}

/// Total log-likelihood of every sequence.
pub fn total_loglik(model: &HmmModel, sequences: &[&[f64]]) -> Result<f64, HmmError> {
    sequences.iter().map(|s| model.forward_loglik(s)).sum()
}

/// Sequences per E-step work unit; fixed so the reduction order does not
/// depend on the thread count.
const E_STEP_CHUNK: usize = 16;

struct Accumulators {
    init: Vec<f64>,
    trans: Vec<Vec<f64>>,
    occ: Vec<f64>,
    w: Vec<Vec<f64>>,
    m: Vec<Vec<Vec<f64>>>,
    s: Vec<Vec<Vec<f64>>>,
    total: f64,
}

impl Accumulators {
    fn zeros(model: &HmmModel) -> Self {
        let n = model.n_states();
        let dim = model.dim();
        let k_per: Vec<usize> = model.emissions().iter().map(DiagGmm::n_components).collect();
        let m: Vec<Vec<Vec<f64>>> = k_per.iter().map(|&k| vec![vec![0.0; dim]; k]).collect();
        Accumulators {
            init: vec![0.0; n],
            trans: vec![vec![0.0; n]; n],
            occ: vec![0.0; n],
            w: k_per.iter().map(|&k| vec![0.0; k]).collect(),
            s: m.clone(),
            m,
            total: 0.0,
        }
    }

    fn merge(&mut self, o: Accumulators) {
        fn add(a: &mut [f64], b: &[f64]) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        add(&mut self.init, &o.init);
        add(&mut self.occ, &o.occ);
        for (a, b) in self.trans.iter_mut().zip(&o.trans) {
            add(a, b);
        }
        for (a, b) in self.w.iter_mut().zip(&o.w) {
            add(a, b);
        }
        for (a, b) in self.m.iter_mut().flatten().zip(o.m.iter().flatten()) {
            add(a, b);
        }
        for (a, b) in self.s.iter_mut().flatten().zip(o.s.iter().flatten()) {
            add(a, b);
        }
        self.total += o.total;
    }
}

fn e_step(model: &HmmModel, sequences: &[&[f64]]) -> Result<Accumulators, HmmError> {
    let n = model.n_states();
    let dim = model.dim();
    let mut acc = Accumulators::zeros(model);
    let mut comp = Vec::new();
    for seq in sequences {
        let log_b = model.emission_logs(seq)?;
        let post = model.posteriors(&log_b);
        if !post.loglik.is_finite() {
            return Err(HmmError::Numeric("sequence has zero likelihood".into()));
        }
        acc.total += post.loglik;
        for i in 0..n {
            acc.init[i] += post.gamma[0][i];
            for j in 0..n {
                acc.trans[i][j] += post.xi_sum[i][j];
            }
        }
        for (t, x) in seq.chunks(dim).enumerate() {
            for i in 0..n {
                let g = post.gamma[t][i];
                if g <= 0.0 {
                    continue;
                }
                acc.occ[i] += g;
                let gmm = &model.emissions()[i];
                gmm.component_log_pdfs(x, &mut comp);
                let norm = super::gmm::log_sum_exp(&comp);
                for (k, &lc) in comp.iter().enumerate() {
                    let r = g * (lc - norm).exp();
                    if r == 0.0 {
                        continue;
                    }
                    acc.w[i][k] += r;
                    let (m, s) = (&mut acc.m[i][k], &mut acc.s[i][k]);
                    for d in 0..dim {
                        m[d] += r * x[d];
                        s[d] += r * x[d] * x[d];
                    }
                }
            }
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchReport {
    /// Total log-likelihood before each update and of the returned model.
    pub loglik: Vec<f64>,
    pub converged: bool,
    pub reseeded: usize,
}

/// Expectation-maximization over all sequences. Transition zeros stay zero;
/// variances are floored; emptied components are reseeded next to the
/// heaviest component of their state.
pub fn baum_welch(
    mut model: HmmModel,
    sequences: &[&[f64]],
    max_iters: usize,
    tol: f64,
) -> Result<(HmmModel, BaumWelchReport), HmmError> {
    if sequences.is_empty() {
        return Err(HmmError::NoData("no training sequences".into()));
    }
    let n = model.n_states();
    let dim = model.dim();
    let mut history = Vec::new();
    let mut converged = false;
    let mut reseeded = 0;
    let mut rng = ChaCha8Rng::seed_from_u64(crate::sub_seed(0, &format!("hmm-reseed-{}", model.label())));
    for iter in 0..=max_iters {
        let chunks: Vec<&[&[f64]]> = sequences.chunks(E_STEP_CHUNK).collect();
        let parts = crate::util::par_map(&chunks, |c| e_step(&model, c));
        let mut acc = Accumulators::zeros(&model);
        for part in parts {
            acc.merge(part.map_err(|e| match e {
                HmmError::Numeric(m) => HmmError::Numeric(format!("{m} at iteration {iter}")),
                other => other,
            })?);
        }
        let Accumulators { init: init_acc, trans: trans_num, occ, w: w_acc, m: m_acc, s: s_acc, total } = acc;
        if let Some(&last) = history.last() {
            let gain = (total - last) / f64::abs(last).max(f64::MIN_POSITIVE);
            if gain < -1e-8 * f64::abs(last).max(1.0) {
                log::debug!("EM log-likelihood fell from {last} to {total} at iteration {iter}");
            }
            history.push(total);
            if gain.abs() < tol {
                converged = true;
                break;
            }
        } else {
            history.push(total);
        }
        if iter == max_iters {
            break;
        }

        let (trans, initial, emissions) = model.parts_mut();
        let n_seq = sequences.len() as f64;
        for i in 0..n {
            initial[i] = init_acc[i] / n_seq;
            let out: f64 = trans_num[i].iter().sum();
            if out > 0.0 {
                for j in 0..n {
                    trans[i][j] = trans_num[i][j] / out;
                }
            }
        }
        for i in 0..n {
            if occ[i] <= 0.0 {
                continue;
            }
            let (weights, means, vars) = emissions[i].parts_mut();
            let mut empty = Vec::new();
            for k in 0..weights.len() {
                let r = w_acc[i][k];
                if r < EMPTY_COMPONENT {
                    empty.push(k);
                    continue;
                }
                weights[k] = r / occ[i];
                for d in 0..dim {
                    let mu = m_acc[i][k][d] / r;
                    means[k][d] = mu;
                    vars[k][d] = (s_acc[i][k][d] / r - mu * mu).max(VAR_FLOOR);
                }
            }
            for k in empty {
                let donor = (0..weights.len())
                    .filter(|&j| w_acc[i][j] >= EMPTY_COMPONENT)
                    .max_by(|&a, &b| weights[a].total_cmp(&weights[b]))
                    .expect("an occupied state has an occupied component");
                let half = weights[donor] / 2.0;
                weights[donor] = half;
                weights[k] = half;
                let sd: Vec<f64> = vars[donor].iter().map(|v| v.sqrt()).collect();
                means[k] = means[donor].iter().zip(&sd).map(|(m, s)| m + 0.1 * s * rng.random_range(-1.0..1.0)).collect();
                vars[k] = vars[donor].clone();
                reseeded += 1;
                log::info!("state {i}: mixture component {k} emptied; reseeded from component {donor}");
            }
            let sum: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= sum);
        }
    }
    Ok((model, BaumWelchReport { loglik: history, converged, reseeded }))
}

/// Initialization plus Baum-Welch.
pub fn train_hmm(sequences: &[&[f64]], dim: usize, label: Label, cfg: &HmmConfig) -> Result<(HmmModel, BaumWelchReport), HmmError> {
    let init = init_hmm(sequences, dim, label, cfg)?;
    baum_welch(init, sequences, cfg.max_iters, cfg.tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_truth() -> HmmModel {
        // stays of roughly a third of a 200-frame sequence each, the regime
        // the uniform block initialization assumes
        let trans = vec![vec![0.985, 0.015, 0.0], vec![0.0, 0.98, 0.02], vec![0.0, 0.0, 1.0]];
        let em = vec![
            DiagGmm::new(vec![1.0], vec![vec![-3.0, 0.0]], vec![vec![0.5, 0.5]]).unwrap(),
            DiagGmm::new(vec![1.0], vec![vec![0.0, 2.0]], vec![vec![0.5, 0.5]]).unwrap(),
            DiagGmm::new(vec![1.0], vec![vec![3.0, -1.0]], vec![vec![0.5, 0.5]]).unwrap(),
        ];
        HmmModel::new(trans, vec![1.0, 0.0, 0.0], em, Label::Normal).unwrap()
    }

    fn draw(m: &HmmModel, n: usize, t: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| m.sample(t, &mut rng).0).collect()
    }

    #[test]
    fn uniform_blocks_and_degenerate_clusters() {
        let frame = [0.25, -1.0, 3.0];
        let seq: Vec<f64> = (0..96).flat_map(|_| frame).collect();
        let cfg = HmmConfig { n_mixtures: 16, ..Default::default() };
        let m = init_hmm(&[&seq], 3, Label::Abnormal, &cfg).unwrap();
        for g in m.emissions() {
            assert_eq!(g.n_components(), 16);
            assert!(g.means().iter().all(|mu| mu == &frame));
            assert!(g.vars().iter().flatten().all(|&v| v == VAR_FLOOR));
        }
        assert!((m.transition()[0][0] - (1.0 - 4.0 / 96.0)).abs() < 1e-15);
        assert_eq!(m.transition()[3][3], 1.0);
        assert_eq!(m.initial(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn block_partition_is_uniform() {
        // state-specific constants make the partition visible in the means
        let seq: Vec<f64> = (0..96).map(|t| (t / 24) as f64).collect();
        let m = init_hmm(&[&seq], 1, Label::Normal, &HmmConfig { n_mixtures: 2, ..Default::default() }).unwrap();
        for (i, g) in m.emissions().iter().enumerate() {
            assert!(g.means().iter().all(|mu| mu[0] == i as f64));
        }
    }

    #[test]
    fn init_errors_and_determinism() {
        let cfg = HmmConfig::default();
        assert!(matches!(init_hmm(&[&[1.0, 2.0, 3.0][..]], 1, Label::Normal, &cfg), Err(HmmError::TooShort { .. })));
        assert!(init_hmm(&[], 1, Label::Normal, &cfg).is_err());
        let data = draw(&toy_truth(), 5, 40, 1);
        let refs: Vec<&[f64]> = data.iter().map(|s| s.as_slice()).collect();
        assert_eq!(init_hmm(&refs, 2, Label::Normal, &cfg).unwrap(), init_hmm(&refs, 2, Label::Normal, &cfg).unwrap());
    }

    #[test]
    fn em_is_monotone_and_recovers_transitions() {
        let truth = toy_truth();
        let data = draw(&truth, 50, 200, 2);
        let refs: Vec<&[f64]> = data.iter().map(|s| s.as_slice()).collect();
        let cfg = HmmConfig { n_states: 3, n_mixtures: 1, max_iters: 20, tol: 0.0, seed: 4 };
        let init = init_hmm(&refs, 2, Label::Normal, &cfg).unwrap();
        let (m, report) = baum_welch(init, &refs, 20, 0.0).unwrap();
        assert_eq!(report.loglik.len(), 21);
        for w in report.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{:?}", report.loglik);
        }
        for i in 0..2 {
            assert!((m.transition()[i][i] - truth.transition()[i][i]).abs() < 0.05, "{:?}", m.transition());
        }
        for (i, row) in m.transition().iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().enumerate().all(|(j, &p)| p == 0.0 || j == i || j == i + 1));
        }
    }

    #[test]
    fn single_component_optimum_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Vec<f64>> = (0..4).map(|_| (0..30).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let refs: Vec<&[f64]> = data.iter().map(|s| s.as_slice()).collect();
        let all: Vec<f64> = data.concat();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / all.len() as f64;
        let opt = HmmModel::new(
            vec![vec![1.0]],
            vec![1.0],
            vec![DiagGmm::new(vec![1.0], vec![vec![mean]], vec![vec![var]]).unwrap()],
            Label::Normal,
        )
        .unwrap();
        let (next, _) = baum_welch(opt.clone(), &refs, 1, 0.0).unwrap();
        assert!((next.emissions()[0].means()[0][0] - mean).abs() < 1e-8);
        assert!((next.emissions()[0].vars()[0][0] - var).abs() < 1e-8);
        assert_eq!(next.transition(), opt.transition());
    }

    #[test]
    fn empty_component_is_reseeded() {
        // a component parked far from all data collects no responsibility
        let em = DiagGmm::new(vec![0.5, 0.5], vec![vec![0.0], vec![1e4]], vec![vec![1.0], vec![VAR_FLOOR]]).unwrap();
        let m = HmmModel::new(vec![vec![1.0]], vec![1.0], vec![em], Label::Normal).unwrap();
        let seq: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let (next, report) = baum_welch(m, &[&seq], 1, 0.0).unwrap();
        assert_eq!(report.reseeded, 1);
        let g = &next.emissions()[0];
        assert!(g.means()[1][0].abs() < 1.0);
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
