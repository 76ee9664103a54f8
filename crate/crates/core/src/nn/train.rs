use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{weighted_cross_entropy, Adam, AdamConfig, Mode, Network, NnError, Scalar, Tensor};
use crate::data::Label;
use crate::sub_seed;

const EVAL_CHUNK: usize = 256;

/// Fixed-shape labelled examples stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    labels: Vec<Label>,
}

impl<T: Scalar> Samples<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>, labels: Vec<Label>) -> Result<Self, NnError> {
        let per: usize = shape.iter().product();
        if per == 0 || data.len() != per * labels.len() {
            return Err(NnError::Data(format!(
                "{} values for {} samples of shape {shape:?}",
                data.len(),
                labels.len()
            )));
        }
        Ok(Samples { shape, data, labels })
    }

    /// Collects examples given as `f64` rows.
    pub fn from_rows<'a>(shape: Vec<usize>, rows: impl IntoIterator<Item = (&'a [f64], Label)>) -> Result<Self, NnError> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (row, label) in rows {
            data.extend(row.iter().map(|&v| T::of(v)));
            labels.push(label);
        }
        Self::new(shape, data, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> &[T] {
        let per = self.data.len() / self.labels.len();
        &self.data[i * per..(i + 1) * per]
    }

    /// Batch tensor of the selected examples in the given order.
    pub fn batch(&self, idx: &[usize]) -> Tensor<T> {
        let mut shape = vec![idx.len()];
        shape.extend(&self.shape);
        let data = idx.iter().flat_map(|&i| self.sample(i).iter().copied()).collect();
        Tensor::new(shape, data).expect("batch shape follows sample shape")
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Samples {
            shape: self.shape.clone(),
            data: idx.iter().flat_map(|&i| self.sample(i).iter().copied()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Stop after this many epochs without a validation MAcc improvement.
    pub patience: Option<usize>,
    /// Indexed by `Label::index`.
    pub class_weights: [f64; 2],
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(learning_rate: f64) -> Self {
        TrainConfig {
            adam: AdamConfig::with_lr(learning_rate),
            batch_size: 128,
            epochs: 50,
            patience: Some(10),
            class_weights: [1.0, 1.0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let a = &self.adam;
        if !(a.learning_rate >= 0.0 && a.learning_rate.is_finite()) {
            return Err(NnError::Config(format!("learning rate {} must be non-negative", a.learning_rate)));
        }
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(NnError::Config("Adam needs betas in [0, 1) and eps > 0".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 || self.patience == Some(0) {
            return Err(NnError::Config("batch size, epochs and patience must be positive".into()));
        }
        if self.class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(NnError::Config(format!("class weights {:?} must be positive", self.class_weights)));
        }
        Ok(())
    }
}

/// `[1, n_normal / n_abnormal]`.
pub fn class_weights_from(labels: &[Label]) -> Result<[f64; 2], NnError> {
    let abnormal = labels.iter().filter(|&&l| l == Label::Abnormal).count();
    let normal = labels.len() - abnormal;
    if normal == 0 || abnormal == 0 {
        return Err(NnError::Data("both classes are needed to weight the loss".into()));
    }
    Ok([1.0, normal as f64 / abnormal as f64])
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_macc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept, when validation drove selection.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    // batch norm cannot train on a single example; fold a lone tail back in
    if out.len() > 1 && out.last().unwrap().len() == 1 {
        out.pop();
        let k = out.len() - 1;
        out[k] = &order[k * size..];
    }
    out
}

/// Weighted loss and MAcc (percent, ABNORMAL positive; ties go to ABNORMAL).
fn evaluate<T: Scalar>(net: &Network<T>, data: &Samples<T>, weights: [f64; 2]) -> Result<(f64, Option<f64>), NnError> {
    let mut loss = 0.0;
    let mut hit = [0usize; 2];
    let mut total = [0usize; 2];
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let probs = net.infer(&data.batch(chunk))?;
        let labels: Vec<Label> = chunk.iter().map(|&i| data.labels[i]).collect();
        loss += weighted_cross_entropy(&probs, &labels, weights)?.0 * chunk.len() as f64;
        for (row, l) in probs.data().chunks(2).zip(&labels) {
            let pred = if row[1] >= row[0] { Label::Abnormal } else { Label::Normal };
            total[l.index()] += 1;
            hit[l.index()] += (pred == *l) as usize;
        }
    }
    let macc = (total[0] > 0 && total[1] > 0)
        .then(|| 50.0 * (hit[0] as f64 / total[0] as f64 + hit[1] as f64 / total[1] as f64));
    Ok((loss / data.len() as f64, macc))
}

/// Mini-batch Adam training. With a validation set that holds both classes,
/// the parameters from the best-MAcc epoch are restored at the end.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &Samples<T>,
    val: Option<&Samples<T>>,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::Data("no training examples".into()));
    }
    if !(data.labels.contains(&Label::Normal) && data.labels.contains(&Label::Abnormal)) {
        return Err(NnError::Data("training data must contain both classes".into()));
    }
    if data.shape() != net.input_shape() {
        return Err(NnError::Data(format!(
            "examples of shape {:?} for a network expecting {:?}",
            data.shape(),
            net.input_shape()
        )));
    }
    net.reseed_dropout(sub_seed(cfg.seed, "dropout"));
    let mut shuffle = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "shuffle"));
    let mut adam = Adam::new(cfg.adam);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Vec<(String, Tensor<T>)>)> = None;
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let mut total = 0.0;
        for (b, idx) in batches(&order, cfg.batch_size).into_iter().enumerate() {
            let nonfinite = |layer| NnError::NonFiniteLoss { epoch, batch: b, layer };
            let probs = net.forward(&data.batch(idx), Mode::Train).map_err(|e| match e {
                NnError::NonFinite { layer } => nonfinite(Some(layer)),
                other => other,
            })?;
            let labels: Vec<Label> = idx.iter().map(|&i| data.labels[i]).collect();
            let (loss, grad) = weighted_cross_entropy(&probs, &labels, cfg.class_weights)?;
            if !loss.is_finite() {
                return Err(nonfinite(None));
            }
            total += loss * idx.len() as f64;
            net.backward(&grad)?;
            adam.step(net);
        }
        let train_loss = total / data.len() as f64;
        let (val_loss, val_macc) = match val {
            Some(v) if !v.is_empty() => {
                let (l, m) = evaluate(net, v, cfg.class_weights).map_err(|e| match e {
                    NnError::NonFinite { layer } => NnError::NonFiniteLoss { epoch, batch: 0, layer: Some(layer) },
                    other => other,
                })?;
                (Some(l), m)
            }
            _ => (None, None),
        };
        log::debug!("epoch {epoch}: train loss {train_loss:.5}, val loss {val_loss:?}, val MAcc {val_macc:?}");
        history.push(EpochStats { epoch, train_loss, val_loss, val_macc });

        if let Some(m) = val_macc {
            if best.as_ref().is_none_or(|(bm, _, _)| m > *bm) {
                best = Some((m, epoch, net.state_dict()));
            } else if let (Some(p), Some((_, be, _))) = (cfg.patience, &best) {
                if epoch - be >= p {
                    stopped_early = epoch < cfg.epochs;
                    break;
                }
            }
        }
    }
    let best_epoch = match best {
        Some((_, epoch, state)) => {
            net.load_state_dict(state)?;
            Some(epoch)
        }
        None => None,
    };
    Ok(TrainOutcome { history, best_epoch, stopped_early })
}
