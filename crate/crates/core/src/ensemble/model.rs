use std::path::Path;

use super::builders::{cnn1d_input, CNN2D_INPUT};
use super::container::{Block, Container};
use super::{fuse_scores, ClassScores, EnsembleError, ModelKind};
use crate::data::Label;
use crate::features::{FeatureKind, FeatureMap};
use crate::hmm::{DiagGmm, HmmModel, HmmScore};
use crate::nn::{LayerSpec, Network, Tensor};
use crate::segment::{Beat, LengthPolicy};
use crate::util::write_atomic;

const PREDICT_CHUNK: usize = 256;

/// Input conventions a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelMeta {
    pub policy: LengthPolicy,
    pub features: Option<FeatureKind>,
    pub include_c0: bool,
    pub hmm_score: HmmScore,
}

#[derive(Debug, Clone)]
pub enum Classifier {
    Cnn1d(Network<f32>),
    Cnn2d(Network<f32>),
    Ecnn { cnn1d: Network<f32>, cnn2d: Network<f32> },
    Hmm { normal: HmmModel, abnormal: HmmModel },
}

/// A trained classifier together with its input conventions.
#[derive(Debug, Clone)]
pub struct ModelSet {
    meta: ModelMeta,
    classifier: Classifier,
}

fn check_net(net: &Network<f32>, want: &[usize], what: &str) -> Result<(), EnsembleError> {
    if net.input_shape() != want || net.n_classes() != 2 {
        return Err(EnsembleError::Config(format!(
            "{what} network takes {:?} with {} classes; expected {want:?} with 2",
            net.input_shape(),
            net.n_classes()
        )));
    }
    Ok(())
}

impl ModelSet {
    /// Validates that the classifier matches the declared inputs. HMM
    /// parameters are rounded to `f32` so a saved model reloads exactly.
    pub fn new(meta: ModelMeta, mut classifier: Classifier) -> Result<Self, EnsembleError> {
        let kind = kind_of(&classifier);
        if kind.needs_features() && meta.features.is_none() {
            return Err(EnsembleError::Config(format!("{kind} needs a feature kind (mfcc or tvar)")));
        }
        match &mut classifier {
            Classifier::Cnn1d(n) => check_net(n, &cnn1d_input(meta.policy)?, "1D")?,
            Classifier::Cnn2d(n) => check_net(n, &CNN2D_INPUT, "2D")?,
            Classifier::Ecnn { cnn1d, cnn2d } => {
                check_net(cnn1d, &cnn1d_input(meta.policy)?, "1D")?;
                check_net(cnn2d, &CNN2D_INPUT, "2D")?;
            }
            Classifier::Hmm { normal, abnormal } => {
                if normal.dim() != abnormal.dim() {
                    return Err(EnsembleError::Config("class HMMs differ in observation dimension".into()));
                }
                if normal.label() != Label::Normal || abnormal.label() != Label::Abnormal {
                    return Err(EnsembleError::Config("HMM pair must be (normal, abnormal)".into()));
                }
                normal.quantize_f32();
                abnormal.quantize_f32();
            }
        }
        Ok(ModelSet { meta, classifier })
    }

    pub fn kind(&self) -> ModelKind {
        kind_of(&self.classifier)
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    fn raw_len(&self) -> Option<usize> {
        cnn1d_input(self.meta.policy).ok().map(|s| s[0])
    }

    fn check_beat(&self, beat: &Beat) -> Result<(), EnsembleError> {
        let want = self.raw_len().unwrap_or(0);
        if beat.policy() != self.meta.policy || beat.len() != want {
            return Err(EnsembleError::Input(format!(
                "beat {} of {} is {} with {} samples; model expects {} beats of {want}",
                beat.beat_index(),
                beat.recording_id(),
                beat.policy(),
                beat.len(),
                self.meta.policy
            )));
        }
        Ok(())
    }

    fn check_map(&self, map: Option<&FeatureMap>) -> Result<(), EnsembleError> {
        let kind = self.kind();
        let map = map.ok_or(EnsembleError::MissingInput { model: kind, what: "a feature map" })?;
        if Some(map.kind()) != self.meta.features {
            return Err(EnsembleError::Input(format!(
                "{} feature map given to a model trained on {}",
                map.kind(),
                self.meta.features.map(|k| k.as_str()).unwrap_or("raw")
            )));
        }
        let ok = match &self.classifier {
            Classifier::Hmm { normal, .. } => map.dims() == normal.dim(),
            _ => [map.frames(), map.dims(), 1] == CNN2D_INPUT,
        };
        if !ok {
            return Err(EnsembleError::Input(format!("feature map is {} × {}", map.frames(), map.dims())));
        }
        Ok(())
    }

    /// Inference-mode scores for one beat.
    pub fn predict(&self, beat: &Beat, features: Option<&FeatureMap>) -> Result<ClassScores, EnsembleError> {
        Ok(self.predict_batch(&[(beat, features)])?.remove(0))
    }

    /// Scores for many beats; every input is validated before any compute.
    pub fn predict_batch(&self, inputs: &[(&Beat, Option<&FeatureMap>)]) -> Result<Vec<ClassScores>, EnsembleError> {
        let kind = self.kind();
        for &(beat, map) in inputs {
            if kind.needs_raw() {
                self.check_beat(beat)?;
            }
            if kind.needs_features() {
                self.check_map(map)?;
            }
        }
        let raw = |i: usize| inputs[i].0.samples();
        let map = |i: usize| inputs[i].1.expect("validated").values();
        match &self.classifier {
            Classifier::Cnn1d(n) => run_net(n, inputs.len(), raw, ModelKind::Cnn1d),
            Classifier::Cnn2d(n) => run_net(n, inputs.len(), map, ModelKind::Cnn2d),
            Classifier::Ecnn { cnn1d, cnn2d } => {
                let a = run_net(cnn1d, inputs.len(), raw, ModelKind::Cnn1d)?;
                let b = run_net(cnn2d, inputs.len(), map, ModelKind::Cnn2d)?;
                a.into_iter().zip(b).map(|(x, y)| fuse_scores(x, y)).collect()
            }
            Classifier::Hmm { normal, abnormal } => (0..inputs.len())
                .map(|i| {
                    let d = crate::hmm::classify_hmm(normal, abnormal, map(i), self.meta.hmm_score)?;
                    Ok(ClassScores::from_hmm(d.loglik_normal, d.loglik_abnormal))
                })
                .collect(),
        }
    }

    pub fn to_container(&self) -> Result<Container, EnsembleError> {
        let m = &self.meta;
        let mut blocks = vec![Block::from_f64(
            "meta",
            vec![4],
            &[
                m.policy.code() as f64,
                m.features.map(|k| k.code() as f64).unwrap_or(-1.0),
                m.include_c0 as u8 as f64,
                (m.hmm_score == HmmScore::Viterbi) as u8 as f64,
            ],
        )?];
        match &self.classifier {
            Classifier::Cnn1d(n) | Classifier::Cnn2d(n) => net_blocks(n, "", &mut blocks)?,
            Classifier::Ecnn { cnn1d, cnn2d } => {
                net_blocks(cnn1d, "cnn1d.", &mut blocks)?;
                net_blocks(cnn2d, "cnn2d.", &mut blocks)?;
            }
            Classifier::Hmm { normal, abnormal } => {
                hmm_blocks(normal, "normal.", &mut blocks)?;
                hmm_blocks(abnormal, "abnormal.", &mut blocks)?;
            }
        }
        Ok(Container { kind: self.kind().code(), blocks })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EnsembleError> {
        Ok(self.to_container()?.to_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnsembleError> {
        let c = Container::from_bytes(bytes)?;
        let kind = ModelKind::from_code(c.kind).ok_or_else(|| EnsembleError::Format(format!("unknown model kind {}", c.kind)))?;
        let m = c.get("meta")?.values_f64();
        if m.len() != 4 {
            return Err(EnsembleError::Format("meta block must hold 4 values".into()));
        }
        let policy = LengthPolicy::from_code(m[0] as u8).ok_or_else(|| EnsembleError::Format("bad beat policy code".into()))?;
        let features = if m[1] < 0.0 {
            None
        } else {
            Some(FeatureKind::from_code(m[1] as u8).ok_or_else(|| EnsembleError::Format("bad feature code".into()))?)
        };
        let meta = ModelMeta {
            policy,
            features,
            include_c0: m[2] != 0.0,
            hmm_score: if m[3] != 0.0 { HmmScore::Viterbi } else { HmmScore::Forward },
        };
        let classifier = match kind {
            ModelKind::Cnn1d => Classifier::Cnn1d(load_net(&c, "")?),
            ModelKind::Cnn2d => Classifier::Cnn2d(load_net(&c, "")?),
            ModelKind::Ecnn => Classifier::Ecnn { cnn1d: load_net(&c, "cnn1d.")?, cnn2d: load_net(&c, "cnn2d.")? },
            ModelKind::Hmm => Classifier::Hmm {
                normal: load_hmm(&c, "normal.", Label::Normal)?,
                abnormal: load_hmm(&c, "abnormal.", Label::Abnormal)?,
            },
        };
        ModelSet::new(meta, classifier)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnsembleError> {
        let path = path.as_ref();
        write_atomic(path, &self.to_bytes()?).map_err(|source| EnsembleError::Io { path: path.into(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnsembleError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| EnsembleError::Io { path: path.into(), source })?;
        Self::from_bytes(&bytes)
    }
}

fn kind_of(c: &Classifier) -> ModelKind {
    match c {
        Classifier::Cnn1d(_) => ModelKind::Cnn1d,
        Classifier::Cnn2d(_) => ModelKind::Cnn2d,
        Classifier::Ecnn { .. } => ModelKind::Ecnn,
        Classifier::Hmm { .. } => ModelKind::Hmm,
    }
}

fn run_net<'a>(
    net: &Network<f32>,
    n: usize,
    row: impl Fn(usize) -> &'a [f64],
    source: ModelKind,
) -> Result<Vec<ClassScores>, EnsembleError> {
    let mut out = Vec::with_capacity(n);
    let per: usize = net.input_shape().iter().product();
    let idx: Vec<usize> = (0..n).collect();
    for chunk in idx.chunks(PREDICT_CHUNK) {
        let mut data = Vec::with_capacity(chunk.len() * per);
        for &i in chunk {
            data.extend(row(i).iter().map(|&v| v as f32));
        }
        let mut shape = vec![chunk.len()];
        shape.extend_from_slice(net.input_shape());
        let probs = net.infer(&Tensor::new(shape, data)?)?;
        for p in probs.data().chunks(2) {
            out.push(ClassScores::new(p[0] as f64, p[1] as f64, source)?);
        }
    }
    Ok(out)
}

fn net_blocks(net: &Network<f32>, prefix: &str, out: &mut Vec<Block>) -> Result<(), EnsembleError> {
    let shape: Vec<f64> = net.input_shape().iter().map(|&d| d as f64).collect();
    out.push(Block::from_f64(format!("{prefix}input_shape"), vec![shape.len()], &shape)?);
    let specs = net.specs();
    let arch: Vec<f64> = specs.iter().flat_map(|s| s.encode()).collect();
    out.push(Block::from_f64(format!("{prefix}arch"), vec![specs.len(), 4], &arch)?);
    for (name, t) in net.state_dict() {
        out.push(Block::new(format!("{prefix}{name}"), t.shape().to_vec(), t.into_data())?);
    }
    Ok(())
}

fn load_net(c: &Container, prefix: &str) -> Result<Network<f32>, EnsembleError> {
    let shape: Vec<usize> = c.get(&format!("{prefix}input_shape"))?.values.iter().map(|&v| v as usize).collect();
    let arch = c.get(&format!("{prefix}arch"))?;
    if arch.dims.len() != 2 || arch.dims[1] != 4 {
        return Err(EnsembleError::Format("arch block must be n × 4".into()));
    }
    let specs = arch
        .values_f64()
        .chunks(4)
        .map(LayerSpec::decode)
        .collect::<Result<Vec<_>, _>>()?;
    let mut net = Network::<f32>::new(&shape, &specs, 0)?;
    let entries = net
        .state_dict()
        .into_iter()
        .map(|(name, _)| {
            let b = c.get(&format!("{prefix}{name}"))?;
            Ok((name, Tensor::new(b.dims.clone(), b.values.clone())?))
        })
        .collect::<Result<Vec<_>, EnsembleError>>()?;
    net.load_state_dict(entries)?;
    Ok(net)
}

fn hmm_blocks(m: &HmmModel, prefix: &str, out: &mut Vec<Block>) -> Result<(), EnsembleError> {
    let n = m.n_states();
    out.push(Block::from_f64(format!("{prefix}initial"), vec![n], m.initial())?);
    let t: Vec<f64> = m.transition().iter().flatten().copied().collect();
    out.push(Block::from_f64(format!("{prefix}transition"), vec![n, n], &t)?);
    for (i, g) in m.emissions().iter().enumerate() {
        let (k, d) = (g.n_components(), g.dim());
        out.push(Block::from_f64(format!("{prefix}s{i}.weights"), vec![k], g.weights())?);
        let means: Vec<f64> = g.means().iter().flatten().copied().collect();
        out.push(Block::from_f64(format!("{prefix}s{i}.means"), vec![k, d], &means)?);
        let vars: Vec<f64> = g.vars().iter().flatten().copied().collect();
        out.push(Block::from_f64(format!("{prefix}s{i}.vars"), vec![k, d], &vars)?);
    }
    Ok(())
}

fn load_hmm(c: &Container, prefix: &str, label: Label) -> Result<HmmModel, EnsembleError> {
    let initial = c.get(&format!("{prefix}initial"))?.values_f64();
    let n = initial.len();
    let t = c.get(&format!("{prefix}transition"))?;
    if t.dims != [n, n] {
        return Err(EnsembleError::Format(format!("{prefix}transition is {:?}, expected [{n}, {n}]", t.dims)));
    }
    let transition = t.values_f64().chunks(n).map(|r| r.to_vec()).collect();
    let rows = |b: &Block| -> Result<Vec<Vec<f64>>, EnsembleError> {
        match b.dims.as_slice() {
            [_, d] if *d > 0 => Ok(b.values_f64().chunks(*d).map(|r| r.to_vec()).collect()),
            _ => Err(EnsembleError::Format(format!("{} must be rank 2", b.name))),
        }
    };
    let mut emissions = Vec::with_capacity(n);
    for i in 0..n {
        let weights = c.get(&format!("{prefix}s{i}.weights"))?.values_f64();
        let means = rows(c.get(&format!("{prefix}s{i}.means"))?)?;
        let vars = rows(c.get(&format!("{prefix}s{i}.vars"))?)?;
        emissions.push(DiagGmm::new(weights, means, vars)?);
    }
    Ok(HmmModel::new(transition, initial, emissions, label)?)
}
