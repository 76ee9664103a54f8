use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ClassWeight, RunConfig};
use super::stages::{prepare_with, raw_beats, Example, InputSpec, Toolkit};
use super::{par_map, AtStage, ErrorKind, PipelineError};
use crate::data::{build_manifest, save_wav, synth_pcg, write_annotations, DatasetManifest, Label, RecordingEntry, Split, ANNOTATION_SUFFIX, LABEL_INDEX_FILE, MANIFEST_FILE, SPLIT_LIST_FILE};
use crate::ensemble::{
    build_1dcnn_with, build_2dcnn_with, evaluate, ClassScores, Classifier, CnnShape, EvalReport, ModelKind, ModelMeta, ModelSet,
};
use crate::features::{write_feature_maps, FeatureKind, LabeledMap};
use crate::hmm::{train_hmm, BaumWelchReport, HmmConfig, HmmModel};
use crate::nn::{class_weights_from, train, Network, Samples, TrainConfig, TrainOutcome};
use crate::segment::{apply_policy, write_beats, LengthPolicy, SegmentationStats};
use crate::util::{sub_seed, write_atomic};

pub const SUBJECTS_FILE: &str = "train_subjects.txt";

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    write_atomic(path, bytes)
        .map_err(|e| PipelineError::new("write", ErrorKind::Data, format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::new("write", ErrorKind::Data, format!("{}: {e}", dir.display())))
}

fn data_err(stage: &'static str, msg: impl Into<String>) -> PipelineError {
    PipelineError::new(stage, ErrorKind::Data, msg)
}

fn config_err(msg: impl Into<String>) -> PipelineError {
    PipelineError::new("config", ErrorKind::Config, msg)
}

/// Writes a synthetic dataset (WAVs, annotations, label index, split list,
/// manifest) to `out`. The split list pins the TRAIN/TEST assignment so later
/// commands agree on it whatever their seed.
pub fn cmd_synth(cfg: &RunConfig) -> Result<DatasetManifest, PipelineError> {
    let synth = cfg.synth_config();
    synth.validate().at("config")?;
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(config_err(format!("test_fraction {} must lie in (0, 1)", cfg.test_fraction)));
    }
    let recordings = synth_pcg(&synth).at("synth")?;
    ensure_dir(&cfg.out)?;
    let mut labels = String::from("id,label,subject_id\n");
    for r in &recordings {
        save_wav(cfg.out.join(format!("{}.wav", r.id)), &r.signal).at("write")?;
        write_annotations(cfg.out.join(format!("{}{ANNOTATION_SUFFIX}", r.id)), &r.states).at("write")?;
        let _ = writeln!(labels, "{},{},{}", r.id, r.label.as_str(), r.subject_id);
    }
    write_out(&cfg.out.join(LABEL_INDEX_FILE), labels.as_bytes())?;
    let split_path = cfg.out.join(SPLIT_LIST_FILE);
    if split_path.exists() {
        std::fs::remove_file(&split_path).at("write")?;
    }
    let manifest = build_manifest(&cfg.out, sub_seed(cfg.seed, "split"), cfg.test_fraction).at("manifest")?;
    let mut split = String::from("id,split\n");
    for e in manifest.entries() {
        let _ = writeln!(split, "{},{}", e.id, manifest.split_of(&e.id).expect("every entry has a split"));
    }
    write_out(&split_path, split.as_bytes())?;
    manifest.save(cfg.out.join(MANIFEST_FILE)).at("write")?;
    log::info!("wrote {} recordings to {}", recordings.len(), cfg.out.display());
    Ok(manifest)
}

fn load_manifest(cfg: &RunConfig) -> Result<DatasetManifest, PipelineError> {
    let root = cfg.require_root()?;
    build_manifest(root, sub_seed(cfg.seed, "split"), cfg.test_fraction).at("manifest")
}

fn load_examples(entries: &[&RecordingEntry], spec: &InputSpec) -> Result<(Vec<Example>, SegmentationStats), PipelineError> {
    let kit = Toolkit::new(spec.include_c0)?;
    let results = par_map(entries, |e| prepare_with(&kit, &e.wav_path, &e.annotation_path, e.label, &e.id, spec));
    let mut all = Vec::new();
    let mut stats = SegmentationStats::default();
    for r in results {
        let (ex, s) = r?;
        stats.segmented += s.segmented;
        stats.discarded += s.discarded;
        all.extend(ex);
    }
    Ok((all, stats))
}

fn input_spec(kind: ModelKind, meta: &ModelMeta) -> InputSpec {
    InputSpec {
        raw: kind.needs_raw().then_some(meta.policy),
        features: if kind.needs_features() { meta.features } else { None },
        include_c0: meta.include_c0,
    }
}

fn meta_from(cfg: &RunConfig) -> ModelMeta {
    let raw = cfg.model.needs_raw();
    ModelMeta {
        policy: if raw { cfg.beat_policy } else { LengthPolicy::Norm1000 },
        features: if cfg.model.needs_features() { cfg.features } else { None },
        include_c0: cfg.include_c0,
        hmm_score: cfg.hmm_score,
    }
}

/// Holds out a share of each class's subjects for early stopping.
fn validation_ids(entries: &[&RecordingEntry], fraction: f64, seed: u64) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    if fraction <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "val"));
    for label in Label::ALL {
        let mut subjects: Vec<&str> = entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.subject_id.as_str())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if subjects.len() < 2 {
            continue;
        }
        subjects.shuffle(&mut rng);
        let k = ((subjects.len() as f64 * fraction).round() as usize).clamp(1, subjects.len() - 1);
        let held: BTreeSet<&str> = subjects[..k].iter().copied().collect();
        out.extend(entries.iter().filter(|e| e.label == label && held.contains(e.subject_id.as_str())).map(|e| e.id.clone()));
    }
    out
}

fn raw_samples(ex: &[&Example]) -> Result<Samples<f32>, PipelineError> {
    let len = ex.first().map(|e| e.beat.len()).unwrap_or(1);
    Samples::from_rows(vec![len, 1], ex.iter().map(|e| (e.beat.samples(), e.label()))).at("train")
}

fn map_samples(ex: &[&Example]) -> Result<Samples<f32>, PipelineError> {
    let (f, d) = ex.first().and_then(|e| e.map.as_ref()).map(|m| (m.frames(), m.dims())).unwrap_or((1, 1));
    Samples::from_rows(vec![f, d, 1], ex.iter().map(|e| (e.map.as_ref().expect("features prepared").values(), e.label()))).at("train")
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub model_path: PathBuf,
    pub kind: ModelKind,
    pub n_train: usize,
    pub n_val: usize,
    pub cnn: Vec<(&'static str, TrainOutcome)>,
    pub hmm: Vec<(&'static str, BaumWelchReport)>,
}

struct Member {
    name: &'static str,
    lr: f64,
    net: Network<f32>,
    data: Samples<f32>,
    val: Option<Samples<f32>>,
}

fn train_member(cfg: &RunConfig, m: &mut Member, weights: [f64; 2]) -> Result<TrainOutcome, PipelineError> {
    let tc = TrainConfig {
        batch_size: cfg.batch_size,
        epochs: cfg.epochs,
        patience: if m.val.is_some() { cfg.patience } else { None },
        class_weights: weights,
        seed: sub_seed(cfg.seed, &format!("train.{}", m.name)),
        ..TrainConfig::new(m.lr)
    };
    log::info!("training {} on {} beats (lr {}, batch {}, up to {} epochs)", m.name, m.data.len(), m.lr, tc.batch_size, tc.epochs);
    let outcome = train(&mut m.net, &m.data, m.val.as_ref(), &tc).at("train")?;
    if let Some(last) = outcome.history.last() {
        log::info!(
            "{}: {} epochs, final train loss {:.4}, best epoch {:?}",
            m.name,
            outcome.history.len(),
            last.train_loss,
            outcome.best_epoch
        );
    }
    Ok(outcome)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "NA".into())
}

/// Preprocess, segment, extract features and train the configured model;
/// writes `model.pcgm`, `history.csv`, `train_report.txt`, the subject list
/// used for leakage checks and the effective config.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, PipelineError> {
    cfg.validate()?;
    let manifest = load_manifest(cfg)?;
    let meta = meta_from(cfg);
    let kind = cfg.model;
    let spec = input_spec(kind, &meta);
    let entries: Vec<&RecordingEntry> = manifest.entries_in(Split::Train).collect();
    if entries.is_empty() {
        return Err(data_err("manifest", "TRAIN split is empty"));
    }
    let val_ids = if kind == ModelKind::Hmm { BTreeSet::new() } else { validation_ids(&entries, cfg.val_fraction, cfg.seed) };
    let (examples, stats) = load_examples(&entries, &spec)?;
    stats.log("train split");
    let (val, fit): (Vec<&Example>, Vec<&Example>) = examples.iter().partition(|e| val_ids.contains(e.beat.recording_id()));
    if fit.is_empty() {
        return Err(data_err("segment", "no training beats"));
    }
    let fit_labels: Vec<Label> = fit.iter().map(|e| e.label()).collect();
    let weights = match cfg.class_weight {
        ClassWeight::Auto => class_weights_from(&fit_labels).at("train")?,
        ClassWeight::Unweighted => [1.0, 1.0],
        ClassWeight::Fixed(w) => [1.0, w],
    };
    let val_usable = Label::ALL.iter().all(|l| val.iter().any(|e| e.label() == *l));
    if !val.is_empty() && !val_usable {
        log::warn!("validation split lacks a class; training without early stopping");
    }

    let mut summary = TrainSummary {
        model_path: cfg.model_path(),
        kind,
        n_train: fit.len(),
        n_val: if val_usable { val.len() } else { 0 },
        cnn: Vec::new(),
        hmm: Vec::new(),
    };
    let dense = cfg.dense_dropout;
    let shape1 = CnnShape { dense_dropout: dense, ..CnnShape::cnn1d(meta.policy) };
    let shape2 = CnnShape { dense_dropout: dense, ..CnnShape::cnn2d() };
    let member1 = |ex: &[&Example], v: &[&Example]| -> Result<Member, PipelineError> {
        Ok(Member {
            name: "cnn1d",
            lr: cfg.lr_1d,
            net: build_1dcnn_with(meta.policy, shape1, sub_seed(cfg.seed, "cnn1d")).at("build")?,
            data: raw_samples(ex)?,
            val: if val_usable { Some(raw_samples(v)?) } else { None },
        })
    };
    let member2 = |ex: &[&Example], v: &[&Example]| -> Result<Member, PipelineError> {
        Ok(Member {
            name: "cnn2d",
            lr: cfg.lr_2d,
            net: build_2dcnn_with(shape2, sub_seed(cfg.seed, "cnn2d")).at("build")?,
            data: map_samples(ex)?,
            val: if val_usable { Some(map_samples(v)?) } else { None },
        })
    };

    let classifier = match kind {
        ModelKind::Cnn1d | ModelKind::Cnn2d => {
            let mut m = if kind == ModelKind::Cnn1d { member1(&fit, &val)? } else { member2(&fit, &val)? };
            summary.cnn.push((m.name, train_member(cfg, &mut m, weights)?));
            if kind == ModelKind::Cnn1d {
                Classifier::Cnn1d(m.net)
            } else {
                Classifier::Cnn2d(m.net)
            }
        }
        ModelKind::Ecnn => {
            let mut a = member1(&fit, &val)?;
            let mut b = member2(&fit, &val)?;
            summary.cnn.push((a.name, train_member(cfg, &mut a, weights)?));
            summary.cnn.push((b.name, train_member(cfg, &mut b, weights)?));
            Classifier::Ecnn { cnn1d: a.net, cnn2d: b.net }
        }
        ModelKind::Hmm => {
            let mut models: Vec<HmmModel> = Vec::new();
            for (name, label) in [("normal", Label::Normal), ("abnormal", Label::Abnormal)] {
                let seqs: Vec<&[f64]> =
                    fit.iter().filter(|e| e.label() == label).map(|e| e.map.as_ref().expect("features prepared").values()).collect();
                let dim = fit[0].map.as_ref().expect("features prepared").dims();
                let hc = HmmConfig { seed: sub_seed(cfg.seed, &format!("hmm.{name}")), ..cfg.hmm.clone() };
                log::info!("training {name} HMM on {} beats", seqs.len());
                let (model, report) = train_hmm(&seqs, dim, label, &hc).at("train")?;
                summary.hmm.push((name, report));
                models.push(model);
            }
            let abnormal = models.pop().unwrap();
            let normal = models.pop().unwrap();
            Classifier::Hmm { normal, abnormal }
        }
    };
    let model = ModelSet::new(meta, classifier).at("build")?;

    ensure_dir(&cfg.out)?;
    if let Some(parent) = summary.model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    model.save(&summary.model_path).at("write")?;
    write_out(&cfg.out.join("history.csv"), history_csv(&summary).as_bytes())?;
    write_out(&cfg.out.join("train_report.txt"), train_report(cfg, &summary, &stats, weights, &manifest).as_bytes())?;
    let subjects_path = summary.model_path.with_file_name(SUBJECTS_FILE);
    let mut subjects = format!("# manifest {:016x}\n", manifest.hash());
    for s in manifest.subjects_in(Split::Train) {
        let _ = writeln!(subjects, "{s}");
    }
    write_out(&subjects_path, subjects.as_bytes())?;
    write_out(&cfg.out.join("config.txt"), cfg.to_text().as_bytes())?;
    Ok(summary)
}

fn history_csv(s: &TrainSummary) -> String {
    let mut out = String::new();
    if s.kind == ModelKind::Hmm {
        out.push_str("member,iteration,loglik\n");
        for (name, r) in &s.hmm {
            for (i, ll) in r.loglik.iter().enumerate() {
                let _ = writeln!(out, "{name},{i},{ll:.6}");
            }
        }
    } else {
        out.push_str("member,epoch,train_loss,val_loss,val_macc\n");
        for (name, o) in &s.cnn {
            for e in &o.history {
                let _ = writeln!(out, "{name},{},{:.6},{},{}", e.epoch, e.train_loss, fmt_opt(e.val_loss), fmt_opt(e.val_macc));
            }
        }
    }
    out
}

fn train_report(cfg: &RunConfig, s: &TrainSummary, stats: &SegmentationStats, weights: [f64; 2], m: &DatasetManifest) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "model          {}", s.kind.display_name());
    let _ = writeln!(r, "seed           {}", cfg.seed);
    let _ = writeln!(r, "manifest       {:016x}", m.hash());
    let _ = writeln!(
        r,
        "recordings     train {} normal / {} abnormal, test {} normal / {} abnormal",
        m.count(Split::Train, Label::Normal),
        m.count(Split::Train, Label::Abnormal),
        m.count(Split::Test, Label::Normal),
        m.count(Split::Test, Label::Abnormal)
    );
    let _ = writeln!(r, "beats          {} segmented, {} discarded", stats.segmented, stats.discarded);
    let _ = writeln!(r, "fit / val      {} / {}", s.n_train, s.n_val);
    let _ = writeln!(r, "class weights  normal {:.6}, abnormal {:.6}", weights[0], weights[1]);
    for (name, o) in &s.cnn {
        let _ = writeln!(
            r,
            "{name:<14} {} epochs, best epoch {}, stopped early {}",
            o.history.len(),
            o.best_epoch.map(|e| e.to_string()).unwrap_or_else(|| "n/a".into()),
            o.stopped_early
        );
    }
    for (name, b) in &s.hmm {
        let _ = writeln!(
            r,
            "hmm {name:<10} {} iterations, final loglik {:.6}, converged {}, reseeded {}",
            b.loglik.len().saturating_sub(1),
            b.loglik.last().copied().unwrap_or(f64::NAN),
            b.converged,
            b.reseeded
        );
    }
    r
}

fn features_label(kind: ModelKind, meta: &ModelMeta) -> String {
    let f = meta.features.map(|k| k.as_str()).unwrap_or("raw");
    match kind {
        ModelKind::Cnn1d => format!("raw-{}", meta.policy),
        ModelKind::Ecnn => format!("raw-{}+{f}", meta.policy),
        _ => f.to_string(),
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateOutcome {
    pub kind: ModelKind,
    pub features: String,
    pub report: EvalReport,
    pub warnings: Vec<String>,
}

fn check_compatible(cfg: &RunConfig, model: &ModelSet) -> Result<(), PipelineError> {
    let (kind, meta) = (model.kind(), model.meta());
    if cfg.is_explicit("model") && cfg.model != kind {
        return Err(config_err(format!("configured model {} but the model file holds {kind}", cfg.model)));
    }
    if kind.needs_features() && cfg.is_explicit("features") && cfg.features != meta.features {
        return Err(config_err(format!(
            "configured features {} but the {kind} model was trained on {}",
            cfg.features.map(|k| k.as_str()).unwrap_or("raw"),
            meta.features.map(|k| k.as_str()).unwrap_or("raw")
        )));
    }
    if kind.needs_raw() && cfg.is_explicit("beat_policy") && cfg.beat_policy != meta.policy {
        return Err(config_err(format!("configured beat policy {} but the model expects {}", cfg.beat_policy, meta.policy)));
    }
    if kind.needs_features() && cfg.is_explicit("include_c0") && cfg.include_c0 != meta.include_c0 {
        return Err(config_err("include_c0 differs from the model's MFCC layout"));
    }
    Ok(())
}

fn leakage_warnings(model_path: &Path, manifest: &DatasetManifest) -> Vec<String> {
    let path = model_path.with_file_name(SUBJECTS_FILE);
    let Ok(text) = std::fs::read_to_string(&path) else {
        return vec![format!("no {SUBJECTS_FILE} next to the model; subject leakage not checked")];
    };
    let mut warnings = Vec::new();
    let mut trained = BTreeSet::new();
    for line in text.lines() {
        if let Some(h) = line.strip_prefix("# manifest ") {
            if h.trim() != format!("{:016x}", manifest.hash()) {
                log::info!("model was trained against a different manifest ({})", h.trim());
            }
        } else if !line.trim().is_empty() {
            trained.insert(line.trim().to_string());
        }
    }
    let overlap: Vec<String> = manifest.subjects_in(Split::Test).intersection(&trained).cloned().collect();
    if !overlap.is_empty() {
        let shown: Vec<&str> = overlap.iter().take(5).map(String::as_str).collect();
        warnings.push(format!(
            "split leakage: {} TEST subjects were used in training ({}{})",
            overlap.len(),
            shown.join(", "),
            if overlap.len() > 5 { ", ..." } else { "" }
        ));
    }
    warnings
}

/// Scores the model on the TEST split; writes `eval_report.txt`, `eval.csv`,
/// `confusion.csv` and per-beat `test_predictions.csv`.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluateOutcome, PipelineError> {
    let model_path = cfg.model_path();
    let model = ModelSet::load(&model_path).at("load-model")?;
    check_compatible(cfg, &model)?;
    if !(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0) {
        return Err(config_err(format!("test_fraction {} must lie in (0, 1)", cfg.test_fraction)));
    }
    let manifest = load_manifest(cfg)?;
    let warnings = leakage_warnings(&model_path, &manifest);
    for w in &warnings {
        log::warn!("{w}");
    }
    let kind = model.kind();
    let entries: Vec<&RecordingEntry> = manifest.entries_in(Split::Test).collect();
    if entries.is_empty() {
        return Err(data_err("manifest", "TEST split is empty"));
    }
    let (examples, stats) = load_examples(&entries, &input_spec(kind, model.meta()))?;
    stats.log("test split");
    let scores = score(&model, &examples)?;
    let pairs: Vec<(Label, Label)> = examples.iter().zip(&scores).map(|(e, s)| (e.label(), s.label())).collect();
    let report = evaluate(&pairs).at("evaluate")?;
    let features = features_label(kind, model.meta());
    let name = kind.display_name();

    ensure_dir(&cfg.out)?;
    let mut text = report.to_text(name, &features);
    for w in &warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    write_out(&cfg.out.join("eval_report.txt"), text.as_bytes())?;
    write_out(&cfg.out.join("eval.csv"), report.to_csv(name, &features).as_bytes())?;
    write_out(&cfg.out.join("confusion.csv"), report.confusion_csv().as_bytes())?;
    let mut rows = String::from("recording_id,beat_index,label_true,p_normal,p_abnormal,label_pred\n");
    for (e, s) in examples.iter().zip(&scores) {
        let r = s.renormalized();
        let _ = writeln!(
            rows,
            "{},{},{},{:.6},{:.6},{}",
            e.beat.recording_id(),
            e.beat.beat_index(),
            e.label(),
            r.p_normal,
            r.p_abnormal,
            s.label()
        );
    }
    write_out(&cfg.out.join("test_predictions.csv"), rows.as_bytes())?;
    Ok(EvaluateOutcome { kind, features, report, warnings })
}

fn score(model: &ModelSet, examples: &[Example]) -> Result<Vec<ClassScores>, PipelineError> {
    let inputs: Vec<_> = examples.iter().map(|e| (&e.beat, e.map.as_ref())).collect();
    let chunks: Vec<_> = inputs.chunks(256).collect();
    let mut out = Vec::with_capacity(inputs.len());
    for r in par_map(&chunks, |c| model.predict_batch(c)) {
        out.extend(r.at("predict")?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub beat_index: usize,
    pub p_normal: f64,
    pub p_abnormal: f64,
    pub label: Label,
}

/// Per-beat scores for one recording, written to `<out>/predictions.csv`.
/// Ensemble probabilities are renormalized to sum to one.
pub fn cmd_predict(cfg: &RunConfig) -> Result<Vec<PredictionRow>, PipelineError> {
    let wav = cfg.wav.as_deref().ok_or_else(|| config_err("predict needs wav"))?;
    let ann = cfg.annotations.as_deref().ok_or_else(|| config_err("predict needs annotations"))?;
    let model = ModelSet::load(cfg.model_path()).at("load-model")?;
    check_compatible(cfg, &model)?;
    let id = wav.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let kit = Toolkit::new(model.meta().include_c0)?;
    // the label is unknown here; beats carry a placeholder that is never read
    let (examples, stats) = prepare_with(&kit, wav, ann, Label::Normal, &id, &input_spec(model.kind(), model.meta()))?;
    if stats.discarded > 0 {
        log::info!("{id}: {} beats longer than the zero-pad length were skipped", stats.discarded);
    }
    let scores = score(&model, &examples)?;
    let rows: Vec<PredictionRow> = examples
        .iter()
        .zip(&scores)
        .map(|(e, s)| {
            let r = s.renormalized();
            PredictionRow { beat_index: e.beat.beat_index(), p_normal: r.p_normal, p_abnormal: r.p_abnormal, label: s.label() }
        })
        .collect();
    let mut csv = String::from("beat_index,p_normal,p_abnormal,label\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{:.6},{:.6},{}", r.beat_index, r.p_normal, r.p_abnormal, r.label);
    }
    ensure_dir(&cfg.out)?;
    write_out(&cfg.out.join("predictions.csv"), csv.as_bytes())?;
    Ok(rows)
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Test => "test",
    }
}

/// Segments both splits with the configured beat policy and writes
/// `beats_<split>.bin` dumps plus `segment_report.txt`.
pub fn cmd_segment(cfg: &RunConfig) -> Result<BTreeMap<Split, SegmentationStats>, PipelineError> {
    let manifest = load_manifest(cfg)?;
    let kit = Toolkit::new(false)?;
    ensure_dir(&cfg.out)?;
    let mut report = String::new();
    let mut all = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        let entries: Vec<&RecordingEntry> = manifest.entries_in(split).collect();
        let per = par_map(&entries, |e| {
            let raw = raw_beats(&e.wav_path, &e.annotation_path, e.label, &e.id, &kit.chain)?;
            let raw = raw.into_iter().filter(|b| b.len() >= 2).collect();
            apply_policy(raw, cfg.beat_policy).at("segment")
        });
        let mut beats = Vec::new();
        let mut stats = SegmentationStats::default();
        for r in per {
            let (b, s) = r?;
            stats.segmented += s.segmented;
            stats.discarded += s.discarded;
            beats.extend(b);
        }
        stats.log(split_name(split));
        let mut bytes = Vec::new();
        write_beats(&mut bytes, &beats).at("segment")?;
        write_out(&cfg.out.join(format!("beats_{}.bin", split_name(split))), &bytes)?;
        let _ = writeln!(
            report,
            "{:<6} {} beats segmented, {} kept, {} discarded ({:.2}%), policy {}",
            split_name(split),
            stats.segmented,
            stats.kept(),
            stats.discarded,
            stats.discard_percent(),
            cfg.beat_policy
        );
        all.insert(split, stats);
    }
    write_out(&cfg.out.join("segment_report.txt"), report.as_bytes())?;
    Ok(all)
}

/// Extracts feature maps of duration-normalized beats for both splits and
/// writes `features_<kind>_<split>.bin`.
pub fn cmd_features(cfg: &RunConfig) -> Result<BTreeMap<Split, usize>, PipelineError> {
    let kind: FeatureKind = cfg.features.ok_or_else(|| config_err("features must be mfcc or tvar"))?;
    let manifest = load_manifest(cfg)?;
    let spec = InputSpec { raw: None, features: Some(kind), include_c0: cfg.include_c0 };
    ensure_dir(&cfg.out)?;
    let mut counts = BTreeMap::new();
    for split in [Split::Train, Split::Test] {
        let entries: Vec<&RecordingEntry> = manifest.entries_in(split).collect();
        let (examples, _) = load_examples(&entries, &spec)?;
        let maps: Vec<LabeledMap> = examples
            .into_iter()
            .map(|e| LabeledMap {
                recording_id: e.beat.recording_id().to_string(),
                beat_index: e.beat.beat_index(),
                label: e.beat.label(),
                map: e.map.expect("features prepared"),
            })
            .collect();
        let mut bytes = Vec::new();
        write_feature_maps(&mut bytes, &maps).at("features")?;
        write_out(&cfg.out.join(format!("features_{}_{}.bin", kind.as_str(), split_name(split))), &bytes)?;
        counts.insert(split, maps.len());
    }
    Ok(counts)
}
