use std::path::Path;

use super::{AtStage, PipelineError};
use crate::data::{load_annotations, load_wav, Label};
use crate::dsp::{design_butterworth_bandpass, preprocess_with, BiquadChain, FilterSpec, TARGET_RATE_HZ};
use crate::features::{FeatureExtractor, FeatureKind, FeatureMap};
use crate::segment::{normalize_duration, segment_beats, zero_pad, Beat, LengthPolicy, SegmentationStats, NORM_LEN, ZPAD_LEN};

/// What a classifier consumes per beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InputSpec {
    /// Length policy of the raw-signal input, when one is needed.
    pub raw: Option<LengthPolicy>,
    pub features: Option<FeatureKind>,
    pub include_c0: bool,
}

/// One prepared beat. `beat` follows `InputSpec::raw` when set and is the
/// duration-normalized beat otherwise; feature maps always come from the
/// duration-normalized beat.
#[derive(Debug, Clone)]
pub struct Example {
    pub beat: Beat,
    pub map: Option<FeatureMap>,
}

impl Example {
    pub fn label(&self) -> Label {
        self.beat.label()
    }
}

pub(crate) struct Toolkit {
    pub chain: BiquadChain,
    pub extractor: FeatureExtractor,
}

impl Toolkit {
    pub fn new(include_c0: bool) -> Result<Self, PipelineError> {
        Ok(Toolkit {
            chain: design_butterworth_bandpass(&FilterSpec::pcg_default()).at("preprocess")?,
            extractor: FeatureExtractor::pcg_default(include_c0),
        })
    }
}

/// Raw beats of one recording after resampling, band-pass and standardization.
pub(crate) fn raw_beats(
    wav: &Path,
    annotations: &Path,
    label: Label,
    id: &str,
    chain: &BiquadChain,
) -> Result<Vec<Beat>, PipelineError> {
    let signal = load_wav(wav).at("load")?;
    let states = load_annotations(annotations)
        .at("load")?
        .rescaled(signal.sample_rate_hz(), TARGET_RATE_HZ)
        .at("load")?;
    let clean = preprocess_with(&signal, chain).at("preprocess")?;
    Ok(segment_beats(&clean, &states, label, id))
}

/// Loads, preprocesses and segments one recording and prepares every beat
/// for `spec`.
pub fn prepare_recording(
    wav: &Path,
    annotations: &Path,
    label: Label,
    id: &str,
    spec: &InputSpec,
) -> Result<(Vec<Example>, SegmentationStats), PipelineError> {
    let kit = Toolkit::new(spec.include_c0)?;
    prepare_with(&kit, wav, annotations, label, id, spec)
}

pub(crate) fn prepare_with(
    kit: &Toolkit,
    wav: &Path,
    annotations: &Path,
    label: Label,
    id: &str,
    spec: &InputSpec,
) -> Result<(Vec<Example>, SegmentationStats), PipelineError> {
    let beats = raw_beats(wav, annotations, label, id, &kit.chain)?;
    let mut stats = SegmentationStats { segmented: beats.len(), discarded: 0 };
    let mut out = Vec::with_capacity(beats.len());
    for raw in beats {
        if raw.len() < 2 {
            log::warn!("{id}: beat {} has {} samples; skipped", raw.beat_index(), raw.len());
            stats.discarded += 1;
            continue;
        }
        let norm = normalize_duration(&raw, NORM_LEN).at("segment")?;
        let beat = match spec.raw {
            Some(LengthPolicy::Zpad1200) => match zero_pad(&raw, ZPAD_LEN).at("segment")? {
                Some(b) => b,
                None => {
                    stats.discarded += 1;
                    continue;
                }
            },
            _ => norm.clone(),
        };
        let map = match spec.features {
            Some(k) => Some(kit.extractor.extract(norm.samples(), k).at("features")?),
            None => None,
        };
        out.push(Example { beat, map });
    }
    Ok((out, stats))
}
