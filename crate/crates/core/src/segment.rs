//! Heartbeat segmentation and beat-length normalization.

use std::fmt;
use std::io::{Read, Write};

use crate::data::{Label, Signal, StateSequence};
use crate::dsp::resample_to_len;

/// Length used by duration normalization.
pub const NORM_LEN: usize = 1000;
/// Length used by zero padding; longer beats are discarded.
pub const ZPAD_LEN: usize = 1200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LengthPolicy {
    Raw,
    Norm1000,
    Zpad1200,
}

impl LengthPolicy {
    pub fn code(self) -> u8 {
        match self {
            LengthPolicy::Raw => 0,
            LengthPolicy::Norm1000 => 1,
            LengthPolicy::Zpad1200 => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(LengthPolicy::Raw),
            1 => Some(LengthPolicy::Norm1000),
            2 => Some(LengthPolicy::Zpad1200),
            _ => None,
        }
    }
}

impl fmt::Display for LengthPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LengthPolicy::Raw => "raw",
            LengthPolicy::Norm1000 => "norm1000",
            LengthPolicy::Zpad1200 => "zpad1200",
        })
    }
}

impl std::str::FromStr for LengthPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "raw" => Ok(LengthPolicy::Raw),
            "norm1000" => Ok(LengthPolicy::Norm1000),
            "zpad1200" => Ok(LengthPolicy::Zpad1200),
            other => Err(format!("unknown beat policy '{other}' (norm1000, zpad1200)")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SegmentError {
    #[error("beat {index} of {recording}: expected a raw beat, found {policy}")]
    NotRaw { recording: String, index: usize, policy: LengthPolicy },
    #[error("beat {index} of {recording} has {len} samples; need at least 2")]
    TooShort { recording: String, index: usize, len: usize },
    #[error("beat dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One cardiac cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct Beat {
    samples: Vec<f64>,
    label: Label,
    recording_id: String,
    beat_index: usize,
    policy: LengthPolicy,
}

impl Beat {
    pub fn raw(samples: Vec<f64>, label: Label, recording_id: impl Into<String>, beat_index: usize) -> Self {
        Beat { samples, label, recording_id: recording_id.into(), beat_index, policy: LengthPolicy::Raw }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn label(&self) -> Label {
        self.label
    }

    pub fn recording_id(&self) -> &str {
        &self.recording_id
    }

    pub fn beat_index(&self) -> usize {
        self.beat_index
    }

    pub fn policy(&self) -> LengthPolicy {
        self.policy
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn require_raw(&self) -> Result<(), SegmentError> {
        if self.policy != LengthPolicy::Raw {
            return Err(SegmentError::NotRaw {
                recording: self.recording_id.clone(),
                index: self.beat_index,
                policy: self.policy,
            });
        }
        Ok(())
    }
}

/// Cuts one beat per complete annotated cycle, `[S1 onset, next S1 onset)`.
/// Partial leading/trailing cycles and cycles running past the signal end are
/// dropped. Returns an empty list when no complete cycle exists.
pub fn segment_beats(signal: &Signal, states: &StateSequence, label: Label, recording_id: &str) -> Vec<Beat> {
    let x = signal.samples();
    states
        .cycles()
        .into_iter()
        .filter(|&(_, end)| end <= x.len())
        .enumerate()
        .map(|(i, (start, end))| Beat::raw(x[start..end].to_vec(), label, recording_id, i))
        .collect()
}

/// Resamples a raw beat to exactly `target_len` samples.
pub fn normalize_duration(beat: &Beat, target_len: usize) -> Result<Beat, SegmentError> {
    beat.require_raw()?;
    if beat.len() < 2 {
        return Err(SegmentError::TooShort {
            recording: beat.recording_id.clone(),
            index: beat.beat_index,
            len: beat.len(),
        });
    }
    Ok(Beat {
        samples: resample_to_len(&beat.samples, target_len),
        policy: if target_len == NORM_LEN { LengthPolicy::Norm1000 } else { LengthPolicy::Raw },
        ..beat.clone()
    })
}

/// Right-pads a raw beat with zeros to `max_len`; `None` means the beat is
/// longer than `max_len` and is discarded.
pub fn zero_pad(beat: &Beat, max_len: usize) -> Result<Option<Beat>, SegmentError> {
    beat.require_raw()?;
    if beat.len() > max_len {
        return Ok(None);
    }
    let mut samples = beat.samples.clone();
    samples.resize(max_len, 0.0);
    Ok(Some(Beat {
        samples,
        policy: if max_len == ZPAD_LEN { LengthPolicy::Zpad1200 } else { LengthPolicy::Raw },
        ..beat.clone()
    }))
}

/// Beat counts before and after the length filter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SegmentationStats {
    pub segmented: usize,
    pub discarded: usize,
}

impl SegmentationStats {
    pub fn kept(&self) -> usize {
        self.segmented - self.discarded
    }

    pub fn discard_percent(&self) -> f64 {
        if self.segmented == 0 {
            0.0
        } else {
            100.0 * self.discarded as f64 / self.segmented as f64
        }
    }

    pub fn log(&self, what: &str) {
        log::info!(
            "{what}: {} beats segmented, {} kept, {} discarded ({:.2}%)",
            self.segmented,
            self.kept(),
            self.discarded,
            self.discard_percent()
        );
    }
}

/// Applies `policy` to raw beats, collecting discard statistics.
pub fn apply_policy(beats: Vec<Beat>, policy: LengthPolicy) -> Result<(Vec<Beat>, SegmentationStats), SegmentError> {
    let mut stats = SegmentationStats { segmented: beats.len(), discarded: 0 };
    let mut out = Vec::with_capacity(beats.len());
    for b in beats {
        match policy {
            LengthPolicy::Raw => out.push(b),
            LengthPolicy::Norm1000 => out.push(normalize_duration(&b, NORM_LEN)?),
            LengthPolicy::Zpad1200 => match zero_pad(&b, ZPAD_LEN)? {
                Some(p) => out.push(p),
                None => stats.discarded += 1,
            },
        }
    }
    Ok((out, stats))
}

/// Writes beats as consecutive binary records: `u32` id length, id bytes,
/// `u32` beat index, label byte, policy byte, `u32` sample count, then
/// little-endian `f32` samples.
pub fn write_beats<W: Write>(mut w: W, beats: &[Beat]) -> Result<(), SegmentError> {
    for b in beats {
        let id = b.recording_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(b.beat_index as u32).to_le_bytes())?;
        w.write_all(&[b.label.index() as u8, b.policy.code()])?;
        w.write_all(&(b.samples.len() as u32).to_le_bytes())?;
        for &v in &b.samples {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_beats<R: Read>(mut r: R) -> Result<Vec<Beat>, SegmentError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = crate::util::ByteCursor::new(&bytes);
    let mut beats = Vec::new();
    let short = |_| SegmentError::Dump("truncated record".into());
    while !cur.is_empty() {
        let id_len = cur.u32().map_err(short)? as usize;
        let id = String::from_utf8(cur.take(id_len).map_err(short)?.to_vec())
            .map_err(|_| SegmentError::Dump("recording id is not UTF-8".into()))?;
        let beat_index = cur.u32().map_err(short)? as usize;
        let label = Label::from_index(cur.u8().map_err(short)? as usize)
            .ok_or_else(|| SegmentError::Dump("bad label byte".into()))?;
        let policy = LengthPolicy::from_code(cur.u8().map_err(short)?)
            .ok_or_else(|| SegmentError::Dump("bad policy byte".into()))?;
        let n = cur.u32().map_err(short)? as usize;
        let samples = (0..n).map(|_| cur.f32().map(f64::from)).collect::<Result<Vec<_>, _>>().map_err(short)?;
        beats.push(Beat { samples, label, recording_id: id, beat_index, policy });
    }
    Ok(beats)
}
