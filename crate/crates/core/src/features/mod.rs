//! Short-time feature maps of duration-normalized beats.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use crate::data::Label;
use crate::segment::Beat;

mod frame;
mod lpc;
mod mfcc;

pub use frame::{frame_signal, FrameConfig, Window};
pub use lpc::{autocorrelation, levinson_durbin, tvar_map, LpcSolution, TVAR_ORDER};
pub use mfcc::{
    dct_matrix, hz_to_mel, mel_to_hz, MelFilterbank, MfccExtractor, LOG_FLOOR, MEL_HIGH_HZ, MEL_LOW_HZ, N_FFT,
    N_MEL_FILTERS,
};

/// Coefficients kept per frame.
pub const N_COEFFS: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum FeatureError {
    #[error("feature config: {0}")]
    Config(String),
    #[error("input of {len} samples is shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
    #[error("zero-lag autocorrelation {0} is not positive")]
    NonPositiveEnergy(f64),
    #[error("Levinson-Durbin recursion unstable at order {order}")]
    Unstable { order: usize },
    #[error("non-finite feature value in frame {frame}, coefficient {coeff}")]
    NonFinite { frame: usize, coeff: usize },
    #[error("feature dump: {0}")]
    Dump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Mfcc,
    Tvar,
}

impl FeatureKind {
    pub fn code(self) -> u8 {
        match self {
            FeatureKind::Mfcc => 0,
            FeatureKind::Tvar => 1,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(FeatureKind::Mfcc),
            1 => Some(FeatureKind::Tvar),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Mfcc => "mfcc",
            FeatureKind::Tvar => "tvar",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureKind {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mfcc" => Ok(FeatureKind::Mfcc),
            "tvar" | "lpc" => Ok(FeatureKind::Tvar),
            other => Err(FeatureError::Config(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Row-major `frames × dims` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    values: Vec<f64>,
    frames: usize,
    dims: usize,
    kind: FeatureKind,
}

impl FeatureMap {
    /// Rejects shape mismatches and non-finite entries.
    pub fn new(values: Vec<f64>, frames: usize, dims: usize, kind: FeatureKind) -> Result<Self, FeatureError> {
        if values.len() != frames * dims {
            return Err(FeatureError::Config(format!(
                "{} values for a {frames}x{dims} map",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { frame: i / dims, coeff: i % dims });
        }
        Ok(FeatureMap { values, frames, dims, kind })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, frame: usize, coeff: usize) -> f64 {
        self.values[frame * self.dims + coeff]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.values[frame * self.dims..(frame + 1) * self.dims]
    }
}

/// Computes either map kind with shared framing settings.
#[derive(Debug, Clone)]
pub struct FeatureExtractor {
    mfcc: MfccExtractor,
}

impl FeatureExtractor {
    pub fn new(mfcc: MfccExtractor) -> Self {
        FeatureExtractor { mfcc }
    }

    pub fn pcg_default(include_c0: bool) -> Self {
        let mfcc = MfccExtractor::new(MelFilterbank::pcg_default(), FrameConfig::default(), include_c0)
            .expect("valid defaults");
        FeatureExtractor { mfcc }
    }

    pub fn extract(&self, x: &[f64], kind: FeatureKind) -> Result<FeatureMap, FeatureError> {
        match kind {
            FeatureKind::Mfcc => self.mfcc.mfcc_map(x),
            FeatureKind::Tvar => tvar_map(x, self.mfcc.frame_config()),
        }
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::pcg_default(false)
    }
}

/// A feature map tagged with where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMap {
    pub recording_id: String,
    pub beat_index: usize,
    pub label: Label,
    pub map: FeatureMap,
}

impl LabeledMap {
    pub fn from_beat(beat: &Beat, ex: &FeatureExtractor, kind: FeatureKind) -> Result<Self, FeatureError> {
        Ok(LabeledMap {
            recording_id: beat.recording_id().to_string(),
            beat_index: beat.beat_index(),
            label: beat.label(),
            map: ex.extract(beat.samples(), kind)?,
        })
    }
}

/// Record layout: u32 id length, id, u32 beat index, label byte, kind byte,
/// u32 frames, u32 dims, then f32 LE values row-major.
pub fn write_feature_maps<W: Write>(mut w: W, maps: &[LabeledMap]) -> Result<(), FeatureError> {
    for m in maps {
        let id = m.recording_id.as_bytes();
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(m.beat_index as u32).to_le_bytes())?;
        w.write_all(&[m.label.index() as u8, m.map.kind.code()])?;
        w.write_all(&(m.map.frames as u32).to_le_bytes())?;
        w.write_all(&(m.map.dims as u32).to_le_bytes())?;
        for &v in &m.map.values {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_feature_maps<R: Read>(mut r: R) -> Result<Vec<LabeledMap>, FeatureError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut cur = crate::util::ByteCursor::new(&bytes);
    let short = |_| FeatureError::Dump("truncated record".into());
    let mut out = Vec::new();
    while !cur.is_empty() {
        let id_len = cur.u32().map_err(short)? as usize;
        let recording_id = String::from_utf8(cur.take(id_len).map_err(short)?.to_vec())
            .map_err(|_| FeatureError::Dump("recording id is not UTF-8".into()))?;
        let beat_index = cur.u32().map_err(short)? as usize;
        let label = Label::from_index(cur.u8().map_err(short)? as usize)
            .ok_or_else(|| FeatureError::Dump("bad label byte".into()))?;
        let kind = FeatureKind::from_code(cur.u8().map_err(short)?)
            .ok_or_else(|| FeatureError::Dump("bad kind byte".into()))?;
        let frames = cur.u32().map_err(short)? as usize;
        let dims = cur.u32().map_err(short)? as usize;
        let n = frames.checked_mul(dims).ok_or_else(|| FeatureError::Dump("shape overflow".into()))?;
        let values = (0..n).map(|_| cur.f32().map(f64::from)).collect::<Result<Vec<_>, _>>().map_err(short)?;
        out.push(LabeledMap { recording_id, beat_index, label, map: FeatureMap::new(values, frames, dims, kind)? });
    }
    Ok(out)
}
