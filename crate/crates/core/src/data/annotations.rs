//! Heart-state annotations: `start_sample,state` CSV files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use super::DataError;
use crate::util::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeartState {
    S1,
    Systole,
    S2,
    Diastole,
}

impl HeartState {
    /// The state that must follow this one in a cardiac cycle.
    pub fn next(self) -> HeartState {
        match self {
            HeartState::S1 => HeartState::Systole,
            HeartState::Systole => HeartState::S2,
            HeartState::S2 => HeartState::Diastole,
            HeartState::Diastole => HeartState::S1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            HeartState::S1 => "S1",
            HeartState::Systole => "systole",
            HeartState::S2 => "S2",
            HeartState::Diastole => "diastole",
        }
    }
}

impl fmt::Display for HeartState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HeartState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "s1" => Ok(HeartState::S1),
            "systole" => Ok(HeartState::Systole),
            "s2" => Ok(HeartState::S2),
            "diastole" => Ok(HeartState::Diastole),
            other => Err(format!("unknown state '{other}'")),
        }
    }
}

/// Ordered state onsets. Onsets are strictly increasing and states follow
/// S1 → systole → S2 → diastole → S1; the first and last cycles may be partial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSequence {
    entries: Vec<(usize, HeartState)>,
}

impl StateSequence {
    pub fn new(entries: Vec<(usize, HeartState)>) -> Result<Self, DataError> {
        for (i, w) in entries.windows(2).enumerate() {
            let ((a, sa), (b, sb)) = (w[0], w[1]);
            if b <= a {
                return Err(DataError::InvalidStates(format!(
                    "onset {b} at entry {} does not follow {a}",
                    i + 1
                )));
            }
            if sb != sa.next() {
                return Err(DataError::InvalidStates(format!(
                    "{sa} followed by {sb} at entry {}, expected {}",
                    i + 1,
                    sa.next()
                )));
            }
        }
        Ok(StateSequence { entries })
    }

    pub fn entries(&self) -> &[(usize, HeartState)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Half-open sample ranges `[S1 onset, next S1 onset)` of every complete cycle.
    pub fn cycles(&self) -> Vec<(usize, usize)> {
        self.entries
            .windows(5)
            .filter(|w| w[0].1 == HeartState::S1 && w[4].1 == HeartState::S1)
            .map(|w| (w[0].0, w[4].0))
            .collect()
    }

    /// Maps onsets from one sample rate to another by rounding.
    pub fn rescaled(&self, from_hz: u32, to_hz: u32) -> Result<Self, DataError> {
        if from_hz == to_hz {
            return Ok(self.clone());
        }
        let ratio = to_hz as f64 / from_hz as f64;
        let entries = self
            .entries
            .iter()
            .map(|&(s, st)| ((s as f64 * ratio).round() as usize, st))
            .collect();
        StateSequence::new(entries)
    }
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<StateSequence, DataError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    parse_annotations(&text, path)
}

/// Parses annotation CSV text; `origin` is only used in error messages.
pub fn parse_annotations(text: &str, origin: &Path) -> Result<StateSequence, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: usize, msg: String| DataError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };

    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "start_sample" || &headers[1] != "state" {
        return Err(parse_err(1, "expected header 'start_sample,state'".into()));
    }

    let mut entries = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 2 {
            return Err(parse_err(line, format!("expected 2 fields, found {}", record.len())));
        }
        let start = record[0]
            .parse::<usize>()
            .map_err(|e| parse_err(line, format!("bad start_sample '{}': {e}", &record[0])))?;
        let state = record[1].parse::<HeartState>().map_err(|m| parse_err(line, m))?;
        entries.push((start, state));
    }
    StateSequence::new(entries)
}

pub fn write_annotations(path: impl AsRef<Path>, states: &StateSequence) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut text = String::from("start_sample,state\n");
    for &(s, st) in states.entries() {
        text.push_str(&format!("{s},{st}\n"));
    }
    write_atomic(path, text.as_bytes()).map_err(|e| DataError::io(path, e))
}
