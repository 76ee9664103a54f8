//! 16-bit PCM mono RIFF/WAVE reader and writer.

use std::path::Path;

use super::{DataError, Signal};
use crate::util::write_atomic;

const PCM_FORMAT: u16 = 1;
const FULL_SCALE: f64 = 32768.0;

pub fn load_wav(path: impl AsRef<Path>) -> Result<Signal, DataError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
    read_wav(&bytes)
}

/// Decodes a WAV byte buffer. Samples are scaled by 1/32768 into [-1, 1).
pub fn read_wav(bytes: &[u8]) -> Result<Signal, DataError> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(DataError::WavFormat("missing RIFF/WAVE header".into()));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                DataError::WavFormat(format!(
                    "chunk '{}' overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(DataError::WavFormat("fmt chunk too short".into()));
                }
                let format = u16::from_le_bytes([body[0], body[1]]);
                let channels = u16::from_le_bytes([body[2], body[3]]);
                let rate = u32::from_le_bytes(body[4..8].try_into().unwrap());
                let bits = u16::from_le_bytes([body[14], body[15]]);
                fmt = Some((format, channels, rate, bits));
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) =
        fmt.ok_or_else(|| DataError::WavFormat("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| DataError::WavFormat("no data chunk".into()))?;
    if format != PCM_FORMAT {
        return Err(DataError::WavUnsupported(format!("format code {format}, expected PCM (1)")));
    }
    if channels != 1 {
        return Err(DataError::WavUnsupported(format!("{channels} channels, expected mono")));
    }
    if bits != 16 {
        return Err(DataError::WavUnsupported(format!("{bits}-bit samples, expected 16-bit")));
    }
    if rate == 0 {
        return Err(DataError::WavFormat("sample rate is zero".into()));
    }
    if data.len() % 2 != 0 {
        return Err(DataError::WavFormat("odd-length 16-bit data chunk".into()));
    }
    if data.is_empty() {
        return Err(DataError::WavFormat("empty data chunk".into()));
    }

    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / FULL_SCALE)
        .collect();
    Signal::new(samples, rate)
}

/// Encodes a signal as 16-bit PCM. Values are rounded to the nearest code and
/// clipped to the representable range.
pub fn write_wav(signal: &Signal) -> Vec<u8> {
    let n = signal.len();
    let data_len = (n * 2) as u32;
    let rate = signal.sample_rate_hz();
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&PCM_FORMAT.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &x in signal.samples() {
        let code = (x * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        out.extend_from_slice(&code.to_le_bytes());
    }
    out
}

pub fn save_wav(path: impl AsRef<Path>, signal: &Signal) -> Result<(), DataError> {
    let path = path.as_ref();
    write_atomic(path, &write_wav(signal)).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn header(format: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&format.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * channels as u32 * bits as u32 / 8).to_le_bytes());
        out.extend_from_slice(&(channels * bits / 8).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&(data.len() as u32).to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    #[test]
    fn two_second_file_has_4000_samples() {
        let bytes = header(1, 1, 2000, 16, &vec![0u8; 8000]);
        let sig = read_wav(&bytes).unwrap();
        assert_eq!(sig.len(), 4000);
        assert_eq!(sig.sample_rate_hz(), 2000);
        assert!(sig.samples().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn extreme_codes_scale_by_full_scale() {
        let mut data = Vec::new();
        data.extend_from_slice(&i16::MIN.to_le_bytes());
        data.extend_from_slice(&i16::MAX.to_le_bytes());
        let sig = read_wav(&header(1, 1, 1000, 16, &data)).unwrap();
        assert_eq!(sig.samples()[0], -1.0);
        assert_eq!(sig.samples()[1], 32767.0 / 32768.0);
        assert!((sig.samples()[1] - 0.999_969_482_421_875).abs() < 1e-15);
    }

    #[test]
    fn rejects_stereo_and_24_bit() {
        let stereo = header(1, 2, 1000, 16, &[0; 8]);
        assert!(matches!(read_wav(&stereo), Err(DataError::WavUnsupported(_))));
        let deep = header(1, 1, 1000, 24, &[0; 6]);
        assert!(matches!(read_wav(&deep), Err(DataError::WavUnsupported(_))));
        let float = header(3, 1, 1000, 16, &[0; 4]);
        assert!(matches!(read_wav(&float), Err(DataError::WavUnsupported(_))));
    }

    #[test]
    fn rejects_malformed_headers() {
        assert!(matches!(read_wav(b"RIFX"), Err(DataError::WavFormat(_))));
        let mut truncated = header(1, 1, 1000, 16, &[0; 16]);
        truncated.truncate(50);
        assert!(matches!(read_wav(&truncated), Err(DataError::WavFormat(_))));
        let mut no_data = header(1, 1, 1000, 16, &[]);
        no_data.truncate(36);
        assert!(matches!(read_wav(&no_data), Err(DataError::WavFormat(_))));
    }

    #[test]
    fn skips_unknown_chunks() {
        let mut bytes = header(1, 1, 1000, 16, &[1, 0]);
        // splice a LIST chunk (odd size, padded) between fmt and data
        let list = [b'L', b'I', b'S', b'T', 3, 0, 0, 0, b'a', b'b', b'c', 0];
        let data_at = bytes.len() - 10;
        bytes.splice(data_at..data_at, list);
        let sig = read_wav(&bytes).unwrap();
        assert_eq!(sig.samples(), &[1.0 / 32768.0]);
    }

    proptest! {
        #[test]
        fn quantized_round_trip(samples in prop::collection::vec(-1.0f64..0.9999, 1..400)) {
            let sig = Signal::new(samples, 2000).unwrap();
            let back = read_wav(&write_wav(&sig)).unwrap();
            prop_assert_eq!(back.sample_rate_hz(), 2000);
            for (a, b) in sig.samples().iter().zip(back.samples()) {
                prop_assert!((a - b).abs() <= 1.0 / 32768.0);
            }
        }
    }
}
