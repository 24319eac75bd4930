//! Raw-data files: interleaved 32-bit little-endian float I/Q pairs plus a
//! JSON sidecar header describing the shape.
//!
//! Simulated datasets may carry their generating parameters in the header's
//! `ground_truth` field. That field is quarantined: the pipeline never reads
//! it, it exists so test harnesses and oracles can find the truth next to
//! the data.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use std::fs;
use std::path::Path;

use crate::dsp::{ComplexMatrix, ComplexVector};
use crate::error::{Error, Result};

pub const SAMPLE_FORMAT: &str = "cf32";
pub const ENDIANNESS: &str = "little";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RawHeader {
    pub sample_format: String,
    pub endianness: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    /// Generating parameters of simulated data. Ground-truth only: blind
    /// operations must never look at this.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<serde_json::Value>,
}

#[derive(Debug, Clone)]
pub enum Payload {
    Stream(ComplexVector),
    Matrix(ComplexMatrix),
}

impl Payload {
    pub fn sample_count(&self) -> usize {
        match self {
            Payload::Stream(v) => v.len(),
            Payload::Matrix(m) => m.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RawDataset {
    pub payload: Payload,
    pub header: RawHeader,
}

/// Decode a raw dataset. The header decides the shape: `length` makes a 1-D
/// stream, `rows`+`cols` a 2-D matrix.
pub fn read_raw(data_path: &Path, header_path: &Path) -> Result<RawDataset> {
    let header_text = fs::read_to_string(header_path)?;
    let header: RawHeader = serde_json::from_str(&header_text)?;
    if header.sample_format != SAMPLE_FORMAT {
        return Err(Error::UnsupportedFormat(format!(
            "sample_format '{}' (expected '{SAMPLE_FORMAT}')",
            header.sample_format
        )));
    }
    if header.endianness != ENDIANNESS {
        return Err(Error::UnsupportedFormat(format!(
            "endianness '{}' (expected '{ENDIANNESS}')",
            header.endianness
        )));
    }
    let expected = match (header.length, header.rows, header.cols) {
        (Some(n), None, None) if n > 0 => n,
        (None, Some(r), Some(c)) if r > 0 && c > 0 => r * c,
        _ => {
            return Err(Error::CorruptFile(
                "header must carry either a positive 'length' or positive 'rows' and 'cols'".into(),
            ))
        }
    };
    let bytes = fs::read(data_path)?;
    if bytes.len() != expected * 8 {
        return Err(Error::CorruptFile(format!(
            "{} holds {} bytes, expected {} for {} complex samples",
            data_path.display(),
            bytes.len(),
            expected * 8,
            expected
        )));
    }
    let mut samples = Vec::with_capacity(expected);
    for pair in bytes.chunks_exact(8) {
        let re = f32::from_le_bytes([pair[0], pair[1], pair[2], pair[3]]) as f64;
        let im = f32::from_le_bytes([pair[4], pair[5], pair[6], pair[7]]) as f64;
        samples.push(Complex64::new(re, im));
    }
    let payload = if header.length.is_some() {
        Payload::Stream(Array1::from_vec(samples))
    } else {
        let (r, c) = (header.rows.unwrap(), header.cols.unwrap());
        Payload::Matrix(
            Array2::from_shape_vec((r, c), samples)
                .map_err(|e| Error::CorruptFile(e.to_string()))?,
        )
    };
    Ok(RawDataset { payload, header })
}

fn encode(samples: impl Iterator<Item = Complex64>, count: usize) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(count * 8);
    for z in samples {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    bytes
}

/// Write a 1-D stream plus its header.
pub fn write_raw_stream(
    v: &ComplexVector,
    data_path: &Path,
    header_path: &Path,
    ground_truth: Option<serde_json::Value>,
) -> Result<()> {
    fs::write(data_path, encode(v.iter().copied(), v.len()))?;
    let header = RawHeader {
        sample_format: SAMPLE_FORMAT.into(),
        endianness: ENDIANNESS.into(),
        length: Some(v.len()),
        rows: None,
        cols: None,
        ground_truth,
    };
    fs::write(header_path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Write a 2-D matrix (row-major) plus its header.
pub fn write_raw_matrix(
    m: &ComplexMatrix,
    data_path: &Path,
    header_path: &Path,
    ground_truth: Option<serde_json::Value>,
) -> Result<()> {
    fs::write(data_path, encode(m.iter().copied(), m.len()))?;
    let header = RawHeader {
        sample_format: SAMPLE_FORMAT.into(),
        endianness: ENDIANNESS.into(),
        length: None,
        rows: Some(m.nrows()),
        cols: Some(m.ncols()),
        ground_truth,
    };
    fs::write(header_path, serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn format_definition_two_samples() {
        let dir = tempdir().unwrap();
        let data = dir.path().join("x.cf32");
        let header = dir.path().join("x.json");
        let v = Array1::from_vec(vec![Complex64::new(1.0, 2.0), Complex64::new(3.0, 4.0)]);
        write_raw_stream(&v, &data, &header, None).unwrap();
        let bytes = fs::read(&data).unwrap();
        let want: Vec<u8> = [1.0f32, 2.0, 3.0, 4.0].iter().flat_map(|f| f.to_le_bytes()).collect();
        assert_eq!(bytes, want);
        let back = read_raw(&data, &header).unwrap();
        match back.payload {
            Payload::Stream(s) => assert_eq!(s, v),
            _ => panic!("expected stream"),
        }
    }

    #[test]
    fn size_mismatch_is_corrupt() {
        let dir = tempdir().unwrap();
        let data = dir.path().join("x.cf32");
        let header = dir.path().join("x.json");
        fs::write(&data, [0u8; 5 * 8]).unwrap();
        fs::write(
            &header,
            r#"{"sample_format":"cf32","endianness":"little","rows":2,"cols":3}"#,
        )
        .unwrap();
        assert!(matches!(read_raw(&data, &header), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn empty_file_is_corrupt() {
        let dir = tempdir().unwrap();
        let data = dir.path().join("x.cf32");
        let header = dir.path().join("x.json");
        fs::write(&data, []).unwrap();
        fs::write(&header, r#"{"sample_format":"cf32","endianness":"little","length":4}"#).unwrap();
        assert!(matches!(read_raw(&data, &header), Err(Error::CorruptFile(_))));
    }

    #[test]
    fn unknown_format_is_unsupported() {
        let dir = tempdir().unwrap();
        let data = dir.path().join("x.cf32");
        let header = dir.path().join("x.json");
        fs::write(&data, [0u8; 8]).unwrap();
        fs::write(&header, r#"{"sample_format":"ci16","endianness":"little","length":1}"#).unwrap();
        assert!(matches!(read_raw(&data, &header), Err(Error::UnsupportedFormat(_))));
        fs::write(&header, r#"{"sample_format":"cf32","endianness":"big","length":1}"#).unwrap();
        assert!(matches!(read_raw(&data, &header), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn matrix_roundtrip_is_bit_exact() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let dir = tempdir().unwrap();
        let data = dir.path().join("m.cf32");
        let header = dir.path().join("m.json");
        let m = Array2::from_shape_fn((13, 7), |_| {
            Complex64::new(rng.gen::<f32>() as f64, rng.gen::<f32>() as f64)
        });
        write_raw_matrix(&m, &data, &header, Some(serde_json::json!({"p": 128.5}))).unwrap();
        let first = fs::read(&data).unwrap();
        let back = read_raw(&data, &header).unwrap();
        match &back.payload {
            Payload::Matrix(got) => assert_eq!(got, &m),
            _ => panic!("expected matrix"),
        }
        // write what was read: byte-identical
        let data2 = dir.path().join("m2.cf32");
        if let Payload::Matrix(got) = back.payload {
            write_raw_matrix(&got, &data2, &dir.path().join("m2.json"), None).unwrap();
        }
        assert_eq!(first, fs::read(&data2).unwrap());
    }
}
