//! 16-bit grayscale PGM output with dB scaling.
//!
//! PGM (P5, maxval 65535) is the mandatory bit-exact image format: the
//! encoding below is fully deterministic, so identical images produce
//! identical bytes.

use ndarray::Array2;
use std::path::Path;

use crate::azfocus::SarImage;
use crate::error::{Error, Result};

/// Encode a magnitude image: dB relative to the peak, clipped to
/// [-dynamic_range_db, 0], mapped linearly onto 0..=65535.
pub fn encode_pgm(magnitude: &Array2<f64>, dynamic_range_db: f64) -> Result<Vec<u8>> {
    if !(dynamic_range_db > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "dynamic range must be positive, got {dynamic_range_db}"
        )));
    }
    let (rows, cols) = magnitude.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("cannot encode an empty image".into()));
    }
    let peak = magnitude.iter().cloned().fold(0.0f64, f64::max);
    let mut out = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    out.reserve(rows * cols * 2);
    for &m in magnitude.iter() {
        let db = if peak > 0.0 && m > 0.0 {
            (20.0 * (m / peak).log10()).clamp(-dynamic_range_db, 0.0)
        } else {
            -dynamic_range_db
        };
        let v = ((db + dynamic_range_db) / dynamic_range_db * 65535.0).round() as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    Ok(out)
}

/// Write the image's magnitude as PGM.
pub fn write_image(img: &SarImage, path: &Path, dynamic_range_db: f64) -> Result<()> {
    let bytes = encode_pgm(&img.magnitude, dynamic_range_db)?;
    std::fs::write(path, bytes)?;
    Ok(())
}
