//! Complex-matrix signal primitives shared by every stage of the pipeline:
//! FFT-based correlation, fractional circular shift, and spectral utilities.
//!
//! All operations here are pure functions over immutable inputs. Internal
//! parallelism writes disjoint rows/columns only, so results are independent
//! of the worker count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;
use std::cell::RefCell;
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// 1-D complex baseband signal, one sample per fast-time tick.
pub type ComplexVector = Array1<Complex64>;
/// 2-D complex raw data: rows are slow time (pulses), columns fast time.
pub type ComplexMatrix = Array2<Complex64>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward FFT.
pub fn fft_forward(buf: &mut [Complex64]) {
    if buf.len() < 2 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()).process(buf));
}

/// In-place inverse FFT, scaled by 1/N so that `ifft(fft(x)) == x`.
pub fn fft_inverse(buf: &mut [Complex64]) {
    let n = buf.len();
    if n < 2 {
        return;
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(buf));
    let scale = 1.0 / n as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Smallest 5-smooth integer >= n. Keeps padded FFT lengths fast without
/// changing results (padding only interpolates the spectrum).
pub fn good_fft_size(n: usize) -> usize {
    assert!(n > 0);
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < best {
        let mut p23 = p2;
        while p23 < best {
            let mut p235 = p23;
            while p235 < best {
                if p235 >= n {
                    best = best.min(p235);
                    break;
                }
                match p235.checked_mul(5) {
                    Some(v) => p235 = v,
                    None => break,
                }
            }
            match p23.checked_mul(3) {
                Some(v) => p23 = v,
                None => break,
            }
        }
        match p2.checked_mul(2) {
            Some(v) => p2 = v,
            None => break,
        }
    }
    best
}

/// Normalized sinc: sin(pi x) / (pi x), with sinc(0) = 1.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Circularly delay `v` by `delta` samples (possibly fractional) via a
/// frequency-domain linear phase ramp with signed (centered) bin indexing,
/// so negative-frequency content of complex baseband data stays in place.
pub fn fractional_shift(v: &ComplexVector, delta: f64) -> Result<ComplexVector> {
    if v.is_empty() {
        return Err(Error::InvalidArgument("fractional_shift: empty input".into()));
    }
    if !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "fractional_shift: non-finite delta {delta}"
        )));
    }
    let n = v.len();
    if n == 1 {
        return Ok(v.clone());
    }
    let mut buf: Vec<Complex64> = v.to_vec();
    fft_forward(&mut buf);
    let nf = n as f64;
    for (k, x) in buf.iter_mut().enumerate() {
        // signed bin: 0..N/2-1 stay, N/2..N-1 map to negative frequencies
        let ks = if k <= (n - 1) / 2 { k as isize } else { k as isize - n as isize };
        let phase = -2.0 * PI * ks as f64 * delta / nf;
        *x *= Complex64::from_polar(1.0, phase);
    }
    fft_inverse(&mut buf);
    Ok(Array1::from_vec(buf))
}

fn fft2_in_place(m: &mut Array2<Complex64>, inverse: bool) {
    use ndarray::parallel::prelude::*;
    // rows
    m.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        let buf = row.as_slice_mut().expect("row not contiguous");
        if inverse {
            fft_inverse(buf);
        } else {
            fft_forward(buf);
        }
    });
    // columns, via transpose so each transform runs on a contiguous slice
    let mut t = m.t().as_standard_layout().into_owned();
    t.axis_iter_mut(Axis(0)).into_par_iter().for_each(|mut row| {
        let buf = row.as_slice_mut().expect("row not contiguous");
        if inverse {
            fft_inverse(buf);
        } else {
            fft_forward(buf);
        }
    });
    m.assign(&t.t());
}

/// 2-D cross-correlation of `y` with a conjugated, coordinate-reversed
/// kernel `r`, zero-padded FFT implementation, output cropped to `y`'s size.
/// Output pixel (p, q) holds the correlation at lag (p - anchor_row,
/// q - anchor_col); `xcorr2_same` uses the kernel's geometric center
/// (rows/2, cols/2) as the anchor.
pub fn xcorr2_same(y: &ComplexMatrix, r: &ComplexMatrix) -> Result<ComplexMatrix> {
    let anchor = (r.nrows() / 2, r.ncols() / 2);
    xcorr2_anchored(y, r, anchor)
}

/// Same as [`xcorr2_same`] with an explicit anchor inside the kernel.
pub fn xcorr2_anchored(
    y: &ComplexMatrix,
    r: &ComplexMatrix,
    anchor: (usize, usize),
) -> Result<ComplexMatrix> {
    let (ly, lx) = (y.nrows(), y.ncols());
    let (mr, mc) = (r.nrows(), r.ncols());
    if mr == 0 || mc == 0 || ly == 0 || lx == 0 {
        return Err(Error::InvalidArgument("xcorr2: empty input".into()));
    }
    if mr > ly || mc > lx {
        return Err(Error::InvalidArgument(format!(
            "xcorr2: kernel {mr}x{mc} larger than data {ly}x{lx}"
        )));
    }
    if anchor.0 >= mr || anchor.1 >= mc {
        return Err(Error::InvalidArgument("xcorr2: anchor outside kernel".into()));
    }
    let nr = good_fft_size(ly + mr - 1);
    let nc = good_fft_size(lx + mc - 1);

    let mut fy = Array2::zeros((nr, nc));
    fy.slice_mut(ndarray::s![..ly, ..lx]).assign(y);
    fft2_in_place(&mut fy, false);

    let mut fr = Array2::zeros((nr, nc));
    fr.slice_mut(ndarray::s![..mr, ..mc]).assign(r);
    fft2_in_place(&mut fr, false);

    // spectrum of the linear correlation: FY .* conj(FR)
    Zip::from(&mut fy).and(&fr).for_each(|a, &b| *a *= b.conj());
    fft2_in_place(&mut fy, true);

    // crop: out[p, q] = corr at lag (p - ar, q - ac); negative lags wrap
    let (ar, ac) = (anchor.0 as isize, anchor.1 as isize);
    let mut out = Array2::zeros((ly, lx));
    for p in 0..ly {
        let sr = (p as isize - ar).rem_euclid(nr as isize) as usize;
        for q in 0..lx {
            let sc = (q as isize - ac).rem_euclid(nc as isize) as usize;
            out[[p, q]] = fy[[sr, sc]];
        }
    }
    Ok(out)
}

/// Correlate every row of `y` with the conjugate-reversed kernel `r`,
/// same-size output, anchor at the kernel's geometric center.
pub fn xcorr_rows(y: &ComplexMatrix, r: &ComplexVector) -> Result<ComplexMatrix> {
    xcorr_rows_anchored(y, r, r.len() / 2)
}

/// Row-wise correlation with an explicit kernel anchor.
pub fn xcorr_rows_anchored(
    y: &ComplexMatrix,
    r: &ComplexVector,
    anchor: usize,
) -> Result<ComplexMatrix> {
    use ndarray::parallel::prelude::*;
    let lx = y.ncols();
    let m = r.len();
    if m == 0 || lx == 0 || y.nrows() == 0 {
        return Err(Error::InvalidArgument("xcorr_rows: empty input".into()));
    }
    if m > lx {
        return Err(Error::InvalidArgument(format!(
            "xcorr_rows: kernel length {m} exceeds row length {lx}"
        )));
    }
    if anchor >= m {
        return Err(Error::InvalidArgument("xcorr_rows: anchor outside kernel".into()));
    }
    let n = good_fft_size(lx + m - 1);
    let mut fr = vec![Complex64::default(); n];
    fr[..m].copy_from_slice(r.as_slice().expect("kernel not contiguous"));
    fft_forward(&mut fr);

    let mut out = Array2::zeros((y.nrows(), lx));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(y.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut orow, yrow)| {
            let c = xcorr1_prepared(&yrow, &fr, n, anchor);
            orow.assign(&c);
        });
    Ok(out)
}

/// 1-D same-size correlation of `y` with kernel spectrum already computed.
fn xcorr1_prepared(
    y: &ArrayView1<Complex64>,
    fr: &[Complex64],
    n: usize,
    anchor: usize,
) -> Array1<Complex64> {
    let lx = y.len();
    let mut fy = vec![Complex64::default(); n];
    for (dst, src) in fy.iter_mut().zip(y.iter()) {
        *dst = *src;
    }
    fft_forward(&mut fy);
    for (a, b) in fy.iter_mut().zip(fr.iter()) {
        *a *= b.conj();
    }
    fft_inverse(&mut fy);
    let mut out = Array1::default(lx);
    for p in 0..lx {
        let s = (p as isize - anchor as isize).rem_euclid(n as isize) as usize;
        out[p] = fy[s];
    }
    out
}

/// 1-D same-size correlation with an explicit anchor (azimuth compression).
pub fn xcorr1_anchored(
    y: &ArrayView1<Complex64>,
    r: &ArrayView1<Complex64>,
    anchor: usize,
) -> Result<Array1<Complex64>> {
    let lx = y.len();
    let m = r.len();
    if m == 0 || lx == 0 {
        return Err(Error::InvalidArgument("xcorr1: empty input".into()));
    }
    if m > lx {
        return Err(Error::InvalidArgument(format!(
            "xcorr1: kernel length {m} exceeds signal length {lx}"
        )));
    }
    if anchor >= m {
        return Err(Error::InvalidArgument("xcorr1: anchor outside kernel".into()));
    }
    let n = good_fft_size(lx + m - 1);
    let mut fr = vec![Complex64::default(); n];
    for (dst, src) in fr.iter_mut().zip(r.iter()) {
        *dst = *src;
    }
    fft_forward(&mut fr);
    Ok(xcorr1_prepared(y, &fr, n, anchor))
}

/// Frobenius norm of a complex matrix view.
pub fn fro_norm(m: &ArrayView2<Complex64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Total energy (squared Frobenius norm / squared l2 norm).
pub fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
