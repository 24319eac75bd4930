//! Truncated SVD / principal-component extraction by block power iteration.
//!
//! Only small ranks (D = 1..15) are ever needed, across thousands of data
//! blocks, so a full dense SVD per block would be wasted work. The engine
//! iterates an orthonormal basis of the smaller side's dominant subspace and
//! finishes with a one-sided Jacobi SVD of the small projected factor.
//!
//! Determinism: initial vectors are derived from the matrix entries (largest
//! columns/rows), never from an RNG, so repeated runs are bit-stable.

use ndarray::{Array1, Array2, ArrayView2};
use num_complex::Complex64;

use crate::dsp::{ComplexMatrix, ComplexVector};
use crate::error::{Error, Result};

const MAX_ITER: usize = 500;
const ANGLE_TOL: f64 = 1e-10;
// extra iterated directions so near-tied singular values across the rank
// boundary rotate inside the iterated span instead of stalling convergence
const GUARD_VECTORS: usize = 3;

/// One singular triplet: `sigma * u * v^H` is a rank-1 slice of the matrix.
#[derive(Debug, Clone)]
pub struct SvdTriplet {
    /// Non-negative singular value.
    pub sigma: f64,
    /// Unit-norm left (slow-time) factor.
    pub u: ComplexVector,
    /// Unit-norm right (fast-time) factor.
    pub v: ComplexVector,
}

/// Descending, non-negative eigenvalues of `M M^H` (squared singular values).
#[derive(Debug, Clone)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
}

impl EigenSpectrum {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Best rank-`d` approximation of `m` in Frobenius norm, plus its `d`
/// singular triplets in descending sigma order.
pub fn principal_component(
    m: &ArrayView2<Complex64>,
    d: usize,
) -> Result<(ComplexMatrix, Vec<SvdTriplet>)> {
    let triplets = truncated_svd(m, d)?;
    let (rows, cols) = (m.nrows(), m.ncols());
    let mut approx: ComplexMatrix = Array2::default((rows, cols));
    for t in &triplets {
        for i in 0..rows {
            let ui = t.u[i] * t.sigma;
            for j in 0..cols {
                approx[[i, j]] += ui * t.v[j].conj();
            }
        }
    }
    Ok((approx, triplets))
}

/// The `top_k` largest eigenvalues of `M M^H`, descending, clamped at zero.
pub fn eigenspectrum(m: &ArrayView2<Complex64>, top_k: usize) -> Result<EigenSpectrum> {
    let triplets = truncated_svd(m, top_k)?;
    Ok(EigenSpectrum {
        values: triplets.iter().map(|t| (t.sigma * t.sigma).max(0.0)).collect(),
    })
}

/// Top-`d` singular values only (no factor vectors kept by the caller).
pub fn top_singular_values(m: &ArrayView2<Complex64>, d: usize) -> Result<Vec<f64>> {
    Ok(truncated_svd(m, d)?.into_iter().map(|t| t.sigma).collect())
}

/// Largest squared singular value; the PCM objective for D = 1.
pub fn dominant_sigma_sq(m: &ArrayView2<Complex64>) -> Result<f64> {
    Ok(top_singular_values(m, 1)?[0].powi(2))
}

// out = M x
fn gemv(m: &ArrayView2<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    for (i, row) in m.rows().into_iter().enumerate() {
        let mut acc = Complex64::default();
        for (a, b) in row.iter().zip(x.iter()) {
            acc += a * b;
        }
        out[i] = acc;
    }
}

// out = M^H x
fn gemv_h(m: &ArrayView2<Complex64>, x: &[Complex64], out: &mut [Complex64]) {
    out.fill(Complex64::default());
    for (i, row) in m.rows().into_iter().enumerate() {
        let c = x[i];
        for (o, a) in out.iter_mut().zip(row.iter()) {
            *o += a.conj() * c;
        }
    }
}

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn dot_h(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    // <a, b> = a^H b
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Modified Gram-Schmidt on `cols`, in place. Columns that collapse are
/// replaced by canonical basis vectors (deterministic fill) so the basis
/// always has full rank.
fn orthonormalize(cols: &mut [Vec<Complex64>], scale: f64) {
    let n = cols[0].len();
    let tol = 1e-13 * scale.max(f64::MIN_POSITIVE);
    for d in 0..cols.len() {
        for e in 0..d {
            let (head, tail) = cols.split_at_mut(d);
            let proj = dot_h(&head[e], &tail[0]);
            for (t, h) in tail[0].iter_mut().zip(head[e].iter()) {
                *t -= proj * h;
            }
        }
        let nrm = norm(&cols[d]);
        if nrm > tol {
            let inv = 1.0 / nrm;
            for z in cols[d].iter_mut() {
                *z *= inv;
            }
        } else {
            // deterministic canonical fill, re-orthogonalized
            let mut filled = false;
            for basis in 0..n {
                let mut cand = vec![Complex64::default(); n];
                cand[basis] = Complex64::new(1.0, 0.0);
                for e in 0..d {
                    let proj = dot_h(&cols[e], &cand);
                    for (t, h) in cand.iter_mut().zip(cols[e].iter()) {
                        *t -= proj * h;
                    }
                }
                let cn = norm(&cand);
                if cn > 0.5 {
                    let inv = 1.0 / cn;
                    for z in cand.iter_mut() {
                        *z *= inv;
                    }
                    cols[d] = cand;
                    filled = true;
                    break;
                }
            }
            if !filled {
                // d exceeds the space dimension; cannot happen for d <= n
                cols[d].fill(Complex64::default());
            }
        }
    }
}

/// One-sided Jacobi SVD of the thin matrix `t` (n x d, d small): rotates
/// the columns of `t` until pairwise orthogonal and returns (sigmas,
/// normalized columns), sorted by sigma descending.
fn jacobi_svd_thin(t: &mut [Vec<Complex64>]) -> (Vec<f64>, Vec<Vec<Complex64>>) {
    let d = t.len();

    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                let a: f64 = t[p].iter().map(|z| z.norm_sqr()).sum();
                let b: f64 = t[q].iter().map(|z| z.norm_sqr()).sum();
                let c = dot_h(&t[p], &t[q]);
                let cn = c.norm();
                if cn <= 1e-15 * (a * b).sqrt() || cn == 0.0 {
                    continue;
                }
                off = off.max(cn / (a * b).sqrt().max(f64::MIN_POSITIVE));
                let phi = c.arg();
                let tau = (b - a) / (2.0 * cn);
                let tt = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let tt = if tau == 0.0 { 1.0 } else { tt };
                let cs = 1.0 / (1.0 + tt * tt).sqrt();
                let sn = cs * tt;
                let em = Complex64::from_polar(1.0, -phi);
                let ep = Complex64::from_polar(1.0, phi);
                // [x', y'] = [x, y] * [[cs, sn*e^{j phi}], [-sn*e^{-j phi}, cs]]
                for i in 0..t[p].len() {
                    let x = t[p][i];
                    let y = t[q][i];
                    t[p][i] = x * cs - y * em * sn;
                    t[q][i] = x * ep * sn + y * cs;
                }
            }
        }
        if off < 1e-14 {
            break;
        }
    }

    let mut sigmas: Vec<f64> = t.iter().map(|col| norm(col)).collect();
    // sort descending, carrying columns along
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| sigmas[j].total_cmp(&sigmas[i]));
    let mut t_sorted: Vec<Vec<Complex64>> = order.iter().map(|&i| t[i].clone()).collect();
    sigmas = order.iter().map(|&i| sigmas[i]).collect();

    let scale = sigmas.first().copied().unwrap_or(0.0);
    for (col, &s) in t_sorted.iter_mut().zip(sigmas.iter()) {
        if s > 1e-300 {
            let inv = 1.0 / s;
            for z in col.iter_mut() {
                *z *= inv;
            }
        } else {
            col.fill(Complex64::default());
        }
    }
    // zero-sigma columns get canonical fills so factors stay unit norm
    orthonormalize(&mut t_sorted, scale.max(1.0));
    (sigmas, t_sorted)
}

fn truncated_svd(m: &ArrayView2<Complex64>, d: usize) -> Result<Vec<SvdTriplet>> {
    let (rows, cols) = (m.nrows(), m.ncols());
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("truncated_svd: empty matrix".into()));
    }
    if d == 0 || d > rows.min(cols) {
        return Err(Error::InvalidArgument(format!(
            "truncated_svd: rank {d} out of range for {rows}x{cols}"
        )));
    }
    let fro: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let iterate_left = rows <= cols;
    let k = rows.min(cols);

    // All-zero matrix: zero sigmas with canonical factors.
    if fro == 0.0 {
        let mut us: Vec<Vec<Complex64>> = Vec::new();
        let mut vs: Vec<Vec<Complex64>> = Vec::new();
        for i in 0..d {
            let mut u = vec![Complex64::default(); rows];
            u[i % rows] = Complex64::new(1.0, 0.0);
            us.push(u);
            let mut v = vec![Complex64::default(); cols];
            v[i % cols] = Complex64::new(1.0, 0.0);
            vs.push(v);
        }
        return Ok(us
            .into_iter()
            .zip(vs)
            .map(|(u, v)| SvdTriplet {
                sigma: 0.0,
                u: Array1::from_vec(u),
                v: Array1::from_vec(v),
            })
            .collect());
    }

    let d_eff = (d + GUARD_VECTORS).min(k);

    // Data-derived initial basis: the strongest columns (left iteration)
    // or conjugated rows (right iteration).
    let mut q: Vec<Vec<Complex64>> = {
        let axis_count = if iterate_left { cols } else { rows };
        let mut norms: Vec<(usize, f64)> = (0..axis_count)
            .map(|i| {
                let e: f64 = if iterate_left {
                    m.column(i).iter().map(|z| z.norm_sqr()).sum()
                } else {
                    m.row(i).iter().map(|z| z.norm_sqr()).sum()
                };
                (i, e)
            })
            .collect();
        norms.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        norms
            .iter()
            .take(d_eff)
            .map(|&(i, _)| {
                if iterate_left {
                    m.column(i).iter().copied().collect()
                } else {
                    m.row(i).iter().map(|z| z.conj()).collect()
                }
            })
            .collect()
    };
    while q.len() < d_eff {
        q.push(vec![Complex64::default(); k]);
    }
    orthonormalize(&mut q, fro);

    let other = rows.max(cols).max(k);
    let mut scratch = vec![Complex64::default(); other];
    let mut sig_est = vec![0.0f64; d_eff];
    let mut converged = false;
    let mut last_change = f64::INFINITY;

    for _iter in 0..MAX_ITER {
        // z_d = A q_d, with A = M M^H (left) or M^H M (right)
        let mut z: Vec<Vec<Complex64>> = Vec::with_capacity(d_eff);
        for (idx, qd) in q.iter().enumerate() {
            let mut out = vec![Complex64::default(); k];
            if iterate_left {
                gemv_h(m, qd, &mut scratch[..cols]);
                sig_est[idx] = norm(&scratch[..cols]);
                gemv(m, &scratch[..cols], &mut out);
            } else {
                gemv(m, qd, &mut scratch[..rows]);
                sig_est[idx] = norm(&scratch[..rows]);
                gemv_h(m, &scratch[..rows], &mut out);
            }
            z.push(out);
        }
        orthonormalize(&mut z, fro * fro);

        // sigma-weighted subspace angle change over the requested leading
        // directions, measured against the whole iterated span: negligible
        // directions and rotations inside near-tied clusters must not stall
        // convergence
        let sig_max_sq = sig_est.iter().fold(0.0f64, |a, &b| a.max(b * b));
        let mut change = 0.0f64;
        for (idx, zd) in z.iter().take(d).enumerate() {
            let mut resid = zd.clone();
            for qe in q.iter() {
                let proj = dot_h(qe, &resid);
                for (r, h) in resid.iter_mut().zip(qe.iter()) {
                    *r -= proj * h;
                }
            }
            let w = if sig_max_sq > 0.0 {
                (sig_est[idx] * sig_est[idx]) / sig_max_sq
            } else {
                0.0
            };
            change = change.max(w * norm(&resid));
        }
        q = z;
        last_change = change;
        if change < ANGLE_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence { residual: last_change });
    }

    // Project and finish with an exact small SVD.
    let mut t: Vec<Vec<Complex64>> = q
        .iter()
        .map(|qd| {
            let mut out = vec![Complex64::default(); other];
            if iterate_left {
                gemv_h(m, qd, &mut out[..cols]);
                out.truncate(cols);
            } else {
                gemv(m, qd, &mut out[..rows]);
                out.truncate(rows);
            }
            out
        })
        .collect();
    let (sigmas, l_cols) = jacobi_svd_thin(&mut t);

    // Combine, keeping only the requested d leading triplets.
    let mut triplets = Vec::with_capacity(d);
    for dd in 0..d {
        let mut combo = vec![Complex64::default(); k];
        // The Q-side factor is recomputed directly: for left iteration
        // u = M v / sigma, for right iteration v = M^H u / sigma. This is
        // one extra half power step, so the pair is always consistent.
        let s = sigmas[dd];
        let (u, v) = if iterate_left {
            let v = l_cols[dd].clone();
            if s > 1e-300 * fro.max(1.0) {
                gemv(m, &v, &mut combo);
                let inv = 1.0 / s;
                for z in combo.iter_mut() {
                    *z *= inv;
                }
            } else {
                combo.fill(Complex64::default());
                combo[dd % k] = Complex64::new(1.0, 0.0);
            }
            (combo.clone(), v)
        } else {
            let u = l_cols[dd].clone();
            if s > 1e-300 * fro.max(1.0) {
                gemv_h(m, &u, &mut combo);
                let inv = 1.0 / s;
                for z in combo.iter_mut() {
                    *z *= inv;
                }
            } else {
                combo.fill(Complex64::default());
                combo[dd % k] = Complex64::new(1.0, 0.0);
            }
            (u, combo.clone())
        };
        triplets.push(SvdTriplet {
            sigma: s,
            u: Array1::from_vec(u),
            v: Array1::from_vec(v),
        });
    }
    Ok(triplets)
}
