//! Reference-echo estimation by principal component maximization: segment
//! the raw data into blocks, normalize each block's energy, and pick the
//! block whose rank-D principal component keeps the most of it.
//!
//! Normalization equalizes block energy so non-stationary clutter cannot
//! steer the selection toward strong-clutter regions; the returned echo is
//! the principal component of the *un-normalized* winning block, so the
//! matched-filter kernel keeps the data's own scale.

use ndarray::parallel::prelude::*;
use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use std::io::Write;

use crate::dsp::{fro_norm, ComplexMatrix};
use crate::error::{Error, Result};
use crate::lowrank::{self, SvdTriplet};

/// Block segmentation layout. Strides may not exceed the block dimensions,
/// so the lattice leaves no holes.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct BlockGrid {
    pub block_rows: usize,
    pub block_cols: usize,
    pub stride_rows: usize,
    pub stride_cols: usize,
}

impl BlockGrid {
    pub fn new(block_rows: usize, block_cols: usize, stride_rows: usize, stride_cols: usize) -> Result<Self> {
        if block_rows == 0 || block_cols == 0 || stride_rows == 0 || stride_cols == 0 {
            return Err(Error::InvalidArgument("block grid: zero dimension".into()));
        }
        if stride_rows > block_rows || stride_cols > block_cols {
            return Err(Error::InvalidArgument(
                "block grid: stride larger than block leaves uncovered samples".into(),
            ));
        }
        Ok(BlockGrid { block_rows, block_cols, stride_rows, stride_cols })
    }

    /// Square blocks with stride equal to the block size (no overlap).
    pub fn tiled(size: usize) -> Result<Self> {
        Self::new(size, size, size, size)
    }
}

/// One scored block: grid position and principal-component energy.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BlockScore {
    pub index: (usize, usize),
    pub g: f64,
}

/// Diagnostic map of every block's score (the selection objective).
#[derive(Debug, Clone)]
pub struct ScoreMap {
    /// data-row anchor of each block-grid row
    pub anchor_rows: Vec<usize>,
    /// data-column anchor of each block-grid column
    pub anchor_cols: Vec<usize>,
    pub g: Array2<f64>,
}

impl ScoreMap {
    /// CSV rows of (row, col, g) over the block grid.
    pub fn to_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,g")?;
        for ((i, j), g) in self.g.indexed_iter() {
            writeln!(out, "{i},{j},{g:.12e}")?;
        }
        Ok(())
    }
}

/// The estimated reference point echo.
#[derive(Debug, Clone)]
pub struct ReferenceEcho {
    /// Rank-D reconstruction of the winning block (un-normalized scale).
    pub matrix: ComplexMatrix,
    /// Its singular triplets, descending.
    pub triplets: Vec<SvdTriplet>,
    /// Winning block position and the echo's own principal energy
    /// (`g == ||matrix||_F^2`).
    pub source: BlockScore,
    /// Frobenius norm of the winning block before normalization
    /// (after mean removal).
    pub raw_norm: f64,
    /// Envelope center of the echo inside `matrix`: argmax of |u1| and
    /// |v1|. Matched filtering anchored here maps the reference scatterer
    /// back onto its own data cell.
    pub anchor: (usize, usize),
    /// Top-left corner of the winning block in data coordinates.
    pub block_origin: (usize, usize),
}

/// A segmented block: grid index, top-left corner, and a borrowed view.
pub struct Block<'a> {
    pub index: (usize, usize),
    pub origin: (usize, usize),
    pub view: ArrayView2<'a, Complex64>,
}

fn axis_anchors(n: usize, block: usize, stride: usize) -> Vec<usize> {
    let mut anchors = Vec::new();
    let mut pos = 0usize;
    while pos + block <= n {
        anchors.push(pos);
        pos += stride;
    }
    // trailing partial block re-anchored flush to the edge
    let flush = n - block;
    if anchors.last() != Some(&flush) {
        anchors.push(flush);
    }
    anchors
}

/// Enumerate all blocks, row-major. Lattice-aligned full blocks first along
/// each axis; a trailing block flush to the data edge covers the remainder,
/// so every sample belongs to at least one block and all blocks share the
/// same dimensions.
pub fn segment_blocks<'a>(y: &'a ComplexMatrix, grid: &BlockGrid) -> Result<Vec<Block<'a>>> {
    if grid.block_rows > y.nrows() || grid.block_cols > y.ncols() {
        return Err(Error::InvalidArgument(format!(
            "segment_blocks: {}x{} block larger than {}x{} data",
            grid.block_rows,
            grid.block_cols,
            y.nrows(),
            y.ncols()
        )));
    }
    let rows = axis_anchors(y.nrows(), grid.block_rows, grid.stride_rows);
    let cols = axis_anchors(y.ncols(), grid.block_cols, grid.stride_cols);
    let mut blocks = Vec::with_capacity(rows.len() * cols.len());
    for (bi, &r0) in rows.iter().enumerate() {
        for (bj, &c0) in cols.iter().enumerate() {
            blocks.push(Block {
                index: (bi, bj),
                origin: (r0, c0),
                view: y.slice(ndarray::s![r0..r0 + grid.block_rows, c0..c0 + grid.block_cols]),
            });
        }
    }
    Ok(blocks)
}

/// Frobenius-norm normalization of one block.
pub fn normalize_block(b: &ArrayView2<Complex64>) -> Result<ComplexMatrix> {
    let norm = fro_norm(b);
    if norm == 0.0 {
        return Err(Error::DegenerateBlock);
    }
    Ok(b.mapv(|z| z / norm))
}

fn block_mean(b: &ArrayView2<Complex64>) -> Complex64 {
    b.iter().sum::<Complex64>() / b.len() as f64
}

/// Midpoint of the half-power support. An uncompressed chirp factor has a
/// flat envelope, so a bare argmax would land anywhere on the plateau.
fn envelope_center<'a>(values: impl Iterator<Item = &'a Complex64>) -> usize {
    let mags: Vec<f64> = values.map(|z| z.norm()).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return mags.len() / 2;
    }
    let half = 0.5 * max;
    let first = mags.iter().position(|&m| m >= half).unwrap_or(0);
    let last = mags.iter().rposition(|&m| m >= half).unwrap_or(mags.len() - 1);
    (first + last) / 2
}

/// Estimate the reference echo by maximizing the principal-component energy
/// across all (optionally normalized) blocks. Ties break to the lowest
/// row-major index; the per-block complex mean is removed before the
/// decomposition. Returns the winner plus the full score map.
pub fn estimate_reference_echo(
    y: &ComplexMatrix,
    grid: &BlockGrid,
    d: usize,
    normalize: bool,
) -> Result<(ReferenceEcho, ScoreMap)> {
    if d == 0 || d > grid.block_rows.min(grid.block_cols) {
        return Err(Error::InvalidArgument(format!(
            "estimate_reference_echo: rank {d} out of range for {}x{} blocks",
            grid.block_rows, grid.block_cols
        )));
    }
    let blocks = segment_blocks(y, grid)?;
    let n_rows = blocks.last().map(|b| b.index.0 + 1).unwrap_or(0);
    let n_cols = blocks.last().map(|b| b.index.1 + 1).unwrap_or(0);

    let scores: Vec<Option<f64>> = blocks
        .par_iter()
        .map(|block| {
            let mean = block_mean(&block.view);
            let mut b0: ComplexMatrix = block.view.mapv(|z| z - mean);
            let norm = fro_norm(&b0.view());
            if norm == 0.0 {
                return None;
            }
            if normalize {
                b0.mapv_inplace(|z| z / norm);
            }
            let sigmas = lowrank::top_singular_values(&b0.view(), d).ok()?;
            Some(sigmas.iter().map(|s| s * s).sum())
        })
        .collect();

    let mut g_map = Array2::zeros((n_rows, n_cols));
    let mut winner: Option<(usize, f64)> = None;
    for (pos, score) in scores.iter().enumerate() {
        let idx = blocks[pos].index;
        let g = score.unwrap_or(0.0);
        g_map[[idx.0, idx.1]] = g;
        if let Some(s) = score {
            match winner {
                Some((_, best)) if *s <= best => {}
                _ => winner = Some((pos, *s)),
            }
        }
    }
    let (win_pos, _) = winner.ok_or(Error::NoReference)?;
    let win = &blocks[win_pos];

    // principal component of the un-normalized (mean-removed) winner;
    // normalization only steers the selection
    let mean = block_mean(&win.view);
    let b0: ComplexMatrix = win.view.mapv(|z| z - mean);
    let raw_norm = fro_norm(&b0.view());
    let (matrix, triplets) = lowrank::principal_component(&b0.view(), d)?;
    let anchor_row = envelope_center(triplets[0].u.iter());
    let anchor_col = envelope_center(triplets[0].v.iter());
    let g_self = fro_norm(&matrix.view()).powi(2);

    let score_map = ScoreMap {
        anchor_rows: axis_anchors(y.nrows(), grid.block_rows, grid.stride_rows),
        anchor_cols: axis_anchors(y.ncols(), grid.block_cols, grid.stride_cols),
        g: g_map,
    };
    Ok((
        ReferenceEcho {
            matrix,
            triplets,
            source: BlockScore { index: win.index, g: g_self },
            raw_norm,
            anchor: (anchor_row, anchor_col),
            block_origin: win.origin,
        },
        score_map,
    ))
}
