//! Signal conditioning ahead of feature assembly: wavelet denoising of
//! channel series, derivative-threshold interference removal, and per-column
//! min-max normalization.
//!
//! The denoiser runs a periodic orthogonal Daubechies-4 (four-tap) filter
//! bank to the requested depth, soft-thresholds every detail coefficient at
//! the universal threshold `σ·√(2·ln n)` (noise scale `σ` estimated from the
//! median absolute finest-level detail), and reconstructs. Interference
//! removal replaces isolated spikes — points whose first difference exceeds
//! the threshold on *both* sides — by linear interpolation between the
//! nearest surviving neighbors, so genuine step changes are preserved.
//! Normalization is per-column min-max with the statistics captured for
//! reuse at inference time.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by the preprocessing utilities.
#[derive(Debug, Error)]
pub enum PreprocessError {
    /// The series is shorter than the transform depth allows.
    #[error("series of length {len} is too short for {levels} level(s); need at least {required}")]
    SeriesTooShort {
        len: usize,
        levels: usize,
        required: usize,
    },
    /// The periodic filter bank needs the length to halve evenly at every level.
    #[error("series length {len} is not divisible by 2^{levels}")]
    UnevenLength { len: usize, levels: usize },
    /// The derivative threshold must be positive.
    #[error("derivative threshold must be positive, got {value}")]
    NonPositiveThreshold { value: f64 },
    /// Interference removal flagged every interior point.
    #[error("series unusable: every interior point was flagged as interference")]
    SeriesUnusable,
    /// Normalization statistics cannot be estimated from fewer than two rows.
    #[error("need at least 2 rows to estimate normalization statistics, got {rows}")]
    TooFewRows { rows: usize },
    /// The matrix rows do not all have the same width.
    #[error("row {row} has {got} columns, expected {expected}")]
    RaggedMatrix {
        row: usize,
        expected: usize,
        got: usize,
    },
    /// Provided statistics do not match the matrix width.
    #[error("statistics cover {stats} columns but the matrix has {matrix}")]
    WidthMismatch { stats: usize, matrix: usize },
    /// Provided statistics are internally inconsistent.
    #[error("invalid statistics: {detail}")]
    BadStats { detail: String },
}

/// Detail-coefficient thresholding rules for [`wavelet_denoise`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// `σ·√(2·ln n)` with `σ` = median(|finest details|) / 0.6745.
    Universal,
}

/// Per-column minima and maxima captured when normalizing training data,
/// stored with a trained model so inference uses the same affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    /// Checks internal consistency: equal lengths and `min[i] <= max[i]`.
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.min.len() != self.max.len() {
            return Err(PreprocessError::BadStats {
                detail: format!(
                    "min has {} entries, max has {}",
                    self.min.len(),
                    self.max.len()
                ),
            });
        }
        for (i, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi {
                return Err(PreprocessError::BadStats {
                    detail: format!("column {i}: min {lo} vs max {hi}"),
                });
            }
        }
        Ok(())
    }

    /// Number of columns covered.
    pub fn width(&self) -> usize {
        self.min.len()
    }
}

/// The Daubechies-4 analysis filter pair (scaling `h`, wavelet `g`), with the
/// wavelet taps derived from the scaling taps by the quadrature-mirror rule
/// `g[k] = (-1)^k · h[3-k]`.
fn d4_filters() -> ([f64; 4], [f64; 4]) {
    let s3 = 3.0_f64.sqrt();
    let denom = 4.0 * 2.0_f64.sqrt();
    let h = [
        (1.0 + s3) / denom,
        (3.0 + s3) / denom,
        (3.0 - s3) / denom,
        (1.0 - s3) / denom,
    ];
    let g = [h[3], -h[2], h[1], -h[0]];
    (h, g)
}

/// One analysis step with periodic boundary handling: returns (approximation,
/// detail), each half the input length. The input length must be even.
fn dwt_step(series: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (h, g) = d4_filters();
    let n = series.len();
    let half = n / 2;
    let mut approx = vec![0.0; half];
    let mut detail = vec![0.0; half];
    for i in 0..half {
        let mut a = 0.0;
        let mut d = 0.0;
        for (k, (&hk, &gk)) in h.iter().zip(&g).enumerate() {
            let x = series[(2 * i + k) % n];
            a += hk * x;
            d += gk * x;
        }
        approx[i] = a;
        detail[i] = d;
    }
    (approx, detail)
}

/// One synthesis step, the adjoint of [`dwt_step`]; exact inverse because the
/// periodic filter bank is orthogonal.
fn idwt_step(approx: &[f64], detail: &[f64]) -> Vec<f64> {
    let (h, g) = d4_filters();
    let n = approx.len() * 2;
    let mut series = vec![0.0; n];
    for i in 0..approx.len() {
        for (k, (&hk, &gk)) in h.iter().zip(&g).enumerate() {
            series[(2 * i + k) % n] += hk * approx[i] + gk * detail[i];
        }
    }
    series
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

fn soft_threshold(value: f64, threshold: f64) -> f64 {
    let shrunk = (value.abs() - threshold).max(0.0);
    shrunk * value.signum()
}

/// Denoises a channel series with a depth-`levels` Daubechies-4 filter bank
/// and soft thresholding of all detail coefficients.
///
/// The output has the same length as the input and never more energy. A
/// constant series passes through (up to rounding) because all its detail
/// coefficients vanish. `levels = 0` returns the series unchanged.
pub fn wavelet_denoise(
    series: &[f64],
    levels: usize,
    rule: ThresholdRule,
) -> Result<Vec<f64>, PreprocessError> {
    let n = series.len();
    let required = 1usize << levels;
    if n < required {
        return Err(PreprocessError::SeriesTooShort {
            len: n,
            levels,
            required,
        });
    }
    if n % required != 0 {
        return Err(PreprocessError::UnevenLength { len: n, levels });
    }
    if levels == 0 {
        return Ok(series.to_vec());
    }

    // Analysis: peel off detail bands, keeping the finest first.
    let mut details: Vec<Vec<f64>> = Vec::with_capacity(levels);
    let mut approx = series.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx);
        details.push(d);
        approx = a;
    }

    // Universal threshold from the finest-level details.
    let ThresholdRule::Universal = rule;
    let mut abs_finest: Vec<f64> = details[0].iter().map(|d| d.abs()).collect();
    let sigma = median(&mut abs_finest) / 0.6745;
    let threshold = sigma * (2.0 * (n as f64).ln()).sqrt();

    for band in &mut details {
        for d in band.iter_mut() {
            *d = soft_threshold(*d, threshold);
        }
    }

    // Synthesis back up, coarsest band first.
    for band in details.iter().rev() {
        approx = idwt_step(&approx, band);
    }
    Ok(approx)
}

/// Replaces isolated interference points by linear interpolation.
///
/// A point is flagged when the magnitudes of *both* adjacent first
/// differences of the original series exceed `deriv_threshold`; endpoints are
/// never flagged. Flagged points (including consecutive runs) are replaced by
/// the straight line between the nearest unflagged neighbors.
pub fn remove_interference(
    series: &[f64],
    deriv_threshold: f64,
) -> Result<Vec<f64>, PreprocessError> {
    if deriv_threshold <= 0.0 {
        return Err(PreprocessError::NonPositiveThreshold {
            value: deriv_threshold,
        });
    }
    let n = series.len();
    if n < 3 {
        return Err(PreprocessError::SeriesTooShort {
            len: n,
            levels: 0,
            required: 3,
        });
    }

    let flagged: Vec<bool> = (0..n)
        .map(|i| {
            i > 0
                && i + 1 < n
                && (series[i] - series[i - 1]).abs() > deriv_threshold
                && (series[i + 1] - series[i]).abs() > deriv_threshold
        })
        .collect();
    if flagged[1..n - 1].iter().all(|&f| f) {
        return Err(PreprocessError::SeriesUnusable);
    }

    let mut out = series.to_vec();
    let mut i = 0;
    while i < n {
        if !flagged[i] {
            i += 1;
            continue;
        }
        // The run [i, j) is flagged; both boundary neighbors exist and are
        // unflagged because endpoints are never flagged.
        let mut j = i;
        while j < n && flagged[j] {
            j += 1;
        }
        let left_idx = i - 1;
        let right_idx = j;
        let left = series[left_idx];
        let right = series[right_idx];
        let span = (right_idx - left_idx) as f64;
        for k in i..j {
            let frac = (k - left_idx) as f64 / span;
            out[k] = left + (right - left) * frac;
        }
        i = j;
    }
    Ok(out)
}

/// Min-max normalizes each column of an `N×d` matrix.
///
/// With `stats == None`, per-column minima/maxima are estimated from the
/// matrix itself (needs at least two rows) and the mapped values land in
/// `[0, 1]` by construction. With provided statistics the same affine map is
/// applied and the result is clipped to `[0, 1]`. A degenerate column whose
/// minimum equals its maximum maps to 0.5 throughout. Returns the normalized
/// matrix together with the statistics that were used.
pub fn normalize(
    matrix: &[Vec<f64>],
    stats: Option<&NormStats>,
) -> Result<(Vec<Vec<f64>>, NormStats), PreprocessError> {
    let width = match (matrix.first(), stats) {
        (Some(row), _) => row.len(),
        (None, Some(s)) => s.width(),
        (None, None) => 0,
    };
    for (i, row) in matrix.iter().enumerate() {
        if row.len() != width {
            return Err(PreprocessError::RaggedMatrix {
                row: i,
                expected: width,
                got: row.len(),
            });
        }
    }

    let used = match stats {
        Some(s) => {
            s.validate()?;
            if s.width() != width {
                return Err(PreprocessError::WidthMismatch {
                    stats: s.width(),
                    matrix: width,
                });
            }
            s.clone()
        }
        None => {
            if matrix.len() < 2 {
                return Err(PreprocessError::TooFewRows { rows: matrix.len() });
            }
            let mut min = vec![f64::INFINITY; width];
            let mut max = vec![f64::NEG_INFINITY; width];
            for row in matrix {
                for (j, &v) in row.iter().enumerate() {
                    min[j] = min[j].min(v);
                    max[j] = max[j].max(v);
                }
            }
            NormStats { min, max }
        }
    };

    let clip = stats.is_some();
    let mut out = Vec::with_capacity(matrix.len());
    for row in matrix {
        let mapped: Vec<f64> = row
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                let lo = used.min[j];
                let hi = used.max[j];
                if lo == hi {
                    0.5
                } else {
                    let scaled = (v - lo) / (hi - lo);
                    if clip {
                        scaled.clamp(0.0, 1.0)
                    } else {
                        scaled
                    }
                }
            })
            .collect();
        out.push(mapped);
    }
    Ok((out, used))
}
