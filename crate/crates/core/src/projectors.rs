//! Rank-r two-site projector frames: Haar-random samples, integer frames for
//! exact arithmetic, and the explicit one-hot witness assignments used by the
//! full-rank and frustration arguments.
//!
//! A frame is a `d^2 x r` matrix. Row `i_child * d + i_parent` holds the
//! amplitude on `|i_child, i_parent>`; every index is 0-based.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::QMatrix;
use crate::linalg::{self, TolPolicy};

/// Orthonormality tolerance for sampled frames (max entry of `G - I`).
pub const ORTHONORMALITY_TOL: f64 = 1e-12;

/// Entries of integer frames are drawn uniformly from `[-INTEGER_RANGE, INTEGER_RANGE]`.
pub const INTEGER_RANGE: i64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameMode {
    /// Haar-random orthonormal columns.
    Orthonormal,
    /// One-hot witness columns (exactly orthonormal).
    Structured,
    /// Random integer columns; span-equivalent only, used in exact mode.
    Integer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    d: usize,
    r: usize,
    mode: FrameMode,
    columns: Mat<f64>,
}

#[inline]
pub fn pair_index(d: usize, i_child: usize, i_parent: usize) -> usize {
    i_child * d + i_parent
}

impl Frame {
    pub fn new(d: usize, mode: FrameMode, columns: Mat<f64>) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("local dimension d={d} must be >= 2")));
        }
        if columns.nrows() != d * d {
            return Err(Error::ShapeMismatch(format!(
                "frame for d={d} needs {} rows, got {}",
                d * d,
                columns.nrows()
            )));
        }
        let r = columns.ncols();
        if r > d * d {
            return Err(Error::InvalidRank { d, r });
        }
        Ok(Self { d, r, mode, columns })
    }

    /// The rank-0 frame (no constraint on the edge).
    pub fn empty(d: usize) -> Self {
        Self {
            d,
            r: 0,
            mode: FrameMode::Structured,
            columns: Mat::zeros(d * d, 0),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn mode(&self) -> FrameMode {
        self.mode
    }

    pub fn columns(&self) -> faer::MatRef<'_, f64> {
        self.columns.as_ref()
    }

    /// `<i_child, i_parent | v^p>`.
    pub fn entry(&self, p: usize, i_child: usize, i_parent: usize) -> f64 {
        self.columns[(pair_index(self.d, i_child, i_parent), p)]
    }

    /// `sum_p |v^p><v^p|` on the two-site space.
    pub fn projector(&self) -> Mat<f64> {
        linalg::matmul(self.columns.as_ref(), self.columns.as_ref().transpose())
    }

    /// Exact copy of the columns. Floats convert exactly (dyadic rationals),
    /// though only integer and one-hot frames keep the numbers small.
    pub fn exact_columns(&self) -> QMatrix {
        use num_rational::BigRational;
        QMatrix::from_fn(self.d * self.d, self.r, |i, j| {
            BigRational::from_float(self.columns[(i, j)]).expect("finite frame entry")
        })
    }

    pub fn to_json(&self) -> FrameJson {
        FrameJson {
            d: self.d,
            r: self.r,
            mode: self.mode,
            columns: (0..self.r)
                .map(|p| (0..self.d * self.d).map(|i| self.columns[(i, p)]).collect())
                .collect(),
        }
    }

    pub fn from_json(json: &FrameJson) -> Result<Self> {
        if json.columns.len() != json.r {
            return Err(Error::ShapeMismatch(format!(
                "frame json declares r={} but has {} columns",
                json.r,
                json.columns.len()
            )));
        }
        let rows = json.d * json.d;
        if let Some(bad) = json.columns.iter().find(|c| c.len() != rows) {
            return Err(Error::ShapeMismatch(format!(
                "frame column of length {} for d={}",
                bad.len(),
                json.d
            )));
        }
        let cols = Mat::from_fn(rows, json.r, |i, j| json.columns[j][i]);
        Frame::new(json.d, json.mode, cols)
    }

    pub fn to_matrix_market(&self) -> String {
        crate::mmio::write_array(
            self.columns.as_ref(),
            &format!(
                "frame d={} r={} mode={:?}; row = i_child*d + i_parent",
                self.d, self.r, self.mode
            ),
        )
    }
}

/// Frame interchange format. `columns[p][i_child * d + i_parent]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameJson {
    pub d: usize,
    pub r: usize,
    pub mode: FrameMode,
    pub columns: Vec<Vec<f64>>,
}

fn check_rank(d: usize, r: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("local dimension d={d} must be >= 2")));
    }
    if r == 0 || r > d * d {
        return Err(Error::InvalidRank { d, r });
    }
    Ok(())
}

/// Haar-distributed point on the Stiefel manifold of `d^2 x r` orthonormal
/// frames: the polar factor of an i.i.d. standard Gaussian matrix.
pub fn sample_haar_frame(d: usize, r: usize, seed: u64) -> Result<Frame> {
    check_rank(d, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d * d;
    let mut g = Mat::<f64>::zeros(n, r);
    for j in 0..r {
        for i in 0..n {
            g[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let q = linalg::polar_factor(g.as_ref())?;
    Frame::new(d, FrameMode::Orthonormal, q)
}

/// Random integer frame of exact column rank `r`.
pub fn sample_integer_frame(d: usize, r: usize, seed: u64) -> Result<Frame> {
    check_rank(d, r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = d * d;
    loop {
        let vals: Vec<i64> = (0..n * r)
            .map(|_| rng.random_range(-INTEGER_RANGE..=INTEGER_RANGE))
            .collect();
        let q = QMatrix::from_i64(r, n, &vals);
        if q.rank() == r {
            let cols = Mat::from_fn(n, r, |i, j| vals[j * n + i] as f64);
            return Frame::new(d, FrameMode::Integer, cols);
        }
    }
}

fn one_hot(d: usize, positions: &[(usize, usize)]) -> Result<Frame> {
    let mut cols = Mat::<f64>::zeros(d * d, positions.len());
    for (p, &(ic, ip)) in positions.iter().enumerate() {
        cols[(pair_index(d, ic, ip), p)] = 1.0;
    }
    Frame::new(d, FrameMode::Structured, cols)
}

/// Chain witness: column `p` is `|floor(p/d), p mod d>`, filling parent
/// indices in row-major order.
pub fn structured_chain_frame(d: usize, r: usize) -> Result<Frame> {
    check_rank(d, r)?;
    let positions: Vec<_> = (0..r).map(|p| (p / d, p % d)).collect();
    one_hot(d, &positions)
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// `(ceil(2r/d) + 1)(k - 1) + floor(2r/d) <= d`.
pub fn tree_assignment_feasible(d: usize, r: usize, k: usize) -> bool {
    if d < 2 || k == 0 {
        return false;
    }
    (ceil_div(2 * r, d) + 1) * (k - 1) + (2 * r) / d <= d
}

/// Parent index used by column `p` of slot `l` in the tree witness.
fn tree_parent_index(d: usize, r: usize, l: usize, p: usize) -> usize {
    (ceil_div(2 * r, d) + 1) * l + (2 * p) / d
}

/// Tree witness for child slot `l` of `k`: column `p` is one-hot at
/// `i_child = p mod (d/2)`, `i_parent = (ceil(2r/d) + 1) l + floor(2p/d)`.
pub fn structured_tree_frame(d: usize, r: usize, k: usize, l: usize) -> Result<Frame> {
    check_rank(d, r)?;
    let infeasible = |reason: String| Error::InfeasibleAssignment { d, r, k, reason };
    if !d.is_multiple_of(2) {
        return Err(infeasible("the tree assignment needs an even local dimension".into()));
    }
    if l >= k {
        return Err(Error::IndexOutOfRange { index: l, limit: k });
    }
    if !tree_assignment_feasible(d, r, k) {
        return Err(infeasible(format!(
            "(ceil(2r/d)+1)(k-1) + floor(2r/d) = {} exceeds d",
            (ceil_div(2 * r, d) + 1) * (k - 1) + (2 * r) / d
        )));
    }
    let top = tree_parent_index(d, r, k - 1, r - 1);
    if top >= d {
        return Err(infeasible(format!("0-based parent index {top} falls outside 0..{d}")));
    }
    let half = d / 2;
    let positions: Vec<_> = (0..r).map(|p| (p % half, tree_parent_index(d, r, l, p))).collect();
    one_hot(d, &positions)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyViolation {
    pub property: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameValidationReport {
    pub orthonormality_residual: f64,
    pub one_hot: Vec<bool>,
    pub range_ok: bool,
    pub property_violations: Vec<PropertyViolation>,
}

impl FrameValidationReport {
    pub fn passed(&self) -> bool {
        self.property_violations.is_empty()
    }
}

fn column_support(frame: &Frame, p: usize) -> Vec<(usize, usize)> {
    let d = frame.d;
    (0..d * d)
        .filter(|&i| frame.columns[(i, p)] != 0.0)
        .map(|i| (i / d, i % d))
        .collect()
}

fn is_one_hot(frame: &Frame, p: usize) -> bool {
    let d = frame.d;
    let support = column_support(frame, p);
    support.len() == 1 && {
        let (ic, ip) = support[0];
        frame.columns[(pair_index(d, ic, ip), p)] == 1.0
    }
}

/// Shape, finiteness, independence and (for orthonormal and one-hot frames)
/// orthonormality checks on a single frame.
pub fn validate_frame(frame: &Frame) -> FrameValidationReport {
    let mut violations = Vec::new();
    let d = frame.d;
    let cols = frame.columns.as_ref();
    let range_ok = cols.nrows() == d * d
        && frame.r <= d * d
        && (0..cols.ncols()).all(|j| (0..cols.nrows()).all(|i| cols[(i, j)].is_finite()));
    if !range_ok {
        violations.push(PropertyViolation {
            property: "range".into(),
            detail: "frame shape or entries out of range".into(),
        });
    }
    let orthonormality_residual = linalg::gram_residual(cols);
    if frame.mode != FrameMode::Integer && orthonormality_residual >= ORTHONORMALITY_TOL {
        violations.push(PropertyViolation {
            property: "orthonormal".into(),
            detail: format!("max |G - I| = {orthonormality_residual:e}"),
        });
    }
    if range_ok && frame.r > 0 {
        let rank = linalg::rank(cols, &TolPolicy::default()).map(|d| d.rank).unwrap_or(0);
        if rank < frame.r {
            violations.push(PropertyViolation {
                property: "independent".into(),
                detail: format!("numerical rank {rank} < r = {}", frame.r),
            });
        }
    }
    let one_hot = (0..frame.r).map(|p| is_one_hot(frame, p)).collect::<Vec<_>>();
    if frame.mode == FrameMode::Structured {
        if let Some(p) = one_hot.iter().position(|&b| !b) {
            violations.push(PropertyViolation {
                property: "one_hot".into(),
                detail: format!("column {p} is not a unit basis vector"),
            });
        }
    }
    FrameValidationReport {
        orthonormality_residual,
        one_hot,
        range_ok,
        property_violations: violations,
    }
}

/// The three properties of the tree witness assignment:
/// 1. nonzero entries only at `i_child < d/2`;
/// 2. every parent index carries nonzeros from at most one slot;
/// 3. every `(l, p)` column has exactly one nonzero entry.
pub fn validate_tree_assignment(frames: &[Frame], d: usize, r: usize, k: usize) -> FrameValidationReport {
    let mut violations = Vec::new();
    let mut one_hot_flags = Vec::new();
    let mut residual = 0.0_f64;
    let mut range_ok = frames.len() == k;
    if frames.len() != k {
        violations.push(PropertyViolation {
            property: "range".into(),
            detail: format!("expected {k} frames, got {}", frames.len()),
        });
    }
    let mut owner: Vec<Option<usize>> = vec![None; d];
    for (l, f) in frames.iter().enumerate() {
        if f.d != d || f.r != r {
            range_ok = false;
            violations.push(PropertyViolation {
                property: "range".into(),
                detail: format!("slot {l} frame has (d, r) = ({}, {}), expected ({d}, {r})", f.d, f.r),
            });
            continue;
        }
        residual = residual.max(linalg::gram_residual(f.columns.as_ref()));
        for p in 0..r {
            one_hot_flags.push(is_one_hot(f, p));
            let support = column_support(f, p);
            if support.len() != 1 {
                violations.push(PropertyViolation {
                    property: "3".into(),
                    detail: format!("slot {l} column {p} has {} nonzero entries", support.len()),
                });
            }
            for (ic, ip) in support {
                if 2 * ic >= d {
                    violations.push(PropertyViolation {
                        property: "1".into(),
                        detail: format!("slot {l} column {p} is nonzero at i_child = {ic} >= d/2"),
                    });
                }
                match owner[ip] {
                    Some(prev) if prev != l => violations.push(PropertyViolation {
                        property: "2".into(),
                        detail: format!("parent index {ip} used by slots {prev} and {l}"),
                    }),
                    _ => owner[ip] = Some(l),
                }
            }
        }
    }
    FrameValidationReport {
        orthonormality_residual: residual,
        one_hot: one_hot_flags,
        range_ok,
        property_violations: violations,
    }
}
