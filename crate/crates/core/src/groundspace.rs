//! Level-by-level ground-space construction.
//!
//! A node at level `n+1` with children at level `n` solves `C y = 0`, where
//! `C` stacks, for every child slot `l` and projector index `p`, the block
//! `M_{l,p}[beta; (i_parent, alpha_l)] = sum_{i_child} v^p[i_child, i_parent]
//! Gamma_l[(i_child, beta); alpha_l]` tensored with identities on the other
//! children's solution indices.
//!
//! Index conventions (all 0-based, first index slowest):
//! - Gamma rows `(i, alpha_prev^0, .., alpha_prev^{k-1})`, columns `alpha`.
//! - Dense C rows `(p, l, alpha_prev^{0..k-1}, alpha^{l' != l})`, columns
//!   `(i_parent, alpha^0, .., alpha^{k-1})`.

use faer::{Mat, MatRef};
use num_traits::Zero;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::QMatrix;
use crate::linalg::{self, Ambiguity, RankDecision, TolPolicy};
use crate::projectors::{self, Frame};
use crate::recursion::{self, DimensionSequence};
use crate::tree::TreeShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Numeric,
    Rational,
}

/// Allocation caps for one kernel computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    /// Peak bytes of dense `f64` working storage.
    pub max_bytes: u128,
    /// Largest exact matrix (entry count) handed to rational elimination.
    pub exact_max_entries: u128,
}

pub const DEFAULT_BUDGET_BYTES: u128 = 2 << 30;
pub const DEFAULT_EXACT_MAX_ENTRIES: u128 = 250_000;

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_bytes: DEFAULT_BUDGET_BYTES,
            exact_max_entries: DEFAULT_EXACT_MAX_ENTRIES,
        }
    }
}

impl Budget {
    fn check_bytes(&self, what: &str, bytes: u128) -> Result<()> {
        if bytes > self.max_bytes {
            return Err(Error::ResourceLimit {
                what: what.to_string(),
                needed: bytes,
                budget: self.max_bytes,
            });
        }
        Ok(())
    }

    fn check_exact(&self, what: &str, entries: u128) -> Result<()> {
        if entries > self.exact_max_entries {
            return Err(Error::ResourceLimit {
                what: format!("{what} (exact entries)"),
                needed: entries,
                budget: self.exact_max_entries,
            });
        }
        Ok(())
    }
}

fn upow(base: usize, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base as u128))
}

fn to_usize(v: u128, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| Error::ResourceLimit {
        what: what.to_string(),
        needed: v,
        budget: usize::MAX as u128,
    })
}

/// A dense matrix over `f64` or over the rationals.
#[derive(Debug, Clone, PartialEq)]
pub enum Matrix {
    Numeric(Mat<f64>),
    Exact(QMatrix),
}

impl Matrix {
    pub fn nrows(&self) -> usize {
        match self {
            Matrix::Numeric(m) => m.nrows(),
            Matrix::Exact(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Matrix::Numeric(m) => m.ncols(),
            Matrix::Exact(m) => m.ncols(),
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Matrix::Numeric(_) => Mode::Numeric,
            Matrix::Exact(_) => Mode::Rational,
        }
    }

    pub fn to_f64(&self) -> Mat<f64> {
        match self {
            Matrix::Numeric(m) => m.clone(),
            Matrix::Exact(m) => m.to_f64(),
        }
    }

    pub fn as_numeric(&self) -> Option<&Mat<f64>> {
        match self {
            Matrix::Numeric(m) => Some(m),
            Matrix::Exact(_) => None,
        }
    }

    pub fn as_exact(&self) -> Option<&QMatrix> {
        match self {
            Matrix::Exact(m) => Some(m),
            Matrix::Numeric(_) => None,
        }
    }

    pub fn rank(&self, policy: &TolPolicy) -> Result<usize> {
        match self {
            Matrix::Numeric(m) => Ok(linalg::rank(m.as_ref(), policy)?.rank),
            Matrix::Exact(m) => Ok(m.rank()),
        }
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.ncols() != other.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.nrows(),
                self.ncols(),
                other.nrows(),
                other.ncols()
            )));
        }
        Ok(match (self, other) {
            (Matrix::Numeric(a), Matrix::Numeric(b)) => Matrix::Numeric(linalg::matmul(a.as_ref(), b.as_ref())),
            (Matrix::Exact(a), Matrix::Exact(b)) => Matrix::Exact(a.matmul(b)),
            _ => return Err(Error::ShapeMismatch("cannot mix numeric and exact matrices".into())),
        })
    }
}

/// Solution-space tensor of one node, matricized as
/// `(d * d_prev^k) x dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaLevel {
    pub level: usize,
    pub d: usize,
    pub k: usize,
    pub d_prev: usize,
    pub dim: usize,
    pub matrix: Matrix,
}

impl GammaLevel {
    pub fn new(level: usize, d: usize, k: usize, d_prev: usize, matrix: Matrix) -> Result<Self> {
        let rows = (d as u128) * upow(d_prev, k);
        if matrix.nrows() as u128 != rows {
            return Err(Error::ShapeMismatch(format!(
                "level-{level} Gamma has {} rows, expected d * d_prev^k = {rows}",
                matrix.nrows()
            )));
        }
        Ok(Self {
            level,
            d,
            k,
            d_prev,
            dim: matrix.ncols(),
            matrix,
        })
    }

    /// Number of rows per physical index value, `d_prev^k`.
    pub fn block_rows(&self) -> usize {
        self.matrix.nrows() / self.d
    }

    /// `Gamma * a` for an invertible `dim x dim` matrix `a`.
    pub fn recombine(&self, a: &Matrix) -> Result<GammaLevel> {
        let m = self.matrix.matmul(a)?;
        GammaLevel::new(self.level, self.d, self.k, self.d_prev, m)
    }

    pub fn to_matrix_market(&self) -> String {
        let comment = format!(
            "level {} d {} k {} d_prev {} dim {}\nrows (i, alpha_prev^0..k-1) with i slowest; columns alpha",
            self.level, self.d, self.k, self.d_prev, self.dim
        );
        crate::mmio::write_array(self.matrix.to_f64().as_ref(), &comment)
    }
}

/// Leaf tensor: the `d x d` identity.
pub fn leaf_level(d: usize) -> GammaLevel {
    GammaLevel::new(1, d, 1, 1, Matrix::Numeric(Mat::<f64>::identity(d, d))).expect("leaf shape")
}

pub fn leaf_level_exact(d: usize) -> GammaLevel {
    GammaLevel::new(1, d, 1, 1, Matrix::Exact(QMatrix::identity(d))).expect("leaf shape")
}

/// Factored constraint operator for one parent node.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintOperator {
    pub d: usize,
    pub k: usize,
    pub r: usize,
    /// Level of the children.
    pub level: usize,
    /// Dimension of each child's solution space.
    pub d_child: usize,
    /// Dimension of each grandchild's solution space.
    pub d_prev: usize,
    /// Per slot `l`: `[M_{l,0}; ..; M_{l,r-1}]`, size `(r * d_prev^k) x (d * d_child)`.
    stacked: Vec<Matrix>,
}

impl ConstraintOperator {
    pub fn mode(&self) -> Mode {
        self.stacked.first().map(Matrix::mode).unwrap_or_default()
    }

    /// `d_prev^k`.
    pub fn block_rows(&self) -> usize {
        upow(self.d_prev, self.k) as usize
    }

    pub fn dense_rows(&self) -> u128 {
        (self.r as u128) * (self.k as u128) * upow(self.d_prev, self.k) * upow(self.d_child, self.k - 1)
    }

    pub fn dense_cols(&self) -> u128 {
        (self.d as u128) * upow(self.d_child, self.k)
    }

    pub fn stacked(&self, l: usize) -> &Matrix {
        &self.stacked[l]
    }

    /// One block `M_{l,p}`.
    pub fn block(&self, l: usize, p: usize) -> Matrix {
        let b = self.block_rows();
        match &self.stacked[l] {
            Matrix::Numeric(s) => Matrix::Numeric(s.as_ref().subrows(p * b, b).to_owned()),
            Matrix::Exact(s) => Matrix::Exact(QMatrix::from_fn(b, s.ncols(), |i, j| s.get(p * b + i, j).clone())),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.stacked
            .iter()
            .map(|s| linalg::max_abs(s.to_f64().as_ref()))
            .fold(0.0, f64::max)
    }
}

fn stack_numeric(g: MatRef<'_, f64>, frame: &Frame, d: usize, b: usize, dc: usize) -> Mat<f64> {
    let r = frame.r();
    let mut s = Mat::<f64>::zeros(r * b, d * dc);
    for p in 0..r {
        for ip in 0..d {
            for ic in 0..d {
                let c = frame.entry(p, ic, ip);
                if c == 0.0 {
                    continue;
                }
                for j in 0..dc {
                    for bb in 0..b {
                        s[(p * b + bb, ip * dc + j)] += c * g[(ic * b + bb, j)];
                    }
                }
            }
        }
    }
    s
}

fn stack_exact(g: &QMatrix, frame: &Frame, d: usize, b: usize, dc: usize) -> QMatrix {
    let r = frame.r();
    let v = frame.exact_columns();
    let mut s = QMatrix::zeros(r * b, d * dc);
    for p in 0..r {
        for ip in 0..d {
            for ic in 0..d {
                let c = v.get(projectors::pair_index(d, ic, ip), p);
                if c.is_zero() {
                    continue;
                }
                for bb in 0..b {
                    for j in 0..dc {
                        let x = g.get(ic * b + bb, j);
                        if x.is_zero() {
                            continue;
                        }
                        let cur = s.get(p * b + bb, ip * dc + j) + c * x;
                        s.set(p * b + bb, ip * dc + j, cur);
                    }
                }
            }
        }
    }
    s
}

pub fn build_constraint(children: &[GammaLevel], frames: &[Frame]) -> Result<ConstraintOperator> {
    build_constraint_within(children, frames, &Budget::default())
}

/// As [`build_constraint`], refusing stacked blocks larger than `budget`.
pub fn build_constraint_within(
    children: &[GammaLevel],
    frames: &[Frame],
    budget: &Budget,
) -> Result<ConstraintOperator> {
    let k = children.len();
    if k == 0 {
        return Err(Error::ShapeMismatch("at least one child is required".into()));
    }
    if frames.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{k} children but {} frames",
            frames.len()
        )));
    }
    let c0 = &children[0];
    let (d, level, d_child, d_prev) = (c0.d, c0.level, c0.dim, c0.d_prev);
    let mode = c0.matrix.mode();
    let b = to_usize(upow(d_prev, k), "grandchild index space")?;
    for (l, c) in children.iter().enumerate() {
        if c.d != d || c.level != level || c.dim != d_child || c.d_prev != d_prev || c.matrix.mode() != mode {
            return Err(Error::ShapeMismatch(format!(
                "child {l} is (level {}, d {}, dim {}, d_prev {}), child 0 is (level {level}, d {d}, dim {d_child}, d_prev {d_prev})",
                c.level, c.d, c.dim, c.d_prev
            )));
        }
        if c.matrix.nrows() != d * b {
            return Err(Error::ShapeMismatch(format!(
                "child {l} has {} rows, expected d * d_prev^k = {}",
                c.matrix.nrows(),
                d * b
            )));
        }
    }
    let r = frames[0].r();
    for (l, f) in frames.iter().enumerate() {
        if f.d() != d || f.r() != r {
            return Err(Error::ShapeMismatch(format!(
                "frame {l} is (d {}, r {}), expected (d {d}, r {r})",
                f.d(),
                f.r()
            )));
        }
    }
    let entries = (k as u128) * (r as u128) * (b as u128) * (d as u128) * (d_child as u128);
    match mode {
        Mode::Numeric => budget.check_bytes("stacked constraint blocks", 8 * entries)?,
        Mode::Rational => budget.check_exact("stacked constraint blocks", entries)?,
    }
    let stacked = children
        .iter()
        .zip(frames)
        .map(|(c, f)| match &c.matrix {
            Matrix::Numeric(g) => Matrix::Numeric(stack_numeric(g.as_ref(), f, d, b, d_child)),
            Matrix::Exact(g) => Matrix::Exact(stack_exact(g, f, d, b, d_child)),
        })
        .collect();
    Ok(ConstraintOperator {
        d,
        k,
        r,
        level,
        d_child,
        d_prev,
        stacked,
    })
}

/// Split a rest index over slots `!= l` into the part before and after `l`.
fn split_rest(rest: usize, dc: usize, k: usize, l: usize) -> (usize, usize) {
    let lo_span = dc.pow((k - 1 - l) as u32);
    (rest / lo_span, rest % lo_span)
}

/// Dense C in the documented row/column order.
pub fn materialize_dense(op: &ConstraintOperator, budget: &Budget) -> Result<Matrix> {
    let rows = op.dense_rows();
    let cols = op.dense_cols();
    match op.mode() {
        Mode::Numeric => budget.check_bytes("dense constraint matrix", 8 * rows * cols)?,
        Mode::Rational => budget.check_exact("dense constraint matrix", rows * cols)?,
    }
    let (rows, cols) = (to_usize(rows, "rows")?, to_usize(cols, "cols")?);
    let (d, k, dc) = (op.d, op.k, op.d_child);
    let b = op.block_rows();
    let rest_n = dc.pow((k - 1) as u32);
    let dck = dc.pow(k as u32);
    let row_of = |p: usize, l: usize, beta: usize, rest: usize| ((p * k + l) * b + beta) * rest_n + rest;
    let col_of = |ip: usize, l: usize, a: usize, rest: usize| {
        let (hi, lo) = split_rest(rest, dc, k, l);
        ip * dck + (hi * dc + a) * dc.pow((k - 1 - l) as u32) + lo
    };
    match op.mode() {
        Mode::Numeric => {
            let mut c = Mat::<f64>::zeros(rows, cols);
            for l in 0..k {
                let s = op.stacked[l].as_numeric().expect("numeric");
                for p in 0..op.r {
                    for beta in 0..b {
                        for ip in 0..d {
                            for a in 0..dc {
                                let v = s[(p * b + beta, ip * dc + a)];
                                if v == 0.0 {
                                    continue;
                                }
                                for rest in 0..rest_n {
                                    c[(row_of(p, l, beta, rest), col_of(ip, l, a, rest))] = v;
                                }
                            }
                        }
                    }
                }
            }
            Ok(Matrix::Numeric(c))
        }
        Mode::Rational => {
            let mut c = QMatrix::zeros(rows, cols);
            for l in 0..k {
                let s = op.stacked[l].as_exact().expect("exact");
                for p in 0..op.r {
                    for beta in 0..b {
                        for ip in 0..d {
                            for a in 0..dc {
                                let v = s.get(p * b + beta, ip * dc + a);
                                if v.is_zero() {
                                    continue;
                                }
                                for rest in 0..rest_n {
                                    c.set(row_of(p, l, beta, rest), col_of(ip, l, a, rest), v.clone());
                                }
                            }
                        }
                    }
                }
            }
            Ok(Matrix::Exact(c))
        }
    }
}

/// `C * x` evaluated from the factored blocks; output rows follow the
/// dense row order.
pub fn apply(op: &ConstraintOperator, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let cols = to_usize(op.dense_cols(), "cols")?;
    if x.nrows() != cols {
        return Err(Error::ShapeMismatch(format!(
            "operator has {cols} columns, input has {} rows",
            x.nrows()
        )));
    }
    let rows = to_usize(op.dense_rows(), "rows")?;
    let (d, k, dc) = (op.d, op.k, op.d_child);
    let b = op.block_rows();
    let n = x.ncols();
    let mut out = Mat::<f64>::zeros(rows, n);
    if rows == 0 || n == 0 {
        return Ok(out);
    }
    let dck = dc.pow(k as u32);
    let rest_n = dc.pow((k - 1) as u32);
    for l in 0..k {
        let s = op.stacked[l].to_f64();
        let lo_span = dc.pow((k - 1 - l) as u32);
        for rest in 0..rest_n {
            let (hi, lo) = split_rest(rest, dc, k, l);
            let g = Mat::from_fn(d * dc, n, |row, j| {
                let (ip, a) = (row / dc, row % dc);
                x[(ip * dck + (hi * dc + a) * lo_span + lo, j)]
            });
            let prod = linalg::matmul(s.as_ref(), g.as_ref());
            for sidx in 0..op.r * b {
                let (p, beta) = (sidx / b, sidx % b);
                let row = ((p * k + l) * b + beta) * rest_n + rest;
                for j in 0..n {
                    out[(row, j)] = prod[(sidx, j)];
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelPath {
    Dense,
    #[default]
    Structured,
}

#[derive(Debug, Clone)]
pub struct Kernel {
    pub gamma: GammaLevel,
    pub path: KernelPath,
    /// One rank decision per elimination step (empty in exact mode).
    pub decisions: Vec<RankDecision>,
}

impl Kernel {
    pub fn ambiguities(&self) -> Vec<Ambiguity> {
        self.decisions.iter().filter_map(|d| d.ambiguity).collect()
    }
}

fn kernel_level(op: &ConstraintOperator, m: Matrix) -> Result<GammaLevel> {
    GammaLevel::new(op.level + 1, op.d, op.k, op.d_child, m)
}

/// Orthonormal (numeric) or primitive-integer (exact) kernel basis of C.
/// Exact operators always take the dense elimination route.
pub fn kernel_basis(op: &ConstraintOperator, policy: &TolPolicy, path: KernelPath, budget: &Budget) -> Result<Kernel> {
    if op.mode() == Mode::Rational || op.stacked.is_empty() {
        return kernel_dense(op, policy, budget);
    }
    match path {
        KernelPath::Dense => kernel_dense(op, policy, budget),
        KernelPath::Structured => kernel_structured(op, policy, budget),
    }
}

fn kernel_dense(op: &ConstraintOperator, policy: &TolPolicy, budget: &Budget) -> Result<Kernel> {
    let cols = op.dense_cols();
    if op.mode() == Mode::Numeric {
        budget.check_bytes("dense kernel", 8 * (2 * op.dense_rows() * cols + cols * cols))?;
    }
    match materialize_dense(op, budget)? {
        Matrix::Numeric(c) => {
            let ns = linalg::nullspace(c.as_ref(), policy)?;
            Ok(Kernel {
                gamma: kernel_level(op, Matrix::Numeric(ns.basis))?,
                path: KernelPath::Dense,
                decisions: vec![ns.decision],
            })
        }
        Matrix::Exact(c) => Ok(Kernel {
            gamma: kernel_level(op, Matrix::Exact(c.kernel()))?,
            path: KernelPath::Dense,
            decisions: Vec::new(),
        }),
    }
}

/// Intersect edge kernels one slot at a time. After slots `0..=l` the
/// kernel is `K_l (x) I` with `K_l` acting on `(i_parent, alpha^0..alpha^l)`;
/// adding slot `l+1` solves `R z = 0` with
/// `R[(s, a); (beta, mu)] = sum_ip S[s; (ip, beta)] K_l[(ip, a); mu]` and sets
/// `K_{l+1}[(ip, a, beta); j] = sum_mu K_l[(ip, a); mu] z[(beta, mu); j]`.
fn kernel_structured(op: &ConstraintOperator, policy: &TolPolicy, budget: &Budget) -> Result<Kernel> {
    let (d, dc) = (op.d, op.d_child);
    let s0 = op.stacked[0].as_numeric().expect("numeric");
    let s0_cols = s0.ncols() as u128;
    budget.check_bytes(
        "first-slot kernel",
        8 * (2 * s0.nrows() as u128 * s0_cols + s0_cols * s0_cols),
    )?;
    let first = linalg::nullspace(s0.as_ref(), policy)?;
    let mut decisions = vec![first.decision];
    let mut kmat = first.basis;
    let mut a_span = dc;
    for l in 1..op.k {
        let s = op.stacked[l].as_numeric().expect("numeric");
        let m = kmat.ncols();
        let sr = s.nrows();
        let r_rows = (sr as u128) * (a_span as u128);
        let r_cols = (dc as u128) * (m as u128);
        let next_rows = (d as u128) * (a_span as u128) * (dc as u128);
        budget.check_bytes(
            "slot restriction",
            8 * (2 * r_rows * r_cols + r_cols * r_cols + next_rows * r_cols),
        )?;
        let mut r = Mat::<f64>::zeros(to_usize(r_rows, "rows")?, to_usize(r_cols, "cols")?);
        for ip in 0..d {
            for beta in 0..dc {
                for sidx in 0..sr {
                    let c = s[(sidx, ip * dc + beta)];
                    if c == 0.0 {
                        continue;
                    }
                    for mu in 0..m {
                        let col = beta * m + mu;
                        for a in 0..a_span {
                            r[(sidx * a_span + a, col)] += c * kmat[(ip * a_span + a, mu)];
                        }
                    }
                }
            }
        }
        let ns = linalg::nullspace(r.as_ref(), policy)?;
        decisions.push(ns.decision);
        drop(r);
        let z = ns.basis;
        let n_next = z.ncols();
        let mut next = Mat::<f64>::zeros(to_usize(next_rows, "rows")?, n_next);
        for beta in 0..dc {
            let zb = z.as_ref().subrows(beta * m, m);
            let prod = linalg::matmul(kmat.as_ref(), zb);
            for row in 0..prod.nrows() {
                for j in 0..n_next {
                    next[(row * dc + beta, j)] = prod[(row, j)];
                }
            }
        }
        kmat = next;
        a_span *= dc;
    }
    Ok(Kernel {
        gamma: kernel_level(op, Matrix::Numeric(kmat))?,
        path: KernelPath::Structured,
        decisions,
    })
}

/// `||C K||_max`, evaluated through the factored blocks (exactly zero or one
/// for exact inputs, depending on whether `C K = 0` holds exactly).
pub fn residual(op: &ConstraintOperator, basis: &Matrix) -> Result<f64> {
    match basis {
        Matrix::Numeric(k) => Ok(linalg::max_abs(apply(op, k.as_ref())?.as_ref())),
        Matrix::Exact(k) => {
            let c = materialize_dense(
                op,
                &Budget {
                    max_bytes: u128::MAX,
                    exact_max_entries: u128::MAX,
                },
            )?;
            let prod = c.as_exact().expect("exact").matmul(k);
            Ok(if prod.is_zero() {
                0.0
            } else {
                linalg::max_abs(prod.to_f64().as_ref())
            })
        }
    }
}

/// Acceptance bound for a numeric kernel residual.
pub fn residual_bound(op: &ConstraintOperator) -> f64 {
    1e-9 * op.max_abs() * (op.dense_cols() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualPathReport {
    pub dense_dim: usize,
    pub structured_dim: usize,
    /// `None` when the dimensions differ.
    pub max_principal_angle: Option<f64>,
}

impl DualPathReport {
    pub fn agree(&self) -> bool {
        self.dense_dim == self.structured_dim && self.max_principal_angle.is_some_and(|a| a < 1e-8)
    }
}

/// Solve the same operator by both routes and compare the subspaces.
pub fn dual_path_check(op: &ConstraintOperator, policy: &TolPolicy, budget: &Budget) -> Result<DualPathReport> {
    let dense = kernel_dense(op, policy, budget)?;
    let structured = kernel_structured(op, policy, budget)?;
    let (a, b) = (dense.gamma.matrix.to_f64(), structured.gamma.matrix.to_f64());
    let angle = if a.ncols() == b.ncols() {
        Some(linalg::max_principal_angle(a.as_ref(), b.as_ref())?)
    } else {
        None
    };
    Ok(DualPathReport {
        dense_dim: a.ncols(),
        structured_dim: b.ncols(),
        max_principal_angle: angle,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowOptions {
    pub mode: Mode,
    pub policy: TolPolicy,
    pub path: KernelPath,
    /// One frame reused on every edge (non-generic).
    pub shared_frames: bool,
    pub budget: Budget,
    /// Run the dense/structured comparison on nodes with at most this many
    /// dense columns (0 disables).
    pub dual_path_max_cols: u128,
}

impl Default for GrowOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Numeric,
            policy: TolPolicy::default(),
            path: KernelPath::Structured,
            shared_frames: false,
            budget: Budget::default(),
            dual_path_max_cols: 2048,
        }
    }
}

/// Seed of the frame on the edge above `child`.
pub fn edge_seed(seed: u64, child: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(child as u64);
    rng.next_u64()
}

pub fn sample_edge_frame(d: usize, r: usize, seed: u64, mode: Mode) -> Result<Frame> {
    if r == 0 {
        return Ok(Frame::empty(d));
    }
    match mode {
        Mode::Numeric => projectors::sample_haar_frame(d, r, seed),
        Mode::Rational => projectors::sample_integer_frame(d, r, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub level: usize,
    /// Kernel dimension of each node at this level, left to right.
    pub node_dims: Vec<usize>,
    pub max_residual: f64,
    pub residual_bound: f64,
    /// Max `|Q^T Q - I|` over nodes (numeric mode only).
    pub max_gram_residual: Option<f64>,
    pub ambiguities: Vec<Ambiguity>,
    /// Smallest kept-value / cut ratio over all rank decisions.
    pub min_margin_above: Option<f64>,
    /// Smallest cut / dropped-value ratio over all rank decisions.
    pub min_margin_below: Option<f64>,
    pub dual_path: Vec<DualPathReport>,
}

impl LevelRecord {
    pub fn residual_ok(&self) -> bool {
        self.max_residual <= self.residual_bound
    }
}

#[derive(Debug, Clone)]
pub struct TreeGroundSpace {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub depth: usize,
    pub seed: u64,
    pub options: GrowOptions,
    pub shape: TreeShape,
    /// Frame on the edge above site `c` is `frames[c - 1]`.
    pub frames: Vec<Frame>,
    /// `gammas[n - 1]` holds the level-`n` tensors, left to right.
    pub gammas: Vec<Vec<GammaLevel>>,
    /// `E_0 ..= E_m`; shorter than `depth + 1` only when growth was cut off.
    pub observed: Vec<usize>,
    pub levels: Vec<LevelRecord>,
    pub predicted: DimensionSequence,
    /// Set when a budget stopped growth early.
    pub limit: Option<Error>,
}

impl TreeGroundSpace {
    pub fn complete(&self) -> bool {
        self.limit.is_none() && self.observed.len() == self.depth + 1
    }

    /// `E_n == max(D_n, 0)` at every computed level.
    pub fn matches_prediction(&self) -> bool {
        self.observed
            .iter()
            .enumerate()
            .all(|(n, &e)| self.predicted.predicted_usize(n) == Some(e))
    }

    pub fn root(&self) -> Option<&GammaLevel> {
        if !self.complete() {
            return None;
        }
        self.gammas.get(self.depth - 1).and_then(|g| g.first())
    }

    pub fn report(&self) -> GrowReport {
        GrowReport {
            d: self.d,
            r: self.r,
            k: self.k,
            depth: self.depth,
            seed: self.seed,
            mode: self.options.mode,
            path: self.options.path,
            generic: !self.options.shared_frames,
            observed: self.observed.clone(),
            predicted: self.predicted.to_json().values,
            matches_prediction: self.matches_prediction(),
            levels: self.levels.clone(),
            limit: self.limit.as_ref().map(|e| e.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowReport {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub depth: usize,
    pub seed: u64,
    pub mode: Mode,
    pub path: KernelPath,
    pub generic: bool,
    pub observed: Vec<usize>,
    pub predicted: Vec<String>,
    pub matches_prediction: bool,
    pub levels: Vec<LevelRecord>,
    pub limit: Option<String>,
}

pub fn grow_tree(d: usize, r: usize, k: usize, depth: usize, seed: u64, mode: Mode) -> Result<TreeGroundSpace> {
    grow_tree_with(
        d,
        r,
        k,
        depth,
        seed,
        &GrowOptions {
            mode,
            ..GrowOptions::default()
        },
    )
}

pub fn grow_tree_with(
    d: usize,
    r: usize,
    k: usize,
    depth: usize,
    seed: u64,
    options: &GrowOptions,
) -> Result<TreeGroundSpace> {
    if r > d * d {
        return Err(Error::InvalidRank { d, r });
    }
    let shape = TreeShape::new(d, k, depth)?;
    let frames: Vec<Frame> = if options.shared_frames {
        let f = sample_edge_frame(d, r, edge_seed(seed, 0), options.mode)?;
        vec![f; shape.edges.len()]
    } else {
        shape
            .edges
            .iter()
            .map(|e| sample_edge_frame(d, r, edge_seed(seed, e.child), options.mode))
            .collect::<Result<_>>()?
    };
    grow_with_frames(shape, r, seed, frames, options)
}

/// Grow a tree with caller-supplied edge frames (`frames[c - 1]` above site `c`).
pub fn grow_with_frames(
    shape: TreeShape,
    r: usize,
    seed: u64,
    frames: Vec<Frame>,
    options: &GrowOptions,
) -> Result<TreeGroundSpace> {
    let (d, k, depth) = (shape.d, shape.k, shape.depth);
    if frames.len() != shape.edges.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frames for {} edges",
            frames.len(),
            shape.edges.len()
        )));
    }
    let predicted = recursion::dimension_sequence_capped(d, r, k, depth, 4096)?;
    let leaf = match options.mode {
        Mode::Numeric => leaf_level(d),
        Mode::Rational => leaf_level_exact(d),
    };
    let n_leaves = shape.sites_at_level(1).len();
    let mut tgs = TreeGroundSpace {
        d,
        r,
        k,
        depth,
        seed,
        options: options.clone(),
        shape,
        frames,
        gammas: vec![vec![leaf; n_leaves]],
        observed: vec![1, d],
        levels: Vec::new(),
        predicted,
        limit: None,
    };
    for level in 2..=depth {
        if tgs.observed.last() == Some(&0) {
            tgs.observed.push(0);
            continue;
        }
        match grow_level(&tgs, level) {
            Ok((gammas, record)) => {
                let e = record.node_dims.iter().copied().min().unwrap_or(0);
                tgs.observed.push(e);
                tgs.levels.push(record);
                tgs.gammas.push(gammas);
            }
            Err(e) if e.is_resource_limit() => {
                tgs.limit = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(tgs)
}

fn min_finite(acc: Option<f64>, v: f64) -> Option<f64> {
    if !v.is_finite() {
        return acc;
    }
    Some(acc.map_or(v, |a| a.min(v)))
}

fn grow_level(tgs: &TreeGroundSpace, level: usize) -> Result<(Vec<GammaLevel>, LevelRecord)> {
    let opts = &tgs.options;
    let k = tgs.k;
    let child_first = tgs.shape.sites_at_level(level - 1).start;
    let prev = &tgs.gammas[level - 2];
    let mut gammas = Vec::new();
    let mut record = LevelRecord {
        level,
        node_dims: Vec::new(),
        max_residual: 0.0,
        residual_bound: f64::INFINITY,
        max_gram_residual: None,
        ambiguities: Vec::new(),
        min_margin_above: None,
        min_margin_below: None,
        dual_path: Vec::new(),
    };
    for site in tgs.shape.sites_at_level(level) {
        let kids = tgs.shape.children(site);
        let pos = kids.start - child_first;
        let op = build_constraint_within(
            &prev[pos..pos + k],
            &tgs.frames[kids.start - 1..kids.end - 1],
            &opts.budget,
        )?;
        let kernel = kernel_basis(&op, &opts.policy, opts.path, &opts.budget)?;
        let res = residual(&op, &kernel.gamma.matrix)?;
        record.max_residual = record.max_residual.max(res);
        record.residual_bound = record.residual_bound.min(residual_bound(&op));
        if let Matrix::Numeric(q) = &kernel.gamma.matrix {
            let g = linalg::gram_residual(q.as_ref());
            record.max_gram_residual = Some(record.max_gram_residual.unwrap_or(0.0).max(g));
        }
        record.ambiguities.extend(kernel.ambiguities());
        for dec in &kernel.decisions {
            record.min_margin_above = min_finite(record.min_margin_above, dec.margin_above);
            record.min_margin_below = min_finite(record.min_margin_below, dec.margin_below);
        }
        if opts.mode == Mode::Numeric && op.dense_cols() <= opts.dual_path_max_cols {
            record.dual_path.push(dual_path_check(&op, &opts.policy, &opts.budget)?);
        }
        record.node_dims.push(kernel.gamma.dim);
        gammas.push(kernel.gamma);
    }
    Ok((gammas, record))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projectors::{sample_haar_frame, structured_chain_frame};

    #[test]
    fn leaves_are_identities() {
        for d in [2, 5] {
            let g = leaf_level(d);
            assert_eq!((g.dim, g.d_prev, g.level), (d, 1, 1));
            assert_eq!(linalg::gram_residual(g.matrix.as_numeric().unwrap().as_ref()), 0.0);
        }
    }

    #[test]
    fn binary_star_sizes_and_kernel() {
        let leaves = vec![leaf_level(4), leaf_level(4)];
        let frames = vec![sample_haar_frame(4, 2, 1).unwrap(), sample_haar_frame(4, 2, 2).unwrap()];
        let op = build_constraint(&leaves, &frames).unwrap();
        assert_eq!(op.block(0, 0).nrows(), 1);
        assert_eq!(op.block(0, 0).ncols(), 16);
        let c = materialize_dense(&op, &Budget::default()).unwrap();
        assert_eq!((c.nrows(), c.ncols()), (16, 64));
        let k = kernel_basis(&op, &TolPolicy::default(), KernelPath::Structured, &Budget::default()).unwrap();
        assert_eq!(k.gamma.dim, 48);
    }

    #[test]
    fn single_edge_reads_frame_entries() {
        let f = sample_haar_frame(2, 1, 3).unwrap();
        let op = build_constraint(&[leaf_level(2)], std::slice::from_ref(&f)).unwrap();
        let c = materialize_dense(&op, &Budget::default()).unwrap().to_f64();
        assert_eq!((c.nrows(), c.ncols()), (1, 4));
        for ip in 0..2 {
            for ic in 0..2 {
                // Column (i_parent, alpha) with alpha = i_child for a leaf child.
                assert_eq!(c[(0, ip * 2 + ic)], f.entry(0, ic, ip));
            }
        }
    }

    #[test]
    fn structured_chain_kernel() {
        let f = structured_chain_frame(2, 1).unwrap();
        let op = build_constraint(&[leaf_level(2)], &[f]).unwrap();
        let k = kernel_basis(&op, &TolPolicy::default(), KernelPath::Dense, &Budget::default()).unwrap();
        assert_eq!(k.gamma.dim, 3);
    }

    #[test]
    fn empty_operator_kernel_is_everything() {
        let op = build_constraint(&[leaf_level(3)], &[Frame::empty(3)]).unwrap();
        assert_eq!(op.dense_rows(), 0);
        for path in [KernelPath::Dense, KernelPath::Structured] {
            let k = kernel_basis(&op, &TolPolicy::default(), path, &Budget::default()).unwrap();
            assert_eq!(k.gamma.dim, 9);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let f = sample_haar_frame(3, 1, 0).unwrap();
        assert!(matches!(
            build_constraint(&[leaf_level(2)], std::slice::from_ref(&f)),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            build_constraint(&[leaf_level(3), leaf_level(3)], &[f]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn grow_examples() {
        let t = grow_tree(2, 1, 1, 6, 11, Mode::Numeric).unwrap();
        assert_eq!(t.observed, vec![1, 2, 3, 4, 5, 6, 7]);
        let t = grow_tree(4, 2, 2, 2, 5, Mode::Numeric).unwrap();
        assert_eq!(t.observed[2], 48);
        let t = grow_tree(2, 2, 1, 4, 5, Mode::Numeric).unwrap();
        assert_eq!(t.observed, vec![1, 2, 2, 0, 0]);
        assert!(t.matches_prediction());
    }

    #[test]
    fn rational_growth_is_certified() {
        let t = grow_tree(3, 2, 1, 3, 9, Mode::Rational).unwrap();
        assert_eq!(t.observed, vec![1, 3, 7, 15]);
        assert!(t.levels.iter().all(|l| l.max_residual == 0.0));
    }

    #[test]
    fn budget_stops_growth_with_partial_results() {
        let opts = GrowOptions {
            budget: Budget {
                max_bytes: 200_000,
                ..Budget::default()
            },
            dual_path_max_cols: 0,
            ..GrowOptions::default()
        };
        let t = grow_tree_with(4, 2, 2, 3, 1, &opts).unwrap();
        assert!(t.limit.as_ref().is_some_and(Error::is_resource_limit));
        assert_eq!(t.observed, vec![1, 4, 48]);
        assert!(!t.complete());
    }
}
