//! Dense floating-point kernels built on `faer`.
//!
//! Every routine here runs sequentially so that results are bit-identical no
//! matter how many worker threads the caller uses; instance-level parallelism
//! lives one layer up (across seeds and grid points).

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{self, ComputeSvdVectors};
use faer::{Accum, Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PAR: Par = Par::Seq;

/// Rank-cut rule shared by every numeric kernel and nullity computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolPolicy {
    /// Relative cut `tol * sigma_max`. `None` selects
    /// `max(rows, cols) * eps * sigma_max`.
    pub rel_tol: Option<f64>,
    /// Values within this factor of the cut (either side) are reported.
    pub ambiguity_factor: f64,
}

impl Default for TolPolicy {
    fn default() -> Self {
        Self {
            rel_tol: None,
            ambiguity_factor: 10.0,
        }
    }
}

impl TolPolicy {
    pub fn with_rel_tol(tol: f64) -> Self {
        Self {
            rel_tol: Some(tol),
            ..Self::default()
        }
    }

    pub fn cut(&self, rows: usize, cols: usize, sigma_max: f64) -> f64 {
        match self.rel_tol {
            Some(t) => t * sigma_max,
            None => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
        }
    }
}

/// A singular value (or eigenvalue) that landed too close to the cut to be
/// classified with confidence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ambiguity {
    pub value: f64,
    pub cut: f64,
    /// Rank if every borderline value counts as nonzero.
    pub rank_if_kept: usize,
    /// Rank if every borderline value counts as zero.
    pub rank_if_dropped: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankDecision {
    pub rank: usize,
    pub cut: f64,
    pub sigma_max: f64,
    /// Smallest kept value divided by the cut (`inf` when nothing is kept).
    pub margin_above: f64,
    /// Cut divided by the largest dropped value (`inf` when nothing is dropped).
    pub margin_below: f64,
    pub ambiguity: Option<Ambiguity>,
}

/// Classify a descending list of nonnegative values against the policy cut.
pub fn decide_rank(values: &[f64], rows: usize, cols: usize, policy: &TolPolicy) -> RankDecision {
    let sigma_max = values.iter().copied().fold(0.0_f64, f64::max);
    let cut = policy.cut(rows, cols, sigma_max);
    let f = policy.ambiguity_factor;
    let rank = values.iter().filter(|&&s| s > cut && sigma_max > 0.0).count();
    let kept_min = values
        .iter()
        .copied()
        .filter(|&s| s > cut && sigma_max > 0.0)
        .fold(f64::INFINITY, f64::min);
    let dropped_max = values
        .iter()
        .copied()
        .filter(|&s| !(s > cut && sigma_max > 0.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let margin_above = if kept_min.is_finite() {
        kept_min / cut
    } else {
        f64::INFINITY
    };
    let margin_below = if dropped_max > 0.0 {
        cut / dropped_max
    } else {
        f64::INFINITY
    };

    let ambiguity = if sigma_max > 0.0 {
        let lo = cut / f;
        let hi = cut * f;
        let borderline: Vec<f64> = values.iter().copied().filter(|&s| s >= lo && s < hi).collect();
        if borderline.is_empty() {
            None
        } else {
            let rank_if_kept = values.iter().filter(|&&s| s >= lo).count();
            let rank_if_dropped = values.iter().filter(|&&s| s >= hi).count();
            Some(Ambiguity {
                value: borderline[0],
                cut,
                rank_if_kept,
                rank_if_dropped,
            })
        }
    } else {
        None
    };

    RankDecision {
        rank,
        cut,
        sigma_max,
        margin_above,
        margin_below,
        ambiguity,
    }
}

pub fn matmul(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let mut out = Mat::<f64>::zeros(a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(out.as_mut(), Accum::Replace, a, b, 1.0, PAR);
    out
}

/// `a^T b`.
pub fn matmul_tn(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    matmul(a.transpose(), b)
}

/// Singular values with the optional U and V factors.
type SvdParts = (Vec<f64>, Option<Mat<f64>>, Option<Mat<f64>>);

fn run_svd(a: MatRef<'_, f64>, want_u: ComputeSvdVectors, want_v: ComputeSvdVectors) -> Result<SvdParts> {
    let (m, n) = a.shape();
    let size = m.min(n);
    if size == 0 {
        let u = match want_u {
            ComputeSvdVectors::No => None,
            _ => Some(Mat::<f64>::identity(
                m,
                if matches!(want_u, ComputeSvdVectors::Full) {
                    m
                } else {
                    0
                },
            )),
        };
        let v = match want_v {
            ComputeSvdVectors::No => None,
            _ => Some(Mat::<f64>::identity(
                n,
                if matches!(want_v, ComputeSvdVectors::Full) {
                    n
                } else {
                    0
                },
            )),
        };
        return Ok((Vec::new(), u, v));
    }
    let ucols = |w: ComputeSvdVectors, dim: usize| match w {
        ComputeSvdVectors::No => 0,
        ComputeSvdVectors::Thin => size,
        ComputeSvdVectors::Full => dim,
    };
    let mut s = faer::diag::Diag::<f64>::zeros(size);
    let mut u = (!matches!(want_u, ComputeSvdVectors::No)).then(|| Mat::<f64>::zeros(m, ucols(want_u, m)));
    let mut v = (!matches!(want_v, ComputeSvdVectors::No)).then(|| Mat::<f64>::zeros(n, ucols(want_v, n)));
    let mut buf = MemBuffer::new(svd::svd_scratch::<f64>(m, n, want_u, want_v, PAR, Default::default()));
    svd::svd(
        a,
        s.as_mut(),
        u.as_mut().map(|u| u.as_mut()),
        v.as_mut().map(|v| v.as_mut()),
        PAR,
        MemStack::new(&mut buf),
        Default::default(),
    )
    .map_err(|e| Error::Linalg(format!("svd: {e:?}")))?;
    let values = s.column_vector().iter().copied().collect();
    Ok((values, u, v))
}

/// Singular values in non-increasing order.
pub fn singular_values(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    Ok(run_svd(a, ComputeSvdVectors::No, ComputeSvdVectors::No)?.0)
}

pub fn rank(a: MatRef<'_, f64>, policy: &TolPolicy) -> Result<RankDecision> {
    let sv = singular_values(a)?;
    Ok(decide_rank(&sv, a.nrows(), a.ncols(), policy))
}

#[derive(Debug, Clone)]
pub struct Nullspace {
    /// Orthonormal columns spanning the kernel.
    pub basis: Mat<f64>,
    pub decision: RankDecision,
}

/// Orthonormal kernel basis. A full-row-rank input takes the trailing
/// columns of the full Q factor of `a^T`; anything else falls back to the
/// trailing right singular vectors of a full SVD.
pub fn nullspace(a: MatRef<'_, f64>, policy: &TolPolicy) -> Result<Nullspace> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok(Nullspace {
            basis: Mat::<f64>::identity(n, n),
            decision: decide_rank(&[], m, n, policy),
        });
    }
    let sv = singular_values(a)?;
    let decision = decide_rank(&sv, m, n, policy);
    if decision.rank == m && m <= n {
        return Ok(Nullspace {
            basis: row_space_complement(a),
            decision,
        });
    }
    let (_, _, v) = run_svd(a, ComputeSvdVectors::No, ComputeSvdVectors::Full)?;
    let v = v.expect("requested V");
    let basis = v.as_ref().subcols(decision.rank, n - decision.rank).to_owned();
    Ok(Nullspace { basis, decision })
}

/// Orthonormal basis of the orthogonal complement of the row space of `a`
/// (`m x n`, `m <= n`, full row rank assumed).
pub fn row_space_complement(a: MatRef<'_, f64>) -> Mat<f64> {
    use faer::linalg::householder;
    use faer::linalg::qr::no_pivoting::factor;
    let (m, n) = a.shape();
    assert!(m <= n, "row space complement needs m <= n");
    if m == 0 {
        return Mat::<f64>::identity(n, n);
    }
    let mut qr = a.transpose().to_owned();
    let bs = factor::recommended_block_size::<f64>(n, m);
    let mut coeff = Mat::<f64>::zeros(bs, m);
    let mut buf = MemBuffer::new(factor::qr_in_place_scratch::<f64>(n, m, bs, PAR, Default::default()));
    factor::qr_in_place(
        qr.as_mut(),
        coeff.as_mut(),
        PAR,
        MemStack::new(&mut buf),
        Default::default(),
    );
    for j in 0..m {
        for i in 0..j {
            qr[(i, j)] = 0.0;
        }
        qr[(j, j)] = 1.0;
    }
    let mut out = Mat::<f64>::zeros(n, n - m);
    for j in 0..n - m {
        out[(m + j, j)] = 1.0;
    }
    let mut buf =
        MemBuffer::new(householder::apply_block_householder_sequence_on_the_left_in_place_scratch::<f64>(n, bs, n - m));
    householder::apply_block_householder_sequence_on_the_left_in_place_with_conj(
        qr.as_ref(),
        coeff.as_ref(),
        faer::Conj::No,
        out.as_mut(),
        PAR,
        MemStack::new(&mut buf),
    );
    out
}

/// Polar factor `U V^T` of a full-column-rank matrix; orthonormal columns
/// spanning the same space.
pub fn polar_factor(a: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let (sv, u, v) = run_svd(a, ComputeSvdVectors::Thin, ComputeSvdVectors::Thin)?;
    if sv.last().is_some_and(|&s| s <= 0.0) {
        return Err(Error::Linalg("polar factor of a rank-deficient matrix".into()));
    }
    let (u, v) = (u.expect("U"), v.expect("V"));
    let mut out = Mat::<f64>::zeros(a.nrows(), a.ncols());
    faer::linalg::matmul::matmul(
        out.as_mut(),
        Accum::Replace,
        u.as_ref(),
        v.as_ref().transpose(),
        1.0,
        PAR,
    );
    Ok(out)
}

/// Eigenvalues of a symmetric matrix, non-decreasing.
pub fn symmetric_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<f64>> {
    use faer::linalg::evd::{self, ComputeEigenvectors};
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "eigenvalues of a {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut s = faer::diag::Diag::<f64>::zeros(n);
    let mut buf = MemBuffer::new(evd::self_adjoint_evd_scratch::<f64>(
        n,
        ComputeEigenvectors::No,
        PAR,
        Default::default(),
    ));
    evd::self_adjoint_evd(a, s.as_mut(), None, PAR, MemStack::new(&mut buf), Default::default())
        .map_err(|e| Error::Linalg(format!("eigensolver: {e:?}")))?;
    let mut vals: Vec<f64> = s.column_vector().iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0_f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}

/// Max-entry deviation of `Q^T Q` from the identity.
pub fn gram_residual(q: MatRef<'_, f64>) -> f64 {
    let g = matmul_tn(q, q);
    let mut worst = 0.0_f64;
    for j in 0..g.ncols() {
        for i in 0..g.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).abs());
        }
    }
    worst
}

/// Largest principal angle (radians) between the spans of two orthonormal
/// bases of equal dimension. Uses the sine form for accuracy near zero.
pub fn max_principal_angle(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() != b.nrows() || a.ncols() != b.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "principal angles between {}x{} and {}x{} bases",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Ok(0.0);
    }
    let proj = matmul(a, matmul_tn(a, b).as_ref());
    let resid = b - &proj;
    let s = singular_values(resid.as_ref())?;
    Ok(s.first().copied().unwrap_or(0.0).min(1.0).asin())
}

/// Column-major dense matrix from row-major data.
pub fn from_row_major(rows: usize, cols: usize, data: &[f64]) -> Mat<f64> {
    assert_eq!(data.len(), rows * cols);
    Mat::from_fn(rows, cols, |i, j| data[i * cols + j])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_cut_counts_only_values_above_cut() {
        let d = decide_rank(&[3.0, 1.0, 1e-17], 3, 3, &TolPolicy::default());
        assert_eq!(d.rank, 2);
        assert!(d.ambiguity.is_none());
    }

    #[test]
    fn borderline_value_is_flagged() {
        let policy = TolPolicy::with_rel_tol(1e-6);
        let d = decide_rank(&[1.0, 0.5, 3e-6], 3, 3, &policy);
        assert_eq!(d.rank, 3);
        let amb = d.ambiguity.expect("flag");
        assert_eq!((amb.rank_if_kept, amb.rank_if_dropped), (3, 2));
    }

    #[test]
    fn nullspace_of_wide_matrix() {
        let a = from_row_major(1, 3, &[1.0, 1.0, 0.0]);
        let ns = nullspace(a.as_ref(), &TolPolicy::default()).unwrap();
        assert_eq!(ns.basis.ncols(), 2);
        assert!(max_abs((&a * &ns.basis).as_ref()) < 1e-14);
        assert!(gram_residual(ns.basis.as_ref()) < 1e-14);
    }

    #[test]
    fn rank_deficient_input_uses_svd_route() {
        let a = from_row_major(3, 4, &[1.0, 2.0, 0.0, 1.0, 2.0, 4.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0]);
        let ns = nullspace(a.as_ref(), &TolPolicy::default()).unwrap();
        assert_eq!(ns.decision.rank, 2);
        assert_eq!(ns.basis.ncols(), 2);
        assert!(max_abs((&a * &ns.basis).as_ref()) < 1e-14);
        assert!(gram_residual(ns.basis.as_ref()) < 1e-14);
    }

    #[test]
    fn householder_complement_matches_svd_kernel() {
        let (m, n) = (7, 19);
        let a = Mat::from_fn(m, n, |i, j| ((i * 31 + j * 17) as f64 * 0.37).sin());
        let fast = row_space_complement(a.as_ref());
        let (_, _, v) = run_svd(a.as_ref(), ComputeSvdVectors::No, ComputeSvdVectors::Full).unwrap();
        let slow = v.unwrap().as_ref().subcols(m, n - m).to_owned();
        assert!(gram_residual(fast.as_ref()) < 1e-13);
        assert!(max_abs((&a * &fast).as_ref()) < 1e-13);
        assert!(max_principal_angle(fast.as_ref(), slow.as_ref()).unwrap() < 1e-12);
    }

    #[test]
    fn nullspace_of_empty_operator_is_everything() {
        let a = Mat::<f64>::zeros(0, 4);
        let ns = nullspace(a.as_ref(), &TolPolicy::default()).unwrap();
        assert_eq!(ns.basis.ncols(), 4);
    }

    #[test]
    fn polar_factor_is_orthonormal() {
        let a = from_row_major(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let q = polar_factor(a.as_ref()).unwrap();
        assert!(gram_residual(q.as_ref()) < 1e-14);
    }

    #[test]
    fn principal_angle_between_equal_spans_is_zero() {
        let a = from_row_major(3, 1, &[1.0, 0.0, 0.0]);
        let b = from_row_major(3, 1, &[-1.0, 0.0, 0.0]);
        assert!(max_principal_angle(a.as_ref(), b.as_ref()).unwrap() < 1e-15);
        let c = from_row_major(3, 1, &[0.0, 1.0, 0.0]);
        let ang = max_principal_angle(a.as_ref(), c.as_ref()).unwrap();
        assert!((ang - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_sorted() {
        let a = from_row_major(2, 2, &[2.0, 0.0, 0.0, -1.0]);
        assert_eq!(symmetric_eigenvalues(a.as_ref()).unwrap(), vec![-1.0, 2.0]);
    }
}
