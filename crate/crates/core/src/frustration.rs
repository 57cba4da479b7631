//! Frustration witnesses: row reduction of level tensors, explicit
//! one-hot projector assignments, chain runs up to and past the frustration
//! onset, and full-row-rank checks of tree constraint matrices.

use faer::Mat;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::QMatrix;
use crate::groundspace::{
    self, build_constraint, edge_seed, leaf_level, leaf_level_exact, materialize_dense, GammaLevel, GrowOptions,
    Matrix, Mode, TreeGroundSpace,
};
use crate::linalg::{self, TolPolicy};
use crate::projectors::{self, Frame};
use crate::recursion::{self, Phase};

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

/// Maps a per-seed job over a seed list, returning results in seed order.
pub trait SeedMap: Sync {
    fn map<T: Send>(&self, seeds: &[u64], job: &(dyn Fn(u64) -> Result<T> + Sync)) -> Result<Vec<T>>;
}

/// Runs seeds one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl SeedMap for Sequential {
    fn map<T: Send>(&self, seeds: &[u64], job: &(dyn Fn(u64) -> Result<T> + Sync)) -> Result<Vec<T>> {
        seeds.iter().map(|&s| job(s)).collect()
    }
}

/// Rows of a level tensor, labelled `(i_child, alpha_prev)` where
/// `alpha_prev` runs over `block` values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowReductionSet {
    pub block: usize,
    pub members: Vec<(usize, usize)>,
}

impl RowReductionSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Flattened row indices `i * block + alpha`.
    pub fn rows(&self) -> Vec<usize> {
        self.members.iter().map(|&(i, a)| i * self.block + a).collect()
    }

    /// `{i < d/2} x {0..block}`.
    pub fn lower_half(d: usize, block: usize) -> Self {
        Self {
            block,
            members: (0..d / 2).flat_map(|i| (0..block).map(move |a| (i, a))).collect(),
        }
    }
}

/// All `alpha_prev` for `i < floor(E_n/E_prev)` plus the first
/// `E_n - E_prev*floor(E_n/E_prev)` values at `i = ceil(E_n/E_prev) - 1`.
pub fn select_set_s(e_n: usize, e_prev: usize, d: usize) -> Result<RowReductionSet> {
    if e_n == 0 || e_prev == 0 {
        return Err(Error::InvalidParameter(format!(
            "row-reduction set needs positive dimensions (E_n = {e_n}, E_prev = {e_prev})"
        )));
    }
    let c = ceil_div(e_n, e_prev);
    if 2 * c > d {
        return Err(Error::HypothesisViolation(format!(
            "ceil(E_n/E_prev) = ceil({e_n}/{e_prev}) = {c} exceeds d/2 = {}",
            d as f64 / 2.0
        )));
    }
    let q = e_n / e_prev;
    let rem = e_n - e_prev * q;
    let mut members: Vec<(usize, usize)> = (0..q).flat_map(|i| (0..e_prev).map(move |a| (i, a))).collect();
    members.extend((0..rem).map(|a| (c - 1, a)));
    Ok(RowReductionSet { block: e_prev, members })
}

fn reduce_numeric(g: &Mat<f64>, rows: &[usize], policy: &TolPolicy) -> Result<Mat<f64>> {
    let w = Mat::from_fn(rows.len(), g.ncols(), |i, j| g[(rows[i], j)]);
    let rank = linalg::rank(w.as_ref(), policy)?.rank;
    if rank < rows.len() {
        return Err(Error::RankDeficientSubmatrix { rows: rows.len(), rank });
    }
    let mut m = g.clone();
    let n = m.ncols();
    let mut pivot = vec![false; n];
    for (t, &rho) in rows.iter().enumerate() {
        let best = (0..n)
            .filter(|&c| !pivot[c])
            .max_by(|&a, &b| m[(rho, a)].abs().total_cmp(&m[(rho, b)].abs()));
        let Some(c) = best.filter(|&c| m[(rho, c)] != 0.0) else {
            return Err(Error::RankDeficientSubmatrix {
                rows: rows.len(),
                rank: t,
            });
        };
        let inv = 1.0 / m[(rho, c)];
        for i in 0..m.nrows() {
            m[(i, c)] *= inv;
        }
        m[(rho, c)] = 1.0;
        for j in 0..n {
            if j == c {
                continue;
            }
            let f = m[(rho, j)];
            if f == 0.0 {
                continue;
            }
            for i in 0..m.nrows() {
                let v = m[(i, c)];
                m[(i, j)] -= f * v;
            }
            m[(rho, j)] = 0.0;
        }
        pivot[c] = true;
    }
    Ok(m)
}

fn reduce_exact(g: &QMatrix, rows: &[usize]) -> Result<QMatrix> {
    let mut m = g.clone();
    let n = m.ncols();
    let mut pivot = vec![false; n];
    for (t, &rho) in rows.iter().enumerate() {
        let Some(c) = (0..n).find(|&c| !pivot[c] && !m.get(rho, c).is_zero()) else {
            return Err(Error::RankDeficientSubmatrix {
                rows: rows.len(),
                rank: t,
            });
        };
        let inv = m.get(rho, c).recip();
        for i in 0..m.nrows() {
            let v = m.get(i, c) * &inv;
            m.set(i, c, v);
        }
        for j in 0..n {
            if j == c || m.get(rho, j).is_zero() {
                continue;
            }
            let f = m.get(rho, j).clone();
            for i in 0..m.nrows() {
                let v = m.get(i, j) - &f * m.get(i, c);
                m.set(i, j, v);
            }
        }
        pivot[c] = true;
    }
    Ok(m)
}

/// `Gamma * A` for an invertible `A` that turns the rows in `s` into a
/// permutation of identity rows (one 1 per row, in distinct columns).
pub fn row_reduce_on_set(g: &GammaLevel, s: &RowReductionSet, policy: &TolPolicy) -> Result<GammaLevel> {
    if s.block != g.block_rows() {
        return Err(Error::ShapeMismatch(format!(
            "set indexes {} rows per physical value, tensor has {}",
            s.block,
            g.block_rows()
        )));
    }
    let rows = s.rows();
    if let Some(&bad) = rows.iter().find(|&&r| r >= g.matrix.nrows()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            limit: g.matrix.nrows(),
        });
    }
    if rows.len() > g.dim {
        return Err(Error::RankDeficientSubmatrix {
            rows: rows.len(),
            rank: g.dim,
        });
    }
    let m = match &g.matrix {
        Matrix::Numeric(m) => Matrix::Numeric(reduce_numeric(m, &rows, policy)?),
        Matrix::Exact(m) => Matrix::Exact(reduce_exact(m, &rows)?),
    };
    GammaLevel::new(g.level, g.d, g.k, g.d_prev, m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiag {
    pub level: usize,
    pub margin_above: Option<f64>,
    pub margin_below: Option<f64>,
    pub ambiguous: bool,
    pub residual_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRun {
    pub d: usize,
    pub r: usize,
    pub seed: u64,
    #[serde(rename = "E")]
    pub e: Vec<usize>,
    pub frustration_index: Option<usize>,
    pub diagnostics: Vec<StepDiag>,
    pub limit: Option<String>,
}

impl ChainRun {
    pub fn from_space(tgs: &TreeGroundSpace) -> Self {
        Self {
            d: tgs.d,
            r: tgs.r,
            seed: tgs.seed,
            e: tgs.observed.clone(),
            frustration_index: tgs.observed.iter().position(|&e| e == 0),
            diagnostics: tgs
                .levels
                .iter()
                .map(|l| StepDiag {
                    level: l.level,
                    margin_above: l.min_margin_above,
                    margin_below: l.min_margin_below,
                    ambiguous: !l.ambiguities.is_empty(),
                    residual_ok: l.residual_ok(),
                })
                .collect(),
            limit: tgs.limit.as_ref().map(|e| e.to_string()),
        }
    }

    /// Once zero, stays zero.
    pub fn monotone_death(&self) -> bool {
        match self.frustration_index {
            Some(n) => self.e[n..].iter().all(|&e| e == 0),
            None => true,
        }
    }
}

pub fn run_chain(
    d: usize,
    r: usize,
    seed: u64,
    n_max: usize,
    opts: &GrowOptions,
) -> Result<(ChainRun, TreeGroundSpace)> {
    let tgs = groundspace::grow_tree_with(d, r, 1, n_max, seed, opts)?;
    Ok((ChainRun::from_space(&tgs), tgs))
}

/// Largest rank used without loss of generality, `floor(d^2/2)`.
fn clamp_rank(d: usize, r: usize, notes: &mut Vec<String>) -> usize {
    let cap = d * d / 2;
    if r > cap {
        notes.push(format!("r = {r} clamped to floor(d^2/2) = {cap}"));
        cap
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaHypothesis {
    pub n0: usize,
    pub e_n0: String,
    pub e_prev: String,
    pub ratio_ceil: Option<String>,
    pub holds: bool,
}

/// `E_{n0} > 0` and `d * ceil(E_{n0}/E_{n0-1}) <= r`.
pub fn lemma_hypothesis(d: usize, r: usize, n0: usize, seq: &recursion::DimensionSequence) -> Option<LemmaHypothesis> {
    if n0 < 1 {
        return None;
    }
    let (e, p) = (seq.values.get(n0)?, seq.values.get(n0 - 1)?);
    let positive = e.is_positive() && p.is_positive();
    let ratio = positive.then(|| {
        let (q, rem) = num_integer::Integer::div_rem(e, p);
        if rem.is_zero() {
            q
        } else {
            q + 1
        }
    });
    let holds = ratio
        .as_ref()
        .is_some_and(|c| num_bigint::BigInt::from(d) * c <= num_bigint::BigInt::from(r));
    Some(LemmaHypothesis {
        n0,
        e_n0: e.to_string(),
        e_prev: p.to_string(),
        ratio_ceil: ratio.map(|c| c.to_string()),
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankCheck {
    pub seed: Option<u64>,
    pub rows: u128,
    pub cols: u128,
    pub rank: usize,
    pub target: u128,
    /// Exact arithmetic decided the rank.
    pub certified: bool,
    pub ambiguous: bool,
}

impl RankCheck {
    pub fn ok(&self) -> bool {
        self.rank as u128 == self.target && !self.ambiguous
    }
}

fn rank_check(
    op: &groundspace::ConstraintOperator,
    target: u128,
    seed: Option<u64>,
    policy: &TolPolicy,
    budget: &groundspace::Budget,
) -> Result<RankCheck> {
    let (rows, cols) = (op.dense_rows(), op.dense_cols());
    let c = materialize_dense(op, budget)?;
    let (rank, certified, ambiguous) = match &c {
        Matrix::Exact(q) => (q.rank(), true, false),
        Matrix::Numeric(m) => {
            let dec = linalg::rank(m.as_ref(), policy)?;
            (dec.rank, false, dec.ambiguity.is_some())
        }
    };
    Ok(RankCheck {
        seed,
        rows,
        cols,
        rank,
        target,
        certified,
        ambiguous,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenericNext {
    pub seed: u64,
    #[serde(rename = "E")]
    pub e: Vec<usize>,
    pub e_next: Option<usize>,
    pub limit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub d: usize,
    pub r: usize,
    pub r_requested: usize,
    pub mode: Mode,
    pub notes: Vec<String>,
    pub n0: Option<usize>,
    pub hypothesis_checks: Vec<LemmaHypothesis>,
    pub witness: Option<RankCheck>,
    pub generic: Vec<GenericNext>,
    pub verdict: String,
}

impl LemmaReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass" || self.verdict.starts_with("hypothesis not met")
    }
}

/// Witness check of the single-step collapse on a chain: at the first step
/// `n0 <= n_max` (or the given `n0`) where the hypothesis holds, row-reduce
/// a generic level-`n0` tensor, attach the one-hot chain frame and confirm
/// that C has full column rank; then confirm `E_{n0+1} = 0` for every seed.
pub fn verify_lemma_k1(
    d: usize,
    r: usize,
    n0: Option<usize>,
    n_max: usize,
    seeds: &[u64],
    opts: &GrowOptions,
) -> Result<LemmaReport> {
    verify_lemma_k1_with(d, r, n0, n_max, seeds, opts, &Sequential)
}

pub fn verify_lemma_k1_with<M: SeedMap>(
    d: usize,
    r: usize,
    n0: Option<usize>,
    n_max: usize,
    seeds: &[u64],
    opts: &GrowOptions,
    runner: &M,
) -> Result<LemmaReport> {
    let mut notes = Vec::new();
    let rc = clamp_rank(d, r, &mut notes);
    let chain_to = |depth: usize| {
        move |seed: u64| -> Result<GenericNext> {
            let (run, _) = run_chain(d, rc, seed, depth, opts)?;
            Ok(GenericNext {
                seed,
                e_next: run.e.get(depth).copied(),
                e: run.e,
                limit: run.limit,
            })
        }
    };
    let horizon = n0.map_or(n_max, |n| n + 1).max(2);
    let seq = recursion::dimension_sequence_capped(d, rc, 1, horizon, 4096)?;
    let checks: Vec<LemmaHypothesis> = (1..seq.values.len())
        .filter_map(|n| lemma_hypothesis(d, rc, n, &seq))
        .collect();
    let chosen = match n0 {
        Some(n) => {
            let h = lemma_hypothesis(d, rc, n, &seq)
                .ok_or_else(|| Error::InvalidParameter(format!("n0 = {n} is outside the computed sequence")))?;
            if !h.holds {
                return Err(Error::HypothesisViolation(format!(
                    "at n0 = {n}: d * ceil(E_n0 / E_n0-1) = {d} * ceil({}/{}) = {d} * {} > r = {rc}",
                    h.e_n0,
                    h.e_prev,
                    h.ratio_ceil.as_deref().unwrap_or("undefined")
                )));
            }
            Some(n)
        }
        None => checks.iter().find(|h| h.holds).map(|h| h.n0),
    };
    let mut report = LemmaReport {
        d,
        r: rc,
        r_requested: r,
        mode: opts.mode,
        notes,
        n0: chosen,
        hypothesis_checks: checks,
        witness: None,
        generic: Vec::new(),
        verdict: String::new(),
    };
    let Some(n0) = chosen else {
        let positive = seq.truncated_at.is_none();
        report.verdict = format!(
            "hypothesis not met for n <= {}{}",
            seq.values.len() - 1,
            if positive { "; E_n > 0 throughout" } else { "" }
        );
        // Generic runs still witness positivity through the horizon.
        report.generic = runner.map(seeds, &chain_to(horizon))?;
        return Ok(report);
    };

    let witness_seed = seeds.first().copied().unwrap_or(0);
    let (_, base) = run_chain(d, rc, witness_seed, n0, opts)?;
    if let Some(limit) = &base.limit {
        return Err(limit.clone());
    }
    let gamma = &base.gammas[n0 - 1][0];
    let e_prev = base.observed[n0 - 1];
    let s = select_set_s(gamma.dim, e_prev, d)?;
    let reduced = row_reduce_on_set(gamma, &s, &opts.policy)?;
    let frame = projectors::structured_chain_frame(d, rc)?;
    let op = build_constraint(std::slice::from_ref(&reduced), std::slice::from_ref(&frame))?;
    let witness = rank_check(&op, op.dense_cols(), None, &opts.policy, &opts.budget)?;
    let witness_empty = witness.ok();
    report.witness = Some(witness);

    report.generic = runner.map(seeds, &chain_to(n0 + 1))?;
    let generic_ok = report.generic.iter().all(|g| g.e_next == Some(0));
    report.verdict = match (witness_empty, generic_ok) {
        (true, true) => "pass".into(),
        (false, _) => "fail: witness constraint matrix has a kernel".into(),
        (true, false) => "fail: a generic instance survived the step after n0".into(),
    };
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremSeed {
    pub seed: u64,
    #[serde(rename = "E")]
    pub e: Vec<usize>,
    pub n0: Option<usize>,
    pub agree_before_onset: bool,
    /// `floor(d * E_{n0-1} / 4)`.
    pub bound: Option<usize>,
    pub bound_ok: bool,
    #[serde(rename = "E_n0_plus_2")]
    pub e_n0_plus_2: Option<usize>,
    /// First level with `E_n = 0` among the computed ones.
    pub onset: Option<usize>,
    pub limit: Option<String>,
}

impl TheoremSeed {
    pub fn ok(&self) -> bool {
        self.agree_before_onset && self.bound_ok && self.e_n0_plus_2 == Some(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub d: usize,
    pub r: usize,
    pub r_requested: usize,
    pub seeds: Vec<u64>,
    pub n_max: usize,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub config: TheoremConfig,
    pub notes: Vec<String>,
    /// `holds`, `empirical` or `not applicable`.
    pub hypothesis_status: String,
    pub predicted: Vec<String>,
    pub n0: Option<usize>,
    pub per_seed: Vec<TheoremSeed>,
    pub verdict: String,
}

impl TheoremReport {
    pub fn applicable(&self) -> bool {
        self.hypothesis_status != "not applicable"
    }

    pub fn passed(&self) -> bool {
        !self.applicable() || self.per_seed.iter().all(TheoremSeed::ok)
    }
}

/// `ceil(d^2 / 2r) < r/d`, i.e. `d * ceil(d^2 / 2r) < r`.
pub fn theorem_hypothesis(d: usize, r: usize) -> bool {
    r > 0 && d * ceil_div(d * d, 2 * r) < r
}

/// Locate the onset `n0` (first `n` with `D_{n+1} <= 0`), then for every seed
/// check `E_n = D_n` up to `n0`, `E_{n0+1} <= floor(d E_{n0-1} / 4)` and
/// `E_{n0+2} = 0`.
pub fn verify_theorem_k1p(
    d: usize,
    r: usize,
    seeds: &[u64],
    n_max: usize,
    opts: &GrowOptions,
) -> Result<TheoremReport> {
    verify_theorem_k1p_with(d, r, seeds, n_max, opts, &Sequential)
}

pub fn verify_theorem_k1p_with<M: SeedMap>(
    d: usize,
    r: usize,
    seeds: &[u64],
    n_max: usize,
    opts: &GrowOptions,
    runner: &M,
) -> Result<TheoremReport> {
    let mut notes = Vec::new();
    let config = |rc| TheoremConfig {
        d,
        r: rc,
        r_requested: r,
        seeds: seeds.to_vec(),
        n_max,
        mode: opts.mode,
    };
    if recursion::within_threshold(d, r, 1) {
        return Ok(TheoremReport {
            config: config(r),
            notes,
            hypothesis_status: "not applicable".into(),
            predicted: Vec::new(),
            n0: None,
            per_seed: Vec::new(),
            verdict: "not applicable: unfrustrated regime".into(),
        });
    }
    let rc = clamp_rank(d, r, &mut notes);
    let status = if theorem_hypothesis(d, rc) {
        "holds"
    } else {
        "empirical"
    };
    let phase = recursion::classify_phase(d, rc, 1, recursion::DEFAULT_PHASE_ITERATIONS)?;
    let Phase::FrustratedAt(m) = phase.tag else {
        unreachable!("rk > d^2/4 always frustrates");
    };
    let n0 = m - 1;
    let seq = recursion::dimension_sequence(d, rc, 1, m)?;
    let target = n0 + 2;
    if target > n_max {
        notes.push(format!("levels capped at n_max = {n_max} below n0 + 2 = {target}"));
    }
    let depth = target.min(n_max).max(1);
    let per_seed = runner.map(seeds, &|seed| {
        let (run, _) = run_chain(d, rc, seed, depth, opts)?;
        let agree = (0..=n0).all(|n| run.e.get(n).is_some() && seq.predicted_usize(n) == run.e.get(n).copied());
        let bound = (d * run.e.get(n0 - 1).copied().unwrap_or(0)) / 4;
        let e1 = run.e.get(n0 + 1).copied();
        Ok(TheoremSeed {
            seed,
            n0: Some(n0),
            agree_before_onset: agree,
            bound: Some(bound),
            bound_ok: e1.is_some_and(|e| e <= bound),
            e_n0_plus_2: run.e.get(n0 + 2).copied(),
            onset: run.frustration_index,
            e: run.e,
            limit: run.limit,
        })
    })?;
    let all_ok = per_seed.iter().all(TheoremSeed::ok);
    let verdict = if all_ok {
        if status == "holds" {
            "pass".to_string()
        } else {
            "pass (empirical)".to_string()
        }
    } else {
        let bad: Vec<String> = per_seed
            .iter()
            .filter(|s| !s.ok())
            .map(|s| match &s.limit {
                Some(l) => format!("seed {} ({l})", s.seed),
                None => format!("seed {}", s.seed),
            })
            .collect();
        format!("fail: {}", bad.join("; "))
    };
    Ok(TheoremReport {
        config: config(rc),
        notes,
        hypothesis_status: status.into(),
        predicted: seq.to_json().values,
        n0: Some(n0),
        per_seed,
        verdict,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRankConfig {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub level: usize,
    pub mode: Mode,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullRankReport {
    pub config: FullRankConfig,
    /// `|S| = (d/2) * D_prev^k`.
    pub s_size: usize,
    pub child_dim: usize,
    pub s_within_child_dim: bool,
    pub witness: Option<RankCheck>,
    pub haar: Vec<RankCheck>,
    pub verdict: String,
}

impl FullRankReport {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

fn child_tensor(d: usize, r: usize, k: usize, level: usize, seed: u64, opts: &GrowOptions) -> Result<GammaLevel> {
    if level == 1 {
        return Ok(match opts.mode {
            Mode::Numeric => leaf_level(d),
            Mode::Rational => leaf_level_exact(d),
        });
    }
    let tgs = groundspace::grow_tree_with(d, r, k, level, seed, opts)?;
    if let Some(limit) = tgs.limit {
        return Err(limit);
    }
    Ok(tgs.gammas[level - 1][0].clone())
}

/// Full-row-rank check of C at `level` with the one-hot tree assignment on
/// the top edges and each generic child row-reduced on
/// `{i < d/2} x all alpha_prev`; repeated with Haar frames per seed, where
/// the target is `min(rows, cols)`.
pub fn verify_fullrank_appendix(
    d: usize,
    r: usize,
    k: usize,
    level: usize,
    seeds: &[u64],
    opts: &GrowOptions,
) -> Result<FullRankReport> {
    verify_fullrank_appendix_with(d, r, k, level, seeds, opts, &Sequential)
}

pub fn verify_fullrank_appendix_with<M: SeedMap>(
    d: usize,
    r: usize,
    k: usize,
    level: usize,
    seeds: &[u64],
    opts: &GrowOptions,
    runner: &M,
) -> Result<FullRankReport> {
    if level < 2 {
        return Err(Error::InvalidParameter(format!("level must be >= 2 (got {level})")));
    }
    let frames: Vec<Frame> = (0..k)
        .map(|l| projectors::structured_tree_frame(d, r, k, l))
        .collect::<Result<_>>()?;
    let config = FullRankConfig {
        d,
        r,
        k,
        level,
        mode: opts.mode,
        seeds: seeds.to_vec(),
    };
    let base = seeds.first().copied().unwrap_or(0);
    let children: Vec<GammaLevel> = (0..k)
        .map(|l| child_tensor(d, r, k, level - 1, edge_seed(base, l + 1), opts))
        .collect::<Result<_>>()?;
    let block = children[0].block_rows();
    let s = RowReductionSet::lower_half(d, block);
    let child_dim = children.iter().map(|c| c.dim).min().unwrap_or(0);
    let s_ok = s.len() <= child_dim;
    let mut report = FullRankReport {
        config,
        s_size: s.len(),
        child_dim,
        s_within_child_dim: s_ok,
        witness: None,
        haar: Vec::new(),
        verdict: String::new(),
    };
    let mut failures = Vec::new();
    if s_ok {
        let reduced: Vec<GammaLevel> = children
            .iter()
            .map(|c| row_reduce_on_set(c, &s, &opts.policy))
            .collect::<Result<_>>()?;
        let op = build_constraint(&reduced, &frames)?;
        let w = rank_check(&op, op.dense_rows(), None, &opts.policy, &opts.budget)?;
        if !w.ok() {
            failures.push(format!("witness rank {} of {} rows", w.rank, w.rows));
        }
        report.witness = Some(w);
    } else {
        failures.push(format!("|S| = {} exceeds the child dimension {child_dim}", s.len()));
    }
    let haar_opts = GrowOptions {
        mode: Mode::Numeric,
        ..opts.clone()
    };
    report.haar = runner.map(seeds, &|seed| {
        let kids: Vec<GammaLevel> = (0..k)
            .map(|l| child_tensor(d, r, k, level - 1, edge_seed(seed, l + 1), &haar_opts))
            .collect::<Result<_>>()?;
        let top: Vec<Frame> = (0..k)
            .map(|l| projectors::sample_haar_frame(d, r, edge_seed(seed, 1000 + l)))
            .collect::<Result<_>>()?;
        let op = build_constraint(&kids, &top)?;
        let target = op.dense_rows().min(op.dense_cols());
        rank_check(&op, target, Some(seed), &opts.policy, &opts.budget)
    })?;
    for h in report.haar.iter().filter(|h| !h.ok()) {
        failures.push(format!(
            "Haar seed {}: rank {} of {}",
            h.seed.unwrap_or_default(),
            h.rank,
            h.target
        ));
    }
    report.verdict = if failures.is_empty() {
        "pass".into()
    } else {
        format!("fail: {}", failures.join("; "))
    };
    Ok(report)
}

/// True when the rows in `s` of `g` form a permutation of identity rows.
pub fn is_permutation_identity(g: &GammaLevel, s: &RowReductionSet) -> bool {
    let rows = s.rows();
    let mut used = vec![false; g.dim];
    for &row in &rows {
        let mut hit = None;
        for j in 0..g.dim {
            let (is_one, is_zero) = match &g.matrix {
                Matrix::Numeric(m) => (m[(row, j)] == 1.0, m[(row, j)] == 0.0),
                Matrix::Exact(m) => (m.get(row, j).is_one(), m.get(row, j).is_zero()),
            };
            if is_one && hit.is_none() {
                hit = Some(j);
            } else if !is_zero {
                return false;
            }
        }
        match hit {
            Some(j) if !used[j] => used[j] = true,
            _ => return false,
        }
    }
    true
}

/// Exact rational matrix with the given row-major integer entries.
pub fn qmatrix(rows: usize, cols: usize, values: &[i64]) -> QMatrix {
    QMatrix::from_fn(rows, cols, |i, j| {
        BigRational::from_integer(values[i * cols + j].into())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_examples() {
        let s = select_set_s(6, 3, 8).unwrap();
        assert_eq!(s.len(), 6);
        assert!(s.members.iter().all(|&(i, _)| i < 2));
        let s = select_set_s(5, 3, 8).unwrap();
        assert_eq!(s.members, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1)]);
        let s = select_set_s(3, 3, 2).unwrap();
        assert_eq!(s.members, vec![(0, 0), (0, 1), (0, 2)]);
        assert!(matches!(select_set_s(7, 3, 4), Err(Error::HypothesisViolation(_))));
    }

    #[test]
    fn leaf_is_already_reduced() {
        let g = leaf_level(3);
        let s = RowReductionSet {
            block: 1,
            members: vec![(0, 0), (1, 0), (2, 0)],
        };
        let out = row_reduce_on_set(&g, &s, &TolPolicy::default()).unwrap();
        assert_eq!(out.matrix, g.matrix);
    }

    #[test]
    fn random_tall_tensor_reduces_to_permutation() {
        let m = Mat::from_fn(4, 3, |i, j| ((i * 7 + j * 13 + i * i * j) % 11) as f64 - 5.0);
        let g = GammaLevel::new(2, 2, 1, 2, Matrix::Numeric(m.clone())).unwrap();
        let s = RowReductionSet {
            block: 2,
            members: vec![(0, 0), (0, 1), (1, 1)],
        };
        let out = row_reduce_on_set(&g, &s, &TolPolicy::default()).unwrap();
        assert!(is_permutation_identity(&out, &s));
        let both = Mat::from_fn(4, 6, |i, j| {
            if j < 3 {
                m[(i, j)]
            } else {
                out.matrix.to_f64()[(i, j - 3)]
            }
        });
        assert_eq!(linalg::rank(both.as_ref(), &TolPolicy::default()).unwrap().rank, 3);
    }

    #[test]
    fn exact_reduction_and_deficiency() {
        let g = GammaLevel::new(2, 2, 1, 2, Matrix::Exact(qmatrix(4, 2, &[1, 2, 2, 4, 0, 1, 3, 0]))).unwrap();
        let s = RowReductionSet {
            block: 2,
            members: vec![(0, 0), (1, 1)],
        };
        let out = row_reduce_on_set(&g, &s, &TolPolicy::default()).unwrap();
        assert!(is_permutation_identity(&out, &s));
        let bad = RowReductionSet {
            block: 2,
            members: vec![(0, 0), (0, 1)],
        };
        assert_eq!(
            row_reduce_on_set(&g, &bad, &TolPolicy::default()),
            Err(Error::RankDeficientSubmatrix { rows: 2, rank: 1 })
        );
    }

    #[test]
    fn lemma_collapse_for_two_level_qubits() {
        let rep = verify_lemma_k1(2, 2, None, 4, &[0, 1, 2, 3, 4], &GrowOptions::default()).unwrap();
        assert_eq!(rep.n0, Some(2));
        let w = rep.witness.as_ref().unwrap();
        assert_eq!((w.rows, w.cols, w.rank), (4, 4, 4));
        assert_eq!(rep.verdict, "pass");
    }

    #[test]
    fn lemma_for_qutrits() {
        let rep = verify_lemma_k1(3, 3, None, 6, &[0, 1, 2, 3, 4], &GrowOptions::default()).unwrap();
        assert_eq!(rep.n0, Some(4));
        assert_eq!(rep.verdict, "pass");
        assert!(rep.generic.iter().all(|g| g.e == vec![1, 3, 6, 9, 9, 0]));
    }

    #[test]
    fn lemma_negative_control() {
        let rep = verify_lemma_k1(4, 2, None, 6, &[0, 1], &GrowOptions::default()).unwrap();
        assert_eq!(rep.n0, None);
        assert!(rep.verdict.starts_with("hypothesis not met"));
        assert!(rep.generic.iter().all(|g| g.e.iter().all(|&e| e > 0)));
        assert!(matches!(
            verify_lemma_k1(4, 2, Some(3), 6, &[0], &GrowOptions::default()),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn theorem_regimes() {
        let rep = verify_theorem_k1p(2, 1, &[0], 8, &GrowOptions::default()).unwrap();
        assert_eq!(rep.verdict, "not applicable: unfrustrated regime");
        let rep = verify_theorem_k1p(3, 3, &[0, 1, 2], 8, &GrowOptions::default()).unwrap();
        assert_eq!(rep.hypothesis_status, "empirical");
        assert_eq!(rep.n0, Some(4));
        assert!(rep.passed(), "{rep:?}");
        assert!(theorem_hypothesis(8, 17));
        assert!(!theorem_hypothesis(3, 3));
    }

    #[test]
    fn wlog_rank_is_clamped() {
        let rep = verify_theorem_k1p(2, 4, &[0], 6, &GrowOptions::default()).unwrap();
        assert_eq!(rep.config.r, 2);
        assert_eq!(rep.notes.len(), 1);
    }

    #[test]
    fn fullrank_small_cases() {
        let exact = GrowOptions {
            mode: Mode::Rational,
            ..GrowOptions::default()
        };
        let rep = verify_fullrank_appendix(4, 2, 2, 2, &[0, 1], &exact).unwrap();
        let w = rep.witness.as_ref().unwrap();
        assert_eq!((w.rows, w.cols, w.rank), (16, 64, 16));
        assert!(w.certified);
        assert!(rep.passed(), "{rep:?}");
        let rep = verify_fullrank_appendix(2, 1, 1, 2, &[0], &exact).unwrap();
        let w = rep.witness.as_ref().unwrap();
        assert_eq!((w.rows, w.cols, w.rank), (1, 4, 1));
        assert!(matches!(
            verify_fullrank_appendix(4, 4, 2, 2, &[0], &exact),
            Err(Error::InfeasibleAssignment { .. })
        ));
    }
}
