//! Brute-force checks on the full `d^N` Hilbert space.
//!
//! Basis states are indexed in the level-major site order of [`TreeShape`]
//! with site 0 as the slowest digit.

use std::time::Instant;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::groundspace::{self, GrowOptions, Matrix, TreeGroundSpace};
use crate::linalg::{self, Ambiguity, TolPolicy};
use crate::projectors::{self, Frame};
use crate::tree::TreeShape;

pub const DEFAULT_DENSE_DIM: usize = 20_000;
pub const DEFAULT_NULLITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleConfig {
    /// Largest `d^N` handled densely.
    pub dense_dim: usize,
    /// Eigenvalues below `tol * lambda_max` count as zero.
    pub tol: f64,
    pub memory_bytes: u128,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            dense_dim: DEFAULT_DENSE_DIM,
            tol: DEFAULT_NULLITY_TOL,
            memory_bytes: groundspace::DEFAULT_BUDGET_BYTES,
        }
    }
}

impl OracleConfig {
    fn check(&self, shape: &TreeShape) -> Result<usize> {
        let dim = shape
            .hilbert_dim()
            .filter(|&n| n <= self.dense_dim)
            .ok_or_else(|| Error::ResourceLimit {
                what: format!("dense Hilbert space d^N for d={}, N={}", shape.d, shape.sites),
                needed: (shape.d as u128).saturating_pow(shape.sites as u32),
                budget: self.dense_dim as u128,
            })?;
        let bytes = 8 * 3 * (dim as u128) * (dim as u128);
        if bytes > self.memory_bytes {
            return Err(Error::ResourceLimit {
                what: "dense Hamiltonian".into(),
                needed: bytes,
                budget: self.memory_bytes,
            });
        }
        Ok(dim)
    }
}

#[derive(Debug, Clone)]
pub struct FullOperator {
    pub dim: usize,
    pub matrix: Mat<f64>,
}

fn digit(x: usize, site: usize, n: usize, d: usize) -> usize {
    (x / d.pow((n - 1 - site) as u32)) % d
}

/// `sum_edges I (x) Pi_edge (x) I`, with `frames[c - 1]` on the edge above `c`.
pub fn full_hamiltonian(shape: &TreeShape, frames: &[Frame], config: &OracleConfig) -> Result<FullOperator> {
    let dim = config.check(shape)?;
    if frames.len() != shape.edges.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frames for {} edges",
            frames.len(),
            shape.edges.len()
        )));
    }
    let (d, n) = (shape.d, shape.sites);
    let mut h = Mat::<f64>::zeros(dim, dim);
    for e in &shape.edges {
        let pi = frames[e.child - 1].projector();
        let wc = d.pow((n - 1 - e.child) as u32);
        let wp = d.pow((n - 1 - e.parent) as u32);
        for x in 0..dim {
            let (xc, xp) = (digit(x, e.child, n, d), digit(x, e.parent, n, d));
            let base = x - xc * wc - xp * wp;
            let col = projectors::pair_index(d, xc, xp);
            for yc in 0..d {
                for yp in 0..d {
                    let v = pi[(projectors::pair_index(d, yc, yp), col)];
                    if v != 0.0 {
                        h[(base + yc * wc + yp * wp, x)] += v;
                    }
                }
            }
        }
    }
    Ok(FullOperator { dim, matrix: h })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullityReport {
    pub nullity: usize,
    pub lambda_max: f64,
    pub lambda_min: f64,
    pub cut: f64,
    pub ambiguity: Option<Ambiguity>,
}

impl NullityReport {
    pub fn psd_ok(&self) -> bool {
        self.lambda_min >= -1e-10 * self.lambda_max
    }
}

pub fn nullity(h: &FullOperator, tol: f64) -> Result<NullityReport> {
    let ev = linalg::symmetric_eigenvalues(h.matrix.as_ref())?;
    let lambda_max = ev.last().copied().unwrap_or(0.0);
    let lambda_min = ev.first().copied().unwrap_or(0.0);
    let mut mags: Vec<f64> = ev.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let decision = linalg::decide_rank(&mags, h.dim, h.dim, &TolPolicy::with_rel_tol(tol));
    Ok(NullityReport {
        nullity: h.dim - decision.rank,
        lambda_max,
        lambda_min,
        cut: decision.cut,
        ambiguity: decision.ambiguity,
    })
}

fn kron(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    let (br, bc) = b.shape();
    Mat::from_fn(a.nrows() * br, a.ncols() * bc, |i, j| {
        a[(i / br, j / bc)] * b[(i % br, j % bc)]
    })
}

/// Columns: the states of the subtree rooted at `site`, with physical
/// indices in depth-first order.
fn subtree_states(tgs: &TreeGroundSpace, site: usize) -> Mat<f64> {
    let shape = &tgs.shape;
    let level = shape.level_of(site);
    let pos = site - shape.sites_at_level(level).start;
    let gamma = tgs.gammas[level - 1][pos].matrix.to_f64();
    if level == 1 {
        return gamma;
    }
    let mut phi = Mat::<f64>::identity(1, 1);
    for c in shape.children(site) {
        phi = kron(phi.as_ref(), subtree_states(tgs, c).as_ref());
    }
    let d = tgs.d;
    let b = gamma.nrows() / d;
    let xr = phi.nrows();
    let mut out = Mat::<f64>::zeros(d * xr, gamma.ncols());
    for i in 0..d {
        let block = linalg::matmul(phi.as_ref(), gamma.as_ref().subrows(i * b, b));
        out.as_mut().subrows_mut(i * xr, xr).copy_from(&block);
    }
    out
}

/// All root solutions as columns of a `d^N x E_depth` matrix in site order.
pub fn reconstruct_states(tgs: &TreeGroundSpace, config: &OracleConfig) -> Result<Mat<f64>> {
    let dim = config.check(&tgs.shape)?;
    if !tgs.complete() {
        return Err(Error::InvalidParameter("tree growth did not complete".into()));
    }
    let dfs = subtree_states(tgs, 0);
    let order = tgs.shape.subtree_order(0);
    let (d, n) = (tgs.d, tgs.shape.sites);
    let mut out = Mat::<f64>::zeros(dim, dfs.ncols());
    for x in 0..dim {
        let mut y = 0;
        for (t, &s) in order.iter().enumerate() {
            y += digit(x, t, n, d) * d.pow((n - 1 - s) as u32);
        }
        for j in 0..dfs.ncols() {
            out[(y, j)] = dfs[(x, j)];
        }
    }
    Ok(out)
}

pub fn reconstruct_state(tgs: &TreeGroundSpace, alpha: usize, config: &OracleConfig) -> Result<Vec<f64>> {
    let e = tgs.observed.last().copied().unwrap_or(0);
    if alpha >= e {
        return Err(Error::IndexOutOfRange { index: alpha, limit: e });
    }
    let all = reconstruct_states(tgs, config)?;
    Ok(all.col(alpha).iter().copied().collect())
}

/// Max over states, edges and projector columns of
/// `|| (I (x) |v><v| (x) I) psi || / || psi ||`.
pub fn verify_annihilation(states: MatRef<'_, f64>, shape: &TreeShape, frames: &[Frame]) -> f64 {
    let (d, n) = (shape.d, shape.sites);
    let dim = states.nrows();
    let mut worst = 0.0_f64;
    for j in 0..states.ncols() {
        let psi = states.col(j);
        let norm = psi.norm_l2();
        if norm == 0.0 {
            continue;
        }
        for e in &shape.edges {
            let f = &frames[e.child - 1];
            let wc = d.pow((n - 1 - e.child) as u32);
            let wp = d.pow((n - 1 - e.parent) as u32);
            for p in 0..f.r() {
                let col = f.columns().col(p);
                let vnorm = col.norm_l2();
                let mut w = vec![0.0; dim];
                for x in 0..dim {
                    let (xc, xp) = (digit(x, e.child, n, d), digit(x, e.parent, n, d));
                    w[x - xc * wc - xp * wp] += col[projectors::pair_index(d, xc, xp)] * psi[x];
                }
                let wn = w.iter().map(|v| v * v).sum::<f64>().sqrt();
                worst = worst.max(vnorm * wn / norm);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    /// `None` when the oracle was skipped for budget reasons.
    pub nullity: Option<usize>,
    #[serde(rename = "E")]
    pub e: Option<usize>,
    /// Predicted `D_depth` as a decimal string.
    #[serde(rename = "D")]
    pub d: String,
    pub residual: Option<f64>,
    pub ambiguous: bool,
    pub psd_ok: Option<bool>,
    pub agree: bool,
    pub notes: Vec<String>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckConfig {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub depth: usize,
    pub grow: GrowOptions,
    pub oracle: OracleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckReport {
    pub config: CrosscheckConfig,
    pub seeds: Vec<SeedOutcome>,
    pub verdict: String,
}

impl CrosscheckReport {
    pub fn passed(&self) -> bool {
        self.seeds.iter().all(|s| s.agree)
    }
}

/// Residual threshold below which reconstructed states count as annihilated.
pub const ANNIHILATION_TOL: f64 = 1e-9;

pub fn crosscheck_seed(config: &CrosscheckConfig, seed: u64) -> Result<SeedOutcome> {
    let start = Instant::now();
    let tgs = groundspace::grow_tree_with(config.d, config.r, config.k, config.depth, seed, &config.grow)?;
    let mut out = crosscheck_grown(&tgs, &config.oracle)?;
    out.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

/// Cross-check an already grown instance against the dense Hamiltonian.
pub fn crosscheck_grown(tgs: &TreeGroundSpace, oracle: &OracleConfig) -> Result<SeedOutcome> {
    let start = Instant::now();
    let (depth, seed) = (tgs.depth, tgs.seed);
    let predicted = tgs.predicted.predicted(depth);
    let want = tgs.predicted.predicted_usize(depth);
    let mut out = SeedOutcome {
        seed,
        nullity: None,
        e: tgs.complete().then(|| tgs.observed[depth]),
        d: predicted.map(|v| v.to_string()).unwrap_or_else(|| "unknown".into()),
        residual: None,
        ambiguous: tgs.levels.iter().any(|l| !l.ambiguities.is_empty()),
        psd_ok: None,
        agree: false,
        notes: Vec::new(),
        wall_ms: 0.0,
    };
    if let Some(limit) = &tgs.limit {
        out.notes.push(format!("growth stopped: {limit}"));
    }
    if tgs.levels.iter().any(|l| !l.residual_ok()) {
        out.notes.push("kernel residual above bound".into());
    }
    if tgs.levels.iter().flat_map(|l| &l.dual_path).any(|r| !r.agree()) {
        out.notes.push("dense and structured kernels disagree".into());
    }
    let oracle_ok = match full_hamiltonian(&tgs.shape, &tgs.frames, oracle) {
        Ok(h) => {
            let rep = nullity(&h, oracle.tol)?;
            out.nullity = Some(rep.nullity);
            out.psd_ok = Some(rep.psd_ok());
            out.ambiguous |= rep.ambiguity.is_some();
            if tgs.complete() && out.e.unwrap_or(0) > 0 {
                let states = reconstruct_states(tgs, oracle)?;
                out.residual = Some(verify_annihilation(states.as_ref(), &tgs.shape, &tgs.frames));
            } else {
                out.residual = Some(0.0);
            }
            true
        }
        Err(e) if e.is_resource_limit() => {
            out.notes.push(format!("oracle skipped: {e}"));
            false
        }
        Err(e) => return Err(e),
    };
    let e_ok = out.e.is_some() && out.e == want;
    let n_ok = !oracle_ok || out.nullity == out.e;
    let res_ok = out.residual.is_none_or(|r| r < ANNIHILATION_TOL);
    let quality_ok = tgs
        .levels
        .iter()
        .all(|l| l.residual_ok() && l.dual_path.iter().all(|r| r.agree()));
    out.agree = e_ok && n_ok && res_ok && quality_ok && !out.ambiguous && out.psd_ok != Some(false);
    out.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

pub fn verdict_for(seeds: &[SeedOutcome]) -> String {
    if seeds.iter().all(|s| s.agree) {
        "pass".into()
    } else {
        let bad: Vec<String> = seeds.iter().filter(|s| !s.agree).map(|s| s.seed.to_string()).collect();
        format!("fail: seeds {}", bad.join(","))
    }
}

pub fn crosscheck(config: &CrosscheckConfig, seeds: &[u64]) -> Result<CrosscheckReport> {
    let outcomes = seeds
        .iter()
        .map(|&s| crosscheck_seed(config, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(CrosscheckReport {
        config: config.clone(),
        verdict: verdict_for(&outcomes),
        seeds: outcomes,
    })
}

/// Corrupt one entry of the root tensor (fault injection for tests).
pub fn corrupt_root(tgs: &mut TreeGroundSpace, row: usize, col: usize, delta: f64) {
    let root = &mut tgs.gammas[tgs.depth - 1][0];
    if let Matrix::Numeric(m) = &mut root.matrix {
        m[(row, col)] += delta;
    }
}
