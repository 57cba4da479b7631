use serde::Serialize;

use qtreeff::projectors::{self, Frame, FrameValidationReport};
use qtreeff::Error;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::parallel::Pool;
use crate::report::{csv_from_rows, to_value, CommandOutput, Status};

#[derive(Debug, Clone, Serialize)]
pub struct FramePoint {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub chain: FrameValidationReport,
    pub haar: FrameValidationReport,
    pub integer: FrameValidationReport,
    pub tree_feasible: bool,
    /// Why no tree assignment exists, when it does not.
    pub tree_infeasible: Option<String>,
    pub tree: Option<FrameValidationReport>,
    pub tree_frames: Vec<FrameValidationReport>,
}

impl FramePoint {
    pub fn clean(&self) -> bool {
        self.chain.passed()
            && self.haar.passed()
            && self.integer.passed()
            && self.tree.as_ref().is_none_or(FrameValidationReport::passed)
            && self.tree_frames.iter().all(FrameValidationReport::passed)
    }

    fn violations(&self) -> usize {
        [&self.chain, &self.haar, &self.integer]
            .into_iter()
            .chain(self.tree.iter())
            .chain(self.tree_frames.iter())
            .map(|r| r.property_violations.len())
            .sum()
    }
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    d: usize,
    r: usize,
    k: usize,
    tree_feasible: bool,
    chain_ok: bool,
    haar_ok: bool,
    integer_ok: bool,
    tree_ok: Option<bool>,
    violations: usize,
}

pub fn validate_point(d: usize, r: usize, k: usize, seed: u64) -> Result<FramePoint, CliError> {
    let chain = projectors::validate_frame(&projectors::structured_chain_frame(d, r)?);
    let haar = projectors::validate_frame(&projectors::sample_haar_frame(d, r, seed)?);
    let integer = projectors::validate_frame(&projectors::sample_integer_frame(d, r, seed)?);
    let frames: Result<Vec<Frame>, Error> = (0..k).map(|l| projectors::structured_tree_frame(d, r, k, l)).collect();
    let (tree_infeasible, tree, tree_frames) = match frames {
        Ok(f) => (
            None,
            Some(projectors::validate_tree_assignment(&f, d, r, k)),
            f.iter().map(projectors::validate_frame).collect(),
        ),
        Err(Error::InfeasibleAssignment { reason, .. }) => (Some(reason), None, Vec::new()),
        Err(e) => return Err(e.into()),
    };
    Ok(FramePoint {
        d,
        r,
        k,
        chain,
        haar,
        integer,
        tree_feasible: tree.is_some(),
        tree_infeasible,
        tree,
        tree_frames,
    })
}

pub fn run(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let grid = cfg.grid.as_ref().expect("grid resolved");
    let pts: Vec<(usize, usize, usize)> = grid
        .points()
        .into_iter()
        .filter(|&(d, r, _)| r >= 1 && r <= d * d)
        .collect();
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let pool = Pool::new(cfg.jobs);
    let points = pool
        .map_items(&pts, |&(d, r, k)| validate_point(d, r, k, seed))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let dirty: Vec<String> = points
        .iter()
        .filter(|p| !p.clean())
        .map(|p| format!("({},{},{})", p.d, p.r, p.k))
        .collect();
    let rows: Vec<Row> = points
        .iter()
        .map(|p| Row {
            d: p.d,
            r: p.r,
            k: p.k,
            tree_feasible: p.tree_feasible,
            chain_ok: p.chain.passed(),
            haar_ok: p.haar.passed(),
            integer_ok: p.integer.passed(),
            tree_ok: p.tree.as_ref().map(|t| t.passed()),
            violations: p.violations(),
        })
        .collect();
    let csv = csv_from_rows(
        &[
            "d",
            "r",
            "k",
            "tree_feasible",
            "chain_ok",
            "haar_ok",
            "integer_ok",
            "tree_ok",
            "violations",
        ],
        &rows,
    )?;
    let feasible = points.iter().filter(|p| p.tree_feasible).count();
    let verdict = if dirty.is_empty() {
        format!("clean: {} points, {} with a tree assignment", points.len(), feasible)
    } else {
        format!("violations at {}", dirty.join(" "))
    };
    Ok(CommandOutput {
        status: if dirty.is_empty() {
            Status::Ok
        } else {
            Status::Violation
        },
        verdict,
        result: to_value(&serde_json::json!({ "points": points })),
        csv,
    })
}
