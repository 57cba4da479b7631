use serde::Serialize;

use qtreeff::recursion::{self, DimensionSequenceJson, Phase, PhaseVerdict};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::report::{csv_from_rows, to_value, CommandOutput, Status};

/// Values above this many bits are not unrolled.
pub const MAX_BITS: u64 = 1 << 24;

#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub n: usize,
    #[serde(rename = "D")]
    pub d: String,
    pub gamma: Option<String>,
    pub gamma_approx: Option<f64>,
    pub log2_d: Option<f64>,
    pub lower_bound_log2: Option<f64>,
    pub bound_holds: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PredictResult {
    pub dimensions: DimensionSequenceJson,
    pub x_minus: Option<f64>,
    pub x_plus: Option<f64>,
    pub phase: PhaseVerdict,
    pub rows: Vec<BoundRow>,
}

pub fn phase_label(p: &Phase) -> String {
    match p {
        Phase::Unfrustrated => "Unfrustrated".into(),
        Phase::FrustratedAt(n) => format!("FrustratedAt({n})"),
    }
}

pub fn predict(d: usize, r: usize, k: usize, n_max: usize) -> Result<PredictResult, CliError> {
    let seq = recursion::dimension_sequence_capped(d, r, k, n_max, MAX_BITS)?;
    let gam = recursion::gamma_sequence(d, r, k, n_max)?;
    let phase = recursion::classify_phase(d, r, k, recursion::DEFAULT_PHASE_ITERATIONS)?;
    let below = recursion::within_threshold(d, r, k);
    let fp = recursion::fixed_points(d, r, k);
    let rows = seq
        .values
        .iter()
        .enumerate()
        .map(|(n, v)| {
            let g = n.checked_sub(1).and_then(|i| gam.values.get(i));
            let log2_d = (v > &num_traits::Zero::zero()).then(|| recursion::log2_bigint(v));
            let lb = (below && n >= 1)
                .then(|| recursion::lower_bound_log2(d, r, k, n))
                .transpose()?;
            Ok(BoundRow {
                n,
                d: v.to_string(),
                gamma: g.map(|g| g.to_string()),
                gamma_approx: g.map(|g| num_traits::ToPrimitive::to_f64(g).unwrap_or(f64::NAN)),
                log2_d,
                lower_bound_log2: lb,
                bound_holds: lb.map(|b| log2_d.is_some_and(|l| l >= b - 1e-9)),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(PredictResult {
        dimensions: seq.to_json(),
        x_minus: fp.map(|p| p.0),
        x_plus: fp.map(|p| p.1),
        phase,
        rows,
    })
}

pub fn run(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let (d, r) = cfg.dr()?;
    let res = predict(d, r, cfg.k, cfg.depth)?;
    let bound_ok = res.rows.iter().all(|row| row.bound_holds != Some(false));
    let csv = csv_from_rows(
        &[
            "n",
            "D",
            "gamma",
            "gamma_approx",
            "log2_D",
            "lower_bound_log2",
            "bound_holds",
        ],
        &res.rows,
    )?;
    Ok(CommandOutput {
        status: if bound_ok { Status::Ok } else { Status::Violation },
        verdict: phase_label(&res.phase.tag),
        result: to_value(&res),
        csv,
    })
}
