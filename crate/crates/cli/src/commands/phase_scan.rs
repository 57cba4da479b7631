use serde::Serialize;

use qtreeff::recursion::{self, Phase};

use crate::commands::predict::{phase_label, MAX_BITS};
use crate::config::RunConfig;
use crate::error::CliError;
use crate::parallel::Pool;
use crate::report::{csv_from_rows, to_value, CommandOutput, Status};

pub const HEADER: [&str; 9] = [
    "d",
    "r",
    "k",
    "rk",
    "threshold",
    "verdict",
    "frustration_index",
    "x_plus",
    "log2_D_at_nmax",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub rk: usize,
    /// `d^2 / 4`.
    pub threshold: f64,
    pub verdict: String,
    pub frustration_index: Option<usize>,
    pub x_plus: Option<f64>,
    #[serde(rename = "log2_D_at_nmax")]
    pub log2_d_at_nmax: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanPoint {
    #[serde(flatten)]
    pub row: ScanRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_series: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
struct SeriesRow {
    d: usize,
    r: usize,
    k: usize,
    n: usize,
    gamma: f64,
    x_plus: Option<f64>,
}

pub fn scan_point(d: usize, r: usize, k: usize, n_max: usize, series: bool) -> Result<ScanPoint, CliError> {
    let phase = recursion::classify_phase(d, r, k, recursion::DEFAULT_PHASE_ITERATIONS)?;
    let seq = recursion::dimension_sequence_capped(d, r, k, n_max, MAX_BITS)?;
    let log2 = seq
        .predicted(n_max)
        .filter(|v| v > &num_traits::Zero::zero())
        .map(|v| recursion::log2_bigint(&v));
    let gamma_series = if series {
        Some(recursion::gamma_sequence(d, r, k, n_max)?.approx())
    } else {
        None
    };
    Ok(ScanPoint {
        row: ScanRow {
            d,
            r,
            k,
            rk: r * k,
            threshold: (d * d) as f64 / 4.0,
            verdict: phase_label(&phase.tag),
            frustration_index: match phase.tag {
                Phase::FrustratedAt(n) => Some(n),
                Phase::Unfrustrated => None,
            },
            x_plus: phase.x_plus,
            log2_d_at_nmax: log2,
        },
        gamma_series,
    })
}

pub fn run(cfg: &RunConfig) -> Result<CommandOutput, CliError> {
    let grid = cfg.grid.as_ref().expect("grid resolved");
    let pts = grid.points();
    let pool = Pool::new(cfg.jobs);
    let points = pool
        .map_items(&pts, |&(d, r, k)| scan_point(d, r, k, cfg.depth, cfg.gamma_series))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let csv = if cfg.gamma_series {
        let rows: Vec<SeriesRow> = points
            .iter()
            .flat_map(|p| {
                let series = p.gamma_series.clone().unwrap_or_default();
                series.into_iter().enumerate().map(move |(i, g)| SeriesRow {
                    d: p.row.d,
                    r: p.row.r,
                    k: p.row.k,
                    n: i + 1,
                    gamma: g,
                    x_plus: p.row.x_plus,
                })
            })
            .collect();
        csv_from_rows(&["d", "r", "k", "n", "gamma", "x_plus"], &rows)?
    } else {
        let rows: Vec<&ScanRow> = points.iter().map(|p| &p.row).collect();
        csv_from_rows(&HEADER, &rows)?
    };
    let unfrustrated = points.iter().filter(|p| p.row.frustration_index.is_none()).count();
    Ok(CommandOutput {
        status: Status::Ok,
        verdict: format!(
            "{} points: {} unfrustrated, {} frustrated",
            points.len(),
            unfrustrated,
            points.len() - unfrustrated
        ),
        result: to_value(&serde_json::json!({ "points": points })),
        csv,
    })
}
