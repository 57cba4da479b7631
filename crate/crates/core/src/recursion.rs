//! Exact analytics of the ground-space dimension recursion
//! `D_{n+1} = d D_n^k - r k D_{n-1}^k D_n^{k-1}` and its ratio recursion
//! `gamma_{n+1} = d - rk / gamma_n`.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of gamma steps checked against `x_+` in the unfrustrated regime.
/// The bound `gamma_n >= x_+` is inductive, so this is a spot check.
pub const UNFRUSTRATED_CHECK_STEPS: usize = 64;

pub const DEFAULT_PHASE_ITERATIONS: usize = 1_000_000;

fn check_params(d: usize, k: usize) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!("d={d} must be >= 2")));
    }
    if k < 1 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    Ok(())
}

/// `4rk <= d^2`, i.e. `rk <= d^2/4`.
pub fn within_threshold(d: usize, r: usize, k: usize) -> bool {
    4 * (r as u128) * (k as u128) <= (d as u128) * (d as u128)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DimensionSequence {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    /// `D_0 ..= D_m`.
    pub values: Vec<BigInt>,
    /// Index of the first non-positive value.
    pub truncated_at: Option<usize>,
    /// Set when unrolling stopped because a value outgrew `max_bits`.
    pub size_limited: bool,
}

impl DimensionSequence {
    /// `D_n`, or 0 past the truncation point.
    pub fn predicted(&self, n: usize) -> Option<BigInt> {
        if let Some(t) = self.truncated_at {
            if n >= t {
                return Some(BigInt::zero());
            }
        }
        self.values.get(n).cloned()
    }

    /// `max(D_n, 0)` as an integer when it fits.
    pub fn predicted_usize(&self, n: usize) -> Option<usize> {
        self.predicted(n).map(|v| {
            if v.is_negative() {
                0
            } else {
                v.to_usize().unwrap_or(usize::MAX)
            }
        })
    }

    pub fn to_json(&self) -> DimensionSequenceJson {
        DimensionSequenceJson {
            d: self.d,
            r: self.r,
            k: self.k,
            values: self.values.iter().map(|v| v.to_string()).collect(),
            truncated_at: self.truncated_at,
            size_limited: self.size_limited,
        }
    }
}

/// JSON mirror with exact values as decimal strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionSequenceJson {
    pub d: usize,
    pub r: usize,
    pub k: usize,
    pub values: Vec<String>,
    pub truncated_at: Option<usize>,
    pub size_limited: bool,
}

pub fn dimension_sequence(d: usize, r: usize, k: usize, n_max: usize) -> Result<DimensionSequence> {
    dimension_sequence_capped(d, r, k, n_max, u64::MAX)
}

/// Like [`dimension_sequence`] but stops once a value exceeds `max_bits`.
pub fn dimension_sequence_capped(
    d: usize,
    r: usize,
    k: usize,
    n_max: usize,
    max_bits: u64,
) -> Result<DimensionSequence> {
    check_params(d, k)?;
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let dd = BigInt::from(d);
    let rk = BigInt::from(r) * BigInt::from(k);
    let kk = k as u32;
    let mut values = vec![BigInt::one(), dd.clone()];
    let mut size_limited = false;
    while values.len() <= n_max {
        let n = values.len() - 1;
        let cur = &values[n];
        let prev = &values[n - 1];
        let cur_km1 = num_traits::pow(cur.clone(), (kk - 1) as usize);
        let next = &dd * &cur_km1 * cur - &rk * num_traits::pow(prev.clone(), kk as usize) * &cur_km1;
        let stop = !next.is_positive();
        if next.bits() > max_bits {
            size_limited = true;
            break;
        }
        values.push(next);
        if stop {
            break;
        }
    }
    let truncated_at = values.iter().position(|v| !v.is_positive());
    Ok(DimensionSequence {
        d,
        r,
        k,
        values,
        truncated_at,
        size_limited,
    })
}

/// Closed-form description of the larger fixed point
/// `x_+ = (d + sqrt(d^2 - 4rk)) / 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRoot {
    pub d: usize,
    pub rk: usize,
    pub discriminant: i128,
    pub approx: f64,
}

impl LimitRoot {
    /// Exact `gamma >= x_+`: `x_+` is the larger root of the upward
    /// parabola `x^2 - d x + rk`, so this holds iff `gamma >= d/2` and the
    /// parabola is nonnegative at `gamma`.
    pub fn is_below_or_at(&self, gamma: &BigRational) -> bool {
        let d = BigRational::from_integer(BigInt::from(self.d));
        let half = &d / BigRational::from_integer(BigInt::from(2));
        let q = gamma * gamma - &d * gamma + BigRational::from_integer(BigInt::from(self.rk));
        *gamma >= half && !q.is_negative()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaSequence {
    /// `gamma_1 ..= gamma_m`; the last entry is the first non-positive one
    /// when the sequence terminated.
    pub values: Vec<BigRational>,
    pub limit_root: Option<LimitRoot>,
}

impl GammaSequence {
    pub fn terminated(&self) -> bool {
        self.values.last().is_some_and(|g| !g.is_positive())
    }

    pub fn approx(&self) -> Vec<f64> {
        self.values.iter().map(|g| g.to_f64().unwrap_or(f64::NAN)).collect()
    }
}

pub fn gamma_sequence(d: usize, r: usize, k: usize, n_max: usize) -> Result<GammaSequence> {
    check_params(d, k)?;
    if n_max < 1 {
        return Err(Error::InvalidParameter("n_max must be >= 1".into()));
    }
    let dq = BigRational::from_integer(BigInt::from(d));
    let rk = BigRational::from_integer(BigInt::from(r * k));
    let mut values = vec![dq.clone()];
    while values.len() < n_max {
        let g = values.last().expect("non-empty");
        if !g.is_positive() {
            break;
        }
        let next = &dq - &rk / g;
        values.push(next);
    }
    let limit_root = fixed_points(d, r, k).map(|(_, xp)| LimitRoot {
        d,
        rk: r * k,
        discriminant: (d * d) as i128 - 4 * (r * k) as i128,
        approx: xp,
    });
    Ok(GammaSequence { values, limit_root })
}

/// Real roots `(d -+ sqrt(d^2 - 4rk)) / 2` when they exist.
pub fn fixed_points(d: usize, r: usize, k: usize) -> Option<(f64, f64)> {
    let disc = (d * d) as f64 - 4.0 * (r * k) as f64;
    if !within_threshold(d, r, k) {
        return None;
    }
    let s = disc.max(0.0).sqrt();
    let d = d as f64;
    Some(((d - s) / 2.0, (d + s) / 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tag", content = "n")]
pub enum Phase {
    Unfrustrated,
    FrustratedAt(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseVerdict {
    pub tag: Phase,
    pub x_minus: Option<f64>,
    pub x_plus: Option<f64>,
    pub rk_over_threshold: bool,
    /// Gamma steps examined before the verdict.
    pub steps_checked: usize,
}

pub fn classify_phase(d: usize, r: usize, k: usize, n_max: usize) -> Result<PhaseVerdict> {
    check_params(d, k)?;
    let roots = fixed_points(d, r, k);
    let over = roots.is_none();
    let dq = BigRational::from_integer(BigInt::from(d));
    let rk = BigRational::from_integer(BigInt::from(r * k));
    let mut gamma = dq.clone();
    if over {
        // gamma_n strictly decreases with no real fixed point; wait for it to
        // cross zero.
        for n in 1..=n_max {
            if !gamma.is_positive() {
                return Ok(PhaseVerdict {
                    tag: Phase::FrustratedAt(n),
                    x_minus: None,
                    x_plus: None,
                    rk_over_threshold: true,
                    steps_checked: n,
                });
            }
            gamma = &dq - &rk / &gamma;
        }
        return Err(Error::IterationLimit { limit: n_max });
    }
    let root = LimitRoot {
        d,
        rk: r * k,
        discriminant: (d * d) as i128 - 4 * (r * k) as i128,
        approx: roots.expect("real roots").1,
    };
    let steps = n_max.min(UNFRUSTRATED_CHECK_STEPS);
    for n in 1..=steps {
        if !root.is_below_or_at(&gamma) {
            return Err(Error::HypothesisViolation(format!(
                "gamma_{n} fell below x_+ for (d, r, k) = ({d}, {r}, {k})"
            )));
        }
        let next = &dq - &rk / &gamma;
        if next > gamma {
            return Err(Error::HypothesisViolation(format!(
                "gamma increased at step {n} for (d, r, k) = ({d}, {r}, {k})"
            )));
        }
        gamma = next;
    }
    Ok(PhaseVerdict {
        tag: Phase::Unfrustrated,
        x_minus: roots.map(|r| r.0),
        x_plus: roots.map(|r| r.1),
        rk_over_threshold: false,
        steps_checked: steps,
    })
}

/// `log2 G_n` with `G_n = x_+^{s_{n-1}} d^{k^{n-1}}` and
/// `s_{n-1} = (k^{n-1} - 1)/(k - 1)` (`n - 1` when `k = 1`).
pub fn lower_bound_log2(d: usize, r: usize, k: usize, n: usize) -> Result<f64> {
    check_params(d, k)?;
    if n < 1 {
        return Err(Error::InvalidParameter("n must be >= 1".into()));
    }
    let (_, xp) = fixed_points(d, r, k)
        .ok_or_else(|| Error::DomainError(format!("rk = {} exceeds d^2/4 = {}", r * k, (d * d) as f64 / 4.0)))?;
    let m = (n - 1) as i32;
    let (s, kpow) = if k == 1 {
        ((n - 1) as f64, 1.0)
    } else {
        let kp = (k as f64).powi(m);
        ((kp - 1.0) / (k as f64 - 1.0), kp)
    };
    Ok(s * xp.log2() + kpow * (d as f64).log2())
}

/// `log2` of a positive big integer, accurate to double precision.
pub fn log2_bigint(v: &BigInt) -> f64 {
    if !v.is_positive() {
        return f64::NEG_INFINITY;
    }
    let bits = v.bits();
    if bits <= 64 {
        return v.to_u64().map(|x| (x as f64).log2()).unwrap_or(f64::NAN);
    }
    let shift = bits - 64;
    let top = (v >> shift).to_u64().expect("64 bits");
    (top as f64).log2() + shift as f64
}
