//! Confidence-level corrections: turn point estimates Ŝ and Ŵ into lower
//! bounds that hold with the configured confidence.
//!
//! The default is a distribution-free Hoeffding bound with a union bound over
//! the cells that enter each statistic; exact Clopper-Pearson binomial
//! intervals are available as a tighter alternative.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::chsh;
use crate::error::{Error, Result};
use crate::events::CountsTable;
use crate::witness::{self, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    #[default]
    HoeffdingUnion,
    ClopperPearsonUnion,
}

/// Confidence level and interval method for the finite-size corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSpec {
    pub level: f64,
    pub method: BoundMethod,
}

impl Default for ConfidenceSpec {
    fn default() -> Self {
        ConfidenceSpec {
            level: 0.99,
            method: BoundMethod::HoeffdingUnion,
        }
    }
}

impl ConfidenceSpec {
    pub fn new(level: f64, method: BoundMethod) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::domain(format!(
                "confidence level {level} outside (0,1)"
            )));
        }
        Ok(ConfidenceSpec { level, method })
    }
}

/// Two-sided Hoeffding half-width for a mean of [0,1]-bounded variables,
/// clamped to 1 since all bounded quantities here are probabilities.
pub fn hoeffding_halfwidth(n: u64, delta: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("hoeffding_halfwidth: n = 0"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta {delta} outside (0,1)")));
    }
    Ok(((2.0 / delta).ln() / (2.0 * n as f64)).sqrt().min(1.0))
}

/// Exact two-sided Clopper-Pearson interval for k successes in n trials at
/// total miscoverage `delta`.
pub fn clopper_pearson_interval(k: u64, n: u64, delta: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::domain("clopper_pearson_interval: n = 0"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta {delta} outside (0,1)")));
    }
    let (k, n) = (k as f64, n as f64);
    let lo = if k == 0.0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0).unwrap().inverse_cdf(delta / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(k + 1.0, n - k).unwrap().inverse_cdf(1.0 - delta / 2.0)
    };
    Ok((lo, hi))
}

/// Symmetric half-width equivalent for a binomial cell under either method.
fn prob_halfwidth(k: u64, n: u64, delta: f64, method: BoundMethod) -> Result<f64> {
    match method {
        BoundMethod::HoeffdingUnion => hoeffding_halfwidth(n, delta),
        BoundMethod::ClopperPearsonUnion => {
            let (lo, hi) = clopper_pearson_interval(k, n, delta)?;
            let p = k as f64 / n as f64;
            Ok((p - lo).max(hi - p))
        }
    }
}

/// Lower confidence bound on the CHSH statistic S.
///
/// Each correlator E = 2p̂(a=b|xy) − 1 inherits twice the probability
/// half-width; a union bound splits the error budget over the four
/// settings. Floored at 0.
pub fn s_lower_bound(counts: &CountsTable, spec: &ConfidenceSpec) -> Result<f64> {
    let stats = chsh::chsh_s(counts)?;
    let delta = (1.0 - spec.level) / 4.0;
    let mut penalty = 0.0;
    for x in 0..2u8 {
        for y in 0..2u8 {
            let n = counts.n_xy(x, y);
            let k = counts.count(0, 0, x, y) + counts.count(1, 1, x, y);
            penalty += 2.0 * prob_halfwidth(k, n, delta, spec.method)?;
        }
    }
    Ok((stats.s - penalty).max(0.0))
}

/// Minimum of |det| over an axis-aligned box of the 8 conditional
/// probabilities. The determinant is multilinear in the cells, so its
/// extrema over the box sit at the 2^8 vertices; a sign change between the
/// extrema means the box crosses det = 0.
fn min_abs_det_over_box(lo: &[[f64; 2]; 4], hi: &[[f64; 2]; 4]) -> f64 {
    let mut det_min = f64::INFINITY;
    let mut det_max = f64::NEG_INFINITY;
    for mask in 0u32..256 {
        let mut c = [[0.0f64; 2]; 4];
        for xp in 0..4 {
            for y in 0..2 {
                let bit = (mask >> (xp * 2 + y)) & 1;
                c[xp][y] = if bit == 0 { lo[xp][y] } else { hi[xp][y] };
            }
        }
        let det = witness::det_witness(&c);
        det_min = det_min.min(det);
        det_max = det_max.max(det);
    }
    if det_min <= 0.0 && det_max >= 0.0 {
        0.0
    } else {
        det_min.abs().min(det_max.abs())
    }
}

fn w_lower_bound_side(
    counts: &CountsTable,
    side: Side,
    spec: &ConfidenceSpec,
) -> Result<f64> {
    let table = witness::rsp_table(counts, side)?;
    // union bound across the 16 cells of both sides
    let delta = (1.0 - spec.level) / 16.0;
    let mut lo = [[0.0f64; 2]; 4];
    let mut hi = [[0.0f64; 2]; 4];
    for xp in 0..4 {
        for y in 0..2 {
            let n = table.n_cond[xp][y];
            let k = table.k_ones[xp][y];
            let hw = prob_halfwidth(k, n, delta, spec.method)?;
            let p = table.p1[xp][y];
            lo[xp][y] = (p - hw).max(0.0);
            hi[xp][y] = (p + hw).min(1.0);
        }
    }
    Ok(min_abs_det_over_box(&lo, &hi))
}

/// Lower confidence bound on the RSP dimension witness W_rsp: per-cell
/// intervals on both sides' p(1|x',y) tables, exact minimization of |det|
/// over the interval box, then the minimum over the two sides.
pub fn w_lower_bound(counts: &CountsTable, spec: &ConfidenceSpec) -> Result<f64> {
    let wa = w_lower_bound_side(counts, Side::BobPrepares, spec)?;
    let wb = w_lower_bound_side(counts, Side::AlicePrepares, spec)?;
    Ok(wa.min(wb))
}
