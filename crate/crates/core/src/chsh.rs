//! CHSH statistic S from counts and the device-independent min-entropy
//! pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::CountsTable;
use crate::finite_stats::{self, ConfidenceSpec};

/// Quantum maximum of S (Tsirelson's bound).
pub const S_QUANTUM_MAX: f64 = 2.0 * std::f64::consts::SQRT_2;

/// Correlators and the CHSH statistic computed from counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChshStatistics {
    /// E\[x\]\[y\] = p̂(a=b|xy) − p̂(a≠b|xy).
    pub e: [[f64; 2]; 2],
    /// S = |E00 + E01 + E10 − E11|, the (−1)^xy convention.
    pub s: f64,
    /// Diagnostic only: the maximum of |·| over the standard sign
    /// conventions (minus sign on each of the four terms). Certification
    /// always uses `s`; optimizing the convention over the data would
    /// invalidate the confidence analysis.
    pub s_max_convention: f64,
    pub n_xy: [[u64; 2]; 2],
}

/// Compute correlators and S. Errors if any setting pair has no events.
pub fn chsh_s(counts: &CountsTable) -> Result<ChshStatistics> {
    counts.require_all_settings()?;
    let mut e = [[0.0f64; 2]; 2];
    let mut n_xy = [[0u64; 2]; 2];
    for x in 0..2u8 {
        for y in 0..2u8 {
            let n = counts.n_xy(x, y);
            let same = counts.count(0, 0, x, y) + counts.count(1, 1, x, y);
            let diff = n - same;
            e[x as usize][y as usize] = (same as f64 - diff as f64) / n as f64;
            n_xy[x as usize][y as usize] = n;
        }
    }
    let sum = e[0][0] + e[0][1] + e[1][0] + e[1][1];
    let s = (sum - 2.0 * e[1][1]).abs();
    let s_max_convention = (0..2usize)
        .flat_map(|x| (0..2usize).map(move |y| (sum - 2.0 * e[x][y]).abs()))
        .fold(0.0f64, f64::max);
    Ok(ChshStatistics {
        e,
        s,
        s_max_convention,
        n_xy,
    })
}

/// Device-independent min-entropy rate in bits per event as a function of
/// the CHSH value: 1 − log₂(1 + √(2 − s²/4)) above the classical bound,
/// 0 at or below it. Values above 2√2 (possible only through statistical
/// fluctuation) are clamped with a warning.
pub fn di_rate(s: f64) -> Result<f64> {
    if s < 0.0 {
        return Err(Error::domain(format!("CHSH value {s} is negative")));
    }
    let s = if s > S_QUANTUM_MAX {
        log::warn!("CHSH value {s} exceeds 2*sqrt(2); clamping for rate evaluation");
        S_QUANTUM_MAX
    } else {
        s
    };
    if s <= 2.0 {
        return Ok(0.0);
    }
    let disc = (2.0 - s * s / 4.0).max(0.0);
    Ok(1.0 - (1.0 + disc.sqrt()).log2())
}

/// Device-independent entropy budget for a dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiBudget {
    pub rate_per_event: f64,
    pub s_lower_bound: f64,
    pub total_bits: u64,
    pub confidence: f64,
    pub n_total: u64,
}

/// Full DI pipeline: confidence-corrected S, rate, total bits (floored).
pub fn di_total(counts: &CountsTable, confidence: &ConfidenceSpec) -> Result<DiBudget> {
    let s_lb = finite_stats::s_lower_bound(counts, confidence)?;
    let rate = di_rate(s_lb)?;
    let n_total = counts.n_total();
    let total_bits = (n_total as f64 * rate).floor().max(0.0) as u64;
    Ok(DiBudget {
        rate_per_event: rate,
        s_lower_bound: s_lb,
        total_bits,
        confidence: confidence.level,
        n_total,
    })
}
