//! The RSP dimension witness from counts, and the semi-device-independent
//! guessing-probability / min-entropy pipeline.
//!
//! When one party measures, the other party's qubit collapses into one of
//! four remotely prepared states indexed x' = 2·setting + outcome. The
//! witness is the 2x2 determinant of differences of the conditional
//! probabilities p(1|x',y); it is 0 for classical preparations and reaches
//! 1 for ideal quantum ones.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{self, CountsTable};
use crate::finite_stats::{self, ConfidenceSpec};

/// Which party's measurement prepares the remote states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Alice measures; states are prepared on Bob's side (witness W_B).
    AlicePrepares,
    /// Bob measures; states are prepared on Alice's side (witness W_A).
    BobPrepares,
}

impl Side {
    fn name(&self) -> &'static str {
        match self {
            Side::AlicePrepares => "alice_prepares",
            Side::BobPrepares => "bob_prepares",
        }
    }
}

/// Conditional-probability table p(1|x',y) for one preparation side.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RspTable {
    pub side: Side,
    /// p1\[x'\]\[y\] with x' = 2·setting + outcome of the preparing party and
    /// y the measuring party's setting.
    pub p1: [[f64; 2]; 4],
    /// Preparing party's outcome weights p̂(outcome|setting), pooled over the
    /// measuring party's setting.
    pub prep_weights: [[f64; 2]; 2],
    /// Realized conditional sample size behind each p1 cell.
    pub n_cond: [[u64; 2]; 4],
    /// Count of measuring-party outcome 1 behind each p1 cell.
    pub k_ones: [[u64; 2]; 4],
    /// Set when the preparing party's marginals depend on the measuring
    /// party's setting beyond statistical tolerance; the conditioning behind
    /// p(1|x',y) is then unsound.
    pub signaling_warning: bool,
}

/// Build the p(1|x',y) table for one side from counts.
///
/// Every preparation (setting, outcome) must occur at least once under each
/// measuring setting; an unprepared state makes the witness meaningless and
/// is surfaced as an error rather than imputed.
pub fn rsp_table(counts: &CountsTable, side: Side) -> Result<RspTable> {
    counts.require_all_settings()?;
    let mut p1 = [[0.0f64; 2]; 4];
    let mut n_cond = [[0u64; 2]; 4];
    let mut k_ones = [[0u64; 2]; 4];
    let mut prep_weights = [[0.0f64; 2]; 2];
    for setting in 0..2u8 {
        for outcome in 0..2u8 {
            let xp = (2 * setting + outcome) as usize;
            for meas in 0..2u8 {
                // (ones, total) within the preparation cell, for measuring
                // outcome b=1 (resp. a=1)
                let (ones, total) = match side {
                    Side::AlicePrepares => (
                        counts.count(outcome, 1, setting, meas),
                        counts.count(outcome, 0, setting, meas)
                            + counts.count(outcome, 1, setting, meas),
                    ),
                    Side::BobPrepares => (
                        counts.count(1, outcome, meas, setting),
                        counts.count(0, outcome, meas, setting)
                            + counts.count(1, outcome, meas, setting),
                    ),
                };
                if total == 0 {
                    return Err(Error::ZeroPreparation {
                        side: side.name(),
                        setting,
                        outcome,
                    });
                }
                p1[xp][meas as usize] = ones as f64 / total as f64;
                n_cond[xp][meas as usize] = total;
                k_ones[xp][meas as usize] = ones;
            }
            // preparing party's marginal pooled over the measuring setting
            let (k, n) = match side {
                Side::AlicePrepares => {
                    let k: u64 = (0..2)
                        .map(|y| {
                            counts.count(outcome, 0, setting, y)
                                + counts.count(outcome, 1, setting, y)
                        })
                        .sum();
                    (k, counts.n_xy(setting, 0) + counts.n_xy(setting, 1))
                }
                Side::BobPrepares => {
                    let k: u64 = (0..2)
                        .map(|x| {
                            counts.count(0, outcome, x, setting)
                                + counts.count(1, outcome, x, setting)
                        })
                        .sum();
                    (k, counts.n_xy(0, setting) + counts.n_xy(1, setting))
                }
            };
            prep_weights[setting as usize][outcome as usize] = k as f64 / n as f64;
        }
    }
    let ns = events::no_signaling_check(counts, 0.01)?;
    let signaling_warning = match side {
        Side::AlicePrepares => !ns.alice.passed,
        Side::BobPrepares => !ns.bob.passed,
    };
    Ok(RspTable {
        side,
        p1,
        prep_weights,
        n_cond,
        k_ones,
        signaling_warning,
    })
}

/// Signed witness determinant of a p(1|x',y) table:
/// (p1\[0\]\[0\]−p1\[1\]\[0\])(p1\[2\]\[1\]−p1\[3\]\[1\]) − (p1\[2\]\[0\]−p1\[3\]\[0\])(p1\[0\]\[1\]−p1\[1\]\[1\]).
pub fn det_witness(p1: &[[f64; 2]; 4]) -> f64 {
    (p1[0][0] - p1[1][0]) * (p1[2][1] - p1[3][1])
        - (p1[2][0] - p1[3][0]) * (p1[0][1] - p1[1][1])
}

/// Witness value |det| of one side's table.
pub fn witness_value(table: &RspTable) -> f64 {
    det_witness(&table.p1).abs()
}

/// Diagnostic: witness values for the two alternative pairings of the four
/// prepared states into the determinant's columns. Certification always
/// uses the canonical pairing (x'=2x+a contrasting the two outcomes of one
/// setting); these expose what the others would have given.
pub fn witness_value_alt_pairings(table: &RspTable) -> [f64; 2] {
    let p = &table.p1;
    let det_for = |(i, j): (usize, usize), (k, l): (usize, usize)| {
        ((p[i][0] - p[j][0]) * (p[k][1] - p[l][1]) - (p[k][0] - p[l][0]) * (p[i][1] - p[j][1]))
            .abs()
    };
    [det_for((0, 2), (1, 3)), det_for((0, 3), (1, 2))]
}

/// Both sides' witness values and their minimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessResult {
    pub w_a: f64,
    pub w_b: f64,
    pub w_rsp: f64,
    /// Table behind W_A (Bob prepares).
    pub table_a: RspTable,
    /// Table behind W_B (Alice prepares).
    pub table_b: RspTable,
    /// Witness values above 1 cannot come from quantum-consistent data;
    /// they are reported raw here and clamped only inside the guessing
    /// probability.
    pub flagged_above_one: bool,
    pub alt_pairings_a: [f64; 2],
    pub alt_pairings_b: [f64; 2],
}

/// W_rsp = min(W_A, W_B) from counts.
pub fn rsp_witness(counts: &CountsTable) -> Result<WitnessResult> {
    let table_a = rsp_table(counts, Side::BobPrepares)?;
    let table_b = rsp_table(counts, Side::AlicePrepares)?;
    let w_a = witness_value(&table_a);
    let w_b = witness_value(&table_b);
    Ok(WitnessResult {
        w_a,
        w_b,
        w_rsp: w_a.min(w_b),
        alt_pairings_a: witness_value_alt_pairings(&table_a),
        alt_pairings_b: witness_value_alt_pairings(&table_b),
        table_a,
        table_b,
        flagged_above_one: w_a > 1.0 || w_b > 1.0,
    })
}

/// Adversarial guessing probability of the outcome pair (a,b) as a function
/// of the witness:
/// p_guess = ((1+√(1−w²))/2) · (1/2)(1+√((1+√(1−w²))/2)).
///
/// Strictly decreasing on [0,1], from 1 at w=0 down to ≈0.42678 at w=1.
/// Values above 1 (sampling noise or signaling data) are clamped with a
/// warning; the formula is undefined there.
pub fn sdi_guessing_probability(w: f64) -> Result<f64> {
    if w < 0.0 {
        return Err(Error::domain(format!("witness value {w} is negative")));
    }
    let w = if w > 1.0 {
        log::warn!("witness value {w} exceeds 1; clamping for guessing probability");
        1.0
    } else {
        w
    };
    let u = (1.0 + (1.0 - w * w).max(0.0).sqrt()) / 2.0;
    Ok(u * 0.5 * (1.0 + u.sqrt()))
}

/// Semi-device-independent entropy budget for a dataset.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SdiBudget {
    pub w_lower_bound: f64,
    pub p_guess: f64,
    pub rate_per_event: f64,
    pub total_min_entropy_bits: f64,
    pub confidence: f64,
    pub n_total: u64,
}

/// Full SDI pipeline: confidence-corrected witness, guessing probability,
/// min-entropy rate, total.
pub fn sdi_total(counts: &CountsTable, confidence: &ConfidenceSpec) -> Result<SdiBudget> {
    let w_lb = finite_stats::w_lower_bound(counts, confidence)?;
    let p_guess = sdi_guessing_probability(w_lb.min(1.0))?;
    let rate = -p_guess.log2();
    let n_total = counts.n_total();
    Ok(SdiBudget {
        w_lower_bound: w_lb,
        p_guess,
        rate_per_event: rate,
        total_min_entropy_bits: n_total as f64 * rate,
        confidence: confidence.level,
        n_total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_counts(per_cell: u64) -> CountsTable {
        let mut counts = CountsTable::default();
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        counts.n[a][b][x][y] = per_cell;
                    }
                }
            }
        }
        counts
    }

    #[test]
    fn uniform_table_gives_unbiased_conditionals_and_zero_witness() {
        let counts = uniform_counts(250);
        for side in [Side::AlicePrepares, Side::BobPrepares] {
            let table = rsp_table(&counts, side).unwrap();
            for row in table.p1 {
                for v in row {
                    assert_eq!(v, 0.5);
                }
            }
            assert_eq!(witness_value(&table), 0.0);
        }
        let result = rsp_witness(&counts).unwrap();
        assert_eq!(result.w_rsp, 0.0);
    }

    #[test]
    fn ideal_complementary_preparations_reach_one() {
        let p1 = [[1.0, 0.5], [0.0, 0.5], [0.5, 1.0], [0.5, 0.0]];
        assert_eq!(det_witness(&p1).abs(), 1.0);
    }

    #[test]
    fn zero_preparation_is_an_error() {
        let mut counts = uniform_counts(100);
        // Alice never gets outcome 1 on setting 0
        for b in 0..2 {
            for y in 0..2 {
                counts.n[1][b][0][y] = 0;
            }
        }
        let err = rsp_table(&counts, Side::AlicePrepares).unwrap_err();
        assert!(matches!(err, Error::ZeroPreparation { setting: 0, outcome: 1, .. }));
    }

    #[test]
    fn signaling_data_sets_warning_flag() {
        let mut counts = CountsTable::default();
        // Alice's marginal swings with Bob's setting
        for x in 0..2usize {
            counts.n[1][0][x][0] = 900;
            counts.n[1][1][x][0] = 50;
            counts.n[0][0][x][0] = 25;
            counts.n[0][1][x][0] = 25;
            counts.n[1][0][x][1] = 100;
            counts.n[1][1][x][1] = 50;
            counts.n[0][0][x][1] = 425;
            counts.n[0][1][x][1] = 425;
        }
        let table = rsp_table(&counts, Side::AlicePrepares).unwrap();
        assert!(table.signaling_warning);
    }

    #[test]
    fn consistency_with_joint_table() {
        // p1[2x+a][y] · p̂(a|x,y) = p̂(a, b=1 | x, y)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = CountsTable::default();
        for _ in 0..20_000 {
            counts.record(
                rng.gen_range(0..2),
                rng.gen_range(0..2),
                rng.gen_range(0..2),
                rng.gen_range(0..2),
            );
        }
        let table = rsp_table(&counts, Side::AlicePrepares).unwrap();
        for x in 0..2u8 {
            for a in 0..2u8 {
                for y in 0..2u8 {
                    let lhs = table.p1[(2 * x + a) as usize][y as usize]
                        * counts.p_alice(a, x, y).unwrap();
                    let rhs = counts.p_joint(a, 1, x, y).unwrap();
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    fn random_table(rng: &mut impl Rng) -> [[f64; 2]; 4] {
        let mut p1 = [[0.0f64; 2]; 4];
        for row in p1.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.gen();
            }
        }
        p1
    }

    #[test]
    fn witness_invariant_under_global_b_flip_and_per_preparation_a_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let p1 = random_table(&mut rng);
            let w = det_witness(&p1).abs();

            // global b flip: every cell becomes 1 - p
            let mut flipped = p1;
            for row in flipped.iter_mut() {
                for v in row.iter_mut() {
                    *v = 1.0 - *v;
                }
            }
            assert!((det_witness(&flipped).abs() - w).abs() < 1e-12);

            // a flip for one fixed setting: swap rows 2x and 2x+1
            for x in 0..2usize {
                let mut swapped = p1;
                swapped.swap(2 * x, 2 * x + 1);
                assert!((det_witness(&swapped).abs() - w).abs() < 1e-12);
            }

            // exchanging the two y columns negates the determinant
            let mut cols = p1;
            for row in cols.iter_mut() {
                row.swap(0, 1);
            }
            assert!((det_witness(&cols) + det_witness(&p1)).abs() < 1e-12);
        }
    }

    #[test]
    fn guessing_probability_endpoints() {
        assert_eq!(sdi_guessing_probability(0.0).unwrap(), 1.0);
        let p1 = sdi_guessing_probability(1.0).unwrap();
        assert!((p1 - 0.4267766952966369).abs() < 1e-12);
        let rate = -p1.log2();
        assert!((rate - 1.2284).abs() < 1e-4, "rate {rate}");
        assert!(sdi_guessing_probability(-0.2).is_err());
        // above 1: clamped
        assert_eq!(
            sdi_guessing_probability(1.3).unwrap(),
            sdi_guessing_probability(1.0).unwrap()
        );
    }

    #[test]
    fn guessing_probability_published_dataset_values() {
        let p = sdi_guessing_probability(0.542).unwrap();
        assert!((p - 0.9014473).abs() < 1e-4, "p {p}");
        assert!((-p.log2() - 0.1498).abs() < 1e-3);
        let p = sdi_guessing_probability(0.591).unwrap();
        assert!((-p.log2() - 0.1829).abs() < 1e-3);
    }

    #[test]
    fn guessing_probability_strictly_monotone_on_grid() {
        let mut prev = f64::INFINITY;
        for i in 0..=1000 {
            let w = i as f64 / 1000.0;
            let p = sdi_guessing_probability(w).unwrap();
            assert!(p < prev, "not strictly decreasing at w={w}");
            assert!((0.4267..=1.0).contains(&p));
            prev = p;
        }
    }

    #[test]
    fn marginal_bound_of_guessing_chain_holds() {
        // max_{x,a} p̂(a|x) ≤ (1+sqrt(1−W²))/2 on random signaling-free data
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts = CountsTable::default();
        for _ in 0..40_000 {
            counts.record(
                rng.gen_range(0..2),
                rng.gen_range(0..2),
                rng.gen_range(0..2),
                rng.gen_range(0..2),
            );
        }
        let result = rsp_witness(&counts).unwrap();
        let bound = (1.0 + (1.0 - result.w_rsp.powi(2)).sqrt()) / 2.0;
        let max_marginal = result
            .table_b
            .prep_weights
            .iter()
            .flatten()
            .fold(0.0f64, |m, &p| m.max(p));
        assert!(max_marginal <= bound + 1e-9);
    }
}
