//! Event-log data model: parsing, serialization, tallying into counts and
//! statistical sanity checks on the raw data.
//!
//! Two interchangeable on-disk formats are supported:
//!
//! * CSV with the fixed header `trial,x,y,a,b,state` (the `state` column is
//!   optional; an empty field means unlabeled).
//! * Packed binary: 8-byte magic `RSPEVT01`, a little-endian `u64` event
//!   count, then one byte per event with bits 0-3 = a,b,x,y (LSB first),
//!   bits 4-5 the state label (0 unlabeled, 1 psi_plus, 2 psi_minus) and
//!   bits 6-7 reserved zero.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Which heralded Bell state a trial belongs to, when the log records it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLabel {
    PsiPlus,
    PsiMinus,
    #[default]
    Unlabeled,
}

impl StateLabel {
    fn as_csv(&self) -> &'static str {
        match self {
            StateLabel::PsiPlus => "psi_plus",
            StateLabel::PsiMinus => "psi_minus",
            StateLabel::Unlabeled => "",
        }
    }
}

impl std::str::FromStr for StateLabel {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "psi_plus" => Ok(StateLabel::PsiPlus),
            "psi_minus" => Ok(StateLabel::PsiMinus),
            "" => Ok(StateLabel::Unlabeled),
            other => Err(format!("unknown state label {other:?}")),
        }
    }
}

/// One Bell-test trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub trial: u64,
    /// Alice's setting bit.
    pub x: u8,
    /// Bob's setting bit.
    pub y: u8,
    /// Alice's outcome bit.
    pub a: u8,
    /// Bob's outcome bit.
    pub b: u8,
    pub state: StateLabel,
}

/// On-disk event-log encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogFormat {
    Csv,
    PackedBinary,
}

pub const BINARY_MAGIC: &[u8; 8] = b"RSPEVT01";
const CSV_HEADER: &str = "trial,x,y,a,b,state";
const CSV_HEADER_NO_STATE: &str = "trial,x,y,a,b";

fn parse_bit(field: &str, name: &str, line: usize) -> Result<u8> {
    match field {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(Error::Malformed {
            line,
            msg: format!("{name}={other} out of range (must be 0 or 1)"),
        }),
    }
}

fn parse_csv<R: BufRead>(reader: R) -> Result<Vec<EventRecord>> {
    let mut events = Vec::new();
    let mut lines = reader.lines();
    let header = match lines.next() {
        None => return Ok(events), // empty file -> empty list
        Some(h) => h?,
    };
    let header = header.trim_end_matches(['\r', '\n']);
    let has_state = match header {
        CSV_HEADER => true,
        CSV_HEADER_NO_STATE => false,
        other => {
            return Err(Error::Malformed {
                line: 1,
                msg: format!("bad header {other:?}, expected {CSV_HEADER:?}"),
            })
        }
    };
    let mut prev_trial: Option<u64> = None;
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expected = if has_state { 6 } else { 5 };
        if fields.len() != expected {
            return Err(Error::Malformed {
                line: lineno,
                msg: format!("expected {expected} fields, got {}", fields.len()),
            });
        }
        let trial: u64 = fields[0].parse().map_err(|_| Error::Malformed {
            line: lineno,
            msg: format!("bad trial index {:?}", fields[0]),
        })?;
        if let Some(prev) = prev_trial {
            if trial <= prev {
                return Err(Error::Malformed {
                    line: lineno,
                    msg: format!("trial index {trial} not strictly increasing (previous {prev})"),
                });
            }
        }
        prev_trial = Some(trial);
        let x = parse_bit(fields[1], "x", lineno)?;
        let y = parse_bit(fields[2], "y", lineno)?;
        let a = parse_bit(fields[3], "a", lineno)?;
        let b = parse_bit(fields[4], "b", lineno)?;
        let state = if has_state {
            fields[5]
                .parse()
                .map_err(|msg| Error::Malformed { line: lineno, msg })?
        } else {
            StateLabel::Unlabeled
        };
        events.push(EventRecord { trial, x, y, a, b, state });
    }
    Ok(events)
}

fn parse_binary<R: BufRead>(mut reader: R) -> Result<Vec<EventRecord>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    if buf.is_empty() {
        return Ok(Vec::new());
    }
    if buf.len() < 16 || &buf[0..8] != BINARY_MAGIC {
        return Err(Error::domain("packed binary log: bad or missing magic"));
    }
    let count = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let body = &buf[16..];
    if body.len() != count {
        return Err(Error::domain(format!(
            "packed binary log: header declares {count} events but body holds {}",
            body.len()
        )));
    }
    let mut events = Vec::with_capacity(count);
    for (i, &byte) in body.iter().enumerate() {
        if byte >> 6 != 0 {
            return Err(Error::domain(format!(
                "packed binary log: event {i}: reserved bits 6-7 nonzero"
            )));
        }
        let state = match (byte >> 4) & 0b11 {
            0 => StateLabel::Unlabeled,
            1 => StateLabel::PsiPlus,
            2 => StateLabel::PsiMinus,
            _ => {
                return Err(Error::domain(format!(
                    "packed binary log: event {i}: invalid state label code 3"
                )))
            }
        };
        events.push(EventRecord {
            trial: i as u64,
            a: byte & 1,
            b: (byte >> 1) & 1,
            x: (byte >> 2) & 1,
            y: (byte >> 3) & 1,
            state,
        });
    }
    Ok(events)
}

/// Parse an event log in the given format. Errors carry line numbers for CSV.
pub fn parse_event_log<R: BufRead>(reader: R, format: LogFormat) -> Result<Vec<EventRecord>> {
    match format {
        LogFormat::Csv => parse_csv(reader),
        LogFormat::PackedBinary => parse_binary(reader),
    }
}

/// Serialize an event log. Binary drops the trial indices (they are implied
/// by position), so round-tripping through binary requires trials 0..n-1.
pub fn write_event_log<W: Write>(
    mut writer: W,
    events: &[EventRecord],
    format: LogFormat,
) -> Result<()> {
    match format {
        LogFormat::Csv => {
            writeln!(writer, "{CSV_HEADER}")?;
            for ev in events {
                writeln!(
                    writer,
                    "{},{},{},{},{},{}",
                    ev.trial,
                    ev.x,
                    ev.y,
                    ev.a,
                    ev.b,
                    ev.state.as_csv()
                )?;
            }
        }
        LogFormat::PackedBinary => {
            writer.write_all(BINARY_MAGIC)?;
            writer.write_all(&(events.len() as u64).to_le_bytes())?;
            for ev in events {
                let label = match ev.state {
                    StateLabel::Unlabeled => 0u8,
                    StateLabel::PsiPlus => 1,
                    StateLabel::PsiMinus => 2,
                };
                let byte = ev.a | (ev.b << 1) | (ev.x << 2) | (ev.y << 3) | (label << 4);
                writer.write_all(&[byte])?;
            }
        }
    }
    Ok(())
}

/// Integer counts N(a,b,x,y); the single source of every estimated
/// probability in the toolkit. Probabilities are formed only at the
/// analysis boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountsTable {
    /// Indexed `n[a][b][x][y]`.
    pub n: [[[[u64; 2]; 2]; 2]; 2],
}

impl CountsTable {
    pub fn record(&mut self, a: u8, b: u8, x: u8, y: u8) {
        self.n[a as usize][b as usize][x as usize][y as usize] += 1;
    }

    pub fn count(&self, a: u8, b: u8, x: u8, y: u8) -> u64 {
        self.n[a as usize][b as usize][x as usize][y as usize]
    }

    /// Per-setting total N(x,y).
    pub fn n_xy(&self, x: u8, y: u8) -> u64 {
        let (x, y) = (x as usize, y as usize);
        let mut total = 0;
        for a in 0..2 {
            for b in 0..2 {
                total += self.n[a][b][x][y];
            }
        }
        total
    }

    pub fn n_total(&self) -> u64 {
        let mut total = 0;
        for x in 0..2 {
            for y in 0..2 {
                total += self.n_xy(x, y);
            }
        }
        total
    }

    /// Empirical joint probability p̂(ab|xy). Errors on an empty setting.
    pub fn p_joint(&self, a: u8, b: u8, x: u8, y: u8) -> Result<f64> {
        let n_xy = self.n_xy(x, y);
        if n_xy == 0 {
            return Err(Error::EmptySetting { x, y });
        }
        Ok(self.count(a, b, x, y) as f64 / n_xy as f64)
    }

    /// Alice's conditional marginal p̂(a|x,y).
    pub fn p_alice(&self, a: u8, x: u8, y: u8) -> Result<f64> {
        Ok(self.p_joint(a, 0, x, y)? + self.p_joint(a, 1, x, y)?)
    }

    /// Bob's conditional marginal p̂(b|x,y).
    pub fn p_bob(&self, b: u8, x: u8, y: u8) -> Result<f64> {
        Ok(self.p_joint(0, b, x, y)? + self.p_joint(1, b, x, y)?)
    }

    pub fn require_all_settings(&self) -> Result<()> {
        for x in 0..2u8 {
            for y in 0..2u8 {
                if self.n_xy(x, y) == 0 {
                    return Err(Error::EmptySetting { x, y });
                }
            }
        }
        Ok(())
    }

    /// Cell-wise sum; tallying shards over event sublists merges with this.
    pub fn merged(&self, other: &CountsTable) -> CountsTable {
        let mut out = *self;
        for a in 0..2 {
            for b in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        out.n[a][b][x][y] += other.n[a][b][x][y];
                    }
                }
            }
        }
        out
    }
}

/// Tally events into counts, optionally keeping only one state label.
pub fn tally(events: &[EventRecord], filter: Option<StateLabel>) -> CountsTable {
    let mut counts = CountsTable::default();
    for ev in events {
        if let Some(want) = filter {
            if ev.state != want {
                continue;
            }
        }
        counts.record(ev.a, ev.b, ev.x, ev.y);
    }
    counts
}

/// Result of one data sanity check.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CheckReport {
    pub max_deviation: f64,
    /// Threshold at the worst comparison.
    pub threshold: f64,
    pub passed: bool,
}

/// Per-side no-signaling verdicts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoSignalingReport {
    pub alice: CheckReport,
    pub bob: CheckReport,
    pub passed: bool,
}

fn two_proportion_check(
    pairs: &[(u64, u64, u64, u64)], // (k0, n0, k1, n1)
    significance: f64,
) -> CheckReport {
    // Bonferroni over the four marginal comparisons (two per side).
    let z = Normal::new(0.0, 1.0)
        .unwrap()
        .inverse_cdf(1.0 - significance / (2.0 * 4.0));
    let mut worst = CheckReport {
        max_deviation: 0.0,
        threshold: f64::INFINITY,
        passed: true,
    };
    let mut all_pass = true;
    for &(k0, n0, k1, n1) in pairs {
        let p0 = k0 as f64 / n0 as f64;
        let p1 = k1 as f64 / n1 as f64;
        let dev = (p0 - p1).abs();
        let pooled = (k0 + k1) as f64 / (n0 + n1) as f64;
        let thr = z * (pooled * (1.0 - pooled) * (1.0 / n0 as f64 + 1.0 / n1 as f64)).sqrt();
        let pass = dev <= thr;
        all_pass &= pass;
        if dev > worst.max_deviation {
            worst.max_deviation = dev;
            worst.threshold = thr;
        }
    }
    worst.passed = all_pass;
    if worst.threshold.is_infinite() {
        worst.threshold = 0.0;
    }
    worst
}

/// Check that each party's marginals do not depend on the other party's
/// setting, via two-proportion tests Bonferroni-corrected over the four
/// comparisons. Guards the local-and-independent-measurement assumption.
pub fn no_signaling_check(counts: &CountsTable, significance: f64) -> Result<NoSignalingReport> {
    if !(0.0..1.0).contains(&significance) || significance <= 0.0 {
        return Err(Error::domain(format!(
            "significance {significance} outside (0,1)"
        )));
    }
    counts.require_all_settings()?;
    let mut alice_pairs = Vec::new();
    let mut bob_pairs = Vec::new();
    for s in 0..2u8 {
        // Alice: p(a=1|x=s, y=0) vs p(a=1|x=s, y=1)
        let k = |y: u8| counts.count(1, 0, s, y) + counts.count(1, 1, s, y);
        alice_pairs.push((k(0), counts.n_xy(s, 0), k(1), counts.n_xy(s, 1)));
        // Bob: p(b=1|x=0, y=s) vs p(b=1|x=1, y=s)
        let k = |x: u8| counts.count(0, 1, x, s) + counts.count(1, 1, x, s);
        bob_pairs.push((k(0), counts.n_xy(0, s), k(1), counts.n_xy(1, s)));
    }
    let alice = two_proportion_check(&alice_pairs, significance);
    let bob = two_proportion_check(&bob_pairs, significance);
    Ok(NoSignalingReport {
        alice,
        bob,
        passed: alice.passed && bob.passed,
    })
}

/// Check that each setting pair occurs with frequency close to 1/4.
pub fn setting_balance_check(counts: &CountsTable, tolerance: f64) -> CheckReport {
    let n_total = counts.n_total();
    let mut max_dev: f64 = 0.0;
    if n_total > 0 {
        for x in 0..2u8 {
            for y in 0..2u8 {
                let frac = counts.n_xy(x, y) as f64 / n_total as f64;
                max_dev = max_dev.max((frac - 0.25).abs());
            }
        }
    }
    CheckReport {
        max_deviation: max_dev,
        threshold: tolerance,
        passed: max_dev <= tolerance,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn ev(trial: u64, x: u8, y: u8, a: u8, b: u8, state: StateLabel) -> EventRecord {
        EventRecord { trial, x, y, a, b, state }
    }

    #[test]
    fn csv_row_maps_fields_directly() {
        let text = "trial,x,y,a,b,state\n0,0,1,1,0,psi_plus\n";
        let events = parse_event_log(Cursor::new(text), LogFormat::Csv).unwrap();
        assert_eq!(events, vec![ev(0, 0, 1, 1, 0, StateLabel::PsiPlus)]);
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let events = parse_event_log(Cursor::new(""), LogFormat::Csv).unwrap();
        assert!(events.is_empty());
        let events = parse_event_log(Cursor::new(""), LogFormat::PackedBinary).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn out_of_range_value_reports_line_number() {
        let text = "trial,x,y,a,b,state\n0,0,0,0,0,\n1,1,1,1,1,\n3,0,2,1,0,\n";
        let err = parse_event_log(Cursor::new(text), LogFormat::Csv).unwrap_err();
        match err {
            Error::Malformed { line, msg } => {
                assert_eq!(line, 4);
                assert!(msg.contains("y=2"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_or_decreasing_trial_rejected() {
        for bad in ["0,0,0,0,0,\n0,0,0,0,0,\n", "5,0,0,0,0,\n4,0,0,0,0,\n"] {
            let text = format!("trial,x,y,a,b,state\n{bad}");
            assert!(parse_event_log(Cursor::new(text), LogFormat::Csv).is_err());
        }
    }

    #[test]
    fn header_without_state_column_accepted() {
        let text = "trial,x,y,a,b\n7,1,0,0,1\n";
        let events = parse_event_log(Cursor::new(text), LogFormat::Csv).unwrap();
        assert_eq!(events, vec![ev(7, 1, 0, 0, 1, StateLabel::Unlabeled)]);
    }

    #[test]
    fn binary_rejects_reserved_bits_and_bad_label() {
        let mut buf = Vec::from(*BINARY_MAGIC);
        buf.extend_from_slice(&1u64.to_le_bytes());
        buf.push(0b0100_0000);
        assert!(parse_event_log(Cursor::new(&buf[..]), LogFormat::PackedBinary).is_err());
        *buf.last_mut().unwrap() = 0b0011_0000;
        assert!(parse_event_log(Cursor::new(&buf[..]), LogFormat::PackedBinary).is_err());
    }

    #[test]
    fn tally_uniform_enumeration() {
        let mut events = Vec::new();
        let mut trial = 0;
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..2u8 {
                    for y in 0..2u8 {
                        events.push(ev(trial, x, y, a, b, StateLabel::Unlabeled));
                        trial += 1;
                    }
                }
            }
        }
        let counts = tally(&events, None);
        for a in 0..2u8 {
            for b in 0..2u8 {
                for x in 0..2u8 {
                    for y in 0..2u8 {
                        assert_eq!(counts.count(a, b, x, y), 1);
                    }
                }
            }
        }
        for x in 0..2u8 {
            for y in 0..2u8 {
                assert_eq!(counts.n_xy(x, y), 4);
            }
        }
        assert_eq!(counts.n_total(), 16);
    }

    #[test]
    fn tally_filter_keeps_only_requested_label() {
        let mut events = Vec::new();
        for i in 0..27885u64 {
            events.push(ev(i, 0, 0, 0, 0, StateLabel::PsiPlus));
        }
        for i in 0..100u64 {
            events.push(ev(27885 + i, 0, 0, 0, 0, StateLabel::PsiMinus));
        }
        let counts = tally(&events, Some(StateLabel::PsiPlus));
        assert_eq!(counts.n_total(), 27885);
    }

    #[test]
    fn joint_probabilities_sum_to_one_per_setting() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let events: Vec<EventRecord> = (0..5000)
            .map(|i| {
                ev(
                    i,
                    rng.gen_range(0..2),
                    rng.gen_range(0..2),
                    rng.gen_range(0..2),
                    rng.gen_range(0..2),
                    StateLabel::Unlabeled,
                )
            })
            .collect();
        let counts = tally(&events, None);
        for x in 0..2u8 {
            for y in 0..2u8 {
                let mut sum = 0.0;
                for a in 0..2u8 {
                    for b in 0..2u8 {
                        sum += counts.p_joint(a, b, x, y).unwrap();
                    }
                }
                // exact: the four cells share one integer denominator
                assert!((sum - 1.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gross_signaling_fails_check() {
        // p(a=1|x=0,y=0)=0.9 vs p(a=1|x=0,y=1)=0.1 at n_xy=1000
        let mut counts = CountsTable::default();
        for (a, x, y, n) in [
            (1u8, 0u8, 0u8, 900u64),
            (0, 0, 0, 100),
            (1, 0, 1, 100),
            (0, 0, 1, 900),
            (0, 1, 0, 1000),
            (0, 1, 1, 1000),
        ] {
            counts.n[a as usize][0][x as usize][y as usize] += n;
        }
        let report = no_signaling_check(&counts, 0.01).unwrap();
        assert!(!report.passed);
        assert!(report.alice.max_deviation > 0.7);
    }

    #[test]
    fn balanced_random_tables_mostly_pass_no_signaling() {
        // Monte Carlo calibration: with significance 0.01 the pass rate over
        // signaling-free tables should be at least ~99%.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let reps = 500;
        let mut passes = 0;
        for _ in 0..reps {
            let mut counts = CountsTable::default();
            for _ in 0..8000 {
                let x = rng.gen_range(0..2u8);
                let y = rng.gen_range(0..2u8);
                let a = rng.gen_range(0..2u8);
                let b = rng.gen_range(0..2u8);
                counts.record(a, b, x, y);
            }
            if no_signaling_check(&counts, 0.01).unwrap().passed {
                passes += 1;
            }
        }
        let rate = passes as f64 / reps as f64;
        assert!(rate >= 0.98, "pass rate {rate}");
    }

    #[test]
    fn no_signaling_requires_nonempty_settings() {
        let counts = CountsTable::default();
        assert!(matches!(
            no_signaling_check(&counts, 0.01),
            Err(Error::EmptySetting { .. })
        ));
    }

    #[test]
    fn setting_balance_arithmetic() {
        let mut counts = CountsTable::default();
        for ((x, y), n) in [(0u8, 0u8), (0, 1), (1, 0), (1, 1)]
            .into_iter()
            .zip([100u64, 100, 100, 700])
        {
            counts.n[0][0][x as usize][y as usize] = n;
        }
        let report = setting_balance_check(&counts, 0.05);
        assert!((report.max_deviation - 0.45).abs() < 1e-12);
        assert!(!report.passed);

        let mut counts = CountsTable::default();
        for x in 0..2 {
            for y in 0..2 {
                counts.n[0][0][x][y] = 250;
            }
        }
        let report = setting_balance_check(&counts, 0.05);
        assert_eq!(report.max_deviation, 0.0);
        assert!(report.passed);
    }
}
