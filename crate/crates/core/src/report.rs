//! The analysis report: a single code path that runs every check and both
//! entropy pipelines over an event log, shared by the `analyze` and
//! `extract` commands so their budgets can never disagree.

use serde::{Deserialize, Serialize};

use crate::chsh::{self, ChshStatistics, DiBudget};
use crate::error::Result;
use crate::events::{
    no_signaling_check, setting_balance_check, tally, CheckReport, EventRecord,
    NoSignalingReport, StateLabel,
};
use crate::finite_stats::{self, ConfidenceSpec};
use crate::witness::{self, SdiBudget, WitnessResult};

pub const SCHEMA_VERSION: &str = "1.0.0";

/// Everything the analysis depends on besides the event log itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub confidence: ConfidenceSpec,
    pub eps_hash: f64,
    /// Significance of the two-proportion no-signaling test.
    pub signaling_significance: f64,
    /// Allowed deviation of each setting-pair frequency from 1/4.
    pub balance_tolerance: f64,
    /// Allowed |W(first half) − W(second half)| in the stationarity
    /// diagnostic.
    pub stationarity_tolerance: f64,
    /// Restrict analysis to events carrying this label.
    pub state_filter: Option<StateLabel>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            confidence: ConfidenceSpec::default(),
            eps_hash: 0.001,
            signaling_significance: 0.01,
            balance_tolerance: 0.02,
            stationarity_tolerance: 0.1,
            state_filter: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub n_total: u64,
    /// Events per setting pair, indexed \[x\]\[y\].
    pub n_xy: [[u64; 2]; 2],
    pub state_filter: Option<StateLabel>,
}

/// Half-split witness comparison; the certification model assumes i.i.d.
/// trials, which counts alone cannot verify, so this is a diagnostic only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StationarityReport {
    pub w_first_half: Option<f64>,
    pub w_second_half: Option<f64>,
    pub deviation: Option<f64>,
    pub threshold: f64,
    /// None when either half is too small to evaluate the witness.
    pub passed: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChecksSection {
    pub no_signaling: NoSignalingReport,
    pub setting_balance: CheckReport,
    pub stationarity: StationarityReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChshSection {
    #[serde(flatten)]
    pub statistics: ChshStatistics,
    pub s_lower_bound: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WitnessSection {
    #[serde(flatten)]
    pub result: WitnessResult,
    pub w_lower_bound: f64,
}

/// Full machine-readable analysis output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub dataset: DatasetSummary,
    pub checks: ChecksSection,
    pub chsh: ChshSection,
    pub witness: WitnessSection,
    pub di_budget: DiBudget,
    pub sdi_budget: SdiBudget,
    pub config: AnalysisConfig,
}

fn half_witness(events: &[EventRecord], filter: Option<StateLabel>) -> Option<f64> {
    let counts = tally(events, filter);
    counts.require_all_settings().ok()?;
    witness::rsp_witness(&counts).ok().map(|w| w.w_rsp)
}

fn stationarity_check(
    events: &[EventRecord],
    filter: Option<StateLabel>,
    threshold: f64,
) -> StationarityReport {
    let mid = events.len() / 2;
    let w1 = half_witness(&events[..mid], filter);
    let w2 = half_witness(&events[mid..], filter);
    let deviation = match (w1, w2) {
        (Some(a), Some(b)) => Some((a - b).abs()),
        _ => None,
    };
    StationarityReport {
        w_first_half: w1,
        w_second_half: w2,
        deviation,
        threshold,
        passed: deviation.map(|d| d <= threshold),
    }
}

/// Run every check and both pipelines over an event log.
pub fn analyze(events: &[EventRecord], config: &AnalysisConfig) -> Result<AnalysisReport> {
    let counts = tally(events, config.state_filter);
    counts.require_all_settings()?;

    let no_signaling = no_signaling_check(&counts, config.signaling_significance)?;
    let setting_balance = setting_balance_check(&counts, config.balance_tolerance);
    let stationarity = stationarity_check(events, config.state_filter, config.stationarity_tolerance);

    let statistics = chsh::chsh_s(&counts)?;
    let s_lower_bound = finite_stats::s_lower_bound(&counts, &config.confidence)?;
    let result = witness::rsp_witness(&counts)?;
    let w_lower_bound = finite_stats::w_lower_bound(&counts, &config.confidence)?;

    let di_budget = chsh::di_total(&counts, &config.confidence)?;
    let sdi_budget = witness::sdi_total(&counts, &config.confidence)?;

    let mut n_xy = [[0u64; 2]; 2];
    for x in 0..2u8 {
        for y in 0..2u8 {
            n_xy[x as usize][y as usize] = counts.n_xy(x, y);
        }
    }

    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION.to_string(),
        dataset: DatasetSummary {
            n_total: counts.n_total(),
            n_xy,
            state_filter: config.state_filter,
        },
        checks: ChecksSection {
            no_signaling,
            setting_balance,
            stationarity,
        },
        chsh: ChshSection {
            statistics,
            s_lower_bound,
        },
        witness: WitnessSection {
            result,
            w_lower_bound,
        },
        di_budget,
        sdi_budget,
        config: config.clone(),
    })
}

/// One-screen human summary, written to stderr by the CLI.
pub fn human_summary(report: &AnalysisReport) -> String {
    let mut s = String::new();
    let r = report;
    s.push_str(&format!(
        "events: {} (per setting: {:?})\n",
        r.dataset.n_total, r.dataset.n_xy
    ));
    s.push_str(&format!(
        "checks: no-signaling {}, balance {}, stationarity {}\n",
        pass_str(r.checks.no_signaling.passed),
        pass_str(r.checks.setting_balance.passed),
        r.checks
            .stationarity
            .passed
            .map(pass_str)
            .unwrap_or("n/a"),
    ));
    s.push_str(&format!(
        "CHSH: S = {:.4}, S_lb = {:.4} at {:.1}% confidence\n",
        r.chsh.statistics.s,
        r.chsh.s_lower_bound,
        r.config.confidence.level * 100.0
    ));
    s.push_str(&format!(
        "witness: W_A = {:.4}, W_B = {:.4}, W_rsp = {:.4}, W_lb = {:.4}\n",
        r.witness.result.w_a, r.witness.result.w_b, r.witness.result.w_rsp, r.witness.w_lower_bound
    ));
    s.push_str(&format!(
        "DI:  {:.4} bits/event, total {} bits\n",
        r.di_budget.rate_per_event, r.di_budget.total_bits
    ));
    s.push_str(&format!(
        "SDI: {:.4} bits/event, total {:.1} bits\n",
        r.sdi_budget.rate_per_event, r.sdi_budget.total_min_entropy_bits
    ));
    s
}

fn pass_str(passed: bool) -> &'static str {
    if passed {
        "pass"
    } else {
        "FAIL"
    }
}
