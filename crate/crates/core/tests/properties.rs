//! Property-based round-trip and invariance tests, plus a statistical
//! smoke test on extracted output.

use proptest::prelude::*;
use rspcert::events::{
    parse_event_log, tally, write_event_log, EventRecord, LogFormat, StateLabel,
};
use rspcert::extractor::{extract_certified, BitString, EntropyBudget, SeedSource};
use rspcert::report::{analyze, AnalysisConfig};
use rspcert::simulator::{chsh_optimal, werner_state};

fn label_strategy() -> impl Strategy<Value = StateLabel> {
    prop_oneof![
        Just(StateLabel::Unlabeled),
        Just(StateLabel::PsiPlus),
        Just(StateLabel::PsiMinus),
    ]
}

fn events_strategy(max_len: usize) -> impl Strategy<Value = Vec<EventRecord>> {
    prop::collection::vec(
        (0..2u8, 0..2u8, 0..2u8, 0..2u8, label_strategy()),
        0..max_len,
    )
    .prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, (x, y, a, b, state))| EventRecord {
                trial: i as u64,
                x,
                y,
                a,
                b,
                state,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn csv_round_trip(events in events_strategy(200)) {
        let mut buf = Vec::new();
        write_event_log(&mut buf, &events, LogFormat::Csv).unwrap();
        let back = parse_event_log(buf.as_slice(), LogFormat::Csv).unwrap();
        prop_assert_eq!(back, events);
    }

    #[test]
    fn binary_round_trip(events in events_strategy(200)) {
        let mut buf = Vec::new();
        write_event_log(&mut buf, &events, LogFormat::PackedBinary).unwrap();
        let back = parse_event_log(buf.as_slice(), LogFormat::PackedBinary).unwrap();
        prop_assert_eq!(back, events);
    }

    #[test]
    fn tally_is_additive(a in events_strategy(100), b in events_strategy(100)) {
        let mut combined = a.clone();
        combined.extend(b.iter().copied());
        let merged = tally(&a, None).merged(&tally(&b, None));
        prop_assert_eq!(tally(&combined, None), merged);
    }

    #[test]
    fn tally_ignores_event_order(events in events_strategy(100), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = events.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(tally(&events, None), tally(&shuffled, None));
    }

    #[test]
    fn tally_filter_partitions_counts(events in events_strategy(150)) {
        let total = tally(&events, None);
        let parts = [StateLabel::Unlabeled, StateLabel::PsiPlus, StateLabel::PsiMinus]
            .iter()
            .map(|&l| tally(&events, Some(l)))
            .fold(rspcert::events::CountsTable::default(), |acc, t| acc.merged(&t));
        prop_assert_eq!(total, parts);
    }

    #[test]
    fn bitstring_byte_round_trip(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let len = bytes.len() * 8;
        let s = BitString::from_bytes_msb(&bytes, len).unwrap();
        prop_assert_eq!(s.to_bytes_msb(), bytes);
    }
}

/// Monobit frequency smoke test on extracted output: with a uniform output
/// the one-fraction stays within the normal 99% band. A sanity check on
/// the whole pipeline, not a proof of uniformity.
#[test]
fn extracted_bits_pass_monobit_smoke_test() {
    let sc = chsh_optimal(werner_state(1.0).unwrap());
    let events = sc.sample_events(100_000, 424_242);
    let report = analyze(&events, &AnalysisConfig::default()).unwrap();
    let budget: EntropyBudget = (&report.sdi_budget).into();
    assert!(budget.h_total > 50_000.0, "budget {}", budget.h_total);

    use rand::{RngCore, SeedableRng};
    let mut seed_bytes = vec![0u8; 40_000];
    rand_chacha::ChaCha8Rng::seed_from_u64(7).fill_bytes(&mut seed_bytes);
    let (bits, ext) =
        extract_certified(&events, &budget, 0.001, &SeedSource::Bytes(seed_bytes)).unwrap();
    assert_eq!(bits.len(), ext.m_out);

    let m = bits.len() as f64;
    let ones = bits.count_ones() as f64;
    // two-sided z test at significance 0.01: |p̂ − 1/2| ≤ 2.576·√(1/(4m))
    let bound = 2.576 * (0.25 / m).sqrt();
    assert!(
        (ones / m - 0.5).abs() <= bound,
        "ones fraction {} outside ±{bound}",
        ones / m
    );
}

/// `analyze` and `extract` must be driven by the same budget computation;
/// the extraction report's h_total equals the analysis budget verbatim.
#[test]
fn analysis_and_extraction_budgets_agree() {
    let sc = chsh_optimal(werner_state(0.95).unwrap());
    let events = sc.sample_events(20_000, 31);
    let report = analyze(&events, &AnalysisConfig::default()).unwrap();

    let di: EntropyBudget = (&report.di_budget).into();
    let (_, ext_di) = extract_certified(&events, &di, 0.001, &SeedSource::Os).unwrap();
    assert_eq!(ext_di.h_total, report.di_budget.total_bits as f64);

    let sdi: EntropyBudget = (&report.sdi_budget).into();
    let (_, ext_sdi) = extract_certified(&events, &sdi, 0.001, &SeedSource::Os).unwrap();
    assert_eq!(ext_sdi.h_total, report.sdi_budget.total_min_entropy_bits);
    assert!(ext_sdi.m_out > ext_di.m_out);
}
