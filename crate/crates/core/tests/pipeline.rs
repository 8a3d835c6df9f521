use carry_wedge::ingest::{parse_records, TradingDate};
use carry_wedge::par::Execution;
use carry_wedge::pipeline::{compute, DropReason, Inputs, Settings};
use carry_wedge::synth::{generate, SynthConfig};
use carry_wedge::Error;

fn synth_inputs(n_days: usize) -> Inputs {
    inputs_for(&SynthConfig {
        n_days,
        ..SynthConfig::with_wedge(0.02)
    })
}

fn inputs_for(cfg: &SynthConfig) -> Inputs {
    let ds = generate(cfg).unwrap();
    Inputs {
        quotes: parse_records(&ds.options).unwrap(),
        etf_closes: parse_records(&ds.etf_closes).unwrap(),
        holdings: parse_records(&ds.holdings).unwrap(),
        futures: parse_records(&ds.futures).unwrap(),
        refrates: parse_records(&ds.refrate).unwrap(),
        rates: parse_records(&ds.rates).unwrap(),
    }
}

fn nth_date(inputs: &Inputs, i: usize) -> TradingDate {
    inputs.etf_closes[i].date
}

#[test]
fn sequential_and_parallel_agree() {
    let inputs = synth_inputs(40);
    let seq = compute(&inputs, &Settings::default(), Execution::Sequential).unwrap();
    let par = compute(&inputs, &Settings::default(), Execution::Parallel).unwrap();
    assert_eq!(seq.observations, par.observations);
    assert_eq!(seq.report, par.report);
}

#[test]
fn missing_holdings_drops_the_date() {
    let mut inputs = synth_inputs(10);
    let gone = nth_date(&inputs, 3);
    inputs.holdings.retain(|h| h.date != gone);
    let c = compute(&inputs, &Settings::default(), Execution::Sequential).unwrap();
    assert_eq!(c.observations.len(), 18);
    assert!(c.observations.iter().all(|o| o.date != gone));
    assert_eq!(
        c.report.dates_dropped.get(&DropReason::MissingHoldings),
        Some(&1)
    );
    assert_eq!(c.report.selections_on_dropped_dates, 2);
    assert!(c.report.reconciles());
}

#[test]
fn missing_reference_drops_each_bucket() {
    let mut inputs = synth_inputs(10);
    let gone = nth_date(&inputs, 5);
    inputs.refrates.retain(|r| r.date != gone);
    let c = compute(&inputs, &Settings::default(), Execution::Sequential).unwrap();
    assert_eq!(c.observations.len(), 18);
    assert_eq!(
        c.report
            .date_buckets_dropped
            .get(&DropReason::MissingReference),
        Some(&2)
    );
    assert!(c.report.reconciles());
}

#[test]
fn missing_close_counts_pairs_without_close() {
    let mut inputs = synth_inputs(10);
    let gone = nth_date(&inputs, 0);
    inputs.etf_closes.retain(|c| c.date != gone);
    let c = compute(&inputs, &Settings::default(), Execution::Sequential).unwrap();
    assert_eq!(c.observations.len(), 18);
    assert!(c.report.pairs_without_close > 0);
    assert!(c.report.reconciles());
}

#[test]
fn rate_forward_fill_has_a_limit() {
    let mut inputs = synth_inputs(30);
    let first = nth_date(&inputs, 0);
    // keep only the first published rate
    inputs.rates.retain(|r| r.date == first);
    let c = compute(&inputs, &Settings::default(), Execution::Sequential).unwrap();
    let last_ok = first.add_days(7);
    assert!(c.observations.iter().all(|o| o.date <= last_ok));
    assert!(c.observations.iter().any(|o| o.date == last_ok));
    assert_eq!(c.report.max_rate_fill_days, 7);
    assert!(
        c.report
            .dates_dropped
            .get(&DropReason::NoUsableRate)
            .copied()
            .unwrap_or(0)
            > 0
    );
    assert!(c.report.reconciles());
}

#[test]
fn strict_mode_stops_on_first_gap() {
    let mut inputs = synth_inputs(10);
    let gone = nth_date(&inputs, 4);
    inputs.holdings.retain(|h| h.date != gone);
    let settings = Settings {
        strict: true,
        ..Settings::default()
    };
    match compute(&inputs, &settings, Execution::Parallel) {
        Err(e @ Error::DataGap { date, .. }) => {
            assert_eq!(date, gone);
            assert_eq!(e.exit_code(), 4);
        }
        other => panic!("expected a data gap, got {other:?}"),
    }
}

#[test]
fn futures_offset_still_matches_nearest() {
    let cfg = SynthConfig {
        n_days: 15,
        futures_offset_days: 3,
        ..SynthConfig::with_wedge(0.01)
    };
    let inputs = inputs_for(&cfg);
    let c = compute(&inputs, &Settings::default(), Execution::Sequential).unwrap();
    assert_eq!(c.observations.len(), 30);
    for o in &c.observations {
        assert_eq!(o.option_expiration.days_until(o.futures_expiration), 3);
        // the wedge stays close to the injected value
        assert!((o.wedge - 0.01).abs() < 1e-9, "{}", o.wedge);
    }
}

#[test]
fn zero_spread_recovers_both_carries() {
    let cfg = SynthConfig {
        n_days: 30,
        half_spread_rel: 0.0,
        ..SynthConfig::with_wedge(0.04)
    };
    let inputs = inputs_for(&cfg);
    let c = compute(&inputs, &Settings::default(), Execution::Parallel).unwrap();
    assert_eq!(c.observations.len(), 60);
    for o in &c.observations {
        assert!((o.etf_carry_raw - cfg.etf_carry_true).abs() < 1e-8);
        assert!((o.cme_carry - cfg.cme_carry_true).abs() < 1e-8);
    }
}
