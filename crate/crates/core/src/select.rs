//! Sample filters, maturity buckets and the one-pair-per-bucket selection.
//!
//! Tenor and open-interest bounds are inclusive, moneyness and spread
//! bounds strict. Within a bucket the expiration nearest the target is fixed
//! first; the strike is then chosen closest to the money, breaking ties by
//! larger pair open interest (thinner leg), smaller combined relative spread,
//! and finally lower strike.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::ingest::TradingDate;
use crate::parity::OptionPair;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SelectError {
    #[error("bucket `{0}`: need min_days <= target_days <= max_days")]
    BadBucket(String),
    #[error("buckets `{0}` and `{1}` overlap")]
    Overlap(String, String),
    #[error("duplicate bucket label `{0}`")]
    DuplicateLabel(String),
    #[error("filter parameter `{0}` must be strictly positive")]
    BadFilter(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketSpec {
    pub label: String,
    pub min_days: i64,
    pub max_days: i64,
    pub target_days: i64,
}

impl BucketSpec {
    pub fn new(
        label: impl Into<String>,
        min_days: i64,
        max_days: i64,
        target_days: i64,
    ) -> Result<Self, SelectError> {
        let label = label.into();
        if label.is_empty() || !(min_days <= target_days && target_days <= max_days) {
            return Err(SelectError::BadBucket(label));
        }
        Ok(BucketSpec {
            label,
            min_days,
            max_days,
            target_days,
        })
    }

    pub fn contains(&self, days: i64) -> bool {
        (self.min_days..=self.max_days).contains(&days)
    }
}

/// The 14-30 day (target 22) and 31-60 day (target 45) buckets.
pub fn default_buckets() -> Vec<BucketSpec> {
    vec![
        BucketSpec::new("14-30d", 14, 30, 22).unwrap(),
        BucketSpec::new("31-60d", 31, 60, 45).unwrap(),
    ]
}

pub fn validate_buckets(buckets: &[BucketSpec]) -> Result<(), SelectError> {
    for (i, a) in buckets.iter().enumerate() {
        if !(a.min_days <= a.target_days && a.target_days <= a.max_days) {
            return Err(SelectError::BadBucket(a.label.clone()));
        }
        for b in &buckets[i + 1..] {
            if a.label == b.label {
                return Err(SelectError::DuplicateLabel(a.label.clone()));
            }
            if a.min_days <= b.max_days && b.min_days <= a.max_days {
                return Err(SelectError::Overlap(a.label.clone(), b.label.clone()));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub min_days: i64,
    pub max_days: i64,
    pub max_abs_moneyness: f64,
    pub max_rel_spread: f64,
    pub min_open_interest: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_days: 14,
            max_days: 90,
            max_abs_moneyness: 0.05,
            max_rel_spread: 0.10,
            min_open_interest: 100,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), SelectError> {
        if self.min_days <= 0 {
            return Err(SelectError::BadFilter("min_days"));
        }
        if self.max_days < self.min_days {
            return Err(SelectError::BadFilter("max_days"));
        }
        if !(self.max_abs_moneyness > 0.0) {
            return Err(SelectError::BadFilter("max_abs_moneyness"));
        }
        if !(self.max_rel_spread > 0.0) {
            return Err(SelectError::BadFilter("max_rel_spread"));
        }
        if self.min_open_interest == 0 {
            return Err(SelectError::BadFilter("min_open_interest"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum RejectReason {
    Tenor,
    Moneyness,
    Spread,
    OpenInterest,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Tenor => "tenor",
            RejectReason::Moneyness => "moneyness",
            RejectReason::Spread => "spread",
            RejectReason::OpenInterest => "open_interest",
        })
    }
}

/// Signed `strike / etf_close - 1`.
pub fn moneyness(strike: f64, etf_close: f64) -> f64 {
    strike / etf_close - 1.0
}

/// `(ask - bid) / mid`, or `None` when the mid is zero.
pub fn relative_spread(bid: f64, ask: f64) -> Option<f64> {
    let mid = (bid + ask) / 2.0;
    (mid > 0.0).then(|| (ask - bid) / mid)
}

fn combined_spread(pair: &OptionPair) -> f64 {
    let call = relative_spread(pair.call_bid, pair.call_ask).unwrap_or(f64::INFINITY);
    let put = relative_spread(pair.put_bid, pair.put_ask).unwrap_or(f64::INFINITY);
    call + put
}

/// Applies the four sample filters in order: tenor, moneyness, spread, open
/// interest. The first failing rule is reported.
pub fn passes_filters(
    pair: &OptionPair,
    etf_close: f64,
    cfg: &FilterConfig,
) -> Result<(), RejectReason> {
    let days = pair.days_to_expiration();
    if days < cfg.min_days || days > cfg.max_days {
        return Err(RejectReason::Tenor);
    }
    if !(moneyness(pair.strike, etf_close).abs() < cfg.max_abs_moneyness) {
        return Err(RejectReason::Moneyness);
    }
    let legs = [(pair.call_bid, pair.call_ask), (pair.put_bid, pair.put_ask)];
    for (bid, ask) in legs {
        match relative_spread(bid, ask) {
            Some(s) if s < cfg.max_rel_spread => {}
            _ => return Err(RejectReason::Spread),
        }
    }
    if pair.call_oi < cfg.min_open_interest || pair.put_oi < cfg.min_open_interest {
        return Err(RejectReason::OpenInterest);
    }
    Ok(())
}

pub fn assign_bucket(days: i64, buckets: &[BucketSpec]) -> Option<&BucketSpec> {
    buckets.iter().find(|b| b.contains(days))
}

/// Deepest ordering criterion needed to separate the winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TieBreak {
    SingleCandidate,
    Moneyness,
    OpenInterest,
    Spread,
    Strike,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionDiagnostics {
    pub candidates: usize,
    pub expirations: usize,
    pub tie_break: TieBreak,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedPair {
    pub pair: OptionPair,
    pub bucket: String,
    pub etf_close: f64,
    pub diagnostics: SelectionDiagnostics,
}

fn strike_order(a: &OptionPair, b: &OptionPair, etf_close: f64) -> Ordering {
    let abs_m = |p: &OptionPair| moneyness(p.strike, etf_close).abs();
    abs_m(a)
        .total_cmp(&abs_m(b))
        .then_with(|| b.pair_open_interest().cmp(&a.pair_open_interest()))
        .then_with(|| combined_spread(a).total_cmp(&combined_spread(b)))
        .then_with(|| a.strike.total_cmp(&b.strike))
        // unreachable for deduplicated quotes; keeps the order total
        .then_with(|| a.call_bid.total_cmp(&b.call_bid))
        .then_with(|| a.call_ask.total_cmp(&b.call_ask))
        .then_with(|| a.put_bid.total_cmp(&b.put_bid))
        .then_with(|| a.put_ask.total_cmp(&b.put_ask))
}

/// Picks one pair for `bucket` on `date`. Candidates are expected to have
/// passed [`passes_filters`] and to fall in the bucket; those dated
/// elsewhere are ignored. The result does not depend on input order.
pub fn select_pair(
    date: TradingDate,
    bucket: &BucketSpec,
    candidates: &[OptionPair],
    etf_close: f64,
) -> Option<SelectedPair> {
    let on_date: Vec<&OptionPair> = candidates.iter().filter(|p| p.date == date).collect();
    let expiration = on_date
        .iter()
        .map(|p| p.expiration)
        .min_by_key(|e| ((date.days_until(*e) - bucket.target_days).abs(), *e))?;
    let mut expirations: Vec<TradingDate> = on_date.iter().map(|p| p.expiration).collect();
    expirations.sort();
    expirations.dedup();

    let same_exp: Vec<&OptionPair> = on_date
        .into_iter()
        .filter(|p| p.expiration == expiration)
        .collect();
    let winner = *same_exp
        .iter()
        .min_by(|a, b| strike_order(a, b, etf_close))
        .expect("non-empty");

    let abs_m = |p: &OptionPair| moneyness(p.strike, etf_close).abs();
    let rivals: Vec<&&OptionPair> = same_exp
        .iter()
        .filter(|p| !std::ptr::eq(**p, winner))
        .collect();
    let tie_break = if rivals.is_empty() {
        TieBreak::SingleCandidate
    } else {
        let m_ties: Vec<_> = rivals
            .iter()
            .filter(|p| abs_m(p) == abs_m(winner))
            .collect();
        let oi_ties: Vec<_> = m_ties
            .iter()
            .filter(|p| p.pair_open_interest() == winner.pair_open_interest())
            .collect();
        let spread_ties = oi_ties
            .iter()
            .filter(|p| combined_spread(p) == combined_spread(winner))
            .count();
        if m_ties.is_empty() {
            TieBreak::Moneyness
        } else if oi_ties.is_empty() {
            TieBreak::OpenInterest
        } else if spread_ties == 0 {
            TieBreak::Spread
        } else {
            TieBreak::Strike
        }
    };

    Some(SelectedPair {
        pair: winner.clone(),
        bucket: bucket.label.clone(),
        etf_close,
        diagnostics: SelectionDiagnostics {
            candidates: same_exp.len(),
            expirations: expirations.len(),
            tie_break,
        },
    })
}

/// Per-date outcome of filtering and selection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DaySelection {
    pub passed: usize,
    pub rejected: BTreeMap<RejectReason, usize>,
    /// Passed the filters but fell in no bucket.
    pub unbucketed: usize,
    /// At most one per bucket, in bucket order.
    pub selected: Vec<SelectedPair>,
}

/// Filters all pairs quoted on `date` and selects one per bucket.
pub fn select_day(
    date: TradingDate,
    pairs: &[OptionPair],
    etf_close: f64,
    cfg: &FilterConfig,
    buckets: &[BucketSpec],
) -> DaySelection {
    let mut out = DaySelection::default();
    let mut by_bucket: Vec<Vec<OptionPair>> = vec![Vec::new(); buckets.len()];
    for p in pairs.iter().filter(|p| p.date == date) {
        match passes_filters(p, etf_close, cfg) {
            Err(reason) => *out.rejected.entry(reason).or_default() += 1,
            Ok(()) => {
                out.passed += 1;
                match buckets
                    .iter()
                    .position(|b| b.contains(p.days_to_expiration()))
                {
                    Some(i) => by_bucket[i].push(p.clone()),
                    None => out.unbucketed += 1,
                }
            }
        }
    }
    out.selected = buckets
        .iter()
        .zip(&by_bucket)
        .filter_map(|(b, cands)| select_pair(date, b, cands, etf_close))
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> TradingDate {
        s.parse().unwrap()
    }

    fn base_pair() -> OptionPair {
        let date = d("2025-03-03");
        OptionPair {
            date,
            expiration: date.add_days(25),
            strike: 102.0,
            call_bid: 1.05,
            call_ask: 1.15,
            put_bid: 2.40,
            put_ask: 2.60,
            call_oi: 450,
            put_oi: 300,
            call_mid: 1.10,
            put_mid: 2.50,
        }
    }

    #[test]
    fn moneyness_examples() {
        assert!((moneyness(104.0, 100.0) - 0.04).abs() < 1e-15);
        assert_eq!(moneyness(100.0, 100.0), 0.0);
        let m = moneyness(94.0, 100.0);
        assert!((m + 0.06).abs() < 1e-15);
        assert!(m.abs() >= FilterConfig::default().max_abs_moneyness);
    }

    #[test]
    fn filter_examples() {
        let cfg = FilterConfig::default();
        let p = base_pair();
        assert_eq!(passes_filters(&p, 100.0, &cfg), Ok(()));

        let mut thin = p.clone();
        thin.call_oi = 99;
        assert_eq!(
            passes_filters(&thin, 100.0, &cfg),
            Err(RejectReason::OpenInterest)
        );
        thin.call_oi = 100;
        assert_eq!(passes_filters(&thin, 100.0, &cfg), Ok(()));

        let mut short = p.clone();
        short.expiration = short.date.add_days(13);
        assert_eq!(
            passes_filters(&short, 100.0, &cfg),
            Err(RejectReason::Tenor)
        );
        short.expiration = short.date.add_days(14);
        assert_eq!(passes_filters(&short, 100.0, &cfg), Ok(()));
        short.expiration = short.date.add_days(91);
        assert_eq!(
            passes_filters(&short, 100.0, &cfg),
            Err(RejectReason::Tenor)
        );

        assert_eq!(
            passes_filters(&p, 108.0, &cfg),
            Err(RejectReason::Moneyness)
        );

        let mut wide = p.clone();
        wide.put_bid = 2.0;
        wide.put_ask = 3.0;
        assert_eq!(
            passes_filters(&wide, 100.0, &cfg),
            Err(RejectReason::Spread)
        );

        let mut zero = p;
        zero.call_bid = 0.0;
        zero.call_ask = 0.0;
        assert_eq!(
            passes_filters(&zero, 100.0, &cfg),
            Err(RejectReason::Spread)
        );
    }

    #[test]
    fn spread_bound_is_strict() {
        let cfg = FilterConfig::default();
        let mut p = base_pair();
        // exactly 10%: 0.25 / 2.5
        p.put_bid = 2.375;
        p.put_ask = 2.625;
        assert_eq!(relative_spread(2.375, 2.625), Some(0.1));
        assert_eq!(passes_filters(&p, 100.0, &cfg), Err(RejectReason::Spread));
    }

    #[test]
    fn bucket_assignment() {
        let b = default_buckets();
        assert_eq!(assign_bucket(22, &b).unwrap().label, "14-30d");
        assert_eq!(assign_bucket(45, &b).unwrap().label, "31-60d");
        assert_eq!(assign_bucket(30, &b).unwrap().label, "14-30d");
        assert_eq!(assign_bucket(31, &b).unwrap().label, "31-60d");
        assert!(assign_bucket(75, &b).is_none());
        assert!(assign_bucket(13, &b).is_none());
    }

    #[test]
    fn bucket_validation() {
        assert!(validate_buckets(&default_buckets()).is_ok());
        let overlap = vec![
            BucketSpec::new("a", 14, 30, 22).unwrap(),
            BucketSpec::new("b", 30, 60, 45).unwrap(),
        ];
        assert!(matches!(
            validate_buckets(&overlap),
            Err(SelectError::Overlap(..))
        ));
        assert!(BucketSpec::new("c", 14, 30, 31).is_err());
        let bad = FilterConfig {
            max_rel_spread: 0.0,
            ..FilterConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn nearest_expiration_then_nearest_strike() {
        let bucket = &default_buckets()[0];
        let mut a = base_pair();
        a.expiration = a.date.add_days(21);
        a.strike = 101.5;
        let mut b = base_pair();
        b.expiration = b.date.add_days(28);
        b.strike = 100.0;
        let s = select_pair(a.date, bucket, &[b.clone(), a.clone()], 100.0).unwrap();
        assert_eq!(s.pair.expiration, a.expiration);
        assert_eq!(s.diagnostics.expirations, 2);

        let mut c = a.clone();
        c.strike = 101.0;
        let mut e = a.clone();
        e.strike = 98.5;
        let s = select_pair(a.date, bucket, &[a.clone(), e, c.clone()], 100.0).unwrap();
        assert_eq!(s.pair.strike, 101.0);
        assert_eq!(s.diagnostics.tie_break, TieBreak::Moneyness);
    }

    #[test]
    fn tie_break_layers() {
        let bucket = &default_buckets()[0];
        // close 64 keeps |m| = 1/64 exact on both sides
        let mut lo = base_pair();
        lo.strike = 63.0;
        let mut hi = base_pair();
        hi.strike = 65.0;
        hi.call_oi = 1000;
        hi.put_oi = 1000;
        let s = select_pair(lo.date, bucket, &[lo.clone(), hi.clone()], 64.0).unwrap();
        assert_eq!(s.pair.strike, 65.0);
        assert_eq!(s.diagnostics.tie_break, TieBreak::OpenInterest);

        hi.call_oi = lo.call_oi;
        hi.put_oi = lo.put_oi;
        hi.call_bid = 1.08;
        hi.call_ask = 1.12;
        let s = select_pair(lo.date, bucket, &[lo.clone(), hi.clone()], 64.0).unwrap();
        assert_eq!(s.pair.strike, 65.0);
        assert_eq!(s.diagnostics.tie_break, TieBreak::Spread);

        hi.call_bid = lo.call_bid;
        hi.call_ask = lo.call_ask;
        let s = select_pair(lo.date, bucket, &[hi, lo], 64.0).unwrap();
        assert_eq!(s.pair.strike, 63.0);
        assert_eq!(s.diagnostics.tie_break, TieBreak::Strike);
    }

    #[test]
    fn empty_candidates() {
        let bucket = &default_buckets()[0];
        assert!(select_pair(d("2025-03-03"), bucket, &[], 100.0).is_none());
    }

    #[test]
    fn select_day_one_per_bucket() {
        let mut pairs = Vec::new();
        for days in [20, 22, 40, 45, 75] {
            for strike in [98.0, 100.0, 102.0, 120.0] {
                let mut p = base_pair();
                p.expiration = p.date.add_days(days);
                p.strike = strike;
                pairs.push(p);
            }
        }
        let day = select_day(
            pairs[0].date,
            &pairs,
            100.0,
            &FilterConfig::default(),
            &default_buckets(),
        );
        assert_eq!(day.selected.len(), 2);
        assert_eq!(day.rejected[&RejectReason::Moneyness], 5);
        assert_eq!(day.unbucketed, 3);
        assert_eq!(day.selected[0].pair.days_to_expiration(), 22);
        assert_eq!(day.selected[1].pair.days_to_expiration(), 45);
        assert_eq!(day.selected[0].pair.strike, 100.0);
    }

    fn arb_pair() -> impl Strategy<Value = OptionPair> {
        (
            10i64..100,
            80.0f64..120.0,
            0.5f64..5.0,
            0.0f64..0.3,
            0.5f64..5.0,
            0.0f64..0.3,
            0u64..600,
            0u64..600,
        )
            .prop_map(|(days, strike, cm, cs, pm, ps, coi, poi)| {
                let date = TradingDate::from_ymd(2025, 3, 3).unwrap();
                OptionPair {
                    date,
                    expiration: date.add_days(days),
                    strike,
                    call_bid: cm * (1.0 - cs / 2.0),
                    call_ask: cm * (1.0 + cs / 2.0),
                    put_bid: pm * (1.0 - ps / 2.0),
                    put_ask: pm * (1.0 + ps / 2.0),
                    call_oi: coi,
                    put_oi: poi,
                    call_mid: cm,
                    put_mid: pm,
                }
            })
    }

    proptest! {
        #[test]
        fn loosening_never_shrinks(
            pairs in prop::collection::vec(arb_pair(), 0..40),
            which in 0usize..5,
            amount in 0.0f64..1.0,
        ) {
            let tight = FilterConfig::default();
            let mut loose = tight.clone();
            match which {
                0 => loose.min_days -= (amount * 10.0) as i64,
                1 => loose.max_days += (amount * 10.0) as i64,
                2 => loose.max_abs_moneyness += amount * 0.1,
                3 => loose.max_rel_spread += amount * 0.1,
                _ => loose.min_open_interest -= (amount * 99.0) as u64,
            }
            for p in &pairs {
                if passes_filters(p, 100.0, &tight).is_ok() {
                    prop_assert!(passes_filters(p, 100.0, &loose).is_ok());
                }
            }
        }

        #[test]
        fn permutation_invariant(
            pairs in prop::collection::vec(arb_pair(), 1..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let bucket = BucketSpec::new("all", 1, 400, 30).unwrap();
            let date = pairs[0].date;
            let a = select_pair(date, &bucket, &pairs, 100.0);
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(a, select_pair(date, &bucket, &shuffled, 100.0));
        }
    }
}
