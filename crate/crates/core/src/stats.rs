//! Summary tables over wedge series: count, mean, sample SD and linearly
//! interpolated percentiles at `h = (n - 1) p`.

use log::warn;
use thiserror::Error;

use crate::carry::CarryObservation;
use crate::select::BucketSpec;

pub const OVERALL_GROUP: &str = "overall";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("group `{0}` is empty")]
    EmptyGroup(String),
    #[error("group `{0}` contains a non-finite value")]
    NonFinite(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: String,
    pub n: usize,
    pub mean: f64,
    /// Zero when `n == 1`; see `sd_defined`.
    pub sd: f64,
    pub p05: f64,
    pub median: f64,
    pub p95: f64,
    pub sd_defined: bool,
}

/// Quantile of ascending `sorted` by linear interpolation between order
/// statistics.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Summarizes `values` as given; callers convert to percentage points
/// first.
pub fn summarize(values: &[f64], group: &str) -> Result<SummaryRow, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyGroup(group.to_string()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(group.to_string()));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let sd_defined = n > 1;
    let sd = if sd_defined {
        let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(SummaryRow {
        group: group.to_string(),
        n,
        mean,
        sd,
        p05: quantile_sorted(&sorted, 0.05),
        median: quantile_sorted(&sorted, 0.5),
        p95: quantile_sorted(&sorted, 0.95),
        sd_defined,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BucketSummaries {
    /// Overall row first, then buckets in configuration order.
    pub rows: Vec<SummaryRow>,
    /// Buckets with no observations; they get no row.
    pub empty_groups: Vec<String>,
}

/// Wedge summaries in percentage points, overall and per bucket.
pub fn bucket_summaries(
    observations: &[CarryObservation],
    buckets: &[BucketSpec],
) -> BucketSummaries {
    let to_pp = |o: &CarryObservation| o.wedge * 100.0;
    let mut out = BucketSummaries::default();
    let mut push = |values: Vec<f64>, label: &str| match summarize(&values, label) {
        Ok(row) => {
            if !row.sd_defined {
                warn!("group `{label}` has a single observation; SD reported as 0");
            }
            out.rows.push(row);
        }
        Err(e) => {
            warn!("{e}; row omitted");
            out.empty_groups.push(label.to_string());
        }
    };
    push(observations.iter().map(to_pp).collect(), OVERALL_GROUP);
    for b in buckets {
        let values = observations
            .iter()
            .filter(|o| o.bucket == b.label)
            .map(to_pp)
            .collect();
        push(values, &b.label);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TradingDate;
    use crate::select::default_buckets;
    use proptest::prelude::*;

    #[test]
    fn worked_example() {
        let r = summarize(&[1.0, 2.0, 3.0, 4.0, 5.0], "x").unwrap();
        assert_eq!(r.n, 5);
        assert_eq!(r.mean, 3.0);
        assert_eq!(r.median, 3.0);
        assert!((r.sd - 1.581_138_830_084_189_8).abs() < 1e-15);
        assert!((r.p05 - 1.2).abs() < 1e-12);
        assert!((r.p95 - 4.8).abs() < 1e-12);
    }

    #[test]
    fn constant_and_single() {
        let r = summarize(&[2.5; 7], "c").unwrap();
        assert_eq!(r.sd, 0.0);
        assert_eq!((r.p05, r.median, r.p95), (2.5, 2.5, 2.5));

        let one = summarize(&[-4.0], "one").unwrap();
        assert_eq!(
            (one.mean, one.median, one.p05, one.p95),
            (-4.0, -4.0, -4.0, -4.0)
        );
        assert_eq!(one.sd, 0.0);
        assert!(!one.sd_defined);
    }

    #[test]
    fn errors() {
        assert_eq!(summarize(&[], "e"), Err(StatsError::EmptyGroup("e".into())));
        assert!(summarize(&[1.0, f64::NAN], "n").is_err());
    }

    fn obs(bucket: &str, wedge: f64) -> CarryObservation {
        let date = TradingDate::from_ymd(2025, 3, 3).unwrap();
        CarryObservation {
            date,
            bucket: bucket.into(),
            strike: 1.0,
            option_expiration: date,
            option_tau: 0.1,
            futures_code: "F".into(),
            futures_expiration: date,
            futures_tau: 0.1,
            forward_etf: 1.0,
            holdings_ratio: 1.0,
            implied_btc_forward: 1.0,
            etf_carry_raw: 0.0,
            etf_carry_adj: 0.0,
            cme_carry: wedge,
            wedge,
        }
    }

    #[test]
    fn bucket_rows() {
        let mut all: Vec<_> = (0..193).map(|i| obs("14-30d", i as f64 * 1e-4)).collect();
        all.extend((0..193).map(|i| obs("31-60d", i as f64 * 2e-4)));
        let s = bucket_summaries(&all, &default_buckets());
        let shape: Vec<_> = s.rows.iter().map(|r| (r.group.as_str(), r.n)).collect();
        assert_eq!(
            shape,
            vec![("overall", 386), ("14-30d", 193), ("31-60d", 193)]
        );
        // converted to percentage points
        assert!((s.rows[1].mean - 0.96).abs() < 1e-12);

        let s = bucket_summaries(&all[..193], &default_buckets());
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.empty_groups, vec!["31-60d".to_string()]);

        let single = vec![default_buckets().remove(0)];
        assert_eq!(bucket_summaries(&all[..193], &single).rows.len(), 2);
    }

    proptest! {
        #[test]
        fn ordered_quantiles(v in prop::collection::vec(-50.0f64..50.0, 1..200)) {
            let r = summarize(&v, "p").unwrap();
            prop_assert!(r.p05 <= r.median && r.median <= r.p95);
            prop_assert!(r.sd >= 0.0);
        }

        #[test]
        fn scale_and_shift(v in prop::collection::vec(-50.0f64..50.0, 2..200), c in 0.1f64..10.0, s in -20.0f64..20.0) {
            let base = summarize(&v, "b").unwrap();
            let scaled = summarize(&v.iter().map(|x| x * c).collect::<Vec<_>>(), "s").unwrap();
            let shifted = summarize(&v.iter().map(|x| x + s).collect::<Vec<_>>(), "t").unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()));
            for (a, b) in [
                (scaled.mean, c * base.mean), (scaled.sd, c * base.sd), (scaled.p05, c * base.p05),
                (scaled.median, c * base.median), (scaled.p95, c * base.p95),
                (shifted.mean, base.mean + s), (shifted.sd, base.sd), (shifted.p05, base.p05 + s),
                (shifted.median, base.median + s), (shifted.p95, base.p95 + s),
            ] {
                prop_assert!(close(a, b), "{} vs {}", a, b);
            }
        }
    }
}
