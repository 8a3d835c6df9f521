//! Both carry legs and the wedge between them.
//!
//! Carries are effective annual rates, `ratio^(1/tau) - 1`. The ETF leg uses
//! the implied forward over the ETF close and adds the fund expense ratio;
//! the futures leg uses the matched futures close over the reference rate,
//! annualized over the contract's own remaining life.

use thiserror::Error;

use crate::ingest::{FuturesQuote, HoldingsRecord, ReferenceRate, TradingDate};
use crate::parity::{ForwardObservation, YearFraction};
use crate::select::SelectedPair;

pub const DEFAULT_EXPENSE_RATIO: f64 = 0.0025;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CarryError {
    #[error("zero tenor")]
    ZeroTenor,
    #[error("price ratio {0} is not positive")]
    NonPositiveRatio(f64),
    #[error("expense ratio {0} is negative")]
    NegativeExpenseRatio(f64),
    #[error("no futures contract on {date} to match option expiration {option_expiration}")]
    NoMatchableContract {
        date: TradingDate,
        option_expiration: TradingDate,
    },
    #[error("no reference rate on {date}")]
    MissingReference { date: TradingDate },
}

/// Annual fund fee as a decimal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpenseRatio(f64);

impl ExpenseRatio {
    pub fn new(annual: f64) -> Result<Self, CarryError> {
        if annual >= 0.0 && annual.is_finite() {
            Ok(ExpenseRatio(annual))
        } else {
            Err(CarryError::NegativeExpenseRatio(annual))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for ExpenseRatio {
    fn default() -> Self {
        ExpenseRatio(DEFAULT_EXPENSE_RATIO)
    }
}

/// Bitcoin per ETF share on a date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoldingsRatio {
    pub date: TradingDate,
    pub q: f64,
}

pub fn holdings_ratio(record: &HoldingsRecord) -> HoldingsRatio {
    HoldingsRatio {
        date: record.date,
        q: record.btc_per_share(),
    }
}

/// `ratio^(1/tau) - 1`.
pub fn effective_annual_carry(ratio: f64, tau: f64) -> Result<f64, CarryError> {
    if !(tau > 0.0) {
        return Err(CarryError::ZeroTenor);
    }
    if !(ratio > 0.0) {
        return Err(CarryError::NonPositiveRatio(ratio));
    }
    Ok((ratio.ln() / tau).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtfCarry {
    pub raw: f64,
    pub adjusted: f64,
}

pub fn etf_carry(
    fwd: &ForwardObservation,
    etf_close: f64,
    fee: ExpenseRatio,
) -> Result<EtfCarry, CarryError> {
    let raw = effective_annual_carry(fwd.forward_etf / etf_close, fwd.tau.tau())?;
    Ok(EtfCarry {
        raw,
        adjusted: raw + fee.value(),
    })
}

/// Contract on `date` whose expiration is nearest `option_expiration`;
/// ties go to the earlier contract. Contracts with less than one day left are
/// skipped.
pub fn match_futures(
    option_expiration: TradingDate,
    date: TradingDate,
    futures: &[FuturesQuote],
) -> Result<&FuturesQuote, CarryError> {
    futures
        .iter()
        .filter(|f| f.date == date && date.days_until(f.expiration) >= 1)
        .min_by_key(|f| {
            (
                option_expiration.days_until(f.expiration).abs(),
                f.expiration,
                f.contract_code.clone(),
            )
        })
        .ok_or(CarryError::NoMatchableContract {
            date,
            option_expiration,
        })
}

/// Futures carry over the reference rate. `refrate` must be the same-date
/// print.
pub fn cme_carry(
    fut: &FuturesQuote,
    refrate: Option<&ReferenceRate>,
    date: TradingDate,
) -> Result<f64, CarryError> {
    let reference = refrate
        .filter(|r| r.date == date)
        .ok_or(CarryError::MissingReference { date })?;
    let remaining = date.days_until(fut.expiration);
    effective_annual_carry(
        fut.close / reference.value,
        YearFraction::from_days(remaining).tau(),
    )
}

/// Futures carry minus fee-adjusted ETF carry.
pub fn wedge(cme: f64, etf_adj: f64) -> f64 {
    cme - etf_adj
}

/// One (date, bucket) row of the wedge series. Carries are decimals per
/// year.
#[derive(Debug, Clone, PartialEq)]
pub struct CarryObservation {
    pub date: TradingDate,
    pub bucket: String,
    pub strike: f64,
    pub option_expiration: TradingDate,
    pub option_tau: f64,
    pub futures_code: String,
    pub futures_expiration: TradingDate,
    pub futures_tau: f64,
    pub forward_etf: f64,
    pub holdings_ratio: f64,
    pub implied_btc_forward: f64,
    pub etf_carry_raw: f64,
    pub etf_carry_adj: f64,
    pub cme_carry: f64,
    pub wedge: f64,
}

impl CarryObservation {
    pub fn assemble(
        selected: &SelectedPair,
        fwd: &ForwardObservation,
        q: HoldingsRatio,
        etf: EtfCarry,
        fut: &FuturesQuote,
        cme: f64,
    ) -> Self {
        CarryObservation {
            date: fwd.date,
            bucket: selected.bucket.clone(),
            strike: fwd.strike,
            option_expiration: fwd.expiration,
            option_tau: fwd.tau.tau(),
            futures_code: fut.contract_code.clone(),
            futures_expiration: fut.expiration,
            futures_tau: YearFraction::from_days(fwd.date.days_until(fut.expiration)).tau(),
            forward_etf: fwd.forward_etf,
            holdings_ratio: q.q,
            implied_btc_forward: fwd.forward_etf / q.q,
            etf_carry_raw: etf.raw,
            etf_carry_adj: etf.adjusted,
            cme_carry: cme,
            wedge: wedge(cme, etf.adjusted),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> TradingDate {
        s.parse().unwrap()
    }

    fn fwd(forward: f64, tau: f64) -> ForwardObservation {
        ForwardObservation {
            date: d("2025-03-03"),
            expiration: d("2025-03-28"),
            strike: forward,
            tau: YearFraction::from_days((tau * 365.0).round() as i64),
            rate: 0.0,
            forward_etf: forward,
        }
    }

    fn fut(code: &str, date: &str, exp: &str, close: f64) -> FuturesQuote {
        FuturesQuote {
            date: d(date),
            contract_code: code.into(),
            expiration: d(exp),
            close,
        }
    }

    #[test]
    fn holdings_ratio_examples() {
        let rec = |btc, shares| HoldingsRecord {
            date: d("2025-03-03"),
            btc_holdings: btc,
            shares_outstanding: shares,
        };
        let q = holdings_ratio(&rec(500_000.0, 880_000_000.0)).q;
        assert!((q - 5.681_818_181_818_18e-4).abs() < 1e-17);
        assert_eq!(holdings_ratio(&rec(1.0, 1.0)).q, 1.0);
        assert_eq!(holdings_ratio(&rec(1_000_000.0, 880_000_000.0)).q, 2.0 * q);
    }

    #[test]
    fn annual_carry_examples() {
        assert!((effective_annual_carry(1.05, 1.0).unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(effective_annual_carry(1.0, 0.3).unwrap(), 0.0);
        // 1.01^5 - 1
        let y = effective_annual_carry(1.01, 73.0 / 365.0).unwrap();
        assert!((y - 0.051_010_050_1).abs() < 1e-14, "{y}");
        assert_eq!(
            effective_annual_carry(1.01, 0.0),
            Err(CarryError::ZeroTenor)
        );
        assert!(effective_annual_carry(0.0, 1.0).is_err());
    }

    #[test]
    fn etf_carry_examples() {
        let c = etf_carry(&fwd(51.0, 0.2), 50.0, ExpenseRatio::new(0.0025).unwrap()).unwrap();
        // 1.02^5 - 1 = 0.1040808032
        assert!((c.raw - 0.104_080_803_2).abs() < 1e-13);
        assert!((c.adjusted - 0.106_580_803_2).abs() < 1e-13);

        let flat = etf_carry(&fwd(50.0, 0.2), 50.0, ExpenseRatio::default()).unwrap();
        assert_eq!(flat.raw, 0.0);
        assert_eq!(flat.adjusted, 0.0025);

        let nofee = etf_carry(&fwd(51.0, 0.2), 50.0, ExpenseRatio::new(0.0).unwrap()).unwrap();
        assert_eq!(nofee.adjusted, nofee.raw);
        assert!(ExpenseRatio::new(-0.01).is_err());
    }

    #[test]
    fn futures_matching() {
        let date = "2025-03-03";
        let list = vec![
            fut("M", date, "2025-05-30", 1.0),
            fut("J", date, "2025-04-25", 1.0),
        ];
        let m = match_futures(d("2025-04-25"), d(date), &list).unwrap();
        assert_eq!(m.contract_code, "J");

        let tie = vec![
            fut("LATE", date, "2025-04-20", 1.0),
            fut("EARLY", date, "2025-03-31", 1.0),
        ];
        // option expiry 2025-04-10: 10 days either way
        assert_eq!(
            match_futures(d("2025-04-10"), d(date), &tie)
                .unwrap()
                .contract_code,
            "EARLY"
        );

        let expiring = vec![fut("X", date, date, 1.0)];
        assert!(matches!(
            match_futures(d("2025-03-28"), d(date), &expiring),
            Err(CarryError::NoMatchableContract { .. })
        ));
        let other_day = vec![fut("Y", "2025-03-04", "2025-03-28", 1.0)];
        assert!(match_futures(d("2025-03-28"), d(date), &other_day).is_err());
    }

    #[test]
    fn cme_carry_examples() {
        let date = d("2025-03-03");
        let r = |v| ReferenceRate { date, value: v };
        let f = fut("J", "2025-03-03", "2025-04-12", 109_000.0);
        // (109000/107500)^(365/40) - 1, 30-digit offline evaluation
        let y = cme_carry(&f, Some(&r(107_500.0)), date).unwrap();
        assert!((y - 0.134_787_536_937_876_2).abs() < 1e-13, "{y}");

        let flat = fut("J", "2025-03-03", "2025-04-12", 107_500.0);
        assert_eq!(cme_carry(&flat, Some(&r(107_500.0)), date).unwrap(), 0.0);

        let year = fut("Z", "2025-03-03", "2026-03-03", 105_000.0);
        let y = cme_carry(&year, Some(&r(100_000.0)), date).unwrap();
        assert!((y - 0.05).abs() < 1e-15);

        assert_eq!(
            cme_carry(&f, None, date),
            Err(CarryError::MissingReference { date })
        );
        let stale = ReferenceRate {
            date: d("2025-02-28"),
            value: 1.0,
        };
        assert!(cme_carry(&f, Some(&stale), date).is_err());
    }

    #[test]
    fn wedge_examples() {
        assert!((wedge(0.07, 0.045) - 0.025).abs() < 1e-16);
        assert_eq!(wedge(0.04, 0.04), 0.0);
        assert!((wedge(0.02, 0.05) + 0.03).abs() < 1e-16);
    }

    proptest! {
        #[test]
        // shorter tenors push 1 + y below what f64 can hold next to 1.0
        fn annualization_round_trip(ratio in 0.8f64..1.25, days in 7i64..800) {
            let tau = days as f64 / 365.0;
            let y = effective_annual_carry(ratio, tau).unwrap();
            let back = (1.0 + y).powf(tau);
            prop_assert!(((back - ratio) / ratio).abs() < 1e-12);
        }

        #[test]
        fn wedge_antisymmetric(a in -1.0f64..1.0, b in -1.0f64..1.0) {
            prop_assert_eq!(wedge(a, b), -wedge(b, a));
        }
    }
}
