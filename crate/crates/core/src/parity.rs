//! Midquotes, ACT/365 year fractions and the put-call-parity forward
//! `F = K + e^{r tau} (C - P)`.
//!
//! Option quotes are American style; no early-exercise adjustment is made
//! here. The sample filters in [`crate::select`] are the only mitigation.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::ingest::{OptionQuote, OptionRight, TradingDate};

pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParityError {
    #[error("inverted quote: ask {ask} below bid {bid}")]
    InvertedQuote { bid: f64, ask: f64 },
    #[error("expiration {expiration} precedes date {date}")]
    NegativeTenor {
        date: TradingDate,
        expiration: TradingDate,
    },
    #[error("implied forward {forward} is not positive")]
    NonPositiveForward { forward: f64 },
    #[error("call and put legs differ in date, expiration or strike")]
    LegMismatch,
}

/// Arithmetic mean of bid and ask.
pub fn midquote(bid: f64, ask: f64) -> Result<f64, ParityError> {
    if ask < bid {
        return Err(ParityError::InvertedQuote { bid, ask });
    }
    Ok((bid + ask) / 2.0)
}

/// Calendar days to expiration divided by 365.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct YearFraction(f64);

impl YearFraction {
    pub fn from_days(days: i64) -> Self {
        YearFraction(days as f64 / DAYS_PER_YEAR)
    }

    pub fn tau(self) -> f64 {
        self.0
    }
}

pub fn year_fraction(
    date: TradingDate,
    expiration: TradingDate,
) -> Result<YearFraction, ParityError> {
    let days = date.days_until(expiration);
    if days < 0 {
        return Err(ParityError::NegativeTenor { date, expiration });
    }
    Ok(YearFraction::from_days(days))
}

/// A call and a put sharing date, expiration and strike.
#[derive(Debug, Clone, PartialEq)]
pub struct OptionPair {
    pub date: TradingDate,
    pub expiration: TradingDate,
    pub strike: f64,
    pub call_bid: f64,
    pub call_ask: f64,
    pub put_bid: f64,
    pub put_ask: f64,
    pub call_oi: u64,
    pub put_oi: u64,
    pub call_mid: f64,
    pub put_mid: f64,
}

impl OptionPair {
    pub fn from_legs(call: &OptionQuote, put: &OptionQuote) -> Result<Self, ParityError> {
        if call.right != OptionRight::Call
            || put.right != OptionRight::Put
            || call.date != put.date
            || call.expiration != put.expiration
            || call.strike != put.strike
        {
            return Err(ParityError::LegMismatch);
        }
        Ok(OptionPair {
            date: call.date,
            expiration: call.expiration,
            strike: call.strike,
            call_bid: call.bid,
            call_ask: call.ask,
            put_bid: put.bid,
            put_ask: put.ask,
            call_oi: call.open_interest,
            put_oi: put.open_interest,
            call_mid: midquote(call.bid, call.ask)?,
            put_mid: midquote(put.bid, put.ask)?,
        })
    }

    pub fn days_to_expiration(&self) -> i64 {
        self.date.days_until(self.expiration)
    }

    /// Open interest of the thinner leg.
    pub fn pair_open_interest(&self) -> u64 {
        self.call_oi.min(self.put_oi)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Pairing {
    /// Sorted by (date, expiration, strike).
    pub pairs: Vec<OptionPair>,
    /// Legs with no opposite-right quote at the same strike.
    pub unpaired_legs: usize,
}

/// Merges calls and puts on common (date, expiration, strike).
pub fn pair_quotes(quotes: &[OptionQuote]) -> Result<Pairing, ParityError> {
    type Slot<'a> = (Option<&'a OptionQuote>, Option<&'a OptionQuote>);
    let mut book: BTreeMap<(TradingDate, TradingDate, u64), Slot> = BTreeMap::new();
    for q in quotes {
        // strikes are positive, so bit order is numeric order
        let slot = book
            .entry((q.date, q.expiration, q.strike.to_bits()))
            .or_default();
        match q.right {
            OptionRight::Call => slot.0 = Some(q),
            OptionRight::Put => slot.1 = Some(q),
        }
    }
    let mut out = Pairing::default();
    for slot in book.values() {
        match slot {
            (Some(c), Some(p)) => out.pairs.push(OptionPair::from_legs(c, p)?),
            _ => out.unpaired_legs += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardObservation {
    pub date: TradingDate,
    pub expiration: TradingDate,
    pub strike: f64,
    pub tau: YearFraction,
    pub rate: f64,
    /// Per ETF share.
    pub forward_etf: f64,
}

pub fn pcp_forward(
    pair: &OptionPair,
    rate: f64,
    tau: YearFraction,
) -> Result<ForwardObservation, ParityError> {
    let growth = (rate * tau.tau()).exp();
    let forward = pair.strike + growth * (pair.call_mid - pair.put_mid);
    if !(forward > 0.0) {
        return Err(ParityError::NonPositiveForward { forward });
    }
    Ok(ForwardObservation {
        date: pair.date,
        expiration: pair.expiration,
        strike: pair.strike,
        tau,
        rate,
        forward_etf: forward,
    })
}
