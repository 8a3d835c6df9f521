//! Arbitrage-consistent synthetic inputs with a known wedge.
//!
//! Option mids satisfy `C - P = e^{-r tau} (F - K)` for an ETF forward
//! `F = close (1 + etf_carry)^tau`, and futures close at
//! `spot (1 + cme_carry)^tau_f`. The pipeline should therefore recover
//! `cme_carry - (etf_carry + expense_ratio)` on every date and bucket, up to
//! floating-point error. Spreads are symmetric around the mids and do not
//! move them.

use std::fs;
use std::path::Path;

use chrono::{Datelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::config::{parse_buckets, KeyValues};
use crate::error::Error;
use crate::ingest::{
    to_csv, EtfClose, FuturesQuote, HoldingsRecord, OptionQuote, OptionRight, ReferenceRate,
    RiskFreeRate, TradingDate,
};
use crate::parity::YearFraction;
use crate::select::{default_buckets, validate_buckets, BucketSpec, FilterConfig};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("synth config: {0}")]
pub struct SynthError(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    /// Weekday trading dates to generate.
    pub n_days: usize,
    pub start_date: TradingDate,
    pub btc_spot_start: f64,
    pub spot_vol: f64,
    pub rate: f64,
    pub expense_ratio: f64,
    /// Bitcoin per share on the first date; erodes at the expense ratio.
    pub q0: f64,
    pub shares_start: f64,
    pub etf_carry_true: f64,
    pub cme_carry_true: f64,
    pub half_spread_rel: f64,
    pub strikes_per_expiry: usize,
    pub strike_step_rel: f64,
    /// Inclusive range.
    pub oi_range: (u64, u64),
    /// Time value added to both legs, as a fraction of the ETF close.
    pub cushion_rel: f64,
    /// Futures expire this many days after the matching option expiration.
    pub futures_offset_days: i64,
    pub buckets: Vec<BucketSpec>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_days: 250,
            start_date: TradingDate::from_ymd(2025, 1, 2).unwrap(),
            btc_spot_start: 95_000.0,
            spot_vol: 0.55,
            rate: 0.043,
            expense_ratio: 0.0025,
            q0: 0.000_568,
            shares_start: 880_000_000.0,
            etf_carry_true: 0.06,
            cme_carry_true: 0.0925,
            half_spread_rel: 0.02,
            strikes_per_expiry: 7,
            strike_step_rel: 0.01,
            oi_range: (150, 5_000),
            cushion_rel: 0.03,
            futures_offset_days: 0,
            buckets: default_buckets(),
        }
    }
}

impl SynthConfig {
    /// Configuration whose injected wedge is `wedge` (decimal per year),
    /// keeping the ETF carry and fee at their defaults.
    pub fn with_wedge(wedge: f64) -> Self {
        let mut cfg = SynthConfig::default();
        cfg.cme_carry_true = cfg.etf_carry_true + cfg.expense_ratio + wedge;
        cfg
    }

    pub fn injected_wedge(&self) -> f64 {
        self.cme_carry_true - (self.etf_carry_true + self.expense_ratio)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |m: &str| Err(SynthError(m.to_string()));
        let defaults = FilterConfig::default();
        if self.n_days == 0 {
            return err("n_days must be positive");
        }
        for (name, v) in [
            ("btc_spot_start", self.btc_spot_start),
            ("q0", self.q0),
            ("shares_start", self.shares_start),
            ("strike_step_rel", self.strike_step_rel),
            ("cushion_rel", self.cushion_rel),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SynthError(format!("{name} must be positive")));
            }
        }
        if !(self.spot_vol >= 0.0) || !(self.expense_ratio >= 0.0) || !self.rate.is_finite() {
            return err("spot_vol and expense_ratio must be non-negative, rate finite");
        }
        if !(self.etf_carry_true > -1.0) || !(self.cme_carry_true > -1.0) {
            return err("carries must exceed -100%");
        }
        // spread (ask - bid) / mid = 2 h must stay strictly below the filter
        if !(self.half_spread_rel >= 0.0 && 2.0 * self.half_spread_rel < defaults.max_rel_spread) {
            return err("half_spread_rel must be in [0, 0.05)");
        }
        if self.strikes_per_expiry == 0 {
            return err("strikes_per_expiry must be positive");
        }
        // the strike nearest the close is at most half a step away
        if !(self.strike_step_rel / 2.0 < defaults.max_abs_moneyness) {
            return err("strike_step_rel too wide for the moneyness filter");
        }
        if self.oi_range.0 < defaults.min_open_interest || self.oi_range.1 < self.oi_range.0 {
            return err("oi_range must start at or above the open-interest floor");
        }
        validate_buckets(&self.buckets).map_err(|e| SynthError(e.to_string()))?;
        for b in &self.buckets {
            if b.target_days < defaults.min_days || b.target_days > defaults.max_days {
                return Err(SynthError(format!(
                    "bucket `{}` target outside the tenor filter",
                    b.label
                )));
            }
            if b.target_days + self.futures_offset_days < 1 {
                return err("futures_offset_days leaves a futures contract already expired");
            }
        }
        Ok(())
    }

    pub fn from_key_values(text: &str) -> Result<Self, Error> {
        let mut kv = KeyValues::parse(text)?;
        let mut cfg = SynthConfig::default();
        macro_rules! field {
            ($($name:ident),*) => {$(
                if let Some(v) = kv.take_parsed(stringify!($name))? {
                    cfg.$name = v;
                }
            )*};
        }
        field!(
            seed,
            n_days,
            btc_spot_start,
            spot_vol,
            rate,
            expense_ratio,
            q0,
            shares_start,
            etf_carry_true,
            cme_carry_true,
            half_spread_rel,
            strikes_per_expiry,
            strike_step_rel,
            cushion_rel,
            futures_offset_days
        );
        if let Some(v) = kv.take("start_date") {
            cfg.start_date = v
                .parse()
                .map_err(|e: String| Error::Config(format!("start_date: {e}")))?;
        }
        if let Some(v) = kv.take_parsed("oi_min")? {
            cfg.oi_range.0 = v;
        }
        if let Some(v) = kv.take_parsed("oi_max")? {
            cfg.oi_range.1 = v;
        }
        if let Some(v) = kv.take("buckets") {
            cfg.buckets = parse_buckets(&v)?;
        }
        if let Some(v) = kv.take_parsed::<f64>("wedge")? {
            cfg.cme_carry_true = cfg.etf_carry_true + cfg.expense_ratio + v;
        }
        kv.finish()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub date: TradingDate,
    pub bucket: String,
    pub true_wedge_pp: f64,
}

pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const GROUND_TRUTH_HEADER: &str = "date,bucket,true_wedge_pp";

/// The six canonical files plus the ground truth, as text.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub options: String,
    pub etf_closes: String,
    pub holdings: String,
    pub futures: String,
    pub refrate: String,
    pub rates: String,
    pub ground_truth: String,
    pub truth: Vec<GroundTruth>,
}

impl SynthDataset {
    /// Writes the files under their canonical names.
    pub fn write_to(&self, dir: &Path) -> Result<(), Error> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [
            ("options.csv", &self.options),
            ("etf_close.csv", &self.etf_closes),
            ("holdings.csv", &self.holdings),
            ("futures.csv", &self.futures),
            ("refrate.csv", &self.refrate),
            ("rates.csv", &self.rates),
            (GROUND_TRUTH_FILE, &self.ground_truth),
        ] {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}

fn trading_dates(start: TradingDate, n: usize) -> Vec<TradingDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.naive().weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.add_days(1);
    }
    out
}

fn futures_code(expiration: TradingDate) -> String {
    format!("SYN{}", expiration.naive().format("%y%m%d"))
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dates = trading_dates(cfg.start_date, cfg.n_days);

    let mut options = Vec::new();
    let mut closes = Vec::new();
    let mut holdings = Vec::new();
    let mut futures = Vec::new();
    let mut refrate = Vec::new();
    let mut rates = Vec::new();
    let mut truth = Vec::new();

    let mut spot = cfg.btc_spot_start;
    let mut shares = cfg.shares_start;
    let mut prev = dates[0];
    let wedge_pp = cfg.injected_wedge() * 100.0;
    let half_steps = (cfg.strikes_per_expiry as f64 - 1.0) / 2.0;

    for &date in &dates {
        let gap = prev.days_until(date);
        if gap > 0 {
            let dt = gap as f64 / 365.0;
            let z: f64 = rng.sample(StandardNormal);
            spot *= (-0.5 * cfg.spot_vol.powi(2) * dt + cfg.spot_vol * dt.sqrt() * z).exp();
            shares = (shares * (1.0 + 0.002 * rng.random_range(-1.0..1.0))).round();
        }
        prev = date;

        let elapsed = cfg.start_date.days_until(date) as f64 / 365.0;
        let q = cfg.q0 * (1.0 - cfg.expense_ratio).powf(elapsed);
        let close = spot * q;

        closes.push(EtfClose { date, close });
        refrate.push(ReferenceRate { date, value: spot });
        rates.push(RiskFreeRate {
            date,
            rate: cfg.rate,
        });
        holdings.push(HoldingsRecord {
            date,
            btc_holdings: q * shares,
            shares_outstanding: shares,
        });

        for bucket in &cfg.buckets {
            let expiration = date.add_days(bucket.target_days);
            let tau = YearFraction::from_days(bucket.target_days).tau();
            let forward = close * (1.0 + cfg.etf_carry_true).powf(tau);
            let discount = (-cfg.rate * tau).exp();
            let cushion = cfg.cushion_rel * close;
            for j in 0..cfg.strikes_per_expiry {
                let strike = close * (1.0 + (j as f64 - half_steps) * cfg.strike_step_rel);
                let diff = discount * (forward - strike);
                let call_mid = diff.max(0.0) + cushion;
                let put_mid = (-diff).max(0.0) + cushion;
                for (right, mid) in [(OptionRight::Call, call_mid), (OptionRight::Put, put_mid)] {
                    options.push(OptionQuote {
                        date,
                        expiration,
                        strike,
                        right,
                        bid: mid * (1.0 - cfg.half_spread_rel),
                        ask: mid * (1.0 + cfg.half_spread_rel),
                        open_interest: rng.random_range(cfg.oi_range.0..=cfg.oi_range.1),
                    });
                }
            }

            let fut_exp = expiration.add_days(cfg.futures_offset_days);
            let fut_tau = YearFraction::from_days(date.days_until(fut_exp)).tau();
            futures.push(FuturesQuote {
                date,
                contract_code: futures_code(fut_exp),
                expiration: fut_exp,
                close: spot * (1.0 + cfg.cme_carry_true).powf(fut_tau),
            });
            truth.push(GroundTruth {
                date,
                bucket: bucket.label.clone(),
                true_wedge_pp: wedge_pp,
            });
        }

        // a far contract that nearest-expiry matching should never pick
        let far = date.add_days(180);
        if !futures
            .iter()
            .any(|f| f.date == date && f.expiration == far)
        {
            futures.push(FuturesQuote {
                date,
                contract_code: futures_code(far),
                expiration: far,
                close: spot * 1.2,
            });
        }
    }

    let mut ground_truth = format!("{GROUND_TRUTH_HEADER}\n");
    for t in &truth {
        ground_truth.push_str(&format!("{},{},{:.6}\n", t.date, t.bucket, t.true_wedge_pp));
    }

    Ok(SynthDataset {
        options: to_csv(&options),
        etf_closes: to_csv(&closes),
        holdings: to_csv(&holdings),
        futures: to_csv(&futures),
        refrate: to_csv(&refrate),
        rates: to_csv(&rates),
        ground_truth,
        truth,
    })
}
