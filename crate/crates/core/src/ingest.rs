//! Canonical input files.
//!
//! Six comma-delimited files with a mandatory header row and ISO dates:
//!
//! | file            | header                                               |
//! |-----------------|------------------------------------------------------|
//! | `options.csv`   | `date,expiration,strike,right,bid,ask,open_interest` |
//! | `etf_close.csv` | `date,close`                                         |
//! | `holdings.csv`  | `date,btc_holdings,shares_outstanding`               |
//! | `futures.csv`   | `date,contract_code,expiration,close`                |
//! | `refrate.csv`   | `date,value`                                         |
//! | `rates.csv`     | `date,rate`                                          |
//!
//! Every data row yields exactly one record or one error carrying the
//! 1-based line number. [`adapt_vendor_holdings`] converts the fund's own
//! holdings download into a [`HoldingsRecord`].

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{Days, NaiveDate};
use thiserror::Error;

/// Longest gap, in calendar days, a risk-free rate is carried forward.
pub const MAX_RATE_FILL_DAYS: i64 = 7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    MalformedHeader { expected: String, found: String },
    #[error("line {line}: {message}")]
    BadRow { line: u64, message: String },
    #[error("line {line}: duplicate date {date}")]
    DuplicateDate { line: u64, date: TradingDate },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: u64, key: String },
    #[error("line {line}: `{field}` must be strictly positive")]
    NonPositiveValue { line: u64, field: &'static str },
    #[error("vendor holdings file has no BTC row")]
    MissingBitcoinRow,
    #[error("vendor holdings file has no shares-outstanding line")]
    MissingSharesOutstanding,
    #[error("vendor holdings file has no as-of date line")]
    MissingAsOfDate,
    #[error("no risk-free rate on or within {MAX_RATE_FILL_DAYS} days before {date}")]
    NoUsableRate { date: TradingDate },
}

/// A U.S. trading date as labelled in the input files. No time zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TradingDate(NaiveDate);

impl TradingDate {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Self> {
        NaiveDate::from_ymd_opt(year, month, day).map(Self)
    }

    pub fn naive(self) -> NaiveDate {
        self.0
    }

    /// Signed calendar-day count from `self` to `later`.
    pub fn days_until(self, later: TradingDate) -> i64 {
        (later.0 - self.0).num_days()
    }

    pub fn add_days(self, days: i64) -> TradingDate {
        let shifted = if days >= 0 {
            self.0.checked_add_days(Days::new(days as u64))
        } else {
            self.0.checked_sub_days(Days::new(days.unsigned_abs()))
        };
        TradingDate(shifted.expect("date arithmetic out of range"))
    }
}

impl From<NaiveDate> for TradingDate {
    fn from(d: NaiveDate) -> Self {
        Self(d)
    }
}

impl FromStr for TradingDate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // chrono accepts unpadded fields; the canonical form is strictly YYYY-MM-DD.
        let b = s.as_bytes();
        if b.len() != 10 || b[4] != b'-' || b[7] != b'-' {
            return Err(format!("invalid date `{s}` (expected YYYY-MM-DD)"));
        }
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map(Self)
            .map_err(|e| format!("invalid date `{s}`: {e}"))
    }
}

impl fmt::Display for TradingDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OptionRight {
    Call,
    Put,
}

impl OptionRight {
    pub fn code(self) -> &'static str {
        match self {
            OptionRight::Call => "C",
            OptionRight::Put => "P",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptionQuote {
    pub date: TradingDate,
    pub expiration: TradingDate,
    pub strike: f64,
    pub right: OptionRight,
    pub bid: f64,
    pub ask: f64,
    pub open_interest: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EtfClose {
    pub date: TradingDate,
    pub close: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldingsRecord {
    pub date: TradingDate,
    pub btc_holdings: f64,
    pub shares_outstanding: f64,
}

impl HoldingsRecord {
    /// Bitcoin represented by one share.
    pub fn btc_per_share(&self) -> f64 {
        self.btc_holdings / self.shares_outstanding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FuturesQuote {
    pub date: TradingDate,
    pub contract_code: String,
    pub expiration: TradingDate,
    pub close: f64,
}

/// Bitcoin reference rate print (U.S. close).
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRate {
    pub date: TradingDate,
    pub value: f64,
}

/// Annualized continuously-compounded decimal rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFreeRate {
    pub date: TradingDate,
    pub rate: f64,
}

/// Row-level failure, located by the caller.
#[derive(Debug)]
pub enum RowError {
    Bad(String),
    NonPositive(&'static str),
}

impl From<String> for RowError {
    fn from(s: String) -> Self {
        RowError::Bad(s)
    }
}

/// A record with a canonical one-line CSV form.
pub trait CsvRecord: Sized {
    const HEADER: &'static [&'static str];
    type Key: Ord;

    fn to_fields(&self) -> Vec<String>;
    fn key(&self) -> Self::Key;
    fn duplicate_error(&self, line: u64) -> IngestError;

    fn from_fields(fields: &[&str]) -> Result<Self, RowError>;
}

fn date_field(s: &str, name: &str) -> Result<TradingDate, String> {
    s.parse().map_err(|e| format!("{name}: {e}"))
}

fn real_field(s: &str, name: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("{name}: `{s}` is not a finite number")),
    }
}

fn positive(v: f64, name: &'static str) -> Result<f64, RowError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(RowError::NonPositive(name))
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v}")
}

impl CsvRecord for OptionQuote {
    const HEADER: &'static [&'static str] = &[
        "date",
        "expiration",
        "strike",
        "right",
        "bid",
        "ask",
        "open_interest",
    ];
    type Key = (TradingDate, TradingDate, u64, OptionRight);

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.date.to_string(),
            self.expiration.to_string(),
            fmt_real(self.strike),
            self.right.code().to_string(),
            fmt_real(self.bid),
            fmt_real(self.ask),
            self.open_interest.to_string(),
        ]
    }

    fn key(&self) -> Self::Key {
        // strikes are positive, so bit order is numeric order
        (
            self.date,
            self.expiration,
            self.strike.to_bits(),
            self.right,
        )
    }

    fn duplicate_error(&self, line: u64) -> IngestError {
        IngestError::DuplicateKey {
            line,
            key: format!(
                "{},{},{},{}",
                self.date,
                self.expiration,
                self.strike,
                self.right.code()
            ),
        }
    }

    fn from_fields(f: &[&str]) -> Result<Self, RowError> {
        let date = date_field(f[0], "date")?;
        let expiration = date_field(f[1], "expiration")?;
        if expiration < date {
            return Err(RowError::Bad(format!(
                "expiration {expiration} precedes date {date}"
            )));
        }
        let strike = real_field(f[2], "strike")?;
        if strike <= 0.0 {
            return Err(RowError::Bad(format!("strike {strike} is not positive")));
        }
        let right = match f[3] {
            "C" => OptionRight::Call,
            "P" => OptionRight::Put,
            other => return Err(RowError::Bad(format!("invalid right code `{other}`"))),
        };
        let bid = real_field(f[4], "bid")?;
        let ask = real_field(f[5], "ask")?;
        if bid < 0.0 || ask < 0.0 {
            return Err(RowError::Bad(format!(
                "negative price (bid {bid}, ask {ask})"
            )));
        }
        if ask < bid {
            return Err(RowError::Bad(format!("ask {ask} below bid {bid}")));
        }
        let open_interest = f[6]
            .parse::<u64>()
            .map_err(|_| format!("open_interest: `{}` is not a non-negative integer", f[6]))?;
        Ok(OptionQuote {
            date,
            expiration,
            strike,
            right,
            bid,
            ask,
            open_interest,
        })
    }
}

impl CsvRecord for EtfClose {
    const HEADER: &'static [&'static str] = &["date", "close"];
    type Key = TradingDate;

    fn to_fields(&self) -> Vec<String> {
        vec![self.date.to_string(), fmt_real(self.close)]
    }

    fn key(&self) -> TradingDate {
        self.date
    }

    fn duplicate_error(&self, line: u64) -> IngestError {
        IngestError::DuplicateDate {
            line,
            date: self.date,
        }
    }

    fn from_fields(f: &[&str]) -> Result<Self, RowError> {
        Ok(EtfClose {
            date: date_field(f[0], "date")?,
            close: positive(real_field(f[1], "close")?, "close")?,
        })
    }
}

impl CsvRecord for HoldingsRecord {
    const HEADER: &'static [&'static str] = &["date", "btc_holdings", "shares_outstanding"];
    type Key = TradingDate;

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.date.to_string(),
            fmt_real(self.btc_holdings),
            fmt_real(self.shares_outstanding),
        ]
    }

    fn key(&self) -> TradingDate {
        self.date
    }

    fn duplicate_error(&self, line: u64) -> IngestError {
        IngestError::DuplicateDate {
            line,
            date: self.date,
        }
    }

    fn from_fields(f: &[&str]) -> Result<Self, RowError> {
        Ok(HoldingsRecord {
            date: date_field(f[0], "date")?,
            btc_holdings: positive(real_field(f[1], "btc_holdings")?, "btc_holdings")?,
            shares_outstanding: positive(
                real_field(f[2], "shares_outstanding")?,
                "shares_outstanding",
            )?,
        })
    }
}

impl CsvRecord for FuturesQuote {
    const HEADER: &'static [&'static str] = &["date", "contract_code", "expiration", "close"];
    type Key = (TradingDate, String);

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.date.to_string(),
            self.contract_code.clone(),
            self.expiration.to_string(),
            fmt_real(self.close),
        ]
    }

    fn key(&self) -> Self::Key {
        (self.date, self.contract_code.clone())
    }

    fn duplicate_error(&self, line: u64) -> IngestError {
        IngestError::DuplicateKey {
            line,
            key: format!("{},{}", self.date, self.contract_code),
        }
    }

    fn from_fields(f: &[&str]) -> Result<Self, RowError> {
        let date = date_field(f[0], "date")?;
        if f[1].is_empty() {
            return Err(RowError::Bad("empty contract_code".into()));
        }
        let expiration = date_field(f[2], "expiration")?;
        if expiration < date {
            return Err(RowError::Bad(format!(
                "expiration {expiration} precedes date {date}"
            )));
        }
        Ok(FuturesQuote {
            date,
            contract_code: f[1].to_string(),
            expiration,
            close: positive(real_field(f[3], "close")?, "close")?,
        })
    }
}

impl CsvRecord for ReferenceRate {
    const HEADER: &'static [&'static str] = &["date", "value"];
    type Key = TradingDate;

    fn to_fields(&self) -> Vec<String> {
        vec![self.date.to_string(), fmt_real(self.value)]
    }

    fn key(&self) -> TradingDate {
        self.date
    }

    fn duplicate_error(&self, line: u64) -> IngestError {
        IngestError::DuplicateDate {
            line,
            date: self.date,
        }
    }

    fn from_fields(f: &[&str]) -> Result<Self, RowError> {
        Ok(ReferenceRate {
            date: date_field(f[0], "date")?,
            value: positive(real_field(f[1], "value")?, "value")?,
        })
    }
}

impl CsvRecord for RiskFreeRate {
    const HEADER: &'static [&'static str] = &["date", "rate"];
    type Key = TradingDate;

    fn to_fields(&self) -> Vec<String> {
        vec![self.date.to_string(), fmt_real(self.rate)]
    }

    fn key(&self) -> TradingDate {
        self.date
    }

    fn duplicate_error(&self, line: u64) -> IngestError {
        IngestError::DuplicateDate {
            line,
            date: self.date,
        }
    }

    fn from_fields(f: &[&str]) -> Result<Self, RowError> {
        Ok(RiskFreeRate {
            date: date_field(f[0], "date")?,
            rate: real_field(f[1], "rate")?,
        })
    }
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    IngestError::BadRow {
        line,
        message: e.to_string(),
    }
}

/// Parses any canonical file; rows come back in file order.
pub fn parse_records<T: CsvRecord>(text: &str) -> Result<Vec<T>, IngestError> {
    let expected = T::HEADER.join(",");
    let mut rows = csv_reader(text).into_records();

    let header = match rows.next() {
        Some(r) => r.map_err(csv_error)?,
        None => {
            return Err(IngestError::MalformedHeader {
                expected,
                found: String::new(),
            })
        }
    };
    let found: Vec<&str> = header.iter().collect();
    // tolerate a UTF-8 byte-order mark on the first column
    let first = found.first().map(|s| s.trim_start_matches('\u{feff}'));
    if found.len() != T::HEADER.len()
        || first != T::HEADER.first().copied()
        || found[1..] != T::HEADER[1..]
    {
        return Err(IngestError::MalformedHeader {
            expected,
            found: found.join(","),
        });
    }

    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for row in rows {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let fields: Vec<&str> = row.iter().collect();
        if fields.len() != T::HEADER.len() {
            return Err(IngestError::BadRow {
                line,
                message: format!(
                    "expected {} fields, found {}",
                    T::HEADER.len(),
                    fields.len()
                ),
            });
        }
        let rec = T::from_fields(&fields).map_err(|e| match e {
            RowError::Bad(message) => IngestError::BadRow { line, message },
            RowError::NonPositive(field) => IngestError::NonPositiveValue { line, field },
        })?;
        if !seen.insert(rec.key()) {
            return Err(rec.duplicate_error(line));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Serializes records to the canonical form accepted by [`parse_records`].
pub fn to_csv<T: CsvRecord>(records: &[T]) -> String {
    let mut out = T::HEADER.join(",");
    out.push('\n');
    for r in records {
        out.push_str(&r.to_fields().join(","));
        out.push('\n');
    }
    out
}

pub fn parse_option_quotes(text: &str) -> Result<Vec<OptionQuote>, IngestError> {
    parse_records(text)
}

pub fn parse_etf_closes(text: &str) -> Result<Vec<EtfClose>, IngestError> {
    parse_records(text)
}

pub fn parse_holdings(text: &str) -> Result<Vec<HoldingsRecord>, IngestError> {
    parse_records(text)
}

pub fn parse_futures(text: &str) -> Result<Vec<FuturesQuote>, IngestError> {
    parse_records(text)
}

pub fn parse_refrate(text: &str) -> Result<Vec<ReferenceRate>, IngestError> {
    parse_records(text)
}

pub fn parse_rates(text: &str) -> Result<Vec<RiskFreeRate>, IngestError> {
    parse_records(text)
}

/// A rate matched to a date, with the number of days it was carried forward.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedRate {
    pub rate: RiskFreeRate,
    pub fill_days: i64,
}

/// Latest rate on or before `date`, at most [`MAX_RATE_FILL_DAYS`] old.
/// `rates` must be sorted by date.
pub fn align_rate(date: TradingDate, rates: &[RiskFreeRate]) -> Result<AlignedRate, IngestError> {
    let idx = rates.partition_point(|r| r.date <= date);
    let prior = idx
        .checked_sub(1)
        .map(|i| &rates[i])
        .ok_or(IngestError::NoUsableRate { date })?;
    let fill_days = prior.date.days_until(date);
    if fill_days > MAX_RATE_FILL_DAYS {
        return Err(IngestError::NoUsableRate { date });
    }
    Ok(AlignedRate {
        rate: prior.clone(),
        fill_days,
    })
}

const VENDOR_DATE_FORMATS: &[&str] =
    &["%Y-%m-%d", "%b %d, %Y", "%B %d, %Y", "%m/%d/%Y", "%d-%b-%Y"];

fn vendor_date(s: &str) -> Option<TradingDate> {
    VENDOR_DATE_FORMATS
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(s.trim(), fmt).ok())
        .map(TradingDate)
}

/// Parses a vendor numeric cell: surrounding quotes, whitespace and
/// thousands separators are ignored.
pub fn vendor_number(s: &str) -> Option<f64> {
    let cleaned: String = s
        .chars()
        .filter(|c| !matches!(c, ',' | '"' | '\'' | ' ' | '\u{a0}'))
        .collect();
    cleaned.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// Reads the fund's holdings download: a key/value preamble followed by a
/// holdings table. Only the as-of date, the shares-outstanding line and the
/// quantity on the `BTC` row are used.
pub fn adapt_vendor_holdings(text: &str) -> Result<HoldingsRecord, IngestError> {
    let mut as_of = None;
    let mut shares = None;
    let mut btc = None;
    // (ticker column, quantity column) once the table header is seen
    let mut table: Option<(usize, usize)> = None;

    for row in csv_reader(text).into_records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let cells: Vec<&str> = row.iter().collect();
        let Some(first) = cells.first() else { continue };
        let key = first.trim_start_matches('\u{feff}').to_ascii_lowercase();

        if let Some((ticker_col, qty_col)) = table {
            let ticker = cells.get(ticker_col).map(|s| s.trim().to_ascii_uppercase());
            if ticker.as_deref() == Some("BTC") && btc.is_none() {
                let raw = cells.get(qty_col).copied().unwrap_or("");
                let qty = vendor_number(raw).ok_or_else(|| IngestError::BadRow {
                    line,
                    message: format!("unreadable BTC quantity `{raw}`"),
                })?;
                if qty <= 0.0 {
                    return Err(IngestError::NonPositiveValue {
                        line,
                        field: "btc_holdings",
                    });
                }
                btc = Some(qty);
            }
            continue;
        }

        let lowered: Vec<String> = cells.iter().map(|c| c.to_ascii_lowercase()).collect();
        if let Some(ticker_col) = lowered.iter().position(|c| c == "ticker") {
            let qty_col = lowered
                .iter()
                .position(|c| c == "quantity")
                .or_else(|| lowered.iter().position(|c| c == "shares"));
            if let Some(qty_col) = qty_col {
                table = Some((ticker_col, qty_col));
                continue;
            }
        }

        let value = cells.get(1).copied().unwrap_or("");
        if key.starts_with("shares outstanding") {
            let v = vendor_number(value).ok_or_else(|| IngestError::BadRow {
                line,
                message: format!("unreadable shares outstanding `{value}`"),
            })?;
            if v <= 0.0 {
                return Err(IngestError::NonPositiveValue {
                    line,
                    field: "shares_outstanding",
                });
            }
            shares = Some(v);
        } else if key.contains("as of") {
            as_of = Some(vendor_date(value).ok_or_else(|| IngestError::BadRow {
                line,
                message: format!("unreadable as-of date `{value}`"),
            })?);
        }
    }

    let date = as_of.ok_or(IngestError::MissingAsOfDate)?;
    let shares_outstanding = shares.ok_or(IngestError::MissingSharesOutstanding)?;
    let btc_holdings = btc.ok_or(IngestError::MissingBitcoinRow)?;
    Ok(HoldingsRecord {
        date,
        btc_holdings,
        shares_outstanding,
    })
}

fn group_thousands(v: f64) -> String {
    let s = fmt_real(v);
    let (sign, body) = s.strip_prefix('-').map_or(("", s.as_str()), |b| ("-", b));
    let (int, frac) = body
        .split_once('.')
        .map_or((body, None), |(i, f)| (i, Some(f)));
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    match frac {
        Some(f) => format!("{sign}{grouped}.{f}"),
        None => format!("{sign}{grouped}"),
    }
}

/// Renders a record in the vendor download layout.
pub fn render_vendor_holdings(record: &HoldingsRecord) -> String {
    let as_of = record.date.naive().format("%b %d, %Y");
    let mut out = String::new();
    out.push_str("Bitcoin Trust ETF\n");
    out.push_str(&format!("Fund Holdings as of,\"{as_of}\"\n"));
    out.push_str("Inception Date,\"Jan 11, 2024\"\n");
    out.push_str(&format!(
        "Shares Outstanding,\"{}\"\n",
        group_thousands(record.shares_outstanding)
    ));
    out.push_str("Stock,\"-\"\nBond,\"-\"\nCash,\"-\"\nOther,\"-\"\n \n");
    out.push_str(
        "Ticker,Name,Sector,Asset Class,Market Value,Weight (%),Notional Value,Quantity,Price,Location,Exchange,Currency,FX Rate,Market Currency,Accrual Date\n",
    );
    out.push_str(&format!(
        "\"BTC\",\"BITCOIN\",\"-\",\"Cryptocurrency\",\"-\",\"99.99\",\"-\",\"{}\",\"-\",\"-\",\"-\",\"USD\",\"1.00\",\"USD\",\"-\"\n",
        group_thousands(record.btc_holdings)
    ));
    out.push_str(
        "\"USD\",\"USD CASH\",\"Cash and/or Derivatives\",\"Cash\",\"1,234.56\",\"0.01\",\"1,234.56\",\"1,234.56\",\"100.00\",\"United States\",\"-\",\"USD\",\"1.00\",\"USD\",\"-\"\n",
    );
    out.push_str(" \n\"The content contained herein is for informational purposes only.\"\n");
    out
}
