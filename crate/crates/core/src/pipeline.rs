//! End-to-end run: parse inputs, select pairs per date, compute both carry
//! legs, summarize, and write the output files.
//!
//! Dates are processed independently (in parallel when enabled) and the
//! results are merged in date order, so outputs are identical across
//! execution modes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use log::{debug, info, warn};

use crate::carry::{
    cme_carry, etf_carry, holdings_ratio, match_futures, CarryError, CarryObservation, ExpenseRatio,
};
use crate::config::{InputPaths, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::{
    align_rate, parse_records, CsvRecord, EtfClose, FuturesQuote, HoldingsRecord, OptionQuote,
    ReferenceRate, RiskFreeRate, TradingDate,
};
use crate::par::{self, Execution};
use crate::parity::{pair_quotes, pcp_forward, year_fraction, OptionPair};
use crate::select::{select_day, BucketSpec, FilterConfig, RejectReason, TieBreak};
use crate::stats::{bucket_summaries, BucketSummaries, SummaryRow};

pub const WEDGE_TIMESERIES_FILE: &str = "wedge_timeseries.csv";
pub const CARRY_COMPARISON_FILE: &str = "carry_comparison.csv";
pub const SUMMARY_STATS_FILE: &str = "summary_stats.csv";
pub const WEDGE_BY_BUCKET_FILE: &str = "wedge_by_bucket.csv";
pub const RUN_REPORT_FILE: &str = "run_report.txt";

pub const WEDGE_TIMESERIES_HEADER: &str = "date,bucket,strike,option_expiration,option_tau,futures_code,futures_expiration,etf_carry_raw_pp,etf_carry_adj_pp,cme_carry_pp,wedge_pp";
pub const CARRY_COMPARISON_HEADER: &str = "date,bucket,cme_carry_pp,etf_carry_adj_pp";
pub const SUMMARY_STATS_HEADER: &str = "observations,mean_pp,sd_pp,p05_pp,median_pp,p95_pp";
pub const WEDGE_BY_BUCKET_HEADER: &str = "maturity_bucket,observations,mean_pp,median_pp,sd_pp";

/// All six parsed inputs.
#[derive(Debug, Clone, Default)]
pub struct Inputs {
    pub quotes: Vec<OptionQuote>,
    pub etf_closes: Vec<EtfClose>,
    pub holdings: Vec<HoldingsRecord>,
    pub futures: Vec<FuturesQuote>,
    pub refrates: Vec<ReferenceRate>,
    pub rates: Vec<RiskFreeRate>,
}

fn read_file<T: CsvRecord>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_records(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })
}

impl Inputs {
    pub fn load(paths: &InputPaths) -> Result<Self> {
        Ok(Inputs {
            quotes: read_file(&paths.options)?,
            etf_closes: read_file(&paths.etf_closes)?,
            holdings: read_file(&paths.holdings)?,
            futures: read_file(&paths.futures)?,
            refrates: read_file(&paths.refrate)?,
            rates: read_file(&paths.rates)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub filter: FilterConfig,
    pub buckets: Vec<BucketSpec>,
    pub expense_ratio: ExpenseRatio,
    pub strict: bool,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            filter: FilterConfig::default(),
            buckets: crate::select::default_buckets(),
            expense_ratio: ExpenseRatio::default(),
            strict: false,
        }
    }
}

impl From<&RunConfig> for Settings {
    fn from(c: &RunConfig) -> Self {
        Settings {
            filter: c.filter.clone(),
            buckets: c.buckets.clone(),
            expense_ratio: c.expense_ratio,
            strict: c.strict,
        }
    }
}

/// Why a date or a date-bucket produced no observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DropReason {
    MissingEtfClose,
    MissingHoldings,
    NoUsableRate,
    NonPositiveForward,
    NoMatchableContract,
    MissingReference,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DropReason::MissingEtfClose => "missing_etf_close",
            DropReason::MissingHoldings => "missing_holdings",
            DropReason::NoUsableRate => "no_usable_rate",
            DropReason::NonPositiveForward => "non_positive_forward",
            DropReason::NoMatchableContract => "no_matchable_contract",
            DropReason::MissingReference => "missing_reference",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Gap {
    date: TradingDate,
    bucket: Option<String>,
    reason: DropReason,
    detail: String,
}

#[derive(Debug, Clone, Default)]
struct DayOutcome {
    pairs: usize,
    passed: usize,
    rejected: BTreeMap<RejectReason, usize>,
    unbucketed: usize,
    selections: usize,
    tie_breaks: BTreeMap<TieBreak, usize>,
    rate_fill_days: Option<i64>,
    observations: Vec<CarryObservation>,
    date_gap: Option<Gap>,
    bucket_gaps: Vec<Gap>,
}

/// Counts reconciling every input row with every emitted row.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub rows_options: usize,
    pub rows_etf_closes: usize,
    pub rows_holdings: usize,
    pub rows_futures: usize,
    pub rows_refrate: usize,
    pub rows_rates: usize,
    pub option_dates: usize,
    pub pairs_formed: usize,
    pub unpaired_legs: usize,
    /// Pairs on dates with no ETF close; never filtered.
    pub pairs_without_close: usize,
    pub pairs_rejected: BTreeMap<RejectReason, usize>,
    pub pairs_passing_filters: usize,
    pub pairs_outside_buckets: usize,
    pub selections: usize,
    pub selection_tie_breaks: BTreeMap<TieBreak, usize>,
    /// Selections lost because their whole date was dropped.
    pub selections_on_dropped_dates: usize,
    pub dates_without_selection: usize,
    pub dates_dropped: BTreeMap<DropReason, usize>,
    pub date_buckets_dropped: BTreeMap<DropReason, usize>,
    pub rate_forward_filled_dates: usize,
    pub max_rate_fill_days: i64,
    pub observations: usize,
    pub observations_by_bucket: Vec<(String, usize)>,
    pub empty_buckets: Vec<String>,
    pub single_observation_groups: Vec<String>,
}

impl RunReport {
    /// `selections` split into emitted rows and the two drop paths.
    pub fn reconciles(&self) -> bool {
        let bucket_drops: usize = self.date_buckets_dropped.values().sum();
        let rejected: usize = self.pairs_rejected.values().sum();
        let by_bucket: usize = self.observations_by_bucket.iter().map(|(_, n)| n).sum();
        self.selections == self.observations + bucket_drops + self.selections_on_dropped_dates
            && self.pairs_formed == self.pairs_passing_filters + rejected + self.pairs_without_close
            && by_bucket == self.observations
            && self.observations <= self.selections
            && self.selections <= self.pairs_passing_filters
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        line("rows_options", self.rows_options.to_string());
        line("rows_etf_closes", self.rows_etf_closes.to_string());
        line("rows_holdings", self.rows_holdings.to_string());
        line("rows_futures", self.rows_futures.to_string());
        line("rows_refrate", self.rows_refrate.to_string());
        line("rows_rates", self.rows_rates.to_string());
        line("option_dates", self.option_dates.to_string());
        line("pairs_formed", self.pairs_formed.to_string());
        line("unpaired_legs", self.unpaired_legs.to_string());
        line(
            "pairs_without_etf_close",
            self.pairs_without_close.to_string(),
        );
        for r in [
            RejectReason::Tenor,
            RejectReason::Moneyness,
            RejectReason::Spread,
            RejectReason::OpenInterest,
        ] {
            line(
                &format!("pairs_rejected.{r}"),
                self.pairs_rejected
                    .get(&r)
                    .copied()
                    .unwrap_or(0)
                    .to_string(),
            );
        }
        line(
            "pairs_passing_filters",
            self.pairs_passing_filters.to_string(),
        );
        line(
            "pairs_outside_buckets",
            self.pairs_outside_buckets.to_string(),
        );
        line("selections", self.selections.to_string());
        for (t, n) in &self.selection_tie_breaks {
            line(
                &format!("selection_tie_break.{}", tie_break_name(*t)),
                n.to_string(),
            );
        }
        line(
            "selections_on_dropped_dates",
            self.selections_on_dropped_dates.to_string(),
        );
        line(
            "dates_without_selection",
            self.dates_without_selection.to_string(),
        );
        for (r, n) in &self.dates_dropped {
            line(&format!("dates_dropped.{r}"), n.to_string());
        }
        for (r, n) in &self.date_buckets_dropped {
            line(&format!("date_buckets_dropped.{r}"), n.to_string());
        }
        line(
            "rate_forward_filled_dates",
            self.rate_forward_filled_dates.to_string(),
        );
        line("max_rate_fill_days", self.max_rate_fill_days.to_string());
        line("observations", self.observations.to_string());
        for (b, n) in &self.observations_by_bucket {
            line(&format!("observations.{b}"), n.to_string());
        }
        line("empty_buckets", self.empty_buckets.join(","));
        line(
            "single_observation_groups",
            self.single_observation_groups.join(","),
        );
        line("reconciles", self.reconciles().to_string());
        s
    }
}

fn tie_break_name(t: TieBreak) -> &'static str {
    match t {
        TieBreak::SingleCandidate => "single_candidate",
        TieBreak::Moneyness => "moneyness",
        TieBreak::OpenInterest => "open_interest",
        TieBreak::Spread => "spread",
        TieBreak::Strike => "strike",
    }
}

/// Observations sorted by (date, bucket order) with their report.
#[derive(Debug, Clone)]
pub struct Computation {
    pub observations: Vec<CarryObservation>,
    pub summaries: BucketSummaries,
    pub report: RunReport,
}

struct Lookups<'a> {
    closes: BTreeMap<TradingDate, f64>,
    holdings: BTreeMap<TradingDate, &'a HoldingsRecord>,
    refrates: BTreeMap<TradingDate, &'a ReferenceRate>,
    futures: BTreeMap<TradingDate, Vec<FuturesQuote>>,
    rates: Vec<RiskFreeRate>,
}

impl<'a> Lookups<'a> {
    fn new(inputs: &'a Inputs) -> Self {
        let mut futures: BTreeMap<TradingDate, Vec<FuturesQuote>> = BTreeMap::new();
        for f in &inputs.futures {
            futures.entry(f.date).or_default().push(f.clone());
        }
        let mut rates = inputs.rates.clone();
        rates.sort_by_key(|r| r.date);
        Lookups {
            closes: inputs
                .etf_closes
                .iter()
                .map(|c| (c.date, c.close))
                .collect(),
            holdings: inputs.holdings.iter().map(|h| (h.date, h)).collect(),
            refrates: inputs.refrates.iter().map(|r| (r.date, r)).collect(),
            futures,
            rates,
        }
    }
}

fn process_day(
    date: TradingDate,
    pairs: &[OptionPair],
    look: &Lookups<'_>,
    settings: &Settings,
) -> DayOutcome {
    let mut out = DayOutcome {
        pairs: pairs.len(),
        ..Default::default()
    };
    let gap = |reason, detail: String| Gap {
        date,
        bucket: None,
        reason,
        detail,
    };

    let Some(&close) = look.closes.get(&date) else {
        out.date_gap = Some(gap(DropReason::MissingEtfClose, "no ETF close".into()));
        return out;
    };

    let day = select_day(date, pairs, close, &settings.filter, &settings.buckets);
    out.passed = day.passed;
    out.rejected = day.rejected;
    out.unbucketed = day.unbucketed;
    out.selections = day.selected.len();
    for s in &day.selected {
        *out.tie_breaks.entry(s.diagnostics.tie_break).or_default() += 1;
    }
    if day.selected.is_empty() {
        return out;
    }

    let Some(holdings) = look.holdings.get(&date) else {
        out.date_gap = Some(gap(
            DropReason::MissingHoldings,
            "no holdings record".into(),
        ));
        return out;
    };
    let q = holdings_ratio(holdings);
    let rate = match align_rate(date, &look.rates) {
        Ok(r) => r,
        Err(e) => {
            out.date_gap = Some(gap(DropReason::NoUsableRate, e.to_string()));
            return out;
        }
    };
    out.rate_fill_days = Some(rate.fill_days);

    let no_futures = Vec::new();
    let futures = look.futures.get(&date).unwrap_or(&no_futures);
    let refrate = look.refrates.get(&date).copied();

    for sel in &day.selected {
        let bucket_gap = |reason, detail: String| Gap {
            date,
            bucket: Some(sel.bucket.clone()),
            reason,
            detail,
        };
        let pair = &sel.pair;
        let tau = year_fraction(date, pair.expiration).expect("filtered tenor is non-negative");
        let fwd = match pcp_forward(pair, rate.rate.rate, tau) {
            Ok(f) => f,
            Err(e) => {
                out.bucket_gaps
                    .push(bucket_gap(DropReason::NonPositiveForward, e.to_string()));
                continue;
            }
        };
        let fut = match match_futures(pair.expiration, date, futures) {
            Ok(f) => f,
            Err(e) => {
                out.bucket_gaps
                    .push(bucket_gap(DropReason::NoMatchableContract, e.to_string()));
                continue;
            }
        };
        let cme = match cme_carry(fut, refrate, date) {
            Ok(c) => c,
            Err(e @ CarryError::MissingReference { .. }) => {
                out.bucket_gaps
                    .push(bucket_gap(DropReason::MissingReference, e.to_string()));
                continue;
            }
            Err(e) => unreachable!("futures carry on a matched contract: {e}"),
        };
        let etf = etf_carry(&fwd, close, settings.expense_ratio)
            .expect("filtered tenor is at least one day");
        out.observations
            .push(CarryObservation::assemble(sel, &fwd, q, etf, fut, cme));
    }
    out
}

/// Runs selection and carry computation over every option date.
pub fn compute(inputs: &Inputs, settings: &Settings, exec: Execution) -> Result<Computation> {
    let pairing = pair_quotes(&inputs.quotes).map_err(|e| Error::Config(e.to_string()))?;
    let look = Lookups::new(inputs);

    let days: Vec<&[OptionPair]> = pairing.pairs.chunk_by(|a, b| a.date == b.date).collect();
    let outcomes = par::map(exec, &days, |chunk| {
        process_day(chunk[0].date, chunk, &look, settings)
    });

    let mut report = RunReport {
        rows_options: inputs.quotes.len(),
        rows_etf_closes: inputs.etf_closes.len(),
        rows_holdings: inputs.holdings.len(),
        rows_futures: inputs.futures.len(),
        rows_refrate: inputs.refrates.len(),
        rows_rates: inputs.rates.len(),
        option_dates: days.len(),
        pairs_formed: pairing.pairs.len(),
        unpaired_legs: pairing.unpaired_legs,
        ..Default::default()
    };

    let mut observations = Vec::new();
    for day in outcomes {
        let gaps = day.date_gap.iter().chain(&day.bucket_gaps);
        for g in gaps.clone() {
            debug!("dropping {} {:?}: {}", g.date, g.bucket, g.detail);
        }
        if settings.strict {
            if let Some(g) = gaps.clone().next() {
                return Err(Error::DataGap {
                    date: g.date,
                    bucket: g.bucket.clone(),
                    reason: g.detail.clone(),
                });
            }
        }
        if day.date_gap.as_ref().map(|g| g.reason) == Some(DropReason::MissingEtfClose) {
            report.pairs_without_close += day.pairs;
        }
        report.pairs_passing_filters += day.passed;
        for (r, n) in day.rejected {
            *report.pairs_rejected.entry(r).or_default() += n;
        }
        report.pairs_outside_buckets += day.unbucketed;
        report.selections += day.selections;
        for (t, n) in day.tie_breaks {
            *report.selection_tie_breaks.entry(t).or_default() += n;
        }
        if let Some(g) = &day.date_gap {
            *report.dates_dropped.entry(g.reason).or_default() += 1;
            report.selections_on_dropped_dates += day.selections;
        } else if day.selections == 0 {
            report.dates_without_selection += 1;
        }
        for g in &day.bucket_gaps {
            *report.date_buckets_dropped.entry(g.reason).or_default() += 1;
        }
        if let Some(fill) = day.rate_fill_days {
            if fill > 0 {
                report.rate_forward_filled_dates += 1;
            }
            report.max_rate_fill_days = report.max_rate_fill_days.max(fill);
        }
        observations.extend(day.observations);
    }

    // per-day results are already in date order and bucket order within a day
    report.observations = observations.len();
    report.observations_by_bucket = settings
        .buckets
        .iter()
        .map(|b| {
            let n = observations.iter().filter(|o| o.bucket == b.label).count();
            (b.label.clone(), n)
        })
        .collect();

    let summaries = bucket_summaries(&observations, &settings.buckets);
    report.empty_buckets = summaries
        .empty_groups
        .iter()
        .filter(|g| g.as_str() != crate::stats::OVERALL_GROUP)
        .cloned()
        .collect();
    report.single_observation_groups = summaries
        .rows
        .iter()
        .filter(|r| !r.sd_defined)
        .map(|r| r.group.clone())
        .collect();

    Ok(Computation {
        observations,
        summaries,
        report,
    })
}

/// Fixed-precision decimal with negative zero folded to zero.
fn fixed(v: f64, decimals: usize) -> String {
    let s = format!("{v:.decimals$}");
    if s.starts_with('-') && s[1..].bytes().all(|b| b == b'0' || b == b'.') {
        s[1..].to_string()
    } else {
        s
    }
}

fn pp(v: f64, decimals: usize) -> String {
    fixed(v * 100.0, decimals)
}

pub fn render_wedge_timeseries(observations: &[CarryObservation]) -> String {
    let mut s = format!("{WEDGE_TIMESERIES_HEADER}\n");
    for o in observations {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            o.date,
            o.bucket,
            o.strike,
            o.option_expiration,
            fixed(o.option_tau, 6),
            o.futures_code,
            o.futures_expiration,
            pp(o.etf_carry_raw, 6),
            pp(o.etf_carry_adj, 6),
            pp(o.cme_carry, 6),
            pp(o.wedge, 6),
        );
    }
    s
}

pub fn render_carry_comparison(observations: &[CarryObservation]) -> String {
    let mut s = format!("{CARRY_COMPARISON_HEADER}\n");
    for o in observations {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            o.date,
            o.bucket,
            pp(o.cme_carry, 6),
            pp(o.etf_carry_adj, 6)
        );
    }
    s
}

/// One row: the overall wedge summary.
pub fn render_summary_stats(rows: &[SummaryRow]) -> String {
    let mut s = format!("{SUMMARY_STATS_HEADER}\n");
    for r in rows
        .iter()
        .filter(|r| r.group == crate::stats::OVERALL_GROUP)
    {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.n,
            fixed(r.mean, 3),
            fixed(r.sd, 3),
            fixed(r.p05, 3),
            fixed(r.median, 3),
            fixed(r.p95, 3)
        );
    }
    s
}

/// One row per non-empty bucket.
pub fn render_wedge_by_bucket(rows: &[SummaryRow]) -> String {
    let mut s = format!("{WEDGE_BY_BUCKET_HEADER}\n");
    for r in rows
        .iter()
        .filter(|r| r.group != crate::stats::OVERALL_GROUP)
    {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            r.group,
            r.n,
            fixed(r.mean, 3),
            fixed(r.median, 3),
            fixed(r.sd, 3)
        );
    }
    s
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub computation: Computation,
    pub files: Vec<PathBuf>,
}

pub fn write_outputs(dir: &Path, c: &Computation) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (
            WEDGE_TIMESERIES_FILE,
            render_wedge_timeseries(&c.observations),
        ),
        (
            CARRY_COMPARISON_FILE,
            render_carry_comparison(&c.observations),
        ),
        (SUMMARY_STATS_FILE, render_summary_stats(&c.summaries.rows)),
        (
            WEDGE_BY_BUCKET_FILE,
            render_wedge_by_bucket(&c.summaries.rows),
        ),
        (RUN_REPORT_FILE, c.report.render()),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Full run. Outputs are written even when no observation survives; strict
/// mode then reports [`Error::NoObservations`].
pub fn run(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let inputs = Inputs::load(&config.inputs)?;
    let settings = Settings::from(config);
    let computation = compute(&inputs, &settings, config.execution)?;
    let files = write_outputs(&config.out_dir, &computation)?;
    let n = computation.report.observations;
    info!("{n} observations written to {}", config.out_dir.display());
    if n == 0 {
        warn!("no usable observations");
        if config.strict {
            return Err(Error::NoObservations);
        }
    }
    Ok(RunOutcome { computation, files })
}
