//! Carry wedge between an ETF-options rail and a futures rail.
//!
//! The pipeline recovers put-call-parity forwards from listed ETF option
//! quotes, selects one near-the-money pair per date and maturity bucket,
//! converts the forward into an effective annualized carry, compares it with
//! the carry of the nearest futures contract over the reference rate, and
//! summarizes the difference.
//!
//! Modules map onto pipeline stages:
//!
//! - [`ingest`]: canonical CSV parsing and the vendor holdings adapter
//! - [`parity`]: midquotes, year fractions and the implied forward
//! - [`select`]: sample filters, maturity buckets and pair selection
//! - [`carry`]: holdings ratio, both carry legs and the wedge
//! - [`stats`]: summary tables
//! - [`synth`]: arbitrage-consistent synthetic inputs with a known wedge
//! - [`pipeline`]: end-to-end orchestration and output files

// `!(x < y)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carry;
pub mod config;
pub mod error;
pub mod ingest;
pub mod par;
pub mod parity;
pub mod pipeline;
pub mod select;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use ingest::TradingDate;
