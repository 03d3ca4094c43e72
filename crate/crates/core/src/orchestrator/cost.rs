//! Token cost ledger with exact integer money.
//!
//! Prices are held as integer micro-dollars per million tokens, so one
//! token at one micro-dollar per million costs one pico-dollar. Ledger
//! totals are kept in pico-dollars and never touch floating point.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

const PICO_PER_USD: u128 = 1_000_000_000_000;
const MICRO_PER_USD: f64 = 1_000_000.0;

/// Price of one model in micro-dollars per million tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rate {
    pub input_micro_usd_per_mtok: u64,
    pub output_micro_usd_per_mtok: u64,
}

impl Rate {
    /// From USD per million tokens, rounded to the nearest micro-dollar.
    pub fn from_usd(input_per_mtok: f64, output_per_mtok: f64) -> Result<Self, CostError> {
        Ok(Self {
            input_micro_usd_per_mtok: usd_to_micro(input_per_mtok)?,
            output_micro_usd_per_mtok: usd_to_micro(output_per_mtok)?,
        })
    }

    fn cost_pico(&self, input_tokens: u64, output_tokens: u64) -> u128 {
        u128::from(input_tokens) * u128::from(self.input_micro_usd_per_mtok)
            + u128::from(output_tokens) * u128::from(self.output_micro_usd_per_mtok)
    }
}

fn usd_to_micro(usd: f64) -> Result<u64, CostError> {
    if !usd.is_finite() || usd < 0.0 {
        return Err(CostError::InvalidRate(usd));
    }
    Ok((usd * MICRO_PER_USD).round() as u64)
}

pub type RateTable = BTreeMap<String, Rate>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("token counts must be nonnegative (got input {input}, output {output})")]
    NegativeTokens { input: i64, output: i64 },
    #[error("rate {0} is not a nonnegative finite price")]
    InvalidRate(f64),
}

/// Exact dollar amount in pico-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PicoUsd(pub u128);

impl PicoUsd {
    pub fn as_f64(self) -> f64 {
        self.0 as f64 / PICO_PER_USD as f64
    }
}

impl fmt::Display for PicoUsd {
    /// Plain decimal dollars without trailing zeros, e.g. `0.002`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / PICO_PER_USD;
        let frac = self.0 % PICO_PER_USD;
        if frac == 0 {
            return write!(f, "{whole}");
        }
        let digits = format!("{frac:012}");
        write!(f, "{whole}.{}", digits.trim_end_matches('0'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostEntry {
    pub model: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: PicoUsd,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostLedger {
    pub rates: RateTable,
    pub entries: Vec<CostEntry>,
    pub total: PicoUsd,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl CostLedger {
    pub fn new(rates: RateTable) -> Self {
        Self {
            rates,
            ..Default::default()
        }
    }

    /// Append one exchange. A model missing from the rate table is charged
    /// at zero and noted in `warnings`.
    pub fn accumulate_cost(&mut self, model: &str, input_tokens: i64, output_tokens: i64) -> Result<&CostEntry, CostError> {
        if input_tokens < 0 || output_tokens < 0 {
            return Err(CostError::NegativeTokens {
                input: input_tokens,
                output: output_tokens,
            });
        }
        let (input, output) = (input_tokens as u64, output_tokens as u64);
        let rate = match self.rates.get(model) {
            Some(rate) => *rate,
            None => {
                let msg = format!("model `{model}` has no rate; charged at zero");
                log::warn!("{msg}");
                if !self.warnings.contains(&msg) {
                    self.warnings.push(msg);
                }
                Rate::default()
            }
        };
        let cost = PicoUsd(rate.cost_pico(input, output));
        self.total = PicoUsd(self.total.0 + cost.0);
        self.entries.push(CostEntry {
            model: model.to_string(),
            input_tokens: input,
            output_tokens: output,
            cost,
        });
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn total_usd(&self) -> f64 {
        self.total.as_f64()
    }

    pub fn input_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.input_tokens).sum()
    }

    pub fn output_tokens(&self) -> u64 {
        self.entries.iter().map(|e| e.output_tokens).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ledger() -> CostLedger {
        let mut rates = RateTable::new();
        rates.insert("m".into(), Rate::from_usd(1.0, 2.0).unwrap());
        CostLedger::new(rates)
    }

    #[test]
    fn one_million_input_tokens() {
        let mut l = ledger();
        l.accumulate_cost("m", 1_000_000, 0).unwrap();
        assert_eq!(l.total.to_string(), "1");
        assert_eq!(l.total_usd(), 1.0);
    }

    #[test]
    fn small_exchange_is_exact() {
        let mut l = ledger();
        l.accumulate_cost("m", 1_000, 500).unwrap();
        assert_eq!(l.total, PicoUsd(2_000_000_000));
        assert_eq!(l.total.to_string(), "0.002");
    }

    #[test]
    fn additive_and_unknown_model() {
        let mut l = ledger();
        let a = l.accumulate_cost("m", 123, 456).unwrap().cost;
        let b = l.accumulate_cost("other", 10, 10).unwrap().cost;
        assert_eq!(b, PicoUsd(0));
        assert_eq!(l.total.0, a.0 + b.0);
        assert_eq!(l.warnings.len(), 1);
        assert_eq!(l.input_tokens(), 133);
    }

    #[test]
    fn negative_tokens_rejected() {
        let mut l = ledger();
        assert!(matches!(l.accumulate_cost("m", -1, 0), Err(CostError::NegativeTokens { .. })));
        assert!(l.entries.is_empty());
        assert!(Rate::from_usd(-1.0, 0.0).is_err());
    }

    #[test]
    fn display_trims() {
        assert_eq!(PicoUsd(0).to_string(), "0");
        assert_eq!(PicoUsd(1).to_string(), "0.000000000001");
        assert_eq!(PicoUsd(1_500_000_000_000).to_string(), "1.5");
    }
}
