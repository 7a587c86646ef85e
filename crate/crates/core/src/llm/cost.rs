use std::collections::BTreeMap;
use std::path::Path;

use rust_decimal::{Decimal, RoundingStrategy};
use serde::{Deserialize, Deserializer, Serialize};

use super::prompts::Provenance;
use super::LlmError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEntry {
    #[serde(default)]
    pub provenance: Provenance,
    pub model_name: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// USD per million tokens. Accepts JSON strings or numbers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pricing {
    #[serde(deserialize_with = "flexible_decimal")]
    pub input_usd_per_1m: Decimal,
    #[serde(deserialize_with = "flexible_decimal")]
    pub output_usd_per_1m: Decimal,
}

fn flexible_decimal<'de, D: Deserializer<'de>>(d: D) -> Result<Decimal, D::Error> {
    use serde::de::Error;
    let v = serde_json::Value::deserialize(d)?;
    let text = match &v {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Number(n) => n.to_string(),
        other => return Err(D::Error::custom(format!("expected a decimal, got {other}"))),
    };
    text.parse::<Decimal>()
        .or_else(|_| Decimal::from_scientific(&text))
        .map_err(|e| D::Error::custom(format!("bad decimal {text:?}: {e}")))
}

pub type PricingTable = BTreeMap<String, Pricing>;

/// Published per-million rates for the two default models.
pub fn default_pricing() -> PricingTable {
    let rate = |i: i64, o: i64| Pricing {
        input_usd_per_1m: Decimal::new(i, 2),
        output_usd_per_1m: Decimal::new(o, 2),
    };
    BTreeMap::from([
        (
            super::prompts::MISCONCEPTION_MODEL.to_string(),
            rate(250, 1000),
        ),
        (super::prompts::SYNOPSIS_MODEL.to_string(), rate(10, 40)),
    ])
}

pub fn load_pricing(path: impl AsRef<Path>) -> Result<PricingTable, LlmError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
}

/// Append-only record of provider usage.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageLedger {
    pub entries: Vec<UsageEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pricing: PricingTable,
}

impl UsageLedger {
    pub fn new(pricing: PricingTable) -> Self {
        UsageLedger {
            entries: Vec::new(),
            pricing,
        }
    }

    pub fn append(&mut self, entry: UsageEntry) {
        self.entries.push(entry);
    }

    /// Appends `other`'s entries; rows for models already priced here keep their rate.
    pub fn extend(&mut self, other: UsageLedger) {
        self.entries.extend(other.entries);
        for (model, rate) in other.pricing {
            self.pricing.entry(model).or_insert(rate);
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LlmError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostTotals {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: Decimal,
}

impl CostTotals {
    fn add(&mut self, input: u64, output: u64, cost: Decimal) {
        self.input_tokens += input;
        self.output_tokens += output;
        self.cost += cost;
    }

    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCost {
    pub entry: UsageEntry,
    pub cost: Decimal,
}

/// All amounts are exact; rounding happens only in [`CostReport::display`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub entries: Vec<EntryCost>,
    pub per_model: BTreeMap<String, CostTotals>,
    /// Keyed by provenance course; entries without one fall under "".
    pub per_course: BTreeMap<String, CostTotals>,
    pub grand_total: CostTotals,
    pub display_decimals: u32,
}

pub fn round_half_up(amount: Decimal, decimals: u32) -> Decimal {
    amount.round_dp_with_strategy(decimals, RoundingStrategy::MidpointAwayFromZero)
}

impl CostReport {
    pub fn display(&self, amount: Decimal) -> String {
        format!(
            "{:.*}",
            self.display_decimals as usize,
            round_half_up(amount, self.display_decimals)
        )
    }

    pub fn grand_total_display(&self) -> String {
        self.display(self.grand_total.cost)
    }
}

pub fn entry_cost(entry: &UsageEntry, rate: &Pricing) -> Decimal {
    let million = Decimal::from(1_000_000u32);
    (Decimal::from(entry.input_tokens) * rate.input_usd_per_1m
        + Decimal::from(entry.output_tokens) * rate.output_usd_per_1m)
        / million
}

/// Two decimals, or four when some nonzero entry would show as 0.00.
pub fn compute_cost(ledger: &UsageLedger) -> Result<CostReport, LlmError> {
    let mut entries = Vec::with_capacity(ledger.entries.len());
    let mut per_model: BTreeMap<String, CostTotals> = BTreeMap::new();
    let mut per_course: BTreeMap<String, CostTotals> = BTreeMap::new();
    let mut grand_total = CostTotals::default();
    for entry in &ledger.entries {
        let rate = ledger
            .pricing
            .get(&entry.model_name)
            .ok_or_else(|| LlmError::UnknownModelPricing(entry.model_name.clone()))?;
        let cost = entry_cost(entry, rate);
        per_model.entry(entry.model_name.clone()).or_default().add(
            entry.input_tokens,
            entry.output_tokens,
            cost,
        );
        per_course
            .entry(entry.provenance.course.clone().unwrap_or_default())
            .or_default()
            .add(entry.input_tokens, entry.output_tokens, cost);
        grand_total.add(entry.input_tokens, entry.output_tokens, cost);
        entries.push(EntryCost {
            entry: entry.clone(),
            cost,
        });
    }
    let sub_cent = entries
        .iter()
        .any(|e| !e.cost.is_zero() && round_half_up(e.cost, 2).is_zero());
    Ok(CostReport {
        entries,
        per_model,
        per_course,
        grand_total,
        display_decimals: if sub_cent { 4 } else { 2 },
    })
}
