//! Serializable comparison records and the self-describing report envelope.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::domain::FiniteSet;
use crate::suprema::{Method, SupEstimate};

/// Set identity as it appears in reports.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SetRef {
    pub name: String,
    pub hash: String,
    pub dim: usize,
    pub size: usize,
}

impl From<&FiniteSet> for SetRef {
    fn from(set: &FiniteSet) -> Self {
        SetRef {
            name: set.name().to_string(),
            hash: set.content_hash(),
            dim: set.dim(),
            size: set.len(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Quantity {
    pub label: String,
    pub value: f64,
    pub stderr: f64,
    pub method: Method,
}

impl Quantity {
    pub fn exact(label: impl Into<String>, value: f64) -> Self {
        Quantity {
            label: label.into(),
            value,
            stderr: 0.0,
            method: Method::Exact,
        }
    }

    pub fn from_estimate(label: impl Into<String>, est: &SupEstimate) -> Self {
        Quantity {
            label: label.into(),
            value: est.value,
            stderr: est.stderr,
            method: est.method,
        }
    }
}

/// Two quantities, their ratio and (when one is asserted) the constant the
/// ratio is held to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub comparison: String,
    pub inputs: Vec<SetRef>,
    pub lhs: Quantity,
    pub rhs: Quantity,
    /// `lhs / rhs`, with `0/0 = 0` and `x/0 = ∞` (serialized as `null`).
    pub ratio: f64,
    pub constant: Option<f64>,
    pub violation: bool,
    pub extras: BTreeMap<String, f64>,
}

pub fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub const SCHEMA_VERSION: u32 = 1;

/// Numerical conventions every report states, so results can be read
/// without the source.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Settings {
    pub budget_rule: &'static str,
    pub d_max: usize,
    pub slack: f64,
    pub mc_chunk: usize,
    pub rng: &'static str,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            budget_rule: crate::contraction::BUDGET_RULE,
            d_max: crate::moments::D_MAX,
            slack: crate::contraction::SLACK,
            mc_chunk: crate::rng::CHUNK,
            rng: "chacha8, key = (seed, label), stream = chunk index",
        }
    }
}

/// A self-describing report: tool version, the command and its
/// configuration, inputs by content hash, settings, and the result.
///
/// Nothing time- or host-dependent is recorded, so identical runs give
/// identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct Envelope<T: Serialize> {
    pub schema_version: u32,
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<SetRef>,
    pub settings: Settings,
    pub result: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: impl Into<String>, config: serde_json::Value, inputs: Vec<SetRef>, result: T) -> Self {
        Envelope {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config,
            inputs,
            settings: Settings::default(),
            result,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}
