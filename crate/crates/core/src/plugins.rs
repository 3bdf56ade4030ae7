//! Built-in classical processing stages run before and after the quantum job.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::builders::ShorLayout;
use crate::shor::{self, ShorError};
use crate::statevec::Counts;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PluginError {
    #[error("unknown {stage} plugin `{name}`")]
    UnknownPlugin { stage: &'static str, name: String },
    #[error(transparent)]
    Shor(#[from] ShorError),
    #[error("shor_factors needs a Shor circuit")]
    MissingShorContext,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PreProcessor {
    #[default]
    Identity,
    ClampQubits,
}

impl PreProcessor {
    pub const ALL: [PreProcessor; 2] = [PreProcessor::Identity, PreProcessor::ClampQubits];

    pub fn from_name(name: &str) -> Result<Self, PluginError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| PluginError::UnknownPlugin {
                stage: "pre",
                name: name.to_owned(),
            })
    }

    pub fn name(self) -> &'static str {
        match self {
            PreProcessor::Identity => "identity",
            PreProcessor::ClampQubits => "clamp_qubits",
        }
    }

    pub fn apply(self, input: i64, max_qubits: usize) -> i64 {
        match self {
            PreProcessor::Identity => input,
            PreProcessor::ClampQubits => input.clamp(1, max_qubits as i64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PostProcessor {
    #[default]
    RawCounts,
    MostFrequent,
    ShorFactors,
}

impl PostProcessor {
    pub const ALL: [PostProcessor; 3] = [
        PostProcessor::RawCounts,
        PostProcessor::MostFrequent,
        PostProcessor::ShorFactors,
    ];

    pub fn from_name(name: &str) -> Result<Self, PluginError> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| PluginError::UnknownPlugin {
                stage: "post",
                name: name.to_owned(),
            })
    }

    pub fn name(self) -> &'static str {
        match self {
            PostProcessor::RawCounts => "raw_counts",
            PostProcessor::MostFrequent => "most_frequent",
            PostProcessor::ShorFactors => "shor_factors",
        }
    }
}

/// What a post-processor needs besides the counts.
#[derive(Debug, Clone, Default)]
pub struct PostContext {
    pub input: i64,
    pub required_qubits: usize,
    pub shor: Option<ShorLayout>,
}

/// Post-processed payload: the `result` value and processor-specific `detail` fields.
#[derive(Debug, Clone, PartialEq)]
pub struct PostOutput {
    pub result: Value,
    pub detail: Map<String, Value>,
}

fn bits_value(bits: &str) -> u64 {
    bits.bytes().fold(0u64, |acc, b| acc << 1 | u64::from(b == b'1'))
}

pub fn post_process(plugin: PostProcessor, counts: &Counts, ctx: &PostContext) -> Result<PostOutput, PluginError> {
    match plugin {
        PostProcessor::RawCounts => Ok(PostOutput {
            result: json!(counts.counts),
            detail: Map::new(),
        }),
        PostProcessor::MostFrequent => Ok(most_frequent(counts)),
        PostProcessor::ShorFactors => {
            let layout = ctx.shor.ok_or(PluginError::MissingShorContext)?;
            let outcomes = counts.iter().map(|(k, v)| (bits_value(k), v));
            let pairs = shor::extract_factors(outcomes, layout.counting_bits, layout.a, layout.n)?;
            let mut detail = Map::new();
            detail.insert("required_qubits".into(), json!(layout.total_qubits()));
            detail.insert("shots".into(), json!(counts.shots));
            Ok(PostOutput {
                result: json!(pairs),
                detail,
            })
        }
    }
}

/// Highest-count outcome; ties go to the smallest numeric value. All
/// outcomes sharing the top count are listed in `all_possible_values`.
pub fn most_frequent(counts: &Counts) -> PostOutput {
    let top = counts.iter().map(|(_, v)| v).max().unwrap_or(0);
    let mut winners: Vec<(u64, &str)> = counts
        .iter()
        .filter(|&(_, v)| v == top)
        .map(|(k, _)| (bits_value(k), k))
        .collect();
    winners.sort_unstable();
    let mut detail = Map::new();
    let result = match winners.first() {
        Some(&(value, bits)) => {
            detail.insert("random_number_binary".into(), json!(bits));
            detail.insert("counts".into(), json!(top));
            json!(value)
        }
        None => Value::Null,
    };
    let all: Map<String, Value> = winners
        .iter()
        .map(|&(value, bits)| (bits.to_owned(), json!(value)))
        .collect();
    detail.insert("all_possible_values".into(), Value::Object(all));
    PostOutput { result, detail }
}
