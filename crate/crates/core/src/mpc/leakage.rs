//! Leakage audit log.
//!
//! Every protocol-level reconstruction inside the engine lands here as
//! exactly one entry, and only these four tags exist. Anything a test finds
//! beyond them is a leak.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LeakageTag {
    #[serde(rename = "sorted-permutation")]
    SortedPermutation,
    #[serde(rename = "aggregate-fees")]
    AggregateFees,
    #[serde(rename = "topk-rates")]
    TopkRates,
    #[serde(rename = "shuffled-commitments")]
    ShuffledCommitments,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LeakageEntry {
    pub round: u64,
    pub tag: LeakageTag,
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug, Default)]
pub struct LeakageLog {
    entries: Vec<LeakageEntry>,
}

impl LeakageLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, round: u64, tag: LeakageTag, payload: serde_json::Value) {
        self.entries.push(LeakageEntry { round, tag, payload });
    }

    pub fn entries(&self) -> &[LeakageEntry] {
        &self.entries
    }

    pub fn for_round(&self, round: u64) -> Vec<&LeakageEntry> {
        self.entries.iter().filter(|e| e.round == round).collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("entries serialize"));
            out.push('\n');
        }
        out
    }
}
