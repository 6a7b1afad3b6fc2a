//! Policy schemes: labels, named flow relations, and a transition system of
//! discriminator states selecting the relation in force.

mod analysis;
mod embed;
mod formula;

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lang::LabelId;
use crate::policy::FlowRelation;

pub use analysis::{
    check_conditional_invariant, check_global_invariant, check_sequence_invariant, reachable_sequences, Outcome,
    PathStep, SEQUENCE_CAP,
};
pub use embed::{check_embedding, infer_state_map, Clause, Embedding, EmbeddingOutcome};
pub use formula::Formula;

/// Index of a discriminator state.
pub type StateId = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyScheme {
    pub labels: Vec<String>,
    pub relations: Vec<(String, FlowRelation)>,
    pub states: Vec<String>,
    pub initial: StateId,
    /// Relation index per state.
    pub delta: Vec<usize>,
    pub mu: BTreeSet<(StateId, StateId)>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MuFile {
    /// `"complete"`: every pair of states.
    Keyword(String),
    Pairs(Vec<(String, String)>),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemeFile {
    labels: Vec<String>,
    relations: BTreeMap<String, Vec<(String, String)>>,
    states: Vec<String>,
    initial: String,
    delta: BTreeMap<String, String>,
    mu: MuFile,
}

fn position(names: &[String], name: &str, kind: &str) -> Result<usize> {
    names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::Scheme(format!("unknown {kind} `{name}`")))
}

fn no_duplicates(names: &[String], kind: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    match names.iter().find(|n| !seen.insert(n.as_str())) {
        Some(n) => Err(Error::Scheme(format!("duplicate {kind} `{n}`"))),
        None => Ok(()),
    }
}

impl PolicyScheme {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: SchemeFile = serde_json::from_str(text).map_err(|e| Error::Scheme(e.to_string()))?;
        no_duplicates(&file.labels, "label")?;
        no_duplicates(&file.states, "state")?;
        let relations = file
            .relations
            .iter()
            .map(|(name, pairs)| {
                let pairs = pairs
                    .iter()
                    .map(|(a, b)| {
                        Ok((
                            LabelId(position(&file.labels, a, "label")?),
                            LabelId(position(&file.labels, b, "label")?),
                        ))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((name.clone(), FlowRelation::from_pairs(pairs)))
            })
            .collect::<Result<Vec<_>>>()?;
        let rel_names: Vec<String> = relations.iter().map(|(n, _)| n.clone()).collect();
        let delta = file
            .states
            .iter()
            .map(|s| match file.delta.get(s) {
                Some(r) => position(&rel_names, r, "relation"),
                None => Err(Error::Scheme(format!("delta has no entry for state `{s}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(extra) = file.delta.keys().find(|k| !file.states.contains(k)) {
            return Err(Error::Scheme(format!("delta names unknown state `{extra}`")));
        }
        let mu = match file.mu {
            MuFile::Keyword(k) if k == "complete" => {
                let n = file.states.len();
                (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect()
            }
            MuFile::Keyword(k) => return Err(Error::Scheme(format!("unknown mu keyword `{k}`"))),
            MuFile::Pairs(pairs) => pairs
                .iter()
                .map(|(a, b)| Ok((position(&file.states, a, "state")?, position(&file.states, b, "state")?)))
                .collect::<Result<_>>()?,
        };
        Ok(PolicyScheme {
            initial: position(&file.states, &file.initial, "state")?,
            labels: file.labels,
            relations,
            states: file.states,
            delta,
            mu,
        })
    }

    pub fn relation_of(&self, s: StateId) -> &FlowRelation {
        &self.relations[self.delta[s]].1
    }

    pub fn successors(&self, s: StateId) -> impl Iterator<Item = StateId> + '_ {
        self.mu.range((s, 0)..=(s, usize::MAX)).map(|(_, t)| *t)
    }

    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l == name).map(LabelId)
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name)
    }

    /// `A->B` pairs of a relation, for reports.
    pub fn pair_names(&self, rel: &FlowRelation) -> Vec<String> {
        rel.pairs()
            .map(|(a, b)| format!("{}->{}", self.labels[a.0], self.labels[b.0]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn loads_tsp() {
        let s = PolicyScheme::from_json(corpus::source("tsp.json").unwrap()).unwrap();
        assert_eq!(s.states, vec!["closed", "declassifying"]);
        assert_eq!(s.mu.len(), 4);
        let d = s.state_id("declassifying").unwrap();
        assert!(s
            .relation_of(d)
            .may_flow(s.label_id("Secret").unwrap(), s.label_id("Public").unwrap()));
    }

    #[test]
    fn complete_mu_keyword() {
        let s = PolicyScheme::from_json(corpus::source("abc.json").unwrap()).unwrap();
        assert_eq!(s.states.len(), 64);
        assert_eq!(s.mu.len(), 64 * 64);
    }

    #[test]
    fn rejects_partial_delta() {
        let text =
            r#"{"labels":["A"],"relations":{"r":[]},"states":["s","t"],"initial":"s","delta":{"s":"r"},"mu":[]}"#;
        assert!(matches!(PolicyScheme::from_json(text), Err(Error::Scheme(_))));
    }

    #[test]
    fn rejects_unknown_initial() {
        let text = r#"{"labels":["A"],"relations":{"r":[]},"states":["s"],"initial":"x","delta":{"s":"r"},"mu":[]}"#;
        assert!(matches!(PolicyScheme::from_json(text), Err(Error::Scheme(_))));
    }
}
