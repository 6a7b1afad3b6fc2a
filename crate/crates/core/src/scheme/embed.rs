use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use super::analysis::PathStep;
use super::{PolicyScheme, StateId};
use crate::error::{Error, Result};
use crate::lang::LabelId;
use crate::policy::FlowRelation;

/// Maps an embedded scheme's labels and states into a host scheme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub label_map: BTreeMap<String, String>,
    pub state_map: BTreeMap<String, String>,
}

impl Embedding {
    /// Parses `A=X,B=Y`.
    pub fn parse_map(text: &str) -> Result<BTreeMap<String, String>> {
        text.split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|kv| match kv.split_once('=') {
                Some((k, v)) if !k.trim().is_empty() && !v.trim().is_empty() => {
                    Ok((k.trim().to_string(), v.trim().to_string()))
                }
                _ => Err(Error::Embedding(format!("expected NAME=NAME, found `{kv}`"))),
            })
            .collect()
    }

    pub fn identity(scheme: &PolicyScheme) -> Self {
        Embedding {
            label_map: scheme.labels.iter().map(|l| (l.clone(), l.clone())).collect(),
            state_map: scheme.states.iter().map(|s| (s.clone(), s.clone())).collect(),
        }
    }

    /// `self` followed by `then`.
    pub fn compose(&self, then: &Embedding) -> Result<Embedding> {
        let via = |m: &BTreeMap<String, String>, n: &BTreeMap<String, String>, kind: &str| {
            m.iter()
                .map(|(k, v)| {
                    n.get(v)
                        .map(|w| (k.clone(), w.clone()))
                        .ok_or_else(|| Error::Embedding(format!("{kind} `{v}` is not mapped by the second embedding")))
                })
                .collect::<Result<BTreeMap<_, _>>>()
        };
        Ok(Embedding {
            label_map: via(&self.label_map, &then.label_map, "label")?,
            state_map: via(&self.state_map, &then.state_map, "state")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Clause {
    /// Every embedded transition is a host transition.
    Simulation = 1,
    /// Mapped states select the mapped relation, on the image labels.
    RelationAgreement = 2,
    /// Every reachable host relation, on the image labels, is some mapped embedded relation or less.
    RestrictionPreservation = 3,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EmbeddingOutcome {
    pub holds: bool,
    pub clause: Option<u8>,
    pub reason: Option<String>,
    /// For clause 3: a shortest host path to the offending state.
    pub witness: Option<Vec<PathStep>>,
    pub depth: usize,
    /// All reachable host states were found within `depth`.
    pub saturated: bool,
}

struct Resolved {
    labels: Vec<LabelId>,
    states: Vec<StateId>,
}

fn resolve(embedded: &PolicyScheme, host: &PolicyScheme, emb: &Embedding) -> Result<Resolved> {
    let mut labels = Vec::new();
    for l in &embedded.labels {
        let target = emb
            .label_map
            .get(l)
            .ok_or_else(|| Error::Embedding(format!("label `{l}` is not mapped")))?;
        let id = host
            .label_id(target)
            .ok_or_else(|| Error::Embedding(format!("host has no label `{target}`")))?;
        if labels.contains(&id) {
            return Err(Error::Embedding(format!(
                "label map is not injective: two labels map to `{target}`"
            )));
        }
        labels.push(id);
    }
    if let Some(extra) = emb.label_map.keys().find(|k| embedded.label_id(k).is_none()) {
        return Err(Error::Embedding(format!("embedded scheme has no label `{extra}`")));
    }
    let states = embedded
        .states
        .iter()
        .map(|s| {
            let target = emb
                .state_map
                .get(s)
                .ok_or_else(|| Error::Embedding(format!("state `{s}` is not mapped")))?;
            host.state_id(target)
                .ok_or_else(|| Error::Embedding(format!("host has no state `{target}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if states[embedded.initial] != host.initial {
        return Err(Error::Embedding(format!(
            "initial state `{}` must map to the host's initial state `{}`",
            embedded.states[embedded.initial], host.states[host.initial]
        )));
    }
    Ok(Resolved { labels, states })
}

fn mapped(rel: &FlowRelation, labels: &[LabelId]) -> FlowRelation {
    FlowRelation::from_pairs(rel.pairs().map(|(a, b)| (labels[a.0], labels[b.0])))
}

fn restricted(rel: &FlowRelation, image: &BTreeSet<LabelId>) -> FlowRelation {
    FlowRelation::from_pairs(rel.pairs().filter(|(a, b)| image.contains(a) && image.contains(b)))
}

/// A state map sending the initial state to the host's initial state and
/// every other state to the first host state whose relation agrees on the
/// image labels (or the host's initial state when none does).
pub fn infer_state_map(
    embedded: &PolicyScheme,
    host: &PolicyScheme,
    label_map: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, String>> {
    let probe = Embedding {
        label_map: label_map.clone(),
        state_map: embedded
            .states
            .iter()
            .map(|s| (s.clone(), host.states[host.initial].clone()))
            .collect(),
    };
    let r = resolve(embedded, host, &probe)?;
    let image: BTreeSet<LabelId> = r.labels.iter().copied().collect();
    Ok(embedded
        .states
        .iter()
        .enumerate()
        .map(|(s, name)| {
            let want = mapped(embedded.relation_of(s), &r.labels);
            let target = if s == embedded.initial {
                host.initial
            } else {
                (0..host.states.len())
                    .find(|&h| restricted(host.relation_of(h), &image) == want)
                    .unwrap_or(host.initial)
            };
            (name.clone(), host.states[target].clone())
        })
        .collect())
}

/// Checks the three embedding clauses in order and reports the first that fails.
pub fn check_embedding(
    embedded: &PolicyScheme,
    host: &PolicyScheme,
    emb: &Embedding,
    depth: usize,
) -> Result<EmbeddingOutcome> {
    if depth == 0 {
        return Err(Error::Scheme("depth must be at least 1".into()));
    }
    let r = resolve(embedded, host, emb)?;
    let image: BTreeSet<LabelId> = r.labels.iter().copied().collect();

    // Reachable host states, breadth first, for clause 3.
    let mut parent: BTreeMap<StateId, Option<StateId>> = [(host.initial, None)].into();
    let mut queue = VecDeque::from([(host.initial, 1)]);
    let mut order = vec![host.initial];
    let mut saturated = true;
    while let Some((s, len)) = queue.pop_front() {
        for t in host.successors(s) {
            if parent.contains_key(&t) {
                continue;
            }
            if len >= depth {
                saturated = false;
                continue;
            }
            parent.insert(t, Some(s));
            order.push(t);
            queue.push_back((t, len + 1));
        }
    }
    let fail = |clause: Clause, reason: String, witness: Option<Vec<PathStep>>| EmbeddingOutcome {
        holds: false,
        clause: Some(clause as u8),
        reason: Some(reason),
        witness,
        depth,
        saturated,
    };

    for &(a, b) in &embedded.mu {
        let (ha, hb) = (r.states[a], r.states[b]);
        if !host.mu.contains(&(ha, hb)) {
            return Ok(fail(
                Clause::Simulation,
                format!(
                    "transition {} -> {} maps to {} -> {}, which the host does not allow",
                    embedded.states[a], embedded.states[b], host.states[ha], host.states[hb]
                ),
                None,
            ));
        }
    }

    for s in 0..embedded.states.len() {
        let want = mapped(embedded.relation_of(s), &r.labels);
        let got = restricted(host.relation_of(r.states[s]), &image);
        if want != got {
            return Ok(fail(
                Clause::RelationAgreement,
                format!(
                    "state {} selects {{{}}} but host state {} gives {{{}}} on the image labels",
                    embedded.states[s],
                    host.pair_names(&want).join(", "),
                    host.states[r.states[s]],
                    host.pair_names(&got).join(", ")
                ),
                None,
            ));
        }
    }

    let allowed: Vec<FlowRelation> = embedded.relations.iter().map(|(_, f)| mapped(f, &r.labels)).collect();
    for &h in &order {
        let got = restricted(host.relation_of(h), &image);
        if !allowed.iter().any(|f| got.is_subset(f)) {
            let mut states = vec![h];
            let mut at = h;
            while let Some(Some(p)) = parent.get(&at) {
                states.push(*p);
                at = *p;
            }
            states.reverse();
            let witness = states
                .iter()
                .map(|&s| PathStep {
                    state: host.states[s].clone(),
                    relation: host.pair_names(host.relation_of(s)),
                })
                .collect();
            return Ok(fail(
                Clause::RestrictionPreservation,
                format!(
                    "reachable host state {} allows {{{}}} on the image labels, more than any embedded relation",
                    host.states[h],
                    host.pair_names(&got).join(", ")
                ),
                Some(witness),
            ));
        }
    }

    Ok(EmbeddingOutcome {
        holds: true,
        clause: None,
        reason: None,
        witness: None,
        depth,
        saturated,
    })
}
