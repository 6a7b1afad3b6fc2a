use std::collections::HashMap;

use serde::Serialize;

use super::formula::{Memory, Monitor};
use super::{Formula, PolicyScheme, StateId};
use crate::error::{Error, Result};

/// Most sequences or search nodes a single analysis may enumerate.
pub const SEQUENCE_CAP: u64 = 1 << 20;

/// Every discriminator sequence of length `1..=depth` from the initial state.
pub fn reachable_sequences(scheme: &PolicyScheme, depth: usize) -> Result<Vec<Vec<StateId>>> {
    if depth == 0 {
        return Err(Error::Scheme("depth must be at least 1".into()));
    }
    let mut out = vec![vec![scheme.initial]];
    let mut frontier = 0..1;
    for _ in 1..depth {
        let start = out.len();
        for i in frontier.clone() {
            let last = *out[i].last().expect("sequences are non-empty");
            for t in scheme.successors(last) {
                if out.len() as u64 >= SEQUENCE_CAP {
                    return Err(Error::Explosion {
                        size: (scheme.states.len() as u128).saturating_pow(depth as u32),
                        cap: SEQUENCE_CAP,
                    });
                }
                let mut seq = out[i].clone();
                seq.push(t);
                out.push(seq);
            }
        }
        frontier = start..out.len();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathStep {
    pub state: String,
    pub relation: Vec<String>,
}

fn path(scheme: &PolicyScheme, states: &[StateId]) -> Vec<PathStep> {
    states
        .iter()
        .map(|&s| PathStep {
            state: scheme.states[s].clone(),
            relation: scheme.pair_names(scheme.relation_of(s)),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub holds: bool,
    /// Shortest sequence on which the invariant fails.
    pub counterexample: Option<Vec<PathStep>>,
    pub depth: usize,
    /// Every reachable search node was explored before the depth bound, so
    /// the verdict holds at any depth.
    pub saturated: bool,
}

/// A state together with the monitor memory it is entered with; this
/// determines both the formula's truth there and the memory passed on.
type Node = (StateId, Option<Memory>);

#[derive(Default)]
struct Graph {
    nodes: Vec<(Node, Option<usize>)>,
    index: HashMap<Node, usize>,
    /// First node, in breadth-first order, where the formula is false.
    failure: Option<usize>,
}

impl Graph {
    /// Adds `node` unless already present; returns whether it was new.
    fn visit(&mut self, node: Node, parent: Option<usize>, ok: bool) -> Result<bool> {
        if self.index.contains_key(&node) {
            return Ok(false);
        }
        if self.nodes.len() as u64 >= SEQUENCE_CAP {
            return Err(Error::Explosion {
                size: self.nodes.len() as u128 + 1,
                cap: SEQUENCE_CAP,
            });
        }
        self.index.insert(node.clone(), self.nodes.len());
        self.nodes.push((node, parent));
        if !ok && self.failure.is_none() {
            self.failure = Some(self.nodes.len() - 1);
        }
        Ok(true)
    }
}

/// Breadth-first search over (state, entry memory) pairs; equivalent to
/// checking every sequence up to `depth`, since the monitor is deterministic.
fn search(scheme: &PolicyScheme, monitor: &Monitor, depth: usize) -> Result<Outcome> {
    if depth == 0 {
        return Err(Error::Scheme("depth must be at least 1".into()));
    }
    let mut g = Graph::default();
    let s0 = scheme.initial;
    let (ok, _) = monitor.step(scheme.relation_of(s0), s0, None);
    g.visit((s0, None), None, ok)?;
    let mut frontier = 0..1;
    let mut level = 1;
    let saturated = loop {
        let start = g.nodes.len();
        let mut grew = false;
        for i in frontier.clone() {
            let ((s, entry), _) = g.nodes[i].clone();
            let (_, mem) = monitor.step(scheme.relation_of(s), s, entry.as_ref());
            for t in scheme.successors(s) {
                let node = (t, Some(mem.clone()));
                if level < depth {
                    let (ok, _) = monitor.step(scheme.relation_of(t), t, Some(&mem));
                    grew |= g.visit(node, Some(i), ok)?;
                } else if !g.index.contains_key(&node) {
                    grew = true;
                }
            }
        }
        if !grew {
            break true;
        }
        if level >= depth {
            break false;
        }
        frontier = start..g.nodes.len();
        level += 1;
    };
    let Graph { nodes, failure, .. } = g;

    let counterexample = failure.map(|mut i| {
        let mut states = vec![nodes[i].0 .0];
        while let Some(p) = nodes[i].1 {
            states.push(nodes[p].0 .0);
            i = p;
        }
        states.reverse();
        path(scheme, &states)
    });
    Ok(Outcome {
        holds: counterexample.is_none(),
        counterexample,
        depth,
        saturated,
    })
}

fn state_formula(f: &Formula) -> Result<()> {
    if f.is_temporal() {
        return Err(Error::Formula(format!(
            "`{f}` looks back along the sequence; use a sequence invariant"
        )));
    }
    Ok(())
}

/// `phi` holds for the relation of every state on every reachable sequence.
pub fn check_global_invariant(scheme: &PolicyScheme, phi: &Formula, depth: usize) -> Result<Outcome> {
    state_formula(phi)?;
    search(scheme, &Monitor::new(phi, scheme)?, depth)
}

/// As [`check_global_invariant`], only at states satisfying `psi`.
pub fn check_conditional_invariant(
    scheme: &PolicyScheme,
    psi: &Formula,
    phi: &Formula,
    depth: usize,
) -> Result<Outcome> {
    state_formula(psi)?;
    state_formula(phi)?;
    let f = Formula::Implies(Box::new(psi.clone()), Box::new(phi.clone()));
    search(scheme, &Monitor::new(&f, scheme)?, depth)
}

/// `phi` holds at every position of every reachable sequence.
pub fn check_sequence_invariant(scheme: &PolicyScheme, phi: &Formula, depth: usize) -> Result<Outcome> {
    search(scheme, &Monitor::new(phi, scheme)?, depth)
}
