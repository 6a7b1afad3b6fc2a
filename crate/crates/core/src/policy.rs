//! Flow relations, Paralocks labels, attackers and forgetful-attacker automata.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lang::{LabelId, LockId, Program};

/// The set of currently permitted label-to-label flows.
///
/// Queried with implicit reflexive closure and no transitive closure:
/// a chain `A -> B -> C` does not permit `A -> C`.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowRelation {
    pairs: BTreeSet<(LabelId, LabelId)>,
}

impl FlowRelation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (LabelId, LabelId)>) -> Self {
        let mut r = Self::new();
        for (a, b) in pairs {
            r.allow(a, b);
        }
        r
    }

    /// Reflexive pairs are implicit and never stored.
    pub fn allow(&mut self, from: LabelId, to: LabelId) {
        if from != to {
            self.pairs.insert((from, to));
        }
    }

    pub fn revoke(&mut self, from: LabelId, to: LabelId) {
        self.pairs.remove(&(from, to));
    }

    pub fn may_flow(&self, from: LabelId, to: LabelId) -> bool {
        from == to || self.pairs.contains(&(from, to))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (LabelId, LabelId)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_subset(&self, other: &FlowRelation) -> bool {
        self.pairs.is_subset(&other.pairs)
    }

    pub fn display<'a>(&'a self, program: &'a Program) -> impl fmt::Display + 'a {
        DisplayRelation(self, program)
    }
}

struct DisplayRelation<'a>(&'a FlowRelation, &'a Program);

impl fmt::Display for DisplayRelation<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (a, b)) in self.0.pairs().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{}->{}", self.1.label_name(a), self.1.label_name(b))?;
        }
        write!(f, "}}")
    }
}

/// Checked `mayFlow`: rejects labels the program does not declare.
pub fn may_flow(program: &Program, relation: &FlowRelation, from: LabelId, to: LabelId) -> Result<bool> {
    for l in [from, to] {
        if l.0 >= program.labels.len() {
            return Err(Error::UnknownLabel(format!("#{}", l.0)));
        }
    }
    Ok(relation.may_flow(from, to))
}

/// The policy part of a store: flow relation plus open locks.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PolicyComponent {
    pub relation: FlowRelation,
    pub open_locks: BTreeSet<LockId>,
}

/// A Paralocks label `{a : L1, ..., Ln; b : ...}`.
///
/// Each clause names an actor and the locks that must be open (or held as
/// capabilities) for that actor to observe. No clauses means nobody may observe.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParalocksLabel {
    pub clauses: BTreeSet<(LabelId, BTreeSet<LockId>)>,
}

impl ParalocksLabel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_clause(mut self, actor: LabelId, guards: impl IntoIterator<Item = LockId>) -> Self {
        self.clauses.insert((actor, guards.into_iter().collect()));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Can `actor` holding `capabilities` observe this label while `open_locks` are open?
    pub fn observable_by(
        &self,
        actor: LabelId,
        capabilities: &BTreeSet<LockId>,
        open_locks: &BTreeSet<LockId>,
    ) -> bool {
        self.clauses.iter().any(|(a, guards)| {
            *a == actor
                && guards
                    .iter()
                    .all(|l| capabilities.contains(l) || open_locks.contains(l))
        })
    }
}

/// How an attacker remembers what it has seen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Memory {
    PerfectRecall,
    Automaton(ForgetfulAutomaton),
}

/// An observer: a level (actor), optional Paralocks capabilities and a memory model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Attacker {
    pub level: LabelId,
    pub capabilities: BTreeSet<LockId>,
    pub memory: Memory,
}

impl Attacker {
    pub fn at(level: LabelId) -> Self {
        Attacker {
            level,
            capabilities: BTreeSet::new(),
            memory: Memory::PerfectRecall,
        }
    }

    pub fn with_capabilities(mut self, caps: impl IntoIterator<Item = LockId>) -> Self {
        self.capabilities = caps.into_iter().collect();
        self
    }

    pub fn with_automaton(mut self, automaton: ForgetfulAutomaton) -> Self {
        self.memory = Memory::Automaton(automaton);
        self
    }
}

pub fn paralocks_observable(label: &ParalocksLabel, attacker: &Attacker, open_locks: &BTreeSet<LockId>) -> bool {
    label.observable_by(attacker.level, &attacker.capabilities, open_locks)
}

/// A deterministic automaton over observed values, modelling an attacker
/// that may forget earlier observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForgetfulAutomaton {
    states: Vec<String>,
    initial: usize,
    alphabet: BTreeSet<i64>,
    transitions: BTreeMap<(usize, i64), usize>,
}

/// State index within a [`ForgetfulAutomaton`].
pub type AutomatonState = usize;

impl ForgetfulAutomaton {
    /// Builds an automaton, checking the transition function is total over `alphabet`.
    pub fn new(
        states: Vec<String>,
        initial: &str,
        alphabet: impl IntoIterator<Item = i64>,
        transitions: impl IntoIterator<Item = (String, i64, String)>,
    ) -> Result<Self> {
        let index = |name: &str| {
            states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| Error::Automaton(format!("unknown state `{name}`")))
        };
        let initial = index(initial)?;
        let alphabet: BTreeSet<i64> = alphabet.into_iter().collect();
        let mut table = BTreeMap::new();
        for (from, value, to) in transitions {
            if !alphabet.contains(&value) {
                return Err(Error::Automaton(format!("transition on {value} outside the alphabet")));
            }
            let key = (index(&from)?, value);
            let to = index(&to)?;
            if table.insert(key, to).is_some_and(|prev| prev != to) {
                return Err(Error::Automaton(format!(
                    "nondeterministic transition from `{from}` on {value}"
                )));
            }
        }
        for (s, name) in states.iter().enumerate() {
            for v in &alphabet {
                if !table.contains_key(&(s, *v)) {
                    return Err(Error::Automaton(format!("no transition from `{name}` on {v}")));
                }
            }
        }
        Ok(ForgetfulAutomaton {
            states,
            initial,
            alphabet,
            transitions: table,
        })
    }

    /// The four-state attacker that forgets the first value and remembers the
    /// second, over the alphabet `{1, 2}`. `q1`/`q2` keep their value on any
    /// further input.
    pub fn second_value_only() -> Self {
        let names = ["q0", "qf", "q1", "q2"].map(String::from).to_vec();
        let t = |a: &str, v: i64, b: &str| (a.to_string(), v, b.to_string());
        Self::new(
            names,
            "q0",
            [1, 2],
            [
                t("q0", 1, "qf"),
                t("q0", 2, "qf"),
                t("qf", 1, "q1"),
                t("qf", 2, "q2"),
                t("q1", 1, "q1"),
                t("q1", 2, "q1"),
                t("q2", 1, "q2"),
                t("q2", 2, "q2"),
            ],
        )
        .expect("second-value automaton is well formed")
    }

    /// Remembers every value it sees, up to `depth` values; longer histories
    /// collapse onto their `depth`-long prefix.
    pub fn full_memory(alphabet: &[i64], depth: usize) -> Self {
        Self::history_automaton(alphabet, depth, false)
    }

    /// Forgets the first observed value, then remembers up to `depth` later ones.
    /// Agrees with [`Self::second_value_only`] on the first two observations.
    pub fn forget_first(alphabet: &[i64], depth: usize) -> Self {
        Self::history_automaton(alphabet, depth, true)
    }

    /// Forgets everything: a single state.
    pub fn amnesiac(alphabet: &[i64]) -> Self {
        let t = alphabet.iter().map(|v| ("q".to_string(), *v, "q".to_string()));
        Self::new(vec!["q".into()], "q", alphabet.iter().copied(), t).expect("single-state automaton is well formed")
    }

    fn history_automaton(alphabet: &[i64], depth: usize, drop_first: bool) -> Self {
        // State names: "e" is the start, "_" the forgotten first value,
        // then the remembered values joined by '.'.
        fn name(skipped: bool, hist: &[i64]) -> String {
            let mut s = String::from(if skipped { "_" } else { "e" });
            for v in hist {
                s.push('.');
                s.push_str(&v.to_string());
            }
            s
        }
        let mut states = Vec::new();
        let mut transitions = Vec::new();
        let mut frontier: Vec<(bool, Vec<i64>)> = vec![(false, vec![])];
        while let Some((skipped, hist)) = frontier.pop() {
            let here = name(skipped, &hist);
            if states.contains(&here) {
                continue;
            }
            states.push(here.clone());
            for &v in alphabet {
                let next = if drop_first && !skipped {
                    (true, hist.clone())
                } else if hist.len() < depth {
                    let mut h = hist.clone();
                    h.push(v);
                    (skipped, h)
                } else {
                    (skipped, hist.clone())
                };
                transitions.push((here.clone(), v, name(next.0, &next.1)));
                frontier.push(next);
            }
        }
        Self::new(states, "e", alphabet.iter().copied(), transitions).expect("history automaton is well formed")
    }

    pub fn initial(&self) -> AutomatonState {
        self.initial
    }

    pub fn state_name(&self, s: AutomatonState) -> &str {
        &self.states[s]
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn alphabet(&self) -> &BTreeSet<i64> {
        &self.alphabet
    }

    pub fn transition(&self, state: AutomatonState, value: i64) -> Result<AutomatonState> {
        self.transitions
            .get(&(state, value))
            .copied()
            .ok_or(Error::OutsideAlphabet(value))
    }

    /// Folds the transition function over `observed` from the initial state.
    pub fn run(&self, observed: &[i64]) -> Result<AutomatonState> {
        observed.iter().try_fold(self.initial, |s, v| self.transition(s, *v))
    }

    /// Every state visited while reading `observed`, starting with the initial one.
    pub fn visited(&self, observed: &[i64]) -> Result<Vec<AutomatonState>> {
        let mut out = vec![self.initial];
        let mut s = self.initial;
        for v in observed {
            s = self.transition(s, *v)?;
            out.push(s);
        }
        Ok(out)
    }

    /// Parses the textual automaton format:
    ///
    /// ```text
    /// states q0 qf q1 q2
    /// initial q0
    /// alphabet 1 2
    /// q0 1 qf
    /// ...
    /// ```
    ///
    /// Blank lines and `#` comments are ignored. `alphabet` may be omitted, in
    /// which case it is the set of values mentioned by transitions.
    pub fn parse(text: &str) -> Result<Self> {
        let mut states = None;
        let mut initial = None;
        let mut alphabet: Option<Vec<i64>> = None;
        let mut transitions = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |m: &str| Error::Automaton(format!("line {}: {m}", n + 1));
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "states" => states = Some(words[1..].iter().map(|s| s.to_string()).collect()),
                "initial" => initial = Some(words.get(1).ok_or_else(|| err("missing state"))?.to_string()),
                "alphabet" => {
                    alphabet = Some(
                        words[1..]
                            .iter()
                            .map(|w| w.parse().map_err(|_| err("bad value")))
                            .collect::<Result<_>>()?,
                    )
                }
                _ if words.len() == 3 => {
                    let v: i64 = words[1].parse().map_err(|_| err("bad value"))?;
                    transitions.push((words[0].to_string(), v, words[2].to_string()));
                }
                _ => return Err(err("expected `FROM VALUE TO`")),
            }
        }
        let states: Vec<String> = states.ok_or_else(|| Error::Automaton("missing `states` line".into()))?;
        let initial = initial.ok_or_else(|| Error::Automaton("missing `initial` line".into()))?;
        let alphabet = alphabet.unwrap_or_else(|| transitions.iter().map(|(_, v, _)| *v).collect());
        Self::new(states, &initial, alphabet, transitions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: LabelId = LabelId(0);
    const B: LabelId = LabelId(1);
    const C: LabelId = LabelId(2);
    const L1: LockId = LockId(0);

    #[test]
    fn may_flow_is_reflexive_but_not_transitive() {
        let lh = FlowRelation::from_pairs([(A, B)]);
        assert!(lh.may_flow(A, B));
        assert!(lh.may_flow(B, B));
        assert!(!lh.may_flow(B, A));
        let chain = FlowRelation::from_pairs([(A, B), (B, C)]);
        assert!(!chain.may_flow(A, C));
    }

    #[test]
    fn paralocks_observability() {
        let label = ParalocksLabel::new().with_clause(A, [L1]);
        let none = BTreeSet::new();
        let l1: BTreeSet<_> = [L1].into();
        assert!(paralocks_observable(&label, &Attacker::at(A), &l1));
        assert!(paralocks_observable(
            &label,
            &Attacker::at(A).with_capabilities([L1]),
            &none
        ));
        assert!(!paralocks_observable(&label, &Attacker::at(A), &none));
        assert!(!paralocks_observable(&label, &Attacker::at(B), &l1));
        let empty = ParalocksLabel::new();
        assert!(!paralocks_observable(
            &empty,
            &Attacker::at(A).with_capabilities([L1]),
            &l1
        ));
    }

    #[test]
    fn second_value_automaton() {
        let a = ForgetfulAutomaton::second_value_only();
        assert_eq!(a.state_name(a.run(&[1, 2]).unwrap()), "q2");
        assert_eq!(a.state_name(a.run(&[2, 2]).unwrap()), "q2");
        assert_eq!(a.state_name(a.run(&[2, 1]).unwrap()), "q1");
        assert_eq!(a.run(&[]).unwrap(), a.initial());
        assert!(matches!(a.run(&[0]), Err(Error::OutsideAlphabet(0))));
    }

    #[test]
    fn rejects_partial_transition_function() {
        let err = ForgetfulAutomaton::new(vec!["a".into()], "a", [0, 1], [("a".to_string(), 0, "a".to_string())]);
        assert!(matches!(err, Err(Error::Automaton(_))));
    }

    #[test]
    fn parses_text_format() {
        let text = "states q0 qf q1 q2\ninitial q0\n# first value forgotten\n\
                    q0 1 qf\nq0 2 qf\nqf 1 q1\nqf 2 q2\nq1 1 q1\nq1 2 q1\nq2 1 q2\nq2 2 q2\n";
        assert_eq!(
            ForgetfulAutomaton::parse(text).unwrap(),
            ForgetfulAutomaton::second_value_only()
        );
    }

    #[test]
    fn forget_first_matches_second_value_on_two_observations() {
        let ff = ForgetfulAutomaton::forget_first(&[1, 2], 3);
        let sv = ForgetfulAutomaton::second_value_only();
        let seqs = [[1, 1], [1, 2], [2, 1], [2, 2]];
        for a in seqs {
            for b in seqs {
                let same_ff = ff.run(&a).unwrap() == ff.run(&b).unwrap();
                let same_sv = sv.run(&a).unwrap() == sv.run(&b).unwrap();
                assert_eq!(same_ff, same_sv, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn full_memory_distinguishes_histories() {
        let fm = ForgetfulAutomaton::full_memory(&[0, 1], 3);
        assert_ne!(fm.run(&[0, 1]).unwrap(), fm.run(&[1, 0]).unwrap());
        assert_ne!(fm.run(&[0]).unwrap(), fm.run(&[0, 0]).unwrap());
        assert_eq!(fm.state_count(), 1 + 2 + 4 + 8);
    }
}
