//! Observation models and brute-force attacker knowledge over the finite
//! universe of initial stores.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lang::{Interpreter, Program, Store, Trace, VarId};
use crate::policy::{Attacker, AutomatonState, FlowRelation, ForgetfulAutomaton, PolicyComponent};

/// Default cap on the number of enumerated initial stores.
pub const DEFAULT_UNIVERSE_CAP: u64 = 256;

/// Decides which variables an observer sees under a given policy component.
pub trait Viewer {
    fn sees(&self, program: &Program, var: VarId, policy: &PolicyComponent) -> bool;

    /// The observer's projection of `values`.
    fn project(&self, program: &Program, values: &[i64], policy: &PolicyComponent) -> Vec<Option<i64>> {
        program
            .var_ids()
            .map(|v| self.sees(program, v, policy).then(|| values[v.0]))
            .collect()
    }

    /// Do two value vectors agree on everything this observer sees?
    fn equivalent(&self, program: &Program, a: &[i64], b: &[i64], policy: &PolicyComponent) -> bool {
        program
            .var_ids()
            .all(|v| !self.sees(program, v, policy) || a[v.0] == b[v.0])
    }
}

/// Sees `x` iff the relation lets `label(x)` flow to `level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LevelViewer {
    pub level: crate::lang::LabelId,
}

impl Viewer for LevelViewer {
    fn sees(&self, program: &Program, var: VarId, policy: &PolicyComponent) -> bool {
        policy.relation.may_flow(program.label_of(var), self.level)
    }
}

/// Like [`LevelViewer`] but judging every step against one fixed relation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedViewer {
    pub level: crate::lang::LabelId,
    pub relation: FlowRelation,
}

impl Viewer for FixedViewer {
    fn sees(&self, program: &Program, var: VarId, _: &PolicyComponent) -> bool {
        self.relation.may_flow(program.label_of(var), self.level)
    }
}

/// A Paralocks actor holding a capability set; reads the program's plabels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LockViewer {
    pub actor: crate::lang::LabelId,
    pub capabilities: BTreeSet<crate::lang::LockId>,
}

impl Viewer for LockViewer {
    fn sees(&self, program: &Program, var: VarId, policy: &PolicyComponent) -> bool {
        program
            .plabel_of(var)
            .observable_by(self.actor, &self.capabilities, &policy.open_locks)
    }
}

impl From<&Attacker> for LevelViewer {
    fn from(a: &Attacker) -> Self {
        LevelViewer { level: a.level }
    }
}

impl From<&Attacker> for LockViewer {
    fn from(a: &Attacker) -> Self {
        LockViewer {
            actor: a.level,
            capabilities: a.capabilities.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ObservationModel {
    /// Visible assignments `(var, value)`.
    AssignEvents,
    /// Visible part of the store after every step, stutter-collapsed.
    StoreProjection,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub enum ObsItem {
    Assign(VarId, i64),
    Projection(Vec<Option<i64>>),
}

impl ObsItem {
    /// The value an automaton reads from this item.
    pub fn value(&self) -> Option<i64> {
        match self {
            ObsItem::Assign(_, v) => Some(*v),
            ObsItem::Projection(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Observation {
    pub model: ObservationModel,
    pub items: Vec<ObsItem>,
}

impl Observation {
    pub fn prefix(&self, len: usize) -> Observation {
        Observation {
            model: self.model,
            items: self.items[..len].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Observation of a trace plus, per store index `k` (initial store is 0),
/// the length of the observation made on stores `0..=k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Timeline {
    pub observation: Observation,
    pub lengths: Vec<usize>,
}

impl Timeline {
    /// Observation lengths just before and just after event `i` of `trace`.
    pub fn around_event(&self, trace: &Trace, i: usize) -> (usize, usize) {
        let s = trace.step_of_event(i);
        (self.lengths[s], self.lengths[s + 1])
    }
}

pub fn timeline(program: &Program, trace: &Trace, viewer: &dyn Viewer, model: ObservationModel) -> Timeline {
    let mut items = Vec::new();
    let mut lengths = Vec::with_capacity(trace.steps.len() + 1);
    match model {
        ObservationModel::AssignEvents => {
            lengths.push(0);
            for step in &trace.steps {
                if let Some(i) = step.event {
                    let e = &trace.events[i];
                    if viewer.sees(program, e.target, &e.policy) {
                        items.push(ObsItem::Assign(e.target, e.value));
                    }
                }
                lengths.push(items.len());
            }
        }
        ObservationModel::StoreProjection => {
            for store in trace.stores() {
                let p = ObsItem::Projection(viewer.project(program, &store.values, &store.policy));
                if items.last() != Some(&p) {
                    items.push(p);
                }
                lengths.push(items.len());
            }
        }
    }
    Timeline {
        observation: Observation { model, items },
        lengths,
    }
}

pub fn observe(program: &Program, trace: &Trace, viewer: &dyn Viewer, model: ObservationModel) -> Observation {
    timeline(program, trace, viewer, model).observation
}

/// Every assignment of domain values to the program's variables, in
/// lexicographic order of the declared variable list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Universe {
    stores: Vec<Vec<i64>>,
}

impl Universe {
    pub fn enumerate(program: &Program, cap: u64) -> Result<Universe> {
        let n = program.vars.len() as u32;
        let size = (program.domain.size() as u128).checked_pow(n).unwrap_or(u128::MAX);
        if size > cap as u128 {
            return Err(Error::UniverseTooLarge { size, cap });
        }
        let mut stores = vec![vec![]];
        for _ in 0..n {
            stores = stores
                .into_iter()
                .flat_map(|s| {
                    program.domain.values().map(move |v| {
                        let mut t = s.clone();
                        t.push(v);
                        t
                    })
                })
                .collect();
        }
        Ok(Universe { stores })
    }

    pub fn len(&self) -> usize {
        self.stores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stores.is_empty()
    }

    pub fn get(&self, i: usize) -> &[i64] {
        &self.stores[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        self.stores.iter().map(|s| s.as_slice())
    }

    pub fn index_of(&self, values: &[i64]) -> Option<usize> {
        self.stores.iter().position(|s| s == values)
    }

    pub fn full(&self) -> KnowledgeSet {
        KnowledgeSet::from_indices(self.len(), 0..self.len())
    }

    pub fn empty(&self) -> KnowledgeSet {
        KnowledgeSet::from_indices(self.len(), [])
    }

    /// Stores satisfying `pred`.
    pub fn filter(&self, pred: impl Fn(&[i64]) -> bool) -> KnowledgeSet {
        KnowledgeSet::from_indices(self.len(), (0..self.len()).filter(|&i| pred(&self.stores[i])))
    }
}

/// A set of initial stores, as indices into a [`Universe`].
///
/// `tainted` marks sets that may over-approximate knowledge because a
/// contributing run was cut off by the step budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeSet {
    members: BTreeSet<usize>,
    universe: usize,
    pub tainted: bool,
}

impl KnowledgeSet {
    pub fn from_indices(universe: usize, members: impl IntoIterator<Item = usize>) -> Self {
        KnowledgeSet {
            members: members.into_iter().collect(),
            universe,
            tainted: false,
        }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.contains(&i)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.members.iter().copied()
    }

    pub fn complement(&self) -> KnowledgeSet {
        KnowledgeSet {
            members: (0..self.universe).filter(|i| !self.members.contains(i)).collect(),
            universe: self.universe,
            tainted: self.tainted,
        }
    }

    pub fn union(&self, other: &KnowledgeSet) -> KnowledgeSet {
        KnowledgeSet {
            members: self.members.union(&other.members).copied().collect(),
            universe: self.universe,
            tainted: self.tainted || other.tainted,
        }
    }

    pub fn intersection(&self, other: &KnowledgeSet) -> KnowledgeSet {
        KnowledgeSet {
            members: self.members.intersection(&other.members).copied().collect(),
            universe: self.universe,
            tainted: self.tainted || other.tainted,
        }
    }

    pub fn difference(&self, other: &KnowledgeSet) -> KnowledgeSet {
        KnowledgeSet {
            members: self.members.difference(&other.members).copied().collect(),
            universe: self.universe,
            tainted: self.tainted || other.tainted,
        }
    }

    pub fn is_subset(&self, other: &KnowledgeSet) -> bool {
        self.members.is_subset(&other.members)
    }

    /// Member stores as value vectors, in canonical order.
    pub fn stores(&self, universe: &Universe) -> Vec<Vec<i64>> {
        self.indices().map(|i| universe.get(i).to_vec()).collect()
    }
}

/// One run per initial store, with the observation it yields to one viewer.
///
/// All knowledge queries for a given (program, viewer, model) share this table.
pub struct KnowledgeEngine<'p> {
    program: &'p Program,
    universe: Universe,
    runs: Vec<Trace>,
    observations: Vec<Observation>,
}

impl<'p> KnowledgeEngine<'p> {
    pub fn new(
        interp: &Interpreter<'p>,
        viewer: &dyn Viewer,
        model: ObservationModel,
        budget: usize,
        cap: u64,
    ) -> Result<Self> {
        let program = interp.program();
        let universe = Universe::enumerate(program, cap)?;
        let runs: Vec<Trace> = universe
            .iter()
            .map(|s| interp.run(interp.initial_store(s.to_vec()), budget))
            .collect();
        let observations = runs.iter().map(|t| observe(program, t, viewer, model)).collect();
        Ok(KnowledgeEngine {
            program,
            universe,
            runs,
            observations,
        })
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn universe(&self) -> &Universe {
        &self.universe
    }

    pub fn run(&self, i: usize) -> &Trace {
        &self.runs[i]
    }

    pub fn observation(&self, i: usize) -> &Observation {
        &self.observations[i]
    }

    pub fn any_truncated(&self) -> bool {
        self.runs.iter().any(|t| t.truncated)
    }

    /// Initial stores whose run can produce `obs`.
    pub fn knowledge(&self, obs: &[ObsItem]) -> KnowledgeSet {
        let mut k = self.universe.empty();
        for (i, o) in self.observations.iter().enumerate() {
            let full = &o.items;
            if full.len() >= obs.len() {
                if full[..obs.len()] == *obs {
                    k.members.insert(i);
                }
            } else if self.runs[i].truncated && obs[..full.len()] == *full {
                // The run might still produce the rest.
                k.members.insert(i);
                k.tainted = true;
            }
        }
        k
    }

    pub fn exclusion_knowledge(&self, obs: &[ObsItem]) -> KnowledgeSet {
        self.knowledge(obs).complement()
    }

    /// `ek(extended) \ ek(prefix)`.
    pub fn knowledge_increase(&self, prefix: &[ObsItem], extended: &[ObsItem]) -> KnowledgeSet {
        self.exclusion_knowledge(extended)
            .difference(&self.exclusion_knowledge(prefix))
    }

    /// Initial stores that could leave `automaton` in `state`: some prefix of
    /// their observed values drives it there.
    pub fn forgetful_knowledge(&self, automaton: &ForgetfulAutomaton, state: AutomatonState) -> Result<KnowledgeSet> {
        let mut k = self.universe.empty();
        for (i, o) in self.observations.iter().enumerate() {
            let values = observed_values(o);
            let visited = automaton.visited(&values)?;
            if visited.contains(&state) {
                k.members.insert(i);
            } else if self.runs[i].truncated {
                k.members.insert(i);
                k.tainted = true;
            }
        }
        Ok(k)
    }

    /// Complement of [`Self::forgetful_knowledge`] for the state reached on `obs`.
    pub fn forgetful_exclusion_knowledge(
        &self,
        automaton: &ForgetfulAutomaton,
        obs: &[ObsItem],
    ) -> Result<KnowledgeSet> {
        let values: Vec<i64> = obs.iter().filter_map(ObsItem::value).collect();
        let state = automaton.run(&values)?;
        Ok(self.forgetful_knowledge(automaton, state)?.complement())
    }
}

pub fn observed_values(o: &Observation) -> Vec<i64> {
    o.items.iter().filter_map(ObsItem::value).collect()
}

/// Stores the viewer can tell apart from `actual` under `policy`.
pub fn inequivalent(
    program: &Program,
    universe: &Universe,
    viewer: &dyn Viewer,
    actual: &[i64],
    policy: &PolicyComponent,
) -> KnowledgeSet {
    universe.filter(|s| !viewer.equivalent(program, s, actual, policy))
}

/// One-shot knowledge query for a level attacker with perfect recall.
pub fn knowledge(
    program: &Program,
    attacker: &Attacker,
    model: ObservationModel,
    obs: &Observation,
    budget: usize,
) -> Result<KnowledgeSet> {
    let interp = Interpreter::new(program);
    let engine = KnowledgeEngine::new(
        &interp,
        &LevelViewer::from(attacker),
        model,
        budget,
        DEFAULT_UNIVERSE_CAP,
    )?;
    Ok(engine.knowledge(&obs.items))
}

pub fn exclusion_knowledge(
    program: &Program,
    attacker: &Attacker,
    model: ObservationModel,
    obs: &Observation,
    budget: usize,
) -> Result<KnowledgeSet> {
    Ok(knowledge(program, attacker, model, obs, budget)?.complement())
}

pub fn knowledge_increase(
    program: &Program,
    attacker: &Attacker,
    model: ObservationModel,
    prefix: &Observation,
    extended: &Observation,
    budget: usize,
) -> Result<KnowledgeSet> {
    let interp = Interpreter::new(program);
    let engine = KnowledgeEngine::new(
        &interp,
        &LevelViewer::from(attacker),
        model,
        budget,
        DEFAULT_UNIVERSE_CAP,
    )?;
    Ok(engine.knowledge_increase(&prefix.items, &extended.items))
}

/// Exclusion knowledge of an automaton attacker after observing `values`.
pub fn forgetful_exclusion_knowledge(
    program: &Program,
    attacker: &Attacker,
    values: &[i64],
    budget: usize,
) -> Result<KnowledgeSet> {
    let automaton = match &attacker.memory {
        crate::policy::Memory::Automaton(a) => a,
        crate::policy::Memory::PerfectRecall => return Err(Error::MissingAutomaton),
    };
    let interp = Interpreter::new(program);
    let engine = KnowledgeEngine::new(
        &interp,
        &LevelViewer::from(attacker),
        ObservationModel::AssignEvents,
        budget,
        DEFAULT_UNIVERSE_CAP,
    )?;
    let state = automaton.run(values)?;
    Ok(engine.forgetful_knowledge(automaton, state)?.complement())
}

/// Convenience: the initial store for `values` under `program`'s header.
pub fn initial_store(program: &Program, values: &[i64]) -> Store {
    Interpreter::new(program).initial_store(values.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, run, LabelId};

    fn two(body: &str) -> Program {
        parse(&format!("labels A, B; vars a:A, b:B; {body}")).unwrap()
    }

    fn attacker_a() -> Attacker {
        Attacker::at(LabelId(0))
    }

    fn obs(p: &Program, values: &[i64], model: ObservationModel) -> Observation {
        let t = run(p, Store::new(values.to_vec()), 100);
        observe(p, &t, &LevelViewer { level: LabelId(0) }, model)
    }

    #[test]
    fn observe_assign_visible() {
        let p = two("allow B -> A; a := b");
        let o = obs(&p, &[0, 1], ObservationModel::AssignEvents);
        assert_eq!(o.items, vec![ObsItem::Assign(VarId(0), 1)]);
    }

    #[test]
    fn observe_assign_invisible() {
        let p = two("b := 1");
        let o = obs(&p, &[0, 0], ObservationModel::AssignEvents);
        assert!(o.items.is_empty());
    }

    #[test]
    fn projection_reveals_direct_release() {
        let p = two("allow B -> A; skip; revoke B -> A; a := b");
        let o = obs(&p, &[0, 1], ObservationModel::StoreProjection);
        assert!(o.items.contains(&ObsItem::Projection(vec![Some(0), Some(1)])));
        // stutter-collapsed
        assert!(o.items.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn knowledge_of_copy() {
        let p = two("allow B -> A; a := b");
        let o = Observation {
            model: ObservationModel::AssignEvents,
            items: vec![ObsItem::Assign(VarId(0), 1)],
        };
        let k = knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 100).unwrap();
        let u = Universe::enumerate(&p, 256).unwrap();
        assert_eq!(k.stores(&u), vec![vec![0, 1], vec![1, 1]]);
        let ek = exclusion_knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 100).unwrap();
        assert_eq!(ek.stores(&u), vec![vec![0, 0], vec![1, 0]]);
    }

    #[test]
    fn empty_observation_knows_nothing() {
        let p = two("allow B -> A; a := b");
        let o = Observation {
            model: ObservationModel::AssignEvents,
            items: vec![],
        };
        let k = knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 100).unwrap();
        assert_eq!(k.len(), 4);
        let ek = exclusion_knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 100).unwrap();
        assert!(ek.is_empty());
    }

    #[test]
    fn constant_output_reveals_nothing() {
        let p = two("a := 0");
        let o = obs(&p, &[1, 1], ObservationModel::AssignEvents);
        let k = knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 100).unwrap();
        assert_eq!(k.len(), 4);
    }

    #[test]
    fn xor_output_excludes_matching_pairs() {
        let p = parse("labels A, B; vars a:A, b:B, k:B; a := b xor k").unwrap();
        let o = Observation {
            model: ObservationModel::AssignEvents,
            items: vec![ObsItem::Assign(VarId(0), 1)],
        };
        let ek = exclusion_knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 100).unwrap();
        let u = Universe::enumerate(&p, 256).unwrap();
        assert!(ek.stores(&u).iter().all(|s| s[1] == s[2]));
        assert_eq!(ek.len(), 4);
    }

    #[test]
    fn replay_gives_no_increase() {
        let p = two("allow B -> A; a := b; revoke B -> A; a := b");
        let full = obs(&p, &[0, 1], ObservationModel::AssignEvents);
        let inc = knowledge_increase(
            &p,
            &attacker_a(),
            ObservationModel::AssignEvents,
            &full.prefix(1),
            &full,
            100,
        )
        .unwrap();
        assert!(inc.is_empty());
    }

    #[test]
    fn copy_increase_is_other_secret() {
        let p = two("allow B -> A; a := b");
        let full = obs(&p, &[0, 1], ObservationModel::AssignEvents);
        let inc = knowledge_increase(
            &p,
            &attacker_a(),
            ObservationModel::AssignEvents,
            &full.prefix(0),
            &full,
            100,
        )
        .unwrap();
        let u = Universe::enumerate(&p, 256).unwrap();
        assert_eq!(inc.stores(&u), vec![vec![0, 0], vec![1, 0]]);
        let same = knowledge_increase(&p, &attacker_a(), ObservationModel::AssignEvents, &full, &full, 100).unwrap();
        assert!(same.is_empty());
    }

    #[test]
    fn second_value_automaton_learns_late() {
        let p = parse("labels A, B; vars a:A, b:B; domain 1..2; allow A -> B; b := a; revoke A -> B; b := a").unwrap();
        let attacker = Attacker::at(LabelId(1)).with_automaton(ForgetfulAutomaton::second_value_only());
        let u = Universe::enumerate(&p, 256).unwrap();
        let first = forgetful_exclusion_knowledge(&p, &attacker, &[2], 100).unwrap();
        assert!(first.is_empty());
        let second = forgetful_exclusion_knowledge(&p, &attacker, &[2, 2], 100).unwrap();
        assert_eq!(second.stores(&u), vec![vec![1, 1], vec![1, 2]]);
    }

    #[test]
    fn amnesiac_never_excludes() {
        let p = two("allow B -> A; a := b; a := b");
        let attacker = Attacker::at(LabelId(0)).with_automaton(ForgetfulAutomaton::amnesiac(&[0, 1]));
        for values in [&[][..], &[1], &[1, 1]] {
            assert!(forgetful_exclusion_knowledge(&p, &attacker, values, 100)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn truncated_runs_taint_knowledge() {
        let p = two("while b = 1 skip; a := 1");
        let o = obs(&p, &[0, 0], ObservationModel::AssignEvents);
        let k = knowledge(&p, &attacker_a(), ObservationModel::AssignEvents, &o, 20).unwrap();
        assert!(k.tainted);
        assert_eq!(k.len(), 4);
    }

    #[test]
    fn universe_cap_enforced() {
        let p = parse("labels A; vars a:A, b:A, c:A; domain 0..9; skip").unwrap();
        assert!(matches!(
            Universe::enumerate(&p, 256),
            Err(Error::UniverseTooLarge { size: 1000, .. })
        ));
    }
}
