use std::collections::HashMap;
use std::fmt;

use serde::Serialize;

use super::{Limits, Search, StoreView, Verdict, Witness};
use crate::error::Result;
use crate::knowledge::*;
use crate::lang::{Interpreter, Program, Trace};
use crate::policy::{Attacker, FlowRelation, Memory};

/// Upper bound on what an observation may teach, given the current position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum ReleasePolicy {
    /// Stores the attacker can distinguish from the actual one under the
    /// current relation.
    EquivalenceNow,
    /// Stores ruled out by the whole run so far, judged under the current relation.
    TimeTransitiveAllowing,
    /// Stores distinguishable under any relation that held so far.
    DirectReleaseAllowing,
}

impl ReleasePolicy {
    pub const ALL: [ReleasePolicy; 3] = [
        ReleasePolicy::EquivalenceNow,
        ReleasePolicy::TimeTransitiveAllowing,
        ReleasePolicy::DirectReleaseAllowing,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            ReleasePolicy::EquivalenceNow => "equiv",
            ReleasePolicy::TimeTransitiveAllowing => "timetrans",
            ReleasePolicy::DirectReleaseAllowing => "direct",
        }
    }

    pub fn from_short_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.short_name() == s)
    }
}

impl fmt::Display for ReleasePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

/// Computes release sets, caching the fixed-relation engines that
/// time-transitive release needs.
struct Releaser<'p> {
    program: &'p Program,
    interp: Interpreter<'p>,
    attacker: &'p Attacker,
    model: ObservationModel,
    limits: Limits,
    fixed: HashMap<FlowRelation, KnowledgeEngine<'p>>,
}

impl<'p> Releaser<'p> {
    fn new(program: &'p Program, attacker: &'p Attacker, model: ObservationModel, limits: Limits) -> Self {
        Releaser {
            program,
            interp: Interpreter::new(program),
            attacker,
            model,
            limits,
            fixed: HashMap::new(),
        }
    }

    fn release(
        &mut self,
        variant: ReleasePolicy,
        universe: &Universe,
        actual: &[i64],
        trace: &Trace,
        event: usize,
    ) -> Result<KnowledgeSet> {
        let viewer = LevelViewer::from(self.attacker);
        let e = &trace.events[event];
        match variant {
            ReleasePolicy::EquivalenceNow => Ok(inequivalent(self.program, universe, &viewer, actual, &e.policy)),
            ReleasePolicy::DirectReleaseAllowing => {
                let step = trace.step_of_event(event);
                let mut r = universe.empty();
                for store in trace.stores().take(step + 1) {
                    r = r.union(&inequivalent(self.program, universe, &viewer, actual, &store.policy));
                }
                Ok(r)
            }
            ReleasePolicy::TimeTransitiveAllowing => {
                let f = e.policy.relation.clone();
                let fixed = FixedViewer {
                    level: self.attacker.level,
                    relation: f.clone(),
                };
                if !self.fixed.contains_key(&f) {
                    let engine = KnowledgeEngine::new(
                        &self.interp,
                        &fixed,
                        self.model,
                        self.limits.budget,
                        self.limits.universe_cap,
                    )?;
                    self.fixed.insert(f.clone(), engine);
                }
                let engine = &self.fixed[&f];
                let tl = timeline(self.program, trace, &fixed, self.model);
                let (_, after) = tl.around_event(trace, event);
                let mut r = engine.exclusion_knowledge(&tl.observation.items[..after]);
                r.tainted |= engine.any_truncated();
                Ok(r)
            }
        }
    }
}

/// The release set for event `event` of the run `trace` from `actual`.
#[allow(clippy::too_many_arguments)]
pub fn release_set(
    program: &Program,
    attacker: &Attacker,
    model: ObservationModel,
    variant: ReleasePolicy,
    actual: &[i64],
    trace: &Trace,
    event: usize,
    limits: Limits,
) -> Result<KnowledgeSet> {
    let universe = Universe::enumerate(program, limits.universe_cap)?;
    Releaser::new(program, attacker, model, limits).release(variant, &universe, actual, trace, event)
}

/// Every knowledge increase, on every run, must stay within the release set.
pub fn check_epistemic(
    program: &Program,
    attacker: &Attacker,
    model: ObservationModel,
    variant: ReleasePolicy,
    limits: Limits,
) -> Result<Verdict> {
    check_epistemic_with(program, attacker, model, variant, limits, &format!("balliu-{variant}"))
}

/// As [`check_epistemic`], naming the verdict `condition`. An attacker with an
/// automaton memory measures knowledge through that automaton.
pub fn check_epistemic_with(
    program: &Program,
    attacker: &Attacker,
    model: ObservationModel,
    variant: ReleasePolicy,
    limits: Limits,
    condition: &str,
) -> Result<Verdict> {
    let interp = Interpreter::new(program);
    let viewer = LevelViewer::from(attacker);
    let engine = KnowledgeEngine::new(&interp, &viewer, model, limits.budget, limits.universe_cap)?;
    let mut releaser = Releaser::new(program, attacker, model, limits);
    let mut search = Search::new(condition);
    search.taint(engine.any_truncated());
    let universe = engine.universe();
    for i in 0..universe.len() {
        let actual = universe.get(i);
        let trace = engine.run(i);
        let tl = timeline(program, trace, &viewer, model);
        let items = &tl.observation.items;
        for event in 0..trace.events.len() {
            let (before, after) = tl.around_event(trace, event);
            if before == after {
                continue;
            }
            let increase = match &attacker.memory {
                Memory::PerfectRecall => engine.knowledge_increase(&items[..before], &items[..after]),
                Memory::Automaton(a) => engine
                    .forgetful_exclusion_knowledge(a, &items[..after])?
                    .difference(&engine.forgetful_exclusion_knowledge(a, &items[..before])?),
            };
            if increase.is_empty() {
                continue;
            }
            let release = releaser.release(variant, universe, actual, trace, event)?;
            let bad = increase.difference(&release);
            if !bad.is_empty() {
                let witness = Witness::KnowledgeIncrease {
                    attacker: program.label_name(attacker.level).to_string(),
                    initial: StoreView::new(program, actual),
                    event_index: event,
                    increase: bad
                        .stores(universe)
                        .iter()
                        .map(|s| StoreView::new(program, s))
                        .collect(),
                };
                if let Some(v) = search.violation(witness, bad.tainted) {
                    return Ok(v);
                }
            }
        }
    }
    Ok(search.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Status;
    use crate::lang::{parse, run, LabelId, Store};

    const T: &str = "labels A, B, C; vars a:A, b:B, c:C; allow C -> B; b := c; revoke C -> B; allow B -> A; a := b";
    const R: &str = "labels A, B; vars a:A, b:B; allow B -> A; a := b; a := 0; revoke B -> A; a := b";
    const D: &str = "labels A, B; vars a:A, b:B; allow B -> A; skip; revoke B -> A; a := b";

    fn check(src: &str, variant: ReleasePolicy) -> Verdict {
        let p = parse(src).unwrap();
        check_epistemic(
            &p,
            &Attacker::at(LabelId(0)),
            ObservationModel::AssignEvents,
            variant,
            Limits::default(),
        )
        .unwrap()
    }

    #[test]
    fn equivalence_now_rejects_time_transitive() {
        assert_eq!(check(T, ReleasePolicy::EquivalenceNow).status, Status::Insecure);
    }

    #[test]
    fn equivalence_now_accepts_replay() {
        assert_eq!(check(R, ReleasePolicy::EquivalenceNow).status, Status::Secure);
    }

    #[test]
    fn flat_leak_is_insecure_with_witness() {
        let v = check("labels A, B; vars a:A, b:B; a := b", ReleasePolicy::EquivalenceNow);
        assert_eq!(v.status, Status::Insecure);
        match v.witness.unwrap() {
            Witness::KnowledgeIncrease { initial, increase, .. } => {
                let init = initial.values();
                assert!(increase.iter().all(|s| s.values()[1] != init[1]));
            }
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn equivalence_now_release_is_own_level() {
        let p = parse(D).unwrap();
        let t = run(&p, Store::new(vec![0, 1]), 100);
        let r = release_set(
            &p,
            &Attacker::at(LabelId(0)),
            ObservationModel::AssignEvents,
            ReleasePolicy::EquivalenceNow,
            &[0, 1],
            &t,
            0,
            Limits::default(),
        )
        .unwrap();
        let u = Universe::enumerate(&p, 256).unwrap();
        assert_eq!(r.stores(&u), vec![vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn time_transitive_release_covers_intermediate() {
        assert_eq!(check(T, ReleasePolicy::TimeTransitiveAllowing).status, Status::Secure);
    }

    #[test]
    fn direct_release_covers_earlier_permission() {
        let p = parse(D).unwrap();
        let t = run(&p, Store::new(vec![0, 1]), 100);
        let r = release_set(
            &p,
            &Attacker::at(LabelId(0)),
            ObservationModel::AssignEvents,
            ReleasePolicy::DirectReleaseAllowing,
            &[0, 1],
            &t,
            0,
            Limits::default(),
        )
        .unwrap();
        let u = Universe::enumerate(&p, 256).unwrap();
        assert!(r.contains(u.index_of(&[0, 0]).unwrap()));
        assert_eq!(check(D, ReleasePolicy::DirectReleaseAllowing).status, Status::Secure);
        assert_eq!(check(D, ReleasePolicy::EquivalenceNow).status, Status::Insecure);
    }

    #[test]
    fn divergence_is_unknown() {
        let v = check(
            "labels A, B; vars a:A, b:B; while 0 = 0 skip",
            ReleasePolicy::EquivalenceNow,
        );
        assert_eq!(v.status, Status::Unknown);
        assert!(v.budget_tainted);
    }
}
