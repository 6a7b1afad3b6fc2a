use std::collections::BTreeSet;

use super::{Limits, Search, StoreView, Verdict, Witness};
use crate::error::{Error, Result};
use crate::knowledge::*;
use crate::lang::{Interpreter, LockId, Program};
use crate::policy::{Attacker, PolicyComponent};

/// Every capability set over the declared locks, smallest first.
fn capability_sets(program: &Program, cap: usize) -> Result<Vec<BTreeSet<LockId>>> {
    let n = program.locks.len();
    if n > cap {
        return Err(Error::LockPowersetTooLarge {
            locks: n,
            size: 1u128 << n.min(127),
            cap,
        });
    }
    let mut sets: Vec<BTreeSet<LockId>> = (0..1usize << n)
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).map(LockId).collect())
        .collect();
    sets.sort_by_key(|s| (s.len(), s.iter().copied().collect::<Vec<_>>()));
    Ok(sets)
}

/// For every actor and capability set: an event whose open locks are all
/// held as capabilities must not change that attacker's knowledge.
pub fn check_paralocks(program: &Program, limits: Limits) -> Result<Verdict> {
    let mut attackers = Vec::new();
    for caps in capability_sets(program, limits.lock_cap)? {
        for actor in program.label_ids() {
            attackers.push(Attacker::at(actor).with_capabilities(caps.iter().copied()));
        }
    }
    check_paralocks_for(program, &attackers, limits)
}

/// [`check_paralocks`] for the given actors and capability sets only.
pub fn check_paralocks_for(program: &Program, attackers: &[Attacker], limits: Limits) -> Result<Verdict> {
    let interp = Interpreter::new(program);
    let mut search = Search::new("paralocks");
    let closed = PolicyComponent::default();
    for attacker in attackers {
        {
            let viewer = LockViewer::from(attacker);
            let (actor, caps) = (attacker.level, &attacker.capabilities);
            let engine = KnowledgeEngine::new(
                &interp,
                &viewer,
                ObservationModel::AssignEvents,
                limits.budget,
                limits.universe_cap,
            )?;
            search.taint(engine.any_truncated());
            let universe = engine.universe();
            for i in 0..universe.len() {
                let actual = universe.get(i);
                let trace = engine.run(i);
                let equal = universe.filter(|s| viewer.equivalent(program, s, actual, &closed));
                let tl = timeline(program, trace, &viewer, ObservationModel::AssignEvents);
                let items = &tl.observation.items;
                for (event_index, e) in trace.events.iter().enumerate() {
                    if !e.policy.open_locks.is_subset(caps) {
                        continue;
                    }
                    let (before, after) = tl.around_event(trace, event_index);
                    if before == after {
                        continue;
                    }
                    let increase = engine
                        .knowledge(&items[..before])
                        .intersection(&equal)
                        .difference(&engine.knowledge(&items[..after]).intersection(&equal));
                    if increase.is_empty() {
                        continue;
                    }
                    let names: Vec<&str> = caps.iter().map(|l| program.lock_name(*l)).collect();
                    let witness = Witness::KnowledgeIncrease {
                        attacker: format!("{} caps {{{}}}", program.label_name(actor), names.join(", ")),
                        initial: StoreView::new(program, actual),
                        event_index,
                        increase: increase
                            .stores(universe)
                            .iter()
                            .map(|s| StoreView::new(program, s))
                            .collect(),
                    };
                    if let Some(v) = search.violation(witness, increase.tainted) {
                        return Ok(v);
                    }
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
    use crate::lang::parse;

    fn check(src: &str) -> Status {
        check_paralocks(&parse(src).unwrap(), Limits::default()).unwrap().status
    }

    #[test]
    fn replay_with_locks_is_secure() {
        assert_eq!(
            check("labels A, B; locks L; vars a:A, b:B; plabel a {A}; plabel b {B} {A: L}; open L; a := b; close L; a := b"),
            Status::Secure
        );
    }

    #[test]
    fn time_transitive_in_lock_form_is_secure() {
        let src = "labels A, B, C; locks CB, BA; vars a:A, b:B, c:C;\
                   plabel a {A}; plabel b {B} {A: BA}; plabel c {C} {B: CB} {A: CB, BA};\
                   open CB; b := c; close CB; open BA; a := b";
        assert_eq!(check(src), Status::Secure);
    }

    #[test]
    fn leak_with_closed_lock_is_insecure() {
        assert_eq!(
            check("labels A, B; locks L; vars a:A, b:B; plabel a {A}; plabel b {B} {A: L}; a := b"),
            Status::Insecure
        );
    }

    #[test]
    fn lock_powerset_is_capped() {
        let p = parse("labels A; locks L1, L2, L3; vars a:A; skip").unwrap();
        let limits = Limits {
            lock_cap: 2,
            ..Limits::default()
        };
        assert!(matches!(
            check_paralocks(&p, limits),
            Err(Error::LockPowersetTooLarge { locks: 3, .. })
        ));
    }

    #[test]
    fn capability_sets_enumerate_powerset() {
        let p = parse("labels A; locks L1, L2; vars a:A; skip").unwrap();
        let sets = capability_sets(&p, 6).unwrap();
        assert_eq!(sets.len(), 4);
        assert!(sets[0].is_empty());
    }
}
