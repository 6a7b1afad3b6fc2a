use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use super::{Limits, Search, StoreView, Verdict, Witness};
use crate::error::Result;
use crate::knowledge::{LevelViewer, ObsItem, Universe, Viewer};
use crate::lang::{print_command, Command, Interpreter, Program, Store, VarId};
use crate::policy::{Attacker, PolicyComponent};

/// A run from one configuration up to (not including) the next step that
/// makes more variables visible to the attacker.
#[derive(Debug, Clone)]
struct Segment {
    projections: Vec<ObsItem>,
    /// Configuration right after the cutting step.
    cut: Option<(Command, Store)>,
    truncated: bool,
}

fn visible(program: &Program, viewer: &LevelViewer, policy: &PolicyComponent) -> BTreeSet<VarId> {
    program.var_ids().filter(|v| viewer.sees(program, *v, policy)).collect()
}

fn segment(interp: &Interpreter, viewer: &LevelViewer, cmd: &Command, store: &Store, budget: usize) -> Segment {
    let program = interp.program();
    let project = |s: &Store| ObsItem::Projection(viewer.project(program, &s.values, &s.policy));
    let mut projections = vec![project(store)];
    let (mut cmd, mut store) = (cmd.clone(), store.clone());
    for _ in 0..budget {
        let Some(step) = interp.step(&cmd, &store) else {
            return Segment {
                projections,
                cut: None,
                truncated: false,
            };
        };
        let before = visible(program, viewer, &store.policy);
        let after = visible(program, viewer, &step.store.policy);
        if before.is_subset(&after) && before != after {
            return Segment {
                projections,
                cut: Some((step.command, step.store)),
                truncated: false,
            };
        }
        let p = project(&step.store);
        if projections.last() != Some(&p) {
            projections.push(p);
        }
        cmd = step.command;
        store = step.store;
    }
    Segment {
        projections,
        cut: None,
        truncated: cmd != Command::Skip,
    }
}

/// Noninterference between declassifying policy changes: from every
/// reachable restart point, runs from stores the attacker cannot tell apart
/// must look the same, up to stuttering, until the next change that makes
/// more of the store visible.
pub fn check_rx(program: &Program, attacker: &Attacker, limits: Limits) -> Result<Verdict> {
    let interp = Interpreter::new(program);
    let viewer = LevelViewer::from(attacker);
    let universe = Universe::enumerate(program, limits.universe_cap)?;
    let mut search = Search::new("rx");
    let mut cache: HashMap<(Command, Store), Segment> = HashMap::new();
    let mut seg = |cmd: &Command, store: &Store| -> Segment {
        cache
            .entry((cmd.clone(), store.clone()))
            .or_insert_with(|| segment(&interp, &viewer, cmd, store, limits.budget))
            .clone()
    };

    let mut work: VecDeque<(Command, Store)> = universe
        .iter()
        .map(|s| (program.body.clone(), interp.initial_store(s.to_vec())))
        .collect();
    let mut seen: HashSet<(Command, Store)> = work.iter().cloned().collect();
    while let Some((cmd, store)) = work.pop_front() {
        let mine = seg(&cmd, &store);
        search.taint(mine.truncated);
        for other in universe.iter() {
            if !viewer.equivalent(program, other, &store.values, &store.policy) {
                continue;
            }
            let other_store = Store {
                values: other.to_vec(),
                policy: store.policy.clone(),
            };
            let theirs = seg(&cmd, &other_store);
            search.taint(theirs.truncated);
            if mine.projections != theirs.projections {
                let (short, long) = if mine.projections.len() <= theirs.projections.len() {
                    (&mine, &theirs)
                } else {
                    (&theirs, &mine)
                };
                // A truncated segment that is still a prefix of the other may yet agree.
                let tentative = short.truncated && long.projections.starts_with(&short.projections);
                let witness = Witness::DistinguishingPair {
                    attacker: program.label_name(attacker.level).to_string(),
                    left_program: print_command(program, &cmd),
                    right_program: print_command(program, &cmd),
                    policy: store.policy.relation.display(program).to_string(),
                    left: StoreView::new(program, &store.values),
                    right: StoreView::new(program, other),
                };
                if let Some(v) = search.violation(witness, tentative) {
                    return Ok(v);
                }
            }
        }
        if let Some(next) = mine.cut {
            if seen.insert(next.clone()) {
                work.push_back(next);
            }
        }
    }
    Ok(search.finish())
}
