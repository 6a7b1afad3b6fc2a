use std::collections::BTreeSet;

use super::{Limits, Search, StoreView, Verdict, Witness};
use crate::error::{Error, Result};
use crate::knowledge::*;
use crate::lang::{Command, Expr, Interpreter, LabelId, Program, VarId};
use crate::policy::{FlowRelation, PolicyComponent};

/// A release may only teach what differs on these variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Flowspec(pub BTreeSet<VarId>);

/// One flowspec per `declassify` expression: its free variables.
pub fn default_flowspecs(program: &Program) -> Vec<Flowspec> {
    let mut specs = BTreeSet::new();
    collect_declassify(&program.body, &mut specs);
    specs.into_iter().collect()
}

fn collect_declassify(cmd: &Command, out: &mut BTreeSet<Flowspec>) {
    cmd.visit_exprs(&mut |e| {
        fn walk(e: &Expr, out: &mut BTreeSet<Flowspec>) {
            match e {
                Expr::Declassify(inner) => {
                    out.insert(Flowspec(inner.free_vars()));
                }
                Expr::Bin(_, l, r) => {
                    walk(l, out);
                    walk(r, out);
                }
                _ => {}
            }
        }
        walk(e, out)
    });
}

fn two_level(program: &Program) -> Result<(LabelId, LabelId)> {
    let mut names = program.labels.clone();
    names.sort();
    match (program.label_id("Low"), program.label_id("High")) {
        (Some(low), Some(high)) if high != low && program.labels.len() == 2 => Ok((low, high)),
        _ => Err(Error::NotTwoLevel(names)),
    }
}

/// Non-release events must not increase the Low observer's knowledge.
pub fn check_gradual_release(program: &Program, limits: Limits) -> Result<Verdict> {
    check(program, None, limits, "gradual")
}

/// Gradual release where each release must also be covered by some flowspec.
pub fn check_flowspecs(program: &Program, specs: &[Flowspec], limits: Limits) -> Result<Verdict> {
    check(program, Some(specs), limits, "flowspecs")
}

fn check(program: &Program, specs: Option<&[Flowspec]>, limits: Limits, condition: &str) -> Result<Verdict> {
    let (low, _) = two_level(program)?;
    let viewer = FixedViewer {
        level: low,
        relation: FlowRelation::new(),
    };
    let interp = Interpreter::new(program);
    let engine = KnowledgeEngine::new(
        &interp,
        &viewer,
        ObservationModel::AssignEvents,
        limits.budget,
        limits.universe_cap,
    )?;
    let universe = engine.universe();
    let mut search = Search::new(condition);
    search.taint(engine.any_truncated());
    let initial_policy = PolicyComponent::default();
    for i in 0..universe.len() {
        let actual = universe.get(i);
        let trace = engine.run(i);
        // The Low observer also knows the Low part of the initial store.
        let low_equal = universe.filter(|s| viewer.equivalent(program, s, actual, &initial_policy));
        let tl = timeline(program, trace, &viewer, ObservationModel::AssignEvents);
        let items = &tl.observation.items;
        for (event_index, e) in trace.events.iter().enumerate() {
            let (before, after) = tl.around_event(trace, event_index);
            if before == after {
                continue;
            }
            let k_before = engine.knowledge(&items[..before]).intersection(&low_equal);
            let k_after = engine.knowledge(&items[..after]).intersection(&low_equal);
            let increase = k_before.difference(&k_after);
            if increase.is_empty() {
                continue;
            }
            let bad = match (e.release, specs) {
                (false, _) => increase,
                (true, None) => continue,
                (true, Some(specs)) => {
                    if specs.iter().any(|spec| {
                        let allowed = universe.filter(|s| spec.0.iter().any(|v| s[v.0] != actual[v.0]));
                        increase.is_subset(&allowed)
                    }) {
                        continue;
                    }
                    increase
                }
            };
            let witness = Witness::KnowledgeIncrease {
                attacker: program.label_name(low).to_string(),
                initial: StoreView::new(program, actual),
                event_index,
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
    Ok(search.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Status;
    use crate::lang::parse;

    fn gr(body: &str) -> Status {
        let p = parse(&format!("labels Low, High; vars l:Low, h:High; {body}")).unwrap();
        check_gradual_release(&p, Limits::default()).unwrap().status
    }

    #[test]
    fn replay_after_release_is_secure() {
        assert_eq!(gr("l := declassify(h); l := h"), Status::Secure);
    }

    #[test]
    fn leak_without_release_is_insecure() {
        assert_eq!(gr("l := h"), Status::Insecure);
    }

    #[test]
    fn single_release_is_secure() {
        assert_eq!(gr("l := declassify(h)"), Status::Secure);
    }

    #[test]
    fn low_inputs_are_already_known() {
        assert_eq!(gr("l := l"), Status::Secure);
    }

    #[test]
    fn requires_two_levels() {
        let p = parse("labels A, B; vars a:A; skip").unwrap();
        assert!(matches!(
            check_gradual_release(&p, Limits::default()),
            Err(Error::NotTwoLevel(_))
        ));
    }

    #[test]
    fn flowspec_restricts_release() {
        let p = parse("labels Low, High; vars l:Low, h:High, k:High; l := declassify(h xor k)").unwrap();
        let narrow = [Flowspec([VarId(1)].into())];
        assert_eq!(
            check_flowspecs(&p, &narrow, Limits::default()).unwrap().status,
            Status::Insecure
        );
        assert_eq!(
            check_flowspecs(&p, &default_flowspecs(&p), Limits::default())
                .unwrap()
                .status,
            Status::Secure
        );
        let p2 = parse("labels Low, High; vars l:Low, h:High, k:High; l := declassify(h); l := k").unwrap();
        let specs = default_flowspecs(&p2);
        assert_eq!(specs, vec![Flowspec([VarId(1)].into())]);
        assert_eq!(
            check_flowspecs(&p2, &specs, Limits::default()).unwrap().status,
            Status::Insecure
        );
    }

    #[test]
    fn flowspec_rejects_uncovered_release() {
        let p = parse("labels Low, High; vars l:Low, h:High, k:High; l := declassify(k)").unwrap();
        let only_h = [Flowspec([VarId(1)].into())];
        assert_eq!(
            check_flowspecs(&p, &only_h, Limits::default()).unwrap().status,
            Status::Insecure
        );
        assert_eq!(
            check_flowspecs(&p, &default_flowspecs(&p), Limits::default())
                .unwrap()
                .status,
            Status::Secure
        );
    }
}
