use std::collections::BTreeSet;

use super::oracle::two_run_ni;
use super::{Limits, Search, Verdict};
use crate::error::{Error, Result};
use crate::lang::{Command, Interpreter, LabelId, Program};
use crate::policy::{Attacker, FlowRelation};

/// Largest number of non-reflexive label pairs whose powerset is enumerated.
const ALL_RELATIONS_PAIR_CAP: usize = 16;

/// Relations the program can reach by its policy commands alone, starting
/// from the empty relation and following both branches of every conditional.
pub fn reachable_relations(program: &Program) -> BTreeSet<FlowRelation> {
    let mut seen = BTreeSet::new();
    let start: BTreeSet<FlowRelation> = [FlowRelation::new()].into();
    seen.extend(start.iter().cloned());
    abstract_run(&program.body, start, &mut seen);
    seen
}

fn abstract_run(
    cmd: &Command,
    input: BTreeSet<FlowRelation>,
    seen: &mut BTreeSet<FlowRelation>,
) -> BTreeSet<FlowRelation> {
    let out: BTreeSet<FlowRelation> = match cmd {
        Command::Allow(a, b) | Command::Revoke(a, b) => input
            .into_iter()
            .map(|mut r| {
                if matches!(cmd, Command::Allow(..)) {
                    r.allow(*a, *b);
                } else {
                    r.revoke(*a, *b);
                }
                r
            })
            .collect(),
        Command::Seq(first, second) => {
            let mid = abstract_run(first, input, seen);
            abstract_run(second, mid, seen)
        }
        Command::If(_, a, b) => {
            let mut out = abstract_run(a, input.clone(), seen);
            out.extend(abstract_run(b, input, seen));
            out
        }
        Command::While(_, body) => {
            let mut acc = input;
            loop {
                let next = abstract_run(body, acc.clone(), seen);
                let before = acc.len();
                acc.extend(next);
                if acc.len() == before {
                    break acc;
                }
            }
        }
        _ => input,
    };
    seen.extend(out.iter().cloned());
    out
}

/// Every relation over the declared labels.
pub fn all_relations(program: &Program) -> Result<Vec<FlowRelation>> {
    let pairs: Vec<(LabelId, LabelId)> = program
        .label_ids()
        .flat_map(|a| program.label_ids().map(move |b| (a, b)))
        .filter(|(a, b)| a != b)
        .collect();
    if pairs.len() > ALL_RELATIONS_PAIR_CAP {
        return Err(Error::Explosion {
            size: 1u128 << pairs.len().min(127),
            cap: 1u64 << ALL_RELATIONS_PAIR_CAP,
        });
    }
    Ok((0..1usize << pairs.len())
        .map(|mask| {
            FlowRelation::from_pairs(
                pairs
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, p)| *p),
            )
        })
        .collect())
}

/// Noninterference for each fixed relation in `relations`: policy commands
/// are ignored and `flows` guards are answered by the fixed relation.
pub fn check_fixed_policy_ni(
    program: &Program,
    attacker: &Attacker,
    relations: &[FlowRelation],
    limits: Limits,
) -> Result<Verdict> {
    let mut search = Search::new("hicks");
    for f in relations {
        let interp = Interpreter::with_fixed_relation(program, f.clone());
        if let Some(v) = two_run_ni(&interp, attacker, f, limits, &mut search)? {
            return Ok(v);
        }
    }
    Ok(search.finish())
}
