use super::{Limits, Search, StoreView, Verdict, Witness};
use crate::error::{Error, Result};
use crate::knowledge::{observe, FixedViewer, ObservationModel, Universe, Viewer};
use crate::lang::{print_command, Command, Interpreter, Program};
use crate::policy::{Attacker, FlowRelation, PolicyComponent};

/// Two-run noninterference under the interpreter's (fixed) relation `f`:
/// initial stores that agree on what the attacker sees under `f` yield the
/// same visible assignments. Reports into `search`; returns a final verdict
/// as soon as a definitive violation is found.
pub(crate) fn two_run_ni(
    interp: &Interpreter,
    attacker: &Attacker,
    f: &FlowRelation,
    limits: Limits,
    search: &mut Search,
) -> Result<Option<Verdict>> {
    let program = interp.program();
    let universe = Universe::enumerate(program, limits.universe_cap)?;
    let viewer = FixedViewer {
        level: attacker.level,
        relation: f.clone(),
    };
    let runs: Vec<_> = universe
        .iter()
        .map(|s| {
            let t = interp.run(interp.initial_store(s.to_vec()), limits.budget);
            let o = observe(program, &t, &viewer, ObservationModel::AssignEvents);
            (t.truncated, o.items)
        })
        .collect();
    let policy = PolicyComponent {
        relation: f.clone(),
        ..PolicyComponent::default()
    };
    for (i, (ti, oi)) in runs.iter().enumerate() {
        search.taint(*ti);
        for (j, (tj, oj)) in runs.iter().enumerate().skip(i + 1) {
            if oi == oj || !viewer.equivalent(program, universe.get(i), universe.get(j), &policy) {
                continue;
            }
            let tentative = (*ti && oj.starts_with(oi)) || (*tj && oi.starts_with(oj));
            let witness = Witness::DistinguishingPair {
                attacker: program.label_name(attacker.level).to_string(),
                left_program: print_command(program, &program.body),
                right_program: print_command(program, &program.body),
                policy: f.display(program).to_string(),
                left: StoreView::new(program, universe.get(i)),
                right: StoreView::new(program, universe.get(j)),
            };
            if let Some(v) = search.violation(witness, tentative) {
                return Ok(Some(v));
            }
        }
    }
    Ok(None)
}

fn first_policy_change(cmd: &Command) -> Option<&Command> {
    match cmd {
        Command::Seq(a, b) | Command::If(_, a, b) => first_policy_change(a).or_else(|| first_policy_change(b)),
        Command::While(_, body) => first_policy_change(body),
        c if c.is_policy_change() => Some(c),
        _ => None,
    }
}

/// Classical noninterference for a program without policy changes.
pub fn check_two_run_ni_oracle(
    program: &Program,
    attacker: &Attacker,
    relation: &FlowRelation,
    limits: Limits,
) -> Result<Verdict> {
    if let Some(c) = first_policy_change(&program.body) {
        return Err(Error::PolicyChange(print_command(program, c)));
    }
    let interp = Interpreter::with_fixed_relation(program, relation.clone());
    let mut search = Search::new("oracle");
    if let Some(v) = two_run_ni(&interp, attacker, relation, limits, &mut search)? {
        return Ok(v);
    }
    Ok(search.finish())
}
