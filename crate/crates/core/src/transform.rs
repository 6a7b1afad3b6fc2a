//! Rewrites of a policy-changing program into the idiom other conditions
//! expect: locks, `flows` guards, `declassify` marks, or copying release.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::lang::{print_command, Command, Expr, LabelId, LockId, Program, VarDecl, VarId};
use crate::policy::{FlowRelation, ParalocksLabel};

/// Non-reflexive flows an assignment needs: from each read variable's label
/// to the target's label.
pub fn needed_flows(program: &Program, target: VarId, e: &Expr) -> BTreeSet<(LabelId, LabelId)> {
    let to = program.label_of(target);
    e.free_vars()
        .into_iter()
        .map(|v| (program.label_of(v), to))
        .filter(|(a, b)| a != b)
        .collect()
}

/// An assignment is enabled when it needs some flow and the current
/// relation permits all of them.
fn enabled(program: &Program, rel: &FlowRelation, target: VarId, e: &Expr) -> Option<BTreeSet<(LabelId, LabelId)>> {
    let needed = needed_flows(program, target, e);
    (!needed.is_empty() && needed.iter().all(|(a, b)| rel.may_flow(*a, *b))).then_some(needed)
}

/// Right-nests every sequence, as the parser does.
fn normalize(cmd: Command) -> Command {
    fn parts(cmd: Command, out: &mut Vec<Command>) {
        match cmd {
            Command::Seq(a, b) => {
                parts(*a, out);
                parts(*b, out);
            }
            c => out.push(normalize(c)),
        }
    }
    match cmd {
        Command::Seq(..) => {
            let mut out = Vec::new();
            parts(cmd, &mut out);
            Command::seq_all(out)
        }
        Command::If(c, a, b) => Command::if_then_else(c, normalize(*a), normalize(*b)),
        Command::While(c, body) => Command::while_loop(c, normalize(*body)),
        c => c,
    }
}

/// Walks `cmd` tracking the relation statically. `policy` rewrites policy
/// commands, `assign` rewrites assignments given the relation in force.
fn rewrite(
    program: &Program,
    cmd: &Command,
    rel: &mut FlowRelation,
    policy: &mut dyn FnMut(&Command) -> Command,
    assign: &mut dyn FnMut(&FlowRelation, VarId, &Expr) -> Command,
) -> Result<Command> {
    Ok(match cmd {
        Command::Skip => Command::Skip,
        Command::Assign(x, e) => assign(rel, *x, e),
        Command::Seq(a, b) => {
            let a = rewrite(program, a, rel, policy, assign)?;
            let b = rewrite(program, b, rel, policy, assign)?;
            Command::seq(a, b)
        }
        Command::If(c, a, b) => {
            if cmd.contains_policy_change() {
                return Err(Error::DynamicPolicy(print_command(program, cmd)));
            }
            let a = rewrite(program, a, &mut rel.clone(), policy, assign)?;
            let b = rewrite(program, b, &mut rel.clone(), policy, assign)?;
            Command::if_then_else(c.clone(), a, b)
        }
        Command::While(c, body) => {
            if cmd.contains_policy_change() {
                return Err(Error::DynamicPolicy(print_command(program, cmd)));
            }
            Command::while_loop(c.clone(), rewrite(program, body, &mut rel.clone(), policy, assign)?)
        }
        Command::Allow(a, b) => {
            rel.allow(*a, *b);
            policy(cmd)
        }
        Command::Revoke(a, b) => {
            rel.revoke(*a, *b);
            policy(cmd)
        }
        Command::Open(_) | Command::Close(_) => policy(cmd),
    })
}

fn rewrite_body(
    program: &Program,
    cmd: &Command,
    rel: &mut FlowRelation,
    policy: &mut dyn FnMut(&Command) -> Command,
    assign: &mut dyn FnMut(&FlowRelation, VarId, &Expr) -> Command,
) -> Result<Command> {
    rewrite(program, cmd, rel, policy, assign).map(normalize)
}

/// Every pair the program ever allows, in order of first appearance.
pub fn allowed_pairs(cmd: &Command) -> Vec<(LabelId, LabelId)> {
    fn go(cmd: &Command, out: &mut Vec<(LabelId, LabelId)>) {
        match cmd {
            Command::Allow(a, b) if !out.contains(&(*a, *b)) => out.push((*a, *b)),
            Command::Seq(a, b) | Command::If(_, a, b) => {
                go(a, out);
                go(b, out);
            }
            Command::While(_, body) => go(body, out),
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(cmd, &mut out);
    out
}

/// Paralocks encoding: a lock `X_Y` per allowed pair, opened and closed
/// alongside the policy change. A variable at level `X` may be read by `Y`
/// once the locks along some path `X -> ... -> Y` of allowed pairs are open.
pub fn lock_form(program: &Program) -> Result<Program> {
    if !program.locks.is_empty() || program.plabels.is_some() {
        return Err(Error::Transform("lock form expects a program without locks".into()));
    }
    let pairs = allowed_pairs(&program.body);
    let mut out = program.clone();
    out.locks = pairs
        .iter()
        .map(|(a, b)| format!("{}_{}", program.label_name(*a), program.label_name(*b)))
        .collect();
    let lock_of = |a: LabelId, b: LabelId| LockId(pairs.iter().position(|p| *p == (a, b)).expect("allowed pair"));
    let mut rel = FlowRelation::new();
    out.body = rewrite_body(
        program,
        &program.body,
        &mut rel,
        &mut |c| match c {
            Command::Allow(a, b) => Command::seq(c.clone(), Command::Open(lock_of(*a, *b))),
            Command::Revoke(a, b) => Command::seq(c.clone(), Command::Close(lock_of(*a, *b))),
            _ => c.clone(),
        },
        &mut |_, x, e| Command::Assign(x, e.clone()),
    )?;
    out.plabels = Some(
        program
            .var_ids()
            .map(|v| {
                let from = program.label_of(v);
                let mut label = ParalocksLabel::new().with_clause(from, []);
                let mut stack = vec![(from, vec![from], BTreeSet::new())];
                while let Some((at, path, locks)) = stack.pop() {
                    for &(a, b) in &pairs {
                        if a == at && !path.contains(&b) {
                            let mut locks = locks.clone();
                            locks.insert(lock_of(a, b));
                            label = label.with_clause(b, locks.iter().copied());
                            let mut path = path.clone();
                            path.push(b);
                            stack.push((b, path, locks));
                        }
                    }
                }
                label
            })
            .collect(),
    );
    Ok(out)
}

/// Fixed-policy encoding: each enabled assignment is wrapped in `flows`
/// guards for the flows it needs.
pub fn guard_form(program: &Program) -> Result<Program> {
    let mut out = program.clone();
    let mut rel = FlowRelation::new();
    out.body = rewrite_body(
        program,
        &program.body,
        &mut rel,
        &mut |c| c.clone(),
        &mut |rel, x, e| {
            let mut cmd = Command::Assign(x, e.clone());
            if let Some(needed) = enabled(program, rel, x, e) {
                for (a, b) in needed.into_iter().rev() {
                    cmd = Command::if_then_else(Expr::Flows(a, b), cmd, Command::Skip);
                }
            }
            cmd
        },
    )?;
    Ok(out)
}

/// Two-level encoding for an observer at `observer`: its level becomes
/// `Low`, every other level `High`; enabled assignments become release
/// events and policy commands disappear.
pub fn declassify_form(program: &Program, observer: LabelId) -> Result<Program> {
    let mut rel = FlowRelation::new();
    let body = rewrite_body(
        program,
        &program.body,
        &mut rel,
        &mut |_| Command::Skip,
        &mut |rel, x, e| match enabled(program, rel, x, e) {
            Some(_) => Command::Assign(x, Expr::declassify(e.clone())),
            None => Command::Assign(x, e.clone()),
        },
    )?;
    let (low, high) = (LabelId(0), LabelId(1));
    Ok(Program {
        labels: vec!["Low".into(), "High".into()],
        locks: vec![],
        vars: program
            .vars
            .iter()
            .map(|d| VarDecl {
                name: d.name.clone(),
                label: if d.label == observer { low } else { high },
            })
            .collect(),
        domain: program.domain,
        plabels: None,
        body,
    })
}

/// Copying release: the policy is only weakened for the duration of each
/// enabled assignment (`allow; assign; revoke`), and is empty otherwise.
pub fn copying_release(program: &Program) -> Result<Program> {
    let mut out = program.clone();
    let mut rel = FlowRelation::new();
    out.body = rewrite_body(
        program,
        &program.body,
        &mut rel,
        &mut |_| Command::Skip,
        &mut |rel, x, e| {
            let assign = Command::Assign(x, e.clone());
            match enabled(program, rel, x, e) {
                Some(needed) => Command::seq_all(
                    needed
                        .iter()
                        .map(|(a, b)| Command::Allow(*a, *b))
                        .chain([assign])
                        .chain(needed.iter().map(|(a, b)| Command::Revoke(*a, *b))),
                ),
                None => assign,
            }
        },
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::{parse, print};

    const T: &str = "labels A, B, C; vars a:A, b:B, c:C; allow C -> B; b := c; revoke C -> B; allow B -> A; a := b";
    const R: &str = "labels A, B; vars a:A, b:B; allow B -> A; a := b; a := 0; revoke B -> A; a := b";

    fn body(p: &Program) -> String {
        print_command(p, &p.body).replace('\n', " ")
    }

    #[test]
    fn lock_form_adds_path_clauses() {
        let p = lock_form(&parse(T).unwrap()).unwrap();
        assert_eq!(p.locks, vec!["C_B", "B_A"]);
        let c = p.plabel_of(p.var_id("c").unwrap());
        let a = p.label_id("A").unwrap();
        assert!(c.clauses.contains(&(a, [LockId(0), LockId(1)].into())));
        assert!(body(&p).contains("allow C -> B; open C_B; b := c; revoke C -> B; close C_B"));
        // the printed form parses back to the same program
        assert_eq!(parse(&print(&p)).unwrap(), p);
    }

    #[test]
    fn guard_form_wraps_enabled_assignments() {
        let p = guard_form(&parse(R).unwrap()).unwrap();
        assert_eq!(
            body(&p),
            "allow B -> A; if flows(B, A) {   a := b }; a := 0; revoke B -> A; a := b"
        );
    }

    #[test]
    fn guard_form_rejects_dynamic_policy() {
        let p = parse("labels A, B; vars a:A, b:B; if a { allow B -> A }; a := b").unwrap();
        assert!(matches!(guard_form(&p), Err(Error::DynamicPolicy(_))));
    }

    #[test]
    fn declassify_form_relabels() {
        let p = declassify_form(&parse(R).unwrap(), LabelId(0)).unwrap();
        assert_eq!(p.labels, vec!["Low", "High"]);
        assert_eq!(body(&p), "skip; a := declassify(b); a := 0; skip; a := b");
    }

    #[test]
    fn copying_release_brackets_assignment() {
        let p = copying_release(&parse(R).unwrap()).unwrap();
        assert_eq!(
            body(&p),
            "skip; allow B -> A; a := b; revoke B -> A; a := 0; skip; a := b"
        );
    }
}
