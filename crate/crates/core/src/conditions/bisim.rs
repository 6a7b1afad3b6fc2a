use std::collections::{HashMap, HashSet};

use super::{Limits, Search, StoreView, Verdict, Witness};
use crate::error::Result;
use crate::knowledge::{LevelViewer, Universe, Viewer};
use crate::lang::{print_command, Command, Event, Interpreter, Program, Store, VarId};
use crate::policy::{Attacker, PolicyComponent};

/// A continuation: what is left to run, and the policy it runs under.
type Skeleton = (Command, PolicyComponent);

/// One obligation of a pair: after `left` steps from `s1`, the right side
/// started in `s2` must reach one of `options`.
struct Obligation {
    s1: Vec<i64>,
    s2: Vec<i64>,
    options: Vec<(usize, usize)>,
    truncated: bool,
}

struct Game<'p> {
    interp: Interpreter<'p>,
    viewer: LevelViewer,
    universe: Universe,
    budget: usize,
    skeletons: Vec<Skeleton>,
    index: HashMap<Skeleton, usize>,
}

impl<'p> Game<'p> {
    fn intern(&mut self, s: Skeleton) -> usize {
        if let Some(&i) = self.index.get(&s) {
            return i;
        }
        self.skeletons.push(s.clone());
        self.index.insert(s, self.skeletons.len() - 1);
        self.skeletons.len() - 1
    }

    fn observation(&self, e: &Option<Event>) -> Option<(VarId, i64)> {
        e.as_ref()
            .filter(|e| self.viewer.sees(self.interp.program(), e.target, &e.policy))
            .map(|e| (e.target, e.value))
    }

    /// Continuations reachable from `(cmd, store)` by silent steps, then
    /// `wanted` (if any) as the single visible step, then silent steps.
    fn matches(&mut self, cmd: &Command, store: &Store, wanted: Option<(VarId, i64)>) -> (Vec<usize>, bool) {
        let mut out = Vec::new();
        let (mut cmd, mut store) = (cmd.clone(), store.clone());
        let mut pending = wanted;
        let mut collecting = wanted.is_none();
        for _ in 0..=self.budget {
            if collecting {
                let k = self.intern((cmd.clone(), store.policy.clone()));
                if !out.contains(&k) {
                    out.push(k);
                }
            }
            let Some(step) = self.interp.step(&cmd, &store) else {
                return (out, false);
            };
            if let Some(o) = self.observation(&step.event) {
                match pending.take() {
                    Some(w) if w == o => collecting = true,
                    _ => return (out, false),
                }
            }
            cmd = step.command;
            store = step.store;
        }
        (out, true)
    }

    /// Obligations for `(left, right)` when `left` moves first.
    fn obligations(&mut self, left: usize, right: usize) -> Vec<Obligation> {
        let (c1, p1) = self.skeletons[left].clone();
        let (c2, p2) = self.skeletons[right].clone();
        let program = self.interp.program();
        let mut out = Vec::new();
        for i in 0..self.universe.len() {
            let v1 = self.universe.get(i).to_vec();
            let s1 = Store {
                values: v1.clone(),
                policy: p1.clone(),
            };
            let Some(step) = self.interp.step(&c1, &s1) else {
                continue;
            };
            let o = self.observation(&step.event);
            let next1 = self.intern((step.command, step.store.policy));
            for j in 0..self.universe.len() {
                let v2 = self.universe.get(j).to_vec();
                if !self.viewer.equivalent(program, &v1, &v2, &p1) {
                    continue;
                }
                let s2 = Store {
                    values: v2.clone(),
                    policy: p2.clone(),
                };
                let (targets, truncated) = self.matches(&c2, &s2, o);
                out.push(Obligation {
                    s1: v1.clone(),
                    s2: v2,
                    options: targets.into_iter().map(|t| (next1, t)).collect(),
                    truncated,
                });
            }
        }
        out
    }
}

/// The program is bisimilar to itself, where related continuations must
/// match each other's observable steps from every pair of stores the
/// attacker cannot tell apart.
pub fn check_strong_bisimulation(program: &Program, attacker: &Attacker, limits: Limits) -> Result<Verdict> {
    let interp = Interpreter::new(program);
    let start = interp.initial_store(vec![program.domain.lo; program.vars.len()]).policy;
    let mut game = Game {
        interp,
        viewer: LevelViewer::from(attacker),
        universe: Universe::enumerate(program, limits.universe_cap)?,
        budget: limits.budget,
        skeletons: Vec::new(),
        index: HashMap::new(),
    };
    let root = game.intern((program.body.clone(), start));

    // Explore candidate pairs; each pair carries obligations in both directions.
    let mut order: Vec<(usize, usize)> = vec![(root, root)];
    let mut obligations: HashMap<(usize, usize), Vec<Obligation>> = HashMap::new();
    let mut seen: HashSet<(usize, usize)> = order.iter().copied().collect();
    let mut k = 0;
    while k < order.len() {
        let (a, b) = order[k];
        k += 1;
        let mut obs = game.obligations(a, b);
        // Mirror: right moves first, its continuation pairs stored as (left, right).
        for mut o in game.obligations(b, a) {
            o.options = o.options.into_iter().map(|(x, y)| (y, x)).collect();
            std::mem::swap(&mut o.s1, &mut o.s2);
            obs.push(o);
        }
        for o in &obs {
            for &p in &o.options {
                if seen.insert(p) {
                    order.push(p);
                }
            }
        }
        obligations.insert((a, b), obs);
    }

    // Greatest fixpoint: drop pairs with an unmet obligation.
    let mut alive: HashSet<(usize, usize)> = seen;
    let mut search = Search::new("bisim");
    // Prefer a failure of a continuation against itself: its stores differ.
    let mut first_failure: Option<(usize, usize, usize)> = None;
    let mut diagonal_failure: Option<(usize, usize, usize)> = None;
    let mut tainted = false;
    loop {
        let mut removed = Vec::new();
        for &pair in &order {
            if !alive.contains(&pair) {
                continue;
            }
            if let Some((idx, o)) = obligations[&pair]
                .iter()
                .enumerate()
                .find(|(_, o)| !o.options.iter().any(|p| alive.contains(p)))
            {
                tainted |= o.truncated;
                first_failure.get_or_insert((pair.0, pair.1, idx));
                if pair.0 == pair.1 {
                    diagonal_failure.get_or_insert((pair.0, pair.1, idx));
                }
                removed.push(pair);
            }
        }
        if removed.is_empty() {
            break;
        }
        for p in removed {
            alive.remove(&p);
        }
    }

    if alive.contains(&(root, root)) {
        return Ok(search.finish());
    }
    let (l, r, idx) = diagonal_failure
        .or(first_failure)
        .expect("root removed after some failure");
    let o = &obligations[&(l, r)][idx];
    let witness = Witness::DistinguishingPair {
        attacker: program.label_name(attacker.level).to_string(),
        left_program: print_command(program, &game.skeletons[l].0),
        right_program: print_command(program, &game.skeletons[r].0),
        policy: game.skeletons[l].1.relation.display(program).to_string(),
        left: StoreView::new(program, &o.s1),
        right: StoreView::new(program, &o.s2),
    };
    match search.violation(witness, tainted) {
        Some(v) => Ok(v),
        None => Ok(search.finish()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Status;
    use crate::lang::{parse, LabelId};

    fn bisim(src: &str, level: usize) -> Verdict {
        check_strong_bisimulation(&parse(src).unwrap(), &Attacker::at(LabelId(level)), Limits::default()).unwrap()
    }

    #[test]
    fn branch_on_secret_is_insecure() {
        let v = bisim("labels Y, X; vars y:Y, x:X; if x > 0 { y := x }", 0);
        assert_eq!(v.status, Status::Insecure);
        match v.witness.unwrap() {
            Witness::DistinguishingPair { left, right, .. } => assert_ne!(left, right),
            w => panic!("unexpected witness {w:?}"),
        }
    }

    #[test]
    fn replay_is_insecure() {
        let v = bisim(
            "labels A, B; vars a:A, b:B; allow B -> A; a := b; a := 0; revoke B -> A; a := b",
            0,
        );
        assert_eq!(v.status, Status::Insecure);
    }

    #[test]
    fn time_transitive_is_secure() {
        let v = bisim(
            "labels A, B, C; vars a:A, b:B, c:C; allow C -> B; b := c; revoke C -> B; allow B -> A; a := b",
            0,
        );
        assert_eq!(v.status, Status::Secure);
    }

    #[test]
    fn silent_divergence_is_matched() {
        assert_eq!(
            bisim("labels A, B; vars a:A, b:B; while 0 = 0 skip", 0).status,
            Status::Secure
        );
    }

    #[test]
    fn public_computation_is_secure() {
        assert_eq!(
            bisim("labels A, B; vars a:A, b:B; if a { a := 0 } else { a := 1 }; b := a", 0).status,
            Status::Secure
        );
    }
}
