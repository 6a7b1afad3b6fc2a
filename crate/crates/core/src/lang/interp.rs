//! Deterministic small-step interpreter producing assignment-event traces.

use serde::Serialize;

use crate::lang::ast::*;
use crate::policy::{FlowRelation, PolicyComponent};

/// A configuration's memory: variable values plus the policy component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Store {
    pub values: Vec<i64>,
    pub policy: PolicyComponent,
}

impl Store {
    pub fn new(values: Vec<i64>) -> Self {
        Store {
            values,
            policy: PolicyComponent::default(),
        }
    }

    pub fn get(&self, v: VarId) -> i64 {
        self.values[v.0]
    }

    pub fn with_value(mut self, v: VarId, value: i64) -> Self {
        self.values[v.0] = value;
        self
    }
}

/// One observable-in-principle program action: an assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct Event {
    pub target: VarId,
    pub value: i64,
    pub policy: PolicyComponent,
    pub release: bool,
}

/// Result of one small step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step {
    pub command: Command,
    pub store: Store,
    pub event: Option<Event>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepRecord {
    /// Store after the step.
    pub store: Store,
    /// Index into [`Trace::events`] when the step was an assignment.
    pub event: Option<usize>,
}

/// The (possibly budget-truncated) execution of one program from one store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trace {
    pub initial: Store,
    pub events: Vec<Event>,
    pub steps: Vec<StepRecord>,
    pub truncated: bool,
}

impl Trace {
    /// Every store of the run: the initial one followed by one per step.
    pub fn stores(&self) -> impl Iterator<Item = &Store> {
        std::iter::once(&self.initial).chain(self.steps.iter().map(|s| &s.store))
    }

    /// Index of the step that produced event `i`.
    pub fn step_of_event(&self, i: usize) -> usize {
        self.steps
            .iter()
            .position(|s| s.event == Some(i))
            .expect("every event comes from a step")
    }
}

/// Executes commands of one program.
///
/// With a fixed relation, `allow`/`revoke` are no-ops and `flows` guards
/// are answered by that relation.
#[derive(Debug, Clone)]
pub struct Interpreter<'p> {
    program: &'p Program,
    fixed: Option<FlowRelation>,
}

impl<'p> Interpreter<'p> {
    pub fn new(program: &'p Program) -> Self {
        Interpreter { program, fixed: None }
    }

    pub fn with_fixed_relation(program: &'p Program, relation: FlowRelation) -> Self {
        Interpreter {
            program,
            fixed: Some(relation),
        }
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    /// Initial store for `values`: no flows permitted and no locks open,
    /// unless the relation is fixed.
    pub fn initial_store(&self, values: Vec<i64>) -> Store {
        let mut s = Store::new(values);
        if let Some(f) = &self.fixed {
            s.policy.relation = f.clone();
        }
        s
    }

    pub fn eval(&self, e: &Expr, store: &Store) -> i64 {
        let d = self.program.domain;
        match e {
            Expr::Const(v) => *v,
            Expr::Var(v) => store.get(*v),
            Expr::Bin(op, l, r) => {
                let (a, b) = (self.eval(l, store), self.eval(r, store));
                match op {
                    BinOp::Add => d.wrap(a + b),
                    BinOp::Sub => d.wrap(a - b),
                    BinOp::Mul => d.wrap(a.wrapping_mul(b)),
                    BinOp::Xor => d.wrap(a ^ b),
                    BinOp::Eq => d.from_bool(a == b),
                    BinOp::Lt => d.from_bool(a < b),
                }
            }
            Expr::Flows(a, b) => d.from_bool(store.policy.relation.may_flow(*a, *b)),
            Expr::Declassify(inner) => self.eval(inner, store),
        }
    }

    /// One small step, or `None` when `cmd` is terminal (`skip`).
    pub fn step(&self, cmd: &Command, store: &Store) -> Option<Step> {
        let silent = |command: Command, store: Store| {
            Some(Step {
                command,
                store,
                event: None,
            })
        };
        match cmd {
            Command::Skip => None,
            Command::Assign(x, e) => {
                let value = self.eval(e, store);
                let next = store.clone().with_value(*x, value);
                let event = Event {
                    target: *x,
                    value,
                    policy: store.policy.clone(),
                    release: e.has_declassify(),
                };
                Some(Step {
                    command: Command::Skip,
                    store: next,
                    event: Some(event),
                })
            }
            Command::Seq(first, second) => {
                if **first == Command::Skip {
                    return silent((**second).clone(), store.clone());
                }
                let mut s = self.step(first, store)?;
                s.command = Command::Seq(Box::new(s.command), second.clone());
                Some(s)
            }
            Command::If(c, a, b) => {
                let branch = if self.program.domain.is_true(self.eval(c, store)) {
                    a
                } else {
                    b
                };
                silent((**branch).clone(), store.clone())
            }
            Command::While(c, body) => {
                let next = if self.program.domain.is_true(self.eval(c, store)) {
                    Command::seq((**body).clone(), cmd.clone())
                } else {
                    Command::Skip
                };
                silent(next, store.clone())
            }
            Command::Allow(a, b) | Command::Revoke(a, b) => {
                let mut next = store.clone();
                if self.fixed.is_none() {
                    if matches!(cmd, Command::Allow(..)) {
                        next.policy.relation.allow(*a, *b);
                    } else {
                        next.policy.relation.revoke(*a, *b);
                    }
                }
                silent(Command::Skip, next)
            }
            Command::Open(l) => {
                let mut next = store.clone();
                next.policy.open_locks.insert(*l);
                silent(Command::Skip, next)
            }
            Command::Close(l) => {
                let mut next = store.clone();
                next.policy.open_locks.remove(l);
                silent(Command::Skip, next)
            }
        }
    }

    /// Runs the whole program from `initial` for at most `budget` steps.
    pub fn run(&self, initial: Store, budget: usize) -> Trace {
        self.run_from(&self.program.body, initial, budget)
    }

    pub fn run_from(&self, cmd: &Command, initial: Store, budget: usize) -> Trace {
        let mut trace = Trace {
            initial: initial.clone(),
            events: vec![],
            steps: vec![],
            truncated: false,
        };
        let mut cmd = cmd.clone();
        let mut store = initial;
        loop {
            if cmd == Command::Skip {
                return trace;
            }
            if trace.steps.len() >= budget {
                trace.truncated = true;
                return trace;
            }
            let step = self.step(&cmd, &store).expect("non-skip command steps");
            let event = step.event.map(|e| {
                trace.events.push(e);
                trace.events.len() - 1
            });
            trace.steps.push(StepRecord {
                store: step.store.clone(),
                event,
            });
            cmd = step.command;
            store = step.store;
        }
    }
}

pub fn step(program: &Program, cmd: &Command, store: &Store) -> Option<Step> {
    Interpreter::new(program).step(cmd, store)
}

pub fn run(program: &Program, initial: Store, budget: usize) -> Trace {
    Interpreter::new(program).run(initial, budget)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    fn prog(body: &str) -> Program {
        parse(&format!("labels A, B; vars a:A, b:B; {body}")).unwrap()
    }

    #[test]
    fn constant_assignment_emits_event() {
        let p = prog("a := 1");
        let s = Store::new(vec![0, 0]);
        let st = step(&p, &p.body, &s).unwrap();
        assert_eq!(st.command, Command::Skip);
        assert_eq!(st.store.values, vec![1, 0]);
        assert_eq!(
            st.event,
            Some(Event {
                target: VarId(0),
                value: 1,
                policy: s.policy.clone(),
                release: false
            })
        );
    }

    #[test]
    fn allow_updates_policy_silently() {
        let p = prog("allow B -> A");
        let st = step(&p, &p.body, &Store::new(vec![0, 1])).unwrap();
        assert_eq!(st.event, None);
        assert_eq!(st.store.values, vec![0, 1]);
        assert!(st.store.policy.relation.may_flow(LabelId(1), LabelId(0)));
    }

    #[test]
    fn declassify_marks_release() {
        let p = prog("b := declassify(a)");
        let st = step(&p, &p.body, &Store::new(vec![1, 0])).unwrap();
        let e = st.event.unwrap();
        assert!(e.release);
        assert_eq!(e.value, 1);
    }

    #[test]
    fn skip_is_terminal() {
        let p = prog("skip");
        let t = run(&p, Store::new(vec![0, 0]), 100);
        assert!(t.events.is_empty());
        assert!(!t.truncated);
    }

    #[test]
    fn divergence_hits_budget() {
        let p = prog("while 0 = 0 skip");
        let t = run(&p, Store::new(vec![0, 0]), 50);
        assert!(t.events.is_empty());
        assert!(t.truncated);
        assert_eq!(t.steps.len(), 50);
    }

    #[test]
    fn replay_trace_snapshots() {
        let p = prog("allow B -> A; a := b; a := 0; revoke B -> A; a := b");
        let t = run(&p, Store::new(vec![0, 1]), 100);
        let ba = FlowRelation::from_pairs([(LabelId(1), LabelId(0))]);
        let got: Vec<_> = t
            .events
            .iter()
            .map(|e| (e.target, e.value, e.policy.relation.clone()))
            .collect();
        assert_eq!(
            got,
            vec![
                (VarId(0), 1, ba.clone()),
                (VarId(0), 0, ba),
                (VarId(0), 1, FlowRelation::new()),
            ]
        );
        assert!(!t.truncated);
    }

    #[test]
    fn fixed_relation_ignores_policy_changes() {
        let p = prog("allow A -> B; if flows(A, B) { b := a }");
        let interp = Interpreter::with_fixed_relation(&p, FlowRelation::new());
        let t = interp.run(interp.initial_store(vec![1, 0]), 100);
        assert!(t.events.is_empty());
        assert!(t.steps.iter().all(|s| s.store.policy.relation.is_empty()));
    }

    #[test]
    fn arithmetic_wraps() {
        let p = parse("labels A; vars a:A; domain 1..3; a := a + 2; a := a * 3; a := a < 2").unwrap();
        let t = run(&p, Store::new(vec![3]), 10);
        let values: Vec<i64> = t.events.iter().map(|e| e.value).collect();
        // 3+2=5 -> 2; 2*3=6 -> 3; 3<2 false -> lo
        assert_eq!(values, vec![2, 3, 1]);
    }
}
