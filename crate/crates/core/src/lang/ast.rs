//! Abstract syntax of the policy-annotated while-language.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::ParalocksLabel;

/// Index of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// Index of a declared security label (also the actor set under Paralocks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LabelId(pub usize);

/// Index of a declared lock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LockId(pub usize);

/// A finite, contiguous integer value domain `lo..=hi`.
///
/// Arithmetic wraps modulo the domain size. Booleans are encoded as `lo`
/// (false) and `lo + 1` (true); any value other than `lo` is truthy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Domain {
    pub lo: i64,
    pub hi: i64,
}

impl Default for Domain {
    fn default() -> Self {
        Domain { lo: 0, hi: 1 }
    }
}

impl Domain {
    pub fn new(lo: i64, hi: i64) -> Option<Self> {
        (lo <= hi).then_some(Domain { lo, hi })
    }

    pub fn size(&self) -> u64 {
        (self.hi - self.lo) as u64 + 1
    }

    pub fn contains(&self, v: i64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }

    pub fn values(&self) -> impl Iterator<Item = i64> + Clone {
        self.lo..=self.hi
    }

    pub fn wrap(&self, raw: i64) -> i64 {
        let size = self.size() as i64;
        self.lo + (raw - self.lo).rem_euclid(size)
    }

    pub fn from_bool(&self, b: bool) -> i64 {
        if b {
            self.wrap(self.lo + 1)
        } else {
            self.lo
        }
    }

    pub fn is_true(&self, v: i64) -> bool {
        v != self.lo
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Eq,
    Lt,
    Xor,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Eq => "=",
            BinOp::Lt => "<",
            BinOp::Xor => "xor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(i64),
    Var(VarId),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    /// `flows(A, B)`: does the current relation permit `A` to flow to `B`?
    Flows(LabelId, LabelId),
    /// `declassify(e)`: marks the enclosing assignment as a release event.
    Declassify(Box<Expr>),
}

impl Expr {
    pub fn var(v: VarId) -> Self {
        Expr::Var(v)
    }

    pub fn bin(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn declassify(inner: Expr) -> Self {
        Expr::Declassify(Box::new(inner))
    }

    pub fn has_declassify(&self) -> bool {
        match self {
            Expr::Declassify(_) => true,
            Expr::Bin(_, l, r) => l.has_declassify() || r.has_declassify(),
            Expr::Const(_) | Expr::Var(_) | Expr::Flows(..) => false,
        }
    }

    pub fn free_vars(&self) -> BTreeSet<VarId> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<VarId>) {
        match self {
            Expr::Var(v) => {
                out.insert(*v);
            }
            Expr::Bin(_, l, r) => {
                l.collect_vars(out);
                r.collect_vars(out);
            }
            Expr::Declassify(e) => e.collect_vars(out),
            Expr::Const(_) | Expr::Flows(..) => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Command {
    Skip,
    Assign(VarId, Expr),
    Seq(Box<Command>, Box<Command>),
    If(Expr, Box<Command>, Box<Command>),
    While(Expr, Box<Command>),
    Allow(LabelId, LabelId),
    Revoke(LabelId, LabelId),
    Open(LockId),
    Close(LockId),
}

impl Command {
    pub fn seq(first: Command, second: Command) -> Self {
        Command::Seq(Box::new(first), Box::new(second))
    }

    /// Right-nested sequence of `cmds`; `skip` when empty.
    pub fn seq_all(cmds: impl IntoIterator<Item = Command>) -> Self {
        let mut cmds: Vec<Command> = cmds.into_iter().collect();
        let Some(mut acc) = cmds.pop() else {
            return Command::Skip;
        };
        while let Some(c) = cmds.pop() {
            acc = Command::seq(c, acc);
        }
        acc
    }

    pub fn if_then_else(cond: Expr, then: Command, otherwise: Command) -> Self {
        Command::If(cond, Box::new(then), Box::new(otherwise))
    }

    pub fn while_loop(cond: Expr, body: Command) -> Self {
        Command::While(cond, Box::new(body))
    }

    pub fn is_policy_change(&self) -> bool {
        matches!(
            self,
            Command::Allow(..) | Command::Revoke(..) | Command::Open(_) | Command::Close(_)
        )
    }

    /// True if any sub-command changes the policy component.
    pub fn contains_policy_change(&self) -> bool {
        match self {
            Command::Seq(a, b) | Command::If(_, a, b) => a.contains_policy_change() || b.contains_policy_change(),
            Command::While(_, body) => body.contains_policy_change(),
            c => c.is_policy_change(),
        }
    }

    /// Flattens top-level sequencing into a list of commands.
    pub fn flatten(&self) -> Vec<&Command> {
        let mut out = Vec::new();
        let mut cur = self;
        while let Command::Seq(a, b) = cur {
            out.extend(a.flatten());
            cur = b;
        }
        out.push(cur);
        out
    }

    pub fn visit_exprs<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        match self {
            Command::Assign(_, e) => f(e),
            Command::Seq(a, b) => {
                a.visit_exprs(f);
                b.visit_exprs(f);
            }
            Command::If(c, a, b) => {
                f(c);
                a.visit_exprs(f);
                b.visit_exprs(f);
            }
            Command::While(c, body) => {
                f(c);
                body.visit_exprs(f);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub label: LabelId,
}

/// Fixed variable-to-label mapping for one program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelAssignment(pub Vec<LabelId>);

impl LabelAssignment {
    pub fn label_of(&self, var: VarId) -> LabelId {
        self.0[var.0]
    }
}

/// A parsed program: declarations plus a command body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub labels: Vec<String>,
    pub locks: Vec<String>,
    pub vars: Vec<VarDecl>,
    pub domain: Domain,
    /// Paralocks labels, one per variable, when declared with `plabel`.
    pub plabels: Option<Vec<ParalocksLabel>>,
    pub body: Command,
}

impl Program {
    pub fn labeling(&self) -> LabelAssignment {
        LabelAssignment(self.vars.iter().map(|v| v.label).collect())
    }

    pub fn label_of(&self, var: VarId) -> LabelId {
        self.vars[var.0].label
    }

    pub fn label_id(&self, name: &str) -> Option<LabelId> {
        self.labels.iter().position(|l| l == name).map(LabelId)
    }

    pub fn lock_id(&self, name: &str) -> Option<LockId> {
        self.locks.iter().position(|l| l == name).map(LockId)
    }

    pub fn var_id(&self, name: &str) -> Option<VarId> {
        self.vars.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn label_name(&self, l: LabelId) -> &str {
        &self.labels[l.0]
    }

    pub fn lock_name(&self, l: LockId) -> &str {
        &self.locks[l.0]
    }

    pub fn var_name(&self, v: VarId) -> &str {
        &self.vars[v.0].name
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> + '_ {
        (0..self.vars.len()).map(VarId)
    }

    pub fn label_ids(&self) -> impl Iterator<Item = LabelId> + '_ {
        (0..self.labels.len()).map(LabelId)
    }

    pub fn lock_ids(&self) -> impl Iterator<Item = LockId> + '_ {
        (0..self.locks.len()).map(LockId)
    }

    /// Paralocks label of `var`; the empty (most restrictive) label when undeclared.
    pub fn plabel_of(&self, var: VarId) -> ParalocksLabel {
        self.plabels.as_ref().map(|ls| ls[var.0].clone()).unwrap_or_default()
    }

    pub fn has_declassify(&self) -> bool {
        let mut found = false;
        self.body.visit_exprs(&mut |e| found |= e.has_declassify());
        found
    }
}
