//! Invariant mini-language over flow relations and discriminator states.
//!
//! ```text
//! f ::= forall x y . f | exists x . f
//!     | f implies f | f or f | f and f
//!     | not f | prev f | once f | historically f
//!     | flows(a, b) | state = s | state != s | true | false | ( f )
//! ```
//!
//! `a`, `b` are label names or quantified variables ranging over labels.
//! `prev`, `once` and `historically` look back along the sequence of
//! states; a sequence invariant must hold at every position.

use std::collections::BTreeMap;
use std::fmt;

use super::{PolicyScheme, StateId};
use crate::error::{Error, Result};
use crate::lang::LabelId;
use crate::policy::FlowRelation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Formula {
    Const(bool),
    Flows(String, String),
    State { name: String, negated: bool },
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Implies(Box<Formula>, Box<Formula>),
    Prev(Box<Formula>),
    Once(Box<Formula>),
    Historically(Box<Formula>),
    Forall(String, Box<Formula>),
    Exists(String, Box<Formula>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Eq,
    Neq,
}

fn lex(text: &str) -> Result<Vec<Tok>> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        let mut chars = line.chars().peekable();
        while let Some(&c) = chars.peek() {
            match c {
                c if c.is_whitespace() => {
                    chars.next();
                }
                '(' | ')' | ',' | '.' | '=' => {
                    chars.next();
                    out.push(match c {
                        '(' => Tok::LParen,
                        ')' => Tok::RParen,
                        ',' => Tok::Comma,
                        '.' => Tok::Dot,
                        _ => Tok::Eq,
                    });
                }
                '!' => {
                    chars.next();
                    if chars.next() != Some('=') {
                        return Err(Error::Formula("expected `!=`".into()));
                    }
                    out.push(Tok::Neq);
                }
                c if c.is_alphanumeric() || c == '_' => {
                    let mut s = String::new();
                    while let Some(&c) = chars.peek() {
                        if c.is_alphanumeric() || c == '_' || c == '-' {
                            s.push(c);
                            chars.next();
                        } else {
                            break;
                        }
                    }
                    out.push(Tok::Ident(s));
                }
                c => return Err(Error::Formula(format!("unexpected character `{c}`"))),
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn expect(&mut self, t: Tok) -> Result<()> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Formula(format!("expected {t:?}, found {:?}", self.peek())))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            t => Err(Error::Formula(format!("expected a name, found {t:?}"))),
        }
    }

    fn formula(&mut self) -> Result<Formula> {
        for q in ["forall", "exists"] {
            if self.keyword(q) {
                self.pos += 1;
                let mut vars = vec![self.ident()?];
                while let Some(Tok::Ident(_)) = self.peek() {
                    vars.push(self.ident()?);
                }
                self.expect(Tok::Dot)?;
                let body = self.formula()?;
                return Ok(vars.into_iter().rev().fold(body, |f, v| {
                    if q == "forall" {
                        Formula::Forall(v, Box::new(f))
                    } else {
                        Formula::Exists(v, Box::new(f))
                    }
                }));
            }
        }
        let lhs = self.or()?;
        if self.keyword("implies") {
            self.pos += 1;
            return Ok(Formula::Implies(Box::new(lhs), Box::new(self.formula()?)));
        }
        Ok(lhs)
    }

    fn or(&mut self) -> Result<Formula> {
        let mut f = self.and()?;
        while self.keyword("or") {
            self.pos += 1;
            f = Formula::Or(Box::new(f), Box::new(self.and()?));
        }
        Ok(f)
    }

    fn and(&mut self) -> Result<Formula> {
        let mut f = self.unary()?;
        while self.keyword("and") {
            self.pos += 1;
            f = Formula::And(Box::new(f), Box::new(self.unary()?));
        }
        Ok(f)
    }

    fn unary(&mut self) -> Result<Formula> {
        let wrap: Option<fn(Box<Formula>) -> Formula> = match self.peek() {
            Some(Tok::Ident(s)) => match s.as_str() {
                "not" => Some(Formula::Not),
                "prev" => Some(Formula::Prev),
                "once" => Some(Formula::Once),
                "historically" => Some(Formula::Historically),
                _ => None,
            },
            _ => None,
        };
        if let Some(w) = wrap {
            self.pos += 1;
            return Ok(w(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Formula> {
        if self.peek() == Some(&Tok::LParen) {
            self.pos += 1;
            let f = self.formula()?;
            self.expect(Tok::RParen)?;
            return Ok(f);
        }
        let name = self.ident()?;
        match name.as_str() {
            "true" => Ok(Formula::Const(true)),
            "false" => Ok(Formula::Const(false)),
            "flows" => {
                self.expect(Tok::LParen)?;
                let a = self.ident()?;
                self.expect(Tok::Comma)?;
                let b = self.ident()?;
                self.expect(Tok::RParen)?;
                Ok(Formula::Flows(a, b))
            }
            "state" => {
                let negated = match self.peek() {
                    Some(Tok::Eq) => false,
                    Some(Tok::Neq) => true,
                    t => return Err(Error::Formula(format!("expected `=` or `!=` after state, found {t:?}"))),
                };
                self.pos += 1;
                Ok(Formula::State {
                    name: self.ident()?,
                    negated,
                })
            }
            other => Err(Error::Formula(format!("unexpected `{other}`"))),
        }
    }
}

impl Formula {
    pub fn parse(text: &str) -> Result<Formula> {
        let mut p = Parser {
            toks: lex(text)?,
            pos: 0,
        };
        let f = p.formula()?;
        if p.pos != p.toks.len() {
            return Err(Error::Formula(format!("trailing input at {:?}", p.toks[p.pos])));
        }
        Ok(f)
    }

    /// Whether the formula looks back along the sequence.
    pub fn is_temporal(&self) -> bool {
        match self {
            Formula::Prev(_) | Formula::Once(_) | Formula::Historically(_) => true,
            Formula::Not(f) | Formula::Forall(_, f) | Formula::Exists(_, f) => f.is_temporal(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => a.is_temporal() || b.is_temporal(),
            _ => false,
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Const(b) => write!(f, "{b}"),
            Formula::Flows(a, b) => write!(f, "flows({a}, {b})"),
            Formula::State { name, negated } => {
                write!(f, "state {} {name}", if *negated { "!=" } else { "=" })
            }
            Formula::Not(x) => write!(f, "not {x}"),
            Formula::And(a, b) => write!(f, "({a} and {b})"),
            Formula::Or(a, b) => write!(f, "({a} or {b})"),
            Formula::Implies(a, b) => write!(f, "({a} implies {b})"),
            Formula::Prev(x) => write!(f, "prev {x}"),
            Formula::Once(x) => write!(f, "once {x}"),
            Formula::Historically(x) => write!(f, "historically {x}"),
            Formula::Forall(v, x) => write!(f, "(forall {v} . {x})"),
            Formula::Exists(v, x) => write!(f, "(exists {v} . {x})"),
        }
    }
}

/// A quantifier-free formula over one scheme, with a memory slot for each
/// temporal operator.
#[derive(Debug, Clone)]
enum Ground {
    Const(bool),
    Flows(LabelId, LabelId),
    State(StateId, bool),
    Not(Box<Ground>),
    And(Vec<Ground>),
    Or(Vec<Ground>),
    Prev(usize, Box<Ground>),
    Once(usize, Box<Ground>),
    Historically(usize, Box<Ground>),
}

/// Evaluates a formula position by position along a state sequence.
#[derive(Debug, Clone)]
pub(crate) struct Monitor {
    root: Ground,
    slots: usize,
}

/// Values the temporal operators carry to the next position.
pub(crate) type Memory = Vec<bool>;

impl Monitor {
    pub(crate) fn new(formula: &Formula, scheme: &PolicyScheme) -> Result<Monitor> {
        let mut slots = 0;
        let root = ground(formula, scheme, &mut BTreeMap::new(), &mut slots)?;
        Ok(Monitor { root, slots })
    }

    /// Truth at the current position and the memory for the next one.
    /// `prev` is `None` at the first position.
    pub(crate) fn step(&self, rel: &FlowRelation, state: StateId, prev: Option<&Memory>) -> (bool, Memory) {
        let mut next = vec![false; self.slots];
        let v = eval(&self.root, rel, state, prev, &mut next);
        (v, next)
    }
}

fn ground(
    f: &Formula,
    scheme: &PolicyScheme,
    env: &mut BTreeMap<String, LabelId>,
    slots: &mut usize,
) -> Result<Ground> {
    let label = |name: &str, env: &BTreeMap<String, LabelId>| {
        env.get(name)
            .copied()
            .or_else(|| scheme.label_id(name))
            .ok_or_else(|| Error::Formula(format!("unknown label `{name}`")))
    };
    Ok(match f {
        Formula::Const(b) => Ground::Const(*b),
        Formula::Flows(a, b) => Ground::Flows(label(a, env)?, label(b, env)?),
        Formula::State { name, negated } => Ground::State(
            scheme
                .state_id(name)
                .ok_or_else(|| Error::Formula(format!("unknown state `{name}`")))?,
            *negated,
        ),
        Formula::Not(x) => Ground::Not(Box::new(ground(x, scheme, env, slots)?)),
        Formula::And(a, b) => Ground::And(vec![ground(a, scheme, env, slots)?, ground(b, scheme, env, slots)?]),
        Formula::Or(a, b) => Ground::Or(vec![ground(a, scheme, env, slots)?, ground(b, scheme, env, slots)?]),
        Formula::Implies(a, b) => Ground::Or(vec![
            Ground::Not(Box::new(ground(a, scheme, env, slots)?)),
            ground(b, scheme, env, slots)?,
        ]),
        Formula::Prev(x) | Formula::Once(x) | Formula::Historically(x) => {
            let inner = Box::new(ground(x, scheme, env, slots)?);
            let slot = *slots;
            *slots += 1;
            match f {
                Formula::Prev(_) => Ground::Prev(slot, inner),
                Formula::Once(_) => Ground::Once(slot, inner),
                _ => Ground::Historically(slot, inner),
            }
        }
        Formula::Forall(v, x) | Formula::Exists(v, x) => {
            let saved = env.get(v).copied();
            let mut parts = Vec::new();
            for l in 0..scheme.labels.len() {
                env.insert(v.clone(), LabelId(l));
                parts.push(ground(x, scheme, env, slots)?);
            }
            match saved {
                Some(s) => env.insert(v.clone(), s),
                None => env.remove(v),
            };
            if matches!(f, Formula::Forall(..)) {
                Ground::And(parts)
            } else {
                Ground::Or(parts)
            }
        }
    })
}

/// Every temporal node is visited so the next memory is complete.
fn eval(g: &Ground, rel: &FlowRelation, state: StateId, prev: Option<&Memory>, next: &mut Memory) -> bool {
    match g {
        Ground::Const(b) => *b,
        Ground::Flows(a, b) => rel.may_flow(*a, *b),
        Ground::State(s, negated) => (*s == state) != *negated,
        Ground::Not(x) => !eval(x, rel, state, prev, next),
        Ground::And(xs) => xs.iter().fold(true, |acc, x| eval(x, rel, state, prev, next) & acc),
        Ground::Or(xs) => xs.iter().fold(false, |acc, x| eval(x, rel, state, prev, next) | acc),
        Ground::Prev(slot, x) => {
            next[*slot] = eval(x, rel, state, prev, next);
            prev.is_some_and(|m| m[*slot])
        }
        Ground::Once(slot, x) => {
            let v = eval(x, rel, state, prev, next) || prev.is_some_and(|m| m[*slot]);
            next[*slot] = v;
            v
        }
        Ground::Historically(slot, x) => {
            let v = eval(x, rel, state, prev, next) && prev.is_none_or(|m| m[*slot]);
            next[*slot] = v;
            v
        }
    }
}
