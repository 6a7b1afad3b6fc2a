//! Lexer and recursive-descent parser for `.dpol` programs.
//!
//! ```text
//! labels A, B; locks L1; vars a:A, b:B; domain 0..1;
//! plabel b {B} {A: L1};
//! allow B -> A; a := declassify(b); revoke B -> A;
//! if flows(B, A) { a := b } else { skip };
//! while a < 1 { a := a + 1 }
//! ```

use crate::error::{Error, Result};
use crate::lang::ast::*;
use crate::policy::ParalocksLabel;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: [&str; 16] = [
    ":=", "->", "..", ";", ",", ":", "(", ")", "{", "}", "+", "-", "*", "=", "<", ">",
];

const KEYWORDS: [&str; 16] = [
    "labels",
    "locks",
    "vars",
    "domain",
    "plabel",
    "skip",
    "if",
    "else",
    "while",
    "allow",
    "revoke",
    "open",
    "close",
    "flows",
    "declassify",
    "xor",
];

fn lex(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '#' || (c == '/' && chars.get(i + 1) == Some(&'/')) {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start_col = col;
        if c.is_ascii_alphabetic() || c == '_' {
            let s: String = chars[i..]
                .iter()
                .take_while(|c| c.is_ascii_alphanumeric() || **c == '_')
                .collect();
            i += s.len();
            col += s.len();
            out.push(Token {
                tok: Tok::Ident(s),
                line,
                col: start_col,
            });
            continue;
        }
        if c.is_ascii_digit() {
            let s: String = chars[i..].iter().take_while(|c| c.is_ascii_digit()).collect();
            i += s.len();
            col += s.len();
            let v = s.parse().map_err(|_| Error::Syntax {
                line,
                col: start_col,
                msg: format!("integer `{s}` out of range"),
            })?;
            out.push(Token {
                tok: Tok::Int(v),
                line,
                col: start_col,
            });
            continue;
        }
        let rest: String = chars[i..chars.len().min(i + 2)].iter().collect();
        match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            Some(sym) => {
                i += sym.len();
                col += sym.len();
                out.push(Token {
                    tok: Tok::Sym(sym),
                    line,
                    col: start_col,
                });
            }
            None => {
                return Err(Error::Syntax {
                    line,
                    col,
                    msg: format!("unexpected character `{c}`"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    program: Program,
    in_declassify: bool,
}

/// Parses a `.dpol` source text into a [`Program`].
pub fn parse(src: &str) -> Result<Program> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
        program: Program {
            labels: vec![],
            locks: vec![],
            vars: vec![],
            domain: Domain::default(),
            plabels: None,
            body: Command::Skip,
        },
        in_declassify: false,
    };
    p.header()?;
    let body = p.command_list()?;
    p.expect_eof()?;
    p.program.body = body;
    p.check_constants()?;
    Ok(p.program)
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, msg: impl Into<String>) -> Result<T> {
        let t = self.peek();
        Err(Error::Syntax {
            line: t.line,
            col: t.col,
            msg: msg.into(),
        })
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(&self.peek().tok, Tok::Sym(x) if *x == s)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(x) if x == kw)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.next();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.next();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<()> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            self.error(format!("expected `{s}`, found {}", describe(&self.peek().tok)))
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        match self.peek().tok {
            Tok::Eof => Ok(()),
            ref t => self.error(format!("expected end of input, found {}", describe(t))),
        }
    }

    fn ident(&mut self) -> Result<Token> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(self.next()),
            t => self.error(format!("expected identifier, found {}", describe(t))),
        }
    }

    fn int(&mut self) -> Result<i64> {
        let neg = self.eat_sym("-");
        match self.peek().tok {
            Tok::Int(v) => {
                self.next();
                Ok(if neg { -v } else { v })
            }
            ref t => self.error(format!("expected integer, found {}", describe(t))),
        }
    }

    fn name_of(t: &Token) -> String {
        match &t.tok {
            Tok::Ident(s) => s.clone(),
            _ => unreachable!("ident token"),
        }
    }

    fn declare(list: &[String], kind: &'static str, tok: &Token) -> Result<String> {
        let name = Self::name_of(tok);
        if list.contains(&name) {
            return Err(Error::Duplicate {
                kind,
                name,
                line: tok.line,
                col: tok.col,
            });
        }
        Ok(name)
    }

    fn undeclared<T>(kind: &'static str, tok: &Token) -> Result<T> {
        Err(Error::Undeclared {
            kind,
            name: Self::name_of(tok),
            line: tok.line,
            col: tok.col,
        })
    }

    fn label(&mut self) -> Result<LabelId> {
        let t = self.ident()?;
        match self.program.label_id(&Self::name_of(&t)) {
            Some(l) => Ok(l),
            None => Self::undeclared("label", &t),
        }
    }

    fn lock(&mut self) -> Result<LockId> {
        let t = self.ident()?;
        match self.program.lock_id(&Self::name_of(&t)) {
            Some(l) => Ok(l),
            None => Self::undeclared("lock", &t),
        }
    }

    fn var(&mut self) -> Result<VarId> {
        let t = self.ident()?;
        match self.program.var_id(&Self::name_of(&t)) {
            Some(v) => Ok(v),
            None => Self::undeclared("variable", &t),
        }
    }

    fn header(&mut self) -> Result<()> {
        loop {
            if self.eat_kw("labels") {
                loop {
                    let t = self.ident()?;
                    let name = Self::declare(&self.program.labels, "label", &t)?;
                    self.program.labels.push(name);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            } else if self.eat_kw("locks") {
                while !self.is_sym(";") {
                    let t = self.ident()?;
                    let name = Self::declare(&self.program.locks, "lock", &t)?;
                    self.program.locks.push(name);
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            } else if self.eat_kw("vars") {
                loop {
                    let t = self.ident()?;
                    let names: Vec<String> = self.program.vars.iter().map(|v| v.name.clone()).collect();
                    let name = Self::declare(&names, "variable", &t)?;
                    self.expect_sym(":")?;
                    let label = self.label()?;
                    self.program.vars.push(VarDecl { name, label });
                    if !self.eat_sym(",") {
                        break;
                    }
                }
            } else if self.eat_kw("domain") {
                let lo = self.int()?;
                self.expect_sym("..")?;
                let hi = self.int()?;
                self.program.domain = match Domain::new(lo, hi) {
                    Some(d) => d,
                    None => return self.error("empty domain"),
                };
            } else if self.eat_kw("plabel") {
                let var = self.var()?;
                let mut label = ParalocksLabel::new();
                while self.eat_sym("{") {
                    let actor = self.label()?;
                    let mut guards = Vec::new();
                    if self.eat_sym(":") {
                        loop {
                            guards.push(self.lock()?);
                            if !self.eat_sym(",") {
                                break;
                            }
                        }
                    }
                    self.expect_sym("}")?;
                    label = label.with_clause(actor, guards);
                }
                let n = self.program.vars.len();
                let labels = self
                    .program
                    .plabels
                    .get_or_insert_with(|| vec![ParalocksLabel::new(); n]);
                labels.resize(n, ParalocksLabel::new());
                labels[var.0] = label;
            } else {
                return Ok(());
            }
            self.expect_sym(";")?;
        }
    }

    fn at_list_end(&self) -> bool {
        self.is_sym("}") || matches!(self.peek().tok, Tok::Eof)
    }

    fn command_list(&mut self) -> Result<Command> {
        let mut cmds = Vec::new();
        while !self.at_list_end() {
            cmds.push(self.command()?);
            if !self.eat_sym(";") {
                break;
            }
        }
        Ok(Command::seq_all(cmds))
    }

    fn block(&mut self) -> Result<Command> {
        self.expect_sym("{")?;
        let c = self.command_list()?;
        self.expect_sym("}")?;
        Ok(c)
    }

    fn command(&mut self) -> Result<Command> {
        if self.eat_kw("skip") {
            return Ok(Command::Skip);
        }
        if self.eat_kw("if") {
            let cond = self.expr()?;
            let then = self.block()?;
            let otherwise = if self.eat_kw("else") {
                if self.is_kw("if") {
                    self.command()?
                } else {
                    self.block()?
                }
            } else {
                Command::Skip
            };
            return Ok(Command::if_then_else(cond, then, otherwise));
        }
        if self.eat_kw("while") {
            let cond = self.expr()?;
            let body = if self.is_sym("{") {
                self.block()?
            } else {
                self.command()?
            };
            return Ok(Command::while_loop(cond, body));
        }
        for kw in ["allow", "revoke"] {
            if self.eat_kw(kw) {
                let from = self.label()?;
                self.expect_sym("->")?;
                let to = self.label()?;
                return Ok(if kw == "allow" {
                    Command::Allow(from, to)
                } else {
                    Command::Revoke(from, to)
                });
            }
        }
        if self.eat_kw("open") {
            return Ok(Command::Open(self.lock()?));
        }
        if self.eat_kw("close") {
            return Ok(Command::Close(self.lock()?));
        }
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let target = self.var()?;
                self.expect_sym(":=")?;
                let rhs = self.expr()?;
                Ok(Command::Assign(target, rhs))
            }
            t => self.error(format!("expected command, found {}", describe(t))),
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.xor_expr()?;
        loop {
            if self.eat_sym("=") {
                lhs = Expr::bin(BinOp::Eq, lhs, self.xor_expr()?);
            } else if self.eat_sym("<") {
                lhs = Expr::bin(BinOp::Lt, lhs, self.xor_expr()?);
            } else if self.eat_sym(">") {
                // `a > b` is sugar for `b < a`.
                let rhs = self.xor_expr()?;
                lhs = Expr::bin(BinOp::Lt, rhs, lhs);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn xor_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.add_expr()?;
        while self.eat_kw("xor") {
            lhs = Expr::bin(BinOp::Xor, lhs, self.add_expr()?);
        }
        Ok(lhs)
    }

    fn add_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            if self.eat_sym("+") {
                lhs = Expr::bin(BinOp::Add, lhs, self.mul_expr()?);
            } else if self.eat_sym("-") {
                lhs = Expr::bin(BinOp::Sub, lhs, self.mul_expr()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn mul_expr(&mut self) -> Result<Expr> {
        let mut lhs = self.atom()?;
        while self.eat_sym("*") {
            lhs = Expr::bin(BinOp::Mul, lhs, self.atom()?);
        }
        Ok(lhs)
    }

    fn atom(&mut self) -> Result<Expr> {
        if self.eat_sym("(") {
            let e = self.expr()?;
            self.expect_sym(")")?;
            return Ok(e);
        }
        if let Tok::Int(v) = self.peek().tok {
            self.next();
            return Ok(Expr::Const(v));
        }
        if self.eat_kw("flows") {
            self.expect_sym("(")?;
            let from = self.label()?;
            self.expect_sym(",")?;
            let to = self.label()?;
            self.expect_sym(")")?;
            return Ok(Expr::Flows(from, to));
        }
        if self.is_kw("declassify") {
            let t = self.next();
            if self.in_declassify {
                return Err(Error::NestedDeclassify {
                    line: t.line,
                    col: t.col,
                });
            }
            self.expect_sym("(")?;
            self.in_declassify = true;
            let inner = self.expr();
            self.in_declassify = false;
            let inner = inner?;
            self.expect_sym(")")?;
            return Ok(Expr::declassify(inner));
        }
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => Ok(Expr::Var(self.var()?)),
            t => self.error(format!("expected expression, found {}", describe(t))),
        }
    }

    /// Constants must lie in the declared domain. Positions are not tracked on
    /// the AST, so this reports the location of the first matching integer token.
    fn check_constants(&self) -> Result<()> {
        let domain = self.program.domain;
        let mut bad = None;
        self.program.body.visit_exprs(&mut |e| {
            fn walk(e: &Expr, d: Domain, bad: &mut Option<i64>) {
                match e {
                    Expr::Const(v) if !d.contains(*v) && bad.is_none() => *bad = Some(*v),
                    Expr::Bin(_, l, r) => {
                        walk(l, d, bad);
                        walk(r, d, bad);
                    }
                    Expr::Declassify(inner) => walk(inner, d, bad),
                    _ => {}
                }
            }
            walk(e, domain, &mut bad);
        });
        let Some(value) = bad else { return Ok(()) };
        let (line, col) = self
            .toks
            .iter()
            .rev()
            .find(|t| t.tok == Tok::Int(value))
            .map_or((0, 0), |t| (t.line, t.col));
        Err(Error::ConstantOutOfDomain {
            value,
            domain: domain.to_string(),
            line,
            col,
        })
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(v) => format!("`{v}`"),
        Tok::Sym(s) => format!("`{s}`"),
        Tok::Eof => "end of input".into(),
    }
}
