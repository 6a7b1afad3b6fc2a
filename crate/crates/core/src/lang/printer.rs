//! Pretty-printer producing `.dpol` text that parses back to the same AST.

use std::fmt::Write;

use crate::lang::ast::*;

pub fn print(program: &Program) -> String {
    let mut out = String::new();
    out.push_str(&format!("labels {};\n", program.labels.join(", ")));
    if !program.locks.is_empty() {
        out.push_str(&format!("locks {};\n", program.locks.join(", ")));
    }
    if !program.vars.is_empty() {
        let vars: Vec<String> = program
            .vars
            .iter()
            .map(|v| format!("{}:{}", v.name, program.label_name(v.label)))
            .collect();
        out.push_str(&format!("vars {};\n", vars.join(", ")));
    }
    out.push_str(&format!("domain {};\n", program.domain));
    if let Some(plabels) = &program.plabels {
        for (i, label) in plabels.iter().enumerate() {
            let _ = write!(out, "plabel {}", program.vars[i].name);
            for (actor, guards) in &label.clauses {
                let _ = write!(out, " {{{}", program.label_name(*actor));
                if !guards.is_empty() {
                    let names: Vec<&str> = guards.iter().map(|l| program.lock_name(*l)).collect();
                    let _ = write!(out, ": {}", names.join(", "));
                }
                out.push('}');
            }
            out.push_str(";\n");
        }
    }
    out.push_str(&print_command(program, &program.body));
    out.push('\n');
    out
}

/// Prints a command (or continuation) on its own, using `program`'s names.
pub fn print_command(program: &Program, cmd: &Command) -> String {
    let mut out = String::new();
    command(program, cmd, 0, &mut out);
    out
}

pub fn print_expr(program: &Program, e: &Expr) -> String {
    let mut out = String::new();
    expr(program, e, &mut out);
    out
}

fn indent(level: usize, out: &mut String) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn command(p: &Program, cmd: &Command, level: usize, out: &mut String) {
    let parts = cmd.flatten();
    for (i, c) in parts.iter().enumerate() {
        if i > 0 {
            out.push_str(";\n");
        }
        indent(level, out);
        single(p, c, level, out);
    }
}

fn block(p: &Program, cmd: &Command, level: usize, out: &mut String) {
    out.push_str("{\n");
    command(p, cmd, level + 1, out);
    out.push('\n');
    indent(level, out);
    out.push('}');
}

fn single(p: &Program, cmd: &Command, level: usize, out: &mut String) {
    match cmd {
        Command::Skip => out.push_str("skip"),
        Command::Assign(v, e) => {
            let _ = write!(out, "{} := ", p.var_name(*v));
            expr(p, e, out);
        }
        Command::If(c, a, b) => {
            out.push_str("if ");
            expr(p, c, out);
            out.push(' ');
            block(p, a, level, out);
            if **b != Command::Skip {
                out.push_str(" else ");
                block(p, b, level, out);
            }
        }
        Command::While(c, body) => {
            out.push_str("while ");
            expr(p, c, out);
            out.push(' ');
            block(p, body, level, out);
        }
        Command::Allow(a, b) => {
            let _ = write!(out, "allow {} -> {}", p.label_name(*a), p.label_name(*b));
        }
        Command::Revoke(a, b) => {
            let _ = write!(out, "revoke {} -> {}", p.label_name(*a), p.label_name(*b));
        }
        Command::Open(l) => {
            let _ = write!(out, "open {}", p.lock_name(*l));
        }
        Command::Close(l) => {
            let _ = write!(out, "close {}", p.lock_name(*l));
        }
        Command::Seq(..) => unreachable!("flattened"),
    }
}

fn expr(p: &Program, e: &Expr, out: &mut String) {
    match e {
        Expr::Const(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Var(v) => out.push_str(p.var_name(*v)),
        Expr::Bin(op, l, r) => {
            operand(p, l, out);
            let _ = write!(out, " {} ", op.symbol());
            operand(p, r, out);
        }
        Expr::Flows(a, b) => {
            let _ = write!(out, "flows({}, {})", p.label_name(*a), p.label_name(*b));
        }
        Expr::Declassify(inner) => {
            out.push_str("declassify(");
            expr(p, inner, out);
            out.push(')');
        }
    }
}

fn operand(p: &Program, e: &Expr, out: &mut String) {
    if matches!(e, Expr::Bin(..)) {
        out.push('(');
        expr(p, e, out);
        out.push(')');
    } else {
        expr(p, e, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse;

    #[test]
    fn round_trips_nested_blocks() {
        let src = "labels A, B; locks L; vars a:A, b:B; domain 0..3;\
                   plabel b {B} {A: L};\
                   open L; while a < 3 { if flows(B, A) { a := declassify(a + b * 2) } else { skip; b := 1 } };\
                   a := (a xor b) - 1; close L";
        let p = parse(src).unwrap();
        let printed = print(&p);
        assert_eq!(parse(&printed).unwrap(), p, "{printed}");
    }
}
