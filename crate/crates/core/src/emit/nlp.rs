//! Algebraic listing. Layout:
//!
//! ```text
//! VARIABLES
//! x_0 continuous [-1, 1]
//! q_0_0 binary [0, 1]
//! OBJECTIVE
//! maximize y_0
//! LINEAR
//! c_pre_0_0: zhat_0_0 - 2 * x_0 = 0.5
//! NONLINEAR
//! c_act_0_0: z_0_0 - sigmoid(zhat_0_0) = 0
//! COMPLEMENTARITY
//! c_compl_0_0: compl(z_0_0, z_0_0 - zhat_0_0)
//! INTERFACE
//! inputs: x_0
//! outputs: y_0
//! END
//! ```
//!
//! Every section header is always present. Lines starting with `#` are
//! comments. Functions are `exp, log, tanh, sigmoid, softplus`.

use std::fmt::Write;

use super::lp::num;
use super::{alias, parse_error, EmitError, Identifiers};
use crate::problem::{Domain, Expr, Func, ObjectiveSense, OptProblem, Sense, VarId};

pub fn emit_nlp(p: &OptProblem) -> String {
    let ids = Identifiers::new(p, alias);
    let name = |v: VarId| ids.var(v).to_string();
    let mut rows = ids.rows.iter();
    let mut out = String::new();
    out.push_str("# surrogate-compiler algebraic listing\n");
    out.push_str("# identifiers: `[` becomes `_` and `]` is dropped\n");
    out.push_str("VARIABLES\n");
    for (v, id) in p.variables().iter().zip(&ids.vars) {
        let domain = match v.domain {
            Domain::Continuous => "continuous",
            Domain::Binary => "binary",
        };
        let _ = writeln!(out, "{id} {domain} [{}, {}]", num(v.lb), num(v.ub));
    }
    let sense = match p.objective().sense {
        ObjectiveSense::Minimize => "minimize",
        ObjectiveSense::Maximize => "maximize",
    };
    let _ = writeln!(out, "OBJECTIVE\n{sense} {}", p.objective().expr.display(&name));
    out.push_str("LINEAR\n");
    for c in p.linear_constraints() {
        let lhs = Expr::linear(&c.terms, 0.0);
        let _ = writeln!(
            out,
            "{}: {} {} {}",
            rows.next().expect("row id"),
            lhs.display(&name),
            c.sense.symbol(),
            num(c.rhs)
        );
    }
    out.push_str("NONLINEAR\n");
    for c in p.nonlinear_constraints() {
        let _ = writeln!(
            out,
            "{}: {} {} {}",
            rows.next().expect("row id"),
            c.expr.display(&name),
            c.sense.symbol(),
            num(c.rhs)
        );
    }
    out.push_str("COMPLEMENTARITY\n");
    for c in p.complementarity_pairs() {
        let _ = writeln!(
            out,
            "{}: compl({}, {})",
            rows.next().expect("row id"),
            c.a.display(&name),
            c.b.display(&name)
        );
    }
    out.push_str("INTERFACE\n");
    for (label, vars) in [("inputs", p.input_vars()), ("outputs", p.output_vars())] {
        out.push_str(label);
        out.push(':');
        for v in vars {
            out.push(' ');
            out.push_str(ids.var(*v));
        }
        out.push('\n');
    }
    out.push_str("END\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn lex(s: &str, lineno: usize) -> Result<Vec<Tok>, EmitError> {
    let b = s.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let start = i;
        match b[i] {
            b' ' | b'\t' => i += 1,
            b'+' | b'-' | b'*' | b'/' | b'(' | b')' | b',' => {
                toks.push(Tok::Op(b[i] as char));
                i += 1;
            }
            b'0'..=b'9' | b'.' => {
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == b'.') {
                    i += 1;
                }
                if i < b.len() && matches!(b[i], b'e' | b'E') {
                    i += 1;
                    if i < b.len() && matches!(b[i], b'+' | b'-') {
                        i += 1;
                    }
                    while i < b.len() && b[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                let text = &s[start..i];
                toks.push(Tok::Num(
                    text.parse()
                        .map_err(|_| parse_error(lineno, format!("bad number `{text}`")))?,
                ));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || b[i] == b'_') {
                    i += 1;
                }
                toks.push(Tok::Ident(s[start..i].to_string()));
            }
            c => return Err(parse_error(lineno, format!("unexpected character `{}`", c as char))),
        }
    }
    Ok(toks)
}

/// Recursive-descent parser over one line's tokens.
struct Parser<'a> {
    toks: Vec<Tok>,
    pos: usize,
    lineno: usize,
    var: &'a dyn Fn(&str) -> Option<VarId>,
}

impl Parser<'_> {
    fn err(&self, message: impl Into<String>) -> EmitError {
        parse_error(self.lineno, message)
    }

    fn peek_op(&self, c: char) -> bool {
        self.toks.get(self.pos) == Some(&Tok::Op(c))
    }

    fn expect_op(&mut self, c: char) -> Result<(), EmitError> {
        if self.peek_op(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected `{c}`")))
        }
    }

    fn finish(&self) -> Result<(), EmitError> {
        if self.pos == self.toks.len() {
            Ok(())
        } else {
            Err(self.err("trailing input"))
        }
    }

    fn expr(&mut self) -> Result<Expr, EmitError> {
        let mut e = self.term()?;
        loop {
            if self.peek_op('+') {
                self.pos += 1;
                e = e + self.term()?;
            } else if self.peek_op('-') {
                self.pos += 1;
                e = e - self.term()?;
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, EmitError> {
        let mut e = self.unary()?;
        loop {
            if self.peek_op('*') {
                self.pos += 1;
                e = e * self.unary()?;
            } else if self.peek_op('/') {
                self.pos += 1;
                e = e / self.unary()?;
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, EmitError> {
        if self.peek_op('-') {
            self.pos += 1;
            return Ok(match self.toks.get(self.pos) {
                Some(Tok::Num(v)) => {
                    let v = -*v;
                    self.pos += 1;
                    Expr::Const(v)
                }
                _ => Expr::Const(-1.0) * self.unary()?,
            });
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, EmitError> {
        let tok = self
            .toks
            .get(self.pos)
            .cloned()
            .ok_or_else(|| self.err("unexpected end of line"))?;
        self.pos += 1;
        match tok {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect_op(')')?;
                Ok(e)
            }
            Tok::Ident(name) if self.peek_op('(') => {
                self.pos += 1;
                let arg = self.expr()?;
                if name == "max" {
                    self.expect_op(',')?;
                    let other = self.expr()?;
                    self.expect_op(')')?;
                    return Ok(arg.max(other));
                }
                self.expect_op(')')?;
                let f = Func::ALL
                    .into_iter()
                    .find(|f| f.name() == name)
                    .ok_or_else(|| self.err(format!("unknown function `{name}`")))?;
                Ok(arg.apply(f))
            }
            Tok::Ident(name) => (self.var)(&name)
                .map(Expr::Var)
                .ok_or_else(|| self.err(format!("unknown variable `{name}`"))),
            Tok::Op(c) => Err(self.err(format!("unexpected `{c}`"))),
        }
    }
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Section {
    Start,
    Variables,
    Objective,
    Linear,
    Nonlinear,
    Complementarity,
    Interface,
    End,
}

/// Splits `name: body`.
fn labelled(line: &str, lineno: usize) -> Result<(&str, &str), EmitError> {
    line.split_once(':')
        .map(|(n, b)| (n.trim(), b.trim()))
        .ok_or_else(|| parse_error(lineno, "expected `name: ...`"))
}

/// Splits `expr op number` at the relational operator.
fn relation(body: &str, lineno: usize) -> Result<(&str, Sense, f64), EmitError> {
    let (at, op, sense) = ["<=", ">=", "="]
        .into_iter()
        .zip([Sense::Le, Sense::Ge, Sense::Eq])
        .find_map(|(op, s)| body.find(op).map(|at| (at, op, s)))
        .ok_or_else(|| parse_error(lineno, "row has no relational operator"))?;
    let rhs = body[at + op.len()..].trim();
    let rhs = rhs
        .parse()
        .map_err(|_| parse_error(lineno, format!("bad right-hand side `{rhs}`")))?;
    Ok((body[..at].trim(), sense, rhs))
}

/// Reads a listing written by [`emit_nlp`] back into a problem.
pub fn parse_nlp(text: &str) -> Result<OptProblem, EmitError> {
    let mut p = OptProblem::new();
    let mut section = Section::Start;
    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let next = match line {
            "VARIABLES" => Some(Section::Variables),
            "OBJECTIVE" => Some(Section::Objective),
            "LINEAR" => Some(Section::Linear),
            "NONLINEAR" => Some(Section::Nonlinear),
            "COMPLEMENTARITY" => Some(Section::Complementarity),
            "INTERFACE" => Some(Section::Interface),
            "END" => Some(Section::End),
            _ => None,
        };
        if let Some(next) = next {
            if next <= section {
                return Err(parse_error(lineno, format!("section `{line}` out of order")));
            }
            section = next;
            continue;
        }
        let lookup = |n: &str| p.var_by_name(n);
        let parse_expr = |s: &str| -> Result<Expr, EmitError> {
            let mut parser = Parser {
                toks: lex(s, lineno)?,
                pos: 0,
                lineno,
                var: &lookup,
            };
            let e = parser.expr()?;
            parser.finish()?;
            Ok(e)
        };
        match section {
            Section::Start | Section::End => return Err(parse_error(lineno, "content outside a section")),
            Section::Variables => {
                let (head, range) = line
                    .split_once('[')
                    .ok_or_else(|| parse_error(lineno, "expected `name domain [lb, ub]`"))?;
                let mut words = head.split_whitespace();
                let (Some(name), Some(domain), None) = (words.next(), words.next(), words.next()) else {
                    return Err(parse_error(lineno, "expected `name domain [lb, ub]`"));
                };
                let domain = match domain {
                    "continuous" => Domain::Continuous,
                    "binary" => Domain::Binary,
                    d => return Err(parse_error(lineno, format!("unknown domain `{d}`"))),
                };
                let (lb, ub) = range
                    .trim_end_matches(']')
                    .split_once(',')
                    .ok_or_else(|| parse_error(lineno, "expected `[lb, ub]`"))?;
                let bound = |s: &str| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| parse_error(lineno, format!("bad bound `{s}`")))
                };
                p.add_var(name, domain, bound(lb)?, bound(ub)?)?;
            }
            Section::Objective => {
                let (sense, body) = line.split_once(' ').unwrap_or((line, ""));
                let sense = match sense {
                    "minimize" => ObjectiveSense::Minimize,
                    "maximize" => ObjectiveSense::Maximize,
                    s => return Err(parse_error(lineno, format!("unknown sense `{s}`"))),
                };
                let e = parse_expr(body)?;
                p.set_objective(sense, e)?;
            }
            Section::Linear => {
                let (name, body) = labelled(line, lineno)?;
                let (lhs, sense, rhs) = relation(body, lineno)?;
                let (terms, constant) = parse_expr(lhs)?
                    .as_linear()
                    .ok_or_else(|| parse_error(lineno, "row in LINEAR is not linear"))?;
                p.add_linear(name, terms, sense, rhs - constant)?;
            }
            Section::Nonlinear => {
                let (name, body) = labelled(line, lineno)?;
                let (lhs, sense, rhs) = relation(body, lineno)?;
                let e = parse_expr(lhs)?;
                p.add_nonlinear(name, e, sense, rhs)?;
            }
            Section::Complementarity => {
                let (name, body) = labelled(line, lineno)?;
                let inner = body
                    .strip_prefix("compl(")
                    .and_then(|b| b.strip_suffix(')'))
                    .ok_or_else(|| parse_error(lineno, "expected `compl(a, b)`"))?;
                let mut parser = Parser {
                    toks: lex(inner, lineno)?,
                    pos: 0,
                    lineno,
                    var: &lookup,
                };
                let a = parser.expr()?;
                parser.expect_op(',')?;
                let b = parser.expr()?;
                parser.finish()?;
                p.add_complementarity(name, a, b)?;
            }
            Section::Interface => {
                let (which, list) = labelled(line, lineno)?;
                let vars = list
                    .split_whitespace()
                    .map(|n| lookup(n).ok_or_else(|| parse_error(lineno, format!("unknown variable `{n}`"))))
                    .collect::<Result<Vec<_>, _>>()?;
                match which {
                    "inputs" => {
                        let outputs = p.output_vars().to_vec();
                        p.set_interface(vars, outputs)?;
                    }
                    "outputs" => {
                        let inputs = p.input_vars().to_vec();
                        p.set_interface(inputs, vars)?;
                    }
                    w => return Err(parse_error(lineno, format!("unknown interface list `{w}`"))),
                }
            }
        }
    }
    if section != Section::End {
        return Err(parse_error(text.lines().count(), "missing END"));
    }
    Ok(p)
}
