use std::collections::HashMap;
use std::fmt::Write;

use super::{linear_objective, parse_error, EmitError, Format, Identifiers};
use crate::numfmt::g17;
use crate::problem::{Domain, Expr, ObjectiveSense, OptProblem, Sense, VarId};

/// Formats `g17` without a negative zero.
pub(super) fn num(v: f64) -> String {
    g17(v + 0.0)
}

/// `2 x + 1 y - 3 z`; an empty sum is written `0 first`.
fn write_terms(out: &mut String, terms: &[(VarId, f64)], ids: &Identifiers) {
    if terms.is_empty() {
        let _ = write!(out, "0 {}", ids.vars[0]);
        return;
    }
    for (k, &(v, c)) in terms.iter().enumerate() {
        let name = ids.var(v);
        match (k, c < 0.0) {
            (0, _) => write!(out, "{} {name}", num(c)),
            (_, true) => write!(out, " - {} {name}", num(-c)),
            (_, false) => write!(out, " + {} {name}", num(c)),
        }
        .expect("writing to a String");
    }
}

/// CPLEX LP text, one row per line, variables in declaration order.
pub fn emit_lp(p: &OptProblem) -> Result<String, EmitError> {
    let (obj_terms, constant) = linear_objective(p, Format::Lp)?;
    let ids = Identifiers::new(p, str::to_string);
    let binaries = p.binaries().count();
    let mut out = String::new();
    let _ = writeln!(out, "\\ surrogate-compiler LP");
    let _ = writeln!(
        out,
        "\\ {} variables ({binaries} binary), {} constraints",
        p.num_vars(),
        p.linear_constraints().len()
    );
    out.push_str(match p.objective().sense {
        ObjectiveSense::Minimize => "Minimize\n",
        ObjectiveSense::Maximize => "Maximize\n",
    });
    out.push_str(" obj: ");
    write_terms(&mut out, &obj_terms, &ids);
    if constant != 0.0 {
        let sign = if constant < 0.0 { '-' } else { '+' };
        let _ = write!(out, " {sign} {}", num(constant.abs()));
    }
    out.push_str("\nSubject To\n");
    for (c, name) in p.linear_constraints().iter().zip(&ids.rows) {
        let _ = write!(out, " {name}: ");
        write_terms(&mut out, &c.terms, &ids);
        let _ = writeln!(out, " {} {}", c.sense.symbol(), num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (v, name) in p.variables().iter().zip(&ids.vars) {
        let line = match (v.lb.is_finite(), v.ub.is_finite()) {
            _ if v.lb == v.ub => format!("{name} = {}", num(v.lb)),
            (false, false) => format!("{name} free"),
            (false, true) => format!("-inf <= {name} <= {}", num(v.ub)),
            (true, false) => format!("{name} >= {}", num(v.lb)),
            (true, true) => format!("{} <= {name} <= {}", num(v.lb), num(v.ub)),
        };
        let _ = writeln!(out, " {line}");
    }
    if binaries > 0 {
        out.push_str("Binaries\n");
        for v in p.binaries() {
            let _ = writeln!(out, " {}", ids.var(v));
        }
    }
    out.push_str("End\n");
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Rel(Sense),
    Plus,
    Minus,
    Colon,
}

fn lex(line: &str, lineno: usize) -> Result<Vec<Tok>, EmitError> {
    let b = line.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\r' => i += 1,
            b'+' => {
                toks.push(Tok::Plus);
                i += 1;
            }
            b'-' => {
                toks.push(Tok::Minus);
                i += 1;
            }
            b':' => {
                toks.push(Tok::Colon);
                i += 1;
            }
            b'<' | b'>' | b'=' => {
                i += 1;
                while i < b.len() && matches!(b[i], b'<' | b'>' | b'=') {
                    i += 1;
                }
                let sense = match &line[start..i] {
                    "<=" | "=<" | "<" => Sense::Le,
                    ">=" | "=>" | ">" => Sense::Ge,
                    "=" => Sense::Eq,
                    op => return Err(parse_error(lineno, format!("unknown operator `{op}`"))),
                };
                toks.push(Tok::Rel(sense));
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
                let text = &line[start..i];
                let v = text
                    .parse()
                    .map_err(|_| parse_error(lineno, format!("bad number `{text}`")))?;
                toks.push(Tok::Num(v));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < b.len() && (b[i].is_ascii_alphanumeric() || matches!(b[i], b'_' | b'[' | b']' | b'.')) {
                    i += 1;
                }
                toks.push(Tok::Name(line[start..i].to_string()));
            }
            _ => return Err(parse_error(lineno, format!("unexpected character `{}`", c as char))),
        }
    }
    Ok(toks)
}

fn is_infinity(name: &str) -> bool {
    name.eq_ignore_ascii_case("inf") || name.eq_ignore_ascii_case("infinity")
}

/// Linear sum of `[sign] [coef] [name]` terms; returns the named terms and
/// the constant.
fn parse_sum(toks: &[Tok], lineno: usize) -> Result<(Vec<(String, f64)>, f64), EmitError> {
    let mut terms = Vec::new();
    let mut constant = 0.0;
    let mut i = 0;
    while i < toks.len() {
        let mut sign = 1.0;
        let mut signed = false;
        while let Some(t @ (Tok::Plus | Tok::Minus)) = toks.get(i) {
            if *t == Tok::Minus {
                sign = -sign;
            }
            signed = true;
            i += 1;
        }
        if i > 0 && !signed {
            return Err(parse_error(lineno, "expected `+` or `-` between terms"));
        }
        let coef = match toks.get(i) {
            Some(Tok::Num(v)) => {
                i += 1;
                Some(*v)
            }
            _ => None,
        };
        match toks.get(i) {
            Some(Tok::Name(n)) => {
                terms.push((n.clone(), sign * coef.unwrap_or(1.0)));
                i += 1;
            }
            _ => match coef {
                Some(c) => constant += sign * c,
                None => return Err(parse_error(lineno, "expected a term")),
            },
        }
    }
    Ok((terms, constant))
}

/// Splits an optional `label:` prefix.
fn label(toks: &[Tok]) -> (Option<String>, &[Tok]) {
    match toks {
        [Tok::Name(n), Tok::Colon, rest @ ..] => (Some(n.clone()), rest),
        _ => (None, toks),
    }
}

/// Signed number, possibly `inf`.
fn signed_value(toks: &[Tok]) -> Option<(f64, usize)> {
    let (sign, rest, used) = match toks {
        [Tok::Minus, rest @ ..] => (-1.0, rest, 1),
        [Tok::Plus, rest @ ..] => (1.0, rest, 1),
        _ => (1.0, toks, 0),
    };
    match rest.first()? {
        Tok::Num(v) => Some((sign * v, used + 1)),
        Tok::Name(n) if is_infinity(n) => Some((sign * f64::INFINITY, used + 1)),
        _ => None,
    }
}

#[derive(Debug)]
enum BoundItem {
    Value(f64),
    Var(String),
    Rel(Sense),
}

fn bound_items(toks: &[Tok], lineno: usize) -> Result<Vec<BoundItem>, EmitError> {
    let mut items = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if let Some((v, used)) = signed_value(&toks[i..]) {
            items.push(BoundItem::Value(v));
            i += used;
            continue;
        }
        items.push(match &toks[i] {
            Tok::Name(n) => BoundItem::Var(n.clone()),
            Tok::Rel(s) => BoundItem::Rel(*s),
            t => return Err(parse_error(lineno, format!("unexpected {t:?} in bound"))),
        });
        i += 1;
    }
    Ok(items)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Preamble,
    Objective,
    Rows,
    Bounds,
    Binaries,
    End,
}

fn section_keyword(words: &[&str]) -> Option<(Section, Option<ObjectiveSense>, usize)> {
    let first = words.first()?.to_ascii_lowercase();
    let second = words.get(1).map(|w| w.to_ascii_lowercase());
    Some(match (first.as_str(), second.as_deref()) {
        ("minimize" | "minimise" | "minimum" | "min", _) => (Section::Objective, Some(ObjectiveSense::Minimize), 1),
        ("maximize" | "maximise" | "maximum" | "max", _) => (Section::Objective, Some(ObjectiveSense::Maximize), 1),
        ("subject" | "such", Some("to" | "that")) => (Section::Rows, None, 2),
        ("st" | "s.t." | "st.", _) => (Section::Rows, None, 1),
        ("bounds" | "bound", _) => (Section::Bounds, None, 1),
        ("binaries" | "binary" | "bin", _) => (Section::Binaries, None, 1),
        ("end", None) => (Section::End, None, 1),
        _ => return None,
    })
}

struct RawRow {
    name: String,
    terms: Vec<(String, f64)>,
    sense: Sense,
    rhs: f64,
}

/// Minimal reader for the LP subset [`emit_lp`] writes: one objective, row
/// or bound per line, `\` comments, and a `Binaries` section. Variables are
/// declared in the order the `Bounds` section lists them, then by first
/// use; unlisted variables get the LP default `[0, inf)`.
pub fn parse_lp(text: &str) -> Result<OptProblem, EmitError> {
    let mut section = Section::Preamble;
    let mut sense = ObjectiveSense::Minimize;
    let mut objective: Option<(Vec<(String, f64)>, f64)> = None;
    let mut rows: Vec<RawRow> = Vec::new();
    let mut bounds: Vec<(String, Option<f64>, Option<f64>)> = Vec::new();
    let mut binaries: Vec<String> = Vec::new();

    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        let line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let mut body = line;
        if let Some((s, obj_sense, used)) = section_keyword(&words) {
            if section == Section::End {
                return Err(parse_error(lineno, "content after End"));
            }
            section = s;
            if let Some(o) = obj_sense {
                sense = o;
            }
            // the rest of the line, if any, belongs to the section
            for _ in 0..used {
                let word_end = body.find(char::is_whitespace).unwrap_or(body.len());
                body = body[word_end..].trim_start();
            }
            if body.is_empty() {
                continue;
            }
        }
        let toks = lex(body, lineno)?;
        match section {
            Section::Preamble => return Err(parse_error(lineno, "expected Minimize or Maximize")),
            Section::End => return Err(parse_error(lineno, "content after End")),
            Section::Objective => {
                if objective.is_some() {
                    return Err(parse_error(lineno, "objective must fit on one line"));
                }
                let (_, rest) = label(&toks);
                objective = Some(parse_sum(rest, lineno)?);
            }
            Section::Rows => {
                let (name, rest) = label(&toks);
                let name = name.unwrap_or_else(|| format!("R{}", rows.len() + 1));
                let rel = rest
                    .iter()
                    .position(|t| matches!(t, Tok::Rel(_)))
                    .ok_or_else(|| parse_error(lineno, "row has no relational operator"))?;
                let Tok::Rel(row_sense) = rest[rel] else { unreachable!() };
                let (terms, constant) = parse_sum(&rest[..rel], lineno)?;
                let rhs = match signed_value(&rest[rel + 1..]) {
                    Some((v, used)) if used == rest.len() - rel - 1 && v.is_finite() => v,
                    _ => return Err(parse_error(lineno, "right-hand side must be a single number")),
                };
                rows.push(RawRow {
                    name,
                    terms,
                    sense: row_sense,
                    rhs: rhs - constant,
                });
            }
            Section::Bounds => {
                use BoundItem::*;
                if let [Tok::Name(n), Tok::Name(f)] = toks.as_slice() {
                    if f.eq_ignore_ascii_case("free") {
                        bounds.push((n.clone(), Some(f64::NEG_INFINITY), Some(f64::INFINITY)));
                        continue;
                    }
                }
                let bound = match bound_items(&toks, lineno)?.as_slice() {
                    [Var(n), Rel(s), Value(v)] => match s {
                        Sense::Le => (n.clone(), None, Some(*v)),
                        Sense::Ge => (n.clone(), Some(*v), None),
                        Sense::Eq => (n.clone(), Some(*v), Some(*v)),
                    },
                    [Value(v), Rel(s), Var(n)] => match s {
                        Sense::Le => (n.clone(), Some(*v), None),
                        Sense::Ge => (n.clone(), None, Some(*v)),
                        Sense::Eq => (n.clone(), Some(*v), Some(*v)),
                    },
                    [Value(a), Rel(Sense::Le), Var(n), Rel(Sense::Le), Value(b)] => (n.clone(), Some(*a), Some(*b)),
                    [Value(a), Rel(Sense::Ge), Var(n), Rel(Sense::Ge), Value(b)] => (n.clone(), Some(*b), Some(*a)),
                    _ => return Err(parse_error(lineno, format!("cannot read bound `{body}`"))),
                };
                bounds.push(bound);
            }
            Section::Binaries => {
                for t in toks {
                    match t {
                        Tok::Name(n) => binaries.push(n),
                        t => return Err(parse_error(lineno, format!("unexpected {t:?} in Binaries"))),
                    }
                }
            }
        }
    }
    if section != Section::End {
        return Err(parse_error(text.lines().count(), "missing End"));
    }

    // declaration order: Bounds, then first use
    let mut order: Vec<String> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut declare = |n: &str| {
        if !seen.contains_key(n) {
            seen.insert(n.to_string(), order.len());
            order.push(n.to_string());
        }
    };
    bounds.iter().for_each(|(n, _, _)| declare(n));
    if let Some((terms, _)) = &objective {
        terms.iter().for_each(|(n, _)| declare(n));
    }
    rows.iter().flat_map(|r| &r.terms).for_each(|(n, _)| declare(n));
    binaries.iter().for_each(|n| declare(n));

    let mut lb = vec![0.0; order.len()];
    let mut ub = vec![f64::INFINITY; order.len()];
    let mut domain = vec![Domain::Continuous; order.len()];
    for n in &binaries {
        let i = seen[n];
        domain[i] = Domain::Binary;
        ub[i] = 1.0;
    }
    for (n, l, u) in bounds {
        let i = seen[&n];
        if let Some(l) = l {
            lb[i] = l;
        }
        if let Some(u) = u {
            ub[i] = u;
        }
    }

    let mut p = OptProblem::new();
    for (i, n) in order.iter().enumerate() {
        p.add_var(n.clone(), domain[i], lb[i], ub[i])?;
    }
    let resolve = |terms: Vec<(String, f64)>| -> Vec<(VarId, f64)> {
        terms.into_iter().map(|(n, c)| (VarId(seen[&n]), c)).collect()
    };
    for r in rows {
        p.add_linear(r.name, resolve(r.terms), r.sense, r.rhs)?;
    }
    let (terms, constant) = objective.unwrap_or_default();
    let terms = crate::problem::merge_terms(resolve(terms));
    p.set_objective(sense, Expr::linear(&terms, constant))?;
    Ok(p)
}
