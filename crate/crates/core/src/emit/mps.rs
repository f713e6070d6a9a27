use std::collections::HashMap;
use std::fmt::Write;

use super::lp::num;
use super::{alias, linear_objective, parse_error, EmitError, Format, Identifiers};
use crate::problem::{Domain, Expr, ObjectiveSense, OptProblem, Sense, VarId};

/// One fixed-field data line. Fields start in columns 2, 5, 15 and 25;
/// names longer than 8 characters or long numbers push later fields right,
/// which whitespace-splitting readers accept.
fn field_line(out: &mut String, kind: &str, a: &str, b: &str, value: Option<f64>) {
    let mut line = format!(" {kind:<2} {a:<8}  {b:<8}");
    if let Some(v) = value {
        let _ = write!(line, "  {:>12}", num(v));
    }
    out.push_str(line.trim_end());
    out.push('\n');
}

fn row_type(sense: Sense) -> &'static str {
    match sense {
        Sense::Le => "L",
        Sense::Ge => "G",
        Sense::Eq => "E",
    }
}

/// Fixed-field MPS with bracket-free aliases. A maximization is written as
/// minimizing the negated objective; the objective constant goes in the RHS
/// of the objective row with the usual sign flip.
pub fn emit_mps(p: &OptProblem) -> Result<String, EmitError> {
    let (obj_terms, constant) = linear_objective(p, Format::Mps)?;
    let flip = match p.objective().sense {
        ObjectiveSense::Minimize => 1.0,
        ObjectiveSense::Maximize => -1.0,
    };
    let ids = Identifiers::new(p, alias);

    // column-wise entries: objective first, then rows in order
    let mut columns: Vec<Vec<(&str, f64)>> = vec![Vec::new(); p.num_vars()];
    for &(v, c) in &obj_terms {
        columns[v.0].push(("obj", flip * c));
    }
    for (row, name) in p.linear_constraints().iter().zip(&ids.rows) {
        for &(v, c) in &row.terms {
            columns[v.0].push((name, c));
        }
    }

    let mut out = String::new();
    out.push_str("* surrogate-compiler MPS\n");
    if flip < 0.0 {
        out.push_str("* maximization written as minimization of the negated objective\n");
    }
    out.push_str("NAME          SURROGATE\nROWS\n");
    field_line(&mut out, "N", "obj", "", None);
    for (row, name) in p.linear_constraints().iter().zip(&ids.rows) {
        field_line(&mut out, row_type(row.sense), name, "", None);
    }

    out.push_str("COLUMNS\n");
    let mut in_marker = false;
    let mut markers = 0;
    let mut marker = |out: &mut String, kind: &str| {
        let name = format!("MARKER{markers:02}");
        markers += 1;
        let _ = writeln!(out, "    {name:<8}  'MARKER'                 '{kind}'");
    };
    for (j, var) in p.variables().iter().enumerate() {
        let binary = var.domain == Domain::Binary;
        if binary != in_marker {
            marker(&mut out, if binary { "INTORG" } else { "INTEND" });
            in_marker = binary;
        }
        let name = &ids.vars[j];
        if columns[j].is_empty() {
            // still declare the column
            field_line(&mut out, "", name, "obj", Some(0.0));
        }
        for &(row, c) in &columns[j] {
            field_line(&mut out, "", name, row, Some(c));
        }
    }
    if in_marker {
        marker(&mut out, "INTEND");
    }

    out.push_str("RHS\n");
    if constant != 0.0 {
        field_line(&mut out, "", "RHS", "obj", Some(-flip * constant));
    }
    for (row, name) in p.linear_constraints().iter().zip(&ids.rows) {
        if row.rhs != 0.0 {
            field_line(&mut out, "", "RHS", name, Some(row.rhs));
        }
    }
    out.push_str("RANGES\nBOUNDS\n");
    for (var, name) in p.variables().iter().zip(&ids.vars) {
        let mut bound = |kind: &str, v: Option<f64>| field_line(&mut out, kind, "BND", name, v);
        if var.lb == var.ub {
            bound("FX", Some(var.lb));
        } else if var.domain == Domain::Binary {
            bound("BV", None);
        } else if !var.lb.is_finite() && !var.ub.is_finite() {
            bound("FR", None);
        } else {
            if !var.lb.is_finite() {
                bound("MI", None);
            } else if var.lb != 0.0 {
                bound("LO", Some(var.lb));
            }
            if var.ub.is_finite() {
                bound("UP", Some(var.ub));
            }
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    Start,
    Name,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    ObjSense,
    End,
}

struct Column {
    name: String,
    integer: bool,
    entries: Vec<(String, f64)>,
    lb: Option<f64>,
    ub: Option<f64>,
    bv: bool,
}

fn number(text: &str, lineno: usize) -> Result<f64, EmitError> {
    text.parse()
        .map_err(|_| parse_error(lineno, format!("bad number `{text}`")))
}

/// Reader for the MPS subset [`emit_mps`] writes (fixed or free layout):
/// N/L/G/E rows, integer markers, RHS, empty RANGES, and bound types UP, LO,
/// FX, FR, MI, PL, BV. The first N row is the objective; its RHS entry is the
/// negated objective constant. Integer columns must be binary. An optional
/// `OBJSENSE` section may say `MAX`.
pub fn parse_mps(text: &str) -> Result<OptProblem, EmitError> {
    let mut section = Section::Start;
    let mut sense = ObjectiveSense::Minimize;
    let mut objective_row: Option<String> = None;
    let mut rows: Vec<(String, Sense)> = Vec::new();
    let mut row_index: HashMap<String, usize> = HashMap::new();
    let mut free_rows: Vec<String> = Vec::new();
    let mut columns: Vec<Column> = Vec::new();
    let mut col_index: HashMap<String, usize> = HashMap::new();
    let mut rhs: HashMap<String, f64> = HashMap::new();
    let mut integer = false;

    for (k, line) in text.lines().enumerate() {
        let lineno = k + 1;
        if line.starts_with('*') || line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if !line.starts_with([' ', '\t']) {
            section = match toks[0].to_ascii_uppercase().as_str() {
                "NAME" => Section::Name,
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "OBJSENSE" => {
                    if let Some(s) = toks.get(1) {
                        if s.eq_ignore_ascii_case("MAX") {
                            sense = ObjectiveSense::Maximize;
                        }
                    }
                    Section::ObjSense
                }
                "ENDATA" => Section::End,
                other => return Err(parse_error(lineno, format!("unknown section `{other}`"))),
            };
            continue;
        }
        match section {
            Section::Start | Section::Name | Section::End => {
                return Err(parse_error(lineno, "data line outside a section"));
            }
            Section::ObjSense => match toks[0].to_ascii_uppercase().as_str() {
                "MAX" | "MAXIMIZE" => sense = ObjectiveSense::Maximize,
                "MIN" | "MINIMIZE" => sense = ObjectiveSense::Minimize,
                other => return Err(parse_error(lineno, format!("unknown sense `{other}`"))),
            },
            Section::Rows => {
                let [kind, name] = toks[..] else {
                    return Err(parse_error(lineno, "ROWS entries are `type name`"));
                };
                let row_sense = match kind.to_ascii_uppercase().as_str() {
                    "N" => {
                        if objective_row.is_none() {
                            objective_row = Some(name.to_string());
                        } else {
                            free_rows.push(name.to_string());
                        }
                        continue;
                    }
                    "L" => Sense::Le,
                    "G" => Sense::Ge,
                    "E" => Sense::Eq,
                    other => return Err(parse_error(lineno, format!("unknown row type `{other}`"))),
                };
                if row_index.insert(name.to_string(), rows.len()).is_some() {
                    return Err(parse_error(lineno, format!("duplicate row `{name}`")));
                }
                rows.push((name.to_string(), row_sense));
            }
            Section::Columns => {
                if toks.get(1) == Some(&"'MARKER'") {
                    match toks.get(2).copied() {
                        Some("'INTORG'") => integer = true,
                        Some("'INTEND'") => integer = false,
                        _ => return Err(parse_error(lineno, "unknown marker")),
                    }
                    continue;
                }
                if toks.len() != 3 && toks.len() != 5 {
                    return Err(parse_error(
                        lineno,
                        "COLUMNS entries are `column row value [row value]`",
                    ));
                }
                let name = toks[0];
                let j = *col_index.entry(name.to_string()).or_insert_with(|| {
                    columns.push(Column {
                        name: name.to_string(),
                        integer,
                        entries: Vec::new(),
                        lb: None,
                        ub: None,
                        bv: false,
                    });
                    columns.len() - 1
                });
                for pair in toks[1..].chunks(2) {
                    columns[j].entries.push((pair[0].to_string(), number(pair[1], lineno)?));
                }
            }
            Section::Rhs => {
                let pairs = if toks.len() % 2 == 1 { &toks[1..] } else { &toks[..] };
                for pair in pairs.chunks(2) {
                    *rhs.entry(pair[0].to_string()).or_default() += number(pair[1], lineno)?;
                }
            }
            Section::Ranges => return Err(parse_error(lineno, "range rows are not supported")),
            Section::Bounds => {
                let kind = toks[0].to_ascii_uppercase();
                let needs_value = matches!(kind.as_str(), "UP" | "LO" | "FX");
                let (name, value) = match (needs_value, toks.len()) {
                    (true, 4) => (toks[2], Some(number(toks[3], lineno)?)),
                    (true, 3) => (toks[1], Some(number(toks[2], lineno)?)),
                    (false, 3 | 4) => (toks[2], None),
                    (false, 2) => (toks[1], None),
                    _ => return Err(parse_error(lineno, "malformed bound")),
                };
                let j = *col_index
                    .get(name)
                    .ok_or_else(|| parse_error(lineno, format!("bound on unknown column `{name}`")))?;
                let c = &mut columns[j];
                match kind.as_str() {
                    "UP" => {
                        let v = value.expect("value read");
                        // classic convention: a negative upper bound with no
                        // lower bound makes the column free below
                        if v < 0.0 && c.lb.is_none() {
                            c.lb = Some(f64::NEG_INFINITY);
                        }
                        c.ub = Some(v);
                    }
                    "LO" => c.lb = value,
                    "FX" => (c.lb, c.ub) = (value, value),
                    "FR" => (c.lb, c.ub) = (Some(f64::NEG_INFINITY), Some(f64::INFINITY)),
                    "MI" => c.lb = Some(f64::NEG_INFINITY),
                    "PL" => c.ub = Some(f64::INFINITY),
                    "BV" => {
                        c.bv = true;
                        (c.lb, c.ub) = (Some(0.0), Some(1.0));
                    }
                    other => return Err(parse_error(lineno, format!("unsupported bound type `{other}`"))),
                }
            }
        }
    }
    if section != Section::End {
        return Err(parse_error(text.lines().count(), "missing ENDATA"));
    }
    let objective_row = objective_row.ok_or_else(|| parse_error(0, "no objective (N) row"))?;

    let mut p = OptProblem::new();
    let mut row_terms: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); rows.len()];
    let mut obj_terms = Vec::new();
    for c in &columns {
        let binary = c.integer || c.bv;
        let default_ub = if binary { 1.0 } else { f64::INFINITY };
        let v = p.add_var(
            c.name.clone(),
            if binary { Domain::Binary } else { Domain::Continuous },
            c.lb.unwrap_or(0.0),
            c.ub.unwrap_or(default_ub),
        )?;
        for (row, coef) in &c.entries {
            if *row == objective_row {
                obj_terms.push((v, *coef));
            } else if let Some(&i) = row_index.get(row) {
                row_terms[i].push((v, *coef));
            } else if !free_rows.contains(row) {
                return Err(parse_error(0, format!("column `{}` uses unknown row `{row}`", c.name)));
            }
        }
    }
    for ((name, row_sense), terms) in rows.into_iter().zip(row_terms) {
        let b = rhs.get(&name).copied().unwrap_or(0.0);
        p.add_linear(name, terms, row_sense, b)?;
    }
    let constant = -rhs.get(&objective_row).copied().unwrap_or(0.0);
    p.set_objective(sense, Expr::linear(&crate::problem::merge_terms(obj_terms), constant))?;
    Ok(p)
}
