//! Reader and writer for the CPLEX LP text format (the subset with a linear
//! objective, linear rows, bounds and binaries).

use std::collections::HashMap;
use std::fmt::Write as _;

use imbal_core::milp::{LinearProgram, MilpProblem, Relation};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct LpParseError {
    pub line: usize,
    pub msg: String,
}

/// A parsed model. Maximization problems are stored negated.
#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    pub problem: MilpProblem,
    pub maximize: bool,
    pub objective_offset: f64,
}

impl LpModel {
    /// Objective value in the file's own sense.
    pub fn reported_objective(&self, internal: f64) -> f64 {
        let v = internal + self.objective_offset;
        if self.maximize {
            -v
        } else {
            v
        }
    }
}

const TERMS_PER_LINE: usize = 6;
const NAME_SYMBOLS: &str = "_!\"#$%&()/,.;?@'{}|~[]^";

fn valid_name(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || (NAME_SYMBOLS.contains(c) && c != '.') => {}
        _ => return false,
    }
    let lower = s.to_ascii_lowercase();
    if matches!(lower.as_str(), "inf" | "infinity" | "free") || s.len() > 255 {
        return false;
    }
    chars.all(|c| c.is_ascii_alphanumeric() || NAME_SYMBOLS.contains(c))
}

/// Names as given when all are valid and distinct, otherwise `prefix{i}`.
fn names(given: Vec<String>, prefix: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    if given.iter().all(|n| valid_name(n) && seen.insert(n.clone())) {
        given
    } else {
        (0..given.len()).map(|i| format!("{prefix}{i}")).collect()
    }
}

fn fmt_num(x: f64) -> String {
    if x == f64::INFINITY {
        "+inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

fn write_expr(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut n = 0;
    for (c, name) in terms {
        if n > 0 && n % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 || (c == 0.0 && c.is_sign_negative()) { '-' } else { '+' };
        if n == 0 && sign == '+' {
            let _ = write!(out, " {} {name}", fmt_num(c.abs()));
        } else {
            let _ = write!(out, " {sign} {} {name}", fmt_num(c.abs()));
        }
        n += 1;
    }
    if n == 0 {
        out.push_str(" 0");
    }
}

/// Render `problem` in LP format. Every variable appears in the objective
/// (zero coefficients included) so reading the file back preserves column
/// order.
pub fn write_lp(problem: &MilpProblem, comment: &str) -> String {
    let lp = &problem.lp;
    let vars = names((0..lp.num_vars()).map(|j| lp.var_name(j)).collect(), "x");
    let rows = names((0..lp.num_constraints()).map(|i| lp.row_name(i)).collect(), "c");
    let mut out = String::new();
    for line in comment.lines() {
        let _ = writeln!(out, "\\ {line}");
    }
    out.push_str("Minimize\n obj:");
    write_expr(&mut out, lp.objective().iter().enumerate().map(|(j, &c)| (c, vars[j].clone())));
    out.push_str("\nSubject To\n");
    for (i, row) in lp.constraints().iter().enumerate() {
        let _ = write!(out, " {}:", rows[i]);
        write_expr(&mut out, row.coeffs.iter().map(|&(j, c)| (c, vars[j].clone())));
        let rel = match row.relation {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Eq => "=",
        };
        let _ = writeln!(out, " {rel} {}", fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for j in 0..lp.num_vars() {
        if problem.is_binary(j) {
            continue;
        }
        let (lo, hi) = (lp.lower()[j], lp.upper()[j]);
        let name = &vars[j];
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            let _ = writeln!(out, " {name} free");
        } else if lo == hi {
            let _ = writeln!(out, " {name} = {}", fmt_num(lo));
        } else {
            let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(lo), fmt_num(hi));
        }
    }
    if !problem.binaries().is_empty() {
        out.push_str("Binaries\n");
        for chunk in problem.binaries().chunks(TERMS_PER_LINE * 2) {
            let line: Vec<&str> = chunk.iter().map(|&j| vars[j].as_str()).collect();
            let _ = writeln!(out, " {}", line.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Name(String),
    Plus,
    Minus,
    Colon,
    Rel(Relation),
}

fn tokenize(text: &str, line: usize) -> Result<Vec<(Tok, usize)>, LpParseError> {
    let err = |msg: String| LpParseError { line, msg };
    let b: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        match c {
            '+' => {
                out.push((Tok::Plus, line));
                i += 1;
            }
            '-' => {
                out.push((Tok::Minus, line));
                i += 1;
            }
            ':' => {
                out.push((Tok::Colon, line));
                i += 1;
            }
            '<' | '>' | '=' => {
                let next = b.get(i + 1).copied();
                let (rel, len) = match (c, next) {
                    ('<', Some('=')) | ('=', Some('<')) => (Relation::Le, 2),
                    ('>', Some('=')) | ('=', Some('>')) => (Relation::Ge, 2),
                    ('<', _) => (Relation::Le, 1),
                    ('>', _) => (Relation::Ge, 1),
                    _ => (Relation::Eq, 1),
                };
                out.push((Tok::Rel(rel), line));
                i += len;
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_digit() || b[i] == '.') {
                    i += 1;
                }
                if i < b.len() && (b[i] == 'e' || b[i] == 'E') {
                    let mut k = i + 1;
                    if k < b.len() && (b[k] == '+' || b[k] == '-') {
                        k += 1;
                    }
                    if k < b.len() && b[k].is_ascii_digit() {
                        i = k;
                        while i < b.len() && b[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let s: String = b[start..i].iter().collect();
                let x = s.parse().map_err(|_| err(format!("bad number `{s}`")))?;
                out.push((Tok::Num(x), line));
            }
            _ if c.is_ascii_alphabetic() || NAME_SYMBOLS.contains(c) => {
                let start = i;
                while i < b.len() && (b[i].is_ascii_alphanumeric() || NAME_SYMBOLS.contains(b[i])) {
                    i += 1;
                }
                let s: String = b[start..i].iter().collect();
                let lower = s.to_ascii_lowercase();
                if lower == "inf" || lower == "infinity" {
                    out.push((Tok::Num(f64::INFINITY), line));
                } else {
                    out.push((Tok::Name(s), line));
                }
            }
            _ => return Err(err(format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    Binaries,
    Generals,
    End,
}

/// Split a section header off the start of `line`, if there is one.
fn section_header(line: &str) -> Option<(Section, bool, &str)> {
    let lower = line.to_ascii_lowercase();
    let table: [(&str, Section, bool); 17] = [
        ("minimize", Section::Objective, false),
        ("minimise", Section::Objective, false),
        ("minimum", Section::Objective, false),
        ("min", Section::Objective, false),
        ("maximize", Section::Objective, true),
        ("maximise", Section::Objective, true),
        ("maximum", Section::Objective, true),
        ("max", Section::Objective, true),
        ("subject to", Section::Constraints, false),
        ("such that", Section::Constraints, false),
        ("s.t.", Section::Constraints, false),
        ("st", Section::Constraints, false),
        ("bounds", Section::Bounds, false),
        ("bound", Section::Bounds, false),
        ("binaries", Section::Binaries, false),
        ("binary", Section::Binaries, false),
        ("bin", Section::Binaries, false),
    ];
    let extra: [(&str, Section); 4] = [
        ("generals", Section::Generals),
        ("general", Section::Generals),
        ("gen", Section::Generals),
        ("end", Section::End),
    ];
    let matches = |kw: &str| {
        lower.starts_with(kw) && lower[kw.len()..].chars().next().is_none_or(|c| c.is_whitespace())
    };
    for (kw, sec, max) in table {
        if matches(kw) {
            return Some((sec, max, &line[kw.len()..]));
        }
    }
    for (kw, sec) in extra {
        if matches(kw) {
            return Some((sec, false, &line[kw.len()..]));
        }
    }
    None
}

struct Builder {
    lp: LinearProgram,
    index: HashMap<String, usize>,
    binaries: Vec<usize>,
}

impl Builder {
    fn var(&mut self, name: &str) -> usize {
        if let Some(&j) = self.index.get(name) {
            return j;
        }
        let j = self.lp.add_named_var(name, 0.0, 0.0, f64::INFINITY);
        self.index.insert(name.to_string(), j);
        j
    }
}

/// Parse `[name:] expr` terms up to the first relation. Returns the optional
/// label, merged coefficients and the constant part.
#[allow(clippy::type_complexity)]
fn parse_expr(
    toks: &[(Tok, usize)],
    pos: &mut usize,
    b: &mut Builder,
    stop_at_rel: bool,
) -> Result<(Option<String>, Vec<(usize, f64)>, f64), LpParseError> {
    let mut label = None;
    if let (Some((Tok::Name(n), _)), Some((Tok::Colon, _))) = (toks.get(*pos), toks.get(*pos + 1)) {
        label = Some(n.clone());
        *pos += 2;
    }
    let mut coeffs: Vec<(usize, f64)> = Vec::new();
    let mut constant = 0.0;
    let mut sign = 1.0;
    let mut coef: Option<f64> = None;
    let mut pending_sign = false;
    let mut end_line = toks.get(*pos).map_or(0, |t| t.1);
    while let Some((tok, line)) = toks.get(*pos) {
        end_line = *line;
        let err = |msg: &str| LpParseError {
            line: *line,
            msg: msg.to_string(),
        };
        match tok {
            Tok::Rel(_) if stop_at_rel => break,
            Tok::Rel(_) => return Err(err("relation in objective")),
            Tok::Colon => return Err(err("unexpected `:`")),
            Tok::Plus | Tok::Minus => {
                if let Some(c) = coef.take() {
                    constant += sign * c;
                    sign = 1.0;
                }
                if matches!(tok, Tok::Minus) {
                    sign = -sign;
                }
                pending_sign = true;
            }
            Tok::Num(x) => {
                if coef.is_some() {
                    return Err(err("two numbers in a row"));
                }
                coef = Some(*x);
                pending_sign = false;
            }
            Tok::Name(n) => {
                let j = b.var(n);
                let c = sign * coef.take().unwrap_or(1.0);
                match coeffs.iter_mut().find(|(k, _)| *k == j) {
                    Some(e) => e.1 += c,
                    None => coeffs.push((j, c)),
                }
                sign = 1.0;
                pending_sign = false;
            }
        }
        *pos += 1;
    }
    if pending_sign {
        return Err(LpParseError {
            line: end_line,
            msg: "sign without a term".into(),
        });
    }
    if let Some(c) = coef {
        constant += sign * c;
    }
    Ok((label, coeffs, constant))
}

fn signed_number(toks: &[(Tok, usize)], pos: &mut usize) -> Option<f64> {
    let mut sign = 1.0;
    loop {
        match toks.get(*pos) {
            Some((Tok::Plus, _)) => *pos += 1,
            Some((Tok::Minus, _)) => {
                sign = -sign;
                *pos += 1;
            }
            Some((Tok::Num(x), _)) => {
                *pos += 1;
                return Some(sign * x);
            }
            _ => return None,
        }
    }
}

fn parse_bound(toks: &[(Tok, usize)], line: usize, b: &mut Builder) -> Result<(), LpParseError> {
    let err = |msg: String| LpParseError { line, msg };
    if let [(Tok::Name(n), _), (Tok::Name(f), _)] = toks {
        if f.eq_ignore_ascii_case("free") {
            let j = b.var(n);
            b.lp.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
            return Ok(());
        }
    }
    // value rel name [rel value] | name rel value
    let mut pos = 0;
    let lead = signed_number(toks, &mut pos);
    let mut rel_after_lead = None;
    if lead.is_some() {
        match toks.get(pos) {
            Some((Tok::Rel(r), _)) => rel_after_lead = Some(*r),
            _ => return Err(err("expected a relation after the bound value".into())),
        }
        pos += 1;
    }
    let name = match toks.get(pos) {
        Some((Tok::Name(n), _)) => n.clone(),
        _ => return Err(err("expected a variable name in bound".into())),
    };
    pos += 1;
    let j = b.var(&name);
    let (mut lo, mut hi) = (b.lp.lower()[j], b.lp.upper()[j]);
    if let (Some(v), Some(r)) = (lead, rel_after_lead) {
        match r {
            Relation::Le => lo = v,
            Relation::Ge => hi = v,
            Relation::Eq => {
                lo = v;
                hi = v;
            }
        }
    }
    if pos < toks.len() {
        let r = match toks.get(pos) {
            Some((Tok::Rel(r), _)) => *r,
            _ => return Err(err(format!("unexpected token after `{name}`"))),
        };
        pos += 1;
        let v = signed_number(toks, &mut pos).ok_or_else(|| err("expected a bound value".into()))?;
        match r {
            Relation::Le => hi = v,
            Relation::Ge => lo = v,
            Relation::Eq => {
                lo = v;
                hi = v;
            }
        }
    }
    if pos != toks.len() {
        return Err(err("trailing tokens in bound".into()));
    }
    if lo > hi {
        return Err(err(format!("empty bound range [{lo}, {hi}] for `{name}`")));
    }
    b.lp.set_bounds(j, lo, hi);
    Ok(())
}

pub fn parse_lp(text: &str) -> Result<LpModel, LpParseError> {
    let mut section = Section::None;
    let mut maximize = false;
    let mut seen_objective = false;
    let mut objective_toks: Vec<(Tok, usize)> = Vec::new();
    let mut row_toks: Vec<(Tok, usize)> = Vec::new();
    let mut bound_lines: Vec<(Vec<(Tok, usize)>, usize)> = Vec::new();
    let mut binary_toks: Vec<(Tok, usize)> = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let mut line = raw.split('\\').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some((sec, max, rest)) = section_header(line) {
            if sec == Section::Generals {
                return Err(LpParseError {
                    line: line_no,
                    msg: "general integer variables are not supported".into(),
                });
            }
            if sec == Section::Objective {
                if seen_objective {
                    return Err(LpParseError {
                        line: line_no,
                        msg: "second objective section".into(),
                    });
                }
                seen_objective = true;
                maximize = max;
            }
            section = sec;
            line = rest.trim();
            if line.is_empty() {
                continue;
            }
        }
        let toks = tokenize(line, line_no)?;
        match section {
            Section::None => {
                return Err(LpParseError {
                    line: line_no,
                    msg: "content before the objective section".into(),
                })
            }
            Section::End => {
                return Err(LpParseError {
                    line: line_no,
                    msg: "content after End".into(),
                })
            }
            Section::Objective => objective_toks.extend(toks),
            Section::Constraints => row_toks.extend(toks),
            Section::Bounds => bound_lines.push((toks, line_no)),
            Section::Binaries => binary_toks.extend(toks),
            Section::Generals => unreachable!("rejected above"),
        }
    }
    if !seen_objective {
        return Err(LpParseError {
            line: text.lines().count().max(1),
            msg: "missing objective section".into(),
        });
    }

    let mut b = Builder {
        lp: LinearProgram::new(),
        index: HashMap::new(),
        binaries: Vec::new(),
    };
    let mut pos = 0;
    let (_, obj, offset) = parse_expr(&objective_toks, &mut pos, &mut b, false)?;
    let sense = if maximize { -1.0 } else { 1.0 };
    for (j, c) in obj {
        b.lp.set_objective(j, sense * c);
    }

    let mut pos = 0;
    while pos < row_toks.len() {
        let line = row_toks[pos].1;
        let (label, coeffs, constant) = parse_expr(&row_toks, &mut pos, &mut b, true)?;
        let rel = match row_toks.get(pos) {
            Some((Tok::Rel(r), _)) => *r,
            _ => {
                return Err(LpParseError {
                    line,
                    msg: "constraint without a relation".into(),
                })
            }
        };
        pos += 1;
        let rhs = signed_number(&row_toks, &mut pos).ok_or(LpParseError {
            line,
            msg: "constraint without a numeric right-hand side".into(),
        })?;
        if coeffs.is_empty() {
            return Err(LpParseError {
                line,
                msg: "constraint without variables".into(),
            });
        }
        let i = b.lp.add_constraint(coeffs, rel, rhs - constant);
        if let Some(name) = label {
            b.lp.set_row_name(i, name);
        }
    }

    for (toks, line) in &bound_lines {
        parse_bound(toks, *line, &mut b)?;
    }

    for (tok, line) in &binary_toks {
        match tok {
            Tok::Name(n) => {
                let j = b.var(n);
                b.lp.set_bounds(j, 0.0, 1.0);
                if !b.binaries.contains(&j) {
                    b.binaries.push(j);
                }
            }
            _ => {
                return Err(LpParseError {
                    line: *line,
                    msg: "expected variable names in Binaries".into(),
                })
            }
        }
    }

    let Builder { lp, binaries, .. } = b;
    let mut problem = MilpProblem::new(lp);
    for j in binaries {
        problem.mark_binary(j);
    }
    problem.validate().map_err(|e| LpParseError {
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(LpModel {
        problem,
        maximize,
        objective_offset: sense * offset,
    })
}
