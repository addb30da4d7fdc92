//! Line-oriented text formats for templates, instances and algebras.
//!
//! `#` starts a comment. Variables are numbered from 1 in files.
//!
//! ```text
//! # template
//! domain 2
//! relation X 2
//! 0 1
//! 1 0
//! end
//!
//! # instance; `universe` is needed only without a template
//! universe 2
//! vars 3
//! domainof 1 0 1
//! constraint X 1 2
//! inline 2 2 3 Y
//! 0 1
//! 1 0
//! end
//!
//! # algebra
//! universe 2
//! operation m 3
//! 0 0 0 -> 0
//! ...
//! end
//! flag idempotent
//! flag taylor m(x1,x2,x3)
//! flag redop f
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use thiserror::Error;

use crate::algebra::{is_weak_near_unanimity, FiniteAlgebra, Operation, Term};
use crate::reduce::orient_red;
use crate::structures::{Constraint, Instance, Relation, RelationalTemplate, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    /// 1-based; 0 when the problem is at end of input.
    pub line: usize,
    pub message: String,
}

fn err<T>(line: usize, message: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError { line, message: message.into() })
}

/// Non-empty lines without comments, with their line numbers.
fn lines(text: &str) -> Vec<(usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let l = l.split('#').next().unwrap_or("");
            let words: Vec<&str> = l.split_whitespace().collect();
            (!words.is_empty()).then_some((i + 1, words))
        })
        .collect()
}

fn number<T: std::str::FromStr>(line: usize, word: &str, what: &str) -> Result<T, FormatError> {
    word.parse().or_else(|_| err(line, format!("expected {what}, found `{word}`")))
}

fn expect_args(line: usize, words: &[&str], n: usize) -> Result<(), FormatError> {
    if words.len() != n + 1 {
        return err(line, format!("`{}` takes {n} argument(s)", words[0]));
    }
    Ok(())
}

/// Reads tuple lines up to `end`; `pos` points after the header.
fn tuples(
    ls: &[(usize, Vec<&str>)],
    pos: &mut usize,
    arity: usize,
    universe: usize,
    header: usize,
) -> Result<BTreeSet<Vec<Value>>, FormatError> {
    let mut out = BTreeSet::new();
    loop {
        let Some((line, words)) = ls.get(*pos) else {
            return err(header, "block not terminated by `end`");
        };
        *pos += 1;
        if words == &["end"] {
            return Ok(out);
        }
        if words.len() != arity {
            return err(*line, format!("tuple has {} entries, expected {arity}", words.len()));
        }
        let t: Vec<Value> = words.iter().map(|w| number(*line, w, "a value")).collect::<Result<_, _>>()?;
        if let Some(v) = t.iter().find(|&&v| v as usize >= universe) {
            return err(*line, format!("value {v} outside the universe 0..{}", universe.saturating_sub(1)));
        }
        out.insert(t);
    }
}

pub fn parse_template(text: &str) -> Result<RelationalTemplate, FormatError> {
    let ls = lines(text);
    let mut universe = None;
    let mut relations: Vec<Relation> = Vec::new();
    let mut pos = 0;
    while let Some((line, words)) = ls.get(pos) {
        let line = *line;
        pos += 1;
        match words[0] {
            "domain" => {
                expect_args(line, words, 1)?;
                let n: usize = number(line, words[1], "a universe size")?;
                if n == 0 {
                    return err(line, "universe must be non-empty");
                }
                universe = Some(n);
            }
            "relation" => {
                expect_args(line, words, 2)?;
                let Some(n) = universe else { return err(line, "`relation` before `domain`") };
                let arity: usize = number(line, words[2], "an arity")?;
                if arity == 0 {
                    return err(line, "arity must be positive");
                }
                let name = words[1].to_string();
                if relations.iter().any(|r| r.name == name) {
                    return err(line, format!("relation {name} defined twice"));
                }
                let ts = tuples(&ls, &mut pos, arity, n, line)?;
                relations.push(Relation { name, arity, tuples: ts });
            }
            other => return err(line, format!("unknown directive `{other}`")),
        }
    }
    let Some(n) = universe else { return err(0, "missing `domain`") };
    RelationalTemplate::new(n, relations).or_else(|e| err(0, e.to_string()))
}

pub fn serialize_template(t: &RelationalTemplate) -> String {
    let mut out = format!("domain {}\n", t.universe_size);
    for r in &t.relations {
        write_relation(&mut out, &format!("relation {} {}", r.name, r.arity), r);
    }
    out
}

fn write_relation(out: &mut String, header: &str, r: &Relation) {
    out.push_str(header);
    out.push('\n');
    for t in &r.tuples {
        let words: Vec<String> = t.iter().map(ToString::to_string).collect();
        out.push_str(&words.join(" "));
        out.push('\n');
    }
    out.push_str("end\n");
}

fn var(line: usize, word: &str, n: Option<usize>) -> Result<usize, FormatError> {
    let Some(n) = n else { return err(line, "variables used before `vars`") };
    let x: usize = number(line, word, "a variable")?;
    if x == 0 || x > n {
        return err(line, format!("variable {x} outside 1..{n}"));
    }
    Ok(x - 1)
}

/// Parses an instance; named constraints are looked up in `template`.
pub fn parse_instance(text: &str, template: Option<&RelationalTemplate>) -> Result<Instance, FormatError> {
    let ls = lines(text);
    let mut universe = template.map(|t| t.universe_size);
    let mut num_vars = None;
    let mut domains: BTreeMap<usize, BTreeSet<Value>> = BTreeMap::new();
    let mut constraints = Vec::new();
    let mut pos = 0;
    while let Some((line, words)) = ls.get(pos) {
        let line = *line;
        pos += 1;
        match words[0] {
            "universe" => {
                expect_args(line, words, 1)?;
                let n: usize = number(line, words[1], "a universe size")?;
                if universe.is_some_and(|u| u != n) {
                    return err(line, format!("universe {n} disagrees with the template"));
                }
                universe = Some(n);
            }
            "vars" => {
                expect_args(line, words, 1)?;
                num_vars = Some(number(line, words[1], "a variable count")?);
            }
            "domainof" => {
                if words.len() < 2 {
                    return err(line, "`domainof` needs a variable");
                }
                let x = var(line, words[1], num_vars)?;
                let Some(u) = universe else { return err(line, "`domainof` before the universe is known") };
                let d: BTreeSet<Value> =
                    words[2..].iter().map(|w| number(line, w, "a value")).collect::<Result<_, _>>()?;
                if let Some(v) = d.iter().find(|&&v| v as usize >= u) {
                    return err(line, format!("value {v} outside the universe"));
                }
                domains.insert(x, d);
            }
            "constraint" => {
                if words.len() < 2 {
                    return err(line, "`constraint` needs a relation name");
                }
                let Some(t) = template else { return err(line, "named constraint without a template") };
                let Some(r) = t.relation(words[1]) else {
                    return err(line, format!("unknown relation {}", words[1]));
                };
                let scope: Vec<usize> =
                    words[2..].iter().map(|w| var(line, w, num_vars)).collect::<Result<_, _>>()?;
                if scope.len() != r.arity {
                    return err(line, format!("relation {} has arity {} but the scope has {}", r.name, r.arity, scope.len()));
                }
                constraints.push(Constraint::new(scope, r.clone()));
            }
            "inline" => {
                if words.len() < 2 {
                    return err(line, "`inline` needs an arity");
                }
                let arity: usize = number(line, words[1], "an arity")?;
                if arity == 0 || words.len() < 2 + arity || words.len() > 3 + arity {
                    return err(line, format!("`inline {arity}` takes {arity} variables and an optional name"));
                }
                let scope: Vec<usize> =
                    words[2..2 + arity].iter().map(|w| var(line, w, num_vars)).collect::<Result<_, _>>()?;
                let name = words.get(2 + arity).map_or_else(|| format!("inline{}", constraints.len() + 1), |w| w.to_string());
                let Some(u) = universe else { return err(line, "`inline` before the universe is known") };
                let ts = tuples(&ls, &mut pos, arity, u, line)?;
                constraints.push(Constraint::inline(scope, Relation { name, arity, tuples: ts }));
            }
            other => return err(line, format!("unknown directive `{other}`")),
        }
    }
    let Some(n) = num_vars else { return err(0, "missing `vars`") };
    let Some(u) = universe else { return err(0, "missing `universe` (or a template)") };
    let full: BTreeSet<Value> = (0..u as Value).collect();
    let ds = (0..n).map(|x| domains.remove(&x).unwrap_or_else(|| full.clone())).collect();
    Instance::new(u, ds, constraints).or_else(|e| err(0, e.to_string()))
}

/// Writes `universe`, `vars`, non-full domains and every constraint, with
/// optional comment lines naming variables.
pub fn serialize_instance(instance: &Instance, var_names: Option<&[String]>) -> String {
    let mut out = String::new();
    if let Some(names) = var_names {
        for (x, name) in names.iter().enumerate() {
            let _ = writeln!(out, "# x{} = {name}", x + 1);
        }
    }
    let _ = writeln!(out, "universe {}", instance.universe_size());
    let _ = writeln!(out, "vars {}", instance.num_vars());
    for (x, d) in instance.domains().iter().enumerate() {
        if d.len() != instance.universe_size() {
            let mut l = format!("domainof {}", x + 1);
            for v in d {
                let _ = write!(l, " {v}");
            }
            out.push_str(&l);
            out.push('\n');
        }
    }
    for c in instance.constraints() {
        let scope: Vec<String> = c.scope.iter().map(|x| (x + 1).to_string()).collect();
        if c.inline {
            write_relation(&mut out, &format!("inline {} {} {}", c.relation.arity, scope.join(" "), c.relation.name), &c.relation);
        } else {
            let _ = writeln!(out, "constraint {} {}", c.relation.name, scope.join(" "));
        }
    }
    out
}

/// Parses an algebra file, verifying every declared flag.
pub fn parse_algebra(text: &str) -> Result<FiniteAlgebra, FormatError> {
    let ls = lines(text);
    let mut universe: Option<usize> = None;
    let mut ops: Vec<(usize, Operation)> = Vec::new();
    let mut flags: Vec<(usize, Vec<String>)> = Vec::new();
    let mut pos = 0;
    while let Some((line, words)) = ls.get(pos) {
        let line = *line;
        pos += 1;
        match words[0] {
            "universe" => {
                expect_args(line, words, 1)?;
                let n: usize = number(line, words[1], "a universe size")?;
                if n == 0 {
                    return err(line, "universe must be non-empty");
                }
                universe = Some(n);
            }
            "operation" => {
                expect_args(line, words, 2)?;
                let Some(n) = universe else { return err(line, "`operation` before `universe`") };
                let name = words[1].to_string();
                if ops.iter().any(|(_, o)| o.name == name) {
                    return err(line, format!("operation {name} defined twice"));
                }
                let arity: usize = number(line, words[2], "an arity")?;
                if arity == 0 || n.checked_pow(arity as u32).is_none_or(|s| s > 1 << 24) {
                    return err(line, format!("unsupported arity {arity}"));
                }
                let size = n.pow(arity as u32);
                let mut table: Vec<Option<Value>> = vec![None; size];
                loop {
                    let Some((l, ws)) = ls.get(pos) else { return err(line, "operation not terminated by `end`") };
                    pos += 1;
                    if ws == &["end"] {
                        if let Some(i) = table.iter().position(Option::is_none) {
                            let mut args = vec![0; arity];
                            let mut r = i;
                            for a in args.iter_mut().rev() {
                                *a = r % n;
                                r /= n;
                            }
                            let args: Vec<String> = args.iter().map(ToString::to_string).collect();
                            return err(*l, format!("operation {name} has no row for {}", args.join(" ")));
                        }
                        break;
                    }
                    if ws.len() != arity + 2 || ws[arity] != "->" {
                        return err(*l, format!("expected {arity} arguments, `->` and a value"));
                    }
                    let mut idx = 0;
                    for w in &ws[..arity] {
                        let a: usize = number(*l, w, "a value")?;
                        if a >= n {
                            return err(*l, format!("value {a} outside the universe 0..{}", n - 1));
                        }
                        idx = idx * n + a;
                    }
                    let v: Value = number(*l, ws[arity + 1], "a value")?;
                    if v as usize >= n {
                        return err(*l, format!("value {v} outside the universe 0..{}", n - 1));
                    }
                    if table[idx].replace(v).is_some_and(|old| old != v) {
                        return err(*l, "conflicting row");
                    }
                }
                let table = table.into_iter().map(|v| v.expect("total")).collect();
                ops.push((line, Operation { name, arity, table }));
            }
            "flag" => {
                if words.len() < 2 {
                    return err(line, "`flag` needs a name");
                }
                flags.push((line, words[1..].iter().map(ToString::to_string).collect()));
            }
            other => return err(line, format!("unknown directive `{other}`")),
        }
    }
    let Some(n) = universe else { return err(0, "missing `universe`") };
    let mut alg = FiniteAlgebra::new(n, ops.into_iter().map(|(_, o)| o).collect()).or_else(|e| err(0, e.to_string()))?;
    for (line, f) in flags {
        match f[0].as_str() {
            "idempotent" => alg.mark_idempotent().or_else(|e| err(line, e.to_string()))?,
            "taylor" => {
                let text = f[1..].join("");
                let term: Term = text.parse().or_else(|e: crate::algebra::AlgebraError| err(line, e.to_string()))?;
                match is_weak_near_unanimity(&alg, &term) {
                    Ok(true) => alg.taylor = Some(term),
                    Ok(false) => return err(line, format!("taylor witness {term} fails its identities")),
                    Err(e) => return err(line, e.to_string()),
                }
            }
            "redop" => {
                if f.len() != 2 {
                    return err(line, "`flag redop` takes an operation name");
                }
                let universe: BTreeSet<Value> = alg.universe().collect();
                orient_red(&alg, &f[1], &universe).or_else(|e| err(line, e.to_string()))?;
                alg.redop = Some(f[1].clone());
            }
            other => return err(line, format!("unknown flag `{other}`")),
        }
    }
    Ok(alg)
}

pub fn serialize_algebra(alg: &FiniteAlgebra) -> String {
    let n = alg.size();
    let mut out = format!("universe {n}\n");
    for op in alg.operations() {
        let _ = writeln!(out, "operation {} {}", op.name, op.arity);
        for (i, v) in op.table.iter().enumerate() {
            let mut args = vec![0; op.arity];
            let mut r = i;
            for a in args.iter_mut().rev() {
                *a = r % n;
                r /= n;
            }
            let args: Vec<String> = args.iter().map(ToString::to_string).collect();
            let _ = writeln!(out, "{} -> {v}", args.join(" "));
        }
        out.push_str("end\n");
    }
    if alg.idempotent {
        out.push_str("flag idempotent\n");
    }
    if let Some(t) = &alg.taylor {
        let _ = writeln!(out, "flag taylor {t}");
    }
    if let Some(r) = &alg.redop {
        let _ = writeln!(out, "flag redop {r}");
    }
    out
}
