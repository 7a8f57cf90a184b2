//! Line-oriented instance format.
//!
//! ```text
//! # comment
//! name hs6
//! variable t1 start=-1.2
//! variable t2 lower=-inf upper=inf start=1
//! objective (^ (- 1 t1) 2)
//! constraint (* 10 (- t2 (^ t1 2))) lower=0 upper=0
//! ```
//!
//! A statement may continue over several lines until its parentheses balance.
//! A constraint with equal bounds is an equality `expr = lower`; a constraint
//! without bounds is `expr = 0`. The full grammar is in `docs/instance-format.md`.

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::model::{Expr, NcoProblem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: field '{field}': {message}")]
    Field { line: usize, field: String, message: String },
    #[error("line {line}: unsupported operator '{op}'")]
    UnsupportedOperator { line: usize, op: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

pub fn load_instance(path: impl AsRef<Path>) -> Result<NcoProblem, ParseError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| ParseError::Io { path: path.display().to_string(), message: e.to_string() })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
    parse_instance(&text, stem)
}

/// Parses instance text; `default_name` is used when no `name` statement appears.
pub fn parse_instance(text: &str, default_name: &str) -> Result<NcoProblem, ParseError> {
    let mut name = default_name.to_string();
    let mut vars: Vec<(String, f64, f64, Option<f64>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut objective: Option<(usize, Vec<Token>)> = None;
    let mut constraints: Vec<(usize, Vec<Token>, f64, f64)> = Vec::new();

    for (line, stmt) in statements(text)? {
        let toks = tokenize(&stmt);
        let err = |field: &str, message: String| ParseError::Field { line, field: field.into(), message };
        let Some(Token::Atom(kw)) = toks.first() else {
            return Err(err("statement", "expected a keyword".into()));
        };
        match kw.as_str() {
            "name" => match toks.get(1) {
                Some(Token::Atom(n)) if toks.len() == 2 => name = n.clone(),
                _ => return Err(err("name", "expected a single identifier".into())),
            },
            "variable" => {
                let Some(Token::Atom(v)) = toks.get(1) else {
                    return Err(err("variable", "expected a variable name".into()));
                };
                if !is_identifier(v) {
                    return Err(err("variable", format!("invalid name '{v}'")));
                }
                if index.contains_key(v) {
                    return Err(err("variable", format!("duplicate variable '{v}'")));
                }
                let kv = key_values(&toks[2..], line, &["lower", "upper", "start"])?;
                let lower = kv.get("lower").copied().unwrap_or(f64::NEG_INFINITY);
                let upper = kv.get("upper").copied().unwrap_or(f64::INFINITY);
                if lower > upper {
                    return Err(err("lower", format!("lower {lower} exceeds upper {upper}")));
                }
                if let Some(s) = kv.get("start") {
                    if !s.is_finite() {
                        return Err(err("start", "start must be finite".into()));
                    }
                }
                index.insert(v.clone(), vars.len());
                vars.push((v.clone(), lower, upper, kv.get("start").copied()));
            }
            "objective" => {
                if objective.is_some() {
                    return Err(err("objective", "objective given twice".into()));
                }
                if toks.len() < 2 {
                    return Err(err("objective", "missing expression".into()));
                }
                objective = Some((line, toks[1..].to_vec()));
            }
            "constraint" => {
                let (expr, rest) = split_expression(&toks[1..]).ok_or_else(|| err("constraint", "missing expression".into()))?;
                let kv = key_values(rest, line, &["lower", "upper"])?;
                let lower = kv.get("lower").copied().unwrap_or(0.0);
                let upper = kv.get("upper").copied().unwrap_or(if kv.contains_key("lower") { f64::INFINITY } else { 0.0 });
                if lower > upper {
                    return Err(err("lower", format!("lower {lower} exceeds upper {upper}")));
                }
                constraints.push((line, expr.to_vec(), lower, upper));
            }
            other => return Err(err("statement", format!("unknown keyword '{other}'"))),
        }
    }

    let mut p = NcoProblem::new(name);
    for (v, l, u, s) in &vars {
        p.add_var(v.as_str(), *l, *u, *s);
    }
    if let Some((line, toks)) = objective {
        p.set_objective(parse_single(&toks, &index, line, "objective")?);
    }
    for (line, toks, l, u) in constraints {
        let e = parse_single(&toks, &index, line, "constraint")?;
        if l == u {
            p.add_equality(if l == 0.0 { e } else { e - l });
        } else {
            p.add_inequality(e, l, u);
        }
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Open,
    Close,
    Atom(String),
}

fn is_identifier(s: &str) -> bool {
    let mut ch = s.chars();
    matches!(ch.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && ch.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '[' || c == ']' || c == '.')
}

/// Joins physical lines into statements, tracking the first line of each.
fn statements(text: &str) -> Result<Vec<(usize, String)>, ParseError> {
    let mut out = Vec::new();
    let mut cur = String::new();
    let mut start = 0;
    let mut depth: i64 = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if cur.is_empty() {
            start = i + 1;
        } else {
            cur.push(' ');
        }
        cur.push_str(line);
        for c in line.chars() {
            match c {
                '(' => depth += 1,
                ')' => depth -= 1,
                _ => {}
            }
        }
        if depth < 0 {
            return Err(ParseError::Field { line: i + 1, field: "expression".into(), message: "unbalanced ')'".into() });
        }
        if depth == 0 {
            out.push((start, std::mem::take(&mut cur)));
        }
    }
    if !cur.is_empty() {
        return Err(ParseError::Field { line: start, field: "expression".into(), message: "unclosed '('".into() });
    }
    Ok(out)
}

fn tokenize(s: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut atom = String::new();
    let flush = |atom: &mut String, out: &mut Vec<Token>| {
        if !atom.is_empty() {
            out.push(Token::Atom(std::mem::take(atom)));
        }
    };
    for c in s.chars() {
        match c {
            '(' => {
                flush(&mut atom, &mut out);
                out.push(Token::Open);
            }
            ')' => {
                flush(&mut atom, &mut out);
                out.push(Token::Close);
            }
            c if c.is_whitespace() => flush(&mut atom, &mut out),
            c => atom.push(c),
        }
    }
    flush(&mut atom, &mut out);
    out
}

/// Splits off one expression (an atom or a balanced list) from the front.
fn split_expression(toks: &[Token]) -> Option<(&[Token], &[Token])> {
    match toks.first()? {
        Token::Atom(a) if a.contains('=') => None,
        Token::Atom(_) => Some((&toks[..1], &toks[1..])),
        Token::Close => None,
        Token::Open => {
            let mut depth = 0;
            for (i, t) in toks.iter().enumerate() {
                match t {
                    Token::Open => depth += 1,
                    Token::Close => {
                        depth -= 1;
                        if depth == 0 {
                            return Some((&toks[..=i], &toks[i + 1..]));
                        }
                    }
                    _ => {}
                }
            }
            None
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

fn key_values(toks: &[Token], line: usize, allowed: &[&str]) -> Result<HashMap<String, f64>, ParseError> {
    let mut out = HashMap::new();
    for t in toks {
        let Token::Atom(a) = t else {
            return Err(ParseError::Field { line, field: "attributes".into(), message: "expected key=value".into() });
        };
        let Some((k, v)) = a.split_once('=') else {
            return Err(ParseError::Field { line, field: a.clone(), message: "expected key=value".into() });
        };
        if !allowed.contains(&k) {
            return Err(ParseError::Field { line, field: k.into(), message: "unknown field".into() });
        }
        let val = parse_number(v)
            .ok_or_else(|| ParseError::Field { line, field: k.into(), message: format!("invalid number '{v}'") })?;
        if out.insert(k.to_string(), val).is_some() {
            return Err(ParseError::Field { line, field: k.into(), message: "given twice".into() });
        }
    }
    Ok(out)
}

fn parse_single(toks: &[Token], vars: &HashMap<String, usize>, line: usize, field: &str) -> Result<Expr, ParseError> {
    let mut pos = 0;
    let e = parse_expr(toks, &mut pos, vars, line, field)?;
    if pos != toks.len() {
        return Err(ParseError::Field { line, field: field.into(), message: "trailing tokens after expression".into() });
    }
    Ok(e)
}

fn parse_expr(
    toks: &[Token],
    pos: &mut usize,
    vars: &HashMap<String, usize>,
    line: usize,
    field: &str,
) -> Result<Expr, ParseError> {
    let err = |message: String| ParseError::Field { line, field: field.into(), message };
    let Some(tok) = toks.get(*pos) else {
        return Err(err("unexpected end of expression".into()));
    };
    *pos += 1;
    match tok {
        Token::Close => Err(err("unexpected ')'".into())),
        Token::Atom(a) => {
            if let Some(&i) = vars.get(a) {
                Ok(Expr::var(i))
            } else if let Some(v) = parse_number(a).filter(|v| v.is_finite()) {
                Ok(Expr::constant(v))
            } else {
                Err(err(format!("unknown variable '{a}'")))
            }
        }
        Token::Open => {
            let op = match toks.get(*pos) {
                Some(Token::Atom(op)) => op.clone(),
                _ => return Err(err("expected an operator after '('".into())),
            };
            *pos += 1;
            let mut args = Vec::new();
            while !matches!(toks.get(*pos), Some(Token::Close) | None) {
                args.push(parse_expr(toks, pos, vars, line, field)?);
            }
            if toks.get(*pos).is_none() {
                return Err(err("unclosed '('".into()));
            }
            *pos += 1;
            let arity = |len: usize, k: usize| {
                if len == k {
                    Ok(())
                } else {
                    Err(err(format!("operator '{op}' takes {k} argument(s), got {len}")))
                }
            };
            let unary = |f: fn(Expr) -> Expr, args: &mut Vec<Expr>| -> Result<Expr, ParseError> {
                arity(args.len(), 1)?;
                Ok(f(args.pop().unwrap()))
            };
            match op.as_str() {
                "+" => {
                    if args.is_empty() {
                        return Err(err("operator '+' needs arguments".into()));
                    }
                    Ok(Expr::sum(args))
                }
                "-" => match args.len() {
                    0 => Err(err("operator '-' needs arguments".into())),
                    1 => Ok(-args.pop().unwrap()),
                    _ => {
                        let mut it = args.into_iter();
                        let first = it.next().unwrap();
                        Ok(Expr::sum(std::iter::once(first).chain(it.map(|a| -a))))
                    }
                },
                "*" => {
                    if args.is_empty() {
                        return Err(err("operator '*' needs arguments".into()));
                    }
                    let mut it = args.into_iter();
                    let first = it.next().unwrap();
                    Ok(it.fold(first, |a, b| a * b))
                }
                "/" => {
                    arity(args.len(), 2)?;
                    let b = args.pop().unwrap();
                    Ok(args.pop().unwrap() / b)
                }
                "^" => {
                    arity(args.len(), 2)?;
                    let p = args.pop().unwrap();
                    let Some(pv) = p.as_const() else {
                        return Err(err("exponent of '^' must be a constant".into()));
                    };
                    Ok(args.pop().unwrap().powf(pv))
                }
                "neg" => unary(|a| -a, &mut args),
                "inv" => unary(Expr::inv, &mut args),
                "sin" => unary(Expr::sin, &mut args),
                "cos" => unary(Expr::cos, &mut args),
                "exp" => unary(Expr::exp, &mut args),
                "log" => unary(Expr::ln, &mut args),
                "sqrt" => unary(Expr::sqrt, &mut args),
                _ => Err(ParseError::UnsupportedOperator { line, op }),
            }
        }
    }
}
