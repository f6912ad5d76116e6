//! Plain-text tower definitions.
//!
//! ```text
//! # comment
//! base [0, 1)
//! budget C=0.25 beta=0.5 C0=1 C1=1 C2=1
//! r_max 64
//! unassigned 0
//! branch [0, 0.5) tau=1 map=affine(2, 0) jacobian=derived
//! branch [0.5, 1) tau=1 map=affine(2, -1) jacobian=expr(2)
//! ```
//!
//! `budget fitted beta=<b> [samples=<n>]` fits the constants after the
//! branches are read. `r_max` defaults to 64 and `unassigned` to the part of
//! the base not covered by branches. Branch maps are `affine(a, b)`,
//! `logistic`, or `composed(<map>, <laps>)` where `<map>` is `doubling`,
//! `logistic`, `tent:<s>` or `quadratic:<a>` and `<laps>` is a string of `0`
//! and `1` with one digit per step.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::{Branch, BranchMap, DistortionBudget, GibbsMarkovTower, Jacobian, TowerError, DEFAULT_R_MAX};
use crate::expr::Expr;
use crate::interval::Interval;
use crate::models::Map1D;

/// Samples per branch when fitting a budget from a file.
pub const DEFAULT_FIT_SAMPLES: usize = 32;
const MAX_LINE: usize = 1 << 16;
const MAX_BRANCHES: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TowerFileError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("{0}")]
    Tower(#[from] TowerError),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

fn syntax(line: usize, msg: impl Into<String>) -> TowerFileError {
    TowerFileError::Syntax { line, msg: msg.into() }
}

enum BudgetSpec {
    Explicit(DistortionBudget),
    Fitted { beta: f64, samples: usize },
}

fn number(line: usize, s: &str) -> Result<f64, TowerFileError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| syntax(line, format!("expected a number, found '{}'", s.trim())))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(syntax(line, format!("'{}' is not finite", s.trim())))
    }
}

/// Parses `[lo, hi)` at the start of `s`, returning the rest.
fn interval(line: usize, s: &str) -> Result<(Interval, &str), TowerFileError> {
    let s = s.trim_start();
    let body = s
        .strip_prefix('[')
        .ok_or_else(|| syntax(line, "expected '[' opening an interval"))?;
    let close = body
        .find(')')
        .ok_or_else(|| syntax(line, "expected ')' closing the interval"))?;
    let (lo, hi) = body[..close]
        .split_once(',')
        .ok_or_else(|| syntax(line, "interval needs two endpoints"))?;
    Ok((Interval::new(number(line, lo)?, number(line, hi)?), &body[close + 1..]))
}

/// Splits `key=value` fields, keeping parenthesized values intact.
fn fields(line: usize, s: &str) -> Result<Vec<(&str, &str)>, TowerFileError> {
    let mut out = Vec::new();
    let mut rest = s.trim();
    while !rest.is_empty() {
        let eq = rest
            .find('=')
            .ok_or_else(|| syntax(line, format!("expected key=value, found '{rest}'")))?;
        let key = rest[..eq].trim();
        if key.is_empty() || key.contains(char::is_whitespace) {
            return Err(syntax(line, format!("malformed key '{key}'")));
        }
        let value_start = &rest[eq + 1..];
        let mut depth = 0i32;
        let mut end = value_start.len();
        for (i, c) in value_start.char_indices() {
            match c {
                '(' => depth += 1,
                ')' => {
                    depth -= 1;
                    if depth < 0 {
                        return Err(syntax(line, "unbalanced ')'"));
                    }
                }
                c if c.is_whitespace() && depth == 0 => {
                    end = i;
                    break;
                }
                _ => {}
            }
        }
        if depth != 0 {
            return Err(syntax(line, "unbalanced '('"));
        }
        out.push((key, &value_start[..end]));
        rest = value_start[end..].trim_start();
    }
    Ok(out)
}

fn call<'a>(value: &'a str, name: &str) -> Option<&'a str> {
    value
        .strip_prefix(name)?
        .trim_start()
        .strip_prefix('(')?
        .strip_suffix(')')
}

fn branch_map(line: usize, value: &str) -> Result<BranchMap, TowerFileError> {
    if value == "logistic" {
        return Ok(BranchMap::Logistic);
    }
    if let Some(args) = call(value, "affine") {
        let (a, b) = args
            .split_once(',')
            .ok_or_else(|| syntax(line, "affine needs two arguments"))?;
        let slope = number(line, a)?;
        if slope == 0.0 {
            return Err(syntax(line, "affine slope must be nonzero"));
        }
        return Ok(BranchMap::Affine {
            slope,
            intercept: number(line, b)?,
        });
    }
    if let Some(args) = call(value, "composed") {
        let (m, laps) = args
            .split_once(',')
            .ok_or_else(|| syntax(line, "composed needs a map and a lap word"))?;
        let map: Map1D = m.parse().map_err(|e| syntax(line, format!("{e}")))?;
        let itinerary = laps
            .trim()
            .bytes()
            .map(|c| match c {
                b'0' => Ok(0u8),
                b'1' => Ok(1u8),
                _ => Err(syntax(line, format!("lap word '{}' must use 0 and 1", laps.trim()))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if itinerary.is_empty() {
            return Err(syntax(line, "empty lap word"));
        }
        return Ok(BranchMap::Composed { map, itinerary });
    }
    Err(syntax(line, format!("unknown branch map '{value}'")))
}

fn jacobian(line: usize, value: &str) -> Result<Jacobian, TowerFileError> {
    if value == "derived" {
        return Ok(Jacobian::Derived);
    }
    if let Some(src) = call(value, "expr") {
        let e = Expr::parse(src).map_err(|e| syntax(line, format!("jacobian expression: {e}")))?;
        if e.uses_logjac() {
            return Err(syntax(line, "jacobian expression cannot refer to logjac"));
        }
        return Ok(Jacobian::Expr(e));
    }
    Err(syntax(line, format!("unknown jacobian '{value}'")))
}

fn parse_branch(line: usize, rest: &str) -> Result<Branch, TowerFileError> {
    let (domain, rest) = interval(line, rest)?;
    let (mut tau, mut map, mut jac) = (None, None, None);
    for (key, value) in fields(line, rest)? {
        match key {
            "tau" => {
                let t: u32 = value
                    .parse()
                    .map_err(|_| syntax(line, format!("tau must be a positive integer, found '{value}'")))?;
                if t == 0 {
                    return Err(syntax(line, "tau must be positive"));
                }
                tau = Some(t);
            }
            "map" => map = Some(branch_map(line, value)?),
            "jacobian" => jac = Some(jacobian(line, value)?),
            _ => return Err(syntax(line, format!("unknown branch field '{key}'"))),
        }
    }
    let tau = tau.ok_or_else(|| syntax(line, "branch needs tau"))?;
    let map = map.ok_or_else(|| syntax(line, "branch needs map"))?;
    Ok(Branch::new(domain, tau, map, jac.unwrap_or(Jacobian::Derived)))
}

fn parse_budget(line: usize, rest: &str) -> Result<BudgetSpec, TowerFileError> {
    let rest = rest.trim();
    if let Some(fit) = rest.strip_prefix("fitted") {
        let (mut beta, mut samples) = (None, DEFAULT_FIT_SAMPLES);
        for (key, value) in fields(line, fit)? {
            match key {
                "beta" => beta = Some(number(line, value)?),
                "samples" => {
                    samples = value
                        .parse()
                        .ok()
                        .filter(|&s: &usize| (2..=4096).contains(&s))
                        .ok_or_else(|| syntax(line, format!("samples must be in 2..=4096, found '{value}'")))?
                }
                _ => return Err(syntax(line, format!("unknown budget field '{key}'"))),
            }
        }
        let beta = beta.ok_or_else(|| syntax(line, "fitted budget needs beta"))?;
        return Ok(BudgetSpec::Fitted { beta, samples });
    }
    let (mut c, mut beta, mut c0, mut c1, mut c2, mut empirical) = (None, None, None, None, None, false);
    let mut rest = rest;
    if let Some(r) = rest.strip_suffix("empirical") {
        empirical = true;
        rest = r;
    }
    for (key, value) in fields(line, rest)? {
        let v = number(line, value)?;
        match key {
            "C" => c = Some(v),
            "beta" => beta = Some(v),
            "C0" => c0 = Some(v),
            "C1" => c1 = Some(v),
            "C2" => c2 = Some(v),
            _ => return Err(syntax(line, format!("unknown budget field '{key}'"))),
        }
    }
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| syntax(line, format!("budget needs {name}")));
    let mut b = DistortionBudget::new(
        need(c, "C")?,
        need(beta, "beta")?,
        need(c0, "C0")?,
        need(c1, "C1")?,
        need(c2, "C2")?,
    )
    .map_err(|e| syntax(line, e.to_string()))?;
    b.empirical = empirical;
    Ok(BudgetSpec::Explicit(b))
}

/// Parses a tower definition.
pub fn parse_tower(src: &str) -> Result<GibbsMarkovTower, TowerFileError> {
    let mut base = None;
    let mut budget = None;
    let mut r_max = None;
    let mut unassigned = None;
    let mut branches = Vec::new();
    for (idx, raw) in src.lines().enumerate() {
        let line = idx + 1;
        if raw.len() > MAX_LINE {
            return Err(syntax(line, "line too long"));
        }
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let (keyword, rest) = text.split_once(char::is_whitespace).unwrap_or((text, ""));
        let once = |seen: bool| {
            if seen {
                Err(syntax(line, format!("duplicate '{keyword}'")))
            } else {
                Ok(())
            }
        };
        match keyword {
            "base" => {
                once(base.is_some())?;
                let (iv, tail) = interval(line, rest)?;
                if !tail.trim().is_empty() {
                    return Err(syntax(line, format!("unexpected '{}'", tail.trim())));
                }
                base = Some(iv);
            }
            "budget" => {
                once(budget.is_some())?;
                budget = Some(parse_budget(line, rest)?);
            }
            "r_max" => {
                once(r_max.is_some())?;
                let r: u32 = rest
                    .trim()
                    .parse()
                    .map_err(|_| syntax(line, "r_max must be a positive integer"))?;
                if r == 0 {
                    return Err(syntax(line, "r_max must be positive"));
                }
                r_max = Some(r);
            }
            "unassigned" => {
                once(unassigned.is_some())?;
                unassigned = Some(number(line, rest)?);
            }
            "branch" => {
                if branches.len() >= MAX_BRANCHES {
                    return Err(syntax(line, "too many branches"));
                }
                branches.push(parse_branch(line, rest)?);
            }
            _ => return Err(syntax(line, format!("unknown keyword '{keyword}'"))),
        }
    }
    let base = base.ok_or_else(|| syntax(src.lines().count().max(1), "missing 'base'"))?;
    let budget = budget.ok_or_else(|| syntax(src.lines().count().max(1), "missing 'budget'"))?;
    let r_max = r_max.unwrap_or(DEFAULT_R_MAX);
    let placeholder = DistortionBudget::new(0.0, 0.5, 0.0, 0.0, 0.0)?;
    let tower = match unassigned {
        Some(u) => GibbsMarkovTower::new(base, branches, r_max, u, placeholder)?,
        None => GibbsMarkovTower::with_uncovered_mass(base, branches, r_max, placeholder)?,
    };
    let budget = match budget {
        BudgetSpec::Explicit(b) => b,
        BudgetSpec::Fitted { beta, samples } => tower.fit_budget(beta, samples)?,
    };
    Ok(tower.with_budget(budget)?)
}

pub fn read_tower_file(path: impl AsRef<Path>) -> Result<GibbsMarkovTower, TowerFileError> {
    let path = path.as_ref();
    let src = std::fs::read_to_string(path).map_err(|e| TowerFileError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    parse_tower(&src)
}

fn write_map(map: &BranchMap) -> String {
    match map {
        BranchMap::Affine { slope, intercept } => format!("affine({slope:?}, {intercept:?})"),
        BranchMap::Logistic => "logistic".into(),
        BranchMap::Composed { map, itinerary } => {
            let word: String = itinerary.iter().map(|&l| if l == 0 { '0' } else { '1' }).collect();
            format!("composed({map}, {word})")
        }
    }
}

/// Serializes a tower; [`parse_tower`] reads it back to an equal value.
pub fn write_tower(tower: &GibbsMarkovTower) -> String {
    let mut s = String::new();
    let b = tower.budget();
    let _ = writeln!(s, "base {}", tower.base());
    let _ = writeln!(
        s,
        "budget C={:?} beta={:?} C0={:?} C1={:?} C2={:?}{}",
        b.c,
        b.beta,
        b.c0,
        b.c1,
        b.c2,
        if b.empirical { " empirical" } else { "" }
    );
    let _ = writeln!(s, "r_max {}", tower.r_max());
    let _ = writeln!(s, "unassigned {:?}", tower.unassigned_mass());
    for br in tower.branches() {
        let jac = match &br.jacobian {
            Jacobian::Derived => "derived".to_string(),
            Jacobian::Expr(e) => format!("expr({})", e.source()),
        };
        let _ = writeln!(
            s,
            "branch {} tau={} map={} jacobian={jac}",
            br.domain,
            br.return_time,
            write_map(&br.map)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::*;
    use super::*;

    const DOUBLING: &str = "\
# doubling map
base [0, 1)
budget C=0.25 beta=0.5 C0=1 C1=1 C2=1
branch [0, 0.5) tau=1 map=affine(2, 0) jacobian=derived
branch [0.5, 1) tau=1 map=affine(2, -1)
";

    #[test]
    fn parses_the_doubling_tower() {
        let t = parse_tower(DOUBLING).unwrap();
        assert_eq!(t, doubling());
    }

    #[test]
    fn round_trips_fixtures() {
        for t in [doubling(), bernoulli(), ulam(), first_return_doubling(20)] {
            let text = write_tower(&t);
            assert_eq!(parse_tower(&text).unwrap(), t, "{text}");
            assert_eq!(write_tower(&parse_tower(&text).unwrap()), text);
        }
    }

    #[test]
    fn explicit_jacobian_and_fitted_budget() {
        let src = "base [0, 1)\nbudget fitted beta=0.5 samples=8\nbranch [0, 1) tau=1 map=affine(1, 0) jacobian=expr(1 + 0*x)\n";
        let t = parse_tower(src).unwrap();
        assert!(t.budget().empirical);
        assert_eq!(t.budget().c0, 0.0);
        let again = parse_tower(&write_tower(&t)).unwrap();
        assert_eq!(again, t);
    }

    #[test]
    fn errors_name_the_line() {
        let cases = [
            ("base [0, 1)\nbudget C=1 beta=1.5 C0=1 C1=1 C2=2\n", 2),
            (
                "base [0, 1)\nbudget C=0 beta=0.5 C0=0 C1=0 C2=0\nbranch [0, 1) tau=1 map=warp\n",
                3,
            ),
            ("base [0, 1)\nbase [0, 1)\n", 2),
            ("bass [0, 1)\n", 1),
            (
                "base [0, 1)\nbudget C=0 beta=0.5 C0=0 C1=0 C2=0\nbranch [0, 1) tau=0 map=logistic\n",
                3,
            ),
            (
                "base [0, 1)\nbudget C=0 beta=0.5 C0=0 C1=0 C2=0\nbranch [0, 1) tau=1 map=composed(doubling, 012)\n",
                3,
            ),
        ];
        for (src, line) in cases {
            match parse_tower(src) {
                Err(TowerFileError::Syntax { line: l, .. }) => assert_eq!(l, line, "{src}"),
                other => panic!("{src}: {other:?}"),
            }
        }
    }

    #[test]
    fn structural_errors_come_from_the_tower() {
        let src = "base [0, 1)\nbudget C=0 beta=0.5 C0=0 C1=0 C2=0\nbranch [0, 1) tau=2 map=composed(doubling, 0)\n";
        assert!(matches!(
            parse_tower(src),
            Err(TowerFileError::Tower(TowerError::Invalid(_)))
        ));
    }
}
