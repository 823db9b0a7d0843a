//! Writer for the plain-text LP format understood by most external solvers.
//!
//! Layout: `Maximize` objective, `Subject To` rows, `Bounds`, then
//! `Generals` and `Binaries`, closed by `End`. Variable and row names are
//! sanitized to `[A-Za-z0-9_.]`; lines are wrapped after a few terms.

use std::fmt::Write as _;

use super::{MilpModel, Sense, VarKind};

fn clean(name: &str, fallback: String) -> String {
    let s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    match s.chars().next() {
        None => fallback,
        Some(c) if c.is_ascii_digit() || c == '.' => format!("_{s}"),
        Some(_) => s,
    }
}

fn write_terms(out: &mut String, terms: impl Iterator<Item = (f64, String)>) {
    let mut first = true;
    let mut on_line = 0;
    for (a, name) in terms {
        if on_line == 6 {
            out.push_str("\n   ");
            on_line = 0;
        }
        let sign = if a < 0.0 { '-' } else { '+' };
        if first && a >= 0.0 {
            let _ = write!(out, " {} {}", a, name);
        } else {
            let _ = write!(out, " {} {} {}", sign, a.abs(), name);
        }
        first = false;
        on_line += 1;
    }
    if first {
        out.push_str(" 0");
    }
}

/// Renders `model` in LP format. Names that collide after sanitizing get
/// their index appended.
pub fn write_lp(model: &MilpModel) -> String {
    let mut seen = std::collections::HashSet::new();
    let names: Vec<String> = model
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let mut n = clean(&v.name, format!("x{j}"));
            if !seen.insert(n.clone()) {
                n = format!("{n}_{j}");
                seen.insert(n.clone());
            }
            n
        })
        .collect();

    let mut out = String::new();
    out.push_str("Maximize\n obj:");
    write_terms(
        &mut out,
        model
            .variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.objective != 0.0)
            .map(|(j, v)| (v.objective, names[j].clone())),
    );
    out.push_str("\nSubject To\n");
    for (i, c) in model.constraints.iter().enumerate() {
        let _ = write!(
            out,
            " {}:",
            clean(&c.name, format!("c{i}")) + &format!("_{i}")
        );
        write_terms(
            &mut out,
            c.coeffs.iter().map(|&(v, a)| (a, names[v.0].clone())),
        );
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {op} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (j, v) in model.variables.iter().enumerate() {
        let lo = if v.lower.is_finite() {
            v.lower.to_string()
        } else {
            "-inf".into()
        };
        let hi = if v.upper.is_finite() {
            v.upper.to_string()
        } else {
            "+inf".into()
        };
        let _ = writeln!(out, " {lo} <= {} <= {hi}", names[j]);
    }
    let generals: Vec<&str> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Integer)
        .map(|(j, _)| names[j].as_str())
        .collect();
    let binaries: Vec<&str> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(j, _)| names[j].as_str())
        .collect();
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for chunk in generals.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    if !binaries.is_empty() {
        out.push_str("Binaries\n");
        for chunk in binaries.chunks(8) {
            let _ = writeln!(out, " {}", chunk.join(" "));
        }
    }
    out.push_str("End\n");
    out
}
