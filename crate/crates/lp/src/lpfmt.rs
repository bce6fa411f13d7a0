//! CPLEX LP-format text dump, for cross-checking models against external
//! solvers.

use std::fmt::Write as _;

use crate::model::{LpModel, MipModel, Rel, Sense};

fn var_name(m: &LpModel, j: usize) -> String {
    m.vars[j]
        .name
        .clone()
        .unwrap_or_else(|| format!("x{j}"))
}

fn write_expr(out: &mut String, m: &LpModel, coeffs: &[(usize, f64)]) {
    let mut first = true;
    for &(j, a) in coeffs {
        if a == 0.0 {
            continue;
        }
        if first {
            if a < 0.0 {
                out.push_str("- ");
            }
            first = false;
        } else if a < 0.0 {
            out.push_str(" - ");
        } else {
            out.push_str(" + ");
        }
        let mag = a.abs();
        if (mag - 1.0).abs() < 1e-15 {
            let _ = write!(out, "{}", var_name(m, j));
        } else {
            let _ = write!(out, "{} {}", fmt_num(mag), var_name(m, j));
        }
    }
    if first {
        out.push('0');
    }
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

pub fn write_lp(model: &LpModel) -> String {
    let mut out = String::new();
    out.push_str(match model.sense {
        Sense::Minimize => "Minimize\n obj: ",
        Sense::Maximize => "Maximize\n obj: ",
    });
    let obj: Vec<(usize, f64)> = model
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.obj != 0.0)
        .map(|(j, v)| (j, v.obj))
        .collect();
    write_expr(&mut out, model, &obj);
    out.push_str("\nSubject To\n");
    for (i, r) in model.rows.iter().enumerate() {
        let name = r.name.clone().unwrap_or_else(|| format!("c{i}"));
        let _ = write!(out, " {name}: ");
        write_expr(&mut out, model, &r.coeffs);
        let rel = match r.rel {
            Rel::Le => "<=",
            Rel::Eq => "=",
            Rel::Ge => ">=",
        };
        let _ = writeln!(out, " {rel} {}", fmt_num(r.rhs));
    }
    out.push_str("Bounds\n");
    for (j, v) in model.vars.iter().enumerate() {
        let name = var_name(model, j);
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (true, true) => {
                let _ = writeln!(out, " {} <= {name} <= {}", fmt_num(v.lower), fmt_num(v.upper));
            }
            (true, false) => {
                if v.lower != 0.0 {
                    let _ = writeln!(out, " {name} >= {}", fmt_num(v.lower));
                }
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {name} <= {}", fmt_num(v.upper));
            }
            (false, false) => {
                let _ = writeln!(out, " {name} free");
            }
        }
    }
    out.push_str("End\n");
    out
}

pub fn write_mip(model: &MipModel) -> String {
    let base = write_lp(&model.lp);
    let ints: Vec<String> = model
        .integer
        .iter()
        .enumerate()
        .filter(|&(_, &f)| f)
        .map(|(j, _)| var_name(&model.lp, j))
        .collect();
    if ints.is_empty() {
        return base;
    }
    let mut section = String::from("General\n");
    for name in ints {
        let _ = writeln!(section, " {name}");
    }
    base.replace("End\n", &format!("{section}End\n"))
}
