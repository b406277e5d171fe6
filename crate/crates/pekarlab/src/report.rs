//! Deterministic report emission: JSON with sorted keys and a fixed float
//! format (17 significant digits), CSV tables, plot-data files, and an
//! optional generic plotting script. No timestamps anywhere: identical inputs
//! produce byte-identical artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::scf::ScfReport;
use crate::{Error, Result};

/// Render a float with 17 significant digits (round-trip exact for f64).
/// The sign of negative zero is dropped so that algebraically identical
/// results cannot differ by a sign bit.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        return "0.0000000000000000e0".to_string();
    }
    format!("{:.16e}", x)
}

fn push_indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn render_value(v: &Value, depth: usize, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                out.push_str(&fmt17(n.as_f64().expect("number is i64, u64 or f64")));
            }
        }
        Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"));
        }
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                push_indent(out, depth + 1);
                render_value(item, depth + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            // serde_json's default map is a BTreeMap: iteration is sorted,
            // hence deterministic.
            out.push_str("{\n");
            let len = map.len();
            for (i, (k, val)) in map.iter().enumerate() {
                push_indent(out, depth + 1);
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                render_value(val, depth + 1, out);
                if i + 1 < len {
                    out.push(',');
                }
                out.push('\n');
            }
            push_indent(out, depth);
            out.push('}');
        }
    }
}

/// Pretty JSON with sorted keys and all floats in the fixed 17-digit format.
pub fn render_json(v: &Value) -> String {
    let mut out = String::new();
    render_value(v, 0, &mut out);
    out.push('\n');
    out
}

/// A CSV table; cells are pre-rendered strings.
#[derive(Clone, Debug, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Table {
        Table {
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len(), "ragged CSV row");
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            for cell in row {
                debug_assert!(
                    !cell.contains(',') && !cell.contains('\n'),
                    "CSV cell needs quoting: {cell:?}"
                );
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// CSV cell for a float.
pub fn cell(x: f64) -> String {
    fmt17(x)
}

/// CSV cell for an optional float (empty when absent).
pub fn cell_opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

/// Write text into `dir/name`, creating the directory if needed.
pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text.as_bytes())?;
    Ok(path)
}

/// Write a JSON document (rendered deterministically) into `dir/name`.
pub fn write_json(dir: &Path, name: &str, v: &Value) -> Result<PathBuf> {
    write_text(dir, name, &render_json(v))
}

/// Write a CSV table into `dir/name`.
pub fn write_table(dir: &Path, name: &str, t: &Table) -> Result<PathBuf> {
    write_text(dir, name, &t.render())
}

/// Root document every task report starts from: version string, task name,
/// config echo, and the effective seed.
pub fn skeleton(task: &str, echo: &Value, seed: u64) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("version".into(), Value::String(crate::VERSION.to_string()));
    m.insert("task".into(), Value::String(task.to_string()));
    m.insert("config_echo".into(), echo.clone());
    m.insert("seed".into(), serde_json::json!(seed));
    m
}

/// The solver report as a JSON object: energy_trace[], density_residuals[],
/// lambda, el_residual, converged, plus the remaining diagnostics.
pub fn scf_value(r: &ScfReport) -> Value {
    serde_json::json!({
        "energy_trace": r.energy_trace,
        "density_residuals": r.residual_trace,
        "energy": r.energy,
        "lambda": r.lambda,
        "el_residual": r.el_residual,
        "final_gap": r.final_gap,
        "outer_iterations": r.outer_iterations,
        "inner_steps_total": r.inner_steps_total,
        "converged": r.converged,
        "warnings": r.warnings,
    })
}

/// Binding-record CSV: one row per record with the sector energies inline.
/// Columns: n, alpha, bz, e1..eN, delta_e, argmin_k, converged_flags.
pub fn binding_table(records: &[crate::binding::BindingRecord]) -> Result<Table> {
    let n = records
        .first()
        .ok_or_else(|| Error::Usage("binding table needs at least one record".into()))?
        .energies
        .len();
    let mut columns: Vec<String> = vec!["n".into(), "alpha".into(), "bz".into()];
    for k in 1..=n {
        columns.push(format!("e{k}"));
    }
    columns.push("delta_e".into());
    columns.push("argmin_k".into());
    columns.push("converged_flags".into());
    let mut t = Table {
        columns,
        rows: Vec::new(),
    };
    for r in records {
        if r.energies.len() != n {
            return Err(Error::Usage(
                "binding table rows must share one sector count".into(),
            ));
        }
        let mut row = vec![r.n.to_string(), cell(r.alpha), cell(r.b[2])];
        row.extend(r.energies.iter().map(|&e| cell(e)));
        row.push(cell(r.delta_e));
        row.push(r.argmin_k.to_string());
        row.push(
            r.converged
                .iter()
                .map(|&c| if c { '1' } else { '0' })
                .collect(),
        );
        t.push_row(row);
    }
    Ok(t)
}

/// A small gnuplot script for one curve file; rendering is optional and no
/// plotting dependency is pulled into the tool itself.
pub fn gnuplot_script(csv: &str, title: &str, xlabel: &str, ylabel: &str, ycol: usize) -> String {
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set title '{title}'\n\
         set xlabel '{xlabel}'\n\
         set ylabel '{ylabel}'\n\
         plot '{csv}' using 1:{ycol} with linespoints\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_render_with_17_significant_digits() {
        assert_eq!(fmt17(1.0), "1.0000000000000000e0");
        assert_eq!(fmt17(-0.0), "0.0000000000000000e0");
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        // round-trip exactness
        for &x in &[std::f64::consts::PI, -2.5e-13, 6.02e23, 1.0 / 3.0] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "round trip of {s}");
        }
    }

    #[test]
    fn json_rendering_is_sorted_and_stable() {
        let v = serde_json::json!({
            "zeta": [1.5, 2, true, "s"],
            "alpha": {"b": 0.1, "a": null},
        });
        let s = render_json(&v);
        let a = s.find("\"alpha\"").unwrap();
        let z = s.find("\"zeta\"").unwrap();
        assert!(a < z, "keys must be sorted:\n{s}");
        assert!(s.contains("1.0000000000000001e-1"));
        assert!(s.ends_with('\n'));
        // valid JSON round trip
        let back: Value = serde_json::from_str(&s).expect("valid JSON");
        assert_eq!(back["zeta"][0], serde_json::json!(1.5));
    }

    #[test]
    fn tables_render_with_a_header_row() {
        let mut t = Table::new(&["r", "value"]);
        t.push_row(vec![cell(1.0), cell(0.5)]);
        t.push_row(vec![cell(2.0), cell_opt(None)]);
        let s = t.render();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "r,value");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].ends_with(','), "empty optional cell");
    }
}
