//! CSV and JSON result files.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::experiments::{Report, ResultRow};

pub const COLUMNS: [&str; 12] = [
    "experiment",
    "topology",
    "location_x",
    "location_y",
    "sweep_name",
    "sweep_value",
    "analytic",
    "sim_mean",
    "sim_ci95",
    "n_trials",
    "seed",
    "trunc_radius_m",
];

/// Shortest round-trip form, switching to exponent notation far from 1.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 || (1e-4..1e15).contains(&x.abs()) {
        format!("{}", x + 0.0)
    } else {
        format!("{x:e}")
    }
}

fn opt<T>(v: Option<T>, f: impl Fn(T) -> String) -> String {
    v.map(f).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn row_line(r: &ResultRow, with_pass: bool) -> String {
    let mut fields = vec![
        csv_field(&r.experiment),
        csv_field(&r.topology),
        opt(r.location_x, fmt_f64),
        opt(r.location_y, fmt_f64),
        csv_field(&r.sweep_name),
        fmt_f64(r.sweep_value),
        opt(r.analytic, fmt_f64),
        opt(r.sim_mean, fmt_f64),
        opt(r.sim_ci95, fmt_f64),
        opt(r.n_trials, |n| n.to_string()),
        opt(r.seed, |n| n.to_string()),
        opt(r.trunc_radius_m, fmt_f64),
    ];
    if with_pass {
        fields.push(opt(r.pass, |p| p.to_string()));
    }
    fields.join(",")
}

/// Header comment lines: tool version, subcommand and resolved configuration.
pub fn metadata(command: &str, config_lines: &[String], notes: &[String]) -> Vec<String> {
    let mut m = vec![format!("thzcov {}", env!("CARGO_PKG_VERSION")), format!("command = {command}")];
    m.extend(config_lines.iter().cloned());
    m.extend(notes.iter().map(|n| format!("note: {n}")));
    m
}

pub fn render_csv(meta: &[String], report: &Report) -> String {
    let mut s = String::new();
    for m in meta {
        s.push_str("# ");
        s.push_str(m);
        s.push('\n');
    }
    s.push_str(&COLUMNS.join(","));
    if report.with_pass {
        s.push_str(",pass");
    }
    s.push('\n');
    for r in &report.rows {
        s.push_str(&row_line(r, report.with_pass));
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    metadata: &'a [String],
    notes: &'a [String],
    rows: &'a [ResultRow],
}

pub fn render_json(meta: &[String], report: &Report) -> String {
    // non-finite numbers have no JSON form; they become null
    let doc = JsonDoc {
        metadata: meta,
        notes: &report.notes,
        rows: &report.rows,
    };
    serde_json::to_string_pretty(&doc).expect("rows serialize")
}

/// Writes `contents` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = NamedTempFile::new_in(&dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn json_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    #[test]
    fn number_format() {
        assert_eq!(fmt_f64(0.5), "0.5");
        assert_eq!(fmt_f64(-0.0), "0");
        assert_eq!(fmt_f64(1e-24), "1e-24");
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(20.0), "20");
        assert_eq!(fmt_f64(3e11), "300000000000");
    }

    #[test]
    fn csv_layout() {
        let report = Report {
            rows: vec![ResultRow {
                experiment: "coverage_vs_beta".into(),
                topology: "square".into(),
                location_x: Some(0.0),
                location_y: Some(0.25),
                sweep_name: "beta_dB".into(),
                sweep_value: 10.0,
                analytic: Some(0.9),
                pass: Some(true),
                ..ResultRow::default()
            }],
            with_pass: true,
            notes: vec![],
        };
        let text = render_csv(&["thzcov 0".into()], &report);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# thzcov 0");
        assert_eq!(lines[1], format!("{},pass", COLUMNS.join(",")));
        assert_eq!(lines[2], "coverage_vs_beta,square,0,0.25,beta_dB,10,0.9,,,,,,true");
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, "a").unwrap();
        write_atomic(&p, "b").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "b");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
