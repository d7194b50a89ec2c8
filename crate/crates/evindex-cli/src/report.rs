//! Report rendering for scenario results.

use std::fmt::Write as _;

use crate::scenario::ScenarioResult;
use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    /// Aligned text table: system, selection, counts, CPU time.
    Table,
    /// One row per result, machine readable.
    Csv,
    /// `x rate` pairs for rate-versus-x curves.
    PlotData,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat, HarnessError> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "plotdata" => Ok(ReportFormat::PlotData),
            other => Err(HarnessError::UnknownFormat(other.to_string())),
        }
    }
}

/// Renders results in the chosen format; at least one result is
/// required.
pub fn emit_report(
    results: &[ScenarioResult],
    format: ReportFormat,
) -> Result<String, HarnessError> {
    if results.is_empty() {
        return Err(HarnessError::EmptyReport);
    }
    Ok(match format {
        ReportFormat::Table => table(results),
        ReportFormat::Csv => csv(results),
        ReportFormat::PlotData => plotdata(results),
    })
}

fn table(results: &[ScenarioResult]) -> String {
    let headers = [
        "System",
        "Selection",
        "Events scanned",
        "Events selected",
        "Time",
    ];
    let rows: Vec<[String; 5]> = results
        .iter()
        .map(|r| {
            [
                r.system.clone(),
                r.selection.clone(),
                r.scanned.to_string(),
                r.selected.to_string(),
                format!("{:.3} s", r.cpu.as_secs_f64()),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: &[String; 5], widths: &[usize]| -> String {
        let mut line = String::new();
        for (i, (cell, w)) in cells.iter().zip(widths).enumerate() {
            if i > 0 {
                line.push_str(" | ");
            }
            if (2..=3).contains(&i) {
                let _ = write!(line, "{cell:>w$}", w = w);
            } else {
                let _ = write!(line, "{cell:<w$}", w = w);
            }
        }
        line
    };
    let header_cells: [String; 5] = std::array::from_fn(|i| headers[i].to_string());
    out.push_str(&fmt_row(&header_cells, &widths));
    out.push('\n');
    let total: usize = widths.iter().sum::<usize>() + 3 * (widths.len() - 1);
    out.push_str(&"-".repeat(total));
    out.push('\n');
    for row in &rows {
        out.push_str(&fmt_row(row, &widths));
        out.push('\n');
    }
    out
}

fn csv(results: &[ScenarioResult]) -> String {
    let mut out =
        String::from("scenario,system,selection,scanned,selected,cpu_s,wall_s,x,events_per_s\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.6},{:.6},{},{:.1}",
            csv_field(&r.name),
            csv_field(&r.system),
            csv_field(&r.selection),
            r.scanned,
            r.selected,
            r.cpu.as_secs_f64(),
            r.wall.as_secs_f64(),
            r.x.map(|x| x.to_string()).unwrap_or_default(),
            r.events_per_sec(),
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn plotdata(results: &[ScenarioResult]) -> String {
    let mut out = String::from("# x  events_per_second\n");
    for (i, r) in results.iter().enumerate() {
        let x = r.x.unwrap_or(i as f64);
        let _ = writeln!(out, "{x} {:.1}", r.events_per_sec());
    }
    out
}

/// Parses a CSV report back into results (for the `report` subcommand).
pub fn parse_csv(text: &str) -> Result<Vec<ScenarioResult>, HarnessError> {
    let mut results = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let fields = split_csv(line);
        if fields.len() < 8 {
            return Err(HarnessError::InvalidSpec(format!(
                "results line {}: expected at least 8 CSV fields",
                i + 1
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64, HarnessError> {
            s.parse().map_err(|_| {
                HarnessError::InvalidSpec(format!("results line {}: bad {what}", i + 1))
            })
        };
        results.push(ScenarioResult {
            name: fields[0].clone(),
            system: fields[1].clone(),
            selection: fields[2].clone(),
            scanned: num(&fields[3], "scanned")? as u64,
            selected: num(&fields[4], "selected")? as u64,
            cpu: std::time::Duration::from_secs_f64(num(&fields[5], "cpu_s")?),
            wall: std::time::Duration::from_secs_f64(num(&fields[6], "wall_s")?),
            x: if fields[7].is_empty() {
                None
            } else {
                Some(num(&fields[7], "x")?)
            },
            checksum: 0,
        });
    }
    Ok(results)
}

fn split_csv(line: &str) -> Vec<String> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut in_quotes = false;
    let mut chars = line.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '"' if in_quotes && chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            '"' => in_quotes = !in_quotes,
            ',' if !in_quotes => {
                fields.push(std::mem::take(&mut cur));
            }
            other => cur.push(other),
        }
    }
    fields.push(cur);
    fields
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn result(
        name: &str,
        scanned: u64,
        selected: u64,
        cpu_ms: u64,
        x: Option<f64>,
    ) -> ScenarioResult {
        ScenarioResult {
            name: name.into(),
            system: "Tag Database".into(),
            selection: "ET_TOTAL > 30, really".into(),
            scanned,
            selected,
            cpu: Duration::from_millis(cpu_ms),
            wall: Duration::from_millis(cpu_ms + 2),
            x,
            checksum: 0,
        }
    }

    #[test]
    fn single_result_csv_has_header_and_one_row() {
        let text = emit_report(&[result("s", 100, 6, 50, None)], ReportFormat::Csv).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("scenario,"));
    }

    #[test]
    fn empty_results_error() {
        assert!(matches!(
            emit_report(&[], ReportFormat::Table),
            Err(HarnessError::EmptyReport)
        ));
    }

    #[test]
    fn plotdata_emits_one_point_per_result() {
        let results: Vec<ScenarioResult> = (0..=6)
            .map(|k| result("sweep", 1000, 10, 100 + k, Some(k as f64)))
            .collect();
        let text = emit_report(&results, ReportFormat::PlotData).unwrap();
        let points: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(points.len(), 7);
        assert!(points[0].starts_with("0 "));
        assert!(points[6].starts_with("6 "));
    }

    #[test]
    fn table_mirrors_the_comparison_columns() {
        let text = emit_report(
            &[result("s", 25000, 11000, 203_000, None)],
            ReportFormat::Table,
        )
        .unwrap();
        let header = text.lines().next().unwrap();
        for col in [
            "System",
            "Selection",
            "Events scanned",
            "Events selected",
            "Time",
        ] {
            assert!(header.contains(col), "missing column {col}");
        }
        assert!(text.contains("25000"));
        assert!(text.contains("11000"));
        assert!(text.contains("203.000 s"));
    }

    #[test]
    fn csv_round_trips_through_parse() {
        let results = vec![
            result("a", 10, 5, 20, None),
            result("b", 30, 1, 40, Some(3.0)),
        ];
        let text = emit_report(&results, ReportFormat::Csv).unwrap();
        let back = parse_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].scanned, 10);
        assert_eq!(back[1].x, Some(3.0));
        assert_eq!(back[1].selection, results[1].selection);
    }
}
