//! `evaluate` and `report`: ratio and revision tables, aggregate scores and
//! per-methodology nowcast charts from a finished cube.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::warn;

use super::run::load_cube;
use crate::calendar::Quarter;
use crate::error::{Error, Result};
use crate::evaluation::{
    aggregate_from_figures, avg_revision, metric_table, ranking, ratio_table, Metric, OffsetTable, PeriodFigures,
    PredictionCube,
};
use crate::model_api::MethodologyId;
use crate::vintage::VintageOffset;

/// Every table for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodTables {
    pub period: String,
    pub mae: OffsetTable,
    pub rmse: OffsetTable,
    pub mae_ratio: OffsetTable,
    pub rmse_ratio: OffsetTable,
    /// Average revision in the cube's units.
    pub revision: BTreeMap<MethodologyId, f64>,
}

impl PeriodTables {
    /// Methodologies by ascending offset-averaged RMSE.
    pub fn rmse_order(&self) -> Vec<MethodologyId> {
        ranking(&self.rmse.averages())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub periods: Vec<PeriodTables>,
    /// `None` when fewer than two methodologies cover every period.
    pub aggregate: Option<BTreeMap<MethodologyId, f64>>,
}

pub fn evaluate(cube: &PredictionCube) -> Result<Evaluation> {
    cube.validate()?;
    let names = cube.periods();
    if names.is_empty() {
        return Err(Error::MissingCells("cube has no records".into()));
    }
    let mut periods = Vec::new();
    for p in &names {
        periods.push(PeriodTables {
            period: p.clone(),
            mae: metric_table(cube, p, Metric::Mae)?,
            rmse: metric_table(cube, p, Metric::Rmse)?,
            mae_ratio: ratio_table(cube, p, Metric::Mae)?,
            rmse_ratio: ratio_table(cube, p, Metric::Rmse)?,
            revision: avg_revision(cube, p)?,
        });
    }
    let figures: Vec<PeriodFigures> = periods
        .iter()
        .map(|t| PeriodFigures::from_tables(&t.period, &t.mae, &t.rmse, t.revision.clone()))
        .collect();
    let aggregate = match aggregate_from_figures(&figures) {
        Ok(s) => Some(s),
        Err(e) => {
            warn!("aggregate score skipped: {e}");
            None
        }
    };
    Ok(Evaluation { periods, aggregate })
}

fn write_file(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(&path, text)?;
    written.push(path);
    Ok(())
}

fn table_rows(t: &OffsetTable) -> Vec<(String, Vec<f64>)> {
    let mut rows: Vec<(String, Vec<f64>)> = VintageOffset::ALL
        .iter()
        .map(|o| (o.label().to_string(), t.cells.iter().map(|c| c[o.index()]).collect()))
        .collect();
    rows.push(("Average".into(), t.average.clone()));
    rows
}

/// Vintages as rows, methodologies as columns, Average row last.
pub fn offset_table_csv(t: &OffsetTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["vintage".to_string()];
    header.extend(t.methodologies.iter().map(|m| m.display_name().to_string()));
    w.write_record(&header)?;
    for (label, vals) in table_rows(t) {
        let mut rec = vec![label];
        rec.extend(vals.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?).expect("utf8"))
}

pub fn offset_table_markdown(t: &OffsetTable, title: &str) -> String {
    let mut s = format!("### {title}\n\n| Vintage |");
    for m in &t.methodologies {
        let _ = write!(s, " {} |", m.display_name());
    }
    s.push_str("\n|---|");
    s.push_str(&"---:|".repeat(t.methodologies.len()));
    s.push('\n');
    for (label, vals) in table_rows(t) {
        let _ = write!(s, "| {label} |");
        for v in vals {
            let _ = write!(s, " {v:.3} |");
        }
        s.push('\n');
    }
    s
}

/// Revisions sorted ascending, in percentage points. Rounding at 1e-12
/// drops the noise the unit change introduces.
fn revision_rows(rev: &BTreeMap<MethodologyId, f64>) -> Vec<(MethodologyId, f64)> {
    let pct = |v: f64| (v * 1e14).round() / 1e12;
    let mut rows: Vec<(MethodologyId, f64)> = rev.iter().map(|(m, v)| (*m, pct(*v))).collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1));
    rows
}

pub fn revision_csv(rev: &BTreeMap<MethodologyId, f64>) -> String {
    let mut s = String::from("methodology,avg_revision_pct\n");
    for (m, v) in revision_rows(rev) {
        let _ = writeln!(s, "{},{v}", m.display_name());
    }
    s
}

pub fn revision_markdown(rev: &BTreeMap<MethodologyId, f64>, title: &str) -> String {
    let mut s = format!("### {title}\n\n| Method | Average revision |\n|---|---:|\n");
    for (m, v) in revision_rows(rev) {
        let _ = writeln!(s, "| {} | {v:.2}% |", m.display_name());
    }
    s
}

pub fn aggregate_csv(scores: &BTreeMap<MethodologyId, f64>) -> String {
    let mut s = String::from("rank,methodology,score\n");
    for (i, m) in ranking(scores).iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, m.display_name(), scores[m]);
    }
    s
}

/// Writes the CSV tables under `dir` and returns their paths.
pub fn write_tables(eval: &Evaluation, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for t in &eval.periods {
        let p = &t.period;
        write_file(dir.join(format!("{p}_mae_ratio.csv")), &offset_table_csv(&t.mae_ratio)?, &mut written)?;
        write_file(dir.join(format!("{p}_rmse_ratio.csv")), &offset_table_csv(&t.rmse_ratio)?, &mut written)?;
        write_file(dir.join(format!("{p}_mae.csv")), &offset_table_csv(&t.mae)?, &mut written)?;
        write_file(dir.join(format!("{p}_rmse.csv")), &offset_table_csv(&t.rmse)?, &mut written)?;
        write_file(dir.join(format!("{p}_revision.csv")), &revision_csv(&t.revision), &mut written)?;
    }
    if let Some(scores) = &eval.aggregate {
        write_file(dir.join("aggregate.csv"), &aggregate_csv(scores), &mut written)?;
    }
    Ok(written)
}

/// Loads the cube in `out_dir` and writes the CSV tables to `out_dir/tables`.
pub fn cmd_evaluate(out_dir: &Path) -> Result<(Evaluation, Vec<PathBuf>)> {
    let cube = load_cube(out_dir)?;
    let eval = evaluate(&cube)?;
    let files = write_tables(&eval, &out_dir.join("tables"))?;
    Ok((eval, files))
}

const VINTAGE_COLORS: [&str; 5] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e"];

/// Actual growth as a solid line and one dotted line per vintage, all in
/// percent.
pub fn nowcast_svg(cube: &PredictionCube, id: MethodologyId, period: &str) -> Result<String> {
    let quarters = cube.quarters(period);
    let pct = |v: f64| 100.0 * v;
    let actual: Vec<f64> = quarters
        .iter()
        .map(|q| cube.actual(*q).map(pct).ok_or_else(|| Error::MissingCells(format!("no actual for {q}"))))
        .collect::<Result<_>>()?;
    let mut lines = Vec::new();
    for o in VintageOffset::ALL {
        let vals: Vec<f64> = quarters
            .iter()
            .map(|q| {
                cube.get(id, period, *q, o)
                    .map(pct)
                    .ok_or_else(|| Error::MissingCells(format!("{id} {period} {q} offset {o}")))
            })
            .collect::<Result<_>>()?;
        lines.push((o, vals));
    }

    let (w, h) = (640.0, 360.0);
    let (left, right, top, bottom) = (56.0, 150.0, 36.0, 40.0);
    let all = actual.iter().chain(lines.iter().flat_map(|(_, v)| v.iter()));
    let (mut lo, mut hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let n = quarters.len().max(2) - 1;
    let x = |i: usize| left + (w - left - right) * i as f64 / n as f64;
    let y = |v: f64| top + (h - top - bottom) * (hi - v) / (hi - lo);
    let points = |vals: &[f64]| -> String {
        vals.iter()
            .enumerate()
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect::<Vec<_>>()
            .join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{left}" y="20" font-size="14">{} ({period})</text>"#,
        id.display_name()
    );
    let (x0, x1, yb) = (left, w - right, h - bottom);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{yb}" x2="{x1}" y2="{yb}" stroke="gray"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{top}" x2="{x0}" y2="{yb}" stroke="gray"/>"#);
    if lo < 0.0 && hi > 0.0 {
        let y0 = y(0.0);
        let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0:.2}" x2="{x1}" y2="{y0:.2}" stroke="lightgray"/>"#);
    }
    for v in [lo + pad, (lo + hi) / 2.0, hi - pad] {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.1}%</text>"#,
            left - 6.0,
            y(v) + 4.0
        );
    }
    if let (Some(first), Some(last)) = (quarters.first(), quarters.last()) {
        let _ = writeln!(s, r#"<text x="{x0}" y="{}">{first}</text>"#, h - 20.0);
        let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="end">{last}</text>"#, h - 20.0);
    }
    let _ = writeln!(
        s,
        r#"<polyline fill="none" stroke="black" stroke-width="2" points="{}"/>"#,
        points(&actual)
    );
    for (k, (_, vals)) in lines.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="1.5" stroke-dasharray="2,3" points="{}"/>"#,
            VINTAGE_COLORS[k],
            points(vals)
        );
    }
    let lx = w - right + 12.0;
    let _ = writeln!(
        s,
        r#"<line x1="{lx}" y1="{top}" x2="{}" y2="{top}" stroke="black" stroke-width="2"/><text x="{}" y="{}">actual</text>"#,
        lx + 20.0,
        lx + 26.0,
        top + 4.0
    );
    for (k, (o, _)) in lines.iter().enumerate() {
        let ly = top + 18.0 * (k + 1) as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{}" stroke-width="1.5" stroke-dasharray="2,3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            VINTAGE_COLORS[k],
            lx + 26.0,
            ly + 4.0,
            o.label()
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn period_title(period: &str, quarters: &[Quarter]) -> String {
    match (quarters.first(), quarters.last()) {
        (Some(a), Some(b)) => format!("{period} ({a}–{b})"),
        _ => period.to_string(),
    }
}

/// Writes CSV tables, a markdown report and one chart per methodology and
/// period. Chart files are numbered by RMSE rank within their period.
pub fn cmd_report(out_dir: &Path) -> Result<Vec<PathBuf>> {
    let cube = load_cube(out_dir)?;
    let eval = evaluate(&cube)?;
    let mut written = write_tables(&eval, &out_dir.join("tables"))?;

    let mut md = String::from("# Nowcast benchmark report\n\n");
    for t in &eval.periods {
        let title = period_title(&t.period, &cube.quarters(&t.period));
        let _ = writeln!(md, "## {title}\n");
        md.push_str(&offset_table_markdown(&t.mae_ratio, "MAE as a proportion of ARMA"));
        md.push('\n');
        md.push_str(&offset_table_markdown(&t.rmse_ratio, "RMSE as a proportion of ARMA"));
        md.push('\n');
        md.push_str(&revision_markdown(&t.revision, "Average month-to-month revision"));
        md.push('\n');
        md.push_str("### Nowcasts, ordered by RMSE\n\n");
        for (rank, id) in t.rmse_order().iter().enumerate() {
            let rel = format!("figures/{}/{:02}_{}.svg", t.period, rank + 1, id.as_str());
            write_file(out_dir.join(&rel), &nowcast_svg(&cube, *id, &t.period)?, &mut written)?;
            let _ = writeln!(md, "{}. [{}]({rel})", rank + 1, id.display_name());
        }
        md.push('\n');
    }
    if let Some(scores) = &eval.aggregate {
        md.push_str("## Aggregate score\n\n| Rank | Method | Score |\n|---:|---|---:|\n");
        for (i, m) in ranking(scores).iter().enumerate() {
            let _ = writeln!(md, "| {} | {} | {:.3} |", i + 1, m.display_name(), scores[m]);
        }
    }
    write_file(out_dir.join("report.md"), &md, &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_api::PredictionRecord;

    fn cube_with(ids: &[(MethodologyId, f64)]) -> PredictionCube {
        let mut cube = PredictionCube::default();
        for k in 0..4 {
            let q = Quarter::parse("2016Q1").unwrap().add(k);
            cube.set_actual(q, 0.01 * k as f64);
            for (id, err) in ids {
                for o in VintageOffset::ALL {
                    cube.insert(PredictionRecord {
                        methodology: *id,
                        period: "period3".into(),
                        quarter: q,
                        offset: o,
                        value: 0.01 * k as f64 + err * (o.months() as f64 + 3.0),
                    })
                    .unwrap();
                }
            }
        }
        cube
    }

    #[test]
    fn arma_only_cube_gives_unit_ratios() {
        let eval = evaluate(&cube_with(&[(MethodologyId::Arma, 0.001)])).unwrap();
        let t = &eval.periods[0];
        assert!(t.mae_ratio.cells[0].iter().all(|v| *v == 1.0));
        assert!(t.rmse_ratio.average.iter().all(|v| *v == 1.0));
        assert!(eval.aggregate.is_none());
        let csv = offset_table_csv(&t.mae_ratio).unwrap();
        assert!(csv.starts_with("vintage,ARMA\n2 months before,1\n"));
        assert!(csv.ends_with("Average,1\n"));
    }

    #[test]
    fn svg_has_one_actual_and_five_vintage_lines() {
        let cube = cube_with(&[(MethodologyId::Arma, 0.001), (MethodologyId::Ridge, 0.002)]);
        let svg = nowcast_svg(&cube, MethodologyId::Ridge, "period3").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 6);
        assert_eq!(svg.matches("stroke-dasharray=\"2,3\" points").count(), 5);
    }

    #[test]
    fn revision_table_is_sorted_and_in_percent() {
        let rev = BTreeMap::from([(MethodologyId::Ols, 0.0042), (MethodologyId::Arma, 0.0007)]);
        assert_eq!(revision_csv(&rev), "methodology,avg_revision_pct\nARMA,0.07\nOLS,0.42\n");
        assert!(revision_markdown(&rev, "t").contains("| ARMA | 0.07% |"));
    }
}
