use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;

use corrstress::corrmodel::{read_params_csv, valid_model_correlation, FactorAssignment};
use corrstress::stress::{read_var_csv, StressResult};
use corrstress::{Error, Result};

use crate::pipeline::{date_str, write_text};

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 170.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 40.0;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Time-series line chart with a legend on the right.
pub fn line_chart(title: &str, dates: &[NaiveDate], series: &[(String, Vec<f64>)]) -> String {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, ys) in series {
        for &y in ys.iter().filter(|y| y.is_finite()) {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let n = dates.len().max(2);
    let x = |i: usize| MARGIN_L + pw * i as f64 / (n - 1) as f64;
    let y = |v: f64| MARGIN_T + ph * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" font-size="15">{}</text>"#,
        MARGIN_L,
        escape(title)
    );
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_L}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            MARGIN_L + pw,
            MARGIN_L - 6.0,
            yy + 4.0,
            format_tick(v)
        );
    }
    if let (Some(first), Some(last)) = (dates.first(), dates.last()) {
        let yy = HEIGHT - MARGIN_B + 18.0;
        let _ = writeln!(s, r#"<text x="{MARGIN_L}" y="{yy}">{}</text>"#, date_str(*first));
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{yy}" text-anchor="end">{}</text>"#,
            MARGIN_L + pw,
            date_str(*last)
        );
    }
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for (i, &v) in ys.iter().enumerate() {
            if !v.is_finite() {
                pen_down = false;
                continue;
            }
            let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, x(i), y(v));
            pen_down = true;
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.4"/>"#,
            path.trim_end()
        );
        let ly = MARGIN_T + 10.0 + 18.0 * k as f64;
        let lx = WIDTH - MARGIN_R + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Diverging blue-white-red colour for a correlation in `[-1, 1]`.
fn corr_color(c: f64) -> String {
    let t = c.clamp(-1.0, 1.0);
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Correlation heatmap with the value printed in each cell.
pub fn heatmap(title: &str, labels: &[String], m: &DMatrix<f64>) -> String {
    let p = m.nrows();
    let cell = (480.0 / p.max(1) as f64).clamp(14.0, 60.0);
    let left = 110.0;
    let top = 50.0;
    let size = left + cell * p as f64 + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{:.0}" viewBox="0 0 {size:.0} {:.0}" font-family="sans-serif" font-size="11">"#,
        top + cell * p as f64 + 20.0,
        top + cell * p as f64 + 20.0
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{left}" y="24" font-size="15">{}</text>"#, escape(title));
    for i in 0..p {
        let yy = top + cell * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            left - 6.0,
            yy + cell / 2.0 + 4.0,
            escape(labels.get(i).map(String::as_str).unwrap_or(""))
        );
        for j in 0..p {
            let xx = left + cell * j as f64;
            let v = m[(i, j)];
            let _ = writeln!(
                s,
                r##"<rect x="{xx:.2}" y="{yy:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}" stroke="#fff"/>"##,
                corr_color(v)
            );
            if cell >= 28.0 {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="10">{v:.2}</text>"#,
                    xx + cell / 2.0,
                    yy + cell / 2.0 + 3.5
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

/// Latest assignment file under `out/assignments`.
pub fn latest_assignment(out: &Path) -> Result<FactorAssignment> {
    let dir = out.join("assignments");
    let mut files: Vec<_> = fs::read_dir(&dir)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", dir.display()))))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let last = files
        .last()
        .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, "no assignment files")))?;
    FactorAssignment::from_json(&read(last)?)
}

/// Renders the plots from the artifacts already present in `out`.
pub fn write_plots(out: &Path) -> Result<()> {
    let (factors, params) = read_params_csv(read(&out.join("params.csv"))?.as_bytes())?;
    let dates: Vec<NaiveDate> = params.iter().map(|p| p.date.unwrap_or_default()).collect();
    let mut series = vec![(
        "eta".to_string(),
        params.iter().map(|p| p.eta.unwrap_or(f64::NAN)).collect(),
    )];
    for (k, f) in factors.iter().enumerate() {
        series.push((format!("lambda_{f}"), params.iter().map(|p| p.lambda[k]).collect()));
    }
    for (k, f) in factors.iter().enumerate() {
        series.push((format!("nu_{f}"), params.iter().map(|p| p.nu[k]).collect()));
    }
    let plots = out.join("plots");
    write_text(
        &plots.join("params_timeseries.svg"),
        &line_chart("Correlation coefficients", &dates, &series),
    )?;

    let assignment = latest_assignment(out)?;
    let last = params
        .last()
        .ok_or_else(|| Error::InvalidInput("params.csv has no rows".into()))?;
    let baseline = valid_model_correlation(last, &assignment)?;
    let stress = StressResult::from_json(&read(&out.join("stress_mc.json"))?)?;
    let stressed = valid_model_correlation(&stress.beta_star, &assignment)?;
    let labels = assignment.asset_ids().to_vec();
    let when = last.date.map(date_str).unwrap_or_default();
    write_text(
        &plots.join("heatmap_baseline.svg"),
        &heatmap(&format!("Model correlation {when}"), &labels, baseline.values()),
    )?;
    write_text(
        &plots.join("heatmap_stressed.svg"),
        &heatmap(
            &format!("Reverse stress scenario ({:.0}% HDR)", 100.0 * (1.0 - stress.q)),
            &labels,
            stressed.values(),
        ),
    )?;

    let points = read_var_csv(read(&out.join("var_series.csv"))?.as_bytes())?;
    let vd: Vec<NaiveDate> = points.iter().map(|p| p.date).collect();
    let vs = vec![
        ("VaR".to_string(), points.iter().map(|p| p.var).collect()),
        (
            "stressed VaR".to_string(),
            points.iter().map(|p| p.stressed_var).collect(),
        ),
    ];
    write_text(&plots.join("var_series.svg"), &line_chart("Value at risk", &vd, &vs))?;
    Ok(())
}
