//! CSV and SVG artifacts for a finished run.

use std::fmt::Write as _;
use std::path::Path;

use super::fit::TrainHistory;
use super::metrics::EvalReport;
use crate::data::table::fmt_f64;
use crate::error::Result;
use crate::fsutil::{ensure_dir, write_atomic};

pub fn history_csv(h: &TrainHistory) -> String {
    let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr,seconds\n");
    for r in &h.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.epoch,
            fmt_f64(r.train_loss),
            fmt_f64(r.train_acc),
            fmt_f64(r.val_loss),
            fmt_f64(r.val_acc),
            fmt_f64(r.lr),
            fmt_f64(r.seconds)
        );
    }
    s
}

pub fn confusion_csv(cm: &[Vec<usize>]) -> String {
    let k = cm.len();
    let mut s = String::from("true");
    for j in 0..k {
        let _ = write!(s, ",pred_{j}");
    }
    s.push('\n');
    for (i, row) in cm.iter().enumerate() {
        let _ = write!(s, "{i}");
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

fn points_csv(header: &str, pts: &[(f64, f64)]) -> String {
    let mut s = format!("{header}\n");
    for (a, b) in pts {
        let _ = writeln!(s, "{},{}", fmt_f64(*a), fmt_f64(*b));
    }
    s
}

/// One named polyline.
#[derive(Debug, Clone)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Minimal deterministic SVG line chart.
#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed axis ranges; computed from the data when `None`.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn span(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl LinePlot {
    pub fn to_svg(&self) -> String {
        let (w, h) = (640.0, 420.0);
        let (l, r, t, b) = (70.0, 150.0, 40.0, 55.0);
        let (pw, ph) = (w - l - r, h - t - b);
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = self.x_range.unwrap_or_else(|| span(all().map(|p| p.0)));
        let (y0, y1) = self.y_range.unwrap_or_else(|| span(all().map(|p| p.1)));
        let sx = |x: f64| l + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| t + ph - (y - y0) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
            l + pw / 2.0,
            escape(&self.title)
        );
        for i in 0..=4 {
            let f = f64::from(i) / 4.0;
            let (gx, gy) = (l + f * pw, t + ph - f * ph);
            let _ = writeln!(
                s,
                r##"<line x1="{gx:.1}" y1="{t:.1}" x2="{gx:.1}" y2="{:.1}" stroke="#e0e0e0"/><line x1="{l:.1}" y1="{gy:.1}" x2="{:.1}" y2="{gy:.1}" stroke="#e0e0e0"/>"##,
                t + ph,
                l + pw
            );
            let _ = writeln!(
                s,
                r#"<text x="{gx:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                t + ph + 16.0,
                tick(x0 + f * (x1 - x0)),
                l - 6.0,
                gy + 4.0,
                tick(y0 + f * (y1 - y0))
            );
        }
        let _ = writeln!(
            s,
            r#"<rect x="{l:.1}" y="{t:.1}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            l + pw / 2.0,
            h - 14.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            t + ph / 2.0,
            t + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, ser) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = ser
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                pts.join(" ")
            );
            let ly = t + 14.0 + 18.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
                l + pw + 10.0,
                l + pw + 30.0,
                l + pw + 36.0,
                ly + 4.0,
                escape(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn curve_plot(title: String, x: &str, y: &str, name: String, pts: &[(f64, f64)]) -> LinePlot {
    LinePlot {
        title,
        x_label: x.into(),
        y_label: y.into(),
        series: vec![Series {
            name,
            points: pts.to_vec(),
        }],
        x_range: Some((0.0, 1.0)),
        y_range: Some((0.0, 1.0)),
    }
}

/// Writes history.csv, loss/accuracy SVGs and, with a report, confusion,
/// ROC and PR CSV/SVG files.
pub fn export_history(history: &TrainHistory, report: Option<&EvalReport>, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    write_atomic(&out_dir.join("history.csv"), history_csv(history).as_bytes())?;
    let col = |f: fn(&super::fit::EpochRecord) -> f64| -> Vec<(f64, f64)> {
        history.records.iter().map(|r| (r.epoch as f64, f(r))).collect()
    };
    for (file, title, y, tr, va) in [
        ("loss.svg", "Loss", "cross-entropy", col(|r| r.train_loss), col(|r| r.val_loss)),
        ("accuracy.svg", "Accuracy", "accuracy", col(|r| r.train_acc), col(|r| r.val_acc)),
    ] {
        let plot = LinePlot {
            title: title.into(),
            x_label: "epoch".into(),
            y_label: y.into(),
            series: vec![
                Series {
                    name: "train".into(),
                    points: tr,
                },
                Series {
                    name: "val".into(),
                    points: va,
                },
            ],
            x_range: None,
            y_range: None,
        };
        write_atomic(&out_dir.join(file), plot.to_svg().as_bytes())?;
    }
    if let Some(rep) = report {
        export_report(rep, out_dir)?;
    }
    Ok(())
}

pub fn export_report(rep: &EvalReport, out_dir: &Path) -> Result<()> {
    ensure_dir(out_dir)?;
    write_atomic(&out_dir.join("confusion.csv"), confusion_csv(&rep.confusion).as_bytes())?;
    for (c, pts) in rep.roc.iter().enumerate() {
        write_atomic(&out_dir.join(format!("roc_{c}.csv")), points_csv("fpr,tpr", pts).as_bytes())?;
        let auc = rep.auc[c].map_or("undefined".to_string(), |a| format!("{a:.4}"));
        let p = curve_plot(format!("ROC class {c}"), "false positive rate", "true positive rate", format!("AUC {auc}"), pts);
        write_atomic(&out_dir.join(format!("roc_{c}.svg")), p.to_svg().as_bytes())?;
    }
    for (c, pts) in rep.pr.iter().enumerate() {
        write_atomic(&out_dir.join(format!("pr_{c}.csv")), points_csv("recall,precision", pts).as_bytes())?;
        let p = curve_plot(format!("Precision-recall class {c}"), "recall", "precision", format!("class {c}"), pts);
        write_atomic(&out_dir.join(format!("pr_{c}.svg")), p.to_svg().as_bytes())?;
    }
    Ok(())
}
