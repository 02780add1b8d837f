//! Plain-text result tables, one column per defect class.

use std::fmt::Write as _;

use aoi_core::pipeline::{EvalResult, StageTimings};
use aoi_core::DefectClass;

const LABEL: usize = 16;
const CELL: usize = 16;

fn header(extra: Option<&str>) -> String {
    let mut s = format!("{:<LABEL$}", "");
    for c in DefectClass::ALL {
        let _ = write!(s, "{:>CELL$}", c.title());
    }
    if let Some(e) = extra {
        let _ = write!(s, "{e:>CELL$}");
    }
    s.push('\n');
    s
}

fn pct(v: Option<f64>, decimals: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.decimals$}%"))
}

/// Actual count, detected count (with the surplus in brackets) and P_d.
pub fn detection_table(eval: &EvalResult) -> String {
    let mut s = header(None);
    let mut actual = format!("{:<LABEL$}", "Actual number");
    let mut detected = format!("{:<LABEL$}", "Detected number");
    let mut rate = format!("{:<LABEL$}", "P_d");
    for d in &eval.detection {
        let _ = write!(actual, "{:>CELL$}", d.actual);
        let cell = if d.unmatched > 0 {
            format!("{}(+{})", d.detected, d.unmatched)
        } else {
            d.detected.to_string()
        };
        let _ = write!(detected, "{cell:>CELL$}");
        let _ = write!(rate, "{:>CELL$}", pct(d.error_rate, 1));
    }
    for row in [actual, detected, rate] {
        s.push_str(row.trim_end());
        s.push('\n');
    }
    s
}

/// P_c per class and AP_c in the last column.
pub fn classification_table(eval: &EvalResult, row_label: &str) -> String {
    let mut s = header(Some("AP_c"));
    let mut row = format!("{row_label:<LABEL$}");
    for c in &eval.classification {
        let _ = write!(row, "{:>CELL$}", pct(c.precision, 2));
    }
    let _ = write!(row, "{:>CELL$}", pct(eval.average_precision, 2));
    s.push_str(&row);
    s.push('\n');
    s
}

pub fn confusion_table(eval: &EvalResult) -> String {
    let mut s = format!("{:<LABEL$}", "true \\ pred");
    for c in DefectClass::ALL {
        let _ = write!(s, "{:>CELL$}", c.title());
    }
    s.push('\n');
    for (c, row) in DefectClass::ALL.iter().zip(&eval.confusion) {
        let _ = write!(s, "{:<LABEL$}", c.title());
        for v in row {
            let _ = write!(s, "{v:>CELL$}");
        }
        s.push('\n');
    }
    s
}

/// Mean seconds per stage.
pub fn timing_table(t: &StageTimings) -> String {
    let rows = [
        ("Registration", t.registration),
        ("Binaryzation", t.binaryzation),
        ("Localization", t.localization),
        ("Classification", t.classification),
        ("Total", t.total),
    ];
    let mut s = format!("{:<LABEL$}{:>CELL$}\n", "Step", "Time (s)");
    for (name, v) in rows {
        let _ = writeln!(s, "{name:<LABEL$}{v:>CELL$.4}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use aoi_core::pipeline::{evaluate_classification, evaluate_detection};

    #[test]
    fn one_row_per_class_in_order() {
        let eval = evaluate_detection(&[], 0.33).unwrap();
        let t = detection_table(&eval);
        let head = t.lines().next().unwrap();
        let pos: Vec<usize> = DefectClass::ALL.iter().map(|c| head.find(c.title()).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        assert!(t.contains("n/a"));
    }

    #[test]
    fn ap_column() {
        let labels = DefectClass::ALL.to_vec();
        let eval = evaluate_classification(&labels, &labels).unwrap();
        let t = classification_table(&eval, "Test data");
        assert!(t.lines().nth(1).unwrap().trim_end().ends_with("100.00%"));
        assert_eq!(t.matches("100.00%").count(), 7);
    }
}
