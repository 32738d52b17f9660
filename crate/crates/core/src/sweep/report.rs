use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::mask::ClassId;
use crate::strategy::parse_strategy;

/// Per-class test IoU; `None` where no test image defined the class.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassScores {
    pub wframe: Option<f64>,
    pub bend: Option<f64>,
    pub dent: Option<f64>,
    pub scratch: Option<f64>,
}

impl ClassScores {
    pub fn get(&self, class: ClassId) -> Option<f64> {
        match class {
            ClassId::WindowFrame => self.wframe,
            ClassId::Bend => self.bend,
            ClassId::Dent => self.dent,
            ClassId::Scratch => self.scratch,
        }
    }

    pub fn set(&mut self, class: ClassId, value: Option<f64>) {
        let slot = match class {
            ClassId::WindowFrame => &mut self.wframe,
            ClassId::Bend => &mut self.bend,
            ClassId::Dent => &mut self.dent,
            ClassId::Scratch => &mut self.scratch,
        };
        *slot = value;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    /// Compact code, `""` for the baseline.
    pub strategy: String,
    pub iou: ClassScores,
    /// Best validation mean IoU seen during training.
    pub val_best: f64,
    /// Mean training loss over the epoch that produced the kept weights.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub strategy: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub strategy: String,
    pub delta: f64,
}

/// Class key (`wframe`, `bend`, ...) -> deltas vs. baseline, largest first.
pub type ImpactTable = BTreeMap<String, Vec<Delta>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config_digest: String,
    pub rows: Vec<StrategyResult>,
    /// Code of the baseline row (`""`), or `null` if there is none.
    pub baseline: Option<String>,
    pub deltas: ImpactTable,
    /// Per-class max - min across orderings (permutation sweeps).
    pub spreads: BTreeMap<String, Option<f64>>,
    pub notes: Vec<String>,
    pub failures: Vec<Failure>,
}

impl SweepReport {
    /// Report around `rows`, with deltas and spreads filled in where they
    /// are defined.
    pub fn assemble(config_digest: String, rows: Vec<StrategyResult>, failures: Vec<Failure>, permutations: bool) -> Self {
        let mut report = Self {
            config_digest,
            baseline: rows.iter().any(|r| r.strategy.is_empty()).then(String::new),
            rows,
            deltas: BTreeMap::new(),
            spreads: BTreeMap::new(),
            notes: Vec::new(),
            failures,
        };
        if let Ok(table) = impact_table(&report) {
            report.deltas = table;
        }
        if permutations {
            match order_spread(&report) {
                Ok(s) => report.spreads = s,
                Err(e) => report.notes.push(format!("order spread unavailable: {e}")),
            }
        }
        report
    }

    pub fn row(&self, strategy: &str) -> Option<&StrategyResult> {
        self.rows.iter().find(|r| r.strategy == strategy)
    }

    /// Pretty JSON with a trailing newline; identical reports give
    /// identical bytes.
    pub fn to_json_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<Self> {
        let value: Value = serde_json::from_slice(bytes)?;
        validate_report(&value)?;
        Ok(serde_json::from_value(value)?)
    }
}

/// `strategy IoU - baseline IoU` per class, sorted descending (ties keep
/// row order). Rows or a baseline without a defined IoU for a class are
/// left out of that class.
pub fn impact_table(report: &SweepReport) -> Result<ImpactTable> {
    let base = report.row("").ok_or(Error::MissingBaseline)?;
    let mut table = BTreeMap::new();
    for class in ClassId::ALL {
        let mut deltas: Vec<Delta> = match base.iou.get(class) {
            None => Vec::new(),
            Some(b) => report
                .rows
                .iter()
                .filter(|r| !r.strategy.is_empty())
                .filter_map(|r| r.iou.get(class).map(|v| Delta { strategy: r.strategy.clone(), delta: v - b }))
                .collect(),
        };
        deltas.sort_by(|a, b| b.delta.total_cmp(&a.delta));
        table.insert(class.key().to_string(), deltas);
    }
    Ok(table)
}

/// Per class, `max - min` IoU over the rows (orderings); `None` for a
/// class with fewer than two defined values.
pub fn order_spread(report: &SweepReport) -> Result<BTreeMap<String, Option<f64>>> {
    if report.rows.len() < 2 {
        return Err(Error::InsufficientOrderings(report.rows.len()));
    }
    Ok(ClassId::ALL
        .iter()
        .map(|&class| {
            let vals: Vec<f64> = report.rows.iter().filter_map(|r| r.iou.get(class)).collect();
            let spread = (vals.len() >= 2).then(|| {
                let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
                max - min
            });
            (class.key().to_string(), spread)
        })
        .collect())
}

fn label(code: &str) -> String {
    if code.is_empty() {
        "Without IPT".into()
    } else {
        code.replace('+', " + ")
    }
}

/// The results table as CSV: one row per strategy, Bend / Dent / Scratch /
/// window-frame columns, three decimals, empty cells for undefined IoUs.
pub fn report_csv(report: &SweepReport) -> String {
    let mut out = String::from("IPT Strategy,Test Bend IoU,Test Dent IoU,Test Scratch IoU,Test Wframe IoU\n");
    for row in &report.rows {
        out.push_str(&label(&row.strategy));
        for class in [ClassId::Bend, ClassId::Dent, ClassId::Scratch, ClassId::WindowFrame] {
            out.push(',');
            if let Some(v) = row.iou.get(class) {
                let _ = write!(out, "{v:.3}");
            }
        }
        out.push('\n');
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Horizontal bar chart of one class's deltas (positive bars green,
/// negative red), in the order of the impact table.
pub fn impact_svg(table: &ImpactTable, class: ClassId) -> String {
    let empty = Vec::new();
    let deltas = table.get(class.key()).unwrap_or(&empty);
    let (bar_h, gap, left, plot_w, top) = (18.0, 6.0, 150.0, 360.0, 40.0);
    let height = top + deltas.len() as f64 * (bar_h + gap) + 30.0;
    let width = left + plot_w + 70.0;
    let max = deltas.iter().map(|d| d.delta.abs()).fold(0.0, f64::max).max(1e-6);
    let zero = left + plot_w / 2.0;
    let scale = plot_w / 2.0 / max;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let title = format!("Preprocessing impact on {} IoU (vs. Without IPT)", class.key());
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2.0, xml_escape(&title));
    for (i, d) in deltas.iter().enumerate() {
        let y = top + i as f64 * (bar_h + gap);
        let w = d.delta.abs() * scale;
        let x = if d.delta >= 0.0 { zero } else { zero - w };
        let fill = if d.delta >= 0.0 { "#2e7d32" } else { "#c62828" };
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, left - 8.0, y + 13.0, xml_escape(&label(&d.strategy)));
        let _ = writeln!(s, r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{bar_h}" fill="{fill}"/>"#);
        let (tx, anchor) = if d.delta >= 0.0 { (x + w + 4.0, "start") } else { (x - 4.0, "end") };
        let _ = writeln!(s, r#"<text x="{tx:.2}" y="{}" text-anchor="{anchor}">{:+.3}</text>"#, y + 13.0, d.delta);
    }
    let _ = writeln!(s, r#"<line x1="{zero}" y1="{}" x2="{zero}" y2="{}" stroke="black"/>"#, top - 4.0, height - 26.0);
    s.push_str("</svg>\n");
    s
}

/// `report.json`, `report.csv` and `impact_<class>.svg` into `dir`.
pub fn write_outputs(report: &SweepReport, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, bytes: &[u8]| {
        let p = dir.join(name);
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("report.json".into(), &report.to_json_bytes())?;
    write("report.csv".into(), report_csv(report).as_bytes())?;
    for class in ClassId::ALL {
        write(format!("impact_{}.svg", class.key()), impact_svg(&report.deltas, class).as_bytes())?;
    }
    Ok(())
}

/// Structural check of a report document.
pub fn validate_report(v: &Value) -> Result<()> {
    let fail = |m: String| Err(Error::Schema(m));
    let obj = match v.as_object() {
        Some(o) => o,
        None => return fail("report must be an object".into()),
    };
    let allowed = ["config_digest", "rows", "baseline", "deltas", "spreads", "notes", "failures"];
    for key in allowed {
        if !obj.contains_key(key) {
            return fail(format!("missing key {key:?}"));
        }
    }
    if let Some(extra) = obj.keys().find(|k| !allowed.contains(&k.as_str())) {
        return fail(format!("unexpected key {extra:?}"));
    }
    match obj["config_digest"].as_str() {
        Some(d) if d.len() == 64 && d.bytes().all(|b| b.is_ascii_hexdigit()) => {}
        _ => return fail("config_digest must be 64 hex digits".into()),
    }

    let class_keys: Vec<&str> = ClassId::ALL.iter().map(|c| c.key()).collect();
    let Some(rows) = obj["rows"].as_array() else { return fail("rows must be an array".into()) };
    let mut strategies = HashSet::new();
    for (i, row) in rows.iter().enumerate() {
        let Some(r) = row.as_object() else { return fail(format!("rows[{i}] must be an object")) };
        let Some(code) = r.get("strategy").and_then(Value::as_str) else {
            return fail(format!("rows[{i}].strategy must be a string"));
        };
        if parse_strategy(code).map(|s| s.code() != code).unwrap_or(true) {
            return fail(format!("rows[{i}].strategy {code:?} is not a canonical strategy code"));
        }
        if !strategies.insert(code.to_string()) {
            return fail(format!("strategy {code:?} appears twice"));
        }
        let Some(iou) = r.get("iou").and_then(Value::as_object) else { return fail(format!("rows[{i}].iou must be an object")) };
        if iou.len() != 4 || !class_keys.iter().all(|k| iou.contains_key(*k)) {
            return fail(format!("rows[{i}].iou must have exactly the keys {class_keys:?}"));
        }
        for (k, val) in iou {
            let ok = val.is_null() || val.as_f64().is_some_and(|x| (0.0..=1.0).contains(&x));
            if !ok {
                return fail(format!("rows[{i}].iou.{k} must be null or a number in [0, 1]"));
            }
        }
        for k in ["val_best", "loss"] {
            if !r.get(k).is_some_and(Value::is_number) {
                return fail(format!("rows[{i}].{k} must be a number"));
            }
        }
    }

    match &obj["baseline"] {
        Value::Null => {}
        Value::String(b) if strategies.contains(b) => {}
        other => return fail(format!("baseline {other} does not name a row")),
    }
    let Some(deltas) = obj["deltas"].as_object() else { return fail("deltas must be an object".into()) };
    for (k, list) in deltas {
        if !class_keys.contains(&k.as_str()) {
            return fail(format!("deltas has unknown class {k:?}"));
        }
        let Some(list) = list.as_array() else { return fail(format!("deltas.{k} must be an array")) };
        let mut prev = f64::INFINITY;
        for d in list {
            let s = d.get("strategy").and_then(Value::as_str);
            let x = d.get("delta").and_then(Value::as_f64);
            match (s, x) {
                (Some(s), Some(x)) if strategies.contains(s) && x <= prev => prev = x,
                _ => return fail(format!("deltas.{k} entries must be {{strategy, delta}} for known rows, sorted descending")),
            }
        }
    }
    let Some(spreads) = obj["spreads"].as_object() else { return fail("spreads must be an object".into()) };
    for (k, s) in spreads {
        if !class_keys.contains(&k.as_str()) || !(s.is_null() || s.as_f64().is_some_and(|x| x >= 0.0)) {
            return fail(format!("spreads.{k} must be null or a non-negative number for a known class"));
        }
    }
    if !obj["notes"].as_array().is_some_and(|n| n.iter().all(Value::is_string)) {
        return fail("notes must be an array of strings".into());
    }
    let failures_ok = obj["failures"].as_array().is_some_and(|f| {
        f.iter().all(|x| x.get("strategy").is_some_and(Value::is_string) && x.get("error").is_some_and(Value::is_string))
    });
    if !failures_ok {
        return fail("failures must be an array of {strategy, error}".into());
    }
    Ok(())
}
