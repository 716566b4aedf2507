//! One-to-one center matching under a physical distance gate, and
//! F1 / sensitivity / precision reporting.
//!
//! Ratios with a zero denominator are defined as 1.0: agreeing on nothing
//! counts as perfect agreement. Aggregation across FOVs sums TP/FP/FN
//! before taking ratios (micro-averaging).

use serde::{Deserialize, Serialize};

use crate::hungarian;

/// Gate used for nucleus-center matching, in µm.
pub const DEFAULT_MAX_DISTANCE_UM: f64 = 1.5;

/// Multiplier on the gate for forbidden (out-of-gate or padding) cells.
pub const FORBIDDEN_FACTOR: f64 = 1e6;

/// Largest supported side of the padded cost matrix; beyond this the
/// forbidden cost no longer dominates every feasible total.
pub const MAX_POINTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub gt_index: usize,
    pub pred_index: usize,
    pub distance_um: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// Sorted by `gt_index`.
    pub pairs: Vec<MatchPair>,
    pub unmatched_gt: Vec<usize>,
    pub unmatched_pred: Vec<usize>,
}

impl MatchResult {
    /// Sum of matched distances, accumulated in `gt_index` order.
    pub fn total_distance_um(&self) -> f64 {
        self.pairs.iter().map(|p| p.distance_um).sum()
    }
}

/// Optimal gated one-to-one matching of `gt` against `pred` (pixel
/// coordinates). Maximizes the number of pairs within `max_distance_um`,
/// then minimizes their summed distance.
///
/// # Panics
///
/// If `max_distance_um` or `microns_per_pixel` is not positive, or either
/// list exceeds [`MAX_POINTS`].
pub fn match_centers(
    gt: &[(f64, f64)],
    pred: &[(f64, f64)],
    max_distance_um: f64,
    microns_per_pixel: f64,
) -> MatchResult {
    assert!(max_distance_um > 0.0, "max_distance_um must be positive");
    assert!(microns_per_pixel > 0.0, "microns_per_pixel must be positive");
    let n = gt.len().max(pred.len());
    assert!(n <= MAX_POINTS, "at most {MAX_POINTS} centers per side are supported");

    let forbidden = FORBIDDEN_FACTOR * max_distance_um;
    let distance =
        |g: (f64, f64), p: (f64, f64)| ((g.0 - p.0).powi(2) + (g.1 - p.1).powi(2)).sqrt() * microns_per_pixel;

    let mut costs = vec![forbidden; n * n];
    for (i, &g) in gt.iter().enumerate() {
        for (j, &p) in pred.iter().enumerate() {
            let d = distance(g, p);
            if d <= max_distance_um {
                costs[i * n + j] = d;
            }
        }
    }
    let assignment = hungarian::solve(&costs, n);

    let mut pairs = Vec::new();
    let mut gt_used = vec![false; gt.len()];
    let mut pred_used = vec![false; pred.len()];
    for (i, &j) in assignment.iter().enumerate() {
        if i >= gt.len() || j >= pred.len() {
            continue;
        }
        let d = distance(gt[i], pred[j]);
        if d <= max_distance_um {
            pairs.push(MatchPair { gt_index: i, pred_index: j, distance_um: d });
            gt_used[i] = true;
            pred_used[j] = true;
        }
    }
    MatchResult {
        pairs,
        unmatched_gt: (0..gt.len()).filter(|&i| !gt_used[i]).collect(),
        unmatched_pred: (0..pred.len()).filter(|&j| !pred_used[j]).collect(),
    }
}

/// Detection counts; sums across FOVs for micro-averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn from_match(m: &MatchResult) -> Self {
        Self { tp: m.pairs.len(), fp: m.unmatched_pred.len(), fn_: m.unmatched_gt.len() }
    }
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub f1: f64,
    pub sensitivity: f64,
    pub precision: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(label: impl Into<String>, c: Counts) -> Self {
        Self {
            label: label.into(),
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            f1: ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_),
            sensitivity: ratio(c.tp, c.tp + c.fn_),
            precision: ratio(c.tp, c.tp + c.fp),
        }
    }

    /// A row with given ratios and no counts, for rendering published values.
    pub fn from_values(label: impl Into<String>, f1: f64, sensitivity: f64, precision: f64) -> Self {
        Self { label: label.into(), tp: 0, fp: 0, fn_: 0, f1, sensitivity, precision }
    }

    pub fn counts(&self) -> Counts {
        Counts { tp: self.tp, fp: self.fp, fn_: self.fn_ }
    }
}

pub fn compute_metrics(m: &MatchResult, label: &str) -> MetricsReport {
    MetricsReport::from_counts(label, Counts::from_match(m))
}

/// Micro-averaged metrics over several FOVs.
pub fn aggregate<'a>(matches: impl IntoIterator<Item = &'a MatchResult>, label: &str) -> MetricsReport {
    MetricsReport::from_counts(label, matches.into_iter().map(Counts::from_match).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Text,
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "text" => Ok(Self::Text),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(format!("unknown report format '{other}', expected text, csv or json")),
        }
    }
}

pub const REPORT_COLUMNS: [&str; 4] = ["Model performance", "F1 score", "Sensitivity", "Precision"];

/// Aggregation mode recorded in JSON reports.
pub const AGGREGATION: &str = "micro";

#[derive(Serialize)]
struct JsonReport<'a> {
    aggregation: &'a str,
    reports: &'a [MetricsReport],
}

/// Renders rows in `label, F1, sensitivity, precision` order. Text and CSV
/// round to 3 decimals; JSON keeps full precision and the counts.
pub fn render_report(reports: &[MetricsReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Text => {
            let label_width =
                reports.iter().map(|r| r.label.chars().count()).chain([REPORT_COLUMNS[0].len()]).max().unwrap_or(0);
            let mut out = format!("{:<label_width$}", REPORT_COLUMNS[0]);
            for col in &REPORT_COLUMNS[1..] {
                out.push_str(&format!(" | {col}"));
            }
            out.push('\n');
            for r in reports {
                out.push_str(&format!("{:<label_width$}", r.label));
                for (col, v) in REPORT_COLUMNS[1..].iter().zip([r.f1, r.sensitivity, r.precision]) {
                    out.push_str(&format!(" | {:>w$.3}", v, w = col.len()));
                }
                out.push('\n');
            }
            out
        }
        ReportFormat::Csv => {
            let mut out = REPORT_COLUMNS.join(",");
            out.push('\n');
            for r in reports {
                out.push_str(&format!("{},{:.3},{:.3},{:.3}\n", csv_field(&r.label), r.f1, r.sensitivity, r.precision));
            }
            out
        }
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&JsonReport { aggregation: AGGREGATION, reports })
                .expect("report serializes");
            s.push('\n');
            s
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
