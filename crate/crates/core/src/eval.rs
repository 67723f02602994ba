//! Pair-level metrics, tolerant plate comparison and cross-validation.

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::dataset::SetId;
use crate::error::{Error, Result};
use crate::ocr::reading::PLATE_SLOTS;
use crate::pairgen::{PairSample, SplitPlan, SplitRound};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], truth: &[bool]) -> Result<Self> {
        if predicted.len() != truth.len() {
            return Err(Error::shape(truth.len(), predicted.len()));
        }
        let mut c = Confusion::default();
        for (&p, &t) in predicted.iter().zip(truth) {
            match (p, t) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn precision_recall(&self) -> (f64, f64) {
        precision_recall(self.tp as i64, self.fp as i64, self.fn_ as i64)
            .expect("counts are nonnegative")
    }

    pub fn f_score(&self) -> f64 {
        let (p, r) = self.precision_recall();
        f_score(p, r).expect("in range")
    }
}

/// `P = tp / (tp + fp)` and `R = tp / (tp + fn)`, each 0 when its
/// denominator is 0.
pub fn precision_recall(tp: i64, fp: i64, fn_: i64) -> Result<(f64, f64)> {
    if tp < 0 || fp < 0 || fn_ < 0 {
        return Err(Error::InvalidArgument(format!(
            "negative count in ({tp}, {fp}, {fn_})"
        )));
    }
    let ratio = |a: i64, b: i64| {
        if a + b == 0 {
            0.0
        } else {
            a as f64 / (a + b) as f64
        }
    };
    Ok((ratio(tp, fp), ratio(tp, fn_)))
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_score(precision: f64, recall: f64) -> Result<f64> {
    let ok = |v: f64| (0.0..=1.0).contains(&v);
    if !ok(precision) || !ok(recall) {
        return Err(Error::InvalidArgument(format!(
            "P={precision}, R={recall} outside [0, 1]"
        )));
    }
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}

/// Number of mismatching slots between two plate strings laid out from the
/// left over at least 7 slots. A slot counts as a mismatch unless both
/// strings have the same character there.
pub fn slot_mismatches(s1: &str, s2: &str) -> usize {
    let a: Vec<char> = s1.chars().collect();
    let b: Vec<char> = s2.chars().collect();
    let n = PLATE_SLOTS.max(a.len()).max(b.len());
    (0..n)
        .filter(|&i| match (a.get(i), b.get(i)) {
            (Some(x), Some(y)) => x != y,
            _ => true,
        })
        .count()
}

pub fn plate_match_tolerance(s1: &str, s2: &str, k: u8) -> Result<bool> {
    if k > 2 {
        return Err(Error::InvalidArgument(format!(
            "tolerance k={k} not in {{0, 1, 2}}"
        )));
    }
    Ok(slot_mismatches(s1, s2) <= k as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub round: usize,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

impl RoundMetrics {
    pub fn from_confusion(round: usize, c: &Confusion) -> Self {
        let (precision, recall) = c.precision_recall();
        Self {
            round,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision,
            recall,
            f_score: c.f_score(),
        }
    }
}

/// Per-round metrics and their arithmetic means. The mean F is the
/// average of the per-round F values, not the F of the mean P and R.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rounds: Vec<RoundMetrics>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mean_f_score: f64,
}

impl MetricsReport {
    pub fn from_rounds(rounds: Vec<RoundMetrics>) -> Self {
        let n = rounds.len().max(1) as f64;
        let mean = |f: fn(&RoundMetrics) -> f64| rounds.iter().map(f).sum::<f64>() / n;
        Self {
            mean_precision: mean(|r| r.precision),
            mean_recall: mean(|r| r.recall),
            mean_f_score: mean(|r| r.f_score),
            rounds,
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["round", "tp", "fp", "fn", "precision", "recall", "f_score"])?;
        for r in &self.rounds {
            w.write_record([
                r.round.to_string(),
                r.tp.to_string(),
                r.fp.to_string(),
                r.fn_.to_string(),
                format!("{:.6}", r.precision),
                format!("{:.6}", r.recall),
                format!("{:.6}", r.f_score),
            ])?;
        }
        let total =
            |f: fn(&RoundMetrics) -> u64| self.rounds.iter().map(f).sum::<u64>().to_string();
        w.write_record([
            "average".to_string(),
            total(|r| r.tp),
            total(|r| r.fp),
            total(|r| r.fn_),
            format!("{:.6}", self.mean_precision),
            format!("{:.6}", self.mean_recall),
            format!("{:.6}", self.mean_f_score),
        ])?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::io("report.csv", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("ASCII"))
    }

    /// Writes `report.csv`, `report.json` and `report.png` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv_path = dir.join("report.csv");
        std::fs::write(&csv_path, self.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, serde_json::to_string_pretty(self)?)
            .map_err(|e| Error::io(&json_path, e))?;
        let png_path = dir.join("report.png");
        self.bar_plot().save(&png_path)?;
        Ok(())
    }

    /// Grouped bars of P, R and F per round followed by the averages, on a
    /// 0..1 axis with gridlines every 0.1.
    pub fn bar_plot(&self) -> RgbImage {
        const H: u32 = 240;
        const BAR: u32 = 14;
        const GAP: u32 = 18;
        let mut groups: Vec<[f64; 3]> = self
            .rounds
            .iter()
            .map(|r| [r.precision, r.recall, r.f_score])
            .collect();
        groups.push([self.mean_precision, self.mean_recall, self.mean_f_score]);
        let width = GAP + groups.len() as u32 * (3 * BAR + GAP);
        let mut img = RgbImage::from_pixel(width, H + 20, Rgb([255, 255, 255]));
        for tick in 0..=10 {
            let y = 10 + H - tick * H / 10;
            for x in 0..width {
                img.put_pixel(x, y, Rgb([225, 225, 225]));
            }
        }
        let colors = [
            Rgb([66, 114, 196]),
            Rgb([237, 125, 49]),
            Rgb([112, 173, 71]),
        ];
        for (g, vals) in groups.iter().enumerate() {
            let x0 = GAP + g as u32 * (3 * BAR + GAP);
            for (k, &v) in vals.iter().enumerate() {
                let h = (v.clamp(0.0, 1.0) * H as f64).round() as u32;
                for x in x0 + k as u32 * BAR..x0 + (k as u32 + 1) * BAR - 1 {
                    for y in 10 + H - h..=10 + H {
                        img.put_pixel(x, y, colors[k]);
                    }
                }
            }
        }
        img
    }
}

/// Anything that carries a ground-truth pair label.
pub trait Labeled {
    fn is_match(&self) -> bool;
}

impl<T> Labeled for PairSample<T> {
    fn is_match(&self) -> bool {
        self.matching
    }
}

/// A trainable matching/non-matching pair classifier.
pub trait PairClassifier<P> {
    fn fit(&mut self, train: &[P], validation: &[P]) -> Result<()>;
    fn predict(&self, pairs: &[P]) -> Result<Vec<bool>>;
}

fn gather<P: Clone>(pools: &BTreeMap<SetId, Vec<P>>, sets: &[SetId]) -> Result<Vec<P>> {
    let mut out = Vec::new();
    for s in sets {
        out.extend_from_slice(
            pools
                .get(s)
                .ok_or_else(|| Error::Missing(format!("set {s}")))?,
        );
    }
    Ok(out)
}

/// Runs the listed rounds (1-based) of `plan`: a fresh classifier from
/// `factory` is fitted on the training sets (selecting on the validation
/// set) and scored on the test sets.
pub fn run_cross_validation<P, C, F>(
    pools: &BTreeMap<SetId, Vec<P>>,
    plan: &SplitPlan,
    rounds: &[usize],
    mut factory: F,
) -> Result<MetricsReport>
where
    P: Labeled + Clone,
    C: PairClassifier<P>,
    F: FnMut(usize, &SplitRound) -> Result<C>,
{
    for s in SetId::ALL {
        if !pools.contains_key(&s) {
            return Err(Error::Missing(format!("set {s}")));
        }
    }
    let mut out = Vec::with_capacity(rounds.len());
    for &r in rounds {
        let round = plan
            .rounds
            .get(r.wrapping_sub(1))
            .ok_or_else(|| Error::InvalidArgument(format!("round {r} not in plan")))?;
        let train = gather(pools, &round.train)?;
        let val = gather(pools, &[round.validation])?;
        let test = gather(pools, &round.test)?;
        let mut clf = factory(r, round)?;
        clf.fit(&train, &val)?;
        let predicted = clf.predict(&test)?;
        let truth: Vec<bool> = test.iter().map(Labeled::is_match).collect();
        let c = Confusion::from_predictions(&predicted, &truth)?;
        let m = RoundMetrics::from_confusion(r, &c);
        log::info!(
            "round {}: P={:.4} R={:.4} F={:.4}",
            r,
            m.precision,
            m.recall,
            m.f_score
        );
        out.push(m);
    }
    Ok(MetricsReport::from_rounds(out))
}
