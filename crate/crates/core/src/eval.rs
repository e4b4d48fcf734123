//! Stratification metrics: ROC AUC, sensitivity at alert rate, lift tables.
//!
//! Alert sets take the top `ceil(rate * n)` scores. Equal scores keep their
//! input order, so callers should pass rows in a canonical order (see
//! [`canonical_order`]) for reproducible boundaries.

use std::cmp::Ordering;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least one positive and one negative label ({positives} positives of {n})")]
    DegenerateLabels { n: usize, positives: usize },
    #[error("alert rate {0} is outside (0, 1]")]
    InvalidRate(f64),
    #[error("alert rates must be strictly increasing")]
    UnsortedRates,
    #[error("{labels} labels but {scores} scores")]
    LengthMismatch { labels: usize, scores: usize },
    #[error("score at position {0} is not finite")]
    NonFiniteScore(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn check(labels: &[bool], scores: &[f64], need_negative: bool) -> Result<usize, EvalError> {
    if labels.len() != scores.len() {
        return Err(EvalError::LengthMismatch {
            labels: labels.len(),
            scores: scores.len(),
        });
    }
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(EvalError::NonFiniteScore(i));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || (need_negative && positives == labels.len()) {
        return Err(EvalError::DegenerateLabels {
            n: labels.len(),
            positives,
        });
    }
    Ok(positives)
}

/// Indices that sort `ids` ascending; use it to put rows in canonical order
/// before computing alert-based metrics.
pub fn canonical_order<S: AsRef<str>>(ids: &[S]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| ids[a].as_ref().cmp(ids[b].as_ref()));
    idx
}

/// Mann-Whitney AUC via midranks; ties between a positive and a negative count one half.
pub fn roc_auc(labels: &[bool], scores: &[f64]) -> Result<f64, EvalError> {
    let positives = check(labels, scores, true)?;
    let negatives = labels.len() - positives;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // twice the positive rank sum, so midranks stay integral
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let pos_in_group = idx[start..end].iter().filter(|&&i| labels[i]).count() as u128;
        // ranks start+1 ..= end; their mean doubled is start + end + 1
        doubled_rank_sum += pos_in_group * (start + end + 1) as u128;
        start = end;
    }
    let p = positives as u128;
    let doubled_u = doubled_rank_sum - p * (p + 1);
    Ok(doubled_u as f64 / 2.0 / (positives as f64 * negatives as f64))
}

fn alert_count(rate: f64, n: usize) -> Result<usize, EvalError> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(EvalError::InvalidRate(rate));
    }
    // absorb representation error such as 0.07 * 100 = 7.000000000000001
    let k = (rate * n as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(k.min(n))
}

/// Row indices ordered by descending score, stable for equal scores.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    idx
}

pub fn sensitivity_at_alert_rate(labels: &[bool], scores: &[f64], rate: f64) -> Result<f64, EvalError> {
    let positives = check(labels, scores, false)?;
    let k = alert_count(rate, labels.len())?;
    let caught = ranked(scores)[..k].iter().filter(|&&i| labels[i]).count();
    Ok(caught as f64 / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlaPoint {
    pub alert_rate: f64,
    pub sensitivity: f64,
}

/// Alert rates 1%, 2%, ..., 20%.
pub fn default_alert_rates() -> Vec<f64> {
    (1..=20).map(|i| i as f64 / 100.0).collect()
}

pub fn sla_curve(labels: &[bool], scores: &[f64], rates: &[f64]) -> Result<Vec<SlaPoint>, EvalError> {
    let positives = check(labels, scores, false)?;
    if rates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::UnsortedRates);
    }
    let order = ranked(scores);
    let mut caught_prefix = Vec::with_capacity(order.len() + 1);
    caught_prefix.push(0usize);
    for &i in &order {
        caught_prefix.push(caught_prefix.last().unwrap() + labels[i] as usize);
    }
    rates
        .iter()
        .map(|&rate| {
            let k = alert_count(rate, labels.len())?;
            Ok(SlaPoint {
                alert_rate: rate,
                sensitivity: caught_prefix[k] as f64 / positives as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LiftRow {
    pub top_fraction: f64,
    pub outcome_rate: f64,
    pub lift: f64,
}

/// Fractions 0.1, 0.2, ..., 1.0.
pub fn default_lift_fractions() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 10.0).collect()
}

/// Ratio of a slice's outcome rate to the overall rate.
pub fn lift(slice_rate: f64, overall_rate: f64) -> f64 {
    slice_rate / overall_rate
}

pub fn lift_table(outcomes: &[bool], scores: &[f64], fractions: &[f64]) -> Result<Vec<LiftRow>, EvalError> {
    let positives = check(outcomes, scores, false)?;
    let n = outcomes.len();
    let overall = positives as f64 / n as f64;
    let order = ranked(scores);
    let mut rows = Vec::with_capacity(fractions.len());
    for &f in fractions {
        let k = alert_count(f, n)?;
        let caught = order[..k].iter().filter(|&&i| outcomes[i]).count();
        let outcome_rate = caught as f64 / k as f64;
        rows.push(LiftRow {
            top_fraction: f,
            outcome_rate,
            lift: lift(outcome_rate, overall),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub n: usize,
    pub positives: usize,
    pub auc: f64,
    pub sla_points: Vec<SlaPoint>,
    pub lift_rows: Vec<LiftRow>,
}

impl EvaluationReport {
    /// Evaluates scores for identified rows, putting them in id order first.
    pub fn evaluate<S: AsRef<str>>(ids: &[S], labels: &[bool], scores: &[f64]) -> Result<Self, EvalError> {
        assert_eq!(ids.len(), labels.len(), "one id per label");
        check(labels, scores, true)?;
        let order = canonical_order(ids);
        let labels: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
        let scores: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
        Ok(Self {
            n: labels.len(),
            positives: labels.iter().filter(|&&y| y).count(),
            auc: roc_auc(&labels, &scores)?,
            sla_points: sla_curve(&labels, &scores, &default_alert_rates())?,
            lift_rows: lift_table(&labels, &scores, &default_lift_fractions())?,
        })
    }

    pub fn write_json<W: Write>(&self, mut writer: W) -> Result<(), EvalError> {
        serde_json::to_writer_pretty(&mut writer, self)?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn write_sla_csv<W: Write>(&self, mut writer: W) -> Result<(), EvalError> {
        writeln!(writer, "alert_rate,sensitivity")?;
        for p in &self.sla_points {
            writeln!(writer, "{},{}", p.alert_rate, p.sensitivity)?;
        }
        Ok(())
    }

    pub fn write_lift_csv<W: Write>(&self, mut writer: W) -> Result<(), EvalError> {
        writeln!(writer, "top_fraction,outcome_rate,lift")?;
        for r in &self.lift_rows {
            writeln!(writer, "{},{},{}", r.top_fraction, r.outcome_rate, r.lift)?;
        }
        Ok(())
    }

    /// Whitespace-separated SLA curve for gnuplot, alert rate in percent.
    pub fn write_gnuplot<W: Write>(&self, mut writer: W, label: &str) -> Result<(), EvalError> {
        writeln!(writer, "# {label}: alert_rate_percent sensitivity")?;
        for p in &self.sla_points {
            writeln!(writer, "{:.1} {}", p.alert_rate * 100.0, p.sensitivity)?;
        }
        Ok(())
    }
}
