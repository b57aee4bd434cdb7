//! Classification metrics: precision, recall, average precision and mAP.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::Matrix;

/// One-vs-rest counts for a single class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Per-class counts from predicted and true labels.
    pub fn per_class(predicted: &[usize], truth: &[usize], classes: usize) -> Result<Vec<Self>> {
        if predicted.len() != truth.len() {
            return Err(Error::contract("prediction and label counts differ"));
        }
        let mut out = vec![Self::default(); classes];
        for (&p, &t) in predicted.iter().zip(truth) {
            if p >= classes || t >= classes {
                return Err(Error::contract(format!("label out of range for {classes} classes")));
            }
            for (c, counts) in out.iter_mut().enumerate() {
                match (p == c, t == c) {
                    (true, true) => counts.tp += 1,
                    (true, false) => counts.fp += 1,
                    (false, true) => counts.fn_ += 1,
                    (false, false) => counts.tn += 1,
                }
            }
        }
        Ok(out)
    }
}

/// `tp / (tp + fp)`.
pub fn precision(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fp == 0 {
        return Err(Error::UndefinedMetric("precision with no predicted positives"));
    }
    Ok(c.tp as f64 / (c.tp + c.fp) as f64)
}

/// `tp / (tp + fn)`.
pub fn recall(c: &ConfusionCounts) -> Result<f64> {
    if c.tp + c.fn_ == 0 {
        return Err(Error::UndefinedMetric("recall with no actual positives"));
    }
    Ok(c.tp as f64 / (c.tp + c.fn_) as f64)
}

/// Sample indices by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// `(recall, precision)` after each rank position, best score first.
pub fn pr_curve(scores: &[f64], positives: &[bool]) -> Result<Vec<(f64, f64)>> {
    if scores.len() != positives.len() {
        return Err(Error::contract("score and label counts differ"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let total = positives.iter().filter(|&&p| p).count();
    if total == 0 {
        return Err(Error::UndefinedMetric("average precision with no positives"));
    }
    let mut tp = 0usize;
    Ok(ranking(scores)
        .into_iter()
        .enumerate()
        .map(|(k, i)| {
            tp += positives[i] as usize;
            (tp as f64 / total as f64, tp as f64 / (k + 1) as f64)
        })
        .collect())
}

/// Area under the monotone-envelope precision-recall curve.
pub fn average_precision(scores: &[f64], positives: &[bool]) -> Result<f64> {
    let curve = pr_curve(scores, positives)?;
    let mut envelope: Vec<f64> = curve.iter().map(|&(_, p)| p).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let mut prev = 0.0;
    let mut ap = 0.0;
    for (&(r, _), &p) in curve.iter().zip(&envelope) {
        ap += (r - prev) * p;
        prev = r;
    }
    Ok(ap)
}

/// Mean of per-class average precisions.
pub fn map(per_class_ap: &[f64]) -> Result<f64> {
    if per_class_ap.is_empty() {
        return Err(Error::UndefinedMetric("mAP over zero classes"));
    }
    Ok(per_class_ap.iter().sum::<f64>() / per_class_ap.len() as f64)
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Per-class and macro-averaged metrics. Undefined entries are `None`
/// and serialize as `null`; the averages are taken over defined entries.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<String>,
    pub precision: Vec<Option<f64>>,
    pub recall: Vec<Option<f64>>,
    pub ap: Vec<Option<f64>>,
    pub macro_precision: Option<f64>,
    pub macro_recall: Option<f64>,
    pub map: Option<f64>,
    pub n: usize,
    pub accuracy: f64,
}

impl MetricsReport {
    /// Builds a report from class probabilities (argmax is the prediction,
    /// the class column is the AP score).
    pub fn from_probabilities(probs: &Matrix, labels: &[usize], classes: &[String]) -> Result<Self> {
        let k = classes.len();
        if probs.rows() != labels.len() || probs.cols() != k {
            return Err(Error::Shape {
                op: "metrics report",
                left: probs.shape(),
                right: (labels.len(), k),
            });
        }
        let predicted = probs.argmax_rows();
        let counts = ConfusionCounts::per_class(&predicted, labels, k)?;
        let precision: Vec<Option<f64>> = counts.iter().map(|c| precision(c).ok()).collect();
        let recall: Vec<Option<f64>> = counts.iter().map(|c| recall(c).ok()).collect();
        let mut ap = Vec::with_capacity(k);
        for c in 0..k {
            let scores: Vec<f64> = (0..probs.rows()).map(|r| probs[(r, c)]).collect();
            let positives: Vec<bool> = labels.iter().map(|&l| l == c).collect();
            ap.push(match average_precision(&scores, &positives) {
                Ok(v) => Some(v),
                Err(Error::UndefinedMetric(_)) => None,
                Err(e) => return Err(e),
            });
        }
        let defined_ap: Vec<f64> = ap.iter().flatten().copied().collect();
        let hits = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(Self {
            classes: classes.to_vec(),
            macro_precision: mean_defined(&precision),
            macro_recall: mean_defined(&recall),
            map: map(&defined_ap).ok(),
            precision,
            recall,
            ap,
            n: labels.len(),
            accuracy: if labels.is_empty() { 0.0 } else { hits as f64 / labels.len() as f64 },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(tp: usize, fp: usize, fn_: usize) -> ConfusionCounts {
        ConfusionCounts { tp, fp, fn_, tn: 0 }
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(precision(&counts(3, 1, 2)).unwrap(), 0.75);
        assert_eq!(recall(&counts(3, 1, 2)).unwrap(), 0.6);
        assert_eq!(precision(&counts(4, 0, 0)).unwrap(), 1.0);
        assert_eq!(precision(&counts(0, 5, 0)).unwrap(), 0.0);
        assert_eq!(recall(&counts(2, 0, 0)).unwrap(), 1.0);
        assert_eq!(recall(&counts(0, 0, 4)).unwrap(), 0.0);
        assert!(matches!(precision(&counts(0, 0, 3)), Err(Error::UndefinedMetric(_))));
        assert!(matches!(recall(&counts(0, 3, 0)), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn ap_examples() {
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        let ap = average_precision(&[0.9, 0.5, 0.1], &[true, false, true]).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&[0.3], &[true]).unwrap(), 1.0);
        assert!(matches!(average_precision(&[0.3, 0.2], &[false, false]), Err(Error::UndefinedMetric(_))));
        assert!(average_precision(&[0.3], &[true, false]).is_err());
    }

    #[test]
    fn ties_follow_index_order() {
        let a = average_precision(&[0.5, 0.5], &[true, false]).unwrap();
        let b = average_precision(&[0.5, 0.5], &[false, true]).unwrap();
        assert_eq!(a, 1.0);
        assert_eq!(b, 0.5);
    }

    #[test]
    fn ap_invariant_under_monotone_transform() {
        let s = [0.1, 0.7, 0.3, 0.9, 0.4];
        let p = [false, true, true, false, true];
        let t: Vec<f64> = s.iter().map(|x: &f64| x.exp() * 3.0 - 1.0).collect();
        assert_eq!(average_precision(&s, &p).unwrap(), average_precision(&t, &p).unwrap());
    }

    #[test]
    fn curve_recall_is_monotone() {
        let curve = pr_curve(&[0.2, 0.9, 0.4, 0.4], &[true, false, true, false]).unwrap();
        assert!(curve.windows(2).all(|w| w[0].0 <= w[1].0));
        assert!(curve.iter().all(|&(r, p)| (0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn map_examples() {
        assert_eq!(map(&[1.0, 0.5]).unwrap(), 0.75);
        assert_eq!(map(&[0.3]).unwrap(), 0.3);
        let x = 0.1 + 0.2;
        assert_eq!(map(&[x, x, x]).unwrap().to_bits(), x.to_bits());
        assert!(map(&[]).is_err());
    }

    #[test]
    fn report_keys_and_nulls() {
        let probs = Matrix::from_rows(&[vec![0.9, 0.1, 0.0], vec![0.2, 0.8, 0.0], vec![0.6, 0.4, 0.0]]).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let r = MetricsReport::from_probabilities(&probs, &[0, 1, 1], &names).unwrap();
        assert_eq!(r.precision, vec![Some(0.5), Some(1.0), None]);
        assert_eq!(r.recall, vec![Some(1.0), Some(0.5), None]);
        assert_eq!(r.ap[2], None);
        assert!((r.map.unwrap() - (r.ap[0].unwrap() + r.ap[1].unwrap()) / 2.0).abs() < 1e-12);
        let json = serde_json::to_value(&r).unwrap();
        for key in ["classes", "precision", "recall", "ap", "macro_precision", "macro_recall", "map", "n"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        assert!(json["precision"][2].is_null());
    }

    #[test]
    fn confusion_counts_cover_every_sample() {
        let c = ConfusionCounts::per_class(&[0, 1, 2, 1], &[0, 2, 2, 1], 3).unwrap();
        assert!(c.iter().all(|x| x.total() == 4));
        assert_eq!(c[2], ConfusionCounts { tp: 1, fp: 0, fn_: 1, tn: 2 });
    }
}
