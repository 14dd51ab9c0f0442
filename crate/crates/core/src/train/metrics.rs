use std::fmt::Write as _;

use super::TrainError;

/// Column order of the CSV metric row.
pub const METRIC_HEADER: &str = "acc,prec,recall,f1,auc,spec";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Confusion counts with the rule `predicted = score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Counts, TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::LengthMismatch(scores.len(), labels.len()));
    }
    if scores.is_empty() {
        return Err(TrainError::EmptySplit("no predictions".into()));
    }
    let mut c = Counts::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Exact Mann-Whitney AUC: `P(s+ > s-) + P(s+ = s-) / 2` over all pairs.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64, TrainError> {
    if scores.len() != labels.len() {
        return Err(TrainError::LengthMismatch(scores.len(), labels.len()));
    }
    let mut pairs: Vec<(f64, u8)> = scores.iter().cloned().zip(labels.iter().cloned()).collect();
    let p = pairs.iter().filter(|x| x.1 == 1).count() as u64;
    let n = pairs.len() as u64 - p;
    if p == 0 || n == 0 {
        return Err(TrainError::OneClassOnly);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // twice the Mann-Whitney U, kept integral
    let (mut twice_u, mut neg_below) = (0u64, 0u64);
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            j += 1;
        }
        let pos = pairs[i..j].iter().filter(|x| x.1 == 1).count() as u64;
        let neg = (j - i) as u64 - pos;
        twice_u += pos * (2 * neg_below + neg);
        neg_below += neg;
        i = j;
    }
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub counts: Counts,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub specificity: f64,
    /// Names of metrics whose denominator was zero (reported as 0).
    pub undefined: Vec<&'static str>,
}

fn ratio(num: usize, den: usize, name: &'static str, undefined: &mut Vec<&'static str>) -> f64 {
    if den == 0 {
        undefined.push(name);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Threshold metrics from confusion counts; `auc` is left at 0 and flagged.
pub fn metrics(c: Counts) -> EvalReport {
    let mut undefined = Vec::new();
    let accuracy = ratio(c.tp + c.tn, c.total(), "acc", &mut undefined);
    let precision = ratio(c.tp, c.tp + c.fp, "prec", &mut undefined);
    let recall = ratio(c.tp, c.tp + c.fn_, "recall", &mut undefined);
    let specificity = ratio(c.tn, c.tn + c.fp, "spec", &mut undefined);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        undefined.push("f1");
        0.0
    };
    undefined.push("auc");
    EvalReport {
        counts: c,
        accuracy,
        precision,
        recall,
        f1,
        auc: 0.0,
        specificity,
        undefined,
    }
}

impl EvalReport {
    /// Full report from scores; AUC stays flagged when only one class is present.
    pub fn from_scores(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self, TrainError> {
        let mut r = metrics(confusion(scores, labels, threshold)?);
        if let Ok(auc) = roc_auc(scores, labels) {
            r.auc = auc;
            r.undefined.retain(|&n| n != "auc");
        }
        Ok(r)
    }

    pub fn values(&self) -> [f64; 6] {
        [self.accuracy, self.precision, self.recall, self.f1, self.auc, self.specificity]
    }

    pub fn csv_row(&self) -> String {
        self.values().iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(",")
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        let c = &self.counts;
        let mut s = format!("tp={}\nfp={}\ntn={}\nfn={}\n", c.tp, c.fp, c.tn, c.fn_);
        for (k, v) in METRIC_HEADER.split(',').zip(self.values()) {
            let _ = writeln!(s, "{k}={v:.6}");
        }
        if !self.undefined.is_empty() {
            let _ = writeln!(s, "undefined={}", self.undefined.join(","));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let c = confusion(&[0.9, 0.8, 0.4, 0.3], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (2, 0, 2, 0));
        let c = confusion(&[0.1, 0.2, 0.3], &[1, 0, 0], 0.0).unwrap();
        assert_eq!((c.fp, c.tn), (2, 0));
        let c = confusion(&[0.6, 0.4, 0.7, 0.2], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 1, 1, 1));
        assert!(matches!(confusion(&[0.1], &[1, 0], 0.5), Err(TrainError::LengthMismatch(1, 2))));
    }

    #[test]
    fn metric_examples() {
        let r = metrics(Counts { tp: 8, fp: 2, tn: 9, fn_: 1 });
        assert!((r.accuracy - 0.85).abs() < 1e-12);
        assert!((r.precision - 0.8).abs() < 1e-12);
        assert!((r.recall - 8.0 / 9.0).abs() < 1e-12);
        assert!((r.f1 - 0.842_105_263).abs() < 1e-8);
        assert!((r.specificity - 9.0 / 11.0).abs() < 1e-12);
        let p = metrics(Counts { tp: 10, fp: 0, tn: 10, fn_: 0 });
        assert_eq!([p.accuracy, p.precision, p.recall, p.f1, p.specificity], [1.0; 5]);
        let d = metrics(Counts { tp: 0, fp: 0, tn: 5, fn_: 3 });
        assert_eq!(d.precision, 0.0);
        assert!(d.undefined.contains(&"prec"));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.4, 0.3], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.8, 0.3, 0.4, 0.2], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert_eq!(roc_auc(&[0.5; 6], &[1, 0, 1, 0, 1, 0]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.5, 0.6], &[1, 1]), Err(TrainError::OneClassOnly)));
    }

    #[test]
    fn report_formats() {
        let r = EvalReport::from_scores(&[0.9, 0.2], &[1, 0], 0.5).unwrap();
        assert_eq!(r.csv_row(), "1.0000,1.0000,1.0000,1.0000,1.0000,1.0000");
        assert!(r.undefined.is_empty());
        assert!(r.to_kv().contains("auc=1.000000"));
    }
}
