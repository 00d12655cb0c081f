use serde::Serialize;

use crate::error::{Error, Result};

/// Expected precision of random picks: `(c − 1) / (n − 1)`, since the query itself is excluded.
/// It does not depend on how many items are picked.
pub fn random_baseline(cohort_size: usize, universe: usize) -> Result<f64> {
    if cohort_size == 0 || universe < 2 || cohort_size > universe {
        return Err(Error::InvalidInput(format!(
            "random baseline needs 1 <= cohort size <= universe and universe >= 2, got {cohort_size} of {universe}"
        )));
    }
    Ok((cohort_size - 1) as f64 / (universe - 1) as f64)
}

fn check(scores: &[f64], labels: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidInput("scores must be finite".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    Ok((pos, neg))
}

/// Rank-based area under the ROC curve; tied scores share their mean rank.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j+1 share their midpoint.
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * order[i..=j].iter().filter(|&&o| labels[o]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos as f64 * neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn tpr(&self) -> f64 {
        self.tp as f64 / (self.tp + self.fn_) as f64
    }

    pub fn fpr(&self) -> f64 {
        self.fp as f64 / (self.fp + self.tn) as f64
    }
}

/// Counts with the rule `score >= threshold` ⇒ positive.
pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64) -> Confusion {
    let mut c = Confusion {
        tp: 0,
        fp: 0,
        tn: 0,
        fn_: 0,
    };
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Youden {
    pub threshold: f64,
    /// `TPR − FPR` at `threshold`.
    pub j: f64,
    pub confusion: Confusion,
}

/// Threshold among the observed scores that maximizes `TPR − FPR`; the smallest wins ties.
pub fn youden_threshold(scores: &[f64], labels: &[bool]) -> Result<Youden> {
    let (pos, neg) = check(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    // Walk thresholds from high to low; at each distinct score everything >= it is positive.
    // J·P·N = tp·N − fp·P compares exactly in integers.
    let (mut tp, mut fp) = (0i128, 0i128);
    let mut best: Option<(i128, f64)> = None;
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let key = tp * neg as i128 - fp * pos as i128;
        // Descending walk: ties keep moving to the smaller threshold.
        if best.is_none_or(|(b, _)| key >= b) {
            best = Some((key, t));
        }
    }
    let (_, threshold) = best.expect("non-empty scores");
    let confusion = confusion_at(scores, labels, threshold);
    Ok(Youden {
        threshold,
        j: confusion.tpr() - confusion.fpr(),
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const S: [f64; 4] = [0.2, 0.3, 0.6, 0.9];
    const L: [bool; 4] = [false, false, true, true];

    #[test]
    fn separable_scores() {
        assert_eq!(roc_auc(&S, &L).unwrap(), 1.0);
        let inv: Vec<bool> = L.iter().map(|l| !l).collect();
        assert_eq!(roc_auc(&S, &inv).unwrap(), 0.0);
        let y = youden_threshold(&S, &L).unwrap();
        assert_eq!((y.threshold, y.j), (0.6, 1.0));
    }

    #[test]
    fn constant_scores() {
        let s = [0.4; 4];
        assert_eq!(roc_auc(&s, &L).unwrap(), 0.5);
        let y = youden_threshold(&s, &L).unwrap();
        assert_eq!((y.threshold, y.j), (0.4, 0.0));
    }

    #[test]
    fn single_class_is_an_error() {
        assert!(matches!(roc_auc(&S, &[true; 4]), Err(Error::SingleClass)));
        assert!(matches!(
            youden_threshold(&S, &[false; 4]),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn baseline() {
        assert_eq!(random_baseline(2, 3).unwrap(), 0.5);
        assert_eq!(random_baseline(7, 7).unwrap(), 1.0);
        assert!(random_baseline(0, 3).is_err());
        assert!(random_baseline(1, 1).is_err());
        let hypertension = random_baseline(3244, 636_000).unwrap();
        assert!((hypertension - 0.0051).abs() < 0.0001);
    }
}
