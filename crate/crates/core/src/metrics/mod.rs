//! Equal error rate, sample-weighted F1, confusion matrices and reports.

mod report;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use report::{
    build_report, render_confusion_csv, render_text, DevMetrics, EerBlock, EerSource, EvalReport, ReportInputs,
    SplitReport, TaskBlock, RANDOM_BASELINE_ASSUMPTION, REPORT_SCHEMA_VERSION,
};

/// Equal error rate in percent and the operating threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
}

struct SweepPoint {
    threshold: f64,
    far: f64,
    frr: f64,
}

/// Threshold sweep over `-∞`, midpoints of consecutive distinct scores and
/// `+∞`, in increasing threshold order.
fn sweep(scores: &[f64], is_bonafide: &[bool]) -> Result<Vec<SweepPoint>> {
    if scores.len() != is_bonafide.len() {
        return Err(Error::config("scores and labels differ in length"));
    }
    let n_bona = is_bonafide.iter().filter(|&&b| b).count();
    let n_spoof = scores.len() - n_bona;
    if n_bona == 0 || n_spoof == 0 {
        return Err(Error::DegenerateLabels);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::config("scores must be finite"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // At threshold t, everything with score < t is rejected.
    let mut points = Vec::with_capacity(scores.len() + 1);
    let (mut bona_below, mut spoof_below) = (0usize, 0usize);
    let point = |t: f64, bb: usize, sb: usize| SweepPoint {
        threshold: t,
        far: (n_spoof - sb) as f64 / n_spoof as f64,
        frr: bb as f64 / n_bona as f64,
    };
    points.push(point(f64::NEG_INFINITY, 0, 0));
    let mut i = 0;
    while i < order.len() {
        let v = scores[order[i]];
        while i < order.len() && scores[order[i]] == v {
            if is_bonafide[order[i]] {
                bona_below += 1;
            } else {
                spoof_below += 1;
            }
            i += 1;
        }
        let t = if i < order.len() {
            0.5 * (v + scores[order[i]])
        } else {
            f64::INFINITY
        };
        points.push(point(t, bona_below, spoof_below));
    }
    Ok(points)
}

/// Interpolates the FAR = FRR crossing between sweep points `a` and `b`,
/// which bracket the sign change of FAR − FRR.
fn interpolate(a: &SweepPoint, b: &SweepPoint, scores: &[f64]) -> Eer {
    let da = a.far - a.frr;
    let db = b.far - b.frr;
    let w = if da == db { 0.0 } else { da / (da - db) };
    let eer = a.far + w * (b.far - a.far);
    let threshold = match (a.threshold.is_finite(), b.threshold.is_finite()) {
        (true, true) => a.threshold + w * (b.threshold - a.threshold),
        (true, false) => a.threshold,
        (false, true) => b.threshold,
        // All scores equal.
        (false, false) => scores[0],
    };
    Eer {
        eer: 100.0 * eer,
        threshold,
    }
}

/// Equal error rate of bona fide-likelihood `scores`.
///
/// FAR(t) is the fraction of spoof scores `>= t` and FRR(t) the fraction of
/// bona fide scores `< t`. The EER is read off by linear interpolation between
/// the two sweep points that bracket the sign change of FAR − FRR.
pub fn compute_eer(scores: &[f64], is_bonafide: &[bool]) -> Result<Eer> {
    let points = sweep(scores, is_bonafide)?;
    // FAR − FRR is +1 at -∞, -1 at +∞ and non-increasing in between.
    let k = points
        .iter()
        .position(|p| p.far - p.frr <= 0.0)
        .expect("sweep ends with FAR - FRR = -1");
    let p = &points[k];
    if p.far == p.frr {
        return Ok(interpolate(p, p, scores));
    }
    Ok(interpolate(&points[k - 1], p, scores))
}

/// Per-class counts and rates; rates are fractions in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn check_labels(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<()> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    if preds.len() != labels.len() {
        return Err(Error::config("predictions and labels differ in length"));
    }
    if preds.iter().chain(labels).any(|&c| c >= n_classes) {
        return Err(Error::config(format!("class index out of range for {n_classes} classes")));
    }
    Ok(())
}

/// `matrix[reference][predicted]` counts.
pub fn confusion(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Vec<Vec<u64>>> {
    check_labels(preds, labels, n_classes)?;
    let mut m = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &l) in preds.iter().zip(labels) {
        m[l][p] += 1;
    }
    Ok(m)
}

/// Precision, recall and F1 per class, derived from a confusion matrix.
/// F1 is 0 when precision + recall is 0.
pub fn class_stats(matrix: &[Vec<u64>]) -> Vec<ClassStats> {
    let n = matrix.len();
    (0..n)
        .map(|c| {
            let tp = matrix[c][c] as f64;
            let support: u64 = matrix[c].iter().sum();
            let predicted: u64 = matrix.iter().map(|row| row[c]).sum();
            let ratio = |num: f64, den: u64| if den == 0 { 0.0 } else { num / den as f64 };
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassStats {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

/// Support-weighted mean of per-class F1, in percent.
pub fn weighted_f1(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<f64> {
    let m = confusion(preds, labels, n_classes)?;
    Ok(weighted_from_stats(&class_stats(&m)))
}

pub(crate) fn weighted_from_stats(stats: &[ClassStats]) -> f64 {
    let total = stats.iter().map(|s| s.support).sum::<u64>() as f64;
    if total == 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for s in stats {
        acc += s.support as f64 / total * s.f1;
    }
    100.0 * acc
}

/// Expected weighted F1 (percent) of guessing uniformly at random among
/// `support.len()` classes, for the given reference-class supports.
///
/// A class with prior `p` has expected precision `p` and recall `1/n`.
pub fn random_guess_f1(support: &[u64]) -> f64 {
    let total: u64 = support.iter().sum();
    if total == 0 || support.is_empty() {
        return 0.0;
    }
    let q = 1.0 / support.len() as f64;
    100.0
        * support
            .iter()
            .map(|&s| {
                let p = s as f64 / total as f64;
                if p == 0.0 {
                    0.0
                } else {
                    p * 2.0 * p * q / (p + q)
                }
            })
            .sum::<f64>()
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn eer_examples() {
        let e = compute_eer(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap();
        assert_eq!(e.eer, 0.0);
        assert!(e.threshold > 0.2 && e.threshold < 0.8, "{e:?}");
        let same = compute_eer(&[0.1, 0.5, 0.9, 0.1, 0.5, 0.9], &[true, true, true, false, false, false]).unwrap();
        assert!((same.eer - 50.0).abs() < 1e-12);
        let flat = compute_eer(&[0.4; 4], &[true, false, true, false]).unwrap();
        assert!((flat.eer - 50.0).abs() < 1e-12);
        assert_eq!(flat.threshold, 0.4);
        let inverted = compute_eer(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).unwrap();
        assert_eq!(inverted.eer, 100.0);
        assert!(matches!(compute_eer(&[0.1, 0.2], &[true, true]), Err(Error::DegenerateLabels)));
    }

    #[test]
    fn eer_matches_oracle_on_random_sets() {
        let mut rng = crate::seed::rng(99);
        for _ in 0..300 {
            let n = rng.random_range(2..60);
            let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            labels[0] = true;
            labels[1] = false;
            // Coarse grid so ties are common.
            let scores: Vec<f64> = labels
                .iter()
                .map(|&b| (rng.random_range(0..20) as f64 + if b { 4.0 } else { 0.0 }) / 24.0)
                .collect();
            let fast = compute_eer(&scores, &labels).unwrap();
            let slow = oracle::eer(&scores, &labels);
            assert!((fast.eer - slow.eer).abs() < 1e-9, "{fast:?} vs {slow:?}");
            assert!((fast.threshold - slow.threshold).abs() < 1e-9, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn f1_examples() {
        let labels = [0, 1, 2, 3, 0, 1, 2, 3];
        assert_eq!(weighted_f1(&labels, &labels, 4).unwrap(), 100.0);
        let all_zero = [0; 8];
        assert!((weighted_f1(&all_zero, &labels, 4).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(weighted_f1(&[], &[], 4), Err(Error::EmptyInput)));
        assert!(weighted_f1(&[4], &[0], 4).is_err());
    }

    #[test]
    fn confusion_structure() {
        let labels = [0, 0, 1, 2, 2, 2];
        let m = confusion(&labels, &labels, 3).unwrap();
        assert_eq!(m, vec![vec![2, 0, 0], vec![0, 1, 0], vec![0, 0, 3]]);
        let preds = [1, 0, 1, 0, 2, 1];
        let m = confusion(&preds, &labels, 3).unwrap();
        assert_eq!(m.iter().flatten().sum::<u64>(), 6);
        let rows: Vec<u64> = m.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, [2, 1, 3]);
        assert_eq!(m[2], [1, 1, 1]);
    }

    #[test]
    fn random_baseline_matches_simulation() {
        let support = [500u64, 100, 250, 150];
        let labels: Vec<usize> = support
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n as usize))
            .collect();
        let mut rng = crate::seed::rng(5);
        let trials = 40;
        let mean: f64 = (0..trials)
            .map(|_| {
                let preds: Vec<usize> = labels.iter().map(|_| rng.random_range(0..4)).collect();
                weighted_f1(&preds, &labels, 4).unwrap()
            })
            .sum::<f64>()
            / trials as f64;
        let analytic = random_guess_f1(&support);
        assert!((mean - analytic).abs() < 1.0, "{mean} vs {analytic}");
        // Uniform priors: every class has F1 = 1/n.
        assert!((random_guess_f1(&[10, 10, 10, 10]) - 25.0).abs() < 1e-12);
    }

    fn labelled_scores() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
        proptest::collection::vec((-5.0f64..5.0, any::<bool>()), 2..80).prop_map(|mut v| {
            v[0].1 = true;
            v[1].1 = false;
            v.into_iter().unzip()
        })
    }

    proptest! {
        #[test]
        fn eer_equals_oracle((scores, labels) in labelled_scores()) {
            let fast = compute_eer(&scores, &labels).unwrap();
            let slow = oracle::eer(&scores, &labels);
            prop_assert!((fast.eer - slow.eer).abs() < 1e-9);
            prop_assert!((0.0..=100.0).contains(&fast.eer));
        }

        #[test]
        fn eer_invariant_under_increasing_map((scores, labels) in labelled_scores()) {
            let base = compute_eer(&scores, &labels).unwrap().eer;
            let mapped: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-s).exp())).collect();
            prop_assert!((compute_eer(&mapped, &labels).unwrap().eer - base).abs() < 1e-9);
        }

        #[test]
        fn eer_symmetric_under_negation_and_role_swap((scores, labels) in labelled_scores()) {
            // Negated scores with swapped labels describe the same detector.
            let base = compute_eer(&scores, &labels).unwrap().eer;
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let swapped: Vec<bool> = labels.iter().map(|b| !b).collect();
            prop_assert!((compute_eer(&neg, &swapped).unwrap().eer - base).abs() < 1e-9);
        }

        #[test]
        fn f1_equals_oracle_and_is_permutation_invariant(
            pairs in proptest::collection::vec((0usize..4, 0usize..4), 1..200),
            rot in 0usize..200,
        ) {
            let (preds, labels): (Vec<usize>, Vec<usize>) = pairs.iter().cloned().unzip();
            let f = weighted_f1(&preds, &labels, 4).unwrap();
            prop_assert_eq!(f, oracle::weighted_f1(&preds, &labels, 4));
            prop_assert!((0.0..=100.0).contains(&f));
            let mut rotated = pairs.clone();
            rotated.rotate_left(rot % pairs.len());
            let (rp, rl): (Vec<usize>, Vec<usize>) = rotated.into_iter().unzip();
            prop_assert!((weighted_f1(&rp, &rl, 4).unwrap() - f).abs() < 1e-9);
            let m = confusion(&preds, &labels, 4).unwrap();
            prop_assert_eq!(m.iter().flatten().sum::<u64>(), preds.len() as u64);
        }
    }
}
