//! Segmentation overlap metrics and box-plot outlier statistics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantile::{percentile_sorted, sorted_copy};
use crate::volume::LabelVolume;

/// Counts and ratios for one label. Ratios are `None` when their
/// denominator is zero (the metric is undefined, not 0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelOverlap {
    pub label: u16,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub dice: Option<f64>,
    pub sensitivity: Option<f64>,
    pub precision: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub labels: Vec<LabelOverlap>,
}

impl OverlapReport {
    pub fn get(&self, label: u16) -> Option<&LabelOverlap> {
        self.labels.iter().find(|l| l.label == label)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One CSV row per label; undefined metrics are empty cells.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.labels {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn overlap(pred: &LabelVolume, reference: &LabelVolume, labels: &[u16]) -> Result<OverlapReport> {
    if pred.dims() != reference.dims() {
        return Err(Error::ShapeMismatch {
            expected: reference.dims().to_vec(),
            found: pred.dims().to_vec(),
        });
    }
    let rows = labels
        .iter()
        .map(|&label| {
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for (&p, &r) in pred.labels().iter().zip(reference.labels()) {
                match (p == label, r == label) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            LabelOverlap {
                label,
                tp,
                fp,
                fn_,
                dice: ratio(2 * tp, 2 * tp + fp + fn_),
                sensitivity: ratio(tp, tp + fn_),
                precision: ratio(tp, tp + fp),
            }
        })
        .collect();
    Ok(OverlapReport { labels: rows })
}

/// Values farther than `1.5 * IQR` below Q1 or above Q3 (strict inequality).
/// Returns the outlier fraction and the outlier indices in input order.
pub fn outlier_fraction(values: &[f64]) -> Result<(f64, Vec<usize>)> {
    if values.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "{} values; the IQR rule needs at least 4",
            values.len()
        )));
    }
    let sorted = sorted_copy(values);
    let q1 = percentile_sorted(&sorted, 25.0);
    let q3 = percentile_sorted(&sorted, 75.0);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let idx: Vec<usize> = values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v < lo || v > hi)
        .map(|(i, _)| i)
        .collect();
    Ok((idx.len() as f64 / values.len() as f64, idx))
}

/// Median and 10th percentile.
pub fn summarize(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::InsufficientData("no values to summarize".into()));
    }
    let sorted = sorted_copy(values);
    Ok((percentile_sorted(&sorted, 50.0), percentile_sorted(&sorted, 10.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lv(labels: Vec<u16>) -> LabelVolume {
        LabelVolume::new([labels.len(), 1, 1], [1.0; 3], labels).unwrap()
    }

    #[test]
    fn identical_segmentations() {
        let a = lv(vec![0, 1, 1, 2, 3, 3, 3]);
        let r = overlap(&a, &a, &[1, 2, 3]).unwrap();
        for l in &r.labels {
            assert_eq!((l.dice, l.sensitivity, l.precision), (Some(1.0), Some(1.0), Some(1.0)));
        }
    }

    #[test]
    fn disjoint_supports() {
        let r = overlap(&lv(vec![1, 1, 0, 0]), &lv(vec![0, 0, 1, 1]), &[1]).unwrap();
        assert_eq!(r.labels[0].dice, Some(0.0));
    }

    #[test]
    fn hand_counted_fixture() {
        // pred has 4 voxels of label 1, ref has 2, they share 2
        let pred = lv(vec![1, 1, 1, 1, 0, 0]);
        let reference = lv(vec![1, 1, 0, 0, 0, 0]);
        let l = overlap(&pred, &reference, &[1]).unwrap().labels[0];
        assert_eq!((l.tp, l.fp, l.fn_), (2, 2, 0));
        assert_eq!(l.dice, Some(4.0 / 6.0));
        assert_eq!(l.sensitivity, Some(1.0));
        assert_eq!(l.precision, Some(0.5));
    }

    #[test]
    fn absent_label_is_undefined() {
        let a = lv(vec![1, 1, 0]);
        let l = overlap(&a, &a, &[7]).unwrap().labels[0];
        assert_eq!((l.dice, l.sensitivity, l.precision), (None, None, None));
    }

    #[test]
    fn shape_mismatch() {
        assert!(matches!(
            overlap(&lv(vec![1, 1]), &lv(vec![1, 1, 1]), &[1]),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn csv_leaves_undefined_cells_empty() {
        let a = lv(vec![1, 1, 0]);
        let r = overlap(&a, &a, &[1, 9]).unwrap();
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "label,tp,fp,fn,dice,sensitivity,precision");
        assert_eq!(lines[1], "1,2,0,0,1.0,1.0,1.0");
        assert_eq!(lines[2], "9,0,0,0,,,");
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert!(json["labels"][1]["dice"].is_null());
    }

    #[test]
    fn outliers_hand_fixture() {
        let (f, idx) = outlier_fraction(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(f, 0.2);
        assert_eq!(idx, vec![4]);
    }

    #[test]
    fn constant_values_have_no_outliers() {
        assert_eq!(outlier_fraction(&[3.0; 10]).unwrap().0, 0.0);
        assert!(matches!(outlier_fraction(&[1.0; 3]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn value_on_the_fence_is_not_an_outlier() {
        // Q1 = 2, Q3 = 4, upper fence 7
        let (f, _) = outlier_fraction(&[1.0, 2.0, 3.0, 4.0, 7.0]).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn symmetric_outliers() {
        let xs = [-50.0, -1.0, -0.5, 0.0, 0.0, 0.5, 1.0, 50.0];
        let (_, idx) = outlier_fraction(&xs).unwrap();
        assert_eq!(idx, vec![0, 7]);
        let neg: Vec<f64> = xs.iter().rev().map(|x| -x).collect();
        assert_eq!(outlier_fraction(&neg).unwrap().1, vec![0, 7]);
    }

    #[test]
    fn summaries() {
        let xs: Vec<f64> = (0..=100).map(f64::from).collect();
        assert_eq!(summarize(&xs).unwrap(), (50.0, 10.0));
        assert_eq!(summarize(&[0.8; 5]).unwrap(), (0.8, 0.8));
        assert_eq!(summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap().0, 2.5);
        assert!(summarize(&[]).is_err());
    }

    proptest! {
        #[test]
        fn dice_symmetry_and_se_pr_swap(
            a in prop::collection::vec(0u16..4, 1..200),
            seed in any::<u64>(),
        ) {
            let b: Vec<u16> = a.iter().enumerate()
                .map(|(i, &x)| if (seed >> (i % 64)) & 1 == 1 { (x + 1) % 4 } else { x })
                .collect();
            let (va, vb) = (lv(a.clone()), lv(b.clone()));
            let ab = overlap(&va, &vb, &[0, 1, 2, 3]).unwrap();
            let ba = overlap(&vb, &va, &[0, 1, 2, 3]).unwrap();
            for (x, y) in ab.labels.iter().zip(&ba.labels) {
                prop_assert_eq!(x.dice, y.dice);
                prop_assert_eq!(x.sensitivity, y.precision);
            }
            // the same permutation applied to both volumes leaves the report unchanged
            let perm: Vec<usize> = (0..a.len()).rev().collect();
            let pa = lv(perm.iter().map(|&i| a[i]).collect());
            let pb = lv(perm.iter().map(|&i| b[i]).collect());
            prop_assert_eq!(overlap(&pa, &pb, &[0, 1, 2, 3]).unwrap(), ab);
        }
    }
}
