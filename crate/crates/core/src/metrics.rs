//! Overlap metrics and relative-improvement arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{BinaryPlane, ClassId, MaskSet};

/// Intersection over union; `None` when both planes are empty.
pub fn iou(pred: &BinaryPlane, truth: &BinaryPlane) -> Result<Option<f64>> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", truth.width(), truth.height()),
            actual: format!("{}x{}", pred.width(), pred.height()),
        });
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.bits().iter().zip(truth.bits()) {
        inter += usize::from(p && t);
        union += usize::from(p || t);
    }
    Ok((union > 0).then(|| inter as f64 / union as f64))
}

/// Mean IoU of one class over the images where it was defined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassIoU {
    pub class: ClassId,
    /// `None` when no image had a defined IoU for this class.
    pub iou: Option<f64>,
    /// Number of images contributing to `iou`.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanIoU {
    pub per_class: Vec<ClassIoU>,
    pub mean: f64,
}

impl MeanIoU {
    /// Averages the per-class means of classes with non-zero support.
    pub fn from_classes(per_class: Vec<ClassIoU>) -> Result<Self> {
        let defined: Vec<f64> = per_class.iter().filter(|c| c.support > 0).filter_map(|c| c.iou).collect();
        if defined.is_empty() {
            return Err(Error::EmptyEvaluation);
        }
        let mean = defined.iter().sum::<f64>() / defined.len() as f64;
        Ok(Self { per_class, mean })
    }

    pub fn class(&self, class: ClassId) -> Option<&ClassIoU> {
        self.per_class.iter().find(|c| c.class == class)
    }
}

/// Macro average: per-image IoUs averaged per class (undefined pairs left
/// out of the support), then per-class means averaged.
pub fn mean_iou(predictions: &[MaskSet], truths: &[MaskSet], classes: &[ClassId]) -> Result<MeanIoU> {
    if predictions.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} predictions", truths.len()),
            actual: predictions.len().to_string(),
        });
    }
    let mut per_class = Vec::with_capacity(classes.len());
    for &class in classes {
        let mut sum = 0.0;
        let mut support = 0;
        for (p, t) in predictions.iter().zip(truths) {
            if let Some(v) = iou(p.plane(class), t.plane(class))? {
                sum += v;
                support += 1;
            }
        }
        per_class.push(ClassIoU { class, iou: (support > 0).then(|| sum / support as f64), support });
    }
    MeanIoU::from_classes(per_class)
}

/// `(treatment - baseline) / baseline * 100`.
pub fn improvement_pct(baseline: f64, treatment: f64) -> Result<f64> {
    if !(baseline > 0.0) {
        return Err(Error::ZeroBaseline(baseline));
    }
    Ok((treatment - baseline) / baseline * 100.0)
}

/// Arithmetic mean of [`improvement_pct`] over `(baseline, treatment)` pairs.
pub fn mean_improvement(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidParameter("no pairs to average".into()));
    }
    let total = pairs.iter().map(|&(b, t)| improvement_pct(b, t)).sum::<Result<f64>>()?;
    Ok(total / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plane(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> BinaryPlane {
        BinaryPlane::from_fn(w, h, f)
    }

    #[test]
    fn iou_examples() {
        let a = plane(6, 6, |x, y| x < 3 && y > 1);
        assert_eq!(iou(&a, &a).unwrap(), Some(1.0));
        let b = plane(6, 6, |x, _| x == 5);
        assert_eq!(iou(&a, &b).unwrap(), Some(0.0));
        let left = plane(10, 10, |x, _| x < 5);
        let all = plane(10, 10, |_, _| true);
        assert_eq!(iou(&left, &all).unwrap(), Some(0.5));
        let empty = BinaryPlane::empty(3, 3);
        assert_eq!(iou(&empty, &empty).unwrap(), None);
        assert!(iou(&empty, &BinaryPlane::empty(3, 4)).is_err());
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let mut m = MaskSet::empty(8, 8);
        for (k, c) in ClassId::ALL.into_iter().enumerate() {
            m.plane_mut(c).set(k, k, true);
        }
        let r = mean_iou(&[m.clone()], &[m], &ClassId::ALL).unwrap();
        assert_eq!(r.mean, 1.0);
        assert!(r.per_class.iter().all(|c| c.iou == Some(1.0) && c.support == 1));
    }

    #[test]
    fn overall_mean_of_class_means() {
        let per_class = [(ClassId::Bend, 0.91), (ClassId::Dent, 0.81), (ClassId::Scratch, 0.50)]
            .map(|(class, v)| ClassIoU { class, iou: Some(v), support: 55 })
            .to_vec();
        let m = MeanIoU::from_classes(per_class).unwrap();
        assert!((m.mean - 0.74).abs() < 1e-12);
    }

    #[test]
    fn absent_class_excluded_from_support() {
        let mut t1 = MaskSet::empty(4, 4);
        t1.plane_mut(ClassId::WindowFrame).set(0, 0, true);
        let p1 = t1.clone();
        let mut t2 = MaskSet::empty(4, 4);
        t2.plane_mut(ClassId::Dent).set(1, 1, true);
        let mut p2 = MaskSet::empty(4, 4);
        p2.plane_mut(ClassId::Dent).set(1, 1, true);
        p2.plane_mut(ClassId::Dent).set(2, 1, true);
        let r = mean_iou(&[p1, p2], &[t1, t2], &[ClassId::Dent, ClassId::WindowFrame]).unwrap();
        let dent = r.class(ClassId::Dent).unwrap();
        assert_eq!(dent.support, 1);
        assert_eq!(dent.iou, Some(0.5));
        assert!((r.mean - 0.75).abs() < 1e-12);
    }

    #[test]
    fn all_undefined_is_empty_evaluation() {
        let e = MaskSet::empty(3, 3);
        assert!(matches!(mean_iou(&[e.clone()], &[e], &ClassId::ALL), Err(Error::EmptyEvaluation)));
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement_pct(0.80, 0.91).unwrap() - 13.75).abs() < 1e-9);
        assert_eq!(format!("{:.2}", improvement_pct(0.76, 0.81).unwrap()), "6.58");
        assert_eq!(improvement_pct(0.3, 0.3).unwrap(), 0.0);
        assert!(matches!(improvement_pct(0.0, 0.5), Err(Error::ZeroBaseline(_))));
        assert!(mean_improvement(&[(0.5, 0.6), (0.5, 0.4)]).unwrap().abs() < 1e-12);
        assert_eq!(mean_improvement(&[(0.4, 0.5)]).unwrap(), improvement_pct(0.4, 0.5).unwrap());
        assert!(mean_improvement(&[(0.4, 0.5), (-1.0, 0.2)]).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (BinaryPlane, BinaryPlane)> {
        (1usize..=12, 1usize..=12).prop_flat_map(|(w, h)| {
            (proptest::collection::vec(any::<bool>(), w * h), proptest::collection::vec(any::<bool>(), w * h))
                .prop_map(move |(a, b)| (BinaryPlane::from_bits(w, h, a).unwrap(), BinaryPlane::from_bits(w, h, b).unwrap()))
        })
    }

    fn flipped(p: &BinaryPlane) -> BinaryPlane {
        BinaryPlane::from_fn(p.width(), p.height(), |x, y| p.get(p.width() - 1 - x, p.height() - 1 - y))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_flip_invariant((a, b) in arb_pair()) {
            let ab = iou(&a, &b).unwrap();
            prop_assert_eq!(ab, iou(&b, &a).unwrap());
            prop_assert_eq!(ab, iou(&flipped(&a), &flipped(&b)).unwrap());
        }

        #[test]
        fn improvement_scale_invariant(b in 0.01f64..1.0, t in 0.0f64..1.0, k in 0.1f64..10.0) {
            let base = improvement_pct(b, t).unwrap();
            let scaled = improvement_pct(k * b, k * t).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * (1.0 + base.abs()));
        }
    }
}
