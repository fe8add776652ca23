use serde::{Deserialize, Serialize};

use crate::datagen::{gt_mask, GtVariant, LabSample};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Positive values divided by the largest positive value, negative values by
/// the magnitude of the most negative one.
pub fn normalize_attribution(map: &Tensor) -> Tensor {
    let max = map.data().iter().fold(0.0f64, |m, &v| m.max(v));
    let min = map.data().iter().fold(0.0f64, |m, &v| m.min(v));
    map.map(|v| {
        if v > 0.0 {
            v / max
        } else if v < 0.0 {
            v / -min
        } else {
            0.0
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub variant: GtVariant,
    pub method: String,
    /// Set when the method cannot express the relevance this variant asks for.
    #[serde(default)]
    pub incapable: bool,
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

/// Soft precision and recall of a normalized map against a {0,1} mask.
/// Only positive entries of the map count for the positive variants and only
/// negative entries (by magnitude) for the negative one.
pub fn soft_scores(normalized: &Tensor, gt: &Tensor, variant: GtVariant) -> Result<(f64, f64)> {
    if normalized.shape() != gt.shape() {
        return Err(Error::Shape(format!(
            "map {:?} and ground truth {:?} differ",
            normalized.shape(),
            gt.shape()
        )));
    }
    let pick = |t: f64| match variant {
        GtVariant::Overall => t.abs(),
        GtVariant::Positive | GtVariant::SmoothedPositive { .. } => t.max(0.0),
        GtVariant::Negative => (-t).max(0.0),
    };
    let (mut hit, mut mass, mut truth) = (0.0, 0.0, 0.0);
    for (&t, &g) in normalized.data().iter().zip(gt.data()) {
        let a = pick(t);
        hit += (a * g).abs();
        mass += a;
        truth += g.abs();
    }
    let p = if mass > 0.0 { hit / mass } else { 0.0 };
    let r = if truth > 0.0 { hit / truth } else { 0.0 };
    Ok((p, r))
}

/// Normalizes `map` and scores it against the sample's mask for `variant`.
pub fn score(map: &Tensor, sample: &LabSample, variant: GtVariant, method: &str, signed: bool) -> Result<ScoreTriple> {
    if variant == GtVariant::Negative && !signed {
        return Ok(ScoreTriple {
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
            variant,
            method: method.to_string(),
            incapable: true,
        });
    }
    let (p, r) = soft_scores(&normalize_attribution(map), &gt_mask(sample, variant), variant)?;
    Ok(ScoreTriple {
        precision: p,
        recall: r,
        f1: f1(p, r),
        variant,
        method: method.to_string(),
        incapable: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessVerdict {
    pub gamma: f64,
    pub f1: f64,
    pub pass: bool,
}

pub fn faithfulness_test(triple: &ScoreTriple, gamma: f64) -> FaithfulnessVerdict {
    FaithfulnessVerdict {
        gamma,
        f1: triple.f1,
        pass: triple.f1 >= gamma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(v: &[f64]) -> Tensor {
        Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_attribution(&t(&[2.0, -4.0, 0.0])).data(), &[1.0, -1.0, 0.0]);
        let n = t(&[1.0, -0.5, 0.25, -1.0]);
        assert_eq!(normalize_attribution(&n), n);
        assert_eq!(normalize_attribution(&t(&[0.0, 0.0])).data(), &[0.0, 0.0]);
        let m = normalize_attribution(&t(&[0.3, 0.7, 0.1]));
        assert_eq!(m.data().iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn soft_score_examples() {
        let (p, r) = soft_scores(&t(&[1.0, 0.5, 0.0]), &t(&[1.0, 1.0, 0.0]), GtVariant::Overall).unwrap();
        assert_eq!((p, r), (1.0, 0.75));
        let g = t(&[1.0, 0.0, 1.0, 0.0]);
        let (p, r) = soft_scores(&g, &g, GtVariant::Overall).unwrap();
        assert_eq!((p, r), (1.0, 1.0));
        let (p, r) = soft_scores(&t(&[1.0; 4]), &g, GtVariant::Overall).unwrap();
        assert_eq!((p, r), (0.5, 1.0));
        let (p, _) = soft_scores(&t(&[0.0; 4]), &g, GtVariant::Overall).unwrap();
        assert_eq!(p, 0.0);
        // negative attributions leave the positive denominator alone
        let (p, _) = soft_scores(&t(&[1.0, -1.0, 0.0, 0.0]), &g, GtVariant::Positive).unwrap();
        assert_eq!(p, 1.0);
        assert!(soft_scores(&t(&[1.0]), &g, GtVariant::Overall).is_err());
    }

    #[test]
    fn verdict_boundary() {
        let mk = |f1| ScoreTriple {
            precision: 0.0,
            recall: 0.0,
            f1,
            variant: GtVariant::Overall,
            method: "m".into(),
            incapable: false,
        };
        assert!(faithfulness_test(&mk(0.51), 0.5).pass);
        assert!(faithfulness_test(&mk(0.5), 0.5).pass);
        assert!(!faithfulness_test(&mk(0.49), 0.5).pass);
    }

    proptest! {
        #[test]
        fn scale_invariant(vals in proptest::collection::vec(0.0f64..10.0, 16), gt in proptest::collection::vec(0u8..2, 16), c in 0.01f64..100.0) {
            let g = Tensor::new(vec![4, 4], gt.iter().map(|&v| v as f64).collect()).unwrap();
            let a = Tensor::new(vec![4, 4], vals.clone()).unwrap();
            let b = a.map(|v| v * c);
            let s1 = soft_scores(&normalize_attribution(&a), &g, GtVariant::Overall).unwrap();
            let s2 = soft_scores(&normalize_attribution(&b), &g, GtVariant::Overall).unwrap();
            prop_assert!((s1.0 - s2.0).abs() < 1e-12 && (s1.1 - s2.1).abs() < 1e-12);
        }

        #[test]
        fn binary_maps_give_set_scores(a in proptest::collection::vec(0u8..2, 25), g in proptest::collection::vec(0u8..2, 25)) {
            let at = Tensor::new(vec![5, 5], a.iter().map(|&v| v as f64).collect()).unwrap();
            let gt = Tensor::new(vec![5, 5], g.iter().map(|&v| v as f64).collect()).unwrap();
            let (p, r) = soft_scores(&normalize_attribution(&at), &gt, GtVariant::Overall).unwrap();
            let tp = a.iter().zip(&g).filter(|(x, y)| **x == 1 && **y == 1).count() as f64;
            let na = a.iter().filter(|&&x| x == 1).count() as f64;
            let ng = g.iter().filter(|&&x| x == 1).count() as f64;
            prop_assert_eq!(p, if na > 0.0 { tp / na } else { 0.0 });
            prop_assert_eq!(r, if ng > 0.0 { tp / ng } else { 0.0 });
        }
    }
}
