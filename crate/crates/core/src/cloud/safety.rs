//! Safe/unsafe class sets and the three-way point classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Semantic classes and their split into a safe set and an unsafe set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCatalog {
    names: Vec<String>,
    safe: Vec<bool>,
}

impl ClassCatalog {
    /// `safe_classes` lists the indices of the safe set; every other class
    /// is unsafe.
    pub fn new(names: Vec<String>, safe_classes: &[usize]) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::InvalidParameter(
                "a class catalog needs at least two classes".into(),
            ));
        }
        let mut safe = vec![false; names.len()];
        for &c in safe_classes {
            if c >= names.len() {
                return Err(Error::InvalidParameter(format!(
                    "safe class index {c} out of range"
                )));
            }
            safe[c] = true;
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.chars().any(char::is_whitespace) {
                return Err(Error::InvalidParameter(format!(
                    "class name #{i} must be a non-empty token"
                )));
            }
            if names[..i].contains(n) {
                return Err(Error::InvalidParameter(format!("duplicate class name {n}")));
            }
        }
        Ok(Self { names, safe })
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, class: usize) -> &str {
        &self.names[class]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn is_safe(&self, class: usize) -> bool {
        self.safe[class]
    }

    pub fn safe_set(&self) -> Vec<usize> {
        (0..self.names.len()).filter(|&c| self.safe[c]).collect()
    }

    pub fn unsafe_set(&self) -> Vec<usize> {
        (0..self.names.len()).filter(|&c| !self.safe[c]).collect()
    }
}

/// Thresholds of the safety classification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    pub theta_s: f64,
    pub theta_u: f64,
    pub w_sigma: f64,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            theta_s: 0.9,
            theta_u: 0.3,
            w_sigma: 3.0,
        }
    }
}

impl SafetyParams {
    pub fn new(theta_s: f64, theta_u: f64, w_sigma: f64) -> Result<Self> {
        let p = Self {
            theta_s,
            theta_u,
            w_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta_s > 0.0 && self.theta_s <= 1.0) {
            return Err(Error::InvalidParameter("theta_s must lie in (0, 1]".into()));
        }
        if !(self.theta_u > 0.0 && self.theta_u <= 1.0) {
            return Err(Error::InvalidParameter("theta_u must lie in (0, 1]".into()));
        }
        if !(self.w_sigma >= 0.0 && self.w_sigma.is_finite()) {
            return Err(Error::InvalidParameter("w_sigma must be >= 0".into()));
        }
        if 1.0 - self.theta_s >= self.theta_u {
            return Err(Error::InvalidParameter(format!(
                "safety thresholds violate 1 - theta_s < theta_u (theta_s={}, theta_u={})",
                self.theta_s, self.theta_u
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SafetyLabel {
    Safe,
    Unsafe,
    Unclear,
}

/// Aggregated safe probability, unsafe probability and the uncertainty of
/// the less uncertain of the two groups.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SafetyAggregate {
    pub p_safe: f64,
    pub p_unsafe: f64,
    pub sigma: f64,
}

pub fn aggregate_safety(probs: &[f64], uncert: &[f64], catalog: &ClassCatalog) -> SafetyAggregate {
    let mut p_safe = 0.0;
    let mut p_unsafe = 0.0;
    let mut var_safe = 0.0;
    let mut var_unsafe = 0.0;
    for c in 0..catalog.num_classes() {
        if catalog.is_safe(c) {
            p_safe += probs[c];
            var_safe += uncert[c] * uncert[c];
        } else {
            p_unsafe += probs[c];
            var_unsafe += uncert[c] * uncert[c];
        }
    }
    SafetyAggregate {
        p_safe,
        p_unsafe,
        sigma: var_safe.sqrt().min(var_unsafe.sqrt()),
    }
}

pub fn classify(agg: &SafetyAggregate, params: &SafetyParams) -> SafetyLabel {
    let safe = agg.p_safe - params.w_sigma * agg.sigma >= params.theta_s;
    let unsafe_ = agg.p_unsafe - params.w_sigma * agg.sigma >= params.theta_u;
    debug_assert!(
        !(safe && unsafe_),
        "safe and unsafe margins both met: {agg:?} under {params:?}"
    );
    if safe {
        SafetyLabel::Safe
    } else if unsafe_ {
        SafetyLabel::Unsafe
    } else {
        SafetyLabel::Unclear
    }
}

pub fn classify_point(
    probs: &[f64],
    uncert: &[f64],
    catalog: &ClassCatalog,
    params: &SafetyParams,
) -> SafetyLabel {
    classify(&aggregate_safety(probs, uncert, catalog), params)
}

/// Per-point labels of a cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetyPartition {
    pub labels: Vec<SafetyLabel>,
}

impl SafetyPartition {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> SafetyLabel {
        self.labels[i]
    }

    pub fn indices(&self, label: SafetyLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, label: SafetyLabel) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog3() -> ClassCatalog {
        ClassCatalog::new(vec!["a".into(), "b".into(), "c".into()], &[0, 1]).unwrap()
    }

    #[test]
    fn catalog_validation() {
        assert!(ClassCatalog::new(vec!["a".into()], &[0]).is_err());
        assert!(ClassCatalog::new(vec!["a".into(), "a".into()], &[0]).is_err());
        assert!(ClassCatalog::new(vec!["a".into(), "b".into()], &[2]).is_err());
        let c = catalog3();
        assert_eq!(c.safe_set(), vec![0, 1]);
        assert_eq!(c.unsafe_set(), vec![2]);
    }

    #[test]
    fn one_hot_safe_point() {
        let agg = aggregate_safety(&[1.0, 0.0, 0.0], &[0.0; 3], &catalog3());
        assert_eq!((agg.p_safe, agg.p_unsafe, agg.sigma), (1.0, 0.0, 0.0));
    }

    #[test]
    fn sigma_takes_the_smaller_group() {
        let agg = aggregate_safety(&[0.2, 0.3, 0.5], &[0.3, 0.4, 0.1], &catalog3());
        assert_close!(agg.sigma, 0.1, 1e-15);
        assert_close!(agg.p_safe + agg.p_unsafe, 1.0, 1e-12);
    }

    #[test]
    fn uniform_four_class_point() {
        let cat = ClassCatalog::new(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &[0, 1],
        )
        .unwrap();
        let agg = aggregate_safety(&[0.25; 4], &[0.5; 4], &cat);
        assert_close!(agg.p_safe, 0.5, 1e-15);
        assert_close!(agg.sigma, 0.5f64.sqrt(), 1e-15);
        assert_eq!(
            classify(&agg, &SafetyParams::default()),
            SafetyLabel::Unclear
        );
    }

    #[test]
    fn threshold_examples() {
        let params = SafetyParams::default();
        let safe = SafetyAggregate {
            p_safe: 0.95,
            p_unsafe: 0.05,
            sigma: 0.01,
        };
        assert_eq!(classify(&safe, &params), SafetyLabel::Safe);
        let unsafe_ = SafetyAggregate {
            p_safe: 0.0,
            p_unsafe: 1.0,
            sigma: 0.0,
        };
        assert_eq!(classify(&unsafe_, &params), SafetyLabel::Unsafe);
        let unclear = SafetyAggregate {
            p_safe: 0.6,
            p_unsafe: 0.4,
            sigma: 0.2,
        };
        assert_eq!(classify(&unclear, &params), SafetyLabel::Unclear);
    }

    #[test]
    fn params_constraint() {
        assert!(SafetyParams::new(0.9, 0.3, 3.0).is_ok());
        let err = SafetyParams::new(0.9, 0.05, 3.0).unwrap_err();
        assert!(err.to_string().contains("1 - theta_s < theta_u"));
        assert!(SafetyParams::new(0.9, 0.09, 3.0).is_err());
        assert!(SafetyParams::new(0.0, 0.5, 3.0).is_err());
        assert!(SafetyParams::new(0.9, 0.3, -1.0).is_err());
    }
}
