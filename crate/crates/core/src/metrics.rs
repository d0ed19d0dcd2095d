use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of correct predictions, overall and per true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    pub per_class: BTreeMap<i32, f64>,
    pub counts: BTreeMap<i32, usize>,
}

impl Accuracy {
    /// Classes in `class_set` without samples get no `per_class` entry.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (i32, i32)>) -> Result<Self> {
        let mut hits: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
        for (truth, pred) in pairs {
            let e = hits.entry(truth).or_default();
            e.0 += usize::from(truth == pred);
            e.1 += 1;
        }
        let total: usize = hits.values().map(|v| v.1).sum();
        if total == 0 {
            return Err(Error::EmptyDataset);
        }
        let correct: usize = hits.values().map(|v| v.0).sum();
        Ok(Self {
            overall: correct as f64 / total as f64,
            per_class: hits.iter().map(|(&l, &(c, n))| (l, c as f64 / n as f64)).collect(),
            counts: hits.iter().map(|(&l, &(_, n))| (l, n)).collect(),
        })
    }

    pub fn class(&self, label: i32) -> f64 {
        self.per_class.get(&label).copied().unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_mean_identity() {
        let acc = Accuracy::from_pairs([(1, 1), (1, -1), (1, 1), (-1, -1)]).unwrap();
        assert_eq!(acc.overall, 0.75);
        assert_eq!(acc.class(1), 2.0 / 3.0);
        assert_eq!(acc.class(-1), 1.0);
        let recombined: f64 = acc.per_class.iter().map(|(l, a)| a * acc.counts[l] as f64).sum::<f64>() / 4.0;
        assert!((recombined - acc.overall).abs() < 1e-15);
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(Accuracy::from_pairs([]), Err(Error::EmptyDataset)));
    }
}
