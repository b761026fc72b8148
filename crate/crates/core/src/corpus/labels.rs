use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three sentiment classes, in one-hot order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sentiment {
    Positive,
    Neutral,
    Negative,
}

impl Sentiment {
    pub const COUNT: usize = 3;
    pub const ALL: [Sentiment; 3] = [Self::Positive, Self::Neutral, Self::Negative];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL.get(i).copied().ok_or(Error::Index {
            index: i,
            count: Self::COUNT,
        })
    }

    /// Annotation score: positive 1, neutral 0.5, negative 0.
    pub fn score(self) -> f64 {
        match self {
            Self::Positive => 1.0,
            Self::Neutral => 0.5,
            Self::Negative => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Positive => "positive",
            Self::Neutral => "neutral",
            Self::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "positive" | "pos" | "+1" | "1" => Ok(Self::Positive),
            "neutral" | "neu" | "0.5" => Ok(Self::Neutral),
            "negative" | "neg" | "0" => Ok(Self::Negative),
            other => Err(Error::data(format!("unknown label '{other}'"))),
        }
    }
}

impl fmt::Display for Sentiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Aggregate {
    pub label: Sentiment,
    pub mean: f64,
}

/// Averages annotator scores from {1, 0.5, 0}: mean in [0.6, 1] is
/// positive, [0, 0.4] negative, anything between neutral. The comparison is
/// done on the exact rational mean.
pub fn aggregate_labels(scores: &[f64]) -> Result<Aggregate> {
    if scores.is_empty() {
        return Err(Error::data("no annotator scores"));
    }
    let mut halves: u64 = 0;
    for &s in scores {
        halves += match s {
            x if x == 1.0 => 2,
            x if x == 0.5 => 1,
            x if x == 0.0 => 0,
            other => return Err(Error::data(format!("annotator score {other} not in {{1, 0.5, 0}}"))),
        };
    }
    let mean = Ratio::new(halves, 2 * scores.len() as u64);
    let label = if mean >= Ratio::new(3, 5) {
        Sentiment::Positive
    } else if mean <= Ratio::new(2, 5) {
        Sentiment::Negative
    } else {
        Sentiment::Neutral
    };
    Ok(Aggregate {
        label,
        mean: halves as f64 / (2 * scores.len()) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_examples() {
        let a = aggregate_labels(&[1.0, 1.0, 1.0, 0.5, 1.0]).unwrap();
        assert_eq!((a.label, a.mean), (Sentiment::Positive, 0.9));
        let b = aggregate_labels(&[0.0, 0.0, 0.5, 0.0, 0.0]).unwrap();
        assert_eq!((b.label, b.mean), (Sentiment::Negative, 0.1));
        let c = aggregate_labels(&[1.0, 0.0, 0.5, 0.5, 0.5]).unwrap();
        assert_eq!((c.label, c.mean), (Sentiment::Neutral, 0.5));
    }

    #[test]
    fn boundaries_are_inclusive() {
        // 3/5 and 2/5 exactly
        assert_eq!(aggregate_labels(&[1.0, 1.0, 1.0, 0.0, 0.0]).unwrap().label, Sentiment::Positive);
        assert_eq!(aggregate_labels(&[1.0, 1.0, 0.0, 0.0, 0.0]).unwrap().label, Sentiment::Negative);
    }

    #[test]
    fn rejects_bad_scores() {
        assert!(aggregate_labels(&[]).is_err());
        assert!(aggregate_labels(&[1.0, 0.7]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut scores in prop::collection::vec(prop::sample::select(vec![0.0, 0.5, 1.0]), 1..12), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let a = aggregate_labels(&scores).unwrap();
            scores.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregate_labels(&scores).unwrap(), a);
        }
    }
}
