//! Unit-interval scalars and candidate distributions.

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{name_key, GraphError};

/// Tolerance used for every "sums to one" check.
pub const SUM_TOLERANCE: f64 = 1e-6;

macro_rules! unit_interval {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
        #[serde(try_from = "f64", into = "f64")]
        pub struct $name(f64);

        impl $name {
            pub const ZERO: Self = Self(0.0);
            pub const ONE: Self = Self(1.0);

            pub fn new(value: f64) -> Result<Self, GraphError> {
                if (0.0..=1.0).contains(&value) {
                    Ok(Self(value))
                } else {
                    Err(GraphError::OutOfRange { value })
                }
            }

            /// Clamps into `[0, 1]`; the flag reports whether clamping changed the value.
            /// NaN maps to zero.
            pub fn clamped(value: f64) -> (Self, bool) {
                if value.is_nan() {
                    return (Self(0.0), true);
                }
                let c = value.clamp(0.0, 1.0);
                (Self(c), c != value)
            }

            pub fn value(self) -> f64 {
                self.0
            }
        }

        impl TryFrom<f64> for $name {
            type Error = GraphError;
            fn try_from(value: f64) -> Result<Self, Self::Error> {
                Self::new(value)
            }
        }

        impl From<$name> for f64 {
            fn from(v: $name) -> f64 {
                v.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

unit_interval!(
    /// Likelihood of an entity or candidate value appearing in the image.
    Probability
);
unit_interval!(
    /// How much asking about an item would matter for the image.
    ImportanceScore
);

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: String,
    pub prob: Probability,
}

/// Ordered list of candidate values with probabilities.
///
/// Order is meaningful: parsers list the most likely value first and argmax
/// ties resolve to the earlier candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateDistribution {
    candidates: Vec<Candidate>,
}

impl CandidateDistribution {
    /// Builds a distribution that already satisfies every invariant.
    pub fn new<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self, GraphError> {
        let dist = Self::from_raw(pairs)?;
        dist.check()?;
        Ok(dist)
    }

    /// Builds from non-negative weights and rescales them to sum to one.
    pub fn from_weights<S: Into<String>>(
        pairs: impl IntoIterator<Item = (S, f64)>,
    ) -> Result<Self, GraphError> {
        let mut candidates = Vec::new();
        for (label, w) in pairs {
            if !w.is_finite() || w < 0.0 {
                return Err(GraphError::InvalidWeight { value: w });
            }
            candidates.push((label.into(), w));
        }
        let total: f64 = candidates.iter().map(|(_, w)| w).sum();
        if candidates.is_empty() {
            return Err(GraphError::EmptyDistribution);
        }
        if total <= 0.0 {
            return Err(GraphError::AllZero);
        }
        let dist = Self {
            candidates: candidates
                .into_iter()
                .map(|(label, w)| Candidate { label, prob: Probability((w / total).min(1.0)) })
                .collect(),
        };
        dist.check_labels()?;
        Ok(dist)
    }

    /// Builds without checking the sum, so that `validate` and `normalize`
    /// can see raw parser output. Probabilities must still lie in `[0, 1]`.
    pub fn from_raw<S: Into<String>>(pairs: impl IntoIterator<Item = (S, f64)>) -> Result<Self, GraphError> {
        let candidates = pairs
            .into_iter()
            .map(|(label, p)| Ok(Candidate { label: label.into(), prob: Probability::new(p)? }))
            .collect::<Result<Vec<_>, GraphError>>()?;
        Ok(Self { candidates })
    }

    pub fn point_mass(label: impl Into<String>) -> Self {
        Self { candidates: vec![Candidate { label: label.into(), prob: Probability::ONE }] }
    }

    pub fn uniform<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, GraphError> {
        Self::from_weights(labels.into_iter().map(|l| (l, 1.0)))
    }

    /// Rescales probabilities to sum to one, preserving order.
    pub fn normalize(&self) -> Result<Self, GraphError> {
        Self::from_weights(self.candidates.iter().map(|c| (c.label.clone(), c.prob.value())))
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.label.as_str())
    }

    pub fn sum(&self) -> f64 {
        self.candidates.iter().map(|c| c.prob.value()).sum()
    }

    /// Looks a label up case-insensitively after trimming.
    pub fn find(&self, label: &str) -> Option<&Candidate> {
        let key = name_key(label);
        self.candidates.iter().find(|c| name_key(&c.label) == key)
    }

    pub fn prob_of(&self, label: &str) -> f64 {
        self.find(label).map_or(0.0, |c| c.prob.value())
    }

    pub fn is_point_mass(&self) -> bool {
        self.candidates.len() == 1 && self.candidates[0].prob == Probability::ONE
    }

    /// Most likely candidate, first-listed on ties.
    pub fn argmax_first(&self) -> Option<&Candidate> {
        self.candidates
            .iter()
            .fold(None, |best: Option<&Candidate>, c| match best {
                Some(b) if b.prob.value() >= c.prob.value() => Some(b),
                _ => Some(c),
            })
    }

    /// Most likely candidate, or `None` when the maximum is shared.
    pub fn argmax_unique(&self) -> Option<&Candidate> {
        let best = self.argmax_first()?;
        let ties = self.candidates.iter().filter(|c| c.prob.value() == best.prob.value()).count();
        (ties == 1).then_some(best)
    }

    /// Candidates sorted by descending probability, stable on ties.
    pub fn ranked(&self) -> Vec<&Candidate> {
        let mut v: Vec<&Candidate> = self.candidates.iter().collect();
        v.sort_by(|a, b| b.prob.value().total_cmp(&a.prob.value()));
        v
    }

    pub(crate) fn duplicate_label(&self) -> Option<&str> {
        let mut seen = std::collections::HashSet::new();
        self.candidates
            .iter()
            .find(|c| !seen.insert(name_key(&c.label)))
            .map(|c| c.label.as_str())
    }

    fn check_labels(&self) -> Result<(), GraphError> {
        match self.duplicate_label() {
            Some(l) => Err(GraphError::DuplicateLabel(l.to_string())),
            None => Ok(()),
        }
    }

    fn check(&self) -> Result<(), GraphError> {
        if self.candidates.is_empty() {
            return Err(GraphError::EmptyDistribution);
        }
        self.check_labels()?;
        let sum = self.sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(GraphError::NotNormalized { sum });
        }
        Ok(())
    }
}

impl Serialize for CandidateDistribution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.candidates.len()))?;
        for c in &self.candidates {
            map.serialize_entry(&c.label, &c.prob)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for CandidateDistribution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct OrderedVisitor;

        impl<'de> Visitor<'de> for OrderedVisitor {
            type Value = CandidateDistribution;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map from candidate label to probability")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut candidates = Vec::new();
                while let Some((label, prob)) = access.next_entry::<String, Probability>()? {
                    candidates.push(Candidate { label, prob });
                }
                Ok(CandidateDistribution { candidates })
            }
        }

        deserializer.deserialize_map(OrderedVisitor)
    }
}
