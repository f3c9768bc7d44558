//! Model subsets: sorted sets of low-fidelity indices.
//!
//! Indices are stored 0-based. Everything user-facing (JSON, CSV, display)
//! uses 1-based indices, matching the usual `{1, …, n}` labelling of models.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum SubsetError {
    #[error("subset is empty")]
    Empty,
    #[error("model index {index} out of range for {n} low-fidelity models")]
    OutOfRange { index: usize, n: usize },
    #[error("model index {0} appears more than once")]
    Duplicate(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Subset(Vec<usize>);

impl Subset {
    /// Builds a subset from 0-based indices; sorts and rejects duplicates.
    pub fn new(mut indices: Vec<usize>) -> Result<Self, SubsetError> {
        if indices.is_empty() {
            return Err(SubsetError::Empty);
        }
        indices.sort_unstable();
        if let Some(w) = indices.windows(2).find(|w| w[0] == w[1]) {
            return Err(SubsetError::Duplicate(w[0] + 1));
        }
        Ok(Self(indices))
    }

    pub fn from_one_based(indices: &[usize]) -> Result<Self, SubsetError> {
        if let Some(&bad) = indices.iter().find(|&&i| i == 0) {
            return Err(SubsetError::OutOfRange { index: bad, n: 0 });
        }
        Self::new(indices.iter().map(|i| i - 1).collect())
    }

    /// All of `[n]`.
    pub fn full(n: usize) -> Self {
        Self((0..n).collect())
    }

    pub fn check_range(&self, n: usize) -> Result<(), SubsetError> {
        match self.0.last() {
            Some(&max) if max >= n => Err(SubsetError::OutOfRange { index: max + 1, n }),
            _ => Ok(()),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_subset_of(&self, other: &Subset) -> bool {
        self.0.iter().all(|i| other.0.binary_search(i).is_ok())
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

impl Serialize for Subset {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.one_based().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Subset {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(deserializer)?;
        Subset::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// All nonempty subsets of `[n]` with at most `max_card` elements, ordered by
/// cardinality and then lexicographically.
pub fn enumerate_subsets(n: usize, max_card: usize) -> Vec<Subset> {
    let max_card = max_card.min(n);
    let mut out = Vec::new();
    for k in 1..=max_card {
        let mut combo: Vec<usize> = (0..k).collect();
        loop {
            out.push(Subset(combo.clone()));
            // advance to the next k-combination in lexicographic order
            let mut i = k;
            while i > 0 && combo[i - 1] == n - k + i - 1 {
                i -= 1;
            }
            if i == 0 {
                break;
            }
            combo[i - 1] += 1;
            for j in i..k {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    out
}
