//! Coalitions and partitions of the user set.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A set of users, stored as ascending ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(Vec<usize>);

impl Coalition {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Coalition(members)
    }

    pub fn singleton(su: usize) -> Self {
        Coalition(vec![su])
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, su: usize) -> bool {
        self.0.binary_search(&su).is_ok()
    }

    pub fn with(&self, su: usize) -> Self {
        let mut m = self.0.clone();
        if let Err(at) = m.binary_search(&su) {
            m.insert(at, su);
        }
        Coalition(m)
    }

    pub fn without(&self, su: usize) -> Self {
        Coalition(self.0.iter().copied().filter(|&m| m != su).collect())
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{m}")?;
        }
        write!(f, "}}")
    }
}

/// Disjoint nonempty coalitions covering users `0..n`, kept in canonical
/// order (by smallest member).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    coalitions: Vec<Coalition>,
}

impl Partition {
    pub fn new(coalitions: Vec<Coalition>, n: usize) -> Result<Self> {
        let mut seen = vec![false; n];
        for c in &coalitions {
            if c.is_empty() {
                return Err(Error::InvalidInput("empty coalition in partition".into()));
            }
            for &m in c.members() {
                if m >= n || std::mem::replace(&mut seen[m], true) {
                    return Err(Error::InvalidInput(format!(
                        "user {m} is out of range or appears twice"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("user {missing} is not covered")));
        }
        Ok(Self::canonical(coalitions))
    }

    fn canonical(mut coalitions: Vec<Coalition>) -> Self {
        coalitions.retain(|c| !c.is_empty());
        coalitions.sort_unstable_by_key(|c| c.members()[0]);
        Partition { coalitions }
    }

    pub fn singletons(n: usize) -> Self {
        Partition {
            coalitions: (0..n).map(Coalition::singleton).collect(),
        }
    }

    pub fn grand(n: usize) -> Self {
        Partition {
            coalitions: vec![Coalition((0..n).collect())],
        }
    }

    /// Builds a partition from a block label per user.
    pub fn from_labels(labels: &[usize]) -> Self {
        let blocks = labels.iter().copied().max().map_or(0, |m| m + 1);
        let mut coalitions = vec![Vec::new(); blocks];
        for (su, &b) in labels.iter().enumerate() {
            coalitions[b].push(su);
        }
        Self::canonical(coalitions.into_iter().map(Coalition).collect())
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    pub fn len(&self) -> usize {
        self.coalitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coalitions.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.coalitions.iter().map(Coalition::len).sum()
    }

    /// Index of the coalition holding `su`.
    pub fn index_of(&self, su: usize) -> usize {
        self.coalitions
            .iter()
            .position(|c| c.contains(su))
            .expect("partition covers every user")
    }

    pub fn coalition_of(&self, su: usize) -> &Coalition {
        &self.coalitions[self.index_of(su)]
    }

    /// Moves `su` into coalition `dest` (an index into this partition), or out
    /// on its own when `dest` is `None`.
    pub fn moved(&self, su: usize, dest: Option<usize>) -> Partition {
        let from = self.index_of(su);
        let mut coalitions = self.coalitions.clone();
        coalitions[from] = coalitions[from].without(su);
        match dest {
            Some(d) => coalitions[d] = coalitions[d].with(su),
            None => coalitions.push(Coalition::singleton(su)),
        }
        Self::canonical(coalitions)
    }

    /// Compact identifier, e.g. `0,3|1|2,4`.
    pub fn fingerprint(&self) -> String {
        self.coalitions
            .iter()
            .map(|c| {
                c.members()
                    .iter()
                    .map(usize::to_string)
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("|")
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.coalitions.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Iterates over every set partition of `0..n` via restricted growth strings.
pub struct SetPartitions {
    labels: Vec<usize>,
    maxes: Vec<usize>,
    done: bool,
}

impl SetPartitions {
    pub fn new(n: usize) -> Self {
        SetPartitions {
            labels: vec![0; n],
            maxes: vec![0; n],
            done: n == 0,
        }
    }
}

impl Iterator for SetPartitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        if self.done {
            return None;
        }
        let out = Partition::from_labels(&self.labels);
        // labels[i] <= 1 + max(labels[..i]); maxes[i] = max(labels[..=i])
        let n = self.labels.len();
        let mut i = n;
        loop {
            if i <= 1 {
                self.done = true;
                break;
            }
            i -= 1;
            let prefix_max = self.maxes[i - 1];
            if self.labels[i] <= prefix_max {
                self.labels[i] += 1;
                self.maxes[i] = prefix_max.max(self.labels[i]);
                for j in i + 1..n {
                    self.labels[j] = 0;
                    self.maxes[j] = self.maxes[i];
                }
                break;
            }
        }
        Some(out)
    }
}
