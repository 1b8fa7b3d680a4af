//! Seeded train/val/test partition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown split `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub seed: u64,
    pub assignments: BTreeMap<String, Split>,
}

impl SplitManifest {
    pub fn count(&self, split: Split) -> usize {
        self.assignments.values().filter(|s| **s == split).count()
    }

    pub fn files(&self, split: Split) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(f, _)| f.as_str())
            .collect()
    }

    /// `key: value` header followed by one `file split` line per entry.
    pub fn to_text(&self) -> String {
        let mut s = format!("seed: {}\n", self.seed);
        for sp in Split::ALL {
            s.push_str(&format!("{sp}: {}\n", self.count(sp)));
        }
        for (f, sp) in &self.assignments {
            s.push_str(&format!("{f} {sp}\n"));
        }
        s
    }
}

/// Sorts and dedups `files`, shuffles with ChaCha8 seeded by `seed`, then
/// gives `⌊N·val/Σ⌋` to val, `⌊N·test/Σ⌋` to test and the rest to train.
pub fn split_dataset<S: AsRef<str>>(files: &[S], ratio: (u32, u32, u32), seed: u64) -> Result<SplitManifest> {
    let (tr, va, te) = ratio;
    if tr == 0 || va == 0 || te == 0 {
        return Err(Error::config(format!("split ratio must be positive, got {tr}:{va}:{te}")));
    }
    let mut names: Vec<String> = files.iter().map(|f| f.as_ref().to_owned()).collect();
    names.sort();
    names.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.shuffle(&mut rng);
    let n = names.len() as u64;
    let total = (tr + va + te) as u64;
    let n_val = (n * va as u64 / total) as usize;
    let n_test = (n * te as u64 / total) as usize;
    let assignments = names
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let s = if i < n_val {
                Split::Val
            } else if i < n_val + n_test {
                Split::Test
            } else {
                Split::Train
            };
            (f, s)
        })
        .collect();
    Ok(SplitManifest { seed, assignments })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("fire_{i:05}.ppm")).collect()
    }

    #[test]
    fn counts() {
        let m = split_dataset(&names(7431), (10, 1, 1), 0).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (6193, 619, 619));
        let m = split_dataset(&names(12), (10, 1, 1), 5).unwrap();
        assert_eq!((m.count(Split::Train), m.count(Split::Val), m.count(Split::Test)), (10, 1, 1));
        let empty: [&str; 0] = [];
        assert!(split_dataset(&empty, (10, 1, 1), 0).unwrap().assignments.is_empty());
        assert!(split_dataset(&names(3), (10, 0, 1), 0).is_err());
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = split_dataset(&names(100), (10, 1, 1), 1).unwrap();
        assert_eq!(a, split_dataset(&names(100), (10, 1, 1), 1).unwrap());
        assert_ne!(a, split_dataset(&names(100), (10, 1, 1), 2).unwrap());
    }

    #[test]
    fn manifest_text() {
        let m = split_dataset(&["b", "a"], (1, 1, 1), 0).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("seed: 0\ntrain: 2\nval: 0\ntest: 0\n"), "{text}");
        assert!(text.ends_with("a train\nb train\n"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn order_independent_partition(n in 0usize..300, seed in any::<u64>(), rot in 0usize..300) {
            let files = names(n);
            let mut shuffled = files.clone();
            if n > 0 {
                shuffled.rotate_left(rot % n);
                shuffled.reverse();
            }
            let a = split_dataset(&files, (10, 1, 1), seed).unwrap();
            let b = split_dataset(&shuffled, (10, 1, 1), seed).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert_eq!(a.assignments.len(), n);
            prop_assert_eq!(a.count(Split::Val), n / 12);
            prop_assert_eq!(a.count(Split::Test), n / 12);
        }
    }
}
