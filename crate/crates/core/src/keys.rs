//! Key vectors, injection maps and key-line faults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::logic::Polarity;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum KeyFormatError {
    #[error("invalid key character `{0}` (expected 0 or 1)")]
    BadChar(char),
    #[error("invalid injection entry `{0}` (expected <index>:<0|1>)")]
    BadEntry(String),
    #[error("key index {0} injected twice")]
    Repeated(usize),
}

/// Secret key bits; index 0 is key bit `k_0`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct KeyVector(Vec<bool>);

impl KeyVector {
    pub fn new(bits: Vec<bool>) -> Self {
        KeyVector(bits)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn with_flipped(&self, i: usize) -> Self {
        let mut bits = self.0.clone();
        bits[i] = !bits[i];
        KeyVector(bits)
    }

    pub fn random(len: usize, rng: &mut impl rand::Rng) -> Self {
        KeyVector((0..len).map(|_| rng.gen()).collect())
    }

    pub fn concat(&self, other: &KeyVector) -> Self {
        KeyVector(self.0.iter().chain(&other.0).copied().collect())
    }
}

impl From<Vec<bool>> for KeyVector {
    fn from(bits: Vec<bool>) -> Self {
        KeyVector(bits)
    }
}

/// Sidecar format: one line of `0`/`1`, index 0 leftmost.
impl fmt::Display for KeyVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for KeyVector {
    type Err = KeyFormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(KeyFormatError::BadChar(other)),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(KeyVector)
    }
}

/// Forced values on key lines, keyed by key index. Empty means no injection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct InjectionMap {
    forced: BTreeMap<usize, bool>,
}

impl InjectionMap {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every one of `keys` lines forced to `value` (the `C_F` configuration).
    pub fn all(keys: usize, value: bool) -> Self {
        InjectionMap {
            forced: (0..keys).map(|i| (i, value)).collect(),
        }
    }

    /// Every line but `exempt` forced to `value` (the `C_A` configuration for `exempt`).
    pub fn all_but(keys: usize, exempt: usize, value: bool) -> Self {
        let mut m = Self::all(keys, value);
        m.forced.remove(&exempt);
        m
    }

    pub fn insert(&mut self, index: usize, value: bool) {
        self.forced.insert(index, value);
    }

    pub fn remove(&mut self, index: usize) -> Option<bool> {
        self.forced.remove(&index)
    }

    pub fn get(&self, index: usize) -> Option<bool> {
        self.forced.get(&index).copied()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.forced.contains_key(&index)
    }

    pub fn len(&self) -> usize {
        self.forced.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forced.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, bool)> + '_ {
        self.forced.iter().map(|(&k, &v)| (k, v))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.forced.keys().next_back().copied()
    }

    /// Applies the map on top of `key`.
    pub fn apply(&self, key: &[bool]) -> Vec<bool> {
        let mut out = key.to_vec();
        for (i, v) in self.iter() {
            if i < out.len() {
                out[i] = v;
            }
        }
        out
    }
}

impl FromIterator<(usize, bool)> for InjectionMap {
    fn from_iter<T: IntoIterator<Item = (usize, bool)>>(iter: T) -> Self {
        InjectionMap {
            forced: iter.into_iter().collect(),
        }
    }
}

/// `idx:val,idx:val,...`, or `-` when empty.
impl fmt::Display for InjectionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.forced.is_empty() {
            return f.write_str("-");
        }
        for (n, (i, v)) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}:{}", i, u8::from(v))?;
        }
        Ok(())
    }
}

impl FromStr for InjectionMap {
    type Err = KeyFormatError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let mut map = InjectionMap::empty();
        if s == "-" || s.is_empty() {
            return Ok(map);
        }
        for entry in s.split(',') {
            let bad = || KeyFormatError::BadEntry(entry.to_string());
            let (idx, val) = entry.split_once(':').ok_or_else(bad)?;
            let idx: usize = idx.trim().parse().map_err(|_| bad())?;
            let val = match val.trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            if map.contains(idx) {
                return Err(KeyFormatError::Repeated(idx));
            }
            map.insert(idx, val);
        }
        Ok(map)
    }
}

/// Stuck-at fault on a key line.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct FaultSpec {
    pub key_index: usize,
    pub polarity: Polarity,
}

impl FaultSpec {
    pub fn new(key_index: usize, polarity: Polarity) -> Self {
        FaultSpec {
            key_index,
            polarity,
        }
    }

    pub fn sa1(key_index: usize) -> Self {
        Self::new(key_index, Polarity::Sa1)
    }

    pub fn sa0(key_index: usize) -> Self {
        Self::new(key_index, Polarity::Sa0)
    }

    /// Good-circuit value at the site that activates the fault.
    pub fn activation_value(self) -> bool {
        !self.polarity.value()
    }
}
