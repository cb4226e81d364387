use std::collections::{BTreeMap, BTreeSet};

use super::sample::Sample;
use crate::error::{Error, Result};

/// Bidirectional identity ↔ clothes-class mapping.
///
/// Every clothes class is owned by exactly one identity; the clothes classes
/// owned by an identity are its positive classes and everything else is
/// negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClothesRegistry {
    owner: BTreeMap<u32, u32>,
    owned: BTreeMap<u32, Vec<u32>>,
}

impl ClothesRegistry {
    /// Builds the registry from labelled samples, rejecting clothes labels that
    /// appear under more than one identity.
    pub fn build<'a, I>(samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Sample>,
    {
        Self::from_pairs(samples.into_iter().map(|s| (s.identity, s.clothes)))
    }

    /// Same as [`ClothesRegistry::build`] from bare `(identity, clothes)` pairs.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut owner = BTreeMap::new();
        let mut owned: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
        for (identity, clothes) in pairs {
            match owner.insert(clothes, identity) {
                Some(prev) if prev != identity => {
                    return Err(Error::Label(format!(
                        "clothes label {clothes} shared by identities {prev} and {identity}"
                    )));
                }
                _ => {}
            }
            owned.entry(identity).or_default().insert(clothes);
        }
        if owner.is_empty() {
            return Err(Error::Degenerate("registry needs at least one sample".into()));
        }
        Ok(Self {
            owner,
            owned: owned
                .into_iter()
                .map(|(id, set)| (id, set.into_iter().collect()))
                .collect(),
        })
    }

    pub fn num_identities(&self) -> usize {
        self.owned.len()
    }

    pub fn num_clothes(&self) -> usize {
        self.owner.len()
    }

    pub fn owner(&self, clothes: u32) -> Option<u32> {
        self.owner.get(&clothes).copied()
    }

    /// Clothes classes of `identity`, ascending.
    pub fn owned(&self, identity: u32) -> Option<&[u32]> {
        self.owned.get(&identity).map(Vec::as_slice)
    }

    /// Number of clothes classes of `identity` (K).
    pub fn num_owned(&self, identity: u32) -> Option<usize> {
        self.owned.get(&identity).map(Vec::len)
    }

    pub fn identities(&self) -> impl Iterator<Item = u32> + '_ {
        self.owned.keys().copied()
    }

    pub fn clothes(&self) -> impl Iterator<Item = u32> + '_ {
        self.owner.keys().copied()
    }

    /// Positive (same identity) and negative (other identities) clothes
    /// classes for `identity`, both ascending.
    pub fn positive_negative_split(&self, identity: u32) -> Result<(Vec<u32>, Vec<u32>)> {
        let plus = self
            .owned(identity)
            .ok_or_else(|| Error::Label(format!("unknown identity {identity}")))?
            .to_vec();
        let minus = self
            .owner
            .iter()
            .filter(|&(_, &o)| o != identity)
            .map(|(&c, _)| c)
            .collect();
        Ok((plus, minus))
    }

    /// Checks `(identity, clothes)` against the registry.
    pub fn check_pair(&self, identity: u32, clothes: u32) -> Result<()> {
        match self.owner(clothes) {
            Some(o) if o == identity => Ok(()),
            Some(o) => Err(Error::Label(format!(
                "clothes {clothes} belongs to identity {o}, not {identity}"
            ))),
            None => Err(Error::Label(format!("unknown clothes label {clothes}"))),
        }
    }
}
