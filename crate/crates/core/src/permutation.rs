//! Basis-state permutations `P_π` acting on computational basis labels.

use rand::seq::SliceRandom;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PermutationKind {
    /// Uniform over all `(2^N)!` permutations; entangling in general.
    General,
    /// `l -> l XOR mask`: a tensor product of per-qubit identities and bit flips.
    SingleQubitOnly,
}

/// A bijection on `{0, .., 2^N - 1}`. Applying it moves the amplitude at
/// basis label `l` to label `map[l]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationSpec {
    n_qubits: usize,
    map: Vec<usize>,
    kind: PermutationKind,
}

impl PermutationSpec {
    pub fn new(n_qubits: usize, map: Vec<usize>, kind: PermutationKind) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if map.len() != dim {
            return Err(Error::dim("permutation map", dim, map.len()));
        }
        let mut seen = vec![false; dim];
        for &target in &map {
            if target >= dim || std::mem::replace(&mut seen[target], true) {
                return Err(Error::invalid(format!(
                    "permutation map is not a bijection on 0..{dim} (bad or repeated target {target})"
                )));
            }
        }
        if kind == PermutationKind::SingleQubitOnly {
            let mask = map[0];
            if map.iter().enumerate().any(|(l, &t)| t != l ^ mask) {
                return Err(Error::invalid(
                    "single-qubit permutation must be of the form l -> l XOR mask",
                ));
            }
        }
        Ok(Self {
            n_qubits,
            map,
            kind,
        })
    }

    pub fn identity(n_qubits: usize) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        Ok(Self {
            n_qubits,
            map: (0..dim).collect(),
            kind: PermutationKind::General,
        })
    }

    pub fn from_xor_mask(n_qubits: usize, mask: usize) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        if mask >= dim {
            return Err(Error::invalid(format!("mask {mask} has bits beyond {n_qubits} qubits")));
        }
        Ok(Self {
            n_qubits,
            map: (0..dim).map(|l| l ^ mask).collect(),
            kind: PermutationKind::SingleQubitOnly,
        })
    }

    /// Seeded draw. `General` runs Fisher-Yates over the full label set,
    /// `SingleQubitOnly` draws a uniform bitmask.
    pub fn draw(n_qubits: usize, kind: PermutationKind, seed: u64) -> Result<Self> {
        let dim = dim_of(n_qubits)?;
        let mut rng = seeded(seed, stream::PERMUTATION);
        match kind {
            PermutationKind::General => {
                let mut map: Vec<usize> = (0..dim).collect();
                map.shuffle(&mut rng);
                Ok(Self {
                    n_qubits,
                    map,
                    kind,
                })
            }
            PermutationKind::SingleQubitOnly => {
                let mask = rng.gen_range(0..dim);
                Self::from_xor_mask(n_qubits, mask)
            }
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.map.len()
    }

    pub fn kind(&self) -> PermutationKind {
        self.kind
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    #[inline]
    pub fn apply_index(&self, l: usize) -> usize {
        self.map[l]
    }

    /// `self ∘ inner`: first `inner`, then `self`.
    pub fn compose(&self, inner: &PermutationSpec) -> Result<PermutationSpec> {
        if self.dim() != inner.dim() {
            return Err(Error::dim("permutation compose", self.dim(), inner.dim()));
        }
        let kind = if self.kind == PermutationKind::SingleQubitOnly
            && inner.kind == PermutationKind::SingleQubitOnly
        {
            PermutationKind::SingleQubitOnly
        } else {
            PermutationKind::General
        };
        Ok(PermutationSpec {
            n_qubits: self.n_qubits,
            map: inner.map.iter().map(|&m| self.map[m]).collect(),
            kind,
        })
    }

    pub fn inverse(&self) -> PermutationSpec {
        let mut inv = vec![0; self.dim()];
        for (l, &t) in self.map.iter().enumerate() {
            inv[t] = l;
        }
        PermutationSpec {
            n_qubits: self.n_qubits,
            map: inv,
            kind: self.kind,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(l, &t)| l == t)
    }

    /// Moves `src[l]` to `dst[map[l]]`.
    #[inline]
    pub fn scatter<T: Copy>(&self, src: &[T], dst: &mut [T]) {
        debug_assert_eq!(src.len(), self.dim());
        debug_assert_eq!(dst.len(), self.dim());
        for (&v, &t) in src.iter().zip(&self.map) {
            dst[t] = v;
        }
    }
}

pub(crate) fn dim_of(n_qubits: usize) -> Result<usize> {
    if n_qubits == 0 {
        return Err(Error::invalid("qubit count must be at least 1"));
    }
    if n_qubits > 30 {
        return Err(Error::Resource(format!(
            "{n_qubits} qubits exceeds the 30-qubit limit of the dense simulator"
        )));
    }
    Ok(1usize << n_qubits)
}
