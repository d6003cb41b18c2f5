//! Finite groups of signed permutation matrices searched by the initializer.
//!
//! `Ref(d)` holds the `2^d` diagonal sign matrices, the ambiguity left by
//! diagonalizing a matrix with simple spectrum. `B_d` adds axis permutations
//! (`2^d·d!` elements) for spectra whose eigenvalue order may be unreliable.

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_REF_DIM: usize = 16;
pub const MAX_BD_DIM: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    #[default]
    Ref,
    Bd,
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::Ref => f.write_str("ref"),
            GroupKind::Bd => f.write_str("bd"),
        }
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ref" => Ok(GroupKind::Ref),
            "bd" | "b_d" => Ok(GroupKind::Bd),
            other => Err(Error::invalid(format!(
                "unknown group '{other}', expected ref|bd"
            ))),
        }
    }
}

/// The matrix sending basis vector `e_i` to `signs[i]·e_{perm[i]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignedPermutation {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
}

impl SignedPermutation {
    pub fn identity(d: usize) -> Self {
        Self {
            perm: (0..d).collect(),
            signs: vec![1; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn is_identity(&self) -> bool {
        self.perm.iter().enumerate().all(|(i, &p)| i == p) && self.signs.iter().all(|&s| s == 1)
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for (i, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            m[(p, i)] = f64::from(s);
        }
        m
    }
}

impl fmt::Display for SignedPermutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, (&p, &s)) in self.perm.iter().zip(&self.signs).enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}{}", if s < 0 { "-" } else { "+" }, p)?;
        }
        f.write_str("]")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroup {
    pub kind: GroupKind,
    pub dim: usize,
    /// Identity first; no duplicates.
    pub elements: Vec<SignedPermutation>,
}

impl CandidateGroup {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn matrices(&self) -> Vec<DMatrix<f64>> {
        self.elements
            .iter()
            .map(SignedPermutation::to_matrix)
            .collect()
    }
}

/// Enumerates `Ref(d)` (1 ≤ d ≤ 16) or `B_d` (1 ≤ d ≤ 8).
///
/// Order: axis permutations lexicographically, and for each permutation the
/// sign patterns by binary counting with bit `i` flipping axis `i`.
pub fn enumerate_group(d: usize, kind: GroupKind) -> Result<CandidateGroup> {
    let max = match kind {
        GroupKind::Ref => MAX_REF_DIM,
        GroupKind::Bd => MAX_BD_DIM,
    };
    if d == 0 || d > max {
        return Err(Error::invalid(format!(
            "group {kind} supports 1 <= d <= {max}, got {d}"
        )));
    }
    let perms = match kind {
        GroupKind::Ref => vec![(0..d).collect()],
        GroupKind::Bd => lexicographic_permutations(d),
    };
    let mut elements = Vec::with_capacity(perms.len() << d);
    for perm in perms {
        for mask in 0u32..(1u32 << d) {
            let signs = (0..d)
                .map(|i| if mask >> i & 1 == 1 { -1 } else { 1 })
                .collect();
            elements.push(SignedPermutation {
                perm: perm.clone(),
                signs,
            });
        }
    }
    Ok(CandidateGroup {
        kind,
        dim: d,
        elements,
    })
}

fn lexicographic_permutations(d: usize) -> Vec<Vec<usize>> {
    let mut current: Vec<usize> = (0..d).collect();
    let mut out = vec![current.clone()];
    // Standard next-permutation step.
    loop {
        let Some(i) = (0..d.saturating_sub(1))
            .rev()
            .find(|&i| current[i] < current[i + 1])
        else {
            return out;
        };
        let j = (i + 1..d).rev().find(|&j| current[j] > current[i]).unwrap();
        current.swap(i, j);
        current[i + 1..].reverse();
        out.push(current.clone());
    }
}
