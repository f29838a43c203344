//! Multi-index sets `{h : Σ_k h_k ≤ H_max}` shared by the HOPS and HEOM
//! hierarchies.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Marks a neighbour that lies outside the truncated set.
pub const TRUNCATED: u32 = u32::MAX;

/// Default ceiling on the number of auxiliary indices.
pub const DEFAULT_CAPACITY: usize = 5_000_000;

#[derive(Clone, Debug)]
pub struct HierarchyIndexSet {
    k: usize,
    depth: usize,
    indices: Vec<u8>,
    up: Vec<u32>,
    down: Vec<u32>,
}

/// `C(k + depth, k)` without overflow for the sizes that matter.
pub fn hierarchy_size(k: usize, depth: usize) -> u128 {
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc * (depth as u128 + i) / i;
        if acc > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    acc
}

impl HierarchyIndexSet {
    pub fn new(k: usize, depth: usize) -> Result<Self> {
        Self::with_capacity(k, depth, DEFAULT_CAPACITY)
    }

    /// Graded ordering: all indices of total order 0, then 1, ..., each grade
    /// in descending lexicographic order.
    pub fn with_capacity(k: usize, depth: usize, capacity: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("hierarchy needs at least one mode".into()));
        }
        if depth > u8::MAX as usize {
            return Err(Error::Domain(format!("hierarchy depth {depth} exceeds 255")));
        }
        let count = hierarchy_size(k, depth);
        if count > capacity as u128 {
            return Err(Error::Capacity { count, limit: capacity });
        }
        let count = count as usize;

        let mut indices = Vec::with_capacity(count * k);
        let mut current = vec![0u8; k];
        for grade in 0..=depth {
            compositions(grade, 0, &mut current, &mut indices);
        }

        let lookup: HashMap<&[u8], u32> = indices.chunks_exact(k).enumerate().map(|(i, h)| (h, i as u32)).collect();
        let mut up = vec![TRUNCATED; count * k];
        let mut down = vec![TRUNCATED; count * k];
        let mut probe = vec![0u8; k];
        for (i, h) in indices.chunks_exact(k).enumerate() {
            let grade: usize = h.iter().map(|&x| x as usize).sum();
            for m in 0..k {
                probe.copy_from_slice(h);
                if grade < depth {
                    probe[m] += 1;
                    up[i * k + m] = lookup[probe.as_slice()];
                    probe[m] -= 1;
                }
                if h[m] > 0 {
                    probe[m] -= 1;
                    down[i * k + m] = lookup[probe.as_slice()];
                }
            }
        }
        Ok(HierarchyIndexSet { k, depth, indices, up, down })
    }

    pub fn modes(&self) -> usize {
        self.k
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.indices.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index(&self, i: usize) -> &[u8] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    /// Position of `h + e_m`, or [`TRUNCATED`].
    pub fn up(&self, i: usize, m: usize) -> u32 {
        self.up[i * self.k + m]
    }

    /// Position of `h − e_m`, or [`TRUNCATED`].
    pub fn down(&self, i: usize, m: usize) -> u32 {
        self.down[i * self.k + m]
    }

    /// All indices back to back, `modes()` entries each.
    pub fn flat_indices(&self) -> &[u8] {
        &self.indices
    }

    pub fn position(&self, h: &[u8]) -> Option<usize> {
        (0..self.len()).find(|&i| self.index(i) == h)
    }
}

/// Appends all compositions of `remaining` into the slots `pos..` in
/// descending lexicographic order.
fn compositions(remaining: usize, pos: usize, current: &mut [u8], out: &mut Vec<u8>) {
    let k = current.len();
    if pos == k - 1 {
        current[pos] = remaining as u8;
        out.extend_from_slice(current);
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v as u8;
        compositions(remaining - v, pos + 1, current, out);
    }
    current[pos] = 0;
}
