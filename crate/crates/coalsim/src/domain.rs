//! Marked-partition domain types: individuals, blocks, labels, restriction
//! operators, and the sitewise partial order.
//!
//! An individual is an (index, birth time) pair; blocks carry only mergeable
//! O(1) statistics (label, size, minimum initial norm, earliest birth) rather
//! than member lists.

use crate::fasthash::FastMap;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BTreeSet;

pub type Site = (i64, i64);

/// Chebyshev (infinity) norm of a lattice site.
#[inline]
pub fn inf_norm(s: Site) -> i64 {
    s.0.abs().max(s.1.abs())
}

/// A particle line: enumeration index plus the time it was created.
/// Initial individuals have birth time 0; rebirth events create individuals
/// with the merge time as birth time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub index: u64,
    pub birth_time: f64,
}

impl Individual {
    pub fn initial(index: u64) -> Self {
        Individual {
            index,
            birth_time: 0.0,
        }
    }

    /// Lexicographic comparison: index first, birth time second.
    #[inline]
    pub fn cmp_lex(&self, other: &Individual) -> Ordering {
        self.index
            .cmp(&other.index)
            .then(self.birth_time.total_cmp(&other.birth_time))
    }

    #[inline]
    pub fn leq(&self, other: &Individual) -> bool {
        self.cmp_lex(other) != Ordering::Greater
    }
}

/// One partition element.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Block {
    /// The lexicographically minimal member.
    pub label: Individual,
    /// Number of member individuals.
    pub size: u64,
    /// Infinity norm of the member whose initial (time-0) location is closest
    /// to the origin; `None` for blocks containing no initial individual.
    pub min_initial_norm: Option<i64>,
    /// Current lattice site.
    pub site: Site,
    /// Minimum birth time over members.
    pub earliest_birth: f64,
}

impl Block {
    /// Initial singleton: one individual born at time 0 at `site`.
    pub fn initial_singleton(index: u64, site: Site) -> Self {
        Block {
            label: Individual::initial(index),
            size: 1,
            min_initial_norm: Some(inf_norm(site)),
            site,
            earliest_birth: 0.0,
        }
    }

    /// Singleton created at `birth` (a rebirth), carrying no initial member.
    pub fn reborn_singleton(index: u64, site: Site, birth: f64) -> Self {
        Block {
            label: Individual {
                index,
                birth_time: birth,
            },
            size: 1,
            min_initial_norm: None,
            site,
            earliest_birth: birth,
        }
    }

    /// Statistics of the union of two blocks (located at `site`).
    pub fn merged(a: &Block, b: &Block, site: Site) -> Block {
        let label = if a.label.leq(&b.label) { a.label } else { b.label };
        Block {
            label,
            size: a.size + b.size,
            min_initial_norm: match (a.min_initial_norm, b.min_initial_norm) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, None) => x,
                (None, y) => y,
            },
            site,
            earliest_birth: a.earliest_birth.min(b.earliest_birth),
        }
    }

    pub fn contains_initial_within(&self, half_side: f64) -> bool {
        matches!(self.min_initial_norm, Some(n) if n as f64 <= half_side)
    }
}

/// A finite marked partition together with its clock.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarkedPartition {
    pub blocks: Vec<Block>,
    pub clock: f64,
}

/// The box Λ(r) = [-r, r]² ∩ Z².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub half_side: f64,
}

impl LatticeBox {
    pub fn new(half_side: f64) -> Self {
        LatticeBox { half_side }
    }

    /// The box Λ^{α,t} = [-t^{α/2}, t^{α/2}]² ∩ Z².
    pub fn alpha_box(alpha: f64, t: f64) -> Self {
        LatticeBox {
            half_side: t.powf(alpha / 2.0),
        }
    }

    #[inline]
    pub fn contains(&self, site: Site) -> bool {
        inf_norm(site) as f64 <= self.half_side
    }

    /// Largest integer radius contained in the box; negative for empty boxes.
    pub fn integer_radius(&self) -> i64 {
        if self.half_side < 0.0 {
            -1
        } else {
            self.half_side.floor() as i64
        }
    }

    /// All sites of the box, in shell-major enumeration order.
    pub fn sites(&self) -> Vec<Site> {
        enumerate_shell_major(self.integer_radius())
    }
}

/// Sites of Λ(r) ordered by infinity-norm shell, then lexicographically within
/// each shell. This is the global enumeration fixing the total order on
/// individuals: every site of a shell precedes every site of a larger shell.
pub fn enumerate_shell_major(r: i64) -> Vec<Site> {
    let mut out = Vec::new();
    if r < 0 {
        return out;
    }
    out.push((0, 0));
    for shell in 1..=r {
        let mut ring: Vec<Site> = Vec::with_capacity((8 * shell) as usize);
        for x in -shell..=shell {
            for y in -shell..=shell {
                if x.abs().max(y.abs()) == shell {
                    ring.push((x, y));
                }
            }
        }
        // the double loop above emits lexicographic order already
        out.extend(ring);
    }
    out
}

/// Sub-partition of blocks containing an initial individual located in `bx`.
pub fn restrict_by_region(partition: &MarkedPartition, bx: &LatticeBox) -> MarkedPartition {
    MarkedPartition {
        blocks: partition
            .blocks
            .iter()
            .filter(|b| b.contains_initial_within(bx.half_side))
            .copied()
            .collect(),
        clock: partition.clock,
    }
}

/// A partition carrying explicit member lists, used where the restriction
/// operator on individuals (not just block statistics) is needed.
#[derive(Clone, Debug, PartialEq)]
pub struct IndexedPartition {
    pub blocks: Vec<Vec<Individual>>,
}

impl IndexedPartition {
    /// Sorts members within blocks and blocks by their minimal member, giving
    /// a canonical representative for comparisons.
    pub fn canonicalize(&mut self) {
        for b in &mut self.blocks {
            b.sort_by(|x, y| x.cmp_lex(y));
        }
        self.blocks.retain(|b| !b.is_empty());
        self.blocks.sort_by(|a, b| a[0].cmp_lex(&b[0]));
    }
}

/// Intersects each block with the individuals whose index lies in `index_set`
/// and drops empty intersections.
pub fn restrict_by_index(partition: &IndexedPartition, index_set: &BTreeSet<u64>) -> IndexedPartition {
    let mut out = IndexedPartition {
        blocks: partition
            .blocks
            .iter()
            .map(|b| {
                b.iter()
                    .filter(|ind| index_set.contains(&ind.index))
                    .copied()
                    .collect::<Vec<_>>()
            })
            .filter(|b: &Vec<Individual>| !b.is_empty())
            .collect(),
    };
    out.canonicalize();
    out
}

/// Sitewise partial order: true iff every site holds at most as many blocks
/// of `p1` as of `p2`.
pub fn partial_order_leq(p1: &MarkedPartition, p2: &MarkedPartition) -> bool {
    let mut counts: FastMap<Site, i64> = FastMap::default();
    for b in &p2.blocks {
        *counts.entry(b.site).or_insert(0) += 1;
    }
    for b in &p1.blocks {
        match counts.get_mut(&b.site) {
            Some(c) if *c > 0 => *c -= 1,
            _ => return false,
        }
    }
    true
}
