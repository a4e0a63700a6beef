//! The spatial heap: a finite partial map from lattice points to occupancy.
//!
//! Only non-`Empty` cells are stored. An unmapped cell reads as `Empty` when it
//! lies inside the machine bounds and as `Environment` outside them, so
//! `status_of` is total without threading the workspace through the prover.

use std::fmt;
use std::fmt::Write as _;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Voxel, VoxelBox};
use crate::voxel_set::VoxelSet;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OccupancyStatus {
    Tool,
    Environment,
    Stock,
    Empty,
}

impl OccupancyStatus {
    pub const ALL: [OccupancyStatus; 4] = [
        OccupancyStatus::Tool,
        OccupancyStatus::Environment,
        OccupancyStatus::Stock,
        OccupancyStatus::Empty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OccupancyStatus::Tool => "Tool",
            OccupancyStatus::Environment => "Environment",
            OccupancyStatus::Stock => "Stock",
            OccupancyStatus::Empty => "Empty",
        }
    }
}

impl fmt::Display for OccupancyStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `alloc` was asked for coordinates the heap already owns.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("allocation fault: {} coordinate(s) already owned", overlap.len())]
pub struct AllocFault {
    pub overlap: VoxelSet,
}

/// Disjoint union of heaps whose domains intersect.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("disjoint union fault: domains share {} coordinate(s)", intersection.len())]
pub struct UnionFault {
    pub intersection: VoxelSet,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpatialHeap {
    cells: FxHashMap<Voxel, OccupancyStatus>,
    bounds: Option<VoxelBox>,
}

impl SpatialHeap {
    /// An unbounded empty heap: every unmapped cell reads as `Empty`.
    pub fn new() -> Self {
        Self::default()
    }

    /// An empty heap whose outside reads as `Environment`.
    pub fn with_bounds(bounds: VoxelBox) -> Self {
        SpatialHeap { cells: FxHashMap::default(), bounds: Some(bounds) }
    }

    pub fn bounds(&self) -> Option<VoxelBox> {
        self.bounds
    }

    pub fn in_bounds(&self, c: Voxel) -> bool {
        self.bounds.is_none_or(|b| b.contains(c))
    }

    /// Number of explicitly mapped coordinates.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn owns(&self, c: &Voxel) -> bool {
        self.cells.contains_key(c)
    }

    pub fn domain(&self) -> VoxelSet {
        self.cells.keys().copied().collect()
    }

    pub fn domain_of(&self, status: OccupancyStatus) -> VoxelSet {
        self.cells.iter().filter(|(_, s)| **s == status).map(|(v, _)| *v).collect()
    }

    pub fn count_of(&self, status: OccupancyStatus) -> usize {
        self.cells.values().filter(|s| **s == status).count()
    }

    pub fn status_of(&self, c: Voxel) -> OccupancyStatus {
        match self.cells.get(&c) {
            Some(s) => *s,
            None if self.in_bounds(c) => OccupancyStatus::Empty,
            None => OccupancyStatus::Environment,
        }
    }

    /// Iterated points-to `*_{c in C} c -> theta` joined onto `self`.
    ///
    /// `Empty` is never stored: allocating it only checks freshness.
    pub fn alloc(&self, c_set: &VoxelSet, theta: OccupancyStatus) -> Result<SpatialHeap, AllocFault> {
        let mut next = self.clone();
        next.alloc_in_place(c_set, theta)?;
        Ok(next)
    }

    pub(crate) fn alloc_in_place(&mut self, c_set: &VoxelSet, theta: OccupancyStatus) -> Result<(), AllocFault> {
        let overlap: VoxelSet = c_set.iter().filter(|c| self.cells.contains_key(c)).copied().collect();
        if !overlap.is_empty() {
            return Err(AllocFault { overlap });
        }
        if theta != OccupancyStatus::Empty {
            self.cells.extend(c_set.iter().map(|c| (*c, theta)));
        }
        Ok(())
    }

    /// Returns cells to the unmapped (`Empty`) state.
    pub(crate) fn release_in_place<'a, I: IntoIterator<Item = &'a Voxel>>(&mut self, cells: I) {
        for c in cells {
            self.cells.remove(c);
        }
    }

    /// Releases every cell of `c_set` that currently holds `status`; returns the count.
    pub(crate) fn release_status_in_place(&mut self, c_set: &VoxelSet, status: OccupancyStatus) -> usize {
        let mut n = 0;
        for c in c_set {
            if self.cells.get(c) == Some(&status) {
                self.cells.remove(c);
                n += 1;
            }
        }
        n
    }

    /// Splits `c_set` by `status_of`. The parts are pairwise disjoint and cover `c_set`.
    pub fn partition_by_status(&self, c_set: &VoxelSet) -> StatusPartition {
        let mut p = StatusPartition::default();
        for c in c_set {
            p.part_mut(self.status_of(*c)).insert(*c);
        }
        p
    }

    /// Sorted `x y z status` lines over the explicit domain.
    pub fn to_debug_text(&self) -> String {
        let mut entries: Vec<(&Voxel, &OccupancyStatus)> = self.cells.iter().collect();
        entries.sort_unstable_by_key(|(v, _)| **v);
        let mut out = String::with_capacity(entries.len() * 20);
        for (v, s) in entries {
            let _ = writeln!(out, "{v} {s}");
        }
        out
    }
}

impl FromIterator<(Voxel, OccupancyStatus)> for SpatialHeap {
    /// `Empty` entries are dropped; later entries overwrite earlier ones.
    fn from_iter<I: IntoIterator<Item = (Voxel, OccupancyStatus)>>(iter: I) -> Self {
        SpatialHeap {
            cells: iter.into_iter().filter(|(_, s)| *s != OccupancyStatus::Empty).collect(),
            bounds: None,
        }
    }
}

/// `dom(h1) ∩ dom(h2) = ∅` over the explicit domains.
pub fn disjoint(h1: &SpatialHeap, h2: &SpatialHeap) -> bool {
    let (big, small) = if h1.len() >= h2.len() { (h1, h2) } else { (h2, h1) };
    !small.cells.keys().any(|c| big.cells.contains_key(c))
}

/// `h1 ⊎ h2`. The result keeps `h1`'s bounds, falling back to `h2`'s.
pub fn disjoint_union(h1: &SpatialHeap, h2: &SpatialHeap) -> Result<SpatialHeap, UnionFault> {
    let intersection: VoxelSet = h2.cells.keys().filter(|c| h1.cells.contains_key(c)).copied().collect();
    if !intersection.is_empty() {
        return Err(UnionFault { intersection });
    }
    let mut cells = h1.cells.clone();
    cells.extend(h2.cells.iter().map(|(k, v)| (*k, *v)));
    Ok(SpatialHeap { cells, bounds: h1.bounds.or(h2.bounds) })
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StatusPartition {
    pub tool: VoxelSet,
    pub environment: VoxelSet,
    pub stock: VoxelSet,
    pub empty: VoxelSet,
}

impl StatusPartition {
    pub fn part(&self, s: OccupancyStatus) -> &VoxelSet {
        match s {
            OccupancyStatus::Tool => &self.tool,
            OccupancyStatus::Environment => &self.environment,
            OccupancyStatus::Stock => &self.stock,
            OccupancyStatus::Empty => &self.empty,
        }
    }

    fn part_mut(&mut self, s: OccupancyStatus) -> &mut VoxelSet {
        match s {
            OccupancyStatus::Tool => &mut self.tool,
            OccupancyStatus::Environment => &mut self.environment,
            OccupancyStatus::Stock => &mut self.stock,
            OccupancyStatus::Empty => &mut self.empty,
        }
    }

    /// Statuses with a non-empty part.
    pub fn present(&self) -> Vec<OccupancyStatus> {
        OccupancyStatus::ALL.into_iter().filter(|s| !self.part(*s).is_empty()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use OccupancyStatus::*;

    fn v(x: i32, y: i32, z: i32) -> Voxel {
        Voxel::new(x, y, z)
    }

    fn set(vs: &[Voxel]) -> VoxelSet {
        vs.iter().copied().collect()
    }

    #[test]
    fn alloc_points_to() {
        let h = SpatialHeap::new().alloc(&set(&[v(0, 1, 0)]), Tool).unwrap();
        assert_eq!(h.status_of(v(0, 1, 0)), Tool);
        assert_eq!(h.len(), 1);
    }

    #[test]
    fn alloc_empty_set_is_identity() {
        let h = SpatialHeap::new().alloc(&set(&[v(1, 1, 1)]), Stock).unwrap();
        assert_eq!(h.alloc(&VoxelSet::new(), Environment).unwrap(), h);
    }

    #[test]
    fn alloc_over_owned_cell_faults() {
        let h = SpatialHeap::new().alloc(&set(&[v(0, 1, 0)]), Tool).unwrap();
        let err = h.alloc(&set(&[v(0, 1, 0), v(2, 2, 2)]), Environment).unwrap_err();
        assert_eq!(err.overlap, set(&[v(0, 1, 0)]));
        // the original is untouched
        assert_eq!(h.status_of(v(2, 2, 2)), Empty);
    }

    #[test]
    fn alloc_empty_status_is_not_stored() {
        let h = SpatialHeap::new().alloc(&set(&[v(3, 3, 3)]), Empty).unwrap();
        assert!(h.is_empty());
        assert_eq!(h.status_of(v(3, 3, 3)), Empty);
    }

    #[test]
    fn disjointness() {
        let a = SpatialHeap::new().alloc(&set(&[v(0, 0, 0)]), Tool).unwrap();
        let b = SpatialHeap::new().alloc(&set(&[v(1, 0, 0)]), Stock).unwrap();
        assert!(disjoint(&a, &b));
        assert!(disjoint(&a, &SpatialHeap::new()));
        let t = SpatialHeap::new().alloc(&set(&[v(0, 1, 0)]), Tool).unwrap();
        let e = SpatialHeap::new().alloc(&set(&[v(0, 1, 0)]), Environment).unwrap();
        assert!(!disjoint(&t, &e));
    }

    #[test]
    fn union_identity_and_fault() {
        let a = SpatialHeap::new().alloc(&set(&[v(0, 0, 0)]), Tool).unwrap();
        let b = SpatialHeap::new().alloc(&set(&[v(5, 5, 5)]), Stock).unwrap();
        let u = disjoint_union(&a, &b).unwrap();
        assert_eq!(u.len(), 2);
        assert_eq!(disjoint_union(&a, &SpatialHeap::new()).unwrap(), a);

        let three = set(&[v(1, 0, 0), v(2, 0, 0), v(3, 0, 0)]);
        let h1 = SpatialHeap::new().alloc(&three.union(&set(&[v(9, 9, 9)])), Environment).unwrap();
        let h2 = SpatialHeap::new().alloc(&three.union(&set(&[v(-1, 0, 0)])), Tool).unwrap();
        assert_eq!(disjoint_union(&h1, &h2).unwrap_err().intersection, three);
    }

    #[test]
    fn status_reads_respect_bounds() {
        let b = VoxelBox::new(v(0, 0, 0), v(10, 10, 10));
        let h = SpatialHeap::with_bounds(b).alloc(&set(&[v(5, 5, 5)]), Stock).unwrap();
        assert_eq!(h.status_of(v(5, 5, 5)), Stock);
        assert_eq!(h.status_of(v(0, 0, 0)), Empty);
        assert_eq!(h.status_of(v(10, 10, 10)), Empty);
        assert_eq!(h.status_of(v(-1, 0, 0)), Environment);
        assert_eq!(h.status_of(v(11, 10, 10)), Environment);
        assert_eq!(h.status_of(v(10, 10, 11)), Environment);
    }

    #[test]
    fn partition_cases() {
        let b = VoxelBox::new(v(0, 0, 0), v(9, 9, 9));
        let stock = set(&[v(0, 0, 0), v(1, 0, 0)]);
        let h = SpatialHeap::with_bounds(b).alloc(&stock, Stock).unwrap();
        let fp = set(&[v(0, 0, 0), v(1, 0, 0), v(2, 0, 0), v(3, 0, 0)]);
        let p = h.partition_by_status(&fp);
        assert_eq!(p.stock, stock);
        assert_eq!(p.empty, set(&[v(2, 0, 0), v(3, 0, 0)]));
        assert_eq!(p.present(), vec![Stock, Empty]);

        assert!(h.partition_by_status(&VoxelSet::new()).present().is_empty());

        let outside = set(&[v(-1, 0, 0), v(20, 0, 0)]);
        assert_eq!(h.partition_by_status(&outside).present(), vec![Environment]);
    }

    #[test]
    fn debug_text_is_sorted() {
        let h: SpatialHeap = [(v(1, 0, 0), Stock), (v(0, 0, 0), Tool), (v(2, 0, 0), Empty)].into_iter().collect();
        assert_eq!(h.to_debug_text(), "0 0 0 Tool\n1 0 0 Stock\n");
    }
}
