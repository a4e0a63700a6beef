//! Finite sets of lattice points and the discrete Minkowski sum.

use std::fmt::Write as _;

use rustc_hash::{FxHashMap, FxHashSet};

use crate::geometry::{Voxel, VoxelBox};

/// A finite subset of Z^3 with set semantics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VoxelSet {
    cells: FxHashSet<Voxel>,
}

impl VoxelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        VoxelSet { cells: FxHashSet::with_capacity_and_hasher(n, Default::default()) }
    }

    pub fn singleton(v: Voxel) -> Self {
        let mut s = Self::new();
        s.insert(v);
        s
    }

    pub fn from_box(b: &VoxelBox) -> Self {
        b.iter().collect()
    }

    pub fn insert(&mut self, v: Voxel) -> bool {
        self.cells.insert(v)
    }

    pub fn remove(&mut self, v: &Voxel) -> bool {
        self.cells.remove(v)
    }

    pub fn contains(&self, v: &Voxel) -> bool {
        self.cells.contains(v)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Voxel> + '_ {
        self.cells.iter()
    }

    pub fn extend<I: IntoIterator<Item = Voxel>>(&mut self, it: I) {
        self.cells.extend(it)
    }

    pub fn union(&self, other: &VoxelSet) -> VoxelSet {
        let (big, small) = if self.len() >= other.len() { (self, other) } else { (other, self) };
        let mut out = big.clone();
        out.extend(small.iter().copied());
        out
    }

    pub fn intersection(&self, other: &VoxelSet) -> VoxelSet {
        let (big, small) = if self.len() >= other.len() { (self, other) } else { (other, self) };
        small.iter().filter(|v| big.contains(v)).copied().collect()
    }

    pub fn difference(&self, other: &VoxelSet) -> VoxelSet {
        self.iter().filter(|v| !other.contains(v)).copied().collect()
    }

    pub fn is_subset(&self, other: &VoxelSet) -> bool {
        self.len() <= other.len() && self.iter().all(|v| other.contains(v))
    }

    pub fn is_disjoint(&self, other: &VoxelSet) -> bool {
        let (big, small) = if self.len() >= other.len() { (self, other) } else { (other, self) };
        !small.iter().any(|v| big.contains(v))
    }

    pub fn translate(&self, by: Voxel) -> VoxelSet {
        self.iter().map(|v| *v + by).collect()
    }

    /// Tightest enclosing box, or `None` for the empty set.
    pub fn bounding_box(&self) -> Option<VoxelBox> {
        let mut it = self.iter();
        let first = *it.next()?;
        let (mut lo, mut hi) = (first, first);
        for v in it {
            lo = Voxel::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z));
            hi = Voxel::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z));
        }
        Some(VoxelBox::new(lo, hi))
    }

    /// Elements in lexicographic `(x, y, z)` order.
    pub fn sorted(&self) -> Vec<Voxel> {
        let mut v: Vec<Voxel> = self.cells.iter().copied().collect();
        v.sort_unstable();
        v
    }

    /// Debug dump: one `x y z` line per voxel, sorted.
    pub fn to_debug_text(&self) -> String {
        let mut out = String::with_capacity(self.len() * 12);
        for v in self.sorted() {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    /// Inverse of [`VoxelSet::to_debug_text`].
    pub fn from_debug_text(text: &str) -> Result<VoxelSet, String> {
        let mut out = VoxelSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<i32> = line
                .split_whitespace()
                .map(|t| t.parse::<i32>().map_err(|e| format!("line {}: {e}", i + 1)))
                .collect::<Result<_, _>>()?;
            if parts.len() != 3 {
                return Err(format!("line {}: expected 3 coordinates", i + 1));
            }
            out.insert(Voxel::new(parts[0], parts[1], parts[2]));
        }
        Ok(out)
    }
}

impl FromIterator<Voxel> for VoxelSet {
    fn from_iter<I: IntoIterator<Item = Voxel>>(iter: I) -> Self {
        VoxelSet { cells: iter.into_iter().collect() }
    }
}

impl<'a> IntoIterator for &'a VoxelSet {
    type Item = &'a Voxel;
    type IntoIter = std::collections::hash_set::Iter<'a, Voxel>;
    fn into_iter(self) -> Self::IntoIter {
        self.cells.iter()
    }
}

impl IntoIterator for VoxelSet {
    type Item = Voxel;
    type IntoIter = std::collections::hash_set::IntoIter<Voxel>;
    fn into_iter(self) -> Self::IntoIter {
        self.cells.into_iter()
    }
}

/// Pointwise sum `{a + b | a in A, b in B}`.
pub fn minkowski_sum(a: &VoxelSet, b: &VoxelSet) -> VoxelSet {
    let mut out = VoxelSet::with_capacity(a.len().saturating_mul(b.len()).min(1 << 20));
    for p in a {
        for q in b {
            out.insert(*p + *q);
        }
    }
    out
}

/// `{c : max(|x|, |y|, |z|) <= radius}`; `(2r + 1)^3` points.
pub fn chebyshev_ball(radius: u32) -> VoxelSet {
    let r = radius as i32;
    VoxelSet::from_box(&VoxelBox::new(Voxel::new(-r, -r, -r), Voxel::new(r, r, r)))
}

/// `set ⊕ chebyshev_ball(radius)`, computed as a separable distance-threshold
/// expansion rather than pairwise sums.
pub fn dilate_chebyshev(set: &VoxelSet, radius: u32) -> VoxelSet {
    if radius == 0 || set.is_empty() {
        return set.clone();
    }
    let r = radius as i32;
    let row_x: Vec<(i32, i32)> = (-r..=r).map(|d| (d, 0)).collect();
    let row_y: Vec<(i32, i32)> = (-r..=r).map(|d| (0, d)).collect();
    Columns::from_set(set).sweep_xy(&row_x).sweep_xy(&row_y).extend_z(-r, r).into_set()
}

/// `set ⊕ {(dx, dy, dz) | (dx, dy) in xy, z_lo <= dz <= z_hi}`: the sum with a
/// prism whose cross-section is `xy`.
pub fn sweep_prism(set: &VoxelSet, xy: &[(i32, i32)], z_lo: i32, z_hi: i32) -> VoxelSet {
    Columns::from_set(set).sweep_xy(xy).extend_z(z_lo, z_hi).into_set()
}

/// Run-length columns: for each `(x, y)`, sorted disjoint inclusive z-intervals.
struct Columns {
    cols: FxHashMap<(i32, i32), Vec<(i32, i32)>>,
}

impl Columns {
    fn from_set(set: &VoxelSet) -> Self {
        let mut cols: FxHashMap<(i32, i32), Vec<(i32, i32)>> = FxHashMap::default();
        for v in set {
            cols.entry((v.x, v.y)).or_default().push((v.z, v.z));
        }
        let mut c = Columns { cols };
        c.normalize();
        c
    }

    fn normalize(&mut self) {
        for runs in self.cols.values_mut() {
            runs.sort_unstable();
            let mut merged: Vec<(i32, i32)> = Vec::with_capacity(runs.len());
            for &(a, b) in runs.iter() {
                match merged.last_mut() {
                    Some(last) if a <= last.1.saturating_add(1) => last.1 = last.1.max(b),
                    _ => merged.push((a, b)),
                }
            }
            *runs = merged;
        }
    }

    fn sweep_xy(&self, offsets: &[(i32, i32)]) -> Columns {
        let mut cols: FxHashMap<(i32, i32), Vec<(i32, i32)>> = FxHashMap::default();
        for (&(x, y), runs) in &self.cols {
            for &(dx, dy) in offsets {
                cols.entry((x + dx, y + dy)).or_default().extend_from_slice(runs);
            }
        }
        let mut c = Columns { cols };
        c.normalize();
        c
    }

    fn extend_z(mut self, lo: i32, hi: i32) -> Columns {
        for runs in self.cols.values_mut() {
            for r in runs.iter_mut() {
                *r = (r.0 + lo, r.1 + hi);
            }
        }
        self.normalize();
        self
    }

    fn into_set(self) -> VoxelSet {
        let n: usize = self.cols.values().flatten().map(|(a, b)| (b - a + 1) as usize).sum();
        let mut out = VoxelSet::with_capacity(n);
        for ((x, y), runs) in self.cols {
            for (a, b) in runs {
                out.extend((a..=b).map(|z| Voxel::new(x, y, z)));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[[i32; 3]]) -> VoxelSet {
        v.iter().map(|a| Voxel::from(*a)).collect()
    }

    #[test]
    fn origin_plus_unit_ball_is_ball() {
        let s = minkowski_sum(&set(&[[0, 0, 0]]), &chebyshev_ball(1));
        assert_eq!(s.len(), 27);
        assert_eq!(s, chebyshev_ball(1));
    }

    #[test]
    fn empty_annihilates() {
        assert!(minkowski_sum(&set(&[[1, 2, 3]]), &VoxelSet::new()).is_empty());
        assert!(minkowski_sum(&VoxelSet::new(), &chebyshev_ball(2)).is_empty());
    }

    #[test]
    fn hand_enumerated_sum() {
        let s = minkowski_sum(&set(&[[1, 0, 0], [2, 0, 0]]), &set(&[[0, 1, 0]]));
        assert_eq!(s, set(&[[1, 1, 0], [2, 1, 0]]));
    }

    #[test]
    fn ball_cardinality_and_symmetry() {
        assert_eq!(chebyshev_ball(0), set(&[[0, 0, 0]]));
        assert_eq!(chebyshev_ball(1).len(), 27);
        let b2 = chebyshev_ball(2);
        assert_eq!(b2.len(), 125);
        assert_eq!(b2.translate(Voxel::ORIGIN), b2);
        let negated: VoxelSet = b2.iter().map(|v| -*v).collect();
        assert_eq!(negated, b2);
    }

    #[test]
    fn debug_text_round_trips() {
        let s = set(&[[3, -1, 0], [0, 0, 0], [-2, 5, 7]]);
        let text = s.to_debug_text();
        assert_eq!(text, "-2 5 7\n0 0 0\n3 -1 0\n");
        assert_eq!(VoxelSet::from_debug_text(&text).unwrap(), s);
    }

    #[test]
    fn bounding_box_of_empty_is_none() {
        assert!(VoxelSet::new().bounding_box().is_none());
    }

    fn small_set() -> impl Strategy<Value = VoxelSet> {
        prop::collection::vec((-6i32..6, -6i32..6, -6i32..6), 0..20)
            .prop_map(|v| v.into_iter().map(|(x, y, z)| Voxel::new(x, y, z)).collect())
    }

    proptest! {
        #[test]
        fn separable_dilation_matches_pairwise(s in small_set(), r in 0u32..3) {
            prop_assert_eq!(dilate_chebyshev(&s, r), minkowski_sum(&s, &chebyshev_ball(r)));
        }

        #[test]
        fn prism_sweep_matches_pairwise(s in small_set(), lo in -2i32..1, h in 0i32..4) {
            let xy = [(0, 0), (1, 0), (0, -1), (2, 2)];
            let prism: VoxelSet = xy
                .iter()
                .flat_map(|&(x, y)| (lo..=lo + h).map(move |z| Voxel::new(x, y, z)))
                .collect();
            prop_assert_eq!(sweep_prism(&s, &xy, lo, lo + h), minkowski_sum(&s, &prism));
        }

        #[test]
        fn set_algebra_laws(a in small_set(), b in small_set()) {
            let u = a.union(&b);
            let i = a.intersection(&b);
            prop_assert!(i.is_subset(&a) && i.is_subset(&b));
            prop_assert_eq!(u.len() + i.len(), a.len() + b.len());
            prop_assert!(a.difference(&b).is_disjoint(&b));
        }
    }
}
