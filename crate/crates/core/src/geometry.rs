//! Integer lattice coordinates, the continuous-to-grid scaling, and the
//! analytic shapes used to describe fixtures and stock.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Absorbs floating point noise such as `0.05 / 0.1 = 0.49999999999999994`.
const SNAP: f64 = 1e9;
/// Containment slack for points lying on a shape boundary.
pub(crate) const TOL: f64 = 1e-9;

/// A point of the discrete workspace lattice.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Voxel {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl Voxel {
    pub const ORIGIN: Voxel = Voxel { x: 0, y: 0, z: 0 };

    pub const fn new(x: i32, y: i32, z: i32) -> Self {
        Voxel { x, y, z }
    }

    pub fn get(self, axis: Axis) -> i32 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn to_array(self) -> [i32; 3] {
        [self.x, self.y, self.z]
    }

    /// L-infinity distance.
    pub fn chebyshev(self, other: Voxel) -> i32 {
        let d = self - other;
        d.x.abs().max(d.y.abs()).max(d.z.abs())
    }
}

impl From<[i32; 3]> for Voxel {
    fn from(a: [i32; 3]) -> Self {
        Voxel::new(a[0], a[1], a[2])
    }
}

impl Add for Voxel {
    type Output = Voxel;
    fn add(self, o: Voxel) -> Voxel {
        Voxel::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Voxel {
    type Output = Voxel;
    fn sub(self, o: Voxel) -> Voxel {
        Voxel::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Voxel {
    type Output = Voxel;
    fn neg(self) -> Voxel {
        Voxel::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Voxel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.x, self.y, self.z)
    }
}

/// A point in machine coordinates (mm).
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Point3 { x, y, z }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// The two axes spanning the plane normal to `self`, in right-handed order.
    pub fn cross_axes(self) -> (Axis, Axis) {
        match self {
            Axis::X => (Axis::Y, Axis::Z),
            Axis::Y => (Axis::Z, Axis::X),
            Axis::Z => (Axis::X, Axis::Y),
        }
    }
}

/// Uniform continuous-to-lattice scaling. Voxel `i` is centred on `i * resolution_mm`.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScale {
    pub resolution_mm: f64,
}

impl GridScale {
    pub fn new(resolution_mm: f64) -> Self {
        debug_assert!(resolution_mm > 0.0 && resolution_mm.is_finite());
        GridScale { resolution_mm }
    }

    /// Voxels per millimetre.
    pub fn scale(self) -> f64 {
        1.0 / self.resolution_mm
    }

    fn ratio(self, x: f64) -> f64 {
        ((x / self.resolution_mm) * SNAP).round() / SNAP
    }

    pub fn to_grid(self, x: f64) -> i32 {
        s_grid(x, self)
    }

    pub fn point_to_grid(self, p: Point3) -> Voxel {
        Voxel::new(self.to_grid(p.x), self.to_grid(p.y), self.to_grid(p.z))
    }

    /// Centre of voxel index `i` along one axis.
    pub fn to_mm(self, i: i32) -> f64 {
        f64::from(i) * self.resolution_mm
    }

    /// Inclusive range of voxel indices whose centres fall inside `[lo, hi]`,
    /// or `None` when no centre does.
    pub fn center_range(self, lo: f64, hi: f64) -> Option<(i32, i32)> {
        let a = (lo / self.resolution_mm - TOL).ceil() as i32;
        let b = (hi / self.resolution_mm + TOL).floor() as i32;
        (a <= b).then_some((a, b))
    }

    /// Voxel count covering a length, rounded up.
    pub fn cells_ceil(self, len_mm: f64) -> i32 {
        (len_mm / self.resolution_mm - TOL).ceil().max(0.0) as i32
    }
}

/// Maps a continuous coordinate onto the lattice, rounding half away from zero.
pub fn s_grid(x: f64, g: GridScale) -> i32 {
    g.ratio(x).round() as i32
}

/// Inclusive axis-aligned box of voxels.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoxelBox {
    pub min: Voxel,
    pub max: Voxel,
}

impl VoxelBox {
    pub fn new(min: Voxel, max: Voxel) -> Self {
        VoxelBox { min, max }
    }

    /// Box spanned by two corners in any order.
    pub fn spanning(a: Voxel, b: Voxel) -> Self {
        VoxelBox {
            min: Voxel::new(a.x.min(b.x), a.y.min(b.y), a.z.min(b.z)),
            max: Voxel::new(a.x.max(b.x), a.y.max(b.y), a.z.max(b.z)),
        }
    }

    pub fn contains(&self, v: Voxel) -> bool {
        (self.min.x..=self.max.x).contains(&v.x)
            && (self.min.y..=self.max.y).contains(&v.y)
            && (self.min.z..=self.max.z).contains(&v.z)
    }

    pub fn extent(&self) -> [i64; 3] {
        [
            i64::from(self.max.x) - i64::from(self.min.x) + 1,
            i64::from(self.max.y) - i64::from(self.min.y) + 1,
            i64::from(self.max.z) - i64::from(self.min.z) + 1,
        ]
    }

    pub fn volume(&self) -> i64 {
        self.extent().iter().map(|e| (*e).max(0)).product()
    }

    pub fn iter(&self) -> impl Iterator<Item = Voxel> + '_ {
        let b = *self;
        (b.min.x..=b.max.x).flat_map(move |x| {
            (b.min.y..=b.max.y).flat_map(move |y| (b.min.z..=b.max.z).map(move |z| Voxel::new(x, y, z)))
        })
    }

    pub fn axis_range(&self, axis: Axis) -> (i32, i32) {
        (self.min.get(axis), self.max.get(axis))
    }
}

/// Analytic solid used for obstacles and stock. All lengths in mm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Shape {
    Box {
        min: [f64; 3],
        max: [f64; 3],
    },
    /// `center` is the midpoint of the axis segment; the solid extends
    /// `height / 2` to either side along `axis`.
    Cylinder {
        center: [f64; 3],
        axis: Axis,
        radius: f64,
        height: f64,
    },
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
}

impl Shape {
    /// Continuous axis-aligned bounds `(min, max)`.
    pub fn aabb(&self) -> ([f64; 3], [f64; 3]) {
        match self {
            Shape::Box { min, max } => (*min, *max),
            Shape::Cylinder { center, axis, radius, height } => {
                let mut lo = *center;
                let mut hi = *center;
                for a in Axis::ALL {
                    let half = if a == *axis { height / 2.0 } else { *radius };
                    lo[a.index()] -= half;
                    hi[a.index()] += half;
                }
                (lo, hi)
            }
            Shape::Sphere { center, radius } => (
                [center[0] - radius, center[1] - radius, center[2] - radius],
                [center[0] + radius, center[1] + radius, center[2] + radius],
            ),
        }
    }

    /// Closed-set membership with a small boundary slack.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            Shape::Box { min, max } => (0..3).all(|i| p[i] >= min[i] - TOL && p[i] <= max[i] + TOL),
            Shape::Cylinder { center, axis, radius, height } => {
                let a = axis.index();
                if (p[a] - center[a]).abs() > height / 2.0 + TOL {
                    return false;
                }
                let (u, v) = axis.cross_axes();
                let du = p[u.index()] - center[u.index()];
                let dv = p[v.index()] - center[v.index()];
                du * du + dv * dv <= radius * radius + TOL
            }
            Shape::Sphere { center, radius } => {
                let d2: f64 = (0..3).map(|i| (p[i] - center[i]).powi(2)).sum();
                d2 <= radius * radius + TOL
            }
        }
    }

    /// Checks parameters are finite and non-negative; returns a reason on failure.
    pub fn check(&self) -> Result<(), String> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Shape::Box { min, max } => {
                if !finite(min) || !finite(max) {
                    return Err("box corners must be finite".into());
                }
                if (0..3).any(|i| min[i] > max[i]) {
                    return Err("box min exceeds max".into());
                }
            }
            Shape::Cylinder { center, radius, height, .. } => {
                if !finite(center) || !finite(&[*radius, *height]) {
                    return Err("cylinder parameters must be finite".into());
                }
                if *radius < 0.0 || *height < 0.0 {
                    return Err("cylinder radius and height must be non-negative".into());
                }
            }
            Shape::Sphere { center, radius } => {
                if !finite(center) || !radius.is_finite() {
                    return Err("sphere parameters must be finite".into());
                }
                if *radius < 0.0 {
                    return Err("sphere radius must be non-negative".into());
                }
            }
        }
        Ok(())
    }

    /// True when the solid has zero extent along some direction.
    pub fn is_degenerate(&self) -> bool {
        match self {
            Shape::Box { min, max } => (0..3).any(|i| max[i] - min[i] <= TOL),
            Shape::Cylinder { radius, height, .. } => *radius <= TOL || *height <= TOL,
            Shape::Sphere { radius, .. } => *radius <= TOL,
        }
    }
}
