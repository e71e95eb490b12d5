//! Triangle meshes, analytic test meshes and the ray predicates used by
//! traversal.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::real::{gamma, Real};
use crate::vec3::Vec3;

/// Mesh triangle with its geometric normal `normalize((v1 − v0) × (v2 − v0))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle<T = f64> {
    pub v0: Vec3<T>,
    pub v1: Vec3<T>,
    pub v2: Vec3<T>,
    pub normal: Vec3<T>,
}

impl<T: Real> Triangle<T> {
    /// Builds a triangle, or `None` when the vertices span zero area.
    pub fn new(v0: Vec3<T>, v1: Vec3<T>, v2: Vec3<T>) -> Option<Self> {
        let e1 = v1 - v0;
        let e2 = v2 - v0;
        let c = e1.cross(e2);
        let len = c.length();
        let scale = e1.length() * e2.length();
        if !(len > T::of(16.0) * T::EPS * scale) || !len.is_finite() {
            return None;
        }
        Some(Self {
            v0,
            v1,
            v2,
            normal: c / len,
        })
    }

    pub fn centroid(&self) -> Vec3<T> {
        (self.v0 + self.v1 + self.v2) / T::of(3.0)
    }

    pub fn area(&self) -> T {
        (self.v1 - self.v0).cross(self.v2 - self.v0).length() * T::half()
    }

    pub fn bounds(&self) -> Aabb<T> {
        Aabb {
            min: self.v0.min(self.v1).min(self.v2),
            max: self.v0.max(self.v1).max(self.v2),
        }
    }

    pub fn cast<U: Real>(&self) -> Triangle<U> {
        Triangle {
            v0: self.v0.cast(),
            v1: self.v1.cast(),
            v2: self.v2.cast(),
            normal: self.normal.cast(),
        }
    }
}

/// Axis-aligned bounding box, `min ≤ max` componentwise once non-empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb<T = f64> {
    pub min: Vec3<T>,
    pub max: Vec3<T>,
}

impl<T: Real> Aabb<T> {
    /// The empty box: union identity, contains nothing.
    pub fn empty() -> Self {
        Self {
            min: Vec3::splat(T::infinity()),
            max: Vec3::splat(T::neg_infinity()),
        }
    }

    pub fn new(min: Vec3<T>, max: Vec3<T>) -> Self {
        Self { min, max }
    }

    pub fn is_empty(&self) -> bool {
        self.min.x > self.max.x || self.min.y > self.max.y || self.min.z > self.max.z
    }

    pub fn grow(&mut self, p: Vec3<T>) {
        self.min = self.min.min(p);
        self.max = self.max.max(p);
    }

    pub fn union(&self, o: &Self) -> Self {
        Self {
            min: self.min.min(o.min),
            max: self.max.max(o.max),
        }
    }

    pub fn extent(&self) -> Vec3<T> {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3<T> {
        (self.min + self.max) * T::half()
    }

    pub fn diagonal(&self) -> T {
        self.extent().length()
    }

    /// Surface area; zero for an empty box.
    pub fn surface_area(&self) -> T {
        if self.is_empty() {
            return T::zero();
        }
        let e = self.extent();
        T::two() * (e.x * e.y + e.y * e.z + e.z * e.x)
    }

    /// Index of the longest axis, ties resolved toward x.
    pub fn longest_axis(&self) -> usize {
        let e = self.extent();
        if e.x >= e.y && e.x >= e.z {
            0
        } else if e.y >= e.z {
            1
        } else {
            2
        }
    }

    pub fn corners(&self) -> [Vec3<T>; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(a.x, b.y, b.z),
            Vec3::new(b.x, b.y, b.z),
        ]
    }

    pub fn contains_point(&self, p: Vec3<T>) -> bool {
        p.x >= self.min.x
            && p.y >= self.min.y
            && p.z >= self.min.z
            && p.x <= self.max.x
            && p.y <= self.max.y
            && p.z <= self.max.z
    }

    /// `o ⊆ self` with `slack` absolute tolerance on every face.
    pub fn contains_box(&self, o: &Self, slack: T) -> bool {
        o.min.x >= self.min.x - slack
            && o.min.y >= self.min.y - slack
            && o.min.z >= self.min.z - slack
            && o.max.x <= self.max.x + slack
            && o.max.y <= self.max.y + slack
            && o.max.z <= self.max.z + slack
    }

    pub fn cast<U: Real>(&self) -> Aabb<U> {
        Aabb {
            min: self.min.cast(),
            max: self.max.cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("mesh has no triangles")]
    Empty,
    #[error("face {face} has zero area")]
    Degenerate { face: usize },
    #[error("radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("icosphere subdivision {0} exceeds the limit of {max}", max = MAX_ICOSPHERE_SUBDIVISIONS)]
    TooManySubdivisions(u32),
}

/// What to do with zero-area triangles while assembling a mesh.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// Drop them and report their face indices.
    #[default]
    Drop,
    /// Fail on the first one.
    Strict,
}

/// Immutable triangle soup with a tight bounding box.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T = f64> {
    triangles: Vec<Triangle<T>>,
    aabb: Aabb<T>,
    /// Where the mesh came from: a file path or a generator description.
    pub source: String,
}

impl<T: Real> Mesh<T> {
    /// Assembles a mesh from vertex triples in input order.
    ///
    /// Returns the mesh plus the input indices of any dropped zero-area faces.
    pub fn from_faces<I>(
        faces: I,
        policy: DegeneratePolicy,
        source: impl Into<String>,
    ) -> Result<(Self, Vec<usize>), MeshError>
    where
        I: IntoIterator<Item = [Vec3<T>; 3]>,
    {
        let mut triangles = Vec::new();
        let mut dropped = Vec::new();
        for (face, [a, b, c]) in faces.into_iter().enumerate() {
            match Triangle::new(a, b, c) {
                Some(t) => triangles.push(t),
                None if policy == DegeneratePolicy::Strict => {
                    return Err(MeshError::Degenerate { face })
                }
                None => dropped.push(face),
            }
        }
        Ok((Self::from_triangles(triangles, source)?, dropped))
    }

    pub fn from_triangles(
        triangles: Vec<Triangle<T>>,
        source: impl Into<String>,
    ) -> Result<Self, MeshError> {
        if triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        let mut aabb = Aabb::empty();
        for t in &triangles {
            aabb.grow(t.v0);
            aabb.grow(t.v1);
            aabb.grow(t.v2);
        }
        Ok(Self {
            triangles,
            aabb,
            source: source.into(),
        })
    }

    pub fn triangles(&self) -> &[Triangle<T>] {
        &self.triangles
    }

    pub fn len(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn aabb(&self) -> &Aabb<T> {
        &self.aabb
    }

    pub fn surface_area(&self) -> T {
        self.triangles.iter().fold(T::zero(), |acc, t| acc + t.area())
    }

    /// Rigid translation; normals are unchanged.
    pub fn translated(&self, offset: Vec3<T>) -> Self {
        let triangles = self
            .triangles
            .iter()
            .map(|t| Triangle {
                v0: t.v0 + offset,
                v1: t.v1 + offset,
                v2: t.v2 + offset,
                normal: t.normal,
            })
            .collect();
        Self {
            triangles,
            aabb: Aabb::new(self.aabb.min + offset, self.aabb.max + offset),
            source: self.source.clone(),
        }
    }

    /// Converts to another scalar type, recomputing the box in that type.
    pub fn cast<U: Real>(&self) -> Mesh<U> {
        let triangles: Vec<Triangle<U>> = self.triangles.iter().map(Triangle::cast).collect();
        let mut aabb = Aabb::empty();
        for t in &triangles {
            aabb.grow(t.v0);
            aabb.grow(t.v1);
            aabb.grow(t.v2);
        }
        Mesh {
            triangles,
            aabb,
            source: self.source.clone(),
        }
    }
}

pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 8;

/// Icosahedron subdivided `subdivisions` times with every vertex projected
/// onto the sphere of `radius` centred at the origin. Faces wind outward.
pub fn generate_icosphere<T: Real>(radius: T, subdivisions: u32) -> Result<Mesh<T>, MeshError> {
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(MeshError::InvalidRadius(radius.to_f64()));
    }
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(MeshError::TooManySubdivisions(subdivisions));
    }

    // Build on the unit sphere in f64, scale once at the end.
    let phi = (1.0 + libm::sqrt(5.0)) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|v| unit(*v))
    .collect();
    let mut faces: Vec<[u32; 3]> = alloc::vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: BTreeMap<(u32, u32), u32> = BTreeMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(&mut verts, &mut midpoints, a, b);
            let bc = midpoint(&mut verts, &mut midpoints, b, c);
            let ca = midpoint(&mut verts, &mut midpoints, c, a);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }

    let r = radius.to_f64();
    let point = |i: u32| {
        let [x, y, z] = verts[i as usize];
        Vec3::new(T::of(x * r), T::of(y * r), T::of(z * r))
    };
    let mut triangles = Vec::with_capacity(faces.len());
    for (face, &[a, b, c]) in faces.iter().enumerate() {
        let (pa, pb, pc) = (point(a), point(b), point(c));
        let mut tri = Triangle::new(pa, pb, pc).ok_or(MeshError::Degenerate { face })?;
        if tri.normal.dot(tri.centroid()) < T::zero() {
            tri = Triangle::new(pa, pc, pb).ok_or(MeshError::Degenerate { face })?;
        }
        triangles.push(tri);
    }
    Mesh::from_triangles(
        triangles,
        alloc::format!("icosphere(radius={r}, subdivisions={subdivisions})"),
    )
}

fn unit([x, y, z]: [f64; 3]) -> [f64; 3] {
    let len = libm::sqrt(x * x + y * y + z * z);
    [x / len, y / len, z / len]
}

fn midpoint(
    verts: &mut Vec<[f64; 3]>,
    cache: &mut BTreeMap<(u32, u32), u32>,
    a: u32,
    b: u32,
) -> u32 {
    let key = if a < b { (a, b) } else { (b, a) };
    *cache.entry(key).or_insert_with(|| {
        let (p, q) = (verts[a as usize], verts[b as usize]);
        verts.push(unit([
            (p[0] + q[0]) * 0.5,
            (p[1] + q[1]) * 0.5,
            (p[2] + q[2]) * 0.5,
        ]));
        (verts.len() - 1) as u32
    })
}

/// Largest chord-to-surface deviation of a sphere mesh centred at the origin.
pub fn max_sagitta<T: Real>(mesh: &Mesh<T>, radius: T) -> T {
    mesh.triangles()
        .iter()
        .map(|t| radius - t.normal.dot(t.v0).abs())
        .fold(T::zero(), T::max)
}

/// Closest intersection of the ray `origin + t·dir`, `t ∈ (t_min, t_max]`,
/// with `tri`. Edges and vertices count as inside. Returns `(t, normal)`
/// where `normal` is the triangle's geometric normal.
#[inline]
pub fn ray_triangle_intersect<T: Real>(
    origin: Vec3<T>,
    dir: Vec3<T>,
    tri: &Triangle<T>,
    t_min: T,
    t_max: T,
) -> Option<(T, Vec3<T>)> {
    let e1 = tri.v1 - tri.v0;
    let e2 = tri.v2 - tri.v0;
    let p = dir.cross(e2);
    let det = e1.dot(p);
    // Parallel to the plane (or numerically so).
    if det.abs() <= T::EPS * e1.length() * e2.length() {
        return None;
    }
    let inv_det = det.recip();
    let s = origin - tri.v0;
    let u = s.dot(p) * inv_det;
    if u < T::zero() || u > T::one() {
        return None;
    }
    let q = s.cross(e1);
    let v = dir.dot(q) * inv_det;
    if v < T::zero() || u + v > T::one() {
        return None;
    }
    let t = e2.dot(q) * inv_det;
    if t > t_min && t <= t_max {
        Some((t, tri.normal))
    } else {
        None
    }
}

/// Slab test of the segment `[0, t_max]` of the ray against `aabb`.
///
/// `dir_inv` is the componentwise reciprocal of the direction; infinite
/// components are fine. Returns the entry distance, clamped to zero when the
/// origin is inside the box.
#[inline]
pub fn ray_aabb_intersect<T: Real>(
    origin: Vec3<T>,
    dir_inv: Vec3<T>,
    aabb: &Aabb<T>,
    t_max: T,
) -> Option<T> {
    let mut t0 = T::zero();
    let mut t1 = t_max;
    // Rounding in the slab distances can otherwise cull a box whose face a
    // triangle hit lies on.
    let pad = T::one() + T::two() * gamma::<T>(3);
    for axis in 0..3 {
        let inv = dir_inv[axis];
        let near = (aabb.min[axis] - origin[axis]) * inv;
        let far = (aabb.max[axis] - origin[axis]) * inv;
        // 0·∞: the origin lies on a slab plane of an axis the ray runs
        // parallel to, so this axis does not constrain the interval.
        if near.is_nan() || far.is_nan() {
            continue;
        }
        let (lo, hi) = if near <= far { (near, far) } else { (far, near) };
        t0 = t0.max(lo);
        t1 = t1.min(hi * pad);
        if t0 > t1 {
            return None;
        }
    }
    Some(t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn unit_tri() -> Triangle {
        Triangle::new(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)).unwrap()
    }

    #[test]
    fn axis_aligned_hit() {
        let hit = ray_triangle_intersect(v(0.25, 0.25, 1.0), v(0.0, 0.0, -1.0), &unit_tri(), 0.0, 10.0);
        let (t, n) = hit.unwrap();
        assert_eq!(t, 1.0);
        assert_eq!(n, v(0.0, 0.0, 1.0));
    }

    #[test]
    fn ray_pointing_away_misses() {
        let hit = ray_triangle_intersect(v(0.25, 0.25, 1.0), v(0.0, 0.0, 1.0), &unit_tri(), 0.0, 10.0);
        assert!(hit.is_none());
    }

    #[test]
    fn parallel_ray_misses() {
        let hit = ray_triangle_intersect(v(0.25, 0.25, 1.0), v(1.0, 0.0, 0.0), &unit_tri(), 0.0, 10.0);
        assert!(hit.is_none());
    }

    #[test]
    fn edges_and_vertices_are_inside() {
        let tri = unit_tri();
        for (x, y) in [(0.5, 0.0), (0.0, 0.5), (0.5, 0.5), (0.0, 0.0), (1.0, 0.0)] {
            let hit = ray_triangle_intersect(v(x, y, 2.0), v(0.0, 0.0, -1.0), &tri, 0.0, 10.0);
            assert!(hit.is_some(), "({x}, {y})");
        }
    }

    #[test]
    fn t_interval_is_half_open() {
        let tri = unit_tri();
        let o = v(0.25, 0.25, 1.0);
        let d = v(0.0, 0.0, -1.0);
        assert!(ray_triangle_intersect(o, d, &tri, 0.0, 1.0).is_some());
        assert!(ray_triangle_intersect(o, d, &tri, 1.0, 2.0).is_none());
        assert!(ray_triangle_intersect(o, d, &tri, 0.0, 0.999).is_none());
    }

    #[test]
    fn slab_examples() {
        let unit_box = Aabb::new(v(-1.0, -1.0, -1.0), v(1.0, 1.0, 1.0));
        let d = v(0.0, 0.0, -1.0);
        let entry = ray_aabb_intersect(v(0.0, 0.0, 5.0), d.recip(), &unit_box, f64::INFINITY);
        assert_eq!(entry, Some(4.0));
        assert!(ray_aabb_intersect(v(5.0, 5.0, 5.0), d.recip(), &unit_box, f64::INFINITY).is_none());
        let inside = ray_aabb_intersect(v(0.1, 0.2, 0.3), d.recip(), &unit_box, f64::INFINITY);
        assert_eq!(inside, Some(0.0));
        // Segment ends before the box.
        assert!(ray_aabb_intersect(v(0.0, 0.0, 5.0), d.recip(), &unit_box, 3.0).is_none());
    }

    #[test]
    fn slab_with_origin_on_plane_of_zero_component() {
        // Origin lies exactly on the x = 1 face while travelling along -z.
        let b = Aabb::new(v(-1.0, -1.0, -1.0), v(1.0, 1.0, 1.0));
        let d = v(0.0, 0.0, -1.0);
        assert!(ray_aabb_intersect(v(1.0, 0.0, 5.0), d.recip(), &b, f64::INFINITY).is_some());
        // Flat box, as produced by a single axis-aligned triangle.
        let flat = unit_tri().bounds();
        assert!(ray_aabb_intersect(v(0.25, 0.25, 1.0), d.recip(), &flat, f64::INFINITY).is_some());
    }

    #[test]
    fn degenerate_triangles_rejected() {
        assert!(Triangle::new(v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0)).is_none());
        assert!(Triangle::new(v(0.0, 0.0, 0.0), v(0.0, 0.0, 0.0), v(0.0, 1.0, 0.0)).is_none());
        let faces = vec![
            [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0)],
            [v(0.0, 0.0, 0.0), v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0)],
        ];
        let (mesh, dropped) = Mesh::from_faces(faces.clone(), DegeneratePolicy::Drop, "t").unwrap();
        assert_eq!(mesh.len(), 1);
        assert_eq!(dropped, vec![1]);
        let err = Mesh::from_faces(faces, DegeneratePolicy::Strict, "t").unwrap_err();
        assert_eq!(err, MeshError::Degenerate { face: 1 });
    }

    #[test]
    fn empty_mesh_rejected() {
        let none: Vec<[Vec3; 3]> = Vec::new();
        assert_eq!(
            Mesh::from_faces(none, DegeneratePolicy::Drop, "t").unwrap_err(),
            MeshError::Empty
        );
    }

    #[test]
    fn icosphere_counts_and_radius() {
        assert_eq!(generate_icosphere(1.0f64, 0).unwrap().len(), 20);
        let s3: Mesh = generate_icosphere(1.0f64, 3).unwrap();
        assert_eq!(s3.len(), 1280);
        for t in s3.triangles() {
            for p in [t.v0, t.v1, t.v2] {
                assert!((p.length() - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn icosphere_normals_point_outward() {
        let mesh = generate_icosphere(2.5f64, 2).unwrap();
        for t in mesh.triangles() {
            let c = t.centroid();
            assert!(t.normal.dot(c / c.length()) > 0.0);
        }
    }

    #[test]
    fn icosphere_area_converges() {
        let mesh = generate_icosphere(1.0f64, 4).unwrap();
        let exact = 4.0 * core::f64::consts::PI;
        assert!((mesh.surface_area() - exact).abs() / exact < 0.005);
    }

    #[test]
    fn icosphere_rejects_bad_input() {
        assert_eq!(
            generate_icosphere(0.0f64, 1).unwrap_err(),
            MeshError::InvalidRadius(0.0)
        );
        assert!(matches!(
            generate_icosphere(1.0f64, 9),
            Err(MeshError::TooManySubdivisions(9))
        ));
    }

    #[test]
    fn aabb_is_tight() {
        let mesh: Mesh = generate_icosphere(1.5f64, 1).unwrap();
        let b = mesh.aabb();
        for t in mesh.triangles() {
            for p in [t.v0, t.v1, t.v2] {
                assert!(b.contains_point(p));
            }
        }
        assert!((b.max.y - 1.5).abs() < 1e-12);
    }
}
