//! Bounding volume hierarchy over mesh triangles.
//!
//! Nodes are stored in preorder: an internal node's left child always sits
//! at the next index, and each leaf owns a contiguous range of the permuted
//! triangle array `tri_order`. Construction is deterministic for any
//! [`Join`] scheduler because subtrees are numbered by concatenation, never
//! by allocation order.

use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::{ray_aabb_intersect, ray_triangle_intersect, Aabb, Mesh};
use crate::join::{Join, Sequential};
use crate::real::Real;
use crate::vec3::Vec3;

/// Hard cap on tree depth; sizes the fixed traversal stack.
pub const MAX_DEPTH: usize = 64;

/// Subtrees smaller than this are built without forking.
const FORK_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitRule {
    /// Median centroid along the longest node axis.
    Median,
    /// Binned surface area heuristic.
    #[default]
    BinnedSah,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildParams {
    pub split_rule: SplitRule,
    /// Nodes with at most this many triangles become leaves.
    pub leaf_size: usize,
    /// Centroid bins per axis for [`SplitRule::BinnedSah`].
    pub bins_per_axis: usize,
    /// Cost of one node traversal step.
    pub traversal_cost: f64,
    /// Cost of one ray-triangle test.
    pub intersection_cost: f64,
    pub max_depth: usize,
}

impl Default for BuildParams {
    fn default() -> Self {
        Self {
            split_rule: SplitRule::BinnedSah,
            leaf_size: 4,
            bins_per_axis: 16,
            traversal_cost: 1.0,
            intersection_cost: 1.0,
            max_depth: MAX_DEPTH,
        }
    }
}

impl BuildParams {
    pub fn median() -> Self {
        Self {
            split_rule: SplitRule::Median,
            ..Self::default()
        }
    }

    pub fn sah() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<(), BvhError> {
        if self.leaf_size == 0 {
            return Err(BvhError::InvalidParams("leaf size must be at least 1"));
        }
        if self.split_rule == SplitRule::BinnedSah && self.bins_per_axis < 2 {
            return Err(BvhError::InvalidParams("binned SAH needs at least 2 bins per axis"));
        }
        if !(self.traversal_cost > 0.0) || !(self.intersection_cost > 0.0) {
            return Err(BvhError::InvalidParams("SAH costs must be positive"));
        }
        if self.max_depth > MAX_DEPTH {
            return Err(BvhError::InvalidParams("max depth exceeds the traversal stack"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BvhError {
    #[error("invalid BVH parameters: {0}")]
    InvalidParams(&'static str),
    #[error("mesh has {0} triangles, more than a u32 index can address")]
    TooManyTriangles(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Internal { left: u32, right: u32 },
    Leaf { first: u32, count: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvhNode<T = f64> {
    pub bounds: Aabb<T>,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BuildStats {
    pub node_count: usize,
    pub leaf_count: usize,
    /// Depth of the deepest node; the root has depth 0.
    pub max_depth: usize,
    /// `leaf_histogram[k]` is the number of leaves holding `k` triangles.
    pub leaf_histogram: Vec<usize>,
}

/// Closest intersection returned by traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit<T = f64> {
    pub t: T,
    /// Index into the mesh's triangle list (original order).
    pub triangle: u32,
    /// Geometric normal of the hit triangle.
    pub normal: Vec3<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bvh<T = f64> {
    nodes: Vec<BvhNode<T>>,
    tri_order: Vec<u32>,
    stats: BuildStats,
}

/// Outcome of a successful centroid split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split<T = f64> {
    pub axis: usize,
    /// Number of triangles placed on the left side.
    pub mid: usize,
    /// Bin boundary index (SAH) or median rank (median split).
    pub boundary: usize,
    /// Splitting plane coordinate along `axis`.
    pub position: T,
    /// SAH cost of the split, when computed.
    pub cost: Option<f64>,
}

/// SAH objective `C_T + (SA_L/SA_P)·N_L·C_I + (SA_R/SA_P)·N_R·C_I`.
#[inline]
pub fn sah_cost(
    sa_parent: f64,
    sa_left: f64,
    sa_right: f64,
    n_left: usize,
    n_right: usize,
    traversal_cost: f64,
    intersection_cost: f64,
) -> f64 {
    traversal_cost
        + (sa_left / sa_parent) * n_left as f64 * intersection_cost
        + (sa_right / sa_parent) * n_right as f64 * intersection_cost
}

fn centroid_bounds<T: Real>(order: &[u32], centroids: &[Vec3<T>]) -> Aabb<T> {
    let mut b = Aabb::empty();
    for &i in order {
        b.grow(centroids[i as usize]);
    }
    b
}

/// Partitions `order` at the median centroid along the longest axis of
/// `node_box`. Ties are broken by triangle index. Returns `None` when fewer
/// than two triangles are given or all centroids coincide.
pub fn median_split<T: Real>(
    order: &mut [u32],
    centroids: &[Vec3<T>],
    node_box: &Aabb<T>,
) -> Option<Split<T>> {
    let n = order.len();
    if n < 2 {
        return None;
    }
    let cb = centroid_bounds(order, centroids);
    if cb.min == cb.max {
        return None;
    }
    let axis = node_box.longest_axis();
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_order(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    Some(Split {
        axis,
        mid,
        boundary: mid,
        position: centroids[order[mid] as usize][axis],
        cost: None,
    })
}

#[derive(Clone, Copy)]
struct Bin<T> {
    count: usize,
    bounds: Aabb<T>,
}

/// Bin index of coordinate `c` given the centroid range `[lo, lo + extent]`.
#[inline]
fn bin_of<T: Real>(c: T, lo: T, extent: T, bins: usize) -> usize {
    let scaled = (c - lo) / extent * T::of(bins as f64);
    let b = scaled.to_f64() as usize;
    b.min(bins - 1)
}

/// Binned SAH split over all three axes.
///
/// Candidates are the interior bin boundaries of the centroid bounds; the
/// cheapest wins, ties going to the lower axis and then the lower boundary.
/// Small nodes (`n ≤ 4·leaf_size`) whose best split is no cheaper than
/// intersecting every triangle (`n·C_I`) stay leaves, reported as `None`.
#[allow(clippy::too_many_arguments)]
pub fn binned_sah_split<T: Real>(
    order: &mut [u32],
    centroids: &[Vec3<T>],
    tri_bounds: &[Aabb<T>],
    node_box: &Aabb<T>,
    bins_per_axis: usize,
    traversal_cost: f64,
    intersection_cost: f64,
    leaf_size: usize,
) -> Option<Split<T>> {
    let n = order.len();
    if n < 2 || bins_per_axis < 2 {
        return None;
    }
    let cb = centroid_bounds(order, centroids);
    let sa_parent = node_box.surface_area().to_f64();
    let empty = Bin {
        count: 0,
        bounds: Aabb::empty(),
    };
    let mut bins = vec![empty; bins_per_axis];
    let mut right_area = vec![0.0f64; bins_per_axis];
    let mut right_count = vec![0usize; bins_per_axis];

    // (cost, axis, boundary)
    let mut best: Option<(f64, usize, usize)> = None;
    for axis in 0..3 {
        let lo = cb.min[axis];
        let extent = cb.max[axis] - lo;
        if !(extent > T::zero()) {
            continue;
        }
        bins.iter_mut().for_each(|b| *b = empty);
        for &i in order.iter() {
            let b = &mut bins[bin_of(centroids[i as usize][axis], lo, extent, bins_per_axis)];
            b.count += 1;
            b.bounds = b.bounds.union(&tri_bounds[i as usize]);
        }
        // Suffix sweep: right side of boundary k covers bins k..
        let mut acc = empty;
        for k in (1..bins_per_axis).rev() {
            acc.count += bins[k].count;
            acc.bounds = acc.bounds.union(&bins[k].bounds);
            right_count[k] = acc.count;
            right_area[k] = acc.bounds.surface_area().to_f64();
        }
        let mut left = empty;
        for k in 1..bins_per_axis {
            left.count += bins[k - 1].count;
            left.bounds = left.bounds.union(&bins[k - 1].bounds);
            if left.count == 0 || right_count[k] == 0 {
                continue;
            }
            let cost = sah_cost(
                sa_parent,
                left.bounds.surface_area().to_f64(),
                right_area[k],
                left.count,
                right_count[k],
                traversal_cost,
                intersection_cost,
            );
            if best.map_or(true, |(c, _, _)| cost < c) {
                best = Some((cost, axis, k));
            }
        }
    }

    let (cost, axis, boundary) = best?;
    if cost >= n as f64 * intersection_cost && n <= 4 * leaf_size {
        return None;
    }
    let lo = cb.min[axis];
    let extent = cb.max[axis] - lo;
    let goes_left =
        |i: u32| bin_of(centroids[i as usize][axis], lo, extent, bins_per_axis) < boundary;
    // Stable partition keeps the permutation independent of sort internals.
    let (left, right): (Vec<u32>, Vec<u32>) = order.iter().partition(|&&i| goes_left(i));
    let mid = left.len();
    order[..mid].copy_from_slice(&left);
    order[mid..].copy_from_slice(&right);
    Some(Split {
        axis,
        mid,
        boundary,
        position: lo + extent * T::of(boundary as f64 / bins_per_axis as f64),
        cost: Some(cost),
    })
}

struct BuildCtx<'a, T> {
    centroids: &'a [Vec3<T>],
    tri_bounds: &'a [Aabb<T>],
    params: &'a BuildParams,
}

impl<T: Real> BuildCtx<'_, T> {
    fn node_bounds(&self, order: &[u32]) -> Aabb<T> {
        order
            .iter()
            .fold(Aabb::empty(), |b, &i| b.union(&self.tri_bounds[i as usize]))
    }

    fn split(&self, order: &mut [u32], node_box: &Aabb<T>) -> Option<Split<T>> {
        let p = self.params;
        match p.split_rule {
            SplitRule::Median => median_split(order, self.centroids, node_box),
            SplitRule::BinnedSah => binned_sah_split(
                order,
                self.centroids,
                self.tri_bounds,
                node_box,
                p.bins_per_axis,
                p.traversal_cost,
                p.intersection_cost,
                p.leaf_size,
            ),
        }
    }

    /// Builds the subtree over `order`, whose first element sits at
    /// `base` in the final triangle array. Child indices in the returned
    /// nodes are relative to the subtree root.
    fn build<J: Join>(
        &self,
        join: &J,
        order: &mut [u32],
        base: u32,
        depth: usize,
    ) -> Vec<BvhNode<T>> {
        let bounds = self.node_bounds(order);
        let leaf = BvhNode {
            bounds,
            kind: NodeKind::Leaf {
                first: base,
                count: order.len() as u32,
            },
        };
        if order.len() <= self.params.leaf_size || depth >= self.params.max_depth {
            return vec![leaf];
        }
        let Some(split) = self.split(order, &bounds) else {
            return vec![leaf];
        };
        let mid = split.mid;
        let (lo, hi) = order.split_at_mut(mid);
        let right_base = base + mid as u32;
        let (left, right) = if lo.len() + hi.len() >= FORK_THRESHOLD {
            join.join(
                || self.build(join, lo, base, depth + 1),
                || self.build(join, hi, right_base, depth + 1),
            )
        } else {
            (
                self.build(&Sequential, lo, base, depth + 1),
                self.build(&Sequential, hi, right_base, depth + 1),
            )
        };

        let right_root = 1 + left.len() as u32;
        let mut nodes = Vec::with_capacity(1 + left.len() + right.len());
        nodes.push(BvhNode {
            bounds,
            kind: NodeKind::Internal {
                left: 1,
                right: right_root,
            },
        });
        relocate_into(&mut nodes, left, 1);
        relocate_into(&mut nodes, right, right_root);
        nodes
    }
}

fn relocate_into<T: Copy>(out: &mut Vec<BvhNode<T>>, sub: Vec<BvhNode<T>>, offset: u32) {
    out.extend(sub.into_iter().map(|mut n| {
        if let NodeKind::Internal { left, right } = &mut n.kind {
            *left += offset;
            *right += offset;
        }
        n
    }));
}

impl<T: Real> Bvh<T> {
    /// Builds on the calling thread.
    pub fn build(mesh: &Mesh<T>, params: &BuildParams) -> Result<Self, BvhError> {
        Self::build_with(mesh, params, &Sequential)
    }

    /// Builds, forking independent subtrees through `join`. The result is
    /// identical to [`Bvh::build`].
    pub fn build_with<J: Join>(
        mesh: &Mesh<T>,
        params: &BuildParams,
        join: &J,
    ) -> Result<Self, BvhError> {
        params.validate()?;
        let tris = mesh.triangles();
        if tris.len() > u32::MAX as usize {
            return Err(BvhError::TooManyTriangles(tris.len()));
        }
        let centroids: Vec<Vec3<T>> = tris.iter().map(|t| t.centroid()).collect();
        let tri_bounds: Vec<Aabb<T>> = tris.iter().map(|t| t.bounds()).collect();
        let mut tri_order: Vec<u32> = (0..tris.len() as u32).collect();
        let ctx = BuildCtx {
            centroids: &centroids,
            tri_bounds: &tri_bounds,
            params,
        };
        let nodes = ctx.build(join, &mut tri_order, 0, 0);
        let stats = compute_stats(&nodes);
        Ok(Self {
            nodes,
            tri_order,
            stats,
        })
    }

    pub fn nodes(&self) -> &[BvhNode<T>] {
        &self.nodes
    }

    /// Permutation of triangle indices; leaves index into this array.
    pub fn tri_order(&self) -> &[u32] {
        &self.tri_order
    }

    pub fn stats(&self) -> &BuildStats {
        &self.stats
    }

    pub fn root_bounds(&self) -> &Aabb<T> {
        &self.nodes[0].bounds
    }

    pub fn closest_hit(
        &self,
        mesh: &Mesh<T>,
        origin: Vec3<T>,
        dir: Vec3<T>,
        t_min: T,
        t_max: T,
    ) -> Option<Hit<T>> {
        let mut visits = 0;
        self.closest_hit_counted(mesh, origin, dir, t_min, t_max, &mut visits)
    }

    /// Closest hit over `(t_min, t_max]`, adding the number of node bounding
    /// boxes tested to `visits`.
    ///
    /// Equal-distance hits resolve to the lowest triangle index, so the
    /// result matches a linear scan over the mesh exactly.
    pub fn closest_hit_counted(
        &self,
        mesh: &Mesh<T>,
        origin: Vec3<T>,
        dir: Vec3<T>,
        t_min: T,
        t_max: T,
        visits: &mut u64,
    ) -> Option<Hit<T>> {
        let tris = mesh.triangles();
        let inv = dir.recip();
        let mut best: Option<Hit<T>> = None;
        let mut best_t = t_max;

        *visits += 1;
        let root_entry = ray_aabb_intersect(origin, inv, &self.nodes[0].bounds, best_t)?;

        let mut stack = [(0u32, T::zero()); MAX_DEPTH + 2];
        stack[0] = (0, root_entry);
        let mut sp = 1;
        while sp > 0 {
            sp -= 1;
            let (index, entry) = stack[sp];
            if entry > best_t {
                continue;
            }
            let node = &self.nodes[index as usize];
            match node.kind {
                NodeKind::Leaf { first, count } => {
                    let range = first as usize..(first + count) as usize;
                    for &tri in &self.tri_order[range] {
                        if let Some((t, normal)) =
                            ray_triangle_intersect(origin, dir, &tris[tri as usize], t_min, best_t)
                        {
                            let better = match best {
                                Some(b) => t < b.t || (t == b.t && tri < b.triangle),
                                None => true,
                            };
                            if better {
                                best_t = t;
                                best = Some(Hit {
                                    t,
                                    triangle: tri,
                                    normal,
                                });
                            }
                        }
                    }
                }
                NodeKind::Internal { left, right } => {
                    *visits += 2;
                    let hl = ray_aabb_intersect(origin, inv, &self.nodes[left as usize].bounds, best_t);
                    let hr =
                        ray_aabb_intersect(origin, inv, &self.nodes[right as usize].bounds, best_t);
                    // Far child first so the near one pops next; ties pop left.
                    match (hl, hr) {
                        (Some(el), Some(er)) => {
                            if el <= er {
                                stack[sp] = (right, er);
                                stack[sp + 1] = (left, el);
                            } else {
                                stack[sp] = (left, el);
                                stack[sp + 1] = (right, er);
                            }
                            sp += 2;
                        }
                        (Some(el), None) => {
                            stack[sp] = (left, el);
                            sp += 1;
                        }
                        (None, Some(er)) => {
                            stack[sp] = (right, er);
                            sp += 1;
                        }
                        (None, None) => {}
                    }
                }
            }
        }
        best
    }
}

fn compute_stats<T>(nodes: &[BvhNode<T>]) -> BuildStats {
    let mut stats = BuildStats {
        node_count: nodes.len(),
        ..BuildStats::default()
    };
    let mut stack = vec![(0u32, 0usize)];
    while let Some((i, depth)) = stack.pop() {
        stats.max_depth = stats.max_depth.max(depth);
        match nodes[i as usize].kind {
            NodeKind::Internal { left, right } => {
                stack.push((left, depth + 1));
                stack.push((right, depth + 1));
            }
            NodeKind::Leaf { count, .. } => {
                let count = count as usize;
                stats.leaf_count += 1;
                if stats.leaf_histogram.len() <= count {
                    stats.leaf_histogram.resize(count + 1, 0);
                }
                stats.leaf_histogram[count] += 1;
            }
        }
    }
    stats
}
