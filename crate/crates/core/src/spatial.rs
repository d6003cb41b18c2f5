//! Exact nearest-neighbour search and the Match score.

use crate::cloud::{PermutationMap, PointCloud};
use crate::error::{Error, Result};

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// A k-d tree with median splits over the columns of a cloud.
///
/// Queries are exact and deterministic: among equidistant points the lowest
/// column index wins.
#[derive(Debug, Clone)]
pub struct NeighborIndex {
    dim: usize,
    /// Coordinates in column order, copied from the target.
    coords: Vec<f64>,
    /// Column indices arranged so each leaf owns a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

impl NeighborIndex {
    pub fn build(target: &PointCloud) -> Self {
        Self::with_leaf_size(target, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(target: &PointCloud, leaf_size: usize) -> Self {
        let dim = target.dim();
        let coords = target.matrix().as_slice().to_vec();
        let mut order: Vec<usize> = (0..target.len()).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        let root = build_node(&coords, dim, &mut order, 0, n, leaf_size.max(1), &mut nodes);
        Self {
            dim,
            coords,
            order,
            nodes,
            root,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Index of the nearest stored point and its Euclidean distance.
    pub fn nearest(&self, query: &[f64]) -> Result<(usize, f64)> {
        if query.len() != self.dim {
            return Err(Error::invalid(format!(
                "query of dimension {} against index of dimension {}",
                query.len(),
                self.dim
            )));
        }
        let (i, d2) = self.nearest_squared(query);
        Ok((i, d2.sqrt()))
    }

    /// Nearest stored point and squared distance. `query.len()` must equal `dim`.
    pub(crate) fn nearest_squared(&self, query: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, query, &mut best);
        best
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn search(&self, node: usize, query: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d2 = squared_distance(query, self.point(i));
                    if d2 < best.1 || (d2 == best.1 && i < best.0) {
                        *best = (i, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, query, best);
                // Equality keeps the far side alive so index tie-breaks stay exact.
                if diff * diff <= best.1 {
                    self.search(far, query, best);
                }
            }
        }
    }
}

fn build_node(
    coords: &[f64],
    dim: usize,
    order: &mut [usize],
    start: usize,
    end: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let count = end - start;
    if count <= leaf_size {
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }
    let slice = &mut order[start..end];
    // Split along the axis of largest extent.
    let mut axis = 0;
    let mut widest = f64::NEG_INFINITY;
    for a in 0..dim {
        let (lo, hi) = slice
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = coords[i * dim + a];
                (lo.min(v), hi.max(v))
            });
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    if widest <= 0.0 {
        // All points coincide; no split can separate them.
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }
    let mid = count / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| {
        coords[a * dim + axis]
            .total_cmp(&coords[b * dim + axis])
            .then(a.cmp(&b))
    });
    let value = coords[slice[mid] * dim + axis];
    // Left holds everything ordered before `mid`, so coordinates there are <= value
    // and coordinates on the right are >= value.
    let left = build_node(coords, dim, order, start, start + mid, leaf_size, nodes);
    let right = build_node(coords, dim, order, start + mid, end, leaf_size, nodes);
    nodes.push(Node::Split {
        axis,
        value,
        left,
        right,
    });
    nodes.len() - 1
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let t = x - y;
        s += t * t;
    }
    s
}

/// Nearest-neighbour assignment of a source cloud into a target.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub assignment: PermutationMap,
    /// Root mean square of the per-point nearest distances.
    pub score: f64,
    /// Squared nearest distance for each source point.
    pub squared_distances: Vec<f64>,
}

fn check_dims(source: &PointCloud, target_dim: usize) -> Result<()> {
    if source.dim() != target_dim {
        return Err(Error::invalid(format!(
            "dimension mismatch: source {} vs target {}",
            source.dim(),
            target_dim
        )));
    }
    Ok(())
}

/// For every source column its nearest target column, scored by the RMS of
/// the nearest distances.
pub fn match_score(source: &PointCloud, target: &PointCloud) -> Result<MatchResult> {
    check_dims(source, target.dim())?;
    match_against(source, &NeighborIndex::build(target))
}

/// [`match_score`] against a prebuilt index.
pub fn match_against(source: &PointCloud, index: &NeighborIndex) -> Result<MatchResult> {
    check_dims(source, index.dim())?;
    let mut assignment = Vec::with_capacity(source.len());
    let mut squared_distances = Vec::with_capacity(source.len());
    for p in source.points() {
        let (j, d2) = index.nearest_squared(p);
        assignment.push(j);
        squared_distances.push(d2);
    }
    let score = rms(&squared_distances);
    Ok(MatchResult {
        assignment: PermutationMap::matching(assignment),
        score,
        squared_distances,
    })
}

/// Symmetric variant: RMS over the nearest distances in both directions.
pub fn symmetric_match_score(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let ab = match_score(a, b)?;
    let ba = match_score(b, a)?;
    let total: f64 = ab
        .squared_distances
        .iter()
        .chain(&ba.squared_distances)
        .sum();
    Ok((total / (a.len() + b.len()) as f64).sqrt())
}

pub(crate) fn rms(squared: &[f64]) -> f64 {
    if squared.is_empty() {
        return 0.0;
    }
    (squared.iter().sum::<f64>() / squared.len() as f64).sqrt()
}
