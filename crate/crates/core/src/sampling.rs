//! Farthest point sampling and k-d tree nearest neighbours in k dimensions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

/// Distinct vertex indices chosen by farthest point sampling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSet {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// One index per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for i in &self.indices {
            let _ = writeln!(s, "{i}");
        }
        s
    }
}

/// Greedy Euclidean FPS over the mesh vertices, starting from a vertex drawn
/// with `seed`. Ties go to the smallest index.
pub fn farthest_point_sample(mesh: &TriangleMesh, count: usize, seed: u64) -> Result<SampleSet> {
    farthest_point_sample_points(mesh.vertices(), count, seed)
}

pub fn farthest_point_sample_points(
    points: &[Point3<f64>],
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    let n = points.len();
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "sample count {count} must be in [1, {n}]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut current = rng.gen_range(0..n);
    let mut indices = Vec::with_capacity(count);
    let mut dist = vec![f64::INFINITY; n];
    loop {
        indices.push(current);
        if indices.len() == count {
            break;
        }
        let p = points[current];
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min((points[i] - p).norm_squared());
            if *d > best.0 {
                best = (*d, i);
            }
        }
        current = best.1;
    }
    Ok(SampleSet { indices, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NnMode {
    #[default]
    Exact,
    /// Best-bin-first search limited to a fixed number of leaf visits.
    Approximate,
}

impl std::str::FromStr for NnMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(NnMode::Exact),
            "approx" | "approximate" => Ok(NnMode::Approximate),
            _ => Err(Error::InvalidArgument(format!("unknown NN mode '{s}'"))),
        }
    }
}

/// Leaves visited by an approximate query before it stops backtracking.
pub const DEFAULT_WIDTH: usize = 32;
const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Queued subtree in best-bin-first search: lower bound, node, per-axis offsets.
struct Pending(f64, usize, Vec<f64>);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Min-heap on the bound.
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// k-d tree over the rows of an `m × k` point matrix.
#[derive(Debug, Clone)]
pub struct NnIndex {
    dim: usize,
    /// Row-major copy of the points in tree order.
    points: Vec<f64>,
    /// Original row of each point in tree order.
    ids: Vec<usize>,
    nodes: Vec<Node>,
    mode: NnMode,
    width: usize,
}

/// Builds an index with the default approximate width.
pub fn build_nn(points: &DMatrix<f64>, mode: NnMode) -> Result<NnIndex> {
    NnIndex::new(points, mode, DEFAULT_WIDTH)
}

struct Search<'a> {
    q: &'a [f64],
    off: Vec<f64>,
    best: (f64, usize),
}

impl NnIndex {
    pub fn new(points: &DMatrix<f64>, mode: NnMode, width: usize) -> Result<Self> {
        let (m, dim) = points.shape();
        if m == 0 || dim == 0 {
            return Err(Error::InvalidArgument("cannot index an empty point set".into()));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("points must be finite".into()));
        }
        if width == 0 {
            return Err(Error::InvalidArgument("approximate width must be >= 1".into()));
        }
        let mut ids: Vec<usize> = (0..m).collect();
        let mut nodes = Vec::new();
        build(points, &mut ids, 0, m, &mut nodes);
        let mut flat = Vec::with_capacity(m * dim);
        for &i in &ids {
            flat.extend(points.row(i).iter());
        }
        Ok(Self {
            dim,
            points: flat,
            ids,
            nodes,
            mode,
            width,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn mode(&self) -> NnMode {
        self.mode
    }

    /// Nearest stored point: `(row index, Euclidean distance)`.
    ///
    /// Exact mode returns the true minimizer, smallest index on ties.
    pub fn query(&self, q: &[f64]) -> Result<(usize, f64)> {
        if q.len() != self.dim {
            return Err(Error::Dimension(format!(
                "query has {} coordinates, index has {}",
                q.len(),
                self.dim
            )));
        }
        let mut s = Search {
            q,
            off: vec![0.0; self.dim],
            best: (f64::INFINITY, usize::MAX),
        };
        match self.mode {
            NnMode::Exact => self.visit(0, 0.0, &mut s),
            NnMode::Approximate => self.best_bin_first(&mut s),
        }
        Ok((s.best.1, s.best.0.sqrt()))
    }

    /// Queries every row of `queries`.
    pub fn query_rows(&self, queries: &DMatrix<f64>) -> Result<Vec<(usize, f64)>> {
        if queries.ncols() != self.dim {
            return Err(Error::Dimension(format!(
                "queries have {} coordinates, index has {}",
                queries.ncols(),
                self.dim
            )));
        }
        // Row-major copy so each query is a contiguous slice.
        let flat: Vec<f64> = queries.transpose().as_slice().to_vec();
        flat.par_chunks(self.dim)
            .map(|q| self.query(q))
            .collect()
    }

    fn scan(&self, start: usize, end: usize, s: &mut Search) {
        for slot in start..end {
            let p = &self.points[slot * self.dim..(slot + 1) * self.dim];
            let mut d = 0.0;
            for (a, b) in p.iter().zip(s.q) {
                let t = a - b;
                d += t * t;
                if d > s.best.0 {
                    break;
                }
            }
            let id = self.ids[slot];
            if d < s.best.0 || (d == s.best.0 && id < s.best.1) {
                s.best = (d, id);
            }
        }
    }

    /// Visits leaves in order of their lower-bound distance until `width`
    /// leaves have been scanned.
    fn best_bin_first(&self, s: &mut Search) {
        let mut heap = BinaryHeap::new();
        heap.push(Pending(0.0, 0, vec![0.0; self.dim]));
        let mut leaves = 0;
        while let Some(Pending(rd, mut node, off)) = heap.pop() {
            if rd > s.best.0 {
                break;
            }
            // Descend to a leaf, queueing the far side of each split.
            loop {
                match self.nodes[node] {
                    Node::Leaf { start, end } => {
                        self.scan(start, end, s);
                        break;
                    }
                    Node::Split {
                        dim,
                        value,
                        left,
                        right,
                    } => {
                        let diff = s.q[dim] - value;
                        let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                        let far_rd = rd - off[dim] * off[dim] + diff * diff;
                        if far_rd <= s.best.0 {
                            let mut far_off = off.clone();
                            far_off[dim] = diff;
                            heap.push(Pending(far_rd, far, far_off));
                        }
                        node = near;
                    }
                }
            }
            leaves += 1;
            if leaves >= self.width {
                break;
            }
        }
    }

    fn visit(&self, node: usize, rd: f64, s: &mut Search) {
        match self.nodes[node] {
            Node::Leaf { start, end } => self.scan(start, end, s),
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = s.q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.visit(near, rd, s);
                let old = s.off[dim];
                let far_rd = rd - old * old + diff * diff;
                // `<=` keeps equal-distance candidates reachable for the tie rule;
                // the slack absorbs rounding in the incremental bound.
                if far_rd <= s.best.0 * (1.0 + 1e-12) {
                    s.off[dim] = diff;
                    self.visit(far, far_rd, s);
                    s.off[dim] = old;
                }
            }
        }
    }
}

fn build(points: &DMatrix<f64>, ids: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let me = nodes.len();
    nodes.push(Node::Leaf { start, end });
    if end - start <= LEAF_SIZE {
        return me;
    }
    let slice = &mut ids[start..end];
    let dim = (0..points.ncols())
        .map(|d| {
            let (lo, hi) = slice.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[(i, d)]), hi.max(points[(i, d)]))
            });
            (hi - lo, d)
        })
        .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)))
        .map(|(_, d)| d)
        .unwrap();
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| points[(a, dim)].total_cmp(&points[(b, dim)]));
    let value = points[(slice[mid], dim)];
    let left = build(points, ids, start, start + mid, nodes);
    let right = build(points, ids, start + mid, end, nodes);
    nodes[me] = Node::Split {
        dim,
        value,
        left,
        right,
    };
    me
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_points(xs: &[f64]) -> Vec<Point3<f64>> {
        xs.iter().map(|&x| Point3::new(x, 0.0, 0.0)).collect()
    }

    #[test]
    fn fps_collinear() {
        let pts = line_points(&[0.0, 1.0, 10.0]);
        // Find a seed that starts at x = 0.
        let seed = (0..100)
            .find(|&s| farthest_point_sample_points(&pts, 1, s).unwrap().indices == [0])
            .unwrap();
        let s = farthest_point_sample_points(&pts, 2, seed).unwrap();
        assert_eq!(s.indices, [0, 2]);
        let all = farthest_point_sample_points(&pts, 3, seed).unwrap();
        let mut sorted = all.indices.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, [0, 1, 2]);
        assert!(farthest_point_sample_points(&pts, 0, 0).is_err());
        assert!(farthest_point_sample_points(&pts, 4, 0).is_err());
    }

    #[test]
    fn single_point_index() {
        let idx = build_nn(&DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), NnMode::Exact).unwrap();
        assert_eq!(idx.query(&[0.0, 0.0]).unwrap(), (0, 5.0));
        assert!(idx.query(&[0.0]).is_err());
        assert!(build_nn(&DMatrix::zeros(0, 3), NnMode::Exact).is_err());
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let pts = DMatrix::from_row_slice(4, 1, &[5.0, 1.0, -1.0, 1.0]);
        let idx = build_nn(&pts, NnMode::Exact).unwrap();
        assert_eq!(idx.query(&[0.0]).unwrap().0, 1);
        assert_eq!(idx.query(&[1.0]).unwrap(), (1, 0.0));
    }

    #[test]
    fn nn_mode_parse() {
        assert_eq!("exact".parse::<NnMode>().unwrap(), NnMode::Exact);
        assert_eq!("approx".parse::<NnMode>().unwrap(), NnMode::Approximate);
        assert!("fast".parse::<NnMode>().is_err());
    }
}
