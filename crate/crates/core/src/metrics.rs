//! Map quality measures: geodesic accuracy, coverage, bijectivity, edge
//! distortion and Dirichlet smoothness.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmap::PointMap;
use crate::mesh::{EdgeSet, TriangleMesh};
use crate::spectral::LaplacianPair;

/// Edge-graph shortest-path distances from a list of source vertices.
#[derive(Debug, Clone)]
pub struct GeodesicTable {
    sources: Vec<usize>,
    row_of: HashMap<usize, usize>,
    n: usize,
    distances: Vec<f64>,
}

impl GeodesicTable {
    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Distances from `source` to every vertex, if it was a source.
    pub fn row(&self, source: usize) -> Option<&[f64]> {
        self.row_of
            .get(&source)
            .map(|&r| &self.distances[r * self.n..(r + 1) * self.n])
    }

    /// `d(a, b)`, looked up from either endpoint. Unreachable pairs are `+∞`.
    pub fn distance(&self, a: usize, b: usize) -> Result<f64> {
        if let Some(row) = self.row(a) {
            return row.get(b).copied().ok_or(Error::OutOfRange { index: b, len: self.n });
        }
        if let Some(row) = self.row(b) {
            return row.get(a).copied().ok_or(Error::OutOfRange { index: a, len: self.n });
        }
        Err(Error::InvalidArgument(format!(
            "no geodesics from vertex {a} or {b} in this table"
        )))
    }

    /// True if some source cannot reach some vertex.
    pub fn has_unreachable(&self) -> bool {
        self.distances.iter().any(|d| d.is_infinite())
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn dijkstra(adj: &[Vec<(usize, f64)>], s: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[s] = 0.0;
    heap.push(Entry(0.0, s));
    while let Some(Entry(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Entry(nd, v));
            }
        }
    }
    dist
}

/// Dijkstra over mesh edges weighted by Euclidean length, one run per source.
pub fn dijkstra_geodesics(mesh: &TriangleMesh, edges: &EdgeSet, sources: &[usize]) -> Result<GeodesicTable> {
    let n = mesh.n();
    if let Some(&bad) = sources.iter().find(|&&s| s >= n) {
        return Err(Error::OutOfRange { index: bad, len: n });
    }
    let adj = edges.adjacency(n);
    let mut sources_dedup = Vec::with_capacity(sources.len());
    let mut row_of = HashMap::with_capacity(sources.len());
    for &s in sources {
        if let std::collections::hash_map::Entry::Vacant(e) = row_of.entry(s) {
            e.insert(sources_dedup.len());
            sources_dedup.push(s);
        }
    }
    let rows: Vec<Vec<f64>> = sources_dedup.par_iter().map(|&s| dijkstra(&adj, s)).collect();
    let table = GeodesicTable {
        sources: sources_dedup,
        row_of,
        n,
        distances: rows.concat(),
    };
    if table.has_unreachable() {
        log::warn!("mesh is disconnected: some geodesic distances are infinite");
    }
    Ok(table)
}

/// Geodesics from every vertex.
pub fn all_pairs_geodesics(mesh: &TriangleMesh) -> Result<GeodesicTable> {
    let all: Vec<usize> = (0..mesh.n()).collect();
    dijkstra_geodesics(mesh, &mesh.edge_set(), &all)
}

fn same_len(a: &PointMap, b: &PointMap, what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{what}: maps have {} and {} entries",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

fn check_normalizer(normalizer: f64) -> Result<()> {
    if !(normalizer > 0.0 && normalizer.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "normalizer must be positive, got {normalizer}"
        )));
    }
    Ok(())
}

/// Mean of `d_N(T(p), T_gt(p)) / normalizer`.
pub fn accuracy(map: &PointMap, gt: &PointMap, geo_n: &GeodesicTable, normalizer: f64) -> Result<f64> {
    same_len(map, gt, "accuracy")?;
    check_normalizer(normalizer)?;
    if map.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (&t, &g) in map.targets().iter().zip(gt.targets()) {
        sum += geo_n.distance(g, t)?;
    }
    Ok(sum / (map.len() as f64 * normalizer))
}

/// Per-vertex errors `d_N(T(p), T_gt(p)) / normalizer`.
pub fn accuracy_per_vertex(map: &PointMap, gt: &PointMap, geo_n: &GeodesicTable, normalizer: f64) -> Result<Vec<f64>> {
    same_len(map, gt, "accuracy")?;
    check_normalizer(normalizer)?;
    map.targets()
        .iter()
        .zip(gt.targets())
        .map(|(&t, &g)| Ok(geo_n.distance(g, t)? / normalizer))
        .collect()
}

/// Percentage of target vertices not hit by the map.
pub fn uncoverage(map: &PointMap, mesh_n: &TriangleMesh) -> Result<f64> {
    let hit = image_mask(map, mesh_n.n())?;
    let missed = hit.iter().filter(|h| !**h).count();
    Ok(100.0 * missed as f64 / mesh_n.n() as f64)
}

/// Area-weighted variant: percentage of the lumped target area not hit.
pub fn uncoverage_area(map: &PointMap, lap_n: &LaplacianPair) -> Result<f64> {
    let hit = image_mask(map, lap_n.n())?;
    let total: f64 = lap_n.mass.iter().sum();
    let missed: f64 = hit
        .iter()
        .zip(&lap_n.mass)
        .filter(|(h, _)| !**h)
        .map(|(_, a)| a)
        .sum();
    Ok(100.0 * missed / total)
}

fn image_mask(map: &PointMap, n: usize) -> Result<Vec<bool>> {
    if n == 0 {
        return Err(Error::InvalidArgument("target mesh has no vertices".into()));
    }
    let mut hit = vec![false; n];
    for &t in map.targets() {
        *hit.get_mut(t).ok_or(Error::OutOfRange { index: t, len: n })? = true;
    }
    Ok(hit)
}

/// Mean of `d_M(T_NM(T_MN(p)), p) / normalizer`.
pub fn bijectivity(map_mn: &PointMap, map_nm: &PointMap, geo_m: &GeodesicTable, normalizer: f64) -> Result<f64> {
    check_normalizer(normalizer)?;
    let round = map_mn.then(map_nm)?;
    if round.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (p, &q) in round.targets().iter().enumerate() {
        sum += geo_m.distance(p, q)?;
    }
    Ok(sum / (round.len() as f64 * normalizer))
}

/// Mean over edges `(v_i, v_j)` of M of `(d_N(T(v_i), T(v_j)) / |v_i v_j| − 1)²`.
pub fn edge_distortion(map: &PointMap, edges_m: &EdgeSet, geo_n: &GeodesicTable) -> Result<f64> {
    if edges_m.is_empty() {
        return Ok(0.0);
    }
    let t = map.targets();
    let mut sum = 0.0;
    for e in edges_m.iter() {
        let (ta, tb) = (
            *t.get(e.a).ok_or(Error::OutOfRange { index: e.a, len: t.len() })?,
            *t.get(e.b).ok_or(Error::OutOfRange { index: e.b, len: t.len() })?,
        );
        let d = if ta == tb { 0.0 } else { geo_n.distance(ta, tb)? };
        let r = d / e.length - 1.0;
        sum += r * r;
    }
    Ok(sum / edges_m.len() as f64)
}

/// Dirichlet energy of the target coordinates (scaled by `1/√area_N`) pulled
/// back to M through the map, averaged over the three coordinates.
pub fn dirichlet_energy(map: &PointMap, lap_m: &LaplacianPair, mesh_n: &TriangleMesh) -> Result<f64> {
    if map.len() != lap_m.n() {
        return Err(Error::Dimension(format!(
            "map has {} entries, source has {} vertices",
            map.len(),
            lap_m.n()
        )));
    }
    let scale = 1.0 / mesh_n.total_area().sqrt();
    let v = mesh_n.vertices();
    let mut total = 0.0;
    for c in 0..3 {
        let f = map
            .targets()
            .iter()
            .map(|&t| {
                v.get(t)
                    .map(|p| p[c] * scale)
                    .ok_or(Error::OutOfRange { index: t, len: v.len() })
            })
            .collect::<Result<Vec<f64>>>()?;
        total += lap_m.dirichlet(&f);
    }
    Ok(total / 3.0)
}

/// Default error normalizer: `√(total area)` of the target.
pub fn default_normalizer(mesh_n: &TriangleMesh) -> f64 {
    mesh_n.total_area().sqrt()
}

/// Summary of one map. Accuracy needs a ground truth and bijectivity a reverse
/// map; they are `None` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub accuracy_mean: Option<f64>,
    pub uncoverage_percent: f64,
    pub bijectivity_mean: Option<f64>,
    pub edge_distortion_mean: f64,
    pub dirichlet: f64,
}

/// Inputs to [`evaluate`].
pub struct EvalInputs<'a> {
    pub mesh_m: &'a TriangleMesh,
    pub mesh_n: &'a TriangleMesh,
    pub map: &'a PointMap,
    pub map_reverse: Option<&'a PointMap>,
    pub gt: Option<&'a PointMap>,
    /// `None` uses [`default_normalizer`].
    pub normalizer: Option<f64>,
    pub area_uncoverage: bool,
}

/// Computes every applicable metric. Geodesics on N are computed only from the
/// vertices the metrics touch.
pub fn evaluate(inp: &EvalInputs<'_>) -> Result<MapReport> {
    let (mm, mn) = (inp.mesh_m, inp.mesh_n);
    if inp.map.len() != mm.n() {
        return Err(Error::Dimension(format!(
            "map has {} entries, source has {} vertices",
            inp.map.len(),
            mm.n()
        )));
    }
    PointMap::new(inp.map.targets().to_vec(), mn.n())?;
    let normalizer = inp.normalizer.unwrap_or_else(|| default_normalizer(mn));
    let lap_m = crate::spectral::cotan_laplacian(mm);
    let edges_m = mm.edge_set();

    // Every distance on N is measured from an image vertex T(p), or from a
    // ground-truth target when computing accuracy.
    let mut src_n: Vec<usize> = inp.map.targets().to_vec();
    if let Some(gt) = inp.gt {
        same_len(inp.map, gt, "accuracy")?;
        src_n.extend_from_slice(gt.targets());
    }
    src_n.sort_unstable();
    src_n.dedup();
    let geo_n = dijkstra_geodesics(mn, &mn.edge_set(), &src_n)?;

    let accuracy_mean = inp
        .gt
        .map(|gt| accuracy(inp.map, gt, &geo_n, normalizer))
        .transpose()?;
    let bijectivity_mean = match inp.map_reverse {
        Some(rev) => {
            PointMap::new(rev.targets().to_vec(), mm.n())?;
            let round = inp.map.then(rev)?;
            let mut src_m = round.targets().to_vec();
            src_m.sort_unstable();
            src_m.dedup();
            let geo_m = dijkstra_geodesics(mm, &edges_m, &src_m)?;
            Some(bijectivity(inp.map, rev, &geo_m, normalizer)?)
        }
        None => None,
    };
    let uncoverage_percent = if inp.area_uncoverage {
        uncoverage_area(inp.map, &crate::spectral::cotan_laplacian(mn))?
    } else {
        uncoverage(inp.map, mn)?
    };
    Ok(MapReport {
        accuracy_mean,
        uncoverage_percent,
        bijectivity_mean,
        edge_distortion_mean: edge_distortion(inp.map, &edges_m, &geo_n)?,
        dirichlet: dirichlet_energy(inp.map, &lap_m, mn)?,
    })
}
