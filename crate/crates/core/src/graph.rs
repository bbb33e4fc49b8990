//! Networks: geometric random graphs on the unit square, ingestion from CSV,
//! and friend-count summaries.

use std::collections::HashMap;
use std::io::Read;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dgp::count_treated_neighbors;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Default friendship radius of the simulation design.
pub const DEFAULT_RADIUS: f64 = 0.025;

/// Unit locations in `[0,1]^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionSet {
    coords: Vec<[f64; 2]>,
}

impl PositionSet {
    pub fn new(coords: Vec<[f64; 2]>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("position set must be nonempty"));
        }
        for (i, c) in coords.iter().enumerate() {
            if !c.iter().all(|v| (0.0..=1.0).contains(v)) {
                return Err(Error::invalid(format!(
                    "position {i} = ({}, {}) lies outside the unit square",
                    c[0], c[1]
                )));
            }
        }
        Ok(Self { coords })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }
}

/// Draws `n` i.i.d. uniform points on the unit square.
pub fn generate_positions(n: usize, seed: u64) -> Result<PositionSet> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let coords = (0..n)
        .map(|_| [rng.random::<f64>(), rng.random::<f64>()])
        .collect();
    Ok(PositionSet { coords })
}

/// Undirected simple graph over units `0..n`.
///
/// Edges are stored once as `(i, j)` with `i < j`, sorted lexicographically;
/// neighbor lists are kept in compressed-row form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "NetworkRepr", try_from = "NetworkRepr")]
pub struct Network {
    n: usize,
    radius: Option<f64>,
    edges: Vec<(u32, u32)>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkRepr {
    n: usize,
    radius: Option<f64>,
    edges: Vec<[u32; 2]>,
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            n: net.n,
            radius: net.radius,
            edges: net.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(repr: NetworkRepr) -> Result<Self> {
        Network::from_edges(
            repr.n,
            repr.edges.into_iter().map(|[a, b]| (a as usize, b as usize)),
            repr.radius,
        )
    }
}

impl Network {
    /// Builds a network from an arbitrary edge list. Reversed duplicates are
    /// merged; self-loops and out-of-range endpoints are rejected.
    pub fn from_edges<I>(n: usize, edges: I, radius: Option<f64>) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        if n > u32::MAX as usize {
            return Err(Error::invalid("too many nodes"));
        }
        let mut list = Vec::new();
        for (a, b) in edges {
            if a >= n || b >= n {
                return Err(Error::invalid(format!(
                    "edge ({a}, {b}) references a node outside 0..{n}"
                )));
            }
            if a == b {
                return Err(Error::invalid(format!("self-loop at node {a}")));
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            list.push((lo as u32, hi as u32));
        }
        list.sort_unstable();
        list.dedup();

        let mut degree = vec![0usize; n];
        for &(a, b) in &list {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(a, b) in &list {
            neighbors[fill[a as usize]] = b;
            fill[a as usize] += 1;
            neighbors[fill[b as usize]] = a;
            fill[b as usize] += 1;
        }
        for i in 0..n {
            neighbors[offsets[i]..offsets[i + 1]].sort_unstable();
        }

        Ok(Self {
            n,
            radius,
            edges: list,
            offsets,
            neighbors,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Radius used to build the network; `None` for ingested networks.
    pub fn radius(&self) -> Option<f64> {
        self.radius
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Friend count `F_i`.
    pub fn degree(&self, i: usize) -> u32 {
        (self.offsets[i + 1] - self.offsets[i]) as u32
    }

    pub fn degrees(&self) -> Vec<u32> {
        (0..self.n).map(|i| self.degree(i)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Connects every pair of units whose Euclidean distance is at most `radius`.
///
/// Points are bucketed into a uniform grid whose cells are no smaller than
/// the radius, so only the 3x3 block of cells around a point is scanned.
/// There is no wraparound at the square's edges.
pub fn build_geometric_network(positions: &PositionSet, radius: f64) -> Result<Network> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let pts = positions.coords();
    let n = pts.len();
    let r2 = radius * radius;

    let max_cells = ((n as f64).sqrt().ceil() as usize * 2).max(1);
    let k = ((1.0 / radius).floor() as usize).clamp(1, max_cells);
    let cell_of = |v: f64| ((v * k as f64) as usize).min(k - 1);

    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); k * k];
    for (i, p) in pts.iter().enumerate() {
        buckets[cell_of(p[1]) * k + cell_of(p[0])].push(i as u32);
    }

    let mut edges = Vec::new();
    for (i, p) in pts.iter().enumerate() {
        let (cx, cy) = (cell_of(p[0]), cell_of(p[1]));
        for y in cy.saturating_sub(1)..=(cy + 1).min(k - 1) {
            for x in cx.saturating_sub(1)..=(cx + 1).min(k - 1) {
                for &j in &buckets[y * k + x] {
                    let j = j as usize;
                    if j <= i {
                        continue;
                    }
                    let q = pts[j];
                    let (dx, dy) = (p[0] - q[0], p[1] - q[1]);
                    if dx * dx + dy * dy <= r2 {
                        edges.push((i, j));
                    }
                }
            }
        }
    }
    Network::from_edges(n, edges, Some(radius))
}

/// All-pairs construction; the reference for [`build_geometric_network`].
pub fn build_geometric_network_brute_force(
    positions: &PositionSet,
    radius: f64,
) -> Result<Network> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let pts = positions.coords();
    let r2 = radius * radius;
    let mut edges = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            let (dx, dy) = (pts[i][0] - pts[j][0], pts[i][1] - pts[j][1]);
            if dx * dx + dy * dy <= r2 {
                edges.push((i, j));
            }
        }
    }
    Network::from_edges(pts.len(), edges, Some(radius))
}

/// Friend-count (and optionally treated-friend-count) moments over the units
/// with at least one friend. Moments are zero when no unit is retained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSummary {
    pub n: usize,
    pub retained: usize,
    pub retained_fraction: f64,
    pub mean_f: f64,
    pub sd_f: f64,
    pub max_f: u32,
    pub mean_t: Option<f64>,
    pub sd_t: Option<f64>,
}

pub(crate) fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    if count == 1 {
        return (mean, 0.0);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (count - 1) as f64).sqrt())
}

pub fn degree_stats(network: &Network, treatment: Option<&[u8]>) -> Result<DegreeSummary> {
    let degrees = network.degrees();
    let retained: Vec<usize> = (0..network.n()).filter(|&i| degrees[i] > 0).collect();
    let (mean_f, sd_f) = mean_sd(retained.iter().map(|&i| degrees[i] as f64));
    let max_f = retained.iter().map(|&i| degrees[i]).max().unwrap_or(0);

    let (mean_t, sd_t) = match treatment {
        Some(d) => {
            let t = count_treated_neighbors(network, d)?;
            let (m, s) = mean_sd(retained.iter().map(|&i| t[i] as f64));
            (Some(m), Some(s))
        }
        None => (None, None),
    };

    Ok(DegreeSummary {
        n: network.n(),
        retained: retained.len(),
        retained_fraction: retained.len() as f64 / network.n().max(1) as f64,
        mean_f,
        sd_f,
        max_f,
        mean_t,
        sd_t,
    })
}

/// Searches for the radius at which the mean friend count among units with
/// `F > 0` equals `target` on the given positions (bisection, 60 steps).
pub fn calibrate_radius(positions: &PositionSet, target_mean_f: f64) -> Result<f64> {
    if !(target_mean_f >= 1.0) {
        return Err(Error::invalid("target mean friend count must be at least 1"));
    }
    let mean_at = |r: f64| -> Result<f64> {
        let net = build_geometric_network(positions, r)?;
        Ok(degree_stats(&net, None)?.mean_f)
    };
    let (mut lo, mut hi) = (1e-9_f64, std::f64::consts::SQRT_2);
    if mean_at(hi)? < target_mean_f {
        return Err(Error::invalid(format!(
            "target mean friend count {target_mean_f} exceeds what {} units can reach",
            positions.len()
        )));
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid)? < target_mean_f {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// A network read from CSV files together with the external node ids, in
/// file order (node `k` of the network has id `ids[k]`).
#[derive(Debug, Clone)]
pub struct IngestedNetwork {
    pub network: Network,
    pub ids: Vec<i64>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse {
            row: 0,
            msg: format!("missing `{name}` column in header"),
        })
}

fn parse_id(record: &csv::StringRecord, col: usize, row: usize) -> Result<i64> {
    let raw = record.get(col).unwrap_or("").trim();
    raw.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("`{raw}` is not an integer id"),
    })
}

pub(crate) fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source)
}

/// Reads a nodes CSV (column `id`, other columns ignored) and an edges CSV
/// (columns `src,dst`).
pub fn ingest_network<N: Read, E: Read>(nodes: N, edges: E) -> Result<IngestedNetwork> {
    let mut rdr = csv_reader(nodes);
    let id_col = column_index(rdr.headers()?, "id")?;
    let mut ids = Vec::new();
    let mut index = HashMap::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let id = parse_id(&rec?, id_col, row)?;
        if index.insert(id, ids.len()).is_some() {
            return Err(Error::Parse {
                row,
                msg: format!("duplicate node id {id}"),
            });
        }
        ids.push(id);
    }

    let mut rdr = csv_reader(edges);
    let headers = rdr.headers()?.clone();
    let (src_col, dst_col) = (column_index(&headers, "src")?, column_index(&headers, "dst")?);
    let mut pairs = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec?;
        let (src, dst) = (parse_id(&rec, src_col, row)?, parse_id(&rec, dst_col, row)?);
        let lookup = |id: i64| {
            index.get(&id).copied().ok_or_else(|| Error::Parse {
                row,
                msg: format!("edge references unknown node id {id}"),
            })
        };
        let (a, b) = (lookup(src)?, lookup(dst)?);
        if a == b {
            return Err(Error::Parse {
                row,
                msg: format!("self-loop on node id {src}"),
            });
        }
        pairs.push((a, b));
    }

    let network = Network::from_edges(ids.len(), pairs, None)?;
    Ok(IngestedNetwork { network, ids })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positions(coords: &[[f64; 2]]) -> PositionSet {
        PositionSet::new(coords.to_vec()).unwrap()
    }

    #[test]
    fn single_position_is_in_unit_square() {
        let p = generate_positions(1, 99).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.coords()[0].iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn positions_are_deterministic() {
        assert_eq!(generate_positions(5, 3).unwrap(), generate_positions(5, 3).unwrap());
        assert_ne!(generate_positions(5, 3).unwrap(), generate_positions(5, 4).unwrap());
    }

    #[test]
    fn zero_units_rejected() {
        assert!(matches!(generate_positions(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn uniform_mean_is_one_half() {
        // E[U(0,1)] = 1/2, sd 1/sqrt(12); 0.005 is > 5 standard errors at n = 1e5.
        let p = generate_positions(100_000, 2024).unwrap();
        let mean_x = p.coords().iter().map(|c| c[0]).sum::<f64>() / 1e5;
        let mean_y = p.coords().iter().map(|c| c[1]).sum::<f64>() / 1e5;
        assert!((mean_x - 0.5).abs() < 0.005, "{mean_x}");
        assert!((mean_y - 0.5).abs() < 0.005, "{mean_y}");
    }

    #[test]
    fn far_apart_pair_has_no_edge() {
        let net = build_geometric_network(&positions(&[[0.1, 0.1], [0.9, 0.9]]), 0.025).unwrap();
        assert_eq!(net.degrees(), vec![0, 0]);
    }

    #[test]
    fn chain_within_radius() {
        let p = positions(&[[0.5, 0.5], [0.51, 0.5], [0.52, 0.5]]);
        let net = build_geometric_network(&p, 0.0125).unwrap();
        assert_eq!(net.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn distance_equal_to_radius_is_a_friend() {
        let p = positions(&[[0.0, 0.0], [0.5, 0.0]]);
        let net = build_geometric_network(&p, 0.5).unwrap();
        assert_eq!(net.edge_count(), 1);
    }

    #[test]
    fn no_wraparound() {
        let p = positions(&[[0.001, 0.5], [0.999, 0.5]]);
        assert_eq!(build_geometric_network(&p, 0.025).unwrap().edge_count(), 0);
    }

    #[test]
    fn nonpositive_radius_rejected() {
        let p = positions(&[[0.5, 0.5]]);
        assert!(build_geometric_network(&p, 0.0).is_err());
        assert!(build_geometric_network(&p, -1.0).is_err());
    }

    #[test]
    fn empty_edge_network_retains_nothing() {
        let net = Network::from_edges(3, vec![], None).unwrap();
        let s = degree_stats(&net, None).unwrap();
        assert_eq!(s.retained_fraction, 0.0);
        assert_eq!(s.retained, 0);
    }

    #[test]
    fn degree_stats_length_mismatch() {
        let net = Network::from_edges(3, vec![(0, 1)], None).unwrap();
        assert!(degree_stats(&net, Some(&[1, 0])).is_err());
    }

    #[test]
    fn degree_stats_small_example() {
        // Path 0-1-2 plus isolated 3; d = (1,0,1,0) gives T = (0,2,0,0).
        let net = Network::from_edges(4, vec![(0, 1), (1, 2)], None).unwrap();
        let s = degree_stats(&net, Some(&[1, 0, 1, 0])).unwrap();
        assert_eq!(s.retained, 3);
        assert!((s.retained_fraction - 0.75).abs() < 1e-15);
        assert!((s.mean_f - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.max_f, 2);
        assert!((s.mean_t.unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ingest_basic() {
        let nodes = "id\n1\n2\n3\n";
        let edges = "src,dst\n1,2\n";
        let g = ingest_network(nodes.as_bytes(), edges.as_bytes()).unwrap();
        assert_eq!(g.network.degrees(), vec![1, 1, 0]);
        assert_eq!(g.ids, vec![1, 2, 3]);
    }

    #[test]
    fn ingest_dedups_reversed_edges() {
        let g = ingest_network("id\n1\n2\n".as_bytes(), "src,dst\n1,2\n2,1\n".as_bytes()).unwrap();
        assert_eq!(g.network.edge_count(), 1);
    }

    #[test]
    fn ingest_rejects_self_loop() {
        let err = ingest_network("id\n1\n".as_bytes(), "src,dst\n1,1\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("self-loop"), "{err}");
    }

    #[test]
    fn ingest_rejects_unknown_id_with_row() {
        let err = ingest_network("id\n1\n2\n".as_bytes(), "src,dst\n1,2\n2,9\n".as_bytes())
            .unwrap_err();
        match err {
            Error::Parse { row, msg } => {
                assert_eq!(row, 2);
                assert!(msg.contains('9'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_rejects_duplicate_node() {
        let err = ingest_network("id\n1\n1\n".as_bytes(), "src,dst\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn json_round_trip() {
        let p = generate_positions(300, 11).unwrap();
        let net = build_geometric_network(&p, 0.08).unwrap();
        let back = Network::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(net, back);
    }

    #[test]
    fn calibration_hits_target() {
        let p = generate_positions(2000, 5).unwrap();
        let r = calibrate_radius(&p, 4.2).unwrap();
        let s = degree_stats(&build_geometric_network(&p, r).unwrap(), None).unwrap();
        assert!((s.mean_f - 4.2).abs() < 0.01, "{}", s.mean_f);
    }
}
