//! Relational graphs over spatial points, and the generalized adjacency
//! matrix that joins them with quantum objects.
//!
//! A [`RelationalGraph`] holds the 0/1 symmetric relations among spatial
//! points. A [`GeneralizedAdjacency`] adds quantum objects on top: each object
//! carries one complex row of relations to the spatial points (its wave
//! function) and a real row of entanglement strengths to the other objects.
//! Assembled, the three blocks form the Hermitian matrix
//!
//! ```text
//!     [ E    Ψ ]
//!     [ Ψ†   A ]
//! ```
//!
//! with `E` the entanglement block, `Ψ` the wave block and `A` the spatial
//! adjacency.

use std::collections::{BTreeSet, VecDeque};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

/// Default cap on the number of spatial vertices a constructor will allocate.
pub const DEFAULT_MAX_VERTICES: usize = 1_000_000;

/// Amplitude resolution used when keying rows for canonicalization.
pub const CANONICAL_QUANTUM: f64 = 1e-12;

/// Magic header of the canonical byte encoding.
pub const CANONICAL_MAGIC: &[u8; 8] = b"RELADJ01";

/// Above this many candidate orderings of tied rows, canonicalization keeps the
/// sorted order instead of searching.
const MAX_TIE_PERMUTATIONS: usize = 40_320;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("lattice extent along axis {axis} is zero")]
    InvalidDimension { axis: usize },
    #[error("graph would have {requested} vertices, above the cap of {max}")]
    TooLarge { requested: usize, max: usize },
    #[error("line {line}: self-loop {vertex} {vertex} is not a relation")]
    SelfLoopRejected { line: usize, vertex: usize },
    #[error("line {line}: cannot parse {token:?}")]
    ParseError { line: usize, token: String },
    #[error("edge list defines no vertices")]
    Empty,
    #[error("spatial vertex {0} does not exist")]
    UnknownVertex(usize),
    #[error("quantum object {0} does not exist")]
    UnknownObject(usize),
    #[error("an object cannot be entangled with itself ({0})")]
    SelfRelation(usize),
    #[error("entanglement strength {0} outside [0, 1]")]
    InvalidStrength(f64),
    #[error("amplitude at vertex {vertex} is not finite")]
    NonFiniteAmplitude { vertex: usize },
    #[error("cannot normalize an all-zero wave row")]
    ZeroNorm,
}

pub type Result<T> = std::result::Result<T, GraphError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VertexKind {
    SpatialPoint,
    QuantumObject,
}

/// A vertex of the generalized adjacency structure. Indices are dense within
/// each kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexId {
    kind: VertexKind,
    index: usize,
}

impl VertexId {
    pub fn spatial(index: usize) -> Self {
        Self {
            kind: VertexKind::SpatialPoint,
            index,
        }
    }

    pub fn object(index: usize) -> Self {
        Self {
            kind: VertexKind::QuantumObject,
            index,
        }
    }

    pub fn kind(&self) -> VertexKind {
        self.kind
    }

    pub fn index(&self) -> usize {
        self.index
    }
}

/// Spatial points and their symmetric 0/1 relations.
///
/// The graph is immutable once built. Connectivity is computed at
/// construction and exposed through [`RelationalGraph::is_connected`];
/// constructors accept disconnected inputs and leave the flag unset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationalGraph {
    neighbors: Vec<Vec<usize>>,
    n_edges: usize,
    connected: bool,
}

impl RelationalGraph {
    /// Builds a graph over `n` vertices. Duplicate and reversed edges collapse
    /// into one relation.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut set = BTreeSet::new();
        for (u, v) in edges {
            if u == v {
                return Err(GraphError::SelfLoopRejected { line: 0, vertex: u });
            }
            if u >= n {
                return Err(GraphError::UnknownVertex(u));
            }
            if v >= n {
                return Err(GraphError::UnknownVertex(v));
            }
            set.insert((u.min(v), u.max(v)));
        }
        Ok(Self::from_pair_set(n, &set))
    }

    fn from_pair_set(n: usize, set: &BTreeSet<(usize, usize)>) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in set {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for row in &mut neighbors {
            row.sort_unstable();
        }
        let connected = bfs_reaches_all(&neighbors);
        Self {
            neighbors,
            n_edges: set.len(),
            connected,
        }
    }

    pub fn n_spatial(&self) -> usize {
        self.neighbors.len()
    }

    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n_spatial() && self.neighbors[u].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(u, row)| row.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// Entry `A(x, y)` of the spatial adjacency.
    pub fn adjacency(&self, x: usize, y: usize) -> u8 {
        u8::from(self.has_edge(x, y))
    }

    pub fn adjacency_dense(&self) -> DMatrix<f64> {
        let n = self.n_spatial();
        let mut a = DMatrix::zeros(n, n);
        for (u, v) in self.edges() {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// Returns a copy with the relations of `v` removed. The vertex itself
    /// stays, so indices remain stable.
    pub fn isolate(&self, v: usize) -> Result<Self> {
        if v >= self.n_spatial() {
            return Err(GraphError::UnknownVertex(v));
        }
        let set: BTreeSet<_> = self.edges().filter(|&(a, b)| a != v && b != v).collect();
        Ok(Self::from_pair_set(self.n_spatial(), &set))
    }

    /// Serializes to the edge-list text format. A `# vertices N` line records
    /// the vertex count so trailing isolated vertices survive a round trip.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("# vertices {}\n", self.n_spatial());
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        out
    }
}

fn bfs_reaches_all(neighbors: &[Vec<usize>]) -> bool {
    let n = neighbors.len();
    if n == 0 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = queue.pop_front() {
        for &v in &neighbors[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                queue.push_back(v);
            }
        }
    }
    count == n
}

/// Hypercubic nearest-neighbor lattice. The first axis varies fastest, so the
/// vertex at coordinates `(c0, c1, ..)` has index `c0 + d0 * (c1 + d1 * ..)`.
pub fn build_lattice(dims: &[usize], periodic: bool) -> Result<RelationalGraph> {
    build_lattice_capped(dims, periodic, DEFAULT_MAX_VERTICES)
}

pub fn build_lattice_capped(
    dims: &[usize],
    periodic: bool,
    max_vertices: usize,
) -> Result<RelationalGraph> {
    if dims.is_empty() {
        return Err(GraphError::InvalidDimension { axis: 0 });
    }
    let mut n: usize = 1;
    for (axis, &d) in dims.iter().enumerate() {
        if d == 0 {
            return Err(GraphError::InvalidDimension { axis });
        }
        n = n.checked_mul(d).ok_or(GraphError::TooLarge {
            requested: usize::MAX,
            max: max_vertices,
        })?;
    }
    if n > max_vertices {
        return Err(GraphError::TooLarge {
            requested: n,
            max: max_vertices,
        });
    }

    let mut set = BTreeSet::new();
    let mut stride = 1;
    for &d in dims {
        for v in 0..n {
            let c = (v / stride) % d;
            if c + 1 < d {
                let u = v + stride;
                set.insert((v, u));
            } else if periodic && d > 1 {
                let u = v + stride - d * stride;
                if u != v {
                    set.insert((v.min(u), v.max(u)));
                }
            }
        }
        stride *= d;
    }
    Ok(RelationalGraph::from_pair_set(n, &set))
}

/// Parses the edge-list text format: one `u v` pair per line, 0-based,
/// `#` starts a comment line. A comment of the form `# vertices N` sets a
/// lower bound on the vertex count.
pub fn from_edge_list(text: &str) -> Result<RelationalGraph> {
    from_edge_list_capped(text, DEFAULT_MAX_VERTICES)
}

pub fn from_edge_list_capped(text: &str, max_vertices: usize) -> Result<RelationalGraph> {
    let mut set = BTreeSet::new();
    let mut n = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut words = comment.split_whitespace();
            if words.next() == Some("vertices") {
                let token = words.next().unwrap_or("");
                let count: usize = token.parse().map_err(|_| GraphError::ParseError {
                    line: line_no,
                    token: token.to_string(),
                })?;
                n = n.max(count);
            }
            continue;
        }
        let mut tokens = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            let tok = tok.unwrap_or("");
            tok.parse::<usize>().map_err(|_| GraphError::ParseError {
                line: line_no,
                token: tok.to_string(),
            })
        };
        let u = parse(tokens.next())?;
        let v = parse(tokens.next())?;
        if let Some(extra) = tokens.next() {
            return Err(GraphError::ParseError {
                line: line_no,
                token: extra.to_string(),
            });
        }
        if u == v {
            return Err(GraphError::SelfLoopRejected {
                line: line_no,
                vertex: u,
            });
        }
        let hi = u.max(v);
        if hi >= max_vertices {
            return Err(GraphError::TooLarge {
                requested: hi.saturating_add(1),
                max: max_vertices,
            });
        }
        n = n.max(hi + 1);
        set.insert((u.min(v), hi));
    }
    if n == 0 {
        return Err(GraphError::Empty);
    }
    if n > max_vertices {
        return Err(GraphError::TooLarge {
            requested: n,
            max: max_vertices,
        });
    }
    Ok(RelationalGraph::from_pair_set(n, &set))
}

/// Spatial relations plus quantum objects: wave rows and entanglement strengths.
///
/// Every operation returns a new value; the spatial block is shared and never
/// modified.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedAdjacency {
    spatial: Arc<RelationalGraph>,
    wave: Vec<Vec<Complex64>>,
    entangle: Vec<Vec<f64>>,
}

impl GeneralizedAdjacency {
    /// A structure with spatial points only.
    pub fn new(spatial: impl Into<Arc<RelationalGraph>>) -> Self {
        Self {
            spatial: spatial.into(),
            wave: Vec::new(),
            entangle: Vec::new(),
        }
    }

    pub fn spatial(&self) -> &RelationalGraph {
        &self.spatial
    }

    pub fn n_spatial(&self) -> usize {
        self.spatial.n_spatial()
    }

    pub fn n_objects(&self) -> usize {
        self.wave.len()
    }

    pub fn wave_row(&self, object: usize) -> Option<&[Complex64]> {
        self.wave.get(object).map(Vec::as_slice)
    }

    pub fn entanglement(&self, e1: usize, e2: usize) -> Option<f64> {
        self.entangle.get(e1).and_then(|row| row.get(e2)).copied()
    }

    /// Adds one quantum object whose relations to the spatial points are the
    /// given amplitudes. Unlisted vertices get amplitude zero; a repeated
    /// vertex keeps its last value.
    pub fn attach_particle<I>(&self, amplitudes: I, normalize: bool) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, Complex64)>,
    {
        let n = self.n_spatial();
        let mut row = vec![Complex64::new(0.0, 0.0); n];
        for (x, a) in amplitudes {
            if x >= n {
                return Err(GraphError::UnknownVertex(x));
            }
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(GraphError::NonFiniteAmplitude { vertex: x });
            }
            row[x] = a;
        }
        if normalize {
            let norm = row.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(GraphError::ZeroNorm);
            }
            for a in &mut row {
                *a /= norm;
            }
        }

        let mut next = self.clone();
        next.wave.push(row);
        for r in &mut next.entangle {
            r.push(0.0);
        }
        next.entangle.push(vec![0.0; next.wave.len()]);
        Ok(next)
    }

    /// Sets the entanglement strength between two objects. Zero means no
    /// relation; a later call overwrites an earlier one.
    pub fn add_entanglement_edge(&self, e1: usize, e2: usize, strength: f64) -> Result<Self> {
        let m = self.n_objects();
        if e1 >= m {
            return Err(GraphError::UnknownObject(e1));
        }
        if e2 >= m {
            return Err(GraphError::UnknownObject(e2));
        }
        if e1 == e2 {
            return Err(GraphError::SelfRelation(e1));
        }
        if !(0.0..=1.0).contains(&strength) {
            return Err(GraphError::InvalidStrength(strength));
        }
        let mut next = self.clone();
        next.entangle[e1][e2] = strength;
        next.entangle[e2][e1] = strength;
        Ok(next)
    }

    /// Relabels quantum objects: object `i` of `self` becomes object `perm[i]`.
    ///
    /// # Panics
    /// If `perm` is not a permutation of `0..n_objects`.
    pub fn permute_objects(&self, perm: &[usize]) -> Self {
        let m = self.n_objects();
        assert_eq!(perm.len(), m, "permutation length");
        let mut seen = vec![false; m];
        for &p in perm {
            assert!(p < m && !seen[p], "not a permutation");
            seen[p] = true;
        }
        let mut wave = vec![Vec::new(); m];
        let mut entangle = vec![vec![0.0; m]; m];
        for i in 0..m {
            wave[perm[i]] = self.wave[i].clone();
            for j in 0..m {
                entangle[perm[i]][perm[j]] = self.entangle[i][j];
            }
        }
        Self {
            spatial: Arc::clone(&self.spatial),
            wave,
            entangle,
        }
    }

    /// The full matrix, objects first then spatial points.
    pub fn assemble(&self) -> DMatrix<Complex64> {
        let m = self.n_objects();
        let n = self.n_spatial();
        let mut full = DMatrix::from_element(m + n, m + n, Complex64::new(0.0, 0.0));
        for i in 0..m {
            for j in 0..m {
                full[(i, j)] = Complex64::new(self.entangle[i][j], 0.0);
            }
            for x in 0..n {
                full[(i, m + x)] = self.wave[i][x];
                full[(m + x, i)] = self.wave[i][x].conj();
            }
        }
        for (u, v) in self.spatial.edges() {
            full[(m + u, m + v)] = Complex64::new(1.0, 0.0);
            full[(m + v, m + u)] = Complex64::new(1.0, 0.0);
        }
        full
    }

    /// Byte encoding that is identical for structures differing only by a
    /// relabeling of quantum objects.
    ///
    /// Layout, all integers little-endian:
    ///
    /// ```text
    /// magic "RELADJ01"
    /// u64 n_spatial, u64 n_edges, n_edges × (u64 u, u64 v)   edges with u < v, sorted
    /// u64 n_objects
    /// n_objects × n_spatial × (i64 re, i64 im)              wave rows, canonical order
    /// n_objects × n_objects × i64                           entanglement block, row-major
    /// ```
    ///
    /// Amplitudes and strengths are stored as integer multiples of
    /// [`CANONICAL_QUANTUM`].
    pub fn canonical_form(&self) -> Vec<u8> {
        let order = self.canonical_order();
        self.encode_with_order(&order)
    }

    fn canonical_order(&self) -> Vec<usize> {
        let m = self.n_objects();
        let keys: Vec<(Vec<(i64, i64)>, Vec<i64>)> = (0..m)
            .map(|i| {
                let wave = self.wave[i]
                    .iter()
                    .map(|a| (quantize(a.re), quantize(a.im)))
                    .collect();
                let mut ent: Vec<i64> = self.entangle[i].iter().map(|&s| quantize(s)).collect();
                ent.sort_unstable();
                (wave, ent)
            })
            .collect();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));

        // Rows with equal keys can still differ through the entanglement
        // block; pick the ordering of each tie group that minimizes it.
        let mut groups = Vec::new();
        let mut start = 0;
        for i in 1..=m {
            if i == m || keys[order[i]] != keys[order[start]] {
                if i - start > 1 {
                    groups.push((start, i));
                }
                start = i;
            }
        }
        if groups.is_empty() {
            return order;
        }
        let total = groups
            .iter()
            .try_fold(1usize, |acc, &(s, e)| acc.checked_mul(factorial(e - s)))
            .unwrap_or(usize::MAX);
        if total > MAX_TIE_PERMUTATIONS {
            return order;
        }

        let mut best = order.clone();
        let mut best_block = self.entangle_block_key(&best);
        let mut current = order;
        self.search_ties(&groups, 0, &mut current, &mut best, &mut best_block);
        best
    }

    fn search_ties(
        &self,
        groups: &[(usize, usize)],
        g: usize,
        current: &mut Vec<usize>,
        best: &mut Vec<usize>,
        best_block: &mut Vec<i64>,
    ) {
        if g == groups.len() {
            let block = self.entangle_block_key(current);
            if block < *best_block {
                *best_block = block;
                best.clone_from(current);
            }
            return;
        }
        let (s, e) = groups[g];
        let original: Vec<usize> = current[s..e].to_vec();
        for perm in permutations(e - s) {
            for (k, &p) in perm.iter().enumerate() {
                current[s + k] = original[p];
            }
            self.search_ties(groups, g + 1, current, best, best_block);
        }
        current[s..e].copy_from_slice(&original);
    }

    fn entangle_block_key(&self, order: &[usize]) -> Vec<i64> {
        order
            .iter()
            .flat_map(|&i| order.iter().map(move |&j| quantize(self.entangle[i][j])))
            .collect()
    }

    fn encode_with_order(&self, order: &[usize]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CANONICAL_MAGIC);
        out.extend_from_slice(&(self.n_spatial() as u64).to_le_bytes());
        out.extend_from_slice(&(self.spatial.n_edges() as u64).to_le_bytes());
        for (u, v) in self.spatial.edges() {
            out.extend_from_slice(&(u as u64).to_le_bytes());
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        out.extend_from_slice(&(order.len() as u64).to_le_bytes());
        for &i in order {
            for a in &self.wave[i] {
                out.extend_from_slice(&quantize(a.re).to_le_bytes());
                out.extend_from_slice(&quantize(a.im).to_le_bytes());
            }
        }
        for q in self.entangle_block_key(order) {
            out.extend_from_slice(&q.to_le_bytes());
        }
        out
    }
}

/// Free-function form of [`GeneralizedAdjacency::attach_particle`] for a graph
/// with no objects yet.
pub fn attach_particle<I>(
    g: &RelationalGraph,
    amplitudes: I,
    normalize: bool,
) -> Result<GeneralizedAdjacency>
where
    I: IntoIterator<Item = (usize, Complex64)>,
{
    GeneralizedAdjacency::new(g.clone()).attach_particle(amplitudes, normalize)
}

fn quantize(x: f64) -> i64 {
    let q = (x / CANONICAL_QUANTUM).round();
    // -0.0 and 0.0 must key identically
    if q == 0.0 {
        0
    } else {
        q as i64
    }
}

fn factorial(k: usize) -> usize {
    (1..=k)
        .try_fold(1usize, |acc, i| acc.checked_mul(i))
        .unwrap_or(usize::MAX)
}

/// All permutations of `0..k` in lexicographic order.
pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..k).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..k).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn path_of_two() {
        let g = build_lattice(&[2], false).unwrap();
        assert_eq!(
            g.adjacency_dense(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
    }

    #[test]
    fn triangle_ring_degrees() {
        let g = build_lattice(&[3], true).unwrap();
        assert_eq!(g.degrees(), vec![2, 2, 2]);
    }

    #[test]
    fn periodic_torus_degrees_match_neighbor_count() {
        let g = build_lattice(&[4, 4], true).unwrap();
        // brute-force: count coordinates at wrapped Manhattan distance 1
        for v in 0..16 {
            let (x, y) = (v % 4, v / 4);
            let count = (0..16)
                .filter(|&u| {
                    let (a, b) = (u % 4, u / 4);
                    let dx = (x as i32 - a as i32)
                        .rem_euclid(4)
                        .min((a as i32 - x as i32).rem_euclid(4));
                    let dy = (y as i32 - b as i32)
                        .rem_euclid(4)
                        .min((b as i32 - y as i32).rem_euclid(4));
                    dx + dy == 1
                })
                .count();
            assert_eq!(g.degree(v), count);
            assert_eq!(count, 4);
        }
    }

    #[test]
    fn lattice_errors() {
        assert_eq!(
            build_lattice(&[3, 0], false),
            Err(GraphError::InvalidDimension { axis: 1 })
        );
        assert_eq!(
            build_lattice_capped(&[10, 10], false, 50),
            Err(GraphError::TooLarge {
                requested: 100,
                max: 50
            })
        );
        assert!(build_lattice(&[1000, 1000, 2], false).is_err());
    }

    #[test]
    fn degenerate_periodic_axes() {
        assert_eq!(build_lattice(&[1], true).unwrap().n_edges(), 0);
        assert_eq!(build_lattice(&[2], true).unwrap().n_edges(), 1);
    }

    #[test]
    fn edge_list_basics() {
        let g = from_edge_list("0 1\n1 2").unwrap();
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        let g = from_edge_list("0 1\n1 0\n").unwrap();
        assert_eq!(g.n_edges(), 1);
        let g = from_edge_list("# a comment\n\n  2 0  \n").unwrap();
        assert_eq!(g.n_spatial(), 3);
        assert!(!g.is_connected());
    }

    #[test]
    fn edge_list_errors() {
        assert_eq!(
            from_edge_list("0 1\n2 2\n"),
            Err(GraphError::SelfLoopRejected { line: 2, vertex: 2 })
        );
        assert_eq!(
            from_edge_list("0 1\n1 x\n"),
            Err(GraphError::ParseError {
                line: 2,
                token: "x".into()
            })
        );
        assert_eq!(
            from_edge_list("0 -1\n"),
            Err(GraphError::ParseError {
                line: 1,
                token: "-1".into()
            })
        );
        assert!(matches!(
            from_edge_list("0\n"),
            Err(GraphError::ParseError { line: 1, .. })
        ));
        assert!(matches!(
            from_edge_list("0 1 2\n"),
            Err(GraphError::ParseError { line: 1, .. })
        ));
        assert_eq!(from_edge_list("# nothing\n"), Err(GraphError::Empty));
    }

    #[test]
    fn vertices_pragma_keeps_isolated_vertices() {
        let g = from_edge_list("# vertices 5\n0 1\n").unwrap();
        assert_eq!(g.n_spatial(), 5);
        let g = from_edge_list("# vertices 1\n").unwrap();
        assert_eq!(g.n_spatial(), 1);
        assert!(g.is_connected());
    }

    #[test]
    fn localized_particle() {
        let g = build_lattice(&[5], false).unwrap();
        let ga = attach_particle(&g, [(2, c(1.0, 0.0))], true).unwrap();
        let row = ga.wave_row(0).unwrap();
        assert_eq!(row[2], c(1.0, 0.0));
        assert_eq!(row.iter().filter(|a| a.norm() > 0.0).count(), 1);
    }

    #[test]
    fn particle_at_two_places() {
        let g = build_lattice(&[20], false).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let ga = attach_particle(&g, [(1, c(h, 0.0)), (18, c(h, 0.0))], true).unwrap();
        let m = ga.assemble();
        // the object is an immediate neighbor of both far-apart points
        assert!(m[(0, 1 + 1)].norm() > 0.0);
        assert!(m[(0, 1 + 18)].norm() > 0.0);
        assert_eq!(m[(0, 1 + 1)], c(h, 0.0));
    }

    #[test]
    fn normalization_flag() {
        let g = build_lattice(&[3], false).unwrap();
        let ga = attach_particle(&g, [(0, c(3.0, 0.0)), (1, c(0.0, 4.0))], true).unwrap();
        assert!((ga.wave_row(0).unwrap()[1] - c(0.0, 0.8)).norm() < 1e-15);
        let raw = attach_particle(&g, [(0, c(3.0, 0.0))], false).unwrap();
        assert_eq!(raw.wave_row(0).unwrap()[0], c(3.0, 0.0));
        assert_eq!(attach_particle(&g, [], true), Err(GraphError::ZeroNorm));
        assert_eq!(
            attach_particle(&g, [(3, c(1.0, 0.0))], true),
            Err(GraphError::UnknownVertex(3))
        );
        assert_eq!(
            attach_particle(&g, [(1, c(f64::NAN, 0.0))], true),
            Err(GraphError::NonFiniteAmplitude { vertex: 1 })
        );
    }

    #[test]
    fn entanglement_edges() {
        let g = build_lattice(&[4], false).unwrap();
        let ga = attach_particle(&g, [(0, c(1.0, 0.0))], true)
            .unwrap()
            .attach_particle([(3, c(1.0, 0.0))], true)
            .unwrap();
        let one = ga.add_entanglement_edge(0, 1, 1.0).unwrap();
        assert_eq!(one.entanglement(0, 1), Some(1.0));
        assert_eq!(one.entanglement(1, 0), Some(1.0));
        let zero = ga.add_entanglement_edge(0, 1, 0.0).unwrap();
        assert_eq!(zero.assemble(), ga.assemble());
        let again = one.add_entanglement_edge(1, 0, 0.5).unwrap();
        assert_eq!(again.entanglement(0, 1), Some(0.5));
        assert_eq!(again.entanglement(1, 0), Some(0.5));
        assert_eq!(
            ga.add_entanglement_edge(0, 1, 1.5),
            Err(GraphError::InvalidStrength(1.5))
        );
        assert_eq!(
            ga.add_entanglement_edge(0, 1, -0.1),
            Err(GraphError::InvalidStrength(-0.1))
        );
        assert!(ga.add_entanglement_edge(0, 1, f64::NAN).is_err());
        assert_eq!(
            ga.add_entanglement_edge(1, 1, 0.5),
            Err(GraphError::SelfRelation(1))
        );
        assert_eq!(
            ga.add_entanglement_edge(0, 2, 0.5),
            Err(GraphError::UnknownObject(2))
        );
    }

    #[test]
    fn assembled_matrix_is_hermitian() {
        let g = build_lattice(&[8], true).unwrap();
        let amps: Vec<_> = (0..8)
            .map(|x| (x, c((x as f64).sin(), (1.3 * x as f64).cos())))
            .collect();
        let ga = attach_particle(&g, amps, true).unwrap();
        let m = ga.assemble();
        assert_eq!(m, m.adjoint());
    }

    #[test]
    fn canonical_form_of_single_particle_is_stable() {
        let g = build_lattice(&[4], false).unwrap();
        let ga = attach_particle(&g, [(1, c(1.0, 0.0))], true).unwrap();
        let bytes = ga.canonical_form();
        assert_eq!(&bytes[..8], CANONICAL_MAGIC);
        assert_eq!(bytes, ga.permute_objects(&[0]).canonical_form());
    }

    #[test]
    fn exchanged_identical_particles_encode_equal() {
        // two particles with relations to different points, then exchanged
        let g = build_lattice(&[7], false).unwrap();
        let base = GeneralizedAdjacency::new(g);
        let a = base
            .attach_particle([(0, c(1.0, 0.0)), (1, c(1.0, 0.0))], true)
            .unwrap()
            .attach_particle([(5, c(1.0, 0.0)), (6, c(1.0, 0.0))], true)
            .unwrap();
        let b = base
            .attach_particle([(5, c(1.0, 0.0)), (6, c(1.0, 0.0))], true)
            .unwrap()
            .attach_particle([(0, c(1.0, 0.0)), (1, c(1.0, 0.0))], true)
            .unwrap();
        assert_ne!(a, b);
        assert_eq!(a.canonical_form(), b.canonical_form());
    }

    #[test]
    fn tied_rows_resolved_by_entanglement_pattern() {
        // four particles at the same place; the entanglement graph is a path
        // 0-1-2-3, relabeled arbitrarily
        let g = build_lattice(&[2], false).unwrap();
        let mut ga = GeneralizedAdjacency::new(g);
        for _ in 0..4 {
            ga = ga.attach_particle([(0, c(1.0, 0.0))], true).unwrap();
        }
        let ga = ga
            .add_entanglement_edge(0, 1, 1.0)
            .unwrap()
            .add_entanglement_edge(1, 2, 1.0)
            .unwrap()
            .add_entanglement_edge(2, 3, 1.0)
            .unwrap();
        let reference = ga.canonical_form();
        for perm in permutations(4) {
            assert_eq!(ga.permute_objects(&perm).canonical_form(), reference);
        }
        // a star has the same sorted rows for the leaves but is not isomorphic
        let star = GeneralizedAdjacency::new(build_lattice(&[2], false).unwrap());
        let mut star = star;
        for _ in 0..4 {
            star = star.attach_particle([(0, c(1.0, 0.0))], true).unwrap();
        }
        let star = star
            .add_entanglement_edge(0, 1, 1.0)
            .unwrap()
            .add_entanglement_edge(0, 2, 1.0)
            .unwrap()
            .add_entanglement_edge(0, 3, 1.0)
            .unwrap();
        assert_ne!(star.canonical_form(), reference);
    }

    #[test]
    fn edge_list_round_trip() {
        let g = build_lattice(&[3, 4], true).unwrap();
        assert_eq!(from_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn lexicographic_permutations() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(0), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn isolate_keeps_indices() {
        let g = build_lattice(&[3], false).unwrap();
        let h = g.isolate(1).unwrap();
        assert_eq!(h.n_spatial(), 3);
        assert_eq!(h.n_edges(), 0);
        assert!(!h.is_connected());
    }
}
