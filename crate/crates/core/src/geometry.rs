//! Intrinsic distances on relational graphs.
//!
//! Two metrics are compared. The hop count of a shortest path collapses as
//! soon as any shortcut appears. The effective-resistance distance averages
//! over all paths: with unit conductances it is the electrical resistance
//! between two vertices, and a weak chord only shifts it a little.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::relgraph::RelationalGraph;

/// Largest graph for which resistance distances are computed (dense solve).
pub const RESISTANCE_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("vertex {0} out of range")]
    InvalidVertex(usize),
    #[error("vertices {0} and {1} are not connected")]
    Unreachable(usize, usize),
    #[error("conductance {0} must be finite and positive")]
    InvalidConductance(f64),
    #[error("({0}, {1}) is not an edge of the graph")]
    UnknownEdge(usize, usize),
    #[error("chord endpoints coincide ({0})")]
    DegenerateChord(usize),
    #[error("resistance needs n <= {cap}, graph has {n} vertices")]
    TooLarge { n: usize, cap: usize },
    #[error("Laplacian factorization failed")]
    SolverError,
}

pub type Result<T> = std::result::Result<T, GeometryError>;

/// Per-edge conductances. Edges not listed conduct 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Conductances {
    values: BTreeMap<(usize, usize), f64>,
}

impl Conductances {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, u: usize, v: usize, w: f64) -> Result<()> {
        if !(w.is_finite() && w > 0.0) {
            return Err(GeometryError::InvalidConductance(w));
        }
        self.values.insert((u.min(v), u.max(v)), w);
        Ok(())
    }

    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values
            .get(&(u.min(v), u.max(v)))
            .copied()
            .unwrap_or(1.0)
    }
}

/// Weighted adjacency used by the resistance computation.
#[derive(Debug, Clone)]
struct Network {
    adj: Vec<Vec<(usize, f64)>>,
}

impl Network {
    fn from_graph(g: &RelationalGraph, weights: Option<&Conductances>) -> Result<Self> {
        let n = g.n_spatial();
        if let Some(w) = weights {
            for &(u, v) in w.values.keys() {
                if !g.has_edge(u, v) {
                    return Err(GeometryError::UnknownEdge(u, v));
                }
            }
        }
        let adj = (0..n)
            .map(|u| {
                g.neighbors(u)
                    .iter()
                    .map(|&v| (v, weights.map_or(1.0, |w| w.get(u, v))))
                    .collect()
            })
            .collect();
        Ok(Self { adj })
    }

    /// Adds conductance `w` in parallel between `u` and `v`.
    fn add_parallel(&mut self, u: usize, v: usize, w: f64) {
        for (a, b) in [(u, v), (v, u)] {
            match self.adj[a].iter_mut().find(|(x, _)| *x == b) {
                Some((_, c)) => *c += w,
                None => self.adj[a].push((b, w)),
            }
        }
    }

    fn connects(&self, x: usize, y: usize) -> bool {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(u) = queue.pop_front() {
            if u == y {
                return true;
            }
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        false
    }

    fn laplacian(&self) -> DMatrix<f64> {
        let n = self.adj.len();
        let mut l = DMatrix::zeros(n, n);
        for (u, row) in self.adj.iter().enumerate() {
            for &(v, w) in row {
                l[(u, v)] -= w;
                l[(u, u)] += w;
            }
        }
        l
    }

    /// Effective resistance between `x` and `y`, solved on the component of `x`.
    fn resistance(&self, x: usize, y: usize) -> Result<f64> {
        if x == y {
            return Ok(0.0);
        }
        if !self.connects(x, y) {
            return Err(GeometryError::Unreachable(x, y));
        }
        let component = self.component(x);
        let index: BTreeMap<usize, usize> =
            component.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let sub = Network {
            adj: component
                .iter()
                .map(|&u| self.adj[u].iter().map(|&(v, w)| (index[&v], w)).collect())
                .collect(),
        };
        let n = sub.adj.len();
        if n > RESISTANCE_CAP {
            return Err(GeometryError::TooLarge {
                n,
                cap: RESISTANCE_CAP,
            });
        }
        // ground y: the reduced Laplacian is positive definite on a connected
        // component, and v_x of L_red v = e_x is the resistance
        let (i, j) = (index[&x], index[&y]);
        let reduced = sub.laplacian().remove_row(j).remove_column(j);
        let i = if i > j { i - 1 } else { i };
        let chol = reduced.cholesky().ok_or(GeometryError::SolverError)?;
        let mut e = DVector::zeros(n - 1);
        e[i] = 1.0;
        Ok(chol.solve(&e)[i])
    }

    fn component(&self, x: usize) -> Vec<usize> {
        let mut seen = vec![false; self.adj.len()];
        let mut queue = VecDeque::from([x]);
        seen[x] = true;
        while let Some(u) = queue.pop_front() {
            for &(v, _) in &self.adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..self.adj.len()).filter(|&v| seen[v]).collect()
    }
}

/// Moore-Penrose pseudoinverse of a connected graph's Laplacian, via
/// `L+ = (L + J/n)^-1 - J/n` with `J` the all-ones matrix.
fn pseudoinverse_of(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let shift = 1.0 / n as f64;
    let shifted = l.map(|a| a + shift);
    let chol = shifted.cholesky().ok_or(GeometryError::SolverError)?;
    Ok(chol.inverse().map(|a| a - shift))
}

/// Laplacian pseudoinverse of a connected graph with optional conductances.
pub fn laplacian_pseudoinverse(
    g: &RelationalGraph,
    weights: Option<&Conductances>,
) -> Result<DMatrix<f64>> {
    let n = g.n_spatial();
    if n > RESISTANCE_CAP {
        return Err(GeometryError::TooLarge {
            n,
            cap: RESISTANCE_CAP,
        });
    }
    let net = Network::from_graph(g, weights)?;
    if let Some(v) = (1..n).find(|&v| !net.connects(0, v)) {
        return Err(GeometryError::Unreachable(0, v));
    }
    pseudoinverse_of(&net.laplacian())
}

fn check_vertex(g: &RelationalGraph, v: usize) -> Result<()> {
    if v < g.n_spatial() {
        Ok(())
    } else {
        Err(GeometryError::InvalidVertex(v))
    }
}

/// Breadth-first hop distances from `source`; `None` marks unreachable.
pub fn hop_distances(g: &RelationalGraph, source: usize) -> Result<Vec<Option<usize>>> {
    check_vertex(g, source)?;
    let mut dist = vec![None; g.n_spatial()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0);
        for &v in g.neighbors(u) {
            if dist[v].is_none() {
                dist[v] = Some(d + 1);
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// Number of relations on a shortest path from `x` to `y`.
pub fn shortest_path_distance(g: &RelationalGraph, x: usize, y: usize) -> Result<usize> {
    check_vertex(g, y)?;
    hop_distances(g, x)?[y].ok_or(GeometryError::Unreachable(x, y))
}

/// Effective resistance between `x` and `y`.
pub fn resistance_distance(
    g: &RelationalGraph,
    x: usize,
    y: usize,
    weights: Option<&Conductances>,
) -> Result<f64> {
    check_vertex(g, x)?;
    check_vertex(g, y)?;
    Network::from_graph(g, weights)?.resistance(x, y)
}

/// How a particle-mediated shortcut enters the spatial graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShortcutMode {
    /// One chord of conductance `w` (one hop).
    #[default]
    Direct,
    /// `x - e1 - e2 - y` folded into two relations of conductance `w` each in
    /// series: effective conductance `w / 2`, two hops.
    TwoHop,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShortcutReport {
    pub d_sp_before: usize,
    pub d_sp_after: usize,
    pub d_res_before: f64,
    pub d_res_after: f64,
    /// Fractional drop of the resistance distance, `(before - after) / before`.
    pub rel_change: f64,
}

impl ShortcutReport {
    pub fn hop_rel_change(&self) -> f64 {
        if self.d_sp_before == 0 {
            0.0
        } else {
            (self.d_sp_before as f64 - self.d_sp_after as f64) / self.d_sp_before as f64
        }
    }

    /// Two rows, `hops` then `resistance`, in the report CSV layout.
    pub fn write_rows<W: Write>(&self, mut out: W, pair: (usize, usize)) -> io::Result<()> {
        let (x, y) = pair;
        writeln!(
            out,
            "{x}-{y},hops,{},{},{:.16e}",
            self.d_sp_before,
            self.d_sp_after,
            self.hop_rel_change()
        )?;
        writeln!(
            out,
            "{x}-{y},resistance,{:.16e},{:.16e},{:.16e}",
            self.d_res_before, self.d_res_after, self.rel_change
        )
    }
}

pub const REPORT_HEADER: &str = "pair,metric,before,after,rel_change";

/// Distances between `x` and `y` before and after adding a chord `(u, v)` of
/// conductance `w`. A zero conductance adds nothing.
pub fn shortcut_impact(
    g: &RelationalGraph,
    x: usize,
    y: usize,
    chord: (usize, usize),
    w: f64,
    mode: ShortcutMode,
) -> Result<ShortcutReport> {
    for v in [x, y, chord.0, chord.1] {
        check_vertex(g, v)?;
    }
    if chord.0 == chord.1 {
        return Err(GeometryError::DegenerateChord(chord.0));
    }
    if !(w.is_finite() && w >= 0.0) {
        return Err(GeometryError::InvalidConductance(w));
    }

    let d_sp_before = shortest_path_distance(g, x, y)?;
    let d_res_before = resistance_distance(g, x, y, None)?;
    if w == 0.0 {
        return Ok(ShortcutReport {
            d_sp_before,
            d_sp_after: d_sp_before,
            d_res_before,
            d_res_after: d_res_before,
            rel_change: 0.0,
        });
    }

    let (chord_w, chord_hops) = match mode {
        ShortcutMode::Direct => (w, 1),
        ShortcutMode::TwoHop => (0.5 * w, 2),
    };
    let mut net = Network::from_graph(g, None)?;
    net.add_parallel(chord.0, chord.1, chord_w);
    let d_res_after = net.resistance(x, y)?;

    let from_x = hop_distances(g, x)?;
    let from_y = hop_distances(g, y)?;
    let via = |a: usize, b: usize| match (from_x[a], from_y[b]) {
        (Some(p), Some(q)) => Some(p + chord_hops + q),
        _ => None,
    };
    let d_sp_after = [
        Some(d_sp_before),
        via(chord.0, chord.1),
        via(chord.1, chord.0),
    ]
    .into_iter()
    .flatten()
    .min()
    .unwrap_or(d_sp_before);

    Ok(ShortcutReport {
        d_sp_before,
        d_sp_after,
        d_res_before,
        d_res_after,
        rel_change: (d_res_before - d_res_after) / d_res_before,
    })
}

/// Resistance-distance column for many sources, sharing one pseudoinverse.
pub fn resistance_matrix(
    g: &RelationalGraph,
    weights: Option<&Conductances>,
) -> Result<DMatrix<f64>> {
    let pinv = laplacian_pseudoinverse(g, weights)?;
    let n = pinv.nrows();
    let diag = DVector::from_iterator(n, (0..n).map(|i| pinv[(i, i)]));
    Ok(DMatrix::from_fn(n, n, |i, j| {
        diag[i] + diag[j] - 2.0 * pinv[(i, j)]
    }))
}
