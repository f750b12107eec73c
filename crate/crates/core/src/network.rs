//! Graphs with Euclidean edges and directed stream trees.
//!
//! A [`Network`] is a finite simple connected graph whose edges are line
//! segments of a stated length. Locations are addressed by an edge and an
//! offset measured from the edge's tail vertex. When an outlet is declared the
//! network must be a tree whose edges all point downstream (tail to head)
//! towards the outlet; this enables flow relations and tail-up weights.

use std::collections::{BinaryHeap, HashMap, HashSet};
use std::cmp::Ordering;
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use thiserror::Error;

/// Relative mismatch above which an omega value is reported as non-additive.
const OMEGA_ADDITIVITY_RTOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network has no edges")]
    Empty,
    #[error("network is disconnected (vertex `{0}` unreachable)")]
    Disconnected(String),
    #[error("edge `{0}` is a self-edge")]
    SelfEdge(String),
    #[error("edges `{0}` and `{1}` join the same pair of vertices")]
    MultiEdge(String, String),
    #[error("edge `{0}` has nonpositive length {1}")]
    NonpositiveLength(String, f64),
    #[error("edge `{0}` has nonpositive omega {1}")]
    NonpositiveOmega(String, f64),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdgeId(String),
    #[error("directed network is not a tree: {0}")]
    NotATree(String),
    #[error("bad outlet: {0}")]
    BadOutlet(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("Laplacian is singular (network disconnected)")]
    SingularLaplacian,
    #[error("operation requires a directed tree with an outlet")]
    NotDirected,
    #[error("points are not flow-connected")]
    FlowUnconnectedPair,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// One edge of the network. For directed trees `head` is the downstream end.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: f64,
    pub omega: f64,
}

impl Edge {
    pub fn new(id: impl Into<String>, tail: impl Into<String>, head: impl Into<String>, length: f64, omega: f64) -> Self {
        Self { id: id.into(), tail: tail.into(), head: head.into(), length, omega }
    }
}

/// A location on the network: an edge index plus an offset from the tail vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointOnNetwork {
    pub edge: usize,
    pub offset: f64,
}

impl PointOnNetwork {
    pub fn new(edge: usize, offset: f64) -> Self {
        Self { edge, offset }
    }
}

/// How two points relate with respect to flow on a directed tree.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowRelation {
    SamePoint,
    /// One point lies on the other's downstream path; `d` is the stream distance.
    FlowConnected { d: f64 },
    /// Neither point is downstream of the other. `a <= b` are the distances to
    /// the common downstream junction and `d = a + b`.
    FlowUnconnected { d: f64, a: f64, b: f64 },
}

impl FlowRelation {
    pub fn distance(&self) -> f64 {
        match *self {
            FlowRelation::SamePoint => 0.0,
            FlowRelation::FlowConnected { d } => d,
            FlowRelation::FlowUnconnected { d, .. } => d,
        }
    }

    pub fn is_connected(&self) -> bool {
        !matches!(self, FlowRelation::FlowUnconnected { .. })
    }
}

/// Immutable network with precomputed vertex distances.
#[derive(Debug, Clone)]
pub struct Network {
    vertices: Vec<String>,
    edges: Vec<Edge>,
    outlet: Option<usize>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    /// (tail, head) vertex indices per edge.
    ends: Vec<(usize, usize)>,
    adjacency: Vec<Vec<(usize, usize)>>,
    vertex_dist: Vec<Vec<f64>>,
    directed: Option<DirectedInfo>,
}

#[derive(Debug, Clone)]
struct DirectedInfo {
    /// Edge leaving each vertex downstream; `None` for the outlet.
    down_edge: Vec<Option<usize>>,
    /// Stream distance from each vertex to the outlet.
    dist_to_outlet: Vec<f64>,
}

impl Network {
    /// Build and validate a network. Supplying an outlet makes it a directed tree.
    pub fn new(edges: Vec<Edge>, outlet: Option<&str>) -> Result<Self, NetworkError> {
        if edges.is_empty() {
            return Err(NetworkError::Empty);
        }
        let mut vertices = Vec::new();
        let mut vertex_index = HashMap::new();
        let mut edge_index = HashMap::new();
        let mut ends = Vec::with_capacity(edges.len());
        for (k, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id.clone(), k).is_some() {
                return Err(NetworkError::DuplicateEdgeId(e.id.clone()));
            }
            let mut intern = |name: &str| -> usize {
                *vertex_index.entry(name.to_string()).or_insert_with(|| {
                    vertices.push(name.to_string());
                    vertices.len() - 1
                })
            };
            let t = intern(&e.tail);
            let h = intern(&e.head);
            ends.push((t, h));
        }
        let mut adjacency = vec![Vec::new(); vertices.len()];
        for (k, &(t, h)) in ends.iter().enumerate() {
            adjacency[t].push((k, h));
            if t != h {
                adjacency[h].push((k, t));
            }
        }
        let outlet = match outlet {
            Some(name) => Some(
                *vertex_index
                    .get(name)
                    .ok_or_else(|| NetworkError::BadOutlet(format!("outlet `{name}` is not a vertex")))?,
            ),
            None => None,
        };
        let mut net = Network {
            vertices,
            edges,
            outlet,
            vertex_index,
            edge_index,
            ends,
            adjacency,
            vertex_dist: Vec::new(),
            directed: None,
        };
        net.validate()?;
        net.vertex_dist = (0..net.vertices.len()).map(|v| net.dijkstra(v)).collect();
        if net.outlet.is_some() {
            net.directed = Some(net.directed_info());
            for w in net.omega_additivity_warnings() {
                log::warn!("{w}");
            }
        }
        Ok(net)
    }

    /// Check the structural invariants: simple, connected, positive lengths and
    /// omegas, and for directed networks a tree oriented towards the outlet.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut pairs: HashMap<(usize, usize), usize> = HashMap::new();
        for (k, e) in self.edges.iter().enumerate() {
            let (t, h) = self.ends[k];
            if t == h {
                return Err(NetworkError::SelfEdge(e.id.clone()));
            }
            if !(e.length > 0.0) || !e.length.is_finite() {
                return Err(NetworkError::NonpositiveLength(e.id.clone(), e.length));
            }
            if !(e.omega > 0.0) || !e.omega.is_finite() {
                return Err(NetworkError::NonpositiveOmega(e.id.clone(), e.omega));
            }
            let key = (t.min(h), t.max(h));
            if let Some(&other) = pairs.get(&key) {
                return Err(NetworkError::MultiEdge(self.edges[other].id.clone(), e.id.clone()));
            }
            pairs.insert(key, k);
        }
        let mut seen = vec![false; self.vertices.len()];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(_, w) in &self.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Disconnected(self.vertices[v].clone()));
        }
        if let Some(outlet) = self.outlet {
            if self.edges.len() + 1 != self.vertices.len() {
                return Err(NetworkError::NotATree(format!(
                    "{} edges for {} vertices",
                    self.edges.len(),
                    self.vertices.len()
                )));
            }
            let mut out_degree = vec![0usize; self.vertices.len()];
            for &(t, _) in &self.ends {
                out_degree[t] += 1;
            }
            if out_degree[outlet] != 0 {
                return Err(NetworkError::BadOutlet(format!(
                    "outlet `{}` has an outgoing edge",
                    self.vertices[outlet]
                )));
            }
            if let Some(v) = (0..self.vertices.len()).find(|&v| v != outlet && out_degree[v] != 1) {
                return Err(NetworkError::BadOutlet(format!(
                    "vertex `{}` has {} downstream edges; every edge must point towards the outlet",
                    self.vertices[v], out_degree[v]
                )));
            }
        }
        Ok(())
    }

    /// Junctions where omega is not the sum of the incoming edges' omegas.
    pub fn omega_additivity_warnings(&self) -> Vec<String> {
        let Some(info) = &self.directed else { return Vec::new() };
        let mut inflow = vec![0.0; self.vertices.len()];
        let mut has_inflow = vec![false; self.vertices.len()];
        for (k, &(_, h)) in self.ends.iter().enumerate() {
            inflow[h] += self.edges[k].omega;
            has_inflow[h] = true;
        }
        let mut out = Vec::new();
        for (v, down) in info.down_edge.iter().enumerate() {
            if let (Some(e), true) = (down, has_inflow[v]) {
                let omega = self.edges[*e].omega;
                if (omega - inflow[v]).abs() > OMEGA_ADDITIVITY_RTOL * omega.max(inflow[v]) {
                    out.push(format!(
                        "omega on edge `{}` is {omega} but upstream edges at `{}` sum to {}",
                        self.edges[*e].id, self.vertices[v], inflow[v]
                    ));
                }
            }
        }
        out
    }

    fn dijkstra(&self, source: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct State(f64, usize);
        impl Eq for State {}
        impl PartialOrd for State {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }
        impl Ord for State {
            fn cmp(&self, other: &Self) -> Ordering {
                other.0.total_cmp(&self.0).then_with(|| self.1.cmp(&other.1))
            }
        }
        let mut dist = vec![f64::INFINITY; self.vertices.len()];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(State(0.0, source));
        while let Some(State(d, v)) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(e, w) in &self.adjacency[v] {
                let nd = d + self.edges[e].length;
                if nd < dist[w] {
                    dist[w] = nd;
                    heap.push(State(nd, w));
                }
            }
        }
        dist
    }

    fn directed_info(&self) -> DirectedInfo {
        let outlet = self.outlet.expect("directed_info needs an outlet");
        let n = self.vertices.len();
        let mut down_edge = vec![None; n];
        for (k, &(t, _)) in self.ends.iter().enumerate() {
            down_edge[t] = Some(k);
        }
        let dist_to_outlet = (0..n).map(|v| self.vertex_dist[outlet][v]).collect();
        DirectedInfo { down_edge, dist_to_outlet }
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, index: usize) -> &Edge {
        &self.edges[index]
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    pub fn vertex_index(&self, name: &str) -> Option<usize> {
        self.vertex_index.get(name).copied()
    }

    /// (tail, head) vertex indices of an edge.
    pub fn edge_ends(&self, index: usize) -> (usize, usize) {
        self.ends[index]
    }

    pub fn outlet(&self) -> Option<&str> {
        self.outlet.map(|v| self.vertices[v].as_str())
    }

    pub fn is_directed(&self) -> bool {
        self.outlet.is_some()
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.vertices.len()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Number of degree-one vertices (the outlet counts when it has degree one).
    pub fn leaf_count(&self) -> usize {
        self.adjacency.iter().filter(|a| a.len() == 1).count()
    }

    pub fn vertex_distance(&self, u: usize, v: usize) -> f64 {
        self.vertex_dist[u][v]
    }

    pub fn check_point(&self, p: &PointOnNetwork) -> Result<(), NetworkError> {
        let e = self
            .edges
            .get(p.edge)
            .ok_or_else(|| NetworkError::InvalidPoint(format!("edge index {} out of range", p.edge)))?;
        if !(p.offset >= 0.0 && p.offset <= e.length) {
            return Err(NetworkError::InvalidPoint(format!(
                "offset {} outside [0, {}] on edge `{}`",
                p.offset, e.length, e.id
            )));
        }
        Ok(())
    }

    /// Point at a vertex, expressed on one of its incident edges.
    pub fn vertex_point(&self, vertex: usize) -> PointOnNetwork {
        let (e, _) = self.adjacency[vertex][0];
        let (t, _) = self.ends[e];
        if t == vertex {
            PointOnNetwork::new(e, 0.0)
        } else {
            PointOnNetwork::new(e, self.edges[e].length)
        }
    }

    /// Parse `<edge-id>:<offset>`.
    pub fn parse_point(&self, s: &str) -> Result<PointOnNetwork, NetworkError> {
        let (id, off) = s
            .rsplit_once(':')
            .ok_or_else(|| NetworkError::InvalidPoint(format!("`{s}` is not <edge-id>:<offset>")))?;
        let edge = self
            .edge_index(id.trim())
            .ok_or_else(|| NetworkError::InvalidPoint(format!("unknown edge `{id}`")))?;
        let offset: f64 = off
            .trim()
            .parse()
            .map_err(|_| NetworkError::InvalidPoint(format!("bad offset `{off}`")))?;
        let p = PointOnNetwork::new(edge, offset);
        self.check_point(&p)?;
        Ok(p)
    }

    pub fn format_point(&self, p: &PointOnNetwork) -> String {
        format!("{}:{}", self.edges[p.edge].id, p.offset)
    }

    /// Distances from a point to the tail and head vertices of its edge.
    fn endpoint_offsets(&self, p: &PointOnNetwork) -> [(usize, f64); 2] {
        let (t, h) = self.ends[p.edge];
        [(t, p.offset), (h, self.edges[p.edge].length - p.offset)]
    }

    /// Length of the shortest path between two points.
    pub fn geodesic_distance(&self, p: &PointOnNetwork, q: &PointOnNetwork) -> Result<f64, NetworkError> {
        self.check_point(p)?;
        self.check_point(q)?;
        Ok(self.geodesic_unchecked(p, q))
    }

    pub(crate) fn geodesic_unchecked(&self, p: &PointOnNetwork, q: &PointOnNetwork) -> f64 {
        let mut best = if p.edge == q.edge { (p.offset - q.offset).abs() } else { f64::INFINITY };
        for (u, du) in self.endpoint_offsets(p) {
            for (v, dv) in self.endpoint_offsets(q) {
                best = best.min(du + self.vertex_dist[u][v] + dv);
            }
        }
        best
    }

    /// Dense geodesic distance matrix between points.
    pub fn geodesic_matrix(&self, points: &[PointOnNetwork]) -> Result<DMatrix<f64>, NetworkError> {
        for p in points {
            self.check_point(p)?;
        }
        let n = points.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let d = self.geodesic_unchecked(&points[i], &points[j]);
                m[(i, j)] = d;
                m[(j, i)] = d;
            }
        }
        Ok(m)
    }

    /// Effective resistance between two points with edge resistance equal to length.
    pub fn resistance_distance(&self, p: &PointOnNetwork, q: &PointOnNetwork) -> Result<f64, NetworkError> {
        let m = self.resistance_matrix(&[*p, *q])?;
        Ok(m[(0, 1)])
    }

    /// Effective resistance between every pair of points.
    ///
    /// Host edges are subdivided at the points, the Laplacian of the refined
    /// graph is built with conductance `1 / length`, and resistances are read
    /// off the pseudoinverse `(L + J/n)^{-1} - J/n`.
    pub fn resistance_matrix(&self, points: &[PointOnNetwork]) -> Result<DMatrix<f64>, NetworkError> {
        for p in points {
            self.check_point(p)?;
        }
        let (node_count, segments, point_nodes) = self.subdivide(points);
        let mut lap = DMatrix::<f64>::zeros(node_count, node_count);
        for &(a, b, len) in &segments {
            let g = 1.0 / len;
            lap[(a, a)] += g;
            lap[(b, b)] += g;
            lap[(a, b)] -= g;
            lap[(b, a)] -= g;
        }
        let shift = 1.0 / node_count as f64;
        lap.add_scalar_mut(shift);
        let chol = lap.cholesky().ok_or(NetworkError::SingularLaplacian)?;
        // Only the columns for the requested nodes are needed.
        let k = point_nodes.len();
        let mut rhs = DMatrix::<f64>::zeros(node_count, k);
        for (c, &node) in point_nodes.iter().enumerate() {
            rhs[(node, c)] = 1.0;
        }
        let cols = chol.solve(&rhs);
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let (a, b) = (point_nodes[i], point_nodes[j]);
                let r = if a == b { 0.0 } else { (cols[(a, i)] + cols[(b, j)] - cols[(a, j)] - cols[(b, i)]).max(0.0) };
                out[(i, j)] = r;
                out[(j, i)] = r;
            }
        }
        Ok(out)
    }

    /// Split host edges at the given points. Returns the node count, the
    /// refined segments `(node, node, length)`, and the node of each point.
    fn subdivide(&self, points: &[PointOnNetwork]) -> (usize, Vec<(usize, usize, f64)>, Vec<usize>) {
        let mut next = self.vertices.len();
        let mut point_nodes = vec![usize::MAX; points.len()];
        let mut cuts: HashMap<usize, Vec<(f64, usize)>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            let (t, h) = self.ends[p.edge];
            let len = self.edges[p.edge].length;
            if p.offset <= 0.0 {
                point_nodes[i] = t;
            } else if p.offset >= len {
                point_nodes[i] = h;
            } else {
                cuts.entry(p.edge).or_default().push((p.offset, i));
            }
        }
        let mut segments = Vec::with_capacity(self.edges.len() + points.len());
        for (k, e) in self.edges.iter().enumerate() {
            let (t, h) = self.ends[k];
            match cuts.get_mut(&k) {
                None => segments.push((t, h, e.length)),
                Some(list) => {
                    list.sort_by(|a, b| a.0.total_cmp(&b.0));
                    let (mut prev_node, mut prev_off) = (t, 0.0);
                    for &(off, i) in list.iter() {
                        if off == prev_off && prev_node != t {
                            point_nodes[i] = prev_node;
                            continue;
                        }
                        let node = next;
                        next += 1;
                        segments.push((prev_node, node, off - prev_off));
                        point_nodes[i] = node;
                        prev_node = node;
                        prev_off = off;
                    }
                    segments.push((prev_node, h, e.length - prev_off));
                }
            }
        }
        (next, segments, point_nodes)
    }

    /// Move vertex points onto the edge that leaves the vertex downstream, so
    /// that a junction is represented identically whichever edge named it.
    fn canonical(&self, p: &PointOnNetwork, info: &DirectedInfo) -> PointOnNetwork {
        let e = &self.edges[p.edge];
        if p.offset >= e.length {
            let (_, h) = self.ends[p.edge];
            if let Some(down) = info.down_edge[h] {
                return PointOnNetwork::new(down, 0.0);
            }
        }
        *p
    }

    fn point_dist_to_outlet(&self, p: &PointOnNetwork, info: &DirectedInfo) -> f64 {
        let (_, h) = self.ends[p.edge];
        self.edges[p.edge].length - p.offset + info.dist_to_outlet[h]
    }

    /// Edges on the downstream path from the point's host edge, in order.
    fn downstream_edges(&self, edge: usize, info: &DirectedInfo) -> Vec<usize> {
        let mut out = vec![edge];
        let mut v = self.ends[edge].1;
        while let Some(e) = info.down_edge[v] {
            out.push(e);
            v = self.ends[e].1;
        }
        out
    }

    /// Classify a pair of points as flow-connected or not.
    pub fn flow_relation(&self, p: &PointOnNetwork, q: &PointOnNetwork) -> Result<FlowRelation, NetworkError> {
        let info = self.directed.as_ref().ok_or(NetworkError::NotDirected)?;
        self.check_point(p)?;
        self.check_point(q)?;
        let p = self.canonical(p, info);
        let q = self.canonical(q, info);
        let d = self.geodesic_unchecked(&p, &q);
        if d == 0.0 {
            return Ok(FlowRelation::SamePoint);
        }
        if p.edge == q.edge
            || self.downstream_edges(p.edge, info).contains(&q.edge)
            || self.downstream_edges(q.edge, info).contains(&p.edge)
        {
            return Ok(FlowRelation::FlowConnected { d });
        }
        let below_p: HashSet<usize> = self
            .downstream_edges(p.edge, info)
            .into_iter()
            .map(|e| self.ends[e].1)
            .collect();
        let junction = self
            .downstream_edges(q.edge, info)
            .into_iter()
            .map(|e| self.ends[e].1)
            .find(|v| below_p.contains(v))
            .expect("directed tree paths meet at the outlet");
        let dp = self.point_dist_to_outlet(&p, info) - info.dist_to_outlet[junction];
        let dq = self.point_dist_to_outlet(&q, info) - info.dist_to_outlet[junction];
        let (a, b) = if dp <= dq { (dp, dq) } else { (dq, dp) };
        Ok(FlowRelation::FlowUnconnected { d: a + b, a, b })
    }

    /// Omega value of the edge hosting the point (after junction canonicalisation).
    pub fn omega_at(&self, p: &PointOnNetwork) -> f64 {
        match &self.directed {
            Some(info) => self.edges[self.canonical(p, info).edge].omega,
            None => self.edges[p.edge].omega,
        }
    }

    /// Tail-up weight `min(sqrt(Ω(p)/Ω(q)), sqrt(Ω(q)/Ω(p)))` for a flow-connected pair.
    pub fn tailup_weight(&self, p: &PointOnNetwork, q: &PointOnNetwork) -> Result<f64, NetworkError> {
        if !self.flow_relation(p, q)?.is_connected() {
            return Err(NetworkError::FlowUnconnectedPair);
        }
        Ok(omega_weight(self.omega_at(p), self.omega_at(q)))
    }

    /// Parse the line-oriented network format.
    ///
    /// ```text
    /// # comment
    /// OUTLET v0
    /// E e1 v1 v0 2.5 3.0
    /// ```
    pub fn parse(text: &str) -> Result<Self, NetworkError> {
        let mut edges = Vec::new();
        let mut outlet: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| NetworkError::Parse { line: i + 1, msg };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "OUTLET" => {
                    if fields.len() != 2 {
                        return Err(err("expected `OUTLET <vertex-id>`".into()));
                    }
                    if outlet.is_some() {
                        return Err(err("outlet declared twice".into()));
                    }
                    outlet = Some(fields[1].to_string());
                }
                "E" => {
                    if fields.len() != 6 {
                        return Err(err("expected `E <edge-id> <tail> <head> <length> <omega>`".into()));
                    }
                    let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
                    edges.push(Edge::new(fields[1], fields[2], fields[3], num(fields[4])?, num(fields[5])?));
                }
                other => return Err(err(format!("unknown record `{other}`"))),
            }
        }
        Network::new(edges, outlet.as_deref())
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| NetworkError::Io(e.to_string()))?;
        Self::parse(&text)
    }

    /// Uniformly random point, edges chosen proportionally to length.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> PointOnNetwork {
        let total = self.total_length();
        let mut target = rng.random::<f64>() * total;
        for (k, e) in self.edges.iter().enumerate() {
            if target < e.length {
                return PointOnNetwork::new(k, target);
            }
            target -= e.length;
        }
        let last = self.edges.len() - 1;
        PointOnNetwork::new(last, self.edges[last].length * rng.random::<f64>())
    }

    /// Random directed tree with `n_edges` edges draining to vertex `v0`.
    ///
    /// The outlet has degree one. Edge lengths are uniform on
    /// `[min_len, max_len]`; leaf omegas are uniform on `[1, 2]` and every
    /// other edge carries the sum of its upstream omegas.
    pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, n_edges: usize, min_len: f64, max_len: f64) -> Self {
        assert!(n_edges >= 1);
        // parent[v] = downstream neighbour of vertex v (v >= 1).
        let mut parent = vec![usize::MAX, 0];
        for v in 2..=n_edges {
            let p = rng.random_range(1..v);
            parent.push(p);
        }
        let n_vertices = n_edges + 1;
        let lengths: Vec<f64> = (0..n_vertices).map(|_| rng.random_range(min_len..=max_len)).collect();
        let mut omega = vec![0.0; n_vertices];
        let mut children = vec![0usize; n_vertices];
        for v in 2..n_vertices {
            children[parent[v]] += 1;
        }
        // Children always have larger indices than their parent.
        for v in (1..n_vertices).rev() {
            if children[v] == 0 {
                omega[v] = rng.random_range(1.0..2.0);
            }
            if v >= 2 {
                let o = omega[v];
                omega[parent[v]] += o;
            }
        }
        let edges = (1..n_vertices)
            .map(|v| Edge::new(format!("e{v}"), format!("v{v}"), format!("v{}", parent[v]), lengths[v], omega[v]))
            .collect();
        Network::new(edges, Some("v0")).expect("generated tree is valid")
    }
}

impl fmt::Display for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(o) = self.outlet() {
            writeln!(f, "OUTLET {o}")?;
        }
        for e in &self.edges {
            writeln!(f, "E {} {} {} {} {}", e.id, e.tail, e.head, e.length, e.omega)?;
        }
        Ok(())
    }
}

/// `min(sqrt(a/b), sqrt(b/a))`.
pub fn omega_weight(a: f64, b: f64) -> f64 {
    (a / b).sqrt().min((b / a).sqrt())
}

/// Pairwise geometry of a fixed set of sites, computed once and shared by
/// every covariance evaluation on those sites.
#[derive(Debug, Clone)]
pub struct SiteGeometry {
    pub distance: DMatrix<f64>,
    /// Flow relations, present for directed trees only.
    pub flow: Option<Vec<FlowRelation>>,
    /// Tail-up weights for each pair (1 on the diagonal), directed trees only.
    pub weight: Option<DMatrix<f64>>,
    pub leaf_count: usize,
    pub is_tree: bool,
    n: usize,
}

impl SiteGeometry {
    /// Geodesic distance on trees, resistance distance otherwise.
    pub fn new(net: &Network, sites: &[PointOnNetwork]) -> Result<Self, NetworkError> {
        let n = sites.len();
        let distance = if net.is_tree() { net.geodesic_matrix(sites)? } else { net.resistance_matrix(sites)? };
        let (flow, weight) = if net.is_directed() {
            let mut flow = Vec::with_capacity(n * n);
            let mut weight = DMatrix::from_element(n, n, 0.0);
            let omegas: Vec<f64> = sites.iter().map(|p| net.omega_at(p)).collect();
            for i in 0..n {
                for j in 0..n {
                    let rel = if i == j { FlowRelation::SamePoint } else { net.flow_relation(&sites[i], &sites[j])? };
                    if rel.is_connected() {
                        weight[(i, j)] = omega_weight(omegas[i], omegas[j]);
                    }
                    flow.push(rel);
                }
            }
            (Some(flow), Some(weight))
        } else {
            (None, None)
        };
        Ok(Self { distance, flow, weight, leaf_count: net.leaf_count(), is_tree: net.is_tree(), n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn flow_relation(&self, i: usize, j: usize) -> Option<FlowRelation> {
        self.flow.as_ref().map(|f| f[i * self.n + j])
    }

    pub fn tailup_weight(&self, i: usize, j: usize) -> Option<f64> {
        self.weight.as_ref().map(|w| w[(i, j)])
    }
}

/// Vertex-level effective resistance straight from the Laplacian pseudoinverse.
pub fn vertex_resistance(lap: &DMatrix<f64>, i: usize, j: usize) -> Option<f64> {
    let n = lap.nrows();
    let shifted = lap.add_scalar(1.0 / n as f64);
    let chol = shifted.cholesky()?;
    let mut rhs = DVector::zeros(n);
    rhs[i] += 1.0;
    rhs[j] -= 1.0;
    let x = chol.solve(&rhs);
    Some(x[i] - x[j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn y_tree() -> Network {
        Network::new(
            vec![
                Edge::new("a", "l1", "j", 1.0, 1.0),
                Edge::new("b", "l2", "j", 1.0, 1.0),
                Edge::new("c", "j", "o", 1.0, 2.0),
            ],
            Some("o"),
        )
        .unwrap()
    }

    fn triangle() -> Network {
        Network::new(
            vec![
                Edge::new("a", "x", "y", 1.0, 1.0),
                Edge::new("b", "y", "z", 1.0, 1.0),
                Edge::new("c", "z", "x", 1.0, 1.0),
            ],
            None,
        )
        .unwrap()
    }

    #[test]
    fn star_is_valid() {
        let net = Network::new(
            vec![
                Edge::new("a", "c", "x", 1.0, 1.0),
                Edge::new("b", "c", "y", 1.0, 1.0),
                Edge::new("d", "c", "z", 1.0, 1.0),
            ],
            None,
        );
        assert!(net.is_ok());
        assert_eq!(net.unwrap().leaf_count(), 3);
    }

    #[test]
    fn structural_errors() {
        let multi = Network::new(vec![Edge::new("a", "u", "v", 1.0, 1.0), Edge::new("b", "v", "u", 2.0, 1.0)], None);
        assert!(matches!(multi, Err(NetworkError::MultiEdge(..))));

        let cycle = Network::new(
            vec![
                Edge::new("a", "1", "2", 1.0, 1.0),
                Edge::new("b", "2", "3", 1.0, 1.0),
                Edge::new("c", "3", "4", 1.0, 1.0),
                Edge::new("d", "4", "1", 1.0, 1.0),
            ],
            Some("1"),
        );
        assert!(matches!(cycle, Err(NetworkError::NotATree(_))));

        let selfe = Network::new(vec![Edge::new("a", "u", "u", 1.0, 1.0)], None);
        assert!(matches!(selfe, Err(NetworkError::SelfEdge(_))));

        let neg = Network::new(vec![Edge::new("a", "u", "v", 0.0, 1.0)], None);
        assert!(matches!(neg, Err(NetworkError::NonpositiveLength(..))));

        let disc = Network::new(vec![Edge::new("a", "u", "v", 1.0, 1.0), Edge::new("b", "x", "y", 1.0, 1.0)], None);
        assert!(matches!(disc, Err(NetworkError::Disconnected(_))));

        let wrong_way = Network::new(vec![Edge::new("a", "o", "v", 1.0, 1.0)], Some("o"));
        assert!(matches!(wrong_way, Err(NetworkError::BadOutlet(_))));

        let missing = Network::new(vec![Edge::new("a", "v", "o", 1.0, 1.0)], Some("q"));
        assert!(matches!(missing, Err(NetworkError::BadOutlet(_))));
    }

    #[test]
    fn y_tree_distances() {
        let net = y_tree();
        let l1 = PointOnNetwork::new(0, 0.0);
        let l2 = PointOnNetwork::new(1, 0.0);
        assert_eq!(net.geodesic_distance(&l1, &l2).unwrap(), 2.0);
        assert_eq!(net.geodesic_distance(&l1, &l1).unwrap(), 0.0);
        let r = net.resistance_distance(&l1, &l2).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
        assert!(matches!(
            net.geodesic_distance(&l1, &PointOnNetwork::new(0, 1.5)),
            Err(NetworkError::InvalidPoint(_))
        ));
    }

    #[test]
    fn triangle_resistance_is_two_thirds() {
        let net = triangle();
        let x = PointOnNetwork::new(0, 0.0);
        let y = PointOnNetwork::new(0, 1.0);
        let r = net.resistance_distance(&x, &y).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(net.geodesic_distance(&x, &y).unwrap(), 1.0);
        assert_eq!(net.resistance_distance(&x, &x).unwrap(), 0.0);
        // Interior point on the triangle: loop of length 3, arc 0.5 vs 2.5.
        let mid = PointOnNetwork::new(0, 0.5);
        let r = net.resistance_distance(&x, &mid).unwrap();
        assert!((r - 0.5 * 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_resistance_matches_points() {
        let net = triangle();
        let mut lap = DMatrix::zeros(3, 3);
        for k in 0..3 {
            let (a, b) = net.edge_ends(k);
            lap[(a, a)] += 1.0;
            lap[(b, b)] += 1.0;
            lap[(a, b)] -= 1.0;
            lap[(b, a)] -= 1.0;
        }
        assert!((vertex_resistance(&lap, 0, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn flow_relations_on_y() {
        let net = y_tree();
        let l1 = PointOnNetwork::new(0, 0.0);
        let l2 = PointOnNetwork::new(1, 0.0);
        let outlet = PointOnNetwork::new(2, 1.0);
        assert_eq!(
            net.flow_relation(&l1, &l2).unwrap(),
            FlowRelation::FlowUnconnected { d: 2.0, a: 1.0, b: 1.0 }
        );
        assert_eq!(net.flow_relation(&l1, &outlet).unwrap(), FlowRelation::FlowConnected { d: 2.0 });
        assert_eq!(net.flow_relation(&outlet, &outlet).unwrap(), FlowRelation::SamePoint);
        // The junction named from an upstream edge is downstream of both leaves.
        let junction = PointOnNetwork::new(0, 1.0);
        assert_eq!(net.flow_relation(&l2, &junction).unwrap(), FlowRelation::FlowConnected { d: 1.0 });
        assert_eq!(
            net.flow_relation(&PointOnNetwork::new(0, 0.25), &PointOnNetwork::new(1, 0.5)).unwrap(),
            FlowRelation::FlowUnconnected { d: 1.25, a: 0.5, b: 0.75 }
        );
        assert_eq!(triangle().flow_relation(&l1, &l2), Err(NetworkError::NotDirected));
    }

    #[test]
    fn tailup_weights() {
        let net = y_tree();
        let up = PointOnNetwork::new(0, 0.5);
        let down = PointOnNetwork::new(2, 0.5);
        let w = net.tailup_weight(&up, &down).unwrap();
        assert!((w - (0.5f64).sqrt()).abs() < 1e-15);
        assert_eq!(w, net.tailup_weight(&down, &up).unwrap());
        assert_eq!(omega_weight(2.0, 8.0), 0.5);
        assert_eq!(omega_weight(3.0, 3.0), 1.0);
        assert_eq!(
            net.tailup_weight(&PointOnNetwork::new(0, 0.5), &PointOnNetwork::new(1, 0.5)),
            Err(NetworkError::FlowUnconnectedPair)
        );
    }

    #[test]
    fn omega_additivity_is_a_warning() {
        let net = Network::new(
            vec![
                Edge::new("a", "l1", "j", 1.0, 1.0),
                Edge::new("b", "l2", "j", 1.0, 1.0),
                Edge::new("c", "j", "o", 1.0, 5.0),
            ],
            Some("o"),
        )
        .unwrap();
        assert_eq!(net.omega_additivity_warnings().len(), 1);
        assert!(y_tree().omega_additivity_warnings().is_empty());
    }

    #[test]
    fn text_format_round_trip() {
        let text = "# stream\nOUTLET o\nE a l1 j 1 1\nE b l2 j 1.5 1 # second\nE c j o 2 2\n";
        let net = Network::parse(text).unwrap();
        assert_eq!(net.edges().len(), 3);
        assert_eq!(net.outlet(), Some("o"));
        let again = Network::parse(&net.to_string()).unwrap();
        assert_eq!(again.edges(), net.edges());
        let p = net.parse_point("b:0.75").unwrap();
        assert_eq!(p, PointOnNetwork::new(1, 0.75));
        assert_eq!(net.format_point(&p), "b:0.75");
        assert!(net.parse_point("b:2").is_err());
        assert!(net.parse_point("zz:0").is_err());
        assert!(matches!(Network::parse("X 1 2"), Err(NetworkError::Parse { line: 1, .. })));
    }

    #[test]
    fn random_tree_is_additive_and_outlet_is_leaf() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Network::random_tree(&mut rng, 25, 0.5, 3.0);
        assert!(net.is_directed() && net.is_tree());
        assert!(net.omega_additivity_warnings().is_empty());
        let outlet = net.vertex_index("v0").unwrap();
        let deg = (0..net.edges().len()).filter(|&k| {
            let (t, h) = net.edge_ends(k);
            t == outlet || h == outlet
        });
        assert_eq!(deg.count(), 1);
    }

    #[test]
    fn site_geometry_uses_resistance_off_trees() {
        let net = triangle();
        let pts = [PointOnNetwork::new(0, 0.0), PointOnNetwork::new(0, 1.0)];
        let g = SiteGeometry::new(&net, &pts).unwrap();
        assert!((g.distance[(0, 1)] - 2.0 / 3.0).abs() < 1e-12);
        assert!(g.flow.is_none());
    }
}
