//! Connected bounded-degree graphs.
//!
//! Finite graphs come from edge-list documents. Infinite graphs (lattices,
//! free groups and their direct products) are never materialized: they are
//! described by a neighbor oracle on canonical vertex names and explored
//! ball by ball.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical vertex name.
///
/// Lattice vertices are coordinate tuples, free-group vertices are reduced
/// words (letter `i` is the `i`-th generator, `-i` its inverse) and product
/// vertices are tuples of factor vertices. The derived order is the
/// accumulation order used everywhere a sum over vertices is taken.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Vertex {
    Label(String),
    Point(Vec<i64>),
    Word(Vec<i32>),
    Tuple(Vec<Vertex>),
}

impl Vertex {
    pub fn label(s: impl Into<String>) -> Self {
        Vertex::Label(s.into())
    }

    pub fn point(coords: &[i64]) -> Self {
        Vertex::Point(coords.to_vec())
    }

    /// Parses a word such as `aB` (`B` is the inverse of `b`) and reduces it.
    pub fn word(letters: &str) -> Result<Self> {
        if letters == "e" {
            return Ok(Vertex::Word(Vec::new()));
        }
        let mut w: Vec<i32> = Vec::with_capacity(letters.len());
        for c in letters.chars() {
            let l = letter_index(c).ok_or_else(|| Error::UnknownVertex(letters.to_string()))?;
            if w.last() == Some(&-l) {
                w.pop();
            } else {
                w.push(l);
            }
        }
        Ok(Vertex::Word(w))
    }
}

fn letter_index(c: char) -> Option<i32> {
    if c.is_ascii_lowercase() {
        Some(c as i32 - 'a' as i32 + 1)
    } else if c.is_ascii_uppercase() {
        Some(-(c as i32 - 'A' as i32 + 1))
    } else {
        None
    }
}

fn letter_char(l: i32) -> char {
    let base = if l > 0 { b'a' } else { b'A' };
    (base + (l.unsigned_abs() as u8 - 1)) as char
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Vertex::Label(s) => write!(f, "{s}"),
            Vertex::Point(c) => {
                write!(f, "(")?;
                for (i, x) in c.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, ")")
            }
            Vertex::Word(w) if w.is_empty() => write!(f, "e"),
            Vertex::Word(w) => {
                for &l in w {
                    write!(f, "{}", letter_char(l))?;
                }
                Ok(())
            }
            Vertex::Tuple(parts) => {
                write!(f, "<")?;
                for (i, v) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, "|")?;
                    }
                    write!(f, "{v}")?;
                }
                write!(f, ">")
            }
        }
    }
}

/// Description of a graph family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilySpec {
    /// Finite graph given as an edge-list document.
    EdgeList { text: String },
    /// Cayley graph of `Z^dim` with generators `±e_i`.
    Lattice { dim: usize },
    /// Cayley graph of the free group of the given rank (a `2·rank`-regular tree).
    Free { rank: usize },
    /// Cayley graph of a direct product, generated by the union of the factor generators.
    Product { factors: Vec<FamilySpec> },
}

#[derive(Clone, Debug)]
struct EdgeList {
    names: Vec<String>,
    index: HashMap<String, usize>,
    adj: Vec<Vec<usize>>,
}

#[derive(Clone, Debug)]
enum Kind {
    EdgeList(EdgeList),
    Lattice(usize),
    Free(usize),
    Product(Vec<Graph>),
}

/// Immutable connected graph with a neighbor oracle, a base vertex and a
/// declared degree bound.
#[derive(Clone, Debug)]
pub struct Graph {
    kind: Kind,
    base: Vertex,
    degree_bound: usize,
}

/// A finite vertex set together with its outer boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteRegion {
    interior: BTreeSet<Vertex>,
    boundary: BTreeSet<Vertex>,
}

impl FiniteRegion {
    /// Builds the region `S` with `∂S` computed from the graph.
    pub fn new(g: &Graph, interior: BTreeSet<Vertex>) -> Result<Self> {
        let boundary = outer_boundary(g, &interior)?;
        Ok(FiniteRegion { interior, boundary })
    }

    pub fn interior(&self) -> &BTreeSet<Vertex> {
        &self.interior
    }

    pub fn boundary(&self) -> &BTreeSet<Vertex> {
        &self.boundary
    }

    /// `S ∪ ∂S` in sorted order.
    pub fn closure(&self) -> BTreeSet<Vertex> {
        self.interior.union(&self.boundary).cloned().collect()
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.interior.contains(v)
    }
}

/// Parses an edge-list document: one `u v` pair per line, `#` comment lines.
pub fn load_edge_list(text: &str) -> Result<Graph> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut adj: Vec<Vec<usize>> = Vec::new();
    let mut intern = |name: &str, names: &mut Vec<String>, adj: &mut Vec<Vec<usize>>| -> usize {
        *index.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            adj.push(Vec::new());
            names.len() - 1
        })
    };

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(Error::MalformedEdge { line: lineno + 1, found: tokens.len() });
        }
        if tokens[0] == tokens[1] {
            return Err(Error::SelfLoop { line: lineno + 1, vertex: tokens[0].to_string() });
        }
        let u = intern(tokens[0], &mut names, &mut adj);
        let v = intern(tokens[1], &mut names, &mut adj);
        // duplicate edges collapse
        if !adj[u].contains(&v) {
            adj[u].push(v);
            adj[v].push(u);
        }
    }
    if names.is_empty() {
        return Err(Error::EmptyEdgeList);
    }

    let mut seen = vec![false; names.len()];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Disconnected { vertex: names[missing].clone() });
    }

    let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
    let degree_bound = adj.iter().map(Vec::len).max().unwrap_or(0);
    let base = Vertex::Label(names[0].clone());
    Ok(Graph { kind: Kind::EdgeList(EdgeList { names, index, adj }), base, degree_bound })
}

/// Builds the graph described by `spec`. Group families get their standard
/// generators and the identity as base vertex.
pub fn cayley(spec: &FamilySpec) -> Result<Graph> {
    match spec {
        FamilySpec::EdgeList { text } => load_edge_list(text),
        FamilySpec::Lattice { dim } => {
            if *dim == 0 {
                return Err(Error::InvalidFamily("lattice dimension must be at least 1".into()));
            }
            Ok(Graph { kind: Kind::Lattice(*dim), base: Vertex::Point(vec![0; *dim]), degree_bound: 2 * dim })
        }
        FamilySpec::Free { rank } => {
            if *rank == 0 || *rank > 26 {
                return Err(Error::InvalidFamily(format!("free group rank must be in 1..=26, got {rank}")));
            }
            Ok(Graph { kind: Kind::Free(*rank), base: Vertex::Word(Vec::new()), degree_bound: 2 * rank })
        }
        FamilySpec::Product { factors } => {
            if factors.len() < 2 {
                return Err(Error::InvalidFamily("a product needs at least two factors".into()));
            }
            let graphs = factors.iter().map(cayley).collect::<Result<Vec<_>>>()?;
            let base = Vertex::Tuple(graphs.iter().map(|g| g.base.clone()).collect());
            let degree_bound = graphs.iter().map(|g| g.degree_bound).sum();
            Ok(Graph { kind: Kind::Product(graphs), base, degree_bound })
        }
    }
}

impl Graph {
    pub fn base(&self) -> &Vertex {
        &self.base
    }

    pub fn degree_bound(&self) -> usize {
        self.degree_bound
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.kind, Kind::EdgeList(_))
    }

    /// Number of vertices for finite graphs.
    pub fn order(&self) -> Option<usize> {
        match &self.kind {
            Kind::EdgeList(el) => Some(el.names.len()),
            _ => None,
        }
    }

    /// All vertices of a finite graph, sorted.
    pub fn vertices(&self) -> Option<BTreeSet<Vertex>> {
        match &self.kind {
            Kind::EdgeList(el) => Some(el.names.iter().map(|n| Vertex::Label(n.clone())).collect()),
            _ => None,
        }
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        match (&self.kind, v) {
            (Kind::EdgeList(el), Vertex::Label(s)) => el.index.contains_key(s),
            (Kind::Lattice(d), Vertex::Point(c)) => c.len() == *d,
            (Kind::Free(r), Vertex::Word(w)) => {
                w.iter().all(|&l| l != 0 && l.unsigned_abs() as usize <= *r)
                    && w.windows(2).all(|p| p[0] != -p[1])
            }
            (Kind::Product(gs), Vertex::Tuple(parts)) => {
                gs.len() == parts.len() && gs.iter().zip(parts).all(|(g, p)| g.contains(p))
            }
            _ => false,
        }
    }

    /// Neighbors of `x` in a fixed generator order. Vertices outside the
    /// graph have no neighbors.
    pub fn neighbors(&self, x: &Vertex) -> Vec<Vertex> {
        match (&self.kind, x) {
            (Kind::EdgeList(el), Vertex::Label(s)) => match el.index.get(s) {
                Some(&i) => el.adj[i].iter().map(|&j| Vertex::Label(el.names[j].clone())).collect(),
                None => Vec::new(),
            },
            (Kind::Lattice(d), Vertex::Point(c)) if c.len() == *d => {
                let mut out = Vec::with_capacity(2 * d);
                for i in 0..*d {
                    for step in [1, -1] {
                        let mut y = c.clone();
                        y[i] += step;
                        out.push(Vertex::Point(y));
                    }
                }
                out
            }
            (Kind::Free(r), Vertex::Word(w)) => {
                let r = *r as i32;
                let letters = (1..=r).chain((1..=r).map(|l| -l));
                letters
                    .map(|l| {
                        let mut y = w.clone();
                        if y.last() == Some(&-l) {
                            y.pop();
                        } else {
                            y.push(l);
                        }
                        Vertex::Word(y)
                    })
                    .collect()
            }
            (Kind::Product(gs), Vertex::Tuple(parts)) if gs.len() == parts.len() => {
                let mut out = Vec::new();
                for (i, g) in gs.iter().enumerate() {
                    for y in g.neighbors(&parts[i]) {
                        let mut t = parts.clone();
                        t[i] = y;
                        out.push(Vertex::Tuple(t));
                    }
                }
                out
            }
            _ => Vec::new(),
        }
    }

    pub fn degree(&self, x: &Vertex) -> usize {
        self.neighbors(x).len()
    }

    /// Parses a vertex name in this graph's notation. `o` and `origin` name
    /// the base vertex.
    pub fn parse_vertex(&self, s: &str) -> Result<Vertex> {
        let s = s.trim();
        if s == "o" || s == "origin" {
            return Ok(self.base.clone());
        }
        let v = match &self.kind {
            Kind::EdgeList(_) => Vertex::Label(s.to_string()),
            Kind::Lattice(_) => {
                let inner = s.trim_start_matches('(').trim_end_matches(')');
                let coords = inner
                    .split(',')
                    .map(|t| t.trim().parse::<i64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Error::UnknownVertex(s.to_string()))?;
                Vertex::Point(coords)
            }
            Kind::Free(_) => Vertex::word(s)?,
            Kind::Product(gs) => {
                let inner = s.strip_prefix('<').and_then(|t| t.strip_suffix('>'));
                let inner = inner.ok_or_else(|| Error::UnknownVertex(s.to_string()))?;
                let parts: Vec<&str> = inner.split('|').collect();
                if parts.len() != gs.len() {
                    return Err(Error::UnknownVertex(s.to_string()));
                }
                Vertex::Tuple(gs.iter().zip(parts).map(|(g, p)| g.parse_vertex(p)).collect::<Result<_>>()?)
            }
        };
        if self.contains(&v) {
            Ok(v)
        } else {
            Err(Error::UnknownVertex(s.to_string()))
        }
    }

    /// Breadth-first layers around `center`: `layers[d]` holds the vertices
    /// at distance exactly `d`, for `d <= max_dist`.
    pub fn layers(&self, center: &Vertex, max_dist: usize) -> Result<Vec<Vec<Vertex>>> {
        if !self.contains(center) {
            return Err(Error::UnknownVertex(center.to_string()));
        }
        let mut seen: std::collections::HashSet<Vertex> = std::collections::HashSet::new();
        seen.insert(center.clone());
        let mut layers = vec![vec![center.clone()]];
        for _ in 0..max_dist {
            let mut next = Vec::new();
            for x in layers.last().expect("at least one layer") {
                for y in self.neighbors(x) {
                    if seen.insert(y.clone()) {
                        next.push(y);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            next.sort();
            layers.push(next);
        }
        Ok(layers)
    }

    /// Checks the graph invariants on a finite set of vertices: symmetric
    /// adjacency, no self-loops and the declared degree bound.
    pub fn check_truncation<'a>(&self, vertices: impl IntoIterator<Item = &'a Vertex>) -> std::result::Result<(), String> {
        for x in vertices {
            let nx = self.neighbors(x);
            if nx.len() > self.degree_bound {
                return Err(format!("deg({x}) = {} exceeds bound {}", nx.len(), self.degree_bound));
            }
            for y in &nx {
                if y == x {
                    return Err(format!("self-loop at {x}"));
                }
                if !self.neighbors(y).contains(x) {
                    return Err(format!("asymmetric adjacency {x} -> {y}"));
                }
            }
        }
        Ok(())
    }
}

/// The ball `{x : d(center, x) < n}` with its outer boundary, which is the
/// sphere of radius `n`.
pub fn ball(g: &Graph, center: &Vertex, n: usize) -> Result<FiniteRegion> {
    if n < 1 {
        return Err(Error::InvalidRadius(n));
    }
    let layers = g.layers(center, n)?;
    let interior: BTreeSet<Vertex> = layers.iter().take(n).flatten().cloned().collect();
    let boundary: BTreeSet<Vertex> = layers.get(n).map(|l| l.iter().cloned().collect()).unwrap_or_default();
    Ok(FiniteRegion { interior, boundary })
}

/// Shortest-path length, exploring at most `budget` vertices.
pub fn distance(g: &Graph, x: &Vertex, y: &Vertex, budget: usize) -> Result<usize> {
    if !g.contains(x) {
        return Err(Error::UnknownVertex(x.to_string()));
    }
    if !g.contains(y) {
        return Err(Error::UnknownVertex(y.to_string()));
    }
    if x == y {
        return Ok(0);
    }
    let mut seen: std::collections::HashSet<Vertex> = std::collections::HashSet::from([x.clone()]);
    let mut frontier = vec![x.clone()];
    let mut d = 0;
    while !frontier.is_empty() {
        d += 1;
        let mut next = Vec::new();
        for v in &frontier {
            for w in g.neighbors(v) {
                if &w == y {
                    return Ok(d);
                }
                if seen.insert(w.clone()) {
                    if seen.len() > budget {
                        return Err(Error::Unreachable(y.to_string()));
                    }
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    Err(Error::Unreachable(y.to_string()))
}

/// Vertices outside `s` with at least one neighbor in `s`.
pub fn outer_boundary(g: &Graph, s: &BTreeSet<Vertex>) -> Result<BTreeSet<Vertex>> {
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut out = BTreeSet::new();
    for x in s {
        if !g.contains(x) {
            return Err(Error::UnknownVertex(x.to_string()));
        }
        for y in g.neighbors(x) {
            if !s.contains(&y) {
                out.insert(y);
            }
        }
    }
    Ok(out)
}
