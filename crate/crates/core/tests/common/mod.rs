//! Shared instance generators and independent oracles for the integration
//! suites.

#![allow(dead_code)]

pub mod criteria;
pub mod suites;

use std::collections::BTreeSet;

use pharmonic::energy::region_energy;
use pharmonic::graph::{ball, cayley, load_edge_list, FamilySpec, FiniteRegion, Graph, Vertex};
use pharmonic::{Exponent, ScalarField};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn lattice(dim: usize) -> Graph {
    cayley(&FamilySpec::Lattice { dim }).unwrap()
}

pub fn free(rank: usize) -> Graph {
    cayley(&FamilySpec::Free { rank }).unwrap()
}

pub fn exponent(p: f64) -> Exponent {
    Exponent::new(p).unwrap()
}

/// A Dirichlet instance: graph, region and boundary data.
pub struct Instance {
    pub label: String,
    pub graph: Graph,
    pub region: FiniteRegion,
    pub boundary: ScalarField,
}

/// Connected random graph on `n` vertices with degrees at most `max_deg`:
/// a random tree plus extra edges. Returned with its edge-list text.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, max_deg: usize) -> (Graph, String) {
    let mut deg = vec![0usize; n];
    let mut edges = BTreeSet::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for i in 1..n {
        // attach to an earlier vertex with spare degree
        loop {
            let j = order[rng.gen_range(0..i)];
            if deg[j] < max_deg {
                let (a, b) = (order[i].min(j), order[i].max(j));
                edges.insert((a, b));
                deg[a] += 1;
                deg[b] += 1;
                break;
            }
        }
    }
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        let (a, b) = (a.min(b), a.max(b));
        if a != b && deg[a] < max_deg && deg[b] < max_deg && edges.insert((a, b)) {
            deg[a] += 1;
            deg[b] += 1;
        }
    }
    let text: String = edges.iter().map(|(a, b)| format!("v{a} v{b}\n")).collect();
    (load_edge_list(&text).unwrap(), text)
}

fn random_data(rng: &mut ChaCha8Rng, vertices: &BTreeSet<Vertex>) -> ScalarField {
    let (lo, span) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.1..3.0));
    ScalarField::from_fn(vertices.iter(), |_| lo + span * rng.gen::<f64>())
}

/// Instance `k` of the mixed suite: balls of Z², balls of F₂, and random
/// graphs with a random quarter of the vertices held fixed.
pub fn instance(rng: &mut ChaCha8Rng, k: usize) -> Instance {
    match k % 3 {
        0 => {
            let g = lattice(2);
            let r = rng.gen_range(2..=6);
            let region = ball(&g, g.base(), r).unwrap();
            let boundary = random_data(rng, region.boundary());
            Instance { label: format!("Z2 ball {r}"), graph: g, region, boundary }
        }
        1 => {
            let g = free(2);
            let r = rng.gen_range(2..=4);
            let region = ball(&g, g.base(), r).unwrap();
            let boundary = random_data(rng, region.boundary());
            Instance { label: format!("F2 ball {r}"), graph: g, region, boundary }
        }
        _ => {
            let n = rng.gen_range(20..=200);
            let (g, _) = random_graph(rng, n, 5);
            let all = g.vertices().unwrap();
            let interior: BTreeSet<Vertex> = all.iter().filter(|_| rng.gen_bool(0.75)).cloned().collect();
            let interior = if interior.len() == all.len() {
                interior.into_iter().skip(1).collect()
            } else if interior.is_empty() {
                all.iter().take(1).cloned().collect()
            } else {
                interior
            };
            let region = FiniteRegion::new(&g, interior).unwrap();
            let boundary = random_data(rng, region.boundary());
            Instance { label: format!("random graph n={n}"), graph: g, region, boundary }
        }
    }
}

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let m = a[row][col] / a[col][col];
            if m != 0.0 {
                for c in col..n {
                    a[row][c] -= m * a[col][c];
                }
                b[row] -= m * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// The p = 2 Dirichlet solution from the linear system
/// `deg(x) h(x) - Σ_{y ∈ S} h(y) = Σ_{y ∈ ∂S} g(y)`.
pub fn linear_dirichlet(g: &Graph, region: &FiniteRegion, boundary: &ScalarField) -> ScalarField {
    let idx: Vec<&Vertex> = region.interior().iter().collect();
    let n = idx.len();
    let pos = |v: &Vertex| idx.binary_search(&v).ok();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for (i, x) in idx.iter().enumerate() {
        for y in g.neighbors(x) {
            a[i][i] += 1.0;
            match pos(&y) {
                Some(j) => a[i][j] -= 1.0,
                None => b[i] += boundary.get(&y).unwrap(),
            }
        }
    }
    let h = gauss_solve(a, b);
    let mut out = boundary.clone();
    for (x, v) in idx.iter().zip(h) {
        out.insert((*x).clone(), v);
    }
    out
}

/// `field` with the interior perturbed by independent uniform noise of
/// amplitude `eps`.
pub fn perturb(rng: &mut ChaCha8Rng, field: &ScalarField, interior: &BTreeSet<Vertex>, eps: f64) -> ScalarField {
    let mut c = field.clone();
    for v in interior {
        c.insert(v.clone(), field.get(v).unwrap() + eps * rng.gen_range(-1.0..=1.0));
    }
    c
}

pub fn energy(g: &Graph, f: &ScalarField, region: &FiniteRegion, p: f64) -> f64 {
    region_energy(g, f, region, exponent(p)).unwrap()
}

/// Closed-form bounded p-harmonic function on F₂ with limit 1 along the
/// branch of `a` and 0 along the others: increments shrink by
/// `q = 3^{-1/(p-1)}` per level, and the root balances one `a`-increment
/// against three others.
pub fn f2_branch_harmonic(p: f64) -> impl Fn(&Vertex) -> f64 + Send + Sync + Clone {
    f2_branch_exhaustion(p, None)
}

/// The exhaustion of the branch-`a` indicator on F₂ at radius `n`, or its
/// limit when `n` is `None`: `c + δ_a S(d) / S(n)` on the `a` branch and
/// `c - δ_o S(d) / S(n)` elsewhere, with `S(d) = Σ_{k<d} q^k`.
pub fn f2_branch_exhaustion(p: f64, n: Option<usize>) -> impl Fn(&Vertex) -> f64 + Send + Sync + Clone {
    let q = 3f64.powf(-1.0 / (p - 1.0));
    let t = 3f64.powf(1.0 / (p - 1.0));
    let c = 1.0 / (1.0 + t);
    let s = move |d: usize| (1.0 - q.powi(d as i32)) / (1.0 - q);
    let total = n.map_or(1.0 / (1.0 - q), s);
    move |v: &Vertex| match v {
        Vertex::Word(w) if w.is_empty() => c,
        Vertex::Word(w) => {
            let frac = s(w.len().min(n.unwrap_or(usize::MAX))) / total;
            if w[0] == 1 {
                c + (1.0 - c) * frac
            } else {
                c - c * frac
            }
        }
        _ => f64::NAN,
    }
}
