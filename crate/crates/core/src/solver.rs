//! p-harmonic Dirichlet problems on finite regions.
//!
//! The solution minimizes the p-Dirichlet energy of the edges touching the
//! region among fields with the prescribed boundary values. The energy is
//! convex and each coordinate subproblem has a unique minimizer, so cyclic
//! coordinate descent with exact coordinate updates decreases it
//! monotonically.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{Exponent, ScalarField};
use crate::error::{Error, Result};
use crate::graph::{FiniteRegion, Graph, Vertex};

/// Order in which interior vertices are updated within a sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateOrder {
    /// Sorted vertex order, one vertex at a time.
    #[default]
    Sorted,
    /// Independent color classes (two on bipartite graphs) updated in
    /// parallel, one class per sub-sweep.
    RedBlack,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub p: Exponent,
    /// Stopping threshold on `max_{x ∈ S} |Δ_p f(x)|`. The estimated
    /// distance to the limit, `step ρ / (1 - ρ)` with `ρ` the ratio of the
    /// last two sweep steps, must also be below `tol`: for `p > 2` the
    /// Laplacian is degenerate where gradients are small, and a small
    /// residual alone leaves values uncertain by far more than `tol`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Absolute tolerance of the per-vertex root solve for `p >= 2`; for
    /// `p < 2` the root is resolved to machine precision.
    pub scalar_tol: f64,
    pub order: UpdateOrder,
}

impl SolverConfig {
    /// Defaults: `tol = 1e-10` for `p = 2`, `1e-8` otherwise.
    pub fn new(p: Exponent) -> Self {
        SolverConfig {
            p,
            tol: if p.get() == 2.0 { 1e-10 } else { 1e-8 },
            max_sweeps: 500_000,
            scalar_tol: 1e-14,
            order: UpdateOrder::Sorted,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_order(mut self, order: UpdateOrder) -> Self {
        self.order = order;
        self
    }

    pub fn with_max_sweeps(mut self, max_sweeps: usize) -> Self {
        self.max_sweeps = max_sweeps;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            problems.push(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_sweeps < 1 {
            problems.push("max_sweeps must be at least 1".to_string());
        }
        if !(self.scalar_tol > 0.0 && self.scalar_tol.is_finite()) {
            problems.push(format!("scalar_tol must be positive, got {}", self.scalar_tol));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(problems.join("; ")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    /// Solution on `S ∪ ∂S`.
    pub field: ScalarField,
    pub max_residual: f64,
    /// Region energy before the first sweep and after each sweep.
    pub energy_trace: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// Solves `Δ_p h = 0` on `region.S` with `h = boundary` on `∂S`, starting
/// from the boundary mean.
pub fn solve_dirichlet(g: &Graph, region: &FiniteRegion, boundary: &ScalarField, cfg: &SolverConfig) -> Result<SolveReport> {
    solve_dirichlet_from(g, region, boundary, None, cfg)
}

/// As [`solve_dirichlet`], with an optional initial guess on the interior.
/// Initial values are clamped into the boundary envelope.
pub fn solve_dirichlet_from(
    g: &Graph,
    region: &FiniteRegion,
    boundary: &ScalarField,
    init: Option<&ScalarField>,
    cfg: &SolverConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let mut problem = LocalProblem::build(g, region, boundary)?;
    if let Some(init) = init {
        problem.initialize(init)?;
    }
    let (max_residual, energy_trace, sweeps, converged) = problem.run(cfg);
    debug_assert!(problem.within_envelope());
    Ok(SolveReport { field: problem.into_field(), max_residual, energy_trace, sweeps, converged })
}

/// `max_{x ∈ S} |Δ_p f(x)|`.
pub fn residual<'a>(g: &Graph, f: &ScalarField, s: impl IntoIterator<Item = &'a Vertex>, p: Exponent) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for x in s {
        worst = worst.max(crate::energy::p_laplacian(g, f, x, p)?.abs());
    }
    Ok(worst)
}

/// Unique `t` in `[min, max]` of `values` with `Σ |v - t|^(p-2) (v - t) = 0`,
/// the exact minimizer of `t ↦ Σ |v - t|^p`.
///
/// Newton steps are taken when they stay inside the current bracket, and
/// bisection otherwise.
pub fn coordinate_minimizer(values: &[f64], p: Exponent, start: f64, scalar_tol: f64) -> f64 {
    let (mut lo, mut hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo {
        return lo;
    }
    if p.get() == 2.0 {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        return mean.clamp(lo, hi);
    }
    let e = p.get();
    // For p < 2, phi is not Lipschitz at 0: an error of 1e-14 in t can leave a
    // local residual near 1e-7, so the root is resolved to the last bit.
    let precise = e < 2.0;
    let mut t = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    let mut last_step = hi - lo;
    for _ in 0..200 {
        let mut g = 0.0;
        let mut dg = 0.0;
        let mut singular = false;
        for &v in values {
            let d = v - t;
            if d == 0.0 {
                singular |= precise;
                continue;
            }
            let a = p.weight(d);
            g += a * d;
            dg += a;
        }
        if g == 0.0 {
            return t;
        }
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            return t;
        }
        if !precise && hi - lo <= scalar_tol {
            return mid;
        }
        let newton = if !singular && dg > 0.0 { t + g / ((e - 1.0) * dg) } else { f64::NAN };
        if newton == t {
            return t;
        }
        // Newton must land inside the bracket and at least halve the previous step
        let next = if newton > lo && newton < hi && 2.0 * (newton - t).abs() <= last_step { newton } else { mid };
        last_step = (next - t).abs();
        if !precise && last_step <= scalar_tol {
            return next;
        }
        t = next;
    }
    t
}

/// Region relabelled `0..n` with interior vertices first.
struct LocalProblem {
    vertices: Vec<Vertex>,
    n_interior: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    values: Vec<f64>,
    /// Interior values before the current sweep.
    previous: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl LocalProblem {
    fn build(g: &Graph, region: &FiniteRegion, boundary: &ScalarField) -> Result<Self> {
        if region.interior().is_empty() {
            return Err(Error::EmptySet);
        }
        if region.boundary().is_empty() {
            return Err(Error::NoBoundary);
        }
        let vertices: Vec<Vertex> = region.interior().iter().chain(region.boundary()).cloned().collect();
        let n_interior = region.interior().len();
        let index: HashMap<&Vertex, usize> = vertices.iter().enumerate().map(|(i, v)| (v, i)).collect();

        let mut values = vec![0.0; vertices.len()];
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for (i, v) in vertices.iter().enumerate().skip(n_interior) {
            let b = boundary.get(v)?;
            if !b.is_finite() {
                return Err(Error::NonFinite { vertex: v.clone() });
            }
            values[i] = b;
            lo = lo.min(b);
            hi = hi.max(b);
            sum += b;
        }
        let mean = sum / region.boundary().len() as f64;
        values[..n_interior].fill(mean.clamp(lo, hi));

        let mut offsets = Vec::with_capacity(n_interior + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for x in &vertices[..n_interior] {
            for y in g.neighbors(x) {
                let j = *index.get(&y).ok_or_else(|| Error::Undefined(y.clone()))?;
                neighbors.push(j);
            }
            offsets.push(neighbors.len());
        }
        Ok(LocalProblem { vertices, n_interior, offsets, neighbors, values, previous: vec![0.0; n_interior], lo, hi })
    }

    fn initialize(&mut self, init: &ScalarField) -> Result<()> {
        for i in 0..self.n_interior {
            let x = init.get(&self.vertices[i])?;
            if !x.is_finite() {
                return Err(Error::NonFinite { vertex: self.vertices[i].clone() });
            }
            self.values[i] = x.clamp(self.lo, self.hi);
        }
        Ok(())
    }

    fn nbrs(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    fn update(&self, i: usize, p: Exponent, scalar_tol: f64, scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend(self.nbrs(i).iter().map(|&j| self.values[j]));
        coordinate_minimizer(scratch, p, self.values[i], scalar_tol)
    }

    /// Returns `(max |Δ_p|, region energy)` for the current values.
    fn measure(&self, p: Exponent) -> (f64, f64) {
        let mut worst: f64 = 0.0;
        let mut energy = 0.0;
        for i in 0..self.n_interior {
            let fx = self.values[i];
            let mut lap = 0.0;
            for &j in self.nbrs(i) {
                let d = self.values[j] - fx;
                if d == 0.0 {
                    continue;
                }
                let a = p.weight(d) * d;
                lap += a;
                let w = a * d;
                energy += if j < self.n_interior { w } else { 2.0 * w };
            }
            worst = worst.max(lap.abs());
        }
        (worst, energy)
    }

    /// Block update for `p < 2`. Adjacent interior vertices with (nearly)
    /// equal values jam: the coupling `|d|^p` is infinitely stiff at `d = 0`,
    /// so a single-vertex update can only move by about the square of its
    /// residual. Each cluster of such vertices is moved as one coordinate to
    /// the exact minimizer of its outside edges; the move is kept only if it
    /// does not raise the energy of the edges touching the cluster. Rejected
    /// clusters are split again at tighter gaps, down to exact equality.
    fn fuse_clusters(&mut self, p: Exponent, scalar_tol: f64) {
        let n = self.n_interior;
        let span = self.hi - self.lo;
        // usize::MAX: eligible; DONE: fused or isolated at an earlier level
        const DONE: usize = usize::MAX - 1;
        let mut stamp = vec![usize::MAX; n];
        let (mut members, mut outside, mut stack) = (Vec::new(), Vec::new(), Vec::new());
        for gap in [1e-6 * span, 1e-9 * span, 1e-12 * span, 0.0] {
            let mut rejected = Vec::new();
            for s in 0..n {
                if stamp[s] != usize::MAX {
                    continue;
                }
                stamp[s] = s;
                members.clear();
                stack.push(s);
                while let Some(i) = stack.pop() {
                    members.push(i);
                    for &j in self.nbrs(i) {
                        if j < n && stamp[j] == usize::MAX && (self.values[j] - self.values[i]).abs() <= gap {
                            stamp[j] = s;
                            stack.push(j);
                        }
                    }
                }
                if members.len() >= 2 && !self.try_fuse(&members, &|j| j < n && stamp[j] == s, p, scalar_tol, &mut outside) {
                    rejected.extend_from_slice(&members);
                }
                for &i in &members {
                    stamp[i] = DONE;
                }
            }
            if rejected.is_empty() {
                return;
            }
            for &i in &rejected {
                stamp[i] = usize::MAX;
            }
        }
    }

    /// Moves `block` to one common value if that does not raise the energy
    /// of the edges touching it.
    fn try_fuse(&mut self, block: &[usize], in_block: &dyn Fn(usize) -> bool, p: Exponent, scalar_tol: f64, outside: &mut Vec<f64>) -> bool {
        outside.clear();
        let mut before = 0.0;
        for &i in block {
            for &j in self.nbrs(i) {
                let w = p.abs_pow(self.values[j] - self.values[i]);
                if in_block(j) {
                    before += 0.5 * w;
                } else {
                    before += w;
                    outside.push(self.values[j]);
                }
            }
        }
        if outside.is_empty() {
            return false;
        }
        let t = coordinate_minimizer(outside, p, self.values[block[0]], scalar_tol);
        let after: f64 = outside.iter().map(|&v| p.abs_pow(v - t)).sum();
        // ties within rounding are accepted: at ulp-sized spreads the
        // comparison is pure noise and rejecting would leave the jam
        if after <= before * (1.0 + 8.0 * f64::EPSILON) {
            for &i in block {
                self.values[i] = t;
            }
            return true;
        }
        false
    }

    /// Greedy coloring of the interior into classes of pairwise non-adjacent vertices.
    fn color_classes(&self) -> Vec<Vec<usize>> {
        let mut color = vec![usize::MAX; self.n_interior];
        let mut classes: Vec<Vec<usize>> = Vec::new();
        for i in 0..self.n_interior {
            let used: Vec<usize> =
                self.nbrs(i).iter().filter(|&&j| j < self.n_interior).map(|&j| color[j]).collect();
            let c = (0..).find(|c| !used.contains(c)).expect("some color is free");
            color[i] = c;
            if c == classes.len() {
                classes.push(Vec::new());
            }
            classes[c].push(i);
        }
        classes
    }

    fn run(&mut self, cfg: &SolverConfig) -> (f64, Vec<f64>, usize, bool) {
        let p = cfg.p;
        let (mut res, energy) = self.measure(p);
        let mut trace = vec![energy];
        if res <= cfg.tol {
            return (res, trace, 0, true);
        }
        let classes = match cfg.order {
            UpdateOrder::Sorted => Vec::new(),
            UpdateOrder::RedBlack => self.color_classes(),
        };
        let mut scratch = Vec::with_capacity(16);
        // steps at this size are rounding noise, with no contraction to measure
        let floor = 16.0 * f64::EPSILON * self.lo.abs().max(self.hi.abs());
        let mut prev_step = f64::INFINITY;
        for sweep in 1..=cfg.max_sweeps {
            self.previous.copy_from_slice(&self.values[..self.n_interior]);
            match cfg.order {
                UpdateOrder::Sorted => {
                    for i in 0..self.n_interior {
                        self.values[i] = self.update(i, p, cfg.scalar_tol, &mut scratch);
                    }
                }
                UpdateOrder::RedBlack => {
                    for class in &classes {
                        let fresh: Vec<f64> = if class.len() >= 2048 {
                            class
                                .par_iter()
                                .map_init(|| Vec::with_capacity(16), |buf, &i| self.update(i, p, cfg.scalar_tol, buf))
                                .collect()
                        } else {
                            class.iter().map(|&i| self.update(i, p, cfg.scalar_tol, &mut scratch)).collect()
                        };
                        for (&i, v) in class.iter().zip(fresh) {
                            self.values[i] = v;
                        }
                    }
                }
            }
            if p.get() < 2.0 {
                self.fuse_clusters(p, cfg.scalar_tol);
            }
            let (r, e) = self.measure(p);
            res = r;
            trace.push(e);
            let step = self.values.iter().zip(&self.previous).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            let rho = step / prev_step;
            let settled = step <= floor || (rho < 1.0 && step * rho / (1.0 - rho) <= cfg.tol && step <= cfg.tol);
            prev_step = step;
            if res <= cfg.tol && settled {
                return (res, trace, sweep, true);
            }
        }
        (res, trace, cfg.max_sweeps, false)
    }

    fn within_envelope(&self) -> bool {
        self.values[..self.n_interior].iter().all(|&x| x >= self.lo && x <= self.hi)
    }

    fn into_field(self) -> ScalarField {
        self.vertices.into_iter().zip(self.values).collect()
    }
}
