//! Randomized property suites shared by the property tests and the
//! acceptance target. Each returns a report with every violation spelled out.

use std::collections::BTreeMap;

use pharmonic::energy::{
    dirichlet_sum, gradient_p, norms, p_laplacian, pairing, region_energy, Exponent, ScalarField,
};
use pharmonic::graph::{ball, FiniteRegion, Graph, Vertex};
use pharmonic::solver::{solve_dirichlet, solve_dirichlet_from, SolverConfig, UpdateOrder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

#[derive(Debug, Default)]
pub struct SuiteReport {
    pub instances: usize,
    pub checks: usize,
    pub violations: Vec<String>,
    /// Largest observed `measured / allowed` per check.
    pub worst: BTreeMap<&'static str, f64>,
}

impl SuiteReport {
    fn check(&mut self, name: &'static str, measured: f64, allowed: f64, context: impl FnOnce() -> String) {
        self.checks += 1;
        let ratio = if allowed > 0.0 { measured / allowed } else if measured > 0.0 { f64::INFINITY } else { 0.0 };
        let w = self.worst.entry(name).or_insert(0.0);
        *w = w.max(ratio);
        if !(measured <= allowed) {
            self.violations.push(format!("{name}: {measured:.3e} > {allowed:.3e} ({})", context()));
        }
    }

    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        let worst: Vec<String> = self.worst.iter().map(|(k, v)| format!("{k} {v:.2}")).collect();
        format!(
            "{} instances, {} checks, {} violations; worst measured/allowed: {}",
            self.instances,
            self.checks,
            self.violations.len(),
            worst.join(", ")
        )
    }
}

/// Independent generator for instance `k`, so any instance can be replayed alone.
pub fn instance_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

pub const EXPONENTS: [f64; 4] = [1.5, 2.0, 3.0, 4.0];

/// Dirichlet solver properties on `n` random instances.
pub fn solver_suite(seed: u64, n: usize) -> SuiteReport {
    solver_suite_range(seed, 0, n)
}

/// Instances `start..end` of [`solver_suite`].
pub fn solver_suite_range(seed: u64, start: usize, end: usize) -> SuiteReport {
    let mut rep = SuiteReport::default();
    for k in start..end {
        let mut rng = instance_rng(seed, k);
        let inst = instance(&mut rng, k);
        let p = EXPONENTS[(k / 3) % 4];
        let e = exponent(p);
        let cfg = SolverConfig::new(e);
        let tol = cfg.tol;
        let (g, region, b) = (&inst.graph, &inst.region, &inst.boundary);
        let ctx = || format!("#{k} {} p={p}", inst.label);
        rep.instances += 1;

        let a = solve_dirichlet(g, region, b, &cfg).unwrap();
        rep.check("converged", if a.converged { 0.0 } else { 1.0 }, 0.0, ctx);
        let res = pharmonic::solver::residual(g, &a.field, region.interior(), e).unwrap();
        rep.check("residual", res, tol, ctx);

        let (lo, hi) = (b.min().unwrap(), b.max().unwrap());
        let outside = region.interior().iter().map(|v| a.field.get(v).unwrap()).fold(0.0f64, |m, x| m.max(lo - x).max(x - hi));
        rep.check("envelope", outside, 0.0, ctx);

        let energy = region_energy(g, &a.field, region, e).unwrap();
        for c in 0..20 {
            let eps = (hi - lo).max(1e-3) * 10f64.powi(-(c % 4) - 1);
            let comp = perturb(&mut rng, &a.field, region.interior(), eps);
            let l1: f64 = region.interior().iter().map(|v| (comp.get(v).unwrap() - a.field.get(v).unwrap()).abs()).sum();
            // convexity: E(c) >= E(h) - 2p Σ|Δ_p h| |c - h|, plus summation noise
            let slack = 2.0 * p * res * l1 + 1e-12 * energy.max(1.0);
            let ce = region_energy(g, &comp, region, e).unwrap();
            rep.check("minimizer", energy - ce, slack, ctx);
        }

        let trace_up = a.energy_trace.windows(2).map(|w| w[1] - w[0] - 1e-12 * w[0].abs()).fold(0.0f64, f64::max);
        rep.check("energy-monotone", trace_up, 0.0, ctx);

        let init = ScalarField::from_fn(region.interior().iter(), |_| rng.gen_range(lo..=hi));
        let r = solve_dirichlet_from(g, region, b, Some(&init), &cfg).unwrap();
        rep.check("converged", if r.converged { 0.0 } else { 1.0 }, 0.0, ctx);
        rep.check("init-independence", a.field.sup_distance(&r.field), 10.0 * tol, ctx);

        let lower = b.map(|x| x - rng.gen_range(0.0..0.5));
        let l = solve_dirichlet(g, region, &lower, &cfg).unwrap();
        rep.check("converged", if l.converged { 0.0 } else { 1.0 }, 0.0, ctx);
        let worst_cross = region.interior().iter().map(|v| l.field.get(v).unwrap() - a.field.get(v).unwrap()).fold(0.0f64, f64::max);
        rep.check("comparison", worst_cross, 10.0 * tol, ctx);

        let rb = solve_dirichlet(g, region, b, &cfg.with_order(UpdateOrder::RedBlack)).unwrap();
        rep.check("converged", if rb.converged { 0.0 } else { 1.0 }, 0.0, ctx);
        rep.check("red-black", a.field.sup_distance(&rb.field), 10.0 * tol, ctx);

        if p == 2.0 {
            let lin = linear_dirichlet(g, region, b);
            rep.check("linear-oracle", a.field.sup_distance(&lin), 10.0 * tol, ctx);
        }

    }
    rep
}

fn random_field(rng: &mut ChaCha8Rng, vertices: &std::collections::BTreeSet<Vertex>, support: f64) -> ScalarField {
    ScalarField::from_fn(vertices.iter(), |_| if rng.gen_bool(support) { rng.gen_range(-2.0..2.0) } else { 0.0 })
}

/// Energy identities on `n` random fields over balls of Z², F₂ and random
/// graphs. Every check allows `1e-9` relative slack.
pub fn energy_suite(seed: u64, n: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = SuiteReport::default();
    let slack = |scale: f64| 1e-9 * scale.abs().max(1.0);
    for k in 0..n {
        let (g, centre_ball) = match k % 3 {
            0 => {
                let g = lattice(2);
                let b = ball(&g, g.base(), rng.gen_range(2..=4)).unwrap();
                (g, b)
            }
            1 => {
                let g = free(2);
                let b = ball(&g, g.base(), rng.gen_range(2..=3)).unwrap();
                (g, b)
            }
            _ => {
                let n = rng.gen_range(10..=60);
                let (g, _) = random_graph(&mut rng, n, 5);
                let all = g.vertices().unwrap();
                let s: std::collections::BTreeSet<Vertex> = all.iter().take(all.len() - 1).cloned().collect();
                let b = FiniteRegion::new(&g, s).unwrap();
                (g, b)
            }
        };
        let p = [1.2, 1.5, 2.0, 2.5, 3.0, 4.0][rng.gen_range(0..6)];
        let e = exponent(p);
        let s = centre_ball.interior();
        let closure = centre_ball.closure();
        let f = random_field(&mut rng, &closure, 0.8);
        let h = random_field(&mut rng, &closure, 0.8);
        rep.instances += 1;
        let ctx = || format!("instance {k}, p={p}");

        // Clarkson inequalities for the gradient seminorm on S
        let i = |u: &ScalarField| dirichlet_sum(&g, u, s, e).unwrap();
        let sum = f.zip_with(&h, |a, b| (a + b) / 2.0);
        let diff = f.zip_with(&h, |a, b| (a - b) / 2.0);
        if p >= 2.0 {
            let lhs = i(&sum) + i(&diff);
            let rhs = 0.5 * (i(&f) + i(&h));
            rep.check("clarkson-p>=2", lhs - rhs, slack(rhs), ctx);
        } else {
            let q = e.conjugate();
            let lhs = i(&sum).powf(q - 1.0) + i(&diff).powf(q - 1.0);
            let rhs = (0.5 * i(&f) + 0.5 * i(&h)).powf(q - 1.0);
            rep.check("clarkson-p<2", lhs - rhs, slack(rhs), ctx);
        }

        // product bound: |D(fh)|_p <= sup|f| |Dh|_p + sup|h| |Df|_p pointwise
        let prod = f.zip_with(&h, |a, b| a * b);
        for x in s {
            let lhs = gradient_p(&g, &prod, x, e).unwrap().powf(1.0 / p);
            let rhs = f.sup_abs() * gradient_p(&g, &h, x, e).unwrap().powf(1.0 / p)
                + h.sup_abs() * gradient_p(&g, &f, x, e).unwrap().powf(1.0 / p);
            rep.check("product", lhs - rhs, slack(rhs), ctx);
        }

        // Hölder bound for the pairing with a test field supported in S
        let phi = phi_extended(&random_field(&mut rng, s, 0.5), &closure);
        let pair = pairing(&g, &h, &phi, s, e).unwrap();
        let holder = region_energy_on(&g, &h, s, e).powf((p - 1.0) / p) * region_energy_on(&g, &phi, s, e).powf(1.0 / p);
        rep.check("holder", pair.abs() - holder, slack(holder), ctx);

        // pairing with δ_x is -2 Δ_p h(x)
        for x in s.iter().take(5) {
            let delta = ScalarField::indicator(closure.iter(), x);
            let lhs = pairing(&g, &h, &delta, &[x.clone()].into(), e).unwrap();
            let rhs = -2.0 * p_laplacian(&g, &h, x, e).unwrap();
            rep.check("pairing-delta", (lhs - rhs).abs(), slack(rhs), ctx);
        }

        // Δ_2 is the graph Laplacian
        let two = exponent(2.0);
        for x in s.iter().take(5) {
            let lap = p_laplacian(&g, &f, x, two).unwrap();
            let fx = f.get(x).unwrap();
            let direct: f64 = g.neighbors(x).iter().map(|y| f.get(y).unwrap()).sum::<f64>() - g.degree(x) as f64 * fx;
            rep.check("laplacian-2", (lap - direct).abs(), slack(direct), ctx);
        }

        // norms: BD_p = gradient part + sup, D_p includes the base value
        if s.contains(g.base()) {
            let region = FiniteRegion::new(&g, s.clone()).unwrap();
            let nrm = norms(&g, &f, &region, e).unwrap();
            let ip = dirichlet_sum(&g, &f, s, e).unwrap();
            let want_dp = (ip + f.get(g.base()).unwrap().abs().powf(p)).powf(1.0 / p);
            rep.check("dp-norm", (nrm.dp - want_dp).abs(), slack(want_dp), ctx);
        }
    }
    rep
}

fn phi_extended(phi: &ScalarField, closure: &std::collections::BTreeSet<Vertex>) -> ScalarField {
    ScalarField::from_fn(closure.iter(), |v| phi.value(v).unwrap_or(0.0))
}

/// Energy over ordered pairs with an endpoint in `S`: every pair on which a
/// field supported in `S` can have a nonzero difference.
fn region_energy_on(g: &Graph, f: &ScalarField, s: &std::collections::BTreeSet<Vertex>, e: Exponent) -> f64 {
    let region = FiniteRegion::new(g, s.clone()).unwrap();
    region_energy(g, f, &region, e).unwrap()
}
