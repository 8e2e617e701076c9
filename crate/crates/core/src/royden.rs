//! Royden decomposition `f = u + h` of a bounded field by exhaustion.
//!
//! `h_n` is p-harmonic on `B_n(o)` and equal to `f` outside. The harmonic part
//! is certified only on a fixed observation window, by the sup-distance
//! between consecutive exhaustion radii.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{region_energy, ScalarField};
use crate::error::{Error, Result};
use crate::graph::{ball, Graph, Vertex};
use crate::solver::{solve_dirichlet, SolverConfig};

/// A bounded field given as an evaluation rule, with its declared bound.
#[derive(Clone)]
pub struct BoundedField {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
    rule: Arc<dyn Fn(&Vertex) -> f64 + Send + Sync>,
}

impl BoundedField {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64, rule: impl Fn(&Vertex) -> f64 + Send + Sync + 'static) -> Self {
        BoundedField { name: name.into(), lo, hi, rule: Arc::new(rule) }
    }

    pub fn constant(c: f64) -> Self {
        BoundedField::new(format!("constant {c}"), c, c, move |_| c)
    }

    /// Evaluates the rule, rejecting values outside `[lo, hi]`.
    pub fn eval(&self, v: &Vertex) -> Result<f64> {
        let x = (self.rule)(v);
        if x.is_finite() && x >= self.lo && x <= self.hi {
            Ok(x)
        } else {
            Err(Error::OutOfBounds { vertex: v.clone(), value: x, lo: self.lo, hi: self.hi })
        }
    }

    pub fn sample<'a>(&self, vertices: impl IntoIterator<Item = &'a Vertex>) -> Result<ScalarField> {
        vertices.into_iter().map(|v| self.eval(v).map(|x| (v.clone(), x))).collect()
    }
}

impl fmt::Debug for BoundedField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BoundedField").field("name", &self.name).field("lo", &self.lo).field("hi", &self.hi).finish()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExhaustionConfig {
    /// Convergence threshold on `sup_W |h_{n+1} - h_n|`.
    pub window_tol: f64,
    pub min_radii: usize,
}

impl Default for ExhaustionConfig {
    fn default() -> Self {
        ExhaustionConfig { window_tol: 1e-6, min_radii: 3 }
    }
}

/// One exhaustion step.
#[derive(Clone, Debug)]
pub struct ExhaustionStep {
    pub radius: usize,
    /// `h_n` on `B_n(o) ∪ ∂B_n(o)`.
    pub field: ScalarField,
    /// Region energy of `h_n` on the ball.
    pub energy: f64,
    /// `I_p(h_n, V) - I_p(f, V)`, nonincreasing in `n`; available when the
    /// data is defined inside the ball too.
    pub energy_excess: Option<f64>,
    pub sweeps: usize,
    pub max_residual: f64,
}

/// Solves the exhaustion problems for every radius (in parallel) with the
/// sphere data supplied by `data`. With `everywhere` set, `data` is a field
/// on all of `V` and the energy excess over it is recorded.
pub(crate) fn exhaust(
    g: &Graph,
    radii: &[usize],
    window: usize,
    cfg: &SolverConfig,
    data: &(dyn Fn(&Vertex) -> Result<f64> + Sync),
    everywhere: bool,
) -> Result<Vec<ExhaustionStep>> {
    if radii.is_empty() {
        return Err(Error::Config("no radii given".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("radii must be strictly increasing".into()));
    }
    if window < 1 || window > radii[0] {
        return Err(Error::WindowTooLarge(format!("window radius {window}, smallest ball radius {}", radii[0])));
    }
    radii
        .par_iter()
        .map(|&n| {
            let region = ball(g, g.base(), n)?;
            let boundary: ScalarField =
                region.boundary().iter().map(|v| data(v).map(|x| (v.clone(), x))).collect::<Result<_>>()?;
            let rep = solve_dirichlet(g, &region, &boundary, cfg)?;
            if !rep.converged {
                return Err(Error::NotConverged { residual: rep.max_residual, sweeps: rep.sweeps });
            }
            let energy = region_energy(g, &rep.field, &region, cfg.p)?;
            let energy_excess = if everywhere {
                let mut original = ScalarField::new();
                for v in region.closure() {
                    original.insert(v.clone(), data(&v)?);
                }
                Some(energy - region_energy(g, &original, &region, cfg.p)?)
            } else {
                None
            };
            Ok(ExhaustionStep {
                radius: n,
                field: rep.field,
                energy,
                energy_excess,
                sweeps: rep.sweeps,
                max_residual: rep.max_residual,
            })
        })
        .collect()
}

/// Window vertices `B_w(o)` in sorted order.
pub fn window_vertices(g: &Graph, window: usize) -> Result<BTreeSet<Vertex>> {
    Ok(ball(g, g.base(), window)?.interior().clone())
}

/// `sup_W |h_{n_{i+1}} - h_{n_i}|` for consecutive steps.
pub(crate) fn window_deltas(steps: &[ExhaustionStep], w: &BTreeSet<Vertex>) -> Result<Vec<f64>> {
    steps
        .windows(2)
        .map(|pair| {
            let mut worst: f64 = 0.0;
            for v in w {
                worst = worst.max((pair[1].field.get(v)? - pair[0].field.get(v)?).abs());
            }
            Ok(worst)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct DecompositionReport {
    pub radii: Vec<usize>,
    pub window: BTreeSet<Vertex>,
    /// Harmonic part on the window, from the largest radius.
    pub harmonic: ScalarField,
    /// `f - h` on the window.
    pub potential: ScalarField,
    pub sup_deltas: Vec<f64>,
    /// `max_W h_n - min_W h_n` per radius.
    pub window_oscillations: Vec<f64>,
    pub energy_excess: Vec<f64>,
    pub energy_monotone: bool,
    pub converged: bool,
    pub sweeps: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `h_N` on the whole largest ball, for inspection outside the window.
    pub last_field: ScalarField,
}

/// Harmonic part of `f` on the window `B_window(o)` via the exhaustion `radii`.
pub fn harmonic_part(
    g: &Graph,
    f: &BoundedField,
    radii: &[usize],
    window: usize,
    cfg: &SolverConfig,
    ecfg: &ExhaustionConfig,
) -> Result<DecompositionReport> {
    if !(f.lo <= f.hi) {
        return Err(Error::Config(format!("invalid bound [{}, {}]", f.lo, f.hi)));
    }
    let steps = exhaust(g, radii, window, cfg, &|v| f.eval(v), true)?;
    let w = window_vertices(g, window)?;
    let sup_deltas = window_deltas(&steps, &w)?;
    let window_oscillations = steps
        .iter()
        .map(|s| {
            let h = s.field.restrict(&w)?;
            Ok(h.max().unwrap_or(0.0) - h.min().unwrap_or(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let last = steps.last().expect("radii are nonempty");
    let harmonic = last.field.restrict(&w)?;
    let original = f.sample(&w)?;
    let potential = original.zip_with(&harmonic, |a, b| a - b);

    let energy_excess: Vec<f64> = steps.iter().filter_map(|s| s.energy_excess).collect();
    let slack = 1e-9 * energy_excess.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let energy_monotone = energy_excess.windows(2).all(|e| e[1] <= e[0] + slack);
    let converged =
        steps.len() >= ecfg.min_radii && sup_deltas.last().is_some_and(|&d| d < ecfg.window_tol);
    Ok(DecompositionReport {
        radii: radii.to_vec(),
        window: w,
        harmonic,
        potential,
        sup_deltas,
        window_oscillations,
        energy_excess,
        energy_monotone,
        converged,
        sweeps: steps.iter().map(|s| s.sweeps).collect(),
        residuals: steps.iter().map(|s| s.max_residual).collect(),
        last_field: last.field.clone(),
    })
}

/// `f = u + h` on the window: returns `(u, h, report)`.
pub fn decompose(
    g: &Graph,
    f: &BoundedField,
    radii: &[usize],
    window: usize,
    cfg: &SolverConfig,
    ecfg: &ExhaustionConfig,
) -> Result<(ScalarField, ScalarField, DecompositionReport)> {
    let report = harmonic_part(g, f, radii, window, cfg, ecfg)?;
    Ok((report.potential.clone(), report.harmonic.clone(), report))
}
