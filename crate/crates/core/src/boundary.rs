//! Finite surrogates for the p-harmonic boundary: inner potentials of
//! massive sets, superlevel components, extension of prescribed end values,
//! and the search for nonconstant bounded p-harmonic functions.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::ScalarField;
use crate::error::{Error, Result};
use crate::graph::{ball, outer_boundary, FiniteRegion, Graph, Vertex};
use crate::royden::{exhaust, harmonic_part, window_deltas, window_vertices, BoundedField, ExhaustionConfig};
use crate::solver::{solve_dirichlet, SolverConfig};

/// Membership rule for an infinite vertex set.
#[derive(Clone)]
pub struct VertexSet {
    pub name: String,
    rule: Arc<dyn Fn(&Vertex) -> bool + Send + Sync>,
}

impl VertexSet {
    pub fn new(name: impl Into<String>, rule: impl Fn(&Vertex) -> bool + Send + Sync + 'static) -> Self {
        VertexSet { name: name.into(), rule: Arc::new(rule) }
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        (self.rule)(v)
    }
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VertexSet({})", self.name)
    }
}

/// Free-group words whose first letter is `letter`.
pub fn branch(letter: i32) -> VertexSet {
    let name = Vertex::Word(vec![letter]).to_string();
    VertexSet::new(format!("branch {name}"), move |v| matches!(v, Vertex::Word(w) if w.first() == Some(&letter)))
}

/// Lattice points with positive coordinate `axis`.
pub fn half_space(axis: usize) -> VertexSet {
    VertexSet::new(format!("x{} > 0", axis + 1), move |v| matches!(v, Vertex::Point(c) if c.get(axis).is_some_and(|&x| x > 0)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundaryConfig {
    /// Minimal window oscillation of a witness.
    pub oscillation_threshold: f64,
    /// Fraction of the last window sup that the extrapolated limit of an
    /// inner potential must keep for the trend to count as sustained.
    pub persistence: f64,
    /// Window tolerance for probe harmonic parts in the verdict. Only has to
    /// resolve the oscillation threshold, so it is looser than the
    /// decomposition default.
    pub verdict_window_tol: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig { oscillation_threshold: 1e-2, persistence: 0.5, verdict_window_tol: 5e-3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialTrend {
    /// The window sup settles at a positive level.
    Sustained,
    /// The window sup extrapolates to (nearly) zero.
    Collapsing,
    Undetermined,
}

#[derive(Clone, Debug)]
pub struct MassiveSetReport {
    pub set: String,
    pub radii: Vec<usize>,
    /// `U ∩ B_N(o)` at the largest radius.
    pub component: BTreeSet<Vertex>,
    /// Unnormalized `sup_{U ∩ W} u_n` per radius (sphere data 1).
    pub window_sups: Vec<f64>,
    /// Potential at the largest radius, rescaled to `sup_{U ∩ W} u = 1`.
    pub potential: ScalarField,
    pub sup_attained: f64,
    pub min_value: f64,
    /// `max |u|` over `∂U` inside the working ball.
    pub boundary_max: f64,
    /// Residual of the rescaled potential on `U ∩ B_N(o)`.
    pub residual: f64,
    pub trend: PotentialTrend,
}

/// Inner potential of `U` by exhaustion: `u_n` is p-harmonic on
/// `U ∩ B_n(o)`, zero on `∂U` and one on the part of the sphere inside `U`.
pub fn inner_potential(
    g: &Graph,
    u_set: &VertexSet,
    radii: &[usize],
    window: usize,
    cfg: &SolverConfig,
    bcfg: &BoundaryConfig,
) -> Result<MassiveSetReport> {
    if radii.is_empty() || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("radii must be nonempty and strictly increasing".into()));
    }
    let w: BTreeSet<Vertex> = window_vertices(g, window)?.into_iter().filter(|v| u_set.contains(v)).collect();
    if w.is_empty() {
        return Err(Error::EmptySet);
    }
    let solves = radii
        .par_iter()
        .map(|&n| {
            let b = ball(g, g.base(), n)?;
            let inside: BTreeSet<Vertex> = b.interior().iter().filter(|v| u_set.contains(v)).cloned().collect();
            if inside.is_empty() {
                return Err(Error::EmptySet);
            }
            let region = FiniteRegion::new(g, inside)?;
            if !region.boundary().iter().any(|v| u_set.contains(v)) {
                return Err(Error::FiniteSet(n));
            }
            let data = ScalarField::from_fn(region.boundary().iter(), |v| if u_set.contains(v) { 1.0 } else { 0.0 });
            let rep = solve_dirichlet(g, &region, &data, cfg)?;
            if !rep.converged {
                return Err(Error::NotConverged { residual: rep.max_residual, sweeps: rep.sweeps });
            }
            Ok((region, rep.field))
        })
        .collect::<Result<Vec<_>>>()?;

    let window_sups = solves
        .iter()
        .map(|(_, f)| w.iter().map(|v| f.get(v)).try_fold(0.0f64, |m, x| x.map(|x| m.max(x))))
        .collect::<Result<Vec<f64>>>()?;
    let (region, field) = solves.into_iter().last().expect("radii are nonempty");
    let scale = *window_sups.last().expect("radii are nonempty");
    if scale <= 0.0 {
        return Err(Error::FiniteSet(*radii.last().expect("nonempty")));
    }
    let potential = field.map(|x| x / scale);
    let sup_attained = w.iter().map(|v| potential.get(v)).try_fold(0.0f64, |m, x| x.map(|x| m.max(x)))?;
    let min_value = potential.min().unwrap_or(0.0);
    let boundary_max = region
        .boundary()
        .iter()
        .filter(|v| !u_set.contains(v))
        .map(|v| potential.get(v).map(f64::abs))
        .try_fold(0.0f64, |m, x| x.map(|x| m.max(x)))?;
    let residual = crate::solver::residual(g, &potential, region.interior(), cfg.p)?;

    let trend = potential_trend(&window_sups, bcfg.persistence);
    Ok(MassiveSetReport {
        set: u_set.name.clone(),
        radii: radii.to_vec(),
        component: region.interior().clone(),
        window_sups,
        potential,
        sup_attained,
        min_value,
        boundary_max,
        residual,
        trend,
    })
}

/// Trend of the window sups from their last three values. Decreasing tails
/// are extrapolated geometrically (Aitken); the potential is sustained when
/// the limit keeps at least `persistence` of the last sup.
fn potential_trend(sups: &[f64], persistence: f64) -> PotentialTrend {
    let [s0, s1, s2] = match sups {
        [.., a, b, c] => [*a, *b, *c],
        _ => return PotentialTrend::Undetermined,
    };
    let (d1, d2) = (s0 - s1, s1 - s2);
    if s2 > 0.0 && d1 <= 0.0 && d2 <= 0.0 {
        return PotentialTrend::Sustained;
    }
    if !(d1 > 0.0 && d2 > 0.0) {
        return PotentialTrend::Undetermined;
    }
    let r = d2 / d1;
    let limit = if r < 1.0 { s2 - d2 * r / (1.0 - r) } else { f64::NEG_INFINITY };
    if limit >= persistence * s2 {
        PotentialTrend::Sustained
    } else {
        PotentialTrend::Collapsing
    }
}

/// A connected component of a strict superlevel set.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub vertices: BTreeSet<Vertex>,
    pub boundary: BTreeSet<Vertex>,
}

/// Components of `{x : h(x) > eps}` among the vertices valued by `h`,
/// ordered by their smallest vertex.
pub fn sublevel_components(g: &Graph, h: &ScalarField, eps: f64) -> Result<Vec<Component>> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("level must lie in (0, 1), got {eps}")));
    }
    h.validate()?;
    let above: BTreeSet<&Vertex> = h.iter().filter(|(_, x)| *x > eps).map(|(v, _)| v).collect();
    let mut seen: BTreeSet<&Vertex> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in &above {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = BTreeSet::from([start.clone()]);
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(x) = queue.pop_front() {
            for y in g.neighbors(&x) {
                if let Some(&yr) = above.get(&y) {
                    if seen.insert(yr) {
                        comp.insert(y.clone());
                        queue.push_back(y);
                    }
                }
            }
        }
        let boundary = outer_boundary(g, &comp)?;
        out.push(Component { vertices: comp, boundary });
    }
    Ok(out)
}

/// Finitely many labelled ends, each with a target value.
#[derive(Clone)]
pub struct EndSpec {
    pub labels: Vec<String>,
    pub values: Vec<f64>,
    rule: Arc<dyn Fn(&Vertex) -> Option<usize> + Send + Sync>,
}

impl EndSpec {
    pub fn new(
        labels: Vec<String>,
        values: Vec<f64>,
        rule: impl Fn(&Vertex) -> Option<usize> + Send + Sync + 'static,
    ) -> Result<Self> {
        if labels.is_empty() || labels.len() != values.len() {
            return Err(Error::Config("ends need one value per label and at least one label".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("end value {v} is not finite")));
        }
        Ok(EndSpec { labels, values, rule: Arc::new(rule) })
    }

    /// Ends of a free group by the first letter of the reduced word; `values`
    /// lists `(letter, value)` pairs such as `("a", 1.0)`.
    pub fn free_branches(values: &[(String, f64)]) -> Result<Self> {
        let letters = values
            .iter()
            .map(|(l, _)| match Vertex::word(l)? {
                Vertex::Word(w) if w.len() == 1 => Ok(w[0]),
                _ => Err(Error::Config(format!("`{l}` is not a single generator"))),
            })
            .collect::<Result<Vec<i32>>>()?;
        let rule_letters = letters.clone();
        EndSpec::new(
            values.iter().map(|(l, _)| l.clone()).collect(),
            values.iter().map(|(_, x)| *x).collect(),
            move |v| match v {
                Vertex::Word(w) => w.first().and_then(|f| rule_letters.iter().position(|l| l == f)),
                _ => None,
            },
        )
    }

    /// Ends of a lattice by the sign of one coordinate: label `+` for
    /// `x_axis ≥ 0`, `-` otherwise.
    pub fn lattice_sign(axis: usize, plus: f64, minus: f64) -> Result<Self> {
        EndSpec::new(vec!["+".into(), "-".into()], vec![plus, minus], move |v| match v {
            Vertex::Point(c) => c.get(axis).map(|&x| if x >= 0 { 0 } else { 1 }),
            _ => None,
        })
    }

    pub fn label_of(&self, v: &Vertex) -> Result<usize> {
        match (self.rule)(v) {
            Some(i) if i < self.values.len() => Ok(i),
            _ => Err(Error::Partition(v.clone())),
        }
    }

    pub fn value_of(&self, v: &Vertex) -> Result<f64> {
        Ok(self.values[self.label_of(v)?])
    }
}

impl fmt::Debug for EndSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EndSpec").field("labels", &self.labels).field("values", &self.values).finish()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EndLimit {
    pub label: String,
    pub target: f64,
    /// Average of `h` over the end's vertices at the probe depth.
    pub deep_average: f64,
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct EndExtension {
    pub radii: Vec<usize>,
    /// Extension on the window, from the largest radius.
    pub window_field: ScalarField,
    pub base_value: f64,
    pub sup_deltas: Vec<f64>,
    pub converged: bool,
    pub ends: Vec<EndLimit>,
    pub sweeps: Vec<usize>,
    pub residuals: Vec<f64>,
    /// Values at the base vertex for each radius.
    pub base_trace: Vec<f64>,
}

/// Extends end values to a p-harmonic function: for each radius the sphere
/// takes the value of its end. `depth` selects the layer used for the
/// per-end averages, defaulting to the last interior layer of the largest ball.
pub fn extend_ends(
    g: &Graph,
    ends: &EndSpec,
    radii: &[usize],
    window: usize,
    depth: Option<usize>,
    cfg: &SolverConfig,
    ecfg: &ExhaustionConfig,
) -> Result<EndExtension> {
    let steps = exhaust(g, radii, window, cfg, &|v| ends.value_of(v), false)?;
    let w = window_vertices(g, window)?;
    let sup_deltas = window_deltas(&steps, &w)?;
    let last = steps.last().expect("radii are nonempty");
    let n_max = last.radius;
    let depth = depth.unwrap_or(n_max - 1);
    if depth >= n_max {
        return Err(Error::Config(format!("probe depth {depth} must be below the largest radius {n_max}")));
    }
    let layer = g.layers(g.base(), depth)?.pop().unwrap_or_default();
    let mut sums = vec![(0.0, 0usize); ends.labels.len()];
    for v in &layer {
        let i = ends.label_of(v)?;
        sums[i].0 += last.field.get(v)?;
        sums[i].1 += 1;
    }
    let limits = ends
        .labels
        .iter()
        .zip(&ends.values)
        .zip(sums)
        .map(|((label, &target), (s, k))| EndLimit {
            label: label.clone(),
            target,
            deep_average: if k > 0 { s / k as f64 } else { f64::NAN },
            depth,
        })
        .collect();
    let converged = steps.len() >= ecfg.min_radii && sup_deltas.last().is_some_and(|&d| d < ecfg.window_tol);
    Ok(EndExtension {
        radii: radii.to_vec(),
        window_field: last.field.restrict(&w)?,
        base_value: last.field.get(g.base())?,
        sup_deltas,
        converged,
        ends: limits,
        sweeps: steps.iter().map(|s| s.sweeps).collect(),
        residuals: steps.iter().map(|s| s.max_residual).collect(),
        base_trace: steps.iter().map(|s| s.field.get(g.base())).collect::<Result<_>>()?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HarmonicVerdict {
    /// No probe produced a converged nonconstant harmonic part at this scale.
    ConstantsOnlyEvidence,
    NonconstantFound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeStatus {
    Nonconstant,
    Constant,
    /// The window trace did not settle below the window tolerance.
    Inconclusive,
}

#[derive(Clone, Debug)]
pub struct ProbeOutcome {
    pub probe: String,
    pub status: ProbeStatus,
    /// `max_W h - min_W h` of the harmonic part at the largest radius.
    pub oscillation: f64,
    /// Window oscillation per radius; decays on Liouville graphs.
    pub oscillation_trace: Vec<f64>,
    pub sup_deltas: Vec<f64>,
    pub harmonic: ScalarField,
}

#[derive(Clone, Debug)]
pub struct VerdictReport {
    pub verdict: HarmonicVerdict,
    /// Index into `probes` of the witness, when one was found.
    pub witness: Option<usize>,
    pub probes: Vec<ProbeOutcome>,
}

/// Default probes: the sign indicator of the first coordinate on lattices,
/// the branch indicator of the first generator on free groups, and the
/// lifted factor probes on products. Symmetry makes the other axes and
/// generators redundant. Finite graphs get none.
pub fn default_probes(spec: &crate::graph::FamilySpec) -> Vec<BoundedField> {
    use crate::graph::FamilySpec;
    match spec {
        FamilySpec::EdgeList { .. } => Vec::new(),
        FamilySpec::Lattice { .. } => {
            let s = half_space(0);
            vec![BoundedField::new(format!("indicator of {}", s.name), 0.0, 1.0, move |v| f64::from(u8::from(s.contains(v))))]
        }
        FamilySpec::Free { .. } => {
            let s = branch(1);
            vec![BoundedField::new(format!("indicator of {}", s.name), 0.0, 1.0, move |v| f64::from(u8::from(s.contains(v))))]
        }
        FamilySpec::Product { factors } => factors
            .iter()
            .enumerate()
            .flat_map(|(i, f)| {
                default_probes(f).into_iter().map(move |probe| {
                    let inner = probe.clone();
                    BoundedField::new(format!("factor {i}: {}", probe.name), probe.lo, probe.hi, move |v| match v {
                        Vertex::Tuple(parts) => inner.eval(&parts[i]).unwrap_or(f64::NAN),
                        _ => f64::NAN,
                    })
                })
            })
            .collect(),
    }
}

/// Runs the harmonic part of each probe and reports whether any of them
/// converged on the window to a nonconstant function. Convergence is judged
/// against `bcfg.verdict_window_tol` rather than `ecfg.window_tol`.
pub fn nonconstant_harmonic_verdict(
    g: &Graph,
    probes: &[BoundedField],
    radii: &[usize],
    window: usize,
    cfg: &SolverConfig,
    ecfg: &ExhaustionConfig,
    bcfg: &BoundaryConfig,
) -> Result<VerdictReport> {
    let ecfg = ExhaustionConfig { window_tol: bcfg.verdict_window_tol, ..*ecfg };
    let mut outcomes = Vec::with_capacity(probes.len());
    for probe in probes {
        let rep = harmonic_part(g, probe, radii, window, cfg, &ecfg)?;
        let oscillation = rep.harmonic.max().unwrap_or(0.0) - rep.harmonic.min().unwrap_or(0.0);
        let status = match (rep.converged, oscillation > bcfg.oscillation_threshold) {
            (true, true) => ProbeStatus::Nonconstant,
            (true, false) => ProbeStatus::Constant,
            (false, _) => ProbeStatus::Inconclusive,
        };
        outcomes.push(ProbeOutcome {
            probe: probe.name.clone(),
            status,
            oscillation,
            oscillation_trace: rep.window_oscillations,
            sup_deltas: rep.sup_deltas,
            harmonic: rep.harmonic,
        });
    }
    let witness = outcomes.iter().position(|o| o.status == ProbeStatus::Nonconstant);
    let verdict = if witness.is_some() { HarmonicVerdict::NonconstantFound } else { HarmonicVerdict::ConstantsOnlyEvidence };
    Ok(VerdictReport { verdict, witness, probes: outcomes })
}
