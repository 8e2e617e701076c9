//! Command-line front end.
//!
//! Every run is described by a [`RunConfig`], assembled from an optional
//! JSON config file and the command-line flags (flags win). The output
//! document echoes the fully resolved config, so feeding its `config` object
//! back through `--config` reproduces the run byte for byte.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::boundary::{
    branch, default_probes, extend_ends, half_space, inner_potential, nonconstant_harmonic_verdict, BoundaryConfig,
    EndSpec, HarmonicVerdict, VertexSet,
};
use crate::capacity::{capacity_sequence, classify, ClassifierConfig};
use crate::energy::{region_energy, Exponent, ScalarField};
use crate::error::Error;
use crate::graph::{ball, cayley, FamilySpec, FiniteRegion, Graph, Vertex};
use crate::royden::{harmonic_part, BoundedField, ExhaustionConfig};
use crate::solver::{solve_dirichlet, SolverConfig, UpdateOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Solve,
    Capacity,
    Classify,
    Decompose,
    Potential,
    Extend,
    Verdict,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Either a named family (`zn` with `dim`, `free` with `rank`) or an
/// edge-list file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub family: Option<String>,
    pub dim: Option<usize>,
    pub rank: Option<usize>,
    pub path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndValue {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Residual tolerance; unset means the exponent-dependent default.
    pub tol: Option<f64>,
    pub max_sweeps: usize,
    pub scalar_tol: f64,
    pub order: UpdateOrder,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings { tol: None, max_sweeps: 500_000, scalar_tol: 1e-14, order: UpdateOrder::Sorted }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<String>,
    pub format: Format,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub graph: GraphConfig,
    pub p: f64,
    pub radii: Vec<usize>,
    /// Vertex names of the capacity set.
    pub set: Vec<String>,
    /// Explicit interior for `solve`; empty means one ball per radius.
    pub interior: Vec<String>,
    /// Field used by `solve` and `decompose`.
    pub field: String,
    /// Vertex set used by `potential`.
    pub subset: String,
    pub ends: Vec<EndValue>,
    pub depth: Option<usize>,
    /// Precomputed capacities for `classify`; empty means compute them.
    pub values: Vec<f64>,
    pub window: usize,
    pub solver: SolverSettings,
    pub exhaustion: ExhaustionConfig,
    pub classifier: ClassifierConfig,
    pub boundary: BoundaryConfig,
    /// Seed of the random competitors checked against each solve.
    pub seed: u64,
    pub competitors: usize,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            graph: GraphConfig::default(),
            p: 2.0,
            radii: Vec::new(),
            set: vec!["origin".into()],
            interior: Vec::new(),
            field: "default".into(),
            subset: "default".into(),
            ends: Vec::new(),
            depth: None,
            values: Vec::new(),
            window: 3,
            solver: SolverSettings::default(),
            exhaustion: ExhaustionConfig::default(),
            classifier: ClassifierConfig::default(),
            boundary: BoundaryConfig::default(),
            seed: 0,
            competitors: 20,
            output: OutputConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

fn violation(field: &str, message: impl Into<String>) -> Violation {
    Violation { field: field.into(), message: message.into() }
}

impl RunConfig {
    /// Fills exponent-dependent defaults.
    pub fn resolve(mut self) -> Self {
        if self.solver.tol.is_none() {
            self.solver.tol = Some(if self.p == 2.0 { 1e-10 } else { 1e-8 });
        }
        self
    }

    /// Every violated field, not just the first.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let Some(command) = self.command else {
            out.push(violation("command", "missing"));
            return out;
        };
        let g = &self.graph;
        match (g.family.as_deref(), &g.path) {
            (Some(_), Some(_)) => out.push(violation("graph", "give either a family or an edge-list path, not both")),
            // classifying given values needs no graph
            (None, None) if command == Command::Classify && !self.values.is_empty() => {}
            (None, None) => out.push(violation("graph", "give a family (--family) or an edge-list path (--graph)")),
            (Some("zn"), None) => {
                if !g.dim.is_some_and(|d| (1..=16).contains(&d)) {
                    out.push(violation("graph.dim", "family zn needs a dimension in 1..=16"));
                }
                if g.rank.is_some() {
                    out.push(violation("graph.rank", "only applies to family free"));
                }
            }
            (Some("free"), None) => {
                if !g.rank.is_some_and(|r| (1..=26).contains(&r)) {
                    out.push(violation("graph.rank", "family free needs a rank in 1..=26"));
                }
                if g.dim.is_some() {
                    out.push(violation("graph.dim", "only applies to family zn"));
                }
            }
            (Some(other), None) => out.push(violation("graph.family", format!("unknown family `{other}` (zn, free)"))),
            (None, Some(_)) => {
                if g.dim.is_some() || g.rank.is_some() {
                    out.push(violation("graph", "dim and rank do not apply to edge-list graphs"));
                }
            }
        }
        if !(self.p.is_finite() && self.p > 1.0) {
            out.push(violation("p", format!("must be a finite real greater than 1, got {}", self.p)));
        }

        let needs_radii = match command {
            Command::Solve => self.interior.is_empty(),
            _ => true,
        };
        if needs_radii {
            if self.radii.is_empty() {
                out.push(violation("radii", "at least one radius is required"));
            } else if self.radii[0] < 1 || self.radii.windows(2).any(|w| w[0] >= w[1]) {
                out.push(violation("radii", "radii must be positive and strictly increasing"));
            }
        }
        let uses_window = matches!(command, Command::Decompose | Command::Potential | Command::Extend | Command::Verdict);
        if uses_window && (self.window < 1 || self.radii.first().is_some_and(|&r| self.window > r)) {
            out.push(violation("window", "must be at least 1 and at most the smallest radius"));
        }
        if command == Command::Capacity && self.set.is_empty() {
            out.push(violation("set", "capacity needs a nonempty set"));
        }
        if command == Command::Classify && !self.values.is_empty() {
            if self.values.len() != self.radii.len() {
                out.push(violation("values", "need one value per radius"));
            }
            if self.values.iter().any(|v| !v.is_finite()) {
                out.push(violation("values", "values must be finite"));
            }
        }
        if command == Command::Extend {
            if self.ends.is_empty() {
                out.push(violation("ends", "extend needs end values such as a=1,b=0,A=0,B=0"));
            }
            if self.ends.iter().any(|e| !e.value.is_finite()) {
                out.push(violation("ends", "end values must be finite"));
            }
        }

        let s = &self.solver;
        if let Some(tol) = s.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                out.push(violation("solver.tol", "must be positive"));
            }
        }
        if s.max_sweeps < 1 {
            out.push(violation("solver.max_sweeps", "must be at least 1"));
        }
        if !(s.scalar_tol > 0.0 && s.scalar_tol.is_finite()) {
            out.push(violation("solver.scalar_tol", "must be positive"));
        }
        let e = &self.exhaustion;
        if !(e.window_tol > 0.0 && e.window_tol.is_finite()) {
            out.push(violation("exhaustion.window_tol", "must be positive"));
        }
        if e.min_radii < 2 {
            out.push(violation("exhaustion.min_radii", "must be at least 2"));
        }
        let c = &self.classifier;
        if !c.max_slope.is_finite() {
            out.push(violation("classifier.max_slope", "must be finite"));
        }
        if !(c.decay_ratio > 0.0 && c.decay_ratio <= 1.0) {
            out.push(violation("classifier.decay_ratio", "must lie in (0, 1]"));
        }
        if !(c.tail_change > 0.0 && c.tail_change.is_finite()) {
            out.push(violation("classifier.tail_change", "must be positive"));
        }
        if !(c.floor >= 0.0 && c.floor.is_finite()) {
            out.push(violation("classifier.floor", "must be nonnegative"));
        }
        if c.tail_len < 2 {
            out.push(violation("classifier.tail_len", "must be at least 2"));
        }
        if !(c.slack >= 0.0 && c.slack.is_finite()) {
            out.push(violation("classifier.slack", "must be nonnegative"));
        }
        let b = &self.boundary;
        if !(b.oscillation_threshold > 0.0 && b.oscillation_threshold.is_finite()) {
            out.push(violation("boundary.oscillation_threshold", "must be positive"));
        }
        if !(b.persistence > 0.0 && b.persistence < 1.0) {
            out.push(violation("boundary.persistence", "must lie in (0, 1)"));
        }
        if !(b.verdict_window_tol > 0.0 && b.verdict_window_tol.is_finite()) {
            out.push(violation("boundary.verdict_window_tol", "must be positive"));
        }
        if self.competitors > 10_000 {
            out.push(violation("competitors", "at most 10000"));
        }
        out
    }

    fn solver_config(&self) -> crate::Result<SolverConfig> {
        let p = Exponent::new(self.p)?;
        let mut cfg = SolverConfig::new(p).with_max_sweeps(self.solver.max_sweeps).with_order(self.solver.order);
        if let Some(tol) = self.solver.tol {
            cfg = cfg.with_tol(tol);
        }
        cfg.scalar_tol = self.solver.scalar_tol;
        Ok(cfg)
    }
}

/// Failure of a run, rendered as a structured error record.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Invalid(Vec<Violation>),
    Io(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Invalid(_) => 2,
            CliError::Io(_) | CliError::Run(_) => 1,
        }
    }

    pub fn record(&self) -> Value {
        let (kind, message, violations) = match self {
            CliError::Usage(m) => ("usage", m.clone(), Vec::new()),
            CliError::Invalid(v) => ("invalid-config", format!("{} violated field(s)", v.len()), v.clone()),
            CliError::Io(m) => ("io", m.clone(), Vec::new()),
            CliError::Run(e) => (error_kind(e), e.to_string(), Vec::new()),
        };
        json!({ "error": { "kind": kind, "message": message, "violations": violations } })
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::EmptyEdgeList | Error::SelfLoop { .. } | Error::MalformedEdge { .. } | Error::Disconnected { .. } => {
            "invalid-graph"
        }
        Error::InvalidFamily(_) => "invalid-family",
        Error::UnknownVertex(_) | Error::Unreachable(_) => "unknown-vertex",
        Error::NotConverged { .. } => "not-converged",
        Error::NotMonotone(_) => "not-monotone",
        Error::OutOfBounds { .. } => "out-of-bounds",
        Error::FiniteSet(_) => "finite-set",
        Error::Partition(_) => "partition",
        _ => "invalid-input",
    }
}

/// Output of a successful run.
#[derive(Clone, Debug)]
pub struct Document {
    pub config: RunConfig,
    pub traces: Value,
    pub result: Value,
    pub verdict: Option<Value>,
    pub warnings: Vec<String>,
    /// Per-radius rows for CSV output.
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Document {
    pub fn to_json(&self) -> String {
        let mut top = Map::new();
        top.insert("config".into(), serde_json::to_value(&self.config).expect("config serializes"));
        top.insert("traces".into(), self.traces.clone());
        top.insert("result".into(), self.result.clone());
        if let Some(v) = &self.verdict {
            top.insert("verdict".into(), v.clone());
        }
        top.insert("warnings".into(), json!(self.warnings));
        let mut s = serde_json::to_string_pretty(&Value::Object(top)).expect("document serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn render(&self) -> String {
        match self.config.output.format {
            Format::Json => self.to_json(),
            Format::Csv => self.to_csv(),
        }
    }
}

/// Twelve significant digits, identical on every platform.
pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.11e}")
    }
}

fn num(x: f64) -> Value {
    Value::String(fmt_num(x))
}

fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| num(x)).collect())
}

fn field_value(f: &ScalarField) -> Value {
    Value::Object(f.iter().map(|(v, x)| (v.to_string(), num(x))).collect())
}

fn build_graph(cfg: &GraphConfig) -> Result<(Graph, FamilySpec), CliError> {
    let spec = match (cfg.family.as_deref(), &cfg.path) {
        (Some("zn"), _) => FamilySpec::Lattice { dim: cfg.dim.unwrap_or(0) },
        (Some("free"), _) => FamilySpec::Free { rank: cfg.rank.unwrap_or(0) },
        (_, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read `{path}`: {e}")))?;
            FamilySpec::EdgeList { text }
        }
        _ => return Err(CliError::Invalid(vec![violation("graph", "no graph given")])),
    };
    Ok((cayley(&spec)?, spec))
}

fn indicator(set: VertexSet) -> BoundedField {
    BoundedField::new(format!("indicator of {}", set.name), 0.0, 1.0, move |v| f64::from(u8::from(set.contains(v))))
}

fn parse_subset(g: &Graph, spec: &FamilySpec, s: &str) -> crate::Result<VertexSet> {
    let (key, arg) = s.split_once('=').map_or((s, None), |(k, a)| (k, Some(a)));
    match (key, arg, spec) {
        ("default", None, FamilySpec::Lattice { .. }) => Ok(half_space(0)),
        ("default", None, FamilySpec::Free { .. }) => Ok(branch(1)),
        ("branch", Some(letter), FamilySpec::Free { .. }) => match Vertex::word(letter)? {
            Vertex::Word(w) if w.len() == 1 && g.contains(&Vertex::Word(w.clone())) => Ok(branch(w[0])),
            _ => Err(Error::Config(format!("`{letter}` is not a generator"))),
        },
        ("halfspace", Some(axis), FamilySpec::Lattice { dim }) => match axis.parse::<usize>() {
            Ok(k) if (1..=*dim).contains(&k) => Ok(half_space(k - 1)),
            _ => Err(Error::Config(format!("half-space axis must lie in 1..={dim}, got `{axis}`"))),
        },
        _ => Err(Error::Config(format!("set `{s}` is not available on this graph (default, branch=<letter>, halfspace=<axis>)"))),
    }
}

fn parse_field(g: &Graph, spec: &FamilySpec, s: &str) -> crate::Result<BoundedField> {
    let (key, arg) = s.split_once('=').map_or((s, None), |(k, a)| (k, Some(a)));
    match (key, arg) {
        ("default", None) => default_probes(spec)
            .into_iter()
            .next()
            .ok_or_else(|| Error::Config("edge-list graphs have no default field; use delta=<vertex> or constant=<c>".into())),
        ("delta", arg) => {
            let x = g.parse_vertex(arg.unwrap_or("o"))?;
            let name = format!("delta at {x}");
            Ok(BoundedField::new(name, 0.0, 1.0, move |v| if v == &x { 1.0 } else { 0.0 }))
        }
        ("constant", Some(c)) => match c.parse::<f64>() {
            Ok(c) if c.is_finite() => Ok(BoundedField::constant(c)),
            _ => Err(Error::Config(format!("`{c}` is not a finite number"))),
        },
        ("branch" | "halfspace", Some(_)) => parse_subset(g, spec, s).map(indicator),
        _ => Err(Error::Config(format!(
            "unknown field `{s}` (default, delta[=<vertex>], constant=<c>, branch=<letter>, halfspace=<axis>)"
        ))),
    }
}

fn parse_ends(spec: &FamilySpec, ends: &[EndValue]) -> crate::Result<EndSpec> {
    match spec {
        FamilySpec::Free { .. } => {
            EndSpec::free_branches(&ends.iter().map(|e| (e.label.clone(), e.value)).collect::<Vec<_>>())
        }
        FamilySpec::Lattice { .. } => {
            let find = |l: &str| ends.iter().find(|e| e.label == l).map(|e| e.value);
            match (find("+"), find("-"), ends.len()) {
                (Some(plus), Some(minus), 2) => EndSpec::lattice_sign(0, plus, minus),
                _ => Err(Error::Config("lattice ends are `+` (x1 >= 0) and `-` (x1 < 0), e.g. +=1,-=0".into())),
            }
        }
        _ => Err(Error::Config("ends are available on zn and free families only".into())),
    }
}

fn parse_vertices(g: &Graph, names: &[String]) -> crate::Result<BTreeSet<Vertex>> {
    names.iter().map(|s| g.parse_vertex(s)).collect()
}

/// Executes the configured pipeline. The config must already be resolved
/// and valid.
pub fn run(cfg: &RunConfig) -> Result<Document, CliError> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(CliError::Invalid(violations));
    }
    let mut doc = Document {
        config: cfg.clone(),
        traces: Value::Null,
        result: Value::Null,
        verdict: None,
        warnings: Vec::new(),
        columns: Vec::new(),
        rows: Vec::new(),
    };
    if cfg.command == Some(Command::Classify) && !cfg.values.is_empty() {
        classify_given(cfg, &mut doc)?;
        return Ok(doc);
    }
    let (g, spec) = build_graph(&cfg.graph)?;
    let scfg = cfg.solver_config()?;
    match cfg.command.expect("validated") {
        Command::Solve => run_solve(cfg, &g, &spec, &scfg, &mut doc)?,
        Command::Capacity | Command::Classify => run_capacity(cfg, &g, &scfg, &mut doc)?,
        Command::Decompose => run_decompose(cfg, &g, &spec, &scfg, &mut doc)?,
        Command::Potential => run_potential(cfg, &g, &spec, &scfg, &mut doc)?,
        Command::Extend => run_extend(cfg, &g, &spec, &scfg, &mut doc)?,
        Command::Verdict => run_verdict(cfg, &g, &spec, &scfg, &mut doc)?,
    }
    Ok(doc)
}

fn run_solve(cfg: &RunConfig, g: &Graph, spec: &FamilySpec, scfg: &SolverConfig, doc: &mut Document) -> Result<(), CliError> {
    let field = parse_field(g, spec, &cfg.field)?;
    let regions: Vec<(Option<usize>, FiniteRegion)> = if cfg.interior.is_empty() {
        cfg.radii.iter().map(|&n| Ok((Some(n), ball(g, g.base(), n)?))).collect::<crate::Result<_>>()?
    } else {
        vec![(None, FiniteRegion::new(g, parse_vertices(g, &cfg.interior)?)?)]
    };
    let window = ball(g, g.base(), cfg.window.max(1))?.closure();
    let mut solves = Vec::new();
    let (mut energies, mut residuals, mut sweeps) = (Vec::new(), Vec::new(), Vec::new());
    doc.columns = vec!["radius", "interior", "sweeps", "max_residual", "energy", "converged", "competitor_violations"];
    for (i, (radius, region)) in regions.iter().enumerate() {
        let data = field.sample(region.boundary())?;
        let rep = solve_dirichlet(g, region, &data, scfg)?;
        let energy = region_energy(g, &rep.field, region, scfg.p)?;

        // random competitors sharing the boundary data
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(i as u64));
        let scale = (field.hi - field.lo).max(1.0);
        let (mut violations, mut min_gap) = (0usize, f64::INFINITY);
        for k in 0..cfg.competitors {
            let eps = scale * 10f64.powi(-((k % 4) as i32) - 1);
            let mut c = rep.field.clone();
            for v in region.interior() {
                let x = rep.field.get(v)? + eps * rng.gen_range(-1.0..=1.0);
                c.insert(v.clone(), x);
            }
            let gap = region_energy(g, &c, region, scfg.p)? - energy;
            min_gap = min_gap.min(gap);
            if gap < -1e-9 * energy.abs().max(1.0) {
                violations += 1;
            }
        }
        if !rep.converged {
            doc.warnings.push(format!("solve {i} stopped at residual {} after {} sweeps", fmt_num(rep.max_residual), rep.sweeps));
        }
        if violations > 0 {
            doc.warnings.push(format!("solve {i}: {violations} competitor(s) beat the solution"));
        }
        let shown: ScalarField =
            if radius.is_some() { rep.field.iter().filter(|(v, _)| window.contains(v)).map(|(v, x)| (v.clone(), x)).collect() } else { rep.field.clone() };
        solves.push(json!({
            "radius": radius,
            "interior": region.interior().len(),
            "boundary": region.boundary().len(),
            "sweeps": rep.sweeps,
            "converged": rep.converged,
            "max_residual": num(rep.max_residual),
            "energy": num(energy),
            "min": num(rep.field.min().unwrap_or(f64::NAN)),
            "max": num(rep.field.max().unwrap_or(f64::NAN)),
            "base_value": rep.field.value(g.base()).map(num),
            "field": field_value(&shown),
            "competitors": { "count": cfg.competitors, "violations": violations, "min_gap": num(min_gap) },
        }));
        doc.rows.push(vec![
                radius.map_or_else(String::new, |n| n.to_string()),
                region.interior().len().to_string(),
                rep.sweeps.to_string(),
                fmt_num(rep.max_residual),
                fmt_num(energy),
                rep.converged.to_string(),
                violations.to_string(),
        ]);
        energies.push(nums(&rep.energy_trace));
        residuals.push(rep.max_residual);
        sweeps.push(rep.sweeps);
    }
    doc.result = json!({ "field_name": field.name, "solves": solves });
    doc.traces = json!({ "energy": energies, "max_residual": nums(&residuals), "sweeps": sweeps });
    Ok(())
}

fn classify_given(cfg: &RunConfig, doc: &mut Document) -> Result<(), CliError> {
    let classifier = cfg.classifier;
    let c = classify(&cfg.radii, &cfg.values, &classifier)?;
    doc.result = json!({
        "radii": cfg.radii,
        "values": nums(&cfg.values),
        "slope": num(c.slope),
        "last_over_first": num(c.last_over_first),
        "tail_change": num(c.tail_change),
        "message": c.message,
    });
    doc.traces = json!({ "values": nums(&cfg.values) });
    doc.columns = vec!["radius", "value"];
    doc.rows = cfg.radii.iter().zip(&cfg.values).map(|(r, v)| vec![r.to_string(), fmt_num(*v)]).collect();
    doc.verdict = Some(json!(c.verdict));
    Ok(())
}

fn run_capacity(cfg: &RunConfig, g: &Graph, scfg: &SolverConfig, doc: &mut Document) -> Result<(), CliError> {
    let classifier = cfg.classifier;
    let a = parse_vertices(g, &cfg.set)?;
    let seq = capacity_sequence(g, &a, &cfg.radii, scfg, &classifier)?;
    let c = &seq.classification;
    let residuals: Vec<f64> = seq.per_radius.iter().map(|r| r.max_residual).collect();
    let sweeps: Vec<usize> = seq.per_radius.iter().map(|r| r.sweeps).collect();
    let ratios: Vec<f64> = seq.values.windows(2).map(|w| w[1] / w[0]).collect();
    doc.result = json!({
        "radii": seq.radii,
        "values": nums(&seq.values),
        "set": seq.set,
        "p": num(seq.p),
        "slope": num(c.slope),
        "last_over_first": num(c.last_over_first),
        "tail_change": num(c.tail_change),
        "message": c.message,
    });
    doc.traces = json!({
        "values": nums(&seq.values),
        "ratios": nums(&ratios),
        "max_residual": nums(&residuals),
        "sweeps": sweeps,
        "free_vertices": seq.per_radius.iter().map(|r| r.free_vertices).collect::<Vec<_>>(),
    });
    doc.columns = vec!["radius", "value", "free_vertices", "sweeps", "max_residual"];
    doc.rows = seq
        .per_radius
        .iter()
        .map(|r| vec![r.radius.to_string(), fmt_num(r.value), r.free_vertices.to_string(), r.sweeps.to_string(), fmt_num(r.max_residual)])
        .collect();
    if c.verdict == crate::capacity::Verdict::Inconclusive {
        doc.warnings.push(format!("classification inconclusive: {}", c.message));
    }
    doc.verdict = Some(json!(c.verdict));
    Ok(())
}

fn run_decompose(cfg: &RunConfig, g: &Graph, spec: &FamilySpec, scfg: &SolverConfig, doc: &mut Document) -> Result<(), CliError> {
    let f = parse_field(g, spec, &cfg.field)?;
    let rep = harmonic_part(g, &f, &cfg.radii, cfg.window, scfg, &cfg.exhaustion)?;
    if !rep.converged {
        doc.warnings.push(format!(
            "harmonic part not certified on the window: last sup-delta {} vs tolerance {}",
            rep.sup_deltas.last().map_or_else(|| "n/a".into(), |&d| fmt_num(d)),
            fmt_num(cfg.exhaustion.window_tol)
        ));
    }
    if !rep.energy_monotone {
        doc.warnings.push("energy excess increased along the exhaustion".into());
    }
    doc.result = json!({
        "field_name": f.name,
        "bound": [num(f.lo), num(f.hi)],
        "harmonic": field_value(&rep.harmonic),
        "potential": field_value(&rep.potential),
        "converged": rep.converged,
        "energy_monotone": rep.energy_monotone,
    });
    doc.traces = json!({
        "radii": rep.radii,
        "sup_deltas": nums(&rep.sup_deltas),
        "window_oscillations": nums(&rep.window_oscillations),
        "energy_excess": nums(&rep.energy_excess),
        "max_residual": nums(&rep.residuals),
        "sweeps": rep.sweeps,
    });
    doc.columns = vec!["radius", "sup_delta", "window_oscillation", "energy_excess", "sweeps", "max_residual"];
    doc.rows = (0..rep.radii.len())
        .map(|i| {
            vec![
                rep.radii[i].to_string(),
                if i == 0 { String::new() } else { fmt_num(rep.sup_deltas[i - 1]) },
                fmt_num(rep.window_oscillations[i]),
                rep.energy_excess.get(i).map_or_else(String::new, |&e| fmt_num(e)),
                rep.sweeps[i].to_string(),
                fmt_num(rep.residuals[i]),
            ]
        })
        .collect();
    Ok(())
}

fn run_potential(cfg: &RunConfig, g: &Graph, spec: &FamilySpec, scfg: &SolverConfig, doc: &mut Document) -> Result<(), CliError> {
    let set = parse_subset(g, spec, &cfg.subset)?;
    let rep = inner_potential(g, &set, &cfg.radii, cfg.window, scfg, &cfg.boundary)?;
    let window = ball(g, g.base(), cfg.window)?.closure();
    let shown: ScalarField = rep.potential.iter().filter(|(v, _)| window.contains(v)).map(|(v, x)| (v.clone(), x)).collect();
    doc.result = json!({
        "set": rep.set,
        "component_size": rep.component.len(),
        "potential": field_value(&shown),
        "sup_attained": num(rep.sup_attained),
        "min_value": num(rep.min_value),
        "boundary_max": num(rep.boundary_max),
        "residual": num(rep.residual),
    });
    doc.traces = json!({ "radii": rep.radii, "window_sups": nums(&rep.window_sups) });
    doc.columns = vec!["radius", "window_sup"];
    doc.rows = rep.radii.iter().zip(&rep.window_sups).map(|(r, s)| vec![r.to_string(), fmt_num(*s)]).collect();
    doc.verdict = Some(json!(rep.trend));
    Ok(())
}

fn run_extend(cfg: &RunConfig, g: &Graph, spec: &FamilySpec, scfg: &SolverConfig, doc: &mut Document) -> Result<(), CliError> {
    let ends = parse_ends(spec, &cfg.ends)?;
    let ext = extend_ends(g, &ends, &cfg.radii, cfg.window, cfg.depth, scfg, &cfg.exhaustion)?;
    if !ext.converged {
        doc.warnings.push(format!(
            "extension not certified on the window: last sup-delta {} vs tolerance {}",
            ext.sup_deltas.last().map_or_else(|| "n/a".into(), |&d| fmt_num(d)),
            fmt_num(cfg.exhaustion.window_tol)
        ));
    }
    let limits: Vec<Value> = ext
        .ends
        .iter()
        .map(|e| json!({ "label": e.label, "target": num(e.target), "deep_average": num(e.deep_average), "depth": e.depth }))
        .collect();
    doc.result = json!({
        "ends": limits,
        "base_value": num(ext.base_value),
        "window_field": field_value(&ext.window_field),
        "converged": ext.converged,
    });
    doc.traces = json!({
        "radii": ext.radii,
        "sup_deltas": nums(&ext.sup_deltas),
        "base_values": nums(&ext.base_trace),
        "max_residual": nums(&ext.residuals),
        "sweeps": ext.sweeps,
    });
    doc.columns = vec!["radius", "base_value", "sup_delta", "sweeps", "max_residual"];
    doc.rows = (0..ext.radii.len())
        .map(|i| {
            vec![
                ext.radii[i].to_string(),
                fmt_num(ext.base_trace[i]),
                if i == 0 { String::new() } else { fmt_num(ext.sup_deltas[i - 1]) },
                ext.sweeps[i].to_string(),
                fmt_num(ext.residuals[i]),
            ]
        })
        .collect();
    Ok(())
}

fn run_verdict(cfg: &RunConfig, g: &Graph, spec: &FamilySpec, scfg: &SolverConfig, doc: &mut Document) -> Result<(), CliError> {
    let probes = default_probes(spec);
    if probes.is_empty() {
        return Err(CliError::Run(Error::Config("no default probes for edge-list graphs".into())));
    }
    let rep = nonconstant_harmonic_verdict(g, &probes, &cfg.radii, cfg.window, scfg, &cfg.exhaustion, &cfg.boundary)?;
    let outcomes: Vec<Value> = rep
        .probes
        .iter()
        .map(|o| json!({ "probe": o.probe, "status": o.status, "oscillation": num(o.oscillation) }))
        .collect();
    let traces: Vec<Value> = rep
        .probes
        .iter()
        .map(|o| json!({ "probe": o.probe, "sup_deltas": nums(&o.sup_deltas), "oscillations": nums(&o.oscillation_trace) }))
        .collect();
    doc.result = json!({
        "probes": outcomes,
        "witness": rep.witness.map(|i| rep.probes[i].probe.clone()),
        "witness_field": rep.witness.map(|i| field_value(&rep.probes[i].harmonic)),
    });
    doc.traces = json!({ "radii": cfg.radii, "probes": traces });
    doc.columns = vec!["probe", "radius", "window_oscillation", "sup_delta"];
    for o in &rep.probes {
        for (i, r) in cfg.radii.iter().enumerate() {
            doc.rows.push(vec![
                format!("\"{}\"", o.probe),
                r.to_string(),
                fmt_num(o.oscillation_trace[i]),
                if i == 0 { String::new() } else { fmt_num(o.sup_deltas[i - 1]) },
            ]);
        }
    }
    if rep.verdict == HarmonicVerdict::ConstantsOnlyEvidence {
        doc.warnings.push("constants-only-evidence reflects the computed radii only; it is not a proof".into());
    }
    doc.verdict = Some(json!(rep.verdict));
    Ok(())
}

#[derive(Parser, Debug)]
#[command(name = "pharmonic", version, about = "p-harmonic functions, capacities and decompositions on graphs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve p-harmonic Dirichlet problems on balls or an explicit region
    Solve(Flags),
    /// p-capacity of a finite set along an exhaustion by balls
    Capacity(Flags),
    /// Parabolic/hyperbolic verdict from a capacity sequence
    Classify(Flags),
    /// Royden decomposition of a bounded field on a window
    Decompose(Flags),
    /// Inner potential of an infinite vertex set
    Potential(Flags),
    /// Extend end values to a p-harmonic function
    Extend(Flags),
    /// Search for nonconstant bounded p-harmonic functions
    Verdict(Flags),
}

/// Value flags are taken as text so every malformed one can be reported
/// together with the config violations.
#[derive(Args, Debug, Default)]
struct Flags {
    /// JSON config in the schema echoed under `config`
    #[arg(long, allow_hyphen_values = true)]
    config: Option<String>,
    /// Graph family: zn or free
    #[arg(long, allow_hyphen_values = true)]
    family: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    dim: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    rank: Option<String>,
    /// Edge-list file
    #[arg(long, allow_hyphen_values = true)]
    graph: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    /// Comma-separated radii
    #[arg(long, allow_hyphen_values = true)]
    radii: Option<String>,
    /// Semicolon-separated vertices, or `origin`
    #[arg(long, allow_hyphen_values = true)]
    set: Option<String>,
    /// Semicolon-separated interior vertices for `solve`
    #[arg(long, allow_hyphen_values = true)]
    interior: Option<String>,
    /// default, delta[=<vertex>], constant=<c>, branch=<letter>, halfspace=<axis>
    #[arg(long, allow_hyphen_values = true)]
    field: Option<String>,
    /// default, branch=<letter>, halfspace=<axis>
    #[arg(long, allow_hyphen_values = true)]
    subset: Option<String>,
    /// End values such as a=1,b=0,A=0,B=0 or +=1,-=0
    #[arg(long, allow_hyphen_values = true)]
    ends: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    depth: Option<String>,
    /// Comma-separated capacities for `classify`
    #[arg(long, allow_hyphen_values = true)]
    values: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    window: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    max_sweeps: Option<String>,
    /// sorted or red-black
    #[arg(long, allow_hyphen_values = true)]
    order: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    window_tol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    oscillation_threshold: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    verdict_window_tol: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    competitors: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
    /// json or csv
    #[arg(long, allow_hyphen_values = true)]
    format: Option<String>,
}

fn parse_into<T: std::str::FromStr>(field: &str, raw: &Option<String>, errs: &mut Vec<Violation>) -> Option<T> {
    let raw = raw.as_ref()?;
    match raw.trim().parse::<T>() {
        Ok(v) => Some(v),
        Err(_) => {
            errs.push(violation(field, format!("cannot parse `{raw}`")));
            None
        }
    }
}

fn parse_list<T: std::str::FromStr>(field: &str, raw: &Option<String>, errs: &mut Vec<Violation>) -> Option<Vec<T>> {
    let raw = raw.as_ref()?;
    let parsed: Result<Vec<T>, _> = raw.split(',').filter(|s| !s.trim().is_empty()).map(|s| s.trim().parse::<T>()).collect();
    match parsed {
        Ok(v) => Some(v),
        Err(_) => {
            errs.push(violation(field, format!("cannot parse list `{raw}`")));
            None
        }
    }
}

fn split_vertices(raw: &str) -> Vec<String> {
    raw.split(';').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect()
}

fn parse_end_values(raw: &str) -> Result<Vec<EndValue>, String> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (label, value) = item.split_once('=').ok_or_else(|| format!("`{item}` is not label=value"))?;
            let value = value.trim().parse::<f64>().map_err(|_| format!("`{value}` is not a number"))?;
            Ok(EndValue { label: label.trim().to_string(), value })
        })
        .collect()
}

fn merge(command: Command, flags: &Flags) -> Result<RunConfig, CliError> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read `{path}`: {e}")))?;
            serde_json::from_str::<RunConfig>(&text).map_err(|e| CliError::Invalid(vec![violation("config", e.to_string())]))?
        }
        None => RunConfig::default(),
    };
    cfg.command = Some(command);
    let mut errs = Vec::new();
    if let Some(f) = &flags.family {
        cfg.graph = GraphConfig { family: Some(f.clone()), dim: None, rank: None, path: None };
    }
    if let Some(path) = &flags.graph {
        cfg.graph = GraphConfig { family: None, dim: None, rank: None, path: Some(path.clone()) };
    }
    if let Some(d) = parse_into("graph.dim", &flags.dim, &mut errs) {
        cfg.graph.dim = Some(d);
    }
    if let Some(r) = parse_into("graph.rank", &flags.rank, &mut errs) {
        cfg.graph.rank = Some(r);
    }
    if let Some(p) = parse_into("p", &flags.p, &mut errs) {
        cfg.p = p;
        // a new exponent brings its own default tolerance unless one is given
        if flags.tol.is_none() {
            cfg.solver.tol = None;
        }
    }
    if let Some(r) = parse_list("radii", &flags.radii, &mut errs) {
        cfg.radii = r;
    }
    if let Some(s) = &flags.set {
        cfg.set = split_vertices(s);
    }
    if let Some(s) = &flags.interior {
        cfg.interior = split_vertices(s);
    }
    if let Some(f) = &flags.field {
        cfg.field = f.trim().to_string();
    }
    if let Some(s) = &flags.subset {
        cfg.subset = s.trim().to_string();
    }
    if let Some(e) = &flags.ends {
        match parse_end_values(e) {
            Ok(v) => cfg.ends = v,
            Err(m) => errs.push(violation("ends", m)),
        }
    }
    if let Some(d) = parse_into("depth", &flags.depth, &mut errs) {
        cfg.depth = Some(d);
    }
    if let Some(v) = parse_list("values", &flags.values, &mut errs) {
        cfg.values = v;
    }
    if let Some(w) = parse_into("window", &flags.window, &mut errs) {
        cfg.window = w;
    }
    if let Some(t) = parse_into("solver.tol", &flags.tol, &mut errs) {
        cfg.solver.tol = Some(t);
    }
    if let Some(m) = parse_into("solver.max_sweeps", &flags.max_sweeps, &mut errs) {
        cfg.solver.max_sweeps = m;
    }
    match flags.order.as_deref().map(str::trim) {
        None => {}
        Some("sorted") => cfg.solver.order = UpdateOrder::Sorted,
        Some("red-black") => cfg.solver.order = UpdateOrder::RedBlack,
        Some(o) => errs.push(violation("solver.order", format!("unknown order `{o}` (sorted, red-black)"))),
    }
    if let Some(t) = parse_into("exhaustion.window_tol", &flags.window_tol, &mut errs) {
        cfg.exhaustion.window_tol = t;
    }
    if let Some(t) = parse_into("boundary.oscillation_threshold", &flags.oscillation_threshold, &mut errs) {
        cfg.boundary.oscillation_threshold = t;
    }
    if let Some(t) = parse_into("boundary.verdict_window_tol", &flags.verdict_window_tol, &mut errs) {
        cfg.boundary.verdict_window_tol = t;
    }
    if let Some(s) = parse_into("seed", &flags.seed, &mut errs) {
        cfg.seed = s;
    }
    if let Some(c) = parse_into("competitors", &flags.competitors, &mut errs) {
        cfg.competitors = c;
    }
    if let Some(o) = &flags.out {
        cfg.output.path = Some(o.clone());
    }
    match flags.format.as_deref().map(str::trim) {
        None => {}
        Some("json") => cfg.output.format = Format::Json,
        Some("csv") => cfg.output.format = Format::Csv,
        Some(f) => errs.push(violation("output.format", format!("unknown format `{f}` (json, csv)"))),
    }
    let cfg = cfg.resolve();
    errs.extend(cfg.validate());
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Invalid(errs))
    }
}

fn execute(args: &[String]) -> Result<String, CliError> {
    let cli = Cli::try_parse_from(args).map_err(|e| CliError::Usage(e.to_string()))?;
    let (command, flags) = match &cli.command {
        Cmd::Solve(f) => (Command::Solve, f),
        Cmd::Capacity(f) => (Command::Capacity, f),
        Cmd::Classify(f) => (Command::Classify, f),
        Cmd::Decompose(f) => (Command::Decompose, f),
        Cmd::Potential(f) => (Command::Potential, f),
        Cmd::Extend(f) => (Command::Extend, f),
        Cmd::Verdict(f) => (Command::Verdict, f),
    };
    let cfg = merge(command, flags)?;
    let doc = run(&cfg)?;
    let text = doc.render();
    if let Some(path) = &cfg.output.path {
        fs::write(path, &text).map_err(|e| CliError::Io(format!("cannot write `{path}`: {e}")))?;
        Ok(String::new())
    } else {
        Ok(text)
    }
}

/// Runs the CLI on `args` (including the program name), writing to the
/// given streams, and returns the exit status.
pub fn main_with(args: &[String], stdout: &mut impl Write, stderr: &mut impl Write) -> i32 {
    // help and version are not errors
    if let Err(e) = Cli::try_parse_from(args) {
        if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) {
            let _ = write!(stdout, "{e}");
            return 0;
        }
    }
    match execute(args) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            let mut s = serde_json::to_string_pretty(&e.record()).expect("record serializes");
            s.push('\n');
            let _ = stderr.write_all(s.as_bytes());
            e.exit_code()
        }
    }
}
