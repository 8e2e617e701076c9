//! p-gradients, p-Dirichlet sums, the p-Laplacian and related norms.
//!
//! Every quantity that is a sum over an infinite vertex set is evaluated as a
//! truncation to an explicit finite region, accumulating in sorted vertex
//! order so results are bit-reproducible.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{outer_boundary, FiniteRegion, Graph, Vertex};

/// Exponent `p > 1`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Exponent(f64);

impl Exponent {
    pub fn new(p: f64) -> Result<Self> {
        if p.is_finite() && p > 1.0 {
            Ok(Exponent(p))
        } else {
            Err(Error::InvalidExponent(p))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `|t|^(p-2)` for `t != 0`. Half-integer exponents go through
    /// `sqrt`/`powi`, which is much cheaper than `powf`.
    #[inline]
    pub fn weight(self, t: f64) -> f64 {
        let k = 2.0 * (self.0 - 2.0);
        let a = t.abs();
        if k == k.trunc() && k.abs() <= 16.0 {
            let k = k as i32;
            if k % 2 == 0 {
                a.powi(k / 2)
            } else {
                a.sqrt().powi(k)
            }
        } else {
            a.powf(self.0 - 2.0)
        }
    }

    /// Hölder conjugate `p / (p - 1)`.
    pub fn conjugate(self) -> f64 {
        self.0 / (self.0 - 1.0)
    }

    /// `|t|^p`.
    #[inline]
    pub fn abs_pow(self, t: f64) -> f64 {
        if self.0 == 2.0 {
            t * t
        } else {
            t.abs().powf(self.0)
        }
    }

    /// `|t|^(p-2) t`, with `0 ↦ 0` for every `p`.
    #[inline]
    pub fn phi(self, t: f64) -> f64 {
        if self.0 == 2.0 {
            t
        } else if t == 0.0 {
            0.0
        } else {
            t.signum() * t.abs().powf(self.0 - 1.0)
        }
    }
}

impl TryFrom<f64> for Exponent {
    type Error = Error;
    fn try_from(p: f64) -> Result<Self> {
        Exponent::new(p)
    }
}

impl From<Exponent> for f64 {
    fn from(p: Exponent) -> f64 {
        p.0
    }
}

/// Finite map from vertices to real values.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScalarField {
    values: BTreeMap<Vertex, f64>,
}

impl ScalarField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_fn<'a>(vertices: impl IntoIterator<Item = &'a Vertex>, mut f: impl FnMut(&Vertex) -> f64) -> Self {
        ScalarField { values: vertices.into_iter().map(|v| (v.clone(), f(v))).collect() }
    }

    pub fn constant<'a>(vertices: impl IntoIterator<Item = &'a Vertex>, c: f64) -> Self {
        Self::from_fn(vertices, |_| c)
    }

    /// `δ_x` on the given vertices.
    pub fn indicator<'a>(vertices: impl IntoIterator<Item = &'a Vertex>, x: &Vertex) -> Self {
        Self::from_fn(vertices, |v| if v == x { 1.0 } else { 0.0 })
    }

    pub fn get(&self, v: &Vertex) -> Result<f64> {
        self.values.get(v).copied().ok_or_else(|| Error::Undefined(v.clone()))
    }

    pub fn value(&self, v: &Vertex) -> Option<f64> {
        self.values.get(v).copied()
    }

    pub fn insert(&mut self, v: Vertex, value: f64) {
        self.values.insert(v, value);
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        self.values.contains_key(v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vertex, f64)> {
        self.values.iter().map(|(v, &x)| (v, x))
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.values.keys()
    }

    /// Rejects NaN and infinite values.
    pub fn validate(&self) -> Result<()> {
        match self.values.iter().find(|(_, x)| !x.is_finite()) {
            Some((v, _)) => Err(Error::NonFinite { vertex: v.clone() }),
            None => Ok(()),
        }
    }

    pub fn restrict<'a>(&self, vertices: impl IntoIterator<Item = &'a Vertex>) -> Result<Self> {
        let mut out = ScalarField::new();
        for v in vertices {
            out.insert(v.clone(), self.get(v)?);
        }
        Ok(out)
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        ScalarField { values: self.values.iter().map(|(v, &x)| (v.clone(), f(x))).collect() }
    }

    /// Pointwise combination over the common domain.
    pub fn zip_with(&self, other: &ScalarField, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .filter_map(|(v, &x)| other.values.get(v).map(|&y| (v.clone(), f(x, y))))
            .collect();
        ScalarField { values }
    }

    pub fn max(&self) -> Option<f64> {
        self.values.values().copied().reduce(f64::max)
    }

    pub fn min(&self) -> Option<f64> {
        self.values.values().copied().reduce(f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.values().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// `sup |self - other|` over the common domain.
    pub fn sup_distance(&self, other: &ScalarField) -> f64 {
        self.zip_with(other, |a, b| a - b).sup_abs()
    }
}

impl FromIterator<(Vertex, f64)> for ScalarField {
    fn from_iter<I: IntoIterator<Item = (Vertex, f64)>>(iter: I) -> Self {
        ScalarField { values: iter.into_iter().collect() }
    }
}

/// `|Df(x)|^p = Σ_{y ∈ N_x} |f(y) - f(x)|^p`.
pub fn gradient_p(g: &Graph, f: &ScalarField, x: &Vertex, p: Exponent) -> Result<f64> {
    let fx = f.get(x)?;
    let mut sum = 0.0;
    for y in g.neighbors(x) {
        sum += p.abs_pow(f.get(&y)? - fx);
    }
    Ok(sum)
}

/// `I_p(f, S) = Σ_{x ∈ S} |Df(x)|^p`. Edges inside `S` are counted once from
/// each endpoint.
pub fn dirichlet_sum(g: &Graph, f: &ScalarField, s: &BTreeSet<Vertex>, p: Exponent) -> Result<f64> {
    let mut sum = 0.0;
    for x in s {
        sum += gradient_p(g, f, x, p)?;
    }
    Ok(sum)
}

/// `Δ_p f(x) = Σ_{y ∈ N_x} |f(y) - f(x)|^(p-2) (f(y) - f(x))`.
pub fn p_laplacian(g: &Graph, f: &ScalarField, x: &Vertex, p: Exponent) -> Result<f64> {
    let fx = f.get(x)?;
    let mut sum = 0.0;
    for y in g.neighbors(x) {
        sum += p.phi(f.get(&y)? - fx);
    }
    Ok(sum)
}

/// Energy of `f` over every ordered neighbor pair `(x, y)` with at least one
/// endpoint in `S` and both in `S ∪ ∂S`.
///
/// For `f` fixed outside `S` this differs from `I_p(f, V)` by a constant, so
/// it is the objective whose minimizers are p-harmonic on `S`. It equals
/// `2 Σ_{edges touching S} |f(y) - f(x)|^p`.
pub fn region_energy(g: &Graph, f: &ScalarField, region: &FiniteRegion, p: Exponent) -> Result<f64> {
    let mut sum = 0.0;
    for x in region.interior() {
        let fx = f.get(x)?;
        for y in g.neighbors(x) {
            let w = p.abs_pow(f.get(&y)? - fx);
            sum += if region.contains(&y) { w } else { 2.0 * w };
        }
    }
    Ok(sum)
}

/// Truncated `⟨Δ_p h, f⟩`: the double sum over `x ∈ support ∪ ∂support` and
/// `y ∈ N_x` with both `h` and `f` valued at `x` and `y`.
///
/// The caller guarantees `f` vanishes outside `support`.
pub fn pairing(g: &Graph, h: &ScalarField, f: &ScalarField, support: &BTreeSet<Vertex>, p: Exponent) -> Result<f64> {
    let mut rows: BTreeSet<Vertex> = support.clone();
    rows.extend(outer_boundary(g, support)?);
    let mut sum = 0.0;
    for x in &rows {
        let (hx, fx) = (h.get(x)?, f.get(x)?);
        for y in g.neighbors(x) {
            if let (Some(hy), Some(fy)) = (h.value(&y), f.value(&y)) {
                sum += p.phi(hy - hx) * (fy - fx);
            }
        }
    }
    Ok(sum)
}

/// Truncated norms of a field over a region.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Norms {
    /// `(I_p(f, S) + |f(o)|^p)^(1/p)`.
    pub dp: f64,
    /// `I_p(f, S)^(1/p) + sup_{S ∪ ∂S} |f|`.
    pub bdp: f64,
    pub sup: f64,
    /// Number of vertices the Dirichlet sum was truncated to.
    pub truncation: usize,
}

pub fn norms(g: &Graph, f: &ScalarField, region: &FiniteRegion, p: Exponent) -> Result<Norms> {
    let o = g.base();
    if !region.contains(o) {
        return Err(Error::BaseUnvalued(o.clone()));
    }
    let fo = f.value(o).ok_or_else(|| Error::BaseUnvalued(o.clone()))?;
    let energy = dirichlet_sum(g, f, region.interior(), p)?;
    let mut sup: f64 = 0.0;
    for v in region.interior().iter().chain(region.boundary()) {
        sup = sup.max(f.get(v)?.abs());
    }
    let dp = (energy + p.abs_pow(fo)).powf(1.0 / p.get());
    let bdp = energy.powf(1.0 / p.get()) + sup;
    Ok(Norms { dp, bdp, sup, truncation: region.interior().len() })
}
