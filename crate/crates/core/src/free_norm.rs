//! Exact Lipschitz-free norms on finite pointed metric spaces.
//!
//! The norm of `v = Σ v_x δ(x)` is the cheapest nonnegative flow on the
//! complete graph whose net outflow at every non-base point `x` is `v_x`;
//! the base point absorbs whatever is left. Its linear-programming dual is
//! `max Σ v_x g(x)` over 1-Lipschitz `g` vanishing at the base, and every
//! solve returns both sides as a certificate.

use std::collections::HashMap;
use std::sync::Mutex;

use num_traits::{Signed, Zero};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::Matrix;
use crate::lp::LinearProgram;
use crate::metric::FiniteMetricSpace;
use crate::rational::{self, Rational};

/// An element of the free space over an `N`-point space, stored as its
/// coefficients on the `N - 1` non-base points (`δ(base) = 0`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FreeVector {
    coeffs: Vec<Rational>,
}

impl FreeVector {
    pub fn zero(points: usize) -> Self {
        Self {
            coeffs: vec![Rational::zero(); points.saturating_sub(1)],
        }
    }

    /// `δ(point)`; the zero vector for the base point.
    pub fn dirac(points: usize, point: usize) -> Self {
        let mut v = Self::zero(points);
        if point > 0 {
            v.coeffs[point - 1] = rational::int(1);
        }
        v
    }

    pub fn from_coeffs(coeffs: Vec<Rational>) -> Self {
        Self { coeffs }
    }

    /// Builds a vector from one value per point, dropping the base entry.
    pub fn from_point_values(values: &[Rational]) -> Self {
        Self {
            coeffs: values.iter().skip(1).cloned().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn points(&self) -> usize {
        self.coeffs.len() + 1
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    /// Coefficient at `point`; zero at the base.
    pub fn at(&self, point: usize) -> Rational {
        if point == 0 {
            Rational::zero()
        } else {
            self.coeffs[point - 1].clone()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Zero::is_zero)
    }

    pub fn add_dirac(&mut self, point: usize, c: &Rational) {
        if point > 0 {
            self.coeffs[point - 1] += c;
        }
    }

    pub fn scaled(&self, c: &Rational) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|v| v * c).collect(),
        }
    }

    pub fn plus(&self, other: &Self) -> Self {
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        }
    }

    /// Pads with zero coefficients for points appended after the current ones.
    pub fn extended(&self, points: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(points.saturating_sub(1), Rational::zero());
        Self { coeffs }
    }

    pub fn to_json(&self, space: &FiniteMetricSpace) -> Value {
        let map: Map<String, Value> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| (space.label(k + 1).to_string(), rational::to_json(c)))
            .collect();
        Value::Object(map)
    }

    /// Reads a `label -> rational` map. A coefficient on the base label is
    /// accepted and dropped, since `δ(base) = 0`.
    pub fn from_json(space: &FiniteMetricSpace, value: &Value) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::Parse("free vector must be a JSON object".into()))?;
        let mut v = Self::zero(space.len());
        for (label, c) in map {
            let idx = space
                .index_of(label)
                .ok_or_else(|| Error::Parse(format!("unknown label {label:?}")))?;
            v.add_dirac(idx, &rational::from_json(c)?);
        }
        Ok(v)
    }
}

/// A real function on the points, vanishing at the base.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LipFunction {
    values: Vec<Rational>,
}

impl LipFunction {
    pub fn new(values: Vec<Rational>) -> Result<Self> {
        match values.first() {
            Some(v) if v.is_zero() => Ok(Self { values }),
            Some(_) => Err(Error::Domain("Lipschitz function must vanish at the base".into())),
            None => Err(Error::Domain("empty function".into())),
        }
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn value(&self, point: usize) -> &Rational {
        &self.values[point]
    }

    /// The pairing `<v, f> = Σ v_x f(x)`.
    pub fn pair(&self, v: &FreeVector) -> Result<Rational> {
        if v.points() != self.values.len() {
            return Err(Error::Dimension {
                expected: self.values.len(),
                found: v.points(),
            });
        }
        Ok(v.coeffs()
            .iter()
            .zip(&self.values[1..])
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn to_json(&self, space: &FiniteMetricSpace) -> Value {
        let map: Map<String, Value> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, c)| (space.label(k).to_string(), rational::to_json(c)))
            .collect();
        Value::Object(map)
    }

    pub fn from_json(space: &FiniteMetricSpace, value: &Value) -> Result<Self> {
        let map = value
            .as_object()
            .ok_or_else(|| Error::Parse("Lipschitz function must be a JSON object".into()))?;
        let mut values = vec![Rational::zero(); space.len()];
        for (label, c) in map {
            let idx = space
                .index_of(label)
                .ok_or_else(|| Error::Parse(format!("unknown label {label:?}")))?;
            values[idx] = rational::from_json(c)?;
        }
        Self::new(values)
    }
}

/// `sup |f(x) - f(y)| / d(x, y)`, exact.
pub fn lip_norm(space: &FiniteMetricSpace, f: &LipFunction) -> Result<Rational> {
    if f.values.len() != space.len() {
        return Err(Error::Dimension {
            expected: space.len(),
            found: f.values.len(),
        });
    }
    Ok(space
        .pairs()
        .map(|(i, j)| (&f.values[i] - &f.values[j]).abs() / space.d(i, j))
        .max()
        .unwrap_or_else(Rational::zero))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub amount: Rational,
}

/// A free norm together with an optimal flow and an optimal 1-Lipschitz
/// dual function; `value` equals both the flow cost and the pairing.
#[derive(Clone, Debug)]
pub struct NormCertificate {
    pub value: Rational,
    pub flow: Vec<FlowArc>,
    pub dual: LipFunction,
}

impl NormCertificate {
    pub fn to_json(&self, space: &FiniteMetricSpace) -> Value {
        let flow: Vec<Value> = self
            .flow
            .iter()
            .map(|a| {
                serde_json::json!({
                    "from": space.label(a.from),
                    "to": space.label(a.to),
                    "amount": rational::format(&a.amount),
                })
            })
            .collect();
        serde_json::json!({
            "value": rational::format(&self.value),
            "primal_flow": flow,
            "dual_certificate": self.dual.to_json(space),
        })
    }
}

fn arcs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Exact free norm with its primal/dual certificate.
pub fn free_norm(space: &FiniteMetricSpace, v: &FreeVector) -> Result<NormCertificate> {
    let n = space.len();
    if v.points() != n {
        return Err(Error::Dimension {
            expected: n,
            found: v.points(),
        });
    }
    if n == 1 {
        return Ok(NormCertificate {
            value: Rational::zero(),
            flow: Vec::new(),
            dual: LipFunction::new(vec![Rational::zero()])?,
        });
    }
    let arcs = arcs(n);
    let mut rows = vec![vec![Rational::zero(); arcs.len()]; n - 1];
    for (col, &(from, to)) in arcs.iter().enumerate() {
        if from > 0 {
            rows[from - 1][col] = rational::int(1);
        }
        if to > 0 {
            rows[to - 1][col] = rational::int(-1);
        }
    }
    let cost: Vec<Rational> = arcs.iter().map(|&(i, j)| space.d(i, j).clone()).collect();
    // Shipping each coefficient straight to or from the base is feasible.
    let warm: Vec<usize> = (1..n)
        .map(|i| {
            let arc = if v.at(i).is_negative() { (0, i) } else { (i, 0) };
            arcs.iter().position(|&a| a == arc).expect("arc exists")
        })
        .collect();
    let lp = LinearProgram::new(rows, v.coeffs().to_vec(), cost)
        .map_err(|e| Error::Solver(e.to_string()))?;
    let sol = lp
        .solve_from(Some(&warm))
        .map_err(|e| Error::Solver(format!("transport program {e}")))?;

    let dual = LipFunction::new(
        std::iter::once(Rational::zero())
            .chain(sol.duals.iter().cloned())
            .collect(),
    )?;
    let flow: Vec<FlowArc> = arcs
        .iter()
        .zip(&sol.x)
        .filter(|(_, x)| !x.is_zero())
        .map(|(&(from, to), x)| FlowArc {
            from,
            to,
            amount: x.clone(),
        })
        .collect();
    let cert = NormCertificate {
        value: sol.objective,
        flow,
        dual,
    };
    check_certificate(space, v, &cert)?;
    Ok(cert)
}

/// Re-verifies a certificate from scratch: flow feasibility and cost, dual
/// Lipschitz bound, and equality of the two objective values.
pub fn check_certificate(space: &FiniteMetricSpace, v: &FreeVector, cert: &NormCertificate) -> Result<()> {
    let n = space.len();
    let mut net = vec![Rational::zero(); n];
    let mut cost = Rational::zero();
    for arc in &cert.flow {
        if arc.amount.is_negative() {
            return Err(Error::Solver("negative flow".into()));
        }
        net[arc.from] += &arc.amount;
        net[arc.to] -= &arc.amount;
        cost += &arc.amount * space.d(arc.from, arc.to);
    }
    if (1..n).any(|i| net[i] != v.at(i)) {
        return Err(Error::Solver("flow violates divergence constraints".into()));
    }
    if cost != cert.value {
        return Err(Error::Solver("flow cost differs from reported value".into()));
    }
    if lip_norm(space, &cert.dual)? > rational::int(1) {
        return Err(Error::Solver("dual certificate is not 1-Lipschitz".into()));
    }
    if cert.dual.pair(v)? != cert.value {
        return Err(Error::Solver("primal and dual optima differ".into()));
    }
    Ok(())
}

/// `(δ(i) - δ(j)) / d(i, j)`.
pub fn molecule(space: &FiniteMetricSpace, i: usize, j: usize) -> Result<FreeVector> {
    if i == j {
        return Err(Error::Domain("molecule needs two distinct points".into()));
    }
    if i >= space.len() || j >= space.len() {
        return Err(Error::Domain(format!("no point {}", i.max(j))));
    }
    let n = space.len();
    let scale = space.d(i, j).recip();
    let mut v = FreeVector::zero(n);
    v.add_dirac(i, &scale);
    v.add_dirac(j, &-scale);
    Ok(v)
}

/// Memoizing free-norm evaluator for one space.
///
/// Vectors are keyed up to nonzero scaling, so the many molecules that map
/// to multiples of the same Dirac difference share one linear program.
pub struct FreeNormOracle<'a> {
    space: &'a FiniteMetricSpace,
    cache: Mutex<HashMap<Vec<Rational>, Rational>>,
}

impl<'a> FreeNormOracle<'a> {
    pub fn new(space: &'a FiniteMetricSpace) -> Self {
        Self {
            space,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn space(&self) -> &'a FiniteMetricSpace {
        self.space
    }

    pub fn solved(&self) -> usize {
        self.cache.lock().expect("cache poisoned").len()
    }

    pub fn norm(&self, v: &FreeVector) -> Result<Rational> {
        Ok(self.norms(std::slice::from_ref(v))?.remove(0))
    }

    /// Norms of many vectors; distinct uncached directions are solved as
    /// independent work items.
    pub fn norms(&self, vs: &[FreeVector]) -> Result<Vec<Rational>> {
        let n = self.space.len();
        if let Some(bad) = vs.iter().find(|v| v.points() != n) {
            return Err(Error::Dimension {
                expected: n,
                found: bad.points(),
            });
        }
        let keyed: Vec<Option<(Rational, Vec<Rational>)>> = vs.iter().map(normalize).collect();
        let missing: Vec<Vec<Rational>> = {
            let cache = self.cache.lock().expect("cache poisoned");
            let mut seen = std::collections::HashSet::new();
            keyed
                .iter()
                .flatten()
                .map(|(_, k)| k)
                .filter(|k| !cache.contains_key(*k) && seen.insert(*k))
                .cloned()
                .collect()
        };
        let solved = exec::try_map(missing, |key| {
            let value = free_norm(self.space, &FreeVector::from_coeffs(key.clone()))?.value;
            Ok::<_, Error>((key, value))
        })?;
        let mut cache = self.cache.lock().expect("cache poisoned");
        cache.extend(solved);
        Ok(keyed
            .into_iter()
            .map(|entry| match entry {
                None => Rational::zero(),
                Some((scale, key)) => scale * &cache[&key],
            })
            .collect())
    }
}

fn normalize(v: &FreeVector) -> Option<(Rational, Vec<Rational>)> {
    let lead = v.coeffs().iter().find(|c| !c.is_zero())?;
    Some((lead.abs(), v.coeffs().iter().map(|c| c / lead).collect()))
}

/// A base-preserving map between finite pointed metric spaces.
#[derive(Clone, Debug)]
pub struct PointMap<'a> {
    domain: &'a FiniteMetricSpace,
    codomain: &'a FiniteMetricSpace,
    image: Vec<usize>,
}

impl<'a> PointMap<'a> {
    pub fn new(domain: &'a FiniteMetricSpace, codomain: &'a FiniteMetricSpace, image: Vec<usize>) -> Result<Self> {
        if image.len() != domain.len() {
            return Err(Error::Dimension {
                expected: domain.len(),
                found: image.len(),
            });
        }
        if image.iter().any(|&p| p >= codomain.len()) {
            return Err(Error::Domain("image index outside the codomain".into()));
        }
        if image[0] != 0 {
            return Err(Error::Domain("map must send base to base".into()));
        }
        Ok(Self {
            domain,
            codomain,
            image,
        })
    }

    pub fn identity(space: &'a FiniteMetricSpace) -> Self {
        Self {
            domain: space,
            codomain: space,
            image: (0..space.len()).collect(),
        }
    }

    pub fn constant_to_base(domain: &'a FiniteMetricSpace, codomain: &'a FiniteMetricSpace) -> Self {
        Self {
            domain,
            codomain,
            image: vec![0; domain.len()],
        }
    }

    pub fn domain(&self) -> &'a FiniteMetricSpace {
        self.domain
    }

    pub fn codomain(&self) -> &'a FiniteMetricSpace {
        self.codomain
    }

    pub fn image(&self) -> &[usize] {
        &self.image
    }

    /// `self ∘ inner`.
    pub fn after(&self, inner: &PointMap<'a>) -> Result<PointMap<'a>> {
        if inner.codomain != self.domain {
            return Err(Error::Domain("maps do not compose".into()));
        }
        PointMap::new(
            inner.domain,
            self.codomain,
            inner.image.iter().map(|&p| self.image[p]).collect(),
        )
    }

    /// Matrix of the linearization in base-reduced coordinates.
    pub fn matrix(&self) -> Matrix {
        let mut m = Matrix::zeros(self.codomain.len() - 1, self.domain.len() - 1);
        for x in 1..self.domain.len() {
            let y = self.image[x];
            if y > 0 {
                m[(y - 1, x - 1)] = rational::int(1);
            }
        }
        m
    }
}

pub fn lipschitz_constant(map: &PointMap) -> Rational {
    map.domain
        .pairs()
        .map(|(i, j)| map.codomain.d(map.image[i], map.image[j]) / map.domain.d(i, j))
        .max()
        .unwrap_or_else(Rational::zero)
}

/// Molecules of `space`, one per unordered pair.
pub fn molecules(space: &FiniteMetricSpace) -> Vec<((usize, usize), FreeVector)> {
    space
        .pairs()
        .map(|(i, j)| ((i, j), molecule(space, i, j).expect("distinct points")))
        .collect()
}

/// Operator norm of a linear map on free vectors, as the largest norm of
/// the image of a molecule. The unit ball is the convex hull of the
/// molecules, so this maximum is exact. `oracle` evaluates norms in the
/// target space; `matrix` acts on base-reduced coordinates of the domain.
pub fn linear_operator_norm(domain: &FiniteMetricSpace, oracle: &FreeNormOracle, matrix: &Matrix) -> Result<Rational> {
    if matrix.cols() + 1 != domain.len() || matrix.rows() + 1 != oracle.space().len() {
        return Err(Error::Dimension {
            expected: domain.len(),
            found: matrix.cols() + 1,
        });
    }
    let images = molecules(domain)
        .into_iter()
        .map(|(_, m)| Ok(FreeVector::from_coeffs(matrix.apply(m.coeffs())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(oracle
        .norms(&images)?
        .into_iter()
        .max()
        .unwrap_or_else(Rational::zero))
}

/// Norm of the linear extension of `map`, by molecule maximization in the
/// codomain; checked against the Lipschitz constant of `map`.
pub fn operator_norm_of_extension(map: &PointMap) -> Result<Rational> {
    operator_norm_of_extension_with(map, &FreeNormOracle::new(map.codomain))
}

pub fn operator_norm_of_extension_with(map: &PointMap, oracle: &FreeNormOracle) -> Result<Rational> {
    if oracle.space() != map.codomain {
        return Err(Error::Domain("oracle does not evaluate in the codomain".into()));
    }
    let norm = linear_operator_norm(map.domain, oracle, &map.matrix())?;
    let lip = lipschitz_constant(map);
    if norm != lip {
        return Err(Error::Solver(format!(
            "extension norm {} differs from Lipschitz constant {}",
            rational::format(&norm),
            rational::format(&lip)
        )));
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::random_ultrametric;
    use crate::rational::{int, ratio};

    fn three_point(s: Rational) -> FiniteMetricSpace {
        FiniteMetricSpace::from_fn(vec!["0".into(), "x".into(), "y".into()], |i, j| {
            if i > 0 && j > 0 {
                s.clone()
            } else {
                int(1)
            }
        })
        .unwrap()
    }

    fn vector(values: &[Rational]) -> FreeVector {
        FreeVector::from_coeffs(values.to_vec())
    }

    #[test]
    fn lip_norm_examples() {
        let space = three_point(ratio(1, 2));
        let f = |v: [i64; 3]| LipFunction::new(v.iter().map(|&x| int(x)).collect()).unwrap();
        assert_eq!(lip_norm(&space, &f([0, 1, 1])).unwrap(), int(1));
        assert_eq!(lip_norm(&space, &f([0, 1, 0])).unwrap(), int(2));
        assert_eq!(lip_norm(&space, &f([0, 0, 0])).unwrap(), int(0));
        assert!(LipFunction::new(vec![int(1), int(0)]).is_err());
        let short = LipFunction::new(vec![int(0), int(1)]).unwrap();
        assert!(lip_norm(&space, &short).is_err());
    }

    #[test]
    fn three_point_norms() {
        let space = three_point(ratio(1, 2));
        let cases = [
            (vector(&[int(1), int(-1)]), ratio(1, 2)),
            (vector(&[int(1), int(1)]), int(2)),
            (vector(&[int(1), int(0)]), int(1)),
            (vector(&[int(0), int(0)]), int(0)),
        ];
        for (v, expected) in cases {
            let cert = free_norm(&space, &v).unwrap();
            assert_eq!(cert.value, expected);
            check_certificate(&space, &v, &cert).unwrap();
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let space = three_point(int(1));
        assert!(free_norm(&space, &FreeVector::zero(5)).is_err());
    }

    #[test]
    fn molecules_have_unit_norm() {
        let space = three_point(ratio(1, 2));
        let m = molecule(&space, 1, 0).unwrap();
        assert_eq!(m.coeffs(), &[int(1), int(0)]);
        let m = molecule(&space, 1, 2).unwrap();
        assert_eq!(m.coeffs(), &[int(2), int(-2)]);
        assert_eq!(free_norm(&space, &m).unwrap().value, int(1));
        assert!(molecule(&space, 1, 1).is_err());
        let random = random_ultrametric(7, 11).unwrap();
        for ((_, _), m) in molecules(&random) {
            assert_eq!(free_norm(&random, &m).unwrap().value, int(1));
        }
    }

    #[test]
    fn oracle_scales_cached_directions() {
        let space = random_ultrametric(5, 2).unwrap();
        let oracle = FreeNormOracle::new(&space);
        let v = FreeVector::dirac(5, 3).minus(&FreeVector::dirac(5, 1));
        let norms = oracle
            .norms(&[v.clone(), v.scaled(&int(-3)), v.scaled(&ratio(1, 7)), FreeVector::zero(5)])
            .unwrap();
        let d = space.d(3, 1).clone();
        assert_eq!(norms, vec![d.clone(), &d * int(3), &d / int(7), int(0)]);
        assert_eq!(oracle.solved(), 1);
    }

    #[test]
    fn point_map_norms() {
        let space = three_point(ratio(1, 2));
        let id = PointMap::identity(&space);
        assert_eq!(lipschitz_constant(&id), int(1));
        assert_eq!(operator_norm_of_extension(&id).unwrap(), int(1));
        let zero = PointMap::constant_to_base(&space, &space);
        assert_eq!(lipschitz_constant(&zero), int(0));
        assert_eq!(operator_norm_of_extension(&zero).unwrap(), int(0));
        // y -> x, the second retraction of the ordering (0, x, y)
        let r2 = PointMap::new(&space, &space, vec![0, 1, 1]).unwrap();
        assert_eq!(lipschitz_constant(&r2), int(1));
        assert_eq!(operator_norm_of_extension(&r2).unwrap(), int(1));
        assert!(PointMap::new(&space, &space, vec![1, 1, 1]).is_err());
        assert!(PointMap::new(&space, &space, vec![0, 1]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let space = three_point(ratio(1, 2));
        let v = vector(&[ratio(3, 2), int(-1)]);
        assert_eq!(FreeVector::from_json(&space, &v.to_json(&space)).unwrap(), v);
        let cert = free_norm(&space, &v).unwrap();
        let json = cert.to_json(&space);
        assert_eq!(json["value"], rational::format(&cert.value));
        let g = LipFunction::from_json(&space, &json["dual_certificate"]).unwrap();
        assert_eq!(g, cert.dual);
    }
}
