//! Finite pointed metric spaces with exact rational distances.

use std::collections::HashSet;

use num_traits::{One, Signed, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{self, Rational};

/// A finite pointed metric space. The base point is always index 0.
///
/// Construction checks the structural invariants (square, symmetric, zero
/// diagonal, positive off-diagonal, distinct labels). The triangle
/// inequality is a property reported by [`validate`], not a structural
/// requirement, so that non-metric inputs can still be inspected.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<Vec<Rational>>,
}

impl FiniteMetricSpace {
    pub fn new(labels: Vec<String>, dist: Vec<Vec<Rational>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Structure("empty space".into()));
        }
        if dist.len() != n {
            return Err(Error::Structure(format!(
                "{} labels but {} matrix rows",
                n,
                dist.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if !seen.insert(label.as_str()) {
                return Err(Error::Structure(format!("duplicate label {label:?}")));
            }
        }
        for (i, row) in dist.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Structure(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if !row[i].is_zero() {
                return Err(Error::Structure(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                if row[j].is_negative() {
                    return Err(Error::Structure(format!("negative entry at ({i}, {j})")));
                }
                if i != j && row[j].is_zero() {
                    return Err(Error::Structure(format!(
                        "zero distance between distinct points {i} and {j}"
                    )));
                }
                if dist[j][i] != row[j] {
                    return Err(Error::Structure(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { labels, dist })
    }

    /// Builds a space with labels `p0, p1, ...`.
    pub fn from_matrix(dist: Vec<Vec<Rational>>) -> Result<Self> {
        let labels = (0..dist.len()).map(|i| format!("p{i}")).collect();
        Self::new(labels, dist)
    }

    /// Builds a space from a distance function on `0..n`.
    pub fn from_fn(labels: Vec<String>, d: impl Fn(usize, usize) -> Rational) -> Result<Self> {
        let n = labels.len();
        let dist = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { Rational::zero() } else { d(i, j) })
                    .collect()
            })
            .collect();
        Self::new(labels, dist)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn base(&self) -> usize {
        0
    }

    pub fn d(&self, i: usize, j: usize) -> &Rational {
        &self.dist[i][j]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn matrix(&self) -> &[Vec<Rational>] {
        &self.dist
    }

    pub fn diameter(&self) -> Rational {
        self.dist
            .iter()
            .flat_map(|row| row.iter())
            .max()
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// Unordered pairs `(i, j)` with `i < j`.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Moves `new_base` to index 0, keeping the other points in order.
    pub fn with_base(&self, new_base: usize) -> Result<Self> {
        if new_base >= self.len() {
            return Err(Error::Domain(format!("no point with index {new_base}")));
        }
        let order: Vec<usize> = std::iter::once(new_base)
            .chain((0..self.len()).filter(|&i| i != new_base))
            .collect();
        self.permuted(&order)
    }

    /// The space with point `order[k]` stored at index `k`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.len())?;
        let labels = order.iter().map(|&i| self.labels[i].clone()).collect();
        let dist = order
            .iter()
            .map(|&i| order.iter().map(|&j| self.dist[i][j].clone()).collect())
            .collect();
        Self::new(labels, dist)
    }

    /// The subspace on `points`, in the given order; the first becomes the base.
    pub fn subspace(&self, points: &[usize]) -> Result<Self> {
        let mut seen = HashSet::new();
        for &p in points {
            if p >= self.len() || !seen.insert(p) {
                return Err(Error::Domain(format!("bad subspace index {p}")));
            }
        }
        let labels = points.iter().map(|&i| self.labels[i].clone()).collect();
        let dist = points
            .iter()
            .map(|&i| points.iter().map(|&j| self.dist[i][j].clone()).collect())
            .collect();
        Self::new(labels, dist)
    }

    pub fn scaled(&self, factor: &Rational) -> Result<Self> {
        if !factor.is_positive() {
            return Err(Error::Domain("scale factor must be positive".into()));
        }
        let dist = self
            .dist
            .iter()
            .map(|row| row.iter().map(|v| v * factor).collect())
            .collect();
        Self::new(self.labels.clone(), dist)
    }

    pub fn to_json(&self) -> serde_json::Value {
        let dist: Vec<Vec<serde_json::Value>> = self
            .dist
            .iter()
            .map(|row| row.iter().map(rational::to_json).collect())
            .collect();
        serde_json::json!({ "labels": self.labels, "dist": dist })
    }
}

pub(crate) fn check_permutation(order: &[usize], n: usize) -> Result<()> {
    if order.len() != n {
        return Err(Error::Domain(format!(
            "ordering has {} entries, expected {n}",
            order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Domain(format!("ordering is not a permutation (index {i})")));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub is_metric: bool,
    pub is_ultrametric: bool,
    /// `(x, y, z)` with `d(x,z) > d(x,y) + d(y,z)`; present iff `!is_metric`.
    pub metric_failing_triple: Option<(usize, usize, usize)>,
    /// `(x, y, z)` with `d(x,z) > max(d(x,y), d(y,z))`; present iff `!is_ultrametric`.
    pub failing_triple: Option<(usize, usize, usize)>,
    pub is_dyadic: bool,
}

/// Exhaustive triple scan. Ultrametric implies metric.
pub fn validate(space: &FiniteMetricSpace) -> ValidationReport {
    let n = space.len();
    let mut metric_fail = None;
    let mut ultra_fail = None;
    'outer: for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if x == y || y == z || x == z {
                    continue;
                }
                let (dxy, dyz, dxz) = (space.d(x, y), space.d(y, z), space.d(x, z));
                if ultra_fail.is_none() && dxz > rational::max(dxy, dyz) {
                    ultra_fail = Some((x, y, z));
                }
                if metric_fail.is_none() && dxz > &(dxy + dyz) {
                    metric_fail = Some((x, y, z));
                }
                if ultra_fail.is_some() && metric_fail.is_some() {
                    break 'outer;
                }
            }
        }
    }
    let is_dyadic = space.pairs().all(|(i, j)| rational::is_power_of_two(space.d(i, j)));
    ValidationReport {
        is_metric: metric_fail.is_none(),
        is_ultrametric: ultra_fail.is_none(),
        metric_failing_triple: metric_fail,
        failing_triple: ultra_fail,
        is_dyadic,
    }
}

pub fn require_ultrametric(space: &FiniteMetricSpace) -> Result<()> {
    match validate(space).failing_triple {
        None => Ok(()),
        Some((x, y, z)) => Err(Error::NotUltrametric(x, y, z)),
    }
}

/// Triples violating "if d(x,y) != d(y,z) then d(x,z) = max(d(x,y), d(y,z))".
/// Always empty for a genuine ultrametric.
pub fn strict_max_check(space: &FiniteMetricSpace) -> Result<Vec<(usize, usize, usize)>> {
    require_ultrametric(space)?;
    let n = space.len();
    let mut violations = Vec::new();
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                let (dxy, dyz) = (space.d(x, y), space.d(y, z));
                if dxy != dyz && space.d(x, z) != rational::max(dxy, dyz) {
                    violations.push((x, y, z));
                }
            }
        }
    }
    Ok(violations)
}

/// Replaces each distance `d` by the power of two `rho` with `rho <= d < 2 rho`.
pub fn round_to_dyadic(space: &FiniteMetricSpace) -> Result<FiniteMetricSpace> {
    require_ultrametric(space)?;
    let n = space.len();
    let mut dist = vec![vec![Rational::zero(); n]; n];
    for (i, j) in space.pairs() {
        let rho = rational::pow2(rational::dyadic_floor_exponent(space.d(i, j))?);
        dist[i][j] = rho.clone();
        dist[j][i] = rho;
    }
    FiniteMetricSpace::new(space.labels.clone(), dist)
}

/// `(min, max)` of `d_b / d_a` over all pairs, for spaces on the same index set.
pub fn bilipschitz_distortion(
    a: &FiniteMetricSpace,
    b: &FiniteMetricSpace,
) -> Result<(Rational, Rational)> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            expected: a.len(),
            found: b.len(),
        });
    }
    let mut ratios = a.pairs().map(|(i, j)| b.d(i, j) / a.d(i, j));
    let Some(first) = ratios.next() else {
        return Ok((Rational::one(), Rational::one()));
    };
    Ok(ratios.fold((first.clone(), first), |(lo, hi), r| {
        (lo.min(r.clone()), hi.max(r))
    }))
}

/// Random ultrametric on `n` points: a random binary merge tree whose merge
/// heights strictly increase towards the root, with `d(x,y)` the height of
/// the merge joining `x` and `y`. Deterministic in `seed`.
pub fn random_ultrametric(n: usize, seed: u64) -> Result<FiniteMetricSpace> {
    if n < 2 {
        return Err(Error::Domain(format!("need at least 2 points, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut dist = vec![vec![Rational::zero(); n]; n];
    let mut height = Rational::zero();
    while clusters.len() > 1 {
        height += rational::ratio(rng.gen_range(1..=9), rng.gen_range(1..=8));
        let a = clusters.swap_remove(rng.gen_range(0..clusters.len()));
        let b = clusters.swap_remove(rng.gen_range(0..clusters.len()));
        for &x in &a {
            for &y in &b {
                dist[x][y] = height.clone();
                dist[y][x] = height.clone();
            }
        }
        clusters.push([a, b].concat());
    }
    // Shuffle so that the base point is not always in a predictable cluster.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let labels = (0..n).map(|i| format!("p{i}")).collect();
    let dist = order
        .iter()
        .map(|&i| order.iter().map(|&j| dist[i][j].clone()).collect())
        .collect();
    FiniteMetricSpace::new(labels, dist)
}

/// [`random_ultrametric`] followed by [`round_to_dyadic`].
pub fn random_dyadic_ultrametric(n: usize, seed: u64) -> Result<FiniteMetricSpace> {
    round_to_dyadic(&random_ultrametric(n, seed)?)
}

/// Uniformly random ordering of the points that starts at the base.
pub fn random_ordering(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rest: Vec<usize> = (1..n).collect();
    rest.shuffle(&mut rng);
    std::iter::once(0).chain(rest).collect()
}
