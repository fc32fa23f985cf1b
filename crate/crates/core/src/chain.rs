//! Nearest-point retractions onto the initial segments of an ordering, the
//! projections they induce on the free space, and the resulting basis.
//!
//! For an ordering `s_1 = base, s_2, ..., s_N` and `S_n = {s_1, ..., s_n}`,
//! `i_n(x)` is the smallest `k <= n` with `d(x, s_k) = dist(x, S_n)` and
//! `r_n(x) = s_{i_n(x)}`. Stage numbers `n` and indices `k` are 1-based
//! throughout this module; points are 0-based indices into the space.

use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::free_norm::{linear_operator_norm, operator_norm_of_extension_with, FreeNormOracle, FreeVector, PointMap};
use crate::linalg::Matrix;
use crate::metric::{self, FiniteMetricSpace};
use crate::rational::Rational;

#[derive(Clone, Debug)]
pub struct RetractionChain<'a> {
    space: &'a FiniteMetricSpace,
    ordering: Vec<usize>,
    /// `table[n - 1][x] = i_n(x)`.
    table: Vec<Vec<usize>>,
    ultrametric: bool,
}

/// Builds the full index table. Any ordering starting at the base is
/// accepted; on non-ultrametric spaces the chain is built for inspection
/// only (see [`RetractionChain::is_exploratory`]).
pub fn build_chain<'a>(space: &'a FiniteMetricSpace, ordering: &[usize]) -> Result<RetractionChain<'a>> {
    metric::check_permutation(ordering, space.len())?;
    if ordering[0] != space.base() {
        return Err(Error::Domain("ordering must start at the base point".into()));
    }
    let n = space.len();
    let mut table = Vec::with_capacity(n);
    let mut current = vec![1usize; n];
    table.push(current.clone());
    for stage in 2..=n {
        let s = ordering[stage - 1];
        for x in 0..n {
            let best = ordering[current[x] - 1];
            // Strict comparison keeps the smaller index on ties.
            if space.d(x, s) < space.d(x, best) {
                current[x] = stage;
            }
        }
        table.push(current.clone());
    }
    Ok(RetractionChain {
        space,
        ordering: ordering.to_vec(),
        table,
        ultrametric: metric::validate(space).is_ultrametric,
    })
}

impl<'a> RetractionChain<'a> {
    pub fn space(&self) -> &'a FiniteMetricSpace {
        self.space
    }

    pub fn len(&self) -> usize {
        self.ordering.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordering.is_empty()
    }

    pub fn ordering(&self) -> &[usize] {
        &self.ordering
    }

    /// True when the space is not ultrametric; the chain's guarantees do
    /// not apply and verification results are informational.
    pub fn is_exploratory(&self) -> bool {
        !self.ultrametric
    }

    /// `s_k`.
    pub fn point(&self, k: usize) -> usize {
        self.ordering[k - 1]
    }

    /// `i_n(x)`.
    pub fn min_index(&self, n: usize, x: usize) -> usize {
        self.table[n - 1][x]
    }

    /// `r_n(x)`.
    pub fn retract(&self, n: usize, x: usize) -> usize {
        self.point(self.min_index(n, x))
    }

    /// `dist(x, S_n)` by a full scan of `S_n`.
    pub fn dist_to_stage(&self, n: usize, x: usize) -> Rational {
        (1..=n)
            .map(|k| self.space.d(x, self.point(k)).clone())
            .min()
            .expect("n >= 1")
    }

    pub fn index_table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn retraction(&self, n: usize) -> Result<PointMap<'a>> {
        self.check_stage(n)?;
        PointMap::new(self.space, self.space, (0..self.len()).map(|x| self.retract(n, x)).collect())
    }

    /// Matrix of `P_n: δ(x) -> δ(r_n(x))` in base-reduced coordinates.
    pub fn projection_matrix(&self, n: usize) -> Result<Matrix> {
        Ok(self.retraction(n)?.matrix())
    }

    fn check_stage(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.len() {
            return Err(Error::Domain(format!("stage {n} outside 1..={}", self.len())));
        }
        Ok(())
    }
}

/// Witnesses of failed chain identities. On an ultrametric space every list
/// is empty; on exploratory chains they describe how the construction breaks.
#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct ChainReport {
    /// `(n, x)`: `i_n(x)` is not the minimal nearest index.
    pub nearest: Vec<(usize, usize)>,
    /// `(n, k)` with `k <= n` and `i_n(s_k) != k`.
    pub retraction: Vec<(usize, usize)>,
    /// `(n, x, y)` with `d(r_n x, r_n y) > d(x, y)`.
    pub lipschitz: Vec<(usize, usize, usize)>,
    /// `(n, x)` with `r_n(r_{n+1}(x)) != r_n(x)`.
    pub composition: Vec<(usize, usize)>,
    /// `(n, x)` with `r_{n+1}(r_n(x)) != r_n(x)`.
    pub reverse_composition: Vec<(usize, usize)>,
    /// `(n, x, y)` with `d(x,y) < dist(x,S_n)` but `i_n(x) != i_n(y)`.
    pub locality: Vec<(usize, usize, usize)>,
    /// `(n, x, y)` with `d(x,y) < dist(x,S_n)` but `dist(y,S_n) != dist(x,S_n)`.
    pub equal_distance: Vec<(usize, usize, usize)>,
    pub checks: usize,
}

impl ChainReport {
    pub fn violations(&self) -> usize {
        self.nearest.len()
            + self.retraction.len()
            + self.lipschitz.len()
            + self.composition.len()
            + self.reverse_composition.len()
            + self.locality.len()
            + self.equal_distance.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violations() == 0
    }

    fn merge(mut self, other: ChainReport) -> ChainReport {
        self.nearest.extend(other.nearest);
        self.retraction.extend(other.retraction);
        self.lipschitz.extend(other.lipschitz);
        self.composition.extend(other.composition);
        self.reverse_composition.extend(other.reverse_composition);
        self.locality.extend(other.locality);
        self.equal_distance.extend(other.equal_distance);
        self.checks += other.checks;
        self
    }
}

/// Exhaustive check of every stage and every pair of points.
pub fn verify_chain(chain: &RetractionChain) -> ChainReport {
    let n_points = chain.len();
    let per_stage = exec::map_range(1..n_points + 1, |n| verify_stage(chain, n));
    per_stage.into_iter().fold(ChainReport::default(), ChainReport::merge)
}

fn verify_stage(chain: &RetractionChain, n: usize) -> ChainReport {
    let space = chain.space;
    let size = chain.len();
    let mut report = ChainReport::default();
    let dist: Vec<Rational> = (0..size).map(|x| chain.dist_to_stage(n, x)).collect();
    for x in 0..size {
        let minimal = (1..=n).find(|&k| space.d(x, chain.point(k)) == &dist[x]);
        if minimal != Some(chain.min_index(n, x)) {
            report.nearest.push((n, x));
        }
        if n < size {
            let next = chain.retract(n + 1, x);
            if chain.retract(n, next) != chain.retract(n, x) {
                report.composition.push((n, x));
            }
            let here = chain.retract(n, x);
            if chain.retract(n + 1, here) != here {
                report.reverse_composition.push((n, x));
            }
            report.checks += 2;
        }
        report.checks += 1;
    }
    for k in 1..=n {
        if chain.min_index(n, chain.point(k)) != k {
            report.retraction.push((n, k));
        }
        report.checks += 1;
    }
    for x in 0..size {
        for y in 0..size {
            if x == y {
                continue;
            }
            let dxy = space.d(x, y);
            if y > x && space.d(chain.retract(n, x), chain.retract(n, y)) > dxy {
                report.lipschitz.push((n, x, y));
            }
            if dxy < &dist[x] {
                if chain.min_index(n, x) != chain.min_index(n, y) {
                    report.locality.push((n, x, y));
                }
                if dist[y] != dist[x] {
                    report.equal_distance.push((n, x, y));
                }
            }
            report.checks += 3;
        }
    }
    report
}

#[derive(Clone, Debug, Default, Serialize, PartialEq, Eq)]
pub struct ProjectionReport {
    /// `(n, m)` with `P_n P_m != P_min(n,m)`.
    pub product_failures: Vec<(usize, usize)>,
    /// Stages whose projection does not have rank `n - 1`.
    pub rank_failures: Vec<usize>,
    /// `‖P_n‖` for `n = 1..=N`.
    #[serde(with = "crate::rational::vec")]
    pub norms: Vec<Rational>,
    /// Stages `n >= 2` with `‖P_n‖ != 1`.
    pub norm_failures: Vec<usize>,
}

impl ProjectionReport {
    pub fn is_clean(&self) -> bool {
        self.product_failures.is_empty() && self.rank_failures.is_empty() && self.norm_failures.is_empty()
    }
}

/// Checks `P_n P_m = P_min(n,m)` for all pairs as exact matrix identities,
/// the ranks, and `‖P_n‖ = 1` via the extension norm of `r_n`.
pub fn verify_projection_algebra(chain: &RetractionChain, oracle: &FreeNormOracle) -> Result<ProjectionReport> {
    let size = chain.len();
    let mats = (1..=size)
        .map(|n| chain.projection_matrix(n))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (1..=size).flat_map(|n| (1..=size).map(move |m| (n, m))).collect();
    let product_failures = exec::try_map(pairs, |(n, m)| {
        let product = mats[n - 1].mul(&mats[m - 1])?;
        Ok::<_, Error>((product != mats[n.min(m) - 1]).then_some((n, m)))
    })?
    .into_iter()
    .flatten()
    .collect();
    let rank_failures = (1..=size).filter(|&n| mats[n - 1].rank() != n - 1).collect();
    let norms = (1..=size)
        .map(|n| operator_norm_of_extension_with(&chain.retraction(n)?, oracle))
        .collect::<Result<Vec<_>>>()?;
    let norm_failures = (2..=size).filter(|&n| !norms[n - 1].is_one()).collect();
    Ok(ProjectionReport {
        product_failures,
        rank_failures,
        norms,
        norm_failures,
    })
}

/// A finite family of free vectors spanning the free space, with the norm
/// of each member.
#[derive(Clone, Debug)]
pub struct BasisFamily {
    pub vectors: Vec<FreeVector>,
    pub norms: Vec<Rational>,
    /// For chain bases: `(s_{k+1}, r_k(s_{k+1}))` for each member, which
    /// makes expansion a back substitution.
    steps: Option<Vec<(usize, usize)>>,
}

impl BasisFamily {
    /// A family with norms evaluated by `oracle`.
    pub fn new(vectors: Vec<FreeVector>, oracle: &FreeNormOracle) -> Result<Self> {
        let norms = oracle.norms(&vectors)?;
        Ok(Self {
            vectors,
            norms,
            steps: None,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Matrix with the family as columns.
    pub fn matrix(&self) -> Result<Matrix> {
        let rows = self.vectors.first().map_or(0, FreeVector::dim);
        let cols: Vec<Vec<Rational>> = self.vectors.iter().map(|v| v.coeffs().to_vec()).collect();
        Matrix::from_columns(rows, &cols)
    }

    /// Coordinates of `v` in the family.
    pub fn expand(&self, v: &FreeVector) -> Result<Vec<Rational>> {
        if let Some(steps) = &self.steps {
            if v.points() != steps.len() + 1 {
                return Err(Error::Dimension {
                    expected: steps.len() + 1,
                    found: v.points(),
                });
            }
            let mut residual = v.clone();
            let mut coeffs = vec![Rational::zero(); steps.len()];
            for (k, &(point, parent)) in steps.iter().enumerate().rev() {
                let c = residual.at(point);
                residual.add_dirac(point, &-c.clone());
                residual.add_dirac(parent, &c);
                coeffs[k] = c;
            }
            debug_assert!(residual.is_zero());
            return Ok(coeffs);
        }
        let inv = self
            .matrix()?
            .inverse()
            .ok_or_else(|| Error::Domain("family does not span the free space".into()))?;
        inv.apply(v.coeffs())
    }

    pub fn combine(&self, coeffs: &[Rational]) -> Result<FreeVector> {
        if coeffs.len() != self.len() {
            return Err(Error::Dimension {
                expected: self.len(),
                found: coeffs.len(),
            });
        }
        let dim = self.vectors.first().map_or(0, FreeVector::dim);
        Ok(self
            .vectors
            .iter()
            .zip(coeffs)
            .fold(FreeVector::from_coeffs(vec![Rational::zero(); dim]), |acc, (e, c)| {
                acc.plus(&e.scaled(c))
            }))
    }
}

/// `e_k = δ(s_{k+1}) - δ(r_k(s_{k+1}))` for `k = 1..N-1`, with
/// `‖e_k‖ = dist(s_{k+1}, S_k)`.
pub fn basis_vectors(chain: &RetractionChain) -> BasisFamily {
    let size = chain.len();
    let mut vectors = Vec::with_capacity(size.saturating_sub(1));
    let mut norms = Vec::with_capacity(size.saturating_sub(1));
    let mut steps = Vec::with_capacity(size.saturating_sub(1));
    for k in 1..size {
        let point = chain.point(k + 1);
        let parent = chain.retract(k, point);
        let mut e = FreeVector::dirac(size, point);
        e.add_dirac(parent, &-Rational::one());
        vectors.push(e);
        norms.push(chain.space.d(point, parent).clone());
        steps.push((point, parent));
    }
    BasisFamily {
        vectors,
        norms,
        steps: Some(steps),
    }
}

/// Norms of the partial-sum projections `Q_n v = Σ_{k<=n} c_k(v) e_k`,
/// `n = 1..=len`, each by molecule maximization.
pub fn partial_sum_norms(space: &FiniteMetricSpace, family: &BasisFamily, oracle: &FreeNormOracle) -> Result<Vec<Rational>> {
    if family.is_empty() {
        return Ok(Vec::new());
    }
    let e = family.matrix()?;
    if e.rows() + 1 != space.len() {
        return Err(Error::Dimension {
            expected: space.len(),
            found: e.rows() + 1,
        });
    }
    let inv = e
        .inverse()
        .ok_or_else(|| Error::Domain("family does not span the free space".into()))?;
    let dim = e.rows();
    let mut q = Matrix::zeros(dim, dim);
    let mut projections = Vec::with_capacity(family.len());
    for k in 0..family.len() {
        for i in 0..dim {
            if e[(i, k)].is_zero() {
                continue;
            }
            for j in 0..dim {
                if !inv[(k, j)].is_zero() {
                    q[(i, j)] += &e[(i, k)] * &inv[(k, j)];
                }
            }
        }
        projections.push(q.clone());
    }
    projections
        .iter()
        .map(|p| linear_operator_norm(space, oracle, p))
        .collect()
}

/// Supremum of the partial-sum projection norms; 1 for a monotone basis.
pub fn basis_constant(space: &FiniteMetricSpace, family: &BasisFamily, oracle: &FreeNormOracle) -> Result<Rational> {
    partial_sum_norms(space, family, oracle)?
        .into_iter()
        .max()
        .ok_or_else(|| Error::Domain("empty family".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::free_norm::free_norm;
    use crate::metric::{random_ordering, random_ultrametric};
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

    #[test]
    fn three_point_index_table() {
        let space = three_point(ratio(1, 2));
        let chain = build_chain(&space, &[0, 1, 2]).unwrap();
        assert_eq!(chain.min_index(2, 2), 2);
        assert_eq!(chain.retract(2, 2), 1);
        for x in 0..3 {
            assert_eq!(chain.retract(3, x), x);
            assert_eq!(chain.retract(1, x), 0);
        }
    }

    #[test]
    fn ties_break_to_the_minimal_index() {
        let space = three_point(int(1));
        let chain = build_chain(&space, &[0, 1, 2]).unwrap();
        assert_eq!(chain.min_index(2, 2), 1);
        assert_eq!(chain.retract(2, 2), 0);
        assert!(verify_chain(&chain).is_clean());
    }

    #[test]
    fn ordering_errors() {
        let space = three_point(int(1));
        assert!(build_chain(&space, &[1, 0, 2]).is_err());
        assert!(build_chain(&space, &[0, 1, 1]).is_err());
        assert!(build_chain(&space, &[0, 1]).is_err());
    }

    #[test]
    fn random_ultrametric_chains_are_clean() {
        for seed in 0..30 {
            let space = random_ultrametric(9, seed).unwrap();
            let chain = build_chain(&space, &random_ordering(9, seed + 1000)).unwrap();
            assert!(!chain.is_exploratory());
            let report = verify_chain(&chain);
            assert!(report.is_clean(), "seed {seed}: {report:?}");
            assert!(report.checks > 0);
        }
    }

    #[test]
    fn collinear_chain_is_exploratory() {
        let space = FiniteMetricSpace::from_fn(vec!["0".into(), "1".into(), "2".into()], |i, j| {
            int((i as i64 - j as i64).abs())
        })
        .unwrap();
        let chain = build_chain(&space, &[0, 2, 1]).unwrap();
        assert!(chain.is_exploratory());
        // Point 1 is at distance 1 from both 0 and 2; the tie goes to s_1 = 0.
        assert_eq!(chain.retract(2, 1), 0);
        let report = verify_chain(&chain);
        // r_2 sends 1 -> 0 and 2 -> 2, so d(r 1, r 2) = 2 > d(1, 2) = 1.
        assert!(report.lipschitz.contains(&(2, 1, 2)));
    }

    #[test]
    fn projection_matrices() {
        let space = three_point(ratio(1, 2));
        let chain = build_chain(&space, &[0, 1, 2]).unwrap();
        assert_eq!(chain.projection_matrix(3).unwrap(), Matrix::identity(2));
        assert_eq!(chain.projection_matrix(1).unwrap(), Matrix::zeros(2, 2));
        let p2 = chain.projection_matrix(2).unwrap();
        // δ_x -> δ_x and δ_y -> δ_x
        assert_eq!(p2.column(0), vec![int(1), int(0)]);
        assert_eq!(p2.column(1), vec![int(1), int(0)]);
        assert!(chain.projection_matrix(0).is_err());
        assert!(chain.projection_matrix(4).is_err());
        let oracle = FreeNormOracle::new(&space);
        let report = verify_projection_algebra(&chain, &oracle).unwrap();
        assert!(report.is_clean(), "{report:?}");
        assert_eq!(report.norms, vec![int(0), int(1), int(1)]);
    }

    #[test]
    fn three_point_basis() {
        let space = three_point(ratio(1, 2));
        let chain = build_chain(&space, &[0, 1, 2]).unwrap();
        let family = basis_vectors(&chain);
        assert_eq!(family.vectors[0].coeffs(), &[int(1), int(0)]);
        assert_eq!(family.vectors[1].coeffs(), &[int(-1), int(1)]);
        assert_eq!(family.norms[1], ratio(1, 2));
        assert_eq!(free_norm(&space, &family.vectors[1]).unwrap().value, ratio(1, 2));
        let coeffs = family.expand(&FreeVector::dirac(3, 2)).unwrap();
        assert_eq!(coeffs, vec![int(1), int(1)]);
        let oracle = FreeNormOracle::new(&space);
        assert_eq!(basis_constant(&space, &family, &oracle).unwrap(), int(1));
    }

    #[test]
    fn two_point_basis_constant() {
        let space = random_ultrametric(2, 5).unwrap();
        let chain = build_chain(&space, &[0, 1]).unwrap();
        let family = basis_vectors(&chain);
        let oracle = FreeNormOracle::new(&space);
        assert_eq!(basis_constant(&space, &family, &oracle).unwrap(), int(1));
    }

    #[test]
    fn triangular_and_general_expansion_agree() {
        let space = random_ultrametric(7, 3).unwrap();
        let chain = build_chain(&space, &random_ordering(7, 8)).unwrap();
        let family = basis_vectors(&chain);
        let oracle = FreeNormOracle::new(&space);
        let general = BasisFamily::new(family.vectors.clone(), &oracle).unwrap();
        assert_eq!(general.norms, family.norms);
        let v = FreeVector::from_coeffs((1..7).map(|i| ratio(i * 3 - 7, i)).collect());
        let a = family.expand(&v).unwrap();
        assert_eq!(a, general.expand(&v).unwrap());
        assert_eq!(family.combine(&a).unwrap(), v);
    }

    #[test]
    fn non_spanning_family_is_rejected() {
        let space = three_point(int(1));
        let oracle = FreeNormOracle::new(&space);
        let v = FreeVector::dirac(3, 1);
        let family = BasisFamily::new(vec![v.clone(), v.scaled(&int(2))], &oracle).unwrap();
        assert!(basis_constant(&space, &family, &oracle).is_err());
    }
}
