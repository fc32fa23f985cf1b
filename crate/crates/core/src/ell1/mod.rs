//! The ℓ1 side: edge-flow coordinates on the dendrogram, their agreement
//! with the transport norm, ℓ1-equivalence constants of a basis, and the
//! consolidated pipeline from an ultrametric space to its constants.

pub mod three_point;

use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::{self, BasisFamily};
use crate::error::{Error, Result};
use crate::exec;
use crate::free_norm::{self, FreeNormOracle, FreeVector, PointMap};
use crate::lp::LinearProgram;
use crate::metric::{self, FiniteMetricSpace};
use crate::rational::{self, Rational};
use crate::rtree::{self, DendrogramTree};

/// Net coefficient mass below each edge, keyed by the child node, together
/// with the edge lengths. The root carries no edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeFlowCoordinates {
    pub mass: Vec<Rational>,
    pub length: Vec<Rational>,
    root: usize,
}

impl EdgeFlowCoordinates {
    /// `Σ length(e) · |mass(e)|`.
    pub fn weighted_l1(&self) -> Rational {
        self.mass
            .iter()
            .zip(&self.length)
            .enumerate()
            .filter(|(u, _)| *u != self.root)
            .map(|(_, (m, l))| m.abs() * l)
            .sum()
    }
}

fn check_support(tree: &DendrogramTree, v: &FreeVector) -> Result<()> {
    if v.points() != tree.len() {
        return Err(Error::Dimension {
            expected: tree.len(),
            found: v.points(),
        });
    }
    Ok(())
}

/// Edge coordinates of `v`, a vector over the dendrogram nodes with the
/// base leaf as base. The base absorbs `-Σ v` so that total mass is zero.
pub fn edge_flow_coordinates(tree: &DendrogramTree, v: &FreeVector) -> Result<EdgeFlowCoordinates> {
    check_support(tree, v)?;
    let mut mass: Vec<Rational> = (0..tree.len()).map(|u| v.at(u)).collect();
    mass[0] = -v.coeffs().iter().sum::<Rational>();
    // Parents come after their children in node order.
    for u in 0..tree.len() {
        if let Some(p) = tree.parent(u) {
            debug_assert!(p > u);
            let m = mass[u].clone();
            mass[p] += m;
        }
    }
    let length = (0..tree.len()).map(|u| tree.edge_length(u).clone()).collect();
    Ok(EdgeFlowCoordinates {
        mass,
        length,
        root: tree.root(),
    })
}

/// Inverse of [`edge_flow_coordinates`].
pub fn vector_from_coordinates(tree: &DendrogramTree, coords: &EdgeFlowCoordinates) -> FreeVector {
    let mut values = coords.mass.clone();
    for u in 0..tree.len() {
        if let Some(p) = tree.parent(u) {
            let m = coords.mass[u].clone();
            values[p] -= m;
        }
    }
    FreeVector::from_point_values(&values)
}

/// Free norm over the dendrogram nodes with the tree metric, computed from
/// edge coordinates in a single bottom-up pass.
pub fn tree_free_norm(tree: &DendrogramTree, v: &FreeVector) -> Result<Rational> {
    Ok(edge_flow_coordinates(tree, v)?.weighted_l1())
}

/// Random vector with small rational coefficients, roughly a third zero.
pub fn random_free_vector(points: usize, rng: &mut impl Rng) -> FreeVector {
    FreeVector::from_coeffs(
        (1..points)
            .map(|_| {
                if rng.gen_ratio(1, 3) {
                    Rational::zero()
                } else {
                    rational::ratio(rng.gen_range(-6..=6), rng.gen_range(1..=4))
                }
            })
            .collect(),
    )
}

#[derive(Clone, Debug, Serialize)]
pub struct NormMismatch {
    pub vector: Vec<String>,
    pub tree: String,
    pub lp: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub nodes: usize,
    pub random_vectors: usize,
    pub leaf_vectors: usize,
    pub molecules: usize,
    pub mismatches: Vec<NormMismatch>,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Compares the edge-flow norm with the transport LP on `(M ∪ Br(T), ρ)`
/// for `count` random vectors, `count` random vectors supported on the
/// leaves, and every molecule between nodes (whose norm must be 1).
pub fn oracle_vs_lp(space: &FiniteMetricSpace, count: usize, seed: u64) -> Result<OracleReport> {
    let tree = rtree::dendrogram(space)?;
    let nodes = tree.metric_space(space)?;
    let oracle = FreeNormOracle::new(&nodes);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vectors: Vec<FreeVector> = (0..count).map(|_| random_free_vector(nodes.len(), &mut rng)).collect();
    let leaf_vectors: Vec<FreeVector> = (0..count)
        .map(|_| random_free_vector(space.len(), &mut rng).extended(nodes.len()))
        .collect();
    vectors.extend(leaf_vectors);
    let molecules = free_norm::molecules(&nodes);
    let lp_norms = exec::try_map(vectors.clone(), |v| free_norm::free_norm(&nodes, &v).map(|c| c.value))?;
    let molecule_norms = oracle.norms(&molecules.iter().map(|(_, m)| m.clone()).collect::<Vec<_>>())?;
    let mut mismatches = Vec::new();
    for (v, lp) in vectors.iter().zip(&lp_norms) {
        let tree_norm = tree_free_norm(&tree, v)?;
        if &tree_norm != lp {
            mismatches.push(mismatch(v, &tree_norm, lp));
        }
    }
    for ((_, m), lp) in molecules.iter().zip(&molecule_norms) {
        let tree_norm = tree_free_norm(&tree, m)?;
        if tree_norm != *lp || !lp.is_one() {
            mismatches.push(mismatch(m, &tree_norm, lp));
        }
    }
    Ok(OracleReport {
        nodes: nodes.len(),
        random_vectors: count,
        leaf_vectors: count,
        molecules: molecules.len(),
        mismatches,
    })
}

fn mismatch(v: &FreeVector, tree: &Rational, lp: &Rational) -> NormMismatch {
    NormMismatch {
        vector: v.coeffs().iter().map(rational::format).collect(),
        tree: rational::format(tree),
        lp: rational::format(lp),
    }
}

/// `u_k = (δ(child) - δ(parent)) / length` for every edge, over the nodes.
pub fn edge_molecules(tree: &DendrogramTree) -> Vec<FreeVector> {
    tree.edges()
        .map(|(child, parent, len)| {
            let mut u = FreeVector::zero(tree.len());
            let scale = len.recip();
            u.add_dirac(child, &scale);
            u.add_dirac(parent, &-scale);
            u
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EdgeIsometryReport {
    pub edges: usize,
    pub patterns: usize,
    /// Patterns (as coefficient strings) where `‖Σ c_k u_k‖ ≠ Σ |c_k|`.
    pub failures: Vec<Vec<String>>,
}

impl EdgeIsometryReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Checks `‖Σ c_k u_k‖ = Σ |c_k|` with both the edge-flow norm and the
/// transport LP, on single edges, the all-ones pattern and `count` random
/// patterns.
pub fn edge_molecule_isometry(space: &FiniteMetricSpace, tree: &DendrogramTree, count: usize, seed: u64) -> Result<EdgeIsometryReport> {
    let nodes = tree.metric_space(space)?;
    let units = edge_molecules(tree);
    let k = units.len();
    let mut patterns: Vec<Vec<Rational>> = (0..k)
        .map(|e| (0..k).map(|f| if e == f { rational::int(1) } else { Rational::zero() }).collect())
        .collect();
    patterns.push(vec![rational::int(1); k]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    patterns.extend((0..count).map(|_| random_free_vector(k + 1, &mut rng).coeffs().to_vec()));
    let combined: Vec<FreeVector> = patterns
        .iter()
        .map(|c| {
            units
                .iter()
                .zip(c)
                .fold(FreeVector::zero(nodes.len()), |acc, (u, c)| acc.plus(&u.scaled(c)))
        })
        .collect();
    let lp = exec::try_map(combined.clone(), |v| free_norm::free_norm(&nodes, &v).map(|c| c.value))?;
    let mut failures = Vec::new();
    for ((c, v), lp) in patterns.iter().zip(&combined).zip(&lp) {
        let l1: Rational = c.iter().map(Signed::abs).sum();
        if tree_free_norm(tree, v)? != l1 || lp != &l1 {
            failures.push(c.iter().map(rational::format).collect());
        }
    }
    Ok(EdgeIsometryReport {
        edges: k,
        patterns: patterns.len(),
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct L1Constants {
    /// Largest `λ` with `λ Σ |c_k| ‖e_k‖ <= ‖Σ c_k e_k‖`.
    #[serde(with = "crate::rational")]
    pub lower: Rational,
    /// Smallest `Λ` with `‖Σ c_k e_k‖ <= Λ Σ |c_k| ‖e_k‖`.
    #[serde(with = "crate::rational")]
    pub upper: Rational,
    pub exact: bool,
    /// Lower constant recomputed by one linear program per sign orthant,
    /// when the dimension is within the orthant budget.
    #[serde(with = "crate::rational::opt")]
    pub orthant_lower: Option<Rational>,
    pub orthants_solved: usize,
}

/// Default dimension up to which orthant programs cross-check the lower
/// constant.
pub const ORTHANT_BUDGET: usize = 6;

/// ℓ1-equivalence constants of `family` with respect to the normalized
/// coefficient norm `Σ |c_k| ‖e_k‖`.
///
/// The lower constant is `1 / max_m Σ_k |c_k(m)| ‖e_k‖` over molecules
/// `m`: the coefficient norm is convex and the unit ball of the free space
/// is the convex hull of the molecules, so the maximum over the ball sits at
/// a molecule. The upper constant is the largest `‖e_k‖ / norms[k]`,
/// attained at a vertex of the cross-polytope.
pub fn l1_equivalence_constants(
    space: &FiniteMetricSpace,
    family: &BasisFamily,
    oracle: &FreeNormOracle,
    orthant_budget: usize,
) -> Result<L1Constants> {
    if family.len() + 1 != space.len() {
        return Err(Error::Dimension {
            expected: space.len(),
            found: family.len() + 1,
        });
    }
    if family.norms.iter().any(|n| !n.is_positive()) {
        return Err(Error::Domain("family has a zero vector".into()));
    }
    let actual = oracle.norms(&family.vectors)?;
    let upper = actual
        .iter()
        .zip(&family.norms)
        .map(|(a, n)| a / n)
        .max()
        .unwrap_or_else(Rational::one);
    let phis = exec::try_map(free_norm::molecules(space), |(_, m)| {
        Ok::<_, Error>(
            family
                .expand(&m)?
                .iter()
                .zip(&family.norms)
                .map(|(c, n)| c.abs() * n)
                .sum::<Rational>(),
        )
    })?;
    let lower = phis
        .into_iter()
        .max()
        .map(|p| p.recip())
        .unwrap_or_else(Rational::one);
    let (orthant_lower, orthants_solved) = if family.len() <= orthant_budget {
        let (value, solved) = orthant_minimum(space, family)?;
        (Some(value), solved)
    } else {
        (None, 0)
    };
    Ok(L1Constants {
        lower,
        upper,
        exact: true,
        orthant_lower,
        orthants_solved,
    })
}

/// `min ‖Σ c_k e_k‖` over `Σ |c_k| norms[k] = 1`, one joint transport LP per
/// sign pattern with the first sign fixed.
pub fn orthant_minimum(space: &FiniteMetricSpace, family: &BasisFamily) -> Result<(Rational, usize)> {
    let k = family.len();
    if k == 0 {
        return Ok((Rational::one(), 0));
    }
    let n = space.len();
    let arcs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let width = arcs.len() + k;
    let patterns: Vec<u64> = (0..1u64 << (k - 1)).collect();
    let values = exec::try_map(patterns, |mask| {
        let sign = |idx: usize| idx > 0 && mask >> (idx - 1) & 1 == 1;
        let mut rows = vec![vec![Rational::zero(); width]; n];
        for (col, &(from, to)) in arcs.iter().enumerate() {
            if from > 0 {
                rows[from - 1][col] = rational::int(1);
            }
            if to > 0 {
                rows[to - 1][col] = rational::int(-1);
            }
        }
        for (idx, e) in family.vectors.iter().enumerate() {
            for p in 1..n {
                let c = e.at(p);
                if !c.is_zero() {
                    rows[p - 1][arcs.len() + idx] = if sign(idx) { c } else { -c };
                }
            }
            rows[n - 1][arcs.len() + idx] = family.norms[idx].clone();
        }
        let mut rhs = vec![Rational::zero(); n];
        rhs[n - 1] = Rational::one();
        let cost: Vec<Rational> = arcs
            .iter()
            .map(|&(i, j)| space.d(i, j).clone())
            .chain(std::iter::repeat_n(Rational::zero(), k))
            .collect();
        LinearProgram::new(rows, rhs, cost)
            .and_then(|lp| lp.solve())
            .map(|s| s.objective)
            .map_err(|e| Error::Solver(format!("orthant program {e}")))
    })?;
    let solved = values.len();
    Ok((values.into_iter().min().expect("at least one orthant"), solved))
}

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub ordering: Option<Vec<usize>>,
    pub oracle_vectors: usize,
    pub orthant_budget: usize,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            ordering: None,
            oracle_vectors: 20,
            orthant_budget: ORTHANT_BUDGET,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PipelineReport {
    pub points: usize,
    /// `max / min` of `ρ / d` after dyadic rounding.
    #[serde(with = "crate::rational")]
    pub distortion: Rational,
    pub branching_points: usize,
    pub claims_passed: bool,
    #[serde(with = "crate::rational")]
    pub retraction_constant: Rational,
    /// Norm of the linearized retraction `F(M ∪ Br(T)) -> F(M)`.
    #[serde(with = "crate::rational")]
    pub projection_norm: Rational,
    pub oracle: OracleReport,
    #[serde(with = "crate::rational")]
    pub basis_constant: Rational,
    #[serde(with = "crate::rational")]
    pub l1_lower: Rational,
    #[serde(with = "crate::rational")]
    pub l1_upper: Rational,
    pub l1_exact: bool,
    #[serde(with = "crate::rational::opt")]
    pub l1_orthant_lower: Option<Rational>,
}

impl PipelineReport {
    pub fn passed(&self) -> bool {
        let four = rational::int(4);
        self.distortion < rational::int(2)
            && self.claims_passed
            && self.retraction_constant <= four
            && self.projection_norm <= four
            && self.oracle.passed()
            && self.basis_constant.is_one()
            && self.l1_lower.is_positive()
            && self.l1_lower <= self.l1_upper
            && self.l1_upper.is_one()
            && self.l1_orthant_lower.as_ref().is_none_or(|o| o == &self.l1_lower)
    }
}

/// Rounding, tree and retraction, oracle comparison, retraction basis and
/// ℓ1 constants for one ultrametric space.
pub fn pipeline(space: &FiniteMetricSpace, options: &PipelineOptions) -> Result<PipelineReport> {
    metric::require_ultrametric(space)?;
    let dyadic = metric::round_to_dyadic(space)?;
    let (lo, hi) = metric::bilipschitz_distortion(space, &dyadic)?;
    let distortion = hi / lo;

    let claims = rtree::verify_retraction_claims(&dyadic)?;
    let tree = rtree::dendrogram(&dyadic)?;
    let nodes = tree.metric_space(&dyadic)?;
    let image = claims.retraction_table.iter().map(|e| e.image).collect();
    let retraction = PointMap::new(&nodes, &dyadic, image)?;
    let projection_norm = free_norm::operator_norm_of_extension(&retraction)?;
    let oracle_report = oracle_vs_lp(&dyadic, options.oracle_vectors, options.seed)?;

    let ordering: Vec<usize> = options.ordering.clone().unwrap_or_else(|| (0..space.len()).collect());
    let chain = chain::build_chain(space, &ordering)?;
    let family = chain::basis_vectors(&chain);
    let oracle = FreeNormOracle::new(space);
    let basis_constant = chain::basis_constant(space, &family, &oracle)?;
    let l1 = l1_equivalence_constants(space, &family, &oracle, options.orthant_budget)?;

    Ok(PipelineReport {
        points: space.len(),
        distortion,
        branching_points: tree.len() - space.len(),
        claims_passed: claims.passed(),
        retraction_constant: claims.lipschitz_constant,
        projection_norm,
        oracle: oracle_report,
        basis_constant,
        l1_lower: l1.lower,
        l1_upper: l1.upper,
        l1_exact: l1.exact,
        l1_orthant_lower: l1.orthant_lower,
    })
}
