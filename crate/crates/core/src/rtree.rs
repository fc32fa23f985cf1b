//! The R-tree obtained from an ultrametric space by gluing the rays
//! `{m} × [0, ∞)`: `(m, i) ~ (n, j)` iff `i = j >= d(m, n) / 2`, with metric
//! `ρ(⟨m,i⟩, ⟨n,j⟩) = 2 max{i, j, d(m,n)/2} - (i + j)`.
//!
//! Points of `M` sit at height 0. The finite set of branching points, the
//! retraction sending each of them to its anchor, and a dendrogram
//! realizing `M ∪ Br(T)` as an edge-weighted tree are all computed exactly.

use std::collections::BTreeSet;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{self, FiniteMetricSpace};
use crate::rational::{self, Rational};

/// A representative `(anchor, height)` of the class `⟨anchor, height⟩`.
/// Functions in this module return canonical representatives, whose anchor
/// is the smallest index in the closed ball `B(anchor, 2·height)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct TreePoint {
    pub anchor: usize,
    #[serde(with = "crate::rational")]
    pub height: Rational,
}

impl TreePoint {
    pub fn new(anchor: usize, height: Rational) -> Self {
        Self { anchor, height }
    }

    pub fn leaf(anchor: usize) -> Self {
        Self::new(anchor, Rational::zero())
    }

    pub fn is_leaf(&self) -> bool {
        self.height.is_zero()
    }

    pub fn label(&self, space: &FiniteMetricSpace) -> String {
        if self.is_leaf() {
            space.label(self.anchor).to_string()
        } else {
            format!("{}@{}", space.label(self.anchor), rational::format(&self.height))
        }
    }
}

pub fn canonicalize(space: &FiniteMetricSpace, p: &TreePoint) -> Result<TreePoint> {
    if p.height.is_negative() {
        return Err(Error::Domain("negative height".into()));
    }
    if p.anchor >= space.len() {
        return Err(Error::Domain(format!("no point {}", p.anchor)));
    }
    let radius = &p.height * rational::int(2);
    let anchor = (0..space.len())
        .find(|&n| space.d(p.anchor, n) <= &radius)
        .expect("the anchor lies in its own ball");
    Ok(TreePoint::new(anchor, p.height.clone()))
}

pub fn tree_distance(space: &FiniteMetricSpace, p: &TreePoint, q: &TreePoint) -> Rational {
    let half = space.d(p.anchor, q.anchor) / rational::int(2);
    let top = rational::max(rational::max(&p.height, &q.height), &half).clone();
    top * rational::int(2) - (&p.height + &q.height)
}

/// Parameter along `[p, q]` of the highest point of the segment.
pub fn apex_parameter(space: &FiniteMetricSpace, p: &TreePoint, q: &TreePoint) -> Rational {
    let half = space.d(p.anchor, q.anchor) / rational::int(2);
    rational::max(rational::max(&p.height, &q.height), &half) - &p.height
}

/// `φ_{p,q}(t)`: the point of the segment `[p, q]` at distance `t` from `p`.
pub fn segment_point(space: &FiniteMetricSpace, p: &TreePoint, q: &TreePoint, t: &Rational) -> Result<TreePoint> {
    let length = tree_distance(space, p, q);
    if t.is_negative() || t > &length {
        return Err(Error::Domain(format!(
            "parameter {} outside [0, {}]",
            rational::format(t),
            rational::format(&length)
        )));
    }
    canonicalize(space, &raw_segment_point(space, p, q, t, &length))
}

fn raw_segment_point(space: &FiniteMetricSpace, p: &TreePoint, q: &TreePoint, t: &Rational, length: &Rational) -> TreePoint {
    let (i, j) = (&p.height, &q.height);
    if j > i {
        return raw_segment_point(space, q, p, &(length - t), length);
    }
    let d = space.d(p.anchor, q.anchor);
    let half = d / rational::int(2);
    if i >= &half {
        // Straight down the ray of q.
        TreePoint::new(q.anchor, length + j - t)
    } else if t <= &(&half - i) {
        TreePoint::new(p.anchor, i + t)
    } else {
        TreePoint::new(q.anchor, d - i - t)
    }
}

/// Branching points `⟨m, d(m,n)/2⟩` over all pairs, canonical and
/// deduplicated, sorted by height then anchor.
pub fn branching_points(space: &FiniteMetricSpace) -> Result<Vec<TreePoint>> {
    metric::require_ultrametric(space)?;
    let mut set = BTreeSet::new();
    for (m, n) in space.pairs() {
        let v = canonicalize(space, &TreePoint::new(m, space.d(m, n) / rational::int(2)))?;
        set.insert((v.height.clone(), v.anchor));
    }
    Ok(set.into_iter().map(|(h, a)| TreePoint::new(a, h)).collect())
}

/// A pair `(m, n)` with `v = ⟨m, d(m,n)/2⟩` and `m` the canonical anchor.
pub fn generating_pair(space: &FiniteMetricSpace, v: &TreePoint) -> Option<(usize, usize)> {
    let v = canonicalize(space, v).ok()?;
    let diameter = &v.height * rational::int(2);
    (0..space.len())
        .find(|&n| n != v.anchor && space.d(v.anchor, n) == &diameter)
        .map(|n| (v.anchor, n))
}

#[derive(Clone, Debug, Serialize)]
pub struct WitnessReport {
    pub point: TreePoint,
    pub witnesses: Option<[TreePoint; 3]>,
    /// Witness pairs `(i, j)` for which `v` is not on `[x_i, x_j]`.
    pub failures: Vec<(usize, usize)>,
    pub distinct: bool,
    pub passed: bool,
}

/// Checks `x1 = ⟨m,0⟩, x2 = ⟨n,0⟩, x3 = ⟨m, d(m,n)⟩` witness that `v`
/// branches: `v` lies on each of the three segments between them and is
/// distinct from all three.
pub fn verify_branching_witnesses(space: &FiniteMetricSpace, v: &TreePoint) -> Result<WitnessReport> {
    let v = canonicalize(space, v)?;
    let Some((m, n)) = generating_pair(space, &v) else {
        return Ok(WitnessReport {
            point: v,
            witnesses: None,
            failures: Vec::new(),
            distinct: false,
            passed: false,
        });
    };
    let xs = [
        TreePoint::leaf(m),
        TreePoint::leaf(n),
        canonicalize(space, &TreePoint::new(m, space.d(m, n).clone()))?,
    ];
    let mut failures = Vec::new();
    for a in 0..3 {
        for b in a + 1..3 {
            let through = tree_distance(space, &xs[a], &v) + tree_distance(space, &v, &xs[b]);
            if through != tree_distance(space, &xs[a], &xs[b]) {
                failures.push((a, b));
            }
        }
    }
    let distinct = xs.iter().all(|x| x != &v);
    Ok(WitnessReport {
        passed: failures.is_empty() && distinct,
        point: v,
        witnesses: Some(xs),
        failures,
        distinct,
    })
}

/// `r(a) = a` on `M`, and the canonical anchor on `Br(T)`.
pub fn retraction_to_m(space: &FiniteMetricSpace, a: &TreePoint) -> Result<usize> {
    let a = canonicalize(space, a)?;
    if a.is_leaf() || generating_pair(space, &a).is_some() {
        Ok(a.anchor)
    } else {
        Err(Error::Domain(format!(
            "{} is neither a point of M nor a branching point",
            a.label(space)
        )))
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FourPointReport {
    pub quadruples: usize,
    /// Index quadruples (into the supplied point list) that fail.
    pub violations: Vec<[usize; 4]>,
}

/// For every quadruple: `ρ(w,x) + ρ(y,z) <= max{ρ(w,y) + ρ(x,z), ρ(w,z) + ρ(x,y)}`.
/// Checked on multisets, using that the inequality holds for all labelings
/// exactly when the two largest of the three pair sums coincide.
pub fn four_point_check(space: &FiniteMetricSpace, points: &[TreePoint]) -> FourPointReport {
    let k = points.len();
    let dm: Vec<Vec<Rational>> = points
        .iter()
        .map(|p| points.iter().map(|q| tree_distance(space, p, q)).collect())
        .collect();
    let mut report = FourPointReport::default();
    if k < 4 {
        return report;
    }
    for w in 0..k {
        for x in w..k {
            for y in x..k {
                for z in y..k {
                    let mut sums = [
                        &dm[w][x] + &dm[y][z],
                        &dm[w][y] + &dm[x][z],
                        &dm[w][z] + &dm[x][y],
                    ];
                    sums.sort();
                    if sums[1] != sums[2] {
                        report.violations.push([w, x, y, z]);
                    }
                    report.quadruples += 1;
                }
            }
        }
    }
    report
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SegmentReport {
    pub segments: usize,
    pub checks: usize,
    pub endpoint_failures: Vec<(usize, usize)>,
    pub isometry_failures: Vec<(usize, usize)>,
    pub reversal_failures: Vec<(usize, usize)>,
    pub nesting_failures: Vec<(usize, usize)>,
    pub uniqueness_failures: Vec<(usize, usize, usize)>,
}

impl SegmentReport {
    pub fn is_clean(&self) -> bool {
        self.endpoint_failures.is_empty()
            && self.isometry_failures.is_empty()
            && self.reversal_failures.is_empty()
            && self.nesting_failures.is_empty()
            && self.uniqueness_failures.is_empty()
    }
}

/// Parameters in quarters of the segment length plus the apex and its
/// mirror, where the segment switches rays.
pub fn segment_grid(space: &FiniteMetricSpace, p: &TreePoint, q: &TreePoint) -> Vec<Rational> {
    let length = tree_distance(space, p, q);
    let apex = apex_parameter(space, p, q);
    let mut grid: BTreeSet<Rational> = (0..=4).map(|k| &length * rational::ratio(k, 4)).collect();
    grid.insert(&length - &apex);
    grid.insert(apex);
    grid.into_iter().collect()
}

/// Finite-scale checks of the segment family on all ordered pairs from
/// `points`: endpoints, isometry on the grid, `φ_{q,p}(t) = φ_{p,q}(ρ - t)`,
/// nesting `[p, φ(t)] ⊂ φ([0, t])` and `[φ(t), q] ⊂ φ([t, ρ])`, and that any
/// supplied point `w` with `ρ(p,w) + ρ(w,q) = ρ(p,q)` is `φ(ρ(p,w))`.
pub fn verify_segment_axioms(space: &FiniteMetricSpace, points: &[TreePoint]) -> Result<SegmentReport> {
    let points = points
        .iter()
        .map(|p| canonicalize(space, p))
        .collect::<Result<Vec<_>>>()?;
    let mut report = SegmentReport::default();
    for (a, p) in points.iter().enumerate() {
        for (b, q) in points.iter().enumerate() {
            if a == b {
                continue;
            }
            report.segments += 1;
            let length = tree_distance(space, p, q);
            let grid = segment_grid(space, p, q);
            let phi = grid
                .iter()
                .map(|t| segment_point(space, p, q, t))
                .collect::<Result<Vec<_>>>()?;
            report.checks += 2;
            if phi.first() != Some(p) || phi.last() != Some(q) {
                report.endpoint_failures.push((a, b));
            }
            for (u, tu) in grid.iter().enumerate() {
                for (v, tv) in grid.iter().enumerate() {
                    report.checks += 1;
                    if tree_distance(space, &phi[u], &phi[v]) != (tu - tv).abs() {
                        report.isometry_failures.push((a, b));
                    }
                }
                report.checks += 1;
                if segment_point(space, q, p, &(&length - tu))? != phi[u] {
                    report.reversal_failures.push((a, b));
                }
                if tu.is_zero() || tu == &length {
                    continue;
                }
                let mid = &phi[u];
                for (v, tv) in grid.iter().enumerate() {
                    report.checks += 1;
                    let nested = if tv <= tu {
                        segment_point(space, p, mid, tv)?
                    } else {
                        segment_point(space, mid, q, &(tv - tu))?
                    };
                    if nested != phi[v] {
                        report.nesting_failures.push((a, b));
                    }
                }
            }
            for (c, w) in points.iter().enumerate() {
                let to_w = tree_distance(space, p, w);
                if to_w.clone() + tree_distance(space, w, q) == length {
                    report.checks += 1;
                    if &segment_point(space, p, q, &to_w)? != w {
                        report.uniqueness_failures.push((a, b, c));
                    }
                }
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct RetractionEntry {
    pub point: TreePoint,
    pub label: String,
    pub image: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClaimViolation {
    pub a: TreePoint,
    pub b: TreePoint,
    #[serde(with = "crate::rational")]
    pub lhs: Rational,
    #[serde(with = "crate::rational")]
    pub rhs: Rational,
}

#[derive(Clone, Debug, Serialize)]
pub struct RetractionReport {
    pub retraction_table: Vec<RetractionEntry>,
    /// `d(a, m_b) <= 2 ρ(a, b)` for `a ∈ M`, `b ∈ Br(T)`.
    pub c1_checks: usize,
    pub c1_violations: Vec<ClaimViolation>,
    #[serde(with = "crate::rational::opt")]
    pub c1_max_ratio: Option<Rational>,
    /// `d(a, m_b) <= 2 max{d(m_b,n_b), d(m_b,a)} - d(m_b,n_b)`.
    pub end_violations: Vec<ClaimViolation>,
    /// `d(m_a, m_b) <= 4 ρ(a, b)` for distinct `a, b ∈ Br(T)`.
    pub c2_checks: usize,
    pub c2_violations: Vec<ClaimViolation>,
    #[serde(with = "crate::rational::opt")]
    pub c2_max_ratio: Option<Rational>,
    /// `2^m <= 4 (2^max{m,n} - 2^(n-1) - 2^(k-1))` on the exponents of each pair.
    pub end2_violations: Vec<ClaimViolation>,
    /// Largest `d(r a, r b) / ρ(a, b)` over distinct points of `M ∪ Br(T)`.
    #[serde(with = "crate::rational")]
    pub lipschitz_constant: Rational,
    pub idempotent: bool,
}

impl RetractionReport {
    pub fn passed(&self) -> bool {
        self.c1_violations.is_empty()
            && self.c2_violations.is_empty()
            && self.end_violations.is_empty()
            && self.end2_violations.is_empty()
            && self.idempotent
            && self.lipschitz_constant <= rational::int(4)
    }
}

/// Exhaustive verification of the retraction `M ∪ Br(T) -> M` on a
/// 2^n-valued ultrametric space.
pub fn verify_retraction_claims(space: &FiniteMetricSpace) -> Result<RetractionReport> {
    let report = metric::validate(space);
    if let Some((x, y, z)) = report.failing_triple {
        return Err(Error::NotUltrametric(x, y, z));
    }
    if !report.is_dyadic {
        return Err(Error::NotDyadic);
    }
    let two = rational::int(2);
    let four = rational::int(4);
    let branching = branching_points(space)?;
    let leaves: Vec<TreePoint> = (0..space.len()).map(TreePoint::leaf).collect();
    let pairs: Vec<(TreePoint, usize, usize)> = branching
        .iter()
        .map(|b| {
            let (m, n) = generating_pair(space, b).expect("enumerated branching point");
            (b.clone(), m, n)
        })
        .collect();

    let mut c1_violations = Vec::new();
    let mut end_violations = Vec::new();
    let mut c1_max: Option<Rational> = None;
    let mut c1_checks = 0;
    for a in 0..space.len() {
        for (b, mb, nb) in &pairs {
            let lhs = space.d(a, *mb).clone();
            let rho = tree_distance(space, &leaves[a], b);
            let rhs = &two * &rho;
            c1_checks += 1;
            if lhs > rhs {
                c1_violations.push(violation(&leaves[a], b, &lhs, &rhs));
            }
            let ratio = &lhs / &rho;
            if c1_max.as_ref().is_none_or(|m| &ratio > m) {
                c1_max = Some(ratio);
            }
            let dmn = space.d(*mb, *nb);
            let end_rhs = &two * rational::max(dmn, space.d(*mb, a)) - dmn;
            if lhs > end_rhs {
                end_violations.push(violation(&leaves[a], b, &lhs, &end_rhs));
            }
        }
    }

    let mut c2_violations = Vec::new();
    let mut end2_violations = Vec::new();
    let mut c2_max: Option<Rational> = None;
    let mut c2_checks = 0;
    for (x, (a, ma, na)) in pairs.iter().enumerate() {
        for (b, mb, nb) in pairs.iter().skip(x + 1) {
            let lhs = space.d(*ma, *mb).clone();
            let rho = tree_distance(space, a, b);
            let rhs = &four * &rho;
            c2_checks += 1;
            if lhs > rhs {
                c2_violations.push(violation(a, b, &lhs, &rhs));
            }
            let ratio = &lhs / &rho;
            if c2_max.as_ref().is_none_or(|m| &ratio > m) {
                c2_max = Some(ratio);
            }
            // Order so that the exponent of d(m_a, n_a) is the larger one.
            let (da, db) = (space.d(*ma, *na), space.d(*mb, *nb));
            let (big, small) = if da >= db { (da, db) } else { (db, da) };
            let n_exp = rational::dyadic_floor_exponent(big)?;
            let k_exp = rational::dyadic_floor_exponent(small)?;
            let top = if lhs.is_zero() {
                rational::pow2(n_exp)
            } else {
                rational::pow2(rational::dyadic_floor_exponent(&lhs)?.max(n_exp))
            };
            let end2_rhs = &four * (top - rational::pow2(n_exp - 1) - rational::pow2(k_exp - 1));
            if lhs > end2_rhs {
                end2_violations.push(violation(a, b, &lhs, &end2_rhs));
            }
        }
    }

    let domain: Vec<TreePoint> = leaves.iter().chain(&branching).cloned().collect();
    let images = domain
        .iter()
        .map(|p| retraction_to_m(space, p))
        .collect::<Result<Vec<_>>>()?;
    let idempotent = images
        .iter()
        .map(|&m| retraction_to_m(space, &TreePoint::leaf(m)))
        .collect::<Result<Vec<_>>>()?
        == images;
    let mut lipschitz_constant = Rational::zero();
    for x in 0..domain.len() {
        for y in x + 1..domain.len() {
            let ratio = space.d(images[x], images[y]) / tree_distance(space, &domain[x], &domain[y]);
            if ratio > lipschitz_constant {
                lipschitz_constant = ratio;
            }
        }
    }
    let retraction_table = domain
        .iter()
        .zip(&images)
        .map(|(p, &image)| RetractionEntry {
            label: p.label(space),
            point: p.clone(),
            image,
        })
        .collect();
    Ok(RetractionReport {
        retraction_table,
        c1_checks,
        c1_violations,
        c1_max_ratio: c1_max,
        end_violations,
        c2_checks,
        c2_violations,
        c2_max_ratio: c2_max,
        end2_violations,
        lipschitz_constant,
        idempotent,
    })
}

fn violation(a: &TreePoint, b: &TreePoint, lhs: &Rational, rhs: &Rational) -> ClaimViolation {
    ClaimViolation {
        a: a.clone(),
        b: b.clone(),
        lhs: lhs.clone(),
        rhs: rhs.clone(),
    }
}

/// `M ∪ Br(T)` as a rooted edge-weighted tree. Leaves come first, in the
/// order of the points of `M`, followed by the branching points by height;
/// the root is the topmost branching point.
#[derive(Clone, Debug)]
pub struct DendrogramTree {
    nodes: Vec<TreePoint>,
    labels: Vec<String>,
    parent: Vec<Option<usize>>,
    edge_len: Vec<Rational>,
}

/// Builds the dendrogram and certifies that its path metric equals `ρ` on
/// every pair of nodes.
pub fn dendrogram(space: &FiniteMetricSpace) -> Result<DendrogramTree> {
    let branching = branching_points(space)?;
    let nodes: Vec<TreePoint> = (0..space.len())
        .map(TreePoint::leaf)
        .chain(branching)
        .collect();
    let mut parent = vec![None; nodes.len()];
    let mut edge_len = vec![Rational::zero(); nodes.len()];
    for (u, node) in nodes.iter().enumerate() {
        let up = nodes
            .iter()
            .enumerate()
            .filter(|(_, c)| {
                c.height > node.height
                    && space.d(node.anchor, c.anchor) <= &(&c.height * rational::int(2))
            })
            .min_by(|(_, a), (_, b)| a.height.cmp(&b.height));
        if let Some((p, c)) = up {
            parent[u] = Some(p);
            edge_len[u] = &c.height - &node.height;
        }
    }
    let labels = nodes.iter().map(|p| p.label(space)).collect();
    let tree = DendrogramTree {
        nodes,
        labels,
        parent,
        edge_len,
    };
    let roots = tree.parent.iter().filter(|p| p.is_none()).count();
    if roots != 1 {
        return Err(Error::Certification(format!("dendrogram has {roots} roots")));
    }
    for u in 0..tree.len() {
        for v in u + 1..tree.len() {
            if tree.path_distance(u, v) != tree_distance(space, &tree.nodes[u], &tree.nodes[v]) {
                return Err(Error::Certification(format!(
                    "path length between {} and {} differs from the tree metric",
                    tree.labels[u], tree.labels[v]
                )));
            }
        }
    }
    Ok(tree)
}

impl DendrogramTree {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[TreePoint] {
        &self.nodes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn parent(&self, u: usize) -> Option<usize> {
        self.parent[u]
    }

    pub fn edge_length(&self, u: usize) -> &Rational {
        &self.edge_len[u]
    }

    pub fn root(&self) -> usize {
        self.parent.iter().position(Option::is_none).expect("certified tree")
    }

    /// `(child, parent, length)` for every edge.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, &Rational)> + '_ {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(u, p)| p.map(|p| (u, p, &self.edge_len[u])))
    }

    pub fn children(&self, u: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(u)).collect()
    }

    /// Sum of edge lengths along the tree path.
    pub fn path_distance(&self, mut u: usize, mut v: usize) -> Rational {
        let mut total = Rational::zero();
        while u != v {
            let (hu, hv) = (&self.nodes[u].height, &self.nodes[v].height);
            if hu <= hv {
                total += &self.edge_len[u];
                u = self.parent[u].expect("non-root below another node");
            } else {
                total += &self.edge_len[v];
                v = self.parent[v].expect("non-root below another node");
            }
        }
        total
    }

    /// Branching nodes with fewer than two children. Together with the
    /// upward direction, every branching point should have degree >= 3.
    pub fn low_degree_branching(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&u| !self.nodes[u].is_leaf() && self.children(u).len() < 2)
            .collect()
    }

    /// The nodes with the tree metric `ρ`; the base leaf stays the base.
    pub fn metric_space(&self, space: &FiniteMetricSpace) -> Result<FiniteMetricSpace> {
        FiniteMetricSpace::from_fn(self.labels.clone(), |u, v| {
            tree_distance(space, &self.nodes[u], &self.nodes[v])
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .zip(&self.labels)
            .map(|(p, l)| {
                serde_json::json!({
                    "label": l,
                    "anchor": p.anchor,
                    "height": rational::format(&p.height),
                })
            })
            .collect();
        serde_json::json!({
            "nodes": nodes,
            "parent": self.parent,
            "edge_lengths": self.edge_len.iter().map(rational::format).collect::<Vec<_>>(),
            "root": self.root(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{random_dyadic_ultrametric, random_ultrametric};
    use crate::rational::{int, ratio};

    fn three_point() -> FiniteMetricSpace {
        FiniteMetricSpace::from_fn(vec!["0".into(), "x".into(), "y".into()], |i, j| {
            if i > 0 && j > 0 {
                ratio(1, 2)
            } else {
                int(1)
            }
        })
        .unwrap()
    }

    /// Points 0, a, b, c with d(a,b) = 1/4, d(a,c) = d(b,c) = 1/2, d(0,·) = 1.
    pub(crate) fn four_point() -> FiniteMetricSpace {
        let labels = vec!["0".into(), "a".into(), "b".into(), "c".into()];
        FiniteMetricSpace::from_fn(labels, |i, j| match (i.min(j), i.max(j)) {
            (0, _) => int(1),
            (1, 2) => ratio(1, 4),
            _ => ratio(1, 2),
        })
        .unwrap()
    }

    fn tp(anchor: usize, h: Rational) -> TreePoint {
        TreePoint::new(anchor, h)
    }

    #[test]
    fn canonical_representatives() {
        let space = three_point();
        assert_eq!(canonicalize(&space, &tp(2, ratio(1, 4))).unwrap(), tp(1, ratio(1, 4)));
        assert_eq!(canonicalize(&space, &tp(2, int(0))).unwrap(), tp(2, int(0)));
        let c = canonicalize(&space, &tp(2, ratio(1, 2))).unwrap();
        assert_eq!(c, tp(0, ratio(1, 2)));
        assert_eq!(canonicalize(&space, &c).unwrap(), c);
        assert!(canonicalize(&space, &tp(1, ratio(-1, 2))).is_err());
    }

    #[test]
    fn distances() {
        let space = three_point();
        assert_eq!(tree_distance(&space, &tp(1, int(0)), &tp(2, int(0))), ratio(1, 2));
        assert_eq!(tree_distance(&space, &tp(1, ratio(1, 4)), &tp(1, int(0))), ratio(1, 4));
        assert_eq!(tree_distance(&space, &tp(1, ratio(1, 4)), &tp(0, int(0))), ratio(3, 4));
    }

    #[test]
    fn distance_is_representative_independent() {
        let space = random_ultrametric(6, 4).unwrap();
        let heights: Vec<Rational> = space
            .pairs()
            .map(|(i, j)| space.d(i, j) / int(2))
            .chain([int(0), ratio(1, 3), int(50)])
            .collect();
        for h in &heights {
            for g in &heights {
                for m in 0..6 {
                    for n in 0..6 {
                        let p = tp(m, h.clone());
                        let q = tp(n, g.clone());
                        let expected = tree_distance(&space, &p, &q);
                        let reps_p: Vec<usize> = (0..6).filter(|&k| space.d(m, k) <= &(h * int(2))).collect();
                        let reps_q: Vec<usize> = (0..6).filter(|&k| space.d(n, k) <= &(g * int(2))).collect();
                        for &a in &reps_p {
                            for &b in &reps_q {
                                assert_eq!(tree_distance(&space, &tp(a, h.clone()), &tp(b, g.clone())), expected);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn segment_examples() {
        let space = three_point();
        let (x, y) = (tp(1, int(0)), tp(2, int(0)));
        assert_eq!(segment_point(&space, &x, &y, &int(0)).unwrap(), x);
        assert_eq!(segment_point(&space, &x, &y, &ratio(1, 2)).unwrap(), y);
        assert_eq!(segment_point(&space, &x, &y, &ratio(1, 4)).unwrap(), tp(1, ratio(1, 4)));
        for t in [int(0), ratio(1, 8), ratio(1, 4), ratio(3, 8), ratio(1, 2)] {
            assert_eq!(
                segment_point(&space, &y, &x, &t).unwrap(),
                segment_point(&space, &x, &y, &(ratio(1, 2) - &t)).unwrap()
            );
        }
        assert!(segment_point(&space, &x, &y, &int(1)).is_err());
        assert!(segment_point(&space, &x, &y, &ratio(-1, 8)).is_err());
        // Case j <= i with i >= d/2: straight down from ⟨0, 1⟩ to x.
        let top = tp(0, int(1));
        assert_eq!(segment_point(&space, &top, &x, &ratio(1, 2)).unwrap(), tp(0, ratio(1, 2)));
        assert_eq!(segment_point(&space, &top, &x, &ratio(3, 4)).unwrap(), tp(1, ratio(1, 4)));
    }

    #[test]
    fn segment_axioms_on_nodes_and_midpoints() {
        let space = random_ultrametric(5, 21).unwrap();
        let mut points: Vec<TreePoint> = (0..5).map(TreePoint::leaf).collect();
        points.extend(branching_points(&space).unwrap());
        points.push(tp(3, ratio(1, 7)));
        let report = verify_segment_axioms(&space, &points).unwrap();
        assert!(report.is_clean(), "{report:?}");
        assert!(report.segments > 0);
    }

    #[test]
    fn apex_lies_between_leaves() {
        let space = three_point();
        let apex = tp(1, ratio(1, 4));
        let through = tree_distance(&space, &tp(1, int(0)), &apex) + tree_distance(&space, &apex, &tp(2, int(0)));
        assert_eq!(through, ratio(1, 2));
    }

    #[test]
    fn four_point_condition() {
        let space = random_ultrametric(6, 2).unwrap();
        let mut points: Vec<TreePoint> = (0..6).map(TreePoint::leaf).collect();
        let leaves_only = four_point_check(&space, &points);
        assert!(leaves_only.violations.is_empty());
        points.extend(branching_points(&space).unwrap());
        let report = four_point_check(&space, &points);
        assert!(report.violations.is_empty());
        assert!(report.quadruples > 0);
        // A plain non-tree metric fails: the 4-cycle with unit edges.
        let cycle = FiniteMetricSpace::from_fn((0..4).map(|i| i.to_string()).collect(), |i, j| {
            if (i + j) % 2 == 1 { int(1) } else { int(2) }
        })
        .unwrap();
        // ρ on leaves equals d, so the check sees the raw metric.
        let leaves: Vec<TreePoint> = (0..4).map(TreePoint::leaf).collect();
        assert!(!four_point_check(&cycle, &leaves).violations.is_empty());
        assert_eq!(four_point_check(&space, &points[..3]).quadruples, 0);
    }

    #[test]
    fn branching_examples() {
        assert_eq!(
            branching_points(&three_point()).unwrap(),
            vec![tp(1, ratio(1, 4)), tp(0, ratio(1, 2))]
        );
        let two = FiniteMetricSpace::from_matrix(vec![vec![int(0), int(2)], vec![int(2), int(0)]]).unwrap();
        assert_eq!(branching_points(&two).unwrap(), vec![tp(0, int(1))]);
        assert_eq!(
            branching_points(&four_point()).unwrap(),
            vec![tp(1, ratio(1, 8)), tp(1, ratio(1, 4)), tp(0, ratio(1, 2))]
        );
    }

    #[test]
    fn witnesses() {
        let space = three_point();
        for v in branching_points(&space).unwrap() {
            let report = verify_branching_witnesses(&space, &v).unwrap();
            assert!(report.passed, "{report:?}");
        }
        let not_branching = verify_branching_witnesses(&space, &tp(1, ratio(1, 8))).unwrap();
        assert!(!not_branching.passed && not_branching.witnesses.is_none());
    }

    #[test]
    fn retraction_examples() {
        let space = three_point();
        assert_eq!(retraction_to_m(&space, &tp(1, int(0))).unwrap(), 1);
        assert_eq!(retraction_to_m(&space, &tp(1, ratio(1, 4))).unwrap(), 1);
        assert_eq!(retraction_to_m(&space, &tp(0, ratio(1, 2))).unwrap(), 0);
        assert!(retraction_to_m(&space, &tp(1, ratio(1, 8))).is_err());
    }

    #[test]
    fn three_point_claims_are_tight() {
        let space = three_point();
        let report = verify_retraction_claims(&space).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.lipschitz_constant, int(4));
        assert_eq!(report.c1_max_ratio, Some(int(2)));
        assert_eq!(report.c2_max_ratio, Some(int(4)));
    }

    #[test]
    fn claims_need_dyadic_input() {
        let space = random_ultrametric(5, 1).unwrap();
        if !metric::validate(&space).is_dyadic {
            assert!(matches!(verify_retraction_claims(&space), Err(Error::NotDyadic)));
        }
        for seed in 0..20 {
            let dyadic = random_dyadic_ultrametric(8, seed).unwrap();
            let report = verify_retraction_claims(&dyadic).unwrap();
            assert!(report.passed(), "seed {seed}");
            assert!(report.lipschitz_constant >= int(1));
        }
    }

    #[test]
    fn dendrogram_examples() {
        let space = three_point();
        let tree = dendrogram(&space).unwrap();
        assert_eq!(tree.len(), 5);
        // nodes: 0, x, y, ⟨x,1/4⟩, ⟨0,1/2⟩
        assert_eq!(tree.parent(1), Some(3));
        assert_eq!(tree.parent(2), Some(3));
        assert_eq!(tree.parent(3), Some(4));
        assert_eq!(tree.parent(0), Some(4));
        assert_eq!(tree.root(), 4);
        assert_eq!(tree.edge_length(1), &ratio(1, 4));
        assert_eq!(tree.edge_length(3), &ratio(1, 4));
        assert_eq!(tree.edge_length(0), &ratio(1, 2));
        assert_eq!(tree.path_distance(1, 0), int(1));
        assert!(tree.low_degree_branching().is_empty());

        let two = FiniteMetricSpace::from_matrix(vec![vec![int(0), int(2)], vec![int(2), int(0)]]).unwrap();
        let tree = dendrogram(&two).unwrap();
        assert_eq!(tree.len(), 3);
        assert_eq!(tree.edges().count(), 2);
        assert!(tree.edges().all(|(_, _, l)| l == &int(1)));
    }

    #[test]
    fn random_dendrograms_certify() {
        for seed in 0..10 {
            let space = random_ultrametric(9, seed).unwrap();
            let tree = dendrogram(&space).unwrap();
            assert!(tree.low_degree_branching().is_empty());
            assert_eq!(tree.edges().count(), tree.len() - 1);
        }
    }
}
