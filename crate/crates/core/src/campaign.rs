//! Per-instance stage runners and randomized campaigns over them.

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_traits::One;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::chain::{self, ChainReport, ProjectionReport};
use crate::ell1::{self, three_point, PipelineOptions};
use crate::error::{Error, Result};
use crate::exec;
use crate::free_norm::FreeNormOracle;
use crate::io;
use crate::metric::{self, FiniteMetricSpace};
use crate::rational::{self, Rational};
use crate::rtree::{self, FourPointReport, RetractionReport, SegmentReport, TreePoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Validate,
    Basis,
    Embed,
    L1check,
    Threepoint,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Validate, Stage::Basis, Stage::Embed, Stage::L1check, Stage::Threepoint];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Validate => "validate",
            Stage::Basis => "basis",
            Stage::Embed => "embed",
            Stage::L1check => "l1check",
            Stage::Threepoint => "threepoint",
        }
    }
}

impl std::str::FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown stage {s:?}")))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub sizes: Vec<usize>,
    /// Random instances per size.
    pub seeds: u64,
    pub base_seed: u64,
    pub stages: Vec<Stage>,
    /// Orderings per instance in the basis stage; the first is input order.
    pub orderings: usize,
    /// Random vectors per instance for the tree-norm comparison.
    pub oracle_vectors: usize,
    /// Grid resolution of the three-point search.
    pub resolution: u32,
    /// Spaces read from files, run after the random instances.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            sizes: (3..=10).collect(),
            seeds: 10,
            base_seed: 0,
            stages: Stage::ALL.to_vec(),
            orderings: 1,
            oracle_vectors: 10,
            resolution: 16,
            inputs: Vec::new(),
            output: None,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(&n) = self.sizes.iter().find(|&&n| n < 2) {
            return Err(Error::Domain(format!("instance size {n} is below 2")));
        }
        if self.seeds == 0 && self.inputs.is_empty() {
            return Err(Error::Domain("seeds must be at least 1".into()));
        }
        if self.stages.is_empty() {
            return Err(Error::Domain("no stages selected".into()));
        }
        if self.orderings == 0 || self.resolution == 0 {
            return Err(Error::Domain("orderings and resolution must be positive".into()));
        }
        Ok(())
    }
}

/// Seed of the `index`-th random instance of size `size`.
pub fn instance_seed(base: u64, size: usize, index: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((size as u64) << 32) ^ index
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    /// Headline constants, as exact rational strings.
    pub metrics: BTreeMap<String, String>,
}

impl StageOutcome {
    fn error(stage: Stage, err: &Error) -> Self {
        Self {
            stage,
            status: Status::Error,
            message: Some(err.to_string()),
            metrics: BTreeMap::new(),
        }
    }

    fn checked(stage: Stage, passed: bool, metrics: Vec<(&str, &Rational)>) -> Self {
        Self {
            stage,
            status: if passed { Status::Pass } else { Status::Fail },
            message: None,
            metrics: metrics
                .into_iter()
                .map(|(k, v)| (k.to_string(), rational::format(v)))
                .collect(),
        }
    }

    pub fn metric(&self, key: &str) -> Option<Rational> {
        self.metrics.get(key).and_then(|v| rational::parse(v).ok())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderingResult {
    pub ordering: Vec<usize>,
    pub index_table: Vec<Vec<usize>>,
    pub basis_vectors: Vec<Value>,
    #[serde(with = "crate::rational::vec")]
    pub basis_norms: Vec<Rational>,
    #[serde(with = "crate::rational")]
    pub basis_constant: Rational,
    pub violations: ChainReport,
    pub projections: ProjectionReport,
}

impl OrderingResult {
    pub fn passed(&self) -> bool {
        self.violations.is_clean() && self.projections.is_clean() && self.basis_constant.is_one()
    }
}

/// Retraction chain, projection algebra and basis constant for one
/// ordering. `oracle` must evaluate norms in `space`.
pub fn basis_report(space: &FiniteMetricSpace, ordering: &[usize], oracle: &FreeNormOracle) -> Result<OrderingResult> {
    let chain = chain::build_chain(space, ordering)?;
    let violations = chain::verify_chain(&chain);
    let projections = chain::verify_projection_algebra(&chain, oracle)?;
    let family = chain::basis_vectors(&chain);
    let basis_constant = chain::basis_constant(space, &family, oracle)?;
    Ok(OrderingResult {
        ordering: ordering.to_vec(),
        index_table: chain.index_table().to_vec(),
        basis_vectors: family.vectors.iter().map(|v| v.to_json(space)).collect(),
        basis_norms: family.norms.clone(),
        basis_constant,
        violations,
        projections,
    })
}

/// Orderings used for an instance: input order, then seeded shuffles.
pub fn orderings(n: usize, count: usize, seed: u64) -> Vec<Vec<usize>> {
    std::iter::once((0..n).collect())
        .chain((1..count as u64).map(|j| metric::random_ordering(n, seed.wrapping_add(j))))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EmbedReport {
    /// True when the input was not 2^n-valued and was rounded first.
    pub rounded: bool,
    pub branching_points: Vec<TreePoint>,
    pub branching_labels: Vec<String>,
    pub dendrogram: Value,
    pub retraction_table: Vec<rtree::RetractionEntry>,
    #[serde(with = "crate::rational")]
    pub attained_lipschitz_constant: Rational,
    pub claim_checks: RetractionReport,
    pub leaf_isometry_failures: Vec<(usize, usize)>,
    pub four_point: FourPointReport,
    pub segments: SegmentReport,
    pub witness_failures: Vec<TreePoint>,
    /// Branching nodes with fewer than two children in the dendrogram.
    pub low_degree_nodes: Vec<String>,
}

impl EmbedReport {
    pub fn passed(&self) -> bool {
        self.claim_checks.passed()
            && self.leaf_isometry_failures.is_empty()
            && self.four_point.violations.is_empty()
            && self.segments.is_clean()
            && self.witness_failures.is_empty()
            && self.low_degree_nodes.is_empty()
    }
}

/// Tree embedding of an ultrametric space, after dyadic rounding if needed.
pub fn embed_report(space: &FiniteMetricSpace) -> Result<EmbedReport> {
    let validation = metric::validate(space);
    if let Some((x, y, z)) = validation.failing_triple {
        return Err(Error::NotUltrametric(x, y, z));
    }
    let rounded = !validation.is_dyadic;
    let dyadic = if rounded { metric::round_to_dyadic(space)? } else { space.clone() };
    let branching = rtree::branching_points(&dyadic)?;
    let tree = rtree::dendrogram(&dyadic)?;
    let claims = rtree::verify_retraction_claims(&dyadic)?;
    let leaf_isometry_failures = dyadic
        .pairs()
        .filter(|&(m, n)| &rtree::tree_distance(&dyadic, &TreePoint::leaf(m), &TreePoint::leaf(n)) != dyadic.d(m, n))
        .collect();
    let points: Vec<TreePoint> = (0..dyadic.len()).map(TreePoint::leaf).chain(branching.iter().cloned()).collect();
    let four_point = rtree::four_point_check(&dyadic, &points);
    let segments = rtree::verify_segment_axioms(&dyadic, &points)?;
    let mut witness_failures = Vec::new();
    for v in &branching {
        if !rtree::verify_branching_witnesses(&dyadic, v)?.passed {
            witness_failures.push(v.clone());
        }
    }
    let low_degree_nodes = tree
        .low_degree_branching()
        .into_iter()
        .map(|u| tree.labels()[u].clone())
        .collect();
    Ok(EmbedReport {
        rounded,
        branching_labels: branching.iter().map(|b| b.label(&dyadic)).collect(),
        branching_points: branching,
        dendrogram: tree.to_json(),
        retraction_table: claims.retraction_table.clone(),
        attained_lipschitz_constant: claims.lipschitz_constant.clone(),
        claim_checks: claims,
        leaf_isometry_failures,
        four_point,
        segments,
        witness_failures,
        low_degree_nodes,
    })
}

/// The three-point subspace on indices `0, 1, 2`, re-pointed at the apex
/// of its isosceles triangle and scaled so the long sides have length 1.
/// Returns the space and its `s`.
pub fn normalized_triangle(space: &FiniteMetricSpace) -> Result<(FiniteMetricSpace, Rational)> {
    if space.len() < 3 {
        return Err(Error::Domain("need at least three points".into()));
    }
    let sub = space.subspace(&[0, 1, 2])?;
    metric::require_ultrametric(&sub)?;
    let long = sub.diameter();
    // The apex sees both of its neighbours at the long distance.
    let apex = (0..3)
        .find(|&p| (0..3).filter(|&q| q != p).all(|q| sub.d(p, q) == &long))
        .expect("an ultrametric triangle is isosceles with a short base");
    let normalized = sub.with_base(apex)?.scaled(&long.recip())?;
    let s = normalized.d(1, 2).clone();
    Ok((normalized, s))
}

#[derive(Clone, Debug)]
pub struct StageOptions {
    pub orderings: usize,
    pub oracle_vectors: usize,
    pub resolution: u32,
    pub seed: u64,
}

impl From<&CampaignConfig> for StageOptions {
    fn from(c: &CampaignConfig) -> Self {
        Self {
            orderings: c.orderings,
            oracle_vectors: c.oracle_vectors,
            resolution: c.resolution,
            seed: c.base_seed,
        }
    }
}

/// Runs `stages` on one space in dependency order. Errors inside a stage
/// are recorded in its outcome.
pub fn run_stages(space: &FiniteMetricSpace, stages: &[Stage], options: &StageOptions) -> Vec<StageOutcome> {
    let mut stages = stages.to_vec();
    stages.sort();
    stages.dedup();
    stages
        .into_iter()
        .map(|stage| run_stage(space, stage, options).unwrap_or_else(|e| StageOutcome::error(stage, &e)))
        .collect()
}

fn run_stage(space: &FiniteMetricSpace, stage: Stage, options: &StageOptions) -> Result<StageOutcome> {
    Ok(match stage {
        Stage::Validate => {
            let report = metric::validate(space);
            StageOutcome::checked(stage, report.is_ultrametric, vec![])
        }
        Stage::Basis => {
            metric::require_ultrametric(space)?;
            let oracle = FreeNormOracle::new(space);
            let mut passed = true;
            let mut worst = Rational::one();
            for ordering in orderings(space.len(), options.orderings, options.seed) {
                let result = basis_report(space, &ordering, &oracle)?;
                passed &= result.passed();
                worst = worst.max(result.basis_constant);
            }
            StageOutcome::checked(stage, passed, vec![("basis_constant", &worst)])
        }
        Stage::Embed => {
            let report = embed_report(space)?;
            StageOutcome::checked(
                stage,
                report.passed(),
                vec![("retraction_constant", &report.attained_lipschitz_constant)],
            )
        }
        Stage::L1check => {
            let report = ell1::pipeline(
                space,
                &PipelineOptions {
                    oracle_vectors: options.oracle_vectors,
                    seed: options.seed,
                    ..PipelineOptions::default()
                },
            )?;
            StageOutcome::checked(
                stage,
                report.passed(),
                vec![
                    ("distortion", &report.distortion),
                    ("retraction_constant", &report.retraction_constant),
                    ("projection_norm", &report.projection_norm),
                    ("basis_constant", &report.basis_constant),
                    ("l1_lower", &report.l1_lower),
                    ("l1_upper", &report.l1_upper),
                ],
            )
        }
        Stage::Threepoint => {
            let (triangle, s) = normalized_triangle(space)?;
            let canonical = three_point::space(&s)?;
            let same = triangle.pairs().all(|(i, j)| triangle.d(i, j) == canonical.d(i, j));
            let report = three_point::three_point_report(&s, None, options.resolution)?;
            StageOutcome::checked(
                stage,
                same && report.passed(),
                vec![("s", &s), ("min_violation", &report.search.min_violation)],
            )
        }
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceResult {
    pub id: usize,
    pub source: String,
    pub points: usize,
    pub stages: Vec<StageOutcome>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub instances: usize,
    pub stage_runs: usize,
    pub passed: usize,
    pub failed: usize,
    pub errors: usize,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Extremes {
    #[serde(with = "crate::rational::opt")]
    pub max_retraction_constant: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub min_l1_lower: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub max_basis_constant: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub max_distortion: Option<Rational>,
    #[serde(with = "crate::rational::opt")]
    pub min_threepoint_violation: Option<Rational>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub config: CampaignConfig,
    pub totals: Totals,
    pub extremes: Extremes,
    pub instances: Vec<InstanceResult>,
}

impl Report {
    pub fn from_instances(config: CampaignConfig, instances: Vec<InstanceResult>) -> Self {
        let mut totals = Totals {
            instances: instances.len(),
            ..Totals::default()
        };
        let mut extremes = Extremes::default();
        for outcome in instances.iter().flat_map(|i| &i.stages) {
            totals.stage_runs += 1;
            match outcome.status {
                Status::Pass => totals.passed += 1,
                Status::Fail => totals.failed += 1,
                Status::Error => totals.errors += 1,
            }
            let track = |slot: &mut Option<Rational>, key: &str, larger: bool| {
                if let Some(v) = outcome.metric(key) {
                    let better = slot.as_ref().is_none_or(|cur| if larger { &v > cur } else { &v < cur });
                    if better {
                        *slot = Some(v);
                    }
                }
            };
            track(&mut extremes.max_retraction_constant, "retraction_constant", true);
            track(&mut extremes.min_l1_lower, "l1_lower", false);
            track(&mut extremes.max_basis_constant, "basis_constant", true);
            track(&mut extremes.max_distortion, "distortion", true);
            track(&mut extremes.min_threepoint_violation, "min_violation", false);
        }
        Report {
            schema_version: io::SCHEMA_VERSION,
            config,
            totals,
            extremes,
            instances,
        }
    }

    pub fn passed(&self) -> bool {
        self.totals.failed == 0 && self.totals.errors == 0
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("report serializes")
    }
}

enum Source {
    Random { size: usize, seed: u64 },
    File(PathBuf),
}

/// Runs every instance and stage. Single-instance failures are recorded in
/// the report; only configuration and output errors abort.
pub fn run_campaign(config: &CampaignConfig) -> Result<Report> {
    config.validate()?;
    let options = StageOptions::from(config);
    let mut sources: Vec<Source> = config
        .sizes
        .iter()
        .flat_map(|&size| {
            (0..config.seeds).map(move |i| Source::Random {
                size,
                seed: instance_seed(config.base_seed, size, i),
            })
        })
        .collect();
    sources.extend(config.inputs.iter().cloned().map(Source::File));
    let indexed: Vec<(usize, Source)> = sources.into_iter().enumerate().collect();
    let instances = exec::map(indexed, |(id, source)| {
        let (label, space) = match source {
            Source::Random { size, seed } => (format!("random n={size} seed={seed}"), metric::random_ultrametric(size, seed)),
            Source::File(path) => (path.display().to_string(), io::ingest(&path, None)),
        };
        match space {
            Ok(space) => InstanceResult {
                id,
                source: label,
                points: space.len(),
                stages: run_stages(&space, &config.stages, &options),
            },
            Err(e) => InstanceResult {
                id,
                source: label,
                points: 0,
                stages: config.stages.iter().map(|&st| StageOutcome::error(st, &e)).collect(),
            },
        }
    });
    let report = Report::from_instances(config.clone(), instances);
    if let Some(path) = &config.output {
        io::emit_report(&report.to_json(), path)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn small_config() -> CampaignConfig {
        CampaignConfig {
            sizes: vec![3, 4],
            seeds: 2,
            base_seed: 7,
            oracle_vectors: 3,
            resolution: 4,
            ..CampaignConfig::default()
        }
    }

    #[test]
    fn campaign_passes_and_counts() {
        let report = run_campaign(&small_config()).unwrap();
        assert_eq!(report.totals.instances, 4);
        assert_eq!(report.totals.stage_runs, 20);
        assert_eq!(report.totals.passed, 20, "{}", report.to_json());
        assert!(report.passed());
        assert!(report.extremes.max_retraction_constant.as_ref().unwrap() <= &int(4));
        assert_eq!(report.extremes.max_basis_constant, Some(int(1)));
    }

    #[test]
    fn campaign_is_deterministic() {
        let a = serde_json::to_string(&run_campaign(&small_config()).unwrap().to_json()).unwrap();
        let b = serde_json::to_string(&run_campaign(&small_config()).unwrap().to_json()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let line = dir.path().join("line.csv");
        std::fs::write(&line, "0,1,2\n1,0,1\n2,1,0\n").unwrap();
        let missing = dir.path().join("missing.json");
        let config = CampaignConfig {
            sizes: vec![],
            seeds: 0,
            stages: vec![Stage::Validate, Stage::Basis],
            inputs: vec![line, missing],
            output: Some(dir.path().join("out/report.json")),
            ..CampaignConfig::default()
        };
        let report = run_campaign(&config).unwrap();
        assert_eq!(report.instances[0].stages[0].status, Status::Fail);
        assert_eq!(report.instances[0].stages[1].status, Status::Error);
        assert!(report.instances[1].stages.iter().all(|s| s.status == Status::Error));
        assert_eq!(report.totals.failed + report.totals.errors + report.totals.passed, report.totals.stage_runs);
        assert!(!report.passed());
        assert!(dir.path().join("out/report.json").exists());
    }

    #[test]
    fn config_errors() {
        let bad = CampaignConfig {
            sizes: vec![1],
            ..CampaignConfig::default()
        };
        assert!(run_campaign(&bad).is_err());
        let none = CampaignConfig {
            stages: vec![],
            ..CampaignConfig::default()
        };
        assert!(run_campaign(&none).is_err());
        let unwritable = CampaignConfig {
            sizes: vec![2],
            seeds: 1,
            stages: vec![Stage::Validate],
            output: Some("/proc/nope/report.json".into()),
            ..CampaignConfig::default()
        };
        assert!(matches!(run_campaign(&unwritable), Err(Error::Io { .. })));
    }

    #[test]
    fn minimal_run() {
        let config = CampaignConfig {
            sizes: vec![2],
            seeds: 1,
            stages: vec![Stage::Validate, Stage::Basis, Stage::Embed, Stage::L1check],
            ..CampaignConfig::default()
        };
        let report = run_campaign(&config).unwrap();
        assert!(report.passed(), "{}", report.to_json());
        let empty = Report::from_instances(config, vec![]);
        assert_eq!(empty.totals, Totals::default());
    }

    #[test]
    fn triangle_normalization() {
        let space = FiniteMetricSpace::from_fn(vec!["a".into(), "b".into(), "c".into()], |i, j| {
            if i.min(j) == 0 && i.max(j) == 1 {
                int(3)
            } else {
                int(6)
            }
        })
        .unwrap();
        let (tri, s) = normalized_triangle(&space).unwrap();
        assert_eq!(s, ratio(1, 2));
        assert_eq!(tri.label(0), "c");
        assert_eq!(tri.d(0, 1), &int(1));
    }

    #[test]
    fn embed_rounds_non_dyadic_input() {
        let space = metric::random_ultrametric(5, 2).unwrap();
        let report = embed_report(&space).unwrap();
        assert_eq!(report.rounded, !metric::validate(&space).is_dyadic);
        assert!(report.passed());
    }
}
