//! `ultrafree`: exact free-space norms, retraction bases, tree embeddings
//! and ℓ1 checks for finite ultrametric spaces.
//!
//! Exit status: 0 when every check passes, 1 when a mathematical check
//! fails, 2 on usage or tool errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use ultrafree::campaign::{self, CampaignConfig, Stage};
use ultrafree::ell1::{self, three_point, PipelineOptions};
use ultrafree::free_norm::{self, FreeNormOracle, FreeVector, LipFunction};
use ultrafree::io::{self, Format};
use ultrafree::metric::{self, FiniteMetricSpace};
use ultrafree::rational::{self, Rational};
use ultrafree::Error;

const OUT_DIR_VAR: &str = "ULTRAFREE_OUT_DIR";

#[derive(Parser)]
#[command(name = "ultrafree", version, about = "Exact Lipschitz-free computations on finite ultrametric spaces")]
struct Cli {
    /// Input format; defaults to the file extension (.csv or JSON).
    #[arg(long, global = true, value_parser = parse_format)]
    format: Option<Format>,
    /// Seed for orderings, random vectors and campaigns.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Metric, ultrametric and 2^n-valued checks.
    Validate(InputArgs),
    /// Retraction chain, projections and basis constant.
    Basis {
        #[command(flatten)]
        input: InputArgs,
        /// Comma-separated labels or indices, starting at the base point.
        #[arg(long, conflicts_with = "shuffle")]
        ordering: Option<String>,
        /// Use a seeded random ordering.
        #[arg(long)]
        shuffle: bool,
    },
    /// Quotient tree, branching points and the retraction onto the space.
    Embed(InputArgs),
    /// Free norm of a vector with its certificate, or the Lipschitz norm of a function.
    Norm {
        #[command(flatten)]
        input: InputArgs,
        /// JSON object label -> rational, or @file.
        #[arg(long, required_unless_present = "function")]
        vector: Option<String>,
        /// JSON object label -> rational (zero at the base), or @file.
        #[arg(long)]
        function: Option<String>,
    },
    /// Rounding, tree, retraction, basis and ℓ1 constants in one report.
    L1check {
        #[command(flatten)]
        input: InputArgs,
        /// Random vectors for the tree-norm comparison.
        #[arg(long, default_value_t = 20)]
        vectors: usize,
    },
    /// Norm identities and grid search for the three-point space.
    Threepoint {
        /// d(x,y) with d(x,0) = d(y,0) = 1.
        #[arg(long, value_parser = parse_rational)]
        s: Rational,
        /// Grid step 1/k; accepts k or 1/k.
        #[arg(long, default_value = "64", value_parser = parse_resolution)]
        resolution: u32,
        /// Comma-separated β values; defaults to 1/4,1/2,1,2,4,s,1/s.
        #[arg(long)]
        beta: Option<String>,
    },
    /// Randomized campaign over sizes and seeds.
    Campaign {
        /// Sizes such as "3-10" or "3,5,8".
        #[arg(long, default_value = "3-10")]
        sizes: String,
        /// Instances per size.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        /// Comma-separated subset of validate,basis,embed,l1check,threepoint.
        #[arg(long, default_value = "validate,basis,embed,l1check,threepoint")]
        stages: String,
        #[arg(long, default_value_t = 1)]
        orderings: usize,
        #[arg(long, default_value_t = 10)]
        vectors: usize,
        #[arg(long, default_value = "16", value_parser = parse_resolution)]
        resolution: u32,
        /// Extra instances read from files.
        inputs: Vec<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Space as JSON {"labels", "dist"} or a CSV matrix.
    input: PathBuf,
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_rational(s: &str) -> Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

fn parse_resolution(s: &str) -> Result<u32, String> {
    let r = parse_rational(s)?;
    let k = if r < Rational::from_integer(1.into()) && r.numer() == &1.into() {
        r.denom().clone()
    } else if r.is_integer() {
        r.numer().clone()
    } else {
        return Err(format!("resolution must be k or 1/k, got {s}"));
    };
    u32::try_from(k)
        .ok()
        .filter(|&k| k > 0)
        .ok_or_else(|| format!("resolution out of range: {s}"))
}

/// A finished command: its report and whether every check passed.
struct Outcome {
    kind: &'static str,
    data: Value,
    passed: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.sequential {
        ultrafree::exec::set_parallel(false);
    }
    match run(&cli) {
        Ok(outcome) => match emit(&cli, &outcome) {
            Ok(()) if outcome.passed => ExitCode::SUCCESS,
            Ok(()) => ExitCode::from(1),
            Err(e) => fail(&e),
        },
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(2)
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), Error> {
    let value = io::envelope(outcome.kind, &outcome.data)?;
    let target = cli.out.clone().or_else(|| {
        std::env::var_os(OUT_DIR_VAR).map(|dir| Path::new(&dir).join(format!("{}.json", outcome.kind)))
    });
    match target {
        Some(path) => {
            io::emit_report(&value, &path)?;
            eprintln!(
                "{}: {} ({})",
                outcome.kind,
                if outcome.passed { "pass" } else { "FAIL" },
                path.display()
            );
            Ok(())
        }
        None => {
            print!("{}", io::to_pretty(&value));
            Ok(())
        }
    }
}

fn load(cli: &Cli, input: &InputArgs) -> Result<FiniteMetricSpace, Error> {
    io::ingest(&input.input, cli.format)
}

fn to_value(data: impl serde::Serialize) -> Result<Value, Error> {
    serde_json::to_value(data).map_err(|e| Error::Parse(e.to_string()))
}

fn run(cli: &Cli) -> Result<Outcome, Error> {
    match &cli.command {
        Command::Validate(input) => {
            let text = io::read_file(&input.input)?;
            let format = cli.format.unwrap_or_else(|| Format::from_path(&input.input));
            let space = io::parse_space(&text, format)?;
            let report = metric::validate(&space);
            let strict = if report.is_ultrametric {
                Some(metric::strict_max_check(&space)?)
            } else {
                None
            };
            let passed = report.is_ultrametric && strict.as_ref().is_some_and(Vec::is_empty);
            let mut data = to_value(&report)?;
            data["points"] = space.len().into();
            data["labels"] = to_value(space.labels())?;
            data["strict_max_violations"] = to_value(&strict)?;
            Ok(Outcome {
                kind: "validate",
                data,
                passed,
            })
        }
        Command::Basis {
            input,
            ordering,
            shuffle,
        } => {
            let space = load(cli, input)?;
            let order = match (ordering, shuffle) {
                (Some(spec), _) => parse_ordering(&space, spec)?,
                (None, true) => metric::random_ordering(space.len(), cli.seed),
                (None, false) => (0..space.len()).collect(),
            };
            let oracle = FreeNormOracle::new(&space);
            let result = campaign::basis_report(&space, &order, &oracle)?;
            let exploratory = !metric::validate(&space).is_ultrametric;
            let mut data = to_value(&result)?;
            data["exploratory"] = exploratory.into();
            data["ordering_labels"] = to_value(order.iter().map(|&i| space.label(i)).collect::<Vec<_>>())?;
            Ok(Outcome {
                kind: "basis",
                passed: result.passed(),
                data,
            })
        }
        Command::Embed(input) => {
            let space = load(cli, input)?;
            let report = campaign::embed_report(&space)?;
            Ok(Outcome {
                kind: "embed",
                passed: report.passed(),
                data: to_value(&report)?,
            })
        }
        Command::Norm {
            input,
            vector,
            function,
        } => {
            let space = load(cli, input)?;
            let mut data = serde_json::Map::new();
            let mut passed = true;
            if let Some(spec) = vector {
                let v = FreeVector::from_json(&space, &json_arg(spec)?)?;
                let cert = free_norm::free_norm(&space, &v)?;
                passed &= free_norm::check_certificate(&space, &v, &cert).is_ok();
                data.insert("norm".into(), cert.to_json(&space));
            }
            if let Some(spec) = function {
                let f = LipFunction::from_json(&space, &json_arg(spec)?)?;
                data.insert("lip_norm".into(), rational::to_json(&free_norm::lip_norm(&space, &f)?));
            }
            Ok(Outcome {
                kind: "norm",
                data: Value::Object(data),
                passed,
            })
        }
        Command::L1check { input, vectors } => {
            let space = load(cli, input)?;
            let report = ell1::pipeline(
                &space,
                &PipelineOptions {
                    oracle_vectors: *vectors,
                    seed: cli.seed,
                    ..PipelineOptions::default()
                },
            )?;
            Ok(Outcome {
                kind: "l1check",
                passed: report.passed(),
                data: to_value(&report)?,
            })
        }
        Command::Threepoint { s, resolution, beta } => {
            let betas = beta
                .as_deref()
                .map(|list| list.split(',').map(rational::parse).collect::<Result<Vec<_>, _>>())
                .transpose()?;
            let report = three_point::three_point_report(s, betas.as_deref(), *resolution)?;
            Ok(Outcome {
                kind: "threepoint",
                passed: report.passed(),
                data: to_value(&report)?,
            })
        }
        Command::Campaign {
            sizes,
            seeds,
            stages,
            orderings,
            vectors,
            resolution,
            inputs,
        } => {
            let config = CampaignConfig {
                sizes: parse_sizes(sizes)?,
                seeds: *seeds,
                base_seed: cli.seed,
                stages: stages
                    .split(',')
                    .map(|s| s.trim().parse::<Stage>())
                    .collect::<Result<Vec<_>, _>>()?,
                orderings: *orderings,
                oracle_vectors: *vectors,
                resolution: *resolution,
                inputs: inputs.clone(),
                output: None,
            };
            let report = campaign::run_campaign(&config)?;
            Ok(Outcome {
                kind: "campaign",
                passed: report.passed(),
                data: report.to_json(),
            })
        }
    }
}

fn json_arg(spec: &str) -> Result<Value, Error> {
    let text = match spec.strip_prefix('@') {
        Some(path) => io::read_file(Path::new(path))?,
        None => spec.to_string(),
    };
    serde_json::from_str(&text).map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
}

/// Labels or indices, comma separated.
fn parse_ordering(space: &FiniteMetricSpace, spec: &str) -> Result<Vec<usize>, Error> {
    spec.split(',')
        .map(str::trim)
        .map(|item| {
            space
                .index_of(item)
                .or_else(|| item.parse::<usize>().ok().filter(|&i| i < space.len()))
                .ok_or_else(|| Error::Parse(format!("unknown point {item:?} in ordering")))
        })
        .collect()
}

fn parse_sizes(spec: &str) -> Result<Vec<usize>, Error> {
    let bad = || Error::Parse(format!("bad size list {spec:?}"));
    let mut sizes = Vec::new();
    for part in spec.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((lo, hi)) => {
                let lo: usize = lo.trim().parse().map_err(|_| bad())?;
                let hi: usize = hi.trim().parse().map_err(|_| bad())?;
                if lo > hi {
                    return Err(bad());
                }
                sizes.extend(lo..=hi);
            }
            None => sizes.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(sizes)
}
