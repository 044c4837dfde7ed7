//! Command-line front end for biasmeter audits.

use std::collections::BTreeMap;
use std::io::{self as stdio, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use biasmeter::aggregation::{aggregate, Aggregator, ListCollection};
use biasmeter::audit::{
    compare_audit, export_simulation, load_audit_data, run_audit, run_measures, summary_text,
    write_comparison, write_report, AuditManifest, AuditOptions, ScenarioSource,
    SignificanceConfig,
};
use biasmeter::io::{self, GroundTruthFile, SchemaFile};
use biasmeter::measures::Measure;
use biasmeter::ranking::{ListDistanceKind, RankedList};
use biasmeter::simulator::ScenarioConfig;
use biasmeter::{BiasError, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

const EXIT_INPUT: u8 = 2;
const EXIT_CONFIG: u8 = 3;

#[derive(Parser)]
#[command(
    name = "biasmeter",
    version,
    about = "Audit ranked result lists for personalization bias"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Audit recorded result lists.
    Measure {
        manifest: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Simulate a scenario and audit the generated lists.
    Simulate {
        manifest: PathBuf,
        /// Replaces the scenario's seed.
        #[arg(long)]
        seed: u64,
        /// Also write the generated profiles, lists, schema, ground truth and
        /// a manifest that audits them.
        #[arg(long)]
        export: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compare the representative lists of two audits.
    Compare {
        manifest_a: PathBuf,
        manifest_b: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Aggregate each query's lists into one list, written to stdout.
    Aggregate {
        lists: PathBuf,
        #[arg(long, default_value = "borda")]
        method: String,
        /// Depth of the aggregate; defaults to the deepest input list.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Check that a file parses and is internally consistent.
    Validate { file: PathBuf },
}

#[derive(Args, Default)]
struct Overrides {
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    /// kendall, rbo, top_k or attribute.
    #[arg(long)]
    dr_kind: Option<String>,
    /// borda, median or kemeny.
    #[arg(long)]
    aggregator: Option<String>,
    /// mean or max.
    #[arg(long)]
    query_aggregation: Option<String>,
    /// Run permutation tests with this many relabelings.
    #[arg(long)]
    permutations: Option<usize>,
    /// Seed of the significance procedures.
    #[arg(long)]
    significance_seed: Option<u64>,
    /// Bootstrap resamples; enables bootstrap intervals.
    #[arg(long)]
    bootstrap: Option<usize>,
    /// Comma-separated measure names.
    #[arg(long, value_delimiter = ',')]
    measures: Option<Vec<String>>,
}

/// Parses a snake_case enum name the way manifests spell it.
fn parse_name<T: serde::de::DeserializeOwned>(flag: &str, s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.to_string()))
        .map_err(|_| BiasError::Config(format!("--{flag}: unknown value {s:?}")))
}

impl Overrides {
    fn apply(&self, m: &mut AuditManifest) -> Result<()> {
        let c = &mut m.config;
        if let Some(e) = self.epsilon {
            c.epsilon = Some(e);
        }
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(s) = &self.dr_kind {
            c.dr_kind = parse_name::<ListDistanceKind>("dr-kind", s)?;
        }
        if let Some(s) = &self.aggregator {
            c.aggregator = parse_name("aggregator", s)?;
        }
        if let Some(s) = &self.query_aggregation {
            c.query_aggregation = parse_name("query-aggregation", s)?;
        }
        if let Some(names) = &self.measures {
            m.measures = Some(
                names
                    .iter()
                    .map(|n| parse_name::<Measure>("measures", n))
                    .collect::<Result<_>>()?,
            );
        }
        if self.permutations.is_some()
            || self.significance_seed.is_some()
            || self.bootstrap.is_some()
        {
            let sig = m
                .significance
                .get_or_insert_with(SignificanceConfig::default);
            if let Some(n) = self.permutations {
                sig.n_permutations = n;
            }
            if let Some(s) = self.significance_seed {
                sig.seed = s;
            }
            if let Some(n) = self.bootstrap {
                let b = sig
                    .bootstrap
                    .get_or_insert(biasmeter::audit::BootstrapConfig {
                        n_resamples: n,
                        confidence_level: 0.95,
                    });
                b.n_resamples = n;
            }
        }
        if let Some(out) = &self.out {
            m.output_dir = Some(out.clone());
        }
        m.validate()
    }

    /// Directory reports go to: `--out`, else the manifest's `output_dir`,
    /// else the manifest's own directory.
    fn out_dir(m: &AuditManifest) -> PathBuf {
        match &m.output_dir {
            Some(d) => m.resolve(d),
            None if m.base_dir.as_os_str().is_empty() => PathBuf::from("."),
            None => m.base_dir.clone(),
        }
    }
}

/// Loads a manifest; a manifest that does not parse is a configuration error.
fn load_manifest(path: &Path) -> Result<AuditManifest> {
    AuditManifest::load(path).map_err(|e| match e {
        BiasError::Format { .. } => BiasError::Config(e.to_string()),
        other => other,
    })
}

fn measure(path: &Path, overrides: &Overrides) -> Result<()> {
    let mut m = load_manifest(path)?;
    if m.is_simulation() {
        return Err(BiasError::Config(
            "this manifest describes a scenario; run `simulate` instead".into(),
        ));
    }
    overrides.apply(&mut m)?;
    let report = run_audit(&m)?;
    let dir = Overrides::out_dir(&m);
    write_report(&report, &dir)?;
    print!("{}", summary_text(&report));
    println!("report written to {}", dir.display());
    Ok(())
}

fn simulate(path: &Path, seed: u64, export: Option<&Path>, overrides: &Overrides) -> Result<()> {
    let mut m = load_manifest(path)?;
    let Some(mut cfg): Option<ScenarioConfig> = m.scenario_config()? else {
        return Err(BiasError::Config(
            "this manifest has no scenario; run `measure` instead".into(),
        ));
    };
    cfg.seed = seed;
    m.scenario = Some(ScenarioSource::Inline(Box::new(cfg.clone())));
    overrides.apply(&mut m)?;
    let data = load_audit_data(&m)?;
    let options = AuditOptions {
        measures: m.measures.clone().unwrap_or_default(),
        significance: m.significance.clone(),
    };
    let report = run_measures(&data.input, &options, data.mode)?;
    let dir = Overrides::out_dir(&m);
    write_report(&report, &dir)?;
    if let (Some(export), Some(sim)) = (export, &data.simulation) {
        export_simulation(&cfg, sim, data.input.config(), export)?;
        println!("simulated data written to {}", export.display());
    }
    print!("{}", summary_text(&report));
    println!("report written to {}", dir.display());
    Ok(())
}

fn compare(a: &Path, b: &Path, overrides: &Overrides) -> Result<()> {
    let mut ma = load_manifest(a)?;
    let mut mb = load_manifest(b)?;
    overrides.apply(&mut ma)?;
    overrides.apply(&mut mb)?;
    let report = compare_audit(&ma, &mb)?;
    let dir = Overrides::out_dir(&ma);
    write_comparison(&report, &dir)?;
    for (scope, v) in &report.scopes {
        println!(
            "{scope}: distribution {:.4}, list {:.4} over {} shared queries",
            v.distribution.magnitude,
            v.list.magnitude,
            v.shared_queries.len()
        );
    }
    println!("comparison written to {}", dir.display());
    Ok(())
}

fn aggregate_lists(path: &Path, method: &str, k: Option<usize>) -> Result<()> {
    let method: Aggregator = parse_name("method", method)?;
    let loaded = io::load_result_lists(path)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let mut by_query: BTreeMap<String, Vec<RankedList>> = BTreeMap::new();
    for list in loaded.lists.into_values() {
        by_query
            .entry(list.query_id().to_string())
            .or_default()
            .push(list);
    }
    let mut out = Vec::new();
    for (query, lists) in by_query {
        let depth = k.unwrap_or_else(|| lists.iter().map(RankedList::depth).max().unwrap_or(1));
        out.push(
            aggregate(&ListCollection::new("aggregate", lists), method, depth).map_err(
                |e| match e {
                    BiasError::Complexity(msg) => {
                        BiasError::Config(format!("query {query:?}: {msg}"))
                    }
                    other => other,
                },
            )?,
        );
    }
    let stdout = stdio::stdout();
    let mut lock = stdout.lock();
    io::write_result_lists(&mut lock, &out)
        .and_then(|_| lock.flush())
        .map_err(|e| BiasError::Io {
            path: "<stdout>".into(),
            message: e.to_string(),
        })
}

fn validate(path: &Path) -> Result<()> {
    let open = || {
        std::fs::File::open(path)
            .map(BufReader::new)
            .map_err(|e| BiasError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })
    };
    let label = path.display().to_string();
    if path.extension().is_some_and(|e| e == "jsonl") {
        let first = std::fs::read_to_string(path)
            .map_err(|e| BiasError::Io {
                path: label.clone(),
                message: e.to_string(),
            })?
            .lines()
            .find(|l| !l.trim().is_empty())
            .and_then(|l| serde_json::from_str::<Value>(l).ok());
        let is_profiles = first
            .as_ref()
            .is_some_and(|v| v.get("protected").is_some() && v.get("rank").is_none());
        if is_profiles {
            let profiles = io::read_profiles(open()?, &label)?;
            println!("ok: {} user profiles", profiles.len());
        } else {
            let loaded = io::read_result_lists(open()?, &label)?;
            for w in &loaded.warnings {
                println!("warning: {w}");
            }
            println!("ok: {} result lists", loaded.lists.len());
        }
        return Ok(());
    }
    let doc: Value = io::load_json(path)?;
    let has = |k: &str| doc.get(k).is_some();
    if has("result_lists") || has("scenario") {
        let m = load_manifest(path)?;
        if let Some(cfg) = m.scenario_config()? {
            cfg.validate()?;
            println!("ok: manifest (scenario, {} users)", cfg.n_users);
        } else {
            load_audit_data(&m)?;
            println!("ok: manifest (recorded lists)");
        }
    } else if has("n_users") {
        let cfg: ScenarioConfig = io::load_json(path)?;
        cfg.validate()?;
        println!("ok: scenario ({} users)", cfg.n_users);
    } else if has("attributes") {
        let s: SchemaFile = io::load_json(path)?;
        println!("ok: schema ({} attributes)", s.attributes.len());
    } else {
        match io::load_json::<GroundTruthFile>(path)? {
            GroundTruthFile::Single(gt) => println!("ok: ground truth for {:?}", gt.attribute()),
            GroundTruthFile::PerQuery { queries, .. } => {
                println!("ok: ground truth for {} queries", queries.len())
            }
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Measure {
            manifest,
            overrides,
        } => measure(&manifest, &overrides),
        Command::Simulate {
            manifest,
            seed,
            export,
            overrides,
        } => simulate(&manifest, seed, export.as_deref(), &overrides),
        Command::Compare {
            manifest_a,
            manifest_b,
            overrides,
        } => compare(&manifest_a, &manifest_b, &overrides),
        Command::Aggregate { lists, method, k } => aggregate_lists(&lists, &method, k),
        Command::Validate { file } => validate(&file),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_configuration() {
                EXIT_CONFIG
            } else {
                EXIT_INPUT
            })
        }
    }
}
