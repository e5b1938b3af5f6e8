use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use counterpoint::dsl;
use counterpoint::exploration::{self, ModelCatalog};
use counterpoint::feasibility::{self, BatchOptions, FeasibilityOptions};
use counterpoint::geometry;
use counterpoint::mudd::{self, MuDD, DEFAULT_PATH_CAP};
use counterpoint::stats::{self, CovarianceModel, DofPolicy, LoadOptions, ObservationSet, RegionOptions, DEFAULT_ALPHA};
use counterpoint::synth::{self, Noise, SynthSpec};

const EXIT_FEASIBLE: u8 = 0;
const EXIT_INFEASIBLE: u8 = 1;
const EXIT_ERROR: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
}

/// Test microarchitectural models against hardware event counter data.
#[derive(Debug, Parser)]
#[command(name = "counterpoint", version)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Output format.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// key=value file with defaults for any option below.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Maximum number of µpaths to enumerate.
    #[arg(long, global = true)]
    cap: Option<usize>,
    /// Worker threads.
    #[arg(long, global = true, env = "COUNTERPOINT_JOBS")]
    jobs: Option<usize>,
    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List µpaths and their counter signatures.
    Paths { model: PathBuf },
    /// Deduce the model's equality and inequality constraints.
    Constraints { model: PathBuf },
    /// Test observation files against a model.
    Check {
        model: PathBuf,
        /// CSV files or directories of CSV files.
        #[arg(required = true)]
        observations: Vec<PathBuf>,
        #[command(flatten)]
        region: RegionArgs,
    },
    /// Summarize a model-search catalog.
    Explore {
        catalog: PathBuf,
        /// Recompute infeasible counts from these observation files.
        #[arg(long, num_args = 1..)]
        recount: Vec<PathBuf>,
        #[command(flatten)]
        region: RegionArgs,
    },
    /// Generate synthetic observations from a model.
    Synth {
        model: PathBuf,
        /// Comma-separated flow per µpath (default: 1 for every path).
        #[arg(long, allow_hyphen_values = true)]
        flows: Option<String>,
        #[arg(long, default_value_t = 16)]
        samples: usize,
        /// Standard deviation: one value for all counters or one per counter.
        #[arg(long, default_value = "0")]
        noise: String,
        /// Full noise covariance, rows separated by `;`, entries by `,`.
        #[arg(long, conflicts_with = "noise")]
        noise_cov: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args, Clone, Default)]
struct RegionArgs {
    /// Significance level of the confidence region.
    #[arg(long)]
    alpha: Option<f64>,
    /// Drop model counters missing from the data instead of failing.
    #[arg(long)]
    project: bool,
    /// Ignore counter correlations (diagonal covariance).
    #[arg(long)]
    independent: bool,
    /// Lower bound on covariance eigenvalues.
    #[arg(long)]
    variance_floor: Option<f64>,
    /// Use the covariance rank as chi-square degrees of freedom.
    #[arg(long)]
    effective_rank: bool,
    /// One LP variable per distinct signature.
    #[arg(long)]
    compress: bool,
}

/// Options after merging the config file with the command line.
#[derive(Debug, Clone)]
struct RunConfig {
    format: Format,
    cap: usize,
    jobs: Option<usize>,
    alpha: f64,
    project: bool,
    independent: bool,
    variance_floor: f64,
    effective_rank: bool,
    compress: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format: Format::Text,
            cap: DEFAULT_PATH_CAP,
            jobs: None,
            alpha: DEFAULT_ALPHA,
            project: false,
            independent: false,
            variance_floor: 0.0,
            effective_rank: false,
            compress: false,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => bail!("{key}: expected a boolean, got `{v}`"),
    }
}

impl RunConfig {
    fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key=value", path.display(), n + 1))?;
            let (k, v) = (k.trim().replace('-', "_"), v.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|_| anyhow!("{k}: expected a number, got `{v}`"));
            match k.as_str() {
                "format" => {
                    self.format = Format::from_str(v, true).map_err(|e| anyhow!("format: {e}"))?;
                }
                "cap" => self.cap = v.parse().map_err(|_| anyhow!("cap: expected an integer, got `{v}`"))?,
                "jobs" => self.jobs = Some(v.parse().map_err(|_| anyhow!("jobs: expected an integer, got `{v}`"))?),
                "alpha" => self.alpha = num(v)?,
                "variance_floor" => self.variance_floor = num(v)?,
                "project" => self.project = parse_bool(&k, v)?,
                "independent" => self.independent = parse_bool(&k, v)?,
                "effective_rank" => self.effective_rank = parse_bool(&k, v)?,
                "compress" => self.compress = parse_bool(&k, v)?,
                _ => bail!("{}:{}: unknown key `{k}`", path.display(), n + 1),
            }
        }
        Ok(())
    }

    fn build(global: &GlobalArgs, region: Option<&RegionArgs>) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &global.config {
            cfg.apply_file(path)?;
        }
        if let Some(f) = global.format {
            cfg.format = f;
        }
        if let Some(c) = global.cap {
            cfg.cap = c;
        }
        if global.jobs.is_some() {
            cfg.jobs = global.jobs;
        }
        if let Some(r) = region {
            if let Some(a) = r.alpha {
                cfg.alpha = a;
            }
            if let Some(v) = r.variance_floor {
                cfg.variance_floor = v;
            }
            cfg.project |= r.project;
            cfg.independent |= r.independent;
            cfg.effective_rank |= r.effective_rank;
            cfg.compress |= r.compress;
        }
        if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
            bail!("alpha must be in (0, 1), got {}", cfg.alpha);
        }
        if cfg.cap == 0 {
            bail!("cap must be at least 1");
        }
        if !(cfg.variance_floor >= 0.0) {
            bail!("variance floor must be non-negative");
        }
        Ok(cfg)
    }

    fn batch_options(&self) -> BatchOptions {
        BatchOptions {
            region: RegionOptions {
                alpha: self.alpha,
                variance_floor: self.variance_floor,
                dof: if self.effective_rank { DofPolicy::EffectiveRank } else { DofPolicy::Dimension },
                covariance: if self.independent { CovarianceModel::Diagonal } else { CovarianceModel::Full },
            },
            feasibility: FeasibilityOptions {
                compress: self.compress,
                flow_cap: self.cap,
            },
            path_cap: self.cap,
        }
    }
}

/// Loads a `.json` graph or a DSL file.
fn load_model(path: &Path) -> Result<MuDD> {
    if path.extension().is_some_and(|e| e == "json") {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{}: invalid model", path.display()))
    } else {
        let src = dsl::DslSource::read(path).with_context(|| format!("reading {}", path.display()))?;
        dsl::parse(&src, None).map_err(|d| anyhow!("{}", d.to_string().trim_end()))
    }
}

fn model_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

/// Expands directories to the CSV files they contain, sorted by name.
fn observation_files(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| format!("reading {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "csv"))
                .collect();
            files.sort();
            out.extend(files);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_observations(paths: &[PathBuf], ns: &mudd::CounterNamespace, project: bool) -> Result<Vec<ObservationSet>> {
    observation_files(paths)?
        .iter()
        .map(|p| {
            let obs = stats::load_observation_file(p, ns, LoadOptions { project })?;
            for c in &obs.ignored_columns {
                log::warn!("{}: ignoring column `{c}`", p.display());
            }
            Ok(obs)
        })
        .collect()
}

fn emit(out: &mut impl Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn emit_json(out: &mut impl Write, value: &serde_json::Value) -> Result<()> {
    emit(out, &serde_json::to_string_pretty(value)?)
}

fn cmd_paths(cfg: &RunConfig, model: &Path, out: &mut impl Write) -> Result<u8> {
    let m = load_model(model)?;
    let ns = m.namespace();
    let paths = mudd::enumerate_mupaths(&m, cfg.cap)?;
    let sigs = mudd::signatures_of_model(&m, cfg.cap)?;
    match cfg.format {
        Format::Text => {
            let mut text = format!("{} µpaths over [{}]\n", paths.len(), ns.names().join(", "));
            for (i, (p, s)) in paths.iter().zip(&sigs).enumerate() {
                text.push_str(&format!("{i:>4}  {}  {}\n", p.describe_assignment(), s.display(ns)));
            }
            emit(out, &text)?;
        }
        Format::Json => {
            let rows: Vec<_> = paths
                .iter()
                .zip(&sigs)
                .enumerate()
                .map(|(i, (p, s))| {
                    serde_json::json!({
                        "index": i,
                        "assignment": p.assignment.iter().map(|(k, v)| serde_json::json!([k, v])).collect::<Vec<_>>(),
                        "signature": s.counts,
                    })
                })
                .collect();
            emit_json(out, &serde_json::json!({ "namespace": ns.names(), "paths": rows }))?;
        }
    }
    Ok(EXIT_FEASIBLE)
}

fn cmd_constraints(cfg: &RunConfig, model: &Path, out: &mut impl Write) -> Result<u8> {
    let m = load_model(model)?;
    let cs = geometry::deduce_constraints(&m, cfg.cap).map_err(counterpoint::Error::from)?;
    match cfg.format {
        Format::Text => emit(out, &cs.to_string())?,
        Format::Json => emit_json(out, &cs.to_json())?,
    }
    Ok(EXIT_FEASIBLE)
}

fn cmd_check(cfg: &RunConfig, model: &Path, observations: &[PathBuf], out: &mut impl Write) -> Result<u8> {
    let m = load_model(model)?;
    let obs = load_observations(observations, m.namespace(), cfg.project)?;
    let rows = feasibility::batch_check(&[(model_name(model), m)], &obs, &cfg.batch_options());
    let infeasible = rows.iter().filter(|r| r.is_infeasible()).count();
    let errors = rows.iter().filter(|r| r.outcome.is_err()).count();
    match cfg.format {
        Format::Text => emit(out, &feasibility::render_report(&rows))?,
        Format::Json => emit_json(
            out,
            &serde_json::json!({
                "runs": rows.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
                "infeasible": infeasible,
                "errors": errors,
            }),
        )?,
    }
    Ok(if errors > 0 {
        EXIT_ERROR
    } else if infeasible > 0 {
        EXIT_INFEASIBLE
    } else {
        EXIT_FEASIBLE
    })
}

fn cmd_explore(cfg: &RunConfig, catalog_path: &Path, recount: &[PathBuf], out: &mut impl Write) -> Result<u8> {
    let mut catalog = ModelCatalog::load(catalog_path)?;
    let base = catalog_path.parent().unwrap_or(Path::new("."));
    let mut models = HashMap::new();
    for e in &catalog.entries {
        if let Some(rel) = &e.model {
            let m = load_model(&base.join(rel)).with_context(|| format!("model `{}`", e.name))?;
            models.insert(e.name.clone(), m);
        }
    }
    if !recount.is_empty() {
        let Some(first) = models.values().next() else {
            bail!("--recount needs catalog entries with model files");
        };
        let obs = load_observations(recount, first.namespace(), true)?;
        let rows = exploration::recount(&mut catalog, &models, &obs, &cfg.batch_options());
        for r in rows.iter().filter(|r| r.outcome.is_err()) {
            log::warn!("{} on {}: {}", r.model, r.run_id, r.outcome.as_ref().unwrap_err());
        }
    }
    let expansions = exploration::check_expansions(&catalog, &models, cfg.cap);
    match cfg.format {
        Format::Text => emit(out, &exploration::render_search_report(&catalog, &expansions))?,
        Format::Json => emit_json(out, &exploration::report_json(&catalog, &expansions))?,
    }
    Ok(EXIT_FEASIBLE)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| anyhow!("{what}: `{s}` is not a number")))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    cfg: &RunConfig,
    model: &Path,
    flows: Option<&str>,
    samples: usize,
    noise: &str,
    noise_cov: Option<&str>,
    seed: u64,
    dest: Option<&Path>,
    out: &mut impl Write,
) -> Result<u8> {
    let m = load_model(model)?;
    let dim = m.namespace().len();
    let n = mudd::enumerate_mupaths(&m, cfg.cap)?.len();
    let flows = match flows {
        Some(f) => parse_list(f, "flows")?,
        None => vec![1.0; n],
    };
    let noise = match noise_cov {
        Some(text) => Noise::Covariance(
            text.split(';').map(|row| parse_list(row, "noise-cov")).collect::<Result<_>>()?,
        ),
        None => {
            let sigma = parse_list(noise, "noise")?;
            match sigma.len() {
                1 => Noise::PerCounter(vec![sigma[0]; dim]),
                _ => Noise::PerCounter(sigma),
            }
        }
    };
    let mut spec = SynthSpec::new(m, flows, samples, noise, seed);
    spec.path_cap = cfg.cap;
    let data = synth::generate(&spec)?;
    if data.clamped > 0 {
        log::warn!("clamped {} negative values to zero", data.clamped);
    }
    match dest {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            synth::write_csv(&data.observations, file)?;
        }
        None => synth::write_csv(&data.observations, &mut *out)?,
    }
    Ok(EXIT_FEASIBLE)
}

fn run(cli: Cli, out: &mut impl Write) -> Result<u8> {
    let region = match &cli.command {
        Command::Check { region, .. } | Command::Explore { region, .. } => Some(region),
        _ => None,
    };
    let cfg = RunConfig::build(&cli.global, region)?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().ok();
    }
    match &cli.command {
        Command::Paths { model } => cmd_paths(&cfg, model, out),
        Command::Constraints { model } => cmd_constraints(&cfg, model, out),
        Command::Check { model, observations, .. } => cmd_check(&cfg, model, observations, out),
        Command::Explore { catalog, recount, .. } => cmd_explore(&cfg, catalog, recount, out),
        Command::Synth {
            model,
            flows,
            samples,
            noise,
            noise_cov,
            seed,
            out: dest,
        } => cmd_synth(
            &cfg,
            model,
            flows.as_deref(),
            *samples,
            noise,
            noise_cov.as_deref(),
            *seed,
            dest.as_deref(),
            out,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.global.log).format_timestamp(None).init();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(cli, &mut out) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
