//! Command-line front end. `run` parses arguments, executes one command and
//! maps the outcome to an exit status.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use hbn_core::aggregate::{bfe_convolve, bfe_deconvolve, mc_oracle, Frequency};
use hbn_core::cg::{mgd_to_cg, MgdSpec};
use hbn_core::dd::{ddbp_on, ddjt, DdOutcome, DdSettings, Evidence};
use hbn_core::discretize::{Partition, RefinePolicy, SpreadMode};
use hbn_core::gbp::{gbp_marginals, GbpSettings};
use hbn_core::jt::{enumerate_marginals, jt_marginals};
use hbn_core::model::{binary_factorize, kappa, to_dccd, verify_full_bfg, BfgAnnotation, Network};
use hbn_core::region::{describe, maxent_check, rg_to_join_graph, structural_counts, trc};

use crate::cache::{AggConfig, CacheFile};
use crate::model_file::ModelFile;
use crate::report::{Bin, Diagnostics, MarginalReport, NodeMarginal};

/// Largest joint the enumeration oracle accepts, in binary-equivalent variables.
pub const ENUM_GUARD_BITS: f64 = 20.0;

#[derive(Debug, Parser)]
#[command(name = "hbn", version, about = "Hybrid Bayesian network inference and risk aggregation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Densify a continuous model or binary-factorize it.
    Convert {
        model: PathBuf,
        #[arg(long, value_enum)]
        to: Target,
        /// Output model file; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Posterior marginals by junction tree or region-graph propagation.
    Infer {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "jt")]
        engine: Engine,
        /// `id=value`; a state label for discrete nodes, a number otherwise.
        #[arg(long = "evidence", value_name = "ID=VALUE")]
        evidence: Vec<String>,
        #[command(flatten)]
        dd: DdFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Compound distribution of a model with a compound section.
    Aggregate {
        model: PathBuf,
        /// Where to write the convolution cache.
        #[arg(long)]
        cache: PathBuf,
        #[command(flatten)]
        agg: AggFlags,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Posterior causes and frequency given an observed compound total.
    Deconvolve {
        model: PathBuf,
        #[arg(long)]
        cache: PathBuf,
        /// Observed total, as `T=value`.
        #[arg(long = "evidence", value_name = "T=VALUE")]
        evidence: String,
        /// Comma-separated cause ids and/or `N`; everything when absent.
        #[arg(long, value_delimiter = ',')]
        query: Vec<String>,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Reference marginals by enumeration (discrete models) or Monte Carlo
    /// (compound models).
    Oracle {
        model: PathBuf,
        #[arg(long, value_enum)]
        method: OracleMethod,
        #[arg(long, default_value_t = 200_000)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Histogram bins for Monte Carlo output.
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long = "evidence", value_name = "ID=VALUE")]
        evidence: Vec<String>,
        #[command(flatten)]
        out: OutFlags,
    },
    /// Conditional Gaussian chain model from a mean vector and covariance.
    CgDecompose {
        /// Whitespace-separated numbers: the mean row, then the covariance
        /// rows. `#` starts a comment.
        matrix: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the triplet region graph and its join-graph export.
    RgInspect { model: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Dccd,
    Bfg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Engine {
    Jt,
    Ddbp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OracleMethod {
    Enum,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Spread {
    Uniform,
    Exact,
}

#[derive(Debug, Clone, Args)]
pub struct DdFlags {
    /// Discretization rounds.
    #[arg(long, env = "HBN_DD_ITERATIONS", default_value_t = 25)]
    pub iterations: usize,
    #[arg(long, default_value_t = 60)]
    pub max_bins: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub spread: Spread,
    /// Sweeps per region-graph propagation.
    #[arg(long, env = "HBN_GBP_ITERATIONS", default_value_t = 200)]
    pub gbp_iterations: usize,
    /// Largest belief change accepted as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub threshold: f64,
}

impl DdFlags {
    fn settings(&self) -> DdSettings {
        DdSettings {
            iterations: self.iterations,
            policy: RefinePolicy { max_bins: self.max_bins, ..Default::default() },
            spread: match self.spread {
                Spread::Uniform => SpreadMode::Uniform,
                Spread::Exact => SpreadMode::Exact,
            },
            gbp: self.gbp(),
            ..Default::default()
        }
    }

    fn gbp(&self) -> GbpSettings {
        GbpSettings { max_iters: self.gbp_iterations, threshold: self.threshold, ..Default::default() }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AggFlags {
    /// Refinement rounds for the severity and every partial sum.
    #[arg(long, env = "HBN_AGG_ITERATIONS", default_value_t = 65)]
    pub severity_iterations: usize,
    #[arg(long, default_value_t = 25)]
    pub frequency_iterations: usize,
    #[arg(long, default_value_t = 60)]
    pub max_bins: usize,
    #[arg(long, value_enum, default_value = "exact")]
    pub spread: Spread,
}

impl AggFlags {
    fn config(&self) -> AggConfig {
        AggConfig {
            severity_iterations: self.severity_iterations,
            frequency_iterations: self.frequency_iterations,
            max_bins: self.max_bins,
            exact_spreading: self.spread == Spread::Exact,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct OutFlags {
    /// CSV destination; the CSV goes to stdout (and the summary to stderr)
    /// when absent.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

/// How a successful command ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    NotConverged,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Converged => 0,
            Status::NotConverged => 2,
        }
    }

    fn of(converged: bool) -> Status {
        if converged {
            Status::Converged
        } else {
            Status::NotConverged
        }
    }
}

/// Parses `args` (program name first) and runs the command, writing primary
/// output to `out` and messages to `err`. Returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli.command, out, err) {
        Ok(s) => s.code(),
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            1
        }
    }
}

pub fn run(cmd: &Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    match cmd {
        Command::Convert { model, to, output } => convert(model, *to, output.as_deref(), out, err),
        Command::Infer { model, engine, evidence, dd, out: o } => {
            let m = ModelFile::read(model)?;
            let report = infer(&m, *engine, evidence, dd)?;
            emit(&report, o, out, err)?;
            Ok(Status::of(report.diagnostics.converged))
        }
        Command::Aggregate { model, cache, agg, out: o } => {
            let m = ModelFile::read(model)?;
            let (report, file) = aggregate(&m, &agg.config())?;
            file.write(cache)?;
            emit(&report, o, out, err)?;
            Ok(Status::Converged)
        }
        Command::Deconvolve { model, cache, evidence, query, out: o } => {
            let m = ModelFile::read(model)?;
            let c = CacheFile::read(cache)?;
            let report = deconvolve(&m, &c, evidence, query)?;
            emit(&report, o, out, err)?;
            Ok(Status::Converged)
        }
        Command::Oracle { model, method, samples, seed, bins, evidence, out: o } => {
            let m = ModelFile::read(model)?;
            let report = match method {
                OracleMethod::Enum => enumerate(&m, evidence)?,
                OracleMethod::Mc => monte_carlo(&m, *samples, *seed, *bins)?,
            };
            emit(&report, o, out, err)?;
            Ok(Status::Converged)
        }
        Command::CgDecompose { matrix, output } => {
            let text = std::fs::read_to_string(matrix).with_context(|| format!("reading {}", matrix.display()))?;
            let m = ModelFile::from_network(&mgd_to_cg(&parse_matrix(&text)?)?);
            write_model(&m, output.as_deref(), out)?;
            Ok(Status::Converged)
        }
        Command::RgInspect { model } => {
            let m = ModelFile::read(model)?;
            out.write_all(inspect(&m)?.as_bytes())?;
            Ok(Status::Converged)
        }
    }
}

fn emit(report: &MarginalReport, o: &OutFlags, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match &o.csv {
        Some(p) => {
            std::fs::write(p, report.to_csv()).with_context(|| format!("writing {}", p.display()))?;
            out.write_all(report.summary_text().as_bytes())?;
        }
        None => {
            out.write_all(report.to_csv().as_bytes())?;
            err.write_all(report.summary_text().as_bytes())?;
        }
    }
    Ok(())
}

fn write_model(m: &ModelFile, path: Option<&Path>, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => m.write(p),
        None => Ok(out.write_all(m.to_json().as_bytes())?),
    }
}

/// The network of `m` in full binary factorized form: the recorded
/// annotation when present, otherwise densified and factorized.
pub fn as_bfg(m: &ModelFile) -> Result<(Network, BfgAnnotation)> {
    let net = m.network()?;
    match m.annotation(&net)? {
        Some(ann) => Ok((net, ann)),
        None => Ok(binary_factorize(&to_dccd(&net)?)?),
    }
}

fn convert(model: &Path, to: Target, output: Option<&Path>, out: &mut dyn Write, err: &mut dyn Write) -> Result<Status> {
    let m = ModelFile::read(model)?;
    let net = m.network()?;
    let converted = match to {
        Target::Dccd => ModelFile { nodes: ModelFile::from_network(&to_dccd(&net)?).nodes, ..m.clone() },
        Target::Bfg => {
            let (bfg, ann) = as_bfg(&m)?;
            let violations = verify_full_bfg(&bfg, &ann);
            if !violations.is_empty() {
                bail!("result is not a full binary factorized graph: {violations:?}");
            }
            let n = ann.originals.len();
            writeln!(err, "originals={n} nodes={} kappa={}", bfg.len(), kappa(n))?;
            ModelFile { evidence: m.evidence.clone(), compound: m.compound.clone(), ..ModelFile::from_bfg(&bfg, &ann) }
        }
    };
    converted.network().context("converted model does not validate")?;
    write_model(&converted, output, out)?;
    Ok(Status::Converged)
}

fn is_discrete(net: &Network) -> bool {
    net.nodes.iter().all(|n| n.is_discrete())
}

fn state_evidence(net: &Network, ev: &[(String, Evidence)]) -> Result<Vec<(usize, usize)>> {
    ev.iter()
        .map(|(id, e)| {
            let i = net.index(id).with_context(|| format!("unknown node `{id}`"))?;
            let Evidence::State(s) = e else { bail!("evidence on discrete `{id}` must name a state") };
            let states = net.nodes[i].states().unwrap_or(&[]);
            let k = states.iter().position(|x| x == s).with_context(|| format!("`{id}` has no state `{s}`"))?;
            Ok((i, k))
        })
        .collect()
}

fn discrete_report(net: &Network, marginals: &[Vec<f64>], diagnostics: Diagnostics) -> MarginalReport {
    let nodes = net
        .nodes
        .iter()
        .zip(marginals)
        .map(|(n, m)| NodeMarginal::states(&n.id, n.states().unwrap_or(&[]), m))
        .collect();
    MarginalReport { nodes, diagnostics }
}

fn dd_report(out: &DdOutcome, engine: &str) -> Result<MarginalReport> {
    let mut nodes = Vec::new();
    for n in &out.model.net.nodes {
        nodes.push(match n.states() {
            Some(states) => NodeMarginal::states(&n.id, states, &out.marginals[out.index(&n.id)?]),
            None => NodeMarginal::density(&n.id, &out.density(&n.id)?),
        });
    }
    let diagnostics = Diagnostics {
        engine: engine.into(),
        iterations: out.iterations,
        inner_iterations: out.inner.iterations,
        residual: out.inner.residual,
        entropy_error: out.errors.last().copied(),
        converged: out.converged && out.inner.converged,
        notes: Vec::new(),
    };
    Ok(MarginalReport { nodes, diagnostics })
}

pub fn infer(m: &ModelFile, engine: Engine, extra: &[String], dd: &DdFlags) -> Result<MarginalReport> {
    let net = m.network()?;
    let ev = m.evidence(&net, extra)?;
    if is_discrete(&net) {
        let (factors, card) = net.table_factors()?;
        let sev = state_evidence(&net, &ev)?;
        return match engine {
            Engine::Jt => {
                let marg = jt_marginals(&factors, &card, &sev)?;
                let d = Diagnostics { engine: "jt".into(), iterations: 1, converged: true, ..Default::default() };
                Ok(discrete_report(&net, &marg, d))
            }
            Engine::Ddbp => {
                let ann = m.annotation(&net)?.context("region-graph propagation on a discrete model needs its intermediates listed")?;
                let t = trc(&net, &ann)?;
                let (marg, res) = gbp_marginals(&t.graph, &factors, &card, &sev, t.root, &dd.gbp())?;
                let d = Diagnostics {
                    engine: "trc-gbp".into(),
                    iterations: 1,
                    inner_iterations: res.iterations,
                    residual: res.residual,
                    converged: res.converged,
                    ..Default::default()
                };
                Ok(discrete_report(&net, &marg, d))
            }
        };
    }
    let s = dd.settings();
    match engine {
        Engine::Jt => dd_report(&ddjt(&net, &ev, &s)?, "ddjt"),
        Engine::Ddbp => {
            let (bfg, ann) = as_bfg(m)?;
            let out = ddbp_on(&bfg, &ann, &ev, &s)?;
            let mut r = dd_report(&out.outcome, "ddbp")?;
            if out.trc.graph.regions.len() == 1 {
                r.diagnostics.notes.push("four or fewer original variables: a single region holds the whole model".into());
            }
            Ok(r)
        }
    }
}

pub fn aggregate(m: &ModelFile, cfg: &AggConfig) -> Result<(MarginalReport, CacheFile)> {
    let spec = m.compound_spec()?;
    let (compound, cache) = bfe_convolve(&spec, &cfg.settings())?;
    let report = MarginalReport {
        nodes: vec![NodeMarginal::density("T", &compound.density)],
        diagnostics: Diagnostics {
            engine: "bfe".into(),
            iterations: cfg.severity_iterations,
            converged: true,
            notes: vec![format!("{} counts, {} bins in the compound partition", cache.support.len(), cache.partition.len())],
            ..Default::default()
        },
    };
    Ok((report, CacheFile::new(m, cfg, &cache)))
}

pub fn deconvolve(m: &ModelFile, c: &CacheFile, evidence: &str, query: &[String]) -> Result<MarginalReport> {
    let cache = c.restore(m)?;
    let (k, v) = crate::model_file::parse_assignment(evidence)?;
    if k != "T" {
        bail!("deconvolution observes the compound total `T`, not `{k}`");
    }
    let t0: f64 = v.parse().with_context(|| format!("`{v}` is not a number"))?;
    let post = bfe_deconvolve(&cache, t0)?;
    let wanted = |id: &str| query.is_empty() || query.iter().any(|q| q == id);
    for q in query {
        if q != "N" && !post.causes.iter().any(|(id, _)| id == q) {
            bail!("unknown query node `{q}`");
        }
    }
    let net = m.network()?;
    let mut nodes = Vec::new();
    for (id, marg) in &post.causes {
        if wanted(id) {
            nodes.push(NodeMarginal::states(id, net.node(id)?.states().unwrap_or(&[]), marg));
        }
    }
    if wanted("N") {
        let labels: Vec<String> = cache.support.iter().map(|n| n.to_string()).collect();
        nodes.push(NodeMarginal::states("N", &labels, &post.frequency));
    }
    let (lo, hi) = cache.partition.bins[post.bin];
    let diagnostics = Diagnostics {
        engine: "bfe-deconvolution".into(),
        iterations: 1,
        converged: true,
        notes: vec![format!("observed T={t0} in bin [{lo}, {hi}]")],
        ..Default::default()
    };
    Ok(MarginalReport { nodes, diagnostics })
}

pub fn enumerate(m: &ModelFile, extra: &[String]) -> Result<MarginalReport> {
    let net = m.network()?;
    if !is_discrete(&net) {
        bail!("enumeration needs a fully discrete model");
    }
    let (factors, card) = net.table_factors()?;
    let bits: f64 = card.iter().map(|&c| (c as f64).log2()).sum();
    if bits > ENUM_GUARD_BITS {
        bail!("joint has {bits:.1} binary-equivalent variables; enumeration is limited to {ENUM_GUARD_BITS}");
    }
    let ev = state_evidence(&net, &m.evidence(&net, extra)?)?;
    let marg = enumerate_marginals(&factors, &card, &ev)?;
    let d = Diagnostics { engine: "enumeration".into(), iterations: 1, converged: true, ..Default::default() };
    Ok(discrete_report(&net, &marg, d))
}

pub fn monte_carlo(m: &ModelFile, samples: usize, seed: u64, bins: usize) -> Result<MarginalReport> {
    let spec = m.compound_spec().context("Monte Carlo sampling needs a compound section")?;
    if samples == 0 || bins == 0 {
        bail!("need at least one sample and one bin");
    }
    let emp = mc_oracle(&spec, samples, seed)?;
    let (lo, hi) = emp.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let grid = if hi > lo {
        Partition::uniform(lo, hi, bins)?
    } else {
        Partition::from_bins(vec![(lo, hi)], false)?
    };
    let masses = emp.masses(&grid);
    let rows = grid.bins.iter().zip(&masses).map(|(&(a, b), &p)| (Bin::Interval(a, b), p)).collect();
    let mut note = format!("{samples} samples, seed {seed}");
    if matches!(spec.frequency, Frequency::Law(_)) {
        note.push_str(", counts drawn from the frequency law");
    }
    Ok(MarginalReport {
        nodes: vec![NodeMarginal { id: "T".into(), rows, summary: Some(emp.summary()) }],
        diagnostics: Diagnostics { engine: "monte-carlo".into(), iterations: 1, converged: true, notes: vec![note], ..Default::default() },
    })
}

/// Mean row followed by covariance rows.
pub fn parse_matrix(text: &str) -> Result<MgdSpec> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or(""))
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse::<f64>().with_context(|| format!("`{t}` is not a number"))).collect())
        .collect::<Result<_>>()?;
    let Some((mean, cov)) = rows.split_first() else { bail!("matrix file is empty") };
    if cov.len() != mean.len() || cov.iter().any(|r| r.len() != mean.len()) {
        bail!("expected a mean row of length n followed by n covariance rows of length n");
    }
    Ok(MgdSpec::new(mean.clone(), cov.to_vec())?)
}

pub fn inspect(m: &ModelFile) -> Result<String> {
    let (bfg, ann) = as_bfg(m)?;
    let t = trc(&bfg, &ann)?;
    let names = bfg.ids();
    let mut s = String::new();
    let c = structural_counts(&t);
    s.push_str(&format!(
        "originals={} level1={} intersections={} edges={} pruned={}\n",
        ann.originals.len(),
        c.level1,
        c.intersections,
        c.edges,
        c.pruned
    ));
    let card: Vec<usize> = bfg.nodes.iter().map(|n| n.states().map(|s| s.len()).unwrap_or(2)).collect();
    s.push_str(&format!("maxent_normal={}\n", maxent_check(&t.graph, &card).holds()));
    s.push_str(&describe(&t.graph, &names));
    let jg = rg_to_join_graph(&t.graph);
    let lab = |l: &[usize]| l.iter().map(|&v| names[v].as_str()).collect::<Vec<_>>().join(",");
    for (a, b, sep, from) in &jg.separators {
        let from = from.as_ref().map(|p| format!(" pruned_from={{{}}}", lab(p))).unwrap_or_default();
        s.push_str(&format!("separator {a} -- {b} {{{}}}{from}\n", lab(sep)));
    }
    Ok(s)
}
