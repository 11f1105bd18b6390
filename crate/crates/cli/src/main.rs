use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use extremal_cli::config::FacesMethod;
use extremal_cli::{merge_json, run_pipeline, PipelineConfig, Stage, OUTPUT_DIR_ENV};
use extremal_core::faces::AprioriCriterion;
use extremal_core::graphical::Score;
use extremal_core::ingest::Norm;

/// Sparse structure in multivariate extremes.
///
/// Each subcommand runs the corresponding pipeline stage (after
/// standardizing the input) and writes its artifacts and a manifest.json to
/// the output directory. Values in `--config` override flags; the
/// EXTREMAL_OUTPUT_DIR environment variable overrides both for the output
/// directory.
#[derive(Parser)]
#[command(name = "extremal", version)]
struct Cli {
    /// More logging (-v info, -vv debug); RUST_LOG also works.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank-transform to the standard Pareto scale and extract exceedances.
    Standardize {
        #[command(flatten)]
        common: Common,
    },
    /// Pairwise χ matrix and χ curves with bootstrap bands.
    Chi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: ChiArgs,
    },
    /// Spherical k-means of the extremal angles.
    Cluster {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: ClusterArgs,
    },
    /// Principal components of the extremal angles.
    Epca {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: EpcaArgs,
    },
    /// Groups of concomitantly extreme variables.
    Faces {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: FacesArgs,
    },
    /// Minimum spanning tree on -log χ weights.
    LearnTree {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: GraphArgs,
    },
    /// Hüsler–Reiss block graph: fit a given graph or search greedily.
    FitGraph {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: GraphArgs,
    },
    /// Draw from a model given as a parameter file.
    Simulate {
        #[command(flatten)]
        args: SimulateArgs,
    },
    /// All stages, or those listed with --stages.
    Pipeline {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        args: PipelineArgs,
    },
}

#[derive(Args)]
struct Common {
    /// Input CSV with a header row of labels.
    #[arg(short, long)]
    input: Option<PathBuf>,
    /// Output directory.
    #[arg(short, long = "out")]
    output_dir: Option<PathBuf>,
    /// JSON configuration; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Norm for radii and angles.
    #[arg(long, value_parser = parse_norm)]
    norm: Option<Norm>,
    /// Number of exceedances.
    #[arg(long, conflicts_with = "quantile")]
    k: Option<usize>,
    /// Radial quantile level giving k = floor((1 - q) n).
    #[arg(long)]
    quantile: Option<f64>,
}

impl Common {
    fn apply(&self, c: &mut PipelineConfig) {
        if self.input.is_some() {
            c.input.clone_from(&self.input);
        }
        if let Some(o) = &self.output_dir {
            c.output_dir.clone_from(o);
        }
        if let Some(n) = self.norm {
            c.norm = n;
        }
        if let Some(k) = self.k {
            c.exceedances = extremal_cli::Level::K(k);
        }
        if let Some(q) = self.quantile {
            c.exceedances = extremal_cli::Level::Quantile(q);
        }
    }
}

fn parse_norm(s: &str) -> Result<Norm, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).map_err(|_| format!("unknown norm {s:?}; use l1, l2 or linf"))
}

#[derive(Args)]
struct ChiArgs {
    /// Level of the χ matrix.
    #[arg(long)]
    level: Option<f64>,
    /// Comma-separated increasing levels of the χ curves.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Bootstrap replicates for the curve bands.
    #[arg(long)]
    n_boot: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl ChiArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        let x = &mut c.chi;
        set(&mut x.quantile, self.level);
        if let Some(l) = &self.levels {
            x.levels.clone_from(l);
        }
        set(&mut x.n_boot, self.n_boot);
        set(&mut x.seed, self.seed);
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// Number of clusters.
    #[arg(long)]
    p: Option<usize>,
    /// Center coordinates above the cut form the face.
    #[arg(long)]
    cut: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
}

impl ClusterArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        let x = &mut c.clustering;
        set(&mut x.p, self.p);
        set(&mut x.cut, self.cut);
        set(&mut x.seed, self.seed);
        set(&mut x.restarts, self.restarts);
    }
}

#[derive(Args)]
struct EpcaArgs {
    /// Number of leading components reported.
    #[arg(long)]
    p: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    CondChi,
    EtaTest,
}

#[derive(Args)]
struct FacesArgs {
    #[arg(long, value_enum)]
    method: Option<FacesMethod>,
    /// Goix: coordinates above epsilon belong to the face.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Mass threshold for reporting a face.
    #[arg(long)]
    u: Option<f64>,
    /// Simpson: region exponent in [0, 1).
    #[arg(long)]
    delta: Option<f64>,
    /// Simpson: accepted distance of the tail index from one.
    #[arg(long)]
    rv_tol: Option<f64>,
    /// Apriori growth test.
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    /// Apriori cond-chi ratio threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Apriori eta-test normal quantile.
    #[arg(long)]
    z: Option<f64>,
    /// Apriori frontier cap.
    #[arg(long)]
    cap: Option<usize>,
}

impl FacesArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        let x = &mut c.faces;
        set(&mut x.method, self.method);
        set(&mut x.epsilon, self.epsilon);
        set(&mut x.u, self.u);
        set(&mut x.delta, self.delta);
        set(&mut x.rv_tol, self.rv_tol);
        set(&mut x.cap, self.cap);
        let (threshold, z) = match x.criterion {
            AprioriCriterion::CondChi { threshold } => (threshold, AprioriCriterion::DEFAULT_Z),
            AprioriCriterion::EtaTest { z } => (0.5, z),
        };
        let kind = self.criterion.unwrap_or(match x.criterion {
            AprioriCriterion::CondChi { .. } => CriterionArg::CondChi,
            AprioriCriterion::EtaTest { .. } => CriterionArg::EtaTest,
        });
        x.criterion = match kind {
            CriterionArg::CondChi => AprioriCriterion::CondChi {
                threshold: self.threshold.unwrap_or(threshold),
            },
            CriterionArg::EtaTest => AprioriCriterion::EtaTest { z: self.z.unwrap_or(z) },
        };
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoreArg {
    Aic,
    Bic,
}

#[derive(Args)]
struct GraphArgs {
    /// Largest clique of the block graph (2 or 3).
    #[arg(long)]
    max_clique: Option<usize>,
    /// Level of the χ weights and the censoring threshold; defaults to the
    /// exceedance level.
    #[arg(long)]
    censor_quantile: Option<f64>,
    #[arg(long, value_enum)]
    score: Option<ScoreArg>,
    /// Fit this graph ({"d": .., "edges": [[i, j], ..]}) instead of searching.
    #[arg(long)]
    graph: Option<PathBuf>,
}

impl GraphArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        let x = &mut c.graph;
        set(&mut x.max_clique, self.max_clique);
        if self.censor_quantile.is_some() {
            x.censor_quantile = self.censor_quantile;
        }
        if let Some(s) = self.score {
            x.score = match s {
                ScoreArg::Aic => Score::Aic,
                ScoreArg::Bic => Score::Bic,
            };
        }
        if self.graph.is_some() {
            x.graph.clone_from(&self.graph);
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Maxlinear,
    Recml,
    Logistic,
    Hr,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(short, long = "out")]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, requires = "params")]
    model: Option<ModelArg>,
    /// Model parameters: {"A": rows} for maxlinear, {"diag": [..], "edges":
    /// [{"from", "to", "beta"}]} for recml, {"d", "theta"} for logistic,
    /// {"gamma": rows} for hr.
    #[arg(long, requires = "model")]
    params: Option<PathBuf>,
    #[arg(short, long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Max-linear only: draw from the limiting Pareto distribution.
    #[arg(long)]
    limit: bool,
}

impl SimulateArgs {
    fn apply(&self, c: &mut PipelineConfig) -> Result<()> {
        if let Some(o) = &self.output_dir {
            c.output_dir.clone_from(o);
        }
        if let (Some(model), Some(path)) = (self.model, &self.params) {
            let mut params: serde_json::Value = read_json(path)?;
            let name = model.to_possible_value().expect("no skipped variants").get_name().to_string();
            params
                .as_object_mut()
                .with_context(|| format!("{} must hold a JSON object", path.display()))?
                .insert("model".into(), name.into());
            c.simulation.model = serde_json::from_value(params).with_context(|| format!("invalid parameters in {}", path.display()))?;
        }
        let x = &mut c.simulation;
        set(&mut x.n, self.n);
        set(&mut x.seed, self.seed);
        x.limit |= self.limit;
        Ok(())
    }
}

/// Per-stage flags of the full pipeline, prefixed where subcommands share a
/// name.
#[derive(Args)]
struct PipelineArgs {
    /// Comma-separated stages to run (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_stage)]
    stages: Option<Vec<Stage>>,
    #[arg(long)]
    chi_level: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    chi_levels: Option<Vec<f64>>,
    #[arg(long)]
    n_boot: Option<usize>,
    #[arg(long)]
    chi_seed: Option<u64>,
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    cut: Option<f64>,
    #[arg(long)]
    cluster_seed: Option<u64>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    epca_p: Option<usize>,
    #[command(flatten)]
    faces: FacesArgs,
    #[command(flatten)]
    graph: GraphArgs,
    /// Simulate this model instead of the fitted one.
    #[arg(long, value_enum, requires = "sim_params")]
    sim_model: Option<ModelArg>,
    #[arg(long, requires = "sim_model")]
    sim_params: Option<PathBuf>,
    #[arg(long)]
    sim_n: Option<usize>,
    #[arg(long)]
    sim_seed: Option<u64>,
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown stage {s:?}"))
}

impl PipelineArgs {
    fn apply(&self, c: &mut PipelineConfig) -> Result<()> {
        if let Some(s) = &self.stages {
            c.stages.clone_from(s);
        }
        ChiArgs {
            level: self.chi_level,
            levels: self.chi_levels.clone(),
            n_boot: self.n_boot,
            seed: self.chi_seed,
        }
        .apply(c);
        ClusterArgs {
            p: self.clusters,
            cut: self.cut,
            seed: self.cluster_seed,
            restarts: self.restarts,
        }
        .apply(c);
        set(&mut c.epca.p, self.epca_p);
        self.faces.apply(c);
        self.graph.apply(c);
        SimulateArgs {
            output_dir: None,
            config: None,
            model: self.sim_model,
            params: self.sim_params.clone(),
            n: self.sim_n,
            seed: self.sim_seed,
            limit: false,
        }
        .apply(c)
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Flags, then the config file on top, then the environment; subcommands
/// other than `pipeline` pin the stage list.
fn build(config: Option<&Path>, stages: Option<Vec<Stage>>, flags: impl FnOnce(&mut PipelineConfig) -> Result<()>) -> Result<PipelineConfig> {
    let mut c = PipelineConfig::default();
    flags(&mut c)?;
    if let Some(path) = config {
        let mut v = serde_json::to_value(&c)?;
        merge_json(&mut v, read_json(path)?);
        c = serde_json::from_value(v).with_context(|| format!("invalid configuration in {}", path.display()))?;
    }
    if let Some(s) = stages {
        c.stages = s;
    }
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
        c.output_dir = dir.into();
    }
    Ok(c)
}

fn config_for(command: Command) -> Result<PipelineConfig> {
    let one = |s: Stage| Some(vec![s]);
    match command {
        Command::Standardize { common } => build(common.config.as_deref(), one(Stage::Standardize), |c| {
            common.apply(c);
            Ok(())
        }),
        Command::Chi { common, args: a } => build(common.config.as_deref(), one(Stage::Chi), |c| {
            common.apply(c);
            a.apply(c);
            Ok(())
        }),
        Command::Cluster { common, args: a } => build(common.config.as_deref(), one(Stage::Cluster), |c| {
            common.apply(c);
            a.apply(c);
            Ok(())
        }),
        Command::Epca { common, args: a } => build(common.config.as_deref(), one(Stage::Epca), |c| {
            common.apply(c);
            set(&mut c.epca.p, a.p);
            Ok(())
        }),
        Command::Faces { common, args: a } => build(common.config.as_deref(), one(Stage::Faces), |c| {
            common.apply(c);
            a.apply(c);
            Ok(())
        }),
        Command::LearnTree { common, args: a } => build(common.config.as_deref(), one(Stage::LearnTree), |c| {
            common.apply(c);
            a.apply(c);
            Ok(())
        }),
        Command::FitGraph { common, args: a } => build(common.config.as_deref(), one(Stage::FitGraph), |c| {
            common.apply(c);
            a.apply(c);
            Ok(())
        }),
        Command::Simulate { args: a } => build(a.config.as_deref(), one(Stage::Simulate), |c| a.apply(c)),
        Command::Pipeline { common, args: a } => build(common.config.as_deref(), None, |c| {
            common.apply(c);
            a.apply(c)
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = config_for(cli.command).and_then(|c| run_pipeline(&c).map(|(m, _)| (c, m)));
    match result {
        Ok((c, manifest)) => {
            for s in &manifest.stages {
                println!("{:<12} {:?}", s.stage.name(), s.status);
            }
            println!("output: {}", c.output_dir.display());
            match &manifest.failure {
                None => ExitCode::SUCCESS,
                Some(f) => {
                    eprintln!("error: {} failed: {}", f.stage, f.diagnostic);
                    ExitCode::FAILURE
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
