use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bnpl::io::{self, ModelKind, RunConfig, Schedule, SummarizeOptions};
use bnpl::simulate::{simulate_rankings, PlantedClusters};
use bnpl::single::GammaPrior;
use bnpl::summaries::{mean_items_curve, ranking_heatmap};
use bnpl::{CrmSpec, Error, RankingDataset, Result, StreamFactory};
use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bnpl", version, about = "Nonparametric Plackett-Luce models for top-m rankings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw synthetic rankings and write heatmap and mean-items tables.
    Simulate(SimulateArgs),
    /// Gamma-process model.
    Fit(FitArgs),
    /// Dirichlet-process mixture of dependent gamma processes.
    FitMixture(FitArgs),
    /// Generalised gamma process model.
    FitGencrm(FitArgs),
    /// Point estimate, co-clustering matrix and cluster tables from a trace.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 5.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Generalised gamma index; 0 gives the gamma process.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 100)]
    lists: usize,
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Replicates for the mean-items curve.
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    /// Plant this many preference clusters instead of sampling from the CRM.
    #[arg(long)]
    planted: Option<usize>,
    #[arg(long, default_value_t = 10)]
    items_per_cluster: usize,
    #[arg(long, default_value_t = 20)]
    background: usize,
    #[arg(long, default_value_t = 10.0)]
    dominance: f64,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Rankings CSV with header `list_id,rank,item`.
    #[arg(long)]
    data: PathBuf,
    /// JSON run configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial (or, with --fix-alpha, fixed) concentration.
    #[arg(long)]
    alpha: Option<f64>,
    /// Gamma prior `a,b` on alpha; `0,0` is the flat 1/alpha prior.
    #[arg(long, value_parser = parse_prior)]
    alpha_prior: Option<GammaPrior>,
    #[arg(long, action = ArgAction::SetTrue)]
    fix_alpha: bool,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    phi: Option<f64>,
    #[arg(long, value_parser = parse_prior)]
    phi_prior: Option<GammaPrior>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_parser = parse_prior)]
    gamma_prior: Option<GammaPrior>,
    /// Concentration of the random starting partition.
    #[arg(long)]
    init_concentration: Option<f64>,
    #[arg(long)]
    iters: Option<u64>,
    #[arg(long)]
    burnin: Option<u64>,
    #[arg(long)]
    thin: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Require tau = 1 for the mixture.
    #[arg(long, action = ArgAction::Set)]
    strict_tau: Option<bool>,
    #[arg(long, value_parser = parse_schedule)]
    schedule: Option<Schedule>,
    /// Store normalised weights in every snapshot.
    #[arg(long, action = ArgAction::Set)]
    record_weights: Option<bool>,
    /// Independent chains with split seeds, one trace file each.
    #[arg(long, default_value_t = 1)]
    chains: u64,
    /// Trace file.
    #[arg(long, default_value = "trace.ndjson")]
    out: PathBuf,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(long)]
    trace: PathBuf,
    /// Rankings the trace was fitted to; needed for mixture cluster weights.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    dense_limit: usize,
    #[arg(long, default_value_t = 2000)]
    conditional_iters: u64,
    #[arg(long, default_value_t = 500)]
    conditional_burnin: u64,
    /// Output directory.
    #[arg(long, default_value = "summary")]
    out: PathBuf,
}

fn parse_prior(s: &str) -> std::result::Result<GammaPrior, String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad shape `{a}`"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad rate `{b}`"))?;
    GammaPrior::new(a, b).map_err(|e| e.to_string())
}

fn parse_schedule(s: &str) -> std::result::Result<Schedule, String> {
    match s {
        "exact" => Ok(Schedule::Exact),
        "literal" => Ok(Schedule::Literal),
        _ => Err(format!("unknown schedule `{s}` (exact, literal)")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(ModelKind::Single, a),
        Command::FitMixture(a) => fit(ModelKind::Mixture, a),
        Command::FitGencrm(a) => fit(ModelKind::GeneralCrm, a),
        Command::Summarize(a) => summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let seed = a.seed.unwrap_or_else(io::fresh_seed);
    let streams = StreamFactory::new(seed);
    std::fs::create_dir_all(&a.out)?;
    let spec = if a.sigma == 0.0 { CrmSpec::gamma(a.alpha, a.tau) } else { CrmSpec::generalized_gamma(a.alpha, a.tau, a.sigma) }
        .map_err(|e| Error::Config(e.to_string()))?;
    let data = match a.planted {
        Some(clusters) => {
            let p = PlantedClusters {
                clusters,
                lists: a.lists,
                m: a.m,
                items_per_cluster: a.items_per_cluster,
                background: a.background,
                dominance: a.dominance,
            };
            let (data, truth) = p.generate(&mut streams.stream(&[0])).map_err(|e| Error::Config(e.to_string()))?;
            let rows: String = data.list_labels().iter().zip(&truth).map(|(l, j)| format!("{l},{j}\n")).collect();
            std::fs::write(a.out.join("truth.csv"), format!("list_id,cluster\n{rows}"))?;
            data
        }
        None => simulate_rankings(&spec, a.lists, a.m, &mut streams.stream(&[0]))?,
    };
    io::write_rankings_file(&data, &a.out.join("rankings.csv"))?;
    let h = ranking_heatmap(data.rankings(), data.registry());
    io::write_heatmap(&h, data.list_labels(), &a.out.join("heatmap.csv"))?;
    let curve = mean_items_curve(&spec, a.m, a.lists, a.replicates, &mut streams.stream(&[1]))?;
    io::write_curve(&curve, a.m, &a.out.join("mean_items.csv"))?;
    eprintln!("seed {seed}: {} rankings over {} items written to {}", data.num_lists(), data.num_items(), a.out.display());
    Ok(())
}

fn build_config(model: ModelKind, a: &FitArgs) -> Result<RunConfig> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            let c = RunConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if c.model != model {
                return Err(Error::Config(format!("{} is for a different model", p.display())));
            }
            c
        }
        None => RunConfig::new(model),
    };
    macro_rules! set {
        ($($f:ident => $g:ident),*) => {$( if let Some(v) = a.$f.clone() { c.$g = v; } )*};
    }
    set!(alpha => alpha, tau => tau, sigma => sigma, phi => phi, phi_prior => phi_prior, gamma => gamma,
        gamma_prior => gamma_prior, init_concentration => init_concentration, iters => iterations, thin => thin, strict_tau => strict_tau,
        schedule => schedule, record_weights => record_weights);
    if let Some(b) = a.burnin {
        c.burn_in = b;
    } else if a.iters.is_some() && a.config.is_none() {
        c.burn_in = c.iterations / 2;
    }
    if a.alpha_prior.is_some() {
        c.alpha_prior = a.alpha_prior;
    }
    if a.fix_alpha {
        c.alpha_prior = None;
    }
    if a.seed.is_some() {
        c.seed = a.seed;
    }
    c.validate()?;
    Ok(c)
}

fn chain_path(out: &Path, chain: u64) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "trace".into(), |s| s.to_string_lossy().into_owned());
    let ext = out.extension().map_or_else(|| "ndjson".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.chain{chain}.{ext}"))
}

fn fit(model: ModelKind, a: FitArgs) -> Result<()> {
    let mut config = build_config(model, &a)?;
    let data = io::parse_rankings(&a.data)?;
    let seed = config.resolve_seed();
    if a.chains == 0 {
        return Err(Error::Config("--chains must be at least 1".into()));
    }
    eprintln!("{} rankings, {} items; seed {seed}", data.num_lists(), data.num_items());
    for chain in 0..a.chains {
        let (cfg, path) = if a.chains == 1 {
            (config.clone(), a.out.clone())
        } else {
            let mut c = config.clone();
            c.seed = Some(StreamFactory::new(seed).child(chain).seed());
            (c, chain_path(&a.out, chain))
        };
        run_chain(&cfg, &data, &path, chain)?;
    }
    Ok(())
}

fn run_chain(cfg: &RunConfig, data: &RankingDataset, path: &Path, chain: u64) -> Result<()> {
    let mut report = |p: &io::Progress| {
        eprintln!("chain {chain} sweep {}/{}  {:.0} sweeps/min  J={}", p.sweep, p.total, p.sweeps_per_minute, p.clusters);
    };
    let trace = io::run_fit(cfg, data, Some(path), &mut report)?;
    eprintln!("chain {chain}: {} snapshots written to {}", trace.len(), path.display());
    Ok(())
}

fn summarize(a: SummarizeArgs) -> Result<()> {
    let data = a.data.as_deref().map(io::parse_rankings).transpose()?;
    let opts = SummarizeOptions {
        dense_limit: a.dense_limit,
        write_zeta: true,
        conditional_iterations: a.conditional_iters,
        conditional_burn_in: a.conditional_burnin,
    };
    let s = io::run_summarize(&a.trace, &a.out, data.as_ref(), &opts)?;
    eprintln!(
        "point estimate from snapshot {} (iteration {}): {} clusters, sizes {:?}",
        s.dahl.index,
        s.dahl.iter,
        s.dahl.partition.num_clusters(),
        s.dahl.partition.sizes()
    );
    if s.tables.is_none() {
        eprintln!("no cluster weight tables: pass --data for mixture traces");
    }
    Ok(())
}
