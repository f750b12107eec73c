use std::error::Error;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use stnet::inference::{
    cross_validate, derived_seed, fit_ml, krige, read_observations, simulate, synthetic_dataset, Dataset, FitOptions,
    NelderMeadOptions, SyntheticDesign, Target,
};
use stnet::model_spec::{parse_family, parse_model_spec, ModelSpec};
use stnet::nalgebra::DVector;
use stnet::surface::{emit_surface, surface_value, FlowMode, SurfaceGrid};
use stnet::validate::{
    check_cnd, check_power_convexity, check_pd, check_schur_closure, linear_grid, InstanceConfig, InstanceNetwork,
    ValidityReport,
};
use stnet::Network;

type Result<T> = std::result::Result<T, Box<dyn Error>>;

#[derive(Parser)]
#[command(name = "stnet", version, about = "Space-time covariance models on stream networks")]
struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-likelihood fit of a model to observations.
    Fit(FitArgs),
    /// Universal kriging at target records.
    Predict(PredictArgs),
    /// Site-wise k-fold cross-validation.
    Cv(CvArgs),
    /// Draw a Gaussian response from a model.
    Simulate(SimulateArgs),
    /// Numerical validity checks (exit code 2 when a check fails).
    Validate(ValidateArgs),
    /// Covariance surface and marginals on a grid.
    Surface(SurfaceArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Network file (`OUTLET <vertex>` and `E <id> <tail> <head> <length> <omega>` lines).
    #[arg(long)]
    network: PathBuf,
    /// Observation CSV: site_edge,site_offset,time,response,cov1,...
    #[arg(long)]
    data: PathBuf,
    /// Model specification, e.g. `model5:theta1=10;sigma2=1;nugget=0.1;fixed=nugget`.
    #[arg(long)]
    model: String,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 3000)]
    max_evals: usize,
    /// Report file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the fitted model specification here.
    #[arg(long)]
    spec_out: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Target CSV in the observation format; responses may be empty.
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 8)]
    folds: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 3000)]
    max_evals: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Regression coefficients, intercept first.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    beta: Vec<f64>,
    /// Existing network; with --template, reuse its records and covariates.
    #[arg(long, requires = "template")]
    network: Option<PathBuf>,
    #[arg(long, requires = "network")]
    template: Option<PathBuf>,
    /// Synthetic design when no template is given.
    #[arg(long, default_value_t = 30)]
    edges: usize,
    #[arg(long, default_value_t = 60)]
    sites: usize,
    #[arg(long, default_value_t = 8)]
    times: usize,
    /// Where to write the generated network in synthetic mode.
    #[arg(long)]
    network_out: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Check {
    Pd,
    Cnd,
    Convexity,
    Schur,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, value_delimiter = ',', default_values_t = vec![Check::Pd], value_enum)]
    checks: Vec<Check>,
    /// Model for pd, schur and convexity.
    #[arg(long)]
    model: Option<String>,
    /// Second factor for the schur check.
    #[arg(long)]
    with: Option<String>,
    /// Candidate conditionally negative definite function, e.g. `powerplusbeta:lambda=0.5,beta=2`.
    #[arg(long)]
    psi: Option<String>,
    /// Fixed network; random directed trees otherwise.
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long, default_value_t = 40)]
    max_records: usize,
    #[arg(long, default_value_t = 20240601)]
    seed: u64,
    /// Leaf count for the convexity check (taken from --network when omitted).
    #[arg(long)]
    leaves: Option<usize>,
    #[arg(long, default_value_t = 50.0)]
    tmax: f64,
    #[arg(long, default_value_t = 2001)]
    grid_points: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FlowArg {
    Connected,
    Unconnected,
}

#[derive(Args)]
struct SurfaceArgs {
    #[arg(long)]
    model: String,
    #[arg(long, default_value_t = 5.0)]
    dmax: f64,
    #[arg(long, default_value_t = 5.0)]
    umax: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 51)]
    res: usize,
    /// Flow relation for flow-based models.
    #[arg(long, value_enum, default_value_t = FlowArg::Connected)]
    flow: FlowArg,
    /// Tail-up weight of connected pairs.
    #[arg(long, default_value_t = 1.0)]
    weight: f64,
    /// Share of the distance on the first branch of unconnected pairs.
    #[arg(long, default_value_t = 0.5)]
    split: f64,
    /// Output prefix: writes `<prefix>_grid.csv`, `<prefix>_spatial.csv`, `<prefix>_temporal.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| format!("{}: {e}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_network(path: &Path) -> Result<Network> {
    Network::from_file(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn load(args: &DataArgs) -> Result<(Dataset, ModelSpec)> {
    let net = load_network(&args.network)?;
    let spec = parse_model_spec(&args.model)?;
    spec.check_network(&net)?;
    let data = Dataset::read_csv(net, &args.data).map_err(|e| format!("{}: {e}", args.data.display()))?;
    Ok((data, spec))
}

fn fit_options(max_evals: usize) -> FitOptions {
    FitOptions { optimizer: NelderMeadOptions { max_evaluations: max_evals, ..Default::default() } }
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let (data, spec) = load(&a.data)?;
    let fit = fit_ml(&data, &spec.fit_spec(), &fit_options(a.max_evals))?;
    let fitted = ModelSpec { model: fit.model.clone(), free: spec.free.clone() };
    let mut w = output(&a.out)?;
    writeln!(w, "model,LL,BIC,n_params,n_obs,convergence,iterations,evaluations,jitter_retries,leaf_count")?;
    writeln!(
        w,
        "{},{},{},{},{},{:?},{},{},{},{}",
        fit.model.name(),
        fit.loglik,
        fit.bic,
        fit.n_params,
        fit.n_obs,
        fit.convergence,
        fit.iterations,
        fit.evaluations,
        fit.jitter_retries,
        fit.leaf_count
    )?;
    writeln!(w, "# fitted: {fitted}")?;
    let beta: Vec<String> = fit.beta.iter().map(|b| b.to_string()).collect();
    writeln!(w, "# beta: {}", beta.join(","))?;
    w.flush()?;
    if let Some(p) = &a.spec_out {
        std::fs::write(p, format!("{fitted}\n"))?;
    }
    Ok(())
}

fn run_predict(a: &PredictArgs) -> Result<()> {
    let (data, spec) = load(&a.data)?;
    let obs = read_observations(&data.net, File::open(&a.targets).map_err(|e| format!("{}: {e}", a.targets.display()))?)?;
    let targets: Vec<Target> = obs
        .iter()
        .map(|o| Target {
            point: o.point,
            time: o.time,
            design: std::iter::once(1.0).chain(o.covariates.iter().copied()).collect(),
            observed: o.response,
        })
        .collect();
    let res = krige(&data, &spec.model, &targets)?;
    let mut w = output(&a.out)?;
    writeln!(w, "site_edge,site_offset,time,mean,variance,observed,crps")?;
    for (t, p) in targets.iter().zip(&res.predictions) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            data.net.edge(t.point.edge).id,
            t.point.offset,
            t.time,
            p.mean,
            p.variance,
            opt(p.observed),
            opt(p.crps)
        )?;
    }
    if let (Some(r), Some(c)) = (res.rmspe(), res.mean_crps()) {
        writeln!(w, "# RMSPE,{r}")?;
        writeln!(w, "# CRPS,{c}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_cv(a: &CvArgs) -> Result<()> {
    let (data, spec) = load(&a.data)?;
    let fold_seed = derived_seed(a.seed, "folds");
    let report = cross_validate(&data, &spec.fit_spec(), &fit_options(a.max_evals), a.folds, fold_seed)?;
    let mut w = output(&a.out)?;
    writeln!(w, "{},held_out", stnet::inference::CvReport::CSV_HEADER)?;
    let rows = report.csv_rows();
    for (row, fold) in rows.iter().zip(report.folds.iter().map(Some).chain(std::iter::once(None))) {
        let held = fold.map(|f| f.held_out.join("|")).unwrap_or_default();
        writeln!(w, "{row},{held}")?;
    }
    w.flush()?;
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = parse_model_spec(&a.model)?;
    let field_seed = derived_seed(a.seed, "simulate");
    let data = match (&a.network, &a.template) {
        (Some(n), Some(t)) => {
            let net = load_network(n)?;
            spec.check_network(&net)?;
            let mut obs = read_observations(&net, File::open(t).map_err(|e| format!("{}: {e}", t.display()))?)?;
            for o in &mut obs {
                o.response.get_or_insert(0.0);
            }
            let data = Dataset::from_observations(net, &obs)?;
            if a.beta.len() != data.design.ncols() {
                return Err(format!("--beta needs {} values (intercept first)", data.design.ncols()).into());
            }
            let z = simulate(&data, &spec.model, &DVector::from_column_slice(&a.beta), field_seed)?;
            data.with_response(z)?
        }
        _ => {
            let design = SyntheticDesign {
                n_edges: a.edges,
                n_sites: a.sites,
                n_times: a.times,
                n_covariates: a.beta.len().saturating_sub(1),
                ..Default::default()
            };
            let data = synthetic_dataset(&design, &spec.model, &a.beta, field_seed)?;
            if let Some(p) = &a.network_out {
                std::fs::write(p, data.net.to_string())?;
            }
            data
        }
    };
    let w = output(&a.out)?;
    data.write_csv(w)?;
    Ok(())
}

fn run_validate(a: &ValidateArgs) -> Result<bool> {
    let net = a.network.as_deref().map(load_network).transpose()?;
    let source = match &net {
        Some(n) => InstanceNetwork::Fixed(n),
        None => InstanceNetwork::RandomTrees { min_edges: 3, max_edges: 30 },
    };
    let cfg = InstanceConfig { instances: a.instances, max_records: a.max_records, seed: a.seed, ..Default::default() };
    let model = a.model.as_deref().map(parse_model_spec).transpose()?;
    let need_model = || model.as_ref().ok_or("this check needs --model");
    let mut reports: Vec<ValidityReport> = Vec::new();
    for check in &a.checks {
        let report = match check {
            Check::Pd => check_pd(&need_model()?.model, source, &cfg)?,
            Check::Schur => {
                let other = parse_model_spec(a.with.as_deref().ok_or("the schur check needs --with")?)?;
                check_schur_closure(&need_model()?.model, &other.model, source, &cfg)?
            }
            Check::Cnd => {
                let psi = parse_family(a.psi.as_deref().ok_or("the cnd check needs --psi")?)?;
                check_cnd(|t| psi.value(t), source, &cfg)?
            }
            Check::Convexity => {
                let m = &need_model()?.model;
                let leaves = a
                    .leaves
                    .or_else(|| net.as_ref().map(|n| n.leaf_count()))
                    .ok_or("the convexity check needs --leaves or --network")?;
                let mode = FlowMode::default();
                let origin = surface_value(m, mode, 0.0, 0.0)?;
                let profile = |t: f64| surface_value(m, mode, t, 0.0).map(|v| v / origin).unwrap_or(f64::NAN);
                check_power_convexity(profile, leaves, &linear_grid(0.0, a.tmax, a.grid_points.max(3)))
            }
        };
        eprintln!("{report}");
        reports.push(report);
    }
    let mut w = output(&a.out)?;
    writeln!(w, "{}", ValidityReport::CSV_HEADER)?;
    for r in &reports {
        writeln!(w, "{}", r.csv_row())?;
    }
    w.flush()?;
    Ok(reports.iter().all(|r| r.pass))
}

fn run_surface(a: &SurfaceArgs) -> Result<()> {
    let spec = parse_model_spec(&a.model)?;
    let grid = SurfaceGrid::new(a.dmax, a.umax, a.res, a.res)?;
    let mode = match a.flow {
        FlowArg::Connected => FlowMode::Connected { weight: a.weight },
        FlowArg::Unconnected => FlowMode::Unconnected { split: a.split },
    };
    let s = emit_surface(&spec.model, &grid, mode)?;
    let path = |suffix: &str| {
        let mut p = a.out.clone().into_os_string();
        p.push(suffix);
        PathBuf::from(p)
    };
    let create = |p: PathBuf| -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(&p).map_err(|e| format!("{}: {e}", p.display()))?))
    };
    s.write_grid(create(path("_grid.csv"))?)?;
    s.write_spatial(create(path("_spatial.csv"))?)?;
    s.write_temporal(create(path("_temporal.csv"))?)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a).map(|_| true),
        Command::Predict(a) => run_predict(a).map(|_| true),
        Command::Cv(a) => run_cv(a).map(|_| true),
        Command::Simulate(a) => run_simulate(a).map(|_| true),
        Command::Validate(a) => run_validate(a),
        Command::Surface(a) => run_surface(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
