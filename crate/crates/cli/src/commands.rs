use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::json;

use tdof_core::diagnostics::{split_rhat, ChainSet, SummaryRecord};
use tdof_core::fisher::{bep_grid_with, ItauReading};
use tdof_core::kernels::{run_chain, AmMode};
use tdof_core::model::{joint_grid, Algorithm, ChainSpec, GridPlane, NuPrior, ObservationSet};
use tdof_core::numerics::mix_ids;
use tdof_core::simstudy::{
    aggregate_mean_rne, dataset_stream_id, interval_table, run_grid, simulate_dataset, write_interval_table,
    write_rne_table, IntervalFilter, StudyConfig, RHAT_THRESHOLD,
};
use tdof_core::trendcycle::{
    display_name, fit_many, load_np_file, trend_geweke_test, write_application_table, write_draws_csv, FitConfig,
    LoadOptions, NpSeries, TrendGewekeConfig,
};
use tdof_core::validation::{geweke_joint_test, GewekeConfig, GewekeVariant};

use crate::config::merge;
use crate::CliError;

type CliResult<T = ()> = Result<T, CliError>;

fn required<T>(value: Option<T>, flag: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Usage(format!("missing required option --{flag}")))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_json_file<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::core("write json", e.into()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::core("write json", e.into()))
}

fn print_json<T: Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn parse_algorithm(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: tdof_core::Error| e.to_string())
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Degrees of freedom.
    #[arg(long)]
    pub nu: Option<f64>,
    /// Number of observations.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Data set index within (ν, n).
    #[arg(long)]
    pub data_id: Option<usize>,
    /// Output CSV (`index,y`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with defaults for the options above.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn simulate(args: SimulateArgs) -> CliResult {
    let file = args.config.clone();
    let a = merge(args, file.as_deref())?;
    let nu = required(a.nu, "nu")?;
    let n = required(a.n, "n")?;
    let out = required(a.out.clone(), "out")?;
    let seed = a.seed.unwrap_or(1);
    let data_id = a.data_id.unwrap_or(0);
    let y = simulate_dataset(seed, nu, n, data_id).map_err(|e| CliError::core("simulate", e))?;
    let mut w = create(&out)?;
    y.write_csv(&mut w).map_err(|e| CliError::core("simulate", e))?;
    print_json(&json!({
        "nu": nu, "n": n, "seed": seed, "data_id": data_id,
        "stream_id": dataset_stream_id(nu, n, data_id),
        "out": out,
    }));
    Ok(())
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitArgs {
    /// Data CSV with a `y` column.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_parser = parse_algorithm)]
    pub alg: Option<Algorithm>,
    /// Rate of the exponential prior on ν.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Retained draws per chain.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Metropolis repetitions per sweep (AA, ASIS).
    #[arg(long)]
    pub k_aa: Option<usize>,
    /// Initial values of ν, cycled over the chains.
    #[arg(long, value_delimiter = ',')]
    pub init_nu: Option<Vec<f64>>,
    /// Number of chains (default: one per initial value).
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn fit(args: FitArgs) -> CliResult {
    let file = args.config.clone();
    let a = merge(args, file.as_deref())?;
    let data_path = required(a.data.clone(), "data")?;
    let out_dir = required(a.out_dir.clone(), "out-dir")?;
    let alg = required(a.alg, "alg")?;
    let lambda = a.lambda.unwrap_or(0.2);
    let iterations = a.iters.unwrap_or(10_000);
    let burn_in = a.burnin.unwrap_or(1_000);
    let k_aa = a.k_aa.unwrap_or(20);
    let inits = a.init_nu.clone().unwrap_or_else(|| vec![0.5, 2.0, 10.0, 100.0]);
    if inits.is_empty() {
        return Err(CliError::Usage("--init-nu needs at least one value".into()));
    }
    let chains = a.chains.unwrap_or(inits.len());
    let seed = a.seed.unwrap_or(1);
    let prior = NuPrior::new(lambda).map_err(|e| CliError::Usage(e.to_string()))?;

    let file = File::open(&data_path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", data_path.display())))?;
    let y = ObservationSet::read_csv(file).map_err(|e| CliError::core(format!("reading {}", data_path.display()), e))?;
    create_dir(&out_dir)?;

    let mut draws = Vec::with_capacity(chains);
    let mut records = Vec::with_capacity(chains);
    for c in 0..chains {
        let spec = ChainSpec {
            algorithm: alg,
            iterations,
            burn_in,
            init_nu: inits[c % inits.len()],
            k_aa,
            prior,
            seed,
            stream_id: mix_ids(&[0xf17, alg.id(), c as u64]),
        };
        let d = run_chain(&spec, &y, AmMode::Standard).map_err(|e| match e {
            tdof_core::Error::Invalid(m) => CliError::Usage(m),
            e => CliError::core(format!("fit: {alg} chain {c} (init {})", spec.init_nu), e),
        })?;
        let mut w = create(&out_dir.join(format!("chain_{c}.csv")))?;
        writeln!(w, "iter,nu").map_err(|e| CliError::core("fit", e.into()))?;
        for (i, v) in d.nu.iter().enumerate() {
            writeln!(w, "{},{v:.12e}", i + 1).map_err(|e| CliError::core("fit", e.into()))?;
        }
        w.flush().map_err(|e| CliError::core("fit", e.into()))?;
        records.push((spec, d.am_accept_rate, d.boundary_sweeps));
        draws.push(d.nu);
    }
    let set = ChainSet::new(draws.clone()).map_err(|e| CliError::core("fit: diagnostics", e))?;
    let rhat = split_rhat(&set);
    let mut chain_json = Vec::new();
    for ((spec, acc, boundary), nu) in records.iter().zip(&draws) {
        let rec = SummaryRecord::new(nu, rhat).map_err(|e| CliError::core("fit: summary", e))?;
        chain_json.push(json!({
            "init_nu": spec.init_nu,
            "stream_id": spec.stream_id,
            "summary": rec,
            "stuck": nu.iter().all(|v| *v == nu[0]),
            "am_accept_rate": acc,
            "boundary_sweeps": boundary,
        }));
    }
    let summary = json!({
        "library_version": tdof_core::VERSION,
        "config": {
            "data": data_path, "alg": alg, "lambda": lambda, "iters": iterations, "burnin": burn_in,
            "k_aa": k_aa, "init_nu": inits, "chains": chains, "seed": seed,
        },
        "rhat": rhat.value.is_finite().then_some(rhat.value),
        "rhat_sentinel": rhat.sentinel,
        "converged": rhat.converged(RHAT_THRESHOLD),
        "chains": chain_json,
    });
    write_json_file(&out_dir.join("summary.json"), &summary)?;
    if !rhat.converged(RHAT_THRESHOLD) {
        eprintln!("tdof: warning: chains disagree (R-hat {}); see summary.json", rhat.value);
    }
    Ok(())
}

// ---------------------------------------------------------------- study

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// Study configuration JSON (fields of the study grid).
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    /// Built-in grid: `desk` or `full`.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Keep finished groups from an earlier run in the same directory.
    #[arg(long)]
    pub resume: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

pub fn study(args: StudyArgs) -> CliResult {
    let config = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str::<StudyConfig>(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?
        }
        (None, Some(name)) => StudyConfig::preset(name).map_err(|e| CliError::Usage(e.to_string()))?,
        (None, None) => StudyConfig::desk(),
    };
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let jobs = args
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let rows = run_grid(&config, &args.out_dir, args.resume, jobs, |p| {
        eprintln!("study: {}/{} groups", p.completed_groups, p.total_groups);
    })
    .map_err(|e| match e {
        tdof_core::Error::Invalid(m) => CliError::Usage(m),
        e => CliError::core("study", e),
    })?;
    let table = aggregate_mean_rne(&rows);
    write_rne_table(create(&args.out_dir.join("rne_table.csv"))?, &table).map_err(|e| CliError::core("study", e))?;
    let filter = IntervalFilter::default();
    if config.n.contains(&filter.n) && config.lambda.contains(&filter.lambda) {
        let intervals = interval_table(&rows, &filter);
        write_interval_table(create(&args.out_dir.join("interval_table.csv"))?, &intervals)
            .map_err(|e| CliError::core("study", e))?;
    }
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    print_json(&json!({
        "chains": rows.len(),
        "surviving": rows.iter().filter(|r| r.survives()).count(),
        "failed": failed,
        "out_dir": args.out_dir,
    }));
    Ok(())
}

// ---------------------------------------------------------------- fisher

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherArgs {
    #[arg(long, value_delimiter = ',')]
    pub y_grid: Option<Vec<f64>>,
    /// Increasing ν values.
    #[arg(long, value_delimiter = ',')]
    pub nu_grid: Option<Vec<f64>>,
    /// Monte Carlo draws per cell.
    #[arg(long = "L", visible_alias = "l")]
    pub l: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV (`y,nu,i_u,i_tau,diff,se,dropped`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `trigamma` (default) or `printed` for the digamma expression.
    #[arg(long)]
    pub i_tau_reading: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn fisher(args: FisherArgs) -> CliResult {
    let file = args.config.clone();
    let a = merge(args, file.as_deref())?;
    let out = required(a.out.clone(), "out")?;
    let ys = a.y_grid.clone().unwrap_or_else(|| vec![0.0, 2.0, 4.0]);
    let nus = a.nu_grid.clone().unwrap_or_else(|| {
        vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 6.0, 7.0, 8.0, 10.0]
    });
    let l = a.l.unwrap_or(10_000);
    let seed = a.seed.unwrap_or(1);
    let reading: ItauReading = match &a.i_tau_reading {
        Some(s) => s.parse().map_err(|e: tdof_core::Error| CliError::Usage(e.to_string()))?,
        None => ItauReading::default(),
    };
    let grid = bep_grid_with(&ys, &nus, l, seed, reading).map_err(|e| match e {
        tdof_core::Error::Invalid(m) | tdof_core::Error::Domain { detail: m, .. } => CliError::Usage(m),
        e => CliError::core("fisher", e),
    })?;
    grid.write_csv(create(&out)?).map_err(|e| CliError::core("fisher", e))?;
    print_json(&json!({
        "y_grid": ys, "nu_grid": nus, "L": l, "seed": seed, "i_tau_reading": reading,
        "crossings": grid.crossings, "out": out,
    }));
    Ok(())
}

// ---------------------------------------------------------------- validate

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateArgs {
    /// `core` (ν sweep alone) or `trend` (trend-cycle sampler with σ² fixed).
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long, value_parser = parse_algorithm)]
    pub alg: Option<Algorithm>,
    /// Observations per resimulated data set (core model).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Recorded iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub k_aa: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Significance level of the pass flag.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Drop the Jacobian from the Metropolis ratio (must fail).
    #[arg(long)]
    pub broken_jacobian: bool,
    /// Build η with −λ (must fail).
    #[arg(long)]
    pub minus_lambda: bool,
    /// Report JSON (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// QQ points CSV (core model).
    #[arg(long)]
    pub qq_out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn validate(args: ValidateArgs) -> CliResult {
    let file = args.config.clone();
    let a = merge(args, file.as_deref())?;
    let alg = a.alg.unwrap_or(Algorithm::Sa);
    let map_err = |e: tdof_core::Error| match e {
        tdof_core::Error::Invalid(m) => CliError::Usage(m),
        e => CliError::core("validate", e),
    };
    let (report, pass) = match a.model.as_deref().unwrap_or("core") {
        "core" => {
            let d = GewekeConfig::default();
            let variant = match (a.broken_jacobian, a.minus_lambda) {
                (true, true) => return Err(CliError::Usage("choose one broken variant".into())),
                (true, false) => GewekeVariant::NoJacobian,
                (false, true) => GewekeVariant::MinusLambda,
                (false, false) => GewekeVariant::Correct,
            };
            let config = GewekeConfig {
                algorithm: alg,
                n: a.n.unwrap_or(d.n),
                lambda: a.lambda.unwrap_or(d.lambda),
                iterations: a.iters.unwrap_or(d.iterations),
                burn_in: a.burnin.unwrap_or(d.burn_in),
                thin: a.thin.unwrap_or(d.thin),
                k_aa: a.k_aa.unwrap_or(d.k_aa),
                variant,
                seed: a.seed.unwrap_or(d.seed),
                alpha: a.alpha.unwrap_or(d.alpha),
            };
            let r = geweke_joint_test(&config).map_err(map_err)?;
            if let Some(path) = &a.qq_out {
                r.write_qq_csv(create(path)?).map_err(|e| CliError::core("validate", e))?;
            }
            let pass = r.pass;
            (serde_json::to_value(&r).expect("serializable"), pass)
        }
        "trend" => {
            if a.broken_jacobian || a.minus_lambda {
                return Err(CliError::Usage("broken variants apply to the core model only".into()));
            }
            let d = TrendGewekeConfig::default();
            let config = TrendGewekeConfig {
                algorithm: alg,
                lambda: a.lambda.unwrap_or(d.lambda),
                iterations: a.iters.unwrap_or(d.iterations),
                burn_in: a.burnin.unwrap_or(d.burn_in),
                thin: a.thin.unwrap_or(d.thin),
                k_aa: a.k_aa.unwrap_or(d.k_aa),
                seed: a.seed.unwrap_or(d.seed),
                alpha: a.alpha.unwrap_or(d.alpha),
                ..d
            };
            let r = trend_geweke_test(&config).map_err(map_err)?;
            let pass = r.pass;
            (serde_json::to_value(&r).expect("serializable"), pass)
        }
        other => return Err(CliError::Usage(format!("unknown model {other:?} (expected core or trend)"))),
    };
    match &a.out {
        Some(path) => write_json_file(path, &report)?,
        None => print_json(&report),
    }
    if pass {
        Ok(())
    } else {
        Err(CliError::Failed(format!("joint test failed for {alg}")))
    }
}

// ---------------------------------------------------------------- app

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AppArgs {
    /// `year,<series...>` CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Series to fit (column or display names; default all).
    #[arg(long, value_delimiter = ',')]
    pub series: Option<Vec<String>>,
    /// Algorithms (default aa,sa,asis).
    #[arg(long, value_delimiter = ',', value_parser = parse_algorithm)]
    pub alg: Option<Vec<Algorithm>>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub k_aa: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Fit the series in levels.
    #[arg(long)]
    pub no_log_transform: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

pub fn app(args: AppArgs) -> CliResult {
    let file = args.config.clone();
    let a = merge(args, file.as_deref())?;
    let data_path = required(a.data.clone(), "data")?;
    let out_dir = required(a.out_dir.clone(), "out-dir")?;
    let d = FitConfig::default();
    let opts = LoadOptions {
        log_transform: !a.no_log_transform,
        ..LoadOptions::default()
    };
    let all = load_np_file(&data_path, &opts).map_err(|e| match e {
        tdof_core::Error::Io(io) => CliError::Usage(format!("cannot read {}: {io}", data_path.display())),
        e => CliError::Usage(format!("{}: {e}", data_path.display())),
    })?;
    let chosen: Vec<&NpSeries> = match &a.series {
        None => all.values().collect(),
        Some(names) => names
            .iter()
            .map(|want| {
                all.values()
                    .find(|s| s.name.eq_ignore_ascii_case(want) || display_name(&s.name).eq_ignore_ascii_case(want))
                    .ok_or_else(|| {
                        let available: Vec<String> =
                            all.keys().map(|k| format!("{k} ({})", display_name(k))).collect();
                        CliError::Usage(format!("unknown series {want:?}; available: {}", available.join(", ")))
                    })
            })
            .collect::<CliResult<_>>()?,
    };
    let algs = a.alg.clone().unwrap_or_else(|| Algorithm::ALL.to_vec());
    let work: Vec<(NpSeries, FitConfig)> = chosen
        .iter()
        .flat_map(|s| {
            algs.iter().map(|&alg| {
                (
                    (*s).clone(),
                    FitConfig {
                        algorithm: alg,
                        iterations: a.iters.unwrap_or(d.iterations),
                        burn_in: a.burnin.unwrap_or(d.burn_in),
                        k_aa: a.k_aa.unwrap_or(d.k_aa),
                        lambda: a.lambda.unwrap_or(d.lambda),
                        seed: a.seed.unwrap_or(d.seed),
                    },
                )
            })
        })
        .collect();
    create_dir(&out_dir)?;
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let results = fit_many(&work, jobs).map_err(|e| CliError::core("app", e))?;
    let mut summaries = Vec::new();
    let mut first_error = None;
    for ((series, config), res) in work.iter().zip(results) {
        let stem = format!("{}_{}", file_stem(&series.name), config.algorithm.name().to_lowercase());
        match res {
            Ok(fit) => {
                write_draws_csv(create(&out_dir.join(format!("draws_{stem}.csv")))?, &fit.draws)
                    .map_err(|e| CliError::core("app", e))?;
                write_json_file(&out_dir.join(format!("summary_{stem}.json")), &fit.summary)?;
                summaries.push(fit.summary);
            }
            Err(e) => {
                eprintln!("tdof: {} {}: {e}", series.name, config.algorithm);
                first_error.get_or_insert(CliError::core(format!("app: {} {}", series.name, config.algorithm), e));
            }
        }
    }
    write_application_table(create(&out_dir.join("application_table.csv"))?, &summaries)
        .map_err(|e| CliError::core("app", e))?;
    write_json_file(
        &out_dir.join("run.json"),
        &json!({
            "library_version": tdof_core::VERSION,
            "data": data_path,
            "log_transform": opts.log_transform,
            "series": chosen.iter().map(|s| &s.name).collect::<Vec<_>>(),
            "fits": work.iter().map(|(s, c)| json!({"series": s.name, "config": c})).collect::<Vec<_>>(),
        }),
    )?;
    match first_error {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- grid

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridArgs {
    /// The single observation.
    #[arg(long)]
    pub y0: Option<f64>,
    /// `sa` for (ν, τ) or `aa` for (ν, u).
    #[arg(long)]
    pub plane: Option<String>,
    #[arg(long)]
    pub nu_min: Option<f64>,
    #[arg(long)]
    pub nu_max: Option<f64>,
    /// Upper end of the τ axis (SA plane).
    #[arg(long)]
    pub aux_max: Option<f64>,
    #[arg(long)]
    pub res_nu: Option<usize>,
    #[arg(long)]
    pub res_aux: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Output CSV (`nu,aux,density`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

pub fn grid(args: GridArgs) -> CliResult {
    let file = args.config.clone();
    let a = merge(args, file.as_deref())?;
    let out = required(a.out.clone(), "out")?;
    let plane = match a.plane.as_deref().unwrap_or("sa") {
        "sa" => GridPlane::SaPlane,
        "aa" => GridPlane::AaPlane,
        other => return Err(CliError::Usage(format!("unknown plane {other:?} (expected sa or aa)"))),
    };
    let prior = NuPrior::new(a.lambda.unwrap_or(0.2)).map_err(|e| CliError::Usage(e.to_string()))?;
    let y0 = a.y0.unwrap_or(0.0);
    let range = (a.nu_min.unwrap_or(0.1), a.nu_max.unwrap_or(10.0));
    let res = (a.res_nu.unwrap_or(100), a.res_aux.unwrap_or(100));
    let g = joint_grid(y0, plane, range, a.aux_max.unwrap_or(10.0), res, &prior).map_err(|e| match e {
        tdof_core::Error::Invalid(m) | tdof_core::Error::Domain { detail: m, .. } => CliError::Usage(m),
        e => CliError::core("grid", e),
    })?;
    g.write_csv(create(&out)?).map_err(|e| CliError::core("grid", e))?;
    print_json(&json!({
        "y0": y0, "plane": plane, "nu_range": range, "resolution": res,
        "lambda": prior.lambda, "correlation": g.correlation(), "out": out,
    }));
    Ok(())
}
