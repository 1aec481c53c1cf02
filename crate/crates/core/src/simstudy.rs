//! The simulation study: a grid of (ν_true, n) setups with several data
//! sets each, four chains per (algorithm, λ, data set), R̂ screening and
//! mean-RNE aggregation. Results are appended group by group to a CSV so an
//! interrupted study can be resumed.

use std::collections::{BTreeMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{efficiency, split_rhat, summarize, ChainSet};
use crate::error::{Error, Result};
use crate::kernels::{run_chain, AmMode};
use crate::model::{simulate_observations, Algorithm, ChainSpec, NuPrior, ObservationSet};
use crate::numerics::{mix_ids, real_id, RandomStream};

pub const RESULTS_FILE: &str = "results.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FORMAT_VERSION: u32 = 1;
pub const RHAT_THRESHOLD: f64 = 1.1;

const DATA_TAG: u64 = 0xda7a;
const CHAIN_TAG: u64 = 0xc4a1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub nu_true: Vec<f64>,
    pub n: Vec<usize>,
    pub lambda: Vec<f64>,
    pub datasets_per_cell: usize,
    pub inits: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    /// Retained draws per chain.
    pub iterations: usize,
    pub burn_in: usize,
    /// Metropolis repetitions per AA sweep.
    pub k_aa: usize,
    /// Metropolis repetitions per ASIS sweep.
    pub k_asis: usize,
    pub master_seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            nu_true: vec![1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 10.0, 20.0, 50.0, 100.0],
            n: vec![1, 3, 10, 30, 100, 300, 1000, 3000, 10000],
            lambda: vec![0.05, 0.1, 0.2, 0.5, 1.0],
            datasets_per_cell: 5,
            inits: vec![0.5, 2.0, 10.0, 100.0],
            algorithms: vec![Algorithm::Aa, Algorithm::Sa, Algorithm::Asis],
            iterations: 10_000,
            burn_in: 1_000,
            k_aa: 20,
            k_asis: 20,
            master_seed: 20_240_601,
        }
    }
}

impl StudyConfig {
    /// n ∈ {10, 100, 1000}, λ = 0.2, two data sets per setup.
    pub fn desk() -> Self {
        Self {
            n: vec![10, 100, 1000],
            lambda: vec![0.2],
            datasets_per_cell: 2,
            ..Self::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Invalid(format!(
                "unknown preset {other:?} (expected full or desk)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: &[f64]| {
            if v.is_empty() || v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                Err(Error::Invalid(format!("{name} must be a non-empty list of positive values")))
            } else {
                Ok(())
            }
        };
        positive("nu_true", &self.nu_true)?;
        positive("lambda", &self.lambda)?;
        positive("inits", &self.inits)?;
        if self.n.is_empty() || self.n.contains(&0) {
            return Err(Error::Invalid("n must be a non-empty list of positive sizes".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Invalid("no algorithms selected".into()));
        }
        if self.datasets_per_cell == 0 || self.iterations < 8 || self.k_aa == 0 || self.k_asis == 0 {
            return Err(Error::Invalid(
                "datasets_per_cell, k_aa and k_asis must be >= 1 and iterations >= 8".into(),
            ));
        }
        if self.inits.len() < 2 && self.iterations < 16 {
            return Err(Error::Invalid("R̂ needs at least two chains or 16 draws".into()));
        }
        Ok(())
    }

    /// Number of chains the study runs.
    pub fn chain_count(&self) -> usize {
        self.groups().len() * self.inits.len()
    }

    /// Every (algorithm, ν_true, n, λ, data set) group in canonical order.
    pub fn groups(&self) -> Vec<GroupKey> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &nu_true in &self.nu_true {
                for data_id in 0..self.datasets_per_cell {
                    for &lambda in &self.lambda {
                        for &algorithm in &self.algorithms {
                            out.push(GroupKey {
                                algorithm,
                                nu_true,
                                n,
                                lambda,
                                data_id,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    fn k_for(&self, alg: Algorithm) -> usize {
        match alg {
            Algorithm::Asis => self.k_asis,
            _ => self.k_aa,
        }
    }
}

/// Chains sharing a data set and prior; their inits form one R̂ group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupKey {
    pub algorithm: Algorithm,
    pub nu_true: f64,
    pub n: usize,
    pub lambda: f64,
    pub data_id: usize,
}

impl GroupKey {
    fn id(&self) -> (Algorithm, u64, usize, u64, usize) {
        (
            self.algorithm,
            self.nu_true.to_bits(),
            self.n,
            self.lambda.to_bits(),
            self.data_id,
        )
    }
}

/// Data set for (ν_true, n, data set); shared by all λ, algorithms and inits.
pub fn simulate_dataset(master_seed: u64, nu_true: f64, n: usize, data_id: usize) -> Result<ObservationSet> {
    let mut stream = RandomStream::new(master_seed, dataset_stream_id(nu_true, n, data_id));
    simulate_observations(&mut stream, nu_true, n)
}

pub fn dataset_stream_id(nu_true: f64, n: usize, data_id: usize) -> u64 {
    mix_ids(&[DATA_TAG, real_id(nu_true), n as u64, data_id as u64])
}

pub fn chain_stream_id(key: &GroupKey, init: f64) -> u64 {
    mix_ids(&[
        CHAIN_TAG,
        key.algorithm.id(),
        real_id(key.nu_true),
        key.n as u64,
        real_id(key.lambda),
        key.data_id as u64,
        real_id(init),
    ])
}

/// One chain of the study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alg: Algorithm,
    pub nu_true: f64,
    pub n: usize,
    pub lambda: f64,
    pub data_id: usize,
    pub init: f64,
    pub rne: f64,
    pub ess: f64,
    /// R̂ of the chain's group (+∞ sentinel for vanishing within-chain variance).
    pub rhat: f64,
    pub q10: f64,
    pub q50: f64,
    pub q90: f64,
    /// Zero variance after burn-in.
    pub stuck: bool,
    /// Sampler failure; numeric fields are NaN when set.
    pub error: Option<String>,
}

impl CellResult {
    pub fn key(&self) -> GroupKey {
        GroupKey {
            algorithm: self.alg,
            nu_true: self.nu_true,
            n: self.n,
            lambda: self.lambda,
            data_id: self.data_id,
        }
    }

    fn failed(key: &GroupKey, init: f64, msg: String) -> Self {
        Self {
            alg: key.algorithm,
            nu_true: key.nu_true,
            n: key.n,
            lambda: key.lambda,
            data_id: key.data_id,
            init,
            rne: f64::NAN,
            ess: f64::NAN,
            rhat: f64::NAN,
            q10: f64::NAN,
            q50: f64::NAN,
            q90: f64::NAN,
            stuck: false,
            error: Some(msg),
        }
    }

    /// Passes the R̂ screen and finished without error.
    pub fn survives(&self) -> bool {
        self.error.is_none() && self.rhat < RHAT_THRESHOLD
    }
}

/// Runs the chains of one group on the given data set.
pub fn run_group(config: &StudyConfig, key: &GroupKey, data: &ObservationSet) -> Vec<CellResult> {
    let prior = NuPrior { lambda: key.lambda, lower: 0.0 };
    let draws: Vec<Result<Vec<f64>>> = config
        .inits
        .iter()
        .map(|&init| {
            let spec = ChainSpec {
                algorithm: key.algorithm,
                iterations: config.iterations,
                burn_in: config.burn_in,
                init_nu: init,
                k_aa: config.k_for(key.algorithm),
                prior,
                seed: config.master_seed,
                stream_id: chain_stream_id(key, init),
            };
            run_chain(&spec, data, AmMode::Standard).map(|d| d.nu)
        })
        .collect();

    let ok: Vec<Vec<f64>> = draws.iter().filter_map(|d| d.as_ref().ok().cloned()).collect();
    let rhat = if ok.len() == draws.len() {
        ChainSet::new(ok).map(|set| split_rhat(&set).value).unwrap_or(f64::NAN)
    } else {
        f64::NAN
    };

    config
        .inits
        .iter()
        .zip(draws)
        .map(|(&init, d)| match d.and_then(|nu| chain_row(key, init, &nu, rhat)) {
            Ok(row) => row,
            Err(e) => CellResult::failed(key, init, e.to_string()),
        })
        .collect()
}

fn chain_row(key: &GroupKey, init: f64, nu: &[f64], rhat: f64) -> Result<CellResult> {
    let eff = efficiency(nu)?;
    let s = summarize(nu, &[0.1, 0.5, 0.9])?;
    Ok(CellResult {
        alg: key.algorithm,
        nu_true: key.nu_true,
        n: key.n,
        lambda: key.lambda,
        data_id: key.data_id,
        init,
        rne: eff.rne,
        ess: eff.ess,
        rhat,
        q10: s.quantiles[0],
        q50: s.quantiles[1],
        q90: s.quantiles[2],
        stuck: eff.degenerate,
        error: None,
    })
}

const HEADER: [&str; 14] = [
    "alg", "nu_true", "n", "lambda", "data_id", "init", "rne", "ess", "rhat", "q10", "q50", "q90",
    "stuck", "error",
];

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, r: &CellResult) -> Result<()> {
    w.write_record([
        r.alg.name().to_string(),
        r.nu_true.to_string(),
        r.n.to_string(),
        r.lambda.to_string(),
        r.data_id.to_string(),
        r.init.to_string(),
        fmt_real(r.rne),
        fmt_real(r.ess),
        fmt_real(r.rhat),
        fmt_real(r.q10),
        fmt_real(r.q50),
        fmt_real(r.q90),
        r.stuck.to_string(),
        r.error.clone().unwrap_or_default(),
    ])?;
    Ok(())
}

/// Writes rows with the results header.
pub fn write_results<W: Write>(out: W, rows: &[CellResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        write_row(&mut w, r)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_real(s: &str) -> Result<f64> {
    if s.is_empty() {
        return Ok(f64::NAN);
    }
    s.parse()
        .map_err(|_| Error::Invalid(format!("cannot parse {s:?} as a number")))
}

/// Reads a results CSV. Malformed trailing records (an interrupted write)
/// end the read; everything before them is returned.
pub fn read_results<R: std::io::Read>(input: R) -> Result<Vec<CellResult>> {
    let mut r = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let mut rows = Vec::new();
    for rec in r.records() {
        let Ok(rec) = rec else { break };
        if rec.len() != HEADER.len() {
            break;
        }
        let parsed = (|| -> Result<CellResult> {
            Ok(CellResult {
                alg: rec[0].parse()?,
                nu_true: parse_real(&rec[1])?,
                n: rec[2]
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad n {:?}", &rec[2])))?,
                lambda: parse_real(&rec[3])?,
                data_id: rec[4]
                    .parse()
                    .map_err(|_| Error::Invalid(format!("bad data_id {:?}", &rec[4])))?,
                init: parse_real(&rec[5])?,
                rne: parse_real(&rec[6])?,
                ess: parse_real(&rec[7])?,
                rhat: parse_real(&rec[8])?,
                q10: parse_real(&rec[9])?,
                q50: parse_real(&rec[10])?,
                q90: parse_real(&rec[11])?,
                stuck: rec[12] == *"true",
                error: (!rec[13].is_empty()).then(|| rec[13].to_string()),
            })
        })();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) => break,
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyManifest {
    pub format_version: u32,
    pub library_version: String,
    pub config: StudyConfig,
    pub total_groups: usize,
    pub completed_groups: usize,
    pub complete: bool,
}

/// Progress notification after each persisted batch.
#[derive(Clone, Copy, Debug)]
pub struct Progress {
    pub completed_groups: usize,
    pub total_groups: usize,
}

/// Runs (or resumes) the study in `out_dir` and returns all rows in
/// canonical order. Groups run `jobs` at a time; rows are written in
/// canonical order regardless of scheduling.
pub fn run_grid<P: FnMut(Progress)>(
    config: &StudyConfig,
    out_dir: &Path,
    resume: bool,
    jobs: usize,
    mut progress: P,
) -> Result<Vec<CellResult>> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let results_path = out_dir.join(RESULTS_FILE);
    let manifest_path = out_dir.join(MANIFEST_FILE);
    let groups = config.groups();

    let mut done_rows = Vec::new();
    if resume && manifest_path.exists() {
        let manifest: StudyManifest = serde_json::from_reader(File::open(&manifest_path)?)?;
        if manifest.config != *config {
            return Err(Error::Invalid(format!(
                "{} was written for a different configuration",
                manifest_path.display()
            )));
        }
        if results_path.exists() {
            done_rows = complete_groups(read_results(File::open(&results_path)?)?, config.inits.len());
        }
    }
    let done: HashSet<_> = done_rows.iter().map(|r| r.key().id()).collect();
    let mut all_rows = done_rows.clone();
    // Rewrite so that a partially written group from an interruption is dropped.
    write_results(BufWriter::new(File::create(&results_path)?), &done_rows)?;

    let pending: Vec<GroupKey> = groups.iter().copied().filter(|g| !done.contains(&g.id())).collect();
    let mut completed = groups.len() - pending.len();
    write_manifest(&manifest_path, config, groups.len(), completed)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;

    // Groups sharing a data set are batched so it is simulated once.
    let mut batches: Vec<Vec<GroupKey>> = Vec::new();
    for g in pending {
        match batches.last_mut() {
            Some(b) if same_data(&b[0], &g) => b.push(g),
            _ => batches.push(vec![g]),
        }
    }
    let chunk = jobs.max(1);
    for window in batches.chunks(chunk) {
        let results: Vec<Vec<CellResult>> = pool.install(|| {
            window
                .par_iter()
                .flat_map_iter(|batch| {
                    let k = &batch[0];
                    let data = simulate_dataset(config.master_seed, k.nu_true, k.n, k.data_id);
                    batch
                        .iter()
                        .map(|key| match &data {
                            Ok(d) => run_group(config, key, d),
                            Err(e) => config
                                .inits
                                .iter()
                                .map(|&i| CellResult::failed(key, i, e.to_string()))
                                .collect(),
                        })
                        .collect::<Vec<_>>()
                })
                .collect()
        });
        let file = OpenOptions::new().append(true).open(&results_path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(BufWriter::new(file));
        for rows in &results {
            for r in rows {
                write_row(&mut w, r)?;
            }
            completed += 1;
        }
        w.flush()?;
        drop(w);
        all_rows.extend(results.into_iter().flatten());
        write_manifest(&manifest_path, config, groups.len(), completed)?;
        progress(Progress {
            completed_groups: completed,
            total_groups: groups.len(),
        });
    }

    // Canonical order even when resuming from an older partial file.
    let order: BTreeMap<_, usize> = groups.iter().enumerate().map(|(i, g)| (g.id(), i)).collect();
    all_rows.sort_by_key(|r| order.get(&r.key().id()).copied().unwrap_or(usize::MAX));
    Ok(all_rows)
}

fn same_data(a: &GroupKey, b: &GroupKey) -> bool {
    a.nu_true == b.nu_true && a.n == b.n && a.data_id == b.data_id
}

/// Keeps only groups with all their chains present.
fn complete_groups(rows: Vec<CellResult>, per_group: usize) -> Vec<CellResult> {
    let mut counts: BTreeMap<_, usize> = BTreeMap::new();
    for r in &rows {
        *counts.entry(r.key().id()).or_default() += 1;
    }
    rows.into_iter()
        .filter(|r| counts[&r.key().id()] == per_group)
        .collect()
}

fn write_manifest(path: &PathBuf, config: &StudyConfig, total: usize, completed: usize) -> Result<()> {
    let manifest = StudyManifest {
        format_version: FORMAT_VERSION,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        total_groups: total,
        completed_groups: completed,
        complete: completed == total,
    };
    let tmp = path.with_extension("json.tmp");
    let mut f = BufWriter::new(File::create(&tmp)?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    f.flush()?;
    drop(f);
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Mean RNE (percent) over surviving chains of one (algorithm, n, ν_true) cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RneCell {
    pub algorithm: Algorithm,
    pub n: usize,
    pub nu_true: f64,
    /// `None` when no chain survives the R̂ screen.
    pub mean_rne_pct: Option<f64>,
    pub chains: usize,
    pub surviving: usize,
}

/// Pools λ, data sets and inits; chains from groups with R̂ ≥ 1.1 (or
/// errors) are dropped before averaging.
pub fn aggregate_mean_rne(rows: &[CellResult]) -> Vec<RneCell> {
    let mut cells: BTreeMap<(Algorithm, usize, u64), (f64, usize, usize, f64)> = BTreeMap::new();
    for r in rows {
        let e = cells
            .entry((r.alg, r.n, r.nu_true.to_bits()))
            .or_insert((0.0, 0, 0, r.nu_true));
        e.2 += 1;
        if r.survives() {
            e.0 += r.rne;
            e.1 += 1;
        }
    }
    let mut out: Vec<RneCell> = cells
        .into_iter()
        .map(|((algorithm, n, _), (sum, surviving, chains, nu_true))| RneCell {
            algorithm,
            n,
            nu_true,
            mean_rne_pct: (surviving > 0).then(|| 100.0 * sum / surviving as f64),
            chains,
            surviving,
        })
        .collect();
    out.sort_by(|a, b| {
        (a.algorithm, a.n)
            .cmp(&(b.algorithm, b.n))
            .then(a.nu_true.total_cmp(&b.nu_true))
    });
    out
}

/// `alg,n,nu_true,mean_rne_pct,chains,surviving` with `-` for empty cells.
pub fn write_rne_table<W: Write>(out: W, cells: &[RneCell]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["alg", "n", "nu_true", "mean_rne_pct", "chains", "surviving"])?;
    for c in cells {
        w.write_record([
            c.algorithm.name().to_string(),
            c.n.to_string(),
            c.nu_true.to_string(),
            c.mean_rne_pct.map(|v| format!("{v:.1}")).unwrap_or_else(|| "-".into()),
            c.chains.to_string(),
            c.surviving.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Selects rows for the interval table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalFilter {
    pub n: usize,
    pub lambda: f64,
    pub data_id: usize,
}

impl Default for IntervalFilter {
    fn default() -> Self {
        Self {
            n: 1000,
            lambda: 0.2,
            data_id: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub nu_true: f64,
    pub algorithm: Algorithm,
    pub init: f64,
    pub q10: f64,
    pub q90: f64,
    /// The group failed the R̂ screen.
    pub flagged: bool,
}

/// (q10, q90) per (ν_true, algorithm, init) for one data set.
pub fn interval_table(rows: &[CellResult], filter: &IntervalFilter) -> Vec<IntervalRow> {
    let mut out: Vec<IntervalRow> = rows
        .iter()
        .filter(|r| r.n == filter.n && r.lambda == filter.lambda && r.data_id == filter.data_id)
        .map(|r| IntervalRow {
            nu_true: r.nu_true,
            algorithm: r.alg,
            init: r.init,
            q10: r.q10,
            q90: r.q90,
            flagged: !r.survives(),
        })
        .collect();
    out.sort_by(|a, b| {
        a.nu_true
            .total_cmp(&b.nu_true)
            .then(a.algorithm.cmp(&b.algorithm))
            .then(a.init.total_cmp(&b.init))
    });
    out
}

/// `nu_true,alg,init,q10,q90,flag` with `*` marking screened-out groups.
pub fn write_interval_table<W: Write>(out: W, rows: &[IntervalRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["nu_true", "alg", "init", "q10", "q90", "flag"])?;
    for r in rows {
        w.write_record([
            r.nu_true.to_string(),
            r.algorithm.name().to_string(),
            r.init.to_string(),
            format!("{:.3}", r.q10),
            format!("{:.3}", r.q90),
            if r.flagged { "*".into() } else { String::new() },
        ])?;
    }
    w.flush()?;
    Ok(())
}
