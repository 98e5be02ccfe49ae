//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use cellfree_eh::experiment::{
    analyze, simulate, PointResult, SavedScenario, Scenario, SweepPoint,
};
use cellfree_eh::markov::{
    consumption_energy, harvest_cdf, n_step_distribution, StateDistribution,
};
use cellfree_eh::montecarlo::validation::{Corruption, Term, ValidationReport, ValidationSuite};
use cellfree_eh::montecarlo::{empirical_cdf, RunMetadata, RunResult};
use cellfree_eh::SystemConfig;
use log::info;
use serde::{Deserialize, Serialize};

use crate::output::{float, read_json, write_json, CsvFile};
use crate::settings::Experiment;

/// Written next to the results of every configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub aps: usize,
    pub antennas: usize,
    pub intervals: usize,
    pub topologies: usize,
    pub workers: usize,
    pub consumed_energy_j: f64,
    pub topology_file: Option<PathBuf>,
    pub wall_time_s: f64,
}

/// Median-energy UE of one topology, or the average over topologies.
#[derive(Clone, Debug)]
pub struct SummaryRow {
    pub topology: String,
    pub ue: Option<usize>,
    pub energy: f64,
    pub ks: f64,
    pub triple: [f64; 3],
    pub pr_neg_analytical: f64,
    pub pr_neg_empirical: f64,
}

const SUMMARY_HEADER: [&str; 10] = [
    "topology",
    "UE",
    "mean_energy_J",
    "ks_distance",
    "p_down",
    "p_stay",
    "p_up",
    "pr_neg_analytical",
    "pr_neg_empirical",
    "consumed_energy_J",
];

fn topology_dir(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("topology_{t}"))
}

fn point_dir(out: &Path, p: SweepPoint) -> PathBuf {
    out.join(format!("L{}_N{}", p.aps, p.antennas))
}

fn summary_row(r: &PointResult) -> Result<SummaryRow> {
    let k = r.median_ue;
    let t = r.chains[k].triple;
    Ok(SummaryRow {
        topology: r.scenario.topology_index.to_string(),
        ue: Some(k + 1),
        energy: r.empirical[k].mean_e,
        ks: r.ks_distance(k)?,
        triple: [t.down, t.stay, t.up],
        pr_neg_analytical: r.negative_analytical[k],
        pr_neg_empirical: r.negative_empirical[k],
    })
}

fn pooled(rows: &[SummaryRow]) -> SummaryRow {
    let n = rows.len() as f64;
    let avg = |f: &dyn Fn(&SummaryRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    SummaryRow {
        topology: "pooled".into(),
        ue: None,
        energy: avg(&|r| r.energy),
        ks: avg(&|r| r.ks),
        triple: [
            avg(&|r| r.triple[0]),
            avg(&|r| r.triple[1]),
            avg(&|r| r.triple[2]),
        ],
        pr_neg_analytical: avg(&|r| r.pr_neg_analytical),
        pr_neg_empirical: avg(&|r| r.pr_neg_empirical),
    }
}

fn summary_fields(r: &SummaryRow, consumed: f64) -> Vec<String> {
    vec![
        r.topology.clone(),
        r.ue.map_or(String::new(), |u| u.to_string()),
        float(r.energy),
        float(r.ks),
        float(r.triple[0]),
        float(r.triple[1]),
        float(r.triple[2]),
        float(r.pr_neg_analytical),
        float(r.pr_neg_empirical),
        float(consumed),
    ]
}

fn write_summary(dir: &Path, rows: &[SummaryRow], consumed: f64) -> Result<()> {
    let mut csv = CsvFile::create(&dir.join("summary.csv"), &SUMMARY_HEADER)?;
    for r in rows {
        csv.row(summary_fields(r, consumed))?;
    }
    csv.row(summary_fields(&pooled(rows), consumed))?;
    csv.finish()
}

fn write_samples(dir: &Path, run: &RunResult) -> Result<()> {
    let mut csv = CsvFile::create(
        &dir.join("samples.csv"),
        &["interval", "ue", "I_E", "E_E", "dE"],
    )?;
    let nk = run.num_ues;
    for (j, ((i, e), d)) in run
        .received
        .iter()
        .zip(&run.harvested)
        .zip(&run.delta)
        .enumerate()
    {
        csv.row([
            (j / nk).to_string(),
            (j % nk + 1).to_string(),
            float(*i),
            float(*e),
            float(*d),
        ])?;
    }
    csv.finish()
}

fn read_samples(path: &Path, config: &SystemConfig, metadata: RunMetadata) -> Result<RunResult> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let nk = config.num_ues;
    let (mut received, mut harvested, mut delta) = (Vec::new(), Vec::new(), Vec::new());
    for (j, rec) in reader.records().enumerate() {
        let rec = rec?;
        ensure!(
            rec.len() == 5,
            "{}: row {j} has {} fields",
            path.display(),
            rec.len()
        );
        let interval: usize = rec[0].parse()?;
        let ue: usize = rec[1].parse()?;
        ensure!(
            interval == j / nk && ue == j % nk + 1,
            "{}: expected interval {} ue {} on row {j}",
            path.display(),
            j / nk,
            j % nk + 1
        );
        received.push(rec[2].parse()?);
        harvested.push(rec[3].parse()?);
        delta.push(rec[4].parse()?);
    }
    ensure!(
        received.len() == metadata.intervals * nk,
        "{}: {} rows, expected {}",
        path.display(),
        received.len(),
        metadata.intervals * nk
    );
    Ok(RunResult {
        num_ues: nk,
        consumed: consumption_energy(config),
        received,
        harvested,
        delta,
        metadata,
    })
}

/// Everything derived from the samples of one topology.
fn write_analysis(dir: &Path, r: &PointResult, steps: &[usize]) -> Result<()> {
    let k = r.median_ue;
    let harvested = r.run.harvested_of(k);
    let ecdf = empirical_cdf(&harvested)?;
    let mut csv = CsvFile::create(
        &dir.join("cdf.csv"),
        &["energy_J", "empirical_cdf", "analytical_cdf"],
    )?;
    let support = ecdf.support();
    for (j, &x) in support.iter().enumerate() {
        if support.get(j + 1) == Some(&x) {
            continue;
        }
        csv.row([
            float(x),
            float(ecdf.eval(x)),
            float(harvest_cdf(x, &r.fits[k])),
        ])?;
    }
    csv.finish()?;

    let aps = r.scenario.config.num_aps.to_string();
    let mut csv = CsvFile::create(
        &dir.join("transitions.csv"),
        &["L", "UE", "p_down", "p_stay", "p_up"],
    )?;
    for (ue, chain) in r.chains.iter().enumerate() {
        let t = chain.triple;
        csv.row([
            aps.clone(),
            (ue + 1).to_string(),
            float(t.down),
            float(t.stay),
            float(t.up),
        ])?;
    }
    csv.finish()?;

    let mut csv = CsvFile::create(
        &dir.join("statistics.csv"),
        &[
            "UE",
            "mean_I_analytical",
            "mean_I_empirical",
            "var_I_analytical",
            "var_I_empirical",
            "mean_E_analytical",
            "mean_E_empirical",
            "var_E_analytical",
            "var_E_empirical",
            "gamma_shape",
            "gamma_scale",
            "ks_distance",
            "pr_neg_analytical",
            "pr_neg_empirical",
        ],
    )?;
    for ue in 0..r.run.num_ues {
        let (a, e, f) = (&r.analytical[ue], &r.empirical[ue], &r.fits[ue]);
        csv.row(
            [(ue + 1).to_string()].into_iter().chain(
                [
                    a.mean_i,
                    e.mean_i,
                    a.var_i,
                    e.var_i,
                    a.mean_e,
                    e.mean_e,
                    a.var_e,
                    e.var_e,
                    f.shape,
                    f.scale,
                    r.ks_distance(ue)?,
                    r.negative_analytical[ue],
                    r.negative_empirical[ue],
                ]
                .map(float),
            ),
        )?;
    }
    csv.finish()?;

    let chain = &r.chains[k];
    let mut sorted = steps.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut csv = CsvFile::create(
        &dir.join("markov_evolution.csv"),
        &["n", "state", "probability"],
    )?;
    let mut dist = StateDistribution::uniform(chain.states);
    for n in sorted {
        dist = n_step_distribution(chain, &dist, n - dist.step)?;
        for (s, p) in dist.probs.iter().enumerate() {
            csv.row([n.to_string(), (s + 1).to_string(), float(*p)])?;
        }
    }
    csv.finish()
}

/// Simulates every topology of one configuration into `dir`.
pub fn run_configuration(
    config: &SystemConfig,
    exp: &Experiment,
    workers: usize,
    topology_file: Option<&Path>,
    dir: &Path,
) -> Result<Vec<SummaryRow>> {
    let start = Instant::now();
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let saved: Option<SavedScenario> = topology_file.map(read_json).transpose()?;
    if saved.is_some() && exp.topologies != 1 {
        bail!(
            "--topology-file fixes a single topology, got topologies = {}",
            exp.topologies
        );
    }
    let mut rows = Vec::new();
    for t in 0..exp.topologies {
        let scenario = match &saved {
            Some(s) => Scenario::from_saved(config, t as u32, s.clone())?,
            None => Scenario::build(config, t as u32)?,
        };
        info!(
            "L={} N={} topology {t}: {} intervals",
            config.num_aps, config.antennas, exp.intervals
        );
        let result = simulate(scenario, exp.intervals, workers)?;
        let tdir = topology_dir(dir, t);
        std::fs::create_dir_all(&tdir)?;
        write_json(&tdir.join("topology.json"), &result.scenario.saved())?;
        write_samples(&tdir, &result.run)?;
        write_analysis(&tdir, &result, &exp.markov_steps)?;
        rows.push(summary_row(&result)?);
    }
    let consumed = consumption_energy(config);
    write_summary(dir, &rows, consumed)?;
    write_json(&dir.join("config.json"), config)?;
    write_json(
        &dir.join("run_manifest.json"),
        &Manifest {
            version: env!("CARGO_PKG_VERSION").into(),
            seed: config.seed,
            config_hash: config.hash_hex(),
            aps: config.num_aps,
            antennas: config.antennas,
            intervals: exp.intervals,
            topologies: exp.topologies,
            workers,
            consumed_energy_j: consumed,
            topology_file: topology_file.map(Path::to_path_buf),
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    )?;
    Ok(rows)
}

pub fn cmd_simulate(exp: &Experiment, topology_file: Option<&Path>, out: &Path) -> Result<()> {
    let rows = run_configuration(&exp.system, exp, exp.worker_count(), topology_file, out)?;
    print_summary(&exp.system, &rows);
    Ok(())
}

fn print_summary(config: &SystemConfig, rows: &[SummaryRow]) {
    let p = pooled(rows);
    println!(
        "L={:<3} N={:<4} median UE energy {:.4e} J  KS {:.3}  p_down {:.3e}  p_up {:.3e}  Pr(dE<=0) {:.3} (empirical {:.3})",
        config.num_aps, config.antennas, p.energy, p.ks, p.triple[0], p.triple[2], p.pr_neg_analytical, p.pr_neg_empirical
    );
}

pub fn cmd_sweep(exp: &Experiment, out: &Path) -> Result<()> {
    let start = Instant::now();
    let workers = exp.worker_count();
    std::fs::create_dir_all(out)?;
    let mut summary = CsvFile::create(
        &out.join("sweep_summary.csv"),
        &[&["L", "N"][..], &SUMMARY_HEADER[..]].concat(),
    )?;
    let mut table = CsvFile::create(
        &out.join("transitions.csv"),
        &["L", "topology", "UE", "p_down", "p_stay", "p_up"],
    )?;
    let mut points = Vec::new();
    for p in exp.points()? {
        let config = p.apply(&exp.system);
        let dir = point_dir(out, p);
        let rows = run_configuration(&config, exp, workers, None, &dir)?;
        print_summary(&config, &rows);
        let consumed = consumption_energy(&config);
        for r in rows.iter().chain(std::iter::once(&pooled(&rows))) {
            let head = [p.aps.to_string(), p.antennas.to_string()];
            summary.row(head.into_iter().chain(summary_fields(r, consumed)))?;
            if let Some(ue) = r.ue {
                table.row([
                    p.aps.to_string(),
                    r.topology.clone(),
                    ue.to_string(),
                    float(r.triple[0]),
                    float(r.triple[1]),
                    float(r.triple[2]),
                ])?;
            }
        }
        points.push(dir.file_name().map(|s| s.to_string_lossy().into_owned()));
    }
    summary.finish()?;
    table.finish()?;
    write_json(
        &out.join("run_manifest.json"),
        &serde_json::json!({
            "version": env!("CARGO_PKG_VERSION"),
            "seed": exp.system.seed,
            "config_hash": exp.system.hash_hex(),
            "intervals": exp.intervals,
            "topologies": exp.topologies,
            "workers": workers,
            "points": points,
            "wall_time_s": start.elapsed().as_secs_f64(),
        }),
    )
}

/// Recomputes the analytical layers of a finished `simulate` run.
pub fn cmd_analyze(exp: &Experiment, input: &Path, out: &Path) -> Result<()> {
    let config: SystemConfig = read_json(&input.join("config.json"))?;
    let manifest: Manifest = read_json(&input.join("run_manifest.json"))?;
    ensure!(
        config.hash_hex() == manifest.config_hash,
        "config.json does not match the manifest hash in {}",
        input.display()
    );
    std::fs::create_dir_all(out)?;
    let mut rows = Vec::new();
    for t in 0..manifest.topologies {
        let tdir = topology_dir(input, t);
        let saved: SavedScenario = read_json(&tdir.join("topology.json"))?;
        let scenario = Scenario::from_saved(&config, t as u32, saved)?;
        let metadata = RunMetadata {
            config_hash: manifest.config_hash.clone(),
            seed: manifest.seed,
            intervals: manifest.intervals,
            topology_index: t as u32,
        };
        let run = read_samples(&tdir.join("samples.csv"), &config, metadata)?;
        let result = analyze(scenario, run)?;
        let odir = topology_dir(out, t);
        std::fs::create_dir_all(&odir)?;
        write_analysis(&odir, &result, &exp.markov_steps)?;
        rows.push(summary_row(&result)?);
    }
    write_summary(out, &rows, consumption_energy(&config))?;
    print_summary(&config, &rows);
    Ok(())
}

pub struct ValidateOptions {
    pub corrupt_term: Option<String>,
    pub corrupt_factor: f64,
}

/// Runs the oracle suite; returns whether every row passed.
pub fn cmd_validate(exp: &Experiment, opts: &ValidateOptions, out: &Path) -> Result<bool> {
    let corrupt = opts
        .corrupt_term
        .as_deref()
        .map(|s| -> Result<Corruption> {
            Ok(Corruption {
                term: s.parse::<Term>()?,
                factor: opts.corrupt_factor,
            })
        })
        .transpose()?;
    let suite = ValidationSuite {
        instances: exp.validation.instances,
        draws: exp.validation.draws,
        seed: exp.system.seed,
        include_terms: exp.validation.terms,
        corrupt,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(exp.worker_count())
        .build()?;
    let report: ValidationReport = pool.install(|| suite.run())?;
    std::fs::create_dir_all(out)?;
    let mut csv = CsvFile::create(
        &out.join("validation.csv"),
        &[
            "instance",
            "term",
            "detail",
            "analytic",
            "oracle",
            "standard_error",
            "tolerance",
            "pass",
        ],
    )?;
    for r in &report.rows {
        csv.row([
            r.instance.to_string(),
            r.term.name().to_string(),
            r.detail.clone(),
            float(r.analytic),
            float(r.estimate),
            float(r.standard_error),
            float(r.tolerance),
            r.pass.to_string(),
        ])?;
    }
    csv.finish()?;
    print!("{}", report.table());
    let failed: Vec<String> = report
        .failures()
        .map(|r| format!("{} (instance {}, {})", r.term.name(), r.instance, r.detail))
        .collect();
    if failed.is_empty() {
        println!("all {} checks passed", report.rows.len());
    } else {
        println!("{} of {} checks failed:", failed.len(), report.rows.len());
        for f in &failed {
            println!("  {f}");
        }
    }
    Ok(failed.is_empty())
}
