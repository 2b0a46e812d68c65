use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use minds_core::diagnostics::MannKendall;
use minds_core::gibbs::{resolve_identifiability, run_chain_with};
use minds_core::io::{
    load_dataset, read_config, read_json, read_labels, save_dataset, write_json, write_labels_csv, write_trace_csv,
};
use minds_core::metrics::{
    align_labels, bayes_error, calinski_harabasz, classification_error, jaccard_distance, one_hot,
};
use minds_core::predict::{predict_memberships, write_prediction_csv, PredictConfig, Prediction};
use minds_core::rng::derive_seed;
use minds_core::selection::{information_criterion, select_k, IcReport};
use minds_core::sim::{
    generate_dataset, generate_truth, run_experiment, write_aggregate_csv, write_replicates_csv, ExperimentConfig,
    Method, SimulationDesign,
};
use minds_core::{MixedDataset, ModelConfig, ParameterState};

use crate::manifest::RunRecord;
use crate::{ChainFlags, Command};

pub const ESTIMATE_FILE: &str = "estimate.json";
pub const FIT_FILE: &str = "fit.json";

fn create(dir: &Path, name: &str, record: &mut RunRecord) -> Result<BufWriter<File>> {
    record.output(name);
    let path = dir.join(name);
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn json_out<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T, record: &mut RunRecord) -> Result<()> {
    record.output(name);
    write_json(&dir.join(name), value)?;
    Ok(())
}

fn load(path: &Path, sidecar: Option<&Path>, record: &mut RunRecord) -> Result<MixedDataset> {
    record.input(path)?;
    let sidecar_path = sidecar
        .map(Path::to_path_buf)
        .unwrap_or_else(|| path.with_extension("json"));
    record.input(&sidecar_path)?;
    let ingested = load_dataset(path, Some(&sidecar_path))?;
    if !ingested.dropped_rows.is_empty() {
        log::warn!(
            "{}: dropped {} rows with missing cells",
            path.display(),
            ingested.dropped_rows.len()
        );
    }
    Ok(ingested.data)
}

fn model_config(
    path: Option<&Path>,
    flags: &ChainFlags,
    seed: Option<u64>,
    record: &mut RunRecord,
) -> Result<ModelConfig> {
    let mut config = match path {
        Some(p) => {
            record.input(p)?;
            read_config(p)?
        }
        None => ModelConfig::default(),
    };
    flags.apply(&mut config);
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;
    Ok(config)
}

pub fn run(command: &Command, seed: Option<u64>) -> Result<()> {
    match command {
        Command::Simulate { design, out, n } => simulate(design, out, *n, seed),
        Command::Fit {
            data,
            sidecar,
            config,
            out,
            chain,
            save_draws,
        } => fit(
            data,
            sidecar.as_deref(),
            config.as_deref(),
            out,
            chain,
            *save_draws,
            seed,
        ),
        Command::Predict {
            test,
            sidecar,
            fit_dir,
            out,
            iterations,
            burn_in,
        } => predict(test, sidecar.as_deref(), fit_dir, out, *iterations, *burn_in, seed),
        Command::SelectK {
            data,
            sidecar,
            config,
            out,
            k_range,
            chain,
        } => select(data, sidecar.as_deref(), config.as_deref(), out, k_range, chain, seed),
        Command::Metrics {
            truth,
            prediction,
            data,
            out,
        } => metrics(truth, prediction, data.as_deref(), out),
        Command::Benchmark {
            design,
            out,
            method,
            replicates,
            chain,
            training_only,
        } => benchmark(design, out, method, *replicates, chain, *training_only, seed),
    }
}

#[derive(Serialize)]
struct SimulateRun<'a> {
    design: &'a SimulationDesign,
    n_train: usize,
}

fn simulate(design_path: &Path, out: &Path, n: Option<usize>, seed: Option<u64>) -> Result<()> {
    let mut record = RunRecord::start("simulate");
    record.input(design_path)?;
    let mut design: SimulationDesign = read_json(design_path)?;
    if let Some(s) = seed {
        design.seed = s;
    }
    design.validate()?;
    let n_train = match n.or(design.training_sizes.first().copied()) {
        Some(n) if n > 0 => n,
        _ => bail!("no training size: pass --n or set training_sizes"),
    };
    fs::create_dir_all(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "truth", 0));
    let truth = generate_truth(&design, &mut rng)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "train", 0));
    let train = generate_dataset(&truth, n_train, &mut rng);
    json_out(out, "truth.json", &truth, &mut record)?;
    save_dataset(&out.join("train.csv"), &train.data)?;
    record.output("train.csv");
    record.output("train.json");
    write_labels_csv(
        create(out, "train_labels.csv", &mut record)?,
        &train.data.subject_ids,
        train.labels(),
    )?;

    if design.test_size > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "test", 0));
        let test = generate_dataset(&truth, design.test_size, &mut rng);
        save_dataset(&out.join("test.csv"), &test.data)?;
        record.output("test.csv");
        record.output("test.json");
        write_labels_csv(
            create(out, "test_labels.csv", &mut record)?,
            &test.data.subject_ids,
            test.labels(),
        )?;
    }
    info!("simulated {n_train} training subjects into {}", out.display());
    let seed = design.seed;
    record.finish(
        out,
        &SimulateRun {
            design: &design,
            n_train,
        },
        seed,
    )
}

#[derive(Serialize)]
struct FitSummary {
    config: ModelConfig,
    ic: IcReport,
    trend: MannKendall,
    identifiable: bool,
    canonical: bool,
    canonicalization_warning: Option<String>,
    draw_iterations: Vec<usize>,
    relabelings: Vec<Vec<usize>>,
}

fn fit(
    data_path: &Path,
    sidecar: Option<&Path>,
    config_path: Option<&Path>,
    out: &Path,
    flags: &ChainFlags,
    save_draws: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut record = RunRecord::start("fit");
    let data = load(data_path, sidecar, &mut record)?;
    let config = model_config(config_path, flags, seed, &mut record)?;
    fs::create_dir_all(out)?;

    let checkpoint_path = out.join("checkpoint.json");
    let mut sink = |c: &minds_core::gibbs::Checkpoint| c.save(&checkpoint_path);
    let chain = run_chain_with(&data, &config, &mut sink)?;
    record.iterations(config.n_iterations);
    if config.checkpoint_interval > 0 && checkpoint_path.exists() {
        record.output("checkpoint.json");
    }
    if !chain.trend.trend_free(0.01) {
        log::warn!("retained log-likelihoods show a trend (p = {:.3})", chain.trend.p_value);
    }

    let ic = information_criterion(&chain, &data)?;
    let canon = resolve_identifiability(&chain, &config);
    json_out(out, ESTIMATE_FILE, &canon.state, &mut record)?;
    write_trace_csv(create(out, "trace.csv", &mut record)?, &chain.trace)?;
    let memberships = Prediction {
        membership_probabilities: chain.membership_probabilities.clone(),
        hard_labels: chain.hard_labels().to_vec(),
    };
    write_prediction_csv(
        create(out, "memberships.csv", &mut record)?,
        &data.subject_ids,
        &memberships,
    )?;
    if save_draws {
        json_out(out, "draws.json", &chain.draws, &mut record)?;
    }
    let summary = FitSummary {
        config: config.clone(),
        ic,
        trend: chain.trend,
        identifiable: chain.identifiable,
        canonical: canon.canonical,
        canonicalization_warning: canon.warning,
        draw_iterations: chain.draw_iterations.clone(),
        relabelings: chain.relabelings.clone(),
    };
    json_out(out, FIT_FILE, &summary, &mut record)?;
    info!("fit k = {}: IC {:.2}", config.n_clusters, ic.ic);
    record.finish(out, &config, config.seed)
}

fn predict(
    test_path: &Path,
    sidecar: Option<&Path>,
    fit_dir: &Path,
    out: &Path,
    iterations: Option<usize>,
    burn_in: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut record = RunRecord::start("predict");
    let test = load(test_path, sidecar, &mut record)?;
    let estimate_path = fit_dir.join(ESTIMATE_FILE);
    record.input(&estimate_path)?;
    let estimate: ParameterState = read_json(&estimate_path)?;
    let mut config = PredictConfig::default();
    if let Some(n) = iterations {
        config.n_iterations = n;
    }
    if let Some(b) = burn_in {
        config.burn_in = b;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    fs::create_dir_all(out)?;
    let prediction = predict_memberships(&test, &estimate, &config)?;
    record.iterations(config.n_iterations);
    write_prediction_csv(
        create(out, "prediction.csv", &mut record)?,
        &test.subject_ids,
        &prediction,
    )?;
    record.finish(out, &config, config.seed)
}

/// Parse `3..6` or `3..=6` (both inclusive) or `3,4,5,6`.
pub fn parse_k_range(s: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse())
            .collect::<std::result::Result<_, _>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        bail!("k range '{s}' must list positive cluster counts");
    }
    Ok(ks)
}

#[derive(Serialize)]
struct SelectRun<'a> {
    template: &'a ModelConfig,
    k: &'a [usize],
}

fn select(
    data_path: &Path,
    sidecar: Option<&Path>,
    config_path: Option<&Path>,
    out: &Path,
    k: &str,
    flags: &ChainFlags,
    seed: Option<u64>,
) -> Result<()> {
    let mut record = RunRecord::start("select-k");
    let data = load(data_path, sidecar, &mut record)?;
    let template = model_config(config_path, flags, seed, &mut record)?;
    let ks = parse_k_range(k)?;
    fs::create_dir_all(out)?;
    let selection = select_k(&data, &template, &ks)?;
    record.iterations(template.n_iterations * ks.len());

    let mut w = csv::Writer::from_writer(create(out, "ic.csv", &mut record)?);
    w.write_record([
        "k",
        "seed",
        "mean_log_likelihood",
        "plugin_log_likelihood",
        "complexity",
        "ic",
        "converged",
        "error",
    ])?;
    let float = |x: f64| minds_core::io::format_float(x);
    for row in &selection.rows {
        let r = row.report;
        w.write_record([
            row.k.to_string(),
            row.seed.to_string(),
            r.map_or(String::new(), |r| float(r.mean_log_likelihood)),
            r.map_or(String::new(), |r| float(r.plugin_log_likelihood)),
            r.map_or(String::new(), |r| float(r.complexity)),
            r.map_or(String::new(), |r| float(r.ic)),
            row.converged.map_or(String::new(), |c| c.to_string()),
            row.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    json_out(out, "selection.json", &selection, &mut record)?;
    match selection.best_k {
        Some(k) => println!("best k = {k}"),
        None => bail!("every candidate fit failed"),
    }
    record.finish(
        out,
        &SelectRun {
            template: &template,
            k: &ks,
        },
        template.seed,
    )
}

#[derive(Serialize)]
struct MetricsRun {
    n_subjects: usize,
    n_clusters: usize,
}

fn metrics(truth_path: &Path, prediction_path: &Path, data_path: Option<&Path>, out: &Path) -> Result<()> {
    let mut record = RunRecord::start("metrics");
    record.input(truth_path)?;
    record.input(prediction_path)?;
    let truth = read_labels(File::open(truth_path)?)?;
    let pred = read_labels(File::open(prediction_path)?)?;

    let index: std::collections::HashMap<&str, usize> = truth
        .subject_ids
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let rows = pred
        .subject_ids
        .iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .with_context(|| format!("subject '{id}' has no true label"))
        })
        .collect::<Result<Vec<_>>>()?;
    let true_labels: Vec<usize> = rows.iter().map(|&i| truth.labels[i]).collect();

    let nc = pred
        .probabilities
        .as_ref()
        .map(|p| p.ncols())
        .unwrap_or(0)
        .max(pred.labels.iter().chain(&true_labels).max().map_or(0, |m| m + 1));
    let probs = match &pred.probabilities {
        Some(p) if p.ncols() == nc => p.clone(),
        _ => one_hot(&pred.labels, nc)?,
    };
    let map = align_labels(&true_labels, &probs)?;

    let mut table = vec![
        ("bayes_error", bayes_error(&true_labels, &probs, &map)?),
        (
            "classification_error",
            classification_error(&true_labels, &pred.labels, &map)?,
        ),
        ("jaccard_distance", jaccard_distance(&true_labels, &pred.labels)?),
    ];
    if let Some(dp) = data_path {
        let data = load(dp, None, &mut record)?;
        let index: std::collections::HashMap<&str, usize> = data
            .subject_ids
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i))
            .collect();
        let rows = pred
            .subject_ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .with_context(|| format!("subject '{id}' missing from data"))
            })
            .collect::<Result<Vec<_>>>()?;
        let features = data.select_rows(&rows).feature_matrix();
        match calinski_harabasz(&features, &pred.labels) {
            Ok(ch) => table.push(("calinski_harabasz", ch)),
            Err(e) => log::warn!("Calinski-Harabasz skipped: {e}"),
        }
    }

    fs::create_dir_all(out)?;
    let mut w = csv::Writer::from_writer(create(out, "metrics.csv", &mut record)?);
    w.write_record(["metric", "value"])?;
    for (name, value) in &table {
        w.write_record([name.to_string(), minds_core::io::format_float(*value)])?;
        println!("{name}: {value:.4}");
    }
    w.flush()?;
    record.finish(
        out,
        &MetricsRun {
            n_subjects: true_labels.len(),
            n_clusters: nc,
        },
        0,
    )
}

fn benchmark(
    design_path: &Path,
    out: &Path,
    methods: &[Method],
    replicates: Option<usize>,
    flags: &ChainFlags,
    training_only: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut record = RunRecord::start("benchmark");
    record.input(design_path)?;
    let mut config: ExperimentConfig = read_json(design_path)?;
    if !methods.is_empty() {
        config.methods = methods.to_vec();
    }
    if let Some(r) = replicates {
        config.design.n_replicates = r;
    }
    if let Some(s) = seed {
        config.design.seed = s;
    }
    config.training_only |= training_only;
    flags.apply(&mut config.model);
    fs::create_dir_all(out)?;

    let experiment = run_experiment(&config)?;
    let fits = experiment.outcomes.iter().filter(|o| o.method == Method::Minds).count();
    record.iterations(fits * config.model.n_iterations);
    write_replicates_csv(create(out, "replicates.csv", &mut record)?, &experiment)?;
    let aggregate = experiment.aggregate();
    write_aggregate_csv(create(out, "aggregate.csv", &mut record)?, &aggregate)?;
    if config.methods.contains(&Method::Minds) {
        let recovery: Vec<_> = config
            .design
            .training_sizes
            .iter()
            .filter_map(|&n| experiment.recovery(n).ok().map(|r| (n, r)))
            .collect();
        json_out(out, "recovery.json", &recovery, &mut record)?;
    }
    for row in &aggregate {
        info!(
            "{} n = {}: train Bayes {} test Bayes {} ({} failed)",
            row.method.name(),
            row.n_train,
            row.train_bayes,
            row.test_bayes,
            row.n_failed
        );
    }
    let failed = experiment.outcomes.iter().filter(|o| o.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} replicate fits failed; see replicates.csv");
    }
    let seed = config.design.seed;
    record.finish(out, &config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_ranges() {
        assert_eq!(parse_k_range("3..6").unwrap(), vec![3, 4, 5, 6]);
        assert_eq!(parse_k_range("3..=5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_k_range("2, 5,7").unwrap(), vec![2, 5, 7]);
        assert!(parse_k_range("0..2").is_err());
        assert!(parse_k_range("6..3").is_err());
        assert!(parse_k_range("x").is_err());
    }

    #[test]
    fn missing_input_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = RunRecord::start("fit");
        assert!(load(&dir.path().join("nope.csv"), None, &mut r).is_err());
    }
}
