//! The `medgcn` command line. [`run`] does the work and reports failures as
//! a one-line message plus an exit code, so it can be driven in-process.
//!
//! Exit codes: 2 usage or bad spec, 3 training diverged, 4 checkpoint
//! missing or trained on another graph, 5 unknown encounter, 1 anything
//! else.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{
    generate_synthetic, load_csv_bundle, write_csv_bundle, write_imputations, write_recommendations,
    write_truth_files, DataError, SyntheticSpec,
};
use crate::graph::{GraphError, MedGraph, NodeType, SplitRatios, Subset, GRAPH_MAGIC};
use crate::metrics::ranking;
use crate::model::{MedGcnModel, ModelError, ModelHyper, NodeFeatures};
use crate::pipeline::{evaluate, prepare};
use crate::tensor::Matrix;
use crate::train::{train_prepared, TaskMode, TrainConfig, TrainError};

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl std::fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(1, e)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = if matches!(e, DataError::Spec(_)) { 2 } else { 1 };
        Self::new(code, e)
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        Self::new(1, e)
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = if matches!(e, TrainError::Diverged { .. }) { 3 } else { 1 };
        Self::new(code, e)
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let code = match &e {
            ModelError::Fingerprint { .. } | ModelError::Format(_) => 4,
            ModelError::Lookup(_) => 5,
            _ => 1,
        };
        Self::new(code, e)
    }
}

#[derive(Debug, Parser)]
#[command(name = "medgcn", version, about = "Graph convolution over encounters, patients, labs and medications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Both,
    Med,
    Lab,
}

#[derive(Debug, clap::Args)]
struct SplitArgs {
    /// Train+validation share, then the validation share within it.
    #[arg(long, default_value = "0.8,0.1", value_parser = parse_split)]
    split: SplitRatios,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic cohort as CSV files plus ground truth.
    Synth {
        /// key = value file; unset keys keep their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Ingest a CSV directory into a single graph file.
    BuildGraph {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print node counts and matrix sparsity.
    Stats {
        #[arg(long)]
        data: PathBuf,
        /// Also write the statistics as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Split, mask and train; write the best checkpoint and the epoch log.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "both")]
        task: TaskArg,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 300)]
        hidden: usize,
        #[arg(long, default_value_t = 1)]
        layers: usize,
        #[arg(long, default_value_t = 0.1)]
        dropout: f64,
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 1000)]
        epochs: usize,
        #[arg(long, default_value_t = 50)]
        patience: usize,
        /// Seeds the splits, initialization and dropout.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        out: PathBuf,
        /// Epoch log; defaults to the checkpoint path plus `.log.tsv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Must match the training seed to reproduce its split.
        #[arg(long, default_value_t = 0)]
        split_seed: u64,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long, default_value_t = 2)]
        k: usize,
        /// JSON report; defaults to the checkpoint path plus `.report.json`.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Rank medications for one encounter.
    Recommend(QueryArgs),
    /// Impute every lab of one encounter.
    Impute(QueryArgs),
}

#[derive(Debug, clap::Args)]
struct QueryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    encounter: String,
    /// Embed without the transductive forward pass. An optional CSV
    /// (encounter_id,patient_id,lab_code,value) supplies encounters that
    /// are not in the data.
    #[arg(long, num_args = 0..=1)]
    inductive: Option<Option<PathBuf>>,
    /// Also write the result as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<SplitRatios, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    let [train_val, val] = parts[..] else {
        return Err("expected two numbers, e.g. 0.8,0.1".into());
    };
    let r = SplitRatios::nested(train_val, val);
    r.counts(1000).map_err(|e| e.to_string())?;
    Ok(r)
}

/// Parses `args` (program name first) and runs the command, writing
/// human-readable output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error");
            let first = first.strip_prefix("error: ").unwrap_or(first).to_string();
            return Err(CliError::new(2, first));
        }
    };
    match cli.command {
        Command::Synth { spec, out: dir, seed } => cmd_synth(spec.as_deref(), &dir, seed, out),
        Command::BuildGraph { data, out: path } => cmd_build_graph(&data, &path, out),
        Command::Stats { data, json } => cmd_stats(&data, json.as_deref(), out),
        Command::Train {
            data,
            task,
            lambda,
            hidden,
            layers,
            dropout,
            lr,
            epochs,
            patience,
            seed,
            split,
            out: path,
            log,
        } => {
            let config = TrainConfig {
                lambda,
                lr,
                max_epochs: epochs,
                patience,
                seed,
                task_mode: match task {
                    TaskArg::Both => TaskMode::Both,
                    TaskArg::Med => TaskMode::MedicationOnly,
                    TaskArg::Lab => TaskMode::LabOnly,
                },
                val_metric: None,
                model: ModelHyper {
                    hidden_dim: hidden,
                    n_layers: layers,
                    dropout,
                    ..Default::default()
                },
            };
            let log = log.unwrap_or_else(|| with_suffix(&path, ".log.tsv"));
            cmd_train(&data, config, split.split, &path, &log, out)
        }
        Command::Evaluate {
            checkpoint,
            data,
            split_seed,
            split,
            k,
            report,
        } => {
            let report = report.unwrap_or_else(|| with_suffix(&checkpoint, ".report.json"));
            cmd_evaluate(&checkpoint, &data, split_seed, split.split, k, &report, out)
        }
        Command::Recommend(q) => cmd_query(&q, Query::Recommend, out),
        Command::Impute(q) => cmd_query(&q, Query::Impute, out),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// A CSV directory or a `MEDGRAPH1` file.
pub fn load_data(path: &Path) -> Result<MedGraph, CliError> {
    if path.is_dir() {
        return Ok(load_csv_bundle(path)?.0);
    }
    let bytes = fs::read(path).map_err(|e| CliError::new(1, format!("{}: {e}", path.display())))?;
    if !bytes.starts_with(GRAPH_MAGIC) {
        return Err(CliError::new(
            1,
            format!("{} is neither a CSV directory nor a graph file", path.display()),
        ));
    }
    Ok(MedGraph::read_from(&mut bytes.as_slice())?)
}

fn load_checkpoint(path: &Path, graph: &MedGraph) -> Result<MedGcnModel, CliError> {
    if !path.is_file() {
        return Err(CliError::new(4, format!("checkpoint {} not found", path.display())));
    }
    match MedGcnModel::load_for(path, graph) {
        Err(ModelError::Io(e)) => Err(CliError::new(4, format!("checkpoint {}: {e}", path.display()))),
        Err(ModelError::Shape(e)) => Err(CliError::new(4, format!("checkpoint {}: {e}", path.display()))),
        other => Ok(other?),
    }
}

fn cmd_synth(spec: Option<&Path>, dir: &Path, seed: Option<u64>, out: &mut dyn Write) -> Result<(), CliError> {
    let mut spec = match spec {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::new(2, format!("{}: {e}", p.display())))?;
            SyntheticSpec::parse(&text)?
        }
        None => SyntheticSpec::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let cohort = generate_synthetic(&spec)?;
    write_csv_bundle(&cohort.records, dir)?;
    write_truth_files(&cohort, dir)?;
    writeln!(out, "wrote cohort (seed {}) to {}", spec.seed, dir.display())?;
    write!(out, "{}", cohort.graph.graph_stats())?;
    Ok(())
}

fn cmd_build_graph(data: &Path, path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let (graph, counts) = load_csv_bundle(data)?;
    graph.save(path)?;
    writeln!(
        out,
        "read {} patients, {} encounters, {} lab results, {} prescriptions",
        counts.patients, counts.encounters, counts.lab_results, counts.prescriptions
    )?;
    writeln!(out, "wrote {} ({})", path.display(), graph.fingerprint())?;
    Ok(())
}

fn cmd_stats(data: &Path, json: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let stats = load_data(data)?.graph_stats();
    write!(out, "{stats}")?;
    if let Some(p) = json {
        let text = serde_json::to_string_pretty(&stats).map_err(|e| CliError::new(1, e))?;
        fs::write(p, text + "\n")?;
    }
    Ok(())
}

fn cmd_train(
    data: &Path,
    config: TrainConfig,
    split: SplitRatios,
    path: &Path,
    log: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    config.validate().map_err(|e| CliError::new(2, e))?;
    config.model.validate().map_err(|e| CliError::new(2, e))?;
    let graph = load_data(data)?;
    let prep = prepare(&graph, split, config.seed)?;
    let (model, report) = train_prepared(&prep, config)?;
    model.save(path)?;
    fs::write(log, report.to_tsv())?;
    writeln!(
        out,
        "epochs={}\nbest_epoch={}\nval_{}={:.6}\nstopped={:?}",
        report.final_epoch(),
        report.best_epoch,
        report.metric.name(),
        report.best_val_metric,
        report.stop_reason
    )?;
    Ok(())
}

fn cmd_evaluate(
    checkpoint: &Path,
    data: &Path,
    split_seed: u64,
    split: SplitRatios,
    k: usize,
    report: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    if k == 0 {
        return Err(CliError::new(2, "--k must be at least 1"));
    }
    let graph = load_data(data)?;
    let model = load_checkpoint(checkpoint, &graph)?;
    let prep = prepare(&graph, split, split_seed)?;
    let eval = evaluate(&model, &prep, Subset::Test, k).map_err(|e| CliError::new(1, e))?;
    let metrics = eval.report();
    write!(out, "{}", metrics.to_text())?;
    fs::write(report, metrics.to_json() + "\n")?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Query {
    Recommend,
    Impute,
}

/// Encounters listed in an inductive CSV, in file order, with their labs.
fn read_inductive(path: &Path) -> Result<Vec<(String, String, Vec<(String, f64)>)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::new(1, format!("{}: {e}", path.display())))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::new(1, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["encounter_id", "patient_id", "lab_code", "value"] {
        return Err(CliError::new(
            1,
            format!("{}:1: expected header encounter_id,patient_id,lab_code,value", path.display()),
        ));
    }
    let mut out: Vec<(String, String, Vec<(String, f64)>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::new(1, format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let value: f64 = rec[3]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| CliError::new(1, format!("{}:{line}: bad lab value {:?}", path.display(), &rec[3])))?;
        let lab = (rec[2].to_string(), value);
        match out.iter_mut().find(|(e, _, _)| e == &rec[0]) {
            Some((_, p, labs)) if p == &rec[1] => labs.push(lab),
            Some(_) => {
                return Err(CliError::new(
                    1,
                    format!("{}:{line}: encounter {} changes patient", path.display(), &rec[0]),
                ))
            }
            None => out.push((rec[0].to_string(), rec[1].to_string(), vec![lab])),
        }
    }
    Ok(out)
}

fn cmd_query(q: &QueryArgs, kind: Query, out: &mut dyn Write) -> Result<(), CliError> {
    let data = load_data(&q.data)?;
    let model = load_checkpoint(&q.checkpoint, &data)?;
    // values on the scale the model was trained with
    let mut graph = data.with_lab_norm(model.lab_norm.clone())?;
    if let Some(Some(path)) = &q.inductive {
        for (enc, patient, labs) in read_inductive(path)? {
            if graph.registry.ordinal(NodeType::Encounter, &enc).is_some() {
                continue;
            }
            graph
                .add_encounter(&enc, &patient, &labs)
                .map_err(|e| CliError::new(1, format!("{}: {e}", path.display())))?;
        }
    }
    let e = graph
        .registry
        .ordinal(NodeType::Encounter, &q.encounter)
        .ok_or_else(|| CliError::new(5, format!("unknown encounter {}", q.encounter)))?;
    if kind == Query::Recommend {
        // the encounter's own prescriptions are what is being predicted
        graph.a_em.row_mut(e).iter_mut().for_each(|v| *v = 0.0);
    }
    let features = NodeFeatures::one_hot(&data);
    let (p_row, v_row) = if q.inductive.is_some() {
        let r = model.inductive_embed(&graph, &features, e)?;
        (r.p, r.v)
    } else {
        let o = model.predict(&graph, &features)?;
        (o.p.row(e).to_vec(), o.v.row(e).to_vec())
    };

    let mut single = crate::graph::NodeRegistry::default();
    single.insert(NodeType::Encounter, &q.encounter);
    for t in [NodeType::Lab, NodeType::Medication] {
        for id in graph.registry.ids(t) {
            single.insert(t, id);
        }
    }
    let reg = &graph.registry;
    let mut text = String::new();
    match kind {
        Query::Recommend => {
            if let Some(path) = &q.out {
                let p = Matrix::from_vec(1, p_row.len(), p_row.clone()).expect("row length");
                write_recommendations(&mut fs::File::create(path)?, &p, &single)?;
            }
            text.push_str("rank\tmed_code\tprobability\n");
            for (r, m) in ranking(&p_row).into_iter().enumerate() {
                let id = reg.id(NodeType::Medication, m).expect("medication ordinal");
                text.push_str(&format!("{}\t{id}\t{:.6}\n", r + 1, p_row[m]));
            }
        }
        Query::Impute => {
            let mut shown = Vec::with_capacity(v_row.len());
            text.push_str("lab_code\tvalue_normalized\tvalue_original_units\tstatus\n");
            for (l, id) in reg.ids(NodeType::Lab).enumerate() {
                let (norm, orig, status) = if graph.m_el.get(e, l) == 1.0 {
                    (graph.a_el.get(e, l), graph.raw_el.get(e, l), "observed")
                } else {
                    let x = v_row[l];
                    (x, graph.lab_norm[l].denormalize(x), "imputed")
                };
                shown.push(norm);
                text.push_str(&format!("{id}\t{norm:.6}\t{orig:.6}\t{status}\n"));
            }
            if let Some(path) = &q.out {
                let v = Matrix::from_vec(1, shown.len(), shown).expect("row length");
                write_imputations(&mut fs::File::create(path)?, &v, &single, &graph.lab_norm)?;
            }
        }
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}
