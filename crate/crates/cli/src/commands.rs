use std::fs;
use std::io::Write as _;
use std::path::Path;

use msf_core::audit::{run_audit, DEFAULT_SEEDS};
use msf_core::data::{
    load_isic_layout, preprocess, synth_sbm_graph, synth_texture_dataset, write_img8, SbmSpec,
};
use msf_core::graph::{features_to_csv, read_edge_list, read_features_csv, write_edge_list};
use msf_core::metrics::MetricsReport;
use msf_core::model::{load_checkpoint, save_checkpoint, GcnNodeClassifier, MsfCnnModel};
use msf_core::training::{cross_validate, evaluate, fit, split, Dataset, EpochLog, Trainable};
use msf_core::{FeatureMap, Graph};
use serde_json::json;

use crate::config::{ConfigError, RunConfig};

pub const CHECKPOINT_FILE: &str = "checkpoint.msfc";
pub const LOG_FILE: &str = "train_log.jsonl";
pub const TEXTURE_CLASSES: [&str; 2] = ["coarse", "fine"];

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config, data or files: exit 2.
    Usage(String),
    /// A verification failed: exit 1.
    Check(String),
    /// Training or inference produced non-finite or degenerate values: exit 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Check(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<msf_core::Error> for CliError {
    fn from(e: msf_core::Error) -> Self {
        use msf_core::Error as E;
        match e {
            E::NonFinite(_) | E::Convergence { .. } | E::DegenerateFeature { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

pub struct TextureArgs {
    pub n_per_class: usize,
    pub size: usize,
}

/// Writes `out/images/<id>.img8`, `out/labels.csv` and `out/classes.txt`.
pub fn synth_textures(out: &Path, args: &TextureArgs, seed: u64) -> CliResult<serde_json::Value> {
    let records = synth_texture_dataset(args.n_per_class, args.size, seed)?;
    let images = out.join("images");
    create_dir(&images)?;
    let mut labels = String::from("id,label\n");
    for r in &records {
        write_file(&images.join(format!("{}.img8", r.id)), &write_img8(r)?)?;
        labels.push_str(&format!("{},{}\n", r.id, r.label));
    }
    write_file(&out.join("labels.csv"), labels.as_bytes())?;
    write_file(&out.join("classes.txt"), format!("{}\n", TEXTURE_CLASSES.join("\n")).as_bytes())?;
    Ok(json!({
        "kind": "textures",
        "path": out,
        "images": records.len(),
        "classes": TEXTURE_CLASSES,
        "size": args.size,
        "seed": seed,
    }))
}

/// Writes `out/edges.txt`, `out/features.csv` and `out/labels.csv`
/// (`node,label`).
pub fn synth_sbm(out: &Path, spec: &SbmSpec) -> CliResult<serde_json::Value> {
    let sbm = synth_sbm_graph(spec)?;
    create_dir(out)?;
    write_file(&out.join("edges.txt"), write_edge_list(&sbm.graph).as_bytes())?;
    let features = sbm.graph.features().expect("generator attaches features");
    write_file(&out.join("features.csv"), features_to_csv(features).as_bytes())?;
    let mut labels = String::from("node,label\n");
    for (v, l) in sbm.labels.iter().enumerate() {
        labels.push_str(&format!("{v},{l}\n"));
    }
    write_file(&out.join("labels.csv"), labels.as_bytes())?;
    Ok(json!({
        "kind": "sbm",
        "path": out,
        "nodes": sbm.graph.node_count(),
        "edges": sbm.graph.edge_count(),
        "blocks": spec.blocks,
        "seed": spec.seed,
    }))
}

/// A dataset directory: images in the ISIC layout, or a node-labelled graph
/// when `edges.txt` is present.
pub enum Loaded {
    Images {
        data: Dataset<FeatureMap>,
        class_names: Vec<String>,
    },
    Nodes {
        graph: Graph,
        data: Dataset<usize>,
        class_names: Vec<String>,
    },
}

impl Loaded {
    fn labels(&self) -> &[usize] {
        match self {
            Loaded::Images { data, .. } => &data.labels,
            Loaded::Nodes { data, .. } => &data.labels,
        }
    }
}

fn read_node_labels(path: &Path, nodes: usize) -> CliResult<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let bad = |msg: String| CliError::Usage(format!("{}: {msg}", path.display()));
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h.trim()) != Some("node,label") {
        return Err(bad("expected header \"node,label\"".into()));
    }
    let mut labels = vec![None; nodes];
    for (i, line) in lines.filter(|(_, l)| !l.trim().is_empty()) {
        let parsed = line
            .split_once(',')
            .and_then(|(v, l)| Some((v.trim().parse::<usize>().ok()?, l.trim().parse::<usize>().ok()?)));
        let (v, l) = parsed.ok_or_else(|| bad(format!("line {}: malformed row {line:?}", i + 1)))?;
        if v >= nodes {
            return Err(bad(format!("line {}: node {v} out of range", i + 1)));
        }
        labels[v] = Some(l);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| bad(format!("node {v} has no label"))))
        .collect()
}

pub fn load_data(root: &Path, cfg: &RunConfig) -> CliResult<Loaded> {
    if root.join("edges.txt").exists() {
        let features = read_features_csv(&root.join("features.csv"))?;
        let n = features.rows();
        let graph = read_edge_list(&root.join("edges.txt"), Some(n))?.with_features(features)?;
        let labels = read_node_labels(&root.join("labels.csv"), n)?;
        let classes = labels.iter().max().map_or(0, |&m| m + 1);
        check_classes(classes, cfg)?;
        let data = Dataset::new((0..n).collect(), labels, classes)?;
        let class_names = (0..classes).map(|c| c.to_string()).collect();
        return Ok(Loaded::Nodes {
            graph,
            data,
            class_names,
        });
    }
    let manifest = load_isic_layout(root)?;
    let class_names = if manifest.class_names.is_empty() {
        let k = manifest.records.iter().map(|r| r.label + 1).max().unwrap_or(0);
        (0..k).map(|c| c.to_string()).collect()
    } else {
        manifest.class_names.clone()
    };
    check_classes(class_names.len(), cfg)?;
    let mut samples = Vec::with_capacity(manifest.len());
    let mut labels = Vec::with_capacity(manifest.len());
    for img in manifest.load_images()? {
        if img.channels != cfg.model.in_channels {
            return Err(CliError::Usage(format!(
                "image {} has {} channels but config key `in_channels` is {}",
                img.id, img.channels, cfg.model.in_channels
            )));
        }
        labels.push(img.label);
        samples.push(preprocess(&img, &cfg.preprocess)?.to_feature_map());
    }
    let data = Dataset::new(samples, labels, class_names.len())?;
    Ok(Loaded::Images { data, class_names })
}

fn check_classes(found: usize, cfg: &RunConfig) -> CliResult<()> {
    if found != cfg.model.classes {
        return Err(CliError::Usage(format!(
            "data has {found} classes but config key `classes` is {}",
            cfg.model.classes
        )));
    }
    Ok(())
}

fn jsonl(log: &EpochLog) -> String {
    serde_json::to_string(log).expect("epoch log serializes")
}

fn train_model<M: Trainable>(
    make: &dyn Fn() -> msf_core::Result<M>,
    data: &Dataset<M::Sample>,
    cfg: &RunConfig,
    out: &Path,
) -> CliResult<serde_json::Value> {
    let parts = split(&data.labels, &cfg.split)?;
    let cv = cross_validate(make, data, &parts.train, &cfg.train, cfg.split.folds, cfg.split.seed)?;

    create_dir(out)?;
    let log_path = out.join(LOG_FILE);
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::Usage(format!("{}: {e}", log_path.display())))?;
    let io_err = |e: std::io::Error| CliError::Usage(format!("{}: {e}", log_path.display()));
    writeln!(log, "{}", json!({ "cv": cv })).map_err(io_err)?;
    let mut model = make()?;
    let logs = fit(&mut model, data, &parts.train, &cfg.train, &mut |l| {
        writeln!(log, "{}", jsonl(l)).map_err(|e| msf_core::Error::Io {
            path: log_path.clone(),
            source: e,
        })
    })?;

    let checkpoint = out.join(CHECKPOINT_FILE);
    save_checkpoint(&checkpoint, &model.parameters())?;
    let test_probs = evaluate(&model, data, &parts.test, cfg.train.batch_size)?;
    let test_labels: Vec<usize> = parts.test.iter().map(|&i| data.labels[i]).collect();
    Ok(json!({
        "checkpoint": checkpoint,
        "log": log_path,
        "train_size": parts.train.len(),
        "test_size": parts.test.len(),
        "cv": cv,
        "epochs": logs.len(),
        "final_train_accuracy": logs.last().map(|l| l.train_accuracy),
        "test_accuracy": msf_core::training::accuracy(&test_probs, &test_labels),
    }))
}

/// Split, cross-validation report, final fit, checkpoint and JSONL log.
pub fn train(data_root: &Path, cfg: &RunConfig, out: &Path) -> CliResult<serde_json::Value> {
    let seed = cfg.seed();
    match load_data(data_root, cfg)? {
        Loaded::Images { data, .. } => train_model(&|| MsfCnnModel::new(cfg.model.clone(), seed), &data, cfg, out),
        Loaded::Nodes { graph, data, .. } => train_model(
            &|| GcnNodeClassifier::new(&graph, cfg.model.gnn_hidden, cfg.model.classes, seed),
            &data,
            cfg,
            out,
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Test,
    All,
}

impl EvalSplit {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Self::Train),
            "test" => Some(Self::Test),
            "all" => Some(Self::All),
            _ => None,
        }
    }
}

fn eval_model<M: Trainable>(
    mut model: M,
    checkpoint: &Path,
    data: &Dataset<M::Sample>,
    class_names: &[String],
    which: EvalSplit,
    cfg: &RunConfig,
) -> CliResult<MetricsReport> {
    let params = load_checkpoint(checkpoint)?;
    model.set_parameters(&params).map_err(|e| {
        CliError::Usage(format!(
            "{} does not match the configured model ({e}); pass the --config used for training",
            checkpoint.display()
        ))
    })?;
    let indices = match which {
        EvalSplit::All => (0..data.len()).collect(),
        EvalSplit::Train => split(&data.labels, &cfg.split)?.train,
        EvalSplit::Test => split(&data.labels, &cfg.split)?.test,
    };
    let probs = evaluate(&model, data, &indices, cfg.train.batch_size)?;
    let labels: Vec<usize> = indices.iter().map(|&i| data.labels[i]).collect();
    Ok(MetricsReport::from_probabilities(&probs, &labels, class_names)?)
}

pub fn eval(checkpoint: &Path, data_root: &Path, which: EvalSplit, cfg: &RunConfig) -> CliResult<MetricsReport> {
    let loaded = load_data(data_root, cfg)?;
    if loaded.labels().is_empty() {
        return Err(CliError::Usage(format!("{} holds no samples", data_root.display())));
    }
    let seed = cfg.seed();
    match loaded {
        Loaded::Images { data, class_names } => eval_model(
            MsfCnnModel::new(cfg.model.clone(), seed)?,
            checkpoint,
            &data,
            &class_names,
            which,
            cfg,
        ),
        Loaded::Nodes {
            graph,
            data,
            class_names,
        } => eval_model(
            GcnNodeClassifier::new(&graph, cfg.model.gnn_hidden, cfg.model.classes, seed)?,
            checkpoint,
            &data,
            &class_names,
            which,
            cfg,
        ),
    }
}

/// Runs the gradient audit. Returns the JSON table and the names of the
/// failing checks.
pub fn gradcheck(scope: &str, inject_bug: bool, seed: Option<u64>) -> CliResult<(serde_json::Value, Vec<String>)> {
    let seeds: Vec<u64> = match seed {
        Some(s) => (0..DEFAULT_SEEDS.len() as u64).map(|i| s.wrapping_add(i)).collect(),
        None => DEFAULT_SEEDS.to_vec(),
    };
    let rows = run_audit(scope, inject_bug, &seeds)?;
    let failed = rows.iter().filter(|r| !r.passed).map(|r| r.name.clone()).collect();
    Ok((json!({ "seeds": seeds, "checks": rows }), failed))
}

