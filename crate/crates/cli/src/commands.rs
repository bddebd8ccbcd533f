use serde::{Deserialize, Serialize};
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vmfd::checkpoint::decode_checkpoint;
use vmfd::config::sha256_hex;
use vmfd::scene_io::{decode_scene, write_atomic};
use vmfd::{
    generate_scene, probe_model, save_checkpoint, save_scene, train, Checkpoint, ConfigFile,
    DatasetConfig, EpochMetrics, Model, Scene, TrainConfig,
};

use crate::error::{read_input, CliError, CliResult};
use crate::manifest::{
    claim_output_dir, file_entry, is_plain_name, manifest_id, version_string, FileEntry, Manifest,
};

pub const METRICS_FILE: &str = "metrics.ndjson";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";
pub const PROBE_FILE: &str = "probe.json";

fn load_config(path: &Path, seed_key: &str, seed: Option<u64>) -> CliResult<ConfigFile> {
    let text = String::from_utf8(read_input(path)?)
        .map_err(|_| vmfd::Error::InvalidConfig(format!("{} is not UTF-8", path.display())))?;
    let mut file: ConfigFile = text.parse()?;
    if let Some(s) = seed {
        file.set(seed_key, s);
    }
    Ok(file)
}

fn config_entry(path: &Path) -> CliResult<FileEntry> {
    Ok(FileEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(&read_input(path)?),
        role: Some("config".into()),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn remove_if_present(path: &Path) -> CliResult<()> {
    match std::fs::remove_file(path) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

pub fn generate(config: &Path, out: &Path, seed: Option<u64>, force: bool) -> CliResult<Manifest> {
    let start = Instant::now();
    let file = load_config(config, "scene.seed", seed)?;
    let dataset = DatasetConfig::from_file(&file)?;
    let config_hash = sha256_hex(
        serde_json::to_string(&json!({
            "scene": dataset.scene,
            "train_scenes": dataset.train_scenes,
            "probe_scenes": dataset.probe_scenes,
        }))?
        .as_bytes(),
    );
    let id = manifest_id("dataset", &config_hash, &[]);
    claim_output_dir(out, &id, force)?;

    let mut outputs = Vec::with_capacity(dataset.total_scenes());
    for i in 0..dataset.total_scenes() {
        let scene = generate_scene(&dataset.scene_config(i))?;
        let name = format!("scene_{i:03}.bin");
        save_scene(&scene, &out.join(&name))?;
        let role = if i < dataset.train_scenes {
            "train"
        } else {
            "probe"
        };
        outputs.push(file_entry(out, &name, Some(role))?);
        log::info!("wrote {name} ({role}, {} points)", scene.points.len());
    }
    let manifest = Manifest {
        manifest_id: id,
        kind: "dataset".into(),
        version: version_string(),
        seed: dataset.scene.seed,
        config_hash,
        inputs: vec![config_entry(config)?],
        outputs,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.save(out)?;
    Ok(manifest)
}

/// Loads the dataset's scenes with `role`, checking each against its hash.
fn load_scenes(data: &Path, role: &str) -> CliResult<(Manifest, Vec<Scene>, Vec<FileEntry>)> {
    let manifest = Manifest::load(data)?;
    if manifest.kind != "dataset" {
        return Err(CliError::Usage(format!(
            "{} holds a `{}` manifest, not a dataset",
            data.display(),
            manifest.kind
        )));
    }
    let entries: Vec<FileEntry> = manifest.outputs_with_role(role).cloned().collect();
    let mut scenes = Vec::with_capacity(entries.len());
    for entry in &entries {
        if !is_plain_name(&entry.path) {
            return Err(vmfd::Error::Format(format!(
                "manifest entry `{}` is not a file name",
                entry.path
            ))
            .into());
        }
        let path = data.join(&entry.path);
        let bytes = read_input(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(CliError::HashMismatch(format!(
                "{} does not match its manifest hash",
                path.display()
            )));
        }
        scenes.push(decode_scene(&bytes)?);
    }
    Ok((manifest, scenes, entries))
}

/// One line of `metrics.ndjson` per epoch. Field order is part of the format.
#[derive(Serialize)]
struct EpochRecord<'a> {
    record: &'static str,
    epoch: usize,
    l_ppnce: f64,
    l_sup: f64,
    l_kl: f64,
    total: f64,
    lr: f64,
    sigma_w_sq: f64,
    sigma_b_sq: f64,
    grad_norm: f64,
    zbar_norms: &'a [f64],
    manifest: &'a str,
}

/// Final line of `metrics.ndjson`, also written as `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub record: String,
    pub epochs: usize,
    pub l_ppnce: f64,
    pub l_sup: f64,
    pub l_kl: f64,
    pub total: f64,
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub sampling: String,
    pub config_hash: String,
    /// Shared by runs whose configs differ only in the seed.
    pub config_group: String,
    pub manifest: String,
}

pub fn init(config: &Path, out: &Path, seed: Option<u64>, force: bool) -> CliResult<Manifest> {
    let start = Instant::now();
    let train_config = TrainConfig::from_file(&load_config(config, "train.seed", seed)?)?;
    let config_hash = train_config.hash();
    let id = manifest_id("init", &config_hash, &[]);
    claim_output_dir(out, &id, force)?;
    // same draw as the first thing a training run does
    let model = Model::init(
        &train_config.encoder,
        &mut ChaCha8Rng::seed_from_u64(train_config.seed),
    )?;
    write_atomic(
        &out.join(RESOLVED_CONFIG_FILE),
        train_config.canonical().as_bytes(),
    )?;
    save_checkpoint(
        &Checkpoint {
            config_hash: config_hash.clone(),
            epochs: 0,
            model,
        },
        &out.join(CHECKPOINT_FILE),
    )?;
    let manifest = Manifest {
        manifest_id: id,
        kind: "init".into(),
        version: version_string(),
        seed: train_config.seed,
        config_hash,
        inputs: vec![config_entry(config)?],
        outputs: vec![
            file_entry(out, RESOLVED_CONFIG_FILE, None)?,
            file_entry(out, CHECKPOINT_FILE, None)?,
        ],
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.save(out)?;
    Ok(manifest)
}

pub fn pretrain(
    config: &Path,
    data: &Path,
    out: &Path,
    seed: Option<u64>,
    force: bool,
) -> CliResult<Manifest> {
    let start = Instant::now();
    let train_config = TrainConfig::from_file(&load_config(config, "train.seed", seed)?)?;
    let (_, scenes, mut inputs) = load_scenes(data, "train")?;
    if scenes.is_empty() {
        return Err(CliError::Usage(format!(
            "{} lists no training scenes",
            data.display()
        )));
    }
    for entry in &mut inputs {
        entry.path = data.join(&entry.path).display().to_string();
    }
    let config_hash = train_config.hash();
    let id = manifest_id("run", &config_hash, &inputs);
    claim_output_dir(out, &id, force)?;
    for name in [
        METRICS_FILE,
        SUMMARY_FILE,
        CHECKPOINT_FILE,
        RESOLVED_CONFIG_FILE,
    ] {
        remove_if_present(&out.join(name))?;
    }
    write_atomic(
        &out.join(RESOLVED_CONFIG_FILE),
        train_config.canonical().as_bytes(),
    )?;
    log::info!(
        "training on {} scenes for {} epochs (config {})",
        scenes.len(),
        train_config.epochs,
        &config_hash[..12]
    );

    let mut metrics = BufWriter::new(File::create(out.join(METRICS_FILE))?);
    let mut write_line = |line: String| -> vmfd::Result<()> {
        metrics.write_all(line.as_bytes())?;
        metrics.write_all(b"\n")?;
        metrics.flush()?;
        Ok(())
    };
    let (model, history) = train(train_config.clone(), &scenes, |m: &EpochMetrics| {
        log::info!(
            "epoch {:>3}  total {:.4}  ppnce {:.4}  sup {:.4}  kl {:.4}  sigma_w2 {:.4}",
            m.epoch,
            m.total,
            m.l_ppnce,
            m.l_sup,
            m.l_kl,
            m.sigma_w_sq
        );
        let record = EpochRecord {
            record: "epoch",
            epoch: m.epoch,
            l_ppnce: m.l_ppnce,
            l_sup: m.l_sup,
            l_kl: m.l_kl,
            total: m.total,
            lr: m.lr,
            sigma_w_sq: m.sigma_w_sq,
            sigma_b_sq: m.sigma_b_sq,
            grad_norm: m.grad_norm,
            zbar_norms: &m.zbar_norms,
            manifest: &id,
        };
        write_line(serde_json::to_string(&record).map_err(|e| vmfd::Error::Format(e.to_string()))?)
    })?;
    let last = history
        .last()
        .ok_or_else(|| vmfd::Error::Domain("training produced no epochs".into()))?;
    let summary = RunSummary {
        record: "summary".into(),
        epochs: history.len(),
        l_ppnce: last.l_ppnce,
        l_sup: last.l_sup,
        l_kl: last.l_kl,
        total: last.total,
        sigma_w_sq: last.sigma_w_sq,
        sigma_b_sq: last.sigma_b_sq,
        seed: train_config.seed,
        lambda1: train_config.lambda1,
        lambda2: train_config.lambda2,
        lambda3: train_config.lambda3,
        sampling: train_config.sampling.to_string(),
        config_hash: config_hash.clone(),
        config_group: train_config.seedless_hash(),
        manifest: id.clone(),
    };
    write_line(serde_json::to_string(&summary)?)?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    save_checkpoint(
        &Checkpoint {
            config_hash: config_hash.clone(),
            epochs: history.len() as u64,
            model,
        },
        &out.join(CHECKPOINT_FILE),
    )?;

    let manifest = Manifest {
        manifest_id: id,
        kind: "run".into(),
        version: version_string(),
        seed: train_config.seed,
        config_hash,
        inputs: std::iter::once(config_entry(config)?)
            .chain(inputs)
            .collect(),
        outputs: [
            RESOLVED_CONFIG_FILE,
            METRICS_FILE,
            SUMMARY_FILE,
            CHECKPOINT_FILE,
        ]
        .into_iter()
        .map(|name| file_entry(out, name, None))
        .collect::<CliResult<_>>()?,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    manifest.save(out)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutput {
    pub record: String,
    pub accuracy: f64,
    pub mean_iou: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub num_train: usize,
    pub num_test: usize,
    pub epochs: u64,
    pub config_hash: String,
    pub checkpoint_sha256: String,
    pub dataset: String,
}

/// Checks the checkpoint against `config`, or else against the
/// `config.resolved` next to it.
fn check_config_hash(checkpoint: &Path, ckpt: &Checkpoint, config: Option<&Path>) -> CliResult<()> {
    let (source, file) = match config {
        Some(p) => (p.to_path_buf(), load_config(p, "train.seed", None)?),
        None => {
            let sibling = checkpoint.with_file_name(RESOLVED_CONFIG_FILE);
            if !sibling.exists() {
                log::warn!(
                    "no {RESOLVED_CONFIG_FILE} next to {}; config hash not checked",
                    checkpoint.display()
                );
                return Ok(());
            }
            let file = load_config(&sibling, "train.seed", None)?;
            (sibling, file)
        }
    };
    let hash = TrainConfig::from_file(&file)?.hash();
    if hash != ckpt.config_hash {
        return Err(CliError::HashMismatch(format!(
            "{} was trained with config {} but {} hashes to {}",
            checkpoint.display(),
            &ckpt.config_hash[..ckpt.config_hash.len().min(12)],
            source.display(),
            &hash[..12]
        )));
    }
    Ok(())
}

pub fn probe(
    checkpoint: &Path,
    data: &Path,
    config: Option<&Path>,
    out: Option<&Path>,
) -> CliResult<ProbeOutput> {
    let bytes = read_input(checkpoint)?;
    let ckpt = decode_checkpoint(&bytes)?;
    check_config_hash(checkpoint, &ckpt, config)?;
    let (dataset, mut scenes, _) = load_scenes(data, "probe")?;
    if scenes.is_empty() {
        log::warn!(
            "{} has no probe scenes; probing on its training scenes",
            data.display()
        );
        scenes = load_scenes(data, "train")?.1;
    }
    let summary = probe_model(&ckpt.model, &scenes)?;
    let output = ProbeOutput {
        record: "probe".into(),
        accuracy: summary.report.accuracy,
        mean_iou: summary.report.mean_iou,
        per_class_iou: summary.report.per_class_iou,
        sigma_w_sq: summary.sigma_w_sq,
        sigma_b_sq: summary.sigma_b_sq,
        num_train: summary.num_train,
        num_test: summary.num_test,
        epochs: ckpt.epochs,
        config_hash: ckpt.config_hash,
        checkpoint_sha256: sha256_hex(&bytes),
        dataset: dataset.manifest_id,
    };
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => checkpoint.with_file_name(PROBE_FILE),
    };
    write_json(&path, &output)?;
    log::info!(
        "probe accuracy {:.4}, mean IoU {:.4} -> {}",
        output.accuracy,
        output.mean_iou,
        path.display()
    );
    Ok(output)
}

struct CompletedRun {
    name: String,
    summary: RunSummary,
    probe: Option<ProbeOutput>,
}

fn load_run(dir: &Path) -> CliResult<CompletedRun> {
    let manifest = Manifest::load(dir)
        .map_err(|_| CliError::Incomplete(format!("{}: no readable manifest", dir.display())))?;
    if manifest.kind != "run" {
        return Err(CliError::Incomplete(format!(
            "{}: `{}` manifest, not a training run",
            dir.display(),
            manifest.kind
        )));
    }
    if !dir.join(CHECKPOINT_FILE).exists() {
        return Err(CliError::Incomplete(format!(
            "{}: no checkpoint",
            dir.display()
        )));
    }
    let summary: RunSummary = std::fs::read(dir.join(SUMMARY_FILE))
        .ok()
        .and_then(|b| serde_json::from_slice(&b).ok())
        .ok_or_else(|| CliError::Incomplete(format!("{}: no readable summary", dir.display())))?;
    if summary.manifest != manifest.manifest_id {
        return Err(CliError::Incomplete(format!(
            "{}: summary belongs to another manifest",
            dir.display()
        )));
    }
    let probe = match std::fs::read(dir.join(PROBE_FILE)) {
        Ok(b) => Some(serde_json::from_slice(&b)?),
        Err(_) => None,
    };
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    Ok(CompletedRun {
        name,
        summary,
        probe,
    })
}

const METRIC_COLUMNS: [&str; 8] = [
    "l_ppnce",
    "l_sup",
    "l_kl",
    "total",
    "sigma_w_sq",
    "sigma_b_sq",
    "accuracy",
    "mean_iou",
];

impl CompletedRun {
    fn metrics(&self) -> [Option<f64>; 8] {
        let s = &self.summary;
        [
            Some(s.l_ppnce),
            Some(s.l_sup),
            Some(s.l_kl),
            Some(s.total),
            Some(s.sigma_w_sq),
            Some(s.sigma_b_sq),
            self.probe.as_ref().map(|p| p.accuracy),
            self.probe.as_ref().map(|p| p.mean_iou),
        ]
    }

    fn setting(&self) -> String {
        let s = &self.summary;
        format!(
            "{}\t{}\t{}\t{}\t{}",
            &s.config_group[..12],
            s.lambda1,
            s.lambda2,
            s.lambda3,
            s.sampling
        )
    }
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |x| x.to_string())
}

/// Mean and sample standard deviation of the values present.
fn mean_std(values: &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let xs: Vec<f64> = values.iter().flatten().copied().collect();
    if xs.is_empty() {
        return (None, None);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1)
        .then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (Some(mean), std)
}

/// Writes a tab-separated table of final metrics and returns its row count.
/// With `aggregate`, runs sharing a config group collapse into one row of
/// mean and standard deviation columns.
pub fn compare(runs: &[PathBuf], out: &Path, aggregate: bool) -> CliResult<usize> {
    let mut done = Vec::new();
    for dir in runs {
        match load_run(dir) {
            Ok(run) => done.push(run),
            Err(CliError::Incomplete(msg)) => {
                eprintln!("warning: skipping incomplete run {msg}");
            }
            Err(e) => return Err(e),
        }
    }
    if done.len() < 2 {
        return Err(CliError::Incomplete(format!(
            "need at least 2 completed runs, found {}",
            done.len()
        )));
    }

    let setting_header = "config\tlambda1\tlambda2\tlambda3\tsampling";
    let mut table = String::new();
    let rows = if aggregate {
        let mut groups: Vec<(String, Vec<&CompletedRun>)> = Vec::new();
        for run in &done {
            let key = &run.summary.config_group;
            match groups.iter_mut().find(|(k, _)| k == key) {
                Some((_, members)) => members.push(run),
                None => groups.push((key.clone(), vec![run])),
            }
        }
        table.push_str(setting_header);
        table.push_str("\tn");
        for c in METRIC_COLUMNS {
            table.push_str(&format!("\t{c}_mean\t{c}_std"));
        }
        table.push('\n');
        for (_, members) in &groups {
            table.push_str(&members[0].setting());
            table.push_str(&format!("\t{}", members.len()));
            let per_run: Vec<[Option<f64>; 8]> = members.iter().map(|r| r.metrics()).collect();
            for col in 0..METRIC_COLUMNS.len() {
                let values: Vec<Option<f64>> = per_run.iter().map(|m| m[col]).collect();
                let (mean, std) = mean_std(&values);
                table.push_str(&format!("\t{}\t{}", cell(mean), cell(std)));
            }
            table.push('\n');
        }
        groups.len()
    } else {
        table.push_str("run\tseed\tepochs\t");
        table.push_str(setting_header);
        for c in METRIC_COLUMNS {
            table.push('\t');
            table.push_str(c);
        }
        table.push('\n');
        for run in &done {
            table.push_str(&format!(
                "{}\t{}\t{}\t{}",
                run.name,
                run.summary.seed,
                run.summary.epochs,
                run.setting()
            ));
            for v in run.metrics() {
                table.push('\t');
                table.push_str(&cell(v));
            }
            table.push('\n');
        }
        done.len()
    };
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_atomic(out, table.as_bytes())?;
    Ok(rows)
}
