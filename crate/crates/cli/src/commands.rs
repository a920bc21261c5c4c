use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use qrun_core::bench::{run_suite, suite_runs, write_rows, Suite};
use qrun_core::tasks::{drqc_dataset, fmt17, train as fit};

use crate::checkpoint::Checkpoint;
use crate::config::{config_hash, load_json, RunConfig, SimulateConfig};
use crate::exit::{CliError, CONTRACT, OK};

const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, bytes)
            .map_err(|e| CliError::contract(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::contract(format!("cannot create {}: {e}", dir.display())))
}

pub fn simulate(spec: &Path, output: Option<&Path>) -> Result<u8, CliError> {
    let cfg: SimulateConfig = load_json(spec)?;
    let data = drqc_dataset(&cfg.circuit, &cfg.dataset)?;
    let mut buf = Vec::new();
    writeln!(buf, "# config_sha256: {}", config_hash(&cfg))?;
    writeln!(buf, "# version: {VERSION}")?;
    data.write_csv(&mut buf)?;
    emit(output, &buf)?;
    Ok(OK)
}

/// Precedence: flag (or `QRUN_OUTPUT_DIR`), then the config's `output_dir`,
/// then the working directory.
fn resolve_output_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn train(config: &Path, output_dir: Option<PathBuf>) -> Result<u8, CliError> {
    let mut cfg: RunConfig = load_json(config)?;
    cfg.train.seed = cfg.seed;
    cfg.train.loss = cfg.task.loss();
    cfg.train.validate()?;
    let hash = config_hash(&cfg);
    let dir = resolve_output_dir(output_dir, &cfg);

    let data = cfg.task.build()?;
    let mut net = cfg.model.build(cfg.seed)?;
    let (d_in, d_out) = data.dims();
    if net.d_in() != d_in || net.d_out() != d_out {
        return Err(CliError::contract(format!(
            "model maps {} → {} but the task is {d_in} → {d_out}",
            net.d_in(),
            net.d_out()
        )));
    }
    let metrics = fit(&mut net, data.task(), &cfg.train)?;

    prepare_dir(&dir)?;
    let ckpt = Checkpoint::new(&cfg, hash.clone(), &net);
    let text = ckpt.to_json();
    // Reload before writing so a checkpoint that cannot be restored is never saved.
    if Checkpoint::from_json(&text)?.network()? != net {
        return Err(CliError::contract(
            "checkpoint does not restore the trained network",
        ));
    }
    emit(Some(&dir.join("checkpoint.json")), text.as_bytes())?;

    let mut csv = Vec::new();
    writeln!(csv, "# seed: {}", cfg.seed)?;
    writeln!(csv, "# config_sha256: {hash}")?;
    writeln!(csv, "# version: {VERSION}")?;
    writeln!(csv, "epoch,train_loss,test_metric")?;
    let mut tests = metrics.test_history.iter().peekable();
    for (i, loss) in metrics.history.iter().enumerate() {
        let epoch = i + 1;
        let test = match tests.peek() {
            Some(&&(e, v)) if e == epoch => {
                tests.next();
                fmt17(v)
            }
            _ => String::new(),
        };
        writeln!(csv, "{epoch},{},{test}", fmt17(*loss))?;
    }
    emit(Some(&dir.join("metrics.csv")), &csv)?;

    let mut out = std::io::stdout().lock();
    for (name, value) in &metrics.final_metrics {
        writeln!(out, "METRIC {name}={}", fmt17(*value))?;
    }
    Ok(OK)
}

pub fn bench(
    suite: &str,
    seeds: &[u64],
    epochs: Option<usize>,
    models: &[String],
    output_dir: Option<PathBuf>,
) -> Result<u8, CliError> {
    let suite = Suite::parse(suite)?;
    if seeds.is_empty() {
        return Err(CliError::contract("at least one seed is required"));
    }
    let mut runs = suite_runs(suite, seeds)?;
    if !models.is_empty() {
        if let Some(m) = models
            .iter()
            .find(|m| !runs.iter().any(|r| &r.model_label == *m))
        {
            return Err(CliError::contract(format!(
                "suite {} has no model {m:?}",
                suite.name()
            )));
        }
        runs.retain(|r| models.contains(&r.model_label));
    }
    if let Some(e) = epochs {
        for r in &mut runs {
            r.train.epochs = e;
            r.train.validate()?;
        }
    }

    let total = runs.len();
    let mut done = 0;
    let rows = run_suite(&runs, |spec, rows| {
        done += 1;
        let summary: Vec<String> = rows
            .iter()
            .map(|r| format!("{}={:.4e}", r.metric, r.value))
            .collect();
        let status = rows
            .iter()
            .find(|r| !r.ok())
            .map_or("ok", |r| r.status.as_str());
        eprintln!(
            "[{done}/{total}] {} {} seed={} {} ({status})",
            spec.task_label,
            spec.model_label,
            spec.seed,
            summary.join(" ")
        );
    })?;

    let dir = output_dir.unwrap_or_else(|| PathBuf::from("."));
    prepare_dir(&dir)?;
    let path = dir.join(format!("bench_{}.csv", suite.name()));
    let mut buf = Vec::new();
    writeln!(buf, "# suite: {}", suite.name())?;
    writeln!(
        buf,
        "# seeds: {}",
        seeds
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(" ")
    )?;
    writeln!(buf, "# version: {VERSION}")?;
    write_rows(&rows, &mut buf)?;
    emit(Some(&path), &buf)?;
    eprintln!("wrote {}", path.display());

    if rows.iter().all(|r| !r.ok()) {
        eprintln!("error: every run failed");
        return Ok(CONTRACT);
    }
    Ok(OK)
}
