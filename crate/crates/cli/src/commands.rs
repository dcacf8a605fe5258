//! The subcommands as library functions. Each `cmd_*` computes a result;
//! the `save_*` helpers write it into an output directory and return the
//! paths written.

use std::fs;
use std::path::{Path, PathBuf};

use nullprobe::estimators::kfold_cv;
use nullprobe::nulltest::{bootstrap_ci, correct, run_sweep, Execution, NullFamily, TestReport, TraceSource};
use nullprobe::rng;
use nullprobe::scm::{canonical_example, identifiability_check, IdentifiabilityReport, ScmModel, TaskSpec};
use nullprobe::toynet::{init_model, plant_signal, record_traces, SyntheticTask, ToyModel};
use nullprobe::trace::{read_traces, write_traces, MANIFEST_FILE};
use nullprobe::TraceSet;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Seeds};
use crate::error::{CliError, Result};
use crate::report::{
    histogram_csv, probe_csv, probe_markdown, sweep_markdown, test_csv, to_json, validate_report, LayerRow,
    LayerSweepReport, ProbeReport, ProbeRow,
};

pub const PROBE_JSON: &str = "probe.json";
pub const PROBE_CSV: &str = "probe.csv";
pub const TEST_JSON: &str = "test.json";
pub const TEST_CSV: &str = "test.csv";
pub const REPORT_MD: &str = "report.md";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const HIST_CSV: &str = "null_hist.csv";

/// The toy system described by a config: a (possibly planted) random model,
/// its task and the fixed input sample.
pub struct Pipeline {
    pub model: ToyModel,
    pub task: SyntheticTask,
    pub inputs: Vec<Vec<u32>>,
}

impl Pipeline {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let seeds = cfg.seeds();
        let task = cfg.build_task()?;
        let mut model = init_model(cfg.model, seeds.model)?;
        if let Some(p) = cfg.plant {
            model = plant_signal(&model, &task, p.layer, p.alpha, seeds.plant)?;
        }
        let inputs = task.sample_inputs(cfg.n_samples, seeds.inputs);
        Ok(Pipeline { model, task, inputs })
    }

    pub fn source(&self) -> TraceSource<'_> {
        TraceSource::Model {
            model: &self.model,
            task: &self.task,
            inputs: &self.inputs,
        }
    }
}

/// Where `probe` and `test` get their traces.
pub enum Input {
    /// Build the toy pipeline from the config.
    Config,
    /// Analyse a trace directory; weight randomization is unavailable.
    Traces(PathBuf),
}

fn write_file(path: PathBuf, contents: &str) -> Result<PathBuf> {
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Generates the configured traces into `out`; returns the manifest path.
pub fn cmd_gen(cfg: &RunConfig, out: &Path) -> Result<PathBuf> {
    let p = Pipeline::build(cfg)?;
    let traces = record_traces(&p.model, &p.task, &p.inputs)?;
    write_traces(&traces, out)?;
    Ok(out.join(MANIFEST_FILE))
}

fn load_fixed(cfg: &RunConfig, dir: &Path) -> Result<TraceSet> {
    let traces = read_traces(dir)?;
    cfg.validate_analysis(traces.label_kind, traces.n_samples())?;
    Ok(traces)
}

fn probe_rows(cfg: &RunConfig, traces: &TraceSet, layers: &[usize], seeds: &Seeds) -> Result<Vec<ProbeRow>> {
    let kind = traces.label_kind;
    let probe = cfg.probe_for(kind);
    let metric = cfg.metric_for(kind);
    let boot_seed = rng::tagged_seed(seeds.test, "bootstrap");
    layers
        .iter()
        .map(|&layer| {
            let cv = kfold_cv(traces, layer, &probe, cfg.folds, seeds.cv, metric)?;
            let ci = bootstrap_ci(
                &cv.per_fold_metric,
                cfg.bootstrap.level,
                cfg.bootstrap.n_boot,
                rng::derive_seed(boot_seed, layer as u64),
            )?;
            Ok(ProbeRow { layer, cv, ci })
        })
        .collect()
}

/// Cross-validated probe metric at every configured layer.
pub fn cmd_probe(cfg: &RunConfig, input: &Input) -> Result<ProbeReport> {
    let seeds = cfg.seeds();
    let (traces, seeds_used) = match input {
        Input::Config => {
            let p = Pipeline::build(cfg)?;
            (record_traces(&p.model, &p.task, &p.inputs)?, Some(seeds))
        }
        Input::Traces(dir) => (load_fixed(cfg, dir)?, None),
    };
    let layers = cfg.layers_for(traces.n_layers())?;
    let kind = traces.label_kind;
    Ok(ProbeReport {
        source: traces.provenance.clone(),
        statistic: nullprobe::nulltest::TestStatistic::name(&cfg.statistic_for(kind)),
        metric: cfg.metric_for(kind),
        seeds: seeds_used,
        config: cfg.clone(),
        rows: probe_rows(cfg, &traces, &layers, &seeds)?,
    })
}

fn sweep(cfg: &RunConfig, source: &TraceSource<'_>, traces: &TraceSet, seeds: &Seeds) -> Result<LayerSweepReport> {
    let layers = cfg.layers_for(traces.n_layers())?;
    let kind = traces.label_kind;
    let statistic = cfg.statistic_for(kind);
    let execution = if cfg.threads.is_some() {
        Execution::Parallel
    } else {
        Execution::Serial
    };
    let run = |family: &NullFamily, b: usize| -> Result<Vec<TestReport>> {
        Ok(run_sweep(source, &statistic, family, &layers, b, seeds.test, execution)?)
    };
    let chance = run(&NullFamily::LabelPermutation, cfg.b_chance)?;
    let null = run(&cfg.null_family, cfg.b_null)?;
    let chance_p: Vec<f64> = chance.iter().map(|r| r.p_hat).collect();
    let null_p: Vec<f64> = null.iter().map(|r| r.p_hat).collect();
    let chance_correction = correct(cfg.correction, &chance_p, cfg.alpha)?;
    let null_correction = correct(cfg.correction, &null_p, cfg.alpha)?;
    let rows = probe_rows(cfg, traces, &layers, seeds)?
        .into_iter()
        .zip(chance.into_iter().zip(null))
        .enumerate()
        .map(|(i, (p, (chance, null)))| LayerRow {
            layer: p.layer,
            cv: p.cv,
            ci: p.ci,
            chance,
            chance_p_adjusted: chance_correction.adjusted[i],
            chance_reject: chance_correction.reject[i],
            null,
            null_p_adjusted: null_correction.adjusted[i],
            null_reject: null_correction.reject[i],
        })
        .collect();
    Ok(LayerSweepReport {
        source: traces.provenance.clone(),
        statistic: nullprobe::nulltest::TestStatistic::name(&statistic),
        metric: cfg.metric_for(kind),
        seeds: None,
        config: cfg.clone(),
        chance_correction,
        null_correction,
        rows,
    })
}

/// Full layer sweep: probe metrics, tests against shuffled labels and against
/// the configured null family, each corrected across the sweep.
pub fn cmd_test(cfg: &RunConfig, input: &Input) -> Result<LayerSweepReport> {
    let seeds = cfg.seeds();
    let go = || -> Result<LayerSweepReport> {
        match input {
            Input::Config => {
                let p = Pipeline::build(cfg)?;
                let source = p.source();
                let traces = source.target()?;
                let mut r = sweep(cfg, &source, &traces, &seeds)?;
                r.seeds = Some(seeds);
                Ok(r)
            }
            Input::Traces(dir) => {
                let traces = load_fixed(cfg, dir)?;
                sweep(cfg, &TraceSource::Fixed(&traces), &traces, &seeds)
            }
        }
    };
    match cfg.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {n} threads: {e}")))?;
            pool.install(go)
        }
        None => go(),
    }
}

pub fn save_probe(report: &ProbeReport, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    Ok(vec![
        write_file(out.join(PROBE_JSON), &to_json(report)?)?,
        write_file(out.join(PROBE_CSV), &probe_csv(report))?,
    ])
}

pub fn save_test(report: &LayerSweepReport, out: &Path) -> Result<Vec<PathBuf>> {
    ensure_dir(out)?;
    Ok(vec![
        write_file(out.join(TEST_JSON), &to_json(report)?)?,
        write_file(out.join(TEST_CSV), &test_csv(report))?,
    ])
}

/// A user-supplied SCM and task for `scm --file`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScmRequest {
    pub scm: ScmModel,
    pub task: TaskSpec,
    #[serde(default)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScmOutcome {
    pub name: String,
    /// Status the canonical example claims for itself; absent for user SCMs.
    pub declared_identifiable: Option<bool>,
    /// Weight of the withheld query added to `μ`, if any.
    pub enriched_with: Option<f64>,
    pub report: IdentifiabilityReport,
}

pub const DEFAULT_EPSILON: f64 = 1e-12;

/// What `scm` should check.
pub enum ScmInput {
    Example { name: String, enrich: Option<f64> },
    Json(String),
}

pub fn parse_scm_request(text: &str) -> Result<ScmRequest> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de)
        .map_err(|e| CliError::config(e.path().to_string(), e.into_inner().to_string()))
}

/// Exhaustive identifiability check of a canonical example or a user SCM.
pub fn cmd_scm(input: &ScmInput, epsilon: Option<f64>) -> Result<ScmOutcome> {
    match input {
        ScmInput::Example { name, enrich } => {
            let ex = canonical_example(name).map_err(|e| CliError::Usage(e.to_string()))?;
            let mut task = ex.task.clone();
            if let Some(w) = *enrich {
                let q = ex
                    .withheld
                    .clone()
                    .ok_or_else(|| CliError::Usage(format!("example `{name}` has no withheld query")))?;
                if !(w > 0.0 && w < 1.0) {
                    return Err(CliError::Usage(format!("enrichment weight must lie in (0, 1), got {w}")));
                }
                task.mu = task.mu.with_added(q, w);
            }
            let report = identifiability_check(&task, &ex.scm, epsilon.unwrap_or(DEFAULT_EPSILON))?;
            Ok(ScmOutcome {
                name: ex.name,
                declared_identifiable: Some(ex.declared_identifiable),
                enriched_with: *enrich,
                report,
            })
        }
        ScmInput::Json(text) => {
            let req = parse_scm_request(text)?;
            let eps = epsilon.or(req.epsilon).unwrap_or(DEFAULT_EPSILON);
            let report = identifiability_check(&req.task, &req.scm, eps)?;
            Ok(ScmOutcome {
                name: "user".into(),
                declared_identifiable: None,
                enriched_with: None,
                report,
            })
        }
    }
}

/// Renders Markdown and plot-ready CSV for a `test` or `probe` run directory.
pub fn cmd_report(run_dir: &Path) -> Result<Vec<PathBuf>> {
    if !run_dir.is_dir() {
        return Err(CliError::Usage(format!("run directory {} does not exist", run_dir.display())));
    }
    let read = |name: &str| -> Result<Option<String>> {
        let path = run_dir.join(name);
        match fs::read_to_string(&path) {
            Ok(s) => Ok(Some(s)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(path, e)),
        }
    };
    if let Some(text) = read(TEST_JSON)? {
        let r = validate_report(&text)?;
        return Ok(vec![
            write_file(run_dir.join(REPORT_MD), &sweep_markdown(&r))?,
            write_file(run_dir.join(SUMMARY_CSV), &test_csv(&r))?,
            write_file(run_dir.join(HIST_CSV), &histogram_csv(&r))?,
        ]);
    }
    if let Some(text) = read(PROBE_JSON)? {
        let de = &mut serde_json::Deserializer::from_str(&text);
        let r: ProbeReport = serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::config(e.path().to_string(), e.into_inner().to_string()))?;
        return Ok(vec![
            write_file(run_dir.join(REPORT_MD), &probe_markdown(&r))?,
            write_file(run_dir.join(SUMMARY_CSV), &probe_csv(&r))?,
        ]);
    }
    Err(CliError::Usage(format!(
        "{} holds neither {TEST_JSON} nor {PROBE_JSON}",
        run_dir.display()
    )))
}
