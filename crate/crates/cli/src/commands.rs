//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use flowalert::bocpd::ScoredFlow;
use flowalert::burnrate::{AlertLevel, AlertLevelConfig};
use flowalert::calibrate::CalibrationMap;
use flowalert::decide::{
    collapse_diagnostics, crc_threshold, elkan_threshold, CollapseReport, CostSpec, DecisionThresholds, ThresholdRule,
};
use flowalert::metrics::{self, Confusion, EvalReport};
use flowalert::pipeline::{
    evaluate_outcomes, fit_phase_scored, run_ablation, FlowOutcome, Pipeline, PipelineConfig, Variant,
};
use flowalert::synth::{self, BurstScenario, ScenarioSpec};
use serde::Serialize;

use crate::data::{self, Prepared};
use crate::manifest::{hash_file, ArtifactLog, RunManifest};
use crate::{
    AblateArgs, Cli, CliError, EvaluateArgs, ReplayArgs, RunArgs, SimKind, SimulateArgs, EXIT_INFEASIBLE, EXIT_OK,
};

fn label_cell(label: Option<bool>) -> &'static str {
    match label {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

fn level_cell(level: Option<AlertLevel>) -> &'static str {
    level.map_or("", |l| l.as_str())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn sibling_manifest(out: &Path) -> PathBuf {
    let name = out
        .file_name()
        .map_or_else(|| "out".into(), |n| n.to_string_lossy().into_owned());
    out.with_file_name(format!("{name}.manifest.json"))
}

// ---------------------------------------------------------------- simulate

fn flow_spec(a: &SimulateArgs) -> ScenarioSpec {
    let default_len = match a.kind {
        SimKind::MeanShift => 600,
        SimKind::BaseRateInversion => 20_000,
        _ => 50_000,
    };
    let length = a.length.unwrap_or(default_len);
    match a.kind {
        SimKind::MeanShift => ScenarioSpec::mean_shift(length, a.shift_at.unwrap_or(length / 2), a.seed),
        SimKind::Regime => ScenarioSpec::regime(length, a.prevalence, a.dim, a.seed),
        SimKind::RareAttack => ScenarioSpec::rare_attack(length, a.seed),
        SimKind::BaseRateInversion => ScenarioSpec::base_rate_inversion(length, a.seed),
        SimKind::BurstSustained => ScenarioSpec::burst_and_sustained(a.seed),
    }
}

fn burst_csv(scenario: &BurstScenario) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["timestamp", "event", "attack"],
        scenario.events.iter().map(|e| {
            vec![
                e.timestamp.to_string(),
                u8::from(e.event).to_string(),
                u8::from(e.attack).to_string(),
            ]
        }),
    )
}

pub fn simulate(a: &SimulateArgs, argv: &[String]) -> Result<i32, CliError> {
    let started = Instant::now();
    let spec = flow_spec(a);
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let bytes = match a.kind {
        SimKind::BurstSustained => burst_csv(&synth::gen_burst_sustained(&spec)?)?,
        SimKind::MeanShift => {
            let mut buf = Vec::new();
            synth::write_csv(&synth::gen_mean_shift(&spec)?, &mut buf)?;
            buf
        }
        _ => {
            let mut buf = Vec::new();
            synth::write_csv(&synth::gen_regime(&spec)?, &mut buf)?;
            buf
        }
    };
    let mut log = ArtifactLog::default();
    log.write(&a.out, &bytes, true)?;
    let manifest = sibling_manifest(&a.out);
    log.finish(
        &manifest,
        "simulate",
        argv,
        serde_json::to_value(&spec)?,
        EXIT_OK,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- run

#[derive(Serialize)]
struct ThresholdReport {
    variant: Variant,
    calibrator: flowalert::calibrate::CalibratorKind,
    rule: ThresholdRule,
    #[serde(flatten)]
    thresholds: DecisionThresholds,
    collapse: Option<CollapseReport>,
    n_calibration: usize,
    budget_infeasible: bool,
}

#[derive(Serialize)]
struct RunMetrics {
    variant: Variant,
    split: &'static str,
    flows: usize,
    warmup_flows: usize,
    events: usize,
    /// Flows emitted while each level was the active escalation.
    level_flows: BTreeMap<String, usize>,
    level_transitions: usize,
    /// `null` for unlabelled streams.
    report: Option<EvalReport>,
}

#[derive(Serialize)]
struct RunConfig<'a> {
    pipeline: &'a PipelineConfig,
    data: &'a Prepared,
}

fn negatives(scores: &[ScoredFlow], map: &CalibrationMap) -> Vec<f64> {
    scores
        .iter()
        .filter(|f| !f.warmup && f.label == Some(false))
        .map(|f| map.apply(f.score))
        .collect()
}

fn outcomes_csv(outcomes: &[FlowOutcome]) -> Result<Vec<u8>, CliError> {
    csv_bytes(
        &["timestamp", "score", "probability", "event", "level", "warmup", "label"],
        outcomes.iter().map(|o| {
            vec![
                o.timestamp.to_string(),
                o.score.to_string(),
                o.probability.to_string(),
                u8::from(o.event).to_string(),
                level_cell(o.level).to_string(),
                u8::from(o.warmup).to_string(),
                label_cell(o.label).to_string(),
            ]
        }),
    )
}

fn burn_header(first: &[&str], levels: &[AlertLevelConfig]) -> Vec<String> {
    let mut h: Vec<String> = first.iter().map(|c| c.to_string()).collect();
    for l in levels {
        h.push(format!("{}_short", l.level.as_str()));
        h.push(format!("{}_long", l.level.as_str()));
    }
    h
}

fn scores_csv(validation: &[ScoredFlow], map: &CalibrationMap, test: &[FlowOutcome]) -> Result<Vec<u8>, CliError> {
    let val = validation.iter().map(|f| {
        vec![
            "validation".to_string(),
            f.timestamp.to_string(),
            f.score.to_string(),
            map.apply(f.score).to_string(),
            u8::from(f.warmup).to_string(),
            label_cell(f.label).to_string(),
        ]
    });
    let tst = test.iter().map(|o| {
        vec![
            "test".to_string(),
            o.timestamp.to_string(),
            o.score.to_string(),
            o.probability.to_string(),
            u8::from(o.warmup).to_string(),
            label_cell(o.label).to_string(),
        ]
    });
    csv_bytes(
        &["split", "timestamp", "score", "probability", "warmup", "label"],
        val.chain(tst),
    )
}

fn infeasible_message(variant: Variant, t: &DecisionThresholds) -> String {
    format!(
        "warning: no feasible budget threshold for {variant}: alpha = {} < 1/(n0+1) = {:.6} with n0 = {} \
         validation negatives; alerting is disabled (never-alert rule)",
        t.alpha,
        1.0 / (t.n0 as f64 + 1.0),
        t.n0
    )
}

pub fn run(a: &RunArgs, argv: &[String]) -> Result<i32, CliError> {
    let started = Instant::now();
    let prepared = data::prepare(&a.data)?;
    let config = a.model.pipeline_config(prepared.dim(), a.variant)?;
    let mut log = ArtifactLog::default();
    log.input(&a.data.input)?;

    let (fitted, val_scores) = fit_phase_scored(&prepared.train, &prepared.validation, &config)?;
    let infeasible = fitted.budget_infeasible(&config);
    if infeasible {
        eprintln!("{}", infeasible_message(a.variant, &fitted.thresholds));
    }
    let negs = negatives(&val_scores, &fitted.calibration);
    let report = ThresholdReport {
        variant: a.variant,
        calibrator: config.effective_calibrator(),
        rule: fitted.rule,
        thresholds: fitted.thresholds,
        collapse: (!negs.is_empty()).then(|| collapse_diagnostics(&negs, config.alpha, fitted.thresholds.tau_crc)),
        n_calibration: fitted.n_calibration,
        budget_infeasible: infeasible,
    };
    if report.collapse.is_some_and(|c| c.density_collapse) {
        eprintln!("warning: density collapse: no validation negative reaches the budget threshold");
    }
    let calibration = fitted.calibration.clone();
    let mut pipeline = Pipeline::new(fitted, &config)?;
    let mut outcomes = Vec::with_capacity(prepared.test.len());
    let mut alert_rows = Vec::new();
    let mut trace_rows = Vec::new();
    let mut prev = None;
    for flow in &prepared.test {
        let o = pipeline.process(flow)?;
        let changed = o.level != prev;
        if changed || a.burn_trace {
            let mut row = vec![o.timestamp.to_string()];
            if changed {
                row.push(level_cell(prev).into());
            }
            row.push(level_cell(o.level).into());
            for r in pipeline.burn_state().readings(&config.levels, &config.budget) {
                row.push(r.short_burn.to_string());
                row.push(r.long_burn.to_string());
            }
            if a.burn_trace {
                let mut t = row.clone();
                if changed {
                    t.remove(1);
                }
                trace_rows.push(t);
            }
            if changed {
                alert_rows.push(row);
            }
        }
        prev = o.level;
        outcomes.push(o);
    }
    let latency = pipeline.latency();
    let outcomes = &outcomes;

    let mut level_flows = BTreeMap::new();
    for o in outcomes {
        if let Some(l) = o.level {
            *level_flows.entry(l.as_str().to_string()).or_insert(0) += 1;
        }
    }
    let metrics = RunMetrics {
        variant: a.variant,
        split: "test",
        flows: outcomes.len(),
        warmup_flows: outcomes.iter().filter(|o| o.warmup).count(),
        events: outcomes.iter().filter(|o| o.event).count(),
        level_flows,
        level_transitions: alert_rows.len(),
        report: evaluate_outcomes(outcomes),
    };
    let header = burn_header(&["timestamp", "from", "to"], &config.levels);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let alerts = csv_bytes(&header, alert_rows)?;

    let dir = &a.out_dir;
    log.write(&dir.join("outcomes.csv"), &outcomes_csv(outcomes)?, true)?;
    log.write(&dir.join("alerts.csv"), &alerts, true)?;
    log.write(
        &dir.join("scores.csv"),
        &scores_csv(&val_scores, &calibration, outcomes)?,
        true,
    )?;
    log.write_json(&dir.join("thresholds.json"), &report, true)?;
    log.write_json(&dir.join("metrics.json"), &metrics, true)?;
    log.write(&dir.join("calibration.json"), calibration.to_json().as_bytes(), true)?;
    if a.burn_trace {
        let header = burn_header(&["timestamp", "level"], &config.levels);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        log.write(&dir.join("burn_trace.csv"), &csv_bytes(&header, trace_rows)?, true)?;
    }
    log.write_json(&dir.join("latency.json"), &latency, false)?;

    let code = if infeasible { EXIT_INFEASIBLE } else { EXIT_OK };
    let snapshot = serde_json::to_value(RunConfig {
        pipeline: &config,
        data: &prepared,
    })?;
    log.finish(
        &dir.join("manifest.json"),
        "run",
        argv,
        snapshot,
        code,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(code)
}

// ---------------------------------------------------------------- ablate

fn opt_cell(x: Option<f64>) -> String {
    x.map_or_else(|| "N/A".to_string(), |v| v.to_string())
}

pub fn ablate(a: &AblateArgs, argv: &[String]) -> Result<i32, CliError> {
    let started = Instant::now();
    if a.variants.is_empty() {
        return Err(CliError::Usage("--variants is empty".into()));
    }
    let prepared = data::prepare(&a.data)?;
    let base = a.model.pipeline_config(prepared.dim(), a.variants[0])?;
    let mut log = ArtifactLog::default();
    log.input(&a.data.input)?;

    let report = run_ablation(
        &prepared.train,
        &prepared.validation,
        &prepared.test,
        &base,
        &a.variants,
    )?;
    let mut infeasible = false;
    for (v, t) in &report.thresholds {
        if v.uses_budget() && t.tau_crc.is_none() {
            eprintln!("{}", infeasible_message(*v, t));
            infeasible = true;
        }
    }
    let table = csv_bytes(
        &[
            "variant",
            "alert_rate",
            "fpr",
            "recall",
            "precision",
            "f1",
            "tau",
            "alerts",
        ],
        report.rows.iter().map(|r| {
            vec![
                r.variant.to_string(),
                r.alert_rate.to_string(),
                r.fpr.to_string(),
                r.recall.to_string(),
                r.precision.to_string(),
                r.f1.to_string(),
                opt_cell(r.tau),
                r.alerts.to_string(),
            ]
        }),
    )?;
    let thresholds: BTreeMap<String, DecisionThresholds> =
        report.thresholds.iter().map(|(v, t)| (v.to_string(), *t)).collect();
    log.write(&a.out_dir.join("ablation.csv"), &table, true)?;
    log.write_json(&a.out_dir.join("ablation_thresholds.json"), &thresholds, true)?;

    let code = if infeasible { EXIT_INFEASIBLE } else { EXIT_OK };
    let snapshot = serde_json::to_value(RunConfig {
        pipeline: &base,
        data: &prepared,
    })?;
    log.finish(
        &a.out_dir.join("manifest.json"),
        "ablate",
        argv,
        snapshot,
        code,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(code)
}

// ---------------------------------------------------------------- evaluate

struct ScoreRow {
    split: Option<String>,
    probability: f64,
    label: bool,
}

fn read_scores(a: &EvaluateArgs) -> Result<Vec<ScoreRow>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.scores)
        .map_err(|e| CliError::Data(format!("{}: {e}", a.scores.display())))?;
    let header = rdr.headers()?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let need = |name: &str| col(name).ok_or_else(|| CliError::Data(format!("missing column '{name}' in header")));
    let pi = need(&a.prob_col)?;
    let li = need(&a.label_col)?;
    let si = col(&a.split_col);
    let wi = col("warmup");

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        if wi.is_some_and(|w| rec.get(w) == Some("1")) {
            continue;
        }
        let probability = rec[pi]
            .parse::<f64>()
            .ok()
            .filter(|p| (0.0..=1.0).contains(p))
            .ok_or_else(|| CliError::Data(format!("row {row}: probability '{}' not in [0, 1]", &rec[pi])))?;
        let label = match &rec[li] {
            "0" => false,
            "1" => true,
            other => return Err(CliError::Data(format!("row {row}: label '{other}' is not 0 or 1"))),
        };
        rows.push(ScoreRow {
            split: si.map(|s| rec[s].to_string()),
            probability,
            label,
        });
    }
    Ok(rows)
}

#[derive(Serialize)]
struct EvaluateMetrics {
    rows: usize,
    scored_split: Option<&'static str>,
    rule: ThresholdRule,
    report: EvalReport,
}

pub fn evaluate(a: &EvaluateArgs, argv: &[String]) -> Result<i32, CliError> {
    let started = Instant::now();
    if a.bins == 0 {
        return Err(CliError::Usage("--bins must be positive".into()));
    }
    if let Some(&bad) = a.alphas.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
        return Err(CliError::Usage(format!("alpha {bad} not in (0, 1]")));
    }
    let tau = match a.threshold {
        Some(t) => t,
        None => elkan_threshold(&CostSpec::from_ratio(a.cost_ratio).map_err(|e| CliError::Usage(e.to_string()))?),
    };
    let rows = read_scores(a)?;
    let mut log = ArtifactLog::default();
    log.input(&a.scores)?;

    let has_split = rows.iter().any(|r| r.split.is_some());
    let is = |r: &ScoreRow, s: &str| r.split.as_deref() == Some(s);
    let scored: Vec<&ScoreRow> = rows.iter().filter(|r| !has_split || is(r, "test")).collect();
    if scored.is_empty() {
        return Err(CliError::Data("no rows to evaluate".into()));
    }
    let probs: Vec<f64> = scored.iter().map(|r| r.probability).collect();
    let labels: Vec<bool> = scored.iter().map(|r| r.label).collect();
    let rule = ThresholdRule::Cost(tau);
    let report = metrics::evaluate(&probs, &labels, rule);
    let bins = metrics::reliability_data(&probs, &labels, a.bins)?;

    let reliability = csv_bytes(
        &["bin", "lower", "upper", "confidence", "accuracy", "count"],
        bins.iter().enumerate().filter(|(_, b)| b.count > 0).map(|(i, b)| {
            vec![
                i.to_string(),
                b.lower.to_string(),
                b.upper.to_string(),
                b.confidence.to_string(),
                b.accuracy.to_string(),
                b.count.to_string(),
            ]
        }),
    )?;
    log.write_json(
        &a.out_dir.join("metrics.json"),
        &EvaluateMetrics {
            rows: scored.len(),
            scored_split: has_split.then_some("test"),
            rule,
            report,
        },
        true,
    )?;
    log.write(&a.out_dir.join("reliability.csv"), &reliability, true)?;

    if has_split {
        let negs: Vec<f64> = rows
            .iter()
            .filter(|r| is(r, "validation") && !r.label)
            .map(|r| r.probability)
            .collect();
        let mut sweep = Vec::new();
        for &alpha in &a.alphas {
            let crc = crc_threshold(&negs, alpha)?;
            let diag = collapse_diagnostics(&negs, alpha, crc.tau);
            let rule = ThresholdRule::from_crc(crc.tau);
            let alerts: Vec<bool> = probs.iter().map(|&p| rule.is_event(p)).collect();
            let c = Confusion::from_alerts(&alerts, &labels);
            sweep.push(vec![
                alpha.to_string(),
                crc.n0.to_string(),
                opt_cell(crc.tau),
                u8::from(crc.feasible()).to_string(),
                diag.overshoot_bound.to_string(),
                u8::from(diag.density_collapse).to_string(),
                c.alert_rate().to_string(),
                c.fpr().to_string(),
                c.recall().to_string(),
                (c.tp + c.fp).to_string(),
            ]);
        }
        let table = csv_bytes(
            &[
                "alpha",
                "n0",
                "tau",
                "feasible",
                "overshoot_bound",
                "density_collapse",
                "test_alert_rate",
                "test_fpr",
                "test_recall",
                "alerts",
            ],
            sweep,
        )?;
        log.write(&a.out_dir.join("alpha_sweep.csv"), &table, true)?;
    } else {
        eprintln!("note: no '{}' column; budget sweep skipped", a.split_col);
    }

    let snapshot = serde_json::json!({
        "threshold": tau,
        "alphas": a.alphas,
        "bins": a.bins,
    });
    log.finish(
        &a.out_dir.join("manifest.json"),
        "evaluate",
        argv,
        snapshot,
        EXIT_OK,
        started.elapsed().as_secs_f64(),
    )?;
    Ok(EXIT_OK)
}

// ---------------------------------------------------------------- replay

/// Point the output flag of a recorded command line at `dir`.
fn redirect(argv: &[String], command: &str, dir: &Path) -> Result<Vec<String>, CliError> {
    let flag = if command == "simulate" { "--out" } else { "--out-dir" };
    let target = |old: &str| -> String {
        if command == "simulate" {
            let name = Path::new(old).file_name().map(|n| n.to_os_string()).unwrap_or_default();
            dir.join(name).display().to_string()
        } else {
            dir.display().to_string()
        }
    };
    let prefix = format!("{flag}=");
    let mut out = Vec::with_capacity(argv.len());
    let mut found = false;
    let mut iter = argv.iter();
    while let Some(arg) = iter.next() {
        if arg == flag {
            let old = iter
                .next()
                .ok_or_else(|| CliError::Data(format!("{flag} without a value")))?;
            out.push(arg.clone());
            out.push(target(old));
            found = true;
        } else if let Some(old) = arg.strip_prefix(&prefix) {
            out.push(format!("{prefix}{}", target(old)));
            found = true;
        } else {
            out.push(arg.clone());
        }
    }
    if !found {
        return Err(CliError::Data(format!("recorded command has no {flag}")));
    }
    Ok(out)
}

pub fn replay(a: &ReplayArgs) -> Result<i32, CliError> {
    let recorded = RunManifest::load(&a.manifest)?;
    if recorded.command == "replay" {
        return Err(CliError::Data("cannot replay a replay".into()));
    }
    for input in &recorded.inputs {
        let now = hash_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Data(format!(
                "input {} changed since the recorded run",
                input.path
            )));
        }
    }
    let argv = match &a.out_dir {
        Some(dir) => redirect(&recorded.argv, &recorded.command, dir)?,
        None => recorded.argv.clone(),
    };
    let cli =
        <Cli as clap::Parser>::try_parse_from(std::iter::once("flowalert".to_string()).chain(argv.iter().cloned()))
            .map_err(|e| CliError::Data(format!("recorded command line no longer parses: {e}")))?;
    let code = crate::execute(&cli.command, &argv)?;

    let mut mismatches = 0;
    if code != recorded.exit_code {
        println!("MISMATCH exit code {code} (recorded {})", recorded.exit_code);
        mismatches += 1;
    }
    for art in recorded.outputs.iter().filter(|o| o.primary) {
        let path = match &a.out_dir {
            Some(dir) => dir.join(Path::new(&art.path).file_name().unwrap_or_default()),
            None => PathBuf::from(&art.path),
        };
        let now = hash_file(&path)?;
        if now == art.sha256 {
            println!("ok       {}", path.display());
        } else {
            println!("MISMATCH {}", path.display());
            mismatches += 1;
        }
    }
    if mismatches > 0 {
        return Err(CliError::Data(format!(
            "{mismatches} output(s) differ from the manifest"
        )));
    }
    Ok(EXIT_OK)
}
