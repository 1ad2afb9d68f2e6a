use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use seal_core::datagen::{self, DataRecord, GenOptions};
use seal_core::explain::{self, FidelitySign, MaskSpec, Method};
use seal_core::fragmenter;
use seal_core::metrics::{self, EvalConfig};
use seal_core::molgraph::MolecularGraph;
use seal_core::render::{self, RenderOptions};
use seal_core::sealnet::{Checkpoint, PreparedGraph, SealConfig, SealModel, Task};
use seal_core::training::{
    self, cross_validate, CvReport, Metric, Sample, TrainConfig, DEFAULT_LAMBDA_GRID,
};

use crate::manifest::Run;
use crate::{usage, EvalArgs, ExplainArgs, Failure, FragmentArgs, GenArgs, RenderArgs, TrainArgs};

type CmdResult = Result<(), Failure>;

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn load_records(path: &Path) -> anyhow::Result<Vec<DataRecord>> {
    let records = datagen::load_jsonl(path).with_context(|| format!("datagen: reading {}", path.display()))?;
    if records.is_empty() {
        return Err(anyhow!("datagen: {} contains no records", path.display()));
    }
    Ok(records)
}

fn load_model(path: &Path) -> anyhow::Result<SealModel> {
    Checkpoint::load(path)
        .and_then(|c| c.to_model())
        .with_context(|| format!("sealnet: loading checkpoint {}", path.display()))
}

fn check_ig_steps(method: Method, steps: usize) -> CmdResult {
    if method == Method::IntegratedGradients && steps == 0 {
        return Err(usage("--ig-steps must be positive"));
    }
    Ok(())
}

pub fn gen(a: &GenArgs) -> CmdResult {
    if a.n < 10 {
        return Err(usage(format!("--n must be at least 10, got {}", a.n)));
    }
    if !(a.pos_frac > 0.0 && a.pos_frac < 1.0) {
        return Err(usage(format!("--pos-frac must lie in (0, 1), got {}", a.pos_frac)));
    }
    if a.ring_threshold == 0 {
        return Err(usage("--ring-threshold must be positive"));
    }
    let run = Run::start("gen", a, Some(a.seed));
    let opts = GenOptions {
        ring_threshold: a.ring_threshold,
    };
    let records = datagen::generate_dataset_with(a.task, a.n, a.pos_frac, a.seed, &opts).context("datagen")?;
    datagen::write_jsonl(&a.out, &records).context("datagen")?;
    log::info!("wrote {} records to {}", records.len(), a.out.display());
    run.finish(&[&a.out])?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct FragmentRecord<'a> {
    smiles: &'a str,
    n_fragments: usize,
    fragment_of: Vec<usize>,
    cut_bonds: Vec<[usize; 2]>,
}

fn fragment_one(smiles: &str) -> anyhow::Result<String> {
    let graph = MolecularGraph::from_smiles(smiles).with_context(|| format!("molgraph: {smiles:?}"))?;
    let frag = fragmenter::fragment(&graph).with_context(|| format!("fragmenter: {smiles:?}"))?;
    let cut_bonds = frag
        .cut_bonds
        .iter()
        .map(|&b| {
            let bond = graph.bond(b);
            [bond.a.min(bond.b), bond.a.max(bond.b)]
        })
        .collect();
    let record = FragmentRecord {
        smiles,
        n_fragments: frag.n_fragments,
        fragment_of: frag.fragment_of,
        cut_bonds,
    };
    Ok(serde_json::to_string(&record)?)
}

pub fn fragment(a: &FragmentArgs) -> CmdResult {
    let mut run = Run::start("fragment", a, None);
    let mut text = String::new();
    if let Some(smiles) = &a.smiles {
        text.push_str(&fragment_one(smiles)?);
        text.push('\n');
    } else if let Some(data) = &a.data {
        run.input(data);
        for r in load_records(data)? {
            text.push_str(&fragment_one(&r.smiles)?);
            text.push('\n');
        }
    }
    emit(a.out.as_deref(), &text)?;
    if let Some(out) = &a.out {
        run.finish(&[out])?;
    }
    Ok(())
}

fn validation_metric(model: &SealModel, val: &[Sample], metric: Metric, batch: usize) -> anyhow::Result<f64> {
    let graphs: Vec<&PreparedGraph> = val.iter().map(|s| &s.graph).collect();
    let targets: Vec<f64> = val.iter().map(|s| s.target).collect();
    let preds = model.predict(&graphs, batch).context("sealnet")?;
    let value = match metric {
        Metric::Auroc => metrics::auroc(&preds, &targets),
        Metric::Mae => metrics::mae(&preds, &targets),
    };
    value.context("metrics: validation split")
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let lambdas: Vec<f64> = match (&a.lambda, &a.lambda_sweep) {
        (Some(l), _) => vec![*l],
        (None, Some(sweep)) if sweep.is_empty() => DEFAULT_LAMBDA_GRID.to_vec(),
        (None, Some(sweep)) => sweep.clone(),
        (None, None) => return Err(usage("one of --lambda or --lambda-sweep is required")),
    };
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(usage(format!("λ must be finite and non-negative, got {bad}")));
    }
    if a.folds == 0 {
        return Err(usage("--folds must be at least 1"));
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    if !(a.val_frac > 0.0 && a.val_frac < 1.0) {
        return Err(usage(format!("--val-frac must lie in (0, 1), got {}", a.val_frac)));
    }
    if !(0.0..1.0).contains(&a.dropout) {
        return Err(usage(format!("--dropout must lie in [0, 1), got {}", a.dropout)));
    }
    let model_config = SealConfig {
        dropout: a.dropout,
        ..SealConfig::new(a.task, a.hidden, a.layers)
    };
    model_config.validate().map_err(|e| usage(e.to_string()))?;
    let cfg = TrainConfig {
        batch_size: a.batch,
        learning_rate: a.lr,
        weight_decay: a.weight_decay,
        max_epochs: a.epochs,
        early_stop_patience: a.patience,
        warmup_epochs: a.warmup,
        lambda: 0.0,
        seed: a.seed,
        metric: Metric::for_task(a.task),
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;

    let mut run = Run::start("train", a, Some(a.seed));
    run.input(&a.data);
    let records = load_records(&a.data)?;
    if a.task == Task::Binary {
        if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.label != 0.0 && r.label != 1.0) {
            return Err(anyhow!("datagen: record {i} has label {} but the task is binary", r.label).into());
        }
    }
    let samples = training::prepare_samples(records.iter().map(|r| (r.smiles.as_str(), r.label))).context("sealnet")?;

    let (train_idx, val_idx) = datagen::split_test(&records, a.val_frac, a.seed).context("datagen: validation split")?;
    let pick = |idx: &[usize]| -> Vec<Sample> { idx.iter().map(|&i| samples[i].clone()).collect() };
    let (train_set, val_set) = (pick(&train_idx), pick(&val_idx));
    let fit = |lambda: f64| -> anyhow::Result<SealModel> {
        let (model, history) = training::train(&model_config, &train_set, &val_set, &TrainConfig { lambda, ..cfg.clone() })
            .context("training")?;
        log::info!(
            "λ = {lambda}: best epoch {:?} of {}",
            history.best_epoch,
            history.epochs.len()
        );
        Ok(model)
    };

    let (report, model) = if a.folds >= 2 {
        let folds = datagen::split_folds(&records, a.folds, a.seed).context("datagen: folds")?;
        let report = cross_validate(&model_config, &samples, &folds, &lambdas, &cfg, a.alpha).context("training")?;
        log::info!("selected λ = {}", report.selected_lambda);
        let model = fit(report.selected_lambda)?;
        (report, model)
    } else {
        let mut models = Vec::with_capacity(lambdas.len());
        let mut scores = Vec::with_capacity(lambdas.len());
        for &lambda in &lambdas {
            let model = fit(lambda)?;
            scores.push(vec![validation_metric(&model, &val_set, cfg.metric, cfg.batch_size)?]);
            models.push(model);
        }
        let report = CvReport::new(cfg.metric, lambdas.clone(), scores, a.alpha).context("training")?;
        let chosen = lambdas
            .iter()
            .position(|&l| l == report.selected_lambda)
            .expect("selected λ is a candidate");
        let model = models.swap_remove(chosen);
        (report, model)
    };

    Checkpoint::from_model(&model).save(&a.out).context("sealnet: saving checkpoint")?;
    emit(a.report.as_deref(), &format!("{}\n", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?))?;
    let mut outputs: Vec<&Path> = vec![&a.out];
    if let Some(r) = &a.report {
        outputs.push(r);
    }
    run.finish(&outputs)?;
    Ok(())
}

/// One line of `seal explain` output.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub smiles: String,
    pub method: Method,
    pub prediction: f64,
    pub bias: f64,
    pub fragment_of: Vec<usize>,
    pub fragment_contributions: Vec<f64>,
    pub node_scores: Vec<f64>,
}

fn explain_one(model: &SealModel, smiles: &str, method: Method, ig_steps: usize) -> anyhow::Result<ExplanationRecord> {
    let (_, frag, prepared) = PreparedGraph::from_smiles(smiles).with_context(|| format!("sealnet: {smiles:?}"))?;
    let attr = explain::explain(model, &prepared, method, ig_steps).with_context(|| format!("explain: {smiles:?}"))?;
    Ok(ExplanationRecord {
        smiles: smiles.to_string(),
        method,
        prediction: attr.prediction,
        bias: attr.bias,
        fragment_of: frag.fragment_of,
        fragment_contributions: attr.fragment_contributions,
        node_scores: attr.node_scores,
    })
}

pub fn explain(a: &ExplainArgs) -> CmdResult {
    check_ig_steps(a.method, a.ig_steps)?;
    let mut run = Run::start("explain", a, None);
    run.input(&a.model);
    let model = load_model(&a.model)?;
    let smiles: Vec<String> = match (&a.smiles, &a.data) {
        (Some(s), _) => vec![s.clone()],
        (None, Some(data)) => {
            run.input(data);
            load_records(data)?.into_iter().map(|r| r.smiles).collect()
        }
        (None, None) => return Err(usage("one of --smiles or --data is required")),
    };
    let mut text = String::new();
    for s in &smiles {
        let record = explain_one(&model, s, a.method, a.ig_steps)?;
        text.push_str(&serde_json::to_string(&record).map_err(anyhow::Error::from)?);
        text.push('\n');
    }
    emit(a.out.as_deref(), &text)?;
    if let Some(out) = &a.out {
        run.finish(&[out])?;
    }
    Ok(())
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    check_ig_steps(a.method, a.ig_steps)?;
    if a.thresholds.is_empty() || a.strategies.is_empty() {
        return Err(usage("--thresholds and --strategies must be non-empty"));
    }
    for &t in &a.thresholds {
        MaskSpec::new(a.strategies[0], t, FidelitySign::Positive).map_err(|e| usage(e.to_string()))?;
    }
    let mut run = Run::start("eval", a, None);
    run.input(&a.model);
    run.input(&a.data);
    let model = load_model(&a.model)?;
    let records = load_records(&a.data)?;
    let cfg = EvalConfig {
        method: a.method,
        thresholds: a.thresholds.clone(),
        strategies: a.strategies.clone(),
        ig_steps: a.ig_steps,
    };
    let report = metrics::evaluate(&model, &records, &cfg).context("metrics")?;
    let json = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
    emit(a.out.as_deref(), &format!("{json}\n"))?;
    if let Some(path) = &a.csv {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        for row in &report.rows {
            w.serialize(row).map_err(anyhow::Error::from)?;
        }
        w.flush().map_err(anyhow::Error::from)?;
    }
    let mut outputs: Vec<&Path> = Vec::new();
    outputs.extend(a.out.as_deref());
    outputs.extend(a.csv.as_deref());
    run.finish(&outputs)?;
    Ok(())
}

fn read_explanation(path: &Path, index: usize) -> anyhow::Result<ExplanationRecord> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let line = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .nth(index)
        .ok_or_else(|| anyhow!("render: {} has no record {index}", path.display()))?;
    serde_json::from_str(line).with_context(|| format!("render: record {index} of {}", path.display()))
}

pub fn render(a: &RenderArgs) -> CmdResult {
    check_ig_steps(a.method, a.ig_steps)?;
    let mut run = Run::start("render", a, Some(a.seed));
    let record = match (&a.input, &a.smiles, &a.model) {
        (Some(input), _, _) => {
            run.input(input);
            read_explanation(input, a.index)?
        }
        (None, Some(smiles), Some(model)) => {
            run.input(model);
            explain_one(&load_model(model)?, smiles, a.method, a.ig_steps)?
        }
        _ => return Err(usage("either --input or both --smiles and --model are required")),
    };
    let graph = MolecularGraph::from_smiles(&record.smiles).with_context(|| format!("molgraph: {:?}", record.smiles))?;
    let opts = RenderOptions {
        seed: a.seed,
        title: a.title.clone(),
        ..RenderOptions::default()
    };
    let svg = render::render_svg(&graph, &record.node_scores, &opts).context("render")?;
    emit(a.out.as_deref(), &svg)?;
    if let Some(out) = &a.out {
        run.finish(&[out])?;
    }
    Ok(())
}
