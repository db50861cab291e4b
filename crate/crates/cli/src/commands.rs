use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use log::{info, warn};
use traitbench::evalkit::{
    eval_examples, label_predictions, score_cell, sweep_traits, BackendFactory, BootstrapConfig,
    EvalReport, FailurePolicy, FitContext, SweepConfig,
};
use traitbench::jsonl::{self, Header, JsonlError};
use traitbench::predictors::{
    failure_lines, to_lines, BackendConfig, PredictError, PredictionLine, PredictionRequest,
    RemoteError, PREDICTIONS_KIND,
};
use traitbench::promptgen::{
    build_training_set, export_jsonl, serialize_example, PromptExample, PromptOptions,
};
use traitbench::psychometrics::{
    load_profiles, save_profiles, Battery, ItemResponses, NormSource, NormTable, ParticipantInfo,
    TraitOrder, TraitProfile,
};
use traitbench::scenario::{
    eval_records, load_records, save_records, split_scenarios, train_records, Bank, BankError,
    RecordError, ResponseRecord, ScenarioSplit,
};
use traitbench::synthgen::{
    gen_bank, gen_choice_model, gen_cohort, gen_responses, ChoiceSpec, GROUND_TRUTH_KIND,
};

use crate::config::{Loaded, ParseMode};
use crate::manifest::Manifest;
use crate::{CliError, SplitSide};

pub const PROMPTS_KIND: &str = "prompts";

/// State shared by one config-driven command.
pub struct Run {
    pub cfg: Loaded,
    pub manifest: Manifest,
    stage: String,
}

impl Run {
    fn stage(&mut self, name: &str) {
        info!("stage {name}");
        self.stage = name.to_string();
    }

    fn count(&mut self, key: &str, n: usize) {
        self.manifest.counts.insert(key.to_string(), n);
    }

    /// Resolve a configured path for writing and list it in the manifest.
    fn out_path(&mut self, configured: &Path) -> Result<PathBuf, CliError> {
        let full = self.cfg.path(configured);
        if let Some(parent) = full.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("{}: {e}", parent.display())))?;
        }
        self.manifest.outputs.push(configured.display().to_string());
        Ok(full)
    }

    fn out_file(&mut self, name: &str) -> Result<PathBuf, CliError> {
        let rel = self.cfg.config.paths.output_dir.join(name);
        self.out_path(&rel)
    }

    fn hash(&self) -> &str {
        &self.cfg.hash
    }

    fn sweep_config(&self) -> SweepConfig {
        let c = &self.cfg.config;
        SweepConfig {
            counts: c.counts.clone(),
            bootstrap: BootstrapConfig {
                n_resamples: c.bootstrap.n_resamples,
                seed: c.bootstrap.seed,
                policy: FailurePolicy::AsWrong,
            },
            prompt: self.prompt_options(),
            per_question: c.per_question,
        }
    }

    fn prompt_options(&self) -> PromptOptions {
        PromptOptions {
            wrap: self.cfg.config.prompt.wrap,
        }
    }

    fn trait_count(&self, requested: Option<usize>) -> Result<usize, CliError> {
        let counts = &self.cfg.config.counts;
        let n = requested.unwrap_or(counts[counts.len() - 1]);
        if n == 0 {
            return Err(CliError::Config("--traits: must be at least 1".into()));
        }
        Ok(n)
    }

    fn bank(&mut self) -> Result<Bank, CliError> {
        self.stage("load_bank");
        let path = self.cfg.input("paths.bank", &self.cfg.config.paths.bank)?;
        let bank = Bank::load(&path).map_err(bank_err)?;
        self.count("scenarios", bank.len());
        Ok(bank)
    }

    fn records(&mut self, bank: &Bank) -> Result<Vec<ResponseRecord>, CliError> {
        self.stage("load_records");
        let path = self
            .cfg
            .input("paths.records", &self.cfg.config.paths.records)?;
        let records = load_records(&path, bank).map_err(record_err)?;
        self.count("records", records.len());
        Ok(records)
    }

    fn profiles(&mut self) -> Result<BTreeMap<String, TraitProfile>, CliError> {
        self.stage("load_profiles");
        let path = self
            .cfg
            .input("paths.profiles", &self.cfg.config.paths.profiles)?;
        let list = load_profiles(&path).map_err(jsonl_err)?;
        let mut map = BTreeMap::new();
        for p in list {
            let id = p.participant_id.clone();
            if map.insert(id.clone(), p).is_some() {
                return Err(CliError::Validation(format!(
                    "{}: participant {id} appears twice",
                    path.display()
                )));
            }
        }
        self.count("participants", map.len());
        Ok(map)
    }

    fn split(&mut self, bank: &Bank) -> Result<ScenarioSplit, CliError> {
        self.stage("split");
        let s = &self.cfg.config.split;
        let split = split_scenarios(bank, s.ratio, s.seed, s.stratified)
            .map_err(|e| CliError::Config(format!("split: {e}")))?;
        self.count("train_scenarios", split.train_ids.len());
        self.count("eval_scenarios", split.eval_ids.len());
        Ok(split)
    }

    fn backend(&self, name: &str) -> Result<BackendConfig, CliError> {
        let backends = self.cfg.config.resolved_backends();
        let names: Vec<String> = backends.iter().map(|b| b.name()).collect();
        backends
            .into_iter()
            .find(|b| b.name() == name)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "--backend: no backend named {name:?} (configured: {names:?})"
                ))
            })
    }
}

fn bank_err(e: BankError) -> CliError {
    match e {
        BankError::Io { .. } => CliError::runtime(e),
        other => CliError::validation(other),
    }
}

fn jsonl_err(e: JsonlError) -> CliError {
    match e {
        JsonlError::Io { .. } => CliError::runtime(e),
        other => CliError::validation(other),
    }
}

fn record_err(e: RecordError) -> CliError {
    match e {
        RecordError::Jsonl(j) => jsonl_err(j),
        other => CliError::validation(other),
    }
}

fn predict_err(e: PredictError) -> CliError {
    match e {
        PredictError::Remote(RemoteError::Config(_) | RemoteError::MissingAuth(_)) => {
            CliError::Config(e.to_string())
        }
        other => CliError::runtime(other),
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::runtime(format!("{}: {e}", path.display()))
}

/// Load the config, run `body`, and write the manifest whatever the outcome.
pub fn with_run<F>(command: &str, config: &Path, body: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Run) -> Result<(), CliError>,
{
    let cfg = Loaded::load(config)?;
    let mut manifest = Manifest::new(command, &cfg.hash);
    manifest.seeds.insert("split".into(), cfg.config.split.seed);
    manifest
        .seeds
        .insert("bootstrap".into(), cfg.config.bootstrap.seed);
    if let Some(s) = &cfg.config.synth {
        manifest.seeds.insert("synth".into(), s.seed);
    }
    let mut run = Run {
        cfg,
        manifest,
        stage: "start".into(),
    };
    let result = body(&mut run);
    match &result {
        Ok(()) if run.manifest.status == "running" => run.manifest.status = "ok".into(),
        Ok(()) => {}
        Err(e) => {
            run.manifest.status = "failed".into();
            run.manifest.failed_stage = Some(run.stage.clone());
            run.manifest.error = Some(e.to_string());
        }
    }
    let dir = run.cfg.path(&run.cfg.config.paths.output_dir);
    if let Err(e) = run.manifest.write(&dir) {
        let e = io_err(&dir, e);
        return result.and(Err(e));
    }
    result
}

pub fn bank_validate(path: Option<PathBuf>, config: Option<PathBuf>) -> Result<(), CliError> {
    let loaded = config.as_deref().map(Loaded::load).transpose()?;
    let bank_path = match (&path, &loaded) {
        (Some(p), _) => p.clone(),
        (None, Some(l)) => l.input("paths.bank", &l.config.paths.bank)?,
        (None, None) => {
            return Err(CliError::Config(
                "bank validate needs a PATH or --config".into(),
            ))
        }
    };
    if !bank_path.exists() {
        return Err(CliError::Config(format!(
            "{} does not exist",
            bank_path.display()
        )));
    }
    let bank = Bank::load(&bank_path).map_err(bank_err)?;
    let mut by_type: BTreeMap<&str, usize> = BTreeMap::new();
    for s in bank.scenarios() {
        *by_type.entry(s.scenario_type.token()).or_default() += 1;
    }
    let breakdown: Vec<String> = by_type.iter().map(|(t, n)| format!("{t} {n}")).collect();
    println!(
        "bank ok: {} scenarios ({})",
        bank.len(),
        breakdown.join(", ")
    );
    if let Some(l) = loaded {
        let records_path = l.input("paths.records", &l.config.paths.records)?;
        let records = load_records(&records_path, &bank).map_err(record_err)?;
        let pairs: BTreeSet<(&str, &str)> = records
            .iter()
            .map(|r| (r.participant_id.as_str(), r.scenario_id.as_str()))
            .collect();
        if pairs.len() != records.len() {
            return Err(CliError::Validation(format!(
                "{}: {} duplicate (participant, scenario) records",
                records_path.display(),
                records.len() - pairs.len()
            )));
        }
        println!("records ok: {} records", records.len());
    }
    Ok(())
}

pub fn synth(run: &mut Run) -> Result<(), CliError> {
    let s = run
        .cfg
        .config
        .synth
        .clone()
        .ok_or_else(|| CliError::Config("synth: section is required".into()))?;
    let config_err = |e: traitbench::synthgen::SynthError| CliError::Config(format!("synth: {e}"));

    run.stage("bank");
    let bank = gen_bank(s.scenarios).map_err(config_err)?;
    run.stage("cohort");
    let cohort = gen_cohort(s.participants, s.traits, s.seed).map_err(config_err)?;
    run.stage("choice_model");
    let spec = ChoiceSpec {
        informative: s.informative,
        interactions: s.interactions,
        tau: s.tau,
        seed: s.seed,
        target_bayes: s.target_bayes,
        specificity: s.specificity,
    };
    let model = gen_choice_model(&bank, s.traits, &spec).map_err(config_err)?;
    run.stage("responses");
    let (records, truths) =
        gen_responses(&cohort, &bank, &model, s.coverage, s.seed).map_err(config_err)?;

    run.stage("write");
    let paths = run.cfg.config.paths.clone();
    let p = run.out_path(&paths.bank)?;
    bank.save(&p).map_err(bank_err)?;
    let p = run.out_path(&paths.profiles)?;
    save_profiles(&p, &cohort, Some(run.hash())).map_err(jsonl_err)?;
    let p = run.out_path(&paths.records)?;
    save_records(&p, &records).map_err(record_err)?;
    let p = run.out_file("choice_model.json")?;
    let text = serde_json::to_string_pretty(&model).expect("model serializes");
    std::fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))?;
    let p = run.out_file("ground_truth.jsonl")?;
    jsonl::write_jsonl(
        &p,
        Some(&Header::with_hash(GROUND_TRUTH_KIND, run.hash())),
        &truths,
    )
    .map_err(jsonl_err)?;

    run.count("scenarios", bank.len());
    run.count("participants", cohort.len());
    run.count("records", records.len());
    run.count("ground_truth", truths.len());
    println!(
        "synth: {} participants, {} scenarios, {} records, bayes accuracy {}",
        cohort.len(),
        bank.len(),
        records.len(),
        model
            .bayes_accuracy
            .map_or("n/a".to_string(), |a| format!("{a:.4}"))
    );
    Ok(())
}

pub fn score(run: &mut Run) -> Result<(), CliError> {
    run.stage("load_inputs");
    let paths = run.cfg.config.paths.clone();
    let participants_path = paths
        .participants
        .as_ref()
        .ok_or_else(|| CliError::Config("paths.participants: required by score".into()))?;
    let items_path = paths
        .items
        .as_ref()
        .ok_or_else(|| CliError::Config("paths.items: required by score".into()))?;
    let participants_path = run.cfg.input("paths.participants", participants_path)?;
    let items_path = run.cfg.input("paths.items", items_path)?;
    let battery = match run
        .cfg
        .optional_input("paths.battery", paths.battery.as_ref())?
    {
        Some(p) => {
            Battery::load(&p).map_err(|e| CliError::Config(format!("paths.battery: {e}")))?
        }
        None => Battery::shipped(),
    };
    let norms = match run
        .cfg
        .optional_input("paths.norms", paths.norms.as_ref())?
    {
        Some(p) => NormSource::Table(
            NormTable::load(&p).map_err(|e| CliError::Config(format!("paths.norms: {e}")))?,
        ),
        None => NormSource::CohortInternal,
    };
    let order = match run
        .cfg
        .optional_input("paths.trait_order", paths.trait_order.as_ref())?
    {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| io_err(&p, e))?;
            TraitOrder::parse(&text)
                .map_err(|e| CliError::Config(format!("paths.trait_order: {e}")))?
        }
        None => TraitOrder::canonical(),
    };
    let participants: Vec<ParticipantInfo> =
        jsonl::read_jsonl(&participants_path, None).map_err(jsonl_err)?;
    let items: Vec<ItemResponses> = jsonl::read_jsonl(&items_path, None).map_err(jsonl_err)?;

    run.stage("score");
    let (profiles, snapshot) = battery
        .score_cohort(&participants, &items, &norms, &order)
        .map_err(CliError::validation)?;

    run.stage("write");
    let p = run.out_path(&paths.profiles)?;
    save_profiles(&p, &profiles, Some(run.hash())).map_err(jsonl_err)?;
    let p = run.out_file("scoring_snapshot.json")?;
    let text = serde_json::to_string_pretty(&snapshot).expect("snapshot serializes");
    std::fs::write(&p, text + "\n").map_err(|e| io_err(&p, e))?;
    run.count("participants", profiles.len());
    run.count("item_sets", items.len());
    println!(
        "score: {} profiles with {} traits",
        profiles.len(),
        order.traits.len()
    );
    Ok(())
}

pub fn prompts(run: &mut Run, traits: Option<usize>, side: SplitSide) -> Result<(), CliError> {
    let n = run.trait_count(traits)?;
    let bank = run.bank()?;
    let records = run.records(&bank)?;
    let profiles = run.profiles()?;
    let split = run.split(&bank)?;
    let chosen: Vec<&ResponseRecord> = match side {
        SplitSide::Eval => eval_records(&records, &split),
        SplitSide::Train => train_records(&records, &split),
        SplitSide::All => records.iter().collect(),
    };

    run.stage("serialize");
    let opts = run.prompt_options();
    let mut examples: Vec<PromptExample> = Vec::with_capacity(chosen.len());
    for r in chosen {
        let profile = profiles.get(&r.participant_id).ok_or_else(|| {
            CliError::Validation(format!("participant {} has no profile", r.participant_id))
        })?;
        let scenario = bank
            .get(&r.scenario_id)
            .expect("records were validated against the bank");
        let qids: Vec<String> = r.truth.keys().cloned().collect();
        if qids.is_empty() {
            continue;
        }
        examples.push(
            serialize_example(profile, scenario, &r.context_answers, &qids, n, opts)
                .map_err(CliError::validation)?,
        );
    }

    run.stage("write");
    let side_name = match side {
        SplitSide::Eval => "eval",
        SplitSide::Train => "train",
        SplitSide::All => "all",
    };
    let p = run.out_file(&format!("prompts_{side_name}_t{n}.jsonl"))?;
    jsonl::write_jsonl(
        &p,
        Some(&Header::with_hash(PROMPTS_KIND, run.hash())),
        &examples,
    )
    .map_err(jsonl_err)?;
    run.count("prompts", examples.len());
    println!(
        "prompts: wrote {} {side_name} prompts at {n} traits",
        examples.len()
    );
    Ok(())
}

fn is_remote_failure(line: &PredictionLine) -> bool {
    line.error
        .as_deref()
        .is_some_and(|e| e.starts_with("remote_"))
}

pub fn predict(
    run: &mut Run,
    backend: &str,
    traits: Option<usize>,
    resume: bool,
    chunk: usize,
) -> Result<(), CliError> {
    if chunk == 0 {
        return Err(CliError::Config("--chunk: must be at least 1".into()));
    }
    let n = run.trait_count(traits)?;
    let factory = run.backend(backend)?;
    let bank = run.bank()?;
    let records = run.records(&bank)?;
    let profiles = run.profiles()?;
    let split = run.split(&bank)?;
    let eval = eval_records(&records, &split);
    let train = train_records(&records, &split);

    run.stage("serialize");
    let examples = eval_examples(&eval, &profiles, &bank, n, run.prompt_options())
        .map_err(CliError::validation)?;

    run.stage("resume");
    let out = run.out_file(&format!("predictions/{}_t{n}.jsonl", factory.name()))?;
    let mut done: BTreeSet<(String, String)> = BTreeSet::new();
    let mut kept_lines = 0;
    if resume && out.exists() {
        let header = jsonl::read_header(&out).map_err(jsonl_err)?;
        let previous = header.and_then(|h| h.config_hash);
        if previous.as_deref() != Some(run.hash()) {
            return Err(CliError::Validation(format!(
                "{}: written under config hash {:?}, current config hash is {}",
                out.display(),
                previous,
                run.hash()
            )));
        }
        let lines: Vec<PredictionLine> =
            jsonl::read_jsonl(&out, Some(PREDICTIONS_KIND)).map_err(jsonl_err)?;
        let keep: Vec<PredictionLine> = lines
            .into_iter()
            .filter(|l| !is_remote_failure(l))
            .collect();
        done = keep
            .iter()
            .map(|l| (l.participant.clone(), l.scenario.clone()))
            .collect();
        kept_lines = keep.len();
        jsonl::write_jsonl(
            &out,
            Some(&Header::with_hash(PREDICTIONS_KIND, run.hash())),
            &keep,
        )
        .map_err(jsonl_err)?;
    } else {
        jsonl::write_jsonl::<PredictionLine>(
            &out,
            Some(&Header::with_hash(PREDICTIONS_KIND, run.hash())),
            &[],
        )
        .map_err(jsonl_err)?;
    }
    let pending: Vec<&PromptExample> = examples
        .iter()
        .filter(|e| !done.contains(&(e.participant_id.clone(), e.scenario_id.clone())))
        .collect();
    run.count("resumed_pairs", done.len());
    run.count("pending_pairs", pending.len());

    run.stage("build_backend");
    let ctx = FitContext {
        n_traits: n,
        train: &train,
        profiles: &profiles,
        bank: &bank,
    };
    let predictor = factory.build(&ctx).map_err(predict_err)?;
    if predictor.uses_network() {
        info!("backend {} queries a remote endpoint", predictor.name());
    }

    run.stage("predict");
    let hash = run.hash().to_string();
    let (mut lines_written, mut parse_failures, mut remote_failures) = (0, 0, 0);
    for batch in pending.chunks(chunk) {
        let reqs: Vec<PredictionRequest> = batch
            .iter()
            .map(|ex| PredictionRequest {
                example: ex,
                profile: &profiles[&ex.participant_id],
                scenario: bank
                    .get(&ex.scenario_id)
                    .expect("eval scenarios are in the bank"),
            })
            .collect();
        let results = predictor.predict_batch(&reqs);
        let mut lines = Vec::new();
        for (ex, res) in batch.iter().zip(&results) {
            match to_lines(ex, res, Some(&hash)) {
                Ok(l) => lines.extend(l),
                Err(e) => lines.extend(failure_lines(ex, predictor.name(), &e, Some(&hash))),
            }
        }
        for l in &lines {
            if is_remote_failure(l) {
                remote_failures += 1;
            } else if l.error.is_some() {
                parse_failures += 1;
            }
        }
        jsonl::append_jsonl(&out, &lines).map_err(jsonl_err)?;
        lines_written += lines.len();
        info!("predict: {} lines so far", kept_lines + lines_written);
    }
    run.count("lines", kept_lines + lines_written);
    run.count("parse_failures", parse_failures);
    run.count("remote_failures", remote_failures);
    if remote_failures > 0 {
        run.manifest.status = "partial".into();
        warn!(
            "{remote_failures} lines failed on the remote side; rerun with --resume to retry them"
        );
    }
    println!(
        "predict: {} pairs, {} new lines ({} parse failures, {} remote failures) -> {}",
        examples.len(),
        lines_written,
        parse_failures,
        remote_failures,
        out.display()
    );
    Ok(())
}

pub fn eval(run: &mut Run, predictions: &Path) -> Result<(), CliError> {
    run.stage("load_predictions");
    if !predictions.exists() {
        return Err(CliError::Config(format!(
            "--predictions: {} does not exist",
            predictions.display()
        )));
    }
    let header = jsonl::read_header(predictions).map_err(jsonl_err)?;
    match header.and_then(|h| h.config_hash) {
        Some(h) if h != run.hash() => {
            warn!(
                "{} was written under config hash {h}, current is {}",
                predictions.display(),
                run.hash()
            )
        }
        _ => {}
    }
    let lines: Vec<PredictionLine> =
        jsonl::read_jsonl(predictions, Some(PREDICTIONS_KIND)).map_err(jsonl_err)?;
    if lines.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no prediction lines",
            predictions.display()
        )));
    }
    run.count("lines", lines.len());
    let bank = run.bank()?;
    let records = run.records(&bank)?;
    let split = run.split(&bank)?;

    run.stage("score");
    let default_traits = run.trait_count(None)?;
    let mut groups: BTreeMap<(String, usize), Vec<PredictionLine>> = BTreeMap::new();
    for l in lines {
        groups
            .entry((l.backend.clone(), l.traits.unwrap_or(default_traits)))
            .or_default()
            .push(l);
    }
    let lenient = run.cfg.config.parse_mode == ParseMode::Lenient;
    let cfg = run.sweep_config();
    let mut report = EvalReport::new(run.hash());
    for ((backend, traits), group) in &groups {
        let preds = label_predictions(group, &records, &bank, Some(&split), lenient)
            .map_err(CliError::validation)?;
        let (rows, summary) =
            score_cell(backend, *traits, &preds, &cfg).map_err(CliError::validation)?;
        report.rows.extend(rows);
        report.cells.push(summary);
    }
    report.sort_rows();
    run.count("cells", groups.len());

    run.stage("write");
    let stem = format!(
        "eval_{}",
        predictions
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("predictions")
    );
    emit(run, &report, &stem)?;
    print!("{}", report.to_csv().map_err(CliError::runtime)?);
    Ok(())
}

fn emit(run: &mut Run, report: &EvalReport, stem: &str) -> Result<(), CliError> {
    let dir = run.cfg.path(&run.cfg.config.paths.output_dir);
    report.emit(&dir, stem).map_err(|e| io_err(&dir, e))?;
    run.out_file(&format!("{stem}.csv"))?;
    run.out_file(&format!("{stem}.json"))?;
    Ok(())
}

pub fn sweep(run: &mut Run) -> Result<(), CliError> {
    if run.cfg.config.backends.is_empty() {
        return Err(CliError::Config(
            "backends: at least one backend is required".into(),
        ));
    }
    let bank = run.bank()?;
    let records = run.records(&bank)?;
    let profiles = run.profiles()?;
    let split = run.split(&bank)?;

    run.stage("sweep");
    let backends = run.cfg.config.resolved_backends();
    let factories: Vec<&dyn BackendFactory> =
        backends.iter().map(|b| b as &dyn BackendFactory).collect();
    let cfg = run.sweep_config();
    let report = sweep_traits(
        &factories,
        &bank,
        &records,
        &profiles,
        &split,
        &cfg,
        run.hash(),
    )
    .map_err(CliError::validation)?;
    run.count("cells", report.cells.len());
    run.count("failed_cells", report.failures.len());

    run.stage("write");
    emit(run, &report, "sweep")?;
    print!("{}", report.to_csv().map_err(CliError::runtime)?);
    if !report.failures.is_empty() {
        run.stage("sweep");
        let names: Vec<String> = report
            .failures
            .iter()
            .map(|f| format!("{}@{}", f.model, f.traits))
            .collect();
        return Err(CliError::Runtime(format!(
            "{} cell(s) failed: {}",
            names.len(),
            names.join(", ")
        )));
    }
    Ok(())
}

pub fn export_sft(
    run: &mut Run,
    traits: Option<usize>,
    weight: Option<f64>,
) -> Result<(), CliError> {
    let n = run.trait_count(traits)?;
    let weight = weight.unwrap_or(run.cfg.config.sft.answer_weight);
    let bank = run.bank()?;
    let records = run.records(&bank)?;
    let profiles = run.profiles()?;
    let split = run.split(&bank)?;

    run.stage("build");
    let mut sft = build_training_set(
        &records,
        &profiles,
        &bank,
        &split,
        n,
        weight,
        run.prompt_options(),
    )
    .map_err(|e| match e {
        traitbench::promptgen::SftError::Weight(_) => CliError::Config(format!("--weight: {e}")),
        other => CliError::validation(other),
    })?;
    for r in &mut sft {
        r.meta.config_hash = Some(run.hash().to_string());
    }

    run.stage("write");
    let p = run.out_file(&format!("sft_t{n}.jsonl"))?;
    export_jsonl(&sft, &p).map_err(|e| io_err(&p, e))?;
    run.count("sft_records", sft.len());
    println!(
        "export-sft: {} training records at {n} traits -> {}",
        sft.len(),
        p.display()
    );
    Ok(())
}
