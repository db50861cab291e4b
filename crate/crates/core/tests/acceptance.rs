//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed or ran over its time budget.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, HashSet};
use std::hash::{Hash, Hasher};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use traitbench::evalkit::{
    bootstrap, confusion, parse_csv, pooled, scores, sweep_traits, BackendFactory, BootstrapConfig,
    EvalReport, FailurePolicy, LabeledPrediction, Metric, MetricResult, ReportRow, SweepConfig,
    CSV_COLUMNS,
};
use traitbench::outparse::{parse_lenient, parse_strict, ErrorKind, Expected, PredictionSet};
use traitbench::predictors::mock::{MockReply, MockServer};
use traitbench::predictors::{BackendConfig, RemoteConfig, TrainingSet};
use traitbench::promptgen::{format_z, serialize_example, PromptOptions};
use traitbench::psychometrics::{Battery, BinningRule, TraitProfile, TraitScore};
use traitbench::scenario::{eval_records, split_scenarios, train_records, ContextAnswer};
use traitbench::synthgen::{
    example_bank, gen_bank, gen_choice_model, gen_cohort, gen_responses, ChoiceSpec,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

// ---------------------------------------------------------------- binning

fn binning_fidelity() -> Outcome {
    let battery = Battery::shipped();
    let rule = |inst: &str, sub: &str| {
        battery
            .instrument(inst)
            .unwrap_or_else(|| panic!("{inst} missing"))
            .subscales[sub]
            .binning
            .clone()
    };
    let mut checked = 0;
    let mut expect = |r: &BinningRule, v: f64, label: &str, what: &str| -> Result<(), String> {
        checked += 1;
        ensure(r.bin(v) == label, || {
            format!("{what}: {v} -> {}, expected {label}", r.bin(v))
        })
    };

    let sigma = rule("NEO-FFI", "Openness")
        .resolve()
        .map_err(|e| e.to_string())?;
    for (z, label) in [
        (-2.5, "Very low"),
        (-1.5, "Low"),
        (0.0, "Normal"),
        (1.5, "High"),
        (2.5, "Very high"),
        (0.24, "Normal"),
        (-1.56, "Low"),
        (-1.31, "Low"),
        (1.15, "High"),
        (0.76, "Normal"),
        (1.34, "High"),
        (-0.71, "Normal"),
        (1.09, "High"),
        (0.35, "Normal"),
    ] {
        expect(&sigma, z, label, "sigma bands")?;
    }
    for t in [
        "Conscientiousness",
        "Extraversion",
        "Agreeableness",
        "Neuroticism",
    ] {
        ensure(rule("NEO-FFI", t) == rule("NEO-FFI", "Openness"), || {
            format!("{t} differs from Openness")
        })?;
    }

    let ranges: [(&str, &str, &[(f64, &str)]); 6] = [
        (
            "EPQ-L",
            "Lie / Social Desirability",
            &[
                (0.0, "Low/realistic"),
                (4.0, "Low/realistic"),
                (5.0, "Normal"),
                (8.0, "Normal"),
                (9.0, "High"),
                (12.0, "High"),
            ],
        ),
        (
            "BIS-11",
            "Impulsivity",
            &[
                (30.0, "Low"),
                (52.0, "Low"),
                (53.0, "Average"),
                (71.0, "Average"),
                (72.0, "High"),
                (120.0, "High"),
            ],
        ),
        (
            "IUS-12",
            "Intolerance of Uncertainty",
            &[
                (12.0, "Low"),
                (30.0, "Low"),
                (31.0, "Moderate"),
                (45.0, "Moderate"),
                (46.0, "High"),
                (60.0, "High"),
            ],
        ),
        (
            "MSPSS",
            "Social Support",
            &[
                (1.0, "Low"),
                (2.9, "Low"),
                (3.0, "Moderate"),
                (5.0, "Moderate"),
                (5.01, "High"),
                (7.0, "High"),
            ],
        ),
        (
            "MLQ",
            "Transformational Leadership",
            &[
                (0.0, "Low"),
                (1.9, "Low"),
                (2.0, "Moderate"),
                (2.9, "Moderate"),
                (3.0, "High"),
                (4.0, "High"),
            ],
        ),
        (
            "PCL-5",
            "PTSD Severity",
            &[
                (0.0, "Non-clinical"),
                (32.0, "Non-clinical"),
                (33.0, "Probable PTSD"),
                (80.0, "Probable PTSD"),
            ],
        ),
    ];
    for (inst, sub, cases) in ranges {
        let r = rule(inst, sub)
            .resolve()
            .map_err(|e| format!("{inst}: {e}"))?;
        for &(v, label) in cases {
            expect(&r, v, label, sub)?;
        }
    }
    let bsi = rule("BSI", "Psychological Distress (GSI)")
        .resolve()
        .map_err(|e| e.to_string())?;
    for (t, label) in [
        (40.0, "Normal"),
        (62.9, "Normal"),
        (63.0, "High"),
        (80.0, "High"),
    ] {
        expect(&bsi, t, label, "GSI")?;
    }

    // quantile rules fitted on a cohort of raw scores 1..=120
    let cohort: Vec<f64> = (1..=120).map(f64::from).collect();
    let quantile: [(&str, &str, &[(f64, &str)]); 3] = [
        (
            "LOT",
            "Optimism",
            &[
                (1.0, "Low"),
                (39.0, "Low"),
                (40.0, "Moderate"),
                (79.0, "Moderate"),
                (80.0, "High"),
            ],
        ),
        (
            "BRIEF-COPE",
            "Coping Style (Adaptive)",
            &[(39.0, "Low"), (40.0, "Moderate"), (80.0, "High")],
        ),
        (
            "CD-RISC-10",
            "Resilience",
            &[
                (29.0, "Low"),
                (30.0, "Normal"),
                (89.0, "Normal"),
                (90.0, "High"),
            ],
        ),
    ];
    for (inst, sub, cases) in quantile {
        let spec = rule(inst, sub);
        ensure(!spec.is_fitted(), || {
            format!("{inst} should be fitted from data")
        })?;
        let r = spec
            .fit(&cohort)
            .and_then(|s| s.resolve())
            .map_err(|e| format!("{inst}: {e}"))?;
        for &(v, label) in cases {
            expect(&r, v, label, sub)?;
        }
    }

    let lines: [&[(&str, f64, &str)]; 2] = [
        &[
            ("Neuroticism", 0.24, "Normal"),
            ("Extraversion", -1.56, "Low"),
            ("Openness", 0.76, "Normal"),
            ("Agreeableness", -1.31, "Low"),
            ("Conscientiousness", 1.15, "High"),
        ],
        &[
            ("Neuroticism", 1.34, "High"),
            ("Extraversion", -0.71, "Normal"),
            ("Openness", 0.76, "Normal"),
            ("Agreeableness", 1.09, "High"),
            ("Conscientiousness", 0.35, "Normal"),
        ],
    ];
    let mut trait_lines = 0;
    for example in lines {
        for &(name, z, label) in example {
            let rendered = format!("{name}: z={} ({})", format_z(z), sigma.bin(z));
            let want = format!("{name}: z={z:.2} ({label})");
            ensure(rendered == want, || format!("{rendered:?} != {want:?}"))?;
            trait_lines += 1;
        }
    }
    Ok(format!("{checked} rule probes, {trait_lines} trait lines"))
}

// ---------------------------------------------------------------- golden prompt

#[derive(Deserialize)]
struct Participant {
    participant_id: String,
    age: f64,
    sex: String,
    scenario_id: String,
    question_ids: Vec<String>,
    z: Vec<(String, f64)>,
    context: Vec<ContextAnswer>,
    wrap: usize,
}

fn golden_prompt() -> Outcome {
    let p: Participant = serde_json::from_str(
        &std::fs::read_to_string(fixture("shortcut_participant.json"))
            .map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let rule = BinningRule::sigma_bands5();
    let profile = TraitProfile {
        participant_id: p.participant_id.clone(),
        age: p.age,
        sex: p.sex.clone(),
        traits: p
            .z
            .iter()
            .map(|(id, z)| TraitScore {
                trait_id: id.clone(),
                raw: *z,
                z: Some(*z),
                bin: rule.bin(*z).to_string(),
            })
            .collect(),
        trait_order_id: "canonical-v1".into(),
    };
    let bank = example_bank();
    let scenario = bank.get(&p.scenario_id).ok_or("scenario missing")?;
    let text = serialize_example(
        &profile,
        scenario,
        &p.context,
        &p.question_ids,
        p.z.len(),
        PromptOptions { wrap: Some(p.wrap) },
    )
    .map_err(|e| e.to_string())?
    .text;
    let golden = std::fs::read(fixture("shortcut_prompt_w79.txt")).map_err(|e| e.to_string())?;
    let at = text
        .bytes()
        .zip(&golden)
        .take_while(|(a, b)| a == *b)
        .count();
    ensure(text.as_bytes() == golden.as_slice(), || {
        format!("differs at byte {at}")
    })?;
    let excerpt =
        std::fs::read(fixture("shortcut_prompt_excerpt.txt")).map_err(|e| e.to_string())?;
    ensure(text.as_bytes().starts_with(&excerpt), || {
        "reference excerpt is not a prefix".into()
    })?;
    Ok(format!("{} bytes identical", golden.len()))
}

// ---------------------------------------------------------------- parser

const OUTPUT_FORMAT_EXAMPLE: &str = r#"{
"predictions": {"Q4": 5, "Q5": 3},
"reasoning": {"Q4": "...", "Q5": "..."}
}"#;

fn check_typed(set: &PredictionSet, expected: &Expected) -> Result<(), String> {
    for (qid, &o) in &set.predictions {
        let count = expected
            .get(qid)
            .ok_or_else(|| format!("unexpected key {qid}"))?;
        ensure((1..=*count).contains(&o), || {
            format!("{qid}: {o} out of range")
        })?;
    }
    ensure(set.predictions.len() == expected.len(), || {
        "incomplete prediction set".into()
    })
}

fn fuzz_string(rng: &mut ChaCha20Rng) -> String {
    const TOKENS: &[&str] = &[
        "{",
        "}",
        "[",
        "]",
        ":",
        ",",
        "\"",
        "\"Q4\"",
        "\"Q5\"",
        "\"predictions\"",
        "\"reasoning\"",
        "5",
        "3",
        "0",
        "-1",
        "1e3",
        "2.0",
        "null",
        "true",
        "```json",
        "```",
        "\n",
        " ",
        "\\",
        "\\u00e9",
        "é",
        "\u{1F600}",
        "\u{0}",
        "Q4",
        "Answer:",
        "option",
        "99999999999999999999",
    ];
    match rng.gen_range(0..3) {
        0 => {
            let n = rng.gen_range(0..80);
            (0..n)
                .map(|_| char::from_u32(rng.gen_range(0..0x11000)).unwrap_or('\u{FFFD}'))
                .collect()
        }
        1 => {
            let n = rng.gen_range(0..40);
            (0..n).map(|_| *TOKENS.choose(rng).unwrap()).collect()
        }
        _ => {
            let mut chars: Vec<char> = OUTPUT_FORMAT_EXAMPLE.chars().collect();
            for _ in 0..rng.gen_range(1..6) {
                let at = rng.gen_range(0..=chars.len());
                match rng.gen_range(0..3) {
                    0 if at < chars.len() => {
                        chars.remove(at);
                    }
                    1 if at < chars.len() => {
                        chars[at] = *b"{}[]:,\"0123456789 ".choose(rng).unwrap() as char
                    }
                    _ => chars
                        .splice(at..at, TOKENS.choose(rng).unwrap().chars())
                        .for_each(drop),
                }
            }
            chars.into_iter().collect()
        }
    }
}

fn parser_robustness() -> Outcome {
    let expected: Expected = [("Q4".to_string(), 5), ("Q5".to_string(), 5)].into();
    let set =
        parse_strict(OUTPUT_FORMAT_EXAMPLE, &expected).map_err(|e| format!("strict: {e:?}"))?;
    ensure(
        set.predictions == BTreeMap::from([("Q4".into(), 5), ("Q5".into(), 3)]),
        || format!("{:?}", set.predictions),
    )?;
    ensure(set.repairs.is_empty(), || {
        "strict parse made repairs".into()
    })?;
    let rationale = set.rationale.ok_or("reasoning dropped")?;
    ensure(rationale["Q4"] == "...", || "reasoning text altered".into())?;

    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let (mut ok, mut errors) = (0usize, 0usize);
    let n = 100_000;
    for i in 0..n {
        let s = fuzz_string(&mut rng);
        for (mode, parse) in [
            ("strict", parse_strict as fn(&str, &Expected) -> _),
            ("lenient", parse_lenient),
        ] {
            match catch_unwind(AssertUnwindSafe(|| parse(&s, &expected))) {
                Err(_) => return Err(format!("{mode} parser panicked on input {i}: {s:?}")),
                Ok(Ok(set)) => {
                    check_typed(&set, &expected).map_err(|e| format!("{mode} on {s:?}: {e}"))?;
                    ok += 1;
                }
                Ok(Err(e)) => {
                    ensure(ErrorKind::ALL.contains(&e.kind), || {
                        format!("untyped error {e:?}")
                    })?;
                    ensure(e.raw == s, || "error lost the raw text".into())?;
                    errors += 1;
                }
            }
        }
    }
    Ok(format!(
        "example parses strictly; {n} fuzz strings, {ok} parsed, {errors} typed errors"
    ))
}

// ---------------------------------------------------------------- metric oracle

/// Brute-force metrics straight from (truth, prediction) pairs.
fn oracle_metrics(pairs: &[(u32, Option<u32>)], k: u32) -> (f64, f64, f64) {
    let n = pairs.len() as f64;
    let acc = pairs.iter().filter(|(t, p)| Some(*t) == *p).count() as f64 / n;
    let mut recalls = Vec::new();
    let mut f1s = Vec::new();
    for c in 1..=k {
        let support = pairs.iter().filter(|(t, _)| *t == c).count();
        if support == 0 {
            continue;
        }
        let tp = pairs
            .iter()
            .filter(|(t, p)| *t == c && *p == Some(c))
            .count() as f64;
        let predicted = pairs.iter().filter(|(_, p)| *p == Some(c)).count() as f64;
        let recall = tp / support as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        recalls.push(recall);
        f1s.push(if tp == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    (acc, mean(&recalls), mean(&f1s))
}

fn metric_oracle() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for inst in 0..1000 {
        let k = rng.gen_range(2..=7u32);
        let n = rng.gen_range(1..=300);
        let skew = rng.gen_range(0.0..1.0);
        let fail_rate = if inst % 3 == 0 {
            rng.gen_range(0.0..0.3)
        } else {
            0.0
        };
        let pairs: Vec<(u32, Option<u32>)> = (0..n)
            .map(|_| {
                let t = rng.gen_range(1..=k);
                let p = if rng.gen_bool(fail_rate) {
                    None
                } else if rng.gen_bool(skew) {
                    Some(t)
                } else {
                    Some(rng.gen_range(1..=k))
                };
                (t, p)
            })
            .collect();
        let preds: Vec<LabeledPrediction> = pairs
            .iter()
            .enumerate()
            .map(|(i, &(truth, predicted))| LabeledPrediction {
                participant_id: format!("p{i}"),
                scenario_id: "s".into(),
                qid: "Q1".into(),
                predicted,
                truth,
                option_count: k,
            })
            .collect();
        let s = scores(
            &confusion(&preds, k as usize, FailurePolicy::AsWrong).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        let (acc, bal, f1) = oracle_metrics(&pairs, k);
        for (name, got, want) in [
            ("accuracy", s.accuracy, acc),
            ("balanced", s.balanced_accuracy, bal),
            ("macro-F1", s.macro_f1, f1),
        ] {
            let d = (got - want).abs();
            worst = worst.max(d);
            ensure(d <= 1e-12, || {
                format!("instance {inst}: {name} {got} vs oracle {want}")
            })?;
        }
    }
    Ok(format!("1000 instances, max abs diff {worst:.1e}"))
}

// ---------------------------------------------------------------- chance calibration

/// Question ids listed after the QUESTIONS: header of a prompt.
fn prompt_qids(prompt: &str) -> Vec<String> {
    prompt
        .split("QUESTIONS:")
        .nth(1)
        .unwrap_or("")
        .lines()
        .filter_map(|l| l.strip_suffix(':'))
        .filter(|l| l.starts_with('Q') && l[1..].chars().all(|c| c.is_ascii_digit()) && l.len() > 1)
        .map(String::from)
        .collect()
}

fn chance_calibration() -> Outcome {
    let bank = gen_bank(40).map_err(|e| e.to_string())?;
    let cohort = gen_cohort(400, 5, 31).map_err(|e| e.to_string())?;
    let model = gen_choice_model(
        &bank,
        5,
        &ChoiceSpec {
            informative: 5,
            seed: 32,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let (records, _) = gen_responses(&cohort, &bank, &model, 1.0, 33).map_err(|e| e.to_string())?;
    let profiles: BTreeMap<String, TraitProfile> = cohort
        .into_iter()
        .map(|p| (p.participant_id.clone(), p))
        .collect();
    let split = split_scenarios(&bank, 0.75, 34, true).map_err(|e| e.to_string())?;

    // the remote backend talks to a local mock that answers uniformly,
    // keyed by the prompt, and rejects one prompt in nine on first sight so
    // retries are exercised too
    let seen = Mutex::new(HashSet::new());
    let server = MockServer::start(8, move |req| {
        let mut h = DefaultHasher::new();
        req.prompt().hash(&mut h);
        let key = h.finish();
        if key % 9 == 0 && seen.lock().unwrap().insert(key) {
            return MockReply::status(503);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(key);
        let body: Vec<String> = prompt_qids(req.prompt())
            .iter()
            .map(|q| format!("\"{q}\": {}", rng.gen_range(1..=5)))
            .collect();
        MockReply::completion(&format!("{{{}}}", body.join(", ")))
    })
    .map_err(|e| e.to_string())?;
    let remote = BackendConfig::RemoteChat(RemoteConfig {
        name: Some("mock_remote".into()),
        endpoint: server.url().to_string(),
        model_name: "mock".into(),
        timeout_s: 10.0,
        concurrency_cap: 8,
        backoff_base_s: 0.001,
        backoff_cap_s: 0.01,
        ..Default::default()
    });
    let uniform = BackendConfig::UniformRandom { seed: 35 };
    let backends: [&dyn BackendFactory; 2] = [&uniform, &remote];

    let eval = eval_records(&records, &split);
    let cfg = SweepConfig {
        counts: vec![5],
        ..Default::default()
    };
    let mut lines = Vec::new();
    for backend in backends {
        let ctx = traitbench::evalkit::FitContext {
            n_traits: 5,
            train: &[],
            profiles: &profiles,
            bank: &bank,
        };
        let predictor = backend.build(&ctx).map_err(|e| e.to_string())?;
        let examples = traitbench::evalkit::eval_examples(&eval, &profiles, &bank, 5, cfg.prompt)
            .map_err(|e| e.to_string())?;
        let preds = traitbench::evalkit::predict_cell(
            predictor.as_ref(),
            &eval,
            &examples,
            &profiles,
            &bank,
        )
        .map_err(|e| e.to_string())?;
        let five: Vec<&LabeledPrediction> = preds
            .iter()
            .filter(|p| p.option_count == 5)
            .take(5000)
            .collect();
        ensure(five.len() == 5000, || {
            format!("only {} five-option predictions", five.len())
        })?;
        let acc = five.iter().filter(|p| p.predicted == Some(p.truth)).count() as f64 / 5000.0;
        ensure((acc - 0.20).abs() <= 0.02, || {
            format!("{}: accuracy {acc}", backend.name())
        })?;
        lines.push(format!("{} {acc:.4}", backend.name()));
    }
    ensure(server.requests() > eval.len(), || {
        "mock server saw no retries".into()
    })?;
    Ok(format!(
        "n=5000: {}; {} mock requests",
        lines.join(", "),
        server.requests()
    ))
}

// ---------------------------------------------------------------- bootstrap

fn bernoulli_cohort(
    n_participants: usize,
    per: usize,
    p: f64,
    rng: &mut ChaCha20Rng,
) -> Vec<LabeledPrediction> {
    let mut out = Vec::with_capacity(n_participants * per);
    for i in 0..n_participants {
        for j in 0..per {
            let truth = rng.gen_range(1..=2u32);
            let predicted = if rng.gen_bool(p) { truth } else { 3 - truth };
            out.push(LabeledPrediction {
                participant_id: format!("p{i:04}"),
                scenario_id: format!("s{j}"),
                qid: "Q1".into(),
                predicted: Some(predicted),
                truth,
                option_count: 2,
            });
        }
    }
    out
}

fn same_bits(a: &MetricResult, b: &MetricResult) -> bool {
    let bits = |m: &MetricResult| {
        let mut v = vec![
            m.point.to_bits(),
            m.mean.to_bits(),
            m.std.to_bits(),
            m.parse_failure_rate.to_bits(),
        ];
        v.extend(m.percentiles.iter().map(|x| x.to_bits()));
        v
    };
    a == b && bits(a) == bits(b)
}

fn bootstrap_validity() -> Outcome {
    let acc = || pooled(Metric::Accuracy, FailurePolicy::AsWrong);
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let preds = bernoulli_cohort(150, 4, 0.6, &mut rng);
    let cfg = BootstrapConfig {
        n_resamples: 2000,
        seed: 41,
        policy: FailurePolicy::AsWrong,
    };
    let a = bootstrap(&preds, Metric::Accuracy, acc(), &cfg).map_err(|e| e.to_string())?;
    let b = bootstrap(&preds, Metric::Accuracy, acc(), &cfg).map_err(|e| e.to_string())?;
    ensure(same_bits(&a, &b), || {
        "same seed gave different results".into()
    })?;
    let mut shuffled = preds.clone();
    shuffled.shuffle(&mut rng);
    let c = bootstrap(&shuffled, Metric::Accuracy, acc(), &cfg).map_err(|e| e.to_string())?;
    ensure(same_bits(&a, &c), || {
        "input order changed the result".into()
    })?;

    let single = bernoulli_cohort(1, 9, 0.5, &mut rng);
    let s = bootstrap(&single, Metric::Accuracy, acc(), &cfg).map_err(|e| e.to_string())?;
    ensure(s.std == 0.0, || format!("single participant std {}", s.std))?;
    ensure(s.percentiles.iter().all(|&v| v == s.point), || {
        "single participant percentiles vary".into()
    })?;

    let truth = 0.5;
    let cohorts = 500;
    let mut covered = 0;
    for i in 0..cohorts {
        let mut rng = ChaCha20Rng::seed_from_u64(10_000 + i);
        let preds = bernoulli_cohort(120, 5, truth, &mut rng);
        let cfg = BootstrapConfig {
            n_resamples: 1000,
            seed: i,
            policy: FailurePolicy::AsWrong,
        };
        let r = bootstrap(&preds, Metric::Accuracy, acc(), &cfg).map_err(|e| e.to_string())?;
        if r.percentiles[0] <= truth && truth <= r.percentiles[4] {
            covered += 1;
        }
    }
    let coverage = covered as f64 / cohorts as f64;
    ensure((0.92..=0.98).contains(&coverage), || {
        format!("coverage {coverage}")
    })?;
    Ok(format!("bit-identical rerun, single-participant std 0, coverage {coverage:.3} over {cohorts} cohorts"))
}

// ---------------------------------------------------------------- trait scaling

fn trait_scaling() -> Outcome {
    let traits = 74;
    let bank = gen_bank(55).map_err(|e| e.to_string())?;
    let cohort = gen_cohort(2000, traits, 11).map_err(|e| e.to_string())?;
    let model = gen_choice_model(
        &bank,
        traits,
        &ChoiceSpec {
            informative: 20,
            seed: 12,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let bayes = model.bayes_accuracy.ok_or("choice model not calibrated")?;
    ensure((bayes - 0.6).abs() < 0.05, || {
        format!("Bayes accuracy {bayes}")
    })?;
    let (records, _) = gen_responses(&cohort, &bank, &model, 0.6, 13).map_err(|e| e.to_string())?;
    let profiles: BTreeMap<String, TraitProfile> = cohort
        .into_iter()
        .map(|p| (p.participant_id.clone(), p))
        .collect();
    let split = split_scenarios(&bank, 0.75, 14, true).map_err(|e| e.to_string())?;

    let tm = BackendConfig::TraitModel {
        hyper: Default::default(),
        features: Default::default(),
    };
    let majority = BackendConfig::Majority;
    let uniform = BackendConfig::UniformRandom { seed: 1 };
    let backends: [&dyn BackendFactory; 3] = [&tm, &majority, &uniform];
    let cfg = SweepConfig {
        bootstrap: BootstrapConfig {
            n_resamples: 10_000,
            seed: 15,
            policy: FailurePolicy::AsWrong,
        },
        ..Default::default()
    };
    let report = sweep_traits(
        &backends,
        &bank,
        &records,
        &profiles,
        &split,
        &cfg,
        "acceptance",
    )
    .map_err(|e| e.to_string())?;
    ensure(report.failures.is_empty(), || {
        format!("{:?}", report.failures)
    })?;

    let counts = [5, 10, 20, 40, 74];
    let ci = |model: &str, n: usize| -> Result<(f64, f64, f64), String> {
        let r = report
            .row(model, n, Metric::Accuracy)
            .ok_or_else(|| format!("missing {model} @ {n}"))?;
        Ok((r.mean, r.percentiles[0], r.percentiles[4]))
    };
    let tm_rows: Vec<(f64, f64, f64)> = counts
        .iter()
        .map(|&n| ci("trait_model", n))
        .collect::<Result<_, _>>()?;
    let show = |rows: &[(f64, f64, f64)]| {
        rows.iter()
            .map(|(m, lo, hi)| format!("{m:.3}[{lo:.3},{hi:.3}]"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for w in 0..2 {
        let (a, b) = (tm_rows[w], tm_rows[w + 1]);
        ensure(b.0 > a.0 && b.1 > a.2, || {
            format!(
                "no clear gain {}->{}: {}",
                counts[w],
                counts[w + 1],
                show(&tm_rows)
            )
        })?;
    }
    for w in 2..4 {
        let (a, b) = (tm_rows[w], tm_rows[w + 1]);
        ensure(b.1 <= a.2 && a.1 <= b.2, || {
            format!(
                "no plateau {}->{}: {}",
                counts[w],
                counts[w + 1],
                show(&tm_rows)
            )
        })?;
    }
    for base in ["majority", "uniform_random"] {
        let rows: Vec<(f64, f64, f64)> = counts
            .iter()
            .map(|&n| ci(base, n))
            .collect::<Result<_, _>>()?;
        for r in &rows[1..] {
            ensure(r.1 <= rows[0].2 && rows[0].1 <= r.2, || {
                format!("{base} not flat: {}", show(&rows))
            })?;
        }
    }
    Ok(format!("Bayes {bayes:.3}; trait_model {}", show(&tm_rows)))
}

// ---------------------------------------------------------------- gradient check

fn gradient_check() -> Outcome {
    let bank = gen_bank(20).map_err(|e| e.to_string())?;
    let n_traits = 10;
    let cohort = gen_cohort(80, n_traits, 51).map_err(|e| e.to_string())?;
    let model = gen_choice_model(
        &bank,
        n_traits,
        &ChoiceSpec {
            informative: 6,
            seed: 52,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let (records, _) = gen_responses(&cohort, &bank, &model, 0.5, 53).map_err(|e| e.to_string())?;
    let profiles: BTreeMap<String, TraitProfile> = cohort
        .into_iter()
        .map(|p| (p.participant_id.clone(), p))
        .collect();
    let split = split_scenarios(&bank, 0.75, 54, true).map_err(|e| e.to_string())?;
    let train = train_records(&records, &split);
    let set = TrainingSet::build(train, &profiles, &bank, n_traits, Default::default())
        .map_err(|e| e.to_string())?;

    let mut rng = ChaCha20Rng::seed_from_u64(55);
    let mut params = set.zero_params();
    let theta: Vec<f64> = params
        .flat()
        .iter()
        .map(|_| rng.gen_range(-0.5..0.5))
        .collect();
    params.set_flat(&theta);
    let idx: Vec<usize> = (0..set.examples.len()).collect();
    let l2 = 0.01;
    let (_, grad) = set.loss_grad(&params, &idx, l2);
    let analytic = grad.flat();

    let h = 1e-5;
    let mut worst = 0.0f64;
    for probe in 0..20 {
        let i = rng.gen_range(0..theta.len());
        let mut t = theta.clone();
        t[i] = theta[i] + h;
        params.set_flat(&t);
        let up = set.loss_grad(&params, &idx, l2).0;
        t[i] = theta[i] - h;
        params.set_flat(&t);
        let down = set.loss_grad(&params, &idx, l2).0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-8);
        worst = worst.max(rel);
        ensure(rel < 1e-4, || {
            format!(
                "probe {probe} (coordinate {i}): analytic {} numeric {numeric}",
                analytic[i]
            )
        })?;
    }
    Ok(format!(
        "20 probes over {} parameters, max relative error {worst:.1e}",
        theta.len()
    ))
}

// ---------------------------------------------------------------- report schema

fn report_schema() -> Outcome {
    let want = [
        "Model", "Traits", "Metric", "Mean", "Std", "2.5%", "25%", "50%", "75%", "97.5%",
    ];
    ensure(CSV_COLUMNS == want, || format!("{CSV_COLUMNS:?}"))?;
    let mut report = EvalReport::new("0123456789abcdef");
    let mut rng = ChaCha20Rng::seed_from_u64(61);
    for model in ["trait_model", "majority"] {
        for traits in [5, 10, 20] {
            for metric in Metric::ALL {
                let base: f64 = rng.gen_range(0.1..0.9);
                let mut pct: [f64; 5] = std::array::from_fn(|_| base + rng.gen_range(-0.05..0.05));
                pct.sort_by(f64::total_cmp);
                report.rows.push(ReportRow {
                    model: model.into(),
                    traits,
                    result: MetricResult {
                        metric,
                        point: base,
                        mean: base + rng.gen_range(-0.01..0.01),
                        std: rng.gen_range(0.0..0.05),
                        percentiles: pct,
                        n_resamples: 10_000,
                        seed: 7,
                        parse_failure_rate: rng.gen_range(0.0..0.1),
                    },
                });
            }
        }
    }
    let json = report.to_json().map_err(|e| e.to_string())?;
    let back = EvalReport::from_json(&json).map_err(|e| e.to_string())?;
    ensure(back == report, || "JSON report did not round-trip".into())?;

    let csv = report.to_csv().map_err(|e| e.to_string())?;
    let header = csv.lines().nth(1).unwrap_or_default();
    ensure(header == want.join(","), || format!("header {header:?}"))?;
    let (hash, rows) = parse_csv(&csv).map_err(|e| e.to_string())?;
    ensure(
        hash == report.config_hash && rows.len() == report.rows.len(),
        || "CSV rows lost".into(),
    )?;
    for (row, orig) in rows.iter().zip(&report.rows) {
        let r = &orig.result;
        ensure(
            row.model == orig.model && row.traits == orig.traits && row.metric == r.metric.label(),
            || format!("{row:?}"),
        )?;
        let want = [
            r.mean,
            r.std,
            r.percentiles[0],
            r.percentiles[1],
            r.percentiles[2],
            r.percentiles[3],
            r.percentiles[4],
        ];
        for (got, w) in row.values().iter().zip(want) {
            ensure(format!("{got:.3}") == format!("{w:.3}"), || {
                format!("{got} vs {w}")
            })?;
        }
    }
    // the parsed CSV re-emits byte for byte
    let mut again = EvalReport::new(hash);
    for row in &rows {
        let v = row.values();
        let metric = Metric::from_label(&row.metric).ok_or("unknown metric label")?;
        again.rows.push(ReportRow {
            model: row.model.clone(),
            traits: row.traits,
            result: MetricResult {
                metric,
                point: v[0],
                mean: v[0],
                std: v[1],
                percentiles: [v[2], v[3], v[4], v[5], v[6]],
                n_resamples: 0,
                seed: 0,
                parse_failure_rate: 0.0,
            },
        });
    }
    ensure(again.to_csv().map_err(|e| e.to_string())? == csv, || {
        "CSV did not re-emit identically".into()
    })?;
    Ok(format!(
        "{} rows round-trip through JSON and CSV",
        report.rows.len()
    ))
}

// ---------------------------------------------------------------- runner

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 9] = [
        ("binning fidelity", Duration::from_secs(1), binning_fidelity),
        ("golden prompt", Duration::from_secs(1), golden_prompt),
        (
            "parser robustness",
            Duration::from_secs(60),
            parser_robustness,
        ),
        ("metric oracle", Duration::from_secs(30), metric_oracle),
        (
            "chance calibration",
            Duration::from_secs(30),
            chance_calibration,
        ),
        (
            "bootstrap validity",
            Duration::from_secs(600),
            bootstrap_validity,
        ),
        ("trait scaling", Duration::from_secs(900), trait_scaling),
        ("gradient check", Duration::from_secs(30), gradient_check),
        ("report schema", Duration::from_secs(1), report_schema),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (name, budget, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > budget => Err(format!("over budget of {budget:?}; {detail}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {name} ({:.2}s): {detail}", elapsed.as_secs_f64()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({:.2}s): {why}", elapsed.as_secs_f64());
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
