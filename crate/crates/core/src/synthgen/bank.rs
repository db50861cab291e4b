use crate::scenario::{Bank, Domain, OptionItem, Question, QuestionFormat, Scenario, ScenarioType};

use super::SynthError;

/// The two scenarios behind the shipped prompt examples.
pub const EXAMPLE_SCENARIOS: &str = include_str!("../../config/example_scenarios.json");

pub fn example_bank() -> Bank {
    Bank::from_json(EXAMPLE_SCENARIOS).expect("shipped example scenarios are valid")
}

const REASONS: [(&str, &str); 5] = [
    (
        "reason_principle",
        "Integrity / principle: I prioritized my personal standards.",
    ),
    (
        "reason_relationship",
        "Protecting the relationship: I prioritized my relationship with the people involved.",
    ),
    (
        "reason_social_cost",
        "Avoiding social consequences: I prioritized avoiding an awkward or costly refusal.",
    ),
    (
        "reason_operational_cost",
        "Practical cost: I prioritized avoiding delays or extra work.",
    ),
    (
        "reason_personal_gain",
        "Personal gain: I prioritized what I stood to gain myself.",
    ),
];

const ACTIONS: [(&str, &str); 5] = [
    (
        "action_resist",
        "Resistance: I refused to go along with it.",
    ),
    (
        "action_compromise",
        "Compromise: I went part of the way or changed the terms.",
    ),
    (
        "action_comply",
        "Compliance: I did what was expected of me.",
    ),
    (
        "action_escalate",
        "Escalation: I brought in a third party or an official channel.",
    ),
    (
        "action_disengage",
        "Disengagement: I stepped back and stayed out of it.",
    ),
];

fn stem(domain: Domain, kind: ScenarioType) -> String {
    let situation = match domain {
        Domain::TrustDynamics => {
            "someone you depended on asked you to rely on their word without any way to check it"
        }
        Domain::ConflictResolution => {
            "a disagreement with a colleague or family member came to a head"
        }
        Domain::PowerInfluence => {
            "a person with authority over you pushed you toward a choice you had doubts about"
        }
        Domain::RiskDecision => {
            "you had to choose between a safe option and a risky one with a larger payoff"
        }
        Domain::IntegrityCompliance => {
            "bending a rule would have made things easier for you or your group"
        }
        Domain::StrategicAdaptation => {
            "a plan you were committed to stopped working and you had to change course"
        }
    };
    match kind {
        ScenarioType::Dtd => {
            format!("Think about an event from the past year in which {situation}.")
        }
        ScenarioType::Retro => {
            format!("Describe an important moment in your life in which {situation}.")
        }
        ScenarioType::Hypo => format!("Imagine a situation in which {situation}."),
    }
}

fn mc(id: &str, text: &str, options: &[(&str, &str)]) -> Question {
    Question {
        id: id.into(),
        text: text.into(),
        format: QuestionFormat::MultipleChoice,
        options: options
            .iter()
            .enumerate()
            .map(|(i, (label, text))| OptionItem {
                index: i as u32 + 1,
                text: text.to_string(),
                label: Some(label.to_string()),
            })
            .collect(),
    }
}

fn generated(i: usize) -> Scenario {
    let kind = ScenarioType::ALL[i % ScenarioType::ALL.len()];
    let domain = Domain::ALL[(i / ScenarioType::ALL.len()) % Domain::ALL.len()];
    Scenario {
        id: format!("syn-{}-{:03}", kind.token().to_lowercase(), i + 1),
        scenario_type: kind,
        domain,
        narrative: stem(domain, kind),
        context_questions: vec![
            "Briefly describe what happened.".into(),
            "How much pressure did you feel at the time?".into(),
        ],
        prediction_questions: vec![
            mc(
                "Q3",
                "What was the main reason for the action you chose?",
                &REASONS,
            ),
            mc("Q4", "What did you decide to do?", &ACTIONS),
        ],
    }
}

/// A bank of `n` scenarios: the two example scenarios followed by
/// generated ones cycling through scenario types and domains.
pub fn gen_bank(n: usize) -> Result<Bank, SynthError> {
    let examples = example_bank();
    let min = examples.len();
    if n < min {
        return Err(SynthError::BankSize { n, min });
    }
    let mut scenarios = examples.scenarios().to_vec();
    scenarios.extend((0..n - min).map(generated));
    Ok(Bank::new(scenarios)?)
}
