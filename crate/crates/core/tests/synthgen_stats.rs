use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use traitbench::psychometrics::MAX_TRAITS;
use traitbench::synthgen::{
    estimate_bayes_accuracy, gen_bank, gen_choice_model, gen_cohort, mutual_information_prefix,
    z_vector, ChoiceSpec,
};

#[test]
fn cohort_moments() {
    let n = 10_000;
    let cohort = gen_cohort(n, MAX_TRAITS, 21).unwrap();
    for t in 0..MAX_TRAITS {
        let xs: Vec<f64> = cohort.iter().map(|p| p.traits[t].z.unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean.abs() < 0.05, "trait {t}: mean {mean}");
        assert!((sd - 1.0).abs() < 0.05, "trait {t}: sd {sd}");
    }
}

#[test]
fn zero_model_answers_uniformly() {
    let bank = gen_bank(4).unwrap();
    let spec = ChoiceSpec {
        informative: 0,
        target_bayes: None,
        seed: 5,
        ..Default::default()
    };
    let model = gen_choice_model(&bank, 10, &spec).unwrap();
    assert!(model.is_zero());
    let q = model.questions.values().next().unwrap();
    let options = q.linear.len();
    let cohort = gen_cohort(1, 10, 1).unwrap();
    let z = z_vector(&cohort[0], 10).unwrap();

    let n = 100_000;
    let mut counts = vec![0usize; options];
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    for _ in 0..n {
        counts[model.sample(q, &z, &mut rng) as usize - 1] += 1;
    }
    let expected = n as f64 / options as f64;
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // upper 0.1% point of chi-square with 4 degrees of freedom
    assert_eq!(options, 5);
    assert!(chi2 < 18.467, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn information_grows_with_prefix_then_plateaus() {
    let bank = gen_bank(6).unwrap();
    let m = 20;
    let model = gen_choice_model(
        &bank,
        MAX_TRAITS,
        &ChoiceSpec {
            informative: m,
            seed: 8,
            ..Default::default()
        },
    )
    .unwrap();
    let q = model.questions.values().nth(3).unwrap();
    let prefixes = [0, 5, 10, 20, 40, 74];
    let mi: Vec<f64> = prefixes
        .iter()
        .map(|&j| mutual_information_prefix(&model, q, j, 300, 150, 17))
        .collect();
    assert!(mi[0].abs() < 0.02, "no traits, no information: {}", mi[0]);
    for w in mi.windows(2) {
        assert!(w[1] >= w[0] - 0.01, "{mi:?}");
    }
    assert!(mi[3] > mi[1] + 0.05, "{mi:?}");
    // traits beyond the informative prefix carry nothing
    assert!(
        (mi[4] - mi[3]).abs() < 1e-9 && (mi[5] - mi[3]).abs() < 1e-9,
        "{mi:?}"
    );
}

#[test]
fn calibrated_bayes_accuracy() {
    let bank = gen_bank(55).unwrap();
    let model = gen_choice_model(
        &bank,
        MAX_TRAITS,
        &ChoiceSpec {
            seed: 12,
            ..Default::default()
        },
    )
    .unwrap();
    let target = 0.6;
    let estimate = estimate_bayes_accuracy(&model, 100_000, 3);
    assert!((estimate - target).abs() < 0.05, "{estimate}");

    // independent estimate: average max probability over fresh N(0, I) draws
    let questions: Vec<_> = model.questions.values().collect();
    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    let draws = 100_000;
    let mut total = 0.0;
    for d in 0..draws {
        let z: Vec<f64> = (0..MAX_TRAITS)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let p = model.probabilities(questions[d % questions.len()], &z);
        total += p.iter().cloned().fold(f64::MIN, f64::max);
    }
    let oracle = total / draws as f64;
    assert!((oracle - target).abs() < 0.05, "{oracle}");
    assert!((oracle - estimate).abs() < 0.01, "{oracle} vs {estimate}");
}
