mod common;

use openness::matcher;
use openness::protocol::{
    acc_closed, evaluate, extensibility, extensibility_exact, general_stability, local_stability,
    ExtensibilityMode, PermutationSampler, ProtocolOptions, SamplerConfig, StabilityMode,
};
use openness::store::{EvaluationDataset, VocabularyHierarchy};
use openness::synthetic::{dataset, SyntheticConfig};

fn fixture(vocabularies: usize, seed: u64) -> SyntheticConfig {
    SyntheticConfig {
        vocabularies,
        classes_per_vocabulary: 3,
        images_per_class: 6,
        dim: 8,
        noise: 0.45,
        seed,
    }
}

#[test]
fn exact_extensibility_matches_enumeration_oracle() {
    for (n, seed) in [(2, 1), (3, 2), (4, 3), (4, 4), (5, 5)] {
        let d = dataset(&fixture(n, seed));
        let got = extensibility_exact(&d, 6).unwrap();
        let runs: Vec<Vec<f64>> = common::orderings(n)
            .iter()
            .map(|o| common::expansion(&d, o))
            .collect();
        let oracle = common::mean(&runs.iter().map(|r| common::mean(r)).collect::<Vec<_>>());
        assert!(
            (got.acc_e - oracle).abs() <= 1e-12,
            "n={n}: {} vs {oracle}",
            got.acc_e
        );
        assert_eq!(got.permutations, runs.len());
        for (s, step) in got.curve.steps.iter().enumerate() {
            let o = common::mean(&runs.iter().map(|r| r[s]).collect::<Vec<_>>());
            assert!((step.accuracy - o).abs() <= 1e-12);
        }
    }
}

#[test]
fn sampled_runs_replay_against_oracle() {
    let d = dataset(&fixture(4, 11));
    let cfg = SamplerConfig::new(99, 40).unwrap();
    let got = extensibility(&d, &cfg).unwrap();
    let s = PermutationSampler::new(4, 99, openness::protocol::EXTENSIBILITY_DOMAIN);
    let per: Vec<f64> = (0..40)
        .map(|j| common::mean(&common::expansion(&d, &s.permutation(j))))
        .collect();
    assert!((got.acc_e - common::mean(&per)).abs() <= 1e-12);

    for target in 0..4 {
        let l = local_stability(&d, target, &cfg).unwrap();
        let others: Vec<usize> = (0..4).filter(|&v| v != target).collect();
        let s = PermutationSampler::new(3, 99, target as u64);
        let per: Vec<f64> = (0..40)
            .map(|j| {
                let order: Vec<usize> = s.permutation(j).into_iter().map(|k| others[k]).collect();
                common::mean(&common::stability(&d, target, &order))
            })
            .collect();
        assert!((l.acc_s_tilde - common::mean(&per)).abs() <= 1e-12);
        assert!(l.acc_s_tilde <= l.closed_accuracy);
    }
}

#[test]
fn general_stability_is_mean_of_locals() {
    let d = dataset(&fixture(5, 21));
    let cfg = SamplerConfig::new(3, 25).unwrap();
    let g = general_stability(&d, &cfg).unwrap();
    let locals: Vec<f64> = (0..5)
        .map(|t| local_stability(&d, t, &cfg).unwrap().acc_s_tilde)
        .collect();
    assert!((g.acc_s - common::mean(&locals)).abs() <= 1e-12);
    assert_eq!(g.per_target.len(), 5);
}

#[test]
fn closed_accuracy_matches_oracle() {
    let d = dataset(&fixture(4, 8));
    let got = acc_closed(&d).unwrap();
    let per: Vec<f64> = d
        .hierarchy
        .vocabularies
        .iter()
        .map(|v| {
            common::accuracy(
                &d,
                &common::images_labelled_in(&d, v.class_ids()),
                v.class_ids(),
            )
        })
        .collect();
    assert!((got.acc_c - common::mean(&per)).abs() <= 1e-12);
}

#[test]
fn sampled_estimate_approaches_exact() {
    let d = dataset(&fixture(4, 31));
    let exact = extensibility_exact(&d, 6).unwrap().acc_e;
    let mut errors = Vec::new();
    for samples in [100, 1600] {
        let e = extensibility(&d, &SamplerConfig::new(5, samples).unwrap()).unwrap();
        assert!((e.acc_e - exact).abs() <= 4.0 * e.standard_error + 1e-12);
        errors.push(e.standard_error);
    }
    // standard error shrinks roughly as 1/sqrt(samples)
    let ratio = errors[0] / errors[1];
    assert!((2.5..6.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn single_vocabulary_degenerates_to_closed() {
    let full = dataset(&fixture(3, 41));
    let d = EvaluationDataset {
        hierarchy: VocabularyHierarchy::new(vec![full.hierarchy.vocabularies[1].clone()]),
        ..full.clone()
    };
    let c = acc_closed(&d).unwrap().acc_c;
    assert_eq!(
        extensibility(&d, &SamplerConfig::new(0, 10).unwrap())
            .unwrap()
            .acc_e,
        c
    );
    assert_eq!(extensibility_exact(&d, 6).unwrap().acc_e, c);
    assert_eq!(
        local_stability(&d, 0, &SamplerConfig::new(0, 10).unwrap())
            .unwrap()
            .acc_s_tilde,
        c
    );

    let v = &full.hierarchy.vocabularies[0];
    let images = full.images.restrict(v).unwrap();
    let anchors = full.anchors();
    assert_eq!(
        matcher::conditional_accuracy(&images, v, &[], &anchors).unwrap(),
        matcher::accuracy(&images, v, &anchors).unwrap()
    );
}

#[test]
fn final_union_step_is_order_free() {
    let d = dataset(&fixture(5, 51));
    let last = |seed| {
        let e = extensibility(&d, &SamplerConfig::new(seed, 1).unwrap()).unwrap();
        e.curve.steps.last().unwrap().accuracy
    };
    let first = last(0);
    for seed in 1..30 {
        assert_eq!(last(seed), first);
    }
}

#[test]
fn single_permutation_stability_curves_never_rise() {
    for seed in 0..20 {
        let d = dataset(&fixture(5, 100 + seed));
        for target in 0..5 {
            let l = local_stability(&d, target, &SamplerConfig::new(seed, 1).unwrap()).unwrap();
            let mut prev = l.closed_accuracy;
            for s in &l.curve.steps {
                assert!(s.accuracy <= prev);
                prev = s.accuracy;
            }
        }
    }
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let d = dataset(&fixture(5, 61));
    let options = ProtocolOptions {
        seed: 17,
        extensibility: ExtensibilityMode::Sampled { samples: Some(300) },
        stability: StabilityMode::General,
        stability_samples: Some(50),
    };
    let run = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate(&d, &options).unwrap().to_json())
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}
