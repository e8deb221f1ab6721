//! Acceptance suite: one PASS/FAIL line per criterion, synthetic fixtures
//! only. Exits non-zero if any criterion fails.

use std::fs;
use std::process::Command;
use std::time::{Duration, Instant};

use openness::adversarial::{build_adversarial_vocabulary, CandidateLexicon, Strategy};
use openness::geometry::{alignment_loss, uniformity_loss};
use openness::matcher;
use openness::protocol::{
    acc_closed, extensibility, extensibility_exact, local_stability, SamplerConfig,
};
use openness::repe::{repe_enhance_catalog, RepeConfig, RetrievalIndex};
use openness::store::{
    CaptionCorpus, ClassId, EmbeddingMatrix, EvaluationDataset, VocabularyHierarchy,
};
use openness::synthetic::{
    caption_corpus, dataset, perturbed, random_unit_matrix, write_fixture, SyntheticConfig,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

// ---- independent reference computations -------------------------------

fn sim(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| *x as f64 * *y as f64)
        .fold(0.0, |s, v| s + v)
}

fn text_of(d: &EvaluationDataset, c: ClassId) -> &[f32] {
    let e = d
        .catalog
        .entries()
        .iter()
        .find(|e| e.class_id == c)
        .unwrap();
    d.text_features.row(e.text_row)
}

fn union_accuracy(d: &EvaluationDataset, vocabs: &[usize]) -> f64 {
    let classes: Vec<ClassId> = vocabs
        .iter()
        .flat_map(|&v| d.hierarchy.vocabularies[v].class_ids().to_vec())
        .collect();
    let (mut n, mut correct) = (0usize, 0usize);
    for i in 0..d.images.len() {
        let label = d.images.labels[i];
        if !classes.contains(&label) {
            continue;
        }
        n += 1;
        let mut best = (classes[0], sim(d.images.image(i), text_of(d, classes[0])));
        for &c in &classes[1..] {
            let s = sim(d.images.image(i), text_of(d, c));
            if s > best.1 {
                best = (c, s);
            }
        }
        if best.0 == label {
            correct += 1;
        }
    }
    correct as f64 / n as f64
}

/// All orderings of `0..n` by Heap's algorithm.
fn heap_orderings(n: usize) -> Vec<Vec<usize>> {
    fn go(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k - 1 {
            go(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
        go(k - 1, a, out);
    }
    let mut out = Vec::new();
    go(n, &mut (0..n).collect(), &mut out);
    out
}

fn oracle_acc_e(d: &EvaluationDataset) -> f64 {
    let n = d.hierarchy.len();
    let orders = heap_orderings(n);
    let total: f64 = orders
        .iter()
        .map(|o| (1..=n).map(|s| union_accuracy(d, &o[..s])).sum::<f64>() / n as f64)
        .sum();
    total / orders.len() as f64
}

// ---- criteria --------------------------------------------------------

fn distractor_monotonicity() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut checks = 0usize;
    for instance in 0..1000u64 {
        let vocabularies = rng.random_range(2..=4);
        let per = rng.random_range(1..=16 / vocabularies);
        let images = rng.random_range(1..=(64 / (vocabularies * per)).min(6));
        let d = dataset(&SyntheticConfig {
            vocabularies,
            classes_per_vocabulary: per,
            images_per_class: images,
            dim: 8,
            noise: rng.random_range(0.1..1.2),
            seed: instance,
        });
        let target_index = rng.random_range(0..vocabularies);
        let target = &d.hierarchy.vocabularies[target_index];
        let target_images = d.images.restrict(target).map_err(|e| e.to_string())?;
        let mut others: Vec<usize> = (0..vocabularies).filter(|&v| v != target_index).collect();
        others.shuffle(&mut rng);
        let anchors = d.anchors();
        let mut distractors: Vec<ClassId> = Vec::new();
        let mut prev =
            matcher::accuracy(&target_images, target, &anchors).map_err(|e| e.to_string())?;
        for &v in &others {
            distractors.extend_from_slice(d.hierarchy.vocabularies[v].class_ids());
            let acc = matcher::conditional_accuracy(&target_images, target, &distractors, &anchors)
                .map_err(|e| e.to_string())?;
            ensure!(
                acc <= prev,
                "instance {instance}: accuracy rose from {prev} to {acc}"
            );
            prev = acc;
            checks += 1;
        }
        // single-permutation runs expose each permutation's own curve
        for seed in 0..3 {
            let l = local_stability(&d, target_index, &SamplerConfig::new(seed, 1).unwrap())
                .map_err(|e| e.to_string())?;
            let mut prev = l.closed_accuracy;
            for s in &l.curve.steps {
                ensure!(
                    s.accuracy <= prev,
                    "instance {instance}: stability curve rose"
                );
                prev = s.accuracy;
                checks += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!(
        "1000 instances, {checks} steps, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn exact_vs_sampled() -> Verdict {
    let d = dataset(&SyntheticConfig {
        vocabularies: 4,
        classes_per_vocabulary: 4,
        images_per_class: 10,
        dim: 8,
        noise: 0.5,
        seed: 4,
    });
    let exact = extensibility_exact(&d, 6).map_err(|e| e.to_string())?;
    let oracle = oracle_acc_e(&d);
    ensure!(
        exact.permutations == 24,
        "{} permutations",
        exact.permutations
    );
    ensure!(
        (exact.acc_e - oracle).abs() <= 1e-12,
        "exact {} vs oracle {oracle}",
        exact.acc_e
    );
    let mut worst = 0.0f64;
    for seed in 0..50 {
        let s = extensibility(&d, &SamplerConfig::new(seed, 4000).unwrap())
            .map_err(|e| e.to_string())?;
        let z = (s.acc_e - exact.acc_e).abs() / s.standard_error;
        worst = worst.max(z);
        ensure!(
            z <= 3.0,
            "seed {seed}: |{} - {}| = {z:.2} standard errors",
            s.acc_e,
            exact.acc_e
        );
    }
    Ok(format!(
        "exact {:.6} = oracle; 50 seeds, max deviation {worst:.2} SE",
        exact.acc_e
    ))
}

fn degenerate_identity() -> Verdict {
    for seed in 0..20 {
        let full = dataset(&SyntheticConfig {
            seed,
            ..SyntheticConfig::default()
        });
        for v in &full.hierarchy.vocabularies {
            let single = EvaluationDataset {
                hierarchy: VocabularyHierarchy::new(vec![v.clone()]),
                ..full.clone()
            };
            let c = acc_closed(&single).map_err(|e| e.to_string())?.acc_c;
            let e = extensibility(&single, &SamplerConfig::new(seed, 10).unwrap())
                .map_err(|e| e.to_string())?;
            ensure!(e.acc_e == c, "N=1 Acc-E {} != Acc-C {c}", e.acc_e);
            let x = extensibility_exact(&single, 6).map_err(|e| e.to_string())?;
            ensure!(x.acc_e == c, "N=1 exact Acc-E {} != Acc-C {c}", x.acc_e);

            let images = full.images.restrict(v).map_err(|e| e.to_string())?;
            let anchors = full.anchors();
            let cond = matcher::conditional_accuracy(&images, v, &[], &anchors)
                .map_err(|e| e.to_string())?;
            let closed = matcher::accuracy(&images, v, &anchors).map_err(|e| e.to_string())?;
            ensure!(
                cond == closed,
                "empty distractors {cond} != closed {closed}"
            );
        }
    }
    Ok("20 datasets x 4 vocabularies".into())
}

fn adversarial_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut gaps = 0;
    for instance in 0..500u64 {
        let d = dataset(&SyntheticConfig {
            vocabularies: 1,
            classes_per_vocabulary: rng.random_range(2..=5),
            images_per_class: rng.random_range(2..=6),
            dim: 8,
            noise: 0.5,
            seed: 10_000 + instance,
        });
        let classes = d.catalog.len();
        let rows: Vec<Vec<f32>> = (0..10)
            .map(|_| {
                let center = d.text_features.row(rng.random_range(0..classes)).to_vec();
                let noise = rng.random_range(0.2..1.5);
                perturbed(&center, 1, noise, &mut rng).remove(0)
            })
            .collect();
        let feats = EmbeddingMatrix::from_rows(&rows)
            .unwrap()
            .normalize_rows()
            .unwrap();
        let lexicon =
            CandidateLexicon::new((0..10).map(|k| format!("cand{k}")).collect(), feats.clone())
                .unwrap();
        let target = &d.hierarchy.vocabularies[0];
        let anchors = d.anchors();

        // oracle: enumerate every 3-subset directly
        let accuracy_with = |words: &[usize]| -> f64 {
            let mut correct = 0;
            for i in 0..d.images.len() {
                let img = d.images.image(i);
                let ids = target.class_ids();
                let mut best = (ids[0], sim(img, text_of(&d, ids[0])));
                for &c in &ids[1..] {
                    let s = sim(img, text_of(&d, c));
                    if s > best.1 {
                        best = (c, s);
                    }
                }
                for &w in words {
                    let s = sim(img, feats.row(w));
                    if s > best.1 {
                        best = (ClassId::MAX, s);
                    }
                }
                if best.0 == d.images.labels[i] {
                    correct += 1;
                }
            }
            correct as f64 / d.images.len() as f64
        };
        let mut oracle = (Vec::new(), f64::INFINITY);
        for a in 0..10 {
            for b in a + 1..10 {
                for c in b + 1..10 {
                    let acc = accuracy_with(&[a, b, c]);
                    if acc < oracle.1 {
                        oracle = (vec![a, b, c], acc);
                    }
                }
            }
        }

        let run = |s| {
            build_adversarial_vocabulary(&d.images, target, &anchors, &lexicon, 3, s)
                .map_err(|e| e.to_string())
        };
        let ex = run(Strategy::Exhaustive)?;
        let picked: Vec<usize> = ex.selected.iter().map(|w| w.lexicon_index).collect();
        ensure!(
            picked == oracle.0,
            "instance {instance}: exhaustive {picked:?} vs oracle {:?}",
            oracle.0
        );
        ensure!(
            ex.combined_conditional_accuracy == oracle.1,
            "instance {instance}: accuracy differs from oracle"
        );
        for s in [Strategy::TopKIndividual, Strategy::GreedyForward] {
            let h = run(s)?;
            ensure!(
                h.combined_conditional_accuracy >= ex.combined_conditional_accuracy,
                "instance {instance}: {s:?} beat the exhaustive minimum"
            );
            if h.combined_conditional_accuracy > ex.combined_conditional_accuracy {
                gaps += 1;
            }
        }
    }
    Ok(format!(
        "500 instances; heuristics above the optimum in {gaps} of 1000 runs"
    ))
}

fn geometry_closed_forms() -> Verdict {
    let unit = |rows: &[&[f32]]| {
        EmbeddingMatrix::from_rows(rows)
            .unwrap()
            .assume_unit_norm()
            .unwrap()
    };
    let a: &[f32] = &[0.0, 1.0, 0.0];
    let neg: &[f32] = &[0.0, -1.0, 0.0];
    let checks = [
        (
            "alignment identical",
            alignment_loss(&[(a, a)]).unwrap(),
            0.0,
        ),
        (
            "alignment antipodal",
            alignment_loss(&[(a, neg)]).unwrap(),
            4.0,
        ),
        (
            "uniformity identical",
            uniformity_loss(&unit(&[a, a])).unwrap(),
            0.0,
        ),
        (
            "uniformity antipodal",
            uniformity_loss(&unit(&[a, neg])).unwrap(),
            -8.0,
        ),
        (
            "uniformity orthonormal",
            uniformity_loss(&unit(&[
                &[1.0, 0.0, 0.0],
                &[0.0, 1.0, 0.0],
                &[0.0, 0.0, 1.0],
            ]))
            .unwrap(),
            -4.0,
        ),
    ];
    for (name, got, want) in checks {
        ensure!((got - want).abs() <= 1e-9, "{name}: {got} vs {want}");
    }
    // vectors whose squared norm is exactly one, so the identity is exact
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let lattice = |rng: &mut ChaCha8Rng| -> Vec<f32> {
        let mut v = vec![0.0f32; 16];
        let (count, value) = [(1, 1.0f32), (4, 0.5), (16, 0.25)][rng.random_range(0..3)];
        let mut idx: Vec<usize> = (0..16).collect();
        idx.shuffle(rng);
        for &k in &idx[..count] {
            v[k] = if rng.random_bool(0.5) { value } else { -value };
        }
        v
    };
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let n = rng.random_range(1..50);
        let xs: Vec<Vec<f32>> = (0..2 * n).map(|_| lattice(&mut rng)).collect();
        let pairs: Vec<(&[f32], &[f32])> = (0..n)
            .map(|i| (xs[i].as_slice(), xs[n + i].as_slice()))
            .collect();
        let cos = pairs.iter().map(|(x, y)| sim(x, y)).sum::<f64>() / n as f64;
        let diff = (alignment_loss(&pairs).unwrap() - (2.0 - 2.0 * cos)).abs();
        worst = worst.max(diff);
        ensure!(diff <= 1e-12, "alignment vs 2-2cos differs by {diff}");
    }
    Ok(format!(
        "5 closed forms; 200 cross-checks, max diff {worst:.1e}"
    ))
}

fn repe_criteria() -> Verdict {
    let d = dataset(&SyntheticConfig::default());
    let index =
        RetrievalIndex::build(caption_corpus(&d, 500, 0.3, 2)).map_err(|e| e.to_string())?;
    let zero = repe_enhance_catalog(&d, &index, &RepeConfig::new(10, 100, 0.0).unwrap())
        .map_err(|e| e.to_string())?;
    let same = zero
        .text_features
        .as_slice()
        .iter()
        .zip(d.text_features.as_slice())
        .all(|(a, b)| a.to_bits() == b.to_bits());
    ensure!(same, "lambda = 0 changed the class features");

    for lambda in [0.1, 0.25, 0.5, 0.9, 1.0] {
        let out = repe_enhance_catalog(&d, &index, &RepeConfig::new(10, 100, lambda).unwrap())
            .map_err(|e| e.to_string())?;
        for r in 0..out.text_features.rows() {
            let n = sim(out.text_features.row(r), out.text_features.row(r)).sqrt();
            ensure!(
                (n - 1.0).abs() <= 1e-6,
                "lambda {lambda}: row {r} has norm {n}"
            );
        }
    }

    let mut queries = 0;
    for (rows, seed) in [(10usize, 1u64), (1000, 2), (10_000, 3), (100_000, 4)] {
        let images = random_unit_matrix(rows, 16, seed);
        let corpus =
            CaptionCorpus::new(vec![String::new(); rows], images.clone(), images.clone()).unwrap();
        let index = RetrievalIndex::build(corpus).map_err(|e| e.to_string())?;
        let qs = random_unit_matrix(5, 16, seed + 99);
        for q in 0..5 {
            let query = qs.row(q);
            let mut scan: Vec<(usize, f64)> =
                (0..rows).map(|r| (r, sim(images.row(r), query))).collect();
            scan.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            for top in [1, 100, 1000] {
                let top = top.min(rows);
                let got = index.search(query, top).map_err(|e| e.to_string())?;
                ensure!(
                    got == scan[..top],
                    "{rows} rows, top {top}: mismatch with full scan"
                );
                queries += 1;
            }
        }
    }
    Ok(format!(
        "identity bit-exact; norms within 1e-6; {queries} KNN queries equal full scan"
    ))
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dataset(&SyntheticConfig {
        vocabularies: 6,
        classes_per_vocabulary: 4,
        images_per_class: 12,
        dim: 16,
        noise: 0.5,
        seed: 99,
    });
    let manifest = write_fixture(&d, None, dir.path()).map_err(|e| e.to_string())?;
    let mut reports = Vec::new();
    for threads in ["1", "4", "16"] {
        let out = dir.path().join(format!("r{threads}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_openness"))
            .args([
                "eval-extensibility",
                "--manifest",
                manifest.to_str().unwrap(),
                "--seed",
                "7",
            ])
            .args(["--threads", threads, "--out", out.to_str().unwrap()])
            .env_remove("OPENNESS_THREADS")
            .status()
            .map_err(|e| e.to_string())?;
        ensure!(status.success(), "--threads {threads} exited with {status}");
        reports.push(fs::read(&out).map_err(|e| e.to_string())?);
    }
    ensure!(
        reports[0] == reports[1] && reports[1] == reports[2],
        "reports differ across thread counts"
    );
    Ok(format!(
        "--threads 1/4/16 byte-identical ({} bytes)",
        reports[0].len()
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("distractor-monotonicity", distractor_monotonicity),
        ("exact-vs-sampled-extensibility", exact_vs_sampled),
        ("degenerate-identity", degenerate_identity),
        ("adversarial-oracle", adversarial_oracle),
        ("geometry-closed-forms", geometry_closed_forms),
        ("repe", repe_criteria),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
