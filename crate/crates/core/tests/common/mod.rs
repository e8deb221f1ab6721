//! Brute-force reference implementations written without the library's
//! scoring paths: plain loops over raw rows.

#![allow(dead_code)]

use openness::store::{ClassId, EvaluationDataset};

pub fn text_row(d: &EvaluationDataset, class: ClassId) -> &[f32] {
    let e = d
        .catalog
        .entries()
        .iter()
        .find(|e| e.class_id == class)
        .expect("class in catalog");
    d.text_features.row(e.text_row)
}

pub fn sim(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for k in 0..a.len() {
        s += a[k] as f64 * b[k] as f64;
    }
    s
}

/// Earliest candidate with the maximal score.
pub fn predict(d: &EvaluationDataset, image: usize, candidates: &[ClassId]) -> ClassId {
    let img = d.images.image(image);
    let mut best = candidates[0];
    let mut best_score = sim(img, text_row(d, best));
    for &c in &candidates[1..] {
        let s = sim(img, text_row(d, c));
        if s > best_score {
            best = c;
            best_score = s;
        }
    }
    best
}

pub fn images_labelled_in(d: &EvaluationDataset, classes: &[ClassId]) -> Vec<usize> {
    (0..d.images.len())
        .filter(|&i| classes.contains(&d.images.labels[i]))
        .collect()
}

pub fn accuracy(d: &EvaluationDataset, images: &[usize], candidates: &[ClassId]) -> f64 {
    let hits = images
        .iter()
        .filter(|&&i| predict(d, i, candidates) == d.images.labels[i])
        .count();
    hits as f64 / images.len() as f64
}

/// Every ordering of `0..n`, by recursive insertion.
pub fn orderings(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in orderings(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn classes_of(d: &EvaluationDataset, vocabs: &[usize]) -> Vec<ClassId> {
    vocabs
        .iter()
        .flat_map(|&v| d.hierarchy.vocabularies[v].class_ids().to_vec())
        .collect()
}

/// Union accuracy after each prefix of `order`, images growing with the union.
pub fn expansion(d: &EvaluationDataset, order: &[usize]) -> Vec<f64> {
    (1..=order.len())
        .map(|s| {
            let cands = classes_of(d, &order[..s]);
            accuracy(d, &images_labelled_in(d, &cands), &cands)
        })
        .collect()
}

/// Conditional accuracy on the target's images after each distractor prefix.
pub fn stability(d: &EvaluationDataset, target: usize, order: &[usize]) -> Vec<f64> {
    let target_classes = classes_of(d, &[target]);
    let images = images_labelled_in(d, &target_classes);
    (1..=order.len())
        .map(|s| {
            let mut cands = target_classes.clone();
            cands.extend(classes_of(d, &order[..s]));
            accuracy(d, &images, &cands)
        })
        .collect()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}
