use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{ClassId, EvaluationDataset};

/// One consistency problem found in an [`EvaluationDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    DuplicateClassId {
        class_id: ClassId,
    },
    EmptyClassName {
        class_id: ClassId,
    },
    TextRowOutOfRange {
        class_id: ClassId,
        row: usize,
        rows: usize,
    },
    /// Two classes point at the same text feature row.
    SharedTextRow {
        row: usize,
        first: ClassId,
        second: ClassId,
    },
    /// A class id used by the hierarchy or the labels that the catalog lacks.
    DanglingClassId {
        class_id: ClassId,
        context: String,
        occurrences: usize,
    },
    OverlappingVocabularies {
        class_id: ClassId,
        first: String,
        second: String,
    },
    DimMismatch {
        image_dim: usize,
        text_dim: usize,
    },
    NotNormalized {
        matrix: String,
    },
    VocabularyWithoutImages {
        label: String,
    },
    EmptyHierarchy,
}

/// Lists every violation; an empty list means the dataset is usable.
pub fn validate_dataset(d: &EvaluationDataset) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut seen = HashSet::new();
    let mut row_owner: HashMap<usize, ClassId> = HashMap::new();
    for e in d.catalog.entries() {
        if !seen.insert(e.class_id) {
            out.push(Violation::DuplicateClassId {
                class_id: e.class_id,
            });
        }
        if let Some(&first) = row_owner.get(&e.text_row) {
            out.push(Violation::SharedTextRow {
                row: e.text_row,
                first,
                second: e.class_id,
            });
        } else {
            row_owner.insert(e.text_row, e.class_id);
        }
        if e.name.trim().is_empty() {
            out.push(Violation::EmptyClassName {
                class_id: e.class_id,
            });
        }
        if e.text_row >= d.text_features.rows() {
            out.push(Violation::TextRowOutOfRange {
                class_id: e.class_id,
                row: e.text_row,
                rows: d.text_features.rows(),
            });
        }
    }

    if d.hierarchy.is_empty() {
        out.push(Violation::EmptyHierarchy);
    }
    let mut owner: HashMap<ClassId, &str> = HashMap::new();
    for v in &d.hierarchy.vocabularies {
        for &c in v.class_ids() {
            if !d.catalog.contains(c) {
                out.push(Violation::DanglingClassId {
                    class_id: c,
                    context: format!("hierarchy:{}", v.label),
                    occurrences: 1,
                });
            }
            match owner.get(&c) {
                Some(first) => out.push(Violation::OverlappingVocabularies {
                    class_id: c,
                    first: first.to_string(),
                    second: v.label.clone(),
                }),
                None => {
                    owner.insert(c, &v.label);
                }
            }
        }
    }

    let mut dangling: BTreeMap<ClassId, usize> = BTreeMap::new();
    let mut label_counts: HashMap<ClassId, usize> = HashMap::new();
    for &l in &d.images.labels {
        if d.catalog.contains(l) {
            *label_counts.entry(l).or_default() += 1;
        } else {
            *dangling.entry(l).or_default() += 1;
        }
    }
    for (class_id, occurrences) in dangling {
        out.push(Violation::DanglingClassId {
            class_id,
            context: "labels".into(),
            occurrences,
        });
    }

    let (image_dim, text_dim) = (d.images.embeddings.dim(), d.text_features.dim());
    if image_dim != text_dim {
        out.push(Violation::DimMismatch {
            image_dim,
            text_dim,
        });
    }
    if !d.images.embeddings.is_normalized() {
        out.push(Violation::NotNormalized {
            matrix: "image_features".into(),
        });
    }
    if !d.text_features.is_normalized() {
        out.push(Violation::NotNormalized {
            matrix: "text_features".into(),
        });
    }

    for v in &d.hierarchy.vocabularies {
        if !v.class_ids().iter().any(|c| label_counts.contains_key(c)) {
            out.push(Violation::VocabularyWithoutImages {
                label: v.label.clone(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::*;

    fn toy(labels: Vec<ClassId>, image_dim: usize, text_dim: usize) -> EvaluationDataset {
        let catalog = ClassCatalog::new(
            ["a", "b"]
                .iter()
                .enumerate()
                .map(|(i, n)| ClassEntry {
                    class_id: i as ClassId,
                    name: n.to_string(),
                    prompt_text: format!("a photo of a {n}."),
                    text_row: i,
                })
                .collect(),
        );
        let unit = |dim: usize, k: usize| {
            let mut r = vec![0.0f32; dim];
            r[k] = 1.0;
            r
        };
        let text = EmbeddingMatrix::from_rows(&[unit(text_dim, 0), unit(text_dim, 1)])
            .unwrap()
            .assume_unit_norm()
            .unwrap();
        let rows: Vec<Vec<f32>> = labels
            .iter()
            .map(|&l| unit(image_dim, l as usize % 2))
            .collect();
        let images = EmbeddingMatrix::from_rows(&rows)
            .unwrap()
            .assume_unit_norm()
            .unwrap();
        EvaluationDataset {
            catalog,
            text_features: text,
            images: LabeledImageSet::new(images, labels).unwrap(),
            hierarchy: VocabularyHierarchy::new(vec![Vocabulary::new("ab", vec![0, 1]).unwrap()]),
        }
    }

    #[test]
    fn consistent_dataset_has_no_violations() {
        assert!(validate_dataset(&toy(vec![0, 1], 4, 4)).is_empty());
    }

    #[test]
    fn dangling_label_is_reported_once() {
        let v = validate_dataset(&toy(vec![0, 1, 99, 99], 4, 4));
        assert_eq!(
            v,
            vec![Violation::DanglingClassId {
                class_id: 99,
                context: "labels".into(),
                occurrences: 2
            }]
        );
    }

    #[test]
    fn dim_mismatch_is_reported() {
        let v = validate_dataset(&toy(vec![0, 1], 512, 256));
        assert_eq!(
            v,
            vec![Violation::DimMismatch {
                image_dim: 512,
                text_dim: 256
            }]
        );
    }

    #[test]
    fn overlap_and_empty_vocabulary() {
        let mut d = toy(vec![0, 1], 4, 4);
        d.hierarchy
            .vocabularies
            .push(Vocabulary::new("b-again", vec![1]).unwrap());
        let v = validate_dataset(&d);
        assert_eq!(
            v,
            vec![Violation::OverlappingVocabularies {
                class_id: 1,
                first: "ab".into(),
                second: "b-again".into()
            }]
        );
        d.hierarchy = d.hierarchy.deduplicated();
        assert!(validate_dataset(&d).is_empty());
    }

    #[test]
    fn shared_text_row_is_reported() {
        let mut d = toy(vec![0, 1], 4, 4);
        let mut entries = d.catalog.entries().to_vec();
        entries[1].text_row = 0;
        d.catalog = ClassCatalog::new(entries);
        assert_eq!(
            validate_dataset(&d),
            vec![Violation::SharedTextRow {
                row: 0,
                first: 0,
                second: 1
            }]
        );
    }
}
