//! Superclass hierarchies shipped with the crate, as manifest fragments.
//!
//! `cifar100` uses the dataset's fine-label ids (0..99, alphabetical). The two
//! ImageNet groupings number their classes sequentially; exporters map them
//! to dataset indices by name.

use super::ManifestFragment;

const CIFAR100: &str = include_str!("../../data/cifar100.json");
const ENTITY13: &str = include_str!("../../data/entity13.json");
const LIVING17: &str = include_str!("../../data/living17.json");

pub const BUILTIN_NAMES: [&str; 3] = ["cifar100", "entity13", "living17"];

/// Raw JSON of a shipped fragment.
pub fn builtin_json(name: &str) -> Option<&'static str> {
    match name.to_ascii_lowercase().as_str() {
        "cifar100" => Some(CIFAR100),
        "entity13" => Some(ENTITY13),
        "living17" => Some(LIVING17),
        _ => None,
    }
}

pub fn builtin(name: &str) -> Option<ManifestFragment> {
    builtin_json(name).map(|s| serde_json::from_str(s).expect("shipped fragment is valid json"))
}
