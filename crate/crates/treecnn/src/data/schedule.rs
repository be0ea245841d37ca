//! Incremental class schedules: which classes arrive at which learning stage.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::tree::ClassLabel;

/// The fine-label vocabulary of CIFAR-100, in label order.
pub fn cifar100_class_names() -> &'static [&'static str; 100] {
    &[
        "apple",
        "aquarium_fish",
        "baby",
        "bear",
        "beaver",
        "bed",
        "bee",
        "beetle",
        "bicycle",
        "bottle",
        "bowl",
        "boy",
        "bridge",
        "bus",
        "butterfly",
        "camel",
        "can",
        "castle",
        "caterpillar",
        "cattle",
        "chair",
        "chimpanzee",
        "clock",
        "cloud",
        "cockroach",
        "couch",
        "crab",
        "crocodile",
        "cup",
        "dinosaur",
        "dolphin",
        "elephant",
        "flatfish",
        "forest",
        "fox",
        "girl",
        "hamster",
        "house",
        "kangaroo",
        "keyboard",
        "lamp",
        "lawn_mower",
        "leopard",
        "lion",
        "lizard",
        "lobster",
        "man",
        "maple_tree",
        "motorcycle",
        "mountain",
        "mouse",
        "mushroom",
        "oak_tree",
        "orange",
        "orchid",
        "otter",
        "palm_tree",
        "pear",
        "pickup_truck",
        "pine_tree",
        "plain",
        "plate",
        "poppy",
        "porcupine",
        "possum",
        "rabbit",
        "raccoon",
        "ray",
        "road",
        "rocket",
        "rose",
        "sea",
        "seal",
        "shark",
        "shrew",
        "skunk",
        "skyscraper",
        "snail",
        "snake",
        "spider",
        "squirrel",
        "streetcar",
        "sunflower",
        "sweet_pepper",
        "table",
        "tank",
        "telephone",
        "television",
        "tiger",
        "tractor",
        "train",
        "trout",
        "tulip",
        "turtle",
        "wardrobe",
        "whale",
        "willow_tree",
        "wolf",
        "woman",
        "worm",
    ]
}

/// Ordered groups of class labels, one group per learning stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSchedule {
    groups: Vec<Vec<ClassLabel>>,
}

impl ClassSchedule {
    pub fn new(groups: Vec<Vec<ClassLabel>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Config("schedule has no groups".into()));
        }
        let mut seen = BTreeSet::new();
        for (i, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Config(format!("schedule group {i} is empty")));
            }
            for class in group {
                if !seen.insert(*class) {
                    return Err(Error::Config(format!(
                        "class {class} appears in more than one group"
                    )));
                }
            }
        }
        Ok(ClassSchedule { groups })
    }

    pub fn groups(&self) -> &[Vec<ClassLabel>] {
        &self.groups
    }

    pub fn stages(&self) -> usize {
        self.groups.len()
    }

    pub fn all_classes(&self) -> Vec<ClassLabel> {
        self.groups.iter().flatten().copied().collect()
    }

    /// Parse a schedule text: one stage per line, classes comma-separated,
    /// `#` comments and blank lines ignored. Entries are numeric labels, or
    /// names looked up in `names` when given.
    pub fn parse(text: &str, names: Option<&[&str]>) -> Result<Self> {
        let mut groups = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut group = Vec::new();
            for entry in line.split(',') {
                let entry = entry.trim();
                if entry.is_empty() {
                    continue;
                }
                let label = if let Ok(number) = entry.parse::<u32>() {
                    ClassLabel(number)
                } else {
                    let normalized = entry.replace(' ', "_");
                    let names = names.ok_or_else(|| {
                        Error::Config(format!(
                            "line {}: named class {entry:?} but no vocabulary given",
                            line_no + 1
                        ))
                    })?;
                    let index = names
                        .iter()
                        .position(|&n| n == normalized)
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "line {}: unknown class name {entry:?}",
                                line_no + 1
                            ))
                        })?;
                    ClassLabel(index as u32)
                };
                group.push(label);
            }
            if !group.is_empty() {
                groups.push(group);
            }
        }
        ClassSchedule::new(groups)
    }
}

/// The bundled CIFAR-100 schedule: ten fixed stages of ten classes.
pub fn paper_cifar100_schedule() -> ClassSchedule {
    ClassSchedule::parse(
        include_str!("../../schedules/cifar100-paper.txt"),
        Some(cifar100_class_names()),
    )
    .expect("bundled schedule parses")
}
