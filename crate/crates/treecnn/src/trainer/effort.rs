//! Training-effort accounting: the computation-cost proxy
//! `sum over retrained networks of (weight count x training samples)`.
//! Weight counts exclude biases and batch-norm parameters throughout.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::nn::{count_weights, NetworkSpec};

/// One retrained network in a learning stage: its architecture, the layer
/// blocks actually updated (None = all), and the training samples shown.
#[derive(Debug, Clone)]
pub struct EffortEntry {
    pub spec: NetworkSpec,
    pub subset: Option<Vec<String>>,
    pub samples: u64,
}

/// Exact integer training effort over the retrained networks.
pub fn training_effort(entries: &[EffortEntry]) -> Result<u64> {
    let mut total = 0u64;
    for entry in entries {
        let weights = count_weights(&entry.spec, entry.subset.as_deref())?;
        total += weights * entry.samples;
    }
    Ok(total)
}

pub fn normalized_effort(raw: u64, reference: u64) -> f64 {
    if reference == 0 {
        return 0.0;
    }
    raw as f64 / reference as f64
}

/// The five fine-tuning depths of the baseline network, from retraining only
/// the classifier stack (`B:I`) to the whole network (`B:V`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FineTuneMode {
    I,
    II,
    III,
    IV,
    V,
}

impl FineTuneMode {
    pub const ALL: [FineTuneMode; 5] = [
        FineTuneMode::I,
        FineTuneMode::II,
        FineTuneMode::III,
        FineTuneMode::IV,
        FineTuneMode::V,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            FineTuneMode::I => "B:I",
            FineTuneMode::II => "B:II",
            FineTuneMode::III => "B:III",
            FineTuneMode::IV => "B:IV",
            FineTuneMode::V => "B:V",
        }
    }

    pub fn from_label(label: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|m| m.label() == label)
    }

    /// How many blocks retrain: the FC stack plus (depth - 1) conv blocks.
    pub fn depth(&self) -> usize {
        match self {
            FineTuneMode::I => 1,
            FineTuneMode::II => 2,
            FineTuneMode::III => 3,
            FineTuneMode::IV => 4,
            FineTuneMode::V => 5,
        }
    }

    /// The retrained layer blocks for this depth: the FC stack plus conv
    /// blocks counted backwards from the classifier end. Depths at or beyond
    /// the block count retrain everything (None).
    pub fn blocks(&self, spec: &NetworkSpec) -> Option<Vec<String>> {
        let all = spec.blocks();
        if self.depth() >= all.len() {
            return None;
        }
        let conv_blocks: Vec<&String> = all.iter().filter(|b| *b != "FC").collect();
        let take = self.depth() - 1;
        let mut subset: Vec<String> = conv_blocks
            .iter()
            .rev()
            .take(take)
            .map(|b| (*b).clone())
            .collect();
        subset.reverse();
        subset.push("FC".into());
        Some(subset)
    }
}

impl std::fmt::Display for FineTuneMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Normalized per-stage effort of the five fine-tuning depths, computed
/// analytically from the architecture and sample counts (no training).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EffortTable {
    /// Total classes known at each stage.
    pub class_counts: Vec<usize>,
    /// `rows[stage][mode]` normalized against the deepest mode at the final
    /// stage.
    pub rows: Vec<Vec<f64>>,
    pub normalization: u64,
}

/// Build the analytic effort table for a baseline family: at each stage the
/// network has `classes` outputs and sees `samples_per_class * classes`
/// training samples; each mode retrains its block subset.
pub fn analytic_effort_table(
    build: impl Fn(usize) -> Result<NetworkSpec>,
    class_counts: &[usize],
    samples_per_class: u64,
) -> Result<EffortTable> {
    let last = *class_counts.last().expect("at least one stage");
    let reference_spec = build(last)?;
    let normalization =
        count_weights(&reference_spec, None)? * samples_per_class * last as u64;

    let mut rows = Vec::with_capacity(class_counts.len());
    for &classes in class_counts {
        let spec = build(classes)?;
        let samples = samples_per_class * classes as u64;
        let mut row = Vec::with_capacity(FineTuneMode::ALL.len());
        for mode in FineTuneMode::ALL {
            let subset = mode.blocks(&spec);
            let weights = count_weights(&spec, subset.as_deref())?;
            row.push(normalized_effort(weights * samples, normalization));
        }
        rows.push(row);
    }
    Ok(EffortTable {
        class_counts: class_counts.to_vec(),
        rows,
        normalization,
    })
}

/// Render the table as CSV, one stage per row, modes as columns.
pub fn effort_table_csv(table: &EffortTable) -> String {
    let mut out = String::from("classes");
    for mode in FineTuneMode::ALL {
        out.push(',');
        out.push_str(mode.label());
    }
    out.push('\n');
    for (classes, row) in table.class_counts.iter().zip(&table.rows) {
        out.push_str(&classes.to_string());
        for value in row {
            out.push_str(&format!(",{value:.2}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{DataShape, LayerSpec};
    use crate::specs::SpecFamily;

    #[test]
    fn single_weight_single_sample() {
        let spec = NetworkSpec::new(
            DataShape::Vector { features: 1 },
            vec![LayerSpec::FullyConnected {
                block: "FC".into(),
                in_features: 1,
                out_features: 1,
            }],
        )
        .unwrap();
        let effort = training_effort(&[EffortEntry {
            spec,
            subset: None,
            samples: 1,
        }])
        .unwrap();
        assert_eq!(effort, 1);
    }

    #[test]
    fn fine_tune_blocks_count_from_the_classifier_end() {
        let spec = SpecFamily::NetworkB.build(100).unwrap();
        assert_eq!(FineTuneMode::I.blocks(&spec), Some(vec!["FC".to_string()]));
        assert_eq!(
            FineTuneMode::II.blocks(&spec),
            Some(vec!["CONV-4".to_string(), "FC".to_string()])
        );
        assert_eq!(
            FineTuneMode::IV.blocks(&spec),
            Some(vec![
                "CONV-2".to_string(),
                "CONV-3".to_string(),
                "CONV-4".to_string(),
                "FC".to_string()
            ])
        );
        assert_eq!(FineTuneMode::V.blocks(&spec), None);
    }

    #[test]
    fn depth_two_effort_matches_hand_arithmetic() {
        // FC at N=100 plus the conv block nearest the classifier.
        let spec = SpecFamily::NetworkB.build(100).unwrap();
        let subset = FineTuneMode::II.blocks(&spec);
        let weights = count_weights(&spec, subset.as_deref()).unwrap();
        assert_eq!(weights, 3_248_128 + 3_538_944);
    }

    #[test]
    fn effort_is_additive_over_entries() {
        let spec = SpecFamily::DeskB.build(10).unwrap();
        let one = EffortEntry {
            spec: spec.clone(),
            subset: None,
            samples: 100,
        };
        let two = EffortEntry {
            spec,
            subset: None,
            samples: 50,
        };
        let a = training_effort(&[one.clone()]).unwrap();
        let b = training_effort(&[two.clone()]).unwrap();
        assert_eq!(training_effort(&[one, two]).unwrap(), a + b);
    }
}
