//! Topology serialization: a structured-text (JSON) snapshot of the tree with
//! per-node weight checkpoints alongside.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    ClassLabel, LabelTransform, NodeClassifier, NodeId, StubRouter, Tree, TreeLimits, TreeNode,
};
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint, NetworkSpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSnapshot {
    pub root: NodeId,
    pub next_id: u32,
    pub limits: TreeLimits,
    pub nodes: Vec<NodeSnapshot>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeSnapshot {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub children: Vec<NodeId>,
    pub leaf_class: Option<ClassLabel>,
    pub label_transform: Vec<(ClassLabel, usize)>,
    pub classifier: Option<ClassifierSnapshot>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ClassifierSnapshot {
    Network {
        spec: NetworkSpec,
        /// Checkpoint file name inside the checkpoints directory.
        checkpoint: String,
        weights_checksum: String,
    },
    Stub {
        router: StubRouter,
    },
}

/// Write `tree` as a JSON snapshot at `snapshot_path`, saving one weight
/// checkpoint per network-backed node into `checkpoints_dir`.
pub fn save_tree(tree: &Tree, snapshot_path: &Path, checkpoints_dir: &Path) -> Result<TreeSnapshot> {
    fs::create_dir_all(checkpoints_dir)?;
    let mut nodes = Vec::new();
    for node in tree.nodes() {
        let classifier = match &node.classifier {
            None => None,
            Some(NodeClassifier::Stub(router)) => Some(ClassifierSnapshot::Stub {
                router: router.clone(),
            }),
            Some(NodeClassifier::Network(net)) => {
                let file = format!("node-{:04}.bin", node.id().0);
                save_checkpoint(net, &checkpoints_dir.join(&file))?;
                Some(ClassifierSnapshot::Network {
                    spec: net.spec().clone(),
                    checkpoint: file,
                    weights_checksum: net.weights_checksum(),
                })
            }
        };
        nodes.push(NodeSnapshot {
            id: node.id(),
            parent: node.parent(),
            children: node.children().to_vec(),
            leaf_class: node.leaf_class(),
            label_transform: node.label_transform().iter().collect(),
            classifier,
        });
    }
    let snapshot = TreeSnapshot {
        root: tree.root_id(),
        next_id: tree.next_id,
        limits: tree.limits(),
        nodes,
    };
    if let Some(dir) = snapshot_path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(snapshot_path, serde_json::to_string_pretty(&snapshot)?)?;
    Ok(snapshot)
}

/// Rebuild a tree from a snapshot, loading network weights from
/// `checkpoints_dir`. When `verify_checksums` is set, restored weights must
/// match the checksums recorded in the snapshot.
pub fn load_tree(
    snapshot_path: &Path,
    checkpoints_dir: &Path,
    verify_checksums: bool,
) -> Result<Tree> {
    let text = fs::read_to_string(snapshot_path)?;
    let snapshot: TreeSnapshot = serde_json::from_str(&text)?;
    tree_from_snapshot(&snapshot, checkpoints_dir, verify_checksums)
}

pub(crate) fn tree_from_snapshot(
    snapshot: &TreeSnapshot,
    checkpoints_dir: &Path,
    verify_checksums: bool,
) -> Result<Tree> {
    let mut nodes = BTreeMap::new();
    for entry in &snapshot.nodes {
        let classifier = match &entry.classifier {
            None => None,
            Some(ClassifierSnapshot::Stub { router }) => {
                Some(NodeClassifier::Stub(router.clone()))
            }
            Some(ClassifierSnapshot::Network {
                spec,
                checkpoint,
                weights_checksum,
            }) => {
                let net = load_checkpoint(spec, &checkpoints_dir.join(checkpoint))?;
                if verify_checksums && net.weights_checksum() != *weights_checksum {
                    return Err(Error::Checkpoint(format!(
                        "weights for node {} do not match the snapshot checksum",
                        entry.id
                    )));
                }
                Some(NodeClassifier::Network(net))
            }
        };
        let mut transform = LabelTransform::default();
        for &(class, index) in &entry.label_transform {
            transform.insert(class, index);
        }
        nodes.insert(
            entry.id,
            TreeNode {
                id: entry.id,
                parent: entry.parent,
                children: entry.children.clone(),
                classifier,
                label_transform: transform,
                leaf_class: entry.leaf_class,
            },
        );
    }
    Ok(Tree {
        nodes,
        root: snapshot.root,
        next_id: snapshot.next_id,
        limits: snapshot.limits,
    })
}
