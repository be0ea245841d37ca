//! The classifier hierarchy: a root router, branch routers, and leaves that
//! each carry exactly one dataset class. Every non-leaf owns a classifier
//! whose outputs correspond one-to-one to its children, plus a lookup table
//! mapping each dataset label in its subtree to the child that owns it.

mod dot;
mod snapshot;
mod stub;

pub use dot::export_dot;
pub use snapshot::{load_tree, save_tree, ClassifierSnapshot, NodeSnapshot, TreeSnapshot};
pub use stub::{marker_image, StubRouter};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::Tensor;

/// Dataset class label.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ClassLabel(pub u32);

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// Identifier of one tree node; stable for the lifetime of a run.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Root,
    Branch,
    Leaf,
}

/// Structural limits the growth policy operates under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeLimits {
    /// Capacity cap per branch node. The root is exempt.
    pub max_children: usize,
    /// Maximum node depth; leaves of a 2-level hierarchy sit at depth 2.
    pub max_depth: usize,
}

impl TreeLimits {
    pub fn validate(&self) -> Result<()> {
        if self.max_children < 2 {
            return Err(Error::Config("max_children must be at least 2".into()));
        }
        if self.max_depth < 1 {
            return Err(Error::Config("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-node lookup table: dataset class label -> child index (output neuron).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelTransform(BTreeMap<ClassLabel, usize>);

impl LabelTransform {
    pub fn child_index(&self, class: ClassLabel) -> Option<usize> {
        self.0.get(&class).copied()
    }

    pub fn insert(&mut self, class: ClassLabel, child_index: usize) {
        self.0.insert(class, child_index);
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ClassLabel, usize)> + '_ {
        self.0.iter().map(|(&c, &i)| (c, i))
    }

    pub fn classes(&self) -> impl Iterator<Item = ClassLabel> + '_ {
        self.0.keys().copied()
    }
}

/// The decision function of a non-leaf node: a trained network, or a stub
/// router used by structural tests and plan replay.
#[derive(Debug, Clone)]
pub enum NodeClassifier {
    Network(Network),
    Stub(StubRouter),
}

impl NodeClassifier {
    /// Raw per-child scores for one image; highest score wins the routing.
    pub fn scores(&self, node: &TreeNode, image: &Tensor) -> Result<Vec<f32>> {
        match self {
            NodeClassifier::Network(net) => {
                let batch = Tensor::stack(&[image])?;
                Ok(net.forward(&batch)?.into_data())
            }
            NodeClassifier::Stub(router) => Ok(router.scores(node, image)),
        }
    }

    /// Declared output count, when the classifier has a fixed one.
    pub fn output_count(&self) -> Option<usize> {
        match self {
            NodeClassifier::Network(net) => Some(net.class_count()),
            NodeClassifier::Stub(StubRouter::Constant(scores)) => Some(scores.len()),
            NodeClassifier::Stub(StubRouter::LabelRouting) => None,
        }
    }

    /// Grow the output side by one child slot. New network rows start at
    /// zero; they are trained immediately after any structural change.
    fn add_output(&mut self) -> Result<()> {
        match self {
            NodeClassifier::Network(net) => net.widen_output(1, None),
            NodeClassifier::Stub(StubRouter::Constant(scores)) => {
                scores.push(0.0);
                Ok(())
            }
            NodeClassifier::Stub(StubRouter::LabelRouting) => Ok(()),
        }
    }

    fn remove_output(&mut self, index: usize) -> Result<()> {
        match self {
            NodeClassifier::Network(net) => net.remove_output(index),
            NodeClassifier::Stub(StubRouter::Constant(scores)) => {
                if index >= scores.len() {
                    return Err(Error::InvalidSpec(format!(
                        "stub has no output {index}"
                    )));
                }
                scores.remove(index);
                Ok(())
            }
            NodeClassifier::Stub(StubRouter::LabelRouting) => Ok(()),
        }
    }

    /// Stable digest of the classifier state; changes iff the classifier does.
    pub fn checksum(&self) -> String {
        match self {
            NodeClassifier::Network(net) => net.weights_checksum(),
            NodeClassifier::Stub(router) => {
                use sha2::{Digest, Sha256};
                let mut hasher = Sha256::new();
                hasher.update(serde_json::to_string(router).unwrap().as_bytes());
                let digest = hasher.finalize();
                digest.iter().map(|b| format!("{b:02x}")).collect()
            }
        }
    }
}

/// Builds fresh classifiers when a leaf turns into a branch. The production
/// factory instantiates the configured branch network with a seeded init;
/// structural tests install stubs instead.
pub trait ClassifierFactory {
    fn branch_classifier(&mut self, node: NodeId, child_count: usize) -> Result<NodeClassifier>;
}

/// A factory for trees manipulated purely structurally (tests, plan replay).
pub struct StubFactory;

impl ClassifierFactory for StubFactory {
    fn branch_classifier(&mut self, _node: NodeId, _child_count: usize) -> Result<NodeClassifier> {
        Ok(NodeClassifier::Stub(StubRouter::LabelRouting))
    }
}

#[derive(Debug, Clone)]
pub struct TreeNode {
    id: NodeId,
    parent: Option<NodeId>,
    children: Vec<NodeId>,
    pub classifier: Option<NodeClassifier>,
    label_transform: LabelTransform,
    leaf_class: Option<ClassLabel>,
}

impl TreeNode {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn parent(&self) -> Option<NodeId> {
        self.parent
    }

    pub fn children(&self) -> &[NodeId] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn leaf_class(&self) -> Option<ClassLabel> {
        self.leaf_class
    }

    pub fn label_transform(&self) -> &LabelTransform {
        &self.label_transform
    }

    pub fn classifier_checksum(&self) -> Option<String> {
        self.classifier.as_ref().map(NodeClassifier::checksum)
    }
}

/// Summary of one child of the node being grown, as seen by the growth
/// policy: identity, leafness, and how many child slots it occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChildSummary {
    pub id: NodeId,
    pub is_leaf: bool,
    pub child_count: usize,
}

impl ChildSummary {
    /// Occupied capacity: a leaf counts as one slot.
    pub fn effective_children(&self) -> usize {
        if self.is_leaf {
            1
        } else {
            self.child_count
        }
    }
}

/// The hierarchy itself: an id-indexed node store with a single root.
#[derive(Debug, Clone)]
pub struct Tree {
    nodes: BTreeMap<NodeId, TreeNode>,
    root: NodeId,
    next_id: u32,
    limits: TreeLimits,
}

impl Tree {
    /// Build the initial topology from class groups: each group of one class
    /// becomes a leaf child of the root, each larger group a branch with one
    /// leaf per class. Classifiers start unset; install them before use.
    pub fn from_groups(groups: &[Vec<ClassLabel>], limits: TreeLimits) -> Result<Tree> {
        limits.validate()?;
        let total: usize = groups.iter().map(Vec::len).sum();
        if groups.len() < 2 || total < 2 {
            return Err(Error::Config(
                "initial topology needs at least two groups".into(),
            ));
        }
        let mut seen = BTreeSet::new();
        for class in groups.iter().flatten() {
            if !seen.insert(*class) {
                return Err(Error::DuplicateClass(*class));
            }
        }

        let mut tree = Tree {
            nodes: BTreeMap::new(),
            root: NodeId(0),
            next_id: 0,
            limits,
        };
        let root = tree.alloc(None);
        tree.root = root;
        for (group_index, group) in groups.iter().enumerate() {
            if group.is_empty() {
                return Err(Error::Config(format!("group {group_index} is empty")));
            }
            if group.len() == 1 {
                let leaf = tree.alloc(Some(root));
                tree.nodes.get_mut(&leaf).unwrap().leaf_class = Some(group[0]);
                tree.nodes.get_mut(&root).unwrap().children.push(leaf);
            } else {
                if group.len() > limits.max_children {
                    return Err(Error::Config(format!(
                        "group {group_index} exceeds max_children"
                    )));
                }
                let branch = tree.alloc(Some(root));
                tree.nodes.get_mut(&root).unwrap().children.push(branch);
                for (i, &class) in group.iter().enumerate() {
                    let leaf = tree.alloc(Some(branch));
                    tree.nodes.get_mut(&leaf).unwrap().leaf_class = Some(class);
                    let branch_node = tree.nodes.get_mut(&branch).unwrap();
                    branch_node.children.push(leaf);
                    branch_node.label_transform.insert(class, i);
                }
            }
        }
        for (i, &child) in tree.nodes[&root].children.clone().iter().enumerate() {
            for class in tree.classes_under(child) {
                tree.nodes
                    .get_mut(&root)
                    .unwrap()
                    .label_transform
                    .insert(class, i);
            }
        }
        Ok(tree)
    }

    fn alloc(&mut self, parent: Option<NodeId>) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.insert(
            id,
            TreeNode {
                id,
                parent,
                children: Vec::new(),
                classifier: None,
                label_transform: LabelTransform::default(),
                leaf_class: None,
            },
        );
        id
    }

    pub fn limits(&self) -> TreeLimits {
        self.limits
    }

    pub fn root_id(&self) -> NodeId {
        self.root
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode> {
        self.nodes.get(&id).ok_or(Error::NoSuchNode(id))
    }

    fn node_mut(&mut self, id: NodeId) -> Result<&mut TreeNode> {
        self.nodes.get_mut(&id).ok_or(Error::NoSuchNode(id))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kind(&self, id: NodeId) -> Result<NodeKind> {
        let node = self.node(id)?;
        Ok(if id == self.root {
            NodeKind::Root
        } else if node.is_leaf() {
            NodeKind::Leaf
        } else {
            NodeKind::Branch
        })
    }

    pub fn install_classifier(&mut self, id: NodeId, classifier: NodeClassifier) -> Result<()> {
        self.node_mut(id)?.classifier = Some(classifier);
        Ok(())
    }

    /// Depth of a node below the root (root = 0).
    pub fn depth_of(&self, id: NodeId) -> Result<usize> {
        let mut depth = 0;
        let mut current = self.node(id)?;
        while let Some(parent) = current.parent {
            depth += 1;
            current = self.node(parent)?;
        }
        Ok(depth)
    }

    /// All dataset classes carried by leaves, in label order.
    pub fn classes(&self) -> BTreeSet<ClassLabel> {
        self.nodes
            .values()
            .filter_map(|n| n.leaf_class)
            .collect()
    }

    pub fn contains_class(&self, class: ClassLabel) -> bool {
        self.nodes.values().any(|n| n.leaf_class == Some(class))
    }

    pub fn leaf_of_class(&self, class: ClassLabel) -> Option<NodeId> {
        self.nodes
            .values()
            .find(|n| n.leaf_class == Some(class))
            .map(|n| n.id)
    }

    /// Classes in the subtree rooted at `id`, in label order.
    pub fn classes_under(&self, id: NodeId) -> BTreeSet<ClassLabel> {
        let mut classes = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(at) = stack.pop() {
            if let Some(node) = self.nodes.get(&at) {
                if let Some(class) = node.leaf_class {
                    classes.insert(class);
                }
                stack.extend(node.children.iter().copied());
            }
        }
        classes
    }

    /// Children of `id` summarized for the growth policy, in child order.
    pub fn children_summaries(&self, id: NodeId) -> Result<Vec<ChildSummary>> {
        let node = self.node(id)?;
        node.children
            .iter()
            .map(|&child_id| {
                let child = self.node(child_id)?;
                Ok(ChildSummary {
                    id: child_id,
                    is_leaf: child.is_leaf(),
                    child_count: child.children.len(),
                })
            })
            .collect()
    }

    /// Follow the lookup tables from the root to the leaf carrying `class`.
    pub fn resolve_class(&self, class: ClassLabel) -> Result<NodeId> {
        let mut node = self.node(self.root)?;
        loop {
            if node.is_leaf() {
                if node.leaf_class == Some(class) {
                    return Ok(node.id);
                }
                return Err(Error::MalformedTree {
                    node: node.id,
                    reason: format!("lookup for {class} reached a leaf of a different class"),
                });
            }
            let index = node
                .label_transform
                .child_index(class)
                .ok_or(Error::UnknownClass(class))?;
            let child = *node.children.get(index).ok_or(Error::MalformedTree {
                node: node.id,
                reason: format!("lookup for {class} points past the child list"),
            })?;
            node = self.node(child)?;
        }
    }

    /// Recursive descent for one image: at each non-leaf evaluate the
    /// classifier and follow the child with the highest output (ties break
    /// toward the lowest child index); at a leaf return its class.
    pub fn class_predict(&self, image: &Tensor) -> Result<ClassLabel> {
        let mut node = self.node(self.root)?;
        loop {
            if node.is_leaf() {
                return node.leaf_class.ok_or(Error::MalformedTree {
                    node: node.id,
                    reason: "leaf without a class".into(),
                });
            }
            let classifier = node.classifier.as_ref().ok_or(Error::MalformedTree {
                node: node.id,
                reason: "non-leaf without a classifier".into(),
            })?;
            let scores = classifier.scores(node, image)?;
            if scores.len() != node.children.len() {
                return Err(Error::MalformedTree {
                    node: node.id,
                    reason: format!(
                        "classifier emits {} outputs for {} children",
                        scores.len(),
                        node.children.len()
                    ),
                });
            }
            let mut best = 0usize;
            for (i, &score) in scores.iter().enumerate() {
                if score > scores[best] {
                    best = i;
                }
            }
            node = self.node(node.children[best])?;
        }
    }

    /// Add `class` under the existing child `target` of the node being grown.
    ///
    /// A leaf target converts into a branch holding its old class and the new
    /// one (fresh classifier from `factory`); a branch target gains a new
    /// leaf child. Lookup tables along the path from the root gain the class.
    pub fn add_class_to_node(
        &mut self,
        class: ClassLabel,
        target: NodeId,
        factory: &mut dyn ClassifierFactory,
    ) -> Result<()> {
        if self.contains_class(class) {
            return Err(Error::DuplicateClass(class));
        }
        let target_node = self.node(target)?;
        if target_node.parent.is_none() {
            return Err(Error::MalformedTree {
                node: target,
                reason: "add_class_to_node targets a child, not the root".into(),
            });
        }
        if target_node.is_leaf() {
            let old_class = target_node.leaf_class.unwrap();
            self.convert_leaf_to_branch(target, old_class, class, factory)?;
        } else {
            if target_node.children.len() >= self.limits.max_children {
                return Err(Error::NodeCapacity {
                    node: target,
                    reason: format!(
                        "already holds {} of {} children",
                        target_node.children.len(),
                        self.limits.max_children
                    ),
                });
            }
            let leaf = self.alloc(Some(target));
            self.node_mut(leaf)?.leaf_class = Some(class);
            let target_node = self.node_mut(target)?;
            target_node.children.push(leaf);
            let index = target_node.children.len() - 1;
            target_node.label_transform.insert(class, index);
            if let Some(classifier) = target_node.classifier.as_mut() {
                classifier.add_output()?;
            }
        }
        self.record_class_upward(class, target)?;
        Ok(())
    }

    /// Append `class` as a brand-new leaf child of `parent` (the node being
    /// grown). The parent's classifier gains one output.
    pub fn add_new_node(&mut self, class: ClassLabel, parent: NodeId) -> Result<NodeId> {
        if self.contains_class(class) {
            return Err(Error::DuplicateClass(class));
        }
        let parent_node = self.node(parent)?;
        if parent_node.is_leaf() && parent != self.root {
            return Err(Error::MalformedTree {
                node: parent,
                reason: "cannot append a child to a leaf".into(),
            });
        }
        // The capacity cap applies to branch nodes; the root may grow freely.
        if parent != self.root && parent_node.children.len() >= self.limits.max_children {
            return Err(Error::NodeCapacity {
                node: parent,
                reason: format!(
                    "already holds {} of {} children",
                    parent_node.children.len(),
                    self.limits.max_children
                ),
            });
        }
        let leaf = self.alloc(Some(parent));
        self.node_mut(leaf)?.leaf_class = Some(class);
        let parent_node = self.node_mut(parent)?;
        parent_node.children.push(leaf);
        let index = parent_node.children.len() - 1;
        parent_node.label_transform.insert(class, index);
        if let Some(classifier) = parent_node.classifier.as_mut() {
            classifier.add_output()?;
        }
        self.record_class_upward(class, parent)?;
        Ok(leaf)
    }

    /// Merge the leaf `absorb` into its sibling `keep` under `parent`:
    /// absorb's class becomes a new leaf child of keep, absorb disappears,
    /// and the parent loses one child slot (its classifier shrinks by one).
    pub fn merge_nodes(
        &mut self,
        keep: NodeId,
        absorb: NodeId,
        parent: NodeId,
        factory: &mut dyn ClassifierFactory,
    ) -> Result<()> {
        if keep == absorb {
            return Err(Error::MalformedTree {
                node: keep,
                reason: "cannot merge a node into itself".into(),
            });
        }
        let absorb_node = self.node(absorb)?;
        if !absorb_node.is_leaf() {
            return Err(Error::MalformedTree {
                node: absorb,
                reason: "merge source must be a leaf".into(),
            });
        }
        let absorbed_class = absorb_node.leaf_class.unwrap();
        let parent_node = self.node(parent)?;
        let absorb_index = parent_node
            .children
            .iter()
            .position(|&c| c == absorb)
            .ok_or(Error::MalformedTree {
                node: parent,
                reason: "merge source is not a child of the given parent".into(),
            })?;
        if !parent_node.children.contains(&keep) {
            return Err(Error::MalformedTree {
                node: parent,
                reason: "merge target is not a child of the given parent".into(),
            });
        }
        let keep_node = self.node(keep)?;
        if !keep_node.is_leaf() && keep_node.children.len() >= self.limits.max_children {
            return Err(Error::NodeCapacity {
                node: keep,
                reason: "merge target is at capacity".into(),
            });
        }

        // Drop absorb from the parent; output indices above it shift down.
        self.nodes.remove(&absorb);
        let parent_node = self.node_mut(parent)?;
        parent_node.children.remove(absorb_index);
        if let Some(classifier) = parent_node.classifier.as_mut() {
            classifier.remove_output(absorb_index)?;
        }

        // Re-home the absorbed class under keep.
        let keep_node = self.node(keep)?;
        if keep_node.is_leaf() {
            let old_class = keep_node.leaf_class.unwrap();
            self.convert_leaf_to_branch(keep, old_class, absorbed_class, factory)?;
        } else {
            let leaf = self.alloc(Some(keep));
            self.node_mut(leaf)?.leaf_class = Some(absorbed_class);
            let keep_node = self.node_mut(keep)?;
            keep_node.children.push(leaf);
            let index = keep_node.children.len() - 1;
            keep_node.label_transform.insert(absorbed_class, index);
            if let Some(classifier) = keep_node.classifier.as_mut() {
                classifier.add_output()?;
            }
        }

        // Child indices at the parent moved; rebuild its table outright.
        self.rebuild_transform(parent)?;
        Ok(())
    }

    /// Turn leaf `node` into a branch holding `[old_class, new_class]` with a
    /// fresh classifier from the factory.
    fn convert_leaf_to_branch(
        &mut self,
        node: NodeId,
        old_class: ClassLabel,
        new_class: ClassLabel,
        factory: &mut dyn ClassifierFactory,
    ) -> Result<()> {
        let old_leaf = self.alloc(Some(node));
        self.node_mut(old_leaf)?.leaf_class = Some(old_class);
        let new_leaf = self.alloc(Some(node));
        self.node_mut(new_leaf)?.leaf_class = Some(new_class);
        let classifier = factory.branch_classifier(node, 2)?;
        let branch = self.node_mut(node)?;
        branch.leaf_class = None;
        branch.children = vec![old_leaf, new_leaf];
        branch.label_transform = LabelTransform::default();
        branch.label_transform.insert(old_class, 0);
        branch.label_transform.insert(new_class, 1);
        branch.classifier = Some(classifier);
        Ok(())
    }

    /// Record `class -> child index` in every lookup table on the path from
    /// the root down to `node` (exclusive of `node` itself).
    fn record_class_upward(&mut self, class: ClassLabel, node: NodeId) -> Result<()> {
        let mut child = node;
        while let Some(parent) = self.node(child)?.parent {
            let index = self.node(parent)?
                .children
                .iter()
                .position(|&c| c == child)
                .ok_or(Error::MalformedTree {
                    node: parent,
                    reason: "parent/child links disagree".into(),
                })?;
            self.node_mut(parent)?.label_transform.insert(class, index);
            child = parent;
        }
        Ok(())
    }

    /// Recompute a node's lookup table from its children's subtrees.
    fn rebuild_transform(&mut self, id: NodeId) -> Result<()> {
        let children = self.node(id)?.children.clone();
        let mut transform = LabelTransform::default();
        for (index, child) in children.iter().enumerate() {
            for class in self.classes_under(*child) {
                transform.insert(class, index);
            }
        }
        self.node_mut(id)?.label_transform = transform;
        Ok(())
    }

    /// Check every structural invariant; returns all violations found.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut report = |node: Option<NodeId>, message: String| {
            violations.push(Violation { node, message });
        };

        let Some(root) = self.nodes.get(&self.root) else {
            report(Some(self.root), "root node missing from the store".into());
            return violations;
        };
        if root.parent.is_some() {
            report(Some(self.root), "root has a parent".into());
        }

        // Reachability, uniqueness, and link consistency.
        let mut visited = BTreeSet::new();
        let mut stack = vec![self.root];
        while let Some(at) = stack.pop() {
            if !visited.insert(at) {
                report(Some(at), "node reachable by two paths (cycle or shared child)".into());
                continue;
            }
            let Some(node) = self.nodes.get(&at) else {
                report(Some(at), "child id missing from the store".into());
                continue;
            };
            for &child in &node.children {
                match self.nodes.get(&child) {
                    Some(c) if c.parent != Some(at) => {
                        report(Some(child), "parent link disagrees with child list".into())
                    }
                    None => report(Some(child), "child id missing from the store".into()),
                    _ => {}
                }
                stack.push(child);
            }
        }
        for id in self.nodes.keys() {
            if !visited.contains(id) {
                report(Some(*id), "node not reachable from the root".into());
            }
        }

        let mut seen_classes: BTreeMap<ClassLabel, NodeId> = BTreeMap::new();
        for node in self.nodes.values() {
            let is_root = node.id == self.root;
            if node.is_leaf() {
                if is_root {
                    report(Some(node.id), "root cannot be a leaf".into());
                }
                match node.leaf_class {
                    None => report(Some(node.id), "leaf without a class".into()),
                    Some(class) => {
                        if let Some(other) = seen_classes.insert(class, node.id) {
                            report(
                                Some(node.id),
                                format!("duplicate leaf class {class} (also on {other})"),
                            );
                        }
                    }
                }
                if node.classifier.is_some() {
                    report(Some(node.id), "leaf carries a classifier".into());
                }
                if !node.label_transform.is_empty() {
                    report(Some(node.id), "leaf carries a lookup table".into());
                }
            } else {
                if node.leaf_class.is_some() {
                    report(Some(node.id), "non-leaf carries a leaf class".into());
                }
                if node.children.len() < 2 {
                    report(Some(node.id), "non-leaf with fewer than two children".into());
                }
                if !is_root && node.children.len() > self.limits.max_children {
                    report(
                        Some(node.id),
                        format!(
                            "branch holds {} children, cap is {}",
                            node.children.len(),
                            self.limits.max_children
                        ),
                    );
                }
                match &node.classifier {
                    None => report(Some(node.id), "non-leaf without a classifier".into()),
                    Some(classifier) => {
                        if let Some(outputs) = classifier.output_count() {
                            if outputs != node.children.len() {
                                report(
                                    Some(node.id),
                                    format!(
                                        "classifier has {outputs} outputs for {} children",
                                        node.children.len()
                                    ),
                                );
                            }
                        }
                    }
                }
                // The lookup table must cover exactly the subtree's classes
                // and point each at the child that owns it.
                let subtree = self.classes_under(node.id);
                let domain: BTreeSet<ClassLabel> = node.label_transform.classes().collect();
                if domain != subtree {
                    report(
                        Some(node.id),
                        format!(
                            "lookup table covers {} classes, subtree has {}",
                            domain.len(),
                            subtree.len()
                        ),
                    );
                }
                for (class, index) in node.label_transform.iter() {
                    match node.children.get(index) {
                        None => report(
                            Some(node.id),
                            format!("lookup for {class} points past the child list"),
                        ),
                        Some(&child) => {
                            if !self.classes_under(child).contains(&class) {
                                report(
                                    Some(node.id),
                                    format!("lookup for {class} points at the wrong child"),
                                );
                            }
                        }
                    }
                }
            }
            if let Ok(depth) = self.depth_of(node.id) {
                if depth > self.limits.max_depth {
                    report(
                        Some(node.id),
                        format!("depth {depth} exceeds limit {}", self.limits.max_depth),
                    );
                }
            }
        }
        violations
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub node: Option<NodeId>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node {
            Some(node) => write!(f, "{node}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[cfg(test)]
mod tests;
