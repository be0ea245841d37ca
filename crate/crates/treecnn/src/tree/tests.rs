use super::*;
use crate::tree::stub::marker_image;

fn limits() -> TreeLimits {
    TreeLimits {
        max_children: 5,
        max_depth: 2,
    }
}

fn image_shape() -> Vec<usize> {
    vec![1, 2, 2]
}

/// Root with two branches of three leaves each: vehicles {0,1,2} and
/// animals {3,4,5}, with label-routing stubs everywhere.
fn six_class_tree() -> Tree {
    let groups = vec![
        vec![ClassLabel(0), ClassLabel(1), ClassLabel(2)],
        vec![ClassLabel(3), ClassLabel(4), ClassLabel(5)],
    ];
    let mut tree = Tree::from_groups(&groups, limits()).unwrap();
    install_label_routers(&mut tree);
    tree
}

fn install_label_routers(tree: &mut Tree) {
    let non_leaves: Vec<NodeId> = tree
        .nodes()
        .filter(|n| !n.is_leaf())
        .map(|n| n.id())
        .collect();
    for id in non_leaves {
        tree.install_classifier(id, NodeClassifier::Stub(StubRouter::LabelRouting))
            .unwrap();
    }
}

#[test]
fn fresh_initial_tree_is_valid() {
    let tree = six_class_tree();
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());
    assert_eq!(tree.classes().len(), 6);
    assert_eq!(tree.node(tree.root_id()).unwrap().children().len(), 2);
}

#[test]
fn one_level_tree_prediction_is_argmax_of_root() {
    let groups = vec![
        vec![ClassLabel(10)],
        vec![ClassLabel(11)],
        vec![ClassLabel(12)],
    ];
    let mut tree = Tree::from_groups(&groups, limits()).unwrap();
    tree.install_classifier(
        tree.root_id(),
        NodeClassifier::Stub(StubRouter::Constant(vec![0.1, 0.7, 0.2])),
    )
    .unwrap();
    let prediction = tree.class_predict(&Tensor::zeros(&image_shape())).unwrap();
    assert_eq!(prediction, ClassLabel(11));
}

#[test]
fn prediction_ties_break_toward_lowest_child_index() {
    let groups = vec![vec![ClassLabel(0)], vec![ClassLabel(1)]];
    let mut tree = Tree::from_groups(&groups, limits()).unwrap();
    tree.install_classifier(
        tree.root_id(),
        NodeClassifier::Stub(StubRouter::Constant(vec![0.5, 0.5])),
    )
    .unwrap();
    let prediction = tree.class_predict(&Tensor::zeros(&image_shape())).unwrap();
    assert_eq!(prediction, ClassLabel(0));
}

#[test]
fn two_level_routing_follows_hand_set_scores() {
    // Root prefers child 1; that branch prefers its child 0 -> class 3.
    let tree = {
        let groups = vec![
            vec![ClassLabel(0), ClassLabel(1), ClassLabel(2)],
            vec![ClassLabel(3), ClassLabel(4), ClassLabel(5)],
        ];
        let mut tree = Tree::from_groups(&groups, limits()).unwrap();
        let root = tree.root_id();
        let branches: Vec<NodeId> = tree.node(root).unwrap().children().to_vec();
        tree.install_classifier(
            root,
            NodeClassifier::Stub(StubRouter::Constant(vec![0.2, 0.8])),
        )
        .unwrap();
        tree.install_classifier(
            branches[0],
            NodeClassifier::Stub(StubRouter::Constant(vec![1.0, 0.0, 0.0])),
        )
        .unwrap();
        tree.install_classifier(
            branches[1],
            NodeClassifier::Stub(StubRouter::Constant(vec![0.9, 0.05, 0.05])),
        )
        .unwrap();
        tree
    };
    let prediction = tree.class_predict(&Tensor::zeros(&image_shape())).unwrap();
    assert_eq!(prediction, ClassLabel(3));
}

#[test]
fn label_routing_resolves_every_class() {
    let tree = six_class_tree();
    for class in tree.classes() {
        let image = marker_image(&image_shape(), class);
        assert_eq!(tree.class_predict(&image).unwrap(), class);
        let leaf = tree.resolve_class(class).unwrap();
        assert_eq!(tree.node(leaf).unwrap().leaf_class(), Some(class));
    }
}

#[test]
fn add_class_to_leaf_converts_it_to_a_branch() {
    let groups = vec![
        vec![ClassLabel(1)],
        vec![ClassLabel(2)],
        vec![ClassLabel(3)],
    ];
    let mut tree = Tree::from_groups(&groups, limits()).unwrap();
    install_label_routers(&mut tree);
    let leaf_c1 = tree.leaf_of_class(ClassLabel(1)).unwrap();
    tree.add_class_to_node(ClassLabel(4), leaf_c1, &mut StubFactory)
        .unwrap();

    let converted = tree.node(leaf_c1).unwrap();
    assert!(!converted.is_leaf());
    assert_eq!(converted.children().len(), 2);
    let classes = tree.classes_under(leaf_c1);
    assert!(classes.contains(&ClassLabel(1)) && classes.contains(&ClassLabel(4)));
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());

    // Lookup round trip reaches the new class.
    let image = marker_image(&image_shape(), ClassLabel(4));
    assert_eq!(tree.class_predict(&image).unwrap(), ClassLabel(4));
}

#[test]
fn add_class_to_branch_appends_a_leaf() {
    let mut tree = six_class_tree();
    let branch = tree.node(tree.root_id()).unwrap().children()[0];
    tree.add_class_to_node(ClassLabel(9), branch, &mut StubFactory)
        .unwrap();
    assert_eq!(tree.node(branch).unwrap().children().len(), 4);
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());
    let image = marker_image(&image_shape(), ClassLabel(9));
    assert_eq!(tree.class_predict(&image).unwrap(), ClassLabel(9));
}

#[test]
fn duplicate_class_is_rejected() {
    let mut tree = six_class_tree();
    let branch = tree.node(tree.root_id()).unwrap().children()[0];
    let result = tree.add_class_to_node(ClassLabel(3), branch, &mut StubFactory);
    assert!(matches!(result, Err(Error::DuplicateClass(ClassLabel(3)))));
    let result = tree.add_new_node(ClassLabel(3), tree.root_id());
    assert!(matches!(result, Err(Error::DuplicateClass(ClassLabel(3)))));
}

#[test]
fn capacity_is_enforced_on_branch_targets() {
    let mut tree = six_class_tree();
    let branch = tree.node(tree.root_id()).unwrap().children()[0];
    // Branch holds 3; cap is 5.
    tree.add_class_to_node(ClassLabel(20), branch, &mut StubFactory)
        .unwrap();
    tree.add_class_to_node(ClassLabel(21), branch, &mut StubFactory)
        .unwrap();
    let result = tree.add_class_to_node(ClassLabel(22), branch, &mut StubFactory);
    assert!(matches!(result, Err(Error::NodeCapacity { .. })));
}

#[test]
fn add_new_node_grows_the_root_and_preserves_old_paths() {
    let mut tree = six_class_tree();
    let before: Vec<(ClassLabel, NodeId)> = tree
        .classes()
        .into_iter()
        .map(|c| (c, tree.resolve_class(c).unwrap()))
        .collect();
    let root_children = tree.node(tree.root_id()).unwrap().children().len();

    let leaf = tree.add_new_node(ClassLabel(6), tree.root_id()).unwrap();
    assert_eq!(
        tree.node(tree.root_id()).unwrap().children().len(),
        root_children + 1
    );
    assert_eq!(tree.resolve_class(ClassLabel(6)).unwrap(), leaf);
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());
    for (class, old_leaf) in before {
        assert_eq!(tree.resolve_class(class).unwrap(), old_leaf);
    }
}

#[test]
fn root_is_exempt_from_the_capacity_cap() {
    let mut tree = six_class_tree();
    for label in 30..40 {
        tree.add_new_node(ClassLabel(label), tree.root_id()).unwrap();
    }
    assert_eq!(tree.node(tree.root_id()).unwrap().children().len(), 12);
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());
}

#[test]
fn merge_moves_the_absorbed_class_under_keep() {
    // Root children: branch {0,1}, leaf 2, leaf 3.
    let groups = vec![
        vec![ClassLabel(0), ClassLabel(1)],
        vec![ClassLabel(2)],
        vec![ClassLabel(3)],
    ];
    let mut tree = Tree::from_groups(&groups, limits()).unwrap();
    install_label_routers(&mut tree);
    let root = tree.root_id();
    let keep = tree.node(root).unwrap().children()[0];
    let absorb = tree.node(root).unwrap().children()[1];

    tree.merge_nodes(keep, absorb, root, &mut StubFactory).unwrap();

    assert_eq!(tree.node(root).unwrap().children().len(), 2);
    let keep_classes = tree.classes_under(keep);
    assert_eq!(keep_classes.len(), 3);
    assert!(keep_classes.contains(&ClassLabel(2)));
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());
    let image = marker_image(&image_shape(), ClassLabel(2));
    assert_eq!(tree.class_predict(&image).unwrap(), ClassLabel(2));
    // The class formerly behind the absorbed leaf still resolves.
    assert_eq!(
        tree.class_predict(&marker_image(&image_shape(), ClassLabel(3))).unwrap(),
        ClassLabel(3)
    );
}

#[test]
fn merging_into_a_leaf_builds_a_two_leaf_branch() {
    let groups = vec![
        vec![ClassLabel(0)],
        vec![ClassLabel(1)],
        vec![ClassLabel(2)],
    ];
    let mut tree = Tree::from_groups(&groups, limits()).unwrap();
    install_label_routers(&mut tree);
    let root = tree.root_id();
    let keep = tree.node(root).unwrap().children()[0];
    let absorb = tree.node(root).unwrap().children()[1];

    tree.merge_nodes(keep, absorb, root, &mut StubFactory).unwrap();

    let keep_node = tree.node(keep).unwrap();
    assert!(!keep_node.is_leaf());
    assert_eq!(keep_node.children().len(), 2);
    assert!(tree.is_valid(), "violations: {:?}", tree.validate());
}

#[test]
fn merge_rejects_non_leaf_sources() {
    let mut tree = six_class_tree();
    let root = tree.root_id();
    let children = tree.node(root).unwrap().children().to_vec();
    let result = tree.merge_nodes(children[0], children[1], root, &mut StubFactory);
    assert!(matches!(result, Err(Error::MalformedTree { .. })));
}

#[test]
fn validate_flags_duplicate_leaf_classes_and_small_branches() {
    // Corrupt topologies cannot be built through the public operations, so
    // assemble them via the snapshot loader.
    let snapshot = TreeSnapshot {
        root: NodeId(0),
        next_id: 4,
        limits: limits(),
        nodes: vec![
            NodeSnapshot {
                id: NodeId(0),
                parent: None,
                children: vec![NodeId(1), NodeId(2)],
                leaf_class: None,
                label_transform: vec![(ClassLabel(7), 0), (ClassLabel(8), 1)],
                classifier: Some(ClassifierSnapshot::Stub {
                    router: StubRouter::LabelRouting,
                }),
            },
            NodeSnapshot {
                id: NodeId(1),
                parent: Some(NodeId(0)),
                children: vec![],
                leaf_class: Some(ClassLabel(7)),
                label_transform: vec![],
                classifier: None,
            },
            NodeSnapshot {
                id: NodeId(2),
                parent: Some(NodeId(0)),
                children: vec![NodeId(3)],
                leaf_class: None,
                label_transform: vec![(ClassLabel(7), 0)],
                classifier: Some(ClassifierSnapshot::Stub {
                    router: StubRouter::LabelRouting,
                }),
            },
            NodeSnapshot {
                id: NodeId(3),
                parent: Some(NodeId(2)),
                children: vec![],
                leaf_class: Some(ClassLabel(7)),
                label_transform: vec![],
                classifier: None,
            },
        ],
    };
    let tree = snapshot::tree_from_snapshot(&snapshot, std::path::Path::new("."), false).unwrap();
    let violations = tree.validate();
    assert!(violations
        .iter()
        .any(|v| v.message.contains("duplicate leaf class")));
    assert!(violations
        .iter()
        .any(|v| v.message.contains("fewer than two children")));
}

#[test]
fn snapshot_round_trips_stub_trees() {
    let tree = six_class_tree();
    let dir = tempfile::tempdir().unwrap();
    let snapshot_path = dir.path().join("tree.snapshot");
    let checkpoints = dir.path().join("checkpoints");
    save_tree(&tree, &snapshot_path, &checkpoints).unwrap();
    let restored = load_tree(&snapshot_path, &checkpoints, true).unwrap();
    assert!(restored.is_valid());
    assert_eq!(restored.classes(), tree.classes());
    for node in tree.nodes() {
        let other = restored.node(node.id()).unwrap();
        assert_eq!(other.children(), node.children());
        assert_eq!(other.classifier_checksum(), node.classifier_checksum());
    }
}

#[test]
fn dot_export_counts_node_kinds() {
    let tree = six_class_tree();
    let dot = export_dot(&tree, None);
    assert_eq!(dot.matches("shape=diamond").count(), 1);
    assert_eq!(dot.matches("shape=box").count(), 2);
    assert_eq!(dot.matches("shape=ellipse").count(), 6);
}

#[test]
fn full_branches_are_flagged_in_dot() {
    let mut tree = six_class_tree();
    let branch = tree.node(tree.root_id()).unwrap().children()[0];
    tree.add_class_to_node(ClassLabel(20), branch, &mut StubFactory)
        .unwrap();
    tree.add_class_to_node(ClassLabel(21), branch, &mut StubFactory)
        .unwrap();
    let dot = export_dot(&tree, None);
    assert_eq!(dot.matches("fillcolor=yellow").count(), 1);
}
