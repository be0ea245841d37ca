//! Graphviz export of the hierarchy. The root renders as a diamond, branch
//! nodes as boxes (yellow when completely filled, blue otherwise), and leaf
//! nodes as green ellipses labeled with their class.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::{ClassLabel, NodeKind, Tree};

pub fn export_dot(tree: &Tree, class_names: Option<&BTreeMap<ClassLabel, String>>) -> String {
    let mut out = String::from("digraph tree_cnn {\n  rankdir=TB;\n");
    // Breadth-first in child order keeps the output deterministic.
    let mut queue = vec![tree.root_id()];
    let mut edges = String::new();
    while !queue.is_empty() {
        let mut next = Vec::new();
        for id in queue {
            let Ok(node) = tree.node(id) else { continue };
            match tree.kind(id).unwrap_or(NodeKind::Branch) {
                NodeKind::Root => {
                    let _ = writeln!(
                        out,
                        "  {id} [label=\"root ({} children)\", shape=diamond, style=filled, fillcolor=white];",
                        node.children().len()
                    );
                }
                NodeKind::Branch => {
                    let full = node.children().len() >= tree.limits().max_children;
                    let color = if full { "yellow" } else { "lightskyblue" };
                    let marker = if full { " [full]" } else { "" };
                    let _ = writeln!(
                        out,
                        "  {id} [label=\"{id}{marker}\", shape=box, style=filled, fillcolor={color}];"
                    );
                }
                NodeKind::Leaf => {
                    let class = node.leaf_class().expect("leaf has a class");
                    let label = class_names
                        .and_then(|names| names.get(&class).cloned())
                        .unwrap_or_else(|| class.to_string());
                    let _ = writeln!(
                        out,
                        "  {id} [label=\"{label}\", shape=ellipse, style=filled, fillcolor=palegreen];"
                    );
                }
            }
            for &child in node.children() {
                let _ = writeln!(edges, "  {id} -> {child};");
                next.push(child);
            }
        }
        queue = next;
    }
    out.push_str(&edges);
    out.push_str("}\n");
    out
}
