//! Nested pools: any two classes have disjoint or nested server sets.
//!
//! Such a pool is a forest whose internal nodes are classes and whose leaves
//! are servers. Numbering servers in depth-first order turns every class into
//! an interval, so a nested pool is also a line pool.

use serde::{Deserialize, Serialize};

use super::line::{line_metrics, IntervalClass, LinePool};
use super::StructuredMetrics;
use crate::error::{Error, Result};
use crate::model::PoolModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum TreeNode {
    Class(usize),
    Server(usize),
}

/// Forest representation of a nested pool. All ids are 1-based.
///
/// The parent of a server is the smallest class assigned to it; the parent
/// of a class is the smallest class strictly containing it. Classes with
/// identical server sets are chained, the lower id being the parent.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedTree {
    model: PoolModel,
    /// Classes without a parent; more than one means independent sub-pools.
    pub roots: Vec<usize>,
    pub class_parent: Vec<Option<usize>>,
    pub server_parent: Vec<usize>,
    /// Children of each class, ordered by their smallest server id.
    pub children: Vec<Vec<TreeNode>>,
    /// Depth-first server labeling: position `p` holds the id of the server
    /// that becomes server `p + 1` of the equivalent line pool.
    pub server_order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NestedBuild {
    Nested(NestedTree),
    /// The first pair of classes (by id) that overlap without nesting.
    NotNested(usize, usize),
}

fn nested_pair(a: &[usize], b: &[usize]) -> bool {
    // both sorted
    let common = a.iter().filter(|k| b.binary_search(k).is_ok()).count();
    common == 0 || common == a.len() || common == b.len()
}

/// Checks nestedness and builds the forest with its depth-first labeling.
pub fn nested_tree_build(model: &PoolModel) -> NestedBuild {
    let classes = model.classes();
    for (x, a) in classes.iter().enumerate() {
        for b in &classes[x + 1..] {
            if !nested_pair(&a.servers, &b.servers) {
                return NestedBuild::NotNested(a.id, b.id);
            }
        }
    }

    // largest classes first; among equal sets the lower id comes first
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|&x, &y| {
        classes[y]
            .servers
            .len()
            .cmp(&classes[x].servers.len())
            .then(x.cmp(&y))
    });
    let contains = |outer: usize, inner: usize| {
        classes[inner]
            .servers
            .iter()
            .all(|k| classes[outer].servers.binary_search(k).is_ok())
    };
    let mut class_parent = vec![None; classes.len()];
    for (pos, &c) in order.iter().enumerate() {
        // containers form a chain; the last one in `order` is the smallest
        class_parent[c] = order[..pos]
            .iter()
            .rev()
            .find(|&&o| contains(o, c))
            .map(|&o| o + 1);
    }
    let server_parent: Vec<usize> = (1..=model.server_count())
        .map(|k| {
            order
                .iter()
                .rev()
                .find(|&&c| classes[c].servers.binary_search(&k).is_ok())
                .map(|&c| c + 1)
                .expect("validated pools assign every server")
        })
        .collect();

    let mut children = vec![Vec::new(); classes.len()];
    for (c, parent) in class_parent.iter().enumerate() {
        if let Some(p) = parent {
            children[p - 1].push(TreeNode::Class(c + 1));
        }
    }
    for (k, &p) in server_parent.iter().enumerate() {
        children[p - 1].push(TreeNode::Server(k + 1));
    }
    let first_server = |n: &TreeNode| match *n {
        TreeNode::Class(c) => classes[c - 1].servers[0],
        TreeNode::Server(k) => k,
    };
    for list in &mut children {
        list.sort_by_key(|n| (first_server(n), matches!(n, TreeNode::Server(_))));
    }
    let mut roots: Vec<usize> = (0..classes.len())
        .filter(|&c| class_parent[c].is_none())
        .map(|c| c + 1)
        .collect();
    roots.sort_by_key(|&c| classes[c - 1].servers[0]);

    let mut server_order = Vec::with_capacity(model.server_count());
    let mut stack: Vec<TreeNode> = roots.iter().rev().map(|&c| TreeNode::Class(c)).collect();
    while let Some(node) = stack.pop() {
        match node {
            TreeNode::Server(k) => server_order.push(k),
            TreeNode::Class(c) => stack.extend(children[c - 1].iter().rev().copied()),
        }
    }

    NestedBuild::Nested(NestedTree {
        model: model.clone(),
        roots,
        class_parent,
        server_parent,
        children,
        server_order,
    })
}

impl NestedTree {
    pub fn model(&self) -> &PoolModel {
        &self.model
    }

    /// The pool relabeled in depth-first order, classes kept in id order.
    pub fn to_line_pool(&self) -> LinePool {
        let k = self.model.server_count();
        let mut position = vec![0; k + 1];
        for (p, &s) in self.server_order.iter().enumerate() {
            position[s] = p + 1;
        }
        let classes = self
            .model
            .classes()
            .iter()
            .map(|c| {
                let (lo, hi) = c.servers.iter().fold((usize::MAX, 0), |(lo, hi), &s| {
                    (lo.min(position[s]), hi.max(position[s]))
                });
                debug_assert_eq!(hi + 1 - lo, c.servers.len());
                IntervalClass {
                    i: lo,
                    j: hi,
                    lambda: c.lambda,
                }
            })
            .collect();
        LinePool {
            k,
            mu: self
                .server_order
                .iter()
                .map(|&s| self.model.mu(s))
                .collect(),
            classes,
        }
    }

    /// Total arrival rate of each class's subtree (the class included).
    fn subtree_arrivals(&self) -> Vec<f64> {
        let classes = self.model.classes();
        let mut sums: Vec<f64> = classes.iter().map(|c| c.lambda).collect();
        // children are strictly smaller or later duplicates, so smallest first works
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by(|&x, &y| {
            classes[x]
                .servers
                .len()
                .cmp(&classes[y].servers.len())
                .then(y.cmp(&x))
        });
        for c in order {
            if let Some(p) = self.class_parent[c] {
                sums[p - 1] += sums[c];
            }
        }
        sums
    }

    /// `ρ_{|i} = λ_i / (M(K_i) − Λ(descendants of i))` for every class.
    pub fn conditional_loads(&self) -> Vec<f64> {
        let sums = self.subtree_arrivals();
        self.model
            .classes()
            .iter()
            .enumerate()
            .map(|(c, class)| {
                let capacity: f64 = class.servers.iter().map(|&k| self.model.mu(k)).sum();
                class.lambda / (capacity - (sums[c] - class.lambda))
            })
            .collect()
    }

    /// `ψ = Π_i (1 − ρ_{|i})`, in `O(IK)`.
    pub fn empty_probability(&self) -> Result<f64> {
        let mut psi = 1.0;
        for (c, rho) in self.conditional_loads().into_iter().enumerate() {
            if !(0.0..1.0).contains(&rho) {
                return Err(Error::Overloaded(format!(
                    "class {} has conditional load {rho}",
                    c + 1
                )));
            }
            psi *= 1.0 - rho;
        }
        Ok(psi)
    }
}

/// `ψ` by the product formula; `L` and per-class means (in class id order)
/// through the line recursion on the depth-first labeling.
pub fn nested_metrics(tree: &NestedTree) -> Result<StructuredMetrics> {
    let psi = tree.empty_probability()?;
    let line = line_metrics(&tree.to_line_pool())?;
    Ok(StructuredMetrics {
        psi,
        l_total: line.l_total,
        l_parts: line.l_parts,
    })
}
