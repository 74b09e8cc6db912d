//! Derivation trees: the record of which alternative was committed at each
//! expanded nonterminal. Leaves are terminals or unfilled placeholders; no
//! concrete argument values are ever stored here.

use std::collections::BTreeSet;

use crate::grammar::{AltId, Grammar, NtId, PlaceholderId, Symbol, TokenId};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Child {
    Node(DerivationNode),
    Token(TokenId),
    Placeholder(PlaceholderId),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivationNode {
    pub nonterminal: NtId,
    pub alternative: usize,
    pub children: Vec<Child>,
    pub depth: u32,
}

/// A statement's derivation tree is just its root node.
pub type DerivationTree = DerivationNode;

impl DerivationNode {
    pub fn alt_id(&self) -> AltId {
        AltId {
            nt: self.nonterminal,
            index: self.alternative,
        }
    }

    /// Number of internal (nonterminal) nodes, including this one.
    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|c| match c {
                Child::Node(n) => n.node_count(),
                _ => 0,
            })
            .sum::<usize>()
    }

    /// Deepest node depth in the tree.
    pub fn max_depth(&self) -> u32 {
        self.children
            .iter()
            .filter_map(|c| match c {
                Child::Node(n) => Some(n.max_depth()),
                _ => None,
            })
            .max()
            .unwrap_or(self.depth)
    }

    /// Internal nodes in preorder.
    pub fn preorder(&self) -> Vec<&DerivationNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in n.children.iter().rev() {
                if let Child::Node(child) = c {
                    stack.push(child);
                }
            }
        }
        out
    }

    /// Mutable access to the `k`-th internal node in preorder.
    pub fn preorder_mut(&mut self, k: usize) -> Option<&mut DerivationNode> {
        let mut remaining = k;
        fn walk<'a>(
            node: &'a mut DerivationNode,
            remaining: &mut usize,
        ) -> Option<&'a mut DerivationNode> {
            if *remaining == 0 {
                return Some(node);
            }
            *remaining -= 1;
            for c in node.children.iter_mut() {
                if let Child::Node(child) = c {
                    if let Some(found) = walk(child, remaining) {
                        return Some(found);
                    }
                }
            }
            None
        }
        walk(self, &mut remaining)
    }

    /// The distinct (nonterminal, alternative) arms committed anywhere in
    /// the tree.
    pub fn arms(&self) -> BTreeSet<AltId> {
        self.preorder().into_iter().map(|n| n.alt_id()).collect()
    }

    /// Shift every depth so that this node sits at `depth`.
    pub fn rebase(&mut self, depth: u32) {
        let delta = depth as i64 - self.depth as i64;
        fn shift(node: &mut DerivationNode, delta: i64) {
            node.depth = (node.depth as i64 + delta) as u32;
            for c in &mut node.children {
                if let Child::Node(n) = c {
                    shift(n, delta);
                }
            }
        }
        shift(self, delta);
    }

    /// Check the structural invariants against the grammar: children match
    /// the committed alternative's symbols in kind and order, and depth
    /// increases by one per level.
    pub fn check(&self, grammar: &Grammar) -> Result<(), String> {
        let rule = grammar.rule(self.nonterminal);
        let alt = rule
            .alternatives
            .get(self.alternative)
            .ok_or_else(|| format!("{}[{}] does not exist", rule.name, self.alternative))?;
        if alt.symbols.len() != self.children.len() {
            return Err(format!(
                "{}[{}] has {} symbols but node has {} children",
                rule.name,
                self.alternative,
                alt.symbols.len(),
                self.children.len()
            ));
        }
        for (sym, child) in alt.symbols.iter().zip(&self.children) {
            match (sym, child) {
                (Symbol::NonTerminal(nt), Child::Node(n)) if *nt == n.nonterminal => {
                    if n.depth != self.depth + 1 {
                        return Err(format!("depth jump under {}", rule.name));
                    }
                    n.check(grammar)?;
                }
                (Symbol::Token(a), Child::Token(b)) if a == b => {}
                (Symbol::Placeholder(a), Child::Placeholder(b)) if a == b => {}
                _ => {
                    return Err(format!(
                        "child mismatch under {}[{}]",
                        rule.name, self.alternative
                    ))
                }
            }
        }
        Ok(())
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<Leaf> {
        let mut out = Vec::new();
        fn walk(node: &DerivationNode, out: &mut Vec<Leaf>) {
            for c in &node.children {
                match c {
                    Child::Node(n) => walk(n, out),
                    Child::Token(t) => out.push(Leaf::Token(*t)),
                    Child::Placeholder(p) => out.push(Leaf::Placeholder(*p)),
                }
            }
        }
        walk(self, &mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leaf {
    Token(TokenId),
    Placeholder(PlaceholderId),
}
