//! Content-addressed block tree.
//!
//! A chain is identified by its tip block, so [`ChainRef`] is just a block id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use sha2::{Digest, Sha256};
use thiserror::Error;

pub type Slot = i64;
pub type Round = u64;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BlockId(pub [u8; 32]);

pub type ChainRef = BlockId;

impl BlockId {
    pub fn short(&self) -> String {
        hex::encode(&self.0[..6])
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.short())
    }
}

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct TxId(pub u64);

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Block {
    pub id: BlockId,
    pub parent: Option<BlockId>,
    pub slot: Slot,
    pub body: BTreeSet<TxId>,
}

fn block_digest(parent: Option<&BlockId>, slot: Slot, body: &BTreeSet<TxId>) -> BlockId {
    let mut h = Sha256::new();
    h.update(b"block/v1");
    match parent {
        Some(p) => {
            h.update([1u8]);
            h.update(p.0);
        }
        None => h.update([0u8]),
    }
    h.update(slot.to_le_bytes());
    h.update((body.len() as u64).to_le_bytes());
    for tx in body {
        h.update(tx.0.to_le_bytes());
    }
    BlockId(h.finalize().into())
}

impl Block {
    pub fn genesis() -> Block {
        let body = BTreeSet::new();
        Block { id: block_digest(None, -1, &body), parent: None, slot: -1, body }
    }

    pub fn new(parent: BlockId, slot: Slot, body: BTreeSet<TxId>) -> Block {
        Block { id: block_digest(Some(&parent), slot, &body), parent: Some(parent), slot, body }
    }

    pub fn is_genesis(&self) -> bool {
        self.parent.is_none()
    }
}

pub fn genesis_id() -> BlockId {
    static GENESIS: OnceLock<BlockId> = OnceLock::new();
    *GENESIS.get_or_init(|| Block::genesis().id)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainError {
    #[error("parent {0:?} is not in the tree")]
    UnknownParent(BlockId),
    #[error("block slot {child} does not exceed parent slot {parent}")]
    SlotNotIncreasing { parent: Slot, child: Slot },
    #[error("block {0:?} is not in the tree")]
    UnknownBlock(BlockId),
    #[error("chain tip slot {tip} is not below target slot {slot}")]
    ChainTooLong { tip: Slot, slot: Slot },
    #[error("parentless block {0:?} is not genesis")]
    InvalidRoot(BlockId),
}

#[derive(Clone, Debug)]
struct Node {
    block: Arc<Block>,
    depth: u32,
    children: Vec<BlockId>,
}

#[derive(Clone, Debug)]
pub struct BlockTree {
    nodes: BTreeMap<BlockId, Node>,
    genesis: BlockId,
}

impl Default for BlockTree {
    fn default() -> Self {
        Self::new()
    }
}

impl BlockTree {
    pub fn new() -> BlockTree {
        let g = Arc::new(Block::genesis());
        let genesis = g.id;
        let mut nodes = BTreeMap::new();
        nodes.insert(genesis, Node { block: g, depth: 0, children: Vec::new() });
        BlockTree { nodes, genesis }
    }

    pub fn genesis(&self) -> ChainRef {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, id: &BlockId) -> bool {
        self.nodes.contains_key(id)
    }

    pub fn get(&self, id: &BlockId) -> Option<&Arc<Block>> {
        self.nodes.get(id).map(|n| &n.block)
    }

    pub fn block(&self, id: &BlockId) -> Result<&Arc<Block>, ChainError> {
        self.get(id).ok_or(ChainError::UnknownBlock(*id))
    }

    pub fn slot(&self, id: &BlockId) -> Result<Slot, ChainError> {
        Ok(self.block(id)?.slot)
    }

    pub fn depth(&self, id: &BlockId) -> Result<u32, ChainError> {
        self.nodes.get(id).map(|n| n.depth).ok_or(ChainError::UnknownBlock(*id))
    }

    pub fn children(&self, id: &BlockId) -> &[BlockId] {
        self.nodes.get(id).map(|n| n.children.as_slice()).unwrap_or(&[])
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Arc<Block>> {
        self.nodes.values().map(|n| &n.block)
    }

    pub fn ids(&self) -> impl Iterator<Item = &BlockId> {
        self.nodes.keys()
    }

    /// Inserts `b`; duplicates are a no-op.
    pub fn insert(&mut self, b: Arc<Block>) -> Result<ChainRef, ChainError> {
        if self.nodes.contains_key(&b.id) {
            return Ok(b.id);
        }
        let parent = match b.parent {
            None => return Err(ChainError::InvalidRoot(b.id)),
            Some(p) => p,
        };
        let pnode = self.nodes.get_mut(&parent).ok_or(ChainError::UnknownParent(parent))?;
        if pnode.block.slot >= b.slot {
            return Err(ChainError::SlotNotIncreasing { parent: pnode.block.slot, child: b.slot });
        }
        let depth = pnode.depth + 1;
        let pos = pnode.children.binary_search(&b.id).unwrap_or_else(|e| e);
        pnode.children.insert(pos, b.id);
        let id = b.id;
        self.nodes.insert(id, Node { block: b, depth, children: Vec::new() });
        Ok(id)
    }

    pub fn parent(&self, id: &BlockId) -> Option<BlockId> {
        self.nodes.get(id).and_then(|n| n.block.parent)
    }

    /// Ancestor of `id` at the given depth.
    fn ancestor_at(&self, id: &BlockId, depth: u32) -> Result<BlockId, ChainError> {
        let mut cur = *id;
        let mut d = self.depth(&cur)?;
        while d > depth {
            cur = self.nodes[&cur].block.parent.expect("non-root has parent");
            d -= 1;
        }
        Ok(cur)
    }

    /// `a ⪯ b`: `a` lies on the ancestor path of `b` (reflexive).
    pub fn is_prefix(&self, a: &ChainRef, b: &ChainRef) -> Result<bool, ChainError> {
        let da = self.depth(a)?;
        let db = self.depth(b)?;
        if da > db {
            return Ok(false);
        }
        Ok(self.ancestor_at(b, da)? == *a)
    }

    /// Infallible form of [`is_prefix`](Self::is_prefix); unknown blocks are never prefixes.
    pub fn extends(&self, b: &ChainRef, a: &ChainRef) -> bool {
        self.is_prefix(a, b).unwrap_or(false)
    }

    pub fn conflicts(&self, a: &ChainRef, b: &ChainRef) -> Result<bool, ChainError> {
        Ok(!self.is_prefix(a, b)? && !self.is_prefix(b, a)?)
    }

    /// Deepest ancestor of `c` (inclusive) with slot at most `t - k`.
    pub fn kappa_deep_prefix(&self, c: &ChainRef, k: i64, t: Slot) -> Result<ChainRef, ChainError> {
        let bound = t - k;
        let mut cur = *c;
        loop {
            let n = self.nodes.get(&cur).ok_or(ChainError::UnknownBlock(cur))?;
            if n.block.slot <= bound {
                return Ok(cur);
            }
            match n.block.parent {
                Some(p) => cur = p,
                None => return Ok(cur),
            }
        }
    }

    pub fn chain_leq(&self, a: &ChainRef, b: &ChainRef) -> Result<bool, ChainError> {
        Ok(self.slot(a)? <= self.slot(b)?)
    }

    /// Maximum under the slot pre-order; ties go to the smallest id.
    pub fn max_chain<'a, I>(&self, chains: I) -> Option<ChainRef>
    where
        I: IntoIterator<Item = &'a ChainRef>,
    {
        let mut best: Option<(Slot, ChainRef)> = None;
        for c in chains {
            let s = match self.slot(c) {
                Ok(s) => s,
                Err(_) => continue,
            };
            best = match best {
                None => Some((s, *c)),
                Some((bs, bc)) if s > bs || (s == bs && *c < bc) => Some((s, *c)),
                keep => keep,
            };
        }
        best.map(|(_, c)| c)
    }

    /// Longest common prefix of `a` and `b`.
    pub fn common_prefix(&self, a: &ChainRef, b: &ChainRef) -> Result<ChainRef, ChainError> {
        let da = self.depth(a)?;
        let db = self.depth(b)?;
        let d = da.min(db);
        let mut x = self.ancestor_at(a, d)?;
        let mut y = self.ancestor_at(b, d)?;
        while x != y {
            x = self.nodes[&x].block.parent.expect("paths meet at genesis");
            y = self.nodes[&y].block.parent.expect("paths meet at genesis");
        }
        Ok(x)
    }

    /// Ids from `c` back to genesis, tip first.
    pub fn ancestry(&self, c: &ChainRef) -> Ancestry<'_> {
        Ancestry { tree: self, next: self.contains(c).then_some(*c) }
    }

    pub fn contains_tx(&self, c: &ChainRef, tx: TxId) -> Result<bool, ChainError> {
        self.block(c)?;
        Ok(self.ancestry(c).any(|id| self.nodes[&id].block.body.contains(&tx)))
    }

    /// New block on top of `c` at slot `t` holding every pool transaction not already in `c`.
    pub fn extend(&self, c: &ChainRef, t: Slot, pool: &BTreeSet<TxId>) -> Result<Block, ChainError> {
        let tip = self.slot(c)?;
        if tip >= t {
            return Err(ChainError::ChainTooLong { tip, slot: t });
        }
        let mut body = pool.clone();
        if !body.is_empty() {
            for id in self.ancestry(c) {
                for tx in &self.nodes[&id].block.body {
                    body.remove(tx);
                }
            }
        }
        Ok(Block::new(*c, t, body))
    }
}

pub struct Ancestry<'a> {
    tree: &'a BlockTree,
    next: Option<BlockId>,
}

impl Iterator for Ancestry<'_> {
    type Item = BlockId;

    fn next(&mut self) -> Option<BlockId> {
        let cur = self.next?;
        self.next = self.tree.parent(&cur);
        Some(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn txs(ids: &[u64]) -> BTreeSet<TxId> {
        ids.iter().map(|&i| TxId(i)).collect()
    }

    fn path(tree: &mut BlockTree, slots: &[Slot]) -> Vec<ChainRef> {
        let mut out = vec![tree.genesis()];
        for &s in slots {
            let b = Block::new(*out.last().unwrap(), s, BTreeSet::new());
            out.push(tree.insert(Arc::new(b)).unwrap());
        }
        out
    }

    #[test]
    fn genesis_is_root() {
        let mut tree = BlockTree::new();
        let g = Arc::new(Block::genesis());
        assert_eq!(g.slot, -1);
        assert_eq!(tree.insert(g.clone()).unwrap(), tree.genesis());
        assert_eq!(tree.len(), 1);
    }

    #[test]
    fn insert_is_idempotent() {
        let mut tree = BlockTree::new();
        let b = Arc::new(Block::new(tree.genesis(), 0, BTreeSet::new()));
        let r1 = tree.insert(b.clone()).unwrap();
        let r2 = tree.insert(b).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(tree.len(), 2);
    }

    #[test]
    fn insert_rejects_non_increasing_slot() {
        let mut tree = BlockTree::new();
        let b = Block::new(tree.genesis(), -1, BTreeSet::new());
        assert_eq!(
            tree.insert(Arc::new(b)),
            Err(ChainError::SlotNotIncreasing { parent: -1, child: -1 })
        );
    }

    #[test]
    fn insert_rejects_unknown_parent() {
        let mut tree = BlockTree::new();
        let orphan = Block::new(BlockId([7; 32]), 3, BTreeSet::new());
        assert!(matches!(tree.insert(Arc::new(orphan)), Err(ChainError::UnknownParent(_))));
    }

    #[test]
    fn block_id_is_content_digest() {
        let g = genesis_id();
        assert_eq!(Block::new(g, 2, txs(&[1, 2])).id, Block::new(g, 2, txs(&[2, 1])).id);
        assert_ne!(Block::new(g, 2, txs(&[1])).id, Block::new(g, 3, txs(&[1])).id);
        assert_ne!(Block::new(g, 2, txs(&[1])).id, Block::new(g, 2, txs(&[2])).id);
    }

    #[test]
    fn prefix_and_conflict() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let a = tree.insert(Arc::new(Block::new(g, 0, txs(&[1])))).unwrap();
        let b = tree.insert(Arc::new(Block::new(g, 0, txs(&[2])))).unwrap();
        let a1 = tree.insert(Arc::new(Block::new(a, 1, txs(&[])))).unwrap();
        assert!(tree.is_prefix(&g, &a1).unwrap());
        assert!(tree.is_prefix(&a1, &a1).unwrap());
        assert!(!tree.is_prefix(&a, &b).unwrap());
        assert!(tree.is_prefix(&a, &a1).unwrap());
        assert!(!tree.is_prefix(&a1, &a).unwrap());
        assert!(!tree.conflicts(&a1, &a1).unwrap());
        assert!(!tree.conflicts(&g, &a1).unwrap());
        assert!(tree.conflicts(&a, &b).unwrap());
        assert!(tree.conflicts(&a1, &b).unwrap());
        assert_eq!(tree.is_prefix(&g, &BlockId([1; 32])), Err(ChainError::UnknownBlock(BlockId([1; 32]))));
    }

    #[test]
    fn kappa_deep_prefix_examples() {
        let mut tree = BlockTree::new();
        let p = path(&mut tree, &[0, 1, 2, 3]);
        let tip = p[4];
        assert_eq!(tree.kappa_deep_prefix(&tip, 2, 3).unwrap(), p[2]);
        assert_eq!(tree.slot(&p[2]).unwrap(), 1);
        assert_eq!(tree.kappa_deep_prefix(&tip, 0, 3).unwrap(), tip);
        assert_eq!(tree.kappa_deep_prefix(&tip, 10, 3).unwrap(), tree.genesis());
    }

    #[test]
    fn kappa_deep_prefix_skips_gaps() {
        let mut tree = BlockTree::new();
        let p = path(&mut tree, &[0, 4, 9]);
        assert_eq!(tree.kappa_deep_prefix(&p[3], 2, 9).unwrap(), p[2]);
        assert_eq!(tree.kappa_deep_prefix(&p[3], 6, 9).unwrap(), p[1]);
    }

    #[test]
    fn chain_leq_is_preorder_on_slots() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let a0 = tree.insert(Arc::new(Block::new(g, 0, txs(&[])))).unwrap();
        let a1 = tree.insert(Arc::new(Block::new(a0, 1, txs(&[])))).unwrap();
        let b2 = tree.insert(Arc::new(Block::new(g, 2, txs(&[1])))).unwrap();
        let c2 = tree.insert(Arc::new(Block::new(g, 2, txs(&[2])))).unwrap();
        let d3 = tree.insert(Arc::new(Block::new(a1, 3, txs(&[])))).unwrap();
        assert!(tree.chain_leq(&a0, &a1).unwrap());
        assert!(tree.chain_leq(&b2, &c2).unwrap() && tree.chain_leq(&c2, &b2).unwrap());
        assert!(!tree.chain_leq(&d3, &a1).unwrap());
    }

    #[test]
    fn max_chain_examples() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        assert_eq!(tree.max_chain(&[g]), Some(g));
        let s1 = tree.insert(Arc::new(Block::new(g, 1, txs(&[])))).unwrap();
        let s3 = tree.insert(Arc::new(Block::new(g, 3, txs(&[])))).unwrap();
        assert_eq!(tree.max_chain(&[s1, s3]), Some(s3));
        let x = tree.insert(Arc::new(Block::new(g, 2, txs(&[10])))).unwrap();
        let y = tree.insert(Arc::new(Block::new(g, 2, txs(&[11])))).unwrap();
        let small = x.min(y);
        assert_eq!(tree.max_chain(&[x, y]), Some(small));
        assert_eq!(tree.max_chain(&[y, x]), Some(small));
        assert_eq!(tree.max_chain(&[]), None);
    }

    #[test]
    fn extend_examples() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let b = tree.extend(&g, 0, &txs(&[1])).unwrap();
        assert_eq!((b.slot, b.parent), (0, Some(g)));
        assert_eq!(b.body, txs(&[1]));
        let c = tree.insert(Arc::new(b)).unwrap();
        let d = tree.extend(&c, 5, &txs(&[1, 2])).unwrap();
        assert_eq!(d.body, txs(&[2]));
        let d = tree.insert(Arc::new(d)).unwrap();
        assert!(tree.contains_tx(&d, TxId(1)).unwrap());
        assert!(tree.contains_tx(&d, TxId(2)).unwrap());
        assert!(tree.is_prefix(&c, &d).unwrap() && c != d);
        assert_eq!(
            tree.extend(&d, 5, &BTreeSet::new()),
            Err(ChainError::ChainTooLong { tip: 5, slot: 5 })
        );
    }

    #[test]
    fn contains_tx_walks_ancestors() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        assert!(!tree.contains_tx(&g, TxId(1)).unwrap());
        let a = tree.insert(Arc::new(Block::new(g, 0, txs(&[1])))).unwrap();
        assert!(tree.contains_tx(&a, TxId(1)).unwrap());
        let b = tree.insert(Arc::new(Block::new(a, 1, txs(&[])))).unwrap();
        let c = tree.insert(Arc::new(Block::new(b, 2, txs(&[5])))).unwrap();
        let d = tree.insert(Arc::new(Block::new(c, 3, txs(&[])))).unwrap();
        assert!(tree.contains_tx(&d, TxId(1)).unwrap());
        assert!(!tree.contains_tx(&d, TxId(9)).unwrap());
    }

    #[test]
    fn common_prefix_of_branches() {
        let mut tree = BlockTree::new();
        let p = path(&mut tree, &[0, 1]);
        let x = tree.insert(Arc::new(Block::new(p[2], 2, txs(&[1])))).unwrap();
        let y = tree.insert(Arc::new(Block::new(p[1], 4, txs(&[2])))).unwrap();
        assert_eq!(tree.common_prefix(&x, &y).unwrap(), p[1]);
        assert_eq!(tree.common_prefix(&x, &x).unwrap(), x);
        assert_eq!(tree.common_prefix(&p[2], &x).unwrap(), p[2]);
    }
}
