//! Wire messages, checkpoints and validator views.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chain::{Block, BlockId, BlockTree, ChainError, ChainRef, Slot};
use crate::ffg::Lattice;

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ValidatorId(pub u32);

impl fmt::Debug for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Supermajority size, the smallest count that is at least two thirds of `n`.
pub fn quorum(n: usize) -> usize {
    (2 * n).div_ceil(3)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Checkpoint {
    pub chain: ChainRef,
    pub c: Slot,
    pub p: Slot,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("checkpoint slot {c} is below chain slot {p}")]
    SlotBelowChain { c: Slot, p: Slot },
}

impl Checkpoint {
    pub fn genesis(tree: &BlockTree) -> Checkpoint {
        Checkpoint { chain: tree.genesis(), c: 0, p: -1 }
    }

    pub fn new(tree: &BlockTree, chain: ChainRef, c: Slot) -> Result<Checkpoint, CheckpointError> {
        let p = tree.slot(&chain)?;
        if c < p {
            return Err(CheckpointError::SlotBelowChain { c, p });
        }
        Ok(Checkpoint { chain, c, p })
    }

    /// Lexicographic `(c, p)` key used by the checkpoint order.
    pub fn rank(&self) -> (Slot, Slot) {
        (self.c, self.p)
    }

    pub fn well_formed(&self, tree: &BlockTree) -> bool {
        self.c >= 0 && tree.slot(&self.chain).map(|p| p == self.p && self.c >= p).unwrap_or(false)
    }
}

pub fn checkpoint_leq(a: &Checkpoint, b: &Checkpoint) -> bool {
    a.rank() <= b.rank()
}

/// Strict order: `a ≤ b` with differing `(c, p)`.
pub fn checkpoint_lt(a: &Checkpoint, b: &Checkpoint) -> bool {
    a.rank() < b.rank()
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct FfgVote {
    pub source: Checkpoint,
    pub target: Checkpoint,
    pub sender: ValidatorId,
}

pub fn ffg_vote_valid(v: &FfgVote, tree: &BlockTree) -> bool {
    v.source.well_formed(tree)
        && v.target.well_formed(tree)
        && v.source.c < v.target.c
        && tree.extends(&v.target.chain, &v.source.chain)
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct VoteMsg {
    pub chain: ChainRef,
    pub ffg: Option<FfgVote>,
    pub slot: Slot,
    pub sender: ValidatorId,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ProposeTob {
    pub block: Arc<Block>,
    pub fast_chain: ChainRef,
    pub cert: Vec<VoteMsg>,
    pub gj: Option<Checkpoint>,
    pub slot: Slot,
    pub sender: ValidatorId,
}

impl ProposeTob {
    pub fn chain_p(&self) -> ChainRef {
        self.block.id
    }
}

#[derive(Clone, Debug)]
pub struct ProposeRlmd {
    pub block: Arc<Block>,
    pub view: Arc<View>,
    pub view_digest: [u8; 32],
    pub slot: Slot,
    pub sender: ValidatorId,
}

impl ProposeRlmd {
    pub fn new(block: Arc<Block>, view: View, slot: Slot, sender: ValidatorId) -> ProposeRlmd {
        let view_digest = view.digest();
        ProposeRlmd { block, view: Arc::new(view), view_digest, slot, sender }
    }

    pub fn chain_p(&self) -> ChainRef {
        self.block.id
    }

    fn key(&self) -> (Slot, ValidatorId, BlockId, [u8; 32]) {
        (self.slot, self.sender, self.block.id, self.view_digest)
    }
}

impl PartialEq for ProposeRlmd {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for ProposeRlmd {}

impl PartialOrd for ProposeRlmd {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ProposeRlmd {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.key().cmp(&other.key())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AckMsg {
    pub checkpoint: Checkpoint,
    pub slot: Slot,
    pub sender: ValidatorId,
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Message {
    Block(Arc<Block>),
    Vote(VoteMsg),
    ProposeTob(Arc<ProposeTob>),
    ProposeRlmd(Arc<ProposeRlmd>),
    Ack(AckMsg),
}

impl Message {
    /// Signing validator; blocks are unsigned.
    pub fn author(&self) -> Option<ValidatorId> {
        match self {
            Message::Block(_) => None,
            Message::Vote(v) => Some(v.sender),
            Message::ProposeTob(p) => Some(p.sender),
            Message::ProposeRlmd(p) => Some(p.sender),
            Message::Ack(a) => Some(a.sender),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Message::Block(_) => "block",
            Message::Vote(_) => "vote",
            Message::ProposeTob(_) | Message::ProposeRlmd(_) => "propose",
            Message::Ack(_) => "ack",
        }
    }

    pub fn proposal_slot(&self) -> Option<Slot> {
        match self {
            Message::ProposeTob(p) => Some(p.slot),
            Message::ProposeRlmd(p) => Some(p.slot),
            _ => None,
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        encode_message(self, &mut h);
        h.finalize().into()
    }

    /// Blocks that must be known before the message can enter a view.
    fn dependencies(&self) -> Vec<BlockId> {
        match self {
            Message::Block(b) => b.parent.into_iter().collect(),
            Message::Vote(v) => vote_deps(v),
            Message::ProposeTob(p) => {
                let mut d = vec![p.block.id, p.fast_chain];
                if let Some(gj) = p.gj {
                    d.push(gj.chain);
                }
                for v in &p.cert {
                    d.extend(vote_deps(v));
                }
                d
            }
            Message::ProposeRlmd(p) => vec![p.block.id],
            Message::Ack(a) => vec![a.checkpoint.chain],
        }
    }
}

fn vote_deps(v: &VoteMsg) -> Vec<BlockId> {
    let mut d = vec![v.chain];
    if let Some(f) = v.ffg {
        d.push(f.source.chain);
        d.push(f.target.chain);
    }
    d
}

fn encode_checkpoint(c: &Checkpoint, h: &mut Sha256) {
    h.update(c.chain.0);
    h.update(c.c.to_le_bytes());
    h.update(c.p.to_le_bytes());
}

fn encode_vote(v: &VoteMsg, h: &mut Sha256) {
    h.update(v.chain.0);
    match &v.ffg {
        Some(f) => {
            h.update([1u8]);
            encode_checkpoint(&f.source, h);
            encode_checkpoint(&f.target, h);
            h.update(f.sender.0.to_le_bytes());
        }
        None => h.update([0u8]),
    }
    h.update(v.slot.to_le_bytes());
    h.update(v.sender.0.to_le_bytes());
}

fn encode_message(m: &Message, h: &mut Sha256) {
    match m {
        Message::Block(b) => {
            h.update(b"B");
            h.update(b.id.0);
        }
        Message::Vote(v) => {
            h.update(b"V");
            encode_vote(v, h);
        }
        Message::ProposeTob(p) => {
            h.update(b"P");
            h.update(p.block.id.0);
            h.update(p.fast_chain.0);
            h.update((p.cert.len() as u64).to_le_bytes());
            for v in &p.cert {
                encode_vote(v, h);
            }
            match &p.gj {
                Some(c) => {
                    h.update([1u8]);
                    encode_checkpoint(c, h);
                }
                None => h.update([0u8]),
            }
            h.update(p.slot.to_le_bytes());
            h.update(p.sender.0.to_le_bytes());
        }
        Message::ProposeRlmd(p) => {
            h.update(b"R");
            h.update(p.block.id.0);
            h.update(p.view_digest);
            h.update(p.slot.to_le_bytes());
            h.update(p.sender.0.to_le_bytes());
        }
        Message::Ack(a) => {
            h.update(b"A");
            encode_checkpoint(&a.checkpoint, h);
            h.update(a.slot.to_le_bytes());
            h.update(a.sender.0.to_le_bytes());
        }
    }
}

/// Certificate check for a fast-confirmed chain; an empty certificate is accepted only for
/// `fallback`.
pub fn quorum_cert_valid(
    cert: &[VoteMsg],
    fast_chain: &ChainRef,
    slot: Slot,
    n: usize,
    tree: &BlockTree,
    fallback: &ChainRef,
) -> bool {
    if cert.is_empty() {
        return fast_chain == fallback;
    }
    let mut senders = BTreeSet::new();
    for v in cert {
        if v.slot != slot || !tree.extends(&v.chain, fast_chain) {
            return false;
        }
        senders.insert(v.sender);
    }
    senders.len() >= quorum(n)
}

/// Result of [`View::insert`].
#[derive(Default, Debug)]
pub struct Inserted {
    /// Messages not seen before, whether integrated or parked in the pending buffer.
    pub fresh: Vec<Message>,
    /// Proposals that became part of the view during this call.
    pub proposals: Vec<Message>,
}

/// A deduplicated message set together with the blocks it references.
#[derive(Clone, Default)]
pub struct View {
    tree: BlockTree,
    votes: BTreeSet<VoteMsg>,
    tob: BTreeSet<Arc<ProposeTob>>,
    rlmd: BTreeSet<Arc<ProposeRlmd>>,
    acks: BTreeSet<AckMsg>,
    pending: BTreeSet<Message>,
    rejected: BTreeSet<BlockId>,
    lattice: OnceLock<(usize, Arc<Lattice>)>,
}

impl fmt::Debug for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("View")
            .field("blocks", &self.tree.len())
            .field("votes", &self.votes.len())
            .field("proposals", &(self.tob.len() + self.rlmd.len()))
            .field("acks", &self.acks.len())
            .field("pending", &self.pending.len())
            .finish()
    }
}

impl PartialEq for View {
    fn eq(&self, other: &Self) -> bool {
        self.tree.ids().eq(other.tree.ids())
            && self.votes == other.votes
            && self.tob == other.tob
            && self.rlmd == other.rlmd
            && self.acks == other.acks
            && self.pending == other.pending
    }
}

impl View {
    pub fn new() -> View {
        View::default()
    }

    pub fn tree(&self) -> &BlockTree {
        &self.tree
    }

    pub fn votes(&self) -> &BTreeSet<VoteMsg> {
        &self.votes
    }

    pub fn acks(&self) -> &BTreeSet<AckMsg> {
        &self.acks
    }

    pub fn tob_proposals(&self) -> &BTreeSet<Arc<ProposeTob>> {
        &self.tob
    }

    #[allow(clippy::mutable_key_type)]
    pub fn rlmd_proposals(&self) -> &BTreeSet<Arc<ProposeRlmd>> {
        &self.rlmd
    }

    pub fn pending(&self) -> &BTreeSet<Message> {
        &self.pending
    }

    pub fn ffg_votes(&self) -> impl Iterator<Item = &FfgVote> {
        self.votes.iter().filter_map(|v| v.ffg.as_ref())
    }

    pub fn contains(&self, m: &Message) -> bool {
        if self.pending.contains(m) {
            return true;
        }
        match m {
            Message::Block(b) => self.tree.contains(&b.id) || self.rejected.contains(&b.id),
            Message::Vote(v) => self.votes.contains(v),
            Message::ProposeTob(p) => self.tob.contains(p),
            Message::ProposeRlmd(p) => self.rlmd.contains(p),
            Message::Ack(a) => self.acks.contains(a),
        }
    }

    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for id in self.tree.ids() {
            h.update(id.0);
        }
        for v in &self.votes {
            encode_message(&Message::Vote(*v), &mut h);
        }
        for p in &self.tob {
            encode_message(&Message::ProposeTob(p.clone()), &mut h);
        }
        for p in &self.rlmd {
            encode_message(&Message::ProposeRlmd(p.clone()), &mut h);
        }
        for a in &self.acks {
            encode_message(&Message::Ack(*a), &mut h);
        }
        for m in &self.pending {
            encode_message(m, &mut h);
        }
        h.finalize().into()
    }

    /// FFG lattice for this view, memoized until the next insertion.
    pub fn lattice(&self, n: usize) -> Arc<Lattice> {
        if let Some((k, l)) = self.lattice.get() {
            if *k == n {
                return l.clone();
            }
            return Arc::new(Lattice::compute(&self.tree, self.ffg_votes(), n));
        }
        let l = Arc::new(Lattice::compute(&self.tree, self.ffg_votes(), n));
        let _ = self.lattice.set((n, l.clone()));
        l
    }

    /// Merges `msg` and everything it carries; messages whose blocks are missing wait in
    /// the pending buffer until those blocks arrive.
    pub fn insert(&mut self, msg: Message) -> Inserted {
        let mut out = Inserted::default();
        let mut grew = false;
        self.insert_inner(msg, &mut out, &mut grew);
        if grew {
            self.drain_pending(&mut out);
        }
        out
    }

    /// Merges every message of `other`.
    pub fn merge(&mut self, other: &View) -> Inserted {
        let mut out = Inserted::default();
        let mut grew = false;
        self.merge_inner(other, &mut out, &mut grew);
        if grew {
            self.drain_pending(&mut out);
        }
        out
    }

    fn merge_inner(&mut self, other: &View, out: &mut Inserted, grew: &mut bool) {
        let mut blocks: Vec<&Arc<Block>> = other.tree.blocks().filter(|b| !b.is_genesis()).collect();
        blocks.sort_by_key(|b| (b.slot, b.id));
        for b in blocks {
            self.insert_inner(Message::Block(b.clone()), out, grew);
        }
        for v in &other.votes {
            self.insert_inner(Message::Vote(*v), out, grew);
        }
        for a in &other.acks {
            self.insert_inner(Message::Ack(*a), out, grew);
        }
        for p in &other.tob {
            self.insert_inner(Message::ProposeTob(p.clone()), out, grew);
        }
        for p in &other.rlmd {
            self.insert_inner(Message::ProposeRlmd(p.clone()), out, grew);
        }
        for m in &other.pending {
            self.insert_inner(m.clone(), out, grew);
        }
    }

    fn ready(&self, m: &Message) -> bool {
        m.dependencies().iter().all(|id| self.tree.contains(id))
    }

    fn insert_inner(&mut self, msg: Message, out: &mut Inserted, grew: &mut bool) {
        if self.contains(&msg) {
            return;
        }
        match &msg {
            Message::ProposeTob(p) => {
                self.insert_inner(Message::Block(p.block.clone()), out, grew);
                for v in &p.cert {
                    self.insert_inner(Message::Vote(*v), out, grew);
                }
            }
            Message::ProposeRlmd(p) => {
                let carried = p.view.clone();
                self.merge_inner(&carried, out, grew);
                self.insert_inner(Message::Block(p.block.clone()), out, grew);
            }
            _ => {}
        }
        if self.contains(&msg) {
            return;
        }
        out.fresh.push(msg.clone());
        if self.ready(&msg) {
            self.integrate(msg, out, grew);
        } else {
            self.pending.insert(msg);
        }
    }

    fn integrate(&mut self, msg: Message, out: &mut Inserted, grew: &mut bool) {
        self.lattice = OnceLock::new();
        match msg {
            Message::Block(b) => {
                let id = b.id;
                if let Err(e) = self.tree.insert(b) {
                    log::debug!("dropping block: {e}");
                    self.rejected.insert(id);
                } else {
                    *grew = true;
                }
            }
            Message::Vote(v) => {
                self.votes.insert(v);
            }
            Message::Ack(a) => {
                self.acks.insert(a);
            }
            Message::ProposeTob(p) => {
                out.proposals.push(Message::ProposeTob(p.clone()));
                self.tob.insert(p);
            }
            Message::ProposeRlmd(p) => {
                out.proposals.push(Message::ProposeRlmd(p.clone()));
                self.rlmd.insert(p);
            }
        }
    }

    fn drain_pending(&mut self, out: &mut Inserted) {
        loop {
            let ready: Vec<Message> = self.pending.iter().filter(|m| self.ready(m)).cloned().collect();
            if ready.is_empty() {
                return;
            }
            let mut grew = false;
            for m in ready {
                self.pending.remove(&m);
                self.integrate(m, out, &mut grew);
            }
            if !grew {
                return;
            }
        }
    }
}

/// Senders with two votes for different chains in the same slot.
pub fn equivocators<'a, I>(votes: I) -> BTreeSet<ValidatorId>
where
    I: IntoIterator<Item = &'a VoteMsg>,
{
    let mut first: BTreeMap<(ValidatorId, Slot), ChainRef> = BTreeMap::new();
    let mut out = BTreeSet::new();
    for v in votes {
        match first.get(&(v.sender, v.slot)) {
            Some(c) if *c != v.chain => {
                out.insert(v.sender);
            }
            Some(_) => {}
            None => {
                first.insert((v.sender, v.slot), v.chain);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vid(i: u32) -> ValidatorId {
        ValidatorId(i)
    }

    fn child(tree: &mut BlockTree, parent: ChainRef, slot: Slot, tag: u64) -> ChainRef {
        let body = [crate::chain::TxId(tag)].into_iter().collect();
        tree.insert(Arc::new(Block::new(parent, slot, body))).unwrap()
    }

    fn vote(chain: ChainRef, slot: Slot, sender: u32) -> VoteMsg {
        VoteMsg { chain, ffg: None, slot, sender: vid(sender) }
    }

    #[test]
    fn quorum_is_ceiling_of_two_thirds() {
        assert_eq!(quorum(3), 2);
        assert_eq!(quorum(4), 3);
        assert_eq!(quorum(6), 4);
        assert_eq!(quorum(9), 6);
        assert_eq!(quorum(10), 7);
        assert_eq!(quorum(12), 8);
    }

    #[test]
    fn ffg_validity() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let b = child(&mut tree, g, 0, 1);
        let a = child(&mut tree, g, 1, 2);
        let gen = Checkpoint::genesis(&tree);
        let b1 = Checkpoint::new(&tree, b, 1).unwrap();
        let b2 = Checkpoint::new(&tree, b, 2).unwrap();
        let a1 = Checkpoint::new(&tree, a, 1).unwrap();
        let bb2 = Checkpoint::new(&tree, b, 2).unwrap();
        assert!(ffg_vote_valid(&FfgVote { source: gen, target: b1, sender: vid(0) }, &tree));
        assert!(!ffg_vote_valid(&FfgVote { source: b2, target: bb2, sender: vid(0) }, &tree));
        assert!(!ffg_vote_valid(&FfgVote { source: a1, target: b2, sender: vid(0) }, &tree));
        let forged = Checkpoint { chain: b, c: 3, p: 2 };
        assert!(!ffg_vote_valid(&FfgVote { source: gen, target: forged, sender: vid(0) }, &tree));
        assert!(Checkpoint::new(&tree, a, 0).is_err());
    }

    #[test]
    fn checkpoint_order() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let a = child(&mut tree, g, 0, 1);
        let b = child(&mut tree, a, 1, 2);
        let a1 = Checkpoint::new(&tree, a, 1).unwrap();
        let b2 = Checkpoint::new(&tree, b, 2).unwrap();
        let a2 = Checkpoint::new(&tree, a, 2).unwrap();
        let a3 = Checkpoint::new(&tree, a, 3).unwrap();
        assert!(checkpoint_leq(&a1, &b2));
        assert!(checkpoint_leq(&a2, &b2));
        assert!(!checkpoint_leq(&a3, &b2));
        assert!(checkpoint_leq(&Checkpoint::genesis(&tree), &a1));
        assert!(!checkpoint_lt(&b2, &b2));
    }

    #[test]
    fn equivocator_examples() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let a = child(&mut tree, g, 0, 1);
        let b = child(&mut tree, g, 0, 2);
        assert!(equivocators(&[]).is_empty());
        let both = [vote(a, 3, 1), vote(b, 3, 1)];
        assert_eq!(equivocators(&both), [vid(1)].into_iter().collect());
        let spread = [vote(a, 3, 1), vote(a, 4, 1)];
        assert!(equivocators(&spread).is_empty());
    }

    #[test]
    fn quorum_cert_examples() {
        let mut tree = BlockTree::new();
        let g = tree.genesis();
        let c = child(&mut tree, g, 0, 1);
        let c1 = child(&mut tree, c, 2, 2);
        let ok = [vote(c1, 4, 0), vote(c, 4, 1)];
        assert!(quorum_cert_valid(&ok, &c, 4, 3, &tree, &g));
        assert!(quorum_cert_valid(&[], &g, 4, 3, &tree, &g));
        assert!(!quorum_cert_valid(&[], &c, 4, 3, &tree, &g));
        let dup = [vote(c1, 4, 0), vote(c, 4, 0)];
        assert!(!quorum_cert_valid(&dup, &c, 4, 3, &tree, &g));
        let wrong_slot = [vote(c1, 4, 0), vote(c, 3, 1)];
        assert!(!quorum_cert_valid(&wrong_slot, &c, 4, 3, &tree, &g));
    }

    #[test]
    fn vote_before_block_is_buffered() {
        let g = crate::chain::genesis_id();
        let b = Arc::new(Block::new(g, 0, BTreeSet::new()));
        let v = vote(b.id, 0, 2);
        let mut view = View::new();
        let r = view.insert(Message::Vote(v));
        assert_eq!(r.fresh.len(), 1);
        assert!(view.votes().is_empty());
        assert_eq!(view.pending().len(), 1);
        view.insert(Message::Block(b.clone()));
        assert!(view.votes().contains(&v));
        assert!(view.pending().is_empty());
        assert!(view.tree().contains(&b.id));
    }

    #[test]
    fn reinsert_is_noop() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let v = vote(g, 0, 1);
        view.insert(Message::Vote(v));
        let before = view.clone();
        let r = view.insert(Message::Vote(v));
        assert!(r.fresh.is_empty());
        assert_eq!(view, before);
    }

    #[test]
    fn rlmd_proposal_carries_view() {
        let mut inner = View::new();
        let g = inner.tree().genesis();
        let b = Arc::new(Block::new(g, 0, BTreeSet::new()));
        inner.insert(Message::Block(b.clone()));
        let v = vote(b.id, 0, 3);
        inner.insert(Message::Vote(v));
        let p = Arc::new(Block::new(b.id, 1, BTreeSet::new()));
        let prop = ProposeRlmd::new(p.clone(), inner, 1, vid(0));
        let mut view = View::new();
        let r = view.insert(Message::ProposeRlmd(Arc::new(prop)));
        assert!(view.votes().contains(&v));
        assert!(view.tree().contains(&p.id));
        assert_eq!(view.rlmd_proposals().len(), 1);
        assert_eq!(r.proposals.len(), 1);
        assert_eq!(r.fresh.len(), 4);
    }

    #[test]
    fn tob_proposal_carries_certificate() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let b = Arc::new(Block::new(g, 1, BTreeSet::new()));
        let cert = vec![vote(g, 0, 0), vote(g, 0, 1)];
        let prop = ProposeTob { block: b, fast_chain: g, cert: cert.clone(), gj: None, slot: 1, sender: vid(2) };
        view.insert(Message::ProposeTob(Arc::new(prop)));
        assert!(cert.iter().all(|v| view.votes().contains(v)));
        assert_eq!(view.tob_proposals().len(), 1);
    }

    #[test]
    fn message_digests_differ_by_kind_and_content() {
        let g = crate::chain::genesis_id();
        let a = Message::Vote(vote(g, 0, 1));
        let b = Message::Vote(vote(g, 0, 2));
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }
}
