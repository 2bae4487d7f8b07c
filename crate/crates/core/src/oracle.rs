//! Brute-force reference evaluators and random fixtures for cross-checking the fork-choice
//! rules and the justification fixpoint.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chain::{Block, BlockTree, ChainRef, Slot, TxId};
use crate::ffg::Lattice;
use crate::forkchoice::{mfc, rlmd_ghost};
use crate::messages::{quorum, Checkpoint, FfgVote, Message, ValidatorId, View, VoteMsg};

fn is_ancestor(tree: &BlockTree, a: &ChainRef, b: &ChainRef) -> bool {
    let mut cur = Some(*b);
    while let Some(c) = cur {
        if c == *a {
            return true;
        }
        cur = tree.parent(&c);
    }
    false
}

/// Votes surviving the equivocation, expiry and latest-message filters, recomputed per vote.
pub fn naive_filter(votes: &BTreeSet<VoteMsg>, t: Slot, eta: Slot) -> Vec<VoteMsg> {
    let all: Vec<&VoteMsg> = votes.iter().collect();
    let equivocates =
        |s: ValidatorId| all.iter().any(|a| all.iter().any(|b| a.sender == s && b.sender == s && a.slot == b.slot && a.chain != b.chain));
    let fresh: Vec<&VoteMsg> = all.iter().copied().filter(|v| !equivocates(v.sender) && v.slot >= t - eta - 1).collect();
    fresh
        .iter()
        .filter(|v| fresh.iter().all(|w| w.sender != v.sender || w.slot <= v.slot))
        .map(|v| **v)
        .collect()
}

fn best_by_slot(tree: &BlockTree, xs: &[ChainRef]) -> Option<ChainRef> {
    let mut out: Option<ChainRef> = None;
    for x in xs {
        let better = match out {
            None => true,
            Some(o) => {
                let (sx, so) = (tree.slot(x).unwrap(), tree.slot(&o).unwrap());
                sx > so || (sx == so && *x < o)
            }
        };
        if better {
            out = Some(*x);
        }
    }
    out
}

/// Majority fork choice by enumeration of every block under `root`.
pub fn naive_mfc(v: &View, v_prime: &View, root: &ChainRef, t: Slot, eta: Slot) -> Option<ChainRef> {
    let tree = v_prime.tree();
    if !tree.contains(root) {
        return None;
    }
    let a = naive_filter(v.votes(), t, eta);
    let b = naive_filter(v_prime.votes(), t, eta);
    let common: Vec<&VoteMsg> = a.iter().filter(|m| b.contains(m)).collect();
    let s: BTreeSet<ValidatorId> = v_prime.votes().iter().filter(|m| m.slot >= t - eta - 1).map(|m| m.sender).collect();
    let mut winners = vec![*root];
    for blk in tree.ids() {
        if !is_ancestor(tree, root, blk) {
            continue;
        }
        let backers: BTreeSet<ValidatorId> =
            common.iter().filter(|m| tree.contains(&m.chain) && is_ancestor(tree, blk, &m.chain)).map(|m| m.sender).collect();
        if 2 * backers.len() > s.len() {
            winners.push(*blk);
        }
    }
    best_by_slot(tree, &winners)
}

/// GHOST by recounting each child's weight from scratch at every step.
pub fn naive_ghost(view: &View, start: &ChainRef, t: Slot, eta: Slot) -> Option<ChainRef> {
    let tree = view.tree();
    if !tree.contains(start) {
        return None;
    }
    let votes: Vec<VoteMsg> = naive_filter(view.votes(), t, eta)
        .into_iter()
        .filter(|m| tree.slot(&m.chain).is_ok_and(|s| s <= t))
        .collect();
    let weight = |b: &ChainRef| -> usize {
        votes.iter().filter(|m| is_ancestor(tree, b, &m.chain)).map(|m| m.sender).collect::<BTreeSet<_>>().len()
    };
    let mut cur = *start;
    loop {
        let kids: Vec<ChainRef> = tree.ids().filter(|k| tree.parent(k) == Some(cur) && tree.slot(k).unwrap() <= t).copied().collect();
        let mut best: Option<(usize, ChainRef)> = None;
        for k in kids {
            let w = weight(&k);
            best = match best {
                Some((bw, bk)) if bw > w || (bw == w && bk < k) => Some((bw, bk)),
                _ => Some((w, k)),
            };
        }
        match best {
            Some((_, k)) => cur = k,
            None => return Some(cur),
        }
    }
}

fn naive_valid(tree: &BlockTree, v: &FfgVote) -> bool {
    let ok = |c: &Checkpoint| tree.slot(&c.chain).is_ok_and(|p| p == c.p && c.c >= p && c.c >= 0);
    ok(&v.source) && ok(&v.target) && v.source.c < v.target.c && is_ancestor(tree, &v.source.chain, &v.target.chain)
}

/// Justified and finalized sets by iterating the justification rule to a fixpoint over
/// every (chain, slot) pair.
pub fn naive_lattice(tree: &BlockTree, votes: &[FfgVote], n: usize) -> (BTreeSet<Checkpoint>, BTreeSet<Checkpoint>) {
    let q = quorum(n);
    let valid: Vec<&FfgVote> = votes.iter().filter(|v| naive_valid(tree, v)).collect();
    let slots: BTreeSet<Slot> = valid.iter().map(|v| v.target.c).collect();
    let mut justified = BTreeSet::from([Checkpoint::genesis(tree)]);
    loop {
        let mut grew = false;
        for chain in tree.ids() {
            for &c in &slots {
                let cp = Checkpoint { chain: *chain, c, p: tree.slot(chain).unwrap() };
                if justified.contains(&cp) {
                    continue;
                }
                let senders: BTreeSet<ValidatorId> = valid
                    .iter()
                    .filter(|v| {
                        v.target.c == c
                            && justified.contains(&v.source)
                            && is_ancestor(tree, &v.source.chain, chain)
                            && is_ancestor(tree, chain, &v.target.chain)
                    })
                    .map(|v| v.sender)
                    .collect();
                if senders.len() >= q {
                    justified.insert(cp);
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }
    let finalized = justified
        .iter()
        .filter(|cp| {
            let s: BTreeSet<ValidatorId> =
                valid.iter().filter(|v| v.source == **cp && v.target.c == cp.c + 1).map(|v| v.sender).collect();
            (cp.c == 0 && cp.p == -1) || s.len() >= q
        })
        .copied()
        .collect();
    (justified, finalized)
}

/// Random block tree with `blocks` non-genesis blocks over slots `0..slots`.
pub fn random_tree(rng: &mut ChaCha8Rng, blocks: usize, slots: Slot) -> (View, Vec<ChainRef>) {
    let mut view = View::new();
    let mut ids = vec![view.tree().genesis()];
    let mut tag = 0;
    while ids.len() <= blocks {
        let parent = *ids.choose(rng).unwrap();
        let ps = view.tree().slot(&parent).unwrap();
        if ps + 1 >= slots {
            if ids.len() == 1 {
                break;
            }
            continue;
        }
        let s = rng.gen_range(ps + 1..slots);
        tag += 1;
        let b = Arc::new(Block::new(parent, s, [TxId(tag)].into_iter().collect()));
        view.insert(Message::Block(b.clone()));
        ids.push(b.id);
    }
    (view, ids)
}

/// A fork-choice fixture: a full view, a partial copy of it, and a query.
pub struct ForkFixture {
    pub full: View,
    pub partial: View,
    pub root: ChainRef,
    pub t: Slot,
    pub eta: Slot,
}

pub fn random_fork_fixture(rng: &mut ChaCha8Rng) -> ForkFixture {
    let slots = rng.gen_range(3..8);
    let blocks = rng.gen_range(1..10);
    let (mut full, ids) = random_tree(rng, blocks, slots);
    let n = rng.gen_range(1..7u32);
    for _ in 0..rng.gen_range(0..14) {
        let chain = *ids.choose(rng).unwrap();
        let cs = full.tree().slot(&chain).unwrap().max(0);
        let vote = VoteMsg { chain, ffg: None, slot: rng.gen_range(cs..slots + 1), sender: ValidatorId(rng.gen_range(0..n)) };
        full.insert(Message::Vote(vote));
    }
    let mut partial = View::new();
    for b in full.tree().blocks().filter(|b| !b.is_genesis()) {
        partial.insert(Message::Block(b.clone()));
    }
    for v in full.votes() {
        if rng.gen_bool(0.85) {
            partial.insert(Message::Vote(*v));
        }
    }
    let root = if rng.gen_bool(0.5) { ids[0] } else { *ids.choose(rng).unwrap() };
    ForkFixture { root, t: rng.gen_range(0..slots + 2), eta: rng.gen_range(1..4), full, partial }
}

/// Both production rules agree with the brute-force ones on this fixture.
pub fn fork_fixture_agrees(f: &ForkFixture) -> bool {
    let pairs = [(&f.partial, &f.full), (&f.full, &f.full)];
    let mfc_ok = pairs.iter().all(|(a, b)| mfc(a, b, &f.root, f.t, f.eta, false).ok() == naive_mfc(a, b, &f.root, f.t, f.eta));
    let ghost_ok = [&f.partial, &f.full].iter().all(|v| rlmd_ghost(v, &f.root, f.t, f.eta).ok() == naive_ghost(v, &f.root, f.t, f.eta));
    mfc_ok && ghost_ok
}

pub struct FfgFixture {
    pub tree: BlockTree,
    pub votes: Vec<FfgVote>,
    pub n: usize,
}

/// Votes drawn from a small pool of links so that supermajorities actually form.
pub fn random_ffg_fixture(rng: &mut ChaCha8Rng) -> FfgFixture {
    let slots = rng.gen_range(3..7);
    let blocks = rng.gen_range(1..9);
    let (view, ids) = random_tree(rng, blocks, slots);
    let tree = view.tree().clone();
    let n = rng.gen_range(1..7usize);
    let mut checkpoints = vec![Checkpoint::genesis(&tree)];
    for id in &ids[1..] {
        let p = tree.slot(id).unwrap();
        let c = rng.gen_range(p.max(1)..slots + 1);
        checkpoints.push(Checkpoint { chain: *id, c, p });
    }
    let mut links = Vec::new();
    for _ in 0..rng.gen_range(1..6) {
        let s = *checkpoints.choose(rng).unwrap();
        let t = *checkpoints.choose(rng).unwrap();
        links.push((s, t));
    }
    // Links that chain off each other make multi-step justification likely.
    links.sort_by_key(|(_, t)| t.c);
    let mut votes = Vec::new();
    for i in 0..n as u32 {
        for (s, t) in &links {
            if rng.gen_bool(0.8) {
                votes.push(FfgVote { source: *s, target: *t, sender: ValidatorId(i) });
            }
        }
    }
    FfgFixture { tree, votes, n }
}

pub fn ffg_fixture_agrees(f: &FfgFixture) -> bool {
    let lat = Lattice::compute(&f.tree, &f.votes, f.n);
    let (j, fin) = naive_lattice(&f.tree, &f.votes, f.n);
    lat.justified == j && lat.finalized == fin
}
