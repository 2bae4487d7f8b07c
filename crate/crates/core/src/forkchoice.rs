//! Vote filters, the majority fork choice, RLMD-GHOST and fast confirmation.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::chain::{BlockTree, ChainRef, Slot};
use crate::ffg::greatest_justified;
use crate::messages::{equivocators, quorum, ValidatorId, View, VoteMsg};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ForkChoiceError {
    #[error("root block {0:?} is not in the view")]
    UnknownRoot(ChainRef),
}

/// Expiry period: one slot in a synchronous network, `pi + 2` with an asynchrony window.
pub fn eta_for(pi: u32) -> Slot {
    if pi == 0 {
        1
    } else {
        pi as Slot + 2
    }
}

pub fn fil_eq<'a, I>(votes: I) -> BTreeSet<VoteMsg>
where
    I: IntoIterator<Item = &'a VoteMsg> + Clone,
{
    let bad = equivocators(votes.clone());
    votes.into_iter().filter(|v| !bad.contains(&v.sender)).copied().collect()
}

pub fn fil_exp<'a, I>(votes: I, t: Slot, eta: Slot) -> BTreeSet<VoteMsg>
where
    I: IntoIterator<Item = &'a VoteMsg>,
{
    votes.into_iter().filter(|v| v.slot >= t - eta - 1).copied().collect()
}

pub fn fil_lmd<'a, I>(votes: I) -> BTreeSet<VoteMsg>
where
    I: IntoIterator<Item = &'a VoteMsg> + Clone,
{
    let mut latest: BTreeMap<ValidatorId, Slot> = BTreeMap::new();
    for v in votes.clone() {
        let e = latest.entry(v.sender).or_insert(v.slot);
        *e = (*e).max(v.slot);
    }
    votes.into_iter().filter(|v| latest[&v.sender] == v.slot).copied().collect()
}

/// The composite filter used by both fork-choice rules.
pub fn fil_rlmd(votes: &BTreeSet<VoteMsg>, t: Slot, eta: Slot) -> BTreeSet<VoteMsg> {
    let eq = fil_eq(votes);
    let exp = fil_exp(&eq, t, eta);
    fil_lmd(&exp)
}

pub fn senders_s(votes: &BTreeSet<VoteMsg>, t: Slot, eta: Slot) -> BTreeSet<ValidatorId> {
    votes.iter().filter(|v| v.slot >= t - eta - 1).map(|v| v.sender).collect()
}

pub fn votes_for(view: &View, chain: &ChainRef, t: Slot, eta: Slot) -> BTreeSet<VoteMsg> {
    let tree = view.tree();
    fil_rlmd(view.votes(), t, eta).into_iter().filter(|v| tree.extends(&v.chain, chain)).collect()
}

/// Distinct supporters per block, counting each vote toward every block from its chain up to `root`.
fn support_below<'a, I>(tree: &BlockTree, root: &ChainRef, votes: I) -> BTreeMap<ChainRef, BTreeSet<ValidatorId>>
where
    I: IntoIterator<Item = &'a VoteMsg>,
{
    let mut out: BTreeMap<ChainRef, BTreeSet<ValidatorId>> = BTreeMap::new();
    for v in votes {
        if !tree.extends(&v.chain, root) {
            continue;
        }
        for id in tree.ancestry(&v.chain) {
            out.entry(id).or_default().insert(v.sender);
            if id == *root {
                break;
            }
        }
    }
    out
}

/// Highest-slot block in `blocks`, smallest id on ties.
fn highest<'a, I>(tree: &BlockTree, blocks: I) -> Option<ChainRef>
where
    I: IntoIterator<Item = &'a ChainRef>,
{
    tree.max_chain(blocks)
}

/// Majority fork choice. Counts votes present in both filtered views, against the
/// non-expired senders of `v_prime`. With `by_sender` the intersection matches senders
/// rather than whole messages.
pub fn mfc(
    v: &View,
    v_prime: &View,
    root: &ChainRef,
    t: Slot,
    eta: Slot,
    by_sender: bool,
) -> Result<ChainRef, ForkChoiceError> {
    let tree = v_prime.tree();
    if !tree.contains(root) {
        return Err(ForkChoiceError::UnknownRoot(*root));
    }
    let a = fil_rlmd(v.votes(), t, eta);
    let b = fil_rlmd(v_prime.votes(), t, eta);
    let s = senders_s(v_prime.votes(), t, eta).len();
    let support = if by_sender {
        // A sender counts for a block only if its filtered votes extend it in both views.
        let sa = support_below(tree, root, &a);
        let sb = support_below(tree, root, &b);
        sa.into_iter()
            .filter_map(|(k, set)| sb.get(&k).map(|o| (k, set.intersection(o).copied().collect())))
            .collect::<BTreeMap<ChainRef, BTreeSet<ValidatorId>>>()
    } else {
        support_below(tree, root, a.intersection(&b))
    };
    let winners: Vec<ChainRef> = support.iter().filter(|(_, who)| who.len() * 2 > s).map(|(k, _)| *k).collect();
    Ok(highest(tree, winners.iter().chain(std::iter::once(root))).unwrap_or(*root))
}

/// GHOST walk from `start` over the filtered latest votes, ignoring blocks and votes
/// from slots after `t`.
pub fn rlmd_ghost(view: &View, start: &ChainRef, t: Slot, eta: Slot) -> Result<ChainRef, ForkChoiceError> {
    let tree = view.tree();
    if !tree.contains(start) {
        return Err(ForkChoiceError::UnknownRoot(*start));
    }
    let filtered = fil_rlmd(view.votes(), t, eta);
    let eligible = filtered.iter().filter(|v| tree.slot(&v.chain).map(|s| s <= t).unwrap_or(false));
    let weight = support_below(tree, start, eligible);
    let w = |b: &ChainRef| weight.get(b).map_or(0, |s| s.len());
    let mut cur = *start;
    loop {
        let mut best: Option<(usize, ChainRef)> = None;
        for c in tree.children(&cur) {
            if tree.slot(c).map(|s| s > t).unwrap_or(true) {
                continue;
            }
            let cw = w(c);
            // Children are sorted by id, so the first maximum is the smallest.
            if best.is_none_or(|(bw, _)| cw > bw) {
                best = Some((cw, *c));
            }
        }
        match best {
            Some((_, c)) => cur = c,
            None => return Ok(cur),
        }
    }
}

/// Highest chain extended by slot-`t` votes of a supermajority, with the votes backing it.
pub fn fast_confirm_simple(view: &View, t: Slot, n: usize) -> (ChainRef, Vec<VoteMsg>) {
    let tree = view.tree();
    let g = tree.genesis();
    let slot_votes: Vec<&VoteMsg> = view.votes().iter().filter(|v| v.slot == t).collect();
    let support = support_below(tree, &g, slot_votes.iter().copied());
    let q = quorum(n);
    let candidates: Vec<ChainRef> = support.iter().filter(|(_, who)| who.len() >= q).map(|(k, _)| *k).collect();
    match highest(tree, &candidates) {
        Some(fc) => {
            let cert = slot_votes.into_iter().filter(|v| tree.extends(&v.chain, &fc)).copied().collect();
            (fc, cert)
        }
        None => (g, Vec::new()),
    }
}

/// Fast confirmation that never falls behind the greatest justified checkpoint.
pub fn fast_confirm_gj(view: &View, t: Slot, n: usize) -> (ChainRef, Vec<VoteMsg>) {
    let (fc, cert) = fast_confirm_simple(view, t, n);
    let gj = greatest_justified(view, n);
    if view.tree().extends(&fc, &gj.chain) {
        (fc, cert)
    } else {
        (gj.chain, Vec::new())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Block, TxId};
    use crate::messages::{Checkpoint, FfgVote, Message};
    use std::sync::Arc;

    fn add(view: &mut View, parent: ChainRef, slot: Slot, tag: u64) -> ChainRef {
        let b = Arc::new(Block::new(parent, slot, [TxId(tag)].into_iter().collect()));
        view.insert(Message::Block(b.clone()));
        b.id
    }

    fn vote(view: &mut View, chain: ChainRef, slot: Slot, who: u32) -> VoteMsg {
        let v = VoteMsg { chain, ffg: None, slot, sender: ValidatorId(who) };
        view.insert(Message::Vote(v));
        v
    }

    #[test]
    fn eta_rule() {
        assert_eq!(eta_for(0), 1);
        assert_eq!(eta_for(1), 3);
        assert_eq!(eta_for(2), 4);
    }

    #[test]
    fn equivocators_lose_every_vote() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let a = add(&mut view, g, 0, 1);
        let b = add(&mut view, g, 0, 2);
        vote(&mut view, a, 1, 0);
        vote(&mut view, a, 2, 1);
        vote(&mut view, b, 2, 1);
        vote(&mut view, a, 5, 1);
        assert_eq!(fil_eq(view.votes()).iter().map(|v| v.sender).collect::<Vec<_>>(), vec![ValidatorId(0)]);
        assert!(fil_eq(&BTreeSet::new()).is_empty());
        let honest = View::new();
        assert_eq!(fil_eq(honest.votes()), *honest.votes());
    }

    #[test]
    fn expiry_boundary() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let a = add(&mut view, g, 0, 1);
        let v3 = vote(&mut view, a, 3, 0);
        let v2 = vote(&mut view, a, 2, 1);
        let kept = fil_exp(view.votes(), 5, 1);
        assert!(kept.contains(&v3));
        assert!(!kept.contains(&v2));
        assert_eq!(fil_exp(view.votes(), 0, 1), *view.votes());
    }

    #[test]
    fn lmd_keeps_latest_and_same_slot_pairs() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let a = add(&mut view, g, 0, 1);
        let b = add(&mut view, g, 0, 2);
        vote(&mut view, a, 2, 0);
        let late = vote(&mut view, a, 4, 0);
        assert_eq!(fil_lmd(view.votes()), BTreeSet::from([late]));
        let x = vote(&mut view, a, 6, 1);
        let y = vote(&mut view, b, 6, 1);
        let l = fil_lmd(view.votes());
        assert!(l.contains(&x) && l.contains(&y));
        assert!(!fil_eq(&l).contains(&x));
    }

    #[test]
    fn senders_include_equivocators() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let a = add(&mut view, g, 0, 1);
        let b = add(&mut view, g, 0, 2);
        assert!(senders_s(view.votes(), 3, 1).is_empty());
        vote(&mut view, a, 2, 3);
        vote(&mut view, b, 2, 3);
        assert_eq!(senders_s(view.votes(), 3, 1), BTreeSet::from([ValidatorId(3)]));
        assert!(senders_s(view.votes(), 9, 1).is_empty());
    }

    #[test]
    fn votes_for_subtree() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let a = add(&mut view, g, 0, 1);
        let a1 = add(&mut view, a, 1, 3);
        let b = add(&mut view, g, 0, 2);
        let w0 = vote(&mut view, a1, 1, 0);
        let w1 = vote(&mut view, a, 1, 1);
        let w2 = vote(&mut view, b, 1, 2);
        vote(&mut view, a, 1, 3);
        vote(&mut view, b, 1, 3);
        assert_eq!(votes_for(&view, &g, 2, 1), BTreeSet::from([w0, w1, w2]));
        assert_eq!(votes_for(&view, &a, 2, 1), BTreeSet::from([w0, w1]));
        let c = add(&mut view, b, 1, 4);
        assert!(votes_for(&view, &c, 2, 1).is_empty());
    }

    fn mfc_fixture() -> (View, ChainRef, ChainRef) {
        let mut view = View::new();
        let g = view.tree().genesis();
        let b = add(&mut view, g, 0, 1);
        let b2 = add(&mut view, g, 0, 2);
        for who in 0..3 {
            vote(&mut view, b, 0, who);
        }
        vote(&mut view, b2, 0, 3);
        (view, b, b2)
    }

    #[test]
    fn mfc_majority() {
        let empty = View::new();
        let g = empty.tree().genesis();
        assert_eq!(mfc(&empty, &empty, &g, 1, 1, false), Ok(g));

        let (view, b, _) = mfc_fixture();
        assert_eq!(mfc(&view, &view, &g, 1, 1, false), Ok(b));

        let mut partial = View::new();
        let b_block = view.tree().block(&b).unwrap().clone();
        partial.insert(Message::Block(b_block));
        for v in view.votes() {
            if v.sender != ValidatorId(2) {
                let blk = view.tree().block(&v.chain).unwrap().clone();
                partial.insert(Message::Block(blk));
                partial.insert(Message::Vote(*v));
            }
        }
        // Missing from the first view: 2 common votes against 4 senders.
        assert_eq!(mfc(&partial, &view, &g, 1, 1, false), Ok(g));
        assert_eq!(mfc(&partial, &view, &g, 1, 1, true), Ok(g));
        // Missing from the second view: 2 common votes against 3 senders.
        assert_eq!(mfc(&view, &partial, &g, 1, 1, false), Ok(b));
        assert_eq!(mfc(&view, &view, &g, 1, 1, true), Ok(b));
    }

    #[test]
    fn mfc_unknown_root() {
        let (view, _, _) = mfc_fixture();
        let ghost = Block::new(view.tree().genesis(), 7, BTreeSet::new()).id;
        assert_eq!(mfc(&view, &view, &ghost, 1, 1, false), Err(ForkChoiceError::UnknownRoot(ghost)));
    }

    #[test]
    fn ghost_follows_weight() {
        let mut view = View::new();
        let g = view.tree().genesis();
        assert_eq!(rlmd_ghost(&view, &g, 3, 1), Ok(g));
        let a = add(&mut view, g, 0, 1);
        let b = add(&mut view, g, 0, 2);
        let a1 = add(&mut view, a, 1, 3);
        vote(&mut view, a1, 1, 0);
        vote(&mut view, a1, 1, 1);
        vote(&mut view, b, 1, 2);
        assert_eq!(rlmd_ghost(&view, &g, 2, 1), Ok(a1));
        // Votes for chains after t carry no weight.
        assert_eq!(rlmd_ghost(&view, &g, 0, 1), Ok(b));
    }

    #[test]
    fn ghost_ties_go_to_smaller_id() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let a = add(&mut view, g, 0, 1);
        let b = add(&mut view, g, 0, 2);
        vote(&mut view, a, 1, 0);
        vote(&mut view, b, 1, 1);
        let expected = a.min(b);
        assert_eq!(rlmd_ghost(&view, &g, 2, 1), Ok(expected));
        let mut other = View::new();
        add(&mut other, g, 0, 2);
        add(&mut other, g, 0, 1);
        vote(&mut other, b, 1, 1);
        vote(&mut other, a, 1, 0);
        assert_eq!(rlmd_ghost(&other, &g, 2, 1), Ok(expected));
    }

    #[test]
    fn fast_confirm_quorum() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let c = add(&mut view, g, 0, 1);
        let c1 = add(&mut view, c, 1, 2);
        vote(&mut view, c, 2, 0);
        assert_eq!(fast_confirm_simple(&view, 2, 3), (g, vec![]));
        vote(&mut view, c, 2, 1);
        vote(&mut view, c1, 2, 2);
        let (fc, cert) = fast_confirm_simple(&view, 2, 3);
        assert_eq!(fc, c);
        assert_eq!(cert.len(), 3);
        assert_eq!(fast_confirm_gj(&view, 2, 3).0, c);
        assert_eq!(fast_confirm_gj(&View::new(), 0, 3), (g, vec![]));
    }

    #[test]
    fn fast_confirm_falls_back_to_justified() {
        let mut view = View::new();
        let g = view.tree().genesis();
        let j = add(&mut view, g, 0, 1);
        let q = add(&mut view, g, 0, 2);
        let gen = Checkpoint::genesis(view.tree());
        let j1 = Checkpoint::new(view.tree(), j, 1).unwrap();
        for who in 0..3 {
            let ffg = FfgVote { source: gen, target: j1, sender: ValidatorId(who) };
            view.insert(Message::Vote(VoteMsg { chain: j, ffg: Some(ffg), slot: 1, sender: ValidatorId(who) }));
            vote(&mut view, q, 2, who);
        }
        assert_eq!(fast_confirm_simple(&view, 2, 3).0, q);
        assert_eq!(fast_confirm_gj(&view, 2, 3), (j, vec![]));
    }
}
