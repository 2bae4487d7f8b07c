//! Finality gadget: justification, finalization and the greatest justified/finalized
//! checkpoints of a view.

use std::collections::{BTreeMap, BTreeSet};

use crate::chain::{BlockTree, ChainRef, Slot};
use crate::messages::{ffg_vote_valid, quorum, Checkpoint, FfgVote, ValidatorId, View};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    pub justified: BTreeSet<Checkpoint>,
    pub finalized: BTreeSet<Checkpoint>,
    pub gj: Checkpoint,
    pub gf: Checkpoint,
}

type Link = (Checkpoint, Checkpoint);

impl Lattice {
    pub fn compute<'a, I>(tree: &BlockTree, votes: I, n: usize) -> Lattice
    where
        I: IntoIterator<Item = &'a FfgVote>,
    {
        let q = quorum(n);
        let genesis = Checkpoint::genesis(tree);

        // Distinct senders per valid link, bucketed by target slot.
        let mut links: BTreeMap<Slot, BTreeMap<Link, BTreeSet<ValidatorId>>> = BTreeMap::new();
        for v in votes {
            if ffg_vote_valid(v, tree) {
                links.entry(v.target.c).or_default().entry((v.source, v.target)).or_default().insert(v.sender);
            }
        }

        let mut justified = BTreeSet::from([genesis]);
        for (&c, group) in &links {
            let mut candidates = BTreeSet::new();
            for (src, tgt) in group.keys() {
                for id in tree.ancestry(&tgt.chain) {
                    candidates.insert(id);
                    if id == src.chain {
                        break;
                    }
                }
            }
            let mut newly = Vec::new();
            for chain in candidates {
                let cp = Checkpoint { chain, c, p: tree.slot(&chain).expect("candidate in tree") };
                let mut senders: BTreeSet<ValidatorId> = BTreeSet::new();
                for ((src, tgt), who) in group {
                    if justified.contains(src)
                        && tree.extends(&chain, &src.chain)
                        && tree.extends(&tgt.chain, &chain)
                    {
                        senders.extend(who);
                    }
                }
                if senders.len() >= q {
                    newly.push(cp);
                }
            }
            justified.extend(newly);
        }

        let mut finalized = BTreeSet::from([genesis]);
        for cp in &justified {
            if let Some(group) = links.get(&(cp.c + 1)) {
                let mut senders: BTreeSet<ValidatorId> = BTreeSet::new();
                for ((src, _), who) in group {
                    if src == cp {
                        senders.extend(who);
                    }
                }
                if senders.len() >= q {
                    finalized.insert(*cp);
                }
            }
        }

        let gj = greatest(&justified).unwrap_or(genesis);
        let gf = greatest(&finalized).unwrap_or(genesis);
        Lattice { justified, finalized, gj, gf }
    }
}

/// Maximum under the `(c, p)` order; ties go to the smallest chain id.
pub fn greatest<'a, I>(set: I) -> Option<Checkpoint>
where
    I: IntoIterator<Item = &'a Checkpoint>,
{
    set.into_iter().copied().max_by(|a, b| a.rank().cmp(&b.rank()).then(b.chain.cmp(&a.chain)))
}

pub fn justified_set(view: &View, n: usize) -> BTreeSet<Checkpoint> {
    view.lattice(n).justified.clone()
}

pub fn finalized_set(view: &View, n: usize) -> BTreeSet<Checkpoint> {
    view.lattice(n).finalized.clone()
}

pub fn greatest_justified(view: &View, n: usize) -> Checkpoint {
    view.lattice(n).gj
}

pub fn greatest_finalized(view: &View, n: usize) -> Checkpoint {
    view.lattice(n).gf
}

pub fn is_justified(view: &View, n: usize, c: &Checkpoint) -> bool {
    view.lattice(n).justified.contains(c)
}

pub fn is_finalized_chain(view: &View, n: usize, c: &ChainRef) -> bool {
    view.tree().extends(&view.lattice(n).gf.chain, c)
}
