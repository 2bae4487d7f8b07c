//! Slashable offences over FFG votes and acknowledgments.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::chain::{ChainError, ChainRef};
use crate::ffg::greatest_finalized;
use crate::messages::{checkpoint_lt, AckMsg, FfgVote, ValidatorId, View};

/// A pair of signed statements that together prove a violation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Evidence {
    /// Two distinct votes with the same target slot.
    Double(FfgVote, FfgVote),
    /// `inner` is surrounded by `outer`: outer.source < inner.source and inner.target.c < outer.target.c.
    Surround { inner: FfgVote, outer: FfgVote },
    /// A vote whose span strictly contains an acknowledged checkpoint.
    AckSurround { vote: FfgVote, ack: AckMsg },
}

impl Evidence {
    pub fn sender(&self) -> ValidatorId {
        match self {
            Evidence::Double(a, _) => a.sender,
            Evidence::Surround { inner, .. } => inner.sender,
            Evidence::AckSurround { vote, .. } => vote.sender,
        }
    }

    /// Re-checks the predicate on just this pair.
    pub fn holds(&self) -> bool {
        match self {
            Evidence::Double(a, b) => a.sender == b.sender && double(a, b),
            Evidence::Surround { inner, outer } => inner.sender == outer.sender && surrounds(outer, inner),
            Evidence::AckSurround { vote, ack } => vote.sender == ack.sender && ack_inside(vote, ack),
        }
    }
}

pub type Flagged = BTreeMap<ValidatorId, Evidence>;

fn double(a: &FfgVote, b: &FfgVote) -> bool {
    a != b && a.target.c == b.target.c
}

fn surrounds(outer: &FfgVote, inner: &FfgVote) -> bool {
    checkpoint_lt(&outer.source, &inner.source) && inner.target.c < outer.target.c
}

fn ack_inside(vote: &FfgVote, ack: &AckMsg) -> bool {
    checkpoint_lt(&vote.source, &ack.checkpoint) && ack.checkpoint.c < vote.target.c
}

fn by_sender<'a, I>(votes: I) -> BTreeMap<ValidatorId, Vec<FfgVote>>
where
    I: IntoIterator<Item = &'a FfgVote>,
{
    let mut out: BTreeMap<ValidatorId, BTreeSet<FfgVote>> = BTreeMap::new();
    for v in votes {
        out.entry(v.sender).or_default().insert(*v);
    }
    out.into_iter().map(|(k, s)| (k, s.into_iter().collect())).collect()
}

pub fn detect_e1<'a, I>(votes: I) -> Flagged
where
    I: IntoIterator<Item = &'a FfgVote>,
{
    let mut out = Flagged::new();
    for (sender, vs) in by_sender(votes) {
        'scan: for (i, a) in vs.iter().enumerate() {
            for b in &vs[i + 1..] {
                if double(a, b) {
                    out.insert(sender, Evidence::Double(*a, *b));
                    break 'scan;
                }
            }
        }
    }
    out
}

pub fn detect_e2<'a, I>(votes: I) -> Flagged
where
    I: IntoIterator<Item = &'a FfgVote>,
{
    let mut out = Flagged::new();
    for (sender, vs) in by_sender(votes) {
        'scan: for inner in &vs {
            for outer in &vs {
                if surrounds(outer, inner) {
                    out.insert(sender, Evidence::Surround { inner: *inner, outer: *outer });
                    break 'scan;
                }
            }
        }
    }
    out
}

pub fn detect_e3<'a, I, J>(votes: I, acks: J) -> Flagged
where
    I: IntoIterator<Item = &'a FfgVote>,
    J: IntoIterator<Item = &'a AckMsg>,
{
    let mut acks_by: BTreeMap<ValidatorId, Vec<AckMsg>> = BTreeMap::new();
    for a in acks {
        acks_by.entry(a.sender).or_default().push(*a);
    }
    let mut out = Flagged::new();
    for (sender, vs) in by_sender(votes) {
        let Some(acks) = acks_by.get(&sender) else { continue };
        'scan: for v in &vs {
            for a in acks {
                if ack_inside(v, a) {
                    out.insert(sender, Evidence::AckSurround { vote: *v, ack: *a });
                    break 'scan;
                }
            }
        }
    }
    out
}

/// Every sender caught by any of the three detectors, with the first evidence found.
pub fn detect_all<'a, I, J>(votes: I, acks: J) -> Flagged
where
    I: IntoIterator<Item = &'a FfgVote> + Clone,
    J: IntoIterator<Item = &'a AckMsg>,
{
    let mut out = detect_e1(votes.clone());
    for (k, e) in detect_e2(votes.clone()) {
        out.entry(k).or_insert(e);
    }
    for (k, e) in detect_e3(votes, acks) {
        out.entry(k).or_insert(e);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccountError {
    #[error("finalized chains do not conflict")]
    NoConflict,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Violators given two chains known to be finalized; `all` must hold every vote and block.
pub fn accountable_for(all: &View, a: &ChainRef, b: &ChainRef) -> Result<Flagged, AccountError> {
    if !all.tree().conflicts(a, b)? {
        return Err(AccountError::NoConflict);
    }
    Ok(detect_all(all.ffg_votes().collect::<Vec<_>>(), all.acks()))
}

/// Violators behind the conflicting finalized chains of `view1` and `view2`.
pub fn accountable_set(all: &View, view1: &View, view2: &View, n: usize) -> Result<Flagged, AccountError> {
    let a = greatest_finalized(view1, n).chain;
    let b = greatest_finalized(view2, n).chain;
    accountable_for(all, &a, &b)
}
