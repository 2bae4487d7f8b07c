//! Validator state machines for the four protocol variants, driven once per round.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::chain::{BlockTree, ChainRef, Round, Slot, TxId};
use crate::ffg::{greatest_finalized, greatest_justified};
use crate::forkchoice::{fast_confirm_gj, fast_confirm_simple, mfc, rlmd_ghost};
use crate::messages::{
    checkpoint_leq, quorum, quorum_cert_valid, AckMsg, Checkpoint, FfgVote, Inserted, Message, ProposeRlmd,
    ProposeTob, ValidatorId, View, VoteMsg,
};
use crate::simnet::elect_proposer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Variant {
    /// Probabilistic total-order broadcast with fast confirmation.
    TobProb,
    /// The TOB-based protocol with the FFG gadget.
    Tob3sf,
    /// RLMD-GHOST with fast confirmation.
    Rlmd,
    /// The RLMD-based protocol with the FFG gadget.
    Rlmd3sf,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::TobProb, Variant::Tob3sf, Variant::Rlmd, Variant::Rlmd3sf];

    pub fn has_ffg(self) -> bool {
        matches!(self, Variant::Tob3sf | Variant::Rlmd3sf)
    }

    pub fn is_tob(self) -> bool {
        matches!(self, Variant::TobProb | Variant::Tob3sf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::TobProb => "tob",
            Variant::Tob3sf => "tob3sf",
            Variant::Rlmd => "rlmd",
            Variant::Rlmd3sf => "rlmd3sf",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| format!("unknown variant `{s}`"))
    }
}

/// Protocol parameters shared by every validator of a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Params {
    pub variant: Variant,
    pub n: usize,
    pub delta: u64,
    pub kappa: Slot,
    pub eta: Slot,
    pub seed: u64,
    pub acks: bool,
    pub uniform_chainfin: bool,
    pub sender_level_mfc: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Propose,
    Vote,
    FastConfirm,
    Merge,
    Other,
}

pub fn slot_of(r: Round, delta: u64) -> Slot {
    (r / (4 * delta)) as Slot
}

pub fn phase_of(r: Round, delta: u64) -> Phase {
    let off = r % (4 * delta);
    match off / delta {
        _ if !off.is_multiple_of(delta) => Phase::Other,
        0 => Phase::Propose,
        1 => Phase::Vote,
        2 => Phase::FastConfirm,
        _ => Phase::Merge,
    }
}

pub fn voting_round(t: Slot, delta: u64) -> Round {
    4 * delta * t as u64 + delta
}

/// First voting round at which a validator that woke at `r` may take part.
pub fn activation_round(r: Round, delta: u64) -> Round {
    let slot_len = 4 * delta as i64;
    let shifted = r as i64 - 2 * delta as i64;
    let t = -((-shifted).div_euclid(slot_len)) + 1;
    voting_round(t, delta)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Asleep,
    Joining { activation: Round },
    Active,
}

#[derive(Clone, Debug)]
pub struct Validator {
    pub id: ValidatorId,
    pub params: Arc<Params>,
    pub view: View,
    pub v_frozen: View,
    pub chain_frozen: ChainRef,
    pub gj_frozen: Checkpoint,
    pub chain_out: ChainRef,
    pub chainava: ChainRef,
    pub chainfin: ChainRef,
    pub status: Status,
    buffered: Vec<Arc<ProposeTob>>,
    vote_targets: BTreeMap<Slot, BTreeSet<ChainRef>>,
}

impl Validator {
    pub fn new(id: ValidatorId, params: Arc<Params>) -> Validator {
        let view = View::new();
        let g = view.tree().genesis();
        let gj = Checkpoint::genesis(view.tree());
        Validator {
            id,
            params,
            v_frozen: view.clone(),
            view,
            chain_frozen: g,
            gj_frozen: gj,
            chain_out: g,
            chainava: g,
            chainfin: g,
            status: Status::Active,
            buffered: Vec::new(),
            vote_targets: BTreeMap::new(),
        }
    }

    /// Available chain: `chainava` for the gadget variants, the confirmed chain otherwise.
    pub fn available(&self) -> ChainRef {
        if self.params.variant.has_ffg() {
            self.chainava
        } else {
            self.chain_out
        }
    }

    /// Finalized chain; genesis for variants without a gadget.
    pub fn finalized(&self) -> ChainRef {
        self.chainfin
    }

    pub fn sleep(&mut self) {
        self.status = Status::Asleep;
    }

    pub fn wake(&mut self, r: Round) {
        if self.status == Status::Asleep {
            self.status = Status::Joining { activation: activation_round(r, self.params.delta) };
        }
    }

    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    fn tree(&self) -> &BlockTree {
        self.view.tree()
    }

    /// Adds a delivered message to the view and reacts to proposals that arrive in their window.
    pub fn receive(&mut self, r: Round, msg: Message) -> Inserted {
        let ins = self.view.insert(msg);
        for p in &ins.proposals {
            self.on_proposal(r, p);
        }
        ins
    }

    fn in_window(&self, r: Round, slot: Slot) -> bool {
        slot >= 0 && {
            let start = 4 * self.params.delta * slot as u64;
            r >= start && r <= start + self.params.delta
        }
    }

    fn proposal_valid(&self, p: &Message) -> bool {
        let prm = &self.params;
        let (slot, sender, block) = match p {
            Message::ProposeTob(p) => (p.slot, p.sender, &p.block),
            Message::ProposeRlmd(p) => (p.slot, p.sender, &p.block),
            _ => return false,
        };
        if sender != elect_proposer(prm.seed, slot, prm.n) || block.slot != slot {
            return false;
        }
        match (prm.variant, p) {
            (Variant::TobProb, Message::ProposeTob(p)) => {
                quorum_cert_valid(&p.cert, &p.fast_chain, slot - 1, prm.n, self.tree(), &self.tree().genesis())
            }
            (Variant::Tob3sf, Message::ProposeTob(p)) => match p.gj {
                Some(gj) => quorum_cert_valid(&p.cert, &p.fast_chain, slot - 1, prm.n, self.tree(), &gj.chain),
                None => false,
            },
            (Variant::Rlmd | Variant::Rlmd3sf, Message::ProposeRlmd(_)) => true,
            _ => false,
        }
    }

    fn on_proposal(&mut self, r: Round, p: &Message) {
        let Some(slot) = p.proposal_slot() else { return };
        if !self.in_window(r, slot) || !self.proposal_valid(p) {
            return;
        }
        let chain_p = match p {
            Message::ProposeTob(x) => x.chain_p(),
            Message::ProposeRlmd(x) => x.chain_p(),
            _ => return,
        };
        self.vote_targets.entry(slot).or_default().insert(chain_p);
        match (self.params.variant, p) {
            (Variant::TobProb, Message::ProposeTob(x)) => {
                if self.tree().extends(&x.fast_chain, &self.chain_frozen) {
                    self.chain_frozen = x.fast_chain;
                }
            }
            (Variant::Tob3sf, Message::ProposeTob(x)) => self.buffered.push(x.clone()),
            (_, Message::ProposeRlmd(x)) => {
                self.v_frozen.merge(&x.view);
                self.v_frozen.insert(Message::Block(x.block.clone()));
            }
            _ => {}
        }
    }

    /// Deferred handling of buffered proposals at the voting round.
    fn settle_buffered(&mut self) {
        let n = self.params.n;
        let mut props = std::mem::take(&mut self.buffered);
        props.sort();
        for p in props {
            let Some(gj_p) = p.gj else { continue };
            let justified = self.view.lattice(n).justified.contains(&gj_p);
            if !justified || !checkpoint_leq(&self.gj_frozen, &gj_p) {
                continue;
            }
            self.gj_frozen = gj_p;
            if !self.tree().extends(&self.chain_frozen, &gj_p.chain) {
                self.chain_frozen = gj_p.chain;
            }
            if self.tree().extends(&p.fast_chain, &self.chain_frozen) {
                self.chain_frozen = p.fast_chain;
            }
        }
    }

    /// Advances status and runs the phase hook for round `r`. Returns the messages to
    /// broadcast; they are already part of this validator's view.
    pub fn on_round(&mut self, r: Round, pool: &BTreeSet<TxId>) -> Vec<Message> {
        match self.status {
            Status::Asleep => return Vec::new(),
            Status::Joining { activation } if r >= activation => self.status = Status::Active,
            _ => {}
        }
        let delta = self.params.delta;
        let t = slot_of(r, delta);
        let out = match phase_of(r, delta) {
            Phase::Propose => {
                if self.is_active() && elect_proposer(self.params.seed, t, self.params.n) == self.id {
                    self.propose(t, pool).into_iter().collect()
                } else {
                    Vec::new()
                }
            }
            Phase::Vote => vec![Message::Vote(self.vote(t))],
            Phase::FastConfirm => self.fast_confirm(t).map(Message::Ack).into_iter().collect(),
            Phase::Merge => {
                self.merge(t);
                Vec::new()
            }
            Phase::Other => Vec::new(),
        };
        if !self.is_active() {
            return Vec::new();
        }
        for m in &out {
            self.receive(r, m.clone());
        }
        out
    }

    fn propose(&mut self, t: Slot, pool: &BTreeSet<TxId>) -> Option<Message> {
        let prm = self.params.clone();
        let v = &self.view;
        let g = v.tree().genesis();
        let (can, fast) = match prm.variant {
            Variant::TobProb | Variant::Tob3sf => {
                let (fc, cert) =
                    if prm.variant == Variant::TobProb { fast_confirm_simple(v, t - 1, prm.n) } else { fast_confirm_gj(v, t - 1, prm.n) };
                let can = mfc(v, v, &fc, t, prm.eta, prm.sender_level_mfc).unwrap_or(fc);
                (can, Some((fc, cert)))
            }
            Variant::Rlmd | Variant::Rlmd3sf => {
                let root = if prm.variant == Variant::Rlmd { g } else { greatest_justified(v, prm.n).chain };
                let head = rlmd_ghost(v, &root, t, prm.eta).unwrap_or(root);
                (v.tree().kappa_deep_prefix(&head, 1, t).unwrap_or(root), None)
            }
        };
        let block = match v.tree().extend(&can, t, pool) {
            Ok(b) => Arc::new(b),
            Err(e) => {
                log::warn!("{:?} cannot propose at slot {t}: {e}", self.id);
                return None;
            }
        };
        Some(match fast {
            Some((fast_chain, cert)) => Message::ProposeTob(Arc::new(ProposeTob {
                block,
                fast_chain,
                cert,
                gj: prm.variant.has_ffg().then(|| greatest_justified(v, prm.n)),
                slot: t,
                sender: self.id,
            })),
            None => {
                let mut carried = v.clone();
                carried.insert(Message::Block(block.clone()));
                Message::ProposeRlmd(Arc::new(ProposeRlmd::new(block, carried, t, self.id)))
            }
        })
    }

    /// Longest chain among `cands` that is a prefix of `of`.
    fn max_prefix(&self, cands: &[ChainRef], of: &ChainRef) -> ChainRef {
        let tree = self.tree();
        let ok: Vec<ChainRef> = cands.iter().copied().filter(|c| tree.extends(of, c)).collect();
        tree.max_chain(&ok).unwrap_or_else(|| tree.genesis())
    }

    fn kappa(&self, c: &ChainRef, t: Slot) -> ChainRef {
        self.tree().kappa_deep_prefix(c, self.params.kappa, t).unwrap_or_else(|_| self.tree().genesis())
    }

    fn update_fin(&mut self) {
        let gf = greatest_finalized(&self.view, self.params.n).chain;
        self.chainfin = self.tree().common_prefix(&self.chainava, &gf).unwrap_or_else(|_| self.tree().genesis());
    }

    fn proposal_vote_chain(&self, t: Slot, can: &ChainRef) -> ChainRef {
        let tree = self.tree();
        self.vote_targets
            .get(&t)
            .and_then(|set| set.iter().find(|c| tree.extends(c, can) && tree.slot(c) == Ok(t)).copied())
            .unwrap_or(*can)
    }

    fn vote(&mut self, t: Slot) -> VoteMsg {
        let prm = self.params.clone();
        let g = self.tree().genesis();
        if prm.variant == Variant::Tob3sf {
            self.settle_buffered();
        }
        let (chain, ffg) = match prm.variant {
            Variant::TobProb | Variant::Rlmd => {
                let can = if prm.variant == Variant::TobProb {
                    mfc(&self.v_frozen, &self.view, &self.chain_frozen, t, prm.eta, prm.sender_level_mfc)
                        .unwrap_or(self.chain_frozen)
                } else {
                    rlmd_ghost(&self.v_frozen, &g, t, prm.eta).unwrap_or(g)
                };
                let deep = self.kappa(&can, t);
                self.chain_out = self.max_prefix(&[self.chain_out, deep], &can);
                let chain = if prm.variant == Variant::TobProb { self.proposal_vote_chain(t, &can) } else { can };
                (chain, None)
            }
            Variant::Tob3sf | Variant::Rlmd3sf => {
                let (can, source) = if prm.variant == Variant::Tob3sf {
                    let can = mfc(&self.v_frozen, &self.view, &self.chain_frozen, t, prm.eta, prm.sender_level_mfc)
                        .unwrap_or(self.chain_frozen);
                    (can, self.gj_frozen)
                } else {
                    let gj = greatest_justified(&self.v_frozen, prm.n);
                    (rlmd_ghost(&self.v_frozen, &gj.chain, t, prm.eta).unwrap_or(gj.chain), gj)
                };
                let deep = self.kappa(&can, t);
                self.chainava = self.max_prefix(&[self.chainava, deep, source.chain], &can);
                self.update_fin();
                let tree = self.tree();
                let tip = tree.kappa_deep_prefix(&self.chainava, 0, t).unwrap_or(g);
                let target = Checkpoint::new(tree, tip, t).expect("tip slot at most t");
                let ffg = FfgVote { source, target, sender: self.id };
                let chain = if prm.variant == Variant::Tob3sf { self.proposal_vote_chain(t, &can) } else { can };
                (chain, Some(ffg))
            }
        };
        VoteMsg { chain, ffg, slot: t, sender: self.id }
    }

    fn fast_confirm(&mut self, t: Slot) -> Option<AckMsg> {
        let prm = self.params.clone();
        match prm.variant {
            Variant::TobProb | Variant::Rlmd => {
                let (fc, cert) = fast_confirm_simple(&self.view, t, prm.n);
                if !cert.is_empty() {
                    self.chain_out = fc;
                }
                None
            }
            Variant::Tob3sf | Variant::Rlmd3sf => {
                let (fc, _) = fast_confirm_gj(&self.view, t, prm.n);
                if !self.tree().extends(&self.chainava, &fc) {
                    self.chainava = fc;
                }
                if prm.variant == Variant::Tob3sf && !prm.uniform_chainfin {
                    self.chainfin = greatest_finalized(&self.view, prm.n).chain;
                } else {
                    self.update_fin();
                }
                let gj = greatest_justified(&self.view, prm.n);
                (prm.acks && gj.c == t).then_some(AckMsg { checkpoint: gj, slot: t, sender: self.id })
            }
        }
    }

    fn merge(&mut self, t: Slot) {
        let prm = self.params.clone();
        self.v_frozen = self.view.clone();
        match prm.variant {
            Variant::TobProb => self.chain_frozen = fast_confirm_simple(&self.view, t, prm.n).0,
            Variant::Tob3sf => {
                self.chain_frozen = fast_confirm_gj(&self.view, t, prm.n).0;
                self.gj_frozen = greatest_justified(&self.view, prm.n);
            }
            Variant::Rlmd | Variant::Rlmd3sf => {}
        }
        self.vote_targets.retain(|s, _| *s > t);
    }
}

/// Justified checkpoints acknowledged by a supermajority.
pub fn observer_finalize<'a, I>(acks: I, view: &View, n: usize) -> BTreeSet<Checkpoint>
where
    I: IntoIterator<Item = &'a AckMsg>,
{
    let mut by: BTreeMap<Checkpoint, BTreeSet<ValidatorId>> = BTreeMap::new();
    for a in acks {
        by.entry(a.checkpoint).or_default().insert(a.sender);
    }
    let lattice = view.lattice(n);
    by.into_iter()
        .filter(|(c, who)| who.len() >= quorum(n) && lattice.justified.contains(c))
        .map(|(c, _)| c)
        .collect()
}
