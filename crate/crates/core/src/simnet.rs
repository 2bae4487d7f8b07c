//! Round-lockstep network simulator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::{Adversary, Behavior, Network, Outgoing};
use crate::chain::{BlockTree, ChainRef, Round, Slot, TxId};
use crate::forkchoice::eta_for;
use crate::messages::{Message, ValidatorId};
use crate::validator::{slot_of, voting_round, Params, Status, Validator, Variant};

/// Validator `id` is asleep during rounds `[from, to)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SleepSpan {
    pub id: ValidatorId,
    pub from: Round,
    pub to: Round,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimConfig {
    pub n: usize,
    pub variant: Variant,
    pub delta: u64,
    pub kappa: Slot,
    pub pi: u32,
    pub t_a: Option<Slot>,
    pub gst: Round,
    pub gat: Round,
    pub num_slots: u64,
    pub seed: u64,
    pub acks: bool,
    pub uniform_chainfin: bool,
    pub sender_level_mfc: bool,
    pub corrupt: BTreeMap<ValidatorId, Round>,
    pub sleep: Vec<SleepSpan>,
    pub txs: Vec<(Round, TxId)>,
    pub behavior: Behavior,
    pub network: Network,
    /// Fraction of n that window wake-ups plus corrupted validators must stay below.
    pub c4_threshold: (usize, usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("transaction {0:?} scheduled twice")]
    DuplicateTx(TxId),
    #[error("adversary forged a message from {0:?}")]
    Forgery(ValidatorId),
}

impl SimConfig {
    pub fn new(n: usize, variant: Variant, num_slots: u64, seed: u64) -> SimConfig {
        SimConfig {
            n,
            variant,
            delta: 1,
            kappa: 2,
            pi: 0,
            t_a: None,
            gst: 0,
            gat: 0,
            num_slots,
            seed,
            acks: false,
            uniform_chainfin: false,
            sender_level_mfc: false,
            corrupt: BTreeMap::new(),
            sleep: Vec::new(),
            txs: Vec::new(),
            behavior: Behavior::Passive,
            network: Network::Prompt,
            c4_threshold: (2, 3),
        }
    }

    pub fn eta(&self) -> Slot {
        eta_for(self.pi)
    }

    pub fn slot_len(&self) -> Round {
        4 * self.delta
    }

    pub fn num_rounds(&self) -> Round {
        self.num_slots * self.slot_len()
    }

    /// Asynchrony window `[start, end)` in rounds.
    pub fn window(&self) -> Option<(Round, Round)> {
        match self.t_a {
            Some(t_a) if self.pi > 0 => {
                let s = self.slot_len();
                Some((s * (t_a as u64 + 1), s * (t_a as u64 + self.pi as u64 + 1)))
            }
            _ => None,
        }
    }

    pub fn params(&self) -> Params {
        Params {
            variant: self.variant,
            n: self.n,
            delta: self.delta,
            kappa: self.kappa,
            eta: self.eta(),
            seed: self.seed,
            acks: self.acks,
            uniform_chainfin: self.uniform_chainfin,
            sender_level_mfc: self.sender_level_mfc,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.delta == 0 {
            return bad("delta must be at least 1");
        }
        if self.kappa < 2 {
            return bad("kappa must exceed 1");
        }
        if self.acks && !self.variant.has_ffg() {
            return bad("acks need a variant with the finality gadget");
        }
        if self.c4_threshold.1 == 0 {
            return bad("threshold denominator must be positive");
        }
        for id in self.corrupt.keys() {
            if id.0 as usize >= self.n {
                return bad("corrupted id out of range");
            }
        }
        for s in &self.sleep {
            if s.id.0 as usize >= self.n || s.from >= s.to {
                return bad("malformed sleep span");
            }
        }
        for g in self.network.groups() {
            if g.iter().any(|v| v.0 as usize >= self.n) {
                return bad("partition id out of range");
            }
        }
        let mut seen = BTreeSet::new();
        for (_, tx) in &self.txs {
            if !seen.insert(*tx) {
                return Err(SimError::DuplicateTx(*tx));
            }
        }
        Ok(())
    }

    /// Latest delivery round for a message sent at `send`.
    pub fn delivery_bound(&self, send: Round) -> Round {
        if let Some((start, end)) = self.window() {
            if send >= start && send < end {
                return end.max(self.gst) + self.delta;
            }
        }
        send.max(self.gst) + self.delta
    }
}

/// Proposer of `slot`, uniform over the validators and fixed by the seed.
pub fn elect_proposer(seed: u64, slot: Slot, n: usize) -> ValidatorId {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot as u64);
    ValidatorId(rng.gen_range(0..n as u32))
}

/// Delivery round of one copy of a message.
pub fn schedule_delivery(
    cfg: &SimConfig,
    send: Round,
    from: ValidatorId,
    to: ValidatorId,
    rng: &mut ChaCha8Rng,
) -> Round {
    let bound = cfg.delivery_bound(send);
    cfg.network.pick(send, bound, send < cfg.gst, from, to, rng)
}

/// Adds the transactions scheduled for round `r` to the pool.
pub fn inject_txs(pool: &mut BTreeSet<TxId>, r: Round, schedule: &[(Round, TxId)]) -> Result<(), SimError> {
    for (at, tx) in schedule {
        if *at == r && !pool.insert(*tx) {
            return Err(SimError::DuplicateTx(*tx));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SendRecord {
    pub round: Round,
    pub from: ValidatorId,
    pub msg: usize,
    pub relay: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub round: Round,
    pub to: ValidatorId,
    pub msg: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Output {
    pub ava: ChainRef,
    pub fin: ChainRef,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct RoundRecord {
    /// Honest validators active at the end of the round.
    pub honest: BTreeSet<ValidatorId>,
    pub corrupt: BTreeSet<ValidatorId>,
    pub aware: BTreeSet<ValidatorId>,
    /// Outputs of every honest validator that is awake, joining ones included.
    pub outputs: BTreeMap<ValidatorId, Output>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SlotRecord {
    pub proposer: ValidatorId,
    pub honest: bool,
    /// Block proposed by an honest proposer, if one was sent.
    pub proposal: Option<ChainRef>,
    /// Pool the honest proposer built from.
    pub pool: BTreeSet<TxId>,
}

#[derive(Clone, Debug)]
pub struct Trace {
    pub config: SimConfig,
    /// Every distinct message with the round it was first sent.
    pub messages: Vec<(Round, Message)>,
    pub sends: Vec<SendRecord>,
    pub deliveries: Vec<Delivery>,
    pub rounds: Vec<RoundRecord>,
    pub slots: Vec<SlotRecord>,
    pub tree: BlockTree,
}

impl Trace {
    /// Messages sent by validators that were honest when sending them.
    pub fn honest_sent(&self) -> impl Iterator<Item = &Message> {
        self.sends
            .iter()
            .filter(|s| !s.relay && !self.rounds.get(s.round as usize).is_some_and(|r| r.corrupt.contains(&s.from)))
            .map(|s| &self.messages[s.msg].1)
    }

    /// Every message sent up to and including round `r`.
    pub fn sent_by(&self, r: Round) -> impl Iterator<Item = &Message> {
        self.messages.iter().filter(move |(at, _)| *at <= r).map(|(_, m)| m)
    }

    pub fn output(&self, r: Round, v: ValidatorId) -> Option<&Output> {
        self.rounds.get(r as usize).and_then(|rec| rec.outputs.get(&v))
    }
}

struct Pending {
    to: ValidatorId,
    from: ValidatorId,
    msg: usize,
    tag: Option<usize>,
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    validators: Vec<Validator>,
    adversary: Adversary,
    rng: ChaCha8Rng,
    index: HashMap<[u8; 32], usize>,
    queue: BTreeMap<Round, Vec<Pending>>,
    parked: BTreeMap<ValidatorId, Vec<Pending>>,
    trace: Trace,
}

impl Sim<'_> {
    fn corrupted(&self, v: ValidatorId, r: Round) -> bool {
        self.cfg.corrupt.get(&v).is_some_and(|c| r >= *c)
    }

    fn intern(&mut self, r: Round, msg: &Message) -> usize {
        let key = msg.digest();
        if let Some(i) = self.index.get(&key) {
            return *i;
        }
        let i = self.trace.messages.len();
        self.trace.messages.push((r, msg.clone()));
        self.index.insert(key, i);
        if let Message::Block(b) = msg {
            let _ = self.trace.tree.insert(b.clone());
        }
        i
    }

    fn record_blocks(&mut self, msg: &Message) {
        match msg {
            Message::ProposeTob(p) => {
                let _ = self.trace.tree.insert(p.block.clone());
            }
            Message::ProposeRlmd(p) => {
                let _ = self.trace.tree.insert(p.block.clone());
            }
            Message::Block(b) => {
                let _ = self.trace.tree.insert(b.clone());
            }
            _ => {}
        }
    }

    fn send(&mut self, r: Round, from: ValidatorId, msg: &Message, relay: bool, group: Option<usize>) {
        let idx = self.intern(r, msg);
        self.record_blocks(msg);
        self.trace.sends.push(SendRecord { round: r, from, msg: idx, relay });
        let targets: Vec<ValidatorId> = match group {
            Some(g) => self.cfg.network.groups()[g].iter().copied().collect(),
            None => (0..self.cfg.n as u32).map(ValidatorId).collect(),
        };
        for to in targets {
            if to == from {
                continue;
            }
            let at = schedule_delivery(self.cfg, r, from, to, &mut self.rng);
            self.queue.entry(at).or_default().push(Pending { to, from, msg: idx, tag: group });
        }
    }

    fn relay_allowed(&self, r: Round, msg: &Message) -> bool {
        match msg.proposal_slot() {
            Some(s) => {
                let start = self.cfg.slot_len() * s.max(0) as u64;
                s >= 0 && r >= start && r <= start + self.cfg.delta
            }
            None => true,
        }
    }

    fn step(&mut self, r: Round, pool: &BTreeSet<TxId>) -> Result<(), SimError> {
        let n = self.cfg.n;
        // Corruption and sleep transitions.
        for i in 0..n {
            let id = ValidatorId(i as u32);
            if self.cfg.corrupt.get(&id) == Some(&r) {
                self.adversary.corrupt(self.validators[i].clone());
            }
        }
        for s in &self.cfg.sleep {
            if self.corrupted(s.id, r) {
                continue;
            }
            let v = &mut self.validators[s.id.0 as usize];
            if s.from == r {
                v.sleep();
            }
            if s.to == r {
                v.wake(r);
            }
        }

        // Deliveries due now, plus anything parked while the recipient slept.
        let mut inbox: BTreeMap<ValidatorId, Vec<Pending>> = BTreeMap::new();
        for p in self.queue.remove(&r).unwrap_or_default() {
            inbox.entry(p.to).or_default().push(p);
        }
        let mut relays: Vec<(ValidatorId, Message, bool, Option<usize>)> = Vec::new();
        for i in 0..n {
            let id = ValidatorId(i as u32);
            let mut items = inbox.remove(&id).unwrap_or_default();
            if self.corrupted(id, r) {
                for p in items {
                    self.trace.deliveries.push(Delivery { round: r, to: id, msg: p.msg });
                    let msg = self.trace.messages[p.msg].1.clone();
                    for o in self.adversary.deliver(r, id, p.from, p.tag, &msg) {
                        relays.push((o.from, o.msg, true, None));
                    }
                }
                continue;
            }
            if self.validators[i].status == Status::Asleep {
                self.parked.entry(id).or_default().extend(items);
                continue;
            }
            let mut queued = self.parked.remove(&id).unwrap_or_default();
            queued.append(&mut items);
            for p in queued {
                self.trace.deliveries.push(Delivery { round: r, to: id, msg: p.msg });
                let msg = self.trace.messages[p.msg].1.clone();
                let ins = self.validators[i].receive(r, msg);
                for m in ins.fresh {
                    relays.push((id, m, true, None));
                }
            }
        }
        for (from, msg, relay, group) in relays {
            if self.relay_allowed(r, &msg) {
                self.send(r, from, &msg, relay, group);
            }
        }

        // Phase hooks.
        let t = slot_of(r, self.cfg.delta);
        for i in 0..n {
            let id = ValidatorId(i as u32);
            if self.corrupted(id, r) || self.validators[i].status == Status::Asleep {
                continue;
            }
            let out = self.validators[i].on_round(r, pool);
            for m in out {
                if m.proposal_slot().is_some() {
                    if let Some(rec) = self.trace.slots.get_mut(t as usize) {
                        rec.proposal = Some(match &m {
                            Message::ProposeTob(p) => p.block.id,
                            Message::ProposeRlmd(p) => p.block.id,
                            _ => unreachable!(),
                        });
                    }
                }
                self.send(r, id, &m, false, None);
            }
        }
        for Outgoing { from, msg, relay, group } in self.adversary.act(r, pool) {
            if !self.corrupted(from, r) {
                return Err(SimError::Forgery(from));
            }
            if !relay && msg.author().is_some_and(|a| a != from) {
                return Err(SimError::Forgery(msg.author().unwrap()));
            }
            self.send(r, from, &msg, relay, group);
        }

        // Bookkeeping.
        let mut rec = RoundRecord::default();
        for (i, v) in self.validators.iter().enumerate() {
            let id = ValidatorId(i as u32);
            if self.corrupted(id, r) {
                rec.corrupt.insert(id);
                continue;
            }
            if v.is_active() {
                rec.honest.insert(id);
            }
            if v.status != Status::Asleep {
                rec.outputs.insert(id, Output { ava: v.available(), fin: v.finalized() });
            }
        }
        self.trace.rounds.push(rec);
        Ok(())
    }
}

/// Runs a full simulation. Identical configurations give identical traces.
pub fn run(cfg: &SimConfig) -> Result<Trace, SimError> {
    cfg.validate()?;
    let params = Arc::new(cfg.params());
    let mut validators: Vec<Validator> =
        (0..cfg.n as u32).map(|i| Validator::new(ValidatorId(i), params.clone())).collect();
    for s in &cfg.sleep {
        if s.from == 0 {
            validators[s.id.0 as usize].status = Status::Asleep;
        }
    }
    let slots = (0..cfg.num_slots as Slot)
        .map(|t| {
            let proposer = elect_proposer(cfg.seed, t, cfg.n);
            let at = cfg.slot_len() * t as u64;
            let honest = !cfg.corrupt.get(&proposer).is_some_and(|c| at >= *c);
            SlotRecord { proposer, honest, proposal: None, pool: BTreeSet::new() }
        })
        .collect();
    let mut sim = Sim {
        cfg,
        validators,
        adversary: Adversary::new(cfg.behavior.clone(), &cfg.network, cfg.delta),
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6e65_7477_6f72_6b00),
        index: HashMap::new(),
        queue: BTreeMap::new(),
        parked: BTreeMap::new(),
        trace: Trace {
            config: cfg.clone(),
            messages: Vec::new(),
            sends: Vec::new(),
            deliveries: Vec::new(),
            rounds: Vec::new(),
            slots,
            tree: BlockTree::new(),
        },
    };
    let mut pool = BTreeSet::new();
    for r in 0..cfg.num_rounds() {
        inject_txs(&mut pool, r, &cfg.txs)?;
        if r % cfg.slot_len() == 0 {
            let t = slot_of(r, cfg.delta) as usize;
            sim.trace.slots[t].pool = pool.clone();
        }
        sim.step(r, &pool)?;
    }
    let mut trace = sim.trace;
    fill_aware(&mut trace);
    Ok(trace)
}

fn fill_aware(trace: &mut Trace) {
    let cfg = &trace.config;
    let pinned = match (cfg.t_a, cfg.pi) {
        (Some(t_a), pi) if pi > 0 => {
            let v = voting_round(t_a, cfg.delta) as usize;
            let set = trace.rounds.get(v).map(|r| r.honest.clone()).unwrap_or_default();
            Some((t_a, t_a + pi as Slot + 1, set))
        }
        _ => None,
    };
    let delta = cfg.delta;
    for (r, rec) in trace.rounds.iter_mut().enumerate() {
        let t = slot_of(r as Round, delta);
        rec.aware = match &pinned {
            Some((lo, hi, set)) if t >= *lo && t <= *hi => rec.honest.intersection(set).copied().collect(),
            _ => rec.honest.clone(),
        };
    }
}
