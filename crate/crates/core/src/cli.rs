//! Scenario files, trace and report emission, and the batch commands behind the binary.
//!
//! A scenario is a list of `key = value` lines. `#` starts a comment. Keys:
//!
//! | key | value | default |
//! |-----|-------|---------|
//! | `n` | validator count | required |
//! | `variant` | `tob`, `tob3sf`, `rlmd`, `rlmd3sf` | required |
//! | `slots` | run length in slots | 20 |
//! | `seed` | u64 | 0 |
//! | `delta`, `kappa`, `pi` | integers | 1, 2, 0 |
//! | `t_a` | slot or `none` | none |
//! | `gst`, `gat` | rounds | 0 |
//! | `acks`, `uniform_chainfin`, `sender_level_mfc` | `true` or `false` | false |
//! | `behavior` | `passive`, `silent`, `equivocator`, `double_ffg`, `ffg_withholder:H` | passive |
//! | `network` | `prompt`, `max_delay`, `random`, `partition:0,1/2,3` | prompt |
//! | `c4_threshold` | `num/den` | 2/3 |
//! | `corrupt` | `id@round,...` | empty |
//! | `sleep` | `id:from-to,...` (asleep in `[from, to)`) | empty |
//! | `txs` | `round:tx,...` | empty |
//! | `eta` | derived, must equal 1 when `pi = 0` and `pi + 2` otherwise | derived |
//!
//! Every key may appear once.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::adversary::{compliant, compliant_sleep, MembershipRecord};
use crate::chain::{ChainRef, Round, TxId};
use crate::messages::{Checkpoint, FfgVote, Message, ValidatorId};
use crate::oracle::{ffg_fixture_agrees, fork_fixture_agrees, random_ffg_fixture, random_fork_fixture};
use crate::properties::{latency_metrics, run_all, LatencyReport, Verdict};
use crate::simnet::{run, SimConfig, SimError, SleepSpan, Trace};
use crate::validator::Variant;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
}

fn parse_list<T, F>(value: &str, item: F) -> Result<Vec<T>, String>
where
    F: Fn(&str) -> Result<T, String>,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(item).collect()
}

fn num<T: std::str::FromStr>(s: &str) -> Result<T, String> {
    s.trim().parse().map_err(|_| format!("expected a number, got `{s}`"))
}

fn boolean(s: &str) -> Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

fn pair(s: &str, sep: char) -> Result<(&str, &str), String> {
    s.split_once(sep).ok_or_else(|| format!("expected `{sep}` in `{s}`"))
}

const KEYS: [&str; 20] = [
    "n", "variant", "slots", "seed", "delta", "kappa", "pi", "t_a", "gst", "gat", "acks", "uniform_chainfin",
    "sender_level_mfc", "behavior", "network", "c4_threshold", "corrupt", "sleep", "txs", "eta",
];

pub fn parse_scenario(text: &str) -> Result<SimConfig, ScenarioError> {
    let mut seen: BTreeMap<String, (usize, usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("");
        if body.trim().is_empty() {
            continue;
        }
        let key_col = body.len() - body.trim_start().len() + 1;
        let Some((k, v)) = body.split_once('=') else {
            return Err(ScenarioError::Parse { line, col: key_col, msg: "expected `key = value`".into() });
        };
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(ScenarioError::Parse { line, col: key_col, msg: format!("unknown key `{key}`") });
        }
        let after_eq = k.len() + 1;
        let value_col = after_eq + (v.len() - v.trim_start().len()) + 1;
        if seen.insert(key.to_string(), (line, value_col, v.trim().to_string())).is_some() {
            return Err(ScenarioError::Parse { line, col: key_col, msg: format!("duplicate key `{key}`") });
        }
    }

    let err = |key: &str, msg: String| {
        let (line, col, _) = seen[key];
        ScenarioError::Parse { line, col, msg }
    };
    let field = |key: &str| seen.get(key).map(|(_, _, v)| v.as_str());

    let Some(n) = field("n") else {
        return Err(ScenarioError::Parse { line: 1, col: 1, msg: "missing key `n`".into() });
    };
    let n: usize = num(n).map_err(|m| err("n", m))?;
    let Some(variant) = field("variant") else {
        return Err(ScenarioError::Parse { line: 1, col: 1, msg: "missing key `variant`".into() });
    };
    let variant: Variant = variant.parse().map_err(|m| err("variant", m))?;
    let mut cfg = SimConfig::new(n, variant, 20, 0);

    macro_rules! set {
        ($key:literal, $target:expr, $conv:expr) => {
            if let Some(v) = field($key) {
                $target = $conv(v).map_err(|m: String| err($key, m))?;
            }
        };
    }
    set!("slots", cfg.num_slots, num);
    set!("seed", cfg.seed, num);
    set!("delta", cfg.delta, num);
    set!("kappa", cfg.kappa, num);
    set!("pi", cfg.pi, num);
    set!("t_a", cfg.t_a, |v: &str| if v == "none" { Ok(None) } else { num(v).map(Some) });
    set!("gst", cfg.gst, num);
    set!("gat", cfg.gat, num);
    set!("acks", cfg.acks, boolean);
    set!("uniform_chainfin", cfg.uniform_chainfin, boolean);
    set!("sender_level_mfc", cfg.sender_level_mfc, boolean);
    set!("behavior", cfg.behavior, |v: &str| v.parse());
    set!("network", cfg.network, |v: &str| v.parse());
    set!("c4_threshold", cfg.c4_threshold, |v: &str| {
        let (a, b) = pair(v, '/')?;
        Ok::<_, String>((num(a)?, num(b)?))
    });
    set!("corrupt", cfg.corrupt, |v: &str| {
        parse_list(v, |s| {
            let (id, r) = pair(s, '@')?;
            Ok((ValidatorId(num(id)?), num::<Round>(r)?))
        })
        .map(|l| l.into_iter().collect())
    });
    set!("sleep", cfg.sleep, |v: &str| parse_list(v, |s| {
        let (id, span) = pair(s, ':')?;
        let (from, to) = pair(span, '-')?;
        Ok(SleepSpan { id: ValidatorId(num(id)?), from: num(from)?, to: num(to)? })
    }));
    set!("txs", cfg.txs, |v: &str| parse_list(v, |s| {
        let (r, tx) = pair(s, ':')?;
        Ok((num(r)?, TxId(num(tx)?)))
    }));

    if cfg.kappa <= 1 {
        return Err(ScenarioError::Constraint(format!("kappa must exceed 1, got {}", cfg.kappa)));
    }
    if let Some(v) = field("eta") {
        let eta: i64 = num(v).map_err(|m| err("eta", m))?;
        if eta != cfg.eta() {
            return Err(ScenarioError::Constraint(format!("eta is derived from pi as {}, got {eta}", cfg.eta())));
        }
    }
    cfg.validate().map_err(|e| ScenarioError::Constraint(e.to_string()))?;
    Ok(cfg)
}

/// Canonical scenario text; `parse_scenario` reads it back to an equal config.
pub fn serialize_scenario(cfg: &SimConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("n", cfg.n.to_string());
    kv("variant", cfg.variant.to_string());
    kv("slots", cfg.num_slots.to_string());
    kv("seed", cfg.seed.to_string());
    kv("delta", cfg.delta.to_string());
    kv("kappa", cfg.kappa.to_string());
    kv("pi", cfg.pi.to_string());
    kv("eta", cfg.eta().to_string());
    kv("t_a", cfg.t_a.map_or("none".to_string(), |t| t.to_string()));
    kv("gst", cfg.gst.to_string());
    kv("gat", cfg.gat.to_string());
    kv("acks", cfg.acks.to_string());
    kv("uniform_chainfin", cfg.uniform_chainfin.to_string());
    kv("sender_level_mfc", cfg.sender_level_mfc.to_string());
    kv("behavior", cfg.behavior.to_string());
    kv("network", cfg.network.to_string());
    kv("c4_threshold", format!("{}/{}", cfg.c4_threshold.0, cfg.c4_threshold.1));
    kv("corrupt", cfg.corrupt.iter().map(|(v, r)| format!("{}@{r}", v.0)).collect::<Vec<_>>().join(","));
    kv("sleep", cfg.sleep.iter().map(|s| format!("{}:{}-{}", s.id.0, s.from, s.to)).collect::<Vec<_>>().join(","));
    kv("txs", cfg.txs.iter().map(|(r, t)| format!("{r}:{}", t.0)).collect::<Vec<_>>().join(","));
    out
}

fn ids<'a, I: IntoIterator<Item = &'a ValidatorId>>(set: I) -> String {
    set.into_iter().map(|v| v.0.to_string()).collect::<Vec<_>>().join(",")
}

fn chain(c: &ChainRef) -> String {
    c.to_hex()
}

fn checkpoint(c: &Checkpoint) -> String {
    format!("{}:{}:{}", chain(&c.chain), c.c, c.p)
}

fn ffg(v: &Option<FfgVote>) -> String {
    match v {
        Some(f) => format!("{}>{}", checkpoint(&f.source), checkpoint(&f.target)),
        None => "-".into(),
    }
}

fn message_fields(m: &Message) -> String {
    match m {
        Message::Block(b) => format!(
            "{}|{}|{}|{}",
            chain(&b.id),
            b.parent.as_ref().map_or("-".into(), chain),
            b.slot,
            b.body.iter().map(|t| t.0.to_string()).collect::<Vec<_>>().join(",")
        ),
        Message::Vote(v) => format!("{}|{}|{}|{}", v.sender.0, v.slot, chain(&v.chain), ffg(&v.ffg)),
        Message::ProposeTob(p) => format!(
            "{}|{}|{}|{}|{}|{}",
            p.sender.0,
            p.slot,
            chain(&p.block.id),
            chain(&p.fast_chain),
            p.cert.len(),
            p.gj.as_ref().map_or("-".into(), checkpoint)
        ),
        Message::ProposeRlmd(p) => {
            format!("{}|{}|{}|{}|{}", p.sender.0, p.slot, chain(&p.block.id), hex::encode(p.view_digest), p.view.votes().len())
        }
        Message::Ack(a) => format!("{}|{}|{}", a.sender.0, a.slot, checkpoint(&a.checkpoint)),
    }
}

/// Line-oriented trace, `round|kind|fields`, in round order.
pub fn serialize_trace(trace: &Trace) -> String {
    let mut out = String::new();
    let slot_len = trace.config.slot_len();
    let (mut mi, mut si, mut di) = (0, 0, 0);
    for (r, rec) in trace.rounds.iter().enumerate() {
        let r = r as Round;
        if r.is_multiple_of(slot_len) {
            let t = (r / slot_len) as usize;
            let s = &trace.slots[t];
            let _ = writeln!(
                out,
                "{r}|slot|{t}|{}|{}|{}",
                s.proposer.0,
                u8::from(s.honest),
                s.proposal.as_ref().map_or("-".into(), chain)
            );
        }
        while mi < trace.messages.len() && trace.messages[mi].0 == r {
            let m = &trace.messages[mi].1;
            let _ = writeln!(out, "{r}|{}|{mi}|{}", m.kind(), message_fields(m));
            mi += 1;
        }
        while si < trace.sends.len() && trace.sends[si].round == r {
            let s = &trace.sends[si];
            let _ = writeln!(out, "{r}|send|{}|{}|{}", s.from.0, s.msg, u8::from(s.relay));
            si += 1;
        }
        while di < trace.deliveries.len() && trace.deliveries[di].round == r {
            let d = &trace.deliveries[di];
            let _ = writeln!(out, "{r}|deliver|{}|{}", d.to.0, d.msg);
            di += 1;
        }
        let _ = writeln!(out, "{r}|members|{}|{}|{}", ids(&rec.honest), ids(&rec.corrupt), ids(&rec.aware));
        for (v, o) in &rec.outputs {
            let _ = writeln!(out, "{r}|output|{}|{}|{}", v.0, chain(&o.ava), chain(&o.fin));
        }
    }
    out
}

pub fn serialize_verdicts(verdicts: &[(&str, Verdict)]) -> String {
    verdicts.iter().map(|(name, v)| format!("{name}|{v}\n")).collect()
}

pub fn serialize_metrics(report: &LatencyReport) -> String {
    let opt = |x: Option<Round>| x.map_or("-".to_string(), |r| r.to_string());
    let mut out = format!("median|{}|{}\n", opt(report.median_ava()), opt(report.median_fin()));
    for t in &report.txs {
        let _ = writeln!(out, "tx|{}|{}|{}|{}", t.tx.0, t.injected, opt(t.ava), opt(t.fin));
    }
    out
}

fn any_failed(verdicts: &[(&str, Verdict)]) -> bool {
    verdicts.iter().any(|(_, v)| v.is_fail())
}

/// Loads and validates a scenario file, printing the problem on failure.
pub fn load_scenario(path: &Path) -> Result<SimConfig, i32> {
    let text = fs::read_to_string(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_USAGE
    })?;
    parse_scenario(&text).map_err(|e| {
        eprintln!("{}:{e}", path.display());
        EXIT_USAGE
    })
}

fn simulate(cfg: &SimConfig) -> Result<Trace, i32> {
    run(cfg).map_err(|e: SimError| {
        eprintln!("simulation error: {e}");
        EXIT_USAGE
    })
}

pub fn cmd_run(cfg: &SimConfig, out_dir: Option<&Path>) -> i32 {
    let trace = match simulate(cfg) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let verdicts = run_all(&trace);
    let report = latency_metrics(&trace);
    let verdict_text = serialize_verdicts(&verdicts);
    print!("{}", serialize_scenario(cfg));
    print!("{verdict_text}");
    if let Some(dir) = out_dir {
        let written = fs::create_dir_all(dir)
            .and_then(|_| fs::write(dir.join("trace.txt"), serialize_trace(&trace)))
            .and_then(|_| fs::write(dir.join("verdict.txt"), &verdict_text))
            .and_then(|_| fs::write(dir.join("metrics.txt"), serialize_metrics(&report)));
        if let Err(e) = written {
            eprintln!("{}: {e}", dir.display());
            return EXIT_USAGE;
        }
    }
    if any_failed(&verdicts) {
        EXIT_FAIL
    } else {
        EXIT_PASS
    }
}

/// One randomized variant of `base`: fresh seed, corrupted ids, sleep schedule and one
/// transaction per slot. Returns `None` when no compliant schedule was found.
pub fn fuzz_config(base: &SimConfig, rng: &mut ChaCha8Rng) -> Option<SimConfig> {
    let mut cfg = base.clone();
    cfg.seed = rng.gen();
    if !base.corrupt.is_empty() {
        let mut ids: Vec<u32> = (0..cfg.n as u32).collect();
        rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), rng);
        let rounds: Vec<Round> = base.corrupt.values().copied().collect();
        cfg.corrupt = ids.into_iter().zip(rounds).map(|(i, r)| (ValidatorId(i), r)).collect();
    }
    let slot_len = cfg.slot_len();
    cfg.txs = (0..cfg.num_slots).map(|t| (t * slot_len + rng.gen_range(0..slot_len), TxId(t))).collect();
    let honest = cfg.n - cfg.corrupt.len();
    cfg.sleep = compliant_sleep(&cfg, rng, (honest / 4).max(1), 1, 3);
    compliant(&MembershipRecord::predicted(&cfg), &cfg).then_some(cfg)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FuzzSummary {
    pub runs: usize,
    pub skipped: usize,
    /// Seeds of failing runs, with the first failing check.
    pub failures: Vec<(u64, String)>,
}

pub fn fuzz(base: &SimConfig, runs: usize, seed: u64) -> Result<FuzzSummary, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut summary = FuzzSummary { runs, ..FuzzSummary::default() };
    for _ in 0..runs {
        let Some(cfg) = fuzz_config(base, &mut rng) else {
            summary.skipped += 1;
            continue;
        };
        let trace = run(&cfg)?;
        if let Some((name, v)) = run_all(&trace).into_iter().find(|(_, v)| v.is_fail()) {
            summary.failures.push((cfg.seed, format!("{name}|{v}")));
        }
    }
    Ok(summary)
}

pub fn cmd_fuzz(base: &SimConfig, runs: usize, seed: u64) -> i32 {
    let summary = match fuzz(base, runs, seed) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("simulation error: {e}");
            return EXIT_USAGE;
        }
    };
    for (s, why) in &summary.failures {
        println!("fail|{s}|{why}");
    }
    println!("runs|{}|skipped|{}|failures|{}", summary.runs, summary.skipped, summary.failures.len());
    if summary.failures.is_empty() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleKind {
    ForkChoice,
    Ffg,
}

impl std::str::FromStr for OracleKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forkchoice" => Ok(OracleKind::ForkChoice),
            "ffg" => Ok(OracleKind::Ffg),
            _ => Err(format!("unknown oracle `{s}`, expected forkchoice or ffg")),
        }
    }
}

/// Number of fixtures on which the production code disagrees with the brute-force one.
pub fn oracle_disagreements(kind: OracleKind, cases: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .filter(|_| match kind {
            OracleKind::ForkChoice => !fork_fixture_agrees(&random_fork_fixture(&mut rng)),
            OracleKind::Ffg => !ffg_fixture_agrees(&random_ffg_fixture(&mut rng)),
        })
        .count()
}

pub fn cmd_oracle(kind: OracleKind, cases: usize, seed: u64) -> i32 {
    let bad = oracle_disagreements(kind, cases, seed);
    println!("cases|{cases}|disagreements|{bad}");
    if bad == 0 {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}
