//! Scenario runs checked against their expectations, and seeded fuzz
//! campaigns over random topologies.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{AdversaryClass, AttackParams, FuzzBounds};
use crate::engine::{self, RunOutput};
use crate::error::SimError;
use crate::identity::NodeId;
use crate::qos::{GKind, MetricSource};
use crate::scenario::{
    AdversaryEntry, DiscoverySpec, Expectations, LinkEntry, MetricEntry, MetricsSection, NodeEntry,
    Quantifier, Scenario, ScenarioFile, TunnelSpec,
};
use crate::simcore::{SimConfig, Time};
use crate::srp::Mode;
use crate::verifier::{verdict_all, Summary, Verdict};

/// Exit status of the command-line tool.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub digest: String,
    pub verdicts: Vec<Verdict>,
    pub summary: Summary,
    /// Unmet expectations, empty on success.
    pub violations: Vec<String>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_PASS
        } else {
            EXIT_VIOLATION
        }
    }
}

/// Verdicts for every route accepted in `out`.
pub fn verdicts(sc: &Scenario, out: &RunOutput) -> Result<Vec<Verdict>, SimError> {
    verdict_all(&out.trace, &sc.topology, sc.metrics.as_ref(), &sc.faulty())
}

fn quantified(
    violations: &mut Vec<String>,
    what: &str,
    q: Option<Quantifier>,
    with: usize,
    total: usize,
) {
    if let Some(q) = q {
        if !q.holds(with, total) {
            violations.push(format!("{what}: expected {q:?}, got {with} of {total} routes"));
        }
    }
}

/// Unmet expectations. Routes with a faulty endpoint are left out of the
/// property quantifiers but count towards the accepted totals.
pub fn check_expectations(expect: &Expectations, verdicts: &[Verdict]) -> Vec<String> {
    let mut v = Vec::new();
    let judged: Vec<&Verdict> = verdicts.iter().filter(|r| !r.endpoints_faulty()).collect();
    let total = judged.len();
    let count = |f: &dyn Fn(&Verdict) -> bool| judged.iter().filter(|r| f(r)).count();
    quantified(&mut v, "loop_free", expect.loop_free, count(&|r| r.loop_free), total);
    quantified(&mut v, "fresh", expect.fresh, count(&|r| r.fresh), total);
    quantified(&mut v, "weakly_fresh", expect.weakly_fresh, count(&|r| r.weakly_fresh), total);
    if let Some(q) = expect.accurate {
        let evaluated: Vec<&&Verdict> = judged.iter().filter(|r| r.accurate.is_some()).collect();
        let ok = evaluated.iter().filter(|r| r.accurate == Some(true)).count();
        quantified(&mut v, "accurate", Some(q), ok, evaluated.len());
    }
    if let Some((a, b)) = expect.victim {
        let q = expect.victim_routes.unwrap_or(Quantifier::None);
        let hit = count(&|r| r.stale_links.iter().any(|&(x, y)| (x, y) == (a, b) || (y, x) == (a, b)));
        quantified(&mut v, &format!("victim {a}-{b}"), Some(q), hit, total);
    }
    let accepted = verdicts.len();
    if let Some(min) = expect.min_accepted {
        if accepted < min {
            v.push(format!("accepted: expected at least {min}, got {accepted}"));
        }
    }
    if let Some(max) = expect.max_accepted {
        if accepted > max {
            v.push(format!("accepted: expected at most {max}, got {accepted}"));
        }
    }
    v
}

pub fn evaluate(sc: &Scenario, out: &RunOutput) -> Result<RunReport, SimError> {
    let verdicts = verdicts(sc, out)?;
    let mut violations = check_expectations(sc.expect(), &verdicts);
    if let Err(e) = out.trace.check_causality() {
        violations.push(format!("trace: {e}"));
    }
    Ok(RunReport {
        scenario: sc.name().to_string(),
        seed: out.seed,
        digest: format!("{:016x}", out.digest),
        summary: Summary::of(&verdicts),
        verdicts,
        violations,
    })
}

pub fn run_scenario(sc: &Scenario, seed: u64) -> Result<(RunOutput, RunReport), SimError> {
    let out = engine::run(sc, seed)?;
    let report = evaluate(sc, &out)?;
    Ok((out, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub runs: usize,
    pub class: AdversaryClass,
    pub mode: Mode,
    pub max_nodes: usize,
    pub seed: u64,
}

impl Default for CampaignSpec {
    fn default() -> Self {
        CampaignSpec {
            runs: 1_000,
            class: AdversaryClass::Independent,
            mode: Mode::Basic,
            max_nodes: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailingRun {
    pub index: usize,
    pub seed: u64,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunVerdicts {
    pub index: usize,
    pub seed: u64,
    pub verdicts: Vec<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub spec: CampaignSpec,
    /// Runs that ended with at least one accepted route.
    pub runs_with_routes: usize,
    pub summary: Summary,
    /// Fraction of judged routes holding each property.
    pub pass_rates: BTreeMap<String, f64>,
    pub loop_violations: usize,
    pub freshness_violations: usize,
    pub weak_freshness_violations: usize,
    pub accuracy_violations: usize,
    pub failing: Vec<FailingRun>,
    /// Runs with at least one accepted route, in index order.
    pub runs: Vec<RunVerdicts>,
}

impl CampaignReport {
    /// Violations of what the class guarantees: loop-freedom always, plus
    /// freshness and accuracy for independent adversaries and weak
    /// freshness for arbitrary ones.
    pub fn passed(&self) -> bool {
        self.failing.is_empty()
    }
}

/// Seed of run `index` in a campaign seeded with `seed`.
pub fn run_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const FUZZ_END: Time = 400;

fn intervals(rng: &mut ChaCha8Rng) -> Vec<(Time, Time)> {
    let mut cuts: Vec<Time> = (0..2 * rng.gen_range(1..=3)).map(|_| rng.gen_range(0..FUZZ_END)).collect();
    cuts.sort_unstable();
    cuts.dedup();
    cuts.chunks_exact(2)
        .filter(|c| c[1] - c[0] >= 2)
        .map(|c| (c[0], c[1]))
        .collect()
}

fn shortest_path(
    links: &BTreeMap<(NodeId, NodeId), Option<Vec<(Time, Time)>>>,
    from: NodeId,
    to: NodeId,
) -> Option<Vec<NodeId>> {
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([from]);
    let mut seen = BTreeSet::from([from]);
    while let Some(x) = queue.pop_front() {
        if x == to {
            let mut p = vec![to];
            while let Some(&q) = prev.get(p.last().unwrap()) {
                p.push(q);
            }
            p.reverse();
            return Some(p);
        }
        for &(a, b) in links.keys() {
            let y = if a == x {
                b
            } else if b == x {
                a
            } else {
                continue;
            };
            if seen.insert(y) {
                prev.insert(y, x);
                queue.push_back(y);
            }
        }
    }
    None
}

/// A random scenario for one campaign run: nodes scattered in the unit
/// square, links between close pairs with random up intervals, S=1 and
/// T=n correct, 1..=3 fuzz-scripted adversaries in between. Adversaries
/// reach further and their links churn less; arbitrary ones are sometimes
/// given the tunnel or fabricating-chain roles instead of fuzz scripts. With
/// probability 0.9 a path of always-up links through correct nodes joins S
/// and T.
pub fn fuzz_scenario(seed: u64, class: AdversaryClass, mode: Mode, max_nodes: usize) -> ScenarioFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=max_nodes.max(3)) as u32;
    let ids: Vec<NodeId> = (1..=n).map(NodeId).collect();
    let (s, t) = (ids[0], ids[n as usize - 1]);
    let mut inner: Vec<NodeId> = ids[1..n as usize - 1].to_vec();
    inner.shuffle(&mut rng);
    let k = rng.gen_range(1..=inner.len().min(3));
    let bad: BTreeSet<NodeId> = inner[..k].iter().copied().collect();
    let good: Vec<NodeId> = inner[k..].to_vec();

    let pos: BTreeMap<NodeId, (f64, f64)> = ids.iter().map(|i| (*i, (rng.gen(), rng.gen()))).collect();
    let mut links: BTreeMap<(NodeId, NodeId), Option<Vec<(Time, Time)>>> = BTreeMap::new();
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            let (pa, pb) = (pos[a], pos[b]);
            let d = ((pa.0 - pb.0).powi(2) + (pa.1 - pb.1).powi(2)).sqrt();
            // adversaries get a longer, steadier reach so they land on routes
            let adversarial = bad.contains(a) || bad.contains(b);
            let (reach, steady) = if adversarial { (0.8, 0.8) } else { (0.6, 0.5) };
            if d < reach {
                let up = if rng.gen_bool(steady) { None } else { Some(intervals(&mut rng)) };
                links.insert((*a, *b), up);
            }
        }
    }
    if rng.gen_bool(0.9) {
        let hops = rng.gen_range(0..=good.len());
        let mut path = vec![s];
        path.extend(good.iter().take(hops));
        path.push(t);
        for w in path.windows(2) {
            let key = if w[0] < w[1] { (w[0], w[1]) } else { (w[1], w[0]) };
            links.insert(key, None);
        }
    }

    // Coordinated roles that independent script sampling rarely lines up:
    // a tunnel pair without a direct link, or a fabricating chain.
    let mut order: Vec<NodeId> = bad.iter().copied().collect();
    order.shuffle(&mut rng);
    let coordinated = class == AdversaryClass::Arbitrary && order.len() >= 2 && rng.gen_bool(0.4);
    let chain = coordinated && order.len() >= 3 && rng.gen_bool(0.5);
    if coordinated && !chain {
        let key = if order[0] < order[1] { (order[0], order[1]) } else { (order[1], order[0]) };
        links.remove(&key);
    }

    let mut tunnels = Vec::new();
    if class == AdversaryClass::Arbitrary {
        let bad: Vec<NodeId> = bad.iter().copied().collect();
        for (i, a) in bad.iter().enumerate() {
            for b in &bad[i + 1..] {
                if let Some(path) = shortest_path(&links, *a, *b) {
                    tunnels.push(TunnelSpec { a: *a, b: *b, path });
                }
            }
        }
    }

    let mut adversaries = BTreeMap::new();
    for m in &bad {
        let peers = tunnels
            .iter()
            .filter_map(|tn: &TunnelSpec| {
                if tn.a == *m {
                    Some(tn.b)
                } else if tn.b == *m {
                    Some(tn.a)
                } else {
                    None
                }
            })
            .collect();
        let bounds = FuzzBounds {
            nodes: ids.clone(),
            peers,
            max_delta: 0.3,
            ..Default::default()
        };
        adversaries.insert(
            m.0.to_string(),
            AdversaryEntry {
                class,
                attack: "fuzz".into(),
                params: AttackParams {
                    seed: Some(rng.gen()),
                    bounds: Some(bounds),
                    ..Default::default()
                },
            },
        );
    }

    if coordinated {
        let named = |attack: &str, params: AttackParams| AdversaryEntry {
            class,
            attack: attack.into(),
            params,
        };
        let role = |role: &str, peer: Option<NodeId>| AttackParams {
            role: Some(role.into()),
            peer,
            ..Default::default()
        };
        if chain {
            let fake = *ids.choose(&mut rng).unwrap();
            adversaries.insert(order[0].0.to_string(), named("fig1b_chain", role("head", None)));
            adversaries.insert(
                order[1].0.to_string(),
                named(
                    "fig1b_chain",
                    AttackParams {
                        node: Some(fake),
                        ..role("fabricator", Some(order[0]))
                    },
                ),
            );
            adversaries.insert(order[2].0.to_string(), named("fig1b_chain", role("tail", None)));
        } else if tunnels.iter().any(|t| [t.a, t.b] == [order[0], order[1]] || [t.b, t.a] == [order[0], order[1]]) {
            let (head, tail) = (order[0], order[1]);
            adversaries.insert(head.0.to_string(), named("fig1a_tunnel", role("head", Some(tail))));
            adversaries.insert(tail.0.to_string(), named("fig1a_tunnel", role("tail", Some(head))));
        }
    }

    let metrics = (mode == Mode::Augmented).then(|| MetricsSection {
        kind: *[GKind::Add, GKind::Max, GKind::Min].choose(&mut rng).unwrap(),
        epsilon: 0.1,
        delta_tilde: 0.02,
        source: MetricSource::Measured,
        default_value: None,
        actual: links
            .keys()
            .map(|&(a, b)| MetricEntry {
                a,
                b,
                value: (rng.gen_range(10..50) as f64) / 10.0,
            })
            .collect(),
    });

    let mut discoveries = vec![DiscoverySpec { src: s, dst: t, at: 5 }];
    if rng.gen_bool(0.5) {
        discoveries.push(DiscoverySpec {
            src: s,
            dst: t,
            at: rng.gen_range(50..FUZZ_END / 2),
        });
    }

    ScenarioFile {
        name: format!("fuzz-{seed:016x}"),
        description: String::new(),
        config: SimConfig {
            radius: 0.6,
            max_link_delay: 3,
            seed,
            end_time: FUZZ_END,
            tx_time: 1,
        },
        mode,
        nodes: ids
            .iter()
            .map(|id| NodeEntry {
                id: *id,
                name: String::new(),
            })
            .collect(),
        links: links
            .into_iter()
            .map(|((a, b), up)| LinkEntry { a, b, up })
            .collect(),
        keys: vec![(s, t)],
        metrics,
        adversaries,
        tunnels,
        discoveries,
        reply_wait: None,
        expect: Expectations::default(),
    }
}

#[derive(Debug, Clone, Default)]
struct RunTally {
    summary: Summary,
    loops: usize,
    stale: usize,
    weak: usize,
    inaccurate: usize,
    violations: Vec<String>,
    verdicts: Vec<Verdict>,
}

fn tally(class: AdversaryClass, verdicts: &[Verdict]) -> RunTally {
    let mut t = RunTally {
        summary: Summary::of(verdicts),
        verdicts: verdicts.to_vec(),
        ..Default::default()
    };
    for v in verdicts.iter().filter(|v| !v.endpoints_faulty()) {
        let route = || format!("{:?}", v.route.iter().map(|n| n.0).collect::<Vec<_>>());
        if !v.loop_free {
            t.loops += 1;
            t.violations.push(format!("loop in route {}", route()));
        }
        match class {
            AdversaryClass::Independent => {
                if !v.fresh {
                    t.stale += 1;
                    t.violations.push(format!("stale route {} ({:?})", route(), v.stale_links));
                }
                if v.accurate == Some(false) {
                    t.inaccurate += 1;
                    t.violations.push(format!(
                        "inaccurate route {}: error {:?} vs {:?}",
                        route(),
                        v.metric_error,
                        v.delta_good
                    ));
                }
            }
            AdversaryClass::Arbitrary => {
                if !v.weakly_fresh {
                    t.weak += 1;
                    t.violations.push(format!("route {} is not weakly fresh", route()));
                }
            }
        }
    }
    t
}

fn one_run(spec: &CampaignSpec, index: usize) -> RunTally {
    let seed = run_seed(spec.seed, index);
    let file = fuzz_scenario(seed, spec.class, spec.mode, spec.max_nodes);
    let result = Scenario::from_file(file)
        .map_err(|e| e.to_string())
        .and_then(|sc| {
            let out = engine::run(&sc, seed).map_err(|e| e.to_string())?;
            verdicts(&sc, &out).map_err(|e| e.to_string())
        });
    match result {
        Ok(v) => tally(spec.class, &v),
        Err(e) => RunTally {
            violations: vec![format!("run error: {e}")],
            ..Default::default()
        },
    }
}

/// Runs `spec.runs` seeded scenarios in parallel. The report depends only
/// on `spec`: per-run results are reduced in index order.
pub fn fuzz_campaign(spec: &CampaignSpec) -> CampaignReport {
    let tallies: Vec<RunTally> = (0..spec.runs).into_par_iter().map(|i| one_run(spec, i)).collect();
    let mut summary = Summary::default();
    let mut report = CampaignReport {
        spec: *spec,
        runs_with_routes: 0,
        summary: Summary::default(),
        pass_rates: BTreeMap::new(),
        loop_violations: 0,
        freshness_violations: 0,
        weak_freshness_violations: 0,
        accuracy_violations: 0,
        failing: Vec::new(),
        runs: Vec::new(),
    };
    for (index, t) in tallies.into_iter().enumerate() {
        if t.summary.routes > 0 {
            report.runs_with_routes += 1;
        }
        summary.merge(&t.summary);
        report.loop_violations += t.loops;
        report.freshness_violations += t.stale;
        report.weak_freshness_violations += t.weak;
        report.accuracy_violations += t.inaccurate;
        if !t.violations.is_empty() {
            report.failing.push(FailingRun {
                index,
                seed: run_seed(spec.seed, index),
                violations: t.violations,
            });
        }
        if !t.verdicts.is_empty() {
            report.runs.push(RunVerdicts {
                index,
                seed: run_seed(spec.seed, index),
                verdicts: t.verdicts,
            });
        }
    }
    let judged = summary.routes - summary.excluded;
    let rate = |k: usize, of: usize| if of == 0 { 1.0 } else { k as f64 / of as f64 };
    report.pass_rates.insert("loop_free".into(), rate(summary.loop_free, judged));
    report.pass_rates.insert("fresh".into(), rate(summary.fresh, judged));
    report.pass_rates.insert("weakly_fresh".into(), rate(summary.weakly_fresh, judged));
    report
        .pass_rates
        .insert("accurate".into(), rate(summary.accurate, summary.accuracy_evaluated));
    report.summary = summary;
    report
}
