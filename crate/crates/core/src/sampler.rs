//! `G(n, p)` conditioned on the lower-tail event `N_H(G) <= η · N_H(K_n) · p^{e(H)}`.
//!
//! [`ExactConditional`] enumerates every graph on `C(n,2) <= 24` slots.
//! [`Chain`] is a single-slot-flip Metropolis chain that rejects moves leaving
//! the event; since the event is closed under edge deletion, every state
//! reaches the empty graph and the chain is irreducible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{parse_value, KeyValues};
use crate::entropy::EdgeWeights;
use crate::error::{Error, Result};
use crate::graph::{num_slots, CopyCounter, CopyHypergraph, EdgeSlot, Graph};
use crate::numeric::{batch_means, compensated_sum, floor_double_double, two_product, CompensatedSum};
use crate::variational::{solve_phi_upper_bound, SolverConfig, VariationalProblem};

/// Largest slot count handled by [`ExactConditional`].
pub const MAX_EXACT_SLOTS: usize = 24;

#[derive(Debug, Clone)]
pub struct LowerTailEvent {
    counter: CopyCounter,
    n: usize,
    p: f64,
    eta: f64,
    total_copies: u64,
    threshold: f64,
    cap: u64,
}

/// `x · y` for a double-double `x`.
fn dd_mul(x: (f64, f64), y: f64) -> (f64, f64) {
    let (p, e) = two_product(x.0, y);
    let e = e + x.1 * y;
    let s = p + e;
    (s, e - (s - p))
}

impl LowerTailEvent {
    pub fn new(h: &Graph, n: usize, p: f64, eta: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidInput(format!("p must lie in (0, 1), got {p}")));
        }
        if !(eta >= 0.0) || !eta.is_finite() {
            return Err(Error::InvalidInput(format!("eta must be nonnegative, got {eta}")));
        }
        if h.edge_count() == 0 {
            return Err(Error::InvalidInput("pattern graph has no edges".into()));
        }
        if h.n() > n {
            return Err(Error::InvalidInput(format!("pattern has {} vertices but n = {n}", h.n())));
        }
        let counter = CopyCounter::new(h);
        let mut falling: u128 = 1;
        for k in 0..h.n() as u128 {
            falling *= n as u128 - k;
        }
        let total = falling / counter.automorphisms() as u128;
        if total > (1u128 << 53) {
            return Err(Error::Resource {
                what: "copy count of the pattern in K_n".into(),
                estimated: total as f64,
                limit: (1u64 << 53) as f64,
            });
        }
        let total_copies = total as u64;
        let mut t = (1.0, 0.0);
        for _ in 0..h.edge_count() {
            t = dd_mul(t, p);
        }
        t = dd_mul(t, eta);
        t = dd_mul(t, total_copies as f64);
        let threshold = t.0 + t.1;
        let cap = floor_double_double(t.0, t.1).min(u64::MAX as f64) as u64;
        Ok(LowerTailEvent {
            counter,
            n,
            p,
            eta,
            total_copies,
            threshold,
            cap,
        })
    }

    pub fn pattern(&self) -> &Graph {
        self.counter.pattern()
    }

    pub fn counter(&self) -> &CopyCounter {
        &self.counter
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn slots(&self) -> usize {
        num_slots(self.n)
    }

    /// `N_H(K_n)`.
    pub fn total_copies(&self) -> u64 {
        self.total_copies
    }

    /// `η · N_H(K_n) · p^{e(H)}`.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Largest admissible integer count.
    pub fn cap(&self) -> u64 {
        self.cap
    }

    pub fn contains_count(&self, count: u64) -> bool {
        count <= self.cap
    }

    pub fn contains(&self, g: &Graph) -> bool {
        self.contains_count(self.counter.count(g))
    }

    /// True when every graph on `n` vertices lies in the event.
    pub fn is_trivial(&self) -> bool {
        self.cap >= self.total_copies
    }
}

/// Exact conditional law on an enumerated support.
#[derive(Debug, Clone)]
pub struct ExactConditional {
    n: usize,
    p: f64,
    hypergraph: CopyHypergraph,
    support: Vec<u32>,
    probs: Vec<f64>,
    counts: Vec<u32>,
    z: f64,
}

/// Conditional law restricted to one assignment of the slots in `W`.
#[derive(Debug, Clone)]
pub struct ConditionalSlice<'a> {
    exact: &'a ExactConditional,
    w_mask: u32,
    /// `P(Y_W = assignment | event)`.
    pub mass: f64,
    items: Vec<(u32, f64)>,
}

impl ConditionalSlice<'_> {
    /// `E[Π_{s ∈ B} Y_s | Y_W = a, event]`.
    pub fn expect_monomial(&self, b_mask: u32) -> f64 {
        compensated_sum(self.items.iter().filter(|(g, _)| g & b_mask == b_mask).map(|(_, w)| *w))
    }

    pub fn marginals(&self) -> Vec<f64> {
        let m = num_slots(self.exact.n);
        let mut acc = vec![CompensatedSum::new(); m];
        for &(g, w) in &self.items {
            let mut rest = g;
            while rest != 0 {
                let s = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                acc[s].add(w);
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }

    /// `q^W`: conditional marginals off `W`, `p` on `W`.
    pub fn q_w(&self) -> EdgeWeights {
        let mut q = self.marginals();
        for (s, v) in q.iter_mut().enumerate() {
            if self.w_mask >> s & 1 == 1 {
                *v = self.exact.p;
            }
        }
        EdgeWeights::new(self.exact.n, q.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()).expect("length")
    }
}

pub(crate) fn mask_of(slots: &[usize]) -> u32 {
    slots.iter().fold(0u32, |m, &s| m | 1 << s)
}

impl ExactConditional {
    pub fn new(event: &LowerTailEvent) -> Result<Self> {
        let n = event.n();
        let m = num_slots(n);
        if m > MAX_EXACT_SLOTS {
            return Err(Error::Resource {
                what: "exact enumeration of graphs".into(),
                estimated: 2f64.powi(m as i32),
                limit: 2f64.powi(MAX_EXACT_SLOTS as i32),
            });
        }
        let hypergraph = CopyHypergraph::enumerate(event.pattern(), n)?;
        let masks: Vec<u32> = hypergraph
            .edge_masks()
            .expect("slot count fits")
            .into_iter()
            .map(|x| x as u32)
            .collect();
        let cap = event.cap();
        const CHUNK: u64 = 1 << 12;
        let total: u64 = 1 << m;
        let chunks: Vec<Vec<(u32, u32)>> = (0..total.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = (lo + CHUNK).min(total);
                (lo..hi)
                    .filter_map(|g| {
                        let g = g as u32;
                        let cnt = masks.iter().filter(|&&a| g & a == a).count() as u32;
                        (cnt as u64 <= cap).then_some((g, cnt))
                    })
                    .collect()
            })
            .collect();
        let (support, counts): (Vec<u32>, Vec<u32>) = chunks.into_iter().flatten().unzip();
        let p = event.p();
        let lp = p.ln();
        let lq = (1.0 - p).ln();
        let weight: Vec<f64> = (0..=m).map(|e| (e as f64 * lp + (m - e) as f64 * lq).exp()).collect();
        let raw: Vec<f64> = support.iter().map(|g| weight[g.count_ones() as usize]).collect();
        let z = compensated_sum(raw.iter().copied());
        let probs = raw.iter().map(|w| w / z).collect();
        Ok(ExactConditional {
            n,
            p,
            hypergraph,
            support,
            probs,
            counts,
            z,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn slots(&self) -> usize {
        num_slots(self.n)
    }

    /// `P(event)` under `G(n, p)`.
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn neg_log_probability(&self) -> f64 {
        -self.z.ln()
    }

    pub fn hypergraph(&self) -> &CopyHypergraph {
        &self.hypergraph
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// `(slot mask, probability, N_H)` per supported graph, masks ascending.
    pub fn iter(&self) -> impl Iterator<Item = (u32, f64, u32)> + '_ {
        self.support
            .iter()
            .zip(&self.probs)
            .zip(&self.counts)
            .map(|((&g, &w), &c)| (g, w, c))
    }

    pub fn total_probability(&self) -> f64 {
        compensated_sum(self.probs.iter().copied())
    }

    /// `E[Π_{s ∈ B} Y_s | event]` for a slot mask `B`.
    pub fn expect_monomial(&self, b_mask: u32) -> f64 {
        compensated_sum(self.iter().filter(|(g, _, _)| g & b_mask == b_mask).map(|(_, w, _)| w))
    }

    pub fn expect_count(&self) -> f64 {
        compensated_sum(self.iter().map(|(_, w, c)| w * c as f64))
    }

    pub fn count_second_moment(&self) -> f64 {
        compensated_sum(self.iter().map(|(_, w, c)| w * (c as f64) * (c as f64)))
    }

    pub fn count_variance(&self) -> f64 {
        let mean = self.expect_count();
        compensated_sum(self.iter().map(|(_, w, c)| w * (c as f64 - mean).powi(2)))
    }

    /// `E[N_F | event]` through `Σ_{A ∈ 𝓗(F)} E[Y_A | event]`.
    pub fn expect_pattern_count(&self, f: &Graph) -> Result<f64> {
        if f.n() > self.n {
            return Ok(0.0);
        }
        let hf = CopyHypergraph::enumerate(f, self.n)?;
        let masks = hf.edge_masks().expect("slot count fits");
        Ok(compensated_sum(masks.iter().map(|&a| self.expect_monomial(a as u32))))
    }

    pub fn marginals(&self) -> Vec<f64> {
        self.condition(0, 0).expect("full law has positive mass").marginals()
    }

    /// `P(s, t both present | event)`, row-major `m × m`.
    pub fn pair_marginals(&self) -> Vec<f64> {
        let m = self.slots();
        let mut acc = vec![CompensatedSum::new(); m * m];
        for (g, w, _) in self.iter() {
            let bits: Vec<usize> = (0..m).filter(|s| g >> s & 1 == 1).collect();
            for &a in &bits {
                for &b in &bits {
                    acc[a * m + b].add(w);
                }
            }
        }
        acc.iter().map(CompensatedSum::value).collect()
    }

    /// Law conditioned additionally on `Y_W = assignment`.
    pub fn condition(&self, w_mask: u32, assignment: u32) -> Result<ConditionalSlice<'_>> {
        let a = assignment & w_mask;
        let sel: Vec<(u32, f64)> = self
            .iter()
            .filter(|(g, _, _)| g & w_mask == a)
            .map(|(g, w, _)| (g, w))
            .collect();
        let mass = compensated_sum(sel.iter().map(|(_, w)| *w));
        if !(mass > 0.0) {
            return Err(Error::ZeroProbability);
        }
        Ok(ConditionalSlice {
            exact: self,
            w_mask,
            mass,
            items: sel.into_iter().map(|(g, w)| (g, w / mass)).collect(),
        })
    }

    /// `q^W` for the slots in `W` set to `assignment`.
    pub fn q_w(&self, w_slots: &[usize], assignment: &[bool]) -> Result<EdgeWeights> {
        if w_slots.len() != assignment.len() {
            return Err(Error::Dimension {
                expected: w_slots.len(),
                got: assignment.len(),
            });
        }
        if let Some(&s) = w_slots.iter().find(|&&s| s >= self.slots()) {
            return Err(Error::InvalidInput(format!("slot {s} out of range")));
        }
        let w = mask_of(w_slots);
        let a = w_slots
            .iter()
            .zip(assignment)
            .fold(0u32, |m, (&s, &on)| if on { m | 1 << s } else { m });
        Ok(self.condition(w, a)?.q_w())
    }

    /// Assignments of `W` with positive conditional probability, with that probability.
    pub fn w_assignments(&self, w_mask: u32) -> Vec<(u32, f64)> {
        let mut law: BTreeMap<u32, CompensatedSum> = BTreeMap::new();
        for (g, w, _) in self.iter() {
            law.entry(g & w_mask).or_default().add(w);
        }
        law.into_iter().map(|(a, s)| (a, s.value())).filter(|(_, w)| *w > 0.0).collect()
    }

    /// Law of `(e(G), N_H(G))`.
    pub fn binned_law(&self) -> BTreeMap<(u32, u64), f64> {
        let mut law: BTreeMap<(u32, u64), CompensatedSum> = BTreeMap::new();
        for (g, w, c) in self.iter() {
            law.entry((g.count_ones(), c as u64)).or_default().add(w);
        }
        law.into_iter().map(|(k, v)| (k, v.value())).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    /// Steps after burn-in, per chain.
    pub steps: u64,
    pub burn_in: u64,
    /// Retain one sample every `thin` steps; `None` means `C(n,2)`.
    pub thin: Option<u64>,
    pub chains: usize,
    pub audit_interval: u64,
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            steps: 1_000_000,
            burn_in: 100_000,
            thin: None,
            chains: 8,
            audit_interval: 1 << 16,
            seed: 0,
        }
    }
}

impl ChainConfig {
    pub const KEYS: &'static [&'static str] = &["steps", "burn_in", "thin", "chains", "audit_interval", "seed"];

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = ChainConfig::default();
        for (k, v) in kv.iter() {
            match k.as_str() {
                "steps" => c.steps = parse_value(k, v)?,
                "burn_in" => c.burn_in = parse_value(k, v)?,
                "thin" => c.thin = Some(parse_value(k, v)?),
                "chains" => c.chains = parse_value(k, v)?,
                "audit_interval" => c.audit_interval = parse_value(k, v)?,
                "seed" => c.seed = parse_value(k, v)?,
                _ => {}
            }
        }
        if c.chains == 0 || c.thin == Some(0) || c.audit_interval == 0 {
            return Err(Error::Config("chains, thin and audit_interval must be positive".into()));
        }
        Ok(c)
    }

    pub fn to_key_values(&self, n: usize) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("steps", self.steps);
        kv.set("burn_in", self.burn_in);
        kv.set("thin", self.thin_for(n));
        kv.set("chains", self.chains);
        kv.set("audit_interval", self.audit_interval);
        kv.set("seed", self.seed);
        kv
    }

    pub fn thin_for(&self, n: usize) -> u64 {
        self.thin.unwrap_or(num_slots(n).max(1) as u64)
    }
}

/// State of one Metropolis chain.
#[derive(Debug, Clone)]
pub struct Chain<'e> {
    event: &'e LowerTailEvent,
    graph: Graph,
    count: u64,
    rng: ChaCha8Rng,
    step: u64,
    accepted: u64,
    blocked: u64,
    audits: u64,
    slots: usize,
    add_prob: f64,
    remove_prob: f64,
}

impl<'e> Chain<'e> {
    /// Starts at the empty graph; the random stream is `(seed, index)`.
    pub fn new(event: &'e LowerTailEvent, seed: u64, index: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let p = event.p();
        Chain {
            event,
            graph: Graph::empty(event.n()),
            count: 0,
            rng,
            step: 0,
            accepted: 0,
            blocked: 0,
            audits: 0,
            slots: event.slots(),
            add_prob: (p / (1.0 - p)).min(1.0),
            remove_prob: ((1.0 - p) / p).min(1.0),
        }
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    /// Proposals rejected because they would leave the event.
    pub fn blocked(&self) -> u64 {
        self.blocked
    }

    pub fn audits(&self) -> u64 {
        self.audits
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.step == 0 {
            0.0
        } else {
            self.accepted as f64 / self.step as f64
        }
    }

    /// One proposal; returns whether it was accepted.
    pub fn step(&mut self) -> bool {
        self.step += 1;
        let s = EdgeSlot(self.rng.random_range(0..self.slots as u32));
        let u: f64 = self.rng.random();
        let (i, j) = s.pair();
        let present = self.graph.has_slot(s);
        let accept = if present {
            if u < self.remove_prob {
                let through = self.event.counter().count_through_slot(&self.graph, s);
                self.graph.remove_edge(i, j);
                self.count -= through;
                true
            } else {
                false
            }
        } else if u < self.add_prob {
            let through = self.event.counter().count_through_slot(&self.graph, s);
            if self.event.contains_count(self.count + through) {
                self.graph.add_edge(i, j);
                self.count += through;
                true
            } else {
                self.blocked += 1;
                false
            }
        } else {
            false
        };
        if accept {
            self.accepted += 1;
        }
        accept
    }

    /// Recounts from scratch and compares with the maintained count.
    pub fn audit(&mut self) -> Result<()> {
        self.audits += 1;
        let recount = self.event.counter().count(&self.graph);
        if recount != self.count {
            return Err(Error::Audit {
                step: self.step,
                maintained: self.count,
                recount,
            });
        }
        Ok(())
    }

    /// Runs `steps` proposals with periodic audits.
    pub fn advance(&mut self, steps: u64, audit_interval: u64) -> Result<()> {
        for _ in 0..steps {
            self.step();
            if self.step % audit_interval == 0 {
                self.audit()?;
            }
        }
        Ok(())
    }
}

/// Per-sample statistics beyond the pattern count.
pub type Observer<'a> = dyn Fn(&Graph) -> Vec<f64> + Sync + 'a;

/// One retained sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub chain: usize,
    pub step: u64,
    pub mask_hex: String,
    pub count: u64,
    pub extra: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainTrace {
    pub index: usize,
    pub steps: u64,
    pub accepted: u64,
    pub blocked: u64,
    pub audits: u64,
    pub counts: Vec<f64>,
    pub edges: Vec<u32>,
    pub slot_hits: Vec<u64>,
    pub bins: BTreeMap<(u32, u64), u64>,
    pub extra: Vec<Vec<f64>>,
    pub records: Vec<SampleRecord>,
}

impl ChainTrace {
    pub fn samples(&self) -> usize {
        self.counts.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.accepted as f64 / self.steps as f64
        }
    }
}

/// Runs one chain: burn-in, then `steps` proposals retaining every `thin`-th state.
pub fn run_chain(
    event: &LowerTailEvent,
    cfg: &ChainConfig,
    index: usize,
    observer: Option<&Observer>,
    keep_records: bool,
) -> Result<ChainTrace> {
    let thin = cfg.thin_for(event.n());
    let mut chain = Chain::new(event, cfg.seed, index);
    chain.advance(cfg.burn_in, cfg.audit_interval)?;
    let m = event.slots();
    let mut trace = ChainTrace {
        index,
        steps: 0,
        accepted: 0,
        blocked: 0,
        audits: 0,
        counts: Vec::new(),
        edges: Vec::new(),
        slot_hits: vec![0; m],
        bins: BTreeMap::new(),
        extra: Vec::new(),
        records: Vec::new(),
    };
    let mut done = 0;
    while done < cfg.steps {
        let chunk = thin.min(cfg.steps - done);
        chain.advance(chunk, cfg.audit_interval)?;
        done += chunk;
        if chunk < thin {
            break;
        }
        let g = chain.graph();
        let count = chain.count();
        trace.counts.push(count as f64);
        trace.edges.push(g.edge_count() as u32);
        for s in g.slots() {
            trace.slot_hits[s.index()] += 1;
        }
        *trace.bins.entry((g.edge_count() as u32, count)).or_insert(0) += 1;
        let extra = observer.map(|f| f(g)).unwrap_or_default();
        if keep_records {
            trace.records.push(SampleRecord {
                chain: index,
                step: chain.steps_taken(),
                mask_hex: g.slot_hex(),
                count,
                extra: extra.clone(),
            });
        }
        if observer.is_some() {
            trace.extra.push(extra);
        }
    }
    chain.audit()?;
    trace.steps = chain.steps_taken();
    trace.accepted = chain.accepted();
    trace.blocked = chain.blocked();
    trace.audits = chain.audits();
    Ok(trace)
}

/// Pooled output of several independent chains.
#[derive(Debug, Clone, PartialEq)]
pub struct McmcRun {
    pub chains: Vec<ChainTrace>,
    pub mean_count: f64,
    pub count_stderr: f64,
    pub count_variance: f64,
    /// Sum of per-chain batch-means effective sample sizes of the count series.
    pub ess: f64,
    pub acceptance_rate: f64,
    pub audits_passed: u64,
    pub marginals: Vec<f64>,
    /// Between-chain standard errors of the marginals.
    pub marginal_stderr: Vec<f64>,
}

impl McmcRun {
    pub fn run(event: &LowerTailEvent, cfg: &ChainConfig, observer: Option<&Observer>, keep_records: bool) -> Result<Self> {
        let chains: Vec<ChainTrace> = (0..cfg.chains)
            .into_par_iter()
            .map(|k| run_chain(event, cfg, k, observer, keep_records))
            .collect::<Result<_>>()?;
        Ok(Self::pool(chains, event.slots()))
    }

    fn pool(chains: Vec<ChainTrace>, m: usize) -> Self {
        let all: Vec<f64> = chains.iter().flat_map(|c| c.counts.iter().copied()).collect();
        let total = all.len().max(1) as f64;
        let mean_count = compensated_sum(all.iter().copied()) / total;
        let count_variance = if all.len() > 1 {
            all.iter().map(|x| (x - mean_count).powi(2)).sum::<f64>() / (all.len() - 1) as f64
        } else {
            0.0
        };
        let per_chain: Vec<(f64, f64, f64)> = chains.iter().map(|c| batch_means(&c.counts)).collect();
        let ess: f64 = per_chain.iter().map(|t| t.2).sum();
        let count_stderr = (count_variance / ess.max(1.0)).sqrt();
        let steps: u64 = chains.iter().map(|c| c.steps).sum();
        let accepted: u64 = chains.iter().map(|c| c.accepted).sum();
        let audits_passed = chains.iter().map(|c| c.audits).sum();
        let mut marginals = vec![0.0; m];
        let mut marginal_stderr = vec![0.0; m];
        let k = chains.len() as f64;
        for s in 0..m {
            let means: Vec<f64> = chains
                .iter()
                .map(|c| c.slot_hits[s] as f64 / c.samples().max(1) as f64)
                .collect();
            let hits: u64 = chains.iter().map(|c| c.slot_hits[s]).sum();
            marginals[s] = hits as f64 / total;
            if chains.len() > 1 {
                let mu = means.iter().sum::<f64>() / k;
                let var = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (k - 1.0);
                marginal_stderr[s] = (var / k).sqrt();
            } else {
                marginal_stderr[s] = f64::NAN;
            }
        }
        McmcRun {
            mean_count,
            count_stderr,
            count_variance,
            ess,
            acceptance_rate: if steps == 0 { 0.0 } else { accepted as f64 / steps as f64 },
            audits_passed,
            marginals,
            marginal_stderr,
            chains,
        }
    }

    pub fn samples(&self) -> usize {
        self.chains.iter().map(ChainTrace::samples).sum()
    }

    /// Empirical law of `(e(G), N_H(G))` over all retained samples.
    pub fn binned_law(&self) -> BTreeMap<(u32, u64), f64> {
        let mut law: BTreeMap<(u32, u64), u64> = BTreeMap::new();
        for c in &self.chains {
            for (&k, &v) in &c.bins {
                *law.entry(k).or_insert(0) += v;
            }
        }
        let total = self.samples().max(1) as f64;
        law.into_iter().map(|(k, v)| (k, v as f64 / total)).collect()
    }

    pub fn mean_edge_density(&self, m: usize) -> f64 {
        let e: u64 = self.chains.iter().flat_map(|c| c.edges.iter()).map(|&e| e as u64).sum();
        e as f64 / (self.samples().max(1) * m.max(1)) as f64
    }
}

/// Total variation distance between two laws on the same key space.
pub fn total_variation<K: Ord + Clone>(a: &BTreeMap<K, f64>, b: &BTreeMap<K, f64>) -> f64 {
    let mut keys: Vec<K> = a.keys().cloned().collect();
    keys.extend(b.keys().cloned());
    keys.sort();
    keys.dedup();
    0.5 * keys
        .iter()
        .map(|k| (a.get(k).copied().unwrap_or(0.0) - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Conditional edge marginals with standard errors (zero for exact ones).
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalEstimate {
    pub values: EdgeWeights,
    pub stderr: Vec<f64>,
    pub exact: bool,
}

pub enum Backing<'a> {
    Exact,
    Mcmc(&'a ChainConfig),
}

pub fn conditional_marginals(event: &LowerTailEvent, backing: Backing) -> Result<MarginalEstimate> {
    match backing {
        Backing::Exact => {
            let ex = ExactConditional::new(event)?;
            let m = ex.marginals().into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
            Ok(MarginalEstimate {
                values: EdgeWeights::new(event.n(), m)?,
                stderr: vec![0.0; event.slots()],
                exact: true,
            })
        }
        Backing::Mcmc(cfg) => {
            let run = McmcRun::run(event, cfg, None, false)?;
            Ok(MarginalEstimate {
                values: EdgeWeights::new(event.n(), run.marginals.clone())?,
                stderr: run.marginal_stderr,
                exact: false,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub n: usize,
    pub probability: f64,
    pub neg_log_p: f64,
    pub phi: f64,
    pub phi_minus: f64,
    pub phi_plus: f64,
    pub phi_converged: bool,
    /// `-log P / Φ̂`, `None` when `Φ̂ = 0`.
    pub ratio: Option<f64>,
}

/// Exact `-log P(event)` against solver values of `Φ_p` at `η` and `η ± ε`.
/// The two are related only asymptotically; rows carry no pass/fail.
pub fn tail_probability_report(
    h: &Graph,
    ns: &[usize],
    p: f64,
    eta: f64,
    eps: f64,
    solver: &SolverConfig,
) -> Result<Vec<TailRow>> {
    let mut rows = Vec::new();
    for &n in ns {
        let event = LowerTailEvent::new(h, n, p, eta)?;
        let ex = ExactConditional::new(&event)?;
        let hg = ex.hypergraph().clone();
        let phi_at = |e: f64| -> Result<(f64, bool)> {
            let e = e.clamp(1e-9, 1.0);
            let sol = solve_phi_upper_bound(&VariationalProblem::finite_p(&hg, p, e)?, solver)?;
            Ok((sol.value, sol.converged))
        };
        let (phi, ok) = phi_at(eta)?;
        let (phi_minus, ok_m) = phi_at(eta - eps)?;
        let (phi_plus, ok_p) = phi_at(eta + eps)?;
        let neg_log_p = ex.neg_log_probability().max(0.0);
        rows.push(TailRow {
            n,
            probability: ex.z(),
            neg_log_p,
            phi,
            phi_minus,
            phi_plus,
            phi_converged: ok && ok_m && ok_p,
            ratio: (phi > 0.0).then(|| neg_log_p / phi),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3_event(n: usize, p: f64, eta: f64) -> LowerTailEvent {
        LowerTailEvent::new(&Graph::complete(3), n, p, eta).unwrap()
    }

    fn triangle_free_count(n: usize) -> usize {
        let m = num_slots(n);
        (0u32..1 << m)
            .filter(|&g| {
                let g = Graph::from_slot_mask(n, g as u64);
                (0..n).all(|a| (a + 1..n).all(|b| (b + 1..n).all(|c| !(g.has_edge(a, b) && g.has_edge(b, c) && g.has_edge(a, c)))))
            })
            .count()
    }

    #[test]
    fn threshold_and_cap() {
        let e = k3_event(5, 0.4, 0.5);
        assert_eq!(e.total_copies(), 10);
        assert!((e.threshold() - 0.32).abs() < 1e-15);
        assert_eq!(e.cap(), 0);
        // 10 · 0.5³ · 0.8 = 1 exactly representable? the cap must not flap below 1
        let e = k3_event(5, 0.5, 0.8);
        assert_eq!(e.cap(), 1);
        assert!(LowerTailEvent::new(&Graph::complete(3), 5, 0.0, 0.5).is_err());
        assert!(LowerTailEvent::new(&Graph::complete(3), 2, 0.5, 0.5).is_err());
    }

    #[test]
    fn trivial_event_is_unconditional() {
        let p = 0.3;
        let e = k3_event(4, p, 1.0 / p.powi(3));
        assert!(e.is_trivial());
        let ex = ExactConditional::new(&e).unwrap();
        assert_eq!(ex.support_len(), 64);
        assert!((ex.z() - 1.0).abs() < 1e-12);
        assert!((ex.expect_count() - 4.0 * p.powi(3)).abs() < 1e-12);
        for q in ex.marginals() {
            assert!((q - p).abs() < 1e-12);
        }
    }

    #[test]
    fn triangle_free_normalizer() {
        let e = k3_event(4, 0.5, 0.5);
        assert_eq!(e.cap(), 0);
        let ex = ExactConditional::new(&e).unwrap();
        let tf = triangle_free_count(4);
        assert_eq!(ex.support_len(), tf);
        assert!((ex.z() - tf as f64 / 64.0).abs() < 1e-15);
        assert!((ex.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn enumeration_matches_direct_counting() {
        let e = LowerTailEvent::new(&Graph::cycle(4).unwrap(), 5, 0.5, 0.6).unwrap();
        let ex = ExactConditional::new(&e).unwrap();
        for (g, _, c) in ex.iter() {
            let graph = Graph::from_slot_mask(5, g as u64);
            assert_eq!(e.counter().count(&graph), c as u64);
            assert!(e.contains(&graph));
        }
        let outside = (0u32..1 << 10).filter(|g| ex.support.binary_search(g).is_err());
        for g in outside {
            assert!(!e.contains(&Graph::from_slot_mask(5, g as u64)));
        }
    }

    #[test]
    fn q_w_conventions() {
        let e = k3_event(4, 0.5, 0.5);
        let ex = ExactConditional::new(&e).unwrap();
        let full = ex.q_w(&[], &[]).unwrap();
        assert_eq!(full.as_slice(), ex.marginals().as_slice());
        let all: Vec<usize> = (0..6).collect();
        let q = ex.q_w(&all, &[false; 6]).unwrap();
        assert!(q.as_slice().iter().all(|&v| v == 0.5));
        // all six edges present is a triangle: zero probability
        assert!(matches!(ex.q_w(&all, &[true; 6]), Err(Error::ZeroProbability)));
    }

    #[test]
    fn q_w_one_slot_matches_enumeration() {
        let e = k3_event(4, 0.5, 0.5);
        let ex = ExactConditional::new(&e).unwrap();
        let q = ex.q_w(&[0], &[true]).unwrap();
        // direct: triangle-free graphs on 4 vertices containing slot 0
        let graphs: Vec<u32> = (0u32..64)
            .filter(|&g| g & 1 == 1 && e.contains(&Graph::from_slot_mask(4, g as u64)))
            .collect();
        // p = 1/2 makes every graph equally likely
        let z = graphs.len() as f64;
        assert_eq!(q.get(0), 0.5);
        for s in 1..6 {
            let direct = graphs.iter().filter(|&&g| g >> s & 1 == 1).count() as f64 / z;
            assert!((q.get(s) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn detailed_balance() {
        let e = k3_event(5, 0.4, 0.9);
        let p: f64 = 0.4;
        let m = 10;
        let pi = |g: &Graph| p.powi(g.edge_count() as i32) * (1.0 - p).powi((m - g.edge_count()) as i32);
        let move_prob = |from: &Graph, to: &Graph| -> f64 {
            if !e.contains(to) {
                return 0.0;
            }
            let a: f64 = if to.edge_count() > from.edge_count() { (p / (1.0 - p)).min(1.0) } else { ((1.0 - p) / p).min(1.0) };
            a / m as f64
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        while checked < 1000 {
            let x = Graph::from_slot_mask(5, rng.random_range(0u64..1 << 10));
            if !e.contains(&x) {
                continue;
            }
            let s = EdgeSlot(rng.random_range(0..10));
            let y = Graph::from_slot_mask(5, x.slot_mask() ^ (1 << s.0));
            let lhs = pi(&x) * move_prob(&x, &y);
            let rhs = if e.contains(&y) { pi(&y) * move_prob(&y, &x) } else { 0.0 };
            assert!((lhs - rhs).abs() <= 1e-12 * lhs.max(rhs).max(1e-300));
            checked += 1;
        }
    }

    #[test]
    fn chain_stays_in_event_and_is_reproducible() {
        let e = LowerTailEvent::new(&Graph::complete(3), 7, 0.5, 0.5).unwrap();
        let mut a = Chain::new(&e, 11, 2);
        let mut b = Chain::new(&e, 11, 2);
        for _ in 0..20_000 {
            a.step();
            b.step();
            assert!(e.contains_count(a.count()));
        }
        assert_eq!(a.graph(), b.graph());
        a.audit().unwrap();
        let mut c = Chain::new(&e, 11, 3);
        c.advance(20_000, 1 << 10).unwrap();
        assert_ne!(a.graph(), c.graph());
    }

    #[test]
    fn chain_streams_are_reproducible() {
        let e = k3_event(5, 0.4, 0.5);
        let cfg = ChainConfig {
            steps: 5_000,
            burn_in: 1_000,
            chains: 2,
            ..Default::default()
        };
        let a = McmcRun::run(&e, &cfg, None, true).unwrap();
        let b = McmcRun::run(&e, &cfg, None, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chains[0].records.len(), 500);
    }

    #[test]
    fn unconditioned_chain_density() {
        let p = 0.3;
        let e = LowerTailEvent::new(&Graph::complete(3), 6, p, 1.0 / p.powi(3)).unwrap();
        let cfg = ChainConfig {
            steps: 1_000_000,
            burn_in: 10_000,
            chains: 1,
            thin: Some(1),
            ..Default::default()
        };
        let run = McmcRun::run(&e, &cfg, None, false).unwrap();
        let edges: Vec<f64> = run.chains[0].edges.iter().map(|&x| x as f64 / 15.0).collect();
        let (mean, se, _) = batch_means(&edges);
        assert!((mean - p).abs() <= 3.0 * se, "{mean} ± {se}");
    }

    #[test]
    fn downward_closure_exhaustive() {
        for h in [Graph::complete(3), Graph::cycle(4).unwrap()] {
            let e = LowerTailEvent::new(&h, 5, 0.5, 0.5).unwrap();
            let inside: Vec<bool> = (0u64..1 << 10).map(|g| e.contains(&Graph::from_slot_mask(5, g))).collect();
            for g in 0usize..1 << 10 {
                if inside[g] {
                    for s in 0..10 {
                        assert!(inside[g & !(1 << s)]);
                    }
                }
            }
        }
    }

    #[test]
    fn size_bound() {
        let e = k3_event(8, 0.5, 0.5);
        assert!(matches!(ExactConditional::new(&e), Err(Error::Resource { .. })));
    }

    #[test]
    fn tail_report_trivial_and_triangle_free() {
        let cfg = SolverConfig::default();
        // at η = 1 the integer cap is still 0 here, so only Φ̂ vanishes
        let rows = tail_probability_report(&Graph::complete(3), &[4], 0.5, 1.0, 0.0, &cfg).unwrap();
        assert!(rows[0].phi < 1e-12);
        assert!(rows[0].neg_log_p > 0.0);
        let rows = tail_probability_report(&Graph::complete(3), &[4], 0.5, 8.0, 0.0, &cfg).unwrap();
        assert!(rows[0].neg_log_p.abs() < 1e-12);
        assert!(rows[0].phi < 1e-12);
        let rows = tail_probability_report(&Graph::complete(3), &[4], 0.5, 0.1, 0.05, &SolverConfig::default()).unwrap();
        let tf = triangle_free_count(4) as f64;
        assert!((rows[0].neg_log_p - (64.0 / tf).ln()).abs() < 1e-12);
    }
}
