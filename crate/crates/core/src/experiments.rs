//! End-to-end experiment runners.
//!
//! Each runner returns a plain result struct; `report` turns it into a
//! [`Report`] with the resolved config echoed in its header.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::KeyValues;
use crate::entropy::EdgeWeights;
use crate::error::{Error, Result};
use crate::graph::{automorphism_count, count_copies, num_slots, two_density, CopyHypergraph, EdgeSlot, Graph};
use crate::metrics::{
    closed_walk_trace, cut_norm_exact, cut_norm_heuristic, spectral_cut_bound, DeviationMatrix, EXACT_CUT_NORM_MAX_N,
};
use crate::numeric::{batch_means, binomial, compensated_sum, falling_factorial, quantile_sorted, CompensatedSum};
use crate::report::Report;
use crate::sampler::{ChainConfig, ExactConditional, LowerTailEvent, McmcRun};
use crate::variational::eta_threshold;

/// Relative-deviation levels used by the typicality runners.
pub const DEFAULT_EPS_GRID: [f64; 3] = [0.05, 0.1, 0.2];
pub const DEFAULT_ESS_FLOOR: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    Exact,
    Mcmc,
}

impl SamplingMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(SamplingMode::Exact),
            "mcmc" => Ok(SamplingMode::Mcmc),
            _ => Err(Error::Config(format!("mode must be exact or mcmc, got `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplingMode::Exact => "exact",
            SamplingMode::Mcmc => "mcmc",
        }
    }
}

/// `q = η^{1/e(H')} p`, capped at 1 for events that do not constrain.
pub fn constant_q(h_prime: &Graph, p: f64, eta: f64) -> f64 {
    (eta.powf(1.0 / h_prime.edge_count() as f64) * p).min(1.0)
}

/// `N_H(1) q^{e(H)}` from the closed form `(n)_v / |Aut(H)|`.
pub fn predicted_count_closed_form(h: &Graph, n: usize, q: f64) -> f64 {
    falling_factorial(n as u64, h.n() as u64) / automorphism_count(h) as f64 * q.powi(h.edge_count() as i32)
}

/// `E[N_H(q)]` summed over the enumerated copies at constant `q`.
pub fn predicted_count(h: &Graph, n: usize, q: f64) -> Result<f64> {
    let hg = CopyHypergraph::enumerate(h, n)?;
    crate::graph::expected_count(&hg, &EdgeWeights::constant(n, q)?)
}

/// Regime warning: the prediction is only proven above the threshold.
fn below_threshold(h_prime: &Graph, eta: f64) -> Result<bool> {
    let r = h_prime.edge_count();
    if r < 2 {
        return Ok(false);
    }
    Ok(eta <= eta_threshold(r)?.eta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypicalityRun {
    pub h_prime: Graph,
    pub h: Graph,
    pub n: usize,
    pub p: f64,
    pub eta: f64,
    pub mode: SamplingMode,
    pub chain: ChainConfig,
    pub eps: Vec<f64>,
    pub ess_floor: f64,
    pub bins: usize,
}

impl TypicalityRun {
    pub fn new(h_prime: Graph, h: Graph, n: usize, p: f64, eta: f64, mode: SamplingMode) -> Self {
        TypicalityRun {
            h_prime,
            h,
            n,
            p,
            eta,
            mode,
            chain: ChainConfig::default(),
            eps: DEFAULT_EPS_GRID.to_vec(),
            ess_floor: DEFAULT_ESS_FLOOR,
            bins: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviationProbability {
    pub eps: f64,
    pub probability: f64,
    /// Monte Carlo standard error; zero in exact mode.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypicalityResult {
    pub mode: SamplingMode,
    pub q: f64,
    pub predicted: f64,
    pub predicted_closed_form: f64,
    pub mean: f64,
    pub variance: f64,
    pub stderr: f64,
    /// `(mean - predicted) / predicted`.
    pub relative_deviation: f64,
    pub deviations: Vec<DeviationProbability>,
    pub histogram: Vec<HistogramBin>,
    pub event_cap: u64,
    pub conditioning_mean: f64,
    pub samples: usize,
    pub ess: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub audits_passed: Option<u64>,
    pub reliable: bool,
    pub below_threshold: bool,
}

fn histogram(values: &[(f64, f64)], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let hi = values.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        let total = compensated_sum(values.iter().map(|v| v.1));
        return vec![HistogramBin { lo, hi, mass: total }];
    }
    let width = (hi - lo) / bins as f64;
    let mut acc = vec![CompensatedSum::new(); bins];
    for &(x, w) in values {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        acc[k].add(w);
    }
    acc.iter()
        .enumerate()
        .map(|(k, s)| HistogramBin {
            lo: lo + k as f64 * width,
            hi: lo + (k + 1) as f64 * width,
            mass: s.value(),
        })
        .collect()
}

pub fn run_typicality(run: &TypicalityRun) -> Result<TypicalityResult> {
    let q = constant_q(&run.h_prime, run.p, run.eta);
    let predicted = predicted_count(&run.h, run.n, q)?;
    let predicted_closed_form = predicted_count_closed_form(&run.h, run.n, q);
    let event = LowerTailEvent::new(&run.h_prime, run.n, run.p, run.eta)?;
    let below = below_threshold(&run.h_prime, run.eta)?;
    let same = run.h == run.h_prime;
    match run.mode {
        SamplingMode::Exact => {
            let ex = ExactConditional::new(&event)?;
            let law: Vec<(f64, f64)> = ex
                .iter()
                .map(|(mask, prob, count)| {
                    let c = if same {
                        count as f64
                    } else {
                        count_copies(&run.h, &Graph::from_slot_mask(run.n, mask as u64)) as f64
                    };
                    (c, prob)
                })
                .collect();
            let mean = compensated_sum(law.iter().map(|(c, w)| c * w));
            let variance = compensated_sum(law.iter().map(|(c, w)| (c - mean) * (c - mean) * w));
            let deviations = run
                .eps
                .iter()
                .map(|&eps| DeviationProbability {
                    eps,
                    probability: compensated_sum(
                        law.iter().filter(|(c, _)| (c - predicted).abs() > eps * predicted).map(|(_, w)| *w),
                    ),
                    stderr: 0.0,
                })
                .collect();
            Ok(TypicalityResult {
                mode: run.mode,
                q,
                predicted,
                predicted_closed_form,
                mean,
                variance,
                stderr: 0.0,
                relative_deviation: (mean - predicted) / predicted,
                deviations,
                histogram: histogram(&law, run.bins),
                event_cap: event.cap(),
                conditioning_mean: ex.expect_count(),
                samples: ex.support_len(),
                ess: None,
                acceptance_rate: None,
                audits_passed: None,
                reliable: true,
                below_threshold: below,
            })
        }
        SamplingMode::Mcmc => {
            let h = run.h.clone();
            let observer = move |g: &Graph| vec![count_copies(&h, g) as f64];
            let mcmc = if same {
                McmcRun::run(&event, &run.chain, None, false)?
            } else {
                McmcRun::run(&event, &run.chain, Some(&observer), false)?
            };
            let series: Vec<Vec<f64>> = mcmc
                .chains
                .iter()
                .map(|c| if same { c.counts.clone() } else { c.extra.iter().map(|e| e[0]).collect() })
                .collect();
            let all: Vec<f64> = series.iter().flatten().copied().collect();
            let total = all.len();
            if total == 0 {
                return Err(Error::InvalidInput("no samples retained; increase steps or lower thin".into()));
            }
            let mean = compensated_sum(all.iter().copied()) / total as f64;
            let variance = if total > 1 {
                compensated_sum(all.iter().map(|x| (x - mean) * (x - mean))) / (total - 1) as f64
            } else {
                0.0
            };
            let ess: f64 = series.iter().map(|s| batch_means(s).2).sum();
            let stderr = (variance / ess.max(1.0)).sqrt();
            let deviations = run
                .eps
                .iter()
                .map(|&eps| {
                    let hits = all.iter().filter(|c| (*c - predicted).abs() > eps * predicted).count();
                    let prob = hits as f64 / total as f64;
                    DeviationProbability {
                        eps,
                        probability: prob,
                        stderr: (prob * (1.0 - prob) / ess.max(1.0)).sqrt(),
                    }
                })
                .collect();
            let weighted: Vec<(f64, f64)> = all.iter().map(|&c| (c, 1.0 / total as f64)).collect();
            Ok(TypicalityResult {
                mode: run.mode,
                q,
                predicted,
                predicted_closed_form,
                mean,
                variance,
                stderr,
                relative_deviation: (mean - predicted) / predicted,
                deviations,
                histogram: histogram(&weighted, run.bins),
                event_cap: event.cap(),
                conditioning_mean: mcmc.mean_count,
                samples: total,
                ess: Some(ess),
                acceptance_rate: Some(mcmc.acceptance_rate),
                audits_passed: Some(mcmc.audits_passed),
                reliable: ess >= run.ess_floor,
                below_threshold: below,
            })
        }
    }
}

impl TypicalityResult {
    pub fn report(&self, config: &KeyValues) -> Report {
        let mut r = Report::new("typicality", config);
        r.summary("mode", self.mode.name());
        r.summary("q", self.q);
        r.summary("predicted_mean", self.predicted);
        r.summary("predicted_mean_closed_form", self.predicted_closed_form);
        r.summary("mean", self.mean);
        r.summary("variance", self.variance);
        r.summary("stderr", self.stderr);
        r.summary("relative_deviation", self.relative_deviation);
        r.summary("event_cap", self.event_cap);
        r.summary("conditioning_mean", self.conditioning_mean);
        r.summary("samples", self.samples);
        if let Some(ess) = self.ess {
            r.summary("ess", ess);
        }
        if let Some(a) = self.acceptance_rate {
            r.summary("acceptance_rate", a);
        }
        if let Some(a) = self.audits_passed {
            r.summary("audits_passed", a);
        }
        r.summary("reliable", self.reliable);
        r.summary("below_threshold", self.below_threshold);
        let sec = r.section("deviation", &["eps", "probability", "stderr"]);
        for d in &self.deviations {
            sec.push(vec![d.eps.into(), d.probability.into(), d.stderr.into()]);
        }
        let sec = r.section("histogram", &["lo", "hi", "mass", "prediction"]);
        for b in &self.histogram {
            sec.push(vec![b.lo.into(), b.hi.into(), b.mass.into(), self.predicted.into()]);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutNormRun {
    pub h: Graph,
    pub n: usize,
    pub p: f64,
    pub eta: f64,
    pub chain: ChainConfig,
    pub trace_ks: Vec<usize>,
    pub heuristic_restarts: usize,
    pub bootstrap: usize,
    pub eps: Vec<f64>,
}

impl CutNormRun {
    pub fn new(h: Graph, n: usize, p: f64, eta: f64) -> Self {
        CutNormRun {
            h,
            n,
            p,
            eta,
            chain: ChainConfig {
                steps: 100_000,
                chains: 4,
                ..ChainConfig::default()
            },
            trace_ks: vec![2],
            heuristic_restarts: 16,
            bootstrap: 1000,
            eps: DEFAULT_EPS_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutNormSample {
    pub chain: usize,
    /// Exact cut norm over `p`, `None` above the exact size limit.
    pub exact: Option<f64>,
    pub heuristic: f64,
    pub spectral: f64,
    pub traces: Vec<f64>,
}

impl CutNormSample {
    /// Exact value when available, otherwise the heuristic lower bound.
    pub fn value(&self) -> f64 {
        self.exact.unwrap_or(self.heuristic)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutNormResult {
    pub q: f64,
    pub exact: bool,
    pub samples: Vec<CutNormSample>,
    pub median: f64,
    pub median_ci: (f64, f64),
    pub spectral_median: f64,
    pub exceedance: Vec<(f64, f64)>,
    pub spectral_dominates: bool,
    pub ess: f64,
    pub acceptance_rate: f64,
    pub audits_passed: u64,
    pub below_threshold: bool,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    quantile_sorted(values, 0.5)
}

/// Percentile bootstrap 95% interval of the median.
pub fn bootstrap_median_ci(values: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    if values.is_empty() || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut medians: Vec<f64> = (0..resamples)
        .map(|_| {
            let mut draw: Vec<f64> = (0..values.len()).map(|_| values[rng.random_range(0..values.len())]).collect();
            median(&mut draw)
        })
        .collect();
    medians.sort_by(f64::total_cmp);
    (quantile_sorted(&medians, 0.025), quantile_sorted(&medians, 0.975))
}

pub fn run_cutnorm_typicality(run: &CutNormRun) -> Result<CutNormResult> {
    let q = constant_q(&run.h, run.p, run.eta);
    let event = LowerTailEvent::new(&run.h, run.n, run.p, run.eta)?;
    let exact = run.n <= EXACT_CUT_NORM_MAX_N;
    let p = run.p;
    let ks = run.trace_ks.clone();
    let restarts = run.heuristic_restarts;
    let seed = run.chain.seed;
    let observer = move |g: &Graph| -> Vec<f64> {
        let dev = DeviationMatrix::graph_minus_constant(g, q);
        let mut out = Vec::with_capacity(3 + ks.len());
        out.push(if exact { cut_norm_exact(&dev).map(|c| c / p).unwrap_or(f64::NAN) } else { f64::NAN });
        out.push(cut_norm_heuristic(&dev, restarts, seed) / p);
        out.push(spectral_cut_bound(&dev).map(|c| c / p).unwrap_or(f64::NAN));
        for &k in &ks {
            out.push(closed_walk_trace(g, q, k).map(|t| t.trace).unwrap_or(f64::NAN));
        }
        out
    };
    let mcmc = McmcRun::run(&event, &run.chain, Some(&observer), false)?;
    let samples: Vec<CutNormSample> = mcmc
        .chains
        .iter()
        .flat_map(|c| {
            c.extra.iter().map(move |e| CutNormSample {
                chain: c.index,
                exact: exact.then_some(e[0]),
                heuristic: e[1],
                spectral: e[2],
                traces: e[3..].to_vec(),
            })
        })
        .collect();
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples retained; increase steps or lower thin".into()));
    }
    let values: Vec<f64> = samples.iter().map(CutNormSample::value).collect();
    let mut sorted = values.clone();
    let med = median(&mut sorted);
    let mut spectral: Vec<f64> = samples.iter().map(|s| s.spectral).collect();
    let spectral_median = median(&mut spectral);
    let spectral_dominates = samples.iter().all(|s| s.spectral >= s.value() - 1e-12);
    let exceedance = run
        .eps
        .iter()
        .map(|&eps| (eps, values.iter().filter(|&&v| v > eps).count() as f64 / values.len() as f64))
        .collect();
    let ess = mcmc
        .chains
        .iter()
        .map(|c| batch_means(&c.extra.iter().map(|e| if exact { e[0] } else { e[1] }).collect::<Vec<_>>()).2)
        .sum();
    Ok(CutNormResult {
        q,
        exact,
        median: med,
        median_ci: bootstrap_median_ci(&values, run.bootstrap, run.chain.seed),
        spectral_median,
        exceedance,
        spectral_dominates,
        samples,
        ess,
        acceptance_rate: mcmc.acceptance_rate,
        audits_passed: mcmc.audits_passed,
        below_threshold: below_threshold(&run.h, run.eta)?,
    })
}

impl CutNormResult {
    pub fn report(&self, config: &KeyValues, trace_ks: &[usize]) -> Report {
        let mut r = Report::new("cutnorm_typicality", config);
        r.header("cut_norm", "labeled");
        r.summary("q", self.q);
        r.summary("exact", self.exact);
        r.summary("samples", self.samples.len());
        r.summary("median_over_p", self.median);
        r.summary("median_ci_lo", self.median_ci.0);
        r.summary("median_ci_hi", self.median_ci.1);
        r.summary("spectral_median_over_p", self.spectral_median);
        r.summary("spectral_dominates", self.spectral_dominates);
        r.summary("ess", self.ess);
        r.summary("acceptance_rate", self.acceptance_rate);
        r.summary("audits_passed", self.audits_passed);
        r.summary("below_threshold", self.below_threshold);
        let sec = r.section("exceedance", &["eps", "fraction"]);
        for &(e, f) in &self.exceedance {
            sec.push(vec![e.into(), f.into()]);
        }
        let mut cols: Vec<String> = vec!["chain".into(), "exact".into(), "heuristic".into(), "spectral".into()];
        cols.extend(trace_ks.iter().map(|k| format!("trace_{}", 2 * k)));
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let sec = r.section("samples", &col_refs);
        for s in &self.samples {
            let mut row = vec![s.chain.into(), s.exact.unwrap_or(f64::NAN).into(), s.heuristic.into(), s.spectral.into()];
            row.extend(s.traces.iter().map(|&t| t.into()));
            sec.push(row);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalStructureRun {
    pub h: Graph,
    pub n: usize,
    pub p: f64,
    pub eta: f64,
    pub w_sizes: Vec<usize>,
    pub sets_per_size: usize,
    pub seed: u64,
    /// Constant compared against; `None` means `η^{1/e(H)} p`.
    pub reference: Option<f64>,
}

impl MarginalStructureRun {
    pub fn new(h: Graph, n: usize, p: f64, eta: f64, w_sizes: Vec<usize>) -> Self {
        MarginalStructureRun {
            h,
            n,
            p,
            eta,
            w_sizes,
            sets_per_size: 16,
            seed: 0,
            reference: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalDistance {
    pub size: usize,
    pub set_index: usize,
    pub w: Vec<usize>,
    pub assignment: u32,
    /// `P(Y_W = a | event) / (number of sets of this size)`.
    pub weight: f64,
    /// `‖q^W - q‖_□ / p`.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeSummary {
    pub size: usize,
    pub sets: usize,
    pub mean: f64,
    pub max: f64,
    pub exceedance: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarginalStructureResult {
    pub reference: f64,
    pub rows: Vec<MarginalDistance>,
    pub sizes: Vec<SizeSummary>,
}

fn w_sets(m: usize, k: usize, limit: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    if binomial(m as u64, k as u64) as usize <= limit {
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(k);
        fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == k {
                out.push(cur.clone());
                return;
            }
            for s in start..m {
                cur.push(s);
                rec(s + 1, m, k, cur, out);
                cur.pop();
            }
        }
        rec(0, m, k, &mut cur, &mut out);
        out
    } else {
        (0..limit)
            .map(|_| {
                let mut w = sample_indices(rng, m, k).into_vec();
                w.sort_unstable();
                w
            })
            .collect()
    }
}

pub fn run_marginal_structure(run: &MarginalStructureRun) -> Result<MarginalStructureResult> {
    let event = LowerTailEvent::new(&run.h, run.n, run.p, run.eta)?;
    let ex = ExactConditional::new(&event)?;
    run_marginal_structure_on(&ex, run)
}

/// Same as [`run_marginal_structure`] on an already enumerated law.
pub fn run_marginal_structure_on(ex: &ExactConditional, run: &MarginalStructureRun) -> Result<MarginalStructureResult> {
    let m = num_slots(run.n);
    let reference = run.reference.unwrap_or_else(|| constant_q(&run.h, run.p, run.eta));
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut rows = Vec::new();
    let mut sizes = Vec::new();
    for &k in &run.w_sizes {
        if k > m {
            return Err(Error::InvalidInput(format!("|W| = {k} exceeds {m} slots")));
        }
        let sets = w_sets(m, k, run.sets_per_size.max(1), &mut rng);
        let per_set: Vec<Vec<MarginalDistance>> = sets
            .par_iter()
            .enumerate()
            .map(|(idx, w)| -> Result<Vec<MarginalDistance>> {
                let mask = w.iter().fold(0u32, |acc, &s| acc | 1 << s);
                let mut out = Vec::new();
                for (a, mass) in ex.w_assignments(mask) {
                    let slice = ex.condition(mask, a)?;
                    let qw = slice.q_w();
                    let dev = DeviationMatrix::weights_minus_constant(qw.as_slice(), run.n, reference);
                    out.push(MarginalDistance {
                        size: k,
                        set_index: idx,
                        w: w.clone(),
                        assignment: a,
                        weight: mass / sets.len() as f64,
                        distance: cut_norm_exact(&dev)? / run.p,
                    });
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let flat: Vec<MarginalDistance> = per_set.into_iter().flatten().collect();
        let total = compensated_sum(flat.iter().map(|r| r.weight));
        let mean = compensated_sum(flat.iter().map(|r| r.weight * r.distance)) / total;
        let max = flat.iter().map(|r| r.distance).fold(0.0, f64::max);
        let exceedance = DEFAULT_EPS_GRID
            .iter()
            .map(|&e| {
                (
                    e,
                    compensated_sum(flat.iter().filter(|r| r.distance > e).map(|r| r.weight)) / total,
                )
            })
            .collect();
        sizes.push(SizeSummary {
            size: k,
            sets: sets.len(),
            mean,
            max,
            exceedance,
        });
        rows.extend(flat);
    }
    Ok(MarginalStructureResult { reference, rows, sizes })
}

impl MarginalStructureResult {
    pub fn report(&self, config: &KeyValues) -> Report {
        let mut r = Report::new("marginal_structure", config);
        r.header("cut_norm", "labeled");
        r.summary("reference", self.reference);
        let sec = r.section("sizes", &["size", "sets", "mean", "max", "p_gt_0.05", "p_gt_0.1", "p_gt_0.2"]);
        for s in &self.sizes {
            let mut row = vec![s.size.into(), s.sets.into(), s.mean.into(), s.max.into()];
            row.extend(s.exceedance.iter().map(|e| e.1.into()));
            sec.push(row);
        }
        let sec = r.section("distances", &["size", "set", "w", "assignment", "weight", "distance"]);
        for d in &self.rows {
            let w: Vec<String> = d.w.iter().map(|s| s.to_string()).collect();
            sec.push(vec![
                d.size.into(),
                d.set_index.into(),
                w.join(" ").into(),
                d.assignment.into(),
                d.weight.into(),
                d.distance.into(),
            ]);
        }
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecomposition {
    pub variance: f64,
    /// `Σ Cov(Y_A, Y_A')` over pairs sharing a slot, `A = A'` included.
    pub intersecting: f64,
    /// `Σ Cov(Y_A, Y_A')` over slot-disjoint pairs.
    pub disjoint: f64,
    pub intersecting_pairs: u64,
    pub disjoint_pairs: u64,
    /// `Σ E[Y_A Y_A']` over ordered vertex-disjoint pairs.
    pub vertex_disjoint_moment: f64,
    /// `2 E[N_{H ⊔ H}]`, which equals the previous field.
    pub union_count_doubled: f64,
    pub m2: (i64, i64),
    pub m2_union: (i64, i64),
}

impl VarianceDecomposition {
    pub fn split_total(&self) -> f64 {
        self.intersecting + self.disjoint
    }

    pub fn split_error(&self) -> f64 {
        (self.split_total() - self.variance).abs()
    }
}

fn vertex_mask(slots: &[u32]) -> u64 {
    slots.iter().fold(0u64, |acc, &s| {
        let (a, b) = EdgeSlot(s).pair();
        acc | 1 << a | 1 << b
    })
}

fn direct_variance(ex: &ExactConditional, masks: &[u32]) -> f64 {
    let law: Vec<(f64, f64)> = ex
        .iter()
        .map(|(g, w, _)| (masks.iter().filter(|&&a| g & a == a).count() as f64, w))
        .collect();
    let mean = compensated_sum(law.iter().map(|(c, w)| c * w));
    compensated_sum(law.iter().map(|(c, w)| (c - mean) * (c - mean) * w))
}

/// Splits `Var(N_H)` under the exact law into intersecting and disjoint pairs.
pub fn variance_decomposition(h: &Graph, ex: &ExactConditional) -> Result<VarianceDecomposition> {
    let hg = CopyHypergraph::enumerate(h, ex.n())?;
    let masks: Vec<u32> = hg.iter().map(|e| e.iter().fold(0u32, |acc, &s| acc | 1 << s)).collect();
    let vmasks: Vec<u64> = hg.iter().map(vertex_mask).collect();
    let firsts: Vec<f64> = masks.iter().map(|&m| ex.expect_monomial(m)).collect();
    let rows: Vec<(f64, f64, u64, u64, f64)> = (0..masks.len())
        .into_par_iter()
        .map(|i| {
            let mut inter = CompensatedSum::new();
            let mut disj = CompensatedSum::new();
            let mut vd = CompensatedSum::new();
            let (mut ni, mut nd) = (0u64, 0u64);
            for j in 0..masks.len() {
                let joint = ex.expect_monomial(masks[i] | masks[j]);
                let cov = joint - firsts[i] * firsts[j];
                if masks[i] & masks[j] != 0 {
                    inter.add(cov);
                    ni += 1;
                } else {
                    disj.add(cov);
                    nd += 1;
                }
                if vmasks[i] & vmasks[j] == 0 {
                    vd.add(joint);
                }
            }
            (inter.value(), disj.value(), ni, nd, vd.value())
        })
        .collect();
    let union = h.disjoint_union(h);
    let union_count_doubled = if union.n() <= ex.n() { 2.0 * ex.expect_pattern_count(&union)? } else { 0.0 };
    let m2 = two_density(h)?;
    let m2_union = two_density(&union)?;
    Ok(VarianceDecomposition {
        variance: direct_variance(ex, &masks),
        intersecting: compensated_sum(rows.iter().map(|r| r.0)),
        disjoint: compensated_sum(rows.iter().map(|r| r.1)),
        intersecting_pairs: rows.iter().map(|r| r.2).sum(),
        disjoint_pairs: rows.iter().map(|r| r.3).sum(),
        vertex_disjoint_moment: compensated_sum(rows.iter().map(|r| r.4)),
        union_count_doubled,
        m2: (*m2.numer(), *m2.denom()),
        m2_union: (*m2_union.numer(), *m2_union.denom()),
    })
}

impl VarianceDecomposition {
    pub fn report(&self, config: &KeyValues) -> Report {
        let mut r = Report::new("variance", config);
        r.summary("variance", self.variance);
        r.summary("intersecting", self.intersecting);
        r.summary("disjoint", self.disjoint);
        r.summary("split_total", self.split_total());
        r.summary("split_error", self.split_error());
        r.summary("intersecting_pairs", self.intersecting_pairs);
        r.summary("disjoint_pairs", self.disjoint_pairs);
        r.summary("vertex_disjoint_moment", self.vertex_disjoint_moment);
        r.summary("union_count_doubled", self.union_count_doubled);
        r.summary("m2", format!("{}/{}", self.m2.0, self.m2.1));
        r.summary("m2_union", format!("{}/{}", self.m2_union.0, self.m2_union.1));
        r
    }
}
