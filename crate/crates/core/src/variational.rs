//! Lower-tail entropic variational problems on a hypergraph of edge slots.
//!
//! Minimize `Σ_e i_p(q_e)` (finite `p`) or `Σ_e h(x_e)` (sparse limit, `x = q/p`)
//! subject to `t(q) = Σ_A Π_{a∈A} q_a <= η · t(baseline)`. The solver is a
//! spectral projected gradient method on a quadratic-penalty objective with
//! geometric penalty escalation and multiple starts, followed by an exact
//! line search along the constant direction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::config::{parse_value, KeyValues};
use crate::entropy::{h, h_prime, i_p_derivative, i_p_unchecked, EdgeWeights};
use crate::error::{Error, Result};
use crate::graph::{num_slots, CopyHypergraph, Graph, Hypergraph};
use crate::metrics::{cut_norm_exact, cut_norm_heuristic, DeviationMatrix, EXACT_CUT_NORM_MAX_N};
use crate::numeric::{compensated_sum, fmt_f64, linear_fit};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    FiniteP { p: f64 },
    SparseLimit,
}

impl Objective {
    #[inline]
    fn value(self, x: f64) -> f64 {
        match self {
            Objective::FiniteP { p } => i_p_unchecked(x, p),
            Objective::SparseLimit => h(x),
        }
    }

    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Objective::FiniteP { p } => i_p_derivative(x, p),
            Objective::SparseLimit => h_prime(x),
        }
    }

    /// Unconstrained minimizer of the per-slot objective.
    fn scale(self) -> f64 {
        match self {
            Objective::FiniteP { p } => p,
            Objective::SparseLimit => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VariationalProblem<'a> {
    hypergraph: &'a Hypergraph,
    n: Option<usize>,
    objective: Objective,
    eta: f64,
    budget: f64,
}

impl<'a> VariationalProblem<'a> {
    /// `Φ_p(H, η)` on a copy hypergraph.
    pub fn finite_p(hg: &'a CopyHypergraph, p: f64, eta: f64) -> Result<Self> {
        Self::build(hg.hypergraph(), Some(hg.n()), Objective::FiniteP { p }, eta)
    }

    /// Sparse limit `Φ(H, η)` on a copy hypergraph.
    pub fn sparse_limit(hg: &'a CopyHypergraph, eta: f64) -> Result<Self> {
        Self::build(hg.hypergraph(), Some(hg.n()), Objective::SparseLimit, eta)
    }

    /// A problem on an arbitrary uniform hypergraph of slots.
    pub fn general(hg: &'a Hypergraph, objective: Objective, eta: f64) -> Result<Self> {
        Self::build(hg, None, objective, eta)
    }

    fn build(hypergraph: &'a Hypergraph, n: Option<usize>, objective: Objective, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::InvalidInput(format!("eta must lie in (0, 1], got {eta}")));
        }
        if hypergraph.is_empty() {
            return Err(Error::InvalidInput("variational problem needs a nonempty hypergraph".into()));
        }
        if let Objective::FiniteP { p } = objective {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidInput(format!("p must lie in (0, 1), got {p}")));
            }
        }
        let base = objective.scale().powi(hypergraph.rank() as i32);
        let budget = eta * hypergraph.edge_count() as f64 * base;
        Ok(VariationalProblem {
            hypergraph,
            n,
            objective,
            eta,
            budget,
        })
    }

    pub fn hypergraph(&self) -> &Hypergraph {
        self.hypergraph
    }

    pub fn objective(&self) -> Objective {
        self.objective
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn dimension(&self) -> usize {
        self.hypergraph.num_vertices()
    }

    /// Count budget `η · t(p)`, or `η · e(𝓗)` in the sparse limit.
    pub fn budget(&self) -> f64 {
        self.budget
    }

    /// The constant feasible point `η^{1/r}` times `p` (or 1).
    pub fn constant_point(&self) -> f64 {
        self.eta.powf(1.0 / self.hypergraph.rank() as f64) * self.objective.scale()
    }

    /// Objective at the constant point, `v(𝓗) · i_p(η^{1/r}p)` or `v(𝓗) · h(η^{1/r})`.
    pub fn constant_value(&self) -> f64 {
        self.dimension() as f64 * self.objective.value(self.constant_point())
    }

    pub fn entropy(&self, x: &[f64]) -> f64 {
        compensated_sum(x.iter().map(|&v| self.objective.value(v)))
    }

    pub fn count(&self, x: &[f64]) -> f64 {
        self.hypergraph.expected_count(x).expect("dimension checked")
    }

    /// `max(0, t(x) - budget) / budget`.
    pub fn feasibility_gap(&self, x: &[f64]) -> f64 {
        (self.count(x) / self.budget - 1.0).max(0.0)
    }

    fn bounds(&self, eps: f64) -> (f64, f64) {
        match self.objective {
            Objective::FiniteP { .. } => (eps, 1.0 - eps),
            Objective::SparseLimit => (eps, 1.0),
        }
    }
}

/// Entropy plus `μ · max(0, t/budget - 1)²`.
pub struct PenalizedObjective<'p, 'a> {
    prob: &'p VariationalProblem<'a>,
    mu: f64,
}

impl<'p, 'a> PenalizedObjective<'p, 'a> {
    pub fn new(prob: &'p VariationalProblem<'a>, mu: f64) -> Self {
        PenalizedObjective { prob, mu }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let v = self.prob.feasibility_gap(x);
        self.prob.entropy(x) + self.mu * v * v
    }

    pub fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let t = self
            .prob
            .hypergraph
            .expected_count_with_gradient(x, grad)
            .expect("dimension checked");
        let viol = (t / self.prob.budget - 1.0).max(0.0);
        let c = 2.0 * self.mu * viol / self.prob.budget;
        let obj = self.prob.objective;
        for (g, &xi) in grad.iter_mut().zip(x) {
            *g = obj.derivative(xi) + c * *g;
        }
        self.prob.entropy(x) + self.mu * viol * viol
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Random starts in addition to the constant start.
    pub restarts: usize,
    pub seed: u64,
    pub feasibility_tol: f64,
    pub improvement_tol: f64,
    pub stall_window: usize,
    pub eps_num: f64,
    pub mu_initial: f64,
    pub mu_growth: f64,
    pub mu_max: f64,
    pub max_iterations: usize,
    pub kkt_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            restarts: 8,
            seed: 0,
            feasibility_tol: 1e-8,
            improvement_tol: 1e-10,
            stall_window: 50,
            eps_num: 1e-9,
            mu_initial: 10.0,
            mu_growth: 10.0,
            mu_max: 1e12,
            max_iterations: 5000,
            kkt_tol: 1e-5,
        }
    }
}

impl SolverConfig {
    pub const KEYS: &'static [&'static str] = &[
        "restarts",
        "seed",
        "feasibility_tol",
        "improvement_tol",
        "stall_window",
        "eps_num",
        "mu_initial",
        "mu_growth",
        "mu_max",
        "max_iterations",
        "kkt_tol",
    ];

    /// Reads the solver keys present in `kv`; other keys are left alone.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut c = SolverConfig::default();
        for (k, v) in kv.iter() {
            match k.as_str() {
                "restarts" => c.restarts = parse_value(k, v)?,
                "seed" => c.seed = parse_value(k, v)?,
                "feasibility_tol" => c.feasibility_tol = parse_value(k, v)?,
                "improvement_tol" => c.improvement_tol = parse_value(k, v)?,
                "stall_window" => c.stall_window = parse_value(k, v)?,
                "eps_num" => c.eps_num = parse_value(k, v)?,
                "mu_initial" => c.mu_initial = parse_value(k, v)?,
                "mu_growth" => c.mu_growth = parse_value(k, v)?,
                "mu_max" => c.mu_max = parse_value(k, v)?,
                "max_iterations" => c.max_iterations = parse_value(k, v)?,
                "kkt_tol" => c.kkt_tol = parse_value(k, v)?,
                _ => {}
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("restarts", self.restarts);
        kv.set("seed", self.seed);
        kv.set("feasibility_tol", self.feasibility_tol);
        kv.set("improvement_tol", self.improvement_tol);
        kv.set("stall_window", self.stall_window);
        kv.set("eps_num", self.eps_num);
        kv.set("mu_initial", self.mu_initial);
        kv.set("mu_growth", self.mu_growth);
        kv.set("mu_max", self.mu_max);
        kv.set("max_iterations", self.max_iterations);
        kv.set("kkt_tol", self.kkt_tol);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.eps_num > 0.0 && self.eps_num < 0.5) {
            return bad("eps_num must lie in (0, 0.5)");
        }
        if !(self.mu_initial > 0.0) || !(self.mu_growth > 1.0) || !(self.mu_max >= self.mu_initial) {
            return bad("need mu_initial > 0, mu_growth > 1, mu_max >= mu_initial");
        }
        if !(self.feasibility_tol > 0.0) || !(self.improvement_tol >= 0.0) || !(self.kkt_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.stall_window == 0 || self.max_iterations == 0 {
            return bad("stall_window and max_iterations must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariationalSolution {
    /// Minimizer in slot order (rescaled `x` in the sparse limit).
    pub q_star: Vec<f64>,
    pub value: f64,
    pub feasibility_gap: f64,
    pub multiplier: f64,
    pub projected_gradient_norm: f64,
    pub restarts_used: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Cut norm of `q_star` minus its mean (ℓ∞ when no ambient `n` is known).
    pub distance_to_constant: f64,
    pub linf_to_constant: f64,
    /// Start that produced this point; 0 is the constant start.
    pub start_index: usize,
}

impl VariationalSolution {
    pub fn edge_weights(&self, n: usize) -> Result<EdgeWeights> {
        EdgeWeights::new(n, self.q_star.clone())
    }

    /// One value per line, 17 significant digits.
    pub fn q_star_text(&self) -> String {
        let mut s = String::with_capacity(self.q_star.len() * 24);
        for v in &self.q_star {
            s.push_str(&fmt_f64(*v));
            s.push('\n');
        }
        s
    }
}

struct SpgOutcome {
    iterations: usize,
    settled: bool,
}

fn project(x: &mut [f64], lo: f64, hi: f64) {
    x.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
}

/// Spectral projected gradient with nonmonotone backtracking.
fn spg(obj: &PenalizedObjective, x: &mut [f64], lo: f64, hi: f64, cfg: &SolverConfig) -> SpgOutcome {
    const MEMORY: usize = 10;
    let m = x.len();
    let mut g = vec![0.0; m];
    let mut f = obj.value_and_gradient(x, &mut g);
    let mut xt = vec![0.0; m];
    let mut gt = vec![0.0; m];
    let mut d = vec![0.0; m];
    let mut recent: Vec<f64> = vec![f];
    let mut window: Vec<f64> = vec![f];
    let pg_inf = |x: &[f64], g: &[f64]| {
        x.iter()
            .zip(g)
            .map(|(&xi, &gi)| ((xi - gi).clamp(lo, hi) - xi).abs())
            .fold(0.0, f64::max)
    };
    let mut alpha = 1.0 / pg_inf(x, &g).max(1e-12);
    for it in 0..cfg.max_iterations {
        if pg_inf(x, &g) < 1e-14 {
            return SpgOutcome {
                iterations: it,
                settled: true,
            };
        }
        let mut gd = 0.0;
        for i in 0..m {
            d[i] = (x[i] - alpha * g[i]).clamp(lo, hi) - x[i];
            gd += g[i] * d[i];
        }
        if gd >= 0.0 {
            return SpgOutcome {
                iterations: it,
                settled: true,
            };
        }
        let fmax = recent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut lambda = 1.0;
        let ft = loop {
            for i in 0..m {
                xt[i] = (x[i] + lambda * d[i]).clamp(lo, hi);
            }
            let ft = obj.value(&xt);
            if ft <= fmax + 1e-4 * lambda * gd {
                break Some(ft);
            }
            let denom = ft - f - lambda * gd;
            let trial = if denom > 0.0 { -0.5 * lambda * lambda * gd / denom } else { 0.5 * lambda };
            lambda = if trial >= 0.1 * lambda && trial <= 0.9 * lambda { trial } else { 0.5 * lambda };
            if lambda < 1e-20 {
                break None;
            }
        };
        if ft.is_none() {
            return SpgOutcome {
                iterations: it,
                settled: true,
            };
        }
        let ft = obj.value_and_gradient(&xt, &mut gt);
        let (mut sts, mut sty) = (0.0, 0.0);
        for i in 0..m {
            let s = xt[i] - x[i];
            sts += s * s;
            sty += s * (gt[i] - g[i]);
        }
        alpha = if sty <= 0.0 { 1e12 } else { (sts / sty).clamp(1e-14, 1e12) };
        x.copy_from_slice(&xt);
        std::mem::swap(&mut g, &mut gt);
        f = ft;
        recent.push(f);
        if recent.len() > MEMORY {
            recent.remove(0);
        }
        window.push(f);
        if window.len() > cfg.stall_window + 1 {
            window.remove(0);
            let scale = f.abs().max(1.0);
            if window[0] - f < cfg.improvement_tol * scale {
                return SpgOutcome {
                    iterations: it + 1,
                    settled: true,
                };
            }
        }
    }
    SpgOutcome {
        iterations: cfg.max_iterations,
        settled: false,
    }
}

fn shifted(x: &[f64], t: f64, lo: f64, hi: f64, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v + t).clamp(lo, hi);
    }
}

/// Moves `x` along the all-ones direction to the best feasible point.
fn polish(prob: &VariationalProblem, x: &mut [f64], lo: f64, hi: f64) {
    let mut buf = vec![0.0; x.len()];
    let excess = |t: f64, buf: &mut [f64]| {
        shifted(x, t, lo, hi, buf);
        prob.count(buf) - prob.budget
    };
    // largest feasible shift
    let t_feas = if excess(1.0, &mut buf) <= 0.0 {
        1.0
    } else {
        let (mut a, mut b) = (-1.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid == a || mid == b {
                break;
            }
            if excess(mid, &mut buf) <= 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        a
    };
    let phi = |t: f64, buf: &mut [f64]| {
        shifted(x, t, lo, hi, buf);
        prob.entropy(buf)
    };
    let mut best_t = t_feas;
    let mut best = phi(t_feas, &mut buf);
    if t_feas >= 0.0 {
        let v0 = phi(0.0, &mut buf);
        if v0 < best {
            best = v0;
            best_t = 0.0;
        }
    }
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (t_feas - 1.0, t_feas);
    let mut c = b - gr * (b - a);
    let mut d = a + gr * (b - a);
    let (mut fc, mut fd) = (phi(c, &mut buf), phi(d, &mut buf));
    for _ in 0..120 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - gr * (b - a);
            fc = phi(c, &mut buf);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + gr * (b - a);
            fd = phi(d, &mut buf);
        }
    }
    for (t, v) in [(c, fc), (d, fd)] {
        if v < best {
            best = v;
            best_t = t;
        }
    }
    shifted(&x.to_vec(), best_t, lo, hi, x);
}

/// Least-squares multiplier on free coordinates and the projected gradient
/// norm of the Lagrangian, relative to `max(1, ‖∇f‖_∞)`.
fn kkt_certificate(prob: &VariationalProblem, x: &[f64], lo: f64, hi: f64, feas_tol: f64) -> (f64, f64) {
    let m = x.len();
    let mut gc = vec![0.0; m];
    let t = prob.hypergraph.expected_count_with_gradient(x, &mut gc).expect("dimension checked");
    gc.iter_mut().for_each(|v| *v /= prob.budget);
    let gf: Vec<f64> = x.iter().map(|&v| prob.objective.derivative(v)).collect();
    let active = t / prob.budget - 1.0 >= -feas_tol.max(1e-10);
    let mut lambda = 0.0;
    if active {
        let free: Vec<usize> = (0..m).filter(|&i| x[i] > lo * (1.0 + 1e-9) && x[i] < hi * (1.0 - 1e-12)).collect();
        let num: f64 = free.iter().map(|&i| gf[i] * gc[i]).sum();
        let den: f64 = free.iter().map(|&i| gc[i] * gc[i]).sum();
        if den > 0.0 {
            lambda = (-num / den).max(0.0);
        }
    }
    let scale = gf.iter().map(|v| v.abs()).filter(|v| v.is_finite()).fold(1.0, f64::max);
    let pg = (0..m)
        .map(|i| {
            let gl = gf[i] + lambda * gc[i];
            ((x[i] - gl).clamp(lo, hi) - x[i]).abs()
        })
        .fold(0.0, f64::max);
    (lambda, pg / scale)
}

fn distances_to_constant(prob: &VariationalProblem, x: &[f64]) -> (f64, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let linf = x.iter().map(|v| (v - mean).abs()).fold(0.0, f64::max);
    let cut = match prob.n {
        Some(n) if n <= EXACT_CUT_NORM_MAX_N => {
            cut_norm_exact(&DeviationMatrix::weights_minus_constant(x, n, mean)).unwrap_or(f64::NAN)
        }
        Some(n) => cut_norm_heuristic(&DeviationMatrix::weights_minus_constant(x, n, mean), 16, 0),
        None => linf,
    };
    (cut, linf)
}

fn solve_from(prob: &VariationalProblem, mut x: Vec<f64>, start: usize, cfg: &SolverConfig) -> VariationalSolution {
    let (lo, hi) = prob.bounds(cfg.eps_num);
    project(&mut x, lo, hi);
    let mut mu = cfg.mu_initial;
    let mut iterations = 0;
    let mut settled;
    loop {
        let obj = PenalizedObjective::new(prob, mu);
        let out = spg(&obj, &mut x, lo, hi, cfg);
        iterations += out.iterations;
        settled = out.settled;
        if prob.feasibility_gap(&x) <= cfg.feasibility_tol || mu >= cfg.mu_max {
            break;
        }
        mu = (mu * cfg.mu_growth).min(cfg.mu_max);
    }
    polish(prob, &mut x, lo, hi);
    let feasibility_gap = prob.feasibility_gap(&x);
    let (multiplier, pg) = kkt_certificate(prob, &x, lo, hi, cfg.feasibility_tol);
    let converged = settled && feasibility_gap <= cfg.feasibility_tol && pg <= cfg.kkt_tol;
    let value = prob.entropy(&x).max(0.0);
    VariationalSolution {
        q_star: x,
        value,
        feasibility_gap,
        multiplier,
        projected_gradient_norm: pg,
        restarts_used: 0,
        iterations,
        converged,
        distance_to_constant: f64::NAN,
        linf_to_constant: f64::NAN,
        start_index: start,
    }
}

/// Multi-start minimization. Returns the best converged start; if none
/// converged, [`Error::NotConverged`] carries the best iterate.
pub fn solve_phi(prob: &VariationalProblem, cfg: &SolverConfig) -> Result<VariationalSolution> {
    cfg.validate()?;
    let m = prob.dimension();
    let scale = prob.objective.scale();
    let c0 = prob.constant_point();
    let mut sols: Vec<VariationalSolution> = (0..=cfg.restarts)
        .into_par_iter()
        .map(|k| {
            let x = if k == 0 {
                vec![c0; m]
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(k as u64);
                (0..m).map(|_| rng.random_range(0.05..=1.0) * scale).collect()
            };
            solve_from(prob, x, k, cfg)
        })
        .collect();
    let total_iters: usize = sols.iter().map(|s| s.iterations).sum();
    let any_converged = sols.iter().any(|s| s.converged);
    let best_value = sols
        .iter()
        .filter(|s| s.converged || !any_converged)
        .map(|s| s.value)
        .fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * best_value.abs().max(1.0);
    let mut candidates: Vec<VariationalSolution> = sols
        .drain(..)
        .filter(|s| (s.converged || !any_converged) && s.value <= best_value + tie)
        .collect();
    for s in candidates.iter_mut() {
        let (cut, linf) = distances_to_constant(prob, &s.q_star);
        s.distance_to_constant = cut;
        s.linf_to_constant = linf;
    }
    candidates.sort_by(|a, b| {
        a.distance_to_constant
            .partial_cmp(&b.distance_to_constant)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.start_index.cmp(&b.start_index))
    });
    let mut best = candidates.swap_remove(0);
    best.restarts_used = cfg.restarts + 1;
    best.iterations = total_iters;
    if !any_converged {
        return Err(Error::NotConverged {
            restarts: cfg.restarts + 1,
            best: Box::new(best),
        });
    }
    Ok(best)
}

/// Like [`solve_phi`], but returns the best iterate even when no start
/// converged; the value is then only an upper bound.
pub fn solve_phi_upper_bound(prob: &VariationalProblem, cfg: &SolverConfig) -> Result<VariationalSolution> {
    match solve_phi(prob, cfg) {
        Err(Error::NotConverged { best, .. }) => Ok(*best),
        other => other,
    }
}

/// Root of the threshold fixed-point equation and its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSolution {
    pub r: usize,
    pub eta: f64,
    pub residual: f64,
    pub sign_changes: usize,
    pub bisection_steps: usize,
}

/// `h(η^{1/η}) - h(η^{1/r}) - η^{1/r} log(η^{1/r}) (log η^{1/η} - log η^{1/r})`,
/// evaluated in log space.
pub fn threshold_residual(eta: f64, r: usize) -> f64 {
    let le = eta.ln();
    let a = le / eta;
    let b = le / r as f64;
    let h_log = |u: f64| {
        let x = u.exp();
        x * u - x + 1.0
    };
    h_log(a) - h_log(b) - b.exp() * b * (a - b)
}

const THRESHOLD_SCAN: usize = 1000;

/// Solves the threshold equation on `(0, 1)` by bisection after a sign scan.
pub fn eta_threshold(r: usize) -> Result<ThresholdSolution> {
    if r == 0 {
        return Err(Error::InvalidInput("r must be at least 1".into()));
    }
    let grid: Vec<f64> = (1..=THRESHOLD_SCAN).map(|k| k as f64 / (THRESHOLD_SCAN + 1) as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&e| threshold_residual(e, r)).collect();
    let mut brackets = Vec::new();
    for k in 1..grid.len() {
        if vals[k - 1] == 0.0 || (vals[k - 1] < 0.0) != (vals[k] < 0.0) {
            brackets.push((grid[k - 1], grid[k]));
        }
    }
    if brackets.len() != 1 {
        return Err(Error::Threshold(format!(
            "expected exactly one sign change on (0, 1) for r = {r}, found {}",
            brackets.len()
        )));
    }
    let (mut a, mut b) = brackets[0];
    let fa_neg = threshold_residual(a, r) < 0.0;
    let mut steps = 0;
    while b - a > 1e-16 && steps < 200 {
        let mid = 0.5 * (a + b);
        let fm = threshold_residual(mid, r);
        steps += 1;
        if fm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if (fm < 0.0) == fa_neg {
            a = mid;
        } else {
            b = mid;
        }
    }
    let eta = 0.5 * (a + b);
    let residual = threshold_residual(eta, r).abs();
    if residual >= 1e-10 {
        return Err(Error::Threshold(format!("residual {residual} at η = {eta} for r = {r}")));
    }
    Ok(ThresholdSolution {
        r,
        eta,
        residual,
        sign_changes: brackets.len(),
        bisection_steps: steps,
    })
}

/// `min h(x) - h(c) - c log c (log x - log c)` over an `grid × grid` mesh of
/// `x ∈ [η^{1/η}, 1]`, `c ∈ [η^{1/r}, 1]`.
pub fn tangent_gap_min(eta: f64, r: usize, grid: usize) -> f64 {
    let x0 = (eta.ln() / eta).exp();
    let c0 = eta.powf(1.0 / r as f64);
    let mut worst = f64::INFINITY;
    for i in 0..grid {
        let x = x0 + (1.0 - x0) * i as f64 / (grid - 1) as f64;
        for j in 0..grid {
            let c = c0 + (1.0 - c0) * j as f64 / (grid - 1) as f64;
            let gap = h(x) - h(c) - c * c.ln() * (x.ln() - c.ln());
            worst = worst.min(gap);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationFamily {
    Iid,
    RankOne,
    Block,
    Spikes,
}

impl PerturbationFamily {
    pub const ALL: [PerturbationFamily; 4] = [
        PerturbationFamily::Iid,
        PerturbationFamily::RankOne,
        PerturbationFamily::Block,
        PerturbationFamily::Spikes,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PerturbationFamily::Iid => "iid",
            PerturbationFamily::RankOne => "rank_one",
            PerturbationFamily::Block => "block",
            PerturbationFamily::Spikes => "spikes",
        }
    }

    fn direction(self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let m = num_slots(n);
        let mut z = vec![0.0; m];
        match self {
            PerturbationFamily::Iid => z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal)),
            PerturbationFamily::RankOne => {
                let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                for j in 1..n {
                    for i in 0..j {
                        z[crate::graph::EdgeSlot::from_pair(i, j).index()] = u[i] * u[j];
                    }
                }
            }
            PerturbationFamily::Block => {
                let side: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
                for j in 1..n {
                    for i in 0..j {
                        z[crate::graph::EdgeSlot::from_pair(i, j).index()] = if side[i] == side[j] { -1.0 } else { 1.0 };
                    }
                }
            }
            PerturbationFamily::Spikes => {
                let k = (m / 20).max(1);
                for _ in 0..k {
                    z[rng.random_range(0..m)] = -1.0;
                }
            }
        }
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt() / (m as f64).sqrt();
        if norm > 0.0 {
            z.iter_mut().for_each(|v| *v /= norm);
        }
        z
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilitySample {
    pub excess_level: f64,
    pub family: PerturbationFamily,
    /// Achieved `(Σh(q) - Φ) / C(n,2)`.
    pub achieved_excess: f64,
    pub sigma: f64,
    pub cut_distance: f64,
    pub small_edge_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityLevel {
    pub excess_level: f64,
    pub max_cut_distance: f64,
    pub max_small_edge_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub n: usize,
    pub eta: f64,
    pub constant: f64,
    pub phi: f64,
    /// Edges below this value count as small.
    pub small_cutoff: f64,
    pub samples: Vec<StabilitySample>,
    pub levels: Vec<StabilityLevel>,
    /// Log-log slope of max cut distance against excess over positive levels.
    pub fitted_exponent: Option<f64>,
}

const STABILITY_RETRIES: usize = 20;

/// Random feasible points of prescribed entropy excess around the constant
/// minimizer of the sparse problem, and their distance from it.
pub fn stability_probe(
    h_pattern: &Graph,
    n: usize,
    eta: f64,
    excess_levels: &[f64],
    samples_per_level: usize,
    seed: u64,
) -> Result<StabilityReport> {
    if excess_levels.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::InvalidInput("excess levels must be nonnegative".into()));
    }
    let hg = CopyHypergraph::enumerate(h_pattern, n)?;
    let prob = VariationalProblem::sparse_limit(&hg, eta)?;
    let m = prob.dimension();
    let c = prob.constant_point();
    let phi = prob.constant_value();
    let small_cutoff = (eta.ln() / eta).exp();
    let (lo, hi) = (1e-12, 1.0);
    let reproject = |y: &mut Vec<f64>| polish_feasible_shift(&prob, y, lo, hi);
    let mut samples = Vec::new();
    let mut levels = Vec::new();
    for (li, &delta) in excess_levels.iter().enumerate() {
        let mut max_cut = 0.0f64;
        let mut max_small = 0.0f64;
        for k in 0..samples_per_level {
            let family = PerturbationFamily::ALL[k % PerturbationFamily::ALL.len()];
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(((li as u64) << 32) | k as u64);
            let found = if delta == 0.0 {
                Some((0.0, vec![c; m]))
            } else {
                let target = delta * m as f64;
                let mut hit = None;
                for _ in 0..STABILITY_RETRIES {
                    let z = family.direction(n, &mut rng);
                    let at = |sigma: f64| {
                        let mut y: Vec<f64> = z.iter().map(|zi| (c + sigma * zi).clamp(lo, hi)).collect();
                        reproject(&mut y);
                        (prob.entropy(&y) - phi, y)
                    };
                    let (e_max, _) = at(4.0);
                    if !(e_max >= target) {
                        continue;
                    }
                    let (mut a, mut b) = (1e-14f64.ln(), 4f64.ln());
                    for _ in 0..200 {
                        let mid = 0.5 * (a + b);
                        if at(mid.exp()).0 < target {
                            a = mid;
                        } else {
                            b = mid;
                        }
                    }
                    let (e, y) = at(b.exp());
                    if e <= target * (1.0 + 1e-6) + 1e-15 {
                        hit = Some((b.exp(), y));
                        break;
                    }
                    let (e, y) = at(a.exp());
                    if e >= 0.0 && e <= target {
                        hit = Some((a.exp(), y));
                        break;
                    }
                }
                hit
            };
            let Some((sigma, y)) = found else {
                return Err(Error::Generation(format!(
                    "no feasible point at excess {delta} after {STABILITY_RETRIES} retries"
                )));
            };
            let cut = if n <= EXACT_CUT_NORM_MAX_N {
                cut_norm_exact(&DeviationMatrix::weights_minus_constant(&y, n, c))?
            } else {
                cut_norm_heuristic(&DeviationMatrix::weights_minus_constant(&y, n, c), 32, seed)
            };
            let small = y.iter().filter(|&&v| v < small_cutoff).count() as f64 / m as f64;
            max_cut = max_cut.max(cut);
            max_small = max_small.max(small);
            samples.push(StabilitySample {
                excess_level: delta,
                family,
                achieved_excess: ((prob.entropy(&y) - phi) / m as f64).max(0.0),
                sigma,
                cut_distance: cut,
                small_edge_fraction: small,
            });
        }
        levels.push(StabilityLevel {
            excess_level: delta,
            max_cut_distance: max_cut,
            max_small_edge_fraction: max_small,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = levels
        .iter()
        .filter(|l| l.excess_level > 0.0 && l.max_cut_distance > 0.0)
        .map(|l| (l.excess_level.ln(), l.max_cut_distance.ln()))
        .unzip();
    let fitted_exponent = if xs.len() >= 2 { linear_fit(&xs, &ys).map(|(s, _)| s) } else { None };
    Ok(StabilityReport {
        n,
        eta,
        constant: c,
        phi,
        small_cutoff,
        samples,
        levels,
        fitted_exponent,
    })
}

/// Shifts `x` by a constant so the count meets the budget exactly.
fn polish_feasible_shift(prob: &VariationalProblem, x: &mut Vec<f64>, lo: f64, hi: f64) {
    let mut buf = vec![0.0; x.len()];
    let (mut a, mut b) = (-1.0, 1.0);
    shifted(x, b, lo, hi, &mut buf);
    if prob.count(&buf) <= prob.budget {
        x.copy_from_slice(&buf);
        return;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        shifted(x, mid, lo, hi, &mut buf);
        if prob.count(&buf) <= prob.budget {
            a = mid;
        } else {
            b = mid;
        }
    }
    shifted(&x.clone(), a, lo, hi, &mut buf);
    x.copy_from_slice(&buf);
}
