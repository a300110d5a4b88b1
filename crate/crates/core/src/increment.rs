//! Conditional correlation energy of copies of `H` given the slots in `W`.
//!
//! For an assignment of `Y_W`, `D_W(B, b) = E[Y_B | ·] - E[Y_{B∖b} | ·] E[Y_b | ·]`.
//! The energy averages, over the law of `Y_W`,
//! `Σ_{A ∩ W = ∅} Σ_{B ⊆ A, |B| >= 2} Σ_{b ∈ B} D_W(B, b)² / (C(r,|B|) |B| p^{2|B|})`.
//! Everything here uses the exact conditional law.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{binomial, compensated_sum};
use crate::sampler::{mask_of, ConditionalSlice, ExactConditional};

/// `D_W(B, b)` for one assignment of the slots in `W`.
pub fn correlation_d(
    exact: &ExactConditional,
    w_slots: &[usize],
    assignment: &[bool],
    b_set: &[usize],
    b: usize,
) -> Result<f64> {
    if w_slots.len() != assignment.len() {
        return Err(Error::Dimension {
            expected: w_slots.len(),
            got: assignment.len(),
        });
    }
    if !b_set.contains(&b) {
        return Err(Error::InvalidInput(format!("slot {b} is not in B")));
    }
    if b_set.iter().any(|s| w_slots.contains(s)) {
        return Err(Error::InvalidInput("B must be disjoint from W".into()));
    }
    let m = exact.slots();
    if let Some(&s) = w_slots.iter().chain(b_set).find(|&&s| s >= m) {
        return Err(Error::InvalidInput(format!("slot {s} out of range")));
    }
    let w = mask_of(w_slots);
    let a = w_slots
        .iter()
        .zip(assignment)
        .fold(0u32, |acc, (&s, &on)| if on { acc | 1 << s } else { acc });
    let slice = exact.condition(w, a)?;
    let bm = mask_of(b_set);
    Ok(d_value(&slice, bm, b))
}

fn d_value(slice: &ConditionalSlice, b_mask: u32, b: usize) -> f64 {
    slice.expect_monomial(b_mask) - slice.expect_monomial(b_mask & !(1 << b)) * slice.expect_monomial(1 << b)
}

/// One `(A, B, b)` term averaged over the law of `Y_W`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTerm {
    pub hyperedge: usize,
    pub b_mask: u32,
    pub b: usize,
    pub weighted_d2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub w: Vec<usize>,
    pub energy: f64,
    /// `E Σ_A |E[Y_A | ·] - Π_a E[Y_a | ·]|` over hyperedges disjoint from `W`.
    pub lhs_cs: f64,
    /// `p^r ((r - 1) e(𝓗 - W))^{1/2} 𝓔^{1/2}`.
    pub rhs_cs: f64,
    pub hyperedges_outside_w: usize,
    pub assignments: usize,
    pub terms: Option<Vec<EnergyTerm>>,
}

impl EnergyReport {
    pub fn bound_holds(&self) -> bool {
        self.lhs_cs <= self.rhs_cs * (1.0 + 1e-12) + 1e-15
    }
}

/// Monomial expectations under one slice, memoized by slot mask.
struct Moments<'s, 'a> {
    slice: &'s ConditionalSlice<'a>,
    cache: HashMap<u32, f64>,
}

impl Moments<'_, '_> {
    fn get(&mut self, mask: u32) -> f64 {
        if mask == 0 {
            return 1.0;
        }
        if let Some(&v) = self.cache.get(&mask) {
            return v;
        }
        let v = self.slice.expect_monomial(mask);
        self.cache.insert(mask, v);
        v
    }
}

struct SliceTotals {
    energy: f64,
    lhs: f64,
    terms: Vec<f64>,
}

fn slice_totals(slice: &ConditionalSlice, edges: &[(usize, Vec<usize>)], r: usize, p: f64, keep: bool) -> SliceTotals {
    let mut mo = Moments {
        slice,
        cache: HashMap::new(),
    };
    let mut energy = Vec::new();
    let mut lhs = Vec::new();
    let mut terms = Vec::new();
    for (_, a) in edges {
        let full = mask_of(a);
        let prod: f64 = a.iter().map(|&s| mo.get(1 << s)).product();
        lhs.push((mo.get(full) - prod).abs());
        for sub in 1u32..(1 << r) {
            let k = sub.count_ones() as usize;
            if k < 2 {
                continue;
            }
            let bm = (0..r).filter(|i| sub >> i & 1 == 1).fold(0u32, |m, i| m | 1 << a[i]);
            let weight = 1.0 / (binomial(r as u64, k as u64) as f64 * k as f64 * p.powi(2 * k as i32));
            for i in (0..r).filter(|i| sub >> i & 1 == 1) {
                let b = a[i];
                let d = mo.get(bm) - mo.get(bm & !(1 << b)) * mo.get(1 << b);
                let t = weight * d * d;
                energy.push(t);
                if keep {
                    terms.push(t);
                }
            }
        }
    }
    SliceTotals {
        energy: compensated_sum(energy),
        lhs: compensated_sum(lhs),
        terms,
    }
}

/// Energy and both sides of the Cauchy–Schwarz bound at `W`.
pub fn energy(exact: &ExactConditional, w_slots: &[usize], with_terms: bool) -> Result<EnergyReport> {
    let m = exact.slots();
    if let Some(&s) = w_slots.iter().find(|&&s| s >= m) {
        return Err(Error::InvalidInput(format!("slot {s} out of range")));
    }
    let hg = exact.hypergraph();
    let r = hg.rank();
    let p = exact.p();
    let w = mask_of(w_slots);
    let edges: Vec<(usize, Vec<usize>)> = hg
        .iter()
        .enumerate()
        .filter(|(_, e)| e.iter().all(|&s| w >> s & 1 == 0))
        .map(|(i, e)| (i, e.iter().map(|&s| s as usize).collect()))
        .collect();
    let law = exact.w_assignments(w);
    let per: Vec<(f64, SliceTotals)> = law
        .par_iter()
        .map(|&(a, prob)| {
            let slice = exact.condition(w, a).expect("positive mass");
            (prob, slice_totals(&slice, &edges, r, p, with_terms))
        })
        .collect();
    let energy = compensated_sum(per.iter().map(|(w, t)| w * t.energy)).max(0.0);
    let lhs = compensated_sum(per.iter().map(|(w, t)| w * t.lhs));
    let rhs = p.powi(r as i32) * (((r - 1) * edges.len()) as f64).sqrt() * energy.sqrt();
    let terms = with_terms.then(|| {
        let mut out = Vec::new();
        let mut k = 0;
        for (idx, a) in &edges {
            for sub in 1u32..(1 << r) {
                if sub.count_ones() < 2 {
                    continue;
                }
                let bm = (0..r).filter(|i| sub >> i & 1 == 1).fold(0u32, |m, i| m | 1 << a[i]);
                for i in (0..r).filter(|i| sub >> i & 1 == 1) {
                    let v = compensated_sum(per.iter().map(|(w, t)| w * t.terms[k]));
                    out.push(EnergyTerm {
                        hyperedge: *idx,
                        b_mask: bm,
                        b: a[i],
                        weighted_d2: v,
                    });
                    k += 1;
                }
            }
        }
        out
    });
    let mut sorted_w = w_slots.to_vec();
    sorted_w.sort_unstable();
    sorted_w.dedup();
    Ok(EnergyReport {
        w: sorted_w,
        energy,
        lhs_cs: lhs,
        rhs_cs: rhs,
        hyperedges_outside_w: edges.len(),
        assignments: law.len(),
        terms,
    })
}

/// `(lhs, rhs)` of the Cauchy–Schwarz bound.
pub fn cs_bound_check(exact: &ExactConditional, w_slots: &[usize]) -> Result<(f64, f64)> {
    let rep = energy(exact, w_slots, false)?;
    Ok((rep.lhs_cs, rep.rhs_cs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreedyStatus {
    /// Energy at or below `β · e(𝓗)`.
    TargetMet,
    /// `|W|` reached `α · v(𝓗)` with the energy still above target.
    BudgetExhausted,
    /// No remaining slot lowers the energy.
    Stalled,
}

impl GreedyStatus {
    pub fn name(self) -> &'static str {
        match self {
            GreedyStatus::TargetMet => "target_met",
            GreedyStatus::BudgetExhausted => "budget_exhausted",
            GreedyStatus::Stalled => "stalled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyIncrement {
    pub w: Vec<usize>,
    /// Energy after each addition, starting with `W = ∅`.
    pub trajectory: Vec<f64>,
    pub target: f64,
    pub max_size: usize,
    pub status: GreedyStatus,
}

/// Greedy reconstruction of a small conditioning set: repeatedly add the slot
/// giving the lowest energy (ties to the lowest index) until the energy is at
/// most `β · e(𝓗)`, `|W|` reaches `α · v(𝓗)`, or no slot lowers the energy.
pub fn greedy_increment(exact: &ExactConditional, alpha: f64, beta: f64) -> Result<GreedyIncrement> {
    if !(alpha >= 0.0) || !(beta >= 0.0) {
        return Err(Error::InvalidInput("alpha and beta must be nonnegative".into()));
    }
    let hg = exact.hypergraph();
    let m = exact.slots();
    let target = beta * hg.edge_count() as f64;
    let max_size = (alpha * m as f64).floor() as usize;
    let mut w: Vec<usize> = Vec::new();
    let mut current = energy(exact, &w, false)?.energy;
    let mut trajectory = vec![current];
    let status = loop {
        if current <= target {
            break GreedyStatus::TargetMet;
        }
        if w.len() >= max_size {
            break GreedyStatus::BudgetExhausted;
        }
        let candidates: Vec<usize> = (0..m).filter(|s| !w.contains(s)).collect();
        let scores: Vec<f64> = candidates
            .iter()
            .map(|&s| {
                let mut next = w.clone();
                next.push(s);
                energy(exact, &next, false).map(|r| r.energy)
            })
            .collect::<Result<_>>()?;
        let Some((best_slot, best)) = candidates
            .iter()
            .zip(&scores)
            .fold(None, |acc: Option<(usize, f64)>, (&s, &e)| match acc {
                Some((_, be)) if be <= e => acc,
                _ => Some((s, e)),
            })
        else {
            break GreedyStatus::Stalled;
        };
        if best > current {
            break GreedyStatus::Stalled;
        }
        w.push(best_slot);
        current = best;
        trajectory.push(current);
    };
    Ok(GreedyIncrement {
        w,
        trajectory,
        target,
        max_size,
        status,
    })
}
