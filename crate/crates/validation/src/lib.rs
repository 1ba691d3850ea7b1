//! Reference computations that avoid the solver's own shortcuts, plus a few
//! host probes used by the acceptance run.
//!
//! Everything here is deliberately naive: dense matrix exponentials, full
//! reduced density matrices and brute-force matching.

use std::collections::HashMap;
use std::fs;

use faer::Side;
use twoboson::entanglement::Bipartition;
use twoboson::{CMat, FockBasis, C64};

/// `{εᵢ + εⱼ : i ≤ j}`.
pub fn pairwise_sums(single: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(single.len() * (single.len() + 1) / 2);
    for i in 0..single.len() {
        for j in i..single.len() {
            out.push(single[i] + single[j]);
        }
    }
    out
}

/// Largest distance in a one-to-one pairing of two multisets, each element
/// of `a` taking its nearest unused partner in `b`. `INFINITY` when the
/// sizes differ.
pub fn multiset_distance(a: &[C64], b: &[C64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (k, d) = b
            .iter()
            .enumerate()
            .filter(|(k, _)| !used[*k])
            .map(|(k, y)| (k, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("sizes agree");
        used[k] = true;
        worst = worst.max(d);
    }
    worst
}

/// `e^{−iHt}` by scaling and squaring a truncated Taylor series.
pub fn expm_minus_i(h: &CMat, t: f64) -> CMat {
    let n = h.nrows();
    let a = CMat::from_fn(n, n, |r, c| h[(r, c)] * C64::new(0.0, -t));
    let norm = (0..n).map(|c| (0..n).map(|r| a[(r, c)].norm()).sum::<f64>()).fold(0.0, f64::max);
    let squarings = (norm.max(1.0).log2().ceil() as i32 + 4).max(0);
    let scale = 0.5f64.powi(squarings);
    let a = CMat::from_fn(n, n, |r, c| a[(r, c)] * scale);
    let mut result = CMat::identity(n, n);
    let mut term = CMat::identity(n, n);
    for k in 1..=24 {
        term = &term * &a;
        term = CMat::from_fn(n, n, |r, c| term[(r, c)] / k as f64);
        result = &result + &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// `M v`.
pub fn apply(m: &CMat, v: &[C64]) -> Vec<C64> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)] * v[c]).sum()).collect()
}

fn entropy_term(p: f64) -> f64 {
    if p > 1e-14 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Von Neumann entropy (nats) of `A`, from the full reduced density matrix
/// over every occupation pattern of `A`, and the largest element of that
/// matrix coupling different boson numbers.
pub fn monolithic_entropy(state: &[C64], basis: &FockBasis, cut: &Bipartition) -> (f64, f64) {
    let l = basis.sites();
    let mut a_index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut b_index: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut entries = Vec::new();
    for i in 0..basis.dim() {
        let occ: Vec<u32> = (1..=l).map(|s| basis.occupation(i, s)).collect();
        let a: Vec<u32> = (1..=l).filter(|&s| cut.contains(s)).map(|s| occ[s - 1]).collect();
        let b: Vec<u32> = (1..=l).filter(|&s| !cut.contains(s)).map(|s| occ[s - 1]).collect();
        let na = a_index.len();
        let ia = *a_index.entry(a).or_insert(na);
        let nb = b_index.len();
        let ib = *b_index.entry(b).or_insert(nb);
        entries.push((ia, ib, state[i]));
    }
    let (da, db) = (a_index.len(), b_index.len());
    let mut psi = CMat::zeros(da, db);
    for (ia, ib, amp) in entries {
        psi[(ia, ib)] = amp;
    }
    let rho = &psi * psi.adjoint();
    let bosons: HashMap<usize, u32> = a_index.iter().map(|(k, &v)| (v, k.iter().sum())).collect();
    let mut off_block = 0.0f64;
    for r in 0..da {
        for c in 0..da {
            if bosons[&r] != bosons[&c] {
                off_block = off_block.max(rho[(r, c)].norm());
            }
        }
    }
    let herm = CMat::from_fn(da, da, |r, c| (rho[(r, c)] + rho[(c, r)].conj()) * 0.5);
    let s = herm
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("Hermitian eigenvalues")
        .iter()
        .map(|&v| entropy_term(v.max(0.0)))
        .sum();
    (s, off_block)
}

/// Deterministic normalized pseudo-random state.
pub fn random_state(d: usize, seed: u64) -> Vec<C64> {
    let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = || {
        x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let v: Vec<C64> = (0..d).map(|_| C64::new(next(), next())).collect();
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / n).collect()
}

fn kib_field(path: &str, key: &str) -> Option<u64> {
    let text = fs::read_to_string(path).ok()?;
    let line = text.lines().find(|l| l.starts_with(key))?;
    line[key.len()..].split_whitespace().next()?.parse::<u64>().ok().map(|k| k * 1024)
}

/// Peak resident set of this process in bytes (Linux only).
pub fn peak_rss_bytes() -> Option<u64> {
    kib_field("/proc/self/status", "VmHWM:")
}

/// Memory the kernel reports as available to new allocations (Linux only).
pub fn available_memory_bytes() -> Option<u64> {
    kib_field("/proc/meminfo", "MemAvailable:")
}
