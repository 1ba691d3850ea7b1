//! Entanglement between two groups of sites, resolved by the number of bosons
//! found in the first group.
//!
//! For a two-boson state the reduced density matrix of part `A` is block
//! diagonal in `N_A ∈ {0, 1, 2}`. Each block is `ρ_N = M_N M_N†`, where `M_N`
//! collects the amplitudes of basis states with `N` bosons in `A`, rows
//! labelled by the `A` configuration and columns by the `B` configuration:
//!
//! - `M_0` is `1 × |B pairs|` (nothing in `A`),
//! - `M_1` is `|A| × |B|` with `M_1[a, b] = ψ(a, b)`,
//! - `M_2` is `|A pairs| × 1`.
//!
//! The Fock basis is orthonormal in occupation numbers, so no symmetrization
//! factors enter. `S = S_num + S_conf` with `S_num` the Shannon entropy of
//! `p_N = tr ρ_N` and `S_conf = Σ_N p_N S(ρ_N / p_N)`.

use faer::Side;
use serde::{Deserialize, Serialize};

use crate::dynamics::propagate;
use crate::error::{invalid, Error, Result};
use crate::model::FockBasis;
use crate::spectral::SpectralDecomposition;
use crate::{CMat, C64};

/// Sectors with `p_N` at or below this carry no entropy.
pub const SECTOR_FLOOR: f64 = 1e-14;

const NORM_TOLERANCE: f64 = 1e-10;
const NEGATIVE_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Natural,
    Two,
}

impl LogBase {
    fn convert(self, nats: f64) -> f64 {
        match self {
            LogBase::Natural => nats,
            LogBase::Two => nats / std::f64::consts::LN_2,
        }
    }
}

/// Split of the lattice into `A` and its complement `B`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bipartition {
    in_a: Vec<bool>,
}

impl Bipartition {
    /// `A = {1, …, ⌊L/2⌋}`.
    pub fn half_chain(l: usize) -> Self {
        Self { in_a: (1..=l).map(|s| s <= l / 2).collect() }
    }

    /// `A` given as 1-based site labels.
    pub fn from_sites(l: usize, sites: &[usize]) -> Result<Self> {
        let mut in_a = vec![false; l];
        for &s in sites {
            if s == 0 || s > l {
                return Err(invalid(format!("site {s} outside 1..={l}")));
            }
            in_a[s - 1] = true;
        }
        Ok(Self { in_a })
    }

    pub fn complement(&self) -> Self {
        Self { in_a: self.in_a.iter().map(|x| !x).collect() }
    }

    pub fn sites(&self) -> usize {
        self.in_a.len()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.in_a[site - 1]
    }

    /// 1-based sites of `A`.
    pub fn a_sites(&self) -> Vec<usize> {
        (1..=self.sites()).filter(|&s| self.contains(s)).collect()
    }

    /// 1-based sites of `B`.
    pub fn b_sites(&self) -> Vec<usize> {
        (1..=self.sites()).filter(|&s| !self.contains(s)).collect()
    }
}

/// Amplitude factors `M_N` of the number-resolved reduced density matrix.
#[derive(Clone, Debug)]
pub struct ReducedBlocks {
    factors: [CMat; 3],
}

impl ReducedBlocks {
    /// `M_N` for `N = n_a`.
    pub fn factor(&self, n_a: usize) -> &CMat {
        &self.factors[n_a]
    }

    /// `p_N = tr ρ_N`.
    pub fn sector_probability(&self, n_a: usize) -> f64 {
        let m = &self.factors[n_a];
        let mut p = 0.0;
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                p += m[(r, c)].norm_sqr();
            }
        }
        p
    }

    /// `ρ_N = M_N M_N†` on the `A` configurations of sector `n_a`.
    pub fn block(&self, n_a: usize) -> CMat {
        let m = &self.factors[n_a];
        m * m.adjoint()
    }

    /// Eigenvalues of `ρ_N`, from whichever of `M M†` and `M† M` is smaller.
    /// Hermitized before the solve and clipped at zero; the zero eigenvalues
    /// of the larger Gram matrix are omitted.
    pub fn sector_eigenvalues(&self, n_a: usize) -> Result<Vec<f64>> {
        let m = &self.factors[n_a];
        if m.nrows() == 0 || m.ncols() == 0 {
            return Ok(Vec::new());
        }
        let gram = if m.nrows() <= m.ncols() { m * m.adjoint() } else { m.adjoint() * m };
        let n = gram.nrows();
        let herm = CMat::from_fn(n, n, |r, c| (gram[(r, c)] + gram[(c, r)].conj()) * 0.5);
        let values = herm
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|e| Error::Solver { message: format!("{e:?}"), residual: f64::NAN })?;
        if let Some(v) = values.iter().find(|v| **v < -NEGATIVE_TOLERANCE) {
            return Err(Error::NumericalConsistency(format!("block {n_a} has eigenvalue {v}")));
        }
        Ok(values.into_iter().map(|v| v.max(0.0)).collect())
    }
}

/// Builds the number-resolved factors of the reduced state of `A`.
pub fn reduced_blocks_with(state: &[C64], basis: &FockBasis, cut: &Bipartition) -> Result<ReducedBlocks> {
    if state.len() != basis.dim() || cut.sites() != basis.sites() {
        return Err(invalid("state, basis and bipartition sizes differ"));
    }
    let norm: f64 = state.iter().map(|z| z.norm_sqr()).sum();
    if (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(invalid(format!("state is not normalized (‖ψ‖² = {norm})")));
    }
    let l = basis.sites();
    // position of each site within its own part, and of each same-part pair
    let mut local = vec![0usize; l + 1];
    let (mut n_a, mut n_b) = (0, 0);
    for s in 1..=l {
        if cut.contains(s) {
            local[s] = n_a;
            n_a += 1;
        } else {
            local[s] = n_b;
            n_b += 1;
        }
    }
    let pair_index = |i: usize, j: usize, n: usize| i * n - i * (i + 1) / 2 + j;
    let mut factors = [
        CMat::zeros(1, n_b * (n_b + 1) / 2),
        CMat::zeros(n_a, n_b),
        CMat::zeros(n_a * (n_a + 1) / 2, 1),
    ];
    for (index, &(a, b)) in basis.pairs().iter().enumerate() {
        let amp = state[index];
        let (la, lb) = (local[a], local[b]);
        match (cut.contains(a), cut.contains(b)) {
            (true, true) => factors[2][(pair_index(la.min(lb), la.max(lb), n_a), 0)] = amp,
            (false, false) => factors[0][(0, pair_index(la.min(lb), la.max(lb), n_b))] = amp,
            (true, false) => factors[1][(la, lb)] = amp,
            (false, true) => factors[1][(lb, la)] = amp,
        }
    }
    Ok(ReducedBlocks { factors })
}

/// Half-chain blocks with `A = {1, …, ⌊L/2⌋}`.
pub fn reduced_blocks(state: &[C64], basis: &FockBasis) -> Result<ReducedBlocks> {
    reduced_blocks_with(state, basis, &Bipartition::half_chain(basis.sites()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EeDecomposition {
    pub time: f64,
    /// `p_N` for `N = 0, 1, 2` bosons in `A`.
    pub p_sector: [f64; 3],
    pub s_num: f64,
    pub s_conf: f64,
    pub s_total: f64,
}

fn entropy_term(p: f64) -> f64 {
    if p > SECTOR_FLOOR {
        -p * p.ln()
    } else {
        0.0
    }
}

/// `S_num` and `S_conf` of a set of blocks.
pub fn ee_decomposition(blocks: &ReducedBlocks, time: f64, base: LogBase) -> Result<EeDecomposition> {
    let p_sector = [0, 1, 2].map(|n| blocks.sector_probability(n));
    let total: f64 = p_sector.iter().sum();
    if (total - 1.0).abs() > NORM_TOLERANCE {
        return Err(Error::NumericalConsistency(format!("sector probabilities sum to {total}")));
    }
    let s_num: f64 = p_sector.iter().map(|&p| entropy_term(p)).sum();
    let mut s_conf = 0.0;
    for (n, &p) in p_sector.iter().enumerate() {
        if p <= SECTOR_FLOOR {
            continue;
        }
        let inner: f64 = blocks.sector_eigenvalues(n)?.iter().map(|&lambda| entropy_term(lambda / p)).sum();
        s_conf += p * inner;
    }
    let (s_num, s_conf) = (base.convert(s_num), base.convert(s_conf));
    Ok(EeDecomposition { time, p_sector, s_num, s_conf, s_total: s_num + s_conf })
}

/// Entanglement of the renormalized evolution from `psi0` at each time.
pub fn ee_trace(
    basis: &FockBasis,
    spec: &SpectralDecomposition,
    psi0: &[C64],
    times: &[f64],
    cut: &Bipartition,
    base: LogBase,
) -> Result<Vec<EeDecomposition>> {
    let trace = propagate(basis, spec, psi0, times, true)?;
    let states = trace.states.expect("states requested");
    times
        .iter()
        .zip(&states)
        .map(|(&t, psi)| ee_decomposition(&reduced_blocks_with(psi, basis, cut)?, t, base))
        .collect()
}

/// Arithmetic means of `s_num` and `s_conf` over samples with
/// `t_start ≤ t ≤ t_end`.
pub fn averaged_ee(trace: &[EeDecomposition], t_start: f64, t_end: f64) -> Result<(f64, f64)> {
    let window: Vec<&EeDecomposition> = trace.iter().filter(|e| e.time >= t_start && e.time <= t_end).collect();
    if window.is_empty() {
        return Err(invalid(format!("no samples in window [{t_start}, {t_end}]")));
    }
    let n = window.len() as f64;
    Ok((window.iter().map(|e| e.s_num).sum::<f64>() / n, window.iter().map(|e| e.s_conf).sum::<f64>() / n))
}

/// Window covering the last decade of a trace, `[t_max / 10, t_max]`.
pub fn last_decade(trace: &[EeDecomposition]) -> Option<(f64, f64)> {
    trace.last().map(|e| (e.time / 10.0, e.time))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::f64::consts::LN_2;

    fn zero(d: usize) -> Vec<C64> {
        vec![C64::new(0.0, 0.0); d]
    }

    /// Reduced density matrix of `A` assembled directly on occupation-number
    /// vectors, without reference to the sector structure.
    fn monolithic_entropy(state: &[C64], basis: &FockBasis, cut: &Bipartition) -> (f64, f64) {
        let l = basis.sites();
        let mut a_index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut b_index: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut entries = Vec::new();
        for (i, _) in basis.pairs().iter().enumerate() {
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
        let mut off_block = 0.0f64;
        let n_of: HashMap<usize, u32> = a_index.iter().map(|(k, &v)| (v, k.iter().sum())).collect();
        for r in 0..da {
            for c in 0..da {
                if n_of[&r] != n_of[&c] {
                    off_block = off_block.max(rho[(r, c)].norm());
                }
            }
        }
        let herm = CMat::from_fn(da, da, |r, c| (rho[(r, c)] + rho[(c, r)].conj()) * 0.5);
        let s = herm.self_adjoint_eigenvalues(Side::Lower).unwrap().iter().map(|&v| entropy_term(v.max(0.0))).sum();
        (s, off_block)
    }

    fn random_state(d: usize, seed: u64) -> Vec<C64> {
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let v: Vec<C64> = (0..d).map(|_| C64::new(next(), next())).collect();
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.into_iter().map(|z| z / n).collect()
    }

    #[test]
    fn sector_examples() {
        let basis = FockBasis::new(89).unwrap();
        let mut psi = zero(basis.dim());
        psi[basis.doublon_index(45).unwrap()] = C64::new(1.0, 0.0);
        let e = ee_decomposition(&reduced_blocks(&psi, &basis).unwrap(), 0.0, LogBase::Natural).unwrap();
        assert_eq!(e.p_sector, [1.0, 0.0, 0.0]);
        assert_eq!((e.s_num, e.s_conf), (0.0, 0.0));

        let mut psi = zero(basis.dim());
        psi[basis.doublon_index(1).unwrap()] = C64::new(1.0, 0.0);
        assert_eq!(reduced_blocks(&psi, &basis).unwrap().sector_probability(2), 1.0);

        let mut psi = zero(basis.dim());
        psi[basis.index_of(44, 45).unwrap()] = C64::new(0.0, 1.0);
        let blocks = reduced_blocks(&psi, &basis).unwrap();
        assert_eq!(blocks.sector_probability(1), 1.0);
        let ev = blocks.sector_eigenvalues(1).unwrap();
        assert_eq!(ev.iter().filter(|v| **v > 1e-12).count(), 1);
    }

    #[test]
    fn two_equal_pairs_give_ln2() {
        let basis = FockBasis::new(8).unwrap();
        let mut psi = zero(basis.dim());
        let h = C64::new(0.5f64.sqrt(), 0.0);
        psi[basis.index_of(1, 6).unwrap()] = h;
        psi[basis.index_of(2, 7).unwrap()] = h;
        let e = ee_decomposition(&reduced_blocks(&psi, &basis).unwrap(), 0.0, LogBase::Natural).unwrap();
        assert!(e.s_num.abs() < 1e-14);
        assert!((e.s_conf - LN_2).abs() < 1e-12);
        let e2 = ee_decomposition(&reduced_blocks(&psi, &basis).unwrap(), 0.0, LogBase::Two).unwrap();
        assert!((e2.s_conf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_product_state() {
        // (b_φ†)²/√2 |0⟩ with φ uniform: amplitude √2/L off-diagonal, 1/L on doublons
        let l = 10;
        let basis = FockBasis::new(l).unwrap();
        let psi: Vec<C64> = basis
            .pairs()
            .iter()
            .map(|&(a, b)| C64::new(if a == b { 1.0 / l as f64 } else { 2f64.sqrt() / l as f64 }, 0.0))
            .collect();
        let e = ee_decomposition(&reduced_blocks(&psi, &basis).unwrap(), 0.0, LogBase::Natural).unwrap();
        assert!((e.p_sector[0] - 0.25).abs() < 1e-12 && (e.p_sector[1] - 0.5).abs() < 1e-12);
        assert!((e.s_num - 1.5 * LN_2).abs() < 1e-12);
        assert!(e.s_conf.abs() < 1e-12);
    }

    #[test]
    fn matches_monolithic_reduced_matrix() {
        for l in [4, 5, 7, 8] {
            let basis = FockBasis::new(l).unwrap();
            for seed in 0..4 {
                let psi = random_state(basis.dim(), seed + 17 * l as u64);
                for cut in [Bipartition::half_chain(l), Bipartition::from_sites(l, &[1, 3, l]).unwrap()] {
                    let e = ee_decomposition(&reduced_blocks_with(&psi, &basis, &cut).unwrap(), 0.0, LogBase::Natural).unwrap();
                    let (s, off) = monolithic_entropy(&psi, &basis, &cut);
                    assert!(off < 1e-12);
                    assert!((e.s_total - s).abs() < 1e-10, "L={l}: {} vs {s}", e.s_total);
                    let e_b = ee_decomposition(&reduced_blocks_with(&psi, &basis, &cut.complement()).unwrap(), 0.0, LogBase::Natural)
                        .unwrap();
                    assert!((e_b.s_total - e.s_total).abs() < 1e-8);
                    assert!((e_b.s_num - e.s_num).abs() < 1e-8);
                    let full = [0, 1, 2].map(|n| {
                        let b = reduced_blocks_with(&psi, &basis, &cut).unwrap().block(n);
                        (0..b.nrows()).map(|i| b[(i, i)].re).sum::<f64>()
                    });
                    assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let basis = FockBasis::new(4).unwrap();
        assert!(reduced_blocks(&vec![C64::new(1.0, 0.0); basis.dim()], &basis).is_err());
        assert!(Bipartition::from_sites(4, &[5]).is_err());
        assert!(averaged_ee(&[], 0.0, 1.0).is_err());
    }

    #[test]
    fn averages() {
        let trace: Vec<EeDecomposition> = (0..5)
            .map(|k| EeDecomposition {
                time: k as f64,
                p_sector: [1.0, 0.0, 0.0],
                s_num: 0.7,
                s_conf: 0.2,
                s_total: 0.9,
            })
            .collect();
        let (a, b) = averaged_ee(&trace, 1.0, 3.0).unwrap();
        assert!((a - 0.7).abs() < 1e-15 && (b - 0.2).abs() < 1e-15);
        assert_eq!(last_decade(&trace), Some((0.4, 4.0)));
    }
}
