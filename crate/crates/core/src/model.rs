//! Two-boson Fock basis and dense Hamiltonian construction.
//!
//! Sites carry 1-based labels `1..=L` everywhere in the public API, so that
//! pair `(l, l')` and the onsite phase `2παl` use the same numbering as the
//! physical lattice. Vectors indexed by site (densities, single-particle
//! states) store site `l` at position `l - 1`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::{CMat, C64};

/// Boundary condition for the hopping term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Drops the `L ↔ 1` bond. Not used by the published results; handy for
    /// sanity checks.
    Open,
}

/// The irrational inverse golden ratio `(√5 − 1)/2`.
pub fn golden_alpha() -> f64 {
    (5f64.sqrt() - 1.0) / 2.0
}

/// Rational approximant `F_m / F_{m+1}` of the inverse golden ratio, where
/// `F_{m+1}` is the largest Fibonacci number not exceeding `l`.
///
/// With `l` itself a Fibonacci number the potential becomes exactly
/// commensurate with the periodic ring.
pub fn fibonacci_alpha(l: usize) -> f64 {
    let (mut prev, mut cur) = (1usize, 1usize);
    while prev + cur <= l {
        let next = prev + cur;
        prev = cur;
        cur = next;
    }
    prev as f64 / cur as f64
}

/// All parameters of the Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Nearest-neighbour hopping amplitude.
    #[serde(rename = "J")]
    pub j: f64,
    /// Amplitude of the complex quasiperiodic potential.
    pub mu: f64,
    /// Modulation frequency.
    #[serde(default = "golden_alpha")]
    pub alpha: f64,
    /// Onsite interaction.
    #[serde(rename = "U")]
    pub u: f64,
    /// Number of lattice sites.
    #[serde(rename = "L")]
    pub l: usize,
    /// Phase twist; every onsite phase is shifted by `theta / L`.
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub boundary: Boundary,
}

impl ModelParams {
    /// `J = 1`, `μ = U = θ = 0`, golden `α`, periodic boundaries.
    pub fn new(l: usize) -> Self {
        Self {
            j: 1.0,
            mu: 0.0,
            alpha: golden_alpha(),
            u: 0.0,
            l,
            theta: 0.0,
            boundary: Boundary::Periodic,
        }
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = mu;
        self
    }

    pub fn with_u(mut self, u: f64) -> Self {
        self.u = u;
        self
    }

    pub fn with_j(mut self, j: f64) -> Self {
        self.j = j;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta = theta;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    /// Switches to the Fibonacci approximant of `α` for this `L`.
    pub fn with_rational_alpha(mut self) -> Self {
        self.alpha = fibonacci_alpha(self.l);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.l < 2 {
            return Err(invalid(format!("L must be at least 2, got {}", self.l)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(0.0..2.0 * PI).contains(&self.theta) {
            return Err(invalid(format!("theta must lie in [0, 2π), got {}", self.theta)));
        }
        for (name, v) in [("J", self.j), ("mu", self.mu), ("U", self.u)] {
            if !v.is_finite() {
                return Err(invalid(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Onsite phase `2παl + θ/L` of site `l` (1-based).
    pub fn site_phase(&self, l: usize) -> f64 {
        2.0 * PI * self.alpha * l as f64 + self.theta / self.l as f64
    }

    /// Onsite potential `-μ e^{i(2παl + θ/L)}` felt by one particle on site `l`.
    pub fn onsite(&self, l: usize) -> C64 {
        -self.mu * C64::from_polar(1.0, self.site_phase(l))
    }

    /// Bonds `(s, s + 1)` of the lattice, 1-based, including `(L, 1)` under
    /// periodic boundaries.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut bonds: Vec<_> = (1..self.l).map(|s| (s, s + 1)).collect();
        if self.boundary == Boundary::Periodic {
            bonds.push((self.l, 1));
        }
        bonds
    }
}

/// Symmetrized two-boson position basis in lexicographic order.
///
/// Pair `(l, l)` is the doublon `|2_l⟩`; pair `(l, l')` with `l < l'` is
/// `(|l,l'⟩ + |l',l⟩)/√2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockBasis {
    l: usize,
    pairs: Vec<(usize, usize)>,
    lookup: Vec<usize>,
}

impl FockBasis {
    pub fn new(l: usize) -> Result<Self> {
        if l < 2 {
            return Err(invalid(format!("L must be at least 2, got {l}")));
        }
        let mut pairs = Vec::with_capacity(l * (l + 1) / 2);
        let mut lookup = vec![usize::MAX; l * l];
        for a in 1..=l {
            for b in a..=l {
                let idx = pairs.len();
                lookup[(a - 1) * l + (b - 1)] = idx;
                lookup[(b - 1) * l + (a - 1)] = idx;
                pairs.push((a, b));
            }
        }
        Ok(Self { l, pairs, lookup })
    }

    /// Number of lattice sites.
    pub fn sites(&self) -> usize {
        self.l
    }

    /// Hilbert-space dimension `L(L+1)/2`.
    pub fn dim(&self) -> usize {
        self.pairs.len()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair(&self, index: usize) -> (usize, usize) {
        self.pairs[index]
    }

    /// Index of the basis state with particles on sites `a` and `b`, in
    /// either order.
    pub fn index_of(&self, a: usize, b: usize) -> Option<usize> {
        if a == 0 || b == 0 || a > self.l || b > self.l {
            return None;
        }
        Some(self.lookup[(a - 1) * self.l + (b - 1)])
    }

    /// Index of the doublon `|2_l⟩`.
    pub fn doublon_index(&self, l: usize) -> Option<usize> {
        self.index_of(l, l)
    }

    /// Occupation `n_site` of basis state `index`.
    pub fn occupation(&self, index: usize, site: usize) -> u32 {
        let (a, b) = self.pairs[index];
        (a == site) as u32 + (b == site) as u32
    }
}

/// Shorthand for [`FockBasis::new`].
pub fn build_basis(l: usize) -> Result<FockBasis> {
    FockBasis::new(l)
}

/// A dense Hamiltonian together with the parameters it was built from.
#[derive(Clone, Debug)]
pub struct HamiltonianMatrix {
    matrix: CMat,
    params: ModelParams,
}

impl HamiltonianMatrix {
    pub fn from_parts(matrix: CMat, params: ModelParams) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        Self { matrix, params }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim()).map(|i| self.matrix[(i, i)]).sum()
    }

    /// Largest element of `|H − H†|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for k in i..n {
                worst = worst.max((self.matrix[(i, k)] - self.matrix[(k, i)].conj()).norm());
            }
        }
        worst
    }

    /// Largest element modulus.
    pub fn max_abs(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            for i in 0..n {
                worst = worst.max(self.matrix[(i, k)].norm());
            }
        }
        worst
    }
}

/// Kinetic plus interaction part of the two-boson Hamiltonian, without the
/// quasiperiodic potential.
fn two_boson_static(params: &ModelParams, basis: &FockBasis) -> CMat {
    let d = basis.dim();
    let mut h = CMat::zeros(d, d);
    let bonds = params.bonds();
    for (col, &(p, q)) in basis.pairs().iter().enumerate() {
        if p == q {
            h[(col, col)] += C64::from(params.u);
        }
        for &(a, b) in &bonds {
            for (src, dst) in [(a, b), (b, a)] {
                let n_src = basis.occupation(col, src);
                if n_src == 0 {
                    continue;
                }
                let n_dst = basis.occupation(col, dst);
                let rest = if p == src { q } else { p };
                let row = basis.index_of(rest, dst).expect("site within lattice");
                let amp = -params.j * (n_src as f64).sqrt() * ((n_dst + 1) as f64).sqrt();
                h[(row, col)] += C64::from(amp);
            }
        }
    }
    h
}

/// Builds the two-boson Hamiltonian in the symmetrized basis.
pub fn build_hamiltonian(params: &ModelParams, basis: &FockBasis) -> Result<HamiltonianMatrix> {
    params.validate()?;
    if basis.sites() != params.l {
        return Err(invalid(format!(
            "basis has L = {} but parameters have L = {}",
            basis.sites(),
            params.l
        )));
    }
    let mut h = two_boson_static(params, basis);
    for (i, &(a, b)) in basis.pairs().iter().enumerate() {
        h[(i, i)] += params.onsite(a) + params.onsite(b);
    }
    Ok(HamiltonianMatrix::from_parts(h, *params))
}

/// Builds the `L × L` single-particle Hamiltonian `H₀`.
pub fn build_single_particle_hamiltonian(params: &ModelParams) -> Result<HamiltonianMatrix> {
    params.validate()?;
    let l = params.l;
    let mut h = CMat::zeros(l, l);
    for (a, b) in params.bonds() {
        h[(a - 1, b - 1)] += C64::from(-params.j);
        h[(b - 1, a - 1)] += C64::from(-params.j);
    }
    for s in 1..=l {
        h[(s - 1, s - 1)] += params.onsite(s);
    }
    Ok(HamiltonianMatrix::from_parts(h, *params))
}

/// A Hamiltonian split as `H(θ) = K + e^{iθ/L} diag(v)`, where `K` holds
/// hopping and interaction and `v` is the potential at zero twist.
///
/// The twist enters only through the potential, so one split covers the whole
/// family swept by the winding number.
#[derive(Clone, Debug)]
pub struct TwistFamily {
    static_part: CMat,
    potential: Vec<C64>,
    sites: usize,
}

impl TwistFamily {
    /// Two-boson family; `params.theta` is ignored.
    pub fn two_boson(params: &ModelParams, basis: &FockBasis) -> Result<Self> {
        let params = params.with_theta(0.0);
        params.validate()?;
        if basis.sites() != params.l {
            return Err(invalid("basis and parameters disagree on L"));
        }
        let potential = basis
            .pairs()
            .iter()
            .map(|&(a, b)| params.onsite(a) + params.onsite(b))
            .collect();
        Ok(Self {
            static_part: two_boson_static(&params, basis),
            potential,
            sites: params.l,
        })
    }

    /// Single-particle family; `params.theta` is ignored.
    pub fn single_particle(params: &ModelParams) -> Result<Self> {
        let params = params.with_theta(0.0);
        let h = build_single_particle_hamiltonian(&params)?.into_matrix();
        let potential: Vec<C64> = (1..=params.l).map(|s| params.onsite(s)).collect();
        let mut static_part = h;
        for (i, v) in potential.iter().enumerate() {
            static_part[(i, i)] -= *v;
        }
        Ok(Self {
            static_part,
            potential,
            sites: params.l,
        })
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn static_part(&self) -> &CMat {
        &self.static_part
    }

    /// Diagonal potential at zero twist.
    pub fn potential(&self) -> &[C64] {
        &self.potential
    }

    /// `e^{iθ/L}`, the factor multiplying the potential at twist `theta`.
    pub fn twist_factor(&self, theta: f64) -> C64 {
        C64::from_polar(1.0, theta / self.sites as f64)
    }

    /// `H(θ) − shift·I`.
    pub fn shifted_at(&self, theta: f64, shift: C64) -> CMat {
        let z = self.twist_factor(theta);
        let mut m = self.static_part.clone();
        for (i, v) in self.potential.iter().enumerate() {
            m[(i, i)] += z * v - shift;
        }
        m
    }

    /// `H(θ)`.
    pub fn at(&self, theta: f64) -> CMat {
        self.shifted_at(theta, C64::new(0.0, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn basis_order_and_size() {
        let b = FockBasis::new(3).unwrap();
        assert_eq!(b.dim(), 6);
        assert_eq!(b.pairs(), &[(1, 1), (1, 2), (1, 3), (2, 2), (2, 3), (3, 3)]);
        assert_eq!(FockBasis::new(89).unwrap().dim(), 4005);
        assert_eq!(FockBasis::new(144).unwrap().dim(), 10440);
    }

    #[test]
    fn basis_index_is_bijective() {
        let b = FockBasis::new(7).unwrap();
        for (i, &(p, q)) in b.pairs().iter().enumerate() {
            assert_eq!(b.index_of(p, q), Some(i));
            assert_eq!(b.index_of(q, p), Some(i));
        }
        assert_eq!(b.index_of(0, 1), None);
        assert_eq!(b.index_of(1, 8), None);
    }

    #[test]
    fn small_lattice_rejected() {
        assert!(FockBasis::new(1).is_err());
        assert!(ModelParams::new(1).validate().is_err());
        assert!(ModelParams::new(5).with_alpha(1.0).validate().is_err());
        assert!(ModelParams::new(5).with_theta(7.0).validate().is_err());
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let basis = FockBasis::new(5).unwrap();
        assert!(build_hamiltonian(&ModelParams::new(6), &basis).is_err());
    }

    #[test]
    fn doublon_hop_amplitude() {
        let p = ModelParams::new(6).with_j(0.7);
        let basis = FockBasis::new(6).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        let m = h.matrix();
        let d3 = basis.doublon_index(3).unwrap();
        let s34 = basis.index_of(3, 4).unwrap();
        let s23 = basis.index_of(2, 3).unwrap();
        let s35 = basis.index_of(3, 5).unwrap();
        let s45 = basis.index_of(4, 5).unwrap();
        assert!(close(m[(d3, s34)], C64::from(-2f64.sqrt() * 0.7), 1e-14));
        assert!(close(m[(d3, s23)], C64::from(-2f64.sqrt() * 0.7), 1e-14));
        assert!(close(m[(s35, s34)], C64::from(-0.7), 1e-14));
        assert!(close(m[(s45, s35)], C64::from(-0.7), 1e-14));
        // no direct doublon-doublon or two-particle moves
        assert_eq!(m[(d3, basis.doublon_index(4).unwrap())], C64::new(0.0, 0.0));
        assert_eq!(m[(s34, basis.index_of(1, 6).unwrap())], C64::new(0.0, 0.0));
    }

    #[test]
    fn periodic_wrap_connects_ends() {
        let basis = FockBasis::new(5).unwrap();
        let pbc = build_hamiltonian(&ModelParams::new(5), &basis).unwrap();
        let obc = build_hamiltonian(&ModelParams::new(5).with_boundary(Boundary::Open), &basis).unwrap();
        let d1 = basis.doublon_index(1).unwrap();
        let s15 = basis.index_of(1, 5).unwrap();
        assert!(close(pbc.matrix()[(s15, d1)], C64::from(-2f64.sqrt()), 1e-14));
        assert_eq!(obc.matrix()[(s15, d1)], C64::new(0.0, 0.0));
    }

    #[test]
    fn diagonal_entries() {
        let p = ModelParams::new(8).with_mu(1.3).with_u(0.8).with_theta(0.9);
        let basis = FockBasis::new(8).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        for (i, &(a, b)) in basis.pairs().iter().enumerate() {
            let phase = |l: usize| 2.0 * PI * p.alpha * l as f64 + 0.9 / 8.0;
            let mut want = -1.3 * (C64::from_polar(1.0, phase(a)) + C64::from_polar(1.0, phase(b)));
            if a == b {
                want += 0.8;
            }
            assert!(close(h.matrix()[(i, i)], want, 1e-13), "pair {a},{b}");
        }
    }

    #[test]
    fn doublon_diagonal_untwisted() {
        let p = ModelParams::new(6).with_mu(0.4).with_u(2.5);
        let basis = FockBasis::new(6).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        let l = 4;
        let want = -2.0 * 0.4 * C64::from_polar(1.0, 2.0 * PI * p.alpha * l as f64) + 2.5;
        assert!(close(h.matrix()[(basis.doublon_index(l).unwrap(), basis.doublon_index(l).unwrap())], want, 1e-14));
    }

    #[test]
    fn hermitian_without_potential() {
        for (l, u, theta) in [(2, 0.0, 0.0), (5, 3.0, 1.0), (9, -1.5, 4.0)] {
            let p = ModelParams::new(l).with_u(u).with_theta(theta);
            let h = build_hamiltonian(&p, &FockBasis::new(l).unwrap()).unwrap();
            assert!(h.hermiticity_defect() <= 1e-12 * h.max_abs());
        }
        let h0 = build_single_particle_hamiltonian(&ModelParams::new(7)).unwrap();
        assert_eq!(h0.hermiticity_defect(), 0.0);
    }

    #[test]
    fn trace_identity() {
        let p = ModelParams::new(11).with_mu(0.9).with_u(1.7).with_theta(2.0);
        let basis = FockBasis::new(11).unwrap();
        let h = build_hamiltonian(&p, &basis).unwrap();
        let want: C64 = basis
            .pairs()
            .iter()
            .map(|&(a, b)| p.onsite(a) + p.onsite(b))
            .sum::<C64>()
            + 11.0 * 1.7;
        assert!((h.trace() - want).norm() <= 1e-10 * want.norm());
    }

    #[test]
    fn single_particle_structure() {
        let p = ModelParams::new(5).with_mu(0.0);
        let h = build_single_particle_hamiltonian(&p).unwrap();
        let m = h.matrix();
        assert_eq!(m[(0, 1)], C64::from(-1.0));
        assert_eq!(m[(0, 4)], C64::from(-1.0));
        assert_eq!(m[(0, 2)], C64::from(0.0));
    }

    #[test]
    fn twist_family_matches_direct_build() {
        let p = ModelParams::new(7).with_mu(1.2).with_u(0.8);
        let basis = FockBasis::new(7).unwrap();
        let fam = TwistFamily::two_boson(&p, &basis).unwrap();
        let theta = 2.3;
        let direct = build_hamiltonian(&p.with_theta(theta), &basis).unwrap();
        let via = fam.at(theta);
        for i in 0..basis.dim() {
            for k in 0..basis.dim() {
                assert!(close(via[(i, k)], direct.matrix()[(i, k)], 1e-13));
            }
        }
        let fam1 = TwistFamily::single_particle(&p).unwrap();
        let direct1 = build_single_particle_hamiltonian(&p.with_theta(theta)).unwrap();
        let via1 = fam1.at(theta);
        for i in 0..7 {
            for k in 0..7 {
                assert!(close(via1[(i, k)], direct1.matrix()[(i, k)], 1e-13));
            }
        }
    }

    #[test]
    fn fibonacci_approximants() {
        assert_eq!(fibonacci_alpha(89), 55.0 / 89.0);
        assert_eq!(fibonacci_alpha(100), 55.0 / 89.0);
        assert_eq!(fibonacci_alpha(144), 89.0 / 144.0);
        assert_eq!(fibonacci_alpha(13), 8.0 / 13.0);
    }

    #[test]
    fn params_serde_keys() {
        let p = ModelParams::new(34).with_mu(0.5).with_u(0.8);
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"J\":1.0") && s.contains("\"U\":0.8") && s.contains("\"L\":34"));
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let minimal: ModelParams = serde_json::from_str(r#"{"J":1,"mu":0.2,"U":0,"L":5}"#).unwrap();
        assert_eq!(minimal.alpha, golden_alpha());
        assert_eq!(minimal.boundary, Boundary::Periodic);
    }
}
