//! Bound pairs at strong interaction: the effective single-doublon chain, the
//! doublon band of the full model, and the `μ_c = J²/U` boundary.
//!
//! Second-order perturbation in `J/U` gives a doublon hopping `2J²/U` and a
//! constant `U + 4J²/U`, the latter because a doublon can break up towards
//! either neighbour. [`EnergyShift::Published`] keeps `U + 2J²/U` instead;
//! the two differ only by a uniform shift of `2J²/U`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{FockBasis, ModelParams};
use crate::spectral::SpectralDecomposition;
use crate::{CMat, C64};

/// Default doublon-weight threshold for band membership.
pub const DEFAULT_W_MIN: f64 = 0.9;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyShift {
    /// `U + 4J²/U`, consistent with the exact bound-pair dispersion.
    #[default]
    SecondOrder,
    /// `U + 2J²/U`.
    Published,
}

impl EnergyShift {
    pub fn constant(self, j: f64, u: f64) -> f64 {
        match self {
            EnergyShift::SecondOrder => u + 4.0 * j * j / u,
            EnergyShift::Published => u + 2.0 * j * j / u,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveHamiltonian {
    pub entries: CMat,
    pub params: ModelParams,
    pub shift: EnergyShift,
}

impl EffectiveHamiltonian {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn hopping(&self) -> f64 {
        2.0 * self.params.j * self.params.j / self.params.u
    }
}

/// `(2J²/U) Σ (b_l† b_{l+1} + h.c.) − 2μ Σ e^{iφ_l} n_l + shift` on `L` sites.
pub fn build_effective_hamiltonian(params: &ModelParams, shift: EnergyShift) -> Result<EffectiveHamiltonian> {
    params.validate()?;
    if params.u == 0.0 {
        return Err(invalid("effective doublon Hamiltonian needs U ≠ 0"));
    }
    let l = params.l;
    let t = 2.0 * params.j * params.j / params.u;
    let constant = shift.constant(params.j, params.u);
    let mut m = CMat::zeros(l, l);
    for s in 1..=l {
        m[(s - 1, s - 1)] = params.onsite(s) * 2.0 + constant;
    }
    for (a, b) in params.bonds() {
        m[(a - 1, b - 1)] += C64::new(t, 0.0);
        m[(b - 1, a - 1)] += C64::new(t, 0.0);
    }
    Ok(EffectiveHamiltonian { entries: m, params: params.clone(), shift })
}

/// `Σ_l |ψ(l, l)|²`.
pub fn doublon_weight(state: &[C64], basis: &FockBasis) -> f64 {
    (1..=basis.sites())
        .map(|l| state[basis.doublon_index(l).expect("valid site")].norm_sqr())
        .sum()
}

/// Eigenstates with doublon weight above `w_min`, by `Re E` descending.
pub fn doublon_band(spec: &SpectralDecomposition, basis: &FockBasis, w_min: f64) -> Result<Vec<usize>> {
    if !(w_min > 0.0 && w_min < 1.0) {
        return Err(invalid(format!("w_min must lie in (0, 1), got {w_min}")));
    }
    let mut band: Vec<usize> = (0..spec.dim()).filter(|&j| doublon_weight(&spec.vector(j), basis) > w_min).collect();
    band.sort_by(|&a, &b| spec.eigenvalues[b].re.total_cmp(&spec.eigenvalues[a].re).then(a.cmp(&b)));
    Ok(band)
}

/// The `n` eigenstates with the largest `Re E`, descending.
pub fn top_by_real_part(spec: &SpectralDecomposition, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..spec.dim()).collect();
    order.sort_by(|&a, &b| spec.eigenvalues[b].re.total_cmp(&spec.eigenvalues[a].re).then(a.cmp(&b)));
    order.truncate(n);
    order
}

/// Comparison of the weight-threshold band with the top-`L` selection by
/// `Re E`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub by_weight: Vec<usize>,
    pub by_real_part: Vec<usize>,
    /// In the weight band but not among the top `L`.
    pub only_by_weight: Vec<usize>,
    /// Among the top `L` but not in the weight band.
    pub only_by_real_part: Vec<usize>,
}

impl BandSelection {
    pub fn agree(&self) -> bool {
        self.only_by_weight.is_empty() && self.only_by_real_part.is_empty()
    }
}

pub fn compare_band_selections(spec: &SpectralDecomposition, basis: &FockBasis, w_min: f64) -> Result<BandSelection> {
    let by_weight = doublon_band(spec, basis, w_min)?;
    let by_real_part = top_by_real_part(spec, basis.sites());
    let only_by_weight = by_weight.iter().copied().filter(|j| !by_real_part.contains(j)).collect();
    let only_by_real_part = by_real_part.iter().copied().filter(|j| !by_weight.contains(j)).collect();
    Ok(BandSelection { by_weight, by_real_part, only_by_weight, only_by_real_part })
}

/// Largest distance from each effective eigenvalue to its nearest band
/// eigenvalue, and the reverse, whichever is larger.
pub fn band_deviation(band: &[C64], effective: &[C64]) -> f64 {
    let nearest = |x: &C64, set: &[C64]| set.iter().map(|y| (x - y).norm()).fold(f64::INFINITY, f64::min);
    let forward = effective.iter().map(|e| nearest(e, band)).fold(0.0, f64::max);
    let backward = band.iter().map(|e| nearest(e, effective)).fold(0.0, f64::max);
    forward.max(backward)
}

/// `(U, J²/U)` for each `U`.
pub fn pt_boundary_curve(j: f64, u_values: &[f64]) -> Result<Vec<(f64, f64)>> {
    u_values
        .iter()
        .map(|&u| {
            if !(u > 0.0) || !u.is_finite() {
                Err(invalid(format!("U must be positive, got {u}")))
            } else {
                Ok((u, j * j / u))
            }
        })
        .collect()
}

/// Exact bound-pair energies of the clean ring, `√(U² + 16J²cos²(K/2))`,
/// at the `L` allowed total momenta `K = 2πm/L`.
pub fn clean_bound_pair_energies(j: f64, u: f64, l: usize) -> Vec<f64> {
    (0..l)
        .map(|m| {
            let k = 2.0 * std::f64::consts::PI * m as f64 / l as f64;
            u.signum() * (u * u + 16.0 * j * j * (k / 2.0).cos().powi(2)).sqrt()
        })
        .collect()
}
