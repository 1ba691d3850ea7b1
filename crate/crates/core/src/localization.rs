//! Inverse and normalized participation ratios, their aggregates, and the
//! extended/critical/localized classification.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::SpectralDecomposition;
use crate::C64;

/// Default IPR threshold separating "vanishing" from "finite".
pub const DEFAULT_TAU_LOC: f64 = 0.01;

const NORM_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Extended,
    Critical,
    Localized,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Extended => "extended",
            Phase::Critical => "critical",
            Phase::Localized => "localized",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub ipr_per_state: Vec<f64>,
    pub ipr_max: f64,
    pub ipr_min: f64,
    pub ipr_ave: f64,
    pub npr_ave: f64,
    /// `log₁₀(IPR_ave · NPR_ave)`.
    pub zeta: f64,
    pub tau_loc: f64,
    pub phase: Phase,
}

fn ipr_unchecked<'a>(amplitudes: impl Iterator<Item = &'a C64>) -> (f64, f64) {
    amplitudes.fold((0.0, 0.0), |(norm, ipr), z| {
        let p = z.norm_sqr();
        (norm + p, ipr + p * p)
    })
}

/// `Σ_n |ψ_n|⁴` of a normalized state.
pub fn ipr(state: &[C64]) -> Result<f64> {
    let (norm, value) = ipr_unchecked(state.iter());
    if state.is_empty() || (norm - 1.0).abs() > NORM_TOLERANCE {
        return Err(invalid(format!("state is not normalized (‖ψ‖² = {norm})")));
    }
    Ok(value)
}

/// `1 / (D · IPR)`.
pub fn npr(state: &[C64]) -> Result<f64> {
    Ok(1.0 / (state.len() as f64 * ipr(state)?))
}

/// Per-state IPRs and their aggregates for every eigenvector.
pub fn summarize(spec: &SpectralDecomposition, tau_loc: f64) -> Result<LocalizationSummary> {
    let d = spec.dim();
    if !(tau_loc > 1.0 / d as f64 && tau_loc < 1.0) {
        return Err(invalid(format!("tau_loc must lie in (1/D, 1), got {tau_loc}")));
    }
    let ipr_per_state = (0..d)
        .map(|j| ipr(spec.right_vectors.col(j).try_as_col_major().unwrap().as_slice()))
        .collect::<Result<Vec<_>>>()?;
    Ok(summary_from_iprs(ipr_per_state, tau_loc))
}

/// Aggregates a list of per-state IPRs.
pub fn summary_from_iprs(ipr_per_state: Vec<f64>, tau_loc: f64) -> LocalizationSummary {
    let d = ipr_per_state.len() as f64;
    let ipr_max = ipr_per_state.iter().copied().fold(f64::MIN, f64::max);
    let ipr_min = ipr_per_state.iter().copied().fold(f64::MAX, f64::min);
    let ipr_ave = ipr_per_state.iter().sum::<f64>() / d;
    let npr_ave = ipr_per_state.iter().map(|v| 1.0 / (d * v)).sum::<f64>() / d;
    let phase = if ipr_max < tau_loc {
        Phase::Extended
    } else if ipr_min > tau_loc {
        Phase::Localized
    } else {
        Phase::Critical
    };
    LocalizationSummary {
        zeta: (ipr_ave * npr_ave).log10(),
        ipr_per_state,
        ipr_max,
        ipr_min,
        ipr_ave,
        npr_ave,
        tau_loc,
        phase,
    }
}

/// One eigenstate in the complex-energy/IPR plane.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MobilityRow {
    pub re_e: f64,
    pub im_e: f64,
    pub ipr: f64,
}

/// Every eigenstate as `(Re E, Im E, IPR)`, sorted by `Re E`.
pub fn mobility_edge_map(spec: &SpectralDecomposition, summary: &LocalizationSummary) -> Vec<MobilityRow> {
    let mut rows: Vec<MobilityRow> = spec
        .eigenvalues
        .iter()
        .zip(&summary.ipr_per_state)
        .map(|(e, &ipr)| MobilityRow { re_e: e.re, im_e: e.im, ipr })
        .collect();
    rows.sort_by(|a, b| a.re_e.total_cmp(&b.re_e).then(a.im_e.total_cmp(&b.im_e)));
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_basis, build_hamiltonian, ModelParams};
    use crate::spectral::eig;
    use proptest::prelude::*;

    fn unit(d: usize, k: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[k] = C64::new(1.0, 0.0);
        v
    }

    #[test]
    fn extremes() {
        let d = 10;
        assert_eq!(ipr(&unit(d, 3)).unwrap(), 1.0);
        assert!((npr(&unit(d, 3)).unwrap() - 0.1).abs() < 1e-15);
        let flat = vec![C64::new(1.0 / (d as f64).sqrt(), 0.0); d];
        assert!((ipr(&flat).unwrap() - 0.1).abs() < 1e-14);
        assert!((npr(&flat).unwrap() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn unnormalized_rejected() {
        assert!(ipr(&[C64::new(1.0, 0.0), C64::new(1.0, 0.0)]).is_err());
        assert!(ipr(&[]).is_err());
    }

    #[test]
    fn classification() {
        let s = summary_from_iprs(vec![0.001, 0.002], 0.01);
        assert_eq!(s.phase, Phase::Extended);
        let s = summary_from_iprs(vec![0.001, 0.5], 0.01);
        assert_eq!(s.phase, Phase::Critical);
        let s = summary_from_iprs(vec![0.2, 0.5], 0.01);
        assert_eq!(s.phase, Phase::Localized);
        assert!((s.zeta - (s.ipr_ave * s.npr_ave).log10()).abs() == 0.0);
    }

    #[test]
    fn clean_lattice_is_delocalized() {
        // a twist and an interaction lift the k ↔ −k degeneracies that would
        // otherwise let the solver return arbitrary mixtures
        let l = 21;
        let basis = build_basis(l).unwrap();
        let h = build_hamiltonian(&ModelParams::new(l).with_u(1.0).with_theta(1.0), &basis).unwrap();
        let spec = eig(&h).unwrap();
        let s = summarize(&spec, DEFAULT_TAU_LOC).unwrap();
        let d = basis.dim() as f64;
        // bound pairs concentrate in the relative coordinate but every state
        // stays delocalized along the centre of mass
        assert!(s.ipr_max < 2.0 / l as f64, "ipr_max {}", s.ipr_max);
        assert!(s.ipr_min * d >= 1.0 - 1e-9);
        let rows = mobility_edge_map(&spec, &s);
        assert_eq!(rows.len(), basis.dim());
        assert!(rows.windows(2).all(|w| w[0].re_e <= w[1].re_e));
    }

    #[test]
    fn extended_state_has_large_npr() {
        let l = 34;
        let basis = build_basis(l).unwrap();
        let h = build_hamiltonian(&ModelParams::new(l).with_mu(0.3).with_u(0.8), &basis).unwrap();
        let spec = eig(&h).unwrap();
        let s = summarize(&spec, DEFAULT_TAU_LOC).unwrap();
        let j = s.ipr_per_state.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(npr(&spec.vector(j)).unwrap() > 0.1);
        assert!(summarize(&spec, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn ipr_bounds_and_permutation(raw in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2..40), seed in 0usize..1000) {
            let norm: f64 = raw.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt();
            prop_assume!(norm > 1e-3);
            let v: Vec<C64> = raw.iter().map(|&(a, b)| C64::new(a, b) / norm).collect();
            let d = v.len() as f64;
            let x = ipr(&v).unwrap();
            prop_assert!(x >= 1.0 / d - 1e-12 && x <= 1.0 + 1e-12);
            prop_assert!((x * npr(&v).unwrap() * d - 1.0).abs() < 1e-12);
            let mut w = v.clone();
            w.rotate_left(seed % v.len());
            w.reverse();
            prop_assert!((ipr(&w).unwrap() - x).abs() < 1e-14);
        }
    }
}
