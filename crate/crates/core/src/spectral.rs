//! Full non-Hermitian eigendecomposition and PT-breaking indicators.

use std::cmp::Ordering;

use faer::linalg::solvers::DenseSolveCore;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{HamiltonianMatrix, ModelParams};
use crate::{CMat, C64};

/// Default threshold below which `|Im E|` counts as zero.
pub const DEFAULT_EPSILON_IM: f64 = 1e-6;

/// Relative residual bound accepted from the eigensolver.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Eigenvalues, unit-norm right eigenvectors and their inverse.
///
/// Column `j` of `right_vectors` belongs to `eigenvalues[j]`; row `j` of
/// `inverse_vectors` gives the biorthogonal expansion coefficient of any state
/// on that eigenvector. Eigenpairs are ordered by `(Re E, Im E)`.
#[derive(Clone, Debug)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<C64>,
    pub right_vectors: CMat,
    pub inverse_vectors: CMat,
    /// `max_j ‖H v_j − E_j v_j‖₂`.
    pub residual: f64,
    /// Norm estimate of `H` the residual is measured against.
    pub scale: f64,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Right eigenvector `j` as an owned vector.
    pub fn vector(&self, j: usize) -> Vec<C64> {
        self.right_vectors.col(j).iter().copied().collect()
    }

    /// Largest element of `|V V⁻¹ − I|`.
    pub fn inverse_defect(&self) -> f64 {
        let prod = &self.right_vectors * &self.inverse_vectors;
        let n = self.dim();
        let mut worst = 0.0f64;
        for k in 0..n {
            for i in 0..n {
                let target = if i == k { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) };
                worst = worst.max((prod[(i, k)] - target).norm());
            }
        }
        worst
    }
}

fn lexicographic(a: &C64, b: &C64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// `√(‖H‖₁ ‖H‖_∞)`, an upper bound on the spectral norm; never below 1 so
/// that tolerances stay absolute for tiny matrices.
pub fn norm_estimate(h: &CMat) -> f64 {
    let n = h.nrows();
    let mut col_max = 0.0f64;
    let mut row_sums = vec![0.0f64; n];
    for k in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            let a = h[(i, k)].norm();
            s += a;
            row_sums[i] += a;
        }
        col_max = col_max.max(s);
    }
    let row_max = row_sums.into_iter().fold(0.0, f64::max);
    (col_max * row_max).sqrt().max(1.0)
}

fn check_finite(h: &CMat) -> Result<()> {
    let n = h.nrows();
    for k in 0..n {
        for i in 0..n {
            let z = h[(i, k)];
            if !(z.re.is_finite() && z.im.is_finite()) {
                return Err(invalid(format!("matrix entry ({i}, {k}) is not finite")));
            }
        }
    }
    Ok(())
}

/// Eigenvalues only, sorted by `(Re, Im)`.
pub fn eigenvalues_of(h: &CMat) -> Result<Vec<C64>> {
    check_finite(h)?;
    let mut values = h.eigenvalues().map_err(|e| Error::Solver {
        message: format!("{e:?}"),
        residual: f64::NAN,
    })?;
    values.sort_by(lexicographic);
    Ok(values)
}

/// Eigenvalues of a Hamiltonian, sorted by `(Re, Im)`.
pub fn eigenvalues(h: &HamiltonianMatrix) -> Result<Vec<C64>> {
    eigenvalues_of(h.matrix())
}

/// Full eigendecomposition of a dense complex matrix.
pub fn eig_matrix(h: &CMat) -> Result<SpectralDecomposition> {
    check_finite(h)?;
    let n = h.nrows();
    let evd = h.eigen().map_err(|e| Error::Solver {
        message: format!("{e:?}"),
        residual: f64::NAN,
    })?;
    let values: Vec<C64> = evd.S().column_vector().iter().copied().collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lexicographic(&values[a], &values[b]));

    let u = evd.U();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = u.col(src);
        let norm = col.norm_l2();
        // fix the gauge: largest component real and positive
        let mut pivot = C64::new(0.0, 0.0);
        for z in col.iter() {
            if z.norm() > pivot.norm() {
                pivot = *z;
            }
        }
        let phase = if pivot.norm() > 0.0 { pivot.conj() / pivot.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            vectors[(i, dst)] = col[i] * phase / norm;
        }
    }
    drop(evd);
    let eigenvalues: Vec<C64> = order.iter().map(|&j| values[j]).collect();

    let scale = norm_estimate(h);
    let hv = h * &vectors;
    let mut residual = 0.0f64;
    for j in 0..n {
        let mut s = 0.0;
        for i in 0..n {
            s += (hv[(i, j)] - vectors[(i, j)] * eigenvalues[j]).norm_sqr();
        }
        residual = residual.max(s.sqrt());
    }
    drop(hv);
    if !(residual <= RESIDUAL_TOLERANCE * scale) {
        return Err(Error::Solver {
            message: "eigenpair residual above tolerance".into(),
            residual,
        });
    }
    let inverse_vectors = vectors.partial_piv_lu().inverse();
    Ok(SpectralDecomposition {
        eigenvalues,
        right_vectors: vectors,
        inverse_vectors,
        residual,
        scale,
    })
}

/// Full eigendecomposition of a Hamiltonian.
pub fn eig(h: &HamiltonianMatrix) -> Result<SpectralDecomposition> {
    eig_matrix(h.matrix())
}

/// Maximal imaginary part and density of complex eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PtDiagnostics {
    pub max_abs_imag: f64,
    pub rho_im: f64,
    pub d_im: usize,
    pub epsilon_im: f64,
}

/// `|Im E|_max` and `ρ_Im = D_Im / D` with `D_Im = #{j : |Im E_j| > ε}`.
pub fn pt_diagnostics(eigenvalues: &[C64], epsilon_im: f64) -> Result<PtDiagnostics> {
    if !(epsilon_im > 0.0) {
        return Err(invalid(format!("epsilon_im must be positive, got {epsilon_im}")));
    }
    if eigenvalues.is_empty() {
        return Err(invalid("empty spectrum"));
    }
    let max_abs_imag = eigenvalues.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
    let d_im = eigenvalues.iter().filter(|e| e.im.abs() > epsilon_im).count();
    Ok(PtDiagnostics {
        max_abs_imag,
        rho_im: d_im as f64 / eigenvalues.len() as f64,
        d_im,
        epsilon_im,
    })
}

/// Infinite-lattice two-boson spectrum at `U = 0` sampled on an `n_k × n_k`
/// momentum grid spanning `[−π, π]`.
///
/// Below the transition the spectrum is `2J(cos k + cos k')`; above it both
/// momenta acquire the imaginary shift `h = ln(μ/J)`.
pub fn free_two_boson_spectrum(params: &ModelParams, n_k: usize) -> Result<Vec<C64>> {
    if n_k < 2 {
        return Err(invalid(format!("need at least 2 momentum samples, got {n_k}")));
    }
    let (j, mu) = (params.j, params.mu);
    let shift = if mu.abs() <= j.abs() {
        0.0
    } else {
        if mu / j <= 0.0 {
            return Err(Error::Domain(format!(
                "ln(mu/J) undefined for mu = {mu}, J = {j}; both are taken positive"
            )));
        }
        (mu / j).ln()
    };
    let ks: Vec<f64> = (0..n_k)
        .map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (n_k - 1) as f64)
        .collect();
    let band: Vec<C64> = ks
        .iter()
        .map(|&k| 2.0 * j * C64::new(k, -shift).cos())
        .collect();
    let mut out = Vec::with_capacity(n_k * n_k);
    for a in &band {
        for b in &band {
            out.push(a + b);
        }
    }
    Ok(out)
}

/// Smallest `μ` in a row at which `|Im E|_max` exceeds `epsilon_im`,
/// linearly interpolated between the bracketing grid points.
///
/// `None` if the row never crosses.
pub fn pt_threshold(mu: &[f64], max_abs_imag: &[f64], epsilon_im: f64) -> Option<f64> {
    assert_eq!(mu.len(), max_abs_imag.len());
    let k = max_abs_imag.iter().position(|&v| v > epsilon_im)?;
    if k == 0 {
        return Some(mu[0]);
    }
    let (y0, y1) = (max_abs_imag[k - 1], max_abs_imag[k]);
    let frac = ((epsilon_im - y0) / (y1 - y0)).clamp(0.0, 1.0);
    Some(mu[k - 1] + frac * (mu[k] - mu[k - 1]))
}

/// Locates a sign change of `predicate` in `[lo, hi]` by bisection, assuming
/// it is false at `lo` and true at `hi`. Returns the final bracket midpoint.
pub fn bisect_transition<F>(mut lo: f64, mut hi: f64, tol: f64, mut predicate: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<bool>,
{
    if predicate(lo)? {
        return Err(invalid(format!("transition lies below {lo}")));
    }
    if !predicate(hi)? {
        return Err(invalid(format!("transition lies above {hi}")));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if predicate(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_basis, build_hamiltonian, build_single_particle_hamiltonian};

    #[test]
    fn hermitian_spectrum_is_real() {
        let p = ModelParams::new(9).with_u(1.3);
        let h = build_hamiltonian(&p, &build_basis(9).unwrap()).unwrap();
        let s = eig(&h).unwrap();
        assert!(s.eigenvalues.iter().all(|e| e.im.abs() < 1e-10));
    }

    #[test]
    fn decomposition_invariants() {
        let p = ModelParams::new(8).with_mu(1.2).with_u(0.8);
        let h = build_hamiltonian(&p, &build_basis(8).unwrap()).unwrap();
        let s = eig(&h).unwrap();
        assert!(s.residual < 1e-8 * s.scale);
        assert!(s.inverse_defect() < 1e-8);
        for j in 0..s.dim() {
            assert!((s.right_vectors.col(j).norm_l2() - 1.0).abs() < 1e-12);
        }
        for w in s.eigenvalues.windows(2) {
            assert_ne!(lexicographic(&w[0], &w[1]), Ordering::Greater);
        }
        let tr: C64 = s.eigenvalues.iter().sum();
        assert!((tr - h.trace()).norm() <= 1e-8 * h.trace().norm().max(1.0));
    }

    #[test]
    fn eigenvalues_only_agree_with_full() {
        let p = ModelParams::new(7).with_mu(1.5).with_u(2.0);
        let h = build_hamiltonian(&p, &build_basis(7).unwrap()).unwrap();
        let a = eigenvalues(&h).unwrap();
        let b = eig(&h).unwrap().eigenvalues;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = CMat::zeros(3, 3);
        m[(1, 2)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(eig_matrix(&m), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn pt_counts() {
        let e = [C64::new(1.0, 0.0), C64::new(2.0, 1e-3), C64::new(0.0, -0.5), C64::new(3.0, 1e-9)];
        let d = pt_diagnostics(&e, 1e-6).unwrap();
        assert_eq!(d.d_im, 2);
        assert_eq!(d.rho_im, 0.5);
        assert_eq!(d.max_abs_imag, 0.5);
        assert!(pt_diagnostics(&e, 0.0).is_err());
    }

    #[test]
    fn free_spectrum_branches() {
        let below = free_two_boson_spectrum(&ModelParams::new(5).with_mu(0.5), 41).unwrap();
        assert!(below.iter().all(|e| e.im == 0.0 && e.re.abs() <= 4.0 + 1e-12));
        let above = free_two_boson_spectrum(&ModelParams::new(5).with_mu(1.5), 401).unwrap();
        let max_im = above.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
        // 2J·2 sinh(h) at k = k' = ±π/2, h = ln 1.5
        assert!((max_im - 4.0 * 1.5f64.ln().sinh()).abs() < 1e-3);
        assert!((max_im - 5.0 / 3.0).abs() < 1e-3);
        let at = free_two_boson_spectrum(&ModelParams::new(5).with_mu(1.0), 11).unwrap();
        assert!(at.iter().all(|e| e.im == 0.0));
        assert!(matches!(
            free_two_boson_spectrum(&ModelParams::new(5).with_mu(-1.5), 11),
            Err(Error::Domain(_))
        ));
        assert!(free_two_boson_spectrum(&ModelParams::new(5), 1).is_err());
    }

    #[test]
    fn single_particle_bands() {
        // large-L spectra approach the analytic segment/ellipse; reality below
        // the transition is exact only when αL is an integer
        let p = ModelParams::new(144).with_mu(0.5).with_rational_alpha();
        let e = eigenvalues(&build_single_particle_hamiltonian(&p).unwrap()).unwrap();
        assert!(e.iter().all(|z| z.im.abs() < 1e-6 && z.re.abs() <= 2.0 + 1e-6));
        let p = ModelParams::new(144).with_mu(1.5);
        let e = eigenvalues(&build_single_particle_hamiltonian(&p).unwrap()).unwrap();
        let h = 1.5f64.ln();
        for z in e {
            // points on 2cos(k − ih): (Re/2cosh h)² + (Im/2sinh h)² = 1
            let r = (z.re / (2.0 * h.cosh())).powi(2) + (z.im / (2.0 * h.sinh())).powi(2);
            assert!((r - 1.0).abs() < 0.05, "{z}");
        }
    }

    #[test]
    fn threshold_interpolation() {
        let mu = [0.0, 0.1, 0.2, 0.3];
        assert_eq!(pt_threshold(&mu, &[0.0, 0.0, 0.0, 0.0], 1e-6), None);
        assert_eq!(pt_threshold(&mu, &[1.0, 1.0, 1.0, 1.0], 1e-6), Some(0.0));
        let t = pt_threshold(&mu, &[0.0, 0.0, 2e-6, 1.0], 1e-6).unwrap();
        assert!((t - 0.15).abs() < 1e-12);
    }

    #[test]
    fn bisection_brackets() {
        let t = bisect_transition(0.0, 1.0, 1e-6, |x| Ok(x > 0.37)).unwrap();
        assert!((t - 0.37).abs() < 1e-6);
        assert!(bisect_transition(0.5, 1.0, 1e-3, |x| Ok(x > 0.37)).is_err());
    }
}
