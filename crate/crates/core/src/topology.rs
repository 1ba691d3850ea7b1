//! Spectral winding numbers of `det[H(θ) − E_B]` as the twist `θ` runs over
//! `[0, 2π]`.
//!
//! Two independent evaluations are provided:
//!
//! - [`winding_number`] samples `θ`, takes the determinant phase from an LU
//!   factorization and unwraps it, bisecting any step whose phase jump exceeds
//!   `π/2`.
//! - [`winding_number_pencil`] uses `H(θ) = K + z V` with `z = e^{iθ/L}` and
//!   diagonal `V`, so `det[H(θ) − E_B] ∝ Π_i (z − z_i)` with `z_i` the
//!   eigenvalues of `−V⁻¹(K − E_B)`. The phase change of each factor along
//!   the arc `z: 1 → e^{2πi/L}` is exact, so one eigenvalue solve replaces the
//!   whole sweep.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::localization::LocalizationSummary;
use crate::model::{FockBasis, ModelParams, TwistFamily};
use crate::spectral::{eigenvalues_of, norm_estimate, SpectralDecomposition};
use crate::{CMat, C64};

/// Default number of twist samples before adaptive refinement.
pub const DEFAULT_N_THETA: usize = 256;

/// Largest accepted distance of the accumulated phase from an integer.
pub const QUANTIZATION_TOLERANCE: f64 = 0.05;

/// Default imaginary offset added to real base energies.
pub const DEFAULT_BASE_OFFSET: f64 = 1e-3;

const MAX_BISECTION_DEPTH: u32 = 24;
const SINGULAR_PIVOT: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum WindingMethod {
    /// LU determinant phase on `n_theta` twist samples plus refinement.
    LogDet { n_theta: usize },
    /// Exact phase from the eigenvalues of the potential pencil.
    Pencil,
}

impl Default for WindingMethod {
    fn default() -> Self {
        WindingMethod::LogDet { n_theta: DEFAULT_N_THETA }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingResult {
    pub value: i64,
    /// Accumulated phase divided by `2π`, before rounding.
    pub raw_phase: f64,
    /// Determinant evaluations used (zero for the pencil route).
    pub n_theta: usize,
    pub base_energy: C64,
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

fn permutation_parity(forward: &[usize]) -> bool {
    let mut seen = vec![false; forward.len()];
    let mut odd = false;
    for start in 0..forward.len() {
        if seen[start] {
            continue;
        }
        let mut len = 0;
        let mut k = start;
        while !seen[k] {
            seen[k] = true;
            k = forward[k];
            len += 1;
        }
        if len % 2 == 0 {
            odd = !odd;
        }
    }
    odd
}

/// Phase of `det m` and its smallest relative LU pivot, without forming the
/// determinant itself.
pub fn det_phase(m: &CMat) -> (f64, f64) {
    let scale = norm_estimate(m);
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let mut phase = 0.0;
    let mut min_pivot = f64::INFINITY;
    for i in 0..u.nrows() {
        let p = u[(i, i)];
        phase += p.arg();
        min_pivot = min_pivot.min(p.norm() / scale);
    }
    let (fwd, _) = lu.P().arrays();
    if permutation_parity(fwd) {
        phase += PI;
    }
    (wrap(phase), min_pivot)
}

fn check_pivot(e_b: C64, min_pivot: f64) -> Result<()> {
    if !(min_pivot > SINGULAR_PIVOT) {
        return Err(Error::SingularBase { re: e_b.re, im: e_b.im, min_pivot });
    }
    Ok(())
}

fn finish(raw_phase: f64, n_theta: usize, base_energy: C64) -> Result<WindingResult> {
    let value = raw_phase.round();
    if (raw_phase - value).abs() >= QUANTIZATION_TOLERANCE {
        return Err(Error::NotQuantized { raw: raw_phase });
    }
    Ok(WindingResult { value: value as i64, raw_phase, n_theta, base_energy })
}

struct Sweep<'a> {
    family: &'a TwistFamily,
    e_b: C64,
    evaluations: usize,
}

impl Sweep<'_> {
    fn phase(&mut self, theta: f64) -> Result<f64> {
        self.evaluations += 1;
        let (phase, pivot) = det_phase(&self.family.shifted_at(theta, self.e_b));
        check_pivot(self.e_b, pivot)?;
        Ok(phase)
    }

    fn refine(&mut self, t0: f64, p0: f64, t1: f64, p1: f64, depth: u32) -> Result<f64> {
        let step = wrap(p1 - p0);
        if step.abs() <= PI / 2.0 || depth >= MAX_BISECTION_DEPTH {
            return Ok(step);
        }
        let tm = 0.5 * (t0 + t1);
        let pm = self.phase(tm)?;
        Ok(self.refine(t0, p0, tm, pm, depth + 1)? + self.refine(tm, pm, t1, p1, depth + 1)?)
    }

    fn run(&mut self, n_theta: usize) -> Result<f64> {
        let thetas: Vec<f64> = (0..=n_theta).map(|k| 2.0 * PI * k as f64 / n_theta as f64).collect();
        let (family, e_b) = (self.family, self.e_b);
        let phases = thetas
            .par_iter()
            .map(|&t| {
                let (phase, pivot) = det_phase(&family.shifted_at(t, e_b));
                check_pivot(e_b, pivot).map(|_| phase)
            })
            .collect::<Result<Vec<_>>>()?;
        self.evaluations += phases.len();
        let mut total = 0.0;
        for k in 0..n_theta {
            total += self.refine(thetas[k], phases[k], thetas[k + 1], phases[k + 1], 0)?;
        }
        Ok(total / (2.0 * PI))
    }
}

/// Winding number of a twist family around `e_b` by sampled determinant
/// phases. A non-quantized result is retried once at twice the sampling.
pub fn winding_number_family(family: &TwistFamily, e_b: C64, n_theta: usize) -> Result<WindingResult> {
    if n_theta < 64 {
        return Err(invalid(format!("n_theta must be at least 64, got {n_theta}")));
    }
    let mut sweep = Sweep { family, e_b, evaluations: 0 };
    let raw = sweep.run(n_theta)?;
    match finish(raw, sweep.evaluations, e_b) {
        Err(Error::NotQuantized { .. }) => {
            let raw = sweep.run(2 * n_theta)?;
            finish(raw, sweep.evaluations, e_b)
        }
        other => other,
    }
}

/// Winding number of the two-boson Hamiltonian around `e_b`.
pub fn winding_number(params: &ModelParams, e_b: C64, n_theta: usize) -> Result<WindingResult> {
    let basis = FockBasis::new(params.l)?;
    winding_number_family(&TwistFamily::two_boson(params, &basis)?, e_b, n_theta)
}

/// Winding number of the single-particle Hamiltonian around `e_b`.
pub fn single_particle_winding_number(params: &ModelParams, e_b: C64, n_theta: usize) -> Result<WindingResult> {
    winding_number_family(&TwistFamily::single_particle(params)?, e_b, n_theta)
}

/// Roots `z_i` of `det[K − E_B + z V]` as a polynomial in `z`. Requires
/// every diagonal potential entry to be nonzero, which fails when two onsite
/// phases are exactly opposite (even `L` with a rational `α`).
pub fn pencil_roots(family: &TwistFamily, e_b: C64) -> Result<Vec<C64>> {
    let v = family.potential();
    let vmax = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if v.iter().any(|x| !(x.norm() > 1e-12 * vmax)) {
        return Err(invalid("potential has vanishing diagonal entries; pencil route unavailable"));
    }
    let n = family.dim();
    let k = family.static_part();
    let mut m = CMat::zeros(n, n);
    for c in 0..n {
        for r in 0..n {
            let shift = if r == c { e_b } else { C64::new(0.0, 0.0) };
            m[(r, c)] = -(k[(r, c)] - shift) / v[r];
        }
    }
    eigenvalues_of(&m)
}

/// Winding number of a twist family around `e_b` from the pencil roots.
pub fn winding_number_pencil_family(family: &TwistFamily, e_b: C64) -> Result<WindingResult> {
    if family.potential().iter().all(|v| *v == C64::new(0.0, 0.0)) {
        return finish(0.0, 0, e_b);
    }
    let roots = pencil_roots(family, e_b)?;
    let half = PI / family.sites() as f64;
    let start = C64::new(1.0, 0.0);
    let end = C64::from_polar(1.0, 2.0 * half);
    let mid_dir = C64::from_polar(1.0, -half);
    let mut total = 0.0;
    for z in roots {
        let on_arc = (z.norm() - 1.0).abs() < 1e-12 && {
            let a = z.arg().rem_euclid(2.0 * PI);
            a <= 2.0 * half + 1e-12 || a >= 2.0 * PI - 1e-12
        };
        if on_arc {
            return Err(Error::SingularBase { re: e_b.re, im: e_b.im, min_pivot: 0.0 });
        }
        total += ((end - z) / (start - z)).arg();
        if z.norm() < 1.0 && (z * mid_dir).re > half.cos() {
            total += 2.0 * PI;
        }
    }
    finish(total / (2.0 * PI), 0, e_b)
}

/// Pencil-route winding number of the two-boson Hamiltonian.
pub fn winding_number_pencil(params: &ModelParams, e_b: C64) -> Result<WindingResult> {
    let basis = FockBasis::new(params.l)?;
    winding_number_pencil_family(&TwistFamily::two_boson(params, &basis)?, e_b)
}

/// Runs the chosen evaluation route.
pub fn winding_with(family: &TwistFamily, e_b: C64, method: WindingMethod) -> Result<WindingResult> {
    match method {
        WindingMethod::LogDet { n_theta } => winding_number_family(family, e_b, n_theta),
        WindingMethod::Pencil => winding_number_pencil_family(family, e_b),
    }
}

/// `(Re E_{j₁}, Re E_{j₂})` where `j₁` has the largest IPR (first state to
/// localize) and `j₂` the smallest (last state to localize).
pub fn select_base_energies(spec: &SpectralDecomposition, localization: &LocalizationSummary) -> (f64, f64) {
    let iprs = &localization.ipr_per_state;
    let argmax = (0..iprs.len()).max_by(|&a, &b| iprs[a].total_cmp(&iprs[b])).expect("non-empty spectrum");
    let argmin = (0..iprs.len()).min_by(|&a, &b| iprs[a].total_cmp(&iprs[b])).expect("non-empty spectrum");
    (spec.eigenvalues[argmax].re, spec.eigenvalues[argmin].re)
}

/// Eigenvalues and IPRs of one point of a `μ` scan at fixed `U`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPoint {
    pub mu: f64,
    pub energies: Vec<C64>,
    pub iprs: Vec<f64>,
}

fn argmax_by(iprs: &[f64], larger: bool) -> usize {
    let cmp = |a: &usize, b: &usize| iprs[*a].total_cmp(&iprs[*b]);
    let it = 0..iprs.len();
    if larger { it.max_by(cmp) } else { it.min_by(cmp) }.expect("non-empty scan point")
}

/// Base energies fixed once for a whole `μ` scan: `E_B1` is `Re E` of the
/// most localized state at the first `μ` where `IPR_max > tau`, and `E_B2`
/// is `Re E` of the least localized state at the last `μ` before
/// `IPR_min > tau`. `None` where the scan never crosses.
pub fn scan_base_energies(scan: &[ScanPoint], tau: f64) -> (Option<f64>, Option<f64>) {
    let mut order: Vec<&ScanPoint> = scan.iter().filter(|p| !p.iprs.is_empty()).collect();
    order.sort_by(|a, b| a.mu.total_cmp(&b.mu));
    let max = |p: &ScanPoint| p.iprs[argmax_by(&p.iprs, true)];
    let min = |p: &ScanPoint| p.iprs[argmax_by(&p.iprs, false)];
    let e1 = order.iter().find(|p| max(p) > tau).map(|p| p.energies[argmax_by(&p.iprs, true)].re);
    let e2 = order
        .iter()
        .position(|p| min(p) > tau)
        .filter(|&k| k > 0)
        .map(|k| order[k - 1])
        .map(|p| p.energies[argmax_by(&p.iprs, false)].re);
    (e1, e2)
}

/// Options for [`winding_pair`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindingOptions {
    pub method: WindingMethod,
    /// Imaginary offset `η`; windings are evaluated at `E_B + iη` so that a
    /// base energy taken from a real eigenvalue does not sit on the spectrum.
    pub base_offset: f64,
}

impl Default for WindingOptions {
    fn default() -> Self {
        Self { method: WindingMethod::default(), base_offset: DEFAULT_BASE_OFFSET }
    }
}

/// `(w₁, w₂)` at the base energies chosen by [`select_base_energies`].
pub fn winding_pair(
    params: &ModelParams,
    spec: &SpectralDecomposition,
    localization: &LocalizationSummary,
    options: WindingOptions,
) -> Result<(WindingResult, WindingResult)> {
    let basis = FockBasis::new(params.l)?;
    let family = TwistFamily::two_boson(params, &basis)?;
    let (e1, e2) = select_base_energies(spec, localization);
    let w1 = winding_with(&family, C64::new(e1, options.base_offset), options.method)?;
    let w2 = winding_with(&family, C64::new(e2, options.base_offset), options.method)?;
    Ok((w1, w2))
}
