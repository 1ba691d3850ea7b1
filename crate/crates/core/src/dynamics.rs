//! Postselected (renormalized) nonunitary evolution of two-boson wavepackets
//! and the forecast of non-Hermitian jumps between dominant eigenstates.
//!
//! The state is expanded biorthogonally, `c = V⁻¹ψ₀`, so that
//! `V e^{−iΛt} c = e^{−iHt} ψ₀`. Mode amplitudes are evaluated as
//! `ln|c_j| + t·Im E_j` and shifted by their maximum before exponentiation;
//! `t·Im E` reaches `~2·10⁴` at the longest times of interest.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::FockBasis;
use crate::spectral::SpectralDecomposition;
use crate::C64;

/// Relative size below which every biorthogonal coefficient counts as zero.
const ZERO_COEFFICIENT: f64 = 1e-300;

/// Rates closer than this are treated as equal.
pub const DEGENERATE_RATE: f64 = 1e-12;

const TIME_CHUNK: usize = 64;

/// `|2_{l₀}⟩` with `l₀ = ⌈L/2⌉`.
pub fn initial_doublon_state(basis: &FockBasis) -> Vec<C64> {
    let l0 = basis.sites().div_ceil(2);
    let mut psi = vec![C64::new(0.0, 0.0); basis.dim()];
    psi[basis.doublon_index(l0).expect("⌈L/2⌉ is a valid site")] = C64::new(1.0, 0.0);
    psi
}

/// `ρ_l = ½⟨n̂_l⟩` for a normalized two-boson state.
pub fn site_density(basis: &FockBasis, state: &[C64]) -> Vec<f64> {
    let mut rho = vec![0.0; basis.sites()];
    for (index, &(a, b)) in basis.pairs().iter().enumerate() {
        let p = state[index].norm_sqr();
        rho[a - 1] += 0.5 * p;
        rho[b - 1] += 0.5 * p;
    }
    rho
}

/// 1-based site with the largest density.
pub fn peak_site(basis: &FockBasis, state: &[C64]) -> usize {
    let rho = site_density(basis, state);
    (0..rho.len()).max_by(|&a, &b| rho[a].total_cmp(&rho[b]).then(b.cmp(&a))).unwrap() + 1
}

/// `per_decade` log-spaced points from `t_min` to `t_max` inclusive.
pub fn log_time_grid(t_min: f64, t_max: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min && per_decade >= 1) {
        return Err(invalid(format!(
            "log grid needs 0 < t_min < t_max and per_decade ≥ 1, got ({t_min}, {t_max}, {per_decade})"
        )));
    }
    let (a, b) = (t_min.log10(), t_max.log10());
    let n = ((b - a) * per_decade as f64).round().max(1.0) as usize;
    Ok((0..=n).map(|k| 10f64.powf(a + (b - a) * k as f64 / n as f64)).collect())
}

/// Default time grid: 64 points per decade over `[10⁻¹, 10⁴]`.
pub fn default_time_grid() -> Vec<f64> {
    log_time_grid(0.1, 1e4, 64).expect("valid default grid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    /// Per time, `ρ_l` for sites `1..=L` (stored at `l − 1`).
    pub densities: Vec<Vec<f64>>,
    /// Per time, the normalized state, when requested.
    pub states: Option<Vec<Vec<C64>>>,
    /// Per time, `ln‖e^{−iHt}ψ₀‖`.
    pub log_norm: Vec<f64>,
}

/// `c = V⁻¹ψ₀`.
pub fn biorthogonal_coefficients(spec: &SpectralDecomposition, psi0: &[C64]) -> Result<Vec<C64>> {
    let d = spec.dim();
    if psi0.len() != d {
        return Err(invalid(format!("state has length {} but the basis has {d}", psi0.len())));
    }
    let w = &spec.inverse_vectors;
    Ok((0..d).map(|j| (0..d).map(|n| w[(j, n)] * psi0[n]).sum()).collect())
}

/// `|⟨ψ_j|ψ₀⟩|` with unit-norm right eigenvectors.
pub fn right_overlaps(spec: &SpectralDecomposition, psi0: &[C64]) -> Result<Vec<f64>> {
    let d = spec.dim();
    if psi0.len() != d {
        return Err(invalid(format!("state has length {} but the basis has {d}", psi0.len())));
    }
    let v = &spec.right_vectors;
    Ok((0..d).map(|j| (0..d).map(|n| v[(n, j)].conj() * psi0[n]).sum::<C64>().norm()).collect())
}

/// Evolves `psi0` under `H` and renormalizes at each time.
pub fn propagate(
    basis: &FockBasis,
    spec: &SpectralDecomposition,
    psi0: &[C64],
    times: &[f64],
    keep_states: bool,
) -> Result<EvolutionTrace> {
    if basis.dim() != spec.dim() {
        return Err(invalid("basis and decomposition dimensions differ"));
    }
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(invalid(format!("times must be finite and non-negative, got {t}")));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be sorted ascending"));
    }
    let c = biorthogonal_coefficients(spec, psi0)?;
    let cmax = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if !(cmax > ZERO_COEFFICIENT) {
        return Err(Error::DegenerateInitialState);
    }
    let log_c: Vec<f64> = c.iter().map(|x| x.norm().ln()).collect();
    let arg_c: Vec<f64> = c.iter().map(|x| x.arg()).collect();
    let d = spec.dim();

    let mut trace = EvolutionTrace {
        times: times.to_vec(),
        densities: Vec::with_capacity(times.len()),
        states: keep_states.then(Vec::new),
        log_norm: Vec::with_capacity(times.len()),
    };
    for chunk in times.chunks(TIME_CHUNK) {
        let mut shifts = vec![0.0; chunk.len()];
        let mut modes = Mat::<C64>::zeros(d, chunk.len());
        for (k, &t) in chunk.iter().enumerate() {
            let shift = (0..d)
                .filter(|&j| log_c[j] > f64::NEG_INFINITY)
                .map(|j| log_c[j] + t * spec.eigenvalues[j].im)
                .fold(f64::NEG_INFINITY, f64::max);
            shifts[k] = shift;
            for j in 0..d {
                let m = log_c[j] + t * spec.eigenvalues[j].im;
                modes[(j, k)] = if m == f64::NEG_INFINITY {
                    C64::new(0.0, 0.0)
                } else {
                    C64::from_polar((m - shift).exp(), arg_c[j] - t * spec.eigenvalues[j].re)
                };
            }
        }
        let states = &spec.right_vectors * &modes;
        for k in 0..chunk.len() {
            let col = states.col(k);
            let norm = col.norm_l2();
            let psi: Vec<C64> = (0..d).map(|n| col[n] / norm).collect();
            trace.log_norm.push(shifts[k] + norm.ln());
            trace.densities.push(site_density(basis, &psi));
            if let Some(states) = trace.states.as_mut() {
                states.push(psi);
            }
        }
    }
    Ok(trace)
}

/// One of the slowest-decaying (fastest-growing) eigenstates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedState {
    /// Index into the sorted eigenvalue list.
    pub index: usize,
    pub peak_site: usize,
    pub re_e: f64,
    pub im_e: f64,
    /// `|⟨ψ_j|ψ₀⟩|`.
    pub overlap: f64,
    /// `|(V⁻¹ψ₀)_j|`.
    pub biorthogonal: f64,
}

/// A change of the dominant state in the renormalized evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    /// Ranks (0-based positions in `ranked_states`).
    pub from: usize,
    pub to: usize,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpForecast {
    /// Top-k states, `Im E` strictly descending.
    pub ranked_states: Vec<RankedState>,
    /// Jumps predicted from the right-vector overlaps.
    pub jumps: Vec<Jump>,
    /// Jumps predicted from the biorthogonal coefficients, which govern the
    /// actual evolution.
    pub biorthogonal_jumps: Vec<Jump>,
}

impl JumpForecast {
    pub fn predicted_jump_times(&self) -> Vec<f64> {
        self.jumps.iter().map(|j| j.time).collect()
    }
}

/// Sequence of dominant lines `ln c_i + t·s_i` for `t ≥ 0`. Lines with
/// `c_i = 0` never dominate.
pub fn dominance_jumps(weights: &[f64], rates: &[f64]) -> Vec<Jump> {
    let log_c: Vec<f64> = weights.iter().map(|c| c.ln()).collect();
    let Some(mut current) = (0..weights.len())
        .filter(|&i| weights[i] > 0.0)
        .max_by(|&a, &b| log_c[a].total_cmp(&log_c[b]).then(rates[a].total_cmp(&rates[b])))
    else {
        return Vec::new();
    };
    let mut jumps = Vec::new();
    loop {
        let next = (0..weights.len())
            .filter(|&i| weights[i] > 0.0 && rates[i] > rates[current])
            .map(|i| (i, (log_c[current] - log_c[i]) / (rates[i] - rates[current])))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(rates[b.0].total_cmp(&rates[a.0])));
        match next {
            Some((i, t)) => {
                jumps.push(Jump { from: current, to: i, time: t.max(0.0) });
                current = i;
            }
            None => return jumps,
        }
    }
}

/// Ranks the `k` states with the largest `Im E` and predicts when each takes
/// over the renormalized evolution from `psi0`.
pub fn jump_forecast(
    basis: &FockBasis,
    spec: &SpectralDecomposition,
    psi0: &[C64],
    k: usize,
) -> Result<JumpForecast> {
    if k < 2 || k > spec.dim() {
        return Err(invalid(format!("k must lie in [2, D], got {k}")));
    }
    let mut order: Vec<usize> = (0..spec.dim()).collect();
    order.sort_by(|&a, &b| spec.eigenvalues[b].im.total_cmp(&spec.eigenvalues[a].im).then(a.cmp(&b)));
    order.truncate(k);
    for w in order.windows(2) {
        if (spec.eigenvalues[w[0]].im - spec.eigenvalues[w[1]].im).abs() <= DEGENERATE_RATE {
            return Err(Error::DegenerateRate { a: w[0], b: w[1] });
        }
    }
    let overlaps = right_overlaps(spec, psi0)?;
    let coefficients = biorthogonal_coefficients(spec, psi0)?;
    let ranked_states: Vec<RankedState> = order
        .iter()
        .map(|&j| RankedState {
            index: j,
            peak_site: peak_site(basis, &spec.vector(j)),
            re_e: spec.eigenvalues[j].re,
            im_e: spec.eigenvalues[j].im,
            overlap: overlaps[j],
            biorthogonal: coefficients[j].norm(),
        })
        .collect();
    let rates: Vec<f64> = ranked_states.iter().map(|s| s.im_e).collect();
    let weights: Vec<f64> = ranked_states.iter().map(|s| s.overlap).collect();
    let bio: Vec<f64> = ranked_states.iter().map(|s| s.biorthogonal).collect();
    Ok(JumpForecast {
        jumps: dominance_jumps(&weights, &rates),
        biorthogonal_jumps: dominance_jumps(&bio, &rates),
        ranked_states,
    })
}
