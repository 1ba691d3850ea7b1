use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use twoboson::doublon::{build_effective_hamiltonian, band_deviation, doublon_band, doublon_weight};
use twoboson::entanglement::{averaged_ee, ee_trace, last_decade, Bipartition};
use twoboson::model::{build_hamiltonian, FockBasis};
use twoboson::spectral::{eig, eigenvalues_of};
use twoboson::sweep::{
    csv_header, ee_csv, evaluate_point, forecast_csv, jumps_csv, preset, run_sweep, spectrum_csv, trace_csv,
    AxisRange, CellRecord, Diagnostic, Figure, SweepConfig, WORKERS_ENV,
};
use twoboson::model::TwistFamily;
use twoboson::topology::{winding_with, WindingMethod};
use twoboson::{Error, C64};

#[derive(Parser)]
#[command(name = "twoboson", version, about = "Two interacting bosons in a non-Hermitian quasiperiodic lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file, TOML (`.toml`) or JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Potential strength; collapses the μ range to this value.
    #[arg(long)]
    mu: Option<f64>,
    /// Interaction strength; collapses the U range to this value.
    #[arg(long = "U")]
    u: Option<f64>,
    /// Lattice size.
    #[arg(long = "L")]
    l: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for grids.
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Use the Fibonacci approximant of α for the chosen L.
    #[arg(long)]
    rational_alpha: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Full spectrum with IPRs and PT/localization summaries at one point.
    Spectrum(Common),
    /// Sweep a (μ, U) grid.
    PhaseDiagram(Common),
    /// Winding numbers (w₁, w₂), or w at a given base energy.
    Winding {
        #[command(flatten)]
        common: Common,
        /// Real part of an explicit base energy.
        #[arg(long, allow_hyphen_values = true)]
        e_re: Option<f64>,
        /// Imaginary part of an explicit base energy.
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        e_im: f64,
    },
    /// Postselected evolution of a doublon from the central site, with the
    /// jump forecast.
    Evolve(Common),
    /// Number and configuration entanglement entropy of the evolving state.
    Entropy(Common),
    /// Doublon band against the effective single-doublon chain.
    Doublon(Common),
    /// Run the pinned configuration of a published figure or table.
    Reproduce {
        /// fig2c, fig3, fig4, fig6, fig7, tableII or fig10.
        #[arg(value_parser = parse_figure)]
        figure: Figure,
        /// Small lattice and coarse grid.
        #[arg(long)]
        desk: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
    },
}

fn parse_figure(name: &str) -> Result<Figure, String> {
    Figure::parse(name).map_err(|_| {
        let names: Vec<&str> = Figure::ALL.iter().map(|f| f.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

impl Common {
    fn config(&self, default_out: &str) -> Result<SweepConfig, Error> {
        let mut c = match &self.config {
            Some(path) => SweepConfig::load(path)?,
            None => SweepConfig::new(default_out),
        };
        if let Some(l) = self.l {
            c.base_params.l = l;
        }
        if let Some(mu) = self.mu {
            c.base_params.mu = mu;
            c.mu_range = AxisRange::single(mu);
        }
        if let Some(u) = self.u {
            c.base_params.u = u;
            c.u_range = AxisRange::single(u);
        }
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        if let Some(w) = self.workers {
            c.parallelism = w;
        }
        c.rational_alpha |= self.rational_alpha;
        Ok(c)
    }
}

/// Evaluates one point with the given diagnostics; a failure is an error.
fn point(config: &mut SweepConfig, diagnostics: &[Diagnostic]) -> Result<CellRecord, Error> {
    config.diagnostics = diagnostics.iter().copied().collect();
    let record = evaluate_point(config)?;
    fs::create_dir_all(&config.output_dir)?;
    Ok(record)
}

fn write(dir: &Path, name: &str, contents: String) -> Result<(), Error> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Spectrum(common) => {
            let mut c = common.config("out/spectrum")?;
            let r = point(&mut c, &[Diagnostic::Spectrum, Diagnostic::Pt, Diagnostic::Localization])?;
            let dir = &c.output_dir;
            write(dir, "spectrum.csv", spectrum_csv(&r.config_hash, r.spectrum.as_deref().unwrap_or_default()))?;
            let pt = r.pt.expect("requested");
            let loc = r.localization.as_ref().expect("requested");
            println!(
                "|Im E|max = {:e}  rho_Im = {}  IPR max/min = {}/{}  phase = {}",
                pt.max_abs_imag,
                pt.rho_im,
                loc.ipr_max,
                loc.ipr_min,
                loc.phase.as_str()
            );
            write(dir, "summary.json", to_json(&serde_json::json!({ "pt": pt, "localization": loc }))?)
        }
        Command::PhaseDiagram(common) => {
            let c = common.config("out/phase-diagram")?;
            let grid = run_sweep(&c)?;
            println!(
                "{} cells ({} resumed, {} failed) in {}",
                grid.metadata.n_cells,
                grid.metadata.n_resumed,
                grid.metadata.n_failed,
                c.output_dir.display()
            );
            if grid.metadata.n_failed > 0 {
                for cell in grid.cells.iter().filter(|c| c.failed()) {
                    eprintln!("cell mu={} U={}: {}", cell.mu, cell.u, cell.error.as_deref().unwrap_or_default());
                }
                return Err(Error::NumericalConsistency(format!("{} cells failed", grid.metadata.n_failed)));
            }
            Ok(())
        }
        Command::Winding { common, e_re, e_im } => {
            let mut c = common.config("out/winding")?;
            let dir = c.output_dir.clone();
            if let Some(re) = e_re {
                c.validate()?;
                let params = c.params_at(c.base_params.mu, c.base_params.u);
                let basis = FockBasis::new(params.l)?;
                let family = TwistFamily::two_boson(&params, &basis)?;
                let method =
                    if c.pencil_winding { WindingMethod::Pencil } else { WindingMethod::LogDet { n_theta: c.n_theta } };
                let w = winding_with(&family, C64::new(re, e_im), method)?;
                println!("w = {} (raw {})", w.value, w.raw_phase);
                fs::create_dir_all(&dir)?;
                let mut out = csv_header(&c.hash(), "mu,U,E_B_re,E_B_im,w,raw_phase");
                out += &format!("{},{},{re},{e_im},{},{}\n", params.mu, params.u, w.value, w.raw_phase);
                return write(&dir, "winding.csv", out);
            }
            let r = point(&mut c, &[Diagnostic::Localization, Diagnostic::Winding])?;
            let w = r.winding.expect("requested");
            println!("(w1, w2) = ({}, {})", w.w1.value, w.w2.value);
            let mut out = csv_header(&r.config_hash, "mu,U,w1,w2,raw_phase1,raw_phase2,E_B1,E_B2");
            out += &format!(
                "{},{},{},{},{},{},{},{}\n",
                r.mu, r.u, w.w1.value, w.w2.value, w.w1.raw_phase, w.w2.raw_phase, w.w1.base_energy.re, w.w2.base_energy.re
            );
            write(&dir, "winding.csv", out)
        }
        Command::Evolve(common) => {
            let mut c = common.config("out/evolve")?;
            let r = point(&mut c, &[Diagnostic::Dynamics])?;
            let d = r.dynamics.expect("requested");
            let dir = &c.output_dir;
            write(dir, "trace.csv", trace_csv(&r.config_hash, &d.trace))?;
            write(dir, "forecast.csv", forecast_csv(&r.config_hash, &d.forecast))?;
            for j in &d.forecast.jumps {
                let site = |k: usize| d.forecast.ranked_states[k].peak_site;
                println!("jump at t = {:.1}: site {} -> {}", j.time, site(j.from), site(j.to));
            }
            write(dir, "jumps.csv", jumps_csv(&r.config_hash, &d.forecast))
        }
        Command::Entropy(common) => {
            let c = common.config("out/entropy")?;
            c.validate()?;
            let params = c.params_at(c.base_params.mu, c.base_params.u);
            let basis = FockBasis::new(params.l)?;
            let spec = eig(&build_hamiltonian(&params, &basis)?)?;
            let psi0 = twoboson::dynamics::initial_doublon_state(&basis);
            let times = c.time_grid.times()?;
            let trace = ee_trace(&basis, &spec, &psi0, &times, &Bipartition::half_chain(params.l), c.log_base)?;
            if let Some((a, b)) = last_decade(&trace) {
                let (s_num, s_conf) = averaged_ee(&trace, a, b)?;
                println!("average over t in [{a}, {b}]: S_num = {s_num}  S_conf = {s_conf}");
            }
            fs::create_dir_all(&c.output_dir)?;
            write(&c.output_dir, "entropy.csv", ee_csv(&c.hash(), &trace))
        }
        Command::Doublon(common) => {
            let c = common.config("out/doublon")?;
            c.validate()?;
            let params = c.params_at(c.base_params.mu, c.base_params.u);
            let basis = FockBasis::new(params.l)?;
            let spec = eig(&build_hamiltonian(&params, &basis)?)?;
            let band = doublon_band(&spec, &basis, c.w_min)?;
            let hash = c.hash();
            let mut out = csv_header(&hash, "index,re_E,im_E,weight");
            for &j in &band {
                let e = spec.eigenvalues[j];
                out += &format!("{j},{},{},{}\n", e.re, e.im, doublon_weight(&spec.vector(j), &basis));
            }
            fs::create_dir_all(&c.output_dir)?;
            write(&c.output_dir, "doublon_band.csv", out)?;
            if params.u != 0.0 {
                let h = build_effective_hamiltonian(&params, c.energy_shift)?;
                let mut eff = eigenvalues_of(&h.entries)?;
                eff.sort_by(|a, b| b.re.total_cmp(&a.re));
                let band_e: Vec<C64> = band.iter().map(|&j| spec.eigenvalues[j]).collect();
                println!("{} band states; deviation from effective chain {}", band.len(), band_deviation(&band_e, &eff));
                let mut out = csv_header(&hash, "index,re_E,im_E");
                for (k, e) in eff.iter().enumerate() {
                    out += &format!("{k},{},{}\n", e.re, e.im);
                }
                write(&c.output_dir, "effective.csv", out)?;
            } else {
                println!("{} band states", band.len());
            }
            Ok(())
        }
        Command::Reproduce { figure, desk, out, workers } => {
            let default_out = PathBuf::from("out").join(format!("{}{}", figure.name(), if desk { "-desk" } else { "" }));
            let mut c = preset(figure, desk, out.unwrap_or(default_out));
            if let Some(w) = workers {
                c.parallelism = w;
            }
            let grid = run_sweep(&c)?;
            println!("{} cells ({} failed) in {}", grid.metadata.n_cells, grid.metadata.n_failed, c.output_dir.display());
            if figure == Figure::TableII {
                if let Some(d) = grid.cells[0].dynamics.as_ref() {
                    write(&c.output_dir, "table_ii.csv", forecast_csv(&grid.metadata.config_hash, &d.forecast))?;
                    for s in &d.forecast.ranked_states {
                        println!("site {:>3}  E = {:.6} {:+.6}i  overlap {:.3e}", s.peak_site, s.re_e, s.im_e, s.overlap);
                    }
                }
            }
            if grid.metadata.n_failed > 0 {
                return Err(Error::NumericalConsistency(format!("{} cells failed", grid.metadata.n_failed)));
            }
            Ok(())
        }
    }
}
