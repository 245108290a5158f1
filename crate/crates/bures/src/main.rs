//! Command-line interface over the analytic densities, the Monte Carlo
//! comparison harness, and the kicked-top simulations.
//!
//! Exit codes: 0 success, 2 parameter error, 3 numerical-convergence
//! failure, 4 consistency-check failure, 1 I/O failure.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bures::analytic::{
    density_chi, density_tau, grid_density, mean_root_fidelity_fixed, mean_root_fidelity_mixed,
    mean_root_fidelity_pure, mean_root_fidelity_two_random, MeanFidelityResult, Scenario,
};
use bures::harness::{
    kicked_top_mean_bures, kicked_top_pair_mean_bures, mc_histogram, mc_mean_bures, run_figure,
    write_density_csv, ComparisonReport, FigureOptions,
};
use bures::kickedtop::KickedTopConfig;
use bures::sampler::EnsembleSpec;
use bures::states::FixedStateSpectrum;
use bures::{Error, Result};

#[derive(Parser)]
#[command(
    name = "bures",
    version,
    about = "Fidelity and Bures-distance statistics of random density matrices",
    long_about = "Analytic spectral densities and ensemble means for random density \
                  matrices under the Hilbert-Schmidt measure, Monte Carlo cross-checks, \
                  and coupled-kicked-top simulations."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "lower")]
enum ScenarioArg {
    Fixed,
    Pure,
    Mixed,
    Two,
}

impl From<ScenarioArg> for Scenario {
    fn from(arg: ScenarioArg) -> Self {
        match arg {
            ScenarioArg::Fixed => Scenario::FixedSigma,
            ScenarioArg::Pure => Scenario::PureSigma,
            ScenarioArg::Mixed => Scenario::MaximallyMixedSigma,
            ScenarioArg::Two => Scenario::TwoRandom,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Tabulate the spectral density of tau = sqrt(sigma) rho sqrt(sigma)
    /// on an adaptive grid and write it as CSV.
    DensityFixed {
        /// Dimension of the density matrices.
        #[arg(long)]
        n: u32,
        /// Auxiliary dimension of the random state (m >= n).
        #[arg(long)]
        m: u32,
        /// Eigenvalues of sigma, comma separated, summing to 1.
        #[arg(long, value_delimiter = ',', required = true)]
        sigma_eigs: Vec<f64>,
        /// Initial grid points over the support.
        #[arg(long)]
        grid: usize,
        /// Output CSV path (x,analytic_pdf).
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate the spectral density of chi = sqrt(rho1) rho2 sqrt(rho1)
    /// for two independent random states and write it as CSV.
    DensityTwo {
        #[arg(long)]
        n: u32,
        /// Auxiliary dimension of the first state.
        #[arg(long)]
        m1: u32,
        /// Auxiliary dimension of the second state.
        #[arg(long)]
        m2: u32,
        #[arg(long)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the analytic mean root fidelity and mean square Bures
    /// distance for a scenario as JSON.
    Mean {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        /// Eigenvalues of sigma (fixed scenario only).
        #[arg(long, value_delimiter = ',')]
        sigma_eigs: Option<Vec<f64>>,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
        /// Second auxiliary dimension (two-random scenario only).
        #[arg(long)]
        m2: Option<u32>,
    },
    /// Monte Carlo run: writes the histogram-versus-curve CSV and prints
    /// the comparison report JSON.
    Mc {
        #[arg(long, value_enum)]
        scenario: ScenarioArg,
        #[arg(long, value_delimiter = ',')]
        sigma_eigs: Option<Vec<f64>>,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        m: u32,
        #[arg(long)]
        m2: Option<u32>,
        #[arg(long)]
        samples: u32,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        bins: usize,
        /// Output CSV path (x,analytic_pdf,mc_density,mc_stderr).
        #[arg(long)]
        out: PathBuf,
    },
    /// Evolve coupled kicked tops and compare reduced-state statistics
    /// against the RMT predictions. With the *b flags, evolves a second
    /// independent system and reports the two-random comparison instead.
    KickedTop {
        /// Spin of the kept subsystem 1 (n = 2 j1 + 1).
        #[arg(long)]
        j1: f64,
        /// Spin of the traced-over subsystem 2 (m = 2 j2 + 1).
        #[arg(long)]
        j2: f64,
        #[arg(long)]
        kappa1: f64,
        #[arg(long)]
        kappa2: f64,
        #[arg(long)]
        eps: f64,
        /// Polar angle of the initial coherent state of top 1.
        #[arg(long)]
        theta1: f64,
        /// Azimuthal angle of the initial coherent state of top 1.
        #[arg(long)]
        phi1: f64,
        /// Kicks discarded before sampling begins.
        #[arg(long)]
        transient: usize,
        #[arg(long)]
        samples: usize,
        /// j2 of system B (enables the paired two-random run).
        #[arg(long)]
        j2b: Option<f64>,
        #[arg(long)]
        kappa1b: Option<f64>,
        #[arg(long)]
        kappa2b: Option<f64>,
        #[arg(long)]
        epsb: Option<f64>,
    },
    /// Reproduce one figure (or a whole-figure alias) into CSV/JSON
    /// files under --out-dir.
    Figure {
        /// Figure id, e.g. fig1a, fig4, fig10.
        #[arg(long)]
        id: String,
        /// Override the per-panel default sample count.
        #[arg(long)]
        samples: Option<u32>,
        #[arg(long, default_value_t = 77001)]
        seed: u64,
        #[arg(long, default_value = "figures")]
        out_dir: PathBuf,
    },
}

/// Stdout payload of the `mean` subcommand.
#[derive(Serialize)]
struct MeanOutput {
    scenario: &'static str,
    n: u32,
    m1: u32,
    m2: Option<u32>,
    sigma_eigs: Option<Vec<f64>>,
    mean_root_fidelity: f64,
    msbd: f64,
}

fn parse_sigma(eigs: Option<Vec<f64>>) -> Result<Option<FixedStateSpectrum>> {
    eigs.map(FixedStateSpectrum::new).transpose()
}

fn analytic_mean_for(
    scenario: Scenario,
    sigma: Option<&FixedStateSpectrum>,
    n: u32,
    m: u32,
    m2: Option<u32>,
) -> Result<MeanFidelityResult> {
    match scenario {
        Scenario::FixedSigma => {
            let sig = sigma.ok_or_else(|| {
                Error::parameter("the fixed scenario requires --sigma-eigs")
            })?;
            mean_root_fidelity_fixed(sig, n as usize, m as usize)
        }
        Scenario::PureSigma => {
            reject_extras(sigma, m2)?;
            mean_root_fidelity_pure(n as usize, m as usize)
        }
        Scenario::MaximallyMixedSigma => {
            reject_extras(sigma, m2)?;
            mean_root_fidelity_mixed(n as usize, m as usize)
        }
        Scenario::TwoRandom => {
            if sigma.is_some() {
                return Err(Error::parameter(
                    "--sigma-eigs only applies to the fixed scenario",
                ));
            }
            let m2 = m2.ok_or_else(|| {
                Error::parameter("the two-random scenario requires --m2")
            })?;
            mean_root_fidelity_two_random(n as usize, m as usize, m2 as usize)
        }
    }
}

fn reject_extras(sigma: Option<&FixedStateSpectrum>, m2: Option<u32>) -> Result<()> {
    if sigma.is_some() {
        return Err(Error::parameter(
            "--sigma-eigs only applies to the fixed scenario",
        ));
    }
    if m2.is_some() {
        return Err(Error::parameter(
            "--m2 only applies to the two-random scenario",
        ));
    }
    Ok(())
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::consistency(format!("serialization failed: {e}")))?;
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::DensityFixed {
            n,
            m,
            sigma_eigs,
            grid,
            out,
        } => {
            let sigma = FixedStateSpectrum::new(sigma_eigs)?;
            let hi = sigma.eigs().iter().cloned().fold(0.0, f64::max);
            let eval = |x: f64| density_tau(&sigma, n as usize, m as usize, x);
            let table = grid_density(&eval, grid, (0.0, hi))?;
            write_density_csv(&out, &table.abscissae, &table.values, None)?;
            eprintln!(
                "wrote {} ({} points, integral {:.8})",
                out.display(),
                table.abscissae.len(),
                table.integral
            );
            if let Some(w) = table.normalization_warning {
                return Err(Error::consistency(w));
            }
            Ok(())
        }
        Cmd::DensityTwo {
            n,
            m1,
            m2,
            grid,
            out,
        } => {
            let eval = |x: f64| density_chi(n as usize, m1 as usize, m2 as usize, x);
            let table = grid_density(&eval, grid, (0.0, 1.0))?;
            write_density_csv(&out, &table.abscissae, &table.values, None)?;
            eprintln!(
                "wrote {} ({} points, integral {:.8})",
                out.display(),
                table.abscissae.len(),
                table.integral
            );
            if let Some(w) = table.normalization_warning {
                return Err(Error::consistency(w));
            }
            Ok(())
        }
        Cmd::Mean {
            scenario,
            sigma_eigs,
            n,
            m,
            m2,
        } => {
            let scenario = Scenario::from(scenario);
            let sigma = parse_sigma(sigma_eigs)?;
            let result = analytic_mean_for(scenario, sigma.as_ref(), n, m, m2)?;
            print_json(&MeanOutput {
                scenario: scenario.tag(),
                n,
                m1: m,
                m2,
                sigma_eigs: sigma.map(|s| s.eigs().to_vec()),
                mean_root_fidelity: result.mean_root_fidelity,
                msbd: result.mean_sq_bures,
            })
        }
        Cmd::Mc {
            scenario,
            sigma_eigs,
            n,
            m,
            m2,
            samples,
            seed,
            bins,
            out,
        } => {
            let scenario = Scenario::from(scenario);
            let sigma = parse_sigma(sigma_eigs)?;
            let spec = EnsembleSpec::new(n, m, samples, seed)?;
            let report = mc_mean_bures(&spec, scenario, sigma.as_ref(), m2)?;
            let hist = mc_histogram(&spec, scenario, bins, sigma.as_ref(), m2)?;
            let stderr = hist.density_stderr();
            write_density_csv(
                &out,
                &hist.centers(),
                &hist.curve,
                Some((&hist.density, &stderr)),
            )?;
            eprintln!(
                "wrote {} ({} bins, {} pooled values)",
                out.display(),
                hist.bins(),
                hist.pooled
            );
            print_json(&report)
        }
        Cmd::KickedTop {
            j1,
            j2,
            kappa1,
            kappa2,
            eps,
            theta1,
            phi1,
            transient,
            samples,
            j2b,
            kappa1b,
            kappa2b,
            epsb,
        } => {
            let mut config = KickedTopConfig::new(j1, j2, kappa1, kappa2, eps, samples);
            config.theta1 = theta1;
            config.phi1 = phi1;
            config.transient = transient;
            let pair_flags = [
                j2b.is_some(),
                kappa1b.is_some(),
                kappa2b.is_some(),
                epsb.is_some(),
            ];
            let reports: Vec<ComparisonReport> = if pair_flags.iter().any(|&p| p) {
                if !pair_flags.iter().all(|&p| p) {
                    return Err(Error::parameter(
                        "paired runs need all of --j2b, --kappa1b, --kappa2b, --epsb",
                    ));
                }
                let mut config_b = KickedTopConfig::new(
                    j1,
                    j2b.unwrap(),
                    kappa1b.unwrap(),
                    kappa2b.unwrap(),
                    epsb.unwrap(),
                    samples,
                );
                config_b.theta1 = theta1;
                config_b.phi1 = phi1;
                config_b.transient = transient;
                vec![kicked_top_pair_mean_bures(&config, &config_b)?]
            } else {
                vec![
                    kicked_top_mean_bures(&config, Scenario::PureSigma, None)?,
                    kicked_top_mean_bures(&config, Scenario::MaximallyMixedSigma, None)?,
                ]
            };
            print_json(&reports)
        }
        Cmd::Figure {
            id,
            samples,
            seed,
            out_dir,
        } => {
            let opts = FigureOptions {
                samples,
                seed,
                out_dir,
            };
            let output = run_figure(&id, &opts)?;
            for note in &output.notes {
                println!("{note}");
            }
            for file in &output.files {
                println!("wrote {}", file.display());
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
