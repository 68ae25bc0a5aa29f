use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod report;

/// Bilevel programs through the lower-level KKT reformulation.
#[derive(Parser, Debug)]
#[command(name = "bilocal", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct Source {
    /// Problem file.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    /// Built-in fixture (P1, P2, P3, P4).
    #[arg(long)]
    pub fixture: Option<String>,
}

#[derive(Args, Debug, Clone)]
pub struct Output {
    /// Write a JSON report to this path.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Include wall time in the JSON report (makes it non-reproducible).
    #[arg(long)]
    pub wall_time: bool,
}

// one comma-separated list per flag; the alias keeps clap from treating the
// field as a repeated argument
type Values = Vec<f64>;

fn csv(s: &str) -> Result<Values, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}")))
        .collect()
}

fn pair(s: &str) -> Result<(f64, f64), String> {
    match csv(s)?.as_slice() {
        [a, b] if a <= b => Ok((*a, *b)),
        _ => Err("expected `lo,hi` with lo <= hi".into()),
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lower-level regularity and first/second-order checks at a point.
    Check {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        x: Values,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        y: Values,
        /// Lower equality multipliers (default zeros).
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        mu: Option<Values>,
        /// Lower inequality multipliers (default zeros).
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        xi: Option<Values>,
        /// Upper equality multipliers (default zeros).
        #[arg(long = "lamH", value_parser = csv, allow_hyphen_values = true)]
        lam_h: Option<Values>,
        /// Upper inequality multipliers (default zeros).
        #[arg(long = "lamG", value_parser = csv, allow_hyphen_values = true)]
        lam_g: Option<Values>,
        #[command(flatten)]
        output: Output,
    },
    /// Implicit Jacobians of the lower solution map, compared with finite differences.
    Sens {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        x: Values,
        /// Starting guesses for the lower solve (default zeros).
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        y0: Option<Values>,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        mu0: Option<Values>,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        xi0: Option<Values>,
        #[command(flatten)]
        output: Output,
    },
    /// Augmented Lagrangian solve of the reformulation.
    Solve {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        x0: Option<Values>,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        y0: Option<Values>,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        mu0: Option<Values>,
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        xi0: Option<Values>,
        /// Initial multiplier, flattened as (λ_H, λ_G, λ_stat, λ_h, λ_comp).
        #[arg(long, value_parser = csv, allow_hyphen_values = true)]
        lam0: Option<Values>,
        #[arg(long, default_value_t = 10.0)]
        rho0: f64,
        #[arg(long, default_value_t = 10.0)]
        rho_growth: f64,
        /// Stop when the natural residual falls below this.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 50)]
        max_outer: usize,
        /// Also run fixed-penalty solves at ρ = 10, 100, 1000 and report error quotients.
        #[arg(long)]
        rate_sweep: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Brute-force search over x and y grids (n, m <= 2).
    Grid {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = pair, allow_hyphen_values = true)]
        x_range: (f64, f64),
        #[arg(long, value_parser = pair, allow_hyphen_values = true)]
        y_range: (f64, f64),
        #[arg(long)]
        step: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Run the invariant suite on the built-in fixtures.
    Verify {
        #[command(flatten)]
        output: Output,
    },
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    let started = std::time::Instant::now();
    let result = match cli.command {
        Command::Check {
            source,
            x,
            y,
            mu,
            xi,
            lam_h,
            lam_g,
            output,
        } => commands::check(&argv, &source, commands::CheckInput { x, y, mu, xi, lam_h, lam_g }, &output, started),
        Command::Sens {
            source,
            x,
            y0,
            mu0,
            xi0,
            output,
        } => commands::sens(&argv, &source, &x, [y0, mu0, xi0], &output, started),
        Command::Solve {
            source,
            x0,
            y0,
            mu0,
            xi0,
            lam0,
            rho0,
            rho_growth,
            tol,
            max_outer,
            rate_sweep,
            output,
        } => commands::solve(
            &argv,
            &source,
            commands::SolveInput {
                start: [x0, y0, mu0, xi0],
                lam0,
                rho0,
                rho_growth,
                tol,
                max_outer,
                rate_sweep,
            },
            &output,
            started,
        ),
        Command::Grid {
            source,
            x_range,
            y_range,
            step,
            output,
        } => commands::grid(&argv, &source, x_range, y_range, step, &output, started),
        Command::Verify { output } => commands::verify(&argv, &output, started),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
