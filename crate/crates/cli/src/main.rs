//! `privopt`: build, optimize, remap, analyze and verify private count
//! mechanisms from the command line.
//!
//! Exit status is 0 on success, 2 when a verification fails (any report is
//! still written) and 1 on usage or input errors.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privopt::precision::{DEFAULT_DIGITS, PRECISION_ENV};
use privopt::scalar::parse_rational;
use privopt::PrivacyLevel;

#[derive(Parser, Debug)]
#[command(name = "privopt", version, about = "Optimal differentially private count mechanisms")]
pub struct Cli {
    /// Decimal digits kept for irrational losses.
    #[arg(long, global = true, env = PRECISION_ENV, default_value_t = DEFAULT_DIGITS, value_parser = clap::value_parser!(u32).range(1..))]
    pub precision: u32,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Construct a named mechanism.
    #[command(subcommand)]
    Mech(MechCommand),
    /// Solve the user-specific LP for an optimal vertex mechanism.
    Optimal(OptimalArgs),
    /// Bayes-optimal remap of a mechanism for a user.
    Remap(RemapArgs),
    /// Constraint matrix and vertex structure of a private mechanism.
    Analyze(AnalyzeArgs),
    /// Seeded verification sweeps.
    #[command(subcommand)]
    Verify(VerifyCommand),
    /// Mechanisms that see the whole database.
    #[command(subcommand)]
    Nonoblivious(NonobliviousCommand),
    /// Two-point losses of the geometric and Laplace mechanisms.
    CompareLaplace(CompareArgs),
}

#[derive(Subcommand, Debug)]
pub enum MechCommand {
    /// Truncated geometric mechanism over 0..=n.
    Geometric {
        #[arg(long, value_parser = parse_alpha)]
        alpha: PrivacyLevel,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct OptimalArgs {
    #[arg(long)]
    pub user: PathBuf,
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: PrivacyLevel,
    /// Defaults to the length of the user's prior minus one.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Objective value and tight-set summary.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RemapArgs {
    #[arg(long)]
    pub mech: PathBuf,
    #[arg(long)]
    pub user: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub mech: PathBuf,
    /// Overrides the alpha stored in the mechanism file.
    #[arg(long, value_parser = parse_alpha)]
    pub alpha: Option<PrivacyLevel>,
    /// Write the JSON analysis here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Largest n; each trial draws n from 1..=N.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha, default_value = "1/4,1/2,3/4")]
    pub alphas: Vec<PrivacyLevel>,
    #[arg(long, default_value_t = 200)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Per-trial loss table.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Record wall-clock time in the report.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Bayes remap of the geometric mechanism against the LP optimum, and
    /// reconstruction of each vertex from its constraint matrix.
    Theorem1(SweepArgs),
    /// Bayes remap against exhaustive search over deterministic remaps.
    RemapOracle(SweepArgs),
    /// Averaging private full mechanisms over result classes.
    Proposition1 {
        /// Database sizes to draw from.
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        rows: Vec<usize>,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Whether a mechanism is a relabeling of the geometric mechanism; with
    /// no --mech, checks every column permutation of it.
    Uniqueness {
        #[arg(long, value_parser = parse_alpha)]
        alpha: PrivacyLevel,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        mech: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Subcommand, Debug)]
pub enum NonobliviousCommand {
    /// Infeasibility certificate for the two-user instance.
    Counterexample {
        #[arg(long, value_parser = parse_alpha, default_value = "1/2")]
        alpha: PrivacyLevel,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average a full mechanism over databases sharing a count.
    Obliviate {
        #[arg(long)]
        mech: PathBuf,
        #[arg(long)]
        space: PathBuf,
        /// Overrides the alpha stored in the mechanism file.
        #[arg(long, value_parser = parse_alpha)]
        alpha: Option<PrivacyLevel>,
        /// Report worst-case losses before and after for this user.
        #[arg(long)]
        user: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long, value_delimiter = ',', value_parser = parse_alpha, required = true)]
    pub alpha: Vec<PrivacyLevel>,
    /// Loss table for plotting.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn parse_alpha(text: &str) -> Result<PrivacyLevel, String> {
    let q = parse_rational(text).map_err(|e| e.to_string())?;
    PrivacyLevel::new(q).map_err(|e| e.to_string())
}

/// How a command that ran to completion ended.
#[derive(Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli, &argv[1..]) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn default_precision() {
        let cli = Cli::try_parse_from(["privopt", "compare-laplace", "--alpha", "1/4"]).unwrap();
        if std::env::var(PRECISION_ENV).is_err() {
            assert_eq!(cli.precision, DEFAULT_DIGITS);
        }
    }

    #[test]
    fn alpha_lists_split_on_commas() {
        let cli = Cli::try_parse_from(["privopt", "verify", "theorem1", "--alphas", "1/4,0.5", "--n", "3"]).unwrap();
        let Command::Verify(VerifyCommand::Theorem1(s)) = cli.command else { panic!("wrong subcommand") };
        assert_eq!(s.alphas, vec![PrivacyLevel::from_ratio(1, 4).unwrap(), PrivacyLevel::from_ratio(1, 2).unwrap()]);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        assert!(parse_alpha("3/2").is_err());
        assert!(parse_alpha("x").is_err());
    }
}
