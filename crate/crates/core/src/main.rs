use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use bellpol::commands::{cmd_curves, cmd_dp, cmd_fit, cmd_simulate, cmd_sweep, cmd_validate, SuiteSelection};
use bellpol::fit::{FitOptions, Plate};
use bellpol::gaussian::StokesConvention;
use bellpol::io::RunConfig;
use bellpol::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "bellpol",
    version,
    about = "Polarization statistics of macroscopic Bell states"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// NRF against a half- or quarter-wave plate angle.
    Curves(Common),
    /// Full Poincaré-sphere map of NRF and normalized fourth moment.
    Sweep(Common),
    /// Degrees of polarization of the requested orders.
    Dp(Common),
    /// Monte Carlo pulse record at one plate setting.
    Simulate(Common),
    /// Least-squares estimate of eta and N from measured NRF curves.
    Fit(FitArgs),
    /// Run the self-check suites.
    Validate(ValidateArgs),
}

/// Flags shared by every subcommand. Flags override the config file.
#[derive(Args, Debug, Default)]
struct Common {
    /// KEY = VALUE configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// psi+, psi-, phi+ or phi-.
    #[arg(long)]
    state: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    /// Parametric gain Γ.
    #[arg(long, conflicts_with = "nbar")]
    gain: Option<f64>,
    /// Mean photon number per mode, sinh²Γ.
    #[arg(long)]
    nbar: Option<f64>,
    /// Number of independent mode quadruples.
    #[arg(long)]
    modes: Option<u32>,
    #[arg(long)]
    pulses: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated moment orders, e.g. 1,2,4.
    #[arg(long)]
    orders: Option<String>,
    /// hwp or qwp.
    #[arg(long)]
    plate: Option<String>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long = "chi-h")]
    chi_h: Option<f64>,
    #[arg(long = "chi-q")]
    chi_q: Option<f64>,
    #[arg(long = "step-h")]
    step_h: Option<f64>,
    #[arg(long = "step-q")]
    step_q: Option<f64>,
    /// Electronic noise standard deviation per detector, or "auto".
    #[arg(long = "noise-sigma")]
    noise_sigma: Option<String>,
    /// Skip the noise-reference subtraction.
    #[arg(long = "no-subtract-noise")]
    no_subtract_noise: bool,
    /// Add Monte Carlo estimates.
    #[arg(long)]
    mc: bool,
    /// Fock cutoff for the outcome tables.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    /// Output path prefix; extensions are added per file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// PLATE=PATH with PLATE hwp or qwp; repeatable.
    #[arg(long = "data", required = true)]
    data: Vec<String>,
    #[arg(long = "initial-eta", default_value_t = 0.5)]
    initial_eta: f64,
    #[arg(long = "initial-nbar", default_value_t = 0.5)]
    initial_nbar: f64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SuiteArg {
    All,
    Oracle,
    Curves,
    Loss,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_enum, default_value = "all")]
    suite: SuiteArg,
    /// Build direction forms with the opposite S3 sign (the suite must fail).
    #[arg(long = "flip-s3-sign", hide = true)]
    flip_s3_sign: bool,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let mut set = |key: &str, value: Option<String>| -> Result<(), Error> {
            match value {
                Some(v) => cfg.set(key, &v).map_err(|message| Error::Config {
                    path: "command line".into(),
                    line: 0,
                    message: format!("--{}: {message}", key.replace('_', "-")),
                }),
                None => Ok(()),
            }
        };
        let s = |v: Option<f64>| v.map(|x| x.to_string());
        set("state", self.state.clone())?;
        set("eta", s(self.eta))?;
        set("gain", s(self.gain))?;
        set("nbar", s(self.nbar))?;
        set("modes", self.modes.map(|x| x.to_string()))?;
        set("pulses", self.pulses.map(|x| x.to_string()))?;
        set("seed", self.seed.map(|x| x.to_string()))?;
        set("orders", self.orders.clone())?;
        set("plate", self.plate.clone())?;
        set("points", self.points.map(|x| x.to_string()))?;
        set("chi_h", s(self.chi_h))?;
        set("chi_q", s(self.chi_q))?;
        set("step_h", s(self.step_h))?;
        set("step_q", s(self.step_q))?;
        set("noise_sigma", self.noise_sigma.clone())?;
        set("cutoff", self.cutoff.map(|x| x.to_string()))?;
        set("bins", self.bins.map(|x| x.to_string()))?;
        set("out", self.out.as_ref().map(|p| p.display().to_string()))?;
        if self.no_subtract_noise {
            set("subtract_noise", Some("false".into()))?;
        }
        if self.mc {
            set("mc", Some("true".into()))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_data(specs: &[String]) -> Result<Vec<(Plate, PathBuf)>, Error> {
    specs
        .iter()
        .map(|s| {
            let (plate, path) = s
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("--data expects PLATE=PATH, got {s:?}")))?;
            let plate: Plate = plate.parse()?;
            Ok((plate, PathBuf::from(path)))
        })
        .collect()
}

fn run(cli: Cli) -> Result<(bool, String), Error> {
    match cli.command {
        Command::Curves(c) => cmd_curves(&c.resolve()?).map(|s| (true, s)),
        Command::Sweep(c) => cmd_sweep(&c.resolve()?).map(|s| (true, s)),
        Command::Dp(c) => cmd_dp(&c.resolve()?).map(|s| (true, s)),
        Command::Simulate(c) => cmd_simulate(&c.resolve()?).map(|s| (true, s)),
        Command::Fit(f) => {
            let cfg = f.common.resolve()?;
            let inputs = parse_data(&f.data)?;
            let options = FitOptions {
                initial_eta: f.initial_eta,
                initial_nbar: f.initial_nbar,
                ..Default::default()
            };
            cmd_fit(&cfg, &inputs, &options).map(|s| (true, s))
        }
        Command::Validate(v) => {
            let cfg = v.common.resolve()?;
            let which = match v.suite {
                SuiteArg::All => SuiteSelection::All,
                SuiteArg::Oracle => SuiteSelection::Oracle,
                SuiteArg::Curves => SuiteSelection::Curves,
                SuiteArg::Loss => SuiteSelection::Loss,
            };
            let convention = if v.flip_s3_sign {
                StokesConvention::flipped()
            } else {
                StokesConvention::default()
            };
            cmd_validate(&cfg, which, convention)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok((true, text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Ok((false, text)) => {
            print!("{text}");
            ExitCode::from(EXIT_FAILURE)
        }
        Err(e) => {
            eprintln!("bellpol: {e}");
            let code = match e {
                Error::InvalidArgument(_) | Error::Config { .. } | Error::Parse { .. } => EXIT_USAGE,
                _ => EXIT_FAILURE,
            };
            ExitCode::from(code)
        }
    }
}
