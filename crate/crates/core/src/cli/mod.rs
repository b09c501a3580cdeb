//! Command-line front end.
//!
//! Every option is a flat key usable three ways: `--h-min 0.5` on the
//! command line, `h_min = 0.5` (or `h-min = 0.5`) in a file passed with
//! `--config`, with the flag winning over the file. Unknown keys and
//! out-of-range values are rejected with the key named.

mod commands;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, Command};

use crate::continuation::{ArclengthOptions, Direction, StepControl};
use crate::dynamics::EvolutionConfig;
use crate::error::IoError;
use crate::lattice::{LatticeWindow, ModelParams};
use crate::stationary::NewtonOptions;
use crate::verify::VerifyOptions;

pub use commands::{emit_branch_figure_data, run};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "CSS_LATTICE_OUT";
const DEFAULT_OUT: &str = "css-lattice-out";

/// `(key, help)`; flags are the keys with `_` replaced by `-`.
const KEYS: &[(&str, &str)] = &[
    ("lambda", "nonlinearity coupling (> 0) [1]"),
    ("p", "nonlinearity power (> 0) [1]"),
    ("omega", "frequency of stationary states (> 0) [1]"),
    ("h", "lattice spacing (> 0); required for evolve, stationary, continue"),
    ("gamma", "limit of g at +infinity [0]"),
    (
        "sites",
        "number of sites of a centred window [101 evolve, 41 otherwise]",
    ),
    ("n_min", "first site (with n_max, replaces sites)"),
    ("n_max", "last site"),
    (
        "seed",
        "stationary seed: single_site | double_site | both (continue) | path to n,value csv [single_site]",
    ),
    ("center", "site carrying the seed peak [0]"),
    (
        "init",
        "evolve initial field: random | soliton | path to n,re,im csv [random]",
    ),
    ("mass", "mass of the random initial field [1]"),
    ("rng_seed", "seed for every random draw [1]"),
    ("t_end", "final time [10]"),
    ("dt", "initial time step [1e-3]"),
    ("abs_tol", "absolute step tolerance [1e-12]"),
    ("rel_tol", "relative step tolerance [1e-10]"),
    ("record_every", "diagnostic interval [0.5]"),
    (
        "write_snapshots",
        "write a field file per record time: true | false [false]",
    ),
    (
        "h_min",
        "smallest h (roots sweep; continuation stop) [roots: required, continue: 1e-3]",
    ),
    (
        "h_max",
        "largest h (roots sweep; continuation stop) [roots: required, continue: 1e3]",
    ),
    ("h_steps", "number of log-spaced h values in the roots sweep (>= 2)"),
    ("mode", "continuation mode: arclength | natural [arclength]"),
    ("h_target", "end point of natural continuation"),
    (
        "direction",
        "arclength start direction: decreasing | increasing | both [decreasing]",
    ),
    ("max_points", "points per branch [2000]"),
    ("max_folds", "stop a branch after this many folds [unlimited]"),
    (
        "step_fraction",
        "initial continuation step: fraction of h (natural) or relative arclength (arclength) [0.1]",
    ),
    ("newton_tol", "Newton residual tolerance, l-inf [1e-12]"),
    ("max_iter", "Newton iteration limit [60]"),
    ("max_sites", "largest window grown by the solver [2001]"),
    (
        "write_fields",
        "write a field file per branch point: true | false [false]",
    ),
    ("tolerance", "verify: replace every suite tolerance"),
    ("out", "output directory [$CSS_LATTICE_OUT, else ./css-lattice-out]"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Evolve,
    Stationary,
    Roots,
    Continue,
    Verify,
}

impl Subcommand {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "evolve" => Self::Evolve,
            "stationary" => Self::Stationary,
            "roots" => Self::Roots,
            "continue" => Self::Continue,
            "verify" => Self::Verify,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedChoice {
    SingleSite,
    DoubleSite,
    Both,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialField {
    Random { mass: f64 },
    Soliton,
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveSettings {
    pub config: EvolutionConfig,
    pub init: InitialField,
    pub write_snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContinuationMode {
    Arclength,
    Natural,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinueSettings {
    pub mode: ContinuationMode,
    pub control: StepControl,
    pub arclength: ArclengthOptions,
    pub directions: Vec<Direction>,
    pub h_target: Option<f64>,
    pub write_fields: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootSweep {
    pub h_min: f64,
    pub h_max: f64,
    pub h_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Subcommand,
    pub params: ModelParams,
    pub window: LatticeWindow,
    pub seed: SeedChoice,
    pub center: i64,
    pub rng_seed: u64,
    pub newton: NewtonOptions,
    pub evolution: Option<EvolveSettings>,
    pub continuation: Option<ContinueSettings>,
    pub roots: Option<RootSweep>,
    pub verify: Option<VerifyOptions>,
    pub output_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// `--help` / `--version` output; not a failure.
    #[error("{0}")]
    Info(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Convergence(String),
    #[error("{0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Info(_) => 0,
            CliError::Validation(_) | CliError::Io(_) => 1,
            CliError::Convergence(_) => 2,
            CliError::Verification(_) => 3,
        }
    }
}

fn invalid(key: &str, value: &str, why: &str) -> CliError {
    CliError::Validation(format!("invalid value `{value}` for `{key}`: {why}"))
}

fn command() -> Command {
    let with_keys = |mut cmd: Command| {
        cmd = cmd.arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("flat key = value file; flags override it"),
        );
        for (key, help) in KEYS {
            cmd = cmd.arg(
                Arg::new(*key)
                    .long(key.replace('_', "-"))
                    .value_name("VALUE")
                    .help(*help)
                    .allow_hyphen_values(true)
                    .action(ArgAction::Set),
            );
        }
        cmd
    };
    Command::new("css-lattice")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Lattice Chern-Simons-Schroedinger solver")
        .subcommand_required(true)
        .subcommand(with_keys(
            Command::new("evolve").about("time evolution of the reduced system"),
        ))
        .subcommand(with_keys(
            Command::new("stationary").about("Newton solve for a stationary state"),
        ))
        .subcommand(with_keys(
            Command::new("roots").about("sweep of the single- and double-site amplitudes"),
        ))
        .subcommand(with_keys(Command::new("continue").about("branch continuation in h")))
        .subcommand(with_keys(Command::new("verify").about("run the self-check suites")))
}

/// Parse a flat `key = value` file; `#` starts a comment.
pub fn parse_config_file(text: &str, origin: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .or_else(|| line.split_once(char::is_whitespace))
            .ok_or_else(|| CliError::Validation(format!("{}:{}: expected `key = value`", origin.display(), i + 1)))?;
        let key = key.trim().replace('-', "_");
        if !KEYS.iter().any(|(k, _)| *k == key) {
            return Err(CliError::Validation(format!(
                "{}:{}: unknown key `{key}`",
                origin.display(),
                i + 1
            )));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

struct Values(BTreeMap<String, String>);

impl Values {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, CliError> {
        self.raw(key)
            .map(|v| {
                v.parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| invalid(key, v, "expected a finite number"))
            })
            .transpose()
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        Ok(self.f64(key)?.unwrap_or(default))
    }

    fn positive_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = self.f64_or(key, default)?;
        if v > 0.0 {
            Ok(v)
        } else {
            Err(invalid(key, self.raw(key).unwrap_or(""), "must be > 0"))
        }
    }

    fn int<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        self.raw(key)
            .map(|v| v.parse::<T>().map_err(|_| invalid(key, v, "expected an integer")))
            .transpose()
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool, CliError> {
        match self.raw(key) {
            None => Ok(default),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(invalid(key, v, "expected true or false")),
        }
    }

    fn require(&self, key: &str, command: &str) -> Result<(), CliError> {
        if self.raw(key).is_none() {
            return Err(CliError::Validation(format!(
                "missing required key `{key}` for `{command}`"
            )));
        }
        Ok(())
    }
}

/// Build the run configuration from `argv` (program name first).
pub fn parse_config<I, T>(argv: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = command().try_get_matches_from(argv).map_err(|e| {
        use clap::error::ErrorKind;
        match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CliError::Info(e.to_string()),
            ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => CliError::Validation(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    })?;
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let command = Subcommand::from_name(name).expect("registered subcommand");

    let mut map = match sub.get_one::<String>("config") {
        Some(path) => {
            let path = PathBuf::from(path);
            let text = std::fs::read_to_string(&path).map_err(|source| IoError::Io {
                path: path.display().to_string(),
                source,
            })?;
            parse_config_file(&text, &path)?
        }
        None => BTreeMap::new(),
    };
    for (key, _) in KEYS {
        if let Some(v) = sub.get_one::<String>(key) {
            map.insert((*key).to_string(), v.clone());
        }
    }
    build(command, Values(map))
}

fn build(command: Subcommand, v: Values) -> Result<RunConfig, CliError> {
    let name = match command {
        Subcommand::Evolve => "evolve",
        Subcommand::Stationary => "stationary",
        Subcommand::Roots => "roots",
        Subcommand::Continue => "continue",
        Subcommand::Verify => "verify",
    };
    if matches!(
        command,
        Subcommand::Evolve | Subcommand::Stationary | Subcommand::Continue
    ) {
        v.require("h", name)?;
    }
    let params = ModelParams {
        lambda: v.positive_or("lambda", 1.0)?,
        p: v.positive_or("p", 1.0)?,
        omega: v.positive_or("omega", 1.0)?,
        h: v.positive_or("h", 1.0)?,
        gamma: v.f64_or("gamma", 0.0)?,
    };

    let window = match (v.int::<i64>("n_min")?, v.int::<i64>("n_max")?) {
        (Some(lo), Some(hi)) => {
            LatticeWindow::new(lo, hi, params.h).map_err(|e| invalid("n_max", &hi.to_string(), &e.to_string()))?
        }
        (None, None) => {
            let default = if command == Subcommand::Evolve { 101 } else { 41 };
            let sites: usize = v.int("sites")?.unwrap_or(default);
            if sites < 3 {
                return Err(invalid("sites", &sites.to_string(), "need at least 3 sites"));
            }
            let lo = -((sites as i64 - 1) / 2);
            LatticeWindow::new(lo, lo + sites as i64 - 1, params.h).expect("at least 3 sites")
        }
        (Some(_), None) => return Err(CliError::Validation("`n_min` given without `n_max`".into())),
        (None, Some(_)) => return Err(CliError::Validation("`n_max` given without `n_min`".into())),
    };

    let seed = match v.raw("seed").unwrap_or("single_site") {
        "single_site" => SeedChoice::SingleSite,
        "double_site" => SeedChoice::DoubleSite,
        "both" if command == Subcommand::Continue => SeedChoice::Both,
        "both" => return Err(invalid("seed", "both", "only valid for continue")),
        path => SeedChoice::File(PathBuf::from(path)),
    };
    let center = v.int::<i64>("center")?.unwrap_or(0);
    let rng_seed = v.int::<u64>("rng_seed")?.unwrap_or(1);

    let defaults = NewtonOptions::default();
    let newton = NewtonOptions {
        tol: v.positive_or("newton_tol", defaults.tol)?,
        max_iter: v.int("max_iter")?.unwrap_or(defaults.max_iter),
        max_sites: v.int("max_sites")?.unwrap_or(defaults.max_sites),
        ..defaults
    };

    let evolution = if command == Subcommand::Evolve {
        let d = EvolutionConfig::default();
        let config = EvolutionConfig {
            t_end: v.positive_or("t_end", d.t_end)?,
            dt_initial: v.positive_or("dt", d.dt_initial)?,
            abs_tol: v.positive_or("abs_tol", d.abs_tol)?,
            rel_tol: v.positive_or("rel_tol", d.rel_tol)?,
            record_every: v.positive_or("record_every", d.record_every)?,
            ..d
        };
        let init = match v.raw("init").unwrap_or("random") {
            "random" => InitialField::Random {
                mass: v.positive_or("mass", 1.0)?,
            },
            "soliton" => InitialField::Soliton,
            path => InitialField::File(PathBuf::from(path)),
        };
        Some(EvolveSettings {
            config,
            init,
            write_snapshots: v.bool_or("write_snapshots", false)?,
        })
    } else {
        None
    };

    let roots = if command == Subcommand::Roots {
        for key in ["h_min", "h_max", "h_steps"] {
            v.require(key, name)?;
        }
        let h_min = v.positive_or("h_min", 1.0)?;
        let h_max = v.positive_or("h_max", 1.0)?;
        if h_max < h_min {
            return Err(invalid("h_max", v.raw("h_max").unwrap_or(""), "must be >= h_min"));
        }
        let h_steps: usize = v.int("h_steps")?.unwrap_or(2);
        if h_steps < 2 {
            return Err(invalid("h_steps", &h_steps.to_string(), "must be >= 2"));
        }
        Some(RootSweep { h_min, h_max, h_steps })
    } else {
        None
    };

    let continuation = if command == Subcommand::Continue {
        let mode = match v.raw("mode").unwrap_or("arclength") {
            "arclength" => ContinuationMode::Arclength,
            "natural" => ContinuationMode::Natural,
            other => return Err(invalid("mode", other, "expected arclength or natural")),
        };
        let h_target = v.f64("h_target")?;
        if mode == ContinuationMode::Natural && h_target.is_none() {
            return Err(CliError::Validation(
                "missing required key `h_target` for natural continuation".into(),
            ));
        }
        if let Some(t) = h_target {
            if t <= 0.0 {
                return Err(invalid("h_target", v.raw("h_target").unwrap_or(""), "must be > 0"));
            }
        }
        let directions = match v.raw("direction").unwrap_or("decreasing") {
            "decreasing" => vec![Direction::DecreasingH],
            "increasing" => vec![Direction::IncreasingH],
            "both" => vec![Direction::DecreasingH, Direction::IncreasingH],
            other => return Err(invalid("direction", other, "expected decreasing, increasing or both")),
        };
        let d = ArclengthOptions::default();
        let arclength = ArclengthOptions {
            direction: directions[0],
            h_min: v.positive_or("h_min", d.h_min)?,
            h_max: v.positive_or("h_max", d.h_max)?,
            max_points: v.int("max_points")?.unwrap_or(d.max_points),
            max_folds: v.int("max_folds")?,
        };
        let control = StepControl {
            initial_fraction: v.positive_or("step_fraction", StepControl::default().initial_fraction)?,
            ..StepControl::default()
        };
        Some(ContinueSettings {
            mode,
            control,
            arclength,
            directions,
            h_target,
            write_fields: v.bool_or("write_fields", false)?,
        })
    } else {
        None
    };

    let verify = if command == Subcommand::Verify {
        Some(VerifyOptions {
            params,
            seed: rng_seed,
            tolerance: match v.f64("tolerance")? {
                Some(t) if t > 0.0 => Some(t),
                Some(_) => return Err(invalid("tolerance", v.raw("tolerance").unwrap_or(""), "must be > 0")),
                None => None,
            },
        })
    } else {
        None
    };

    let output_dir = match v.raw("out") {
        Some(p) => PathBuf::from(p),
        None => std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)),
    };

    Ok(RunConfig {
        command,
        params,
        window,
        seed,
        center,
        rng_seed,
        newton,
        evolution,
        continuation,
        roots,
        verify,
        output_dir,
    })
}

/// Parse, run and map the outcome to an exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let result = parse_config(argv).and_then(|config| run(&config));
    match result {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(CliError::Info(text)) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Result<RunConfig, CliError> {
        parse_config(std::iter::once("css-lattice").chain(args.iter().copied()))
    }

    #[test]
    fn roots_sweep_parses() {
        let c = parse(&[
            "roots",
            "--lambda",
            "1",
            "--p",
            "1",
            "--omega",
            "1",
            "--h-min",
            "0.5",
            "--h-max",
            "50",
            "--h-steps",
            "100",
        ])
        .unwrap();
        assert_eq!(c.command, Subcommand::Roots);
        assert_eq!(
            c.roots,
            Some(RootSweep {
                h_min: 0.5,
                h_max: 50.0,
                h_steps: 100
            })
        );
    }

    #[test]
    fn stationary_needs_h() {
        let err = parse(&["stationary", "--p", "1"]).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("`h`"), "{err}");
    }

    #[test]
    fn flag_overrides_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nh = 3\nomega = 2\n").unwrap();
        let c = parse(&["stationary", "--config", path.to_str().unwrap(), "--h", "5"]).unwrap();
        assert_eq!(c.params.h, 5.0);
        assert_eq!(c.params.omega, 2.0);
    }

    #[test]
    fn unknown_file_key_named() {
        let err = parse_config_file("h = 1\nbogus = 2\n", Path::new("x.cfg")).unwrap_err();
        assert!(err.to_string().contains("`bogus`"));
    }

    #[test]
    fn out_of_range_named() {
        for key in ["lambda", "p", "omega", "h"] {
            let flag = format!("--{key}");
            let mut args = vec!["stationary", flag.as_str(), "-1"];
            if key != "h" {
                args.extend(["--h", "1"]);
            }
            let err = parse(&args).unwrap_err();
            assert!(err.to_string().contains(&format!("`{key}`")), "{err}");
        }
    }

    #[test]
    fn help_is_not_an_error() {
        assert_eq!(parse(&["--help"]).unwrap_err().exit_code(), 0);
    }
}
