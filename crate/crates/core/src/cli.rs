//! Command-line front end: configuration parsing, the worker pool and output
//! files.
//!
//! Every run writes its output atomically and places a manifest next to it,
//! `<output>.manifest.json`, naming the program version, master seed and the
//! resolved configuration. The worker count is left out of the manifest so
//! that all files are byte-identical for any `--threads`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Parser;
use serde::Serialize;

use crate::ensemble::{map_trajectories, network_rng, trajectory_seed};
use crate::error::Error;
use crate::experiments::{
    averaged_entropy_grid, distribution_comparison, mixture_entropy_report,
    multi_click_bound_excess, scaling_sweep, write_scaling_csv, MixtureEntropyReport, SweepPoint,
    UnitarySource,
};
use crate::state::Bipartition;
use crate::trajectory::{attach_waiting_times, run_trajectory_with_rng};
use crate::unitary::{compose_brickwall, haar_unitary, sample_haar_brickwall, UnitaryMatrix};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

fn usage<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Usage(msg.into()))
}

/// Raw command-line flags. Any flag left out may come from `--config`.
#[derive(Debug, Default, Parser)]
#[command(
    name = "emitter-unravel",
    version,
    about = "Monitored emitter-chain trajectories behind a linear optical network"
)]
pub struct Args {
    /// key=value file with defaults for any of the flags below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// trajectory-dump | entropy-grid | scaling-sweep | distribution | mixture-entropy | dump-unitary
    #[arg(long)]
    pub mode: Option<String>,
    /// number of emitters N
    #[arg(long)]
    pub n: Option<usize>,
    /// initially excited emitters M (default N)
    #[arg(long)]
    pub m: Option<usize>,
    /// identity | haar | brickwall:D | brickwall:N/q | brickwall:pN | file:PATH
    #[arg(long)]
    pub unitary: Option<String>,
    /// number of trajectories
    #[arg(long)]
    pub samples: Option<usize>,
    /// master seed (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// output file
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// worker threads (default: available parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
    /// click count for mixture-entropy
    #[arg(long)]
    pub k: Option<usize>,
    /// cut size: sites 0..l form the left block (default N/2)
    #[arg(long)]
    pub l: Option<usize>,
    /// comma-separated system sizes for scaling-sweep (N = M)
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// attach exponential waiting times in trajectory-dump
    #[arg(long)]
    pub waiting_times: bool,
    /// also write the network unitary used by a fixed-network run
    #[arg(long)]
    pub dump_unitary: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    TrajectoryDump,
    EntropyGrid,
    ScalingSweep,
    Distribution,
    MixtureEntropy,
    DumpUnitary,
}

impl Mode {
    const ALL: [(Mode, &'static str); 6] = [
        (Mode::TrajectoryDump, "trajectory-dump"),
        (Mode::EntropyGrid, "entropy-grid"),
        (Mode::ScalingSweep, "scaling-sweep"),
        (Mode::Distribution, "distribution"),
        (Mode::MixtureEntropy, "mixture-entropy"),
        (Mode::DumpUnitary, "dump-unitary"),
    ];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = Mode::ALL
            .iter()
            .find(|(m, _)| m == self)
            .map(|(_, s)| *s)
            .unwrap_or("?");
        f.write_str(name)
    }
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Mode::ALL
            .iter()
            .find(|(_, name)| *name == s)
            .map(|(m, _)| *m)
            .ok_or_else(|| CliError::Usage(format!("unknown mode `{s}`")))
    }
}

/// Depth of a brick-wall network, either fixed or proportional to `N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthRule {
    Fixed(usize),
    /// `D = mul·N / div`, rounded down.
    Scaled {
        mul: usize,
        div: usize,
    },
}

impl DepthRule {
    pub fn depth(&self, n: usize) -> usize {
        match *self {
            DepthRule::Fixed(d) => d,
            DepthRule::Scaled { mul, div } => mul * n / div,
        }
    }
}

impl fmt::Display for DepthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DepthRule::Fixed(d) => write!(f, "{d}"),
            DepthRule::Scaled { mul, div } => {
                if mul != 1 {
                    write!(f, "{mul}")?;
                }
                f.write_str("N")?;
                if div != 1 {
                    write!(f, "/{div}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for DepthRule {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        let bad = || CliError::Usage(format!("invalid brick-wall depth `{s}`"));
        if let Ok(d) = s.parse() {
            return Ok(DepthRule::Fixed(d));
        }
        let (head, div) = match s.split_once('/') {
            Some((h, d)) => (h, d.parse::<usize>().map_err(|_| bad())?),
            None => (s, 1),
        };
        let mul = match head.strip_suffix('N') {
            Some("") => 1,
            Some(p) => p.parse::<usize>().map_err(|_| bad())?,
            None => return Err(bad()),
        };
        if div == 0 || mul == 0 {
            return Err(bad());
        }
        Ok(DepthRule::Scaled { mul, div })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnitaryChoice {
    Identity,
    Haar,
    Brickwall(DepthRule),
    File(PathBuf),
}

impl fmt::Display for UnitaryChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            UnitaryChoice::Identity => f.write_str("identity"),
            UnitaryChoice::Haar => f.write_str("haar"),
            UnitaryChoice::Brickwall(r) => write!(f, "brickwall:{r}"),
            UnitaryChoice::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for UnitaryChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "identity" => Ok(UnitaryChoice::Identity),
            "haar" => Ok(UnitaryChoice::Haar),
            _ => {
                if let Some(d) = s.strip_prefix("brickwall:") {
                    Ok(UnitaryChoice::Brickwall(d.parse()?))
                } else if let Some(p) = s.strip_prefix("file:").filter(|p| !p.is_empty()) {
                    Ok(UnitaryChoice::File(PathBuf::from(p)))
                } else {
                    usage(format!("unknown unitary `{s}`"))
                }
            }
        }
    }
}

/// Mode-specific parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Job {
    TrajectoryDump {
        n_sites: usize,
        n_excited: usize,
        cut: usize,
        waiting_times: bool,
    },
    EntropyGrid {
        n_sites: usize,
        n_excited: usize,
    },
    ScalingSweep {
        sizes: Vec<usize>,
    },
    Distribution {
        n_sites: usize,
        n_excited: usize,
    },
    MixtureEntropy {
        n_sites: usize,
        n_excited: usize,
        k: usize,
        l: usize,
    },
    DumpUnitary {
        n_sites: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub job: Job,
    pub unitary: UnitaryChoice,
    /// Zero for `dump-unitary`, which samples no trajectories.
    pub n_samples: usize,
    pub master_seed: u64,
    pub output: PathBuf,
    pub threads: usize,
    pub dump_unitary: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 13] = [
    "mode",
    "n",
    "m",
    "unitary",
    "samples",
    "seed",
    "output",
    "threads",
    "k",
    "l",
    "sizes",
    "waiting-times",
    "dump-unitary",
];

/// Parses `key = value` lines; `#` starts a comment, values may be quoted and
/// keys may use `_` or `-`.
pub fn parse_config_file(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return usage(format!("config line {}: expected key=value", no + 1));
        };
        let key = k.trim().replace('_', "-");
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return usage(format!(
                "config line {}: unknown key `{}`",
                no + 1,
                k.trim()
            ));
        }
        let v = v.trim();
        let v = v
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(v);
        if out.insert(key.clone(), v.to_string()).is_some() {
            return usage(format!("config line {}: duplicate key `{key}`", no + 1));
        }
    }
    Ok(out)
}

struct Merged {
    file: BTreeMap<String, String>,
}

impl Merged {
    fn get<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `{key}`"))),
        }
    }

    fn require<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.get(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required field `{key}`")))
    }
}

impl RunConfig {
    /// Merges flags over the optional config file and validates the result.
    pub fn from_args(args: Args) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    CliError::Usage(format!("cannot read config `{}`: {e}", p.display()))
                })?;
                parse_config_file(&text)?
            }
            None => BTreeMap::new(),
        };
        let cfg = Merged { file };
        let mode: Mode =
            cfg.require(args.mode.as_deref().map(|s| s.parse()).transpose()?, "mode")?;
        let master_seed = cfg.require(args.seed, "seed")?;
        let output = cfg.require(args.output, "output")?;
        let threads = match cfg.get(args.threads, "threads")? {
            Some(0) => return usage("`threads` must be at least 1"),
            Some(t) => t,
            None => std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
        };
        let unitary: UnitaryChoice = cfg.require(
            args.unitary.as_deref().map(|s| s.parse()).transpose()?,
            "unitary",
        )?;
        let waiting_times =
            args.waiting_times || cfg.get(None::<bool>, "waiting-times")?.unwrap_or(false);
        let dump_unitary = cfg.get(args.dump_unitary, "dump-unitary")?;
        let sizes = match args.sizes {
            Some(s) => Some(s),
            None => cfg
                .file
                .get("sizes")
                .map(|v| {
                    v.split(',')
                        .map(|x| x.trim().parse())
                        .collect::<Result<Vec<usize>, _>>()
                        .map_err(|_| CliError::Usage(format!("invalid value `{v}` for `sizes`")))
                })
                .transpose()?,
        };

        let sites = |cfg: &Merged| -> Result<(usize, usize), CliError> {
            let n = cfg.require(args.n, "n")?;
            let m = cfg.get(args.m, "m")?.unwrap_or(n);
            if n == 0 {
                return usage("`n` must be at least 1");
            }
            if m > n {
                return usage(format!("`m` ({m}) exceeds `n` ({n})"));
            }
            Ok((n, m))
        };
        let cut = |cfg: &Merged, n: usize| -> Result<usize, CliError> {
            let l = cfg.get(args.l, "l")?.unwrap_or(n / 2);
            if l == 0 || l >= n {
                return usage(format!("`l` must satisfy 1 <= l <= n-1, got {l}"));
            }
            Ok(l)
        };

        let job = match mode {
            Mode::TrajectoryDump => {
                let (n, m) = sites(&cfg)?;
                if n < 2 {
                    return usage("trajectory-dump needs `n` >= 2");
                }
                Job::TrajectoryDump {
                    n_sites: n,
                    n_excited: m,
                    cut: cut(&cfg, n)?,
                    waiting_times,
                }
            }
            Mode::EntropyGrid => {
                let (n, m) = sites(&cfg)?;
                if n < 2 {
                    return usage("entropy-grid needs `n` >= 2");
                }
                Job::EntropyGrid {
                    n_sites: n,
                    n_excited: m,
                }
            }
            Mode::Distribution => {
                let (n, m) = sites(&cfg)?;
                Job::Distribution {
                    n_sites: n,
                    n_excited: m,
                }
            }
            Mode::MixtureEntropy => {
                let (n, m) = sites(&cfg)?;
                if n < 2 {
                    return usage("mixture-entropy needs `n` >= 2");
                }
                let k = cfg.require(args.k, "k")?;
                if k > m {
                    return usage(format!("`k` ({k}) exceeds `m` ({m})"));
                }
                Job::MixtureEntropy {
                    n_sites: n,
                    n_excited: m,
                    k,
                    l: cut(&cfg, n)?,
                }
            }
            Mode::DumpUnitary => Job::DumpUnitary {
                n_sites: sites(&cfg)?.0,
            },
            Mode::ScalingSweep => {
                let sizes = sizes
                    .ok_or_else(|| CliError::Usage("missing required field `sizes`".into()))?;
                if sizes.is_empty() || sizes.iter().any(|&n| n < 2) {
                    return usage("`sizes` must list sizes >= 2");
                }
                if matches!(unitary, UnitaryChoice::File(_)) {
                    return usage("scaling-sweep cannot use a unitary file");
                }
                Job::ScalingSweep { sizes }
            }
        };

        let n_samples = if mode == Mode::DumpUnitary {
            0
        } else {
            let s = cfg.require(args.samples, "samples")?;
            if s == 0 {
                return usage("`samples` must be at least 1");
            }
            s
        };
        if dump_unitary.is_some()
            && matches!(
                mode,
                Mode::EntropyGrid | Mode::ScalingSweep | Mode::DumpUnitary
            )
        {
            return usage(format!(
                "`dump-unitary` is only available for fixed-network modes, not {mode}"
            ));
        }
        Ok(RunConfig {
            job,
            unitary,
            n_samples,
            master_seed,
            output,
            threads,
            dump_unitary,
        })
    }

    pub fn mode(&self) -> Mode {
        match self.job {
            Job::TrajectoryDump { .. } => Mode::TrajectoryDump,
            Job::EntropyGrid { .. } => Mode::EntropyGrid,
            Job::ScalingSweep { .. } => Mode::ScalingSweep,
            Job::Distribution { .. } => Mode::Distribution,
            Job::MixtureEntropy { .. } => Mode::MixtureEntropy,
            Job::DumpUnitary { .. } => Mode::DumpUnitary,
        }
    }
}

/// The single network of a fixed-network run. Random choices draw from
/// [`network_rng`] of the master seed.
pub fn fixed_unitary(
    choice: &UnitaryChoice,
    n: usize,
    master_seed: u64,
) -> Result<UnitaryMatrix, Error> {
    let u = match choice {
        UnitaryChoice::Identity => UnitaryMatrix::identity(n),
        UnitaryChoice::Haar => haar_unitary(n, &mut network_rng(master_seed)),
        UnitaryChoice::Brickwall(rule) => compose_brickwall(&sample_haar_brickwall(
            n,
            rule.depth(n),
            &mut network_rng(master_seed),
        )?)?,
        UnitaryChoice::File(p) => UnitaryMatrix::from_json_str(&fs::read_to_string(p)?)?,
    };
    if u.dim() != n {
        return Err(Error::Parameter(format!(
            "unitary has dim {}, expected n = {n}",
            u.dim()
        )));
    }
    Ok(u)
}

/// Ensemble source: fresh networks per trajectory for `haar` and
/// `brickwall`, one network otherwise.
pub fn ensemble_source(
    choice: &UnitaryChoice,
    n: usize,
    master_seed: u64,
) -> Result<UnitarySource, Error> {
    Ok(match choice {
        UnitaryChoice::Haar => UnitarySource::Haar,
        UnitaryChoice::Brickwall(rule) => UnitarySource::Brickwall {
            depth: rule.depth(n),
        },
        other => UnitarySource::Fixed(fixed_unitary(other, n, master_seed)?),
    })
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    master_seed: u64,
    seed_scheme: &'static str,
    unitary: String,
    n_samples: usize,
    #[serde(flatten)]
    job: &'a Job,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct MixtureOutput<'a> {
    #[serde(flatten)]
    report: &'a MixtureEntropyReport,
    lower_bound_holds: bool,
    upper_bound_holds: bool,
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Runs the configured job on a pool of `config.threads` workers and returns
/// the files written.
pub fn execute(config: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| CliError::Pool(e.to_string()))?;
    pool.install(|| run_job(config)).map_err(CliError::from)
}

fn run_job(config: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let seed = config.master_seed;
    let samples = config.n_samples;
    let mut extra = Vec::new();
    let body: Vec<u8> = match &config.job {
        Job::TrajectoryDump {
            n_sites,
            n_excited,
            cut,
            waiting_times,
        } => {
            let u = fixed_unitary(&config.unitary, *n_sites, seed)?;
            extra.extend(dump_network(config, &u)?);
            let bip = Bipartition::new(*cut, *n_sites)?;
            let records = map_trajectories(samples, seed, |idx, rng| {
                let rec = run_trajectory_with_rng(
                    *n_sites,
                    *n_excited,
                    &u,
                    bip,
                    trajectory_seed(seed, idx),
                    rng,
                )?;
                if *waiting_times {
                    attach_waiting_times(rec, *n_excited, rng)
                } else {
                    Ok(rec)
                }
            })?;
            let mut buf = Vec::new();
            for r in &records {
                r.write_jsonl(&mut buf)?;
            }
            buf
        }
        Job::EntropyGrid { n_sites, n_excited } => {
            let source = ensemble_source(&config.unitary, *n_sites, seed)?;
            let grid = averaged_entropy_grid(*n_sites, *n_excited, &source, samples, seed)?;
            if source == UnitarySource::Haar && n_sites == n_excited {
                for (k, l, excess) in multi_click_bound_excess(&grid, 3.0) {
                    log::warn!("mean entropy at k={k}, l={l} exceeds k*h(l/N) by {excess:.3e}");
                }
            }
            let mut buf = Vec::new();
            grid.write_csv(&mut buf)?;
            buf
        }
        Job::ScalingSweep { sizes } => {
            let points = sizes
                .iter()
                .map(|&n| {
                    Ok(SweepPoint {
                        n_sites: n,
                        source: ensemble_source(&config.unitary, n, seed)?,
                    })
                })
                .collect::<Result<Vec<_>, Error>>()?;
            let rows = scaling_sweep(&points, samples, seed)?;
            let mut buf = Vec::new();
            write_scaling_csv(&rows, &mut buf)?;
            buf
        }
        Job::Distribution { n_sites, n_excited } => {
            let u = fixed_unitary(&config.unitary, *n_sites, seed)?;
            extra.extend(dump_network(config, &u)?);
            let report = distribution_comparison(*n_sites, *n_excited, &u, samples, seed)?;
            log::info!(
                "TVD {:.4e} (expected {:.4e})",
                report.tvd,
                report.expected_tvd()
            );
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
        Job::MixtureEntropy {
            n_sites,
            n_excited,
            k,
            l,
        } => {
            let u = fixed_unitary(&config.unitary, *n_sites, seed)?;
            extra.extend(dump_network(config, &u)?);
            let report = mixture_entropy_report(*n_sites, *n_excited, &u, *k, *l, samples, seed)?;
            if !report.sandwich_holds() {
                log::warn!(
                    "entropy sandwich violated beyond tolerance {:.3e}",
                    report.tolerance
                );
            }
            let out = MixtureOutput {
                report: &report,
                lower_bound_holds: report.lower_bound_holds(),
                upper_bound_holds: report.upper_bound_holds(),
            };
            let mut buf = serde_json::to_vec_pretty(&out)?;
            buf.push(b'\n');
            buf
        }
        Job::DumpUnitary { n_sites } => {
            let u = fixed_unitary(&config.unitary, *n_sites, seed)?;
            let mut buf = u.to_json_string()?.into_bytes();
            buf.push(b'\n');
            buf
        }
    };
    write_atomic(&config.output, &body)?;
    let mut written = vec![config.output.clone()];
    written.extend(extra);
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        master_seed: seed,
        seed_scheme: "splitmix64 per-trajectory streams, ChaCha8",
        unitary: config.unitary.to_string(),
        n_samples: samples,
        job: &config.job,
        outputs: written.iter().map(|p| p.display().to_string()).collect(),
    };
    let mpath = manifest_path(&config.output);
    let mut mbytes = serde_json::to_vec_pretty(&manifest)?;
    mbytes.push(b'\n');
    write_atomic(&mpath, &mbytes)?;
    written.push(mpath);
    Ok(written)
}

fn dump_network(config: &RunConfig, u: &UnitaryMatrix) -> Result<Option<PathBuf>, Error> {
    let Some(path) = &config.dump_unitary else {
        return Ok(None);
    };
    let mut buf = u.to_json_string()?.into_bytes();
    buf.push(b'\n');
    write_atomic(path, &buf)?;
    Ok(Some(path.clone()))
}
