use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fisher_curvature::model::{Builtin, ModelSpec};
use fisher_curvature::singular::NormalCrossingSpec;
use fisher_curvature::ExpectationEngine;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Fisher-Rao curvature, Hellinger-immersion geometry and second-order
/// covariance corrections.
#[derive(Debug, Parser)]
#[command(name = "fisher-curvature", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,

    /// Built-in model registry name.
    #[arg(long, global = true)]
    pub model: Option<String>,

    /// Parameter dimension (gaussian-mean only).
    #[arg(long, global = true)]
    pub dim: Option<usize>,

    /// Parameter point, comma-separated.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub theta: Option<String>,

    /// auto, gauss-hermite[:ORDER], adaptive, discrete or monte-carlo:SAMPLES.
    #[arg(long, global = true, default_value = "auto")]
    pub engine: String,

    /// Sample sizes, comma-separated.
    #[arg(long, global = true)]
    pub n_grid: Option<String>,

    #[arg(long, global = true)]
    pub replicates: Option<usize>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Singular spec file (JSON).
    #[arg(long, global = true)]
    pub spec: Option<PathBuf>,

    /// Largest tolerated |z| when comparing a simulation fit with the prediction.
    #[arg(long, global = true, default_value_t = 3.0)]
    pub z_threshold: f64,

    /// Output directory; without it the primary document goes to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    /// Moment-derived geometry and immersion report at one point.
    Tensors,
    /// P = ½R♯ + S♯ + D and the covariance prediction at one point.
    Decompose,
    /// Monte Carlo covariance of the MLE fitted against the prediction.
    Simulate,
    /// Invariant suite across the built-in models.
    Verify,
    /// Learning-rate analysis of an additive normal-crossing spec.
    Singular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Contents of a `--spec` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularInput {
    #[serde(flatten)]
    pub spec: NormalCrossingSpec,
    /// Coefficients of the posterior distance `Σ b_j u_j²`.
    #[serde(default)]
    pub b: Option<Vec<f64>>,
}

/// Resolved run description. Everything except the output location enters
/// the config hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    pub engine: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spec: Option<SingularInput>,
    pub z_threshold: f64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
}

/// Seed used by `verify` when none is given.
pub const DEFAULT_VERIFY_SEED: u64 = 0;

fn parse_list(flag: &str, text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| format!("--{flag}: cannot parse `{t}`: {e}"))
        })
        .collect()
}

pub fn parse_engine(text: &str, seed: Option<u64>) -> Result<Option<ExpectationEngine>, String> {
    let (name, arg) = match text.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (text, None),
    };
    let number = |what: &str| -> Result<usize, String> {
        arg.ok_or_else(|| format!("--engine {name} needs :{what}"))?
            .parse::<usize>()
            .map_err(|e| format!("--engine {name}: {e}"))
    };
    match name {
        "auto" => Ok(None),
        "gauss-hermite" => Ok(Some(match arg {
            None => ExpectationEngine::gauss_hermite(),
            Some(_) => ExpectationEngine::GaussHermite { order: number("ORDER")? },
        })),
        "adaptive" => Ok(Some(ExpectationEngine::adaptive())),
        "discrete" => Ok(Some(ExpectationEngine::discrete())),
        "monte-carlo" => Ok(Some(ExpectationEngine::MonteCarlo {
            samples: number("SAMPLES")?,
            seed: seed.unwrap_or(0),
        })),
        other => Err(format!("unknown engine `{other}`")),
    }
}

impl RunConfig {
    /// Validates flag combinations; errors are usage errors.
    pub fn from_cli(cli: Cli) -> Result<Self, String> {
        let command = cli.command;
        let needs_point = matches!(command, CommandKind::Tensors | CommandKind::Decompose | CommandKind::Simulate);
        let model = match (&cli.model, needs_point) {
            (Some(name), _) => {
                let b = Builtin::from_name(name).map_err(|e| e.to_string())?;
                if cli.dim.is_some() && b != Builtin::GaussianMean && cli.dim != Some(b.dim(None)) {
                    return Err(format!("model {name} does not take --dim {}", cli.dim.unwrap_or(0)));
                }
                Some((b, ModelSpec::new(name.clone(), (b == Builtin::GaussianMean).then(|| b.dim(cli.dim)))))
            }
            (None, true) => return Err(format!("`{}` requires --model", command_name(command))),
            (None, false) => None,
        };
        let theta = match (&cli.theta, needs_point) {
            (Some(t), _) => Some(parse_list("theta", t)?),
            (None, true) => return Err(format!("`{}` requires --theta", command_name(command))),
            (None, false) => None,
        };
        if let (Some((b, spec)), Some(t)) = (&model, &theta) {
            let d = b.dim(spec.dim);
            if t.len() != d {
                return Err(format!("--theta has {} entries, model {} has dimension {d}", t.len(), spec.name));
            }
        }
        parse_engine(&cli.engine, cli.seed)?;
        let n_grid = cli.n_grid.as_deref().map(|g| parse_list("n-grid", g)).transpose()?;
        let mut seed = cli.seed;
        let mut spec = None;
        match command {
            CommandKind::Simulate => {
                if seed.is_none() {
                    return Err("`simulate` requires --seed".into());
                }
                let grid = n_grid.as_ref().ok_or("`simulate` requires --n-grid")?;
                if grid.iter().any(|&n| !(n >= 1.0 && n.fract() == 0.0)) {
                    return Err("--n-grid entries must be positive integers for `simulate`".into());
                }
                if cli.replicates.is_none() {
                    return Err("`simulate` requires --replicates".into());
                }
            }
            CommandKind::Singular => {
                let path = cli.spec.as_ref().ok_or("`singular` requires --spec")?;
                let text = std::fs::read_to_string(path).map_err(|e| format!("--spec {}: {e}", path.display()))?;
                let input: SingularInput =
                    serde_json::from_str(&text).map_err(|e| format!("--spec {}: {e}", path.display()))?;
                spec = Some(input);
            }
            CommandKind::Verify => {
                seed.get_or_insert(DEFAULT_VERIFY_SEED);
            }
            CommandKind::Tensors | CommandKind::Decompose => {}
        }
        Ok(Self {
            command,
            model: model.map(|(_, s)| s),
            theta,
            engine: cli.engine,
            n_grid,
            replicates: cli.replicates,
            seed,
            spec,
            z_threshold: cli.z_threshold,
            out: cli.out,
            format: cli.format,
        })
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn engine(&self) -> Option<ExpectationEngine> {
        parse_engine(&self.engine, self.seed).expect("validated")
    }
}

pub fn command_name(c: CommandKind) -> &'static str {
    match c {
        CommandKind::Tensors => "tensors",
        CommandKind::Decompose => "decompose",
        CommandKind::Simulate => "simulate",
        CommandKind::Verify => "verify",
        CommandKind::Singular => "singular",
    }
}
