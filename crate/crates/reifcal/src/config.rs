//! Run configuration: a JSON file, command-line flags, or both (flags win).
use anyhow::{bail, Context, Result};
use clap::Args;
use reifcal_core::builder::BuildConfig;
use reifcal_core::flatness::{NetPolicy, ScalePolicy};
use reifcal_core::forms::StandardForm;
use reifcal_core::generators::GeneratorSpec;
use reifcal_core::measure::BoundConstants;
use reifcal_core::{Ball, ConstantKForm};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Analyze,
    Build,
    Certify,
    Generate,
    Comass,
}

/// Where the calibration form comes from: a file path, a catalogue entry,
/// or an inline `{n, k, terms}` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FormSource {
    Path(PathBuf),
    Standard(StandardForm),
    Inline(ConstantKForm),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSettings {
    /// Ball centres come from the cloud inside `B_region_radius(0)`.
    pub region_radius: f64,
    /// Balls must lie inside `B_domain_radius(0)`.
    pub domain_radius: f64,
    pub net_factor: f64,
}

impl Default for NetSettings {
    fn default() -> Self {
        NetSettings {
            region_radius: 1.0,
            domain_radius: 2.0,
            net_factor: 0.5,
        }
    }
}

/// Surface grid and gluing settings; `ε` lives on [`RunConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSettings {
    pub levels: u32,
    pub blend: f64,
    pub grid_fraction: f64,
    pub max_nodes: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        let b = BuildConfig::default();
        GridSettings {
            levels: b.levels,
            blend: b.blend,
            grid_fraction: b.grid_fraction,
            max_nodes: b.max_nodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComassSettings {
    pub samples: usize,
    pub ascent_iters: usize,
    /// Values up to `1 + tolerance` count as comass one.
    pub tolerance: f64,
}

impl Default for ComassSettings {
    fn default() -> Self {
        ComassSettings {
            samples: 10_000,
            ascent_iters: 200,
            tolerance: 1e-3,
        }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub input: Option<PathBuf>,
    /// Directory receiving the artifacts; created when missing.
    pub output: Option<PathBuf>,
    pub form: Option<FormSource>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub delta: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub scales: ScalePolicy,
    pub net: NetSettings,
    pub grid: GridSettings,
    pub constants: BoundConstants,
    pub seed: u64,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    pub generator: Option<GeneratorSpec>,
    pub comass: ComassSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            command: None,
            input: None,
            output: None,
            form: None,
            n: None,
            k: None,
            delta: 0.05,
            alpha: 0.9,
            epsilon: BuildConfig::default().epsilon,
            scales: ScalePolicy::default(),
            net: NetSettings::default(),
            grid: GridSettings::default(),
            constants: BoundConstants::default(),
            seed: 0,
            threads: None,
            generator: None,
            comass: ComassSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn build_config(&self) -> BuildConfig {
        BuildConfig {
            epsilon: self.epsilon,
            levels: self.grid.levels,
            blend: self.grid.blend,
            grid_fraction: self.grid.grid_fraction,
            max_nodes: self.grid.max_nodes,
        }
    }

    pub fn net_policy(&self, n: usize) -> NetPolicy {
        NetPolicy {
            domain: Ball {
                center: vec![0.0; n],
                radius: self.net.domain_radius,
            },
            region: Ball {
                center: vec![0.0; n],
                radius: self.net.region_radius,
            },
            net_factor: self.net.net_factor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("delta", self.delta),
            ("epsilon", self.epsilon),
            ("net.region_radius", self.net.region_radius),
            ("net.domain_radius", self.net.domain_radius),
            ("net.net_factor", self.net.net_factor),
            ("grid.grid_fraction", self.grid.grid_fraction),
        ];
        for (name, v) in positive {
            if !v.is_finite() || v <= 0.0 {
                bail!("config value {name} must be positive and finite, got {v}");
            }
        }
        if !self.alpha.is_finite() {
            bail!("config value alpha must be finite");
        }
        if self.scales.j_min > self.scales.j_max {
            bail!("scales.j_min exceeds scales.j_max");
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        Ok(())
    }
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// JSON configuration file; flags given here override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input point cloud (CSV).
    #[arg(long, short)]
    pub input: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Calibration form file: `{n, k, terms}` or a catalogue entry such as
    /// `{"name": "kahler", "n_complex": 2, "k": 1}`.
    #[arg(long)]
    pub form: Option<PathBuf>,
    /// Ambient dimension; checked against the cloud.
    #[arg(long)]
    pub n: Option<usize>,
    /// Intrinsic dimension (defaults to the form degree).
    #[arg(long)]
    pub k: Option<usize>,
    /// Flatness threshold δ.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Positivity threshold α.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    /// Outer scale ε of the surface family and calibration slack.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Coarsest scale exponent: the largest ball radius is `2^-j_min`.
    #[arg(long)]
    pub j_min: Option<u32>,
    /// Finest scale exponent.
    #[arg(long)]
    pub j_max: Option<u32>,
    /// Ball centres at scale r form a `net_factor · r` net.
    #[arg(long)]
    pub net_factor: Option<f64>,
    /// Centres are drawn from the cloud inside this radius.
    #[arg(long)]
    pub region_radius: Option<f64>,
    /// Balls must lie inside this radius.
    #[arg(long)]
    pub domain_radius: Option<f64>,
    /// Number of refinement levels of the surface family.
    #[arg(long)]
    pub levels: Option<u32>,
    /// Partition-of-unity bump support, in ball radii.
    #[arg(long)]
    pub blend: Option<f64>,
    /// Surface grid spacing as a fraction of the finest scale.
    #[arg(long)]
    pub grid_fraction: Option<f64>,
    /// Cap on surface grid nodes.
    #[arg(long)]
    pub max_nodes: Option<usize>,
    /// Constant in the lower volume bound `1 − C δ`.
    #[arg(long)]
    pub c_delta: Option<f64>,
    /// Constant in the upper volume bound `(1 + C ε)/(α − 3ε/2)`.
    #[arg(long)]
    pub c_epsilon: Option<f64>,
    /// Seed for the comass search.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Generator request as inline JSON.
    #[arg(long)]
    pub spec: Option<String>,
    /// Random samples for the comass search.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Gradient-ascent steps per comass restart.
    #[arg(long)]
    pub ascent_iters: Option<usize>,
}

impl Flags {
    /// Loads the config file (if any) and applies the flags on top.
    pub fn resolve(&self, command: Command) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg)?;
        cfg.command = Some(command);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        fn set_opt<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set_opt(&mut cfg.input, &self.input);
        set_opt(&mut cfg.output, &self.output);
        if let Some(p) = &self.form {
            cfg.form = Some(FormSource::Path(p.clone()));
        }
        set_opt(&mut cfg.n, &self.n);
        set_opt(&mut cfg.k, &self.k);
        set(&mut cfg.delta, &self.delta);
        set(&mut cfg.alpha, &self.alpha);
        set(&mut cfg.epsilon, &self.epsilon);
        set(&mut cfg.scales.j_min, &self.j_min);
        set(&mut cfg.scales.j_max, &self.j_max);
        set(&mut cfg.net.net_factor, &self.net_factor);
        set(&mut cfg.net.region_radius, &self.region_radius);
        set(&mut cfg.net.domain_radius, &self.domain_radius);
        set(&mut cfg.grid.levels, &self.levels);
        set(&mut cfg.grid.blend, &self.blend);
        set(&mut cfg.grid.grid_fraction, &self.grid_fraction);
        set(&mut cfg.grid.max_nodes, &self.max_nodes);
        set(&mut cfg.constants.c_delta, &self.c_delta);
        set(&mut cfg.constants.c_epsilon, &self.c_epsilon);
        set(&mut cfg.seed, &self.seed);
        set_opt(&mut cfg.threads, &self.threads);
        set(&mut cfg.comass.samples, &self.samples);
        set(&mut cfg.comass.ascent_iters, &self.ascent_iters);
        if let Some(text) = &self.spec {
            cfg.generator = Some(serde_json::from_str(text).context("parsing --spec")?);
        }
        Ok(())
    }
}
