use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use dynlab::system::ShearTerm;
use dynlab::{lookup, SystemSpec};
use serde::{Deserialize, Serialize};

/// Declares an option group usable both as clap flags and as a TOML section. Every
/// field is optional so that flags can be layered over the config file.
macro_rules! option_group {
    ($(#[$m:meta])* $name:ident { $($(#[$fm:meta])* $field:ident : $ty:ty),* $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Default, Args, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $($(#[$fm])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fields set here win over `other`.
            pub fn or(self, other: Self) -> Self {
                Self { $($field: self.$field.or(other.$field),)* }
            }
        }
    };
}

option_group! {
    /// Options shared by every command (TOML section `[run]`).
    Common {
        /// Registry system name (see `dyn-lab systems`).
        #[arg(global = true)]
        system: String,
        /// Outer scales ε, comma separated [default: 0.05].
        #[arg(global = true, value_delimiter = ',')]
        eps: Vec<f64>,
        /// Bowen-ball radius δ [default: 0.05].
        #[arg(global = true)]
        delta: f64,
        /// Bowen-ball horizon N, also the bundle horizon T [default: 40].
        #[arg(global = true)]
        horizon: usize,
        /// Grid points per axis; Bowen-ball grid resolution is 1/grid [default: 256, entropy: 1024].
        #[arg(global = true)]
        grid: usize,
        /// Number of quasi-random base points [default: 32].
        #[arg(global = true)]
        samples: usize,
        /// Inner counting scale inside Bowen balls and curves [default: 0.01].
        #[arg(global = true)]
        inner_eps: f64,
        /// Largest horizon n for counts and products [default: 8 for entropy, 12 for counts, 20 for products].
        #[arg(global = true)]
        n_max: usize,
        /// Base point, comma separated [default: first quasi-random point].
        #[arg(global = true, value_delimiter = ',', allow_negative_numbers = true)]
        point: Vec<f64>,
        /// Factor dimensions from stable to unstable, comma separated [default: exact splitting or all ones].
        #[arg(global = true, value_delimiter = ',')]
        dims: Vec<usize>,
        /// Write the JSON report here; CSV tables go next to it.
        #[arg(global = true)]
        out: PathBuf,
        /// Worker threads [default: DYNLAB_WORKERS or all cores].
        #[arg(global = true)]
        workers: usize,
        /// Offset of the quasi-random base points [default: 0].
        #[arg(global = true)]
        seed: u64,
    }
}

option_group! {
    /// `[entropy]` section.
    EntropyOpts {
        /// Fit window as `lo,hi` [default: upper half of the resolved horizons].
        #[arg(value_delimiter = ',')]
        fit: Vec<usize>,
    }
}

option_group! {
    /// `[gamma]` section.
    GammaOpts {
        /// Forward-only Γ⁺ instead of the bilateral set [default: false].
        forward_only: bool,
    }
}

option_group! {
    /// `[domination]` section.
    DominationOpts {
        /// Target rate λ₀ of the adapted metric [default: max(0.7, (1 + √λ)/2)].
        lambda0: f64,
        /// Averaging horizon m of the adapted metric [default: 20].
        adapted_m: usize,
        /// Cone radius [default: 0.1].
        cone_radius: f64,
        /// Neighbourhood radius ν for the uniformity constants [default: 0.01].
        nu: f64,
    }
}

option_group! {
    /// `[pliss]` section.
    PlissOpts {
        /// CSV file with one log-growth value per line.
        input: PathBuf,
        /// λ₁ [default: 0.5].
        l1: f64,
        /// λ₂ [default: 0.7].
        l2: f64,
        /// Bound A on |a_m| [default: largest observed magnitude].
        bound: f64,
        /// Bundle along the orbit, `cs:i` or `cu:i` [default: cs:0].
        selector: String,
        /// Sequence length along the orbit [default: 200].
        length: usize,
    }
}

option_group! {
    /// `[curve]` section.
    CurveOpts {
        /// Factor position of the curve tangent (0 is E^s) [default: 1].
        factor: usize,
        /// Half length ρ [default: δ/2].
        rho: f64,
        /// Integration step [default: half a grid cell].
        h_curve: f64,
        /// Length cap for the bounded-iterate entropy check [default: 0.5].
        length_cap: f64,
        /// λ₁ for the central expansion check [default: 0.7].
        lambda1: f64,
        /// Search range for n₀ [default: 50].
        n0_search: usize,
    }
}

/// Inline system definition (`[system_def]` section).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDef {
    pub name: String,
    pub dim: usize,
    pub matrix: Vec<i64>,
    pub translation: Vec<f64>,
    #[serde(default)]
    pub shears: Vec<ShearTerm>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: Common,
    pub system_def: Option<SystemDef>,
    #[serde(default)]
    pub entropy: EntropyOpts,
    #[serde(default)]
    pub gamma: GammaOpts,
    #[serde(default)]
    pub domination: DominationOpts,
    #[serde(default)]
    pub pliss: PlissOpts,
    #[serde(default)]
    pub curve: CurveOpts,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("config: cannot read {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("config: {}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dyn-lab",
    version,
    about = "Entropy and dominated-splitting experiments on torus maps"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in systems.
    Systems,
    /// Spanning and separated counts over a full grid, with the fitted rate.
    Entropy(EntropyOpts),
    /// Bowen ball Γ_δ(x) at one point.
    Gamma(GammaOpts),
    /// Supremum over base points of the entropy of Γ_ε(x).
    TailEntropy,
    /// Splitting, domination constants, adapted metric and cones.
    Domination(DominationOpts),
    /// Hyperbolic times from a CSV sequence or along an orbit.
    Pliss(PlissOpts),
    /// Central curve with containment, entropy and expansion checks.
    Curve(CurveOpts),
    /// Domination, Γ-in-curve, curve entropy and tail entropy in one chain.
    VerifyTheorem(CurveOpts),
}

/// Resolved shared parameters, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub system: Option<String>,
    pub eps: Vec<f64>,
    pub delta: f64,
    pub horizon: usize,
    pub grid: Option<usize>,
    pub samples: usize,
    pub inner_eps: f64,
    pub n_max: Option<usize>,
    pub point: Option<Vec<f64>>,
    pub dims: Option<Vec<usize>>,
    pub seed: u64,
}

impl Resolved {
    pub fn from(c: &Common) -> Self {
        Self {
            system: c.system.clone(),
            eps: c.eps.clone().unwrap_or_else(|| vec![0.05]),
            delta: c.delta.unwrap_or(0.05),
            horizon: c.horizon.unwrap_or(40),
            grid: c.grid,
            samples: c.samples.unwrap_or(32),
            inner_eps: c.inner_eps.unwrap_or(0.01),
            n_max: c.n_max,
            point: c.point.clone(),
            dims: c.dims.clone(),
            seed: c.seed.unwrap_or(0),
        }
    }
}

/// The system named on the command line, else the config's inline or named system.
pub fn resolve_system(name: Option<&str>, def: Option<&SystemDef>) -> Result<SystemSpec> {
    match (name, def) {
        (Some(n), _) => Ok(lookup(n)?),
        (None, Some(d)) => Ok(SystemSpec::affine(
            d.name.clone(),
            d.dim,
            d.matrix.clone(),
            d.translation.clone(),
            d.shears.clone(),
        )?),
        (None, None) => {
            anyhow::bail!("invalid input `system`: give --system NAME or a [system_def] section")
        }
    }
}
