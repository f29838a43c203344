use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use nmqd_core::hops::HopsMode;
use nmqd_neural::metric::Reducer;
use nmqd_neural::train::Schedule;
use serde::Serialize;

#[derive(Parser, Debug)]
#[command(
    name = "nmqd",
    version,
    about = "Operator construction for non-Markovian quantum state diffusion",
    args_override_self = true
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct GlobalArgs {
    /// TOML file whose sections supply default flag values
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for trajectory and sample parallelism
    #[arg(long, global = true, env = "NMQD_THREADS")]
    pub threads: Option<usize>,
    /// Seed used by commands whose --seed is not given
    #[arg(long, global = true)]
    pub base_seed: Option<u64>,
    /// Omit wall-clock timings from manifests so reruns are byte-identical
    #[arg(long, global = true, default_value_t = true, action = ArgAction::Set)]
    pub deterministic: bool,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Spectral densities and their exponential decompositions
    #[command(subcommand)]
    Bath(BathCommand),
    /// Correlated Gaussian noise
    #[command(subcommand)]
    Noise(NoiseCommand),
    /// Stochastic wavefunction trajectories
    #[command(subcommand)]
    Hops(HopsCommand),
    /// Reference density-matrix dynamics
    #[command(subcommand)]
    Heom(HeomCommand),
    /// Train the operator network
    Train(TrainArgs),
    /// Per-time-step error of a trained network
    Validate(ValidateArgs),
    /// Densities, spectra, dynamical maps and transfer tensors
    #[command(subcommand)]
    Apps(AppsCommand),
    /// Regenerate figure data, or rerun a manifest
    Repro(ReproArgs),
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BathCommand {
    /// Decompose α(t) into exponential modes
    Decompose(DecomposeArgs),
    /// Compare a decomposition with direct quadrature
    Validate(BathValidateArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sdf {
    Drude,
    Brownian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeArg {
    Pade,
    Matsubara,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct DecomposeArgs {
    #[arg(long, value_enum)]
    pub sdf: Sdf,
    /// Reorganization energy λ
    #[arg(long)]
    pub lambda: f64,
    /// Drude cutoff or Brownian damping γ
    #[arg(long)]
    pub gamma: f64,
    /// Brownian oscillator frequency
    #[arg(long)]
    pub omega_b: Option<f64>,
    /// Inverse temperature β
    #[arg(long)]
    pub beta: f64,
    /// Number of poles of the coth expansion
    #[arg(long)]
    pub poles: usize,
    #[arg(long, value_enum, default_value = "pade")]
    pub scheme: SchemeArg,
    /// Residual grid used for the recorded metadata
    #[arg(long, default_value_t = 0.1)]
    pub tmin: f64,
    #[arg(long, default_value_t = 10.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Output JSON file
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct BathValidateArgs {
    /// Modes JSON written by `bath decompose`
    #[arg(long)]
    pub modes: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub tmin: f64,
    #[arg(long, default_value_t = 10.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// Optional CSV of both correlation functions on the grid
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCommand {
    /// Draw noise trajectories with covariance α(t − s)
    Sample(NoiseSampleArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct NoiseSampleArgs {
    #[arg(long)]
    pub modes: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 7000)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SystemArgs {
    /// Level splitting ω of H_s = (ω/2)σ_z + Δσ_x
    #[arg(long, default_value_t = 1.0)]
    pub omega: f64,
    /// Tunnelling Δ
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HopsCommand {
    /// Propagate HOPS for every (initial state, noise) pair
    Gen(HopsGenArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Assign {
    /// Every initial state with every noise trajectory
    All,
    /// Noise trajectory j with initial state j mod (number of states)
    Cycle,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct HopsGenArgs {
    #[arg(long)]
    pub modes: PathBuf,
    /// Noise file written by `noise sample`
    #[arg(long)]
    pub noise: PathBuf,
    /// Initial state: basis index, η label (+1, -1, +i, -i) or amplitudes "1,0"; repeatable
    #[arg(long, default_value = "1,0", allow_hyphen_values = true)]
    pub init: Vec<String>,
    #[arg(long, value_enum, default_value = "all")]
    pub assign: Assign,
    /// Hierarchy depth H_max
    #[arg(long, default_value_t = 20)]
    pub kmax: usize,
    #[arg(long, default_value = "nonlinear")]
    pub mode: HopsMode,
    /// RK4 steps per grid interval
    #[arg(long, default_value_t = 1)]
    pub substeps: usize,
    /// Noise indices below this value form the training split (default 5/7 of the count)
    #[arg(long)]
    pub n_train: Option<u64>,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HeomCommand {
    /// Propagate the reduced density matrix
    Run(HeomRunArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct HeomRunArgs {
    #[arg(long)]
    pub modes: PathBuf,
    /// Initial density: diag:a,b, pure:<state>, full:<entries> or a state
    #[arg(long, default_value = "diag:1,0", allow_hyphen_values = true)]
    pub init: String,
    #[arg(long, default_value_t = 10.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    #[arg(long, default_value_t = 1)]
    pub substeps: usize,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchArg {
    Paper,
    Tiny,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Dataset written by `hops gen`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "tiny")]
    pub arch: ArchArg,
    /// Override the number of retained Fourier modes
    #[arg(long)]
    pub n_modes: Option<usize>,
    /// Override the latent width
    #[arg(long)]
    pub latent: Option<usize>,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value = "constant")]
    pub schedule: Schedule,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Validation loss every this many epochs (0 disables it)
    #[arg(long, default_value_t = 1)]
    pub validate_every: usize,
    /// Write the checkpoint every this many epochs as well as at the end
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
    /// Continue from a checkpoint with optimizer state
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Optional CSV of the per-epoch losses
    #[arg(long)]
    pub log_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    All,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct ValidateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "mean")]
    pub reducer: Reducer,
    #[arg(long, value_enum, default_value = "validation")]
    pub split: Split,
    /// Overlap of unnormalized states instead of normalized ones
    #[arg(long)]
    pub metric_raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AppsCommand {
    /// Emit U_n for every record of a dataset with a trained model
    Operators(OperatorsArgs),
    /// Reduced density matrix and population difference
    Density(DensityArgs),
    /// Dipole correlation function and linear absorption spectrum
    Spectrum(SpectrumArgs),
    /// Dynamical maps E_n
    Maps(MapsArgs),
    /// Transfer tensors and long-time propagation
    Ttm(TtmArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct OperatorsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    pub split: Split,
    /// Predict for these initial states with every record's noise instead of the record's own state; repeatable
    #[arg(long, allow_hyphen_values = true)]
    pub init: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exactly one of --data, --ops or --heom-modes.
#[derive(Args, Debug, Clone, Serialize)]
pub struct SourceArgs {
    /// HOPS dataset
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Operator file written by `apps operators`
    #[arg(long)]
    pub ops: Option<PathBuf>,
    /// Modes JSON for a HEOM source
    #[arg(long)]
    pub heom_modes: Option<PathBuf>,
    /// Records used from --data or --ops
    #[arg(long, value_enum, default_value = "all")]
    pub split: Split,
    /// Average raw projectors instead of normalized ones
    #[arg(long)]
    pub raw_projectors: bool,
    /// HEOM depth
    #[arg(long, default_value_t = 10)]
    pub kmax: usize,
    /// HEOM time step
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    /// HEOM grid intervals
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 1)]
    pub substeps: usize,
    #[command(flatten)]
    pub system: SystemArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct DensityArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Initial state: ensemble label for stochastic sources, density for HEOM
    #[arg(long, default_value = "1", allow_hyphen_values = true)]
    pub init: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrModeArg {
    /// Σ_η (η/2) E⟨ψ|μ|ψ⟩
    MuInserted,
    /// Σ_η (η/2) E⟨ψ|ψ⟩
    PaperLiteral,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long, value_enum, default_value = "mu-inserted")]
    pub corr_mode: CorrModeArg,
    /// Fraction of the grid used by the Fourier sum
    #[arg(long, default_value_t = 0.8)]
    pub window: f64,
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub omega_min: f64,
    #[arg(long, default_value_t = 4.0, allow_hyphen_values = true)]
    pub omega_max: f64,
    #[arg(long, default_value_t = 0.005)]
    pub omega_step: f64,
    /// Optional CSV of C(t)
    #[arg(long)]
    pub corr_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct MapsArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct TtmArgs {
    /// Maps written by `apps maps`
    #[arg(long)]
    pub maps: PathBuf,
    /// Number of transfer tensors K
    #[arg(long, default_value_t = 500)]
    pub cutoff: usize,
    #[arg(long, default_value_t = 40.0)]
    pub tmax: f64,
    #[arg(long, default_value = "diag:1,0", allow_hyphen_values = true)]
    pub init: String,
    /// Optional binary file with the tensors
    #[arg(long)]
    pub tensors_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Fig3,
    Fig4,
    Fig5,
    Fig6,
    Fig7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Paper,
}

#[derive(Args, Debug, Clone, Serialize)]
#[command(args_override_self = true)]
pub struct ReproArgs {
    #[arg(value_enum, required_unless_present = "manifest")]
    pub profile: Option<Profile>,
    /// Rerun the command recorded in a manifest and compare output hashes
    #[arg(long, conflicts_with = "profile")]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "desk")]
    pub scale: Scale,
    /// Inverse temperatures for fig6 and fig7 (default 0.2, 1, 5)
    #[arg(long)]
    pub beta: Vec<f64>,
    #[arg(long, default_value = "repro")]
    pub out_dir: PathBuf,
    /// Skip stages whose manifest matches the files on disk
    #[arg(long)]
    pub reuse: bool,
    /// Desk override: training trajectories
    #[arg(long)]
    pub n_train: Option<usize>,
    /// Desk override: validation trajectories
    #[arg(long)]
    pub n_val: Option<usize>,
    /// Desk override: grid intervals of the training window
    #[arg(long)]
    pub steps: Option<usize>,
    /// Desk override: training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
}
