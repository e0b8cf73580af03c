use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Projection-domain PET toolkit: phantoms, Radon projection and
/// reconstruction, sinogram augmentation, ROI attention, diffusion sampling
/// and PAC-Bayes certification.
#[derive(Debug, Parser)]
#[command(name = "projdiff", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic phantom image.
    Phantom(PhantomArgs),
    /// Forward-project an image into a sinogram.
    Radon(RadonArgs),
    /// Filtered backprojection.
    Fbp(FbpArgs),
    /// MLEM reconstruction.
    Mlem(MlemArgs),
    /// Sample mask blocks and write their normalised sinogram mask.
    DmmMasks(DmmMasksArgs),
    /// Split a sinogram into [c_pos, s_full, c_neg] triples.
    Augment(AugmentArgs),
    /// ROI attention gating of a sinogram.
    Tma(TmaArgs),
    /// Run a DDPM, DDIM or bridge sampler.
    Diffuse(DiffuseArgs),
    /// Train the small MLP denoiser and write a checkpoint.
    TrainDenoiser(TrainArgs),
    /// PAC-Bayes certificate for a checkpoint.
    Certify(CertifyArgs),
    /// Monte Carlo check of the binary-KL concentration inequality.
    Concentration(ConcentrationArgs),
    /// PSNR, SSIM and RMSE between two images.
    Metrics(MetricsArgs),
    /// phantom -> radon -> augment -> diffuse -> fbp -> metrics in one go.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for all random draws. Required even where nothing is random.
    #[arg(long)]
    pub seed: u64,
    /// `key = value` run configuration. Flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ImageOpts {
    /// Image side length in pixels.
    #[arg(long)]
    pub size: Option<usize>,
    /// Pixel spacing.
    #[arg(long)]
    pub spacing: Option<f64>,
}

#[derive(Debug, Args)]
pub struct GeomOpts {
    /// Detector bin spacing (defaults to the pixel spacing).
    #[arg(long)]
    pub det_spacing: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    /// Kernel half-width (triangle) or standard deviation (Gaussian) in bins.
    #[arg(long)]
    pub bandwidth: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MaskOpts {
    /// Number of blocks.
    #[arg(long)]
    pub k: Option<usize>,
    /// Block width in pixels (default: size / 4).
    #[arg(long)]
    pub block_w: Option<usize>,
    /// Block height in pixels (default: size / 4).
    #[arg(long)]
    pub block_h: Option<usize>,
    /// Rejection attempts per block.
    #[arg(long)]
    pub max_attempts: Option<usize>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
}

#[derive(Debug, Args)]
pub struct ScheduleOpts {
    /// Number of diffusion steps T.
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub beta_end: Option<f64>,
}

/// Synthetic Gaussian data used when no input file is given.
#[derive(Debug, Args)]
pub struct DataOpts {
    /// Data dimension.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Data mean (every coordinate).
    #[arg(long, default_value_t = 0.5)]
    pub mu0: f64,
    /// Data variance (every coordinate).
    #[arg(long, default_value_t = 0.01)]
    pub sigma0_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Triangle,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    Clip,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhantomKind {
    SheppLogan,
    Disk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WindowArg {
    RamLak,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReconArg {
    Fbp,
    FbpHann,
    Mlem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SamplerArg {
    Ddpm,
    Ddim,
    Ddbm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BridgeModeArg {
    Sde,
    Ode,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum, default_value = "shepp-logan")]
    pub kind: PhantomKind,
    #[command(flatten)]
    pub img: ImageOpts,
    /// Disk centre x, in units of the image half-width.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub cx: f64,
    /// Disk centre y, in units of the image half-width.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub cy: f64,
    #[arg(long, default_value_t = 0.5)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub intensity: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a normalised 16-bit PGM.
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RadonArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Number of uniform angles in [0, pi).
    #[arg(long)]
    pub angles: Option<usize>,
    /// Detector bins (default covers the image diagonal).
    #[arg(long)]
    pub n_det: Option<usize>,
    #[arg(long)]
    pub spacing: Option<f64>,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FbpArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub img: ImageOpts,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[arg(long, value_enum, default_value = "ram-lak")]
    pub window: WindowArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pgm: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MlemArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub img: ImageOpts,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub pgm: Option<PathBuf>,
    /// Per-iteration Poisson log-likelihood as CSV.
    #[arg(long)]
    pub loglik_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DmmMasksArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub img: ImageOpts,
    #[arg(long)]
    pub angles: Option<usize>,
    #[arg(long)]
    pub n_det: Option<usize>,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[command(flatten)]
    pub mask: MaskOpts,
    /// Sinogram mask (n_det x n_angles).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Image-domain union of the blocks.
    #[arg(long)]
    pub image_out: Option<PathBuf>,
    /// Block placements as CSV.
    #[arg(long)]
    pub blocks_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Mask grid (the image the sinogram came from).
    #[command(flatten)]
    pub img: ImageOpts,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[command(flatten)]
    pub mask: MaskOpts,
    /// Number of augmented samples.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// (3, n_det, n_angles), or (count, 3, n_det, n_angles) when count > 1.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TmaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Grid of the measured object.
    #[command(flatten)]
    pub img: ImageOpts,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[arg(long, value_enum)]
    pub recon: Option<ReconArg>,
    #[arg(long)]
    pub recon_size: Option<usize>,
    #[arg(long)]
    pub mlem_iters: Option<usize>,
    /// `p<percent>` (e.g. p90) or an absolute value.
    #[arg(long)]
    pub threshold: Option<String>,
    /// Same syntax; pixels below it join the ROI.
    #[arg(long)]
    pub lower_threshold: Option<String>,
    /// Clinician ROI image (SGM1 or PGM); nonzero pixels are inside.
    #[arg(long)]
    pub roi: Option<PathBuf>,
    /// Keep the clipped ROI projection instead of binarising it.
    #[arg(long)]
    pub soft: bool,
    /// Gated sinogram.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub roi_out: Option<PathBuf>,
    #[arg(long)]
    pub recon_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiffuseArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerArg>,
    /// DDIM / bridge steps (DDPM always runs the full chain).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Starting step for DDPM / DDIM (default T).
    #[arg(long)]
    pub t_start: Option<usize>,
    /// `analytic` or `mlp:<checkpoint>`.
    #[arg(long, default_value = "analytic")]
    pub denoiser: String,
    #[command(flatten)]
    pub sched: ScheduleOpts,
    #[command(flatten)]
    pub data: DataOpts,
    /// Starting states (DDPM / DDIM) or terminal states (bridge), (count, d).
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Samples drawn from pure noise when no input is given.
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    #[arg(long)]
    pub bridge_sigma_min: Option<f64>,
    #[arg(long)]
    pub bridge_sigma_max: Option<f64>,
    #[arg(long, value_enum)]
    pub bridge_mode: Option<BridgeModeArg>,
    /// Exponent of the bridge time grid.
    #[arg(long, default_value_t = 2.0)]
    pub rho: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training data (count, d); synthetic Gaussian data otherwise.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub data: DataOpts,
    #[arg(long, default_value_t = 64)]
    pub count: usize,
    #[command(flatten)]
    pub sched: ScheduleOpts,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
    /// Train the bridge predictor on (x0, x0 + sigma_max * noise) pairs.
    #[arg(long)]
    pub bridge: bool,
    #[arg(long)]
    pub bridge_sigma_max: Option<f64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub common: Common,
    /// Network checkpoint (default: the bundled d = 8 denoiser).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Held-out data (n, d); synthetic otherwise.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub mu0: f64,
    #[arg(long, default_value_t = 0.01)]
    pub sigma0_sq: f64,
    #[command(flatten)]
    pub sched: ScheduleOpts,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma_p_sq: Option<f64>,
    /// Loss scale C (default: 95th percentile of the raw losses at the
    /// checkpoint).
    #[arg(long)]
    pub c: Option<f64>,
    /// Posterior samples.
    #[arg(long)]
    pub m: Option<usize>,
    /// Certificate record.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConcentrationArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.3)]
    pub p: f64,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub trials: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[command(flatten)]
    pub common: Common,
    /// Reference image (SGM1 or PGM).
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Fixed peak value (default: maximum of the reference).
    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub img: ImageOpts,
    #[arg(long)]
    pub angles: Option<usize>,
    #[command(flatten)]
    pub geom: GeomOpts,
    #[command(flatten)]
    pub mask: MaskOpts,
    #[command(flatten)]
    pub sched: ScheduleOpts,
    /// DDIM steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Noise level the latent is pushed to before sampling back.
    #[arg(long)]
    pub t_start: Option<usize>,
    #[arg(long)]
    pub out_dir: PathBuf,
}
