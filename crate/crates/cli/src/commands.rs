use std::path::{Path, PathBuf};
use std::sync::Arc;

use projdiff::augment::{
    decompose_pos_neg, normalize_mask, pn_consistency_loss, project_masks, sample_mask_blocks, MaskSet,
    NormMode, SinogramMask,
};
use projdiff::denoiser::{
    bridge_train_step, mlp_train_step, AnalyticGaussianDenoiser, BridgeMlpDenoiser, Mlp, TinyMlpDenoiser,
};
use projdiff::diffusion::{
    bridge_time_grid, build_linear_schedule, compose_input, ddbm_sample, ddim_sample, ddim_timesteps,
    ddpm_sample, decode_latent, encode_latent, forward_marginal_sample, BridgeDenoiser, BridgeMode,
    BridgeSchedule, Denoiser, EncoderMode, NoiseSchedule,
};
use projdiff::io::{self, write_csv};
use projdiff::metrics::{quality_metrics, Peak};
use projdiff::pacbayes::{
    bounded_loss, calibrate_loss_scale, certify, concentration_simulate, concentration_threshold,
    PacBayesConfig,
};
use projdiff::rng::{self, mix};
use projdiff::tma::{run_tma, Recon, RoiImageMask, Threshold, TmaConfig};
use projdiff::tomo::{
    default_n_det, fbp_reconstruct, make_phantom, mlem_reconstruct, radon_forward, FbpWindow, ImageGrid,
    Phantom, ProjectionGeometry,
};
use rand::Rng;

use crate::args::*;
use crate::ctx::Ctx;
use crate::error::{CliError, CliResult, Stage};

/// Bundled `9 -> 32 -> 8` noise predictor trained on N(0.5, 0.01) data.
const BUNDLED_CHECKPOINT: &[u8] = include_bytes!("../assets/denoiser_d8.sgm");

// Independent sub-streams of the user seed.
const DATA_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const MASK_STREAM: u64 = 4;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn image_params(ctx: &Ctx, img: &ImageOpts) -> CliResult<(usize, f64)> {
    Ok((ctx.pick(img.size, "size", 128)?, ctx.pick(img.spacing, "spacing", 1.0)?))
}

fn schedule(ctx: &Ctx, s: &ScheduleOpts) -> CliResult<NoiseSchedule> {
    let t = ctx.pick(s.t_max, "t_max", 1000)?;
    let b0 = ctx.pick(s.beta_start, "beta_start", 1e-4)?;
    let b1 = ctx.pick(s.beta_end, "beta_end", 0.02)?;
    build_linear_schedule(t, b0, b1).stage(ctx.stage)
}

fn norm_mode(ctx: &Ctx, m: &MaskOpts) -> CliResult<NormMode> {
    Ok(match ctx.pick_enum(m.norm, "norm_mode", NormArg::Clip)? {
        NormArg::Clip => NormMode::Clip,
        NormArg::Linear => NormMode::Linear,
    })
}

/// Sample blocks on the `grid_n` grid and return them with their
/// normalised sinogram mask.
fn sino_mask(
    ctx: &Ctx,
    m: &MaskOpts,
    grid_n: usize,
    spacing: f64,
    geom: &Arc<ProjectionGeometry>,
    seed: u64,
) -> CliResult<(MaskSet, SinogramMask)> {
    let k = ctx.pick(m.k, "k", 2)?;
    let bw = ctx.pick(m.block_w, "block_w", (grid_n / 4).max(1))?;
    let bh = ctx.pick(m.block_h, "block_h", (grid_n / 4).max(1))?;
    let attempts = ctx.pick(m.max_attempts, "max_attempts", 1000)?;
    let set = sample_mask_blocks(grid_n, k, bw, bh, seed, attempts).stage(ctx.stage)?;
    let raw = project_masks(&set, spacing, geom).stage(ctx.stage)?;
    let mask = normalize_mask(&raw, norm_mode(ctx, m)?).stage(ctx.stage)?;
    Ok((set, mask))
}

fn synthetic_rows(seed: u64, count: usize, d: &DataOpts) -> Vec<Vec<f64>> {
    let s = d.sigma0_sq.sqrt();
    (0..count as u64)
        .map(|i| {
            let mut r = rng::stream(mix(seed, DATA_STREAM), i);
            rng::normal_vec(&mut r, d.dim).iter().map(|v| d.mu0 + s * v).collect()
        })
        .collect()
}

/// A 2-D `(count, d)` array, or a 1-D vector read as a single row.
fn read_rows(ctx: &Ctx, path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let (dims, values) = io::sgm1_read_f64(path).on_file(ctx.stage, path)?;
    let d = *dims.last().unwrap_or(&0);
    match dims.len() {
        1 => Ok(vec![values]),
        2 => Ok(values.chunks(d).map(<[f64]>::to_vec).collect()),
        _ => Err(CliError::Data {
            stage: ctx.stage,
            file: Some(path.to_path_buf()),
            source: projdiff::Error::Shape(format!("expected (count, d) rows, got dims {dims:?}")),
        }),
    }
}

fn write_rows(ctx: &Ctx, path: &Path, rows: &[Vec<f64>]) -> CliResult<()> {
    let d = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.concat();
    io::sgm1_write_f64(path, &[rows.len(), d], &flat).on_file(ctx.stage, path)
}

fn load_net(ctx: &Ctx, path: Option<&Path>) -> CliResult<Mlp> {
    match path {
        Some(p) => io::load_checkpoint(p).on_file(ctx.stage, p),
        None => {
            let arr = io::decode_sgm1(BUNDLED_CHECKPOINT).stage(ctx.stage)?;
            io::decode_checkpoint(&arr, "bundled checkpoint").stage(ctx.stage)
        }
    }
}

fn parse_threshold(s: &str) -> CliResult<Threshold> {
    let bad = || usage(format!("bad threshold `{s}`: use p<percent> or a number"));
    match s.strip_prefix('p') {
        Some(p) => p.parse().map(Threshold::Percentile).map_err(|_| bad()),
        None => s.parse().map(Threshold::Absolute).map_err(|_| bad()),
    }
}

pub fn phantom(a: PhantomArgs, ctx: &Ctx) -> CliResult<()> {
    let (size, spacing) = image_params(ctx, &a.img)?;
    let kind = match a.kind {
        PhantomKind::SheppLogan => Phantom::SheppLogan,
        PhantomKind::Disk => Phantom::Disk { cx: a.cx, cy: a.cy, radius: a.radius, intensity: a.intensity },
    };
    let img = make_phantom(&kind, size, spacing).stage(ctx.stage)?;
    ctx.write_image(&ctx.output(a.out)?, &img)?;
    if let Some(p) = a.pgm {
        ctx.write_pgm(&p, size, size, img.values())?;
    }
    Ok(())
}

pub fn radon(a: RadonArgs, ctx: &Ctx) -> CliResult<()> {
    let input = ctx.input(a.input)?;
    let spacing = ctx.pick(a.spacing, "spacing", 1.0)?;
    let img = ctx.read_image(&input, spacing)?;
    let na = ctx.pick(a.angles, "n_angles", 180)?;
    let nd = ctx.pick(a.n_det, "n_det", default_n_det(img.size()))?;
    let geom = ctx.geometry(&a.geom, na, nd, spacing)?;
    let sino = radon_forward(&img, &geom).on_file(ctx.stage, &input)?;
    ctx.write_sino(&ctx.output(a.out)?, &sino)?;
    if let Some(p) = a.pgm {
        ctx.write_pgm(&p, nd, na, sino.values())?;
    }
    Ok(())
}

pub fn fbp(a: FbpArgs, ctx: &Ctx) -> CliResult<()> {
    let input = ctx.input(a.input)?;
    let (size, spacing) = image_params(ctx, &a.img)?;
    let sino = ctx.read_sino(&input, &a.geom, spacing)?;
    let window = match a.window {
        WindowArg::RamLak => FbpWindow::RamLak,
        WindowArg::Hann => FbpWindow::Hann,
    };
    let img = fbp_reconstruct(&sino, sino.geometry(), size, spacing, window).on_file(ctx.stage, &input)?;
    ctx.write_image(&ctx.output(a.out)?, &img)?;
    if let Some(p) = a.pgm {
        ctx.write_pgm(&p, size, size, img.values())?;
    }
    Ok(())
}

pub fn mlem(a: MlemArgs, ctx: &Ctx) -> CliResult<()> {
    let input = ctx.input(a.input)?;
    let (size, spacing) = image_params(ctx, &a.img)?;
    let iters = ctx.pick(a.iters, "mlem_iters", 50)?;
    let sino = ctx.read_sino(&input, &a.geom, spacing)?;
    let res = mlem_reconstruct(&sino, sino.geometry(), size, spacing, iters, None).on_file(ctx.stage, &input)?;
    ctx.write_image(&ctx.output(a.out)?, &res.image)?;
    if let Some(p) = a.pgm {
        ctx.write_pgm(&p, size, size, res.image.values())?;
    }
    if let Some(p) = a.loglik_csv {
        let rows: Vec<Vec<String>> =
            res.loglik.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), format!("{l:?}")]).collect();
        write_csv(&p, &["iter", "loglik"], &rows).on_file(ctx.stage, &p)?;
    }
    Ok(())
}

pub fn dmm_masks(a: DmmMasksArgs, ctx: &Ctx) -> CliResult<()> {
    let (size, spacing) = image_params(ctx, &a.img)?;
    let na = ctx.pick(a.angles, "n_angles", 180)?;
    let nd = ctx.pick(a.n_det, "n_det", default_n_det(size))?;
    let geom = ctx.geometry(&a.geom, na, nd, spacing)?;
    let (set, mask) = sino_mask(ctx, &a.mask, size, spacing, &geom, ctx.seed)?;
    let out = ctx.output(a.out)?;
    io::sgm1_write_f64(&out, &[nd, na], mask.values()).on_file(ctx.stage, &out)?;
    if let Some(p) = a.image_out {
        let union = set.rasterize_union(spacing).stage(ctx.stage)?;
        ctx.write_image(&p, &union)?;
    }
    if let Some(p) = a.blocks_csv {
        let rows: Vec<Vec<String>> = set
            .blocks
            .iter()
            .map(|b| vec![b.x0.to_string(), b.y0.to_string(), b.w.to_string(), b.h.to_string()])
            .collect();
        write_csv(&p, &["x0", "y0", "w", "h"], &rows).on_file(ctx.stage, &p)?;
    }
    Ok(())
}

pub fn augment(a: AugmentArgs, ctx: &Ctx) -> CliResult<()> {
    if a.count == 0 {
        return Err(usage("augment: --count must be positive"));
    }
    let input = ctx.input(a.input)?;
    let (size, spacing) = image_params(ctx, &a.img)?;
    let sino = ctx.read_sino(&input, &a.geom, spacing)?;
    let (nd, na) = sino.shape();
    let mut data = Vec::with_capacity(a.count * 3 * nd * na);
    let mut rows = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let mask_seed = mix(ctx.seed, i as u64);
        let (set, mask) = sino_mask(ctx, &a.mask, size, spacing, sino.geometry(), mask_seed)?;
        let sample = decompose_pos_neg(&sino, &mask).on_file(ctx.stage, &input)?;
        let loss = pn_consistency_loss(&sample, &mask).stage(ctx.stage)?;
        data.extend_from_slice(&compose_input(&sample).stage(ctx.stage)?.data);
        rows.push(vec![i.to_string(), mask_seed.to_string(), set.k().to_string(), format!("{loss:?}")]);
    }
    let dims = if a.count == 1 { vec![3, nd, na] } else { vec![a.count, 3, nd, na] };
    let out = ctx.output(a.out)?;
    io::sgm1_write_f64(&out, &dims, &data).on_file(ctx.stage, &out)?;
    if let Some(p) = a.loss_csv {
        write_csv(&p, &["sample", "mask_seed", "k", "pn_loss"], &rows).on_file(ctx.stage, &p)?;
    }
    Ok(())
}

pub fn tma(a: TmaArgs, ctx: &Ctx) -> CliResult<()> {
    let input = ctx.input(a.input)?;
    let (size, spacing) = image_params(ctx, &a.img)?;
    let sino = ctx.read_sino(&input, &a.geom, spacing)?;
    let iters = ctx.pick(a.mlem_iters, "mlem_iters", 20)?;
    let recon = match ctx.pick_enum(a.recon, "recon", ReconArg::Fbp)? {
        ReconArg::Fbp => Recon::Fbp(FbpWindow::RamLak),
        ReconArg::FbpHann => Recon::Fbp(FbpWindow::Hann),
        ReconArg::Mlem => Recon::Mlem { iters },
    };
    let threshold = match ctx.opt(a.threshold, "threshold")? {
        Some(s) => parse_threshold(&s)?,
        None => Threshold::Percentile(90.0),
    };
    let lower_threshold = ctx.opt(a.lower_threshold, "lower_threshold")?.map(|s| parse_threshold(&s)).transpose()?;
    let cfg = TmaConfig {
        recon,
        recon_size: ctx.pick(a.recon_size, "recon_size", 64)?,
        threshold,
        lower_threshold,
        binarize_projection: !a.soft,
    };
    let roi = match &a.roi {
        Some(p) => {
            // Any resolution; the mask spans the same extent as the object.
            let raw = ctx.read_image(p, 1.0)?;
            let n = raw.size();
            let img = ImageGrid::new(n, spacing * size as f64 / n as f64, raw.into_values()).on_file(ctx.stage, p)?;
            Some(RoiImageMask::from_nonzero(&img).on_file(ctx.stage, p)?)
        }
        None => None,
    };
    let out_t = run_tma(&sino, size, spacing, &cfg, roi).on_file(ctx.stage, &input)?;
    ctx.write_sino(&ctx.output(a.out)?, &out_t.gated)?;
    if let Some(p) = a.roi_out {
        let (nd, na) = sino.shape();
        io::sgm1_write_f64(&p, &[nd, na], out_t.roi_sino.values()).on_file(ctx.stage, &p)?;
    }
    if let Some(p) = a.recon_out {
        ctx.write_image(&p, &out_t.recon)?;
    }
    Ok(())
}

enum Den {
    Analytic(AnalyticGaussianDenoiser),
    Eps(TinyMlpDenoiser),
    Bridge(BridgeMlpDenoiser),
}

impl Den {
    fn eps(&self) -> Option<&dyn Denoiser> {
        match self {
            Den::Analytic(d) => Some(d),
            Den::Eps(d) => Some(d),
            Den::Bridge(_) => None,
        }
    }

    fn bridge(&self) -> Option<&dyn BridgeDenoiser> {
        match self {
            Den::Analytic(d) => Some(d),
            Den::Bridge(d) => Some(d),
            Den::Eps(_) => None,
        }
    }
}

pub fn diffuse(a: DiffuseArgs, ctx: &Ctx) -> CliResult<()> {
    let sched = schedule(ctx, &a.sched)?;
    let sampler = ctx.pick_enum(a.sampler, "sampler", SamplerArg::Ddim)?;
    let steps = ctx.pick(a.steps, "steps", 50)?;
    let eta = ctx.pick(a.eta, "eta", 0.0)?;
    let t_start = ctx.pick(a.t_start, "t_start", sched.t_max())?;
    let den = match a.denoiser.as_str() {
        "analytic" => Den::Analytic(
            AnalyticGaussianDenoiser::new(vec![a.data.mu0; a.data.dim], a.data.sigma0_sq, sched.clone())
                .stage(ctx.stage)?,
        ),
        s => match s.strip_prefix("mlp:") {
            Some(p) => {
                let p = PathBuf::from(p);
                let net = io::load_checkpoint(&p).on_file(ctx.stage, &p)?;
                if sampler == SamplerArg::Ddbm {
                    Den::Bridge(BridgeMlpDenoiser::from_net(net).on_file(ctx.stage, &p)?)
                } else {
                    Den::Eps(TinyMlpDenoiser::from_net(net, sched.clone()).on_file(ctx.stage, &p)?)
                }
            }
            None => return Err(usage(format!("unknown denoiser `{s}`: use analytic or mlp:<checkpoint>"))),
        },
    };
    let dim = match &den {
        Den::Analytic(_) => a.data.dim,
        Den::Eps(d) => d.dim(),
        Den::Bridge(d) => d.dim(),
    };
    let input = ctx.opt(a.input, "input")?;
    let starts: Vec<Vec<f64>> = match &input {
        Some(p) => read_rows(ctx, p)?,
        None if sampler == SamplerArg::Ddbm => {
            return Err(usage("diffuse: the bridge sampler needs terminal states via --in"))
        }
        None => (0..a.count as u64).map(|i| rng::normal_vec(&mut rng::stream(mix(ctx.seed, DATA_STREAM), i), dim)).collect(),
    };
    if let Some(row) = starts.iter().find(|r| r.len() != dim) {
        let source = projdiff::Error::Shape(format!("state of length {} for a {dim}-dimensional denoiser", row.len()));
        return Err(CliError::Data { stage: ctx.stage, file: input.clone(), source });
    }
    let mut out = Vec::with_capacity(starts.len());
    for (i, z) in starts.iter().enumerate() {
        let mut r = rng::stream(mix(ctx.seed, NOISE_STREAM), i as u64);
        let x = match sampler {
            SamplerArg::Ddpm => ddpm_sample(z, t_start, den.eps().ok_or_else(bridge_only)?, &mut r),
            SamplerArg::Ddim => {
                let eden = den.eps().ok_or_else(bridge_only)?;
                ddim_timesteps(t_start, steps).and_then(|ts| ddim_sample(z, &ts, eta, eden, &mut r))
            }
            SamplerArg::Ddbm => {
                let smin = ctx.pick(a.bridge_sigma_min, "bridge_sigma_min", 0.002)?;
                let smax = ctx.pick(a.bridge_sigma_max, "bridge_sigma_max", 1.0)?;
                let mode = match ctx.pick_enum(a.bridge_mode, "bridge_mode", BridgeModeArg::Sde)? {
                    BridgeModeArg::Sde => BridgeMode::Sde,
                    BridgeModeArg::Ode => BridgeMode::Ode,
                };
                let bden = den.bridge().ok_or_else(|| usage("noise-predictor checkpoints cannot drive the bridge"))?;
                BridgeSchedule::ve(smin, smax, 1.0)
                    .and_then(|s| Ok((bridge_time_grid(&s, steps, a.rho)?, s)))
                    .and_then(|(g, s)| ddbm_sample(z, &g, &s, bden, mode, true, &mut r))
            }
        };
        out.push(x.stage(ctx.stage)?);
    }
    write_rows(ctx, &ctx.output(a.out)?, &out)
}

fn bridge_only() -> CliError {
    usage("bridge checkpoints can only drive the ddbm sampler")
}

pub fn train_denoiser(a: TrainArgs, ctx: &Ctx) -> CliResult<()> {
    let sched = schedule(ctx, &a.sched)?;
    let data = match ctx.opt(a.input, "input")? {
        Some(p) => read_rows(ctx, &p)?,
        None => synthetic_rows(ctx.seed, a.count, &a.data),
    };
    let d = data.first().map_or(0, Vec::len);
    if d == 0 || data.iter().any(|r| r.len() != d) {
        return Err(usage("train-denoiser: training data is empty or ragged"));
    }
    let out = ctx.path(a.out, "checkpoint", "checkpoint path")?;
    let init = mix(ctx.seed, INIT_STREAM);
    let mut losses = Vec::with_capacity(a.iters);
    let net = if a.bridge {
        let smax = ctx.pick(a.bridge_sigma_max, "bridge_sigma_max", 1.0)?;
        let bs = BridgeSchedule::ve(0.002, smax, 1.0).stage(ctx.stage)?;
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = data
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let n = rng::normal_vec(&mut rng::stream(mix(ctx.seed, NOISE_STREAM), i as u64), d);
                (x.clone(), x.iter().zip(&n).map(|(x, n)| x + smax * n).collect())
            })
            .collect();
        let mut den = BridgeMlpDenoiser::new(d, init).stage(ctx.stage)?;
        for it in 0..a.iters {
            losses.push(bridge_train_step(&mut den, &pairs, &bs, mix(ctx.seed, it as u64), a.lr).stage(ctx.stage)?);
        }
        den.net().clone()
    } else {
        let mut den = TinyMlpDenoiser::new(d, sched, init).stage(ctx.stage)?;
        for it in 0..a.iters {
            losses.push(mlp_train_step(&mut den, &data, mix(ctx.seed, it as u64), a.lr).stage(ctx.stage)?);
        }
        den.net().clone()
    };
    io::save_checkpoint(&out, &net).on_file(ctx.stage, &out)?;
    if let Some(p) = a.loss_csv {
        let rows: Vec<Vec<String>> =
            losses.iter().enumerate().map(|(i, l)| vec![i.to_string(), format!("{l:?}")]).collect();
        write_csv(&p, &["iter", "loss"], &rows).on_file(ctx.stage, &p)?;
    }
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        println!("loss {first:.6} -> {last:.6}");
    }
    Ok(())
}

pub fn certify_cmd(a: CertifyArgs, ctx: &Ctx) -> CliResult<()> {
    let sched = schedule(ctx, &a.sched)?;
    let ckpt = ctx.opt(a.checkpoint, "checkpoint")?;
    let net = load_net(ctx, ckpt.as_deref())?;
    let base = match &ckpt {
        Some(p) => TinyMlpDenoiser::from_net(net, sched.clone()).on_file(ctx.stage, p)?,
        None => TinyMlpDenoiser::from_net(net, sched.clone()).stage(ctx.stage)?,
    };
    let d = base.dim();
    let n = ctx.pick(a.n, "n", 100)?;
    let data = match ctx.opt(a.input, "input")? {
        Some(p) => {
            let rows = read_rows(ctx, &p)?;
            if rows.len() != n || rows.iter().any(|r| r.len() != d) {
                let msg = format!("need {n} rows of length {d}, got {} rows", rows.len());
                return Err(CliError::Data { stage: ctx.stage, file: Some(p), source: projdiff::Error::Shape(msg) });
            }
            rows
        }
        None => synthetic_rows(ctx.seed, n, &DataOpts { dim: d, mu0: a.mu0, sigma0_sq: a.sigma0_sq }),
    };
    // Fixed (t, noise) per item, shared by every posterior draw.
    let probes: Vec<(usize, Vec<f64>, Vec<f64>)> = data
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut r = rng::stream(mix(ctx.seed, NOISE_STREAM), i as u64);
            let t = r.random_range(1..=sched.t_max());
            let eps = rng::normal_vec(&mut r, d);
            let z = forward_marginal_sample(x, t, &sched, &eps).stage(ctx.stage)?;
            Ok((t, z, eps))
        })
        .collect::<CliResult<_>>()?;
    let raw_losses = |den: &TinyMlpDenoiser| -> projdiff::Result<Vec<f64>> {
        probes
            .iter()
            .map(|(t, z, eps)| {
                let e = den.predict_eps(z, *t)?;
                Ok(e.iter().zip(eps).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / d as f64)
            })
            .collect()
    };
    let c = match ctx.opt(a.c, "c")? {
        Some(c) => c,
        None => calibrate_loss_scale(&raw_losses(&base).stage(ctx.stage)?).stage(ctx.stage)?,
    };
    let cfg = PacBayesConfig {
        n,
        delta: ctx.pick(a.delta, "delta", 0.05)?,
        sigma_p_sq: ctx.pick(a.sigma_p_sq, "sigma_p_sq", 1e-4)?,
        prior_mean: None,
        loss_scale_c: c,
        m: ctx.pick(a.m, "m", 100)?,
        seed: ctx.seed,
    };
    let eval = |theta: &[f64]| -> projdiff::Result<Vec<f64>> {
        let den = TinyMlpDenoiser::from_net(base.net().with_params(theta)?, sched.clone())?;
        raw_losses(&den)?.into_iter().map(|l| bounded_loss(l, c)).collect()
    };
    let cert = certify(&cfg, base.net().params(), &eval).stage(ctx.stage)?;
    let record = cert.to_record();
    if let Some(p) = ctx.opt(a.out, "output")? {
        ctx.write_text(&p, &record)?;
    }
    print!("{record}");
    Ok(())
}

pub fn concentration(a: ConcentrationArgs, ctx: &Ctx) -> CliResult<()> {
    let n = ctx.pick(a.n, "n", 50)?;
    let delta = ctx.pick(a.delta, "delta", 0.05)?;
    let thr = concentration_threshold(n, delta).stage(ctx.stage)?;
    let rate = concentration_simulate(a.p, n, delta, a.trials, ctx.seed).stage(ctx.stage)?;
    let header = ["p", "n", "delta", "trials", "threshold", "violation_rate"];
    let row = vec![
        format!("{:?}", a.p),
        n.to_string(),
        format!("{delta:?}"),
        a.trials.to_string(),
        format!("{thr:?}"),
        format!("{rate:?}"),
    ];
    if let Some(p) = ctx.opt(a.out, "output")? {
        write_csv(&p, &header, std::slice::from_ref(&row)).on_file(ctx.stage, &p)?;
    }
    println!("{}\n{}", header.join(","), row.join(","));
    Ok(())
}

fn metrics_row(ctx: &Ctx, r: (&str, &ImageGrid), t: (&str, &ImageGrid), peak: Peak) -> CliResult<Vec<String>> {
    let q = quality_metrics(r.1, t.1, peak).stage(ctx.stage)?;
    Ok(vec![
        r.0.to_string(),
        t.0.to_string(),
        format!("{:?}", q.psnr_db),
        format!("{:?}", q.ssim),
        format!("{:?}", q.rmse),
        format!("{:?}", q.peak_used),
    ])
}

const METRICS_HEADER: [&str; 6] = ["ref", "test", "psnr_db", "ssim", "rmse", "peak"];

pub fn metrics(a: MetricsArgs, ctx: &Ctx) -> CliResult<()> {
    let r = ctx.read_image(&a.reference, 1.0)?;
    let t = ctx.read_image(&a.test, 1.0)?;
    let peak = a.peak.map_or(Peak::RefMax, Peak::Fixed);
    let (rn, tn) = (a.reference.display().to_string(), a.test.display().to_string());
    let row = metrics_row(ctx, (&rn, &r), (&tn, &t), peak)
        .map_err(|e| match e {
            CliError::Data { stage, source, .. } => CliError::Data { stage, file: Some(a.test.clone()), source },
            e => e,
        })?;
    if let Some(p) = ctx.opt(a.out, "output")? {
        write_csv(&p, &METRICS_HEADER, std::slice::from_ref(&row)).on_file(ctx.stage, &p)?;
    }
    println!("{}\n{}", METRICS_HEADER.join(","), row.join(","));
    Ok(())
}

pub fn pipeline(a: PipelineArgs, ctx: &Ctx) -> CliResult<()> {
    let (size, spacing) = image_params(ctx, &a.img)?;
    let na = ctx.pick(a.angles, "n_angles", 180)?;
    let steps = ctx.pick(a.steps, "steps", 50)?;
    let t_start = ctx.pick(a.t_start, "t_start", 200)?;
    let sched = schedule(ctx, &a.sched)?;
    let dir = &a.out_dir;
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Data { stage: ctx.stage, file: Some(dir.clone()), source: projdiff::Error::Input(e.to_string()) })?;
    let f = |name: &str| dir.join(name);

    let phantom = make_phantom(&Phantom::SheppLogan, size, spacing).stage(ctx.stage)?;
    ctx.write_image(&f("phantom.sgm"), &phantom)?;
    ctx.write_pgm(&f("phantom.pgm"), size, size, phantom.values())?;

    let geom = ctx.geometry(&a.geom, na, default_n_det(size), spacing)?;
    let sino = radon_forward(&phantom, &geom).stage(ctx.stage)?;
    let (nd, _) = sino.shape();
    ctx.write_sino(&f("sinogram.sgm"), &sino)?;

    let (set, mask) = sino_mask(ctx, &a.mask, size, spacing, &geom, mix(ctx.seed, MASK_STREAM))?;
    let sample = decompose_pos_neg(&sino, &mask).stage(ctx.stage)?;
    let pn = pn_consistency_loss(&sample, &mask).stage(ctx.stage)?;
    let composite = compose_input(&sample).stage(ctx.stage)?;
    io::sgm1_write_f64(&f("augmented.sgm"), &[3, nd, na], &composite.data).on_file(ctx.stage, &f("augmented.sgm"))?;
    let pn_row = vec!["0".to_string(), mix(ctx.seed, MASK_STREAM).to_string(), set.k().to_string(), format!("{pn:?}")];
    write_csv(&f("pn_loss.csv"), &["sample", "mask_seed", "k", "pn_loss"], &[pn_row]).on_file(ctx.stage, &f("pn_loss.csv"))?;

    // Noise the latent to t_start and bring it back with deterministic DDIM
    // under a Gaussian prior centred on the clean latent.
    let mode = if nd % 2 == 0 && na % 2 == 0 { EncoderMode::AvgPool2 } else { EncoderMode::Identity };
    let latent = encode_latent(&composite, mode).stage(ctx.stage)?;
    let ms = latent.z.iter().map(|v| v * v).sum::<f64>() / latent.z.len() as f64;
    let den = AnalyticGaussianDenoiser::new(latent.z.clone(), 1e-2 * ms.max(1e-12), sched.clone()).stage(ctx.stage)?;
    let mut r = rng::stream(mix(ctx.seed, NOISE_STREAM), 0);
    let noise = rng::normal_vec(&mut r, latent.z.len());
    let noisy = forward_marginal_sample(&latent.z, t_start, &sched, &noise).stage(ctx.stage)?;
    let ts = ddim_timesteps(t_start, steps).stage(ctx.stage)?;
    let z = ddim_sample(&noisy, &ts, 0.0, &den, &mut r).stage(ctx.stage)?;
    let generated = decode_latent(&z, latent.shape, mode).stage(ctx.stage)?;
    io::sgm1_write_f64(&f("generated.sgm"), &generated.shape, &generated.data).on_file(ctx.stage, &f("generated.sgm"))?;

    let s_gen = sino.with_values(generated.channel(1).to_vec()).stage(ctx.stage)?;
    let rec_ref = fbp_reconstruct(&sino, &geom, size, spacing, FbpWindow::RamLak).stage(ctx.stage)?;
    let rec_gen = fbp_reconstruct(&s_gen, &geom, size, spacing, FbpWindow::RamLak).stage(ctx.stage)?;
    ctx.write_image(&f("recon_reference.sgm"), &rec_ref)?;
    ctx.write_image(&f("recon_generated.sgm"), &rec_gen)?;
    ctx.write_pgm(&f("recon_generated.pgm"), size, size, rec_gen.values())?;

    let rows = vec![
        metrics_row(ctx, ("phantom.sgm", &phantom), ("recon_reference.sgm", &rec_ref), Peak::RefMax)?,
        metrics_row(ctx, ("phantom.sgm", &phantom), ("recon_generated.sgm", &rec_gen), Peak::RefMax)?,
    ];
    write_csv(&f("metrics.csv"), &METRICS_HEADER, &rows).on_file(ctx.stage, &f("metrics.csv"))?;
    println!("{}", METRICS_HEADER.join(","));
    for row in &rows {
        println!("{}", row.join(","));
    }
    Ok(())
}
