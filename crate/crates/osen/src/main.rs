use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use osen::config::ExperimentConfig;
use osen::data::{read_pgm, write_pgm};
use osen::error::{OsenError, Result};
use osen::{emit_report, run_experiment};
use osen_core::layers::Layer;
use osen_core::models::{build, decode_params, infer, param_count, ModelInput, ModelSpec, Variant};
use osen_core::recon::{
    admm_tv, admm_weighted_tv, grad, gradient_support, measure_image, piecewise_constant_phantom, semi_random_mask, weights_from_prob,
    zero_filling, FourierSamplingMask, TvConfig,
};
use osen_core::rng;
use osen_core::sparse::psnr_nmse;
use osen_core::training::{grad_check, LossSpec, Target};
use osen_core::Tensor;
use rand::Rng;

#[derive(Parser)]
#[command(name = "osen", version, about = "Operational support estimator networks: experiments and tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Osen1,
    Osen2,
}

impl VariantArg {
    fn variant(self) -> Variant {
        match self {
            VariantArg::Osen1 => Variant::Osen1,
            VariantArg::Osen2 => Variant::Osen2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file and write its report.
    Run {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Finite-difference check of every analytic gradient of a small model.
    ///
    /// OSEN2 contains a max-pool, which is only piecewise differentiable:
    /// a perturbation that moves an argmax gives a numeric derivative from
    /// the wrong piece, so wide OSEN2 checks can report a few outliers.
    Gradcheck {
        #[arg(long, value_enum, default_value = "osen1")]
        variant: VariantArg,
        #[arg(long, default_value_t = 3)]
        q: usize,
        #[arg(long, default_value_t = 8)]
        side: usize,
        /// Check a compressive model with this many measurements instead.
        #[arg(long)]
        measurements: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2e-2)]
        h: f64,
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
    },
    /// Print the trainable parameter count of a model.
    Paramcount {
        #[arg(long, value_enum, default_value = "osen1")]
        variant: VariantArg,
        #[arg(long, default_value_t = 3)]
        q: usize,
        /// Measurement rate; with --ncl sets m = round(mr * side^2).
        #[arg(long, default_value_t = 0.25)]
        mr: f64,
        #[arg(long)]
        ncl: bool,
        #[arg(long, default_value_t = 28)]
        side: usize,
    },
    /// Reconstruct an image from its Fourier samples with zero filling,
    /// TV and weighted TV.
    Recon {
        /// Sampling mask file ("n_side m seed" header, then "i j" lines).
        #[arg(long)]
        mask: PathBuf,
        /// Trained two-channel gradient-support model.
        #[arg(long, conflicts_with = "oracle")]
        weights: Option<PathBuf>,
        /// Weight with the true gradient support instead of a model.
        #[arg(long)]
        oracle: bool,
        /// Grayscale PGM to sample; a random phantom is used otherwise.
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        phantom_seed: u64,
        #[arg(long, default_value_t = 0.2)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.01)]
        lambda: f64,
        /// Write the weighted (or plain) TV reconstruction here as PGM.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a semi-random Fourier sampling mask.
    Mask {
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 0.25)]
        mr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { config, output } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(o) = output {
                cfg.output = o;
            }
            let report = run_experiment(&cfg)?;
            emit_report(&report, &cfg.output)?;
            print!("{}", report.summary_csv()?);
            eprintln!("wrote {} runs to {}", report.runs.len(), cfg.output.display());
            Ok(())
        }
        Command::Gradcheck { variant, q, side, measurements, seed, h, tol } => gradcheck(variant.variant(), q, side, measurements, seed, h, tol),
        Command::Paramcount { variant, q, mr, ncl, side } => {
            let n = side * side;
            let input = if ncl {
                if !(mr > 0.0 && mr < 1.0) {
                    return Err(OsenError::Config("mr must lie in (0, 1)".into()));
                }
                let m = ((mr * n as f64).round() as usize).max(1);
                ModelInput::Measurements { m, height: side, width: side }
            } else {
                ModelInput::Image { channels: 1, height: side, width: side }
            };
            let spec = ModelSpec::new(variant.variant(), q, input);
            spec.validate().map_err(|e| OsenError::Config(e.to_string()))?;
            println!("{}", param_count(&spec));
            Ok(())
        }
        Command::Recon { mask, weights, oracle, image, phantom_seed, epsilon, lambda, out } => {
            recon(&mask, weights.as_deref(), oracle, image.as_deref(), phantom_seed, epsilon, lambda, out.as_deref())
        }
        Command::Mask { side, mr, seed, out } => {
            if !(mr > 0.0 && mr < 1.0) {
                return Err(OsenError::Config("mr must lie in (0, 1)".into()));
            }
            let m = (mr * (side * side) as f64).round() as usize;
            let mask = semi_random_mask(side, m, seed).map_err(|e| OsenError::Config(e.to_string()))?;
            std::fs::write(&out, mask.to_text()).map_err(|e| OsenError::Io { path: out.clone(), source: e })?;
            println!("{} frequencies ({} in the central ball) -> {}", mask.m(), mask.ball_count(), out.display());
            Ok(())
        }
    }
}

fn gradcheck(variant: Variant, q: usize, side: usize, measurements: Option<usize>, seed: u64, h: f64, tol: f64) -> Result<()> {
    let input = match measurements {
        Some(m) => ModelInput::Measurements { m, height: side, width: side },
        None => ModelInput::Image { channels: 1, height: side, width: side },
    };
    let spec = ModelSpec::new(variant, q, input);
    spec.validate().map_err(|e| OsenError::Config(e.to_string()))?;
    let mut g = rng::stream(seed, rng::purpose::MISC, 0);
    let denoiser = measurements.map(|m| Tensor::from_fn(&[side * side, m], |_| g.gen_range(-0.5..0.5)));
    let mut params = build(&spec, seed, denoiser.as_ref())?;
    // Random shifts away from the integer grid, where bilinear sampling is not differentiable.
    // Per layer: 3 tensors for operational layers, 2 for the Self-GOP front end, none otherwise.
    let kinds: Vec<u8> = params
        .network
        .layers()
        .iter()
        .map(|l| match l {
            Layer::Operational(_) | Layer::TransposedOperational(_) => 3,
            Layer::SelfGop { .. } => 2,
            _ => 0,
        })
        .collect();
    {
        let mut tensors = params.network.tensors_mut();
        let mut k = 0;
        for &kind in &kinds {
            if kind == 3 {
                tensors[k + 2].data_mut().iter_mut().for_each(|v| *v = g.gen_range(0.1..0.9) * if g.gen::<bool>() { 1.0 } else { -1.0 });
                tensors[k + 1].data_mut().iter_mut().for_each(|v| *v = g.gen_range(-0.1..0.1));
                k += 3;
            } else {
                k += kind as usize;
            }
        }
    }
    let x = match measurements {
        Some(m) => Tensor::from_fn(&[m], |_| g.gen_range(-1.0..1.0)),
        None => Tensor::from_fn(&[1, side, side], |_| g.gen_range(-1.0..1.0)),
    };
    let target = Target::mask(Tensor::from_fn(&[1, side, side], |_| (g.gen::<f64>() < 0.3) as u8 as f64));
    let report = grad_check(&params.network, &x, &target, &LossSpec::mse(), h, tol)?;
    println!("checked {} parameters, max relative error {:.3e} (tolerance {:.0e})", report.checked, report.max_rel_error, tol);
    if let Some(w) = &report.worst {
        println!("worst: layer {} {}[{}] analytic {:.6e} numeric {:.6e}", w.layer, w.tensor, w.index, w.analytic, w.numeric);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(OsenError::Core(osen_core::Error::InvalidArgument(format!("{} gradients exceed the tolerance", report.violations.len()))))
    }
}

fn split2(t: &Tensor) -> Result<(Tensor, Tensor)> {
    let (_, h, w) = t.dims3()?;
    let n = h * w;
    Ok((Tensor::new(&[h, w], t.data()[..n].to_vec())?, Tensor::new(&[h, w], t.data()[n..].to_vec())?))
}

#[allow(clippy::too_many_arguments)]
fn recon(
    mask_path: &std::path::Path,
    weights: Option<&std::path::Path>,
    oracle: bool,
    image: Option<&std::path::Path>,
    phantom_seed: u64,
    epsilon: f64,
    lambda: f64,
    out: Option<&std::path::Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(mask_path).map_err(|e| OsenError::Io { path: mask_path.into(), source: e })?;
    let mask = FourierSamplingMask::from_text(&text).map_err(|e| OsenError::Data { path: mask_path.into(), msg: e.to_string() })?;
    let n = mask.n_side();
    let s = match image {
        Some(p) => read_pgm(p)?,
        None => piecewise_constant_phantom(n, phantom_seed)?,
    };
    if s.shape() != [n, n] {
        return Err(OsenError::Config(format!("image is {:?} but the mask is for {}x{}", s.shape(), n, n)));
    }
    let tv = TvConfig { lambda, ..TvConfig::default() };
    let y = measure_image(&s, &mask)?;
    let zf = zero_filling(&y, &mask)?;
    let plain = admm_tv(&y, &mask, &tv)?;
    let peak = s.max_abs().max(f64::MIN_POSITIVE);
    let report = |name: &str, est: &Tensor, extra: String| -> Result<()> {
        let (psnr, nmse) = psnr_nmse(&s, est, peak)?;
        println!("{:<12} psnr {:>8.3} dB  nmse {:.4e}{}", name, psnr, nmse, extra);
        Ok(())
    };
    report("zero-filling", &zf, String::new())?;
    report("tv", &plain.image, format!("  {} iterations{}", plain.iterations, if plain.converged { "" } else { " (max_it reached)" }))?;
    let probs = if oracle {
        let (mx, my) = gradient_support(&s, 1e-9)?;
        Some((mx, my))
    } else if let Some(w) = weights {
        let bytes = std::fs::read(w).map_err(|e| OsenError::Io { path: w.into(), source: e })?;
        let model = decode_params(&bytes)?;
        let expect = ModelInput::Image { channels: 2, height: n, width: n };
        if model.spec.input != expect {
            return Err(OsenError::Config(format!("model input {:?} does not match the two-channel {}x{} gradient maps", model.spec.input, n, n)));
        }
        let (gx, gy) = grad(&zf)?;
        let x = Tensor::new(&[2, n, n], gx.data().iter().chain(gy.data()).copied().collect())?;
        Some(split2(&infer(&model, &x)?.probs)?)
    } else {
        None
    };
    let mut best = plain.image;
    if let Some((px, py)) = probs {
        let weighted = admm_weighted_tv(&y, &mask, &weights_from_prob(&px, &py, epsilon)?, &tv)?;
        report(
            "weighted-tv",
            &weighted.image,
            format!("  {} iterations{}", weighted.iterations, if weighted.converged { "" } else { " (max_it reached)" }),
        )?;
        best = weighted.image;
    }
    if let Some(p) = out {
        write_pgm(p, &best)?;
    }
    Ok(())
}
