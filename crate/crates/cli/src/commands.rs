//! The five subcommands: synth, reduce, bound, eval, gradcheck.
//!
//! Every command is deterministic given its flags: randomness only enters
//! through explicit seeds, and model files round-trip bit for bit.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use serde::Serialize;
use ssmshrink_core::bound::{
    accumulated_gains, default_omega, evaluate_bound, layer_gain_gtilde, measured_output_error,
};
use ssmshrink_core::dssm::{build_reduced_dssm, forward, synth_random_dssm};
use ssmshrink_core::reduce::{
    finite_difference_check_mutated, init_mode_dominance, init_random_stable,
    reduce_gradient_descent, FdMutation, FdReport, ReductionConfig, ReductionReport, Termination,
};
use ssmshrink_core::{Horizon, LqoSystem};

use crate::{model_io, signal_io, CliError};

#[derive(Args)]
pub struct SynthArgs {
    /// Number of stacked layers.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub layers: u64,
    /// State dimension of every layer.
    #[arg(long = "state-dim", value_parser = clap::value_parser!(u64).range(1..))]
    pub state_dim: u64,
    /// Feature width shared by every layer's inputs and outputs.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub width: u64,
    /// Number of quadratic factor matrices per layer.
    #[arg(long = "quad-rank", value_parser = clap::value_parser!(u64).range(1..))]
    pub quad_rank: u64,
    /// RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// LayerNorm epsilon.
    #[arg(long = "ln-eps", default_value_t = 1e-5)]
    pub ln_eps: f64,
    /// Where to write the model file.
    #[arg(short = 'o', long = "output")]
    pub output: PathBuf,
}

pub fn synth(a: SynthArgs) -> Result<ExitCode, CliError> {
    let model = synth_random_dssm(
        a.layers as usize,
        a.state_dim as usize,
        a.width as usize,
        a.quad_rank as usize,
        a.seed,
        a.ln_eps,
    )?;
    model_io::save(&a.output, &model)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum InitMode {
    /// Keep the most input-output-active eigenmodes of each layer.
    ModeDominance,
    /// Fresh random stable draw per layer.
    Random,
}

#[derive(Args)]
pub struct ReduceArgs {
    /// Model file to reduce.
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated reduced state dimensions, one per layer.
    #[arg(long, required = true, value_delimiter = ',',
          value_parser = clap::value_parser!(u64).range(1..))]
    pub ranks: Vec<u64>,
    /// Time horizon L.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// How the initial reduced models are built.
    #[arg(long, value_enum, default_value_t = InitMode::ModeDominance)]
    pub init: InitMode,
    /// Outer iteration cap.
    #[arg(long = "max-iters", default_value_t = 20)]
    pub max_iters: u64,
    /// Armijo sufficient-decrease constant, in (0, 1).
    #[arg(long, default_value_t = 1e-4)]
    pub c1: f64,
    /// Backtracking shrink factor, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    /// Initial step sizes for the Lambda, B, C, U blocks.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0, 1.0, 1.0])]
    pub eta: Vec<f64>,
    /// Stop once the aggregate gradient norm falls below this.
    #[arg(long = "grad-tol", default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// RNG seed (random init only; layer i draws from seed + i).
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Where to write the reduced model file.
    #[arg(short = 'o', long = "output")]
    pub output: PathBuf,
    /// Where to write the per-iteration CSV report.
    #[arg(long)]
    pub report: PathBuf,
}

pub fn reduce(a: ReduceArgs) -> Result<ExitCode, CliError> {
    let full = model_io::load(&a.model)?;
    let l = Horizon::new(a.horizon as usize)?;
    let fulls: Vec<LqoSystem> = full.layers().iter().map(|ly| ly.system().clone()).collect();
    if a.ranks.len() != fulls.len() {
        return Err(CliError::Usage(format!(
            "got {} ranks for a {}-layer model",
            a.ranks.len(),
            fulls.len()
        )));
    }
    if a.eta.len() != 4 {
        return Err(CliError::Usage(format!(
            "--eta needs exactly four comma-separated values (Lambda, B, C, U), got {}",
            a.eta.len()
        )));
    }
    let ranks: Vec<usize> = a.ranks.iter().map(|&r| r as usize).collect();

    // Objective weights: each layer's error is amplified by the product of
    // conservative downstream gains, taken at unit input bound.
    let omega = default_omega(&full)?;
    let mut gtildes = Vec::with_capacity(fulls.len());
    for sys in &fulls {
        gtildes.push(layer_gain_gtilde(sys, l, 1.0)?);
    }
    let gains = accumulated_gains(&gtildes, omega);

    let mut init_roms = Vec::with_capacity(fulls.len());
    for (i, sys) in fulls.iter().enumerate() {
        let rom = match a.init {
            InitMode::ModeDominance => init_mode_dominance(sys, ranks[i], l),
            InitMode::Random => init_random_stable(
                ranks[i],
                sys.input_dim(),
                sys.output_dim(),
                sys.quad_rank(),
                a.seed + i as u64,
            ),
        }
        .map_err(|e| CliError::from_core(&format!("layer {i} init"), e))?;
        init_roms.push(rom);
    }

    let mut config = ReductionConfig::new(ranks, l);
    config.eta_init = [a.eta[0], a.eta[1], a.eta[2], a.eta[3]];
    config.c1 = a.c1;
    config.rho = a.rho;
    config.k_max = a.max_iters as usize;
    config.grad_tol = a.grad_tol;

    let (roms, report) = reduce_gradient_descent(&fulls, &init_roms, &gains, &config)?;
    let reduced = build_reduced_dssm(&full, &roms)?;
    model_io::save(&a.output, &reduced)?;
    write_report(&a.report, &report, config.eta_init[2])?;
    if report.termination == Termination::Stalled {
        eprintln!("warning: line search stalled; wrote the last accepted iterate");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn write_report(
    path: &Path,
    report: &ReductionReport,
    eta_c_init: f64,
) -> Result<(), CliError> {
    let mut text = String::from("iter,objective,grad_norm,backtracks,eta_scale\n");
    for row in &report.rows {
        let scale = row.step_scales[2] / eta_c_init;
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            row.iter, row.objective, row.grad_norm, row.backtracks, scale
        ));
    }
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("writing {}: {e}", path.display())))
}

#[derive(Args)]
pub struct BoundArgs {
    /// Full model file.
    #[arg(long)]
    pub full: PathBuf,
    /// Reduced model file.
    #[arg(long)]
    pub reduced: PathBuf,
    /// Input signal CSV, one sample per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Skip one header line in the input CSV.
    #[arg(long, default_value_t = false)]
    pub header: bool,
    /// Time horizon L.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// Input-norm constant; defaults to the measured max layer-input norm.
    #[arg(long)]
    pub b: Option<f64>,
    /// LayerNorm Lipschitz constant; defaults to the analytic upper bound.
    #[arg(long)]
    pub omega: Option<f64>,
}

#[derive(Serialize)]
struct BoundJson {
    omega: f64,
    b: f64,
    bound_value: f64,
    measured_error: f64,
    per_layer: Vec<LayerBoundJson>,
}

#[derive(Serialize)]
struct LayerBoundJson {
    h2l_error: f64,
    gain_layer: f64,
    gain_accumulated: f64,
    u_norm: f64,
    uhat_norm: f64,
}

pub fn bound(a: BoundArgs) -> Result<ExitCode, CliError> {
    let full = model_io::load(&a.full)?;
    let reduced = model_io::load(&a.reduced)?;
    let s_in = signal_io::load(&a.input, a.header)?;
    let l = Horizon::new(a.horizon as usize)?;
    let report = evaluate_bound(&full, &reduced, &s_in, l, a.b, a.omega)?;
    if let Some(b_flag) = a.b {
        let measured = report
            .per_layer
            .iter()
            .map(|p| p.u_norm.max(p.uhat_norm))
            .fold(0.0_f64, f64::max);
        if b_flag < measured {
            eprintln!(
                "warning: --b {b_flag} is below the measured max layer-input norm \
                 {measured}; the reported bound is not certified"
            );
        }
    }
    let json = BoundJson {
        omega: report.omega,
        b: report.b,
        bound_value: report.bound_value,
        measured_error: report.measured_error,
        per_layer: report
            .per_layer
            .iter()
            .map(|p| LayerBoundJson {
                h2l_error: p.h2l_error,
                gain_layer: p.gain_layer,
                gain_accumulated: p.gain_accumulated,
                u_norm: p.u_norm,
                uhat_norm: p.uhat_norm,
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&json)
        .map_err(|e| CliError::Usage(format!("serializing report: {e}")))?;
    crate::emit(&format!("{text}\n"));
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct EvalArgs {
    /// Full model file.
    #[arg(long)]
    pub full: PathBuf,
    /// Reduced model file.
    #[arg(long)]
    pub reduced: PathBuf,
    /// Input signal CSV, one sample per row.
    #[arg(long)]
    pub input: PathBuf,
    /// Skip one header line in the input CSV.
    #[arg(long, default_value_t = false)]
    pub header: bool,
    /// Time horizon L.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
}

pub fn eval(a: EvalArgs) -> Result<ExitCode, CliError> {
    let full = model_io::load(&a.full)?;
    let reduced = model_io::load(&a.reduced)?;
    let s_in = signal_io::load(&a.input, a.header)?;
    let l = Horizon::new(a.horizon as usize)?;
    let e_xi = measured_output_error(&full, &reduced, &s_in, l)?;
    let trace = forward(&full, &s_in, l)?;
    let rtrace = forward(&reduced, &s_in, l)?;
    let mut out = format!("e_xi,{e_xi}\nlayer,u_norm,uhat_norm\n");
    for i in 0..full.depth() {
        out.push_str(&format!(
            "{},{},{}\n",
            i + 1,
            trace.u_signals[i].norm_l2(),
            rtrace.u_signals[i].norm_l2()
        ));
    }
    crate::emit(&out);
    Ok(ExitCode::SUCCESS)
}

#[derive(Args)]
pub struct GradcheckArgs {
    /// Model file supplying the full layers.
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated reduced state dimensions, one per layer.
    #[arg(long, required = true, value_delimiter = ',',
          value_parser = clap::value_parser!(u64).range(1..))]
    pub ranks: Vec<u64>,
    /// Time horizon L.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: u64,
    /// Central-difference step, in [1e-8, 1e-4].
    #[arg(long = "fd-step", default_value_t = 1e-6)]
    pub fd_step: f64,
    /// Seed for the random reduced models the check differentiates at.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Largest acceptable per-block relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub threshold: f64,
    /// Negate the analytic C gradient (validator self-test; must fail).
    #[arg(long = "flip-grad-c-sign", hide = true, default_value_t = false)]
    pub flip_grad_c_sign: bool,
}

pub fn gradcheck(a: GradcheckArgs) -> Result<ExitCode, CliError> {
    let full = model_io::load(&a.model)?;
    let l = Horizon::new(a.horizon as usize)?;
    let fulls: Vec<LqoSystem> = full.layers().iter().map(|ly| ly.system().clone()).collect();
    if a.ranks.len() != fulls.len() {
        return Err(CliError::Usage(format!(
            "got {} ranks for a {}-layer model",
            a.ranks.len(),
            fulls.len()
        )));
    }
    if !(a.threshold > 0.0 && a.threshold.is_finite()) {
        return Err(CliError::Usage(format!(
            "--threshold must be a positive finite real, got {}",
            a.threshold
        )));
    }
    let mut roms = Vec::with_capacity(fulls.len());
    for (i, sys) in fulls.iter().enumerate() {
        roms.push(
            init_random_stable(
                a.ranks[i] as usize,
                sys.input_dim(),
                sys.output_dim(),
                sys.quad_rank(),
                a.seed + i as u64,
            )
            .map_err(|e| CliError::from_core(&format!("layer {i} init"), e))?,
        );
    }
    let mutation = if a.flip_grad_c_sign {
        FdMutation::FlipGradCSign
    } else {
        FdMutation::None
    };
    let reports = run_layer_checks(&fulls, &roms, l, a.fd_step, mutation)?;
    let mut out = String::from("layer,d_lambda,d_b,d_c,d_u,max\n");
    let mut worst = 0.0_f64;
    for (i, rep) in reports.iter().enumerate() {
        let m = rep.max_rel_err();
        worst = worst.max(m);
        out.push_str(&format!(
            "{},{:.3e},{:.3e},{:.3e},{:.3e},{:.3e}\n",
            i + 1,
            rep.d_lambda,
            rep.d_b,
            rep.d_c,
            rep.d_u,
            m
        ));
    }
    let code = if worst <= a.threshold {
        out.push_str(&format!(
            "gradcheck ok: max relative error {worst:.3e} <= {:.3e}\n",
            a.threshold
        ));
        ExitCode::SUCCESS
    } else {
        out.push_str(&format!(
            "gradcheck FAILED: max relative error {worst:.3e} > {:.3e}\n",
            a.threshold
        ));
        ExitCode::from(1)
    };
    crate::emit(&out);
    Ok(code)
}

/// Worker count: SSMSHRINK_THREADS if set, else the machine's parallelism,
/// never more than one worker per layer.
fn thread_cap(layers: usize) -> usize {
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    std::env::var("SSMSHRINK_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or(available)
        .min(layers)
        .max(1)
}

/// Run the per-layer finite-difference checks, layers striped over a
/// scoped thread pool. The layers are independent, so results are stitched
/// back in layer order.
fn run_layer_checks(
    fulls: &[LqoSystem],
    roms: &[LqoSystem],
    l: Horizon,
    step: f64,
    mutation: FdMutation,
) -> Result<Vec<FdReport>, CliError> {
    let workers = thread_cap(fulls.len());
    let slots: Vec<Result<FdReport, ssmshrink_core::Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    let mut out = Vec::new();
                    let mut i = w;
                    while i < fulls.len() {
                        out.push((
                            i,
                            finite_difference_check_mutated(
                                &fulls[i..i + 1],
                                &roms[i..i + 1],
                                l,
                                step,
                                mutation,
                            ),
                        ));
                        i += workers;
                    }
                    out
                })
            })
            .collect();
        let mut slots: Vec<Option<Result<FdReport, ssmshrink_core::Error>>> =
            fulls.iter().map(|_| None).collect();
        for h in handles {
            for (i, res) in h.join().expect("gradcheck worker panicked") {
                slots[i] = Some(res);
            }
        }
        slots
            .into_iter()
            .map(|slot| slot.expect("every layer is assigned to exactly one worker"))
            .collect()
    });
    let mut reports = Vec::with_capacity(slots.len());
    for (i, res) in slots.into_iter().enumerate() {
        reports.push(res.map_err(|e| CliError::from_core(&format!("layer {i}"), e))?);
    }
    Ok(reports)
}
