//! Seeded parallel sweeps over `(N, repetition)` cells.
//!
//! Every cell draws `X_0` from its own substream `(seed, N, rep, stage)`,
//! evolves it and reports per-time metric contributions. Cells run on a
//! dedicated thread pool; all aggregation happens afterwards in `(N, rep)`
//! order, so outputs do not depend on the worker count.

use std::path::{Path, PathBuf};

use chaoslab_core::dynamics::{evolve_micro, Method, Normalization, SolverSettings, Trajectory};
use chaoslab_core::metrics::{
    product_l1, run_marginal, BinSpec, BlBracket, BlEvaluator, BlOptions, EmpiricalMeasure, Histogram, MarginalOptions,
};
use chaoslab_core::rng::{sample_configuration, substream, substream_seed};
use chaoslab_core::stats::{ci95_half_width, mean};
use chaoslab_core::Configuration;
use rayon::prelude::*;

use crate::error::{HarnessError, Result};
use crate::formats::{decode_trajectory, encode_trajectory};
use crate::kernels::LabKernel;
use crate::plan::{ExperimentPlan, MethodSpec, MetricKind, NormalizationSpec};
use crate::records::{emit_outputs, ensure_writable, write_file, MetricRecord};
use crate::reference::{build_reference, initial_density, Reference, STAGE_BL, STAGE_INIT, STAGE_MARGINAL};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub workers: usize,
    /// Overrides the plan's output directory. Nothing is written if neither is set.
    pub out_dir: Option<PathBuf>,
    /// Reuse cell trajectories already stored under `out_dir/cells`.
    pub resume: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out_dir: None,
            resume: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    /// Sorted by metric, then `(N, t)`.
    pub records: Vec<MetricRecord>,
    pub files: Vec<PathBuf>,
    pub computed_cells: usize,
    pub reused_cells: usize,
    /// Picard residuals of the reference solve, if one was needed.
    pub reference_residuals: Vec<f64>,
}

/// Per-cell contributions, one entry per plan time.
struct CellResult {
    bl: Vec<BlBracket>,
    h1: Vec<Histogram>,
    h1_pair: Vec<Histogram>,
    h2: Vec<Histogram>,
    reused: bool,
}

/// Shared per-run state handed to every cell.
struct Context<'a> {
    plan: &'a ExperimentPlan,
    plan_hash: String,
    kernel: LabKernel,
    settings: SolverSettings,
    bl: Vec<BlEvaluator>,
    spec1: Option<BinSpec>,
    spec_pair: Option<(BinSpec, BinSpec)>,
    cells_dir: Option<PathBuf>,
    resume: bool,
}

pub fn run_plan(plan: &ExperimentPlan, opts: &RunOptions) -> Result<RunOutput> {
    plan.validate()?;
    if opts.workers == 0 {
        return Err(HarnessError::Plan("workers must be at least 1".into()));
    }
    let out_dir = opts.out_dir.clone().or_else(|| plan.out_dir.clone());
    if let Some(dir) = &out_dir {
        ensure_writable(dir)?;
    }
    match plan.space_dim {
        1 => run_dim::<1>(plan, opts, out_dir.as_deref()),
        3 => run_dim::<3>(plan, opts, out_dir.as_deref()),
        d => Err(HarnessError::Plan(format!("unsupported space_dim {d}"))),
    }
}

fn run_dim<const D: usize>(plan: &ExperimentPlan, opts: &RunOptions, out_dir: Option<&Path>) -> Result<RunOutput> {
    let mut out = RunOutput {
        records: Vec::new(),
        files: Vec::new(),
        computed_cells: 0,
        reused_cells: 0,
        reference_residuals: Vec::new(),
    };
    if plan.metrics.is_empty() {
        if let Some(dir) = out_dir {
            out.files = emit_outputs(&[], plan, dir)?;
        }
        return Ok(out);
    }
    let kernel = LabKernel::build::<D>(&plan.kernel)?;
    let wants = |m: MetricKind| plan.metrics.contains(&m);
    let wants_bl = wants(MetricKind::DblLower) || wants(MetricKind::DblUpper);
    let wants_h1 = wants(MetricKind::L1Marginal1) || wants(MetricKind::L1Marginal1Excess);
    let wants_h2 = wants(MetricKind::L1Chaos2);

    let reference = if plan.metrics.iter().any(|m| m.needs_reference()) {
        Some(build_reference::<D>(plan, &kernel)?)
    } else {
        None
    };
    if let Some(r) = &reference {
        out.reference_residuals = r.residuals.clone();
    }
    let bl = match (&reference, wants_bl) {
        (Some(r), true) => r
            .slices
            .iter()
            .enumerate()
            .map(|(i, f)| {
                let options = BlOptions {
                    seed: substream_seed(plan.seed, &[STAGE_BL, i as u64]),
                    ..BlOptions::default()
                };
                BlEvaluator::new(f, options)
            })
            .collect::<chaoslab_core::Result<Vec<_>>>()?,
        _ => Vec::new(),
    };
    let h = &plan.histograms;
    let spec1 = wants_h1
        .then(|| BinSpec::with_width(2 * D, -h.half_width, h.half_width, h.width))
        .transpose()?;
    let spec_pair = if wants_h2 {
        let one = BinSpec::with_width(2 * D, -h.pair_half_width, h.pair_half_width, h.pair_width)?;
        let two = one.power(2)?;
        Some((one, two))
    } else {
        None
    };
    let cells_dir = out_dir.map(|d| d.join("cells"));
    if let Some(dir) = &cells_dir {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    let settings = SolverSettings::new(
        plan.dt,
        match plan.method {
            MethodSpec::Psi => Method::Psi,
            MethodSpec::Rk4 => Method::Rk4,
        },
    )
    .with_normalization(match plan.normalization {
        NormalizationSpec::Binomial => Normalization::Binomial,
        NormalizationSpec::SelfInclusive => Normalization::SelfInclusive,
    })
    .with_output_times(plan.times.clone());
    let ctx = Context {
        plan,
        plan_hash: plan.hash(),
        kernel,
        settings,
        bl,
        spec1,
        spec_pair,
        cells_dir,
        resume: opts.resume,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| HarnessError::Numeric(format!("thread pool: {e}")))?;
    for &n in &plan.n_grid {
        let results: Vec<Result<CellResult>> =
            pool.install(|| (0..plan.repetitions).into_par_iter().map(|rep| compute_cell::<D>(&ctx, n, rep)).collect());
        let cells = results.into_iter().collect::<Result<Vec<_>>>()?;
        for c in &cells {
            if c.reused {
                out.reused_cells += 1;
            } else {
                out.computed_cells += 1;
            }
        }
        aggregate(&ctx, reference.as_ref(), n, &cells, &mut out.records)?;
    }
    out.records
        .sort_by(|a, b| a.metric.cmp(&b.metric).then(a.n.cmp(&b.n)).then(a.t.total_cmp(&b.t)));
    if let Some(dir) = out_dir {
        out.files = emit_outputs(&out.records, plan, dir)?;
    }
    Ok(out)
}

/// The initial configuration of cell `(n, rep)`.
pub fn cell_initial_state<const D: usize>(plan: &ExperimentPlan, n: usize, rep: usize) -> Configuration<D> {
    let mut rng = substream(plan.seed, &[n as u64, rep as u64, STAGE_INIT]);
    sample_configuration::<D>(&initial_density(plan), n, &mut rng)
}

fn cell_path(dir: &Path, n: usize, rep: usize) -> PathBuf {
    dir.join(format!("n{n}-r{rep}.traj"))
}

fn load_cell<const D: usize>(ctx: &Context<'_>, path: &Path, n: usize) -> Option<Trajectory<D>> {
    let bytes = std::fs::read(path).ok()?;
    let (header, traj) = decode_trajectory::<D>(&bytes).ok()?;
    let expected_len = ctx.plan.times.len() + 1;
    (header.plan_hash == ctx.plan_hash && header.particles == n && traj.states.len() == expected_len).then_some(traj)
}

fn compute_cell<const D: usize>(ctx: &Context<'_>, n: usize, rep: usize) -> Result<CellResult> {
    let plan = ctx.plan;
    let cell_err = |t: Option<f64>| move |source: chaoslab_core::Error| HarnessError::Cell { n, rep, t, source };
    let path = ctx.cells_dir.as_ref().map(|d| cell_path(d, n, rep));
    let stored = match (&path, ctx.resume) {
        (Some(p), true) => load_cell::<D>(ctx, p, n),
        _ => None,
    };
    let reused = stored.is_some();
    let traj = match stored {
        Some(t) => t,
        None => {
            let x0 = cell_initial_state::<D>(plan, n, rep);
            let traj = evolve_micro(&x0, &ctx.kernel, plan.t_max(), &ctx.settings).map_err(|e| {
                let t = match &e {
                    chaoslab_core::Error::NonFiniteState { last_valid_time } => Some(*last_valid_time),
                    _ => None,
                };
                cell_err(t)(e)
            })?;
            if let Some(p) = &path {
                write_file(p, &encode_trajectory(&traj, 2, &ctx.plan_hash))?;
            }
            traj
        }
    };

    let mopts = MarginalOptions {
        cap: plan.histograms.cap,
        seed: substream_seed(plan.seed, &[n as u64, STAGE_MARGINAL]),
    };
    let mut res = CellResult {
        bl: Vec::new(),
        h1: Vec::new(),
        h1_pair: Vec::new(),
        h2: Vec::new(),
        reused,
    };
    // states[0] is the initial configuration
    for (i, (&t, x)) in plan.times.iter().zip(&traj.states[1..]).enumerate() {
        let err = cell_err(Some(t));
        if let Some(ev) = ctx.bl.get(i) {
            let mu = EmpiricalMeasure::from_configuration(x).map_err(err.clone())?;
            res.bl.push(ev.bracket(&mu).map_err(err.clone())?);
        }
        let run_index = rep as u64 * plan.times.len() as u64 + i as u64;
        if let Some(spec) = &ctx.spec1 {
            res.h1.push(run_marginal(x, 1, spec, &mopts, run_index).map_err(err.clone())?);
        }
        if let Some((one, two)) = &ctx.spec_pair {
            res.h1_pair.push(run_marginal(x, 1, one, &mopts, run_index).map_err(err.clone())?);
            res.h2.push(run_marginal(x, 2, two, &mopts, run_index).map_err(err)?);
        }
    }
    Ok(res)
}

fn pooled(spec: &BinSpec, parts: impl Iterator<Item = Result<Histogram>>) -> Result<Histogram> {
    let mut h = Histogram::new(spec.clone());
    for p in parts {
        h.merge(&p?)?;
    }
    Ok(h)
}

fn aggregate(
    ctx: &Context<'_>,
    reference: Option<&Reference>,
    n: usize,
    cells: &[CellResult],
    out: &mut Vec<MetricRecord>,
) -> Result<()> {
    let plan = ctx.plan;
    let reps = cells.len();
    let mut push = |metric: MetricKind, t: f64, value: f64, ci: f64| -> Result<()> {
        if !value.is_finite() || !ci.is_finite() {
            return Err(HarnessError::Numeric(format!(
                "{} is not finite for N={n}, t={t} (value {value}, ci {ci})",
                metric.name()
            )));
        }
        out.push(MetricRecord {
            metric: metric.name().to_string(),
            n,
            t,
            repetitions: reps,
            value,
            ci_half_width: ci,
            seed: plan.seed,
            plan_hash: ctx.plan_hash.clone(),
        });
        Ok(())
    };
    for (i, &t) in plan.times.iter().enumerate() {
        for &metric in &plan.metrics {
            match metric {
                MetricKind::DblLower | MetricKind::DblUpper => {
                    let v: Vec<f64> = cells
                        .iter()
                        .map(|c| if metric == MetricKind::DblLower { c.bl[i].lower } else { c.bl[i].upper })
                        .collect();
                    push(metric, t, mean(&v), ci95_half_width(&v))?;
                }
                MetricKind::L1Marginal1 | MetricKind::L1Marginal1Excess => {
                    let spec = ctx.spec1.as_ref().expect("one-particle spec");
                    let grid = reference
                        .and_then(|r| r.grid(i))
                        .ok_or_else(|| HarnessError::Plan("l1 metrics need a grid reference".into()))?;
                    let exact = Histogram::from_grid(spec.clone(), grid)?;
                    let emp = pooled(spec, cells.iter().map(|c| Ok(c.h1[i].clone())))?;
                    let value = emp.l1(&exact)?;
                    let floor = exact.multinomial_floor((reps * n) as u64);
                    let value = if metric == MetricKind::L1Marginal1 { value } else { value - floor };
                    push(metric, t, value, floor)?;
                }
                MetricKind::L1Chaos2 => {
                    let (one, two) = ctx.spec_pair.as_ref().expect("pair specs");
                    let h1 = pooled(one, cells.iter().map(|c| Ok(c.h1_pair[i].clone())))?;
                    let h2 = pooled(two, cells.iter().map(|c| Ok(c.h2[i].clone())))?;
                    let value = product_l1(&h2, &h1, &h1)?;
                    let floor = h2.multinomial_floor((reps * (n / 2)) as u64);
                    push(metric, t, value, floor)?;
                }
            }
        }
    }
    Ok(())
}
