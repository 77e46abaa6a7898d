//! Experiment drivers: wire a parsed config into the core training loop or
//! sampler and write the artifacts (metric CSVs, parameter checkpoints,
//! summaries, snapshots).

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use flowgen_core::field::DiscriminatorField;
use flowgen_core::generators::forward_set;
use flowgen_core::metrics::{
    energy_distance, fit_gaussian_moments, mode_coverage, w2_gaussian, MetricSeries,
};
use flowgen_core::scores::TargetDensity;
use flowgen_core::train::{sample_noise, train, TrainConfig, TrainTrace};
use flowgen_core::{
    Generator, GeneratorModel, Matrix, ParticleSet, SeededPrng, Vector,
};

use crate::artifacts::{atomic_write, particles_csv, write_checkpoint, CsvBuilder};
use crate::config::{
    build_generator, build_kernel, build_schedule, build_target, loss_kind, ExperimentConfig,
    ExperimentKind, QuiverView,
};
use crate::pgm::{pgm_load, shape_sample};

/// Stream tag for the evaluation RNG, so metric sampling never perturbs the
/// training stream.
const EVAL_STREAM: u64 = 0xE7A1;

/// Artifacts common to the training experiments.
#[derive(Debug)]
pub struct TrainingOutcome {
    pub trace_path: PathBuf,
    pub checkpoint_path: PathBuf,
    pub summary_path: PathBuf,
    /// `(iteration, metric...)` rows including the pre-training row 0.
    pub metric_rows: Vec<(usize, Vec<f64>)>,
    pub final_metrics: Vec<f64>,
}

impl TrainingOutcome {
    /// Series of a single metric column.
    pub fn metric_series(&self, column: usize) -> Vec<(usize, f64)> {
        self.metric_rows
            .iter()
            .map(|(it, m)| (*it, m[column]))
            .collect()
    }
}

fn summary_value(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(v.to_string())
    }
}

fn gaussian_moments_of(target: &TargetDensity) -> Result<(Vector, Matrix)> {
    match target {
        TargetDensity::Gaussian(g) => Ok((g.mean().clone(), g.cov().clone())),
        TargetDensity::Gmm(_) => bail!("expected a gaussian target"),
    }
}

/// Learns a Gaussian target with the configured loss and logs the Gaussian
/// Wasserstein-2 distance (moment fit against the analytic target) at the
/// metric stride.
pub fn run_gaussian_experiment(cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    if cfg.experiment != ExperimentKind::Gaussian {
        bail!("config kind is {:?}, expected gaussian", cfg.experiment);
    }
    cfg.validate()?;
    let target = build_target(cfg.target.as_ref().expect("validated"))?;
    let (target_mean, target_cov) = gaussian_moments_of(&target)?;
    let train_params = cfg.train.as_ref().expect("validated");
    let eval_samples = train_params.eval_samples;

    let mut rng = SeededPrng::new(cfg.seed);
    let mut gen = build_generator(cfg.generator.as_ref().expect("validated"), &mut rng)?;
    let mut eval_rng = rng.split(EVAL_STREAM);

    let w2_metric = |gen: &GeneratorModel, eval_rng: &mut SeededPrng| -> f64 {
        let z = sample_noise(eval_rng, gen.input_dim(), eval_samples);
        let xs = forward_set(gen, &z);
        match fit_gaussian_moments(&xs) {
            Ok(m) => w2_gaussian(&m.mean, &m.cov, &target_mean, &target_cov)
                .unwrap_or(f64::NAN),
            Err(_) => f64::NAN,
        }
    };

    let initial_w2 = w2_metric(&gen, &mut eval_rng);
    let trace = run_training(cfg, &mut gen, &target, &mut rng, |gen| {
        vec![w2_metric(gen, &mut eval_rng)]
    })?;

    let mut metric_rows = vec![(0usize, vec![initial_w2])];
    let mut csv = CsvBuilder::new(&["iteration", "loss", "w2"]);
    csv.push_row(0, &[f64::NAN, initial_w2]);
    for row in &trace.rows {
        csv.push_row(row.iteration, &[row.loss, row.metrics[0]]);
        metric_rows.push((row.iteration, row.metrics.clone()));
    }
    let final_w2 = metric_rows.last().map(|(_, m)| m[0]).unwrap_or(initial_w2);

    let outcome = write_training_artifacts(
        cfg,
        "gaussian",
        csv.finish(),
        &gen,
        &trace,
        json!({
            "experiment": "gaussian",
            "seed": cfg.seed,
            "iterations": train_params.iterations,
            "initial_w2": summary_value(initial_w2),
            "final_w2": summary_value(final_w2),
        }),
        metric_rows,
        vec![final_w2],
    )?;
    Ok(outcome)
}

/// Learns the mixture target and logs per-mode coverage plus the energy
/// distance between generated and data batches.
pub fn run_gmm_experiment(cfg: &ExperimentConfig) -> Result<TrainingOutcome> {
    if cfg.experiment != ExperimentKind::Gmm {
        bail!("config kind is {:?}, expected gmm", cfg.experiment);
    }
    cfg.validate()?;
    let target = build_target(cfg.target.as_ref().expect("validated"))?;
    let gmm = match &target {
        TargetDensity::Gmm(g) => g.clone(),
        TargetDensity::Gaussian(_) => bail!("gmm experiment requires a gmm target"),
    };
    let train_params = cfg.train.as_ref().expect("validated").clone();
    let modes = gmm.components().len();

    let mut rng = SeededPrng::new(cfg.seed);
    let mut gen = build_generator(cfg.generator.as_ref().expect("validated"), &mut rng)?;
    let mut eval_rng = rng.split(EVAL_STREAM);

    let eval_metric = |gen: &GeneratorModel, eval_rng: &mut SeededPrng| -> Vec<f64> {
        let gen_samples = if train_params.sanity_bypass_generator {
            // Harness self-check: report data as if the generator made it.
            target.sample_set(eval_rng, train_params.eval_samples)
        } else {
            let z = sample_noise(eval_rng, gen.input_dim(), train_params.eval_samples);
            forward_set(gen, &z)
        };
        let data_samples = target.sample_set(eval_rng, train_params.eval_samples);
        let mut m = mode_coverage(&gmm, &gen_samples, train_params.radius_multiplier)
            .unwrap_or_else(|_| vec![f64::NAN; modes]);
        m.push(energy_distance(&gen_samples, &data_samples).unwrap_or(f64::NAN));
        m
    };

    let initial = eval_metric(&gen, &mut eval_rng);
    let trace = run_training(cfg, &mut gen, &target, &mut rng, |gen| {
        eval_metric(gen, &mut eval_rng)
    })?;

    let mut header = vec!["iteration".to_string(), "loss".to_string()];
    for i in 0..modes {
        header.push(format!("coverage_{i}"));
    }
    header.push("energy".to_string());
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut csv = CsvBuilder::new(&header_refs);
    let mut first_row = vec![f64::NAN];
    first_row.extend_from_slice(&initial);
    csv.push_row(0, &first_row);
    let mut metric_rows = vec![(0usize, initial)];
    for row in &trace.rows {
        let mut vals = vec![row.loss];
        vals.extend_from_slice(&row.metrics);
        csv.push_row(row.iteration, &vals);
        metric_rows.push((row.iteration, row.metrics.clone()));
    }
    let final_metrics = metric_rows
        .last()
        .map(|(_, m)| m.clone())
        .expect("row 0 present");

    write_training_artifacts(
        cfg,
        "gmm",
        csv.finish(),
        &gen,
        &trace,
        json!({
            "experiment": "gmm",
            "seed": cfg.seed,
            "iterations": train_params.iterations,
            "final_coverage": final_metrics[..modes]
                .iter()
                .map(|v| summary_value(*v))
                .collect::<Vec<_>>(),
            "final_energy": summary_value(final_metrics[modes]),
        }),
        metric_rows,
        final_metrics,
    )
}

fn run_training(
    cfg: &ExperimentConfig,
    gen: &mut GeneratorModel,
    target: &TargetDensity,
    rng: &mut SeededPrng,
    mut metric_fn: impl FnMut(&GeneratorModel) -> Vec<f64>,
) -> Result<TrainTrace> {
    let train_params = cfg.train.as_ref().expect("validated");
    let loss = loss_kind(cfg.loss.expect("validated"));
    let kernel = match &cfg.kernel {
        Some(k) => Some(build_kernel(k, target.dim())?),
        None => None,
    };
    let config = TrainConfig {
        loss,
        iterations: train_params.iterations,
        batch_size: train_params.batch_size,
        data_batch_size: train_params.data_batch_size.unwrap_or(train_params.batch_size),
        kernel,
        adam: crate::config::build_adam(train_params),
        metric_stride: train_params.metric_stride,
    };
    train(gen, target, &config, rng, |_, g| metric_fn(g))
        .map_err(|e| anyhow!("training failed: {e}"))
}

#[allow(clippy::too_many_arguments)]
fn write_training_artifacts(
    cfg: &ExperimentConfig,
    _label: &str,
    trace_csv: String,
    gen: &GeneratorModel,
    trace: &TrainTrace,
    summary: serde_json::Value,
    metric_rows: Vec<(usize, Vec<f64>)>,
    final_metrics: Vec<f64>,
) -> Result<TrainingOutcome> {
    let trace_path = cfg.out_dir.join("trace.csv");
    atomic_write(&trace_path, trace_csv.as_bytes())?;
    let checkpoint_path = cfg.out_dir.join("params.fgp");
    write_checkpoint(
        &checkpoint_path,
        &gen.param_layout(),
        trace.final_params.as_slice(),
    )?;
    let summary_path = cfg.out_dir.join("summary.json");
    atomic_write(
        &summary_path,
        (serde_json::to_string_pretty(&summary)? + "\n").as_bytes(),
    )?;
    Ok(TrainingOutcome {
        trace_path,
        checkpoint_path,
        summary_path,
        metric_rows,
        final_metrics,
    })
}

/// Artifacts of a Langevin run (shape morphing or density sampling).
#[derive(Debug)]
pub struct MorphOutcome {
    pub energy_path: PathBuf,
    pub deltas_path: PathBuf,
    pub summary_path: PathBuf,
    /// `(step, energy)` including step 0.
    pub energy_series: Vec<(usize, f64)>,
    pub iterate_deltas: Vec<f64>,
    pub final_particles: ParticleSet,
}

impl MorphOutcome {
    pub fn initial_energy(&self) -> f64 {
        self.energy_series.first().map(|&(_, e)| e).expect("step 0")
    }

    pub fn final_energy(&self) -> f64 {
        self.energy_series.last().map(|&(_, e)| e).expect("step 0")
    }

    pub fn energy_at_or_before(&self, step: usize) -> f64 {
        self.energy_series
            .iter()
            .rev()
            .find(|&&(s, _)| s <= step)
            .map(|&(_, e)| e)
            .expect("step 0 always present")
    }
}

/// Runs the discriminator-guided Langevin sampler. `morph` configs draw the
/// initial particles from the source mask and the data pool from the target
/// mask; `langevin` configs start from the unit Gaussian and pool from the
/// analytic target.
pub fn run_morph_experiment(cfg: &ExperimentConfig) -> Result<MorphOutcome> {
    if !matches!(cfg.experiment, ExperimentKind::Morph | ExperimentKind::Langevin) {
        bail!("config kind is {:?}, expected morph or langevin", cfg.experiment);
    }
    cfg.validate()?;
    let lv = cfg.langevin.as_ref().expect("validated");
    let mut rng = SeededPrng::new(cfg.seed);

    let (init, pool, dim) = match cfg.experiment {
        ExperimentKind::Morph => {
            let morph = cfg.morph.as_ref().expect("validated");
            let source = pgm_load(&morph.source_mask)
                .with_context(|| format!("source mask {}", morph.source_mask.display()))?;
            let target_mask = pgm_load(&morph.target_mask)
                .with_context(|| format!("target mask {}", morph.target_mask.display()))?;
            let init = shape_sample(&source, lv.particles, &mut rng)?;
            let pool = shape_sample(&target_mask, lv.pool_size, &mut rng)?;
            (init, pool, 2)
        }
        _ => {
            let target = build_target(cfg.target.as_ref().expect("validated"))?;
            let dim = target.dim();
            let std = flowgen_core::GaussianSpec::standard(dim);
            let init = std.sample_set(&mut rng, lv.particles);
            let pool = target.sample_set(&mut rng, lv.pool_size);
            (init, pool, dim)
        }
    };

    let kernel = build_kernel(cfg.kernel.as_ref().expect("validated"), dim)?;
    let schedule = build_schedule(lv)?;

    let mut energy = MetricSeries::new("energy");
    let initial_energy = energy_distance(&init, &pool).map_err(|e| anyhow!("energy: {e}"))?;
    // Step 0 is recorded at iteration index 0; MetricSeries requires strictly
    // increasing indices afterwards.
    let mut energy_series = vec![(0usize, initial_energy)];

    let snapshot_dir = cfg.out_dir.join("snapshots");
    let mut snapshot_err: Option<anyhow::Error> = None;
    if lv.snapshot_stride > 0 {
        if let Err(e) = atomic_write(
            &snapshot_dir.join("step_000000.csv"),
            particles_csv(&init).as_bytes(),
        ) {
            snapshot_err = Some(e);
        }
    }

    let stride = lv.metric_stride.max(1);
    let steps = lv.steps;
    let outcome = flowgen_core::langevin::langevin_run(
        &init,
        &pool,
        &kernel,
        lv.field_scale,
        &schedule,
        lv.data_batch_size,
        &mut rng,
        |step, particles| {
            if step % stride == 0 || step == steps {
                if let Ok(e) = energy_distance(particles, &pool) {
                    energy_series.push((step, e));
                }
            }
            if lv.snapshot_stride > 0 && (step % lv.snapshot_stride == 0 || step == steps) {
                let path = snapshot_dir.join(format!("step_{step:06}.csv"));
                if let Err(e) = atomic_write(&path, particles_csv(particles).as_bytes()) {
                    snapshot_err.get_or_insert(e);
                }
            }
        },
    )
    .map_err(|e| anyhow!("langevin run failed: {e}"))?;
    if let Some(e) = snapshot_err {
        return Err(e.context("writing snapshots"));
    }

    for &(step, value) in &energy_series {
        if step > 0 {
            energy
                .push(step, value)
                .map_err(|e| anyhow!("energy series: {e}"))?;
        }
    }

    let mut energy_csv = CsvBuilder::new(&["step", "energy"]);
    for &(step, value) in &energy_series {
        energy_csv.push_row(step, &[value]);
    }
    let energy_path = cfg.out_dir.join("energy.csv");
    atomic_write(&energy_path, energy_csv.finish().as_bytes())?;

    let mut deltas_csv = CsvBuilder::new(&["step", "iterate_delta"]);
    for (i, d) in outcome.iterate_deltas.iter().enumerate() {
        deltas_csv.push_row(i + 1, &[*d]);
    }
    let deltas_path = cfg.out_dir.join("iterate_deltas.csv");
    atomic_write(&deltas_path, deltas_csv.finish().as_bytes())?;

    let final_energy = energy_series.last().map(|&(_, e)| e).unwrap_or(initial_energy);
    let summary_path = cfg.out_dir.join("summary.json");
    atomic_write(
        &summary_path,
        (serde_json::to_string_pretty(&json!({
            "experiment": cfg.experiment.as_str(),
            "seed": cfg.seed,
            "steps": lv.steps,
            "particles": lv.particles,
            "initial_energy": summary_value(initial_energy),
            "final_energy": summary_value(final_energy),
        }))? + "\n")
            .as_bytes(),
    )?;

    Ok(MorphOutcome {
        energy_path,
        deltas_path,
        summary_path,
        energy_series,
        iterate_deltas: outcome.iterate_deltas,
        final_particles: outcome.particles,
    })
}

/// One exported grid node.
#[derive(Clone, Copy, Debug)]
pub struct QuiverNode {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    pub field: f64,
}

#[derive(Debug)]
pub struct QuiverOutcome {
    pub path: PathBuf,
    pub resolution: usize,
    pub spacing: f64,
    /// Row-major over y (outer) then x (inner).
    pub nodes: Vec<QuiverNode>,
}

impl QuiverOutcome {
    pub fn node(&self, ix: usize, iy: usize) -> QuiverNode {
        self.nodes[iy * self.resolution + ix]
    }
}

/// Evaluates the selected vector field on a regular 2-D grid and writes one
/// CSV row per node. The score view exports the target score field with the
/// log-density as the scalar column; the flow view exports the kernel flow
/// field `(p_data - p_gen) * grad kernel` (sample estimate, generator mass
/// standard normal) with its potential as the scalar column.
pub fn quiver_export(cfg: &ExperimentConfig) -> Result<QuiverOutcome> {
    if cfg.experiment != ExperimentKind::Quiver {
        bail!("config kind is {:?}, expected quiver", cfg.experiment);
    }
    cfg.validate()?;
    let q = cfg.quiver.as_ref().expect("validated");
    let target = build_target(cfg.target.as_ref().expect("validated"))?;
    let mut rng = SeededPrng::new(cfg.seed);

    let field = match q.view {
        QuiverView::Flow => {
            let kernel = build_kernel(cfg.kernel.as_ref().expect("validated"), 2)?;
            let data = target.sample_set(&mut rng, q.samples);
            let gen = flowgen_core::GaussianSpec::standard(2).sample_set(&mut rng, q.samples);
            Some(DiscriminatorField::new(data, gen, kernel, 1.0).map_err(|e| anyhow!("{e}"))?)
        }
        QuiverView::Score => None,
    };

    let res = q.resolution;
    let spacing = (q.extent[1] - q.extent[0]) / (res - 1) as f64;
    let mut nodes = Vec::with_capacity(res * res);
    let mut csv = CsvBuilder::new(&["x", "y", "u", "v", "field"]);
    for iy in 0..res {
        let y = q.extent[0] + iy as f64 * spacing;
        for ix in 0..res {
            let x = q.extent[0] + ix as f64 * spacing;
            let p = [x, y];
            let node = match &field {
                None => {
                    let s = target.score(&p).map_err(|e| anyhow!("{e}"))?;
                    let lp = target.log_density(&p).map_err(|e| anyhow!("{e}"))?;
                    QuiverNode {
                        x,
                        y,
                        u: s[0],
                        v: s[1],
                        field: lp,
                    }
                }
                Some(disc) => {
                    // Kernel flow field: the negated discriminator gradient
                    // (data pulls, generator mass pushes).
                    let g = disc.grad(&p).map_err(|e| anyhow!("{e}"))?;
                    let potential = -disc.eval(&p).map_err(|e| anyhow!("{e}"))?;
                    QuiverNode {
                        x,
                        y,
                        u: -g[0],
                        v: -g[1],
                        field: potential,
                    }
                }
            };
            csv.push_float_row(&[node.x, node.y, node.u, node.v, node.field]);
            nodes.push(node);
        }
    }

    let path = cfg.out_dir.join("quiver.csv");
    atomic_write(&path, csv.finish().as_bytes())?;
    Ok(QuiverOutcome {
        path,
        resolution: res,
        spacing,
        nodes,
    })
}

/// Dispatches a validated config to its driver (used by the binary).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<()> {
    match cfg.experiment {
        ExperimentKind::Gaussian => {
            let out = run_gaussian_experiment(cfg)?;
            println!(
                "gaussian run complete: final W2 = {} ({})",
                out.final_metrics[0],
                out.trace_path.display()
            );
        }
        ExperimentKind::Gmm => {
            let out = run_gmm_experiment(cfg)?;
            let k = out.final_metrics.len() - 1;
            println!(
                "gmm run complete: coverage = {:?}, energy = {} ({})",
                &out.final_metrics[..k],
                out.final_metrics[k],
                out.trace_path.display()
            );
        }
        ExperimentKind::Morph | ExperimentKind::Langevin => {
            let out = run_morph_experiment(cfg)?;
            println!(
                "sampler run complete: energy {} -> {} ({})",
                out.initial_energy(),
                out.final_energy(),
                out.energy_path.display()
            );
        }
        ExperimentKind::Quiver => {
            let out = quiver_export(cfg)?;
            println!("quiver grid written to {}", out.path.display());
        }
    }
    Ok(())
}

/// Used by `validate`: checks the config and, for morph runs, that the masks
/// load and have sampleable support.
pub fn validate_only(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.experiment == ExperimentKind::Morph {
        let morph = cfg.morph.as_ref().expect("validated");
        let mut rng = SeededPrng::new(cfg.seed);
        let source = pgm_load(&morph.source_mask)?;
        let target = pgm_load(&morph.target_mask)?;
        shape_sample(&source, 1, &mut rng)?;
        shape_sample(&target, 1, &mut rng)?;
    }
    if let Some(t) = &cfg.target {
        build_target(t)?;
    }
    Ok(())
}
