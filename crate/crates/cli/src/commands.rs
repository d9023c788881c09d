//! The subcommands. Each takes a validated config and an output directory
//! and returns a small summary for the caller to print or assert on.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use addnet::data::{corruption_suite, make_dataset, split, write_manifest, Augmentor, Dataset};
use addnet::metrics::{
    dilemma_summary, evaluate_suite, sweep_fixed_sigma, CoverageProbe, CoverageReport, DilemmaSummary, ErrorTable,
    MetricsReport, SweepConfig, SweepResult,
};
use addnet::net::{Checkpoint, DiffusionMode, NetworkParams};
use addnet::numkit::RngStream;
use addnet::pde::{modulus_probe, solve_te_fd, Diffusion, GridField, GridSpec, ModulusStats, TerminalCondition, VelocityField};
use addnet::train::{fit, write_epoch_csv, InferenceConfig, TrainConfig, Trainer, Variant};

use crate::config::{Resolved, RunConfig};
use crate::output::OutDir;
use crate::{CliError, Result};

/// Train/test split shared by every subcommand that touches data.
pub fn datasets(cfg: &RunConfig, res: &Resolved) -> Result<(Dataset, Dataset)> {
    let data = make_dataset(res.dataset, cfg.data.n, cfg.data.noise, cfg.seed)?;
    Ok(split(&data, cfg.data.train_fraction, cfg.seed)?)
}

fn augmentor(res: &Resolved, variant: Variant) -> Result<Option<Augmentor>> {
    if variant.uses_augmentation() {
        Ok(Some(Augmentor::new(res.augment.clone())?))
    } else {
        Ok(None)
    }
}

fn write_config(cfg: &RunConfig, out: &OutDir) -> Result<()> {
    out.write_bytes("config.toml", cfg.to_toml().as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TeVariant {
    pub label: String,
    /// `None` for the spatially varying coefficient.
    pub sigma: Option<f64>,
    pub field: GridField,
    pub modulus: ModulusStats,
}

/// Solves the transport equation once per diffusion variant and probes each
/// solution's modulus of continuity with the same probe pairs.
pub fn te_demo(cfg: &RunConfig, out: &OutDir) -> Result<Vec<TeVariant>> {
    let te = &cfg.te;
    let grid = GridSpec::square(te.half, te.n)?;
    let velocity = match te.velocity.as_str() {
        "rotation" => VelocityField::Rotation {
            center: [0.0, 0.0],
            rate: te.rate,
        },
        _ => VelocityField::Constant(te.direction.clone()),
    };
    let terminal = match te.terminal.as_str() {
        "two_class" => TerminalCondition::TwoClass {
            amplitude: te.amplitude,
            frequency: te.frequency,
        },
        _ => TerminalCondition::GaussianBump {
            center: te.bump_center.clone(),
            width: te.bump_width,
            amplitude: 1.0,
        },
    };
    let mut variants: Vec<(String, Option<f64>, Diffusion)> = te
        .sigmas
        .iter()
        .map(|&s| (format!("sigma_{s}"), Some(s), Diffusion::Constant(s)))
        .collect();
    if te.adaptive {
        variants.push((
            "adaptive".into(),
            None,
            Diffusion::boundary_aware(te.amplitude, te.frequency, te.adaptive_lo, te.adaptive_hi, te.adaptive_width),
        ));
    }
    write_config(cfg, out)?;
    let probe_rng = RngStream::new(cfg.seed).derive("modulus");
    let mut results = Vec::with_capacity(variants.len());
    for (label, sigma, diffusion) in variants {
        let sol = solve_te_fd(&velocity, &diffusion, &terminal, &grid, None)?;
        log::info!("{label}: {} steps of {:.3e}", sol.n_steps, sol.dt);
        let modulus = modulus_probe(&sol.field, te.delta, te.pairs, &mut probe_rng.clone())?;
        out.write_with(&format!("field_{label}.txt"), |w| Ok(sol.field.write_text(w)?))?;
        results.push(TeVariant {
            label,
            sigma,
            field: sol.field,
            modulus,
        });
    }
    out.write_with("modulus.csv", |w| {
        writeln!(w, "variant,sigma,delta,sup,mean")?;
        for r in &results {
            let sigma = r.sigma.map(|s| s.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", r.label, sigma, te.delta, r.modulus.sup, r.modulus.mean)?;
        }
        Ok(())
    })?;
    Ok(results)
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub final_train_acc: Option<f64>,
    pub trail: Vec<PathBuf>,
}

/// Trains per the config; writes the final checkpoint, the epoch log, the
/// two data splits and, with `checkpoint_every`, a checkpoint trail that
/// starts at the initial parameters.
pub fn train(cfg: &RunConfig, res: &Resolved, out: &OutDir) -> Result<TrainSummary> {
    let (tr, te) = datasets(cfg, res)?;
    let aug = augmentor(res, res.train.variant)?;
    write_config(cfg, out)?;
    out.write_with("data_train.csv", |w| Ok(tr.write_csv(w)?))?;
    out.write_with("data_test.csv", |w| Ok(te.write_csv(w)?))?;

    let every = cfg.train.checkpoint_every;
    let mut trail = Vec::new();
    if every > 0 {
        let init = Trainer::new(res.spec, res.train.clone(), aug.clone())?;
        trail.push(out.write_bytes(&trail_name(0), &init.checkpoint().to_bytes())?);
    }
    let mut write_err = None;
    let mut observer = |epoch: usize, t: &Trainer| -> addnet::Result<()> {
        if every > 0 && (epoch + 1) % every == 0 {
            match out.write_bytes(&trail_name(epoch + 1), &t.checkpoint().to_bytes()) {
                Ok(p) => trail.push(p),
                Err(e) => {
                    write_err = Some(e);
                    return Err(addnet::Error::InvalidArgument("checkpoint trail write failed".into()));
                }
            }
        }
        Ok(())
    };
    let eval = cfg.train.track_eval.then(|| (&te, res.ensembles[0]));
    let fitted = fit(res.spec, res.train.clone(), &tr, aug, eval, Some(&mut observer));
    if let Some(e) = write_err {
        return Err(e);
    }
    let fitted = fitted?;
    out.write_with("metrics.csv", |w| Ok(write_epoch_csv(&fitted.log, res.spec.n_blocks, w)?))?;
    let checkpoint = out.write_bytes("checkpoint.bin", &fitted.checkpoint().to_bytes())?;
    Ok(TrainSummary {
        checkpoint,
        final_train_acc: fitted.log.last().map(|l| l.train_acc),
        trail,
    })
}

fn trail_name(epoch: usize) -> String {
    format!("trail/epoch_{epoch:04}.bin")
}

fn meta_variant(ck: &Checkpoint) -> Option<String> {
    ck.meta
        .lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == "variant")
        .map(|(_, v)| v.trim().to_string())
}

/// Loads a checkpoint and checks it against the configured network spec
/// and, when recorded, the configured variant.
pub fn load_checked(path: &Path, res: &Resolved, variant: Variant) -> Result<NetworkParams> {
    let ck = Checkpoint::load(path)?;
    ck.expect_spec(&res.spec)?;
    if let Some(v) = meta_variant(&ck) {
        if v != variant.to_string() {
            return Err(CliError::config(
                "train.variant",
                format!("checkpoint {} was trained as `{v}`, config says `{variant}`", path.display()),
            ));
        }
    }
    Ok(ck.params()?)
}

#[derive(Debug, Clone)]
pub struct EvalRow {
    pub ensemble: usize,
    pub clean_accuracy: f64,
    pub table: ErrorTable,
    /// `None` without corruptions.
    pub report: Option<MetricsReport>,
}

/// Clean and corrupted evaluation of a checkpoint for every configured
/// ensemble size, normalized by an ERM baseline.
pub fn eval(cfg: &RunConfig, res: &Resolved, out: &OutDir, checkpoint: &Path) -> Result<Vec<EvalRow>> {
    let variant = res.train.variant;
    let params = load_checked(checkpoint, res, variant)?;
    let baseline_path = (!cfg.eval.baseline.is_empty()).then(|| PathBuf::from(&cfg.eval.baseline));
    let baseline_params = match &baseline_path {
        Some(p) => Some(load_checked(p, res, Variant::Erm)?),
        None => None,
    };
    let (tr, te) = datasets(cfg, res)?;
    let suite = corruption_suite(&res.corruptions, &te, cfg.seed)?;
    write_config(cfg, out)?;
    out.write_with("corruptions.txt", |w| Ok(write_manifest(&res.corruptions, w)?))?;

    let baseline = if res.corruptions.is_empty() {
        None
    } else {
        let p = match baseline_params {
            Some(p) => p,
            None => {
                log::info!("training the ERM baseline");
                let config = TrainConfig {
                    variant: Variant::Erm,
                    ..res.train.clone()
                };
                fit(res.spec, config, &tr, None, None, None)?.params
            }
        };
        let inf = InferenceConfig { ensemble: 1, seed: cfg.seed };
        Some(evaluate_suite(&res.spec, &p, DiffusionMode::Off, &inf, &te, &suite)?)
    };

    let mut rows = Vec::with_capacity(res.ensembles.len());
    for inf in &res.ensembles {
        let (clean, table) = evaluate_suite(&res.spec, &params, variant.inference_mode(), inf, &te, &suite)?;
        let report = match &baseline {
            Some((b_clean, b_table)) => Some(MetricsReport::new(table.clone(), 1.0 - clean, b_table, 1.0 - b_clean)?),
            None => None,
        };
        rows.push(EvalRow {
            ensemble: inf.ensemble,
            clean_accuracy: clean,
            table,
            report,
        });
    }

    out.write_with("table.csv", |w| {
        writeln!(w, "model,ensemble,kind,severity,error")?;
        let mut emit = |model: &str, e: usize, t: &ErrorTable| -> Result<()> {
            for (c, k) in t.kinds.iter().enumerate() {
                for s in 1..=t.severities {
                    writeln!(w, "{model},{e},{k},{s},{}", t.get(c, s)?)?;
                }
            }
            Ok(())
        };
        for r in &rows {
            emit("model", r.ensemble, &r.table)?;
        }
        if let Some((_, t)) = &baseline {
            emit("baseline", 1, t)?;
        }
        Ok(())
    })?;
    out.write_with("summary.csv", |w| {
        writeln!(w, "ensemble,clean_accuracy,natural_error,accuracy,mce,rmce,excluded")?;
        for r in &rows {
            match &r.report {
                Some(m) => {
                    let mut excluded = m.mce.excluded.clone();
                    for k in &m.rmce.excluded {
                        if !excluded.contains(k) {
                            excluded.push(k.clone());
                        }
                    }
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{}",
                        r.ensemble,
                        r.clean_accuracy,
                        m.natural_error,
                        m.accuracy,
                        m.mce.value,
                        m.rmce.value,
                        excluded.join("+")
                    )?
                }
                None => writeln!(w, "{},{},{},,,,", r.ensemble, r.clean_accuracy, 1.0 - r.clean_accuracy)?,
            }
        }
        Ok(())
    })?;
    Ok(rows)
}

fn heatmap_csv(w: &mut dyn Write, columns: &[String], rows: &[(String, Vec<f64>)]) -> Result<()> {
    writeln!(w, "variant,{}", columns.join(","))?;
    for (label, row) in rows {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(w, "{label},{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub runs: Vec<SweepResult>,
    pub dilemma: DilemmaSummary,
    pub holds: bool,
}

/// Fixed-scale ladder plus the adaptive column (fair mode), once per seed;
/// writes per-seed heatmaps, the seed-averaged heatmap and the per-kind
/// winners. With `assert_dilemma` a missing dilemma is an error after the
/// artifacts are written.
pub fn sweep(cfg: &RunConfig, res: &Resolved, out: &OutDir) -> Result<SweepSummary> {
    if res.augment.is_empty() {
        return Err(CliError::config("train.augment", "the adaptive sweep column needs an augmentation menu"));
    }
    if res.corruptions.is_empty() {
        return Err(CliError::config("eval.corruptions", "the sweep needs at least one corruption kind"));
    }
    let ensemble = res.ensembles.iter().map(|i| i.ensemble).max().unwrap_or(1);
    write_config(cfg, out)?;
    let mut runs = Vec::with_capacity(cfg.sweep.seeds);
    for seed in cfg.seed..cfg.seed + cfg.sweep.seeds as u64 {
        let seeded = RunConfig { seed, ..cfg.clone() };
        let (tr, te) = datasets(&seeded, res)?;
        let sc = SweepConfig::fixed_ladder(
            res.spec,
            TrainConfig { seed, ..res.train.clone() },
            &cfg.sweep.sigmas,
            res.augment.clone(),
            res.corruptions.clone(),
            InferenceConfig { ensemble, seed },
        );
        let r = sweep_fixed_sigma(&sc, &tr, &te)?;
        let rows: Vec<(String, Vec<f64>)> =
            r.variants.iter().map(|v| v.label.clone()).zip(r.heatmap()?).collect();
        out.write_with(&format!("heatmap_seed{seed}.csv"), |w| heatmap_csv(w, &r.columns(), &rows))?;
        runs.push(r);
    }
    let n = runs.len() as f64;
    let mut mean: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, v) in runs[0].variants.iter().enumerate() {
        let mut acc = vec![0.0; runs[0].columns().len()];
        for r in &runs {
            for (a, x) in acc.iter_mut().zip(&r.heatmap()?[i]) {
                *a += x / n;
            }
        }
        mean.push((v.label.clone(), acc));
    }
    out.write_with("heatmap.csv", |w| heatmap_csv(w, &runs[0].columns(), &mean))?;
    let dilemma = dilemma_summary(&runs)?;
    out.write_with("dilemma.csv", |w| Ok(dilemma.write_csv(w)?))?;
    let holds = dilemma.holds(cfg.sweep.tolerance);
    if cfg.sweep.assert_dilemma && !holds {
        return Err(CliError::Benchmark(format!(
            "{} distinct best fixed scales, adaptive margin {:+.4}",
            dilemma.distinct_winners(),
            dilemma.adaptive_margin()
        )));
    }
    Ok(SweepSummary { runs, dilemma, holds })
}

/// `path` itself, or every `.bin` file in it (sorted by name) when it is a
/// directory.
pub fn checkpoint_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::config("--checkpoint", format!("no .bin checkpoints in {}", path.display())));
    }
    Ok(files)
}

/// Distance-σ coverage of every probe shift along a checkpoint trail; one
/// row per checkpoint, layer and probe.
pub fn coverage(cfg: &RunConfig, res: &Resolved, out: &OutDir, trail: &Path) -> Result<CoverageReport> {
    if res.probes.is_empty() {
        return Err(CliError::config("coverage.probes", "no probe shift (every corruption kind is in the menu)"));
    }
    let files = checkpoint_files(trail)?;
    let (_, te) = datasets(cfg, res)?;
    let probes = res
        .probes
        .iter()
        .map(|l| CoverageProbe::from_corruption(&te, l, cfg.coverage.severity, cfg.seed))
        .collect::<addnet::Result<Vec<_>>>()?;
    let mut report = CoverageReport::default();
    let mut checked = Vec::with_capacity(files.len());
    for f in &files {
        let ck = Checkpoint::load(f)?;
        ck.expect_spec(&res.spec)?;
        checked.push((ck.step as usize, ck.params()?));
    }
    write_config(cfg, out)?;
    for (step, params) in &checked {
        for p in &probes {
            report.rows.extend(p.rows(&res.spec, params, *step)?);
        }
    }
    out.write_with("coverage.csv", |w| Ok(report.write_csv(w)?))?;
    out.write_with("coverage_trend.csv", |w| {
        writeln!(w, "probe,first_quartile,last_quartile")?;
        for name in report.probes() {
            if let Some((a, b)) = report.quartile_trend(&name) {
                writeln!(w, "{name},{a},{b}")?;
            }
        }
        Ok(())
    })?;
    Ok(report)
}
