use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use velosurf::data::{load_dataset, RawDataset};
use velosurf::data::{
    parse_experiment, serialize_experiment, validate_dataset, Issue, Severity, ValidationConfig,
};
use velosurf::dataset_io::{dataset_to_string, load_scaled_dataset};
use velosurf::kernel::Kernel;
use velosurf::model_io::{load_model, model_to_string};
use velosurf::preprocess::{preprocess, PreprocessConfig};
use velosurf::selection::{grid_search, Grid, SearchOptions};
use velosurf::solver::SolverConfig;
use velosurf::surface::{
    flag_outliers, loo_outlier_report, reconstruct_surface, score_experiments, AxisRange,
};
use velosurf::svr::{train, HyperParams};
use velosurf::synth::{generate_dataset, generate_profile, series_id, SynthConfig};

use crate::cli::*;
use crate::failure::Failure;
use crate::manifest::{manifest_path_for, RunManifest};

type Outcome = Result<(), Failure>;

pub struct Globals {
    pub jobs: Option<usize>,
    pub strict: bool,
}

/// Refuse to overwrite any input with an output.
fn guard_inputs(out: &Path, inputs: &[&Path]) -> Outcome {
    let canon = |p: &Path| std::fs::canonicalize(p).ok();
    if let Some(o) = canon(out) {
        if inputs.iter().any(|i| canon(i).as_ref() == Some(&o)) {
            return Err(Failure::usage(format!(
                "output {} would overwrite an input",
                out.display()
            )));
        }
    }
    Ok(())
}

fn solver_config(a: &SolverArgs) -> SolverConfig<f64> {
    SolverConfig {
        tolerance: a.tolerance,
        max_iterations: a.max_iterations,
        cache_bytes: a.cache_mb.saturating_mul(1 << 20),
        ..SolverConfig::default()
    }
}

fn record_solver(m: &mut RunManifest, a: &SolverArgs) {
    m.param("tolerance", a.tolerance)
        .param("max_iterations", a.max_iterations)
        .param("cache_mb", a.cache_mb);
}

pub fn validate(a: &ValidateArgs, _g: &Globals) -> Outcome {
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    guard_inputs(&a.out, &inputs)?;
    let mut m = RunManifest::new("validate");
    m.param("min_length", a.min_length);
    m.inputs(&a.inputs)?;

    // unreadable files become report entries rather than aborting the run
    let mut series = Vec::new();
    let mut parse_issues = Vec::new();
    for p in &a.inputs {
        let parsed = std::fs::read_to_string(p)
            .map_err(|e| e.to_string())
            .and_then(|t| parse_experiment::<f64>(&t).map_err(|e| e.to_string()));
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        match parsed {
            Ok(mut s) => {
                if s.id.is_empty() {
                    s.id = stem;
                }
                series.push(s);
            }
            Err(message) => parse_issues.push(Issue {
                severity: Severity::Error,
                experiment: stem,
                message,
            }),
        }
    }
    let cfg = ValidationConfig {
        min_length: a.min_length,
        ..ValidationConfig::default()
    };
    let mut report = validate_dataset(
        &RawDataset {
            experiments: series,
        },
        &cfg,
    );
    report.issues.splice(0..0, parse_issues);
    m.emit(&a.out, report.to_csv().as_bytes())?;
    m.finish(&manifest_path_for(&a.out))?;
    log::info!(
        "{} error(s), {} warning(s)",
        report.count(Severity::Error),
        report.count(Severity::Warning)
    );
    if report.has_errors() {
        return Err(Failure::data(format!(
            "{} error-severity issue(s), see {}",
            report.count(Severity::Error),
            a.out.display()
        )));
    }
    Ok(())
}

pub fn preprocess_cmd(a: &PreprocessArgs, _g: &Globals) -> Outcome {
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    guard_inputs(&a.out, &inputs)?;
    let half_width = (!a.no_smoothing && a.smoothing > 0).then_some(a.smoothing);
    let mut m = RunManifest::new("preprocess");
    m.param("smoothing", half_width)
        .param("onset_threshold", a.onset_threshold);
    m.inputs(&a.inputs)?;
    let raw = load_dataset::<f64, _>(&a.inputs)?;
    let cfg = PreprocessConfig {
        half_width,
        onset_threshold: a.onset_threshold,
    };
    let d = preprocess(&raw, &cfg)?;
    log::info!(
        "{} experiments × {} samples = {} training points",
        d.n_experiments(),
        d.info.common_length,
        d.len()
    );
    m.emit(&a.out, dataset_to_string(&d).as_bytes())?;
    m.finish(&manifest_path_for(&a.out))
}

fn kernel_of(a: &TrainArgs) -> Result<Kernel<f64>, Failure> {
    Ok(match a.kernel {
        KernelKind::Rbf => Kernel::rbf(a.gamma),
        KernelKind::Arbf => {
            if a.gammas.len() != 2 {
                return Err(Failure::usage(
                    "--kernel arbf needs --gammas TIME,THICKNESS",
                ));
            }
            Kernel::AnisotropicRbf {
                gammas: a.gammas.clone(),
            }
        }
        KernelKind::Poly => Kernel::Polynomial {
            degree: a.degree,
            scale: a.scale,
            offset: a.offset,
        },
    })
}

pub fn train_cmd(a: &TrainArgs, g: &Globals) -> Outcome {
    guard_inputs(&a.out, &[&a.dataset])?;
    let hp = HyperParams {
        kernel: kernel_of(a)?,
        c: a.c,
        epsilon: a.epsilon,
    };
    hp.validate()?;
    let mut m = RunManifest::new("train");
    m.param("kernel", format!("{:?}", hp.kernel))
        .param("c", a.c)
        .param("epsilon", a.epsilon);
    record_solver(&mut m, &a.solver);
    m.input(&a.dataset)?;
    let d = load_scaled_dataset::<f64>(&a.dataset)?;
    let model = train(&d, &hp, &solver_config(&a.solver))?;
    log::info!(
        "{} support vectors of {} points, {} iterations",
        model.n_support(),
        model.meta.n_train,
        model.meta.iterations
    );
    if !model.meta.converged && g.strict {
        return Err(Failure::numerical(format!(
            "solver stopped after {} iterations with KKT violation {:e}",
            model.meta.iterations, model.meta.violation
        )));
    }
    m.emit(&a.out, model_to_string(&model).as_bytes())?;
    m.finish(&manifest_path_for(&a.out))
}

pub fn gridsearch(a: &GridsearchArgs, g: &Globals) -> Outcome {
    guard_inputs(&a.out, &[&a.dataset])?;
    let grid = Grid {
        gammas: a.gammas.clone(),
        cs: a.cs.clone(),
        epsilons: a.epsilons.clone(),
    };
    grid.validate()?;
    let mut m = RunManifest::new("gridsearch");
    m.param("gammas", &a.gammas)
        .param("cs", &a.cs)
        .param("epsilons", &a.epsilons)
        .param("k", a.k)
        .param("strategy", a.strategy.to_string())
        .param("seed", a.seed)
        .param("timing", a.timing);
    record_solver(&mut m, &a.solver);
    m.input(&a.dataset)?;
    let d = load_scaled_dataset::<f64>(&a.dataset)?;
    let progress = |done: usize, total: usize| log::info!("grid cell {done}/{total}");
    let opts = SearchOptions {
        jobs: g.jobs,
        progress: Some(&progress),
    };
    let table = grid_search(
        &d,
        &grid,
        a.k,
        a.strategy,
        a.seed,
        &solver_config(&a.solver),
        &opts,
    )?;
    m.emit(&a.out, table.to_csv(a.timing).as_bytes())?;
    let best = table.best_result();
    if let (Some(path), Some(b)) = (&a.best, best) {
        let gamma = match b.params.kernel {
            Kernel::Rbf { gamma } => gamma,
            _ => unreachable!("grid cells are rbf"),
        };
        let mut s = String::new();
        if let Some(e) = b.mean_error {
            let _ = writeln!(s, "# mean cross-validation error {e}");
        }
        let _ = writeln!(
            s,
            "kernel=rbf\ngamma={gamma}\nc={}\nepsilon={}",
            b.params.c, b.params.epsilon
        );
        m.emit(path, s.as_bytes())?;
    }
    m.finish(&manifest_path_for(&a.out))?;
    let Some(b) = best else {
        return Err(Failure::numerical("no grid cell completed every fold"));
    };
    if g.strict && !table.results.iter().all(|r| r.is_complete()) {
        return Err(Failure::numerical("some folds failed to converge"));
    }
    log::info!("best: {:?} mean error {:?}", b.params, b.mean_error);
    Ok(())
}

fn parse_queries(text: &str, origin: &Path) -> Result<Vec<(f64, f64)>, Failure> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || {
            Failure::data(format!(
                "{}:{}: expected time_ns,thickness_in",
                origin.display(),
                i + 1
            ))
        };
        let (t, w) = line.split_once(',').ok_or_else(bad)?;
        match (t.trim().parse::<f64>(), w.trim().parse::<f64>()) {
            (Ok(t), Ok(w)) if t.is_finite() && w.is_finite() => out.push((t, w)),
            // a header is allowed on the first row only
            _ if out.is_empty() && i == 0 => {}
            _ => return Err(bad()),
        }
    }
    Ok(out)
}

pub fn predict(a: &PredictArgs, _g: &Globals) -> Outcome {
    let model = load_model::<f64>(&a.model)?;
    let mut m = RunManifest::new("predict");
    m.input(&a.model)?;
    let queries = match (&a.query_csv, a.time_ns, a.thickness_in) {
        (Some(p), _, _) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::data(format!("{}: {e}", p.display())))?;
            m.input(p)?;
            parse_queries(&text, p)?
        }
        (None, Some(t), Some(w)) => {
            m.param("time_ns", t).param("thickness_in", w);
            vec![(t, w)]
        }
        _ => {
            return Err(Failure::usage(
                "give --time-ns and --thickness-in, or --query-csv",
            ))
        }
    };
    let values = model.predict_batch_physical(&queries);
    match &a.out {
        Some(out) => {
            let mut inputs: Vec<&Path> = vec![&a.model];
            inputs.extend(a.query_csv.as_deref());
            guard_inputs(out, &inputs)?;
            let mut s = String::from("time_ns,thickness_in,velocity_mps\n");
            for ((t, w), v) in queries.iter().zip(&values) {
                let _ = writeln!(s, "{t},{w},{v}");
            }
            m.emit(out, s.as_bytes())?;
            m.finish(&manifest_path_for(out))
        }
        None => {
            for v in values {
                println!("{v}");
            }
            Ok(())
        }
    }
}

fn parse_range(s: &str, what: &str) -> Result<AxisRange<f64>, Failure> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|p| p.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some(&[start, stop, step]) => Ok(AxisRange::new(start, stop, step)),
        _ => Err(Failure::usage(format!(
            "--{what} expects start:stop:step, got '{s}'"
        ))),
    }
}

pub fn surface(a: &SurfaceArgs, _g: &Globals) -> Outcome {
    guard_inputs(&a.out, &[&a.model])?;
    let model = load_model::<f64>(&a.model)?;
    let p = &model.meta.preprocess;
    let time = match &a.time {
        Some(s) => parse_range(s, "time")?,
        None => AxisRange::new(
            0.0,
            p.dt_ns * (p.common_length.saturating_sub(1)) as f64,
            p.dt_ns,
        ),
    };
    let thickness = parse_range(&a.thickness, "thickness")?;
    let mut m = RunManifest::new("surface");
    m.param("time", [time.start, time.stop, time.step])
        .param(
            "thickness",
            [thickness.start, thickness.stop, thickness.step],
        )
        .param("format", format!("{:?}", a.format).to_lowercase())
        .param("cell_budget", a.cell_budget);
    m.input(&a.model)?;
    let grid = reconstruct_surface(&model, &time, &thickness, a.cell_budget)?;
    let text = match a.format {
        SurfaceFormat::Matrix => grid.to_matrix_csv(),
        SurfaceFormat::Xyz => grid.to_xyz_csv(),
    };
    m.emit(&a.out, text.as_bytes())?;
    m.finish(&manifest_path_for(&a.out))
}

pub fn outliers(a: &OutliersArgs, _g: &Globals) -> Outcome {
    let mut inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    inputs.push(&a.model);
    guard_inputs(&a.out, &inputs)?;
    let model = load_model::<f64>(&a.model)?;
    let mut m = RunManifest::new("outliers");
    m.param("threshold", a.threshold).param("loo", a.loo);
    m.input(&a.model)?;
    m.inputs(&a.inputs)?;
    let raw = load_dataset::<f64, _>(&a.inputs)?;
    let report = if a.loo {
        let meta = &model.meta;
        let prep = PreprocessConfig {
            half_width: meta.preprocess.smoothing_half_width,
            onset_threshold: meta.preprocess.onset_threshold,
        };
        let cfg = SolverConfig {
            tolerance: meta.tolerance,
            max_iterations: meta.max_iterations,
            ..SolverConfig::default()
        };
        loo_outlier_report(&raw, &prep, &model.hyper_params(), &cfg, a.threshold)?
    } else {
        flag_outliers(&score_experiments(&model, &raw)?, a.threshold)?
    };
    let flagged = report.entries.iter().filter(|e| e.flagged).count();
    log::info!("{flagged} of {} experiments flagged", report.entries.len());
    m.emit(&a.out, report.to_csv().as_bytes())?;
    m.finish(&manifest_path_for(&a.out))
}

pub fn synth(a: &SynthArgs, _g: &Globals) -> Outcome {
    let cfg = SynthConfig {
        thicknesses: a.thicknesses.clone(),
        n_steps: a.n_steps,
        dt_ns: a.dt_ns,
        noise_rel: a.noise_rel,
        seed: a.seed,
        ..SynthConfig::default()
    };
    cfg.validate()?;
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::data(format!("{}: {e}", a.out_dir.display())))?;
    let mut m = RunManifest::new("synth");
    m.param("thicknesses", &a.thicknesses)
        .param("n_steps", a.n_steps)
        .param("dt_ns", a.dt_ns)
        .param("noise_rel", a.noise_rel)
        .param("seed", a.seed)
        .param("truth", a.truth);
    let (raw, _) = generate_dataset(&cfg)?;
    for e in &raw.experiments {
        m.emit(
            &a.out_dir.join(format!("{}.csv", e.id)),
            serialize_experiment(e).as_bytes(),
        )?;
    }
    if a.truth {
        for &w in &cfg.thicknesses {
            let mut clean = generate_profile(w, &cfg, true)?;
            clean.id = format!("{}_truth", series_id(w));
            m.emit(
                &a.out_dir.join(format!("{}.csv", clean.id)),
                serialize_experiment(&clean).as_bytes(),
            )?;
        }
    }
    m.finish(&a.out_dir.join("manifest.json"))
}
