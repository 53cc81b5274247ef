//! The five subcommands: run, sweep, bench, validate, fit.

use std::path::Path;
use std::time::Instant;

use ndarray::{s, Array2, Array3, Axis};
use serde_json::json;

use sensmap::errquant::{
    error_attribution, estimate_basis_derived, estimate_dimension_wise, predicted_costs,
    run_bootstrap_on_trajectories, sample_pf_coefficients, summarize_maps, summarize_maps_total, summarize_values,
    IndexDistribution, RunConfig, Scope,
};
use sensmap::models_io::DesignMatrix;
use sensmap::validation::q2_trajectory_report;

use crate::artifacts::{ensure_dir, fmt, summary_cells, write_file, ArtifactList, SUMMARY_HEADER};
use crate::config::{CliError, CliResult, PipelineConfig};
use crate::pipeline::{
    batch_memory_estimate, dataset_prefix, fit_pipeline, index_set, index_set_label, load_dataset,
    run_config, Pipeline,
};

const SCOPES: [(Scope, &str); 2] = [
    (Scope::MetamodelOnly, "metamodel-only"),
    (Scope::Overall, "overall"),
];

/// One estimated distribution with its artifact label.
struct RunEntry {
    label: String,
    dist: IndexDistribution,
}

fn gsi_values(gsi: &Array2<f64>, scope: Scope) -> Vec<f64> {
    match scope {
        Scope::MetamodelOnly => gsi.slice(s![.., 0]).to_vec(),
        Scope::Overall => gsi.iter().copied().collect(),
    }
}

/// Flag dimensions whose (finite) values leave [−δ, 1+δ], δ = 2/√n_pf.
fn out_of_range(maps: &Array3<f64>, dim: usize, scope: Scope, n_pf: usize) -> bool {
    let slack = 2.0 / (n_pf as f64).sqrt();
    let check = |v: &f64| v.is_finite() && (*v < -slack || *v > 1.0 + slack);
    match scope {
        Scope::MetamodelOnly => maps.slice(s![dim, .., 0]).iter().any(check),
        Scope::Overall => maps.slice(s![dim, .., ..]).iter().any(check),
    }
}

/// Write the five run artifacts for a list of per-index-set distributions.
fn emit_run_artifacts(
    out_dir: &Path,
    entries: &[RunEntry],
    n_pf: usize,
    artifacts: &mut ArtifactList,
) -> CliResult<()> {
    ensure_dir(out_dir)?;

    let mut maps_csv = format!("index_set,kind,scope,dim,{SUMMARY_HEADER},out_of_range\n");
    let mut gsi_csv = format!("index_set,kind,scope,{SUMMARY_HEADER}\n");
    let mut samples_csv = String::from("index_set,kind,trajectory,replicate,value\n");
    let mut attribution_csv =
        String::from("index_set,kind,target,defined,metamodel_share,estimation_share\n");

    for entry in entries {
        let kinds: Vec<(&str, &Array3<f64>, &Array2<f64>)> = {
            let mut v = vec![("closed", entry.dist.maps(), entry.dist.gsi())];
            if let (Some(mt), Some(gt)) = (entry.dist.maps_total(), entry.dist.gsi_total()) {
                v.push(("total", mt, gt));
            }
            v
        };
        for (kind, maps, gsi) in kinds {
            // Per-dimension map summaries.
            let mut per_scope = Vec::new();
            for (scope, scope_name) in SCOPES {
                let summaries = if kind == "closed" {
                    summarize_maps(&entry.dist, scope)
                        .map_err(|e| CliError::Numerical(e.to_string()))?
                } else {
                    summarize_maps_total(&entry.dist, scope)
                        .map_err(|e| CliError::Numerical(e.to_string()))?
                        .expect("total maps present")
                };
                for (dim, summary) in summaries.iter().enumerate() {
                    maps_csv.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        entry.label,
                        kind,
                        scope_name,
                        dim,
                        summary_cells(summary),
                        u8::from(out_of_range(maps, dim, scope, n_pf))
                    ));
                }
                per_scope.push(summaries);
            }
            // Attribution per dimension from the two scopes.
            for dim in 0..per_scope[0].len() {
                let attribution = error_attribution(&per_scope[0][dim], &per_scope[1][dim]);
                attribution_csv.push_str(&match attribution {
                    Some(a) => format!(
                        "{},{},{},1,{},{}\n",
                        entry.label,
                        kind,
                        dim,
                        fmt(a.metamodel_share),
                        fmt(a.estimation_share)
                    ),
                    None => format!("{},{},{},0,,\n", entry.label, kind, dim),
                });
            }
            // GSI summaries, samples, attribution.
            let mut gsi_scope = Vec::new();
            for (scope, scope_name) in SCOPES {
                let summary = summarize_values(gsi_values(gsi, scope))
                    .map_err(|e| CliError::Numerical(e.to_string()))?;
                gsi_csv.push_str(&format!(
                    "{},{},{},{}\n",
                    entry.label,
                    kind,
                    scope_name,
                    summary_cells(&summary)
                ));
                gsi_scope.push(summary);
            }
            let attribution = error_attribution(&gsi_scope[0], &gsi_scope[1]);
            attribution_csv.push_str(&match attribution {
                Some(a) => format!(
                    "{},{},gsi,1,{},{}\n",
                    entry.label,
                    kind,
                    fmt(a.metamodel_share),
                    fmt(a.estimation_share)
                ),
                None => format!("{},{},gsi,0,,\n", entry.label, kind),
            });
            for ((j, b), v) in gsi.indexed_iter() {
                samples_csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    entry.label,
                    kind,
                    j + 1,
                    b + 1,
                    fmt(*v)
                ));
            }
        }
    }

    write_file(&artifacts.add(out_dir.join("maps_summary.csv")), &maps_csv)?;
    write_file(&artifacts.add(out_dir.join("gsi_summary.csv")), &gsi_csv)?;
    write_file(&artifacts.add(out_dir.join("gsi_samples.csv")), &samples_csv)?;
    write_file(
        &artifacts.add(out_dir.join("attribution.csv")),
        &attribution_csv,
    )?;
    Ok(())
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    config: &PipelineConfig,
    timings: serde_json::Value,
    artifacts: &ArtifactList,
    extra: serde_json::Value,
) -> CliResult<()> {
    let manifest = json!({
        "tool": "sensmap",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "seed": config.run.seed,
        "config": serde_json::to_value(config)
            .map_err(|e| CliError::Numerical(e.to_string()))?,
        "timings_ms": timings,
        "artifacts": artifacts.names(),
        "extra": extra,
    });
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Numerical(e.to_string()))?;
    write_file(&out_dir.join("manifest.json"), &text)
}

fn warn_batch_memory(config: &PipelineConfig, p: usize, cfg: &RunConfig) {
    if config.run.sampling != "batch" {
        return;
    }
    let blocks = if cfg.include_total { 3 } else { 2 };
    let bytes = batch_memory_estimate(p, cfg.n_traj, blocks * cfg.n_pf);
    let budget = config.run.memory_budget_mb * 1024 * 1024;
    if bytes > budget {
        eprintln!(
            "warning: batch sampling needs about {} MiB (> budget {} MiB); \
             consider --mode per-trajectory",
            bytes / (1024 * 1024),
            config.run.memory_budget_mb
        );
    }
}

/// Estimate all configured index sets on a fitted pipeline.
fn run_entries(config: &PipelineConfig, pipeline: &Pipeline, cfg: &RunConfig) -> CliResult<Vec<RunEntry>> {
    let dims = pipeline.dataset.space.dims();
    warn_batch_memory(config, pipeline.basis.n_components(), cfg);
    config
        .run
        .index_sets
        .iter()
        .map(|variables| {
            let u = index_set(variables, dims)?;
            let dist = run_bootstrap_on_trajectories(
                &pipeline.vgp,
                &pipeline.basis,
                &pipeline.dataset.space,
                &u,
                cfg,
            )?;
            Ok(RunEntry {
                label: index_set_label(&u),
                dist,
            })
        })
        .collect()
}

pub fn cmd_run(config: &PipelineConfig) -> CliResult<()> {
    let t0 = Instant::now();
    let dataset = load_dataset(config)?;
    let pipeline = fit_pipeline(config, dataset)?;
    let fit_ms = t0.elapsed().as_millis();

    let t1 = Instant::now();
    let cfg = run_config(config);
    let entries = run_entries(config, &pipeline, &cfg)?;
    let estimate_ms = t1.elapsed().as_millis();

    let mut artifacts = ArtifactList::default();
    emit_run_artifacts(&config.out_dir, &entries, cfg.n_pf, &mut artifacts)?;
    write_manifest(
        &config.out_dir,
        "run",
        config,
        json!({"fit_ms": fit_ms, "estimate_ms": estimate_ms}),
        &artifacts,
        json!({
            "basis_components": pipeline.basis.n_components(),
            "explained_ratio": pipeline.basis.explained_ratio(),
        }),
    )
}

pub fn cmd_sweep(config: &PipelineConfig) -> CliResult<()> {
    let sweep = config
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep command needs a [sweep] section".into()))?;
    if sweep.doe_sizes.is_empty() && sweep.n_pf_values.is_empty() {
        return Err(CliError::Config(
            "sweep: at least one of doe_sizes or n_pf_values must be non-empty".into(),
        ));
    }
    let t0 = Instant::now();
    let dataset = load_dataset(config)?;
    let mut artifacts = ArtifactList::default();
    let mut combined =
        String::from("sweep,value,index_set,kind,scope,statistic,stat_value\n");

    let append_point = |sweep_name: &str,
                            value: usize,
                            entries: &[RunEntry],
                            combined: &mut String|
     -> CliResult<()> {
        for entry in entries {
            let kinds: Vec<(&str, &Array2<f64>)> = {
                let mut v = vec![("closed", entry.dist.gsi())];
                if let Some(gt) = entry.dist.gsi_total() {
                    v.push(("total", gt));
                }
                v
            };
            for (kind, gsi) in kinds {
                for (scope, scope_name) in SCOPES {
                    let s = summarize_values(gsi_values(gsi, scope))
                        .map_err(|e| CliError::Numerical(e.to_string()))?;
                    for (stat, val) in [
                        ("median", s.median),
                        ("q1", s.q1),
                        ("q3", s.q3),
                        ("whisker_low", s.whisker_low),
                        ("whisker_high", s.whisker_high),
                        ("p5", s.p5),
                        ("p95", s.p95),
                        ("iqr", s.iqr()),
                    ] {
                        combined.push_str(&format!(
                            "{},{},{},{},{},{},{}\n",
                            sweep_name,
                            value,
                            entry.label,
                            kind,
                            scope_name,
                            stat,
                            fmt(val)
                        ));
                    }
                }
            }
        }
        Ok(())
    };

    // Approach 1: nested-prefix DoE sizes, shared master design.
    for &n in &sweep.doe_sizes {
        if n < 2 || n > dataset.design.len() {
            return Err(CliError::Config(format!(
                "sweep.doe_sizes: {n} outside 2..={}",
                dataset.design.len()
            )));
        }
        let subset = dataset_prefix(&dataset, n)?;
        let pipeline = fit_pipeline(config, subset)?;
        let cfg = run_config(config);
        let entries = run_entries(config, &pipeline, &cfg)?;
        emit_run_artifacts(
            &config.out_dir.join(format!("doe_{n}")),
            &entries,
            cfg.n_pf,
            &mut artifacts,
        )?;
        append_point("doe", n, &entries, &mut combined)?;
    }

    // Approach 2: PF sample sizes on one fitted surrogate.
    if !sweep.n_pf_values.is_empty() {
        let pipeline = fit_pipeline(config, dataset_prefix(&dataset, dataset.design.len())?)?;
        for &n_pf in &sweep.n_pf_values {
            if n_pf < 2 {
                return Err(CliError::Config("sweep.n_pf_values: < 2".into()));
            }
            let cfg = RunConfig {
                n_pf,
                ..run_config(config)
            };
            let entries = run_entries(config, &pipeline, &cfg)?;
            emit_run_artifacts(
                &config.out_dir.join(format!("npf_{n_pf}")),
                &entries,
                n_pf,
                &mut artifacts,
            )?;
            append_point("n_pf", n_pf, &entries, &mut combined)?;
        }
    }

    write_file(
        &artifacts.add(config.out_dir.join("sweep_summary.csv")),
        &combined,
    )?;
    write_manifest(
        &config.out_dir,
        "sweep",
        config,
        json!({"total_ms": t0.elapsed().as_millis()}),
        &artifacts,
        json!({}),
    )
}

pub fn cmd_bench(config: &PipelineConfig) -> CliResult<()> {
    let dataset = load_dataset(config)?;
    let pipeline = fit_pipeline(config, dataset)?;
    let cfg = run_config(config);
    let dims = pipeline.dataset.space.dims();
    let u = index_set(&config.run.index_sets[0], dims)?;

    let samples = sample_pf_coefficients(&pipeline.vgp, &pipeline.dataset.space, &u, &cfg)?;
    let p = pipeline.basis.n_components();
    let m = pipeline.basis.output_dims();

    let t_bd = Instant::now();
    let bd = estimate_basis_derived(
        &samples,
        pipeline.basis.components(),
        pipeline.basis.gram(),
        &cfg,
        None,
    )?;
    let bd_s = t_bd.elapsed().as_secs_f64();
    let t_dw = Instant::now();
    let dw = estimate_dimension_wise(&samples, pipeline.basis.components(), &cfg, None)?;
    let dw_s = t_dw.elapsed().as_secs_f64();
    // Keep both results alive so neither call can be optimized away.
    assert_eq!(bd.maps().dim(), dw.maps().dim());

    let speedup = dw_s / bd_s;
    let costs = predicted_costs(p, cfg.n_pf, m);
    let reference = predicted_costs(10, 5000, 4096);
    let report = json!({
        "m": m, "p": p, "n_pf": cfg.n_pf, "n_traj": cfg.n_traj, "n_boot": cfg.n_boot,
        "basis_derived_s": bd_s,
        "dimension_wise_s": dw_s,
        "speedup": speedup,
        "predicted": {
            "cost_dw": costs.cost_dw,
            "cost_bd": costs.cost_bd,
            "ratio": costs.cost_dw as f64 / costs.cost_bd as f64,
            "lower_bound_ratio": costs.lower_bound_ratio,
        },
        "reference_scale_p10_npf5000_m4096": {
            "cost_dw": reference.cost_dw,
            "cost_bd": reference.cost_bd,
            "ratio": reference.cost_dw as f64 / reference.cost_bd as f64,
        },
    });
    let mut artifacts = ArtifactList::default();
    write_file(
        &artifacts.add(config.out_dir.join("bench.json")),
        &serde_json::to_string_pretty(&report).map_err(|e| CliError::Numerical(e.to_string()))?,
    )?;
    println!(
        "dimension-wise {dw_s:.3} s vs basis-derived {bd_s:.3} s → speedup {speedup:.1}x \
         (flop model predicts {:.1}x)",
        costs.cost_dw as f64 / costs.cost_bd as f64
    );
    write_manifest(
        &config.out_dir,
        "bench",
        config,
        json!({}),
        &artifacts,
        report,
    )
}

pub fn cmd_validate(config: &PipelineConfig) -> CliResult<()> {
    let section = config
        .validate
        .as_ref()
        .ok_or_else(|| CliError::Config("validate command needs a [validate] section".into()))?;
    let dataset = load_dataset(config)?;
    let n = dataset.design.len();

    let validation_rows: Vec<usize> = match (&section.indices, section.count) {
        (Some(indices), _) => {
            let mut rows = Vec::with_capacity(indices.len());
            for &i in indices {
                if i == 0 || i > n {
                    return Err(CliError::Config(format!(
                        "validate.indices: row {i} outside 1..={n}"
                    )));
                }
                rows.push(i - 1);
            }
            rows
        }
        (None, Some(count)) => {
            if count == 0 || count >= n {
                return Err(CliError::Config(format!(
                    "validate.count: {count} must be in 1..{n}"
                )));
            }
            (n - count..n).collect()
        }
        (None, None) => {
            return Err(CliError::Config(
                "validate: one of `count` or `indices` is required".into(),
            ))
        }
    };
    let train_rows: Vec<usize> = match &section.train_indices {
        Some(indices) => indices
            .iter()
            .map(|&i| {
                if i == 0 || i > n {
                    Err(CliError::Config(format!(
                        "validate.train_indices: row {i} outside 1..={n}"
                    )))
                } else {
                    Ok(i - 1)
                }
            })
            .collect::<CliResult<Vec<_>>>()?,
        None => (0..n).filter(|i| !validation_rows.contains(i)).collect(),
    };
    if train_rows.iter().any(|i| validation_rows.contains(i)) {
        return Err(CliError::Config(
            "validate: training and validation indices overlap".into(),
        ));
    }
    if train_rows.len() < 2 {
        return Err(CliError::Config("validate: fewer than 2 training rows".into()));
    }

    let select = |rows: &[usize]| -> CliResult<(DesignMatrix, sensmap::models_io::FunctionalOutputs)> {
        let points = dataset.design.points().select(Axis(0), rows);
        let values = dataset.outputs.values().select(Axis(0), rows);
        Ok((
            DesignMatrix::new(points, dataset.space.clone())?,
            sensmap::models_io::FunctionalOutputs::new(
                values,
                dataset.outputs.grid().map(|g| g.to_vec()),
            )?,
        ))
    };
    let (train_design, train_outputs) = select(&train_rows)?;
    let (val_design, val_outputs) = select(&validation_rows)?;

    let pipeline = fit_pipeline(
        config,
        crate::pipeline::Dataset {
            space: dataset.space.clone(),
            design: train_design,
            outputs: train_outputs,
        },
    )?;
    let report = q2_trajectory_report(
        &pipeline.vgp,
        &pipeline.basis,
        &val_design,
        &val_outputs,
        section.n_traj,
        config.run.seed,
    )?;

    let mut csv = String::from("dim,p5,p50,p95\n");
    for l in 0..report.p50.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            l,
            fmt(report.p5[l]),
            fmt(report.p50[l]),
            fmt(report.p95[l])
        ));
    }
    let mut artifacts = ArtifactList::default();
    write_file(&artifacts.add(config.out_dir.join("q2_summary.csv")), &csv)?;
    write_manifest(
        &config.out_dir,
        "validate",
        config,
        json!({}),
        &artifacts,
        json!({
            "n_train": train_rows.len(),
            "n_validation": validation_rows.len(),
            "n_traj": section.n_traj,
        }),
    )
}

pub fn cmd_fit(config: &PipelineConfig) -> CliResult<()> {
    let t0 = Instant::now();
    let dataset = load_dataset(config)?;
    let pipeline = fit_pipeline(config, dataset)?;
    let fit_ms = t0.elapsed().as_millis();

    let mut artifacts = ArtifactList::default();
    let basis_dir = config.out_dir.join("basis");
    ensure_dir(&basis_dir)?;
    pipeline.basis.save_dir(&basis_dir)?;
    artifacts.add(basis_dir);

    let params: Vec<serde_json::Value> = pipeline
        .vgp
        .surrogates()
        .iter()
        .map(|s| {
            json!({
                "lengthscales": s.params().lengthscales,
                "signal_variance": s.params().signal_variance,
                "nugget": s.params().nugget,
                "log_likelihood": s.log_likelihood(),
            })
        })
        .collect();
    write_file(
        &artifacts.add(config.out_dir.join("gp_params.json")),
        &serde_json::to_string_pretty(&params).map_err(|e| CliError::Numerical(e.to_string()))?,
    )?;
    write_manifest(
        &config.out_dir,
        "fit",
        config,
        json!({"fit_ms": fit_ms}),
        &artifacts,
        json!({
            "basis_components": pipeline.basis.n_components(),
            "explained_ratio": pipeline.basis.explained_ratio(),
        }),
    )
}
