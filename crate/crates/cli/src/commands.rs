use std::fs;
use std::io::Write;
use std::path::Path;

use diffeoflow::chain::{apply_chain, apply_stages, ChainManifest, SeedEntry, SeedKind, Stage, StageEntry};
use diffeoflow::field::{AnalyticFlow, GridSpec};
use diffeoflow::fit::{fit_pipeline, FittedChain, PipelineConfig};
use diffeoflow::mesh_io::{read_mesh, write_mesh};
use diffeoflow::metrics::{evaluate_surfaces, MetricsReport};
use diffeoflow::template::{build_template, TemplateConfig};
use diffeoflow::Vec3;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::args::{BuildTemplateArgs, DeformArgs, FitArgs, GenFieldArgs, MetricsArgs, ReportFormat};
use crate::error::{io_error, CliError};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_error(dir))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_error(path))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    fs::metadata(path).map(|_| ()).map_err(io_error(path))
}

fn sha256_hex(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_error(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn build_template_cmd(args: &BuildTemplateArgs) -> Result<(), CliError> {
    let meshes = args
        .inputs
        .iter()
        .map(|p| read_mesh(p))
        .collect::<Result<Vec<_>, _>>()?;
    let config = TemplateConfig {
        resolution: args.resolution,
        margin_voxels: args.margin_voxels,
        iso_voxels: args.iso_voxels,
        smoothing_iterations: args.smoothing_iterations,
        smoothing_lambda: args.smoothing_lambda,
        edge_length_voxels: args.edge_voxels,
        remesh_iterations: args.remesh_iterations,
        levels: args.levels,
    };
    let family = build_template(&meshes, &config)?;
    create_dir(&args.out_dir)?;
    let mut files = Vec::new();
    for level in &family.levels {
        let name = format!("{}.ply", level.file_stem());
        write_mesh(&args.out_dir.join(&name), &level.mesh)?;
        log::info!("wrote {name}: {} vertices", level.mesh.vertex_count());
        files.push(json!({
            "level": level.level,
            "file": name,
            "vertices": level.mesh.vertex_count(),
            "faces": level.mesh.face_count(),
        }));
    }
    let inputs = args
        .inputs
        .iter()
        .map(|p| Ok(json!({ "path": p.display().to_string(), "sha256": sha256_hex(p)? })))
        .collect::<Result<Vec<_>, CliError>>()?;
    let provenance = json!({
        "tool": "diffeoflow",
        "version": env!("CARGO_PKG_VERSION"),
        "inputs": inputs,
        "config": config,
        "report": family.report,
        "levels": files,
    });
    write_text(
        &args.out_dir.join("template.json"),
        &(serde_json::to_string_pretty(&provenance).expect("serializable") + "\n"),
    )
}

pub fn deform_cmd(args: &DeformArgs) -> Result<(), CliError> {
    require_file(&args.chain)?;
    let manifest = ChainManifest::load(&args.chain)?;
    let base = args.chain.parent().unwrap_or(Path::new("."));
    let seed = match &args.mesh {
        Some(p) => {
            let m = read_mesh(p)?;
            Some(match (manifest.seed.kind, m.tags()) {
                (SeedKind::WhiteSurface, None) => m.with_sequential_tags(),
                _ => m,
            })
        }
        None => None,
    };
    let chain = manifest
        .load_chain(base, seed)?
        .with_integrator(args.method.map(Into::into), args.steps);
    let out = apply_chain(&chain)?;
    write_mesh(&args.out, &out.output)?;
    if let Some(dir) = &args.intermediates {
        create_dir(dir)?;
        for (i, m) in out.intermediates.iter().enumerate() {
            write_mesh(&dir.join(format!("mesh_{}.ply", i + 1)), m)?;
        }
    }
    Ok(())
}

fn load_pipeline_config(args: &FitArgs, seed: u64) -> Result<PipelineConfig, CliError> {
    let mut config = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(io_error(p))?;
            serde_json::from_str(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", p.display())))?
        }
        None => PipelineConfig::default(),
    };
    config.seed = seed;
    for stage in config.white_stages.iter_mut().chain(config.pial_stages.iter_mut()) {
        if let Some(n) = args.iterations {
            stage.iterations = n;
        }
        if let Some(lr) = args.learning_rate {
            stage.learning_rate = lr;
        }
        if let Some(m) = args.method {
            stage.integrator.method = m.into();
        }
        if let Some(s) = args.steps {
            stage.integrator.n_steps = s;
        }
        if let Some(c) = args.clamp_voxels {
            stage.clamp_voxels = c;
        }
    }
    if let Some(n) = args.samples {
        config.loss.target_samples = n;
    }
    Ok(config)
}

/// Rounds field values to the stored single precision so that outputs
/// recomputed from the written files match the written meshes exactly.
fn stored_precision(stages: &[Stage]) -> Vec<Stage> {
    stages
        .iter()
        .map(|s| {
            let mut field = s.field.clone();
            for v in field.data_mut() {
                *v = v.map(|c| c as f32 as f64);
            }
            Stage {
                field,
                config: s.config,
            }
        })
        .collect()
}

fn write_chain(
    out_dir: &Path,
    name: &str,
    stages: &[Stage],
    seed_file: &str,
    seed_kind: SeedKind,
) -> Result<(), CliError> {
    let mut entries = Vec::new();
    for (i, s) in stages.iter().enumerate() {
        let flow = format!("{name}_stage{}", i + 1);
        s.field.save(&out_dir.join(&flow))?;
        entries.push(StageEntry {
            flow,
            method: s.config.method,
            n_steps: s.config.n_steps,
            total_time: s.config.total_time,
        });
    }
    let manifest = ChainManifest {
        seed: SeedEntry {
            path: seed_file.to_string(),
            kind: seed_kind,
        },
        stages: entries,
    };
    manifest.save(&out_dir.join(format!("{name}_chain.json")))?;
    Ok(())
}

fn loss_rows(out: &mut String, name: &str, chain: &FittedChain) {
    for (s, fit) in chain.fits.iter().enumerate() {
        for (it, (l, b)) in fit.losses.iter().zip(&fit.best_losses).enumerate() {
            out.push_str(&format!("{name},{},{it},{l:.10e},{b:.10e}\n", s + 1));
        }
    }
}

pub fn fit_cmd(args: &FitArgs, seed: u64) -> Result<(), CliError> {
    let config = load_pipeline_config(args, seed)?;
    let templates = args
        .templates
        .iter()
        .map(|p| read_mesh(p))
        .collect::<Result<Vec<_>, _>>()?;
    let white_target = read_mesh(&args.white)?;
    let pial_target = read_mesh(&args.pial)?;
    let fitted = fit_pipeline(&white_target, &pial_target, &templates, &config)?;

    create_dir(&args.out_dir)?;
    let white_stages = stored_precision(&fitted.white.stages);
    let pial_stages = stored_precision(&fitted.pial.stages);
    let seed_mesh = match fitted.white.seed.tags() {
        Some(_) => fitted.white.seed.clone(),
        None => fitted.white.seed.clone().with_sequential_tags(),
    };
    let white = apply_stages(&seed_mesh, &white_stages, false)?.output;
    let pial = apply_stages(&white, &pial_stages, false)?.output;

    write_mesh(&args.out_dir.join("white_seed.ply"), &seed_mesh)?;
    write_mesh(&args.out_dir.join("white.ply"), &white)?;
    write_mesh(&args.out_dir.join("pial.ply"), &pial)?;
    write_chain(&args.out_dir, "white", &white_stages, "white_seed.ply", SeedKind::Template)?;
    write_chain(&args.out_dir, "pial", &pial_stages, "white.ply", SeedKind::WhiteSurface)?;

    let mut csv = String::from("chain,stage,iteration,loss,best_loss\n");
    loss_rows(&mut csv, "white", &fitted.white);
    loss_rows(&mut csv, "pial", &fitted.pial);
    write_text(&args.out_dir.join("loss.csv"), &csv)?;

    let summary = |c: &FittedChain| {
        c.fits
            .iter()
            .map(|f| json!({ "best_iteration": f.best_iteration, "best_loss": f.best_losses.last(), "chamfer": f.chamfer }))
            .collect::<Vec<_>>()
    };
    let report = json!({
        "config": config,
        "white": summary(&fitted.white),
        "pial": summary(&fitted.pial),
    });
    write_text(
        &args.out_dir.join("fit.json"),
        &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"),
    )
}

fn report_text(report: &MetricsReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => report.to_json() + "\n",
        ReportFormat::Csv => format!("{}\n{}\n", MetricsReport::csv_header(), report.to_csv_row()),
    }
}

pub fn metrics_cmd(args: &MetricsArgs, seed: u64) -> Result<(), CliError> {
    let pred = read_mesh(&args.pred)?;
    let gt = read_mesh(&args.gt)?;
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let report = evaluate_surfaces(&pred, &gt, args.samples, seed)?;
    let text = report_text(&report, args.format);
    match &args.out {
        Some(p) => write_text(p, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(io_error("<stdout>")),
    }
}

fn triple<T: Copy>(values: &[T], name: &str) -> Result<[T; 3], CliError> {
    match values {
        [v] => Ok([*v; 3]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(CliError::Usage(format!("--{name} takes one or three values"))),
    }
}

pub fn gen_field_cmd(args: &GenFieldArgs) -> Result<(), CliError> {
    let flow = AnalyticFlow::from_kind(&args.kind, &args.params)?;
    let dims = triple(&args.dims, "dims")?;
    if dims.iter().any(|&d| d < 2) {
        return Err(CliError::Usage("--dims must be at least 2".into()));
    }
    let origin = Vec3::from(triple(&args.origin, "origin")?);
    let spacing = if args.spacing.is_empty() {
        Vec3::new(
            2.0 / (dims[0] - 1) as f64,
            2.0 / (dims[1] - 1) as f64,
            2.0 / (dims[2] - 1) as f64,
        )
    } else {
        Vec3::from(triple(&args.spacing, "spacing")?)
    };
    let grid = GridSpec::new(dims, origin, spacing).map_err(|e| CliError::Usage(e.to_string()))?;
    let field = flow.sample(grid)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    field.save(&args.out)?;
    Ok(())
}
