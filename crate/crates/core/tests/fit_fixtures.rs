use diffeoflow::field::GridSpec;
use diffeoflow::fit::{fit_chain, fit_frame, fit_pipeline, fit_stage, FitConfig, LossConfig, PipelineConfig, TargetCloud};
use diffeoflow::integrate::integrate_mesh;
use diffeoflow::metrics::evaluate_surfaces;
use diffeoflow::primitives;
use diffeoflow::template::{build_template, TemplateConfig};

#[test]
fn sphere_grows_to_larger_sphere() {
    let seed = primitives::icosphere(3, 1.0);
    let target_mesh = primitives::icosphere(4, 1.3);
    let target = TargetCloud::sample(&target_mesh, 5000, 0).unwrap();
    let grid = GridSpec::cube(16, -1.8, 1.8).unwrap();
    let fit = FitConfig {
        iterations: 500,
        ..FitConfig::default()
    };
    let out = fit_stage(&seed, &target, grid, &fit, &LossConfig::default()).unwrap();
    let moved = integrate_mesh(&seed, &out.field, &fit.integrator).unwrap();
    let report = evaluate_surfaces(&moved, &target_mesh, 50_000, 1).unwrap();
    assert!(report.chamfer_mm <= 0.02, "{}", report.chamfer_mm);
    assert_eq!(report.sif_count, 0);
}

#[test]
fn multistage_fit_improves_every_stage() {
    let target_mesh = primitives::wrinkled_sphere(5, 1.0, 0.1, 6.0);
    let config = TemplateConfig {
        resolution: 48,
        levels: 2,
        ..TemplateConfig::default()
    };
    let family = build_template(&[target_mesh.clone()], &config).unwrap();
    let seeds: Vec<_> = family.levels.iter().map(|l| l.mesh.clone()).collect();
    let target = TargetCloud::sample(&target_mesh, 8000, 0).unwrap();
    let frame = fit_frame(&[&seeds[0], &target_mesh], 0.1);
    let stages: Vec<FitConfig> = [16, 24, 32]
        .into_iter()
        .map(|resolution| FitConfig {
            resolution,
            iterations: 60,
            ..FitConfig::default()
        })
        .collect();
    let chain = fit_chain(&seeds, &target, &frame, &stages, &LossConfig::default()).unwrap();
    let chamfer = chain.stage_chamfer();
    assert!(chamfer.windows(2).all(|w| w[1] < w[0]), "{chamfer:?}");
    assert_eq!(chain.output.euler_characteristic().unwrap(), 2);
}

#[test]
fn pipeline_is_reproducible_and_shares_tags() {
    let white = primitives::wrinkled_sphere(4, 1.0, 0.05, 3.0);
    let pial = primitives::wrinkled_sphere(4, 1.1, 0.05, 3.0);
    let stage = |resolution| FitConfig {
        resolution,
        iterations: 10,
        ..FitConfig::default()
    };
    let config = PipelineConfig {
        white_stages: vec![stage(12), stage(16)],
        pial_stages: vec![stage(12)],
        loss: LossConfig {
            target_samples: 1000,
            ..LossConfig::default()
        },
        seed: 4,
        ..PipelineConfig::default()
    };
    let family = [primitives::icosphere(2, 1.0), primitives::icosphere(3, 1.0)];
    let a = fit_pipeline(&white, &pial, &family, &config).unwrap();
    let b = fit_pipeline(&white, &pial, &family, &config).unwrap();
    for (x, y) in a.white.fits.iter().chain(&a.pial.fits).zip(b.white.fits.iter().chain(&b.pial.fits)) {
        assert_eq!(x.losses, y.losses);
    }
    assert_eq!(a.pial.output.vertices(), b.pial.output.vertices());
    assert_eq!(a.white.output.vertex_count(), family[1].vertex_count());
    assert_eq!(a.white.output.tags(), a.pial.output.tags());
    assert!(a.white.output.tags().is_some());
}
