//! End-to-end acceptance checks. Runs as a plain binary so that every
//! criterion prints its own PASS/FAIL line regardless of output capture.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::{code, run_with_threads, s, save};
use diffeoflow::chain::{apply_stages, ChainManifest, SeedEntry, SeedKind, Stage, StageEntry};
use diffeoflow::field::{AnalyticFlow, FlowField, GridSpec};
use diffeoflow::fit::{
    backprop_through_integration, fit_chain, fit_frame, fit_pipeline, integrate_with_tape, loss, EdgeRest, FitConfig,
    LossConfig, PipelineConfig, TargetCloud,
};
use diffeoflow::integrate::{estimate_convergence_order, integrate_mesh, IntegratorConfig, Method};
use diffeoflow::mesh::{EdgeSet, SurfaceSamples};
use diffeoflow::metrics::{
    chamfer_distance, chamfer_normals, evaluate_surfaces, faces_adjacent, hausdorff_distance, self_intersecting_faces, triangles_intersect,
};
use diffeoflow::primitives;
use diffeoflow::spatial::nearest_brute_force;
use diffeoflow::template::{build_template, TemplateConfig};
use diffeoflow::{TriangleMesh, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.random(), rng.random(), rng.random()) * 2.0 - Vec3::repeat(1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn max_vertex_error(a: &TriangleMesh, b: &TriangleMesh) -> f64 {
    a.vertices()
        .iter()
        .zip(b.vertices())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn wrinkled_target() -> TriangleMesh {
    primitives::wrinkled_sphere(5, 1.0, 0.1, 6.0)
}

fn convergence_order() -> Outcome {
    let grid = GridSpec::cube(64, -2.0, 2.0).unwrap();
    let flow = AnalyticFlow::rotation(Vec3::z(), std::f64::consts::FRAC_PI_2, Vec3::zeros());
    let field = flow.sample(grid).unwrap();
    let x0 = Vec3::new(1.0, 0.5, 0.25);
    let steps = [8, 16, 32, 64];
    let order = |method| {
        estimate_convergence_order(&field, Some(&flow), &x0, method, 1.0, &steps)
            .unwrap()
            .order
            .expect("errors above rounding level")
    };
    let (euler, rk4) = (order(Method::Euler), order(Method::Rk4));
    ensure!((0.8..=1.2).contains(&euler), "Euler order {euler:.3}");
    ensure!((3.5..=4.5).contains(&rk4), "RK4 order {rk4:.3}");
    Ok(format!("Euler p = {euler:.3}, RK4 p = {rk4:.3}"))
}

fn rk4_beats_euler() -> Outcome {
    let template = primitives::icosphere(3, 1.0);
    let target = TargetCloud::sample(&wrinkled_target(), 5000, 0).unwrap();
    let frame = fit_frame(&[&template, &wrinkled_target()], 0.1);
    let stage = FitConfig {
        resolution: 16,
        iterations: 150,
        ..FitConfig::default()
    };
    let chain = fit_chain(&[template.clone()], &target, &frame, &[stage], &LossConfig::default()).unwrap();
    let run = |method, n_steps| {
        let stages: Vec<Stage> = chain
            .stages
            .iter()
            .map(|s| Stage {
                field: s.field.clone(),
                config: IntegratorConfig { method, n_steps, ..s.config },
            })
            .collect();
        apply_stages(&template, &stages, false).unwrap().output
    };
    let reference = run(Method::Rk4, 1024);
    let euler = run(Method::Euler, 30);
    let rk4 = run(Method::Rk4, 30);
    let (e_euler, e_rk4) = (max_vertex_error(&euler, &reference), max_vertex_error(&rk4, &reference));
    let sif_euler = self_intersecting_faces(&euler).percent;
    let sif_rk4 = self_intersecting_faces(&rk4).percent;
    ensure!(e_rk4 < e_euler, "terminal error RK4 {e_rk4:.3e} vs Euler {e_euler:.3e}");
    ensure!(sif_rk4 <= sif_euler, "%SIF RK4 {sif_rk4} vs Euler {sif_euler}");
    Ok(format!(
        "terminal error RK4 {e_rk4:.2e} < Euler {e_euler:.2e}; %SIF {sif_rk4} <= {sif_euler}"
    ))
}

/// Sum of a few random sinusoidal modes, sampled and clamped like a fitted stage field.
fn random_smooth_field(grid: GridSpec, rng: &mut ChaCha8Rng, clamp: f64) -> FlowField {
    let modes: Vec<(Vec3, Vec3, f64)> = (0..4)
        .map(|_| (random_unit(rng) * 0.3, random_unit(rng) * rng.random_range(0.5..2.0), rng.random_range(0.0..6.3)))
        .collect();
    let mut field = FlowField::from_fn(grid, |x| {
        modes
            .iter()
            .map(|(a, w, phase)| a * (w.dot(x) + phase).sin())
            .sum()
    })
    .unwrap();
    field.clamp_magnitude(clamp);
    field
}

fn diffeomorphism_properties() -> Outcome {
    let grid = GridSpec::cube(32, -2.0, 2.0).unwrap();
    let clamp = 2.0 * grid.spacing().min();
    let config = IntegratorConfig::new(Method::Rk4, 32);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let sphere = primitives::icosphere(3, 1.0);
    let mut worst = 0.0f64;
    let mut max_sif = 0.0f64;
    for trial in 0..100 {
        let field = random_smooth_field(grid, &mut rng, clamp);
        let moved = integrate_mesh(&sphere, &field, &config).unwrap();
        let back = integrate_mesh(&moved, &field.negate(), &config).unwrap();
        worst = worst.max(max_vertex_error(&back, &sphere));
        let chi = moved.euler_characteristic().unwrap();
        ensure!(chi == 2, "trial {trial}: chi {chi}");
        max_sif = max_sif.max(self_intersecting_faces(&moved).percent);
    }
    let tol = 1e-5 * grid.diameter();
    ensure!(worst <= tol, "round trip error {worst:.3e} > {tol:.3e}");
    ensure!(max_sif == 0.0, "%SIF {max_sif}");
    Ok(format!(
        "round trip {worst:.2e} <= {tol:.2e}, chi preserved 100/100, %SIF 0"
    ))
}

fn template_pipeline() -> Outcome {
    let sphere = primitives::icosphere(3, 1.0);
    let offset = Vec3::new(0.6, 0.0, 0.0);
    let meshes = [sphere.map_vertices(|v| v + offset), sphere.map_vertices(|v| v - offset)];
    let family = build_template(&meshes, &TemplateConfig::default()).map_err(|e| e.to_string())?;
    let r = &family.report;
    ensure!(r.euler_characteristic == 2, "chi {}", r.euler_characteristic);
    ensure!(
        r.max_training_distance <= r.containment_tolerance,
        "containment {} > {}",
        r.max_training_distance,
        r.containment_tolerance
    );
    ensure!(
        r.dihedral_after_smoothing < r.dihedral_before_smoothing,
        "dihedral {} -> {}",
        r.dihedral_before_smoothing,
        r.dihedral_after_smoothing
    );
    Ok(format!(
        "chi 2, containment {:.4} <= {:.4}, dihedral {:.3} -> {:.3}",
        r.max_training_distance, r.containment_tolerance, r.dihedral_before_smoothing, r.dihedral_after_smoothing
    ))
}

fn random_cloud(rng: &mut ChaCha8Rng) -> SurfaceSamples {
    let n = rng.random_range(100..=2000);
    let scale = Vec3::new(rng.random_range(0.5..2.0), rng.random_range(0.5..2.0), rng.random_range(0.5..2.0));
    let points = (0..n)
        .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()).component_mul(&scale))
        .collect();
    let normals = (0..n).map(|_| random_unit(rng)).collect();
    SurfaceSamples {
        points,
        normals,
        faces: vec![0; n],
    }
}

/// (mean, max, mean |cos|) of nearest-neighbor queries by exhaustive search.
fn brute_one_sided(a: &SurfaceSamples, b: &SurfaceSamples) -> (f64, f64, f64) {
    let (mut sum, mut max, mut cos) = (0.0, 0.0f64, 0.0);
    for (p, n) in a.points.iter().zip(&a.normals) {
        let (j, d2) = nearest_brute_force(&b.points, p).unwrap();
        let d = d2.sqrt();
        sum += d;
        max = max.max(d);
        cos += n.dot(&b.normals[j]).abs();
    }
    let len = a.len() as f64;
    (sum / len, max, cos / len)
}

fn brute_sif(mesh: &TriangleMesh) -> usize {
    let faces = mesh.faces();
    let mut flagged = vec![false; faces.len()];
    for i in 0..faces.len() {
        for j in i + 1..faces.len() {
            if !faces_adjacent(&faces[i], &faces[j]) && triangles_intersect(&mesh.triangle(i), &mesh.triangle(j)) {
                flagged[i] = true;
                flagged[j] = true;
            }
        }
    }
    flagged.iter().filter(|&&f| f).count()
}

fn sif_fixtures() -> Vec<(String, TriangleMesh)> {
    let tet = primitives::tetrahedron();
    let center = tet.vertices().iter().sum::<Vec3>() / 4.0;
    let star = primitives::merge(&[tet.clone(), tet.map_vertices(|v| 2.0 * center - v)]);
    let mut out = vec![
        ("interpenetrating tetrahedra".to_string(), star),
        ("icosphere".into(), primitives::icosphere(2, 1.0)),
        ("torus".into(), primitives::torus(1.0, 0.4, 24, 12)),
        ("disjoint spheres".into(), primitives::merge(&[
            primitives::icosphere(1, 1.0),
            primitives::icosphere(1, 1.0).map_vertices(|v| v + Vec3::new(3.0, 0.0, 0.0)),
        ])),
        ("overlapping spheres".into(), primitives::merge(&[
            primitives::icosphere(2, 1.0),
            primitives::icosphere(2, 1.0).map_vertices(|v| v + Vec3::new(1.0, 0.2, 0.1)),
        ])),
        ("nested spheres".into(), primitives::merge(&[primitives::icosphere(2, 1.0), primitives::icosphere(2, 0.5)])),
        ("crossing planes".into(), primitives::merge(&[
            primitives::grid_plane(6, 6, 0.2),
            primitives::grid_plane(6, 6, 0.2)
                .map_vertices(|v| Vec3::new(v.x + 0.05, 0.5, v.y - 0.5)),
        ])),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..7 {
        let sphere = primitives::icosphere(2, 1.0);
        let amp = 0.05 + 0.1 * k as f64;
        let noisy: Vec<Vec3> = sphere
            .vertices()
            .iter()
            .map(|v| v + random_unit(&mut rng) * amp * rng.random::<f64>())
            .collect();
        out.push((format!("noisy sphere {amp:.2}"), sphere.with_vertices(noisy)));
    }
    for k in 0..6 {
        let n = 20 + 15 * k;
        let vertices: Vec<Vec3> = (0..3 * n)
            .map(|_| Vec3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let faces = (0..n as u32).map(|f| [3 * f, 3 * f + 1, 3 * f + 2]).collect();
        out.push((format!("triangle soup {n}"), TriangleMesh::new(vertices, faces).unwrap()));
    }
    out
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for pair in 0..50 {
        let a = random_cloud(&mut rng);
        let b = random_cloud(&mut rng);
        let (ab, ab_max, ab_cos) = brute_one_sided(&a, &b);
        let (ba, ba_max, ba_cos) = brute_one_sided(&b, &a);
        let ch = chamfer_distance(&a.points, &b.points).unwrap();
        let hd = hausdorff_distance(&a.points, &b.points).unwrap();
        let chn = chamfer_normals(&a, &b, false).unwrap();
        let close = |x: f64, y: f64| (x - y).abs() <= 4.0 * f64::EPSILON * y.abs().max(1.0);
        ensure!(close(ch.value, 0.5 * ab + 0.5 * ba), "pair {pair}: CH {} vs {}", ch.value, 0.5 * ab + 0.5 * ba);
        ensure!(close(hd.value, ab_max.max(ba_max)), "pair {pair}: HD {} vs {}", hd.value, ab_max.max(ba_max));
        ensure!(
            close(chn.value, 0.5 * ab_cos + 0.5 * ba_cos),
            "pair {pair}: CHN {} vs {}",
            chn.value,
            0.5 * ab_cos + 0.5 * ba_cos
        );
    }
    let fixtures = sif_fixtures();
    for (name, mesh) in &fixtures {
        let fast = self_intersecting_faces(mesh).count;
        let brute = brute_sif(mesh);
        ensure!(fast == brute, "{name}: SIF {fast} vs brute force {brute}");
    }
    let star = self_intersecting_faces(&fixtures[0].1).percent;
    ensure!(star == 100.0, "interpenetrating tetrahedra %SIF {star}");
    Ok(format!("50 cloud pairs and {} meshes match brute force", fixtures.len()))
}

struct GradientProblem {
    field: FlowField,
    verts: Vec<Vec3>,
    target: TargetCloud,
    edges: EdgeSet,
    loss: LossConfig,
    config: IntegratorConfig,
}

impl GradientProblem {
    fn random(seed: u64, method: Method) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let res = rng.random_range(5..=8);
        let grid = GridSpec::cube(res, -1.0, 1.0).unwrap();
        let mut unit = || Vec3::new(rng.random(), rng.random(), rng.random()) * 2.0 - Vec3::repeat(1.0);
        let data: Vec<Vec3> = (0..grid.node_count()).map(|_| unit() * 0.4).collect();
        let verts: Vec<Vec3> = (0..6).map(|_| unit() * 0.5).collect();
        let target: Vec<Vec3> = (0..15).map(|_| unit() * 0.7).collect();
        let edges = EdgeSet {
            edges: vec![[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [0, 5], [1, 4]],
            rest_lengths: vec![0.0, 0.2, 0.1, 0.3, 0.0, 0.15, 0.25],
        };
        Self {
            field: FlowField::new(grid, data).unwrap(),
            verts,
            target: TargetCloud::new(&target).unwrap(),
            edges,
            loss: LossConfig {
                edge_weight: 0.5,
                edge_rest: EdgeRest::Seed,
                ..LossConfig::default()
            },
            config: IntegratorConfig {
                method,
                n_steps: 4,
                total_time: 1.0,
            },
        }
    }

    fn moved(&self, field: &FlowField) -> Vec<Vec3> {
        integrate_with_tape(field, &self.verts, &self.config).unwrap().final_positions()
    }

    fn assignments(&self, field: &FlowField) -> (Vec<usize>, Vec<usize>) {
        let moved = self.moved(field);
        let fwd = moved
            .iter()
            .map(|v| nearest_brute_force(self.target.points(), v).unwrap().0)
            .collect();
        let bwd = self
            .target
            .points()
            .iter()
            .map(|t| nearest_brute_force(&moved, t).unwrap().0)
            .collect();
        (fwd, bwd)
    }

    fn total(&self, field: &FlowField) -> f64 {
        loss(&self.moved(field), &self.target, &self.edges, &self.loss).unwrap().total
    }

    /// Relative error over grid values whose perturbation keeps every
    /// nearest-neighbor assignment.
    fn relative_error(&self) -> f64 {
        let tape = integrate_with_tape(&self.field, &self.verts, &self.config).unwrap();
        let l = loss(&tape.final_positions(), &self.target, &self.edges, &self.loss).unwrap();
        let analytic = backprop_through_integration(&self.field, &tape, &self.config, &l.gradient).unwrap();
        let base = self.assignments(&self.field);
        let eps = 1e-6;
        let (mut num, mut den) = (0.0, 0.0);
        for n in 0..self.field.grid().node_count() {
            for c in 0..3 {
                let mut up = self.field.clone();
                up.data_mut()[n][c] += eps;
                let mut down = self.field.clone();
                down.data_mut()[n][c] -= eps;
                if self.assignments(&up) != base || self.assignments(&down) != base {
                    continue;
                }
                let fd = (self.total(&up) - self.total(&down)) / (2.0 * eps);
                num += (fd - analytic[n][c]).powi(2);
                den += fd * fd;
            }
        }
        (num / den).sqrt()
    }
}

fn gradient_correctness() -> Outcome {
    let mut worst = BTreeMap::new();
    for method in [Method::Euler, Method::Rk4] {
        for seed in 0..10 {
            let err = GradientProblem::random(100 + seed, method).relative_error();
            ensure!(err <= 1e-4, "{method} config {seed}: relative error {err:.3e}");
            let w = worst.entry(method.to_string()).or_insert(0.0f64);
            *w = w.max(err);
        }
    }
    Ok(format!("worst relative error {worst:?}"))
}

fn white_to_pial() -> Outcome {
    let template = primitives::icosphere(3, 1.0);
    let white_target = primitives::wrinkled_sphere(5, 1.0, 0.2, 6.0);
    let pial_target = primitives::wrinkled_sphere(5, 1.08, 0.2, 6.0);
    let stage = |resolution| FitConfig {
        resolution,
        iterations: 100,
        ..FitConfig::default()
    };
    let mut wins = 0;
    let mut summary = Vec::new();
    for rep in 0..10u64 {
        let config = PipelineConfig {
            white_stages: vec![stage(16), stage(24), stage(32)],
            pial_stages: vec![stage(24)],
            loss: LossConfig {
                target_samples: 4000,
                ..LossConfig::default()
            },
            frame_padding: 0.1,
            seed: rep,
        };
        let fitted = fit_pipeline(&white_target, &pial_target, &[template.clone()], &config).unwrap();
        let white = &fitted.white.output;
        let pial = &fitted.pial.output;
        ensure!(
            white.tags().is_some() && white.tags() == pial.tags() && white.same_connectivity(pial),
            "rep {rep}: white and pial correspondence differs"
        );
        let frame = fit_frame(&[&template, &white_target, &pial_target], config.frame_padding);
        let cloud = TargetCloud::sample(&pial_target, config.loss.target_samples, rep + 1).unwrap();
        let baseline = fit_chain(&[template.clone()], &cloud, &frame, &config.pial_stages, &config.loss).unwrap();
        let score = |m: &TriangleMesh| evaluate_surfaces(m, &pial_target, 50_000, rep).unwrap().chamfer_mm;
        let (seeded, from_template) = (score(pial), score(&baseline.output));
        if seeded <= from_template {
            wins += 1;
        }
        summary.push(format!("{seeded:.4}/{from_template:.4}"));
    }
    ensure!(wins >= 9, "white-seeded wins {wins}/10 ({})", summary.join(" "));
    Ok(format!(
        "white-seeded pial Chamfer <= template-seeded in {wins}/10 ({}), tags equal",
        summary.join(" ")
    ))
}

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect()
}

/// Runs `args` (with `{out}` replaced by a fresh directory) twice at each
/// thread count and compares stdout and every written file.
fn same_everywhere(work: &Path, name: &str, args: &[&str]) -> Result<(), String> {
    let mut reference: Option<(Vec<u8>, BTreeMap<String, Vec<u8>>)> = None;
    for (k, threads) in [1, 1, 4, 4].into_iter().enumerate() {
        let out = work.join(format!("{name}_{k}"));
        fs::create_dir_all(&out).unwrap();
        let full: Vec<String> = args.iter().map(|a| a.replace("{out}", s(&out))).collect();
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        let o = run_with_threads(threads, &refs);
        ensure!(code(&o) == 0, "{name}: exit {} {}", code(&o), String::from_utf8_lossy(&o.stderr));
        let got = (o.stdout, dir_contents(&out));
        ensure!(!got.1.is_empty() || !got.0.is_empty(), "{name}: no output");
        match &reference {
            None => reference = Some(got),
            Some(r) => ensure!(*r == got, "{name}: run {k} ({threads} threads) differs"),
        }
    }
    Ok(())
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let work = tmp.path();
    let sphere = primitives::icosphere(2, 1.0);
    let a = save(work, "a.ply", &sphere.map_vertices(|v| v + Vec3::new(0.4, 0.0, 0.0)));
    let b = save(work, "b.ply", &sphere.map_vertices(|v| v - Vec3::new(0.4, 0.0, 0.0)));
    let white = save(work, "white.ply", &primitives::wrinkled_sphere(3, 1.0, 0.05, 4.0));
    let pial = save(work, "pial.ply", &primitives::wrinkled_sphere(3, 1.25, 0.05, 4.0));
    let rot = work.join("rot");
    AnalyticFlow::rotation(Vec3::z(), 0.7, Vec3::zeros())
        .sample(GridSpec::cube(16, -2.0, 2.0).unwrap())
        .unwrap()
        .save(&rot)
        .unwrap();
    let manifest = ChainManifest {
        seed: SeedEntry {
            path: "a.ply".into(),
            kind: SeedKind::Template,
        },
        stages: vec![StageEntry {
            flow: "rot".into(),
            method: Method::Rk4,
            n_steps: 30,
            total_time: 1.0,
        }],
    };
    let chain = work.join("chain.json");
    manifest.save(&chain).unwrap();

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("build-template", vec!["build-template", s(&a), s(&b), "-o", "{out}", "--resolution", "32", "--levels", "2"]),
        ("deform", vec!["deform", "--chain", s(&chain), "-o", "{out}/out.ply", "--intermediates", "{out}"]),
        (
            "fit",
            vec![
                "--seed", "7", "fit", "--template", s(&a), "--white", s(&white), "--pial", s(&pial), "-o", "{out}",
                "--iterations", "8", "--samples", "1500",
            ],
        ),
        ("metrics", vec!["--seed", "7", "metrics", s(&white), s(&pial), "--samples", "20000"]),
        ("metrics-csv", vec!["metrics", s(&white), s(&pial), "--format", "csv", "-o", "{out}/m.csv"]),
        ("gen-field", vec!["gen-field", "rotation", "--params", "0,1,0,0.8", "--dims", "9", "-o", "{out}/f"]),
    ];
    let mut times = Vec::new();
    for (name, args) in &commands {
        let start = Instant::now();
        same_everywhere(work, name, args)?;
        times.push(format!("{name} {:.1?}", start.elapsed()));
    }
    Ok(format!("byte-identical over 2 runs x threads {{1, 4}}: {}", times.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 8] = [
        ("1 convergence order", convergence_order, Some(Duration::from_secs(10))),
        ("2 RK4 beats Euler at 30 steps", rk4_beats_euler, Some(Duration::from_secs(60))),
        ("3 diffeomorphism properties", diffeomorphism_properties, None),
        ("4 template pipeline", template_pipeline, Some(Duration::from_secs(120))),
        ("5 metric oracle equivalence", metric_oracles, Some(Duration::from_secs(60))),
        ("6 gradient correctness", gradient_correctness, Some(Duration::from_secs(120))),
        ("7 white-to-pial seeding", white_to_pial, Some(Duration::from_secs(600))),
        ("8 determinism", determinism, None),
    ];
    let mut failed = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if budget.is_some_and(|b| elapsed > b) => {
                Err(format!("{msg}; over the {:.0?} budget", budget.unwrap()))
            }
            other => other,
        };
        match outcome {
            Ok(msg) => println!("criterion {name}: PASS ({msg}; {elapsed:.1?})"),
            Err(msg) => {
                failed += 1;
                println!("criterion {name}: FAIL ({msg}; {elapsed:.1?})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
