mod common;

use std::fs;

use common::{code, diagnostic, run, s, save};
use diffeoflow::chain::{ChainManifest, SeedEntry, SeedKind, StageEntry};
use diffeoflow::field::{rotate, AnalyticFlow, FlowField, GridSpec};
use diffeoflow::mesh_io::read_mesh;
use diffeoflow::primitives;
use diffeoflow::{Method, Vec3};

fn manifest(dir: &std::path::Path, name: &str, seed: &str, flows: &[&str]) -> std::path::PathBuf {
    let m = ChainManifest {
        seed: SeedEntry {
            path: seed.into(),
            kind: SeedKind::Template,
        },
        stages: flows
            .iter()
            .map(|f| StageEntry {
                flow: f.to_string(),
                method: Method::Rk4,
                n_steps: 30,
                total_time: 1.0,
            })
            .collect(),
    };
    let p = dir.join(name);
    m.save(&p).unwrap();
    p
}

#[test]
fn build_template_writes_family_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let sphere = primitives::icosphere(3, 1.0);
    let a = save(dir.path(), "a.ply", &sphere.map_vertices(|v| v + Vec3::new(0.6, 0.0, 0.0)));
    let b = save(dir.path(), "b.obj", &sphere.map_vertices(|v| v - Vec3::new(0.6, 0.0, 0.0)));
    let out = dir.path().join("tpl");
    let o = run(&["build-template", s(&a), s(&b), "-o", s(&out), "--resolution", "48"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for l in 0..3 {
        let m = read_mesh(&out.join(format!("template_L{l}.ply"))).unwrap();
        assert_eq!(m.euler_characteristic().unwrap(), 2);
        assert!(m.tags().is_some());
    }
    let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("template.json")).unwrap()).unwrap();
    assert_eq!(prov["inputs"].as_array().unwrap().len(), 2);
    assert_eq!(prov["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert_eq!(prov["report"]["euler_characteristic"], 2);
}

#[test]
fn build_template_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["build-template", "-o", s(dir.path())]);
    assert_eq!(code(&o), 2);
    assert_eq!(diagnostic(&o)["error"], "usage");

    let o = run(&["build-template", "/does/not/exist.ply", "-o", s(dir.path())]);
    assert_eq!(code(&o), 3);
    assert_eq!(diagnostic(&o)["error"], "io");

    let torus = save(dir.path(), "torus.ply", &primitives::torus(1.0, 0.4, 32, 16));
    let o = run(&["build-template", s(&torus), "-o", s(dir.path()), "--resolution", "32"]);
    assert_eq!(code(&o), 6);
    assert_eq!(diagnostic(&o)["error"], "topology_failure");
}

#[test]
fn deform_zero_field_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = primitives::icosphere(2, 1.0).with_sequential_tags();
    let seed = save(dir.path(), "seed.ply", &mesh);
    FlowField::zeros(GridSpec::cube(8, -2.0, 2.0).unwrap())
        .unwrap()
        .save(&dir.path().join("zero"))
        .unwrap();
    let chain = manifest(dir.path(), "chain.json", "seed.ply", &["zero"]);
    let out = dir.path().join("out.ply");
    let o = run(&["deform", "--chain", s(&chain), "-o", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&seed).unwrap());
}

#[test]
fn deform_rotation_matches_exact_flow() {
    let dir = tempfile::tempdir().unwrap();
    let mesh = primitives::icosphere(2, 1.0);
    let input = save(dir.path(), "in.obj", &mesh);
    let o = run(&[
        "gen-field", "rotation", "--params", "0,0,1,1.5707963267948966", "--dims", "33", "--origin", "-2,-2,-2",
        "--spacing", "0.125", "-o", s(&dir.path().join("rot")),
    ]);
    assert_eq!(code(&o), 0);
    let chain = manifest(dir.path(), "chain.json", "unused.ply", &["rot"]);
    let out = dir.path().join("out.ply");
    let inter = dir.path().join("inter");
    let o = run(&["deform", s(&input), "--chain", s(&chain), "-o", s(&out), "--intermediates", s(&inter)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let got = read_mesh(&out).unwrap();
    let axis = Vec3::z();
    for (a, b) in mesh.vertices().iter().zip(got.vertices()) {
        let exact = rotate(&axis, std::f64::consts::FRAC_PI_2, a);
        assert!((exact - b).norm() <= 1e-5, "{}", (exact - b).norm());
    }
    assert!(inter.join("mesh_1.ply").exists());

    // Euler override runs and differs from the RK4 result.
    let euler = dir.path().join("euler.ply");
    let o = run(&["deform", s(&input), "--chain", s(&chain), "-o", s(&euler), "--method", "euler", "--steps", "5"]);
    assert_eq!(code(&o), 0);
    assert_ne!(fs::read(&euler).unwrap(), fs::read(&out).unwrap());
}

#[test]
fn deform_frame_mismatch_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    save(dir.path(), "seed.ply", &primitives::icosphere(1, 1.0));
    FlowField::zeros(GridSpec::cube(8, -2.0, 2.0).unwrap())
        .unwrap()
        .save(&dir.path().join("a"))
        .unwrap();
    FlowField::zeros(GridSpec::cube(8, -3.0, 3.0).unwrap())
        .unwrap()
        .save(&dir.path().join("b"))
        .unwrap();
    let chain = manifest(dir.path(), "chain.json", "seed.ply", &["a", "b"]);
    let o = run(&["deform", "--chain", s(&chain), "-o", s(&dir.path().join("o.ply"))]);
    assert_eq!(code(&o), 4);
    assert_eq!(diagnostic(&o)["error"], "frame_mismatch");

    let o = run(&["deform", "--chain", s(&dir.path().join("missing.json")), "-o", "x.ply"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn metrics_reports() {
    let dir = tempfile::tempdir().unwrap();
    let inner = save(dir.path(), "inner.ply", &primitives::icosphere(4, 1.0));
    let outer = save(dir.path(), "outer.ply", &primitives::icosphere(4, 1.2));
    let self_run = run(&["metrics", s(&inner), s(&inner), "--samples", "5000"]);
    assert_eq!(code(&self_run), 0);
    let r: serde_json::Value = serde_json::from_slice(&self_run.stdout).unwrap();
    assert_eq!(r["chamfer_mm"], 0.0);
    assert_eq!(r["chamfer_normals"], 1.0);
    assert_eq!(r["sif_percent"], 0.0);

    let o = run(&["metrics", s(&inner), s(&outer), "--samples", "20000", "--seed", "3"]);
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ch = r["chamfer_mm"].as_f64().unwrap();
    assert!((ch - 0.2).abs() < 0.01, "{ch}");

    let again = run(&["metrics", s(&inner), s(&outer), "--samples", "20000", "--seed", "3"]);
    assert_eq!(o.stdout, again.stdout);

    let csv = run(&["metrics", s(&inner), s(&outer), "--samples", "100", "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn gen_field_kinds() {
    let dir = tempfile::tempdir().unwrap();
    let base = dir.path().join("t");
    let o = run(&["gen-field", "translation", "--params", "1,-2,0.5", "--dims", "4", "-o", s(&base)]);
    assert_eq!(code(&o), 0);
    let raw = fs::read(dir.path().join("t.ffraw")).unwrap();
    assert_eq!(raw.len(), 4 * 4 * 4 * 3 * 4);
    let first: Vec<u8> = raw[..12].to_vec();
    assert!(raw.chunks(12).all(|c| c == first.as_slice()));

    let base = dir.path().join("r");
    let o = run(&["gen-field", "rotation", "--params", "1,0,0,2.0", "--dims", "5,6,7", "-o", s(&base)]);
    assert_eq!(code(&o), 0);
    let f = FlowField::load(&base).unwrap();
    let oracle = AnalyticFlow::rotation(Vec3::x(), 2.0, Vec3::zeros());
    let g = *f.grid();
    assert_eq!(g.dims, [5, 6, 7]);
    for (n, v) in f.data().iter().enumerate() {
        let (i, j, k) = (n % 5, (n / 5) % 6, n / 30);
        let exact = oracle.velocity(&g.node_position(i, j, k));
        assert!((exact - v).amax() < 1e-6);
    }

    let o = run(&["gen-field", "vortex", "-o", s(&base)]);
    assert_eq!(code(&o), 2);
    let o = run(&["gen-field", "translation", "--params", "1,2", "-o", s(&base)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn fit_self_target_and_divergence() {
    let dir = tempfile::tempdir().unwrap();
    let sphere = primitives::icosphere(2, 1.0);
    let t = save(dir.path(), "t.ply", &sphere);
    let out = dir.path().join("fit");
    let o = run(&[
        "fit", "--template", s(&t), "--white", s(&t), "--pial", s(&t), "-o", s(&out), "--iterations", "30",
        "--samples", "3000",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["white_chain.json", "pial_chain.json", "loss.csv", "fit.json", "white.ply", "pial.ply"] {
        assert!(out.join(f).exists(), "{f}");
    }
    // Re-running the written chains reproduces the written meshes.
    let again = dir.path().join("again.ply");
    let o = run(&["deform", "--chain", s(&out.join("pial_chain.json")), "-o", s(&again)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(&again).unwrap(), fs::read(out.join("pial.ply")).unwrap());
    // The fitted surface stays on the target.
    let white = read_mesh(&out.join("white.ply")).unwrap();
    let report = diffeoflow::metrics::evaluate_surfaces(&white, &sphere, 20_000, 0).unwrap();
    assert!(report.chamfer_mm <= 0.01 * sphere.diameter(), "{}", report.chamfer_mm);
    assert_eq!(report.sif_count, 0);

    let o = run(&[
        "fit", "--template", s(&t), "--white", s(&t), "--pial", s(&t), "-o", s(&out), "--iterations", "80",
        "--samples", "2000", "--learning-rate", "1e5", "--clamp-voxels", "1000",
    ]);
    assert_eq!(code(&o), 5);
    assert_eq!(diagnostic(&o)["error"], "divergence_detected");
}
