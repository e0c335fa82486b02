use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ssdr::image::ImageBuffer;
use ssdr::io::{read_pfm, Bundle};

fn ssdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssdr"))
        .args(args)
        .output()
        .expect("spawn ssdr")
}

fn ok(args: &[&str]) -> String {
    let out = ssdr(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn make_scene(dir: &Path, kind: &str, extra: &[&str]) {
    let mut args = vec!["make-scene", kind, "--out", p(dir)];
    args.extend_from_slice(extra);
    ok(&args);
}

fn stats(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("stats.json")).unwrap()).unwrap()
}

#[test]
fn lambertian_plane_renders_albedo_times_light() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, out) = (tmp.path().join("plane"), tmp.path().join("out"));
    make_scene(&scene, "plane", &["--ref-res", "0"]);
    ok(&["render", "--bundle", p(&scene), "--out", p(&out), "--spp", "16", "--lighting", "constant"]);
    let s = stats(&out);
    assert!((s["mean_luminance"].as_f64().unwrap() - 0.5).abs() < 1e-3, "{s}");
    assert_eq!(s["spp"], 16);
    assert_eq!(s["lighting"], "constant");
    assert!(out.join("rerender.png").exists());
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("s");
    make_scene(&scene, "two-plane", &["--width", "16", "--height", "12", "--ref-res", "0"]);
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        ok(&["render", "--bundle", p(&scene), "--out", p(&out), "--spp", "1", "--seed", seed]);
        fs::read(out.join("rerender.pfm")).unwrap()
    };
    let (a, b, c) = (run("a", "7"), run("b", "7"), run("c", "8"));
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn missing_depth_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("s");
    make_scene(&scene, "plane", &["--ref-res", "0"]);
    fs::remove_file(scene.join("depth.pfm")).unwrap();
    let out = ssdr(&["render", "--bundle", p(&scene), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing map"));
}

#[test]
fn invalid_normals_are_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("s");
    make_scene(&scene, "plane", &["--ref-res", "0"]);
    let n = ImageBuffer::filled(64, 64, 3, 0.0);
    ssdr::io::write_pfm(&scene.join("normal.pfm"), &n).unwrap();
    let out = ssdr(&["render", "--bundle", p(&scene), "--out", p(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gradcheck_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let stdout = ok(&["gradcheck", "--out", p(tmp.path())]);
    assert!(stdout.contains("PASS"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);

    let fail = ssdr(&["gradcheck", "--params", "a", "--tol", "0"]);
    assert_eq!(fail.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&fail.stdout).contains("FAIL"));

    let usage = ssdr(&["gradcheck", "--params", "a,q"]);
    assert_eq!(usage.status.code(), Some(2));
}

#[test]
fn gradcheck_covers_light_parameters() {
    ok(&["gradcheck", "--params", "light", "--lighting", "sky"]);
}

#[test]
fn make_scene_writes_analytic_maps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("glossy");
    make_scene(&dir, "glossy-floor", &["--width", "16", "--height", "12", "--ref-res", "8", "--learned"]);
    for f in ["albedo.pfm", "normal.pfm", "depth.pfm", "roughness.pfm", "metallic.pfm", "camera.json", "bundle.json", "reference.pfm", "reference.png", "grid.json", "grid.bin"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let b = Bundle::load(&dir).unwrap();
    let kinds: Vec<&str> = b.manifest.lights.iter().map(|l| l.kind()).collect();
    assert_eq!(kinds, ["sun", "constant", "grid", "learned"]);
    let floor: Vec<f64> = (0..b.gbuffer.pixel_count())
        .filter(|&i| b.gbuffer.metallic.data()[i] == 1.0)
        .map(|i| b.gbuffer.roughness.data()[i])
        .collect();
    assert!(!floor.is_empty());
    // maps are stored as f32
    assert!(floor.iter().all(|&r| r == 0.1f32 as f64));
    // every lighting kind renders
    for l in ["sun", "constant", "sky", "grid", "learned"] {
        ok(&["render", "--bundle", p(&dir), "--out", p(&tmp.path().join(l)), "--spp", "2", "--lighting", l]);
    }
}

#[test]
fn cornell_reference_is_exact_under_constant_light() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    make_scene(&dir, "cornell-like", &["--width", "16", "--height", "12", "--ref-res", "16"]);
    let b = Bundle::load(&dir).unwrap();
    let r = b.reference.unwrap();
    for (x, a) in r.data().iter().zip(b.gbuffer.albedo.data()) {
        assert!((x - a).abs() < 1e-3);
    }
}

#[test]
fn unknown_lighting_in_bundle_is_an_input_error() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("c");
    make_scene(&dir, "plane", &["--ref-res", "0"]);
    let out = ssdr(&["render", "--bundle", p(&dir), "--out", p(&tmp.path().join("o")), "--lighting", "learned"]);
    assert_eq!(out.status.code(), Some(2));
}

fn csv_mse(path: &Path) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap()[2].parse().unwrap()).collect()
}

#[test]
fn baseline_compare_on_lambertian_scene() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, out) = (tmp.path().join("c"), tmp.path().join("o"));
    make_scene(&dir, "cornell-like", &["--width", "16", "--height", "12", "--ref-res", "32"]);
    let stdout = ok(&["baseline-compare", "--bundle", p(&dir), "--out", p(&out), "--spp", "64"]);
    assert!(stdout.contains("discretized"));
    let mse = csv_mse(&out.join("errors.csv"));
    assert_eq!(mse.len(), 2);
    // constant light: both estimators are exact up to roundoff
    let reference = read_pfm(&out.join("reference.pfm")).unwrap();
    for name in ["mc.pfm", "discretized.pfm"] {
        let img = read_pfm(&out.join(name)).unwrap();
        for (x, r) in img.data().iter().zip(reference.data()) {
            assert!((x - r).abs() <= 0.01 * r.max(1e-3), "{name}: {x} vs {r}");
        }
    }
    let side = image_dims(&out.join("side_by_side.png"));
    assert_eq!(side, (48, 12));
}

#[test]
fn dense_grid_on_diffuse_scene_is_no_worse_than_twice_mc() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, out) = (tmp.path().join("c"), tmp.path().join("o"));
    make_scene(&dir, "cornell-like", &["--width", "16", "--height", "12", "--ref-res", "0"]);
    ok(&[
        "baseline-compare", "--bundle", p(&dir), "--out", p(&out), "--lighting", "sky", "--grid", "64x128",
        "--spp", "256", "--ref-res", "128",
    ]);
    let mse = csv_mse(&out.join("errors.csv"));
    assert!(mse[1] <= 2.0 * mse[0], "{mse:?}");
}

fn image_dims(path: &Path) -> (u32, u32) {
    // PNG IHDR: width and height are big-endian at bytes 16..24
    let b = fs::read(path).unwrap();
    let be = |i: usize| u32::from_be_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    (be(16), be(20))
}

#[test]
fn optimize_recovers_lambertian_albedo() {
    let tmp = tempfile::tempdir().unwrap();
    let (dir, out) = (tmp.path().join("c"), tmp.path().join("o"));
    make_scene(&dir, "cornell-like", &["--width", "16", "--height", "12", "--ref-res", "8"]);
    ok(&[
        "optimize", "--bundle", p(&dir), "--out", p(&out), "--params", "a", "--iters", "150", "--spp", "4",
        "--lr", "0.05",
    ]);
    let truth = Bundle::load(&dir).unwrap();
    let fit = Bundle::load(&out).unwrap();
    let worst = fit
        .gbuffer
        .albedo
        .data()
        .iter()
        .zip(truth.gbuffer.albedo.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 0.02, "max albedo error {worst}");
    let mut r = csv::Reader::from_path(out.join("loss.csv")).unwrap();
    let losses: Vec<f64> = r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect();
    // the initial point plus one row per iteration
    assert_eq!(losses.len(), 151);
    assert!(losses[150] < 1e-3 * losses[0]);
    assert!(out.join("rerender.pfm").exists());
}

#[test]
fn zero_threads_is_rejected() {
    let out = ssdr(&["--threads", "0", "gradcheck"]);
    assert_eq!(out.status.code(), Some(2));
}
