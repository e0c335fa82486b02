//! `ssdr` command-line front end.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ssdr::gbuffer::GBuffer;
use ssdr::gradcheck::{gradcheck, GradCheckConfig, GradCheckError};
use ssdr::image::ImageBuffer;
use ssdr::inverse::{optimize, InverseError, LossConfig, ParamSet};
use ssdr::io::{write_json, write_pfm, write_png_preview, Bundle, LightSpec};
use ssdr::render::{render_discretized, render_mc, render_reference, RenderConfig, RenderError};
use ssdr::scene::{write_learned_assets, Scene, SceneKind, REFERENCE_RES};

#[derive(Parser)]
#[command(name = "ssdr", version, about = "Screen-space differentiable re-rendering")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo re-render of a bundle.
    Render(RenderArgs),
    /// Compare adjoint gradients with finite differences on an 8x8 patch.
    Gradcheck(GradcheckArgs),
    /// Write an analytic test bundle.
    MakeScene(MakeSceneArgs),
    /// Monte Carlo against the fixed-grid baseline and the reference.
    BaselineCompare(BaselineArgs),
    /// Recover materials or lighting from the bundle's target image.
    Optimize(OptimizeArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Lighting {
    Constant,
    Sky,
    Sun,
    Grid,
    Learned,
}

impl Lighting {
    fn kind(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Sky => "sky",
            Self::Sun => "sun",
            Self::Grid => "grid",
            Self::Learned => "learned",
        }
    }
}

#[derive(Args)]
struct Sampling {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Light field; defaults to the first one listed in the bundle.
    #[arg(long, value_enum)]
    lighting: Option<Lighting>,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Defaults to an in-memory two-plane scene.
    #[arg(long)]
    bundle: Option<PathBuf>,
    /// Directory for `gradcheck.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    spp: usize,
    #[arg(long, default_value = "a,r,m,n", value_parser = parse_params)]
    params: ParamSet,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct MakeSceneArgs {
    #[arg(value_parser = SceneKind::from_str)]
    kind: SceneKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Per-lobe quadrature resolution of the reference image; 0 skips it.
    #[arg(long, default_value_t = REFERENCE_RES)]
    ref_res: usize,
    /// Also write randomly initialised learned-lighting assets.
    #[arg(long)]
    learned: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    spp: usize,
    /// Baseline grid, polar x azimuthal cells.
    #[arg(long, default_value = "16x32", value_parser = parse_grid)]
    grid: (usize, usize),
    /// Reference resolution when the bundle carries no reference image.
    #[arg(long, default_value_t = 256)]
    ref_res: usize,
    #[command(flatten)]
    sampling: Sampling,
}

#[derive(Args)]
struct OptimizeArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "a,r", value_parser = parse_params)]
    params: ParamSet,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 16)]
    spp: usize,
    #[arg(long, default_value_t = 0.02)]
    lr: f64,
    /// One value per material class instead of one per pixel.
    #[arg(long)]
    shared: bool,
    /// Keep the bundle's material maps as the starting point instead of
    /// resetting the optimised ones to constants.
    #[arg(long)]
    keep_init: bool,
    #[command(flatten)]
    sampling: Sampling,
}

fn parse_params(s: &str) -> Result<ParamSet, String> {
    s.parse().map_err(|e: InverseError| e.to_string())
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let n = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    Ok((n(a)?, n(b)?))
}

/// Exit status 2 for bad input, 1 for numerical failure.
enum Failure {
    Input(anyhow::Error),
    Numeric(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Input(e.into())
    }
}

fn render_failure(e: RenderError) -> Failure {
    match e {
        RenderError::NonFinite { .. } => Failure::Numeric(e.into()),
        _ => Failure::Input(e.into()),
    }
}

fn inverse_failure(e: InverseError) -> Failure {
    match e {
        InverseError::NonFiniteLoss { .. }
        | InverseError::Render {
            source: RenderError::NonFinite { .. },
            ..
        } => Failure::Numeric(e.into()),
        _ => Failure::Input(e.into()),
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SSDR_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = with_threads(cli.threads, || match cli.command {
        Command::Render(a) => cmd_render(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::MakeScene(a) => cmd_make_scene(a),
        Command::BaselineCompare(a) => cmd_baseline_compare(a),
        Command::Optimize(a) => cmd_optimize(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

#[cfg(feature = "parallel")]
fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CmdResult + Send) -> CmdResult {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            return Err(Failure::Input(anyhow!("--threads must be at least 1")));
        }
        b = b.num_threads(n);
    }
    let pool = b.build()?;
    log::info!("using {} threads", pool.current_num_threads());
    pool.install(f)
}

#[cfg(not(feature = "parallel"))]
fn with_threads(threads: Option<usize>, f: impl FnOnce() -> CmdResult) -> CmdResult {
    if threads.is_some_and(|n| n > 1) {
        log::warn!("built without the parallel feature; --threads ignored");
    }
    f()
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn load_bundle(dir: &Path) -> Result<Bundle, Failure> {
    let b = Bundle::load(dir)?;
    check_gbuffer(&b.gbuffer)?;
    Ok(b)
}

fn check_gbuffer(g: &GBuffer) -> CmdResult {
    let report = g.validate()?;
    if report.is_empty() {
        return Ok(());
    }
    for issue in report.issues.iter().take(10) {
        eprintln!("  ({}, {}): {:?}", issue.x, issue.y, issue.violation);
    }
    Err(Failure::Input(anyhow!(
        "G-buffer failed validation with {} issues",
        report.len()
    )))
}

fn light_spec(b: &Bundle, choice: Option<Lighting>) -> Result<LightSpec, Failure> {
    Ok(match choice {
        Some(l) => b.light_spec(l.kind())?,
        None => b.default_light_spec(),
    })
}

fn render_config(spp: usize, seed: u64, b: &Bundle) -> RenderConfig {
    RenderConfig {
        brdf_model: b.manifest.brdf_model,
        ..RenderConfig::new(spp, seed)
    }
}

fn write_image(dir: &Path, stem: &str, img: &ImageBuffer) -> CmdResult {
    write_pfm(&dir.join(format!("{stem}.pfm")), img)?;
    write_png_preview(&dir.join(format!("{stem}.png")), img, 1.0)?;
    Ok(())
}

#[derive(Serialize)]
struct RenderStats {
    time_s: f64,
    spp: usize,
    seed: u64,
    lighting: &'static str,
    width: usize,
    height: usize,
    mean_luminance: f64,
}

fn cmd_render(a: RenderArgs) -> CmdResult {
    let b = load_bundle(&a.bundle)?;
    let spec = light_spec(&b, a.sampling.lighting)?;
    let light = b.load_light(&spec)?;
    let cfg = render_config(a.spp, a.sampling.seed, &b);
    let t = Instant::now();
    let img = render_mc(&b.gbuffer, &b.camera, &*light, &cfg).map_err(render_failure)?;
    let time_s = t.elapsed().as_secs_f64();
    create_dir(&a.out)?;
    write_image(&a.out, "rerender", &img)?;
    let stats = RenderStats {
        time_s,
        spp: a.spp,
        seed: a.sampling.seed,
        lighting: spec.kind(),
        width: b.camera.width,
        height: b.camera.height,
        mean_luminance: img.mean_luminance(),
    };
    write_json(&a.out.join("stats.json"), &stats)?;
    println!(
        "rendered {}x{} at {} spp in {:.3} s, mean luminance {:.6}",
        stats.width, stats.height, stats.spp, stats.time_s, stats.mean_luminance
    );
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> CmdResult {
    let b = match &a.bundle {
        Some(dir) => load_bundle(dir)?,
        None => {
            let s = Scene::new(SceneKind::TwoPlane);
            let mut b = Bundle::new(PathBuf::new(), s.gbuffer(), s.camera);
            b.manifest.brdf_model = s.brdf_model;
            b.manifest.lights = s.lights.clone();
            b
        }
    };
    let spec = light_spec(&b, a.sampling.lighting)?;
    let mut light = b.load_light(&spec)?;
    let cfg = GradCheckConfig {
        params: a.params,
        render: render_config(a.spp, a.sampling.seed, &b),
        ..Default::default()
    };
    let report = gradcheck(&b.gbuffer, &b.camera, &mut *light, &cfg).map_err(|e| match e {
        GradCheckError::Render(r) => render_failure(r),
        other => Failure::Input(other.into()),
    })?;
    print!("{report}");
    if let Some(out) = &a.out {
        create_dir(out)?;
        write_json(&out.join("gradcheck.json"), &report)?;
    }
    if report.passes(a.tol) {
        println!("PASS (tol {:e})", a.tol);
        Ok(())
    } else {
        println!("FAIL (tol {:e})", a.tol);
        Err(Failure::Numeric(anyhow!(
            "max relative error {:e} exceeds {:e}",
            report.max_rel_error(),
            a.tol
        )))
    }
}

fn cmd_make_scene(a: MakeSceneArgs) -> CmdResult {
    let mut scene = Scene::new(a.kind);
    if a.width.is_some() || a.height.is_some() {
        let w = a.width.unwrap_or(scene.camera.width);
        let h = a.height.unwrap_or(scene.camera.height);
        if w == 0 || h == 0 {
            return Err(Failure::Input(anyhow!("image size must be non-zero")));
        }
        scene = Scene::with_size(a.kind, w, h);
    }
    let cfg = RenderConfig::new(1, a.seed);
    let reference = (a.ref_res > 0).then_some(a.ref_res);
    let t = Instant::now();
    let mut bundle = scene
        .write_bundle(&a.out, reference, &cfg)
        .map_err(|e| match e {
            ssdr::scene::SceneError::Render(r) => render_failure(r),
            other => Failure::Input(other.into()),
        })?;
    if a.learned {
        let spec = write_learned_assets(&a.out, scene.camera.width, scene.camera.height, a.seed)?;
        bundle.manifest.lights.push(LightSpec::Learned(spec));
        bundle.save()?;
    }
    if let Some(r) = &bundle.reference {
        write_png_preview(&a.out.join("reference.png"), r, 1.0)?;
    }
    println!(
        "wrote {} ({}x{}) to {} in {:.2} s",
        a.kind,
        scene.camera.width,
        scene.camera.height,
        a.out.display(),
        t.elapsed().as_secs_f64()
    );
    Ok(())
}

fn mse(a: &ImageBuffer, b: &ImageBuffer) -> f64 {
    let n = a.data().len().max(1) as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

fn side_by_side(images: &[&ImageBuffer]) -> ImageBuffer {
    let w = images[0].width();
    let h = images[0].height();
    ImageBuffer::from_fn(w * images.len(), h, 3, |x, y, c| images[x / w].get(x % w, y, c))
}

fn cmd_baseline_compare(a: BaselineArgs) -> CmdResult {
    let b = load_bundle(&a.bundle)?;
    let spec = light_spec(&b, a.sampling.lighting)?;
    let light = b.load_light(&spec)?;
    let cfg = render_config(a.spp, a.sampling.seed, &b);
    let first = b.manifest.lights.first().map(LightSpec::kind);
    let reference = match &b.reference {
        Some(r) if first == Some(spec.kind()) => r.clone(),
        _ => render_reference(&b.gbuffer, &b.camera, &*light, a.ref_res, &cfg).map_err(render_failure)?,
    };
    let mc = render_mc(&b.gbuffer, &b.camera, &*light, &cfg).map_err(render_failure)?;
    let disc = render_discretized(&b.gbuffer, &b.camera, &*light, a.grid, &cfg).map_err(render_failure)?;
    create_dir(&a.out)?;
    write_image(&a.out, "mc", &mc)?;
    write_image(&a.out, "discretized", &disc)?;
    write_image(&a.out, "reference", &reference)?;
    write_png_preview(&a.out.join("side_by_side.png"), &side_by_side(&[&mc, &disc, &reference]), 1.0)?;
    let (mse_mc, mse_disc) = (mse(&mc, &reference), mse(&disc, &reference));
    let path = a.out.join("errors.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["method", "setting", "mse"])?;
    w.write_record(["mc", &format!("spp={}", a.spp), &format!("{mse_mc:.9e}")])?;
    w.write_record([
        "discretized",
        &format!("grid={}x{}", a.grid.0, a.grid.1),
        &format!("{mse_disc:.9e}"),
    ])?;
    w.flush()?;
    println!("method       setting        mse");
    println!("mc           spp={:<10} {mse_mc:.6e}", a.spp);
    println!("discretized  grid={:<9} {mse_disc:.6e}", format!("{}x{}", a.grid.0, a.grid.1));
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, Failure> {
    Ok(csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?)
}

/// Starting values for optimised material maps.
const INIT_ALBEDO: f64 = 0.5;
const INIT_ROUGHNESS: f64 = 0.5;
const INIT_METALLIC: f64 = 0.5;

fn initial_guess(g: &GBuffer, params: ParamSet) -> GBuffer {
    let mut g = g.clone();
    if params.albedo {
        g.albedo.data_mut().fill(INIT_ALBEDO);
    }
    if params.roughness {
        g.roughness.data_mut().fill(INIT_ROUGHNESS);
    }
    if params.metallic {
        g.metallic.data_mut().fill(INIT_METALLIC);
    }
    g
}

fn cmd_optimize(a: OptimizeArgs) -> CmdResult {
    let b = load_bundle(&a.bundle)?;
    let target = b
        .target
        .as_ref()
        .or(b.reference.as_ref())
        .ok_or_else(|| anyhow!("bundle has neither a target nor a reference image"))?;
    let spec = light_spec(&b, a.sampling.lighting)?;
    let mut light = b.load_light(&spec)?;
    let loss = LossConfig {
        iterations: a.iters,
        learning_rate: a.lr,
        params: a.params,
        shared: a.shared,
        ..Default::default()
    };
    let cfg = render_config(a.spp, a.sampling.seed, &b);
    let init = if a.keep_init {
        b.gbuffer.clone()
    } else {
        initial_guess(&b.gbuffer, a.params)
    };
    let result = optimize(&init, &b.camera, &mut *light, target, &loss, &cfg).map_err(inverse_failure)?;
    let mut out = Bundle::new(&a.out, result.gbuffer.clone(), b.camera);
    out.manifest.brdf_model = b.manifest.brdf_model;
    out.manifest.lights = b.manifest.lights.iter().filter(|s| s.analytic().is_some()).cloned().collect();
    out.target = Some(target.clone());
    out.save()?;
    let path = a.out.join("loss.csv");
    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    result.write_csv(file)?;
    let img = render_mc(&result.gbuffer, &b.camera, &*light, &cfg).map_err(render_failure)?;
    write_image(&a.out, "rerender", &img)?;
    if a.params.light {
        write_json(&a.out.join("light_params.json"), &result.light_params)?;
    }
    println!(
        "loss {:.6e} -> {:.6e} over {} iterations",
        result.initial_loss(),
        result.final_loss(),
        a.iters
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_flag_parses() {
        assert_eq!(parse_grid("16x32"), Ok((16, 32)));
        assert!(parse_grid("16").is_err());
        assert!(parse_grid("ax2").is_err());
    }

    #[test]
    fn params_flag_rejects_unknown_names() {
        assert!(parse_params("a,r,q").is_err());
        assert_eq!(parse_params("light").unwrap().to_string(), "light");
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
