//! Command-line entry points. Data and JSON go to stdout, diagnostics to
//! stderr. Exit codes: 0 success, 1 validation failure, 2 usage error,
//! 3 I/O error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::augment::{self, CameraModel, DepthMap, WarpBounds};
use crate::episode::{replay, Episode};
use crate::scene::{collect_assets, emit_mjcf, parse_mjcf, parse_scene, resolve, KinematicTree};
use crate::server::{self, ServeOptions, TickConfig, MAX_DECIMATION, MIN_DECIMATION};

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Usage(String),
    Io(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Usage(m) | CliError::Io(m) => m,
        }
    }
}

type CliResult = Result<(), CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Parser, Debug)]
#[command(name = "lucidforge", version, about = "Demonstration-data engine for robot manipulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compile a scene file to MJCF XML.
    Compile {
        scene: PathBuf,
        out: PathBuf,
        /// Copy referenced mesh/texture files next to the output.
        #[arg(long)]
        assets: bool,
    },
    /// Parse a model (MJCF `.xml` or scene file) and report its structure.
    Validate { model: PathBuf },
    /// Serve teleoperation sessions over WebSocket until interrupted.
    Serve {
        model: PathBuf,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value_t = 10,
              value_parser = clap::value_parser!(u32).range(MIN_DECIMATION as i64..=MAX_DECIMATION as i64))]
        decimation: u32,
        #[arg(long, default_value = "episodes")]
        record_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Multiply episodes by keypoint warping.
    Augment {
        episodes_glob: String,
        #[arg(long, default_value_t = 5)]
        multiplier: usize,
        /// Translation bound (m).
        #[arg(long, default_value_t = 0.02)]
        max_trans: f64,
        /// Rotation bound (rad).
        #[arg(long, default_value_t = 0.1)]
        max_rot: f64,
        #[arg(long, env = "LUCIDFORGE_SEED", default_value_t = 0)]
        seed: u64,
        out_dir: PathBuf,
    },
    /// Reproject recorded views into a second camera.
    WarpCamera {
        episode: PathBuf,
        depth_dir: PathBuf,
        cam_a: PathBuf,
        cam_b: PathBuf,
        out_dir: PathBuf,
    },
    /// Summarize episodes as JSON.
    Stats { episodes_glob: String },
    /// Print an episode's frames as JSON lines, paced by `--rate`.
    Replay {
        episode: PathBuf,
        /// Playback speed multiplier; `inf` for as fast as possible.
        #[arg(long, default_value_t = f64::INFINITY)]
        rate: f64,
    },
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

pub fn run(cmd: Command) -> CliResult {
    match cmd {
        Command::Compile { scene, out, assets } => cmd_compile(&scene, &out, assets),
        Command::Validate { model } => cmd_validate(&model),
        Command::Serve {
            model,
            port,
            decimation,
            record_dir,
            bind,
        } => cmd_serve(&model, &bind, port, decimation, record_dir),
        Command::Augment {
            episodes_glob,
            multiplier,
            max_trans,
            max_rot,
            seed,
            out_dir,
        } => cmd_augment(&episodes_glob, multiplier, max_trans, max_rot, seed, &out_dir),
        Command::WarpCamera {
            episode,
            depth_dir,
            cam_a,
            cam_b,
            out_dir,
        } => cmd_warp_camera(&episode, &depth_dir, &cam_a, &cam_b, &out_dir),
        Command::Stats { episodes_glob } => cmd_stats(&episodes_glob),
        Command::Replay { episode, rate } => cmd_replay(&episode, rate),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn compile_scene(text: &str) -> Result<String, CliError> {
    let doc = parse_scene(text).map_err(|e| CliError::Validation(e.to_string()))?;
    let doc = resolve(&doc).map_err(|e| CliError::Validation(e.to_string()))?;
    emit_mjcf(&doc).map_err(|e| CliError::Validation(e.to_string()))
}

pub fn cmd_compile(scene: &Path, out: &Path, assets: bool) -> CliResult {
    let text = read_text(scene)?;
    let xml = compile_scene(&text).map_err(|e| match e {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", scene.display())),
        other => other,
    })?;
    write_bytes(out, xml.as_bytes())?;
    let mut copied = Vec::new();
    if assets {
        let base = scene.parent().unwrap_or(Path::new("."));
        let found = collect_assets(&xml, base).map_err(|e| CliError::Validation(e.to_string()))?;
        if let Some(m) = found.missing.first() {
            return Err(CliError::Io(format!("missing asset {}", m.display())));
        }
        let dest_dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
        for f in &found.files {
            let rel = f.strip_prefix(base).unwrap_or(f);
            let dest = dest_dir.join(rel);
            if dest != *f {
                if let Some(d) = dest.parent() {
                    fs::create_dir_all(d).map_err(|e| io_err(d, e))?;
                }
                fs::copy(f, &dest).map_err(|e| io_err(f, e))?;
            }
            copied.push(dest.display().to_string());
        }
    }
    print_json(&json!({
        "output": out.display().to_string(),
        "bytes": xml.len(),
        "assets": copied,
    }));
    Ok(())
}

/// Load a model: `.xml` files are MJCF, anything else is compiled as a
/// scene first. Returns the tree with `(scene_hash, model_hash)`.
pub fn load_model(path: &Path) -> Result<(KinematicTree, String, String), CliError> {
    let text = read_text(path)?;
    let is_xml = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("xml"));
    let xml = if is_xml { text.clone() } else { compile_scene(&text)? };
    let tree = parse_mjcf(&xml).map_err(|e| CliError::Validation(e.to_string()))?;
    tree.validate().map_err(CliError::Validation)?;
    Ok((tree, sha256_hex(text.as_bytes()), sha256_hex(xml.as_bytes())))
}

pub fn cmd_validate(model: &Path) -> CliResult {
    let (tree, scene_hash, model_hash) = load_model(model)?;
    for w in &tree.warnings {
        eprintln!("warning: {w}");
    }
    print_json(&json!({
        "bodies": tree.bodies.len(),
        "joints": tree.joints.len(),
        "dof": tree.dof(),
        "sites": tree.sites.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
        "mocap_bodies": tree.mocap_bodies.iter().map(|m| m.name.clone()).collect::<Vec<_>>(),
        "warnings": tree.warnings,
        "scene_hash": scene_hash,
        "model_hash": model_hash,
    }));
    Ok(())
}

pub fn cmd_serve(model: &Path, bind: &str, port: u16, decimation: u32, record_dir: PathBuf) -> CliResult {
    let cfg = TickConfig::with_decimation(decimation).map_err(|e| CliError::Usage(e.to_string()))?;
    let (tree, scene_hash, model_hash) = load_model(model)?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let flag = shutdown.clone();
    ctrlc::set_handler(move || flag.store(true, Ordering::SeqCst))
        .map_err(|e| CliError::Io(format!("signal handler: {e}")))?;
    eprintln!("serving {} on {bind}:{port} (decimation {decimation})", model.display());
    let opts = ServeOptions {
        bind: bind.to_string(),
        port,
        cfg,
        record_dir,
    };
    let summary = server::serve(tree, scene_hash, model_hash, opts, shutdown, None)
        .map_err(|e| CliError::Io(e.to_string()))?;
    print_json(&json!({
        "sessions": summary.sessions,
        "episodes": summary.episodes.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }));
    Ok(())
}

/// Paths matching `pattern`, sorted.
fn expand_glob(pattern: &str) -> Result<Vec<PathBuf>, CliError> {
    let paths = glob::glob(pattern).map_err(|e| CliError::Usage(format!("bad glob '{pattern}': {e}")))?;
    let mut out = Vec::new();
    for p in paths {
        out.push(p.map_err(|e| CliError::Io(e.to_string()))?);
    }
    out.sort();
    Ok(out)
}

pub fn load_episode(path: &Path) -> Result<Episode, CliError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    decode_episode(path, &bytes)
}

fn decode_episode(path: &Path, bytes: &[u8]) -> Result<Episode, CliError> {
    Episode::load(bytes).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn cmd_augment(
    pattern: &str,
    k: usize,
    max_trans: f64,
    max_rot: f64,
    seed: u64,
    out_dir: &Path,
) -> CliResult {
    if k < 1 {
        return Err(CliError::Usage("multiplier must be at least 1".into()));
    }
    let bounds = WarpBounds::new(max_trans, max_rot).map_err(|e| CliError::Usage(e.to_string()))?;
    let paths = expand_glob(pattern)?;
    let mut raw = Vec::with_capacity(paths.len());
    let mut eps = Vec::with_capacity(paths.len());
    for p in &paths {
        let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
        eps.push(decode_episode(p, &bytes)?);
        raw.push(bytes);
    }
    let out = augment::multiply(&eps, k, bounds, seed).map_err(|e| CliError::Validation(e.to_string()))?;
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut written = Vec::new();
    for (i, ep) in out.iter().enumerate() {
        let (src, copy) = (i / k, i % k);
        let stem = paths[src]
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("episode{src}"));
        let name = if copy == 0 {
            format!("{stem}.jsonl")
        } else {
            format!("{stem}_w{copy:02}.jsonl")
        };
        let path = out_dir.join(name);
        // Re-encoding rotations can move the last digit; unchanged
        // episodes keep their source bytes.
        if *ep == eps[src] {
            write_bytes(&path, &raw[src])?;
        } else {
            let bytes = ep.save().map_err(|e| CliError::Validation(e.to_string()))?;
            write_bytes(&path, &bytes)?;
        }
        written.push(path.display().to_string());
    }
    info!("wrote {} episodes", written.len());
    print_json(&json!({
        "inputs": paths.len(),
        "outputs": written.len(),
        "seed": seed,
        "files": written,
    }));
    Ok(())
}

pub fn frame_file(dir: &Path, i: usize, ext: &str) -> PathBuf {
    dir.join(format!("frame_{i:05}.{ext}"))
}

/// For each episode frame `i`, reads `depth_dir/frame_{i:05}.depth` (and
/// `frame_{i:05}.png` if present), writes the flow to
/// `out_dir/frame_{i:05}.flow`, the warped image to `frame_{i:05}.png` and
/// its coverage mask to `frame_{i:05}_coverage.png`.
pub fn cmd_warp_camera(
    episode: &Path,
    depth_dir: &Path,
    cam_a: &Path,
    cam_b: &Path,
    out_dir: &Path,
) -> CliResult {
    let ep = load_episode(episode)?;
    let load_cam = |p: &Path| {
        CameraModel::from_json(&read_text(p)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))
    };
    let (a, b) = (load_cam(cam_a)?, load_cam(cam_b)?);
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;

    let (mut sum_mag, mut sum_du, mut sum_dv, mut valid, mut pixels) = (0.0, 0.0, 0.0, 0usize, 0usize);
    let mut coverage_sum = 0.0;
    for i in 0..ep.len() {
        let dpath = frame_file(depth_dir, i, "depth");
        let bytes = fs::read(&dpath).map_err(|e| io_err(&dpath, e))?;
        let depth = DepthMap::from_bytes(&bytes)
            .map_err(|e| CliError::Validation(format!("{}: {e}", dpath.display())))?;
        let flow = augment::reproject(&depth, &a, &b)
            .map_err(|e| CliError::Validation(format!("{}: {e}", dpath.display())))?;
        let n = flow.valid_count();
        let (mu, mv) = flow.mean();
        sum_mag += flow.mean_magnitude() * n as f64;
        sum_du += mu * n as f64;
        sum_dv += mv * n as f64;
        valid += n;
        pixels += flow.len();

        let fpath = frame_file(out_dir, i, "flow");
        let mut buf = Vec::new();
        flow.write_to(&mut buf).map_err(|e| io_err(&fpath, e))?;
        write_bytes(&fpath, &buf)?;

        let ipath = frame_file(depth_dir, i, "png");
        let img = if ipath.exists() {
            image::open(&ipath).map_err(|e| io_err(&ipath, e))?.to_rgb8()
        } else {
            image::RgbImage::new(depth.width, depth.height)
        };
        let warped = augment::warp_image(&img, &flow)
            .map_err(|e| CliError::Validation(format!("{}: {e}", ipath.display())))?;
        coverage_sum += warped.coverage_fraction();
        if ipath.exists() {
            let opath = frame_file(out_dir, i, "png");
            warped.image.save(&opath).map_err(|e| io_err(&opath, e))?;
        }
        let cpath = out_dir.join(format!("frame_{i:05}_coverage.png"));
        warped.coverage_image().save(&cpath).map_err(|e| io_err(&cpath, e))?;
    }
    let per_valid = |s: f64| if valid == 0 { 0.0 } else { s / valid as f64 };
    print_json(&json!({
        "frames": ep.len(),
        "mean_abs_flow": per_valid(sum_mag),
        "mean_du": per_valid(sum_du),
        "mean_dv": per_valid(sum_dv),
        "valid_fraction": if pixels == 0 { 0.0 } else { valid as f64 / pixels as f64 },
        "coverage": if ep.is_empty() { 0.0 } else { coverage_sum / ep.len() as f64 },
    }));
    Ok(())
}

pub fn cmd_stats(pattern: &str) -> CliResult {
    let paths = expand_glob(pattern)?;
    let mut frames = 0usize;
    let mut duration = 0.0;
    let mut boxes: BTreeMap<String, ([f64; 3], [f64; 3])> = BTreeMap::new();
    for p in &paths {
        let ep = load_episode(p)?;
        frames += ep.len();
        duration += ep.duration();
        for f in &ep.frames {
            for (name, pose) in &f.mocap {
                let x = pose.position_array();
                let e = boxes.entry(name.clone()).or_insert((x, x));
                for k in 0..3 {
                    e.0[k] = e.0[k].min(x[k]);
                    e.1[k] = e.1[k].max(x[k]);
                }
            }
        }
    }
    let bounds: BTreeMap<_, _> = boxes
        .into_iter()
        .map(|(k, (lo, hi))| (k, json!({"min": lo, "max": hi})))
        .collect();
    print_json(&json!({
        "episodes": paths.len(),
        "frames": frames,
        "duration_s": duration,
        "bounds": bounds,
    }));
    Ok(())
}

pub fn cmd_replay(path: &Path, rate: f64) -> CliResult {
    if !(rate > 0.0) {
        return Err(CliError::Usage("rate must be positive".into()));
    }
    let ep = load_episode(path)?;
    for (t, f) in replay(&ep, rate) {
        let line = json!({
            "t": t,
            "q": f.q.as_slice(),
            "mocap": f.mocap,
            "action": f.action,
            "attachments": f.attachments,
        });
        println!("{line}");
    }
    Ok(())
}
