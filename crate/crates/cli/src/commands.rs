use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use prnu_mfm::bench::{self, BenchMode};
use prnu_mfm::fingerprint::estimate;
use prnu_mfm::imgcore::{read_gray, read_raster, warp, write_raster, RasterKind, RasterMeta};
use prnu_mfm::noise::{extract, NoiseConfig};
use prnu_mfm::report::{delta_rho_fraction, AttributionReport, Decision, FrameError, FusedReport, ReportLine, Timings};
use prnu_mfm::search::{self, align_known, compensate_and_test, fuse_frames, FitnessContext, GaConfig, ReferenceContext};
use prnu_mfm::spectral::PceResult;
use prnu_mfm::{GrayImage, SimilarityParams};
use rayon::prelude::*;

use crate::config::Config;

pub struct Outputs {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    /// Flat-field exposures (PNG or PGM) of one device, all the same size.
    #[arg(required = true)]
    pub flats: Vec<PathBuf>,
    /// Raw f32 output; a JSON sidecar is written next to it.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Defaults to the output file stem.
    #[arg(long)]
    pub device_id: Option<String>,
    /// Similarity applied to the estimate: scale,angle_deg,shift_x,shift_y.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true, value_name = "S,A,TX,TY")]
    pub warp: Option<Vec<f64>>,
    /// Crop applied after the warp: x,y,width,height.
    #[arg(long, value_delimiter = ',', num_args = 1, value_name = "X,Y,W,H")]
    pub crop: Option<Vec<usize>>,
}

pub fn fingerprint(cfg: &Config, a: &FingerprintArgs) -> Result<()> {
    let mut flats = Vec::with_capacity(a.flats.len());
    for path in &a.flats {
        let img = read_gray(path)?;
        if let Some(first) = flats.first().map(GrayImage::dims) {
            if img.dims() != first {
                bail!("{}: size {:?} differs from {:?} of {}", path.display(), img.dims(), first, a.flats[0].display());
            }
        }
        flats.push(img);
    }
    let device = a.device_id.clone().unwrap_or_else(|| stem(&a.output));
    let fp = estimate(&flats, &device, &cfg.noise)?;
    let mut raster = fp.raster;
    if let Some(w) = &a.warp {
        let [s, angle, tx, ty] = w[..] else { bail!("--warp takes four values, got {}", w.len()) };
        raster = warp(&raster, &SimilarityParams::new(s, angle, tx, ty)?, raster.dims());
    }
    if let Some(c) = &a.crop {
        let [x, y, w, h] = c[..] else { bail!("--crop takes four values, got {}", c.len()) };
        raster = raster.crop(x, y, w, h)?;
    }
    let mut meta = RasterMeta::new(raster.width(), raster.height(), RasterKind::Fingerprint);
    meta.device_id = Some(device);
    meta.n_images = Some(fp.n_images);
    write_raster(&a.output, &raster, &meta)?;
    eprintln!("wrote {}x{} fingerprint from {} images to {}", meta.width, meta.height, fp.n_images, a.output.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub input: PathBuf,
    /// Raw f32 output; a JSON sidecar is written next to it.
    #[arg(short, long)]
    pub output: PathBuf,
}

pub fn extract_noise(cfg: &Config, a: &ExtractArgs) -> Result<()> {
    let residual = extract(&read_gray(&a.input)?, &cfg.noise)?.raster;
    let (w, h) = residual.dims();
    write_raster(&a.output, &residual, &RasterMeta::new(w, h, RasterKind::Residual))?;
    Ok(())
}

/// A frame ready for matching. Precomputed residual rasters carry no frame,
/// so their fingerprint is compensated without the `K * I` weighting.
struct Loaded {
    residual: GrayImage,
    frame: Option<GrayImage>,
    extract_seconds: f64,
}

fn is_raster(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("f32"))
}

fn load_frame(path: &Path, noise: &NoiseConfig) -> Result<Loaded> {
    if is_raster(path) {
        let (img, meta) = read_raster(path)?;
        if meta.kind != RasterKind::Residual {
            bail!("{}: expected a residual raster, found {:?}", path.display(), meta.kind);
        }
        return Ok(Loaded { residual: img, frame: None, extract_seconds: 0.0 });
    }
    let frame = read_gray(path)?;
    let started = Instant::now();
    let residual = extract(&frame, noise).with_context(|| path.display().to_string())?.raster;
    Ok(Loaded { residual, frame: Some(frame), extract_seconds: started.elapsed().as_secs_f64() })
}

fn load_fingerprint(path: &Path) -> Result<(GrayImage, RasterMeta)> {
    let (k, meta) = read_raster(path)?;
    if meta.kind == RasterKind::Residual {
        bail!("{}: expected a fingerprint raster, found a residual", path.display());
    }
    Ok((k, meta))
}

/// The fingerprint restricted to a frame's size: equal sizes pass through,
/// a larger fingerprint is cropped about its center.
fn fit_to(k: &GrayImage, dims: (usize, usize)) -> Result<GrayImage> {
    let (w, h) = dims;
    if k.dims() == dims {
        return Ok(k.clone());
    }
    if k.width() < w || k.height() < h {
        bail!("fingerprint is {}x{}, smaller than the {w}x{h} frame", k.width(), k.height());
    }
    Ok(k.crop((k.width() - w) / 2, (k.height() - h) / 2, w, h)?)
}

fn device_id(explicit: &Option<String>, meta: &RasterMeta, path: &Path) -> String {
    explicit.clone().or_else(|| meta.device_id.clone()).unwrap_or_else(|| stem(path))
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Frame image (PNG or PGM) or residual raster (.f32).
    pub frame: PathBuf,
    /// Fingerprint raster (.f32 with sidecar).
    #[arg(long)]
    pub fingerprint: PathBuf,
    /// Skip the shift search and read scale and rotation off at this shift.
    #[arg(long, value_delimiter = ',', num_args = 1, allow_hyphen_values = true, value_name = "CX,CY")]
    pub known_shift: Option<Vec<i32>>,
    #[arg(long)]
    pub device_id: Option<String>,
}

pub fn align(cfg: &Config, a: &AlignArgs, out: &Outputs) -> Result<()> {
    let (k, meta) = load_fingerprint(&a.fingerprint)?;
    let loaded = load_frame(&a.frame, &cfg.noise)?;
    let reference = ReferenceContext::new(&fit_to(&k, loaded.residual.dims())?, delta_rho_fraction(cfg.delta_rho))?;
    let ctx = FitnessContext::new(&reference, &loaded.residual, &cfg.ranges)?;
    let mut result = match &a.known_shift {
        Some(c) => {
            let [cx, cy] = c[..] else { bail!("--known-shift takes two values, got {}", c.len()) };
            align_known(&ctx, (cx, cy), &cfg.ga)?
        }
        None => search::align(&ctx, &cfg.ga)?,
    };
    result.pce = Some(compensate_and_test(&loaded.residual, reference.fingerprint(), &result.params, loaded.frame.as_ref())?);
    let line = serde_json::json!({
        "frame_id": a.frame.display().to_string(),
        "device_id": device_id(&a.device_id, &meta, &a.fingerprint),
        "delta_rho": cfg.delta_rho,
        "seed": cfg.ga.rng_seed,
        "alignment": result,
    });
    let mut w = sink(out.json.as_deref())?;
    writeln!(w, "{line}")?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct MatchArgs {
    /// Frames (PNG or PGM) or residual rasters (.f32) of one query.
    #[arg(required = true)]
    pub frames: Vec<PathBuf>,
    /// Fingerprint raster (.f32 with sidecar).
    #[arg(long)]
    pub fingerprint: PathBuf,
    #[arg(long)]
    pub device_id: Option<String>,
}

pub enum MatchOutcome {
    Matched,
    Unmatched,
    /// Every frame failed.
    NoFrames,
}

/// Alignment, verdict and timings of one analyzed frame.
type Analysis = (search::AlignmentResult, PceResult, Timings);

fn analyze(cfg: &Config, reference: &ReferenceContext, loaded: &Loaded, seed: u64) -> Result<Analysis> {
    let started = Instant::now();
    let ctx = FitnessContext::new(reference, &loaded.residual, &cfg.ranges)?;
    let transform = loaded.extract_seconds + started.elapsed().as_secs_f64();
    let ga = GaConfig { rng_seed: seed, ..cfg.ga.clone() };
    let result = search::align(&ctx, &ga)?;
    let pce = compensate_and_test(&loaded.residual, reference.fingerprint(), &result.params, loaded.frame.as_ref())?;
    let total = loaded.extract_seconds + started.elapsed().as_secs_f64();
    Ok((result, pce, Timings { transform, search: result.elapsed, total }))
}

pub fn match_frames(cfg: &Config, a: &MatchArgs, out: &Outputs) -> Result<MatchOutcome> {
    let (k, meta) = load_fingerprint(&a.fingerprint)?;
    let device = device_id(&a.device_id, &meta, &a.fingerprint);
    let fraction = delta_rho_fraction(cfg.delta_rho);
    let loaded: Vec<Result<Loaded>> = a.frames.par_iter().map(|p| load_frame(p, &cfg.noise)).collect();

    // One reference per distinct frame size.
    let mut sizes: Vec<(usize, usize)> = loaded.iter().flatten().map(|l| l.residual.dims()).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let references: Vec<std::result::Result<ReferenceContext, String>> = sizes
        .par_iter()
        .map(|&d| {
            let k = fit_to(&k, d)?;
            Ok(ReferenceContext::new(&k, fraction)?)
        })
        .map(|r: Result<ReferenceContext>| r.map_err(|e| format!("{e:#}")))
        .collect();

    // Each frame's optimizer runs on its own stream, offset from the base seed.
    let results: Vec<(u64, Result<Analysis>)> = loaded
        .into_par_iter()
        .enumerate()
        .map(|(i, l)| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let analyzed = l.and_then(|l| {
                let slot = sizes.binary_search(&l.residual.dims()).expect("size was collected");
                let reference = references[slot].as_ref().map_err(|e| anyhow!("{e}"))?;
                analyze(cfg, reference, &l, seed)
            });
            (seed, analyzed)
        })
        .collect();

    let mut w = sink(out.json.as_deref())?;
    let mut matched: Vec<(PceResult, String)> = Vec::new();
    let mut failed = 0;
    for (path, (seed, r)) in a.frames.iter().zip(results) {
        let frame_id = path.display().to_string();
        let line = match r {
            Ok((alignment, pce, timings)) => {
                let report = AttributionReport::new(frame_id.clone(), device.clone(), &alignment, &pce, cfg.threshold, cfg.delta_rho, timings, seed);
                matched.push((pce, frame_id));
                ReportLine::Frame(report)
            }
            Err(e) => {
                failed += 1;
                eprintln!("skipping {frame_id}: {e:#}");
                ReportLine::Error(FrameError { frame_id, error: format!("{e:#}") })
            }
        };
        writeln!(w, "{}", line.to_json())?;
    }
    let pces: Vec<PceResult> = matched.iter().map(|m| m.0).collect();
    let Ok((pce, best)) = fuse_frames(&pces) else {
        w.flush()?;
        eprintln!("no frame could be analyzed");
        return Ok(MatchOutcome::NoFrames);
    };
    let decision = Decision::from_pce(pce, cfg.threshold);
    let fused = FusedReport {
        device_id: device,
        pce,
        frame_id: matched[best].1.clone(),
        decision,
        threshold: cfg.threshold,
        frames: matched.len(),
        failed,
        seed: cfg.seed,
    };
    writeln!(w, "{}", ReportLine::Fused(fused).to_json())?;
    w.flush()?;
    Ok(if decision.is_match() { MatchOutcome::Matched } else { MatchOutcome::Unmatched })
}

fn parse_mode(s: &str) -> std::result::Result<BenchMode, String> {
    match s {
        "full" => Ok(BenchMode::Full),
        "scale-rotation" => Ok(BenchMode::ScaleRotation),
        other => Err(format!("unknown mode {other:?} (expected full or scale-rotation)")),
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    /// full or scale-rotation.
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<BenchMode>,
    /// Also test every frame against an independent fingerprint.
    #[arg(long)]
    pub impostors: bool,
}

/// Writes the per-trial CSV to `--csv` (default stdout) and the JSON summary
/// to `--json`; without `--json` the summary goes to stdout when the CSV went
/// to a file and to stderr otherwise.
pub fn bench(cfg: &Config, a: &BenchArgs, out: &Outputs) -> Result<()> {
    let mut bc = cfg.bench_config();
    bc.trials = a.trials.unwrap_or(bc.trials);
    bc.image_size = a.image_size.unwrap_or(bc.image_size);
    bc.mode = a.mode.unwrap_or(bc.mode);
    bc.impostors |= a.impostors;
    bc.validate()?;
    let outcomes = bench::run(&bc)?;
    let mut csv = sink(out.csv.as_deref())?;
    bench::write_csv(&bc, &outcomes, &mut csv)?;
    csv.flush()?;
    drop(csv);
    let summary = serde_json::to_string_pretty(&bench::summarize(&bc, &outcomes))?;
    match (&out.json, &out.csv) {
        (Some(p), _) => std::fs::write(p, summary + "\n").with_context(|| format!("writing {}", p.display()))?,
        (None, Some(_)) => println!("{summary}"),
        (None, None) => eprintln!("{summary}"),
    }
    Ok(())
}
