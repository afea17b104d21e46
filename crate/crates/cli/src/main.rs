use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use tonebench_core::analysis::Correction;
use tonebench_core::extraction::{extract, ExtractionInput, Landmarks, Method};
use tonebench_core::face_detect::{detect_faces, select_primary_face, FaceBox};
use tonebench_core::imaging::SrgbImage;
use tonebench_core::pipeline::{self, FixtureParams, RunConfig};
use tonebench_core::recolor::{recolor, RecolorSpace, RecolorStrategy, Texture};
use tonebench_core::relight::{render_proxy, LightingConfig, RenderProxy, ShLighting};
use tonebench_core::{Error, SrgbColor};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_INTERNAL: u8 = 3;

/// Skin-tone fidelity benchmark: extract, recolor, relight, evaluate.
#[derive(Parser, Debug)]
#[command(name = "tonebench", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalOpts {
    /// JSON run configuration; flags below override it.
    #[arg(long, global = true, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Seed for k-means initialization.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Detect faces with a Haar cascade and print the boxes as JSON.
    Detect {
        image: PathBuf,
        /// Cascade XML (default: bundled frontal-face cascade).
        #[arg(long)]
        cascade: Option<PathBuf>,
    },
    /// Estimate skin color with one or more methods.
    Extract {
        photo: PathBuf,
        #[arg(long)]
        albedo: Option<PathBuf>,
        #[arg(long)]
        landmarks: Option<PathBuf>,
        /// Face box as x,y,w,h; detected when omitted.
        #[arg(long, value_parser = parse_face)]
        face: Option<FaceBox>,
        /// Methods to run (default: all applicable).
        #[arg(long = "method", value_enum)]
        methods: Vec<MethodArg>,
    },
    /// Apply a target color to a base texture.
    Recolor {
        /// Target sRGB color, "r,g,b" in [0, 1] or "#rrggbb".
        #[arg(long)]
        target: SrgbColor,
        #[arg(long, value_enum, default_value = "normalize")]
        strategy: StrategyArg,
        /// Base texture image (default: the synthetic base).
        #[arg(long)]
        base: Option<PathBuf>,
        /// Run the arithmetic on linear-light values.
        #[arg(long)]
        linear: bool,
        /// Output image (PNG or PPM); a JSON sidecar is written next to it.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Shade a texture on the proxy surface.
    Render {
        texture: PathBuf,
        /// frontal, paramount, ambient, or a path to an SH coefficient file.
        #[arg(long, default_value = "frontal")]
        lighting: String,
        #[arg(long, value_enum, default_value = "sphere")]
        proxy: ProxyArg,
        #[arg(long, default_value_t = std::f64::consts::PI)]
        exposure: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the full evaluation grid over a manifest.
    Run {
        manifest: PathBuf,
        /// Ignore and do not write the cell cache.
        #[arg(long)]
        no_cache: bool,
        /// Skip the report bundle.
        #[arg(long)]
        no_report: bool,
    },
    /// Build the report bundle from a records CSV.
    Report {
        records: PathBuf,
        #[arg(long)]
        ledger: Option<PathBuf>,
        #[arg(long, value_enum)]
        correction: Option<CorrectionArg>,
    },
    /// Write the synthetic face dataset and its manifest.
    GenFixtures {
        #[arg(long, default_value_t = 12)]
        count: usize,
        #[arg(long, default_value_t = 160)]
        size: u32,
        #[arg(long = "fixture-seed", default_value_t = 11)]
        fixture_seed: u64,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Cheek,
    Mmm,
    TCheek,
    TMmm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Cheek => Method::Cheek,
            MethodArg::Mmm => Method::Mmm,
            MethodArg::TCheek => Method::TCheek,
            MethodArg::TMmm => Method::TMmm,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StrategyArg {
    Normalize,
    Variation,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ProxyArg {
    Sphere,
    Flat,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum CorrectionArg {
    Bonferroni,
    Holm,
}

fn parse_face(s: &str) -> Result<FaceBox, String> {
    let v: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok(FaceBox::new(x, y, w, h)),
        _ => Err("expected x,y,w,h with positive width and height".into()),
    }
}

fn load_config(g: &GlobalOpts) -> Result<RunConfig, Error> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.extract.kmeans.seed = s;
    }
    if let Some(j) = g.jobs {
        cfg.jobs = j;
    }
    if let Some(o) = &g.out {
        cfg.out = o.clone();
    }
    cfg.validate().map_err(Error::invalid)?;
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) -> Result<(), Error> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    match writeln!(out, "{s}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Internal(format!("stdout: {e}"))),
        _ => Ok(()),
    }
}

fn to_json<T: serde::Serialize + ?Sized>(v: &T) -> Result<serde_json::Value, Error> {
    serde_json::to_value(v).map_err(|e| Error::Internal(e.to_string()))
}

fn cmd_detect(cfg: &RunConfig, image: &Path, cascade: Option<PathBuf>) -> Result<(), Error> {
    let mut cfg = cfg.clone();
    if cascade.is_some() {
        cfg.cascade = cascade;
    }
    let cascade = cfg.load_cascade()?;
    let img = SrgbImage::load(image)?;
    let faces = detect_faces(&img.to_luma8(), &cascade, &cfg.detect);
    print_json(&json!({
        "image": image,
        "width": img.width(),
        "height": img.height(),
        "faces": to_json(&faces)?,
        "primary": to_json(&select_primary_face(&faces))?,
    }))
}

fn cmd_extract(
    cfg: &RunConfig,
    photo: &Path,
    albedo: Option<&Path>,
    landmarks: Option<&Path>,
    face: Option<FaceBox>,
    methods: &[MethodArg],
) -> Result<(), Error> {
    let photo_img = SrgbImage::load(photo)?;
    let albedo_img = albedo.map(SrgbImage::load).transpose()?;
    let lm = landmarks.map(Landmarks::load).transpose()?;
    let methods: Vec<Method> = if methods.is_empty() {
        Method::ALL
            .into_iter()
            .filter(|m| !m.uses_albedo() || albedo_img.is_some())
            .collect()
    } else {
        methods.iter().map(|&m| m.into()).collect()
    };
    let face = match face {
        Some(f) => Some(f),
        None => {
            let cascade = cfg.load_cascade()?;
            select_primary_face(&detect_faces(&photo_img.to_luma8(), &cascade, &cfg.detect))
        }
    };
    let mut input = ExtractionInput::new(&photo_img);
    if let Some(a) = &albedo_img {
        input = input.with_albedo(a);
    }
    if let Some(l) = &lm {
        input = input.with_landmarks(l);
    }
    if let Some(f) = face {
        input = input.with_face(f);
    }
    let mut out = Vec::new();
    let mut failures = 0;
    for m in methods {
        match extract(&input, m, &cfg.extract) {
            Ok(e) => out.push(to_json(&e)?),
            Err(e) => {
                failures += 1;
                out.push(json!({ "method": m, "error": e.to_string() }));
            }
        }
    }
    print_json(&json!({ "face": to_json(&face)?, "estimates": out }))?;
    if failures > 0 && failures == out.len() {
        return Err(Error::invalid("no method produced an estimate"));
    }
    Ok(())
}

fn cmd_recolor(
    cfg: &RunConfig,
    target: SrgbColor,
    strategy: StrategyArg,
    base: Option<&Path>,
    linear: bool,
    output: &Path,
) -> Result<(), Error> {
    let (base_tex, synthetic) = match base {
        Some(p) => (Texture::load(p)?, None),
        None => (cfg.base.generate(), Some(cfg.base)),
    };
    let strategy = match strategy {
        StrategyArg::Normalize => RecolorStrategy::Normalize,
        StrategyArg::Variation => RecolorStrategy::Variation,
    };
    let space = if linear { RecolorSpace::Linear } else { cfg.recolor_space };
    let out = recolor(&base_tex, target, strategy, space)?;
    let prov = out.provenance(space, &base_tex, synthetic);
    out.save(output, &prov)?;
    print_json(&to_json(&prov)?)
}

fn cmd_render(texture: &Path, lighting: &str, proxy: ProxyArg, exposure: f64, output: &Path) -> Result<(), Error> {
    if !(exposure.is_finite() && exposure > 0.0) {
        return Err(Error::invalid(format!("exposure must be positive, got {exposure}")));
    }
    let tex = Texture::load(texture)?;
    let light = match lighting {
        "frontal" => LightingConfig::Frontal,
        "paramount" => LightingConfig::Paramount,
        "ambient" => LightingConfig::CfdSh(ShLighting::ambient(1.0)),
        path => {
            let sh = ShLighting::load(Path::new(path))?;
            if !sh.is_physical() {
                eprintln!("warning: SH band-0 coefficient is negative; environment is not physical");
            }
            LightingConfig::CfdSh(sh)
        }
    };
    let (w, h) = tex.dims();
    let proxy = match proxy {
        ProxyArg::Sphere => RenderProxy::sphere(w, h),
        ProxyArg::Flat => RenderProxy::flat(w, h),
    };
    let img = render_proxy(&tex, &light, &proxy, exposure)?;
    img.save(output)?;
    print_json(&json!({ "output": output, "lighting": lighting, "exposure": exposure }))
}

fn cmd_run(cfg: &mut RunConfig, manifest: &Path, no_cache: bool, no_report: bool) -> Result<(), Error> {
    if no_cache {
        cfg.cache = false;
    }
    let m = pipeline::load_manifest(manifest)?;
    let res = pipeline::run(&m, cfg)?;
    let t = &res.ledger.totals;
    eprintln!(
        "{} cells: {} ok, {} skipped, {} errors, {} cached; records -> {}",
        t.cells,
        t.ok,
        t.skipped,
        t.error,
        t.cache_hits,
        res.records_path.display()
    );
    if !no_report && !res.records.is_empty() {
        let dir = cfg.out.join("reports");
        pipeline::write_report(&res.records, &res.ledger.config_hash, Some(&res.ledger), &dir, cfg.correction)?;
        eprintln!("report -> {}", dir.join("index.html").display());
    }
    Ok(())
}

fn cmd_report(cfg: &RunConfig, records: &Path, ledger: Option<PathBuf>, correction: Option<CorrectionArg>) -> Result<(), Error> {
    let correction = match correction {
        Some(CorrectionArg::Bonferroni) => Correction::Bonferroni,
        Some(CorrectionArg::Holm) => Correction::Holm,
        None => cfg.correction,
    };
    let ledger = ledger.or_else(|| {
        let p = records.with_file_name("ledger.json");
        p.is_file().then_some(p)
    });
    let dir = cfg.out.join("reports");
    let bundle = pipeline::report(records, ledger.as_deref(), &dir, correction)?;
    eprintln!("{} files -> {}", bundle.files.len(), bundle.dir.display());
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Error> {
    let mut cfg = load_config(&cli.global)?;
    match cli.command {
        Command::Detect { image, cascade } => cmd_detect(&cfg, &image, cascade),
        Command::Extract {
            photo,
            albedo,
            landmarks,
            face,
            methods,
        } => cmd_extract(&cfg, &photo, albedo.as_deref(), landmarks.as_deref(), face, &methods),
        Command::Recolor {
            target,
            strategy,
            base,
            linear,
            output,
        } => cmd_recolor(&cfg, target, strategy, base.as_deref(), linear, &output),
        Command::Render {
            texture,
            lighting,
            proxy,
            exposure,
            output,
        } => cmd_render(&texture, &lighting, proxy, exposure, &output),
        Command::Run {
            manifest,
            no_cache,
            no_report,
        } => cmd_run(&mut cfg, &manifest, no_cache, no_report),
        Command::Report {
            records,
            ledger,
            correction,
        } => cmd_report(&cfg, &records, ledger, correction),
        Command::GenFixtures {
            count,
            size,
            fixture_seed,
        } => {
            let params = FixtureParams {
                count,
                width: size,
                height: size,
                seed: fixture_seed,
            };
            let dir = cli.global.out.clone().unwrap_or_else(|| PathBuf::from("fixtures/synthetic"));
            let manifest = pipeline::generate_fixtures(&dir, &params)?;
            eprintln!("{} images -> {}", count, manifest.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_internal() { EXIT_INTERNAL } else { EXIT_DATA })
        }
    }
}
