use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};

use drbanet::accounting::{self, CLAIM_RESOLUTIONS};
use drbanet::boundary::{boundary_ground_truth, DEFAULT_WEIGHTS};
use drbanet::io::pgm::{read_pgm, write_pgm, GrayImage};
use drbanet::io::tensor_file::{read_tensor, write_tensor};
use drbanet::labels::{BoundaryMap, LabelMap};
use drbanet::loss::{total_loss, LossWeights};
use drbanet::metrics::{argmax_classes, ConfusionMatrix};
use drbanet::network::{init_weights, load_weights, NetworkPlan, Stream};
use drbanet::{build_plan, Error, ForwardOutputs, Network};

/// `println!` that propagates write errors, so a closed pipe ends the run quietly.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(io::stdout().lock(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "drbanet", version, about = "Dual-resolution segmentation network toolkit")]
struct Cli {
    /// Input resolution as WIDTHxHEIGHT.
    #[arg(long, global = true, value_parser = parse_resolution)]
    resolution: Option<(usize, usize)>,
    #[arg(long, global = true, default_value_t = 19)]
    classes: usize,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Print key=value lines instead of tables.
    #[arg(long, global = true)]
    machine: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the layer table.
    Describe {
        /// Fail unless every size matches the reference table.
        #[arg(long)]
        golden: bool,
    },
    /// Count parameters and MACs.
    Count {
        /// Check the size and cost targets at both candidate resolutions.
        #[arg(long)]
        verify: bool,
    },
    /// Run the network on a DRBT tensor.
    Forward(ForwardArgs),
    /// Derive a boundary map from a label PGM.
    BoundaryGt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        boundary: BoundaryArgs,
    },
    /// mIoU over paired prediction/ground-truth PGM directories.
    Eval {
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long)]
        gt_dir: PathBuf,
        #[command(flatten)]
        ignore: IgnoreArg,
    },
    /// Loss breakdown for saved network outputs.
    Loss(LossArgs),
}

#[derive(Args)]
struct ForwardArgs {
    #[arg(long)]
    input: PathBuf,
    /// DRBW weight file; without it weights are drawn from --random-seed.
    #[arg(long, conflicts_with = "random_seed")]
    weights: Option<PathBuf>,
    #[arg(long)]
    random_seed: Option<u64>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write the per-pixel class map as PGM.
    #[arg(long)]
    argmax: bool,
}

#[derive(Args)]
struct IgnoreArg {
    /// Label value excluded from evaluation, or `none`.
    #[arg(long, default_value = "255", value_parser = parse_ignore)]
    ignore: IgnoreValue,
}

#[derive(Clone, Copy)]
struct IgnoreValue(Option<u16>);

#[derive(Args)]
struct BoundaryArgs {
    /// Scale weights for strides 1, 2, 4 as `a,b,c`.
    #[arg(long, value_parser = parse_weights)]
    boundary_weights: Option<[f32; 3]>,
    #[command(flatten)]
    ignore: IgnoreArg,
}

#[derive(Args)]
struct LossArgs {
    #[arg(long)]
    seg: PathBuf,
    #[arg(long)]
    aux: PathBuf,
    #[arg(long)]
    boundary: PathBuf,
    /// Label PGMs, one per batch item.
    #[arg(long, required = true, num_args = 1..)]
    labels: Vec<PathBuf>,
    /// Boundary PGMs; derived from the labels when omitted.
    #[arg(long, num_args = 1..)]
    boundary_gt: Vec<PathBuf>,
    #[arg(long, default_value_t = 0.2)]
    lambda1: f64,
    #[arg(long, default_value_t = 0.1)]
    lambda2: f64,
    #[command(flatten)]
    boundary_opts: BoundaryArgs,
}

fn parse_resolution(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{s}`"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    Ok((h, w))
}

fn parse_ignore(s: &str) -> Result<IgnoreValue, String> {
    if s.eq_ignore_ascii_case("none") {
        return Ok(IgnoreValue(None));
    }
    s.parse().map(|v| IgnoreValue(Some(v))).map_err(|_| format!("expected a label value or `none`, got `{s}`"))
}

fn parse_weights(s: &str) -> Result<[f32; 3], String> {
    let v: Vec<f32> = s
        .split(',')
        .map(|p| p.trim().parse::<f32>().map_err(|_| format!("bad weight `{p}`")))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| "expected three comma-separated weights".to_string())
}

/// Failure that maps to exit code 1 rather than 2.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

fn is_broken_pipe(err: &anyhow::Error) -> bool {
    err.downcast_ref::<io::Error>().is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 1;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Numeric { .. } | Error::Undefined(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Describe { golden } => describe(cli, *golden),
        Command::Count { verify } => count(cli, *verify),
        Command::Forward(a) => forward(cli, a),
        Command::BoundaryGt { input, output, boundary } => boundary_gt(input, output, boundary),
        Command::Eval { pred_dir, gt_dir, ignore } => eval(cli, pred_dir, gt_dir, ignore.ignore.0),
        Command::Loss(a) => loss(cli, a),
    }
}

fn plan_for(cli: &Cli) -> anyhow::Result<NetworkPlan> {
    Ok(build_plan(cli.classes, cli.resolution.unwrap_or((1024, 1024)))?)
}

fn describe(cli: &Cli, golden: bool) -> anyhow::Result<()> {
    let plan = plan_for(cli)?;
    let rows = plan.size_table();
    if cli.machine {
        for r in &rows {
            say!("layer.{}.{}={}", r.layer, r.stream.as_str(), r.shape);
        }
    } else {
        say!("{:<13}  {:<13}  {:<6}  {}", "layer", "kind", "stream", "output");
        let kinds: BTreeMap<String, &str> = plan
            .layers
            .iter()
            .map(|l| (l.id.to_string(), l.block.kind().as_str()))
            .collect();
        for r in &rows {
            let kind = kinds.get(&r.layer.to_string()).copied().unwrap_or("?");
            say!("{:<13}  {:<13}  {:<6}  {}", r.layer, kind, r.stream.as_str(), r.shape);
        }
        for l in plan.layers.iter().filter(|l| l.stream == Stream::Head) {
            let out = plan.output_shapes(l).iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ");
            say!("{:<13}  {:<13}  {:<6}  {}", l.id, l.block.kind().as_str(), l.stream.as_str(), out);
        }
    }
    if golden {
        let bad = plan.golden_mismatches();
        if !bad.is_empty() {
            for (got, want) in &bad {
                eprintln!("layer {} {}: got {}, expected {}", got.layer, got.stream.as_str(), got.shape, want.shape);
            }
            return Err(CheckFailed(format!("{} size mismatches against the reference table", bad.len())).into());
        }
        say!("golden: all {} sizes match", rows.len());
    }
    Ok(())
}

fn count(cli: &Cli, verify: bool) -> anyhow::Result<()> {
    let plan = build_plan(cli.classes, cli.resolution.unwrap_or(CLAIM_RESOLUTIONS[0]))?;
    let resolutions: Vec<(usize, usize)> = match cli.resolution {
        Some(r) => vec![r],
        None => CLAIM_RESOLUTIONS.to_vec(),
    };
    for r in resolutions {
        let report = accounting::count_macs(&plan, r)?;
        if cli.machine {
            print!("{}", report.to_machine());
        } else {
            say!("{}", report.to_table());
        }
    }
    if verify {
        let v = accounting::verify_plan(&plan)?;
        if cli.machine {
            print!("{}", v.to_machine());
        } else {
            print!("{}", v.to_text());
        }
        if !v.pass() {
            return Err(CheckFailed("size or cost target not met".into()).into());
        }
    }
    Ok(())
}

fn forward(cli: &Cli, a: &ForwardArgs) -> anyhow::Result<()> {
    let input = read_tensor(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let d = input.dims();
    if d.c != 3 {
        return Err(Error::Shape(format!("input must have 3 channels, got {d}")).into());
    }
    if let Some(r) = cli.resolution {
        if r != (d.h, d.w) {
            bail!("--resolution {}x{} does not match input {}x{}", r.1, r.0, d.w, d.h);
        }
    }
    let plan = build_plan(cli.classes, (d.h, d.w))?;
    let weights = match &a.weights {
        Some(p) => load_weights(p, &plan).with_context(|| format!("loading {}", p.display()))?,
        None => init_weights(&plan, a.random_seed.unwrap_or(cli.seed))?,
    };
    let net = Network::new(plan, &weights)?;
    let out = net.forward(&input)?;
    std::fs::create_dir_all(&a.out_dir)?;
    let files = [("seg.drbt", &out.seg_logits), ("aux.drbt", &out.aux_seg_logits), ("boundary.drbt", &out.boundary_logits)];
    for (name, t) in files {
        let path = a.out_dir.join(name);
        write_tensor(&path, t)?;
        say!("{} {}", path.display(), t.dims());
    }
    if a.argmax {
        if cli.classes > 256 {
            bail!("class map PGM holds at most 256 classes");
        }
        for (i, classes) in argmax_classes(&out.seg_logits).into_iter().enumerate() {
            let name = if d.n == 1 { "classes.pgm".to_string() } else { format!("classes_{i}.pgm") };
            let img = GrayImage { width: d.w, height: d.h, pixels: classes.into_iter().map(|c| c as u8).collect() };
            let path = a.out_dir.join(name);
            write_pgm(&path, &img)?;
            say!("{}", path.display());
        }
    }
    Ok(())
}

fn read_labels(path: &Path, ignore: Option<u16>) -> anyhow::Result<LabelMap> {
    let img = read_pgm(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(LabelMap::from_image(&img, ignore))
}

fn boundary_gt(input: &Path, output: &Path, b: &BoundaryArgs) -> anyhow::Result<()> {
    let labels = read_labels(input, b.ignore.ignore.0)?;
    let map = boundary_ground_truth(&labels, b.boundary_weights.unwrap_or(DEFAULT_WEIGHTS))?;
    write_pgm(output, &map.to_image())?;
    say!("{} boundary pixels of {}", map.count(), map.height() * map.width());
    Ok(())
}

fn pgm_stems(dir: &Path) -> anyhow::Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm")) {
            let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(|| anyhow!("bad file name"))?;
            out.insert(stem.to_string(), path);
        }
    }
    Ok(out)
}

fn eval(cli: &Cli, pred_dir: &Path, gt_dir: &Path, ignore: Option<u16>) -> anyhow::Result<()> {
    let preds = pgm_stems(pred_dir)?;
    let gts = pgm_stems(gt_dir)?;
    let unpaired: Vec<&PathBuf> = preds
        .iter()
        .filter(|(k, _)| !gts.contains_key(*k))
        .chain(gts.iter().filter(|(k, _)| !preds.contains_key(*k)))
        .map(|(_, p)| p)
        .collect();
    if !unpaired.is_empty() {
        let list: Vec<String> = unpaired.iter().map(|p| p.display().to_string()).collect();
        bail!("unpaired files: {}", list.join(", "));
    }
    if preds.is_empty() {
        bail!("no PGM files in {}", pred_dir.display());
    }
    let mut cm = ConfusionMatrix::new(cli.classes)?;
    for (stem, pred_path) in &preds {
        let pred = read_labels(pred_path, None)?;
        let gt = read_labels(&gts[stem], ignore)?;
        cm.accumulate_labels(&pred, &gt).with_context(|| format!("evaluating `{stem}`"))?;
    }
    if cli.machine {
        print!("{}", cm.report_machine()?);
    } else {
        print!("{}", cm.report_text()?);
    }
    Ok(())
}

fn loss(cli: &Cli, a: &LossArgs) -> anyhow::Result<()> {
    let ignore = a.boundary_opts.ignore.ignore.0;
    let labels = a.labels.iter().map(|p| read_labels(p, ignore)).collect::<anyhow::Result<Vec<_>>>()?;
    let boundary = if a.boundary_gt.is_empty() {
        let w = a.boundary_opts.boundary_weights.unwrap_or(DEFAULT_WEIGHTS);
        labels.iter().map(|l| boundary_ground_truth(l, w)).collect::<drbanet::Result<Vec<_>>>()?
    } else {
        a.boundary_gt
            .iter()
            .map(|p| Ok(BoundaryMap::from_image(&read_pgm(p)?)?))
            .collect::<anyhow::Result<Vec<_>>>()?
    };
    let outputs = ForwardOutputs {
        seg_logits: read_tensor(&a.seg).with_context(|| format!("reading {}", a.seg.display()))?,
        aux_seg_logits: read_tensor(&a.aux).with_context(|| format!("reading {}", a.aux.display()))?,
        boundary_logits: read_tensor(&a.boundary).with_context(|| format!("reading {}", a.boundary.display()))?,
    };
    let b = total_loss(&outputs, &labels, &boundary, LossWeights::new(a.lambda1, a.lambda2)?)?;
    if cli.machine {
        say!("loss.seg={:?}", b.seg);
        say!("loss.aux={:?}", b.aux);
        say!("loss.bce={:?}", b.bce);
        say!("loss.dice={:?}", b.dice);
        say!("loss.boundary={:?}", b.boundary());
        say!("loss.total={:?}", b.total);
    } else {
        say!("seg       {:.6}", b.seg);
        say!("aux       {:.6}", b.aux);
        say!("bce       {:.6}", b.bce);
        say!("dice      {:.6}", b.dice);
        say!("boundary  {:.6}", b.boundary());
        say!("total     {:.6}  (lambda1 {}, lambda2 {})", b.total, a.lambda1, a.lambda2);
    }
    Ok(())
}
