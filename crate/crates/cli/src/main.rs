use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use gptlattice::exec::{with_threads, Execution};
use gptlattice::gpt_mnist::{
    default_templates, generate_class, generate_dataset, lattice_image, reconstruct,
    validate_templates, ClassTemplate, SampleOptions,
};
use gptlattice::growth::{develop_snapshots, GrowthRule, GrowthVariant};
use gptlattice::io::{
    ascii_render, image_bytes, read_heatmap_dir, read_idx, write_png, DatasetBundle, IdxTensor,
};
use gptlattice::metrics::{
    build_centroid_scorer, cascade_src, mean_aopc_curve, AopcItem, ConfusionMatrix,
};
use gptlattice::pattern::{Configuration, GeneratorSpace};
use gptlattice::presets::stroke_space;

#[derive(Parser)]
#[command(
    name = "gptlattice",
    version,
    about = "Generator lattices, GPT-MNIST and saliency metrics"
)]
struct Cli {
    /// Worker threads for batch work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow a configuration and print or save its snapshots.
    Develop(DevelopArgs),
    /// Sample one class into a dataset bundle.
    Sample(SampleArgs),
    /// Sample a class-balanced dataset bundle.
    Dataset(DatasetArgs),
    /// Regrow a stored sample from its label lattices.
    Reconstruct(ReconstructArgs),
    /// Evaluate segmentations or heatmaps.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Idx,
    Png,
}

#[derive(Args)]
struct DevelopArgs {
    #[arg(long)]
    space: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// original, revised, modified, max or max:R.
    #[arg(long, default_value = "revised")]
    rule: GrowthVariant,
    #[arg(long, default_value_t = 1)]
    steps: usize,
    #[arg(long)]
    step_cap: Option<usize>,
    /// Print every snapshot as ASCII (the default when --png is absent).
    #[arg(long)]
    ascii: bool,
    /// Directory receiving one PNG per snapshot.
    #[arg(long, value_name = "DIR")]
    png: Option<PathBuf>,
}

#[derive(Args)]
struct GenerationArgs {
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    master_seed: u64,
    #[arg(long, value_enum, default_value = "off")]
    rotation: Switch,
    #[arg(long, value_enum, default_value = "on")]
    jitter: Switch,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "idx")]
    format: Format,
    /// Generator space JSON (defaults to the stroke space).
    #[arg(long)]
    space: Option<PathBuf>,
    /// Class template JSON array (defaults to the built-in templates).
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    class: u8,
    #[command(flatten)]
    generation: GenerationArgs,
}

#[derive(Args)]
struct DatasetArgs {
    #[command(flatten)]
    generation: GenerationArgs,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    space: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Hit/miss %-errors between two IDX label files.
    Seg {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Defaults to one more than the largest label seen.
        #[arg(long)]
        num_classes: Option<usize>,
    },
    /// Mean SRC of each stage directory against the reference directory.
    Src {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        stage: Vec<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-L AOPC curve of heatmaps over a bundle.
    Aopc {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        heatmaps: PathBuf,
        #[arg(long, value_enum, default_value = "centroid")]
        scorer: ScorerKind,
        /// Bundle used to fit the scorer (defaults to --bundle).
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long = "L")]
        l: usize,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ScorerKind {
    Centroid,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return fail(&e.to_string()),
    };
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match with_threads(cli.threads, || run(cli.command, exec)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&format!("{e:#}")),
    }
}

fn fail(message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": message.trim() }));
    ExitCode::FAILURE
}

fn run(command: Command, exec: Execution) -> Result<()> {
    match command {
        Command::Develop(args) => run_develop(args),
        Command::Sample(args) => {
            let g = &args.generation;
            let (space, templates) = load_generation_inputs(g)?;
            let samples = generate_class(
                &space,
                &templates,
                args.class,
                g.master_seed,
                g.count,
                options(g),
                exec,
            )?;
            write_bundle(g, samples)
        }
        Command::Dataset(args) => {
            let g = &args.generation;
            let (space, templates) = load_generation_inputs(g)?;
            let samples =
                generate_dataset(&space, &templates, g.master_seed, g.count, options(g), exec)?;
            write_bundle(g, samples)
        }
        Command::Reconstruct(args) => run_reconstruct(args),
        Command::Eval(eval) => run_eval(eval, exec),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_space(path: Option<&PathBuf>) -> Result<GeneratorSpace> {
    path.map_or_else(|| Ok(stroke_space()), |p| read_json(p))
}

fn run_develop(args: DevelopArgs) -> Result<()> {
    let space: GeneratorSpace = read_json(&args.space)?;
    let config: Configuration = read_json(&args.config)?;
    let rule = GrowthRule::new(args.rule, args.step_cap.unwrap_or(usize::MAX));
    let snapshots = develop_snapshots(&space, &config, rule, args.steps)?;
    if let Some(dir) = &args.png {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (k, c) in snapshots.iter().enumerate() {
            write_png(&dir.join(format!("iter_{k:03}.png")), &lattice_image(c))?;
        }
    }
    if args.ascii || args.png.is_none() {
        let mut out = String::new();
        for (k, c) in snapshots.iter().enumerate() {
            out.push_str(&format!("iter {k}\n"));
            out.push_str(&ascii_render(&space, c)?);
        }
        print!("{out}");
    }
    Ok(())
}

fn load_generation_inputs(g: &GenerationArgs) -> Result<(GeneratorSpace, Vec<ClassTemplate>)> {
    let space = load_space(g.space.as_ref())?;
    let templates = match &g.templates {
        Some(p) => read_json(p)?,
        None => default_templates(),
    };
    if g.templates.is_some() {
        validate_templates(&templates, space.order())?;
    }
    Ok((space, templates))
}

fn options(g: &GenerationArgs) -> SampleOptions {
    SampleOptions {
        rotation: g.rotation.into(),
        jitter: g.jitter.into(),
    }
}

fn write_bundle(
    g: &GenerationArgs,
    samples: Vec<gptlattice::gpt_mnist::SampleRecord>,
) -> Result<()> {
    let n = samples.len();
    DatasetBundle::new(samples).write(&g.out, matches!(g.format, Format::Png))?;
    println!("{}", json!({ "samples": n, "out": g.out }));
    Ok(())
}

fn run_reconstruct(args: ReconstructArgs) -> Result<()> {
    let space = load_space(args.space.as_ref())?;
    let bundle = DatasetBundle::read(&args.bundle)?;
    let Some(record) = bundle.samples.get(args.index) else {
        bail!(
            "index {} out of range for {} samples",
            args.index,
            bundle.len()
        );
    };
    let image = reconstruct(&space, &record.y_g, &record.y_s, Some(record.steps))?;
    write_png(&args.out, &image)?;
    let mismatched = image_bytes(&image)
        .as_slice()
        .iter()
        .zip(image_bytes(&record.image).as_slice())
        .filter(|(a, b)| a != b)
        .count();
    println!(
        "{}",
        json!({
            "index": args.index,
            "class": record.class_label,
            "steps": record.steps,
            "exact_match": mismatched == 0,
            "mismatched_pixels": mismatched,
            "out": args.out,
        })
    );
    Ok(())
}

fn label_lattices(path: &Path) -> Result<Vec<gptlattice::grid::Grid<u8>>> {
    let t = read_idx(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(match t.dims.len() {
        3 => t.to_grids()?,
        2 => IdxTensor::new(vec![1, t.dims[0], t.dims[1]], t.data)?.to_grids()?,
        _ => bail!("{}: expected a 2-D or 3-D label tensor", path.display()),
    })
}

fn run_eval(eval: EvalCommand, exec: Execution) -> Result<()> {
    let report = match eval {
        EvalCommand::Seg {
            pred,
            truth,
            num_classes,
        } => {
            let pred = label_lattices(&pred)?;
            let truth = label_lattices(&truth)?;
            ensure!(
                pred.len() == truth.len(),
                "pred holds {} lattices, truth holds {}",
                pred.len(),
                truth.len()
            );
            let seen = pred
                .iter()
                .chain(&truth)
                .flat_map(|g| g.as_slice().iter().copied())
                .max()
                .map_or(1, |m| m as usize + 1);
            let mut cm = ConfusionMatrix::new(num_classes.unwrap_or(seen));
            for (p, t) in pred.iter().zip(&truth) {
                cm.add(p, t)?;
            }
            serde_json::to_value(cm.errors()?)?
        }
        EvalCommand::Src {
            reference,
            stage,
            seed,
        } => {
            let refs = read_heatmap_dir(&reference)?;
            ensure!(
                !refs.is_empty(),
                "{} holds no heatmaps",
                reference.display()
            );
            let stages = stage
                .iter()
                .map(|d| read_heatmap_dir(d))
                .collect::<Result<Vec<_>, _>>()?;
            serde_json::to_value(cascade_src(&refs, &stages, seed, exec)?)?
        }
        EvalCommand::Aopc {
            bundle,
            heatmaps,
            scorer: ScorerKind::Centroid,
            train,
            l,
            repeats,
            seed,
        } => {
            let data = DatasetBundle::read(&bundle)?;
            let maps = read_heatmap_dir(&heatmaps)?;
            ensure!(
                maps.len() == data.len(),
                "{} heatmaps for {} samples",
                maps.len(),
                data.len()
            );
            let fitted = match &train {
                Some(dir) => build_centroid_scorer(&DatasetBundle::read(dir)?.samples)?,
                None => build_centroid_scorer(&data.samples)?,
            };
            let items: Vec<AopcItem> = data
                .samples
                .iter()
                .zip(&maps)
                .map(|(s, h)| AopcItem {
                    image: &s.image,
                    heatmap: h,
                    target: s.class_label as usize,
                })
                .collect();
            let curve = mean_aopc_curve(&fitted, &items, l, repeats, seed, exec)?;
            json!({
                "samples": items.len(),
                "repeats": repeats,
                "L": (1..=l).collect::<Vec<_>>(),
                "aopc": curve,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
