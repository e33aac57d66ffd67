use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use abdo_core::bench::{emit_reports, load_manifest, read_records, run_evaluation, summarize, write_summary};
use abdo_core::clustering::{fit_cluster_models, ClusterFits, ClusteringConfig};
use abdo_core::synth::{generate_training_pair_with, pair_rng, ClusterSource, DrawnParams, GenerationConfig};
use abdo_core::volume::{read_nifti, write_nifti, write_nifti_as, DataType, LabelMap, NiftiVolume, ScalarVolume};

#[derive(Parser)]
#[command(name = "abdo", version, about = "Synthetic abdominal MRI generation and segmentation benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit per-label intensity mixtures for every allowed component count and cache them.
    Cluster(ClusterArgs),
    /// Generate synthetic image/segmentation pairs.
    Generate(GenerateArgs),
    /// Evaluate predictions listed in a manifest and write reports.
    Evaluate(EvaluateArgs),
    /// Summarise a records file into a summary table.
    Stats(StatsArgs),
    /// Write summary, Friedman results and charts from a records file.
    Report(ReportArgs),
}

#[derive(Args)]
struct ClusterArgs {
    #[arg(long)]
    labels_dir: PathBuf,
    #[arg(long)]
    ct_dir: PathBuf,
    /// TOML file with optional [clustering] and [generation] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    labels_dir: PathBuf,
    /// CT volumes named like the label maps; enables clustering.
    #[arg(long)]
    ct_dir: Option<PathBuf>,
    /// Directory of `<stem>.clusters.json` files, or a single cache file.
    #[arg(long)]
    cluster_cache: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// Pairs generated concurrently.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    generation: GenerationConfig,
    clustering: ClusteringConfig,
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let config: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    config.generation.validate()?;
    config.clustering.validate()?;
    Ok(config)
}

fn stem(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .unwrap_or(&name)
        .to_string()
}

/// NIfTI files in `dir`, sorted by name.
fn nifti_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let n = p.to_string_lossy();
            p.is_file() && (n.ends_with(".nii") || n.ends_with(".nii.gz"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .nii or .nii.gz files in {}", dir.display());
    }
    Ok(files)
}

fn read_labels(path: &Path) -> Result<LabelMap> {
    read_nifti(path)?
        .into_labels()
        .with_context(|| format!("{} is not a label map", path.display()))
}

fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    Ok(read_nifti(path)?.into_scalar())
}

fn ct_for(ct_dir: &Path, labels: &Path) -> Result<PathBuf> {
    let name = labels.file_name().context("label file has no name")?;
    let p = ct_dir.join(name);
    if p.exists() {
        return Ok(p);
    }
    // Accept a different compression suffix.
    let s = stem(labels);
    for ext in [".nii.gz", ".nii"] {
        let p = ct_dir.join(format!("{s}{ext}"));
        if p.exists() {
            return Ok(p);
        }
    }
    bail!("no CT for {} in {}", labels.display(), ct_dir.display())
}

fn cluster(args: ClusterArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    for labels_path in nifti_files(&args.labels_dir)? {
        let ct_path = ct_for(&args.ct_dir, &labels_path)?;
        let labels = read_labels(&labels_path)?;
        let ct = read_scalar(&ct_path)?;
        let mut fits = fit_cluster_models(&ct, &labels, &config.clustering)
            .with_context(|| format!("clustering {}", labels_path.display()))?;
        fits.ct_path = Some(std::fs::canonicalize(&ct_path).unwrap_or(ct_path));
        let out = args.out_dir.join(format!("{}.clusters.json", stem(&labels_path)));
        fits.save(&out)?;
        println!("{}", out.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct PairRecord<'a> {
    subject: String,
    #[serde(flatten)]
    params: &'a DrawnParams,
}

struct Subject {
    labels: PathBuf,
    ct: Option<PathBuf>,
    fits: Option<Arc<ClusterFits>>,
}

fn subjects(args: &GenerateArgs) -> Result<Vec<Subject>> {
    let files = nifti_files(&args.labels_dir)?;
    let single_cache = match &args.cluster_cache {
        Some(p) if p.is_file() => Some(Arc::new(ClusterFits::load(p)?)),
        _ => None,
    };
    files
        .into_iter()
        .map(|labels| {
            let fits = match (&args.cluster_cache, &single_cache) {
                (_, Some(f)) => Some(f.clone()),
                (Some(dir), None) => {
                    let p = dir.join(format!("{}.clusters.json", stem(&labels)));
                    Some(Arc::new(ClusterFits::load(&p)?))
                }
                (None, None) => None,
            };
            let ct = match (&args.ct_dir, &fits) {
                (Some(dir), _) => Some(ct_for(dir, &labels)?),
                (None, Some(f)) => Some(
                    f.ct_path
                        .clone()
                        .with_context(|| format!("cluster cache for {} records no CT path", labels.display()))?,
                ),
                (None, None) => None,
            };
            Ok(Subject { labels, ct, fits })
        })
        .collect()
}

fn generate_one(args: &GenerateArgs, config: &Config, subjects: &[Subject], index: u64) -> Result<()> {
    let mut rng = pair_rng(args.seed, index);
    let subject = &subjects[rng.random_range(0..subjects.len())];
    let labels = read_labels(&subject.labels)?;
    let ct = subject.ct.as_deref().map(read_scalar).transpose()?;
    let source = match (&ct, &subject.fits) {
        (Some(ct), Some(fits)) => ClusterSource::Cached {
            ct,
            fits,
            clustering: &config.clustering,
        },
        (Some(ct), None) => ClusterSource::OnDemand {
            ct,
            clustering: &config.clustering,
        },
        _ => ClusterSource::None,
    };
    let pair = generate_training_pair_with(&labels, source, &config.generation, &mut rng, args.seed, index)
        .with_context(|| format!("pair {index} from {}", subject.labels.display()))?;
    drop((labels, ct));
    let base = args.out_dir.join(format!("pair_{index:06}"));
    let img = NiftiVolume::Scalar(pair.image);
    write_nifti_as(&img, format!("{}_img.nii.gz", base.display()), DataType::F32)?;
    drop(img);
    write_nifti(&NiftiVolume::Labels(pair.target), format!("{}_seg.nii.gz", base.display()))?;
    let record = PairRecord {
        subject: stem(&subject.labels),
        params: &pair.provenance,
    };
    let json = serde_json::to_string_pretty(&record)?;
    let p = format!("{}_params.json", base.display());
    std::fs::write(&p, json).with_context(|| format!("writing {p}"))?;
    log::info!("pair {index} from {}", subject.labels.display());
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<()> {
    let config = load_config(args.config.as_deref())?;
    std::fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    let subjects = subjects(&args)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.workers.max(1)).build()?;
    pool.install(|| {
        (0..args.count)
            .into_par_iter()
            .try_for_each(|i| generate_one(&args, &config, &subjects, i))
    })?;
    println!("wrote {} pairs to {}", args.count, args.out_dir.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let plan = load_manifest(&args.manifest)?;
    let records = run_evaluation(&plan, args.workers)?;
    let summary = summarize(&records, args.alpha)?;
    for p in emit_reports(&records, &summary, &args.out_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn stats(args: StatsArgs) -> Result<()> {
    let records = read_records(&args.records)?;
    let summary = summarize(&records, args.alpha)?;
    write_summary(&args.out, &summary)?;
    println!("{}", args.out.display());
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let records = read_records(&args.records)?;
    let summary = summarize(&records, args.alpha)?;
    for p in emit_reports(&records, &summary, &args.out_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Cluster(a) => cluster(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Stats(a) => stats(a),
        Command::Report(a) => report(a),
    }
}
