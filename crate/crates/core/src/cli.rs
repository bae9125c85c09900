//! Command-line front end.
//!
//! Flags may also come from a flat `key=value` file named by `--config`; a
//! flag given on the command line wins over the file, which wins over the
//! built-in default.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};

use crate::applications::recognition::{evaluate_recognition, extract_all};
use crate::applications::signs::{gen_synthetic_signs, LabeledImageSet};
use crate::applications::softmax::{train_softmax_k, SoftmaxClassifier, SoftmaxConfig};
use crate::applications::{iqa_score, reconstruction_psnr};
use crate::autoencoder::{RegKind, Regularizer};
use crate::corpus::{load_corpus_dir, natural_corpus};
use crate::imageio::{decolorize, export_filter_grid, load_image, save_image};
use crate::patches::{apply_zca, fit_zca, sample_patches, DEFAULT_PATCH_SIDE, DEFAULT_ZCA_EPSILON};
use crate::semantics::{
    group_filters, max_activation_map, Concept, ConceptAssignment, FilterSubset, SemanticWeights,
    COLOR_THRESHOLD, EDGE_THRESHOLD,
};
use crate::trainer::{gradcheck, load_model, save_model, train, TrainConfig};

pub const THREADS_ENV: &str = "SEMFILT_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "semfilt",
    version,
    about = "Learn, group and apply color/edge filter sets",
    args_override_self = true
)]
pub struct Cli {
    /// key=value file supplying defaults for subcommand flags
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads for cost/gradient evaluation
    #[arg(long, global = true, env = THREADS_ENV, default_value_t = 1)]
    pub threads: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an autoencoder on whitened patches from an image directory
    Train(TrainArgs),
    /// Compare analytic and finite-difference gradients on a random instance
    Gradcheck(GradcheckArgs),
    /// Export the encoder filters as an image grid
    Filters(FiltersArgs),
    /// Print per-filter kurtosis and concept labels
    Group(GroupArgs),
    /// Full-reference quality score of a distorted image
    Iqa(IqaArgs),
    /// Write a synthetic labeled sign set
    Synth(SynthArgs),
    /// Write a procedural natural-scene corpus
    Scenes(ScenesArgs),
    /// Train a softmax classifier on concept-weighted features
    RecogTrain(RecogTrainArgs),
    /// Recognition accuracy under progressive decolorization
    RecogEval(RecogEvalArgs),
    /// Desaturate an image toward its luma
    Decolorize(DecolorizeArgs),
    /// Per-tile index of the most active filter
    Maxact(MaxactArgs),
    /// Reconstruction PSNR of an image through a model
    Reconstruct(ReconstructArgs),
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    /// Kurtosis above which a filter is an edge filter
    #[arg(long, default_value_t = EDGE_THRESHOLD)]
    pub edge_threshold: f64,
    /// Kurtosis below which a filter is a color filter
    #[arg(long, default_value_t = COLOR_THRESHOLD)]
    pub color_threshold: f64,
}

#[derive(Debug, Args)]
pub struct WeightArgs {
    /// Weight on color-filter responses
    #[arg(long, allow_negative_numbers = true)]
    pub wc: f64,
    /// Weight on edge-filter responses
    #[arg(long, allow_negative_numbers = true)]
    pub we: f64,
    /// Weight on filters in neither group
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub wu: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of .ppm/.pgm training images
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output model file
    #[arg(long)]
    pub out: PathBuf,
    /// Regularizer: none, l1, l2 or elastic
    #[arg(long, default_value = "elastic")]
    pub reg: RegKind,
    /// l1 coefficient
    #[arg(long, default_value_t = Regularizer::BETA)]
    pub beta: f64,
    /// l2 coefficient
    #[arg(long, default_value_t = Regularizer::LAMBDA)]
    pub lambda: f64,
    /// Hidden units (filters)
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 400)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    /// Mini-batch size; 0 is full batch
    #[arg(long, default_value_t = 0)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half-width of the uniform weight init (default sqrt(6/(d+h+1)))
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Patches drawn from each image
    #[arg(long, default_value_t = 250)]
    pub per_image: usize,
    #[arg(long, default_value_t = DEFAULT_PATCH_SIDE)]
    pub patch_side: usize,
    /// Whitening regularizer added to every eigenvalue
    #[arg(long, default_value_t = DEFAULT_ZCA_EPSILON)]
    pub zca_epsilon: f64,
    /// Optional file receiving the cost after every epoch
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 6)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub h: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value = "elastic")]
    pub reg: RegKind,
    #[arg(long, default_value_t = Regularizer::BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = Regularizer::LAMBDA)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FiltersArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Output .ppm file
    #[arg(long)]
    pub out: PathBuf,
    /// Tiles per grid row
    #[arg(long, default_value_t = 10)]
    pub cols: usize,
}

#[derive(Debug, Args)]
pub struct GroupArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct IqaArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Reference image
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// Distorted image
    #[arg(long)]
    pub dist: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    /// Number of sign classes (2..=8)
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 32)]
    pub side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ScenesArgs {
    /// Output directory (created if missing)
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    /// Image side in pixels
    #[arg(long, default_value_t = 64)]
    pub side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RecogTrainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled image directory written by `synth`
    #[arg(long)]
    pub data: PathBuf,
    /// Output classifier file
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    /// Squared-norm penalty on classifier weights
    #[arg(long, default_value_t = 1e-4)]
    pub l2: f64,
    #[arg(long, default_value_t = 0)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RecogEvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Classifier file written by `recog-train`
    #[arg(long)]
    pub clf: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub weights: WeightArgs,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
    /// Comma-separated decolorization levels
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    pub levels: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct DecolorizeArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// 0 (unchanged) to 5 (luma only)
    #[arg(long)]
    pub level: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MaxactArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// all, color, edge, or a comma-separated list of filter indices
    #[arg(long, default_value = "all")]
    pub subset: String,
    #[command(flatten)]
    pub thresholds: ThresholdArgs,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub image: PathBuf,
    /// Optional output for the reconstructed image
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Formats with 6 significant digits.
pub fn fmt6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return "0.00000".into();
    }
    // exponent after rounding to 6 significant digits
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').map_or(0, |i| i + 1)..]
        .parse()
        .unwrap_or(0);
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp) as usize;
        format!("{x:.decimals$}")
    } else {
        sci
    }
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .with_context(|| format!("config line {}: expected key=value", no + 1))?;
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("config line {}: empty key", no + 1);
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

fn find_config(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--" {
            break;
        }
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

fn subcommand_index(args: &[OsString]) -> Option<usize> {
    let cmd = Cli::command();
    let names: HashSet<String> = cmd
        .get_subcommands()
        .map(|s| s.get_name().to_string())
        .collect();
    args.iter()
        .enumerate()
        .skip(1)
        .find(|(_, a)| names.contains(a.to_string_lossy().as_ref()))
        .map(|(i, _)| i)
}

/// Inserts config-file flags right after the subcommand name so explicit
/// flags, which come later, override them. Keys the subcommand does not
/// accept are skipped so one file can serve several subcommands.
pub fn expand_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(path) = find_config(&args) else {
        return Ok(args);
    };
    let text =
        fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let pairs = parse_config(&text)?;
    let Some(at) = subcommand_index(&args) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(args[at].to_string_lossy().as_ref())
        .expect("subcommand index points at a known name");
    let known: HashSet<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();
    let mut injected = Vec::new();
    for (k, v) in pairs {
        if k == "threads" {
            // global flag; explicit --threads later on still wins
            injected.push(OsString::from(format!("--threads={v}")));
        } else if known.contains(&k) {
            injected.push(OsString::from(format!("--{k}={v}")));
        }
    }
    let mut out = args[..=at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at + 1..]);
    Ok(out)
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let args = match expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn assignment(
    model: &crate::autoencoder::AutoencoderModel,
    t: &ThresholdArgs,
) -> anyhow::Result<ConceptAssignment> {
    Ok(group_filters(model, t.edge_threshold, t.color_threshold)?)
}

fn weights(w: &WeightArgs) -> anyhow::Result<SemanticWeights> {
    Ok(SemanticWeights::with_unassigned(w.wc, w.we, w.wu)?)
}

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Runs an already parsed command line, writing tables to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    let threads = cli.threads.max(1);
    match &cli.command {
        Command::Train(a) => {
            let images = load_corpus_dir(&a.corpus)?;
            if images.is_empty() {
                bail!("no .ppm/.pgm images in {}", a.corpus.display());
            }
            let raw = sample_patches(&images, a.per_image, a.patch_side, a.seed)?;
            let zca = fit_zca(&raw, a.zca_epsilon)?;
            let patches = apply_zca(&zca, &raw)?;
            if patches.count() < a.hidden {
                eprintln!(
                    "warning: {} patches for {} hidden units",
                    patches.count(),
                    a.hidden
                );
            }
            let cfg = TrainConfig {
                hidden: a.hidden,
                epochs: a.epochs,
                learning_rate: a.lr,
                batch: a.batch,
                seed: a.seed,
                init_scale: a.init_scale,
                regularizer: Regularizer::new(a.reg, a.beta, a.lambda)?,
                threads,
            };
            let trained = train(&patches, &zca, &cfg)?;
            save_model(&trained.model, &a.out)?;
            if let Some(path) = &a.history {
                let text: String = trained
                    .history
                    .iter()
                    .map(|c| format!("{}\n", crate::textblock::format_f64(*c)))
                    .collect();
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            writeln!(
                out,
                "images {} patches {} d {} h {}",
                images.len(),
                patches.count(),
                patches.dim(),
                a.hidden
            )?;
            writeln!(out, "initial_cost {}", fmt6(trained.initial_cost()))?;
            writeln!(out, "final_cost {}", fmt6(trained.final_cost()))?;
        }
        Command::Gradcheck(a) => {
            let reg = Regularizer::new(a.reg, a.beta, a.lambda)?;
            let err = gradcheck(a.d, a.h, a.n, &reg, a.seed)?;
            writeln!(out, "max_relative_error {}", fmt6(err))?;
        }
        Command::Filters(a) => {
            let model = load_model(&a.model)?;
            export_filter_grid(&model, &a.out, a.cols)?;
        }
        Command::Group(a) => {
            let model = load_model(&a.model)?;
            let g = assignment(&model, &a.thresholds)?;
            writeln!(out, "filter\tkurtosis\tconcept")?;
            for (j, (k, l)) in g.kappas().iter().zip(g.labels()).enumerate() {
                writeln!(out, "{j}\t{}\t{l}", fmt6(*k))?;
            }
            writeln!(
                out,
                "color {} edge {} unassigned {}",
                g.count(Concept::Color),
                g.count(Concept::Edge),
                g.count(Concept::Unassigned)
            )?;
        }
        Command::Iqa(a) => {
            let model = load_model(&a.model)?;
            let g = assignment(&model, &a.thresholds)?;
            let w = weights(&a.weights)?;
            let reference = load_image(&a.reference)?;
            let distorted = load_image(&a.dist)?;
            let score = iqa_score(&model, &g, &w, &reference, &distorted)?;
            writeln!(out, "{}", fmt6(score))?;
        }
        Command::Synth(a) => {
            let set = gen_synthetic_signs(a.per_class, a.side, a.classes, a.seed)?;
            create_dir(&a.out)?;
            set.save_dir(&a.out)?;
            writeln!(out, "images {} classes {}", set.len(), set.class_count())?;
        }
        Command::Scenes(a) => {
            let images = natural_corpus(a.count, a.side, a.seed)?;
            create_dir(&a.out)?;
            for (i, img) in images.iter().enumerate() {
                save_image(img, a.out.join(format!("{i:05}.ppm")))?;
            }
            writeln!(out, "images {}", images.len())?;
        }
        Command::RecogTrain(a) => {
            let model = load_model(&a.model)?;
            let g = assignment(&model, &a.thresholds)?;
            let w = weights(&a.weights)?;
            let set = LabeledImageSet::load_dir(&a.data)?;
            let features = extract_all(&model, &g, &w, set.images())?;
            let cfg = SoftmaxConfig {
                epochs: a.epochs,
                learning_rate: a.lr,
                l2: a.l2,
                batch: a.batch,
                seed: a.seed,
            };
            let clf = train_softmax_k(&features, set.labels(), set.class_count(), &cfg)?;
            clf.save(&a.out)?;
            let predictions = features
                .iter()
                .map(|f| clf.predict(f))
                .collect::<crate::Result<Vec<_>>>()?;
            let acc = crate::evalstats::accuracy(&predictions, set.labels())?;
            writeln!(out, "train_accuracy {}", fmt6(acc))?;
        }
        Command::RecogEval(a) => {
            let model = load_model(&a.model)?;
            let g = assignment(&model, &a.thresholds)?;
            let w = weights(&a.weights)?;
            let clf = SoftmaxClassifier::load(&a.clf)?;
            let set = LabeledImageSet::load_dir(&a.data)?;
            let acc = evaluate_recognition(&model, &g, &w, &clf, &set, &a.levels)?;
            writeln!(out, "level\taccuracy")?;
            for (level, acc) in a.levels.iter().zip(acc) {
                writeln!(out, "{level}\t{}", fmt6(acc))?;
            }
        }
        Command::Decolorize(a) => {
            let img = load_image(&a.input)?;
            save_image(&decolorize(&img, a.level)?, &a.out)?;
        }
        Command::Maxact(a) => {
            let model = load_model(&a.model)?;
            let g = assignment(&model, &a.thresholds)?;
            let subset = parse_subset(&a.subset)?;
            let img = load_image(&a.image)?;
            let map = max_activation_map(&model, &g, &img, &subset)?;
            for r in 0..map.grid.rows {
                let row: Vec<String> = (0..map.grid.cols)
                    .map(|c| map.at(r, c).to_string())
                    .collect();
                writeln!(out, "{}", row.join("\t"))?;
            }
        }
        Command::Reconstruct(a) => {
            let model = load_model(&a.model)?;
            let img = load_image(&a.image)?;
            if let Some(path) = &a.out {
                save_image(&crate::applications::reconstruct_image(&model, &img)?, path)?;
            }
            writeln!(out, "psnr {}", fmt6(reconstruction_psnr(&model, &img)?))?;
        }
    }
    Ok(())
}

fn parse_subset(s: &str) -> anyhow::Result<FilterSubset> {
    Ok(match s.trim() {
        "all" => FilterSubset::All,
        "color" => FilterSubset::Concept(Concept::Color),
        "edge" => FilterSubset::Concept(Concept::Edge),
        "unassigned" => FilterSubset::Concept(Concept::Unassigned),
        list => FilterSubset::Indices(
            list.split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .with_context(|| format!("bad filter subset {list:?}"))?,
        ),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(fmt6(1.0), "1.00000");
        assert_eq!(fmt6(0.731058578), "0.731059");
        assert_eq!(fmt6(123456.7), "123457");
        assert_eq!(fmt6(-2.5e-7), "-2.50000e-7");
        assert_eq!(fmt6(1.5e9), "1.50000e9");
        assert_eq!(fmt6(9.9999996), "10.0000");
        assert_eq!(fmt6(f64::INFINITY), "inf");
    }

    #[test]
    fn config_parsing() {
        let pairs = parse_config("# c\nepochs = 5\nzca_epsilon=0.1 # note\n\n").unwrap();
        assert_eq!(
            pairs,
            vec![
                ("epochs".to_string(), "5".to_string()),
                ("zca-epsilon".to_string(), "0.1".to_string())
            ]
        );
        assert!(parse_config("novalue\n").is_err());
    }

    #[test]
    fn config_injected_before_explicit_flags() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("c.cfg");
        fs::write(&cfg, "seed=3\nlambda=0.5\nunknown=1\n").unwrap();
        let argv: Vec<OsString> = [
            "semfilt",
            "--config",
            cfg.to_str().unwrap(),
            "gradcheck",
            "--seed",
            "9",
        ]
        .iter()
        .map(OsString::from)
        .collect();
        let expanded = expand_config(argv).unwrap();
        let cli = Cli::try_parse_from(expanded).unwrap();
        match cli.command {
            Command::Gradcheck(a) => {
                assert_eq!(a.seed, 9);
                assert_eq!(a.lambda, 0.5);
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn subset_parsing() {
        assert_eq!(
            parse_subset("edge").unwrap(),
            FilterSubset::Concept(Concept::Edge)
        );
        assert_eq!(
            parse_subset("3, 1").unwrap(),
            FilterSubset::Indices(vec![3, 1])
        );
        assert!(parse_subset("x").is_err());
    }
}
