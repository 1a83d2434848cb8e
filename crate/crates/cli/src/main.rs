use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use wordfield::dataset::{load_manifest, write_manifest};
use wordfield::harness::{
    accuracy_vs_factor, factor_tsv, histogram_report, load_results, retry_counts, run_suite, summarize, summary_tsv,
    train_codebook, BookInput, ExperimentConfig, Factor, Weighting,
};
use wordfield::synth::{generate_book, parse_synth_specs};

/// Word-image classification benchmark: synthetic books, SOM codebooks,
/// suite runs and reports.
#[derive(Parser)]
#[command(name = "wordfield", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic books from a spec file (one book per line).
    GenSynth {
        /// Lines of `key=value` pairs, e.g. `book_id=s10 n_classes=10 seed=1`.
        #[arg(long)]
        spec: PathBuf,
        /// Directory for the images and `manifest.tsv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a SOM codebook on patches from the books of a manifest.
    TrainCodebook {
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        /// Output codebook file; its stem is the codebook id.
        #[arg(long)]
        out: PathBuf,
        /// Experiment config supplying SOM, patch and seed settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run the configured methods over every book and write results.csv.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, required = true)]
        manifest: Vec<PathBuf>,
        /// Overrides `output_dir` from the config.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Overrides `seed` from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Summaries, accuracy histogram and accuracy-vs-factor table from a
    /// results CSV.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Directory for the TSV files (default: next to the CSV).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Histogram band width in percent.
        #[arg(long, default_value_t = 5.0)]
        band_width: f64,
        /// n_classes, avg_train_per_class or n_train_total.
        #[arg(long, default_value = "n_classes")]
        factor: String,
        /// unweighted or test_size.
        #[arg(long, default_value = "unweighted")]
        weighting: String,
    },
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(ExperimentConfig::default()),
    }
}

fn load_books(manifests: &[PathBuf]) -> Result<Vec<BookInput>> {
    let mut books = Vec::new();
    for path in manifests {
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let parsed = load_manifest(path).with_context(|| format!("reading manifest {}", path.display()))?;
        books.extend(parsed.into_iter().map(|m| BookInput::from_dir(m, root.clone())));
    }
    if books.is_empty() {
        bail!("the manifests list no books");
    }
    Ok(books)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn gen_synth(spec: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(spec).with_context(|| format!("reading {}", spec.display()))?;
    let specs = parse_synth_specs(&text)?;
    if specs.is_empty() {
        bail!("{} describes no books", spec.display());
    }
    let mut books = Vec::with_capacity(specs.len());
    for s in &specs {
        log::info!("rendering {} ({} classes x {})", s.book_id, s.n_classes, s.samples_per_class);
        books.push(generate_book(s, out)?);
    }
    let manifest = out.join("manifest.tsv");
    write_manifest(&manifest, &books)?;
    println!("wrote {} books to {}", books.len(), manifest.display());
    Ok(())
}

fn train_cb(manifests: &[PathBuf], out: &Path, config: Option<&Path>) -> Result<()> {
    let config = load_config(config)?;
    let books = load_books(manifests)?;
    let id = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .context("codebook path needs a file name")?;
    let cb = train_codebook(&id, &books, &config)?;
    cb.save(out)?;
    println!("wrote codebook {id} ({}x{}) to {}", cb.grid_w, cb.grid_h, out.display());
    Ok(())
}

fn run(config: Option<&Path>, manifests: &[PathBuf], output: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut config = load_config(config)?;
    if let Some(o) = output {
        config.output_dir = o;
    }
    if let Some(s) = seed {
        config.seed = s;
    }
    let books = load_books(manifests)?;
    let report = run_suite(&books, &config)?;
    println!("wrote {} rows to {}", report.results.len(), report.csv_path.display());
    print!("{}", summary_tsv(&summarize(&report.results, Weighting::Unweighted)?));
    if report.retry.retried > 0 {
        println!("{}", report.retry);
    }
    Ok(())
}

fn report(results: &Path, out: Option<PathBuf>, band_width: f64, factor: &str, weighting: &str) -> Result<()> {
    let factor: Factor = factor.parse().map_err(anyhow::Error::msg)?;
    let weighting: Weighting = weighting.parse().map_err(anyhow::Error::msg)?;
    let rows = load_results(results)?;
    let dir = out.unwrap_or_else(|| results.parent().map(Path::to_path_buf).unwrap_or_default());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;

    let summary = summary_tsv(&summarize(&rows, weighting)?);
    print!("{summary}");
    write(&dir.join("summary.tsv"), &summary)?;
    write(&dir.join("histogram.tsv"), &histogram_report(&rows, band_width)?.to_tsv())?;
    let table = factor_tsv(&accuracy_vs_factor(&rows, factor), factor);
    write(&dir.join(format!("accuracy_vs_{}.tsv", factor.as_str())), &table)?;
    let retry = retry_counts(&rows);
    if retry.retried > 0 {
        println!("{retry}");
    }
    let failed = rows.iter().filter(|r| r.failed).count();
    println!("{failed} of {} runs failed", rows.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth { spec, out } => gen_synth(&spec, &out),
        Command::TrainCodebook { manifest, out, config } => train_cb(&manifest, &out, config.as_deref()),
        Command::Run { config, manifest, output, seed } => run(config.as_deref(), &manifest, output, seed),
        Command::Report { results, out, band_width, factor, weighting } => {
            report(&results, out, band_width, &factor, &weighting)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their cause in the message
            let mut msg = String::new();
            for cause in e.chain().map(ToString::to_string) {
                if !msg.contains(&cause) {
                    msg = if msg.is_empty() { cause } else { format!("{msg}: {cause}") };
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
