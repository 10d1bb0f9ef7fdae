//! Command-line driver: data preparation, training, testing, gradient checks
//! and `(N, T)` sweeps. Every command writes CSV tables and a
//! `manifest.json` into its output directory.

pub mod manifest;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::{unix_now, RunManifest};
use output::{line_chart, write_chart, write_csv, write_pgm, Series};
use ttae::data::{
    corrupt, filter_and_split, load_idx, load_mnist, write_idx, CorruptionSpec, IdxElement, ImageSet, Split,
};
use ttae::training::{
    gradient_check, sweep, test, train, GradcheckConfig, PairedSet, SweepData, TrainConfig, TrainedModel,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Reconstructions written as images per run.
const MAX_IMAGES: usize = 8;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_NUMERICAL,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{}: {err}", path.display()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<ttae::Error> for CliError {
    fn from(e: ttae::Error) -> Self {
        use ttae::Error as E;
        let code = match &e {
            E::InvalidArgument(_) | E::ShapeMismatch(_) | E::Config { .. } => EXIT_USAGE,
            E::StepFailure(_) => EXIT_NUMERICAL,
            E::Idx { .. } | E::Data(_) | E::Io(_) => EXIT_IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "ttae", version, about = "Train and evaluate continuous-time TT autoencoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Split one MNIST digit into train/valid/test and corrupt the inputs.
    Prepare(PrepareArgs),
    /// Train on `<data>/train-*.idx`.
    Train(TrainArgs),
    /// Evaluate a trained model on one split.
    Test(TestArgs),
    /// Finite-difference check of the adjoint gradients.
    Gradcheck(GradcheckArgs),
    /// Train and test every `(N, T)` cell of a grid.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Noise,
    Blur,
}

#[derive(Args, Debug)]
pub struct PrepareArgs {
    #[arg(long)]
    pub mnist_dir: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u8).range(0..=9))]
    pub digit: u8,
    #[arg(long, value_enum)]
    pub task: Task,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub n_train: usize,
    #[arg(long, default_value_t = 20)]
    pub n_valid: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub blur_sigma: f64,
    #[arg(long, env = "OCTANE_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// `key = value` file; defaults to the denoising configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "OCTANE_SEED")]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct TestArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Defaults to the model's `test_batch_size`.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, env = "OCTANE_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Accepted one-sided slopes, `lo,hi`.
    #[arg(long, default_value = "0.8,1.2")]
    pub forward_band: String,
    /// Accepted central slopes, `lo,hi`.
    #[arg(long, default_value = "1.8,2.2")]
    pub central_band: String,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated layer counts.
    #[arg(long = "N-list", alias = "n-list")]
    pub n_list: String,
    /// Comma-separated final times.
    #[arg(long = "T-list", alias = "t-list")]
    pub t_list: String,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, env = "OCTANE_SEED")]
    pub seed: Option<u64>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare(a) => cmd_prepare(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Test(a) => cmd_test(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn split_paths(dir: &Path, split: &str) -> [PathBuf; 2] {
    [
        dir.join(format!("{split}-input.idx")),
        dir.join(format!("{split}-target.idx")),
    ]
}

/// Loads `<split>-input.idx` and `<split>-target.idx` from a prepared directory.
pub fn load_split(dir: &Path, split: &str) -> Result<PairedSet, CliError> {
    let tag = match split {
        "train" => Split::Train,
        "valid" => Split::Valid,
        "test" => Split::Test,
        _ => {
            return Err(CliError::usage(format!(
                "split must be train, valid or test, got {split:?}"
            )))
        }
    };
    let [input, target] = split_paths(dir, split);
    for p in [&input, &target] {
        if !p.is_file() {
            return Err(CliError::io(p, "no such file"));
        }
    }
    Ok(PairedSet::new(
        load_idx(&input)?.with_split(tag),
        load_idx(&target)?.with_split(tag),
    )?)
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<(TrainConfig, Vec<PathBuf>), CliError> {
    let (mut cfg, inputs) = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            (TrainConfig::parse(&text)?, vec![p.to_path_buf()])
        }
        None => (TrainConfig::default(), Vec::new()),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok((cfg, inputs))
}

fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

fn write_images(dir: &Path, prefix: &str, set: &ImageSet) -> Result<(), CliError> {
    for (i, m) in set.images().iter().take(MAX_IMAGES).enumerate() {
        write_pgm(&dir.join(format!("{prefix}_{i:03}.pgm")), m)?;
    }
    Ok(())
}

pub fn cmd_prepare(a: &PrepareArgs) -> Result<(), CliError> {
    let started = unix_now();
    let files = ["train-images-idx3-ubyte", "train-labels-idx1-ubyte"].map(|f| a.mnist_dir.join(f));
    for f in &files {
        if !f.is_file() {
            return Err(CliError::io(f, "no such file"));
        }
    }
    let all = load_mnist(&a.mnist_dir, true)?;
    let (tr, va, te) = filter_and_split(&all, a.digit, a.n_train, a.n_valid, a.n_test, a.seed)?;
    create_dir(&a.out)?;
    for (k, (name, set)) in [("train", tr), ("valid", va), ("test", te)].into_iter().enumerate() {
        let spec = match a.task {
            // Each split gets its own noise draw.
            Task::Noise => CorruptionSpec {
                noise_sigma: a.noise_sigma,
                ..CorruptionSpec::noise(a.seed.wrapping_mul(3).wrapping_add(k as u64 + 1))
            },
            Task::Blur => CorruptionSpec {
                blur_sigma: a.blur_sigma,
                kernel_size: CorruptionSpec::kernel_size_for(a.blur_sigma),
                ..CorruptionSpec::blur()
            },
        };
        let [input, target] = split_paths(&a.out, name);
        write_idx(&input, &corrupt(&set, &spec)?, IdxElement::F64)?;
        write_idx(&target, &set, IdxElement::F64)?;
    }
    let config = format!(
        "digit = {}\ntask = {:?}\nn_train = {}\nn_valid = {}\nn_test = {}\nnoise_sigma = {}\nblur_sigma = {}\n",
        a.digit, a.task, a.n_train, a.n_valid, a.n_test, a.noise_sigma, a.blur_sigma
    );
    RunManifest::new("prepare", config, a.seed, files.to_vec(), &a.out, started)?.write(&a.out)?;
    println!(
        "wrote {} / {} / {} images to {}",
        a.n_train,
        a.n_valid,
        a.n_test,
        a.out.display()
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<(), CliError> {
    let started = unix_now();
    let (cfg, mut inputs) = load_config(a.config.as_deref(), a.seed)?;
    let data = load_split(&a.data, "train")?;
    inputs.extend(split_paths(&a.data, "train"));
    create_dir(&a.out)?;

    let outcome = train(&data, &cfg)?;
    let model_path = a.out.join("model.json");
    fs::write(
        &model_path,
        serde_json::to_string(&outcome.model).expect("model serializes"),
    )
    .map_err(|e| CliError::io(&model_path, e))?;
    let cfg_path = a.out.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| CliError::io(&cfg_path, e))?;

    let metrics: Vec<Vec<String>> = outcome
        .rounds
        .iter()
        .map(|r| vec![r.round.to_string(), fmt_f64(r.alpha_train)])
        .collect();
    write_csv(&a.out.join("metrics.csv"), &["round", "alpha_train"], &metrics)?;

    let last = outcome.rounds.last().expect("at least one round");
    let p = &last.profile;
    let ranks: Vec<Vec<String>> = (0..p.forward_encoder.len())
        .map(|j| {
            vec![
                j.to_string(),
                p.forward_encoder[j].to_string(),
                p.forward_decoder[j].to_string(),
                p.backward_encoder[j].to_string(),
                p.backward_decoder[j].to_string(),
            ]
        })
        .collect();
    write_csv(
        &a.out.join("ranks.csv"),
        &["layer", "r_fe", "r_fd", "r_be", "r_bd"],
        &ranks,
    )?;

    let memory = outcome.memory()?;
    let mem_rows: Vec<Vec<String>> = memory
        .rows
        .iter()
        .map(|r| vec![r.layer.to_string(), r.tt_bytes.to_string(), r.dense_bytes.to_string()])
        .collect();
    write_csv(
        &a.out.join("memory.csv"),
        &["layer", "tt_bytes", "dense_bytes"],
        &mem_rows,
    )?;

    let on_train = test(&outcome.model, &data, cfg.test_batch_size)?;
    write_images(&a.out, "recon", &on_train.reconstructions)?;

    let series = |name: &str, v: &[usize]| Series {
        name: name.into(),
        points: v.iter().enumerate().map(|(j, &r)| (j as f64, r as f64)).collect(),
    };
    let chart = line_chart(
        "Rank profile",
        "layer",
        "rank",
        &[
            series("r_fe", &p.forward_encoder),
            series("r_fd", &p.forward_decoder),
            series("r_be", &p.backward_encoder),
            series("r_bd", &p.backward_decoder),
        ],
        false,
    );
    write_chart(&a.out.join("ranks.svg"), &chart)?;
    let mem_chart = line_chart(
        "Storage per layer state",
        "state",
        "bytes",
        &[
            Series {
                name: "TT".into(),
                points: memory
                    .rows
                    .iter()
                    .map(|r| (r.layer as f64, r.tt_bytes as f64))
                    .collect(),
            },
            Series {
                name: "dense".into(),
                points: memory
                    .rows
                    .iter()
                    .map(|r| (r.layer as f64, r.dense_bytes as f64))
                    .collect(),
            },
        ],
        false,
    );
    write_chart(&a.out.join("memory.svg"), &mem_chart)?;

    RunManifest::new("train", cfg.to_text(), cfg.seed, inputs, &a.out, started)?.write(&a.out)?;
    println!(
        "trained N={} in {:.1}s: alpha_train {:.4e}, memory savings {:.2}%",
        cfg.n_layers,
        outcome.wall_time_s,
        last.alpha_train,
        100.0 * memory.savings()
    );
    Ok(())
}

pub fn cmd_test(a: &TestArgs) -> Result<(), CliError> {
    let started = unix_now();
    let text = fs::read_to_string(&a.model).map_err(|e| CliError::io(&a.model, e))?;
    let model: TrainedModel =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", a.model.display())))?;
    let data = load_split(&a.data, &a.split)?;
    let batch = a.batch_size.unwrap_or(model.config.test_batch_size);
    create_dir(&a.out)?;
    let outcome = test(&model, &data, batch)?;
    let m = &outcome.metrics;
    write_csv(
        &a.out.join("test_metrics.csv"),
        &["split", "alpha_test", "mse", "psnr", "ssim"],
        &[vec![
            a.split.clone(),
            fmt_f64(m.alpha),
            fmt_f64(m.mse),
            fmt_f64(m.psnr_db),
            fmt_f64(m.ssim),
        ]],
    )?;
    let mut ranks = Vec::new();
    for (b, res) in outcome.batches.iter().enumerate() {
        for j in 0..res.encoder_ranks.len() {
            ranks.push(vec![
                b.to_string(),
                j.to_string(),
                res.encoder_ranks[j].to_string(),
                res.decoder_ranks[j].to_string(),
            ]);
        }
    }
    write_csv(
        &a.out.join("test_ranks.csv"),
        &["batch", "layer", "r_fe", "r_fd"],
        &ranks,
    )?;
    let mem_rows: Vec<Vec<String>> = outcome
        .memory
        .rows
        .iter()
        .map(|r| vec![r.layer.to_string(), r.tt_bytes.to_string(), r.dense_bytes.to_string()])
        .collect();
    write_csv(
        &a.out.join("test_memory.csv"),
        &["layer", "tt_bytes", "dense_bytes"],
        &mem_rows,
    )?;
    write_images(&a.out, "recon", &outcome.reconstructions)?;
    write_images(&a.out, "input", &data.input)?;

    let mut inputs = vec![a.model.clone()];
    inputs.extend(split_paths(&a.data, &a.split));
    RunManifest::new(
        "test",
        model.config.to_text(),
        model.config.seed,
        inputs,
        &a.out,
        started,
    )?
    .write(&a.out)?;
    println!(
        "{}: alpha {:.4e}, PSNR {:.2} dB, SSIM {:.4} over {} images",
        a.split,
        m.alpha,
        m.psnr_db,
        m.ssim,
        data.len()
    );
    Ok(())
}

fn parse_band(s: &str) -> Result<(f64, f64), CliError> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [lo, hi] => match (lo.parse::<f64>(), hi.parse::<f64>()) {
            (Ok(lo), Ok(hi)) if lo <= hi => Ok((lo, hi)),
            _ => Err(CliError::usage(format!("bad slope band {s:?}"))),
        },
        _ => Err(CliError::usage(format!("slope band must be `lo,hi`, got {s:?}"))),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("bad {what} entry {v:?} in {s:?}")))
        })
        .collect()
}

fn fmt_slope(s: Option<f64>) -> String {
    s.map_or_else(|| "exact".to_string(), |v| format!("{v:.4}"))
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<(), CliError> {
    let started = unix_now();
    let cfg = GradcheckConfig {
        seed: a.seed,
        forward_band: parse_band(&a.forward_band)?,
        central_band: parse_band(&a.central_band)?,
        ..GradcheckConfig::default()
    };
    create_dir(&a.out)?;
    let report = gradient_check(&cfg)?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.variable.name().to_string(),
                fmt_f64(r.h),
                fmt_f64(r.err_fwd),
                fmt_f64(r.err_central),
            ]
        })
        .collect();
    write_csv(
        &a.out.join("gradcheck.csv"),
        &["variable", "h", "err_fwd", "err_central"],
        &rows,
    )?;
    let slopes: Vec<Vec<String>> = report
        .slopes
        .iter()
        .map(|s| {
            vec![
                s.variable.name().to_string(),
                fmt_f64(s.analytic),
                fmt_slope(s.forward_slope),
                fmt_slope(s.central_slope),
                s.passed.to_string(),
            ]
        })
        .collect();
    write_csv(
        &a.out.join("gradcheck_slopes.csv"),
        &["variable", "analytic", "slope_fwd", "slope_central", "passed"],
        &slopes,
    )?;
    let config = serde_json::to_string_pretty(&cfg).expect("config serializes");
    RunManifest::new("gradcheck", config, a.seed, Vec::new(), &a.out, started)?.write(&a.out)?;
    for s in &report.slopes {
        println!(
            "{:<9} slope one-sided {:>7}  central {:>7}  {}",
            s.variable.name(),
            fmt_slope(s.forward_slope),
            fmt_slope(s.central_slope),
            if s.passed { "ok" } else { "FAIL" }
        );
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::numerical("gradient check: slope outside the accepted band"))
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<(), CliError> {
    let started = unix_now();
    let (cfg, mut inputs) = load_config(a.config.as_deref(), a.seed)?;
    let n_list: Vec<usize> = parse_list(&a.n_list, "N")?;
    let t_list: Vec<f64> = parse_list(&a.t_list, "T")?;
    let data = SweepData {
        train: load_split(&a.data, "train")?,
        valid: load_split(&a.data, "valid")?,
        test: load_split(&a.data, "test")?,
    };
    for split in ["train", "valid", "test"] {
        inputs.extend(split_paths(&a.data, split));
    }
    create_dir(&a.out)?;
    let rows = sweep(&data, &n_list, &t_list, &cfg, a.jobs)?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.n_layers.to_string(),
                r.final_time.to_string(),
                fmt_f64(r.tau),
                fmt_f64(r.alpha_train),
                fmt_f64(r.alpha_valid),
                fmt_f64(r.alpha_test),
                fmt_f64(r.psnr_db),
                fmt_f64(r.ssim),
            ]
        })
        .collect();
    write_csv(
        &a.out.join("sweep.csv"),
        &[
            "N",
            "T",
            "tau",
            "alpha_train",
            "alpha_valid",
            "alpha_test",
            "psnr",
            "ssim",
        ],
        &table,
    )?;
    let per_t = |value: fn(&ttae::training::SweepRow) -> f64| -> Vec<Series> {
        t_list
            .iter()
            .map(|&t| Series {
                name: format!("T = {t}"),
                points: rows
                    .iter()
                    .filter(|r| r.final_time == t)
                    .map(|r| (r.n_layers as f64, value(r)))
                    .collect(),
            })
            .collect()
    };
    write_chart(
        &a.out.join("sweep_alpha.svg"),
        &line_chart(
            "Test reconstruction error",
            "N",
            "alpha_test",
            &per_t(|r| r.alpha_test),
            true,
        ),
    )?;
    write_chart(
        &a.out.join("sweep_psnr.svg"),
        &line_chart("Test PSNR", "N", "PSNR (dB)", &per_t(|r| r.psnr_db), false),
    )?;
    RunManifest::new("sweep", cfg.to_text(), cfg.seed, inputs, &a.out, started)?.write(&a.out)?;
    println!("{} cells written to {}", rows.len(), a.out.join("sweep.csv").display());
    Ok(())
}
