use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use sparse_auditory::audio::{read_wav, AudioSignal};
use sparse_auditory::harness::{
    evaluate, parse_snr_list, profile, synth_corpus, CorpusManifest, NoiseBank, NoiseGrid, Split, SynthCorpusConfig,
    WordClassifier,
};
use sparse_auditory::hmm::AnyRecognizer;
use sparse_auditory::ica::DictionaryHierarchy;
use sparse_auditory::mfcc::MfccConfig;
use sparse_auditory::pipeline::{
    run_pipeline, stage_seed, train_dictionary, train_mfcc_models, train_sparse_models, ExperimentConfig, Features,
    training_set, SparseFrontEnd, System, SystemConfig,
};
use sparse_auditory::audio::DEFAULT_SAMPLE_RATE;
use sparse_auditory::Error;

#[derive(Parser)]
#[command(name = "sparse-auditory", version, about = "Sparse hierarchical auditory features and word recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Built-in preset: sparse-exp2, sparse-exp1 or mfcc-baseline.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> anyhow::Result<ExperimentConfig> {
        let mut c = match (&self.preset, &self.config) {
            (_, Some(path)) => ExperimentConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            (Some(p), None) => ExperimentConfig::preset(p)?,
            (None, None) => ExperimentConfig::preset("sparse-exp2")?,
        };
        if let Some(s) = self.seed {
            c.seed = s;
        }
        Ok(c)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print a configuration as JSON.
    Config {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Write the synthetic pseudo-word corpus and its manifest.
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        classes: usize,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 20)]
        train_per_class: usize,
        #[arg(long, default_value_t = 20)]
        test_per_class: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Learn the ICA dictionary hierarchy on the training split.
    TrainDict {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write feature files (BFV1 or MFC1) for WAV inputs.
    Extract {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dictionary file; required for sparse configurations.
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one HMM per word on the training split.
    TrainModel {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        noise_dir: Option<PathBuf>,
    },
    /// Recognize WAV files; prints one JSON line per file.
    Recognize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
    },
    /// Recognition rates over a noise × SNR grid on the test split.
    Evaluate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated noise names; `file:<path>` reads a WAV file.
        #[arg(long, default_value = "babble,volvo,white")]
        noise: String,
        #[arg(long, default_value = "-5,0,10,20,40,clean", allow_hyphen_values = true)]
        snr: String,
        #[arg(long)]
        noise_dir: Option<PathBuf>,
        /// System name used in the report; defaults to the config name.
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Single-threaded real-time factors per stage on the test split.
    Profile {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        dict: Option<PathBuf>,
        #[arg(long)]
        manifest: PathBuf,
        /// Use at most this many test files.
        #[arg(long)]
        limit: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump dictionary bases as cochleogram-shaped CSV matrices.
    ExportBases {
        #[arg(long)]
        dict: PathBuf,
        #[arg(long, default_value_t = 0)]
        level: usize,
        #[arg(long, default_value_t = 64)]
        channels: usize,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full pipeline with cached intermediates.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        work_dir: PathBuf,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()).map(Error::root) {
        Some(Error::Numeric(_)) => 3,
        Some(Error::Config(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn sparse_front(config: &ExperimentConfig, dict: Option<&Path>) -> anyhow::Result<Option<SparseFrontEnd<f64>>> {
    match &config.system {
        SystemConfig::Sparse { frontend, binarize, .. } => {
            let path = dict.ok_or_else(|| Error::Config("sparse configurations need --dict".into()))?;
            let d = DictionaryHierarchy::load(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(Some(SparseFrontEnd::new(frontend.clone(), d, *binarize)?))
        }
        SystemConfig::Mfcc { .. } => Ok(None),
    }
}

fn mfcc_config(config: &ExperimentConfig) -> MfccConfig {
    match &config.system {
        SystemConfig::Mfcc { mfcc } => mfcc.clone(),
        _ => MfccConfig::default(),
    }
}

fn load_system(config: &ExperimentConfig, models: &Path, dict: Option<&Path>) -> anyhow::Result<System<f64>> {
    let recognizer = AnyRecognizer::load(models).with_context(|| format!("reading {}", models.display()))?;
    let front = match recognizer {
        AnyRecognizer::Binary(_) => sparse_front(config, dict)?,
        AnyRecognizer::Real(_) => None,
    };
    Ok(System::assemble(recognizer, front, &mfcc_config(config))?)
}

fn split_audio(
    manifest: &CorpusManifest,
    split: Split,
    noises: &NoiseBank,
) -> anyhow::Result<Vec<(String, AudioSignal<f64>)>> {
    manifest
        .split(split)
        .entries()
        .iter()
        .map(|e| Ok((e.label.clone(), manifest.load_audio(e, noises)?)))
        .collect()
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Config { cfg } => {
            println!("{}", serde_json::to_string_pretty(&cfg.load()?)?);
        }
        Command::SynthCorpus { out, classes, speakers, train_per_class, test_per_class, seed } => {
            let cfg = SynthCorpusConfig { classes, speakers, train_per_class, test_per_class, sample_rate: DEFAULT_SAMPLE_RATE, seed };
            let m = synth_corpus(&cfg, &out)?;
            println!("wrote {} utterances and {}", m.len(), out.join("manifest.json").display());
        }
        Command::TrainDict { cfg, manifest, out } => {
            let config = cfg.load()?;
            let SystemConfig::Sparse { frontend, hierarchy, .. } = &config.system else {
                bail!(Error::Config("train-dict needs a sparse configuration".into()));
            };
            let m = CorpusManifest::load(&manifest)?;
            let noises = NoiseBank::new(config.noise_dir.clone(), DEFAULT_SAMPLE_RATE, stage_seed(config.seed, "noise"));
            let audio: Vec<_> = split_audio(&training_set(&config, &m)?, Split::Train, &noises)?.into_iter().map(|(_, a)| a).collect();
            let dict = train_dictionary(&audio, frontend, hierarchy, stage_seed(config.seed, "train-dict"))?;
            dict.save(&out)?;
            for (h, d) in dict.levels().iter().enumerate() {
                if let Some(r) = d.report() {
                    println!(
                        "level {h}: K={} from {} examples, converged={} after {} iterations",
                        d.k(),
                        r.examples,
                        r.converged,
                        r.iterations
                    );
                }
            }
        }
        Command::Extract { cfg, dict, input, out_dir } => {
            let config = cfg.load()?;
            let front = sparse_front(&config, dict.as_deref())?;
            let system = match front {
                Some(front) => Extractor::Sparse(front),
                None => Extractor::Mfcc(mfcc_config(&config)),
            };
            std::fs::create_dir_all(&out_dir)?;
            for path in &input {
                let audio: AudioSignal<f64> = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("features");
                match system.extract(&audio)? {
                    Features::Binary(f) => f.save(out_dir.join(format!("{stem}.bfv")))?,
                    Features::Real(f) => f.save(out_dir.join(format!("{stem}.mfc")))?,
                }
            }
        }
        Command::TrainModel { cfg, manifest, dict, out, noise_dir } => {
            let mut config = cfg.load()?;
            if noise_dir.is_some() {
                config.noise_dir = noise_dir;
            }
            let m = CorpusManifest::load(&manifest)?;
            let noises = NoiseBank::new(config.noise_dir.clone(), DEFAULT_SAMPLE_RATE, stage_seed(config.seed, "noise"));
            let train = training_set(&config, &m)?;
            let labeled = split_audio(&train, Split::Train, &noises)?;
            let seed = stage_seed(config.seed, "train-model");
            let models = match sparse_front(&config, dict.as_deref())? {
                Some(front) => AnyRecognizer::Binary(train_sparse_models(&front, m.vocabulary(), &labeled, &config.model, seed)?),
                None => AnyRecognizer::Real(train_mfcc_models(&mfcc_config(&config), m.vocabulary(), &labeled, &config.model, seed)?),
            };
            models.save(&out)?;
            println!("trained {} word models into {}", models.labels().len(), out.display());
        }
        Command::Recognize { cfg, models, dict, input } => {
            let config = cfg.load()?;
            let system = load_system(&config, &models, dict.as_deref())?;
            let vocab = system.vocabulary();
            for path in &input {
                let audio: AudioSignal<f64> = read_wav(path).with_context(|| format!("reading {}", path.display()))?;
                let w = system.classify(&audio)?;
                println!("{}", serde_json::json!({"file": path, "word": vocab[w]}));
            }
        }
        Command::Evaluate { cfg, models, dict, manifest, noise, snr, noise_dir, system, out, csv } => {
            let mut config = cfg.load()?;
            if noise_dir.is_some() {
                config.noise_dir = noise_dir;
            }
            let sys = load_system(&config, &models, dict.as_deref())?;
            let m = CorpusManifest::load(&manifest)?;
            let grid = NoiseGrid {
                noises: noise.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect(),
                snrs: parse_snr_list(&snr)?,
            };
            let noises = NoiseBank::new(config.noise_dir.clone(), DEFAULT_SAMPLE_RATE, stage_seed(config.seed, "noise"));
            let name = system.unwrap_or_else(|| config.name.clone());
            let report = evaluate(&name, &sys, &m.split(Split::Test), &grid, &noises, stage_seed(config.seed, "evaluate"))?;
            report.save_json(&out)?;
            if let Some(csv) = csv {
                report.save_csv(csv)?;
            }
            println!("{}", serde_json::to_string_pretty(&report.rates)?);
        }
        Command::Profile { cfg, models, dict, manifest, limit, out } => {
            let config = cfg.load()?;
            let sys = load_system(&config, &models, dict.as_deref())?;
            let m = CorpusManifest::load(&manifest)?;
            let noises = NoiseBank::new(None, DEFAULT_SAMPLE_RATE, 0);
            let mut audio: Vec<_> = split_audio(&m, Split::Test, &noises)?.into_iter().map(|(_, a)| a).collect();
            if let Some(n) = limit {
                audio.truncate(n);
            }
            let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
            let report = pool.install(|| profile(&sys, &audio))?;
            let json = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                std::fs::write(out, &json)?;
            }
            println!("{json}");
        }
        Command::ExportBases { dict, level, channels, out_dir } => {
            let d: DictionaryHierarchy<f64> = DictionaryHierarchy::load(&dict)?;
            let fields = d.receptive_fields(level, channels)?;
            std::fs::create_dir_all(&out_dir)?;
            for (k, f) in fields.iter().enumerate() {
                let mut w = String::new();
                for r in 0..f.nrows() {
                    let row: Vec<String> = f.row(r).iter().map(|v| format!("{v:.6e}")).collect();
                    w.push_str(&row.join(","));
                    w.push('\n');
                }
                std::fs::write(out_dir.join(format!("level{level}_basis{k:03}.csv")), w)?;
            }
            println!("wrote {} bases of level {level} to {}", fields.len(), out_dir.display());
        }
        Command::Run { cfg, manifest, work_dir } => {
            let config = cfg.load()?;
            println!("{}", serde_json::to_string_pretty(&config)?);
            let m = CorpusManifest::load(&manifest)?;
            let out = run_pipeline::<f64>(&config, &m, &work_dir)?;
            if !out.cache_hits.is_empty() {
                eprintln!("cached stages: {}", out.cache_hits.join(", "));
            }
            println!("{}", serde_json::to_string_pretty(&out.report.rates)?);
            println!("report: {}", out.report_json.display());
        }
    }
    Ok(())
}

enum Extractor {
    Sparse(SparseFrontEnd<f64>),
    Mfcc(MfccConfig),
}

impl Extractor {
    fn extract(&self, audio: &AudioSignal<f64>) -> anyhow::Result<Features<f64>> {
        Ok(match self {
            Extractor::Sparse(f) => Features::Binary(f.extract(audio)?),
            Extractor::Mfcc(c) => Features::Real(sparse_auditory::mfcc::mfcc(audio, c)?),
        })
    }
}
