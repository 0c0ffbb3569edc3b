use sparse_auditory::frontend::FrontendConfig;
use sparse_auditory::harness::{synth_corpus, CorpusManifest, NoiseGrid, SynthCorpusConfig};
use sparse_auditory::hmm::HmmConfig;
use sparse_auditory::ica::{HierarchyConfig, IcaOptions, LevelConfig};
use sparse_auditory::pipeline::{run_pipeline, ExperimentConfig, SystemConfig, TrainingCondition};
use sparse_auditory::projection::{BinarizePolicy, WindowSpec};

fn corpus(dir: &std::path::Path) -> CorpusManifest {
    let cfg = SynthCorpusConfig {
        classes: 3,
        speakers: 2,
        train_per_class: 4,
        test_per_class: 2,
        ..Default::default()
    };
    synth_corpus(&cfg, dir).unwrap()
}

fn small(mut c: ExperimentConfig) -> ExperimentConfig {
    c.model = HmmConfig {
        n_states: 4,
        n_components: 2,
        iterations: 4,
        ..HmmConfig::default()
    };
    c.evaluation = NoiseGrid {
        noises: vec!["white".into()],
        snrs: vec![10.0, f64::INFINITY],
    };
    c
}

fn tiny_sparse() -> ExperimentConfig {
    let mut c = small(ExperimentConfig::preset("sparse-exp2").unwrap());
    c.name = "tiny-sparse".into();
    c.system = SystemConfig::Sparse {
        frontend: FrontendConfig {
            n_channels: 16,
            ..FrontendConfig::default()
        },
        hierarchy: HierarchyConfig {
            levels: vec![
                LevelConfig {
                    k: 8,
                    window: WindowSpec::window(8, 20, 0.5, 0.5),
                    max_examples: 1500,
                    pca_dim: None,
                },
                LevelConfig {
                    k: 8,
                    window: WindowSpec::blocks(2, 2, 0.25, 0.25),
                    max_examples: 1500,
                    pca_dim: None,
                },
            ],
            ica: IcaOptions::default(),
        },
        binarize: BinarizePolicy::default(),
    };
    c
}

#[test]
fn cached_rerun_matches_cold_run() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(&dir.path().join("corpus"));
    for config in [tiny_sparse(), small(ExperimentConfig::preset("mfcc-baseline").unwrap())] {
        let work = dir.path().join("work");
        let cold = run_pipeline::<f64>(&config, &manifest, &work).unwrap();
        assert!(cold.cache_hits.is_empty());
        let warm = run_pipeline::<f64>(&config, &manifest, &work).unwrap();
        assert_eq!(warm.cache_hits.len(), if config.is_sparse() { 3 } else { 2 });
        assert_eq!(cold.report, warm.report);
        assert_eq!(std::fs::read(&cold.models).unwrap(), std::fs::read(&warm.models).unwrap());

        // A fresh directory recomputes everything and lands on the same bytes.
        let other = run_pipeline::<f64>(&config, &manifest, dir.path().join("fresh")).unwrap();
        assert_eq!(other.report, cold.report);
        assert_eq!(std::fs::read(&other.models).unwrap(), std::fs::read(&cold.models).unwrap());
    }
}

#[test]
fn changed_settings_miss_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(&dir.path().join("corpus"));
    let work = dir.path().join("work");
    let base = small(ExperimentConfig::preset("mfcc-baseline").unwrap());
    run_pipeline::<f64>(&base, &manifest, &work).unwrap();

    let mut grid = base.clone();
    grid.evaluation.snrs = vec![20.0];
    assert_eq!(run_pipeline::<f64>(&grid, &manifest, &work).unwrap().cache_hits, vec!["train-model"]);

    let mut multi = base.clone();
    multi.training = TrainingCondition::Multicondition {
        noises: vec!["white".into()],
        snr_db: 20.0,
    };
    assert!(run_pipeline::<f64>(&multi, &manifest, &work).unwrap().cache_hits.is_empty());

    let mut reseeded = base;
    reseeded.seed = 99;
    assert!(run_pipeline::<f64>(&reseeded, &manifest, &work).unwrap().cache_hits.is_empty());
}

#[test]
fn reports_are_written_next_to_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(&dir.path().join("corpus"));
    let config = small(ExperimentConfig::preset("mfcc-baseline").unwrap());
    let out = run_pipeline::<f64>(&config, &manifest, dir.path()).unwrap();
    assert!(out.report_json.ends_with("mfcc-baseline-report.json"));
    let csv = std::fs::read_to_string(&out.report_csv).unwrap();
    assert!(csv.lines().count() >= 3);
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(format!("{}.meta.json", out.models.display())).unwrap(),
    )
    .unwrap();
    assert_eq!(meta["stage"], "model");
    assert_eq!(meta["seed"], 1);
}
