use regopt_cli::config::{load, parse_onto, preset, Config, ExperimentKind, PRESETS};
use regopt_cli::error::exit;
use regopt_cli::pipeline;

#[test]
fn deconv_defaults_match_the_paper_setup() {
    let c = preset("deconv").unwrap();
    assert_eq!(c.experiment, ExperimentKind::Deconv);
    assert_eq!((c.deconv.train_size, c.deconv.test_size), (50_000, 20_000));
    let a = pipeline::operator(&c).unwrap();
    assert_eq!(a.shape(), (259, 200));
    let small = preset("deconv-small").unwrap();
    assert_eq!((small.deconv.train_size, small.deconv.test_size), (5_000, 2_000));
}

#[test]
fn dereverb_defaults_match_the_paper_setup() {
    let c = preset("dereverb").unwrap();
    assert_eq!(c.noise_levels(), [0.1, 0.2, 0.3, 0.4, 0.5].map(Some));
    assert_eq!((c.dereverb.train_size, c.dereverb.test_size), (21_147, 4_601));
    assert_eq!(pipeline::operator(&c).unwrap().shape(), (999, 500));
    assert_eq!((c.train.epochs, c.train.batch_size, c.train.initial_lr), (200, 32, 1e-4));
    let s = preset("dereverb-small").unwrap();
    assert_eq!((s.dereverb.train_size, s.dereverb.test_size, s.train.epochs), (2_000, 500, 20));
    assert_eq!(s.noise_levels(), [0.1, 0.3, 0.5].map(Some));
}

#[test]
fn every_preset_validates() {
    for p in PRESETS {
        preset(p).unwrap().validate().unwrap();
    }
}

#[test]
fn file_values_override_the_preset() {
    let base = preset("dereverb-small").unwrap();
    let c = parse_onto(&base, "seed = 3\n[train]\nepochs = 5\n", "test").unwrap();
    assert_eq!((c.seed, c.train.epochs), (3, 5));
    assert_eq!(c.train.initial_lr, base.train.initial_lr);
    assert_eq!(c.dereverb.train_size, 2_000);
}

#[test]
fn errors_name_the_field() {
    let base = Config::default();
    let cases = [
        ("[train]\nepochs = -1\n", "train.epochs"),
        ("[train]\nepochs = 0\n", "train.epochs"),
        ("[custom]\nnoise = \"pink\"\n", "custom.noise"),
        ("[fit]\nknown = true\n", "known"),
        ("learned = [\"aff\", \"lasso\"]\n", "learned[1]"),
        ("experiment = \"dereverb\"\n[dereverb]\netas = []\n", "dereverb.etas"),
        ("[deconv]\ntrain_size = 10\n[train]\nbatch_size = 32\n", "train.batch_size"),
    ];
    for (text, path) in cases {
        let e = parse_onto(&base, text, "cfg.toml").unwrap_err();
        assert_eq!(e.exit_code(), exit::CONFIG);
        assert!(e.message().contains(path), "{text:?}: {}", e.message());
        assert!(e.message().starts_with("cfg.toml"));
    }
}

#[test]
fn hash_tracks_the_resolved_config() {
    let a = preset("deconv").unwrap();
    let mut b = a.clone();
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
    let round = parse_onto(&Config::default(), &a.to_toml(), "round").unwrap();
    assert_eq!(round, a);
}

#[test]
fn missing_config_file_is_reported() {
    let e = load(Some(std::path::Path::new("/nonexistent/regopt.toml")), None).unwrap_err();
    assert_eq!(e.exit_code(), exit::CONFIG);
    assert!(e.message().contains("/nonexistent/regopt.toml"));
}
