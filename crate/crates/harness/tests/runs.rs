use gtdlab::output::write_csv;
use gtdlab::{figures, load_config, parse_config, run_experiment, ExperimentConfig};

const SMALL: &str = r#"
name = "small"
benchmark = "rw-tab"
n_runs = 4
n_steps = 300
record_every = 25
metrics = ["rmsve", "rmspbe"]

[[algorithms]]
name = "td"
alpha = 0.0625

[[algorithms]]
name = "impression-gtd"
alpha = 1.0
m = 8

[[algorithms]]
name = "minibatch-td"
alpha = 0.05
m = 8
"#;

fn csv_of(cfg: &ExperimentConfig, jobs: usize) -> String {
    let res = run_experiment(cfg, jobs).unwrap();
    let mut buf = Vec::new();
    write_csv(&res, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn same_seed_same_csv_regardless_of_threads() {
    let cfg = parse_config(SMALL, "x").unwrap();
    let a = csv_of(&cfg, 1);
    assert_eq!(a, csv_of(&cfg, 1));
    assert_eq!(a, csv_of(&cfg, 4));

    let mut other = cfg.clone();
    other.base_seed = 1;
    assert_ne!(a, csv_of(&other, 1));
}

#[test]
fn one_row_per_algorithm_metric_and_recorded_step() {
    let cfg = parse_config(SMALL, "x").unwrap();
    let text = csv_of(&cfg, 1);
    // steps 0, 25, ..., 275
    assert_eq!(text.lines().count(), 1 + 3 * 2 * 12);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    for row in rdr.records() {
        let row = row.unwrap();
        assert_eq!(&row[2], "rw-tab");
        assert_eq!(&row[6], "4");
        assert_eq!(&row[7], "0");
    }
}

#[test]
fn zero_steps_records_only_the_start() {
    let mut cfg = parse_config(SMALL, "x").unwrap();
    cfg.n_steps = 0;
    let res = run_experiment(&cfg, 1).unwrap();
    assert_eq!(res.steps, vec![0]);
    for s in &res.series {
        assert_eq!(s.mean.len(), 1);
        assert_eq!(s.stderr[0], 0.0);
    }
    // Every learner starts from the same weights.
    let first = res.series[0].mean[0];
    assert!(res.series.iter().filter(|s| s.metric == res.series[0].metric).all(|s| s.mean[0] == first));
}

#[test]
fn stderr_matches_per_run_values() {
    let cfg = parse_config(SMALL, "x").unwrap();
    let res = run_experiment(&cfg, 1).unwrap();
    let s = &res.series[0];
    let k = s.steps.len() - 1;
    let xs: Vec<f64> = s.values.iter().map(|v| v[k]).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((s.mean[k] - mean).abs() < 1e-12);
    assert!((s.stderr[k] - sd / n.sqrt()).abs() < 1e-12);
}

#[test]
fn td_on_baird_is_flagged_as_diverged() {
    let cfg = parse_config(
        "benchmark = \"baird\"\nn_runs = 3\nn_steps = 20000\nrecord_every = 1000\n[[algorithms]]\nname = \"td\"\nalpha = 0.1\n",
        "x",
    )
    .unwrap();
    let res = run_experiment(&cfg, 1).unwrap();
    let s = &res.series[0];
    assert!(s.diverged.iter().any(|&d| d));
    let last = s.steps.len() - 1;
    assert_eq!(s.n_valid[last] + s.n_diverged[last], 3);
}

#[test]
fn config_file_matches_builtin_figure() {
    let dir = tempfile::tempdir().unwrap();
    for name in figures::names() {
        let path = dir.path().join(format!("{name}.toml"));
        std::fs::write(&path, figures::source(name).unwrap()).unwrap();
        let from_file = load_config(&path).unwrap();
        assert_eq!(from_file, figures::figure(name).unwrap().unwrap(), "{name}");
    }
}
