use std::io::Write;

use ldp_recon::alphabet::BoundingBox;
use ldp_recon::experiment::{
    parse_csv, preset, run, to_csv_string, DataSpec, EstimatorKind, ExperimentConfig, Population,
};
use ldp_recon::Error;

fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(text).unwrap()
}

const NEAR_NOISELESS: &str = r#"
[alphabet]
kind = "linear"
size = 10

[data]
source = "binomial"
alpha = 0.5

[run]
n_schedule = [100000]
trials = 5
seed = 5

[[mechanisms]]
family = "krr"
param = 20.0

[estimation]
estimators = ["gibu"]
"#;

#[test]
fn near_noiseless_channel_recovers_truth() {
    let rows = run(&config(NEAR_NOISELESS)).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!((rows[0].estimator.as_str(), rows[0].post.as_str(), rows[0].metric.as_str()), ("gibu", "none", "emd"));
    assert!(rows.iter().all(|r| r.iterations.is_some()));
    // single trials carry sampling noise of the same order as the bound
    let mut v: Vec<f64> = rows.iter().map(|r| r.value).collect();
    v.sort_by(f64::total_cmp);
    assert!(v[2] < 0.01, "median emd {}", v[2]);
}

#[test]
fn rappor_preset_row_accounting() {
    let mut cfg = preset("rappor-high-privacy").unwrap();
    cfg.run.n_schedule = vec![200, 400];
    cfg.run.trials = 3;
    let rows = run(&cfg).unwrap();
    assert_eq!(rows.len(), 3 * 2 * 3);
    let mut keys: Vec<_> = rows.iter().map(|r| (r.n, r.trial, r.estimator.clone())).collect();
    keys.dedup();
    assert_eq!(keys.len(), rows.len());
    assert!(rows.iter().all(|r| r.value >= 0.0));
    // canonical (n, trial, estimator) order
    assert_eq!(rows[0].n, 200);
    assert_eq!(rows.last().unwrap().n, 400);
    assert_eq!(rows[0].estimator, "cr_rappor");
}

#[test]
fn runs_are_byte_identical() {
    let mut cfg = preset("geometric-krr-linear").unwrap();
    cfg.run.n_schedule = vec![300, 600];
    cfg.run.trials = 4;
    let a = to_csv_string(&run(&cfg).unwrap()).unwrap();
    let b = to_csv_string(&run(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let c = pool.install(|| to_csv_string(&run(&cfg).unwrap()).unwrap());
    assert_eq!(a, c);
    assert_eq!(to_csv_string(&parse_csv(a.as_bytes()).unwrap()).unwrap(), a);

    cfg.run.seed = 1;
    assert_ne!(to_csv_string(&run(&cfg).unwrap()).unwrap(), a);
}

#[test]
fn both_post_processings_are_reported() {
    let mut cfg = preset("krr-linear").unwrap();
    cfg.run.n_schedule = vec![500];
    cfg.run.trials = 1;
    cfg.estimation.post_processing = ldp_recon::experiment::PostSpec::Both;
    cfg.estimation.metrics = vec![ldp_recon::experiment::MetricKind::Emd, ldp_recon::experiment::MetricKind::L2sq];
    let rows = run(&cfg).unwrap();
    // cr_inv and cm_inv: 2 posts each; cr_ibu, cm_ibu, gibu: 1; times 2 metrics
    assert_eq!(rows.len(), (2 * 2 + 3) * 2);
    assert!(rows.iter().any(|r| r.estimator == "cm_inv" && r.post == "normalization"));
    assert!(rows.iter().filter(|r| r.estimator == "cm_inv").all(|r| r.iterations.is_none()));
}

#[test]
fn inapplicable_estimators_fail_validation() {
    let mut cfg = preset("rappor-low-privacy").unwrap();
    cfg.estimation.estimators.push(EstimatorKind::CmInv);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    let mut cfg = preset("krr-linear").unwrap();
    cfg.estimation.estimators = vec![EstimatorKind::CmRappor];
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));

    // an uninformative mixture cannot be inverted
    let flat = r#"
[alphabet]
kind = "linear"
size = 4

[data]
source = "binomial"

[[mechanisms]]
family = "krr"
param = 1e-13

[estimation]
estimators = ["cm_inv"]
"#;
    assert!(matches!(config(flat).validate(), Err(Error::Config(_))));
}

#[test]
fn invalid_configs_are_rejected() {
    let base = config(NEAR_NOISELESS);

    let mut c = base.clone();
    c.run.n_schedule = vec![10, 10];
    assert!(c.validate().is_err());

    let mut c = base.clone();
    c.mechanisms[0].weight = Some(0.7);
    assert!(c.validate().is_err());

    let mut c = base.clone();
    c.data = DataSpec::CellCounts { path: "x.csv".into() };
    assert!(c.validate().is_err());

    assert!(ExperimentConfig::from_toml("[alphabet]\nkind = \"hex\"\n").is_err());
    assert!(ExperimentConfig::from_toml(&format!("{NEAR_NOISELESS}\nbogus = 1\n")).is_err());

    let mut c = preset("krr-planar").unwrap();
    c.estimation.emd_coarsen = None;
    assert!(c.validate().is_err());
    c.estimation.emd_coarsen = Some([12, 4]);
    assert!(c.validate().is_err());
}

#[test]
fn checkin_file_drives_a_planar_run() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("checkins.txt");
    let b = BoundingBox::SAN_FRANCISCO;
    let mut f = std::fs::File::create(&path).unwrap();
    for i in 0..4000u64 {
        // two hot spots and a few far-away check-ins
        let (lat, lon) = match i % 5 {
            0..=2 => (b.lat_min + 0.01, b.lon_min + 0.01),
            3 => (b.lat_max - 0.01, b.lon_max - 0.01),
            _ => (40.7, -74.0),
        };
        writeln!(f, "{i}\t2010-10-19T23:55:27Z\t{lat}\t{lon}\t{}", i % 7).unwrap();
    }
    drop(f);
    let toml = format!(
        r#"
[alphabet]
kind = "planar"
cols = 6
rows = 4
cell_size = 2.0

[data]
source = "gowalla"
path = "{}"

[run]
n_schedule = [500, 3200]
trials = 2

[[mechanisms]]
family = "geom_planar"
param = 1.0

[[mechanisms]]
family = "krr"
param = 3.0

[estimation]
estimators = ["gibu", "cm_ibu"]
metrics = ["emd", "tv"]
"#,
        path.display()
    );
    let cfg = config(&toml);
    let v = cfg.validate().unwrap();
    let pop = ldp_recon::experiment::load_population(&cfg, &v.alphabet).unwrap();
    let Population::Pool { values, truth } = &pop else { panic!("expected a pool") };
    assert_eq!(values.len(), 3200);
    assert!((truth.probs()[0] - 0.75).abs() < 1e-12);
    assert!((truth.probs()[23] - 0.25).abs() < 1e-12);

    let rows = run(&cfg).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2 * 2);

    let mut too_many = cfg.clone();
    too_many.run.n_schedule = vec![5000];
    assert!(run(&too_many).is_err());
}
