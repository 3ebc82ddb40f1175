use std::path::Path;

use plom_core::datasets::{read_matrix_csv, write_matrix_csv};
use plom_core::pipeline::{self, read_manifest, DataSource, Layout, RunConfig, Stage};
use plom_core::Error;

fn small_config(out: &Path) -> RunConfig {
    let text = format!(
        r#"
seed = 3
out = "{}"

[data.synthetic]
variant = "ap1"
n_q = 20
n_w = 6
n_d = 30
n_r = 12

[learning]
n_mc = 4
m0 = 10
l0 = 20
eps_diff = 40.0
m = 8

[posterior]
n_s = 20
n_mc = 5
m0 = 4
l0 = 20
dt = 0.05
f0 = 1.5
m = 20

[sweep]
eps_grid = [0.5]
nd_grid = [30]
"#,
        out.display()
    );
    RunConfig::from_toml_str(&text).unwrap()
}

fn bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn full_run_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let h = pipeline::run_pipeline(&cfg, &Stage::ALL).unwrap();
    let layout = Layout::new(dir.path());
    let w = read_matrix_csv(layout.posterior.join("w.csv")).unwrap();
    assert_eq!((w.nrows(), w.ncols()), (6, 5 * 20));
    for f in ["w_hat.csv", "w_scaled.csv", "posterior.json"] {
        assert!(layout.posterior.join(f).is_file(), "{f}");
    }
    assert!(layout.validate.join("marginals.csv").is_file());
    assert_eq!(h.n_s, Some(20));
    assert_eq!(h.m_post, Some(20));
    assert_eq!(h.m, Some(8));
    assert!(h.nu_x.is_some() && h.nu_q.is_some() && h.nu_w.is_some() && h.nu1.is_some());

    let manifest = read_manifest(&layout.manifest).unwrap();
    let stages: Vec<_> = manifest.iter().map(|e| e.stage.as_str()).collect();
    assert_eq!(stages, ["generate", "learn", "reduce", "posterior", "validate", "run"]);
    assert!(manifest.iter().all(|e| e.seed == 3));
    let run = &manifest.last().unwrap().details;
    for key in ["nu_x", "m", "eps_diff", "nu_q", "nu_w", "nu1", "n_s", "m_post"] {
        assert!(!run[key].is_null(), "{key}");
    }
    let red = &manifest[2].details;
    assert!(red["whitening_w"][0].as_f64().unwrap() < 1e-10);
    assert!(red["whitening_w"][1].as_f64().unwrap() < 1e-8);
}

#[test]
fn resumed_stages_match_single_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline::run_pipeline(&small_config(a.path()), &Stage::ALL).unwrap();
    let cfg_b = small_config(b.path());
    pipeline::run_pipeline(&cfg_b, &[Stage::Generate, Stage::Learn]).unwrap();
    pipeline::run_pipeline(&cfg_b, &[Stage::Reduce]).unwrap();
    pipeline::run_pipeline(&cfg_b, &[Stage::Posterior]).unwrap();
    let (la, lb) = (Layout::new(a.path()), Layout::new(b.path()));
    for f in ["w_hat.csv", "w_scaled.csv", "w.csv"] {
        assert_eq!(bytes(&la.posterior.join(f)), bytes(&lb.posterior.join(f)), "{f}");
    }
}

#[test]
fn resume_from_saved_dataset_files() {
    let a = tempfile::tempdir().unwrap();
    let cfg = small_config(a.path());
    pipeline::run_pipeline(&cfg, &Stage::ALL).unwrap();
    let la = Layout::new(a.path());

    let b = tempfile::tempdir().unwrap();
    let mut cfg_b = small_config(b.path());
    cfg_b.data = DataSource::Files {
        training: la.data.join("training.csv"),
        n_q: 20,
        experimental: la.data.join("experimental.csv"),
        experimental_w: Some(la.data.join("experimental_w.csv")),
    };
    pipeline::run_pipeline(&cfg_b, &Stage::ALL).unwrap();
    let lb = Layout::new(b.path());
    assert_eq!(bytes(&la.posterior.join("w.csv")), bytes(&lb.posterior.join("w.csv")));
}

#[test]
fn missing_input_is_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut cfg = small_config(&out);
    cfg.data = DataSource::Files {
        training: dir.path().join("absent.csv"),
        n_q: 20,
        experimental: dir.path().join("absent_exp.csv"),
        experimental_w: None,
    };
    let err = pipeline::run_pipeline(&cfg, &Stage::ALL).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    assert!(!out.exists());
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let err = pipeline::run_pipeline(&cfg, &[Stage::Posterior]).unwrap_err();
    assert!(err.to_string().starts_with("stage `posterior` failed"), "{err}");
    assert!(matches!(err, Error::Stage { stage: "posterior", .. }));
}

#[test]
fn malformed_training_file_is_a_generate_error() {
    let dir = tempfile::tempdir().unwrap();
    let training = dir.path().join("training.csv");
    std::fs::write(&training, "2,2\n1,2\n3\n").unwrap();
    let exp = dir.path().join("exp.csv");
    write_matrix_csv(&nalgebra::DMatrix::from_element(1, 3, 1.0), &exp).unwrap();
    let mut cfg = small_config(&dir.path().join("run"));
    cfg.data = DataSource::Files {
        training,
        n_q: 1,
        experimental: exp,
        experimental_w: None,
    };
    let err = pipeline::run_pipeline(&cfg, &Stage::ALL).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "generate", .. }), "{err}");
}

#[test]
fn epsilon_sweep_rows_are_ordered() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let one = pipeline::run_epsilon_sweep(&cfg, &[0.5]).unwrap();
    assert_eq!(one.len(), 1);
    assert!(one[0].error.is_none(), "{:?}", one[0].error);
    let rows = pipeline::run_epsilon_sweep(&cfg, &[0.7, 0.3]).unwrap();
    let eps: Vec<f64> = rows.iter().map(|r| r.parameter).collect();
    assert_eq!(eps, [0.3, 0.7]);
    assert!(dir.path().join("sweep-eps.csv").is_file());
    let back = plom_core::validation::read_sweep_csv(&dir.path().join("sweep-eps.csv")).unwrap();
    assert_eq!(back, rows);
}

#[test]
fn nd_sweep_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let rows = pipeline::run_nd_sweep(&cfg, &[25]).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].parameter, 25.0);
    assert!(rows[0].ovl.is_some(), "{:?}", rows[0].error);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for entry in std::fs::read_dir(&root).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let cfg = RunConfig::from_toml_str(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if matches!(cfg.data, DataSource::Synthetic(_)) {
            cfg.validate().unwrap();
        }
    }
}

#[test]
fn epsilon_outside_range_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.density.epsilon = 1.0;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
}
