use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use leanreg::cli::{
    load_config, read_csv, run_command, run_with_threads, write_csv, Command, ReferenceFlag, Report, RunConfig,
    VarianceFlag,
};
use leanreg::simlab::DgpKind;
use leanreg::Error;
use proptest::prelude::*;
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn example(dir: &TempDir) -> PathBuf {
    write(dir, "example.csv", "x,y\n0,0\n1,1\n2,4\n")
}

fn data_config(command: Command, path: &Path) -> RunConfig {
    let mut c = RunConfig::new(command);
    c.data = Some(path.to_path_buf());
    c.response = Some("y".into());
    c.add_intercept = true;
    c
}

fn results_json(r: &Report) -> String {
    serde_json::to_string(r.results.as_ref().expect("command succeeded")).unwrap()
}

#[test]
fn read_example_file() {
    let dir = TempDir::new().unwrap();
    let d = read_csv(&example(&dir), "y", true).unwrap();
    assert_eq!(d.columns, vec!["(intercept)", "x"]);
    assert_eq!(d.data.y, vec![0.0, 1.0, 4.0]);
    assert_eq!(d.data.x.row(2), &[1.0, 2.0]);
}

#[test]
fn read_errors() {
    let dir = TempDir::new().unwrap();
    assert!(matches!(read_csv(&example(&dir), "z", true), Err(Error::MissingColumn(c)) if c == "z"));
    let nan = write(&dir, "nan.csv", "x,y\n0,0\n1,NaN\n");
    match read_csv(&nan, "y", true) {
        Err(Error::NonNumericCell { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "y")),
        other => panic!("{other:?}"),
    }
    let inf = write(&dir, "inf.csv", "x,y\ninf,0\n");
    assert!(matches!(read_csv(&inf, "y", false), Err(Error::NonNumericCell { .. })));
    let text = write(&dir, "text.csv", "x,y\nabc,0\n");
    assert!(matches!(read_csv(&text, "y", false), Err(Error::NonNumericCell { .. })));
    let empty = write(&dir, "empty.csv", "x,y\n");
    assert!(matches!(read_csv(&empty, "y", true), Err(Error::EmptyData)));
    let only_y = write(&dir, "only_y.csv", "y\n1\n2\n");
    assert!(matches!(read_csv(&only_y, "y", false), Err(Error::EmptyData)));
}

#[test]
fn fit_example_matches_hand_values() {
    let dir = TempDir::new().unwrap();
    let r = run_command(data_config(Command::Fit, &example(&dir)));
    assert_eq!(r.exit_code(), 0);
    let res = r.results.unwrap();
    let beta: Vec<f64> = serde_json::from_value(res["beta_hat"].clone()).unwrap();
    assert!((beta[0] + 1.0 / 3.0).abs() < 1e-12 && (beta[1] - 2.0).abs() < 1e-12);
    // Σ̂⁻¹ Ǩ Σ̂⁻¹ with Σ̂⁻¹ = [[2.5, −1.5], [−1.5, 1.5]], Ǩ = [[2/9, 2/9], [2/9, 8/27]]
    let avar: Vec<Vec<f64>> = serde_json::from_value(res["sandwich"]["avar"].clone()).unwrap();
    let want = [[7.0 / 18.0, -1.0 / 6.0], [-1.0 / 6.0, 1.0 / 6.0]];
    for j in 0..2 {
        for k in 0..2 {
            assert!((avar[j][k] - want[j][k]).abs() < 1e-12, "{avar:?}");
        }
    }
    let se: Vec<f64> = serde_json::from_value(res["sandwich"]["se"].clone()).unwrap();
    assert!((se[1] - (1.0f64 / 18.0).sqrt()).abs() < 1e-12);
    let classical: Vec<f64> = serde_json::from_value(res["classical"]["se"].clone()).unwrap();
    // σ̂² = (2/3)/(3 − 2), se_1 = sqrt(σ̂² · 1.5 / 3)
    assert!((classical[1] - (1.0f64 / 3.0).sqrt()).abs() < 1e-12);
}

#[test]
fn structured_errors_and_exit_codes() {
    let dir = TempDir::new().unwrap();
    let mut c = data_config(Command::Fit, &example(&dir));
    c.response = Some("nope".into());
    let r = run_command(c);
    assert_eq!(r.exit_code(), 3);
    assert_eq!(r.error.as_ref().unwrap().kind, "MissingColumn");
    assert!(r.results.is_none());

    let sing = write(&dir, "sing.csv", "x,y\n1,0\n1,1\n1,4\n");
    let r = run_command(data_config(Command::Fit, &sing));
    assert_eq!(r.exit_code(), 4);
    assert_eq!(r.error.as_ref().unwrap().class, "numerical");

    let r = run_command(data_config(Command::Bootstrap, &example(&dir)));
    assert_eq!(r.exit_code(), 2, "missing seed is a usage error");

    let mut c = data_config(Command::Fit, &example(&dir));
    c.alpha = 1.5;
    assert_eq!(run_command(c).exit_code(), 2);

    let mut c = RunConfig::new(Command::Simulate);
    c.seed = Some(1);
    assert_eq!(run_command(c).exit_code(), 2, "simulate needs a DGP");
}

fn stochastic_configs(dir: &TempDir) -> Vec<RunConfig> {
    let data = write(
        dir,
        "het.csv",
        "u,y\n0.1,1.2\n0.2,0.9\n0.35,1.9\n0.4,1.1\n0.5,1.6\n0.62,1.2\n0.7,2.4\n0.81,1.4\n0.9,2.9\n0.97,1.7\n",
    );
    let mut boot = data_config(Command::Bootstrap, &data);
    boot.seed = Some(17);
    boot.b = 300;
    let mut boot_m = boot.clone();
    boot_m.m = Some(6);
    let mut test = data_config(Command::Test, &data);
    test.seed = Some(4);
    test.b = 300;
    test.reference = ReferenceFlag::Bootstrap;
    let mut sim = RunConfig::new(Command::Simulate);
    sim.dgp = Some(DgpKind::FixedXNonidenticalMean);
    sim.n = Some(40);
    sim.reps = Some(12);
    sim.b = 100;
    sim.seed = Some(9);
    sim.n_grid = Some(vec![20, 40]);
    let mut check = RunConfig::new(Command::Check);
    check.dgp = Some(DgpKind::QuadraticMeanIid);
    check.n = Some(50);
    check.reps = Some(5);
    check.seed = Some(2);
    vec![boot, boot_m, test, sim, check]
}

#[test]
fn replay_is_byte_identical_at_any_thread_count() {
    let dir = TempDir::new().unwrap();
    for config in stochastic_configs(&dir) {
        let mut first = config.clone();
        first.threads = Some(1);
        let a = run_with_threads(first);
        assert_eq!(a.exit_code(), 0, "{:?}", a.error);

        let saved = dir.path().join("report.json");
        std::fs::write(&saved, a.to_json()).unwrap();
        let mut replay = load_config(&saved).unwrap();
        assert_eq!(replay.seed, config.seed, "the seed is embedded");
        replay.threads = Some(3);
        let b = run_with_threads(replay);
        assert_eq!(results_json(&a), results_json(&b), "{:?}", config.command);
    }
}

#[test]
fn simulate_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let mut c = RunConfig::new(Command::Simulate);
    c.dgp = Some(DgpKind::HeteroscedasticIid);
    c.n = Some(30);
    c.reps = Some(1);
    c.b = 50;
    c.seed = Some(5);
    c.out = Some(dir.path().join("sim.json"));
    let r = run_command(c);
    assert_eq!(r.exit_code(), 0, "{:?}", r.error);
    let json = std::fs::read_to_string(dir.path().join("sim.json")).unwrap();
    assert_eq!(json, r.to_json());
    let csv = std::fs::read_to_string(dir.path().join("sim.csv")).unwrap();
    assert!(csv.starts_with("scenario,n,used,method,kind,coord,proportion,mc_se,mean_half_width\n"));
    let res = r.results.unwrap();
    for row in res["coverage"]["rows"].as_array().unwrap() {
        let p = row["proportion"].as_f64().unwrap();
        assert!(p == 0.0 || p == 1.0);
    }
}

#[test]
fn test_command_variants() {
    let dir = TempDir::new().unwrap();
    let path = example(&dir);
    let mut c = data_config(Command::Test, &path);
    c.coord = Some(1);
    c.null = Some(vec![2.0]);
    let r = run_command(c.clone());
    let res = r.results.unwrap();
    assert!(res["test"]["statistic"].as_f64().unwrap().abs() < 1e-9);
    assert!(!r.warnings.is_empty());
    c.reference = ReferenceFlag::T;
    c.variance = VarianceFlag::Classical;
    let r = run_command(c);
    assert_eq!(r.results.unwrap()["test"]["reference"]["kind"], "student_t");
    let mut c = data_config(Command::Test, &path);
    c.null = Some(vec![0.0]);
    assert_eq!(run_command(c).exit_code(), 2);
}

#[test]
fn binary_exit_codes() {
    let dir = TempDir::new().unwrap();
    let path = example(&dir);
    let bin = env!("CARGO_BIN_EXE_leanreg");
    let ok = Proc::new(bin)
        .args(["fit", "--data"])
        .arg(&path)
        .args(["--response", "y", "--add-intercept"])
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    let report: Report = serde_json::from_slice(&ok.stdout).unwrap();
    assert_eq!(report.command, Command::Fit);

    let bad = Proc::new(bin).args(["fit", "--data"]).arg(&path).args(["--response", "q"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));
    let report: Report = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report.error.unwrap().kind, "MissingColumn");

    let usage = Proc::new(bin).args(["fit", "--variance", "hc7"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(2));

    let env_seed = Proc::new(bin)
        .args(["bootstrap", "--B", "50", "--data"])
        .arg(&path)
        .args(["--response", "y", "--add-intercept"])
        .env("LEANREG_SEED", "123")
        .output()
        .unwrap();
    assert_eq!(env_seed.status.code(), Some(0));
    let report: Report = serde_json::from_slice(&env_seed.stdout).unwrap();
    assert_eq!(report.config.seed, Some(123));

    let saved = dir.path().join("boot.json");
    std::fs::write(&saved, &env_seed.stdout).unwrap();
    let replay =
        Proc::new(bin).args(["replay", "--threads", "2"]).arg(&saved).env_remove("LEANREG_SEED").output().unwrap();
    assert_eq!(replay.status.code(), Some(0));
    let again: Report = serde_json::from_slice(&replay.stdout).unwrap();
    assert_eq!(serde_json::to_string(&again.results).unwrap(), serde_json::to_string(&report.results).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn csv_round_trip(
        rows in prop::collection::vec(prop::collection::vec(-1e12..1e12f64, 3), 1..20),
        resp in 0usize..3,
    ) {
        let dir = TempDir::new().unwrap();
        let mut body = String::from("a,b,c\n");
        for r in &rows {
            body.push_str(&format!("{:e},{},{}\n", r[0], r[1], r[2]));
        }
        let src = write(&dir, "in.csv", &body);
        let name = ["a", "b", "c"][resp];
        let d = read_csv(&src, name, true).unwrap();
        let dst = dir.path().join("out.csv");
        write_csv(&dst, &d).unwrap();
        let back = read_csv(&dst, name, true).unwrap();
        prop_assert_eq!(&back, &d);
        prop_assert_eq!(back.data.x.as_slice(), d.data.x.as_slice());
        // numeric content is bit-identical to the original values
        for (i, r) in rows.iter().enumerate() {
            prop_assert_eq!(back.data.y[i].to_bits(), r[resp].to_bits());
        }
    }
}
