use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cal(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cal"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cal")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = cal(dir, args);
    assert!(
        out.status.success(),
        "cal {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const SMALL_DATA: [&str; 6] = [
    "--set",
    "num_train_identities=10",
    "--set",
    "num_test_identities=6",
    "--set",
    "samples_per_clothes=4",
];

const SMALL_TRAIN: [&str; 6] = [
    "--set",
    "epochs=3",
    "--set",
    "identities_per_batch=4",
    "--set",
    "instances_per_identity=4",
];

fn small_dataset(dir: &Path) {
    let mut args = vec!["generate", "--seed", "3", "--out", "data.calds"];
    args.extend(SMALL_DATA);
    ok(dir, &args);
}

fn train(dir: &Path, out: &str, extra: &[&str]) {
    let mut args = vec!["train", "--data", "data.calds", "--out", out];
    args.extend(SMALL_TRAIN);
    args.extend(extra);
    ok(dir, &args);
}

#[test]
fn generate_is_deterministic_and_reports_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let first = ok(d, &["generate", "--seed", "7", "--out", "a.calds"]);
    ok(d, &["generate", "--seed", "7", "--out", "b.calds"]);
    assert_eq!(
        fs::read(d.join("a.calds")).unwrap(),
        fs::read(d.join("b.calds")).unwrap()
    );
    let total = first.lines().find(|l| l.starts_with("total")).unwrap();
    assert_eq!(total.split_whitespace().nth(1), Some("226"));
    let train = first.lines().find(|l| l.starts_with("train")).unwrap();
    assert_eq!(train.split_whitespace().nth(1), Some("75"));
    let registry = fs::read_to_string(d.join("a.calds.registry.txt")).unwrap();
    for line in registry.lines().filter(|l| !l.starts_with('#')) {
        let outfits = line.split_whitespace().count() - 2;
        assert!((2..=5).contains(&outfits), "{line}");
    }
    ok(d, &["generate", "--seed", "8", "--out", "c.calds"]);
    assert_ne!(
        fs::read(d.join("a.calds")).unwrap(),
        fs::read(d.join("c.calds")).unwrap()
    );
}

#[test]
fn single_outfit_warns_then_cc_eval_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let mut args = vec!["generate", "--clothes-per-identity", "1", "--out", "data.calds"];
    args.extend(SMALL_DATA);
    let out = cal(d, &args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    train(d, "r", &["--variant", "baseline"]);
    let out = cal(d, &["eval", "--data", "data.calds", "--out", "r", "--protocol", "cc"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.lines().last().unwrap().starts_with("error:"), "{err}");
    // with every protocol requested the cc section is skipped with a notice
    let out = cal(d, &["eval", "--data", "data.calds", "--out", "r"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("notice: protocol cc skipped"));
    assert!(fs::read_to_string(d.join("r/report.txt"))
        .unwrap()
        .contains("[cc]\nskipped:"));
}

#[test]
fn train_eval_stats_workflow() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    train(d, "base", &["--variant", "baseline"]);
    train(d, "cal", &["--variant", "cal", "--tau", "0.0625", "--cal-start", "1"]);
    for run in ["base", "cal"] {
        for f in ["checkpoint.ckpt", "metrics.csv", "config.txt"] {
            assert!(d.join(run).join(f).exists(), "{run}/{f}");
        }
        let report = ok(d, &["eval", "--data", "data.calds", "--out", run, "--run-id", run]);
        for section in ["[general]", "[cc]", "[sc]"] {
            assert!(report.contains(section), "{report}");
        }
        let csv = fs::read_to_string(d.join(run).join("results.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("run_id,variant,protocol,metric,value"));
        assert_eq!(csv.lines().count(), 1 + 3 * 5);
        let stats = ok(d, &["stats", "--data", "data.calds", "--out", run]);
        assert!(stats.contains("median p_pos"));
        assert!(d.join(run).join("convergence.csv").exists());
    }
    let metrics = fs::read_to_string(d.join("cal/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().next(), Some("epoch,lr,l_id,l_c,l_aux"));
    assert_eq!(metrics.lines().count(), 4);
    let config = fs::read_to_string(d.join("cal/config.txt")).unwrap();
    assert!(config.contains("temperature = 0.0625\n"));
    assert!(config.contains("cal_start_epoch = 1\n"));

    let sc_only = ok(d, &["eval", "--data", "data.calds", "--out", "cal", "--protocol", "sc"]);
    assert!(sc_only.contains("[sc]") && !sc_only.contains("[cc]") && !sc_only.contains("[general]"));
}

#[test]
fn config_sidecar_reproduces_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    train(d, "a", &["--variant", "cal_negative", "--epsilon", "0.3"]);
    ok(d, &["train", "--config", "a/config.txt", "--out", "b"]);
    for f in ["checkpoint.ckpt", "metrics.csv"] {
        assert_eq!(
            fs::read(d.join("a").join(f)).unwrap(),
            fs::read(d.join("b").join(f)).unwrap(),
            "{f}"
        );
    }
    // the dataset sidecar regenerates the dataset
    ok(
        d,
        &["generate", "--config", "data.calds.config.txt", "--out", "again.calds"],
    );
    assert_eq!(
        fs::read(d.join("data.calds")).unwrap(),
        fs::read(d.join("again.calds")).unwrap()
    );
    // flags override the file
    ok(
        d,
        &["train", "--config", "a/config.txt", "--out", "c", "--epsilon", "0.5"],
    );
    assert!(fs::read_to_string(d.join("c/config.txt"))
        .unwrap()
        .contains("epsilon = 0.5\n"));
}

#[test]
fn untrained_checkpoint_gives_wellformed_report() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    train(d, "r", &["--lr", "0"]);
    let report = ok(d, &["eval", "--data", "data.calds", "--out", "r"]);
    assert!(report.contains("top-1 = "));
    assert!(report.contains("mAP = "));
}

#[test]
fn sweep_writes_table_and_plot_data() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    small_dataset(d);
    let mut args = vec![
        "sweep",
        "--data",
        "data.calds",
        "--out",
        "s",
        "--epsilons",
        "0,0.1,0.3,0.5,1",
        "--inv-taus",
        "1,16",
    ];
    args.extend(SMALL_TRAIN);
    let table = ok(d, &args);
    assert_eq!(table.lines().count(), 1 + 5 + 2);
    let csv = fs::read_to_string(d.join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("epsilon,")).count(), 5);
    let plot = fs::read_to_string(d.join("s/sweep_epsilon_cc.dat")).unwrap();
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 5);
    for line in plot.lines().skip(1) {
        assert_eq!(line.split_whitespace().count(), 2);
    }
    assert!(d.join("s/sweep_inv_tau_sc.dat").exists());

    args[4] = "s2";
    ok(d, &args);
    assert_eq!(csv, fs::read_to_string(d.join("s2/sweep.csv")).unwrap());
}

#[test]
fn errors_exit_nonzero_with_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for args in [
        vec!["train", "--data", "missing.calds"],
        vec!["generate", "--set", "no_such_key=1"],
        vec!["generate", "--set", "min_clothes=0"],
        vec!["sweep", "--data", "missing.calds"],
    ] {
        let out = cal(d, &args);
        assert!(!out.status.success(), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.starts_with("error: "), "{err}");
    }
    small_dataset(d);
    let out = cal(d, &["train", "--data", "data.calds", "--out", "r", "--lr", "1e308"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("non-finite loss at epoch 0"), "{err}");
}
