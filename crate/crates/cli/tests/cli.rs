use std::path::PathBuf;
use std::process::{Command, Output};

fn illposed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_illposed")).args(args).output().expect("spawn illposed")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("illposed-cli-{}-{name}", std::process::id()));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(csv: &'a str, column: &str) -> Vec<&'a str> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap()).collect()
}

const SMALL: &[&str] = &["run", "--problem", "phillips", "--n", "60", "--trials", "3", "--max-epochs", "10"];

#[test]
fn usage_errors_exit_one() {
    let lambda = illposed(&["run", "--method", "sgd", "--lambda0", "0.5"]);
    assert_eq!(lambda.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&lambda.stderr).contains("lambda0"));
    assert_eq!(illposed(&["verify", "everything"]).status.code(), Some(1));
    assert_eq!(illposed(&["run", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(illposed(&["table", "10"]).status.code(), Some(1));
    assert_eq!(illposed(&["run", "--problem", "deriv2"]).status.code(), Some(1));
    assert_eq!(illposed(&["run", "--n", "20", "--method", "dsgd", "--rank", "30"]).status.code(), Some(1));
}

#[test]
fn divergence_exits_two() {
    let mut args = SMALL.to_vec();
    args.extend(["--method", "sgd", "--c0", "200"]);
    let o = illposed(&args);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(field(&stdout(&o), "diverged"), ["true"]);
}

#[test]
fn oracle_suite_passes() {
    let o = illposed(&["verify", "oracles"]);
    assert_eq!(o.status.code(), Some(0));
    let report = stdout(&o);
    assert!(report.starts_with("suite,check,status,value,threshold\n"));
    assert!(field(&report, "status").iter().all(|s| *s == "pass"));
}

#[test]
fn summary_schema_and_flags_over_config() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# small run\nproblem = phillips\nn = 60\nmethod = dsgd\nrank = 5\ntrials = 3\nmax-epochs = 10\nseed = 4\n").unwrap();
    let o = illposed(&["run", "--config", cfg.to_str().unwrap(), "--seed", "9", "--trials", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.starts_with("problem,n,delta0,method,c0,alpha,alpha_prime,lambda0,rank,trials,max_epochs,seed,record,best_error,best_epoch,final_error,epochs_run,diverged\n"));
    assert_eq!(field(&s, "seed"), ["9"]);
    assert_eq!(field(&s, "trials"), ["2"]);
    assert_eq!(field(&s, "rank"), ["5"]);
    assert_eq!(field(&s, "method"), ["dsgd"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wall_time_s="));

    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(illposed(&["run", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = scratch("rerun");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.join(name);
        let mut args = SMALL.to_vec();
        args.extend(["--method", "dsgd", "--rank", "5", "--bias-variance", "--out", out.to_str().unwrap()]);
        let o = illposed(&args);
        assert_eq!(o.status.code(), Some(0));
        assert!(o.stdout.is_empty());
        outputs.push((std::fs::read(out.join("summary.csv")).unwrap(), std::fs::read_to_string(out.join("trajectory.csv")).unwrap()));
    }
    assert_eq!(outputs[0].0, outputs[1].0);
    assert_eq!(outputs[0].1, outputs[1].1);
    let traj = &outputs[0].1;
    assert!(traj.starts_with("epoch,mean_sq_error,mean_sq_residual_F,mean_sq_residual_G,bias_sq,variance\n"));
    assert_eq!(traj.lines().count(), 12);
    assert!(field(traj, "variance").iter().all(|v| v.parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn sgd_trajectory_leaves_surrogate_column_empty() {
    let dir = scratch("sgd");
    let mut args = SMALL.to_vec();
    args.extend(["--method", "sgd", "--out", dir.to_str().unwrap()]);
    assert_eq!(illposed(&args).status.code(), Some(0));
    let traj = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(field(&traj, "mean_sq_residual_G").iter().all(|v| v.is_empty()));
    assert!(field(&traj, "bias_sq").iter().all(|v| v.is_empty()));
}

#[test]
fn table_columns_and_exclusion_flags() {
    let dir = scratch("table");
    let (wide, rows) = (dir.join("t3.csv"), dir.join("t3_rows.csv"));
    let o = illposed(&[
        "table", "3", "--n", "40", "--trials", "2", "--max-epochs", "5", "--lm-epochs", "5", "--delta0", "0.001",
        "--out", wide.to_str().unwrap(), "--rows", rows.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let wide = std::fs::read_to_string(wide).unwrap();
    let header: Vec<&str> = wide.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 2 + 2 * 3);
    assert_eq!(&header[..2], ["delta0", "alpha"]);
    assert_eq!(wide.lines().count(), 1 + 3);
    assert!(wide.lines().skip(1).all(|l| l.split(',').count() == header.len()));

    let rows = std::fs::read_to_string(rows).unwrap();
    let alpha = field(&rows, "alpha");
    let excluded = field(&rows, "excluded");
    let method = field(&rows, "method");
    for ((a, e), m) in alpha.iter().zip(&excluded).zip(&method) {
        assert_eq!(*e == "true", a.parse::<f64>().unwrap() == 0.3, "alpha {a} method {m}");
    }
    // Landweber has no step decay, so only the alpha = 0 row carries it.
    assert_eq!(method.iter().filter(|m| **m == "lm").count(), 1);
}

#[test]
fn table_filters_are_validated() {
    assert_eq!(illposed(&["table", "1", "--n", "40", "--delta0", "0.2"]).status.code(), Some(1));
    assert_eq!(illposed(&["table", "1", "--n", "40", "--alpha", "0.2"]).status.code(), Some(1));
}

#[test]
fn regularization_helps_on_phillips() {
    let o = illposed(&["table", "1", "--n", "200", "--seed", "17", "--delta0", "0.001", "--alpha", "0.1", "--lm-epochs", "1"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    let dsgd: f64 = field(&s, "e_dsgd")[0].parse().unwrap();
    let sgd: f64 = field(&s, "e_sgd")[0].parse().unwrap();
    assert!(dsgd < sgd, "DSGD {dsgd} vs SGD {sgd}");
}

#[test]
fn problems_overview_and_spectrum() {
    let o = illposed(&["problems", "--n", "40"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert_eq!(field(&s, "problem"), ["phillips", "gravity", "shaw", "squared-phillips", "squared-shaw"]);
    assert_eq!(field(&s, "nonlinearity"), ["linear", "linear", "linear", "squared", "squared"]);

    let o = illposed(&["problems", "--n", "40", "--spectrum", "shaw"]);
    let s = stdout(&o);
    let sigma: Vec<f64> = field(&s, "sigma").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(sigma.len(), 40);
    assert!(sigma.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(illposed(&["problems", "--spectrum", "nope"]).status.code(), Some(1));
}
