use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use homog_core::reference::{checkerboard4, CHECKERBOARD4_AHOM};

fn homog(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homog"))
        .args(args)
        .output()
        .expect("run homog")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("homog-cli-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn value(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn coeffs_order_two() {
    let o = homog(&["coeffs", "--k", "2"]);
    assert!(o.status.success());
    let out = stdout(&o);
    for line in ["eta[0] = -3", "eta[1] = -2", "nu[0][1] = 5"] {
        assert!(out.lines().any(|l| l == line), "{out}");
    }
}

#[test]
fn coeffs_decimal_format() {
    let o = homog(&["coeffs", "--k", "3", "--format", "decimal"]);
    assert!(o.status.success());
    let eta0: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("eta[0] = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((eta0 + 55.0 / 9.0).abs() < 1e-15);
}

#[test]
fn coeffs_out_of_range_is_a_usage_error() {
    for k in ["0", "13"] {
        let o = homog(&["coeffs", "--k", k]);
        assert_eq!(o.status.code(), Some(2), "k={k}");
        assert!(stderr(&o).contains("k"), "{}", stderr(&o));
    }
}

#[test]
fn exact_on_homogeneous_and_reference_cells() {
    let o = homog(&["exact", "--env", "homogeneous:3.5:5x5"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "3.5");
    let o = homog(&["exact", "--env", "builtin:checkerboard4"]);
    let v: f64 = stdout(&o).trim().parse().unwrap();
    assert!((v - CHECKERBOARD4_AHOM).abs() <= 1e-12 * CHECKERBOARD4_AHOM);
}

#[test]
fn environment_files_are_accepted() {
    let path = scratch("cell.txt");
    fs::write(&path, checkerboard4().to_text()).unwrap();
    let from_file = homog(&["exact", "--env", path.to_str().unwrap()]);
    let builtin = homog(&["exact", "--env", "builtin:checkerboard4"]);
    assert!(from_file.status.success(), "{}", stderr(&from_file));
    assert_eq!(stdout(&from_file), stdout(&builtin));
    let missing = homog(&["exact", "--env", "/nonexistent/cell.txt"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn estimate_key_value_and_csv_agree() {
    let base = [
        "estimate", "--env", "builtin:checkerboard4", "--R", "21", "--mu", "0.5", "--k", "2",
        "--L", "5",
    ];
    let kv = homog(&base);
    assert!(kv.status.success(), "{}", stderr(&kv));
    let est = value(&stdout(&kv), "estimate");
    let mut csv_args = base.to_vec();
    csv_args.extend(["--format", "csv"]);
    let csv = stdout(&homog(&csv_args));
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "estimate").unwrap();
    assert_eq!(row[col].parse::<f64>().unwrap(), est);
    assert!((est - CHECKERBOARD4_AHOM).abs() < 0.5);
}

#[test]
fn estimate_exit_codes() {
    let run = |extra: &[&str]| {
        let mut args = vec!["estimate", "--env", "builtin:checkerboard4", "--R", "21", "--k", "2"];
        args.extend_from_slice(extra);
        homog(&args).status.code()
    };
    assert_eq!(run(&["--mu", "0.5", "--L", "30"]), Some(2));
    assert_eq!(run(&["--mu", "-1", "--L", "5"]), Some(2));
    assert_eq!(run(&["--mu", "0.5", "--L", "5", "--filter", "wavelet"]), Some(2));
    // unreachable tolerance: the solver gives up
    assert_eq!(run(&["--mu", "0.5", "--L", "5", "--tol", "1e-30"]), Some(1));
    assert_eq!(run(&["--mu", "0.5", "--L", "5"]), Some(0));
}

#[test]
fn spectrum_agrees_with_corrector_route() {
    let o = homog(&["spectrum", "--env", "builtin:checkerboard4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(value(&out, "ahom_relative_difference") <= 1e-10);
    assert!(value(&out, "gap") > 0.0);
    assert!(out.lines().any(|l| l == "lambda,weight"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let path = scratch("estimate.conf");
    fs::write(
        &path,
        "# estimate defaults\nenv=builtin:checkerboard4\nR=21\nmu=0.5\nk=2\nL=5\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let o = homog(&["estimate", "--config", p]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(value(&stdout(&o), "k"), 2.0);
    let o = homog(&["estimate", "--config", p, "--k", "1"]);
    assert_eq!(value(&stdout(&o), "k"), 1.0);
    fs::write(&path, "not a key value line\n").unwrap();
    assert_eq!(homog(&["estimate", "--config", p]).status.code(), Some(2));
}

#[test]
fn convergence_echo_is_a_reusable_config() {
    let out = scratch("conv.csv");
    let o = homog(&[
        "convergence", "--env", "builtin:checkerboard4", "--sizes", "6,9", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("slope_k1="));
    let first = fs::read_to_string(&out).unwrap();
    let config: String = first
        .lines()
        .filter_map(|l| l.strip_prefix("# "))
        .map(|l| format!("{l}\n"))
        .collect();
    let conf = scratch("conv.conf");
    fs::write(&conf, config).unwrap();
    let again = scratch("conv2.csv");
    let o = homog(&[
        "convergence", "--config", conf.to_str().unwrap(), "--out", again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(first, fs::read_to_string(&again).unwrap());
}

#[test]
fn variance_samples_do_not_depend_on_thread_count() {
    let run = |threads: &str, tag: &str| {
        let samples = scratch(&format!("samples_{tag}.csv"));
        let o = homog(&[
            "--threads", threads, "variance", "--law", "twopoint:1:4:0.5", "--seed", "3",
            "--k", "1,2", "--sizes", "4,8", "--samples", "4", "--out",
            samples.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = fs::read_to_string(samples).unwrap();
        let rows: Vec<String> = text
            .lines()
            .filter(|l| !l.starts_with('#'))
            .map(String::from)
            .collect();
        (rows, stdout(&o))
    };
    let (one, summary_one) = run("1", "t1");
    let (two, summary_two) = run("3", "t3");
    assert_eq!(one, two);
    assert_eq!(one.len(), 1 + 2 * 2 * 4);
    assert!(summary_one.contains("size,k,n,mean,variance,stderr"));
    assert_eq!(summary_one.lines().count(), summary_two.lines().count());
}

#[test]
fn variance_rejects_bad_laws() {
    let o = homog(&["variance", "--law", "twopoint:1:4:1.5", "--sizes", "4,8", "--samples", "3"]);
    assert_eq!(o.status.code(), Some(2));
}
