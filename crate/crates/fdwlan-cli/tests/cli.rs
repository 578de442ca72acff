use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fdwlan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdwlan"))
        .args(args)
        .output()
        .expect("spawn fdwlan")
}

fn ok(args: &[&str]) -> String {
    let out = fdwlan(args);
    assert!(
        out.status.success(),
        "fdwlan {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

struct Csv {
    schema: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(text: &str) -> Self {
        let (first, rest) = text.split_once('\n').unwrap();
        let schema = first.strip_prefix("# schema: ").expect("schema line").to_string();
        let mut reader = csv::Reader::from_reader(rest.as_bytes());
        let header = reader.headers().unwrap().iter().map(String::from).collect();
        let rows = reader
            .records()
            .map(|r| r.unwrap().iter().map(String::from).collect())
            .collect();
        Self { schema, header, rows }
    }

    fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let c = self.col(name);
        self.rows.iter().map(|r| r[c].parse().unwrap()).collect()
    }

    fn select(&self, key: &str, value: &str) -> Vec<&Vec<String>> {
        let c = self.col(key);
        self.rows.iter().filter(|r| r[c] == value).collect()
    }
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn single_station_summary_has_no_collisions() {
    let csv = Csv::parse(&ok(&["solve", "-n", "1", "--regime", "fd"]));
    assert_eq!(csv.schema, "fdwlan-solve/1");
    let p = csv.col("p");
    assert!(csv.rows.iter().all(|r| r[p] == "0"));
    let summary = csv.select("kind", "summary");
    assert_eq!(summary.len(), 1);
    assert_eq!(summary[0][csv.col("p_s")], "1");
}

#[test]
fn attempt_rates_fall_towards_the_edge() {
    let csv = Csv::parse(&ok(&["solve", "-n", "50", "-m", "5", "--regime", "fd"]));
    let tau = csv.col("tau");
    let ap: f64 = csv.select("kind", "ap")[0][tau].parse().unwrap();
    let sta: Vec<f64> = csv
        .select("kind", "annulus")
        .iter()
        .map(|r| r[tau].parse().unwrap())
        .collect();
    assert_eq!(sta.len(), 5);
    assert!(ap > sta[0]);
    assert!(sta.windows(2).all(|w| w[0] > w[1]), "{sta:?}");
}

#[test]
fn both_regimes_share_the_gain() {
    let csv = Csv::parse(&ok(&["solve", "-n", "5"]));
    let summaries = csv.select("kind", "summary");
    assert_eq!(summaries.len(), 2);
    let g = csv.col("gain");
    assert_eq!(summaries[0][g], summaries[1][g]);
    let gain: f64 = summaries[0][g].parse().unwrap();
    assert!((gain - 1.026).abs() < 0.01);
}

#[test]
fn malformed_config_fails_without_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[geometry]\nstations = \"many\"\n");
    let out_path = dir.path().join("out.csv");
    let out = fdwlan(&["solve", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));
    assert!(!out_path.exists());

    let unknown = write(dir.path(), "typo.toml", "[geometry]\nstaions = 3\n");
    assert!(!fdwlan(&["solve", "--config", &unknown]).status.success());
    let invalid = write(dir.path(), "zero.toml", "[geometry]\nannuli = 0\n");
    assert!(!fdwlan(&["solve", "--config", &invalid]).status.success());
}

#[test]
fn non_convergence_is_an_error_for_solve_and_a_status_for_sweep() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "tight.toml", "[solver]\nmax_iterations = 3\n");
    let out_path = dir.path().join("solve.csv");
    let out = fdwlan(&["solve", "--config", &cfg, "--out", out_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not converged"));
    assert!(!out_path.exists());

    let csv = Csv::parse(&ok(&[
        "sweep",
        "--config",
        &cfg,
        "--regime",
        "fd",
        "--variable",
        "n",
        "--values",
        "1,20",
    ]));
    let status = csv.col("status");
    assert_eq!(csv.rows[0][status], "ok");
    assert!(csv.rows[1][status].starts_with("not converged"));
    assert_eq!(csv.rows[1][csv.col("throughput_fd_mbps")], "");
}

#[test]
fn annulus_sweep_approaches_the_limit() {
    let csv = Csv::parse(&ok(&["sweep", "--variable", "M", "--range", "1:50", "-n", "10"]));
    let p = csv.column("p_h_max");
    assert_eq!(p.len(), 50);
    assert!(p.windows(2).all(|w| w[1] > w[0]));
    assert!((0.6..0.609).contains(&p[49]));
}

#[test]
fn station_sweep_gain_decreases() {
    let csv = Csv::parse(&ok(&["sweep", "--variable", "n", "--range", "5:50:5"]));
    let gain = csv.column("gain");
    assert_eq!(gain.len(), 10);
    assert!(gain.windows(2).all(|w| w[1] <= w[0]), "{gain:?}");
    assert_eq!(
        csv.column("value"),
        (1..=10).map(|k| 5.0 * k as f64).collect::<Vec<_>>()
    );
}

#[test]
fn large_network_throughput() {
    let csv = Csv::parse(&ok(&["sweep", "--variable", "n", "--values", "1000"]));
    let fd = csv.column("throughput_fd_mbps")[0];
    let hd = csv.column("throughput_hd_mbps")[0];
    assert!((fd - 136.252).abs() / 136.252 < 0.03, "{fd}");
    assert!((hd - 136.219).abs() / 136.219 < 0.03, "{hd}");
}

#[test]
fn distance_sweep() {
    let csv = Csv::parse(&ok(&["sweep", "--variable", "d", "--values", "0,0.5,1"]));
    assert_eq!(csv.schema, "fdwlan-sweep-d/1");
    let p = csv.column("hidden_prob");
    assert_eq!(p[0], 0.0);
    assert!((p[2] - 0.608997781).abs() < 1e-9);
}

#[test]
fn sweep_from_config_section() {
    let dir = TempDir::new().unwrap();
    let cfg = write(dir.path(), "s.toml", "[sweep]\nvariable = \"n\"\nvalues = [3, 4]\n");
    let csv = Csv::parse(&ok(&["sweep", "--config", &cfg, "--regime", "hd"]));
    assert_eq!(csv.column("stations"), vec![3.0, 4.0]);
    assert_eq!(csv.rows[0][csv.col("throughput_fd_mbps")], "");
    assert_eq!(csv.rows[0][csv.col("gain")], "");
    assert!(!fdwlan(&["sweep"]).status.success());
}

#[test]
fn single_station_simulation_never_collides() {
    let csv = Csv::parse(&ok(&[
        "simulate",
        "-n",
        "1",
        "--regime",
        "fd",
        "--horizon",
        "100000",
        "--replications",
        "3",
    ]));
    let collisions = &csv.select("quantity", "collision_slots")[0];
    assert_eq!(collisions[csv.col("empirical")], "0");
}

#[test]
fn simulated_throughput_close_to_model() {
    let csv = Csv::parse(&ok(&[
        "simulate",
        "-n",
        "5",
        "--regime",
        "fd",
        "--horizon",
        "200000",
        "--replications",
        "20",
    ]));
    let row = &csv.select("quantity", "throughput_mbps")[0];
    let rel: f64 = row[csv.col("rel_error")].parse().unwrap();
    assert!(rel <= 0.10, "{rel}");
    assert!(!row[csv.col("ci95")].is_empty());
}

#[test]
fn seeds_control_simulation_output() {
    let run = |seed: &str| {
        ok(&[
            "simulate",
            "-n",
            "4",
            "--horizon",
            "20000",
            "--replications",
            "2",
            "--seed",
            seed,
        ])
    };
    assert_eq!(run("9"), run("9"));
    assert_ne!(run("9"), run("10"));
}

#[test]
fn dumped_config_reproduces_results() {
    let dir = TempDir::new().unwrap();
    let flags = [
        "-n",
        "13",
        "-m",
        "3",
        "--h-normalization",
        "literal",
        "--payload-mode",
        "mpdu",
        "--rho-source",
        "delay",
        "--ap-term",
        "literal",
    ];
    let dumped = ok(&[&["solve", "--dump-config"][..], &flags].concat());
    let cfg = write(dir.path(), "dumped.toml", &dumped);
    let direct = ok(&[&["solve"][..], &flags].concat());
    assert_eq!(ok(&["solve", "--config", &cfg]), direct);
    // A second dump of the re-read file is identical.
    assert_eq!(ok(&["solve", "--config", &cfg, "--dump-config"]), dumped);
}

#[test]
fn figures_all_writes_every_preset() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("figs");
    ok(&["figures", "all", "--out", out.to_str().unwrap()]);
    for (name, schema) in [
        ("fig4.csv", "fdwlan-fig4/1"),
        ("fig5.csv", "fdwlan-fig5/1"),
        ("fig6.csv", "fdwlan-fig6/1"),
        ("fig7.csv", "fdwlan-fig7/1"),
    ] {
        let csv = Csv::parse(&fs::read_to_string(out.join(name)).unwrap());
        assert_eq!(csv.schema, schema);
        assert!(!csv.rows.is_empty());
    }
    let fig5 = Csv::parse(&fs::read_to_string(out.join("fig5.csv")).unwrap());
    assert_eq!(
        fig5.header,
        ["regime", "stations", "tau_ap", "tau_1", "tau_2", "tau_3", "tau_4", "tau_5"]
    );
    assert_eq!(fig5.rows.len(), 46);
    assert!(!fdwlan(&["figures", "all"]).status.success());
}

#[test]
fn trace_file() {
    let dir = TempDir::new().unwrap();
    let trace = dir.path().join("trace.csv");
    ok(&[
        "simulate",
        "-n",
        "3",
        "--regime",
        "hd",
        "--horizon",
        "10000",
        "--replications",
        "2",
        "--trace",
        trace.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 10_001);
    assert!(
        !fdwlan(&["simulate", "--horizon", "10000", "--trace", trace.to_str().unwrap()])
            .status
            .success()
    );
}
