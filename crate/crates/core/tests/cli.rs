use std::io::{BufRead, BufReader};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use neuralmag::bridge::send_shutdown;
use neuralmag::dataforge::read_frames;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_neuralmag"));
    c.env_remove("NEURALMAG_PROVIDER_ADDR");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn records(path: &Path) -> (csv::StringRecord, Vec<csv::StringRecord>) {
    let mut r = csv::ReaderBuilder::new().flexible(false).from_path(path).unwrap();
    let header = r.headers().unwrap().clone();
    let rows = r.records().collect::<Result<Vec<_>, _>>().unwrap();
    (header, rows)
}

fn dead_addr() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    drop(l);
    addr
}

#[test]
fn uniform_aligned_simulation_converges_in_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "simulate", "--set", "size=8", "--set", "ms=1", "--set", "init=uniform", "--set", "h_ext=100,0,0", "--seed", "1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&dir.path().join("steps.csv"));
    assert_eq!(&header, vec!["iter", "delta_m_max", "n_vortex", "n_antiv", "energy"]);
    assert_eq!(rows.len(), 1);
    for f in ["final_m.ppm", "final_wd.pgm", "vortex_report.txt", "final_state.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let ppm = std::fs::read(dir.path().join("final_m.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n8 8\n255\n"));
}

#[test]
fn step_budget_exhaustion_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["simulate", "--set", "size=8", "--set", "max_iters=5", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(records(&dir.path().join("steps.csv")).1.len(), 5);
}

#[test]
fn missing_external_provider_exits_4_naming_the_address() {
    let dir = tempfile::tempdir().unwrap();
    let addr = dead_addr();
    let o = run(&["simulate", "--provider", "external", "--provider-addr", &addr, "--set", "size=8"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&addr));
}

#[test]
fn provider_address_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let addr = dead_addr();
    let o = bin()
        .env("NEURALMAG_PROVIDER_ADDR", &addr)
        .args(["simulate", "--provider", "external", "--set", "size=8", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&o.stderr).contains(&addr));
}

#[test]
fn config_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "size = 8\nwidth = 3\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));
    assert_eq!(run(&["simulate", "--set", "ms=-5"], dir.path()).status.code(), Some(3));
    assert_eq!(run(&["simulate", "--provider", "external"], dir.path()).status.code(), Some(3));
    assert_eq!(run(&["frobnicate"], dir.path()).status.code(), Some(3));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# tiny film\nsize = 6\ninit = uniform\nms = 1\nh_ext = 0,50,0\n").unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "init_dir=0,1,0"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let ppm = std::fs::read(dir.path().join("final_m.ppm")).unwrap();
    assert!(ppm.starts_with(b"P6\n6 6\n255\n"));
}

#[test]
fn default_mh_schedule_has_201_rows_and_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["mh", "--set", "size=4", "--seed", "1"], dir.path());
    assert!(matches!(o.status.code(), Some(0 | 2)));
    let (header, rows) = records(&dir.path().join("mh.csv"));
    assert_eq!(&header, vec!["h_ext_oe", "mx_avg", "my_avg", "mz_avg", "converged", "iters"]);
    assert_eq!(rows.len(), 201);
    assert_eq!(&rows[0][0], "1000");
    assert_eq!(&rows[200][0], "-1000");
    let summary = String::from_utf8_lossy(&o.stdout);
    assert!(summary.contains("m_r") && summary.contains("h_c"), "{summary}");
}

#[test]
fn phase_diagram_probabilities_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["phase-diagram", "--set", "phase_sizes=6,8", "--set", "runs_per_size=3", "--set", "conv_threshold=1e-4", "--seed", "2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&dir.path().join("phase.csv"));
    assert_eq!(&header, vec!["size", "p_zero", "p_single", "p_multi", "runs"]);
    assert_eq!(rows.len(), 2);
    for r in rows {
        let p: f64 = (1..4).map(|c| r[c].parse::<f64>().unwrap()).sum();
        assert!((p - 1.0).abs() < 1e-12);
    }
}

#[test]
fn datagen_three_by_five() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &[
            "datagen", "--set", "data_sizes=8", "--set", "sims_per_size=3", "--set", "pairs_per_sim=5", "--set", "max_iters=300",
            "--seed", "5", "--jobs", "2",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_frames(dir.path().join("frames_w8.nmag")).unwrap().len(), 15);
    let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
    assert!(manifest.contains("frames_w8 = 15"));
}

#[test]
fn bench_writes_csv_and_slopes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["bench", "--set", "bench_sizes=4,8", "--set", "bench_reps=2", "--set", "bench_direct_max=8", "--provider-addr", &dead_addr()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = records(&dir.path().join("bench.csv"));
    assert_eq!(&header, vec!["size", "method", "median_s", "p10", "p90"]);
    assert_eq!(rows.len(), 4);
    let (_, slopes) = records(&dir.path().join("bench_slopes.csv"));
    assert_eq!(slopes.len(), 2);
}

#[test]
fn served_fft_drives_an_external_simulation() {
    let mut server = bin()
        .args(["serve-fft", "--listen", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(server.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap().to_string();

    let (ext, fft) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let common = ["simulate", "--set", "size=8", "--set", "max_iters=40", "--seed", "11"];
    let a = run(&[&common[..], &["--provider", "external", "--provider-addr", &addr, "--set", "provider_dtype=f64"]].concat(), ext.path());
    let b = run(&common, fft.path());
    send_shutdown(&addr).unwrap();
    assert!(server.wait().unwrap().success());

    assert_eq!(a.status.code(), b.status.code());
    let (_, ra) = records(&ext.path().join("steps.csv"));
    let (_, rb) = records(&fft.path().join("steps.csv"));
    assert_eq!(ra.len(), rb.len());
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy): (f64, f64) = (x[1].parse().unwrap(), y[1].parse().unwrap());
        assert!((dx - dy).abs() <= 1e-10 * dy.abs().max(1e-300), "{dx} vs {dy}");
    }
}
