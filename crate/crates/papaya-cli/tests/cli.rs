//! Command-surface tests: flag handling, file formats, exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn papaya_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_papaya"))
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const CLEAN_PROFILE: &str = "\
# model=demo method=original device_memory_bytes=16000000000
batch_size,peak_memory_bytes,latency_ms,oom
20,4000000000,700.0,false
40,6000000000,900.0,false
60,8000000000,1100.0,false
80,10000000000,1300.0,false
100,12000000000,1500.0,false
120,14000000000,1700.0,false
140,16000000000,1900.0,false
160,,,true
";

#[test]
fn fit_writes_model_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("demo.csv");
    write(&profile, CLEAN_PROFILE);
    let out = papaya_bin()
        .arg("fit")
        .arg(&profile)
        .args(["--sample-fraction", "1.0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_of(&out);
    assert!(text.contains("alpha GB/rec"));
    assert!(text.contains("original"));

    let model: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("demo_original.model.json")).unwrap(),
    )
    .unwrap();
    let alpha = model["memory"]["alpha_gb_per_record"].as_f64().unwrap();
    let delta = model["latency"]["delta_s"].as_f64().unwrap();
    assert!((alpha - 0.1).abs() < 1e-9);
    assert!((delta - 0.5).abs() < 1e-9);
}

#[test]
fn fit_reports_excluded_underutilized_range() {
    // flat latency below batch 60, linear beyond
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from(
        "# model=demo method=original device_memory_bytes=64000000000\nbatch_size,peak_memory_bytes,latency_ms,oom\n",
    );
    for i in 1..=30u64 {
        let batch = 10 * i;
        let mem = 100_000_000 * batch + 2_000_000_000;
        let lat = 10.0 * (batch.max(60)) as f64 + 500.0;
        text.push_str(&format!("{batch},{mem},{lat},false\n"));
    }
    let profile = dir.path().join("knee.csv");
    write(&profile, &text);
    let out = papaya_bin()
        .arg("fit")
        .arg(&profile)
        .args(["--knee-r2", "0.9999", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    // the table's "lat from" column carries the first batch the latency fit
    // kept; everything below was excluded as underutilized
    let table = stdout_of(&out);
    let row = table.lines().find(|l| l.starts_with("original")).unwrap();
    assert_eq!(row.split_whitespace().last().unwrap(), "60");
}

#[test]
fn fit_unreadable_file_is_exit_1() {
    let out = papaya_bin()
        .arg("fit")
        .arg("/nonexistent/profile.csv")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_malformed_row_is_exit_1_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("bad.csv");
    write(
        &profile,
        "# model=m method=original device_memory_bytes=16000000000\nbatch_size,peak_memory_bytes,latency_ms,oom\n8,oops,1.0,false\n",
    );
    let out = papaya_bin().arg("fit").arg(&profile).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn fit_failure_is_exit_2() {
    // three points cannot satisfy the four-point minimum
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("short.csv");
    write(
        &profile,
        "# model=m method=original device_memory_bytes=16000000000\nbatch_size,peak_memory_bytes,latency_ms,oom\n8,1000,1.0,false\n16,2000,2.0,false\n24,3000,3.0,false\n",
    );
    let out = papaya_bin().arg("fit").arg(&profile).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn advise_accepts_profiles_directly() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = dir.path().join("base.csv");
    write(&baseline, CLEAN_PROFILE);
    // same device, cheaper memory slope, more latency slope
    let mom = dir.path().join("mom.csv");
    let mut text = String::from(
        "# model=demo method=saver device_memory_bytes=16000000000\nbatch_size,peak_memory_bytes,latency_ms,oom\n",
    );
    for i in 1..=7u64 {
        let batch = 20 * i;
        let mem = 40_000_000 * batch + 4_000_000_000;
        let lat = 13.0 * batch as f64 + 500.0;
        text.push_str(&format!("{batch},{mem},{lat},false\n"));
    }
    write(&mom, &text);

    let out = papaya_bin()
        .args(["advise", "--baseline"])
        .arg(&baseline)
        .arg(&mom)
        .args(["--sample-fraction", "1.0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = stdout_of(&out);
    assert!(table.contains("saver"));
    assert!(dir.path().join("advisory.report.json").exists());
}

#[test]
fn advise_device_mismatch_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let baseline = dir.path().join("base.csv");
    write(&baseline, CLEAN_PROFILE);
    let mom = dir.path().join("mom.csv");
    write(
        &mom,
        &CLEAN_PROFILE
            .replace("16000000000\n", "24000000000\n")
            .replace("original", "saver"),
    );
    let out = papaya_bin()
        .args(["advise", "--baseline"])
        .arg(&baseline)
        .arg(&mom)
        .args(["--sample-fraction", "1.0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_rejects_invalid_spec_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    write(
        &spec,
        r#"{"alpha_gb_per_record": -1, "beta_gb": 2, "gamma_s_per_record": 0.01, "delta_s": 0.5, "device_memory_gb": 16}"#,
    );
    let out = papaya_bin()
        .args(["simulate", "--spec"])
        .arg(&spec)
        .args(["--batches", "4:64:4", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn crossover_depth_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("depth.json");
    write(
        &law,
        r#"{
            "original": {"mem_slope_per_layer": 0.002, "lat_slope_per_layer": 2e-4,
                         "fixed_mem_base": 1.0, "fixed_mem_per_layer": 0.05,
                         "fixed_lat": 0.5, "device_memory": 16.0},
            "mom": {"mem_slope_per_layer": 0.0008, "lat_slope_per_layer": 2.6e-4,
                    "fixed_mem_base": 1.0, "fixed_mem_per_layer": 0.05,
                    "fixed_lat": 0.5, "device_memory": 16.0}
        }"#,
    );
    let out = papaya_bin()
        .args(["crossover", "--mode", "depth", "--law"])
        .arg(&law)
        .args(["--max-size", "250"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_of(&out);
    assert!(text.contains("smallest beneficial depth: 101"), "{text}");
    assert!(text.contains("100.000"), "{text}");
}

#[test]
fn crossover_width_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("width.json");
    write(
        &law,
        r#"{
            "original": {"mem_slope_per_width": 0.002, "lat_slope_per_width_sq": 1e-6,
                         "fixed_mem_per_width_sq": 1e-6, "fixed_lat_per_width_sq": 1e-7,
                         "device_memory": 16.0},
            "mom": {"mem_slope_per_width": 0.001, "lat_slope_per_width_sq": 1.5e-6,
                    "fixed_mem_per_width_sq": 1e-6, "fixed_lat_per_width_sq": 1e-7,
                    "device_memory": 16.0}
        }"#,
    );
    let out = papaya_bin()
        .args(["crossover", "--mode", "width", "--law"])
        .arg(&law)
        .args(["--max-size", "10000"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_of(&out);
    assert!(text.contains("smallest beneficial width: 3902"), "{text}");
    assert!(text.contains("3901.250"), "{text}");
}

#[test]
fn crossover_gpus_flip_point() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("gpus.json");
    write(
        &law,
        r#"{"delta_single": 0.5, "delta_per_extra_gpu": 0.25, "gpu_count": 1}"#,
    );
    let baseline = dir.path().join("base.model.json");
    let mom = dir.path().join("mom.model.json");
    write(
        &baseline,
        r#"{"model": "m", "method": "original",
            "memory": {"alpha_gb_per_record": 0.10, "beta_gb": 2.0},
            "latency": {"gamma_s_per_record": 0.010, "delta_s": 0.5},
            "device_memory_gb": 16.0, "infeasible_at_batch_1": false}"#,
    );
    write(
        &mom,
        r#"{"model": "m", "method": "mom_a",
            "memory": {"alpha_gb_per_record": 0.04, "beta_gb": 2.0},
            "latency": {"gamma_s_per_record": 0.013, "delta_s": 0.5},
            "device_memory_gb": 16.0, "infeasible_at_batch_1": false}"#,
    );
    let out = papaya_bin()
        .args(["crossover", "--mode", "gpus", "--law"])
        .arg(&law)
        .arg("--baseline")
        .arg(&baseline)
        .arg("--mom")
        .arg(&mom)
        .args(["--max-size", "8"])
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout_of(&out);
    assert!(text.contains("beneficial from 2 GPUs"), "{text}");
    assert!(text.contains("28.000"), "{text}"); // point at one GPU
}

#[test]
fn crossover_invalid_law_is_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let law = dir.path().join("law.json");
    write(&law, r#"{"not": "a law"}"#);
    let out = papaya_bin()
        .args(["crossover", "--mode", "depth", "--law"])
        .arg(&law)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn plotdata_emits_throughput_curve_with_max_marked() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("demo.csv");
    write(&profile, CLEAN_PROFILE);
    let fit = papaya_bin()
        .arg("fit")
        .arg(&profile)
        .args(["--sample-fraction", "1.0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(fit.status.success());

    let out = papaya_bin()
        .args(["plotdata", "--model"])
        .arg(dir.path().join("demo_original.model.json"))
        .arg("--profile")
        .arg(&profile)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let throughput =
        fs::read_to_string(dir.path().join("demo_original_throughput.plot.csv")).unwrap();
    let rows: Vec<&str> = throughput.lines().skip(1).collect();
    assert_eq!(rows.len(), 140);
    assert!(rows.last().unwrap().ends_with("true"));
    // strictly increasing curve
    let values: Vec<f64> = rows
        .iter()
        .map(|r| r.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(values.windows(2).all(|w| w[1] > w[0]));

    // measured columns track predictions on noiseless input
    let memory = fs::read_to_string(dir.path().join("demo_original_memory.plot.csv")).unwrap();
    for row in memory.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let measured: f64 = cols[1].parse().unwrap();
        let predicted: f64 = cols[2].parse().unwrap();
        assert!((measured - predicted).abs() <= 1e-6 * measured.max(1.0));
    }
}

#[test]
fn plotdata_two_methods_two_series() {
    let dir = tempfile::tempdir().unwrap();
    for (method, alpha) in [("original", 100_000_000u64), ("saver", 40_000_000)] {
        let mut text = format!(
            "# model=demo method={method} device_memory_bytes=16000000000\nbatch_size,peak_memory_bytes,latency_ms,oom\n"
        );
        for i in 1..=6u64 {
            let batch = 20 * i;
            text.push_str(&format!(
                "{batch},{},{}.0,false\n",
                alpha * batch + 2_000_000_000,
                700 + 10 * batch
            ));
        }
        write(&dir.path().join(format!("{method}.csv")), &text);
    }
    let fit = papaya_bin()
        .arg("fit")
        .arg(dir.path().join("original.csv"))
        .arg(dir.path().join("saver.csv"))
        .args(["--sample-fraction", "1.0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(fit.status.success());
    let out = papaya_bin()
        .args(["plotdata", "--model"])
        .arg(dir.path().join("demo_original.model.json"))
        .arg("--model")
        .arg(dir.path().join("demo_saver.model.json"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir
        .path()
        .join("demo_original_throughput.plot.csv")
        .exists());
    assert!(dir.path().join("demo_saver_throughput.plot.csv").exists());
}

#[test]
fn flags_win_over_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("demo.csv");
    write(&profile, CLEAN_PROFILE);
    let config = dir.path().join("config.json");
    // config picks a distinct output directory; the flag must override it
    let config_out = dir.path().join("from_config");
    let flag_out = dir.path().join("from_flag");
    write(
        &config,
        &format!(
            r#"{{"sample_fraction": 1.0, "out": "{}"}}"#,
            config_out.display()
        ),
    );

    let out = papaya_bin()
        .arg("fit")
        .arg(&profile)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&flag_out)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(flag_out.join("demo_original.model.json").exists());
    assert!(!config_out.exists());

    // without the flag the config value applies
    let out = papaya_bin()
        .arg("fit")
        .arg(&profile)
        .arg("--config")
        .arg(&config)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(config_out.join("demo_original.model.json").exists());
}

#[test]
fn json_profile_format_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let profile = dir.path().join("demo.json");
    write(
        &profile,
        r#"{
            "model": "demo", "method": "original", "device_memory_bytes": 16000000000,
            "points": [
                {"batch_size": 20, "peak_memory_bytes": 4000000000, "latency_ms": 700.0},
                {"batch_size": 40, "peak_memory_bytes": 6000000000, "latency_ms": 900.0},
                {"batch_size": 60, "peak_memory_bytes": 8000000000, "latency_ms": 1100.0},
                {"batch_size": 80, "peak_memory_bytes": 10000000000, "latency_ms": 1300.0},
                {"batch_size": 100, "peak_memory_bytes": 12000000000, "latency_ms": 1500.0},
                {"batch_size": 120, "oom": true}
            ]
        }"#,
    );
    let out = papaya_bin()
        .arg("fit")
        .arg(&profile)
        .args(["--sample-fraction", "1.0", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("demo_original.model.json").exists());
}
