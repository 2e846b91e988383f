//! End-to-end CLI tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn aggcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aggcast"))
        .args(args)
        .output()
        .expect("spawn aggcast")
}

fn write_fixture(dir: &Path) -> (String, String) {
    let csv_path = dir.join("data.csv");
    let schema_path = dir.join("schema.txt");
    let mut csv = String::from("Age,Gender,Impression,Click,ts\n");
    // 40 timestamps, 50 rows each; positive measures with a weekly-ish wave.
    for t in 0..40i64 {
        for i in 0..50i64 {
            let age = 18 + (i * 7 + t) % 50;
            let gender = if i % 2 == 0 { "F" } else { "M" };
            let imp = 10.0 + (i % 9) as f64 + 3.0 * ((t % 7) as f64);
            let clk = 1.0 + (i % 4) as f64;
            csv.push_str(&format!("{age},{gender},{imp},{clk},{t}\n"));
        }
    }
    std::fs::write(&csv_path, csv).unwrap();
    std::fs::write(
        &schema_path,
        "Age=dim\nGender=dim\nImpression=measure\nClick=measure\nts=ts\n",
    )
    .unwrap();
    (
        csv_path.to_string_lossy().into_owned(),
        schema_path.to_string_lossy().into_owned(),
    )
}

#[test]
fn full_workflow_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store_s = store.to_string_lossy().into_owned();
    let (csv, schema) = write_fixture(dir.path());

    // ingest
    let out = aggcast(&["ingest", "--csv", &csv, "--schema", &schema, "--store", &store_s]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("rows=2000"), "{stdout}");

    // sample (single measure ladder)
    let out = aggcast(&[
        "sample",
        "--store",
        &store_s,
        "--weights",
        "measure:Impression",
        "--deltas",
        "0.5,5,50",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(store.join("Impression").join("manifest.txt").exists());
    assert!(store.join("Impression").join("0.5.sample").exists());

    // group (k-center manifest over the two measures)
    let out = aggcast(&["group", "--store", &store_s, "--groups", "1", "--mean", "geo"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = store.join("groups.txt");
    assert!(manifest.exists());

    // sample from the grouping manifest
    let out = aggcast(&[
        "sample",
        "--store",
        &store_s,
        "--weights",
        &format!("group:{}", manifest.to_string_lossy()),
        "--deltas",
        "1,10",
        "--seed",
        "9",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(store.join("g0").join("manifest.txt").exists());

    // query: exact vs delta=0.5 sample stay close
    let out = aggcast(&[
        "query",
        "--store",
        &store_s,
        "--constraint",
        "Gender = 'F'",
        "--measure",
        "Impression",
        "--ts",
        "3",
        "--exact",
    ]);
    assert!(out.status.success());
    let exact_line = String::from_utf8_lossy(&out.stdout);
    let exact: f64 = exact_line
        .lines()
        .find_map(|l| l.strip_prefix("value="))
        .unwrap()
        .parse()
        .unwrap();
    let out = aggcast(&[
        "query",
        "--store",
        &store_s,
        "--constraint",
        "Gender = 'F'",
        "--measure",
        "Impression",
        "--ts",
        "3",
        "--delta",
        "0.5",
    ]);
    assert!(out.status.success());
    let est_out = String::from_utf8_lossy(&out.stdout);
    let est: f64 = est_out
        .lines()
        .find_map(|l| l.strip_prefix("value="))
        .unwrap()
        .parse()
        .unwrap();
    assert!((est - exact).abs() / exact < 0.5, "est {est} exact {exact}");
    assert!(est_out.contains("theta="));
    assert!(est_out.contains("bound="));

    // forecast with plot and forecast-csv outputs
    let plot = dir.path().join("plot.csv");
    let fc_csv = dir.path().join("forecast.csv");
    let out = aggcast(&[
        "forecast",
        "--store",
        &store_s,
        "--task",
        "FORECAST SUM(Impression) FROM T WHERE Gender = 'F' USING (0, 29) OPTION (MODEL='arima', FORE_PERIOD=7)",
        "--plot",
        plot.to_string_lossy().as_ref(),
        "--forecast-csv",
        fc_csv.to_string_lossy().as_ref(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("points=30"), "{stdout}");
    assert!(stdout.contains("forecast.7.point="), "{stdout}");
    assert!(stdout.contains("timing.aggregation_ms="), "{stdout}");
    let plot_text = std::fs::read_to_string(&plot).unwrap();
    assert!(plot_text.starts_with("idx,ts,actual,estimate,forecast,lo,hi\n"));
    assert_eq!(plot_text.lines().count(), 1 + 30 + 7);
    let fc_text = std::fs::read_to_string(&fc_csv).unwrap();
    assert!(fc_text.starts_with("step,point,lo,hi\n"));
    assert_eq!(fc_text.lines().count(), 1 + 7);

    // bench on a small synthetic workload
    let report = dir.path().join("bench.csv");
    let out = aggcast(&[
        "bench",
        "--synthetic-rows",
        "20000",
        "--synthetic-ts",
        "40",
        "--train",
        "30",
        "--horizon",
        "5",
        "--trials",
        "20",
        "--rates",
        "0.1",
        "--selectivities",
        "0.5",
        "--out",
        report.to_string_lossy().as_ref(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text
        .starts_with("sampler,rate,selectivity,rstd,rstd_sd,re,forecast_err,interval_width\n"));
    assert_eq!(report_text.lines().count(), 1 + 5);
}

#[test]
fn ingest_accepts_role_flags_instead_of_schema_file() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let (csv, _) = write_fixture(dir.path());
    let out = aggcast(&[
        "ingest",
        "--csv",
        &csv,
        "--dims",
        "Age,Gender",
        "--measures",
        "Impression,Click",
        "--ts-col",
        "ts",
        "--store",
        store.to_string_lossy().as_ref(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rows=2000"));
}

#[test]
fn exit_codes_distinguish_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store_s = store.to_string_lossy().into_owned();
    let (csv, schema) = write_fixture(dir.path());
    let ok = aggcast(&["ingest", "--csv", &csv, "--schema", &schema, "--store", &store_s]);
    assert!(ok.status.success());
    let out = aggcast(&[
        "sample",
        "--store",
        &store_s,
        "--weights",
        "measure:Impression",
        "--deltas",
        "1",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());

    // 2: parse error.
    let out = aggcast(&["forecast", "--store", &store_s, "--task", "FORECAST blah"]);
    assert_eq!(out.status.code(), Some(2));

    // 2: unknown dimension (task validation).
    let out = aggcast(&[
        "forecast",
        "--store",
        &store_s,
        "--task",
        "FORECAST SUM(Impression) FROM T WHERE Nope = 1 USING (0, 29) OPTION (MODEL='arima', FORE_PERIOD=2)",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // 4: no covering sample.
    let out = aggcast(&[
        "forecast",
        "--store",
        &store_s,
        "--task",
        "FORECAST SUM(Click) FROM T WHERE TRUE USING (0, 29) OPTION (MODEL='arima', FORE_PERIOD=2)",
    ]);
    assert_eq!(out.status.code(), Some(4));

    // 3: data error (malformed csv).
    let bad_csv = dir.path().join("bad.csv");
    std::fs::write(&bad_csv, "Age,Gender,Impression,Click,ts\n1,F,abc,1,0\n").unwrap();
    let out = aggcast(&[
        "ingest",
        "--csv",
        bad_csv.to_string_lossy().as_ref(),
        "--schema",
        &schema,
        "--store",
        &store_s,
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn forecast_output_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let store_s = store.to_string_lossy().into_owned();
    let (csv, schema) = write_fixture(dir.path());
    aggcast(&["ingest", "--csv", &csv, "--schema", &schema, "--store", &store_s]);
    aggcast(&[
        "sample",
        "--store",
        &store_s,
        "--weights",
        "measure:Impression",
        "--deltas",
        "0.5",
        "--seed",
        "3",
    ]);
    let task = "FORECAST SUM(Impression) FROM T WHERE TRUE USING (0, 29) OPTION (MODEL='arima(1,0,1)', FORE_PERIOD=5)";
    let strip_timing = |raw: &[u8]| -> String {
        String::from_utf8_lossy(raw)
            .lines()
            .filter(|l| !l.starts_with("timing."))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = aggcast(&["forecast", "--store", &store_s, "--task", task]);
    let b = aggcast(&["forecast", "--store", &store_s, "--task", task]);
    assert!(a.status.success());
    assert_eq!(strip_timing(&a.stdout), strip_timing(&b.stdout));
}
