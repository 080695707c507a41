//! Round trips through the on-disk formats.

use hdt_core::metrics::scenario_report;
use hdt_core::output::{emit_csv, emit_plots, emit_report, render_plots, write_csv, CSV_COLUMNS};
use hdt_core::scenario::{parse_config, parse_config_file, preset, to_json};
use hdt_core::sim::{self, FrequencyProfile, SampleRecord, ScenarioSpec};
use hdt_core::Error;

fn short_run() -> (ScenarioSpec, Vec<SampleRecord>) {
    let spec = ScenarioSpec {
        duration: 0.02,
        events: Vec::new(),
        ..preset("voltage_regulation").unwrap()
    };
    let records = sim::run(&spec).unwrap();
    (spec, records)
}

#[test]
fn two_records_give_header_plus_two_lines() {
    let (_, records) = short_run();
    let mut buf = Vec::new();
    write_csv(&records[..2], &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0], CSV_COLUMNS.join(","));
    for line in &lines {
        assert_eq!(line.split(',').count(), 35);
    }
}

#[test]
fn csv_values_survive_a_text_round_trip() {
    let (_, records) = short_run();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    emit_csv(&records, &path).unwrap();
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    for (row, rec) in rdr.records().zip(&records) {
        let row = row.unwrap();
        assert_eq!(row[0].parse::<f64>().unwrap(), rec.t);
        assert_eq!(row[16].parse::<f64>().unwrap(), rec.v_dq0.d);
        assert_eq!(row[22].parse::<f64>().unwrap(), rec.vc);
        match rec.pf {
            Some(pf) => assert_eq!(row[31].parse::<f64>().unwrap(), pf),
            None => assert!(row[31].is_empty()),
        }
        assert_eq!(row[34].parse::<f64>().unwrap(), rec.v_star);
    }
    let first = std::fs::read(&path).unwrap();
    emit_csv(&records, &path).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
}

#[test]
fn unwritable_path_is_an_error() {
    let (_, records) = short_run();
    let err = emit_csv(&records, "/nonexistent-dir/x/run.csv").unwrap_err();
    assert!(matches!(err, Error::Io(_)));
}

#[test]
fn report_round_trips_through_json() {
    let spec = preset("voltage_regulation").unwrap();
    let records = sim::run(&spec).unwrap();
    let report = scenario_report(&records, &spec).unwrap();
    assert!(report.overall);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    emit_report(&report, &path).unwrap();
    let back = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(report, back);
}

#[test]
fn config_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    for name in hdt_core::metrics::PRESETS {
        let spec = preset(name).unwrap();
        let path = dir.path().join(format!("{name}.json"));
        std::fs::write(&path, to_json(&spec).unwrap()).unwrap();
        assert_eq!(parse_config_file(&path).unwrap(), spec);
        assert_eq!(parse_config(path.to_str().unwrap()).unwrap(), spec);
    }
    assert_eq!(parse_config("pf_correction").unwrap(), preset("pf_correction").unwrap());
    assert!(matches!(parse_config("missing.json"), Err(Error::Config { .. })));
}

#[test]
fn sampled_profile_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.csv");
    std::fs::write(&path, "t,f\n0,50.1\n15,49.7\n").unwrap();
    let p = FrequencyProfile::from_csv_path(&path).unwrap();
    assert!((p.eval(7.5).unwrap() - 49.9).abs() < 1e-12);
}

#[test]
fn plots_are_well_formed_and_deterministic() {
    let (_, records) = short_run();
    let a = render_plots(&records).unwrap();
    let b = render_plots(&records).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|(name, _)| *name == "voltage_dq"));
    for (_, svg) in &a {
        let doc = roxmltree::Document::parse(svg).unwrap();
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_plots(&records, dir.path().join("vr")).unwrap();
    assert_eq!(paths.len(), 6);
    assert!(paths.iter().all(|p| p.exists()));
    assert!(render_plots(&[]).is_err());
}
