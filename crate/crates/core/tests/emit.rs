use hybrid_bounds::scenario::{emit, render, OutputFormat, ResultRow, CSV_HEADER};
use hybrid_bounds::Error;

fn feasible_row() -> ResultRow {
    ResultRow {
        scenario: "A".into(),
        gnb_count: 1,
        sat_count: 4,
        subset: "g0+s0+s1+s2+s3".into(),
        peb_m: Some(2.2761543),
        veb_mps: Some(0.0105393),
        feasible: true,
        rank: 7,
        condition_number: 3502.3812,
        wallclock_s: 0.12345678,
        error: None,
    }
}

fn infeasible_row() -> ResultRow {
    ResultRow {
        subset: "g0".into(),
        gnb_count: 1,
        sat_count: 0,
        peb_m: None,
        veb_mps: None,
        feasible: false,
        rank: 4,
        ..feasible_row()
    }
}

#[test]
fn empty_rows_create_no_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    assert!(matches!(emit(&[], OutputFormat::Csv, &path), Err(Error::EmptyResults)));
    assert!(!path.exists());
}

#[test]
fn one_row_csv_has_header_and_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    emit(&[feasible_row()], OutputFormat::Csv, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "scenario,gnb_count,sat_count,subset,peb_m,veb_mps,feasible,rank,cond,wallclock_s");
    assert_eq!(lines[0], CSV_HEADER.join(","));
    assert_eq!(lines[1], "A,1,4,g0+s0+s1+s2+s3,2.27615,0.0105393,true,7,3502.38,0.123457");
}

#[test]
fn infeasible_row_has_empty_csv_fields_and_json_nulls() {
    let csv = render(&[infeasible_row()], OutputFormat::Csv).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields[4], "");
    assert_eq!(fields[5], "");
    assert_eq!(fields[6], "false");

    let json = render(&[infeasible_row()], OutputFormat::Json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert!(v[0]["peb_m"].is_null());
    assert!(v[0]["veb_mps"].is_null());
}

#[test]
fn json_mirrors_row_field_names() {
    let json = render(&[feasible_row()], OutputFormat::Json).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let keys: Vec<&String> = v[0].as_object().unwrap().keys().collect();
    for k in [
        "scenario",
        "gnb_count",
        "sat_count",
        "subset",
        "peb_m",
        "veb_mps",
        "feasible",
        "rank",
        "condition_number",
        "wallclock_s",
    ] {
        assert!(keys.iter().any(|x| x.as_str() == k), "missing {k}");
    }
    assert_eq!(v[0]["rank"], 7);
}

#[test]
fn format_parses_case_insensitively() {
    assert_eq!("CSV".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
    assert_eq!("json".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
    assert!("xml".parse::<OutputFormat>().unwrap_err().is_validation());
}
