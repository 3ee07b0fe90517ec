use approx::assert_abs_diff_eq;
use itr_core::data::{
    load_csv, read_csv, CsvSchema, Dataset, PatientRecord, Population,
};

fn rec(id: &str, cov: &[f64], t: Option<u8>, y: Option<f64>, pop: Population) -> PatientRecord {
    PatientRecord {
        id: id.to_string(),
        covariates: cov.to_vec(),
        treatment: t,
        outcome: y,
        population: pop,
    }
}

#[test]
fn loads_simple_csv_with_reserved_roles() {
    let csv = "age,height,treatment,outcome,population\n\
               30,62,1,1.5,source\n\
               41,70,0,0.2,source\n\
               55,66,,,target\n";
    let (ds, report) = read_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
    assert_eq!(ds.p(), 2);
    assert_eq!(ds.n(), 3);
    assert_eq!(ds.covariate_names(), &["age".to_string(), "height".to_string()]);
    assert_eq!(ds.n_source(), 2);
    assert_eq!(ds.n_target(), 1);
    assert_eq!(report.rows_read, 3);
    assert_eq!(report.rows_dropped, 0);
    // Target row lacking treatment/outcome is accepted, stored as absent.
    let t = &ds.records()[2];
    assert_eq!(t.treatment, None);
    assert_eq!(t.outcome, None);
}

#[test]
fn treatment_outside_domain_names_row_and_column() {
    let csv = "x,treatment,population\n1.0,2,source\n";
    let err = read_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("row 1"), "{msg}");
    assert!(msg.contains("treatment"), "{msg}");
}

#[test]
fn unparseable_cell_is_rejected_with_location() {
    let csv = "x,population\nabc,source\n";
    let err = read_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("abc"), "{msg}");
    assert!(msg.contains('x'), "{msg}");
}

#[test]
fn population_labels_are_case_insensitive() {
    let csv = "x,population\n1,SOURCE\n2,Target\n3,source\n";
    let (ds, _) = read_csv(csv.as_bytes(), &CsvSchema::default()).unwrap();
    assert_eq!(ds.n_source(), 2);
    assert_eq!(ds.n_target(), 1);
}

#[test]
fn missing_population_column_needs_a_default() {
    let csv = "x\n1\n2\n";
    assert!(read_csv(csv.as_bytes(), &CsvSchema::default()).is_err());
    let schema = CsvSchema {
        default_population: Some(Population::Source),
        ..CsvSchema::default()
    };
    let (ds, _) = read_csv(csv.as_bytes(), &schema).unwrap();
    assert_eq!(ds.n_source(), 2);
}

#[test]
fn incomplete_rows_reject_by_default_and_drop_on_request() {
    let csv = "x,y2,population\n1,2,source\n,3,source\n4,5,source\n";
    let err = read_csv(csv.as_bytes(), &CsvSchema::default()).unwrap_err();
    assert!(err.to_string().contains("row 2"), "{err}");

    let schema = CsvSchema {
        drop_incomplete: true,
        ..CsvSchema::default()
    };
    let (ds, report) = read_csv(csv.as_bytes(), &schema).unwrap();
    assert_eq!(ds.n(), 2);
    assert_eq!(report.rows_read, 3);
    assert_eq!(report.rows_dropped, 1);
}

#[test]
fn duplicate_covariate_names_are_rejected() {
    let csv = "x,x,population\n1,2,source\n";
    assert!(read_csv(csv.as_bytes(), &CsvSchema::default()).is_err());
}

#[test]
fn zero_rows_is_an_error() {
    let csv = "x,population\n";
    assert!(read_csv(csv.as_bytes(), &CsvSchema::default()).is_err());
}

#[test]
fn explicit_schema_renames_roles_and_selects_covariates() {
    let csv = "pid,a,b,c,trt,surv,pop\n7,1,2,3,1,0.5,source\n";
    let schema = CsvSchema {
        id_column: Some("pid".into()),
        treatment_column: Some("trt".into()),
        outcome_column: Some("surv".into()),
        population_column: Some("pop".into()),
        covariate_columns: Some(vec!["a".into(), "c".into()]),
        ..CsvSchema::default()
    };
    let (ds, _) = read_csv(csv.as_bytes(), &schema).unwrap();
    assert_eq!(ds.covariate_names(), &["a".to_string(), "c".to_string()]);
    let r = &ds.records()[0];
    assert_eq!(r.id, "7");
    assert_eq!(r.covariates, vec![1.0, 3.0]);
    assert_eq!(r.treatment, Some(1));
    assert_eq!(r.outcome, Some(0.5));
}

#[test]
fn csv_round_trip_preserves_all_cells_to_full_precision() {
    let recs = vec![
        rec("a", &[0.1 + 0.2, 1.0 / 3.0], Some(1), Some(std::f64::consts::PI), Population::Source),
        rec("b", &[-1e-17, 6.02e23], Some(0), Some(-0.0), Population::Source),
        rec("c", &[2.5, 3.5], None, None, Population::Target),
    ];
    let ds = Dataset::new(vec!["u".into(), "v".into()], recs).unwrap();
    let mut buf = Vec::new();
    ds.write_csv_to(&mut buf).unwrap();
    let (back, _) = read_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
    assert_eq!(back, ds);
}

#[test]
fn summary_mean_and_sd_match_hand_computation() {
    let recs = vec![
        rec("1", &[1.0], None, None, Population::Source),
        rec("2", &[2.0], None, None, Population::Source),
        rec("3", &[3.0], None, None, Population::Source),
    ];
    let ds = Dataset::new(vec!["x".into()], recs).unwrap();
    let s = ds.covariate_summary(None).unwrap();
    assert_abs_diff_eq!(s.mean[0], 2.0, epsilon = 1e-15);
    assert_abs_diff_eq!(s.sd[0], 1.0, epsilon = 1e-15);
}

#[test]
fn summary_of_constant_column_has_zero_sd() {
    let recs = vec![
        rec("1", &[5.0], None, None, Population::Source),
        rec("2", &[5.0], None, None, Population::Source),
        rec("3", &[5.0], None, None, Population::Source),
    ];
    let ds = Dataset::new(vec!["x".into()], recs).unwrap();
    let s = ds.covariate_summary(None).unwrap();
    assert_eq!(s.mean[0], 5.0);
    assert_eq!(s.sd[0], 0.0);
}

#[test]
fn summary_respects_population_filter_and_pools_correctly() {
    let recs = vec![
        rec("1", &[1.0], None, None, Population::Source),
        rec("2", &[3.0], None, None, Population::Source),
        rec("3", &[10.0], None, None, Population::Target),
        rec("4", &[14.0], None, None, Population::Target),
    ];
    let ds = Dataset::new(vec!["x".into()], recs).unwrap();
    let st = ds.covariate_summary(Some(Population::Target)).unwrap();
    assert_eq!(st.mean[0], 12.0);
    assert_eq!(st.n, 2);

    // The unfiltered summary equals the formula applied to the pooled column.
    let all = ds.covariate_summary(None).unwrap();
    let pooled = [1.0f64, 3.0, 10.0, 14.0];
    let mean = pooled.iter().sum::<f64>() / 4.0;
    let var = pooled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
    assert_abs_diff_eq!(all.mean[0], mean, epsilon = 1e-15);
    assert_abs_diff_eq!(all.sd[0], var.sqrt(), epsilon = 1e-15);

    let err = Dataset::new(
        vec!["x".into()],
        vec![rec("1", &[1.0], None, None, Population::Source)],
    )
    .unwrap()
    .covariate_summary(Some(Population::Target))
    .unwrap_err();
    assert!(err.to_string().contains("empty"), "{err}");
}

#[test]
fn validate_reports_clean_data_as_clean() {
    let recs = vec![
        rec("1", &[1.0, 2.0], Some(1), Some(0.5), Population::Source),
        rec("2", &[2.0, 1.0], Some(0), Some(0.1), Population::Source),
        rec("3", &[3.0, 0.0], None, None, Population::Target),
    ];
    let ds = Dataset::new(vec!["x".into(), "z".into()], recs).unwrap();
    let report = ds.validate();
    assert!(report.is_clean(), "{:?}", report.issues);
    assert_eq!(report.n_source_treated, 1);
    assert_eq!(report.n_source_control, 1);
}

#[test]
fn validate_flags_empty_arm_and_constant_columns() {
    let recs = vec![
        rec("1", &[1.0, 7.0], Some(1), Some(0.5), Population::Source),
        rec("2", &[2.0, 7.0], Some(1), Some(0.1), Population::Source),
        rec("3", &[3.0, 7.0], None, None, Population::Target),
    ];
    let ds = Dataset::new(vec!["x".into(), "z".into()], recs).unwrap();
    let report = ds.validate();
    assert!(!report.is_clean());
    assert!(report.issues.iter().any(|i| i.contains("empty treatment arm")));
    assert_eq!(report.constant_covariates, vec!["z".to_string()]);
}

#[test]
fn source_view_requires_treatment_and_outcome() {
    let recs = vec![
        rec("1", &[1.0], Some(1), None, Population::Source),
        rec("2", &[2.0], Some(0), Some(0.1), Population::Source),
    ];
    let ds = Dataset::new(vec!["x".into()], recs).unwrap();
    let err = ds.source_view().unwrap_err();
    assert!(err.to_string().contains("outcome"), "{err}");

    let recs = vec![
        rec("1", &[1.0], Some(1), Some(1.0), Population::Source),
        rec("2", &[2.0], Some(0), Some(0.1), Population::Source),
    ];
    let ds = Dataset::new(vec!["x".into()], recs).unwrap();
    let v = ds.source_view().unwrap();
    assert_eq!(v.x.nrows(), 2);
    assert_eq!(v.treatment, vec![1, 0]);
    assert_eq!(v.outcome, vec![1.0, 0.1]);
}

#[test]
fn load_csv_missing_file_is_a_readable_error() {
    let err = load_csv("/no/such/file.csv", &CsvSchema::default()).unwrap_err();
    assert!(err.to_string().contains("/no/such/file.csv"), "{err}");
}
