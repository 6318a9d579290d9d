use super::*;
use chrono::NaiveDate;
use imbal_core::groupform::PosteriorSamples;
use proptest::prelude::*;

fn p() -> &'static Path {
    Path::new("mem.csv")
}

fn csv_text(customers: &[&str], days: usize, skip: Option<(usize, usize)>, value: impl Fn(usize, usize) -> String) -> String {
    let start = NaiveDate::from_ymd_opt(2013, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
    let mut s = String::from("timestamp,customer_id,kwh\n");
    for (c, id) in customers.iter().enumerate() {
        for i in 0..days * 48 {
            if skip == Some((c, i)) {
                continue;
            }
            let ts = start + chrono::Duration::minutes(30 * i as i64);
            s.push_str(&format!("{},{id},{}\n", ts.format("%Y-%m-%dT%H:%M:%S"), value(c, i)));
        }
    }
    s
}

#[test]
fn two_customers_two_days() {
    let text = csv_text(&["a", "b"], 2, None, |c, i| format!("{}", c * 100 + i));
    let fleet = parse_demand_csv(text.as_bytes(), p()).unwrap();
    assert_eq!(fleet.len(), 2);
    assert_eq!(fleet[0].customer_id(), "a");
    assert_eq!(fleet[1].len(), 96);
    assert_eq!(fleet[0].granularity_minutes(), 30);
    assert_eq!(fleet[1].values()[5], 105.0);
}

#[test]
fn interleaved_rows_are_grouped_by_customer() {
    let text = "timestamp,customer_id,kwh\n\
                2013-01-01T00:00:00,x,1\n2013-01-01T00:00:00,y,2\n\
                2013-01-01T00:30:00,x,3\n2013-01-01T00:30:00,y,4\n";
    let fleet = parse_demand_csv(text.as_bytes(), p()).unwrap();
    assert_eq!(fleet[0].values(), &[1.0, 3.0]);
    assert_eq!(fleet[1].values(), &[2.0, 4.0]);
}

#[test]
fn missing_half_hour_names_the_gap() {
    let text = csv_text(&["a"], 1, Some((0, 7)), |_, _| "1".into());
    let err = parse_demand_csv(text.as_bytes(), p()).unwrap_err();
    match &err {
        IoError::Gap { missing, customer, .. } => {
            assert_eq!(customer, "a");
            assert_eq!(missing.format("%H:%M").to_string(), "03:30");
        }
        other => panic!("expected a gap error, got {other:?}"),
    }
    assert!(err.to_string().contains("2013-01-01 03:30:00"));
}

#[test]
fn negative_kwh_is_rejected_with_line() {
    let text = csv_text(&["a"], 1, None, |_, i| if i == 4 { "-1.5".into() } else { "2".into() });
    match parse_demand_csv(text.as_bytes(), p()).unwrap_err() {
        IoError::Parse { line, msg, .. } => {
            assert_eq!(line, 6);
            assert!(msg.contains(">= 0"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_rows_report_line_numbers() {
    let cases = [
        ("timestamp,customer_id,kwh\n2013-01-01T00:00:00,a,1\n2013-01-01T00:30:00,a,abc\n", 3),
        ("timestamp,customer_id,kwh\n2013-01-01T00:00:00,a,1\nyesterday,a,2\n", 3),
        ("timestamp,customer_id,kwh\n2013-01-01T00:00:00,a,1\n2013-01-01T00:30:00,a\n", 3),
        ("timestamp,customer_id,kwh\n2013-01-01T00:00:00,,1\n", 2),
    ];
    for (text, want) in cases {
        match parse_demand_csv(text.as_bytes(), p()).unwrap_err() {
            IoError::Parse { line, .. } => assert_eq!(line, want, "{text}"),
            other => panic!("{other:?}"),
        }
    }
}

#[test]
fn bad_header_and_empty_file() {
    let err = parse_demand_csv("time,id,kwh\n".as_bytes(), p()).unwrap_err();
    assert!(matches!(err, IoError::Parse { line: 1, .. }));
    let err = parse_demand_csv("timestamp,customer_id,kwh\n".as_bytes(), p()).unwrap_err();
    assert!(matches!(err, IoError::Invalid { .. }));
}

#[test]
fn out_of_order_timestamps_are_rejected() {
    let text = "timestamp,customer_id,kwh\n\
                2013-01-01T01:00:00,a,1\n2013-01-01T01:30:00,a,1\n2013-01-01T01:00:00,a,1\n";
    assert!(matches!(
        parse_demand_csv(text.as_bytes(), p()).unwrap_err(),
        IoError::Parse { line: 4, .. }
    ));
}

#[test]
fn space_separated_timestamps_are_accepted() {
    let text = "timestamp,customer_id,kwh\n2013-01-01 00:00:00,a,1\n2013-01-01 00:30:00,a,2\n";
    let fleet = parse_demand_csv(text.as_bytes(), p()).unwrap();
    assert_eq!(fleet[0].values(), &[1.0, 2.0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn demand_csv_round_trips_exactly(values in prop::collection::vec(prop::collection::vec(0.0f64..1e4, 48..=96), 1..4)) {
        let fleet: Vec<DemandSeries> = values
            .iter()
            .enumerate()
            .map(|(c, v)| DemandSeries::daily(format!("c{c}"), NaiveDate::from_ymd_opt(2014, 3, 1).unwrap(), v.clone()).unwrap())
            .collect();
        let bytes = demand_csv(&fleet);
        let back = parse_demand_csv(bytes.as_slice(), p()).unwrap();
        prop_assert_eq!(back, fleet);
    }
}

#[test]
fn holidays_parse_and_report_lines() {
    let cal = parse_holidays("# list\n2013-01-01\n\n2013-01-14\n", p()).unwrap();
    assert!(cal.is_holiday(NaiveDate::from_ymd_opt(2013, 1, 14).unwrap()));
    assert!(!cal.is_holiday(NaiveDate::from_ymd_opt(2013, 1, 2).unwrap()));
    match parse_holidays("2013-01-01\n2013-13-01\n", p()).unwrap_err() {
        IoError::Parse { line, .. } => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn atomic_write_replaces_and_leaves_no_temporaries() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sub").join("out.txt");
    write_atomic(&path, b"first").unwrap();
    write_atomic(&path, b"second").unwrap();
    assert_eq!(fs::read(&path).unwrap(), b"second");
    let entries: Vec<_> = fs::read_dir(path.parent().unwrap()).unwrap().collect();
    assert_eq!(entries.len(), 1);
}

#[test]
fn posterior_csv_uses_absolute_indices() {
    let split = SplitRecord {
        start: 11,
        end: 20,
        articulated: 14,
        delta_dac: 3.0,
        split: true,
        samples: PosteriorSamples {
            tau: vec![4, 5],
            lambda1: vec![1.5, 1.25],
            lambda2: vec![9.0, 8.5],
            acceptance: [0.5; 3],
        },
    };
    let text = String::from_utf8(posterior_csv(&split)).unwrap();
    assert_eq!(text, "draw,tau,lambda1,lambda2\n0,14,1.5,9\n1,15,1.25,8.5\n");
    assert_eq!(posterior_file_name(&split), "posterior_11_20.csv");
}

#[test]
fn tabular_outputs_have_the_declared_headers() {
    let errs = [PredictionError {
        period: 7,
        lag: 2,
        actual: 10.0,
        predicted: 12.5,
    }];
    let text = String::from_utf8(prediction_error_csv(&errs)).unwrap();
    assert_eq!(text, "period,lag,actual,predicted,error\n7,2,10,12.5,-2.5\n");

    let pts = [SweepPoint {
        capacity_kwh: 0.0,
        total_cost: 5.0,
        pct_of_basic: 100.0,
    }];
    assert_eq!(String::from_utf8(sweep_csv(&pts)).unwrap(), "capacity_kwh,pct_of_basic\n0,100\n");

    let set = ScenarioSet::from_perturbations(vec![1.0, 2.0], vec![vec![0.0, 0.0], vec![0.5, -0.25]]);
    let text = String::from_utf8(scenario_csv(&set)).unwrap();
    assert_eq!(
        text,
        "scenario_id,lag,perturbation_kwh\n0,0,0\n0,1,0\n1,0,0.5\n1,1,-0.25\n"
    );
}

#[test]
fn summary_json_has_null_runtime_by_default() {
    let s = Summary {
        mode: "sswcd".into(),
        total_cost: 1.0,
        basic_cost: 4.0,
        reduction_pct: 75.0,
        battery_capacity_kwh: 10.0,
        threshold_kwh: 2.0,
        periods: 3,
        nodes: 3,
        lp_iterations: 9,
        runtime_s: None,
    };
    let v: serde_json::Value = serde_json::from_slice(&summary_json(&s)).unwrap();
    assert_eq!(v["total_cost"], 1.0);
    assert_eq!(v["reduction_pct"], 75.0);
    assert!(v["runtime_s"].is_null());
}
