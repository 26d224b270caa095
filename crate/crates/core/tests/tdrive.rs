use ecoedgetwin::env::parse_tdrive;
use ecoedgetwin::env::tdrive::resample;
use proptest::prelude::*;

fn csv(rows: &[(u32, &str, f64, f64)]) -> String {
    rows.iter().map(|(id, t, lo, la)| format!("{id},{t},{lo},{la}\n")).collect()
}

#[test]
fn rows_are_grouped_by_taxi_in_first_seen_order() {
    let text = csv(&[
        (7, "2008-02-02 10:00:00", 116.3, 39.9),
        (3, "2008-02-02 10:00:00", 116.4, 39.8),
        (7, "2008-02-02 10:01:00", 116.31, 39.91),
        (3, "2008-02-02 10:02:00", 116.41, 39.81),
    ]);
    let d = parse_tdrive(text.as_bytes()).unwrap();
    let ids: Vec<&str> = d.trajectories.iter().map(|t| t.user_id.as_str()).collect();
    assert_eq!(ids, ["7", "3"]);
    assert_eq!(d.bbox.lon_min, 116.3);
    assert_eq!(d.bbox.lat_max, 39.91);
}

#[test]
fn single_sample_taxis_are_discarded() {
    let text = csv(&[
        (1, "2008-02-02 10:00:00", 116.3, 39.9),
        (2, "2008-02-02 10:00:00", 116.4, 39.8),
        (2, "2008-02-02 10:00:30", 116.5, 39.7),
    ]);
    let d = parse_tdrive(text.as_bytes()).unwrap();
    assert_eq!(d.trajectories.len(), 1);
}

#[test]
fn resampled_points_start_and_end_on_samples() {
    let text = csv(&[
        (1, "2008-02-02 10:00:00", 116.0, 39.0),
        (1, "2008-02-02 10:00:40", 116.2, 39.1),
        (1, "2008-02-02 10:01:40", 116.1, 39.4),
    ]);
    let d = parse_tdrive(text.as_bytes()).unwrap();
    let pts = resample::<f64>(&d.trajectories[0], &d.bbox, 2.0, 20.0);
    assert_eq!(pts.len(), 6);
    assert_eq!((pts[0].x, pts[0].y), (0.0, 0.0));
    assert!((pts[2].x - 2.0).abs() < 1e-12 && (pts[2].y - 0.5).abs() < 1e-12);
    assert!((pts[5].x - 1.0).abs() < 1e-12 && (pts[5].y - 2.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn resampled_points_stay_in_the_square(
        steps in prop::collection::vec((1i64..600, -0.01f64..0.01, -0.01f64..0.01), 2..40),
        side in 0.5f64..5.0,
        slot in 1.0f64..120.0,
    ) {
        let mut t = chrono::NaiveDate::from_ymd_opt(2008, 2, 2).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let (mut lo, mut la) = (116.3, 39.9);
        let mut text = String::new();
        for (dt, dlo, dla) in steps {
            text.push_str(&format!("9,{},{lo},{la}\n", t.format("%Y-%m-%d %H:%M:%S")));
            t += chrono::Duration::seconds(dt);
            lo += dlo;
            la += dla;
        }
        let d = parse_tdrive(text.as_bytes()).unwrap();
        let tr = &d.trajectories[0];
        let span = (tr.samples.last().unwrap().timestamp - tr.samples[0].timestamp) as f64;
        let pts = resample::<f64>(tr, &d.bbox, side, slot);
        prop_assert_eq!(pts.len(), (span / slot).floor() as usize + 1);
        for p in pts {
            prop_assert!(p.x >= -1e-9 && p.x <= side + 1e-9 && p.y >= -1e-9 && p.y <= side + 1e-9);
        }
    }
}
