use groundpose::estimator::ParamVector;
use groundpose_cli::results::{read_results, round_sig, write_results, ResultRow};
use proptest::prelude::*;

fn row() -> impl Strategy<Value = ResultRow> {
    (
        0usize..10_000,
        (0.3f64..1.5, -0.3f64..0.3, 0.3f64..1.5, -0.3f64..0.3),
        (-1e4f64..1e4, -1e4f64..1e4, -0.5f64..0.5),
        (0.0f64..50.0, 0usize..200, 0usize..3),
    )
        .prop_map(
            |(frame, (tp, rp, tc, rc), (tx, tz, yaw), (rms, inliers, stage))| {
                let p = ParamVector {
                    pitch_prev: tp,
                    roll_prev: rp,
                    pitch_cur: tc,
                    roll_cur: rc,
                    tx,
                    tz,
                    yaw,
                    height: 700.0,
                };
                let stage = ["initial", "refine-1", "refine-2"][stage];
                ResultRow::new(frame, stage, &p, rms, inliers, "ok")
            },
        )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(row(), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        write_results(&path, &rows).unwrap();
        prop_assert_eq!(read_results(&path).unwrap(), rows);
    }

    #[test]
    fn rounding_keeps_nine_digits(v in -1e6f64..1e6) {
        let r = round_sig(v);
        prop_assert!((r - v).abs() <= 5e-9 * v.abs());
        prop_assert_eq!(round_sig(r), r);
    }
}
