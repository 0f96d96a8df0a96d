use groundpose::patch_grid::{make_grid, shrink_to_fit, PatchPlane, PatchSpec};
use groundpose::registration::{crop_patch, window_origin};
use groundpose::{CameraIntrinsics, ImageBuffer, ImagePoint};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn valid_windows_lie_inside_the_plane(
        w in 16usize..600,
        h in 16usize..600,
        u in -50.0f64..650.0,
        v in -50.0f64..650.0,
        size in 1usize..600,
    ) {
        let spec = shrink_to_fit(PatchSpec::new(ImagePoint::new(u, v), PatchPlane::Ipm, size), w, h);
        prop_assert!(spec.size.is_power_of_two() && spec.size >= 32);
        if spec.valid {
            prop_assert!(spec.size <= size);
            prop_assert!(spec.fits(w, h));
            let (x0, y0) = window_origin(spec.center, spec.size);
            prop_assert!(x0 >= 0 && y0 >= 0);
            prop_assert!(x0 as usize + spec.size <= w && y0 as usize + spec.size <= h);
            prop_assert!(crop_patch(&ImageBuffer::filled(w, h, 0.0), spec.center, spec.size).is_ok());
        }
    }

    #[test]
    fn grid_is_deterministic_and_inside_the_margin(
        rows in 2usize..20,
        cols in 2usize..20,
        margin in 0.0f64..250.0,
    ) {
        let k = CameraIntrinsics::new(600.0, 600.0, 400.0, 300.0, 800, 600).unwrap();
        let a = make_grid(&k, rows, cols, margin).unwrap();
        prop_assert_eq!(&a, &make_grid(&k, rows, cols, margin).unwrap());
        prop_assert_eq!(a.points().len(), rows * cols);
        for p in a.points() {
            prop_assert!(p.u >= margin - 1e-9 && p.u <= 800.0 - margin + 1e-9);
            prop_assert!(p.v >= margin - 1e-9 && p.v <= 600.0 - margin + 1e-9);
        }
        let first = a.points()[0];
        let last = a.points()[rows * cols - 1];
        prop_assert!((first.u - margin).abs() < 1e-9 && (last.v - (600.0 - margin)).abs() < 1e-9);
    }
}
