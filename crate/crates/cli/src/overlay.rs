//! Displacement vectors drawn over the plane they were measured on.

use groundpose::{DisplacementField, ImageBuffer};
use image::{Rgb, RgbImage};

pub const INLIER: Rgb<u8> = Rgb([0, 220, 0]);
pub const OUTLIER: Rgb<u8> = Rgb([230, 0, 0]);

fn plot(img: &mut RgbImage, x: f64, y: f64, color: Rgb<u8>) {
    let (xi, yi) = (x.round(), y.round());
    if xi >= 0.0 && yi >= 0.0 && (xi as u32) < img.width() && (yi as u32) < img.height() {
        img.put_pixel(xi as u32, yi as u32, color);
    }
}

fn line(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), color: Rgb<u8>) {
    let steps = (to.0 - from.0)
        .abs()
        .max((to.1 - from.1).abs())
        .ceil()
        .max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        plot(
            img,
            from.0 + t * (to.0 - from.0),
            from.1 + t * (to.1 - from.1),
            color,
        );
    }
}

/// Grayscale background with one vector per valid entry, scaled by
/// `factor`. Outliers are drawn last so they stay visible.
pub fn draw_overlay(background: &ImageBuffer, field: &DisplacementField, factor: f64) -> RgbImage {
    let mut img = RgbImage::from_fn(
        background.width() as u32,
        background.height() as u32,
        |x, y| {
            let v = (background.get(x as usize, y as usize).clamp(0.0, 1.0) * 255.0).round() as u8;
            Rgb([v, v, v])
        },
    );
    let valid = field.entries().iter().filter(|e| e.valid);
    for pass_inliers in [true, false] {
        for e in valid.clone().filter(|e| e.inlier == pass_inliers) {
            let color = if e.inlier { INLIER } else { OUTLIER };
            let a = (e.anchor.u, e.anchor.v);
            let b = (
                a.0 + factor * e.displacement.dx,
                a.1 + factor * e.displacement.dy,
            );
            line(&mut img, a, b, color);
            for (dx, dy) in [(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0)] {
                plot(&mut img, a.0 + dx, a.1 + dy, color);
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use groundpose::estimator::{reject_by_magnitude, FieldPlane};
    use groundpose::{Displacement, FieldEntry, ImagePoint};

    fn field() -> DisplacementField {
        let entries = (0..5)
            .flat_map(|r| (0..6).map(move |c| (r, c)))
            .map(|(r, c)| {
                let a = ImagePoint::new(20.0 + 30.0 * c as f64, 20.0 + 30.0 * r as f64);
                FieldEntry::new(a, Displacement::new(1.0, 2.0 + 0.1 * c as f64, 0.9))
            })
            .collect();
        DisplacementField::new(entries, FieldPlane::Image)
    }

    fn count(img: &RgbImage, color: Rgb<u8>) -> usize {
        img.pixels().filter(|p| **p == color).count()
    }

    #[test]
    fn all_inliers_draw_no_outlier_color() {
        let bg = ImageBuffer::filled(200, 160, 0.4);
        let img = draw_overlay(&bg, &field(), 4.0);
        assert_eq!(img.dimensions(), (200, 160));
        assert_eq!(count(&img, OUTLIER), 0);
        assert!(count(&img, INLIER) > 30 * 5);
    }

    #[test]
    fn injected_outlier_is_the_only_red_vector() {
        let mut f = field();
        let hit = 13;
        f.entries_mut()[hit].displacement = Displacement::new(-6.0, 5.0, 0.9);
        reject_by_magnitude(&mut f, 3.0, 1.0, 0.1);
        assert!(!f.entries()[hit].inlier);
        assert_eq!(f.active_count(), f.len() - 1);

        let img = draw_overlay(&ImageBuffer::filled(200, 160, 0.4), &f, 3.0);
        let e = f.entries()[hit];
        let (ax, ay) = (e.anchor.u, e.anchor.v);
        let (bx, by) = (ax + 3.0 * e.displacement.dx, ay + 3.0 * e.displacement.dy);
        let len = (bx - ax).hypot(by - ay);
        let mut red = 0;
        for (x, y, p) in img.enumerate_pixels() {
            if *p != OUTLIER {
                continue;
            }
            red += 1;
            let (px, py) = (x as f64 - ax, y as f64 - ay);
            let t = ((px * (bx - ax) + py * (by - ay)) / (len * len)).clamp(0.0, 1.0);
            let d = (px - t * (bx - ax)).hypot(py - t * (by - ay));
            assert!(d <= 1.5, "red pixel ({x}, {y}) off the outlier vector");
        }
        assert!(red as f64 >= (bx - ax).abs().max((by - ay).abs()));
    }
}
