//! Track boxes drawn over the grayscale frames, for visual inspection.

use image::{Rgb, RgbImage};

use crate::geometry::BBox;
use crate::imaging::Frame;
use crate::tracking::{StateSource, Tracklet};

/// Stable, well-separated color per track id.
pub fn track_color(id: u64) -> Rgb<u8> {
    // golden-ratio hue walk
    let hue = (id as f64 * 0.618_033_988_749_895).fract() * 6.0;
    let x = 1.0 - (hue % 2.0 - 1.0).abs();
    let (r, g, b) = match hue as u32 {
        0 => (1.0, x, 0.0),
        1 => (x, 1.0, 0.0),
        2 => (0.0, 1.0, x),
        3 => (0.0, x, 1.0),
        4 => (x, 0.0, 1.0),
        _ => (1.0, 0.0, x),
    };
    Rgb([(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8])
}

fn draw_rect(img: &mut RgbImage, bbox: &BBox, color: Rgb<u8>, dashed: bool) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = bbox.left().round() as i64;
    let x1 = bbox.right().round() as i64;
    let y0 = bbox.top().round() as i64;
    let y1 = bbox.bottom().round() as i64;
    let mut put = |x: i64, y: i64, k: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) && (!dashed || (k / 3) % 2 == 0) {
            img.put_pixel(x as u32, y as u32, color);
        }
    };
    for x in x0..=x1 {
        put(x, y0, x - x0);
        put(x, y1, x - x0);
    }
    for y in y0..=y1 {
        put(x0, y, y - y0);
        put(x1, y, y - y0);
    }
}

/// Frame `t` in color with the state of every track alive on it. Predicted
/// states are drawn dashed.
pub fn render_overlay(frame: &Frame, t: usize, tracks: &[Tracklet]) -> RgbImage {
    let mut img = RgbImage::from_fn(frame.width() as u32, frame.height() as u32, |x, y| {
        let v = frame.get(x as usize, y as usize);
        Rgb([v, v, v])
    });
    for tr in tracks {
        if t < tr.first_frame() || t > tr.last_frame() {
            continue;
        }
        if let Ok(i) = tr.states.binary_search_by_key(&t, |s| s.frame) {
            let s = &tr.states[i];
            draw_rect(&mut img, &s.bbox, track_color(tr.id), s.source == StateSource::Interpolated);
        }
    }
    img
}
