//! Warps a synthetic glyph with a bounded similarity transform and checks the
//! analytic affine gradient against a finite difference.
//!
//! cargo run --release --example warp_image

use ma3::adversary::{params_to_affine, AugmentParams};
use ma3::data::make_synthetic;
use ma3::geometry::AffineMatrix;
use ma3::sampler::{affine_grid, bilinear_sample, warp, warp_backward, Image};

fn ascii(img: &Image) -> String {
    let ramp = [' ', '.', ':', '+', '#'];
    let mut s = String::new();
    for y in 0..img.height {
        for x in 0..img.width {
            let v = img.data[y * img.width + x].clamp(0.0, 1.0);
            s.push(ramp[(v * 4.0).round() as usize]);
        }
        s.push('\n');
    }
    s
}

fn main() -> ma3::Result<()> {
    let ds = make_synthetic(2, 1, 20, 3)?;
    let img = ds.image(0, 0);
    let params = AugmentParams {
        theta: 0.4,
        s: 1.05,
        px: 1.5,
        py: -1.0,
    };
    let a = params_to_affine(&params, img.height, img.width);
    println!("source:\n{}", ascii(img));
    println!("theta 0.4, scale 1.05, shift (1.5, -1) px:\n{}", ascii(&warp(img, &a)));

    let identity = warp(img, &AffineMatrix::IDENTITY);
    let err = img
        .data
        .iter()
        .zip(&identity.data)
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    println!("identity warp max error {err:.1e}");

    // d/d a3 of the warped image's total intensity
    let grid = affine_grid(&a, img.height, img.width);
    let ones = Image::filled(img.height, img.width, 1.0);
    let g = warp_backward(img, &grid, &ones)?;
    let total = |m: &AffineMatrix| {
        bilinear_sample(img, &affine_grid(m, img.height, img.width))
            .data
            .iter()
            .sum::<f64>()
    };
    let h = 1e-5;
    let mut e = a.entries();
    e[2] += h;
    let plus = total(&AffineMatrix::from_entries(e));
    e[2] -= 2.0 * h;
    let minus = total(&AffineMatrix::from_entries(e));
    println!(
        "d(sum)/d(a3): analytic {:.6}, central difference {:.6}",
        g.affine[2],
        (plus - minus) / (2.0 * h)
    );
    Ok(())
}
