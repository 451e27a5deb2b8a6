//! Exact pinhole projection of a perturbed plane against its affine fit and
//! the first-order binomial expansion.
//!
//! cargo run --release --example projection_approx

use ma3::geometry::{
    binomial_projection, fit_affine, project, rotation_approx, rotation_exact, Point3, RotationMatrix,
};
use ma3::verify::{approx_verify, perturbation};

fn main() -> ma3::Result<()> {
    let z0 = 10.0;
    let p = perturbation(0.02, z0);
    let exact = rotation_exact(&p);
    let approx = rotation_approx(&p)?;
    let mut worst: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            worst = worst.max((exact.0[i][j] - approx.0[i][j]).abs());
        }
    }
    println!("second-order rotation error at magnitude 0.02: {worst:.3e}");

    let corners = [
        (-1.0, -1.0),
        (1.0, -1.0),
        (1.0, 1.0),
        (-1.0, 1.0),
        (0.0, 0.0),
        (0.5, -0.3),
    ];
    let mut pairs = Vec::new();
    for (x, y) in corners {
        let pt = Point3::new(x, y, z0);
        let before = project(pt, &RotationMatrix::identity(), [0.0; 3])?;
        let after = project(pt, &exact, p.t)?;
        let lin = binomial_projection(pt, &p);
        println!(
            "({x:>4}, {y:>4}) -> exact ({:+.5}, {:+.5})  binomial ({:+.5}, {:+.5})",
            after.u, after.v, lin.u, lin.v
        );
        pairs.push((before, after));
    }
    let (a, residual) = fit_affine(&pairs)?;
    println!("fitted affine {:?}\nmax fit residual {residual:.3e}\n", a.0);

    println!("{}", approx_verify(&[0.005, 0.01, 0.02, 0.04], 200, z0, 0)?);
    Ok(())
}
