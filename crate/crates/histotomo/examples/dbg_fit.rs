use histotomo::distribution::uniform_edges;
use histotomo::doppler::*;
use histotomo::grid::{grid_from_function, ScalarGrid};
use histotomo::ray::{fibonacci_directions, parallel_ray_grid};
use histotomo::tensor::{gradient, hlrt};

fn phantom(nodes: usize, sigma: f64) -> ScalarGrid {
    grid_from_function(&[-1.0; 3], &[1.0; 3], &[nodes; 3], |p| {
        let r2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2];
        let w = r2 / 0.81;
        if w < 1.0 { (-r2 / (2.0 * sigma * sigma)).exp() * (1.0 - w).powi(5) } else { 0.0 }
    })
    .unwrap()
}

fn main() {
    for (nodes, sigma) in [(16usize, 0.45f64), (16, 0.5), (16, 0.4)] {
        let u_true = phantom(nodes, sigma);
        let du = gradient(&u_true).unwrap();
        let vmax = du.max_abs() * 1.8; // contracted values bounded by |du|
        let rays = parallel_ray_grid(&fibonacci_directions(60), 24, 1.0);
        let step = 0.5 * u_true.spacing();
        let edges = uniform_edges(-vmax, vmax, 512);
        let hs = hlrt(&du, &rays, step, &edges).unwrap();
        assert_eq!(hs.overflow + hs.underflow, 0, "edges must cover the data");
        for smoothing in [0usize, 1, 2, 3] {
            let mut cfg = DopplerConfig::for_grid(&u_true);
            cfg.fit.max_iter = 300;
            cfg.fit.tol = 1e-9;
            cfg.kroner_smoothing = smoothing;
            match recover_potential(&hs, &u_true, &cfg) {
                Ok(rec) => {
                    let rel = min_sign_relative_l2(&rec.u, &u_true);
                    println!(
                        "n={nodes} sigma={sigma} smooth={smoothing}: rel_l2={rel:6.3} degen={:5.3}",
                        rec.degenerate_frac
                    );
                }
                Err(e) => println!("n={nodes} sigma={sigma} smooth={smoothing}: {e}"),
            }
        }
    }
}
