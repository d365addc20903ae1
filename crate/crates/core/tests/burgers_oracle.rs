//! Cole–Hopf quadrature against an independent explicit finite-difference
//! solution of viscous Burgers.

use std::f64::consts::PI;

use qifnet::train::oracles::BurgersReference;

/// Explicit conservative central scheme on `[-1, 1]`, Dirichlet zero
/// walls; returns snapshots at the requested (increasing) times.
fn fd_solution(nu: f64, n: usize, times: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let dx = 2.0 / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| -1.0 + i as f64 * dx).collect();
    let mut u: Vec<f64> = x.iter().map(|&x| -(PI * x).sin()).collect();
    u[0] = 0.0;
    u[n - 1] = 0.0;
    let dt = 0.2 * (dx * dx / nu).min(dx);
    let mut next = u.clone();
    let mut t = 0.0;
    let mut snaps = Vec::new();
    for &target in times {
        while t < target - 1e-15 {
            let h = dt.min(target - t);
            for i in 1..n - 1 {
                let flux = (u[i + 1] * u[i + 1] - u[i - 1] * u[i - 1]) / (4.0 * dx);
                let diff = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (dx * dx);
                next[i] = u[i] + h * (nu * diff - flux);
            }
            std::mem::swap(&mut u, &mut next);
            t += h;
        }
        snaps.push(u.clone());
    }
    (x, snaps)
}

fn interp(x: &[f64], u: &[f64], at: f64) -> f64 {
    let dx = x[1] - x[0];
    let k = (((at - x[0]) / dx).floor() as usize).min(x.len() - 2);
    let s = (at - x[k]) / dx;
    u[k] * (1.0 - s) + u[k + 1] * s
}

#[test]
fn cole_hopf_matches_fine_finite_differences() {
    let reference = BurgersReference::standard();
    let nu = reference.nu;
    let times = [0.25, 0.5, 0.75];
    let (x, snaps) = fd_solution(nu, 4001, &times);
    let spots = [
        (-0.8, 0), (-0.4, 0), (0.5, 0),
        (-0.6, 1), (0.2, 1), (0.7, 1),
        (-0.9, 2), (-0.3, 2), (0.1, 2), (0.6, 2),
    ];
    let mut worst = 0.0f64;
    for &(xs, k) in &spots {
        let fd = interp(&x, &snaps[k], xs);
        let ch = reference.eval(xs, times[k]);
        worst = worst.max((fd - ch).abs());
        assert!((fd - ch).abs() <= 1e-3, "x {xs} t {}: fd {fd}, cole-hopf {ch}", times[k]);
    }
    eprintln!("worst spot difference {worst:.3e}");
}
