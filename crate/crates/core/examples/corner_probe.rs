use gqme_core::model::{projected_liouvillian, SpinBosonModel, SpinBosonParams};
use gqme_core::pfi::differentiate;
use gqme_core::tfd::{compute_u_series, Backend};
use gqme_core::volterra::{solve_kernel, GqmeType, VolterraOptions};
use std::time::Instant;

fn main() {
    for dt in [1.50083e-3, 7.50415e-4, 3.752075e-4] {
        let t0 = Instant::now();
        let mut p = SpinBosonParams::benchmark(1).unwrap();
        p.n_modes = 4;
        p.dt = dt;
        p.t_final = 1.5;
        let model = SpinBosonModel::new(p.clone()).unwrap();
        let series = compute_u_series(&model, Backend::Tt, 10, usize::MAX).unwrap();
        let liouv = projected_liouvillian(&p);
        let pfi = differentiate(&series, Some(&liouv)).unwrap();
        let k = solve_kernel(&pfi, GqmeType::Full, &liouv, &VolterraOptions::default()).unwrap();
        let mut corner = 0.0f64;
        let mut max = 0.0f64;
        for t in 0..k.n() {
            let row = k.at(t);
            for e in row.iter() {
                max = max.max(e.norm());
            }
            for &(r, c) in &[(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
                corner = corner.max(row[r * 4 + c].norm());
            }
        }
        println!(
            "dt={dt:.3e}: corner {corner:.3e}, max {max:.3e}, ratio {:.3e} [{:.0}s]",
            corner / max,
            t0.elapsed().as_secs_f64()
        );
    }
}
