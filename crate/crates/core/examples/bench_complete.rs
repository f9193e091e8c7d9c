use minlab_core::deform::{completeness_step, BoundaryTarget, CompletenessConfig};
use minlab_core::domain::{make_multicycle, Cycle};
use minlab_core::weierstrass::seeds;
use num_complex::Complex64;

fn main() {
    let w = seeds::flat_disk();
    let j = make_multicycle(vec![Cycle::circle(Complex64::new(0.0, 0.0), 1.0)]).unwrap();
    let cfg = CompletenessConfig::default();
    let t0 = std::time::Instant::now();
    let targets = vec![BoundaryTarget::from_immersion(&w, &j, 0, 256, 0.3, cfg.quad).unwrap()];
    eprintln!("targets built: {:?}", t0.elapsed());
    let t0 = std::time::Instant::now();
    match completeness_step(&w, &j, &targets, 0.1, 0.2, 0.01, &cfg) {
        Ok((_, _, cert)) => {
            eprintln!("done in {:?}", t0.elapsed());
            println!("{}", serde_json::to_string_pretty(&cert.to_json()).unwrap());
            println!("all_pass = {}", cert.all_pass());
        }
        Err(e) => eprintln!("error after {:?}: {e}", t0.elapsed()),
    }
}
