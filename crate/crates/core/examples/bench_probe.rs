use minlab_core::deform::{BoundaryTarget, CompletenessConfig, Evaluator};
use minlab_core::domain::{flat_path, make_multicycle, Cycle};
use minlab_core::weierstrass::seeds;
use num_complex::Complex64;

fn main() {
    let w = seeds::flat_disk();
    let j = make_multicycle(vec![Cycle::circle(Complex64::new(0.0, 0.0), 1.0)]).unwrap();
    let mut t = std::time::Instant::now();
    let p = flat_path(&j, Complex64::new(0.0, 0.0), Complex64::new(0.99995, 0.0), j.diameter() / 96.0).unwrap();
    eprintln!("flat_path: {:?} ({} pts)", t.elapsed(), p.len());
    t = std::time::Instant::now();
    let cfg = CompletenessConfig::default();
    let mut ev = Evaluator::new(&w, &j, cfg.quad);
    let v = ev.eval_routed(Complex64::new(0.99995, 0.0)).unwrap();
    eprintln!("eval_routed: {:?} -> {:?}", t.elapsed(), v);
    t = std::time::Instant::now();
    let chain: Vec<Complex64> = (0..=16)
        .map(|k| Complex64::from_polar(0.99995, 2.0 * std::f64::consts::PI * k as f64 / 256.0))
        .collect();
    let vals = ev.eval_chain(&chain).unwrap();
    eprintln!("eval_chain(17): {:?} last {:?}", t.elapsed(), vals.last());
    t = std::time::Instant::now();
    let _tgt = BoundaryTarget::from_immersion(&w, &j, 0, 256, 0.3, cfg.quad).unwrap();
    eprintln!("target: {:?}", t.elapsed());
}
