//! Boundary target curves: an analytic reference cycle Sigma_i together with
//! the image curve beta_i = X_ref(Sigma_i) and the normal projection P_i
//! realized through band coordinates.

use num_complex::Complex64;

use crate::domain::MultiCycle;
use crate::error::DeformError;
use crate::labyrinth::CycleBand;
use crate::quad::QuadOpts;
use crate::weierstrass::WeierstrassData;

use super::eval::Evaluator;

#[derive(Clone, Debug)]
pub struct BoundaryTarget {
    pub chart: CycleBand,
    /// Tubular-neighborhood half width around Sigma (in depth units).
    pub tube: f64,
    /// beta values on a uniform angular grid.
    values: Vec<[f64; 3]>,
}

impl BoundaryTarget {
    /// beta_i = X(Sigma_i) for the cycle ci of j, with an explicit tube
    /// width.
    pub fn from_immersion(
        w: &WeierstrassData,
        j: &MultiCycle,
        ci: usize,
        nsamples: usize,
        tube: f64,
        quad: QuadOpts,
    ) -> Result<Self, DeformError> {
        let chart = CycleBand::for_cycle(j, ci)?;
        // evaluate X just inside the cycle (depth nudge keeps the chain in
        // the open domain)
        let nudge = tube.min(chart.scale() * 1e-3) * 0.05;
        let mut chain: Vec<Complex64> = (0..=nsamples)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * k as f64 / nsamples as f64;
                chart.from_band(th, nudge)
            })
            .collect();
        // close the loop exactly
        let first = chain[0];
        *chain.last_mut().unwrap() = first;
        let mut ev = Evaluator::new(w, j, quad);
        let vals = ev.eval_chain(&chain)?;
        Ok(BoundaryTarget {
            chart,
            tube,
            values: vals[..nsamples].to_vec(),
        })
    }

    pub fn beta_at_angle(&self, theta: f64) -> [f64; 3] {
        let n = self.values.len();
        let f = theta.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
            * n as f64;
        let i0 = (f.floor() as usize) % n;
        let i1 = (i0 + 1) % n;
        let a = f - f.floor();
        let (v0, v1) = (self.values[i0], self.values[i1]);
        [
            v0[0] * (1.0 - a) + v1[0] * a,
            v0[1] * (1.0 - a) + v1[1] * a,
            v0[2] * (1.0 - a) + v1[2] * a,
        ]
    }

    /// beta(P(p)) through the band projection.
    pub fn beta_at(&self, p: Complex64) -> [f64; 3] {
        let (theta, _) = self.chart.to_band(p);
        self.beta_at_angle(theta)
    }

    /// |depth| of p relative to Sigma, for tube checks.
    pub fn depth_from_sigma(&self, p: Complex64) -> f64 {
        self.chart.to_band(p).1.abs()
    }
}

pub fn deviation_norm(x: [f64; 3], b: [f64; 3]) -> f64 {
    ((x[0] - b[0]).powi(2) + (x[1] - b[1]).powi(2) + (x[2] - b[2]).powi(2)).sqrt()
}
