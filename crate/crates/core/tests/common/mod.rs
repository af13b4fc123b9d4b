#![allow(dead_code)]

use autochunk::wave::{make_gaussian_sphere_model, ricker, Dims3, Shot, SimConfig, VelocityModel};

pub fn sim(nt: usize, f_peak: f64, boundary_width: usize) -> SimConfig {
    SimConfig { nt, dt: 1e-3, f_peak, boundary_width, ..SimConfig::default() }
}

pub fn sphere(n: usize, v_bg: f64, v_peak: f64) -> VelocityModel {
    make_gaussian_sphere_model(Dims3::cube(n), 10.0, v_bg, v_peak, [0.5; 3], 0.15).unwrap()
}

pub fn shot(dims: Dims3, source: [usize; 3], cfg: &SimConfig, every: usize) -> Shot {
    Shot { source, receivers: autochunk::wave::surface_receivers(dims, every), wavelet: ricker(cfg.f_peak, cfg.dt, cfg.nt) }
}
