//! 3D constant-density acoustic propagation: second order in time, eighth
//! order in space, with a Cerjan damping halo around the physical grid.
//!
//! All grids handled by the [`Propagator`] are *padded*: the model interior
//! is surrounded by `boundary_width` absorbing points on every side. The
//! outermost [`HALF_WIDTH`] layers are never updated and stay at zero.

mod io;
mod model;
mod propagator;

pub use io::{read_grid, write_grid, GridHeader, GridKind};
pub use model::{make_gaussian_sphere_model, Dims3, GaussianSphere, VelocityModel};
pub use propagator::{AdjointField, CheckpointSink, ForwardOutput, Propagator};

use thiserror::Error;

use crate::sched::SchedError;

/// Stencil half-width of the eighth-order second derivative.
pub const HALF_WIDTH: usize = 4;

/// Eighth-order central second-derivative weights, center first.
pub const LAPLACIAN_WEIGHTS: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

/// Largest `v * dt / dx` accepted by [`SimConfig::validate_for`].
pub const MAX_COURANT: f64 = 0.5;

/// Cerjan damping coefficient in `exp(-(damping * (W - depth))^2)`.
/// With a 25-point halo it returns about 0.2% of a normally incident peak;
/// the often quoted 0.0053 returns about 8%.
pub const DEFAULT_DAMPING: f64 = 0.015;

#[derive(Debug, Error)]
pub enum WaveError {
    #[error("unstable time step: courant number {courant:.4} exceeds {limit:.4}")]
    Cfl { courant: f64, limit: f64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("invalid velocity model: {0}")]
    InvalidModel(String),
    #[error("invalid shot: {0}")]
    InvalidShot(String),
    #[error("size mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed grid file: {0}")]
    Format(String),
}

/// Courant limit of the leapfrog scheme with the eighth-order Laplacian in
/// 3D: `2 / sqrt(3 * |symbol(pi)|)`, about 0.4529.
pub fn stability_limit() -> f64 {
    let w = LAPLACIAN_WEIGHTS;
    let symbol = w[0] - 2.0 * w[1] + 2.0 * w[2] - 2.0 * w[3] + 2.0 * w[4];
    2.0 / (3.0 * symbol.abs()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub nt: usize,
    /// Time step in seconds.
    pub dt: f64,
    /// Peak frequency of the source wavelet in Hz.
    pub f_peak: f64,
    /// Absorbing halo thickness in grid points.
    pub boundary_width: usize,
    pub damping: f64,
}

impl Default for SimConfig {
    /// 2458 steps of 1 ms, 10 Hz peak frequency, 25-point absorbing halo.
    fn default() -> Self {
        Self { nt: 2458, dt: 1e-3, f_peak: 10.0, boundary_width: 25, damping: DEFAULT_DAMPING }
    }
}

impl SimConfig {
    pub fn courant(&self, model: &VelocityModel) -> f64 {
        model.max_velocity() * self.dt / model.dx()
    }

    /// Checks halo width and time-step stability for `model`.
    pub fn validate_for(&self, model: &VelocityModel) -> Result<(), WaveError> {
        if self.boundary_width < HALF_WIDTH {
            return Err(WaveError::Config(format!(
                "boundary width {} is thinner than the stencil half-width {HALF_WIDTH}",
                self.boundary_width
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(WaveError::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.damping >= 0.0 && self.damping.is_finite()) {
            return Err(WaveError::Config(format!("damping must be non-negative, got {}", self.damping)));
        }
        let courant = self.courant(model);
        let limit = MAX_COURANT.min(stability_limit());
        if courant > limit {
            return Err(WaveError::Cfl { courant, limit });
        }
        Ok(())
    }

    pub fn wavelet(&self) -> Vec<f64> {
        ricker(self.f_peak, self.dt, self.nt)
    }
}

/// Ricker wavelet sampled at `t = k * dt`, centered at `1 / f_peak`.
pub fn ricker(f_peak: f64, dt: f64, nt: usize) -> Vec<f64> {
    let t0 = 1.0 / f_peak;
    let a = (std::f64::consts::PI * f_peak).powi(2);
    (0..nt)
        .map(|k| {
            let tau = k as f64 * dt - t0;
            let arg = a * tau * tau;
            (1.0 - 2.0 * arg) * (-arg).exp()
        })
        .collect()
}

/// One source excitation and its receivers, in model (unpadded) grid indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Shot {
    pub source: [usize; 3],
    pub receivers: Vec<[usize; 3]>,
    pub wavelet: Vec<f64>,
}

impl Shot {
    /// Receivers on the horizontal plane at depth index 2, every 4th node
    /// along x2 and x3.
    pub fn with_surface_receivers(dims: Dims3, source: [usize; 3], wavelet: Vec<f64>) -> Self {
        Self { source, receivers: surface_receivers(dims, 4), wavelet }
    }

    pub fn validate(&self, dims: Dims3, nt: usize) -> Result<(), WaveError> {
        if !dims.contains(self.source) {
            return Err(WaveError::InvalidShot(format!("source {:?} outside {dims}", self.source)));
        }
        if let Some(r) = self.receivers.iter().find(|r| !dims.contains(**r)) {
            return Err(WaveError::InvalidShot(format!("receiver {r:?} outside {dims}")));
        }
        if self.wavelet.len() < nt {
            return Err(WaveError::InvalidShot(format!("wavelet has {} samples, need {nt}", self.wavelet.len())));
        }
        Ok(())
    }
}

pub fn surface_receivers(dims: Dims3, every: usize) -> Vec<[usize; 3]> {
    let depth = 2.min(dims.n1 - 1);
    let every = every.max(1);
    let mut out = Vec::new();
    for i2 in (0..dims.n2).step_by(every) {
        for i3 in (0..dims.n3).step_by(every) {
            out.push([depth, i2, i3]);
        }
    }
    out
}

/// Recorded traces, row-major over time: sample `(t, r)` is at `t * n_receivers + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Seismogram {
    pub nt: usize,
    pub n_receivers: usize,
    pub data: Vec<f64>,
}

impl Seismogram {
    pub fn zeros(nt: usize, n_receivers: usize) -> Self {
        Self { nt, n_receivers, data: vec![0.0; nt * n_receivers] }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.n_receivers..(t + 1) * self.n_receivers]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.n_receivers..(t + 1) * self.n_receivers]
    }

    pub fn trace(&self, r: usize) -> Vec<f64> {
        (0..self.nt).map(|t| self.data[t * self.n_receivers + r]).collect()
    }
}

/// Pair of consecutive time levels over the padded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefield {
    pub dims: Dims3,
    pub prev: Vec<f64>,
    pub curr: Vec<f64>,
}

impl Wavefield {
    pub fn zeros(dims: Dims3) -> Self {
        Self { dims, prev: vec![0.0; dims.len()], curr: vec![0.0; dims.len()] }
    }

    pub fn copy_from(&mut self, other: &Wavefield) {
        self.prev.copy_from_slice(&other.prev);
        self.curr.copy_from_slice(&other.curr);
    }

    pub fn energy(&self) -> f64 {
        self.curr.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.prev.iter().chain(&self.curr).all(|x| x.is_finite())
    }
}
