use crate::sched::{IterRange, SchedulerSpec, WorkerPool};

use super::{Dims3, Seismogram, Shot, SimConfig, VelocityModel, WaveError, Wavefield, HALF_WIDTH, LAPLACIAN_WEIGHTS};

/// Raw pointer that loop bodies use to write their own disjoint grid lines.
#[derive(Clone, Copy)]
struct LinePtr(*mut f64);

// SAFETY: every user writes only the line owned by the current iteration.
unsafe impl Send for LinePtr {}
unsafe impl Sync for LinePtr {}

impl LinePtr {
    /// # Safety
    /// `offset..offset + len` must be in bounds and not aliased by any other
    /// live reference.
    #[inline]
    unsafe fn line<'a>(self, offset: usize, len: usize) -> &'a mut [f64] {
        std::slice::from_raw_parts_mut(self.0.add(offset), len)
    }
}

/// Receives forward states during modeling. `save` is called with the state
/// *before* time step `t` runs, for every `t` where `wants(t)` holds.
pub trait CheckpointSink {
    fn wants(&self, t: usize) -> bool;
    fn save(&mut self, t: usize, field: &Wavefield);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub seismogram: Seismogram,
    /// Wall time of the scheduled stencil loop, per time step.
    pub step_seconds: Vec<f64>,
}

/// Adjoint state of the time-stepping scheme plus a work buffer.
#[derive(Debug, Clone)]
pub struct AdjointField {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    scratch: Vec<f64>,
}

impl AdjointField {
    pub fn zeros(dims: Dims3) -> Self {
        Self { alpha: vec![0.0; dims.len()], beta: vec![0.0; dims.len()], scratch: vec![0.0; dims.len()] }
    }
}

/// Precomputed coefficients for one velocity model and simulation config.
///
/// One time step maps `(prev, curr) = (u[n-1], u[n])` to
/// `(g * u[n], g * (2 u[n] - u[n-1] + (v dt)^2 L u[n] + f[n]))`
/// where `L` is the eighth-order Laplacian, `f` the injected source and `g`
/// the Cerjan taper (1 inside the model).
#[derive(Debug, Clone)]
pub struct Propagator {
    model_dims: Dims3,
    dims: Dims3,
    width: usize,
    dx: f64,
    dt: f64,
    inv_dx2: f64,
    /// `(v dt)^2` on the padded grid; the halo copies the nearest model value.
    c2: Vec<f64>,
    /// `d c2 / d v = 2 v dt^2`.
    dc2: Vec<f64>,
    /// Cerjan taper, 1 in the model interior.
    taper: Vec<f64>,
    /// `c2 * taper`, used by the adjoint stencil.
    c2_taper: Vec<f64>,
}

impl Propagator {
    pub fn new(model: &VelocityModel, cfg: &SimConfig) -> Result<Self, WaveError> {
        cfg.validate_for(model)?;
        let width = cfg.boundary_width;
        let model_dims = model.dims();
        let dims = model_dims.padded(width);
        let dt2 = cfg.dt * cfg.dt;
        let axis_taper = |n: usize| -> Vec<f64> {
            (0..n + 2 * width)
                .map(|j| {
                    let depth = if j < width {
                        j
                    } else if j >= width + n {
                        n + 2 * width - 1 - j
                    } else {
                        return 1.0;
                    };
                    (-(cfg.damping * (width - depth) as f64).powi(2)).exp()
                })
                .collect()
        };
        let (t1, t2, t3) = (axis_taper(model_dims.n1), axis_taper(model_dims.n2), axis_taper(model_dims.n3));

        let mut c2 = Vec::with_capacity(dims.len());
        let mut dc2 = Vec::with_capacity(dims.len());
        let mut taper = Vec::with_capacity(dims.len());
        let clamp = |j: usize, n: usize| j.saturating_sub(width).min(n - 1);
        for j1 in 0..dims.n1 {
            for j2 in 0..dims.n2 {
                for j3 in 0..dims.n3 {
                    let v = model.at([clamp(j1, model_dims.n1), clamp(j2, model_dims.n2), clamp(j3, model_dims.n3)]);
                    c2.push(v * v * dt2);
                    dc2.push(2.0 * v * dt2);
                    taper.push(t1[j1] * t2[j2] * t3[j3]);
                }
            }
        }
        let c2_taper = c2.iter().zip(&taper).map(|(c, g)| c * g).collect();
        Ok(Self {
            model_dims,
            dims,
            width,
            dx: model.dx(),
            dt: cfg.dt,
            inv_dx2: 1.0 / (model.dx() * model.dx()),
            c2,
            dc2,
            taper,
            c2_taper,
        })
    }

    /// Padded grid dimensions.
    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn model_dims(&self) -> Dims3 {
        self.model_dims
    }

    pub fn boundary_width(&self) -> usize {
        self.width
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn taper(&self) -> &[f64] {
        &self.taper
    }

    /// Length of the scheduled loop: one iteration per updated (x1, x2) line.
    pub fn n_lines(&self) -> usize {
        (self.dims.n1 - 2 * HALF_WIDTH) * (self.dims.n2 - 2 * HALF_WIDTH)
    }

    pub fn line_range(&self) -> IterRange {
        IterRange::with_len(self.n_lines())
    }

    pub fn zero_field(&self) -> Wavefield {
        Wavefield::zeros(self.dims)
    }

    /// Padded flat index of a model grid point.
    pub fn padded_index(&self, p: [usize; 3]) -> usize {
        let w = self.width;
        self.dims.index(p[0] + w, p[1] + w, p[2] + w)
    }

    #[inline]
    fn line_offset(&self, line: usize) -> usize {
        let span2 = self.dims.n2 - 2 * HALF_WIDTH;
        let i1 = HALF_WIDTH + line / span2;
        let i2 = HALF_WIDTH + line % span2;
        self.dims.index(i1, i2, 0)
    }

    #[inline]
    fn laplacian(&self, u: &[f64], p: usize) -> f64 {
        let s1 = self.dims.n2 * self.dims.n3;
        let s2 = self.dims.n3;
        let w = LAPLACIAN_WEIGHTS;
        assert!(p >= HALF_WIDTH * s1 && p + HALF_WIDTH * s1 < u.len());
        // SAFETY: the assertion bounds every offset used below.
        let at = |q: usize| unsafe { *u.get_unchecked(q) };
        let mut lap = 3.0 * w[0] * at(p);
        for k in 1..=HALF_WIDTH {
            lap += w[k] * ((at(p - k) + at(p + k)) + (at(p - k * s2) + at(p + k * s2)) + (at(p - k * s1) + at(p + k * s1)));
        }
        lap * self.inv_dx2
    }

    /// Stencil update of one time level, run through the scheduled loop.
    /// Returns the wall time of that loop.
    pub fn step(&self, field: &mut Wavefield, spec: &SchedulerSpec, pool: &WorkerPool) -> Result<f64, WaveError> {
        self.check_field(field)?;
        let n3 = self.dims.n3;
        let out = LinePtr(field.prev.as_mut_ptr());
        let curr = &field.curr;
        let elapsed = pool.parallel_for(self.line_range(), spec, |line| {
            let base = self.line_offset(line);
            // SAFETY: each line index maps to a distinct x3 line of `prev`;
            // `curr` is only read.
            let next = unsafe { out.line(base, n3) };
            for i3 in HALF_WIDTH..n3 - HALF_WIDTH {
                let p = base + i3;
                next[i3] = 2.0 * curr[p] - next[i3] + self.c2[p] * self.laplacian(curr, p);
            }
        })?;
        std::mem::swap(&mut field.prev, &mut field.curr);
        Ok(elapsed)
    }

    /// Adds the scaled wavelet sample at the source: `w[t] dt^2 v^2 / dx^2`.
    pub fn inject(&self, field: &mut Wavefield, shot: &Shot, t: usize) {
        let p = self.padded_index(shot.source);
        field.curr[p] += shot.wavelet[t] * self.c2[p] * self.inv_dx2;
    }

    /// Multiplies both time levels by the taper inside the halo.
    pub fn absorb(&self, field: &mut Wavefield) {
        let Dims3 { n1, n2, n3 } = self.dims;
        let w = self.width;
        let interior = |j: usize, n: usize| j >= w && j < n - w;
        for i1 in 0..n1 {
            for i2 in 0..n2 {
                let base = self.dims.index(i1, i2, 0);
                let spans: [(usize, usize); 2] = if interior(i1, n1) && interior(i2, n2) {
                    [(0, w), (n3 - w, n3)]
                } else {
                    [(0, n3), (0, 0)]
                };
                for (a, b) in spans {
                    for p in base + a..base + b {
                        let g = self.taper[p];
                        field.prev[p] *= g;
                        field.curr[p] *= g;
                    }
                }
            }
        }
    }

    pub fn record(&self, field: &Wavefield, shot: &Shot, out: &mut [f64]) {
        for (o, r) in out.iter_mut().zip(&shot.receivers) {
            *o = field.curr[self.padded_index(*r)];
        }
    }

    /// One full time step: stencil, source injection, damping.
    pub fn advance(&self, field: &mut Wavefield, shot: &Shot, t: usize, spec: &SchedulerSpec, pool: &WorkerPool) -> Result<f64, WaveError> {
        let secs = self.step(field, spec, pool)?;
        self.inject(field, shot, t);
        self.absorb(field);
        Ok(secs)
    }

    /// Runs `nt` time steps from rest, recording the receivers after each.
    pub fn forward_modeling(
        &self,
        shot: &Shot,
        nt: usize,
        spec: &SchedulerSpec,
        pool: &WorkerPool,
        mut sink: Option<&mut dyn CheckpointSink>,
    ) -> Result<ForwardOutput, WaveError> {
        shot.validate(self.model_dims, nt)?;
        let mut field = self.zero_field();
        let mut seismogram = Seismogram::zeros(nt, shot.receivers.len());
        let mut step_seconds = Vec::with_capacity(nt);
        for t in 0..nt {
            if let Some(s) = sink.as_deref_mut() {
                if s.wants(t) {
                    s.save(t, &field);
                }
            }
            step_seconds.push(self.advance(&mut field, shot, t, spec, pool)?);
            self.record(&field, shot, seismogram.row_mut(t));
        }
        Ok(ForwardOutput { seismogram, step_seconds })
    }

    /// Adds the receiver residuals of step `t` to the adjoint of `u[t+1]`.
    pub fn inject_residual(&self, adj: &mut AdjointField, shot: &Shot, residual: &[f64]) {
        for (r, p) in residual.iter().zip(&shot.receivers) {
            adj.beta[self.padded_index(*p)] += r;
        }
    }

    /// Transposed time step: maps the adjoint of the state after step `t` to
    /// the adjoint of the state before it. The Laplacian is symmetric on the
    /// updated region, so the transpose is again a stencil sweep.
    pub fn adjoint_step(&self, adj: &mut AdjointField, spec: &SchedulerSpec, pool: &WorkerPool) -> Result<f64, WaveError> {
        let n3 = self.dims.n3;
        let s1 = self.dims.n2 * n3;
        let s2 = n3;
        let w = LAPLACIAN_WEIGHTS;
        let alpha = LinePtr(adj.alpha.as_mut_ptr());
        let out = LinePtr(adj.scratch.as_mut_ptr());
        let beta = &adj.beta;
        let ct = &self.c2_taper;
        let elapsed = pool.parallel_for(self.line_range(), spec, |line| {
            let base = self.line_offset(line);
            // SAFETY: distinct lines of `alpha` and `scratch` per iteration.
            let (alpha, next) = unsafe { (alpha.line(base, n3), out.line(base, n3)) };
            assert!(base >= HALF_WIDTH * s1 && base + n3 + HALF_WIDTH * s1 <= beta.len() && ct.len() == beta.len());
            // SAFETY: the assertion bounds every offset used below.
            let cb = |q: usize| unsafe { ct.get_unchecked(q) * beta.get_unchecked(q) };
            for i3 in HALF_WIDTH..n3 - HALF_WIDTH {
                let p = base + i3;
                let mut lap = 3.0 * w[0] * cb(p);
                for k in 1..=HALF_WIDTH {
                    lap += w[k] * ((cb(p - k) + cb(p + k)) + (cb(p - k * s2) + cb(p + k * s2)) + (cb(p - k * s1) + cb(p + k * s1)));
                }
                let g = self.taper[p];
                next[i3] = g * alpha[i3] + 2.0 * g * beta[p] + lap * self.inv_dx2;
                alpha[i3] = -g * beta[p];
            }
        })?;
        std::mem::swap(&mut adj.beta, &mut adj.scratch);
        Ok(elapsed)
    }

    /// Accumulates the velocity sensitivity of time step `t` into `grad`
    /// (padded layout): the cross-correlation of the second time derivative
    /// of the forward field at `t` with the adjoint field, scaled by
    /// `2 / v`. `state` is the forward state before step `t`.
    pub fn accumulate_gradient(
        &self,
        grad: &mut [f64],
        state: &Wavefield,
        adj: &AdjointField,
        shot: &Shot,
        t: usize,
        spec: &SchedulerSpec,
        pool: &WorkerPool,
    ) -> Result<f64, WaveError> {
        if grad.len() != self.dims.len() {
            return Err(WaveError::Mismatch(format!("gradient buffer has {} points, grid {}", grad.len(), self.dims)));
        }
        let n3 = self.dims.n3;
        let out = LinePtr(grad.as_mut_ptr());
        let curr = &state.curr;
        let beta = &adj.beta;
        let elapsed = pool.parallel_for(self.line_range(), spec, |line| {
            let base = self.line_offset(line);
            // SAFETY: distinct lines of `grad` per iteration.
            let g = unsafe { out.line(base, n3) };
            for i3 in HALF_WIDTH..n3 - HALF_WIDTH {
                let p = base + i3;
                g[i3] += self.dc2[p] * self.laplacian(curr, p) * self.taper[p] * beta[p];
            }
        })?;
        let s = self.padded_index(shot.source);
        grad[s] += self.dc2[s] * shot.wavelet[t] * self.inv_dx2 * self.taper[s] * beta[s];
        Ok(elapsed)
    }

    /// Folds a padded-grid sensitivity back onto the model grid: halo points
    /// take their velocity from the nearest model point.
    pub fn fold_gradient(&self, padded: &[f64]) -> Vec<f64> {
        let m = self.model_dims;
        let w = self.width;
        let clamp = |j: usize, n: usize| j.saturating_sub(w).min(n - 1);
        let mut out = vec![0.0; m.len()];
        for j1 in 0..self.dims.n1 {
            for j2 in 0..self.dims.n2 {
                let row = m.index(clamp(j1, m.n1), clamp(j2, m.n2), 0);
                let base = self.dims.index(j1, j2, 0);
                for j3 in 0..self.dims.n3 {
                    out[row + clamp(j3, m.n3)] += padded[base + j3];
                }
            }
        }
        out
    }

    fn check_field(&self, field: &Wavefield) -> Result<(), WaveError> {
        if field.dims != self.dims || field.prev.len() != self.dims.len() || field.curr.len() != self.dims.len() {
            return Err(WaveError::Mismatch(format!("wavefield {} does not match padded grid {}", field.dims, self.dims)));
        }
        Ok(())
    }
}
