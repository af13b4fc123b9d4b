use super::WaveError;

/// Grid point counts along x1 (depth), x2 and x3. x3 is the fastest axis in
/// memory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims3 {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl Dims3 {
    pub const fn new(n1: usize, n2: usize, n3: usize) -> Self {
        Self { n1, n2, n3 }
    }

    pub const fn cube(n: usize) -> Self {
        Self::new(n, n, n)
    }

    pub const fn len(&self) -> usize {
        self.n1 * self.n2 * self.n3
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub const fn index(&self, i1: usize, i2: usize, i3: usize) -> usize {
        (i1 * self.n2 + i2) * self.n3 + i3
    }

    pub fn contains(&self, p: [usize; 3]) -> bool {
        p[0] < self.n1 && p[1] < self.n2 && p[2] < self.n3
    }

    pub fn padded(&self, width: usize) -> Self {
        Self::new(self.n1 + 2 * width, self.n2 + 2 * width, self.n3 + 2 * width)
    }
}

impl std::fmt::Display for Dims3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.n1, self.n2, self.n3)
    }
}

/// Acoustic velocities (m/s) on a regular grid with equal spacing on all axes.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityModel {
    dims: Dims3,
    dx: f64,
    v: Vec<f64>,
}

impl VelocityModel {
    pub fn new(dims: Dims3, dx: f64, v: Vec<f64>) -> Result<Self, WaveError> {
        if dims.is_empty() {
            return Err(WaveError::InvalidModel("grid has no points".into()));
        }
        if v.len() != dims.len() {
            return Err(WaveError::InvalidModel(format!("expected {} velocities for {dims}, got {}", dims.len(), v.len())));
        }
        if !(dx > 0.0 && dx.is_finite()) {
            return Err(WaveError::InvalidModel(format!("grid spacing must be positive, got {dx}")));
        }
        if let Some(bad) = v.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(WaveError::InvalidModel(format!("velocity must be positive and finite, got {bad}")));
        }
        Ok(Self { dims, dx, v })
    }

    pub fn homogeneous(dims: Dims3, dx: f64, velocity: f64) -> Result<Self, WaveError> {
        Self::new(dims, dx, vec![velocity; dims.len()])
    }

    pub fn dims(&self) -> Dims3 {
        self.dims
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn into_values(self) -> Vec<f64> {
        self.v
    }

    pub fn at(&self, p: [usize; 3]) -> f64 {
        self.v[self.dims.index(p[0], p[1], p[2])]
    }

    pub fn max_velocity(&self) -> f64 {
        self.v.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn min_velocity(&self) -> f64 {
        self.v.iter().copied().fold(f64::MAX, f64::min)
    }

    pub fn mean_velocity(&self) -> f64 {
        self.v.iter().sum::<f64>() / self.v.len() as f64
    }

    /// First `n1` slices along x1.
    pub fn leading_slices(&self, n1: usize) -> Result<Self, WaveError> {
        if n1 == 0 || n1 > self.dims.n1 {
            return Err(WaveError::InvalidModel(format!("cannot take {n1} slices from {}", self.dims)));
        }
        let dims = Dims3::new(n1, self.dims.n2, self.dims.n3);
        Self::new(dims, self.dx, self.v[..dims.len()].to_vec())
    }
}

/// Spherical Gaussian velocity anomaly in a homogeneous background, in
/// absolute coordinates (meters, grid node `i` sits at `i * dx`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSphere {
    pub v_bg: f64,
    pub v_peak: f64,
    pub center_m: [f64; 3],
    pub sigma_m: f64,
}

impl GaussianSphere {
    /// Center given as a fraction of each extent and width as a fraction of
    /// the smallest extent.
    pub fn fractional(dims: Dims3, dx: f64, v_bg: f64, v_peak: f64, center: [f64; 3], radius_scale: f64) -> Self {
        let n = [dims.n1, dims.n2, dims.n3];
        let center_m = [0, 1, 2].map(|a| center[a] * n[a] as f64 * dx);
        let sigma_m = radius_scale * dims.n1.min(dims.n2).min(dims.n3) as f64 * dx;
        Self { v_bg, v_peak, center_m, sigma_m }
    }

    pub fn velocity_at(&self, x: [f64; 3]) -> f64 {
        let r2: f64 = (0..3).map(|a| (x[a] - self.center_m[a]).powi(2)).sum();
        self.v_bg + (self.v_peak - self.v_bg) * (-r2 / (2.0 * self.sigma_m * self.sigma_m)).exp()
    }

    pub fn build(&self, dims: Dims3, dx: f64) -> Result<VelocityModel, WaveError> {
        if self.v_peak < self.v_bg {
            return Err(WaveError::InvalidModel(format!("peak velocity {} below background {}", self.v_peak, self.v_bg)));
        }
        if !(self.sigma_m > 0.0) {
            return Err(WaveError::InvalidModel("sphere width must be positive".into()));
        }
        let mut v = Vec::with_capacity(dims.len());
        for i1 in 0..dims.n1 {
            for i2 in 0..dims.n2 {
                for i3 in 0..dims.n3 {
                    v.push(self.velocity_at([i1 as f64 * dx, i2 as f64 * dx, i3 as f64 * dx]));
                }
            }
        }
        VelocityModel::new(dims, dx, v)
    }
}

/// Homogeneous background with a spherical Gaussian perturbation peaking at
/// `v_peak`. `center` is fractional per axis, the Gaussian width is
/// `radius_scale * min(n1, n2, n3) * dx`.
pub fn make_gaussian_sphere_model(
    dims: Dims3,
    dx: f64,
    v_bg: f64,
    v_peak: f64,
    center: [f64; 3],
    radius_scale: f64,
) -> Result<VelocityModel, WaveError> {
    GaussianSphere::fractional(dims, dx, v_bg, v_peak, center, radius_scale).build(dims, dx)
}
