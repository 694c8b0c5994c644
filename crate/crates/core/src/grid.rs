use crate::error::ValidationError;

/// Uniform periodic grid over [x_min, x_max) × [z_min, z_max).
///
/// Node (ix, iz) sits at (x_min + ix·dx, z_min + iz·dz); data is stored
/// row-major with z as the slow index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub nz: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl Grid2D {
    pub fn new(
        nx: usize,
        nz: usize,
        (x_min, x_max): (f64, f64),
        (z_min, z_max): (f64, f64),
    ) -> Result<Self, ValidationError> {
        let grid = Self {
            nx,
            nz,
            x_min,
            x_max,
            z_min,
            z_max,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        if !self.nx.is_power_of_two() || self.nx < 2 {
            return Err(ValidationError::new("grid.nx", "must be a power of two"));
        }
        if !self.nz.is_power_of_two() || self.nz < 2 {
            return Err(ValidationError::new("grid.nz", "must be a power of two"));
        }
        let ok = |a: f64, b: f64| a.is_finite() && b.is_finite() && a < b;
        if !ok(self.x_min, self.x_max) {
            return Err(ValidationError::new("grid.x_min", "must be below grid.x_max"));
        }
        if !ok(self.z_min, self.z_max) {
            return Err(ValidationError::new("grid.z_min", "must be below grid.z_max"));
        }
        Ok(())
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    #[inline]
    pub fn dz(&self) -> f64 {
        (self.z_max - self.z_min) / self.nz as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.nz
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn x(&self, ix: usize) -> f64 {
        self.x_min + ix as f64 * self.dx()
    }

    #[inline]
    pub fn z(&self, iz: usize) -> f64 {
        self.z_min + iz as f64 * self.dz()
    }

    #[inline]
    pub fn index(&self, ix: usize, iz: usize) -> usize {
        iz * self.nx + ix
    }

    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dz()
    }

    /// Largest |k| resolved along each axis (the Nyquist wavenumbers).
    pub fn k_max(&self) -> (f64, f64) {
        (
            std::f64::consts::PI / self.dx(),
            std::f64::consts::PI / self.dz(),
        )
    }

    /// True when (x, z) lies inside the region covered by interpolation
    /// (the last node row/column is the upper limit; no periodic wrap).
    pub fn contains(&self, x: f64, z: f64) -> bool {
        x >= self.x_min
            && z >= self.z_min
            && x <= self.x(self.nx - 1)
            && z <= self.z(self.nz - 1)
    }
}
