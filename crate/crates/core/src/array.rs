//! Uniform rectangular arrays and their steering vectors.
//!
//! Element locations are stored in half-wavelength units of the carrier. The
//! phase of element `i` at subcarrier wavelength `λ_k` is
//! `−(2π/λ_k)·(λ_c/2)·⟨l_i, u(θ, φ)⟩`, so the wideband squint is kept.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::unit_vector;
use crate::{Error, Result};

/// Complex column vector used for steering vectors and beams.
pub type CVector = DVector<Complex64>;

/// Axis the array faces. The element grid lies in the plane orthogonal to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boresight {
    #[serde(rename = "+x")]
    PlusX,
    #[serde(rename = "+y")]
    PlusY,
    #[serde(rename = "+z")]
    PlusZ,
}

impl fmt::Display for Boresight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Boresight::PlusX => "+x",
            Boresight::PlusY => "+y",
            Boresight::PlusZ => "+z",
        })
    }
}

impl FromStr for Boresight {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "+x" | "x" => Ok(Boresight::PlusX),
            "+y" | "y" => Ok(Boresight::PlusY),
            "+z" | "z" => Ok(Boresight::PlusZ),
            other => Err(Error::InvalidConfig(format!("unknown boresight '{other}'"))),
        }
    }
}

impl Boresight {
    pub fn axis(self) -> Vector3<f64> {
        match self {
            Boresight::PlusX => Vector3::x(),
            Boresight::PlusY => Vector3::y(),
            Boresight::PlusZ => Vector3::z(),
        }
    }

    /// `(θ, φ)` of the boresight axis.
    pub fn angles(self) -> (f64, f64) {
        match self {
            Boresight::PlusX => (PI / 2.0, 0.0),
            Boresight::PlusY => (PI / 2.0, PI / 2.0),
            Boresight::PlusZ => (0.0, 0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AntennaArray {
    locations: Vec<Vector3<f64>>,
    boresight: Boresight,
    shape: (usize, usize),
}

/// A steering vector together with its partial derivatives in θ and φ.
#[derive(Debug, Clone)]
pub struct ArrayResponse {
    pub a: CVector,
    pub d_theta: CVector,
    pub d_phi: CVector,
}

impl AntennaArray {
    /// Builds an `nx × ny` half-wavelength grid centred on the origin.
    ///
    /// Row-major: element `i·ny + j` sits at grid offset
    /// `(i − (nx−1)/2, j − (ny−1)/2)`, mapped onto the two axes orthogonal to
    /// the boresight in ascending order (x before y before z).
    pub fn ura(nx: usize, ny: usize, boresight: Boresight) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidConfig(format!("array dimensions must be >= 1, got {nx}x{ny}")));
        }
        let cx = (nx as f64 - 1.0) / 2.0;
        let cy = (ny as f64 - 1.0) / 2.0;
        let mut locations = Vec::with_capacity(nx * ny);
        for i in 0..nx {
            for j in 0..ny {
                let (a, b) = (i as f64 - cx, j as f64 - cy);
                locations.push(match boresight {
                    Boresight::PlusX => Vector3::new(0.0, a, b),
                    Boresight::PlusY => Vector3::new(a, 0.0, b),
                    Boresight::PlusZ => Vector3::new(a, b, 0.0),
                });
            }
        }
        Ok(Self {
            locations,
            boresight,
            shape: (nx, ny),
        })
    }

    /// Arbitrary element positions, in half-wavelength units.
    pub fn from_locations(locations: Vec<Vector3<f64>>, boresight: Boresight) -> Result<Self> {
        if locations.is_empty() {
            return Err(Error::InvalidConfig("array needs at least one element".into()));
        }
        if locations.iter().any(|l| !l.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidConfig("array element locations must be finite".into()));
        }
        let n = locations.len();
        Ok(Self {
            locations,
            boresight,
            shape: (n, 1),
        })
    }

    pub fn element_count(&self) -> usize {
        self.locations.len()
    }

    pub fn locations(&self) -> &[Vector3<f64>] {
        &self.locations
    }

    pub fn boresight(&self) -> Boresight {
        self.boresight
    }

    pub fn shape(&self) -> (usize, usize) {
        self.shape
    }

    fn phase_scale(wavelength_k: f64, carrier_wavelength: f64) -> f64 {
        -2.0 * PI / wavelength_k * (carrier_wavelength / 2.0)
    }

    /// `(1/√N)·exp(−j(2π/λ_k)(λ_c/2)·L·u(θ, φ))`.
    pub fn response(&self, theta: f64, phi: f64, wavelength_k: f64, carrier_wavelength: f64) -> CVector {
        let u = unit_vector(theta, phi);
        let k = Self::phase_scale(wavelength_k, carrier_wavelength);
        let amp = 1.0 / (self.element_count() as f64).sqrt();
        CVector::from_iterator(
            self.element_count(),
            self.locations.iter().map(|l| Complex64::from_polar(amp, k * l.dot(&u))),
        )
    }

    /// Steering vector plus its analytic derivatives in θ and φ.
    pub fn response_with_derivatives(
        &self,
        theta: f64,
        phi: f64,
        wavelength_k: f64,
        carrier_wavelength: f64,
    ) -> ArrayResponse {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let u = Vector3::new(cp * st, sp * st, ct);
        let du_t = Vector3::new(cp * ct, sp * ct, -st);
        let du_p = Vector3::new(-sp * st, cp * st, 0.0);
        let k = Self::phase_scale(wavelength_k, carrier_wavelength);
        let amp = 1.0 / (self.element_count() as f64).sqrt();
        let n = self.element_count();
        let mut a = CVector::zeros(n);
        let mut d_theta = CVector::zeros(n);
        let mut d_phi = CVector::zeros(n);
        for (i, l) in self.locations.iter().enumerate() {
            let e = Complex64::from_polar(amp, k * l.dot(&u));
            a[i] = e;
            d_theta[i] = e * Complex64::new(0.0, k * l.dot(&du_t));
            d_phi[i] = e * Complex64::new(0.0, k * l.dot(&du_p));
        }
        ArrayResponse { a, d_theta, d_phi }
    }

    /// Analytic `(∂a/∂θ, ∂a/∂φ)`.
    pub fn response_derivatives(
        &self,
        theta: f64,
        phi: f64,
        wavelength_k: f64,
        carrier_wavelength: f64,
    ) -> (CVector, CVector) {
        let r = self.response_with_derivatives(theta, phi, wavelength_k, carrier_wavelength);
        (r.d_theta, r.d_phi)
    }
}
