//! Coordinates and the closed-form observation equations that link the
//! vehicle state `(p, v, b_u, φ₀)` to the channel parameters seen from an
//! anchor.
//!
//! Conventions: Cartesian, right-handed, z up. Polar angle θ is measured from
//! +z, azimuth φ from +x. Azimuths use `atan2` so they are quadrant-correct.

use std::f64::consts::PI;
use std::ops::{Add, Sub};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, SPEED_OF_LIGHT};

/// Separation below which two points are treated as coincident, in metres.
pub const COINCIDENT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Position3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Velocity3 {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
}

impl Position3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn translate(self, shift: &Vector3<f64>) -> Self {
        Self::from_vector(&(self.to_vector() + shift))
    }
}

impl Velocity3 {
    pub const fn new(vx: f64, vy: f64, vz: f64) -> Self {
        Self { vx, vy, vz }
    }

    pub const fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.vx, self.vy, self.vz)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.vz.is_finite()
    }
}

impl From<[f64; 3]> for Position3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Position3> for [f64; 3] {
    fn from(p: Position3) -> Self {
        [p.x, p.y, p.z]
    }
}

impl From<[f64; 3]> for Velocity3 {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl From<Velocity3> for [f64; 3] {
    fn from(v: Velocity3) -> Self {
        [v.vx, v.vy, v.vz]
    }
}

impl Sub for Position3 {
    type Output = Vector3<f64>;

    fn sub(self, rhs: Self) -> Vector3<f64> {
        Vector3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Add<Vector3<f64>> for Position3 {
    type Output = Position3;

    fn add(self, rhs: Vector3<f64>) -> Position3 {
        self.translate(&rhs)
    }
}

/// Spherical coordinates: range, polar angle from +z, azimuth from +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalCoord {
    pub rho: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalCoord {
    pub fn new(rho: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidConfig(format!("spherical range must be > 0, got {rho}")));
        }
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::InvalidConfig(format!("polar angle {theta} outside [0, π]")));
        }
        Ok(Self { rho, theta, phi })
    }

    pub fn from_degrees(rho: f64, theta_deg: f64, phi_deg: f64) -> Result<Self> {
        Self::new(rho, theta_deg.to_radians(), phi_deg.to_radians())
    }
}

/// State of the vehicle: position, velocity, array azimuth rotation and
/// receiver clock bias.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlatformState {
    pub p: Position3,
    pub v: Velocity3,
    /// Azimuth rotation of the vehicle array, radians in (−π, π].
    pub phi0: f64,
    /// Receiver clock bias, seconds.
    pub b_u: f64,
}

impl PlatformState {
    pub fn new(p: Position3, v: Velocity3, phi0: f64, b_u: f64) -> Self {
        Self {
            p,
            v,
            phi0: wrap_angle(phi0),
            b_u,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorKind {
    Gnb,
    Satellite,
}

/// A transmitter with known position, velocity and carrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnchorState {
    pub kind: AnchorKind,
    pub p: Position3,
    pub v: Velocity3,
    pub carrier_freq: f64,
}

impl AnchorState {
    /// A fixed gNB (zero velocity).
    pub fn gnb(p: Position3, carrier_freq: f64) -> Self {
        Self {
            kind: AnchorKind::Gnb,
            p,
            v: Velocity3::zero(),
            carrier_freq,
        }
    }

    pub fn satellite(p: Position3, v: Velocity3, carrier_freq: f64) -> Self {
        Self {
            kind: AnchorKind::Satellite,
            p,
            v,
            carrier_freq,
        }
    }

    pub fn with_velocity(mut self, v: Velocity3) -> Self {
        self.v = v;
        self
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }
}

/// Wraps an angle into (−π, π]. Idempotent.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    // rem_euclid maps −π to π already; guard the 2π round-off edge.
    if w <= -PI {
        w += 2.0 * PI;
    }
    w
}

/// Unit vector `[cosφ sinθ, sinφ sinθ, cosθ]`.
pub fn unit_vector(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(cp * st, sp * st, ct)
}

pub fn spherical_to_cartesian(s: SphericalCoord) -> Position3 {
    Position3::from_vector(&(unit_vector(s.theta, s.phi) * s.rho))
}

/// Inverse of [`spherical_to_cartesian`] for points away from the origin.
pub fn cartesian_to_spherical(p: Position3) -> Result<SphericalCoord> {
    let r = p.to_vector().norm();
    if r < COINCIDENT_EPS {
        return Err(Error::CoincidentPoints { separation: r });
    }
    Ok(SphericalCoord {
        rho: r,
        theta: (p.z / r).clamp(-1.0, 1.0).acos(),
        phi: p.y.atan2(p.x),
    })
}

fn separation(p: Position3, p_a: Position3) -> Result<(Vector3<f64>, f64)> {
    let d = p - p_a;
    let n = d.norm();
    if n < COINCIDENT_EPS {
        return Err(Error::CoincidentPoints { separation: n });
    }
    Ok((d, n))
}

/// Direction of departure at anchor `p_a` toward `p`: `(θ_g, φ_g)`.
pub fn los_angles(p: Position3, p_a: Position3) -> Result<(f64, f64)> {
    let (d, n) = separation(p, p_a)?;
    let theta = (d.z / n).clamp(-1.0, 1.0).acos();
    Ok((theta, d.y.atan2(d.x)))
}

/// Direction of arrival in the vehicle array frame: `(θ_u, φ_u)`.
///
/// `φ_u = atan2(p̄_y, p̄_x) − φ₀ − π`, wrapped to (−π, π].
pub fn aoa_angles(p: Position3, p_a: Position3, phi0: f64) -> Result<(f64, f64)> {
    let (d, n) = separation(p, p_a)?;
    let theta = (-d.z / n).clamp(-1.0, 1.0).acos();
    let phi = wrap_angle(d.y.atan2(d.x) - phi0 - PI);
    Ok((theta, phi))
}

/// Doppler shift, Hz; positive when the range is closing.
pub fn doppler(
    p: Position3,
    v: Velocity3,
    p_a: Position3,
    v_a: Velocity3,
    wavelength: f64,
) -> Result<f64> {
    if !(wavelength > 0.0) {
        return Err(Error::InvalidConfig(format!("wavelength must be > 0, got {wavelength}")));
    }
    let (d, n) = separation(p, p_a)?;
    let dv = v.to_vector() - v_a.to_vector();
    Ok(-dv.dot(&d) / (wavelength * n))
}

/// Biased time of arrival `b_u + ‖p − p_a‖/c`, the small-Doppler limit of
/// [`biased_toa`]. This is the form used for parameter values.
pub fn biased_toa_approx(p: Position3, p_a: Position3, b_u: f64) -> Result<f64> {
    let (_, n) = separation(p, p_a)?;
    Ok(b_u + n / SPEED_OF_LIGHT)
}

/// Biased time of arrival including the clock-dilation term:
/// `(1 + f_d/f_c)·b_u + ‖p − p_a‖/c`.
pub fn biased_toa(p: Position3, p_a: Position3, b_u: f64, f_d: f64, f_c: f64) -> Result<f64> {
    let (_, n) = separation(p, p_a)?;
    Ok((1.0 + f_d / f_c) * b_u + n / SPEED_OF_LIGHT)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn spherical_pole_and_equator() {
        let p = spherical_to_cartesian(SphericalCoord::new(1.0, 0.0, 1.234).unwrap());
        assert_relative_eq!(p.x, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.z, 1.0);
        let p = spherical_to_cartesian(SphericalCoord::new(2.0, PI / 2.0, 0.0).unwrap());
        assert_relative_eq!(p.x, 2.0);
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-15);
        assert_relative_eq!(p.z, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn spherical_gps_orbit_example() {
        let s = SphericalCoord::from_degrees(20.2e6, 35.2, 45.0).unwrap();
        let p = spherical_to_cartesian(s);
        // ρ sin35.2° cos45°, ρ cos35.2°
        assert_relative_eq!(p.x, 8.2335e6, max_relative = 1e-4);
        assert_relative_eq!(p.y, 8.2335e6, max_relative = 1e-4);
        assert_relative_eq!(p.z, 16.5063e6, max_relative = 1e-4);
        let back = cartesian_to_spherical(p).unwrap();
        assert_relative_eq!(back.rho, s.rho, max_relative = 1e-12);
        assert_relative_eq!(back.theta, s.theta, epsilon = 1e-9);
        assert_relative_eq!(back.phi, s.phi, epsilon = 1e-9);
    }

    #[test]
    fn invalid_spherical_rejected() {
        assert!(SphericalCoord::new(0.0, 0.1, 0.0).is_err());
        assert!(SphericalCoord::new(1.0, -0.1, 0.0).is_err());
        assert!(SphericalCoord::new(1.0, 3.2, 0.0).is_err());
    }

    #[test]
    fn los_angle_examples() {
        let (t, _) = los_angles(Position3::new(1.0, 2.0, 8.0), Position3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(t, 0.0);

        let (t, f) = los_angles(Position3::new(10.0, 0.0, 0.0), Position3::new(0.0, 0.0, 7.0)).unwrap();
        assert_relative_eq!(t, (-7.0 / 149f64.sqrt()).acos(), epsilon = 1e-14);
        assert_relative_eq!(t.to_degrees(), 124.99, epsilon = 0.01);
        assert_eq!(f, 0.0);

        // p − p_a = (−10, 6, −5): second quadrant azimuth
        let (t, f) = los_angles(Position3::new(10.0, 0.0, 0.0), Position3::new(20.0, -6.0, 5.0)).unwrap();
        assert_relative_eq!(f, 6f64.atan2(-10.0), epsilon = 1e-15);
        assert!(f > PI / 2.0 && f < PI);
        assert_relative_eq!(t, (-5.0 / 161f64.sqrt()).acos(), epsilon = 1e-14);
    }

    #[test]
    fn coincident_points_rejected() {
        let p = Position3::new(1.0, 2.0, 3.0);
        let q = Position3::new(1.0, 2.0, 3.0 + 1e-7);
        assert!(matches!(los_angles(p, q), Err(Error::CoincidentPoints { .. })));
        assert!(matches!(aoa_angles(p, q, 0.0), Err(Error::CoincidentPoints { .. })));
        assert!(doppler(p, Velocity3::zero(), q, Velocity3::zero(), 1.0).is_err());
        assert!(biased_toa(p, q, 0.0, 0.0, 1e9).is_err());
    }

    #[test]
    fn aoa_examples() {
        let p_a = Position3::new(0.0, 0.0, 0.0);
        let p = Position3::new(5.0, 0.0, 0.0);
        let (t, f) = aoa_angles(p, p_a, 0.0).unwrap();
        assert_relative_eq!(t, PI / 2.0, epsilon = 1e-15);
        // −π wrapped into (−π, π] is +π: the same direction
        assert_relative_eq!(wrap_angle(f - (-PI)), 0.0, epsilon = 1e-15);
        assert!(f > -PI && f <= PI);

        let q = Position3::new(3.0, -4.0, 2.0);
        let (_, f0) = aoa_angles(q, p_a, 0.0).unwrap();
        let (_, f30) = aoa_angles(q, p_a, 30f64.to_radians()).unwrap();
        assert_relative_eq!(wrap_angle(f0 - f30), 30f64.to_radians(), epsilon = 1e-14);
    }

    #[test]
    fn doppler_examples() {
        let fc = 38e9;
        let lambda = SPEED_OF_LIGHT / fc;
        let v = Velocity3::new(13.89, 0.0, 0.0);
        // head-on approach toward a gNB ahead on +x
        let fd = doppler(Position3::new(0.0, 0.0, 0.0), v, Position3::new(100.0, 0.0, 0.0), Velocity3::zero(), lambda)
            .unwrap();
        assert_relative_eq!(fd, 13.89 / lambda, max_relative = 1e-12);
        assert!((fd - 1760.4).abs() < 0.5);

        let l1 = SPEED_OF_LIGHT / 1575.42e6;
        let fd = doppler(
            Position3::new(0.0, 0.0, 0.0),
            Velocity3::zero(),
            Position3::new(0.0, 0.0, 2.0e7),
            Velocity3::new(0.0, 0.0, 1000.0),
            l1,
        )
        .unwrap();
        assert!((fd + 5255.0).abs() < 1.0, "{fd}");

        let same = doppler(Position3::new(1.0, 2.0, 3.0), v, Position3::new(-4.0, 0.0, 9.0), v, lambda).unwrap();
        assert_eq!(same, 0.0);
        assert!(doppler(Position3::new(1.0, 2.0, 3.0), v, Position3::default(), v, 0.0).is_err());
    }

    #[test]
    fn biased_toa_examples() {
        let p = Position3::new(0.0, 0.0, 0.0);
        let q = Position3::new(299.792458, 0.0, 0.0);
        assert_relative_eq!(biased_toa(p, q, 0.0, 123.0, 38e9).unwrap(), 1e-6, max_relative = 1e-14);
        assert_relative_eq!(biased_toa_approx(p, q, 0.0).unwrap(), 1e-6, max_relative = 1e-14);
        let approx = biased_toa_approx(p, q, 1e-3).unwrap();
        let exact = biased_toa(p, q, 1e-3, 1e-7 * 38e9, 38e9).unwrap();
        assert_relative_eq!(exact - approx, 1e-10, max_relative = 1e-5);
    }

    #[test]
    fn wrap_is_idempotent_at_edges() {
        for a in [PI, -PI, 3.0 * PI, -3.0 * PI, 0.0, 2.0 * PI] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI, "{a} -> {w}");
            assert_eq!(wrap_angle(w), w);
        }
    }

    fn pos() -> impl Strategy<Value = Position3> {
        (-1e3..1e3f64, -1e3..1e3f64, -1e3..1e3f64).prop_map(|(x, y, z)| Position3::new(x, y, z))
    }

    fn vel() -> impl Strategy<Value = Velocity3> {
        (-50.0..50f64, -50.0..50f64, -50.0..50f64).prop_map(|(x, y, z)| Velocity3::new(x, y, z))
    }

    proptest! {
        #[test]
        fn aoa_polar_is_supplement_of_dod(p in pos(), q in pos(), phi0 in -PI..PI) {
            prop_assume!((p - q).norm() > 1e-3);
            let (tg, _) = los_angles(p, q).unwrap();
            let (tu, _) = aoa_angles(p, q, phi0).unwrap();
            prop_assert!((tu - (PI - tg)).abs() < 1e-12);
        }

        #[test]
        fn observations_translation_invariant(p in pos(), q in pos(), v in vel(), va in vel(),
                                              s in pos(), phi0 in -PI..PI, b in -1e-3..1e-3f64) {
            prop_assume!((p - q).norm() > 1e-2);
            let shift = s.to_vector();
            let (p2, q2) = (p + shift, q + shift);
            let lam = 0.01;
            let a = los_angles(p, q).unwrap();
            let b2 = los_angles(p2, q2).unwrap();
            prop_assert!((a.0 - b2.0).abs() < 1e-9 && wrap_angle(a.1 - b2.1).abs() < 1e-9);
            let a = aoa_angles(p, q, phi0).unwrap();
            let b2 = aoa_angles(p2, q2, phi0).unwrap();
            prop_assert!((a.0 - b2.0).abs() < 1e-9 && wrap_angle(a.1 - b2.1).abs() < 1e-9);
            let d1 = doppler(p, v, q, va, lam).unwrap();
            let d2 = doppler(p2, v, q2, va, lam).unwrap();
            prop_assert!((d1 - d2).abs() <= 1e-9 * d1.abs().max(1.0));
            let t1 = biased_toa_approx(p, q, b).unwrap();
            let t2 = biased_toa_approx(p2, q2, b).unwrap();
            prop_assert!((t1 - t2).abs() <= 1e-9 * t1.abs().max(1e-12) + 1e-18);
        }

        #[test]
        fn doppler_antisymmetric_in_relative_velocity(p in pos(), q in pos(), v in vel(), va in vel()) {
            prop_assume!((p - q).norm() > 1e-3);
            let d1 = doppler(p, v, q, va, 0.05).unwrap();
            let d2 = doppler(p, va, q, v, 0.05).unwrap();
            prop_assert!((d1 + d2).abs() <= 1e-12 * d1.abs().max(1.0));
        }

        #[test]
        fn angles_wrapped(p in pos(), q in pos(), phi0 in -10.0..10f64) {
            prop_assume!((p - q).norm() > 1e-3);
            let (t, f) = aoa_angles(p, q, phi0).unwrap();
            prop_assert!((0.0..=PI).contains(&t));
            prop_assert!(f > -PI && f <= PI);
            prop_assert_eq!(wrap_angle(f), f);
        }

        #[test]
        fn spherical_round_trip(rho in 1.0..3e7f64, theta in 0.01..(PI - 0.01), phi in -3.1..3.1f64) {
            let s = SphericalCoord::new(rho, theta, phi).unwrap();
            let back = cartesian_to_spherical(spherical_to_cartesian(s)).unwrap();
            prop_assert!((back.rho - rho).abs() <= 1e-12 * rho);
            prop_assert!((back.theta - theta).abs() < 1e-9);
            prop_assert!(wrap_angle(back.phi - phi).abs() < 1e-9);
        }
    }
}
