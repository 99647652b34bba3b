//! Independent cross-checks: finite-difference Jacobians of the observation
//! functions and a randomized suite comparing every closed form against its
//! numerical counterpart.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::array::{AntennaArray, Boresight};
use crate::bounds::{efim_position_velocity, transform_g, transform_s};
use crate::fim::{
    effective_bandwidth_sq, effective_bandwidth_sq_quadrature, effective_time_sq, effective_time_sq_quadrature,
    fim_5g_closed, fim_5g_numeric, Fim, ParamVec5G, Power5GConfig, LABELS_STATE,
};
use crate::geometry::{
    aoa_angles, biased_toa, doppler, los_angles, spherical_to_cartesian, wrap_angle, AnchorState, PlatformState,
    Position3, SphericalCoord, Velocity3,
};
use crate::scenario::{l1_ca_signal, ArraySpec, AvSpec, CodebookSpec, GnbSpec, SatelliteSpec, ScenarioSpec};
use crate::waveform::{build_codebook, GnbLink, OfdmConfig, PilotSet, Sector};
use crate::Result;

/// Observation vector `[θ_g, φ_g, θ_u, φ_u, τ_b, f_d]` with the exact
/// biased-TOA model.
fn observe_gnb(state: &PlatformState, anchor: &AnchorState) -> Result<[f64; 6]> {
    let (tg, pg) = los_angles(state.p, anchor.p)?;
    let (tu, pu) = aoa_angles(state.p, anchor.p, state.phi0)?;
    let [tau, fd] = observe_sat(state, anchor)?;
    Ok([tg, pg, tu, pu, tau, fd])
}

fn observe_sat(state: &PlatformState, anchor: &AnchorState) -> Result<[f64; 2]> {
    let fd = doppler(state.p, state.v, anchor.p, anchor.v, anchor.wavelength())?;
    let tau = biased_toa(state.p, anchor.p, state.b_u, fd, anchor.carrier_freq)?;
    Ok([tau, fd])
}

fn perturbed(state: &PlatformState, coord: usize, delta: f64) -> PlatformState {
    let mut s = *state;
    match coord {
        0 => s.p.x += delta,
        1 => s.p.y += delta,
        2 => s.p.z += delta,
        3 => s.v.vx += delta,
        4 => s.v.vy += delta,
        5 => s.v.vz += delta,
        _ => s.b_u += delta,
    }
    s
}

/// Five-point central differences of `obs` in each state coordinate.
/// `angular[j]` marks outputs whose differences are wrapped to (−π, π].
fn fd_jacobian<const N: usize>(
    state: &PlatformState,
    anchor: &AnchorState,
    obs: impl Fn(&PlatformState) -> Result<[f64; N]>,
    angular: [bool; N],
) -> Result<SMatrix<f64, 7, N>> {
    let range = (state.p - anchor.p).norm();
    let rel_speed = (state.v.to_vector() - anchor.v.to_vector()).norm();
    let steps = [
        1e-3 * range,
        1e-3 * range,
        1e-3 * range,
        1e-3 * rel_speed.max(1.0),
        1e-3 * rel_speed.max(1.0),
        1e-3 * rel_speed.max(1.0),
        1e-3 * state.b_u.abs().max(1e-3),
    ];
    let centre = obs(state)?;
    let mut out = SMatrix::<f64, 7, N>::zeros();
    for (c, &h) in steps.iter().enumerate() {
        let mut vals = [[0.0; N]; 4];
        for (slot, mult) in [2.0, 1.0, -1.0, -2.0].into_iter().enumerate() {
            vals[slot] = obs(&perturbed(state, c, mult * h))?;
        }
        for j in 0..N {
            let d = |v: f64| if angular[j] { wrap_angle(v - centre[j]) } else { v - centre[j] };
            let (p2, p1, m1, m2) = (d(vals[0][j]), d(vals[1][j]), d(vals[2][j]), d(vals[3][j]));
            out[(c, j)] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        }
    }
    Ok(out)
}

/// Finite-difference counterpart of [`transform_g`].
pub fn transform_g_fd(state: &PlatformState, anchor: &AnchorState) -> Result<SMatrix<f64, 7, 6>> {
    fd_jacobian(state, anchor, |s| observe_gnb(s, anchor), [false, true, false, true, false, false])
}

/// Finite-difference counterpart of [`transform_s`].
pub fn transform_s_fd(state: &PlatformState, anchor: &AnchorState) -> Result<SMatrix<f64, 7, 2>> {
    fd_jacobian(state, anchor, |s| observe_sat(s, anchor), [false, false])
}

/// Largest per-entry relative deviation over entries whose reference
/// magnitude is at least `floor`.
pub fn max_entry_deviation<const R: usize, const C: usize>(
    analytic: &SMatrix<f64, R, C>,
    reference: &SMatrix<f64, R, C>,
    floor: f64,
) -> f64 {
    analytic
        .iter()
        .zip(reference.iter())
        .filter(|(_, r)| r.abs() >= floor)
        .map(|(a, r)| ((a - r) / r).abs())
        .fold(0.0, f64::max)
}

pub fn relative_frobenius(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let n = reference.norm();
    if n == 0.0 {
        return a.norm();
    }
    (a - reference).norm() / n
}

/// Entries of a Jacobian below this magnitude are not compared.
pub const JACOBIAN_FLOOR: f64 = 1e-9;

/// Random vehicle state near the origin.
pub fn random_state(rng: &mut impl Rng) -> PlatformState {
    let p = Position3::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0), rng.random_range(0.0..3.0));
    let v = Velocity3::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0), rng.random_range(-2.0..2.0));
    PlatformState::new(p, v, rng.random_range(-PI..PI), rng.random_range(-1e-3..1e-3))
}

/// Random gNB at least 1 m away horizontally from `state`.
pub fn random_gnb(rng: &mut impl Rng, state: &PlatformState) -> AnchorState {
    loop {
        let p = Position3::new(
            rng.random_range(-100.0..100.0),
            rng.random_range(-100.0..100.0),
            rng.random_range(3.0..30.0),
        );
        let d = state.p - p;
        if d.x.hypot(d.y) > 1.0 {
            return AnchorState::gnb(p, 38e9);
        }
    }
}

/// Random GPS-like satellite: range 20 200 km, 3.9 km/s in a random direction.
pub fn random_satellite(rng: &mut impl Rng) -> AnchorState {
    let s = SphericalCoord::from_degrees(20.2e6, rng.random_range(5.0..80.0), rng.random_range(-180.0..180.0))
        .expect("valid spherical coordinates");
    let dir = nalgebra::Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    )
    .normalize();
    AnchorState::satellite(spherical_to_cartesian(s), Velocity3::from_vector(&(dir * 3900.0)), 1575.42e6)
}

/// A small random gNB link with its true channel parameters. Dimensions stay
/// at or below 8 elements, 16 subcarriers and 8 symbols, and the Doppler is
/// nonzero.
pub fn random_small_link(rng: &mut impl Rng) -> (GnbLink, ParamVec5G) {
    let shapes = [(1, 2), (2, 2), (2, 3), (1, 4), (2, 4), (3, 2)];
    let (gx, gy) = shapes[rng.random_range(0..shapes.len())];
    let (ux, uy) = shapes[rng.random_range(0..shapes.len())];
    let tx = AntennaArray::ura(gx, gy, Boresight::PlusX).expect("nonempty");
    let rx = AntennaArray::ura(ux, uy, Boresight::PlusZ).expect("nonempty");
    let k = [4, 8, 12, 16][rng.random_range(0..4)];
    let num_beams = rng.random_range(2..6);
    let ofdm = OfdmConfig {
        num_subcarriers: k,
        num_symbols: rng.random_range(2..=8),
        delta_f: 125e6 / 1024.0,
        f_c: 38e9,
        t_s: 1024.0 / 125e6,
        t_cp: 8e-9,
        num_beams,
        num_streams: rng.random_range(1..=2),
        ici_halfwidth: rng.random_range(0..3),
    };
    let sector = Sector {
        center_azimuth: rng.random_range(-0.5..0.5),
        span: rng.random_range(0.3..2.0),
        polar: rng.random_range(1.5..2.2),
    };
    let phi0 = rng.random_range(-PI..PI);
    let beams = build_codebook(&ofdm, &tx, &rx, sector, phi0).expect("valid sector");
    let pilots = PilotSet::generate(&ofdm, rng.random());
    let theta_g = rng.random_range(1.6..2.4);
    let phi_g = rng.random_range(-0.8..0.8);
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let eta = ParamVec5G {
        theta_g,
        phi_g,
        theta_u: PI - theta_g,
        phi_u: wrap_angle(phi_g - phi0 - PI),
        tau_b: rng.random_range(1e-8..1e-6),
        f_d: sign * rng.random_range(200.0..3000.0),
    };
    let power = Power5GConfig::new(30.0, tx.element_count(), rx.element_count());
    (
        GnbLink {
            ofdm,
            tx_array: tx,
            rx_array: rx,
            beams,
            pilots,
            power,
        },
        eta,
    )
}

/// A small random scenario: two gNBs whose codebooks face the vehicle and
/// four satellites. Cheap enough to sweep every anchor subset.
pub fn random_small_scenario(rng: &mut impl Rng) -> ScenarioSpec {
    let state = random_state(rng);
    let av = AvSpec {
        state,
        array: ArraySpec {
            nx: 2,
            ny: 2,
            boresight: Boresight::PlusZ,
        },
    };
    let ofdm = OfdmConfig {
        num_subcarriers: 16,
        num_symbols: 8,
        delta_f: 125e6 / 1024.0,
        f_c: 38e9,
        t_s: 1024.0 / 125e6,
        t_cp: 8e-9,
        num_beams: 4,
        num_streams: 1,
        ici_halfwidth: 1,
    };
    let gnbs = (0..2)
        .map(|i| {
            let anchor = random_gnb(rng, &state);
            let (theta, phi) = los_angles(state.p, anchor.p).expect("separated");
            GnbSpec {
                anchor,
                array: ArraySpec {
                    nx: 3,
                    ny: 3,
                    boresight: Boresight::PlusX,
                },
                pn0_dbhz: 30.0,
                ofdm: ofdm.clone(),
                codebook: CodebookSpec {
                    center_azimuth_deg: phi.to_degrees() + rng.random_range(-10.0..10.0),
                    span_deg: 60.0,
                    polar_deg: theta.to_degrees(),
                },
                pilot_seed: i + 1,
            }
        })
        .collect();
    let satellites = (0..4)
        .map(|_| SatelliteSpec {
            anchor: random_satellite(rng),
            signal: l1_ca_signal(),
        })
        .collect();
    ScenarioSpec {
        name: "random".into(),
        description: String::new(),
        av,
        gnbs,
        satellites,
        satellite_motion: None,
    }
}

fn random_psd7(rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(7, 9, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose()
}

/// Maximum deviations found by [`run_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Closed-form vs finite-difference 5G FIM, relative Frobenius.
    pub fim_5g: f64,
    /// Analytic vs finite-difference gNB Jacobian, per entry.
    pub transform_g: f64,
    /// Analytic vs finite-difference satellite Jacobian, per entry.
    pub transform_s: f64,
    /// Schur-complement EFIM vs `((J⁻¹)_pv)⁻¹`, relative Frobenius.
    pub efim: f64,
    /// Rectangular-pulse `W_eff²` closed form vs quadrature, relative.
    pub w_eff: f64,
    /// Rectangular-pulse `T_eff²` closed form vs quadrature, relative.
    pub t_eff: f64,
}

/// Instance counts for [`run_suite`].
#[derive(Debug, Clone, Copy)]
pub struct SuiteSize {
    pub fim_instances: usize,
    pub jacobian_states: usize,
    pub efim_instances: usize,
}

impl Default for SuiteSize {
    fn default() -> Self {
        Self {
            fim_instances: 50,
            jacobian_states: 1000,
            efim_instances: 100,
        }
    }
}

pub fn fim_5g_deviation(rng: &mut impl Rng) -> Result<f64> {
    let (link, eta) = random_small_link(rng);
    let closed = fim_5g_closed(&link, &eta)?;
    let numeric = fim_5g_numeric(&link, &eta)?;
    Ok(relative_frobenius(closed.values(), numeric.values()))
}

pub fn jacobian_deviations(rng: &mut impl Rng) -> Result<(f64, f64)> {
    let state = random_state(rng);
    let gnb = random_gnb(rng, &state);
    let sat = random_satellite(rng);
    let g = max_entry_deviation(&transform_g(&state, &gnb)?.0, &transform_g_fd(&state, &gnb)?, JACOBIAN_FLOOR);
    let s = max_entry_deviation(&transform_s(&state, &sat)?.0, &transform_s_fd(&state, &sat)?, JACOBIAN_FLOOR);
    Ok((g, s))
}

pub fn efim_deviation(rng: &mut impl Rng) -> Result<f64> {
    let j = random_psd7(rng);
    let schur = efim_position_velocity(&Fim::new(j.clone(), &LABELS_STATE)?)?;
    let inv = j.try_inverse().expect("random PSD draw is nonsingular");
    let oracle = inv.view((0, 0), (6, 6)).into_owned().try_inverse().expect("principal block of an SPD inverse");
    Ok(relative_frobenius(schur.values(), &oracle))
}

pub fn quadrature_deviations() -> Result<(f64, f64)> {
    let cfg = l1_ca_signal();
    let w = effective_bandwidth_sq(&cfg)?;
    let t = effective_time_sq(&cfg)?;
    let wq = effective_bandwidth_sq_quadrature(&cfg)?;
    let tq = effective_time_sq_quadrature(&cfg)?;
    Ok(((wq - w).abs() / w, (tq - t).abs() / t))
}

/// Runs every cross-check and reports the worst deviation of each.
pub fn run_suite(size: SuiteSize, seed: u64) -> Result<OracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = OracleReport {
        fim_5g: 0.0,
        transform_g: 0.0,
        transform_s: 0.0,
        efim: 0.0,
        w_eff: 0.0,
        t_eff: 0.0,
    };
    for _ in 0..size.fim_instances {
        report.fim_5g = report.fim_5g.max(fim_5g_deviation(&mut rng)?);
    }
    for _ in 0..size.jacobian_states {
        let (g, s) = jacobian_deviations(&mut rng)?;
        report.transform_g = report.transform_g.max(g);
        report.transform_s = report.transform_s.max(s);
    }
    for _ in 0..size.efim_instances {
        report.efim = report.efim.max(efim_deviation(&mut rng)?);
    }
    let (w, t) = quadrature_deviations()?;
    report.w_eff = w;
    report.t_eff = t;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobians_agree_on_fixed_geometry() {
        let state = PlatformState::new(Position3::new(10.0, 0.0, 1.5), Velocity3::new(13.89, 0.0, 0.0), 0.0, 2e-4);
        let gnb = AnchorState::gnb(Position3::new(20.0, -6.0, 5.0), 38e9);
        let a = transform_g(&state, &gnb).unwrap().0;
        let f = transform_g_fd(&state, &gnb).unwrap();
        assert!(max_entry_deviation(&a, &f, JACOBIAN_FLOOR) < 1e-6);
        let sat = AnchorState::satellite(
            spherical_to_cartesian(SphericalCoord::from_degrees(20.2e6, 35.2, 45.0).unwrap()),
            Velocity3::new(1000.0, 2000.0, -3000.0),
            1575.42e6,
        );
        let a = transform_s(&state, &sat).unwrap().0;
        let f = transform_s_fd(&state, &sat).unwrap();
        assert!(max_entry_deviation(&a, &f, JACOBIAN_FLOOR) < 1e-6);
    }

    #[test]
    fn small_suite_is_clean() {
        let r = run_suite(
            SuiteSize {
                fim_instances: 3,
                jacobian_states: 50,
                efim_instances: 10,
            },
            99,
        )
        .unwrap();
        assert!(r.fim_5g < 1e-5, "{r:?}");
        assert!(r.transform_g < 1e-6 && r.transform_s < 1e-6, "{r:?}");
        assert!(r.efim < 1e-8);
        assert!(r.w_eff < 0.01 && r.t_eff < 0.01);
    }
}
