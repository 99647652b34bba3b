//! From channel-parameter information to position / velocity error bounds.
//!
//! Each anchor's FIM is mapped to the state `η′ = [p, v, b_u]` with the
//! Jacobian of its observation functions, the contributions are summed, the
//! clock bias is removed with a Schur complement and PEB / VEB are read off
//! the inverse.
//!
//! Rank and identifiability are judged on the Jacobi-scaled matrix
//! `D^{−1/2} J D^{−1/2}` so that the very different units of delay, angle and
//! Doppler information do not masquerade as rank loss. A position (velocity)
//! bound is reported whenever all three position (velocity) coordinates are
//! identifiable, using the generalized inverse on the identifiable subspace.

use nalgebra::{DMatrix, DVector, SMatrix, SymmetricEigen, Vector3};
use serde::Serialize;

use crate::fim::{Fim, ParamVec5G, ParamVecGnss, LABELS_PV, LABELS_STATE};
use crate::geometry::{aoa_angles, biased_toa_approx, doppler, los_angles, AnchorState, PlatformState};
use crate::{Error, Result, SPEED_OF_LIGHT};

/// Relative eigenvalue threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-10;
/// Largest null-space component a coordinate may have and still count as
/// identifiable.
pub const IDENTIFIABILITY_TOL: f64 = 1e-6;
/// `J_bu` below this fraction of the trace (but nonzero) is rejected.
pub const DEGENERATE_BIAS_TOL: f64 = 1e-12;

/// Horizontal LOS distance (relative to range) below which the azimuth
/// derivatives are undefined.
const VERTICAL_TOL: f64 = 1e-9;

/// `∂η_gᵀ/∂η′`: rows `[p, v, b_u]`, columns `[θ_g, φ_g, θ_u, φ_u, τ_b, f_d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformG(pub SMatrix<f64, 7, 6>);

/// `∂η_sᵀ/∂η′`: rows `[p, v, b_u]`, columns `[τ_b, f_d]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformS(pub SMatrix<f64, 7, 2>);

/// Channel parameters seen by the vehicle from a gNB. The delay uses the
/// small-Doppler form `b_u + ‖p − p_g‖/c`.
pub fn channel_params_5g(state: &PlatformState, anchor: &AnchorState) -> Result<ParamVec5G> {
    let (theta_g, phi_g) = los_angles(state.p, anchor.p)?;
    let (theta_u, phi_u) = aoa_angles(state.p, anchor.p, state.phi0)?;
    Ok(ParamVec5G {
        theta_g,
        phi_g,
        theta_u,
        phi_u,
        tau_b: biased_toa_approx(state.p, anchor.p, state.b_u)?,
        f_d: doppler(state.p, state.v, anchor.p, anchor.v, anchor.wavelength())?,
    })
}

pub fn channel_params_gnss(state: &PlatformState, anchor: &AnchorState) -> Result<ParamVecGnss> {
    Ok(ParamVecGnss {
        tau_b: biased_toa_approx(state.p, anchor.p, state.b_u)?,
        f_d: doppler(state.p, state.v, anchor.p, anchor.v, anchor.wavelength())?,
    })
}

struct RangeTerms {
    pbar: Vector3<f64>,
    n: f64,
    /// `∂f_d/∂p`, `∂f_d/∂v`
    dfdp: Vector3<f64>,
    dfdv: Vector3<f64>,
    /// `∂τ_b/∂p`, `∂τ_b/∂v`, `∂τ_b/∂b_u` of `(1 + f_d/f)·b_u + n/c`
    dtdp: Vector3<f64>,
    dtdv: Vector3<f64>,
    dtdb: f64,
}

fn range_terms(state: &PlatformState, anchor: &AnchorState) -> Result<RangeTerms> {
    let lambda = anchor.wavelength();
    let f_d = doppler(state.p, state.v, anchor.p, anchor.v, lambda)?;
    let pbar = state.p - anchor.p;
    let n = pbar.norm();
    let vbar = state.v.to_vector() - anchor.v.to_vector();
    let dfdp = (pbar * vbar.dot(&pbar) - vbar * (n * n)) / (lambda * n.powi(3));
    let dfdv = -pbar / (lambda * n);
    let ratio = state.b_u / anchor.carrier_freq;
    Ok(RangeTerms {
        pbar,
        n,
        dtdp: pbar / (SPEED_OF_LIGHT * n) + dfdp * ratio,
        dtdv: dfdv * ratio,
        dtdb: 1.0 + f_d / anchor.carrier_freq,
        dfdp,
        dfdv,
    })
}

/// Analytic Jacobian of the gNB observation functions.
pub fn transform_g(state: &PlatformState, anchor: &AnchorState) -> Result<TransformG> {
    let r = range_terms(state, anchor)?;
    let (px, py, pz) = (r.pbar.x, r.pbar.y, r.pbar.z);
    let rxy2 = px * px + py * py;
    if rxy2.sqrt() <= VERTICAL_TOL * r.n {
        return Err(Error::VerticalLineOfSight);
    }
    let rxy = rxy2.sqrt();
    let dtheta = Vector3::new(px * pz, py * pz, -rxy2) / (r.n * r.n * rxy);
    let dphi = Vector3::new(-py, px, 0.0) / rxy2;

    let mut t = SMatrix::<f64, 7, 6>::zeros();
    t.fixed_view_mut::<3, 1>(0, 0).copy_from(&dtheta);
    t.fixed_view_mut::<3, 1>(0, 1).copy_from(&dphi);
    t.fixed_view_mut::<3, 1>(0, 2).copy_from(&(-dtheta));
    t.fixed_view_mut::<3, 1>(0, 3).copy_from(&dphi);
    t.fixed_view_mut::<3, 1>(0, 4).copy_from(&r.dtdp);
    t.fixed_view_mut::<3, 1>(3, 4).copy_from(&r.dtdv);
    t[(6, 4)] = r.dtdb;
    t.fixed_view_mut::<3, 1>(0, 5).copy_from(&r.dfdp);
    t.fixed_view_mut::<3, 1>(3, 5).copy_from(&r.dfdv);
    Ok(TransformG(t))
}

/// Analytic Jacobian of the satellite observation functions.
pub fn transform_s(state: &PlatformState, anchor: &AnchorState) -> Result<TransformS> {
    let r = range_terms(state, anchor)?;
    let mut t = SMatrix::<f64, 7, 2>::zeros();
    t.fixed_view_mut::<3, 1>(0, 0).copy_from(&r.dtdp);
    t.fixed_view_mut::<3, 1>(3, 0).copy_from(&r.dtdv);
    t[(6, 0)] = r.dtdb;
    t.fixed_view_mut::<3, 1>(0, 1).copy_from(&r.dfdp);
    t.fixed_view_mut::<3, 1>(3, 1).copy_from(&r.dfdv);
    Ok(TransformS(t))
}

fn project(t: DMatrix<f64>, j: &Fim) -> Result<DMatrix<f64>> {
    if t.ncols() != j.dim() {
        return Err(Error::DimensionMismatch(format!(
            "transform has {} columns, FIM is {}x{}",
            t.ncols(),
            j.dim(),
            j.dim()
        )));
    }
    let out = &t * j.values() * t.transpose();
    Ok((&out + out.transpose()) * 0.5)
}

/// `T_g J_g T_gᵀ`.
pub fn contribution_g(t: &TransformG, j: &Fim) -> Result<Fim> {
    let m = project(DMatrix::from_fn(7, 6, |a, b| t.0[(a, b)]), j)?;
    Fim::new(m, &LABELS_STATE)
}

/// `T_s J_s T_sᵀ`.
pub fn contribution_s(t: &TransformS, j: &Fim) -> Result<Fim> {
    let m = project(DMatrix::from_fn(7, 2, |a, b| t.0[(a, b)]), j)?;
    Fim::new(m, &LABELS_STATE)
}

/// `Σ T_g J_g T_gᵀ + Σ T_s J_s T_sᵀ`. Empty input gives the zero matrix.
pub fn assemble_total_fim(gnb_fims: &[(TransformG, Fim)], sat_fims: &[(TransformS, Fim)]) -> Result<Fim> {
    let mut total = DMatrix::zeros(7, 7);
    for (t, j) in gnb_fims {
        total += contribution_g(t, j)?.values();
    }
    for (t, j) in sat_fims {
        total += contribution_s(t, j)?.values();
    }
    Fim::new(total, &LABELS_STATE)
}

/// Sum of already projected 7×7 contributions, in the given order.
pub fn sum_contributions<'a>(parts: impl IntoIterator<Item = &'a Fim>) -> Result<Fim> {
    let mut total = DMatrix::zeros(7, 7);
    for p in parts {
        if p.dim() != 7 {
            return Err(Error::DimensionMismatch(format!("expected 7x7 contribution, got {}", p.dim())));
        }
        total += p.values();
    }
    Fim::new(total, &LABELS_STATE)
}

/// `J_pv − J_{pv,b} J_{pv,b}ᵀ / J_bb`. When the bias row is entirely zero
/// the position-velocity block is returned unchanged.
pub fn efim_position_velocity(j: &Fim) -> Result<Fim> {
    if j.dim() != 7 {
        return Err(Error::DimensionMismatch(format!("expected 7x7 FIM, got {}", j.dim())));
    }
    let v = j.values();
    let jpv = v.view((0, 0), (6, 6)).into_owned();
    let cross: DVector<f64> = v.view((0, 6), (6, 1)).column(0).into_owned();
    let jbb = v[(6, 6)];
    if jbb == 0.0 && cross.iter().all(|&x| x == 0.0) {
        return Fim::new(jpv, &LABELS_PV);
    }
    let trace = j.trace();
    if !(jbb > 0.0) || jbb < DEGENERATE_BIAS_TOL * trace {
        return Err(Error::DegenerateBias { j_bu: jbb, trace });
    }
    let e = jpv - &cross * cross.transpose() / jbb;
    Fim::new((&e + e.transpose()) * 0.5, &LABELS_PV)
}

/// Per-anchor share of the information, for reporting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorContribution {
    pub anchor: String,
    /// Trace of the anchor's position block, m⁻².
    pub position_information: f64,
    /// Trace of the anchor's velocity block, (m/s)⁻².
    pub velocity_information: f64,
}

impl AnchorContribution {
    pub fn from_fim(anchor: impl Into<String>, j: &Fim) -> Self {
        let v = j.values();
        Self {
            anchor: anchor.into(),
            position_information: (0..3).map(|i| v[(i, i)]).sum(),
            velocity_information: (3..6).map(|i| v[(i, i)]).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Position error bound, m. `None` when position is not identifiable.
    pub peb: Option<f64>,
    /// Velocity error bound, m/s. `None` when velocity is not identifiable.
    pub veb: Option<f64>,
    /// A position bound exists.
    pub feasible: bool,
    /// Numerical rank of the information matrix the report was built from.
    pub rank: usize,
    /// Ratio of extreme retained eigenvalues of the scaled matrix.
    pub condition_number: f64,
    pub contributions: Vec<AnchorContribution>,
}

/// Eigen-analysis of `D^{−1/2} J D^{−1/2}`.
struct ScaledAnalysis {
    rank: usize,
    condition_number: f64,
    /// Generalized inverse in original units.
    inverse: DMatrix<f64>,
    /// Per coordinate: norm of its (scaled) projection on the null space.
    null_component: Vec<f64>,
}

fn analyse(j: &DMatrix<f64>) -> ScaledAnalysis {
    let n = j.nrows();
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let x = j[(i, i)];
            if x > 0.0 {
                1.0 / x.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let s = DMatrix::from_fn(n, n, |a, b| d[a] * j[(a, b)] * d[b]);
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.max();
    let mut rank = 0;
    let mut lmin = f64::INFINITY;
    let mut pinv = DMatrix::zeros(n, n);
    let mut null_sq = vec![0.0; n];
    for (idx, &lam) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(idx);
        if lmax > 0.0 && lam > RANK_TOL * lmax {
            rank += 1;
            lmin = lmin.min(lam);
            pinv += v * v.transpose() / lam;
        } else {
            for i in 0..n {
                null_sq[i] += v[i] * v[i];
            }
        }
    }
    // coordinates with no information at all are unidentifiable outright
    for i in 0..n {
        if d[i] == 0.0 {
            null_sq[i] = 1.0;
        }
    }
    let inverse = DMatrix::from_fn(n, n, |a, b| d[a] * pinv[(a, b)] * d[b]);
    ScaledAnalysis {
        rank,
        condition_number: if rank > 0 { lmax / lmin } else { f64::INFINITY },
        inverse,
        null_component: null_sq.into_iter().map(f64::sqrt).collect(),
    }
}

fn bounds_from(a: &ScaledAnalysis) -> (Option<f64>, Option<f64>) {
    let ok = |r: std::ops::Range<usize>| r.clone().all(|i| a.null_component[i] < IDENTIFIABILITY_TOL);
    let sum = |r: std::ops::Range<usize>| r.map(|i| a.inverse[(i, i)]).sum::<f64>().max(0.0).sqrt();
    let peb = ok(0..3).then(|| sum(0..3));
    let veb = ok(3..6).then(|| sum(3..6));
    (peb, veb)
}

/// PEB `√(c₁+c₂+c₃)` and VEB `√(c₄+c₅+c₆)` from a 6×6 position-velocity FIM.
pub fn peb_veb(efim: &Fim) -> Result<BoundReport> {
    if efim.dim() != 6 {
        return Err(Error::DimensionMismatch(format!("expected 6x6 EFIM, got {}", efim.dim())));
    }
    let a = analyse(efim.values());
    let (peb, veb) = bounds_from(&a);
    Ok(BoundReport {
        peb,
        veb,
        feasible: peb.is_some(),
        rank: a.rank,
        condition_number: a.condition_number,
        contributions: Vec::new(),
    })
}

/// Full chain on the 7×7 state FIM: rank and conditioning of `J_η′`, then
/// bounds from the clock-bias-free EFIM.
pub fn bound_report(j: &Fim) -> Result<BoundReport> {
    if j.dim() != 7 {
        return Err(Error::DimensionMismatch(format!("expected 7x7 FIM, got {}", j.dim())));
    }
    let parent = analyse(j.values());
    let efim = efim_position_velocity(j)?;
    let mut report = peb_veb(&efim)?;
    report.rank = parent.rank;
    report.condition_number = parent.condition_number;
    Ok(report)
}
