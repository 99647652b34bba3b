//! Fisher information of the channel parameters.
//!
//! - 5G: `η_g = [θ_g, φ_g, θ_u, φ_u, τ_b, f_d]`, closed form plus a
//!   finite-difference evaluation of the same sum used as an oracle.
//! - GNSS: `η_s = [τ_b, f_d]`, diagonal, from the effective bandwidth and the
//!   effective observation time of the spreading code.
//!
//! All information is normalized to the noise: the mean is expressed in units
//! of the per-subcarrier noise standard deviation, and carrier-to-noise
//! densities in dB-Hz are the only power inputs.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::quadrature::integrate;
use crate::waveform::{noiseless_mean_full, CMatrix, GnbLink, OfdmConfig};
use crate::{Error, Result};

pub const LABELS_5G: [&str; 6] = ["theta_g", "phi_g", "theta_u", "phi_u", "tau_b", "f_d"];
pub const LABELS_GNSS: [&str; 2] = ["tau_b", "f_d"];
pub const LABELS_STATE: [&str; 7] = ["p_x", "p_y", "p_z", "v_x", "v_y", "v_z", "b_u"];
pub const LABELS_PV: [&str; 6] = ["p_x", "p_y", "p_z", "v_x", "v_y", "v_z"];

/// Condition number of `WᴴW` above which the combiner counts as singular.
pub const MAX_COMBINER_CONDITION: f64 = 1e12;

const J: Complex64 = Complex64::new(0.0, 1.0);

type Mat6 = SMatrix<f64, 6, 6>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVec5G {
    pub theta_g: f64,
    pub phi_g: f64,
    pub theta_u: f64,
    pub phi_u: f64,
    pub tau_b: f64,
    pub f_d: f64,
}

impl ParamVec5G {
    pub fn to_array(self) -> [f64; 6] {
        [self.theta_g, self.phi_g, self.theta_u, self.phi_u, self.tau_b, self.f_d]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            theta_g: a[0],
            phi_g: a[1],
            theta_u: a[2],
            phi_u: a[3],
            tau_b: a[4],
            f_d: a[5],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamVecGnss {
    pub tau_b: f64,
    pub f_d: f64,
}

/// Real symmetric information matrix with parameter labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Fim {
    values: DMatrix<f64>,
    labels: Vec<&'static str>,
}

impl Fim {
    pub fn new(values: DMatrix<f64>, labels: &[&'static str]) -> Result<Self> {
        if !values.is_square() || values.nrows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix with {} labels",
                values.nrows(),
                values.ncols(),
                labels.len()
            )));
        }
        Ok(Self {
            values,
            labels: labels.to_vec(),
        })
    }

    pub fn zeros(labels: &[&'static str]) -> Self {
        let n = labels.len();
        Self {
            values: DMatrix::zeros(n, n),
            labels: labels.to_vec(),
        }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn labels(&self) -> &[&'static str] {
        &self.labels
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[(a, b)]
    }

    pub fn trace(&self) -> f64 {
        self.values.trace()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            values: &self.values * alpha,
            labels: self.labels.clone(),
        }
    }

    /// Largest `|J_ab − J_ba|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.amax();
        if scale == 0.0 {
            return 0.0;
        }
        (&self.values - self.values.transpose()).amax() / scale
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.values + self.values.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    /// Symmetric to `1e−9` relative and eigenvalues `≥ −1e−9·trace`.
    pub fn is_valid(&self) -> bool {
        let tr = self.trace().abs();
        self.asymmetry() <= 1e-9 && self.min_eigenvalue() >= -1e-9 * tr.max(f64::MIN_POSITIVE)
    }
}

/// Transmit power normalization for a gNB link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Power5GConfig {
    /// `P_g / N_0`, dB-Hz.
    pub pn0_dbhz: f64,
    pub n_g: usize,
    pub n_u: usize,
}

impl Power5GConfig {
    pub fn new(pn0_dbhz: f64, n_g: usize, n_u: usize) -> Self {
        Self { pn0_dbhz, n_g, n_u }
    }

    /// `P_g / N_0` in Hz (linear).
    pub fn p_over_n0(&self) -> f64 {
        10f64.powf(self.pn0_dbhz / 10.0)
    }

    /// `γ₀ = P N_g N_u / N_0` per subcarrier sample: the power is spread over
    /// `K` subcarriers and each sample sees noise `N_0 Δf`.
    pub fn gamma0(&self, ofdm: &OfdmConfig) -> f64 {
        let bw = ofdm.num_subcarriers as f64 * ofdm.delta_f;
        self.p_over_n0() * (self.n_g * self.n_u) as f64 / bw
    }
}

/// `(WᴴW)⁻¹` for every residue of the beam schedule.
fn combiner_inverses(link: &GnbLink) -> Result<Vec<CMatrix>> {
    let nb = link.beams.num_beams();
    (0..nb)
        .map(|r| {
            let w = link.beams.combiner(r);
            combiner_inverse(&w)
        })
        .collect()
}

fn combiner_inverse(w: &CMatrix) -> Result<CMatrix> {
    let gram = w.adjoint() * w;
    let eig = SymmetricEigen::new(gram.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= MAX_COMBINER_CONDITION) {
        return Err(Error::SingularCombiner { condition });
    }
    gram.try_inverse().ok_or(Error::SingularCombiner { condition })
}

fn tree_sum(parts: &[Mat6]) -> Mat6 {
    match parts.len() {
        0 => Mat6::zeros(),
        1 => parts[0],
        n => tree_sum(&parts[..n / 2]) + tree_sum(&parts[n / 2..]),
    }
}

fn to_fim(m: Mat6) -> Fim {
    let values = DMatrix::from_fn(6, 6, |a, b| m[(a, b)]);
    Fim::new(values, &LABELS_5G).expect("6x6 with 6 labels")
}

/// Closed-form 6×6 information of `η_g`.
///
/// The mean factorizes as `μ = κ·(Wᴴa_u)·(a_gᴴ F z)`, so every derivative has
/// the form `c·(y_aᴴ F w_a)·(Wᴴ x_a)` and
/// `J_ab = γ₀ Σ_{k,m} Re{conj(c_a y_aᴴFw_a)·c_b y_bᴴFw_b·(x_aᴴ W̆ x_b)}` with
/// `W̆ = W(WᴴW)⁻¹Wᴴ`. The Doppler derivative carries `w_f = j2πT₀m·z + ż`
/// and the delay derivative the factor `α_f k = −j2πΔf k`.
pub fn fim_5g_closed(link: &GnbLink, eta: &ParamVec5G) -> Result<Fim> {
    link.validate()?;
    let ofdm = &link.ofdm;
    let ns = ofdm.num_streams;
    let nb = link.beams.num_beams();
    let kk = ofdm.num_subcarriers;
    let lc = ofdm.carrier_wavelength();
    let inverses = combiner_inverses(link)?;
    let ici = ofdm.ici(eta.f_d);
    let stencil = ici.stencil();
    let norm = 1.0 / (ns as f64).sqrt();
    let alpha_f = -J * 2.0 * PI * ofdm.delta_f;
    let t0 = ofdm.t0();
    let half = (kk / 2) as i64;

    let per_k: Vec<Mat6> = ofdm
        .subcarrier_indices()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let lk = ofdm.wavelength(k);
            let rg = link.tx_array.response_with_derivatives(eta.theta_g, eta.phi_g, lk, lc);
            let ru = link.rx_array.response_with_derivatives(eta.theta_u, eta.phi_u, lk, lc);
            // g[b] = [a_gᴴ f_b, ȧ_θᴴ f_b, ȧ_φᴴ f_b], u[b] = [w_bᴴ a_u, w_bᴴ ȧ_θ, w_bᴴ ȧ_φ]
            let g: Vec<[Complex64; 3]> = link
                .beams
                .tx_beams()
                .iter()
                .map(|f| [rg.a.dotc(f), rg.d_theta.dotc(f), rg.d_phi.dotc(f)])
                .collect();
            let u: Vec<[Complex64; 3]> = link
                .beams
                .rx_beams()
                .iter()
                .map(|w| [w.dotc(&ru.a), w.dotc(&ru.d_theta), w.dotc(&ru.d_phi)])
                .collect();
            let pos = (k + half) as usize;
            let mut acc = Mat6::zeros();
            let mut z = vec![Complex64::new(0.0, 0.0); ns];
            let mut zd = vec![Complex64::new(0.0, 0.0); ns];
            let mut d = vec![Complex64::new(0.0, 0.0); 6 * ns];
            for m in 1..=ofdm.num_symbols {
                let x = link.pilots.symbol(m);
                z.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                zd.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                for &(off, cd) in &stencil {
                    let col = (pos + off) % kk;
                    let c = if off == 0 { cd * eta.f_d + 1.0 } else { cd * eta.f_d };
                    for i in 0..ns {
                        z[i] += x[(i, col)] * c;
                        zd[i] += x[(i, col)] * cd;
                    }
                }
                let idx = link.beams.beam_indices(m);
                let ramp = J * (2.0 * PI * t0 * m as f64);
                // s[y] = y_yᴴ F z and s_f = a_gᴴ F w_f
                let mut s = [Complex64::new(0.0, 0.0); 3];
                let mut s_f = Complex64::new(0.0, 0.0);
                for (i, &b) in idx.iter().enumerate() {
                    for y in 0..3 {
                        s[y] += g[b][y] * z[i] * norm;
                    }
                    s_f += g[b][0] * (ramp * z[i] + zd[i]) * norm;
                }
                for (i, &b) in idx.iter().enumerate() {
                    let ua = u[b][0] * norm;
                    d[i] = s[1] * ua;
                    d[ns + i] = s[2] * ua;
                    d[2 * ns + i] = s[0] * u[b][1] * norm;
                    d[3 * ns + i] = s[0] * u[b][2] * norm;
                    d[4 * ns + i] = alpha_f * k as f64 * s[0] * ua;
                    d[5 * ns + i] = s_f * ua;
                }
                let inv = &inverses[m % nb];
                for a in 0..6 {
                    for b in a..6 {
                        let mut q = Complex64::new(0.0, 0.0);
                        for i in 0..ns {
                            let da = d[a * ns + i].conj();
                            for j in 0..ns {
                                q += da * inv[(i, j)] * d[b * ns + j];
                            }
                        }
                        acc[(a, b)] += q.re;
                    }
                }
            }
            for a in 0..6 {
                for b in 0..a {
                    acc[(a, b)] = acc[(b, a)];
                }
            }
            acc
        })
        .collect();

    let gamma0 = link.power.gamma0(ofdm);
    Ok(to_fim(tree_sum(&per_k) * gamma0))
}

fn angle_step() -> f64 {
    1e-6
}

/// Parameter steps used by [`fim_5g_numeric`].
pub fn numeric_steps(ofdm: &OfdmConfig) -> [f64; 6] {
    let bw = ofdm.num_subcarriers as f64 * ofdm.delta_f;
    let a = angle_step();
    [a, a, a, a, 1e-4 / bw, 1e-3]
}

fn mean_grid(link: &GnbLink, eta: &ParamVec5G) -> Result<Vec<nalgebra::DVector<Complex64>>> {
    let ofdm = &link.ofdm;
    let mut out = Vec::with_capacity(ofdm.num_subcarriers * ofdm.num_symbols);
    for k in ofdm.subcarrier_indices() {
        for m in 1..=ofdm.num_symbols {
            out.push(noiseless_mean_full(link, eta, k, m)?);
        }
    }
    Ok(out)
}

fn central_difference(link: &GnbLink, eta: &ParamVec5G, a: usize, h: f64) -> Result<Vec<nalgebra::DVector<Complex64>>> {
    let mut plus = eta.to_array();
    let mut minus = eta.to_array();
    plus[a] += h;
    minus[a] -= h;
    let p = mean_grid(link, &ParamVec5G::from_array(plus))?;
    let q = mean_grid(link, &ParamVec5G::from_array(minus))?;
    let s = Complex64::new(0.5 / h, 0.0);
    Ok(p.iter().zip(&q).map(|(p, q)| (p - q) * s).collect())
}

fn grid_norm(v: &[nalgebra::DVector<Complex64>]) -> f64 {
    v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt()
}

/// `∂μ/∂η_a` over the whole grid by central differences, with one Richardson
/// step when the `h` and `h/2` estimates disagree by more than `1e−4`.
fn numeric_derivative(link: &GnbLink, eta: &ParamVec5G, a: usize, h: f64) -> Result<Vec<nalgebra::DVector<Complex64>>> {
    let d1 = central_difference(link, eta, a, h)?;
    let d2 = central_difference(link, eta, a, h / 2.0)?;
    let diff: Vec<_> = d1.iter().zip(&d2).map(|(x, y)| x - y).collect();
    let scale = grid_norm(&d2);
    if scale == 0.0 || grid_norm(&diff) <= 1e-4 * scale {
        return Ok(d2);
    }
    let third = Complex64::new(1.0 / 3.0, 0.0);
    Ok(d1
        .iter()
        .zip(&d2)
        .map(|(x, y)| (y * Complex64::new(4.0, 0.0) - x) * third)
        .collect())
}

/// Information of `η_g` from finite differences of the materialized mean
/// `κ Wᴴ H F z`, weighted by `(WᴴW)⁻¹`. Independent of [`fim_5g_closed`].
pub fn fim_5g_numeric(link: &GnbLink, eta: &ParamVec5G) -> Result<Fim> {
    link.validate()?;
    let ofdm = &link.ofdm;
    let steps = numeric_steps(ofdm);
    let derivs = (0..6)
        .map(|a| numeric_derivative(link, eta, a, steps[a]))
        .collect::<Result<Vec<_>>>()?;
    let inverses = (1..=ofdm.num_symbols)
        .map(|m| combiner_inverse(&link.beams.combiner(m)))
        .collect::<Result<Vec<_>>>()?;
    let mut j = Mat6::zeros();
    let mut idx = 0;
    for _k in ofdm.subcarrier_indices() {
        for m in 1..=ofdm.num_symbols {
            let inv = &inverses[m - 1];
            for a in 0..6 {
                for b in 0..6 {
                    let q = derivs[a][idx].adjoint() * inv * &derivs[b][idx];
                    j[(a, b)] += q[(0, 0)].re;
                }
            }
            idx += 1;
        }
    }
    Ok(to_fim(j))
}

/// Chip pulse shape of the spreading code.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape {
    Rectangular,
    /// Samples of `r(t)` at evenly spaced instants spanning one chip, endpoints
    /// included; linearly interpolated and zero outside the chip.
    Sampled(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnssSignalConfig {
    /// `P_s / N_0`, dB-Hz.
    pub cn0_dbhz: f64,
    /// Observation time `T_so`, s.
    pub t_so: f64,
    /// Receiver bandwidth `W`, Hz.
    pub bandwidth: f64,
    /// Chip duration `T_c`, s.
    pub t_c: f64,
    /// Chips per observation `N_so`.
    pub n_so: u64,
    pub pulse: PulseShape,
}

/// Relative tolerance of the GNSS quadratures.
pub const QUADRATURE_TOL: f64 = 1e-8;

impl GnssSignalConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::validation(field, reason));
        if !self.cn0_dbhz.is_finite() {
            return bad("cn0_dbhz", format!("must be finite, got {}", self.cn0_dbhz));
        }
        for (name, v) in [
            ("observation_time_s", self.t_so),
            ("bandwidth_hz", self.bandwidth),
            ("chip_duration_s", self.t_c),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be positive and finite, got {v}"));
            }
        }
        if self.n_so == 0 {
            return bad("chips_per_observation", "must be >= 1".into());
        }
        let implied = self.n_so as f64 * self.t_c;
        if ((implied - self.t_so) / self.t_so).abs() > 1e-6 {
            return bad(
                "observation_time_s",
                format!("T_so = {} differs from N_so·T_c = {}", self.t_so, implied),
            );
        }
        if let PulseShape::Sampled(s) = &self.pulse {
            if s.len() < 2 || s.iter().any(|x| !x.is_finite()) || s.iter().all(|&x| x == 0.0) {
                return bad("pulse_samples", "need at least two finite samples, not all zero".into());
            }
        }
        Ok(())
    }

    pub fn cn0_linear(&self) -> f64 {
        10f64.powf(self.cn0_dbhz / 10.0)
    }

    fn pulse_samples(&self) -> Vec<f64> {
        match &self.pulse {
            PulseShape::Rectangular => vec![1.0, 1.0],
            PulseShape::Sampled(s) => s.clone(),
        }
    }
}

/// Piecewise-linear chip pulse on `[0, T_c]`, scaled to unit mean power.
struct LinearPulse {
    r: Vec<f64>,
    h: f64,
}

impl LinearPulse {
    fn new(samples: &[f64], t_c: f64) -> Self {
        let h = t_c / (samples.len() - 1) as f64;
        let energy: f64 = samples
            .windows(2)
            .map(|w| h * (w[0] * w[0] + w[0] * w[1] + w[1] * w[1]) / 3.0)
            .sum();
        let scale = (t_c / energy).sqrt();
        Self {
            r: samples.iter().map(|x| x * scale).collect(),
            h,
        }
    }

    fn t_c(&self) -> f64 {
        self.h * (self.r.len() - 1) as f64
    }

    /// `∫₀¹ e^{−jxs} ds` and `∫₀¹ s e^{−jxs} ds`.
    fn moments(x: f64) -> (Complex64, Complex64) {
        if x.abs() < 0.1 {
            // power series: Σ (−jx)ⁿ/(n+1)!, Σ (−jx)ⁿ/(n!(n+2))
            let mut e0 = Complex64::new(0.0, 0.0);
            let mut e1 = Complex64::new(0.0, 0.0);
            let mut p = Complex64::new(1.0, 0.0);
            let mut fact = 1.0;
            for n in 0..10 {
                e0 += p / (fact * (n + 1) as f64);
                e1 += p / (fact * (n + 2) as f64);
                p *= -J * x;
                fact *= (n + 1) as f64;
            }
            return (e0, e1);
        }
        let jx = J * x;
        let ex = (-jx).exp();
        let e0 = (1.0 - ex) / jx;
        (e0, (e0 - ex) / jx)
    }

    /// Fourier transform `R(f) = ∫ r(t) e^{−j2πft} dt`.
    fn spectrum(&self, f: f64) -> Complex64 {
        let w = 2.0 * PI * f;
        let (e0, e1) = Self::moments(w * self.h);
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, seg) in self.r.windows(2).enumerate() {
            let t0 = i as f64 * self.h;
            let b = e1;
            let a = e0 - e1;
            acc += Complex64::from_polar(1.0, -w * t0) * (a * seg[0] + b * seg[1]);
        }
        acc * self.h
    }

    /// Integrates `g(t)·|r(t)|²` chip segment by segment.
    fn integrate_weighted(&self, g: impl Fn(f64) -> f64) -> Result<f64> {
        let mut total = 0.0;
        for (i, seg) in self.r.windows(2).enumerate() {
            let t0 = i as f64 * self.h;
            let (r0, r1, h) = (seg[0], seg[1], self.h);
            let r = |t: f64| r0 + (r1 - r0) * (t - t0) / h;
            total += integrate(|t| g(t) * r(t).powi(2), t0, t0 + h, QUADRATURE_TOL)?;
        }
        Ok(total)
    }
}

/// `W_eff² = (1/T_c)∫_{−W/2}^{W/2} f²|R(f)|² df` by quadrature, for any pulse.
pub fn effective_bandwidth_sq_quadrature(cfg: &GnssSignalConfig) -> Result<f64> {
    cfg.validate()?;
    let pulse = LinearPulse::new(&cfg.pulse_samples(), cfg.t_c);
    let half = cfg.bandwidth / 2.0;
    let t_c = pulse.t_c();
    integrate(|f| f * f * pulse.spectrum(f).norm_sqr() / t_c, -half, half, QUADRATURE_TOL)
}

/// Effective bandwidth squared, Hz². Closed form `W²/(2π²)` for the
/// rectangular pulse, quadrature otherwise.
pub fn effective_bandwidth_sq(cfg: &GnssSignalConfig) -> Result<f64> {
    match cfg.pulse {
        PulseShape::Rectangular => {
            cfg.validate()?;
            Ok(cfg.bandwidth * cfg.bandwidth / (2.0 * PI * PI))
        }
        PulseShape::Sampled(_) => effective_bandwidth_sq_quadrature(cfg),
    }
}

/// `(1/N)Σ_{ℓ=0}^{N−1} (a + ℓT)²` in closed form.
fn mean_square_offset(a: f64, t: f64, n: u64) -> f64 {
    let n = n as f64;
    a * a + a * t * (n - 1.0) + t * t * (n - 1.0) * (2.0 * n - 1.0) / 6.0
}

/// `T_eff² = (1/T_c)∫₀^{T_c} t̄²(t)|r(t)|² dt` by quadrature, with the time
/// origin at the centre of the observation window.
pub fn effective_time_sq_quadrature(cfg: &GnssSignalConfig) -> Result<f64> {
    cfg.validate()?;
    let pulse = LinearPulse::new(&cfg.pulse_samples(), cfg.t_c);
    let t_c = pulse.t_c();
    let half = cfg.t_so / 2.0;
    let v = pulse.integrate_weighted(|t| mean_square_offset(t - half, t_c, cfg.n_so))?;
    Ok(v / t_c)
}

/// Effective observation time squared, s². Closed form `T_so²/12` for the
/// rectangular pulse.
pub fn effective_time_sq(cfg: &GnssSignalConfig) -> Result<f64> {
    match cfg.pulse {
        PulseShape::Rectangular => {
            cfg.validate()?;
            Ok(cfg.t_so * cfg.t_so / 12.0)
        }
        PulseShape::Sampled(_) => effective_time_sq_quadrature(cfg),
    }
}

/// `J_s = 4π²(P_s/N_0)T_so·diag(W_eff², T_eff²)`.
pub fn fim_gnss(cfg: &GnssSignalConfig) -> Result<Fim> {
    let w2 = effective_bandwidth_sq(cfg)?;
    let t2 = effective_time_sq(cfg)?;
    let g = 4.0 * PI * PI * cfg.cn0_linear() * cfg.t_so;
    let values = DMatrix::from_row_slice(2, 2, &[g * w2, 0.0, 0.0, g * t2]);
    Fim::new(values, &LABELS_GNSS)
}
