//! OFDM pilots, beam codebooks, the Doppler inter-carrier-interference
//! operator and the noiseless received mean `μ_{k,m}`.
//!
//! Subcarriers are indexed `k = −K/2 … K/2−1`; symbols `m = 1 … M`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::array::{AntennaArray, CVector};
use crate::fim::{ParamVec5G, Power5GConfig};
use crate::geometry::wrap_angle;
use crate::{Error, Result, SPEED_OF_LIGHT};

pub type CMatrix = DMatrix<Complex64>;

const J: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmConfig {
    /// Number of subcarriers `K` (even).
    pub num_subcarriers: usize,
    /// Number of OFDM symbols `M`.
    pub num_symbols: usize,
    /// Subcarrier spacing, Hz.
    pub delta_f: f64,
    /// Carrier frequency, Hz.
    pub f_c: f64,
    /// Useful symbol duration, s.
    pub t_s: f64,
    /// Cyclic prefix duration, s.
    pub t_cp: f64,
    /// Beams in the sweep `N_b`.
    pub num_beams: usize,
    /// Streams per symbol `N_s`.
    pub num_streams: usize,
    /// ICI is kept for subcarriers within this circular distance.
    pub ici_halfwidth: usize,
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: String| Err(Error::validation(field, reason));
        if self.num_subcarriers == 0 || !self.num_subcarriers.is_multiple_of(2) {
            return bad("num_subcarriers", format!("must be even and >= 2, got {}", self.num_subcarriers));
        }
        if self.num_symbols == 0 {
            return bad("num_symbols", "must be >= 1".into());
        }
        for (name, v) in [
            ("subcarrier_spacing_hz", self.delta_f),
            ("carrier_freq_hz", self.f_c),
            ("symbol_duration_s", self.t_s),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("must be positive and finite, got {v}"));
            }
        }
        if !(self.t_cp >= 0.0 && self.t_cp.is_finite()) {
            return bad("cyclic_prefix_s", format!("must be >= 0, got {}", self.t_cp));
        }
        if self.num_streams == 0 || self.num_streams > self.num_beams {
            return bad(
                "num_streams",
                format!("need 1 <= N_s <= N_b, got N_s = {}, N_b = {}", self.num_streams, self.num_beams),
            );
        }
        let half = (self.num_subcarriers / 2) as f64;
        if self.f_c - half * self.delta_f <= 0.0 {
            return bad("carrier_freq_hz", "lowest subcarrier frequency must be positive".into());
        }
        Ok(())
    }

    /// Symbol duration including the cyclic prefix.
    pub fn t0(&self) -> f64 {
        self.t_s + self.t_cp
    }

    pub fn subcarrier_indices(&self) -> std::ops::Range<i64> {
        let h = (self.num_subcarriers / 2) as i64;
        -h..h
    }

    /// Position `k + K/2` of subcarrier `k` in a length-K vector.
    pub fn position(&self, k: i64) -> Result<usize> {
        let r = self.subcarrier_indices();
        if !r.contains(&k) {
            return Err(Error::IndexOutOfRange {
                index: k,
                min: r.start,
                max: r.end - 1,
            });
        }
        Ok((k - r.start) as usize)
    }

    /// `λ_k = c / (f_c + kΔf)`.
    pub fn wavelength(&self, k: i64) -> f64 {
        SPEED_OF_LIGHT / (self.f_c + k as f64 * self.delta_f)
    }

    pub fn carrier_wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    pub fn ici(&self, f_d: f64) -> IciOperator {
        IciOperator {
            f_d,
            t_s: self.t_s,
            num_subcarriers: self.num_subcarriers,
            halfwidth: self.ici_halfwidth,
        }
    }
}

/// Unit-norm pilot vectors `x_{k,m}`, one `N_s × K` matrix per symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotSet {
    seed: u64,
    symbols: Vec<CMatrix>,
}

impl PilotSet {
    /// Complex standard-normal draws with every column scaled to unit norm.
    /// Symbol `m` uses stream `m` of a ChaCha8 generator seeded with `seed`.
    pub fn generate(cfg: &OfdmConfig, seed: u64) -> Self {
        let (ns, k) = (cfg.num_streams, cfg.num_subcarriers);
        let symbols = (1..=cfg.num_symbols)
            .map(|m| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(m as u64);
                let mut x = CMatrix::from_fn(ns, k, |_, _| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    Complex64::new(re, im)
                });
                for mut col in x.column_iter_mut() {
                    let n = col.norm();
                    col /= Complex64::new(n, 0.0);
                }
                x
            })
            .collect();
        Self { seed, symbols }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_symbols(&self) -> usize {
        self.symbols.len()
    }

    /// `X_m` for `m = 1 … M`.
    pub fn symbol(&self, m: usize) -> &CMatrix {
        &self.symbols[m - 1]
    }

    #[cfg(test)]
    pub(crate) fn with_column_zeroed(&self, col: usize) -> Self {
        let mut out = self.clone();
        for x in out.symbols.iter_mut() {
            x.column_mut(col).fill(Complex64::new(0.0, 0.0));
        }
        out
    }

    /// Applies a common phase to every pilot.
    pub fn rotated(&self, phase: f64) -> Self {
        let r = Complex64::from_polar(1.0, phase);
        Self {
            seed: self.seed,
            symbols: self.symbols.iter().map(|x| x * r).collect(),
        }
    }
}

/// Azimuth sector swept by the codebook. Angles in radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub center_azimuth: f64,
    pub span: f64,
    /// Polar angle shared by all beams.
    pub polar: f64,
}

impl Sector {
    pub fn validate(&self) -> Result<()> {
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err(Error::InvalidSector(format!("span must be positive, got {}", self.span)));
        }
        if !self.center_azimuth.is_finite() || !(0.0..=PI).contains(&self.polar) {
            return Err(Error::InvalidSector(format!(
                "center azimuth {} / polar {} out of range",
                self.center_azimuth, self.polar
            )));
        }
        Ok(())
    }

    /// Azimuth of beam `b` of `n`; beams are evenly spaced edge to edge.
    pub fn beam_azimuth(&self, b: usize, n: usize) -> f64 {
        if n <= 1 {
            return self.center_azimuth;
        }
        self.center_azimuth + self.span * (b as f64 / (n - 1) as f64 - 0.5)
    }
}

/// Analog beam sets at both ends plus the per-symbol beam schedule.
#[derive(Debug, Clone)]
pub struct BeamformingConfig {
    tx_beams: Vec<CVector>,
    rx_beams: Vec<CVector>,
    num_streams: usize,
    sector: Sector,
}

impl BeamformingConfig {
    /// Beams used by stream `i` of symbol `m`: `(m·N_s + i) mod N_b`.
    pub fn beam_indices(&self, m: usize) -> Vec<usize> {
        let nb = self.tx_beams.len();
        (0..self.num_streams).map(|i| (m * self.num_streams + i) % nb).collect()
    }

    fn stack(beams: &[CVector], idx: &[usize]) -> CMatrix {
        let scale = Complex64::new(1.0 / (idx.len() as f64).sqrt(), 0.0);
        let cols: Vec<CVector> = idx.iter().map(|&b| &beams[b] * scale).collect();
        CMatrix::from_columns(&cols)
    }

    /// Transmit matrix `F_m` (`N_g × N_s`, Frobenius norm 1). Frequency flat.
    pub fn precoder(&self, m: usize) -> CMatrix {
        Self::stack(&self.tx_beams, &self.beam_indices(m))
    }

    /// Receive matrix `W_m` (`N_u × N_s`, Frobenius norm 1). Frequency flat.
    pub fn combiner(&self, m: usize) -> CMatrix {
        Self::stack(&self.rx_beams, &self.beam_indices(m))
    }

    pub fn tx_beams(&self) -> &[CVector] {
        &self.tx_beams
    }

    pub fn rx_beams(&self) -> &[CVector] {
        &self.rx_beams
    }

    pub fn num_streams(&self) -> usize {
        self.num_streams
    }

    pub fn num_beams(&self) -> usize {
        self.tx_beams.len()
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }
}

/// Steering-vector beams at `N_b` azimuths across `sector`.
///
/// Receive beams point along the reverse ray in the vehicle frame, i.e.
/// polar `π − θ_b` and azimuth `φ_b − φ₀ − π`.
pub fn build_codebook(
    cfg: &OfdmConfig,
    array_tx: &AntennaArray,
    array_rx: &AntennaArray,
    sector: Sector,
    phi0: f64,
) -> Result<BeamformingConfig> {
    sector.validate()?;
    if cfg.num_beams == 0 {
        return Err(Error::InvalidSector("codebook needs at least one beam".into()));
    }
    if cfg.num_streams == 0 || cfg.num_streams > cfg.num_beams {
        return Err(Error::validation("num_streams", "need 1 <= N_s <= N_b"));
    }
    let lc = cfg.carrier_wavelength();
    let az: Vec<f64> = (0..cfg.num_beams).map(|b| sector.beam_azimuth(b, cfg.num_beams)).collect();
    let tx_beams = az.iter().map(|&a| array_tx.response(sector.polar, a, lc, lc)).collect();
    let rx_beams = az
        .iter()
        .map(|&a| array_rx.response(PI - sector.polar, wrap_angle(a - phi0 - PI), lc, lc))
        .collect();
    Ok(BeamformingConfig {
        tx_beams,
        rx_beams,
        num_streams: cfg.num_streams,
        sector,
    })
}

/// Column `n` (mod K) of the circulant `DᴴQD` with unitary DFT `D` and
/// `Q = diag((q − K/2)/K)`, `q = 0 … K−1`.
pub fn ici_circulant_entry(n: usize, num_subcarriers: usize) -> Complex64 {
    let k = num_subcarriers as f64;
    let n = n % num_subcarriers;
    if n == 0 {
        return Complex64::new(-0.5 / k, 0.0);
    }
    let w = Complex64::from_polar(1.0, 2.0 * PI * n as f64 / k);
    1.0 / (k * (w - 1.0))
}

/// Sparse column of the ICI matrix, as `(subcarrier index, value)` pairs.
pub type SparseColumn = Vec<(i64, Complex64)>;

/// `C = I + j2π f_d T_s · DᴴQD`, truncated to a band around the diagonal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IciOperator {
    pub f_d: f64,
    pub t_s: f64,
    pub num_subcarriers: usize,
    pub halfwidth: usize,
}

impl IciOperator {
    /// Circular row offsets `k' − k (mod K)` kept by the truncation.
    fn offsets(&self) -> Vec<usize> {
        let kk = self.num_subcarriers;
        if 2 * self.halfwidth + 1 >= kk {
            return (0..kk).collect();
        }
        let h = self.halfwidth as i64;
        (-h..=h).map(|d| d.rem_euclid(kk as i64) as usize).collect()
    }

    /// `(offset, ċ)` pairs: `ċ` value at row `k + offset (mod K)` of every
    /// column. The stencil is the same for every subcarrier.
    pub fn stencil(&self) -> Vec<(usize, Complex64)> {
        let kk = self.num_subcarriers;
        self.offsets()
            .into_iter()
            .map(|n| (n, J * (2.0 * PI * self.t_s) * ici_circulant_entry(n, kk)))
            .collect()
    }

    fn check(&self, k: i64) -> Result<i64> {
        let h = (self.num_subcarriers / 2) as i64;
        if k < -h || k >= h {
            return Err(Error::IndexOutOfRange {
                index: k,
                min: -h,
                max: h - 1,
            });
        }
        Ok(h)
    }

    fn row_index(k: i64, offset: usize, kk: usize) -> i64 {
        let h = (kk / 2) as i64;
        ((k + h + offset as i64).rem_euclid(kk as i64)) - h
    }

    /// `ċ_k`: the column of `j2π T_s DᴴQD` for subcarrier `k`.
    pub fn column_derivative(&self, k: i64) -> Result<SparseColumn> {
        self.check(k)?;
        let kk = self.num_subcarriers;
        Ok(self
            .stencil()
            .into_iter()
            .map(|(n, v)| (Self::row_index(k, n, kk), v))
            .collect())
    }

    /// `c_k = e_k + f_d·ċ_k`.
    pub fn column(&self, k: i64) -> Result<SparseColumn> {
        let mut col = self.column_derivative(k)?;
        for (row, v) in col.iter_mut() {
            *v *= self.f_d;
            if *row == k {
                *v += 1.0;
            }
        }
        Ok(col)
    }

    /// `(z_k, ż_k)` for one symbol: `z_k = Σ_{k'} x_{k'}·C[k', k]` and the same
    /// with `ċ_k`.
    pub fn apply_at(&self, x: &CMatrix, k: i64) -> Result<(CVector, CVector)> {
        let h = self.check(k)?;
        if x.ncols() != self.num_subcarriers {
            return Err(Error::DimensionMismatch(format!(
                "pilot symbol has {} columns, expected K = {}",
                x.ncols(),
                self.num_subcarriers
            )));
        }
        let mut z = CVector::zeros(x.nrows());
        let mut zd = CVector::zeros(x.nrows());
        for (row, v) in self.column_derivative(k)? {
            let col = x.column((row + h) as usize);
            zd += col * v;
            if row == k {
                z += col;
            }
            z += col * (v * self.f_d);
        }
        Ok((z, zd))
    }
}

/// Everything needed to evaluate the mean and the Fisher information of one
/// gNB → vehicle link.
#[derive(Debug, Clone)]
pub struct GnbLink {
    pub ofdm: OfdmConfig,
    pub tx_array: AntennaArray,
    pub rx_array: AntennaArray,
    pub beams: BeamformingConfig,
    pub pilots: PilotSet,
    pub power: Power5GConfig,
}

impl GnbLink {
    pub fn validate(&self) -> Result<()> {
        self.ofdm.validate()?;
        let mismatch = |what: String| Err(Error::DimensionMismatch(what));
        if self.power.n_g != self.tx_array.element_count() || self.power.n_u != self.rx_array.element_count() {
            return mismatch(format!(
                "power config expects N_g = {}, N_u = {}; arrays have {} and {}",
                self.power.n_g,
                self.power.n_u,
                self.tx_array.element_count(),
                self.rx_array.element_count()
            ));
        }
        if self.beams.tx_beams.iter().any(|b| b.len() != self.tx_array.element_count())
            || self.beams.rx_beams.iter().any(|b| b.len() != self.rx_array.element_count())
        {
            return mismatch("beam length does not match array size".into());
        }
        if self.beams.num_streams != self.ofdm.num_streams {
            return mismatch("codebook stream count differs from OFDM config".into());
        }
        if self.pilots.num_symbols() != self.ofdm.num_symbols {
            return mismatch(format!(
                "{} pilot symbols for M = {}",
                self.pilots.num_symbols(),
                self.ofdm.num_symbols
            ));
        }
        let x = self.pilots.symbol(1);
        if x.nrows() != self.ofdm.num_streams || x.ncols() != self.ofdm.num_subcarriers {
            return mismatch(format!("pilot symbol is {}x{}", x.nrows(), x.ncols()));
        }
        Ok(())
    }

    /// Amplitude `√(P N_g N_u)` with `P` expressed per subcarrier sample
    /// relative to the noise, so the noise variance is one.
    pub fn amplitude(&self) -> f64 {
        self.power.gamma0(&self.ofdm).sqrt()
    }

    /// `κ_{k,m} = √(P N_g N_u)·e^{−j2πkΔfτ_b}·e^{j2πf_d T_0 m}`.
    pub fn kappa(&self, eta: &ParamVec5G, k: i64, m: usize) -> Complex64 {
        let phase = -2.0 * PI * k as f64 * self.ofdm.delta_f * eta.tau_b
            + 2.0 * PI * eta.f_d * self.ofdm.t0() * m as f64;
        Complex64::from_polar(self.amplitude(), phase)
    }
}

/// Noiseless received vector `μ_{k,m} = κ (Wᴴa_u)(a_gᴴ F z)`.
pub fn noiseless_mean(link: &GnbLink, eta: &ParamVec5G, k: i64, m: usize) -> Result<CVector> {
    link.validate()?;
    check_symbol(link, m)?;
    let (lk, lc) = (link.ofdm.wavelength(k), link.ofdm.carrier_wavelength());
    let a_g = link.tx_array.response(eta.theta_g, eta.phi_g, lk, lc);
    let a_u = link.rx_array.response(eta.theta_u, eta.phi_u, lk, lc);
    let (z, _) = link.ofdm.ici(eta.f_d).apply_at(link.pilots.symbol(m), k)?;
    let f = link.beams.precoder(m);
    let w = link.beams.combiner(m);
    let s = (a_g.adjoint() * f * z)[(0, 0)];
    Ok(w.adjoint() * a_u * (link.kappa(eta, k, m) * s))
}

/// Same quantity as [`noiseless_mean`], evaluated as `κ Wᴴ (a_u a_gᴴ) F z`
/// with the channel matrix materialized.
pub fn noiseless_mean_full(link: &GnbLink, eta: &ParamVec5G, k: i64, m: usize) -> Result<CVector> {
    link.validate()?;
    check_symbol(link, m)?;
    let (lk, lc) = (link.ofdm.wavelength(k), link.ofdm.carrier_wavelength());
    let a_g = link.tx_array.response(eta.theta_g, eta.phi_g, lk, lc);
    let a_u = link.rx_array.response(eta.theta_u, eta.phi_u, lk, lc);
    let h = &a_u * a_g.adjoint() * link.kappa(eta, k, m);
    let x = link.pilots.symbol(m);
    let h_k = link.ofdm.subcarrier_indices().start;
    let mut z = CVector::zeros(x.nrows());
    for (row, c) in link.ofdm.ici(eta.f_d).column(k)? {
        z += x.column((row - h_k) as usize) * c;
    }
    Ok(link.beams.combiner(m).adjoint() * h * link.beams.precoder(m) * z)
}

fn check_symbol(link: &GnbLink, m: usize) -> Result<()> {
    if m == 0 || m > link.ofdm.num_symbols {
        return Err(Error::IndexOutOfRange {
            index: m as i64,
            min: 1,
            max: link.ofdm.num_symbols as i64,
        });
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::array::Boresight;
    use approx::assert_relative_eq;

    pub(crate) fn small_cfg(k: usize, m: usize, ns: usize) -> OfdmConfig {
        OfdmConfig {
            num_subcarriers: k,
            num_symbols: m,
            delta_f: 125e6 / 1024.0,
            f_c: 38e9,
            t_s: 1024.0 / 125e6,
            t_cp: 8e-9,
            num_beams: 4,
            num_streams: ns,
            ici_halfwidth: 1,
        }
    }

    pub(crate) fn small_link(k: usize, m: usize, ns: usize, seed: u64) -> GnbLink {
        let ofdm = small_cfg(k, m, ns);
        let tx = AntennaArray::ura(2, 2, Boresight::PlusX).unwrap();
        let rx = AntennaArray::ura(2, 2, Boresight::PlusZ).unwrap();
        let sector = Sector {
            center_azimuth: 0.0,
            span: 60f64.to_radians(),
            polar: 100f64.to_radians(),
        };
        let beams = build_codebook(&ofdm, &tx, &rx, sector, 0.0).unwrap();
        let pilots = PilotSet::generate(&ofdm, seed);
        GnbLink {
            power: Power5GConfig::new(30.0, 4, 4),
            ofdm,
            tx_array: tx,
            rx_array: rx,
            beams,
            pilots,
        }
    }

    fn eta() -> ParamVec5G {
        ParamVec5G {
            theta_g: 1.9,
            phi_g: 0.3,
            theta_u: PI - 1.9,
            phi_u: wrap_angle(0.3 - PI),
            tau_b: 3.3e-8,
            f_d: 1500.0,
        }
    }

    /// Unitary DFT `D[a, b] = e^{−j2πab/K}/√K` and `Q = diag((q − K/2)/K)`.
    fn brute_force_c(kk: usize, fd_ts: f64) -> CMatrix {
        let n = kk as f64;
        let d = CMatrix::from_fn(kk, kk, |a, b| Complex64::from_polar(1.0 / n.sqrt(), -2.0 * PI * (a * b) as f64 / n));
        let q = CMatrix::from_diagonal(&CVector::from_fn(kk, |i, _| Complex64::new((i as f64 - n / 2.0) / n, 0.0)));
        CMatrix::identity(kk, kk) + d.adjoint() * q * d * (J * 2.0 * PI * fd_ts)
    }

    #[test]
    fn config_validation() {
        let mut c = small_cfg(8, 2, 1);
        assert!(c.validate().is_ok());
        assert_relative_eq!(c.t0(), c.t_s + 8e-9);
        c.num_subcarriers = 7;
        assert!(c.validate().is_err());
        let mut c = small_cfg(8, 2, 1);
        c.num_streams = 5;
        assert!(c.validate().is_err());
        assert_eq!(small_cfg(8, 2, 1).subcarrier_indices(), -4..4);
        assert!(small_cfg(8, 2, 1).position(4).is_err());
        assert_eq!(small_cfg(8, 2, 1).position(-4).unwrap(), 0);
    }

    #[test]
    fn pilots_are_deterministic_and_unit_norm() {
        let cfg = small_cfg(16, 5, 2);
        let a = PilotSet::generate(&cfg, 7);
        let b = PilotSet::generate(&cfg, 7);
        assert_eq!(a, b);
        assert_ne!(a, PilotSet::generate(&cfg, 8));
        for m in 1..=5 {
            for col in a.symbol(m).column_iter() {
                assert!((col.norm() - 1.0).abs() < 1e-12);
            }
        }
        let single = PilotSet::generate(&small_cfg(8, 3, 1), 1);
        for x in single.symbol(2).iter() {
            assert!((x.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn codebook_spacing_and_normalization() {
        let mut cfg = small_cfg(8, 20, 1);
        cfg.num_beams = 16;
        let sector = Sector {
            center_azimuth: 0.0,
            span: 120f64.to_radians(),
            polar: PI / 2.0,
        };
        assert_relative_eq!(
            (sector.beam_azimuth(1, 16) - sector.beam_azimuth(0, 16)).to_degrees(),
            8.0,
            epsilon = 1e-12
        );
        let tx = AntennaArray::ura(4, 4, Boresight::PlusX).unwrap();
        let rx = AntennaArray::ura(2, 2, Boresight::PlusZ).unwrap();
        let cb = build_codebook(&cfg, &tx, &rx, sector, 0.3).unwrap();
        for m in 1..=20 {
            assert!((cb.precoder(m).norm() - 1.0).abs() < 1e-12);
            assert!((cb.combiner(m).norm() - 1.0).abs() < 1e-12);
        }
        cfg.num_streams = 3;
        let cb = build_codebook(&cfg, &tx, &rx, sector, 0.3).unwrap();
        assert_eq!(cb.beam_indices(5), vec![15, 0, 1]);
        for m in 1..=20 {
            assert!((cb.precoder(m).norm() - 1.0).abs() < 1e-12);
            assert!((cb.combiner(m).norm() - 1.0).abs() < 1e-12);
        }
        let bad = Sector { span: 0.0, ..sector };
        assert!(matches!(build_codebook(&cfg, &tx, &rx, bad, 0.0), Err(Error::InvalidSector(_))));
    }

    #[test]
    fn matched_single_beam_maximizes_gain() {
        let mut cfg = small_cfg(8, 2, 1);
        cfg.num_beams = 1;
        let tx = AntennaArray::ura(4, 4, Boresight::PlusX).unwrap();
        let rx = AntennaArray::ura(1, 1, Boresight::PlusZ).unwrap();
        let lc = cfg.carrier_wavelength();
        let (theta, phi) = (1.7, 0.2);
        let a = tx.response(theta, phi, lc, lc);
        let gain = |az: f64| {
            let s = Sector {
                center_azimuth: az,
                span: 0.1,
                polar: theta,
            };
            let cb = build_codebook(&cfg, &tx, &rx, s, 0.0).unwrap();
            (a.adjoint() * cb.precoder(1))[(0, 0)].norm()
        };
        let matched = gain(phi);
        assert_relative_eq!(matched, 1.0, epsilon = 1e-12);
        for d in [-0.4, -0.1, 0.05, 0.3] {
            assert!(gain(phi + d) < matched);
        }
    }

    #[test]
    fn ici_zero_doppler_is_identity() {
        let op = small_cfg(16, 1, 1).ici(0.0);
        for k in -8..8 {
            let col = op.column(k).unwrap();
            for (row, v) in col {
                let want = if row == k { 1.0 } else { 0.0 };
                assert_eq!(v, Complex64::new(want, 0.0));
            }
        }
        assert!(op.column(8).is_err());
        assert!(op.column(-9).is_err());
    }

    #[test]
    fn ici_linear_in_doppler() {
        let cfg = small_cfg(16, 1, 1);
        let a = cfg.ici(100.0).column(3).unwrap();
        let b = cfg.ici(200.0).column(3).unwrap();
        for ((ra, va), (rb, vb)) in a.iter().zip(&b) {
            assert_eq!(ra, rb);
            let (da, db) = if *ra == 3 { (va - 1.0, vb - 1.0) } else { (*va, *vb) };
            assert_relative_eq!((db - da * 2.0).norm(), 0.0, epsilon = 1e-15);
        }
        let d1 = cfg.ici(100.0).column_derivative(-2).unwrap();
        let d2 = cfg.ici(-5000.0).column_derivative(-2).unwrap();
        assert_eq!(d1, d2);
    }

    #[test]
    fn ici_matches_brute_force_k4() {
        let ts = 1.0;
        let fd = 0.01;
        let op = IciOperator {
            f_d: fd,
            t_s: ts,
            num_subcarriers: 4,
            halfwidth: 2,
        };
        let c = brute_force_c(4, fd * ts);
        for k in -2..2i64 {
            let col = op.column(k).unwrap();
            assert_eq!(col.len(), 4);
            for (row, v) in col {
                let want = c[((row + 2) as usize, (k + 2) as usize)];
                assert!((v - want).norm() < 1e-14, "k={k} row={row}: {v} vs {want}");
            }
            let dcol = op.column_derivative(k).unwrap();
            let dc = (brute_force_c(4, 1.0) - CMatrix::identity(4, 4)) * Complex64::new(ts, 0.0);
            for (row, v) in dcol {
                let want = dc[((row + 2) as usize, (k + 2) as usize)];
                assert!((v - want).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn ici_truncation_keeps_neighbours() {
        let op = small_cfg(16, 1, 1).ici(300.0);
        let rows: Vec<i64> = op.column(-8).unwrap().iter().map(|e| e.0).collect();
        assert_eq!(rows, vec![7, -8, -7]);
        let full = IciOperator { halfwidth: 8, ..op };
        assert_eq!(full.column(0).unwrap().len(), 16);
    }

    #[test]
    fn ici_derivative_matches_finite_difference() {
        let cfg = small_cfg(32, 1, 1);
        let h = 1e-3;
        for k in [-16, -1, 0, 5, 15] {
            let d = cfg.ici(700.0).column_derivative(k).unwrap();
            let p = cfg.ici(700.0 + h).column(k).unwrap();
            let q = cfg.ici(700.0 - h).column(k).unwrap();
            for ((dv, pv), qv) in d.iter().zip(&p).zip(&q) {
                let fd = (pv.1 - qv.1) / (2.0 * h);
                assert!((fd - dv.1).norm() <= 1e-8 * dv.1.norm().max(1e-300));
            }
            let c = cfg.ici(700.0).column(k).unwrap();
            for (cv, dv) in c.iter().zip(&d) {
                let e = if cv.0 == k { 1.0 } else { 0.0 };
                assert_eq!(cv.1, e + dv.1 * 700.0);
            }
        }
    }

    #[test]
    fn zero_power_gives_zero_mean() {
        let mut link = small_link(8, 3, 1, 3);
        link.power = Power5GConfig::new(f64::NEG_INFINITY, 4, 4);
        let mu = noiseless_mean(&link, &eta(), 2, 2).unwrap();
        assert!(mu.iter().all(|x| x.norm() == 0.0));
    }

    #[test]
    fn delay_shift_is_phase_only() {
        let link = small_link(8, 3, 1, 3);
        let e = eta();
        let shifted = ParamVec5G { tau_b: e.tau_b + 1.7e-9, ..e };
        for k in [-4, 1, 3] {
            let a = noiseless_mean(&link, &e, k, 2).unwrap();
            let b = noiseless_mean(&link, &shifted, k, 2).unwrap();
            let rot = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * link.ofdm.delta_f * 1.7e-9);
            assert_relative_eq!(a.norm(), b.norm(), max_relative = 1e-12);
            assert!((&a * rot - &b).norm() <= 1e-12 * a.norm());
        }
    }

    #[test]
    fn factored_and_full_means_agree() {
        for ns in [1, 2] {
            let link = small_link(16, 4, ns, 11);
            for k in [-8, -3, 0, 7] {
                for m in 1..=4 {
                    let a = noiseless_mean(&link, &eta(), k, m).unwrap();
                    let b = noiseless_mean_full(&link, &eta(), k, m).unwrap();
                    assert!((&a - &b).norm() <= 1e-12 * a.norm(), "{} vs {}", a, b);
                }
            }
        }
    }

    #[test]
    fn mean_is_linear_in_pilots() {
        let link = small_link(8, 2, 1, 5);
        let rotated = GnbLink {
            pilots: link.pilots.rotated(0.7),
            ..link.clone()
        };
        let a = noiseless_mean(&link, &eta(), 1, 1).unwrap();
        let b = noiseless_mean(&rotated, &eta(), 1, 1).unwrap();
        assert!((&a * Complex64::from_polar(1.0, 0.7) - &b).norm() < 1e-12 * b.norm());
    }

    #[test]
    fn mean_rejects_bad_indices() {
        let link = small_link(8, 2, 1, 5);
        assert!(noiseless_mean(&link, &eta(), 4, 1).is_err());
        assert!(noiseless_mean(&link, &eta(), 0, 0).is_err());
        assert!(noiseless_mean(&link, &eta(), 0, 3).is_err());
        let mut bad = link.clone();
        bad.power = Power5GConfig::new(30.0, 5, 4);
        assert!(matches!(noiseless_mean(&bad, &eta(), 0, 1), Err(Error::DimensionMismatch(_))));
    }
}
