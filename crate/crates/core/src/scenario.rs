//! Scenario definitions, the two built-in scenarios, anchor-subset sweeps and
//! CSV / JSON output.
//!
//! Scenario files are TOML. Every physical quantity carries its unit in the
//! key name; see `README.md` for the full schema.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{AntennaArray, Boresight};
use crate::bounds::{bound_report, channel_params_5g, contribution_g, contribution_s, sum_contributions, transform_g, transform_s};
use crate::fim::{fim_5g_closed, fim_gnss, Fim, GnssSignalConfig, Power5GConfig, PulseShape};
use crate::geometry::{spherical_to_cartesian, AnchorKind, AnchorState, PlatformState, Position3, SphericalCoord, Velocity3};
use crate::waveform::{build_codebook, GnbLink, OfdmConfig, PilotSet, Sector};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub nx: usize,
    pub ny: usize,
    pub boresight: Boresight,
}

impl ArraySpec {
    pub fn build(&self) -> Result<AntennaArray> {
        AntennaArray::ura(self.nx, self.ny, self.boresight)
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }
}

/// Azimuth sector of a gNB codebook, degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodebookSpec {
    pub center_azimuth_deg: f64,
    pub span_deg: f64,
    pub polar_deg: f64,
}

impl CodebookSpec {
    pub fn sector(&self) -> Sector {
        Sector {
            center_azimuth: self.center_azimuth_deg.to_radians(),
            span: self.span_deg.to_radians(),
            polar: self.polar_deg.to_radians(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvSpec {
    pub state: PlatformState,
    pub array: ArraySpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnbSpec {
    pub anchor: AnchorState,
    pub array: ArraySpec,
    /// Transmit power over noise density, dB-Hz.
    pub pn0_dbhz: f64,
    /// Also holds the beam count and streams per symbol.
    pub ofdm: OfdmConfig,
    pub codebook: CodebookSpec,
    pub pilot_seed: u64,
}

impl GnbSpec {
    pub fn power(&self, av: &AvSpec) -> Power5GConfig {
        Power5GConfig::new(self.pn0_dbhz, self.array.element_count(), av.array.element_count())
    }

    /// Builds arrays, codebook and pilots for the link to `av`.
    pub fn link(&self, av: &AvSpec) -> Result<GnbLink> {
        let tx = self.array.build()?;
        let rx = av.array.build()?;
        let beams = build_codebook(&self.ofdm, &tx, &rx, self.codebook.sector(), av.state.phi0)?;
        let link = GnbLink {
            pilots: PilotSet::generate(&self.ofdm, self.pilot_seed),
            power: self.power(av),
            ofdm: self.ofdm.clone(),
            tx_array: tx,
            rx_array: rx,
            beams,
        };
        link.validate()?;
        Ok(link)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteSpec {
    pub anchor: AnchorState,
    pub signal: GnssSignalConfig,
}

/// Whether the radial part of a satellite velocity increases or decreases range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialSign {
    Away,
    Toward,
}

/// How built-in satellite velocities were drawn. Recorded in the scenario so
/// files written from a built-in keep the provenance of their velocities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SatelliteMotion {
    pub speed_mps: f64,
    pub radial_speed_mps: f64,
    pub radial_sign: RadialSign,
    /// ChaCha8 seed of the tangential directions, drawn in satellite order.
    pub seed: u64,
}

impl Default for SatelliteMotion {
    fn default() -> Self {
        Self {
            speed_mps: 3900.0,
            radial_speed_mps: 1000.0,
            radial_sign: RadialSign::Away,
            seed: 1,
        }
    }
}

impl SatelliteMotion {
    /// Velocities for satellites at `sats` seen from `av`: the radial part
    /// plus the remaining speed along a random direction orthogonal to it.
    pub fn velocities(&self, av: Position3, sats: &[Position3]) -> Result<Vec<Velocity3>> {
        if !(self.speed_mps >= self.radial_speed_mps && self.radial_speed_mps >= 0.0) {
            return Err(Error::validation(
                "satellite_motion",
                format!("need 0 <= radial {} <= speed {}", self.radial_speed_mps, self.speed_mps),
            ));
        }
        let tangential = (self.speed_mps.powi(2) - self.radial_speed_mps.powi(2)).sqrt();
        let sign = match self.radial_sign {
            RadialSign::Away => 1.0,
            RadialSign::Toward => -1.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(sats.len());
        for &ps in sats {
            let r = ps - av;
            let range = r.norm();
            if range < crate::geometry::COINCIDENT_EPS {
                return Err(Error::CoincidentPoints { separation: range });
            }
            let u = r / range;
            let d = loop {
                let g = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
                let t: Vector3<f64> = g - u * u.dot(&g);
                let n = t.norm();
                if n > 1e-8 {
                    break t / n;
                }
            };
            out.push(Velocity3::from_vector(&(u * (sign * self.radial_speed_mps) + d * tangential)));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub description: String,
    pub av: AvSpec,
    pub gnbs: Vec<GnbSpec>,
    pub satellites: Vec<SatelliteSpec>,
    pub satellite_motion: Option<SatelliteMotion>,
}

fn in_field(prefix: String) -> impl FnOnce(Error) -> Error {
    move |e| match e {
        Error::Validation { field, reason } => Error::Validation {
            field: format!("{prefix}.{field}"),
            reason,
        },
        Error::InvalidSector(r) | Error::InvalidConfig(r) => Error::Validation { field: prefix, reason: r },
        other => other,
    }
}

fn check_finite(field: String, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation {
            field,
            reason: format!("must be finite, got {xs:?}"),
        })
    }
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.gnbs.is_empty() && self.satellites.is_empty() {
            return Err(Error::validation("anchors", "scenario needs at least one gNB or satellite"));
        }
        let st = &self.av.state;
        check_finite("av.position_m".into(), &<[f64; 3]>::from(st.p))?;
        check_finite("av.velocity_mps".into(), &<[f64; 3]>::from(st.v))?;
        check_finite("av.clock_bias_s".into(), &[st.b_u, st.phi0])?;
        self.av.array.build().map_err(in_field("av.array".into()))?;
        for (i, g) in self.gnbs.iter().enumerate() {
            let at = |f: &str| format!("gnbs[{i}].{f}");
            if g.anchor.kind != AnchorKind::Gnb {
                return Err(Error::validation(at("kind"), "gNB entry has satellite kind"));
            }
            check_finite(at("position_m"), &<[f64; 3]>::from(g.anchor.p))?;
            check_finite(at("velocity_mps"), &<[f64; 3]>::from(g.anchor.v))?;
            check_finite(at("pn0_dbhz"), &[g.pn0_dbhz])?;
            if g.ofdm.f_c != g.anchor.carrier_freq {
                return Err(Error::validation(at("carrier_freq_hz"), "OFDM carrier differs from anchor carrier"));
            }
            g.ofdm.validate().map_err(in_field(format!("gnbs[{i}]")))?;
            g.array.build().map_err(in_field(at("array")))?;
            g.codebook.sector().validate().map_err(in_field(at("codebook")))?;
            if g.ofdm.num_beams == 0 {
                return Err(Error::validation(at("codebook.num_beams"), "must be >= 1"));
            }
        }
        for (i, s) in self.satellites.iter().enumerate() {
            let at = |f: &str| format!("satellites[{i}].{f}");
            if s.anchor.kind != AnchorKind::Satellite {
                return Err(Error::validation(at("kind"), "satellite entry has gNB kind"));
            }
            check_finite(at("position_m"), &<[f64; 3]>::from(s.anchor.p))?;
            check_finite(at("velocity_mps"), &<[f64; 3]>::from(s.anchor.v))?;
            if !(s.anchor.carrier_freq > 0.0 && s.anchor.carrier_freq.is_finite()) {
                return Err(Error::validation(at("carrier_freq_hz"), "must be positive and finite"));
            }
            s.signal.validate().map_err(in_field(format!("satellites[{i}].signal")))?;
        }
        Ok(())
    }
}

/// Knobs of the built-in scenarios that are not pinned by the published setup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinOptions {
    /// Height of the vehicle array, m.
    pub av_height_m: f64,
    pub motion: SatelliteMotion,
}

impl Default for BuiltinOptions {
    fn default() -> Self {
        Self {
            av_height_m: 1.5,
            motion: SatelliteMotion::default(),
        }
    }
}

pub const SATELLITE_RANGE_M: f64 = 20.2e6;
pub const L1_HZ: f64 = 1575.42e6;
pub const MMWAVE_HZ: f64 = 38e9;

/// Scenario `A` (well-spaced satellites) or `B` (satellites almost on one
/// azimuth arc), with default options.
pub fn builtin_scenario(name: &str) -> Result<ScenarioSpec> {
    builtin_scenario_with(name, BuiltinOptions::default())
}

pub fn builtin_scenario_with(name: &str, opts: BuiltinOptions) -> Result<ScenarioSpec> {
    // (polar, azimuth) in degrees
    let (sats_deg, description): (&[(f64, f64)], &str) = match name {
        "A" | "a" => (
            &[(35.2, 45.0), (35.2, -135.0), (57.3, 130.0), (57.37, -39.8)],
            "well-spaced satellites",
        ),
        "B" | "b" => (
            &[(45.0, 0.08), (5.0, -0.66), (17.0, 0.20), (25.0, -0.14)],
            "satellites almost aligned on an arc",
        ),
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    let av_p = Position3::new(10.0, 0.0, opts.av_height_m);
    let av = AvSpec {
        state: PlatformState::new(av_p, Velocity3::new(13.89, 0.0, 0.0), 0.0, 0.0),
        array: ArraySpec {
            nx: 8,
            ny: 8,
            boresight: Boresight::PlusZ,
        },
    };
    let delta_f = 125e6 / 1024.0;
    let ofdm = OfdmConfig {
        num_subcarriers: 1024,
        num_symbols: 1000,
        delta_f,
        f_c: MMWAVE_HZ,
        t_s: 1.0 / delta_f,
        t_cp: 8e-9,
        num_beams: 16,
        num_streams: 1,
        ici_halfwidth: 1,
    };
    let gnb = |i: u64, p: Position3, boresight, center_azimuth_deg| GnbSpec {
        anchor: AnchorState::gnb(p, MMWAVE_HZ),
        array: ArraySpec { nx: 12, ny: 12, boresight },
        pn0_dbhz: 30.0,
        ofdm: ofdm.clone(),
        codebook: CodebookSpec {
            center_azimuth_deg,
            span_deg: 120.0,
            polar_deg: 105.0,
        },
        pilot_seed: i + 1,
    };
    let gnbs = vec![
        gnb(0, Position3::new(0.0, 0.0, 7.0), Boresight::PlusX, 0.0),
        gnb(1, Position3::new(20.0, -6.0, 5.0), Boresight::PlusY, 90.0),
    ];
    let positions = sats_deg
        .iter()
        .map(|&(t, p)| SphericalCoord::from_degrees(SATELLITE_RANGE_M, t, p).map(spherical_to_cartesian))
        .collect::<Result<Vec<_>>>()?;
    let velocities = opts.motion.velocities(av_p, &positions)?;
    let signal = l1_ca_signal();
    let satellites = positions
        .into_iter()
        .zip(velocities)
        .map(|(p, v)| SatelliteSpec {
            anchor: AnchorState::satellite(p, v, L1_HZ),
            signal: signal.clone(),
        })
        .collect();
    let spec = ScenarioSpec {
        name: name.to_ascii_uppercase(),
        description: description.to_string(),
        av,
        gnbs,
        satellites,
        satellite_motion: Some(opts.motion),
    };
    spec.validate()?;
    Ok(spec)
}

/// 1.023 Mchip/s code, 40 dB-Hz, 300 ms observation, rectangular chips.
pub fn l1_ca_signal() -> GnssSignalConfig {
    GnssSignalConfig {
        cn0_dbhz: 40.0,
        t_so: 0.3,
        bandwidth: 1.023e6,
        t_c: 1.0 / 1.023e6,
        n_so: 306_900,
        pulse: PulseShape::Rectangular,
    }
}

// ---- file format ----

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    description: Option<String>,
    av: Option<RawAv>,
    #[serde(default)]
    gnbs: Vec<RawGnb>,
    #[serde(default)]
    satellites: Vec<RawSatellite>,
    #[serde(skip_serializing_if = "Option::is_none")]
    satellite_motion: Option<SatelliteMotion>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAv {
    position_m: Option<[f64; 3]>,
    velocity_mps: Option<[f64; 3]>,
    array_azimuth_rad: Option<f64>,
    clock_bias_s: Option<f64>,
    array: Option<RawArray>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArray {
    nx: Option<usize>,
    ny: Option<usize>,
    boresight: Option<Boresight>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGnb {
    position_m: Option<[f64; 3]>,
    velocity_mps: Option<[f64; 3]>,
    carrier_freq_hz: Option<f64>,
    pn0_dbhz: Option<f64>,
    pilot_seed: Option<u64>,
    array: Option<RawArray>,
    ofdm: Option<RawOfdm>,
    codebook: Option<RawCodebook>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOfdm {
    num_subcarriers: Option<usize>,
    num_symbols: Option<usize>,
    subcarrier_spacing_hz: Option<f64>,
    symbol_duration_s: Option<f64>,
    cyclic_prefix_s: Option<f64>,
    ici_halfwidth: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCodebook {
    center_azimuth_deg: Option<f64>,
    span_deg: Option<f64>,
    polar_deg: Option<f64>,
    num_beams: Option<usize>,
    num_streams: Option<usize>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSatellite {
    position_m: Option<[f64; 3]>,
    velocity_mps: Option<[f64; 3]>,
    carrier_freq_hz: Option<f64>,
    signal: Option<RawSignal>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSignal {
    cn0_dbhz: Option<f64>,
    observation_time_s: Option<f64>,
    bandwidth_hz: Option<f64>,
    chip_duration_s: Option<f64>,
    chips_per_observation: Option<u64>,
    /// Samples of one chip; absent for a rectangular chip.
    #[serde(skip_serializing_if = "Option::is_none")]
    pulse_samples: Option<Vec<f64>>,
}

fn req<T>(v: Option<T>, field: impl FnOnce() -> String) -> Result<T> {
    v.ok_or_else(|| Error::Validation {
        field: field(),
        reason: "missing required key".into(),
    })
}

fn array_from_raw(raw: Option<RawArray>, at: &str) -> Result<ArraySpec> {
    let raw = req(raw, || at.to_string())?;
    Ok(ArraySpec {
        nx: req(raw.nx, || format!("{at}.nx"))?,
        ny: req(raw.ny, || format!("{at}.ny"))?,
        boresight: req(raw.boresight, || format!("{at}.boresight"))?,
    })
}

fn array_to_raw(a: &ArraySpec) -> RawArray {
    RawArray {
        nx: Some(a.nx),
        ny: Some(a.ny),
        boresight: Some(a.boresight),
    }
}

impl RawScenario {
    fn into_spec(self) -> Result<ScenarioSpec> {
        let av = req(self.av, || "av".into())?;
        let av = AvSpec {
            state: PlatformState::new(
                req(av.position_m, || "av.position_m".into())?.into(),
                req(av.velocity_mps, || "av.velocity_mps".into())?.into(),
                av.array_azimuth_rad.unwrap_or(0.0),
                av.clock_bias_s.unwrap_or(0.0),
            ),
            array: array_from_raw(av.array, "av.array")?,
        };
        let gnbs = self
            .gnbs
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let at = |f: &str| format!("gnbs[{i}].{f}");
                let f_c = req(g.carrier_freq_hz, || at("carrier_freq_hz"))?;
                let o = req(g.ofdm, || at("ofdm"))?;
                let c = req(g.codebook, || at("codebook"))?;
                Ok(GnbSpec {
                    anchor: AnchorState::gnb(req(g.position_m, || at("position_m"))?.into(), f_c)
                        .with_velocity(g.velocity_mps.map(Into::into).unwrap_or_default()),
                    array: array_from_raw(g.array, &at("array"))?,
                    pn0_dbhz: req(g.pn0_dbhz, || at("pn0_dbhz"))?,
                    ofdm: OfdmConfig {
                        num_subcarriers: req(o.num_subcarriers, || at("ofdm.num_subcarriers"))?,
                        num_symbols: req(o.num_symbols, || at("ofdm.num_symbols"))?,
                        delta_f: req(o.subcarrier_spacing_hz, || at("ofdm.subcarrier_spacing_hz"))?,
                        f_c,
                        t_s: req(o.symbol_duration_s, || at("ofdm.symbol_duration_s"))?,
                        t_cp: req(o.cyclic_prefix_s, || at("ofdm.cyclic_prefix_s"))?,
                        num_beams: req(c.num_beams, || at("codebook.num_beams"))?,
                        num_streams: c.num_streams.unwrap_or(1),
                        ici_halfwidth: o.ici_halfwidth.unwrap_or(1),
                    },
                    codebook: CodebookSpec {
                        center_azimuth_deg: req(c.center_azimuth_deg, || at("codebook.center_azimuth_deg"))?,
                        span_deg: req(c.span_deg, || at("codebook.span_deg"))?,
                        polar_deg: req(c.polar_deg, || at("codebook.polar_deg"))?,
                    },
                    pilot_seed: req(g.pilot_seed, || at("pilot_seed"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let satellites = self
            .satellites
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                let at = |f: &str| format!("satellites[{i}].{f}");
                let sig = req(s.signal, || at("signal"))?;
                Ok(SatelliteSpec {
                    anchor: AnchorState::satellite(
                        req(s.position_m, || at("position_m"))?.into(),
                        req(s.velocity_mps, || at("velocity_mps"))?.into(),
                        req(s.carrier_freq_hz, || at("carrier_freq_hz"))?,
                    ),
                    signal: GnssSignalConfig {
                        cn0_dbhz: req(sig.cn0_dbhz, || at("signal.cn0_dbhz"))?,
                        t_so: req(sig.observation_time_s, || at("signal.observation_time_s"))?,
                        bandwidth: req(sig.bandwidth_hz, || at("signal.bandwidth_hz"))?,
                        t_c: req(sig.chip_duration_s, || at("signal.chip_duration_s"))?,
                        n_so: req(sig.chips_per_observation, || at("signal.chips_per_observation"))?,
                        pulse: match sig.pulse_samples {
                            None => PulseShape::Rectangular,
                            Some(s) => PulseShape::Sampled(s),
                        },
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = ScenarioSpec {
            name: self.name.unwrap_or_default(),
            description: self.description.unwrap_or_default(),
            av,
            gnbs,
            satellites,
            satellite_motion: self.satellite_motion,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn from_spec(spec: &ScenarioSpec) -> Self {
        RawScenario {
            name: Some(spec.name.clone()),
            description: Some(spec.description.clone()),
            av: Some(RawAv {
                position_m: Some(spec.av.state.p.into()),
                velocity_mps: Some(spec.av.state.v.into()),
                array_azimuth_rad: Some(spec.av.state.phi0),
                clock_bias_s: Some(spec.av.state.b_u),
                array: Some(array_to_raw(&spec.av.array)),
            }),
            gnbs: spec
                .gnbs
                .iter()
                .map(|g| RawGnb {
                    position_m: Some(g.anchor.p.into()),
                    velocity_mps: Some(g.anchor.v.into()),
                    carrier_freq_hz: Some(g.anchor.carrier_freq),
                    pn0_dbhz: Some(g.pn0_dbhz),
                    pilot_seed: Some(g.pilot_seed),
                    array: Some(array_to_raw(&g.array)),
                    ofdm: Some(RawOfdm {
                        num_subcarriers: Some(g.ofdm.num_subcarriers),
                        num_symbols: Some(g.ofdm.num_symbols),
                        subcarrier_spacing_hz: Some(g.ofdm.delta_f),
                        symbol_duration_s: Some(g.ofdm.t_s),
                        cyclic_prefix_s: Some(g.ofdm.t_cp),
                        ici_halfwidth: Some(g.ofdm.ici_halfwidth),
                    }),
                    codebook: Some(RawCodebook {
                        center_azimuth_deg: Some(g.codebook.center_azimuth_deg),
                        span_deg: Some(g.codebook.span_deg),
                        polar_deg: Some(g.codebook.polar_deg),
                        num_beams: Some(g.ofdm.num_beams),
                        num_streams: Some(g.ofdm.num_streams),
                    }),
                })
                .collect(),
            satellites: spec
                .satellites
                .iter()
                .map(|s| RawSatellite {
                    position_m: Some(s.anchor.p.into()),
                    velocity_mps: Some(s.anchor.v.into()),
                    carrier_freq_hz: Some(s.anchor.carrier_freq),
                    signal: Some(RawSignal {
                        cn0_dbhz: Some(s.signal.cn0_dbhz),
                        observation_time_s: Some(s.signal.t_so),
                        bandwidth_hz: Some(s.signal.bandwidth),
                        chip_duration_s: Some(s.signal.t_c),
                        chips_per_observation: Some(s.signal.n_so),
                        pulse_samples: match &s.signal.pulse {
                            PulseShape::Rectangular => None,
                            PulseShape::Sampled(v) => Some(v.clone()),
                        },
                    }),
                })
                .collect(),
            satellite_motion: spec.satellite_motion,
        }
    }
}

/// Parses and validates a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    raw.into_spec()
}

pub fn scenario_to_toml(spec: &ScenarioSpec) -> Result<String> {
    toml::to_string_pretty(&RawScenario::from_spec(spec)).map_err(|e| Error::Parse(e.to_string()))
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn save_scenario(spec: &ScenarioSpec, path: impl AsRef<Path>) -> Result<()> {
    spec.validate()?;
    std::fs::write(path, scenario_to_toml(spec)?)?;
    Ok(())
}

// ---- sweeps ----

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SubsetSelector {
    /// One subset made of exactly these anchors.
    Explicit {
        gnbs: BTreeSet<usize>,
        satellites: BTreeSet<usize>,
    },
    /// Every non-empty combination of gNBs and satellites.
    AllSubsets,
}

/// A subset of anchors, as indices into the scenario lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subset {
    pub gnbs: Vec<usize>,
    pub satellites: Vec<usize>,
}

impl Subset {
    /// E.g. `g0+g1+s2`; `none` when empty.
    pub fn describe(&self) -> String {
        let parts: Vec<String> = self
            .gnbs
            .iter()
            .map(|i| format!("g{i}"))
            .chain(self.satellites.iter().map(|i| format!("s{i}")))
            .collect();
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

impl SubsetSelector {
    pub fn explicit(gnbs: impl IntoIterator<Item = usize>, satellites: impl IntoIterator<Item = usize>) -> Self {
        SubsetSelector::Explicit {
            gnbs: gnbs.into_iter().collect(),
            satellites: satellites.into_iter().collect(),
        }
    }

    /// Subsets to evaluate, in a fixed order.
    pub fn subsets(&self, spec: &ScenarioSpec) -> Result<Vec<Subset>> {
        let (ng, ns) = (spec.gnbs.len(), spec.satellites.len());
        match self {
            SubsetSelector::Explicit { gnbs, satellites } => {
                for (what, set, n) in [("gnbs", gnbs, ng), ("satellites", satellites, ns)] {
                    if let Some(&bad) = set.iter().find(|&&i| i >= n) {
                        return Err(Error::validation(
                            what,
                            format!("index {bad} out of range; scenario has {n}"),
                        ));
                    }
                }
                if gnbs.is_empty() && satellites.is_empty() {
                    return Err(Error::validation("subset", "select at least one anchor"));
                }
                Ok(vec![Subset {
                    gnbs: gnbs.iter().copied().collect(),
                    satellites: satellites.iter().copied().collect(),
                }])
            }
            SubsetSelector::AllSubsets => {
                if ng + ns > 20 {
                    return Err(Error::validation("subset", format!("{} anchors is too many to sweep", ng + ns)));
                }
                let pick = |mask: usize, n: usize| (0..n).filter(|i| mask >> i & 1 == 1).collect::<Vec<_>>();
                let mut out = Vec::new();
                for gm in 0..1usize << ng {
                    for sm in 0..1usize << ns {
                        if gm | sm != 0 {
                            out.push(Subset {
                                gnbs: pick(gm, ng),
                                satellites: pick(sm, ns),
                            });
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub gnb_count: usize,
    pub sat_count: usize,
    pub subset: String,
    pub peb_m: Option<f64>,
    pub veb_mps: Option<f64>,
    pub feasible: bool,
    pub rank: usize,
    pub condition_number: f64,
    /// Time to compute the anchors used by this row plus the bound itself.
    pub wallclock_s: f64,
    /// Set when a computation for this row failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// The 7×7 state-space contribution of one anchor and how long it took.
#[derive(Debug, Clone)]
pub struct AnchorOutcome {
    pub label: String,
    pub contribution: std::result::Result<Fim, String>,
    pub seconds: f64,
}

/// Contribution of gNB `i` to the state FIM.
pub fn gnb_contribution(spec: &ScenarioSpec, i: usize) -> Result<Fim> {
    let g = &spec.gnbs[i];
    let link = g.link(&spec.av)?;
    let eta = channel_params_5g(&spec.av.state, &g.anchor)?;
    let j = fim_5g_closed(&link, &eta)?;
    contribution_g(&transform_g(&spec.av.state, &g.anchor)?, &j)
}

pub fn satellite_contribution(spec: &ScenarioSpec, i: usize) -> Result<Fim> {
    let s = &spec.satellites[i];
    let j = fim_gnss(&s.signal)?;
    contribution_s(&transform_s(&spec.av.state, &s.anchor)?, &j)
}

fn timed(label: String, f: impl FnOnce() -> Result<Fim>) -> AnchorOutcome {
    let t = Instant::now();
    let contribution = f().map_err(|e| e.to_string());
    AnchorOutcome {
        label,
        contribution,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Evaluates every subset chosen by `selector`. Each anchor's contribution is
/// computed once; failures are reported on the rows that need the anchor.
pub fn evaluate(spec: &ScenarioSpec, selector: &SubsetSelector) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let subsets = selector.subsets(spec)?;
    let need_g: BTreeSet<usize> = subsets.iter().flat_map(|s| s.gnbs.iter().copied()).collect();
    let need_s: BTreeSet<usize> = subsets.iter().flat_map(|s| s.satellites.iter().copied()).collect();
    let gnb_out: Vec<Option<AnchorOutcome>> = (0..spec.gnbs.len())
        .into_par_iter()
        .map(|i| need_g.contains(&i).then(|| timed(format!("g{i}"), || gnb_contribution(spec, i))))
        .collect();
    let sat_out: Vec<Option<AnchorOutcome>> = (0..spec.satellites.len())
        .into_par_iter()
        .map(|i| need_s.contains(&i).then(|| timed(format!("s{i}"), || satellite_contribution(spec, i))))
        .collect();
    Ok(subsets
        .par_iter()
        .map(|s| row_for(spec, s, &gnb_out, &sat_out))
        .collect())
}

fn row_for(
    spec: &ScenarioSpec,
    subset: &Subset,
    gnb_out: &[Option<AnchorOutcome>],
    sat_out: &[Option<AnchorOutcome>],
) -> ResultRow {
    let t = Instant::now();
    let used: Vec<&AnchorOutcome> = subset
        .gnbs
        .iter()
        .filter_map(|&i| gnb_out[i].as_ref())
        .chain(subset.satellites.iter().filter_map(|&i| sat_out[i].as_ref()))
        .collect();
    let anchor_time: f64 = used.iter().map(|o| o.seconds).sum();
    let mut row = ResultRow {
        scenario: spec.name.clone(),
        gnb_count: subset.gnbs.len(),
        sat_count: subset.satellites.len(),
        subset: subset.describe(),
        peb_m: None,
        veb_mps: None,
        feasible: false,
        rank: 0,
        condition_number: f64::INFINITY,
        wallclock_s: 0.0,
        error: None,
    };
    let result = used
        .iter()
        .map(|o| o.contribution.as_ref().map_err(|e| format!("{}: {e}", o.label)))
        .collect::<std::result::Result<Vec<&Fim>, String>>()
        .and_then(|parts| {
            let total = sum_contributions(parts).map_err(|e| e.to_string())?;
            bound_report(&total).map_err(|e| e.to_string())
        });
    match result {
        Ok(r) => {
            row.peb_m = r.peb;
            row.veb_mps = r.veb;
            row.feasible = r.feasible;
            row.rank = r.rank;
            row.condition_number = r.condition_number;
        }
        Err(e) => row.error = Some(e),
    }
    row.wallclock_s = anchor_time + t.elapsed().as_secs_f64();
    row
}

// ---- output ----

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::validation("format", format!("expected csv or json, got '{s}'"))),
        }
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "scenario",
    "gnb_count",
    "sat_count",
    "subset",
    "peb_m",
    "veb_mps",
    "feasible",
    "rank",
    "cond",
    "wallclock_s",
];

/// `printf("%g")`-style formatting with 6 significant digits.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if !(-4..6).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        trim(&format!("{x:.*}", (5 - exp) as usize))
    }
}

fn csv_string(rows: &[ResultRow]) -> Result<String> {
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).map_err(io)?;
    let opt = |x: Option<f64>| x.map(format_sig6).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.scenario.clone(),
            r.gnb_count.to_string(),
            r.sat_count.to_string(),
            r.subset.clone(),
            opt(r.peb_m),
            opt(r.veb_mps),
            r.feasible.to_string(),
            r.rank.to_string(),
            format_sig6(r.condition_number),
            format_sig6(r.wallclock_s),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Renders rows without touching the filesystem.
pub fn render(rows: &[ResultRow], format: OutputFormat) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    match format {
        OutputFormat::Csv => csv_string(rows),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(rows).map_err(|e| Error::Io(e.into()))?;
            s.push('\n');
            Ok(s)
        }
    }
}

/// Writes rows to `path`. Nothing is created when `rows` is empty.
pub fn emit(rows: &[ResultRow], format: OutputFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = render(rows, format)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Plain-text table for terminals.
pub fn summary_table(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<24} {:>12} {:>12} {:>5} {:>12}", "subset", "peb_m", "veb_mps", "rank", "cond");
    let opt = |x: Option<f64>| x.map(format_sig6).unwrap_or_else(|| "-".into());
    for r in rows {
        let _ = writeln!(
            out,
            "{:<24} {:>12} {:>12} {:>5} {:>12}",
            r.subset,
            opt(r.peb_m),
            opt(r.veb_mps),
            r.rank,
            format_sig6(r.condition_number)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig6_matches_printf_g() {
        let cases = [
            (4.25, "4.25"),
            (0.025, "0.025"),
            (123456.7, "123457"),
            (999999.5, "1e+06"),
            (1234567.0, "1.23457e+06"),
            (0.0001234567, "0.000123457"),
            (0.00001234567, "1.23457e-05"),
            (-2.5, "-2.5"),
            (1.0, "1"),
            (100.0, "100"),
            (1e21, "1e+21"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig6(x), want, "{x}");
        }
    }

    #[test]
    fn builtin_a_first_satellite() {
        let a = builtin_scenario("A").unwrap();
        let want = spherical_to_cartesian(SphericalCoord::from_degrees(20.2e6, 35.2, 45.0).unwrap());
        assert_eq!(a.satellites[0].anchor.p, want);
        assert_eq!(a.av.state.p, Position3::new(10.0, 0.0, 1.5));
        assert_eq!(a.gnbs.len(), 2);
    }

    #[test]
    fn builtin_b_azimuths_narrow() {
        let b = builtin_scenario("B").unwrap();
        for s in &b.satellites {
            let phi = s.anchor.p.y.atan2(s.anchor.p.x).to_degrees();
            assert!(phi.abs() <= 0.7, "{phi}");
        }
    }

    #[test]
    fn unknown_builtin() {
        assert!(matches!(builtin_scenario("C"), Err(Error::UnknownScenario(_))));
    }

    #[test]
    fn satellite_speed_split() {
        let a = builtin_scenario("A").unwrap();
        for s in &a.satellites {
            let v = s.anchor.v.to_vector();
            let u = (s.anchor.p - a.av.state.p).normalize();
            assert!((v.norm() - 3900.0).abs() < 1e-9);
            assert!((v.dot(&u) - 1000.0).abs() < 1e-9);
        }
        let toward = builtin_scenario_with(
            "A",
            BuiltinOptions {
                motion: SatelliteMotion {
                    radial_sign: RadialSign::Toward,
                    ..Default::default()
                },
                ..Default::default()
            },
        )
        .unwrap();
        let s = &toward.satellites[0];
        let u = (s.anchor.p - toward.av.state.p).normalize();
        assert!((s.anchor.v.to_vector().dot(&u) + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn all_subsets_count() {
        let a = builtin_scenario("A").unwrap();
        let subsets = SubsetSelector::AllSubsets.subsets(&a).unwrap();
        assert_eq!(subsets.len(), (1 << 6) - 1);
        assert_eq!(subsets[0].describe(), "s0");
    }

    #[test]
    fn explicit_subset_out_of_range() {
        let a = builtin_scenario("A").unwrap();
        let e = SubsetSelector::explicit([2], []).subsets(&a).unwrap_err();
        assert!(e.is_validation());
    }

    #[test]
    fn gnss_only_rows_are_fast_and_deterministic() {
        let a = builtin_scenario("A").unwrap();
        let sel = SubsetSelector::explicit([], 0..4);
        let r1 = evaluate(&a, &sel).unwrap();
        let r2 = evaluate(&a, &sel).unwrap();
        assert_eq!(r1[0].peb_m, r2[0].peb_m);
        assert!(r1[0].feasible);
        assert_eq!(r1[0].rank, 7);
    }
}
