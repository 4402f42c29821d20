//! Single underwater visible-light link: geometric/attenuation path loss,
//! log-normal turbulence fading and the built-in log-amplitude variance
//! tables.
//!
//! The fading coefficient is `I = exp(2x)` with `x ~ Normal(mu_x, sigma_x^2)`.
//! Two conventions for `mu_x` are supported, see [`Normalization`].

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::BufRead;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-amplitude variances below this are treated as a deterministic link.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Water column properties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterProfile {
    pub temperature_c: f64,
    pub salinity_ppt: f64,
    pub absorption: Option<f64>,
    pub scattering: Option<f64>,
    pub extinction: f64,
    pub correction: f64,
    /// Dissipation rate of mean-squared temperature, K^2 s^-3.
    pub thermal_dissipation: f64,
    /// Dissipation rate of turbulent kinetic energy per unit mass, m^2 s^-3.
    pub kinetic_dissipation: f64,
}

impl WaterProfile {
    /// Clear ocean at 20 °C and 35 PPT.
    pub fn clear_ocean() -> Self {
        WaterProfile {
            temperature_c: 20.0,
            salinity_ppt: 35.0,
            absorption: None,
            scattering: None,
            extinction: 0.15,
            correction: 0.05,
            thermal_dissipation: 1e-3,
            kinetic_dissipation: 1e-2,
        }
    }

    pub fn with_extinction(extinction: f64, correction: f64) -> Result<Self> {
        let w = WaterProfile {
            extinction,
            correction,
            ..Self::clear_ocean()
        };
        w.validate()?;
        Ok(w)
    }

    pub fn with_absorption_scattering(a: f64, b: f64, correction: f64) -> Result<Self> {
        if !(a >= 0.0 && b >= 0.0) {
            return Err(Error::domain("absorption and scattering must be non-negative"));
        }
        let w = WaterProfile {
            absorption: Some(a),
            scattering: Some(b),
            extinction: a + b,
            correction,
            ..Self::clear_ocean()
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.extinction > 0.0) {
            return Err(Error::domain("extinction coefficient must be positive"));
        }
        if !(0.0..1.0).contains(&self.correction) {
            return Err(Error::domain("correction coefficient must lie in [0, 1)"));
        }
        if !(self.salinity_ppt >= 0.0) {
            return Err(Error::domain("salinity must be non-negative"));
        }
        if let (Some(a), Some(b)) = (self.absorption, self.scattering) {
            if ((a + b) - self.extinction).abs() > 1e-12 * self.extinction.max(1.0) {
                return Err(Error::domain("extinction must equal absorption + scattering"));
            }
        }
        Ok(())
    }
}

impl Default for WaterProfile {
    fn default() -> Self {
        Self::clear_ocean()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    pub distance_m: f64,
    pub aperture_m: f64,
    /// Full-width beam divergence in radians.
    pub divergence_rad: f64,
}

impl LinkGeometry {
    pub fn new(distance_m: f64, aperture_m: f64, divergence_rad: f64) -> Result<Self> {
        let g = LinkGeometry {
            distance_m,
            aperture_m,
            divergence_rad,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn from_degrees(distance_m: f64, aperture_m: f64, divergence_deg: f64) -> Result<Self> {
        Self::new(distance_m, aperture_m, divergence_deg.to_radians())
    }

    /// 5 cm aperture, 6° beam.
    pub fn default_at(distance_m: f64) -> Result<Self> {
        Self::from_degrees(distance_m, 0.05, 6.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.distance_m > 0.0) {
            return Err(Error::domain("link distance must be positive"));
        }
        if !(self.aperture_m > 0.0) {
            return Err(Error::domain("aperture diameter must be positive"));
        }
        if !(self.divergence_rad > 0.0 && self.divergence_rad < PI) {
            return Err(Error::domain("beam divergence must lie in (0, pi)"));
        }
        Ok(())
    }
}

/// Deterministic mean channel gain of a semi-collimated link.
///
/// Evaluated as `D^2 θ^-2 d^-2 exp(-c D^2 θ^-2 d^(1-T))`, with the
/// aperture/divergence ratio kept inside the exponent.
pub fn path_loss(geom: &LinkGeometry, water: &WaterProfile) -> Result<f64> {
    geom.validate()?;
    water.validate()?;
    let spread = (geom.aperture_m / geom.divergence_rad).powi(2);
    let d = geom.distance_m;
    Ok(spread / (d * d) * (-water.extinction * spread * d.powf(1.0 - water.correction)).exp())
}

pub fn sigma_x_from_scintillation(scintillation_index: f64) -> Result<f64> {
    if !(scintillation_index >= 0.0) {
        return Err(Error::domain("scintillation index must be non-negative"));
    }
    Ok(0.25 * scintillation_index.ln_1p())
}

/// Inverse of [`sigma_x_from_scintillation`].
pub fn scintillation_from_sigma_x(sigma_x2: f64) -> Result<f64> {
    if !(sigma_x2 >= 0.0) {
        return Err(Error::domain("log-amplitude variance must be non-negative"));
    }
    Ok((4.0 * sigma_x2).exp_m1())
}

/// How the log-amplitude mean is tied to its variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `mu_x = -sigma_x^2`, which gives `E[I] = 1`.
    #[default]
    UnitMean,
    /// `mu_x = -sigma_x^2 / 2`; `E[I] = exp(sigma_x^2)`.
    PaperLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingModel {
    log_amp_variance: f64,
    log_amp_mean: f64,
    scintillation_index: f64,
    normalization: Normalization,
}

impl FadingModel {
    pub fn from_log_amp_variance(sigma_x2: f64, normalization: Normalization) -> Result<Self> {
        if !(sigma_x2 >= 0.0) || !sigma_x2.is_finite() {
            return Err(Error::domain("log-amplitude variance must be finite and non-negative"));
        }
        let s = if sigma_x2 < SIGMA_FLOOR { 0.0 } else { sigma_x2 };
        let mean = match normalization {
            Normalization::UnitMean => -s,
            Normalization::PaperLiteral => -s / 2.0,
        };
        Ok(FadingModel {
            log_amp_variance: s,
            log_amp_mean: mean,
            scintillation_index: scintillation_from_sigma_x(s)?,
            normalization,
        })
    }

    pub fn from_scintillation(scintillation_index: f64, normalization: Normalization) -> Result<Self> {
        let s = sigma_x_from_scintillation(scintillation_index)?;
        let mut m = Self::from_log_amp_variance(s, normalization)?;
        if m.log_amp_variance > 0.0 {
            m.scintillation_index = scintillation_index;
        }
        Ok(m)
    }

    /// A link without turbulence (`I = 1`).
    pub fn deterministic() -> Self {
        FadingModel {
            log_amp_variance: 0.0,
            log_amp_mean: 0.0,
            scintillation_index: 0.0,
            normalization: Normalization::UnitMean,
        }
    }

    pub fn log_amp_variance(&self) -> f64 {
        self.log_amp_variance
    }

    pub fn log_amp_mean(&self) -> f64 {
        self.log_amp_mean
    }

    pub fn scintillation_index(&self) -> f64 {
        self.scintillation_index
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_deterministic(&self) -> bool {
        self.log_amp_variance == 0.0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.is_deterministic() {
            return (2.0 * self.log_amp_mean).exp();
        }
        let z: f64 = rng.sample(StandardNormal);
        (2.0 * (self.log_amp_mean + self.log_amp_variance.sqrt() * z)).exp()
    }

    pub fn pdf(&self, intensity: f64) -> Result<f64> {
        if !(intensity > 0.0) {
            return Err(Error::domain("intensity must be positive"));
        }
        if self.is_deterministic() {
            return Err(Error::domain("density undefined for a deterministic link"));
        }
        let var = 4.0 * self.log_amp_variance;
        let dev = intensity.ln() - 2.0 * self.log_amp_mean;
        Ok((-dev * dev / (2.0 * var)).exp() / (intensity * (2.0 * PI * var).sqrt()))
    }

    pub fn cdf(&self, intensity: f64) -> f64 {
        if intensity <= 0.0 {
            return 0.0;
        }
        let mode_point = (2.0 * self.log_amp_mean).exp();
        if self.is_deterministic() {
            return if intensity >= mode_point { 1.0 } else { 0.0 };
        }
        let z = (intensity.ln() - 2.0 * self.log_amp_mean) / (4.0 * self.log_amp_variance).sqrt();
        0.5 * erfc(-z / std::f64::consts::SQRT_2)
    }

    /// Location of the density maximum.
    pub fn mode(&self) -> f64 {
        (2.0 * self.log_amp_mean - 4.0 * self.log_amp_variance).exp()
    }

    pub fn moments(&self) -> LinkMoments {
        LinkMoments {
            mean: (2.0 * self.log_amp_mean + 2.0 * self.log_amp_variance).exp(),
            second: (4.0 * self.log_amp_mean + 8.0 * self.log_amp_variance).exp(),
        }
    }
}

/// First and second raw moments of a fading coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkMoments {
    pub mean: f64,
    pub second: f64,
}

impl LinkMoments {
    pub fn variance(&self) -> f64 {
        (self.second - self.mean * self.mean).max(0.0)
    }
}

pub fn link_moments(model: &FadingModel) -> LinkMoments {
    model.moments()
}

// Complementary error function, W. J. Cody's rational approximations
// (relative error below 1e-15 on the real line).
fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 0.5 {
        return 1.0 - erf_small(x);
    }
    if x < 4.0 {
        const P: [f64; 9] = [
            5.641_884_969_886_701e-1,
            8.883_149_794_388_376,
            6.611_919_063_714_163e1,
            2.986_351_381_974_001e2,
            8.819_522_212_417_69e2,
            1.712_047_612_634_070_7e3,
            2.051_078_377_826_071_6e3,
            1.230_339_354_797_997_2e3,
            2.153_115_354_744_038_3e-8,
        ];
        const Q: [f64; 8] = [
            1.574_492_611_070_983_5e1,
            1.176_939_508_913_125e2,
            5.371_811_018_620_099e2,
            1.621_389_574_566_690_3e3,
            3.290_799_235_733_459_7e3,
            4.362_619_090_143_247e3,
            3.439_367_674_143_721_6e3,
            1.230_339_354_803_749_5e3,
        ];
        let mut num = P[8] * x;
        let mut den = x;
        for i in 0..7 {
            num = (num + P[i]) * x;
            den = (den + Q[i]) * x;
        }
        let r = (num + P[7]) / (den + Q[7]);
        return r * (-x * x).exp();
    }
    const P: [f64; 6] = [
        3.053_266_349_612_323e-1,
        3.603_448_999_498_044e-1,
        1.257_817_261_112_292_6e-1,
        1.608_378_514_874_227_5e-2,
        6.587_491_615_298_378e-4,
        1.631_538_713_730_709_6e-2,
    ];
    const Q: [f64; 5] = [
        2.568_520_192_289_822,
        1.872_952_849_923_460_4,
        5.279_051_029_514_285e-1,
        6.051_834_131_244_132e-2,
        2.335_204_976_268_691_8e-3,
    ];
    let z = 1.0 / (x * x);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let mut r = z * (num + P[4]) / (den + Q[4]);
    r = (1.0 / std::f64::consts::PI.sqrt() - r) / x;
    r * (-x * x).exp()
}

fn erf_small(x: f64) -> f64 {
    const A: [f64; 5] = [
        3.161_123_743_870_565_6,
        1.138_641_541_510_501_6e2,
        3.774_852_376_853_020_4e2,
        3.209_377_589_138_469_4e3,
        1.857_777_061_846_031_5e-1,
    ];
    const B: [f64; 4] = [
        2.360_129_095_234_412e1,
        2.440_246_379_344_441_7e2,
        1.282_616_526_077_372_3e3,
        2.844_236_833_439_170_6e3,
    ];
    let z = x * x;
    let mut num = A[4] * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + A[i]) * z;
        den = (den + B[i]) * z;
    }
    x * (num + A[3]) / (den + B[3])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Exact,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaterEntry {
    pub temperature_c: f64,
    pub salinity_ppt: f64,
    pub sigma_x2: f64,
}

/// Log-amplitude variances indexed by link distance and by water condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceTable {
    by_distance: Vec<(f64, f64)>,
    by_water: Vec<WaterEntry>,
}

const DISTANCE_TABLE: [(f64, f64); 20] = [
    (1.0, 1.07e-3),
    (2.0, 3.5e-3),
    (3.0, 6.97e-3),
    (4.0, 1.13e-2),
    (5.0, 1.64e-2),
    (6.0, 2.22e-2),
    (7.0, 2.85e-2),
    (8.0, 3.54e-2),
    (9.0, 4.27e-2),
    (10.0, 5.04e-2),
    (11.0, 5.84e-2),
    (12.0, 6.67e-2),
    (13.0, 7.52e-2),
    (14.0, 8.39e-2),
    (15.0, 9.28e-2),
    (16.0, 1.02e-1),
    (17.0, 1.11e-1),
    (18.0, 1.2e-1),
    (19.0, 1.29e-1),
    (20.0, 1.38e-1),
];

const WATER_TABLE: [(f64, f64, f64); 4] = [
    (1.0, 35.0, 8.04e-5),
    (28.0, 35.0, 1.57e-3),
    (20.0, 33.0, 1.04e-3),
    (20.0, 36.5, 1.09e-3),
];

pub const DISTANCE_CSV_HEADER: &str = "distance_m,sigma_x2";
pub const WATER_CSV_HEADER: &str = "temp_c,salinity_ppt,sigma_x2";

impl VarianceTable {
    /// Variances for clear ocean at 20 °C / 35 PPT over 1..=20 m, and for
    /// four temperature/salinity settings at 1 m.
    pub fn builtin() -> Self {
        VarianceTable {
            by_distance: DISTANCE_TABLE.to_vec(),
            by_water: WATER_TABLE
                .iter()
                .map(|&(t, s, v)| WaterEntry {
                    temperature_c: t,
                    salinity_ppt: s,
                    sigma_x2: v,
                })
                .collect(),
        }
    }

    pub fn new(by_distance: Vec<(f64, f64)>, by_water: Vec<WaterEntry>) -> Result<Self> {
        for w in by_distance.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(Error::domain("distances must be strictly increasing"));
            }
        }
        if by_distance.iter().any(|&(d, v)| !(d > 0.0 && v > 0.0))
            || by_water.iter().any(|w| !(w.sigma_x2 > 0.0))
        {
            return Err(Error::domain("table entries must be positive"));
        }
        Ok(VarianceTable {
            by_distance,
            by_water,
        })
    }

    pub fn by_distance(&self) -> &[(f64, f64)] {
        &self.by_distance
    }

    pub fn by_water(&self) -> &[WaterEntry] {
        &self.by_water
    }

    pub fn lookup_by_distance(&self, d: f64, interp: Interpolation) -> Result<f64> {
        let (first, last) = match (self.by_distance.first(), self.by_distance.last()) {
            (Some(f), Some(l)) => (f.0, l.0),
            _ => return Err(Error::MissingKey(format!("distance {d} m (empty table)"))),
        };
        match interp {
            Interpolation::Exact => self
                .by_distance
                .iter()
                .find(|&&(k, _)| k == d)
                .map(|&(_, v)| v)
                .ok_or_else(|| Error::MissingKey(format!("distance {d} m"))),
            Interpolation::Linear => {
                if !(d >= first && d <= last) {
                    return Err(Error::OutOfRange {
                        value: d,
                        min: first,
                        max: last,
                    });
                }
                let idx = self.by_distance.partition_point(|&(k, _)| k < d);
                let (d1, v1) = self.by_distance[idx];
                if d1 == d || idx == 0 {
                    return Ok(v1);
                }
                let (d0, v0) = self.by_distance[idx - 1];
                Ok(v0 + (v1 - v0) * (d - d0) / (d1 - d0))
            }
        }
    }

    pub fn lookup_by_water(&self, temperature_c: f64, salinity_ppt: f64) -> Result<f64> {
        self.by_water
            .iter()
            .find(|w| w.temperature_c == temperature_c && w.salinity_ppt == salinity_ppt)
            .map(|w| w.sigma_x2)
            .ok_or_else(|| Error::MissingKey(format!("{temperature_c} °C / {salinity_ppt} PPT")))
    }

    pub fn distance_csv(&self) -> String {
        let mut out = String::from(DISTANCE_CSV_HEADER);
        out.push('\n');
        for &(d, v) in &self.by_distance {
            let _ = writeln!(out, "{d},{v}");
        }
        out
    }

    pub fn water_csv(&self) -> String {
        let mut out = String::from(WATER_CSV_HEADER);
        out.push('\n');
        for w in &self.by_water {
            let _ = writeln!(out, "{},{},{}", w.temperature_c, w.salinity_ppt, w.sigma_x2);
        }
        out
    }

    pub fn from_csv<R1: BufRead, R2: BufRead>(distance: R1, water: R2) -> Result<Self> {
        let by_distance = read_csv_rows(distance, DISTANCE_CSV_HEADER, 2)?
            .into_iter()
            .map(|r| (r[0], r[1]))
            .collect();
        let by_water = read_csv_rows(water, WATER_CSV_HEADER, 3)?
            .into_iter()
            .map(|r| WaterEntry {
                temperature_c: r[0],
                salinity_ppt: r[1],
                sigma_x2: r[2],
            })
            .collect();
        Self::new(by_distance, by_water)
    }

    /// Human-readable listing of both tables.
    pub fn render(&self) -> String {
        let mut out = String::from("# log-amplitude variance by distance (20 °C, 35 PPT)\n");
        out.push_str("# distance_m, sigma_x2\n");
        for &(d, v) in &self.by_distance {
            let _ = writeln!(out, "{d}, {v:e}");
        }
        out.push_str("\n# log-amplitude variance by water condition (1 m)\n");
        out.push_str("# temp_c, salinity_ppt, sigma_x2\n");
        for w in &self.by_water {
            let _ = writeln!(out, "{}, {}, {:e}", w.temperature_c, w.salinity_ppt, w.sigma_x2);
        }
        out
    }
}

fn read_csv_rows<R: BufRead>(reader: R, header: &str, width: usize) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    let mut saw_header = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if !saw_header {
            if line != header {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("expected header `{header}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
        if row.len() != width {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("expected {width} fields, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if !saw_header {
        return Err(Error::Parse {
            line: 0,
            msg: "missing header row".into(),
        });
    }
    Ok(rows)
}
