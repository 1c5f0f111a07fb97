//! Direct and RIS-reflected channel gains, composite SNR and offload rate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, invalid, Result};
use crate::geometry::{distance, sin_angle_to_ris, Position3D, ScenarioLayout};

/// Large- and small-scale fading parameters shared by all links.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FadingParams {
    /// Linear path loss at the 1 m reference distance.
    pub rho: f64,
    /// Path-loss exponent of the (obstructed) direct vehicle-BS link.
    pub alpha_kb: f64,
    pub alpha_rb: f64,
    pub alpha_kr: f64,
    pub rician_factor: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Spacing between adjacent RIS elements in meters.
    pub element_spacing: f64,
    /// Thermal noise power in watts.
    pub noise_power: f64,
    /// Sub-channel bandwidth in hertz.
    pub bandwidth: f64,
}

impl Default for FadingParams {
    fn default() -> Self {
        let wavelength = 299_792_458.0 / 2.0e9;
        Self {
            rho: 1e-2,
            alpha_kb: 5.6,
            alpha_rb: 2.5,
            alpha_kr: 2.2,
            rician_factor: 10.0,
            wavelength,
            element_spacing: wavelength / 2.0,
            // -110 dBm
            noise_power: 1e-14,
            bandwidth: 1e6,
        }
    }
}

impl FadingParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.rho,
            self.wavelength,
            self.element_spacing,
            self.noise_power,
            self.bandwidth,
            self.rician_factor,
        ];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("fading parameters must be positive and finite"));
        }
        if [self.alpha_kb, self.alpha_rb, self.alpha_kr].iter().any(|a| !(*a >= 2.0)) {
            return Err(invalid("path-loss exponents must be at least 2"));
        }
        Ok(())
    }
}

/// Quantized RIS configuration: element `n` applies `beta[n] * exp(j * 2*pi*indices[n] / 2^bits)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseConfig {
    indices: Vec<u32>,
    bits: u32,
    amplitudes: Vec<f64>,
}

impl PhaseConfig {
    pub fn new(indices: Vec<u32>, bits: u32, amplitudes: Vec<f64>) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(invalid(format!("phase resolution must be 1..=16 bits, got {bits}")));
        }
        ensure_len(indices.len(), amplitudes.len())?;
        let levels = 1u32 << bits;
        if let Some(i) = indices.iter().find(|&&i| i >= levels) {
            return Err(invalid(format!("phase index {i} out of range for {bits} bits")));
        }
        if amplitudes.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(invalid("reflection amplitudes must lie in [0, 1]"));
        }
        Ok(Self { indices, bits, amplitudes })
    }

    /// Lossless reflection (all amplitudes one).
    pub fn lossless(indices: Vec<u32>, bits: u32) -> Result<Self> {
        let n = indices.len();
        Self::new(indices, bits, vec![1.0; n])
    }

    pub fn zeros(n: usize, bits: u32) -> Result<Self> {
        Self::lossless(vec![0; n], bits)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn phase(&self, n: usize) -> f64 {
        2.0 * PI * f64::from(self.indices[n]) / f64::from(self.levels())
    }

    pub fn phases(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|n| self.phase(n))
    }

    /// Enumerates every lossless configuration of `n` elements, index 0 varying fastest.
    pub fn enumerate(n: usize, bits: u32) -> impl Iterator<Item = PhaseConfig> {
        let levels = 1u64 << bits;
        let total = levels.pow(n as u32);
        (0..total).map(move |mut code| {
            let indices = (0..n)
                .map(|_| {
                    let i = (code % levels) as u32;
                    code /= levels;
                    i
                })
                .collect();
            PhaseConfig::lossless(indices, bits).expect("enumerated indices are in range")
        })
    }
}

/// Channels seen by one vehicle in one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// Direct vehicle-BS gain.
    pub direct: Complex64,
    /// Vehicle-RIS gains, one per element.
    pub vu_ris: Vec<Complex64>,
    /// RIS-BS gains, one per element.
    pub ris_bs: Vec<Complex64>,
}

/// Uniform linear array response `exp(-j 2pi/lambda * n * d_r * sin_theta)`.
pub fn los_steering(n: usize, spacing: f64, wavelength: f64, sin_theta: f64) -> Vec<Complex64> {
    let step = -2.0 * PI / wavelength * spacing * sin_theta;
    (0..n).map(|i| Complex64::from_polar(1.0, step * i as f64)).collect()
}

fn path_amplitude(rho: f64, d: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid(format!("link distance must be positive, got {d}")));
    }
    Ok((rho * d.powf(-alpha)).sqrt())
}

pub fn direct_gain(rho: f64, d: f64, alpha: f64, g: Complex64) -> Result<Complex64> {
    Ok(g * path_amplitude(rho, d, alpha)?)
}

/// Pure line-of-sight Rician link: path amplitude times `sqrt(R/(1+R))` times the steering vector.
pub fn rician_los_gain(
    rho: f64,
    d: f64,
    alpha: f64,
    rician_factor: f64,
    steering: &[Complex64],
) -> Result<Vec<Complex64>> {
    if !(rician_factor >= 0.0) {
        return Err(invalid("Rician factor must be non-negative"));
    }
    let scale = path_amplitude(rho, d, alpha)? * rician_los_scale(rician_factor);
    Ok(steering.iter().map(|s| s * scale).collect())
}

fn rician_los_scale(r: f64) -> f64 {
    if r.is_infinite() {
        1.0
    } else {
        (r / (1.0 + r)).sqrt()
    }
}

/// Cascaded RIS term `h_rb^H * Theta * h_kr`.
pub fn phase_matrix_apply(
    cfg: &PhaseConfig,
    ris_bs: &[Complex64],
    vu_ris: &[Complex64],
) -> Result<Complex64> {
    ensure_len(cfg.len(), ris_bs.len())?;
    ensure_len(cfg.len(), vu_ris.len())?;
    Ok(ris_bs
        .iter()
        .zip(vu_ris)
        .enumerate()
        .map(|(n, (rb, kr))| rb.conj() * Complex64::from_polar(cfg.amplitudes[n], cfg.phase(n)) * kr)
        .sum())
}

/// Received SNR. `cfg = None` removes the RIS path entirely.
pub fn snr(p_offload: f64, cs: &ChannelSet, cfg: Option<&PhaseConfig>, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(invalid("noise power must be positive"));
    }
    if !(p_offload >= 0.0) {
        return Err(invalid("offload power must be non-negative"));
    }
    let reflected = match cfg {
        Some(cfg) => phase_matrix_apply(cfg, &cs.ris_bs, &cs.vu_ris)?,
        None => Complex64::new(0.0, 0.0),
    };
    Ok(p_offload * (reflected + cs.direct).norm_sqr() / noise_power)
}

/// Bits delivered in one slot at spectral efficiency `log2(1 + gamma)`.
pub fn rate_bits(gamma: f64, bandwidth: f64, dt: f64) -> f64 {
    dt * bandwidth * (1.0 + gamma.max(0.0)).log2()
}

/// Small-scale draw with unit-mean exponential power and uniform phase.
pub fn sample_small_scale<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let power: f64 = Exp1.sample(rng);
    let phase = rng.random_range(0.0..(2.0 * PI));
    Complex64::from_polar(power.sqrt(), phase)
}

/// Geometry-bound channel generator for an `n`-element RIS.
///
/// The RIS-BS link is static and computed once.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    params: FadingParams,
    bs: Position3D,
    ris: Position3D,
    ris_bs: Vec<Complex64>,
}

impl ChannelModel {
    pub fn new(params: FadingParams, layout: &ScenarioLayout, elements: usize) -> Result<Self> {
        params.validate()?;
        if elements == 0 {
            return Err(invalid("RIS needs at least one element"));
        }
        let sin_rb = sin_angle_to_ris(&layout.bs, &layout.ris)?;
        let steering = los_steering(elements, params.element_spacing, params.wavelength, sin_rb);
        let ris_bs = rician_los_gain(
            params.rho,
            distance(&layout.ris, &layout.bs),
            params.alpha_rb,
            params.rician_factor,
            &steering,
        )?;
        Ok(Self { params, bs: layout.bs, ris: layout.ris, ris_bs })
    }

    pub fn params(&self) -> &FadingParams {
        &self.params
    }

    pub fn elements(&self) -> usize {
        self.ris_bs.len()
    }

    pub fn ris_bs(&self) -> &[Complex64] {
        &self.ris_bs
    }

    /// Channels for a vehicle at `pos` given its small-scale draw `g`.
    pub fn channels(&self, pos: &Position3D, g: Complex64) -> Result<ChannelSet> {
        let p = &self.params;
        let direct = direct_gain(p.rho, distance(pos, &self.bs), p.alpha_kb, g)?;
        let sin_kr = sin_angle_to_ris(pos, &self.ris)?;
        let steering = los_steering(self.elements(), p.element_spacing, p.wavelength, sin_kr);
        let vu_ris = rician_los_gain(
            p.rho,
            distance(pos, &self.ris),
            p.alpha_kr,
            p.rician_factor,
            &steering,
        )?;
        Ok(ChannelSet { direct, vu_ris, ris_bs: self.ris_bs.clone() })
    }
}

/// Mean spectral efficiency `mean_k log2(1 + gamma_k)` of every vehicle at
/// power `p_offload`, maximized over all `2^(bits*N)` configurations.
/// Returns the best mean and the configuration achieving it.
pub fn exhaustive_best_config(
    channels: &[ChannelSet],
    bits: u32,
    p_offload: f64,
    noise_power: f64,
) -> Result<(f64, PhaseConfig)> {
    let n = channels.first().map(|c| c.ris_bs.len()).ok_or_else(|| invalid("no channels"))?;
    let mut best: Option<(f64, PhaseConfig)> = None;
    for cfg in PhaseConfig::enumerate(n, bits) {
        let mut total = 0.0;
        for cs in channels {
            total += (1.0 + snr(p_offload, cs, Some(&cfg), noise_power)?).log2();
        }
        let mean = total / channels.len() as f64;
        if best.as_ref().is_none_or(|(b, _)| mean > *b) {
            best = Some((mean, cfg));
        }
    }
    Ok(best.expect("at least one configuration"))
}
