//! Air-to-ground propagation (3GPP aerial UE model).
//!
//! Path losses are in dB with the carrier frequency in GHz. The mean path
//! loss mixes the LoS and NLoS dB values linearly with the LoS probability.

use rand::Rng;

use crate::config::{FadingKind, LosMode};
use crate::error::ChannelError;

/// Altitude below which the LoS probability parameter `p1` is not positive.
pub const MIN_ALTITUDE: f64 = 1.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub d3d: f64,
    pub h: f64,
    pub r2d: f64,
}

impl LinkGeometry {
    /// Build from a 3-D distance and altitude. Rounding that puts `d3d`
    /// marginally below `h` yields `r2d = 0`.
    pub fn new(d3d: f64, h: f64) -> Result<Self, ChannelError> {
        if !(h >= MIN_ALTITUDE) || !h.is_finite() {
            return Err(ChannelError::Altitude(h));
        }
        if !(d3d > 0.0) || !d3d.is_finite() {
            return Err(ChannelError::Distance(d3d));
        }
        let r2d = (d3d * d3d - h * h).max(0.0).sqrt();
        Ok(LinkGeometry { d3d, h, r2d })
    }

    pub fn from_offsets(r2d: f64, h: f64) -> Result<Self, ChannelError> {
        if !(r2d >= 0.0) {
            return Err(ChannelError::Distance(r2d));
        }
        let d3d = r2d.hypot(h);
        let mut geom = LinkGeometry::new(d3d, h)?;
        geom.r2d = r2d;
        Ok(geom)
    }
}

pub fn pathloss_los(geom: &LinkGeometry, fc_ghz: f64) -> f64 {
    30.9 + (22.25 - 0.5 * geom.h.log10()) * geom.d3d.log10() + 20.0 * fc_ghz.log10()
}

pub fn pathloss_nlos(geom: &LinkGeometry, fc_ghz: f64) -> f64 {
    let nlos = 32.4 + (43.2 - 7.6 * geom.h.log10()) * geom.d3d.log10() + 20.0 * fc_ghz.log10();
    pathloss_los(geom, fc_ghz).max(nlos)
}

/// Breakpoint distance `d0` and decay parameter `p1` for altitude `h`.
pub fn los_parameters(h: f64) -> (f64, f64) {
    let lh = h.log10();
    let d0 = (294.05 * lh - 432.94).max(18.0);
    let p1 = 233.98 * lh - 0.95;
    (d0, p1)
}

pub fn p_los(geom: &LinkGeometry, mode: LosMode) -> Result<f64, ChannelError> {
    let (d0, p1) = los_parameters(geom.h);
    if p1 <= 0.0 {
        return Err(ChannelError::Altitude(geom.h));
    }
    let r = geom.r2d;
    if r <= d0 {
        return Ok(1.0);
    }
    let decay = (-r / p1 + d0 / p1).exp();
    let p = match mode {
        LosMode::AsPrintedClamped => d0 / r + decay,
        LosMode::Corrected => d0 / r + decay * (1.0 - d0 / r),
    };
    Ok(p.clamp(0.0, 1.0))
}

/// LoS-probability-weighted mixture of the two path losses, in dB.
pub fn mean_pathloss(geom: &LinkGeometry, fc_ghz: f64, mode: LosMode) -> Result<f64, ChannelError> {
    let p = p_los(geom, mode)?;
    Ok(p * pathloss_los(geom, fc_ghz) + (1.0 - p) * pathloss_nlos(geom, fc_ghz))
}

/// Draw the small-scale power fading coefficient `H`.
pub fn sample_fading<R: Rng + ?Sized>(kind: FadingKind, rng: &mut R) -> f64 {
    match kind {
        FadingKind::Deterministic => 1.0,
        FadingKind::RayleighPower => {
            // Exp(1) by inversion; 1 - U lies in (0, 1].
            let u: f64 = rng.random();
            let h = -(1.0 - u).ln();
            h.max(f64::MIN_POSITIVE)
        }
    }
}

/// Linear power gain `H · 10^(−L/10)`.
pub fn gain_from_loss(mean_loss_db: f64, fading: f64) -> f64 {
    fading * 10f64.powf(-mean_loss_db / 10.0)
}

pub fn channel_gain<R: Rng + ?Sized>(
    geom: &LinkGeometry,
    fc_ghz: f64,
    mode: LosMode,
    fading: FadingKind,
    rng: &mut R,
) -> Result<f64, ChannelError> {
    let loss = mean_pathloss(geom, fc_ghz, mode)?;
    Ok(gain_from_loss(loss, sample_fading(fading, rng)))
}
