//! DFT beam codebooks, beamforming gain, and the exhaustive-sweep oracle.
//!
//! Codebook beams are steering vectors on a uniform sin-angle grid covering
//! `[-1, 1)`; with half-wavelength spacing and size equal to the antenna
//! count they are mutually orthogonal. The sweep oracle is the ground truth
//! every predictor is scored against.

use num_complex::Complex64;

use crate::channel::{ChannelSnapshot, CMat};
use crate::config::{ArrayConfig, Side};
use crate::error::Error;
use crate::Result;

/// A set of unit-norm constant-modulus candidate beams.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub beams: Vec<Vec<Complex64>>,
    pub array: ArrayConfig,
    pub side: Side,
}

impl Codebook {
    pub fn size(&self) -> usize {
        self.beams.len()
    }

    /// Beam pointing angle: `sin(angle) = (2i + 1)/size - 1`.
    pub fn beam_angle(&self, index: usize) -> f64 {
        ((2 * index + 1) as f64 / self.size() as f64 - 1.0).asin()
    }

    /// Nearest beam to an angle, measured on the sin grid.
    pub fn nearest_beam(&self, angle_rad: f64) -> usize {
        let size = self.size() as f64;
        let idx = ((angle_rad.sin() + 1.0) * size - 1.0) / 2.0;
        (idx.round().max(0.0) as usize).min(self.size() - 1)
    }
}

/// Builds the DFT codebook of `size` beams on the uniform sin-angle grid for
/// the given array side.
pub fn dft_codebook(array: &ArrayConfig, size: usize, side: Side) -> Result<Codebook> {
    if size < 1 {
        return Err(Error::invalid("codebook size must be >= 1"));
    }
    let beams = (0..size)
        .map(|i| {
            let angle = ((2 * i + 1) as f64 / size as f64 - 1.0).asin();
            crate::channel::steering_vector(angle, array, side)
        })
        .collect();
    Ok(Codebook { beams, array: array.clone(), side })
}

/// `|w^H H f|`
pub fn beamforming_gain(h: &CMat, f: &[Complex64], w: &[Complex64]) -> Result<f64> {
    if f.len() != h.cols || w.len() != h.rows {
        return Err(Error::shape(format!(
            "beam dims ({}, {}) do not match channel {}x{}",
            w.len(),
            f.len(),
            h.rows,
            h.cols
        )));
    }
    let mut acc = Complex64::new(0.0, 0.0);
    for r in 0..h.rows {
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..h.cols {
            row += h.at(r, c) * f[c];
        }
        acc += w[r].conj() * row;
    }
    Ok(acc.norm())
}

/// Exhaustive sweep over all beam pairs; ties break toward the lowest
/// transmit index, then the lowest receive index.
pub fn sweep_optimal_beam(
    snapshot: &ChannelSnapshot,
    tx_codebook: &Codebook,
    rx_codebook: &Codebook,
) -> Result<(usize, usize, f64)> {
    if tx_codebook.beams.is_empty() || rx_codebook.beams.is_empty() {
        return Err(Error::invalid("codebooks must be non-empty"));
    }
    let mut best = (0usize, 0usize, f64::NEG_INFINITY);
    for (ti, f) in tx_codebook.beams.iter().enumerate() {
        for (ri, w) in rx_codebook.beams.iter().enumerate() {
            let gain = beamforming_gain(&snapshot.matrix, f, w)?;
            if gain > best.2 {
                best = (ti, ri, gain);
            }
        }
    }
    Ok(best)
}

/// Beamforming gain ratio of a predicted transmit beam against the sweep
/// optimum, using the trivial single-antenna receive beam of `rx_codebook`.
pub fn gain_ratio(
    snapshot: &ChannelSnapshot,
    predicted_tx: usize,
    optimal_tx: usize,
    tx_codebook: &Codebook,
    rx_codebook: &Codebook,
) -> Result<f64> {
    let w = &rx_codebook.beams[0];
    let num = beamforming_gain(&snapshot.matrix, &tx_codebook.beams[predicted_tx], w)?;
    let den = beamforming_gain(&snapshot.matrix, &tx_codebook.beams[optimal_tx], w)?;
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(num / den)
}

/// The single-beam codebook of an `N = 1` receiver.
pub fn trivial_rx_codebook(array: &ArrayConfig) -> Codebook {
    let n = array.num_rx_antennas;
    let norm = 1.0 / (n as f64).sqrt();
    Codebook {
        beams: vec![vec![Complex64::new(norm, 0.0); n]],
        array: array.clone(),
        side: Side::Rx,
    }
}
