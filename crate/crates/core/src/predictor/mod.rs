//! Beam prediction from prior low-band CSI.
//!
//! A mmWave beam-training request at time `t` inside the CSI period
//! `[t_n, t_n + T)` is described by the timing offset `eta = (t - t_n)/T`.
//! The model predicts optimal beams at `Gamma` fixed interpolation instants
//! per period and answers a request with the prediction closest in time.

pub mod model;
pub mod train;

pub use model::{BeamPredictor, Preprocess};
pub use train::{train_predictor, TrainReport};

use crate::error::Error;
use crate::Result;

/// Where a beam-training request sits relative to the CSI update grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingContext {
    pub csi_period_s: f64,
    pub last_csi_time_s: f64,
    pub query_time_s: f64,
}

impl TimingContext {
    pub fn new(csi_period_s: f64, last_csi_time_s: f64, query_time_s: f64) -> Self {
        TimingContext { csi_period_s, last_csi_time_s, query_time_s }
    }
}

/// Timing offset indicator `eta = (t - t_n)/T` in `[0, 1)`.
pub fn timing_offset(ctx: &TimingContext) -> Result<f64> {
    let TimingContext { csi_period_s: t_p, last_csi_time_s: t_n, query_time_s: t } = *ctx;
    if !(t_p > 0.0) {
        return Err(Error::invalid("CSI period must be positive"));
    }
    if t < t_n || t >= t_n + t_p {
        return Err(Error::invalid(format!(
            "query instant {t} outside CSI period [{t_n}, {})",
            t_n + t_p
        )));
    }
    Ok((t - t_n) / t_p)
}

/// Nearest interpolation slot to `eta` on the grid `(2g - 1)/(2 Gamma)`,
/// `g = 1..=Gamma`; exact midpoints resolve to the smaller `g`.
pub fn interpolation_index(eta: f64, gamma_count: usize) -> usize {
    debug_assert!((0.0..1.0).contains(&eta));
    debug_assert!(gamma_count >= 1);
    let mut best = 1usize;
    let mut best_dist = f64::INFINITY;
    for g in 1..=gamma_count {
        let grid = (2 * g - 1) as f64 / (2 * gamma_count) as f64;
        let dist = (eta - grid).abs();
        if dist < best_dist {
            best_dist = dist;
            best = g;
        }
    }
    best
}

/// Full prediction for one beam-training request.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionOutput {
    /// One probability vector per interpolation slot, each summing to 1.
    pub probabilities: Vec<Vec<f64>>,
    /// Beam chosen at `gamma_used` (arg-max; ties to the lowest index).
    pub chosen_beam: usize,
    /// 1-based interpolation slot answering this request.
    pub gamma_used: usize,
    /// All beams at `gamma_used` ranked by descending probability; fallback
    /// candidates if the first beam fails.
    pub ranked: Vec<usize>,
}

pub(crate) fn argmax_lowest(probs: &[f64]) -> usize {
    let mut best = 0usize;
    for (i, &p) in probs.iter().enumerate().skip(1) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn rank_descending(probs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap().then(a.cmp(&b)));
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_offset_examples() {
        let t = |t_n: f64, t: f64| timing_offset(&TimingContext::new(0.2, t_n, t)).unwrap();
        assert_eq!(t(0.4, 0.4), 0.0);
        assert!((t(0.4, 0.5) - 0.5).abs() < 1e-12);
        assert!((t(0.4, 0.55) - 0.75).abs() < 1e-12);
        assert!(timing_offset(&TimingContext::new(0.2, 0.4, 0.61)).is_err());
        assert!(timing_offset(&TimingContext::new(0.2, 0.4, 0.39)).is_err());
        // Period end is exclusive (exact dyadic values avoid rounding noise).
        assert!(timing_offset(&TimingContext::new(0.25, 0.5, 0.75)).is_err());
    }

    #[test]
    fn interpolation_grid_and_tie_break() {
        // Gamma = 4 grid: 0.125, 0.375, 0.625, 0.875.
        assert_eq!(interpolation_index(0.1, 4), 1);
        assert_eq!(interpolation_index(0.5, 4), 2, "midpoint ties to the smaller slot");
        assert_eq!(interpolation_index(0.51, 4), 3);
        assert_eq!(interpolation_index(0.99, 4), 4);
        for eta in [0.0, 0.3, 0.77, 0.999] {
            assert_eq!(interpolation_index(eta, 1), 1);
        }
    }

    #[test]
    fn interpolation_instants_for_default_config() {
        // T = 200 ms, Gamma = 4: slots sit at 25/75/125/175 ms.
        let t_period = 0.2;
        let instants: Vec<f64> =
            (1..=4).map(|g| (2 * g - 1) as f64 / 8.0 * t_period).collect();
        for (got, expect) in instants.iter().zip([0.025, 0.075, 0.125, 0.175]) {
            assert!((got - expect).abs() < 1e-15, "{got} vs {expect}");
        }
    }

    #[test]
    fn ranking_breaks_ties_toward_lower_index() {
        let ranked = rank_descending(&[0.2, 0.5, 0.5, 0.1]);
        assert_eq!(ranked, vec![1, 2, 0, 3]);
        assert_eq!(argmax_lowest(&[0.5, 0.5, 0.2]), 0);
    }
}
