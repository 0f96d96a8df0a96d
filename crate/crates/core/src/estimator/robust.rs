//! Outlier rules and the random-subset robust loop.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::lm::{solve_lm, LmOutcome, LmSettings, MIN_ENTRIES};
use super::residual::{field_cost, predict};
use super::{DisplacementField, ParamVector};
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// Marks as outliers the active entries whose displacement is longer than
/// `max(factor * median, floor)` or whose confidence is below
/// `min_confidence`. Returns how many entries were rejected.
pub fn reject_by_magnitude(
    field: &mut DisplacementField,
    factor: f64,
    floor: f64,
    min_confidence: f64,
) -> usize {
    let lengths: Vec<f64> = field
        .entries()
        .iter()
        .filter(|e| e.is_active())
        .map(|e| e.displacement.magnitude())
        .collect();
    let Some(med) = median(lengths) else { return 0 };
    let limit = (factor * med).max(floor);
    let mut rejected = 0;
    for e in field.entries_mut().iter_mut().filter(|e| e.is_active()) {
        if e.displacement.magnitude() > limit || e.displacement.confidence < min_confidence {
            e.inlier = false;
            rejected += 1;
        }
    }
    rejected
}

/// Marks as outliers the active entries whose displacement deviates from
/// the one `params` predicts by more than `max(factor * median deviation,
/// floor)`. Entries with no prediction are rejected too.
pub fn reject_by_prediction(
    field: &mut DisplacementField,
    params: &ParamVector,
    k: &CameraIntrinsics,
    factor: f64,
    floor: f64,
) -> usize {
    let plane = field.plane().clone();
    let deviation: Vec<Option<f64>> = field
        .entries()
        .iter()
        .map(|e| {
            if !e.is_active() {
                return None;
            }
            let m = predict(&plane, e.anchor, params, k).ok()?;
            Some((m.u - e.anchor.u - e.displacement.dx).hypot(m.v - e.anchor.v - e.displacement.dy))
        })
        .collect();
    let Some(med) = median(deviation.iter().flatten().copied().collect()) else {
        return 0;
    };
    let limit = (factor * med).max(floor);
    let mut rejected = 0;
    for (e, dev) in field.entries_mut().iter_mut().zip(deviation) {
        if e.is_active() && dev.is_none_or(|d| d > limit) {
            e.inlier = false;
            rejected += 1;
        }
    }
    rejected
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustSettings {
    pub subsets: usize,
    /// Fraction of the active entries drawn per subset.
    pub ratio: f64,
    pub seed: u64,
    /// Also offer a solve over every active entry, started from the best
    /// subset candidate.
    pub polish: bool,
    pub lm: LmSettings,
}

impl Default for RobustSettings {
    fn default() -> Self {
        Self {
            subsets: 50,
            ratio: 0.6,
            seed: 0,
            polish: true,
            lm: LmSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustOutcome {
    pub params: ParamVector,
    /// Squared residual sum of the selection over all active entries.
    pub cost: f64,
    pub rms: f64,
    pub inlier_count: usize,
    pub iterations: usize,
    /// Cost over all active entries of each subset candidate, `None` where
    /// the solve failed or left the valid domain.
    pub candidate_costs: Vec<Option<f64>>,
}

/// Solves on random subsets of the active entries and keeps the candidate
/// with the smallest residual over all of them.
pub fn robust_estimate(
    field: &DisplacementField,
    init: &ParamVector,
    k: &CameraIntrinsics,
    settings: &RobustSettings,
) -> Result<RobustOutcome> {
    if !(settings.ratio > 0.0 && settings.ratio <= 1.0) || settings.subsets == 0 {
        return Err(Error::InvalidParameter(format!(
            "robust loop needs subsets >= 1 and ratio in (0, 1], got {} and {}",
            settings.subsets, settings.ratio
        )));
    }
    let active = field.active_indices();
    let n = active.len();
    if n < MIN_ENTRIES {
        return Err(Error::InsufficientInliers {
            needed: MIN_ENTRIES,
            available: n,
        });
    }
    let m = ((settings.ratio * n as f64).round() as usize).clamp(MIN_ENTRIES, n);

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let subsets: Vec<Vec<usize>> = (0..settings.subsets)
        .map(|_| {
            let mut pick: Vec<usize> = sample(&mut rng, n, m)
                .into_iter()
                .map(|i| active[i])
                .collect();
            pick.sort_unstable();
            pick
        })
        .collect();

    let evaluate =
        |out: &LmOutcome| field_cost(field, &active, &out.params, k).map(|c| (c, out.clone()));
    let candidates: Vec<Option<(f64, LmOutcome)>> = subsets
        .par_iter()
        .map(|s| {
            solve_lm(field, s, init, k, &settings.lm)
                .ok()
                .and_then(|o| evaluate(&o))
        })
        .collect();

    let mut best: Option<(f64, LmOutcome)> = None;
    for c in candidates.iter().flatten() {
        if best.as_ref().is_none_or(|b| c.0 < b.0) {
            best = Some(c.clone());
        }
    }
    let Some(mut best) = best else {
        return Err(Error::InsufficientInliers {
            needed: MIN_ENTRIES,
            available: 0,
        });
    };
    if settings.polish {
        if let Some(p) = solve_lm(field, &active, &best.1.params, k, &settings.lm)
            .ok()
            .and_then(|o| evaluate(&o))
        {
            if p.0 < best.0 {
                best = p;
            }
        }
    }

    let (cost, outcome) = best;
    Ok(RobustOutcome {
        params: outcome.params,
        cost,
        rms: (cost / n as f64).sqrt(),
        inlier_count: n,
        iterations: outcome.iterations,
        candidate_costs: candidates
            .into_iter()
            .map(|c| c.map(|(cost, _)| cost))
            .collect(),
    })
}
