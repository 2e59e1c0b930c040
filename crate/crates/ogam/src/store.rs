//! The dynamic candidate-bandwidth store: L aggregated statistic sets, their
//! centroids, and the merge rule that keeps memory independent of the number
//! of processed blocks.

use serde::{Deserialize, Serialize};

use crate::blockstats::SubStatistics;
use crate::error::{OgamError, Result};
use crate::estimate::AdditiveEstimate;
use crate::field::{merge_into, MatField, VecField};

/// One aggregated statistics set: the convex combination, with block weights
/// n_k / N_K, of per-block sub-statistics merged into this slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticsSet {
    pub u: MatField,
    pub v: MatField,
    pub w: MatField,
    pub s: Vec<MatField>,
    pub vb: VecField,
    pub wb: VecField,
    pub bwb: Vec<f64>,
    pub sb: Vec<VecField>,
    pub bsb: Vec<Vec<f64>>,
    pub density: Vec<f64>,
    /// Running moments of the merged bandwidths, per axis: sum w_k eta^l for
    /// l = -1 and l = 2 (used by the bias/variance diagnostics).
    pub rho_m1: Vec<f64>,
    pub rho_2: Vec<f64>,
}

impl StatisticsSet {
    /// A set holding exactly one block's statistics (the w = 1 case).
    pub fn from_sub(sub: &SubStatistics) -> Self {
        StatisticsSet {
            u: sub.u.clone(),
            v: sub.v.clone(),
            w: sub.w.clone(),
            s: sub.s.clone(),
            vb: sub.vb.clone(),
            wb: sub.wb.clone(),
            bwb: sub.bwb.clone(),
            sb: sub.sb.clone(),
            bsb: sub.bsb.clone(),
            density: sub.density.clone(),
            rho_m1: sub.eta.iter().map(|h| 1.0 / h).collect(),
            rho_2: sub.eta.iter().map(|h| h * h).collect(),
        }
    }

    /// `self = (1 - w) self + w fresh`, field by field.
    pub fn merge(&mut self, fresh: &SubStatistics, w: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&w) || w == 0.0 {
            return Err(OgamError::InvalidInput(format!("merge weight {w} outside (0,1]")));
        }
        merge_into(&mut self.u.data, &fresh.u.data, w)?;
        merge_into(&mut self.v.data, &fresh.v.data, w)?;
        merge_into(&mut self.w.data, &fresh.w.data, w)?;
        if self.s.len() != fresh.s.len() {
            return Err(OgamError::ShapeMismatch("S statistic count".into()));
        }
        for (d, s) in self.s.iter_mut().zip(&fresh.s) {
            merge_into(&mut d.data, &s.data, w)?;
        }
        merge_into(&mut self.vb.data, &fresh.vb.data, w)?;
        merge_into(&mut self.wb.data, &fresh.wb.data, w)?;
        merge_into(&mut self.bwb, &fresh.bwb, w)?;
        for (d, s) in self.sb.iter_mut().zip(&fresh.sb) {
            merge_into(&mut d.data, &s.data, w)?;
        }
        for (d, s) in self.bsb.iter_mut().zip(&fresh.bsb) {
            merge_into(d, s, w)?;
        }
        merge_into(&mut self.density, &fresh.density, w)?;
        let fresh_m1: Vec<f64> = fresh.eta.iter().map(|h| 1.0 / h).collect();
        let fresh_2: Vec<f64> = fresh.eta.iter().map(|h| h * h).collect();
        merge_into(&mut self.rho_m1, &fresh_m1, w)?;
        merge_into(&mut self.rho_2, &fresh_2, w)?;
        Ok(())
    }
}

/// Stream-level state: blocks seen, totals, the current estimate, and the L
/// aggregated sets with their candidate/centroid bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    /// Blocks processed so far.
    pub k: usize,
    /// Total observations N_K.
    pub n_total: usize,
    /// Current estimate.
    pub beta: AdditiveEstimate,
    /// Candidate sequence length L.
    pub l: usize,
    /// Aggregated sets, exactly L once any block has been processed.
    pub sets: Vec<StatisticsSet>,
    /// Centroids phi_{K,l}: weighted averages of merged bandwidths.
    pub centroids: Vec<Vec<f64>>,
    /// Candidate bandwidths of the most recent block.
    pub candidates: Vec<Vec<f64>>,
}

impl StreamState {
    pub fn new(beta: AdditiveEstimate, l: usize) -> Self {
        StreamState {
            k: 0,
            n_total: 0,
            beta,
            l,
            sets: Vec::new(),
            centroids: Vec::new(),
            candidates: Vec::new(),
        }
    }

    /// The set used for the next update: the slot whose centroid is closest
    /// to the current leading candidate.
    pub fn selected_set(&self, h: &[f64]) -> Option<(usize, &StatisticsSet)> {
        if self.sets.is_empty() {
            return None;
        }
        let j = match_index(h, &self.centroids);
        Some((j, &self.sets[j]))
    }

    /// Fold a new block into the store: for each slot the previous set is
    /// chosen by centroid matching and merged with the fresh sub-statistics.
    pub fn advance(
        &mut self,
        subs: Vec<SubStatistics>,
        beta_new: AdditiveEstimate,
        n_k: usize,
    ) -> Result<()> {
        if subs.len() != self.l {
            return Err(OgamError::ShapeMismatch(format!(
                "{} candidate sub-statistics for L = {}",
                subs.len(),
                self.l
            )));
        }
        let w = n_k as f64 / (self.n_total + n_k) as f64;
        if self.sets.is_empty() {
            // first block: sets are the fresh statistics, centroids the
            // candidate sequence itself
            self.sets = subs.iter().map(StatisticsSet::from_sub).collect();
            self.centroids = subs.iter().map(|s| s.eta.clone()).collect();
        } else {
            let mut new_sets = Vec::with_capacity(self.l);
            let mut new_centroids = Vec::with_capacity(self.l);
            for sub in &subs {
                let j = match_index(&sub.eta, &self.centroids);
                let mut set = self.sets[j].clone();
                set.merge(sub, w)?;
                let centroid: Vec<f64> = self.centroids[j]
                    .iter()
                    .zip(&sub.eta)
                    .map(|(c, e)| (1.0 - w) * c + w * e)
                    .collect();
                new_sets.push(set);
                new_centroids.push(centroid);
            }
            self.sets = new_sets;
            self.centroids = new_centroids;
        }
        self.candidates = subs.into_iter().map(|s| s.eta).collect();
        self.k += 1;
        self.n_total += n_k;
        self.beta = beta_new;
        Ok(())
    }
}

/// Candidate bandwidth sequence: eta_l = ((L - l + 1) / L)^{1/5} h for
/// l = 1..L, descending with eta_1 = h.
pub fn candidate_sequence(h_tilde: &[f64], l: usize) -> Result<Vec<Vec<f64>>> {
    if l < 1 {
        return Err(OgamError::InvalidInput("candidate length L must be >= 1".into()));
    }
    if h_tilde.iter().any(|&h| h.is_nan() || h <= 0.0) {
        return Err(OgamError::InvalidBandwidth(
            *h_tilde.iter().find(|&&h| h.is_nan() || h <= 0.0).unwrap(),
        ));
    }
    Ok((1..=l)
        .map(|el| {
            let f = ((l - el + 1) as f64 / l as f64).powf(0.2);
            h_tilde.iter().map(|h| f * h).collect()
        })
        .collect())
}

/// Index of the centroid closest in L1 distance; ties break to the smallest
/// index.
pub fn match_index(candidate: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let dist: f64 = candidate.iter().zip(c).map(|(a, b)| (a - b).abs()).sum();
        if dist < best_dist {
            best_dist = dist;
            best = i;
        }
    }
    best
}
