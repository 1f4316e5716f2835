use std::f64::consts::PI;

use super::HyperParams;

/// Lower/upper clamp for self-loop probabilities; keeps every transition
/// log-probability finite. Clamping the relative-frequency estimate is the
/// exact constrained maximum, so re-estimation stays monotone.
pub const TRANSITION_FLOOR: f64 = 1e-3;

/// Diagonal-covariance Gaussian with cached normaliser.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: Vec<f64>,
    var: Vec<f64>,
    inv_var: Vec<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Self {
        assert_eq!(mean.len(), var.len());
        let inv_var = var.iter().map(|v| 1.0 / v).collect();
        let log_norm = -0.5 * var.iter().map(|v| (2.0 * PI * v).ln()).sum::<f64>();
        Self {
            mean,
            var,
            inv_var,
            log_norm,
        }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn var(&self) -> &[f64] {
        &self.var
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let mut q = 0.0;
        for ((xi, mi), iv) in x.iter().zip(&self.mean).zip(&self.inv_var) {
            let d = xi - mi;
            q += d * d * iv;
        }
        self.log_norm - 0.5 * q
    }
}

/// Strict left-to-right HMM: state `s` either loops or advances to `s + 1`;
/// advancing from the last state leaves the token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenHmm {
    pub token_id: usize,
    pub states: Vec<Gaussian>,
    /// Self-loop probability per state; the forward probability is its
    /// complement.
    pub self_loop: Vec<f64>,
}

impl TokenHmm {
    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn log_self(&self, s: usize) -> f64 {
        self.self_loop[s].ln()
    }

    pub fn log_forward(&self, s: usize) -> f64 {
        (1.0 - self.self_loop[s]).ln()
    }

    /// Best state path through `frames`, starting in state 0 and leaving
    /// from the last state. Returns the log score (emissions, transitions
    /// and the exit) and the state of every frame.
    ///
    /// Segments shorter than the HMM map frame `i` to state `i * m / L` and
    /// score emissions only.
    pub fn align<'a, F>(&self, len: usize, frame: F) -> (f64, Vec<usize>)
    where
        F: Fn(usize) -> &'a [f64],
    {
        let m = self.num_states();
        if len == 0 {
            return (0.0, Vec::new());
        }
        if len < m {
            let states: Vec<usize> = (0..len).map(|i| i * m / len).collect();
            let score = states
                .iter()
                .enumerate()
                .map(|(i, &s)| self.states[s].log_pdf(frame(i)))
                .sum();
            return (score, states);
        }
        let log_self: Vec<f64> = (0..m).map(|s| self.log_self(s)).collect();
        let log_fwd: Vec<f64> = (0..m).map(|s| self.log_forward(s)).collect();
        let mut delta = vec![f64::NEG_INFINITY; m];
        let mut stay = vec![true; len * m];
        delta[0] = self.states[0].log_pdf(frame(0));
        let mut next = vec![f64::NEG_INFINITY; m];
        for t in 1..len {
            let x = frame(t);
            // states beyond t are unreachable; states before m-(len-t) cannot finish
            let hi = (m - 1).min(t);
            let lo = (m + t).saturating_sub(len);
            for s in 0..m {
                next[s] = f64::NEG_INFINITY;
            }
            for s in lo..=hi {
                let keep = delta[s] + log_self[s];
                let adv = if s > 0 { delta[s - 1] + log_fwd[s - 1] } else { f64::NEG_INFINITY };
                let (best, is_stay) = if keep >= adv { (keep, true) } else { (adv, false) };
                stay[t * m + s] = is_stay;
                next[s] = best + self.states[s].log_pdf(x);
            }
            std::mem::swap(&mut delta, &mut next);
        }
        let score = delta[m - 1] + log_fwd[m - 1];
        let mut states = vec![0; len];
        let mut s = m - 1;
        for t in (0..len).rev() {
            states[t] = s;
            if t > 0 && !stay[t * m + s] {
                s -= 1;
            }
        }
        (score, states)
    }
}

/// All HMMs of one layer plus the token unigram.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSetModel {
    pub psi: HyperParams,
    pub hmms: Vec<TokenHmm>,
    pub token_lm: Vec<f64>,
    pub feature_dim: usize,
    /// Scale on `log token_lm` at every token entry.
    pub lm_weight: f64,
}

impl TokenSetModel {
    pub fn log_lm(&self, token: usize) -> f64 {
        self.lm_weight * self.token_lm[token].ln()
    }
}
