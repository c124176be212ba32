//! Profile-likelihood elbow detection (Zhu & Ghodsi, 2006).
//!
//! A descending sequence is split into a leading group and a trailing group,
//! each modelled as Gaussian with its own mean and a shared variance. The
//! elbow is the size of the leading group that maximises the profile
//! log-likelihood. Further elbows are found by repeating on the tail.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElbowChoice {
    #[default]
    First,
    Second,
}

impl ElbowChoice {
    pub fn count(self) -> usize {
        match self {
            ElbowChoice::First => 1,
            ElbowChoice::Second => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Elbows {
    /// Cumulative positions (1-based sizes of the leading group).
    pub elbows: Vec<usize>,
    /// The input was constant to within `1e-12`.
    pub flat: bool,
}

/// Log-likelihood of splitting `values` after the first `q` entries.
pub fn split_log_likelihood(values: &[f64], q: usize) -> f64 {
    let p = values.len();
    let (head, tail) = values.split_at(q);
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let ss = |s: &[f64], mu: f64| s.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>();
    let mu1 = mean(head);
    let mut rss = ss(head, mu1);
    let mut mu2 = 0.0;
    if !tail.is_empty() {
        mu2 = mean(tail);
        rss += ss(tail, mu2);
    }
    let dof = p as f64 - 1.0 - if q < p { 1.0 } else { 0.0 };
    if rss <= 0.0 {
        return f64::INFINITY;
    }
    if dof <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let sigma2 = rss / dof;
    let norm = -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln();
    let ll = |s: &[f64], mu: f64| {
        s.iter()
            .map(|x| norm - (x - mu) * (x - mu) / (2.0 * sigma2))
            .sum::<f64>()
    };
    ll(head, mu1) + if tail.is_empty() { 0.0 } else { ll(tail, mu2) }
}

fn single_elbow(values: &[f64]) -> usize {
    let p = values.len();
    if p <= 1 {
        return 1;
    }
    let mut best = 1;
    let mut best_ll = f64::NEG_INFINITY;
    for q in 1..=p {
        let ll = split_log_likelihood(values, q);
        if ll > best_ll {
            best_ll = ll;
            best = q;
        }
    }
    best
}

/// Up to `n_elbows` successive elbows of a descending sequence.
pub fn profile_likelihood_elbows(values: &[f64], n_elbows: usize) -> Elbows {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if values.is_empty() || hi - lo <= 1e-12 {
        return Elbows {
            elbows: vec![1; n_elbows.max(1)],
            flat: true,
        };
    }
    let mut elbows = Vec::new();
    let mut offset = 0;
    for _ in 0..n_elbows.max(1) {
        let rest = &values[offset..];
        if rest.len() <= 1 {
            elbows.push(offset.max(1));
            continue;
        }
        let q = single_elbow(rest);
        offset += q;
        elbows.push(offset);
    }
    Elbows { elbows, flat: false }
}
