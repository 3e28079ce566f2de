//! Gaussian Markov laws carried by full time paths.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Law {
    /// Brownian motion with drift, equal to 0 at the initial vertex.
    Wiener { drift: f64 },
    /// Two-sided Brownian motion with drift, pinned to 0 at time 0; the two
    /// sides are independent.
    PinnedTwoSided { drift: f64 },
}

impl Default for Law {
    fn default() -> Self {
        Law::Wiener { drift: 0.0 }
    }
}

/// A neighbour already known when a new point is inserted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Anchor {
    /// A sampled point with its time.
    Point { time: f64 },
    /// A time at which the law is deterministic (value 0).
    Zero { time: f64 },
}

impl Anchor {
    pub fn time(self) -> f64 {
        match self {
            Anchor::Point { time } | Anchor::Zero { time } => time,
        }
    }
}

/// `X(r) = w_lo X(lo) + w_hi X(hi) + intercept + sqrt(var) Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conditional {
    pub w_lo: f64,
    pub w_hi: f64,
    pub intercept: f64,
    pub var: f64,
}

impl Law {
    pub fn drift(&self) -> f64 {
        match *self {
            Law::Wiener { drift } | Law::PinnedTwoSided { drift } => drift,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Law::Wiener { .. } => "wiener",
            Law::PinnedTwoSided { .. } => "pinned",
        }
    }

    /// Time at which the law is pinned to 0, given the initial vertex time.
    pub fn origin(&self, initial_time: f64) -> f64 {
        match self {
            Law::Wiener { .. } => initial_time,
            Law::PinnedTwoSided { .. } => 0.0,
        }
    }

    pub fn mean(&self, origin: f64, t: f64) -> f64 {
        self.drift() * (t - origin)
    }

    pub fn cov(&self, origin: f64, s: f64, t: f64) -> f64 {
        match self {
            Law::Wiener { .. } => s.min(t) - origin,
            Law::PinnedTwoSided { .. } => {
                if s > 0.0 && t > 0.0 {
                    s.min(t)
                } else if s < 0.0 && t < 0.0 {
                    -(s.max(t))
                } else {
                    0.0
                }
            }
        }
    }

    /// Law of `X(r)` given its nearest known neighbours on one time path.
    /// `lo` lies before `r`, `hi` after it; either may be absent.
    pub fn conditional(&self, origin: f64, lo: Option<f64>, hi: Option<f64>, r: f64) -> Conditional {
        let (lo, hi) = self.effective(origin, lo, hi, r);
        brownian(self.drift(), lo, hi, r)
    }

    /// Inserts the deterministic zero of the law between `r` and any
    /// neighbour on the far side of it.
    fn effective(&self, origin: f64, lo: Option<f64>, hi: Option<f64>, r: f64) -> (Option<Anchor>, Option<Anchor>) {
        let point = |t: f64| Anchor::Point { time: t };
        let zero = Anchor::Zero { time: origin };
        match self {
            Law::Wiener { .. } => {
                let lo = match lo {
                    Some(t) if t >= origin => point(t),
                    _ => zero,
                };
                (Some(lo), hi.map(point))
            }
            Law::PinnedTwoSided { .. } => {
                if r > 0.0 {
                    let lo = match lo {
                        Some(t) if t >= 0.0 => point(t),
                        _ => zero,
                    };
                    (Some(lo), hi.map(point))
                } else if r < 0.0 {
                    let hi = match hi {
                        Some(t) if t <= 0.0 => point(t),
                        _ => zero,
                    };
                    (lo.map(point), Some(hi))
                } else {
                    (Some(zero), None)
                }
            }
        }
    }
}

/// Brownian conditional with drift `mu` given the anchors; zero anchors
/// contribute value 0 and no weight.
fn brownian(mu: f64, lo: Option<Anchor>, hi: Option<Anchor>, r: f64) -> Conditional {
    let keep = |a: Anchor, w: f64| if matches!(a, Anchor::Point { .. }) { w } else { 0.0 };
    match (lo, hi) {
        (Some(a), _) if a.time() == r => Conditional { w_lo: keep(a, 1.0), w_hi: 0.0, intercept: 0.0, var: 0.0 },
        (_, Some(b)) if b.time() == r => Conditional { w_lo: 0.0, w_hi: keep(b, 1.0), intercept: 0.0, var: 0.0 },
        (Some(a), Some(b)) => {
            let (s, t) = (a.time(), b.time());
            let span = t - s;
            Conditional {
                w_lo: keep(a, (t - r) / span),
                w_hi: keep(b, (r - s) / span),
                intercept: 0.0,
                var: (r - s) * (t - r) / span,
            }
        }
        (Some(a), None) => {
            let d = r - a.time();
            Conditional { w_lo: keep(a, 1.0), w_hi: 0.0, intercept: mu * d, var: d }
        }
        (None, Some(b)) => {
            let d = b.time() - r;
            Conditional { w_lo: 0.0, w_hi: keep(b, 1.0), intercept: -mu * d, var: d }
        }
        (None, None) => unreachable!("every law supplies an anchor"),
    }
}
