//! Diurnal edge activation law and its day averages.

use std::collections::HashMap;

use super::ContactBounds;

/// Mean contact deactivation rate μ in day⁻¹ (mean contact of 2 minutes).
pub const DEFAULT_DEACTIVATION_RATE: f64 = 720.0;

/// `[1 − cos⁴(πt)]⁴` with `t` in days. Zero at midnight, one at noon.
pub fn diurnal_profile(t: f64) -> f64 {
    let c = (std::f64::consts::PI * t).cos();
    let c2 = c * c;
    let inner = 1.0 - c2 * c2;
    let sq = inner * inner;
    sq * sq
}

/// Activation rate of a node with the given bounds at time-of-day `t`.
pub fn node_activation_rate(bounds: &ContactBounds, t: f64, k_hat: f64) -> f64 {
    bounds.min.max(bounds.max * diurnal_profile(t)) / k_hat
}

/// Edge activation rate `A_ji(t)`: the less active endpoint sets both bounds.
pub fn edge_activation_rate(a: &ContactBounds, b: &ContactBounds, t: f64, k_hat: f64) -> f64 {
    node_activation_rate(&pair_bounds(a, b), t, k_hat)
}

pub(crate) fn pair_bounds(a: &ContactBounds, b: &ContactBounds) -> ContactBounds {
    ContactBounds {
        min: a.min.min(b.min),
        max: a.max.min(b.max),
    }
}

// 16-point Gauss–Legendre nodes and weights on [-1, 1] (positive half).
const GL_X: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];
const GL_W: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

fn gauss_legendre(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        let mut s = 0.0;
        for (x, w) in GL_X.iter().zip(GL_W.iter()) {
            s += w * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

/// Time-of-day in `[0, 1/2]` where `max · profile` first reaches `min`.
fn crossing(bounds: &ContactBounds) -> f64 {
    if bounds.max <= bounds.min || bounds.max <= 0.0 {
        return 0.5;
    }
    let target = bounds.min / bounds.max;
    let (mut lo, mut hi) = (0.0f64, 0.5f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if diurnal_profile(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Day average of `g(rate(t))` where `rate` is the node law for `bounds`.
/// The kink where the floor takes over is located first so each piece is
/// smooth; the law is symmetric about noon.
fn day_average_of(bounds: &ContactBounds, k_hat: f64, g: impl Fn(f64) -> f64) -> f64 {
    let t_star = crossing(bounds);
    let floor = g(bounds.min / k_hat);
    let smooth = |t: f64| g(bounds.max * diurnal_profile(t) / k_hat);
    let upper = if t_star < 0.5 {
        gauss_legendre(&smooth, t_star, 0.5, 32)
    } else {
        0.0
    };
    2.0 * (floor * t_star + upper)
}

/// Day-average node rate `Ā_i` (day⁻¹).
pub fn day_average_rate(bounds: &ContactBounds, k_hat: f64) -> f64 {
    day_average_of(bounds, k_hat, |r| r)
}

/// Day-average edge rate `Ā_ji` (day⁻¹).
pub fn day_average_edge_rate(a: &ContactBounds, b: &ContactBounds, k_hat: f64) -> f64 {
    day_average_rate(&pair_bounds(a, b), k_hat)
}

/// Stationary probability `⟨w_i⟩ = Ā_i / (μ + Ā_i)` that an edge of node
/// `i` is active.
pub fn mean_edge_activity(bounds: &ContactBounds, k_hat: f64, mu: f64) -> f64 {
    let a = day_average_rate(bounds, k_hat);
    if a == 0.0 {
        0.0
    } else {
        a / (mu + a)
    }
}

/// Time average over a day of the instantaneous stationary activity
/// `A(t) / (μ + A(t))`; the long-run active fraction of a single edge.
pub fn expected_active_fraction(bounds: &ContactBounds, k_hat: f64, mu: f64) -> f64 {
    day_average_of(bounds, k_hat, |r| if r == 0.0 { 0.0 } else { r / (mu + r) })
}

/// Memo of `⟨w⟩` per distinct bounds pair; nodes share a handful of bounds.
#[derive(Debug, Default, Clone)]
pub struct ActivityCache {
    k_hat: f64,
    mu: f64,
    memo: HashMap<(u64, u64), f64>,
}

impl ActivityCache {
    pub fn new(k_hat: f64, mu: f64) -> Self {
        Self {
            k_hat,
            mu,
            memo: HashMap::new(),
        }
    }

    pub fn mean_edge_activity(&mut self, bounds: &ContactBounds) -> f64 {
        let key = (bounds.min.to_bits(), bounds.max.to_bits());
        let (k_hat, mu) = (self.k_hat, self.mu);
        *self
            .memo
            .entry(key)
            .or_insert_with(|| mean_edge_activity(bounds, k_hat, mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DEFAULT: ContactBounds = ContactBounds::DEFAULT;

    /// Independent oracle: plain midpoint rule on a very fine grid.
    fn midpoint_average(bounds: &ContactBounds, k_hat: f64) -> f64 {
        let n = 2_000_000;
        let h = 1.0 / n as f64;
        (0..n)
            .map(|i| node_activation_rate(bounds, (i as f64 + 0.5) * h, k_hat))
            .sum::<f64>()
            * h
    }

    #[test]
    fn rate_at_midnight_and_noon() {
        assert!((edge_activation_rate(&DEFAULT, &DEFAULT, 0.0, 10.0) - 0.4).abs() < 1e-15);
        assert!((edge_activation_rate(&DEFAULT, &DEFAULT, 0.5, 10.0) - 8.4).abs() < 1e-12);
    }

    #[test]
    fn edge_rate_uses_smaller_endpoint_bounds() {
        let low = ContactBounds { min: 2.0, max: 33.0 };
        let r = edge_activation_rate(&DEFAULT, &low, 0.5, 10.0);
        assert!((r - 3.3).abs() < 1e-12);
        assert!((edge_activation_rate(&DEFAULT, &low, 0.0, 10.0) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn default_day_average_contact_rate_is_37_7() {
        let a = day_average_rate(&DEFAULT, 10.0);
        assert!((a * 10.0 - 37.7).abs() / 37.7 < 0.01, "k̂Ā = {}", a * 10.0);
        assert!((a - 3.77).abs() < 0.01);
        // adaptive quadrature with the kink located by root finding
        assert!((a * 10.0 - 37.716427234684).abs() < 1e-9);
    }

    #[test]
    fn quadrature_matches_fine_midpoint_oracle() {
        for bounds in [
            DEFAULT,
            ContactBounds { min: 4.0, max: 33.0 },
            ContactBounds { min: 1.0, max: 200.0 },
            ContactBounds { min: 4.0, max: 4.0 },
            ContactBounds { min: 0.0, max: 84.0 },
        ] {
            let fast = day_average_rate(&bounds, 10.0);
            let slow = midpoint_average(&bounds, 10.0);
            assert!((fast - slow).abs() < 1e-9 * slow.max(1.0), "{bounds:?}: {fast} vs {slow}");
        }
    }

    #[test]
    fn lockdown_and_isolation_reductions() {
        let base = day_average_rate(&DEFAULT, 10.0);
        let lock = day_average_rate(&ContactBounds { min: 4.0, max: 33.0 }, 10.0);
        let iso = day_average_rate(&ContactBounds { min: 4.0, max: 4.0 }, 10.0);
        assert!((1.0 - lock / base - 0.58).abs() < 0.01);
        // 4 / 37.7 leaves 89.4 %; quoted as roughly 91 %.
        assert!((1.0 - iso / base - 0.91).abs() < 0.025);
    }

    #[test]
    fn mean_edge_activity_values() {
        let isolated = ContactBounds { min: 4.0, max: 4.0 };
        let w = mean_edge_activity(&isolated, 10.0, 720.0);
        assert!((w - 0.4 / 720.4).abs() < 1e-15);
        let w_default = mean_edge_activity(&DEFAULT, 10.0, 720.0);
        let a = day_average_rate(&DEFAULT, 10.0);
        assert_eq!(w_default, a / (720.0 + a));
        assert!(mean_edge_activity(&DEFAULT, 10.0, 1e300) < 1e-290);
        assert_eq!(mean_edge_activity(&ContactBounds { min: 0.0, max: 0.0 }, 10.0, 720.0), 0.0);
    }

    #[test]
    fn cache_agrees_with_direct_evaluation() {
        let mut cache = ActivityCache::new(10.0, 720.0);
        let b = ContactBounds { min: 4.0, max: 33.0 };
        assert_eq!(cache.mean_edge_activity(&b), mean_edge_activity(&b, 10.0, 720.0));
        assert_eq!(cache.mean_edge_activity(&b), mean_edge_activity(&b, 10.0, 720.0));
    }

    #[test]
    fn active_fraction_for_constant_rate_is_closed_form() {
        let b = ContactBounds { min: 37.7, max: 37.7 };
        let a = 3.77;
        let f = expected_active_fraction(&b, 10.0, 720.0);
        assert!((f - a / (720.0 + a)).abs() < 1e-14);
    }
}
