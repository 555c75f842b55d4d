//! Gauss-Legendre rules on the reference interval `[0,1]`, their tensor
//! products on `[0,1]^2`, and geometrically graded composites for integrands
//! with an edge singularity.

/// Quadrature on `[0,1]`; weights sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct Rule1d {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule1d {
    /// `n`-point Gauss-Legendre rule, exact for degree `2n - 1`.
    pub fn gauss(n: usize) -> Rule1d {
        assert!((1..=32).contains(&n), "gauss rule needs 1..=32 points, got {n}");
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            // map [-1,1] -> [0,1]
            points[i] = 0.5 * (1.0 - z);
            points[n - 1 - i] = 0.5 * (1.0 + z);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Rule1d { points, weights }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The rule mapped onto `[a,b] ⊆ [0,1]`, weights scaled by `b - a`.
    pub fn mapped(&self, a: f64, b: f64) -> Rule1d {
        let h = b - a;
        Rule1d {
            points: self.points.iter().map(|p| a + h * p).collect(),
            weights: self.weights.iter().map(|w| h * w).collect(),
        }
    }

    /// `base` copied onto each sub-interval between consecutive `breaks`
    /// (which must start at 0, end at 1 and increase).
    pub fn composite(base: &Rule1d, breaks: &[f64]) -> Rule1d {
        let mut out = Rule1d { points: Vec::new(), weights: Vec::new() };
        for w in breaks.windows(2) {
            out.append(&base.mapped(w[0], w[1]));
        }
        out
    }

    /// Geometric grading toward `0` (`toward_low`) or `1`: pieces
    /// `[2^-(k+1), 2^-k]`, `k < levels`, plus the innermost `[0, 2^-levels]`,
    /// each carrying a copy of `base`.
    pub fn graded(base: &Rule1d, levels: u32, toward_low: bool) -> Rule1d {
        assert!(levels >= 1, "graded rule needs at least one level");
        let mut breaks = vec![0.0];
        for k in (0..=levels).rev() {
            breaks.push(0.5f64.powi(k as i32));
        }
        let rule = Rule1d::composite(base, &breaks);
        if toward_low {
            rule
        } else {
            rule.reflected()
        }
    }

    /// `s -> 1 - s`.
    pub fn reflected(&self) -> Rule1d {
        Rule1d {
            points: self.points.iter().rev().map(|p| 1.0 - p).collect(),
            weights: self.weights.iter().rev().copied().collect(),
        }
    }

    fn append(&mut self, other: &Rule1d) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend_from_slice(&other.weights);
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&p, &w)| w * f(p)).sum()
    }
}

/// Legendre polynomial `P_n(z)` and its derivative.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (z * p1 - p0) / (z * z - 1.0);
    (p1, d)
}

/// Edge of the reference cell `[0,1]^2` in `(t̂, x̂)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RefEdge {
    /// `t̂ = 0`
    TimeLow,
    /// `t̂ = 1`
    TimeHigh,
    /// `x̂ = 0`
    SpaceLow,
    /// `x̂ = 1`
    SpaceHigh,
}

/// Tensor-product rule on `[0,1]^2`; points are `(t̂, x̂)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadRule {
    pub t: Rule1d,
    pub x: Rule1d,
}

impl QuadRule {
    pub fn tensor(t: Rule1d, x: Rule1d) -> QuadRule {
        QuadRule { t, x }
    }

    pub fn len(&self) -> usize {
        self.t.len() * self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `((t̂, x̂), weight)` in time-major order.
    pub fn iter(&self) -> impl Iterator<Item = ((f64, f64), f64)> + '_ {
        self.t.points.iter().zip(&self.t.weights).flat_map(move |(&t, &wt)| {
            self.x.points.iter().zip(&self.x.weights).map(move |(&x, &wx)| ((t, x), wt * wx))
        })
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.iter().map(|(p, _)| p).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.iter().map(|(_, w)| w).collect()
    }

    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.iter().map(|((t, x), w)| w * f(t, x)).sum()
    }
}

/// Tensor Gauss rule exact for degrees `(2 n_t - 1, 2 n_x - 1)`.
pub fn gauss_rule(n_t: usize, n_x: usize) -> QuadRule {
    QuadRule::tensor(Rule1d::gauss(n_t), Rule1d::gauss(n_x))
}

/// Grades the direction normal to `singular_edge` geometrically toward that
/// edge; the other direction keeps the base rule.
pub fn graded_rule(singular_edge: RefEdge, levels: u32, base: &QuadRule) -> QuadRule {
    match singular_edge {
        RefEdge::TimeLow => QuadRule::tensor(Rule1d::graded(&base.t, levels, true), base.x.clone()),
        RefEdge::TimeHigh => QuadRule::tensor(Rule1d::graded(&base.t, levels, false), base.x.clone()),
        RefEdge::SpaceLow => QuadRule::tensor(base.t.clone(), Rule1d::graded(&base.x, levels, true)),
        RefEdge::SpaceHigh => QuadRule::tensor(base.t.clone(), Rule1d::graded(&base.x, levels, false)),
    }
}
