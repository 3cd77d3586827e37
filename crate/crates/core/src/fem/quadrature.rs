//! Fixed quadrature rules on reference triangles and segments.
//!
//! Triangle rules are given in barycentric coordinates with weights summing
//! to one (multiply by the physical area); segment rules live on [0, 1] with
//! weights summing to one (multiply by the physical length).

/// Barycentric points and unit-sum weights for a triangle rule.
#[derive(Debug, Clone, Copy)]
pub struct TriRule {
    pub points: &'static [[f64; 3]],
    pub weights: &'static [f64],
}

/// Parameters and unit-sum weights for a rule on [0, 1].
#[derive(Debug, Clone, Copy)]
pub struct SegRule {
    pub points: &'static [f64],
    pub weights: &'static [f64],
}

const TRI_DEG2_PTS: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];
const TRI_DEG2_WTS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

// Dunavant degree-4 rule (6 points)
const A4: f64 = 0.445948490915965;
const B4: f64 = 0.091576213509771;
const W4A: f64 = 0.223381589678011;
const W4B: f64 = 0.109951743655322;
const TRI_DEG4_PTS: [[f64; 3]; 6] = [
    [1.0 - 2.0 * A4, A4, A4],
    [A4, 1.0 - 2.0 * A4, A4],
    [A4, A4, 1.0 - 2.0 * A4],
    [1.0 - 2.0 * B4, B4, B4],
    [B4, 1.0 - 2.0 * B4, B4],
    [B4, B4, 1.0 - 2.0 * B4],
];
const TRI_DEG4_WTS: [f64; 6] = [W4A, W4A, W4A, W4B, W4B, W4B];

// Dunavant degree-5 rule (7 points)
const A5: f64 = 0.470142064105115;
const B5: f64 = 0.101286507323456;
const W5A: f64 = 0.132394152788506;
const W5B: f64 = 0.125939180544827;
const TRI_DEG5_PTS: [[f64; 3]; 7] = [
    [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    [1.0 - 2.0 * A5, A5, A5],
    [A5, 1.0 - 2.0 * A5, A5],
    [A5, A5, 1.0 - 2.0 * A5],
    [1.0 - 2.0 * B5, B5, B5],
    [B5, 1.0 - 2.0 * B5, B5],
    [B5, B5, 1.0 - 2.0 * B5],
];
const TRI_DEG5_WTS: [f64; 7] = [0.225, W5A, W5A, W5A, W5B, W5B, W5B];

/// Smallest tabulated triangle rule exact for polynomials of `degree`.
pub fn tri_rule(degree: usize) -> TriRule {
    match degree {
        0..=2 => TriRule { points: &TRI_DEG2_PTS, weights: &TRI_DEG2_WTS },
        3 | 4 => TriRule { points: &TRI_DEG4_PTS, weights: &TRI_DEG4_WTS },
        _ => TriRule { points: &TRI_DEG5_PTS, weights: &TRI_DEG5_WTS },
    }
}

// Gauss-Legendre on [0,1]
const GL2: f64 = 0.288675134594812882; // 1/(2√3)
const SEG_DEG3_PTS: [f64; 2] = [0.5 - GL2, 0.5 + GL2];
const SEG_DEG3_WTS: [f64; 2] = [0.5, 0.5];
const GL3: f64 = 0.387298334620741689; // √(3/5)/2
const SEG_DEG5_PTS: [f64; 3] = [0.5 - GL3, 0.5, 0.5 + GL3];
const SEG_DEG5_WTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Smallest tabulated segment rule exact for polynomials of `degree`.
pub fn seg_rule(degree: usize) -> SegRule {
    match degree {
        0..=3 => SegRule { points: &SEG_DEG3_PTS, weights: &SEG_DEG3_WTS },
        _ => SegRule { points: &SEG_DEG5_PTS, weights: &SEG_DEG5_WTS },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ∫ λ₀^a λ₁^b λ₂^c over the reference triangle (area 1/2)
    fn exact_bary_moment(a: u32, b: u32, c: u32) -> f64 {
        let fact = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        fact(a) * fact(b) * fact(c) / fact(a + b + c + 2)
    }

    fn rule_moment(rule: &TriRule, a: u32, b: u32, c: u32) -> f64 {
        // weights sum to 1; reference area is 1/2
        0.5 * rule
            .points
            .iter()
            .zip(rule.weights)
            .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32) * p[2].powi(c as i32))
            .sum::<f64>()
    }

    #[test]
    fn triangle_rules_are_exact_to_their_degree() {
        for deg in [2usize, 4, 5] {
            let rule = tri_rule(deg);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for a in 0..=deg as u32 {
                for b in 0..=(deg as u32 - a) {
                    for c in 0..=(deg as u32 - a - b) {
                        let got = rule_moment(&rule, a, b, c);
                        let want = exact_bary_moment(a, b, c);
                        assert!(
                            (got - want).abs() < 1e-14,
                            "deg {deg} rule wrong on λ^({a},{b},{c}): {got} vs {want}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn segment_rules_are_exact_to_their_degree() {
        for deg in [3usize, 5] {
            let rule = seg_rule(deg);
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..=deg as u32 {
                let got: f64 =
                    rule.points.iter().zip(rule.weights).map(|(x, w)| w * x.powi(p as i32)).sum();
                let want = 1.0 / (p as f64 + 1.0);
                assert!((got - want).abs() < 1e-14, "seg deg {deg} wrong on x^{p}");
            }
        }
    }
}
