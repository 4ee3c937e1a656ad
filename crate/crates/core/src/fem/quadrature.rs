//! Gaussian quadrature rules on the reference triangle and segment.
//!
//! Points are barycentric; weights sum to one and are scaled by the element
//! measure at use time.

/// Degree-2 rule, 3 points: exact for quadratics.
pub const TRI_DEGREE2: [([f64; 3], f64); 3] = [
    ([2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], 1.0 / 3.0),
    ([1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0], 1.0 / 3.0),
];

/// Degree-5 rule, 7 points: used for error norms.
pub const TRI_DEGREE5: [([f64; 3], f64); 7] = {
    const A1: f64 = 0.059_715_871_789_770;
    const B1: f64 = 0.470_142_064_105_115;
    const W1: f64 = 0.132_394_152_788_506;
    const A2: f64 = 0.797_426_985_353_087;
    const B2: f64 = 0.101_286_507_323_456;
    const W2: f64 = 0.125_939_180_544_827;
    [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 0.225),
        ([A1, B1, B1], W1),
        ([B1, A1, B1], W1),
        ([B1, B1, A1], W1),
        ([A2, B2, B2], W2),
        ([B2, A2, B2], W2),
        ([B2, B2, A2], W2),
    ]
};

/// 2-point Gauss on [0, 1]: exact for cubics. Entries are (s, weight).
pub const SEG_GAUSS2: [(f64, f64); 2] = {
    // 0.5 -+ 0.5/sqrt(3)
    const H: f64 = 0.288_675_134_594_812_9;
    [(0.5 - H, 0.5), (0.5 + H, 0.5)]
};

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_one() {
        let s2: f64 = TRI_DEGREE2.iter().map(|(_, w)| w).sum();
        let s5: f64 = TRI_DEGREE5.iter().map(|(_, w)| w).sum();
        let sg: f64 = SEG_GAUSS2.iter().map(|(_, w)| w).sum();
        assert!((s2 - 1.0).abs() < 1e-15);
        assert!((s5 - 1.0).abs() < 1e-14);
        assert!((sg - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degree5_integrates_quintic_exactly() {
        // integral of x^5 over unit right triangle = 1/42
        let verts = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let mut acc = 0.0;
        for (bary, w) in TRI_DEGREE5 {
            let x = bary[0] * verts[0][0] + bary[1] * verts[1][0] + bary[2] * verts[2][0];
            acc += w * 0.5 * x.powi(5);
        }
        assert!((acc - 1.0 / 42.0).abs() < 1e-15);
    }

    #[test]
    fn segment_rule_integrates_cubic_exactly() {
        let acc: f64 = SEG_GAUSS2.iter().map(|&(s, w)| w * s * s * s).sum();
        assert!((acc - 0.25).abs() < 1e-15);
    }
}
