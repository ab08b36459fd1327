//! Scalar distribution helpers shared by the flagging and diagnostic code.

#![allow(clippy::inconsistent_digit_grouping, clippy::excessive_precision)]

use libm::erfc;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Two-sided normal tail probability `2 (1 - Phi(|z|))`, computed through
/// `erfc` so small tails keep their precision.
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF.
///
/// Wichura's AS 241 (PPND16) rational approximation; relative accuracy is
/// about 1e-16 over the open unit interval. Returns `NaN` outside (0, 1).
pub fn normal_quantile(p: f64) -> f64 {
    if !(p > 0.0 && p < 1.0) {
        return f64::NAN;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * horner(&CENTRAL_NUM, r) / horner(&CENTRAL_DEN, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        let r = r - 1.6;
        horner(&NEAR_NUM, r) / horner(&NEAR_DEN, r)
    } else {
        let r = r - 5.0;
        horner(&FAR_NUM, r) / horner(&FAR_DEN, r)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// Evaluates `c[0] + c[1] x + ... + c[k] x^k`.
fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

const CENTRAL_NUM: [f64; 8] = [
    3.387_132_872_796_366_5,
    133.141_667_891_784_38,
    1971.590_950_306_551_4,
    13_731.693_765_509_46,
    45921.953_931_549_87,
    67265.770_927_008_7,
    33430.575_583_588_13,
    2509.080_928_730_122_7,
];
const CENTRAL_DEN: [f64; 8] = [
    1.0,
    42.313_330_701_600_91,
    687.187_007_492_057_9,
    5394.196_021_424_751,
    21213.794_301_586_597,
    39307.895_800_092_71,
    28729.085_735_721_943,
    5226.495_278_852_546,
];
const NEAR_NUM: [f64; 8] = [
    1.423_437_110_749_683_5,
    4.630_337_846_156_545,
    5.769_497_221_460_691,
    3.647_848_324_763_204_5,
    1.270_458_252_452_368_4,
    0.241_780_725_177_450_6,
    0.022_723_844_989_269_184,
    7.745_450_142_783_414e-4,
];
const NEAR_DEN: [f64; 8] = [
    1.0,
    2.053_191_626_637_759,
    1.676_384_830_183_803_8,
    0.689_767_334_985_1,
    0.148_103_976_427_480_07,
    0.015_198_666_563_616_457,
    5.475_938_084_995_345e-4,
    1.050_750_071_644_416_9e-9,
];
const FAR_NUM: [f64; 8] = [
    6.657_904_643_501_103,
    5.463_784_911_164_114,
    1.784_826_539_917_291_3,
    0.296_560_571_828_504_9,
    0.026_532_189_526_576_124,
    0.001_242_660_947_388_078_4,
    2.711_555_568_743_487_6e-5,
    2.010_334_399_292_288_1e-7,
];
const FAR_DEN: [f64; 8] = [
    1.0,
    0.599_832_206_555_888,
    0.136_929_880_922_735_8,
    0.014_875_361_290_850_615,
    7.868_691_311_456_133e-4,
    1.846_318_317_510_054_8e-5,
    1.421_511_758_316_446e-7,
    2.044_263_103_389_939_7e-15,
];

/// Inverse logit.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Reference quantiles computed with 80-digit arithmetic (bisection on the
    // exact CDF), rounded to 17 significant digits.
    const QUANTILES: &[(f64, f64)] = &[
        (0.9, 1.281_551_565_544_600_5),
        (0.85, 1.036_433_389_493_789_6),
        (0.8, 0.841_621_233_572_914_2),
        (0.75, 0.674_489_750_196_081_7),
        (0.5, 0.0),
        (0.3, -0.524_400_512_708_040_8),
        (0.975, 1.959_963_984_540_054),
        (0.999, 3.090_232_306_167_813_5),
        (0.02425, -1.972_961_051_311_885),
        (0.97575, 1.972_961_051_311_885),
        (0.01, -2.326_347_874_040_841),
        (0.1, -1.281_551_565_544_600_5),
        (0.999999, 4.753_424_308_822_899),
        (1e-10, -6.361_340_902_404_056),
        (1e-20, -9.262_340_089_798_408),
        (1e-100, -21.273_453_560_965_324),
    ];

    #[test]
    fn quantile_matches_reference_to_1e9() {
        for &(p, want) in QUANTILES {
            let got = normal_quantile(p);
            assert!((got - want).abs() <= 1e-9, "p={p}: got {got}, want {want}");
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-14, "p={p}");
        }
    }

    #[test]
    fn quantile_outside_unit_interval_is_nan() {
        assert!(normal_quantile(0.0).is_nan());
        assert!(normal_quantile(1.0).is_nan());
        assert!(normal_quantile(f64::NAN).is_nan());
    }

    #[test]
    fn two_sided_p_matches_cdf_form() {
        for &z in &[0.0f64, 0.3, 1.183, -0.845, 2.5, -4.0] {
            let direct = 2.0 * (1.0 - normal_cdf(z.abs()));
            assert!((two_sided_p(z) - direct).abs() < 1e-12);
        }
        // Reported diagnostic values: z = 1.183 -> p ~ 0.237, z = -0.845 -> p ~ 0.4.
        assert!((two_sided_p(1.183) - 0.236_809_147_416).abs() < 1e-9);
        assert!((two_sided_p(-0.845) - 0.398_110_839_043).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_symmetry_and_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(0.808) - 0.691_683_152_754_822_8).abs() < 1e-15);
        for &x in &[-30.0, -2.5, -0.1, 0.7, 3.0, 40.0] {
            assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() < 1e-15);
        }
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
