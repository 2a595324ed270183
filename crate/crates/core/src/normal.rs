//! Standard normal CDF and quantile (probit) function.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal cumulative distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

// Acklam's rational approximation coefficients.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn acklam_lower(p: f64) -> f64 {
    // valid for p <= 0.5
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Inverse of [`cdf`]. Returns `-inf`/`+inf` at 0 and 1 and NaN outside
/// `[0, 1]`.
pub fn probit(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -probit_lower(1.0 - p);
    }
    probit_lower(p)
}

fn probit_lower(p: f64) -> f64 {
    let x = acklam_lower(p);
    // one Newton step on cdf(x) - p
    let residual = cdf(x) - p;
    x - residual / pdf(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent erf: Maclaurin series for small |x|, Lentz continued
    /// fraction for erfc in the tail.
    fn erf_oracle(x: f64) -> f64 {
        if x < 0.0 {
            return -erf_oracle(-x);
        }
        if x < 2.5 {
            let mut sum = 0.0;
            let mut term = x;
            let mut n = 0.0;
            while term.abs() > 1e-20 {
                sum += term / (2.0 * n + 1.0);
                n += 1.0;
                term *= -x * x / n;
            }
            sum * 2.0 / PI.sqrt()
        } else {
            1.0 - erfc_cf(x)
        }
    }

    fn erfc_cf(x: f64) -> f64 {
        // erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + 1/2/(x + 1/(x + 3/2/(x + ...))))
        let mut f = x;
        for k in (1..200).rev() {
            f = x + (k as f64 / 2.0) / f;
        }
        (-x * x).exp() / PI.sqrt() / f
    }

    fn cdf_oracle(x: f64) -> f64 {
        if x < -2.5 * std::f64::consts::SQRT_2 {
            0.5 * erfc_cf(-x * FRAC_1_SQRT_2)
        } else {
            0.5 * (1.0 + erf_oracle(x * FRAC_1_SQRT_2))
        }
    }

    #[test]
    fn cdf_matches_series_oracle() {
        let mut x = -8.0;
        while x <= 8.0 {
            let (got, want) = (cdf(x), cdf_oracle(x));
            assert!(
                (got - want).abs() <= 1e-14 + 1e-12 * want,
                "x={x} got={got} want={want}"
            );
            x += 0.0625;
        }
    }

    #[test]
    fn flip_example_value() {
        // Φ(-0.2/√0.02), reference from a 40-digit evaluation
        let v = cdf(-0.2 / 0.02f64.sqrt());
        assert!((v - 0.078_649_603_525_142_57).abs() < 1e-13);
        assert!((cdf_oracle(-0.2 / 0.02f64.sqrt()) - v).abs() < 1e-13);
    }

    #[test]
    fn probit_matches_tabulated_quantiles() {
        let table = [
            (0.005, -2.575_829_303_548_900_8),
            (0.01, -2.326_347_874_040_841),
            (0.025, -1.959_963_984_540_054_2),
            (0.05, -1.644_853_626_951_472_7),
            (0.1, -1.281_551_565_544_600_5),
            (0.2, -0.841_621_233_572_914_2),
            (0.3, -0.524_400_512_708_040_8),
            (0.5, 0.0),
            (0.9, 1.281_551_565_544_600_5),
            (0.975, 1.959_963_984_540_054_2),
            (0.999, 3.090_232_306_167_813_5),
            (1e-6, -4.753_424_308_822_899),
            (1e-10, -6.361_340_902_404_056),
        ];
        for (p, z) in table {
            let got = probit(p);
            assert!((got - z).abs() <= 1e-9, "p={p} got={got} want={z}");
        }
    }

    #[test]
    fn probit_inverts_cdf_across_range() {
        // relative residual in p, tail-aware
        let mut lp = -12.0f64;
        while lp < -0.30103 {
            let p = 10f64.powf(lp);
            let x = probit(p);
            assert!(((cdf(x) - p) / p).abs() < 1e-9, "p={p}");
            let q = 1.0 - p;
            let y = probit(q);
            assert!((y + probit(1.0 - q)).abs() < 1e-12);
            lp += 0.05;
        }
    }

    #[test]
    fn probit_edges() {
        assert_eq!(probit(0.0), f64::NEG_INFINITY);
        assert_eq!(probit(1.0), f64::INFINITY);
        assert!(probit(-0.1).is_nan());
        assert!(probit(1.5).is_nan());
    }
}
