//! Elementary pixel operators shared by the solver and the losses.

use crate::error::{CoreError, Result};
use crate::image::{Image, Map};

/// Bilateral filter parameters. `radius` is the window half-width, so the
/// window is `(2*radius + 1)²` pixels; `radius >= ceil(2 * sigma_spatial)`
/// keeps the spatial Gaussian from being truncated noticeably.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilateralParams {
    pub sigma_spatial: f64,
    pub sigma_range: f64,
    pub radius: usize,
}

impl BilateralParams {
    pub fn new(sigma_spatial: f64, sigma_range: f64, radius: usize) -> Result<Self> {
        if !(sigma_spatial > 0.0) {
            return Err(CoreError::argument(format!(
                "sigma_spatial must be positive, got {sigma_spatial}"
            )));
        }
        if !(sigma_range > 0.0) {
            return Err(CoreError::argument(format!(
                "sigma_range must be positive, got {sigma_range}"
            )));
        }
        if radius < 1 {
            return Err(CoreError::argument("radius must be at least 1"));
        }
        Ok(BilateralParams {
            sigma_spatial,
            sigma_range,
            radius,
        })
    }
}

impl Default for BilateralParams {
    fn default() -> Self {
        BilateralParams {
            sigma_spatial: 3.0,
            sigma_range: 0.1,
            radius: 6,
        }
    }
}

/// Forward differences: `gx(x, y) = m(x+1, y) - m(x, y)` with zeros on the
/// last column, and `gy` likewise on rows. The same convention is used by
/// the smoothness losses.
pub fn forward_gradients(m: &Map) -> (Map, Map) {
    let (h, w) = (m.height(), m.width());
    let mut gx = Map::zeros(h, w);
    let mut gy = Map::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w {
                gx.set(x, y, m.get(x + 1, y) - m.get(x, y));
            }
            if y + 1 < h {
                gy.set(x, y, m.get(x, y + 1) - m.get(x, y));
            }
        }
    }
    (gx, gy)
}

#[inline]
pub(crate) fn shrink_value(v: f64, eta: f64) -> f64 {
    (v.abs() - eta).max(0.0) * v.signum()
}

fn check_eta(eta: f64) -> Result<()> {
    if eta < 0.0 {
        return Err(CoreError::argument(format!(
            "shrink threshold must be nonnegative, got {eta}"
        )));
    }
    Ok(())
}

/// Soft shrinkage `max(|v| - eta, 0) * sign(v)`, the proximal operator of
/// `eta * |.|_1`.
pub fn shrink_map(m: &Map, eta: f64) -> Result<Map> {
    check_eta(eta)?;
    Ok(m.map_values(|v| shrink_value(v, eta)))
}

/// Soft shrinkage applied to every channel of an image.
pub fn shrink_image(img: &Image, eta: f64) -> Result<Image> {
    check_eta(eta)?;
    Ok(img.map_values(|v| shrink_value(v, eta)))
}

/// Brute-force bilateral filter over the `(2*radius+1)²` window:
///
/// `out(p) = sum_q w(q) m(q) / sum_q w(q)` with
/// `w(q) = exp(-|q-p|² / 2σ_s²) * exp(-(m(q)-m(p))² / 2σ_r²)`.
///
/// Window coordinates are clamped to the map, which keeps the constant-map
/// identity exact at the borders.
pub fn bilateral_filter(m: &Map, p: &BilateralParams) -> Map {
    let (h, w) = (m.height(), m.width());
    let r = p.radius as isize;
    let inv_2ss = 1.0 / (2.0 * p.sigma_spatial * p.sigma_spatial);
    let inv_2sr = 1.0 / (2.0 * p.sigma_range * p.sigma_range);
    let mut out = Map::zeros(h, w);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let center = m.get(x as usize, y as usize);
            // Accumulate deviations from the center value so constant
            // regions pass through bit-exactly.
            let mut num = 0.0;
            let mut den = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let qx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let qy = (y + dy).clamp(0, h as isize - 1) as usize;
                    let diff = m.get(qx, qy) - center;
                    let dist2 = (dx * dx + dy * dy) as f64;
                    let weight = (-dist2 * inv_2ss).exp() * (-diff * diff * inv_2sr).exp();
                    num += weight * diff;
                    den += weight;
                }
            }
            out.set(x as usize, y as usize, center + num / den);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gradients_of_constant_are_zero() {
        let m = Map::constant(4, 5, 0.7);
        let (gx, gy) = forward_gradients(&m);
        assert!(gx.data().iter().all(|&v| v == 0.0));
        assert!(gy.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_of_ramp() {
        let w = 8;
        let m = Map::from_fn(4, w, |x, _| x as f64 / w as f64);
        let (gx, gy) = forward_gradients(&m);
        for y in 0..4 {
            for x in 0..w {
                let want = if x + 1 < w { 1.0 / w as f64 } else { 0.0 };
                assert!((gx.get(x, y) - want).abs() < 1e-15);
                assert_eq!(gy.get(x, y), 0.0);
            }
        }
    }

    #[test]
    fn gradients_of_center_spike() {
        // 3x3 with a single 1 at the center, hand-computed stencil.
        let mut m = Map::zeros(3, 3);
        m.set(1, 1, 1.0);
        let (gx, gy) = forward_gradients(&m);
        assert_eq!(gx.get(0, 1), 1.0);
        assert_eq!(gx.get(1, 1), -1.0);
        assert_eq!(gx.get(2, 1), 0.0); // last column
        assert_eq!(gx.get(0, 0), 0.0);
        assert_eq!(gy.get(1, 0), 1.0);
        assert_eq!(gy.get(1, 1), -1.0);
        assert_eq!(gy.get(1, 2), 0.0); // last row
    }

    #[test]
    fn gradient_rows_telescope() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Map::from_fn(5, 6, |_, _| rng.gen_range(-1.0..1.0));
        let (gx, _) = forward_gradients(&m);
        for y in 0..5 {
            let row_sum: f64 = (0..6).map(|x| gx.get(x, y)).sum();
            let want = m.get(5, y) - m.get(0, y);
            assert!((row_sum - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shrink_examples() {
        assert!((shrink_value(0.5, 0.2) - 0.3).abs() < 1e-15);
        assert_eq!(shrink_value(-0.1, 0.2), 0.0);
        let m = Map::new(1, 3, vec![0.5, -0.1, 0.0]).unwrap();
        let s = shrink_map(&m, 0.0).unwrap();
        assert_eq!(s.data(), m.data());
        assert!(shrink_map(&m, -0.1).is_err());
        assert!(shrink_image(&Image::zeros(1, 1, 3), -1e-9).is_err());
    }

    #[test]
    fn shrink_matches_grid_search_minimizer() {
        // Independent oracle: scan u for the minimizer of 0.5(u-x)^2 + eta|u|.
        let grid_argmin = |x: f64, eta: f64| -> f64 {
            let mut best = f64::INFINITY;
            let mut arg = 0.0;
            let mut u = -2.0;
            while u <= 2.0 {
                let f = 0.5 * (u - x) * (u - x) + eta * u.abs();
                if f < best {
                    best = f;
                    arg = u;
                }
                u += 1e-4;
            }
            arg
        };
        for &x in &[-1.0, -0.3, 0.0, 0.3, 1.0] {
            for &eta in &[0.0, 0.1, 0.25, 0.5, 1.0] {
                let got = shrink_value(x, eta);
                assert!((got - grid_argmin(x, eta)).abs() <= 1e-4, "x={x} eta={eta}");
            }
        }
    }

    #[test]
    fn bilateral_constant_identity_is_exact() {
        let m = Map::constant(9, 9, 0.42);
        let out = bilateral_filter(&m, &BilateralParams::default());
        assert_eq!(out.data(), m.data());
    }

    #[test]
    fn bilateral_with_huge_range_sigma_is_gaussian_blur() {
        // Independent oracle: plain spatial Gaussian convolution, clamped
        // borders, evaluated with the same window.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = Map::from_fn(9, 9, |_, _| rng.gen_range(0.0..1.0));
        let p = BilateralParams::new(2.0, 1e6, 4).unwrap();
        let out = bilateral_filter(&m, &p);

        let r = p.radius as isize;
        for y in 0..9i64 {
            for x in 0..9i64 {
                let mut num = 0.0;
                let mut den = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let qx = (x as isize + dx).clamp(0, 8) as usize;
                        let qy = (y as isize + dy).clamp(0, 8) as usize;
                        let wgt = (-((dx * dx + dy * dy) as f64)
                            / (2.0 * p.sigma_spatial * p.sigma_spatial))
                            .exp();
                        num += wgt * m.get(qx, qy);
                        den += wgt;
                    }
                }
                assert!((out.get(x as usize, y as usize) - num / den).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn bilateral_denoises_step_edge() {
        // 16x16 vertical step 0.2 | 0.8 with seeded Gaussian noise.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise: Vec<f64> = (0..256)
            .map(|_| {
                // Box-Muller
                let u1: f64 = rng.gen_range(1e-12..1.0);
                let u2: f64 = rng.gen_range(0.0..1.0);
                0.05 * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
            })
            .collect();
        let noisy = Map::from_fn(16, 16, |x, y| {
            let base = if x < 8 { 0.2 } else { 0.8 };
            base + noise[y * 16 + x]
        });
        let p = BilateralParams::new(2.0, 0.1, 4).unwrap();
        let filtered = bilateral_filter(&noisy, &p);

        let region_stats = |m: &Map, xs: std::ops::Range<usize>| {
            let vals: Vec<f64> = (0..16)
                .flat_map(|y| xs.clone().map(move |x| (x, y)))
                .map(|(x, y)| m.get(x, y))
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64;
            (mean, var.sqrt())
        };
        let (_, sd_before_l) = region_stats(&noisy, 0..6);
        let (_, sd_before_r) = region_stats(&noisy, 10..16);
        let (ml, sd_after_l) = region_stats(&filtered, 0..6);
        let (mr, sd_after_r) = region_stats(&filtered, 10..16);

        assert!(
            sd_after_l <= 0.5 * sd_before_l,
            "{sd_after_l} vs {sd_before_l}"
        );
        assert!(
            sd_after_r <= 0.5 * sd_before_r,
            "{sd_after_r} vs {sd_before_r}"
        );
        assert!((mr - ml) >= 0.9 * 0.6, "contrast {}", mr - ml);
    }
}
