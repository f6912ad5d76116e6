use serde::{Deserialize, Serialize};

use super::{KahanSum, SrbError};
use crate::models::{MapError, Noise, Point2, SampledOrbit, System};

/// Number of disjoint blocks behind `ci_halfwidth`.
pub const BLOCKS: usize = 10;
/// Shortest run accepted by [`lyapunov_spectrum`].
pub const MIN_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovOptions {
    pub n: usize,
    pub burn_in: usize,
    /// Steps between Gram-Schmidt renormalizations (2D only).
    pub renorm_every: usize,
    pub seed: u64,
    pub noise: Noise,
}

impl Default for LyapunovOptions {
    fn default() -> Self {
        LyapunovOptions {
            n: 1_000_000,
            burn_in: 1000,
            renorm_every: 10,
            seed: 0,
            noise: Noise::Jitter,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEstimate {
    pub lambda1: f64,
    /// Present for planar maps.
    pub lambda2: Option<f64>,
    pub n: usize,
    pub burn_in: usize,
    pub renorm_every: usize,
    pub seed: u64,
    /// 95% half-width for `lambda1` from the spread of block means.
    pub ci_halfwidth: f64,
    /// Per-block estimates of `lambda1`.
    pub block_lambda1: Vec<f64>,
}

impl LyapunovEstimate {
    /// `lambda1 + lambda2`, or `lambda1` in 1D.
    pub fn sum(&self) -> f64 {
        self.lambda1 + self.lambda2.unwrap_or(0.0)
    }
}

fn halfwidth(blocks: &[f64]) -> f64 {
    let k = blocks.len() as f64;
    let mean = blocks.iter().sum::<f64>() / k;
    let var = blocks.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (k - 1.0);
    1.96 * (var / k).sqrt()
}

/// Block index of step `j` (0-based) in a run of `n` steps.
#[inline]
fn block_of(j: usize, n: usize) -> usize {
    j * BLOCKS / n
}

fn block_sizes(n: usize) -> [usize; BLOCKS] {
    let mut s = [0; BLOCKS];
    for j in 0..BLOCKS {
        // number of steps i with block_of(i, n) == j
        s[j] = (((j + 1) * n).div_ceil(BLOCKS)) - ((j * n).div_ceil(BLOCKS));
    }
    s
}

/// Lyapunov exponents along the orbit of `x0` after `burn_in` steps.
///
/// Interval maps average `log |f'|` over the orbit. Planar maps push an
/// orthonormal frame with the tangent map and re-orthonormalize it every
/// `renorm_every` steps, accumulating the logarithms of the diagonal of the
/// triangular factor.
pub fn lyapunov_spectrum(sys: &System, x0: Point2, opts: &LyapunovOptions) -> Result<LyapunovEstimate, SrbError> {
    if opts.n < MIN_STEPS || opts.renorm_every == 0 {
        return Err(SrbError::Invalid(format!(
            "need n >= {MIN_STEPS} and renorm_every >= 1 (got {}, {})",
            opts.n, opts.renorm_every
        )));
    }
    let mut orbit = SampledOrbit::new(*sys, x0, opts.seed, opts.noise)?;
    orbit.skip(opts.burn_in)?;
    let n = opts.n;
    let sizes = block_sizes(n);
    let mut sums = [[KahanSum::default(); 2]; BLOCKS];

    if let System::Interval(m) = sys {
        for j in 0..n {
            let x = orbit.point()[0];
            let d = m.lap_derivative(m.lap_of(x), x);
            if d == 0.0 {
                return Err(MapError::CriticalPoint { x }.into());
            }
            sums[block_of(j, n)][0].add(d.abs().ln());
            orbit.advance()?;
        }
    } else {
        let mut v = [[1.0, 0.0], [0.0, 1.0]];
        let mut since = 0;
        // steps accumulated since the last renormalization are attributed to the block of the last step
        for j in 0..n {
            let t = sys.tangent(orbit.point());
            for w in v.iter_mut() {
                *w = [t[0][0] * w[0] + t[0][1] * w[1], t[1][0] * w[0] + t[1][1] * w[1]];
            }
            orbit.advance()?;
            since += 1;
            if since == opts.renorm_every || j + 1 == n {
                let (r1, r2) = gram_schmidt(&mut v).ok_or(SrbError::DegenerateTangent {
                    step: opts.burn_in + j + 1,
                })?;
                let b = block_of(j, n);
                sums[b][0].add(r1.ln());
                sums[b][1].add(r2.ln());
                since = 0;
            }
        }
    }

    let per_block =
        |axis: usize| -> Vec<f64> { (0..BLOCKS).map(|b| sums[b][axis].value() / sizes[b] as f64).collect() };
    let total = |axis: usize| {
        let mut t = KahanSum::default();
        sums.iter().for_each(|s| t.add(s[axis].value()));
        t.value() / n as f64
    };
    let (mut l1, mut l2, mut blocks) = (total(0), total(1), per_block(0));
    let two_d = sys.dim() == 2;
    if two_d && l2 > l1 {
        std::mem::swap(&mut l1, &mut l2);
        blocks = per_block(1);
    }
    Ok(LyapunovEstimate {
        lambda1: l1,
        lambda2: two_d.then_some(l2),
        n,
        burn_in: opts.burn_in,
        renorm_every: opts.renorm_every,
        seed: opts.seed,
        ci_halfwidth: halfwidth(&blocks),
        block_lambda1: blocks,
    })
}

/// Orthonormalizes `v` in place and returns the two norms removed.
fn gram_schmidt(v: &mut [Point2; 2]) -> Option<(f64, f64)> {
    let r1 = v[0][0].hypot(v[0][1]);
    if !(r1 > 1e-300 && r1.is_finite()) {
        return None;
    }
    v[0] = [v[0][0] / r1, v[0][1] / r1];
    let p = v[0][0] * v[1][0] + v[0][1] * v[1][1];
    let w = [v[1][0] - p * v[0][0], v[1][1] - p * v[0][1]];
    let r2 = w[0].hypot(w[1]);
    if !(r2 > 1e-300 && r2.is_finite()) {
        return None;
    }
    v[1] = [w[0] / r2, w[1] / r2];
    Some((r1, r2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HenonMap, LinearMap2, Map1D};

    #[test]
    fn diagonal_linear_map_is_exact() {
        let sys = System::Linear(LinearMap2 {
            matrix: [[2.0, 0.0], [0.0, 0.5]],
        });
        let opts = LyapunovOptions {
            n: 20_000,
            ..LyapunovOptions::default()
        };
        let e = lyapunov_spectrum(&sys, [0.0, 0.0], &opts).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!((e.lambda1 - ln2).abs() < 1e-12);
        assert!((e.lambda2.unwrap() + ln2).abs() < 1e-12);
        assert!(e.ci_halfwidth < 1e-12);
    }

    #[test]
    fn henon_sum_is_log_b() {
        let sys = System::Henon(HenonMap::new(1.4, 0.3).unwrap());
        let opts = LyapunovOptions {
            n: 200_000,
            seed: 3,
            ..LyapunovOptions::default()
        };
        let e = lyapunov_spectrum(&sys, [0.0, 0.0], &opts).unwrap();
        assert!((e.sum() - 0.3f64.ln()).abs() < 1e-6, "{}", e.sum());
        assert!(e.lambda1 > 0.3 && e.lambda1 < 0.5, "{}", e.lambda1);
        assert!(e.lambda1 >= e.lambda2.unwrap());
    }

    #[test]
    fn doubling_is_ln2() {
        let opts = LyapunovOptions {
            n: 10_000,
            ..LyapunovOptions::default()
        };
        let e = lyapunov_spectrum(&System::Interval(Map1D::Doubling), [0.3, 0.0], &opts).unwrap();
        assert!((e.lambda1 - std::f64::consts::LN_2).abs() < 1e-14);
        assert!(e.lambda2.is_none());
    }

    #[test]
    fn huge_renormalization_gap_degenerates() {
        let sys = System::Linear(LinearMap2 {
            matrix: [[4.0, 0.0], [0.0, 0.25]],
        });
        let opts = LyapunovOptions {
            n: 20_000,
            renorm_every: 20_000,
            ..LyapunovOptions::default()
        };
        assert!(matches!(
            lyapunov_spectrum(&sys, [0.0, 0.0], &opts),
            Err(SrbError::DegenerateTangent { .. })
        ));
    }

    #[test]
    fn short_runs_are_rejected() {
        let opts = LyapunovOptions {
            n: 100,
            ..LyapunovOptions::default()
        };
        assert!(lyapunov_spectrum(&System::Interval(Map1D::Doubling), [0.3, 0.0], &opts).is_err());
    }

    #[test]
    fn blocks_partition_the_run() {
        for n in [10_000, 10_007, 123_456] {
            assert_eq!(block_sizes(n).iter().sum::<usize>(), n);
            let mut counts = [0; BLOCKS];
            for j in 0..n {
                counts[block_of(j, n)] += 1;
            }
            assert_eq!(counts, block_sizes(n));
        }
    }
}
