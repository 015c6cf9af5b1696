//! Adaptive Gauss–Kronrod (7/15) quadrature for smooth, low-dimensional
//! integrands.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the odd Kronrod nodes (1, 3, 5, 7).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Integration settings. The defaults follow the verifier tolerances:
/// absolute tolerance `1e-12`, a small relative tolerance so large
/// integrals still converge, and at most `10_000` subdivisions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            abs_tol: 1e-12,
            rel_tol: 1e-13,
            max_subdivisions: 10_000,
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F>(f: &F, a: f64, b: f64, dim: usize, buf: &mut [f64]) -> (Vec<f64>, f64)
where
    F: Fn(f64, &mut [f64]),
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut k = vec![0.0; dim];
    let mut g = vec![0.0; dim];
    f(center, buf);
    for d in 0..dim {
        k[d] += WGK[7] * buf[d];
        g[d] += WG[3] * buf[d];
    }
    for j in 0..7 {
        let x = half * XGK[j];
        for &p in &[center - x, center + x] {
            f(p, buf);
            for d in 0..dim {
                k[d] += WGK[j] * buf[d];
                if j % 2 == 1 {
                    g[d] += WG[j / 2] * buf[d];
                }
            }
        }
    }
    let mut err = 0.0_f64;
    for d in 0..dim {
        k[d] *= half;
        g[d] *= half;
        err = err.max((k[d] - g[d]).abs());
    }
    (k, err)
}

impl Quadrature {
    pub fn with_tolerances(abs_tol: f64, rel_tol: f64) -> Self {
        Quadrature {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }

    /// Integrates a scalar function over `[a, b]`.
    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let v = self.integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, a, b)?;
        Ok(v[0])
    }

    /// Integrates a vector-valued function (written into the output slice)
    /// over `[a, b]`. The error control uses the max-norm over components.
    pub fn integrate_vec<F>(&self, f: F, dim: usize, a: f64, b: f64) -> Result<Vec<f64>>
    where
        F: Fn(f64, &mut [f64]),
    {
        if a == b || dim == 0 {
            return Ok(vec![0.0; dim]);
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        let mut buf = vec![0.0; dim];
        let (value, error) = kronrod(&f, lo, hi, dim, &mut buf);
        let mut total = value.clone();
        let mut total_err = error;
        let mut heap = BinaryHeap::new();
        heap.push(Segment {
            a: lo,
            b: hi,
            value,
            error,
        });
        let mut subdivisions = 0;
        loop {
            let scale = total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if total_err <= self.abs_tol.max(self.rel_tol * scale) {
                break;
            }
            if subdivisions >= self.max_subdivisions {
                return Err(Error::QuadratureNonConvergence {
                    error: total_err,
                    subdivisions,
                });
            }
            let worst = heap.pop().expect("segment heap is never empty");
            let mid = 0.5 * (worst.a + worst.b);
            if mid <= worst.a || mid >= worst.b {
                // interval can no longer be split in floating point
                heap.push(worst);
                return Err(Error::QuadratureNonConvergence {
                    error: total_err,
                    subdivisions,
                });
            }
            let (v1, e1) = kronrod(&f, worst.a, mid, dim, &mut buf);
            let (v2, e2) = kronrod(&f, mid, worst.b, dim, &mut buf);
            for d in 0..dim {
                total[d] += v1[d] + v2[d] - worst.value[d];
            }
            total_err += e1 + e2 - worst.error;
            heap.push(Segment {
                a: worst.a,
                b: mid,
                value: v1,
                error: e1,
            });
            heap.push(Segment {
                a: mid,
                b: worst.b,
                value: v2,
                error: e2,
            });
            subdivisions += 1;
        }
        // re-sum from the segments
        let mut exact = vec![0.0; dim];
        for seg in heap.iter() {
            for d in 0..dim {
                exact[d] += seg.value[d];
            }
        }
        Ok(exact.into_iter().map(|v| sign * v).collect())
    }

    /// Integrates over consecutive pieces `[points[i], points[i+1]]`, which
    /// keeps kinks of piecewise integrands on segment boundaries.
    pub fn integrate_vec_pieces<F>(&self, f: F, dim: usize, points: &[f64]) -> Result<Vec<f64>>
    where
        F: Fn(f64, &mut [f64]),
    {
        let mut acc = vec![0.0; dim];
        for w in points.windows(2) {
            if w[1] > w[0] {
                let v = self.integrate_vec(&f, dim, w[0], w[1])?;
                for d in 0..dim {
                    acc[d] += v[d];
                }
            }
        }
        Ok(acc)
    }
}
