//! Raw second-order centered differences on uniform grids.
//!
//! Polar stencils close the ends with mirror ghosts, `a(-θ) = a(θ)` and
//! `a(π + s) = a(π - s)`, which on a staggered grid means the ghost next to
//! node 0 equals node 0 and the ghost next to node N-1 equals node N-1.
//! Periodic stencils wrap along every axis of a row-major N^n block.

/// First and second θ-derivatives of an axisymmetric field on the staggered polar grid.
pub(crate) fn polar_derivatives(a: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = a.len();
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    let inv_2h = 0.5 / h;
    let inv_h2 = 1.0 / (h * h);
    for i in 0..n {
        let left = if i == 0 { a[0] } else { a[i - 1] };
        let right = if i + 1 == n { a[n - 1] } else { a[i + 1] };
        d1[i] = (right - left) * inv_2h;
        d2[i] = (right - 2.0 * a[i] + left) * inv_h2;
    }
    (d1, d2)
}

/// Row-major layout helper for an `n_nodes^dim` periodic block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Periodic {
    pub n_nodes: usize,
    pub dim: usize,
}

impl Periodic {
    pub fn len(&self) -> usize {
        self.n_nodes.pow(self.dim as u32)
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.n_nodes.pow((self.dim - 1 - axis) as u32)
    }

    /// Index of the neighbour `offset` cells away along `axis`, wrapping.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let stride = self.stride(axis);
        let coord = (idx / stride) % self.n_nodes;
        let n = self.n_nodes as isize;
        let moved = (coord as isize + offset).rem_euclid(n) as usize;
        idx + moved * stride - coord * stride
    }

    pub fn coords(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = idx % self.n_nodes;
            idx /= self.n_nodes;
        }
        out
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords.iter().fold(0, |acc, &c| acc * self.n_nodes + c % self.n_nodes)
    }

    /// Calls `f(i, plus, minus)` for every node with its two neighbours along `axis`.
    #[inline]
    fn along(&self, axis: usize, mut f: impl FnMut(usize, usize, usize)) {
        let n = self.n_nodes;
        let stride = self.stride(axis);
        let block = stride * n;
        for base in (0..self.len()).step_by(block) {
            for c in 0..n {
                let row = base + c * stride;
                let plus = base + if c + 1 == n { 0 } else { c + 1 } * stride;
                let minus = base + if c == 0 { n - 1 } else { c - 1 } * stride;
                for s in 0..stride {
                    f(row + s, plus + s, minus + s);
                }
            }
        }
    }

    pub fn d1(&self, a: &[f64], axis: usize, h: f64) -> Vec<f64> {
        let inv_2h = 0.5 / h;
        let mut out = vec![0.0; a.len()];
        self.along(axis, |i, p, m| out[i] = (a[p] - a[m]) * inv_2h);
        out
    }

    pub fn d2(&self, a: &[f64], axis: usize, h: f64) -> Vec<f64> {
        let inv_h2 = 1.0 / (h * h);
        let mut out = vec![0.0; a.len()];
        self.along(axis, |i, p, m| out[i] = (a[p] - 2.0 * a[i] + a[m]) * inv_h2);
        out
    }

    /// Centered mixed difference ∂²a/∂x_p∂x_q for p ≠ q.
    pub fn d11(&self, a: &[f64], p: usize, q: usize, h: f64) -> Vec<f64> {
        let inv = 0.25 / (h * h);
        (0..a.len())
            .map(|i| {
                let pp = self.shift(i, p, 1);
                let pm = self.shift(i, p, -1);
                (a[self.shift(pp, q, 1)] - a[self.shift(pp, q, -1)] - a[self.shift(pm, q, 1)]
                    + a[self.shift(pm, q, -1)])
                    * inv
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_shift_wraps() {
        let p = Periodic { n_nodes: 4, dim: 2 };
        let idx = p.index(&[3, 0]);
        assert_eq!(p.coords(p.shift(idx, 0, 1)), vec![0, 0]);
        assert_eq!(p.coords(p.shift(idx, 1, -1)), vec![3, 3]);
        assert_eq!(p.len(), 16);
    }

    #[test]
    fn blocked_differences_match_shifted_indexing() {
        let p = Periodic { n_nodes: 5, dim: 3 };
        let a: Vec<f64> = (0..p.len()).map(|i| ((i * 37) % 11) as f64).collect();
        for axis in 0..3 {
            let d1 = p.d1(&a, axis, 0.5);
            let d2 = p.d2(&a, axis, 0.5);
            for i in 0..p.len() {
                let (hi, lo) = (a[p.shift(i, axis, 1)], a[p.shift(i, axis, -1)]);
                assert_eq!(d1[i], (hi - lo) * 1.0);
                assert_eq!(d2[i], (hi - 2.0 * a[i] + lo) * 4.0);
            }
        }
    }

    #[test]
    fn polar_mirror_keeps_even_quadratic_exact() {
        // a = θ² sampled on the staggered grid near the north pole: the mirror
        // ghost reproduces (−h/2)² = (h/2)², so the stencils are exact there.
        let n = 16;
        let h = std::f64::consts::PI / n as f64;
        let theta: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
        let a: Vec<f64> = theta.iter().map(|t| t * t).collect();
        let (d1, d2) = polar_derivatives(&a, h);
        assert!((d2[0] - 2.0).abs() < 1e-10);
        assert!((d1[0] - 2.0 * theta[0]).abs() < 1e-12);
    }
}
