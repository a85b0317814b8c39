//! `C += A * B^T` for row-major `A` (m x k), `B` (n x k) and `C` (m x n).
//!
//! Every output element is a dot product of two contiguous rows, so weight
//! matrices stored one output channel per row are used in place. Tiles of
//! rows from both operands share each vector load; the widest instruction
//! set available at runtime is picked once per call. Summation order
//! depends only on the shapes, never on buffer addresses; vector loads are
//! aligned when both operands start on a 64-byte boundary (see
//! [`AlignedVec`]) and `k` is a multiple of eight.

use std::fmt;
use std::ops::{Deref, DerefMut};

use super::dot;

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct Line([f64; 8]);

/// `f64` storage that always starts on a cache-line boundary.
#[derive(Clone)]
pub struct AlignedVec {
    lines: Vec<Line>,
    len: usize,
}

impl AlignedVec {
    pub fn zeros(len: usize) -> Self {
        AlignedVec {
            lines: vec![Line([0.0; 8]); len.div_ceil(8)],
            len,
        }
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut v = AlignedVec::zeros(values.len());
        v.copy_from_slice(values);
        v
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.deref().to_vec()
    }
}

impl Deref for AlignedVec {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        // SAFETY: `Line` is `repr(C)` over `[f64; 8]`, so the lines form
        // one contiguous run of at least `len` initialized values.
        unsafe { std::slice::from_raw_parts(self.lines.as_ptr().cast::<f64>(), self.len) }
    }
}

impl DerefMut for AlignedVec {
    fn deref_mut(&mut self) -> &mut [f64] {
        // SAFETY: as in `deref`, with unique access through `&mut self`.
        unsafe { std::slice::from_raw_parts_mut(self.lines.as_mut_ptr().cast::<f64>(), self.len) }
    }
}

impl From<Vec<f64>> for AlignedVec {
    fn from(values: Vec<f64>) -> Self {
        AlignedVec::from_slice(&values)
    }
}

impl PartialEq for AlignedVec {
    fn eq(&self, other: &Self) -> bool {
        **self == **other
    }
}

impl fmt::Debug for AlignedVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}


pub(crate) fn gemm_nt_acc(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: feature checked above; bounds asserted on entry.
            unsafe { x86::gemm_avx512(a, b, c, m, n, k) };
            return;
        }
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: as above.
            unsafe { x86::gemm_avx2(a, b, c, m, n, k) };
            return;
        }
    }
    gemm_portable(a, b, c, m, n, k);
}

fn gemm_portable(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
    for j in 0..n {
        let b_row = &b[j * k..(j + 1) * k];
        for i in 0..m {
            c[i * n + j] += dot(&a[i * k..(i + 1) * k], b_row);
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod x86 {
    use std::arch::x86_64::*;

    const NR: usize = 4;
    /// Depth of one pass; keeps a tile's slices of both operands in L1.
    const KC: usize = 256;

    /// Unaligned load of eight lanes, written as an all-ones masked load.
    #[inline]
    #[target_feature(enable = "avx512f")]
    unsafe fn load512(ptr: *const f64) -> __m512d {
        _mm512_maskz_loadu_pd(0xff, ptr)
    }

    #[inline]
    #[target_feature(enable = "avx2")]
    unsafe fn load256(ptr: *const f64) -> __m256d {
        _mm256_maskload_pd(ptr, _mm256_set1_epi64x(-1))
    }

    fn depth_chunks(k: usize) -> impl Iterator<Item = (usize, usize)> {
        (0..k).step_by(KC).map(move |p0| (p0, (p0 + KC).min(k)))
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn gemm_avx512(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
        let full = n - n % NR;
        for (p0, p1) in depth_chunks(k) {
            for j in (0..full).step_by(NR) {
                let mut i = 0;
                while i < m {
                    match m - i {
                        1 => tile512::<1>(a, b, c, i, j, n, k, p0, p1),
                        2 => tile512::<2>(a, b, c, i, j, n, k, p0, p1),
                        3 => tile512::<3>(a, b, c, i, j, n, k, p0, p1),
                        _ => tile512::<4>(a, b, c, i, j, n, k, p0, p1),
                    }
                    i += 4;
                }
            }
        }
        super::gemm_tail(a, b, c, m, n, k, full);
    }

    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile512<const MR: usize>(
        a: &[f64],
        b: &[f64],
        c: &mut [f64],
        i0: usize,
        j0: usize,
        n: usize,
        k: usize,
        p0: usize,
        p1: usize,
    ) {
        let a_rows: [*const f64; MR] = std::array::from_fn(|r| a.as_ptr().wrapping_add((i0 + r) * k));
        let b_rows: [*const f64; NR] = std::array::from_fn(|q| b.as_ptr().wrapping_add((j0 + q) * k));
        let mut acc = [[_mm512_setzero_pd(); NR]; MR];
        let kv = p1 - (p1 - p0) % 8;
        let mut p = p0;
        while p < kv {
            let bv: [_; NR] = std::array::from_fn(|q| load512(b_rows[q].wrapping_add(p)));
            for (acc_r, row) in acc.iter_mut().zip(&a_rows) {
                let av = load512(row.wrapping_add(p));
                for (slot, bq) in acc_r.iter_mut().zip(&bv) {
                    *slot = _mm512_fmadd_pd(av, *bq, *slot);
                }
            }
            p += 8;
        }
        for (r, acc_r) in acc.iter().enumerate() {
            for (q, v) in acc_r.iter().enumerate() {
                let mut s = _mm512_reduce_add_pd(*v);
                for pp in kv..p1 {
                    s += a[(i0 + r) * k + pp] * b[(j0 + q) * k + pp];
                }
                c[(i0 + r) * n + j0 + q] += s;
            }
        }
    }

    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn gemm_avx2(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize) {
        let full = n - n % NR;
        for (p0, p1) in depth_chunks(k) {
            for j in (0..full).step_by(NR) {
                let mut i = 0;
                while i < m {
                    if m - i == 1 {
                        tile256::<1>(a, b, c, i, j, n, k, p0, p1);
                    } else {
                        tile256::<2>(a, b, c, i, j, n, k, p0, p1);
                    }
                    i += 2;
                }
            }
        }
        super::gemm_tail(a, b, c, m, n, k, full);
    }

    #[target_feature(enable = "avx2,fma")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile256<const MR: usize>(
        a: &[f64],
        b: &[f64],
        c: &mut [f64],
        i0: usize,
        j0: usize,
        n: usize,
        k: usize,
        p0: usize,
        p1: usize,
    ) {
        let a_rows: [*const f64; MR] = std::array::from_fn(|r| a.as_ptr().wrapping_add((i0 + r) * k));
        let b_rows: [*const f64; NR] = std::array::from_fn(|q| b.as_ptr().wrapping_add((j0 + q) * k));
        let mut acc = [[_mm256_setzero_pd(); NR]; MR];
        let kv = p1 - (p1 - p0) % 4;
        let mut p = p0;
        while p < kv {
            let bv: [_; NR] = std::array::from_fn(|q| load256(b_rows[q].wrapping_add(p)));
            for (acc_r, row) in acc.iter_mut().zip(&a_rows) {
                let av = load256(row.wrapping_add(p));
                for (slot, bq) in acc_r.iter_mut().zip(&bv) {
                    *slot = _mm256_fmadd_pd(av, *bq, *slot);
                }
            }
            p += 4;
        }
        for (r, acc_r) in acc.iter().enumerate() {
            for (q, v) in acc_r.iter().enumerate() {
                let mut lanes = [0.0f64; 4];
                _mm256_storeu_pd(lanes.as_mut_ptr(), *v);
                let mut s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
                for pp in kv..p1 {
                    s += a[(i0 + r) * k + pp] * b[(j0 + q) * k + pp];
                }
                c[(i0 + r) * n + j0 + q] += s;
            }
        }
    }
}

/// Columns `j0..n` that did not fill a whole tile.
#[cfg_attr(not(target_arch = "x86_64"), allow(dead_code))]
fn gemm_tail(a: &[f64], b: &[f64], c: &mut [f64], m: usize, n: usize, k: usize, j0: usize) {
    for j in j0..n {
        let b_row = &b[j * k..(j + 1) * k];
        for i in 0..m {
            c[i * n + j] += dot(&a[i * k..(i + 1) * k], b_row);
        }
    }
}
