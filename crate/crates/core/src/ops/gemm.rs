//! Small row-major matrix-multiply microkernel shared by the convolution
//! kernels: `out[m][j] = init[m] + sum_k a[m][k] * b[k][j]`.
//!
//! Accumulation runs k-ascending per output element with the partial sum held
//! in registers, so results are bit-identical to a naive per-element loop in
//! the same tap order, independent of tiling and thread count.

const TILE: usize = 16;

/// `out` is fully overwritten: each row starts at `init[m]` (or zero).
pub(crate) fn gemm_bias(
    a: &[f64],
    b: &[f64],
    init: Option<&[f64]>,
    out: &mut [f64],
    m_n: usize,
    k_n: usize,
    j_n: usize,
) {
    debug_assert_eq!(a.len(), m_n * k_n);
    debug_assert_eq!(b.len(), k_n * j_n);
    debug_assert_eq!(out.len(), m_n * j_n);
    let mut j0 = 0;
    while j0 + TILE <= j_n {
        for m in 0..m_n {
            let arow = &a[m * k_n..(m + 1) * k_n];
            let start = init.map(|v| v[m]).unwrap_or(0.0);
            let mut acc = [start; TILE];
            for (k, &w) in arow.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let brow = &b[k * j_n + j0..k * j_n + j0 + TILE];
                for t in 0..TILE {
                    acc[t] += w * brow[t];
                }
            }
            out[m * j_n + j0..m * j_n + j0 + TILE].copy_from_slice(&acc);
        }
        j0 += TILE;
    }
    if j0 < j_n {
        let rest = j_n - j0;
        for m in 0..m_n {
            let arow = &a[m * k_n..(m + 1) * k_n];
            let start = init.map(|v| v[m]).unwrap_or(0.0);
            for t in 0..rest {
                let mut acc = start;
                for (k, &w) in arow.iter().enumerate() {
                    acc += w * b[k * j_n + j0 + t];
                }
                out[m * j_n + j0 + t] = acc;
            }
        }
    }
}
