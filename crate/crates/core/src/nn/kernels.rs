//! Matrix products with a sliding right-hand operand, the inner loops of the convolutions.
//!
//! Both products read `B` through `taps` views, each `shift` columns further along the rows:
//!
//! * [`shifted_gemm`]: `C[m][n] += Σ_j Σ_k A_j[m][k] · B[k][n + j·shift]`
//! * [`shifted_gemm_nt`]: `C_j[m][k] += Σ_n A[m][n] · B[k][n + j·shift]`
//!
//! AVX-512 register-blocked kernels are used when the CPU has them; otherwise every tap is one
//! call into `matrixmultiply`.

use std::sync::OnceLock;

fn has_avx512() -> bool {
    static FLAG: OnceLock<bool> = OnceLock::new();
    *FLAG.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            std::env::var_os("CHOIRF0_NO_AVX512").is_none() && is_x86_feature_detected!("avx512f")
        }
        #[cfg(not(target_arch = "x86_64"))]
        {
            false
        }
    })
}

/// Rows of `A` per register tile in [`shifted_gemm`].
const MR: usize = 8;

/// `taps` matrices `A_j` of shape `m × k`, repacked so that a register tile reads them
/// sequentially: per tile of up to [`MR`] rows, `[tap][k][row]`.
#[derive(Debug, Clone)]
pub struct PackedA {
    data: Vec<f32>,
    taps: usize,
    m: usize,
    k: usize,
}

impl PackedA {
    /// `a` is `[taps][m][k]` row-major.
    pub fn new(a: &[f32], taps: usize, m: usize, k: usize) -> Self {
        assert_eq!(a.len(), taps * m * k);
        let mut data = Vec::with_capacity(a.len());
        for m0 in (0..m).step_by(MR) {
            let mr = MR.min(m - m0);
            for j in 0..taps {
                for kk in 0..k {
                    for r in 0..mr {
                        data.push(a[(j * m + m0 + r) * k + kk]);
                    }
                }
            }
        }
        Self { data, taps, m, k }
    }

    /// Builds `A'_j[k][m] = A_{taps-1-j}[m][k]` from `[taps][m][k]`: transposed, taps reversed.
    pub fn transposed_reversed(a: &[f32], taps: usize, m: usize, k: usize) -> Self {
        let mut t = vec![0f32; a.len()];
        for j in 0..taps {
            let src = &a[(taps - 1 - j) * m * k..][..m * k];
            let dst = &mut t[j * m * k..][..m * k];
            for r in 0..m {
                for c in 0..k {
                    dst[c * m + r] = src[r * k + c];
                }
            }
        }
        Self::new(&t, taps, k, m)
    }

    pub fn rows(&self) -> usize {
        self.m
    }

    pub fn inner(&self) -> usize {
        self.k
    }

    fn tile(&self, m0: usize) -> &[f32] {
        &self.data[m0 * self.taps * self.k..][..MR.min(self.m - m0) * self.taps * self.k]
    }
}

fn check_shifted(rows: usize, n: usize, b: &[f32], ldb: usize, taps: usize, shift: usize) {
    if rows > 0 && n > 0 {
        assert!(
            (rows - 1) * ldb + (taps - 1) * shift + n <= b.len(),
            "shifted operand view out of bounds"
        );
    }
}

/// `C[m][n] += Σ_j Σ_k A_j[m][k] · B[k·ldb + j·shift + n]` for `n < n_cols`.
pub fn shifted_gemm(a: &PackedA, n_cols: usize, b: &[f32], ldb: usize, shift: usize, c: &mut [f32], ldc: usize) {
    let (m, k, taps) = (a.m, a.k, a.taps);
    if m == 0 || n_cols == 0 || k == 0 {
        return;
    }
    check_shifted(k, n_cols, b, ldb, taps, shift);
    assert!((m - 1) * ldc + n_cols <= c.len(), "output view out of bounds");
    #[cfg(target_arch = "x86_64")]
    if has_avx512() {
        // SAFETY: the feature is present and all views were bounds-checked above.
        unsafe { avx512::shifted_gemm(a, n_cols, b, ldb, shift, c, ldc) };
        return;
    }
    for m0 in (0..m).step_by(MR) {
        let mr = MR.min(m - m0);
        let tile = a.tile(m0);
        for j in 0..taps {
            // SAFETY: views checked above; `c` is exclusively borrowed.
            unsafe {
                matrixmultiply::sgemm(
                    mr,
                    k,
                    n_cols,
                    1.0,
                    tile[j * k * mr..].as_ptr(),
                    1,
                    mr as isize,
                    b[j * shift..].as_ptr(),
                    ldb as isize,
                    1,
                    1.0,
                    c[m0 * ldc..].as_mut_ptr(),
                    ldc as isize,
                    1,
                );
            }
        }
    }
}

/// `C[(j·m + r)·k + q] += Σ_n A[r·lda + n] · B[q·ldb + j·shift + n]` for `n < n_cols`.
#[allow(clippy::too_many_arguments)]
pub fn shifted_gemm_nt(
    m: usize,
    k: usize,
    taps: usize,
    n_cols: usize,
    a: &[f32],
    lda: usize,
    b: &[f32],
    ldb: usize,
    shift: usize,
    c: &mut [f32],
) {
    if m == 0 || k == 0 || n_cols == 0 {
        return;
    }
    assert!((m - 1) * lda + n_cols <= a.len(), "left operand view out of bounds");
    check_shifted(k, n_cols, b, ldb, taps, shift);
    assert!(taps * m * k <= c.len(), "output out of bounds");
    #[cfg(target_arch = "x86_64")]
    if has_avx512() {
        // SAFETY: the feature is present and all views were bounds-checked above.
        unsafe { avx512::shifted_gemm_nt(m, k, taps, n_cols, a, lda, b, ldb, shift, c) };
        return;
    }
    for j in 0..taps {
        // SAFETY: views checked above; `c` is exclusively borrowed.
        unsafe {
            matrixmultiply::sgemm(
                m,
                n_cols,
                k,
                1.0,
                a.as_ptr(),
                lda as isize,
                1,
                b[j * shift..].as_ptr(),
                1,
                ldb as isize,
                1.0,
                c[j * m * k..].as_mut_ptr(),
                k as isize,
                1,
            );
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx512 {
    use std::arch::x86_64::*;

    use super::{PackedA, MR};

    /// Inner-dimension block kept hot in L2 by [`shifted_gemm`].
    const KC: usize = 64;
    /// Budget for the shifted rows of `B` read in one pass of [`shifted_gemm`].
    const TAP_BYTES: usize = 256 * 1024;
    /// Column block of [`shifted_gemm`].
    const NB: usize = 48 * 8;
    /// Column block of [`shifted_gemm_nt`].
    const NC: usize = 1536;

    #[inline(always)]
    fn tail_masks(rem: usize) -> [__mmask16; 3] {
        let m = |lo: usize| -> __mmask16 {
            let r = rem.saturating_sub(lo).min(16);
            if r == 16 {
                0xffff
            } else {
                ((1u32 << r) - 1) as __mmask16
            }
        };
        [m(0), m(16), m(32)]
    }

    /// One `R × 48` tile of `C`, accumulating `kc` inner steps for every tap.
    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile<const R: usize>(
        kc: usize,
        taps: usize,
        ap: *const f32,
        a_tap_stride: usize,
        b: *const f32,
        ldb: usize,
        shift: usize,
        c: *mut f32,
        ldc: usize,
        masks: [__mmask16; 3],
    ) {
        let mut acc = [[_mm512_setzero_ps(); 3]; R];
        for (r, row) in acc.iter_mut().enumerate() {
            for (v, x) in row.iter_mut().enumerate() {
                *x = _mm512_maskz_loadu_ps(masks[v], c.add(r * ldc + 16 * v));
            }
        }
        for j in 0..taps {
            let aj = ap.add(j * a_tap_stride);
            let bj = b.add(j * shift);
            for kk in 0..kc {
                let bp = bj.add(kk * ldb);
                let b0 = _mm512_maskz_loadu_ps(masks[0], bp);
                let b1 = _mm512_maskz_loadu_ps(masks[1], bp.add(16));
                let b2 = _mm512_maskz_loadu_ps(masks[2], bp.add(32));
                let ak = aj.add(kk * R);
                for (r, row) in acc.iter_mut().enumerate() {
                    let av = _mm512_set1_ps(*ak.add(r));
                    row[0] = _mm512_fmadd_ps(av, b0, row[0]);
                    row[1] = _mm512_fmadd_ps(av, b1, row[1]);
                    row[2] = _mm512_fmadd_ps(av, b2, row[2]);
                }
            }
        }
        for (r, row) in acc.iter().enumerate() {
            for (v, x) in row.iter().enumerate() {
                _mm512_mask_storeu_ps(c.add(r * ldc + 16 * v), masks[v], *x);
            }
        }
    }

    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn tile_dispatch(
        rows: usize,
        kc: usize,
        taps: usize,
        ap: *const f32,
        a_tap_stride: usize,
        b: *const f32,
        ldb: usize,
        shift: usize,
        c: *mut f32,
        ldc: usize,
        masks: [__mmask16; 3],
    ) {
        macro_rules! go {
            ($r:literal) => {
                tile::<$r>(kc, taps, ap, a_tap_stride, b, ldb, shift, c, ldc, masks)
            };
        }
        match rows {
            8 => go!(8),
            7 => go!(7),
            6 => go!(6),
            5 => go!(5),
            4 => go!(4),
            3 => go!(3),
            2 => go!(2),
            1 => go!(1),
            _ => unreachable!("tile rows are 1..=8"),
        }
    }

    #[target_feature(enable = "avx512f")]
    pub(super) unsafe fn shifted_gemm(
        a: &PackedA,
        n_cols: usize,
        b: &[f32],
        ldb: usize,
        shift: usize,
        c: &mut [f32],
        ldc: usize,
    ) {
        let (m, k, taps) = (a.m, a.k, a.taps);
        let bp = b.as_ptr();
        let cp = c.as_mut_ptr();
        for k0 in (0..k).step_by(KC) {
            let kc = KC.min(k - k0);
            // Taps per pass, so that the rows of `B` a column block touches stay in L2.
            let tb = (TAP_BYTES / (4 * kc * shift.max(1))).clamp(1, taps);
            for j0 in (0..taps).step_by(tb) {
                let nt = tb.min(taps - j0);
                for n0 in (0..n_cols).step_by(NB) {
                    let nb = NB.min(n_cols - n0);
                    for m0 in (0..m).step_by(MR) {
                        let mr = MR.min(m - m0);
                        let tile_a = a.tile(m0).as_ptr().add((j0 * k + k0) * mr);
                        for n1 in (n0..n0 + nb).step_by(48) {
                            let masks = tail_masks(n0 + nb - n1);
                            tile_dispatch(
                                mr,
                                kc,
                                nt,
                                tile_a,
                                k * mr,
                                bp.add(k0 * ldb + j0 * shift + n1),
                                ldb,
                                shift,
                                cp.add(m0 * ldc + n1),
                                ldc,
                                masks,
                            );
                        }
                    }
                }
            }
        }
    }

    /// `R × Q` dot products over `len` columns, added into `c` (row stride `ldc`).
    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn dots<const R: usize, const Q: usize>(
        len: usize,
        a: *const f32,
        lda: usize,
        b: *const f32,
        ldb: usize,
        c: *mut f32,
        ldc: usize,
    ) {
        let mut acc = [[_mm512_setzero_ps(); Q]; R];
        #[inline(always)]
        unsafe fn step<const R: usize, const Q: usize>(
            acc: &mut [[__m512; Q]; R],
            mask: __mmask16,
            a: *const f32,
            lda: usize,
            b: *const f32,
            ldb: usize,
        ) {
            let mut bv = [_mm512_setzero_ps(); Q];
            for (q, v) in bv.iter_mut().enumerate() {
                *v = _mm512_maskz_loadu_ps(mask, b.add(q * ldb));
            }
            for (r, row) in acc.iter_mut().enumerate() {
                let av = _mm512_maskz_loadu_ps(mask, a.add(r * lda));
                for (q, x) in row.iter_mut().enumerate() {
                    *x = _mm512_fmadd_ps(av, bv[q], *x);
                }
            }
        }
        let full = len / 16 * 16;
        for n in (0..full).step_by(16) {
            step(&mut acc, 0xffff, a.add(n), lda, b.add(n), ldb);
        }
        if full < len {
            let mask = ((1u32 << (len - full)) - 1) as __mmask16;
            step(&mut acc, mask, a.add(full), lda, b.add(full), ldb);
        }
        for (r, row) in acc.iter().enumerate() {
            for (q, x) in row.iter().enumerate() {
                *c.add(r * ldc + q) += _mm512_reduce_add_ps(*x);
            }
        }
    }

    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    unsafe fn dots_dispatch(
        r: usize,
        q: usize,
        len: usize,
        a: *const f32,
        lda: usize,
        b: *const f32,
        ldb: usize,
        c: *mut f32,
        ldc: usize,
    ) {
        macro_rules! go {
            ($r:literal, $q:literal) => {
                dots::<$r, $q>(len, a, lda, b, ldb, c, ldc)
            };
        }
        macro_rules! by_q {
            ($r:literal) => {
                match q {
                    6 => go!($r, 6),
                    5 => go!($r, 5),
                    4 => go!($r, 4),
                    3 => go!($r, 3),
                    2 => go!($r, 2),
                    1 => go!($r, 1),
                    _ => unreachable!("dot tile columns are 1..=6"),
                }
            };
        }
        match r {
            4 => by_q!(4),
            3 => by_q!(3),
            2 => by_q!(2),
            1 => by_q!(1),
            _ => unreachable!("dot tile rows are 1..=4"),
        }
    }

    #[target_feature(enable = "avx512f")]
    #[allow(clippy::too_many_arguments)]
    pub(super) unsafe fn shifted_gemm_nt(
        m: usize,
        k: usize,
        taps: usize,
        n_cols: usize,
        a: &[f32],
        lda: usize,
        b: &[f32],
        ldb: usize,
        shift: usize,
        c: &mut [f32],
    ) {
        const R: usize = 4;
        const Q: usize = 4;
        let (ap, bp, cp) = (a.as_ptr(), b.as_ptr(), c.as_mut_ptr());
        for n0 in (0..n_cols).step_by(NC) {
            let len = NC.min(n_cols - n0);
            // Taps innermost over a few rows of `B`: consecutive taps read overlapping windows.
            for q0 in (0..k).step_by(Q) {
                let q = Q.min(k - q0);
                for j in 0..taps {
                    for r0 in (0..m).step_by(R) {
                        let r = R.min(m - r0);
                        dots_dispatch(
                            r,
                            q,
                            len,
                            ap.add(r0 * lda + n0),
                            lda,
                            bp.add(q0 * ldb + j * shift + n0),
                            ldb,
                            cp.add((j * m + r0) * k + q0),
                            k,
                        );
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn shifted_gemm_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for &(m, k, taps, n, shift) in &[(8, 5, 3, 48, 4), (13, 70, 4, 101, 7), (1, 3, 1, 17, 1), (25, 64, 2, 400, 50), (32, 192, 2, 1000, 50)] {
            let ldb = n + (taps - 1) * shift + 3;
            let a = rand_vec(taps * m * k, &mut rng);
            let b = rand_vec(k * ldb, &mut rng);
            let ldc = n + 2;
            let mut c = rand_vec(m * ldc, &mut rng);
            let mut want: Vec<f64> = c.iter().map(|&v| v as f64).collect();
            for j in 0..taps {
                for r in 0..m {
                    for q in 0..k {
                        let av = a[(j * m + r) * k + q] as f64;
                        for col in 0..n {
                            want[r * ldc + col] += av * b[q * ldb + j * shift + col] as f64;
                        }
                    }
                }
            }
            shifted_gemm(&PackedA::new(&a, taps, m, k), n, &b, ldb, shift, &mut c, ldc);
            for (i, (x, y)) in c.iter().zip(&want).enumerate() {
                assert!((*x as f64 - y).abs() < 1e-3 * (1.0 + y.abs()), "{:?} at {i}: {x} vs {y}", (m, k, taps, n));
            }
        }
    }

    #[test]
    fn shifted_gemm_nt_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(m, k, taps, n, shift) in &[(4, 6, 2, 40, 3), (9, 13, 3, 2000, 11), (1, 1, 1, 5, 1), (32, 192, 2, 300, 50)] {
            let lda = n + 1;
            let ldb = n + (taps - 1) * shift + 2;
            let a = rand_vec(m * lda, &mut rng);
            let b = rand_vec(k * ldb, &mut rng);
            let mut c = rand_vec(taps * m * k, &mut rng);
            let mut want: Vec<f64> = c.iter().map(|&v| v as f64).collect();
            for j in 0..taps {
                for r in 0..m {
                    for q in 0..k {
                        let s: f64 = (0..n).map(|col| a[r * lda + col] as f64 * b[q * ldb + j * shift + col] as f64).sum();
                        want[(j * m + r) * k + q] += s;
                    }
                }
            }
            shifted_gemm_nt(m, k, taps, n, &a, lda, &b, ldb, shift, &mut c);
            for (x, y) in c.iter().zip(&want) {
                assert!((*x as f64 - y).abs() < 1e-3 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }
    }

    #[test]
    fn transposed_reversed_packing() {
        // taps=2, m=2, k=3
        let a: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let p = PackedA::transposed_reversed(&a, 2, 2, 3);
        assert_eq!((p.rows(), p.inner()), (3, 2));
        // Tap 0 of the result is tap 1 of `a` transposed: rows [6,9],[7,10],[8,11], packed
        // [tap][k][row] for a single 3-row tile.
        assert_eq!(&p.data[..6], &[6.0, 7.0, 8.0, 9.0, 10.0, 11.0]);
    }
}
