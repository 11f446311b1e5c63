//! Dense row-major matrix kernels shared by forward and backward passes.
//!
//! All kernels accumulate into `out`, which the caller must have zeroed (or
//! pre-seeded when accumulation is intended).

use super::Scalar;

/// out += a @ b, with a: [m, k], b: [k, n], out: [m, n].
pub fn matmul_nn<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for j in 0..n {
                out_row[j] += av * b_row[j];
            }
        }
    }
}

/// out += a @ b^T, with a: [m, k], b: [n, k], out: [m, n].
pub fn matmul_nt<F: Scalar>(a: &[F], b: &[F], out: &mut [F], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(out.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = F::zero();
            for p in 0..k {
                acc += a_row[p] * b_row[p];
            }
            out[i * n + j] += acc;
        }
    }
}

/// out += a^T @ b, with a: [r, ca], b: [r, cb], out: [ca, cb].
pub fn matmul_tn<F: Scalar>(a: &[F], b: &[F], out: &mut [F], r: usize, ca: usize, cb: usize) {
    debug_assert_eq!(a.len(), r * ca);
    debug_assert_eq!(b.len(), r * cb);
    debug_assert_eq!(out.len(), ca * cb);
    for p in 0..r {
        let a_row = &a[p * ca..(p + 1) * ca];
        let b_row = &b[p * cb..(p + 1) * cb];
        for i in 0..ca {
            let av = a_row[i];
            if av == F::zero() {
                continue;
            }
            let out_row = &mut out[i * cb..(i + 1) * cb];
            for j in 0..cb {
                out_row[j] += av * b_row[j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nn_matches_hand_product() {
        // [[1,2],[3,4]] @ [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut out = [0.0f64; 4];
        matmul_nn(&a, &b, &mut out, 2, 2, 2);
        assert_eq!(out, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn nt_and_tn_agree_with_nn() {
        let a = [1.0, -2.0, 0.5, 3.0, 4.0, -1.0]; // [2,3]
        let b = [2.0, 0.0, 1.0, -1.0, 5.0, 2.0]; // [2,3] or [3,2]
        // a @ b^T where b: [2,3]
        let mut nt = [0.0f64; 4];
        matmul_nt(&a, &b, &mut nt, 2, 3, 2);
        // reference: transpose b into [3,2] then nn
        let bt = [2.0, -1.0, 0.0, 5.0, 1.0, 2.0];
        let mut reference = [0.0f64; 4];
        matmul_nn(&a, &bt, &mut reference, 2, 3, 2);
        assert_eq!(nt, reference);

        // a^T @ b where both are [2,3]
        let mut tn = [0.0f64; 9];
        matmul_tn(&a, &b, &mut tn, 2, 3, 3);
        let at = [1.0, 3.0, -2.0, 4.0, 0.5, -1.0]; // [3,2]
        let mut reference2 = [0.0f64; 9];
        matmul_nn(&at, &b, &mut reference2, 3, 2, 3);
        assert_eq!(tn, reference2);
    }
}
