//! Small dense linear-algebra helpers: matrix exponential and the
//! column-major vectorization used by the Liouvillian matrix.

use ndarray::Array2;
use ndarray_linalg::Inverse;
use num_complex::Complex64;

use crate::error::Result;

/// Matrix 1-norm (max column sum of absolute values).
fn norm_1(a: &Array2<Complex64>) -> f64 {
    let mut max = 0.0;
    for j in 0..a.ncols() {
        let s: f64 = a.column(j).iter().map(|z| z.norm()).sum();
        if s > max {
            max = s;
        }
    }
    max
}

/// Matrix exponential by scaling-and-squaring with a degree-13 Pade
/// approximant.
pub fn expm(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    const THETA_13: f64 = 5.371_920_351_148_152;
    #[rustfmt::skip]
    const B: [f64; 14] = [
        64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
        1187353796428800.0, 129060195264000.0, 10559470521600.0,
        670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
        960960.0, 16380.0, 182.0, 1.0,
    ];

    let n = a.nrows();
    let norm = norm_1(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a.mapv(|z| z / 2f64.powi(s));

    let eye = Array2::<Complex64>::eye(n);
    let a2 = scaled.dot(&scaled);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let cb = |k: usize| Complex64::new(B[k], 0.0);
    let u_inner = a6.mapv(|z| z * cb(13)) + a4.mapv(|z| z * cb(11)) + a2.mapv(|z| z * cb(9));
    let u_poly = a6.dot(&u_inner)
        + a6.mapv(|z| z * cb(7))
        + a4.mapv(|z| z * cb(5))
        + a2.mapv(|z| z * cb(3))
        + eye.mapv(|z| z * cb(1));
    let u = scaled.dot(&u_poly);

    let v_inner = a6.mapv(|z| z * cb(12)) + a4.mapv(|z| z * cb(10)) + a2.mapv(|z| z * cb(8));
    let v = a6.dot(&v_inner)
        + a6.mapv(|z| z * cb(6))
        + a4.mapv(|z| z * cb(4))
        + a2.mapv(|z| z * cb(2))
        + eye.mapv(|z| z * cb(0));

    let denom = &v - &u;
    let numer = &v + &u;
    let mut r = denom.inv()?.dot(&numer);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

/// Column-major vectorization: `vec(rho)[c*d + r] = rho[r, c]`.
pub fn vectorize(a: &Array2<Complex64>) -> Vec<Complex64> {
    let d = a.nrows();
    let mut v = vec![Complex64::new(0.0, 0.0); d * d];
    for c in 0..d {
        for r in 0..d {
            v[c * d + r] = a[[r, c]];
        }
    }
    v
}

/// Inverse of [`vectorize`].
pub fn unvectorize(v: &[Complex64], d: usize) -> Array2<Complex64> {
    let mut a = Array2::zeros((d, d));
    for c in 0..d {
        for r in 0..d {
            a[[r, c]] = v[c * d + r];
        }
    }
    a
}
