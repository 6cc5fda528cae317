//! Dense matrix exponential (scaling and squaring with a degree-13 Padé
//! approximant) and dense φ-functions through block augmentation.

use nalgebra::DMatrix;

use super::PhiError;

const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371_920_351_148_152;

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `e^M` for a square matrix.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>, PhiError> {
    if !m.is_square() {
        return Err(PhiError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let norm = norm1(m);
    if !norm.is_finite() {
        return Err(PhiError::NonFinite);
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = m * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]) + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]) + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).ok_or(PhiError::NonFinite)?;
    for _ in 0..s {
        r = &r * &r;
    }
    if r.iter().all(|x| x.is_finite()) {
        Ok(r)
    } else {
        Err(PhiError::NonFinite)
    }
}

/// `[φ_0(M), …, φ_{l_max}(M)]` from the exponential of the block matrix
/// `[[M, I, 0, …], [0, 0, I, …], …, [0, …, 0]]`, whose first block row holds
/// every φ_l(M).
pub fn phi_dense(l_max: usize, m: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>, PhiError> {
    if !m.is_square() {
        return Err(PhiError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    let n = m.nrows();
    let size = n * (l_max + 1);
    let mut big = DMatrix::zeros(size, size);
    big.view_mut((0, 0), (n, n)).copy_from(m);
    for blk in 0..l_max {
        for i in 0..n {
            big[(blk * n + i, (blk + 1) * n + i)] = 1.0;
        }
    }
    let e = expm(&big)?;
    Ok((0..=l_max)
        .map(|l| e.view((0, l * n), (n, n)).into_owned())
        .collect())
}
