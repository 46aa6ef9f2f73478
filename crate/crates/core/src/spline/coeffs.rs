//! Central factorial numbers and the cell-average quasi-interpolation
//! weights `c_{p,j}`.

use std::collections::HashMap;

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::error::{Error, Result};

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Central factorial number of the first kind `t(i, j)`, exact.
pub fn central_factorial(i: usize, j: usize) -> BigRational {
    let mut memo = HashMap::new();
    central_factorial_memo(i, j, &mut memo)
}

fn central_factorial_memo(i: usize, j: usize, memo: &mut HashMap<(usize, usize), BigRational>) -> BigRational {
    if j > i {
        return BigRational::zero();
    }
    if j == i {
        return BigRational::one();
    }
    if j == 0 {
        return BigRational::zero();
    }
    if j == 1 {
        // t(i,1) = prod_{l=1}^{i-1} (i/2 - l), i >= 2.
        let mut p = BigRational::one();
        for l in 1..i {
            p *= rat(i as i64 - 2 * l as i64, 2);
        }
        return p;
    }
    if let Some(v) = memo.get(&(i, j)) {
        return v.clone();
    }
    let k = rat(i as i64 - 2, 2);
    let v = central_factorial_memo(i - 2, j - 2, memo) - &k * &k * central_factorial_memo(i - 2, j, memo);
    memo.insert((i, j), v.clone());
    v
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

fn binomial(n: usize, k: usize) -> BigInt {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Symmetric weights `c_{p,j}`, `j = -⌊p/2⌋..=⌊p/2⌋`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuasiCoeffTable {
    pub p: usize,
    /// Exact weights indexed by `j + ⌊p/2⌋`.
    pub exact: Vec<BigRational>,
    /// The same weights as reals.
    pub values: Vec<f64>,
}

impl QuasiCoeffTable {
    pub fn half_width(&self) -> usize {
        self.p / 2
    }

    /// `c_{p,j}` as a real.
    pub fn c(&self, j: i64) -> f64 {
        self.values[(j + self.half_width() as i64) as usize]
    }

    /// `c_{p,j}` as a reduced fraction string such as `-107/288`.
    pub fn fraction(&self, j: i64) -> String {
        self.exact[(j + self.half_width() as i64) as usize].to_string()
    }
}

/// Weights `c_{p,j}` for `1 ≤ p ≤ 5`.
///
/// The outer sum runs over `l = 0..=⌊p/2⌋`; with this range the formula
/// reproduces the published table for every `p`.
pub fn quasi_coeffs(p: usize) -> Result<QuasiCoeffTable> {
    if !(1..=5).contains(&p) {
        return Err(Error::InvalidArgument(format!("quasi-interpolation degree {p} outside 1..=5")));
    }
    let half = p / 2;
    let ceil_half = (p + 2) / 2;
    let mut exact = vec![BigRational::zero(); 2 * half + 1];
    for l in 0..=half {
        let weight = central_factorial(2 * l + p + 1, p + 1)
            / BigRational::from_integer(binomial(2 * l + p + 1, p + 1));
        for i in 0..=2 * l {
            // Kronecker delta: the term lands on j = l - i + ceil((p+1)/2) - 1 - floor(p/2).
            let j = l as i64 - i as i64 + ceil_half as i64 - 1 - half as i64;
            if j.unsigned_abs() as usize > half {
                continue;
            }
            let sign = if i % 2 == 0 { BigInt::one() } else { -BigInt::one() };
            let term = BigRational::new(sign, factorial(i) * factorial(2 * l - i));
            exact[(j + half as i64) as usize] += &weight * term;
        }
    }
    let values = exact.iter().map(|r| r.to_f64().unwrap_or(f64::NAN)).collect();
    Ok(QuasiCoeffTable { p, exact, values })
}

/// `L_p` at cell `(n1, n2)`: `Σ c_{p,j1} c_{p,j2} f̄_{n1+j1, n2+j2}`.
pub fn local_op_l(
    table: &QuasiCoeffTable,
    n1: i64,
    n2: i64,
    fetch: impl Fn(i64, i64) -> Option<f64>,
) -> Result<f64> {
    let m = table.half_width() as i64;
    let mut sum = 0.0;
    for j2 in -m..=m {
        let mut row = 0.0;
        for j1 in -m..=m {
            let v = fetch(n1 + j1, n2 + j2).ok_or(Error::IncompleteWindow(n1 + j1, n2 + j2))?;
            row += table.c(j1) * v;
        }
        sum += table.c(j2) * row;
    }
    Ok(sum)
}

/// Whether every weight pair is symmetric and the weights sum to one.
pub fn table_is_consistent(table: &QuasiCoeffTable) -> bool {
    let m = table.half_width();
    let symmetric = (0..m).all(|k| table.exact[k] == table.exact[2 * m - k]);
    let sum: BigRational = table.exact.iter().cloned().sum();
    symmetric && sum.is_one()
}
