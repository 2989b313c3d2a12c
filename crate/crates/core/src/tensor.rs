use std::ops::{Add, AddAssign, Mul, Sub};

use ndarray::{Array2, ArrayView1};

/// An element of `V ⊗ V` for `V = R^d`, stored as a `d × d` matrix.
///
/// Entry `[k, l]` is the coefficient of `e_k ⊗ e_l`. For a second-level
/// rough path increment this is `∫ X^k_{s,u} dX^l_u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2(pub Array2<f64>);

impl Tensor2 {
    pub fn zeros(d: usize) -> Self {
        Self(Array2::zeros((d, d)))
    }

    pub fn identity(d: usize) -> Self {
        Self(Array2::eye(d))
    }

    /// `x ⊗ y`.
    pub fn outer(x: ArrayView1<f64>, y: ArrayView1<f64>) -> Self {
        let d = x.len();
        let mut m = Array2::zeros((d, y.len()));
        for k in 0..d {
            for l in 0..y.len() {
                m[[k, l]] = x[k] * y[l];
            }
        }
        Self(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Transpose, `(x ⊗ y)* = y ⊗ x`.
    pub fn transpose(&self) -> Self {
        Self(self.0.t().to_owned())
    }

    /// `½(A + Aᵀ)`.
    pub fn sym(&self) -> Self {
        Self((&self.0 + &self.0.t()) * 0.5)
    }

    /// `½(A − Aᵀ)`; its `[0, 1]` entry is the Lévy area in `d = 2`.
    pub fn antisym(&self) -> Self {
        Self((&self.0 - &self.0.t()) * 0.5)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.0[[k, l]]
    }

    /// Max absolute asymmetry `|A − Aᵀ|_max`.
    pub fn asymmetry(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for k in 0..d {
            for l in 0..d {
                worst = worst.max((self.0[[k, l]] - self.0[[l, k]]).abs());
            }
        }
        worst
    }
}

impl Add for Tensor2 {
    type Output = Tensor2;
    fn add(self, rhs: Tensor2) -> Tensor2 {
        Tensor2(self.0 + rhs.0)
    }
}

impl Add<&Tensor2> for &Tensor2 {
    type Output = Tensor2;
    fn add(self, rhs: &Tensor2) -> Tensor2 {
        Tensor2(&self.0 + &rhs.0)
    }
}

impl AddAssign<&Tensor2> for Tensor2 {
    fn add_assign(&mut self, rhs: &Tensor2) {
        self.0 += &rhs.0;
    }
}

impl Sub for Tensor2 {
    type Output = Tensor2;
    fn sub(self, rhs: Tensor2) -> Tensor2 {
        Tensor2(self.0 - rhs.0)
    }
}

impl Sub<&Tensor2> for &Tensor2 {
    type Output = Tensor2;
    fn sub(self, rhs: &Tensor2) -> Tensor2 {
        Tensor2(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for Tensor2 {
    type Output = Tensor2;
    fn mul(self, rhs: f64) -> Tensor2 {
        Tensor2(self.0 * rhs)
    }
}

/// Euclidean norm of a vector.
pub fn norm(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Sup norm of a vector.
pub fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sym_plus_antisym_recovers_tensor() {
        let a = Tensor2(array![[1.0, 2.0], [-3.0, 4.0]]);
        let back = a.sym() + a.antisym();
        assert_eq!(back, a);
        assert_eq!(a.sym().0, array![[1.0, -0.5], [-0.5, 4.0]]);
    }

    #[test]
    fn outer_and_transpose() {
        let x = array![1.0, 2.0];
        let y = array![3.0, -1.0];
        let t = Tensor2::outer(x.view(), y.view());
        assert_eq!(t.transpose(), Tensor2::outer(y.view(), x.view()));
        assert!((t.frobenius() - (9.0f64 + 1.0 + 36.0 + 4.0).sqrt()).abs() < 1e-15);
    }
}
