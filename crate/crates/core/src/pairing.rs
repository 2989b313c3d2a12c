//! Index conventions for the linear maps that appear in rough integrals.
//!
//! Every map is stored flattened, row-major, with the *output* index first:
//!
//! * `L(V, W)` with `V = R^d`, `W = R^w`: a vector of length `w·d`, entry
//!   `[i·d + l]` sends `e_l` to the `i`-th output coordinate.
//! * A Gubinelli derivative of a path in `R^n` is an `n × d` matrix, column `k`
//!   being the direction `e_k` of the driver. For an `L(V, W)`-valued path the
//!   derivative is `(w·d) × d` with row `i·d + l`.
//! * `L(V ⊗ V, W)` is a `w × d²` matrix, column `k·d + l` pairing with the
//!   tensor entry `[k, l]` (coefficient of `e_k ⊗ e_l`).
//!
//! With these conventions the compensation term of a rough integral,
//! `∂_X Y 𝕏`, is `Σ_{k,l} ∂Y[i·d + l, k] · 𝕏[k, l]`: the derivative slot acts
//! on the first tensor factor and the integrand slot on the second, which is
//! the identification `η(x)(y) = η(x ⊗ y)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayView3};

use crate::tensor::Tensor2;

/// `Y x` for `Y ∈ L(R^d, R^w)` flattened and `x ∈ R^d`.
pub fn apply_map(y: ArrayView1<f64>, x: ArrayView1<f64>) -> Array1<f64> {
    let d = x.len();
    let w = y.len() / d;
    let mut out = Array1::zeros(w);
    for i in 0..w {
        let mut acc = 0.0;
        for l in 0..d {
            acc += y[i * d + l] * x[l];
        }
        out[i] = acc;
    }
    out
}

/// `∂_X Y 𝕏` for an `L(V, W)`-valued path with derivative `(w·d) × d`.
pub fn apply_gubinelli(gub: ArrayView2<f64>, xx: &Tensor2) -> Array1<f64> {
    let d = xx.dim();
    let w = gub.nrows() / d;
    let mut out = Array1::zeros(w);
    for i in 0..w {
        let mut acc = 0.0;
        for k in 0..d {
            for l in 0..d {
                acc += gub[[i * d + l, k]] * xx.0[[k, l]];
            }
        }
        out[i] = acc;
    }
    out
}

/// The pairing `(ψ · φ)(v ⊗ v') = ψ(v)(φ(v'))` for `ψ ∈ L(V, L(U, W))` stored
/// as a `(w·m) × d` Gubinelli derivative and `φ ∈ L(V, U)` stored `m × d`.
///
/// Returns the `w × d²` matrix of the resulting element of `L(V ⊗ V, W)`.
pub fn psi_dot_phi(psi: ArrayView2<f64>, phi: ArrayView2<f64>) -> Array2<f64> {
    let (m, d) = phi.dim();
    let w = psi.nrows() / m;
    let mut out = Array2::zeros((w, d * d));
    for i in 0..w {
        for k in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += psi[[i * m + j, k]] * phi[[j, l]];
                }
                out[[i, k * d + l]] = acc;
            }
        }
    }
    out
}

/// `Dh ∘ φ` as an element of `L(V ⊗ V, W)`, where `Dh ∈ L(U, L(V, W))` is
/// stored `(w·d) × m` and `φ ∈ L(V, U)` is stored `m × d`.
///
/// Convention: `(Dh ∘ φ)(v ⊗ v') = (Dh(φ v))(v')`, i.e. row index `k` of the
/// tensor feeds `φ` and column index `l` feeds the `V` slot of `h`. Under this
/// convention `(∂_X Dg · φ) 𝕏 = (Dh ∘ φ) 𝕏*` whenever `∂_X Dg = (Dh)*`.
pub fn circ(dh: ArrayView2<f64>, phi: ArrayView2<f64>) -> Array2<f64> {
    let (m, d) = phi.dim();
    let w = dh.nrows() / d;
    let mut out = Array2::zeros((w, d * d));
    for i in 0..w {
        for k in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for j in 0..m {
                    acc += dh[[i * d + l, j]] * phi[[j, k]];
                }
                out[[i, k * d + l]] = acc;
            }
        }
    }
    out
}

/// `B (φ ⊗ φ)` for a bilinear `B ∈ L(U ⊗ U, W)` stored `w × m × m`.
pub fn quadratic_form(b: ArrayView3<f64>, phi: ArrayView2<f64>) -> Array2<f64> {
    let (m, d) = phi.dim();
    let w = b.dim().0;
    let mut out = Array2::zeros((w, d * d));
    for i in 0..w {
        for k in 0..d {
            for l in 0..d {
                let mut acc = 0.0;
                for p in 0..m {
                    for q in 0..m {
                        acc += b[[i, p, q]] * phi[[p, k]] * phi[[q, l]];
                    }
                }
                out[[i, k * d + l]] = acc;
            }
        }
    }
    out
}

/// Apply a `w × d²` element of `L(V ⊗ V, W)` to a tensor.
pub fn contract(c: ArrayView2<f64>, t: &Tensor2) -> Array1<f64> {
    let d = t.dim();
    let w = c.nrows();
    let mut out = Array1::zeros(w);
    for i in 0..w {
        let mut acc = 0.0;
        for k in 0..d {
            for l in 0..d {
                acc += c[[i, k * d + l]] * t.0[[k, l]];
            }
        }
        out[i] = acc;
    }
    out
}

/// Matrix product `A φ` with `A ∈ L(U, W)` flattened (`w·m`) and `φ` `m × d`.
pub fn compose(a: ArrayView1<f64>, phi: ArrayView2<f64>) -> Array2<f64> {
    let (m, d) = phi.dim();
    let w = a.len() / m;
    let mut out = Array2::zeros((w, d));
    for i in 0..w {
        for k in 0..d {
            let mut acc = 0.0;
            for j in 0..m {
                acc += a[i * m + j] * phi[[j, k]];
            }
            out[[i, k]] = acc;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};

    #[test]
    fn com_identity_holds_by_construction() {
        // w = 1, m = 2, d = 2; Dh stored (w*d) x m.
        let dh = array![[1.0, 2.0], [3.0, -1.0]];
        let phi = array![[0.5, -2.0], [1.5, 0.25]];
        // ∂_X Dg[(i*m + j), k] = Dh[(i*d + k), j]
        let mut dxdg = Array2::zeros((2, 2));
        for j in 0..2 {
            for k in 0..2 {
                dxdg[[j, k]] = dh[[k, j]];
            }
        }
        let xx = Tensor2(array![[0.3, -0.7], [1.1, 0.2]]);
        let lhs = contract(psi_dot_phi(dxdg.view(), phi.view()).view(), &xx);
        let rhs = contract(circ(dh.view(), phi.view()).view(), &xx.transpose());
        assert!((lhs[0] - rhs[0]).abs() < 1e-14);
        // and they differ on the untransposed tensor
        let wrong = contract(circ(dh.view(), phi.view()).view(), &xx);
        assert!((lhs[0] - wrong[0]).abs() > 1e-3);
    }

    #[test]
    fn gubinelli_is_psi_dot_identity() {
        let gub = array![[1.0, 2.0], [3.0, 4.0]]; // w = 1, d = 2
        let xx = Tensor2(array![[0.1, 0.2], [0.3, 0.4]]);
        let direct = apply_gubinelli(gub.view(), &xx);
        let eye = Array2::eye(2);
        let via = contract(psi_dot_phi(gub.view(), eye.view()).view(), &xx);
        assert!((direct[0] - via[0]).abs() < 1e-15);
        // Σ gub[l, k] xx[k, l] = 1*0.1 + 3*0.2 + 2*0.3 + 4*0.4
        assert!((direct[0] - 2.9).abs() < 1e-15);
    }

    #[test]
    fn quadratic_form_of_symmetric_bilinear() {
        let mut b = Array3::zeros((1, 2, 2));
        b[[0, 0, 0]] = 2.0;
        b[[0, 1, 1]] = -1.0;
        b[[0, 0, 1]] = 0.5;
        b[[0, 1, 0]] = 0.5;
        let phi = Array2::eye(2);
        let c = quadratic_form(b.view(), phi.view());
        assert_eq!(c, array![[2.0, 0.5, 0.5, -1.0]]);
    }
}
