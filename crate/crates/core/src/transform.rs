//! Monotone increasing one-dimensional diffeomorphisms.
//!
//! Used both for reparametrizations `φ: Θ → Θ̃` and for measurement maps
//! `ψ: 𝓧 → 𝓧̃`. Every map supplies its inverse and derivative analytically.

use std::fmt;
use std::sync::Arc;

pub trait Diffeomorphism: Send + Sync + fmt::Debug {
    fn forward(&self, t: f64) -> f64;
    fn inverse(&self, y: f64) -> f64;
    /// `dφ/dt`, strictly positive on the working interval.
    fn derivative(&self, t: f64) -> f64;

    /// `(φ⁻¹)′(y) = 1 / φ′(φ⁻¹(y))`.
    fn inverse_derivative(&self, y: f64) -> f64 {
        1.0 / self.derivative(self.inverse(y))
    }
}

impl<D: Diffeomorphism + ?Sized> Diffeomorphism for Arc<D> {
    fn forward(&self, t: f64) -> f64 {
        (**self).forward(t)
    }
    fn inverse(&self, y: f64) -> f64 {
        (**self).inverse(y)
    }
    fn derivative(&self, t: f64) -> f64 {
        (**self).derivative(t)
    }
    fn inverse_derivative(&self, y: f64) -> f64 {
        (**self).inverse_derivative(y)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Identity;

impl Diffeomorphism for Identity {
    fn forward(&self, t: f64) -> f64 {
        t
    }
    fn inverse(&self, y: f64) -> f64 {
        y
    }
    fn derivative(&self, _t: f64) -> f64 {
        1.0
    }
}

/// `t ↦ exp(t)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Exp;

impl Diffeomorphism for Exp {
    fn forward(&self, t: f64) -> f64 {
        t.exp()
    }
    fn inverse(&self, y: f64) -> f64 {
        y.ln()
    }
    fn derivative(&self, t: f64) -> f64 {
        t.exp()
    }
    fn inverse_derivative(&self, y: f64) -> f64 {
        1.0 / y
    }
}

/// `t ↦ ln(t)` on `t > 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Log;

impl Diffeomorphism for Log {
    fn forward(&self, t: f64) -> f64 {
        t.ln()
    }
    fn inverse(&self, y: f64) -> f64 {
        y.exp()
    }
    fn derivative(&self, t: f64) -> f64 {
        1.0 / t
    }
    fn inverse_derivative(&self, y: f64) -> f64 {
        y.exp()
    }
}

/// `t ↦ scale·t + shift` with `scale > 0`.
#[derive(Debug, Clone, Copy)]
pub struct Affine {
    scale: f64,
    shift: f64,
}

impl Affine {
    pub fn new(scale: f64, shift: f64) -> Self {
        assert!(
            scale > 0.0 && scale.is_finite(),
            "affine scale must be positive"
        );
        Affine { scale, shift }
    }
}

impl Diffeomorphism for Affine {
    fn forward(&self, t: f64) -> f64 {
        self.scale * t + self.shift
    }
    fn inverse(&self, y: f64) -> f64 {
        (y - self.shift) / self.scale
    }
    fn derivative(&self, _t: f64) -> f64 {
        self.scale
    }
    fn inverse_derivative(&self, _y: f64) -> f64 {
        1.0 / self.scale
    }
}

/// The inverse map of `D`.
#[derive(Debug, Clone)]
pub struct Inverted<D>(pub D);

impl<D: Diffeomorphism> Diffeomorphism for Inverted<D> {
    fn forward(&self, t: f64) -> f64 {
        self.0.inverse(t)
    }
    fn inverse(&self, y: f64) -> f64 {
        self.0.forward(y)
    }
    fn derivative(&self, t: f64) -> f64 {
        self.0.inverse_derivative(t)
    }
    fn inverse_derivative(&self, y: f64) -> f64 {
        self.0.derivative(y)
    }
}
