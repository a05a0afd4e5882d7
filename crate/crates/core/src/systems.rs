//! Benchmark plants: single pendulum, double pendulum with torque at the
//! middle joint, cart-pole, and a scalar linear system with closed-form
//! sensitivities.
//!
//! All pole angles are measured from the upright vertical, so `θ = 0` is the
//! balanced state and `θ = π` hangs down.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{StateVector, SystemModel};

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumParams {
    pub mass: f64,
    pub length: f64,
    pub gravity: f64,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            mass: 1.0,
            length: 1.0,
            gravity: 9.81,
        }
    }
}

/// Torque-driven pendulum, state `(θ, θ̇)`:
/// `θ̈ = (gravity/l)·sin θ + a/(m·l²)`.
#[derive(Debug, Clone)]
pub struct Pendulum {
    params: PendulumParams,
}

impl Pendulum {
    pub fn new(params: PendulumParams) -> Result<Self> {
        positive("mass", params.mass)?;
        positive("length", params.length)?;
        positive("gravity", params.gravity)?;
        Ok(Pendulum { params })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    /// Mechanical energy with the potential zeroed at the hanging position.
    pub fn energy(&self, x: &StateVector) -> f64 {
        let PendulumParams {
            mass: m,
            length: l,
            gravity: g,
        } = self.params;
        0.5 * m * l * l * x[1] * x[1] + m * g * l * (x[0].cos() + 1.0)
    }
}

impl SystemModel for Pendulum {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &StateVector) -> StateVector {
        let p = &self.params;
        DVector::from_column_slice(&[x[1], p.gravity / p.length * x[0].sin()])
    }

    fn gain(&self, _x: &StateVector) -> DMatrix<f64> {
        let p = &self.params;
        DMatrix::from_column_slice(2, 1, &[0.0, 1.0 / (p.mass * p.length * p.length)])
    }

    fn drift_jacobian(&self, x: &StateVector) -> DMatrix<f64> {
        let p = &self.params;
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, p.gravity / p.length * x[0].cos(), 0.0])
    }

    fn state_names(&self) -> Vec<String> {
        vec!["theta".into(), "theta_dot".into()]
    }

    fn action_names(&self) -> Vec<String> {
        vec!["torque".into()]
    }

    fn angle_indices(&self) -> Vec<usize> {
        vec![0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoublePendulumParams {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub l2: f64,
    /// Distance from each joint to the link's center of mass.
    pub lc1: f64,
    pub lc2: f64,
    /// Moments of inertia about the centers of mass.
    pub i1: f64,
    pub i2: f64,
    pub gravity: f64,
}

impl Default for DoublePendulumParams {
    fn default() -> Self {
        DoublePendulumParams {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            l2: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0 / 12.0,
            i2: 1.0 / 12.0,
            gravity: 9.81,
        }
    }
}

const PIVOT_FLOOR: f64 = 1e-12;

/// Two-link pendulum actuated only at the joint between the links.
///
/// State `(θ₁, θ₂, θ̇₁, θ̇₂)`: `θ₁` is the first link's angle from the upright
/// vertical and `θ₂` the second link's angle relative to the first. The
/// accelerations solve the 2×2 system
///
/// ```text
/// d₁·θ̈₁ + d₂·θ̈₂ = −φ₁
/// d₂·θ̈₁ + d₃·θ̈₂ = a − h·θ̇₁²·sin θ₂ − φ₂
/// ```
///
/// with `h = m₂l₁l_c2`, `d₃ = m₂l_c2² + I₂` and
/// `φ₁ = −h·θ̇₂²·sin θ₂ − 2h·θ̇₂θ̇₁·sin θ₂ − (m₁l_c1 + m₂l₁)·g·sin θ₁ + φ₂`,
/// `φ₂ = −m₂l_c2·g·sin(θ₁ + θ₂)`.
#[derive(Debug, Clone)]
pub struct DoublePendulum {
    params: DoublePendulumParams,
}

struct DoublePendulumTerms {
    mass: Matrix2<f64>,
    rhs: Vector2<f64>,
}

impl DoublePendulum {
    pub fn new(params: DoublePendulumParams) -> Result<Self> {
        let p = &params;
        for (name, v) in [
            ("m1", p.m1),
            ("m2", p.m2),
            ("l1", p.l1),
            ("l2", p.l2),
            ("lc1", p.lc1),
            ("lc2", p.lc2),
            ("i1", p.i1),
            ("i2", p.i2),
            ("gravity", p.gravity),
        ] {
            positive(name, v)?;
        }
        if p.lc1 > p.l1 {
            return Err(Error::invalid("lc1", "must not exceed l1"));
        }
        if p.lc2 > p.l2 {
            return Err(Error::invalid("lc2", "must not exceed l2"));
        }
        // d₁ and the reduced pivot d₃ − d₂²/d₁ are smallest at cos θ₂ = ±1.
        let model = DoublePendulum { params };
        for c2 in [-1.0, 1.0] {
            let (d1, d2, d3) = model.inertia(c2);
            if d1 < PIVOT_FLOOR {
                return Err(Error::SingularMassMatrix { pivot: d1 });
            }
            let reduced = d3 - d2 * d2 / d1;
            if reduced < PIVOT_FLOOR {
                return Err(Error::SingularMassMatrix { pivot: reduced });
            }
        }
        Ok(model)
    }

    pub fn params(&self) -> &DoublePendulumParams {
        &self.params
    }

    fn inertia(&self, c2: f64) -> (f64, f64, f64) {
        let p = &self.params;
        let h = p.m2 * p.l1 * p.lc2;
        let d1 = p.m1 * p.lc1 * p.lc1 + p.m2 * (p.l1 * p.l1 + p.lc2 * p.lc2) + 2.0 * h * c2 + p.i1 + p.i2;
        let d2 = p.m2 * p.lc2 * p.lc2 + h * c2 + p.i2;
        let d3 = p.m2 * p.lc2 * p.lc2 + p.i2;
        (d1, d2, d3)
    }

    fn terms(&self, x: &StateVector) -> DoublePendulumTerms {
        let p = &self.params;
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let (s2, c2) = t2.sin_cos();
        let h = p.m2 * p.l1 * p.lc2;
        let (d1, d2, d3) = self.inertia(c2);
        let phi2 = -p.m2 * p.lc2 * p.gravity * (t1 + t2).sin();
        let phi1 =
            -h * w2 * w2 * s2 - 2.0 * h * w2 * w1 * s2 - (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity * t1.sin() + phi2;
        DoublePendulumTerms {
            mass: Matrix2::new(d1, d2, d2, d3),
            rhs: Vector2::new(-phi1, -h * w1 * w1 * s2 - phi2),
        }
    }

    fn solve(mass: &Matrix2<f64>, b: &Vector2<f64>) -> Vector2<f64> {
        // Symmetric positive definite by construction; pivots were checked
        // against the worst case in `new`.
        let (d1, d2, d3) = (mass[(0, 0)], mass[(0, 1)], mass[(1, 1)]);
        let reduced = d3 - d2 * d2 / d1;
        let q2 = (b[1] - d2 / d1 * b[0]) / reduced;
        let q1 = (b[0] - d2 * q2) / d1;
        Vector2::new(q1, q2)
    }

    /// Mechanical energy, potential zeroed with both links hanging down.
    pub fn energy(&self, x: &StateVector) -> f64 {
        let p = &self.params;
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let (d1, d2, d3) = self.inertia(t2.cos());
        let kinetic = 0.5 * d1 * w1 * w1 + d2 * w1 * w2 + 0.5 * d3 * w2 * w2;
        let k1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity;
        let k2 = p.m2 * p.lc2 * p.gravity;
        let potential = k1 * (t1.cos() + 1.0) + k2 * ((t1 + t2).cos() + 1.0);
        kinetic + potential
    }
}

impl SystemModel for DoublePendulum {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &StateVector) -> StateVector {
        let t = self.terms(x);
        let acc = Self::solve(&t.mass, &t.rhs);
        DVector::from_column_slice(&[x[2], x[3], acc[0], acc[1]])
    }

    fn gain(&self, x: &StateVector) -> DMatrix<f64> {
        let t = self.terms(x);
        let col = Self::solve(&t.mass, &Vector2::new(0.0, 1.0));
        DMatrix::from_column_slice(4, 1, &[0.0, 0.0, col[0], col[1]])
    }

    fn drift_jacobian(&self, x: &StateVector) -> DMatrix<f64> {
        // q̈ = M⁻¹b, so ∂q̈/∂x_j = M⁻¹(∂b/∂x_j − ∂M/∂x_j·q̈); M depends on θ₂ only.
        let p = &self.params;
        let (t1, t2, w1, w2) = (x[0], x[1], x[2], x[3]);
        let (s2, c2) = t2.sin_cos();
        let h = p.m2 * p.l1 * p.lc2;
        let k1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.gravity;
        let dphi2 = -p.m2 * p.lc2 * p.gravity * (t1 + t2).cos();

        let terms = self.terms(x);
        let acc = Self::solve(&terms.mass, &terms.rhs);

        let dphi1 = [
            -k1 * t1.cos() + dphi2,
            -h * c2 * (w2 * w2 + 2.0 * w1 * w2) + dphi2,
            -2.0 * h * s2 * w2,
            -2.0 * h * s2 * (w2 + w1),
        ];
        let db2 = [-dphi2, -h * c2 * w1 * w1 - dphi2, -2.0 * h * s2 * w1, 0.0];
        let dmass_dt2 = Matrix2::new(-2.0 * h * s2, -h * s2, -h * s2, 0.0);

        let mut jac = DMatrix::zeros(4, 4);
        jac[(0, 2)] = 1.0;
        jac[(1, 3)] = 1.0;
        for j in 0..4 {
            let mut db = Vector2::new(-dphi1[j], db2[j]);
            if j == 1 {
                db -= dmass_dt2 * acc;
            }
            let col = Self::solve(&terms.mass, &db);
            jac[(2, j)] = col[0];
            jac[(3, j)] = col[1];
        }
        jac
    }

    fn state_names(&self) -> Vec<String> {
        vec![
            "theta1".into(),
            "theta2".into(),
            "theta1_dot".into(),
            "theta2_dot".into(),
        ]
    }

    fn action_names(&self) -> Vec<String> {
        vec!["torque".into()]
    }

    fn angle_indices(&self) -> Vec<usize> {
        vec![0, 1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleParams {
    pub cart_mass: f64,
    pub pole_mass: f64,
    pub pole_length: f64,
    pub gravity: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        CartPoleParams {
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_length: 1.0,
            gravity: 9.81,
        }
    }
}

/// Cart with a point-mass pole, force applied to the cart. State
/// `(x, θ, ẋ, θ̇)` with `θ` from upright:
///
/// ```text
/// ẍ = (a + m·sin θ·(l·θ̇² − g·cos θ)) / (M + m·sin²θ)
/// θ̈ = ((M + m)·g·sin θ − a·cos θ − m·l·θ̇²·sin θ·cos θ) / (l·(M + m·sin²θ))
/// ```
#[derive(Debug, Clone)]
pub struct CartPole {
    params: CartPoleParams,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Result<Self> {
        positive("cart_mass", params.cart_mass)?;
        positive("pole_mass", params.pole_mass)?;
        positive("pole_length", params.pole_length)?;
        positive("gravity", params.gravity)?;
        Ok(CartPole { params })
    }

    pub fn params(&self) -> &CartPoleParams {
        &self.params
    }

    pub fn energy(&self, x: &StateVector) -> f64 {
        let CartPoleParams {
            cart_mass: big_m,
            pole_mass: m,
            pole_length: l,
            gravity: g,
        } = self.params;
        let (xd, w) = (x[2], x[3]);
        let c = x[1].cos();
        0.5 * (big_m + m) * xd * xd + m * l * c * xd * w + 0.5 * m * l * l * w * w + m * g * l * (c + 1.0)
    }
}

impl SystemModel for CartPole {
    fn state_dim(&self) -> usize {
        4
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &StateVector) -> StateVector {
        let CartPoleParams {
            cart_mass: big_m,
            pole_mass: m,
            pole_length: l,
            gravity: g,
        } = self.params;
        let (s, c) = x[1].sin_cos();
        let w = x[3];
        let den = big_m + m * s * s;
        let xdd = m * s * (l * w * w - g * c) / den;
        let tdd = ((big_m + m) * g * s - m * l * w * w * s * c) / (l * den);
        DVector::from_column_slice(&[x[2], w, xdd, tdd])
    }

    fn gain(&self, x: &StateVector) -> DMatrix<f64> {
        let CartPoleParams {
            cart_mass: big_m,
            pole_mass: m,
            pole_length: l,
            ..
        } = self.params;
        let (s, c) = x[1].sin_cos();
        let den = big_m + m * s * s;
        DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0 / den, -c / (l * den)])
    }

    fn drift_jacobian(&self, x: &StateVector) -> DMatrix<f64> {
        let CartPoleParams {
            cart_mass: big_m,
            pole_mass: m,
            pole_length: l,
            gravity: g,
        } = self.params;
        let (s, c) = x[1].sin_cos();
        let w = x[3];
        let den = big_m + m * s * s;
        let dden = 2.0 * m * s * c;

        let n1 = m * s * (l * w * w - g * c);
        let dn1_dt = m * l * w * w * c - m * g * (c * c - s * s);
        let dn1_dw = 2.0 * m * l * s * w;

        let n2 = (big_m + m) * g * s - m * l * w * w * s * c;
        let dn2_dt = (big_m + m) * g * c - m * l * w * w * (c * c - s * s);
        let dn2_dw = -2.0 * m * l * w * s * c;

        let mut jac = DMatrix::zeros(4, 4);
        jac[(0, 2)] = 1.0;
        jac[(1, 3)] = 1.0;
        jac[(2, 1)] = (dn1_dt * den - n1 * dden) / (den * den);
        jac[(2, 3)] = dn1_dw / den;
        jac[(3, 1)] = (dn2_dt * den - n2 * dden) / (l * den * den);
        jac[(3, 3)] = dn2_dw / (l * den);
        jac
    }

    fn state_names(&self) -> Vec<String> {
        vec!["x".into(), "theta".into(), "x_dot".into(), "theta_dot".into()]
    }

    fn action_names(&self) -> Vec<String> {
        vec!["force".into()]
    }

    fn angle_indices(&self) -> Vec<usize> {
        vec![1]
    }
}

/// Scalar system `ẋ = alpha·x + gain·a`. With unit gain, the sensitivity of
/// step `s` to action `r` is `(1 + alpha·dt)^(s−r−1)·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearTest {
    pub alpha: f64,
    pub gain: f64,
}

impl LinearTest {
    pub fn new(alpha: f64) -> Self {
        LinearTest { alpha, gain: 1.0 }
    }

    pub fn with_gain(alpha: f64, gain: f64) -> Self {
        LinearTest { alpha, gain }
    }
}

impl SystemModel for LinearTest {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn drift(&self, x: &StateVector) -> StateVector {
        x * self.alpha
    }

    fn gain(&self, _x: &StateVector) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.gain)
    }

    fn drift_jacobian(&self, _x: &StateVector) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.alpha)
    }

    fn state_names(&self) -> Vec<String> {
        vec!["x".into()]
    }
}
