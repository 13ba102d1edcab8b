//! Forward-mode dual scalars, the seed type for forward-over-reverse.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// A first-order dual number `value + tangent·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualScalar {
    pub value: f64,
    pub tangent: f64,
}

impl DualScalar {
    pub fn new(value: f64, tangent: f64) -> Self {
        DualScalar { value, tangent }
    }

    /// A constant: zero tangent.
    pub fn constant(value: f64) -> Self {
        DualScalar {
            value,
            tangent: 0.0,
        }
    }

    /// A variable seeded for differentiation: unit tangent.
    pub fn variable(value: f64) -> Self {
        DualScalar {
            value,
            tangent: 1.0,
        }
    }

    pub fn powi(self, n: i32) -> Self {
        DualScalar {
            value: self.value.powi(n),
            tangent: n as f64 * self.value.powi(n - 1) * self.tangent,
        }
    }

    pub fn tanh(self) -> Self {
        let t = self.value.tanh();
        DualScalar {
            value: t,
            tangent: (1.0 - t * t) * self.tangent,
        }
    }

    /// Subgradient convention: slope 0 at the kink.
    pub fn relu(self) -> Self {
        if self.value > 0.0 {
            self
        } else {
            DualScalar::constant(0.0)
        }
    }

    pub fn abs(self) -> Self {
        if self.value > 0.0 {
            self
        } else if self.value < 0.0 {
            -self
        } else {
            DualScalar::constant(0.0)
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self.value >= other.value {
            self
        } else {
            other
        }
    }
}

impl Add for DualScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        DualScalar::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl Sub for DualScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        DualScalar::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl Mul for DualScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        DualScalar::new(
            self.value * rhs.value,
            self.tangent * rhs.value + self.value * rhs.tangent,
        )
    }
}

impl Div for DualScalar {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let v = self.value / rhs.value;
        DualScalar::new(v, (self.tangent - v * rhs.tangent) / rhs.value)
    }
}

impl Neg for DualScalar {
    type Output = Self;
    fn neg(self) -> Self {
        DualScalar::new(-self.value, -self.tangent)
    }
}
