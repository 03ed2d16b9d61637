//! Second-order forward-mode differentiation in two variables.
//!
//! A [`Jet`] carries a value, its gradient and its Hessian. Manufactured
//! solutions are written once as functions of `Jet` coordinates; forcing
//! terms and goal densities are then obtained from the strong forms without
//! hand-derived derivative formulas.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

impl Jet {
    pub const fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; 2],
            h: [[0.0; 2]; 2],
        }
    }

    /// The coordinate functions `(x, y)` at a point.
    pub fn coords(x: f64, y: f64) -> (Jet, Jet) {
        (
            Jet {
                v: x,
                g: [1.0, 0.0],
                h: [[0.0; 2]; 2],
            },
            Jet {
                v: y,
                g: [0.0, 1.0],
                h: [[0.0; 2]; 2],
            },
        )
    }

    pub fn laplacian(&self) -> f64 {
        self.h[0][0] + self.h[1][1]
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Jet {
        let g = [df * self.g[0], df * self.g[1]];
        let mut h = [[0.0; 2]; 2];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, hij) in row.iter_mut().enumerate() {
                *hij = df * self.h[i][j] + d2f * self.g[i] * self.g[j];
            }
        }
        Jet { v: f, g, h }
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Jet {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn powf(self, p: f64) -> Jet {
        let v = self.v;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }

    pub fn sqrt(self) -> Jet {
        self.powf(0.5)
    }

    pub fn recip(self) -> Jet {
        let v = self.v;
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }

    /// Polar angle in `[0, 2π)`.
    pub fn angle(y: Jet, x: Jet) -> Jet {
        let mut theta = y.v.atan2(x.v);
        if theta < 0.0 {
            theta += 2.0 * std::f64::consts::PI;
        }
        let r2 = x.v * x.v + y.v * y.v;
        let r4 = r2 * r2;
        let ty = x.v / r2;
        let tx = -y.v / r2;
        let tyy = -2.0 * x.v * y.v / r4;
        let txx = 2.0 * x.v * y.v / r4;
        let txy = (y.v * y.v - x.v * x.v) / r4;
        let g = [
            ty * y.g[0] + tx * x.g[0],
            ty * y.g[1] + tx * x.g[1],
        ];
        let mut h = [[0.0; 2]; 2];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, hij) in row.iter_mut().enumerate() {
                *hij = ty * y.h[i][j]
                    + tx * x.h[i][j]
                    + tyy * y.g[i] * y.g[j]
                    + txx * x.g[i] * x.g[j]
                    + txy * (y.g[i] * x.g[j] + x.g[i] * y.g[j]);
            }
        }
        Jet { v: theta, g, h }
    }
}

impl From<f64> for Jet {
    fn from(v: f64) -> Self {
        Jet::constant(v)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut h = self.h;
        for (i, row) in h.iter_mut().enumerate() {
            for (j, hij) in row.iter_mut().enumerate() {
                *hij += o.h[i][j];
            }
        }
        Jet {
            v: self.v + o.v,
            g: [self.g[0] + o.g[0], self.g[1] + o.g[1]],
            h,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self * -1.0
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut h = [[0.0; 2]; 2];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, hij) in row.iter_mut().enumerate() {
                *hij = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.g[i] * o.g[j]
                    + o.g[i] * self.g[j];
            }
        }
        Jet {
            v: self.v * o.v,
            g: [
                self.v * o.g[0] + o.v * self.g[0],
                self.v * o.g[1] + o.v * self.g[1],
            ],
            h,
        }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, o: f64) -> Jet {
        self.v += o;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, o: f64) -> Jet {
        self.v -= o;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, s: f64) -> Jet {
        let mut h = self.h;
        for row in h.iter_mut() {
            for hij in row.iter_mut() {
                *hij *= s;
            }
        }
        Jet {
            v: self.v * s,
            g: [self.g[0] * s, self.g[1] * s],
            h,
        }
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        o + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        -o + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        o * self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(Jet, Jet) -> Jet, x: f64, y: f64) {
        let eval = |x: f64, y: f64| {
            let (a, b) = Jet::coords(x, y);
            f(a, b).v
        };
        let (a, b) = Jet::coords(x, y);
        let j = f(a, b);
        let h = 1e-4;
        let gx = (eval(x + h, y) - eval(x - h, y)) / (2.0 * h);
        let gy = (eval(x, y + h) - eval(x, y - h)) / (2.0 * h);
        let hxx = (eval(x + h, y) - 2.0 * eval(x, y) + eval(x - h, y)) / (h * h);
        let hyy = (eval(x, y + h) - 2.0 * eval(x, y) + eval(x, y - h)) / (h * h);
        let hxy = (eval(x + h, y + h) - eval(x + h, y - h) - eval(x - h, y + h)
            + eval(x - h, y - h))
            / (4.0 * h * h);
        let scale = 1.0 + j.v.abs();
        assert!((j.g[0] - gx).abs() < 1e-6 * scale);
        assert!((j.g[1] - gy).abs() < 1e-6 * scale);
        assert!((j.h[0][0] - hxx).abs() < 1e-4 * scale);
        assert!((j.h[1][1] - hyy).abs() < 1e-4 * scale);
        assert!((j.h[0][1] - hxy).abs() < 1e-4 * scale);
        assert_eq!(j.h[0][1], j.h[1][0]);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(|x, y| (x * 3.0).sin() * (y * 2.0).cos(), 0.3, 0.7);
        fd_check(|x, y| (x * y).exp() / (1.0 + x * x), 0.4, -0.2);
        fd_check(|x, y| (x * x + y * y).powf(1.0 / 3.0), -0.5, 0.6);
        fd_check(
            |x, y| {
                let r = (x * x + y * y).sqrt();
                r.powf(2.0 / 3.0) * (Jet::angle(y, x) * (2.0 / 3.0)).sin()
            },
            -0.4,
            -0.3,
        );
    }

    #[test]
    fn angle_branch_covers_third_quadrant() {
        let (x, y) = Jet::coords(-1.0, -1.0);
        let t = Jet::angle(y, x);
        assert!((t.v - 1.25 * std::f64::consts::PI).abs() < 1e-15);
    }
}
