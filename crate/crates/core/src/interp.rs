//! Piecewise-cubic Hermite interpolation on a radial grid `0 = r_0 < … < r_M`.
//!
//! Values left of the origin come from the parity extension (even for the
//! scalar, odd for the velocity). Past the last node the interpolant is
//! extended by its final value with zero slope.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

/// Index `k` of the cell `[x_k, x_{k+1}]` containing `r` (clamped).
pub fn locate(x: &[f64], r: f64) -> usize {
    let n = x.len();
    let k = x.partition_point(|&xi| xi <= r);
    k.saturating_sub(1).min(n - 2)
}

fn secants(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xw, yw)| (yw[1] - yw[0]) / (xw[1] - xw[0]))
        .collect()
}

/// Second-order three-point slopes; the origin slope follows from parity.
pub fn centered_slopes(x: &[f64], y: &[f64], parity: Parity) -> Vec<f64> {
    let n = x.len();
    let d = secants(x, y);
    let mut m = vec![0.0; n];
    m[0] = match parity {
        Parity::Even => 0.0,
        // ghost value -y_1 at -x_1
        Parity::Odd => y[1] / x[1],
    };
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        m[i] = (h1 * d[i - 1] + h0 * d[i]) / (h0 + h1);
    }
    if n >= 3 {
        let h1 = x[n - 1] - x[n - 2];
        let h0 = x[n - 2] - x[n - 3];
        m[n - 1] = ((2.0 * h1 + h0) * d[n - 2] - h1 * d[n - 3]) / (h0 + h1);
    } else {
        m[n - 1] = d[n - 2];
    }
    m
}

/// Fritsch–Carlson limited slopes: the interpolant is monotone on every cell,
/// so it never leaves `[min(y_k, y_{k+1}), max(y_k, y_{k+1})]`.
pub fn monotone_slopes(x: &[f64], y: &[f64], parity: Parity) -> Vec<f64> {
    let n = x.len();
    let d = secants(x, y);
    let mut m = centered_slopes(x, y, parity);
    if parity == Parity::Even || m[0] * d[0] <= 0.0 {
        m[0] = 0.0;
    }
    for i in 1..n - 1 {
        if d[i - 1] * d[i] <= 0.0 {
            m[i] = 0.0;
        }
    }
    if m[n - 1] * d[n - 2] <= 0.0 {
        m[n - 1] = 0.0;
    }
    for k in 0..n - 1 {
        if d[k] == 0.0 {
            m[k] = 0.0;
            m[k + 1] = 0.0;
            continue;
        }
        let a = m[k] / d[k];
        let b = m[k + 1] / d[k];
        if a < 0.0 {
            m[k] = 0.0;
        }
        if b < 0.0 {
            m[k + 1] = 0.0;
        }
        let a = a.max(0.0);
        let b = b.max(0.0);
        let s = a * a + b * b;
        if s > 9.0 {
            let tau = 3.0 / s.sqrt();
            m[k] = tau * a * d[k];
            m[k + 1] = tau * b * d[k];
        }
    }
    m
}

/// Hermite data of one cell.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub x0: f64,
    pub h: f64,
    pub y0: f64,
    pub y1: f64,
    pub m0: f64,
    pub m1: f64,
}

impl Cell {
    pub fn value(&self, r: f64) -> f64 {
        let t = (r - self.x0) / self.h;
        let t2 = t * t;
        let t3 = t2 * t;
        self.y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + self.h * self.m0 * (t3 - 2.0 * t2 + t)
            + self.y1 * (-2.0 * t3 + 3.0 * t2)
            + self.h * self.m1 * (t3 - t2)
    }

    /// Coefficients `(A, B, C)` of `p'(t) = A t² + B t + C` in physical units.
    fn derivative_coeffs(&self) -> (f64, f64, f64) {
        let h = self.h;
        let a = (6.0 * (self.y0 - self.y1) + 3.0 * h * (self.m0 + self.m1)) / h;
        let b = (6.0 * (self.y1 - self.y0) - h * (4.0 * self.m0 + 2.0 * self.m1)) / h;
        (a, b, self.m0)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let t = (r - self.x0) / self.h;
        let (a, b, c) = self.derivative_coeffs();
        (a * t + b) * t + c
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let t = (r - self.x0) / self.h;
        let (a, b, _) = self.derivative_coeffs();
        (2.0 * a * t + b) / self.h
    }

    /// Exact `max |p'|` over the cell, with the location.
    pub fn derivative_sup(&self) -> (f64, f64) {
        let (a, b, c) = self.derivative_coeffs();
        let mut best = (c.abs(), 0.0);
        let end = (a + b + c).abs();
        if end > best.0 {
            best = (end, 1.0);
        }
        if a != 0.0 {
            let tv = -b / (2.0 * a);
            if tv > 0.0 && tv < 1.0 {
                let v = ((a * tv + b) * tv + c).abs();
                if v > best.0 {
                    best = (v, tv);
                }
            }
        }
        (best.0, self.x0 + best.1 * self.h)
    }

    /// `max |p''|`, attained at an end of the cell since `p''` is linear.
    pub fn second_derivative_sup(&self) -> f64 {
        let (a, b, _) = self.derivative_coeffs();
        (b.abs().max((2.0 * a + b).abs())) / self.h
    }
}

/// Piecewise-cubic Hermite interpolant borrowing its data.
#[derive(Debug, Clone, Copy)]
pub struct Hermite<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub m: &'a [f64],
    pub parity: Parity,
}

impl<'a> Hermite<'a> {
    pub fn cell(&self, k: usize) -> Cell {
        Cell {
            x0: self.x[k],
            h: self.x[k + 1] - self.x[k],
            y0: self.y[k],
            y1: self.y[k + 1],
            m0: self.m[k],
            m1: self.m[k + 1],
        }
    }

    fn reflect(&self, r: f64) -> (f64, f64) {
        if r >= 0.0 {
            (r, 1.0)
        } else {
            match self.parity {
                Parity::Even => (-r, 1.0),
                Parity::Odd => (-r, -1.0),
            }
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let (s, sign) = self.reflect(r);
        let last = *self.x.last().expect("grid has nodes");
        if s >= last {
            return sign * *self.y.last().expect("grid has nodes");
        }
        sign * self.cell(locate(self.x, s)).value(s)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let (s, _) = self.reflect(r);
        let last = *self.x.last().expect("grid has nodes");
        if s >= last {
            return 0.0;
        }
        // d/dr of sign·p(|r|) is p'(|r|) for odd data and -p'(|r|) for even data when r < 0
        let d = self.cell(locate(self.x, s)).derivative(s);
        if r >= 0.0 {
            d
        } else {
            match self.parity {
                Parity::Even => -d,
                Parity::Odd => d,
            }
        }
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let s = r.abs();
        let last = *self.x.last().expect("grid has nodes");
        if s >= last {
            return 0.0;
        }
        self.cell(locate(self.x, s)).second_derivative(s)
    }

    /// Exact sup of `|p'|` over the grid and its location.
    pub fn derivative_sup(&self) -> (f64, f64) {
        (0..self.x.len() - 1)
            .map(|k| self.cell(k).derivative_sup())
            .fold((0.0, 0.0), |acc, c| if c.0 > acc.0 { c } else { acc })
    }

    pub fn second_derivative_sup(&self) -> f64 {
        (0..self.x.len() - 1)
            .map(|k| self.cell(k).second_derivative_sup())
            .fold(0.0, f64::max)
    }
}
