use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `[x, y, phi, u, v, omega]`: world position, yaw, body-frame longitudinal
/// and lateral speed, yaw rate.
pub type State = [f64; 6];
/// `[delta, a]`: front wheel angle and longitudinal acceleration command.
pub type Input = [f64; 2];

pub const X: usize = 0;
pub const Y: usize = 1;
pub const PHI: usize = 2;
pub const U: usize = 3;
pub const V: usize = 4;
pub const OMEGA: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BicycleParams {
    /// Yaw inertia (kg m^2).
    pub iz: f64,
    /// Front axle cornering stiffness (N/rad, negative).
    pub kf: f64,
    /// Rear axle cornering stiffness (N/rad, negative).
    pub kr: f64,
    /// CG to front axle (m).
    pub lf: f64,
    /// CG to rear axle (m).
    pub lr: f64,
    /// Mass (kg).
    pub m: f64,
    /// Step length (s).
    pub ts: f64,
}

impl Default for BicycleParams {
    fn default() -> Self {
        Self::TRUE
    }
}

impl BicycleParams {
    pub const TRUE: Self = Self {
        iz: 1536.7,
        kf: -128_916.0,
        kr: -85_944.0,
        lf: 1.06,
        lr: 1.85,
        m: 1412.0,
        ts: 0.1,
    };

    pub fn from_slice(p: &[f64], ts: f64) -> Result<Self> {
        match p {
            &[iz, kf, kr, lf, lr, m] => Ok(Self { iz, kf, kr, lf, lr, m, ts }),
            other => Err(Error::DimensionMismatch {
                expected: 6,
                got: other.len(),
            }),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [self.iz, self.kf, self.kr, self.lf, self.lr, self.m]
    }

    fn lateral_denominator(&self, u: f64) -> f64 {
        self.m * u - self.ts * (self.kf + self.kr)
    }

    fn yaw_denominator(&self, u: f64) -> f64 {
        self.iz * u - self.ts * (self.lf * self.lf * self.kf + self.lr * self.lr * self.kr)
    }

    fn check_denominators(&self, u: f64) -> Result<(f64, f64)> {
        let dv = self.lateral_denominator(u);
        let dw = self.yaw_denominator(u);
        let tol_v = 1e-9 * (self.m * u.abs() + (self.ts * (self.kf + self.kr)).abs());
        let tol_w = 1e-9 * (self.iz * u.abs() + self.ts * (self.lf * self.lf * self.kf.abs() + self.lr * self.lr * self.kr.abs()));
        if !(dv.abs() > tol_v && dw.abs() > tol_w) {
            return Err(Error::Singular(format!("bicycle model denominators vanish at u = {u}")));
        }
        Ok((dv, dw))
    }
}

/// One step of the numerically stable dynamic bicycle model.
pub fn bicycle_step(s: &State, input: &Input, p: &BicycleParams) -> Result<State> {
    let [x, y, phi, u, v, w] = *s;
    let [delta, a] = *input;
    let t = p.ts;
    let (den_v, den_w) = p.check_denominators(u)?;
    let (sin, cos) = phi.sin_cos();
    let lk = p.lf * p.kf - p.lr * p.kr;
    Ok([
        x + t * (u * cos - v * sin),
        y + t * (v * cos + u * sin),
        phi + t * w,
        u + t * a,
        (p.m * u * v + t * lk * w - t * p.kf * delta * u - t * p.m * u * u * w) / den_v,
        (p.iz * u * w + t * lk * v - t * p.lf * p.kf * delta * u) / den_w,
    ])
}

/// Step plus Jacobians with respect to the state (6x6, row-major by output)
/// and the input (6x2).
pub fn bicycle_step_jacobian(
    s: &State,
    input: &Input,
    p: &BicycleParams,
) -> Result<(State, [[f64; 6]; 6], [[f64; 2]; 6])> {
    let next = bicycle_step(s, input, p)?;
    let [_, _, phi, u, v, w] = *s;
    let [delta, _] = *input;
    let t = p.ts;
    let (den_v, den_w) = p.check_denominators(u)?;
    let (sin, cos) = phi.sin_cos();
    let lk = p.lf * p.kf - p.lr * p.kr;

    let mut jx = [[0.0; 6]; 6];
    let mut ju = [[0.0; 2]; 6];

    jx[X][X] = 1.0;
    jx[X][PHI] = t * (-u * sin - v * cos);
    jx[X][U] = t * cos;
    jx[X][V] = -t * sin;

    jx[Y][Y] = 1.0;
    jx[Y][PHI] = t * (u * cos - v * sin);
    jx[Y][U] = t * sin;
    jx[Y][V] = t * cos;

    jx[PHI][PHI] = 1.0;
    jx[PHI][OMEGA] = t;

    jx[U][U] = 1.0;
    ju[U][1] = t;

    let num_v = next[V] * den_v;
    let dnum_v_du = p.m * v - t * p.kf * delta - 2.0 * t * p.m * u * w;
    jx[V][U] = (dnum_v_du * den_v - num_v * p.m) / (den_v * den_v);
    jx[V][V] = p.m * u / den_v;
    jx[V][OMEGA] = (t * lk - t * p.m * u * u) / den_v;
    ju[V][0] = -t * p.kf * u / den_v;

    let num_w = next[OMEGA] * den_w;
    let dnum_w_du = p.iz * w - t * p.lf * p.kf * delta;
    jx[OMEGA][U] = (dnum_w_du * den_w - num_w * p.iz) / (den_w * den_w);
    jx[OMEGA][V] = t * lk / den_w;
    jx[OMEGA][OMEGA] = p.iz * u / den_w;
    ju[OMEGA][0] = -t * p.lf * p.kf * u / den_w;

    Ok((next, jx, ju))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn straight_motion() {
        let s = [0.0, 0.0, 0.0, 10.0, 0.0, 0.0];
        let n = bicycle_step(&s, &[0.0, 1.5], &BicycleParams::TRUE).unwrap();
        assert_abs_diff_eq!(n[X], 1.0, epsilon = 1e-15);
        assert_eq!(n[Y], 0.0);
        assert_eq!(n[PHI], 0.0);
        assert_abs_diff_eq!(n[U], 10.15, epsilon = 1e-15);
        assert_eq!(n[V], 0.0);
        assert_eq!(n[OMEGA], 0.0);
    }

    #[test]
    fn heading_north_moves_in_y() {
        let s = [3.0, 4.0, FRAC_PI_2, 10.0, 0.0, 0.0];
        let n = bicycle_step(&s, &[0.0, 0.0], &BicycleParams::TRUE).unwrap();
        assert_abs_diff_eq!(n[X], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(n[Y], 5.0, epsilon = 1e-12);
    }

    #[test]
    fn singular_at_specific_negative_speed() {
        let p = BicycleParams::TRUE;
        // m u = ts (kf + kr)
        let u = p.ts * (p.kf + p.kr) / p.m;
        assert!(matches!(
            bicycle_step(&[0.0, 0.0, 0.0, u, 0.0, 0.0], &[0.0, 0.0], &p),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = BicycleParams {
            iz: 1800.0,
            kf: -100_000.0,
            kr: -140_000.0,
            lf: 1.3,
            lr: 1.6,
            m: 1600.0,
            ts: 0.1,
        };
        let s = [1.0, -2.0, 0.3, 9.0, 0.2, -0.1];
        let inp = [0.05, 0.7];
        let (_, jx, ju) = bicycle_step_jacobian(&s, &inp, &p).unwrap();
        let h = 1e-6;
        for j in 0..6 {
            let mut sp = s;
            sp[j] += h;
            let mut sm = s;
            sm[j] -= h;
            let fp = bicycle_step(&sp, &inp, &p).unwrap();
            let fm = bicycle_step(&sm, &inp, &p).unwrap();
            for i in 0..6 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - jx[i][j]).abs() < 1e-7 * (1.0 + fd.abs()), "d{i}/dx{j}: {fd} vs {}", jx[i][j]);
            }
        }
        for j in 0..2 {
            let mut ip = inp;
            ip[j] += h;
            let mut im = inp;
            im[j] -= h;
            let fp = bicycle_step(&s, &ip, &p).unwrap();
            let fm = bicycle_step(&s, &im, &p).unwrap();
            for i in 0..6 {
                let fd = (fp[i] - fm[i]) / (2.0 * h);
                assert!((fd - ju[i][j]).abs() < 1e-7 * (1.0 + fd.abs()));
            }
        }
    }
}
