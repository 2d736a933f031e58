//! Particle lattice model of a soft limb clamped at its root column.
//!
//! Particles sit on a regular lattice with spacing `l`. Neighbouring
//! particles are joined by normal members (horizontal and vertical) that carry
//! a Green-strain Kelvin-Voigt stress, and every lattice cell carries a shear
//! term on each of its four corners. Actuation changes the rest length of the
//! normal members: horizontal ones shorten by `c_a·ā·l`, vertical ones lengthen
//! by the same amount, where `ā` is the mean actuation of the two endpoints.

use super::{check_finite, Dynamics, SystemConfig, SystemKind};
use crate::error::{Result, StsoError};
use crate::field::{Field, Grid, NoiseIncrement, StateVector};

/// Force exerted by one normal member on its second endpoint, and the
/// derivative of that force with respect to the member rest length. The first
/// endpoint receives the negated force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberForce {
    pub strain: f64,
    pub force: [f64; 2],
    pub dforce_dlen: [f64; 2],
}

/// Green strain `‖Δs‖²/L² − 1`, stress `k(ε + τε̇)`, force `−V σ ∂ε/∂s_b`.
pub fn member_force(ds: [f64; 2], dv: [f64; 2], rest: f64, volume: f64, k: f64, tau: f64) -> MemberForce {
    let c2 = 1.0 / (rest * rest);
    let dc2 = -2.0 / (rest * rest * rest);
    let len2 = ds[0] * ds[0] + ds[1] * ds[1];
    let rate = ds[0] * dv[0] + ds[1] * dv[1];
    let strain = len2 * c2 - 1.0;
    let stress = k * (strain + tau * 2.0 * rate * c2);
    let dstress = k * (len2 + 2.0 * tau * rate) * dc2;
    let coef = -2.0 * volume * stress * c2;
    let dcoef = -2.0 * volume * (dstress * c2 + stress * dc2);
    MemberForce {
        strain,
        force: [coef * ds[0], coef * ds[1]],
        dforce_dlen: [dcoef * ds[0], dcoef * ds[1]],
    }
}

#[derive(Debug, Clone, Copy)]
struct Member {
    a: usize,
    b: usize,
    /// `+1` lengthens with actuation (vertical), `−1` shortens (horizontal).
    sign: f64,
}

/// Shear corner: strain `½⟨p_b − p_a, p_d − p_c⟩ / l²`.
#[derive(Debug, Clone, Copy)]
struct Corner {
    a: usize,
    b: usize,
    c: usize,
    d: usize,
}

#[derive(Debug, Clone)]
pub struct SoftLimb2d {
    cfg: SystemConfig,
    grid: Grid,
    spacing: f64,
    members: Vec<Member>,
    corners: Vec<Corner>,
    clamped: Vec<bool>,
}

impl SoftLimb2d {
    pub fn new(cfg: SystemConfig) -> Result<Self> {
        let grid = cfg.grid()?;
        if grid.dim() != 2 {
            return Err(StsoError::InvalidGrid("soft limb needs a 2D lattice".into()));
        }
        let (nx, ny) = (grid.points(0), grid.points(1));
        let mut members = Vec::new();
        let mut corners = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                let p = grid.index(ix, iy);
                if ix + 1 < nx {
                    members.push(Member { a: p, b: grid.index(ix + 1, iy), sign: -1.0 });
                }
                if iy + 1 < ny {
                    members.push(Member { a: p, b: grid.index(ix, iy + 1), sign: 1.0 });
                }
                if ix + 1 < nx && iy + 1 < ny {
                    let (p00, p10) = (p, grid.index(ix + 1, iy));
                    let (p01, p11) = (grid.index(ix, iy + 1), grid.index(ix + 1, iy + 1));
                    corners.push(Corner { a: p00, b: p10, c: p00, d: p01 });
                    corners.push(Corner { a: p00, b: p10, c: p10, d: p11 });
                    corners.push(Corner { a: p01, b: p11, c: p00, d: p01 });
                    corners.push(Corner { a: p01, b: p11, c: p10, d: p11 });
                }
            }
        }
        let clamped = (0..grid.node_count()).map(|n| grid.node_indices(n).0 == 0).collect();
        Ok(Self { spacing: grid.spacing(0), cfg, grid, members, corners, clamped })
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn particle_volume(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn is_clamped(&self, node: usize) -> bool {
        self.clamped[node]
    }

    /// Mean member actuation, saturated so rest lengths stay within ±50%.
    fn member_actuation(&self, a: &[f64], m: &Member) -> (f64, bool) {
        let mean = 0.5 * (a[m.a] + a[m.b]);
        let gain = self.cfg.actuation_gain;
        if gain == 0.0 {
            return (0.0, true);
        }
        let limit = 0.5 / gain;
        if mean.abs() > limit {
            (limit.copysign(mean), true)
        } else {
            (mean, false)
        }
    }

    fn rest_length(&self, m: &Member, mean: f64) -> f64 {
        self.spacing * (1.0 + m.sign * self.cfg.actuation_gain * mean)
    }

    /// Total internal force on every particle (clamped ones included).
    pub fn internal_forces(&self, state: &StateVector, actuation: Option<&Field>) -> Vec<[f64; 2]> {
        let (pos, vel) = self.positions(state);
        let n = self.grid.node_count();
        let mut force = vec![[0.0; 2]; n];
        let volume = self.particle_volume();
        let (k, tau, mu) = (self.cfg.tensile, self.cfg.retardation, self.cfg.shear);
        for m in &self.members {
            let mean = actuation.map_or(0.0, |a| self.member_actuation(a.values(), m).0);
            let rest = self.rest_length(m, mean);
            let ds = sub(pos[m.b], pos[m.a]);
            let dv = sub(vel[m.b], vel[m.a]);
            let f = member_force(ds, dv, rest, volume, k, tau).force;
            add_to(&mut force[m.b], f, 1.0);
            add_to(&mut force[m.a], f, -1.0);
        }
        let l2 = self.spacing * self.spacing;
        let vc = 0.25 * volume;
        for c in &self.corners {
            let sx = sub(pos[c.b], pos[c.a]);
            let sy = sub(pos[c.d], pos[c.c]);
            let vx = sub(vel[c.b], vel[c.a]);
            let vy = sub(vel[c.d], vel[c.c]);
            let strain = 0.5 * dot(sx, sy) / l2;
            let rate = 0.5 * (dot(vx, sy) + dot(sx, vy)) / l2;
            let stress = mu * (strain + tau * rate);
            // Both off-diagonal entries of the strain tensor carry energy.
            let coef = -2.0 * vc * stress * 0.5 / l2;
            add_to(&mut force[c.b], sy, coef);
            add_to(&mut force[c.a], sy, -coef);
            add_to(&mut force[c.d], sx, coef);
            add_to(&mut force[c.c], sx, -coef);
        }
        force
    }

    fn positions(&self, state: &StateVector) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
        let [dx, dy, vx, vy] = [0, 1, 2, 3].map(|i| state.component(i).values());
        let pos = (0..self.grid.node_count())
            .map(|n| {
                let x = self.grid.coordinate(n);
                [x[0] + dx[n], x[1] + dy[n]]
            })
            .collect();
        let vel = (0..self.grid.node_count()).map(|n| [vx[n], vy[n]]).collect();
        (pos, vel)
    }

    fn check_shapes(&self, state: &StateVector, actuation: &Field) -> Result<()> {
        if state.len() != 4 {
            return Err(StsoError::ShapeMismatch { expected: 4, got: state.len() });
        }
        if state.grid() != &self.grid || actuation.grid() != &self.grid {
            return Err(StsoError::GridMismatch);
        }
        Ok(())
    }

    fn effective_gravity(&self) -> f64 {
        self.cfg.gravity * self.cfg.gravity_scale
    }
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn add_to(acc: &mut [f64; 2], v: [f64; 2], scale: f64) {
    acc[0] += scale * v[0];
    acc[1] += scale * v[1];
}

impl Dynamics for SoftLimb2d {
    fn kind(&self) -> SystemKind {
        SystemKind::SoftLimb2d
    }

    fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn channel_names(&self) -> &'static [&'static str] {
        &["dx", "dy", "vx", "vy"]
    }

    fn noise_channels(&self) -> usize {
        2
    }

    fn control_is_actuation(&self) -> bool {
        false
    }

    fn initial_state(&self, _rng: &mut dyn rand::RngCore) -> StateVector {
        StateVector::zeros(&self.grid, 4)
    }

    /// Actuation-induced force density on the two velocity channels.
    fn control_force(&self, state: &StateVector, actuation: &Field) -> Vec<Field> {
        let with = self.internal_forces(state, Some(actuation));
        let without = self.internal_forces(state, None);
        let vp = self.particle_volume();
        (0..2)
            .map(|c| {
                let values = (0..self.grid.node_count())
                    .map(|n| if self.clamped[n] { 0.0 } else { (with[n][c] - without[n][c]) / vp })
                    .collect();
                Field::from_values(&self.grid, values).expect("grid sized")
            })
            .collect()
    }

    fn control_force_vjp(&self, state: &StateVector, actuation: &Field, upstream: &[Field]) -> Field {
        let (pos, vel) = self.positions(state);
        let vp = self.particle_volume();
        let (k, tau) = (self.cfg.tensile, self.cfg.retardation);
        let a = actuation.values();
        let g = |n: usize| -> [f64; 2] {
            if self.clamped[n] {
                [0.0; 2]
            } else {
                [upstream[0].values()[n], upstream[1].values()[n]]
            }
        };
        let mut grad = vec![0.0; self.grid.node_count()];
        for m in &self.members {
            let (mean, saturated) = self.member_actuation(a, m);
            if saturated {
                continue;
            }
            let rest = self.rest_length(m, mean);
            let f = member_force(sub(pos[m.b], pos[m.a]), sub(vel[m.b], vel[m.a]), rest, vp, k, tau);
            let dloss_dlen = dot(sub(g(m.b), g(m.a)), f.dforce_dlen) / vp;
            let dlen_dmean = self.spacing * m.sign * self.cfg.actuation_gain;
            let share = 0.5 * dloss_dlen * dlen_dmean;
            grad[m.a] += share;
            grad[m.b] += share;
        }
        Field::from_values(&self.grid, grad).expect("grid sized")
    }

    fn step(&self, state: &StateVector, actuation: &Field, noise: &NoiseIncrement) -> Result<StateVector> {
        self.check_shapes(state, actuation)?;
        if noise.channels.len() != 2 {
            return Err(StsoError::ShapeMismatch { expected: 2, got: noise.channels.len() });
        }
        let (dt, s) = (self.cfg.dt, self.cfg.noise_scale());
        let rho_m = self.cfg.density;
        let mass = rho_m * self.particle_volume();
        let gravity = self.effective_gravity();
        let force = self.internal_forces(state, Some(actuation));
        let mut next = state.clone();
        for n in 0..self.grid.node_count() {
            if self.clamped[n] {
                for c in 0..4 {
                    next.component_mut(c).values_mut()[n] = 0.0;
                }
                continue;
            }
            for c in 0..2 {
                let external = if c == 1 { -gravity } else { 0.0 };
                let v = state.component(2 + c).values()[n];
                let dw = noise.channels[c].values()[n];
                let vn = v + dt * (force[n][c] / mass + external) + s * dw / rho_m;
                next.component_mut(2 + c).values_mut()[n] = vn;
                next.component_mut(c).values_mut()[n] = state.component(c).values()[n] + dt * vn;
            }
        }
        check_finite(&next, 0)?;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn limb() -> SoftLimb2d {
        SoftLimb2d::new(SystemConfig::default_for(SystemKind::SoftLimb2d)).unwrap()
    }

    #[test]
    fn stretched_pair_matches_hand_force() {
        let (l, delta, k) = (0.5, 0.1, 3.0);
        let f = member_force([l * (1.0 + delta), 0.0], [0.0, 0.0], l, l * l, k, 0.0);
        let eps = (1.0 + delta).powi(2) - 1.0;
        assert!((f.strain - eps).abs() < 1e-14);
        // σ = kε; ∂ε/∂x_b = 2(1+δ)/l, so the restoring force is −V k ε · 2(1+δ)/l.
        let expected = -(l * l) * k * eps * 2.0 * (1.0 + delta) / l;
        assert!((f.force[0] - expected).abs() < 1e-13);
        assert_eq!(f.force[1], 0.0);
    }

    #[test]
    fn member_force_is_negative_energy_gradient() {
        let (rest, vol, k) = (0.8, 0.6, 5.0);
        let energy = |s: [f64; 2]| {
            let e = (s[0] * s[0] + s[1] * s[1]) / (rest * rest) - 1.0;
            0.5 * vol * k * e * e
        };
        let s = [0.9, 0.3];
        let f = member_force(s, [0.0; 2], rest, vol, k, 0.0);
        let h = 1e-6;
        for c in 0..2 {
            let mut sp = s;
            let mut sm = s;
            sp[c] += h;
            sm[c] -= h;
            let fd = -(energy(sp) - energy(sm)) / (2.0 * h);
            assert!((f.force[c] - fd).abs() < 1e-6, "{} vs {fd}", f.force[c]);
        }
        let dl = 1e-6;
        let fp = member_force(s, [0.1, -0.2], rest + dl, vol, k, 0.3).force;
        let fm = member_force(s, [0.1, -0.2], rest - dl, vol, k, 0.3).force;
        let analytic = member_force(s, [0.1, -0.2], rest, vol, k, 0.3).dforce_dlen;
        for c in 0..2 {
            let fd = (fp[c] - fm[c]) / (2.0 * dl);
            assert!((analytic[c] - fd).abs() < 1e-5 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn rest_lattice_is_force_free() {
        let sys = limb();
        let state = StateVector::zeros(sys.grid(), 4);
        for f in sys.internal_forces(&state, None) {
            assert!(f[0].abs() < 1e-9 && f[1].abs() < 1e-9);
        }
    }

    #[test]
    fn internal_forces_sum_to_zero() {
        let sys = limb();
        let g = *sys.grid();
        let mut state = StateVector::zeros(&g, 4);
        for c in 0..4 {
            for (n, v) in state.component_mut(c).values_mut().iter_mut().enumerate() {
                *v = 0.05 * ((n * 7 + c * 3) as f64).sin();
            }
        }
        let a = Field::from_fn(&g, |x| 0.3 * x[1] - 0.2 * x[0].cos());
        let f = sys.internal_forces(&state, Some(&a));
        let total = f.iter().fold([0.0, 0.0], |acc, v| [acc[0] + v[0], acc[1] + v[1]]);
        assert!(total[0].abs() < 1e-8 && total[1].abs() < 1e-8, "{total:?}");
    }

    #[test]
    fn control_force_vjp_matches_finite_difference() {
        let sys = limb();
        let g = *sys.grid();
        let mut state = StateVector::zeros(&g, 4);
        for c in 0..4 {
            for (n, v) in state.component_mut(c).values_mut().iter_mut().enumerate() {
                *v = 0.03 * ((n * 5 + c * 11) as f64).cos();
            }
        }
        let a = Field::from_fn(&g, |x| 0.4 * (x[0] * 0.7).sin() + 0.2 * x[1]);
        let up: Vec<Field> = (0..2).map(|c| Field::from_fn(&g, |x| (x[0] + c as f64 * x[1]).cos())).collect();
        let objective = |act: &Field| -> f64 {
            sys.control_force(&state, act)
                .iter()
                .zip(&up)
                .map(|(f, u)| f.values().iter().zip(u.values()).map(|(p, q)| p * q).sum::<f64>())
                .sum()
        };
        let grad = sys.control_force_vjp(&state, &a, &up);
        let h = 1e-6;
        for n in 0..g.node_count() {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap.values_mut()[n] += h;
            am.values_mut()[n] -= h;
            let fd = (objective(&ap) - objective(&am)) / (2.0 * h);
            let an = grad.values()[n];
            assert!((an - fd).abs() < 1e-5 * fd.abs().max(1.0), "node {n}: {an} vs {fd}");
        }
    }

    #[test]
    fn clamped_root_stays_put_and_gravity_pulls_down() {
        let sys = limb();
        let g = *sys.grid();
        let mut state = sys.initial_state(&mut rand::rng());
        let zero = Field::zeros(&g);
        for _ in 0..300 {
            state = sys.step(&state, &zero, &NoiseIncrement::zeros(&g, 2)).unwrap();
        }
        for n in 0..g.node_count() {
            if sys.is_clamped(n) {
                assert_eq!(state.component(0).values()[n], 0.0);
                assert_eq!(state.component(1).values()[n], 0.0);
            }
        }
        let tip = g.index(g.points(0) - 1, 1);
        assert!(state.component(1).values()[tip] < 0.0);
    }
}
