use rand::Rng;
use rand_distr::StandardNormal;

use super::state::{clip_norm, wrap_angle};
use super::{zone_at, SkillKind, TerrainKind, WorldConfig, WorldState};

/// Commands clipped componentwise to the simulator limit.
pub fn clip_command(config: &WorldConfig, command: &[f64]) -> [f64; 5] {
    let mut c = [0.0; 5];
    for (dst, &src) in c.iter_mut().zip(command) {
        *dst = src.clamp(-config.command_limit, config.command_limit);
    }
    c
}

/// Exact solution of `v' = a - mu v` over `dt` for one axis; returns the
/// new `(position, velocity)`.
pub fn integrate_axis(x: f64, v: f64, a: f64, mu: f64, dt: f64) -> (f64, f64) {
    if mu.abs() < 1e-12 {
        return (x + v * dt + 0.5 * a * dt * dt, v + a * dt);
    }
    let v_inf = a / mu;
    let decay = (-mu * dt).exp();
    let v_new = v_inf + (v - v_inf) * decay;
    let x_new = x + v_inf * dt + (v - v_inf) * (1.0 - decay) / mu;
    (x_new, v_new)
}

fn reflect(x: &mut f64, v: &mut f64, lo: f64, hi: f64, restitution: f64) {
    if *x < lo {
        *x = lo + (lo - *x) * restitution;
        *v = -*v * restitution;
    } else if *x > hi {
        *x = hi - (*x - hi) * restitution;
        *v = -*v * restitution;
    }
    *x = x.clamp(lo, hi);
}

/// One 50 Hz physics step of `skill` with `command` (clipped internally).
pub fn low_level_step<R: Rng + ?Sized>(
    config: &WorldConfig,
    state: &WorldState,
    skill: usize,
    command: &[f64],
    rng: &mut R,
) -> WorldState {
    let mut next = state.clone();
    low_level_step_in_place(config, &mut next, skill, &clip_command(config, command), rng);
    next
}

pub(crate) fn low_level_step_in_place<R: Rng + ?Sized>(
    config: &WorldConfig,
    s: &mut WorldState,
    skill: usize,
    cmd: &[f64; 5],
    rng: &mut R,
) {
    let spec = &config.skills[skill];
    let dt = config.dt;
    let noise: [f64; 4] = [
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    ];

    // Robot.
    let robot_zone = zone_at(config, s.difficulty, s.robot_pos[0]);
    let target = match spec.kind {
        SkillKind::Dribble => {
            let [ox, oy] = s.ball_offset();
            let c = [cmd[0], cmd[1]];
            let cn = c[0].hypot(c[1]);
            let on = ox.hypot(oy);
            let dir = if cn > 1e-6 {
                [c[0] / cn, c[1] / cn]
            } else if on > 1e-9 {
                [ox / on, oy / on]
            } else {
                [s.heading.cos(), s.heading.sin()]
            };
            let margin = 0.05;
            let cp = [
                (s.ball_pos[0] - config.control_offset * dir[0])
                    .clamp(margin, config.arena_length() - margin),
                (s.ball_pos[1] - config.control_offset * dir[1])
                    .clamp(-config.half_width + margin, config.half_width - margin),
            ];
            if on > 1e-9 {
                let turn = wrap_angle(oy.atan2(ox) - s.heading);
                let max_turn = config.omega_scale * dt;
                s.heading = wrap_angle(s.heading + turn.clamp(-max_turn, max_turn));
            }
            clip_norm(
                [
                    config.approach_gain * (cp[0] - s.robot_pos[0]),
                    config.approach_gain * (cp[1] - s.robot_pos[1]),
                ],
                spec.max_speed,
            )
        }
        SkillKind::Locomotion => {
            s.heading = wrap_angle(s.heading + cmd[4] * config.omega_scale * dt);
            clip_norm(
                [cmd[2] * config.v_scale, cmd[3] * config.v_scale],
                spec.max_speed,
            )
        }
    };
    let dv = clip_norm(
        [target[0] - s.robot_vel[0], target[1] - s.robot_vel[1]],
        config.robot_accel * dt,
    );
    let robot_sigma = robot_zone.roughness * spec.roughness_sensitivity * dt.sqrt();
    for i in 0..2 {
        s.robot_vel[i] += dv[i] + robot_sigma * noise[i];
        s.robot_pos[i] += s.robot_vel[i] * dt;
    }

    // Kick.
    if s.kick_cooldown > 0 {
        s.kick_cooldown -= 1;
    }
    if spec.kind == SkillKind::Dribble
        && s.kick_cooldown == 0
        && s.ball_distance() < config.reach_radius
    {
        let want = [cmd[0] * config.v_scale, cmd[1] * config.v_scale];
        let kick = clip_norm(
            [
                spec.kick_gain * (want[0] - s.ball_vel[0]),
                spec.kick_gain * (want[1] - s.ball_vel[1]),
            ],
            spec.kick_cap,
        );
        s.ball_vel[0] += kick[0];
        s.ball_vel[1] += kick[1];
        s.kick_cooldown = config.kick_cooldown;
    }

    // Ball.
    let zone = zone_at(config, s.difficulty, s.ball_pos[0]);
    let x_old = s.ball_pos[0];
    for i in 0..2 {
        let (x, v) = integrate_axis(s.ball_pos[i], s.ball_vel[i], zone.slope[i], zone.friction, dt);
        s.ball_pos[i] = x;
        s.ball_vel[i] = v;
    }
    let ball_sigma = zone.roughness * spec.roughness_sensitivity * dt.sqrt();
    s.ball_vel[0] += ball_sigma * noise[2];
    s.ball_vel[1] += ball_sigma * noise[3];

    if zone.kind == TerrainKind::StairDescent && zone.stair_drop > 0.0 {
        let x_new = s.ball_pos[0];
        if (zone.x_min..zone.x_max).contains(&x_new) {
            let (k0, k1) = (zone.stair_index(x_old), zone.stair_index(x_new));
            let fall = (2.0 * config.gravity * zone.stair_drop).sqrt();
            if k1 > k0 {
                s.ball_vel[0] += config.terrain.stair_boost * fall * (k1 - k0) as f64;
            } else if k1 < k0 {
                let v = s.ball_vel[0];
                if v * v > fall * fall {
                    s.ball_vel[0] = -(v * v - fall * fall).sqrt();
                } else {
                    s.ball_vel[0] = config.wall_restitution * v.abs();
                    s.ball_pos[0] = zone.x_min + k0 as f64 * zone.stair_period;
                }
            }
        }
    }

    let e = config.wall_restitution;
    let (bx, by) = s.ball_pos.split_at_mut(1);
    let (vx, vy) = s.ball_vel.split_at_mut(1);
    reflect(&mut bx[0], &mut vx[0], 0.0, config.arena_length(), e);
    reflect(&mut by[0], &mut vy[0], -config.half_width, config.half_width, e);

    s.substeps += 1;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frictionless_axis_is_ballistic() {
        let (x, v) = integrate_axis(1.0, 2.0, 0.5, 0.0, 2.0);
        assert!((x - (1.0 + 4.0 + 1.0)).abs() < 1e-12);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pure_decay() {
        let (_, v) = integrate_axis(0.0, 1.0, 0.0, 0.2, 1.0);
        assert!((v - (-0.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn reflection_keeps_inside() {
        let (mut x, mut v) = (-0.2, -1.0);
        reflect(&mut x, &mut v, 0.0, 10.0, 0.5);
        assert!((x - 0.1).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
    }
}
