use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Event, EventKind, ObjectState, WorldConfig, WorldTrace};
use crate::error::{Error, Result};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;
/// Minimum free gap between freshly placed disks.
const PLACEMENT_GAP: f64 = 1.0;

/// Initial condition of one object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectInit {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
    pub color: usize,
}

/// Samples non-overlapping initial conditions from `seed`.
///
/// Draw order is fixed per object (radius, position attempts, rest flag,
/// velocity) so the stream for object `i` never depends on later objects.
pub fn place_objects(config: &WorldConfig, seed: u64) -> Result<Vec<ObjectInit>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(config.min_objects..=config.max_objects);
    let mut colors: Vec<usize> = (0..config.palette.len()).collect();
    colors.shuffle(&mut rng);
    let side = config.arena as f64;
    let mut placed: Vec<ObjectInit> = Vec::with_capacity(n);
    for i in 0..n {
        let radius = if config.max_radius > config.min_radius {
            rng.gen_range(config.min_radius..=config.max_radius)
        } else {
            config.min_radius
        };
        if 2.0 * radius > side {
            return Err(Error::Placement {
                object: i,
                attempts: 0,
            });
        }
        let mut spot = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = rng.gen_range(radius..=side - radius);
            let y = rng.gen_range(radius..=side - radius);
            let free = placed.iter().all(|o| {
                let d = ((o.x - x).powi(2) + (o.y - y).powi(2)).sqrt();
                d > o.radius + radius + PLACEMENT_GAP
            });
            if free {
                spot = Some((x, y));
                break;
            }
        }
        let Some((x, y)) = spot else {
            return Err(Error::Placement {
                object: i,
                attempts: MAX_PLACEMENT_ATTEMPTS,
            });
        };
        let at_rest = rng.gen_bool(config.rest_probability);
        let s = config.max_speed;
        let (mut vx, mut vy) = if s > 0.0 {
            (rng.gen_range(-s..=s), rng.gen_range(-s..=s))
        } else {
            (0.0, 0.0)
        };
        if at_rest {
            vx = 0.0;
            vy = 0.0;
        }
        placed.push(ObjectInit {
            x,
            y,
            vx,
            vy,
            radius,
            color: colors[i],
        });
    }
    Ok(placed)
}

/// Places objects from `seed` and integrates the scene.
pub fn simulate(config: &WorldConfig, seed: u64) -> Result<WorldTrace> {
    let init = place_objects(config, seed)?;
    simulate_from(config, &init, seed)
}

/// Re-simulates the scene of `seed` with object `removed` deleted; every other
/// object starts exactly as in the original scene.
pub fn counterfactual_remove(config: &WorldConfig, seed: u64, removed: usize) -> Result<WorldTrace> {
    let init = place_objects(config, seed)?;
    counterfactual_remove_from(config, &init, seed, removed)
}

/// [`counterfactual_remove`] for explicit initial conditions.
pub fn counterfactual_remove_from(
    config: &WorldConfig,
    init: &[ObjectInit],
    seed: u64,
    removed: usize,
) -> Result<WorldTrace> {
    if removed >= init.len() {
        return Err(Error::Contract(format!(
            "cannot remove object {removed} from a scene of {}",
            init.len()
        )));
    }
    let mut init = init.to_vec();
    init.remove(removed);
    let mut trace = simulate_from(config, &init, seed)?;
    // Keep object indices aligned with the original scene in events.
    let remap = |i: usize| if i >= removed { i + 1 } else { i };
    for e in &mut trace.events {
        e.kind = match e.kind {
            EventKind::Collision { a, b, point } => EventKind::Collision {
                a: remap(a),
                b: remap(b),
                point,
            },
            EventKind::WallBounce { object } => EventKind::WallBounce { object: remap(object) },
            EventKind::Exit { object } => EventKind::Exit { object: remap(object) },
        };
    }
    Ok(trace)
}

/// Integrates explicit initial conditions: Euler steps with `substeps` per
/// frame, equal-mass elastic contacts, reflecting closed walls and exits
/// through open sides.
pub fn simulate_from(config: &WorldConfig, init: &[ObjectInit], seed: u64) -> Result<WorldTrace> {
    config.validate()?;
    let side = config.arena as f64;
    let dt = 1.0 / config.substeps as f64;
    let mut objs: Vec<ObjectState> = init
        .iter()
        .map(|o| ObjectState {
            x: o.x,
            y: o.y,
            vx: o.vx,
            vy: o.vy,
            radius: o.radius,
            color: o.color,
            active: true,
        })
        .collect();
    let mut frames = Vec::with_capacity(config.frames);
    let mut events = Vec::new();
    frames.push(objs.clone());
    let open = config.open_sides;
    for frame in 1..config.frames {
        for _ in 0..config.substeps {
            for o in objs.iter_mut() {
                o.x += o.vx * dt;
                o.y += o.vy * dt;
            }
            // walls and exits
            for (i, o) in objs.iter_mut().enumerate() {
                if !o.active {
                    continue;
                }
                let left_out = o.x < 0.0 && open.left;
                let right_out = o.x > side && open.right;
                let top_out = o.y < 0.0 && open.top;
                let bottom_out = o.y > side && open.bottom;
                if left_out || right_out || top_out || bottom_out {
                    o.active = false;
                    events.push(Event {
                        frame,
                        kind: EventKind::Exit { object: i },
                    });
                    continue;
                }
                let mut bounced = false;
                if !open.left && o.x - o.radius < 0.0 && o.vx < 0.0 {
                    o.vx = -o.vx;
                    bounced = true;
                }
                if !open.right && o.x + o.radius > side && o.vx > 0.0 {
                    o.vx = -o.vx;
                    bounced = true;
                }
                if !open.top && o.y - o.radius < 0.0 && o.vy < 0.0 {
                    o.vy = -o.vy;
                    bounced = true;
                }
                if !open.bottom && o.y + o.radius > side && o.vy > 0.0 {
                    o.vy = -o.vy;
                    bounced = true;
                }
                if bounced {
                    events.push(Event {
                        frame,
                        kind: EventKind::WallBounce { object: i },
                    });
                }
            }
            // pairwise contacts
            for i in 0..objs.len() {
                for j in i + 1..objs.len() {
                    if !(objs[i].active && objs[j].active) {
                        continue;
                    }
                    let (dx, dy) = (objs[j].x - objs[i].x, objs[j].y - objs[i].y);
                    let dist = (dx * dx + dy * dy).sqrt();
                    let reach = objs[i].radius + objs[j].radius;
                    if dist > reach || dist == 0.0 {
                        continue;
                    }
                    let (nx, ny) = (dx / dist, dy / dist);
                    let approach = (objs[i].vx - objs[j].vx) * nx + (objs[i].vy - objs[j].vy) * ny;
                    if approach <= 0.0 {
                        continue;
                    }
                    // equal masses: exchange the normal components
                    let impulse = approach * (1.0 + config.restitution) / 2.0;
                    objs[i].vx -= impulse * nx;
                    objs[i].vy -= impulse * ny;
                    objs[j].vx += impulse * nx;
                    objs[j].vy += impulse * ny;
                    let point = (objs[i].x + objs[i].radius * nx, objs[i].y + objs[i].radius * ny);
                    events.push(Event {
                        frame,
                        kind: EventKind::Collision { a: i, b: j, point },
                    });
                }
            }
        }
        frames.push(objs.clone());
    }
    Ok(WorldTrace { seed, frames, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::OpenSides;

    fn closed() -> WorldConfig {
        WorldConfig {
            open_sides: OpenSides {
                left: false,
                right: false,
                top: false,
                bottom: false,
            },
            ..WorldConfig::default()
        }
    }

    fn obj(x: f64, y: f64, vx: f64, vy: f64, r: f64, color: usize) -> ObjectInit {
        ObjectInit { x, y, vx, vy, radius: r, color }
    }

    #[test]
    fn head_on_equal_masses_swap_velocities() {
        let cfg = closed();
        let init = [obj(30.0, 48.0, 2.0, 0.0, 8.0, 0), obj(66.0, 48.0, -2.0, 0.0, 8.0, 1)];
        let trace = simulate_from(&cfg, &init, 0).unwrap();
        let collisions: Vec<_> = trace.collisions().collect();
        assert_eq!(collisions.len(), 1);
        let f = collisions[0].0;
        let after = &trace.frames[f];
        assert_eq!(after[0].vx, -2.0);
        assert_eq!(after[1].vx, 2.0);
        assert_eq!(after[0].vy, 0.0);
    }

    #[test]
    fn lone_resting_object_is_constant() {
        let cfg = closed();
        let trace = simulate_from(&cfg, &[obj(40.0, 40.0, 0.0, 0.0, 7.0, 2)], 0).unwrap();
        assert!(trace.events.is_empty());
        assert!(trace.frames.iter().all(|f| f[0] == trace.frames[0][0]));
        assert_eq!(trace.frames.len(), 16);
    }

    #[test]
    fn random_scene_conserves_energy() {
        let cfg = WorldConfig {
            min_objects: 3,
            max_objects: 3,
            ..closed()
        };
        for seed in 0..50 {
            let trace = simulate(&cfg, seed).unwrap();
            let e0 = trace.kinetic_energy(0);
            for t in 0..trace.frames.len() {
                assert!((trace.kinetic_energy(t) - e0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn placement_is_deterministic_and_non_overlapping() {
        let cfg = WorldConfig::default();
        for seed in 0..100 {
            let a = place_objects(&cfg, seed).unwrap();
            assert_eq!(a, place_objects(&cfg, seed).unwrap());
            for i in 0..a.len() {
                for j in i + 1..a.len() {
                    let d = ((a[i].x - a[j].x).powi(2) + (a[i].y - a[j].y).powi(2)).sqrt();
                    assert!(d > a[i].radius + a[j].radius);
                }
            }
        }
    }

    #[test]
    fn impossible_placement_errors() {
        let cfg = WorldConfig {
            min_objects: 5,
            max_objects: 5,
            min_radius: 30.0,
            max_radius: 30.0,
            ..WorldConfig::default()
        };
        assert!(matches!(place_objects(&cfg, 1), Err(Error::Placement { .. })));
    }

    #[test]
    fn momentum_is_conserved_away_from_walls() {
        let cfg = WorldConfig {
            min_objects: 4,
            max_objects: 5,
            ..closed()
        };
        for seed in 0..50 {
            let trace = simulate(&cfg, seed).unwrap();
            for f in 1..trace.frames.len() {
                let wall = trace
                    .events
                    .iter()
                    .any(|e| e.frame == f && !matches!(e.kind, EventKind::Collision { .. }));
                if wall {
                    continue;
                }
                let p = |t: usize| {
                    trace.frames[t]
                        .iter()
                        .fold((0.0, 0.0), |(px, py), o| (px + o.vx, py + o.vy))
                };
                let (a, b) = (p(f - 1), p(f));
                assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn removing_the_only_mover_leaves_no_collisions() {
        let cfg = closed();
        let init = [obj(30.0, 48.0, 3.0, 0.0, 8.0, 0), obj(66.0, 48.0, 0.0, 0.0, 8.0, 1)];
        assert_eq!(simulate_from(&cfg, &init, 0).unwrap().collisions().count(), 1);
        let cf = counterfactual_remove_from(&cfg, &init, 0, 0).unwrap();
        assert_eq!(cf.collisions().count(), 0);
    }

    #[test]
    fn removing_a_bystander_keeps_events() {
        let cfg = closed();
        let init = [
            obj(30.0, 30.0, 2.0, 0.0, 8.0, 0),
            obj(66.0, 30.0, -2.0, 0.0, 8.0, 1),
            obj(80.0, 82.0, 0.0, 0.0, 6.0, 2),
        ];
        let full = simulate_from(&cfg, &init, 0).unwrap();
        let cf = counterfactual_remove_from(&cfg, &init, 0, 2).unwrap();
        assert_eq!(cf.events, full.events);
        // removing object 0 drops the collision; indices stay in original numbering
        let init = [
            obj(80.0, 82.0, 0.0, 0.0, 6.0, 2),
            obj(30.0, 30.0, 2.0, 0.0, 8.0, 0),
            obj(66.0, 30.0, -2.0, 0.0, 8.0, 1),
        ];
        let full = simulate_from(&cfg, &init, 0).unwrap();
        let cf = counterfactual_remove_from(&cfg, &init, 0, 0).unwrap();
        assert_eq!(cf.events, full.events);
        assert!(matches!(cf.events[0].kind, EventKind::Collision { a: 1, b: 2, .. }));
        let cf = counterfactual_remove_from(&cfg, &init, 0, 1).unwrap();
        assert_eq!(cf.collisions().count(), 0);
    }

    #[test]
    fn removing_the_only_object_is_valid() {
        let cfg = closed();
        let cf = counterfactual_remove_from(&cfg, &[obj(30.0, 30.0, 1.0, 0.0, 6.0, 0)], 0, 0).unwrap();
        assert_eq!(cf.n_objects(), 0);
        assert!(cf.events.is_empty());
    }

    #[test]
    fn exits_through_open_side() {
        let cfg = WorldConfig::default();
        let trace = simulate_from(&cfg, &[obj(10.0, 48.0, -3.0, 0.0, 6.0, 0)], 0).unwrap();
        assert!(trace
            .events
            .iter()
            .any(|e| matches!(e.kind, EventKind::Exit { object: 0 })));
        let last = trace.frames.last().unwrap()[0];
        assert!(!last.active);
        assert_eq!(last.speed_sq(), 9.0);
    }
}
