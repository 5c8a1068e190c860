use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{owner_maps, Event, EventKind, WorldConfig, WorldTrace};
use crate::tokenfab::TokenGridSpec;

/// Pairs closer than this multiple of their contact distance count as a near miss.
pub const NEAR_MISS_FACTOR: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventClass {
    Static,
    NearMiss,
    SingleCollision,
    MultiCollision,
    Exit,
}

impl EventClass {
    pub const ALL: [EventClass; 5] = [
        EventClass::Static,
        EventClass::NearMiss,
        EventClass::SingleCollision,
        EventClass::MultiCollision,
        EventClass::Exit,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            EventClass::Static => "static",
            EventClass::NearMiss => "near_miss",
            EventClass::SingleCollision => "single_collision",
            EventClass::MultiCollision => "multi_collision",
            EventClass::Exit => "exit",
        }
    }
}

/// Ground truth attached to every clip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub seed: u64,
    pub n_objects: usize,
    pub collision_present: bool,
    pub event_class: EventClass,
    pub events: Vec<Event>,
    /// Covered fraction of each token's pixel sites.
    pub occupancy: Vec<f64>,
    /// Same as `occupancy`, split by the object owning the pixel.
    pub object_occupancy: Vec<Vec<f64>>,
    /// Sorted token indices within one frame and one patch of a contact point.
    pub interaction_tokens: Vec<usize>,
}

fn classify(trace: &WorldTrace) -> EventClass {
    let collisions = trace.collisions().count();
    if collisions >= 2 {
        return EventClass::MultiCollision;
    }
    if collisions == 1 {
        return EventClass::SingleCollision;
    }
    if trace.events.iter().any(|e| matches!(e.kind, EventKind::Exit { .. })) {
        return EventClass::Exit;
    }
    let n = trace.n_objects();
    for i in 0..n {
        for j in i + 1..n {
            let near = trace.frames.iter().any(|f| {
                let (a, b) = (&f[i], &f[j]);
                a.active && b.active && {
                    let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                    d < NEAR_MISS_FACTOR * (a.radius + b.radius)
                }
            });
            if near {
                return EventClass::NearMiss;
            }
        }
    }
    EventClass::Static
}

/// Derives event class, occupancy and interaction tokens from a trace.
pub fn make_labels(trace: &WorldTrace, config: &WorldConfig, grid: &TokenGridSpec) -> LabelSet {
    let n_tok = grid.n_tokens();
    let n_obj = trace.n_objects();
    let side = config.arena;
    let mut counts = vec![0u32; n_tok];
    let mut per_obj = vec![vec![0u32; n_tok]; n_obj];
    for (t, map) in owner_maps(trace, config).iter().enumerate() {
        for (p, &o) in map.iter().enumerate() {
            if o >= 0 {
                let tok = grid.token_of(t, p / side, p % side);
                counts[tok] += 1;
                per_obj[o as usize][tok] += 1;
            }
        }
    }
    let denom = grid.token_pixels() as f64;
    let frac = |c: &Vec<u32>| c.iter().map(|&k| k as f64 / denom).collect::<Vec<f64>>();

    let mut inter = BTreeSet::new();
    let s = side as i64;
    for (frame, _, _, (px, py)) in trace.collisions() {
        let x = ((px.floor() as i64 + frame as i64 * config.pan.0 as i64).rem_euclid(s)) as usize;
        let y = ((py.floor() as i64 + frame as i64 * config.pan.1 as i64).rem_euclid(s)) as usize;
        let (row, col) = (y / grid.patch, x / grid.patch);
        let lo_f = frame.saturating_sub(1);
        let hi_f = (frame + 1).min(grid.frames - 1);
        for f in lo_f..=hi_f {
            for r in row.saturating_sub(1)..=(row + 1).min(grid.rows() - 1) {
                for c in col.saturating_sub(1)..=(col + 1).min(grid.cols() - 1) {
                    inter.insert(grid.index(f / grid.tubelet, r, c));
                }
            }
        }
    }
    let collision_present = trace.collisions().next().is_some();
    LabelSet {
        seed: trace.seed,
        n_objects: n_obj,
        collision_present,
        event_class: classify(trace),
        events: trace.events.clone(),
        occupancy: frac(&counts),
        object_occupancy: per_obj.iter().map(frac).collect(),
        interaction_tokens: inter.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsim::{simulate, simulate_from, ObjectInit, OpenSides};

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
    fn static_scene_labels() {
        let cfg = closed();
        let trace = simulate_from(&cfg, &[obj(20.0, 20.0, 0.0, 0.0, 6.0, 0), obj(70.0, 70.0, 0.0, 0.0, 6.0, 1)], 3).unwrap();
        let l = make_labels(&trace, &cfg, &TokenGridSpec::default());
        assert!(!l.collision_present);
        assert_eq!(l.event_class, EventClass::Static);
        assert!(l.interaction_tokens.is_empty());
    }

    #[test]
    fn collision_frame_seven_covers_tubelet_three() {
        // radius 5, gap closing at 2 px/frame: contact at frame 7, point (52.5, 40.5)
        let cfg = closed();
        let init = [obj(40.5, 40.5, 1.0, 0.0, 5.0, 0), obj(64.5, 40.5, -1.0, 0.0, 5.0, 1)];
        let trace = simulate_from(&cfg, &init, 0).unwrap();
        let c: Vec<_> = trace.collisions().collect();
        assert_eq!(c.len(), 1);
        let (frame, _, _, (px, py)) = c[0];
        assert_eq!(frame, 7);
        assert_eq!(((py as usize) / 16, (px as usize) / 16), (2, 3));
        let g = TokenGridSpec::default();
        let l = make_labels(&trace, &cfg, &g);
        assert_eq!(l.event_class, EventClass::SingleCollision);
        for s in [3, 4] {
            for r in 1..=3 {
                for col in 2..=4 {
                    assert!(l.interaction_tokens.contains(&g.index(s, r, col)));
                }
            }
        }
        assert_eq!(l.interaction_tokens.len(), 18);
    }

    #[test]
    fn occupancy_mass_matches_pixel_count() {
        let g = TokenGridSpec::default();
        let cfg = WorldConfig::default();
        for seed in 0..10 {
            let trace = simulate(&cfg, seed).unwrap();
            let l = make_labels(&trace, &cfg, &g);
            let covered: usize = owner_maps(&trace, &cfg)
                .iter()
                .map(|m| m.iter().filter(|&&o| o >= 0).count())
                .sum();
            let mass: f64 = l.occupancy.iter().map(|o| o * 512.0).sum();
            assert!((mass - covered as f64).abs() < 1e-9);
            assert!(l.occupancy.iter().all(|&o| (0.0..=1.0).contains(&o)));
            assert_eq!(l.collision_present, !l.interaction_tokens.is_empty());
        }
    }

    #[test]
    fn near_miss_and_multi_classes() {
        let cfg = closed();
        let g = TokenGridSpec::default();
        // parallel lanes 20 px apart, contact distance 16
        let init = [obj(20.0, 40.0, 2.0, 0.0, 8.0, 0), obj(76.0, 60.0, -2.0, 0.0, 8.0, 1)];
        let l = make_labels(&simulate_from(&cfg, &init, 0).unwrap(), &cfg, &g);
        assert_eq!(l.event_class, EventClass::NearMiss);
        let init = [
            obj(20.0, 48.0, 3.0, 0.0, 7.0, 0),
            obj(48.0, 48.0, 0.0, 0.0, 7.0, 1),
            obj(76.0, 48.0, 0.0, 0.0, 7.0, 2),
        ];
        let l = make_labels(&simulate_from(&cfg, &init, 0).unwrap(), &cfg, &g);
        assert_eq!(l.event_class, EventClass::MultiCollision);
    }
}
