//! Deterministic 2D rigid-body world: simulation, rendering, ground-truth
//! labels, counterfactual re-simulation and the clip file format.
//!
//! Scenes are equal-mass circles with perfectly elastic contacts and no
//! friction, so total kinetic energy and per-collision momentum are exact
//! invariants of every trace.

mod dataset;
mod io;
mod labels;
mod render;
mod sim;

#[allow(unused_imports)]
pub(crate) use dataset::with_workers;
pub use dataset::{gen_dataset, generate_scenes, Manifest, ManifestEntry, Scene};
pub use io::{decode_clip, encode_clip, read_clip, write_clip, CLIP_MAGIC, CLIP_VERSION};
pub use labels::{make_labels, EventClass, LabelSet, NEAR_MISS_FACTOR};
pub use render::{owner_maps, render, Clip};
pub use sim::{counterfactual_remove, counterfactual_remove_from, place_objects, simulate, simulate_from, ObjectInit};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One palette entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedColor {
    pub name: String,
    pub rgb: [f32; 3],
}

fn color(name: &str, rgb: [f32; 3]) -> NamedColor {
    NamedColor {
        name: name.to_string(),
        rgb,
    }
}

pub fn default_palette() -> Vec<NamedColor> {
    vec![
        color("red", [0.9, 0.15, 0.1]),
        color("blue", [0.15, 0.3, 0.95]),
        color("green", [0.1, 0.8, 0.2]),
        color("yellow", [0.95, 0.9, 0.1]),
        color("purple", [0.6, 0.2, 0.8]),
        color("cyan", [0.1, 0.85, 0.9]),
        color("orange", [1.0, 0.55, 0.0]),
        color("white", [0.95, 0.95, 0.95]),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Gray { level: f32 },
    Checkerboard { cell: usize, low: f32, high: f32 },
}

/// Which arena sides let objects leave instead of reflecting them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenSides {
    pub left: bool,
    pub right: bool,
    pub top: bool,
    pub bottom: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    /// Square arena side in pixels.
    pub arena: usize,
    pub frames: usize,
    pub substeps: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Per-axis speed bound in px/frame.
    pub max_speed: f64,
    /// Probability that an object starts at rest.
    pub rest_probability: f64,
    pub restitution: f64,
    pub open_sides: OpenSides,
    pub palette: Vec<NamedColor>,
    pub background: Background,
    /// Global translation in px/frame applied at render time.
    pub pan: (i32, i32),
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            arena: 96,
            frames: 16,
            substeps: 4,
            min_objects: 2,
            max_objects: 5,
            min_radius: 6.0,
            max_radius: 12.0,
            max_speed: 4.0,
            rest_probability: 0.25,
            restitution: 1.0,
            open_sides: OpenSides {
                left: true,
                right: false,
                top: false,
                bottom: false,
            },
            palette: default_palette(),
            background: Background::Gray { level: 0.1 },
            pan: (0, 0),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Contract(format!("invalid world config: {m}")));
        if self.arena == 0 || self.frames < 3 || self.substeps == 0 {
            return bad("arena, frames and substeps must be positive (frames >= 3)");
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return bad("object count range");
        }
        if self.max_objects > self.palette.len() {
            return bad("palette smaller than the maximum object count");
        }
        if !(self.min_radius > 0.0 && self.min_radius <= self.max_radius) {
            return bad("radius range");
        }
        if !(self.max_speed >= 0.0) || !(0.0..=1.0).contains(&self.rest_probability) {
            return bad("speed or rest probability");
        }
        if !(self.restitution > 0.0 && self.restitution <= 1.0) {
            return bad("restitution must lie in (0, 1]");
        }
        if self
            .palette
            .iter()
            .any(|c| c.rgb.iter().any(|v| !(0.0..=1.0).contains(v)))
        {
            return bad("palette colors must lie in [0,1]");
        }
        if let Background::Checkerboard { cell, .. } = self.background {
            if cell == 0 {
                return bad("checkerboard cell size");
            }
        }
        Ok(())
    }

    pub fn color_name(&self, color: usize) -> &str {
        &self.palette[color].name
    }
}

/// State of one object at a frame boundary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
    pub color: usize,
    /// `false` once the object has left through an open side.
    pub active: bool,
}

impl ObjectState {
    pub fn speed_sq(&self) -> f64 {
        self.vx * self.vx + self.vy * self.vy
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Contact between objects `a < b` at `point` (arena pixels, unpanned).
    Collision { a: usize, b: usize, point: (f64, f64) },
    WallBounce { object: usize },
    Exit { object: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Frame whose preceding substeps produced the event.
    pub frame: usize,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Ground-truth trajectory of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldTrace {
    pub seed: u64,
    /// `frames[t][i]` is object `i` at frame `t`.
    pub frames: Vec<Vec<ObjectState>>,
    pub events: Vec<Event>,
}

impl WorldTrace {
    pub fn n_objects(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    pub fn collisions(&self) -> impl Iterator<Item = (usize, usize, usize, (f64, f64))> + '_ {
        self.events.iter().filter_map(|e| match e.kind {
            EventKind::Collision { a, b, point } => Some((e.frame, a, b, point)),
            _ => None,
        })
    }

    pub fn kinetic_energy(&self, frame: usize) -> f64 {
        self.frames[frame].iter().map(|o| 0.5 * o.speed_sq()).sum()
    }

    /// Objects with nonzero initial velocity.
    pub fn moving_objects(&self) -> usize {
        self.frames
            .first()
            .map_or(0, |f| f.iter().filter(|o| o.speed_sq() > 0.0).count())
    }
}
