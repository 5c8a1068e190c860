use super::{Background, WorldConfig, WorldTrace};
use crate::error::{Error, Result};

/// Video clip `[frames, 3, height, width]`, values in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Clip {
    pub fn new(frames: usize, channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != frames * channels * height * width {
            return Err(Error::dim(
                "Clip::new",
                &[&[frames, channels, height, width], &[data.len()]],
            ));
        }
        Ok(Clip {
            frames,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn zeros(frames: usize, channels: usize, height: usize, width: usize) -> Self {
        Clip {
            frames,
            channels,
            height,
            width,
            data: vec![0.0; frames * channels * height * width],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        [self.frames, self.channels, self.height, self.width]
    }

    #[inline]
    pub fn index(&self, t: usize, c: usize, y: usize, x: usize) -> usize {
        ((t * self.channels + c) * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, t: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.index(t, c, y, x)]
    }

    pub fn set(&mut self, t: usize, c: usize, y: usize, x: usize, v: f32) {
        let i = self.index(t, c, y, x);
        self.data[i] = v;
    }

    /// One frame's `[3, H, W]` slab.
    pub fn frame(&self, t: usize) -> &[f32] {
        let n = self.channels * self.height * self.width;
        &self.data[t * n..(t + 1) * n]
    }
}

/// Per-frame ownership maps: `-1` for background, otherwise the index of the
/// topmost object covering the pixel center. Pan is already applied.
pub fn owner_maps(trace: &WorldTrace, config: &WorldConfig) -> Vec<Vec<i16>> {
    let side = config.arena;
    let mut maps = Vec::with_capacity(trace.frames.len());
    for (t, objs) in trace.frames.iter().enumerate() {
        let mut raw = vec![-1i16; side * side];
        for (i, o) in objs.iter().enumerate() {
            let r2 = o.radius * o.radius;
            let y0 = ((o.y - o.radius).floor().max(0.0)) as usize;
            let y1 = ((o.y + o.radius).ceil().min(side as f64 - 1.0)).max(-1.0);
            let x0 = ((o.x - o.radius).floor().max(0.0)) as usize;
            let x1 = ((o.x + o.radius).ceil().min(side as f64 - 1.0)).max(-1.0);
            if y1 < 0.0 || x1 < 0.0 {
                continue;
            }
            for y in y0..=(y1 as usize) {
                let dy = y as f64 + 0.5 - o.y;
                for x in x0..=(x1 as usize) {
                    let dx = x as f64 + 0.5 - o.x;
                    if dx * dx + dy * dy <= r2 {
                        raw[y * side + x] = i as i16;
                    }
                }
            }
        }
        maps.push(shift_wrap(&raw, side, t, config.pan));
    }
    maps
}

fn shift_wrap<V: Copy>(src: &[V], side: usize, t: usize, pan: (i32, i32)) -> Vec<V> {
    if pan == (0, 0) {
        return src.to_vec();
    }
    let s = side as i64;
    let ox = (t as i64 * pan.0 as i64).rem_euclid(s) as usize;
    let oy = (t as i64 * pan.1 as i64).rem_euclid(s) as usize;
    let mut out = src.to_vec();
    for y in 0..side {
        let sy = (y + side - oy) % side;
        for x in 0..side {
            let sx = (x + side - ox) % side;
            out[y * side + x] = src[sy * side + sx];
        }
    }
    out
}

fn background_level(config: &WorldConfig, y: usize, x: usize) -> f32 {
    match config.background {
        Background::Gray { level } => level,
        Background::Checkerboard { cell, low, high } => {
            if (x / cell + y / cell) % 2 == 0 {
                low
            } else {
                high
            }
        }
    }
}

/// Renders hard-edged disks over the configured background.
pub fn render(trace: &WorldTrace, config: &WorldConfig) -> Clip {
    let side = config.arena;
    let t_len = trace.frames.len();
    let mut clip = Clip::zeros(t_len, 3, side, side);
    let bg: Vec<f32> = (0..side * side)
        .map(|p| background_level(config, p / side, p % side))
        .collect();
    let maps = owner_maps(trace, config);
    for (t, map) in maps.iter().enumerate() {
        let bg_t = shift_wrap(&bg, side, t, config.pan);
        for p in 0..side * side {
            let owner = map[p];
            for c in 0..3 {
                let v = if owner >= 0 {
                    let color = trace.frames[t][owner as usize].color;
                    config.palette[color].rgb[c]
                } else {
                    bg_t[p]
                };
                clip.data[(t * 3 + c) * side * side + p] = v.clamp(0.0, 1.0);
            }
        }
    }
    clip
}
