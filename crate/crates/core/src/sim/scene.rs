use rand::Rng;

use super::noise::value_noise;
use super::{ScenarioParams, SimError};
use crate::analytics::{Band, BandCounts};
use crate::rng::stream;

pub const MAX_TEMPERATURE_F: f32 = 2000.0;
const ROOM_F: f32 = 70.0;
/// Flame temperature at the edge and centre of the flame region.
const FLAME_EDGE_F: f32 = 330.0;
const FLAME_SPAN_F: f32 = 900.0;
const HALO_YELLOW_F: f32 = 250.0;
const HALO_GREEN_F: f32 = 150.0;
const HALO_YELLOW_REACH: f64 = 1.25;
const HALO_GREEN_REACH: f64 = 1.6;
/// Flame area at t=0 and the share of the frame reached at flashover.
const MIN_FLAME_AREA: f64 = 0.008;
const FLASHOVER_FLAME_AREA: f64 = 0.65;
const FLASHOVER_MAX_AREA: f64 = 0.9;
const CONTROL_MAX_AREA: f64 = 0.07;
/// Furniture heats up more slowly than the surrounding gas.
const FURNITURE_LAG: f32 = 0.8;
const FINGERS: usize = 6;

/// Axis-aligned rectangle in pixels, half-open on the far edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }
}

/// Snapshot of the compartment at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneState {
    pub t_sec: f64,
    pub size: usize,
    /// Row-major, °F.
    pub temperature: Vec<f32>,
    /// Row-major smoke density in `[0, 1]`.
    pub smoke: Vec<f32>,
    pub flame: Vec<bool>,
    pub furniture: Vec<PixelRect>,
}

impl SceneState {
    pub fn mean_temperature(&self) -> f64 {
        self.temperature.iter().map(|&t| t as f64).sum::<f64>() / self.temperature.len() as f64
    }

    pub fn flame_fraction(&self) -> f64 {
        self.flame.iter().filter(|&&f| f).count() as f64 / self.flame.len() as f64
    }

    /// Share of pixels at or above `threshold_f`.
    pub fn fraction_at_least(&self, threshold_f: f32) -> f64 {
        self.temperature
            .iter()
            .filter(|&&t| t >= threshold_f)
            .count() as f64
            / self.temperature.len() as f64
    }

    pub fn is_furniture(&self, x: usize, y: usize) -> bool {
        self.furniture.iter().any(|r| r.contains(x, y))
    }

    /// Band counts taken straight from the temperature field.
    pub fn truth_counts(&self) -> BandCounts {
        let mut counts = BandCounts::zero(self.temperature.len() as u64);
        for &t in &self.temperature {
            counts.add(Some(Band::from_temperature(t as f64)));
        }
        counts
    }
}

#[derive(Debug, Clone)]
struct Finger {
    row: f64,
    reach: f64,
    start: f64,
    temperature: f32,
    wave_freq: f64,
    wave_phase: f64,
}

/// A scenario with its seeded static layout. States are closed-form in `t`.
#[derive(Debug, Clone)]
pub struct Scenario {
    params: ScenarioParams,
    ambient: Vec<f32>,
    /// Position of each pixel in the order the flame claims them.
    flame_rank: Vec<usize>,
    fingers: Vec<Finger>,
    flashover_texture: Vec<f32>,
    furniture: Vec<PixelRect>,
    pub(crate) wall_texture: Vec<f32>,
}

impl Scenario {
    pub fn new(params: ScenarioParams) -> Result<Self, SimError> {
        params.validate()?;
        let n = params.image_size;
        let seed = params.seed;

        let ambient = value_noise(n, 4, &mut stream(seed, "sim-ambient"))
            .into_iter()
            .map(|v| 62.0 + 12.0 * v)
            .collect();

        let jitter = value_noise(n, 6, &mut stream(seed, "sim-flame-shape"));
        let [ox, oy] = params.fire_origin;
        let potential: Vec<f64> = (0..n * n)
            .map(|i| {
                let u = ((i % n) as f64 + 0.5) / n as f64;
                let v = ((i / n) as f64 + 0.5) / n as f64;
                let dx = u - ox;
                let dy = v - oy;
                // Flames climb faster than they spread downward.
                let sy = if dy < 0.0 { 0.75 } else { 1.6 };
                (dx * dx + (sy * dy) * (sy * dy)).sqrt() + 0.08 * jitter[i] as f64
            })
            .collect();
        let mut order: Vec<usize> = (0..n * n).collect();
        order.sort_by(|&a, &b| potential[a].total_cmp(&potential[b]).then(a.cmp(&b)));
        let mut flame_rank = vec![0; n * n];
        for (rank, &pixel) in order.iter().enumerate() {
            flame_rank[pixel] = rank;
        }

        let mut rng = stream(seed, "sim-fingers");
        let fingers = match params.flashover_time_sec {
            None => Vec::new(),
            Some(f) => {
                let lead = params.rollover_lead_sec.min(f);
                (0..FINGERS)
                    .map(|i| Finger {
                        row: 0.03 + 0.045 * i as f64 + rng.random_range(-0.01..0.01),
                        reach: rng.random_range(0.55..1.0),
                        start: f - lead + lead * 0.3 * i as f64 / FINGERS as f64,
                        temperature: rng.random_range(340.0..460.0),
                        wave_freq: rng.random_range(1.5..3.5),
                        wave_phase: rng.random_range(0.0..1.0),
                    })
                    .collect()
            }
        };

        let flashover_texture = value_noise(n, 5, &mut stream(seed, "sim-flashover"));
        let wall_texture = value_noise(n, 8, &mut stream(seed, "sim-wall"));
        let furniture = params
            .furniture
            .iter()
            .map(|f| {
                let px = |v: f64| ((v * n as f64).round() as usize).min(n);
                PixelRect {
                    x0: px(f.x0),
                    y0: px(f.y0),
                    x1: px(f.x1).max(px(f.x0) + 1).min(n),
                    y1: px(f.y1).max(px(f.y0) + 1).min(n),
                }
            })
            .collect();

        Ok(Self {
            params,
            ambient,
            flame_rank,
            fingers,
            flashover_texture,
            furniture,
            wall_texture,
        })
    }

    pub fn params(&self) -> &ScenarioParams {
        &self.params
    }

    pub fn size(&self) -> usize {
        self.params.image_size
    }

    /// Fraction of the frame covered by flame at time `t`.
    pub fn flame_area(&self, t: f64) -> f64 {
        let r = self.params.growth_rate;
        let area = match self.params.flashover_time_sec {
            Some(f) => {
                let mid = f
                    - (FLASHOVER_FLAME_AREA / (FLASHOVER_MAX_AREA - FLASHOVER_FLAME_AREA)).ln() / r;
                FLASHOVER_MAX_AREA / (1.0 + (-r * (t - mid)).exp())
            }
            None => {
                let mid = 0.35 * self.params.duration_sec;
                CONTROL_MAX_AREA / (1.0 + (-r * (t - mid)).exp())
            }
        };
        area.max(MIN_FLAME_AREA)
    }

    /// Smoke-layer depth (fraction of frame height), peak density and the
    /// temperature rise at the ceiling.
    fn smoke_layer(&self, t: f64) -> (f64, f64, f64) {
        match self.params.flashover_time_sec {
            Some(f) => {
                let u = (t / f).clamp(0.0, 1.0);
                (
                    0.55 * u.powf(0.7),
                    (0.3 + 0.6 * u).min(0.95),
                    420.0 * u.powi(3),
                )
            }
            None => {
                let u = 1.0 - (-t / 90.0).exp();
                (0.35 * u, 0.5 * u, 105.0 * u)
            }
        }
    }

    pub fn initial_state(&self) -> SceneState {
        self.state_at(0.0)
    }

    /// Advance `state` by `dt_sec`.
    pub fn evolve(&self, state: &SceneState, dt_sec: f64) -> Result<SceneState, SimError> {
        if !(dt_sec > 0.0) {
            return Err(SimError::Config(format!(
                "time step must be positive, got {dt_sec}"
            )));
        }
        Ok(self.state_at(state.t_sec + dt_sec))
    }

    pub fn state_at(&self, t: f64) -> SceneState {
        let n = self.params.image_size;
        let pixels = n * n;
        let flame_pixels = (self.flame_area(t) * pixels as f64).round() as usize;
        let (depth, density, rise) = self.smoke_layer(t);
        let [ox, _] = self.params.fire_origin;
        let finger_half_px = (n as f64 / 64.0).max(0.5);

        let mut temperature = vec![0.0f32; pixels];
        let mut smoke = vec![0.0f32; pixels];
        let mut flame = vec![false; pixels];
        for y in 0..n {
            let v = (y as f64 + 0.5) / n as f64;
            let below = if depth > 0.0 {
                (1.0 - v / depth).max(0.0)
            } else {
                0.0
            };
            let layer_t = ROOM_F as f64 + rise * below;
            let layer_s = density * below.sqrt();
            for x in 0..n {
                let i = y * n + x;
                let u = (x as f64 + 0.5) / n as f64;
                let mut env = self.ambient[i].max(layer_t as f32);

                let rank = self.flame_rank[i] as f64;
                let fp = flame_pixels as f64;
                if rank < fp * HALO_YELLOW_REACH {
                    env = env.max(HALO_YELLOW_F);
                } else if rank < fp * HALO_GREEN_REACH {
                    env = env.max(HALO_GREEN_F);
                }

                for finger in &self.fingers {
                    let f = self.params.flashover_time_sec.unwrap_or(f64::INFINITY);
                    if t < finger.start {
                        continue;
                    }
                    let grown = ((t - finger.start) / (f - finger.start).max(1e-9)).min(1.0);
                    let half_span = finger.reach * grown * 0.6;
                    if (u - ox).abs() > half_span {
                        continue;
                    }
                    let centre = finger.row
                        + 0.015
                            * (std::f64::consts::TAU * (finger.wave_freq * u + finger.wave_phase))
                                .sin();
                    if ((v - centre) * n as f64).abs() <= finger_half_px {
                        env = env.max(finger.temperature);
                    }
                }

                if let Some(f) = self.params.flashover_time_sec {
                    if t >= f {
                        let ramp = ((t - f) / 15.0).min(1.0) as f32;
                        env =
                            env.max(FLAME_EDGE_F + 170.0 * ramp + 25.0 * self.flashover_texture[i]);
                    }
                }

                let temp = if (self.flame_rank[i]) < flame_pixels {
                    flame[i] = true;
                    let core = 1.0 - rank / fp.max(1.0);
                    env.max(FLAME_EDGE_F + FLAME_SPAN_F * core as f32)
                } else if self.furniture.iter().any(|r| r.contains(x, y)) {
                    ROOM_F + FURNITURE_LAG * (env - ROOM_F)
                } else {
                    env
                };
                temperature[i] = temp.clamp(0.0, MAX_TEMPERATURE_F);
                smoke[i] = if flame[i] {
                    0.0
                } else {
                    layer_s.clamp(0.0, 1.0) as f32
                };
            }
        }

        SceneState {
            t_sec: t,
            size: n,
            temperature,
            smoke,
            flame,
            furniture: self.furniture.clone(),
        }
    }

    /// States at every timeline step.
    pub fn timeline_states(&self) -> impl Iterator<Item = SceneState> + '_ {
        self.params.timeline().into_iter().map(|t| self.state_at(t))
    }
}
