use rand::Rng;

use super::scene::{Scenario, SceneState};
use crate::analytics::Band;
use crate::image::Image;
use crate::rng::indexed_stream;

/// Largest per-channel offset applied to thermal palette anchors.
pub const JITTER: i32 = 20;

const SMOKE_RGB: [f32; 3] = [14.0, 14.0, 16.0];
const WALL_RGB: [f32; 3] = [34.0, 30.0, 28.0];
const FLOOR_RGB: [f32; 3] = [26.0, 22.0, 20.0];
const FURNITURE_RGB: [[f32; 3]; 2] = [[58.0, 42.0, 30.0], [52.0, 30.0, 34.0]];
const GLOW_RGB: [f32; 3] = [235.0, 100.0, 30.0];
const FLAME_EDGE_RGB: [f32; 3] = [255.0, 140.0, 30.0];
const FLAME_CORE_RGB: [f32; 3] = [255.0, 240.0, 200.0];
const FLOOR_LINE: f64 = 0.7;

fn frame_index(t_sec: f64) -> u64 {
    (t_sec * 1000.0).round() as u64
}

/// Thermal-camera palette image. With `jitter_seed`, every channel is offset by
/// a seeded amount in `[-JITTER, JITTER]` and clamped.
pub fn render_thermal(state: &SceneState, jitter_seed: Option<u64>) -> Image {
    let n = state.size;
    let mut rng =
        jitter_seed.map(|s| indexed_stream(s, "thermal-jitter", frame_index(state.t_sec)));
    let mut data = Vec::with_capacity(3 * n * n);
    for &t in &state.temperature {
        let anchor = Band::from_temperature(t as f64).anchor();
        for c in anchor {
            let offset = match rng.as_mut() {
                Some(r) => r.random_range(-JITTER..=JITTER),
                None => 0,
            };
            data.push((c as i32 + offset).clamp(0, 255) as u8);
        }
    }
    Image::new(n, n, data).expect("square frame")
}

impl Scenario {
    pub fn render_thermal(&self, state: &SceneState) -> Image {
        render_thermal(state, Some(self.params().seed))
    }

    /// Body-camera style frame: dark room, furniture, smoke veil, orange heat
    /// glow and flickering flames.
    pub fn render_visual(&self, state: &SceneState) -> Image {
        let n = state.size;
        let mut rng = indexed_stream(self.params().seed, "visual-noise", frame_index(state.t_sec));
        let mut data = Vec::with_capacity(3 * n * n);
        for y in 0..n {
            let v = (y as f64 + 0.5) / n as f64;
            for x in 0..n {
                let i = y * n + x;
                let t = state.temperature[i];
                let rgb = if state.flame[i] {
                    let core = ((t - 330.0) / 900.0).clamp(0.0, 1.0);
                    let flicker: f32 = rng.random_range(0.82..1.0);
                    let mut px = [0.0; 3];
                    for c in 0..3 {
                        px[c] = (FLAME_EDGE_RGB[c]
                            + (FLAME_CORE_RGB[c] - FLAME_EDGE_RGB[c]) * core)
                            * flicker;
                    }
                    px
                } else {
                    let base = match state.furniture.iter().position(|r| r.contains(x, y)) {
                        Some(k) => FURNITURE_RGB[k % FURNITURE_RGB.len()],
                        None if v >= FLOOR_LINE => FLOOR_RGB,
                        None => WALL_RGB,
                    };
                    let texture = 10.0 * (self.wall_texture[i] - 0.5);
                    let s = state.smoke[i];
                    let glow = ((t - 90.0) / 330.0).clamp(0.0, 1.0);
                    let mut px = [0.0; 3];
                    for c in 0..3 {
                        let lit = base[c] + texture;
                        let veiled = lit * (1.0 - s) + SMOKE_RGB[c] * s;
                        px[c] = veiled + GLOW_RGB[c] * glow + rng.random_range(-3.0..3.0);
                    }
                    px
                };
                data.extend(rgb.iter().map(|&c| c.round().clamp(0.0, 255.0) as u8));
            }
        }
        Image::new(n, n, data).expect("square frame")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::classify_pixel;
    use crate::sim::ScenarioParams;

    fn uniform(t: f32) -> SceneState {
        let sc = Scenario::new(ScenarioParams::default()).unwrap();
        let mut s = sc.initial_state();
        s.temperature.iter_mut().for_each(|v| *v = t);
        s
    }

    #[test]
    fn exact_palette_without_jitter() {
        for (t, rgb) in [
            (50.0, [0, 0, 255]),
            (100.0, [0, 255, 0]),
            (250.0, [255, 255, 0]),
            (350.0, [255, 0, 0]),
            (1500.0, [255, 0, 0]),
        ] {
            let img = render_thermal(&uniform(t), None);
            assert!(img.pixels().all(|p| p == rgb), "T={t}");
        }
    }

    #[test]
    fn jitter_keeps_bands_recoverable() {
        let sc = Scenario::new(ScenarioParams::default()).unwrap();
        for t in [0.0, 150.0, 199.0, 230.0] {
            let state = sc.state_at(t);
            let img = sc.render_thermal(&state);
            assert!(img
                .pixels()
                .any(|p| !Band::ALL.iter().any(|b| b.anchor() == p)));
            for (px, &temp) in img.pixels().zip(&state.temperature) {
                assert_eq!(
                    classify_pixel(px),
                    Some(Band::from_temperature(temp as f64))
                );
            }
        }
    }

    #[test]
    fn pre_fire_scene_is_dark() {
        let sc = Scenario::new(ScenarioParams::default()).unwrap();
        assert!(sc.render_visual(&sc.initial_state()).mean_luminance() < 80.0);
    }

    #[test]
    fn flames_are_warm_coloured() {
        let sc = Scenario::new(ScenarioParams::default()).unwrap();
        let state = sc.state_at(170.0);
        let img = sc.render_visual(&state);
        let mut seen = 0;
        for (px, &f) in img.pixels().zip(&state.flame) {
            if f {
                seen += 1;
                assert!(px[0] >= px[1] && px[1] >= px[2], "{px:?}");
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn thicker_smoke_darkens_the_scene() {
        let sc = Scenario::new(ScenarioParams::default()).unwrap();
        let thin = sc.state_at(120.0);
        let mut thick = thin.clone();
        thick
            .smoke
            .iter_mut()
            .zip(&thick.flame)
            .for_each(|(s, &f)| {
                if !f {
                    *s = (*s + 0.3).min(1.0)
                }
            });
        let lum = |state: &SceneState| {
            let img = sc.render_visual(state);
            let (sum, count) = img
                .pixels()
                .zip(&state.flame)
                .filter(|(_, &f)| !f)
                .fold((0.0, 0), |(s, c), (p, _)| {
                    (s + crate::image::luminance(p), c + 1)
                });
            sum / count as f64
        };
        assert!(lum(&thick) < lum(&thin));
    }
}
