use serde::{Deserialize, Serialize};

use super::AnalyticsError;
use crate::image::Image;

/// Pixels whose brightest channel is below this value count as background.
pub const BACKGROUND_FLOOR: u8 = 32;

/// Temperature bands of the thermal palette, hottest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Red,
    Yellow,
    Green,
    Blue,
}

impl Band {
    /// Hottest to coldest; also the tie-break order.
    pub const ALL: [Band; 4] = [Band::Red, Band::Yellow, Band::Green, Band::Blue];

    pub fn anchor(self) -> [u8; 3] {
        match self {
            Band::Red => [255, 0, 0],
            Band::Yellow => [255, 255, 0],
            Band::Green => [0, 255, 0],
            Band::Blue => [0, 0, 255],
        }
    }

    /// Half-open `[lo, hi)` in °F; red is closed at 500 and absorbs everything above.
    pub fn range_f(self) -> (f64, f64) {
        match self {
            Band::Blue => (0.0, 100.0),
            Band::Green => (100.0, 200.0),
            Band::Yellow => (200.0, 300.0),
            Band::Red => (300.0, 500.0),
        }
    }

    pub fn from_temperature(t_f: f64) -> Band {
        if t_f >= 300.0 {
            Band::Red
        } else if t_f >= 200.0 {
            Band::Yellow
        } else if t_f >= 100.0 {
            Band::Green
        } else {
            Band::Blue
        }
    }

    pub fn is_hot(self) -> bool {
        matches!(self, Band::Red | Band::Yellow)
    }
}

/// How frames are reduced to band counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountMode {
    /// Label each pixel with its nearest palette anchor.
    #[default]
    NearestAnchor,
    /// Sum normalised channel intensities; yellow is the mean of red and green.
    ChannelSum,
}

impl std::str::FromStr for CountMode {
    type Err = AnalyticsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest_anchor" => Ok(CountMode::NearestAnchor),
            "channel_sum" => Ok(CountMode::ChannelSum),
            other => Err(AnalyticsError::Config(format!(
                "unknown count mode {other:?} (expected nearest_anchor or channel_sum)"
            ))),
        }
    }
}

fn squared_distance(a: [u8; 3], b: [u8; 3]) -> u32 {
    a.iter()
        .zip(&b)
        .map(|(&x, &y)| {
            let d = x as i32 - y as i32;
            (d * d) as u32
        })
        .sum()
}

/// Nearest-anchor label of one pixel, or `None` for background.
pub fn classify_pixel(rgb: [u8; 3]) -> Option<Band> {
    if rgb.iter().copied().max().unwrap_or(0) < BACKGROUND_FLOOR {
        return None;
    }
    let mut best = Band::Red;
    let mut best_d = squared_distance(rgb, Band::Red.anchor());
    for band in &Band::ALL[1..] {
        let d = squared_distance(rgb, band.anchor());
        if d < best_d {
            best = *band;
            best_d = d;
        }
    }
    Some(best)
}

/// Exact channel-intensity masses behind a `ChannelSum` count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelMass {
    pub red: f64,
    pub yellow: f64,
    pub green: f64,
    pub blue: f64,
}

/// Pixel tallies per band for one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandCounts {
    pub red: u64,
    pub yellow: u64,
    pub green: u64,
    pub blue: u64,
    pub background: u64,
    pub total: u64,
    /// Present for channel-sum counts; the integer fields are its rounding.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mass: Option<ChannelMass>,
}

impl BandCounts {
    pub fn zero(total: u64) -> Self {
        Self {
            red: 0,
            yellow: 0,
            green: 0,
            blue: 0,
            background: 0,
            total,
            mass: None,
        }
    }

    pub fn get(&self, band: Band) -> u64 {
        match band {
            Band::Red => self.red,
            Band::Yellow => self.yellow,
            Band::Green => self.green,
            Band::Blue => self.blue,
        }
    }

    pub fn add(&mut self, class: Option<Band>) {
        match class {
            Some(Band::Red) => self.red += 1,
            Some(Band::Yellow) => self.yellow += 1,
            Some(Band::Green) => self.green += 1,
            Some(Band::Blue) => self.blue += 1,
            None => self.background += 1,
        }
    }

    pub fn band_sum(&self) -> u64 {
        self.red + self.yellow + self.green + self.blue
    }

    /// Every pixel is accounted for exactly once (pixel-label counts only).
    pub fn is_conserved(&self) -> bool {
        self.band_sum() + self.background == self.total
    }

    /// Share of classified pixels in the red and yellow bands.
    pub fn hot_fraction(&self) -> Result<f64, AnalyticsError> {
        let (hot, classified) = match self.mass {
            Some(m) => (m.red + m.yellow, m.red + m.yellow + m.green + m.blue),
            None => ((self.red + self.yellow) as f64, self.band_sum() as f64),
        };
        if classified <= 0.0 {
            return Err(AnalyticsError::UndefinedFraction);
        }
        Ok(hot / classified)
    }
}

pub fn hot_fraction(counts: &BandCounts) -> Result<f64, AnalyticsError> {
    counts.hot_fraction()
}

pub fn count_bands(image: &Image, mode: CountMode) -> BandCounts {
    let total = image.pixel_count() as u64;
    match mode {
        CountMode::NearestAnchor => {
            let mut counts = BandCounts::zero(total);
            for px in image.pixels() {
                counts.add(classify_pixel(px));
            }
            counts
        }
        CountMode::ChannelSum => {
            let (mut r, mut g, mut b) = (0.0f64, 0.0f64, 0.0f64);
            for px in image.pixels() {
                r += px[0] as f64 / 255.0;
                g += px[1] as f64 / 255.0;
                b += px[2] as f64 / 255.0;
            }
            let mass = ChannelMass {
                red: r,
                yellow: (r + g) / 2.0,
                green: g,
                blue: b,
            };
            BandCounts {
                red: mass.red.round() as u64,
                yellow: mass.yellow.round() as u64,
                green: mass.green.round() as u64,
                blue: mass.blue.round() as u64,
                background: 0,
                total,
                mass: Some(mass),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors_classify_to_themselves() {
        for band in Band::ALL {
            assert_eq!(classify_pixel(band.anchor()), Some(band));
        }
    }

    #[test]
    fn dull_orange_is_yellow() {
        assert_eq!(
            squared_distance([200, 180, 40], Band::Yellow.anchor()),
            10250
        );
        assert_eq!(classify_pixel([200, 180, 40]), Some(Band::Yellow));
    }

    #[test]
    fn dark_pixels_are_background() {
        assert_eq!(classify_pixel([10, 10, 10]), None);
        assert_eq!(classify_pixel([31, 0, 31]), None);
        assert!(classify_pixel([32, 0, 0]).is_some());
    }

    #[test]
    fn ties_go_to_the_hotter_band() {
        // Equidistant from red (255,0,0) and yellow (255,255,0).
        let px = [255, 127, 0];
        let dr = squared_distance(px, Band::Red.anchor());
        let dy = squared_distance(px, Band::Yellow.anchor());
        assert_ne!(dr, dy);
        // Equidistant from green and blue: (0, 128, 128) - both at 127^2 + 128^2.
        let px = [0, 128, 128];
        assert_eq!(
            squared_distance(px, Band::Green.anchor()),
            squared_distance(px, Band::Blue.anchor())
        );
        assert_eq!(classify_pixel(px), Some(Band::Green));
    }

    #[test]
    fn one_pixel_per_anchor() {
        let mut img = Image::filled(2, 2, [0, 0, 0]);
        for (i, band) in Band::ALL.iter().enumerate() {
            img.set_pixel(i % 2, i / 2, band.anchor());
        }
        let c = count_bands(&img, CountMode::NearestAnchor);
        assert_eq!((c.red, c.yellow, c.green, c.blue), (1, 1, 1, 1));
        assert_eq!((c.background, c.total), (0, 4));
        assert!((c.hot_fraction().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn black_frame_is_all_background() {
        let img = Image::filled(8, 8, [0, 0, 0]);
        let c = count_bands(&img, CountMode::NearestAnchor);
        assert_eq!(c.background, 64);
        assert!(matches!(
            c.hot_fraction(),
            Err(AnalyticsError::UndefinedFraction)
        ));
    }

    #[test]
    fn hot_fraction_arithmetic() {
        let c = BandCounts {
            red: 10,
            yellow: 20,
            green: 30,
            blue: 40,
            background: 0,
            total: 100,
            mass: None,
        };
        assert!((c.hot_fraction().unwrap() - 0.3).abs() < 1e-12);
        let all_red = BandCounts {
            red: 9,
            ..BandCounts::zero(9)
        };
        assert_eq!(all_red.hot_fraction().unwrap(), 1.0);
    }

    #[test]
    fn channel_sum_uses_mean_of_red_and_green_for_yellow() {
        let mut img = Image::filled(2, 1, [255, 0, 0]);
        img.set_pixel(1, 0, [0, 255, 255]);
        let c = count_bands(&img, CountMode::ChannelSum);
        let m = c.mass.unwrap();
        assert_eq!((m.red, m.green, m.blue, m.yellow), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(c.background, 0);
        assert!((c.hot_fraction().unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn band_boundaries_are_half_open() {
        assert_eq!(Band::from_temperature(99.999), Band::Blue);
        assert_eq!(Band::from_temperature(100.0), Band::Green);
        assert_eq!(Band::from_temperature(200.0), Band::Yellow);
        assert_eq!(Band::from_temperature(300.0), Band::Red);
        assert_eq!(Band::from_temperature(1200.0), Band::Red);
    }
}
