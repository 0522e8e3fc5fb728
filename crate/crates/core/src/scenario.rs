//! World model: channels, secondary users, gains to the base station, and
//! seeded scenario generation.

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Distances below this (meters) are clamped so gains stay finite.
pub const MIN_DISTANCE_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub id: usize,
    /// Probability the primary user leaves the channel idle.
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryUser {
    pub id: usize,
    /// Meters, base station at the origin.
    pub position: [f64; 2],
    /// Channels this user has statistics for when acting alone.
    pub known_channels: Vec<usize>,
}

/// Per-user, per-channel gains to the base station.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainMatrix {
    pub g: Vec<Vec<f64>>,
    /// Rayleigh fading amplitudes with unit mean-square.
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysParams {
    /// Maximum transmit power, mW.
    pub p_max: f64,
    /// Noise variance, mW.
    pub noise: f64,
    /// Path-loss exponent.
    pub mu: f64,
    /// Slot fraction spent sensing one channel.
    pub alpha: f64,
    /// Side of the square deployment area, meters.
    pub area_side: f64,
    /// Use the fading power `a^2` instead of the amplitude `a` in the gain.
    #[serde(default)]
    pub fading_power_gain: bool,
}

impl Default for PhysParams {
    fn default() -> Self {
        Self {
            p_max: 10.0,
            noise: 1e-9,
            mu: 3.0,
            alpha: 0.05,
            area_side: 3000.0,
            fading_power_gain: false,
        }
    }
}

impl PhysParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0) {
            return Err(Error::config("p_max_mw", "must be > 0"));
        }
        if !(self.noise > 0.0) {
            return Err(Error::config("noise_mw", "must be > 0"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", "must lie in (0, 1)"));
        }
        if !(self.area_side > 0.0) {
            return Err(Error::config("area_m", "must be > 0"));
        }
        if !self.mu.is_finite() {
            return Err(Error::config("mu", "must be finite"));
        }
        Ok(())
    }

    /// `a * d^-mu` (or `a^2 * d^-mu`), with `d` clamped to [`MIN_DISTANCE_M`].
    pub fn gain(&self, amplitude: f64, distance: f64) -> f64 {
        let fading = if self.fading_power_gain {
            amplitude * amplitude
        } else {
            amplitude
        };
        fading * distance.max(MIN_DISTANCE_M).powf(-self.mu)
    }
}

/// Immutable world description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub channels: Vec<Channel>,
    pub sus: Vec<SecondaryUser>,
    pub gains: GainMatrix,
    pub phys: PhysParams,
    pub seed: u64,
}

impl Scenario {
    /// Assembles a scenario from explicit parts, computing gains from
    /// positions and fading amplitudes.
    pub fn from_parts(
        thetas: Vec<f64>,
        positions: Vec<[f64; 2]>,
        known_channels: Vec<Vec<usize>>,
        amplitudes: Vec<Vec<f64>>,
        phys: PhysParams,
        seed: u64,
    ) -> Result<Self> {
        if positions.len() != known_channels.len() || positions.len() != amplitudes.len() {
            return Err(Error::InvalidInput(
                "positions, known_channels and amplitudes disagree on the number of users".into(),
            ));
        }
        let channels = thetas
            .into_iter()
            .enumerate()
            .map(|(id, theta)| Channel { id, theta })
            .collect();
        let sus = positions
            .into_iter()
            .zip(known_channels)
            .enumerate()
            .map(|(id, (position, known_channels))| SecondaryUser {
                id,
                position,
                known_channels,
            })
            .collect();
        let mut scenario = Scenario {
            channels,
            sus,
            gains: GainMatrix {
                g: Vec::new(),
                a: amplitudes,
            },
            phys,
            seed,
        };
        scenario.recompute_gains();
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn n_sus(&self) -> usize {
        self.sus.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.theta).collect()
    }

    pub fn theta(&self, channel: usize) -> f64 {
        self.channels[channel].theta
    }

    /// Distance from the user to the base station, meters.
    pub fn distance(&self, su: usize) -> f64 {
        let [x, y] = self.sus[su].position;
        x.hypot(y)
    }

    pub fn channel_gain(&self, su: usize, channel: usize) -> f64 {
        self.gains.g[su][channel]
    }

    /// Recomputes `g` from the stored amplitudes and current positions.
    pub fn recompute_gains(&mut self) {
        let phys = self.phys;
        self.gains.g = self
            .gains
            .a
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let d = self.distance(i);
                row.iter().map(|&a| phys.gain(a, d)).collect()
            })
            .collect();
    }

    pub fn validate(&self) -> Result<()> {
        self.phys.validate()?;
        let n = self.sus.len();
        let k = self.channels.len();
        if n == 0 {
            return Err(Error::config("n_sus", "must be >= 1"));
        }
        if k == 0 {
            return Err(Error::config("n_channels", "must be >= 1"));
        }
        for (idx, ch) in self.channels.iter().enumerate() {
            if ch.id != idx || !(0.0..=1.0).contains(&ch.theta) {
                return Err(Error::InvalidInput(format!(
                    "channel {idx}: theta {} outside [0, 1] or id mismatch",
                    ch.theta
                )));
            }
        }
        let half = self.phys.area_side / 2.0;
        for (idx, su) in self.sus.iter().enumerate() {
            if su.id != idx {
                return Err(Error::InvalidInput(format!("user {idx}: id mismatch")));
            }
            if su.position.iter().any(|c| c.abs() > half) {
                return Err(Error::InvalidInput(format!(
                    "user {idx} lies outside the deployment square"
                )));
            }
            let mut seen = vec![false; k];
            for &c in &su.known_channels {
                if c >= k {
                    return Err(Error::InvalidInput(format!(
                        "user {idx} references unknown channel {c}"
                    )));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(Error::InvalidInput(format!(
                        "user {idx} lists channel {c} twice"
                    )));
                }
            }
        }
        let shape_ok = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == k);
        if !shape_ok(&self.gains.g) || !shape_ok(&self.gains.a) {
            return Err(Error::InvalidInput("gain matrix must be N x K".into()));
        }
        if self.gains.g.iter().flatten().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(Error::InvalidInput("gains must be finite and > 0".into()));
        }
        Ok(())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let scenario: Scenario = serde_json::from_str(&text)?;
        scenario.validate()?;
        Ok(scenario)
    }
}

/// Draws a random scenario: positions uniform over the square centered at the
/// base station, thetas i.i.d. uniform on [0, 1], unit mean-square Rayleigh
/// amplitudes, and a uniform random `k_i`-subset of channels per user.
pub fn generate_scenario(
    n_sus: usize,
    n_channels: usize,
    k_i: usize,
    phys: PhysParams,
    seed: u64,
) -> Result<Scenario> {
    generate_scenario_with_thetas(n_sus, n_channels, k_i, phys, seed, None)
}

/// Same as [`generate_scenario`], but with an explicit theta list when given.
pub fn generate_scenario_with_thetas(
    n_sus: usize,
    n_channels: usize,
    k_i: usize,
    phys: PhysParams,
    seed: u64,
    thetas: Option<&[f64]>,
) -> Result<Scenario> {
    if n_sus == 0 {
        return Err(Error::config("n_sus", "must be >= 1"));
    }
    if n_channels == 0 {
        return Err(Error::config("n_channels", "must be >= 1"));
    }
    if k_i == 0 || k_i > n_channels {
        return Err(Error::config(
            "k_i",
            format!("must lie in 1..={n_channels}, got {k_i}"),
        ));
    }
    phys.validate()?;

    let thetas = match thetas {
        Some(list) => {
            if list.len() != n_channels {
                return Err(Error::config(
                    "theta_list",
                    format!("expected {n_channels} entries, got {}", list.len()),
                ));
            }
            list.to_vec()
        }
        None => draw_thetas(seed, n_channels, 0),
    };

    let half = phys.area_side / 2.0;
    let mut pos_rng = rng::stream(seed, Stream::Positions);
    let positions = (0..n_sus)
        .map(|_| {
            [
                pos_rng.random_range(-half..=half),
                pos_rng.random_range(-half..=half),
            ]
        })
        .collect();

    let amplitudes = draw_amplitudes(&mut rng::stream(seed, Stream::Fading), n_sus, n_channels);

    let mut subset_rng = rng::stream(seed, Stream::Subsets);
    let known = (0..n_sus)
        .map(|_| index::sample(&mut subset_rng, n_channels, k_i).into_vec())
        .collect();

    Scenario::from_parts(thetas, positions, known, amplitudes, phys, seed)
}

/// Unit mean-square Rayleigh amplitudes: `a = sqrt(E)` with `E ~ Exp(1)`.
pub fn draw_amplitudes<R: Rng>(rng: &mut R, n_sus: usize, n_channels: usize) -> Vec<Vec<f64>> {
    (0..n_sus)
        .map(|_| {
            (0..n_channels)
                .map(|_| {
                    let e: f64 = Exp1.sample(rng);
                    // Exp(1) can return exactly 0; keep gains strictly positive.
                    e.max(f64::MIN_POSITIVE).sqrt()
                })
                .collect()
        })
        .collect()
}

/// Thetas i.i.d. uniform on [0, 1]; `epoch` 0 is the initial draw.
pub fn draw_thetas(seed: u64, n_channels: usize, epoch: u64) -> Vec<f64> {
    let mut rng = if epoch == 0 {
        rng::stream(seed, Stream::Thetas)
    } else {
        rng::epoch_stream(seed, Stream::Traffic, epoch)
    };
    (0..n_channels).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_phys() -> PhysParams {
        PhysParams {
            area_side: 5000.0,
            ..PhysParams::default()
        }
    }

    #[test]
    fn reference_sized_world() {
        let s = generate_scenario(9, 14, 3, PhysParams::default(), 7).unwrap();
        assert_eq!(s.n_sus(), 9);
        assert_eq!(s.n_channels(), 14);
        assert!(s.sus.iter().all(|su| su.known_channels.len() == 3));
    }

    #[test]
    fn minimal_world() {
        let s = generate_scenario(1, 1, 1, PhysParams::default(), 0).unwrap();
        assert_eq!(s.sus[0].known_channels, vec![0]);
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate_scenario(6, 10, 3, PhysParams::default(), 42).unwrap();
        let b = generate_scenario(6, 10, 3, PhysParams::default(), 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = generate_scenario(6, 10, 3, PhysParams::default(), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn explicit_thetas_leave_other_draws_alone() {
        let a = generate_scenario(4, 5, 2, PhysParams::default(), 3).unwrap();
        let b =
            generate_scenario_with_thetas(4, 5, 2, PhysParams::default(), 3, Some(&[0.5; 5]))
                .unwrap();
        assert_eq!(a.gains, b.gains);
        assert_eq!(a.sus, b.sus);
        assert!(b.channels.iter().all(|c| c.theta == 0.5));
    }

    #[test]
    fn k_i_above_k_is_rejected() {
        let err = generate_scenario(2, 3, 4, PhysParams::default(), 0).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { ref key, .. } if key == "k_i"));
    }

    #[test]
    fn gain_formula() {
        let phys = unit_phys();
        assert_eq!(phys.gain(1.0, 1.0), 1.0);
        assert!((phys.gain(2.0, 10.0) - 0.002).abs() < 1e-15);
        let power = PhysParams {
            fading_power_gain: true,
            ..phys
        };
        assert!((power.gain(2.0, 10.0) - 0.004).abs() < 1e-15);
    }

    #[test]
    fn stored_gain_matches_hand_recomputation_at_one_km() {
        let phys = unit_phys();
        let s = Scenario::from_parts(
            vec![0.5, 0.5],
            vec![[1000.0, 0.0]],
            vec![vec![0, 1]],
            vec![vec![0.73, 1.9]],
            phys,
            0,
        )
        .unwrap();
        assert!((s.channel_gain(0, 0) - 0.73e-9).abs() < 1e-22);
        assert!((s.channel_gain(0, 1) - 1.9e-9).abs() < 1e-22);

        let g = generate_scenario(3, 4, 2, phys, 11).unwrap();
        for i in 0..3 {
            let d = g.distance(i);
            for k in 0..4 {
                let expect = g.gains.a[i][k] * d.powf(-3.0);
                assert!((g.channel_gain(i, k) - expect).abs() <= 1e-15 * expect);
            }
        }
    }

    #[test]
    fn rayleigh_unit_mean_square() {
        let mut rng = rng::stream(99, Stream::Fading);
        let draws = draw_amplitudes(&mut rng, 1, 200_000);
        let ms = draws[0].iter().map(|a| a * a).sum::<f64>() / draws[0].len() as f64;
        assert!((ms - 1.0).abs() < 0.02, "mean square {ms}");
    }

    #[test]
    fn positions_inside_square() {
        let phys = PhysParams::default();
        let s = generate_scenario(200, 4, 2, phys, 5).unwrap();
        let half = phys.area_side / 2.0;
        assert!(s
            .sus
            .iter()
            .all(|su| su.position.iter().all(|c| c.abs() <= half)));
    }

    #[test]
    fn json_round_trip() {
        let s = generate_scenario(3, 5, 2, PhysParams::default(), 8).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.json");
        s.save_json(&path).unwrap();
        assert_eq!(Scenario::load_json(&path).unwrap(), s);
    }
}
