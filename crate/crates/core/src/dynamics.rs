//! Time-evolving runs: PU traffic re-draws, random-walk mobility and periodic
//! re-formation.
//!
//! The initial formation happens at t = 0 from the all-singleton partition.
//! At every boundary `t = k * eta < duration` the world is updated (move,
//! maybe re-draw traffic, recompute gains), histories are cleared and the
//! formation is resumed from the current partition.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formation::{form_with_rng, FormationConfig};
use crate::partition::{Coalition, Partition};
use crate::rng::{self, Stream};
use crate::scenario::{draw_amplitudes, draw_thetas, Scenario};
use crate::valuation::Evaluator;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams {
    pub eta_seconds: f64,
    pub duration_seconds: f64,
    pub speed_kmh: f64,
    /// Period of theta re-draws; 0 disables them.
    pub traffic_redraw_seconds: f64,
    pub freeze_fading: bool,
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            eta_seconds: 30.0,
            duration_seconds: 150.0,
            speed_kmh: 0.0,
            traffic_redraw_seconds: 0.0,
            freeze_fading: true,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_seconds > 0.0 && self.eta_seconds.is_finite()) {
            return Err(Error::config("eta_seconds", "must be > 0"));
        }
        if !(self.duration_seconds >= self.eta_seconds && self.duration_seconds.is_finite()) {
            return Err(Error::config("duration_seconds", "must be >= eta_seconds"));
        }
        if !(self.speed_kmh >= 0.0 && self.speed_kmh.is_finite()) {
            return Err(Error::config("speed_kmh", "must be >= 0"));
        }
        if !(self.traffic_redraw_seconds >= 0.0 && self.traffic_redraw_seconds.is_finite()) {
            return Err(Error::config("traffic_redraw_seconds", "must be >= 0"));
        }
        Ok(())
    }

    /// Re-formation times after the initial one.
    pub fn boundaries(&self) -> Vec<f64> {
        (1..)
            .map(|k| k as f64 * self.eta_seconds)
            .take_while(|&t| t < self.duration_seconds - 1e-9)
            .collect()
    }

    fn traffic_epoch(&self, t: f64) -> u64 {
        if self.traffic_redraw_seconds > 0.0 {
            ((t + 1e-9) / self.traffic_redraw_seconds).floor() as u64
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Birth,
    Death,
}

/// A coalition (two or more users) appearing or disappearing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoalitionEvent {
    pub time_s: f64,
    pub kind: EventKind,
    pub coalition: Coalition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub time_s: f64,
    pub traffic_redrawn: bool,
    pub switches: usize,
    pub passes: usize,
    pub partition: Partition,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// Switches per epoch; entry 0 is the initial formation.
    pub switch_counts: Vec<usize>,
    pub events: Vec<CoalitionEvent>,
    /// One sample per coalition; those alive at the end are closed at the
    /// run's duration.
    pub lifespans: Vec<f64>,
    pub duration_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsRun {
    pub params: DynamicsParams,
    pub epochs: Vec<EpochRecord>,
    pub metrics: EpochMetrics,
    /// Positions at the end of the run.
    pub final_positions: Vec<[f64; 2]>,
}

impl DynamicsRun {
    /// One JSON object per epoch.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.epochs {
            let events: Vec<_> = self
                .metrics
                .events
                .iter()
                .filter(|e| (e.time_s - rec.time_s).abs() < 1e-9)
                .collect();
            let line = serde_json::json!({
                "epoch": rec.epoch,
                "time_s": rec.time_s,
                "partition": rec.partition.fingerprint(),
                "switches": rec.switches,
                "traffic_redrawn": rec.traffic_redrawn,
                "events": events,
            });
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Moves `x` by `step` inside `[-half, half]`, bouncing off the walls.
pub fn reflect(x: f64, step: f64, half: f64) -> f64 {
    let width = 2.0 * half;
    // Unfold onto a circle of length 2 * width, then fold back.
    let mut y = (x + step + half).rem_euclid(2.0 * width);
    if y > width {
        y = 2.0 * width - y;
    }
    (y - half).clamp(-half, half)
}

fn headings(seed: u64, epoch: u64, n: usize) -> Vec<f64> {
    let mut rng = rng::epoch_stream(seed, Stream::Headings, epoch);
    (0..n).map(|_| rng.random::<f64>() * TAU).collect()
}

/// Size-two-or-more coalitions alive since some time.
#[derive(Default)]
struct Lifespans {
    alive: BTreeMap<Coalition, f64>,
    metrics: EpochMetrics,
}

impl Lifespans {
    fn observe(&mut self, partition: &Partition, t: f64) {
        let now: Vec<&Coalition> = partition.coalitions().iter().filter(|c| c.len() > 1).collect();
        let ended: Vec<Coalition> = self
            .alive
            .keys()
            .filter(|c| !now.contains(c))
            .cloned()
            .collect();
        for c in ended {
            let born = self.alive.remove(&c).expect("alive");
            self.metrics.lifespans.push(t - born);
            self.metrics.events.push(CoalitionEvent {
                time_s: t,
                kind: EventKind::Death,
                coalition: c,
            });
        }
        for c in now {
            if !self.alive.contains_key(c) {
                self.alive.insert(c.clone(), t);
                self.metrics.events.push(CoalitionEvent {
                    time_s: t,
                    kind: EventKind::Birth,
                    coalition: c.clone(),
                });
            }
        }
    }

    fn finish(mut self, end: f64) -> EpochMetrics {
        for (_, born) in std::mem::take(&mut self.alive) {
            self.metrics.lifespans.push(end - born);
        }
        self.metrics.duration_seconds = end;
        self.metrics
    }
}

/// Runs the initial formation and every re-formation of `params`.
pub fn run_dynamics(
    scenario: &Scenario,
    params: &DynamicsParams,
    seed: u64,
    cfg: &FormationConfig,
) -> Result<DynamicsRun> {
    params.validate()?;
    let n = scenario.n_sus();
    let k = scenario.n_channels();
    let half = scenario.phys.area_side / 2.0;
    let step = params.speed_kmh / 3.6 * params.eta_seconds;

    let mut world = scenario.clone();
    let mut epochs = Vec::new();
    let mut life = Lifespans::default();

    let trace = {
        let ev = Evaluator::new(&world, cfg.valuation.clone());
        let mut rng = rng::stream(seed, Stream::Formation);
        form_with_rng(&ev, &Partition::singletons(n), &mut rng, cfg)?
    };
    let mut partition = trace.final_partition;
    life.observe(&partition, 0.0);
    life.metrics.switch_counts.push(trace.switches.len());
    epochs.push(EpochRecord {
        epoch: 0,
        time_s: 0.0,
        traffic_redrawn: false,
        switches: trace.switches.len(),
        passes: trace.passes,
        partition: partition.clone(),
    });

    let mut heading = headings(seed, 0, n);
    let mut traffic_epoch = 0;
    for (idx, t) in params.boundaries().into_iter().enumerate() {
        let epoch = idx + 1;
        if step > 0.0 {
            for (su, h) in world.sus.iter_mut().zip(&heading) {
                let [x, y] = su.position;
                su.position = [reflect(x, step * h.cos(), half), reflect(y, step * h.sin(), half)];
            }
            heading = headings(seed, epoch as u64, n);
        }
        let te = params.traffic_epoch(t);
        let traffic_redrawn = te != traffic_epoch;
        if traffic_redrawn {
            traffic_epoch = te;
            for (c, theta) in world.channels.iter_mut().zip(draw_thetas(seed, k, te)) {
                c.theta = theta;
            }
        }
        if !params.freeze_fading {
            let mut rng = rng::epoch_stream(seed, Stream::Refading, epoch as u64);
            world.gains.a = draw_amplitudes(&mut rng, n, k);
        }
        world.recompute_gains();

        let ev = Evaluator::new(&world, cfg.valuation.clone());
        let mut rng = rng::epoch_stream(seed, Stream::Formation, epoch as u64);
        let trace = form_with_rng(&ev, &partition, &mut rng, cfg)?;
        partition = trace.final_partition;
        life.observe(&partition, t);
        life.metrics.switch_counts.push(trace.switches.len());
        epochs.push(EpochRecord {
            epoch,
            time_s: t,
            traffic_redrawn,
            switches: trace.switches.len(),
            passes: trace.passes,
            partition: partition.clone(),
        });
    }

    Ok(DynamicsRun {
        params: *params,
        epochs,
        metrics: life.finish(params.duration_seconds),
        final_positions: world.sus.iter().map(|s| s.position).collect(),
    })
}

/// Mean coalition lifespan in seconds; `None` when no coalition ever formed.
pub fn lifespan_stats(metrics: &EpochMetrics) -> Option<f64> {
    let n = metrics.lifespans.len();
    (n > 0).then(|| metrics.lifespans.iter().sum::<f64>() / n as f64)
}

/// Switches per minute after the initial formation.
pub fn switch_frequency(metrics: &EpochMetrics) -> f64 {
    let later: usize = metrics.switch_counts.iter().skip(1).sum();
    later as f64 / (metrics.duration_seconds / 60.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, PhysParams};
    use proptest::prelude::*;

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(0.0, 3.0, 10.0), 3.0);
        assert!((reflect(8.0, 5.0, 10.0) - 7.0).abs() < 1e-12);
        assert!((reflect(-8.0, -5.0, 10.0) + 7.0).abs() < 1e-12);
        // Once across and back: 0 + 40 on a width-20 box is a full round trip.
        assert!((reflect(0.0, 40.0, 10.0)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn reflection_stays_inside(x in -500.0..500.0f64, step in -1e5..1e5f64) {
            let y = reflect(x, step, 500.0);
            prop_assert!((-500.0..=500.0).contains(&y));
        }
    }

    #[test]
    fn boundaries_exclude_the_end() {
        let p = DynamicsParams {
            eta_seconds: 30.0,
            duration_seconds: 150.0,
            ..DynamicsParams::default()
        };
        assert_eq!(p.boundaries(), vec![30.0, 60.0, 90.0, 120.0]);
        let p = DynamicsParams {
            eta_seconds: 60.0,
            duration_seconds: 60.0,
            ..DynamicsParams::default()
        };
        assert!(p.boundaries().is_empty());
    }

    #[test]
    fn rejects_bad_params() {
        let bad = DynamicsParams {
            eta_seconds: 0.0,
            ..DynamicsParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = DynamicsParams {
            eta_seconds: 30.0,
            duration_seconds: 10.0,
            ..DynamicsParams::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn lifespans_close_at_end() {
        let mut life = Lifespans::default();
        let a = Partition::from_labels(&[0, 0, 1, 2]);
        let b = Partition::from_labels(&[0, 0, 1, 1]);
        let c = Partition::from_labels(&[0, 1, 1, 1]);
        life.observe(&a, 0.0);
        life.observe(&b, 30.0);
        life.observe(&c, 60.0);
        let m = life.finish(90.0);
        let mut spans = m.lifespans.clone();
        spans.sort_by(f64::total_cmp);
        // {0,1}: 0..60, {2,3}: 30..60, {1,2,3}: 60..90.
        assert_eq!(spans, vec![30.0, 30.0, 60.0]);
        assert_eq!(m.events.len(), 5);
        assert!(lifespan_stats(&EpochMetrics::default()).is_none());
    }

    #[test]
    fn moving_users_stay_in_area() {
        let phys = PhysParams {
            area_side: 1000.0,
            ..PhysParams::default()
        };
        let s = generate_scenario(5, 8, 3, phys, 4).unwrap();
        let p = DynamicsParams {
            speed_kmh: 72.0,
            duration_seconds: 120.0,
            ..DynamicsParams::default()
        };
        let run = run_dynamics(&s, &p, 4, &FormationConfig::default()).unwrap();
        assert_eq!(run.epochs.len(), 4);
        for pos in &run.final_positions {
            assert!(pos.iter().all(|c| c.abs() <= 500.0));
        }
        assert_ne!(run.final_positions[0], s.sus[0].position);
        assert!(run.metrics.lifespans.iter().all(|&l| l <= 120.0));
    }

    #[test]
    fn traffic_redraws_follow_period() {
        let s = generate_scenario(3, 6, 2, PhysParams::default(), 9).unwrap();
        let p = DynamicsParams {
            eta_seconds: 30.0,
            duration_seconds: 180.0,
            traffic_redraw_seconds: 60.0,
            ..DynamicsParams::default()
        };
        let run = run_dynamics(&s, &p, 9, &FormationConfig::default()).unwrap();
        let flags: Vec<bool> = run.epochs.iter().map(|e| e.traffic_redrawn).collect();
        assert_eq!(flags, vec![false, false, true, false, true, false]);
    }
}
