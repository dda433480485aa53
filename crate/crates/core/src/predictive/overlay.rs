//! Normalized-time comparison of two scenarios' thermocouple histories.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::forward_model::TCProfile;

/// Temperature (K) a profile must exceed before its overlay clock starts.
pub const OVERLAY_THRESHOLD: f64 = 290.0;

/// Surface history plus in-depth thermocouples for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioProfiles {
    pub name: String,
    pub surface: TCProfile,
    pub tcs: Vec<TCProfile>,
}

/// A profile on normalized time, or `None` when it never crossed the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayCurve {
    pub label: String,
    pub depth: f64,
    pub max_temperature: f64,
    pub crossing_time: Option<f64>,
    pub normalized_times: Option<Vec<f64>>,
    pub values: Option<Vec<f64>>,
}

impl OverlayCurve {
    pub fn applicable(&self) -> bool {
        self.normalized_times.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayPair {
    pub label: String,
    pub depth: f64,
    pub ground: OverlayCurve,
    pub flight: OverlayCurve,
    /// Flight max does not exceed ground max.
    pub within_envelope: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayReport {
    pub threshold: f64,
    pub ground_scenario: String,
    pub flight_scenario: String,
    pub ground_surface_duration: Option<f64>,
    pub flight_surface_duration: Option<f64>,
    pub pairs: Vec<OverlayPair>,
    pub verdict: bool,
    /// Labels of pairs where the flight maximum exceeds the ground maximum.
    pub violations: Vec<String>,
}

/// First up-crossing of `threshold`, linearly interpolated. A profile that
/// starts above the threshold crosses at its first time.
pub fn up_crossing(times: &[f64], values: &[f64], threshold: f64) -> Option<(usize, f64)> {
    let i = values.iter().position(|&v| v > threshold)?;
    if i == 0 {
        return Some((0, times[0]));
    }
    let (t0, t1, v0, v1) = (times[i - 1], times[i], values[i - 1], values[i]);
    Some((i, t0 + (threshold - v0) / (v1 - v0) * (t1 - t0)))
}

/// Span from the first up-crossing to the next down-crossing (or the end of
/// the record if the profile stays above).
pub fn time_above(times: &[f64], values: &[f64], threshold: f64) -> Option<f64> {
    let (i, t_up) = up_crossing(times, values, threshold)?;
    let t_down = match (i..values.len()).find(|&j| values[j] <= threshold) {
        Some(j) => {
            let (t0, t1, v0, v1) = (times[j - 1], times[j], values[j - 1], values[j]);
            t0 + (v0 - threshold) / (v0 - v1) * (t1 - t0)
        }
        None => *times.last().unwrap(),
    };
    Some(t_down - t_up)
}

fn curve(p: &TCProfile, threshold: f64, duration: Option<f64>) -> OverlayCurve {
    let max_temperature = p.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let crossing = up_crossing(&p.times, &p.values, threshold);
    let mut c = OverlayCurve {
        label: p.label.clone(),
        depth: p.depth,
        max_temperature,
        crossing_time: crossing.map(|(_, t)| t),
        normalized_times: None,
        values: None,
    };
    if let (Some((i, t_up)), Some(d)) = (crossing, duration.filter(|d| *d > 0.0)) {
        let mut times = vec![0.0];
        let mut values = vec![if i == 0 { p.values[0] } else { threshold }];
        for j in i..p.times.len() {
            let s = (p.times[j] - t_up) / d;
            if s > 0.0 {
                times.push(s);
                values.push(p.values[j]);
            }
        }
        c.normalized_times = Some(times);
        c.values = Some(values);
    }
    c
}

/// Shifts each profile to start at its threshold crossing and rescales time by
/// the scenario's surface time-above-threshold. The verdict holds when every
/// flight maximum (surface and each thermocouple, paired by position) stays at
/// or below the matching ground maximum.
pub fn normalized_overlay(ground: &ScenarioProfiles, flight: &ScenarioProfiles, threshold: f64) -> Result<OverlayReport> {
    ensure!(
        ground.tcs.len() == flight.tcs.len(),
        "scenarios have {} and {} thermocouples",
        ground.tcs.len(),
        flight.tcs.len()
    );
    for p in std::iter::once(&ground.surface).chain(&ground.tcs).chain(std::iter::once(&flight.surface)).chain(&flight.tcs) {
        ensure!(!p.times.is_empty() && p.times.len() == p.values.len(), "profile '{}' is empty or ragged", p.label);
    }
    let dg = time_above(&ground.surface.times, &ground.surface.values, threshold);
    let df = time_above(&flight.surface.times, &flight.surface.values, threshold);

    let mut pairs = Vec::with_capacity(ground.tcs.len() + 1);
    let mut push = |label: String, g: &TCProfile, f: &TCProfile| {
        let gc = curve(g, threshold, dg);
        let fc = curve(f, threshold, df);
        pairs.push(OverlayPair {
            label,
            depth: g.depth,
            within_envelope: fc.max_temperature <= gc.max_temperature,
            ground: gc,
            flight: fc,
        });
    };
    push("surface".into(), &ground.surface, &flight.surface);
    for (g, f) in ground.tcs.iter().zip(&flight.tcs) {
        push(g.label.clone(), g, f);
    }
    let violations: Vec<String> = pairs.iter().filter(|p| !p.within_envelope).map(|p| p.label.clone()).collect();
    Ok(OverlayReport {
        threshold,
        ground_scenario: ground.name.clone(),
        flight_scenario: flight.name.clone(),
        ground_surface_duration: dg,
        flight_surface_duration: df,
        verdict: violations.is_empty(),
        violations,
        pairs,
    })
}

impl OverlayReport {
    /// Long table `scenario,label,depth,normalized_time,temperature`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "scenario,label,depth,normalized_time,temperature")?;
        for (name, pick) in [
            (&self.ground_scenario, (|p: &OverlayPair| &p.ground) as fn(&OverlayPair) -> &OverlayCurve),
            (&self.flight_scenario, |p: &OverlayPair| &p.flight),
        ] {
            for pair in &self.pairs {
                let c = pick(pair);
                if let (Some(ts), Some(vs)) = (&c.normalized_times, &c.values) {
                    for (t, v) in ts.iter().zip(vs) {
                        writeln!(out, "{name},{},{},{t},{v}", c.label, c.depth)?;
                    }
                }
            }
        }
        Ok(())
    }
}
