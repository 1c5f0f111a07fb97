//! Scenario geometry: BS, RIS, a straight road and the vehicles driving on it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Position3D) -> f64 {
        distance(self, other)
    }

    fn is_valid(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.z >= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: usize,
    pub position: Position3D,
    /// Meters per second along +x.
    pub speed: f64,
}

/// Fixed geometry of one scenario.
///
/// The RIS is a linear array along the road (x) axis facing the road, so
/// its broadside normal points along -y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioLayout {
    pub bs: Position3D,
    pub ris: Position3D,
    pub road_start_x: f64,
    pub road_end_x: f64,
    pub road_y: f64,
    pub vehicle_antenna_z: f64,
    pub num_vehicles: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    /// Vehicles keep their initial positions for the whole run.
    pub static_vehicles: bool,
}

impl Default for ScenarioLayout {
    fn default() -> Self {
        Self {
            bs: Position3D::new(0.0, 0.0, 25.0),
            ris: Position3D::new(250.0, 220.0, 25.0),
            road_start_x: 0.0,
            road_end_x: 500.0,
            road_y: 200.0,
            vehicle_antenna_z: 1.5,
            num_vehicles: 8,
            speed_min: 10.0,
            speed_max: 15.0,
            static_vehicles: false,
        }
    }
}

impl ScenarioLayout {
    pub fn validate(&self) -> Result<()> {
        if !(self.road_end_x > self.road_start_x) {
            return Err(invalid("road_end_x must exceed road_start_x"));
        }
        if self.num_vehicles == 0 {
            return Err(invalid("at least one vehicle is required"));
        }
        if !self.bs.is_valid() || !self.ris.is_valid() {
            return Err(invalid("BS and RIS positions must be finite with z >= 0"));
        }
        if !(self.vehicle_antenna_z >= 0.0) || !self.road_y.is_finite() {
            return Err(invalid("vehicle antenna height and road line must be finite"));
        }
        if !(self.speed_min >= 0.0 && self.speed_max >= self.speed_min) {
            return Err(invalid("speed range must satisfy 0 <= speed_min <= speed_max"));
        }
        Ok(())
    }

    pub fn road_length(&self) -> f64 {
        self.road_end_x - self.road_start_x
    }

    fn sample_speed<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.static_vehicles {
            0.0
        } else if self.speed_max > self.speed_min {
            rng.random_range(self.speed_min..=self.speed_max)
        } else {
            self.speed_min
        }
    }

    /// Places `num_vehicles` uniformly on the road with fresh speeds.
    pub fn spawn_vehicles<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<VehicleState> {
        (0..self.num_vehicles)
            .map(|id| {
                let x = rng.random_range(self.road_start_x..=self.road_end_x);
                VehicleState {
                    id,
                    position: Position3D::new(x, self.road_y, self.vehicle_antenna_z),
                    speed: self.sample_speed(rng),
                }
            })
            .collect()
    }
}

/// Constant-velocity motion along +x. A vehicle that leaves the road
/// re-enters at `road_start_x` with a newly drawn speed.
pub fn advance_vehicles<R: Rng + ?Sized>(
    states: &[VehicleState],
    dt: f64,
    layout: &ScenarioLayout,
    rng: &mut R,
) -> Result<Vec<VehicleState>> {
    if !(dt > 0.0) {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    Ok(states
        .iter()
        .map(|v| {
            let mut next = *v;
            next.position.x += v.speed * dt;
            if next.position.x > layout.road_end_x {
                next.position.x = layout.road_start_x;
                next.speed = layout.sample_speed(rng);
            }
            next
        })
        .collect())
}

pub fn distance(a: &Position3D, b: &Position3D) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Sine of the azimuth between the horizontal projection of `p -> ris` and
/// the RIS broadside normal (-y). Equals the x-offset over the horizontal
/// distance; a point straight above or below the RIS is treated as broadside.
pub fn sin_angle_to_ris(p: &Position3D, ris: &Position3D) -> Result<f64> {
    if p == ris {
        return Err(invalid("angle undefined for coincident points"));
    }
    let dx = p.x - ris.x;
    let dy = p.y - ris.y;
    let horizontal = dx.hypot(dy);
    if horizontal == 0.0 {
        return Ok(0.0);
    }
    Ok((dx / horizontal).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Domain, Stream};
    use proptest::prelude::*;

    fn layout() -> ScenarioLayout {
        ScenarioLayout::default()
    }

    #[test]
    fn constant_velocity_step() {
        let l = layout();
        let v = VehicleState { id: 0, position: Position3D::new(100.0, 200.0, 1.5), speed: 10.0 };
        let mut rng = stream_rng(0, Domain::Train, Stream::Mobility);
        let next = advance_vehicles(&[v], 0.1, &l, &mut rng).unwrap();
        assert!((next[0].position.x - 101.0).abs() < 1e-12);
    }

    #[test]
    fn vehicle_past_road_end_respawns_at_start() {
        let l = layout();
        let v = VehicleState {
            id: 3,
            position: Position3D::new(l.road_end_x - 0.5, 200.0, 1.5),
            speed: 10.0,
        };
        let mut rng = stream_rng(0, Domain::Train, Stream::Mobility);
        let next = advance_vehicles(&[v], 0.1, &l, &mut rng).unwrap();
        assert_eq!(next[0].position.x, l.road_start_x);
        assert_eq!(next[0].id, 3);
        assert!(next[0].speed >= l.speed_min && next[0].speed <= l.speed_max);
    }

    #[test]
    fn eight_vehicles_stay_on_road() {
        let l = layout();
        let mut rng = stream_rng(1, Domain::Train, Stream::Mobility);
        let mut vs = l.spawn_vehicles(&mut rng);
        for _ in 0..100 {
            vs = advance_vehicles(&vs, 0.1, &l, &mut rng).unwrap();
            assert_eq!(vs.len(), 8);
            for v in &vs {
                assert!(v.position.x >= l.road_start_x && v.position.x <= l.road_end_x);
            }
        }
    }

    #[test]
    fn non_positive_dt_rejected() {
        let l = layout();
        let mut rng = stream_rng(0, Domain::Train, Stream::Mobility);
        assert!(advance_vehicles(&[], 0.0, &l, &mut rng).is_err());
    }

    #[test]
    fn distances() {
        let o = Position3D::new(0.0, 0.0, 0.0);
        assert_eq!(distance(&o, &Position3D::new(3.0, 4.0, 0.0)), 5.0);
        assert_eq!(distance(&o, &o), 0.0);
        let d = distance(&Position3D::new(0.0, 0.0, 25.0), &Position3D::new(250.0, 220.0, 25.0));
        assert!((d - 333.016_516_106_003_4).abs() < 1e-9);
    }

    #[test]
    fn angles() {
        let ris = Position3D::new(250.0, 220.0, 25.0);
        let broadside = Position3D::new(250.0, 100.0, 1.5);
        assert_eq!(sin_angle_to_ris(&broadside, &ris).unwrap(), 0.0);
        let endfire = Position3D::new(400.0, 220.0, 25.0);
        assert_eq!(sin_angle_to_ris(&endfire, &ris).unwrap(), 1.0);
        let bs = Position3D::new(0.0, 0.0, 25.0);
        let s = sin_angle_to_ris(&bs, &ris).unwrap();
        assert!((s.abs() - 250.0 / 250f64.hypot(220.0)).abs() < 1e-12);
        assert!((s.abs() - 0.7507).abs() < 1e-4);
        assert!(sin_angle_to_ris(&ris, &ris).is_err());
    }

    fn pos() -> impl Strategy<Value = Position3D> {
        (-1e3..1e3f64, -1e3..1e3f64, 0.0..100f64).prop_map(|(x, y, z)| Position3D::new(x, y, z))
    }

    proptest! {
        #[test]
        fn distance_is_a_metric(a in pos(), b in pos(), c in pos()) {
            prop_assert_eq!(distance(&a, &b), distance(&b, &a));
            prop_assert!(distance(&a, &c) <= distance(&a, &b) + distance(&b, &c) + 1e-9);
        }

        #[test]
        fn sine_is_bounded(p in pos()) {
            let ris = Position3D::new(250.0, 220.0, 25.0);
            if p != ris {
                let s = sin_angle_to_ris(&p, &ris).unwrap();
                prop_assert!(s.abs() <= 1.0);
            }
        }
    }
}
