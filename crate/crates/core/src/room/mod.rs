//! Shoebox classroom geometry and multichannel room impulse responses.

mod decay;
mod ism;

use serde::{Deserialize, Serialize};

pub use decay::{estimate_t60, schroeder_curve_db};
pub use ism::{image_sources, simulate_rir, ImageSource, MultiChannelRir, RirOptions};

use crate::error::{Error, Result};
use crate::signal::Rng;

/// Reverberation times a classroom may be assigned, in seconds.
pub const T60_VALUES: [f64; 6] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
pub const HORIZONTAL_RANGE: (f64, f64) = (8.5, 10.0);
pub const HEIGHT_RANGE: (f64, f64) = (3.0, 3.5);
/// Seated-child ear height, used for listener and talkers alike.
pub const EAR_HEIGHT: f64 = 1.2;
/// Minimum listener clearance from any wall.
pub const WALL_CLEARANCE: f64 = 1.0;
pub const RING_RADII: [f64; 3] = [1.0, 1.5, 2.0];
pub const RING_DIRECTIONS: usize = 72;
pub const RING_STEP_DEG: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 { x: 0.0, y: 0.0, z: 0.0 };

    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }

    pub fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }

    pub fn dot(self, o: Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn distance(self, o: Point3) -> f64 {
        self.sub(o).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub room_id: u32,
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub t60: f64,
}

impl RoomSpec {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = HORIZONTAL_RANGE;
        for (name, v) in [("length", self.length), ("width", self.width)] {
            if !(lo..=hi).contains(&v) {
                return Err(Error::config(name, format!("{v} m outside [{lo}, {hi}] m")));
            }
        }
        let (lo, hi) = HEIGHT_RANGE;
        if !(lo..=hi).contains(&self.height) {
            return Err(Error::config(
                "height",
                format!("{} m outside [{lo}, {hi}] m", self.height),
            ));
        }
        if !T60_VALUES.iter().any(|t| (t - self.t60).abs() < 1e-9) {
            return Err(Error::config(
                "t60",
                format!("{} s is not one of {T60_VALUES:?}", self.t60),
            ));
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.length * self.width * self.height
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.length * self.width + self.length * self.height + self.width * self.height)
    }

    pub fn dimensions(&self) -> [f64; 3] {
        [self.length, self.width, self.height]
    }

    /// True when `p` lies strictly inside the room.
    pub fn contains(&self, p: Point3) -> bool {
        p.x > 0.0
            && p.x < self.length
            && p.y > 0.0
            && p.y < self.width
            && p.z > 0.0
            && p.z < self.height
    }
}

pub fn sample_room(room_id: u32, rng: &mut Rng) -> RoomSpec {
    let (lo, hi) = HORIZONTAL_RANGE;
    let length = rng.uniform(lo, hi);
    let width = rng.uniform(lo, hi);
    let height = rng.uniform(HEIGHT_RANGE.0, HEIGHT_RANGE.1);
    let t60 = T60_VALUES[rng.index(T60_VALUES.len())];
    RoomSpec {
        room_id,
        length,
        width,
        height,
        t60,
    }
}

/// Integer-metre grid coordinates along one dimension that keep the
/// required clearance from both walls.
fn grid_axis(extent: f64) -> Vec<f64> {
    let first = WALL_CLEARANCE.ceil() as i64;
    let last = (extent - WALL_CLEARANCE).floor() as i64;
    (first..=last).map(|v| v as f64).collect()
}

/// Every admissible listener position in the room.
pub fn listener_grid(room: &RoomSpec) -> Vec<Point3> {
    let xs = grid_axis(room.length);
    let ys = grid_axis(room.width);
    xs.iter()
        .flat_map(|&x| ys.iter().map(move |&y| Point3::new(x, y, EAR_HEIGHT)))
        .collect()
}

pub fn sample_listener_position(room: &RoomSpec, rng: &mut Rng) -> Result<Point3> {
    let grid = listener_grid(room);
    if grid.is_empty() {
        return Err(Error::config(
            "room",
            format!(
                "{:.2} x {:.2} m leaves no grid point {WALL_CLEARANCE} m from the walls",
                room.length, room.width
            ),
        ));
    }
    Ok(grid[rng.index(grid.len())])
}

/// Sabine absorption coefficient, uniform over all six surfaces.
pub fn t60_to_absorption(room: &RoomSpec) -> Result<f64> {
    if !(room.t60 > 0.0) {
        return Err(Error::invalid(format!("t60 must be positive, got {}", room.t60)));
    }
    let a = 0.161 * room.volume() / (room.surface_area() * room.t60);
    if a >= 1.0 {
        return Err(Error::InfeasibleRoom { absorption: a });
    }
    Ok(a)
}

/// Seven-capsule array: one capsule at the centre and three orthogonal
/// pairs on a 5 cm radius.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MicArray {
    pub capsules: Vec<Point3>,
}

impl MicArray {
    pub const RADIUS: f64 = 0.05;

    pub fn orthogonal_triad() -> Self {
        let r = Self::RADIUS;
        Self {
            capsules: vec![
                Point3::ORIGIN,
                Point3::new(r, 0.0, 0.0),
                Point3::new(-r, 0.0, 0.0),
                Point3::new(0.0, r, 0.0),
                Point3::new(0.0, -r, 0.0),
                Point3::new(0.0, 0.0, r),
                Point3::new(0.0, 0.0, -r),
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.capsules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.capsules.is_empty()
    }

    /// Largest possible inter-capsule delay relative to the centre, seconds.
    pub fn max_tdoa(&self) -> f64 {
        self.capsules.iter().map(|c| c.norm()).fold(0.0, f64::max) / crate::signal::SPEED_OF_SOUND
    }
}

impl Default for MicArray {
    fn default() -> Self {
        Self::orthogonal_triad()
    }
}

/// One talker location on a listener-centred ring.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingPosition {
    /// Counter-clockwise from the listener's front (+x), 0..355.
    pub azimuth_deg: f64,
    pub position: Point3,
    /// Set when the position falls outside the room.
    pub outside_room: bool,
}

/// Signed azimuth in (-180, 180] for a ring angle in [0, 360).
pub fn signed_azimuth(ring_deg: f64) -> f64 {
    if ring_deg > 180.0 {
        ring_deg - 360.0
    } else {
        ring_deg
    }
}

pub fn talker_ring_positions(room: &RoomSpec, listener: Point3, radius: f64) -> Result<Vec<RingPosition>> {
    if !RING_RADII.iter().any(|r| (r - radius).abs() < 1e-9) {
        return Err(Error::config(
            "distance",
            format!("{radius} m is not one of {RING_RADII:?}"),
        ));
    }
    Ok((0..RING_DIRECTIONS)
        .map(|i| {
            let azimuth_deg = i as f64 * RING_STEP_DEG;
            let th = azimuth_deg.to_radians();
            let position = Point3::new(
                listener.x + radius * th.cos(),
                listener.y + radius * th.sin(),
                listener.z,
            );
            RingPosition {
                azimuth_deg,
                position,
                outside_room: !room.contains(position),
            }
        })
        .collect())
}

/// Draws listener positions until every ring of the given radii fits inside
/// the room.
pub fn sample_listener_for_rings(room: &RoomSpec, radii: &[f64], rng: &mut Rng) -> Result<Point3> {
    let fits = |p: Point3| {
        radii.iter().all(|&r| {
            talker_ring_positions(room, p, r)
                .map(|ring| ring.iter().all(|q| !q.outside_room))
                .unwrap_or(false)
        })
    };
    let admissible: Vec<Point3> = listener_grid(room).into_iter().filter(|&p| fits(p)).collect();
    if admissible.is_empty() {
        return Err(Error::config(
            "room",
            format!("no listener grid point fits rings of radii {radii:?}"),
        ));
    }
    // Draw from the full grid and reject, so the accepted point is uniform
    // over the admissible subset with the same stream as the plain sampler.
    loop {
        let p = sample_listener_position(room, rng)?;
        if admissible.contains(&p) {
            return Ok(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn room(l: f64, w: f64, h: f64, t60: f64) -> RoomSpec {
        RoomSpec {
            room_id: 0,
            length: l,
            width: w,
            height: h,
            t60,
        }
    }

    #[test]
    fn sampled_rooms_are_valid_and_reproducible() {
        let mut rng = Rng::new(1);
        for id in 0..30 {
            sample_room(id, &mut rng).validate().unwrap();
        }
        assert_eq!(
            sample_room(0, &mut Rng::new(5)),
            sample_room(0, &mut Rng::new(5))
        );
    }

    #[test]
    fn t60_values_are_uniform() {
        let mut rng = Rng::new(11);
        let mut counts = [0usize; 6];
        for _ in 0..10_000 {
            let r = sample_room(0, &mut rng);
            let i = T60_VALUES.iter().position(|t| *t == r.t60).unwrap();
            counts[i] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 1.0 / 6.0).abs() < 0.02, "{counts:?}");
        }
    }

    #[test]
    fn rejects_off_grid_t60() {
        let err = room(9.0, 9.0, 3.0, 0.25).validate().unwrap_err();
        assert!(matches!(err, Error::Config { ref field, .. } if field == "t60"));
    }

    #[test]
    fn listener_grid_keeps_clearance() {
        let r = room(9.0, 9.0, 3.0, 0.4);
        let grid = listener_grid(&r);
        assert_eq!(grid.len(), 64);
        for p in &grid {
            assert!(p.x >= 1.0 && p.x <= 8.0 && p.y >= 1.0 && p.y <= 8.0);
            assert_eq!(p.z, EAR_HEIGHT);
            assert_eq!(p.x.fract(), 0.0);
        }
        let a = sample_listener_position(&r, &mut Rng::new(4)).unwrap();
        let b = sample_listener_position(&r, &mut Rng::new(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn listener_sampling_covers_grid() {
        let r = room(10.0, 10.0, 3.0, 0.4);
        let grid = listener_grid(&r);
        let mut rng = Rng::new(8);
        let mut hits = vec![0usize; grid.len()];
        for _ in 0..1_000 {
            let p = sample_listener_position(&r, &mut rng).unwrap();
            hits[grid.iter().position(|g| *g == p).unwrap()] += 1;
        }
        assert!(hits.iter().all(|&h| h > 0));
    }

    #[test]
    fn tiny_room_has_no_grid() {
        let r = room(1.5, 1.5, 3.0, 0.4);
        assert!(matches!(
            sample_listener_position(&r, &mut Rng::new(0)),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn sabine_inversion() {
        let a = t60_to_absorption(&room(10.0, 10.0, 3.5, 0.5)).unwrap();
        assert!((a - 0.161 * 350.0 / (340.0 * 0.5)).abs() < 1e-12);
        assert!((a - 0.3315).abs() < 1e-4);
        let a = t60_to_absorption(&room(8.5, 8.5, 3.0, 0.2)).unwrap();
        assert!((a - 0.161 * 216.75 / (246.5 * 0.2)).abs() < 1e-12);
        assert!((a - 0.7079).abs() < 1e-4);
        let a = t60_to_absorption(&room(8.5, 8.5, 3.0, 1e9)).unwrap();
        assert!(a < 1e-9);
        assert!(matches!(
            t60_to_absorption(&room(8.5, 8.5, 3.0, 0.05)),
            Err(Error::InfeasibleRoom { .. })
        ));
    }

    #[test]
    fn ring_geometry() {
        let r = room(10.0, 10.0, 3.0, 0.4);
        let l = Point3::new(5.0, 5.0, EAR_HEIGHT);
        let ring = talker_ring_positions(&r, l, 1.0).unwrap();
        assert_eq!(ring.len(), 72);
        for w in ring.windows(2) {
            assert_eq!(w[1].azimuth_deg - w[0].azimuth_deg, 5.0);
        }
        assert!((ring[0].position.sub(l).norm() - 1.0).abs() < 1e-12);
        assert!(ring.iter().all(|p| p.position.z == l.z && !p.outside_room));
        assert!(talker_ring_positions(&r, l, 1.2).is_err());
        let corner = Point3::new(1.0, 1.0, EAR_HEIGHT);
        let ring = talker_ring_positions(&r, corner, 2.0).unwrap();
        assert!(ring.iter().any(|p| p.outside_room));
    }

    #[test]
    fn ring_fitting_listener() {
        let mut rng = Rng::new(2);
        for id in 0..30 {
            let r = sample_room(id, &mut rng);
            let p = sample_listener_for_rings(&r, &RING_RADII, &mut rng).unwrap();
            for rad in RING_RADII {
                let ring = talker_ring_positions(&r, p, rad).unwrap();
                assert!(ring.iter().all(|q| !q.outside_room));
            }
        }
    }

    #[test]
    fn signed_azimuths() {
        assert_eq!(signed_azimuth(0.0), 0.0);
        assert_eq!(signed_azimuth(90.0), 90.0);
        assert_eq!(signed_azimuth(180.0), 180.0);
        assert_eq!(signed_azimuth(270.0), -90.0);
        assert_eq!(signed_azimuth(355.0), -5.0);
    }
}
