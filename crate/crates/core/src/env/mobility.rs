//! User movement: random waypoint at a fixed speed, or replay of
//! pre-resampled paths.

use std::sync::Arc;

use rand::Rng;

use crate::model::Point;
use crate::scalar::Scalar;

/// Where user positions come from.
#[derive(Debug, Clone)]
pub enum MobilitySource<T> {
    /// Random waypoint at each user's configured speed.
    Synthetic,
    /// One path per trajectory, one point per slot. User `j` follows path
    /// `j mod n` and holds its last point once the path ends.
    Replay(Arc<Vec<Vec<Point<T>>>>),
}

/// Random-waypoint model on the square `[0, side]²`.
#[derive(Debug, Clone, Copy)]
pub struct RandomWaypoint<T> {
    pub side_km: T,
    pub slot_s: T,
}

impl<T: Scalar> RandomWaypoint<T> {
    pub fn new(side_km: T, slot_s: T) -> Self {
        Self { side_km, slot_s }
    }

    pub fn sample_waypoint<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        let side = self.side_km.as_f64();
        Point::new(
            T::lit(rng.random::<f64>() * side),
            T::lit(rng.random::<f64>() * side),
        )
    }

    /// Kilometres covered in one slot.
    pub fn step_km(&self, speed_kmh: T) -> T {
        speed_kmh * self.slot_s / T::lit(3600.0)
    }

    /// Position after one slot without touching the waypoint.
    pub fn peek(&self, pos: &Point<T>, waypoint: &Point<T>, speed_kmh: T) -> Point<T> {
        let step = self.step_km(speed_kmh);
        let dist = pos.distance(waypoint);
        if step <= T::zero() {
            return *pos;
        }
        let next = if dist <= step {
            *waypoint
        } else {
            let k = step / dist;
            Point::new(pos.x + (waypoint.x - pos.x) * k, pos.y + (waypoint.y - pos.y) * k)
        };
        self.reflect(next)
    }

    /// Moves one slot toward `waypoint`; on arrival a new waypoint is drawn.
    pub fn advance<R: Rng + ?Sized>(
        &self,
        pos: &Point<T>,
        waypoint: &mut Point<T>,
        speed_kmh: T,
        rng: &mut R,
    ) -> Point<T> {
        let next = self.peek(pos, waypoint, speed_kmh);
        if speed_kmh > T::zero() && next == *waypoint {
            *waypoint = self.sample_waypoint(rng);
        }
        next
    }

    fn reflect(&self, p: Point<T>) -> Point<T> {
        let fold = |v: T| {
            let side = self.side_km;
            let mut v = v;
            // at most a couple of folds for any realistic step
            for _ in 0..4 {
                if v < T::zero() {
                    v = -v;
                } else if v > side {
                    v = side + side - v;
                } else {
                    break;
                }
            }
            v.max(T::zero()).min(side)
        };
        Point::new(fold(p.x), fold(p.y))
    }
}

/// Single-step convenience: next position of a user moving at `speed_kmh`.
pub fn synthetic_mobility<T: Scalar, R: Rng + ?Sized>(
    model: &RandomWaypoint<T>,
    position: &Point<T>,
    waypoint: &mut Point<T>,
    speed_kmh: T,
    rng: &mut R,
) -> Point<T> {
    model.advance(position, waypoint, speed_kmh, rng)
}
