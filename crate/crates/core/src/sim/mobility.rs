use rand::Rng;

pub type Point = (f64, f64);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilityParams {
    pub area: (f64, f64),
    pub max_speed: f64,
    pub pause_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MobilityState {
    pub position: Point,
    pub waypoint: Point,
    pub speed: f64,
    pub pause_until: f64,
    /// Time `position` refers to.
    pub updated_at: f64,
}

fn uniform_point<R: Rng + ?Sized>(rng: &mut R, area: (f64, f64)) -> Point {
    (rng.gen::<f64>() * area.0, rng.gen::<f64>() * area.1)
}

/// A speed in (0, max_speed].
fn draw_speed<R: Rng + ?Sized>(rng: &mut R, max_speed: f64) -> f64 {
    max_speed * (1.0 - rng.gen::<f64>())
}

impl MobilityState {
    /// Uniform start position. Nodes begin by pausing, as ns-2 scenarios do.
    pub fn initial<R: Rng + ?Sized>(rng: &mut R, params: &MobilityParams) -> MobilityState {
        MobilityState {
            position: uniform_point(rng, params.area),
            waypoint: uniform_point(rng, params.area),
            speed: draw_speed(rng, params.max_speed),
            pause_until: params.pause_time,
            updated_at: 0.0,
        }
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Advances a random-waypoint node to `now`: straight legs at the drawn
/// speed, a pause at each waypoint, then a fresh waypoint and speed.
pub fn random_waypoint_step<R: Rng + ?Sized>(
    state: MobilityState,
    now: f64,
    rng: &mut R,
    params: &MobilityParams,
) -> MobilityState {
    let mut s = state;
    let mut t = s.updated_at.max(s.pause_until.min(now));
    loop {
        if now <= s.pause_until {
            break;
        }
        let start = t.max(s.pause_until);
        let remaining = distance(s.position, s.waypoint);
        let arrive = start + remaining / s.speed;
        if arrive > now {
            let frac = (now - start) * s.speed / remaining;
            s.position = (
                s.position.0 + (s.waypoint.0 - s.position.0) * frac,
                s.position.1 + (s.waypoint.1 - s.position.1) * frac,
            );
            break;
        }
        s.position = s.waypoint;
        s.pause_until = arrive + params.pause_time;
        s.waypoint = uniform_point(rng, params.area);
        s.speed = draw_speed(rng, params.max_speed);
        t = arrive;
    }
    s.position.0 = s.position.0.clamp(0.0, params.area.0);
    s.position.1 = s.position.1.clamp(0.0, params.area.1);
    s.updated_at = now;
    s
}
