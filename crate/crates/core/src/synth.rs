//! Synthetic navigators: waypoint-seeking agents whose motion depends on a
//! hidden demographic vector.
//!
//! Every demographic component changes behaviour:
//!
//! | component | effect |
//! |-----------|--------|
//! | `u_0` | base speed, 1 to 4 map units per second |
//! | `u_1` | standard deviation of the correlated heading noise |
//! | `u_2` | clearance kept from obstacles |
//! | `u_3` | probability of revisiting an earlier checkpoint |
//! | `u_4` | probability of passing an obstacle counter-clockwise |
//! | `u_5` | amplitude of a periodic speed swing |
//! | `u_6` | amplitude of a periodic lateral weave |
//! | `u_7` | constant heading bias, curving every leg left or right |

use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::demographics::{DemographicSchema, DemographicVector, FieldKind, FieldSchema, DEMOGRAPHIC_DIM};
use crate::error::{Error, Result};
use crate::features::{RawTrajectory, Sample};

/// Sampling interval of the simulator (2 Hz).
pub const SAMPLE_DT: f64 = 0.5;
/// Number of levels of every synthetic demographic field.
pub const LEVELS: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Rect {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    fn nearest(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }

    pub fn distance(&self, x: f64, y: f64) -> f64 {
        let (nx, ny) = self.nearest(x, y);
        (x - nx).hypot(y - ny)
    }
}

/// Arena, obstacles and the ordered checkpoints every agent visits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorld {
    pub arena: Rect,
    pub obstacles: Vec<Rect>,
    pub start: (f64, f64),
    pub checkpoints: Vec<(f64, f64)>,
    /// Distance at which a checkpoint counts as reached.
    pub reach_radius: f64,
    /// Simulation steps allowed per checkpoint leg.
    pub max_leg_steps: usize,
}

/// Behaviour derived from a demographic vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Behavior {
    pub speed: f64,
    pub heading_noise: f64,
    pub clearance: f64,
    pub revisit_probability: f64,
    pub counter_clockwise_probability: f64,
    /// Relative speed amplitude, in `[0, 1)`.
    pub speed_swing: f64,
    /// Heading amplitude in radians.
    pub weave: f64,
    /// Radians added to the goal heading on every step.
    pub heading_bias: f64,
}

/// Period, in samples, of the speed swing.
const SWING_PERIOD: f64 = 20.0;
/// Period, in samples, of the lateral weave.
const WEAVE_PERIOD: f64 = 8.0;
/// Distance to the target under which weave and bias fade out.
const FADE_DISTANCE: f64 = 10.0;

impl Behavior {
    pub fn from_demographics(u: &DemographicVector) -> Self {
        let u = u.values();
        Behavior {
            speed: 1.0 + 3.0 * u[0],
            heading_noise: 0.35 * u[1],
            clearance: 1.0 + 5.0 * u[2],
            revisit_probability: u[3],
            counter_clockwise_probability: u[4],
            speed_swing: 0.6 * u[5],
            weave: 0.6 * u[6],
            heading_bias: 0.6 * (u[7] - 0.5),
        }
    }
}

impl Default for SyntheticWorld {
    /// Eight checkpoints on a circle visited in star order, so every leg
    /// passes the square obstacle in the middle of the arena.
    fn default() -> Self {
        let ring: Vec<(f64, f64)> = (0..8)
            .map(|k| {
                let a = std::f64::consts::FRAC_PI_4 * ((3 * k) % 8) as f64;
                (50.0 + 35.0 * a.cos(), 50.0 + 35.0 * a.sin())
            })
            .collect();
        SyntheticWorld {
            arena: Rect::new(0.0, 100.0, 0.0, 100.0),
            obstacles: vec![Rect::new(35.0, 65.0, 35.0, 65.0)],
            start: (95.0, 50.0),
            checkpoints: ring,
            reach_radius: 2.0,
            max_leg_steps: 4000,
        }
    }
}

impl SyntheticWorld {
    pub fn validate(&self) -> Result<()> {
        if self.checkpoints.is_empty() {
            return Err(Error::InvalidArgument("world has no checkpoints".into()));
        }
        for &(x, y) in self.checkpoints.iter().chain(std::iter::once(&self.start)) {
            if !self.arena.contains(x, y) {
                return Err(Error::InvalidArgument(format!("point ({x}, {y}) outside the arena")));
            }
            if self.obstacles.iter().any(|o| o.contains(x, y)) {
                return Err(Error::InvalidArgument(format!("point ({x}, {y}) inside an obstacle")));
            }
        }
        Ok(())
    }

    fn blocked(&self, x: f64, y: f64) -> bool {
        !self.arena.contains(x, y) || self.obstacles.iter().any(|o| o.contains(x, y))
    }
}

/// Schema of the synthetic demographics: eight ordinal fields `f1..f8`
/// with levels `"0"` to `"100"`.
pub fn synthetic_schema() -> DemographicSchema {
    let fields = (1..=DEMOGRAPHIC_DIM)
        .map(|i| FieldSchema {
            name: format!("f{i}"),
            kind: FieldKind::Ordinal,
            values: (0..LEVELS).map(|k| k.to_string()).collect(),
        })
        .collect();
    DemographicSchema::new(fields).expect("synthetic schema is valid")
}

/// One generated navigator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecord {
    pub trajectory: RawTrajectory,
    pub demographics: DemographicVector,
    /// Level index of every field, the raw CSV value.
    pub levels: [usize; DEMOGRAPHIC_DIM],
}

impl SyntheticRecord {
    pub fn raw_values(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.to_string()).collect()
    }
}

/// Draws `n_traj` navigators. All randomness comes from `seed`.
pub fn generate_synthetic_dataset(seed: u64, n_traj: usize, world: &SyntheticWorld) -> Result<Vec<SyntheticRecord>> {
    if n_traj < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 trajectories, got {n_traj}")));
    }
    world.validate()?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let width = n_traj.to_string().len();
    (0..n_traj)
        .map(|i| {
            let mut levels = [0usize; DEMOGRAPHIC_DIM];
            levels.iter_mut().for_each(|l| *l = rng.gen_range(0..LEVELS));
            let mut u = [0.0; DEMOGRAPHIC_DIM];
            for (v, &l) in u.iter_mut().zip(&levels) {
                *v = l as f64 / (LEVELS - 1) as f64;
            }
            let demographics = DemographicVector::new(u)?;
            let behavior = Behavior::from_demographics(&demographics);
            let samples = simulate(world, &behavior, &mut rng)?;
            Ok(SyntheticRecord {
                trajectory: RawTrajectory::new(format!("traj{i:0width$}"), samples),
                demographics,
                levels,
            })
        })
        .collect()
}

fn route<R: Rng>(world: &SyntheticWorld, behavior: &Behavior, rng: &mut R) -> Vec<(f64, f64)> {
    let mut route = Vec::new();
    for (k, &cp) in world.checkpoints.iter().enumerate() {
        route.push(cp);
        if k >= 1 && rng.gen::<f64>() < behavior.revisit_probability {
            route.push(world.checkpoints[k - 1]);
            route.push(cp);
        }
    }
    route
}

/// Steps one agent through its route.
///
/// Near an obstacle the agent follows the boundary in a rotational direction
/// drawn on first contact, until the direct heading no longer points into
/// the obstacle.
pub fn simulate<R: Rng>(world: &SyntheticWorld, behavior: &Behavior, rng: &mut R) -> Result<Vec<Sample>> {
    let targets = route(world, behavior, rng);
    let noise = Normal::new(0.0, behavior.heading_noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let base_step = behavior.speed * SAMPLE_DT;
    let contact_zone = behavior.clearance + base_step * (1.0 + behavior.speed_swing);
    let tau = std::f64::consts::TAU;
    let mut tick = 0.0f64;
    let (mut x, mut y) = world.start;
    let mut t = 0.0;
    let mut offset = 0.0f64;
    let mut samples = vec![Sample::new(t, x, y)];

    for (leg, &(tx, ty)) in targets.iter().enumerate() {
        let mut sides: Vec<Option<f64>> = vec![None; world.obstacles.len()];
        let mut steps = 0;
        while (tx - x).hypot(ty - y) > world.reach_radius {
            steps += 1;
            if steps > world.max_leg_steps {
                return Err(Error::UnreachableCheckpoint(leg));
            }
            offset = 0.8 * offset + noise.sample(rng);
            tick += 1.0;
            let step = base_step * (1.0 + behavior.speed_swing * (tau * tick / SWING_PERIOD).sin());
            let fade = ((tx - x).hypot(ty - y) / FADE_DISTANCE).min(1.0);
            let weave = behavior.weave * (tau * tick / WEAVE_PERIOD).sin();
            let direct = (ty - y).atan2(tx - x);
            let goal = direct + offset + fade * (weave + behavior.heading_bias);
            let (mut dx, mut dy) = (goal.cos(), goal.sin());

            let nearest = world
                .obstacles
                .iter()
                .enumerate()
                .map(|(i, o)| (i, o.distance(x, y)))
                .filter(|&(_, d)| d < contact_zone)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((i, d)) = nearest {
                let (nx, ny) = world.obstacles[i].nearest(x, y);
                let (ox, oy) = if d > 0.0 { ((x - nx) / d, (y - ny) / d) } else { (0.0, 0.0) };
                if direct.cos() * ox + direct.sin() * oy < 0.0 {
                    let sign = *sides[i].get_or_insert_with(|| {
                        if rng.gen::<f64>() < behavior.counter_clockwise_probability {
                            1.0
                        } else {
                            -1.0
                        }
                    });
                    dx = -oy * sign;
                    dy = ox * sign;
                    if d < behavior.clearance {
                        let push = (behavior.clearance - d).min(step) / step;
                        dx += ox * push;
                        dy += oy * push;
                    }
                } else {
                    let into = dx * ox + dy * oy;
                    if into < 0.0 {
                        dx -= into * ox;
                        dy -= into * oy;
                    }
                }
                let n = dx.hypot(dy);
                if n > 1e-9 {
                    dx /= n;
                    dy /= n;
                } else {
                    (dx, dy) = (direct.cos(), direct.sin());
                }
            }

            let (nx, ny) = (x + step * dx, y + step * dy);
            if !world.blocked(nx, ny) {
                x = nx;
                y = ny;
            } else {
                x = nx.clamp(world.arena.x_min, world.arena.x_max);
                y = ny.clamp(world.arena.y_min, world.arena.y_max);
                if world.obstacles.iter().any(|o| o.contains(x, y)) {
                    return Err(Error::UnreachableCheckpoint(leg));
                }
            }
            t += SAMPLE_DT;
            samples.push(Sample::new(t, x, y));
        }
    }
    Ok(samples)
}
