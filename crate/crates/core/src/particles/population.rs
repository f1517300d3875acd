use rayon::prelude::*;

use super::initial::InitialProfile;
use super::label::Label;
use crate::error::{invalid, Error, Result};
use crate::grid::{GridField, GridSpec, Point};
use crate::rng::{derive, CounterStream};

/// Particles per parallel work unit. Fixed so that the split does not depend
/// on the thread count.
const CHUNK: usize = 2048;

/// Stream tag for initial positions, kept apart from the per-label streams.
const INIT_TAG: u64 = 0x1417;

/// Largest admissible `max(lambda) * dt`.
pub const MAX_RATE_STEP: f64 = 0.1;

/// A living particle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub label: Label,
    pub birth: f64,
    pub position: Point,
    /// Integrated intensity since birth.
    pub intensity: f64,
    /// Exp(1) threshold; the particle branches once `intensity` reaches it.
    pub threshold: f64,
    key: u64,
    steps: u64,
}

impl Particle {
    fn new(label: Label, key: u64, birth: f64, position: Point) -> Self {
        let threshold = CounterStream::new(key).exponential(0);
        Self {
            label,
            birth,
            position,
            intensity: 0.0,
            threshold,
            key,
            steps: 0,
        }
    }

    pub fn stream_key(&self) -> u64 {
        self.key
    }
}

/// A particle that has branched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadParticle {
    pub label: Label,
    pub birth: f64,
    pub death: f64,
    pub position: Point,
}

/// Where per-particle rates come from during a step.
#[derive(Debug, Clone, Copy)]
pub enum Rates<'a> {
    /// A rate field `(1 - h)^+`, interpolated at each particle.
    Field(&'a GridField),
    /// The same rate for every particle.
    Uniform(f64),
}

impl Rates<'_> {
    #[inline]
    fn at(&self, x: Point) -> f64 {
        match self {
            Rates::Field(f) => f.interpolate(x),
            Rates::Uniform(r) => *r,
        }
    }

    fn max(&self) -> f64 {
        match self {
            Rates::Field(f) => f.max(),
            Rates::Uniform(r) => *r,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BranchingScheme {
    /// Integrated intensity against an Exp(1) threshold.
    #[default]
    Threshold,
    /// Independent Bernoulli(1 - exp(-lambda dt)) per step. Cross-check only.
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOptions {
    pub diffusion: bool,
    pub record_increments: bool,
    pub scheme: BranchingScheme,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self {
            diffusion: true,
            record_increments: false,
            scheme: BranchingScheme::Threshold,
        }
    }
}

/// What one particle did during a step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Increment {
    /// Position at the start of the step.
    pub start: Point,
    /// Standard normal draws; zero when diffusion is off.
    pub xi: Point,
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchEvent {
    pub parent: Label,
    pub time: f64,
    pub position: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t_start: f64,
    pub dt: f64,
    pub alive_before: usize,
    /// Sorted by parent label.
    pub branches: Vec<BranchEvent>,
    /// One entry per particle alive at the start, in population order.
    pub increments: Option<Vec<Increment>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnapshotRow {
    pub time: f64,
    pub label: Label,
    pub position: Point,
    pub alive: bool,
}

#[derive(Debug, Clone)]
pub struct Population {
    grid: GridSpec,
    n0: usize,
    time: f64,
    alive: Vec<Particle>,
    dead: Vec<DeadParticle>,
    keep_dead: bool,
}

impl Population {
    /// Places `floor(m N)` i.i.d. draws from `u0 / m`, where `m` is the mass of
    /// `profile`. A zero profile gives an empty population.
    pub fn init(n: usize, profile: &InitialProfile, grid: GridSpec, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("particle count must be at least 1"));
        }
        profile.validate()?;
        let mass = profile
            .mass()
            .ok_or_else(|| invalid(format!("u0 = {} is not normalizable", profile.name())))?;
        let count = (mass * n as f64).floor() as usize;
        if count >= u32::MAX as usize {
            return Err(invalid("too many root particles"));
        }
        let dim = grid.dim();
        let alive = (1..count as u32 + 1)
            .into_par_iter()
            .with_min_len(CHUNK)
            .map(|k| {
                let stream = CounterStream::new(derive(seed, &[INIT_TAG, k as u64]));
                let x = grid.wrap_point(profile.sample(&stream, dim)?);
                Ok(Particle::new(
                    Label::root(k),
                    derive(seed, &[k as u64]),
                    0.0,
                    x,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            n0: n,
            time: 0.0,
            alive,
            dead: Vec::new(),
            keep_dead: true,
        })
    }

    /// Drop dead records instead of keeping them. Saves memory on long runs.
    pub fn discard_dead(mut self) -> Self {
        self.keep_dead = false;
        self.dead = Vec::new();
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn alive(&self) -> &[Particle] {
        &self.alive
    }

    pub fn dead(&self) -> &[DeadParticle] {
        &self.dead
    }

    /// `Card(alive) / N`.
    pub fn mass(&self) -> f64 {
        self.alive.len() as f64 / self.n0 as f64
    }

    pub fn positions(&self) -> impl Iterator<Item = Point> + '_ {
        self.alive.iter().map(|p| p.position)
    }

    /// Advances by `dt` with rates `(1 - h)^+` interpolated at the
    /// pre-move positions.
    pub fn step(&mut self, h: &GridField, dt: f64) -> Result<StepReport> {
        let rates = h.map(|v| (1.0 - v).max(0.0));
        self.step_with(Rates::Field(&rates), dt, StepOptions::default())
    }

    pub fn step_with(
        &mut self,
        rates: Rates<'_>,
        dt: f64,
        opts: StepOptions,
    ) -> Result<StepReport> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {dt}")));
        }
        if let Rates::Field(f) = rates {
            if f.spec().dim() != self.grid.dim() {
                return Err(invalid("rate field dimension differs from the population"));
            }
        }
        let max_rate = rates.max();
        if !(max_rate >= 0.0) {
            return Err(invalid("rates must be nonnegative"));
        }
        if max_rate * dt > MAX_RATE_STEP {
            return Err(Error::StepTooLarge {
                dt,
                product: max_rate * dt,
            });
        }

        let grid = self.grid;
        let dim = grid.dim();
        let sd = (2.0 * dt).sqrt();
        let t_start = self.time;
        let t_end = t_start + dt;
        let record = opts.record_increments;

        let chunks: Vec<(Vec<Increment>, Vec<usize>)> = self
            .alive
            .par_chunks_mut(CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let mut incs = Vec::with_capacity(if record { chunk.len() } else { 0 });
                let mut died = Vec::new();
                for (j, p) in chunk.iter_mut().enumerate() {
                    let start = p.position;
                    let rate = rates.at(start);
                    p.intensity += rate * dt;
                    let stream = CounterStream::new(p.key);
                    let base = 1 + 3 * p.steps;
                    let mut xi = [0.0; 2];
                    if opts.diffusion {
                        for (axis, z) in xi.iter_mut().enumerate().take(dim) {
                            *z = stream.normal(base + axis as u64);
                            p.position[axis] += sd * *z;
                        }
                        p.position = grid.wrap_point(p.position);
                    }
                    let dies = match opts.scheme {
                        BranchingScheme::Threshold => p.intensity >= p.threshold,
                        BranchingScheme::Bernoulli => {
                            stream.uniform(base + 2) < -(-rate * dt).exp_m1()
                        }
                    };
                    p.steps += 1;
                    if record {
                        incs.push(Increment { start, xi, rate });
                    }
                    if dies {
                        died.push(c * CHUNK + j);
                    }
                }
                (incs, died)
            })
            .collect();

        let alive_before = self.alive.len();
        let mut increments = record.then(|| Vec::with_capacity(alive_before));
        let mut died = Vec::new();
        for (incs, d) in chunks {
            if let Some(all) = increments.as_mut() {
                all.extend(incs);
            }
            died.extend(d);
        }

        let mut parents: Vec<Particle> = died.iter().map(|&i| self.alive[i]).collect();
        parents.sort_by_key(|a| a.label);
        let mut children = Vec::with_capacity(2 * parents.len());
        let mut branches = Vec::with_capacity(parents.len());
        for p in &parents {
            for i in 1..=2u8 {
                children.push(Particle::new(
                    p.label.child(i)?,
                    derive(p.key, &[i as u64]),
                    t_end,
                    p.position,
                ));
            }
            branches.push(BranchEvent {
                parent: p.label,
                time: t_end,
                position: p.position,
            });
        }
        if !died.is_empty() {
            let mut next = died.iter().copied().peekable();
            let mut idx = 0;
            self.alive.retain(|_| {
                let remove = next.peek() == Some(&idx);
                if remove {
                    next.next();
                }
                idx += 1;
                !remove
            });
        }
        if self.keep_dead {
            self.dead.extend(parents.iter().map(|p| DeadParticle {
                label: p.label,
                birth: p.birth,
                death: t_end,
                position: p.position,
            }));
        }
        self.alive.extend(children);
        self.time = t_end;

        Ok(StepReport {
            t_start,
            dt,
            alive_before,
            branches,
            increments,
        })
    }

    /// `(time, label, position, alive)` for every particle ever created,
    /// sorted by label.
    pub fn snapshot_rows(&self) -> Vec<SnapshotRow> {
        let mut rows: Vec<SnapshotRow> = self
            .alive
            .iter()
            .map(|p| SnapshotRow {
                time: self.time,
                label: p.label,
                position: p.position,
                alive: true,
            })
            .chain(self.dead.iter().map(|d| SnapshotRow {
                time: self.time,
                label: d.label,
                position: d.position,
                alive: false,
            }))
            .collect();
        rows.sort_by_key(|a| a.label);
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::new(1, 20.0, 1024).unwrap()
    }

    fn gaussian(mass: f64) -> InitialProfile {
        InitialProfile::Gaussian {
            mass,
            sigma: 1.0,
            center: [0.0; 2],
        }
    }

    #[test]
    fn init_counts() {
        let p = Population::init(1000, &gaussian(0.5), grid(), 1).unwrap();
        assert_eq!(p.alive().len(), 500);
        let p = Population::init(100, &gaussian(1.0), grid(), 1).unwrap();
        assert_eq!(p.mass(), 1.0);
        let p = Population::init(100, &InitialProfile::Zero, grid(), 1).unwrap();
        assert_eq!(p.alive().len(), 0);
        assert!(
            Population::init(100, &InitialProfile::Constant { value: 0.1 }, grid(), 1).is_err()
        );
        assert!(Population::init(0, &gaussian(1.0), grid(), 1).is_err());
    }

    #[test]
    fn narrow_bump_particles_stay_in_support() {
        let profile = InitialProfile::SmoothBump {
            mass: 1.0,
            radius: 1e-3,
            center: [2.0, 0.0],
        };
        let p = Population::init(100, &profile, grid(), 9).unwrap();
        assert_eq!(p.alive().len(), 100);
        assert!(p.positions().all(|x| (x[0] - 2.0).abs() <= 1e-3));
    }

    #[test]
    fn saturated_density_freezes_count() {
        let mut p = Population::init(200, &gaussian(1.0), grid(), 2).unwrap();
        let h = GridField::constant(grid(), 1.5);
        for _ in 0..100 {
            let r = p.step(&h, 0.01).unwrap();
            assert!(r.branches.is_empty());
        }
        assert_eq!(p.alive().len(), 200);
        assert!(p.alive().iter().all(|q| q.intensity == 0.0));
    }

    #[test]
    fn rate_is_positive_part() {
        let mut p = Population::init(10, &gaussian(1.0), grid(), 2).unwrap();
        let h = GridField::constant(grid(), 0.3);
        let opts = StepOptions {
            record_increments: true,
            ..Default::default()
        };
        let rates = h.map(|v| (1.0 - v).max(0.0));
        let r = p.step_with(Rates::Field(&rates), 0.01, opts).unwrap();
        for inc in r.increments.unwrap() {
            assert!((inc.rate - 0.7).abs() < 1e-15);
        }
    }

    #[test]
    fn oversized_step_rejected() {
        let mut p = Population::init(10, &gaussian(1.0), grid(), 2).unwrap();
        assert!(matches!(
            p.step_with(Rates::Uniform(1.0), 0.2, StepOptions::default()),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(p
            .step_with(Rates::Uniform(1.0), 0.1, StepOptions::default())
            .is_ok());
    }

    #[test]
    fn children_inherit_death_position_and_labels() {
        let mut p = Population::init(300, &gaussian(1.0), grid(), 5).unwrap();
        let mut seen = 0;
        for _ in 0..200 {
            let before: Vec<Particle> = p.alive().to_vec();
            let r = p
                .step_with(Rates::Uniform(1.0), 0.01, StepOptions::default())
                .unwrap();
            for ev in &r.branches {
                let kids: Vec<&Particle> = p
                    .alive()
                    .iter()
                    .filter(|q| q.label.parent() == Some(ev.parent))
                    .collect();
                assert_eq!(kids.len(), 2);
                for k in kids {
                    assert_eq!(k.position[0].to_bits(), ev.position[0].to_bits());
                    assert_eq!(k.intensity, 0.0);
                    assert_eq!(k.birth, r.t_start + r.dt);
                }
                assert!(before.iter().any(|q| q.label == ev.parent));
                seen += 1;
            }
            let mut sorted = r.branches.clone();
            sorted.sort_by_key(|a| a.parent);
            assert_eq!(sorted, r.branches);
            assert!(p.alive().iter().all(|q| q.intensity < q.threshold));
        }
        assert!(seen > 100);
        assert_eq!(p.dead().len(), seen);
        assert_eq!(p.alive().len(), 300 + seen);
    }

    #[test]
    fn mass_is_monotone() {
        let mut p = Population::init(500, &gaussian(1.0), grid(), 8).unwrap();
        let mut last = p.mass();
        for _ in 0..100 {
            p.step_with(Rates::Uniform(0.8), 0.01, StepOptions::default())
                .unwrap();
            assert!(p.mass() >= last);
            last = p.mass();
        }
    }

    #[test]
    fn one_branch_adds_one_over_n() {
        let mut p = Population::init(100, &gaussian(1.0), grid(), 3).unwrap();
        loop {
            let r = p
                .step_with(Rates::Uniform(0.05), 0.01, StepOptions::default())
                .unwrap();
            match r.branches.len() {
                0 => continue,
                1 => {
                    assert!((p.mass() - 1.01).abs() < 1e-15);
                    break;
                }
                _ => panic!("expected a single event"),
            }
        }
    }

    #[test]
    fn positions_are_wrapped() {
        let g = GridSpec::new(1, 1.0, 64).unwrap();
        let mut p = Population::init(200, &gaussian(1.0), g, 4).unwrap();
        for _ in 0..20 {
            p.step_with(Rates::Uniform(0.0), 0.05, StepOptions::default())
                .unwrap();
        }
        assert!(p.positions().all(|x| (-1.0..1.0).contains(&x[0])));
    }

    #[test]
    fn two_dimensional_step() {
        let g = GridSpec::new(2, 10.0, 64).unwrap();
        let mut p = Population::init(200, &gaussian(1.0), g, 4).unwrap();
        let start: Vec<Point> = p.positions().collect();
        p.step_with(Rates::Uniform(0.5), 0.01, StepOptions::default())
            .unwrap();
        assert!(p
            .alive()
            .iter()
            .zip(&start)
            .all(|(q, s)| q.position[1] != s[1]));
    }

    #[test]
    fn snapshot_rows_cover_everyone() {
        let mut p = Population::init(50, &gaussian(1.0), grid(), 6).unwrap();
        for _ in 0..50 {
            p.step_with(Rates::Uniform(1.0), 0.02, StepOptions::default())
                .unwrap();
        }
        let rows = p.snapshot_rows();
        assert_eq!(rows.len(), p.alive().len() + p.dead().len());
        assert!(rows.windows(2).all(|w| w[0].label < w[1].label));
    }
}
