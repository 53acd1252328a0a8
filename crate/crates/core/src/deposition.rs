//! Ballistic deposition of unit disks on a periodic one-dimensional substrate.
//!
//! A particle falls vertically at abscissa `x` and sticks at first contact,
//! either with the substrate (`z = 1/2`) or with an earlier particle. The
//! substrate is divided into sectors at least one diameter wide, so a landing
//! query only inspects the sector of `x` and its two neighbors.

use crate::error::{Result, SimError};
use crate::parallel::{cautious_run, lockstep::lockstep_emulate_cycles, CautiousModel, LockstepRun, NeighborView};
use crate::rng::RandomStream;

/// Tolerance used by the geometric invariant checks.
pub const CONTACT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Particle {
    pub m: usize,
    pub x: f64,
    pub z: f64,
}

/// Periodic horizontal distance on a circle of circumference `length`.
pub fn wrap_distance(a: f64, b: f64, length: f64) -> f64 {
    let d = (a - b).abs() % length;
    d.min(length - d)
}

/// Height at which a particle dropped at `x` rests on top of `p`, if any.
fn resting_height(x: f64, p: &Particle, length: f64) -> Option<f64> {
    let d = wrap_distance(x, p.x, length);
    (d < 1.0).then(|| p.z + (1.0 - d * d).sqrt())
}

#[derive(Clone, Debug)]
pub struct Substrate {
    length: f64,
    sectors: Vec<Vec<Particle>>,
    particles: Vec<Particle>,
}

impl Substrate {
    pub fn new(length: f64, sector_count: usize) -> Result<Self> {
        if !(length > 0.0) || sector_count == 0 {
            return Err(SimError::InvalidParameter(
                "substrate needs positive length and at least one sector".into(),
            ));
        }
        if length / (sector_count as f64) < 1.0 {
            return Err(SimError::InvalidParameter(format!(
                "sector width {} is below one particle diameter",
                length / sector_count as f64
            )));
        }
        Ok(Self {
            length,
            sectors: vec![Vec::new(); sector_count],
            particles: Vec::new(),
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    pub fn sector_width(&self) -> f64 {
        self.length / self.sectors.len() as f64
    }

    pub fn sector_of(&self, x: f64) -> usize {
        ((x / self.sector_width()) as usize).min(self.sectors.len() - 1)
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn sector(&self, s: usize) -> &[Particle] {
        &self.sectors[s]
    }

    /// Sector of `x` and its periodic neighbors, without repetition.
    fn scanned_sectors(&self, x: f64) -> impl Iterator<Item = usize> {
        let s = self.sector_of(x);
        let n = self.sectors.len();
        let mut ids = [s, (s + n - 1) % n, (s + 1) % n];
        ids.sort_unstable();
        let distinct = if n >= 3 { 3 } else { n };
        let mut out = [usize::MAX; 3];
        let mut k = 0;
        for id in ids {
            if k == 0 || out[k - 1] != id {
                out[k] = id;
                k += 1;
            }
        }
        debug_assert_eq!(k, distinct);
        out.into_iter().take(k)
    }

    /// First-contact height using the sector index.
    pub fn landing_height(&self, x: f64) -> f64 {
        self.scanned_sectors(x)
            .flat_map(|s| self.sectors[s].iter())
            .filter_map(|p| resting_height(x, p, self.length))
            .fold(0.5, f64::max)
    }

    /// First-contact height scanning every deposited particle.
    pub fn landing_height_exhaustive(&self, x: f64) -> f64 {
        self.particles
            .iter()
            .filter_map(|p| resting_height(x, p, self.length))
            .fold(0.5, f64::max)
    }

    /// Drops a particle at `x` and returns it.
    pub fn deposit(&mut self, x: f64) -> Result<Particle> {
        if !(0.0..self.length).contains(&x) {
            return Err(SimError::InvalidParameter(format!(
                "abscissa {x} outside [0, {})",
                self.length
            )));
        }
        let p = Particle {
            m: self.particles.len(),
            x,
            z: self.landing_height(x),
        };
        let s = self.sector_of(x);
        self.sectors[s].push(p);
        self.particles.push(p);
        Ok(p)
    }
}

/// Deposits `count` particles with abscissae uniform over the substrate.
pub fn deposit_sequential(length: f64, sector_count: usize, count: usize, seed: u64) -> Result<Vec<Particle>> {
    let mut sub = Substrate::new(length, sector_count)?;
    let mut rng = RandomStream::new(seed, 0);
    for _ in 0..count {
        sub.deposit(rng.uniform() * length)?;
    }
    Ok(sub.particles)
}

/// Continuous-time deposition: one Poisson clock of rate 1 per sector, the
/// particle landing uniformly inside the sector.
#[derive(Clone, Debug)]
pub struct DepositionRing {
    pub length: f64,
    pub sectors: usize,
    pub seed: u64,
}

impl DepositionRing {
    pub fn new(length: f64, sectors: usize, seed: u64) -> Result<Self> {
        Substrate::new(length, sectors)?;
        Ok(Self {
            length,
            sectors,
            seed,
        })
    }

    fn width(&self) -> f64 {
        self.length / self.sectors as f64
    }
}

impl CautiousModel for DepositionRing {
    type State = Vec<Particle>;
    type Record = (f64, f64);

    fn num_components(&self) -> usize {
        self.sectors
    }

    fn neighbors(&self, i: usize) -> Vec<usize> {
        let n = self.sectors;
        let mut v: Vec<usize> = [(i + n - 1) % n, (i + 1) % n]
            .into_iter()
            .filter(|&j| j != i)
            .collect();
        v.dedup();
        v
    }

    fn rate(&self, _i: usize) -> f64 {
        1.0
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn initial_state(&self, _i: usize) -> Vec<Particle> {
        Vec::new()
    }

    fn update(
        &self,
        i: usize,
        _time: f64,
        own: &mut Vec<Particle>,
        view: &NeighborView<'_, Vec<Particle>>,
        stream: &mut RandomStream,
    ) -> (f64, f64) {
        let w = self.width();
        let x = ((i as f64 + stream.uniform()) * w).min(self.length.next_down());
        let z = own
            .iter()
            .chain(view.iter().flat_map(|(_, s)| s.iter()))
            .filter_map(|p| resting_height(x, p, self.length))
            .fold(0.5, f64::max);
        own.push(Particle { m: 0, x, z });
        (x, z)
    }
}

fn numbered(records: impl Iterator<Item = (f64, f64)>) -> Vec<Particle> {
    records
        .enumerate()
        .map(|(m, (x, z))| Particle { m, x, z })
        .collect()
}

/// Deposition driven by the cautious-advancement engine up to `horizon`.
pub fn deposit_parallel_cautious(ring: &DepositionRing, horizon: f64, workers: usize) -> Result<Vec<Particle>> {
    let events = cautious_run(ring, horizon, workers)?;
    Ok(numbered(events.into_iter().map(|e| e.record)))
}

/// Lockstep run whose records are `(x, z)` landings.
pub type LockstepDeposition = LockstepRun<(f64, f64)>;

/// Lockstep emulation of the cautious deposition, with cycle statistics.
pub fn deposit_lockstep(
    ring: &DepositionRing,
    horizon: f64,
    max_cycles: Option<u64>,
) -> Result<(Vec<Particle>, LockstepDeposition)> {
    let run = lockstep_emulate_cycles(ring, horizon, max_cycles)?;
    let particles = numbered(run.events.iter().map(|e| e.record));
    Ok((particles, run))
}

/// Particle counts over (height band, arrival band).
#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    /// `counts[h][t]`.
    pub counts: Vec<Vec<u64>>,
    pub bin_height: f64,
    pub length: f64,
}

impl DensityProfile {
    /// Height is measured as `z - 1/2` and split into `height_bins` bands up to
    /// the highest particle; arrival order is split into `time_bins` bands.
    pub fn new(particles: &[Particle], length: f64, height_bins: usize, time_bins: usize) -> Result<Self> {
        if height_bins == 0 || time_bins == 0 {
            return Err(SimError::InvalidParameter("bin counts must be positive".into()));
        }
        if particles.is_empty() {
            return Err(SimError::InvalidParameter("empty trajectory".into()));
        }
        let top = particles.iter().map(|p| p.z - 0.5).fold(0.0, f64::max);
        let bin_height = if top > 0.0 { top * (1.0 + 1e-12) / height_bins as f64 } else { 1.0 };
        Self::with_bin_height(particles, length, height_bins, time_bins, bin_height)
    }

    /// As [`DensityProfile::new`] with a fixed band height; particles above
    /// the last band are counted in it.
    pub fn with_bin_height(
        particles: &[Particle],
        length: f64,
        height_bins: usize,
        time_bins: usize,
        bin_height: f64,
    ) -> Result<Self> {
        if height_bins == 0 || time_bins == 0 || !(bin_height > 0.0) {
            return Err(SimError::InvalidParameter("bin counts must be positive".into()));
        }
        let mut counts = vec![vec![0u64; time_bins]; height_bins];
        let m = particles.len();
        for (k, p) in particles.iter().enumerate() {
            let h = (((p.z - 0.5) / bin_height) as usize).min(height_bins - 1);
            let t = (k * time_bins / m.max(1)).min(time_bins - 1);
            counts[h][t] += 1;
        }
        Ok(Self {
            counts,
            bin_height,
            length,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Particles per unit area in band `h` over all arrival bands.
    pub fn height_density(&self, h: usize) -> f64 {
        self.counts[h].iter().sum::<u64>() as f64 / (self.length * self.bin_height)
    }

    pub fn density(&self, h: usize, t: usize) -> f64 {
        self.counts[h][t] as f64 / (self.length * self.bin_height)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("height_bin,time_bin,density\n");
        for (h, row) in self.counts.iter().enumerate() {
            for t in 0..row.len() {
                out.push_str(&format!("{h},{t},{}\n", self.density(h, t)));
            }
        }
        out
    }
}

fn center_distance(a: &Particle, b: &Particle, length: f64) -> f64 {
    let dx = wrap_distance(a.x, b.x, length);
    let dz = a.z - b.z;
    (dx * dx + dz * dz).sqrt()
}

/// Number of particle pairs closer than `1 - CONTACT_TOLERANCE`.
pub fn overlap_violations(particles: &[Particle], length: f64) -> usize {
    let mut count = 0;
    for (i, a) in particles.iter().enumerate() {
        for b in &particles[i + 1..] {
            if wrap_distance(a.x, b.x, length) < 1.0
                && center_distance(a, b, length) < 1.0 - CONTACT_TOLERANCE
            {
                count += 1;
            }
        }
    }
    count
}

/// Number of particles neither resting on the substrate nor touching an
/// earlier, lower particle.
pub fn unsupported(particles: &[Particle], length: f64) -> usize {
    particles
        .iter()
        .enumerate()
        .filter(|(i, p)| {
            if (p.z - 0.5).abs() <= CONTACT_TOLERANCE {
                return false;
            }
            !particles[..*i].iter().any(|q| {
                q.z < p.z && (center_distance(p, q, length) - 1.0).abs() <= CONTACT_TOLERANCE
            })
        })
        .count()
}

pub fn particles_csv(particles: &[Particle]) -> String {
    let mut out = String::from("m,x,z\n");
    for p in particles {
        out.push_str(&format!("{},{},{}\n", p.m, p.x, p.z));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn landing_examples() {
        let mut sub = Substrate::new(10.0, 10).unwrap();
        assert_eq!(sub.landing_height(3.3), 0.5);
        sub.deposit(5.0).unwrap();
        assert_eq!(sub.landing_height(5.0), 1.5);
        assert!((sub.landing_height(5.6) - 1.3).abs() < 1e-12);
        let mut wrap = Substrate::new(10.0, 10).unwrap();
        wrap.deposit(9.9).unwrap();
        let z = wrap.landing_height(0.1);
        assert!((z - (0.5 + (1.0f64 - 0.04).sqrt())).abs() < 1e-12);
    }

    #[test]
    fn rejects_narrow_sectors() {
        assert!(Substrate::new(10.0, 11).is_err());
        assert!(DepositionRing::new(10.0, 20, 0).is_err());
        assert!(Substrate::new(10.0, 10).is_ok());
    }

    #[test]
    fn few_sectors_scan_each_once() {
        for s in 1..=3 {
            let sub = Substrate::new(6.0, s).unwrap();
            let ids: Vec<usize> = sub.scanned_sectors(0.5).collect();
            assert_eq!(ids.len(), s);
        }
    }

    #[test]
    fn sectorized_equals_exhaustive() {
        let mut sub = Substrate::new(20.0, 20).unwrap();
        let mut rng = RandomStream::new(4, 0);
        for _ in 0..10_000 {
            let x = rng.uniform() * 20.0;
            assert_eq!(sub.landing_height(x), sub.landing_height_exhaustive(x));
            sub.deposit(x).unwrap();
        }
    }

    #[test]
    fn sequential_geometry_invariants() {
        let ps = deposit_sequential(10.0, 10, 500, 1).unwrap();
        assert_eq!(overlap_violations(&ps, 10.0), 0);
        assert_eq!(unsupported(&ps, 10.0), 0);
        assert!(deposit_sequential(10.0, 10, 0, 1).unwrap().is_empty());
        assert_eq!(ps, deposit_sequential(10.0, 10, 500, 1).unwrap());
    }

    #[test]
    fn mean_height_grows_after_first_layer() {
        // Mean height of particles 50..75 below that of 75..100, averaged over seeds.
        let (mut early, mut late) = (0.0, 0.0);
        for seed in 0..100 {
            let ps = deposit_sequential(10.0, 10, 100, seed).unwrap();
            early += ps[50..75].iter().map(|p| p.z).sum::<f64>();
            late += ps[75..].iter().map(|p| p.z).sum::<f64>();
        }
        assert!(late > early);
    }

    #[test]
    fn cautious_single_sector_is_single_clock() {
        let ring = DepositionRing::new(3.0, 1, 5).unwrap();
        let ps = deposit_parallel_cautious(&ring, 50.0, 1).unwrap();
        assert!(!ps.is_empty());
        assert_eq!(overlap_violations(&ps, 3.0), 0);
        assert_eq!(unsupported(&ps, 3.0), 0);
    }

    #[test]
    fn cautious_workers_identical() {
        let ring = DepositionRing::new(10.0, 10, 7).unwrap();
        let reference = deposit_parallel_cautious(&ring, 30.0, 1).unwrap();
        for workers in [2, 4] {
            assert_eq!(deposit_parallel_cautious(&ring, 30.0, workers).unwrap(), reference);
        }
        let (emulated, _) = deposit_lockstep(&ring, 30.0, None).unwrap();
        assert_eq!(emulated, reference);
        assert_eq!(overlap_violations(&reference, 10.0), 0);
    }

    #[test]
    fn density_profile_conserves_mass() {
        let single = [Particle { m: 0, x: 1.0, z: 0.5 }];
        let prof = DensityProfile::new(&single, 10.0, 4, 3).unwrap();
        assert_eq!(prof.counts[0][0], 1);
        assert_eq!(prof.total(), 1);
        let ps = deposit_sequential(10.0, 10, 300, 2).unwrap();
        assert_eq!(DensityProfile::new(&ps, 10.0, 7, 5).unwrap().total(), 300);
        assert!(DensityProfile::new(&ps, 10.0, 0, 5).is_err());
    }
}
