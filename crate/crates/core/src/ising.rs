//! Kinetic Ising model on a periodic square lattice.
//!
//! A site's flip rate depends only on its own spin and the sum of its four
//! neighbor spins, so there are at most ten distinct rates. The dispenser
//! picks the flipping site either through the sum tree or through the rate
//! class table; the uniformized variant picks sites uniformly and accepts
//! with probability `r_i / r_*`.

use crate::dispenser::{Delegator, RateClassTable, RateTree, UniformizedSampler};
use crate::error::{Result, SimError};
use crate::rng::RandomStream;

/// Number of `(spin, neighbor sum)` combinations on the square lattice.
pub const RATE_CLASSES: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IsingParams {
    pub temperature: f64,
    pub field: f64,
    pub rate_scale: f64,
}

impl IsingParams {
    pub fn new(temperature: f64, field: f64) -> Result<Self> {
        let p = Self {
            temperature,
            field,
            rate_scale: 1.0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_rate_scale(mut self, rate_scale: f64) -> Result<Self> {
        self.rate_scale = rate_scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(SimError::InvalidParameter(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !self.field.is_finite() {
            return Err(SimError::InvalidParameter("field must be finite".into()));
        }
        if !(self.rate_scale > 0.0) || !self.rate_scale.is_finite() {
            return Err(SimError::NonPositiveRate(self.rate_scale));
        }
        Ok(())
    }
}

/// Metropolis flip rate `scale * exp(-max(dE, 0) / T)` with
/// `dE = 2 s (k + h)`.
pub fn flip_rate(spin: i8, neighbor_sum: i32, params: &IsingParams) -> Result<f64> {
    params.validate()?;
    if spin != 1 && spin != -1 {
        return Err(SimError::InvalidParameter(format!("spin {spin} is not +1 or -1")));
    }
    if !(-4..=4).contains(&neighbor_sum) || neighbor_sum % 2 != 0 {
        return Err(SimError::InvalidParameter(format!(
            "neighbor sum {neighbor_sum} not in {{-4, -2, 0, 2, 4}}"
        )));
    }
    let de = 2.0 * f64::from(spin) * (f64::from(neighbor_sum) + params.field);
    Ok(params.rate_scale * (-de.max(0.0) / params.temperature).exp())
}

/// Class index of `(spin, neighbor sum)` in `0..10`.
pub fn rate_class(spin: i8, neighbor_sum: i32) -> usize {
    let k = ((neighbor_sum + 4) / 2) as usize;
    if spin > 0 {
        5 + k
    } else {
        k
    }
}

/// Flip rate of every class, indexed by [`rate_class`].
pub fn class_rates(params: &IsingParams) -> Result<[f64; RATE_CLASSES]> {
    let mut table = [0.0; RATE_CLASSES];
    for spin in [-1i8, 1] {
        for k in [-4, -2, 0, 2, 4] {
            table[rate_class(spin, k)] = flip_rate(spin, k, params)?;
        }
    }
    Ok(table)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpinLattice {
    n: usize,
    spins: Vec<i8>,
}

impl SpinLattice {
    /// `n x n` lattice with every spin equal to `spin`.
    pub fn uniform(n: usize, spin: i8) -> Result<Self> {
        Self::from_spins(n, vec![spin; n * n])
    }

    pub fn random(n: usize, seed: u64) -> Result<Self> {
        let mut rng = RandomStream::new(seed, u64::MAX);
        let spins = (0..n * n)
            .map(|_| if rng.next_u64() & 1 == 0 { 1 } else { -1 })
            .collect();
        Self::from_spins(n, spins)
    }

    /// Row-major spins.
    pub fn from_spins(n: usize, spins: Vec<i8>) -> Result<Self> {
        if n == 0 {
            return Err(SimError::InvalidParameter("lattice side must be positive".into()));
        }
        if spins.len() != n * n {
            return Err(SimError::InvalidParameter(format!(
                "expected {} spins, got {}",
                n * n,
                spins.len()
            )));
        }
        if let Some(s) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(SimError::InvalidParameter(format!("spin {s} is not +1 or -1")));
        }
        Ok(Self { n, spins })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn spin(&self, i: usize) -> i8 {
        self.spins[i]
    }

    /// North, East, South, West with periodic wrap.
    pub fn neighbors(&self, i: usize) -> [usize; 4] {
        let n = self.n;
        let (r, c) = (i / n, i % n);
        [
            ((r + n - 1) % n) * n + c,
            r * n + (c + 1) % n,
            ((r + 1) % n) * n + c,
            r * n + (c + n - 1) % n,
        ]
    }

    pub fn neighbor_sum(&self, i: usize) -> i32 {
        self.neighbors(i).iter().map(|&j| i32::from(self.spins[j])).sum()
    }

    pub fn class_of(&self, i: usize) -> usize {
        rate_class(self.spins[i], self.neighbor_sum(i))
    }

    pub fn magnetization(&self) -> i64 {
        self.spins.iter().map(|&s| i64::from(s)).sum()
    }

    pub fn flip(&mut self, i: usize) {
        self.spins[i] = -self.spins[i];
    }

    /// Every spin negated.
    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            spins: self.spins.iter().map(|&s| -s).collect(),
        }
    }

    /// Bit `i` set when site `i` is up.
    pub fn state_index(&self) -> usize {
        self.spins
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(i, _)| 1 << i)
            .sum()
    }

    /// One row of comma-separated spins per lattice row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.spins.chunks(self.n) {
            let cells: Vec<String> = row.iter().map(|s| s.to_string()).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KmcVariant {
    Tree,
    Class,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IsingTrajectory {
    /// Time of every flip (event-driven runs) or update index (uniformized).
    pub times: Vec<f64>,
    pub sites: Vec<usize>,
    /// Magnetization right after each flip.
    pub magnetization: Vec<i64>,
    pub initial_magnetization: i64,
    pub final_lattice: SpinLattice,
    /// Selection work: tree nodes or class slots visited.
    pub selection_visits: u64,
    pub selections: u64,
    /// Rate updates issued after flips.
    pub rate_updates: u64,
}

impl IsingTrajectory {
    pub fn flips(&self) -> usize {
        self.sites.len()
    }

    pub fn visits_per_selection(&self) -> f64 {
        if self.selections == 0 {
            0.0
        } else {
            self.selection_visits as f64 / self.selections as f64
        }
    }

    /// `time,magnetization`, starting with the initial value at 0.
    pub fn magnetization_csv(&self) -> String {
        let mut out = format!("time,magnetization\n0,{}\n", self.initial_magnetization);
        for (t, m) in self.times.iter().zip(&self.magnetization) {
            out.push_str(&format!("{t},{m}\n"));
        }
        out
    }
}

enum Picker {
    Tree(RateTree),
    Class(RateClassTable),
}

/// Event-driven kinetic Monte Carlo up to `horizon`.
pub fn run_dispenser_kmc(
    lattice: &SpinLattice,
    params: &IsingParams,
    horizon: f64,
    stream: &mut RandomStream,
    variant: KmcVariant,
) -> Result<IsingTrajectory> {
    let table = class_rates(params)?;
    let mut lat = lattice.clone();
    let classes: Vec<usize> = (0..lat.len()).map(|i| lat.class_of(i)).collect();
    let mut picker = match variant {
        KmcVariant::Tree => {
            let rates: Vec<f64> = classes.iter().map(|&c| table[c]).collect();
            Picker::Tree(RateTree::from_rates(&rates)?)
        }
        KmcVariant::Class => Picker::Class(RateClassTable::new(&table, &classes)?),
    };
    let mut traj = IsingTrajectory {
        times: Vec::new(),
        sites: Vec::new(),
        magnetization: Vec::new(),
        initial_magnetization: lat.magnetization(),
        final_lattice: lat.clone(),
        selection_visits: 0,
        selections: 0,
        rate_updates: 0,
    };
    let mut t = 0.0;
    let mut m = traj.initial_magnetization;
    loop {
        let total = match &picker {
            Picker::Tree(tree) => tree.total(),
            Picker::Class(ct) => ct.total(),
        };
        if !(total > 0.0) {
            break;
        }
        t += stream.exp(total)?;
        if t > horizon {
            break;
        }
        let site = match &picker {
            Picker::Tree(tree) => tree.select_leaf(stream.uniform())?,
            Picker::Class(ct) => {
                let q1 = stream.uniform();
                ct.select(q1, stream.uniform())?
            }
        };
        lat.flip(site);
        m += 2 * i64::from(lat.spin(site));
        let [a, b, c, d] = lat.neighbors(site);
        for j in [site, a, b, c, d] {
            let class = lat.class_of(j);
            match &mut picker {
                Picker::Tree(tree) => {
                    tree.update(j, table[class])?;
                }
                Picker::Class(ct) => ct.class_move(j, class)?,
            }
            traj.rate_updates += 1;
        }
        traj.times.push(t);
        traj.sites.push(site);
        traj.magnetization.push(m);
    }
    match &picker {
        Picker::Tree(tree) => {
            traj.selection_visits = tree.node_visits();
            traj.selections = tree.selections();
        }
        Picker::Class(ct) => {
            traj.selection_visits = ct.class_visits();
            traj.selections = ct.selections();
        }
    }
    traj.final_lattice = lat;
    Ok(traj)
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniformizedTrajectory {
    /// Accepted flips; `times` holds the 1-based update index of each.
    pub flips: IsingTrajectory,
    pub updates: u64,
    /// Sum over updates of `r_i / r_*` for the chosen site.
    pub acceptance_probability_sum: f64,
    pub bound: f64,
}

impl UniformizedTrajectory {
    pub fn acceptance_fraction(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.flips.flips() as f64 / self.updates as f64
        }
    }

    pub fn mean_acceptance_probability(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.acceptance_probability_sum / self.updates as f64
        }
    }
}

/// Random sequential updates with acceptance `r_i / r_*`, where `r_*` is the
/// largest class rate.
pub fn run_uniformized(
    lattice: &SpinLattice,
    params: &IsingParams,
    update_count: u64,
    stream: &mut RandomStream,
) -> Result<UniformizedTrajectory> {
    let table = class_rates(params)?;
    let bound = table.iter().copied().fold(0.0, f64::max);
    let mut lat = lattice.clone();
    let rates: Vec<f64> = (0..lat.len()).map(|i| table[lat.class_of(i)]).collect();
    let mut sampler = UniformizedSampler::new(bound, rates)?;
    let mut flips = IsingTrajectory {
        times: Vec::new(),
        sites: Vec::new(),
        magnetization: Vec::new(),
        initial_magnetization: lat.magnetization(),
        final_lattice: lat.clone(),
        selection_visits: 0,
        selections: 0,
        rate_updates: 0,
    };
    let mut m = flips.initial_magnetization;
    let mut prob_sum = 0.0;
    for step in 1..=update_count {
        let (site, accepted) = sampler.step(stream)?;
        flips.selections += 1;
        flips.selection_visits += 1;
        prob_sum += sampler.rates()[site] / bound;
        if !accepted {
            continue;
        }
        lat.flip(site);
        m += 2 * i64::from(lat.spin(site));
        let [a, b, c, d] = lat.neighbors(site);
        for j in [site, a, b, c, d] {
            sampler.set_rate(j, table[lat.class_of(j)])?;
            flips.rate_updates += 1;
        }
        flips.times.push(step as f64);
        flips.sites.push(site);
        flips.magnetization.push(m);
    }
    flips.final_lattice = lat;
    Ok(UniformizedTrajectory {
        flips,
        updates: update_count,
        acceptance_probability_sum: prob_sum,
        bound,
    })
}

/// Time spent in each of the `2^N` spin configurations of a small lattice
/// over `[0, horizon]`.
pub fn occupation_times(lattice: &SpinLattice, traj: &IsingTrajectory, horizon: f64) -> Vec<f64> {
    assert!(lattice.len() <= 16, "occupation table limited to 16 sites");
    let mut occ = vec![0.0; 1 << lattice.len()];
    let mut state = lattice.state_index();
    let mut last = 0.0;
    for (&t, &site) in traj.times.iter().zip(&traj.sites) {
        occ[state] += t - last;
        state ^= 1 << site;
        last = t;
    }
    occ[state] += horizon - last;
    occ
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(t: f64, h: f64) -> IsingParams {
        IsingParams::new(t, h).unwrap()
    }

    #[test]
    fn at_most_ten_rates() {
        for (t, h) in [(1.0, 0.0), (2.269, 0.3), (0.5, -1.7)] {
            let mut table = class_rates(&params(t, h)).unwrap().to_vec();
            table.sort_by(f64::total_cmp);
            table.dedup();
            assert!(table.len() <= RATE_CLASSES);
        }
        // Downhill moves share the clamped rate; the five uphill ones differ.
        let p = params(1.0, 4.5);
        let mut table = class_rates(&p).unwrap().to_vec();
        table.sort_by(f64::total_cmp);
        table.dedup();
        assert_eq!(table.len(), 6);
    }

    #[test]
    fn zero_field_symmetry_and_clamp() {
        let p = params(1.3, 0.0);
        for k in [-4, -2, 0, 2, 4] {
            assert_eq!(flip_rate(1, k, &p).unwrap(), flip_rate(-1, -k, &p).unwrap());
        }
        assert_eq!(flip_rate(1, -2, &p).unwrap(), 1.0);
        assert_eq!(flip_rate(-1, 0, &p).unwrap(), 1.0);
        assert!((flip_rate(1, 4, &p).unwrap() - (-8.0f64 / 1.3).exp()).abs() < 1e-15);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(IsingParams::new(0.0, 0.0).is_err());
        assert!(IsingParams::new(-1.0, 0.0).is_err());
        let p = params(1.0, 0.0);
        assert!(flip_rate(0, 0, &p).is_err());
        assert!(flip_rate(1, 3, &p).is_err());
        assert!(flip_rate(1, 6, &p).is_err());
        assert!(SpinLattice::from_spins(2, vec![1, 1, 1]).is_err());
    }

    #[test]
    fn neighbors_symmetric_and_periodic() {
        let lat = SpinLattice::uniform(5, 1).unwrap();
        for i in 0..lat.len() {
            for j in lat.neighbors(i) {
                assert!(lat.neighbors(j).contains(&i));
            }
        }
        assert_eq!(lat.neighbors(0), [20, 1, 5, 4]);
    }

    #[test]
    fn variants_refresh_five_sites_per_flip() {
        let lat = SpinLattice::random(8, 3).unwrap();
        let p = params(2.0, 0.1);
        for v in [KmcVariant::Tree, KmcVariant::Class] {
            let traj = run_dispenser_kmc(&lat, &p, 5.0, &mut RandomStream::new(1, 0), v).unwrap();
            assert!(traj.flips() > 100);
            assert_eq!(traj.rate_updates, 5 * traj.flips() as u64);
            assert_eq!(traj.final_lattice.magnetization(), *traj.magnetization.last().unwrap());
        }
    }

    #[test]
    fn infinite_temperature_has_no_rejections() {
        let lat = SpinLattice::random(6, 1).unwrap();
        let run = run_uniformized(&lat, &params(1e300, 0.0), 2000, &mut RandomStream::new(2, 0)).unwrap();
        assert_eq!(run.flips.flips(), 2000);
    }

    #[test]
    fn mirrored_lattice_gives_negated_trace() {
        let lat = SpinLattice::random(6, 9).unwrap();
        let p = params(1.5, 0.0);
        let a = run_dispenser_kmc(&lat, &p, 10.0, &mut RandomStream::new(4, 0), KmcVariant::Tree).unwrap();
        let b = run_dispenser_kmc(&lat.negated(), &p, 10.0, &mut RandomStream::new(4, 0), KmcVariant::Tree)
            .unwrap();
        assert_eq!(a.sites, b.sites);
        assert!(a.magnetization.iter().zip(&b.magnetization).all(|(x, y)| *x == -*y));
        assert_eq!(a.final_lattice.negated(), b.final_lattice);
    }

    #[test]
    fn occupation_sums_to_horizon() {
        let lat = SpinLattice::uniform(2, 1).unwrap();
        let traj = run_dispenser_kmc(&lat, &params(1.0, 0.0), 50.0, &mut RandomStream::new(0, 0), KmcVariant::Class)
            .unwrap();
        let occ = occupation_times(&lat, &traj, 50.0);
        assert!((occ.iter().sum::<f64>() - 50.0).abs() < 1e-9);
        assert_eq!(lat.state_index(), 15);
    }
}
