//! Population methods. All minimize the normalized cost; the overall best is
//! archived by the search context, so no method can lose it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{perturb, RunError, Search};
use crate::measures::Candidate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaParams {
    pub population: usize,
    pub tournament: usize,
    /// Probability of taking each bit from the first parent.
    pub crossover_bias: f64,
    /// Per-bit flip probability; 1 / catalog size when absent.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            population: 50,
            tournament: 3,
            crossover_bias: 0.5,
            mutation_rate: None,
            elitism: 1,
        }
    }
}

impl GaParams {
    pub(crate) fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Params(format!("ga.{m}")));
        if self.population < 2 {
            return bad("population must be at least 2");
        }
        if self.tournament == 0 {
            return bad("tournament must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.crossover_bias) {
            return bad("crossover_bias must be in [0, 1]");
        }
        if self.mutation_rate.is_some_and(|m| !(0.0..=1.0).contains(&m)) {
            return bad("mutation_rate must be in [0, 1]");
        }
        if self.elitism >= self.population {
            return bad("elitism must be below the population size");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsoParams {
    pub particles: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub max_velocity: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            particles: 30,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            max_velocity: 4.0,
        }
    }
}

impl PsoParams {
    pub(crate) fn validate(&self) -> Result<(), RunError> {
        if self.particles == 0 {
            return Err(RunError::Params("pso.particles must be at least 1".into()));
        }
        if !(self.max_velocity > 0.0) {
            return Err(RunError::Params("pso.max_velocity must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GwoParams {
    pub wolves: usize,
    /// Slope of the logistic map from position to bit probability.
    pub steepness: f64,
}

impl Default for GwoParams {
    fn default() -> Self {
        Self {
            wolves: 30,
            steepness: 10.0,
        }
    }
}

impl GwoParams {
    pub(crate) fn validate(&self) -> Result<(), RunError> {
        if self.wolves == 0 {
            return Err(RunError::Params("gwo.wolves must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FwaParams {
    pub fireworks: usize,
    /// Spark budget per generation, split by fitness.
    pub total_sparks: usize,
    pub min_sparks: usize,
    pub max_sparks: usize,
    /// Flip count of the worst firework as a fraction of the catalog.
    pub max_amplitude: f64,
    /// Flip count of the mutation spark as a fraction of the catalog.
    pub mutation_fraction: f64,
}

impl Default for FwaParams {
    fn default() -> Self {
        Self {
            fireworks: 5,
            total_sparks: 50,
            min_sparks: 2,
            max_sparks: 20,
            max_amplitude: 0.25,
            mutation_fraction: 0.1,
        }
    }
}

impl FwaParams {
    pub(crate) fn validate(&self) -> Result<(), RunError> {
        let bad = |m: &str| Err(RunError::Params(format!("fwa.{m}")));
        if self.fireworks == 0 {
            return bad("fireworks must be at least 1");
        }
        if self.min_sparks == 0 || self.min_sparks > self.max_sparks {
            return bad("need 1 <= min_sparks <= max_sparks");
        }
        if !(self.max_amplitude > 0.0 && self.max_amplitude <= 1.0) {
            return bad("max_amplitude must be in (0, 1]");
        }
        if !(self.mutation_fraction > 0.0 && self.mutation_fraction <= 1.0) {
            return bad("mutation_fraction must be in (0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Member {
    x: Candidate,
    f: f64,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Evaluates the empty candidate and `n - 1` spanning-tree candidates.
/// Returns None when the budget ran out on the way.
fn start_population(s: &mut Search<'_>, n: usize) -> Result<(Option<Vec<Member>>, f64), RunError> {
    let zero = Candidate::zeros(s.len());
    let Some(r) = s.eval(&zero) else {
        return Ok((None, 0.0));
    };
    let mut pop = vec![Member { x: zero, f: r.normalized }];
    if s.len() == 0 {
        return Ok((None, 0.0));
    }
    let (mut seeds, t) = s.initial(n - 1)?;
    if seeds.is_empty() {
        seeds.push(pop[0].x.clone());
    }
    for k in 0..n - 1 {
        let x = seeds[k % seeds.len()].clone();
        let Some(r) = s.eval(&x) else {
            return Ok((None, t));
        };
        pop.push(Member { x, f: r.normalized });
    }
    Ok((Some(pop), t))
}

fn argmin(pop: &[Member]) -> usize {
    (0..pop.len())
        .min_by(|&a, &b| pop[a].f.total_cmp(&pop[b].f).then(a.cmp(&b)))
        .expect("non-empty population")
}

pub(crate) fn genetic(s: &mut Search<'_>, p: &GaParams) -> Result<f64, RunError> {
    let (pop, t) = start_population(s, p.population)?;
    let Some(mut pop) = pop else {
        return Ok(t);
    };
    let m = s.len();
    let rate = p.mutation_rate.unwrap_or(1.0 / m as f64);
    while !s.done() {
        let mut order: Vec<usize> = (0..pop.len()).collect();
        order.sort_by(|&a, &b| pop[a].f.total_cmp(&pop[b].f).then(a.cmp(&b)));
        let mut next: Vec<Member> = order[..p.elitism].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < p.population {
            let pick = |s: &mut Search<'_>| {
                (0..p.tournament)
                    .map(|_| s.rng.random_range(0..pop.len()))
                    .min_by(|&a, &b| pop[a].f.total_cmp(&pop[b].f).then(a.cmp(&b)))
                    .expect("tournament size >= 1")
            };
            let (a, b) = (pick(s), pick(s));
            let mut child = pop[b].x.clone();
            for i in 0..m {
                if s.rng.random_bool(p.crossover_bias) {
                    child.set(i, pop[a].x.get(i));
                }
                if s.rng.random_bool(rate) {
                    child.flip(i);
                }
            }
            let Some(r) = s.eval(&child) else {
                return Ok(t);
            };
            next.push(Member { x: child, f: r.normalized });
        }
        pop = next;
    }
    Ok(t)
}

pub(crate) fn particle_swarm(s: &mut Search<'_>, p: &PsoParams) -> Result<f64, RunError> {
    let (pop, t) = start_population(s, p.particles)?;
    let Some(pop) = pop else {
        return Ok(t);
    };
    let m = s.len();
    let vmax = p.max_velocity;
    let mut x: Vec<Candidate> = pop.iter().map(|mb| mb.x.clone()).collect();
    let mut v: Vec<Vec<f64>> = (0..pop.len())
        .map(|_| (0..m).map(|_| s.rng.random_range(-vmax..=vmax)).collect())
        .collect();
    let mut pbest = pop;
    let mut g = pbest[argmin(&pbest)].clone();
    while !s.done() {
        for k in 0..x.len() {
            for d in 0..m {
                let bit = |c: &Candidate| f64::from(u8::from(c.get(d)));
                let (r1, r2): (f64, f64) = (s.rng.random(), s.rng.random());
                let xd = bit(&x[k]);
                let vel = p.inertia * v[k][d]
                    + p.cognitive * r1 * (bit(&pbest[k].x) - xd)
                    + p.social * r2 * (bit(&g.x) - xd);
                v[k][d] = vel.clamp(-vmax, vmax);
                let on = s.rng.random::<f64>() < sigmoid(v[k][d]);
                x[k].set(d, on);
            }
            let Some(r) = s.eval(&x[k]) else {
                return Ok(t);
            };
            if r.normalized < pbest[k].f {
                pbest[k] = Member { x: x[k].clone(), f: r.normalized };
            }
        }
        let b = argmin(&pbest);
        if pbest[b].f < g.f {
            g = pbest[b].clone();
        }
    }
    Ok(t)
}

pub(crate) fn grey_wolf(s: &mut Search<'_>, p: &GwoParams) -> Result<f64, RunError> {
    let (pop, t) = start_population(s, p.wolves)?;
    let Some(pop) = pop else {
        return Ok(t);
    };
    let m = s.len();
    let mut pos: Vec<Vec<f64>> = pop
        .iter()
        .map(|mb| mb.x.bits().iter().map(|&b| f64::from(u8::from(b))).collect())
        .collect();
    // alpha, beta, delta: best three distinct candidates seen so far
    let mut leaders: Vec<Member> = Vec::new();
    let offer = |leaders: &mut Vec<Member>, mb: &Member| {
        if leaders.iter().any(|l| l.x == mb.x) {
            return;
        }
        leaders.push(mb.clone());
        leaders.sort_by(|a, b| a.f.total_cmp(&b.f));
        leaders.truncate(3);
    };
    for mb in &pop {
        offer(&mut leaders, mb);
    }
    while !s.done() {
        let a = 2.0 * (1.0 - s.progress());
        for w in 0..pos.len() {
            let mut x = Candidate::zeros(m);
            for d in 0..m {
                let mut sum = 0.0;
                for l in 0..3 {
                    let lead = f64::from(u8::from(leaders[l.min(leaders.len() - 1)].x.get(d)));
                    let (r1, r2): (f64, f64) = (s.rng.random(), s.rng.random());
                    let big_a = 2.0 * a * r1 - a;
                    let c = 2.0 * r2;
                    sum += lead - big_a * (c * lead - pos[w][d]).abs();
                }
                let xd = (sum / 3.0).clamp(0.0, 1.0);
                pos[w][d] = xd;
                x.set(d, s.rng.random::<f64>() < sigmoid(p.steepness * (xd - 0.5)));
            }
            let Some(r) = s.eval(&x) else {
                return Ok(t);
            };
            offer(&mut leaders, &Member { x, f: r.normalized });
        }
    }
    Ok(t)
}

pub(crate) fn fireworks(s: &mut Search<'_>, p: &FwaParams) -> Result<f64, RunError> {
    let (pop, t) = start_population(s, p.fireworks)?;
    let Some(mut fw) = pop else {
        return Ok(t);
    };
    let m = s.len();
    let max_flips = ((m as f64 * p.max_amplitude).ceil() as usize).clamp(1, m);
    let mutation_flips = ((m as f64 * p.mutation_fraction).round() as usize).clamp(1, m);
    let eps = 1e-12;
    while !s.done() {
        let n = fw.len();
        let fmax = fw.iter().map(|f| f.f).fold(f64::NEG_INFINITY, f64::max);
        let slack_sum: f64 = fw.iter().map(|f| fmax - f.f).sum();
        let mut rank: Vec<usize> = (0..n).collect();
        rank.sort_by(|&a, &b| fw[a].f.total_cmp(&fw[b].f).then(a.cmp(&b)));
        let mut pool = fw.clone();
        for (r, &i) in rank.iter().enumerate() {
            let share = (fmax - fw[i].f + eps) / (slack_sum + n as f64 * eps);
            let sparks = ((p.total_sparks as f64 * share).round() as usize).clamp(p.min_sparks, p.max_sparks);
            let flips = if n > 1 {
                1 + ((max_flips - 1) as f64 * r as f64 / (n - 1) as f64).round() as usize
            } else {
                max_flips
            };
            for k in 0..=sparks {
                // the last spark is the mutation spark
                let kflips = if k == sparks { mutation_flips } else { flips };
                let x = perturb(&fw[i].x, kflips, &mut s.rng)?;
                let Some(res) = s.eval(&x) else {
                    return Ok(t);
                };
                pool.push(Member { x, f: res.normalized });
            }
        }
        // keep the best, then sample by summed distance to the rest of the pool
        let best = argmin(&pool);
        let mut chosen = vec![pool.swap_remove(best)];
        while chosen.len() < p.fireworks && !pool.is_empty() {
            let w: Vec<f64> = pool
                .iter()
                .map(|a| pool.iter().chain(&chosen).map(|b| a.x.hamming(&b.x) as f64).sum())
                .collect();
            let total: f64 = w.iter().sum();
            let pick = if total > 0.0 {
                let mut u = s.rng.random::<f64>() * total;
                w.iter()
                    .position(|&wi| {
                        u -= wi;
                        u < 0.0
                    })
                    .unwrap_or(pool.len() - 1)
            } else {
                s.rng.random_range(0..pool.len())
            };
            chosen.push(pool.swap_remove(pick));
        }
        fw = chosen;
    }
    Ok(t)
}
