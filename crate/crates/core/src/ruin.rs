//! The Gambler's Ruin game, its absorption probabilities, and the
//! Fokker–Planck equation `∂ρ/∂t = λ ∂²/∂x² [x(1-x)]^r ρ` for the ensemble of
//! money fractions.

use std::f64::consts::LN_2;

use crate::error::{invalid, require_nonnegative, require_positive, Error, Result};
use crate::rng::RngStream;
use crate::time::step_count;

/// Relative tolerance for deciding that a fraction sits on the stake lattice.
const LATTICE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    L,
    R,
}

/// Rules of one game.
///
/// With `halving = false` the game ends when a player is ruined, so `x0` and
/// the total (1) must both be whole multiples of `stake`. With `halving = true`
/// the stake is halved whenever a player's holdings drop to the current stake
/// or below; nobody is ever ruined and `max_steps` bounds the run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameConfig {
    pub x0: f64,
    pub stake: f64,
    pub halving: bool,
    pub max_steps: Option<u64>,
    /// Keep the purse after every toss in [`GameRecord::trajectory`].
    pub record: bool,
}

impl GameConfig {
    pub fn ruin(x0: f64, stake: f64) -> Self {
        Self {
            x0,
            stake,
            halving: false,
            max_steps: None,
            record: false,
        }
    }

    pub fn never_ending(x0: f64, stake: f64, max_steps: u64) -> Self {
        Self {
            x0,
            stake,
            halving: true,
            max_steps: Some(max_steps),
            record: false,
        }
    }

    pub fn recorded(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.x0) {
            return Err(invalid("x0", format!("must lie in [0, 1], got {}", self.x0)));
        }
        require_positive("stake", self.stake)?;
        if self.stake > 1.0 {
            return Err(invalid("stake", "cannot exceed the total money"));
        }
        if self.halving {
            if self.max_steps.is_none() {
                return Err(invalid("max_steps", "a never-ending game needs a step limit"));
            }
            if self.x0 == 0.0 || self.x0 == 1.0 {
                return Err(invalid("x0", "a never-ending game needs both players solvent"));
            }
        } else {
            lattice_index(self.x0, self.stake)?;
        }
        Ok(())
    }
}

/// Holdings of both players.
///
/// Only the poorer player's holdings are stored exactly, in units of the current
/// stake, together with the number of halvings so far. The richer player's share
/// is the complement, so a tail of `2^-2000` of the money is still representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Purse {
    small: f64,
    halvings: u32,
    small_is_left: bool,
    /// Total money in units of the initial stake.
    total: f64,
}

impl Purse {
    fn new(x0: f64, stake: f64) -> Self {
        Self::from_units(x0 / stake, 1.0 / stake)
    }

    /// L holds `left` of `total` initial stakes.
    fn from_units(left: f64, total: f64) -> Self {
        let mut p = Self {
            small: left,
            halvings: 0,
            small_is_left: true,
            total,
        };
        p.reorient();
        p
    }

    /// Total money in units of the current stake.
    fn total_units(&self) -> f64 {
        self.total * (self.halvings as f64).exp2()
    }

    fn reorient(&mut self) {
        let large = self.total_units() - self.small;
        if self.small > large {
            self.small = large;
            self.small_is_left = !self.small_is_left;
        }
    }

    fn small_fraction(&self) -> f64 {
        (self.ln_small_fraction()).exp()
    }

    fn ln_small_fraction(&self) -> f64 {
        self.small.ln() - self.halvings as f64 * LN_2 - self.total.ln()
    }

    /// Fraction of the money held by L.
    pub fn fraction_left(&self) -> f64 {
        if self.small_is_left {
            self.small_fraction()
        } else {
            1.0 - self.small_fraction()
        }
    }

    pub fn ln_fraction_left(&self) -> f64 {
        if self.small_is_left {
            self.ln_small_fraction()
        } else {
            (-self.small_fraction()).ln_1p()
        }
    }

    pub fn ln_fraction_right(&self) -> f64 {
        if self.small_is_left {
            (-self.small_fraction()).ln_1p()
        } else {
            self.ln_small_fraction()
        }
    }

    /// `ln min(x, 1 - x)`.
    pub fn ln_tail(&self) -> f64 {
        self.ln_small_fraction()
    }

    /// Current stake as a fraction of the total money.
    pub fn stake_fraction(&self) -> f64 {
        1.0 / self.total_units()
    }

    pub fn halvings(&self) -> u32 {
        self.halvings
    }

    fn ruined(&self) -> Option<Player> {
        if self.small > 0.0 {
            None
        } else if self.small_is_left {
            Some(Player::R)
        } else {
            Some(Player::L)
        }
    }

    fn toss(&mut self, left_wins: bool) {
        if left_wins == self.small_is_left {
            self.small += 1.0;
            self.reorient();
        } else {
            self.small -= 1.0;
        }
    }

    fn halve_while_short(&mut self) {
        while self.small <= 1.0 {
            self.small *= 2.0;
            self.halvings += 1;
        }
    }
}

/// Outcome of one game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameRecord {
    /// The player who ended with all the money; `None` if the step limit hit first.
    pub winner: Option<Player>,
    pub steps: u64,
    pub final_purse: Purse,
    /// Purse after each toss, starting with the initial one; empty unless recorded.
    pub trajectory: Vec<Purse>,
}

impl GameRecord {
    pub fn fractions(&self) -> Vec<f64> {
        self.trajectory.iter().map(Purse::fraction_left).collect()
    }
}

/// Plays one game of fair coin tosses, each moving one stake between the players.
pub fn play_game(cfg: &GameConfig, rng: &mut RngStream) -> Result<GameRecord> {
    cfg.validate()?;
    let mut purse = if cfg.halving {
        let mut p = Purse::new(cfg.x0, cfg.stake);
        p.halve_while_short();
        p
    } else {
        let (k, n) = lattice_index(cfg.x0, cfg.stake)?;
        Purse::from_units(k as f64, n as f64)
    };
    let mut trajectory = Vec::new();
    if cfg.record {
        trajectory.push(purse);
    }
    let limit = cfg.max_steps.unwrap_or(u64::MAX);
    let mut steps = 0;
    let mut winner = purse.ruined();
    while winner.is_none() && steps < limit {
        purse.toss(rng.coin());
        if cfg.halving {
            purse.halve_while_short();
        }
        steps += 1;
        winner = purse.ruined();
        if cfg.record {
            trajectory.push(purse);
        }
    }
    Ok(GameRecord {
        winner,
        steps,
        final_purse: purse,
        trajectory,
    })
}

fn lattice_index(x: f64, stake: f64) -> Result<(usize, usize)> {
    let on_lattice = |v: f64| {
        let k = v / stake;
        (k - k.round()).abs() <= LATTICE_TOL * k.max(1.0)
    };
    if !on_lattice(x) || !on_lattice(1.0) {
        return Err(Error::NonIntegralState { x0: x, stake });
    }
    Ok(((x / stake).round() as usize, (1.0 / stake).round() as usize))
}

/// Probability that L wins starting from fraction `x0`, from the difference
/// system `P(x) = ½P(x - s) + ½P(x + s)` with `P(0) = 0`, `P(1) = 1`, solved
/// directly as a tridiagonal linear system.
pub fn ruin_probability(x0: f64, stake: f64) -> Result<f64> {
    require_positive("stake", stake)?;
    if !(0.0..=1.0).contains(&x0) {
        return Err(invalid("x0", format!("must lie in [0, 1], got {x0}")));
    }
    let (k, n) = lattice_index(x0, stake)?;
    if k == 0 || k == n {
        return Ok(if k == 0 { 0.0 } else { 1.0 });
    }
    // unknowns P_1..P_{n-1}: -½P_{i-1} + P_i - ½P_{i+1} = 0, P_n = 1 on the right
    let m = n - 1;
    let mut rhs = vec![0.0; m];
    rhs[m - 1] = 0.5;
    let p = thomas(&vec![-0.5; m], &vec![1.0; m], &vec![-0.5; m], &rhs);
    Ok(p[k - 1])
}

/// Solves a tridiagonal system with sub-diagonal `a`, diagonal `b`, super-diagonal `c`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    cp[0] = c[0] / b[0];
    dp[0] = d[0] / b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        dp[i] = (d[i] - a[i] * dp[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = dp[i] - cp[i] * x[i + 1];
    }
    x
}

/// Probability distribution of the fraction `x` on the nodes `x_i = i/n_x`.
///
/// `rho[i]` is the probability carried by node `i`. Interior nodes stand for the
/// cell `[x_i - h/2, x_i + h/2]`; the end nodes are zero-flux accumulation cells
/// that collect the absorbed mass, which in the continuum is a point mass at 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityProfile {
    n_x: usize,
    lambda: f64,
    r: u32,
    rho: Vec<f64>,
    time: f64,
}

impl DensityProfile {
    pub fn new(n_x: usize, lambda: f64, r: u32, rho: Vec<f64>) -> Result<Self> {
        if n_x < 2 {
            return Err(invalid("n_x", format!("need at least 2 cells, got {n_x}")));
        }
        require_nonnegative("lambda", lambda)?;
        if r < 1 {
            return Err(invalid("r", "exponent must be >= 1"));
        }
        if rho.len() != n_x + 1 {
            return Err(invalid("rho", format!("expected {} nodes, got {}", n_x + 1, rho.len())));
        }
        if rho.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(invalid("rho", "masses must be finite and nonnegative"));
        }
        Ok(Self {
            n_x,
            lambda,
            r,
            rho,
            time: 0.0,
        })
    }

    /// Unit mass on the node nearest `x0`.
    pub fn delta(n_x: usize, lambda: f64, r: u32, x0: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x0) {
            return Err(invalid("x0", format!("must lie in [0, 1], got {x0}")));
        }
        let mut rho = vec![0.0; n_x + 1];
        rho[(x0 * n_x as f64).round() as usize] = 1.0;
        Self::new(n_x, lambda, r, rho)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r(&self) -> u32 {
        self.r
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_x as f64
    }

    /// `[x(1-x)]^r` at node `i`.
    pub fn diffusion_coefficient(&self, i: usize) -> f64 {
        let x = self.node(i);
        (x * (1.0 - x)).powi(self.r as i32)
    }

    /// Largest stable explicit step `h² / (2λ max D)`.
    pub fn stability_bound(&self) -> f64 {
        let d_max = (0..=self.n_x).map(|i| self.diffusion_coefficient(i)).fold(0.0, f64::max);
        self.h() * self.h() / (2.0 * self.lambda * d_max)
    }

    pub fn mass(&self) -> f64 {
        self.rho.iter().sum()
    }

    /// `∫ x ρ dx`.
    pub fn mean(&self) -> f64 {
        self.expect(|x| x)
    }

    /// `∫ x(1-x) ρ dx`.
    pub fn moment(&self) -> f64 {
        self.expect(|x| x * (1.0 - x))
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.expect(|x| (x - m) * (x - m))
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.rho.iter().enumerate().map(|(i, m)| m * f(self.node(i))).sum()
    }

    /// Mass in the accumulation cells at `x = 0` and `x = 1`.
    pub fn boundary_mass(&self) -> (f64, f64) {
        (self.rho[0], self.rho[self.n_x])
    }

    /// Mass inside `[lo, hi]`, counting each interior cell by the fraction of
    /// it that overlaps the interval and each accumulation cell as a point.
    pub fn mass_in(&self, lo: f64, hi: f64) -> f64 {
        let h = self.h();
        let mut total = 0.0;
        for (i, m) in self.rho.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let x = self.node(i);
            let w = if i == 0 || i == self.n_x {
                if (lo..=hi).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            } else {
                let a = (x - 0.5 * h).max(lo);
                let b = (x + 0.5 * h).min(hi);
                ((b - a) / h).max(0.0)
            };
            total += w * m;
        }
        total
    }
}

/// Advances `p` to the absolute time `t_end` with explicit steps of `dt`, using
/// the conservative form `Δm_i = (λdt/h²)(u_{i+1} - 2u_i + u_{i-1})`, `u = Dm`.
///
/// `t_end - p.time()` must be a whole number of steps.
pub fn evolve_diffusion(p: &DensityProfile, dt: f64, t_end: f64) -> Result<DensityProfile> {
    require_positive("dt", dt)?;
    if t_end < p.time {
        return Err(invalid("t_end", format!("{t_end} precedes the profile time {}", p.time)));
    }
    let bound = p.stability_bound();
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::UnstableStep { dt, bound });
    }
    let (n_steps, dt) = step_count(dt, t_end - p.time)?;
    let n = p.n_x;
    let d: Vec<f64> = (0..=n).map(|i| p.diffusion_coefficient(i)).collect();
    let c = p.lambda * dt / (p.h() * p.h());
    let mut m = p.rho.clone();
    let mut u = vec![0.0; n + 1];
    for _ in 0..n_steps {
        for i in 1..n {
            u[i] = d[i] * m[i];
        }
        m[0] += c * u[1];
        m[n] += c * u[n - 1];
        for i in 1..n {
            m[i] += c * (u[i + 1] - 2.0 * u[i] + u[i - 1]);
        }
    }
    Ok(DensityProfile {
        rho: m,
        time: t_end,
        ..p.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absorbing_starts() {
        let mut rng = RngStream::new(1, 0);
        let g = play_game(&GameConfig::ruin(0.0, 0.01), &mut rng).unwrap();
        assert_eq!((g.winner, g.steps), (Some(Player::R), 0));
        let g = play_game(&GameConfig::ruin(1.0, 0.01), &mut rng).unwrap();
        assert_eq!((g.winner, g.steps), (Some(Player::L), 0));
    }

    #[test]
    fn finite_game_ends_on_boundary() {
        let mut rng = RngStream::new(2, 0);
        let g = play_game(&GameConfig::ruin(0.3, 0.1).recorded(), &mut rng).unwrap();
        let x = g.fractions();
        assert_eq!(x.len() as u64, g.steps + 1);
        let last = *x.last().unwrap();
        assert!(last == 0.0 || last == 1.0);
        assert_eq!(g.winner.unwrap() == Player::L, last == 1.0);
        for w in x.windows(2) {
            assert!(((w[1] - w[0]).abs() - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn off_lattice_rejected() {
        assert!(matches!(
            play_game(&GameConfig::ruin(0.305, 0.01), &mut RngStream::new(1, 1)),
            Err(Error::NonIntegralState { .. })
        ));
        assert!(matches!(ruin_probability(0.3, 0.07), Err(Error::NonIntegralState { .. })));
        assert!(play_game(&GameConfig::never_ending(0.305, 0.01, 10), &mut RngStream::new(1, 1)).is_ok());
    }

    #[test]
    fn never_ending_game_keeps_both_players() {
        let cfg = GameConfig::never_ending(0.5, 0.1, 200_000).recorded();
        let g = play_game(&cfg, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(g.winner, None);
        assert_eq!(g.steps, 200_000);
        assert!(g.final_purse.halvings() > 0);
        for p in &g.trajectory {
            assert!(p.ln_tail().is_finite());
            assert!(p.ln_fraction_left() < 0.0 && p.ln_fraction_right() < 0.0);
        }
    }

    #[test]
    fn purse_tail_beyond_underflow() {
        let mut p = Purse::new(0.5, 0.5);
        p.halvings = 3000;
        p.small = 2.0;
        assert!(p.ln_tail() < -2000.0);
        assert!(p.ln_tail().is_finite());
        assert_eq!(p.fraction_left(), 0.0); // plain fraction underflows, ln does not
    }

    #[test]
    fn halving_triggers_at_stake() {
        let mut p = Purse::new(0.1, 0.1);
        p.halve_while_short();
        assert_eq!(p.halvings(), 1);
        assert!((p.stake_fraction() - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ruin_probability_is_linear() {
        assert!((ruin_probability(0.5, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((ruin_probability(0.3, 0.01).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(ruin_probability(0.0, 0.1).unwrap(), 0.0);
        assert_eq!(ruin_probability(1.0, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn delta_initial_condition() {
        let p = DensityProfile::delta(400, 1.0, 1, 0.5).unwrap();
        assert_eq!(p.mean(), 0.5);
        assert_eq!(p.variance(), 0.0);
        assert_eq!(p.mass(), 1.0);
    }

    #[test]
    fn unstable_step_rejected() {
        let p = DensityProfile::delta(100, 1.0, 1, 0.5).unwrap();
        let b = p.stability_bound();
        assert!((b - 2e-4).abs() < 1e-15);
        assert!(matches!(evolve_diffusion(&p, 1.01 * b, 1.0), Err(Error::UnstableStep { .. })));
    }

    #[test]
    fn moment_follows_discrete_decay() {
        // the scheme's x(1-x) moment obeys m_{k+1} = (1 - 2λdt) m_k exactly for r = 1
        let p = DensityProfile::delta(50, 1.0, 1, 0.3).unwrap();
        let dt = 1e-4;
        let q = evolve_diffusion(&p, dt, 0.1).unwrap();
        let expect = 0.21 * (1.0 - 2.0 * dt).powi(1000);
        assert!((q.moment() - expect).abs() < 1e-13);
        assert!((q.mass() - 1.0).abs() < 1e-13);
        assert!((q.mean() - 0.3).abs() < 1e-13);
    }

    #[test]
    fn overlap_weights() {
        let p = DensityProfile::new(4, 1.0, 2, vec![0.1, 0.2, 0.4, 0.2, 0.1]).unwrap();
        // node 1 sits at 0.25 with cell [0.125, 0.375]; half of it is in [0.25, 0.75]
        assert!((p.mass_in(0.25, 0.75) - (0.1 + 0.4 + 0.1)).abs() < 1e-15);
        assert!((p.mass_in(0.0, 1.0) - 1.0).abs() < 1e-15);
    }
}
