//! Model parameters, payoffs and game specifications.
//!
//! The state process is a geometric Brownian motion on `(0, ∞)`,
//! `dX = μX dt + σX dW`, discounted at rate `r`. All types here are plain
//! immutable values.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Errors raised while validating model inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("volatility must be positive, got {0}")]
    NonPositiveSigma(f64),
    #[error("drift must be strictly below the discount rate (mu = {mu}, r = {r})")]
    DriftNotBelowRate { mu: f64, r: f64 },
    #[error("discount rate must be non-negative, got {0}")]
    NegativeRate(f64),
    #[error("a zero discount rate is not supported by the closed-form solvers")]
    ZeroRate,
    #[error("{0} must be finite")]
    NonFinite(&'static str),
    #[error("strike must be positive and finite, got {0}")]
    InvalidStrike(f64),
    #[error("state must be positive and finite, got {0}")]
    InvalidState(f64),
    #[error("competition probability must lie in (0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("at least one player must face uncertain competition (p1 = p2 = 1)")]
    CertainCompetition,
    #[error("player {player}: consolation payoff {h} is not dominated by {g}")]
    PayoffDominance { player: u8, g: Payoff, h: Payoff },
    #[error("solvers require p1 <= p2 (p1 = {p1}, p2 = {p2})")]
    UnorderedProbabilities { p1: f64, p2: f64 },
    #[error("cannot parse payoff '{0}' (expected call:K, put:K or zero)")]
    PayoffSyntax(String),
}

/// Drift, volatility and discount rate of the underlying GBM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    mu: f64,
    sigma: f64,
    r: f64,
}

/// Validates raw parameters. Requires `σ > 0`, `r > 0` and `μ < r`.
pub fn validate(mu: f64, sigma: f64, r: f64) -> Result<ModelParams, ModelError> {
    if !mu.is_finite() {
        return Err(ModelError::NonFinite("mu"));
    }
    if !sigma.is_finite() {
        return Err(ModelError::NonFinite("sigma"));
    }
    if !r.is_finite() {
        return Err(ModelError::NonFinite("r"));
    }
    if sigma <= 0.0 {
        return Err(ModelError::NonPositiveSigma(sigma));
    }
    if r < 0.0 {
        return Err(ModelError::NegativeRate(r));
    }
    if mu >= r {
        return Err(ModelError::DriftNotBelowRate { mu, r });
    }
    if r == 0.0 {
        return Err(ModelError::ZeroRate);
    }
    Ok(ModelParams { mu, sigma, r })
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, r: f64) -> Result<Self, ModelError> {
        validate(mu, sigma, r)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn roots(&self) -> Roots {
        characteristic_roots(self)
    }

    /// Left-hand side of `(σ²/2) z(z−1) + μz − r = 0`.
    pub fn characteristic(&self, z: f64) -> f64 {
        0.5 * self.sigma * self.sigma * z * (z - 1.0) + self.mu * z - self.r
    }
}

/// Roots of the characteristic quadratic: `gamma > 1` and `eta < 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Roots {
    pub gamma: f64,
    pub eta: f64,
}

impl Roots {
    /// Increasing fundamental solution `x^γ`.
    pub fn psi(&self, x: f64) -> f64 {
        x.powf(self.gamma)
    }

    /// Decreasing fundamental solution `x^η`.
    pub fn phi(&self, x: f64) -> f64 {
        x.powf(self.eta)
    }
}

/// Solves `(σ²/2) z² + (μ − σ²/2) z − r = 0`.
///
/// The larger-magnitude root comes from the cancellation-free branch of the
/// quadratic formula and the other from Vieta's product `−2r/σ²`; with tiny
/// volatilities the textbook formula loses most of its digits.
pub fn characteristic_roots(params: &ModelParams) -> Roots {
    let a = 0.5 * params.sigma * params.sigma;
    let b = params.mu - a;
    let c = -params.r;
    let disc = (b * b - 4.0 * a * c).sqrt();
    let q = -0.5 * (b + b.signum() * disc);
    let q = if b == 0.0 { -0.5 * disc } else { q };
    let (z1, z2) = (q / a, c / q);
    let (gamma, eta) = if z1 > z2 { (z1, z2) } else { (z2, z1) };
    Roots { gamma, eta }
}

/// Payoff function of a player: `(x−K)⁺`, `(K−x)⁺` or identically zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payoff {
    Call { strike: f64 },
    Put { strike: f64 },
    Zero,
}

impl Payoff {
    pub fn call(strike: f64) -> Result<Self, ModelError> {
        check_strike(strike)?;
        Ok(Payoff::Call { strike })
    }

    pub fn put(strike: f64) -> Result<Self, ModelError> {
        check_strike(strike)?;
        Ok(Payoff::Put { strike })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Payoff::Call { strike } => (x - strike).max(0.0),
            Payoff::Put { strike } => (strike - x).max(0.0),
            Payoff::Zero => 0.0,
        }
    }

    /// One-sided derivative from the left.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Payoff::Call { strike } if x > strike => 1.0,
            Payoff::Put { strike } if x <= strike => -1.0,
            _ => 0.0,
        }
    }

    pub fn strike(&self) -> Option<f64> {
        match *self {
            Payoff::Call { strike } | Payoff::Put { strike } => Some(strike),
            Payoff::Zero => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Payoff::Zero)
    }

    /// Exact pointwise check of `self ≥ other` on `(0, ∞)`.
    pub fn dominates(&self, other: &Payoff) -> bool {
        match (*self, *other) {
            (_, Payoff::Zero) => true,
            (Payoff::Call { strike: k }, Payoff::Call { strike: l }) => l >= k,
            (Payoff::Put { strike: k }, Payoff::Put { strike: l }) => l <= k,
            _ => false,
        }
    }
}

fn check_strike(strike: f64) -> Result<(), ModelError> {
    if strike.is_finite() && strike > 0.0 {
        Ok(())
    } else {
        Err(ModelError::InvalidStrike(strike))
    }
}

impl fmt::Display for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call { strike } => write!(f, "call:{strike}"),
            Payoff::Put { strike } => write!(f, "put:{strike}"),
            Payoff::Zero => f.write_str("zero"),
        }
    }
}

impl FromStr for Payoff {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("zero") {
            return Ok(Payoff::Zero);
        }
        let (kind, strike) = s
            .split_once(':')
            .ok_or_else(|| ModelError::PayoffSyntax(s.to_string()))?;
        let strike: f64 = strike
            .trim()
            .parse()
            .map_err(|_| ModelError::PayoffSyntax(s.to_string()))?;
        match kind.trim().to_ascii_lowercase().as_str() {
            "call" => Payoff::call(strike),
            "put" => Payoff::put(strike),
            _ => Err(ModelError::PayoffSyntax(s.to_string())),
        }
    }
}

/// Payoffs and competition probability of one player.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlayerSpec {
    /// Payoff when stopping first.
    pub g: Payoff,
    /// Consolation payoff after being forestalled.
    pub h: Payoff,
    /// Probability that this player faces an active competitor.
    pub p: f64,
}

impl PlayerSpec {
    pub fn new(g: Payoff, h: Payoff, p: f64) -> Self {
        PlayerSpec { g, h, p }
    }
}

/// A complete two-player game.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameSpec {
    params: ModelParams,
    x0: f64,
    player1: PlayerSpec,
    player2: PlayerSpec,
}

impl GameSpec {
    pub fn new(
        params: ModelParams,
        x0: f64,
        player1: PlayerSpec,
        player2: PlayerSpec,
    ) -> Result<Self, ModelError> {
        if !(x0.is_finite() && x0 > 0.0) {
            return Err(ModelError::InvalidState(x0));
        }
        for (idx, pl) in [(1u8, &player1), (2u8, &player2)] {
            if !(pl.p > 0.0 && pl.p <= 1.0) {
                return Err(ModelError::InvalidProbability(pl.p));
            }
            if !pl.g.dominates(&pl.h) {
                return Err(ModelError::PayoffDominance {
                    player: idx,
                    g: pl.g,
                    h: pl.h,
                });
            }
        }
        if player1.p.min(player2.p) >= 1.0 {
            return Err(ModelError::CertainCompetition);
        }
        Ok(GameSpec {
            params,
            x0,
            player1,
            player2,
        })
    }

    /// Symmetric game: both players share `g` and `h`.
    pub fn symmetric(
        params: ModelParams,
        x0: f64,
        g: Payoff,
        h: Payoff,
        p1: f64,
        p2: f64,
    ) -> Result<Self, ModelError> {
        GameSpec::new(
            params,
            x0,
            PlayerSpec::new(g, h, p1),
            PlayerSpec::new(g, h, p2),
        )
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn player1(&self) -> &PlayerSpec {
        &self.player1
    }

    pub fn player2(&self) -> &PlayerSpec {
        &self.player2
    }

    pub fn player(&self, which: Player) -> &PlayerSpec {
        match which {
            Player::One => &self.player1,
            Player::Two => &self.player2,
        }
    }

    pub fn p1(&self) -> f64 {
        self.player1.p
    }

    pub fn p2(&self) -> f64 {
        self.player2.p
    }

    pub fn is_symmetric(&self) -> bool {
        self.player1.g == self.player2.g && self.player1.h == self.player2.h
    }

    /// The constructive solvers all assume the less exposed player is Player 1.
    pub fn require_ordered(&self) -> Result<(), ModelError> {
        if self.player1.p <= self.player2.p {
            Ok(())
        } else {
            Err(ModelError::UnorderedProbabilities {
                p1: self.player1.p,
                p2: self.player2.p,
            })
        }
    }

    pub fn with_x0(&self, x0: f64) -> Result<Self, ModelError> {
        GameSpec::new(self.params, x0, self.player1, self.player2)
    }

    pub fn with_probabilities(&self, p1: f64, p2: f64) -> Result<Self, ModelError> {
        let mut one = self.player1;
        let mut two = self.player2;
        one.p = p1;
        two.p = p2;
        GameSpec::new(self.params, self.x0, one, two)
    }
}

/// Player index. Player 2 has priority on simultaneous stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn index(self) -> u8 {
        match self {
            Player::One => 1,
            Player::Two => 2,
        }
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validate_accepts_drifting_parameters() {
        assert!(validate(0.08, 0.01, 0.1).is_ok());
        assert!(validate(0.0, 1.4142135, 2.0).is_ok());
    }

    #[test]
    fn validate_rejects_bad_inputs() {
        assert_eq!(
            validate(0.1, 0.01, 0.1),
            Err(ModelError::DriftNotBelowRate { mu: 0.1, r: 0.1 })
        );
        assert_eq!(validate(0.0, 0.0, 0.1), Err(ModelError::NonPositiveSigma(0.0)));
        assert_eq!(validate(-1.0, 0.2, -0.1), Err(ModelError::NegativeRate(-0.1)));
        assert_eq!(validate(-0.1, 0.2, 0.0), Err(ModelError::ZeroRate));
        assert_eq!(validate(f64::NAN, 0.2, 0.1), Err(ModelError::NonFinite("mu")));
    }

    #[test]
    fn roots_of_factorable_quadratic() {
        let params = validate(0.0, 2f64.sqrt(), 2.0).unwrap();
        let roots = characteristic_roots(&params);
        assert!((roots.gamma - 2.0).abs() < 1e-12);
        assert!((roots.eta + 1.0).abs() < 1e-12);
    }

    #[test]
    fn roots_for_tiny_volatility() {
        let params = validate(0.08, 0.01, 0.1).unwrap();
        let roots = characteristic_roots(&params);
        // z^2 + 1599 z - 2000 = 0 after scaling by 2/sigma^2.
        let disc = (1599f64 * 1599.0 + 8000.0).sqrt();
        let eta = (-1599.0 - disc) / 2.0;
        let gamma = -2000.0 / eta;
        assert!((roots.gamma - gamma).abs() < 1e-13);
        assert!((roots.eta - eta).abs() < 1e-9);
        assert!(roots.gamma > 1.249 && roots.gamma < 1.251);
        assert!(params.characteristic(roots.gamma).abs() <= 1e-12);
        assert!(params.characteristic(roots.eta).abs() / 1600.0 <= 1e-12);
    }

    #[test]
    fn vieta_product() {
        let params = validate(0.05, 0.2, 0.1).unwrap();
        let roots = characteristic_roots(&params);
        assert!((roots.gamma * roots.eta + 5.0).abs() < 1e-12);
    }

    #[test]
    fn payoff_values() {
        let call = Payoff::call(3.0).unwrap();
        assert_eq!(call.eval(5.0), 2.0);
        assert_eq!(call.eval(2.0), 0.0);
        assert_eq!(Payoff::Zero.eval(7.0), 0.0);
        assert_eq!(Payoff::put(3.0).unwrap().eval(1.0), 2.0);
    }

    #[test]
    fn payoff_parse_and_display() {
        for p in [
            Payoff::call(3.5).unwrap(),
            Payoff::put(0.25).unwrap(),
            Payoff::Zero,
        ] {
            assert_eq!(p.to_string().parse::<Payoff>().unwrap(), p);
        }
        assert!("call".parse::<Payoff>().is_err());
        assert!("call:-1".parse::<Payoff>().is_err());
        assert!("swap:2".parse::<Payoff>().is_err());
    }

    #[test]
    fn dominance_is_exact() {
        let k3 = Payoff::call(3.0).unwrap();
        let l4 = Payoff::call(4.0).unwrap();
        assert!(k3.dominates(&l4));
        assert!(!l4.dominates(&k3));
        assert!(k3.dominates(&Payoff::Zero));
        assert!(!k3.dominates(&Payoff::put(1.0).unwrap()));
        assert!(Payoff::put(3.0).unwrap().dominates(&Payoff::put(2.0).unwrap()));
    }

    #[test]
    fn game_validation() {
        let params = validate(0.0, 2f64.sqrt(), 2.0).unwrap();
        let g = Payoff::call(3.0).unwrap();
        let h = Payoff::call(4.0).unwrap();
        assert!(GameSpec::symmetric(params, 5.0, g, h, 0.3, 0.6).is_ok());
        assert_eq!(
            GameSpec::symmetric(params, 5.0, g, h, 1.0, 1.0),
            Err(ModelError::CertainCompetition)
        );
        assert!(matches!(
            GameSpec::symmetric(params, 5.0, h, g, 0.3, 0.6),
            Err(ModelError::PayoffDominance { player: 1, .. })
        ));
        assert!(matches!(
            GameSpec::symmetric(params, 0.0, g, h, 0.3, 0.6),
            Err(ModelError::InvalidState(_))
        ));
        let unordered = GameSpec::symmetric(params, 5.0, g, h, 0.7, 0.6).unwrap();
        assert!(unordered.require_ordered().is_err());
    }

    /// Admissible random triples: sigma in [0.005, 1.5], r in (0.01, 3], mu < r.
    fn admissible() -> impl Strategy<Value = ModelParams> {
        (0.005f64..1.5, 0.01f64..3.0, 0.0f64..1.0, -0.5f64..0.0).prop_map(|(s, r, frac, shift)| {
            let mu = shift + frac * r * 0.999;
            validate(mu, s, r).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn roots_satisfy_quadratic(params in admissible()) {
            let roots = params.roots();
            prop_assert!(roots.gamma > 1.0);
            prop_assert!(roots.eta < 0.0);
            // residual relative to the size of the largest term
            for z in [roots.gamma, roots.eta] {
                let scale = (0.5 * params.sigma() * params.sigma() * z * z).abs()
                    .max((params.mu() * z).abs()).max(params.r()).max(1.0);
                prop_assert!(params.characteristic(z).abs() / scale <= 1e-12);
            }
        }

        #[test]
        fn fundamental_solutions_solve_generator(params in admissible(), x in 0.1f64..100.0) {
            let roots = params.roots();
            let (mu, s, r) = (params.mu(), params.sigma(), params.r());
            for z in [roots.gamma, roots.eta] {
                // analytic derivatives of x^z
                let f = x.powf(z);
                let fp = z * x.powf(z - 1.0);
                let fpp = z * (z - 1.0) * x.powf(z - 2.0);
                // x^η with η near -10^5 leaves the normal range
                if !(f.is_normal() && fpp.is_normal()) {
                    continue;
                }
                let terms = [0.5 * s * s * x * x * fpp, mu * x * fp, r * f];
                let scale = terms.iter().fold(0.0f64, |m, t| m.max(t.abs()));
                let residual = terms[0] + terms[1] - terms[2];
                prop_assert!(residual.abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn payoffs_nonnegative_and_lipschitz(k in 0.1f64..10.0, x in 0.01f64..20.0, y in 0.01f64..20.0) {
            for p in [Payoff::call(k).unwrap(), Payoff::put(k).unwrap()] {
                prop_assert!(p.eval(x) >= 0.0);
                prop_assert!((p.eval(x) - p.eval(y)).abs() <= (x - y).abs() * (1.0 + 1e-12) + 1e-14);
            }
        }
    }
}
