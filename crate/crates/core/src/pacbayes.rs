//! PAC-Bayes risk certificates for a Gaussian posterior around a parameter
//! vector: bounded losses, Monte Carlo Gibbs risk, Gaussian KL, binary-KL
//! inversion and the closed-form relaxation.

use std::fmt::Write as _;

use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

/// Per-item losses in `[0, 1]` for one parameter vector.
pub type LossEval<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Debug, Clone, PartialEq)]
pub struct PacBayesConfig {
    pub n: usize,
    pub delta: f64,
    pub sigma_p_sq: f64,
    /// `None` is the zero vector.
    pub prior_mean: Option<Vec<f64>>,
    pub loss_scale_c: f64,
    pub m: usize,
    pub seed: u64,
}

impl PacBayesConfig {
    pub fn new(n: usize, delta: f64) -> Self {
        Self { n, delta, sigma_p_sq: 1.0, prior_mean: None, loss_scale_c: 1.0, m: 100, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Input("sample count n must be positive".into()));
        }
        check_delta(self.delta)?;
        if !(self.sigma_p_sq > 0.0 && self.sigma_p_sq.is_finite()) {
            return Err(Error::Input(format!("sigma_p_sq must be positive, got {}", self.sigma_p_sq)));
        }
        if !(self.loss_scale_c > 0.0 && self.loss_scale_c.is_finite()) {
            return Err(Error::Input(format!("loss scale must be positive, got {}", self.loss_scale_c)));
        }
        if self.m == 0 {
            return Err(Error::Input("need at least one posterior sample".into()));
        }
        Ok(())
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Input(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiskEstimate {
    pub empirical_gibbs: f64,
    pub mc_std_err: f64,
    /// Per-item loss averaged over posterior draws.
    pub per_sample_losses: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub empirical_gibbs: f64,
    pub kl_term: f64,
    pub epsilon: f64,
    pub bound_inverted: f64,
    pub bound_closed_form: f64,
    pub n: usize,
    pub delta: f64,
    pub sigma_p_sq: f64,
    pub loss_scale_c: f64,
    pub m: usize,
    pub seed: u64,
}

const RECORD_KEYS: [&str; 11] = [
    "empirical_gibbs",
    "kl_term",
    "epsilon",
    "bound_inverted",
    "bound_closed_form",
    "n",
    "delta",
    "sigma_p_sq",
    "loss_scale_c",
    "m",
    "seed",
];

impl Certificate {
    /// One `key=value` per line, fixed key order. Reals use the shortest
    /// representation that parses back to the same value.
    pub fn to_record(&self) -> String {
        let mut s = String::new();
        let reals = [
            self.empirical_gibbs,
            self.kl_term,
            self.epsilon,
            self.bound_inverted,
            self.bound_closed_form,
        ];
        for (k, v) in RECORD_KEYS.iter().zip(reals) {
            let _ = writeln!(s, "{k}={v:?}");
        }
        let _ = writeln!(s, "n={}", self.n);
        let _ = writeln!(s, "delta={:?}", self.delta);
        let _ = writeln!(s, "sigma_p_sq={:?}", self.sigma_p_sq);
        let _ = writeln!(s, "loss_scale_c={:?}", self.loss_scale_c);
        let _ = writeln!(s, "m={}", self.m);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    pub fn from_record(text: &str) -> Result<Self> {
        let mut vals: [Option<&str>; 11] = [None; 11];
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cfg = |msg: String| Error::Config { line: i + 1, msg };
            let (k, v) = line.split_once('=').ok_or_else(|| cfg("expected key=value".into()))?;
            let slot = RECORD_KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| cfg(format!("unknown key '{}'", k.trim())))?;
            if vals[slot].replace(v.trim()).is_some() {
                return Err(cfg(format!("duplicate key '{}'", k.trim())));
            }
        }
        let get = |i: usize| {
            vals[i].ok_or_else(|| Error::Config { line: 0, msg: format!("missing key '{}'", RECORD_KEYS[i]) })
        };
        let real = |i: usize| -> Result<f64> {
            get(i)?.parse().map_err(|_| Error::Config {
                line: 0,
                msg: format!("'{}' is not a number", RECORD_KEYS[i]),
            })
        };
        let int = |i: usize| -> Result<u64> {
            get(i)?.parse().map_err(|_| Error::Config {
                line: 0,
                msg: format!("'{}' is not an unsigned integer", RECORD_KEYS[i]),
            })
        };
        Ok(Self {
            empirical_gibbs: real(0)?,
            kl_term: real(1)?,
            epsilon: real(2)?,
            bound_inverted: real(3)?,
            bound_closed_form: real(4)?,
            n: int(5)? as usize,
            delta: real(6)?,
            sigma_p_sq: real(7)?,
            loss_scale_c: real(8)?,
            m: int(9)? as usize,
            seed: int(10)?,
        })
    }
}

/// `min(raw / c, 1)`.
pub fn bounded_loss(raw_mse: f64, c: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Input(format!("loss scale must be positive, got {c}")));
    }
    if !(raw_mse >= 0.0) {
        return Err(Error::Input(format!("raw loss must be nonnegative, got {raw_mse}")));
    }
    Ok((raw_mse / c).min(1.0))
}

/// 95th percentile of raw losses on a calibration split.
pub fn calibrate_loss_scale(raw: &[f64]) -> Result<f64> {
    let c = crate::tma::percentile(raw, 95.0)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InsufficientData(format!("calibrated loss scale {c} is not positive")));
    }
    Ok(c)
}

fn check_unit(losses: &[f64]) -> Result<()> {
    match losses.iter().position(|l| !(0.0..=1.0).contains(l)) {
        Some(i) => Err(Error::Contract(format!("loss {} at item {i} outside [0, 1]", losses[i]))),
        None => Ok(()),
    }
}

pub fn empirical_risk(losses: &[f64]) -> Result<f64> {
    if losses.is_empty() {
        return Err(Error::Input("empirical risk of an empty sample".into()));
    }
    check_unit(losses).map_err(|e| Error::Input(e.to_string()))?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Monte Carlo Gibbs risk under `N(theta_hat, sigma_q_sq I)`. Draw `j` uses
/// stream `j` of `seed`; `sigma_q_sq = 0` evaluates `theta_hat` once.
pub fn gibbs_risk_mc(
    theta_hat: &[f64],
    sigma_q_sq: f64,
    m: usize,
    seed: u64,
    loss_eval: &LossEval,
) -> Result<RiskEstimate> {
    if m == 0 {
        return Err(Error::Input("need at least one posterior sample".into()));
    }
    if !(sigma_q_sq >= 0.0 && sigma_q_sq.is_finite()) {
        return Err(Error::Input(format!("posterior variance must be >= 0, got {sigma_q_sq}")));
    }
    let eval = |theta: &[f64]| -> Result<Vec<f64>> {
        let l = loss_eval(theta)?;
        if l.is_empty() {
            return Err(Error::Contract("loss evaluation returned no items".into()));
        }
        check_unit(&l)?;
        Ok(l)
    };
    if sigma_q_sq == 0.0 {
        let l = eval(theta_hat)?;
        let r = l.iter().sum::<f64>() / l.len() as f64;
        return Ok(RiskEstimate { empirical_gibbs: r, mc_std_err: 0.0, per_sample_losses: Some(l) });
    }
    let sd = sigma_q_sq.sqrt();
    let draws: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut r = rng::stream(seed, j as u64);
            let theta: Vec<f64> =
                theta_hat.iter().zip(rng::normal_vec(&mut r, theta_hat.len())).map(|(t, e)| t + sd * e).collect();
            eval(&theta)
        })
        .collect::<Result<_>>()?;
    let n = draws[0].len();
    if draws.iter().any(|d| d.len() != n) {
        return Err(Error::Contract("loss evaluation returned varying item counts".into()));
    }
    let risks: Vec<f64> = draws.iter().map(|d| d.iter().sum::<f64>() / n as f64).collect();
    let mean = risks.iter().sum::<f64>() / m as f64;
    let std_err = if m > 1 {
        let var = risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    } else {
        0.0
    };
    let per_item = (0..n).map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / m as f64).collect();
    Ok(RiskEstimate {
        empirical_gibbs: mean.clamp(0.0, 1.0),
        mc_std_err: std_err,
        per_sample_losses: Some(per_item),
    })
}

fn check_var(v: f64, what: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Input(format!("{what} must be positive, got {v}")));
    }
    Ok(())
}

/// KL between isotropic Gaussians of dimension `mu_q.len()`.
pub fn kl_gaussian(mu_q: &[f64], sigma_q_sq: f64, mu_p: &[f64], sigma_p_sq: f64) -> Result<f64> {
    check_var(sigma_q_sq, "posterior variance")?;
    check_var(sigma_p_sq, "prior variance")?;
    crate::diffusion::check_len(mu_q, mu_p, "KL means")?;
    let d = mu_q.len() as f64;
    let dist: f64 = mu_q.iter().zip(mu_p).map(|(q, p)| (q - p).powi(2)).sum();
    let ratio = sigma_q_sq / sigma_p_sq;
    Ok(0.5 * (-d * ratio.ln() - d + d * ratio + dist / sigma_p_sq))
}

/// KL between Gaussians with diagonal covariances.
pub fn kl_gaussian_diag(mu_q: &[f64], var_q: &[f64], mu_p: &[f64], var_p: &[f64]) -> Result<f64> {
    let d = mu_q.len();
    if var_q.len() != d || mu_p.len() != d || var_p.len() != d {
        return Err(Error::Shape("KL arguments differ in dimension".into()));
    }
    let mut acc = 0.0;
    for i in 0..d {
        check_var(var_q[i], "posterior variance")?;
        check_var(var_p[i], "prior variance")?;
        acc += var_q[i] / var_p[i] + (mu_q[i] - mu_p[i]).powi(2) / var_p[i] - 1.0 + (var_p[i] / var_q[i]).ln();
    }
    Ok(0.5 * acc)
}

/// `kl(p || q)` for Bernoulli parameters, `0 ln 0 = 0`; infinite when `q`
/// sits on a boundary that `p` does not.
pub fn binary_kl(p: f64, q: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
        return Err(Error::Input(format!("binary KL needs p, q in [0, 1], got {p}, {q}")));
    }
    let term = |a: f64, b: f64| {
        if a == 0.0 {
            0.0
        } else if b == 0.0 {
            f64::INFINITY
        } else {
            a * (a / b).ln()
        }
    };
    Ok((term(p, q) + term(1.0 - p, 1.0 - q)).max(0.0))
}

/// Smallest `q >= p` with `kl(p || q) = eps`, by bisection. Stops when the
/// residual is within `tol`, or when the bracket cannot shrink further.
///
/// Near 1 the divergence moves by more than `tol` per representable `q`, so
/// roots above `1 - max(tol, 16 eps_mach / tol)` are reported as 1 whenever
/// Pinsker's bound `p + sqrt(eps / 2)` already reaches 1.
pub fn invert_binary_kl(p: f64, eps: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Input(format!("tolerance must be positive, got {tol}")));
    }
    if !(eps >= 0.0) {
        return Err(Error::Input(format!("eps must be nonnegative, got {eps}")));
    }
    binary_kl(p, p)?;
    if eps == 0.0 || p == 1.0 {
        return Ok(p);
    }
    let cap = 1.0 - tol.max(16.0 * f64::EPSILON / tol);
    if p < cap && p + (eps / 2.0).sqrt() >= 1.0 && binary_kl(p, cap)? < eps {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (p, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let k = binary_kl(p, mid)?;
        if (k - eps).abs() <= tol {
            return Ok(mid);
        }
        if k < eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// `(KL + ln((n + 1) / delta)) / n`.
pub fn epsilon(kl_term: f64, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 || !(kl_term >= 0.0) {
        return Err(Error::Input("epsilon needs n > 0 and a nonnegative KL".into()));
    }
    let n = n as f64;
    Ok((kl_term + ((n + 1.0) / delta).ln()) / n)
}

/// `emp + sqrt((KL + ln((n + 1) / delta)) / (2n))`; not clamped.
pub fn closed_form_bound(emp: f64, kl_term: f64, n: usize, delta: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&emp) {
        return Err(Error::Input(format!("empirical risk {emp} outside [0, 1]")));
    }
    Ok(emp + (0.5 * epsilon(kl_term, n, delta)?).sqrt())
}

/// Posterior `N(theta_hat, sigma_p_sq I)` against prior
/// `N(prior_mean, sigma_p_sq I)`. `loss_eval` must return `cfg.n` items.
pub fn certify(cfg: &PacBayesConfig, theta_hat: &[f64], loss_eval: &LossEval) -> Result<Certificate> {
    cfg.validate()?;
    let zeros;
    let prior: &[f64] = match &cfg.prior_mean {
        Some(p) => p,
        None => {
            zeros = vec![0.0; theta_hat.len()];
            &zeros
        }
    };
    let checked = |theta: &[f64]| -> Result<Vec<f64>> {
        let l = loss_eval(theta)?;
        if l.len() != cfg.n {
            return Err(Error::Contract(format!("loss evaluation returned {} items, n = {}", l.len(), cfg.n)));
        }
        Ok(l)
    };
    let risk = gibbs_risk_mc(theta_hat, cfg.sigma_p_sq, cfg.m, cfg.seed, &checked)?;
    certificate_from_parts(cfg, risk.empirical_gibbs, kl_gaussian(theta_hat, cfg.sigma_p_sq, prior, cfg.sigma_p_sq)?)
}

/// Bounds for a given empirical Gibbs risk and KL term.
pub fn certificate_from_parts(cfg: &PacBayesConfig, emp: f64, kl_term: f64) -> Result<Certificate> {
    cfg.validate()?;
    let eps = epsilon(kl_term, cfg.n, cfg.delta)?;
    Ok(Certificate {
        empirical_gibbs: emp,
        kl_term,
        epsilon: eps,
        bound_inverted: invert_binary_kl(emp, eps, 1e-9)?,
        bound_closed_form: closed_form_bound(emp, kl_term, cfg.n, cfg.delta)?,
        n: cfg.n,
        delta: cfg.delta,
        sigma_p_sq: cfg.sigma_p_sq,
        loss_scale_c: cfg.loss_scale_c,
        m: cfg.m,
        seed: cfg.seed,
    })
}

/// `(ln(n + 1) + ln(1/delta)) / n`.
pub fn concentration_threshold(n: usize, delta: f64) -> Result<f64> {
    epsilon(0.0, n, delta)
}

/// Fraction of trials in which `kl(R_hat || p_true)` exceeds the threshold,
/// `R_hat` being the mean of `n` Bernoulli(`p_true`) losses. Trial `i` uses
/// stream `i` of `seed`.
pub fn concentration_simulate(p_true: f64, n: usize, delta: f64, trials: usize, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_true) {
        return Err(Error::Input(format!("p_true must lie in [0, 1], got {p_true}")));
    }
    if trials == 0 {
        return Err(Error::Input("need at least one trial".into()));
    }
    let thr = concentration_threshold(n, delta)?;
    let violations: usize = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let hits = (0..n).filter(|_| r.random_bool(p_true)).count();
            let kl = binary_kl(hits as f64 / n as f64, p_true).unwrap_or(f64::INFINITY);
            usize::from(kl > thr)
        })
        .sum();
    Ok(violations as f64 / trials as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounded_loss_cases() {
        assert_eq!(bounded_loss(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(bounded_loss(3.0, 2.0).unwrap(), 1.0);
        assert_eq!(bounded_loss(1.0, 2.0).unwrap(), 0.5);
        assert!(bounded_loss(1.0, 0.0).is_err());
    }

    #[test]
    fn empirical_risk_cases() {
        assert_eq!(empirical_risk(&[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(empirical_risk(&[0.0, 1.0]).unwrap(), 0.5);
        assert!(empirical_risk(&[1.5]).is_err());
        assert!(empirical_risk(&[]).is_err());
    }

    #[test]
    fn binary_kl_conventions() {
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(binary_kl(p, p).unwrap(), 0.0);
        }
        let q: f64 = 0.37;
        assert!((binary_kl(0.0, q).unwrap() + (1.0 - q).ln()).abs() < 1e-15);
        assert_eq!(binary_kl(0.5, 1.0).unwrap(), f64::INFINITY);
        assert!((binary_kl(0.1, 0.3).unwrap() - 0.116322).abs() < 1e-6);
    }

    #[test]
    fn inversion_cases() {
        assert_eq!(invert_binary_kl(0.1, 0.0, 1e-9).unwrap(), 0.1);
        let q = invert_binary_kl(0.1, 0.116322, 1e-9).unwrap();
        assert!((q - 0.3).abs() < 1e-6);
        assert!(invert_binary_kl(0.9, 10.0, 1e-9).unwrap() == 1.0);
        assert!(invert_binary_kl(0.1, 10.0, 1e-9).unwrap() > 1.0 - 1e-4);
        assert!(invert_binary_kl(0.1, 0.1, 0.0).is_err());
        // p = 0: kl(0 || q) = -ln(1 - q).
        let q = invert_binary_kl(0.0, 0.5, 1e-12).unwrap();
        assert!((q - (1.0 - (-0.5f64).exp())).abs() < 1e-11);
    }

    #[test]
    fn closed_form_example() {
        let b = closed_form_bound(0.2, 2.0, 100, 0.05).unwrap();
        assert!((b - 0.419213).abs() < 1e-5);
        let r100 = closed_form_bound(0.0, 0.0, 100, 0.05).unwrap();
        assert!(r100 > 0.0);
    }

    #[test]
    fn kl_forms_agree() {
        let mu = [1.0, -2.0, 0.5, 2.0, 0.0];
        let zero = [0.0; 5];
        let iso = kl_gaussian(&mu, 0.3, &zero, 1.7).unwrap();
        let diag = kl_gaussian_diag(&mu, &[0.3; 5], &zero, &[1.7; 5]).unwrap();
        assert!((iso - diag).abs() <= 1e-12 * iso);
        let two = [2.0, 2.0];
        assert_eq!(kl_gaussian(&two, 2.0, &[0.0, 0.0], 2.0).unwrap(), 2.0);
        assert_eq!(kl_gaussian(&mu, 0.3, &mu, 0.3).unwrap(), 0.0);
        assert!(kl_gaussian(&mu, 0.0, &zero, 1.0).is_err());
    }

    #[test]
    fn certify_point_mass_zero_risk() {
        let mut cfg = PacBayesConfig::new(100, 0.05);
        cfg.sigma_p_sq = 1e-300;
        let cert = certify(&cfg, &[0.0; 4], &|_: &[f64]| Ok(vec![0.0; 100])).unwrap();
        assert_eq!(cert.kl_term, 0.0);
        assert!((cert.epsilon - 2020f64.ln() / 100.0).abs() < 1e-15);
        assert!((cert.bound_inverted - 0.073285).abs() < 1e-5);
        assert!(certify(&cfg, &[0.0; 4], &|_: &[f64]| Ok(vec![0.0; 99])).is_err());
    }

    #[test]
    fn gibbs_point_mass_and_contract() {
        let eval = |t: &[f64]| -> Result<Vec<f64>> { Ok(vec![t[0].abs().min(1.0), 0.25]) };
        let r = gibbs_risk_mc(&[0.5], 0.0, 10, 1, &eval).unwrap();
        assert_eq!(r.empirical_gibbs, 0.375);
        assert_eq!(r.mc_std_err, 0.0);
        let bad = |_: &[f64]| -> Result<Vec<f64>> { Ok(vec![1.5]) };
        assert!(matches!(gibbs_risk_mc(&[0.5], 0.1, 4, 1, &bad), Err(Error::Contract(_))));
    }

    #[test]
    fn record_round_trip() {
        let cfg = PacBayesConfig { sigma_p_sq: 2.0, ..PacBayesConfig::new(100, 0.05) };
        let cert = certificate_from_parts(&cfg, 0.2, 2.0).unwrap();
        let text = cert.to_record();
        assert_eq!(text.lines().count(), 11);
        assert!(text.starts_with("empirical_gibbs=0.2\n"));
        assert_eq!(Certificate::from_record(&text).unwrap(), cert);
        assert!(Certificate::from_record("bogus=1\n").is_err());
    }

    #[test]
    fn concentration_degenerate() {
        assert_eq!(concentration_simulate(0.0, 1, 0.05, 100, 3).unwrap(), 0.0);
        assert_eq!(concentration_simulate(1.0, 5, 0.05, 100, 3).unwrap(), 0.0);
        assert!(concentration_threshold(40, 0.05).unwrap() < concentration_threshold(20, 0.05).unwrap());
    }
}
