//! Adaptive rejection sampling and its Metropolis variant.
//!
//! The envelope is the derivative-free one built from chords between
//! abscissae: inside `[x_j, x_{j+1}]` it is
//! `max(chord_j, min(chord_{j-1} extended, chord_{j+1} extended))`, and the
//! outer pieces extend the first and last chords. For a log-concave density
//! this dominates the log density, so plain rejection is exact; otherwise it
//! is used as an independence proposal followed by a Metropolis correction
//! (ARMS).

use rand::Rng;

use crate::error::{Error, Result};

/// A univariate log density on the open interval `(lo, hi)`.
pub struct Target1D<'a> {
    pub logpdf: &'a dyn Fn(f64) -> f64,
    pub lo: f64,
    pub hi: f64,
    pub log_concave: bool,
}

impl<'a> Target1D<'a> {
    pub fn new(logpdf: &'a dyn Fn(f64) -> f64) -> Self {
        Target1D {
            logpdf,
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            log_concave: true,
        }
    }

    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.lo = lo;
        self.hi = hi;
        self
    }

    pub fn non_concave(mut self) -> Self {
        self.log_concave = false;
        self
    }
}

const MAX_EXPANSIONS: usize = 60;
const MAX_ABSCISSAE: usize = 200;
const MAX_TRIALS: usize = 10_000;

fn concavity_tol(h: f64) -> f64 {
    1e-8 * (1.0 + h.abs())
}

#[derive(Debug, Clone, Copy)]
struct Line {
    x: f64,
    y: f64,
    slope: f64,
}

impl Line {
    fn through(x0: f64, y0: f64, x1: f64, y1: f64) -> Line {
        Line { x: x0, y: y0, slope: (y1 - y0) / (x1 - x0) }
    }

    fn at(&self, x: f64) -> f64 {
        self.y + self.slope * (x - self.x)
    }

    fn intersect(&self, o: &Line) -> Option<f64> {
        let ds = self.slope - o.slope;
        if ds == 0.0 || !ds.is_finite() {
            return None;
        }
        let x = (o.y - self.y + self.slope * self.x - o.slope * o.x) / ds;
        x.is_finite().then_some(x)
    }
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    line: Line,
    log_mass: f64,
}

impl Piece {
    fn new(a: f64, b: f64, line: Line) -> Result<Piece> {
        let s = line.slope;
        let log_mass = if a.is_infinite() {
            if !(s > 0.0) {
                return Err(Error::Numerical("envelope is improper on the left tail".into()));
            }
            line.at(b) - s.ln()
        } else if b.is_infinite() {
            if !(s < 0.0) {
                return Err(Error::Numerical("envelope is improper on the right tail".into()));
            }
            line.at(a) - (-s).ln()
        } else {
            let w = b - a;
            let sw = s * w;
            if sw.abs() < 1e-12 {
                line.at(a) + w.ln()
            } else if s > 0.0 {
                line.at(b) + (-(-sw).exp_m1()).ln() - s.ln()
            } else {
                line.at(a) + (-(sw.exp_m1())).ln() - (-s).ln()
            }
        };
        Ok(Piece { a, b, line, log_mass })
    }

    fn sample(&self, v: f64) -> f64 {
        let s = self.line.slope;
        let x = if self.a.is_infinite() {
            self.b + v.ln() / s
        } else if self.b.is_infinite() {
            self.a + v.ln() / s
        } else {
            let w = self.b - self.a;
            if (s * w).abs() < 1e-12 {
                self.a + v * w
            } else if s > 0.0 {
                self.b + (v * (-s * w).exp_m1()).ln_1p() / s
            } else {
                self.a + (v * (s * w).exp_m1()).ln_1p() / s
            }
        };
        let lo = if self.a.is_finite() { self.a } else { f64::NEG_INFINITY };
        let hi = if self.b.is_finite() { self.b } else { f64::INFINITY };
        x.clamp(lo, hi)
    }
}

struct Envelope {
    lo: f64,
    hi: f64,
    xs: Vec<f64>,
    hs: Vec<f64>,
    pieces: Vec<Piece>,
    cum: Vec<f64>,
}

impl Envelope {
    fn new(lo: f64, hi: f64, mut pts: Vec<(f64, f64)>) -> Result<Envelope> {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts.dedup_by(|a, b| a.0 == b.0);
        if pts.len() < 3 {
            return Err(Error::Numerical("envelope needs three distinct abscissae".into()));
        }
        let mut env = Envelope {
            lo,
            hi,
            xs: pts.iter().map(|p| p.0).collect(),
            hs: pts.iter().map(|p| p.1).collect(),
            pieces: Vec::new(),
            cum: Vec::new(),
        };
        env.rebuild()?;
        Ok(env)
    }

    fn chord(&self, j: usize) -> Line {
        Line::through(self.xs[j], self.hs[j], self.xs[j + 1], self.hs[j + 1])
    }

    fn rebuild(&mut self) -> Result<()> {
        let k = self.xs.len();
        let mut pieces = Vec::with_capacity(3 * k);
        if self.lo < self.xs[0] {
            pieces.push(Piece::new(self.lo, self.xs[0], self.chord(0))?);
        }
        for j in 0..k - 1 {
            let (a, b) = (self.xs[j], self.xs[j + 1]);
            let c = self.chord(j);
            let left = (j >= 1).then(|| self.chord(j - 1));
            let right = (j + 2 < k).then(|| self.chord(j + 1));
            // Either neighbouring chord extension bounds a concave density
            // over the whole interval, so each sub-segment takes whichever
            // has less mass. This keeps the envelope valid however the break
            // points round, which matters next to very steep chords. The
            // chord itself only wins for non-concave targets.
            let mut breaks = vec![a, b];
            let lines: Vec<Line> = [Some(c), left, right].into_iter().flatten().collect();
            for p in 0..lines.len() {
                for q in p + 1..lines.len() {
                    if let Some(x) = lines[p].intersect(&lines[q]) {
                        if x > a && x < b {
                            breaks.push(x);
                        }
                    }
                }
            }
            breaks.sort_by(|x, y| x.total_cmp(y));
            breaks.dedup();
            for w in breaks.windows(2) {
                let (pa, pb) = (w[0], w[1]);
                if pb - pa <= 0.0 {
                    continue;
                }
                let mut best: Option<Piece> = None;
                for line in [left, right].into_iter().flatten() {
                    let piece = Piece::new(pa, pb, line)?;
                    if best.is_none_or(|b| piece.log_mass < b.log_mass) {
                        best = Some(piece);
                    }
                }
                let mid = 0.5 * (pa + pb);
                let piece = match best {
                    Some(p) if p.line.at(mid) >= c.at(mid) => p,
                    _ => Piece::new(pa, pb, c)?,
                };
                pieces.push(piece);
            }
        }
        if self.xs[k - 1] < self.hi {
            pieces.push(Piece::new(self.xs[k - 1], self.hi, self.chord(k - 2))?);
        }
        let max = pieces
            .iter()
            .map(|p| p.log_mass)
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("envelope has non-finite mass".into()));
        }
        let mut acc = 0.0;
        self.cum = pieces
            .iter()
            .map(|p| {
                acc += (p.log_mass - max).exp();
                acc
            })
            .collect();
        self.pieces = pieces;
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let total = *self.cum.last().expect("envelope has pieces");
        let r = rng.random::<f64>() * total;
        let idx = self.cum.partition_point(|c| *c <= r).min(self.pieces.len() - 1);
        let piece = &self.pieces[idx];
        let v: f64 = 1.0 - rng.random::<f64>();
        let x = piece.sample(v);
        (x, piece.line.at(x))
    }

    fn upper(&self, x: f64) -> f64 {
        let idx = self
            .pieces
            .partition_point(|p| p.b < x)
            .min(self.pieces.len() - 1);
        self.pieces[idx].line.at(x)
    }

    fn squeeze(&self, x: f64) -> f64 {
        let k = self.xs.len();
        if x < self.xs[0] || x > self.xs[k - 1] {
            return f64::NEG_INFINITY;
        }
        let j = self.xs.partition_point(|v| *v <= x).clamp(1, k - 1) - 1;
        self.chord(j).at(x)
    }

    /// Inserts an abscissa; in log-concave mode verifies the local
    /// three-point concavity condition around it.
    fn insert(&mut self, x: f64, h: f64, check: bool) -> Result<()> {
        if self.xs.len() >= MAX_ABSCISSAE || !h.is_finite() {
            return Ok(());
        }
        let pos = self.xs.partition_point(|v| *v < x);
        let scale = x.abs().max(1.0);
        let near = |i: usize| self.xs.get(i).is_some_and(|v| (v - x).abs() <= 1e-12 * scale);
        if near(pos) || (pos > 0 && near(pos - 1)) {
            return Ok(());
        }
        self.xs.insert(pos, x);
        self.hs.insert(pos, h);
        if check {
            let k = self.xs.len();
            for c in pos.saturating_sub(1)..=(pos + 1).min(k - 1) {
                if c == 0 || c + 1 >= k {
                    continue;
                }
                let chord = Line::through(self.xs[c - 1], self.hs[c - 1], self.xs[c + 1], self.hs[c + 1]);
                let tol = concavity_tol(self.hs[c].abs().max(self.hs[c - 1].abs()).max(self.hs[c + 1].abs()));
                if self.hs[c] < chord.at(self.xs[c]) - tol {
                    return Err(Error::NonConcave { x: self.xs[c] });
                }
            }
        }
        self.rebuild()
    }
}

fn eval(target: &Target1D, x: f64) -> f64 {
    let h = (target.logpdf)(x);
    if h.is_nan() {
        f64::NEG_INFINITY
    } else {
        h
    }
}

/// Three or more starting abscissae around `start` such that the envelope
/// tails are proper: the first chord rises unless the support is bounded on
/// the left, the last chord falls unless it is bounded on the right.
fn initial_points(target: &Target1D, start: f64) -> Result<Vec<(f64, f64)>> {
    let (lo, hi) = (target.lo, target.hi);
    if !(start > lo && start < hi) {
        return Err(Error::Domain(format!("starting point {start} outside ({lo}, {hi})")));
    }
    let h0 = eval(target, start);
    if !h0.is_finite() {
        return Err(Error::Numerical(format!("log density not finite at starting point {start}")));
    }
    let left = if start - 1.0 > lo { start - 1.0 } else { 0.5 * (lo + start) };
    let right = if start + 1.0 < hi { start + 1.0 } else { 0.5 * (hi + start) };
    let mut pts = vec![(left, eval(target, left)), (start, h0), (right, eval(target, right))];

    // Pull non-finite neighbours towards the start point.
    for idx in [0usize, 2] {
        let mut tries = 0;
        while !pts[idx].1.is_finite() {
            tries += 1;
            if tries > MAX_EXPANSIONS {
                return Err(Error::Numerical("log density not finite near starting point".into()));
            }
            let x = 0.5 * (pts[idx].0 + start);
            pts[idx] = (x, eval(target, x));
        }
    }

    let mut step = start - pts[0].0;
    let mut n = 0;
    while lo == f64::NEG_INFINITY && pts[1].1 - pts[0].1 <= 0.0 {
        n += 1;
        if n > MAX_EXPANSIONS {
            return Err(Error::Numerical(
                "no increasing region found on the left; is the density proper?".into(),
            ));
        }
        step *= 2.0;
        let mut x = pts[0].0 - step;
        let mut h = eval(target, x);
        while !h.is_finite() {
            x = 0.5 * (x + pts[0].0);
            h = eval(target, x);
        }
        pts.insert(0, (x, h));
    }
    let mut step = pts[pts.len() - 1].0 - start;
    let mut n = 0;
    while hi == f64::INFINITY && {
        let k = pts.len();
        pts[k - 1].1 - pts[k - 2].1 >= 0.0
    } {
        n += 1;
        if n > MAX_EXPANSIONS {
            return Err(Error::Numerical(
                "no decreasing region found on the right; is the density proper?".into(),
            ));
        }
        step *= 2.0;
        let last = pts[pts.len() - 1].0;
        let mut x = last + step;
        let mut h = eval(target, x);
        while !h.is_finite() {
            x = 0.5 * (x + last);
            h = eval(target, x);
        }
        pts.push((x, h));
    }
    Ok(pts)
}

fn check_points_concave(pts: &[(f64, f64)]) -> Result<()> {
    for w in pts.windows(3) {
        let chord = Line::through(w[0].0, w[0].1, w[2].0, w[2].1);
        let tol = concavity_tol(w[0].1.abs().max(w[1].1.abs()).max(w[2].1.abs()));
        if w[1].1 < chord.at(w[1].0) - tol {
            return Err(Error::NonConcave { x: w[1].0 });
        }
    }
    Ok(())
}

/// Exact draw from a log-concave density by adaptive rejection sampling,
/// starting the envelope around `start`.
pub fn ars_sample<R: Rng + ?Sized>(target: &Target1D, start: f64, rng: &mut R) -> Result<f64> {
    let pts = initial_points(target, start)?;
    check_points_concave(&pts)?;
    let mut env = Envelope::new(target.lo, target.hi, pts)?;
    for _ in 0..MAX_TRIALS {
        let (x, u) = env.sample(rng);
        let log_v = (1.0 - rng.random::<f64>()).ln();
        if log_v <= env.squeeze(x) - u {
            return Ok(x);
        }
        let h = eval(target, x);
        if h > u + concavity_tol(h.abs().max(u.abs())) {
            return Err(Error::NonConcave { x });
        }
        if log_v <= h - u {
            return Ok(x);
        }
        env.insert(x, h, true)?;
    }
    Err(Error::Numerical("adaptive rejection sampling did not accept".into()))
}

/// Default starting abscissae for ARMS on a bounded support.
pub fn default_arms_abscissae(lo: f64, hi: f64) -> Vec<f64> {
    [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|q| lo + q * (hi - lo))
        .collect()
}

/// One ARMS transition from `current` on the bounded support of `target`.
pub fn arms_sample<R: Rng + ?Sized>(target: &Target1D, current: f64, rng: &mut R) -> Result<f64> {
    let init = default_arms_abscissae(target.lo, target.hi);
    arms_sample_with(target, &init, current, rng).map(|s| s.value)
}

/// Result of an ARMS transition.
#[derive(Debug, Clone, Copy)]
pub struct ArmsStep {
    pub value: f64,
    pub moved: bool,
    /// Metropolis acceptance probability of the final proposal.
    pub accept_prob: f64,
}

/// ARMS transition with caller-supplied initial abscissae. The abscissae
/// must not depend on `current`.
pub fn arms_sample_with<R: Rng + ?Sized>(
    target: &Target1D,
    init: &[f64],
    current: f64,
    rng: &mut R,
) -> Result<ArmsStep> {
    if !(target.lo.is_finite() && target.hi.is_finite()) {
        return Err(Error::Domain("ARMS requires a bounded support".into()));
    }
    if !(current > target.lo && current < target.hi) {
        return Err(Error::Domain(format!("current value {current} outside the support")));
    }
    let pts: Vec<(f64, f64)> = init
        .iter()
        .map(|&x| (x, eval(target, x)))
        .filter(|p| p.1.is_finite())
        .collect();
    let mut env = Envelope::new(target.lo, target.hi, pts)?;
    for _ in 0..MAX_TRIALS {
        let (x, u) = env.sample(rng);
        let h = eval(target, x);
        let log_v = (1.0 - rng.random::<f64>()).ln();
        if log_v > h - u {
            env.insert(x, h, false)?;
            continue;
        }
        let h_cur = eval(target, current);
        let u_cur = env.upper(current);
        let log_alpha = h + h_cur.min(u_cur) - h_cur - h.min(u);
        let accept_prob = log_alpha.exp().min(1.0);
        if log_alpha >= 0.0 || (1.0 - rng.random::<f64>()).ln() <= log_alpha {
            return Ok(ArmsStep { value: x, moved: true, accept_prob });
        }
        return Ok(ArmsStep { value: current, moved: false, accept_prob });
    }
    Err(Error::Numerical("ARMS proposal loop did not terminate".into()))
}
