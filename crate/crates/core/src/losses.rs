//! Least-squares adversarial terms, discriminator feature matching and the
//! perceptual distance, combined into the generator and discriminator
//! objectives.

use std::fmt::Write as _;

use crate::nets::FeatureExtractor;
use crate::tensor::{Graph, ReduceKind, Var};
use crate::{Error, Real, Result};

/// Multipliers of the feature-matching (`alpha`) and perceptual (`beta`) terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: Real,
    pub beta: Real,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights { alpha: 10.0, beta: 0.25 }
    }
}

impl LossWeights {
    pub fn new(alpha: Real, beta: Real) -> Result<Self> {
        let w = LossWeights { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::invalid(
                "loss_weights",
                format!("alpha {} and beta {} must be non-negative", self.alpha, self.beta),
            ));
        }
        Ok(())
    }
}

/// Scalar values of every loss term of one training step.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossReport {
    pub adv_g: Vec<Real>,
    pub adv_d: Vec<Real>,
    pub fm: Real,
    pub perc: Real,
    pub total_g: Real,
    pub total_d: Real,
}

impl LossReport {
    pub fn csv_header(scales: usize) -> String {
        let mut s = String::from("step");
        for k in 1..=scales {
            write!(s, ",adv_g_{k}").unwrap();
        }
        for k in 1..=scales {
            write!(s, ",adv_d_{k}").unwrap();
        }
        s.push_str(",fm,perc,total_g,total_d");
        s
    }

    pub fn csv_row(&self, step: u64) -> String {
        let mut s = step.to_string();
        for v in self.adv_g.iter().chain(&self.adv_d) {
            write!(s, ",{v}").unwrap();
        }
        write!(s, ",{},{},{},{}", self.fm, self.perc, self.total_g, self.total_d).unwrap();
        s
    }

    /// Checks that both totals equal the weighted sums of their parts.
    pub fn is_consistent(&self, w: LossWeights, rel_tol: Real) -> bool {
        let close = |a: Real, b: Real| (a - b).abs() <= rel_tol * a.abs().max(b.abs()).max(1e-12);
        let g: Real = self.adv_g.iter().sum::<Real>() + w.alpha * self.fm + w.beta * self.perc;
        let d: Real = self.adv_d.iter().sum();
        close(g, self.total_g) && close(d, self.total_d)
    }
}

fn check_same_shape(g: &Graph, a: Var, b: Var, op: &'static str) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::ShapeMismatch {
            op,
            left: g.shape(a),
            right: g.shape(b),
        });
    }
    Ok(())
}

/// `½ (mean((real − 1)²) + mean(fake²))`.
pub fn adversarial_d_loss(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var> {
    check_same_shape(g, real_logits, fake_logits, "adversarial_d_loss")?;
    let real = g.reduce(real_logits, ReduceKind::SquaredDistanceTo(1.0))?;
    let fake = g.reduce(fake_logits, ReduceKind::SquaredDistanceTo(0.0))?;
    let sum = g.add(real, fake)?;
    g.scale(sum, 0.5)
}

/// `mean((fake − 1)²)`.
pub fn adversarial_g_loss(g: &mut Graph, fake_logits: Var) -> Result<Var> {
    g.reduce(fake_logits, ReduceKind::SquaredDistanceTo(1.0))
}

/// Sum over scales and taps of the element-mean L1 distance between real
/// and fake discriminator features. Real features are detached here, so the
/// term only ever trains the generator.
pub fn feature_matching_loss(g: &mut Graph, real: &[Vec<Var>], fake: &[Vec<Var>]) -> Result<Var> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::invalid(
            "feature_matching_loss",
            format!("{} real and {} fake scales", real.len(), fake.len()),
        ));
    }
    let mut terms = Vec::new();
    for (k, (r, f)) in real.iter().zip(fake).enumerate() {
        if r.len() != f.len() || r.is_empty() {
            return Err(Error::invalid(
                "feature_matching_loss",
                format!("scale {k}: {} real and {} fake taps", r.len(), f.len()),
            ));
        }
        for (&ri, &fi) in r.iter().zip(f) {
            check_same_shape(g, ri, fi, "feature_matching_loss")?;
            let ri = if g.requires_grad(ri) { g.detach(ri) } else { ri };
            terms.push(g.l1_distance(fi, ri)?);
        }
    }
    g.add_all(&terms)
}

/// Sum over scales and extractor taps of the element-mean L1 distance
/// between features of targets and outputs.
pub fn perceptual_loss(
    g: &mut Graph,
    extractor: &FeatureExtractor,
    weights: &[Var],
    targets: &[Var],
    outputs: &[Var],
) -> Result<Var> {
    if targets.len() != outputs.len() || targets.is_empty() {
        return Err(Error::invalid(
            "perceptual_loss",
            format!("{} target and {} output scales", targets.len(), outputs.len()),
        ));
    }
    let mut terms = Vec::new();
    for (&y, &z) in targets.iter().zip(outputs) {
        check_same_shape(g, y, z, "perceptual_loss")?;
        let fy = extractor.forward(g, weights, y)?;
        let fz = extractor.forward(g, weights, z)?;
        for (a, b) in fz.into_iter().zip(fy) {
            terms.push(g.l1_distance(a, b)?);
        }
    }
    g.add_all(&terms)
}

/// `Σ adv + α·fm + β·perc`. The report carries every term except the
/// discriminator side, which the caller fills in.
pub fn total_g_loss(
    g: &mut Graph,
    adv_terms: &[Var],
    fm: Var,
    perc: Var,
    w: LossWeights,
) -> Result<(Var, LossReport)> {
    w.validate()?;
    let fm_w = g.scale(fm, w.alpha)?;
    let perc_w = g.scale(perc, w.beta)?;
    let mut terms = adv_terms.to_vec();
    terms.extend([fm_w, perc_w]);
    let total = g.add_all(&terms)?;
    let report = LossReport {
        adv_g: adv_terms.iter().map(|&v| g.value(v).item()).collect(),
        adv_d: Vec::new(),
        fm: g.value(fm).item(),
        perc: g.value(perc).item(),
        total_g: g.value(total).item(),
        total_d: 0.0,
    };
    Ok((total, report))
}
