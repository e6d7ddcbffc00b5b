//! Loss terms and the combined min/max batch objective.
//!
//! Six terms drive the minimizing player (encoders, generators, embedding,
//! fusion, classifier): cycle reconstruction, restored-intent distribution
//! matching, classification, content-posterior KL, latent regression, and
//! the generator side of the adversarial game. The maximizing player
//! (discriminators) sees only the discriminator side of the adversarial
//! game. Weights of zero skip the corresponding computation entirely, so an
//! ablated run reports exactly the surviving terms.

use crate::autograd::{Tape, Tensor, Var};
use crate::config::{DistanceCriterion, LossWeights};
use crate::dataio::Example;
use crate::error::Result;
use crate::model::{DomainKind, DrscModel, BoundParams, SpeechicModel};
use crate::rng::SeededRng;

impl DistanceCriterion {
    /// Distance between two same-shaped grids/vectors as a scalar node.
    pub fn distance(&self, tape: &Tape, a: Var, b: Var) -> Var {
        match self {
            DistanceCriterion::L1 => tape.mean(tape.abs(tape.sub(a, b))),
            DistanceCriterion::L2 => {
                let d = tape.sub(a, b);
                tape.sqrt(tape.mean(tape.mul(d, d)))
            }
            DistanceCriterion::Cosine => {
                let sq = |v: Var| tape.sum(tape.mul(v, v));
                let na = tape.item(sq(a)).sqrt();
                let nb = tape.item(sq(b)).sqrt();
                if na < 1e-12 || nb < 1e-12 {
                    // undefined direction: treat as aligned, with no gradient
                    return tape.constant(Tensor::scalar(0.0));
                }
                let dot = tape.sum(tape.mul(a, b));
                let cos = tape.div(dot, tape.sqrt(tape.mul(sq(a), sq(b))));
                tape.add_scalar(tape.neg(cos), 1.0)
            }
        }
    }
}

/// crit(T̂, T) + crit(M̂, M).
pub fn cycle_consist_loss(
    tape: &Tape,
    t: Var,
    m: Var,
    t_hat: Var,
    m_hat: Var,
    criterion: DistanceCriterion,
) -> Var {
    tape.add(criterion.distance(tape, t_hat, t), criterion.distance(tape, m_hat, m))
}

/// Distance between the intents re-encoded from the two restored domains.
pub fn distribution_loss(
    tape: &Tape,
    zi_from_t_hat: Var,
    zi_from_m_hat: Var,
    criterion: DistanceCriterion,
) -> Var {
    criterion.distance(tape, zi_from_t_hat, zi_from_m_hat)
}

/// Cross-entropy from raw logits: logsumexp(logits) − logits[label].
pub fn classification_loss(tape: &Tape, logits: Var, label: usize) -> Var {
    tape.sub(tape.logsumexp(logits), tape.index_elem(logits, label))
}

/// KL(N(μ, σ²) ‖ N(0, 1)) summed over elements:
/// ½ Σ (μ² + σ² − log σ² − 1).
pub fn kl_loss(tape: &Tape, mu: Var, logvar: Var) -> Var {
    let mu2 = tape.mul(mu, mu);
    let var = tape.exp(logvar);
    let inner = tape.add_scalar(tape.sub(tape.add(mu2, var), logvar), -1.0);
    tape.mul_scalar(tape.sum(inner), 0.5)
}

/// Which side of the adversarial game is being scored.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AdversarialSide {
    GeneratorStep,
    DiscriminatorStep,
}

/// Non-saturating logistic adversarial loss for one domain.
///
/// Discriminator step: softplus(−D(real)) + softplus(D(fake.detach())) —
/// the fake is cut from the generator so only discriminator parameters
/// receive gradient. Generator step: softplus(−D(fake)).
pub fn adversarial_loss(
    tape: &Tape,
    model: &DrscModel,
    p: &BoundParams,
    domain: DomainKind,
    real: Var,
    fake: Var,
    side: AdversarialSide,
) -> Var {
    match side {
        AdversarialSide::DiscriminatorStep => {
            let d_real = model.discriminate(tape, p, domain, real);
            let d_fake = model.discriminate(tape, p, domain, tape.detach(fake));
            tape.add(tape.softplus(tape.neg(d_real)), tape.softplus(d_fake))
        }
        AdversarialSide::GeneratorStep => {
            let d_fake = model.discriminate(tape, p, domain, fake);
            tape.softplus(tape.neg(d_fake))
        }
    }
}

/// Weighted per-term contributions (λ·term, batch means) plus the two
/// player totals. Written as one JSON line per step in the metrics log.
#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossBreakdown {
    pub cycle: f64,
    pub distribution: f64,
    pub classification: f64,
    pub kl: f64,
    pub latent_regression: f64,
    pub adversarial_generator: f64,
    pub adversarial_discriminator: f64,
    pub min_total: f64,
    pub max_total: f64,
}

impl LossBreakdown {
    /// The minimizing player's total must equal the sum of its parts.
    pub fn min_sum(&self) -> f64 {
        self.cycle
            + self.distribution
            + self.classification
            + self.kl
            + self.latent_regression
            + self.adversarial_generator
    }
}

/// The two players' scalar objectives on the tape, plus reporting values.
pub struct TotalObjective {
    pub min_loss: Var,
    /// Present only when the adversarial weight is positive.
    pub max_loss: Option<Var>,
    pub breakdown: LossBreakdown,
}

/// Build the full batch objective on `tape`.
///
/// The RNG drives content sampling, dropout, and the fresh latent-regression
/// targets; calling twice with identically seeded RNGs and the same inputs
/// reproduces the same stochastic objective (the draw count is independent
/// of parameter values, which is what makes finite-difference probes of
/// this function meaningful).
#[allow(clippy::too_many_arguments)]
pub fn total_objective(
    tape: &Tape,
    model: &DrscModel,
    p: &BoundParams,
    batch: &[Example],
    weights: &LossWeights,
    criterion: DistanceCriterion,
    dropout_rate: f64,
    rng: &mut SeededRng,
) -> Result<TotalObjective> {
    assert!(!batch.is_empty(), "empty batch");
    weights.validate()?;

    // one fresh latent-regression target per domain per batch
    let latent_targets = if weights.latent_regression > 0.0 {
        let mut zt = Tensor::zeros(&[model.cfg.d_content, model.cfg.l_max]);
        rng.fill_normal(zt.data_mut());
        let mut zm = Tensor::zeros(&[model.cfg.d_content, model.cfg.t_max]);
        rng.fill_normal(zm.data_mut());
        Some((zt, zm))
    } else {
        None
    };

    let mut cycle_terms = Vec::new();
    let mut distri_terms = Vec::new();
    let mut ce_terms = Vec::new();
    let mut kl_terms = Vec::new();
    let mut latreg_terms = Vec::new();
    let mut adv_g_terms = Vec::new();
    let mut adv_d_terms = Vec::new();

    for ex in batch {
        let f = model.forward(tape, p, &ex.text, &ex.mel, dropout_rate, Some(rng))?;

        if weights.cycle > 0.0 {
            cycle_terms.push(cycle_consist_loss(
                tape, f.t_real, f.m_real, f.t_hat, f.m_hat, criterion,
            ));
        }
        if weights.distribution > 0.0 {
            distri_terms.push(distribution_loss(
                tape,
                f.lat_text_hat.intent,
                f.lat_mel_hat.intent,
                criterion,
            ));
        }
        if weights.classification > 0.0 {
            ce_terms.push(classification_loss(tape, f.logits, ex.label));
        }
        if weights.kl > 0.0 {
            kl_terms.push(tape.add(
                kl_loss(tape, f.lat_text.content_mu, f.lat_text.content_logvar),
                kl_loss(tape, f.lat_mel.content_mu, f.lat_mel.content_logvar),
            ));
        }
        if let Some((zt, zm)) = &latent_targets {
            let zt_var = tape.constant(zt.clone());
            let zm_var = tape.constant(zm.clone());
            // generate from the known content target, re-encode, and demand
            // the posterior mean return it
            let gt = model.generate(tape, p, DomainKind::Text, zt_var, f.lat_mel.intent);
            let mu_t = model.encode(tape, p, DomainKind::Text, gt).content_mu;
            let gm = model.generate(tape, p, DomainKind::Mel, zm_var, f.lat_text.intent);
            let mu_m = model.encode(tape, p, DomainKind::Mel, gm).content_mu;
            latreg_terms.push(tape.add(
                criterion.distance(tape, mu_t, zt_var),
                criterion.distance(tape, mu_m, zm_var),
            ));
        }
        if weights.adversarial > 0.0 {
            let g_t = adversarial_loss(
                tape, model, p, DomainKind::Text, f.t_real, f.t_hat,
                AdversarialSide::GeneratorStep,
            );
            let g_m = adversarial_loss(
                tape, model, p, DomainKind::Mel, f.m_real, f.m_hat,
                AdversarialSide::GeneratorStep,
            );
            adv_g_terms.push(tape.add(g_t, g_m));
            let d_t = adversarial_loss(
                tape, model, p, DomainKind::Text, f.t_real, f.t_hat,
                AdversarialSide::DiscriminatorStep,
            );
            let d_m = adversarial_loss(
                tape, model, p, DomainKind::Mel, f.m_real, f.m_hat,
                AdversarialSide::DiscriminatorStep,
            );
            adv_d_terms.push(tape.add(d_t, d_m));
        }
    }

    let mut breakdown = LossBreakdown::default();
    let mut min_parts: Vec<Var> = Vec::new();

    let weighted = |terms: Vec<Var>, weight: f64, slot: &mut f64, parts: &mut Vec<Var>| {
        if terms.is_empty() {
            return;
        }
        let mean = tape.mean_n(&terms);
        let contribution = tape.mul_scalar(mean, weight);
        *slot = tape.item(contribution);
        parts.push(contribution);
    };

    weighted(cycle_terms, weights.cycle, &mut breakdown.cycle, &mut min_parts);
    weighted(distri_terms, weights.distribution, &mut breakdown.distribution, &mut min_parts);
    weighted(ce_terms, weights.classification, &mut breakdown.classification, &mut min_parts);
    weighted(kl_terms, weights.kl, &mut breakdown.kl, &mut min_parts);
    weighted(latreg_terms, weights.latent_regression, &mut breakdown.latent_regression, &mut min_parts);
    weighted(adv_g_terms, weights.adversarial, &mut breakdown.adversarial_generator, &mut min_parts);

    let min_loss = tape.add_n(&min_parts);
    breakdown.min_total = tape.item(min_loss);

    let max_loss = if adv_d_terms.is_empty() {
        None
    } else {
        let mean = tape.mean_n(&adv_d_terms);
        let l = tape.mul_scalar(mean, weights.adversarial);
        breakdown.adversarial_discriminator = tape.item(l);
        breakdown.max_total = breakdown.adversarial_discriminator;
        Some(l)
    };

    Ok(TotalObjective { min_loss, max_loss, breakdown })
}

/// Batch cross-entropy for the baseline classifier.
pub fn speechic_objective(
    tape: &Tape,
    model: &SpeechicModel,
    p: &BoundParams,
    batch: &[Example],
    dropout_rate: f64,
    mut rng: Option<&mut SeededRng>,
) -> Result<(Var, LossBreakdown)> {
    assert!(!batch.is_empty(), "empty batch");
    let mut terms = Vec::with_capacity(batch.len());
    for ex in batch {
        let logits = model.forward(
            tape,
            p,
            Some(&ex.text),
            Some(&ex.mel),
            dropout_rate,
            rng.as_deref_mut(),
        )?;
        terms.push(classification_loss(tape, logits, ex.label));
    }
    let loss = tape.mean_n(&terms);
    let breakdown = LossBreakdown {
        classification: tape.item(loss),
        min_total: tape.item(loss),
        ..LossBreakdown::default()
    };
    Ok((loss, breakdown))
}
