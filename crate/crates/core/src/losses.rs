//! Objective terms: cycle consistency, least-squares adversarial, the
//! autoencoder reconstruction, middle-content alignment (MSE + MK-MMD) and the
//! weighted total.
//!
//! Each term has a tape builder (used by training) and a plain value function
//! that evaluates the same builder on constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cyc: f64,
    pub lambda_gan: f64,
    pub lambda_ae: f64,
    pub lambda_mid_mse: f64,
    pub lambda_mid_mmd: f64,
    /// Extra factor on the contaminated→clean direction (the A-side cycle and
    /// the G_f adversarial term).
    #[serde(default = "one")]
    pub denoise_gain: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_cyc: 10.0,
            lambda_gan: 1.0,
            lambda_ae: 1.0,
            lambda_mid_mse: 1.0,
            lambda_mid_mmd: 0.5,
            denoise_gain: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            ("lambda_cyc", self.lambda_cyc),
            ("lambda_gan", self.lambda_gan),
            ("lambda_ae", self.lambda_ae),
            ("lambda_mid_mse", self.lambda_mid_mse),
            ("lambda_mid_mmd", self.lambda_mid_mmd),
            ("denoise_gain", self.denoise_gain),
        ];
        for (name, v) in all {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Unweighted loss components of one generator evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub cycle_a: f64,
    pub cycle_b: f64,
    pub gan_f: f64,
    pub gan_r: f64,
    pub ae: f64,
    pub mid_mse: f64,
    pub mid_mmd: f64,
}

impl LossParts {
    pub fn cycle(&self) -> f64 {
        self.cycle_a + self.cycle_b
    }

    pub fn gan(&self) -> f64 {
        self.gan_f + self.gan_r
    }

    fn named(&self) -> [(&'static str, f64); 7] {
        [
            ("cycle_a", self.cycle_a),
            ("cycle_b", self.cycle_b),
            ("gan_f", self.gan_f),
            ("gan_r", self.gan_r),
            ("ae", self.ae),
            ("mid_mse", self.mid_mse),
            ("mid_mmd", self.mid_mmd),
        ]
    }
}

/// λ-weighted sum of the three subnet losses.
pub fn total_loss(parts: &LossParts, w: &LossWeights) -> Result<f64> {
    for (name, v) in parts.named() {
        if !v.is_finite() {
            return Err(Error::numerical(name, format!("loss part is {v}")));
        }
    }
    let sn1 = w.lambda_cyc * (w.denoise_gain * parts.cycle_a + parts.cycle_b)
        + w.lambda_gan * (w.denoise_gain * parts.gan_f + parts.gan_r);
    let sn2 = w.lambda_ae * parts.ae;
    let sn3 = w.lambda_mid_mse * parts.mid_mse + w.lambda_mid_mmd * parts.mid_mmd;
    Ok(sn1 + sn2 + sn3)
}

// ---------------------------------------------------------------------------
// Tape builders

fn same_shape<F: Real>(tape: &Tape<F>, a: NodeId, b: NodeId, what: &str) -> Result<()> {
    let (sa, sb) = (tape.value(a).shape(), tape.value(b).shape());
    if sa != sb {
        return Err(Error::invalid(format!("{what}: shape {sa:?} vs {sb:?}")));
    }
    Ok(())
}

pub fn mae_node<F: Real>(tape: &mut Tape<F>, x: NodeId, target: NodeId) -> Result<NodeId> {
    same_shape(tape, x, target, "mean absolute error")?;
    let d = tape.sub(x, target)?;
    Ok(tape.mean_abs(d))
}

pub fn mse_node<F: Real>(tape: &mut Tape<F>, x: NodeId, target: NodeId) -> Result<NodeId> {
    same_shape(tape, x, target, "mean squared error")?;
    let d = tape.sub(x, target)?;
    Ok(tape.mean_square(d))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GanRole {
    Discriminator,
    Generator,
}

/// Least-squares adversarial loss with targets 1 (real) and 0 (fake).
pub fn lsgan_node<F: Real>(
    tape: &mut Tape<F>,
    real: Option<NodeId>,
    fake: NodeId,
    role: GanRole,
) -> Result<NodeId> {
    match role {
        GanRole::Generator => Ok(tape.squared_error_to(fake, F::one())),
        GanRole::Discriminator => {
            let real = real.ok_or_else(|| {
                Error::invalid("discriminator role needs real scores")
            })?;
            let r = tape.squared_error_to(real, F::one());
            let f = tape.squared_error_to(fake, F::zero());
            tape.add(r, f)
        }
    }
}

// ---------------------------------------------------------------------------
// Value functions

fn eval_scalar<F: Real>(
    inputs: &[&Tensor<F>],
    build: impl FnOnce(&mut Tape<F>, &[NodeId]) -> Result<NodeId>,
) -> Result<F> {
    let mut tape = Tape::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| tape.constant((*t).clone())).collect();
    let out = build(&mut tape, &ids)?;
    Ok(tape.value(out).item())
}

/// `mean|rec_a − a| + mean|rec_b − b|`.
pub fn cycle_loss<F: Real>(
    a: &Tensor<F>,
    rec_a: &Tensor<F>,
    b: &Tensor<F>,
    rec_b: &Tensor<F>,
) -> Result<F> {
    eval_scalar(&[a, rec_a, b, rec_b], |t, ids| {
        let la = mae_node(t, ids[1], ids[0])?;
        let lb = mae_node(t, ids[3], ids[2])?;
        t.add(la, lb)
    })
}

pub fn lsgan_loss<F: Real>(real: &Tensor<F>, fake: &Tensor<F>, role: GanRole) -> Result<F> {
    eval_scalar(&[real, fake], |t, ids| lsgan_node(t, Some(ids[0]), ids[1], role))
}

/// `MSE(ae_a, a) + MSE(ae_b, b)`.
pub fn ae_loss<F: Real>(
    ae_a: &Tensor<F>,
    a: &Tensor<F>,
    ae_b: &Tensor<F>,
    b: &Tensor<F>,
) -> Result<F> {
    eval_scalar(&[ae_a, a, ae_b, b], |t, ids| {
        let la = mse_node(t, ids[0], ids[1])?;
        let lb = mse_node(t, ids[2], ids[3])?;
        t.add(la, lb)
    })
}

/// Multi-kernel MMD between the batch rows of `x` and `y`.
pub fn mk_mmd<F: Real>(x: &Tensor<F>, y: &Tensor<F>, cfg: &MmdConfig) -> Result<F> {
    eval_scalar(&[x, y], |t, ids| t.mk_mmd(ids[0], ids[1], cfg))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MiddleTerms<F> {
    pub mse: F,
    pub mmd: F,
}

impl<F: Real> MiddleTerms<F> {
    pub fn total(&self) -> F {
        self.mse + self.mmd
    }
}

/// One side of the middle-content objective:
/// `MSE(φ(x), φ'(G(x)))` plus the MK-MMD between `{φ(x_i)}` and the other
/// domain's `{φ'(y_j)}`.
pub fn middle_content_loss<F: Real>(
    own: &Tensor<F>,
    translated: &Tensor<F>,
    other_domain: &Tensor<F>,
    cfg: &MmdConfig,
) -> Result<MiddleTerms<F>> {
    let mut tape = Tape::new();
    let o = tape.constant(own.clone());
    let tr = tape.constant(translated.clone());
    let other = tape.constant(other_domain.clone());
    let mse = mse_node(&mut tape, o, tr)?;
    let mmd = tape.mk_mmd(o, other, cfg)?;
    Ok(MiddleTerms {
        mse: tape.value(mse).item(),
        mmd: tape.value(mmd).item(),
    })
}

// ---------------------------------------------------------------------------
// MK-MMD

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Bandwidth {
    /// σ_k = multiplier_k × median pairwise distance of the pooled samples.
    Median { multipliers: Vec<f64> },
    Fixed { sigmas: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MmdConfig {
    pub bandwidth: Bandwidth,
}

impl Default for MmdConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median {
                multipliers: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            },
        }
    }
}

impl MmdConfig {
    pub fn fixed(sigmas: Vec<f64>) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed { sigmas },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (name, vals) = match &self.bandwidth {
            Bandwidth::Median { multipliers } => ("multipliers", multipliers),
            Bandwidth::Fixed { sigmas } => ("sigmas", sigmas),
        };
        if vals.is_empty() {
            return Err(Error::Config(format!("mmd {name}: need at least one kernel")));
        }
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("mmd {name} must be positive")));
        }
        Ok(())
    }
}

/// Sum in ascending order, so the result does not depend on the order the
/// values were produced in.
fn sorted_sum<F: Real>(vals: &mut [F]) -> Result<F> {
    if vals.iter().any(|v| v.is_nan()) {
        return Err(Error::numerical("mk_mmd", "NaN kernel value"));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    Ok(vals.iter().copied().fold(F::zero(), |acc, v| acc + v))
}

type MmdGrad<F> = Option<(Vec<F>, Vec<F>)>;

pub(crate) struct MmdOut<F> {
    pub value: F,
    pub grad: MmdGrad<F>,
    /// Pooled-sample pair that sets the median bandwidth.
    pub median_pair: Option<(usize, usize)>,
}

/// Biased (V-statistic) multi-kernel MMD² between `n` rows of `x` and `m`
/// rows of `y`, each of width `d`, with Gaussian kernels. With
/// `want_grad`, also returns the gradient w.r.t. both sample sets; for the
/// median bandwidth the gradient includes the dependence of σ on the data.
pub(crate) fn mmd_core<F: Real>(
    x: &[F],
    n: usize,
    y: &[F],
    m: usize,
    d: usize,
    cfg: &MmdConfig,
    want_grad: bool,
) -> Result<MmdOut<F>> {
    if n == 0 || m == 0 {
        return Err(Error::invalid("mk_mmd: empty sample set"));
    }
    cfg.validate()?;
    let total = n + m;
    let row = |p: usize| -> &[F] {
        if p < n {
            &x[p * d..(p + 1) * d]
        } else {
            &y[(p - n) * d..(p - n + 1) * d]
        }
    };

    let mut dist = vec![F::zero(); total * total];
    for p in 0..total {
        let zp = row(p);
        for q in p + 1..total {
            let zq = row(q);
            let s = zp
                .iter()
                .zip(zq)
                .fold(F::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            dist[p * total + q] = s;
            dist[q * total + p] = s;
        }
    }

    // (σ² per kernel, median pair and its squared distance when data-driven)
    let (sigma2, median): (Vec<F>, Option<((usize, usize), F)>) = match &cfg.bandwidth {
        Bandwidth::Fixed { sigmas } => (
            sigmas.iter().map(|s| F::from_f64_lossy(s * s)).collect(),
            None,
        ),
        Bandwidth::Median { multipliers } => {
            let mut pairs: Vec<(usize, usize)> = (0..total)
                .flat_map(|p| (p + 1..total).map(move |q| (p, q)))
                .collect();
            let (base, med) = if pairs.is_empty() {
                (F::one(), None)
            } else {
                pairs.sort_by(|a, b| {
                    dist[a.0 * total + a.1]
                        .partial_cmp(&dist[b.0 * total + b.1])
                        .unwrap_or(std::cmp::Ordering::Equal)
                });
                let pick = pairs[(pairs.len() - 1) / 2];
                let md = dist[pick.0 * total + pick.1];
                if md > F::zero() {
                    (md, Some((pick, md)))
                } else {
                    (F::one(), None)
                }
            };
            (
                multipliers
                    .iter()
                    .map(|mu| F::from_f64_lossy(mu * mu) * base)
                    .collect(),
                med,
            )
        }
    };

    let nf = F::from_usize(n).unwrap();
    let mf = F::from_usize(m).unwrap();
    let two = F::one() + F::one();
    let mut value = F::zero();
    let mut w = if want_grad {
        vec![F::zero(); total * total]
    } else {
        Vec::new()
    };
    let mut d_median = F::zero();

    let mut xx = Vec::with_capacity(n * n);
    let mut yy = Vec::with_capacity(m * m);
    let mut xy = Vec::with_capacity(n * m);
    for &s2 in &sigma2 {
        let denom = two * s2;
        let kern = |p: usize, q: usize| (-dist[p * total + q] / denom).exp();
        xx.clear();
        yy.clear();
        xy.clear();
        for i in 0..n {
            for j in 0..n {
                xx.push(kern(i, j));
            }
        }
        for i in 0..m {
            for j in 0..m {
                yy.push(kern(n + i, n + j));
            }
        }
        for i in 0..n {
            for j in 0..m {
                xy.push(kern(i, n + j));
            }
        }
        let sxx = sorted_sum(&mut xx.clone())?;
        let syy = sorted_sum(&mut yy.clone())?;
        let sxy = sorted_sum(&mut xy.clone())?;
        value += sxx / (nf * nf) + syy / (mf * mf) - two * sxy / (nf * mf);

        if want_grad {
            let groups: [(&[F], usize, usize, usize, usize, F); 3] = [
                (&xx, 0, n, 0, n, F::one() / (nf * nf)),
                (&yy, n, m, n, m, F::one() / (mf * mf)),
                (&xy, 0, n, n, m, -two / (nf * mf)),
            ];
            for (vals, p0, np, q0, nq, c) in groups {
                for a in 0..np {
                    for b in 0..nq {
                        let (p, q) = (p0 + a, q0 + b);
                        if p == q {
                            continue;
                        }
                        let ck = c * vals[a * nq + b];
                        let dd = -ck / denom;
                        w[p * total + q] += dd;
                        w[q * total + p] += dd;
                        if let Some((_, md)) = median {
                            // σ² = μ²·M, so ∂K/∂M = K·D / (2σ²·M)
                            d_median += ck * dist[p * total + q] / (denom * md);
                        }
                    }
                }
            }
        }
    }

    if !want_grad {
        return Ok(MmdOut {
            value,
            grad: None,
            median_pair: median.map(|(p, _)| p),
        });
    }
    if let Some(((p, q), _)) = median {
        w[p * total + q] += d_median;
        w[q * total + p] += d_median;
    }

    let mut z = Vec::with_capacity(total * d);
    z.extend_from_slice(&x[..n * d]);
    z.extend_from_slice(&y[..m * d]);
    // grad_p = 2 (Σ_q W_pq) z_p − 2 (W z)_p
    let mut wz = vec![F::zero(); total * d];
    F::gemm(total, total, d, F::one(), &w, total, 1, &z, d, 1, F::zero(), &mut wz, d, 1);
    let mut grad = vec![F::zero(); total * d];
    for p in 0..total {
        let rs: F = w[p * total..(p + 1) * total].iter().copied().sum();
        for t in 0..d {
            grad[p * d + t] = two * (rs * z[p * d + t] - wz[p * d + t]);
        }
    }
    let gy = grad.split_off(n * d);
    Ok(MmdOut {
        value,
        grad: Some((grad, gy)),
        median_pair: median.map(|(p, _)| p),
    })
}
