use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::arch::{Architecture, Layout, Slots, NUM_CLASSES};
use super::ops::{self, Geometry};
use super::real::{matmul, Op, Real};
use crate::error::{Error, Result};
use crate::latent::{LatentVector, LATENT_DIM};
use crate::segmap::SegMap;

/// Posterior parameters of one encoded map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeResult {
    pub mu: LatentVector,
    pub log_var: [f32; LATENT_DIM],
}

/// Encoder, decoder and slice-regression head, with every parameter held
/// in one flat vector laid out as [`Architecture::layout`].
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel<R: Real = f32> {
    arch: Architecture,
    layout: Layout,
    params: Vec<R>,
}

/// Activations kept from a forward pass for back-propagation.
pub(crate) struct Trace<R> {
    pub batch: usize,
    enc_cols: Vec<Vec<R>>,
    enc_pre: Vec<Vec<R>>,
    pub h: Vec<R>,
    pub mu: Vec<R>,
    pub log_var: Vec<R>,
    pub eps: Vec<R>,
    pub z: Vec<R>,
    din_pre: Vec<R>,
    dec_in: Vec<Vec<R>>,
    dec_pre: Vec<Vec<R>>,
    pub adv: Vec<R>,
}

impl<R: Real> Trace<R> {
    /// Decoder logits `[class][batch][row][col]`.
    pub fn logits(&self) -> &[R] {
        self.dec_pre.last().expect("decoder has layers")
    }
}

/// Upstream gradients entering [`VaeModel::backward`].
pub(crate) struct Upstream<'a, R> {
    pub logits: &'a [R],
    pub mu: &'a [R],
    pub log_var: &'a [R],
    pub adv: &'a [R],
}

impl<R: Real> VaeModel<R> {
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let params = vec![R::zero(); layout.total];
        Ok(Self {
            arch,
            layout,
            params,
        })
    }

    /// Uniform initialization with variance `1 / fan_in`; biases start at 0.
    pub fn init<G: Rng + ?Sized>(arch: Architecture, rng: &mut G) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        for slot in &model.layout.tensors {
            if slot.is_bias() {
                continue;
            }
            let fan_in: usize = if slot.name.starts_with("dec") && slot.name != "dec_in.weight" {
                // Transposed conv [c_in][c_out][3][3]: each output sees c_in * 9 / stride^2.
                slot.shape[0] * 9 / 4
            } else {
                slot.shape[1..].iter().product()
            };
            let bound = libm::sqrt(3.0 / fan_in.max(1) as f64);
            for p in &mut model.params[slot.range()] {
                *p = R::of_f64(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn from_params(arch: Architecture, params: Vec<R>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if params.len() != layout.total {
            return Err(Error::SizeMismatch {
                expected: layout.total,
                actual: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(Self {
            arch,
            layout,
            params,
        })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[R] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [R] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Copy with parameters converted to another scalar type.
    pub fn cast<S: Real>(&self) -> VaeModel<S> {
        VaeModel {
            arch: self.arch.clone(),
            layout: self.layout.clone(),
            params: self.params.iter().map(|p| S::of_f64(p.as_f64())).collect(),
        }
    }

    fn slots(&self) -> Slots {
        Slots {
            layers: self.arch.layers.len(),
        }
    }

    fn t(&self, slot: usize) -> &[R] {
        &self.params[self.layout.tensors[slot].range()]
    }

    pub(crate) fn one_hot(&self, maps: &[&SegMap]) -> Result<Vec<R>> {
        let n = self.arch.grid;
        let plane = n * n;
        let batch = maps.len();
        let mut x = vec![R::zero(); NUM_CLASSES * batch * plane];
        for (b, m) in maps.iter().enumerate() {
            if m.size() != n {
                return Err(Error::SizeMismatch {
                    expected: n,
                    actual: m.size(),
                });
            }
            for (p, &l) in m.labels().iter().enumerate() {
                x[(l as usize * batch + b) * plane + p] = R::one();
            }
        }
        Ok(x)
    }

    fn geometry(&self, layer: usize, batch: usize) -> Geometry {
        let sides = self.arch.spatial_sizes();
        Geometry {
            channels: self.arch.channel_sizes()[layer],
            batch,
            big: sides[layer],
            small: sides[layer + 1],
            stride: self.arch.layers[layer].stride,
        }
    }

    /// Full forward pass. `eps` (latent x batch) perturbs the posterior
    /// mean; `None` decodes from the mean.
    pub(crate) fn forward(&self, x: &[R], batch: usize, eps: Option<&[R]>) -> Trace<R> {
        let s = self.slots();
        let k = self.arch.layers.len();
        let ch = self.arch.channel_sizes();
        let lat = self.arch.latent_dim;
        let f = self.arch.features();
        let plane_out = self.arch.bottleneck_side().pow(2);

        let mut enc_cols = Vec::with_capacity(k);
        let mut enc_pre: Vec<Vec<R>> = Vec::with_capacity(k);
        let mut input: Vec<R> = x.to_vec();
        for i in 0..k {
            let g = self.geometry(i, batch);
            let mut col = vec![R::zero(); g.col_rows() * g.col_cols()];
            ops::im2col(&g, &input, &mut col);
            let mut pre = vec![R::zero(); ch[i + 1] * g.col_cols()];
            matmul(
                Op::N,
                Op::N,
                ch[i + 1],
                g.col_rows(),
                g.col_cols(),
                self.t(s.enc_w(i)),
                &col,
                R::zero(),
                &mut pre,
            );
            ops::add_bias(&mut pre, self.t(s.enc_b(i)), g.col_cols());
            input = pre.clone();
            ops::elu_inplace(&mut input);
            enc_cols.push(col);
            enc_pre.push(pre);
        }

        let mut h = vec![R::zero(); f * batch];
        ops::flatten(&input, ch[k], batch, plane_out, &mut h);

        let head = |w: usize, b: usize| {
            let mut out = vec![R::zero(); lat * batch];
            matmul(Op::N, Op::N, lat, f, batch, self.t(w), &h, R::zero(), &mut out);
            ops::add_bias(&mut out, self.t(b), batch);
            out
        };
        let mu = head(s.mu_w(), s.mu_b());
        let log_var = head(s.lv_w(), s.lv_b());
        let half = R::of_f64(0.5);
        let (z, eps) = match eps {
            Some(e) => {
                let z = mu
                    .iter()
                    .zip(&log_var)
                    .zip(e)
                    .map(|((&m, &lv), &e)| m + (half * lv).exp() * e)
                    .collect();
                (z, e.to_vec())
            }
            None => (mu.clone(), vec![R::zero(); mu.len()]),
        };

        let mut trace = Trace {
            batch,
            enc_cols,
            enc_pre,
            h,
            mu,
            log_var,
            eps,
            z,
            din_pre: Vec::new(),
            dec_in: Vec::new(),
            dec_pre: Vec::new(),
            adv: Vec::new(),
        };
        self.decode_into(&mut trace);

        let mut adv = vec![R::zero(); batch];
        matmul(Op::N, Op::N, 1, lat, batch, self.t(s.adv_w()), &trace.z, R::zero(), &mut adv);
        ops::add_bias(&mut adv, self.t(s.adv_b()), batch);
        trace.adv = adv;
        trace
    }

    /// Runs the decoder on `trace.z`, filling the decoder activations.
    fn decode_into(&self, trace: &mut Trace<R>) {
        let s = self.slots();
        let k = self.arch.layers.len();
        let ch = self.arch.channel_sizes();
        let lat = self.arch.latent_dim;
        let f = self.arch.features();
        let batch = trace.batch;
        let plane_out = self.arch.bottleneck_side().pow(2);

        let mut din_pre = vec![R::zero(); f * batch];
        matmul(Op::N, Op::N, f, lat, batch, self.t(s.din_w()), &trace.z, R::zero(), &mut din_pre);
        ops::add_bias(&mut din_pre, self.t(s.din_b()), batch);
        let mut act = din_pre.clone();
        ops::elu_inplace(&mut act);
        let mut x = vec![R::zero(); f * batch];
        ops::unflatten(&act, ch[k], batch, plane_out, &mut x);

        let mut dec_in = Vec::with_capacity(k);
        let mut dec_pre = Vec::with_capacity(k);
        for j in 0..k {
            let e = k - 1 - j;
            let g = self.geometry(e, batch);
            let c_in = ch[e + 1];
            let mut cols = vec![R::zero(); g.col_rows() * g.col_cols()];
            matmul(
                Op::T,
                Op::N,
                g.col_rows(),
                c_in,
                g.col_cols(),
                self.t(s.dec_w(j)),
                &x,
                R::zero(),
                &mut cols,
            );
            let mut y = vec![R::zero(); g.big_len()];
            ops::col2im(&g, &cols, &mut y);
            ops::add_bias(&mut y, self.t(s.dec_b(j)), batch * g.big * g.big);
            let next = if j + 1 < k {
                let mut a = y.clone();
                ops::elu_inplace(&mut a);
                a
            } else {
                Vec::new()
            };
            dec_in.push(core::mem::replace(&mut x, next));
            dec_pre.push(y);
        }
        trace.din_pre = din_pre;
        trace.dec_in = dec_in;
        trace.dec_pre = dec_pre;
    }

    /// Accumulates parameter gradients into `grad` (same layout as params).
    pub(crate) fn backward(&self, trace: &Trace<R>, up: &Upstream<'_, R>, grad: &mut [R]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let s = self.slots();
        let k = self.arch.layers.len();
        let ch = self.arch.channel_sizes();
        let lat = self.arch.latent_dim;
        let f = self.arch.features();
        let batch = trace.batch;
        let plane_out = self.arch.bottleneck_side().pow(2);
        let layout = &self.layout;
        let range = |slot: usize| layout.tensors[slot].range();

        // Decoder, last layer first. `dy` is the gradient of the layer output
        // before its activation.
        let mut dy: Vec<R> = up.logits.to_vec();
        for j in (0..k).rev() {
            let e = k - 1 - j;
            let g = self.geometry(e, batch);
            let c_in = ch[e + 1];
            ops::bias_grad(&dy, &mut grad[range(s.dec_b(j))], batch * g.big * g.big);
            let mut dcols = vec![R::zero(); g.col_rows() * g.col_cols()];
            ops::im2col(&g, &dy, &mut dcols);
            matmul(
                Op::N,
                Op::T,
                c_in,
                g.col_cols(),
                g.col_rows(),
                &trace.dec_in[j],
                &dcols,
                R::one(),
                &mut grad[range(s.dec_w(j))],
            );
            let mut dx = vec![R::zero(); c_in * g.col_cols()];
            matmul(
                Op::N,
                Op::N,
                c_in,
                g.col_rows(),
                g.col_cols(),
                self.t(s.dec_w(j)),
                &dcols,
                R::zero(),
                &mut dx,
            );
            if j > 0 {
                for (d, &p) in dx.iter_mut().zip(&trace.dec_pre[j - 1]) {
                    *d = *d * ops::elu_grad(p);
                }
            }
            dy = dx;
        }

        // Decoder input projection.
        let mut d_din = vec![R::zero(); f * batch];
        ops::flatten(&dy, ch[k], batch, plane_out, &mut d_din);
        for (d, &p) in d_din.iter_mut().zip(&trace.din_pre) {
            *d = *d * ops::elu_grad(p);
        }
        ops::bias_grad(&d_din, &mut grad[range(s.din_b())], batch);
        matmul(Op::N, Op::T, f, batch, lat, &d_din, &trace.z, R::one(), &mut grad[range(s.din_w())]);
        let mut dz = vec![R::zero(); lat * batch];
        matmul(Op::T, Op::N, lat, f, batch, self.t(s.din_w()), &d_din, R::zero(), &mut dz);

        // Slice regression head.
        ops::bias_grad(up.adv, &mut grad[range(s.adv_b())], batch);
        matmul(Op::N, Op::T, 1, batch, lat, up.adv, &trace.z, R::one(), &mut grad[range(s.adv_w())]);
        matmul(Op::T, Op::N, lat, 1, batch, self.t(s.adv_w()), up.adv, R::one(), &mut dz);

        // Reparameterization z = mu + exp(log_var / 2) * eps.
        let half = R::of_f64(0.5);
        let mut dmu: Vec<R> = dz.iter().zip(up.mu).map(|(&a, &b)| a + b).collect();
        let mut dlv: Vec<R> = (0..lat * batch)
            .map(|i| {
                let sigma = (half * trace.log_var[i]).exp();
                dz[i] * trace.eps[i] * half * sigma + up.log_var[i]
            })
            .collect();

        // Heads.
        let mut dh = vec![R::zero(); f * batch];
        for (dv, w, b) in [
            (&mut dmu, s.mu_w(), s.mu_b()),
            (&mut dlv, s.lv_w(), s.lv_b()),
        ] {
            ops::bias_grad(dv, &mut grad[range(b)], batch);
            matmul(Op::N, Op::T, lat, batch, f, dv, &trace.h, R::one(), &mut grad[range(w)]);
            matmul(Op::T, Op::N, f, lat, batch, self.t(w), dv, R::one(), &mut dh);
        }

        // Encoder.
        let mut dact = vec![R::zero(); f * batch];
        ops::unflatten(&dh, ch[k], batch, plane_out, &mut dact);
        for i in (0..k).rev() {
            let g = self.geometry(i, batch);
            let mut dpre = dact;
            for (d, &p) in dpre.iter_mut().zip(&trace.enc_pre[i]) {
                *d = *d * ops::elu_grad(p);
            }
            ops::bias_grad(&dpre, &mut grad[range(s.enc_b(i))], g.col_cols());
            matmul(
                Op::N,
                Op::T,
                ch[i + 1],
                g.col_cols(),
                g.col_rows(),
                &dpre,
                &trace.enc_cols[i],
                R::one(),
                &mut grad[range(s.enc_w(i))],
            );
            if i == 0 {
                break;
            }
            let mut dcol = vec![R::zero(); g.col_rows() * g.col_cols()];
            matmul(
                Op::T,
                Op::N,
                g.col_rows(),
                ch[i + 1],
                g.col_cols(),
                self.t(s.enc_w(i)),
                &dpre,
                R::zero(),
                &mut dcol,
            );
            let mut dx = vec![R::zero(); g.big_len()];
            ops::col2im(&g, &dcol, &mut dx);
            dact = dx;
        }
    }

    /// Decoder logits for a batch of latent codes (`latent x batch` layout).
    pub(crate) fn decode_logits(&self, z: Vec<R>, batch: usize) -> Vec<R> {
        let mut trace = Trace {
            batch,
            enc_cols: Vec::new(),
            enc_pre: Vec::new(),
            h: Vec::new(),
            mu: Vec::new(),
            log_var: Vec::new(),
            eps: Vec::new(),
            z,
            din_pre: Vec::new(),
            dec_in: Vec::new(),
            dec_pre: Vec::new(),
            adv: Vec::new(),
        };
        self.decode_into(&mut trace);
        trace.dec_pre.pop().expect("decoder has layers")
    }

    fn ensure_production_latent(&self) -> Result<()> {
        if self.arch.latent_dim != LATENT_DIM {
            return Err(Error::Architecture(alloc::format!(
                "latent width {} but latent vectors have {}",
                self.arch.latent_dim,
                LATENT_DIM
            )));
        }
        Ok(())
    }

    /// Posterior parameters for a batch of registered maps.
    pub fn encode_batch(&self, maps: &[&SegMap]) -> Result<Vec<EncodeResult>> {
        self.ensure_production_latent()?;
        if maps.is_empty() {
            return Ok(Vec::new());
        }
        let x = self.one_hot(maps)?;
        let trace = self.forward_encoder_only(&x, maps.len());
        let batch = maps.len();
        Ok((0..batch)
            .map(|b| {
                let mut mu = LatentVector::ZERO;
                let mut log_var = [0.0f32; LATENT_DIM];
                for l in 0..LATENT_DIM {
                    mu[l] = trace.0[l * batch + b].as_f64() as f32;
                    log_var[l] = trace.1[l * batch + b].as_f64() as f32;
                }
                EncodeResult { mu, log_var }
            })
            .collect())
    }

    pub fn encode(&self, map: &SegMap) -> Result<EncodeResult> {
        Ok(self.encode_batch(&[map])?.remove(0))
    }

    /// Encoder half of [`forward`] without keeping activations: (mu, log_var).
    fn forward_encoder_only(&self, x: &[R], batch: usize) -> (Vec<R>, Vec<R>) {
        let s = self.slots();
        let k = self.arch.layers.len();
        let ch = self.arch.channel_sizes();
        let lat = self.arch.latent_dim;
        let f = self.arch.features();
        let mut input = x.to_vec();
        for i in 0..k {
            let g = self.geometry(i, batch);
            let mut col = vec![R::zero(); g.col_rows() * g.col_cols()];
            ops::im2col(&g, &input, &mut col);
            let mut pre = vec![R::zero(); ch[i + 1] * g.col_cols()];
            matmul(
                Op::N,
                Op::N,
                ch[i + 1],
                g.col_rows(),
                g.col_cols(),
                self.t(s.enc_w(i)),
                &col,
                R::zero(),
                &mut pre,
            );
            ops::add_bias(&mut pre, self.t(s.enc_b(i)), g.col_cols());
            ops::elu_inplace(&mut pre);
            input = pre;
        }
        let mut h = vec![R::zero(); f * batch];
        ops::flatten(&input, ch[k], batch, self.arch.bottleneck_side().pow(2), &mut h);
        let head = |w: usize, b: usize| {
            let mut out = vec![R::zero(); lat * batch];
            matmul(Op::N, Op::N, lat, f, batch, self.t(w), &h, R::zero(), &mut out);
            ops::add_bias(&mut out, self.t(b), batch);
            out
        };
        (head(s.mu_w(), s.mu_b()), head(s.lv_w(), s.lv_b()))
    }

    /// Deterministic decoding: per-pixel argmax of the class logits, ties
    /// resolved towards the lower class id.
    pub fn decode_batch(&self, zs: &[LatentVector]) -> Result<Vec<SegMap>> {
        self.ensure_production_latent()?;
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        if zs.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("latent vector"));
        }
        let batch = zs.len();
        let mut z = vec![R::zero(); LATENT_DIM * batch];
        for (b, v) in zs.iter().enumerate() {
            for l in 0..LATENT_DIM {
                z[l * batch + b] = R::of_f64(v[l] as f64);
            }
        }
        let logits = self.decode_logits(z, batch);
        let n = self.arch.grid;
        let plane = n * n;
        Ok((0..batch)
            .map(|b| {
                let labels = (0..plane)
                    .map(|p| {
                        let mut best = 0u8;
                        let mut best_v = logits[b * plane + p];
                        for c in 1..NUM_CLASSES {
                            let v = logits[(c * batch + b) * plane + p];
                            if v > best_v {
                                best_v = v;
                                best = c as u8;
                            }
                        }
                        best
                    })
                    .collect();
                SegMap::from_labels(n, labels).expect("argmax yields class ids")
            })
            .collect())
    }

    pub fn decode(&self, z: &LatentVector) -> Result<SegMap> {
        Ok(self.decode_batch(core::slice::from_ref(z))?.remove(0))
    }

    /// Slice-position prediction of the regression head for each code.
    pub fn predict_slice_position(&self, zs: &[LatentVector]) -> Result<Vec<f64>> {
        self.ensure_production_latent()?;
        let s = self.slots();
        let w = self.t(s.adv_w());
        let b = self.t(s.adv_b())[0];
        Ok(zs
            .iter()
            .map(|z| {
                z.0.iter()
                    .zip(w)
                    .fold(b.as_f64(), |acc, (&zi, &wi)| acc + zi as f64 * wi.as_f64())
            })
            .collect())
    }
}
