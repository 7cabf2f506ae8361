//! Encoder-forecaster network.
//!
//! Encoder, per level `l` (finest first) and input step `t`:
//! `e = leaky(embed_l(s_t))`, `h = GRU_l(e, h)`, and `s_t` for level `l+1`
//! is `downsample2(h)`. The final encoder states initialise the forecaster.
//!
//! Forecaster, per output step, deepest level first: the deepest GRU runs on
//! its state alone; every other level takes
//! `concat(upsample2(state_{l+1}), encoder_final_l)` as input. The head maps
//! the finest state through a 1×1 convolution and a logistic function.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, Error, Result};
use crate::grid::{default_variable_names, Dims, GridSequence};
use crate::nn::act::{leaky_relu_backward, leaky_relu_inplace, sigmoid_backward, sigmoid_inplace};
use crate::nn::{
    downsample2, downsample2_backward, upsample2, upsample2_backward, Conv2d, ConvGru, GruCache, ParameterStore,
    Real, Tensor4, LEAKY_SLOPE,
};

use super::spec::ForecasterSpec;

#[derive(Clone, Debug, PartialEq)]
struct Layers {
    embed: Vec<Conv2d>,
    encoder: Vec<ConvGru>,
    forecaster: Vec<ConvGru>,
    head: Conv2d,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forecaster<T> {
    spec: ForecasterSpec,
    params: ParameterStore<T>,
    layers: Layers,
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<T> {
    /// `[level][t]` input to the level's embedding convolution.
    enc_in: Vec<Vec<Tensor4<T>>>,
    /// `[level][t]` embedding pre-activation.
    enc_pre: Vec<Vec<Tensor4<T>>>,
    enc_gru: Vec<Vec<GruCache<T>>>,
    /// `[level][t]` forecaster GRU caches.
    dec_gru: Vec<Vec<GruCache<T>>>,
    /// Finest forecaster state per output step (head input).
    head_in: Vec<Tensor4<T>>,
    /// Logistic outputs per output step.
    outputs: Vec<Tensor4<T>>,
}

impl<T> ForwardCache<T> {
    pub fn outputs(&self) -> &[Tensor4<T>] {
        &self.outputs
    }
}

impl<T: Real> Forecaster<T> {
    /// Builds a freshly initialised model; identical `(spec, seed)` give identical parameters.
    pub fn build(spec: &ForecasterSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        let gate = spec.gate_type;
        let ch = &spec.channels;
        let mut embed = Vec::with_capacity(spec.levels);
        let mut encoder = Vec::with_capacity(spec.levels);
        for l in 0..spec.levels {
            let cin = if l == 0 { spec.in_channels } else { ch[l - 1] };
            embed.push(Conv2d::new(&mut params, &format!("enc{l}.embed"), 3, cin, ch[l], &mut rng)?);
            encoder.push(ConvGru::new(&mut params, &format!("enc{l}.gru"), ch[l], ch[l], gate, &mut rng)?);
        }
        let mut forecaster = Vec::with_capacity(spec.levels);
        for l in 0..spec.levels {
            let cin = if l + 1 == spec.levels { 0 } else { ch[l + 1] + ch[l] };
            forecaster.push(ConvGru::new(&mut params, &format!("dec{l}.gru"), cin, ch[l], gate, &mut rng)?);
        }
        let head = Conv2d::new(&mut params, "head", 1, ch[0], spec.out_channels, &mut rng)?;
        Ok(Forecaster {
            spec: spec.clone(),
            params,
            layers: Layers {
                embed,
                encoder,
                forecaster,
                head,
            },
        })
    }

    pub fn spec(&self) -> &ForecasterSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParameterStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.count()
    }

    /// Same architecture and weights in another precision.
    pub fn cast<U: Real>(&self) -> Forecaster<U> {
        Forecaster {
            spec: self.spec.clone(),
            params: self.params.cast(),
            layers: self.layers.clone(),
        }
    }

    fn check_frames(&self, frames: &[Tensor4<T>]) -> Result<usize> {
        let s = &self.spec;
        if frames.len() != s.t_in {
            return Err(shape_err!("expected {} input frames, got {}", s.t_in, frames.len()));
        }
        let n = frames[0].shape()[0];
        for f in frames {
            f.check_shape([n, s.height, s.width, s.in_channels], "input frame")?;
        }
        Ok(n)
    }

    /// Runs the network on `t_in` frames of shape `(N, H, W, C_in)`.
    pub fn forward(&self, frames: &[Tensor4<T>]) -> Result<ForwardCache<T>> {
        let n = self.check_frames(frames)?;
        let s = &self.spec;
        let p = &self.params;
        let slope = T::lit(LEAKY_SLOPE);
        let levels = s.levels;

        let mut enc_in: Vec<Vec<Tensor4<T>>> = vec![frames.to_vec()];
        let mut enc_pre = Vec::with_capacity(levels);
        let mut enc_gru = Vec::with_capacity(levels);
        let mut enc_final = Vec::with_capacity(levels);
        for l in 0..levels {
            let (hl, wl) = (s.height >> l, s.width >> l);
            let mut h = Tensor4::zeros(n, hl, wl, s.channels[l]);
            let mut pres = Vec::with_capacity(s.t_in);
            let mut caches = Vec::with_capacity(s.t_in);
            let mut next_in = Vec::with_capacity(s.t_in);
            for t in 0..s.t_in {
                let pre = self.layers.embed[l].forward(p, &enc_in[l][t])?;
                let mut e = pre.clone();
                leaky_relu_inplace(e.data_mut(), slope);
                let (h_new, cache) = self.layers.encoder[l].forward(p, &e, &h)?;
                h = h_new;
                if l + 1 < levels {
                    next_in.push(downsample2(&h)?);
                }
                pres.push(pre);
                caches.push(cache);
            }
            enc_pre.push(pres);
            enc_gru.push(caches);
            enc_final.push(h);
            if l + 1 < levels {
                enc_in.push(next_in);
            }
        }

        let mut state = enc_final.clone();
        let mut dec_gru: Vec<Vec<GruCache<T>>> = (0..levels).map(|_| Vec::with_capacity(s.t_out)).collect();
        let mut head_in = Vec::with_capacity(s.t_out);
        let mut outputs = Vec::with_capacity(s.t_out);
        for _ in 0..s.t_out {
            for l in (0..levels).rev() {
                let x = if l + 1 == levels {
                    let [n, hl, wl, _] = state[l].shape();
                    Tensor4::zeros(n, hl, wl, 0)
                } else {
                    Tensor4::concat_channels(&upsample2(&state[l + 1]), &enc_final[l])?
                };
                let (h_new, cache) = self.layers.forecaster[l].forward(p, &x, &state[l])?;
                state[l] = h_new;
                dec_gru[l].push(cache);
            }
            let mut y = self.layers.head.forward(p, &state[0])?;
            sigmoid_inplace(y.data_mut());
            head_in.push(state[0].clone());
            outputs.push(y);
        }
        Ok(ForwardCache {
            enc_in,
            enc_pre,
            enc_gru,
            dec_gru,
            head_in,
            outputs,
        })
    }

    /// Back-propagates `grad_outputs` (gradients with respect to the logistic
    /// outputs, one per output step) and accumulates into the parameter gradients.
    pub fn backward(&mut self, cache: &ForwardCache<T>, grad_outputs: &[Tensor4<T>]) -> Result<()> {
        let s = self.spec.clone();
        let levels = s.levels;
        if grad_outputs.len() != s.t_out {
            return Err(shape_err!(
                "expected {} output gradients, got {}",
                s.t_out,
                grad_outputs.len()
            ));
        }
        let slope = T::lit(LEAKY_SLOPE);
        let Self { params, layers, .. } = self;

        let zeros_like = |l: usize| {
            let [n, hl, wl, c] = cache.enc_gru[l][0].state_shape();
            Tensor4::zeros(n, hl, wl, c)
        };
        let mut d_enc_final: Vec<Tensor4<T>> = (0..levels).map(zeros_like).collect();
        let mut d_state: Vec<Tensor4<T>> = (0..levels).map(zeros_like).collect();

        for t in (0..s.t_out).rev() {
            let mut dy = grad_outputs[t].clone();
            dy.check_shape(cache.outputs[t].shape(), "output gradient")?;
            sigmoid_backward(dy.data_mut(), cache.outputs[t].data());
            let mut acc = layers.head.backward(params, &cache.head_in[t], &dy)?;
            acc.add_assign(&d_state[0])?;
            for l in 0..levels {
                let (dx, dh_prev) = layers.forecaster[l].backward(params, &cache.dec_gru[l][t], &acc)?;
                d_state[l] = dh_prev;
                if l + 1 < levels {
                    let (d_up, d_skip) = dx.split_channels(s.channels[l + 1]);
                    d_enc_final[l].add_assign(&d_skip)?;
                    let mut next = upsample2_backward(&d_up)?;
                    next.add_assign(&d_state[l + 1])?;
                    acc = next;
                }
            }
        }
        for (d, carry) in d_enc_final.iter_mut().zip(&d_state) {
            d.add_assign(carry)?;
        }

        let mut d_next_in: Vec<Tensor4<T>> = Vec::new();
        for l in (0..levels).rev() {
            let mut dh = d_enc_final[l].clone();
            let mut d_in = Vec::with_capacity(s.t_in);
            for t in (0..s.t_in).rev() {
                if l + 1 < levels {
                    dh.add_assign(&downsample2_backward(&d_next_in[t]))?;
                }
                let (mut de, dh_prev) = layers.encoder[l].backward(params, &cache.enc_gru[l][t], &dh)?;
                leaky_relu_backward(de.data_mut(), cache.enc_pre[l][t].data(), slope);
                if l == 0 {
                    layers.embed[l].backward_params_only(params, &cache.enc_in[l][t], &de)?;
                } else {
                    d_in.push(layers.embed[l].backward(params, &cache.enc_in[l][t], &de)?);
                }
                dh = dh_prev;
            }
            d_in.reverse();
            d_next_in = d_in;
        }
        Ok(())
    }

    /// Mean squared error of one forward pass against `targets`, with gradients
    /// accumulated into the parameter store. Returns the loss.
    pub fn loss_and_backward(&mut self, frames: &[Tensor4<T>], targets: &[Tensor4<T>]) -> Result<f64> {
        let cache = self.forward(frames)?;
        if targets.len() != self.spec.t_out {
            return Err(shape_err!("expected {} target frames, got {}", self.spec.t_out, targets.len()));
        }
        let count: usize = targets.iter().map(|t| t.len()).sum();
        let scale = T::lit(2.0 / count as f64);
        let mut loss = 0.0f64;
        let mut grads = Vec::with_capacity(targets.len());
        for (y, target) in cache.outputs.iter().zip(targets) {
            let g = y.zip_map(target, |a, b| a - b)?;
            loss += g.data().iter().map(|d| d.to_f64().unwrap().powi(2)).sum::<f64>();
            grads.push(g.map(|d| d * scale));
        }
        let loss = loss / count as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {loss}")));
        }
        self.backward(&cache, &grads)?;
        Ok(loss)
    }

    /// Predicts `t_out` frames for each sequence in the batch.
    pub fn predict_batch(&self, inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
        let frames = stack_frames(inputs, &self.spec, self.spec.t_in, self.spec.in_channels)?;
        let cache = self.forward(&frames)?;
        unstack_frames(&cache.outputs, inputs)
    }

    pub fn predict(&self, input: &GridSequence) -> Result<GridSequence> {
        Ok(self.predict_batch(&[input])?.remove(0))
    }
}

/// Stacks `t` frames of each sequence into `t` tensors of shape `(N, H, W, C)`.
pub(crate) fn stack_frames<T: Real>(
    seqs: &[&GridSequence],
    spec: &ForecasterSpec,
    t: usize,
    c: usize,
) -> Result<Vec<Tensor4<T>>> {
    if seqs.is_empty() {
        return Err(shape_err!("empty batch"));
    }
    let want = Dims::new(t, spec.height, spec.width, c);
    for s in seqs {
        if s.dims() != want {
            return Err(shape_err!("sequence {} does not match model shape {want}", s.dims()));
        }
    }
    let n = seqs.len();
    let frame_len = want.frame_len();
    (0..t)
        .map(|ti| {
            let mut data = Vec::with_capacity(n * frame_len);
            for s in seqs {
                data.extend(s.frame(ti).iter().map(|&v| T::from_f32(v).unwrap()));
            }
            Tensor4::from_vec([n, spec.height, spec.width, c], data)
        })
        .collect()
}

fn unstack_frames<T: Real>(outputs: &[Tensor4<T>], inputs: &[&GridSequence]) -> Result<Vec<GridSequence>> {
    let [n, h, w, c] = outputs[0].shape();
    let frame_len = h * w * c;
    (0..n)
        .map(|i| {
            let mut data = Vec::with_capacity(outputs.len() * frame_len);
            for o in outputs {
                data.extend(o.data()[i * frame_len..(i + 1) * frame_len].iter().map(|v| v.to_f32().unwrap()));
            }
            let src = inputs[i];
            let names = if src.dims().c == c {
                src.variable_names().to_vec()
            } else {
                default_variable_names(c)
            };
            GridSequence::new(Dims::new(outputs.len(), h, w, c), data, names, src.step_minutes())
        })
        .collect()
}

/// Repeats the last input frame `t_out` times.
pub fn persistence_baseline(input: &GridSequence, t_out: usize) -> Result<GridSequence> {
    if t_out == 0 {
        return Err(shape_err!("t_out must be positive"));
    }
    let d = input.dims();
    let last = input.frame(d.t - 1);
    let mut data = Vec::with_capacity(t_out * last.len());
    for _ in 0..t_out {
        data.extend_from_slice(last);
    }
    GridSequence::new(
        Dims { t: t_out, ..d },
        data,
        input.variable_names().to_vec(),
        input.step_minutes(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{grad_check, GradCheckConfig};
    use crate::nn::GateType;
    use rand::Rng;

    fn micro(gate: GateType) -> ForecasterSpec {
        ForecasterSpec {
            levels: 2,
            channels: vec![2, 3],
            gate_type: gate,
            t_in: 2,
            t_out: 2,
            in_channels: 1,
            out_channels: 1,
            height: 4,
            width: 4,
        }
    }

    fn random_frames(n: usize, spec: &ForecasterSpec, t: usize, rng: &mut ChaCha8Rng) -> Vec<Tensor4<f64>> {
        (0..t)
            .map(|_| {
                let len = n * spec.height * spec.width * spec.in_channels;
                Tensor4::from_vec(
                    [n, spec.height, spec.width, spec.in_channels],
                    (0..len).map(|_| rng.random_range(0.0..1.0)).collect(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn build_is_deterministic() {
        let spec = micro(GateType::Conv);
        let a = Forecaster::<f32>::build(&spec, 7).unwrap();
        let b = Forecaster::<f32>::build(&spec, 7).unwrap();
        let c = Forecaster::<f32>::build(&spec, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn single_level_rejected() {
        let spec = micro(GateType::Conv).with_channels(vec![4]);
        assert!(Forecaster::<f32>::build(&spec, 0).is_err());
    }

    #[test]
    fn shallow_has_fewer_parameters() {
        for gate in [GateType::Conv, GateType::Residual] {
            let deep = ForecasterSpec::deep(1, 32, 32, 4, 8).with_gate(gate);
            let shallow = deep.without_deepest_level();
            let d = Forecaster::<f32>::build(&deep, 0).unwrap().parameter_count();
            let s = Forecaster::<f32>::build(&shallow, 0).unwrap().parameter_count();
            assert!(s < d, "{gate}: shallow {s} vs deep {d}");
        }
    }

    #[test]
    fn prediction_shape_and_range() {
        let spec = ForecasterSpec {
            t_out: 3,
            in_channels: 2,
            out_channels: 2,
            ..micro(GateType::Residual)
        };
        let f = Forecaster::<f32>::build(&spec, 1).unwrap();
        let data = (0..2 * 4 * 4 * 2).map(|i| (i % 7) as f32 / 7.0).collect();
        let input = GridSequence::from_data(Dims::new(2, 4, 4, 2), data).unwrap();
        let out = f.predict(&input).unwrap();
        assert_eq!(out.dims(), Dims::new(3, 4, 4, 2));
        assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let wrong = GridSequence::zeros(Dims::new(3, 4, 4, 2)).unwrap();
        assert!(matches!(f.predict(&wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn batch_prediction_matches_single() {
        let spec = micro(GateType::Conv);
        let f = Forecaster::<f32>::build(&spec, 2).unwrap();
        let a = GridSequence::from_data(Dims::new(2, 4, 4, 1), (0..32).map(|i| i as f32 / 32.0).collect()).unwrap();
        let b = GridSequence::from_data(Dims::new(2, 4, 4, 1), (0..32).map(|i| (31 - i) as f32 / 32.0).collect()).unwrap();
        let batch = f.predict_batch(&[&a, &b]).unwrap();
        assert_eq!(batch[0], f.predict(&a).unwrap());
        assert_eq!(batch[1], f.predict(&b).unwrap());
    }

    fn end_to_end_gradcheck(gate: GateType) {
        let spec = micro(gate);
        let mut model = Forecaster::<f64>::build(&spec, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for p in model.params_mut().params_mut() {
            p.value.iter_mut().for_each(|v| *v += rng.random_range(-0.1..0.1));
        }
        let frames = random_frames(2, &spec, spec.t_in, &mut rng);
        let targets = random_frames(2, &spec, spec.t_out, &mut rng);
        let mut theta = model.params().flat_values();
        let report = grad_check(
            &mut theta,
            |t| {
                model.params_mut().set_flat_values(t)?;
                model.params_mut().zero_grad();
                let loss = model.loss_and_backward(&frames, &targets)?;
                Ok((loss, model.params().flat_grads()))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{gate}: {report:?}");
    }

    #[test]
    fn micro_model_gradients_conv() {
        end_to_end_gradcheck(GateType::Conv);
    }

    #[test]
    fn micro_model_gradients_residual() {
        end_to_end_gradcheck(GateType::Residual);
    }

    #[test]
    fn persistence_repeats_last_frame() {
        let data = (0..3 * 4).map(|i| i as f32 / 12.0).collect();
        let input = GridSequence::from_data(Dims::new(3, 2, 2, 1), data).unwrap();
        let p = persistence_baseline(&input, 4).unwrap();
        assert_eq!(p.dims().t, 4);
        for t in 0..4 {
            assert_eq!(p.frame(t), input.frame(2));
        }
        assert!(persistence_baseline(&input, 0).is_err());
    }
}
