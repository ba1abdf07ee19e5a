use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{LayerKind, LayerSpec};
use super::spec::EennSpec;
use crate::autodiff::{he_uniform, Gradients, ParamSet, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Which parts of the network a forward pass evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardMode {
    /// Backbone and final classifier only; early exits are skipped.
    FinalOnly,
    All,
}

/// Tape handles produced by [`EennModel::forward`].
#[derive(Debug)]
pub struct ForwardOutputs {
    /// Logits `[N, classes]` per evaluated exit, final exit last.
    pub logits: Vec<Var>,
    /// Confidences `[N, 1]` per evaluated exit; the final one is constant 1.
    pub confidences: Vec<Var>,
    params: Vec<Option<Var>>,
}

/// An exit layout together with its weights.
#[derive(Clone, Debug)]
pub struct EennModel {
    pub spec: EennSpec,
    pub params: ParamSet,
}

fn stacks(spec: &EennSpec) -> Vec<(String, &[LayerSpec])> {
    let mut out = vec![("stem".to_string(), spec.stem.as_slice())];
    for (b, block) in spec.blocks.iter().enumerate() {
        out.push((format!("block{b}"), block.as_slice()));
    }
    let last = spec.exits.len() - 1;
    for (i, e) in spec.exits.iter().enumerate() {
        if i == last {
            out.push(("final.fc".into(), e.head.classifier.as_slice()));
        } else {
            let n = i + 1;
            out.push((format!("exit{n}.conv"), e.head.trunk.as_slice()));
            out.push((format!("exit{n}.fc"), e.head.classifier.as_slice()));
            out.push((format!("exit{n}.conf"), e.head.confidence.as_slice()));
        }
    }
    out
}

impl EennModel {
    /// Fan-in scaled uniform weights and zero biases, deterministic in `seed`.
    pub fn init(spec: EennSpec, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, layers) in stacks(&spec) {
            for l in layers {
                let (w_shape, fan_in, out) = match l.kind {
                    LayerKind::Conv2d { kernel, .. } => {
                        let c_in = l.input[0];
                        (
                            vec![l.output[0], c_in, kernel, kernel],
                            c_in * kernel * kernel,
                            l.output[0],
                        )
                    }
                    LayerKind::Dense => (vec![l.output[0], l.input[0]], l.input[0], l.output[0]),
                    _ => continue,
                };
                params.insert(format!("{name}.w"), he_uniform(w_shape, fan_in, &mut rng));
                params.insert(format!("{name}.b"), Tensor::zeros(vec![out]));
            }
        }
        Ok(EennModel { spec, params })
    }

    /// Indices of the stem, block and final-classifier parameters.
    pub fn backbone_param_indices(&self) -> Vec<usize> {
        self.params
            .names()
            .iter()
            .enumerate()
            .filter(|(_, n)| !n.starts_with("exit"))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn all_param_indices(&self) -> Vec<usize> {
        (0..self.params.len()).collect()
    }

    fn run_stack(
        &self,
        tape: &mut Tape,
        mut x: Var,
        name: &str,
        layers: &[LayerSpec],
        vars: &mut [Option<Var>],
    ) -> Result<Var> {
        for l in layers {
            x = match l.kind {
                LayerKind::Conv2d { stride, pad, .. } => {
                    let (w, b) = self.param_pair(tape, name, vars)?;
                    tape.conv2d(x, w, b, stride, pad)?
                }
                LayerKind::Dense => {
                    let (w, b) = self.param_pair(tape, name, vars)?;
                    tape.dense(x, w, b)?
                }
                LayerKind::Relu => tape.relu(x)?,
                LayerKind::Sigmoid => tape.sigmoid(x)?,
                LayerKind::MaxPool2d { window } => tape.maxpool2d(x, window)?,
                LayerKind::Flatten => tape.flatten(x)?,
            };
        }
        Ok(x)
    }

    fn param_pair(
        &self,
        tape: &mut Tape,
        name: &str,
        vars: &mut [Option<Var>],
    ) -> Result<(Var, Var)> {
        let mut get = |suffix: &str| -> Result<Var> {
            let key = format!("{name}.{suffix}");
            let i = self
                .params
                .index_of(&key)
                .ok_or_else(|| Error::contract(format!("missing parameter {key}")))?;
            Ok(*vars[i].get_or_insert_with(|| tape.leaf(self.params.tensor(i))))
        };
        Ok((get("w")?, get("b")?))
    }

    /// Records one forward pass of `x` (`[N, C, H, W]`) on `tape`.
    pub fn forward(
        &self,
        tape: &mut Tape,
        x: &Tensor,
        mode: ForwardMode,
    ) -> Result<ForwardOutputs> {
        let s = x.shape();
        if s.len() != 4 || s[1..] != self.spec.input {
            return Err(Error::shape(
                "forward",
                format!("batch {s:?} does not match input {:?}", self.spec.input),
            ));
        }
        let n = s[0];
        let mut vars = vec![None; self.params.len()];
        let mut h = tape.constant(s.to_vec(), x.data().to_vec())?;
        h = self.run_stack(tape, h, "stem", &self.spec.stem, &mut vars)?;
        let last = self.spec.exits.len() - 1;
        let mut logits = Vec::new();
        let mut confidences = Vec::new();
        let mut done = 0;
        for (i, exit) in self.spec.exits.iter().enumerate() {
            while done < exit.after_block {
                h = self.run_stack(
                    tape,
                    h,
                    &format!("block{done}"),
                    &self.spec.blocks[done],
                    &mut vars,
                )?;
                done += 1;
            }
            if i == last {
                logits.push(self.run_stack(
                    tape,
                    h,
                    "final.fc",
                    &exit.head.classifier,
                    &mut vars,
                )?);
                confidences.push(tape.constant(vec![n, 1], vec![1.0; n])?);
            } else if mode == ForwardMode::All {
                let k = i + 1;
                let t = self.run_stack(
                    tape,
                    h,
                    &format!("exit{k}.conv"),
                    &exit.head.trunk,
                    &mut vars,
                )?;
                logits.push(self.run_stack(
                    tape,
                    t,
                    &format!("exit{k}.fc"),
                    &exit.head.classifier,
                    &mut vars,
                )?);
                confidences.push(self.run_stack(
                    tape,
                    t,
                    &format!("exit{k}.conf"),
                    &exit.head.confidence,
                    &mut vars,
                )?);
            }
        }
        Ok(ForwardOutputs {
            logits,
            confidences,
            params: vars,
        })
    }

    /// Adds the gradients of every parameter that took part in `out`.
    pub fn accumulate_grads(&mut self, grads: &Gradients, out: &ForwardOutputs) -> Result<()> {
        for (i, v) in out.params.iter().enumerate() {
            if let Some(g) = v.and_then(|v| grads.get(v)) {
                self.params.tensor_mut(i).accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Per-exit logits (`[N·classes]` row-major) and confidences (`[N]`) as plain values.
    pub fn predict(&self, x: &Tensor) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let mut tape = Tape::no_grad();
        let out = self.forward(&mut tape, x, ForwardMode::All)?;
        let logits = out.logits.iter().map(|&v| tape.value(v).to_vec()).collect();
        let conf = out
            .confidences
            .iter()
            .map(|&v| tape.value(v).to_vec())
            .collect();
        Ok((logits, conf))
    }
}

/// `c^r_i = c_i · Π_{k<i} (1 − c_k)` for one sample.
pub fn cumulative_confidences(c: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = c.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::contract(format!("confidence {bad} outside [0, 1]")));
    }
    let mut rest = 1.0;
    Ok(c.iter()
        .map(|&ci| {
            let r = ci * rest;
            rest *= 1.0 - ci;
            r
        })
        .collect())
}

/// `f̄_k = Σ_{i≤k} c^r_i · f_i` for one sample (`k` is 1-based).
pub fn aggregate_outputs(f: &[Vec<f64>], cr: &[f64], k: usize) -> Result<Vec<f64>> {
    if k == 0 || k > f.len() || cr.len() < k {
        return Err(Error::contract(format!(
            "aggregate of {k} exits out of {}",
            f.len()
        )));
    }
    let mut out = vec![0.0; f[0].len()];
    for (fi, &ri) in f[..k].iter().zip(cr) {
        for (o, v) in out.iter_mut().zip(fi) {
            *o += ri * v;
        }
    }
    Ok(out)
}

/// Differentiable cumulative confidences of `[N, 1]` confidence nodes.
pub fn cumulative_confidences_on(tape: &mut Tape, c: &[Var]) -> Result<Vec<Var>> {
    let Some(&first) = c.first() else {
        return Ok(vec![]);
    };
    let n = tape.shape(first)[0];
    let mut rest = tape.constant(vec![n, 1], vec![1.0; n])?;
    let mut out = Vec::with_capacity(c.len());
    for (i, &ci) in c.iter().enumerate() {
        out.push(tape.mul(ci, rest)?);
        if i + 1 < c.len() {
            let keep = tape.affine(ci, -1.0, 1.0)?;
            rest = tape.mul(rest, keep)?;
        }
    }
    Ok(out)
}

/// Differentiable `f̄_k` over batched logits `[N, classes]` (`k` is 1-based).
pub fn aggregate_outputs_on(tape: &mut Tape, f: &[Var], cr: &[Var], k: usize) -> Result<Var> {
    if k == 0 || k > f.len() || cr.len() < k {
        return Err(Error::contract(format!(
            "aggregate of {k} exits out of {}",
            f.len()
        )));
    }
    let mut acc = tape.scale_rows(f[0], cr[0])?;
    for i in 1..k {
        let t = tape.scale_rows(f[i], cr[i])?;
        acc = tape.add(acc, t)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::genome::{Genome, MAX_EXITS};
    use crate::model::spec::{decode_genome, place_exits};

    fn model(g: &str, seed: u64) -> EennModel {
        let g = Genome::parse(g).unwrap();
        let b = decode_genome(&g, [3, 16, 16], 10).unwrap();
        EennModel::init(place_exits(&b, &g.theta, MAX_EXITS).unwrap(), seed).unwrap()
    }

    fn batch(n: usize) -> Tensor {
        let data = (0..n * 3 * 256)
            .map(|i| ((i * 37 % 101) as f64 / 50.0) - 1.0)
            .collect();
        Tensor::new(vec![n, 3, 16, 16], data).unwrap()
    }

    #[test]
    fn cumulative_hand_expansion() {
        let cr = cumulative_confidences(&[0.6, 0.5, 1.0]).unwrap();
        for (a, b) in cr.iter().zip([0.6, 0.2, 0.2]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(cumulative_confidences(&[1.0]).unwrap(), vec![1.0]);
        assert!(cumulative_confidences(&[1.2, 1.0]).is_err());
    }

    #[test]
    fn aggregation_hand_expansion() {
        let f = vec![vec![2.0, 0.0], vec![0.0, 2.0]];
        let cr = cumulative_confidences(&[0.5, 1.0]).unwrap();
        assert_eq!(aggregate_outputs(&f, &cr, 2).unwrap(), vec![1.0, 1.0]);
        let cr = cumulative_confidences(&[1.0, 0.3]).unwrap();
        assert_eq!(aggregate_outputs(&f, &cr, 2).unwrap(), f[0]);
        assert_eq!(aggregate_outputs(&f[..1], &[1.0], 1).unwrap(), f[0]);
    }

    #[test]
    fn tape_aggregation_matches_plain_values() {
        let mut tape = Tape::new();
        let f1 = tape.constant(vec![2, 2], vec![2.0, 0.0, 1.0, 3.0]).unwrap();
        let f2 = tape
            .constant(vec![2, 2], vec![0.0, 2.0, -1.0, 1.0])
            .unwrap();
        let c1 = tape.constant(vec![2, 1], vec![0.5, 0.25]).unwrap();
        let c2 = tape.constant(vec![2, 1], vec![1.0, 1.0]).unwrap();
        let cr = cumulative_confidences_on(&mut tape, &[c1, c2]).unwrap();
        let agg = aggregate_outputs_on(&mut tape, &[f1, f2], &cr, 2).unwrap();
        assert_eq!(tape.value(agg), &[1.0, 1.0, 0.25 - 0.75, 0.75 + 0.75]);
    }

    #[test]
    fn forward_shapes_and_forced_final_confidence() {
        let m = model("2-3-16,1-5-24,1-3-16,1-3-32/1010", 1);
        assert_eq!(m.spec.exit_count(), 3);
        let (logits, conf) = m.predict(&batch(4)).unwrap();
        assert_eq!(logits.len(), 3);
        assert!(logits.iter().all(|l| l.len() == 40));
        assert_eq!(conf[2], vec![1.0; 4]);
        assert!(conf[..2].iter().flatten().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn final_only_mode_skips_exit_heads() {
        let m = model("2-3-16,1-5-24,1-3-16,1-3-32/1010", 1);
        let mut tape = Tape::new();
        let out = m
            .forward(&mut tape, &batch(2), ForwardMode::FinalOnly)
            .unwrap();
        assert_eq!(out.logits.len(), 1);
        let (full, _) = m.predict(&batch(2)).unwrap();
        assert_eq!(tape.value(out.logits[0]), full[2].as_slice());
    }

    #[test]
    fn wrong_batch_shape_is_rejected() {
        let m = model("1-3-16,1-3-16,1-3-16,1-3-16/0000", 1);
        let x = Tensor::zeros(vec![2, 1, 16, 16]);
        assert!(matches!(m.predict(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn exit_logits_do_not_depend_on_later_blocks() {
        // Twelve and ten blocks: both attach the first exit after block 2.
        let long = model("3-3-16,3-5-24,3-3-32,3-5-32/1000", 5);
        let mut truncated = model("3-3-16,3-5-24,3-3-32,1-5-32/1000", 6);
        assert_eq!(long.spec.exits[0].after_block, 2);
        assert_eq!(truncated.spec.exits[0].after_block, 2);
        for (name, t) in long.params.iter() {
            if let Some(i) = truncated.params.index_of(name) {
                if truncated.params.tensor(i).shape() == t.shape() {
                    *truncated.params.tensor_mut(i) = t.clone();
                }
            }
        }
        let x = batch(3);
        let (a, ca) = long.predict(&x).unwrap();
        let (b, cb) = truncated.predict(&x).unwrap();
        assert_eq!(a[0], b[0]);
        assert_eq!(ca[0], cb[0]);
    }

    #[test]
    fn init_is_deterministic() {
        let a = model("1-5-24,2-3-16,1-3-16,1-3-32/0110", 9);
        let b = model("1-5-24,2-3-16,1-3-16,1-3-32/0110", 9);
        assert_eq!(a.params, b.params);
        assert!(a.backbone_param_indices().len() < a.params.len());
    }
}
