//! A complete parameter set (prototype bank, PAAG layers, per-stage heads)
//! with random initialisation and named-tensor (de)serialisation.
//!
//! Tensor names: `bank.Q_x`, `bank.Q_phi`, `bank.Q_theta`, `paag.A_x`,
//! `paag.b_x` (likewise `phi`, `theta`), and `head.<id>.W_q`, `W_k`, `W_v`,
//! `W_o`, `cls_w`, `cls_b`, `reg_w`, `reg_b`.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchors::{PaagWeights, PrototypeBank};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::head::HeadWeights;
use crate::io::Tensor;
use crate::pipeline::{AnchorGenerator, LearnedHead};
use crate::synth;

#[derive(Debug, Clone)]
pub struct Model {
    pub generator: AnchorGenerator,
    pub head: LearnedHead,
}

fn uniform_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, bound: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

impl Model {
    /// Glorot-uniform weights, zero biases, evenly spread prototypes.
    /// `level5_width` is `W_F` of the generator's feature map.
    pub fn init(cfg: &RunConfig, level5_width: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [mx, mp, mt] = cfg.prototypes;
        let bank = PrototypeBank::uniform(mx, mp, mt);
        let input = level5_width * cfg.feature_channels;
        let m_a = cfg.num_anchors;
        let mut layer = |m: usize| {
            let cols = m_a * m;
            let bound = (6.0 / (input + cols) as f64).sqrt();
            (uniform_matrix(&mut rng, input, cols, bound), Array1::zeros(cols))
        };
        let (a_x, b_x) = layer(mx);
        let (a_phi, b_phi) = layer(mp);
        let (a_theta, b_theta) = layer(mt);
        let paag = PaagWeights { num_anchors: m_a, a_x, b_x, a_phi, b_phi, a_theta, b_theta };

        let c_a = cfg.anchor_feature_len();
        let d = cfg.attn_dim;
        let classes = cfg.profile.num_classes();
        let n = cfg.profile.num_points();
        let mut heads = BTreeMap::new();
        for id in cfg.plan.weight_ids() {
            let mut m = |r: usize, c: usize| {
                let bound = (6.0 / (r + c) as f64).sqrt();
                uniform_matrix(&mut rng, r, c, bound)
            };
            let w = HeadWeights::new(
                m(c_a, d),
                m(c_a, d),
                m(c_a, d),
                m(d, c_a),
                m(c_a, classes),
                Array1::zeros(classes),
                m(c_a, 3 * n),
                Array1::zeros(3 * n),
            )?;
            heads.insert(id.to_string(), w);
        }
        Ok(Self {
            generator: AnchorGenerator {
                bank,
                paag,
                ranges: cfg.meta_ranges,
                scaling: cfg.meta_scaling,
                y_samples: cfg.profile.y_samples.clone(),
            },
            head: LearnedHead { heads },
        })
    }

    /// Random model for the synthetic camera.
    pub fn init_synthetic(cfg: &RunConfig, seed: u64) -> Result<Self> {
        Self::init(cfg, synth::level_size(5)[1], seed)
    }

    pub fn to_tensors(&self) -> BTreeMap<String, Tensor> {
        let mut out = BTreeMap::new();
        let mut put1 = |name: String, a: &Array1<f64>| {
            out.insert(name, Tensor::from_f64(vec![a.len()], a.iter().copied()).expect("dims match"));
        };
        let bank = &self.generator.bank;
        put1("bank.Q_x".into(), &bank.q_x);
        put1("bank.Q_phi".into(), &bank.q_phi);
        put1("bank.Q_theta".into(), &bank.q_theta);
        let p = &self.generator.paag;
        put1("paag.b_x".into(), &p.b_x);
        put1("paag.b_phi".into(), &p.b_phi);
        put1("paag.b_theta".into(), &p.b_theta);
        for (id, h) in &self.head.heads {
            put1(format!("head.{id}.cls_b"), h.cls().1);
            put1(format!("head.{id}.reg_b"), h.reg().1);
        }
        let mut put2 = |name: String, a: &Array2<f64>| {
            out.insert(name, Tensor::from_f64(vec![a.nrows(), a.ncols()], a.iter().copied()).expect("dims match"));
        };
        put2("paag.A_x".into(), &p.a_x);
        put2("paag.A_phi".into(), &p.a_phi);
        put2("paag.A_theta".into(), &p.a_theta);
        for (id, h) in &self.head.heads {
            put2(format!("head.{id}.W_q"), h.w_q());
            put2(format!("head.{id}.W_k"), h.w_k());
            put2(format!("head.{id}.W_v"), h.w_v());
            put2(format!("head.{id}.W_o"), h.w_o());
            put2(format!("head.{id}.cls_w"), h.cls().0);
            put2(format!("head.{id}.reg_w"), h.reg().0);
        }
        out
    }

    /// Rebuilds a model from named tensors; shapes are validated against `cfg`.
    pub fn from_tensors(tensors: &BTreeMap<String, Tensor>, cfg: &RunConfig) -> Result<Self> {
        cfg.validate()?;
        let get = |name: &str| tensors.get(name).ok_or_else(|| Error::MissingTensor(name.to_string()));
        let vec1 = |name: &str| -> Result<Array1<f64>> {
            let t = get(name)?;
            if t.dims.len() != 1 {
                return Err(Error::shape(name, "1-d", format!("{:?}", t.dims)));
            }
            Ok(Array1::from(t.to_f64()))
        };
        let mat = |name: &str| -> Result<Array2<f64>> {
            let t = get(name)?;
            if t.dims.len() != 2 {
                return Err(Error::shape(name, "2-d", format!("{:?}", t.dims)));
            }
            Ok(Array2::from_shape_vec((t.dims[0], t.dims[1]), t.to_f64()).expect("dims match payload"))
        };
        let bank = PrototypeBank { q_x: vec1("bank.Q_x")?, q_phi: vec1("bank.Q_phi")?, q_theta: vec1("bank.Q_theta")? };
        if bank.sizes() != cfg.prototypes {
            return Err(Error::shape(
                "prototype bank sizes",
                format!("{:?}", cfg.prototypes),
                format!("{:?}", bank.sizes()),
            ));
        }
        let paag = PaagWeights {
            num_anchors: cfg.num_anchors,
            a_x: mat("paag.A_x")?,
            b_x: vec1("paag.b_x")?,
            a_phi: mat("paag.A_phi")?,
            b_phi: vec1("paag.b_phi")?,
            a_theta: mat("paag.A_theta")?,
            b_theta: vec1("paag.b_theta")?,
        };
        let input = paag.input_len();
        if !input.is_multiple_of(cfg.feature_channels) || paag.a_phi.nrows() != input || paag.a_theta.nrows() != input {
            return Err(Error::shape(
                "PAAG input length",
                format!("a multiple of C_F = {}", cfg.feature_channels),
                input,
            ));
        }

        let c_a = cfg.anchor_feature_len();
        let mut heads = BTreeMap::new();
        for id in cfg.plan.weight_ids() {
            let name = |t: &str| format!("head.{id}.{t}");
            let w = HeadWeights::new(
                mat(&name("W_q"))?,
                mat(&name("W_k"))?,
                mat(&name("W_v"))?,
                mat(&name("W_o"))?,
                mat(&name("cls_w"))?,
                vec1(&name("cls_b"))?,
                mat(&name("reg_w"))?,
                vec1(&name("reg_b"))?,
            )?;
            if w.feature_len() != c_a {
                return Err(Error::shape(format!("head.{id} feature length"), c_a, w.feature_len()));
            }
            if w.num_classes() != cfg.profile.num_classes() || w.num_points() != cfg.profile.num_points() {
                return Err(Error::shape(
                    format!("head.{id} outputs"),
                    format!("{} classes, {} points", cfg.profile.num_classes(), cfg.profile.num_points()),
                    format!("{} classes, {} points", w.num_classes(), w.num_points()),
                ));
            }
            heads.insert(id.to_string(), w);
        }
        Ok(Self {
            generator: AnchorGenerator {
                bank,
                paag,
                ranges: cfg.meta_ranges,
                scaling: cfg.meta_scaling,
                y_samples: cfg.profile.y_samples.clone(),
            },
            head: LearnedHead { heads },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> RunConfig {
        RunConfig { feature_channels: 4, attn_dim: 8, ..Default::default() }
    }

    #[test]
    fn tensors_round_trip_through_f32() {
        let cfg = small_cfg();
        let m = Model::init_synthetic(&cfg, 3).unwrap();
        let t = m.to_tensors();
        let back = Model::from_tensors(&t, &cfg).unwrap();
        assert_eq!(back.to_tensors(), t);
        assert!(t.contains_key("head.stage3.reg_b"));
    }

    #[test]
    fn missing_and_misshapen_tensors() {
        let cfg = small_cfg();
        let mut t = Model::init_synthetic(&cfg, 3).unwrap().to_tensors();
        let q = t.remove("head.stage0.W_q").unwrap();
        assert_eq!(Model::from_tensors(&t, &cfg).unwrap_err(), Error::MissingTensor("head.stage0.W_q".into()));
        t.insert("head.stage0.W_q".into(), Tensor::new(vec![q.data.len()], q.data).unwrap());
        assert!(matches!(Model::from_tensors(&t, &cfg), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn init_is_seeded() {
        let cfg = small_cfg();
        let a = Model::init_synthetic(&cfg, 9).unwrap().to_tensors();
        let b = Model::init_synthetic(&cfg, 9).unwrap().to_tensors();
        let c = Model::init_synthetic(&cfg, 10).unwrap().to_tensors();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
