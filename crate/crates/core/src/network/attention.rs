//! Concurrent spatial and channel squeeze-and-excitation.
//!
//! Channel branch: `g = GAP(Z)`, `ĝ = W_excite · relu(W_squeeze · g + b) + b'`,
//! `Z_c[k] = σ(ĝ_k) · Z[k]`.
//! Spatial branch: `q = W_s ⋆ Z + b_s` (1×1 conv to one channel),
//! `Z_s[i, j, :] = σ(q_ij) · Z[i, j, :]`.
//! Fusion: `Z_f = Z_c + Z_s`.

use crate::error::{Error, Result};
use crate::network::blocks::{Init, ParamSpec};
use crate::nn::{Graph, Var};

/// Parameters of one attention module over `channels` features.
pub fn attention_params(prefix: &str, channels: usize, ratio: usize) -> Vec<ParamSpec> {
    let hidden = channels / ratio;
    let spec = |name: &str, shape: Vec<usize>, init| ParamSpec {
        path: format!("{prefix}.{name}"),
        shape,
        init,
    };
    vec![
        spec("squeeze.weight", vec![hidden, channels], Init::HeNormal { fan_in: channels }),
        spec("squeeze.bias", vec![hidden], Init::Zeros),
        spec("excite.weight", vec![channels, hidden], Init::HeNormal { fan_in: hidden }),
        spec("excite.bias", vec![channels], Init::Zeros),
        spec("spatial.weight", vec![1, channels, 1, 1], Init::HeNormal { fan_in: channels }),
        spec("spatial.bias", vec![1], Init::Zeros),
    ]
}

/// Per-channel gates `σ(ĝ)`, shape `[C]`.
pub fn channel_gates(g: &mut Graph, z: &Var, prefix: &str) -> Result<Var> {
    let (c, _, _) = z.value().chw()?;
    let sq_w = g.param(&format!("{prefix}.squeeze.weight"))?;
    let in_dim = g.params().by_id(sq_w).shape()[1];
    if in_dim != c {
        return Err(Error::Shape(format!(
            "attention `{prefix}` expects {in_dim} channels, input has {c}"
        )));
    }
    let pooled = g.global_avg_pool(z)?;
    let hidden = g.dense(&pooled, sq_w, g.param(&format!("{prefix}.squeeze.bias"))?)?;
    let hidden = g.relu(&hidden);
    let excited = g.dense(
        &hidden,
        g.param(&format!("{prefix}.excite.weight"))?,
        g.param(&format!("{prefix}.excite.bias"))?,
    )?;
    Ok(g.sigmoid(&excited))
}

/// Per-pixel gates `σ(q)`, shape `[1, H, W]`.
pub fn spatial_gates(g: &mut Graph, z: &Var, prefix: &str) -> Result<Var> {
    let w = g.param(&format!("{prefix}.spatial.weight"))?;
    let b = g.param(&format!("{prefix}.spatial.bias"))?;
    let q = g.conv2d(z, w, Some(b), 1, 1)?;
    Ok(g.sigmoid(&q))
}

/// Channel-recalibrated map `Z_c`.
pub fn channel_attention(g: &mut Graph, z: &Var, prefix: &str) -> Result<Var> {
    let gates = channel_gates(g, z, prefix)?;
    g.channel_scale(z, &gates)
}

/// Space-recalibrated map `Z_s`.
pub fn spatial_attention(g: &mut Graph, z: &Var, prefix: &str) -> Result<Var> {
    let gates = spatial_gates(g, z, prefix)?;
    g.spatial_scale(z, &gates)
}

/// `Z_f = Z_c + Z_s`.
pub fn scse_fuse(g: &mut Graph, z: &Var, prefix: &str) -> Result<Var> {
    let zc = channel_attention(g, z, prefix)?;
    let zs = spatial_attention(g, z, prefix)?;
    g.add(&zc, &zs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::model::materialize;
    use crate::params::ParameterSet;
    use crate::tensor::Tensor;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_params(c: usize) -> ParameterSet {
        let mut p = materialize(&attention_params("a", c, 2), 0);
        p.fill_zero();
        p
    }

    fn run(p: &ParameterSet, z: &Tensor, f: fn(&mut Graph, &Var, &str) -> Result<Var>) -> Tensor {
        let mut g = Graph::inference(p);
        let x = g.input(z.clone());
        f(&mut g, &x, "a").unwrap().value().clone()
    }

    #[test]
    fn pooled_descriptor_is_channel_mean() {
        let p = zero_params(2);
        let mut g = Graph::inference(&p);
        let z = g.input(Tensor::from_vec(&[2, 2, 2], vec![1., 2., 3., 4., 0., 0., 0., 8.]).unwrap());
        let pooled = g.global_avg_pool(&z).unwrap();
        assert_eq!(pooled.value().data(), &[2.5, 2.0]);
    }

    #[test]
    fn zero_weights_halve_each_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let z = Tensor::randn(&[4, 6, 6], 1.0, &mut rng);
        let p = zero_params(4);
        let half = z.map(|v| 0.5 * v);
        assert_eq!(run(&p, &z, channel_attention), half);
        assert_eq!(run(&p, &z, spatial_attention), half);
        assert_eq!(run(&p, &z, scse_fuse), z);
    }

    #[test]
    fn single_channel_zero_pixel_gets_half_weight() {
        let mut p = zero_params(2);
        p.get_mut("a.spatial.weight").unwrap().data_mut().copy_from_slice(&[1.0, 0.0]);
        let z = Tensor::from_vec(&[2, 1, 2], vec![0.0, 3.0, 5.0, 7.0]).unwrap();
        let mut g = Graph::inference(&p);
        let x = g.input(z);
        let gates = spatial_gates(&mut g, &x, "a").unwrap();
        assert_eq!(gates.value().data()[0], 0.5);
        assert!(gates.value().data()[1] > 0.95);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let p = zero_params(4);
        let mut g = Graph::inference(&p);
        let x = g.input(Tensor::zeros(&[3, 2, 2]));
        assert!(channel_attention(&mut g, &x, "a").is_err());
    }

    fn arb_map_with(std: f64) -> impl Strategy<Value = (Tensor, u64)> {
        (1usize..6, 1usize..6, any::<u64>()).prop_map(move |(h, w, seed)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (Tensor::randn(&[4, h, w], std, &mut rng), seed)
        })
    }

    fn arb_map() -> impl Strategy<Value = (Tensor, u64)> {
        arb_map_with(2.0)
    }

    proptest! {
        #[test]
        // Logits beyond ~37 round σ to exactly 1.0 in f64, so keep inputs moderate.
        fn gates_lie_strictly_inside_unit_interval((z, seed) in arb_map_with(0.5)) {
            let p = materialize(&attention_params("a", 4, 2), seed);
            let mut g = Graph::inference(&p);
            let x = g.input(z);
            let cg = channel_gates(&mut g, &x, "a").unwrap();
            let sg = spatial_gates(&mut g, &x, "a").unwrap();
            for &v in cg.value().data().iter().chain(sg.value().data()) {
                prop_assert!(v > 0.0 && v < 1.0);
            }
        }

        #[test]
        fn fused_map_is_bounded_by_twice_input((z, seed) in arb_map()) {
            let p = materialize(&attention_params("a", 4, 2), seed);
            let out = run(&p, &z, scse_fuse);
            prop_assert!(out.max_abs() <= 2.0 * z.max_abs());
        }

        #[test]
        fn equal_spatial_weights_ignore_channel_order((z, seed) in arb_map()) {
            let mut p = materialize(&attention_params("a", 4, 2), seed);
            p.get_mut("a.spatial.weight").unwrap().fill(0.3);
            let (c, h, w) = z.chw().unwrap();
            let mut permuted = Vec::with_capacity(z.len());
            for ch in [2, 0, 3, 1] {
                permuted.extend_from_slice(&z.data()[ch * h * w..(ch + 1) * h * w]);
            }
            let zp = Tensor::from_vec(&[c, h, w], permuted).unwrap();
            let gates = |t: &Tensor| {
                let mut g = Graph::inference(&p);
                let x = g.input(t.clone());
                spatial_gates(&mut g, &x, "a").unwrap().value().clone()
            };
            let (a, b) = (gates(&z), gates(&zp));
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn channel_attention_commutes_with_pixel_permutation((z, seed) in arb_map()) {
            let p = materialize(&attention_params("a", 4, 2), seed);
            let (c, h, w) = z.chw().unwrap();
            let hw = h * w;
            // reverse pixel order within every channel
            let permute = |t: &Tensor| {
                let mut d = t.data().to_vec();
                d.chunks_mut(hw).for_each(<[f64]>::reverse);
                Tensor::from_vec(&[c, h, w], d).unwrap()
            };
            let a = permute(&run(&p, &z, channel_attention));
            let b = run(&p, &permute(&z), channel_attention);
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
