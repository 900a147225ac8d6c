mod common;

use common::*;
use drbanet::blocks::*;
use drbanet::ops::relu;
use drbanet::Tensor;
use proptest::prelude::*;
use rand::Rng;

/// Random weights except under `zeroed` prefixes, whose conv weights and
/// norm shift/mean are zero.
fn params_with_zeroed(def: BlockDef, zeroed: &[&str], seed: u64) -> BlockParams {
    let mut r = rng(seed);
    let store = block_store(def, "b", |name, _| {
        let z = zeroed.iter().any(|p| name.starts_with(&format!("b.{p}.")));
        if name.ends_with("running_var") || name.ends_with(".norm.weight") {
            r.gen_range(0.5f32..1.5)
        } else if z {
            0.0
        } else {
            r.gen_range(-0.5f32..0.5)
        }
    });
    BlockParams::load(def, "b", &store).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eibm_zero_main_branch_is_identity(c in 1usize..12, h in 1usize..10, w in 1usize..10, seed: u64) {
        let def = BlockDef::Eibm { in_c: c, out_c: c, strided: false };
        let p = params_with_zeroed(def, &["project"], seed);
        let x = random_tensor(&mut rng(seed ^ 1), [1, c, h, w]);
        prop_assert_eq!(eibm_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn strided_eibm_zero_main_is_skip(c in 1usize..8, o in 1usize..8, h in 2usize..10, w in 2usize..10, seed: u64) {
        let def = BlockDef::Eibm { in_c: c, out_c: o, strided: true };
        let p = params_with_zeroed(def, &["project"], seed);
        let x = random_tensor(&mut rng(seed ^ 1), [1, c, h, w]);
        let y = eibm_forward(&x, &p).unwrap();
        let skip = p.unit("skip").unwrap().apply(&x).unwrap();
        prop_assert_eq!(y.dims().to_array(), [1, o, h.div_ceil(2), w.div_ceil(2)]);
        prop_assert_eq!(y, skip);
    }

    #[test]
    fn bfm_zero_cross_paths_is_residual_identity(gap_four: bool, hc in 1usize..6, lc in 1usize..4, s in 1usize..4, seed: u64) {
        let gap = if gap_four { 4 } else { 2 };
        let lc = 2 * lc;
        let def = BlockDef::Bfm { high_c: hc, low_c: lc, gap };
        let zeroed: &[&str] = if gap_four { &["up", "down1"] } else { &["up", "down0"] };
        let p = params_with_zeroed(def, zeroed, seed);
        let mut r = rng(seed ^ 2);
        let xh = random_tensor(&mut r, [1, hc, s * gap, s * gap]);
        let xl = random_tensor(&mut r, [1, lc, s, s]);
        let (h, l) = bfm_forward(&xh, &xl, &p).unwrap();
        prop_assert_eq!(h, relu(&xh));
        prop_assert_eq!(l, relu(&xl));
    }

    #[test]
    fn elppm_compresses_by_four(q in 1usize..5, h in 1usize..20, w in 1usize..20, seed: u64) {
        let def = BlockDef::Elppm { in_c: 4 * q };
        let p = random_block(def, "b", seed);
        let x = random_tensor(&mut rng(seed ^ 3), [2, 4 * q, h, w]);
        let y = elppm_forward(&x, &p).unwrap();
        prop_assert_eq!(y.dims().to_array(), [2, q, h, w]);
    }
}

#[test]
fn elppm_constant_input_paths_agree() {
    let def = BlockDef::Elppm { in_c: 16 };
    // identical reduction weights on every path
    let mut r = rng(5);
    let shared: Vec<f32> = (0..16 * 4).map(|_| r.gen_range(-0.5..0.5)).collect();
    let store = block_store(def, "b", |name, i| {
        if name.ends_with(".conv.weight") && name.starts_with("b.path") {
            shared[i]
        } else if name.ends_with("running_var") || name.ends_with(".norm.weight") {
            1.0
        } else {
            ((i * 7 % 11) as f32 - 5.0) / 20.0
        }
    });
    let p = BlockParams::load(def, "b", &store).unwrap();
    let x = Tensor::full([1, 16, 16, 16], 0.75);
    let s = elppm_trace(&x, &p).unwrap();
    for pooled in &s.pooled {
        assert!(pooled.data().iter().all(|&v| (v - 0.75).abs() <= 1e-6));
    }
    for m in &s.mid[1..] {
        let max = m.data().iter().zip(s.mid[0].data()).map(|(a, b)| (a - b).abs()).fold(0.0, f32::max);
        assert!(max <= 1e-6, "path differs by {max}");
    }
    assert_eq!(s.output.dims().to_array(), [1, 4, 16, 16]);
}

#[test]
fn pooled_sizes_follow_windows() {
    let p = random_block(BlockDef::Elppm { in_c: 8 }, "b", 1);
    let s = elppm_trace(&Tensor::full([1, 8, 16, 16], 1.0), &p).unwrap();
    let sizes: Vec<_> = s.pooled.iter().map(|t| t.dims().h).collect();
    assert_eq!(sizes, vec![8, 4, 2, 1]);
}

#[test]
fn heads_produce_expected_channels() {
    let bh = random_block(BlockDef::BoundaryHead { in_c: 8, mid_c: 6 }, "h", 2);
    let (f, l) = boundary_head_forward(&Tensor::full([1, 8, 5, 5], 0.1), &bh).unwrap();
    assert_eq!(f.dims().c, 6);
    assert_eq!(l.dims().to_array(), [1, 1, 5, 5]);

    let sh = random_block(BlockDef::SegHead { in_c: 8, classes: 5 }, "s", 3);
    let y = seg_head_forward(&Tensor::full([1, 8, 4, 6], 0.2), &sh, 5).unwrap();
    assert_eq!(y.dims().to_array(), [1, 5, 4, 6]);
    assert!(seg_head_forward(&Tensor::full([1, 8, 4, 6], 0.2), &sh, 4).is_err());
}

#[test]
fn fusion_concatenates_boundary_feature() {
    let def = BlockDef::Fusion { high_c: 4, boundary_c: 3, out_c: 5 };
    let p = random_block(def, "f", 4);
    let mut r = rng(9);
    let high = random_tensor(&mut r, [1, 4, 8, 8]);
    let ctx = random_tensor(&mut r, [1, 4, 2, 2]);
    let bnd = random_tensor(&mut r, [1, 3, 8, 8]);
    let y = fusion_forward(&high, &ctx, &bnd, &p).unwrap();
    assert_eq!(y.dims().to_array(), [1, 5, 8, 8]);
    assert!(y.data().iter().all(|&v| v >= 0.0));
    assert!(fusion_forward(&high, &ctx, &high, &p).is_err());
}

#[test]
fn block_kind_is_checked() {
    let p = random_block(BlockDef::Stem { in_c: 3, out_c: 4 }, "s", 0);
    assert!(eibm_forward(&Tensor::zeros([1, 3, 4, 4]), &p).is_err());
    assert_eq!(stem_forward(&Tensor::zeros([1, 3, 4, 4]), &p).unwrap().dims().to_array(), [1, 4, 2, 2]);
}
