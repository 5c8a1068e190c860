use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_clip(seed: u64) -> Clip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..16 * 3 * 96 * 96).map(|_| rng.gen::<f32>()).collect();
    Clip::new(16, 3, 96, 96, data).unwrap()
}

#[test]
fn grid_counts_and_index_law() {
    let g = TokenGridSpec::default();
    assert_eq!((g.slices(), g.cells(), g.n_tokens(), g.token_dim()), (8, 36, 288, 1536));
    let mut seen = vec![false; 288];
    for s in 0..8 {
        for r in 0..6 {
            for c in 0..6 {
                let i = g.index(s, r, c);
                assert!(!seen[i]);
                seen[i] = true;
                assert_eq!(g.coords(i), (s, r, c));
            }
        }
    }
}

#[test]
fn identity_normalization() {
    let clip = random_clip(1);
    assert_eq!(normalize_clip(&clip, &NormConstants::identity()).unwrap(), clip);
}

#[test]
fn red_at_mean_normalizes_to_zero() {
    let mut clip = Clip::zeros(16, 3, 96, 96);
    for t in 0..16 {
        for y in 0..96 {
            for x in 0..96 {
                clip.set(t, 0, y, x, 0.485);
            }
        }
    }
    let c = NormConstants {
        mean: [0.485, 0.0, 0.0],
        std: [1.0; 3],
    };
    let n = normalize_clip(&clip, &c).unwrap();
    assert!(n.frame(3)[..96 * 96].iter().all(|&v| v == 0.0));
}

#[test]
fn default_normalization_matches_scalar_oracle() {
    let clip = random_clip(2);
    let c = NormConstants::default();
    let n = normalize_clip(&clip, &c).unwrap();
    for (t, ch, y, x) in [(0, 0, 0, 0), (5, 1, 40, 17), (15, 2, 95, 95), (9, 2, 3, 88)] {
        let oracle = (clip.get(t, ch, y, x) - c.mean[ch] as f32) / c.std[ch] as f32;
        assert!((n.get(t, ch, y, x) as f64 - oracle as f64).abs() <= 1e-12);
    }
}

#[test]
fn rejects_nonpositive_std() {
    let c = NormConstants {
        mean: [0.0; 3],
        std: [1.0, 0.0, 1.0],
    };
    assert!(normalize_clip(&random_clip(3), &c).is_err());
}

#[test]
fn constant_clip_gives_constant_tokens() {
    let mut clip = Clip::zeros(16, 3, 96, 96);
    clip.data.iter_mut().for_each(|v| *v = 0.3);
    let tokens: Vec<f64> = tubelet_partition(&clip, &TokenGridSpec::default()).unwrap();
    assert!(tokens.iter().all(|&v| v == 0.3f32 as f64));
}

#[test]
fn single_pixel_lands_in_token_82() {
    let g = TokenGridSpec::default();
    let mut clip = Clip::zeros(16, 3, 96, 96);
    clip.set(5, 1, 20, 70, 1.0);
    let tokens: Vec<f64> = tubelet_partition(&clip, &g).unwrap();
    let nonzero: Vec<usize> = (0..288)
        .filter(|&i| tokens[i * 1536..(i + 1) * 1536].iter().any(|&v| v != 0.0))
        .collect();
    assert_eq!(nonzero, vec![82]);
    assert_eq!(g.index(2, 1, 4), 82);
    // frame 5 is the second frame of the tubelet; channel 1; row 4; col 6
    let within = 256 * 3 + 256 + 4 * 16 + 6;
    assert_eq!(tokens[82 * 1536 + within], 1.0);
}

#[test]
fn partition_round_trips() {
    let g = TokenGridSpec::default();
    let clip = random_clip(4);
    let tokens: Vec<f32> = tubelet_partition(&clip, &g).unwrap();
    assert_eq!(assemble_tokens(&tokens, &g).unwrap(), clip);
}

#[test]
fn partition_rejects_wrong_shape() {
    let clip = Clip::zeros(8, 3, 96, 96);
    assert!(tubelet_partition::<f64>(&clip, &TokenGridSpec::default()).is_err());
}

fn embed_setup(seed: u64) -> (ParamSet<f64>, EmbedParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = ParamSet::new();
    let p = EmbedParams::init(&mut set, "enc", &TokenGridSpec::default(), 8, &mut rng);
    (set, p)
}

#[test]
fn zero_tokens_embed_to_positions() {
    let (set, p) = embed_setup(5);
    let mut tape = Tape::new();
    let bound = set.bind(&mut tape, false);
    let idx: Vec<usize> = (0..288).collect();
    let tokens = tape.constant(&[288, 1536], vec![0.0; 288 * 1536]).unwrap();
    let e = embed_tokens(&mut tape, tokens, &idx, &p, &bound).unwrap();
    assert_eq!(tape.value(e), set.get(p.pos).data());
}

#[test]
fn identical_content_differs_by_position_rows() {
    let (set, p) = embed_setup(6);
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let row: Vec<f64> = (0..1536).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut tape = Tape::new();
    let bound = set.bind(&mut tape, false);
    let data = [row.clone(), row].concat();
    let tokens = tape.constant(&[2, 1536], data).unwrap();
    let e = embed_tokens(&mut tape, tokens, &[10, 200], &p, &bound).unwrap();
    let v = tape.value(e);
    let pos = set.get(p.pos).data();
    for k in 0..8 {
        let diff = v[8 + k] - v[k];
        let want = pos[200 * 8 + k] - pos[10 * 8 + k];
        assert!((diff - want).abs() < 1e-15);
    }
}

#[test]
fn embedding_matches_composition_oracle() {
    let (mut set, p) = embed_setup(7);
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    set.get_mut(p.b).data_mut().iter_mut().for_each(|b| *b = rng.gen_range(-1.0..1.0));
    let idx = [3usize, 287, 0];
    let tokens: Vec<f64> = (0..3 * 1536).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut tape = Tape::new();
    let bound = set.bind(&mut tape, false);
    let tv = tape.constant(&[3, 1536], tokens.clone()).unwrap();
    let e = embed_tokens(&mut tape, tv, &idx, &p, &bound).unwrap();
    let (w, b, pos) = (set.get(p.w).data(), set.get(p.b).data(), set.get(p.pos).data());
    for (r, &i) in idx.iter().enumerate() {
        for k in 0..8 {
            let mut acc = b[k] + pos[i * 8 + k];
            for j in 0..1536 {
                acc += tokens[r * 1536 + j] * w[j * 8 + k];
            }
            assert!((tape.value(e)[r * 8 + k] - acc).abs() < 1e-12);
        }
    }
}

#[test]
fn positional_rows_are_distinct() {
    let (set, p) = embed_setup(8);
    let pos = set.get(p.pos).data();
    for i in 0..288 {
        for j in i + 1..288 {
            assert_ne!(&pos[i * 8..(i + 1) * 8], &pos[j * 8..(j + 1) * 8]);
        }
    }
}
