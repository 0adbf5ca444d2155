// Temporary probe: inspect gradient flow on the learn-test fixture.
use hscrf::data::*;
use hscrf::graph::*;
use hscrf::learn::*;
use hscrf::potentials::{ComponentSources, PotentialBundle, TreeEdge};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn main() {
    let mut rng = ChaCha12Rng::seed_from_u64(71);
    let c = 3usize;
    let ls = LabelSpace {
        classes: (0..c).map(|i| format!("c{i}")).collect(),
        scene_types: vec!["s0".into(), "s1".into()],
        is_thing: vec![false; c],
        detector_classes: vec![],
    };
    let w = 12u32;
    let labels: Vec<i32> = (0..w).map(|_| rng.gen_range(0..c) as i32).collect();
    let seg_cells: Vec<Vec<usize>> = (0..4).map(|s| ((s * 3)..(s * 3 + 3)).collect()).collect();
    let inst = SceneInstance {
        id: "i0".into(),
        grid: GridDims { height: 1, width: w },
        segments: seg_cells.iter().map(|cells| Segment {
            pixel_set: Rle::encode_region(cells),
            area: cells.len() as u32,
            gt_label: majority_label(cells, &labels),
        }).collect(),
        supersegments: vec![
            SuperSegment { area: 6, gt_label: majority_label(&(0..6).collect::<Vec<_>>(), &labels) },
            SuperSegment { area: 6, gt_label: majority_label(&(6..12).collect::<Vec<_>>(), &labels) },
        ],
        seg_parent: vec![0, 0, 1, 1],
        detections: vec![],
        gt_pixel_labels: Rle::encode_labels(&labels),
        gt_boxes: vec![],
        gt_scene: 0,
    };
    let noise_row = |rng: &mut ChaCha12Rng| {
        let raw: Vec<f64> = (0..c).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().map(|x| x / s).collect::<Vec<f64>>()
    };
    let one_hot = |label: i32| { let mut row = vec![0.0; c]; row[label as usize] = 1.0; row };
    let bundle = PotentialBundle {
        seg_unary: Some(inst.segments.iter().map(|s| one_hot(s.gt_label)).collect()),
        supseg_unary: Some((0..2).map(|_| noise_row(&mut rng)).collect()),
        class_unary: Some(vec![0.5; c]),
        class_tree: Some(vec![TreeEdge { a: 0, b: 1, joint: [0.25; 4] }]),
        detections: None,
        shape_masks: None,
        scene_unary: Some({ let r = noise_row(&mut rng); let s = r[0]+r[1]; vec![r[0]/s, r[1]/s] }),
        scene_class: Some(vec![vec![0.5; c]; 2]),
        pn_active: true,
        sources: ComponentSources {
            detection: hscrf::potentials::Source::Remove,
            shape: hscrf::potentials::Source::Remove,
            ..ComponentSources::default()
        },
    };
    let gt = gt_assignment(&inst, &ls, &[]);
    println!("gt: {:?}", gt);
    let wv = WeightVector::ones();
    let g = build_graph(&inst, &ls, &bundle, &wv, &[]).unwrap();
    let lw = LossWeights::default();
    let aug = loss_augmented_map(&g, &gt, &lw, &LoopyOptions::default()).unwrap();
    println!("aug assignment: {:?} converged={} iters={}", aug.assignment, aug.converged, aug.iterations);
    let gt_full: Vec<usize> = gt.iter().zip(&aug.assignment).map(|(g, &a)| g.unwrap_or(a)).collect();
    println!("gt_full:        {:?}", gt_full);
    println!("score(aug)={} score(gt)={} loss={}",
        score(&g, &aug.assignment).unwrap(),
        score(&g, &gt_full).unwrap(),
        hamming_loss(&aug.assignment, &gt, &g.variables, &lw));
    // exact loss-augmented for comparison
    let mut aug_graph = g.clone();
    for (v, gi) in gt.iter().enumerate() {
        if let Some(truth) = gi {
            let t: Vec<f64> = (0..g.variables[v].domain).map(|x| if x == *truth { 0.0 } else { 1.0 }).collect();
            aug_graph.add_unary(FactorRole::Aux, v, t);
        }
    }
    let ex = map_exact(&aug_graph).unwrap();
    println!("exact aug: {:?} score+loss={}", ex.assignment, ex.log_score);
}
