use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{
    invalid, Detection, FeatureSpace, HoiCatalog, HoiClass, SynthImage, Triplet, VerbLayout, World, WorldConfig,
    HUMAN_CLASS, RARE_IMAGE_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::rng::{stream, stream_rng};
use crate::supervision::SupervisionTag;

const CANVAS_W: f64 = 1200.0;
const CANVAS_H: f64 = 900.0;
const HUMAN_HEIGHT: (f64, f64) = (100.0, 180.0);
const HUMAN_ASPECT: (f64, f64) = (0.35, 0.55);
const MIN_HUMAN_SEPARATION: f64 = 2.6 * HUMAN_HEIGHT.1;
const GT_CONFIDENCE: (f64, f64) = (0.6, 1.0);
const DISTRACTOR_CONFIDENCE: (f64, f64) = (0.05, 0.65);

/// Generates a world from `cfg`. Identical configs give identical worlds.
pub fn generate_world(cfg: &WorldConfig) -> Result<World> {
    cfg.validate()?;
    let catalog = build_catalog(cfg);

    let train_plans = plan_images(cfg, 0, cfg.n_images);
    let train_slots: Vec<usize> = train_plans.iter().map(|p| p.1).collect();
    let total: usize = train_slots.iter().sum();
    let mut qrng = stream_rng(cfg.seed, stream::QUOTAS, 0);
    let quotas = class_quotas(cfg.n_hoi_classes, cfg.n_rare_classes(), total, cfg.n_images, &mut qrng)?;
    let train_classes = assign_classes(&quotas, &train_slots, &mut qrng)?;

    let test_plans = plan_images(cfg, cfg.n_images, cfg.n_test_images);
    let test_slots: Vec<usize> = test_plans.iter().map(|p| p.1).collect();
    let mut trng = stream_rng(cfg.seed, stream::TEST_QUOTAS, 0);
    let test_quotas = proportional_quotas(&quotas, test_slots.iter().sum(), cfg.n_test_images)?;
    let test_classes = assign_classes(&test_quotas, &test_slots, &mut trng)?;

    let render_all = |plans: &[(usize, usize)], classes: Vec<Vec<usize>>, first_id: usize| {
        plans
            .iter()
            .zip(classes)
            .enumerate()
            .map(|(k, (&(humans, _), cls))| render_image(cfg, &catalog, first_id + k, humans, &cls))
            .collect::<Result<Vec<_>>>()
    };
    let images = render_all(&train_plans, train_classes, 0)?;
    let test_images = render_all(&test_plans, test_classes, cfg.n_images)?;

    Ok(World {
        config: cfg.clone(),
        features: FeatureSpace::new(cfg),
        catalog,
        images,
        test_images,
    })
}

fn build_catalog(cfg: &WorldConfig) -> HoiCatalog {
    let mut rng = stream_rng(cfg.seed, stream::CATALOG, 0);
    let mut combos: Vec<HoiClass> = (1..=cfg.n_object_classes)
        .flat_map(|object_class| (0..cfg.n_verb_classes).map(move |verb| HoiClass { verb, object_class }))
        .collect();
    combos.shuffle(&mut rng);
    // Cover every object class before doubling up, so that small class
    // counts still exercise all object appearances.
    let mut classes: Vec<HoiClass> = Vec::with_capacity(cfg.n_hoi_classes);
    let mut per_object = vec![0usize; cfg.n_object_classes + 1];
    let mut pending = combos;
    while classes.len() < cfg.n_hoi_classes {
        let level = pending
            .iter()
            .map(|c| per_object[c.object_class])
            .min()
            .expect("enough combinations by validation");
        let pos = pending
            .iter()
            .position(|c| per_object[c.object_class] == level)
            .unwrap();
        let c = pending.remove(pos);
        per_object[c.object_class] += 1;
        classes.push(c);
    }
    classes.sort_by_key(|c| (c.object_class, c.verb));

    let phase = rng.gen_range(0.0..TAU);
    let verb_layouts = (0..cfg.n_verb_classes)
        .map(|v| VerbLayout {
            angle: phase + TAU * v as f64 / cfg.n_verb_classes as f64,
            distance: if v % 2 == 0 { 0.65 } else { 1.05 },
        })
        .collect();
    let mut object_scale = vec![1.0; cfg.n_object_classes + 1];
    let mut object_aspect = vec![HUMAN_ASPECT.0; cfg.n_object_classes + 1];
    for c in 1..=cfg.n_object_classes {
        object_scale[c] = rng.gen_range(0.2..0.45);
        object_aspect[c] = rng.gen_range(0.6..1.6);
    }
    HoiCatalog {
        classes,
        verb_layouts,
        object_scale,
        object_aspect,
    }
}

/// (humans, objects) per image, drawn from each image's own stream.
fn plan_images(cfg: &WorldConfig, first_id: usize, n: usize) -> Vec<(usize, usize)> {
    (first_id..first_id + n)
        .map(|id| {
            let mut rng = stream_rng(cfg.seed, stream::IMAGE, id as u64);
            let h = rng.gen_range(cfg.humans_per_image[0]..=cfg.humans_per_image[1]);
            let o = rng.gen_range(cfg.objects_per_image[0]..=cfg.objects_per_image[1]);
            (h, o)
        })
        .collect()
}

/// Per-class training image counts summing to `total_slots`.
///
/// The last `n_rare` classes of a random frequency ranking receive 1..=9
/// images; the rest get at least [`RARE_IMAGE_THRESHOLD`] plus a Zipf share
/// of the remaining slots.
pub(crate) fn class_quotas(
    n_classes: usize,
    n_rare: usize,
    total_slots: usize,
    n_images: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let mut ranking: Vec<usize> = (0..n_classes).collect();
    ranking.shuffle(rng);
    let n_common = n_classes - n_rare;
    let mut quotas = vec![0usize; n_classes];
    let max_rare = (RARE_IMAGE_THRESHOLD - 1).min(n_images);
    for &c in &ranking[n_common..] {
        quotas[c] = rng.gen_range(1..=max_rare);
    }
    let rare_total: usize = quotas.iter().sum();
    let floor_total = RARE_IMAGE_THRESHOLD * n_common + rare_total;
    if floor_total > total_slots || (n_common > 0 && RARE_IMAGE_THRESHOLD > n_images) {
        return Err(invalid(
            "n_images",
            format!(
                "{total_slots} interaction slots cannot give {n_common} common classes \
                 {RARE_IMAGE_THRESHOLD} images each plus {rare_total} rare occurrences"
            ),
        ));
    }
    let mut remaining = total_slots - floor_total;
    if n_common == 0 {
        if remaining > 0 {
            return Err(invalid(
                "rare_class_fraction",
                "every class is rare but slots remain to be filled",
            ));
        }
        return Ok(quotas);
    }
    for &c in &ranking[..n_common] {
        quotas[c] = RARE_IMAGE_THRESHOLD;
    }
    // Zipf shares with largest-remainder rounding, capped at n_images.
    let mut open: Vec<usize> = ranking[..n_common].to_vec();
    while remaining > 0 {
        open.retain(|&c| quotas[c] < n_images);
        if open.is_empty() {
            return Err(invalid(
                "n_images",
                "too few images to hold every interaction without repeating a class",
            ));
        }
        let weights: Vec<f64> = (0..open.len()).map(|r| 1.0 / (r + 1) as f64).collect();
        let wsum: f64 = weights.iter().sum();
        let mut shares: Vec<(usize, usize, f64)> = open
            .iter()
            .zip(&weights)
            .map(|(&c, w)| {
                let exact = remaining as f64 * w / wsum;
                (c, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let floor_sum: usize = shares.iter().map(|s| s.1).sum();
        let mut order: Vec<usize> = (0..shares.len()).collect();
        order.sort_by(|&a, &b| shares[b].2.total_cmp(&shares[a].2).then(a.cmp(&b)));
        for &k in order.iter().take(remaining - floor_sum) {
            shares[k].1 += 1;
        }
        for (c, add, _) in shares {
            let room = n_images - quotas[c];
            let take = add.min(room);
            quotas[c] += take;
            remaining -= take;
        }
    }
    Ok(quotas)
}

/// Scales training quotas to a held-out set, keeping every class present
/// when there is room.
fn proportional_quotas(train: &[usize], total_slots: usize, n_images: usize) -> Result<Vec<usize>> {
    if total_slots == 0 {
        return Ok(vec![0; train.len()]);
    }
    let train_total: usize = train.iter().sum();
    let mut q: Vec<usize> = train
        .iter()
        .map(|&n| {
            let share = (total_slots as f64 * n as f64 / train_total as f64).round() as usize;
            share.clamp(1, n_images)
        })
        .collect();
    let mut sum: usize = q.iter().sum();
    while sum > total_slots {
        let (k, _) = q
            .iter()
            .enumerate()
            .max_by_key(|(k, &v)| (v, std::cmp::Reverse(*k)))
            .unwrap();
        if q[k] == 0 {
            break;
        }
        q[k] -= 1;
        sum -= 1;
    }
    while sum < total_slots {
        let Some(k) = (0..q.len())
            .filter(|&k| q[k] < n_images)
            .max_by_key(|&k| (train[k], std::cmp::Reverse(k)))
        else {
            return Err(invalid("n_test_images", "too few test images for the slots"));
        };
        q[k] += 1;
        sum += 1;
    }
    Ok(q)
}

/// Places each class's quota into distinct images with free slots.
///
/// Classes are processed by decreasing quota, each filling the images with
/// the most free slots (random tie-breaks); this greedy order realizes any
/// feasible assignment.
pub(crate) fn assign_classes(quotas: &[usize], slots: &[usize], rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    let mut free = slots.to_vec();
    let mut out: Vec<Vec<usize>> = slots.iter().map(|&s| Vec::with_capacity(s)).collect();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by_key(|&c| (std::cmp::Reverse(quotas[c]), c));
    for c in order {
        let q = quotas[c];
        if q == 0 {
            continue;
        }
        let mut cands: Vec<(usize, u64)> = (0..free.len())
            .filter(|&i| free[i] > 0)
            .map(|i| (i, rng.gen::<u64>()))
            .collect();
        if cands.len() < q {
            return Err(invalid(
                "n_images",
                format!("class {c} needs {q} distinct images, only {} have room", cands.len()),
            ));
        }
        cands.sort_by_key(|&(i, key)| (std::cmp::Reverse(free[i]), key));
        for &(i, _) in &cands[..q] {
            free[i] -= 1;
            out[i].push(c);
        }
    }
    if free.iter().any(|&f| f > 0) {
        return Err(invalid("n_images", "class quotas do not fill every object slot"));
    }
    for cls in &mut out {
        cls.shuffle(rng);
    }
    Ok(out)
}

fn jitter_box(b: &BBox, sigma: f64, rng: &mut ChaCha8Rng) -> BBox {
    if sigma == 0.0 {
        return *b;
    }
    let nx = Normal::new(0.0, sigma * b.width()).unwrap();
    let ny = Normal::new(0.0, sigma * b.height()).unwrap();
    for _ in 0..16 {
        let c = BBox::new(
            b.x_min + nx.sample(rng),
            b.y_min + ny.sample(rng),
            b.x_max + nx.sample(rng),
            b.y_max + ny.sample(rng),
        );
        if let Ok(c) = c {
            return c;
        }
    }
    *b
}

fn place_humans(n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<BBox>> {
    let mut boxes: Vec<BBox> = Vec::with_capacity(n);
    let margin = HUMAN_HEIGHT.1;
    for _ in 0..n {
        let h = rng.gen_range(HUMAN_HEIGHT.0..HUMAN_HEIGHT.1);
        let w = h * rng.gen_range(HUMAN_ASPECT.0..HUMAN_ASPECT.1);
        let mut best: Option<((f64, f64), f64)> = None;
        // Rejection sampling keeps people apart; if the canvas is crowded
        // the most isolated candidate wins.
        for _ in 0..64 {
            let c = (
                rng.gen_range(margin..CANVAS_W - margin),
                rng.gen_range(margin..CANVAS_H - margin),
            );
            let gap = boxes
                .iter()
                .map(|b| {
                    let (x, y) = b.center();
                    ((x - c.0).powi(2) + (y - c.1).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(_, g)| gap > g) {
                best = Some((c, gap));
            }
            if gap >= MIN_HUMAN_SEPARATION {
                break;
            }
        }
        let ((cx, cy), _) = best.unwrap();
        boxes.push(BBox::from_center(cx, cy, w, h)?);
    }
    Ok(boxes)
}

fn render_image(
    cfg: &WorldConfig,
    catalog: &HoiCatalog,
    image_id: usize,
    n_humans: usize,
    classes: &[usize],
) -> Result<SynthImage> {
    let mut rng = stream_rng(cfg.seed, stream::IMAGE, image_id as u64);
    // Skip the plan draws so geometry does not reuse them.
    let _ = (rng.gen::<u64>(), rng.gen::<u64>());
    let humans = place_humans(n_humans, &mut rng)?;
    let noise = Normal::new(0.0, cfg.layout_noise_sigma.max(f64::MIN_POSITIVE)).unwrap();
    let layout_noise = |rng: &mut ChaCha8Rng| {
        if cfg.layout_noise_sigma == 0.0 {
            0.0
        } else {
            noise.sample(rng)
        }
    };

    let mut triplets = Vec::with_capacity(classes.len());
    let mut objects = Vec::with_capacity(classes.len());
    for (k, &hoi) in classes.iter().enumerate() {
        let owner = if k < n_humans { k } else { rng.gen_range(0..n_humans) };
        let h = humans[owner];
        let class = catalog.classes[hoi];
        let layout = catalog.verb_layouts[class.verb];
        let angle = layout.angle + layout_noise(&mut rng);
        let dist = layout.distance * layout_noise(&mut rng).exp();
        let (hcx, hcy) = h.center();
        let ref_h = h.height();
        let oh = catalog.object_scale[class.object_class] * ref_h * layout_noise(&mut rng).exp();
        let ow = oh * catalog.object_aspect[class.object_class];
        let o = BBox::from_center(
            hcx + dist * ref_h * angle.cos(),
            hcy + dist * ref_h * angle.sin(),
            ow,
            oh,
        )?;
        objects.push((class.object_class, o));
        triplets.push(Triplet {
            h_box: h,
            o_box: o,
            hoi_class: hoi,
        });
    }

    let mut detections = Vec::new();
    for h in &humans {
        detections.push(Detection {
            bbox: jitter_box(h, cfg.detection_jitter_sigma, &mut rng),
            class_id: HUMAN_CLASS,
            confidence: rng.gen_range(GT_CONFIDENCE.0..=GT_CONFIDENCE.1),
        });
    }
    for (class_id, o) in &objects {
        detections.push(Detection {
            bbox: jitter_box(o, cfg.detection_jitter_sigma, &mut rng),
            class_id: *class_id,
            confidence: rng.gen_range(GT_CONFIDENCE.0..=GT_CONFIDENCE.1),
        });
    }
    let n_annotated = humans.len() + objects.len();
    let n_distractors = (cfg.distractor_ratio * n_annotated as f64).round() as usize;
    let p_human = humans.len() as f64 / n_annotated as f64;
    for _ in 0..n_distractors {
        let (class_id, w, h) = if rng.gen_bool(p_human) {
            let h = rng.gen_range(HUMAN_HEIGHT.0..HUMAN_HEIGHT.1);
            (HUMAN_CLASS, h * rng.gen_range(HUMAN_ASPECT.0..HUMAN_ASPECT.1), h)
        } else {
            let c = rng.gen_range(1..=cfg.n_object_classes);
            let h = catalog.object_scale[c] * rng.gen_range(HUMAN_HEIGHT.0..HUMAN_HEIGHT.1);
            (c, h * catalog.object_aspect[c], h)
        };
        let bbox = BBox::from_center(rng.gen_range(0.0..CANVAS_W), rng.gen_range(0.0..CANVAS_H), w, h)?;
        detections.push(Detection {
            bbox,
            class_id,
            confidence: rng.gen_range(DISTRACTOR_CONFIDENCE.0..DISTRACTOR_CONFIDENCE.1),
        });
    }
    detections.shuffle(&mut rng);

    let mut img = SynthImage {
        image_id,
        supervision: SupervisionTag::FS,
        detections,
        gt_triplets: triplets,
        image_labels: Vec::new(),
        pseudo: false,
    };
    img.image_labels = img.labels_from_triplets();
    if img.humans().next().is_none() || img.objects().next().is_none() {
        return Err(Error::Empty(format!("image {image_id} lacks a human or an object")));
    }
    Ok(img)
}
