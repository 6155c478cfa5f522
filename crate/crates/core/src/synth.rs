//! Deterministic synthetic multi-target scenes with ground truth, noisy
//! detections and identity-consistent appearance features.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{MotRow, SeqInfo};
use crate::motion::AppearanceSource;
use crate::types::{iou, normalized, BoundingBox, Detection, Sequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    /// Horizontal motion in non-overlapping lanes.
    Lanes,
    /// Random positions and headings.
    #[default]
    Random,
}

/// Two targets meeting at one point. The shorter one is undetected from
/// `frame` until its box has cleared the other's for `hidden_frames`
/// frames, in addition to frames where it is mostly covered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossingEvent {
    /// 0-based target indices.
    pub a: usize,
    pub b: usize,
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub hidden_frames: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub frames: u32,
    pub fps: f64,
    pub targets: usize,
    /// Speed range in pixels per frame.
    pub speed: [f64; 2],
    pub box_height: [f64; 2],
    /// Width over height.
    pub aspect: f64,
    /// Per-frame probability of a random heading change.
    pub turn_probability: f64,
    /// Largest heading change in radians.
    pub turn_angle: f64,
    pub layout: Layout,
    /// Number of crossing events to script at random (ignored when
    /// `script` is non-empty).
    pub crossings: usize,
    /// Range of frames a crossing target stays undetected after clearing
    /// its occluder, for random crossing events.
    pub hidden_frames: [u32; 2],
    /// Explicit crossing events.
    pub script: Vec<CrossingEvent>,
    /// Smallest angle in radians between the headings of a random crossing pair.
    pub crossing_angle: f64,
    /// Whether crossing targets take new headings while hidden.
    pub crossing_turn: bool,
    /// Whether targets may leave the image (otherwise they bounce).
    pub allow_exits: bool,
    /// Number of targets outside crossings that leave the scene inside the
    /// image at a random frame in the middle half of the sequence.
    pub exits: usize,
    /// Distance kept from the image border when bouncing.
    pub margin: f64,
    /// Detection box noise in pixels.
    pub sigma_box: f64,
    pub dropout: f64,
    /// Expected false detections per frame per target.
    pub clutter_rate: f64,
    pub feature_dim: usize,
    /// Appearance noise: expected norm of the Gaussian vector added to the
    /// anchor before normalization.
    pub sigma_f: f64,
    /// Targets less visible than this are not detected.
    pub min_visibility: f64,
    pub seed: u64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            name: "scene".into(),
            width: 960.0,
            height: 540.0,
            frames: 100,
            fps: 6.0,
            targets: 5,
            speed: [2.0, 5.0],
            box_height: [60.0, 120.0],
            aspect: 0.45,
            turn_probability: 0.0,
            turn_angle: PI / 3.0,
            layout: Layout::Random,
            crossings: 0,
            hidden_frames: [2, 10],
            crossing_angle: PI / 3.0,
            script: Vec::new(),
            crossing_turn: false,
            allow_exits: false,
            exits: 0,
            margin: 10.0,
            sigma_box: 1.0,
            dropout: 0.0,
            clutter_rate: 0.0,
            feature_dim: 32,
            sigma_f: 0.05,
            min_visibility: 0.3,
            seed: 0,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        for (name, p) in [
            ("dropout", self.dropout),
            ("turn_probability", self.turn_probability),
            ("min_visibility", self.min_visibility),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.sigma_box < 0.0 || self.sigma_f < 0.0 || self.clutter_rate < 0.0 {
            return bad("noise levels and clutter rate must be non-negative".into());
        }
        if self.frames == 0 || self.feature_dim == 0 || !self.fps.is_finite() || self.fps <= 0.0 {
            return bad("frames, feature_dim and fps must be positive".into());
        }
        if !(self.speed[0] >= 0.0 && self.speed[0] <= self.speed[1]) {
            return bad("speed range must be non-negative and ordered".into());
        }
        if !(self.box_height[0] > 0.0 && self.box_height[0] <= self.box_height[1] && self.aspect > 0.0) {
            return bad("box sizes must be positive and ordered".into());
        }
        let max_w = self.box_height[1] * self.aspect;
        if self.width <= 2.0 * self.margin + max_w || self.height <= 2.0 * self.margin + self.box_height[1] {
            return bad("image too small for the configured boxes".into());
        }
        if self.hidden_frames[0] > self.hidden_frames[1] {
            return bad("hidden frame range must be ordered".into());
        }
        Ok(())
    }

    pub fn seqinfo(&self) -> SeqInfo {
        SeqInfo {
            name: self.name.clone(),
            fps: self.fps,
            width: self.width,
            height: self.height,
            frames: self.frames,
        }
    }
}

/// Names of the built-in presets, in listing order.
pub const PRESETS: [&str; 4] = ["easy", "crossing", "crossing_exits", "crowded"];

/// Built-in scene presets:
///
/// * `easy`: five targets in separate lanes, no occlusion, dropout or clutter.
/// * `crossing`: four scripted pairwise crossings; the rear target stays
///   undetected until 2 to 10 frames after clearing the front one and
///   changes heading while hidden.
/// * `crossing_exits`: crossings without heading changes, targets leaving
///   the image or vanishing inside it, detection dropout and clutter.
/// * `crowded`: twenty randomly moving targets over 300 frames with clutter
///   0.1 and dropout 0.1.
pub fn preset(name: &str, seed: u64) -> Result<SceneConfig> {
    let base = SceneConfig {
        name: name.to_string(),
        seed,
        ..SceneConfig::default()
    };
    Ok(match name {
        "easy" => SceneConfig {
            targets: 5,
            frames: 60,
            layout: Layout::Lanes,
            speed: [1.0, 3.0],
            box_height: [50.0, 70.0],
            aspect: 0.5,
            sigma_box: 0.5,
            ..base
        },
        "crossing" => SceneConfig {
            targets: 8,
            frames: 90,
            crossings: 4,
            crossing_turn: true,
            speed: [3.0, 7.0],
            box_height: [95.0, 110.0],
            sigma_box: 1.0,
            ..base
        },
        "crossing_exits" => SceneConfig {
            targets: 8,
            frames: 90,
            crossings: 3,
            crossing_turn: false,
            allow_exits: true,
            exits: 2,
            speed: [3.0, 7.0],
            box_height: [80.0, 120.0],
            sigma_box: 1.0,
            dropout: 0.1,
            clutter_rate: 0.05,
            ..base
        },
        "crowded" => SceneConfig {
            width: 1280.0,
            height: 720.0,
            targets: 20,
            frames: 300,
            speed: [1.0, 4.0],
            turn_probability: 0.05,
            turn_angle: PI / 6.0,
            box_height: [80.0, 160.0],
            sigma_box: 0.5,
            dropout: 0.1,
            clutter_rate: 0.1,
            sigma_f: 0.05,
            ..base
        },
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown preset `{other}` (available: {})",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Presets with seed 0.
pub fn standard_scenarios() -> Vec<(&'static str, SceneConfig)> {
    PRESETS.iter().map(|&n| (n, preset(n, 0).expect("preset exists"))).collect()
}

/// Ground-truth box of one target in one frame with its rendered feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub id: u64,
    pub bbox: BoundingBox,
    pub feature: Vec<f64>,
    /// Unoccluded, in-image fraction of the box.
    pub visibility: f64,
    pub detected: bool,
}

/// Generated scene: ground truth per frame and labelled detections.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub config: SceneConfig,
    /// Index 0 holds frame 1.
    pub ground_truth: Vec<Vec<GtObject>>,
    pub sequence: Sequence,
}

impl SyntheticScene {
    pub fn gt_rows(&self) -> Vec<MotRow> {
        let mut rows = Vec::new();
        for (t, objs) in self.ground_truth.iter().enumerate() {
            for o in objs {
                rows.push(MotRow {
                    frame: t as u32 + 1,
                    id: o.id as i64,
                    bbox: o.bbox,
                    confidence: 1.0,
                });
            }
        }
        rows
    }

    /// Appearance oracle for forecasting: the rendered feature of the
    /// ground-truth target overlapping a box by IoU >= 0.3, otherwise a
    /// deterministic background feature.
    pub fn appearance(&self) -> SceneAppearance<'_> {
        SceneAppearance { scene: self }
    }
}

pub struct SceneAppearance<'a> {
    scene: &'a SyntheticScene,
}

impl AppearanceSource for SceneAppearance<'_> {
    fn appearance_at(&self, frame: u32, bbox: &BoundingBox) -> Option<Vec<f64>> {
        let objs = self.scene.ground_truth.get(frame.checked_sub(1)? as usize)?;
        let best = objs
            .iter()
            .map(|o| (iou(&o.bbox, bbox), o))
            .filter(|(v, _)| *v >= 0.3)
            .max_by(|a, b| a.0.total_cmp(&b.0));
        match best {
            Some((_, o)) => Some(o.feature.clone()),
            None => {
                let key = (u64::from(frame) << 32) ^ (bbox.x.to_bits().rotate_left(17)) ^ bbox.y.to_bits();
                let mut rng = ChaCha8Rng::seed_from_u64(self.scene.config.seed ^ key);
                Some(random_unit(&mut rng, self.scene.config.feature_dim))
            }
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(u) = normalized(&v) {
            return u;
        }
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[derive(Debug, Clone, Copy)]
struct Hide {
    start: u32,
    occluder: usize,
    extra: u32,
    /// First frame without overlap with the occluder.
    clear_since: Option<u32>,
}

impl Hide {
    fn active(&self, t: u32) -> bool {
        t >= self.start && self.clear_since.is_none_or(|c| t < c + self.extra)
    }
}

#[derive(Debug, Clone)]
struct Target {
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    w: f64,
    h: f64,
    anchor: Vec<f64>,
    alive: bool,
    /// Frames before which free-motion rules are suspended.
    scripted_until: u32,
    /// Frame at which the target leaves the scene.
    leave_at: Option<u32>,
    /// Heading applied once the scripted approach ends.
    after: Option<(f64, f64)>,
    /// Scripted occlusion behind another target.
    hidden: Option<Hide>,
}

impl Target {
    fn bbox(&self) -> BoundingBox {
        BoundingBox {
            x: self.cx - 0.5 * self.w,
            y: self.cy - 0.5 * self.h,
            w: self.w,
            h: self.h,
        }
    }
}

fn heading(rng: &mut ChaCha8Rng, speed: [f64; 2]) -> (f64, f64) {
    let a = rng.random_range(0.0..2.0 * PI);
    let s = rng.random_range(speed[0]..=speed[1]);
    (s * a.cos(), s * a.sin())
}

fn inside(cfg: &SceneConfig, cx: f64, cy: f64, w: f64, h: f64) -> bool {
    let m = cfg.margin;
    cx - 0.5 * w >= m && cx + 0.5 * w <= cfg.width - m && cy - 0.5 * h >= m && cy + 0.5 * h <= cfg.height - m
}

/// Scripts a random crossing for targets `a` and `b`, redrawing their
/// velocities until the approach fits inside the image.
fn random_crossing(cfg: &SceneConfig, targets: &mut [Target], a: usize, b: usize, rng: &mut ChaCha8Rng) -> Result<CrossingEvent> {
    let lo = (cfg.frames / 4).max(2);
    let hi = (3 * cfg.frames / 4).max(lo);
    for _ in 0..1000 {
        let va = heading(rng, cfg.speed);
        let vb = heading(rng, cfg.speed);
        let ev = CrossingEvent {
            a,
            b,
            frame: rng.random_range(lo..=hi),
            x: rng.random_range(0.3 * cfg.width..0.7 * cfg.width),
            y: rng.random_range(0.3 * cfg.height..0.7 * cfg.height),
            hidden_frames: rng.random_range(cfg.hidden_frames[0]..=cfg.hidden_frames[1]),
        };
        let (na, nb) = (va.0.hypot(va.1), vb.0.hypot(vb.1));
        if na == 0.0 || nb == 0.0 || (va.0 * vb.0 + va.1 * vb.1) / (na * nb) > cfg.crossing_angle.cos() {
            continue;
        }
        (targets[a].vx, targets[a].vy) = va;
        (targets[b].vx, targets[b].vy) = vb;
        if crossing_start(cfg, &targets[a], &ev).is_some() && crossing_start(cfg, &targets[b], &ev).is_some() {
            return Ok(ev);
        }
    }
    Err(Error::InfeasibleScene(format!("no feasible crossing for targets {a} and {b}")))
}

/// Start center placing `t` at the crossing point at the crossing frame when
/// moving with its current velocity, if the whole approach stays inside.
fn crossing_start(cfg: &SceneConfig, t: &Target, ev: &CrossingEvent) -> Option<(f64, f64)> {
    let k = f64::from(ev.frame - 1);
    let (sx, sy) = (ev.x - t.vx * k, ev.y - t.vy * k);
    (inside(cfg, sx, sy, t.w, t.h) && inside(cfg, ev.x, ev.y, t.w, t.h)).then_some((sx, sy))
}

/// Generates a scene. Deterministic in `cfg`.
pub fn generate(cfg: &SceneConfig) -> Result<SyntheticScene> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.targets;
    let mut targets: Vec<Target> = Vec::with_capacity(n);
    for k in 0..n {
        let h = rng.random_range(cfg.box_height[0]..=cfg.box_height[1]);
        let w = h * cfg.aspect;
        let (cx, cy, vx, vy) = match cfg.layout {
            Layout::Random => {
                let cx = rng.random_range(cfg.margin + 0.5 * w..=cfg.width - cfg.margin - 0.5 * w);
                let cy = rng.random_range(cfg.margin + 0.5 * h..=cfg.height - cfg.margin - 0.5 * h);
                let (vx, vy) = heading(&mut rng, cfg.speed);
                (cx, cy, vx, vy)
            }
            Layout::Lanes => {
                let lane = (cfg.height - 2.0 * cfg.margin) / n as f64;
                if lane < cfg.box_height[1] {
                    return Err(Error::InfeasibleScene("lanes narrower than the tallest box".into()));
                }
                let cy = cfg.margin + (k as f64 + 0.5) * lane;
                let cx = rng.random_range(cfg.margin + 0.5 * w..=cfg.width - cfg.margin - 0.5 * w);
                let s = rng.random_range(cfg.speed[0]..=cfg.speed[1]);
                let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
                (cx, cy, s * dir, 0.0)
            }
        };
        targets.push(Target {
            cx,
            cy,
            vx,
            vy,
            w,
            h,
            anchor: random_unit(&mut rng, cfg.feature_dim),
            alive: true,
            scripted_until: 0,
            leave_at: None,
            after: None,
            hidden: None,
        });
    }

    let events: Vec<CrossingEvent> = if cfg.script.is_empty() {
        let pairs = cfg.crossings.min(n / 2);
        let mut evs = Vec::with_capacity(pairs);
        for p in 0..pairs {
            evs.push(random_crossing(cfg, &mut targets, 2 * p, 2 * p + 1, &mut rng)?);
        }
        evs
    } else {
        for ev in &cfg.script {
            if ev.a >= n || ev.b >= n || ev.a == ev.b || ev.frame < 1 || ev.frame > cfg.frames {
                return Err(Error::InvalidArgument(format!("invalid crossing event {ev:?}")));
            }
        }
        cfg.script.clone()
    };
    for ev in &events {
        for &k in &[ev.a, ev.b] {
            let t = &targets[k];
            let (sx, sy) = crossing_start(cfg, t, ev).ok_or_else(|| {
                Error::InfeasibleScene(format!(
                    "target {k} cannot reach ({:.1}, {:.1}) by frame {} from inside the image",
                    ev.x, ev.y, ev.frame
                ))
            })?;
            targets[k].cx = sx;
            targets[k].cy = sy;
            targets[k].scripted_until = ev.frame;
        }
        // The shorter target is behind.
        let back = if targets[ev.a].h <= targets[ev.b].h { ev.a } else { ev.b };
        let front = if back == ev.a { ev.b } else { ev.a };
        targets[back].hidden = Some(Hide {
            start: ev.frame,
            occluder: front,
            extra: ev.hidden_frames,
            clear_since: None,
        });
        if cfg.crossing_turn {
            for &k in &[ev.a, ev.b] {
                targets[k].after = Some(heading(&mut rng, cfg.speed));
            }
        }
    }

    let scripted: Vec<bool> = (0..n).map(|k| events.iter().any(|e| e.a == k || e.b == k)).collect();
    let free: Vec<usize> = (0..n).filter(|&k| !scripted[k]).collect();
    if cfg.exits > free.len() {
        return Err(Error::InfeasibleScene(format!(
            "{} exits requested but only {} targets are outside crossings",
            cfg.exits,
            free.len()
        )));
    }
    for &k in free.iter().rev().take(cfg.exits) {
        targets[k].leave_at = Some(rng.random_range(cfg.frames / 4..=(3 * cfg.frames / 4).max(cfg.frames / 4)));
    }

    let normal = rand_distr::Normal::new(0.0, 1.0).expect("unit normal");
    let per_component = cfg.sigma_f / (cfg.feature_dim as f64).sqrt();
    let mut ground_truth = Vec::with_capacity(cfg.frames as usize);
    let mut frames = Vec::with_capacity(cfg.frames as usize);
    for t in 1..=cfg.frames {
        if t > 1 {
            step_targets(cfg, &mut targets, t, &mut rng);
        }
        let boxes: Vec<Option<BoundingBox>> = targets
            .iter()
            .map(|tg| {
                let b = tg.bbox();
                (tg.alive && b.visible_fraction(cfg.width, cfg.height) >= 0.5).then_some(b)
            })
            .collect();
        for k in 0..n {
            let Some(h) = targets[k].hidden else { continue };
            if t >= h.start && h.clear_since.is_none() {
                let overlapping = match (boxes[k], boxes[h.occluder]) {
                    (Some(a), Some(b)) => a.intersection_area(&b) > 0.0,
                    _ => false,
                };
                if !overlapping {
                    targets[k].hidden = Some(Hide { clear_since: Some(t), ..h });
                }
            }
        }
        let mut objs = Vec::new();
        let mut dets = Vec::new();
        for (k, tg) in targets.iter().enumerate() {
            let Some(b) = boxes[k] else { continue };
            // Occluders are the taller targets overlapping this one.
            let mut covered = 0.0;
            let mut occluder: Option<(f64, usize)> = None;
            for (o, ob) in boxes.iter().enumerate() {
                let Some(ob) = ob else { continue };
                if o == k || targets[o].h <= tg.h {
                    continue;
                }
                let inter = b.intersection_area(ob);
                if inter > 0.0 {
                    covered += inter;
                    let v = iou(&b, ob);
                    if occluder.is_none_or(|(best, _)| v > best) {
                        occluder = Some((v, o));
                    }
                }
            }
            let in_image = b.visible_fraction(cfg.width, cfg.height);
            let visibility = (in_image - covered / b.area()).clamp(0.0, 1.0);
            let noise: Vec<f64> = tg.anchor.iter().map(|a| a + per_component * normal.sample(&mut rng)).collect();
            let mut feature = normalized(&noise).unwrap_or_else(|| tg.anchor.clone());
            if let Some((w, o)) = occluder {
                let mixed: Vec<f64> = feature
                    .iter()
                    .zip(&targets[o].anchor)
                    .map(|(f, a)| (1.0 - w) * f + w * a)
                    .collect();
                feature = normalized(&mixed).unwrap_or(feature);
            }
            let hidden = tg.hidden.is_some_and(|h| h.active(t));
            let dropped = rng.random::<f64>() < cfg.dropout;
            let detected = !hidden && !dropped && visibility >= cfg.min_visibility;
            if detected {
                let jitter = |rng: &mut ChaCha8Rng| if cfg.sigma_box > 0.0 { cfg.sigma_box * normal.sample(rng) } else { 0.0 };
                let x = round2(b.x + jitter(&mut rng));
                let y = round2(b.y + jitter(&mut rng));
                let w = round2((b.w + jitter(&mut rng)).max(1.0));
                let h = round2((b.h + jitter(&mut rng)).max(1.0));
                let conf = round2(rng.random_range(0.6..1.0));
                let bbox = BoundingBox::new(x, y, w, h)?;
                dets.push(Detection::new(t, bbox, conf, feature.clone())?.with_gt_id(k as u64 + 1));
            }
            let gt_box = BoundingBox::new(round2(b.x), round2(b.y), round2(b.w), round2(b.h))?;
            objs.push(GtObject {
                id: k as u64 + 1,
                bbox: gt_box,
                feature,
                visibility,
                detected,
            });
        }
        let clutter_draws = n;
        for _ in 0..clutter_draws {
            if cfg.clutter_rate > 0.0 && rng.random::<f64>() < cfg.clutter_rate {
                let h = rng.random_range(cfg.box_height[0]..=cfg.box_height[1]);
                let w = h * cfg.aspect;
                let x = round2(rng.random_range(0.0..cfg.width - w));
                let y = round2(rng.random_range(0.0..cfg.height - h));
                let conf = round2(rng.random_range(0.3..0.7));
                let feature = random_unit(&mut rng, cfg.feature_dim);
                dets.push(Detection::new(t, BoundingBox::new(x, y, round2(w), round2(h))?, conf, feature)?);
            }
        }
        ground_truth.push(objs);
        frames.push(dets);
    }
    Ok(SyntheticScene {
        config: cfg.clone(),
        ground_truth,
        sequence: Sequence {
            name: cfg.name.clone(),
            fps: cfg.fps,
            width: cfg.width,
            height: cfg.height,
            frames,
        },
    })
}

fn step_targets(cfg: &SceneConfig, targets: &mut [Target], t: u32, rng: &mut ChaCha8Rng) {
    for tg in targets.iter_mut() {
        if !tg.alive {
            continue;
        }
        if tg.leave_at.is_some_and(|f| t >= f) {
            tg.alive = false;
            continue;
        }
        let scripted = t <= tg.scripted_until;
        if !scripted {
            if let Some((vx, vy)) = tg.after.take() {
                tg.vx = vx;
                tg.vy = vy;
            }
            if cfg.turn_probability > 0.0 && rng.random::<f64>() < cfg.turn_probability {
                let a = rng.random_range(-cfg.turn_angle..=cfg.turn_angle);
                let (c, s) = (a.cos(), a.sin());
                let (vx, vy) = (tg.vx * c - tg.vy * s, tg.vx * s + tg.vy * c);
                tg.vx = vx;
                tg.vy = vy;
            }
        }
        tg.cx += tg.vx;
        tg.cy += tg.vy;
        if cfg.allow_exits {
            if tg.bbox().visible_fraction(cfg.width, cfg.height) < 0.5 {
                tg.alive = false;
            }
            continue;
        }
        let (lo_x, hi_x) = (cfg.margin + 0.5 * tg.w, cfg.width - cfg.margin - 0.5 * tg.w);
        let (lo_y, hi_y) = (cfg.margin + 0.5 * tg.h, cfg.height - cfg.margin - 0.5 * tg.h);
        if tg.cx < lo_x || tg.cx > hi_x {
            tg.cx = if tg.cx < lo_x { 2.0 * lo_x - tg.cx } else { 2.0 * hi_x - tg.cx }.clamp(lo_x, hi_x);
            tg.vx = -tg.vx;
        }
        if tg.cy < lo_y || tg.cy > hi_y {
            tg.cy = if tg.cy < lo_y { 2.0 * lo_y - tg.cy } else { 2.0 * hi_y - tg.cy }.clamp(lo_y, hi_y);
            tg.vy = -tg.vy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{format_features, format_mot, sequence_rows};
    use crate::types::feature_distance;

    #[test]
    fn noiseless_detections_equal_ground_truth() {
        let cfg = SceneConfig {
            sigma_box: 0.0,
            layout: Layout::Lanes,
            ..preset("easy", 3).unwrap()
        };
        let s = generate(&cfg).unwrap();
        for (objs, dets) in s.ground_truth.iter().zip(&s.sequence.frames) {
            assert_eq!(objs.len(), dets.len());
            for (o, d) in objs.iter().zip(dets) {
                assert_eq!(o.bbox, d.bbox);
                assert_eq!(Some(o.id), d.gt_id);
            }
        }
    }

    #[test]
    fn full_dropout_leaves_only_ground_truth() {
        let cfg = SceneConfig {
            dropout: 1.0,
            ..preset("easy", 1).unwrap()
        };
        let s = generate(&cfg).unwrap();
        assert!(s.sequence.frames.iter().all(Vec::is_empty));
        assert!(!s.gt_rows().is_empty());
    }

    #[test]
    fn same_seed_same_bytes() {
        for name in PRESETS {
            let a = generate(&preset(name, 9).unwrap()).unwrap();
            let b = generate(&preset(name, 9).unwrap()).unwrap();
            let (ra, fa) = sequence_rows(&a.sequence);
            let (rb, fb) = sequence_rows(&b.sequence);
            assert_eq!(format_mot(&ra), format_mot(&rb));
            assert_eq!(format_features(&fa), format_features(&fb));
            assert_eq!(format_mot(&a.gt_rows()), format_mot(&b.gt_rows()));
        }
    }

    #[test]
    fn unreachable_crossing_is_infeasible() {
        let cfg = SceneConfig {
            targets: 2,
            frames: 50,
            speed: [10.0, 10.0],
            script: vec![CrossingEvent {
                a: 0,
                b: 1,
                frame: 50,
                x: 480.0,
                y: 270.0,
                hidden_frames: 4,
            }],
            ..SceneConfig::default()
        };
        assert!(matches!(generate(&cfg), Err(Error::InfeasibleScene(_))));
    }

    #[test]
    fn scripted_exits_end_tracks_inside_the_image() {
        let cfg = SceneConfig {
            targets: 4,
            frames: 80,
            exits: 2,
            ..SceneConfig::default()
        };
        let s = generate(&cfg).unwrap();
        let last_frame = |id: u64| s.ground_truth.iter().rposition(|objs| objs.iter().any(|o| o.id == id));
        let ended: Vec<u64> = (1..=4).filter(|&id| last_frame(id).is_some_and(|f| f + 1 < 80)).collect();
        assert_eq!(ended.len(), 2);
        for id in ended {
            let f = last_frame(id).unwrap();
            assert!((19..=60).contains(&f), "{id} ends at {f}");
            let o = s.ground_truth[f].iter().find(|o| o.id == id).unwrap();
            assert!(o.bbox.x > 0.0 && o.bbox.y > 0.0 && o.bbox.right() < cfg.width && o.bbox.bottom() < cfg.height);
        }
        let too_many = SceneConfig { exits: 5, ..cfg };
        assert!(matches!(generate(&too_many), Err(Error::InfeasibleScene(_))));
    }

    #[test]
    fn preset_list_is_stable() {
        let names: Vec<&str> = standard_scenarios().iter().map(|s| s.0).collect();
        assert_eq!(names, ["easy", "crossing", "crossing_exits", "crowded"]);
        assert!(preset("nope", 0).is_err());
    }

    #[test]
    fn boxes_stay_inside_without_exits() {
        for seed in 0..5 {
            let s = generate(&preset("crowded", seed).unwrap()).unwrap();
            let m = s.config.margin - 0.01;
            for o in s.ground_truth.iter().flatten() {
                assert!(o.bbox.x >= m && o.bbox.y >= m);
                assert!(o.bbox.right() <= s.config.width - m && o.bbox.bottom() <= s.config.height - m);
            }
        }
    }

    #[test]
    fn crossing_hides_the_shorter_target() {
        let s = generate(&preset("crossing", 4).unwrap()).unwrap();
        let hidden = s.ground_truth.iter().flatten().filter(|o| !o.detected).count();
        assert!(hidden >= 4 * 2);
    }

    #[test]
    fn identities_are_closer_to_themselves_outside_occlusion() {
        for seed in 0..3 {
            let cfg = SceneConfig {
                targets: 6,
                frames: 20,
                sigma_f: 0.1,
                ..SceneConfig::default()
            };
            let cfg = SceneConfig { seed, ..cfg };
            let s = generate(&cfg).unwrap();
            let clean: Vec<&GtObject> = s.ground_truth.iter().flatten().filter(|o| o.visibility >= 0.999).collect();
            for a in &clean {
                let own = clean
                    .iter()
                    .filter(|b| b.id == a.id)
                    .map(|b| feature_distance(&a.feature, &b.feature).unwrap())
                    .fold(0.0, f64::max);
                let other = clean
                    .iter()
                    .filter(|b| b.id != a.id)
                    .map(|b| feature_distance(&a.feature, &b.feature).unwrap())
                    .fold(f64::INFINITY, f64::min);
                assert!(own < other, "{own} vs {other}");
            }
        }
    }
}
