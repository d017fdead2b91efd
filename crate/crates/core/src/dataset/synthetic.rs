//! Desk-scale scenes of colored shapes with templated referring expressions.
//!
//! Every expression is generated from a [`Query`] and can be grounded again
//! from its text alone with [`parse_expression`] + [`Query::resolve`], which is
//! what the soundness tests do.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{DatasetFiles, ImageInfo, InstanceFile, RefEntry, RgbImage};
use super::sample::{AnnId, ImageId, InstanceRecord, RefId, SampleKind, Split};
use crate::error::DatasetError;
use crate::geometry::BinaryMask;
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
}

impl Color {
    pub const ALL: [Color; 4] = [Color::Red, Color::Green, Color::Blue, Color::Yellow];

    pub fn word(&self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
        }
    }

    pub fn rgb(&self) -> [f32; 3] {
        match self {
            Color::Red => [0.9, 0.12, 0.1],
            Color::Green => [0.1, 0.78, 0.22],
            Color::Blue => [0.15, 0.3, 0.95],
            Color::Yellow => [0.95, 0.85, 0.1],
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.word() == w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Circle, Shape::Triangle];

    pub fn word(&self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.word() == w)
    }

    fn contains(&self, cx: f64, cy: f64, r: f64, px: f64, py: f64) -> bool {
        let (dx, dy) = (px - cx, py - cy);
        match self {
            Shape::Square => dx.abs() <= r && dy.abs() <= r,
            Shape::Circle => dx * dx + dy * dy <= r * r,
            Shape::Triangle => {
                // apex up, base at cy + r
                if dy < -r || dy > r {
                    return false;
                }
                let half = r * (dy + r) / (2.0 * r);
                dx.abs() <= half
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
    Top,
    Bottom,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Top, Side::Bottom];

    pub fn word(&self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Top => "top",
            Side::Bottom => "bottom",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.word() == w)
    }

    fn holds(&self, row: usize, col: usize, grid: usize) -> bool {
        match self {
            Side::Left => col == 0,
            Side::Right => col + 1 == grid,
            Side::Top => row == 0,
            Side::Bottom => row + 1 == grid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub ann_id: AnnId,
    pub color: Color,
    pub shape: Shape,
    pub row: usize,
    pub col: usize,
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: ImageId,
    pub size: usize,
    pub grid: usize,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn render(&self, background: [f32; 3]) -> RgbImage {
        let mut img = RgbImage::blank(self.size, self.size, background);
        for obj in &self.objects {
            for y in 0..self.size {
                for x in 0..self.size {
                    if obj.mask.get(y, x) {
                        img.pixels[y * self.size + x] = obj.color.rgb();
                    }
                }
            }
        }
        img
    }
}

/// Attribute filter; `None` fields match anything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct Filter {
    pub color: Option<Color>,
    pub shape: Option<Shape>,
    pub side: Option<Side>,
}

impl Filter {
    pub fn matches(&self, obj: &SceneObject, grid: usize) -> bool {
        self.color.is_none_or(|c| c == obj.color)
            && self.shape.is_none_or(|s| s == obj.shape)
            && self.side.is_none_or(|s| s.holds(obj.row, obj.col, grid))
    }

    fn select(&self, scene: &Scene) -> BTreeSet<AnnId> {
        scene
            .objects
            .iter()
            .filter(|o| self.matches(o, scene.grid))
            .map(|o| o.ann_id)
            .collect()
    }

    fn noun(&self, plural: bool, generic: &str) -> String {
        let mut words = Vec::new();
        if let Some(c) = self.color {
            words.push(c.word().to_string());
        }
        let head = self.shape.map_or(generic, |s| s.word());
        words.push(if plural { format!("{head}s") } else { head.to_string() });
        if let Some(s) = self.side {
            words.push(format!("on the {}", s.word()));
        }
        words.join(" ")
    }
}

/// Symbolic meaning of a templated expression.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    /// "the red circle"
    The(Filter),
    /// "all red shapes", "the circles"
    Plural { filter: Filter, with_all: bool },
    /// "the two circles on the left": resolves to nothing unless exactly `n` match
    Count(usize, Filter),
    /// "all circles except the blue one"
    Except(Filter, Filter),
    /// "the squares and the red circle"
    And(Vec<Query>),
}

const NUMBER_WORDS: [&str; 6] = ["zero", "one", "two", "three", "four", "five"];

impl Query {
    pub fn resolve(&self, scene: &Scene) -> BTreeSet<AnnId> {
        match self {
            Query::The(f) => f.select(scene),
            Query::Plural { filter, .. } => filter.select(scene),
            Query::Count(n, f) => {
                let hits = f.select(scene);
                if hits.len() == *n {
                    hits
                } else {
                    BTreeSet::new()
                }
            }
            Query::Except(keep, drop) => {
                let drop = drop.select(scene);
                keep.select(scene).difference(&drop).copied().collect()
            }
            Query::And(parts) => parts.iter().flat_map(|q| q.resolve(scene)).collect(),
        }
    }

    pub fn render(&self) -> String {
        match self {
            Query::The(f) => format!("the {}", f.noun(false, "shape")),
            Query::Plural { filter, with_all } => {
                let det = if *with_all { "all" } else { "the" };
                format!("{det} {}", filter.noun(true, "shape"))
            }
            Query::Count(n, f) => format!("the {} {}", NUMBER_WORDS[*n], f.noun(true, "shape")),
            Query::Except(keep, drop) => {
                format!("all {} except the {}", keep.noun(true, "shape"), drop.noun(false, "one"))
            }
            Query::And(parts) => parts.iter().map(Query::render).collect::<Vec<_>>().join(" and "),
        }
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Parse the templated grammar back into a query. Returns `None` for text
/// outside the grammar.
pub fn parse_expression(text: &str) -> Option<Query> {
    let tokens = tokenize(text);
    let mut parts: Vec<Query> = Vec::new();
    for chunk in tokens.split(|t| t == "and") {
        parts.push(parse_clause(chunk)?);
    }
    match parts.len() {
        0 => None,
        1 => parts.pop(),
        _ => Some(Query::And(parts)),
    }
}

fn parse_clause(tokens: &[String]) -> Option<Query> {
    let (first, rest) = tokens.split_first()?;
    if let Some(pos) = rest.iter().position(|t| t == "except") {
        if first != "all" {
            return None;
        }
        let (keep, plural) = parse_noun(&rest[..pos])?;
        let drop_tokens = &rest[pos + 1..];
        if drop_tokens.first().map(String::as_str) != Some("the") {
            return None;
        }
        let (drop, drop_plural) = parse_noun(&drop_tokens[1..])?;
        return (plural && !drop_plural).then_some(Query::Except(keep, drop));
    }
    match first.as_str() {
        "all" => {
            let (filter, plural) = parse_noun(rest)?;
            plural.then_some(Query::Plural { filter, with_all: true })
        }
        "the" => {
            let count = rest.first().and_then(|w| NUMBER_WORDS.iter().position(|x| x == w));
            if let Some(n) = count.filter(|n| *n >= 2) {
                let (filter, plural) = parse_noun(&rest[1..])?;
                return plural.then_some(Query::Count(n, filter));
            }
            let (filter, plural) = parse_noun(rest)?;
            Some(if plural {
                Query::Plural { filter, with_all: false }
            } else {
                Query::The(filter)
            })
        }
        _ => None,
    }
}

/// `[color] head [on the side]`, returning the filter and whether the head was plural.
fn parse_noun(tokens: &[String]) -> Option<(Filter, bool)> {
    let mut it = tokens.iter().map(String::as_str).peekable();
    let mut filter = Filter::default();
    if let Some(c) = it.peek().and_then(|w| Color::from_word(w)) {
        filter.color = Some(c);
        it.next();
    }
    let head = it.next()?;
    let (stem, plural) = match head.strip_suffix('s') {
        Some(stem) => (stem, true),
        None => (head, false),
    };
    match stem {
        "shape" | "one" => {}
        other => filter.shape = Some(Shape::from_word(other)?),
    }
    match (it.next(), it.next(), it.next()) {
        (None, _, _) => {}
        (Some("on"), Some("the"), Some(side)) => filter.side = Some(Side::from_word(side)?),
        _ => return None,
    }
    if it.next().is_some() {
        return None;
    }
    Some((filter, plural))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitQuota {
    pub split: Split,
    pub single_target: usize,
    pub multi_target: usize,
    pub no_target: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub image_size: usize,
    /// Objects are placed in distinct cells of a `grid × grid` layout.
    pub grid: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Expressions written per generated scene.
    pub refs_per_image: usize,
    pub colors: Vec<Color>,
    pub shapes: Vec<Shape>,
    pub background: [f32; 3],
    pub quotas: Vec<SplitQuota>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            grid: 3,
            min_objects: 3,
            max_objects: 5,
            refs_per_image: 2,
            colors: Color::ALL.to_vec(),
            shapes: Shape::ALL.to_vec(),
            background: [0.08, 0.08, 0.08],
            quotas: vec![SplitQuota {
                split: Split::Train,
                single_target: 8,
                multi_target: 4,
                no_target: 4,
            }],
        }
    }
}

impl SyntheticConfig {
    pub fn with_quota(mut self, split: Split, single_target: usize, multi_target: usize, no_target: usize) -> Self {
        self.quotas = vec![SplitQuota {
            split,
            single_target,
            multi_target,
            no_target,
        }];
        self
    }

    /// Adds (or replaces) one split's quota, keeping the others.
    pub fn and_quota(mut self, split: Split, single_target: usize, multi_target: usize, no_target: usize) -> Self {
        self.quotas.retain(|q| q.split != split);
        self.quotas.push(SplitQuota {
            split,
            single_target,
            multi_target,
            no_target,
        });
        self
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let bad = |m: &str| Err(DatasetError::InfeasibleConfig(m.to_string()));
        if self.grid == 0 || self.image_size < self.grid * 8 {
            return bad("image_size must give each grid cell at least 8 pixels");
        }
        if self.min_objects == 0 || self.min_objects > self.max_objects {
            return bad("need 1 <= min_objects <= max_objects");
        }
        if self.max_objects > self.grid * self.grid {
            return bad("max_objects exceeds grid capacity");
        }
        if self.refs_per_image == 0 {
            return bad("refs_per_image must be positive");
        }
        if self.colors.is_empty() || self.shapes.is_empty() {
            return bad("empty color or shape vocabulary");
        }
        let wants_multi = self.quotas.iter().any(|q| q.multi_target > 0);
        if wants_multi && self.max_objects < 2 {
            return bad("multi-target samples need at least 2 objects per scene");
        }
        let mut seen = BTreeSet::new();
        if !self.quotas.iter().all(|q| seen.insert(q.split)) {
            return bad("split listed twice");
        }
        Ok(())
    }
}

/// Generator output: the on-disk files plus the symbolic scenes behind them.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub files: DatasetFiles,
    pub scenes: Vec<Scene>,
    pub images: BTreeMap<ImageId, RgbImage>,
    pub queries: BTreeMap<RefId, Query>,
}

impl SyntheticDataset {
    pub fn scene(&self, image_id: ImageId) -> Option<&Scene> {
        self.scenes.iter().find(|s| s.image_id == image_id)
    }

    pub fn write(&self, root: &std::path::Path) -> Result<(), DatasetError> {
        super::io::write_dataset(root, &self.files)?;
        for (id, img) in &self.images {
            super::io::write_image(root, *id, img)?;
        }
        Ok(())
    }
}

const SCENE_ATTEMPTS: usize = 200;

pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<SyntheticDataset, DatasetError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = SyntheticDataset {
        files: DatasetFiles {
            instances: InstanceFile::default(),
            refs: BTreeMap::new(),
        },
        scenes: Vec::new(),
        images: BTreeMap::new(),
        queries: BTreeMap::new(),
    };
    let (mut next_image, mut next_ann, mut next_ref) = (1u64, 1u64, 1u64);

    for quota in &config.quotas {
        let mut kinds: Vec<SampleKind> = std::iter::repeat_n(SampleKind::SingleTarget, quota.single_target)
            .chain(std::iter::repeat_n(SampleKind::MultiTarget, quota.multi_target))
            .chain(std::iter::repeat_n(SampleKind::NoTarget, quota.no_target))
            .collect();
        kinds.shuffle(&mut rng);
        let refs = out.files.refs.entry(quota.split).or_default();
        let mut multi_style = 0usize;

        for batch in kinds.chunks(config.refs_per_image) {
            let mut attempt = 0;
            let (scene, queries) = loop {
                attempt += 1;
                if attempt > SCENE_ATTEMPTS {
                    return Err(DatasetError::InfeasibleConfig(format!(
                        "could not realize {batch:?} in {SCENE_ATTEMPTS} scenes"
                    )));
                }
                let scene = random_scene(config, next_image, next_ann, &mut rng);
                let mut qs: Vec<Query> = Vec::new();
                let mut ok = true;
                for (i, kind) in batch.iter().enumerate() {
                    let style = multi_style + i;
                    match make_query(*kind, style, &scene, &qs, &mut rng) {
                        Some(q) => qs.push(q),
                        None => {
                            ok = false;
                            break;
                        }
                    }
                }
                if ok {
                    break (scene, qs);
                }
            };
            multi_style += batch.iter().filter(|k| **k == SampleKind::MultiTarget).count();
            next_image += 1;
            next_ann += scene.objects.len() as u64;

            out.files.instances.images.push(ImageInfo {
                id: scene.image_id,
                height: scene.size,
                width: scene.size,
                file_name: format!("{}.png", scene.image_id),
            });
            for obj in &scene.objects {
                let category = format!("{} {}", obj.color.word(), obj.shape.word());
                let rec = InstanceRecord::from_mask(obj.ann_id, scene.image_id, &category, &obj.mask)
                    .expect("rendered shapes are non-empty");
                out.files.instances.annotations.push(rec.to_entry());
            }
            for q in queries {
                let targets = q.resolve(&scene);
                refs.push(RefEntry {
                    ref_id: next_ref,
                    image_id: scene.image_id,
                    split: quota.split,
                    sentence: q.render(),
                    ann_ids: targets.into_iter().collect(),
                    mask: None,
                });
                out.queries.insert(next_ref, q);
                next_ref += 1;
            }
            out.images.insert(scene.image_id, scene.render(config.background));
            out.scenes.push(scene);
        }
    }
    Ok(out)
}

fn random_scene(config: &SyntheticConfig, image_id: ImageId, first_ann: AnnId, rng: &mut ChaCha8Rng) -> Scene {
    let n = rng.random_range(config.min_objects..=config.max_objects);
    let mut cells: Vec<usize> = (0..config.grid * config.grid).collect();
    cells.shuffle(rng);
    cells.truncate(n);
    cells.sort_unstable();
    let cell = config.image_size as f64 / config.grid as f64;
    let objects = cells
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let (row, col) = (c / config.grid, c % config.grid);
            let color = *config.colors.choose(rng).expect("validated non-empty");
            let shape = *config.shapes.choose(rng).expect("validated non-empty");
            let r = cell * rng.random_range(0.3..0.42);
            let slack = cell / 2.0 - r - 0.5;
            let cx = (col as f64 + 0.5) * cell + rng.random_range(-slack..=slack);
            let cy = (row as f64 + 0.5) * cell + rng.random_range(-slack..=slack);
            let mask = BinaryMask::from_fn(config.image_size, config.image_size, |y, x| {
                shape.contains(cx, cy, r, x as f64 + 0.5, y as f64 + 0.5)
            });
            SceneObject {
                ann_id: first_ann + i as u64,
                color,
                shape,
                row,
                col,
                mask,
            }
        })
        .collect();
    Scene {
        image_id,
        size: config.image_size,
        grid: config.grid,
        objects,
    }
}

/// Every filter over the scene's attribute vocabulary, in a fixed order.
fn all_filters(scene: &Scene) -> Vec<Filter> {
    let colors: BTreeSet<Color> = scene.objects.iter().map(|o| o.color).collect();
    let shapes: BTreeSet<Shape> = scene.objects.iter().map(|o| o.shape).collect();
    let mut out = Vec::new();
    for color in std::iter::once(None).chain(colors.iter().copied().map(Some)) {
        for shape in std::iter::once(None).chain(shapes.iter().copied().map(Some)) {
            for side in std::iter::once(None).chain(Side::ALL.into_iter().map(Some)) {
                out.push(Filter { color, shape, side });
            }
        }
    }
    out
}

fn make_query(kind: SampleKind, style: usize, scene: &Scene, taken: &[Query], rng: &mut ChaCha8Rng) -> Option<Query> {
    let filters = all_filters(scene);
    let fresh = |q: &Query| !taken.contains(q);
    let mut candidates: Vec<Query> = match kind {
        SampleKind::SingleTarget => filters
            .iter()
            .filter(|f| f.color.is_some() || f.shape.is_some())
            .filter(|f| f.select(scene).len() == 1)
            .map(|f| Query::The(*f))
            .collect(),
        SampleKind::MultiTarget => multi_candidates(style % 4, scene, &filters),
        SampleKind::NoTarget => deceptive_candidates(scene, &filters),
    };
    candidates.retain(|q| fresh(q));
    let q = candidates.choose(rng)?.clone();
    debug_assert_eq!(SampleKind::from_target_count(q.resolve(scene).len()), kind);
    Some(q)
}

fn multi_candidates(style: usize, scene: &Scene, filters: &[Filter]) -> Vec<Query> {
    let named = |f: &&Filter| f.color.is_some() || f.shape.is_some();
    match style {
        // counting
        0 => filters
            .iter()
            .filter(named)
            .filter(|f| (2..=5).contains(&f.select(scene).len()))
            .map(|f| Query::Count(f.select(scene).len(), *f))
            .collect(),
        // compound
        1 => {
            let singles: Vec<&Filter> = filters
                .iter()
                .filter(|f| f.color.is_some() && f.shape.is_some() && f.side.is_none())
                .filter(|f| f.select(scene).len() == 1)
                .collect();
            let plurals: Vec<&Filter> = filters
                .iter()
                .filter(|f| f.color.is_none() && f.shape.is_some() && f.side.is_none())
                .filter(|f| f.select(scene).len() >= 2)
                .collect();
            let mut out = Vec::new();
            for (i, a) in singles.iter().enumerate() {
                for b in &singles[i + 1..] {
                    out.push(Query::And(vec![Query::The(**a), Query::The(**b)]));
                }
                for p in &plurals {
                    if a.select(scene).is_disjoint(&p.select(scene)) {
                        out.push(Query::And(vec![
                            Query::Plural { filter: **p, with_all: false },
                            Query::The(**a),
                        ]));
                    }
                }
            }
            out
        }
        // shared attribute
        2 => filters
            .iter()
            .filter(named)
            .filter(|f| f.select(scene).len() >= 2)
            .flat_map(|f| {
                [true, false]
                    .into_iter()
                    .filter(move |all| *all || f.shape.is_some())
                    .map(move |with_all| Query::Plural { filter: *f, with_all })
            })
            .collect(),
        // exclusion
        _ => {
            let mut out = Vec::new();
            for keep in filters.iter().filter(|f| f.side.is_none() && f.color.is_none()) {
                let kept = keep.select(scene);
                if kept.len() < 3 {
                    continue;
                }
                for drop in filters.iter().filter(|f| f.shape.is_none() && f.color.is_some() != f.side.is_some()) {
                    let dropped = drop.select(scene);
                    let removed = kept.intersection(&dropped).count();
                    if removed >= 1 && kept.len() - removed >= 2 {
                        out.push(Query::Except(*keep, *drop));
                    }
                }
            }
            out
        }
    }
}

/// No-target expressions that still mention attributes present in the scene.
fn deceptive_candidates(scene: &Scene, filters: &[Filter]) -> Vec<Query> {
    let colors: BTreeSet<Color> = scene.objects.iter().map(|o| o.color).collect();
    let shapes: BTreeSet<Shape> = scene.objects.iter().map(|o| o.shape).collect();
    let occupied_sides: BTreeSet<Side> = Side::ALL
        .into_iter()
        .filter(|s| scene.objects.iter().any(|o| s.holds(o.row, o.col, scene.grid)))
        .collect();
    let mut out = Vec::new();
    for f in filters {
        let present = f.color.is_none_or(|c| colors.contains(&c))
            && f.shape.is_none_or(|s| shapes.contains(&s))
            && f.side.is_none_or(|s| occupied_sides.contains(&s));
        if !present || (f.color.is_none() && f.shape.is_none()) {
            continue;
        }
        let hits = f.select(scene).len();
        if hits == 0 && (f.color.is_some() as u8 + f.shape.is_some() as u8 + f.side.is_some() as u8) >= 2 {
            out.push(Query::The(*f));
        }
        if (1..=4).contains(&hits) && f.side.is_none() {
            out.push(Query::Count(hits + 1, *f));
        }
    }
    out
}
