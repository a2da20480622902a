//! Score-map post-processing: hard assignment, multi-scale average-pool
//! denoising, landmark/goal extraction, and the dice evaluation harness.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PerceptionError {
    #[error("bad kernel schedule {0:?}: sizes must be odd, >= 3, strictly decreasing")]
    BadKernelSchedule(Vec<usize>),
    #[error("dimension or label mismatch between masks")]
    DimensionMismatch,
    #[error("label {0:?} is not in the mask vocabulary")]
    UnknownLabel(String),
    #[error("no traversable {0:?} pixel in the requested band")]
    NoTraversableRegion(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("invalid score map: {0}")]
    InvalidScoreMap(String),
}

/// Per-pixel, per-class scores. Plane-major layout: class c occupies
/// `scores[c*w*h .. (c+1)*w*h]` in row-major order. Label 0 is the
/// background label ("other" by convention).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<String>,
    pub scores: Vec<f32>,
}

impl ScoreMap {
    pub fn new(width: usize, height: usize, labels: Vec<String>, scores: Vec<f32>) -> Result<Self, PerceptionError> {
        let map = ScoreMap { width, height, labels, scores };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.width < 8 || self.height < 8 {
            return Err(PerceptionError::InvalidScoreMap("width and height must be >= 8".into()));
        }
        if self.labels.is_empty() {
            return Err(PerceptionError::InvalidScoreMap("no labels".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &self.labels {
            if !seen.insert(l) {
                return Err(PerceptionError::InvalidScoreMap(format!("duplicate label {l:?}")));
            }
        }
        if self.scores.len() != self.labels.len() * self.width * self.height {
            return Err(PerceptionError::InvalidScoreMap("score buffer size mismatch".into()));
        }
        let plane = self.width * self.height;
        for px in 0..plane {
            let sum: f32 = (0..self.labels.len()).map(|c| self.scores[c * plane + px]).sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(PerceptionError::InvalidScoreMap(format!(
                    "pixel {px} scores sum to {sum}"
                )));
            }
        }
        Ok(())
    }

    pub fn score(&self, class: usize, row: usize, col: usize) -> f32 {
        self.scores[class * self.width * self.height + row * self.width + col]
    }
}

/// Hard per-pixel class assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<String>,
    pub class_ids: Vec<u8>,
}

impl LabelMask {
    pub fn class_at(&self, row: usize, col: usize) -> u8 {
        self.class_ids[row * self.width + col]
    }

    pub fn class_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// Connected-component summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: String,
    pub pixel_count: usize,
    /// (row, col), real-valued.
    pub centroid: (f64, f64),
    /// (min_row, min_col, max_row, max_col), inclusive.
    pub bounding_box: (usize, usize, usize, usize),
}

/// Per-pixel argmax with ties broken toward the lowest class index, so the
/// background wins contested pixels.
pub fn argmax_mask(map: &ScoreMap) -> LabelMask {
    let plane = map.width * map.height;
    let classes = map.labels.len();
    let mut class_ids = vec![0u8; plane];
    for px in 0..plane {
        let mut best = 0usize;
        let mut best_score = map.scores[px];
        for c in 1..classes {
            let s = map.scores[c * plane + px];
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        class_ids[px] = best as u8;
    }
    LabelMask { width: map.width, height: map.height, labels: map.labels.clone(), class_ids }
}

/// One box-average pass with edge-replicating padding, stride 1. Separable:
/// horizontal then vertical sliding windows.
fn box_average(plane: &mut [f32], scratch: &mut [f32], width: usize, height: usize, kernel: usize) {
    let half = (kernel / 2) as isize;
    let norm = 1.0f64 / kernel as f64;
    // Horizontal pass into scratch.
    for r in 0..height {
        let row = &plane[r * width..(r + 1) * width];
        let mut sum = 0.0f64;
        for j in -half..=half {
            sum += row[j.clamp(0, width as isize - 1) as usize] as f64;
        }
        for c in 0..width {
            scratch[r * width + c] = (sum * norm) as f32;
            let out = (c as isize - half).clamp(0, width as isize - 1) as usize;
            let inn = (c as isize + half + 1).clamp(0, width as isize - 1) as usize;
            sum += row[inn] as f64 - row[out] as f64;
        }
    }
    // Vertical pass back into plane.
    for c in 0..width {
        let mut sum = 0.0f64;
        for i in -half..=half {
            sum += scratch[i.clamp(0, height as isize - 1) as usize * width + c] as f64;
        }
        for r in 0..height {
            plane[r * width + c] = (sum * norm) as f32;
            let out = (r as isize - half).clamp(0, height as isize - 1) as usize;
            let inn = (r as isize + half + 1).clamp(0, height as isize - 1) as usize;
            sum += scratch[inn * width + c] as f64 - scratch[out * width + c] as f64;
        }
    }
}

fn validate_schedule(kernels: &[usize]) -> Result<(), PerceptionError> {
    for (i, &k) in kernels.iter().enumerate() {
        if k < 3 || k % 2 == 0 || (i > 0 && k >= kernels[i - 1]) {
            return Err(PerceptionError::BadKernelSchedule(kernels.to_vec()));
        }
    }
    Ok(())
}

/// Multi-scale denoising: every class channel is average-pooled with each
/// kernel in order (largest first, stride 1, edge-replicating padding), then
/// the pooled scores are hard-assigned. Pixels whose winning pooled score
/// falls below `confidence_floor` become background.
pub fn denoise(
    map: &ScoreMap,
    kernels: &[usize],
    confidence_floor: f32,
) -> Result<LabelMask, PerceptionError> {
    validate_schedule(kernels)?;
    if !(0.0..1.0).contains(&confidence_floor) {
        return Err(PerceptionError::InvalidScoreMap(format!(
            "confidence floor {confidence_floor} outside [0,1)"
        )));
    }
    let plane = map.width * map.height;
    let classes = map.labels.len();
    let mut pooled = map.scores.clone();
    let mut scratch = vec![0.0f32; plane];
    for &k in kernels {
        for c in 0..classes {
            box_average(&mut pooled[c * plane..(c + 1) * plane], &mut scratch, map.width, map.height, k);
        }
    }
    let mut class_ids = vec![0u8; plane];
    for px in 0..plane {
        let mut best = 0usize;
        let mut best_score = pooled[px];
        for c in 1..classes {
            let s = pooled[c * plane + px];
            if s > best_score {
                best_score = s;
                best = c;
            }
        }
        class_ids[px] = if best_score < confidence_floor { 0 } else { best as u8 };
    }
    Ok(LabelMask { width: map.width, height: map.height, labels: map.labels.clone(), class_ids })
}

/// Dice overlap for `label`: 2|A∩B| / (|A|+|B|); 1.0 when both sets are empty.
pub fn dice(a: &LabelMask, b: &LabelMask, label: &str) -> Result<f64, PerceptionError> {
    if a.width != b.width || a.height != b.height || a.labels != b.labels {
        return Err(PerceptionError::DimensionMismatch);
    }
    let class = match a.class_of(label) {
        Some(c) => c as u8,
        None => return Ok(1.0), // label absent from both vocabularies: empty vs empty
    };
    let mut in_a = 0usize;
    let mut in_b = 0usize;
    let mut both = 0usize;
    for (pa, pb) in a.class_ids.iter().zip(&b.class_ids) {
        let fa = *pa == class;
        let fb = *pb == class;
        in_a += fa as usize;
        in_b += fb as usize;
        both += (fa && fb) as usize;
    }
    if in_a + in_b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (in_a + in_b) as f64)
}

/// Dice statistics over ten equal-width bins of true-segment coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageBinReport {
    /// Bin i covers coverage fractions [i/10, (i+1)/10); the last bin is
    /// closed at 1.0.
    pub bins: [CoverageBin; 10],
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoverageBin {
    pub count: usize,
    pub dice_mean: f64,
    pub dice_variance: f64,
}

pub fn coverage_bin_index(coverage: f64) -> usize {
    ((coverage * 10.0).floor() as usize).min(9)
}

/// Bin each (truth, prediction) pair by the truth mask's coverage of `label`
/// and report per-bin dice mean and population variance.
pub fn coverage_report(
    pairs: &[(LabelMask, LabelMask)],
    label: &str,
) -> Result<CoverageBinReport, PerceptionError> {
    if pairs.is_empty() {
        return Err(PerceptionError::EmptyCorpus);
    }
    let mut values: [Vec<f64>; 10] = Default::default();
    for (truth, pred) in pairs {
        let d = dice(truth, pred, label)?;
        let total = truth.width * truth.height;
        let covered = truth
            .class_of(label)
            .map(|c| truth.class_ids.iter().filter(|&&p| p == c as u8).count())
            .unwrap_or(0);
        let coverage = covered as f64 / total as f64;
        values[coverage_bin_index(coverage)].push(d);
    }
    let mut bins = [CoverageBin::default(); 10];
    for (bin, vals) in bins.iter_mut().zip(&values) {
        bin.count = vals.len();
        if !vals.is_empty() {
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            bin.dice_mean = mean;
            bin.dice_variance = var;
        }
    }
    Ok(CoverageBinReport { bins })
}

/// 4-connected components of `class` within the row band [row_lo, row_hi),
/// in deterministic row-major discovery order.
fn components_in_band(
    mask: &LabelMask,
    class: u8,
    row_lo: usize,
    row_hi: usize,
) -> Vec<Vec<(usize, usize)>> {
    let w = mask.width;
    let mut visited = vec![false; w * (row_hi - row_lo)];
    let idx = |r: usize, c: usize| (r - row_lo) * w + c;
    let mut components = Vec::new();
    let mut stack = Vec::new();
    for r in row_lo..row_hi {
        for c in 0..w {
            if visited[idx(r, c)] || mask.class_at(r, c) != class {
                continue;
            }
            let mut comp = Vec::new();
            visited[idx(r, c)] = true;
            stack.push((r, c));
            while let Some((pr, pc)) = stack.pop() {
                comp.push((pr, pc));
                let mut push = |nr: usize, nc: usize, visited: &mut Vec<bool>| {
                    if !visited[idx(nr, nc)] && mask.class_at(nr, nc) == class {
                        visited[idx(nr, nc)] = true;
                        stack.push((nr, nc));
                    }
                };
                if pr > row_lo {
                    push(pr - 1, pc, &mut visited);
                }
                if pr + 1 < row_hi {
                    push(pr + 1, pc, &mut visited);
                }
                if pc > 0 {
                    push(pr, pc - 1, &mut visited);
                }
                if pc + 1 < w {
                    push(pr, pc + 1, &mut visited);
                }
            }
            components.push(comp);
        }
    }
    components
}

fn region_of(label: &str, comp: &[(usize, usize)]) -> Region {
    let mut sum_r = 0.0;
    let mut sum_c = 0.0;
    let (mut min_r, mut min_c, mut max_r, mut max_c) = (usize::MAX, usize::MAX, 0, 0);
    for &(r, c) in comp {
        sum_r += r as f64;
        sum_c += c as f64;
        min_r = min_r.min(r);
        min_c = min_c.min(c);
        max_r = max_r.max(r);
        max_c = max_c.max(c);
    }
    Region {
        label: label.to_string(),
        pixel_count: comp.len(),
        centroid: (sum_r / comp.len() as f64, sum_c / comp.len() as f64),
        bounding_box: (min_r, min_c, max_r, max_c),
    }
}

/// Largest 4-connected component of `label`, if it has at least `min_pixels`.
pub fn detect_landmark(
    mask: &LabelMask,
    label: &str,
    min_pixels: usize,
) -> Result<Option<Region>, PerceptionError> {
    let class = mask
        .class_of(label)
        .ok_or_else(|| PerceptionError::UnknownLabel(label.to_string()))? as u8;
    let comps = components_in_band(mask, class, 0, mask.height);
    let largest = comps.iter().max_by_key(|c| c.len());
    Ok(largest.filter(|c| c.len() >= min_pixels).map(|c| region_of(label, c)))
}

/// Pick the goal pixel for the active leg: the rounded centroid of the
/// largest preferred-terrain component inside the row band, snapped to the
/// nearest component pixel when the centroid itself falls off the terrain.
pub fn select_goal_pixel(
    mask: &LabelMask,
    preferred_terrain: &str,
    band: (usize, usize),
) -> Result<(usize, usize), PerceptionError> {
    let (row_lo, row_hi) = band;
    assert!(row_lo < row_hi && row_hi <= mask.height, "invalid band {band:?}");
    let class = match mask.class_of(preferred_terrain) {
        Some(c) => c as u8,
        None => return Err(PerceptionError::NoTraversableRegion(preferred_terrain.to_string())),
    };
    let comps = components_in_band(mask, class, row_lo, row_hi);
    let comp = comps
        .iter()
        .max_by_key(|c| c.len())
        .ok_or_else(|| PerceptionError::NoTraversableRegion(preferred_terrain.to_string()))?;
    let region = region_of(preferred_terrain, comp);
    let r = region.centroid.0.round() as usize;
    let c = region.centroid.1.round() as usize;
    if r >= row_lo && r < row_hi && mask.class_at(r, c) == class {
        return Ok((r, c));
    }
    let nearest = comp
        .iter()
        .min_by(|a, b| {
            let da = (a.0 as f64 - region.centroid.0).powi(2) + (a.1 as f64 - region.centroid.1).powi(2);
            let db = (b.0 as f64 - region.centroid.0).powi(2) + (b.1 as f64 - region.centroid.1).powi(2);
            da.partial_cmp(&db).unwrap().then(a.cmp(b))
        })
        .unwrap();
    Ok(*nearest)
}
