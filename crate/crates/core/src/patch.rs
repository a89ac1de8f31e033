//! Nonlocal patch grouping and overlap-averaged aggregation.
//!
//! A patch is addressed by its top-left `(row, col)`. Inside a group matrix
//! each column holds one vectorized `w × w` patch in column-major pixel order,
//! so pixel `(dr, dc)` of a patch sits at row `dc * w + dr`.

use crate::error::{invalid, Error, Result};
use crate::image::PureQImage;
use crate::qmatrix::QMatrix;

pub type Coord = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchParams {
    /// Patch side `w`.
    pub patch_size: usize,
    /// Patches per group `M`.
    pub group_size: usize,
    /// Search window side `W`.
    pub window: usize,
    /// Key-patch spacing.
    pub stride: usize,
}

impl PatchParams {
    /// Uses the default stride `max(1, ⌊w/2⌋)`.
    pub fn new(patch_size: usize, group_size: usize, window: usize) -> Self {
        Self {
            patch_size,
            group_size,
            window,
            stride: default_stride(patch_size),
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    /// Checks `1 ≤ w ≤ W ≤ min(m, n)`, `M ≥ 1` and `1 ≤ stride ≤ w`.
    ///
    /// A stride wider than the patch would leave pixels that no key patch covers.
    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let Self {
            patch_size: w,
            group_size,
            window,
            stride,
        } = *self;
        if w == 0 || group_size == 0 || stride == 0 {
            return Err(invalid(format!(
                "patch size, group size and stride must be at least 1 (got w = {w}, M = {group_size}, stride = {stride})"
            )));
        }
        if stride > w {
            return Err(invalid(format!("stride {stride} exceeds patch size {w}")));
        }
        if w > m || w > n {
            return Err(Error::DimensionMismatch {
                op: "patch size exceeds image",
                left: (w, w),
                right: (m, n),
            });
        }
        if window < w || window > m.min(n) {
            return Err(invalid(format!(
                "search window {window} must satisfy {w} <= W <= {}",
                m.min(n)
            )));
        }
        Ok(())
    }

    /// Number of rows of a group matrix, `w²`.
    pub fn patch_len(&self) -> usize {
        self.patch_size * self.patch_size
    }
}

pub fn default_stride(patch_size: usize) -> usize {
    (patch_size / 2).max(1)
}

/// Grid positions `0, s, 2s, …` below `len − w + 1`, plus `len − w` if missing.
fn axis_keys(len: usize, w: usize, stride: usize) -> Vec<usize> {
    let last = len - w;
    let mut keys: Vec<usize> = (0..=last).step_by(stride).collect();
    if keys.last() != Some(&last) {
        keys.push(last);
    }
    keys
}

/// Key-patch top-left corners in row-major order.
pub fn select_keys(m: usize, n: usize, params: &PatchParams) -> Result<Vec<Coord>> {
    let w = params.patch_size;
    if w == 0 || params.stride == 0 {
        return Err(invalid("patch size and stride must be at least 1"));
    }
    if w > m || w > n {
        return Err(Error::DimensionMismatch {
            op: "select_keys",
            left: (w, w),
            right: (m, n),
        });
    }
    let rows = axis_keys(m, w, params.stride);
    let cols = axis_keys(n, w, params.stride);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect())
}

/// Candidate top-left positions along one axis: the `W` offsets centered on
/// `key`, clipped to `[0, len − w]`.
fn window_range(key: usize, len: usize, w: usize, window: usize) -> std::ops::RangeInclusive<usize> {
    let half = window / 2;
    let lo = key.saturating_sub(half);
    let hi = (key + window - half - 1).min(len - w);
    lo..=hi
}

/// Squared quaternion Frobenius distance between two `w × w` patches.
pub fn patch_distance(img: &QMatrix, a: Coord, b: Coord, w: usize) -> f64 {
    let n = img.cols();
    let mut d = 0.0;
    for plane in img.planes() {
        for dr in 0..w {
            let ra = (a.0 + dr) * n + a.1;
            let rb = (b.0 + dr) * n + b.1;
            for (x, y) in plane[ra..ra + w].iter().zip(&plane[rb..rb + w]) {
                let t = x - y;
                d += t * t;
            }
        }
    }
    d
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchGroup {
    pub key: Coord,
    /// Key first, then by ascending distance, ties in row-major order.
    pub members: Vec<Coord>,
    /// `w² × M` stacked patches.
    pub data: QMatrix,
}

/// The `M` patches in the key's search window closest to the key patch.
pub fn match_group(img: &PureQImage, key: Coord, params: &PatchParams) -> Result<PatchGroup> {
    match_group_q(img.as_qmatrix(), key, params)
}

/// [`match_group`] on an arbitrary quaternion matrix.
pub fn match_group_q(img: &QMatrix, key: Coord, params: &PatchParams) -> Result<PatchGroup> {
    let members = match_members(img, key, params)?;
    let data = extract_patches(img, &members, params.patch_size);
    Ok(PatchGroup { key, members, data })
}

/// Member coordinates only, without building the group matrix.
pub fn match_members(img: &QMatrix, key: Coord, params: &PatchParams) -> Result<Vec<Coord>> {
    let (m, n) = img.shape();
    let w = params.patch_size;
    if w == 0 || w > m || w > n || key.0 > m - w || key.1 > n - w {
        return Err(Error::DimensionMismatch {
            op: "match_group key patch",
            left: (key.0 + w, key.1 + w),
            right: (m, n),
        });
    }
    if params.group_size == 0 || params.window == 0 {
        return Err(invalid("group size and window must be at least 1"));
    }
    let mut candidates: Vec<(f64, Coord)> = Vec::new();
    for r in window_range(key.0, m, w, params.window) {
        for c in window_range(key.1, n, w, params.window) {
            if (r, c) != key {
                candidates.push((patch_distance(img, key, (r, c), w), (r, c)));
            }
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut ranked = Vec::with_capacity(candidates.len() + 1);
    ranked.push(key);
    ranked.extend(candidates.into_iter().map(|(_, rc)| rc));
    let members = (0..params.group_size).map(|i| ranked[i % ranked.len()]).collect();
    Ok(members)
}

/// Stacks the listed patches as columns of a `w² × len` matrix.
pub fn extract_patches(img: &QMatrix, members: &[Coord], w: usize) -> QMatrix {
    let n = img.cols();
    let cols = members.len();
    let mut out = QMatrix::zeros(w * w, cols);
    for p in 0..4 {
        let src = img.plane(p);
        let dst = out.plane_mut(p);
        for (j, &(r0, c0)) in members.iter().enumerate() {
            for dc in 0..w {
                for dr in 0..w {
                    dst[(dc * w + dr) * cols + j] = src[(r0 + dr) * n + c0 + dc];
                }
            }
        }
    }
    out
}

/// Running per-pixel sums and counts for overlapping patch estimates.
#[derive(Debug, Clone)]
pub struct Aggregator {
    rows: usize,
    cols: usize,
    patch_size: usize,
    sums: [Vec<f64>; 4],
    counts: Vec<u32>,
}

impl Aggregator {
    pub fn new(rows: usize, cols: usize, patch_size: usize) -> Self {
        let len = rows * cols;
        Self {
            rows,
            cols,
            patch_size,
            sums: std::array::from_fn(|_| vec![0.0; len]),
            counts: vec![0; len],
        }
    }

    /// Adds every column of `data` at the matching member position.
    pub fn add(&mut self, members: &[Coord], data: &QMatrix) -> Result<()> {
        let w = self.patch_size;
        if data.shape() != (w * w, members.len()) {
            return Err(Error::DimensionMismatch {
                op: "Aggregator::add",
                left: data.shape(),
                right: (w * w, members.len()),
            });
        }
        if let Some(&(r, c)) = members
            .iter()
            .find(|&&(r, c)| r + w > self.rows || c + w > self.cols)
        {
            return Err(Error::DimensionMismatch {
                op: "Aggregator::add patch",
                left: (r + w, c + w),
                right: (self.rows, self.cols),
            });
        }
        let k = members.len();
        let n = self.cols;
        for p in 0..4 {
            let src = data.plane(p);
            let dst = &mut self.sums[p];
            for (j, &(r0, c0)) in members.iter().enumerate() {
                for dc in 0..w {
                    for dr in 0..w {
                        dst[(r0 + dr) * n + c0 + dc] += src[(dc * w + dr) * k + j];
                    }
                }
            }
        }
        for &(r0, c0) in members {
            for dr in 0..w {
                let row = (r0 + dr) * n + c0;
                self.counts[row..row + w].iter_mut().for_each(|c| *c += 1);
            }
        }
        Ok(())
    }

    /// Divides sums by counts; any uncovered pixel is an error.
    pub fn finish(self) -> Result<QMatrix> {
        if let Some(idx) = self.counts.iter().position(|&c| c == 0) {
            return Err(Error::UncoveredPixel {
                row: idx / self.cols,
                col: idx % self.cols,
            });
        }
        let Self {
            rows,
            cols,
            mut sums,
            counts,
            ..
        } = self;
        for plane in &mut sums {
            for (v, &c) in plane.iter_mut().zip(&counts) {
                *v /= c as f64;
            }
        }
        QMatrix::from_planes(rows, cols, sums)
    }
}

/// Averages group estimates back into an `m × n` image, in slice order.
pub fn aggregate(groups: &[PatchGroup], patch_size: usize, m: usize, n: usize) -> Result<PureQImage> {
    let mut acc = Aggregator::new(m, n, patch_size);
    for g in groups {
        acc.add(&g.members, &g.data)?;
    }
    acc.finish().map(PureQImage::from_qmatrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_image(m: usize, n: usize, rng: &mut impl Rng) -> PureQImage {
        PureQImage::from_fn(m, n, |_, _| {
            [
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
                rng.random_range(0.0..255.0),
            ]
        })
    }

    #[test]
    fn key_grid_examples() {
        let p = PatchParams::new(4, 1, 4).with_stride(4);
        let keys = select_keys(8, 8, &p).unwrap();
        assert_eq!(keys, vec![(0, 0), (0, 4), (4, 0), (4, 4)]);

        let keys = select_keys(9, 9, &p).unwrap();
        let axis = [0, 4, 5];
        let expected: Vec<Coord> = axis.iter().flat_map(|&r| axis.iter().map(move |&c| (r, c))).collect();
        assert_eq!(keys, expected);

        for s in [1, 3, 7] {
            assert_eq!(select_keys(4, 4, &p.with_stride(s)).unwrap(), vec![(0, 0)]);
        }
        assert!(select_keys(3, 8, &p).is_err());
    }

    #[test]
    fn default_stride_is_half_patch() {
        assert_eq!(PatchParams::new(1, 1, 1).stride, 1);
        assert_eq!(PatchParams::new(4, 1, 4).stride, 2);
        assert_eq!(PatchParams::new(5, 1, 5).stride, 2);
    }

    #[test]
    fn params_validation() {
        assert!(PatchParams::new(4, 10, 8).validate(16, 16).is_ok());
        assert!(PatchParams::new(0, 10, 8).validate(16, 16).is_err());
        assert!(PatchParams::new(4, 0, 8).validate(16, 16).is_err());
        assert!(PatchParams::new(4, 10, 3).validate(16, 16).is_err());
        assert!(PatchParams::new(4, 10, 20).validate(16, 16).is_err());
        assert!(PatchParams::new(4, 10, 8).with_stride(0).validate(16, 16).is_err());
        assert!(PatchParams::new(4, 10, 8).with_stride(5).validate(16, 16).is_err());
    }

    #[test]
    fn constant_image_takes_row_major_window_order() {
        let img = PureQImage::constant(12, 12, [7.0, 7.0, 7.0]);
        let p = PatchParams::new(3, 6, 6);
        let g = match_group(&img, (0, 0), &p).unwrap();
        // window rows/cols 0..=2 around (0, 0)
        assert_eq!(g.members, vec![(0, 0), (0, 1), (0, 2), (1, 0), (1, 1), (1, 2)]);
    }

    #[test]
    fn exact_duplicate_ranks_right_after_key() {
        let mut rng = StdRng::seed_from_u64(3);
        let mut img = random_image(16, 16, &mut rng);
        for dr in 0..4 {
            for dc in 0..4 {
                let px = img.pixel(5 + dr, 5 + dc);
                for c in 0..3 {
                    img.channel_mut(c)[(8 + dr) * 16 + 7 + dc] = px[c];
                }
            }
        }
        let g = match_group(&img, (5, 5), &PatchParams::new(4, 4, 8)).unwrap();
        assert_eq!(&g.members[..2], &[(5, 5), (8, 7)]);
    }

    /// Scores every window position and sorts the full list.
    fn brute_force_members(img: &PureQImage, key: Coord, p: &PatchParams) -> Vec<Coord> {
        let (m, n) = img.shape();
        let w = p.patch_size;
        let half = p.window as isize / 2;
        let mut all = Vec::new();
        for dr in 0..p.window as isize {
            for dc in 0..p.window as isize {
                let r = key.0 as isize - half + dr;
                let c = key.1 as isize - half + dc;
                if r < 0 || c < 0 || r as usize + w > m || c as usize + w > n {
                    continue;
                }
                let mut d = 0.0;
                for i in 0..w {
                    for j in 0..w {
                        let a = img.as_qmatrix().get(key.0 + i, key.1 + j);
                        let b = img.as_qmatrix().get(r as usize + i, c as usize + j);
                        d += (a - b).norm_sqr();
                    }
                }
                all.push((d, (r as usize, c as usize)));
            }
        }
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        all.into_iter().take(p.group_size).map(|x| x.1).collect()
    }

    #[test]
    fn matches_exhaustive_search_oracle() {
        let mut rng = StdRng::seed_from_u64(11);
        let img = random_image(16, 16, &mut rng);
        let p = PatchParams::new(4, 5, 8);
        for key in select_keys(16, 16, &p).unwrap() {
            let g = match_group(&img, key, &p).unwrap();
            assert_eq!(g.members, brute_force_members(&img, key, &p), "key {key:?}");
        }
    }

    #[test]
    fn short_windows_pad_cyclically() {
        let mut rng = StdRng::seed_from_u64(5);
        let img = random_image(5, 5, &mut rng);
        let p = PatchParams::new(4, 7, 4);
        let g = match_group(&img, (0, 0), &p).unwrap();
        // window clips to top-left corners {0, 1}²
        let head = &g.members[..4];
        assert_eq!(head[0], (0, 0));
        assert_eq!(&g.members[4..], &head[..3]);
        assert_eq!(g.data.shape(), (16, 7));
    }

    #[test]
    fn group_columns_are_column_major_patches() {
        let img = PureQImage::from_fn(6, 6, |i, j| [i as f64, j as f64, (10 * i + j) as f64]);
        let g = match_group(&img, (1, 2), &PatchParams::new(3, 2, 3)).unwrap();
        let col: Vec<f64> = (0..9).map(|r| g.data.get(r, 0).a3).collect();
        assert_eq!(col, vec![12.0, 22.0, 32.0, 13.0, 23.0, 33.0, 14.0, 24.0, 34.0]);
    }

    #[test]
    fn distance_matches_quaternion_modulus() {
        let mut rng = StdRng::seed_from_u64(8);
        let q = crate::testutil::random_qmatrix(9, 9, &mut rng);
        let (a, b, w) = ((1, 2), (4, 3), 5);
        let mut expected = 0.0;
        for i in 0..w {
            for j in 0..w {
                expected += (q.get(a.0 + i, a.1 + j) - q.get(b.0 + i, b.1 + j)).modulus().powi(2);
            }
        }
        assert!((patch_distance(&q, a, b, w) - expected).abs() < 1e-12);
        let g = match_group_q(&q, a, &PatchParams::new(w, 3, 5)).unwrap();
        let key = extract_patches(&q, &[a], w);
        let other = extract_patches(&q, &[g.members[1]], w);
        let d = patch_distance(&q, a, g.members[1], w);
        assert!((key.distance(&other).unwrap().powi(2) - d).abs() < 1e-9);
    }

    #[test]
    fn whole_image_group_unfolds_exactly() {
        let mut rng = StdRng::seed_from_u64(2);
        let img = random_image(4, 4, &mut rng);
        let p = PatchParams::new(4, 1, 4);
        let g = match_group(&img, (0, 0), &p).unwrap();
        assert_eq!(aggregate(&[g], 4, 4, 4).unwrap(), img);
    }

    #[test]
    fn identical_overlapping_estimates_average_to_themselves() {
        let img = PureQImage::constant(5, 5, [1.0, 2.0, 3.0]);
        let p = PatchParams::new(3, 4, 5);
        let groups: Vec<_> = select_keys(5, 5, &p)
            .unwrap()
            .into_iter()
            .map(|k| match_group(&img, k, &p).unwrap())
            .collect();
        assert_eq!(aggregate(&groups, 3, 5, 5).unwrap(), img);
    }

    #[test]
    fn random_estimates_match_direct_loop() {
        let mut rng = StdRng::seed_from_u64(21);
        let (m, n, w) = (8, 8, 3);
        let mut groups = Vec::new();
        for r in 0..=m - w {
            for c in [0, 2, 4, 5] {
                let members: Vec<Coord> = (0..3).map(|_| (rng.random_range(0..=m - w), rng.random_range(0..=n - w))).chain([(r, c)]).collect();
                let data = crate::testutil::random_qmatrix(w * w, members.len(), &mut rng);
                groups.push(PatchGroup { key: (r, c), members, data });
            }
        }
        let out = aggregate(&groups, w, m, n).unwrap();

        let mut sum = vec![[0.0f64; 3]; m * n];
        let mut count = vec![0usize; m * n];
        for g in &groups {
            for (j, &(r0, c0)) in g.members.iter().enumerate() {
                for dr in 0..w {
                    for dc in 0..w {
                        let q = g.data.get(dc * w + dr, j);
                        let idx = (r0 + dr) * n + c0 + dc;
                        sum[idx][0] += q.a1;
                        sum[idx][1] += q.a2;
                        sum[idx][2] += q.a3;
                        count[idx] += 1;
                    }
                }
            }
        }
        for i in 0..m {
            for j in 0..n {
                let idx = i * n + j;
                let px = out.pixel(i, j);
                for c in 0..3 {
                    assert!((px[c] - sum[idx][c] / count[idx] as f64).abs() < 1e-12);
                }
            }
        }
        assert_eq!(out.as_qmatrix().max_abs_real(), 0.0);
    }

    #[test]
    fn uncovered_pixel_is_reported() {
        let data = QMatrix::zeros(4, 1);
        let g = PatchGroup { key: (0, 0), members: vec![(0, 0)], data };
        assert!(matches!(aggregate(&[g], 2, 3, 3), Err(Error::UncoveredPixel { row: 0, col: 2 })));
    }

    proptest! {
        #[test]
        fn extract_then_aggregate_is_identity(
            m in 4usize..14, n in 4usize..14, w in 1usize..5, gs in 1usize..6, stride in 1usize..5, seed in 0u64..1000
        ) {
            let stride = stride.min(w);
            let mut rng = StdRng::seed_from_u64(seed);
            let img = random_image(m, n, &mut rng);
            let window = (w + 2).min(m.min(n)).max(w);
            let p = PatchParams::new(w, gs, window).with_stride(stride);
            let groups: Vec<_> = select_keys(m, n, &p).unwrap().into_iter()
                .map(|k| match_group(&img, k, &p).unwrap()).collect();
            let out = aggregate(&groups, w, m, n).unwrap();
            for c in 0..3 {
                for (a, b) in out.channel(c).iter().zip(img.channel(c)) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn members_are_sorted_and_inside(seed in 0u64..1000, kr in 0usize..9, kc in 0usize..9) {
            let mut rng = StdRng::seed_from_u64(seed);
            let img = random_image(12, 12, &mut rng);
            let p = PatchParams::new(4, 9, 6);
            let g = match_group(&img, (kr, kc), &p).unwrap();
            prop_assert_eq!(g.members[0], (kr, kc));
            let q = img.as_qmatrix();
            let d: Vec<f64> = g.members.iter().map(|&c| patch_distance(q, (kr, kc), c, 4)).collect();
            for i in 1..d.len() - 1 {
                prop_assert!(d[i] < d[i + 1] || (d[i] == d[i + 1] && g.members[i] < g.members[i + 1]));
            }
            prop_assert!(g.members.iter().all(|&(r, c)| r + 4 <= 12 && c + 4 <= 12));
        }
    }
}
