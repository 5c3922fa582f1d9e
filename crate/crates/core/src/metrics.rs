//! Quality metrics. Every function here expects intensity-domain inputs in
//! `[0, 1]`; [`evaluate`] is the bridge that converts signal-domain grids
//! (`[-1, 1]`) via `(v + 1) / 2` before measuring, with peak fixed at 1.
//!
//! Undefined results use sentinels rather than errors, because they are
//! legitimate outcomes: identical images yield infinite PSNR, a constant
//! region yields infinite ENL, and a constant image has no gradient mass for
//! the seam ratio (NaN). [`MetricsReport`] converts sentinels into absent
//! values plus flags.

use crate::regional::WindowPlan;
use crate::{Error, ImageGrid, Result};

/// Rectangular region of interest, `row/col` top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    fn check_within(&self, g: &ImageGrid, min_area: usize) -> Result<()> {
        if self.row + self.height > g.height() || self.col + self.width > g.width() {
            return Err(Error::InvalidMetricInput(format!(
                "roi {}x{} at ({}, {}) exceeds image {}x{}",
                self.height,
                self.width,
                self.row,
                self.col,
                g.height(),
                g.width()
            )));
        }
        if self.area() < min_area {
            return Err(Error::InvalidMetricInput(format!(
                "roi area {} below minimum {min_area}",
                self.area()
            )));
        }
        Ok(())
    }
}

/// Peak signal-to-noise ratio in dB: `10 log10(peak^2 / MSE)`. Returns
/// `f64::INFINITY` when the images are identical.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, peak: f64) -> Result<f64> {
    a.expect_same_shape(b, "psnr")?;
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidMetricInput(format!(
            "peak must be positive, got {peak}"
        )));
    }
    let mut sum = 0.0;
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let d = x - y;
        sum += d * d;
    }
    let mse = sum / a.len() as f64;
    if mse == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (peak * peak / mse).log10())
    }
}

/// Constants of the structural-similarity measure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

/// Mean structural similarity with a Gaussian-weighted sliding window,
/// computed over valid window positions only and averaged across channels.
/// Images smaller than the window fall back to a single comparison using
/// global statistics. The mean can dip below zero for strongly
/// anti-correlated inputs; `ssim(a, a)` is exactly 1.
pub fn ssim(a: &ImageGrid, b: &ImageGrid, params: &SsimParams) -> Result<f64> {
    a.expect_same_shape(b, "ssim")?;
    if params.window == 0 || params.window % 2 == 0 {
        return Err(Error::InvalidMetricInput(format!(
            "ssim window must be odd and positive, got {}",
            params.window
        )));
    }
    if !(params.sigma.is_finite() && params.sigma > 0.0) || !(params.peak > 0.0) {
        return Err(Error::InvalidMetricInput(
            "ssim sigma and peak must be positive".into(),
        ));
    }
    let c1 = (params.k1 * params.peak).powi(2);
    let c2 = (params.k2 * params.peak).powi(2);
    let (h, w, channels) = a.shape();
    let mut total = 0.0;
    for ch in 0..channels {
        let pa = a.channel(ch)?;
        let pb = b.channel(ch)?;
        total += if h < params.window || w < params.window {
            ssim_global(pa.values(), pb.values(), c1, c2)
        } else {
            ssim_windowed(pa.values(), pb.values(), h, w, params, c1, c2)
        };
    }
    Ok(total / channels as f64)
}

fn ssim_global(a: &[f64], b: &[f64], c1: f64, c2: f64) -> f64 {
    let n = a.len() as f64;
    let mu_a = a.iter().sum::<f64>() / n;
    let mu_b = b.iter().sum::<f64>() / n;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut cov = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        var_a += (x - mu_a) * (x - mu_a);
        var_b += (y - mu_b) * (y - mu_b);
        cov += (x - mu_a) * (y - mu_b);
    }
    var_a /= n;
    var_b /= n;
    cov /= n;
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let half = (window / 2) as f64;
    let mut k: Vec<f64> = (0..window)
        .map(|i| (-((i as f64 - half).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian filtering of the five moment fields, then the SSIM
/// formula per valid position.
fn ssim_windowed(
    a: &[f64],
    b: &[f64],
    h: usize,
    w: usize,
    params: &SsimParams,
    c1: f64,
    c2: f64,
) -> f64 {
    let k = gaussian_kernel(params.window, params.sigma);
    let filter = |field: &[f64]| -> Vec<f64> {
        let vw = w - params.window + 1;
        let mut rows = vec![0.0; h * vw];
        for r in 0..h {
            for c in 0..vw {
                let mut acc = 0.0;
                for (j, &kv) in k.iter().enumerate() {
                    acc += kv * field[r * w + c + j];
                }
                rows[r * vw + c] = acc;
            }
        }
        let vh = h - params.window + 1;
        let mut out = vec![0.0; vh * vw];
        for r in 0..vh {
            for c in 0..vw {
                let mut acc = 0.0;
                for (j, &kv) in k.iter().enumerate() {
                    acc += kv * rows[(r + j) * vw + c];
                }
                out[r * vw + c] = acc;
            }
        }
        out
    };

    let aa: Vec<f64> = a.iter().map(|&x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|&x| x * x).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x * y).collect();
    let mu_a = filter(a);
    let mu_b = filter(b);
    let e_aa = filter(&aa);
    let e_bb = filter(&bb);
    let e_ab = filter(&ab);

    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
            / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    total / mu_a.len() as f64
}

/// Equivalent number of looks over a region: `mean^2 / variance` with the
/// unbiased (1/(N-1)) variance estimator. A perfectly smooth region gives
/// `f64::INFINITY`.
pub fn enl(img: &ImageGrid, roi: Rect) -> Result<f64> {
    roi.check_within(img, 4)?;
    let first = img.get(roi.row, roi.col, 0);
    let mut sum = 0.0;
    let mut count = 0.0;
    let mut all_equal = true;
    let mut visit = |v: f64| {
        sum += v;
        count += 1.0;
        all_equal &= v == first;
    };
    for r in roi.row..roi.row + roi.height {
        for c in roi.col..roi.col + roi.width {
            for ch in 0..img.channels() {
                visit(img.get(r, c, ch));
            }
        }
    }
    if all_equal {
        return Ok(f64::INFINITY);
    }
    let mean = sum / count;
    let mut var = 0.0;
    for r in roi.row..roi.row + roi.height {
        for c in roi.col..roi.col + roi.width {
            for ch in 0..img.channels() {
                let d = img.get(r, c, ch) - mean;
                var += d * d;
            }
        }
    }
    var /= count - 1.0;
    if var == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(mean * mean / var)
    }
}

fn gradient_mass(img: &ImageGrid) -> f64 {
    let (h, w, c) = img.shape();
    let n = img.len() as f64;
    let mean = img.values().iter().sum::<f64>() / n;
    let mut mass = 0.0;
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let v = img.get(r, col, ch) - mean;
                if col + 1 < w {
                    mass += (img.get(r, col + 1, ch) - mean - v).abs();
                }
                if r + 1 < h {
                    mass += (img.get(r + 1, col, ch) - mean - v).abs();
                }
            }
        }
    }
    mass
}

/// Edge preservation index: the ratio of total absolute forward-difference
/// gradient between the denoised image and the reference, after mean
/// removal. 1 means edges kept as-is, below 1 means smoothing. A constant
/// reference has no gradient mass and yields NaN.
pub fn epi(denoised: &ImageGrid, reference: &ImageGrid) -> Result<f64> {
    denoised.expect_same_shape(reference, "epi")?;
    let num = gradient_mass(denoised);
    let den = gradient_mass(reference);
    if den == 0.0 {
        Ok(f64::NAN)
    } else {
        Ok(num / den)
    }
}

/// Seam score for a restoration produced with `plan`: the mean absolute
/// forward difference across the boundary lines of the non-overlapping
/// `window`-grid, divided by the mean absolute forward difference everywhere
/// else. An artifact-free image scores near 1; stitched seams push it up.
/// A constant image yields NaN (0/0).
pub fn seam_ratio(img: &ImageGrid, plan: &WindowPlan) -> Result<f64> {
    if img.height() != plan.image_height() || img.width() != plan.image_width() {
        return Err(Error::ShapeMismatch {
            expected: (plan.image_height(), plan.image_width(), img.channels()),
            got: img.shape(),
            context: "seam_ratio",
        });
    }
    let m = plan.window();
    let (h, w, c) = img.shape();
    if h <= m && w <= m {
        return Err(Error::InvalidMetricInput(format!(
            "no interior {m}-grid boundary lines in a {h}x{w} image"
        )));
    }
    let mut seam_sum = 0.0;
    let mut seam_n = 0u64;
    let mut rest_sum = 0.0;
    let mut rest_n = 0u64;
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let v = img.get(r, col, ch);
                if col + 1 < w {
                    let d = (img.get(r, col + 1, ch) - v).abs();
                    if (col + 1) % m == 0 {
                        seam_sum += d;
                        seam_n += 1;
                    } else {
                        rest_sum += d;
                        rest_n += 1;
                    }
                }
                if r + 1 < h {
                    let d = (img.get(r + 1, col, ch) - v).abs();
                    if (r + 1) % m == 0 {
                        seam_sum += d;
                        seam_n += 1;
                    } else {
                        rest_sum += d;
                        rest_n += 1;
                    }
                }
            }
        }
    }
    debug_assert!(seam_n > 0 && rest_n > 0);
    let seam_mean = seam_sum / seam_n as f64;
    let rest_mean = rest_sum / rest_n as f64;
    if rest_mean == 0.0 {
        Ok(f64::NAN)
    } else {
        Ok(seam_mean / rest_mean)
    }
}

/// All metrics for one restoration run. Absent fields were either not
/// requested (no reference / roi / plan) or undefined, in which case the
/// matching flag is set.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct MetricsReport {
    pub psnr_db: Option<f64>,
    pub psnr_infinite: bool,
    /// Structural similarity scaled to [0, 100] (negative raw values clamp
    /// to 0).
    pub ssim_percent: Option<f64>,
    pub enl: Option<f64>,
    pub enl_infinite: bool,
    pub epi: Option<f64>,
    pub epi_undefined: bool,
    pub seam_ratio: Option<f64>,
    pub seam_undefined: bool,
    pub roi: Option<Rect>,
}

impl MetricsReport {
    pub fn has_any_value(&self) -> bool {
        self.psnr_db.is_some()
            || self.psnr_infinite
            || self.ssim_percent.is_some()
            || self.enl.is_some()
            || self.enl_infinite
            || self.epi.is_some()
            || self.epi_undefined
            || self.seam_ratio.is_some()
            || self.seam_undefined
    }

    /// Multi-line human-readable report.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mut line = |name: &str, v: Option<f64>, flag: bool, flag_text: &str| {
            match (v, flag) {
                (Some(x), _) => out.push_str(&format!("{name:<12} {x:.4}\n")),
                (None, true) => out.push_str(&format!("{name:<12} -        [{flag_text}]\n")),
                (None, false) => {}
            }
        };
        line("psnr_db", self.psnr_db, self.psnr_infinite, "infinite: images identical");
        line("ssim", self.ssim_percent, false, "");
        line("enl", self.enl, self.enl_infinite, "infinite: zero variance");
        line("epi", self.epi, self.epi_undefined, "undefined: flat reference");
        line(
            "seam_ratio",
            self.seam_ratio,
            self.seam_undefined,
            "undefined: constant image",
        );
        if let Some(roi) = &self.roi {
            out.push_str(&format!(
                "roi          {}x{}+{}+{}\n",
                roi.height, roi.width, roi.row, roi.col
            ));
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "psnr_db,ssim_percent,enl,epi,seam_ratio"
    }

    pub fn csv_row(&self) -> String {
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        format!(
            "{},{},{},{},{}",
            cell(self.psnr_db),
            cell(self.ssim_percent),
            cell(self.enl),
            cell(self.epi),
            cell(self.seam_ratio)
        )
    }
}

/// Computes every metric the inputs allow, converting signal-domain grids to
/// intensity first. `reference` enables PSNR/SSIM/EPI, `roi` enables ENL on
/// the restored image, `seam_plan` enables the seam score. Errors if nothing
/// was requested.
pub fn evaluate(
    restored: &ImageGrid,
    reference: Option<&ImageGrid>,
    roi: Option<Rect>,
    seam_plan: Option<&WindowPlan>,
) -> Result<MetricsReport> {
    if reference.is_none() && roi.is_none() && seam_plan.is_none() {
        return Err(Error::InvalidMetricInput(
            "nothing to evaluate: provide a reference, an roi, or a window plan".into(),
        ));
    }
    let restored_i = restored.to_intensity();
    let mut report = MetricsReport::default();
    if let Some(reference) = reference {
        let reference_i = reference.to_intensity();
        let p = psnr(&restored_i, &reference_i, 1.0)?;
        if p.is_infinite() {
            report.psnr_infinite = true;
        } else {
            report.psnr_db = Some(p);
        }
        let s = ssim(&restored_i, &reference_i, &SsimParams::default())?;
        report.ssim_percent = Some((s * 100.0).clamp(0.0, 100.0));
        let e = epi(&restored_i, &reference_i)?;
        if e.is_nan() {
            report.epi_undefined = true;
        } else {
            report.epi = Some(e);
        }
    }
    if let Some(roi) = roi {
        let v = enl(&restored_i, roi)?;
        if v.is_infinite() {
            report.enl_infinite = true;
        } else {
            report.enl = Some(v);
        }
        report.roi = Some(roi);
    }
    if let Some(plan) = seam_plan {
        let v = seam_ratio(&restored_i, plan)?;
        if v.is_nan() {
            report.seam_undefined = true;
        } else {
            report.seam_ratio = Some(v);
        }
    }
    debug_assert!(report.has_any_value());
    Ok(report)
}
