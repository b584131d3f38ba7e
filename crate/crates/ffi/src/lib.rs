//! C ABI for partgroup.
//!
//! Every entry point returns a `PgStatus`; on failure the message is kept per
//! thread and read back with `pg_last_error_message`. Results come back
//! through out-pointers as opaque handles or JSON strings in the same
//! schemas the command-line tool writes, so a host language only needs a
//! JSON parser. Handles and strings are released with their `_free`
//! functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use image::RgbImage;
use partgroup::evaluation::{EvalReport, IouKind};
use partgroup::features::FeatureSource;
use partgroup::grouping::GroupingConfig;
use partgroup::pipeline::schema::{ImageProposals, ResultsDoc};
use partgroup::pipeline::{evaluate_files, file_stem, group_image, image_proposals, propose_image, rank_image};
use partgroup::pipeline::{Algo, ProposeOptions};
use partgroup::proposals::SegParams;
use partgroup::ranking::{OverlapKind, RankConfig};
use partgroup::{Error, SCHEMA_VERSION};

/// Status codes. Zero is success; the rest mirror the library's error
/// classes, followed by failures specific to this layer.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    DimensionMismatch = 1,
    EmptyInput = 2,
    InvalidRle = 3,
    InvalidParameter = 4,
    ZeroNorm = 5,
    FeatureDim = 6,
    AsymmetricAffinity = 7,
    DegenerateBox = 8,
    PyramidHeader = 9,
    PyramidShape = 10,
    UnsortedPredictions = 11,
    UnknownImageIds = 12,
    MissingFile = 13,
    Io = 14,
    Json = 15,
    Image = 16,
    Schema = 17,
    Config = 18,
    NullArgument = 100,
    InvalidUtf8 = 101,
    BadBuffer = 102,
    Panic = 103,
}

fn status_of(e: &Error) -> PgStatus {
    match e {
        Error::DimensionMismatch { .. } => PgStatus::DimensionMismatch,
        Error::EmptyInput(_) => PgStatus::EmptyInput,
        Error::InvalidRle(_) => PgStatus::InvalidRle,
        Error::InvalidParameter { .. } => PgStatus::InvalidParameter,
        Error::ZeroNorm { .. } => PgStatus::ZeroNorm,
        Error::FeatureDim { .. } => PgStatus::FeatureDim,
        Error::Asymmetric { .. } => PgStatus::AsymmetricAffinity,
        Error::DegenerateBox(_) => PgStatus::DegenerateBox,
        Error::PyramidHeader(_) => PgStatus::PyramidHeader,
        Error::PyramidShape(_) => PgStatus::PyramidShape,
        Error::UnsortedPredictions { .. } => PgStatus::UnsortedPredictions,
        Error::UnknownImageIds(_) => PgStatus::UnknownImageIds,
        Error::MissingFile(_) => PgStatus::MissingFile,
        Error::Io { .. } => PgStatus::Io,
        Error::Json { .. } => PgStatus::Json,
        Error::Image { .. } => PgStatus::Image,
        Error::Schema { .. } => PgStatus::Schema,
        Error::Config(_) => PgStatus::Config,
    }
}

struct Failure(PgStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), format!("{}: {e}", e.class()))
    }
}

type FfiResult<T> = Result<T, Failure>;

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> FfiResult<()>) -> PgStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("panic inside partgroup".into());
            PgStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PgStatus::NullArgument, format!("null argument: {what}"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(PgStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> FfiResult<()> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

fn to_c_string(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn json_string<T: serde::Serialize>(value: &T) -> FfiResult<*mut c_char> {
    serde_json::to_string(value)
        .map(to_c_string)
        .map_err(|e| Failure(PgStatus::Json, format!("json: {e}")))
}

/// Interleaved `RGBRGB...` rows or three planes `RR..GG..BB..`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgLayout {
    Interleaved = 0,
    Planar = 1,
}

/// Borrowed 8-bit RGB image of exactly `height * width * 3` bytes.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgImage {
    pub data: *const u8,
    pub len: usize,
    pub height: u32,
    pub width: u32,
    pub layout: PgLayout,
}

unsafe fn read_image(img: *const PgImage) -> FfiResult<RgbImage> {
    let img = img.as_ref().ok_or_else(|| null("image"))?;
    let n = img.height as usize * img.width as usize * 3;
    if img.data.is_null() {
        return Err(null("image data"));
    }
    if img.len != n {
        return Err(Failure(
            PgStatus::BadBuffer,
            format!("buffer holds {} bytes, {}x{} RGB needs {n}", img.len, img.height, img.width),
        ));
    }
    let src = std::slice::from_raw_parts(img.data, n);
    let buf = match img.layout {
        PgLayout::Interleaved => src.to_vec(),
        PgLayout::Planar => {
            let plane = n / 3;
            let mut buf = vec![0u8; n];
            for (i, px) in buf.chunks_exact_mut(3).enumerate() {
                px[0] = src[i];
                px[1] = src[plane + i];
                px[2] = src[2 * plane + i];
            }
            buf
        }
    };
    RgbImage::from_raw(img.width, img.height, buf).ok_or_else(|| Failure(PgStatus::BadBuffer, "bad image buffer".into()))
}

/// Bottom-up algorithm for `pg_propose`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgAlgo {
    Selsearch = 0,
    Fzs = 1,
    Grid = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgProposeParams {
    pub algo: PgAlgo,
    pub k: f64,
    pub sigma: f64,
    pub min_size: usize,
    pub cell: u32,
    pub image_id: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgGroupParams {
    pub delta: f64,
    pub tau: f64,
    pub keep_originals: bool,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PgRankParams {
    pub top_k: usize,
    pub dedup_iou: f64,
}

/// One image's proposal records, as in a proposals or grouped file.
pub struct PgProposals {
    inner: ImageProposals,
}

pub struct PgReport {
    inner: EvalReport,
}

/// Library version; static storage, do not free.
#[no_mangle]
pub extern "C" fn pg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn pg_schema_version() -> u32 {
    SCHEMA_VERSION
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn pg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pg_propose_params_default() -> PgProposeParams {
    let d = ProposeOptions::default();
    PgProposeParams {
        algo: PgAlgo::Selsearch,
        k: d.seg.scale_k,
        sigma: d.seg.sigma,
        min_size: d.seg.min_size,
        cell: d.cell,
        image_id: 1,
    }
}

#[no_mangle]
pub extern "C" fn pg_group_params_default() -> PgGroupParams {
    let d = GroupingConfig::default();
    PgGroupParams {
        delta: d.delta,
        tau: d.tau,
        keep_originals: d.keep_originals,
    }
}

#[no_mangle]
pub extern "C" fn pg_rank_params_default() -> PgRankParams {
    let d = RankConfig::default();
    PgRankParams {
        top_k: d.top_k,
        dedup_iou: d.dedup_iou,
    }
}

/// Proposals for one image. `file_name` may be null; it is recorded in the
/// output and names the tensor file when grouping with `tensor:DIR`.
///
/// # Safety
/// Pointers must be null or valid for the described sizes.
#[no_mangle]
pub unsafe extern "C" fn pg_propose(
    image: *const PgImage,
    params: *const PgProposeParams,
    file_name: *const c_char,
    out: *mut *mut PgProposals,
) -> PgStatus {
    guard(|| {
        let img = read_image(image)?;
        let p = params.as_ref().copied().unwrap_or_else(|| pg_propose_params_default());
        let name = if file_name.is_null() {
            String::new()
        } else {
            str_arg(file_name, "file_name")?.to_owned()
        };
        let opts = ProposeOptions {
            algo: match p.algo {
                PgAlgo::Selsearch => Algo::Selsearch,
                PgAlgo::Fzs => Algo::Fzs,
                PgAlgo::Grid => Algo::Grid,
            },
            seg: SegParams {
                scale_k: p.k,
                sigma: p.sigma,
                min_size: p.min_size,
            },
            cell: p.cell,
            ..ProposeOptions::default()
        };
        let props = propose_image(&img, &opts)?;
        let inner = image_proposals(p.image_id, name, &img, &props);
        write_out(out, Box::into_raw(Box::new(PgProposals { inner })), "out")
    })
}

/// Parse one image entry of a proposals file.
///
/// # Safety
/// `json` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pg_proposals_from_json(json: *const c_char, out: *mut *mut PgProposals) -> PgStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let inner: ImageProposals =
            serde_json::from_str(text).map_err(|e| Failure(PgStatus::Json, format!("json: {e}")))?;
        write_out(out, Box::into_raw(Box::new(PgProposals { inner })), "out")
    })
}

/// Serialize to a string owned by the caller (`pg_string_free`).
///
/// # Safety
/// `handle` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pg_proposals_to_json(handle: *const PgProposals, out: *mut *mut c_char) -> PgStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        write_out(out, json_string(&h.inner)?, "out")
    })
}

/// # Safety
/// `handle` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pg_proposals_len(handle: *const PgProposals, out: *mut usize) -> PgStatus {
    guard(|| {
        let h = handle.as_ref().ok_or_else(|| null("handle"))?;
        write_out(out, h.inner.proposals.len(), "out")
    })
}

/// Group parts into objects. `features` is `handcrafted` (needs `image`) or
/// `tensor:PATH` (`image` may be null).
///
/// # Safety
/// Pointers must be null or valid; `parts` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pg_group(
    parts: *const PgProposals,
    image: *const PgImage,
    features: *const c_char,
    params: *const PgGroupParams,
    out: *mut *mut PgProposals,
) -> PgStatus {
    guard(|| {
        let parts = &parts.as_ref().ok_or_else(|| null("parts"))?.inner;
        let source = FeatureSource::parse(str_arg(features, "features")?)?;
        let p = params.as_ref().copied().unwrap_or_else(|| pg_group_params_default());
        let cfg = GroupingConfig {
            delta: p.delta,
            tau: p.tau,
            keep_originals: p.keep_originals,
            ..GroupingConfig::default()
        };
        cfg.validate()?;
        let pixels = if image.is_null() { None } else { Some(read_image(image)?) };
        let pyramid = source.pyramid(&file_stem(&parts.file_name), pixels.as_ref())?;
        let inner = group_image(parts, &pyramid, &cfg, false)?;
        write_out(out, Box::into_raw(Box::new(PgProposals { inner })), "out")
    })
}

/// Rank one image's proposals; writes a results document as JSON.
///
/// # Safety
/// Pointers must be null or valid; `proposals` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pg_rank(
    proposals: *const PgProposals,
    params: *const PgRankParams,
    out_json: *mut *mut c_char,
) -> PgStatus {
    guard(|| {
        let props = &proposals.as_ref().ok_or_else(|| null("proposals"))?.inner;
        let p = params.as_ref().copied().unwrap_or_else(|| pg_rank_params_default());
        let cfg = RankConfig {
            top_k: p.top_k,
            dedup_iou: p.dedup_iou,
            dedup_kind: OverlapKind::Mask,
        };
        cfg.validate()?;
        let doc = ResultsDoc {
            schema_version: SCHEMA_VERSION,
            results: rank_image(props, &cfg)?,
        };
        write_out(out_json, json_string(&doc)?, "out_json")
    })
}

/// Average recall of a results file against a COCO file. `kind` is `box`,
/// `mask` or `both`.
///
/// # Safety
/// Strings must be NUL-terminated; `ks` must hold `n_ks` values.
#[no_mangle]
pub unsafe extern "C" fn pg_evaluate(
    gt_path: *const c_char,
    results_path: *const c_char,
    ks: *const usize,
    n_ks: usize,
    kind: *const c_char,
    out: *mut *mut PgReport,
) -> PgStatus {
    guard(|| {
        let gt = str_arg(gt_path, "gt_path")?;
        let pred = str_arg(results_path, "results_path")?;
        if ks.is_null() {
            return Err(null("ks"));
        }
        let ks = std::slice::from_raw_parts(ks, n_ks);
        if ks.is_empty() || ks.contains(&0) {
            return Err(Failure(PgStatus::InvalidParameter, "ks: need at least one K, all >= 1".into()));
        }
        let kinds = IouKind::parse(str_arg(kind, "kind")?)?;
        let inner = evaluate_files(Path::new(gt), Path::new(pred), ks, &kinds)?;
        write_out(out, Box::into_raw(Box::new(PgReport { inner })), "out")
    })
}

/// AR@k for `kind` (`box` or `mask`) from a report.
///
/// # Safety
/// `report` must come from this library; `kind` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn pg_report_ar(report: *const PgReport, kind: *const c_char, k: usize, out: *mut f64) -> PgStatus {
    guard(|| {
        let r = &report.as_ref().ok_or_else(|| null("report"))?.inner;
        let table = match str_arg(kind, "kind")? {
            "box" => r.ar_box(),
            "mask" => r.ar_mask(),
            other => {
                return Err(Failure(PgStatus::InvalidParameter, format!("kind `{other}`: expected box or mask")));
            }
        };
        let ar = table
            .and_then(|t| t.get(&k))
            .ok_or_else(|| Failure(PgStatus::InvalidParameter, format!("report has no AR@{k} for this kind")))?;
        write_out(out, *ar, "out")
    })
}

/// The report in the same JSON layout `eval` writes.
///
/// # Safety
/// `report` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn pg_report_to_json(report: *const PgReport, out: *mut *mut c_char) -> PgStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        write_out(out, json_string(&r.inner)?, "out")
    })
}

/// # Safety
/// `handle` must be null or come from this library, and is freed once.
#[no_mangle]
pub unsafe extern "C" fn pg_proposals_free(handle: *mut PgProposals) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// # Safety
/// `report` must be null or come from this library, and is freed once.
#[no_mangle]
pub unsafe extern "C" fn pg_report_free(report: *mut PgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn pg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
