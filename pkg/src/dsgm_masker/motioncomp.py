"""Global camera-motion estimation and compensation.

The chain is Shi-Tomasi corners on the previous frame, pyramidal
Lucas-Kanade tracking into the current frame, a seeded RANSAC homography over
the tracked pairs (normalized DLT for every model fit), and finally a warp of
either the current frame or the background model planes.

Points are ``(x, y)`` with ``x`` the column. A homography ``H`` maps previous
frame coordinates to current frame coordinates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from dsgm_masker.dsgm import DualModelPlanes

__all__ = [
    "HomographyError",
    "DegenerateConfigurationError",
    "InsufficientMatchesError",
    "NoConsensusError",
    "SingularHomographyError",
    "FlowMatch",
    "MotionParams",
    "detect_corners",
    "lk_flow",
    "homography_dlt",
    "ransac_homography",
    "project",
    "warp_frame",
    "warp_models",
    "estimate_motion",
]

log = logging.getLogger(__name__)

_SQRT2 = np.sqrt(2.0)


class HomographyError(ValueError):
    pass


class DegenerateConfigurationError(HomographyError):
    """Correspondences do not determine a unique homography."""


class InsufficientMatchesError(HomographyError):
    pass


class NoConsensusError(HomographyError):
    pass


class SingularHomographyError(HomographyError):
    pass


@dataclass(frozen=True)
class FlowMatch:
    src: tuple[float, float]
    dst: tuple[float, float]
    status: bool
    error: float


@dataclass(frozen=True)
class MotionParams:
    max_corners: int = 200
    quality: float = 0.01
    min_dist: float = 8.0
    window: int = 21
    levels: int = 5
    ransac_iters: int = 500
    inlier_thresh: float = 3.0
    seed: int = 42
    target: str = "frame"

    def __post_init__(self):
        if self.target not in ("frame", "models"):
            raise ValueError(f"motion compensation target must be 'frame' or 'models', got {self.target!r}")


# -- sampling helpers ---------------------------------------------------------

def _clamped(img: np.ndarray, r: int) -> np.ndarray:
    return np.pad(img, r, mode="edge")


def _bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples at real coordinates; coordinates are clamped to the image."""
    h, w = img.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.minimum(np.floor(xs).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(ys).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    return (img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x1] * fx * (1 - fy)
            + img[y1, x0] * (1 - fx) * fy + img[y1, x1] * fx * fy)


# -- corners ------------------------------------------------------------------

def _sobel(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = _clamped(img, 1)
    h, w = img.shape

    def at(dy, dx):
        return p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    gx = (at(-1, 1) + 2 * at(0, 1) + at(1, 1)) - (at(-1, -1) + 2 * at(0, -1) + at(1, -1))
    gy = (at(1, -1) + 2 * at(1, 0) + at(1, 1)) - (at(-1, -1) + 2 * at(-1, 0) + at(-1, 1))
    return gx, gy


def _box3(img: np.ndarray) -> np.ndarray:
    p = _clamped(img, 1)
    h, w = img.shape
    return sum(p[i : i + h, j : j + w] for i in range(3) for j in range(3))


def min_eigen_scores(frame: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of the 3x3-summed structure tensor at each pixel."""
    gx, gy = _sobel(np.asarray(frame, dtype=np.float64))
    a = _box3(gx * gx)
    b = _box3(gx * gy)
    c = _box3(gy * gy)
    half_diff = 0.5 * (a - c)
    score = 0.5 * (a + c) - np.sqrt(half_diff * half_diff + b * b)
    return np.maximum(score, 0.0)


def detect_corners(frame: np.ndarray, max_corners: int = 200, quality: float = 0.01,
                   min_dist: float = 8.0) -> np.ndarray:
    """Shi-Tomasi corners as an ``(n, 2)`` array of ``(x, y)``, strongest first.

    Candidates are 3x3 local maxima of the min-eigenvalue score that reach
    ``quality * max(score)``. They are accepted greedily in descending score
    (raster order on ties) unless within ``min_dist`` of an accepted corner.
    """
    frame = np.asarray(frame, dtype=np.float64)
    h, w = frame.shape
    if h < 8 or w < 8:
        raise ValueError(f"corner detection needs a frame of at least 8x8, got {w}x{h}")
    if not 0 < quality < 1:
        raise ValueError("quality must lie in (0, 1)")
    score = min_eigen_scores(frame)
    top = score.max()
    if top <= 0:
        return np.empty((0, 2))

    p = _clamped(score, 1)
    local_max = np.max([p[i : i + h, j : j + w] for i in range(3) for j in range(3)], axis=0)
    cand = (score >= quality * top) & (score >= local_max) & (score > 0)
    ys, xs = np.nonzero(cand)
    order = np.argsort(-score[ys, xs], kind="stable")

    cell = max(min_dist, 1.0)
    grid: dict[tuple[int, int], list[tuple[int, int]]] = {}
    min_d2 = min_dist * min_dist
    picked: list[tuple[int, int]] = []
    for k in order:
        x, y = int(xs[k]), int(ys[k])
        cx, cy = int(x // cell), int(y // cell)
        ok = True
        for gx in (cx - 1, cx, cx + 1):
            for gy in (cy - 1, cy, cy + 1):
                for px, py in grid.get((gx, gy), ()):
                    if (px - x) ** 2 + (py - y) ** 2 < min_d2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if not ok:
            continue
        picked.append((x, y))
        grid.setdefault((cx, cy), []).append((x, y))
        if len(picked) >= max_corners:
            break
    return np.array(picked, dtype=np.float64).reshape(-1, 2)


# -- pyramidal Lucas-Kanade ---------------------------------------------------

def _downsample(img: np.ndarray) -> np.ndarray:
    h, w = (img.shape[0] // 2) * 2, (img.shape[1] // 2) * 2
    v = img[:h, :w]
    return 0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2])


def _pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [img]
    while len(pyr) < levels and min(pyr[-1].shape) // 2 >= 8:
        pyr.append(_downsample(pyr[-1]))
    return pyr


def _central_gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = _clamped(img, 1)
    h, w = img.shape
    gx = 0.5 * (p[1 : h + 1, 2 : w + 2] - p[1 : h + 1, 0:w])
    gy = 0.5 * (p[2 : h + 2, 1 : w + 1] - p[0:h, 1 : w + 1])
    return gx, gy


def _min_eig(a, b, c):
    half = 0.5 * (a + c)
    return half - np.sqrt(np.maximum(half * half - (a * c - b * b), 0.0))


def lk_flow(prev: np.ndarray, next: np.ndarray, points, window: int = 21, levels: int = 5,
            max_iter: int = 30, eps: float = 0.01, min_eig: float = 1e-6) -> list[FlowMatch]:
    """Track ``points`` from ``prev`` into ``next`` with pyramidal Lucas-Kanade.

    Parameters
    ----------
    points : array-like, shape (n, 2)
        ``(x, y)`` positions in ``prev``.
    window : int
        Odd side of the square integration window.
    levels : int
        Maximum pyramid depth including full resolution; levels whose
        shorter side would drop below 8 px are not built.
    min_eig : float
        Threshold on the smallest eigenvalue of the window-averaged normal
        matrix. Below it at full resolution the point is lost; at coarser
        levels the level is skipped and the guess propagated. Window samples
        that fall outside either image are left out of the sums.

    Returns
    -------
    list of FlowMatch
        One per input point, in order. ``status`` is False when the
        point leaves the image or its normal matrix is singular.
    """
    prev = np.asarray(prev, dtype=np.float64)
    next = np.asarray(next, dtype=np.float64)
    if prev.shape != next.shape:
        raise ValueError(f"frame shapes differ: {prev.shape} vs {next.shape}")
    if window < 5 or window % 2 == 0:
        raise ValueError("window must be odd and >= 5")
    if levels < 1:
        raise ValueError("levels must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return []

    pyr_i = _pyramid(prev, levels)
    pyr_j = _pyramid(next, levels)
    half = window // 2
    off = np.arange(-half, half + 1, dtype=np.float64)
    ox, oy = np.meshgrid(off, off)
    ox, oy = ox.ravel(), oy.ravel()
    npix = ox.size

    h0, w0 = prev.shape
    status = ((pts[:, 0] >= 0) & (pts[:, 0] <= w0 - 1) & (pts[:, 1] >= 0) & (pts[:, 1] <= h0 - 1))
    guess = np.zeros((n, 2))
    disp = np.zeros((n, 2))
    err = np.full(n, np.nan)

    for level in range(len(pyr_i) - 1, -1, -1):
        img_i, img_j = pyr_i[level], pyr_j[level]
        hl, wl = img_i.shape
        gx, gy = _central_gradients(img_i)
        scale = 2.0 ** level
        base = (pts + 0.5) / scale - 0.5

        sx = base[:, :1] + ox
        sy = base[:, 1:] + oy
        # window samples outside the image carry no information; drop them
        valid_i = (sx >= 0) & (sx <= wl - 1) & (sy >= 0) & (sy <= hl - 1)
        patch = _bilinear(img_i, sx, sy)
        ix = _bilinear(gx, sx, sy) * valid_i
        iy = _bilinear(gy, sx, sy) * valid_i
        count = np.maximum(valid_i.sum(1), 1)
        gxx = (ix * ix).sum(1) / count
        gxy = (ix * iy).sum(1) / count
        gyy = (iy * iy).sum(1) / count
        solvable = _min_eig(gxx, gxy, gyy) >= min_eig
        if level == 0:
            status &= solvable

        v = np.zeros((n, 2))
        active = status & solvable
        for _ in range(max_iter):
            if not active.any():
                break
            idx = np.nonzero(active)[0]
            pos = base[idx] + guess[idx] + v[idx]
            qx = pos[:, :1] + ox
            qy = pos[:, 1:] + oy
            wgt = valid_i[idx] & (qx >= 0) & (qx <= wl - 1) & (qy >= 0) & (qy <= hl - 1)
            e = (patch[idx] - _bilinear(img_j, qx, qy)) * wgt
            jx, jy = ix[idx] * wgt, iy[idx] * wgt
            c = np.maximum(wgt.sum(1), 1)
            axx = (jx * jx).sum(1) / c
            axy = (jx * jy).sum(1) / c
            ayy = (jy * jy).sum(1) / c
            bx = (e * jx).sum(1) / c
            by = (e * jy).sum(1) / c
            ok = _min_eig(axx, axy, ayy) >= min_eig
            d = np.where(ok, axx * ayy - axy * axy, 1.0)
            eta_x = np.where(ok, (ayy * bx - axy * by) / d, 0.0)
            eta_y = np.where(ok, (axx * by - axy * bx) / d, 0.0)
            nx = pos[:, 0] + eta_x
            ny = pos[:, 1] + eta_y
            inside = ok & (nx >= 0) & (nx <= wl - 1) & (ny >= 0) & (ny <= hl - 1)
            if level == 0:
                status[idx[~inside]] = False
            # coarse levels: keep the last good estimate and stop refining
            active[idx[~inside]] = False
            idx, eta_x, eta_y = idx[inside], eta_x[inside], eta_y[inside]
            v[idx, 0] += eta_x
            v[idx, 1] += eta_y
            done = eta_x * eta_x + eta_y * eta_y < eps * eps
            active[idx[done]] = False

        if level > 0:
            guess = 2.0 * (guess + v)
        else:
            disp = guess + v
            pos = base + disp
            inside = (pos[:, 0] >= 0) & (pos[:, 0] <= wl - 1) & (pos[:, 1] >= 0) & (pos[:, 1] <= hl - 1)
            status &= inside
            ok = np.nonzero(status)[0]
            if ok.size:
                final = _bilinear(img_j, pos[ok, :1] + ox, pos[ok, 1:] + oy)
                err[ok] = np.abs(patch[ok] - final).mean(1)

    dst = pts + disp
    return [
        FlowMatch((float(pts[k, 0]), float(pts[k, 1])), (float(dst[k, 0]), float(dst[k, 1])),
                  bool(status[k]), float(err[k]))
        for k in range(n)
    ]


# -- homography ---------------------------------------------------------------

def _normalizing_transforms(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Hartley normalization of a batch ``(B, n, 2)``; returns points, T, valid flags."""
    centroid = pts.mean(axis=1, keepdims=True)
    centred = pts - centroid
    mean_dist = np.sqrt((centred * centred).sum(-1)).mean(axis=1)
    valid = mean_dist > 1e-12
    s = np.where(valid, _SQRT2 / np.where(valid, mean_dist, 1.0), 1.0)
    T = np.zeros((len(pts), 3, 3))
    T[:, 0, 0] = s
    T[:, 1, 1] = s
    T[:, 0, 2] = -s * centroid[:, 0, 0]
    T[:, 1, 2] = -s * centroid[:, 0, 1]
    T[:, 2, 2] = 1.0
    return centred * s[:, None, None], T, valid


def _dlt_batch(src: np.ndarray, dst: np.ndarray, rank_tol: float = 1e-9):
    """Normalized DLT for a batch of correspondence sets ``(B, n, 2)``.

    Returns ``(H, valid)`` with each ``H`` scaled so ``H[2, 2] == 1``.
    """
    ns, Ts, vs = _normalizing_transforms(src)
    nd, Td, vd = _normalizing_transforms(dst)
    B, n, _ = src.shape
    x, y = ns[..., 0], ns[..., 1]
    u, v = nd[..., 0], nd[..., 1]
    zero, one = np.zeros_like(x), np.ones_like(x)
    r1 = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=-1)
    r2 = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=-1)
    A = np.concatenate([r1, r2], axis=1)
    _, S, Vt = np.linalg.svd(A, full_matrices=True)
    Hn = Vt[:, -1, :].reshape(B, 3, 3)
    # rank of A below 8 leaves a multi-dimensional null space
    valid = vs & vd & (S[:, 7] > rank_tol * S[:, 0])
    H = np.linalg.inv(Td) @ Hn @ Ts
    h22 = H[:, 2, 2]
    valid &= np.abs(h22) > 1e-12
    H = H / np.where(np.abs(h22) > 1e-12, h22, 1.0)[:, None, None]
    valid &= np.abs(np.linalg.det(H)) > 1e-12
    return H, valid


def homography_dlt(src, dst) -> np.ndarray:
    """Homography mapping ``src`` to ``dst`` (each ``(n, 2)``, ``n >= 4``)."""
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) != len(dst):
        raise ValueError("src and dst must have the same length")
    if len(src) < 4:
        raise InsufficientMatchesError(f"need at least 4 correspondences, got {len(src)}")
    H, valid = _dlt_batch(src[None], dst[None])
    if not valid[0]:
        raise DegenerateConfigurationError("correspondences are rank deficient (collinear or repeated points)")
    return H[0]


def project(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply ``H`` (or a batch ``(B, 3, 3)``) to ``(n, 2)`` points."""
    pts = np.asarray(pts, dtype=np.float64)
    hom = np.concatenate([pts, np.ones(pts.shape[:-1] + (1,))], axis=-1)
    out = hom @ np.swapaxes(H, -1, -2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return out[..., :2] / out[..., 2:3]


def ransac_homography(matches, iters: int = 500, inlier_thresh: float = 3.0,
                      seed: int = 42) -> tuple[np.ndarray, np.ndarray]:
    """Robust homography over tracked matches.

    Each of ``iters`` rounds fits the DLT to four matches drawn with a
    generator seeded by ``seed``. Inliers have forward reprojection error
    below ``inlier_thresh`` pixels. The round with most inliers wins (the
    earliest on ties) and the returned model is refit on its inliers.

    Returns ``(H, inliers)`` where ``inliers`` is a boolean array aligned with
    ``matches``; lost matches are never inliers.
    """
    matches = list(matches)
    status = np.array([m.status for m in matches], dtype=bool)
    usable = np.nonzero(status)[0]
    if usable.size < 4:
        raise InsufficientMatchesError(f"need at least 4 tracked matches, got {usable.size}")
    src = np.array([matches[k].src for k in usable], dtype=np.float64)
    dst = np.array([matches[k].dst for k in usable], dtype=np.float64)
    n = len(src)

    rng = np.random.default_rng(seed)
    samples = np.argsort(rng.random((iters, n)), axis=1)[:, :4]
    Hs, valid = _dlt_batch(src[samples], dst[samples])

    with np.errstate(invalid="ignore", over="ignore"):
        resid = project(Hs, src[None]) - dst[None]
        err = np.sqrt((resid * resid).sum(-1))
    inl = (err < inlier_thresh) & valid[:, None]
    counts = np.where(valid, inl.sum(1), -1)
    best = int(np.argmax(counts))
    if counts[best] < 4:
        raise NoConsensusError("no RANSAC model gathered at least 4 inliers")

    best_inl = inl[best]
    H = Hs[best]
    refit, ok = _dlt_batch(src[best_inl][None], dst[best_inl][None])
    if ok[0]:
        H = refit[0]
    mask = np.zeros(len(matches), dtype=bool)
    mask[usable[best_inl]] = True
    return H, mask


# -- warping ------------------------------------------------------------------

def _inverse(H: np.ndarray) -> np.ndarray:
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (3, 3) or not abs(np.linalg.det(H)) > 1e-12:
        raise SingularHomographyError("homography is singular")
    return np.linalg.inv(H)


def _source_coords(shape: tuple[int, int], H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates in the source image that each output pixel samples (``H^-1 x``)."""
    Hi = _inverse(H)
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    den = Hi[2, 0] * xs + Hi[2, 1] * ys + Hi[2, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        sx = (Hi[0, 0] * xs + Hi[0, 1] * ys + Hi[0, 2]) / den
        sy = (Hi[1, 0] * xs + Hi[1, 1] * ys + Hi[1, 2]) / den
    bad = ~np.isfinite(sx) | ~np.isfinite(sy)
    sx[bad] = -1.0
    sy[bad] = -1.0
    return sx, sy


def warp_frame(frame: np.ndarray, H: np.ndarray) -> np.ndarray:
    """Resample ``frame`` so content at ``p`` moves to ``H p``.

    Output pixel ``x`` takes the bilinear sample of ``frame`` at ``H^-1 x``;
    samples outside the frame take the nearest border value.
    """
    frame = np.asarray(frame, dtype=np.float64)
    sx, sy = _source_coords(frame.shape, H)
    return _bilinear(frame, sx, sy)


def warp_models(models: DualModelPlanes, H: np.ndarray, var_init: float = 255.0) -> DualModelPlanes:
    """Carry background models along with the camera motion ``H``.

    Means and variances are sampled bilinearly, ages by nearest neighbour.
    Pixels whose source lies outside the previous frame keep the sampled
    (border) mean but get ``var_init`` and age 1 in both models.
    """
    h, w = models.shape
    sx, sy = _source_coords((h, w), H)
    outside = (sx < -1e-9) | (sx > w - 1 + 1e-9) | (sy < -1e-9) | (sy > h - 1 + 1e-9)
    nx = np.clip(np.floor(sx + 0.5), 0, w - 1).astype(np.intp)
    ny = np.clip(np.floor(sy + 0.5), 0, h - 1).astype(np.intp)

    def lin(p):
        return _bilinear(p, sx, sy)

    def warp_var(p):
        out = lin(p)
        out[outside] = var_init
        return out

    def warp_age(p):
        out = p[ny, nx].copy()
        out[outside] = 1
        return out

    return DualModelPlanes(
        lin(models.mean_a), warp_var(models.var_a), warp_age(models.age_a),
        lin(models.mean_c), warp_var(models.var_c), warp_age(models.age_c),
    )


def estimate_motion(prev: np.ndarray, cur: np.ndarray, params: MotionParams = MotionParams()) -> np.ndarray | None:
    """Homography from ``prev`` to ``cur``, or ``None`` when it cannot be estimated."""
    corners = detect_corners(prev, params.max_corners, params.quality, params.min_dist)
    if len(corners) < 4:
        log.debug("motion compensation skipped: %d corners", len(corners))
        return None
    matches = lk_flow(prev, cur, corners, params.window, params.levels)
    try:
        H, _ = ransac_homography(matches, params.ransac_iters, params.inlier_thresh, params.seed)
    except HomographyError as exc:
        log.debug("motion compensation skipped: %s", exc)
        return None
    return H
