# -*- coding: utf-8 -*-
"""CompSim module for aligning the simulator with the (synthetic) real rig.

Covers pinhole projection, rendering and detecting a checkerboard target, planar PnP (homography initialization followed
by Gauss-Newton refinement), reprojection diagnostics, lattice pose snapping, and median albedo extraction.

Example:
    Recover the rig extrinsics from a rendered board::

        board = Checkerboard({"inner_rows": 6, "inner_cols": 9, "square_size": 0.04})
        image, truth = render_checkerboard(board, camera)
        corners = detect_corners(image, board)
        rotation, translation = solve_pnp(corners, camera.intrinsics)

Attributes:
    logger (Logger): Module level logger for usage and debugging.
    YAW_CATALOGUE (tuple[float]): Snapping targets for object yaw in degrees.

"""
__author__ = "CompSim Developers"
__email__ = "compsim-dev@users.noreply.github.com"

import math
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage
from scipy.spatial.transform import Rotation

from compsim.config import ExperimentConfig, resolve_config
from compsim.exceptions import AlbedoError, CalibrationError, DetectionError, ProjectionError
from compsim.logger import get_logger
from compsim.models import CameraModel, Checkerboard, CornerSet, Intrinsics
from compsim.utils import jsonify_data_to_file

logger = get_logger(__name__)

YAW_CATALOGUE = (0.0, 30.0, 45.0, 60.0, 90.0)


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# PROJECTION  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _project(points3d: np.ndarray, rotation: np.ndarray, translation: np.ndarray, fx: float, fy: float, cx: float,
             cy: float) -> np.ndarray:
    cam = points3d @ rotation.T + translation
    depth = cam[:, 2]
    if np.any(~(depth > 0)):
        raise ProjectionError(
            f"{int(np.sum(~(depth > 0)))} point(s) have nonpositive depth in the camera frame.",
            payload=points3d[~(depth > 0)].tolist()
        )
    return np.stack([fx * cam[:, 0] / depth + cx, fy * cam[:, 1] / depth + cy], axis=1)


def project(points3d: Union[np.ndarray, Sequence[Sequence[float]]], camera: CameraModel) -> np.ndarray:
    """Project world points with a pinhole camera: u = fx X/Z + cx, v = fy Y/Z + cy with (X, Y, Z) = R p + t.

    Args:
        points3d (np.ndarray | Sequence): World points of shape (N, 3) or a single point of shape (3,).

    Returns:
        np.ndarray: Pixel coordinates of shape (N, 2) (or (2,) for a single point).

    Raises:
        ProjectionError: When any point has nonpositive depth.

    """
    points = np.asarray(points3d, dtype=np.float64)
    single = points.ndim == 1
    points = points.reshape(-1, 3)
    uv = _project(points, camera.rotation, camera.translation, camera.fx, camera.fy, camera.cx, camera.cy)
    return uv[0] if single else uv


def reprojection_rms(corners: CornerSet, camera: CameraModel) -> float:
    """Root-mean-square pixel distance between observed corners and their projections.

    Args:
        corners (CornerSet): Correspondences.
        camera (CameraModel): Camera under test.

    Returns:
        float: RMS of the 2D residual norms in pixels.

    """
    residuals = project(corners.object_points, camera) - corners.image_points
    return float(np.sqrt(np.mean(np.sum(residuals ** 2, axis=1))))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# CHECKERBOARD  # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def board_from_config(cfg: Optional[ExperimentConfig] = None, inner_rows: Optional[int] = None,
                      inner_cols: Optional[int] = None, square_size: Optional[float] = None) -> Checkerboard:
    """Checkerboard centered on the table, rotated by the configured yaw.

    Args:
        cfg (ExperimentConfig, optional): Experiment configuration.
        inner_rows (int, optional): Override of the configured inner rows.
        inner_cols (int, optional): Override of the configured inner columns.
        square_size (float, optional): Override of the configured square size.

    Returns:
        Checkerboard: Board whose inner-corner grid is centered on the table.

    """
    cfg = resolve_config(cfg)
    calibration = cfg.calibration
    rows = inner_rows or calibration["inner_rows"]
    cols = inner_cols or calibration["inner_cols"]
    square = square_size or calibration["square_size"]
    yaw = calibration["yaw"]
    center = cfg.world["table_size"] / 2.0
    half_x, half_y = (cols - 1) * square / 2.0, -(rows - 1) * square / 2.0
    c, s = math.cos(math.radians(yaw)), math.sin(math.radians(yaw))
    origin = (center - (c * half_x - s * half_y), center - (s * half_x + c * half_y), 0.0)
    board = Checkerboard({"inner_rows": rows, "inner_cols": cols, "square_size": square, "origin": origin, "yaw": yaw})
    board.validate()
    return board


def render_checkerboard(board: Checkerboard, camera: CameraModel, supersample: int = 4,
                        background: float = 0.5) -> Tuple[np.ndarray, CornerSet]:
    """Render a grayscale checkerboard lying in its plane, anti-aliased by supersampling.

    The board carries a one-square white margin around its squares. Pixels whose rays miss the board show the
    background gray.

    Args:
        board (Checkerboard): Board geometry.
        camera (CameraModel): Camera to render with.
        supersample (int): Samples per pixel along each axis.
        background (float): Gray level outside the board.

    Returns:
        tuple[np.ndarray, CornerSet]: float64 image of shape (height, width) and ground-truth corners.

    """
    camera.validate()
    k = max(int(supersample), 1)
    offsets = (np.arange(k) + 0.5) / k - 0.5
    us = (np.arange(camera.width)[:, None] + offsets[None, :]).reshape(-1)
    vs = (np.arange(camera.height)[:, None] + offsets[None, :]).reshape(-1)
    grid_u, grid_v = np.meshgrid(us, vs)

    rotation, translation = camera.rotation, camera.translation
    rays_cam = np.stack([(grid_u - camera.cx) / camera.fx, (grid_v - camera.cy) / camera.fy,
                         np.ones_like(grid_u)], axis=-1)
    rays_world = rays_cam @ rotation
    center = -rotation.T @ translation
    plane_z = board.origin[2]
    with np.errstate(divide="ignore", invalid="ignore"):
        depth = (plane_z - center[2]) / rays_world[..., 2]
    hit = np.isfinite(depth) & (depth > 0)
    px = center[0] + depth * rays_world[..., 0]
    py = center[1] + depth * rays_world[..., 1]

    c, s = math.cos(math.radians(board.yaw)), math.sin(math.radians(board.yaw))
    dx, dy = px - board.origin[0], py - board.origin[1]
    col = (c * dx + s * dy) / board.square_size
    row = -(-s * dx + c * dy) / board.square_size

    in_squares = (col >= -1) & (col < board.inner_cols) & (row >= -1) & (row < board.inner_rows)
    in_margin = (col >= -2) & (col < board.inner_cols + 1) & (row >= -2) & (row < board.inner_rows + 1)
    parity = (np.floor(col).astype(np.int64) + np.floor(row).astype(np.int64)) % 2
    samples = np.full(grid_u.shape, background)
    samples[hit & in_margin] = 1.0
    samples[hit & in_squares & (parity == 0)] = 0.0

    image = samples.reshape(camera.height, k, camera.width, k).mean(axis=(1, 3))
    points3d = board.corner_points()
    truth = CornerSet({"points3d": points3d, "points2d": project(points3d, camera)})
    return image, truth


def _grayscale(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 3:
        image = image[..., :3] @ np.array([0.299, 0.587, 0.114])
    return image


def _saddle_candidates(smooth: np.ndarray, window: int) -> np.ndarray:
    gy, gx = np.gradient(smooth)
    gyy, gyx = np.gradient(gy)
    gxy, gxx = np.gradient(gx)
    response = -(gxx * gyy - gxy * gyx)
    peak = float(response.max()) if response.size else 0.0
    threshold = max(1e-8, 0.15 * peak)
    local_max = ndimage.maximum_filter(response, size=window, mode="constant", cval=-np.inf) == response
    rows, cols = np.nonzero(local_max & (response > threshold))
    return np.stack([cols, rows], axis=1).astype(np.float64)


def _ring_sign_changes(smooth: np.ndarray, u: float, v: float, radius: float, samples: int = 32) -> int:
    angles = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    ring = ndimage.map_coordinates(
        smooth, [v + radius * np.sin(angles), u + radius * np.cos(angles)], order=1, mode="nearest")
    signs = np.sign(ring - ring.mean())
    signs = signs[signs != 0]
    if signs.size < 4:
        return 0
    return int(np.sum(signs != np.roll(signs, 1)))


def _refine_saddle(smooth: np.ndarray, u: float, v: float, half: int, iterations: int = 4) -> Optional[np.ndarray]:
    height, width = smooth.shape
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    oy, ox = np.meshgrid(offsets, offsets, indexing="ij")
    design = np.stack([ox.ravel() ** 2, ox.ravel() * oy.ravel(), oy.ravel() ** 2, ox.ravel(), oy.ravel(),
                       np.ones(ox.size)], axis=1)
    cu, cv = int(round(u)), int(round(v))
    for _ in range(iterations):
        if cu - half < 0 or cv - half < 0 or cu + half >= width or cv + half >= height:
            return None
        patch = smooth[cv - half:cv + half + 1, cu - half:cu + half + 1].ravel()
        a, b, c, d, e, _ = np.linalg.lstsq(design, patch, rcond=None)[0]
        hessian = np.array([[2.0 * a, b], [b, 2.0 * c]])
        if np.linalg.det(hessian) >= 0:
            return None
        shift = np.linalg.solve(hessian, -np.array([d, e]))
        if np.all(np.abs(shift) <= 0.5):
            return np.array([cu + shift[0], cv + shift[1]])
        step = np.clip(np.round(shift), -half, half).astype(int)
        cu, cv = cu + int(step[0]), cv + int(step[1])
    return None


def _order_corners(points: np.ndarray, board: Checkerboard) -> np.ndarray:
    rows, cols = board.inner_rows, board.inner_cols
    s, d = points[:, 0] + points[:, 1], points[:, 0] - points[:, 1]
    top_left, bottom_right = points[np.argmin(s)], points[np.argmax(s)]
    top_right, bottom_left = points[np.argmax(d)], points[np.argmin(d)]
    image_quad = np.array([top_left, top_right, bottom_right, bottom_left])

    best, best_residual = None, np.inf
    hypotheses = (
        np.array([[0, 0], [cols - 1, 0], [cols - 1, rows - 1], [0, rows - 1]], dtype=np.float64),
        np.array([[0, 0], [0, rows - 1], [cols - 1, rows - 1], [cols - 1, 0]], dtype=np.float64),
    )
    grid_r, grid_c = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    grid = np.stack([grid_c.ravel(), grid_r.ravel()], axis=1).astype(np.float64)
    for grid_quad in hypotheses:
        try:
            homography = estimate_homography(grid_quad, image_quad)
        except CalibrationError:
            continue
        predicted = apply_homography(homography, grid)
        distances = np.linalg.norm(predicted[:, None, :] - points[None, :, :], axis=2)
        nearest = np.argmin(distances, axis=1)
        if len(set(nearest.tolist())) != len(nearest):
            continue
        residual = float(np.mean(distances[np.arange(len(grid)), nearest]))
        if residual < best_residual:
            best, best_residual = points[nearest], residual
    spacing = np.linalg.norm(top_right - top_left) / max(cols - 1, 1)
    if best is None or best_residual > 0.25 * spacing:
        raise DetectionError(
            f"Could not order {len(points)} corners into a {rows}x{cols} grid (residual {best_residual:.3f} px).")
    return best


def detect_corners(image: np.ndarray, board: Checkerboard, scale: int = 1) -> CornerSet:
    """Detect the inner corners of a checkerboard with sub-pixel accuracy.

    Saddle points of the smoothed image are found from the Hessian determinant, filtered by a ring test that requires
    four intensity sign changes around each candidate, refined by fitting a quadratic saddle on a local patch, and
    ordered row-major starting from the image-top-left corner of the grid.

    Args:
        image (np.ndarray): Grayscale (H, W) or RGB (H, W, 3) image.
        board (Checkerboard): Expected board (inner corner counts and world geometry).
        scale (int): Integer factor by which the image was upsampled relative to native pixels; detected coordinates
            are mapped back to native pixels.

    Returns:
        CornerSet: Ordered correspondences (board world points and native pixel coordinates).

    Raises:
        DetectionError: When the number of detected corners does not match the board.

    """
    board.validate()
    gray = _grayscale(image)
    if gray.size == 0 or float(gray.max() - gray.min()) < 1e-6:
        raise DetectionError("Image has no contrast; no checkerboard found (found 0 corners).")

    candidates_u, candidates_v = [], []
    pitch = _square_pitch_estimate(gray.shape, board.inner_rows, board.inner_cols)
    smooth = ndimage.gaussian_filter(gray, sigma=max(1.0, 0.2 * pitch))
    window = max(3, int(round(0.5 * pitch)) | 1)
    half = max(2, int(round(0.25 * pitch)))
    for u, v in _saddle_candidates(smooth, window):
        if _ring_sign_changes(smooth, u, v, radius=max(2.0, 0.3 * pitch)) != 4:
            continue
        refined = _refine_saddle(smooth, u, v, half)
        if refined is not None:
            candidates_u.append(refined[0])
            candidates_v.append(refined[1])

    points = np.stack([candidates_u, candidates_v], axis=1) if candidates_u else np.zeros((0, 2))
    if len(points) > 1:
        keep = []
        for index, point in enumerate(points):
            if all(np.linalg.norm(point - points[j]) > 0.25 * pitch for j in keep):
                keep.append(index)
        points = points[keep]
    if len(points) != board.count:
        raise DetectionError(f"Expected {board.count} corners, found {len(points)}.", payload=len(points))

    ordered = _order_corners(points, board)
    offset = (scale - 1) / 2.0
    native = (ordered - offset) / scale
    logger.debug(f"Detected {len(native)} checkerboard corners.")
    return CornerSet({"points3d": board.corner_points(), "points2d": native})


def _square_pitch_estimate(shape: Tuple[int, ...], rows: int, cols: int) -> float:
    # the board spans a good part of the view; this only sizes the filters
    return max(4.0, 0.6 * min(shape[:2]) / (max(rows, cols) + 3))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# PNP # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _normalization(points: np.ndarray) -> np.ndarray:
    centroid = points.mean(axis=0)
    spread = np.mean(np.linalg.norm(points - centroid, axis=1))
    if spread <= 0:
        raise CalibrationError("Degenerate point configuration (all points coincide).")
    scale = math.sqrt(2.0) / spread
    return np.array([[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]])


def apply_homography(homography: np.ndarray, points: np.ndarray) -> np.ndarray:
    homogeneous = np.column_stack([points, np.ones(len(points))]) @ homography.T
    return homogeneous[:, :2] / homogeneous[:, 2:3]


def estimate_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalized DLT homography mapping src points to dst points.

    Args:
        src (np.ndarray): Source points of shape (N, 2), N >= 4.
        dst (np.ndarray): Destination points of shape (N, 2).

    Returns:
        np.ndarray: 3x3 homography with H[2, 2] = 1 (or unit Frobenius norm when H[2, 2] vanishes).

    Raises:
        CalibrationError: When fewer than 4 points are given or the system is rank deficient.

    """
    src, dst = np.asarray(src, dtype=np.float64), np.asarray(dst, dtype=np.float64)
    if len(src) < 4 or len(src) != len(dst):
        raise CalibrationError(f"A homography needs at least 4 matched points, got {len(src)}.")
    t_src, t_dst = _normalization(src), _normalization(dst)
    s = apply_homography(t_src, src)
    d = apply_homography(t_dst, dst)
    rows = []
    for (x, y), (u, v) in zip(s, d):
        rows.append([-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u])
        rows.append([0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v])
    _, singular_values, vt = np.linalg.svd(np.array(rows))
    if singular_values[7] < 1e-10 * singular_values[0]:
        raise CalibrationError("Rank-deficient homography system (points are collinear or repeated).",
                               payload=singular_values.tolist())
    normalized = vt[-1].reshape(3, 3)
    homography = np.linalg.inv(t_dst) @ normalized @ t_src
    if abs(homography[2, 2]) > 1e-12:
        return homography / homography[2, 2]
    return homography / np.linalg.norm(homography)


def _orthonormalize(matrix: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(matrix)
    rotation = u @ vt
    if np.linalg.det(rotation) < 0:
        u[:, -1] *= -1
        rotation = u @ vt
    return rotation


def _residuals(points3d: np.ndarray, points2d: np.ndarray, rotation: np.ndarray, translation: np.ndarray,
               intrinsics: Intrinsics) -> np.ndarray:
    return (_project(points3d, rotation, translation, intrinsics.fx, intrinsics.fy, intrinsics.cx, intrinsics.cy)
            - points2d)


def _rms(residuals: np.ndarray) -> float:
    return float(np.sqrt(np.mean(np.sum(residuals ** 2, axis=1))))


def _gauss_newton(points3d: np.ndarray, points2d: np.ndarray, rotation: np.ndarray, translation: np.ndarray,
                  intrinsics: Intrinsics, iterations: int = 50) -> Tuple[np.ndarray, np.ndarray, float]:
    residuals = _residuals(points3d, points2d, rotation, translation, intrinsics)
    rms = _rms(residuals)
    for _ in range(iterations):
        rotated = points3d @ rotation.T
        cam = rotated + translation
        x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
        d_uv = np.zeros((len(points3d), 2, 3))
        d_uv[:, 0, 0] = intrinsics.fx / z
        d_uv[:, 0, 2] = -intrinsics.fx * x / z ** 2
        d_uv[:, 1, 1] = intrinsics.fy / z
        d_uv[:, 1, 2] = -intrinsics.fy * y / z ** 2
        # left perturbation: d(exp(w) R p)/dw = -[R p]_x
        skew = np.zeros((len(points3d), 3, 3))
        skew[:, 0, 1], skew[:, 0, 2] = -rotated[:, 2], rotated[:, 1]
        skew[:, 1, 0], skew[:, 1, 2] = rotated[:, 2], -rotated[:, 0]
        skew[:, 2, 0], skew[:, 2, 1] = -rotated[:, 1], rotated[:, 0]
        jacobian = np.concatenate([d_uv @ -skew, d_uv], axis=2).reshape(-1, 6)
        delta = np.linalg.lstsq(jacobian, -residuals.reshape(-1), rcond=None)[0]

        accepted = False
        step = 1.0
        for _ in range(12):
            candidate_rotation = Rotation.from_rotvec(step * delta[:3]).as_matrix() @ rotation
            candidate_translation = translation + step * delta[3:]
            try:
                candidate_residuals = _residuals(
                    points3d, points2d, candidate_rotation, candidate_translation, intrinsics)
            except ProjectionError:
                step /= 2.0
                continue
            candidate_rms = _rms(candidate_residuals)
            if candidate_rms < rms:
                rotation, translation = candidate_rotation, candidate_translation
                residuals, rms, accepted = candidate_residuals, candidate_rms, True
                break
            step /= 2.0
        if not accepted or np.linalg.norm(step * delta) < 1e-15:
            break
    return rotation, translation, rms


def solve_pnp(corners: CornerSet, intrinsics: Intrinsics) -> Tuple[np.ndarray, np.ndarray]:
    """Recover camera extrinsics from coplanar 3D-2D correspondences.

    The world plane is fitted by SVD, a homography from plane to normalized image coordinates is decomposed for both
    signs of its scale, and the sign giving positive depth and the lower reprojection RMS is refined by Gauss-Newton
    with step halving (a step is only accepted if it lowers the RMS).

    Args:
        corners (CornerSet): At least 4 coplanar correspondences.
        intrinsics (Intrinsics): Known pinhole intrinsics.

    Returns:
        tuple[np.ndarray, np.ndarray]: World-to-camera rotation (3x3, orthonormal) and translation (3,).

    Raises:
        CalibrationError: For fewer than 4 points, collinear points, or a rank-deficient homography.

    """
    points3d, points2d = corners.object_points, corners.image_points
    if len(points3d) < 4 or len(points3d) != len(points2d):
        raise CalibrationError(f"PnP needs at least 4 correspondences, got {len(points3d)}.")

    centroid = points3d.mean(axis=0)
    _, singular_values, vt = np.linalg.svd(points3d - centroid)
    if singular_values[1] < 1e-9 * max(singular_values[0], 1e-300):
        raise CalibrationError("Degenerate PnP configuration: the 3D points are collinear.")
    if singular_values[2] > 1e-6 * singular_values[0]:
        logger.warning(f"PnP points are not exactly coplanar (out-of-plane spread {singular_values[2]:.3e}).")
    axis_1, axis_2 = vt[0], vt[1]
    basis = np.stack([axis_1, axis_2, np.cross(axis_1, axis_2)], axis=1)
    plane_points = (points3d - centroid) @ basis[:, :2]

    k_inv = np.linalg.inv(intrinsics.matrix)
    normalized = (np.column_stack([points2d, np.ones(len(points2d))]) @ k_inv.T)[:, :2]
    homography = estimate_homography(plane_points, normalized)

    h1, h2, h3 = homography[:, 0], homography[:, 1], homography[:, 2]
    scale = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
    best: Optional[Tuple[np.ndarray, np.ndarray, float]] = None
    for sign in (1.0, -1.0):
        columns = sign * scale * np.stack([h1, h2], axis=1)
        u, _, vt_cols = np.linalg.svd(columns, full_matrices=False)
        q = u @ vt_cols
        local_rotation = np.stack([q[:, 0], q[:, 1], np.cross(q[:, 0], q[:, 1])], axis=1)
        local_translation = sign * scale * h3
        rotation = local_rotation @ basis.T
        translation = local_translation - rotation @ centroid
        depth = (points3d @ rotation.T + translation)[:, 2]
        if np.any(depth <= 0):
            continue
        rms = _rms(_residuals(points3d, points2d, rotation, translation, intrinsics))
        if best is None or rms < best[2]:
            best = (rotation, translation, rms)
    if best is None:
        raise CalibrationError("No homography decomposition places the points in front of the camera.")

    initial_rms = best[2]
    rotation, translation, rms = _gauss_newton(points3d, points2d, best[0], best[1], intrinsics)
    rotation = _orthonormalize(rotation)
    logger.debug(f"PnP reprojection RMS {initial_rms:.3e} px (homography) -> {rms:.3e} px (refined).")
    return rotation, translation


def rotation_error(estimated: np.ndarray, truth: np.ndarray) -> float:
    """Angle in radians of the relative rotation between two rotation matrices.

    Args:
        estimated (np.ndarray): Estimated rotation.
        truth (np.ndarray): Reference rotation.

    Returns:
        float: Geodesic angle in radians.

    """
    return float(np.linalg.norm(Rotation.from_matrix(estimated @ truth.T).as_rotvec()))


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# POSE AND ALBEDO ALIGNMENT # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def _round_half_away(value: float) -> float:
    value = round(value, 9)
    return math.copysign(math.floor(abs(value) + 0.5), value)


def snap_pose(raw: Sequence[float], lattice: float = 0.05) -> Tuple[float, float, float]:
    """Snap a planar pose to the lattice and the yaw catalogue.

    Positions round to the nearest lattice node (ties away from zero). Yaw is reduced modulo 90 degrees and snapped to
    the nearest of 0, 30, 45, 60, 90 (ties to the smaller angle), with 90 folding back to 0.

    Args:
        raw (Sequence[float]): (x, y, yaw degrees).
        lattice (float): Lattice spacing in meters.

    Returns:
        tuple[float, float, float]: Snapped (x, y, yaw).

    """
    x, y, yaw = (float(v) for v in raw)
    snapped_x = round(_round_half_away(x / lattice) * lattice, 9) + 0.0
    snapped_y = round(_round_half_away(y / lattice) * lattice, 9) + 0.0
    reduced = yaw % 90.0
    snapped_yaw = min(YAW_CATALOGUE, key=lambda angle: (abs(reduced - angle), angle))
    return snapped_x, snapped_y, 0.0 if snapped_yaw == 90.0 else snapped_yaw


def extract_albedo(patch: np.ndarray) -> Tuple[float, float, float]:
    """Per-channel median color of an image patch.

    Args:
        patch (np.ndarray): Patch of shape (..., 3); uint8 patches are scaled to [0, 1].

    Returns:
        tuple[float, float, float]: Median RGB.

    Raises:
        AlbedoError: When the patch holds no pixels.

    """
    pixels = np.asarray(patch)
    if pixels.size == 0:
        raise AlbedoError("Cannot extract albedo from an empty patch.")
    pixels = pixels.reshape(-1, pixels.shape[-1]).astype(np.float64)
    if np.asarray(patch).dtype == np.uint8:
        pixels = pixels / 255.0
    median = np.median(pixels, axis=0)
    return tuple(float(v) for v in median[:3])


# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# RIG CALIBRATION # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #
# # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # # #

def calibrate_rig(cfg: Optional[ExperimentConfig] = None, board: Optional[Checkerboard] = None,
                  rig_camera: Optional[CameraModel] = None,
                  out_file: Union[Path, str, None] = None) -> Tuple[CameraModel, Dict[str, Any]]:
    """Calibrate the rig: render the board with the rig camera, detect its corners, and solve PnP.

    Args:
        cfg (ExperimentConfig, optional): Experiment configuration.
        board (Checkerboard, optional): Calibration board (centered configured board by default).
        rig_camera (CameraModel, optional): Ground-truth rig camera (configured camera by default).
        out_file (Path | str, optional): camera.json destination; a calibration_report.json is written beside it.

    Returns:
        tuple[CameraModel, dict]: Recovered camera and a report of errors against the rig camera.

    """
    cfg = resolve_config(cfg)
    board = board or board_from_config(cfg)
    rig_camera = rig_camera or cfg.camera_model()
    upsample = cfg.calibration["upsample"]

    image, truth = render_checkerboard(board, rig_camera.scaled(upsample), supersample=cfg.calibration["supersample"])
    corners = detect_corners(image, board, scale=upsample)
    detection_error = float(np.max(np.linalg.norm(corners.image_points - project(corners.object_points, rig_camera),
                                                  axis=1)))
    rotation, translation = solve_pnp(corners, rig_camera.intrinsics)
    camera = CameraModel.from_parts(rig_camera.intrinsics, rotation, translation)
    camera.validate()

    report = {
        "board": board.serialized(),
        "corners": len(corners),
        "max_detection_error_px": detection_error,
        "reprojection_rms_px": reprojection_rms(corners, camera),
        "rotation_error_rad": rotation_error(rotation, rig_camera.rotation),
        "translation_error_m": float(np.linalg.norm(translation - rig_camera.translation)),
    }
    logger.info(f"Calibrated rig camera: RMS {report['reprojection_rms_px']:.4f} px, rotation error "
                f"{report['rotation_error_rad']:.2e} rad, translation error {report['translation_error_m']:.2e} m.")

    if out_file is not None:
        out_file = camera.to_json_file(out_file)
        with open(out_file.parent / "calibration_report.json", "w", encoding="utf-8") as report_json:
            jsonify_data_to_file(report, report_json)
    return camera, report
