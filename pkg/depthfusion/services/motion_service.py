import logging
import math
from dataclasses import replace

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from models.motion import LinearSystem, MotionHypothesis, MotionSampleSet, MotionSolution
from models.raster import FlowField
from services.geometry_service import GeometryService
from utils.constants import BASELINE_FLOOR, TRANSLATION_FLOOR
from utils.exceptions import (
    DegenerateTranslationError, GeometryDegeneracyError, InsufficientSamplesError,
    LowParallaxError, NoConsensusError, RankDeficientError, ZeroBaselineError
)
from utils.robust_stats import lower_median, robust_threshold

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
RANSAC_CONFIDENCE = 0.99


class MotionService:
    """Egomotion from backward flow and relative depth.

    Hypotheses are solved in the linear motion-field model with unknowns
    [omega; V], V = T / alpha. Every residual is the normalized residual
    e = |r| / max(|f|, tau) measured in pixels.
    """

    @staticmethod
    def stratified_sample(flow, d_rel, intrinsics, cfg, seed=0):
        """Draw at most ``cfg.per_cell_cap`` samples per (grid cell, depth bin)"""
        if flow.shape != d_rel.shape:
            raise ValueError(f'Flow {flow.shape} and depth {d_rel.shape} grids differ')

        minimum = 2 * cfg.min_sample_size
        usable = flow.mask & d_rel.mask & (flow.magnitude() >= cfg.static_floor)
        index = np.flatnonzero(usable)
        if index.size < minimum:
            raise InsufficientSamplesError(f'{index.size} usable pixels, need {minimum}')

        rows, cols = np.divmod(index, flow.width)
        cells = cfg.cells_per_axis
        cell = (rows * cells // flow.height) * cells + cols * cells // flow.width

        depth = d_rel.values.ravel()[index].astype(np.float64)
        edges = np.quantile(depth, np.linspace(0.0, 1.0, cfg.depth_bins + 1)[1:-1])
        depth_bin = np.searchsorted(edges, depth, side='right')
        group = cell * cfg.depth_bins + depth_bin

        # Random order inside each group, then keep the first cap of every group
        rng = np.random.default_rng(seed)
        shuffled = rng.permutation(index.size)
        order = shuffled[np.argsort(group[shuffled], kind='stable')]
        sorted_group = group[order]
        rank = np.arange(order.size) - np.searchsorted(sorted_group, sorted_group, side='left')
        chosen = np.sort(order[rank < cfg.per_cell_cap])
        if chosen.size < minimum:
            raise InsufficientSamplesError(f'{chosen.size} stratified samples, need {minimum}')

        pick = index[chosen]
        x, y = GeometryService.normalize_pixel(cols[chosen], rows[chosen], intrinsics)
        flow_px = flow.values.reshape(-1, 2)[pick].astype(np.float64)

        logger.debug('Stratified %d of %d usable pixels', chosen.size, index.size)
        return MotionSampleSet(
            pixel_index=pick,
            x=x,
            y=y,
            flow=GeometryService.flow_to_normalized(flow_px, intrinsics),
            flow_px=flow_px,
            d_rel=depth[chosen],
            cell=cell[chosen],
            depth_bin=depth_bin[chosen],
            total_cells=cells * cells,
            focal=(intrinsics.fx, intrinsics.fy)
        )

    @staticmethod
    def row_weights(samples, tau):
        """Per-row scale (N, 2) turning normalized-unit residuals into e components"""
        denominator = np.maximum(samples.flow_magnitude_px(), tau)
        return np.stack([samples.focal[0] / denominator, samples.focal[1] / denominator], axis=1)

    @staticmethod
    def build_linear_system(samples, row_weights=None):
        """Rows [B | A / d_rel] against [omega; V], rhs the normalized flow"""
        a, b = GeometryService.motion_field_matrices(samples.x, samples.y)
        design = np.concatenate([b, a / samples.d_rel[:, None, None]], axis=2)
        rhs = np.array(samples.flow, dtype=np.float64)

        if row_weights is not None:
            weights = np.broadcast_to(np.asarray(row_weights, dtype=np.float64).reshape(len(samples), -1),
                                      (len(samples), 2))
            design = design * weights[..., None]
            rhs = rhs * weights

        return LinearSystem(design.reshape(-1, 6), rhs.reshape(-1))

    @staticmethod
    def solve_motion(system):
        """Least squares through the SVD; rank deficiency raises"""
        design, rhs = system.design, system.rhs
        if design.shape[0] < 6:
            raise RankDeficientError(f'{design.shape[0]} rows for 6 unknowns')

        u, s, vt = np.linalg.svd(design, full_matrices=False)
        if s[0] == 0 or s[-1] <= RANK_TOLERANCE * s[0]:
            raise RankDeficientError(f'singular value ratio {s[-1] / s[0] if s[0] else 0.0:.3g}')

        solution = vt.T @ ((u.T @ rhs) / s)
        residual = float(np.linalg.norm(design @ solution - rhs))
        return MotionSolution(omega=solution[:3], v=solution[3:], residual_norm=residual)

    @staticmethod
    def recover_scale(v, baseline):
        """(T_hat, alpha, T) from V = T / alpha and the metric baseline"""
        if baseline < BASELINE_FLOOR:
            raise ZeroBaselineError(f'b = {baseline:.3g} m')

        v = np.asarray(v, dtype=np.float64)
        norm = float(np.linalg.norm(v))
        if norm < TRANSLATION_FLOOR:
            raise DegenerateTranslationError(f'|V| = {norm:.3g}')

        t_hat = v / norm
        return t_hat, baseline / norm, baseline * t_hat

    @staticmethod
    def predict(samples, omega, v, rigid=False):
        """Predicted flow of every sample in pixels"""
        if rigid:
            rotation = Rotation.from_rotvec(omega).as_matrix()
            predicted = GeometryService.predict_rigid_flow(samples.x, samples.y, samples.d_rel, rotation, v)
        else:
            predicted = GeometryService.predict_linear_flow(samples.x, samples.y, samples.d_rel, omega, v)
        return predicted * np.asarray(samples.focal)

    @staticmethod
    def residuals(samples, omega, v, tau, rigid=False):
        """Normalized residuals e and the pixel predictions they came from"""
        predicted_px = MotionService.predict(samples, omega, v, rigid)
        residual = np.linalg.norm(predicted_px - samples.flow_px, axis=1)
        denominator = np.maximum(samples.flow_magnitude_px(), tau)
        e = np.where(np.isfinite(residual), residual / denominator, np.inf)
        return e, predicted_px

    @staticmethod
    def normalized_residual(sample, hypothesis, tau):
        single = MotionSampleSet.from_samples([sample], hypothesis.total_cells)
        e, _ = MotionService.residuals(single, hypothesis.omega, hypothesis.v, tau,
                                       rigid=hypothesis.model == 'rigid')
        return float(e[0])

    @staticmethod
    def angular_deviation(flow_px, predicted_px, tau):
        """Angle between observed and predicted flow, NaN where the gate does not apply"""
        flow_px = np.asarray(flow_px, dtype=np.float64)
        predicted_px = np.asarray(predicted_px, dtype=np.float64)
        flow_norm = np.linalg.norm(flow_px, axis=-1)
        predicted_norm = np.linalg.norm(predicted_px, axis=-1)
        eligible = (flow_norm >= 2.0 * tau) & (predicted_norm >= tau) & np.isfinite(predicted_norm)

        with np.errstate(divide='ignore', invalid='ignore'):
            cosine = np.sum(flow_px * predicted_px, axis=-1) / (flow_norm * predicted_norm)
        angle = np.arccos(np.clip(cosine, -1.0, 1.0))
        return np.where(eligible, angle, np.nan)

    @staticmethod
    def angle_threshold(angles, cfg):
        """median + k * MAD of the eligible angles, floored"""
        angles = np.asarray(angles, dtype=np.float64)
        eligible = angles[np.isfinite(angles)]
        if eligible.size == 0:
            return math.pi
        return max(robust_threshold(eligible, cfg.angle_mad_multiplier), cfg.min_angle_threshold)

    @staticmethod
    def directional_mask(angles, threshold):
        """True where the angle is below threshold or the gate does not apply"""
        angles = np.asarray(angles, dtype=np.float64)
        return ~(np.nan_to_num(angles, nan=0.0) > threshold)

    @staticmethod
    def directional_gate(sample, hypothesis, threshold, tau=1.0):
        single = MotionSampleSet.from_samples([sample], hypothesis.total_cells)
        predicted_px = MotionService.predict(single, hypothesis.omega, hypothesis.v, rigid=hypothesis.model == 'rigid')
        angle = MotionService.angular_deviation(single.flow_px, predicted_px, tau)[0]
        return bool(MotionService.directional_mask(angle, threshold))

    @staticmethod
    def huber_weights(e, eta):
        e = np.asarray(e, dtype=np.float64)
        with np.errstate(divide='ignore'):
            return np.where(e <= eta, 1.0, eta / e)

    @staticmethod
    def huber_cost(e, eta):
        e = np.asarray(e, dtype=np.float64)
        return float(np.sum(np.where(e <= eta, 0.5 * e * e, eta * (e - 0.5 * eta))))

    @staticmethod
    def score_hypothesis(samples, omega, v, baseline, eta, cfg, rigid=False, residual_norm=0.0):
        """Inlier mask, coverage and angle threshold of (omega, V) at threshold eta"""
        e, predicted_px = MotionService.residuals(samples, omega, v, cfg.tau, rigid)
        angles = MotionService.angular_deviation(samples.flow_px, predicted_px, cfg.tau)
        threshold = MotionService.angle_threshold(angles, cfg)
        mask = (e <= eta) & MotionService.directional_mask(angles, threshold)
        mask.setflags(write=False)

        return MotionHypothesis(
            omega=np.array(omega, dtype=np.float64),
            v=np.array(v, dtype=np.float64),
            baseline=float(baseline),
            inlier_mask=mask,
            covered_cells=int(np.unique(samples.cell[mask]).size),
            total_cells=samples.total_cells,
            eta=float(eta),
            angle_threshold=float(threshold),
            residual_norm=float(residual_norm),
            model='rigid' if rigid else 'linear'
        )

    @staticmethod
    def required_iterations(inlier_ratio, sample_size):
        """Iterations for RANSAC_CONFIDENCE of drawing one clean minimal sample"""
        clean = inlier_ratio ** sample_size
        if clean >= 1.0:
            return 1
        if clean <= 0.0:
            return math.inf
        return math.ceil(math.log(1.0 - RANSAC_CONFIDENCE) / math.log(1.0 - clean))

    @staticmethod
    def initial_threshold(samples, solutions, cfg):
        """eta0 = median(e) + lambda * MAD(e) of the solution with the smallest median residual"""
        best = None
        for solution in solutions:
            e, _ = MotionService.residuals(samples, solution.omega, solution.v, cfg.tau)
            finite = e[np.isfinite(e)]
            if finite.size and (best is None or lower_median(finite) < lower_median(best)):
                best = finite
        initial = robust_threshold(best, cfg.mad_multiplier) if best is not None else cfg.eta_max
        return float(np.clip(initial, cfg.eta_min, cfg.eta_max))

    @staticmethod
    def keep_best(samples, candidates, best, baseline, eta, cfg):
        """Score candidates at eta against the incumbent rescored at the same eta"""
        if best is not None and best.eta != eta:
            best = MotionService.score_hypothesis(samples, best.omega, best.v, baseline, eta, cfg,
                                                  residual_norm=best.residual_norm)
        for solution in candidates:
            candidate = MotionService.score_hypothesis(samples, solution.omega, solution.v, baseline, eta, cfg,
                                                       residual_norm=solution.residual_norm)
            if best is None or (candidate.score, candidate.inlier_count) > (best.score, best.inlier_count):
                best = candidate
        return best

    @staticmethod
    def ransac_motion(samples, baseline, cfg, seed=0):
        """Adaptive-threshold RANSAC, refined with IRLS.

        Each iteration draws from its own generator seeded by (seed, iteration).
        The first ``cfg.warmup_hypotheses`` solutions only fix eta0; the
        incumbent is rescored whenever eta adapts so hypotheses always compete
        at the same threshold.
        """
        n = len(samples)
        if n < cfg.min_sample_size:
            raise InsufficientSamplesError(f'{n} samples, need {cfg.min_sample_size}')

        system = MotionService.build_linear_system(samples, MotionService.row_weights(samples, cfg.tau))
        design = system.design.reshape(n, 2, 6)
        rhs = system.rhs.reshape(n, 2)

        best = None
        eta = None
        pending = []
        for iteration in range(cfg.max_iterations):
            rng = np.random.default_rng([seed, iteration])
            pick = rng.choice(n, size=cfg.min_sample_size, replace=False)
            try:
                solution = MotionService.solve_motion(
                    LinearSystem(design[pick].reshape(-1, 6), rhs[pick].reshape(-1)))
            except RankDeficientError:
                continue

            pending.append(solution)
            if eta is None:
                if len(pending) < cfg.warmup_hypotheses:
                    continue
                eta = MotionService.initial_threshold(samples, pending, cfg)
                logger.debug('Initial threshold eta0 = %.4f', eta)
            best = MotionService.keep_best(samples, pending, best, baseline, eta, cfg)
            pending = []

            ratio = best.inlier_ratio
            if ratio >= cfg.early_exit_ratio and \
                    iteration + 1 >= MotionService.required_iterations(ratio, cfg.min_sample_size):
                logger.debug('Early exit after %d iterations, inlier ratio %.3f', iteration + 1, ratio)
                break

            factor = cfg.relax_factor if ratio < cfg.target_inlier_ratio else cfg.tighten_factor
            eta = float(np.clip(eta * factor, cfg.eta_min, cfg.eta_max))

        if pending:
            if eta is None:
                eta = MotionService.initial_threshold(samples, pending, cfg)
            best = MotionService.keep_best(samples, pending, best, baseline, eta, cfg)

        if best is None:
            raise NoConsensusError('every minimal sample was degenerate')
        if best.inlier_ratio < cfg.min_inlier_ratio:
            raise NoConsensusError(f'best inlier ratio {best.inlier_ratio:.3f}')

        logger.debug('RANSAC best: %d/%d inliers over %d cells, eta %.4f',
                     best.inlier_count, n, best.covered_cells, best.eta)
        return MotionService.irls_refine(samples, best, cfg)

    @staticmethod
    def irls_refine(samples, hypothesis, cfg):
        """Huber IRLS on the inlier set; stops as soon as the Huber cost would rise"""
        if hypothesis.inlier_count < cfg.min_sample_size:
            raise InsufficientSamplesError(f'{hypothesis.inlier_count} inliers to refine')

        inliers = samples.subset(hypothesis.inlier_mask)
        system = MotionService.build_linear_system(inliers, MotionService.row_weights(inliers, cfg.tau))
        design = system.design.reshape(-1, 2, 6)
        rhs = system.rhs.reshape(-1, 2)

        eta = hypothesis.eta
        omega, v = hypothesis.omega, hypothesis.v
        e, _ = MotionService.residuals(inliers, omega, v, cfg.tau)
        cost = MotionService.huber_cost(e, eta)

        for _ in range(cfg.huber_iterations):
            root = np.sqrt(MotionService.huber_weights(e, eta))
            solution = MotionService.solve_motion(LinearSystem(
                (design * root[:, None, None]).reshape(-1, 6),
                (rhs * root[:, None]).reshape(-1)
            ))
            new_e, _ = MotionService.residuals(inliers, solution.omega, solution.v, cfg.tau)
            new_cost = MotionService.huber_cost(new_e, eta)
            if new_cost > cost:
                break
            omega, v, e = solution.omega, solution.v, new_e
            if cost - new_cost <= 1e-15 * max(cost, 1.0):
                cost = new_cost
                break
            cost = new_cost

        return MotionService.score_hypothesis(samples, omega, v, hypothesis.baseline, eta, cfg,
                                              residual_norm=cost)

    @staticmethod
    def polish_motion(samples, hypothesis, cfg):
        """Refine (omega, V) on the inliers against the exact rigid reprojection"""
        inliers = samples.subset(hypothesis.inlier_mask)
        if len(inliers) < cfg.min_sample_size:
            return hypothesis

        focal = np.asarray(inliers.focal)
        denominator = np.maximum(inliers.flow_magnitude_px(), cfg.tau)[:, None]

        def reprojection(params):
            rotation = Rotation.from_rotvec(params[:3]).as_matrix()
            predicted = GeometryService.predict_rigid_flow(inliers.x, inliers.y, inliers.d_rel, rotation, params[3:])
            residual = (predicted * focal - inliers.flow_px) / denominator
            return np.nan_to_num(residual.ravel(), nan=1e3)

        start = np.concatenate([hypothesis.omega, hypothesis.v])
        result = least_squares(reprojection, start, method='trf', loss='huber', f_scale=hypothesis.eta,
                               xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=200)
        if not np.all(np.isfinite(result.x)):
            logger.warning('Motion polish diverged, keeping the linear estimate')
            return hypothesis

        return MotionService.score_hypothesis(samples, result.x[:3], result.x[3:], hypothesis.baseline,
                                              hypothesis.eta, cfg, rigid=True, residual_norm=float(result.cost))

    @staticmethod
    def dense_polish(flow, d_rel, intrinsics, hypothesis, cfg, seed=0):
        """Rescore on a denser stratified draw and polish there.

        Returns the dense samples together with the polished hypothesis, whose
        inlier mask refers to them.
        """
        dense_cfg = replace(cfg, per_cell_cap=max(cfg.polish_per_cell_cap, cfg.per_cell_cap))
        dense = MotionService.stratified_sample(flow, d_rel, intrinsics, dense_cfg, seed)
        rescored = MotionService.score_hypothesis(dense, hypothesis.omega, hypothesis.v, hypothesis.baseline,
                                                  hypothesis.eta, cfg, rigid=hypothesis.model == 'rigid',
                                                  residual_norm=hypothesis.residual_norm)
        logger.debug('Polishing on %d samples, %d inliers', len(dense), rescored.inlier_count)
        return dense, MotionService.polish_motion(dense, rescored, cfg)

    @staticmethod
    def parallax_check(samples, hypothesis, cfg):
        """Median translational parallax of the inliers in pixels and whether it suffices"""
        inliers = samples.subset(hypothesis.inlier_mask)
        if len(inliers) == 0:
            return 0.0, False

        rotation = Rotation.from_rotvec(hypothesis.omega).as_matrix()
        rotational = GeometryService.predict_rigid_flow(inliers.x, inliers.y, inliers.d_rel, rotation, np.zeros(3))
        parallax = np.linalg.norm(inliers.flow_px - rotational * np.asarray(inliers.focal), axis=1)
        median = lower_median(parallax[np.isfinite(parallax)])
        return median, bool(median >= cfg.min_parallax_px)

    @staticmethod
    def fuse_flow(flow, d_rel, intrinsics, hypothesis, cfg):
        """Keep observed flow where it agrees with the motion, predict it elsewhere.

        Replaced pixels are marked ``synthetic``. Pixels without relative depth
        keep their observed flow since no prediction exists there.
        """
        x, y = GeometryService.normalized_grid(intrinsics)
        d = np.where(d_rel.mask, d_rel.values, 1.0).astype(np.float64)
        if hypothesis.model == 'rigid':
            rotation = Rotation.from_rotvec(hypothesis.omega).as_matrix()
            predicted = GeometryService.predict_rigid_flow(x, y, d, rotation, hypothesis.v)
        else:
            predicted = GeometryService.predict_linear_flow(x, y, d, hypothesis.omega, hypothesis.v)
        predicted_px = predicted * np.array([intrinsics.fx, intrinsics.fy])

        observed = flow.values.astype(np.float64)
        with np.errstate(invalid='ignore'):
            residual = np.linalg.norm(predicted_px - observed, axis=-1)
            e = residual / np.maximum(np.linalg.norm(observed, axis=-1), cfg.tau)
        angles = MotionService.angular_deviation(observed, predicted_px, cfg.tau)
        agrees = (e <= hypothesis.eta) & MotionService.directional_mask(angles, hypothesis.angle_threshold)

        keep = flow.mask & (~d_rel.mask | agrees)
        values = np.where(keep[..., None], observed, predicted_px)
        valid = keep | (d_rel.mask & np.all(np.isfinite(predicted_px), axis=-1))
        return FlowField(values, valid, synthetic=~keep)

    @staticmethod
    def estimate(flow, d_rel, intrinsics, baseline, cfg, seed=0):
        """Sample, RANSAC, polish and check one frame.

        Returns (hypothesis, error). A hypothesis may come back together with an
        error when the rotation is usable but the frame cannot be triangulated.
        """
        try:
            samples = MotionService.stratified_sample(flow, d_rel, intrinsics, cfg, seed)
            hypothesis = MotionService.ransac_motion(samples, baseline, cfg, seed)
            if cfg.polish:
                samples, hypothesis = MotionService.dense_polish(flow, d_rel, intrinsics, hypothesis, cfg, seed)
        except GeometryDegeneracyError as error:
            return None, error

        if baseline < BASELINE_FLOOR:
            return hypothesis, ZeroBaselineError(f'b = {baseline:.3g} m')
        if float(np.linalg.norm(hypothesis.v)) < TRANSLATION_FLOOR:
            return hypothesis, DegenerateTranslationError(f'|V| = {np.linalg.norm(hypothesis.v):.3g}')
        if cfg.parallax_check:
            parallax, ok = MotionService.parallax_check(samples, hypothesis, cfg)
            if not ok:
                return hypothesis, LowParallaxError(f'median parallax {parallax:.3f} px')

        return hypothesis, None
