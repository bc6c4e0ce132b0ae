import logging

import numpy as np

from models.raster import ScalarMap
from models.scale_state import ScaleState
from utils.constants import TOLERANCE_FLOOR
from utils.robust_stats import lower_median, mad

logger = logging.getLogger(__name__)


class FusionService:
    """Per-pixel recursive Bayesian filter on the scale field S = Z / d_rel"""

    @staticmethod
    def inflate_prior(v_prior, rho_median, intrinsics):
        """V <- V (1 + rho_median / (fx fy)), uniform over the frame"""
        return np.asarray(v_prior, dtype=np.float64) * (1.0 + rho_median / intrinsics.focal_product)

    @staticmethod
    def observation_variance(rho, intrinsics, sigma2, floor):
        """V_obs = sigma^2 rho / (fx fy), floored"""
        v_obs = sigma2 * np.asarray(rho, dtype=np.float64) / intrinsics.focal_product
        return np.maximum(v_obs, floor)

    @staticmethod
    def innovation(s_obs, s_prior, v_obs, v_prior):
        return (np.asarray(s_obs) - s_prior) ** 2 / (np.asarray(v_prior) + v_obs)

    @staticmethod
    def innovation_gate(s_obs, s_prior, v_obs, v_prior, chi2_gate):
        """True where the innovation passes the chi-square gate"""
        return FusionService.innovation(s_obs, s_prior, v_obs, v_prior) <= chi2_gate

    @staticmethod
    def relative_discrepancy(s_obs, s_prior):
        s_obs = np.asarray(s_obs, dtype=np.float64)
        return np.abs(s_obs - s_prior) / s_obs

    @staticmethod
    def consistency_score(s_obs, s_prior, sigma_e):
        delta = FusionService.relative_discrepancy(s_obs, s_prior)
        return np.exp(-delta ** 2 / (2.0 * sigma_e ** 2))

    @staticmethod
    def pixel_tolerance(sigma_e, s_obs, v_prior, v_obs):
        """Frame tolerance, raised where the modeled relative spread sqrt(V_prior + V_obs) / S_obs is wider"""
        with np.errstate(divide='ignore', invalid='ignore'):
            spread = np.sqrt(np.asarray(v_prior, dtype=np.float64) + v_obs) / np.asarray(s_obs, dtype=np.float64)
        return np.maximum(sigma_e, np.nan_to_num(spread, nan=0.0, posinf=0.0))

    @staticmethod
    def update_tolerance(delta, sigma_prev, ema):
        """EMA of MAD(delta); an empty frame keeps the previous tolerance"""
        delta = np.asarray(delta, dtype=np.float64).ravel()
        delta = delta[np.isfinite(delta)]
        if delta.size == 0:
            return sigma_prev
        spread = mad(delta)
        if sigma_prev is None:
            return max(spread, TOLERANCE_FLOOR)
        return max(ema * sigma_prev + (1.0 - ema) * spread, TOLERANCE_FLOOR)

    @staticmethod
    def kalman_update(s_prior, v_prior, s_obs, v_obs, c, kappa_min):
        """Consistency-capped gain with the Joseph variance update.

        kappa = min(kappa_raw, kappa_min + (1 - kappa_min) c).
        Returns (S_post, V_post, kappa).
        """
        s_prior = np.asarray(s_prior, dtype=np.float64)
        v_prior = np.asarray(v_prior, dtype=np.float64)
        kappa_raw = v_prior / (v_prior + v_obs)
        kappa = np.minimum(kappa_raw, kappa_min + (1.0 - kappa_min) * np.asarray(c, dtype=np.float64))

        s_post = s_prior + kappa * (np.asarray(s_obs) - s_prior)
        v_post = (1.0 - kappa) ** 2 * v_prior + kappa ** 2 * v_obs
        return s_post, v_post, kappa

    @staticmethod
    def bootstrap_prior(s_obs, v_obs, mask, cfg):
        """Flat first-frame prior: median observed scale, inflated median variance"""
        s_init = lower_median(s_obs[mask])
        v_init = cfg.init_variance_factor * lower_median(v_obs[mask])
        s_prior = np.where(mask, s_init, np.nan)
        v_prior = np.where(mask, v_init, np.nan)
        return s_prior, v_prior

    @staticmethod
    def fuse_frame(state, prior, observation, d_rel, intrinsics, cfg, frame_index=None):
        """One filter step, before segment consolidation.

        ``prior`` is a WarpedPrior or None, ``observation`` a
        (TriangulatedDepth, SampsonMap) pair or None. Pixels with only a prior
        keep it with inflated variance; pixels with only an observation take
        (S_obs, max(V_obs, fill variance)); pixels with neither are invalid.
        """
        shape = d_rel.shape
        frame_index = state.frame_index + 1 if frame_index is None else frame_index
        d = d_rel.values.astype(np.float64)

        if observation is not None:
            depth, sampson = observation
            obs_mask = depth.mask & sampson.mask & d_rel.mask
            with np.errstate(divide='ignore', invalid='ignore'):
                s_obs = np.where(obs_mask, depth.values / np.where(d_rel.mask, d, 1.0), np.nan)
            v_obs = FusionService.observation_variance(
                np.where(obs_mask, sampson.values, 0.0), intrinsics, cfg.sigma2, cfg.obs_variance_floor)
            rho_median = sampson.median
        else:
            obs_mask = np.zeros(shape, dtype=bool)
            s_obs = np.full(shape, np.nan)
            v_obs = np.full(shape, np.nan)
            rho_median = state.rho_median

        if prior is not None and prior.covered_count > 0:
            prior_mask = prior.coverage & d_rel.mask
            s_prior = prior.s_prior.values.astype(np.float64)
            v_prior = FusionService.inflate_prior(prior.v_prior.values, rho_median, intrinsics)
            fill_variance = prior.fill_variance
        elif not state.initialized and obs_mask.any():
            prior_mask = obs_mask.copy()
            s_prior, v_prior = FusionService.bootstrap_prior(s_obs, v_obs, obs_mask, cfg)
            fill_variance = 0.0
        else:
            prior_mask = np.zeros(shape, dtype=bool)
            s_prior = np.full(shape, np.nan)
            v_prior = np.full(shape, np.nan)
            fill_variance = 0.0

        both = obs_mask & prior_mask
        prior_only = prior_mask & ~obs_mask
        obs_only = obs_mask & ~prior_mask

        s_post = np.full(shape, np.nan)
        v_post = np.full(shape, np.nan)
        s_post[prior_only] = s_prior[prior_only]
        v_post[prior_only] = v_prior[prior_only]
        s_post[obs_only] = s_obs[obs_only]
        v_post[obs_only] = np.maximum(v_obs[obs_only], fill_variance)

        sigma_e = state.sigma_e
        rejection_rate = 0.0
        if both.any():
            sp, vp, so, vo = s_prior[both], v_prior[both], s_obs[both], v_obs[both]
            if cfg.enabled:
                sigma_e = FusionService.update_tolerance(
                    FusionService.relative_discrepancy(so, sp), state.sigma_e, cfg.ema)
                inlier = FusionService.innovation_gate(so, sp, vo, vp, cfg.chi2_gate)
                tolerance = FusionService.pixel_tolerance(sigma_e, so, vp, vo)
                c = FusionService.consistency_score(so, sp, tolerance)
                s_k, v_k, _ = FusionService.kalman_update(sp, vp, so, vo, c, cfg.kappa_min)

                observation_wins = vo < vp
                s_post[both] = np.where(inlier, s_k, np.where(observation_wins, so, sp))
                v_post[both] = np.where(inlier, v_k, np.where(observation_wins, vo, vp))
                rejection_rate = float(np.count_nonzero(~inlier)) / inlier.size
            else:
                s_post[both] = so
                v_post[both] = vo

        valid = prior_mask | obs_mask
        logger.debug('Fused frame %d: %d both, %d prior only, %d observation only, gate rejects %.3f',
                     frame_index, int(both.sum()), int(prior_only.sum()), int(obs_only.sum()), rejection_rate)
        return ScaleState(
            s=ScalarMap(s_post.astype(np.float32), valid),
            v=ScalarMap(v_post.astype(np.float32), valid),
            sigma_e=sigma_e if sigma_e is not None else (TOLERANCE_FLOOR if valid.any() else None),
            frame_index=frame_index,
            global_scale=state.global_scale,
            rho_median=rho_median,
            gate_rejection_rate=rejection_rate
        )
