"""Preference-guided score distillation over analytic diffusion oracles."""

from .engine import (IterationTrace, PairSample, RunConfig, Runner, construct_pair,
                     dreamdpo_gradient, predict_pair, run, sds_gradient)
from .errors import (AnnotationError, ConfigError, LabelError, ParameterError, ParseError,
                     PrefDistillError, ShapeError, ViewError)
from .ranker import (LMM, Constant, Linear, MixtureLikelihood, PairwiseVerdict, Proximity,
                     compare, lmm_annotate, lmm_format_query, lmm_parse_response, reward)
from .representation import (DirectVector, Grid, SplatField2D, ViewSpec, pullback,
                             random_splat_field, render)
from .schedule import NoiseSchedule, WeightKind, forward_diffuse, make_linear_schedule, weight
from .score_oracle import (CfgSpec, Component, GaussianMixture, cfg_epsilon,
                           diffused_density_params, epsilon_pred, predict_x0)

__all__ = [
    'AnnotationError', 'CfgSpec', 'Component', 'ConfigError', 'Constant', 'DirectVector',
    'GaussianMixture', 'Grid', 'IterationTrace', 'LMM', 'LabelError', 'Linear',
    'MixtureLikelihood', 'NoiseSchedule', 'PairSample', 'PairwiseVerdict', 'ParameterError',
    'ParseError', 'PrefDistillError', 'Proximity', 'RunConfig', 'Runner', 'ShapeError',
    'SplatField2D', 'ViewError', 'ViewSpec', 'WeightKind', 'cfg_epsilon', 'compare',
    'construct_pair', 'diffused_density_params', 'dreamdpo_gradient', 'epsilon_pred',
    'forward_diffuse', 'lmm_annotate', 'lmm_format_query', 'lmm_parse_response',
    'make_linear_schedule', 'predict_pair', 'predict_x0', 'pullback', 'random_splat_field',
    'render', 'reward', 'run', 'sds_gradient', 'weight',
]

__version__ = "0.1.0"
