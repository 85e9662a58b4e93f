"""Padding, stationarity and positional encodings in convolutional generators."""

from .convnet import (Activation, ConvLayer, NetworkSpec, Padding, Upsample, activate, conv2d,
                      forward, strip_padding)
from .errors import (DegenerateDesignError, DimensionError, PadlabError, ScheduleError, ShapeError,
                     StageError, UnsupportedError)
from .mspie import (ScaleDraw, ScaleSchedule, adaptive_avg_pool_2x2, prepare_scale_input,
                    sample_scale)
from .posenc import (EncodingKind, compose_noise_pe, csg, csg_translate, fixed_constant,
                     resize_encoding, spe, spe_frequencies, spe_rotate)
from .probe import LocationStats, ProbeResult, fit_probe, location_statistics, positional_info_score
from .statlab import (LinearCoeffMap, StationarityVerdict, StatReport, analytic_moments,
                      bias_shift_check, estimate_moments, linear_map, stationarity_verdict,
                      two_layer_expectation)
from .tensor import FeatureMap, GridSize, RngSpec, bilinear_resize, make_map, sample_gaussian

__version__ = "0.1.0"
