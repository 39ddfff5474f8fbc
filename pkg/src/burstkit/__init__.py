"""Burst detection, segmentation and ranking for binomial count streams."""

from ._kernels import KERNEL_BACKEND
from .bursts import (BurstRecord, RankPolicy, baseline, burst_strength,
                     extract_bursts, rank_bursts, stream_bursts)
from .errors import (AdmmError, BurstkitError, DegenerateSeriesError,
                     EmptySeriesError, NotSpdError, NullConstructionError,
                     ParseError, SolverDivergedError, ValidationError,
                     WindowError)
from .jumps import (JumpRecord, SplitPair, jump_lrt, jump_null_distribution,
                    jump_pvalues, prune_and_refit, quiet_stretches,
                    restricted_mle_fit, split_sample)
from .likelihood import (THETA_CLAMP, CurvatureBounds, expit, lipschitz_bound,
                         logit_clamped, mu_min_at, nll, nll_grad)
from .model_selection import (CvResult, assign_folds, cross_validate,
                              cv_heldout_loss, default_lambda_grid)
from .prox import (AdmmConfig, AdmmProx, BandedMatrix, DifferenceOperator,
                   PenaltySpec, build_difference_operator, penalty_for_series,
                   penalty_value, prox_fused_l0, prox_fused_l1,
                   prox_weighted_admm, soft_threshold, solve_banded_spd)
from .scan import (ScanTestResult, ScreenResult, batch_screen,
                   neighborhood_average, permutation_pvalue, scan_statistic)
from .segmentation import (JumpLocation, SegmentedFit, SolverConfig,
                           convergence_report, extract_jumps, fit_segmentation,
                           fit_series, fit_trend_filter, objective)
from .streams import (ObservationPoint, PreprocessConfig, StreamSeries,
                      filter_low_traffic, global_proportion, parse_streams,
                      read_streams_csv, write_streams_csv)
from .synth import (PiecewiseSpec, SegmentSpec, gen_null_stream, gen_stream,
                    jumps_plus_ramp_spec, parse_spec_file, write_spec_file)

__version__ = "0.1.0"
