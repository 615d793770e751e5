"""Constraint-aware streaming flow: metric-shaped imitation policies.

Learned streaming-flow policies whose velocity fields are reshaped at
inference time by distance-induced Riemannian metrics, with kinematic
pullback for whole-robot constraint enforcement, plus hard-projection and
CBF baselines and a desk-scale 2D benchmark harness.
"""

from .errors import (DegenerateMetricError, DemoParseError, FilterFailureError,
                     IntegrationDivergenceError, InvalidInputError,
                     ProjectionFailureError, RenderError,
                     TrainingDivergenceError, UnsupportedMetricError)
from .geometry import (AxisBox, Circle, DistanceSample, Halfspace,
                       SegmentCapsule, Shape, Union, eval_sdf,
                       min_distance_over, shape_from_dict)
from .metric import (ConstraintSpec, build_metric, influence_weight,
                     kappa_for_radius, shape_velocity, shaped_field)
from .policy import (Demonstration, PolicyConfig, Rollout, StreamingPolicy,
                     conditional_target, integrate_stream, interpolate_demo,
                     sample_tube, train_policy, tube_std)
from .sdf_learn import LearnedField, SdfTrainConfig, train_sdf
from .kinematics import (ArmModel, BodyPoint, fk_point, fuse_metrics, jacobian,
                         pullback_metric, sample_body_points,
                         shaped_joint_field)
from .baselines import CbfConfig, ProjectionConfig, cbf_filter, filtered_field, hard_project
from .evaluation import (MetricReport, discrete_frechet, integral_violation,
                         masked_frechet, max_penetration, path_length)
from .tasks import TASK_FAMILIES, TaskSpec, generate_task, ingest_demo_csv
from .bench import (METHODS, RunConfig, ShapingParams, emit_report,
                    run_bench, run_experiment)

__version__ = "0.1.0"
