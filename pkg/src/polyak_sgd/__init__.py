"""SGD with Polyak's learning rate.

Step-size policies (fixed, epoch decay, optimal schedule, deterministic and
stochastic Polyak), the gradient iteration, rate constants with their
non-asymptotic bounds, and a multi-seed experiment harness.
"""

from .objective import (Centroid, Logistic, MiniBatchOracle, Problem, Quadratic, batch_gradient,
                        full_gradient, full_value, gaussian_cloud, minibatch_gradient,
                        noise_second_moment, random_logistic, random_quadratic)
from .optimizer import RunConfig, Trajectory, run, step
from .stepsize import (Caps, Converged, FStarOverestimate, StepPolicy, compute_h, estimated_polyak,
                       plr, slr, splr)
from .theory import (UNBOUNDED, agd_bound, alpha_polyak, alpha_scheduled, comparison_threshold,
                     lemma_c, sgd_bound, t_transform, verify_convex_toolbox)

__version__ = "0.1.0"
