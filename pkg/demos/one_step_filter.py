"""One step of the moment-matched Gaussian filter on a scalar growth model.

The state passes through a rational drift, the measurement is quadratic.
The filter moment-matches the prediction, moment-matches the joint of
state and measurement, then conditions on an observed value. Quadrature
(Gauss-Hermite) and Monte Carlo schemes give the same numbers up to
sampling error.

Also shown: the filter's measurement approximation is *not* the Gaussian
projection of the true measurement. The filter pushes a Gaussianized
state through the measurement map, so its variance differs from the true
measurement variance by a systematic amount that no sample budget
removes.
"""

import numpy as np

from gfbounds import (
    GaussHermite,
    MonteCarlo,
    chol_sample,
    eval_value_batch,
    joint_approx,
    lift_transform,
    lifted_input,
    predict,
    update,
)
from gfbounds.experiment import builtin_model

model = builtin_model("ungm-f2").build_model()
observed = [0.8]

for scheme in (GaussHermite(15), MonteCarlo(1_000_000, seed=1)):
    x_tilde = predict(model, scheme)
    joint = joint_approx(model, x_tilde, scheme)
    posterior = update(joint, observed)
    label = type(scheme).__name__
    print(f"{label}:")
    print(f"  prediction    : mean {x_tilde.mean[0]: .6f}, var {x_tilde.cov.mat[0, 0]:.6f}")
    print(f"  measurement   : mean {joint.mean_y[0]: .6f}, var {joint.p_y.mat[0, 0]:.6f}")
    print(f"  cross-cov     : {joint.c_xy[0, 0]: .6f}")
    print(f"  posterior     : mean {posterior.mean[0]: .6f}, var {posterior.cov.mat[0, 0]:.6f}")
    print()

# the filter's measurement law vs the true measurement law
scheme = MonteCarlo(1_000_000, seed=1)
joint = joint_approx(model, predict(model, scheme), scheme)
w = chol_sample(lifted_input(model), 1_000_000, seed=3)
true_y = eval_value_batch(lift_transform(model), w)[:, 1]
print("filter measurement variance  :", round(joint.p_y.mat[0, 0], 6))
print("true measurement variance    :", round(true_y.var(ddof=1), 6))
print("difference is systematic (the moment-matched state is Gaussian, the true state is not)")
